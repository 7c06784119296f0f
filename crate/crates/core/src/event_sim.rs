//! Synthetic two-merging-unit waveform generator with scripted fault and
//! cyber-attack injections.
//!
//! Each merging unit (MU32, MU23) reports three phase voltages and three
//! phase currents. Steady states are described by fundamental phasors plus
//! current harmonics; a physical fault swaps in a different phasor state
//! with one-cycle exponential onset and recovery ramps. Cyber attacks act on
//! the measured samples instead: ratio attacks rescale a channel group and
//! GPS spoofing slides one unit's time reference.
//!
//! Channel order: MU32 VA VB VC IA IB IC, MU23 VA VB VC IA IB IC, MU32_IN,
//! MU23_IN. The neutral channels are `-(IA + IB + IC)` of the final samples.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comtrade::{attach_labels, ChannelSpec, SamplingSpec, WaveformRecord};
use crate::schedule::{EventSchedule, ScheduleError};

pub const CHANNEL_COUNT: usize = 14;
pub const MU_COUNT: usize = 2;
pub const MU_NAMES: [&str; MU_COUNT] = ["MU32", "MU23"];

/// Column of the first channel of merging unit `mu` (voltages, then currents).
pub const fn mu_base_column(mu: usize) -> usize {
    mu * 6
}

/// Column of the neutral (residual) current of merging unit `mu`.
pub const fn neutral_column(mu: usize) -> usize {
    12 + mu
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid grid configuration: {0}")]
    Config(String),
    #[error("invalid attack parameters: {0}")]
    Attack(String),
    #[error("unknown event class {0}")]
    UnknownClass(u32),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Steady operating point of one merging unit, relative to nominal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub voltage_pu: f64,
    pub voltage_angle_deg: f64,
    pub current_pu: f64,
    /// Current angle relative to the unit's voltage (negative = lagging).
    pub current_angle_deg: f64,
}

/// Fault signature levels (per unit of nominal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultLevels {
    pub slg_voltage: f64,
    pub slg_current: f64,
    pub slg_harmonics: Vec<(u32, f64)>,
    pub ll_voltage: f64,
    pub ll_current: f64,
    pub ground_current: f64,
    pub three_phase_voltage: f64,
    pub three_phase_current: f64,
    /// Lag of fault current behind its driving voltage.
    pub fault_angle_deg: f64,
}

impl Default for FaultLevels {
    fn default() -> Self {
        Self {
            slg_voltage: 0.3,
            slg_current: 1.4,
            slg_harmonics: vec![(5, 0.08), (7, 0.05)],
            ll_voltage: 0.5,
            ll_current: 1.3,
            ground_current: 0.5,
            three_phase_voltage: 0.4,
            three_phase_current: 1.4,
            fault_angle_deg: 75.0,
        }
    }
}

/// Capacitor-bank and converter energization transient at the start of a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energization {
    /// Transient is forced to zero at this time (s).
    pub duration: f64,
    pub ring_frequency: f64,
    pub ring_time_constant: f64,
    pub voltage_ring_pu: f64,
    pub current_ring_pu: f64,
    pub inrush_dc_pu: f64,
    pub inrush_time_constant: f64,
}

impl Default for Energization {
    fn default() -> Self {
        Self {
            duration: 0.15,
            ring_frequency: 390.0,
            ring_time_constant: 0.02,
            voltage_ring_pu: 0.25,
            current_ring_pu: 0.8,
            inrush_dc_pu: 0.6,
            inrush_time_constant: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub line_frequency: f64,
    pub sample_rate: f64,
    /// Peak phase voltage at 1 pu (V).
    pub nominal_voltage: f64,
    /// Peak phase current at 1 pu (A).
    pub nominal_current: f64,
    /// Gaussian noise standard deviation relative to nominal.
    pub noise_sigma: f64,
    /// `(order, amplitude relative to the fundamental)` on every current channel.
    pub harmonic_profile: Vec<(u32, f64)>,
    pub operating_points: [OperatingPoint; MU_COUNT],
    pub fault_levels: FaultLevels,
    pub energization: Option<Energization>,
    /// Draw the phase angle at t = 0 from the seed; otherwise it is zero.
    pub random_point_on_wave: bool,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            line_frequency: 60.0,
            sample_rate: 4800.0,
            // 13.8 kV line-to-line
            nominal_voltage: 13_800.0 / 3f64.sqrt() * 2f64.sqrt(),
            nominal_current: 100.0,
            noise_sigma: 0.01,
            harmonic_profile: vec![(5, 0.02), (7, 0.01)],
            operating_points: [
                OperatingPoint {
                    voltage_pu: 1.0,
                    voltage_angle_deg: 0.0,
                    current_pu: 1.0,
                    current_angle_deg: -25.0,
                },
                OperatingPoint {
                    voltage_pu: 0.98,
                    voltage_angle_deg: -4.0,
                    current_pu: 0.8,
                    current_angle_deg: -30.0,
                },
            ],
            fault_levels: FaultLevels::default(),
            energization: Some(Energization::default()),
            random_point_on_wave: true,
            seed: 0,
        }
    }
}

impl GridConfig {
    /// Quiet configuration: no noise, no harmonics, no energization transient.
    pub fn clean() -> Self {
        Self {
            noise_sigma: 0.0,
            harmonic_profile: Vec::new(),
            energization: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.line_frequency) || !positive(self.sample_rate) {
            return Err(SimError::Config(
                "line frequency and sample rate must be positive".into(),
            ));
        }
        if self.sample_rate < 2.0 * self.line_frequency {
            return Err(SimError::Config(
                "sample rate must exceed twice the line frequency".into(),
            ));
        }
        if !positive(self.nominal_voltage) || !positive(self.nominal_current) {
            return Err(SimError::Config(
                "nominal voltage and current must be positive".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SimError::Config("noise_sigma must be >= 0".into()));
        }
        let bad_harmonic =
            |&(order, amp): &(u32, f64)| order < 2 || !(amp.is_finite() && amp >= 0.0);
        if self.harmonic_profile.iter().any(bad_harmonic)
            || self.fault_levels.slg_harmonics.iter().any(bad_harmonic)
        {
            return Err(SimError::Config(
                "harmonics need order >= 2 and amplitude >= 0".into(),
            ));
        }
        if let Some(e) = &self.energization {
            if !positive(e.duration)
                || !positive(e.ring_time_constant)
                || !positive(e.inrush_time_constant)
            {
                return Err(SimError::Config(
                    "energization times must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn samples_per_cycle(&self) -> f64 {
        self.sample_rate / self.line_frequency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub ct_ratio_factor: f64,
    pub pt_ratio_factor: f64,
    /// Time-reference shift of a spoofed unit (s).
    pub gps_shift: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            ct_ratio_factor: 0.5,
            pt_ratio_factor: 0.5,
            // 10 samples at 4.8 kHz, 45 degrees at 60 Hz
            gps_shift: 10.0 / 4800.0,
        }
    }
}

impl AttackParams {
    pub fn validate(&self, line_frequency: f64) -> Result<(), SimError> {
        for (name, f) in [
            ("ct_ratio_factor", self.ct_ratio_factor),
            ("pt_ratio_factor", self.pt_ratio_factor),
        ] {
            if !(f.is_finite() && f > 0.0 && f != 1.0) {
                return Err(SimError::Attack(format!(
                    "{name} must be > 0 and != 1, got {f}"
                )));
            }
        }
        if !(self.gps_shift > 0.0 && self.gps_shift < 1.0 / line_frequency) {
            return Err(SimError::Attack(format!(
                "gps_shift must lie in (0, one cycle), got {}",
                self.gps_shift
            )));
        }
        Ok(())
    }
}

/// Complex phasor (peak amplitude, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phasor {
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    pub fn polar(amplitude: f64, angle: f64) -> Self {
        Self {
            re: amplitude * angle.cos(),
            im: amplitude * angle.sin(),
        }
    }

    pub fn amplitude(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn angle(self) -> f64 {
        self.im.atan2(self.re)
    }

    fn add(self, o: Phasor) -> Phasor {
        Phasor {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }

    fn sub(self, o: Phasor) -> Phasor {
        Phasor {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }

    fn neg(self) -> Phasor {
        Phasor {
            re: -self.re,
            im: -self.im,
        }
    }
}

/// Steady-state phasors of one merging unit, in per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MuState {
    pub voltages: [Phasor; 3],
    pub currents: [Phasor; 3],
    /// Extra `(order, relative amplitude)` per phase current, on top of the
    /// grid-wide harmonic profile.
    pub extra_harmonics: [Vec<(u32, f64)>; 3],
}

impl MuState {
    fn balanced(op: &OperatingPoint, theta0: f64) -> Self {
        let shift = |p: usize| -(p as f64) * 2.0 * PI / 3.0;
        let va = op.voltage_angle_deg.to_radians() + theta0;
        let ia = va + op.current_angle_deg.to_radians();
        Self {
            voltages: std::array::from_fn(|p| Phasor::polar(op.voltage_pu, va + shift(p))),
            currents: std::array::from_fn(|p| Phasor::polar(op.current_pu, ia + shift(p))),
            extra_harmonics: Default::default(),
        }
    }
}

/// What an anomaly class does to the measurements.
#[derive(Debug, Clone, PartialEq)]
pub enum EventEffect {
    /// Physical fault: both units move to new steady states.
    Fault([MuState; MU_COUNT]),
    /// Current channels of `mu` scaled by `factor`.
    CtRatio { mu: usize, factor: f64 },
    /// Voltage channels of `mu` scaled by `factor`.
    PtRatio { mu: usize, factor: f64 },
    /// All six channels of `mu` delayed by `seconds`.
    TimeShift { mu: usize, seconds: f64 },
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

/// Maps an anomaly class onto its measurement effect.
pub fn apply_event(
    base: &[MuState; MU_COUNT],
    class_id: u32,
    levels: &FaultLevels,
    attacks: &AttackParams,
) -> Result<EventEffect, SimError> {
    let fault = |f: &dyn Fn(&MuState) -> MuState| EventEffect::Fault([f(&base[0]), f(&base[1])]);
    let effect = match class_id {
        1 => fault(&|s| slg(s, A, levels)),
        2 => fault(&|s| slg(s, B, levels)),
        3 => fault(&|s| slg(s, C, levels)),
        4 => EventEffect::CtRatio {
            mu: 0,
            factor: attacks.ct_ratio_factor,
        },
        5 => fault(&|s| line_to_line(s, A, B, levels, false)),
        6 => fault(&|s| line_to_line(s, A, C, levels, false)),
        7 => fault(&|s| line_to_line(s, B, C, levels, false)),
        8 => EventEffect::CtRatio {
            mu: 1,
            factor: attacks.ct_ratio_factor,
        },
        9 => fault(&|s| line_to_line(s, A, B, levels, true)),
        10 => fault(&|s| line_to_line(s, A, C, levels, true)),
        11 => fault(&|s| line_to_line(s, B, C, levels, true)),
        12 => EventEffect::PtRatio {
            mu: 0,
            factor: attacks.pt_ratio_factor,
        },
        13 => EventEffect::PtRatio {
            mu: 1,
            factor: attacks.pt_ratio_factor,
        },
        14 => fault(&|s| three_phase(s, levels, false)),
        15 => fault(&|s| three_phase(s, levels, true)),
        16 => EventEffect::TimeShift {
            mu: 0,
            seconds: attacks.gps_shift,
        },
        17 => EventEffect::TimeShift {
            mu: 1,
            seconds: attacks.gps_shift,
        },
        other => return Err(SimError::UnknownClass(other)),
    };
    Ok(effect)
}

fn fault_current(driving: Phasor, magnitude: f64, levels: &FaultLevels) -> Phasor {
    Phasor::polar(
        magnitude,
        driving.angle() - levels.fault_angle_deg.to_radians(),
    )
}

fn slg(pre: &MuState, x: usize, levels: &FaultLevels) -> MuState {
    let mut s = pre.clone();
    s.voltages[x] = Phasor::polar(levels.slg_voltage, pre.voltages[x].angle());
    s.currents[x] = fault_current(pre.voltages[x], levels.slg_current, levels);
    s.extra_harmonics[x] = levels.slg_harmonics.clone();
    s
}

fn line_to_line(
    pre: &MuState,
    x: usize,
    y: usize,
    levels: &FaultLevels,
    grounded: bool,
) -> MuState {
    let mut s = pre.clone();
    for p in [x, y] {
        s.voltages[p] = Phasor::polar(levels.ll_voltage, pre.voltages[p].angle());
    }
    let driving = pre.voltages[x].sub(pre.voltages[y]);
    let ix = fault_current(driving, levels.ll_current, levels);
    s.currents[x] = ix;
    s.currents[y] = ix.neg();
    if grounded {
        let zero = fault_current(
            pre.voltages[x].add(pre.voltages[y]),
            0.5 * levels.ground_current,
            levels,
        );
        s.currents[x] = s.currents[x].add(zero);
        s.currents[y] = s.currents[y].add(zero);
    }
    s
}

fn three_phase(pre: &MuState, levels: &FaultLevels, grounded: bool) -> MuState {
    let mut s = pre.clone();
    for p in 0..3 {
        s.voltages[p] = Phasor::polar(levels.three_phase_voltage, pre.voltages[p].angle());
        s.currents[p] = fault_current(pre.voltages[p], levels.three_phase_current, levels);
    }
    if grounded {
        let zero = fault_current(pre.voltages[A], levels.ground_current / 3.0, levels);
        for p in 0..3 {
            s.currents[p] = s.currents[p].add(zero);
        }
    }
    s
}

/// Normalized one-cycle exponential ramp: 0 at x = 0, 1 at x >= 1.
fn ramp(x: f64) -> f64 {
    const K: f64 = 5.0;
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        (1.0 - (-K * x).exp()) / (1.0 - (-K).exp())
    }
}

/// Event strength in [0, 1] at time `t` for an event on `[start, end]`.
fn event_strength(t: f64, start: f64, end: f64, cycle: f64) -> f64 {
    if t < start {
        0.0
    } else if t <= end {
        ramp((t - start) / cycle)
    } else {
        ramp((end - start) / cycle) * (1.0 - ramp((t - end) / cycle))
    }
}

struct ActiveEvent {
    start: f64,
    end: f64,
    effect: EventEffect,
}

/// Deterministic waveform generator for one configuration.
pub struct Synthesizer {
    config: GridConfig,
    attacks: AttackParams,
    theta0: f64,
    base: [MuState; MU_COUNT],
}

impl Synthesizer {
    pub fn new(config: GridConfig, attacks: AttackParams) -> Result<Self, SimError> {
        config.validate()?;
        attacks.validate(config.line_frequency)?;
        let theta0 = if config.random_point_on_wave {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_ba5e);
            rng.random_range(0.0..2.0 * PI)
        } else {
            0.0
        };
        let base = std::array::from_fn(|m| MuState::balanced(&config.operating_points[m], theta0));
        Ok(Self {
            config,
            attacks,
            theta0,
            base,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Phase angle of the fundamental at t = 0.
    pub fn point_on_wave(&self) -> f64 {
        self.theta0
    }

    pub fn base_states(&self) -> &[MuState; MU_COUNT] {
        &self.base
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.config.line_frequency
    }

    /// Instantaneous six-channel values of a steady state at time `t`.
    fn eval_state(&self, state: &MuState, t: f64, out: &mut [f64; 6]) {
        let wt = self.omega() * t;
        let vn = self.config.nominal_voltage;
        let inom = self.config.nominal_current;
        for p in 0..3 {
            let v = state.voltages[p];
            out[p] = vn * v.amplitude() * (wt + v.angle()).cos();
            let i = state.currents[p];
            let (amp, ang) = (i.amplitude(), i.angle());
            let mut value = amp * (wt + ang).cos();
            for &(h, rel) in self
                .config
                .harmonic_profile
                .iter()
                .chain(&state.extra_harmonics[p])
            {
                value += rel * amp * (h as f64 * (wt + ang)).cos();
            }
            out[3 + p] = inom * value;
        }
    }

    /// Normal-operation sample at time `t` (no noise, events or energization).
    pub fn normal_sample(&self, t: f64) -> [f64; CHANNEL_COUNT] {
        let mut out = [0.0; CHANNEL_COUNT];
        let mut mu = [0.0; 6];
        for m in 0..MU_COUNT {
            self.eval_state(&self.base[m], t, &mut mu);
            out[mu_base_column(m)..mu_base_column(m) + 6].copy_from_slice(&mu);
        }
        fill_neutrals(&mut out);
        out
    }

    fn energization(&self, t: f64, p: usize) -> (f64, f64) {
        let Some(e) = &self.config.energization else {
            return (0.0, 0.0);
        };
        if t >= e.duration {
            return (0.0, 0.0);
        }
        // envelopes pinned to zero at the end of the window
        let env = |tau: f64| {
            ((-t / tau).exp() - (-e.duration / tau).exp()) / (1.0 - (-e.duration / tau).exp())
        };
        let phase = self.theta0 - p as f64 * 2.0 * PI / 3.0;
        let wr = 2.0 * PI * e.ring_frequency * t;
        let ring = env(e.ring_time_constant);
        let v = e.voltage_ring_pu * phase.cos() * ring * wr.cos();
        let i = e.current_ring_pu * phase.cos() * ring * wr.sin()
            + e.inrush_dc_pu * phase.sin() * env(e.inrush_time_constant);
        (
            v * self.config.nominal_voltage,
            i * self.config.nominal_current,
        )
    }

    /// Generates the record and its per-sample labels.
    pub fn synthesize(
        &self,
        schedule: &EventSchedule,
    ) -> Result<(WaveformRecord, Vec<u32>), SimError> {
        let cfg = &self.config;
        let n = (schedule.duration() * cfg.sample_rate).round() as usize;
        if n == 0 {
            return Err(SimError::Config("schedule shorter than one sample".into()));
        }
        let cycle = 1.0 / cfg.line_frequency;
        let events: Vec<ActiveEvent> = schedule
            .events()
            .iter()
            .map(|ev| {
                Ok(ActiveEvent {
                    start: ev.start,
                    end: ev.end,
                    effect: apply_event(&self.base, ev.class_id, &cfg.fault_levels, &self.attacks)?,
                })
            })
            .collect::<Result<_, SimError>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let sigma = [
            cfg.noise_sigma * cfg.nominal_voltage,
            cfg.noise_sigma * cfg.nominal_current,
        ];
        let mut data = Array2::<f64>::zeros((n, CHANNEL_COUNT));
        let mut first_active = 0usize;
        let mut mu_vals = [0.0; 6];
        let mut event_vals = [0.0; 6];

        for (i, mut row) in data.outer_iter_mut().enumerate() {
            let t = i as f64 / cfg.sample_rate;
            while first_active < events.len() && events[first_active].end + cycle < t {
                first_active += 1;
            }
            let active: Vec<(&ActiveEvent, f64)> = events[first_active..]
                .iter()
                .take_while(|ev| ev.start <= t)
                .map(|ev| (ev, event_strength(t, ev.start, ev.end, cycle)))
                .filter(|(_, s)| *s > 0.0)
                .collect();

            let mut sample = [0.0; CHANNEL_COUNT];
            for m in 0..MU_COUNT {
                let shift: f64 = active
                    .iter()
                    .filter_map(|(ev, s)| match ev.effect {
                        EventEffect::TimeShift { mu, seconds } if mu == m => Some(s * seconds),
                        _ => None,
                    })
                    .sum();
                self.eval_state(&self.base[m], t - shift, &mut mu_vals);
                for (ev, s) in &active {
                    if let EventEffect::Fault(states) = &ev.effect {
                        self.eval_state(&states[m], t, &mut event_vals);
                        for (v, e) in mu_vals.iter_mut().zip(event_vals) {
                            *v = (1.0 - s) * *v + s * e;
                        }
                    }
                }
                for p in 0..3 {
                    let (ev, ei) = self.energization(t, p);
                    mu_vals[p] += ev;
                    mu_vals[3 + p] += ei;
                }
                let col = mu_base_column(m);
                sample[col..col + 6].copy_from_slice(&mu_vals);
            }

            for m in 0..MU_COUNT {
                let col = mu_base_column(m);
                for k in 0..6 {
                    let z: f64 = rng.sample(StandardNormal);
                    sample[col + k] += sigma[k / 3] * z;
                }
            }

            for (ev, s) in &active {
                let (mu, range, factor) = match ev.effect {
                    EventEffect::CtRatio { mu, factor } => (mu, 3..6, factor),
                    EventEffect::PtRatio { mu, factor } => (mu, 0..3, factor),
                    _ => continue,
                };
                let gain = 1.0 + s * (factor - 1.0);
                let col = mu_base_column(mu);
                for k in range {
                    sample[col + k] *= gain;
                }
            }

            fill_neutrals(&mut sample);
            row.iter_mut().zip(sample).for_each(|(o, v)| *o = v);
        }

        let record = WaveformRecord {
            station: "GRIDSENTRY".into(),
            device: "SURROGATE".into(),
            revision: 1999,
            channels: channel_specs(),
            sampling: SamplingSpec {
                line_frequency: cfg.line_frequency,
                sample_rate: cfg.sample_rate,
                total_samples: n,
                start_timestamp: 0.0,
            },
            data,
        };
        let labels = attach_labels(&record, schedule);
        Ok((record, labels))
    }
}

fn fill_neutrals(sample: &mut [f64; CHANNEL_COUNT]) {
    for m in 0..MU_COUNT {
        let c = mu_base_column(m) + 3;
        sample[neutral_column(m)] = -(sample[c] + sample[c + 1] + sample[c + 2]);
    }
}

/// The fourteen channel descriptors in record order.
pub fn channel_specs() -> Vec<ChannelSpec> {
    let mut specs = Vec::with_capacity(CHANNEL_COUNT);
    for mu in MU_NAMES {
        for (quantity, unit) in [("V", "V"), ("I", "A")] {
            for phase in ["A", "B", "C"] {
                specs.push(ChannelSpec::new(
                    specs.len() + 1,
                    format!("{mu}_{quantity}{phase}"),
                    phase,
                    unit,
                ));
            }
        }
    }
    for mu in MU_NAMES {
        specs.push(ChannelSpec::new(
            specs.len() + 1,
            format!("{mu}_IN"),
            "N",
            "A",
        ));
    }
    specs
}

/// Generates one record. Convenience over [`Synthesizer`].
pub fn synthesize(
    config: &GridConfig,
    schedule: &EventSchedule,
    attacks: &AttackParams,
) -> Result<(WaveformRecord, Vec<u32>), SimError> {
    Synthesizer::new(config.clone(), *attacks)?.synthesize(schedule)
}

/// A generated record with its labels and schedule.
#[derive(Debug, Clone)]
pub struct LabeledRecord {
    pub record: WaveformRecord,
    pub labels: Vec<u32>,
    pub schedule: EventSchedule,
}

/// Seed of the streaming record derived from the benchmark seed.
pub fn streaming_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0x632B_E59B_D9B4_E019)
}

/// Training record (22 s, all 17 classes) and streaming record (6 s, five
/// events) generated from independent seeds.
pub fn make_benchmark_pair(seed: u64) -> Result<(LabeledRecord, LabeledRecord), SimError> {
    make_pair(
        &GridConfig {
            seed,
            ..GridConfig::default()
        },
        &AttackParams::default(),
        EventSchedule::training_benchmark(),
        EventSchedule::streaming_benchmark(),
    )
}

pub fn make_pair(
    config: &GridConfig,
    attacks: &AttackParams,
    training: EventSchedule,
    streaming: EventSchedule,
) -> Result<(LabeledRecord, LabeledRecord), SimError> {
    let (record, labels) = synthesize(config, &training, attacks)?;
    let train = LabeledRecord {
        record,
        labels,
        schedule: training,
    };
    let stream_cfg = GridConfig {
        seed: streaming_seed(config.seed),
        ..config.clone()
    };
    let (record, labels) = synthesize(&stream_cfg, &streaming, attacks)?;
    let stream = LabeledRecord {
        record,
        labels,
        schedule: streaming,
    };
    Ok((train, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduledEvent;

    fn rms(xs: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (s / n as f64).sqrt()
    }

    fn one_event(class_id: u32, duration: f64) -> EventSchedule {
        EventSchedule::new(vec![ScheduledEvent::new(class_id, 0.5, 1.0)], duration).unwrap()
    }

    #[test]
    fn quiet_record_is_balanced_sinusoids() {
        let cfg = GridConfig {
            operating_points: [GridConfig::default().operating_points[0]; 2],
            ..GridConfig::clean()
        };
        let schedule = EventSchedule::new(vec![], 0.5).unwrap();
        let (rec, labels) = synthesize(&cfg, &schedule, &AttackParams::default()).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        for c in [0, 1, 2, 6, 7, 8] {
            let r = rms(rec.data.column(c).iter().copied());
            assert!(
                (r - cfg.nominal_voltage / 2f64.sqrt()).abs() < 1e-6,
                "channel {c}: {r}"
            );
        }
        for m in 0..2 {
            assert!(rec
                .data
                .column(neutral_column(m))
                .iter()
                .all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = GridConfig {
            seed: 11,
            ..GridConfig::default()
        };
        let s = one_event(16, 2.0);
        let a = synthesize(&cfg, &s, &AttackParams::default()).unwrap();
        let b = synthesize(&cfg, &s, &AttackParams::default()).unwrap();
        assert_eq!(a.0.data, b.0.data);
        let c = synthesize(
            &GridConfig { seed: 12, ..cfg },
            &s,
            &AttackParams::default(),
        )
        .unwrap();
        assert_ne!(a.0.data, c.0.data);
    }

    #[test]
    fn unknown_class_rejected() {
        let cfg = GridConfig::default();
        let syn = Synthesizer::new(cfg.clone(), AttackParams::default()).unwrap();
        assert!(matches!(
            apply_event(
                syn.base_states(),
                18,
                &cfg.fault_levels,
                &AttackParams::default()
            ),
            Err(SimError::UnknownClass(18))
        ));
        assert!(matches!(
            apply_event(
                syn.base_states(),
                0,
                &cfg.fault_levels,
                &AttackParams::default()
            ),
            Err(SimError::UnknownClass(0))
        ));
    }

    #[test]
    fn attack_parameter_validation() {
        let bad = AttackParams {
            ct_ratio_factor: 1.0,
            ..AttackParams::default()
        };
        assert!(bad.validate(60.0).is_err());
        let bad = AttackParams {
            gps_shift: 1.0 / 60.0,
            ..AttackParams::default()
        };
        assert!(bad.validate(60.0).is_err());
        assert!(AttackParams::default().validate(60.0).is_ok());
    }

    #[test]
    fn neutral_is_negative_phase_sum() {
        let cfg = GridConfig::default();
        let (rec, _) = synthesize(&cfg, &one_event(9, 1.5), &AttackParams::default()).unwrap();
        for row in rec.data.outer_iter() {
            for m in 0..2 {
                let c = mu_base_column(m) + 3;
                assert_eq!(row[neutral_column(m)], -(row[c] + row[c + 1] + row[c + 2]));
            }
        }
    }

    #[test]
    fn ramp_is_one_cycle() {
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        assert!(ramp(0.5) > 0.9);
        let cycle = 1.0 / 60.0;
        assert_eq!(event_strength(0.4999, 0.5, 1.0, cycle), 0.0);
        assert_eq!(event_strength(0.75, 0.5, 1.0, cycle), 1.0);
        assert_eq!(event_strength(1.0 + 1.001 * cycle, 0.5, 1.0, cycle), 0.0);
        assert!(event_strength(1.0 + cycle / 2.0, 0.5, 1.0, cycle) > 0.0);
    }

    #[test]
    fn channel_layout() {
        let names: Vec<String> = channel_specs().into_iter().map(|c| c.name).collect();
        assert_eq!(names[0], "MU32_VA");
        assert_eq!(names[5], "MU32_IC");
        assert_eq!(names[6], "MU23_VA");
        assert_eq!(names[12], "MU32_IN");
        assert_eq!(names[13], "MU23_IN");
        assert_eq!(names.len(), CHANNEL_COUNT);
    }
}
