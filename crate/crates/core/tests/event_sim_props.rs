use std::collections::BTreeSet;

use gridsentry::comtrade::attach_labels;
use gridsentry::event_sim::{
    make_benchmark_pair, mu_base_column, neutral_column, synthesize, AttackParams, GridConfig,
};
use gridsentry::schedule::{EventSchedule, ScheduledEvent};
use proptest::prelude::*;

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

// 0.55 s .. 0.95 s: 24 whole cycles clear of the onset and decay ramps
const INTERIOR: std::ops::Range<usize> = 2640..4560;

fn event_at_half_second(class_id: u32) -> EventSchedule {
    EventSchedule::new(vec![ScheduledEvent::new(class_id, 0.5, 1.0)], 1.5).unwrap()
}

#[test]
fn benchmark_pair_shapes() {
    let (train, stream) = make_benchmark_pair(42).unwrap();
    assert_eq!(train.record.data.dim(), (105_600, 14));
    assert_eq!(train.labels.iter().collect::<BTreeSet<_>>().len(), 18);
    assert_eq!(stream.record.data.nrows(), 28_800);
    assert_eq!(stream.schedule.events().len(), 5);
    let trained: BTreeSet<u32> = train.schedule.class_ids().into_iter().collect();
    assert!(stream
        .schedule
        .class_ids()
        .iter()
        .all(|c| trained.contains(c)));
    assert_eq!(train.labels, attach_labels(&train.record, &train.schedule));
    assert_eq!(
        stream.labels,
        attach_labels(&stream.record, &stream.schedule)
    );
    assert_eq!(train.record.sampling.samples_per_cycle(), Some(80));
    assert_eq!(train.labels[(4.25 * 4800.0) as usize], 4);
    assert_eq!(train.labels[(5.0 * 4800.0) as usize], 0);
}

#[test]
fn slg_fault_levels_in_record() {
    let cfg = GridConfig::clean();
    let (rec, _) = synthesize(&cfg, &event_at_half_second(1), &AttackParams::default()).unwrap();
    let va = rec.data.column(mu_base_column(0));
    let ia = rec.data.column(mu_base_column(0) + 3);
    let v_ratio = rms(INTERIOR.map(|i| va[i])) / (cfg.nominal_voltage / 2f64.sqrt());
    let i_ratio = rms(INTERIOR.map(|i| ia[i])) / (cfg.nominal_current / 2f64.sqrt());
    assert!((v_ratio - 0.3).abs() < 1e-6, "{v_ratio}");
    // fundamental at 1.4 pu plus the fault harmonics
    let h: f64 = cfg
        .fault_levels
        .slg_harmonics
        .iter()
        .map(|(_, a)| a * a)
        .sum();
    assert!((i_ratio - 1.4 * (1.0 + h).sqrt()).abs() < 1e-6, "{i_ratio}");
}

#[test]
fn ct_attack_scales_noisy_samples_pointwise() {
    let cfg = GridConfig {
        seed: 3,
        ..GridConfig::default()
    };
    let attacks = AttackParams::default();
    let (attacked, _) = synthesize(&cfg, &event_at_half_second(4), &attacks).unwrap();
    let (clean, _) = synthesize(&cfg, &EventSchedule::new(vec![], 1.5).unwrap(), &attacks).unwrap();
    for i in INTERIOR {
        for c in 0..3 {
            let v = mu_base_column(0) + c;
            assert_eq!(
                attacked.data[[i, v]],
                clean.data[[i, v]],
                "voltage unchanged"
            );
            let cur = mu_base_column(0) + 3 + c;
            let want = attacks.ct_ratio_factor * clean.data[[i, cur]];
            assert!((attacked.data[[i, cur]] - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }
}

#[test]
fn gps_spoof_lag_by_cross_correlation() {
    let cfg = GridConfig::clean();
    let attacks = AttackParams::default();
    let (spoofed, _) = synthesize(&cfg, &event_at_half_second(16), &attacks).unwrap();
    let (clean, _) = synthesize(&cfg, &EventSchedule::new(vec![], 1.5).unwrap(), &attacks).unwrap();
    let c = mu_base_column(0);
    let lags = -39i64..=40;
    let best = lags
        .max_by(|&a, &b| {
            let xc = |lag: i64| -> f64 {
                INTERIOR
                    .map(|i| spoofed.data[[i, c]] * clean.data[[(i as i64 + lag) as usize, c]])
                    .sum()
            };
            xc(a).total_cmp(&xc(b))
        })
        .unwrap();
    let want = (attacks.gps_shift * cfg.sample_rate).round() as i64;
    assert_eq!(best.abs(), want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn neutral_is_exact_negative_sum(seed in any::<u64>(), class in 1u32..=17) {
        let cfg = GridConfig { seed, ..GridConfig::default() };
        let (rec, _) = synthesize(&cfg, &event_at_half_second(class), &AttackParams::default()).unwrap();
        for row in rec.data.outer_iter() {
            for m in 0..2 {
                let c = mu_base_column(m) + 3;
                prop_assert_eq!(row[neutral_column(m)], -(row[c] + row[c + 1] + row[c + 2]));
            }
        }
    }

    #[test]
    fn quiet_record_matches_sinusoid_outside_events(class in 1u32..=17) {
        let cfg = GridConfig { random_point_on_wave: false, ..GridConfig::clean() };
        let (ev, _) = synthesize(&cfg, &event_at_half_second(class), &AttackParams::default()).unwrap();
        let (base, _) = synthesize(&cfg, &EventSchedule::new(vec![], 1.5).unwrap(), &AttackParams::default()).unwrap();
        // before the event and after the one-cycle decay margin
        for i in (0..2400).chain(4800 + 81..7200) {
            for c in 0..14 {
                prop_assert!((ev.data[[i, c]] - base.data[[i, c]]).abs() <= 1e-9);
            }
        }
    }
}
