//! COMTRADE (1999 revision) transient records: `.cfg` configuration plus
//! `.dat` sample payload in ASCII or 16-bit binary encoding.
//!
//! Only analog channels are supported. Per-row timestamps in the data file
//! are written for compatibility but ignored on read; sample times are
//! reconstructed from the sample index and the declared sample rate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{sample_time, EventSchedule};

/// Raw binary value reserved for "missing sample".
const BINARY_MISSING: i16 = i16::MIN;
const BINARY_MAX: f64 = 32767.0;

#[derive(Debug, Error)]
pub enum ComtradeError {
    #[error("cfg line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dat payload truncated or oversized: expected {expected}, found {found}")]
    Truncation { expected: String, found: String },
    #[error("dat row {row}, channel {channel}: {msg}")]
    Data {
        row: usize,
        channel: usize,
        msg: String,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("label sidecar: {0}")]
    Labels(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    Ascii,
    Binary16,
}

impl DataFormat {
    fn cfg_keyword(self) -> &'static str {
        match self {
            DataFormat::Ascii => "ASCII",
            DataFormat::Binary16 => "BINARY",
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ascii" => Ok(DataFormat::Ascii),
            "binary" | "binary16" => Ok(DataFormat::Binary16),
            other => Err(format!("unknown data format `{other}` (ascii|binary16)")),
        }
    }
}

/// One analog channel. A stored value `v` maps to `scale * v + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub index: usize,
    pub name: String,
    pub phase: String,
    pub unit: String,
    pub scale: f64,
    pub offset: f64,
}

impl ChannelSpec {
    pub fn new(
        index: usize,
        name: impl Into<String>,
        phase: impl Into<String>,
        unit: impl Into<String>,
    ) -> Self {
        Self {
            index,
            name: name.into(),
            phase: phase.into(),
            unit: unit.into(),
            scale: 1.0,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub line_frequency: f64,
    pub sample_rate: f64,
    pub total_samples: usize,
    pub start_timestamp: f64,
}

impl SamplingSpec {
    /// Samples per fundamental cycle, when it is a whole number.
    pub fn samples_per_cycle(&self) -> Option<usize> {
        let ratio = self.sample_rate / self.line_frequency;
        let rounded = ratio.round();
        ((ratio - rounded).abs() < 1e-9 && rounded >= 1.0).then_some(rounded as usize)
    }

    pub fn time_of(&self, index: usize) -> f64 {
        sample_time(index, self.sample_rate, self.start_timestamp)
    }

    pub fn duration(&self) -> f64 {
        self.total_samples as f64 / self.sample_rate
    }
}

/// A multi-channel waveform in engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformRecord {
    pub station: String,
    pub device: String,
    pub revision: u16,
    pub channels: Vec<ChannelSpec>,
    pub sampling: SamplingSpec,
    /// `total_samples x channels` matrix.
    pub data: Array2<f64>,
}

impl WaveformRecord {
    pub fn validate(&self) -> Result<(), ComtradeError> {
        if self.channels.is_empty() {
            return Err(ComtradeError::Invalid("record has no channels".into()));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.index != i + 1 {
                return Err(ComtradeError::Invalid(format!(
                    "channel `{}` has index {}, expected {}",
                    ch.name,
                    ch.index,
                    i + 1
                )));
            }
            if ch.scale == 0.0 || !ch.scale.is_finite() || !ch.offset.is_finite() {
                return Err(ComtradeError::Invalid(format!(
                    "channel `{}` has unusable scale/offset",
                    ch.name
                )));
            }
            if ch.name.contains(',') || ch.unit.contains(',') || ch.phase.contains(',') {
                return Err(ComtradeError::Invalid(format!(
                    "channel `{}` metadata contains a comma",
                    ch.name
                )));
            }
        }
        let s = &self.sampling;
        if !(s.sample_rate > 0.0 && s.sample_rate.is_finite()) || s.total_samples == 0 {
            return Err(ComtradeError::Invalid(
                "sample rate and sample count must be positive".into(),
            ));
        }
        if !(s.line_frequency > 0.0 && s.line_frequency.is_finite()) {
            return Err(ComtradeError::Invalid(
                "line frequency must be positive".into(),
            ));
        }
        if self.data.dim() != (s.total_samples, self.channels.len()) {
            return Err(ComtradeError::Invalid(format!(
                "data is {:?}, header declares {}x{}",
                self.data.dim(),
                s.total_samples,
                self.channels.len()
            )));
        }
        if let Some(((row, col), _)) = self.data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(ComtradeError::Data {
                row,
                channel: col + 1,
                msg: "non-finite value".into(),
            });
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn channel_position(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }
}

/// Per-sample ground-truth labels for a record under a schedule.
pub fn attach_labels(record: &WaveformRecord, schedule: &EventSchedule) -> Vec<u32> {
    let s = &record.sampling;
    schedule.labels(s.total_samples, s.sample_rate, s.start_timestamp)
}

// ---------------------------------------------------------------------------
// writing

/// Serializes a record into `(cfg text, dat payload)`.
///
/// ASCII output keeps each channel's declared scale/offset. Binary output
/// chooses a fresh scale/offset per channel so the channel range maps onto
/// `[-32767, 32767]`.
pub fn write_record(
    record: &WaveformRecord,
    format: DataFormat,
) -> Result<(String, Vec<u8>), ComtradeError> {
    record.validate()?;
    let channels: Vec<ChannelSpec> = match format {
        DataFormat::Ascii => record.channels.clone(),
        DataFormat::Binary16 => record
            .channels
            .iter()
            .enumerate()
            .map(|(c, ch)| {
                let col = record.data.column(c);
                let (lo, hi) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                let offset = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                let scale = if half > 0.0 { half / BINARY_MAX } else { 1.0 };
                ChannelSpec {
                    scale,
                    offset,
                    ..ch.clone()
                }
            })
            .collect(),
    };
    let cfg = render_cfg(record, &channels, format);
    let dat = match format {
        DataFormat::Ascii => render_ascii(record, &channels).into_bytes(),
        DataFormat::Binary16 => render_binary(record, &channels),
    };
    Ok((cfg, dat))
}

fn render_cfg(record: &WaveformRecord, channels: &[ChannelSpec], format: DataFormat) -> String {
    let s = &record.sampling;
    let n = channels.len();
    let mut out = String::new();
    let _ = writeln!(out, "{},{},1999", record.station, record.device);
    let _ = writeln!(out, "{n},{n}A,0D");
    let (min, max) = match format {
        DataFormat::Ascii => (-99999, 99999),
        DataFormat::Binary16 => (-32767, 32767),
    };
    for ch in channels {
        let _ = writeln!(
            out,
            "{},{},{},,{},{:e},{:e},0,{min},{max},1,1,P",
            ch.index, ch.name, ch.phase, ch.unit, ch.scale, ch.offset
        );
    }
    let _ = writeln!(out, "{}", s.line_frequency);
    let _ = writeln!(out, "1");
    let _ = writeln!(out, "{},{}", s.sample_rate, s.total_samples);
    let stamp = format_timestamp(s.start_timestamp);
    let _ = writeln!(out, "{stamp}");
    let _ = writeln!(out, "{stamp}");
    let _ = writeln!(out, "{}", format.cfg_keyword());
    let _ = writeln!(out, "1");
    out
}

fn micros(index: usize, rate: f64) -> u64 {
    (index as f64 / rate * 1e6).round() as u64
}

fn render_ascii(record: &WaveformRecord, channels: &[ChannelSpec]) -> String {
    let rate = record.sampling.sample_rate;
    let mut out = String::with_capacity(record.data.len() * 14);
    for (i, row) in record.data.outer_iter().enumerate() {
        let _ = write!(out, "{}, {}", i + 1, micros(i, rate));
        for (v, ch) in row.iter().zip(channels) {
            out.push_str(", ");
            push_sig6(&mut out, (v - ch.offset) / ch.scale);
        }
        out.push('\n');
    }
    out
}

/// Writes `v` with at least six significant digits.
fn push_sig6(out: &mut String, v: f64) {
    let mag = v.abs();
    if mag == 0.0 {
        out.push_str("0.000000");
    } else if !(1e-4..1e15).contains(&mag) {
        let _ = write!(out, "{v:.6e}");
    } else {
        let exp = mag.log10().floor() as i32;
        let decimals = (5 - exp).max(6) as usize;
        let _ = write!(out, "{v:.decimals$}");
    }
}

fn render_binary(record: &WaveformRecord, channels: &[ChannelSpec]) -> Vec<u8> {
    let rate = record.sampling.sample_rate;
    let mut out = Vec::with_capacity(record.data.nrows() * (8 + 2 * channels.len()));
    for (i, row) in record.data.outer_iter().enumerate() {
        out.extend_from_slice(&((i + 1) as u32).to_le_bytes());
        out.extend_from_slice(&(micros(i, rate).min(u32::MAX as u64) as u32).to_le_bytes());
        for (v, ch) in row.iter().zip(channels) {
            let raw = ((v - ch.offset) / ch.scale)
                .round()
                .clamp(-BINARY_MAX, BINARY_MAX) as i16;
            out.extend_from_slice(&raw.to_le_bytes());
        }
    }
    out
}

fn format_timestamp(seconds: f64) -> String {
    let total_us = (seconds.max(0.0) * 1e6).round() as u64;
    let (secs, us) = (total_us / 1_000_000, total_us % 1_000_000);
    let days = secs / 86_400;
    let (h, m, s) = ((secs % 86_400) / 3600, (secs % 3600) / 60, secs % 60);
    // days beyond the first roll into the day-of-month field
    format!("{:02}/01/2000,{h:02}:{m:02}:{s:02}.{us:06}", days + 1)
}

// ---------------------------------------------------------------------------
// reading

struct CfgLines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> CfgLines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ComtradeError> {
        let line_no = self.pos + 1;
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| ComtradeError::Parse {
                line: line_no,
                msg: format!("unexpected end of cfg, expected {what}"),
            })?;
        self.pos += 1;
        Ok((line_no, line))
    }

    fn peek_nonempty(&self) -> Option<&'a str> {
        self.lines
            .get(self.pos)
            .copied()
            .filter(|l| !l.trim().is_empty())
    }
}

fn perr(line: usize, msg: impl Into<String>) -> ComtradeError {
    ComtradeError::Parse {
        line,
        msg: msg.into(),
    }
}

fn field_num<T: std::str::FromStr>(
    field: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, ComtradeError>
where
    T::Err: std::fmt::Display,
{
    let raw = field
        .ok_or_else(|| perr(line, format!("missing {what}")))?
        .trim();
    raw.parse::<T>()
        .map_err(|e| perr(line, format!("{what} `{raw}`: {e}")))
}

struct ParsedCfg {
    station: String,
    device: String,
    revision: u16,
    channels: Vec<ChannelSpec>,
    sampling: SamplingSpec,
    format: DataFormat,
}

fn parse_cfg(cfg: &[u8]) -> Result<ParsedCfg, ComtradeError> {
    let text =
        std::str::from_utf8(cfg).map_err(|e| perr(1, format!("cfg is not valid UTF-8: {e}")))?;
    let mut lines = CfgLines {
        lines: text.lines().map(|l| l.trim_end_matches('\r')).collect(),
        pos: 0,
    };

    let (ln, header) = lines.next("station line")?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() < 2 {
        return Err(perr(
            ln,
            "station line needs station_name,rec_dev_id[,rev_year]",
        ));
    }
    let revision: u16 = match fields.get(2).map(|s| s.trim()) {
        None | Some("") => 1991,
        Some(y) => y
            .parse()
            .map_err(|_| perr(ln, format!("revision year `{y}`")))?,
    };
    if revision != 1991 && revision != 1999 {
        return Err(ComtradeError::Unsupported(format!(
            "COMTRADE revision {revision}"
        )));
    }

    let (ln, counts) = lines.next("channel counts")?;
    let fields: Vec<&str> = counts.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(perr(ln, "channel count line needs TT,##A,##D"));
    }
    let total: usize = field_num(Some(fields[0]), ln, "total channel count")?;
    let analog: usize = field_num(fields[1].strip_suffix(['A', 'a']), ln, "analog count")?;
    let status: usize = field_num(fields[2].strip_suffix(['D', 'd']), ln, "status count")?;
    if status > 0 {
        return Err(ComtradeError::Unsupported(format!(
            "{status} status channels"
        )));
    }
    if analog == 0 {
        return Err(perr(ln, "no analog channels"));
    }
    if total != analog + status {
        return Err(perr(ln, format!("total {total} != {analog}A + {status}D")));
    }

    let mut channels = Vec::with_capacity(analog);
    for expected in 1..=analog {
        let (ln, line) = lines.next("analog channel line")?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 10 {
            return Err(perr(
                ln,
                format!(
                    "analog channel line has {} fields, need at least 10",
                    f.len()
                ),
            ));
        }
        let index: usize = field_num(Some(f[0]), ln, "channel index")?;
        if index != expected {
            return Err(perr(
                ln,
                format!("channel index {index}, expected {expected}"),
            ));
        }
        let scale: f64 = field_num(Some(f[5]), ln, "multiplier a")?;
        let offset: f64 = field_num(Some(f[6]), ln, "offset b")?;
        if scale == 0.0 || !scale.is_finite() || !offset.is_finite() {
            return Err(perr(
                ln,
                "multiplier must be finite and non-zero, offset finite",
            ));
        }
        channels.push(ChannelSpec {
            index,
            name: f[1].trim().to_string(),
            phase: f[2].trim().to_string(),
            unit: f[4].trim().to_string(),
            scale,
            offset,
        });
    }

    let (ln, lf) = lines.next("line frequency")?;
    let line_frequency: f64 = field_num(Some(lf), ln, "line frequency")?;
    if !(line_frequency > 0.0 && line_frequency.is_finite()) {
        return Err(perr(ln, "line frequency must be positive"));
    }
    let (ln, nrates) = lines.next("sample rate count")?;
    let nrates: usize = field_num(Some(nrates), ln, "nrates")?;
    if nrates != 1 {
        return Err(ComtradeError::Unsupported(format!(
            "{nrates} sampling rates (only single fixed-rate records are supported)"
        )));
    }
    let (ln, rate_line) = lines.next("samp,endsamp")?;
    let mut rf = rate_line.split(',');
    let sample_rate: f64 = field_num(rf.next(), ln, "sample rate")?;
    let total_samples: usize = field_num(rf.next(), ln, "end sample")?;
    if !(sample_rate > 0.0 && sample_rate.is_finite()) || total_samples == 0 {
        return Err(perr(ln, "sample rate and end sample must be positive"));
    }
    let (ln, start_line) = lines.next("first sample timestamp")?;
    let start_timestamp =
        parse_timestamp(start_line).ok_or_else(|| perr(ln, "unparseable timestamp"))?;
    let (ln, trig) = lines.next("trigger timestamp")?;
    parse_timestamp(trig).ok_or_else(|| perr(ln, "unparseable timestamp"))?;
    let (ln, ft) = lines.next("data file type")?;
    let format = match ft.trim().to_ascii_uppercase().as_str() {
        "ASCII" => DataFormat::Ascii,
        "BINARY" => DataFormat::Binary16,
        "BINARY32" | "FLOAT32" => {
            return Err(ComtradeError::Unsupported(format!(
                "data type {}",
                ft.trim()
            )))
        }
        other => return Err(perr(ln, format!("unknown data file type `{other}`"))),
    };
    if revision == 1999 && lines.peek_nonempty().is_some() {
        let (ln, tm) = lines.next("timemult")?;
        let mult: f64 = field_num(Some(tm), ln, "timemult")?;
        // also rejects NaN
        if !(mult > 0.0) {
            return Err(perr(ln, "timemult must be positive"));
        }
    }

    Ok(ParsedCfg {
        station: fields_or_empty(header, 0),
        device: fields_or_empty(header, 1),
        revision,
        channels,
        sampling: SamplingSpec {
            line_frequency,
            sample_rate,
            total_samples,
            start_timestamp,
        },
        format,
    })
}

fn fields_or_empty(line: &str, idx: usize) -> String {
    line.split(',').nth(idx).unwrap_or("").trim().to_string()
}

/// `dd/mm/yyyy,hh:mm:ss.ssssss` to seconds since the start of the first day
/// of the month.
fn parse_timestamp(line: &str) -> Option<f64> {
    let (date, time) = line.split_once(',')?;
    let mut d = date.trim().split('/');
    let day: u64 = d.next()?.trim().parse().ok()?;
    let _month: u64 = d.next()?.trim().parse().ok()?;
    let _year: u64 = d.next()?.trim().parse().ok()?;
    if day == 0 {
        return None;
    }
    let mut t = time.trim().split(':');
    let h: u64 = t.next()?.parse().ok()?;
    let m: u64 = t.next()?.parse().ok()?;
    let s: f64 = t.next()?.parse().ok()?;
    if !s.is_finite() || s < 0.0 {
        return None;
    }
    Some(((day - 1) * 86_400 + h * 3600 + m * 60) as f64 + s)
}

/// Parses a cfg/dat pair into engineering values.
pub fn read_record(cfg: &[u8], dat: &[u8]) -> Result<WaveformRecord, ComtradeError> {
    let parsed = parse_cfg(cfg)?;
    let n = parsed.sampling.total_samples;
    let width = parsed.channels.len();
    let raw = match parsed.format {
        DataFormat::Ascii => parse_ascii(dat, n, width)?,
        DataFormat::Binary16 => parse_binary(dat, n, width)?,
    };
    let mut data = Array2::<f64>::zeros((n, width));
    for ((row, col), out) in data.indexed_iter_mut() {
        let ch = &parsed.channels[col];
        let v = ch.scale * raw[row * width + col] + ch.offset;
        if !v.is_finite() {
            return Err(ComtradeError::Data {
                row,
                channel: col + 1,
                msg: "non-finite engineering value".into(),
            });
        }
        *out = v;
    }
    Ok(WaveformRecord {
        station: parsed.station,
        device: parsed.device,
        revision: parsed.revision,
        channels: parsed.channels,
        sampling: parsed.sampling,
        data,
    })
}

fn parse_ascii(dat: &[u8], n: usize, width: usize) -> Result<Vec<f64>, ComtradeError> {
    let text = std::str::from_utf8(dat).map_err(|e| ComtradeError::Data {
        row: 0,
        channel: 0,
        msg: format!("ASCII dat is not valid UTF-8: {e}"),
    })?;
    let mut values = Vec::with_capacity(n.saturating_mul(width).min(1 << 26));
    let mut rows = 0usize;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if rows == n {
            return Err(ComtradeError::Truncation {
                expected: format!("{n} rows"),
                found: "additional rows".into(),
            });
        }
        let mut fields = line.split(',');
        // sample number and timestamp
        for _ in 0..2 {
            if fields.next().is_none() {
                return Err(ComtradeError::Truncation {
                    expected: format!("{} fields in row {}", width + 2, rows + 1),
                    found: "short row".into(),
                });
            }
        }
        let mut count = 0;
        for (c, f) in fields.enumerate() {
            if c >= width {
                return Err(ComtradeError::Truncation {
                    expected: format!("{} fields in row {}", width + 2, rows + 1),
                    found: format!("more than {}", width + 2),
                });
            }
            let f = f.trim();
            if f.is_empty() {
                return Err(ComtradeError::Data {
                    row: rows,
                    channel: c + 1,
                    msg: "missing value".into(),
                });
            }
            let v: f64 = f.parse().map_err(|_| ComtradeError::Data {
                row: rows,
                channel: c + 1,
                msg: format!("not a number: `{f}`"),
            })?;
            if !v.is_finite() {
                return Err(ComtradeError::Data {
                    row: rows,
                    channel: c + 1,
                    msg: "non-finite value".into(),
                });
            }
            values.push(v);
            count += 1;
        }
        if count != width {
            return Err(ComtradeError::Truncation {
                expected: format!("{} fields in row {}", width + 2, rows + 1),
                found: format!("{}", count + 2),
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(ComtradeError::Truncation {
            expected: format!("{n} rows"),
            found: format!("{rows} rows"),
        });
    }
    Ok(values)
}

fn parse_binary(dat: &[u8], n: usize, width: usize) -> Result<Vec<f64>, ComtradeError> {
    let row_bytes = 8 + 2 * width;
    let expected = n
        .checked_mul(row_bytes)
        .ok_or_else(|| ComtradeError::Truncation {
            expected: "addressable payload".into(),
            found: format!("{} bytes", dat.len()),
        })?;
    if dat.len() != expected {
        return Err(ComtradeError::Truncation {
            expected: format!("{expected} bytes ({n} x {row_bytes})"),
            found: format!("{} bytes", dat.len()),
        });
    }
    let mut values = Vec::with_capacity(n * width);
    for (row, chunk) in dat.chunks_exact(row_bytes).enumerate() {
        for (c, pair) in chunk[8..].chunks_exact(2).enumerate() {
            let raw = i16::from_le_bytes([pair[0], pair[1]]);
            if raw == BINARY_MISSING {
                return Err(ComtradeError::Data {
                    row,
                    channel: c + 1,
                    msg: "missing value marker".into(),
                });
            }
            values.push(raw as f64);
        }
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// files

/// Paths of a record stored as `<stem>.cfg`, `<stem>.dat` and `<stem>.labels.csv`.
#[derive(Debug, Clone)]
pub struct RecordPaths {
    pub cfg: PathBuf,
    pub dat: PathBuf,
    pub labels: PathBuf,
}

impl RecordPaths {
    pub fn from_stem(dir: &Path, stem: &str) -> Self {
        Self {
            cfg: dir.join(format!("{stem}.cfg")),
            dat: dir.join(format!("{stem}.dat")),
            labels: dir.join(format!("{stem}.labels.csv")),
        }
    }

    /// Derives sibling paths from a `.cfg` (or `.dat`) path.
    pub fn from_cfg(cfg: &Path) -> Self {
        let dir = cfg.parent().unwrap_or_else(|| Path::new("."));
        let stem = cfg.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
        Self::from_stem(dir, stem)
    }
}

pub fn read_record_files(paths: &RecordPaths) -> Result<WaveformRecord, ComtradeError> {
    let cfg = fs::read(&paths.cfg)?;
    let dat = fs::read(&paths.dat)?;
    read_record(&cfg, &dat)
}

pub fn write_record_files(
    paths: &RecordPaths,
    record: &WaveformRecord,
    format: DataFormat,
    labels: Option<&[u32]>,
) -> Result<(), ComtradeError> {
    let (cfg, dat) = write_record(record, format)?;
    if let Some(labels) = labels {
        if labels.len() != record.sampling.total_samples {
            return Err(ComtradeError::Labels(format!(
                "{} labels for {} samples",
                labels.len(),
                record.sampling.total_samples
            )));
        }
    }
    fs::write(&paths.cfg, cfg)?;
    fs::write(&paths.dat, dat)?;
    if let Some(labels) = labels {
        fs::write(&paths.labels, labels_to_csv(labels))?;
    }
    Ok(())
}

/// Label sidecar with header `sample_index,label`.
pub fn labels_to_csv(labels: &[u32]) -> String {
    let mut out = String::with_capacity(labels.len() * 8 + 20);
    out.push_str("sample_index,label\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

pub fn labels_from_csv(text: &[u8]) -> Result<Vec<u32>, ComtradeError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text);
    let headers = reader
        .headers()
        .map_err(|e| ComtradeError::Labels(e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "sample_index" || &headers[1] != "label" {
        return Err(ComtradeError::Labels(format!(
            "expected header `sample_index,label`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| ComtradeError::Labels(e.to_string()))?;
        let idx: usize = row[0].parse().map_err(|_| {
            ComtradeError::Labels(format!("row {}: bad sample index `{}`", i + 1, &row[0]))
        })?;
        if idx != i {
            return Err(ComtradeError::Labels(format!(
                "row {}: sample index {idx} out of sequence",
                i + 1
            )));
        }
        let label: u32 = row[1].parse().map_err(|_| {
            ComtradeError::Labels(format!("row {}: bad label `{}`", i + 1, &row[1]))
        })?;
        labels.push(label);
    }
    Ok(labels)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<u32>, ComtradeError> {
    labels_from_csv(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduledEvent;
    use ndarray::array;

    fn two_channel(data: Array2<f64>) -> WaveformRecord {
        WaveformRecord {
            station: "TEST".into(),
            device: "DEV".into(),
            revision: 1999,
            channels: vec![
                ChannelSpec::new(1, "CH1", "A", "V"),
                ChannelSpec::new(2, "CH2", "B", "A"),
            ],
            sampling: SamplingSpec {
                line_frequency: 60.0,
                sample_rate: 4800.0,
                total_samples: data.nrows(),
                start_timestamp: 0.0,
            },
            data,
        }
    }

    const CFG_2CH: &str = "S,D,1999\n2,2A,0D\n\
        1,VA,A,,V,1.0,0.0,0,-99999,99999,1,1,P\n\
        2,IA,A,,A,1.0,0.0,0,-99999,99999,1,1,P\n\
        60\n1\n4800,4\n01/01/2000,00:00:00.000000\n01/01/2000,00:00:00.000000\nASCII\n1\n";

    #[test]
    fn zero_record() {
        let dat = "1,0,0,0\n2,208,0,0\n3,417,0,0\n4,625,0,0\n";
        let r = read_record(CFG_2CH.as_bytes(), dat.as_bytes()).unwrap();
        assert_eq!(r.data, Array2::<f64>::zeros((4, 2)));
        assert_eq!(r.channel_names(), vec!["VA", "IA"]);
        assert_eq!(r.sampling.samples_per_cycle(), Some(80));
    }

    #[test]
    fn affine_scaling() {
        let cfg = CFG_2CH.replace("1,VA,A,,V,1.0,0.0", "1,VA,A,,V,0.5,1.0");
        let dat = "1,0,4,0\n2,208,0,0\n3,417,0,0\n4,625,0,0\n";
        let r = read_record(cfg.as_bytes(), dat.as_bytes()).unwrap();
        assert_eq!(r.data[[0, 0]], 3.0);
        assert_eq!(r.data[[1, 0]], 1.0);
    }

    #[test]
    fn truncated_ascii() {
        let dat = "1,0,0,0\n2,208,0,0\n3,417,0,0\n";
        let err = read_record(CFG_2CH.as_bytes(), dat.as_bytes()).unwrap_err();
        assert!(matches!(err, ComtradeError::Truncation { .. }), "{err}");
        let short_row = "1,0,0\n2,208,0,0\n3,417,0,0\n4,625,0,0\n";
        assert!(matches!(
            read_record(CFG_2CH.as_bytes(), short_row.as_bytes()),
            Err(ComtradeError::Truncation { .. })
        ));
    }

    #[test]
    fn non_finite_and_missing_values() {
        let dat = "1,0,NaN,0\n2,208,0,0\n3,417,0,0\n4,625,0,0\n";
        assert!(matches!(
            read_record(CFG_2CH.as_bytes(), dat.as_bytes()),
            Err(ComtradeError::Data {
                row: 0,
                channel: 1,
                ..
            })
        ));
        let dat = "1,0,0,\n2,208,0,0\n3,417,0,0\n4,625,0,0\n";
        assert!(matches!(
            read_record(CFG_2CH.as_bytes(), dat.as_bytes()),
            Err(ComtradeError::Data {
                row: 0,
                channel: 2,
                ..
            })
        ));
    }

    #[test]
    fn malformed_cfg_reports_line() {
        let cfg = CFG_2CH.replace("2,IA,A,,A,1.0", "2,IA,A,,A,abc");
        match read_record(cfg.as_bytes(), b"") {
            Err(ComtradeError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = CFG_2CH.replace("4800,4", "4800");
        match read_record(cfg.as_bytes(), b"") {
            Err(ComtradeError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn status_channels_rejected() {
        let cfg = CFG_2CH.replace("2,2A,0D", "3,2A,1D");
        assert!(matches!(
            read_record(cfg.as_bytes(), b""),
            Err(ComtradeError::Unsupported(_))
        ));
    }

    #[test]
    fn constant_channel_ascii_rows() {
        let mut r = two_channel(Array2::from_elem((3, 2), 1.0));
        r.channels.truncate(1);
        r.data = Array2::from_elem((3, 1), 1.0);
        let (_, dat) = write_record(&r, DataFormat::Ascii).unwrap();
        let text = String::from_utf8(dat).unwrap();
        assert_eq!(text.lines().next().unwrap(), "1, 0, 1.000000");
        assert_eq!(text.lines().nth(1).unwrap(), "2, 208, 1.000000");
    }

    #[test]
    fn empty_channel_list_rejected() {
        let mut r = two_channel(Array2::zeros((2, 2)));
        r.channels.clear();
        r.data = Array2::zeros((2, 0));
        assert!(matches!(
            write_record(&r, DataFormat::Ascii),
            Err(ComtradeError::Invalid(_))
        ));
    }

    #[test]
    fn binary_scale_choice() {
        let r = two_channel(array![
            [-2000.0, 5.0],
            [0.0, 5.0],
            [2000.0, 5.0],
            [1234.5, 5.0]
        ]);
        let (cfg, dat) = write_record(&r, DataFormat::Binary16).unwrap();
        let back = read_record(cfg.as_bytes(), &dat).unwrap();
        let scale = back.channels[0].scale;
        assert!((scale - 2000.0 / 32767.0).abs() < 1e-12);
        for (a, b) in r.data.column(0).iter().zip(back.data.column(0)) {
            assert!((a - b).abs() <= scale / 2.0 + 1e-12);
        }
        // constant channel is reproduced exactly
        assert!(back.data.column(1).iter().all(|&v| v == 5.0));
    }

    #[test]
    fn binary_missing_marker() {
        let r = two_channel(array![[1.0, 2.0]]);
        let (cfg, mut dat) = write_record(&r, DataFormat::Binary16).unwrap();
        dat[8..10].copy_from_slice(&i16::MIN.to_le_bytes());
        assert!(matches!(
            read_record(cfg.as_bytes(), &dat),
            Err(ComtradeError::Data { .. })
        ));
        dat.pop();
        assert!(matches!(
            read_record(cfg.as_bytes(), &dat),
            Err(ComtradeError::Truncation { .. })
        ));
    }

    #[test]
    fn start_timestamp_survives() {
        let mut r = two_channel(Array2::zeros((2, 2)));
        r.sampling.start_timestamp = 3723.25;
        let (cfg, dat) = write_record(&r, DataFormat::Ascii).unwrap();
        let back = read_record(cfg.as_bytes(), &dat).unwrap();
        assert!((back.sampling.start_timestamp - 3723.25).abs() < 1e-9);
    }

    #[test]
    fn labels_from_schedule() {
        let r = two_channel(Array2::zeros((4800 * 6, 2)));
        let s = EventSchedule::new(vec![ScheduledEvent::new(4, 4.0, 4.5)], 6.0).unwrap();
        let labels = attach_labels(&r, &s);
        assert_eq!(labels[4 * 4800], 4);
        assert_eq!(labels[4 * 4800 - 1], 0);
        assert_eq!(labels[4800 * 9 / 2], 4);
        assert_eq!(labels[4800 * 9 / 2 + 1], 0);
        assert_eq!(labels, attach_labels(&r, &s));
    }

    #[test]
    fn label_sidecar_round_trip() {
        let labels = vec![0, 0, 4, 4, 17, 0];
        let text = labels_to_csv(&labels);
        assert!(text.starts_with("sample_index,label\n"));
        assert_eq!(labels_from_csv(text.as_bytes()).unwrap(), labels);
        assert!(labels_from_csv(b"idx,label\n0,1\n").is_err());
        assert!(labels_from_csv(b"sample_index,label\n1,1\n").is_err());
    }

    #[test]
    fn sig6_formatting() {
        let mut s = String::new();
        push_sig6(&mut s, 0.001234567);
        assert_eq!(s, "0.00123457");
        s.clear();
        push_sig6(&mut s, -11268.123456789);
        assert_eq!(s, "-11268.123457");
        s.clear();
        push_sig6(&mut s, 1.5e-7);
        assert_eq!(s.parse::<f64>().unwrap(), 1.5e-7);
    }
}
