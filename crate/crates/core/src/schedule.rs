//! Event schedules: which anomaly class is active over which time interval.
//!
//! A schedule is the single ground-truth source for per-sample labels. A
//! sample at time `t` carries the class of the event whose closed interval
//! `[start, end]` contains `t`, and the normal class `0` otherwise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class id of normal operation.
pub const NORMAL_CLASS: u32 = 0;

/// Highest anomaly class id known to the generator.
pub const MAX_CLASS_ID: u32 = 17;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("event {index}: start {start} must be before end {end}")]
    EmptyInterval { index: usize, start: f64, end: f64 },
    #[error("event {index}: interval [{start}, {end}] lies outside [0, {duration}]")]
    OutOfRange {
        index: usize,
        start: f64,
        end: f64,
        duration: f64,
    },
    #[error("events {first} and {second} overlap")]
    Overlap { first: usize, second: usize },
    #[error("event {index}: class id {class_id} is not an anomaly class (1..={MAX_CLASS_ID})")]
    BadClass { index: usize, class_id: u32 },
    #[error("duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("schedule line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub class_id: u32,
    pub start: f64,
    pub end: f64,
}

impl ScheduledEvent {
    pub fn new(class_id: u32, start: f64, end: f64) -> Self {
        Self {
            class_id,
            start,
            end,
        }
    }

    #[inline]
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// An ordered list of disjoint anomaly intervals over a record of fixed duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    events: Vec<ScheduledEvent>,
    duration: f64,
}

impl EventSchedule {
    /// Builds a validated schedule. Events are sorted by start time.
    pub fn new(mut events: Vec<ScheduledEvent>, duration: f64) -> Result<Self, ScheduleError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(ScheduleError::BadDuration(duration));
        }
        for (index, ev) in events.iter().enumerate() {
            if ev.class_id == NORMAL_CLASS || ev.class_id > MAX_CLASS_ID {
                return Err(ScheduleError::BadClass {
                    index,
                    class_id: ev.class_id,
                });
            }
            if !(ev.start.is_finite() && ev.end.is_finite() && ev.start < ev.end) {
                return Err(ScheduleError::EmptyInterval {
                    index,
                    start: ev.start,
                    end: ev.end,
                });
            }
            if ev.start < 0.0 || ev.end > duration {
                return Err(ScheduleError::OutOfRange {
                    index,
                    start: ev.start,
                    end: ev.end,
                    duration,
                });
            }
        }
        let mut order: Vec<usize> = (0..events.len()).collect();
        order.sort_by(|&a, &b| events[a].start.total_cmp(&events[b].start));
        // closed intervals: touching endpoints share a sample time
        for pair in order.windows(2) {
            if events[pair[1]].start <= events[pair[0]].end {
                return Err(ScheduleError::Overlap {
                    first: pair[0].min(pair[1]),
                    second: pair[0].max(pair[1]),
                });
            }
        }
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(Self { events, duration })
    }

    pub fn events(&self) -> &[ScheduledEvent] {
        &self.events
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Same events over a different duration, revalidated.
    pub fn with_duration(&self, duration: f64) -> Result<Self, ScheduleError> {
        Self::new(self.events.clone(), duration)
    }

    /// Ground-truth class at time `t`.
    pub fn label_at(&self, t: f64) -> u32 {
        // events are sorted and disjoint, so the first candidate is the only one
        let idx = self.events.partition_point(|ev| ev.end < t);
        match self.events.get(idx) {
            Some(ev) if ev.contains(t) => ev.class_id,
            _ => NORMAL_CLASS,
        }
    }

    /// Labels for `n` samples taken at `sample_rate` starting at `start_time`.
    pub fn labels(&self, n: usize, sample_rate: f64, start_time: f64) -> Vec<u32> {
        (0..n)
            .map(|i| self.label_at(sample_time(i, sample_rate, start_time)))
            .collect()
    }

    /// Distinct anomaly class ids present, ascending.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.events.iter().map(|e| e.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Parses the plain-text schedule format.
    ///
    /// ```text
    /// # comment
    /// duration = 6.0
    /// 1, 1.0, 1.2
    /// ```
    ///
    /// `default_duration` is used when no `duration` line is present.
    pub fn parse(text: &str, default_duration: Option<f64>) -> Result<Self, ScheduleError> {
        let mut events = Vec::new();
        let mut duration = default_duration;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() != "duration" {
                    return Err(ScheduleError::Parse {
                        line: line_no,
                        msg: format!("unknown key `{}`", key.trim()),
                    });
                }
                duration = Some(parse_num(value, line_no)?);
                continue;
            }
            events.push(parse_event_fields(line, line_no)?);
        }
        let duration = duration.ok_or(ScheduleError::Parse {
            line: 0,
            msg: "missing `duration`".into(),
        })?;
        Self::new(events, duration)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("duration = {}\n", self.duration);
        for ev in &self.events {
            let _ = writeln!(out, "{}, {}, {}", ev.class_id, ev.start, ev.end);
        }
        out
    }

    /// The 22 s training schedule with all 17 anomaly classes.
    pub fn training_benchmark() -> Self {
        let rows: [(u32, f64, f64); 17] = [
            (1, 1.0, 1.5),
            (2, 2.0, 2.5),
            (3, 3.0, 3.5),
            (4, 4.0, 4.5),
            (5, 6.0, 6.5),
            (6, 7.0, 7.5),
            (7, 8.0, 8.5),
            (8, 9.0, 9.5),
            (9, 11.0, 11.5),
            (10, 12.0, 12.5),
            (11, 13.0, 13.5),
            (12, 14.0, 14.5),
            (13, 15.0, 15.5),
            (14, 17.0, 17.5),
            (15, 18.0, 18.5),
            (16, 20.0, 20.5),
            (17, 21.0, 21.5),
        ];
        let events = rows
            .iter()
            .map(|&(c, a, b)| ScheduledEvent::new(c, a, b))
            .collect();
        Self::new(events, 22.0).expect("benchmark schedule is valid")
    }

    /// The 6 s streaming schedule: SLG A-N, LL B-C, DLG AC-N, CT attack on
    /// MU32 and PT attack on MU23, 0.2 s each.
    pub fn streaming_benchmark() -> Self {
        let events = vec![
            ScheduledEvent::new(1, 1.0, 1.2),
            ScheduledEvent::new(7, 2.0, 2.2),
            ScheduledEvent::new(10, 3.0, 3.2),
            ScheduledEvent::new(4, 4.0, 4.2),
            ScheduledEvent::new(13, 5.0, 5.2),
        ];
        Self::new(events, 6.0).expect("benchmark schedule is valid")
    }
}

/// Time of sample `index`, reconstructed from the fixed sample rate.
#[inline]
pub fn sample_time(index: usize, sample_rate: f64, start_time: f64) -> f64 {
    start_time + index as f64 / sample_rate
}

pub fn parse_event_fields(line: &str, line_no: usize) -> Result<ScheduledEvent, ScheduleError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(ScheduleError::Parse {
            line: line_no,
            msg: format!(
                "expected `class_id, start, end`, got {} fields",
                fields.len()
            ),
        });
    }
    let class_id = fields[0].parse::<u32>().map_err(|e| ScheduleError::Parse {
        line: line_no,
        msg: format!("class id `{}`: {e}", fields[0]),
    })?;
    Ok(ScheduledEvent::new(
        class_id,
        parse_num(fields[1], line_no)?,
        parse_num(fields[2], line_no)?,
    ))
}

fn parse_num(s: &str, line: usize) -> Result<f64, ScheduleError> {
    s.trim().parse::<f64>().map_err(|e| ScheduleError::Parse {
        line,
        msg: format!("number `{}`: {e}", s.trim()),
    })
}
