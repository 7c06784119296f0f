use gridsentry::comtrade::{
    attach_labels, read_record, write_record, ChannelSpec, DataFormat, SamplingSpec, WaveformRecord,
};
use gridsentry::schedule::{EventSchedule, ScheduledEvent};
use ndarray::Array2;
use proptest::prelude::*;

fn record(data: Array2<f64>, scales: &[f64], offsets: &[f64]) -> WaveformRecord {
    let channels = (0..data.ncols())
        .map(|c| ChannelSpec {
            scale: scales[c],
            offset: offsets[c],
            ..ChannelSpec::new(c + 1, format!("CH{c}"), "A", "V")
        })
        .collect();
    WaveformRecord {
        station: "SUB".into(),
        device: "REC".into(),
        revision: 1999,
        channels,
        sampling: SamplingSpec {
            line_frequency: 60.0,
            sample_rate: 4800.0,
            total_samples: data.nrows(),
            start_timestamp: 0.0,
        },
        data,
    }
}

fn matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..40, 1usize..6).prop_flat_map(|(rows, cols)| {
        prop::collection::vec(-5.0e4f64..5.0e4, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ascii_round_trip_relative(data in matrix(), scale in 1e-3f64..1e3) {
        let cols = data.ncols();
        let rec = record(data, &vec![scale; cols], &vec![0.0; cols]);
        let (cfg, dat) = write_record(&rec, DataFormat::Ascii).unwrap();
        let back = read_record(cfg.as_bytes(), &dat).unwrap();
        prop_assert_eq!(back.data.dim(), rec.data.dim());
        for (a, b) in rec.data.iter().zip(back.data.iter()) {
            prop_assert!((a - b).abs() <= 1e-4 * a.abs(), "{} vs {}", a, b);
        }
    }

    #[test]
    fn ascii_round_trip_with_offset(data in matrix(), offset in -100.0f64..100.0) {
        let cols = data.ncols();
        let rec = record(data, &vec![1.0; cols], &vec![offset; cols]);
        let (cfg, dat) = write_record(&rec, DataFormat::Ascii).unwrap();
        let back = read_record(cfg.as_bytes(), &dat).unwrap();
        for (a, b) in rec.data.iter().zip(back.data.iter()) {
            // precision is relative to the stored value
            prop_assert!((a - b).abs() <= 1e-4 * (a - offset).abs() + 1e-9);
        }
    }

    #[test]
    fn binary_round_trip_half_scale(data in matrix()) {
        let cols = data.ncols();
        let rec = record(data, &vec![1.0; cols], &vec![0.0; cols]);
        let (cfg, dat) = write_record(&rec, DataFormat::Binary16).unwrap();
        let back = read_record(cfg.as_bytes(), &dat).unwrap();
        prop_assert_eq!(back.data.dim(), rec.data.dim());
        for (c, ch) in back.channels.iter().enumerate() {
            let bound = ch.scale.abs() / 2.0 * (1.0 + 1e-9) + 1e-9;
            for (a, b) in rec.data.column(c).iter().zip(back.data.column(c)) {
                prop_assert!((a - b).abs() <= bound, "ch {}: {} vs {} (scale {})", c, a, b, ch.scale);
            }
        }
    }

    #[test]
    fn parsing_arbitrary_bytes_never_panics(
        cfg in prop::collection::vec(any::<u8>(), 0..400),
        dat in prop::collection::vec(any::<u8>(), 0..400),
    ) {
        let _ = read_record(&cfg, &dat);
    }

    #[test]
    fn mutated_valid_cfg_never_panics(data in matrix(), pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let cols = data.ncols();
        let rec = record(data, &vec![1.0; cols], &vec![0.0; cols]);
        for format in [DataFormat::Ascii, DataFormat::Binary16] {
            let (cfg, mut dat) = write_record(&rec, format).unwrap();
            let mut cfg = cfg.into_bytes();
            let i = pos.index(cfg.len());
            cfg[i] = byte;
            let _ = read_record(&cfg, &dat);
            if !dat.is_empty() {
                let j = pos.index(dat.len());
                dat[j] = byte;
                dat.truncate(j + 1);
            }
            let _ = read_record(&cfg, &dat);
        }
    }

    #[test]
    fn labels_total_and_idempotent(starts in prop::collection::vec(0.0f64..0.9, 0..4), rows in 1usize..2000) {
        let mut events = Vec::new();
        let mut t = 0.0;
        for (k, s) in starts.iter().enumerate() {
            let a = t + s * 0.05;
            let b = a + 0.01 + s * 0.02;
            events.push(ScheduledEvent::new(k as u32 + 1, a, b));
            t = b + 0.001;
        }
        let duration = (rows as f64 / 4800.0).max(t + 0.01);
        let schedule = EventSchedule::new(events, duration).unwrap();
        let rec = record(Array2::zeros((rows, 1)), &[1.0], &[0.0]);
        let first = attach_labels(&rec, &schedule);
        prop_assert_eq!(first.len(), rows);
        prop_assert_eq!(&first, &attach_labels(&rec, &schedule));
        for (i, &l) in first.iter().enumerate() {
            prop_assert_eq!(l, schedule.label_at(i as f64 / 4800.0));
        }
    }
}

#[test]
fn interval_start_is_inclusive() {
    let schedule = EventSchedule::new(
        vec![ScheduledEvent::new(4, 48.0 / 4800.0, 96.0 / 4800.0)],
        1.0,
    )
    .unwrap();
    let rec = record(Array2::zeros((200, 1)), &[1.0], &[0.0]);
    let labels = attach_labels(&rec, &schedule);
    assert_eq!(labels[47], 0);
    assert_eq!(labels[48], 4);
    assert_eq!(labels[96], 4);
    assert_eq!(labels[97], 0);
}
