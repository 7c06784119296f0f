//! Fault and cyber-attack classification for three-phase substation
//! waveforms, with a streaming decision layer that abstains when unsure.

pub mod classifiers;
pub mod comtrade;
pub mod dataset;
pub mod event_sim;
pub mod metrics;
pub mod schedule;
pub mod stream;
