//! Shift-invariant dictionary learning for vibration condition monitoring.
//!
//! Segments are coded against a small dictionary of short atoms with
//! Matching Pursuit or Orthogonal Matching Pursuit, the atoms are adapted by
//! a gradient step on the coding residual, and the evolving dictionary is
//! compared with a baseline to produce health indicators.
//!
//! * [`ingest`]: segment files, RMS gating, standardization, block sampling
//! * [`dictionary`]: atoms, seeded initialization, tail growth, `VDCT` files
//! * [`coding`]: convolutional MP / OMP
//! * [`learning`]: gradient update, baseline training, online propagation
//! * [`metrics`]: coherence, dictionary distance, fidelity, smoothing, MAD
//! * [`detect`]: slope and min-difference indicators, ROC analysis
//! * [`synth`]: synthetic fleets with planted atoms and impulsive faults

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coding;
pub mod detect;
pub mod dictionary;
mod error;
pub mod ingest;
pub mod learning;
pub mod metrics;
pub mod synth;

pub use coding::{Algorithm, AtomInstance, CodingConfig, SparseCode};
pub use dictionary::{Atom, Dictionary};
pub use error::{Error, Result};
pub use ingest::{SegmentFormat, SegmentGate, SignalSegment};
pub use learning::{HistoryRecord, LearnConfig, MonitorState};
pub use metrics::{IndicatorKind, IndicatorSeries};
