//! Simulator for coded aggregated MapReduce.
//!
//! Jobs are points of a resolvable design built from a single-parity-check
//! code, servers are its blocks. The crate places each job's data on its `k`
//! owners, runs a word-count map phase, executes the three-stage coded shuffle
//! with real XOR payloads, reduces, and checks the result against a
//! centralized oracle. Shuffle loads are accounted in exact rationals and
//! reconciled with their closed forms.

pub mod analysis;
pub mod design;
pub mod error;
pub mod ids;
pub mod jobs;
pub mod placement;
pub mod shuffle;
pub mod simulate;

/// Big-number types used in reports.
pub mod num {
    pub use num_bigint::{BigInt, BigUint};
    pub use num_rational::BigRational;
}

pub use analysis::{camr_loads, ccdc_load, fmt_ratio, min_jobs, reconcile, uncoded_baseline_load, LoadReport};
pub use design::{build_design, build_spc_matrix, DesignParams, ResolvableDesign};
pub use error::{CamrError, Result};
pub use ids::{JobId, ServerId};
pub use jobs::{Aggregator, AggregatorKind};
pub use placement::{place, BatchId, PlacementPlan};
pub use shuffle::{run_shuffle, Coding, Stage, TransmissionRecord};
pub use simulate::{simulate, SimConfig, Simulation};
