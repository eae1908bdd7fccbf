//! End-to-end pipeline: corpus, placement, map, shuffle, reduce, oracle check,
//! load reconciliation.

use std::collections::BTreeMap;

use crate::analysis::{reconcile, LoadReport, RunParams};
use crate::design::{build_design, DesignParams, ResolvableDesign};
use crate::error::Result;
use crate::ids::JobId;
use crate::jobs::{generate_corpus, oracle_reduce, AggregateValue, AggregatorKind, CorpusConfig, JobSpec};
use crate::placement::{place, PlacementPlan};
use crate::shuffle::{map_phase, reduce, run_shuffle, Coding, LocalStore, ShuffleOutcome};

/// Default value width: 8 bytes, rounded up to a multiple of `k-1`.
pub fn default_value_bytes(k: usize) -> usize {
    let parts = k.saturating_sub(1).max(1);
    8usize.div_ceil(parts) * parts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub q: usize,
    pub k: usize,
    pub gamma: usize,
    pub value_bytes: usize,
    pub seed: u64,
    pub aggregator: AggregatorKind,
}

impl SimConfig {
    pub fn new(q: usize, k: usize, gamma: usize) -> Self {
        Self {
            q,
            k,
            gamma,
            value_bytes: default_value_bytes(k),
            seed: 0,
            aggregator: AggregatorKind::Sum,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_value_bytes(mut self, value_bytes: usize) -> Self {
        self.value_bytes = value_bytes;
        self
    }
}

/// Pipeline stage, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Design,
    Corpus,
    Placement,
    Map,
    Shuffle,
    Reduce,
    Oracle,
    Reconcile,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Design => "design",
            Phase::Corpus => "corpus",
            Phase::Placement => "placement",
            Phase::Map => "map",
            Phase::Shuffle => "shuffle",
            Phase::Reduce => "reduce",
            Phase::Oracle => "oracle",
            Phase::Reconcile => "reconcile",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{phase} phase failed")]
pub struct SimError {
    pub phase: Phase,
    #[source]
    pub source: crate::error::CamrError,
}

trait AtPhase<T> {
    fn at(self, phase: Phase) -> std::result::Result<T, SimError>;
}

impl<T> AtPhase<T> for Result<T> {
    fn at(self, phase: Phase) -> std::result::Result<T, SimError> {
        self.map_err(|source| SimError { phase, source })
    }
}

pub struct Simulation {
    pub config: SimConfig,
    pub design: ResolvableDesign,
    pub plan: PlacementPlan,
    pub corpus: Vec<JobSpec>,
    pub stores: Vec<LocalStore>,
    pub shuffle: ShuffleOutcome,
    pub reduced: BTreeMap<(usize, JobId), AggregateValue>,
    pub oracle: BTreeMap<(usize, JobId), AggregateValue>,
    pub report: LoadReport,
}

impl Simulation {
    pub fn correct(&self) -> bool {
        self.report.correct
    }
}

/// Run the coded pipeline. Reduce output differing from the oracle is
/// reported through `report.correct`; every other failure is an error.
pub fn simulate(config: &SimConfig) -> std::result::Result<Simulation, SimError> {
    let params = DesignParams::new(config.q, config.k).at(Phase::Design)?;
    let design = build_design(&params);
    design.validate().at(Phase::Design)?;
    let corpus_cfg = CorpusConfig::new(config.seed, config.value_bytes);
    let corpus = generate_corpus(&corpus_cfg, &params, config.gamma).at(Phase::Corpus)?;
    let plan = place(&design, config.gamma).at(Phase::Placement)?;
    let storage_fraction = plan.storage_fraction().at(Phase::Placement)?;
    let stores = map_phase(&plan, &corpus, config.value_bytes).at(Phase::Map)?;
    let agg = config.aggregator.aggregator();
    let shuffle = run_shuffle(&design, &plan, &stores, agg, Coding::Coded).at(Phase::Shuffle)?;
    let reduced = reduce(&design, &plan, &stores, &shuffle.inboxes, agg).at(Phase::Reduce)?;
    let oracle = oracle_reduce(&corpus, agg, config.value_bytes).at(Phase::Oracle)?;
    let correct = reduced == oracle;
    let run = RunParams {
        params,
        gamma: config.gamma,
        value_bytes: config.value_bytes,
        seed: config.seed,
    };
    let report = reconcile(&shuffle.log(), &run, storage_fraction, correct).at(Phase::Reconcile)?;
    Ok(Simulation {
        config: *config,
        design,
        plan,
        corpus,
        stores,
        shuffle,
        reduced,
        oracle,
        report,
    })
}
