//! Map phase, three-stage shuffle and reduce.
//!
//! The shuffle is planned from the design and placement alone, then
//! transmitted (every sender computes its payloads from its own map outputs)
//! and finally delivered (every receiver decodes from its own map outputs and
//! the payloads addressed to it). Tampering with a payload between the last
//! two steps is visible in the reduced output.
//!
//! * Stage 1: the owners `X^(j)` of each job run a coded exchange; `U_k'`
//!   receives the aggregate of batch `B_[k']^(j)` for function `k'`.
//! * Stage 2: every group with one server per class and no common job runs a
//!   coded exchange; `U_k'` receives, for the job `j` jointly owned by the
//!   rest of the group, the batch labeled by the owner of `j` in its own class.
//! * Stage 3: inside each class, the owner of `j` unicasts to every other
//!   member the aggregate of everything it stores of `j`.

pub mod exchange;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::ResolvableDesign;
use crate::error::{CamrError, Result};
use crate::ids::{JobId, ServerId};
use crate::jobs::{aggregate, map_subfile, AggregateValue, Aggregator, JobSpec};
use crate::placement::PlacementPlan;

pub use exchange::{coded_exchange, decode_chunk, encode_group, encode_packet, ChunkSource, CodedPacket, ExchangeOutcome};

/// Map outputs of one server: all `Q` values of every subfile it stores.
#[derive(Debug, Clone)]
pub struct LocalStore {
    server: ServerId,
    width: usize,
    values: BTreeMap<(JobId, usize), Vec<Vec<u8>>>,
}

impl LocalStore {
    pub fn server(&self) -> ServerId {
        self.server
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn holds(&self, job: JobId, subfile: usize) -> bool {
        self.values.contains_key(&(job, subfile))
    }

    /// Aggregate `function` of `job` over `subfiles`, using local values only.
    pub fn aggregate(
        &self,
        agg: &dyn Aggregator,
        function: usize,
        job: JobId,
        subfiles: &BTreeSet<usize>,
    ) -> Result<AggregateValue> {
        let mut bytes = agg.identity(self.width);
        for &n in subfiles {
            let row = self.values.get(&(job, n)).ok_or(CamrError::MissingLocalValue {
                server: self.server,
                job,
                subfile: n,
            })?;
            bytes = agg.combine(&bytes, &row[function - 1]);
        }
        Ok(AggregateValue { function, job, subfiles: subfiles.clone(), bytes })
    }
}

/// Run the map phase: each server maps every subfile it stores. Result is
/// indexed by `server - 1`.
pub fn map_phase(plan: &PlacementPlan, corpus: &[JobSpec], width: usize) -> Result<Vec<LocalStore>> {
    plan.server_store()
        .par_iter()
        .map(|(&server, batches)| {
            let mut values = BTreeMap::new();
            for id in batches {
                let spec = &corpus[id.job.0 - 1];
                for &n in plan.batch_of(id.job, id.label)? {
                    let row = map_subfile(spec, n)?
                        .iter()
                        .map(|v| v.to_aggregate(width).bytes)
                        .collect();
                    values.insert((id.job, n), row);
                }
            }
            Ok(LocalStore { server, width, values })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Stage {
    OwnerGroups = 1,
    CrossGroups = 2,
    IntraClass = 3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::OwnerGroups, Stage::CrossGroups, Stage::IntraClass];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Stage::OwnerGroups),
            2 => Ok(Stage::CrossGroups),
            3 => Ok(Stage::IntraClass),
            other => Err(format!("no stage {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionKind {
    CodedMulticast,
    UncodedUnicast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionMeta {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub job: Option<JobId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group: Option<Vec<ServerId>>,
}

/// One line of the transmission log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub stage: Stage,
    pub kind: TransmissionKind,
    pub sender: ServerId,
    pub receivers: Vec<ServerId>,
    pub bits: u64,
    pub meta: TransmissionMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub record: TransmissionRecord,
    pub payload: Vec<u8>,
}

/// What a receiver is owed: function `function` of `job` over `subfiles`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkDemand {
    pub receiver: ServerId,
    pub function: usize,
    pub job: JobId,
    pub subfiles: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Coded exchange; `demands[i]` belongs to `group[i]`.
    Exchange {
        stage: Stage,
        group: Vec<ServerId>,
        demands: Vec<ChunkDemand>,
        meta: TransmissionMeta,
    },
    Unicast {
        stage: Stage,
        sender: ServerId,
        demand: ChunkDemand,
        meta: TransmissionMeta,
    },
}

impl Step {
    pub fn stage(&self) -> Stage {
        match self {
            Step::Exchange { stage, .. } | Step::Unicast { stage, .. } => *stage,
        }
    }
}

/// Whether stages 1 and 2 use coded multicast or plain unicasts of each chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    #[default]
    Coded,
    Uncoded,
}

fn batch_set(plan: &PlacementPlan, job: JobId, label: ServerId) -> Result<BTreeSet<usize>> {
    Ok(plan.batch_of(job, label)?.iter().copied().collect())
}

/// Stage 1 steps, one exchange per job.
pub fn plan_stage1(design: &ResolvableDesign, plan: &PlacementPlan) -> Result<Vec<Step>> {
    design
        .jobs()
        .map(|job| {
            let group = design.owners_of_job(job)?;
            let demands = group
                .iter()
                .map(|&owner| {
                    Ok(ChunkDemand {
                        receiver: owner,
                        function: owner.function(),
                        job,
                        subfiles: batch_set(plan, job, owner)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Step::Exchange {
                stage: Stage::OwnerGroups,
                group,
                demands,
                meta: TransmissionMeta { job: Some(job), group: None },
            })
        })
        .collect()
}

/// Stage 2 steps, one exchange per empty-intersection group.
pub fn plan_stage2(design: &ResolvableDesign, plan: &PlacementPlan) -> Result<Vec<Step>> {
    design
        .enumerate_stage2_groups()
        .into_iter()
        .map(|group| {
            let demands = group
                .iter()
                .map(|&member| {
                    let rest: Vec<ServerId> = group.iter().copied().filter(|&s| s != member).collect();
                    let common = design.intersect_blocks(&rest)?;
                    let job = match common.iter().next() {
                        Some(&j) if common.len() == 1 => j,
                        _ => return Err(CamrError::NotSingleton { servers: rest, found: common.len() }),
                    };
                    let class_mate = design.owner_in_class(job, design.class_of(member)?)?;
                    if class_mate == member {
                        return Err(CamrError::ClassMateMissing { job, server: member });
                    }
                    Ok(ChunkDemand {
                        receiver: member,
                        function: member.function(),
                        job,
                        subfiles: batch_set(plan, job, class_mate)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Step::Exchange {
                stage: Stage::CrossGroups,
                meta: TransmissionMeta { job: None, group: Some(group.clone()) },
                group,
                demands,
            })
        })
        .collect()
}

/// Stage 3 steps, ordered by (class, receiver, sender, job).
pub fn plan_stage3(design: &ResolvableDesign, plan: &PlacementPlan) -> Result<Vec<Step>> {
    let mut steps = Vec::new();
    for class in design.classes() {
        for &receiver in &class {
            for &sender in class.iter().filter(|&&s| s != receiver) {
                for &job in &design.block(sender)?.points {
                    steps.push(Step::Unicast {
                        stage: Stage::IntraClass,
                        sender,
                        demand: ChunkDemand {
                            receiver,
                            function: receiver.function(),
                            job,
                            subfiles: plan.stored_subfiles(sender, job)?,
                        },
                        meta: TransmissionMeta { job: Some(job), group: None },
                    });
                }
            }
        }
    }
    Ok(steps)
}

/// The full schedule, stages in order.
pub fn plan_shuffle(design: &ResolvableDesign, plan: &PlacementPlan) -> Result<Vec<Step>> {
    let mut steps = plan_stage1(design, plan)?;
    steps.extend(plan_stage2(design, plan)?);
    steps.extend(plan_stage3(design, plan)?);
    Ok(steps)
}

fn store_of(stores: &[LocalStore], server: ServerId) -> Result<&LocalStore> {
    stores.get(server.0.wrapping_sub(1)).ok_or(CamrError::ServerOutOfRange {
        server: server.0,
        servers: stores.len(),
    })
}

/// Chunk source backed by per-server map outputs.
struct StoreSource<'a> {
    stores: &'a [LocalStore],
    agg: &'a dyn Aggregator,
    group: &'a [ServerId],
    demands: &'a [ChunkDemand],
}

impl ChunkSource for StoreSource<'_> {
    fn chunk(&self, holder: ServerId, missing: ServerId) -> Result<Vec<u8>> {
        let idx = self.group.iter().position(|&s| s == missing).ok_or(CamrError::MissingDemand(missing))?;
        let d = self.demands.get(idx).ok_or(CamrError::MissingDemand(missing))?;
        Ok(store_of(self.stores, holder)?.aggregate(self.agg, d.function, d.job, &d.subfiles)?.bytes)
    }
}

fn unicast_record(stage: Stage, sender: ServerId, receiver: ServerId, width: usize, meta: &TransmissionMeta) -> TransmissionRecord {
    TransmissionRecord {
        stage,
        kind: TransmissionKind::UncodedUnicast,
        sender,
        receivers: vec![receiver],
        bits: 8 * width as u64,
        meta: meta.clone(),
    }
}

/// Uncoded stand-in for an exchange: the smallest other member sends the chunk whole.
fn uncoded_sender(group: &[ServerId], receiver: ServerId) -> ServerId {
    *group.iter().find(|&&s| s != receiver).expect("group has at least two members")
}

fn transmit_step(step: &Step, stores: &[LocalStore], agg: &dyn Aggregator, coding: Coding) -> Result<Vec<Transmission>> {
    let width = stores.first().map_or(0, LocalStore::width);
    match step {
        Step::Exchange { stage, group, demands, meta } => {
            if demands.len() != group.len() {
                return Err(CamrError::MissingDemand(group[demands.len().min(group.len() - 1)]));
            }
            let source = StoreSource { stores, agg, group, demands };
            match coding {
                Coding::Coded => {
                    let kind = if group.len() > 2 {
                        TransmissionKind::CodedMulticast
                    } else {
                        TransmissionKind::UncodedUnicast
                    };
                    Ok(encode_group(group, width, &source)?
                        .into_iter()
                        .map(|p| Transmission {
                            record: TransmissionRecord {
                                stage: *stage,
                                kind,
                                sender: p.sender,
                                receivers: group.iter().copied().filter(|&s| s != p.sender).collect(),
                                bits: 8 * p.payload.len() as u64,
                                meta: meta.clone(),
                            },
                            payload: p.payload,
                        })
                        .collect())
                }
                Coding::Uncoded => group
                    .iter()
                    .map(|&receiver| {
                        let sender = uncoded_sender(group, receiver);
                        Ok(Transmission {
                            record: unicast_record(*stage, sender, receiver, width, meta),
                            payload: source.chunk(sender, receiver)?,
                        })
                    })
                    .collect(),
            }
        }
        Step::Unicast { stage, sender, demand, meta } => {
            let value = store_of(stores, *sender)?.aggregate(agg, demand.function, demand.job, &demand.subfiles)?;
            Ok(vec![Transmission {
                record: unicast_record(*stage, *sender, demand.receiver, width, meta),
                payload: value.bytes,
            }])
        }
    }
}

/// Compute every payload. Output is aligned with `steps`.
pub fn transmit(
    steps: &[Step],
    stores: &[LocalStore],
    agg: &dyn Aggregator,
    coding: Coding,
) -> Result<Vec<Vec<Transmission>>> {
    steps.par_iter().map(|s| transmit_step(s, stores, agg, coding)).collect()
}

/// Values a server decoded from the shuffle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerInbox {
    pub server: ServerId,
    pub values: Vec<(Stage, AggregateValue)>,
}

impl ServerInbox {
    pub fn for_job(&self, job: JobId) -> impl Iterator<Item = &AggregateValue> {
        self.values.iter().filter(move |(_, v)| v.job == job).map(|(_, v)| v)
    }
}

fn with_stage(err: CamrError, stage: Stage) -> CamrError {
    match err {
        CamrError::MissingTransmission { sender, receiver, .. } => {
            CamrError::MissingTransmission { stage: stage.number(), sender, receiver }
        }
        other => other,
    }
}

fn receive_step(
    receiver: ServerId,
    step: &Step,
    sent: &[Transmission],
    stores: &[LocalStore],
    agg: &dyn Aggregator,
    coding: Coding,
) -> Result<Option<AggregateValue>> {
    let width = store_of(stores, receiver)?.width();
    let (demand, payload) = match step {
        Step::Exchange { stage, group, demands, .. } => {
            let Some(idx) = group.iter().position(|&s| s == receiver) else {
                return Ok(None);
            };
            let demand = &demands[idx];
            let payload = match coding {
                Coding::Coded => {
                    let packets: Vec<CodedPacket> = sent
                        .iter()
                        .filter(|t| t.record.receivers.contains(&receiver))
                        .map(|t| CodedPacket {
                            sender: t.record.sender,
                            group: group.clone(),
                            payload: t.payload.clone(),
                        })
                        .collect();
                    let source = StoreSource { stores, agg, group, demands };
                    // the receiver only ever asks its own store
                    let own = |holder: ServerId, missing: ServerId| {
                        if holder != receiver {
                            return Err(CamrError::MissingLocalValue { server: holder, job: demand.job, subfile: 0 });
                        }
                        source.chunk(holder, missing)
                    };
                    decode_chunk(group, receiver, &packets, width, &own).map_err(|e| with_stage(e, *stage))?
                }
                Coding::Uncoded => {
                    let sender = uncoded_sender(group, receiver);
                    sent.iter()
                        .find(|t| t.record.receivers == [receiver])
                        .map(|t| t.payload.clone())
                        .ok_or(CamrError::MissingTransmission { stage: stage.number(), sender, receiver })?
                }
            };
            (demand, payload)
        }
        Step::Unicast { stage, sender, demand, .. } => {
            if demand.receiver != receiver {
                return Ok(None);
            }
            let payload = sent
                .iter()
                .find(|t| t.record.receivers == [receiver])
                .map(|t| t.payload.clone())
                .ok_or(CamrError::MissingTransmission { stage: stage.number(), sender: *sender, receiver })?;
            (demand, payload)
        }
    };
    if payload.len() != width {
        return Err(CamrError::WidthMismatch { expected: width, actual: payload.len() });
    }
    Ok(Some(AggregateValue {
        function: demand.function,
        job: demand.job,
        subfiles: demand.subfiles.clone(),
        bytes: payload,
    }))
}

/// Every server decodes what was addressed to it. Result is indexed by `server - 1`.
pub fn deliver(
    steps: &[Step],
    transmissions: &[Vec<Transmission>],
    stores: &[LocalStore],
    agg: &dyn Aggregator,
    coding: Coding,
) -> Result<Vec<ServerInbox>> {
    stores
        .par_iter()
        .map(|store| {
            let server = store.server();
            let mut values = Vec::new();
            for (step, sent) in steps.iter().zip(transmissions) {
                if let Some(v) = receive_step(server, step, sent, stores, agg, coding)? {
                    values.push((step.stage(), v));
                }
            }
            Ok(ServerInbox { server, values })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ShuffleOutcome {
    pub steps: Vec<Step>,
    pub transmissions: Vec<Vec<Transmission>>,
    pub inboxes: Vec<ServerInbox>,
}

impl ShuffleOutcome {
    /// Canonically ordered transmission log.
    pub fn log(&self) -> Vec<TransmissionRecord> {
        self.transmissions.iter().flatten().map(|t| t.record.clone()).collect()
    }
}

fn run_steps(steps: Vec<Step>, stores: &[LocalStore], agg: &dyn Aggregator, coding: Coding) -> Result<ShuffleOutcome> {
    let transmissions = transmit(&steps, stores, agg, coding)?;
    let inboxes = deliver(&steps, &transmissions, stores, agg, coding)?;
    Ok(ShuffleOutcome { steps, transmissions, inboxes })
}

pub fn stage1(design: &ResolvableDesign, plan: &PlacementPlan, stores: &[LocalStore], agg: &dyn Aggregator) -> Result<ShuffleOutcome> {
    run_steps(plan_stage1(design, plan)?, stores, agg, Coding::Coded)
}

pub fn stage2(design: &ResolvableDesign, plan: &PlacementPlan, stores: &[LocalStore], agg: &dyn Aggregator) -> Result<ShuffleOutcome> {
    run_steps(plan_stage2(design, plan)?, stores, agg, Coding::Coded)
}

pub fn stage3(design: &ResolvableDesign, plan: &PlacementPlan, stores: &[LocalStore], agg: &dyn Aggregator) -> Result<ShuffleOutcome> {
    run_steps(plan_stage3(design, plan)?, stores, agg, Coding::Coded)
}

/// All three stages.
pub fn run_shuffle(
    design: &ResolvableDesign,
    plan: &PlacementPlan,
    stores: &[LocalStore],
    agg: &dyn Aggregator,
    coding: Coding,
) -> Result<ShuffleOutcome> {
    run_steps(plan_shuffle(design, plan)?, stores, agg, coding)
}

/// Reduce phase: `U_k` folds its local values of function `k` with its inbox
/// for every job. Fails if the held subfile sets do not partition `1..=N`.
pub fn reduce(
    design: &ResolvableDesign,
    plan: &PlacementPlan,
    stores: &[LocalStore],
    inboxes: &[ServerInbox],
    agg: &dyn Aggregator,
) -> Result<BTreeMap<(usize, JobId), AggregateValue>> {
    let n = plan.subfiles_per_job();
    let per_server: Vec<Vec<((usize, JobId), AggregateValue)>> = inboxes
        .par_iter()
        .map(|inbox| {
            let server = inbox.server;
            let function = server.function();
            let store = store_of(stores, server)?;
            design
                .jobs()
                .map(|job| {
                    let mut parts = Vec::new();
                    let local = plan.stored_subfiles(server, job)?;
                    if !local.is_empty() {
                        parts.push(store.aggregate(agg, function, job, &local)?);
                    }
                    parts.extend(inbox.for_job(job).filter(|v| v.function == function).cloned());
                    let value = aggregate(agg, &parts).map_err(|e| match e {
                        CamrError::EmptyAggregate | CamrError::OverlappingSubfiles { .. } => {
                            CamrError::IncompleteCoverage { server, job, subfiles: n }
                        }
                        other => other,
                    })?;
                    if value.subfiles.len() != n || value.subfiles.iter().copied().ne(1..=n) {
                        return Err(CamrError::IncompleteCoverage { server, job, subfiles: n });
                    }
                    Ok(((function, job), value))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_server.into_iter().flatten().collect())
}
