//! File placement.
//!
//! Each job's `N = k*gamma` subfiles are cut into `k` consecutive batches of
//! `gamma` subfiles. With owners sorted ascending as `o_1..o_k`, batch `t`
//! (1-based) carries the label `o_((t mod k) + 1)`, and every owner stores all
//! batches of the job except the one carrying its own label.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::design::ResolvableDesign;
use crate::error::{CamrError, Result};
use crate::ids::{JobId, ServerId};

/// Batch `B_[label]^(job)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BatchId {
    pub job: JobId,
    pub label: ServerId,
}

#[derive(Debug, Clone)]
pub struct PlacementPlan {
    k: usize,
    gamma: usize,
    jobs: usize,
    servers: usize,
    owners: Vec<Vec<ServerId>>,
    batches: BTreeMap<BatchId, Vec<usize>>,
    server_store: BTreeMap<ServerId, BTreeSet<BatchId>>,
}

pub fn place(design: &ResolvableDesign, gamma: usize) -> Result<PlacementPlan> {
    if gamma == 0 {
        return Err(CamrError::GammaZero);
    }
    let params = design.params();
    let k = params.k();
    let mut owners = Vec::with_capacity(params.jobs());
    let mut batches = BTreeMap::new();
    let mut server_store: BTreeMap<ServerId, BTreeSet<BatchId>> =
        design.servers().map(|s| (s, BTreeSet::new())).collect();

    for job in design.jobs() {
        let job_owners = design.owners_of_job(job)?;
        for t in 1..=k {
            let label = job_owners[t % k];
            let subfiles: Vec<usize> = ((t - 1) * gamma + 1..=t * gamma).collect();
            let id = BatchId { job, label };
            batches.insert(id, subfiles);
            for &owner in &job_owners {
                if owner != label {
                    server_store.get_mut(&owner).expect("owner is a server").insert(id);
                }
            }
        }
        owners.push(job_owners);
    }

    Ok(PlacementPlan {
        k,
        gamma,
        jobs: params.jobs(),
        servers: params.servers(),
        owners,
        batches,
        server_store,
    })
}

impl PlacementPlan {
    pub fn gamma(&self) -> usize {
        self.gamma
    }

    /// Subfiles per job, `N = k*gamma`.
    pub fn subfiles_per_job(&self) -> usize {
        self.k * self.gamma
    }

    pub fn owners(&self, job: JobId) -> Result<&[ServerId]> {
        if job.0 == 0 || job.0 > self.jobs {
            return Err(CamrError::JobOutOfRange { job: job.0, jobs: self.jobs });
        }
        Ok(&self.owners[job.0 - 1])
    }

    pub fn batches(&self) -> &BTreeMap<BatchId, Vec<usize>> {
        &self.batches
    }

    pub fn server_store(&self) -> &BTreeMap<ServerId, BTreeSet<BatchId>> {
        &self.server_store
    }

    pub fn stored_batches(&self, server: ServerId) -> Result<&BTreeSet<BatchId>> {
        self.server_store.get(&server).ok_or(CamrError::ServerOutOfRange {
            server: server.0,
            servers: self.servers,
        })
    }

    /// Subfiles of batch `B_[label]^(job)`.
    pub fn batch_of(&self, job: JobId, label: ServerId) -> Result<&[usize]> {
        self.owners(job)?;
        self.batches
            .get(&BatchId { job, label })
            .map(Vec::as_slice)
            .ok_or(CamrError::NotAnOwner { job, server: label })
    }

    /// Subfiles of `job` held by `server` (empty for non-owners), ascending.
    pub fn stored_subfiles(&self, server: ServerId, job: JobId) -> Result<BTreeSet<usize>> {
        let store = self.stored_batches(server)?;
        let mut out = BTreeSet::new();
        for id in store.range(BatchId { job, label: ServerId(0) }..=BatchId { job, label: ServerId(usize::MAX) }) {
            out.extend(self.batches[id].iter().copied());
        }
        Ok(out)
    }

    /// Fraction of all jobs' data held by each server, as an exact rational.
    /// Fails if servers hold unequal amounts.
    pub fn storage_fraction(&self) -> Result<BigRational> {
        let counts: Vec<usize> = self
            .server_store
            .values()
            .map(|store| store.iter().map(|id| self.batches[id].len()).sum())
            .collect();
        let min = counts.iter().copied().min().unwrap_or(0);
        let max = counts.iter().copied().max().unwrap_or(0);
        if min != max {
            return Err(CamrError::UnequalStorage { min, max });
        }
        let total = self.jobs * self.subfiles_per_job();
        Ok(BigRational::new(BigInt::from(min), BigInt::from(total)))
    }

    pub fn dump(&self) -> PlacementDump {
        let jobs = self
            .owners
            .iter()
            .enumerate()
            .map(|(idx, owners)| {
                let job = JobId(idx + 1);
                let mut batches: Vec<BatchDump> = self
                    .batches
                    .range(BatchId { job, label: ServerId(0) }..=BatchId { job, label: ServerId(usize::MAX) })
                    .map(|(id, subfiles)| BatchDump { label: id.label, subfiles: subfiles.clone() })
                    .collect();
                batches.sort_by_key(|b| b.subfiles[0]);
                JobPlacement { job, owners: owners.clone(), batches }
            })
            .collect();
        let servers = self
            .server_store
            .iter()
            .map(|(&server, store)| ServerPlacement {
                server,
                stored: store.iter().map(|id| (id.job, id.label)).collect(),
            })
            .collect();
        PlacementDump { jobs, servers }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementDump {
    pub jobs: Vec<JobPlacement>,
    pub servers: Vec<ServerPlacement>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobPlacement {
    pub job: JobId,
    pub owners: Vec<ServerId>,
    pub batches: Vec<BatchDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchDump {
    pub label: ServerId,
    pub subfiles: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServerPlacement {
    pub server: ServerId,
    pub stored: Vec<(JobId, ServerId)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, DesignParams};

    fn plan(q: usize, k: usize, gamma: usize) -> (ResolvableDesign, PlacementPlan) {
        let d = build_design(&DesignParams::new(q, k).unwrap());
        let p = place(&d, gamma).unwrap();
        (d, p)
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn job1_batches_match_worked_example() {
        let (_, p) = plan(2, 3, 2);
        assert_eq!(p.batch_of(JobId(1), ServerId(3)).unwrap(), &[1, 2]);
        assert_eq!(p.batch_of(JobId(1), ServerId(5)).unwrap(), &[3, 4]);
        assert_eq!(p.batch_of(JobId(1), ServerId(1)).unwrap(), &[5, 6]);
        assert_eq!(
            p.batch_of(JobId(1), ServerId(2)),
            Err(CamrError::NotAnOwner { job: JobId(1), server: ServerId(2) })
        );
        // B_[3] on U1 and U5, B_[5] on U1 and U3, B_[1] on U3 and U5
        let holders = |label| {
            p.server_store()
                .iter()
                .filter(|(_, st)| st.contains(&BatchId { job: JobId(1), label: ServerId(label) }))
                .map(|(s, _)| s.0)
                .collect::<Vec<_>>()
        };
        assert_eq!(holders(3), vec![1, 5]);
        assert_eq!(holders(5), vec![1, 3]);
        assert_eq!(holders(1), vec![3, 5]);
    }

    #[test]
    fn each_server_stores_four_batches() {
        let (_, p) = plan(2, 3, 2);
        let u1 = p.stored_batches(ServerId(1)).unwrap();
        assert_eq!(u1.len(), 4);
        assert!(u1.iter().all(|b| b.job == JobId(1) || b.job == JobId(2)));
        assert_eq!(
            p.stored_subfiles(ServerId(1), JobId(1)).unwrap().into_iter().collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
        assert!(p.stored_subfiles(ServerId(2), JobId(1)).unwrap().is_empty());
    }

    #[test]
    fn storage_fractions() {
        assert_eq!(plan(2, 3, 2).1.storage_fraction().unwrap(), ratio(1, 3));
        assert_eq!(plan(2, 2, 1).1.storage_fraction().unwrap(), ratio(1, 4));
        assert_eq!(plan(3, 4, 3).1.storage_fraction().unwrap(), ratio(1, 4));
    }

    #[test]
    fn u1_storage_by_enumeration_q3_k4() {
        // direct count from the plan: 9 owned jobs x 3 batches x 3 subfiles
        let (_, p) = plan(3, 4, 3);
        let stored: usize = p
            .stored_batches(ServerId(1))
            .unwrap()
            .iter()
            .map(|b| p.batch_of(b.job, b.label).unwrap().len())
            .sum();
        assert_eq!(stored, 81);
        assert_eq!(81 * 4, 27 * 12);
    }

    #[test]
    fn gamma_zero_rejected() {
        let d = build_design(&DesignParams::new(2, 3).unwrap());
        assert_eq!(place(&d, 0).unwrap_err(), CamrError::GammaZero);
    }

    #[test]
    fn placement_invariants_over_grid() {
        for q in 2..=5 {
            for k in 2..=4 {
                for gamma in 1..=3 {
                    let (d, p) = plan(q, k, gamma);
                    let n = k * gamma;
                    for job in d.jobs() {
                        let owners = d.owners_of_job(job).unwrap();
                        let mut all: Vec<usize> = owners
                            .iter()
                            .flat_map(|&o| p.batch_of(job, o).unwrap().to_vec())
                            .collect();
                        all.sort_unstable();
                        assert_eq!(all, (1..=n).collect::<Vec<_>>());
                        for &o in &owners {
                            let missing: Vec<_> = owners
                                .iter()
                                .filter(|&&l| !p.stored_batches(o).unwrap().contains(&BatchId { job, label: l }))
                                .collect();
                            assert_eq!(missing, vec![&o]);
                        }
                        // any k-1 owners share the batch labeled by the k-th
                        for &excluded in &owners {
                            let id = BatchId { job, label: excluded };
                            for &o in owners.iter().filter(|&&o| o != excluded) {
                                assert!(p.stored_batches(o).unwrap().contains(&id));
                            }
                        }
                    }
                    for (s, store) in p.server_store() {
                        assert_eq!(store.len(), (k - 1) * q.pow(k as u32 - 2));
                        for b in store {
                            assert!(d.owners_of_job(b.job).unwrap().contains(s));
                            assert_ne!(b.label, *s);
                        }
                    }
                    assert_eq!(p.storage_fraction().unwrap(), ratio(k as i64 - 1, (k * q) as i64));
                }
            }
        }
    }

    #[test]
    fn dump_lists_batches_in_subfile_order() {
        let (_, p) = plan(2, 3, 2);
        let v = serde_json::to_value(p.dump()).unwrap();
        assert_eq!(v["jobs"][0]["owners"], serde_json::json!([1, 3, 5]));
        assert_eq!(
            v["jobs"][0]["batches"],
            serde_json::json!([
                {"label": 3, "subfiles": [1, 2]},
                {"label": 5, "subfiles": [3, 4]},
                {"label": 1, "subfiles": [5, 6]}
            ])
        );
        assert_eq!(v["servers"][0]["stored"].as_array().unwrap().len(), 4);
    }
}
