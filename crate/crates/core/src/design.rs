//! Resolvable designs built from the `(k, k-1)` single-parity-check code over `Z_q`.
//!
//! Points are the `q^(k-1)` codewords (one per job), listed in lexicographic
//! order of their message vectors. Block `B_{i,l}` collects the codewords whose
//! `i`-th coordinate equals `l`; the `q` blocks sharing a coordinate form
//! parallel class `P_i`. Server `U_s` is bound to block
//! `B_{ceil(s/q), (s-1) mod q}`.
//!
//! Arithmetic is plain integer arithmetic modulo `q`; `q` need not be prime.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CamrError, Result};
use crate::ids::{JobId, ServerId};

/// Default upper bound on `q^(k-1)`.
pub const DEFAULT_MAX_JOBS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignParams {
    q: usize,
    k: usize,
    jobs: usize,
}

impl DesignParams {
    pub fn new(q: usize, k: usize) -> Result<Self> {
        Self::with_ceiling(q, k, DEFAULT_MAX_JOBS)
    }

    pub fn with_ceiling(q: usize, k: usize, max_jobs: usize) -> Result<Self> {
        if q < 2 {
            return Err(CamrError::AlphabetTooSmall(q));
        }
        if k < 2 {
            return Err(CamrError::LengthTooSmall(k));
        }
        let too_many = || CamrError::TooManyJobs {
            jobs: format!("{q}^{}", k - 1),
            ceiling: max_jobs,
        };
        let exp = u32::try_from(k - 1).map_err(|_| too_many())?;
        let jobs = q.checked_pow(exp).ok_or_else(too_many)?;
        if jobs > max_jobs {
            return Err(CamrError::TooManyJobs {
                jobs: jobs.to_string(),
                ceiling: max_jobs,
            });
        }
        // K = k*q must also fit; it always does when q^(k-1) does for q,k >= 2.
        Ok(Self { q, k, jobs })
    }

    /// Alphabet size, also the number of blocks per parallel class.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Code length, also the number of parallel classes.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of servers `K = k*q`.
    pub fn servers(&self) -> usize {
        self.k * self.q
    }

    /// Number of jobs (points) `J = q^(k-1)`.
    pub fn jobs(&self) -> usize {
        self.jobs
    }

    /// Jobs per block, `q^(k-2)`.
    pub fn block_size(&self) -> usize {
        self.jobs / self.q
    }
}

/// The `k x q^(k-1)` matrix whose columns are the SPC codewords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodewordMatrix {
    q: usize,
    rows: Vec<Vec<usize>>,
}

impl CodewordMatrix {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Entry `T[row][column]`, both zero-based.
    pub fn entry(&self, row: usize, column: usize) -> usize {
        self.rows[row][column]
    }

    pub fn row(&self, row: usize) -> &[usize] {
        &self.rows[row]
    }

    /// Codeword `c_j` as a vector of symbols, `column` zero-based.
    pub fn column(&self, column: usize) -> Vec<usize> {
        self.rows.iter().map(|r| r[column]).collect()
    }
}

/// Enumerate the SPC codewords: message vectors `u` in lexicographic order
/// (last coordinate fastest), `c = (u, sum(u) mod q)`.
pub fn build_spc_matrix(params: &DesignParams) -> CodewordMatrix {
    let (q, k, jobs) = (params.q, params.k, params.jobs);
    let mut rows = vec![Vec::with_capacity(jobs); k];
    let mut message = vec![0usize; k - 1];
    for _ in 0..jobs {
        let mut parity = 0;
        for (row, &symbol) in rows.iter_mut().zip(&message) {
            row.push(symbol);
            parity = (parity + symbol) % q;
        }
        rows[k - 1].push(parity);
        // odometer increment, last coordinate fastest
        for digit in message.iter_mut().rev() {
            *digit += 1;
            if *digit < q {
                break;
            }
            *digit = 0;
        }
    }
    CodewordMatrix { q, rows }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub server: ServerId,
    /// Parallel class `i`, `1..=k`.
    pub class: usize,
    /// Symbol `l`, `0..q`.
    pub symbol: usize,
    /// Sorted point ids `{ j : T[i][j] = l }`.
    pub points: Vec<JobId>,
}

impl Block {
    pub fn contains(&self, job: JobId) -> bool {
        self.points.binary_search(&job).is_ok()
    }
}

#[derive(Debug, Clone)]
pub struct ResolvableDesign {
    params: DesignParams,
    matrix: CodewordMatrix,
    blocks: Vec<Block>,
}

pub fn build_design(params: &DesignParams) -> ResolvableDesign {
    let matrix = build_spc_matrix(params);
    let q = params.q;
    let mut blocks = Vec::with_capacity(params.servers());
    for class in 1..=params.k {
        let row = matrix.row(class - 1);
        for symbol in 0..q {
            let points = row
                .iter()
                .enumerate()
                .filter(|&(_, &s)| s == symbol)
                .map(|(j, _)| JobId(j + 1))
                .collect();
            blocks.push(Block {
                server: ServerId((class - 1) * q + symbol + 1),
                class,
                symbol,
                points,
            });
        }
    }
    ResolvableDesign {
        params: *params,
        matrix,
        blocks,
    }
}

impl ResolvableDesign {
    pub fn params(&self) -> &DesignParams {
        &self.params
    }

    pub fn matrix(&self) -> &CodewordMatrix {
        &self.matrix
    }

    /// All `k*q` blocks, ordered by server id.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn servers(&self) -> impl Iterator<Item = ServerId> + '_ {
        (1..=self.params.servers()).map(ServerId)
    }

    pub fn jobs(&self) -> impl Iterator<Item = JobId> + '_ {
        (1..=self.params.jobs).map(JobId)
    }

    pub fn check_server(&self, server: ServerId) -> Result<()> {
        if server.0 == 0 || server.0 > self.params.servers() {
            return Err(CamrError::ServerOutOfRange {
                server: server.0,
                servers: self.params.servers(),
            });
        }
        Ok(())
    }

    pub fn check_job(&self, job: JobId) -> Result<()> {
        if job.0 == 0 || job.0 > self.params.jobs {
            return Err(CamrError::JobOutOfRange {
                job: job.0,
                jobs: self.params.jobs,
            });
        }
        Ok(())
    }

    pub fn block(&self, server: ServerId) -> Result<&Block> {
        self.check_server(server)?;
        Ok(&self.blocks[server.0 - 1])
    }

    /// Parallel class of a server, `ceil(s/q)`.
    pub fn class_of(&self, server: ServerId) -> Result<usize> {
        Ok(self.block(server)?.class)
    }

    /// Server bound to `B_{class, symbol}`.
    pub fn server_at(&self, class: usize, symbol: usize) -> ServerId {
        debug_assert!((1..=self.params.k).contains(&class) && symbol < self.params.q);
        ServerId((class - 1) * self.params.q + symbol + 1)
    }

    /// Servers of parallel class `class`, ascending.
    pub fn class_members(&self, class: usize) -> Vec<ServerId> {
        (0..self.params.q).map(|l| self.server_at(class, l)).collect()
    }

    /// The `k` parallel classes as lists of server ids.
    pub fn classes(&self) -> Vec<Vec<ServerId>> {
        (1..=self.params.k).map(|c| self.class_members(c)).collect()
    }

    /// Owner set `X^(j)`: one server per class, ascending.
    pub fn owners_of_job(&self, job: JobId) -> Result<Vec<ServerId>> {
        self.check_job(job)?;
        Ok((1..=self.params.k)
            .map(|class| self.server_at(class, self.matrix.entry(class - 1, job.0 - 1)))
            .collect())
    }

    /// Owner of `job` within parallel class `class`.
    pub fn owner_in_class(&self, job: JobId, class: usize) -> Result<ServerId> {
        self.check_job(job)?;
        Ok(self.server_at(class, self.matrix.entry(class - 1, job.0 - 1)))
    }

    /// Intersection of the blocks of servers drawn from distinct parallel classes.
    pub fn intersect_blocks(&self, servers: &[ServerId]) -> Result<BTreeSet<JobId>> {
        let mut seen: Vec<Option<ServerId>> = vec![None; self.params.k];
        for &s in servers {
            let class = self.class_of(s)?;
            if let Some(other) = seen[class - 1] {
                return Err(CamrError::SameClass { a: other, b: s, class });
            }
            seen[class - 1] = Some(s);
        }
        let Some((&first, rest)) = servers.split_first() else {
            return Ok(self.jobs().collect());
        };
        let mut acc: BTreeSet<JobId> = self.block(first)?.points.iter().copied().collect();
        for &s in rest {
            let block = self.block(s)?;
            acc.retain(|&j| block.contains(j));
        }
        Ok(acc)
    }

    /// Stage-2 groups: one server per class (class order), whose blocks share no
    /// point. Equivalently the symbol tuples violating the parity relation,
    /// enumerated lexicographically.
    pub fn enumerate_stage2_groups(&self) -> Vec<Vec<ServerId>> {
        let (q, k) = (self.params.q, self.params.k);
        let mut groups = Vec::with_capacity(self.params.jobs * (q - 1));
        let mut tuple = vec![0usize; k];
        loop {
            let head_sum = tuple[..k - 1].iter().sum::<usize>() % q;
            if head_sum != tuple[k - 1] {
                groups.push(
                    tuple
                        .iter()
                        .enumerate()
                        .map(|(i, &l)| self.server_at(i + 1, l))
                        .collect(),
                );
            }
            let mut pos = k;
            loop {
                if pos == 0 {
                    return groups;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < q {
                    break;
                }
                tuple[pos] = 0;
            }
        }
    }

    /// Check the resolvable-design invariants.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let fail = |msg: String| Err(CamrError::DesignInvariant(msg));
        if self.blocks.len() != p.servers() {
            return fail(format!("{} blocks, expected {}", self.blocks.len(), p.servers()));
        }
        for class in 1..=p.k {
            let mut covered = vec![false; p.jobs];
            for s in self.class_members(class) {
                let block = self.block(s)?;
                if block.points.len() != p.block_size() {
                    return fail(format!(
                        "block of {s} has {} points, expected {}",
                        block.points.len(),
                        p.block_size()
                    ));
                }
                for j in &block.points {
                    if std::mem::replace(&mut covered[j.0 - 1], true) {
                        return fail(format!("point {} repeated in class {class}", j.0));
                    }
                }
            }
            if covered.iter().any(|c| !c) {
                return fail(format!("class {class} does not cover every point"));
            }
        }
        for job in self.jobs() {
            let owners = self.owners_of_job(job)?;
            for (class, &owner) in owners.iter().enumerate() {
                if !self.block(owner)?.contains(job) || self.class_of(owner)? != class + 1 {
                    return fail(format!("owner {owner} of {job} is inconsistent"));
                }
            }
        }
        Ok(())
    }

    pub fn dump(&self) -> DesignDump {
        DesignDump {
            q: self.params.q,
            k: self.params.k,
            servers: self.params.servers(),
            jobs: self.params.jobs,
            blocks: self.blocks.clone(),
            classes: self.classes(),
        }
    }
}

/// JSON layout of the design dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignDump {
    pub q: usize,
    pub k: usize,
    #[serde(rename = "K")]
    pub servers: usize,
    #[serde(rename = "J")]
    pub jobs: usize,
    pub blocks: Vec<Block>,
    pub classes: Vec<Vec<ServerId>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(q: usize, k: usize) -> ResolvableDesign {
        build_design(&DesignParams::new(q, k).unwrap())
    }

    fn ids(v: &[usize]) -> Vec<ServerId> {
        v.iter().map(|&s| ServerId(s)).collect()
    }

    /// All tuples of `Z_q^k` satisfying the parity relation, by brute force.
    fn brute_force_codewords(q: usize, k: usize) -> Vec<Vec<usize>> {
        let total = q.pow(k as u32);
        (0..total)
            .map(|mut x| {
                let mut t = vec![0; k];
                for slot in t.iter_mut().rev() {
                    *slot = x % q;
                    x /= q;
                }
                t
            })
            .filter(|t| t[..k - 1].iter().sum::<usize>() % q == t[k - 1])
            .collect()
    }

    #[test]
    fn rejects_bad_params() {
        assert_eq!(DesignParams::new(1, 3), Err(CamrError::AlphabetTooSmall(1)));
        assert_eq!(DesignParams::new(2, 1), Err(CamrError::LengthTooSmall(1)));
        assert!(matches!(
            DesignParams::with_ceiling(10, 5, 1000),
            Err(CamrError::TooManyJobs { .. })
        ));
        assert!(matches!(
            DesignParams::new(usize::MAX, 4),
            Err(CamrError::TooManyJobs { .. })
        ));
    }

    #[test]
    fn spc_matrix_q2_k3() {
        let m = build_spc_matrix(&DesignParams::new(2, 3).unwrap());
        let cols: Vec<_> = (0..m.num_columns()).map(|c| m.column(c)).collect();
        assert_eq!(cols, vec![vec![0, 0, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]]);
    }

    #[test]
    fn spc_matrix_q2_k2() {
        let m = build_spc_matrix(&DesignParams::new(2, 2).unwrap());
        assert_eq!(m.column(0), vec![0, 0]);
        assert_eq!(m.column(1), vec![1, 1]);
    }

    #[test]
    fn spc_matrix_matches_brute_force() {
        for (q, k) in [(3, 3), (4, 3), (3, 4), (6, 2), (2, 5)] {
            let m = build_spc_matrix(&DesignParams::new(q, k).unwrap());
            let cols: Vec<_> = (0..m.num_columns()).map(|c| m.column(c)).collect();
            assert_eq!(cols, brute_force_codewords(q, k), "q={q} k={k}");
        }
    }

    #[test]
    fn owner_sets_q2_k3() {
        let d = design(2, 3);
        assert_eq!(d.owners_of_job(JobId(1)).unwrap(), ids(&[1, 3, 5]));
        assert_eq!(d.owners_of_job(JobId(2)).unwrap(), ids(&[1, 4, 6]));
        assert_eq!(d.owners_of_job(JobId(3)).unwrap(), ids(&[2, 3, 6]));
        assert_eq!(d.owners_of_job(JobId(4)).unwrap(), ids(&[2, 4, 5]));
        assert_eq!(d.block(ServerId(1)).unwrap().points, vec![JobId(1), JobId(2)]);
        assert_eq!(d.block(ServerId(3)).unwrap().points, vec![JobId(1), JobId(3)]);
        assert_eq!(d.block(ServerId(5)).unwrap().points, vec![JobId(1), JobId(4)]);
        assert!(matches!(
            d.owners_of_job(JobId(5)),
            Err(CamrError::JobOutOfRange { job: 5, jobs: 4 })
        ));
        assert!(d.owners_of_job(JobId(0)).is_err());
    }

    #[test]
    fn k2_blocks_are_singletons() {
        let d = design(2, 2);
        assert_eq!(d.blocks().len(), 4);
        assert!(d.blocks().iter().all(|b| b.points.len() == 1));
        assert_eq!(d.classes(), vec![ids(&[1, 2]), ids(&[3, 4])]);
        d.validate().unwrap();
    }

    #[test]
    fn q3_k3_partitions() {
        let d = design(3, 3);
        assert_eq!(d.blocks().len(), 9);
        assert!(d.blocks().iter().all(|b| b.points.len() == 3));
        d.validate().unwrap();
    }

    #[test]
    fn intersections_q2_k3() {
        let d = design(2, 3);
        let set = |v: &[usize]| v.iter().map(|&j| JobId(j)).collect::<BTreeSet<_>>();
        assert_eq!(d.intersect_blocks(&ids(&[1, 3])).unwrap(), set(&[1]));
        assert_eq!(d.intersect_blocks(&ids(&[1, 3, 6])).unwrap(), set(&[]));
        assert_eq!(d.intersect_blocks(&ids(&[1, 3, 5])).unwrap(), set(&[1]));
        assert_eq!(
            d.intersect_blocks(&ids(&[1, 2])),
            Err(CamrError::SameClass { a: ServerId(1), b: ServerId(2), class: 1 })
        );
        assert!(d.intersect_blocks(&ids(&[7])).is_err());
    }

    #[test]
    fn stage2_groups_q2_k3() {
        let groups = design(2, 3).enumerate_stage2_groups();
        assert_eq!(groups.len(), 4);
        assert!(groups.contains(&ids(&[1, 3, 6])));
    }

    #[test]
    fn stage2_groups_q2_k2() {
        assert_eq!(
            design(2, 2).enumerate_stage2_groups(),
            vec![ids(&[1, 4]), ids(&[2, 3])]
        );
    }

    #[test]
    fn stage2_groups_match_empty_intersections() {
        for (q, k) in [(2, 2), (3, 2), (2, 3), (3, 3), (4, 3), (2, 4), (3, 4)] {
            let d = design(q, k);
            let groups = d.enumerate_stage2_groups();
            assert_eq!(groups.len(), q.pow(k as u32 - 1) * (q - 1));
            // Every tuple one-per-class, filtered by the intersection itself.
            let mut brute = Vec::new();
            let total = q.pow(k as u32);
            for mut x in 0..total {
                let mut tuple = vec![0; k];
                for slot in tuple.iter_mut().rev() {
                    *slot = x % q;
                    x /= q;
                }
                let group: Vec<_> = (0..k).map(|i| ServerId(i * q + tuple[i] + 1)).collect();
                if d.intersect_blocks(&group).unwrap().is_empty() {
                    brute.push(group);
                }
            }
            assert_eq!(groups, brute, "q={q} k={k}");
        }
    }

    #[test]
    fn information_set_property() {
        for (q, k) in [(2, 3), (3, 3), (2, 4), (3, 4)] {
            let d = design(q, k);
            for missing in 1..=k {
                let classes: Vec<usize> = (1..=k).filter(|&c| c != missing).collect();
                let combos = q.pow(k as u32 - 1);
                for mut x in 0..combos {
                    let mut group = Vec::new();
                    for &c in &classes {
                        group.push(d.server_at(c, x % q));
                        x /= q;
                    }
                    assert_eq!(d.intersect_blocks(&group).unwrap().len(), 1);
                }
            }
        }
    }

    #[test]
    fn server_block_convention_round_trips() {
        let d = design(3, 4);
        for b in d.blocks() {
            let s = b.server.0;
            assert_eq!(b.class, s.div_ceil(3));
            assert_eq!(b.symbol, (s - 1) % 3);
            assert_eq!(d.server_at(b.class, b.symbol), b.server);
        }
    }

    #[test]
    fn dump_has_expected_shape() {
        let dump = design(2, 3).dump();
        let v = serde_json::to_value(&dump).unwrap();
        assert_eq!(v["K"], 6);
        assert_eq!(v["J"], 4);
        assert_eq!(v["blocks"][0]["server"], 1);
        assert_eq!(v["blocks"][0]["points"], serde_json::json!([1, 2]));
        assert_eq!(v["classes"], serde_json::json!([[1, 2], [3, 4], [5, 6]]));
    }
}
