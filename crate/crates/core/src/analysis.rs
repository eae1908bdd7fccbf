//! Exact communication-load accounting.
//!
//! Loads are total shuffle bits normalized by `J * Q * B` with `Q = K`. All
//! arithmetic is on big rationals and big integers.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};
use serde::{Serialize, Serializer};

use crate::design::DesignParams;
use crate::error::{CamrError, Result};
use crate::shuffle::{Stage, TransmissionRecord};

fn rat(n: impl Into<BigInt>, d: impl Into<BigInt>) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// `num/den`, always with an explicit denominator.
pub fn fmt_ratio(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn ser_ratio<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_ratio(r))
}

fn ser_ratios<S: Serializer>(rs: &[BigRational; 3], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(3))?;
    for r in rs {
        seq.serialize_element(&fmt_ratio(r))?;
    }
    seq.end()
}

fn ser_big<S: Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_str_radix(10))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageLoads {
    pub stage1: BigRational,
    pub stage2: BigRational,
    pub stage3: BigRational,
    pub total: BigRational,
}

impl StageLoads {
    pub fn stages(&self) -> [BigRational; 3] {
        [self.stage1.clone(), self.stage2.clone(), self.stage3.clone()]
    }
}

fn check_qk(q: usize, k: usize) -> Result<()> {
    if q < 2 {
        return Err(CamrError::AlphabetTooSmall(q));
    }
    if k < 2 {
        return Err(CamrError::LengthTooSmall(k));
    }
    Ok(())
}

/// Closed-form CAMR loads for parameters `(q, k)`.
pub fn camr_loads(q: usize, k: usize) -> Result<StageLoads> {
    check_qk(q, k)?;
    let servers = k * q;
    let stage1 = rat(k, servers * (k - 1));
    let stage2 = rat((q - 1) * k, servers * (k - 1));
    let stage3 = rat(q - 1, q);
    let total = rat(k * (q - 1) + 1, q * (k - 1));
    assert_eq!(&stage1 + &stage2 + &stage3, total, "stage loads must sum to the total");
    Ok(StageLoads { stage1, stage2, stage3, total })
}

/// Load of the compressed coded scheme at storage fraction `mu`:
/// `(1 - mu)(mu*K + 1) / (mu*K)`, defined for integral `mu*K` in `1..K`.
pub fn ccdc_load(mu: &BigRational, servers: usize) -> Result<BigRational> {
    let mk = mu * BigRational::from_integer(servers.into());
    if !mk.is_integer() || mk < BigRational::one() || mk >= BigRational::from_integer(servers.into()) {
        return Err(CamrError::InvalidStorageFraction(fmt_ratio(&mk)));
    }
    Ok((BigRational::one() - mu) * (&mk + BigRational::one()) / mk)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobCounts {
    #[serde(serialize_with = "ser_big")]
    pub camr: BigUint,
    #[serde(serialize_with = "ser_big")]
    pub ccdc_min: BigUint,
}

/// `binom(n, r)` by the multiplicative formula; each partial product is integral.
pub fn binomial(n: usize, r: usize) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    let mut acc = BigUint::one();
    for i in 0..r {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Minimum job counts: `q^(k-1)` for CAMR, `binom(kq, k)` for the compressed scheme.
/// Verifies `binom(kq, k) >= q^k > q^(k-1)`.
pub fn min_jobs(q: usize, k: usize) -> Result<JobCounts> {
    check_qk(q, k)?;
    let qb = BigUint::from(q);
    let camr = Pow::pow(&qb, (k - 1) as u32);
    let q_to_k = Pow::pow(&qb, k as u32);
    let ccdc_min = binomial(k * q, k);
    if !(ccdc_min >= q_to_k && q_to_k > camr) {
        return Err(CamrError::BoundViolation { q, k });
    }
    Ok(JobCounts { camr, ccdc_min })
}

/// Reference scheme without coded multicast: every stage-1 and stage-2 chunk
/// is unicast on its own. Load `k/K + 2(q-1)/q`.
pub fn uncoded_baseline_load(q: usize, k: usize) -> Result<BigRational> {
    check_qk(q, k)?;
    Ok(rat(k, k * q) + rat(2 * (q - 1), q))
}

/// Per-stage bit totals normalized by `J * Q * 8 * value_bytes`.
pub fn measure(log: &[TransmissionRecord], params: &DesignParams, value_bytes: usize) -> Result<[BigRational; 3]> {
    if value_bytes == 0 {
        return Err(CamrError::ValueWidthZero);
    }
    let mut bits = [0u128; 3];
    for r in log {
        bits[usize::from(r.stage.number()) - 1] += u128::from(r.bits);
    }
    let norm = BigInt::from(params.jobs()) * BigInt::from(params.servers()) * BigInt::from(8 * value_bytes);
    Ok(bits.map(|b| BigRational::new(BigInt::from(b), norm.clone())))
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadReport {
    pub q: usize,
    pub k: usize,
    pub gamma: usize,
    #[serde(rename = "K")]
    pub servers: usize,
    #[serde(rename = "J")]
    pub jobs: usize,
    #[serde(rename = "N")]
    pub subfiles: usize,
    pub value_bytes: usize,
    pub seed: u64,
    #[serde(serialize_with = "ser_ratio")]
    pub storage_fraction: BigRational,
    #[serde(serialize_with = "ser_ratios")]
    pub measured: [BigRational; 3],
    #[serde(serialize_with = "ser_ratios")]
    pub analytic: [BigRational; 3],
    #[serde(serialize_with = "ser_ratio")]
    pub total: BigRational,
    #[serde(serialize_with = "ser_ratio")]
    pub ccdc: BigRational,
    /// Simulator-defined uncoded reference, not part of either coded scheme.
    #[serde(serialize_with = "ser_ratio")]
    pub uncoded_baseline: BigRational,
    pub job_counts: JobCounts,
    pub correct: bool,
}

/// Inputs to [`reconcile`] besides the log.
#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    pub params: DesignParams,
    pub gamma: usize,
    pub value_bytes: usize,
    pub seed: u64,
}

/// Compare measured loads with the closed forms and assemble the report.
/// Fails on the first stage where they differ.
pub fn reconcile(
    log: &[TransmissionRecord],
    run: &RunParams,
    storage_fraction: BigRational,
    correct: bool,
) -> Result<LoadReport> {
    let (q, k) = (run.params.q(), run.params.k());
    let measured = measure(log, &run.params, run.value_bytes)?;
    let analytic = camr_loads(q, k)?;
    for (stage, (m, a)) in Stage::ALL.iter().zip(measured.iter().zip(analytic.stages().iter())) {
        if m != a {
            return Err(CamrError::LoadMismatch {
                stage: stage.number(),
                measured: fmt_ratio(m),
                analytic: fmt_ratio(a),
            });
        }
    }
    let total = measured.iter().fold(BigRational::zero(), |acc, x| acc + x);
    let mu = rat(k - 1, run.params.servers());
    Ok(LoadReport {
        q,
        k,
        gamma: run.gamma,
        servers: run.params.servers(),
        jobs: run.params.jobs(),
        subfiles: k * run.gamma,
        value_bytes: run.value_bytes,
        seed: run.seed,
        storage_fraction,
        measured,
        analytic: analytic.stages(),
        total,
        ccdc: ccdc_load(&mu, run.params.servers())?,
        uncoded_baseline: uncoded_baseline_load(q, k)?,
        job_counts: min_jobs(q, k)?,
        correct,
    })
}

pub const CSV_HEADER: &str = "q,k,gamma,L1,L2,L3,L_total,L_ccdc,L_baseline,J_camr,J_ccdc_min,correct";

impl LoadReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.q,
            self.k,
            self.gamma,
            fmt_ratio(&self.measured[0]),
            fmt_ratio(&self.measured[1]),
            fmt_ratio(&self.measured[2]),
            fmt_ratio(&self.total),
            fmt_ratio(&self.ccdc),
            fmt_ratio(&self.uncoded_baseline),
            self.job_counts.camr,
            self.job_counts.ccdc_min,
            self.correct
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "parameters: q={} k={} gamma={} (K={} J={} N={}) value_bytes={} seed={}\n",
            self.q, self.k, self.gamma, self.servers, self.jobs, self.subfiles, self.value_bytes, self.seed
        ));
        s.push_str(&format!("storage fraction: {}\n", fmt_ratio(&self.storage_fraction)));
        for (i, (m, a)) in self.measured.iter().zip(&self.analytic).enumerate() {
            s.push_str(&format!("stage {}: measured {} analytic {}\n", i + 1, fmt_ratio(m), fmt_ratio(a)));
        }
        s.push_str(&format!("total load: {}\n", fmt_ratio(&self.total)));
        s.push_str(&format!("ccdc load at same storage: {}\n", fmt_ratio(&self.ccdc)));
        s.push_str(&format!("uncoded baseline (simulator-defined): {}\n", fmt_ratio(&self.uncoded_baseline)));
        s.push_str(&format!(
            "jobs required: camr {} ccdc min {}\n",
            self.job_counts.camr, self.job_counts.ccdc_min
        ));
        s.push_str(&format!("correct: {}\n", self.correct));
        s
    }
}
