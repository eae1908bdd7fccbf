//! Jobs, map outputs and aggregation.
//!
//! Every job is a word count over `N` synthetic text subfiles with `Q = K`
//! target words; function `phi_k` (counting the `k`-th word) is reduced by
//! server `U_k`. Values travel as fixed-width big-endian byte strings of
//! `value_bytes` bytes, whatever the number of merged map outputs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::DesignParams;
use crate::error::{CamrError, Result};
use crate::ids::JobId;

/// Default cap on tokens per subfile; bounds every per-subfile count.
pub const DEFAULT_MAX_TOKENS: u64 = 32;

/// An associative, commutative combiner over fixed-width byte strings.
pub trait Aggregator: Send + Sync {
    fn name(&self) -> &'static str;

    fn identity(&self, width: usize) -> Vec<u8>;

    /// Both inputs have the same width; so does the output.
    fn combine(&self, a: &[u8], b: &[u8]) -> Vec<u8>;
}

/// Addition modulo `2^(8*width)`, the linear word-count aggregation.
#[derive(Debug, Clone, Copy, Default)]
pub struct WrappingSum;

impl Aggregator for WrappingSum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn identity(&self, width: usize) -> Vec<u8> {
        vec![0; width]
    }

    fn combine(&self, a: &[u8], b: &[u8]) -> Vec<u8> {
        debug_assert_eq!(a.len(), b.len());
        let mut out = vec![0u8; a.len()];
        let mut carry = 0u16;
        for i in (0..a.len()).rev() {
            let s = u16::from(a[i]) + u16::from(b[i]) + carry;
            out[i] = s as u8;
            carry = s >> 8;
        }
        out
    }
}

/// Numeric maximum of the big-endian encodings.
#[derive(Debug, Clone, Copy, Default)]
pub struct Max;

impl Aggregator for Max {
    fn name(&self) -> &'static str {
        "max"
    }

    fn identity(&self, width: usize) -> Vec<u8> {
        vec![0; width]
    }

    fn combine(&self, a: &[u8], b: &[u8]) -> Vec<u8> {
        debug_assert_eq!(a.len(), b.len());
        a.max(b).to_vec()
    }
}

/// Selects one of the built-in aggregators by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    #[default]
    Sum,
    Max,
}

impl AggregatorKind {
    pub fn aggregator(self) -> &'static dyn Aggregator {
        match self {
            AggregatorKind::Sum => &WrappingSum,
            AggregatorKind::Max => &Max,
        }
    }
}

/// Big-endian encoding of `value` reduced modulo `2^(8*width)`.
pub fn encode_value(value: u64, width: usize) -> Vec<u8> {
    let be = value.to_be_bytes();
    if width >= be.len() {
        let mut out = vec![0u8; width - be.len()];
        out.extend_from_slice(&be);
        out
    } else {
        be[be.len() - width..].to_vec()
    }
}

/// Inverse of [`encode_value`]; `None` when the value does not fit in `u128`.
pub fn decode_value(bytes: &[u8]) -> Option<u128> {
    let significant = bytes.iter().position(|&b| b != 0).map_or(&[][..], |p| &bytes[p..]);
    if significant.len() > 16 {
        return None;
    }
    Some(significant.iter().fold(0u128, |acc, &b| (acc << 8) | u128::from(b)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job: JobId,
    /// Subfile payloads, index `n-1` holds subfile `n`.
    pub payloads: Vec<String>,
    /// Target words, index `q-1` is counted by function `q`.
    pub vocabulary: Vec<String>,
}

/// `nu_{function, subfile}^{(job)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntermediateValue {
    pub function: usize,
    pub job: JobId,
    pub subfile: usize,
    pub value: u64,
}

impl IntermediateValue {
    pub fn to_aggregate(&self, width: usize) -> AggregateValue {
        AggregateValue {
            function: self.function,
            job: self.job,
            subfiles: BTreeSet::from([self.subfile]),
            bytes: encode_value(self.value, width),
        }
    }
}

/// Aggregate of the values of one `(function, job)` over a set of subfiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateValue {
    pub function: usize,
    pub job: JobId,
    pub subfiles: BTreeSet<usize>,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// Merge values of the same `(function, job)` over disjoint subfile sets.
pub fn aggregate(agg: &dyn Aggregator, values: &[AggregateValue]) -> Result<AggregateValue> {
    let (first, rest) = values.split_first().ok_or(CamrError::EmptyAggregate)?;
    let mut acc = first.clone();
    for v in rest {
        if v.function != acc.function || v.job != acc.job {
            return Err(CamrError::MixedAggregate {
                left_fn: acc.function,
                left_job: acc.job,
                right_fn: v.function,
                right_job: v.job,
            });
        }
        if v.bytes.len() != acc.bytes.len() {
            return Err(CamrError::WidthMismatch {
                expected: acc.bytes.len(),
                actual: v.bytes.len(),
            });
        }
        if let Some(&dup) = v.subfiles.intersection(&acc.subfiles).next() {
            return Err(CamrError::OverlappingSubfiles { job: v.job, subfile: dup });
        }
        acc.subfiles.extend(v.subfiles.iter().copied());
        acc.bytes = agg.combine(&acc.bytes, &v.bytes);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub value_bytes: usize,
    pub max_tokens: u64,
}

impl CorpusConfig {
    pub fn new(seed: u64, value_bytes: usize) -> Self {
        Self { seed, value_bytes, max_tokens: DEFAULT_MAX_TOKENS }
    }
}

/// Check that `value_bytes` splits into `k-1` packets and that a full job's
/// count cannot wrap around.
pub fn check_value_width(value_bytes: usize, k: usize, subfiles: usize, max_count: u64) -> Result<()> {
    if value_bytes == 0 {
        return Err(CamrError::ValueWidthZero);
    }
    if value_bytes % (k - 1) != 0 {
        return Err(CamrError::ValueWidthIndivisible { value_bytes, divisor: k - 1 });
    }
    let fits = if value_bytes >= 16 {
        true
    } else {
        let limit = 1u128 << (8 * value_bytes);
        (subfiles as u128).saturating_mul(u128::from(max_count)) < limit
    };
    if !fits {
        return Err(CamrError::ValueWidthTooSmall { value_bytes, subfiles, max_count });
    }
    Ok(())
}

/// Deterministic synthetic corpus: one [`JobSpec`] per job, `k*gamma`
/// subfiles each. Same config and parameters give identical output.
pub fn generate_corpus(config: &CorpusConfig, params: &DesignParams, gamma: usize) -> Result<Vec<JobSpec>> {
    if gamma == 0 {
        return Err(CamrError::GammaZero);
    }
    let subfiles = params.k() * gamma;
    check_value_width(config.value_bytes, params.k(), subfiles, config.max_tokens)?;

    let functions = params.servers();
    // Target words plus the same number of filler words.
    let pool: Vec<String> = (0..2 * functions).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut specs = Vec::with_capacity(params.jobs());
    for j in 1..=params.jobs() {
        let vocabulary: Vec<String> = pool.choose_multiple(&mut rng, functions).cloned().collect();
        let payloads = (0..subfiles)
            .map(|_| {
                let len = rng.gen_range(0..=config.max_tokens);
                (0..len)
                    .map(|_| pool[rng.gen_range(0..pool.len())].as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        specs.push(JobSpec { job: JobId(j), payloads, vocabulary });
    }
    Ok(specs)
}

/// Map subfile `n` of a job to its `Q` word counts.
pub fn map_subfile(spec: &JobSpec, n: usize) -> Result<Vec<IntermediateValue>> {
    if n == 0 || n > spec.payloads.len() {
        return Err(CamrError::SubfileOutOfRange { subfile: n, subfiles: spec.payloads.len() });
    }
    let payload = &spec.payloads[n - 1];
    Ok(spec
        .vocabulary
        .iter()
        .enumerate()
        .map(|(i, word)| IntermediateValue {
            function: i + 1,
            job: spec.job,
            subfile: n,
            value: payload.split_whitespace().filter(|t| t == word).count() as u64,
        })
        .collect())
}

/// Centralized ground truth: every `(function, job)` folded over all subfiles.
pub fn oracle_reduce(
    specs: &[JobSpec],
    agg: &dyn Aggregator,
    width: usize,
) -> Result<BTreeMap<(usize, JobId), AggregateValue>> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let mut per_function: Vec<Vec<AggregateValue>> = vec![Vec::new(); spec.vocabulary.len()];
        for n in 1..=spec.payloads.len() {
            for v in map_subfile(spec, n)? {
                per_function[v.function - 1].push(v.to_aggregate(width));
            }
        }
        for (i, values) in per_function.into_iter().enumerate() {
            let value = if values.is_empty() {
                AggregateValue {
                    function: i + 1,
                    job: spec.job,
                    subfiles: BTreeSet::new(),
                    bytes: agg.identity(width),
                }
            } else {
                aggregate(agg, &values)?
            };
            out.insert((i + 1, spec.job), value);
        }
    }
    Ok(out)
}

/// One line of the corpus dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub job: JobId,
    pub subfile: usize,
    pub payload_sha256: String,
    pub counts: Vec<u64>,
}

pub fn corpus_records(specs: &[JobSpec]) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for spec in specs {
        for n in 1..=spec.payloads.len() {
            out.push(CorpusRecord {
                job: spec.job,
                subfile: n,
                payload_sha256: hex::encode(Sha256::digest(spec.payloads[n - 1].as_bytes())),
                counts: map_subfile(spec, n)?.iter().map(|v| v.value).collect(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(payloads: &[&str], vocab: &[&str]) -> JobSpec {
        JobSpec {
            job: JobId(1),
            payloads: payloads.iter().map(|s| s.to_string()).collect(),
            vocabulary: vocab.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn av(function: usize, subfiles: &[usize], value: u64) -> AggregateValue {
        AggregateValue {
            function,
            job: JobId(1),
            subfiles: subfiles.iter().copied().collect(),
            bytes: encode_value(value, 8),
        }
    }

    #[test]
    fn map_counts_words() {
        let s = spec(&["a b a", ""], &["a", "b"]);
        let counts: Vec<u64> = map_subfile(&s, 1).unwrap().iter().map(|v| v.value).collect();
        assert_eq!(counts, vec![2, 1]);
        let empty: Vec<u64> = map_subfile(&s, 2).unwrap().iter().map(|v| v.value).collect();
        assert_eq!(empty, vec![0, 0]);
        assert!(matches!(map_subfile(&s, 3), Err(CamrError::SubfileOutOfRange { .. })));
    }

    #[test]
    fn aggregate_sums_two_values() {
        let out = aggregate(&WrappingSum, &[av(1, &[5], 7), av(1, &[6], 11)]).unwrap();
        assert_eq!(out.bytes, encode_value(18, 8));
        assert_eq!(out.subfiles, BTreeSet::from([5, 6]));
        let single = aggregate(&WrappingSum, &[av(1, &[5], 7)]).unwrap();
        assert_eq!(single, av(1, &[5], 7));
    }

    #[test]
    fn aggregate_rejects_bad_inputs() {
        assert_eq!(aggregate(&WrappingSum, &[]), Err(CamrError::EmptyAggregate));
        assert!(matches!(
            aggregate(&WrappingSum, &[av(1, &[1], 1), av(2, &[2], 1)]),
            Err(CamrError::MixedAggregate { .. })
        ));
        assert!(matches!(
            aggregate(&WrappingSum, &[av(1, &[1, 2], 1), av(1, &[2], 1)]),
            Err(CamrError::OverlappingSubfiles { subfile: 2, .. })
        ));
    }

    #[test]
    fn encode_truncates_and_pads() {
        assert_eq!(encode_value(0x0102, 1), vec![0x02]);
        assert_eq!(encode_value(0x0102, 3), vec![0, 1, 2]);
        assert_eq!(encode_value(5, 9), vec![0, 0, 0, 0, 0, 0, 0, 0, 5]);
        assert_eq!(decode_value(&encode_value(123_456, 12)), Some(123_456));
    }

    #[test]
    fn wrapping_sum_wraps() {
        assert_eq!(WrappingSum.combine(&[0xff, 0xff], &[0x00, 0x02]), vec![0x00, 0x01]);
        assert_eq!(Max.combine(&[0x01, 0x00], &[0x00, 0xff]), vec![0x01, 0x00]);
    }

    #[test]
    fn width_checks() {
        assert_eq!(check_value_width(0, 3, 6, 32), Err(CamrError::ValueWidthZero));
        assert!(matches!(check_value_width(8, 4, 12, 32), Err(CamrError::ValueWidthIndivisible { .. })));
        assert!(matches!(check_value_width(1, 2, 8, 32), Err(CamrError::ValueWidthTooSmall { .. })));
        check_value_width(1, 2, 7, 32).unwrap();
        check_value_width(9, 4, 12, 32).unwrap();
    }

    #[test]
    fn corpus_is_deterministic() {
        let params = DesignParams::new(2, 3).unwrap();
        let a = generate_corpus(&CorpusConfig::new(0, 8), &params, 2).unwrap();
        let b = generate_corpus(&CorpusConfig::new(0, 8), &params, 2).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = generate_corpus(&CorpusConfig::new(1, 8), &params, 2).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|s| s.payloads.len() == 6 && s.vocabulary.len() == 6));
    }

    #[test]
    fn corpus_counts_respect_bound() {
        let params = DesignParams::new(3, 3).unwrap();
        let specs = generate_corpus(&CorpusConfig::new(5, 2), &params, 3).unwrap();
        let n = 9u64;
        for s in &specs {
            for sub in 1..=s.payloads.len() {
                for v in map_subfile(s, sub).unwrap() {
                    assert!(v.value * n < 1 << 16);
                }
            }
        }
    }

    #[test]
    fn oracle_matches_independent_recount() {
        let params = DesignParams::new(2, 3).unwrap();
        let specs = generate_corpus(&CorpusConfig::new(1, 8), &params, 2).unwrap();
        let oracle = oracle_reduce(&specs, &WrappingSum, 8).unwrap();
        for s in &specs {
            let text = s.payloads.join(" ");
            for (i, word) in s.vocabulary.iter().enumerate() {
                let recount = text.split(' ').filter(|t| *t == word).count() as u64;
                assert_eq!(oracle[&(i + 1, s.job)].bytes, encode_value(recount, 8));
            }
        }
    }

    #[test]
    fn oracle_of_single_subfile_job_is_map_output() {
        let s = spec(&["x y y"], &["y", "x", "z"]);
        let oracle = oracle_reduce(std::slice::from_ref(&s), &WrappingSum, 4).unwrap();
        for v in map_subfile(&s, 1).unwrap() {
            assert_eq!(oracle[&(v.function, JobId(1))], v.to_aggregate(4));
        }
    }

    #[test]
    fn corpus_dump_records() {
        let params = DesignParams::new(2, 2).unwrap();
        let specs = generate_corpus(&CorpusConfig::new(3, 4), &params, 1).unwrap();
        let recs = corpus_records(&specs).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].payload_sha256.len(), 64);
        assert_eq!(recs[0].counts.len(), 4);
    }

    proptest! {
        #[test]
        fn aggregators_are_associative_and_commutative(
            width in 1usize..=12,
            a in proptest::collection::vec(any::<u8>(), 12),
            b in proptest::collection::vec(any::<u8>(), 12),
            c in proptest::collection::vec(any::<u8>(), 12),
        ) {
            let (a, b, c) = (&a[..width], &b[..width], &c[..width]);
            for agg in [&WrappingSum as &dyn Aggregator, &Max] {
                prop_assert_eq!(agg.combine(a, &agg.combine(b, c)), agg.combine(&agg.combine(a, b), c));
                prop_assert_eq!(agg.combine(a, b), agg.combine(b, a));
                prop_assert_eq!(agg.combine(a, &agg.identity(width)), a.to_vec());
            }
        }

        #[test]
        fn aggregate_is_order_independent(values in proptest::collection::vec(any::<u32>(), 1..10), seed in any::<u64>()) {
            let items: Vec<_> = values.iter().enumerate().map(|(i, &v)| av(3, &[i + 1], u64::from(v))).collect();
            let mut shuffled = items.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let x = aggregate(&WrappingSum, &items).unwrap();
            let y = aggregate(&WrappingSum, &shuffled).unwrap();
            prop_assert_eq!(&x, &y);
            prop_assert_eq!(x.bytes.len(), 8);
            let total: u64 = values.iter().map(|&v| u64::from(v)).sum();
            prop_assert_eq!(x.bytes, encode_value(total, 8));
        }
    }
}
