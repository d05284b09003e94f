//! Enrollment simulation and the key rank of an optimal guessing attacker.
//!
//! The attacker knows the helper data `y` and the per-position biases `p`.
//! For every block and message `r` the guess probability is
//! `P(X = y ⊕ encode(r))`; full keys are ranked by the sum of block
//! log-probabilities. Ranks count strictly better keys, so rank 0 means the
//! first guess is correct.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{pack_bits, LinearBlockCode, Word};
use crate::dataset::{BiasVector, DeviceResponses};
use crate::entropy::{BlockLogProb, BlockPartition};
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

/// Bit length of generated keys; shorter codes use a prefix.
pub const KEY_BITS: usize = 144;

/// Largest total message length handled by exhaustive enumeration.
pub const MAX_EXACT_KEY_BITS: usize = 24;

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 1 << 15;

/// Two log-probabilities closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

const MIN_BIN_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrollment {
    pub device: usize,
    /// The `k` key bits actually encoded.
    pub key: Vec<u8>,
    /// Helper data per block.
    pub helper: Vec<Word>,
    pub code: String,
}

impl Enrollment {
    /// Message value of block `b`; key bit `b * k_b + j` is message bit `j`.
    pub fn message(&self, block: usize, k_b: usize) -> u64 {
        pack_bits(&self.key[block * k_b..(block + 1) * k_b]) as u64
    }
}

/// `y_b = x_b ⊕ encode(r_b)` for every block.
pub fn enroll(
    device: usize,
    response: &[u8],
    key: &[u8],
    code: &LinearBlockCode,
    part: &BlockPartition,
) -> Result<Enrollment> {
    if response.len() < part.n_used() {
        return Err(Error::LengthMismatch {
            expected: part.n_used(),
            actual: response.len(),
        });
    }
    if key.len() < part.k_total() {
        return Err(Error::LengthMismatch {
            expected: part.k_total(),
            actual: key.len(),
        });
    }
    let key = key[..part.k_total()].to_vec();
    let helper = (0..part.blocks)
        .map(|b| {
            let x = pack_bits(&response[part.block_range(b)]);
            let w = code.encode_bits(&key[b * part.k_b..(b + 1) * part.k_b])?;
            Ok(x ^ w)
        })
        .collect::<Result<_>>()?;
    Ok(Enrollment {
        device,
        key,
        helper,
        code: code.name(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGuessDistribution {
    /// `log2 P(X = y ⊕ encode(r))` indexed by message `r`.
    pub log_probs: Vec<f64>,
    pub true_index: usize,
}

/// Guess distribution of one block under the independent-bit model with the
/// original (un-normalized) biases.
pub fn block_guess_distribution(
    y_block: Word,
    p_block: &[f64],
    code: &LinearBlockCode,
    true_index: usize,
) -> Result<BlockGuessDistribution> {
    if p_block.len() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            actual: p_block.len(),
        });
    }
    let table = BlockLogProb::new(p_block);
    let log_probs = code
        .codewords()
        .iter()
        .map(|&w| table.log_prob(y_block ^ w))
        .collect();
    Ok(BlockGuessDistribution { log_probs, true_index })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Exact,
    Histogram,
}

/// Key rank bracket. Counts are integral but held as `f64` because they may
/// exceed `2^128`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub rank_lower: f64,
    pub rank_estimate: f64,
    pub rank_upper: f64,
    pub method: RankMethod,
    /// The enrolled key has probability zero under the attacker's model.
    pub impossible_key: bool,
}

impl RankResult {
    pub fn log2_lower(&self) -> f64 {
        (self.rank_lower + 1.0).log2()
    }

    pub fn log2_estimate(&self) -> f64 {
        (self.rank_estimate + 1.0).log2()
    }

    pub fn log2_upper(&self) -> f64 {
        (self.rank_upper + 1.0).log2()
    }
}

fn true_score(dists: &[BlockGuessDistribution]) -> f64 {
    dists.iter().map(|d| d.log_probs[d.true_index]).sum()
}

fn check_distributions(dists: &[BlockGuessDistribution]) -> Result<usize> {
    if dists.is_empty() {
        return Err(Error::Parameter("no block distributions".into()));
    }
    let mut bits = 0;
    for d in dists {
        let len = d.log_probs.len();
        if !len.is_power_of_two() || d.true_index >= len {
            return Err(Error::Parameter(format!(
                "distribution of {len} entries with true index {}",
                d.true_index
            )));
        }
        bits += len.trailing_zeros() as usize;
    }
    Ok(bits)
}

/// Exhaustive rank over all full-key message combinations.
///
/// `rank_lower` counts keys strictly more probable than the true key,
/// `rank_upper` adds keys tied with it; the estimate equals the lower value.
pub fn key_rank_exact(dists: &[BlockGuessDistribution]) -> Result<RankResult> {
    let bits = check_distributions(dists)?;
    if bits > MAX_EXACT_KEY_BITS {
        return Err(Error::Capability(format!(
            "exact key rank needs at most {MAX_EXACT_KEY_BITS} key bits, got {bits}"
        )));
    }
    let t = true_score(dists);
    let better_cut = t + TIE_TOLERANCE;
    let tie_cut = t - TIE_TOLERANCE;

    let (last, prefix_blocks) = dists.split_last().unwrap();
    let mut tail = last.log_probs.clone();
    tail.sort_by(|a, b| b.total_cmp(a));

    let mut better: u64 = 0;
    let mut at_least_tied: u64 = 0;
    let mut prefix = vec![0usize; prefix_blocks.len()];
    loop {
        // block order matches `true_score` so equal keys produce equal sums
        let mut s = 0.0;
        for (d, &i) in prefix_blocks.iter().zip(&prefix) {
            s += d.log_probs[i];
        }
        better += tail.partition_point(|&x| s + x > better_cut) as u64;
        at_least_tied += tail.partition_point(|&x| s + x >= tie_cut) as u64;

        let mut pos = 0;
        loop {
            if pos == prefix.len() {
                let lower = better as f64;
                let upper = (at_least_tied - 1) as f64;
                return Ok(RankResult {
                    rank_lower: lower,
                    rank_estimate: lower,
                    rank_upper: upper,
                    method: RankMethod::Exact,
                    impossible_key: t == f64::NEG_INFINITY,
                });
            }
            prefix[pos] += 1;
            if prefix[pos] < prefix_blocks[pos].log_probs.len() {
                break;
            }
            prefix[pos] = 0;
            pos += 1;
        }
    }
}

/// Histogram-convolution rank estimate with a bracket.
///
/// All blocks share one linear binning of width
/// `w = sum_b (max_b - min_b) / bins`. The convolved histogram counts keys by
/// the sum of their block bin indices `I`. A key in bin `I` differs from the
/// true key (bin `I*`) by more than `w (I - I* - N_b)` and by less than
/// `w (I - I* + N_b)`, so keys with `I > I* + N_b` are strictly better and
/// keys with `I < I* - N_b` are strictly worse.
pub fn key_rank_histogram(dists: &[BlockGuessDistribution], bins: usize) -> Result<RankResult> {
    let bits = check_distributions(dists)?;
    if bins == 0 {
        return Err(Error::Parameter("bin count must be positive".into()));
    }
    let total_keys = 2f64.powi(bits as i32);
    let t = true_score(dists);

    let mut ranges = Vec::with_capacity(dists.len());
    for d in dists {
        let finite = d.log_probs.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            return Err(Error::Parameter("block distribution without finite entries".into()));
        }
        ranges.push((lo, hi));
    }
    let span: f64 = ranges.iter().map(|(lo, hi)| hi - lo).sum();
    let width = (span / bins as f64).max(MIN_BIN_WIDTH);
    let bin_of = |b: usize, v: f64| ((v - ranges[b].0) / width).floor() as usize;

    // convolve sparse block histograms into a dense count vector
    let mut acc: Vec<f64> = vec![1.0];
    for (b, d) in dists.iter().enumerate() {
        let mut block: Vec<(usize, f64)> = Vec::new();
        let mut idx: Vec<usize> = d.log_probs.iter().filter(|v| v.is_finite()).map(|&v| bin_of(b, v)).collect();
        idx.sort_unstable();
        for i in idx {
            match block.last_mut() {
                Some((j, c)) if *j == i => *c += 1.0,
                _ => block.push((i, 1.0)),
            }
        }
        let max_idx = block.last().map(|&(i, _)| i).unwrap_or(0);
        let mut next = vec![0.0; acc.len() + max_idx];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(j, c) in &block {
                next[i + j] += a * c;
            }
        }
        acc = next;
    }

    let finite_keys: f64 = acc.iter().copied().collect::<CompensatedSum>().value();
    if t == f64::NEG_INFINITY {
        return Ok(RankResult {
            rank_lower: finite_keys,
            rank_estimate: finite_keys,
            rank_upper: total_keys - 1.0,
            method: RankMethod::Histogram,
            impossible_key: true,
        });
    }

    let star: usize = dists
        .iter()
        .enumerate()
        .map(|(b, d)| bin_of(b, d.log_probs[d.true_index]))
        .sum();
    let nb = dists.len();
    let count_from = |start: usize| -> f64 { acc.iter().skip(start).copied().collect::<CompensatedSum>().value() };

    let estimate = count_from(star + 1);
    let lower = count_from(star + nb + 1);
    let upper = (count_from(star.saturating_sub(nb)) - 1.0).max(0.0);
    Ok(RankResult {
        rank_lower: lower,
        rank_estimate: estimate.clamp(lower, upper),
        rank_upper: upper,
        method: RankMethod::Histogram,
        impossible_key: false,
    })
}

/// Exact rank when the key is short enough, histogram otherwise.
pub fn key_rank(dists: &[BlockGuessDistribution], bins: usize) -> Result<RankResult> {
    match key_rank_exact(dists) {
        Err(e) if e.is_capability() => key_rank_histogram(dists, bins),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankStrategy {
    /// Exact where feasible, histogram otherwise.
    #[default]
    Auto,
    Exact,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRankSettings {
    pub keys: usize,
    pub seed: u64,
    pub bins: usize,
    pub strategy: RankStrategy,
}

impl Default for KeyRankSettings {
    fn default() -> Self {
        Self {
            keys: 10,
            seed: 1,
            bins: DEFAULT_BINS,
            strategy: RankStrategy::Auto,
        }
    }
}

/// Deterministic `bits`-bit keys from a ChaCha20 stream seeded with `seed`.
pub fn generate_keys(count: usize, bits: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut bytes = vec![0u8; bits.div_ceil(8)];
            rng.fill_bytes(&mut bytes);
            (0..bits).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
        })
        .collect()
}

/// Guess distributions of one enrollment.
pub fn enrollment_distributions(
    enrollment: &Enrollment,
    p: &BiasVector,
    code: &LinearBlockCode,
    part: &BlockPartition,
) -> Result<Vec<BlockGuessDistribution>> {
    (0..part.blocks)
        .map(|b| {
            block_guess_distribution(
                enrollment.helper[b],
                p.slice(part.block_range(b)),
                code,
                enrollment.message(b, part.k_b) as usize,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRanks {
    pub device: usize,
    /// One result per key, in key order.
    pub ranks: Vec<RankResult>,
    /// All keys produced the same rank bracket.
    pub key_invariant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRankExperiment {
    pub code: String,
    pub k: usize,
    pub n: usize,
    pub keys: usize,
    pub seed: u64,
    pub bins: usize,
    pub devices: Vec<DeviceRanks>,
    /// Mean over devices and keys of `log2(rank_estimate + 1)`.
    pub mean_log2_rank: f64,
    pub mean_log2_rank_lower: f64,
    pub mean_log2_rank_upper: f64,
    pub all_key_invariant: bool,
    /// Devices whose enrolled key is impossible under the model.
    pub impossible_devices: Vec<usize>,
}

/// Enrolls every key on every device and ranks it.
pub fn keyrank_experiment(
    responses: &DeviceResponses,
    p: &BiasVector,
    code: &LinearBlockCode,
    settings: &KeyRankSettings,
) -> Result<KeyRankExperiment> {
    let KeyRankSettings {
        keys,
        seed,
        bins,
        strategy,
    } = *settings;
    if p.len() != responses.n() {
        return Err(Error::LengthMismatch {
            expected: responses.n(),
            actual: p.len(),
        });
    }
    if keys == 0 {
        return Err(Error::Parameter("key count must be positive".into()));
    }
    let part = BlockPartition::new(code, responses.n())?;
    let key_bits = part.k_total().max(KEY_BITS);
    let key_set = generate_keys(keys, key_bits, seed);

    let devices = (0..responses.device_count())
        .into_par_iter()
        .map(|d| {
            let ranks = key_set
                .iter()
                .map(|key| {
                    let e = enroll(d, responses.device(d), key, code, &part)?;
                    let dists = enrollment_distributions(&e, p, code, &part)?;
                    match strategy {
                        RankStrategy::Auto => key_rank(&dists, bins),
                        RankStrategy::Exact => key_rank_exact(&dists),
                        RankStrategy::Histogram => key_rank_histogram(&dists, bins),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let first = ranks[0];
            let key_invariant = ranks.iter().all(|r| {
                r.rank_lower == first.rank_lower && r.rank_upper == first.rank_upper && r.rank_estimate == first.rank_estimate
            });
            Ok(DeviceRanks {
                device: d,
                ranks,
                key_invariant,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_of = |f: fn(&RankResult) -> f64| -> f64 {
        let sum: CompensatedSum = devices.iter().flat_map(|d| d.ranks.iter().map(f)).collect();
        sum.value() / (devices.len() * keys) as f64
    };
    Ok(KeyRankExperiment {
        code: code.name(),
        k: part.k_total(),
        n: part.n_used(),
        keys,
        seed,
        bins,
        mean_log2_rank: mean_of(RankResult::log2_estimate),
        mean_log2_rank_lower: mean_of(RankResult::log2_lower),
        mean_log2_rank_upper: mean_of(RankResult::log2_upper),
        all_key_invariant: devices.iter().all(|d| d.key_invariant),
        impossible_devices: devices
            .iter()
            .filter(|d| d.ranks.iter().any(|r| r.impossible_key))
            .map(|d| d.device)
            .collect(),
        devices,
    })
}

/// Integer-width histogram of `log2(rank_estimate + 1)` over all devices and
/// keys: `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn rank_histogram(exp: &KeyRankExperiment) -> RankHistogram {
    let bins = exp.k.max(1);
    let mut counts = vec![0usize; bins];
    for r in exp.devices.iter().flat_map(|d| &d.ranks) {
        let i = (r.log2_estimate().floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    RankHistogram {
        edges: (0..=bins).map(|e| e as f64).collect(),
        counts,
    }
}
