//! Min-entropy estimators and the exact average conditional min-entropy of
//! a code-offset construction.
//!
//! All values are in bits. The response is processed in `N_b = floor(n / n_b)`
//! consecutive blocks starting at position 0; trailing positions are unused.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{coset_leaders, CosetLeaderSet, LinearBlockCode, Word};
use crate::dataset::BiasVector;
use crate::numeric::{log2_dominant, neg_log2, BinomialTable, CompensatedSum};
use crate::{Error, Result};

/// Largest block length for the enumeration over all helper data.
pub const MAX_GENERAL_BLOCK_LEN: usize = 20;

/// Largest block length for the coset-leader evaluation. The work is
/// `2^{n_b}` probability evaluations per block.
pub const MAX_EXACT_BLOCK_LEN: usize = 24;

/// `m = -n log2(max(p, 1 - p))`.
pub fn min_entropy_iid(p: f64, n: usize) -> f64 {
    let v = -(n as f64) * log2_dominant(p);
    v + 0.0
}

/// `m~ = -sum_i log2(max(p_i, 1 - p_i))`.
pub fn min_entropy_ind(p: &[f64]) -> f64 {
    let v = -p.iter().map(|&pi| log2_dominant(pi)).collect::<CompensatedSum>().value();
    v + 0.0
}

/// `l = m + k - n - L`. May be negative.
pub fn nk_bound(m: f64, k: f64, n: f64, hash_loss: f64) -> f64 {
    m + k - n - hash_loss
}

/// Consecutive blocks of `n_b` response positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub n_b: usize,
    pub k_b: usize,
    pub blocks: usize,
}

impl BlockPartition {
    /// Partition of `n` available positions for `code`.
    pub fn new(code: &LinearBlockCode, n: usize) -> Result<Self> {
        let blocks = n / code.n();
        if blocks == 0 {
            return Err(Error::Parameter(format!(
                "{n} response bits cannot hold one block of {}",
                code.name()
            )));
        }
        Ok(Self {
            n_b: code.n(),
            k_b: code.k(),
            blocks,
        })
    }

    /// Response positions in use, `N_b * n_b`.
    pub fn n_used(&self) -> usize {
        self.blocks * self.n_b
    }

    /// Total message bits `k = N_b * k_b`.
    pub fn k_total(&self) -> usize {
        self.blocks * self.k_b
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.n_b..(i + 1) * self.n_b
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.blocks).map(|i| self.block_range(i))
    }

    fn check(&self, p: &BiasVector) -> Result<()> {
        if p.len() < self.n_used() {
            return Err(Error::LengthMismatch {
                expected: self.n_used(),
                actual: p.len(),
            });
        }
        Ok(())
    }
}

/// A total over blocks together with the per-block contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blockwise {
    pub total: f64,
    pub per_block: Vec<f64>,
}

impl Blockwise {
    fn from_blocks(per_block: Vec<f64>) -> Self {
        let total = per_block.iter().copied().collect::<CompensatedSum>().value();
        Self { total, per_block }
    }
}

/// `l~ = sum_i max(m~_i + k_b - n_b, 0)`.
pub fn nk_bound_blockwise(p: &BiasVector, part: &BlockPartition) -> Result<Blockwise> {
    part.check(p)?;
    let per_block = part
        .ranges()
        .map(|r| (min_entropy_ind(p.slice(r)) + part.k_b as f64 - part.n_b as f64).max(0.0))
        .collect();
    Ok(Blockwise::from_blocks(per_block))
}

/// Log2-probability of a block response under independent bits.
///
/// Uses one lookup table per 8 positions. Positions with `p_i` in {0, 1}
/// contribute `-inf` for the impossible value, never NaN.
#[derive(Debug, Clone)]
pub struct BlockLogProb {
    tables: Vec<[f64; 256]>,
}

impl BlockLogProb {
    pub fn new(p: &[f64]) -> Self {
        let tables = p
            .chunks(8)
            .map(|chunk| {
                let mut t = [0.0f64; 256];
                for (byte, slot) in t.iter_mut().enumerate() {
                    *slot = chunk
                        .iter()
                        .enumerate()
                        .map(|(j, &pj)| if (byte >> j) & 1 == 1 { pj.log2() } else { (1.0 - pj).log2() })
                        .sum();
                }
                t
            })
            .collect();
        Self { tables }
    }

    #[inline]
    pub fn log_prob(&self, v: Word) -> f64 {
        let mut acc = 0.0;
        for (c, t) in self.tables.iter().enumerate() {
            acc += t[((v >> (8 * c)) & 0xff) as usize];
        }
        acc
    }
}

fn check_block(code: &LinearBlockCode, p_block: &[f64]) -> Result<()> {
    if p_block.len() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            actual: p_block.len(),
        });
    }
    Ok(())
}

const CHUNK: usize = 1 << 12;

/// Deterministic parallel sum of `f(i)` for `i < count`: fixed chunks,
/// compensated partial sums, combined in chunk order.
fn chunked_sum<F>(count: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let hi = ((c + 1) * CHUNK).min(count);
            (c * CHUNK..hi).map(&f).collect::<CompensatedSum>().value()
        })
        .collect();
    partials.into_iter().collect::<CompensatedSum>().value()
}

/// `-log2( (1/|R|) sum_y max_w P(X = y xor w) )` by enumerating every helper
/// data value of the block.
pub fn exact_cond_min_entropy_general(code: &LinearBlockCode, p_block: &[f64]) -> Result<f64> {
    check_block(code, p_block)?;
    if code.n() > MAX_GENERAL_BLOCK_LEN {
        return Err(Error::Capability(format!(
            "enumerating 2^{} helper data values of {}",
            code.n(),
            code.name()
        )));
    }
    let lp = BlockLogProb::new(p_block);
    let words = code.codewords();
    let sum = chunked_sum(1usize << code.n(), |y| {
        let y = y as Word;
        let best = words
            .iter()
            .map(|&w| lp.log_prob(y ^ w))
            .fold(f64::NEG_INFINITY, f64::max);
        best.exp2()
    });
    Ok(neg_log2(sum / words.len() as f64))
}

/// `-log2( sum_{e in E} max_w P(X = e xor w) )` over the coset leaders.
pub fn exact_cond_min_entropy_linear(code: &LinearBlockCode, p_block: &[f64]) -> Result<f64> {
    check_exact_capability(code)?;
    let leaders = coset_leaders(code)?;
    exact_with_leaders(code, &leaders, p_block)
}

fn check_exact_capability(code: &LinearBlockCode) -> Result<()> {
    if code.n() > MAX_EXACT_BLOCK_LEN {
        return Err(Error::Capability(format!(
            "exact conditional min-entropy of {} needs 2^{} probability evaluations per block",
            code.name(),
            code.n()
        )));
    }
    Ok(())
}

/// Same as [`exact_cond_min_entropy_linear`] with a precomputed leader table.
pub fn exact_with_leaders(code: &LinearBlockCode, leaders: &CosetLeaderSet, p_block: &[f64]) -> Result<f64> {
    check_block(code, p_block)?;
    let lp = BlockLogProb::new(p_block);
    let words = code.codewords();
    let lead = leaders.leaders();
    let sum = chunked_sum(lead.len(), |i| {
        let e = lead[i];
        words
            .iter()
            .map(|&w| lp.log_prob(e ^ w))
            .fold(f64::NEG_INFINITY, f64::max)
            .exp2()
    });
    Ok(neg_log2(sum))
}

/// Bit model used for the exact evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitModel {
    /// Every position uses the mean bias of the positions in use.
    Iid,
    /// Every position keeps its own bias.
    Ind,
}

/// Exact conditional min-entropy summed over all blocks.
///
/// Under [`BitModel::Iid`] one block is evaluated with the mean bias of the
/// used positions and multiplied by `N_b`.
pub fn exact_cond_min_entropy_total(
    code: &LinearBlockCode,
    p: &BiasVector,
    part: &BlockPartition,
    model: BitModel,
) -> Result<Blockwise> {
    part.check(p)?;
    check_exact_capability(code)?;
    let leaders = coset_leaders(code)?;
    match model {
        BitModel::Iid => {
            let mean = used_mean(p, part);
            let value = exact_with_leaders(code, &leaders, &vec![mean; code.n()])?;
            Ok(Blockwise::from_blocks(vec![value; part.blocks]))
        }
        BitModel::Ind => {
            let per_block = part
                .ranges()
                .map(|r| exact_with_leaders(code, &leaders, p.slice(r)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Blockwise::from_blocks(per_block))
        }
    }
}

/// Mean bias over the positions covered by the partition.
pub fn used_mean(p: &BiasVector, part: &BlockPartition) -> f64 {
    let used = p.slice(0..part.n_used());
    used.iter().copied().collect::<CompensatedSum>().value() / used.len() as f64
}

/// IID lower bound on the conditional min-entropy of one block.
///
/// Responses are grouped by their number of minority bits `j`; groups are
/// taken in decreasing probability `q^j (1-q)^{n_b-j}` until `2^{n_b-k_b}`
/// responses are covered, the last one partially.
pub fn delvaux_iid_bound(code: &LinearBlockCode, p: f64) -> f64 {
    iid_grouping_bound(code.n(), code.k(), p)
}

pub(crate) fn iid_grouping_bound(n: usize, k: usize, p: f64) -> f64 {
    let q = p.min(1.0 - p);
    let binom = BinomialTable::new(n);
    let mut remaining: u128 = 1u128 << (n - k);
    let mut mass = CompensatedSum::new();
    for j in 0..=n {
        if remaining == 0 {
            break;
        }
        let take = binom.get(n, j).min(remaining);
        remaining -= take;
        let log_q = times_log2(j, q) + times_log2(n - j, 1.0 - q);
        mass.add(((take as f64).log2() + log_q).exp2());
    }
    neg_log2(mass.value())
}

/// `count * log2(x)` with `0 * log2(0) = 0`.
#[inline]
pub(crate) fn times_log2(count: usize, x: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * x.log2()
    }
}

/// All baseline and exact estimates for one code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub code: String,
    pub code_id: String,
    /// Response positions in use.
    pub n: usize,
    pub k: usize,
    pub blocks: usize,
    /// Mean bias of the used positions.
    pub mean_bias: f64,
    pub m: f64,
    pub m_tilde: f64,
    pub l: f64,
    pub l_of_m_tilde: f64,
    pub l_tilde: f64,
    pub h_exact_iid: Option<f64>,
    pub h_exact_ind: Option<f64>,
    pub per_block: PerBlockEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerBlockEntropy {
    /// `m~_i + k_b - n_b`, unclamped.
    pub nk_ind: Vec<f64>,
    /// `max(m~_i + k_b - n_b, 0)`.
    pub l_tilde: Vec<f64>,
    pub exact_iid: Option<Vec<f64>>,
    pub exact_ind: Option<Vec<f64>>,
}

/// Builds the report for `code` over the first positions of `p`.
///
/// Exact values are `None` when the computation exceeds the exact-evaluation
/// capability or `with_exact` is false.
pub fn entropy_report(
    code: &LinearBlockCode,
    p: &BiasVector,
    hash_loss: f64,
    with_exact: bool,
) -> Result<EntropyReport> {
    let part = BlockPartition::new(code, p.len())?;
    let n = part.n_used();
    let used = p.slice(0..n);
    let mean = used_mean(p, &part);
    let m = min_entropy_iid(mean, n);
    let m_tilde = min_entropy_ind(used);
    let k = part.k_total();
    let blockwise = nk_bound_blockwise(p, &part)?;
    let nk_ind = part
        .ranges()
        .map(|r| min_entropy_ind(p.slice(r)) + part.k_b as f64 - part.n_b as f64)
        .collect();

    let exact = |model| -> Result<Option<Blockwise>> {
        if !with_exact {
            return Ok(None);
        }
        match exact_cond_min_entropy_total(code, p, &part, model) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.is_capability() => Ok(None),
            Err(e) => Err(e),
        }
    };
    let iid = exact(BitModel::Iid)?;
    let ind = exact(BitModel::Ind)?;

    Ok(EntropyReport {
        code: code.name(),
        code_id: code.id(),
        n,
        k,
        blocks: part.blocks,
        mean_bias: mean,
        m,
        m_tilde,
        l: nk_bound(m, k as f64, n as f64, hash_loss),
        l_of_m_tilde: nk_bound(m_tilde, k as f64, n as f64, hash_loss),
        l_tilde: blockwise.total,
        h_exact_iid: iid.as_ref().map(|b| b.total),
        h_exact_ind: ind.as_ref().map(|b| b.total),
        per_block: PerBlockEntropy {
            nk_ind,
            l_tilde: blockwise.per_block,
            exact_iid: iid.map(|b| b.per_block),
            exact_ind: ind.map(|b| b.per_block),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{make_bch, make_repetition};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Direct evaluation of the helper-data sum with plain products.
    fn oracle_general(code: &LinearBlockCode, p: &[f64]) -> f64 {
        let n = code.n();
        let prob = |v: Word| -> f64 {
            (0..n)
                .map(|i| if (v >> i) & 1 == 1 { p[i] } else { 1.0 - p[i] })
                .product()
        };
        let mut s = 0.0;
        for y in 0..(1u128 << n) {
            s += code
                .codewords()
                .iter()
                .map(|&w| prob(y ^ w))
                .fold(0.0, f64::max);
        }
        -(s / code.codewords().len() as f64).log2()
    }

    #[test]
    fn iid_examples() {
        assert_eq!(min_entropy_iid(0.5, 8), 8.0);
        assert_eq!(min_entropy_iid(1.0, 100), 0.0);
        assert!(min_entropy_iid(0.0, 3).is_sign_positive());
    }

    #[test]
    fn ind_examples() {
        assert_eq!(min_entropy_ind(&[0.5, 0.5]), 2.0);
        assert_eq!(min_entropy_ind(&[1.0, 0.5]), 1.0);
    }

    #[test]
    fn nk_examples() {
        assert_eq!(nk_bound(239.0, 85.0, 255.0, 0.0), 69.0);
        assert!(close(nk_bound(236.0, 12.0, 252.0, 0.0), -4.0, 1e-12));
    }

    #[test]
    fn blockwise_clamping() {
        let code = make_repetition(3).unwrap();
        let p = BiasVector::new(vec![0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 0.7]).unwrap();
        let part = BlockPartition::new(&code, p.len()).unwrap();
        assert_eq!(part.blocks, 2);
        assert_eq!(part.n_used(), 6);
        let b = nk_bound_blockwise(&p, &part).unwrap();
        assert_eq!(b.per_block, vec![1.0, 0.0]);
        assert_eq!(b.total, 1.0);
    }

    #[test]
    fn exact_rep3_fixed_points() {
        let c = make_repetition(3).unwrap();
        for f in [exact_cond_min_entropy_general, exact_cond_min_entropy_linear] {
            assert!(close(f(&c, &[0.5; 3]).unwrap(), 1.0, 1e-12));
            assert_eq!(f(&c, &[1.0; 3]).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_rep3_against_oracle() {
        let c = make_repetition(3).unwrap();
        let p = [0.9, 0.8, 0.7];
        let expected = oracle_general(&c, &p);
        // frozen from the oracle: -log2(0.504 + 0.216 + 0.126 + 0.056)
        assert!(close(expected, -(0.902f64).log2(), 1e-12));
        assert!(close(exact_cond_min_entropy_general(&c, &p).unwrap(), expected, 1e-12));
        assert!(close(exact_cond_min_entropy_linear(&c, &p).unwrap(), expected, 1e-12));
    }

    #[test]
    fn exact_capability_limits() {
        let c = make_bch(31, 6, 7).unwrap();
        let p = vec![0.6; 31];
        assert!(exact_cond_min_entropy_general(&c, &p).unwrap_err().is_capability());
        assert!(exact_cond_min_entropy_linear(&c, &p).unwrap_err().is_capability());
        let c = make_repetition(3).unwrap();
        assert!(matches!(
            exact_cond_min_entropy_linear(&c, &[0.5; 4]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exact_total_unbiased_is_k() {
        for name in ["rep3", "rep5", "bch7_4_1", "bch15_5_3"] {
            let c = crate::codes::code_by_name(name).unwrap();
            let p = BiasVector::new(vec![0.5; 40]).unwrap();
            let part = BlockPartition::new(&c, p.len()).unwrap();
            for model in [BitModel::Iid, BitModel::Ind] {
                let t = exact_cond_min_entropy_total(&c, &p, &part, model).unwrap();
                assert!(close(t.total, part.k_total() as f64, 1e-9), "{name}");
            }
        }
    }

    #[test]
    fn delvaux_examples() {
        let c = make_repetition(3).unwrap();
        let expected = -(0.729f64 + 3.0 * 0.081).log2();
        assert!(close(delvaux_iid_bound(&c, 0.1), expected, 1e-12));
        assert!(close(delvaux_iid_bound(&c, 0.9), expected, 1e-12));
        for n in [3, 5, 7, 21] {
            let c = make_repetition(n).unwrap();
            assert!(close(delvaux_iid_bound(&c, 0.5), 1.0, 1e-12));
        }
        assert_eq!(delvaux_iid_bound(&c, 0.0), 0.0);
    }

    #[test]
    fn delvaux_bch15_takes_448_from_weight_four() {
        // sum_{j<=3} C(15, j) = 576, 1024 - 576 = 448 responses of weight 4
        let q: f64 = 0.2;
        let qj = |j: i32| q.powi(j) * (1.0 - q).powi(15 - j);
        let mass = qj(0) + 15.0 * qj(1) + 105.0 * qj(2) + 455.0 * qj(3) + 448.0 * qj(4);
        let c = make_bch(15, 5, 3).unwrap();
        assert!(close(delvaux_iid_bound(&c, q), -mass.log2(), 1e-12));
    }

    #[test]
    fn report_marks_large_codes_as_unavailable() {
        let p = BiasVector::new(vec![0.5; 256]).unwrap();
        let c = make_bch(63, 7, 15).unwrap();
        let r = entropy_report(&c, &p, 0.0, true).unwrap();
        assert_eq!(r.n, 252);
        assert_eq!(r.k, 28);
        assert!(r.h_exact_iid.is_none() && r.h_exact_ind.is_none());
        assert_eq!(r.l_tilde, 28.0);
        assert_eq!(r.l, 28.0);
    }
}
