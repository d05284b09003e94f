//! The grouping bound on average conditional min-entropy for independent,
//! non-identically distributed response bits.
//!
//! Biases of one block (normalized so every `p_i >= 0.5`) are quantized into
//! `T` groups of spread at most `theta_delta`, each with a representative
//! `theta_tau`. Under the quantized model the probability of a response only
//! depends on how many bits are flipped in each group, so responses fall into
//! response groups identified by a flip vector `zeta`. The `2^{n_b - k_b}` most
//! probable responses are collected group by group in order of decreasing
//! probability; their total mass `S` bounds the sum over coset maxima from
//! above, so `-log2(S)` is a lower bound on the conditional min-entropy when
//! every representative is the highest member bias.
//!
//! Log-probabilities are handled as penalties relative to the best guess
//! `x = 1...1`: flipping one bit of group `tau` costs
//! `d_tau = log2(theta_tau) - log2(1 - theta_tau) >= 0`, and a flip vector has
//! `sigma = sigma_0 - sum_tau zeta_tau d_tau`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::LinearBlockCode;
use crate::dataset::{normalize_bias, BiasVector};
use crate::entropy::{times_log2, BlockPartition};
use crate::numeric::{neg_log2, BinomialTable, CompensatedSum};
use crate::{Error, Result};

/// Slack on the spread comparison so that decimal thresholds such as 0.05
/// are not lost to binary rounding of the biases.
pub const SPREAD_EPSILON: f64 = 1e-12;

/// Largest band materialized when locating the cutoff row.
const CUTOFF_ROW_LIMIT: u128 = 1 << 16;

const MAX_BISECTIONS: usize = 400;

/// Flip vectors enumerated per half of the group list.
const HALF_ROW_LIMIT: u64 = 1 << 23;

/// Representative chosen for a bias group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentativeMode {
    /// Largest member bias; yields a strict lower bound.
    Highest,
    /// Smallest member bias; an estimate, not a bound.
    Lowest,
    Mean,
    Median,
}

impl std::str::FromStr for RepresentativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "highest" => Ok(Self::Highest),
            "lowest" => Ok(Self::Lowest),
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            _ => Err(Error::Parameter(format!("unknown representative mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGroup {
    /// Positions within the block, in descending bias order.
    pub members: Vec<usize>,
    pub eta: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGroupSet {
    pub theta_delta: f64,
    pub mode: RepresentativeMode,
    /// Groups in descending bias order.
    pub groups: Vec<BiasGroup>,
}

impl BiasGroupSet {
    /// Builds a set directly from `(eta, theta)` pairs.
    pub fn from_counts(counts: &[(usize, f64)], mode: RepresentativeMode) -> Result<Self> {
        let mut next = 0;
        let groups = counts
            .iter()
            .map(|&(eta, theta)| {
                if !(0.5..=1.0).contains(&theta) || eta == 0 {
                    return Err(Error::Parameter(format!(
                        "group needs eta >= 1 and theta in [0.5, 1], got ({eta}, {theta})"
                    )));
                }
                let members = (next..next + eta).collect();
                next += eta;
                Ok(BiasGroup { members, eta, theta })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            theta_delta: f64::NAN,
            mode,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Block length, the sum of all `eta`.
    pub fn n_b(&self) -> usize {
        self.groups.iter().map(|g| g.eta).sum()
    }

    pub fn etas(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.eta).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.theta).collect()
    }

    /// `sigma_0 = sum_tau eta_tau log2(theta_tau)`, the best-guess log-probability.
    pub fn best_log_prob(&self) -> f64 {
        self.groups.iter().map(|g| times_log2(g.eta, g.theta)).sum()
    }
}

/// Greedy quantization: sort descending, open a new group whenever the next
/// bias is more than `theta_delta` below the group's first member.
pub fn build_bias_groups(p_block: &[f64], theta_delta: f64, mode: RepresentativeMode) -> Result<BiasGroupSet> {
    if !(theta_delta >= 0.0) {
        return Err(Error::Parameter(format!("theta_delta must be >= 0, got {theta_delta}")));
    }
    if p_block.is_empty() {
        return Err(Error::Parameter("empty bias block".into()));
    }
    if let Some((i, p)) = p_block.iter().enumerate().find(|(_, p)| !(0.5..=1.0).contains(*p)) {
        return Err(Error::Parameter(format!(
            "bias p[{i}] = {p} is not normalized to [0.5, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..p_block.len()).collect();
    order.sort_by(|&a, &b| p_block[b].total_cmp(&p_block[a]).then(a.cmp(&b)));

    let mut groups = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for idx in order {
        if let Some(&first) = current.first() {
            if p_block[first] - p_block[idx] > theta_delta + SPREAD_EPSILON {
                groups.push(finish_group(std::mem::take(&mut current), p_block, mode));
            }
        }
        current.push(idx);
    }
    groups.push(finish_group(current, p_block, mode));
    Ok(BiasGroupSet {
        theta_delta,
        mode,
        groups,
    })
}

fn finish_group(members: Vec<usize>, p: &[f64], mode: RepresentativeMode) -> BiasGroup {
    // members are sorted by descending bias
    let vals: Vec<f64> = members.iter().map(|&i| p[i]).collect();
    let theta = match mode {
        RepresentativeMode::Highest => vals[0],
        RepresentativeMode::Lowest => vals[vals.len() - 1],
        RepresentativeMode::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
        RepresentativeMode::Median => {
            let m = vals.len();
            if m % 2 == 1 {
                vals[m / 2]
            } else {
                0.5 * (vals[m / 2 - 1] + vals[m / 2])
            }
        }
    };
    BiasGroup {
        eta: members.len(),
        members,
        theta,
    }
}

/// `log2(1 - theta) - log2(theta)` per group; `-inf` for `theta == 1`.
fn flip_log_ratios(groups: &BiasGroupSet) -> Vec<f64> {
    groups
        .groups
        .iter()
        .map(|g| (1.0 - g.theta).log2() - g.theta.log2())
        .collect()
}

/// Log2-probability of one response in each response group:
/// `sigma_j = sigma_0 + sum_tau zeta_{j,tau} (log2(1 - theta_tau) - log2(theta_tau))`.
///
/// Rows flipping a bit of a group with `theta == 1` get `-inf`.
pub fn group_log_probs(groups: &BiasGroupSet, rows: &[Vec<u32>]) -> Result<Vec<f64>> {
    let sigma0 = groups.best_log_prob();
    let ratios = flip_log_ratios(groups);
    rows.iter()
        .map(|row| {
            if row.len() != groups.len() {
                return Err(Error::LengthMismatch {
                    expected: groups.len(),
                    actual: row.len(),
                });
            }
            let mut s = 0.0;
            for ((&z, &r), g) in row.iter().zip(&ratios).zip(&groups.groups) {
                if z as usize > g.eta {
                    return Err(Error::Parameter(format!("flip count {z} exceeds group size {}", g.eta)));
                }
                if z > 0 {
                    s += z as f64 * r;
                }
            }
            Ok(sigma0 + s)
        })
        .collect()
}

/// `psi_j = prod_tau C(eta_tau, zeta_{j,tau})`.
fn row_cardinality(binom: &BinomialTable, etas: &[usize], row: &[u32]) -> u128 {
    etas.iter()
        .zip(row)
        .map(|(&eta, &z)| binom.get(eta, z as usize))
        .product()
}

/// Flip vectors over a contiguous run of free groups, sorted by penalty and
/// then lexicographically.
struct HalfSpace {
    /// `eta + 1` per group; row codes are mixed-radix, first group most significant.
    radix: Vec<u64>,
    penalty: Vec<f64>,
    psi: Vec<u128>,
    code: Vec<u64>,
    /// `psi 2^-penalty` per row.
    weight: Vec<f64>,
    /// Prefix sums over the sorted rows.
    cum_psi: Vec<u128>,
    cum_weight: Vec<f64>,
}

impl HalfSpace {
    fn new(eta: &[usize], d: &[f64], binom: &BinomialTable) -> Result<Self> {
        let radix: Vec<u64> = eta.iter().map(|&e| e as u64 + 1).collect();
        let count = radix.iter().try_fold(1u64, |acc, &r| acc.checked_mul(r)).filter(|&c| c <= HALF_ROW_LIMIT);
        let Some(count) = count else {
            return Err(Error::Capability(format!(
                "flip space of {} groups exceeds {HALF_ROW_LIMIT} rows per half",
                eta.len()
            )));
        };
        let mut rows: Vec<(f64, u64, u128)> = Vec::with_capacity(count as usize);
        let mut z = vec![0usize; eta.len()];
        for code in 0..count {
            let mut pen = 0.0;
            let mut psi = 1u128;
            for (g, &f) in z.iter().enumerate() {
                if f > 0 {
                    pen += f as f64 * d[g];
                    psi *= binom.get(eta[g], f);
                }
            }
            rows.push((pen, code, psi));
            // increment the mixed-radix counter, last group fastest
            for g in (0..z.len()).rev() {
                z[g] += 1;
                if z[g] <= eta[g] {
                    break;
                }
                z[g] = 0;
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let penalty: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let code: Vec<u64> = rows.iter().map(|r| r.1).collect();
        let psi: Vec<u128> = rows.iter().map(|r| r.2).collect();
        let weight: Vec<f64> = rows.iter().map(|r| ((r.2 as f64).log2() - r.0).exp2()).collect();
        let mut cum_psi = Vec::with_capacity(rows.len() + 1);
        let mut cum_weight = Vec::with_capacity(rows.len() + 1);
        let mut acc_psi = 0u128;
        let mut acc_w = CompensatedSum::new();
        cum_psi.push(0);
        cum_weight.push(0.0);
        for (&p, &w) in psi.iter().zip(&weight) {
            acc_psi += p;
            acc_w.add(w);
            cum_psi.push(acc_psi);
            cum_weight.push(acc_w.value());
        }
        Ok(Self {
            radix,
            penalty,
            psi,
            code,
            weight,
            cum_psi,
            cum_weight,
        })
    }

    fn len(&self) -> usize {
        self.penalty.len()
    }

    fn decode(&self, mut code: u64, out: &mut Vec<u32>) {
        let start = out.len();
        for &r in self.radix.iter().rev() {
            out.push((code % r) as u32);
            code /= r;
        }
        out[start..].reverse();
    }
}

/// Flip space of the groups with `theta < 1`; rows flipping a `theta == 1`
/// group have probability zero and are handled separately.
///
/// The free groups are split into two halves enumerated separately. The
/// penalty of a row is `P_A + P_B`, each half summed in group order; floating
/// addition is monotone in both arguments, so pairs below a threshold form a
/// prefix of the second half for every row of the first.
struct FlipSpace {
    /// Index into the full group list for every free group.
    free: Vec<usize>,
    penalty: Vec<f64>,
    a: HalfSpace,
    b: HalfSpace,
    free_bits: u32,
    total_groups: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct BandStats {
    responses: u128,
    rows: u128,
    /// `sum psi 2^-penalty`, to be scaled by `2^sigma_0`.
    weight: CompensatedSum,
}

struct BandRow {
    zeta: Vec<u32>,
    psi: u128,
    penalty: f64,
}

impl FlipSpace {
    fn new(groups: &BiasGroupSet) -> Result<Self> {
        let free: Vec<usize> = (0..groups.len()).filter(|&i| groups.groups[i].theta < 1.0).collect();
        let eta: Vec<usize> = free.iter().map(|&i| groups.groups[i].eta).collect();
        let penalty: Vec<f64> = free
            .iter()
            .map(|&i| {
                let t = groups.groups[i].theta;
                t.log2() - (1.0 - t).log2()
            })
            .collect();
        // balance the two halves by row count
        let rows = |s: &[usize]| s.iter().fold(1u128, |acc, &e| acc.saturating_mul(e as u128 + 1));
        let split = (0..=eta.len())
            .min_by_key(|&s| rows(&eta[..s]).max(rows(&eta[s..])))
            .unwrap_or(0);
        let binom = BinomialTable::new(groups.n_b().min(127));
        let a = HalfSpace::new(&eta[..split], &penalty[..split], &binom)?;
        let b = HalfSpace::new(&eta[split..], &penalty[split..], &binom)?;
        Ok(Self {
            free_bits: eta.iter().sum::<usize>() as u32,
            free,
            penalty,
            a,
            b,
            total_groups: groups.len(),
        })
    }

    fn finite_responses(&self) -> u128 {
        1u128 << self.free_bits
    }

    fn rows(&self) -> u128 {
        self.a.len() as u128 * self.b.len() as u128
    }

    fn max_penalty(&self) -> f64 {
        self.a.penalty[self.a.len() - 1] + self.b.penalty[self.b.len() - 1]
    }

    /// Smallest strictly positive single-flip penalty.
    fn initial_width(&self) -> f64 {
        self.penalty
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Responses, rows and weight of all rows with penalty below `c`.
    fn below(&self, c: f64) -> BandStats {
        let mut stats = BandStats::default();
        let mut j = self.b.len();
        for i in 0..self.a.len() {
            let pa = self.a.penalty[i];
            while j > 0 && !(pa + self.b.penalty[j - 1] < c) {
                j -= 1;
            }
            if j == 0 {
                break;
            }
            stats.responses += self.a.psi[i] * self.b.cum_psi[j];
            stats.rows += j as u128;
            stats.weight.add(self.a.weight[i] * self.b.cum_weight[j]);
        }
        stats
    }

    /// Materializes the rows with penalty in `[lo, hi)`, sorted by penalty
    /// and then lexicographically by flip vector.
    fn rows_in(&self, lo: f64, hi: f64, limit: usize) -> Result<Vec<BandRow>> {
        let mut out = Vec::new();
        let mut free_zeta = Vec::with_capacity(self.free.len());
        for i in 0..self.a.len() {
            let pa = self.a.penalty[i];
            if !(pa + self.b.penalty[0] < hi) {
                break;
            }
            let start = self.b.penalty.partition_point(|&pb| pa + pb < lo);
            let end = self.b.penalty.partition_point(|&pb| pa + pb < hi);
            for j in start..end {
                if out.len() >= limit {
                    return Err(Error::Capability(format!("response group table exceeds {limit} rows")));
                }
                free_zeta.clear();
                self.a.decode(self.a.code[i], &mut free_zeta);
                self.b.decode(self.b.code[j], &mut free_zeta);
                out.push(BandRow {
                    zeta: self.expand(&free_zeta),
                    psi: self.a.psi[i] * self.b.psi[j],
                    penalty: pa + self.b.penalty[j],
                });
            }
        }
        out.sort_by(|a, b| a.penalty.total_cmp(&b.penalty).then_with(|| a.zeta.cmp(&b.zeta)));
        Ok(out)
    }

    /// Flip vector over all groups from one over the free groups.
    fn expand(&self, free_zeta: &[u32]) -> Vec<u32> {
        let mut full = vec![0u32; self.total_groups];
        for (&g, &z) in self.free.iter().zip(free_zeta) {
            full[g] = z;
        }
        full
    }
}

/// Result of the grouping bound for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingBlockResult {
    /// `-log2(S)` in bits.
    pub bound: f64,
    /// Number of bias groups `T`.
    pub groups: usize,
    /// Index `Omega` of the cutoff row in the sorted table. When the target
    /// reaches zero-probability responses this is the number of finite rows.
    pub omega: u128,
    /// Responses taken from the cutoff row, or from the zero-probability rows
    /// together.
    pub partial_count: u128,
    /// `sigma_Omega`, `-inf` when the target reaches zero-probability rows.
    pub cutoff_log_prob: f64,
}

/// Grouping bound of a block of normalized biases for an `(n_b, k_b)` code.
pub fn grouping_bound_block(
    n_b: usize,
    k_b: usize,
    p_block: &[f64],
    theta_delta: f64,
    mode: RepresentativeMode,
) -> Result<GroupingBlockResult> {
    if p_block.len() != n_b {
        return Err(Error::LengthMismatch {
            expected: n_b,
            actual: p_block.len(),
        });
    }
    let groups = build_bias_groups(p_block, theta_delta, mode)?;
    grouping_bound_groups(&groups, k_b)
}

/// Grouping bound for an explicit group set, target `2^{n_b - k_b}` responses.
///
/// The cutoff row is located by bisecting a penalty threshold until the rows
/// between the bracketing thresholds are few enough to sort explicitly.
pub fn grouping_bound_groups(groups: &BiasGroupSet, k_b: usize) -> Result<GroupingBlockResult> {
    let n_b = groups.n_b();
    if k_b > n_b || n_b > 127 {
        return Err(Error::Parameter(format!("invalid code dimensions ({n_b}, {k_b})")));
    }
    let target: u128 = 1u128 << (n_b - k_b);
    let space = FlipSpace::new(groups)?;
    let sigma0 = groups.best_log_prob();

    if space.finite_responses() <= target {
        // every response of positive probability is among the best guesses
        let rows = space.rows();
        let (omega, partial_count, cutoff_log_prob) = if space.finite_responses() == target {
            // the all-flipped row over the free groups has psi = 1
            (rows - 1, 1, sigma0 - space.max_penalty())
        } else {
            (rows, target - space.finite_responses(), f64::NEG_INFINITY)
        };
        return Ok(GroupingBlockResult {
            bound: 0.0,
            groups: groups.len(),
            omega,
            partial_count,
            cutoff_log_prob,
        });
    }

    let mut lo = 0.0f64;
    let mut lo_stats = BandStats::default();
    let mut hi = space.max_penalty() + 1.0;
    let mut hi_rows = space.rows();
    for _ in 0..MAX_BISECTIONS {
        if hi_rows - lo_stats.rows <= CUTOFF_ROW_LIMIT {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if !(mid > lo && mid < hi) {
            break;
        }
        let s = space.below(mid);
        if s.responses >= target {
            hi = mid;
            hi_rows = s.rows;
        } else {
            lo = mid;
            lo_stats = s;
        }
    }

    let mut taken = lo_stats.responses;
    let mut mass = CompensatedSum::new();
    mass.add((lo_stats.weight.value().log2() + sigma0).exp2());
    let rows = space.rows_in(lo, hi, usize::MAX)?;
    for (i, row) in rows.iter().enumerate() {
        let sigma = sigma0 - row.penalty;
        if taken + row.psi >= target {
            let partial = target - taken;
            mass.add(((partial as f64).log2() + sigma).exp2());
            return Ok(GroupingBlockResult {
                bound: neg_log2(mass.value()),
                groups: groups.len(),
                omega: lo_stats.rows + i as u128,
                partial_count: partial,
                cutoff_log_prob: sigma,
            });
        }
        taken += row.psi;
        mass.add(((row.psi as f64).log2() + sigma).exp2());
    }
    unreachable!("bracketing thresholds hold the cutoff row")
}

/// Sorted prefix of response groups, rows `0..=omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseGroupTable {
    pub etas: Vec<usize>,
    pub thetas: Vec<f64>,
    /// Flip vectors `zeta_j`, one per row.
    pub rows: Vec<Vec<u32>>,
    /// Cardinalities `psi_j`.
    pub psi: Vec<u128>,
    /// Log2-probabilities `sigma_j` of one response of the group.
    pub sigma: Vec<f64>,
    pub omega: usize,
    pub partial_count: u128,
    pub target: u128,
}

impl ResponseGroupTable {
    /// `-log2( sum_{j < Omega} psi_j 2^sigma_j + partial 2^sigma_Omega )`.
    pub fn bound(&self) -> f64 {
        let mut mass = CompensatedSum::new();
        for j in 0..self.omega {
            mass.add(((self.psi[j] as f64).log2() + self.sigma[j]).exp2());
        }
        mass.add(((self.partial_count as f64).log2() + self.sigma[self.omega]).exp2());
        neg_log2(mass.value())
    }

    /// `row,zeta_1..zeta_T,psi,sigma` with a leading header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for t in 0..self.etas.len() {
            out.push_str(&format!(",zeta_{}", t + 1));
        }
        out.push_str(",psi,sigma\n");
        for (j, row) in self.rows.iter().enumerate() {
            out.push_str(&j.to_string());
            for z in row {
                out.push_str(&format!(",{z}"));
            }
            out.push_str(&format!(",{},{}\n", self.psi[j], self.sigma[j]));
        }
        out
    }
}

/// Generates the sorted response-group table up to the cutoff row.
///
/// Rows are produced in descending-probability bands: all flip vectors whose
/// penalty falls in the current window are found by pairing the two sorted
/// halves of the flip space, sorted and appended. The window starts at the
/// smallest single-flip penalty and doubles whenever a band is empty. Rows of probability zero
/// follow all others in lexicographic order. Fails with a capability error if
/// more than `max_rows` rows would be stored.
pub fn enumerate_top_groups(groups: &BiasGroupSet, target: u128, max_rows: usize) -> Result<ResponseGroupTable> {
    let n_b = groups.n_b();
    if n_b > 127 || target > (1u128 << n_b) || target == 0 {
        return Err(Error::Parameter(format!(
            "target {target} outside 1..=2^{n_b}"
        )));
    }
    let space = FlipSpace::new(groups)?;
    let sigma0 = groups.best_log_prob();
    let max_penalty = space.max_penalty();

    let mut table = ResponseGroupTable {
        etas: groups.etas(),
        thetas: groups.thetas(),
        rows: Vec::new(),
        psi: Vec::new(),
        sigma: Vec::new(),
        omega: 0,
        partial_count: 0,
        target,
    };
    let mut taken: u128 = 0;
    let mut push = |table: &mut ResponseGroupTable, zeta: Vec<u32>, psi: u128, sigma: f64| -> Result<bool> {
        if table.rows.len() >= max_rows {
            return Err(Error::Capability(format!("response group table exceeds {max_rows} rows")));
        }
        table.rows.push(zeta);
        table.psi.push(psi);
        table.sigma.push(sigma);
        if taken + psi >= target {
            table.omega = table.rows.len() - 1;
            table.partial_count = target - taken;
            return Ok(true);
        }
        taken += psi;
        Ok(false)
    };

    let mut lo = 0.0f64;
    let mut width = space.initial_width();
    while lo <= max_penalty {
        let hi = if width.is_finite() { lo + width } else { f64::INFINITY };
        let band = space.rows_in(lo, hi, max_rows.saturating_sub(table.rows.len()).saturating_add(1))?;
        if band.is_empty() {
            width *= 2.0;
        }
        for row in band {
            if push(&mut table, row.zeta, row.psi, sigma0 - row.penalty)? {
                return Ok(table);
            }
        }
        lo = hi;
    }

    // zero-probability rows: at least one flip in a group with theta == 1
    let etas = groups.etas();
    let binom = BinomialTable::new(n_b);
    let fixed: Vec<bool> = groups.groups.iter().map(|g| g.theta >= 1.0).collect();
    let mut zeta = vec![0u32; etas.len()];
    let mut done = false;
    zero_rows_rec(0, false, &etas, &fixed, &mut zeta, &mut |z: &[u32]| -> Result<bool> {
        let psi = row_cardinality(&binom, &etas, z);
        done = push(&mut table, z.to_vec(), psi, f64::NEG_INFINITY)?;
        Ok(done)
    })?;
    if done {
        Ok(table)
    } else {
        unreachable!("all 2^n_b responses cover any valid target")
    }
}

fn zero_rows_rec<F>(
    tau: usize,
    has_fixed_flip: bool,
    etas: &[usize],
    fixed: &[bool],
    zeta: &mut [u32],
    visit: &mut F,
) -> Result<bool>
where
    F: FnMut(&[u32]) -> Result<bool>,
{
    if tau == etas.len() {
        return if has_fixed_flip { visit(zeta) } else { Ok(false) };
    }
    if !has_fixed_flip && !fixed[tau..].iter().any(|&f| f) {
        return Ok(false);
    }
    for z in 0..=etas[tau] {
        zeta[tau] = z as u32;
        if zero_rows_rec(tau + 1, has_fixed_flip || (fixed[tau] && z > 0), etas, fixed, zeta, visit)? {
            return Ok(true);
        }
    }
    zeta[tau] = 0;
    Ok(false)
}

/// Grouping bound summed over all blocks of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingTotal {
    pub total: f64,
    pub per_block: Vec<f64>,
    pub blocks: Vec<GroupingBlockResult>,
}

/// Normalizes each block and sums the per-block grouping bounds.
pub fn grouping_bound_total(
    code: &LinearBlockCode,
    p: &BiasVector,
    part: &BlockPartition,
    theta_delta: f64,
    mode: RepresentativeMode,
) -> Result<GroupingTotal> {
    if p.len() < part.n_used() {
        return Err(Error::LengthMismatch {
            expected: part.n_used(),
            actual: p.len(),
        });
    }
    let (normalized, _) = normalize_bias(p);
    let blocks = (0..part.blocks)
        .into_par_iter()
        .map(|i| {
            grouping_bound_block(
                code.n(),
                code.k(),
                normalized.slice(part.block_range(i)),
                theta_delta,
                mode,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let per_block: Vec<f64> = blocks.iter().map(|b| b.bound).collect();
    let total = per_block.iter().copied().collect::<CompensatedSum>().value();
    Ok(GroupingTotal {
        total,
        per_block,
        blocks,
    })
}

/// `H^H` (highest representatives, a bound), `H^L` (lowest, an estimate) and
/// the quantization error `H^L - H^H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationBracket {
    pub h_high: f64,
    pub h_low: f64,
    pub error: f64,
}

pub fn quantization_error_bracket(
    n_b: usize,
    k_b: usize,
    p_block: &[f64],
    theta_delta: f64,
) -> Result<QuantizationBracket> {
    let h_high = grouping_bound_block(n_b, k_b, p_block, theta_delta, RepresentativeMode::Highest)?.bound;
    let h_low = grouping_bound_block(n_b, k_b, p_block, theta_delta, RepresentativeMode::Lowest)?.bound;
    Ok(QuantizationBracket {
        h_high,
        h_low,
        error: h_low - h_high,
    })
}
