use proptest::prelude::*;
use puf_entropy::codes::code_by_name;
use puf_entropy::entropy::{delvaux_iid_bound, exact_cond_min_entropy_linear};
use puf_entropy::grouping::{
    build_bias_groups, enumerate_top_groups, grouping_bound_block, grouping_bound_groups, BiasGroupSet,
    RepresentativeMode,
};

/// Every flip vector with its cardinality and log-probability, computed
/// with plain products.
fn all_rows(etas: &[usize], thetas: &[f64]) -> Vec<(Vec<u32>, u128, f64)> {
    let mut rows = vec![(Vec::new(), 1u128, 1.0f64)];
    for (&eta, &theta) in etas.iter().zip(thetas) {
        let mut next = Vec::new();
        for (z, psi, prob) in &rows {
            for f in 0..=eta {
                let mut z2 = z.clone();
                z2.push(f as u32);
                let c = binom(eta, f);
                let pr = prob * theta.powi((eta - f) as i32) * (1.0 - theta).powi(f as i32);
                next.push((z2, psi * c, pr));
            }
        }
        rows = next;
    }
    rows.into_iter().map(|(z, psi, pr)| (z, psi, pr.log2())).collect()
}

fn binom(n: usize, k: usize) -> u128 {
    let mut r = 1u128;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Top-`target` mass by a full sort of all response groups.
fn sorted_groups_bound(etas: &[usize], thetas: &[f64], target: u128) -> f64 {
    let mut rows = all_rows(etas, thetas);
    rows.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    let mut left = target;
    let mut mass = 0.0;
    for (_, psi, s) in rows {
        let take = psi.min(left);
        if take > 0 && s.is_finite() {
            mass += take as f64 * s.exp2();
        }
        left -= take;
        if left == 0 {
            break;
        }
    }
    -mass.log2()
}

/// Top-`target` mass by sorting all `2^n` responses under the quantized model.
fn brute_force_bound(p: &[f64], groups: &BiasGroupSet, target: usize) -> f64 {
    let n = p.len();
    let mut theta = vec![0.0; n];
    for g in &groups.groups {
        for &m in &g.members {
            theta[m] = g.theta;
        }
    }
    let mut probs: Vec<f64> = (0..1usize << n)
        .map(|x| (0..n).map(|i| if x >> i & 1 == 1 { theta[i] } else { 1.0 - theta[i] }).product())
        .collect();
    probs.sort_by(|a, b| b.total_cmp(a));
    -probs[..target].iter().sum::<f64>().log2()
}

fn normalized_bias(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..=1.0, n)
}

fn mode() -> impl Strategy<Value = RepresentativeMode> {
    prop_oneof![
        Just(RepresentativeMode::Highest),
        Just(RepresentativeMode::Lowest),
        Just(RepresentativeMode::Mean),
        Just(RepresentativeMode::Median),
    ]
}

#[test]
fn full_enumeration_has_unit_mass() {
    let g = BiasGroupSet::from_counts(&[(3, 0.9), (2, 0.75), (4, 0.6)], RepresentativeMode::Highest).unwrap();
    let t = enumerate_top_groups(&g, 1 << 9, 1000).unwrap();
    assert_eq!(t.omega, t.rows.len() - 1);
    assert_eq!(t.partial_count, t.psi[t.omega]);
    let mass: f64 = t.psi.iter().zip(&t.sigma).map(|(&c, &s)| c as f64 * s.exp2()).sum();
    assert!((mass - 1.0).abs() < 1e-12);
    assert!(t.bound().abs() < 1e-12);
}

#[test]
fn sigma_nonincreasing_and_single_crossing() {
    let g = BiasGroupSet::from_counts(&[(5, 0.93), (4, 0.81), (6, 0.66), (2, 0.52)], RepresentativeMode::Highest)
        .unwrap();
    let t = enumerate_top_groups(&g, 1 << 11, 10_000).unwrap();
    assert!(t.sigma.windows(2).all(|w| w[0] >= w[1]));
    let mut cum = 0u128;
    for (j, &c) in t.psi.iter().enumerate() {
        let before = cum;
        cum += c;
        assert_eq!(cum >= t.target && before < t.target, j == t.omega);
    }
}

#[test]
fn unbiased_mode_lowest_allows_free_group() {
    let p = [0.5, 0.52, 0.53, 0.9, 0.91, 0.7, 0.5];
    let g = build_bias_groups(&p, 0.05, RepresentativeMode::Lowest).unwrap();
    assert_eq!(g.groups.last().unwrap().theta, 0.5);
    let fast = grouping_bound_groups(&g, 4).unwrap();
    let t = enumerate_top_groups(&g, 8, 1000).unwrap();
    assert!((fast.bound - t.bound()).abs() < 1e-12);
    assert!((fast.bound - brute_force_bound(&p, &g, 8)).abs() < 1e-9);
}

#[test]
fn large_block_paths_agree() {
    // 63 positions in 12 groups: the fast path bisects bands, the table
    // follows them literally
    let p: Vec<f64> = (0..63).map(|i| 0.5 + 0.45 * ((i * 37 % 63) as f64 / 62.0)).collect();
    let g = build_bias_groups(&p, 0.04, RepresentativeMode::Highest).unwrap();
    let fast = grouping_bound_groups(&g, 51).unwrap();
    let t = enumerate_top_groups(&g, 1 << 12, 1 << 20).unwrap();
    assert!((fast.bound - t.bound()).abs() < 1e-9, "{} vs {}", fast.bound, t.bound());
    assert_eq!(fast.omega, t.omega as u128);
    assert_eq!(fast.partial_count, t.partial_count);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn table_matches_sorted_groups(
        counts in prop::collection::vec((1usize..5, 0.5f64..=1.0), 1..5),
        k in 0usize..4,
    ) {
        let g = BiasGroupSet::from_counts(&counts, RepresentativeMode::Highest).unwrap();
        let n = g.n_b();
        let k = k.min(n);
        let target = 1u128 << (n - k);
        let oracle = sorted_groups_bound(&g.etas(), &g.thetas(), target);
        let t = enumerate_top_groups(&g, target, 100_000).unwrap();
        let fast = grouping_bound_groups(&g, k).unwrap();
        prop_assert!((t.bound() - oracle).abs() < 1e-9, "table {} oracle {}", t.bound(), oracle);
        prop_assert!((fast.bound - oracle).abs() < 1e-9, "fast {} oracle {}", fast.bound, oracle);
        prop_assert_eq!(fast.omega, t.omega as u128);
        prop_assert_eq!(fast.partial_count, t.partial_count);
    }

    #[test]
    fn coverage_equals_brute_force(
        p in normalized_bias(11),
        theta_delta in 0.0f64..0.3,
        k in 1usize..6,
        mode in mode(),
    ) {
        let g = build_bias_groups(&p, theta_delta, mode).unwrap();
        let target = 1usize << (11 - k);
        let oracle = brute_force_bound(&p, &g, target);
        let r = grouping_bound_groups(&g, k).unwrap();
        prop_assert!((r.bound - oracle).abs() < 1e-9, "{} vs {}", r.bound, oracle);
    }

    #[test]
    fn bound_validity(
        p in normalized_bias(15),
        theta_delta in 0.0f64..0.5,
        which in 0usize..5,
    ) {
        let name = ["rep3", "rep5", "rep7", "bch7_4_1", "bch15_5_3"][which];
        let code = code_by_name(name).unwrap();
        let block = &p[..code.n()];
        let exact = exact_cond_min_entropy_linear(&code, block).unwrap();
        let h = grouping_bound_block(code.n(), code.k(), block, theta_delta, RepresentativeMode::Highest).unwrap();
        prop_assert!(h.bound <= exact + 1e-9, "{name}: {} > {}", h.bound, exact);
    }

    #[test]
    fn repetition_codes_are_tight(p in normalized_bias(21), which in 0usize..10) {
        // rep21 has 2^20 coset leaders; sample it less often
        let n = [3, 3, 3, 5, 5, 5, 7, 7, 7, 21][which];
        let code = code_by_name(&format!("rep{n}")).unwrap();
        let block = &p[..n];
        let exact = exact_cond_min_entropy_linear(&code, block).unwrap();
        let h = grouping_bound_block(n, 1, block, 0.0, RepresentativeMode::Highest).unwrap();
        prop_assert!((h.bound - exact).abs() < 1e-9, "{} vs {}", h.bound, exact);
    }

    #[test]
    fn highest_below_lowest(p in normalized_bias(31), theta_delta in 0.0f64..0.5) {
        let hh = grouping_bound_block(31, 6, &p, theta_delta, RepresentativeMode::Highest).unwrap().bound;
        let hl = grouping_bound_block(31, 6, &p, theta_delta, RepresentativeMode::Lowest).unwrap().bound;
        prop_assert!(hh <= hl + 1e-9);
    }

    #[test]
    fn converges_at_zero_spread(p in normalized_bias(15)) {
        let h0 = grouping_bound_block(15, 5, &p, 0.0, RepresentativeMode::Highest).unwrap().bound;
        let hh = grouping_bound_block(15, 5, &p, 1e-13, RepresentativeMode::Highest).unwrap().bound;
        let hl = grouping_bound_block(15, 5, &p, 1e-13, RepresentativeMode::Lowest).unwrap().bound;
        prop_assert!((hh - h0).abs() < 1e-9 && (hl - h0).abs() < 1e-9);
    }

    #[test]
    fn single_group_is_iid_bound(p in normalized_bias(15)) {
        let code = code_by_name("bch15_5_3").unwrap();
        let g = build_bias_groups(&p, 1.0, RepresentativeMode::Highest).unwrap();
        prop_assert_eq!(g.len(), 1);
        let h = grouping_bound_block(15, 5, &p, 1.0, RepresentativeMode::Highest).unwrap().bound;
        let iid = delvaux_iid_bound(&code, 1.0 - g.groups[0].theta);
        prop_assert!((h - iid).abs() < 1e-12, "{} vs {}", h, iid);
    }

    #[test]
    fn spread_constraint_holds(p in normalized_bias(40), theta_delta in 0.0f64..0.5) {
        let g = build_bias_groups(&p, theta_delta, RepresentativeMode::Highest).unwrap();
        prop_assert_eq!(g.n_b(), 40);
        for grp in &g.groups {
            let vals: Vec<f64> = grp.members.iter().map(|&i| p[i]).collect();
            let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(spread <= theta_delta + 1e-12);
        }
    }
}
