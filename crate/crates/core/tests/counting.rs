use std::collections::HashMap;

use nlsq_core::counting::{
    count_k, psi_bound_ratio, shell, sup_count_three, verify_psi_bound, verify_psi_bound_any, weighted_sum_scale1,
    weighted_sum_scale2, CountQuery, SumNorm, Witness, DEFAULT_SIZE_CAP, THREE_SIGN_PATTERNS,
};
use nlsq_core::tree::{build_tree, for_each_decoration, DecorationBounds, DyadicProfile, Sign, TreeShape};
use nlsq_core::Mode;
use proptest::prelude::*;

/// Histogram of `(a, kappa)` over all unpaired triples in the shells.
fn brute_histogram(sizes: [u32; 3], signs: [Sign; 3]) -> HashMap<(Mode, i64), u64> {
    let sh: Vec<Vec<Mode>> = sizes.iter().map(|&l| shell(l)).collect();
    let sg = signs.map(|s| s.value());
    let mut h = HashMap::new();
    for &a in &sh[0] {
        for &b in &sh[1] {
            for &c in &sh[2] {
                let ks = [a, b, c];
                let mut pair = false;
                for i in 0..3 {
                    for j in i + 1..3 {
                        pair |= sg[i] + sg[j] == 0 && ks[i] == ks[j];
                    }
                }
                if pair {
                    continue;
                }
                let t = a.scaled(sg[0]) + b.scaled(sg[1]) + c.scaled(sg[2]);
                let kappa: i64 = (0..3).map(|i| sg[i] as i64 * ks[i].norm_sq()).sum();
                *h.entry((t, kappa)).or_insert(0) += 1;
            }
        }
    }
    h
}

#[test]
fn two_vector_example_has_two_solutions() {
    let q = CountQuery::new(vec![1, 1], vec![Sign::Plus, Sign::Minus], Mode::new(1, 0), 1).unwrap();
    assert_eq!(count_k(&q, DEFAULT_SIZE_CAP).unwrap(), 2);
}

#[test]
fn parity_infeasible_targets_are_empty() {
    // sum iota |k|^2 and the coordinates of a always agree mod 2.
    for kappa in [-4i64, 0, 2, 6] {
        let q = CountQuery::new(vec![2, 1, 1], vec![Sign::Plus, Sign::Minus, Sign::Plus], Mode::new(1, 0), kappa).unwrap();
        assert_eq!(count_k(&q, DEFAULT_SIZE_CAP).unwrap(), 0);
    }
}

#[test]
fn count_matches_brute_histogram() {
    for signs in THREE_SIGN_PATTERNS {
        let h = brute_histogram([2, 2, 1], signs);
        for (&(a, kappa), &c) in h.iter().take(40) {
            let q = CountQuery::new(vec![2, 2, 1], signs.to_vec(), a, kappa).unwrap();
            assert_eq!(count_k(&q, DEFAULT_SIZE_CAP).unwrap(), c);
        }
    }
}

#[test]
fn triple_supremum_matches_brute_force() {
    for sizes in [[2, 2, 2], [4, 2, 1], [4, 4, 2]] {
        for signs in THREE_SIGN_PATTERNS {
            let h = brute_histogram(sizes, signs);
            let max = h.values().copied().max().unwrap_or(0);
            let row = sup_count_three(sizes, signs, DEFAULT_SIZE_CAP).unwrap();
            assert_eq!(row.sup, max, "{sizes:?} {signs:?}");
            assert_eq!(count_k(&row.query(), DEFAULT_SIZE_CAP).unwrap(), row.sup);
        }
    }
}

#[test]
fn psi_bound_for_s_one_is_at_most_one() {
    let r = verify_psi_bound_any(5, 1.0, 4).unwrap();
    assert!(r.empirical_sup <= 1.0 + 1e-12);
}

#[test]
fn psi_bound_witness_reproduces_supremum() {
    let r = verify_psi_bound(5, 2.5, 4).unwrap();
    assert!(r.empirical_sup.is_finite() && r.empirical_sup > 0.0);
    let Witness::Tuple(t) = &r.witness else { panic!("tuple witness expected") };
    assert_eq!(psi_bound_ratio(t, 2.5).unwrap(), r.empirical_sup);
    // Fully paired tuples have psi = 0.
    let k = Mode::new(3, -2);
    let l = Mode::new(1, 4);
    assert_eq!(psi_bound_ratio(&[k, k, l, l], 2.5).unwrap(), 0.0);
    assert!(verify_psi_bound(5, 1.0, 4).is_err());
}

/// Scale-one sum through the generic decoration walker.
fn walker_sum_scale1(sizes: &[u32], s: f64) -> (f64, f64) {
    let tree = build_tree(&TreeShape::scale_one(sizes.len() - 1)).unwrap();
    let profile = DyadicProfile::on_leaves(&tree, sizes).unwrap();
    let leaves = tree.leaves();
    let (mut l1, mut l2) = (0.0, 0.0);
    for_each_decoration(&tree, &DecorationBounds::profile(profile), 1e9, |m| {
        for (i, &a) in leaves.iter().enumerate() {
            for &b in &leaves[i + 1..] {
                if tree.sign(a) + tree.sign(b) == 0 && m[a] == m[b] {
                    return;
                }
            }
        }
        let (mut psi, mut om) = (0.0, 0i64);
        for n in tree.root_generation() {
            psi += tree.sign(n) as f64 * (m[n].norm_sq() as f64).powf(s);
            om += tree.sign(n) as i64 * m[n].norm_sq();
        }
        let w = (psi / (1.0 + (om as f64).powi(2)).sqrt()).abs();
        l1 += w;
        l2 += w * w;
    })
    .unwrap();
    (l1, l2.sqrt())
}

#[test]
fn scale_one_sums_match_decoration_walker() {
    for sizes in [[4u32, 4, 2, 1], [2, 1, 2, 1], [1, 1, 1, 1]] {
        let (l1, l2) = walker_sum_scale1(&sizes, 2.5);
        let a = weighted_sum_scale1(&sizes, 2.5, SumNorm::L1, 0.1, 1e9).unwrap();
        let b = weighted_sum_scale1(&sizes, 2.5, SumNorm::L2, 0.1, 1e9).unwrap();
        assert!((a.empirical_sup - l1).abs() <= 1e-9 * l1.max(1.0));
        assert!((b.empirical_sup - l2).abs() <= 1e-9 * l2.max(1.0));
        assert!(a.ratio.is_finite() && b.ratio.is_finite());
    }
}

#[test]
fn unreachable_profile_gives_zero() {
    let r = weighted_sum_scale1(&[1, 1, 1, 16], 2.5, SumNorm::L1, 0.1, 1e9).unwrap();
    assert_eq!(r.empirical_sup, 0.0);
    let tree = build_tree(&TreeShape::scale_two(3, 0)).unwrap();
    let r = weighted_sum_scale2(&tree, &[1, 1, 1, 1, 1, 16], 2.5, 0.1, 1e9).unwrap();
    assert_eq!(r.report.empirical_sup, 0.0);
}

#[test]
fn scale_two_sum_matches_decoration_walker() {
    for position in 0..3 {
        let tree = build_tree(&TreeShape::scale_two(3, position)).unwrap();
        let sizes = [1u32; 6];
        let fast = weighted_sum_scale2(&tree, &sizes, 2.5, 0.1, 1e9).unwrap();
        let profile = DyadicProfile::on_leaves(&tree, &sizes).unwrap();
        let gen1 = tree.root_leaves();
        let gen2 = tree.branch_leaves();
        let b = tree.branch().unwrap();
        let (mut total, mut degenerate) = (0.0, 0.0);
        for_each_decoration(&tree, &DecorationBounds::profile(profile), 1e9, |m| {
            for group in [&gen1, &gen2] {
                for (i, &x) in group.iter().enumerate() {
                    for &y in &group[i + 1..] {
                        if tree.sign(x) + tree.sign(y) == 0 && m[x] == m[y] {
                            return;
                        }
                    }
                }
            }
            let (mut psi, mut om) = (0.0, 0i64);
            for n in tree.root_generation() {
                psi += tree.sign(n) as f64 * (m[n].norm_sq() as f64).powf(2.5);
                om += tree.sign(n) as i64 * m[n].norm_sq();
            }
            let w = psi * psi / (1.0 + (om as f64).powi(2));
            total += w;
            if gen1.iter().any(|&l| m[l].scaled(tree.sign(l)) + m[b].scaled(tree.sign(b)) == Mode::ZERO) {
                degenerate += w;
            }
        })
        .unwrap();
        assert!((fast.report.empirical_sup - total).abs() <= 1e-9 * total.max(1.0));
        assert!((fast.degenerate - degenerate).abs() <= 1e-9 * degenerate.max(1.0));
        assert!(total > 0.0);
    }
}

#[test]
fn scale_two_ratios_are_finite() {
    let tree = build_tree(&TreeShape::scale_two(3, 0)).unwrap();
    for sizes in [[4u32, 1, 1, 2, 1, 4], [8, 1, 1, 4, 1, 8]] {
        let r = weighted_sum_scale2(&tree, &sizes, 2.5, 0.1, 1e9).unwrap();
        assert!(r.report.empirical_sup > 0.0 && r.report.ratio.is_finite(), "{r:?}");
        assert!((0.0..=1.0).contains(&r.degenerate_share));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_are_invariant_under_global_negation(ax in -5i32..6, ay in -5i32..6, kappa in -20i64..21, p in 0usize..4) {
        let q = CountQuery::new(vec![2, 1, 1], THREE_SIGN_PATTERNS[p].to_vec(), Mode::new(ax, ay), kappa).unwrap();
        prop_assert_eq!(count_k(&q, 16).unwrap(), count_k(&q.negated(), 16).unwrap());
    }

    #[test]
    fn ratios_shrink_as_epsilon_grows(e1 in 0.01f64..0.5, de in 0.0f64..0.5) {
        let a = weighted_sum_scale1(&[4, 2, 2, 1], 2.5, SumNorm::L2, e1, 1e9).unwrap();
        let b = weighted_sum_scale1(&[4, 2, 2, 1], 2.5, SumNorm::L2, e1 + de, 1e9).unwrap();
        prop_assert!(b.ratio <= a.ratio);
        let row = sup_count_three([4, 2, 2], THREE_SIGN_PATTERNS[1], 16).unwrap();
        prop_assert!(row.sup as f64 / row.bound(e1 + de) <= row.sup as f64 / row.bound(e1));
    }
}
