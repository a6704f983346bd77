mod common;

use commgen::stats::{
    bonferroni, pearson, significance_arrows, summarize, t_test, wilcoxon_signed_rank, Direction,
    WILCOXON_EXACT_MAX,
};
use common::*;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn welch_matches_integrated_density() {
    let a = [1.0, 2.0, 3.0, 4.0, 10.0];
    let b = [2.0, 2.5, 8.0, 9.0, 11.0, 12.0];
    let r = t_test(&a, &b).unwrap();
    let (t, p) = welch_oracle(&a, &b);
    assert!(close(r.statistic, t, 1e-12));
    assert!(close(r.p_value, p, 1e-9));
    assert!(close(r.p_value, 0.17939756596330442, 1e-9));
}

#[test]
fn pearson_reference_value() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [2.0, 1.0, 4.0, 3.0, 7.0, 5.0];
    let r = pearson(&x, &y).unwrap();
    assert!(close(r.statistic, 0.7917946548886297, 1e-12));
    assert!(close(r.p_value, 0.06051140336275659, 1e-9));
    let (ro, po) = pearson_oracle(&x, &y);
    assert!(close(r.statistic, ro, 1e-12) && close(r.p_value, po, 1e-9));
}

#[test]
fn wilcoxon_normal_approximation_with_ties() {
    let a: Vec<f64> = (0..30).map(|i| f64::from((i * 7) % 11)).collect();
    let b: Vec<f64> = (0..30)
        .map(|i| f64::from((i * 5) % 9) + 0.5 * f64::from(i % 2))
        .collect();
    let r = wilcoxon_signed_rank(&a, &b).unwrap();
    assert_eq!(r.statistic, 269.5);
    assert!(close(r.p_value, 0.12963873041803908, 1e-9));
}

#[test]
fn wilcoxon_normal_approximation_one_sided_data() {
    let a: Vec<f64> = (0..40)
        .map(|i| f64::from(i) * 0.37 + f64::from((i * 13) % 5))
        .collect();
    let b: Vec<f64> = (0..40).map(|i| f64::from(i) * 0.35).collect();
    let r = wilcoxon_signed_rank(&a, &b).unwrap();
    assert_eq!(r.statistic, 780.0);
    assert!(close(r.p_value, 5.255295360476943e-08, 1e-9));
    assert_eq!(r.direction, Direction::Positive);
}

#[test]
fn exact_cutoff_is_documented_size() {
    assert_eq!(WILCOXON_EXACT_MAX, 25);
}

#[test]
fn summary_of_single_value() {
    let s = summarize(&[4.0]);
    assert_eq!((s.mean, s.se, s.n), (4.0, 0.0, 1));
    let s = summarize(&[1.0, 3.0]);
    assert_eq!(s.se, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wilcoxon_matches_enumeration(
        pairs in prop::collection::vec((0u8..9, 0u8..9), 5..=12)
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let b: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let nonzero = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        match wilcoxon_signed_rank(&a, &b) {
            Ok(r) if nonzero > 0 => {
                let (w, p) = wilcoxon_enumeration(&a, &b);
                prop_assert!(close(r.statistic, w, 1e-12));
                prop_assert!(close(r.p_value, p, 1e-9));
            }
            Ok(r) => prop_assert_eq!(r.p_value, 1.0),
            Err(_) => prop_assert!(nonzero < 5),
        }
    }

    #[test]
    fn welch_and_pearson_match_oracles(
        xs in prop::collection::vec(-50.0f64..50.0, 4..15),
        ys in prop::collection::vec(-50.0f64..50.0, 4..15),
    ) {
        let r = t_test(&xs, &ys).unwrap();
        let (t, p) = welch_oracle(&xs, &ys);
        prop_assert!(close(r.statistic, t, 1e-9 * t.abs().max(1.0)));
        prop_assert!(close(r.p_value, p, 1e-9));
        let n = xs.len().min(ys.len());
        let c = pearson(&xs[..n], &ys[..n]).unwrap();
        let (ro, po) = pearson_oracle(&xs[..n], &ys[..n]);
        prop_assert!(close(c.statistic, ro, 1e-9));
        prop_assert!(close(c.p_value, po, 1e-9));
    }

    #[test]
    fn t_test_is_antisymmetric(
        xs in prop::collection::vec(-5.0f64..5.0, 3..10),
        ys in prop::collection::vec(-5.0f64..5.0, 3..10),
    ) {
        let ab = t_test(&xs, &ys).unwrap();
        let ba = t_test(&ys, &xs).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn bonferroni_is_monotone_and_capped(p in 0.0f64..=1.0, q in 0.0f64..=1.0, m in 2usize..50) {
        let v = bonferroni(&[p, q], m).unwrap();
        prop_assert!(v[0] >= p && v[0] <= 1.0);
        prop_assert!(p > q || v[0] <= v[1]);
    }

    #[test]
    fn arrows_count_thresholds(p in 0.0f64..1.0) {
        let s = significance_arrows(p, Direction::Positive);
        let expected = [0.05, 0.01, 0.001, 0.0001].iter().filter(|&&c| p < c).count();
        if expected == 0 {
            prop_assert_eq!(s, "------");
        } else {
            prop_assert_eq!(s.chars().count(), expected);
        }
    }
}
