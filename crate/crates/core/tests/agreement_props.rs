use proptest::prelude::*;
use riskscope_core::eval::{chi_squared_independence, cohens_kappa, fleiss_kappa, majority_label, Majority, RaterMatrix};

/// Cohen's kappa from an explicit confusion matrix.
fn cohen_oracle(a: &[u8], b: &[u8], k: u8) -> f64 {
    let n = a.len() as f64;
    let mut m = vec![vec![0.0f64; k as usize]; k as usize];
    for (x, y) in a.iter().zip(b) {
        m[*x as usize][*y as usize] += 1.0;
    }
    let po: f64 = (0..k as usize).map(|i| m[i][i]).sum::<f64>() / n;
    let pe: f64 = (0..k as usize)
        .map(|i| {
            let row: f64 = m[i].iter().sum();
            let col: f64 = m.iter().map(|r| r[i]).sum();
            row * col / (n * n)
        })
        .sum();
    (po - pe) / (1.0 - pe)
}

/// Fleiss' kappa via pairwise agreement between ordered rater pairs.
fn fleiss_oracle(rows: &[Vec<u8>], k: u8) -> f64 {
    let n = rows[0].len();
    let mut pairs_agree = 0.0;
    let pairs_per_item = (n * (n - 1)) as f64;
    for r in rows {
        for i in 0..n {
            for j in 0..n {
                if i != j && r[i] == r[j] {
                    pairs_agree += 1.0;
                }
            }
        }
    }
    let p_bar = pairs_agree / (pairs_per_item * rows.len() as f64);
    let total = (rows.len() * n) as f64;
    let p_e: f64 = (0..k)
        .map(|c| {
            let cnt = rows.iter().flatten().filter(|x| **x == c).count() as f64;
            (cnt / total).powi(2)
        })
        .sum();
    (p_bar - p_e) / (1.0 - p_e)
}

fn rater_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..=12, 2u8..=3).prop_flat_map(|(n, k)| (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
}

fn matrix() -> impl Strategy<Value = (Vec<Vec<u8>>, u8)> {
    (1usize..=12, 2usize..=4, 2u8..=3)
        .prop_flat_map(|(items, raters, k)| (prop::collection::vec(prop::collection::vec(0..k, raters), items), Just(k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cohen_matches_confusion_formula((a, b) in rater_pair()) {
        match cohens_kappa(&a, &b) {
            Ok(k) => {
                prop_assert!((-1.0..=1.0).contains(&k));
                if a == b {
                    prop_assert_eq!(k, 1.0);
                } else {
                    prop_assert!((k - cohen_oracle(&a, &b, 3)).abs() < 1e-9);
                }
            }
            Err(_) => {
                // only when both raters are constant on the same label yet differ somewhere: impossible,
                // so the error path means p_e = 1 with disagreement
                prop_assert!(a != b);
            }
        }
    }

    #[test]
    fn fleiss_matches_pairwise_formula((rows, k) in matrix()) {
        let m = RaterMatrix::complete((0..k).collect(), rows.clone()).unwrap();
        let got = fleiss_kappa(&m).unwrap();
        let unanimous = rows.iter().all(|r| r.iter().all(|x| *x == r[0]));
        if unanimous {
            prop_assert_eq!(got, 1.0);
        } else {
            let want = fleiss_oracle(&rows, k);
            if want.is_finite() {
                prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
            }
            prop_assert!(got <= 1.0);
        }
    }

    #[test]
    fn kappas_ignore_consistent_relabeling((a, b) in rater_pair(), shift in 1u8..3) {
        let perm = |x: &u8| (x + shift) % 3;
        let pa: Vec<u8> = a.iter().map(perm).collect();
        let pb: Vec<u8> = b.iter().map(perm).collect();
        match (cohens_kappa(&a, &b), cohens_kappa(&pa, &pb)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
        let rows: Vec<Vec<u8>> = a.iter().zip(&b).map(|(x, y)| vec![*x, *y]).collect();
        let prow: Vec<Vec<u8>> = rows.iter().map(|r| r.iter().map(perm).collect()).collect();
        let f1 = fleiss_kappa(&RaterMatrix::complete(vec![0, 1, 2], rows).unwrap()).unwrap();
        let f2 = fleiss_kappa(&RaterMatrix::complete(vec![0, 1, 2], prow).unwrap()).unwrap();
        prop_assert!((f1 - f2).abs() < 1e-12 || (f1.is_nan() && f2.is_nan()));
    }

    #[test]
    fn chi_squared_ignores_bin_order(a in prop::collection::vec(0u64..30, 7), b in prop::collection::vec(0u64..30, 7), rot in 0usize..7) {
        prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
        let mut ra = a.clone();
        let mut rb = b.clone();
        ra.rotate_left(rot);
        rb.rotate_left(rot);
        let x = chi_squared_independence(&a, &b).unwrap();
        let y = chi_squared_independence(&ra, &rb).unwrap();
        prop_assert!((x.statistic - y.statistic).abs() < 1e-9);
        prop_assert_eq!(x.df, y.df);
        prop_assert!((0.0..=1.0).contains(&x.p_value));
        // swapping the rows is also a relabeling
        let z = chi_squared_independence(&b, &a).unwrap();
        prop_assert!((x.statistic - z.statistic).abs() < 1e-9);
    }

    #[test]
    fn majority_is_order_free(mut votes in prop::collection::vec(0u8..3, 1..9), q in 1usize..6) {
        let m = majority_label(&votes, q);
        votes.reverse();
        prop_assert_eq!(m, majority_label(&votes, q));
        if let Majority::Label(l) = m {
            prop_assert!(votes.iter().filter(|v| **v == l).count() >= q);
        }
    }
}

#[test]
fn chi_squared_two_by_seven_hand_table() {
    // expected counts are 5 everywhere: 2x7 with column totals 10 and row totals 35
    let a = [8, 2, 5, 5, 7, 3, 5];
    let b = [2, 8, 5, 5, 3, 7, 5];
    let r = chi_squared_independence(&a, &b).unwrap();
    let want: f64 = a.iter().chain(&b).map(|&x| ((x as f64 - 5.0).powi(2)) / 5.0).sum();
    assert!((r.statistic - want).abs() < 1e-9);
    assert_eq!(r.df, 6);
}
