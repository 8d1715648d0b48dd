use proptest::prelude::*;
use zico_core::eval::{kendall_tau, kendall_tau_naive, spearman_rho};

fn tied_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(f64::from), n)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..80).prop_flat_map(|n| (tied_vec(n), tied_vec(n)))
}

proptest! {
    #[test]
    fn merge_count_matches_pairwise_definition((x, y) in pair()) {
        prop_assert_eq!(kendall_tau(&x, &y).unwrap(), kendall_tau_naive(&x, &y).unwrap());
    }

    #[test]
    fn monotone_transform_leaves_ranks_unchanged((x, y) in pair()) {
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        prop_assert_eq!(kendall_tau(&ex, &y).unwrap(), kendall_tau(&x, &y).unwrap());
        prop_assert_eq!(spearman_rho(&ex, &y).unwrap(), spearman_rho(&x, &y).unwrap());
    }

    #[test]
    fn self_correlation_is_one_unless_constant((x, _) in pair()) {
        let constant = x.iter().all(|&v| v == x[0]);
        let tau = kendall_tau(&x, &x).unwrap();
        let rho = spearman_rho(&x, &x).unwrap();
        if constant {
            prop_assert!(tau.is_none() && rho.is_none());
        } else {
            prop_assert!((tau.unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((rho.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_bounded((x, y) in pair()) {
        let a = kendall_tau(&x, &y).unwrap();
        prop_assert_eq!(a, kendall_tau(&y, &x).unwrap());
        if let Some(t) = a {
            prop_assert!((-1.0..=1.0).contains(&t));
        }
        if let Some(r) = spearman_rho(&x, &y).unwrap() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn reversal_negates((x, y) in pair()) {
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        match (kendall_tau(&x, &y).unwrap(), kendall_tau(&x, &neg).unwrap()) {
            (Some(a), Some(b)) => prop_assert!((a + b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
    }
}

#[test]
fn constant_proxy_gives_no_value() {
    let x = [3.0; 5];
    let y = [0.1, 0.4, 0.2, 0.9, 0.5];
    assert_eq!(kendall_tau(&x, &y).unwrap(), None);
    assert_eq!(spearman_rho(&x, &y).unwrap(), None);
}

#[test]
fn mismatched_or_short_input_is_rejected() {
    assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    assert!(spearman_rho(&[1.0], &[1.0]).is_err());
    assert!(kendall_tau(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
}
