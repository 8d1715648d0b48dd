use proptest::prelude::*;
use zico_core::data::synth_clusters;
use zico_core::rng;
use zico_core::theory::{chi2_cdf, chi2_inv_cdf, gram_matrix, sym_eigen};

fn symmetric(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng::rng_from_seed(seed);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = r.random_range(-1.0..1.0);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

#[test]
fn sixteen_by_sixteen_reconstructs() {
    let n = 16;
    let a = symmetric(n, 11);
    let e = sym_eigen(&a, n).unwrap();
    let back = e.reconstruct();
    let err = a
        .iter()
        .zip(&back)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "reconstruction error {err}");
    assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
}

proptest! {
    #[test]
    fn trace_equals_eigenvalue_sum(n in 1usize..12, seed in any::<u64>()) {
        let a = symmetric(n, seed);
        let e = sym_eigen(&a, n).unwrap();
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let sum: f64 = e.values.iter().sum();
        prop_assert!((trace - sum).abs() < 1e-10);
    }

    #[test]
    fn chi2_quantile_is_monotone_and_inverts(p in 0.01f64..0.98, dp in 0.001f64..0.01, d in 1u32..64) {
        let a = chi2_inv_cdf(p, d).unwrap();
        let b = chi2_inv_cdf(p + dp, d).unwrap();
        prop_assert!(a < b);
        prop_assert!((chi2_cdf(a, d) - p).abs() < 1e-9);
    }

    #[test]
    fn gram_matrix_is_psd_with_unit_bounded_diagonal(
        n in 2usize..10,
        m in 1usize..40,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let d = 6;
        let ds = synth_clusters(2, n.div_ceil(2), d, 1.0, seed).unwrap().l2_normalize().unwrap();
        let count = ds.len();
        let mut r = rng::rng_from_seed(seed ^ 1);
        let w: Vec<f64> = (0..m * d).map(|_| r.random_range(-1.0..1.0)).collect();
        let h = gram_matrix(ds.samples(), count, &w, m, d).unwrap();
        for i in 0..count {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&h.get(i, i)));
            for j in 0..count {
                prop_assert_eq!(h.get(i, j), h.get(j, i));
            }
        }
        prop_assert!(h.lambda_min() >= -1e-10);
    }
}

#[test]
fn chi2_domain_errors() {
    assert!(chi2_inv_cdf(1.0, 3).is_err());
    assert!(chi2_inv_cdf(0.5, 0).is_err());
    assert_eq!(chi2_inv_cdf(0.0, 3).unwrap(), 0.0);
}
