use dbmlab::free_convolution::semicircle_locations;
use dbmlab::spectral_stats::{
    count_in_window, empirical_stieltjes, gap_statistics, ks_lattice, ks_one_sample, ks_two_sample, local_law_stat,
    median, quantile_sorted, rigidity_stat, semicircle_stieltjes, tv_distance, wigner_surmise_cdf, EnergyPoint,
    LocalLawGrid, StatReport,
};
use dbmlab::Complex64;
use proptest::prelude::*;

proptest! {
    #[test]
    fn ks_two_sample_is_symmetric(a in prop::collection::vec(-10.0f64..10.0, 1..60),
                                  b in prop::collection::vec(-10.0f64..10.0, 1..60)) {
        let d = ks_two_sample(&a, &b);
        prop_assert_eq!(d, ks_two_sample(&b, &a));
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn ks_two_sample_of_identical_samples_is_zero(a in prop::collection::vec(-10.0f64..10.0, 1..60)) {
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
        let mut shuffled = a.clone();
        shuffled.reverse();
        prop_assert_eq!(ks_two_sample(&a, &shuffled), 0.0);
    }

    #[test]
    fn ks_two_sample_is_shift_invariant(a in prop::collection::vec(-10.0f64..10.0, 1..40),
                                        b in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        // a power-of-two shift is exact in floating point
        let sa: Vec<f64> = a.iter().map(|x| x + 64.0).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + 64.0).collect();
        prop_assert_eq!(ks_two_sample(&a, &b), ks_two_sample(&sa, &sb));
    }

    #[test]
    fn tv_and_lattice_ks_are_bounded(a in prop::collection::vec(0usize..20, 1..50),
                                     b in prop::collection::vec(0usize..20, 1..50)) {
        let tv = tv_distance(&a, &b);
        let ks = ks_lattice(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!(ks <= tv + 1e-12);
        prop_assert_eq!(tv_distance(&a, &a), 0.0);
    }
}

#[test]
fn ks_two_sample_disjoint_supports() {
    assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0, 4.0]), 1.0);
}

#[test]
fn ks_one_sample_of_uniform_grid() {
    // midpoints (i + 1/2)/n against U(0, 1): distance exactly 1/(2n)
    let n = 50;
    let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let d = ks_one_sample(&s, |x| x.clamp(0.0, 1.0));
    assert!((d - 0.5 / n as f64).abs() < 1e-15);
}

#[test]
fn quantiles_and_median() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert_eq!(quantile_sorted(&[0.0, 10.0], 0.3), 3.0);
    assert!(quantile_sorted(&[], 0.5).is_nan());
    let rep = StatReport::new("x", vec![1.0, 5.0, 2.0]).with_threshold(2.0);
    assert_eq!(rep.median, 2.0);
    assert_eq!(rep.max, 5.0);
    assert!((rep.pass_fraction().unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn wigner_surmise_has_unit_mean() {
    // ∫ (1 − F(s)) ds = 1
    let h = 1e-3;
    let mean: f64 = (0..10_000).map(|k| (1.0 - wigner_surmise_cdf((k as f64 + 0.5) * h)) * h).sum();
    assert!((mean - 1.0).abs() < 1e-6);
}

#[test]
fn semicircle_stieltjes_solves_its_equation() {
    // m² + z m + 1 = 0 with Im m > 0
    for &(e, eta) in &[(0.0, 0.01), (1.5, 0.1), (-3.0, 0.5), (2.0, 1e-3)] {
        let z = Complex64::new(e, eta);
        let m = semicircle_stieltjes(z);
        assert!((m * m + z * m + 1.0).norm() < 1e-12);
        assert!(m.im > 0.0);
    }
}

#[test]
fn classical_locations_have_zero_rigidity() {
    let g = semicircle_locations(100);
    assert_eq!(rigidity_stat(&g, &g, (10, 89)).unwrap(), 0.0);
    assert!(rigidity_stat(&g, &g, (10, 100)).is_err());
    assert!(rigidity_stat(&g[..50], &g, (0, 10)).is_err());
}

#[test]
fn local_law_rejects_small_eta() {
    let g = semicircle_locations(100);
    let grid = LocalLawGrid::from_fn(semicircle_stieltjes, &[0.0], &[0.05]);
    assert!(local_law_stat(&g, &grid).is_err());
    let grid = LocalLawGrid::from_fn(semicircle_stieltjes, &[0.0, 0.5], &[0.1, 0.5]);
    let s = local_law_stat(&g, &grid).unwrap();
    // deterministic locations track m_sc to O(1/(Nη)) relative accuracy
    assert!(s < 1.0, "{s}");
    let direct = 100.0 * 0.1 * (empirical_stieltjes(&g, Complex64::new(0.0, 0.1)) - semicircle_stieltjes(Complex64::new(0.0, 0.1))).norm();
    assert!(s >= direct);
}

#[test]
fn gaps_and_counts_on_a_lattice() {
    let eigs: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    let gaps = gap_statistics(&eigs, 10, 3, &|_| 1.0).unwrap();
    assert_eq!(gaps.len(), 7);
    assert!(gaps.iter().all(|g| (g - 1.0).abs() < 1e-12));
    assert!(gap_statistics(&eigs, 2, 3, &|_| 1.0).is_err());
    let point = EnergyPoint {
        energy: 0.5,
        density: 1.0,
    };
    let c = count_in_window(&eigs, point, 2.0);
    assert!((2..=3).contains(&c), "{c}");
}
