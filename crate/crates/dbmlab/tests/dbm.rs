use dbmlab::dbm::{center_index, sample_gbe_eigs, sample_goe_matrix, simulate_flow, FlowSpec, Interaction, Record, ShortRange, Trajectory};
use dbmlab::homogenization::{propagate, BandGenerator};
use dbmlab::linalg::{eig_sym_tridiag, eigvalsh};
use dbmlab::spectral_stats::ks_two_sample;
use dbmlab::NoiseSource;

/// Number of eigenvalues below x by the Sturm sequence of the pivots.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..d.len() {
        let q_prev = if q == 0.0 { f64::EPSILON } else { q };
        q = d[k] - x - e[k - 1] * e[k - 1] / q_prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn sturm_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let bound = d.iter().map(|v| v.abs()).sum::<f64>() + 2.0 * e.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn tridiagonal_matches_sturm_bisection() {
    let mut s = NoiseSource::new(11).stream(0);
    for n in [1usize, 2, 7, 40] {
        let d: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let e: Vec<f64> = (1..n).map(|_| s.normal()).collect();
        let ev = eig_sym_tridiag(&d, &e).unwrap();
        for (k, v) in ev.iter().enumerate() {
            assert!((v - sturm_eigenvalue(&d, &e, k)).abs() < 1e-12, "n={n} k={k}");
        }
    }
}

#[test]
fn two_particle_gap_follows_square_root_law() {
    // deterministic flow at N = 2: ġ = 2/(N g), so g² = g₀² + 4t/N
    let spec = FlowSpec {
        noise_scale: 0.0,
        ..FlowSpec::dbm()
    };
    let g0 = 0.3;
    let traj = simulate_flow(&[-0.5 * g0, 0.5 * g0], &spec, (0.0, 0.5), 1e-5, &NoiseSource::new(1), &Record::EveryBaseStep(5000)).unwrap();
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let g = x[1] - x[0];
        let exact = (g0 * g0 + 2.0 * t).sqrt();
        assert!((g - exact).abs() < 1e-4 * exact, "t={t}: {g} vs {exact}");
        assert!((x[0] + x[1]).abs() < 1e-12);
    }
}

#[test]
fn flow_is_deterministic_and_ordered() {
    let init: Vec<f64> = (0..50).map(|i| -1.0 + 2.0 * i as f64 / 49.0).collect();
    let noise = NoiseSource::new(5).replica(2);
    let a = simulate_flow(&init, &FlowSpec::dbm(), (0.0, 0.05), 1e-3, &noise, &Record::Final).unwrap();
    let b = simulate_flow(&init, &FlowSpec::dbm(), (0.0, 0.05), 1e-3, &noise, &Record::Final).unwrap();
    assert_eq!(a.final_state(), b.final_state());
    assert!(a.final_state().windows(2).all(|w| w[1] > w[0]));
    let c = simulate_flow(&init, &FlowSpec::dbm(), (0.0, 0.05), 1e-3, &NoiseSource::new(5).replica(3), &Record::Final).unwrap();
    assert_ne!(a.final_state(), c.final_state());
}

#[test]
fn unordered_initial_data_is_rejected() {
    let r = simulate_flow(&[0.0, 1.0, 0.5], &FlowSpec::dbm(), (0.0, 0.1), 1e-3, &NoiseSource::new(1), &Record::Final);
    assert!(r.is_err());
}

#[test]
fn short_range_spec_is_validated() {
    let mut sr = ShortRange::from_exponents(100, 0.5, 0.3, 0.5);
    sr.ell = 100;
    let spec = FlowSpec {
        interaction: Interaction::ShortRange(sr),
        ..FlowSpec::dbm()
    };
    assert!(spec.validate(100).is_err());
    assert!(FlowSpec::gaussian(0.5).validate(10).is_err());
}

#[test]
fn trajectory_binary_roundtrip() {
    let init: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let traj = simulate_flow(&init, &FlowSpec::dbm(), (0.0, 0.01), 1e-3, &NoiseSource::new(3), &Record::EveryBaseStep(2)).unwrap();
    let mut buf = Vec::new();
    traj.write_binary(&mut buf).unwrap();
    let back = Trajectory::read_binary(buf.as_slice(), traj.spec.clone()).unwrap();
    assert_eq!(back.times, traj.times);
    assert_eq!(back.states, traj.states);
}

#[test]
fn center_index_convention() {
    // the center particle is ⌈N/2⌉ (1-based)
    assert_eq!(center_index(1), 0);
    assert_eq!(center_index(4), 1);
    assert_eq!(center_index(5), 2);
}

#[test]
fn tridiagonal_gbe_matches_dense_goe() {
    let n = 30;
    let mut tri = Vec::new();
    let mut dense = Vec::new();
    for r in 0..400u64 {
        let src = NoiseSource::new(21).replica(r);
        tri.extend(sample_gbe_eigs(n, 1.0, &src).unwrap());
        dense.extend(eigvalsh(sample_goe_matrix(n, &src), n).unwrap());
    }
    // pooled samples are correlated within a replica, so the bound is loose
    assert!(ks_two_sample(&tri, &dense) < 0.03);
}

#[test]
fn linearised_flow_matches_finite_difference() {
    // ∂_α of the flow started at αx + (1 − α)y solves ∂_t u_i = Σ_j B_ij (u_j − u_i)
    let n = 16;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.01 * ((i * 7) % 5) as f64 / 5.0).collect();
    let spec = FlowSpec {
        noise_scale: 0.0,
        ..FlowSpec::dbm()
    };
    let noise = NoiseSource::new(1);
    let (t, dt) = (0.02, 1e-5);
    let start = |alpha: f64| -> Vec<f64> { x.iter().zip(&y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect() };
    let record = Record::EveryBaseStep(1);
    let base = simulate_flow(&start(0.5), &spec, (0.0, t), dt, &noise, &record).unwrap();
    let h = 1e-4;
    let plus = simulate_flow(&start(0.5 + h), &spec, (0.0, t), dt, &noise, &Record::Final).unwrap();
    let minus = simulate_flow(&start(0.5 - h), &spec, (0.0, t), dt, &noise, &Record::Final).unwrap();
    let fd: Vec<f64> = plus.final_state().iter().zip(minus.final_state()).map(|(p, m)| (p - m) / (2.0 * h)).collect();
    let u0: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    let (_, values, _) = propagate(&base, &BandGenerator::full(), u0, (0.0, t), 1e-6).unwrap();
    let u = values.last().unwrap();
    let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in u.iter().zip(&fd) {
        assert!((a - b).abs() < 2e-3 * scale, "{a} vs {b}");
    }
}
