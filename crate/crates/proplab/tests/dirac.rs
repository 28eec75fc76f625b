use num_complex::Complex64;
use proplab::dirac::*;
use proplab::linalg::CMat;
use proplab::minkowski_qft::{kg_green, GreenKind, SpacetimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn grid() -> &'static SpacetimeGrid {
    static G: OnceLock<SpacetimeGrid> = OnceLock::new();
    G.get_or_init(SpacetimeGrid::desk)
}

fn rep2() -> CliffordRep {
    build_clifford(2).unwrap()
}

/// Eigenvalues of a 2×2 hermitian matrix from the closed form.
fn eig2(m: &CMat) -> (f64, f64) {
    let (a, d, b) = (m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)]);
    let mid = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mid - r, mid + r)
}

#[test]
fn clifford_relations_are_exact() {
    let r = rep2();
    let i2 = CMat::identity(2, 2);
    let (g0, g1) = (&r.gammas[0], &r.gammas[1]);
    assert_eq!(g0 * g0, -&i2);
    assert_eq!(g1 * g1, i2);
    assert_eq!(g0 * g1 + g1 * g0, CMat::zeros(2, 2));
    let r4 = build_clifford(4).unwrap();
    assert_eq!(r4.size(), 4);
    assert_eq!(r4.clifford_defect(), 0.0);
    for mu in 0..4 {
        for nu in 0..4 {
            let a = &r4.gammas[mu] * &r4.gammas[nu] + &r4.gammas[nu] * &r4.gammas[mu];
            let expect = if mu == nu { 2.0 * metric_diag(mu) } else { 0.0 };
            assert_eq!(a, CMat::identity(4, 4) * Complex64::new(expect, 0.0));
        }
    }
    assert_eq!(build_clifford(3), Err(DiracError::UnsupportedDimension(3)));
}

#[test]
fn symbol_squares_to_inverse_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rep in [rep2(), build_clifford(4).unwrap()] {
        for _ in 0..50 {
            // Dyadic entries keep the products exact.
            let xi: Vec<f64> = (0..rep.n).map(|_| rng.gen_range(-64..64) as f64 / 16.0).collect();
            let s = rep.slash(&xi);
            let q: f64 = xi.iter().enumerate().map(|(mu, x)| metric_diag(mu) * x * x).sum();
            assert_eq!(&s * &s, CMat::identity(rep.size(), rep.size()) * Complex64::new(q, 0.0));
        }
    }
}

#[test]
fn dirac_operator_is_skew_for_the_pairing() {
    for rep in [rep2(), build_clifford(4).unwrap()] {
        for seed in 0..5 {
            let gaps = discrete_adjoint_gaps(&rep, seed);
            assert!(gaps.skew <= 1e-10, "n = {}: {}", rep.n, gaps.skew);
            assert!(gaps.selfadjoint > 1.0);
        }
    }
}

#[test]
fn beta_form_cone_behaviour() {
    let rep = rep2();
    let b = beta_form(&rep, &[1.0, 0.0]).unwrap();
    assert!(b.positive_definite);
    assert_eq!(b.matrix, CMat::identity(2, 2));
    let s = beta_form(&rep, &[0.3, 1.0]).unwrap();
    assert!(!s.positive_definite && s.indefinite());
    // Closed-form eigenvalues N⁰ ± |N¹|.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let f = beta_form(&rep, &n).unwrap();
        let (lo, hi) = eig2(&f.matrix);
        assert!((lo - (n[0] - n[1].abs())).abs() < 1e-12 && (hi - (n[0] + n[1].abs())).abs() < 1e-12);
        let flipped = beta_form(&rep, &[-n[0], -n[1]]).unwrap();
        assert_eq!(flipped.matrix, -f.matrix.clone());
    }
    for rep in [rep2(), build_clifford(4).unwrap()] {
        let sweep = cone_sweep(&rep, 50, 9).unwrap();
        assert!(sweep.passes(), "{sweep:?}");
    }
    assert!(matches!(beta_form(&rep, &[1.0]), Err(DiracError::Shape(_))));
}

#[test]
fn doubled_green_is_the_coarse_kernel_on_a_sublattice() {
    let g = SpacetimeGrid::with_cfl(4.0, 64, 0.9, 40).unwrap();
    let fine = doubled_green(GreenKind::Ret, &g).unwrap();
    let coarse = SpacetimeGrid::with_cfl(4.0, 32, 0.9, 20).unwrap();
    let k = kg_green(GreenKind::Ret, 0.0, &coarse).unwrap();
    for n in 0..g.nt {
        for j in 0..g.nx {
            let v = fine[n * g.nx + j];
            if (n + g.n0()) % 2 == 1 || (j + g.j0()) % 2 == 1 {
                assert_eq!(v, Complex64::new(0.0, 0.0));
            } else {
                assert_eq!(v, k.get(n / 2, j / 2) * 4.0);
            }
        }
    }
}

fn kernel(kind: DiracKind) -> &'static DiracKernel {
    static K: OnceLock<Vec<DiracKernel>> = OnceLock::new();
    let all = K.get_or_init(|| {
        [DiracKind::Ret, DiracKind::Adv, DiracKind::Causal]
            .into_iter()
            .map(|k| dirac_green(k, &rep2(), grid()).unwrap())
            .collect()
    });
    &all[kind as usize]
}

#[test]
fn green_kernels_are_cone_supported() {
    for kind in [DiracKind::Ret, DiracKind::Adv] {
        assert_eq!(kernel(kind).cone_leak(2), 0.0, "{kind:?}");
    }
}

#[test]
fn retarded_kernel_inverts_d() {
    let t = grid().t_half;
    for kind in [DiracKind::Ret, DiracKind::Adv] {
        let r = dirac_residual(kernel(kind), true, t);
        assert!(r.source_error <= 0.05, "{kind:?}: {r:?}");
        assert!(r.off_source <= 1e-3, "{kind:?}: {r:?}");
    }
    let r = dirac_residual(kernel(DiracKind::Causal), false, t);
    assert!(r.off_source <= 1e-3, "{r:?}");
}

#[test]
fn matrix_entries_match_components() {
    let k = kernel(DiracKind::Ret);
    let g = grid();
    let (n, j) = (g.n0() + 40, g.j0() + 7);
    let i = n * g.nx + j;
    let expect = (&k.gammas[0] * k.kt[i] + &k.gammas[1] * k.kx[i]) * Complex64::new(0.0, -1.0);
    assert_eq!(k.entry(n, j), expect);
}

#[test]
fn feynman_kernel_inverts_d_in_the_interior() {
    let g = SpacetimeGrid::with_cfl(4.0, 128, 0.9, 64).unwrap();
    let f = dirac_green(DiracKind::Feynman, &rep2(), &g).unwrap();
    // The sharp split leaks a slowly decaying tail from the window edge.
    let r = dirac_residual(&f, true, 0.25 * g.t_half);
    assert!(r.source_error < 1e-10, "{r:?}");
    assert!(r.off_source < 5e-3, "{r:?}");
}

fn suite(tests: &DiracTestSet) -> DiracSuiteReport {
    dirac_positivity_suite(&rep2(), grid(), tests).unwrap()
}

fn tests20() -> &'static DiracTestSet {
    static T: OnceLock<DiracTestSet> = OnceLock::new();
    T.get_or_init(|| DiracTestSet::random(grid(), 20, 11))
}

fn base_report() -> &'static DiracSuiteReport {
    static R: OnceLock<DiracSuiteReport> = OnceLock::new();
    R.get_or_init(|| suite(tests20()))
}

#[test]
fn pauli_jordan_positivity_suite() {
    let r = base_report();
    assert!(r.reality_ok(), "{r:?}");
    assert!(r.split_ok(), "{r:?}");
    assert!(r.omega_ok(), "{r:?}");
    assert!(r.control_ok(), "{r:?}");
    assert!((r.sigma * r.reference_q).re > 0.0);
    assert!(r.reference_minus < 1e-8);
    assert!(r.q.iter().all(|q| *q >= -1e-6 * r.scale));
}

#[test]
fn verdict_is_invariant_under_positive_rescaling() {
    let base = base_report();
    let scaled = suite(&tests20().scaled(3.7));
    assert_eq!(base.passes(), scaled.passes());
    assert_eq!(base.sigma, scaled.sigma);
    assert!((base.min_eig - scaled.min_eig).abs() < 1e-9);
}

#[test]
fn negative_frequency_test_has_no_plus_form() {
    let g = grid();
    let packet = wavepacket(g, (0.0, 0.5), (0.32, 0.45), -25.0, 24.0, [Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.2)]);
    let set = DiracTestSet {
        functions: vec![packet],
        ..tests20().clone()
    };
    let one = suite(&set);
    assert!(one.q[0] > 0.0);
    assert!(one.plus_min_eig.abs() < 1e-8);
}

#[test]
fn unmodulated_tests_violate_the_band_limit() {
    let g = grid();
    let bump = wavepacket(g, (0.0, 0.0), (0.3, 0.4), 0.0, 20.0, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    let set = DiracTestSet {
        functions: vec![bump],
        ..tests20().clone()
    };
    assert!(matches!(
        dirac_positivity_suite(&rep2(), g, &set),
        Err(DiracError::BandLimitViolation { index: 0, .. })
    ));
}
