use num_complex::Complex64;
use proplab::minkowski_qft::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// `K₀(z) = ∫₀^∞ e^{−z cosh s} ds` by composite Simpson on a truncated range.
fn k0_quadrature(z: f64) -> f64 {
    let upper = (2.0 * (40.0 / z).ln().max(1.0)).max(6.0);
    let n = 20_000;
    let h = upper / n as f64;
    let f = |s: f64| (-z * s.cosh()).exp();
    let mut acc = f(0.0) + f(upper);
    for k in 1..n {
        acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn grid() -> &'static SpacetimeGrid {
    static G: OnceLock<SpacetimeGrid> = OnceLock::new();
    G.get_or_init(SpacetimeGrid::desk)
}

#[test]
fn k0_references_agree() {
    for z in [0.3, 0.5, 1.0, 2.0, 3.0, 7.9, 8.5, 12.0] {
        let (a, b) = (k0_quadrature(z), proplab::special::bessel_k0(z));
        assert!((a - b).abs() < 1e-6 * b, "z = {z}: {a} vs {b}");
    }
}

#[test]
fn desk_grid_shape() {
    let g = grid();
    assert_eq!((g.nt, g.nx), (513, 512));
    assert!((g.cfl() - 0.9).abs() < 1e-12);
    assert_eq!(g.t(g.n0()), 0.0);
    assert_eq!(g.x(g.j0()), 0.0);
}

#[test]
fn massless_retarded_plateau() {
    let ret = kg_green(GreenKind::Ret, 0.0, grid()).unwrap();
    for (t, x) in [(2.0, 0.0), (3.0, 1.0), (4.0, -2.0), (5.0, 2.5), (6.0, 0.5), (6.5, -4.0)] {
        let v = ret.box_average(t, x, 2).unwrap();
        assert!((v.re - 0.5).abs() < 0.01, "({t},{x}): {v}");
        assert_eq!(v.im, 0.0);
    }
    // Outside the lattice's numerical cone |x| ≤ t/r the kernel is exactly zero.
    assert_eq!(ret.leak_outside(1.0 / grid().cfl()), 0.0);
    // The 2Δx-widened light cone does not contain it.
    assert!(ret.leak_outside(1.0) > 1e-10);
    // Beyond the light cone itself a dispersive precursor remains.
    assert!(ret.box_average(3.0, 4.0, 2).unwrap().norm() < 0.02);
    for (t, x) in [(-1.0, 0.0), (2.0, 3.0), (4.0, -5.0)] {
        assert!(ret.box_average(t, x, 2).unwrap().norm() < 0.01);
    }
}

#[test]
fn causal_kernel_is_odd_in_time() {
    let g = kg_causal(0.7, grid()).unwrap();
    let r = g.time_reflect();
    assert!(g.values.iter().zip(&r.values).all(|(a, b)| *a == -*b));
}

#[test]
fn green_residuals() {
    for m in [0.0, 1.0] {
        for kind in [GreenKind::Ret, GreenKind::Adv] {
            let k = kg_green(kind, m, grid()).unwrap();
            let res = kg_residual(&k, m);
            assert!((res.source_ratio - 1.0).abs() < 0.05);
            assert!(res.off_source < 1e-3, "{kind:?} m={m}: {}", res.off_source);
        }
    }
}

#[test]
fn cfl_violation() {
    let g = SpacetimeGrid::with_cfl(4.0, 64, 0.95, 30).unwrap();
    assert!(matches!(kg_green(GreenKind::Ret, 0.0, &g), Err(QftError::CFLViolation { .. })));
}

fn feynman() -> &'static KernelField {
    static F: OnceLock<KernelField> = OnceLock::new();
    F.get_or_init(|| kg_feynman_extrapolated(1.0, 0.05, grid()).unwrap())
}

#[test]
fn feynman_spacelike_matches_k0() {
    let gf = feynman();
    for r in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
        let v = gf.at(0.0, r).unwrap() * (2.0 * PI);
        // 2πG^F(0, r) → iK₀(mr) in this convention.
        let target = Complex64::new(0.0, k0_quadrature(r));
        assert!((v - target).norm() < 0.02 * target.norm(), "r = {r}: {v} vs {target}");
    }
}

#[test]
fn feynman_kernel_is_even() {
    let gf = feynman();
    let refl = gf.point_reflect();
    let gap = gf.sub(&refl).unwrap().max_abs();
    assert!(gap < 1e-10 * gf.max_abs());
}

#[test]
fn feynman_residual() {
    let res = kg_residual(feynman(), 1.0);
    assert!((res.source_ratio - 1.0).abs() < 0.05);
    assert!(res.off_source < 1e-3);
}

#[test]
fn feynman_rejects_bad_parameters() {
    let g = SpacetimeGrid::with_cfl(4.0, 64, 0.9, 30).unwrap();
    assert!(matches!(kg_feynman(0.05, 0.01, &g), Err(QftError::MassTooSmall { .. })));
    assert!(matches!(kg_feynman(1.0, 0.5, &g), Err(QftError::EpsilonOutOfRange { .. })));
    assert!(matches!(kg_wightman(0.0, &g), Err(QftError::MassTooSmall { .. })));
}

fn wightman() -> &'static KernelField {
    static W: OnceLock<KernelField> = OnceLock::new();
    W.get_or_init(|| kg_wightman(1.0, grid()).unwrap())
}

#[test]
fn wightman_log_growth() {
    let dxs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
    let vals: Vec<f64> = dxs.iter().map(|dx| wightman_at_origin(1.0, 8.0, *dx, 0.9).unwrap()).collect();
    for w in vals.windows(2) {
        // Halving Δx doubles the cutoff π/Δx.
        let slope = (w[1] - w[0]) / 2f64.ln();
        assert!((slope * 2.0 * PI - 1.0).abs() < 0.05, "slope {slope}");
    }
}

#[test]
fn wightman_hermiticity() {
    let w = wightman();
    let r = w.point_reflect();
    for (a, b) in w.values.iter().zip(&r.values) {
        assert!((a - b.conj()).norm() < 1e-12);
    }
}

#[test]
fn wightman_imaginary_part_is_causal_kernel() {
    let w = wightman();
    let g = kg_causal(1.0, grid()).unwrap();
    for (t, x) in [(1.0, 0.2), (2.0, -1.5), (-3.0, 0.5), (4.5, 3.0), (-6.0, -2.0), (0.5, 2.0)] {
        let lhs = -2.0 * w.at(t, x).unwrap().im;
        let rhs = g.at(t, x).unwrap().re;
        assert!((lhs - rhs).abs() <= 0.03 * rhs.abs().max(0.05), "({t},{x}): {lhs} vs {rhs}");
    }
}

#[test]
fn feynman_consistency_and_controls() {
    let g = grid();
    let adv = kg_green(GreenKind::Adv, 1.0, g).unwrap();
    let ret = kg_green(GreenKind::Ret, 1.0, g).unwrap();
    let w = wightman();
    let mut last = f64::INFINITY;
    for eps in [0.05, 0.025, 0.0125] {
        let gf = kg_feynman_extrapolated(1.0, eps, g).unwrap();
        let r = feynman_consistency(&gf, &adv, w).unwrap();
        assert!(r < last, "ε = {eps}: {r} ≥ {last}");
        last = r;
    }
    assert!(last <= 0.03);
    let gf = feynman();
    let good = feynman_consistency(gf, &adv, w).unwrap();
    assert!(good <= 0.03);
    let bad = feynman_consistency(gf, &ret, w).unwrap();
    assert!(bad >= 10.0 * good);
}

#[test]
fn gram_positivity_and_negative_control() {
    let g = grid();
    let tests = TestFunctionSet::random(g, 20, 17);
    assert!(tests.support_margin() >= 5);
    let w = wightman();
    let rep = gram_positivity(w, &tests).unwrap();
    assert!(rep.min_eig >= -1e-6 * rep.spectral_radius, "{} / {}", rep.min_eig, rep.spectral_radius);
    assert!(rep.max_diag_imag < 1e-10);

    let neg = gram_positivity(&w.scale(Complex64::new(-1.0, 0.0)), &tests).unwrap();
    assert!(neg.min_eig < -1e-6 * neg.spectral_radius);

    let single = TestFunctionSet {
        functions: vec![tests.functions[3].clone()],
        ..tests.clone()
    };
    let one = gram_positivity(w, &single).unwrap();
    assert!(one.matrix[(0, 0)].im.abs() <= 1e-10 * one.matrix[(0, 0)].re.abs());
    assert!(one.matrix[(0, 0)].re > 0.0);
}

#[test]
fn bisolution_and_controls() {
    let w = wightman();
    let base = bisolution_residual(w, 1.0);
    assert!(base <= 1e-3, "{base}");
    let g = grid();
    let mut pert = w.clone();
    let amp = 1e-2 * w.max_abs();
    for n in 0..g.nt {
        for j in 0..g.nx {
            let (t, x) = (g.t(n), g.x(j));
            pert.values[n * g.nx + j] += amp * (-(t * t + x * x)).exp();
        }
    }
    assert!(bisolution_residual(&pert, 1.0) >= 10.0 * base.max(1e-12));
    assert!(bisolution_residual(w, 2.0) >= 10.0 * base.max(1e-12));
}
