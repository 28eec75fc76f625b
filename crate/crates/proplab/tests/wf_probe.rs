use num_complex::Complex64;
use proplab::minkowski_qft::*;
use proplab::wf_probe::*;
use std::sync::OnceLock;

fn grid() -> &'static SpacetimeGrid {
    static G: OnceLock<SpacetimeGrid> = OnceLock::new();
    G.get_or_init(SpacetimeGrid::desk)
}

fn causal() -> &'static SampledField {
    static F: OnceLock<SampledField> = OnceLock::new();
    F.get_or_init(|| SampledField::from_kernel(&kg_causal(1.0, grid()).unwrap()))
}

fn flagged(f: &SampledField, p: (f64, f64)) -> Vec<usize> {
    singular_directions(&probe(f, p).unwrap(), DEFAULT_THRESHOLD).iter().map(|d| d.index).collect()
}

/// `|∫₀^∞ e^{−y²/2σ²} e^{−iλy} dy|` by composite Simpson on `[0, 12σ]`.
fn half_line_transform(lambda: f64, sigma: f64) -> f64 {
    let n = 200_000;
    let h = 12.0 * sigma / n as f64;
    let f = |y: f64| Complex64::from_polar((-y * y / (2.0 * sigma * sigma)).exp(), -lambda * y);
    let mut acc = f(0.0) + f(n as f64 * h);
    for k in 1..n {
        acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    (acc * h / 3.0).norm()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn smooth_gaussian_has_no_singular_directions() {
    let f = SampledField::from_fn(grid(), |t, x| Complex64::new((-(t * t + x * x) / 0.5).exp(), 0.0));
    let p = probe(&f, (0.1, -0.2)).unwrap();
    assert!(p.fits.iter().all(|d| d.alpha >= 6.0), "{:?}", p.alphas());
    assert!(singular_directions(&p, DEFAULT_THRESHOLD).is_empty());
}

#[test]
fn delta_is_singular_in_every_direction() {
    let g = grid();
    let (n0, j0) = (g.n0(), g.j0());
    let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
    values[n0 * g.nx + j0] = Complex64::new(1.0, 0.0);
    let f = SampledField::new(g.nt, g.nx, g.dt, g.dx, (g.t(0), g.x(0)), values).unwrap();
    let p = probe(&f, (0.0, 0.0)).unwrap();
    assert!(p.fits.iter().all(|d| d.alpha.abs() <= 0.5));
    assert_eq!(singular_directions(&p, DEFAULT_THRESHOLD).len(), DIRECTION_COUNT);
}

#[test]
fn heaviside_decays_like_inverse_scale() {
    let f = SampledField::from_fn(grid(), |_, x| Complex64::new(if x >= 0.0 { 1.0 } else { 0.0 }, 0.0));
    let p = probe(&f, (0.0, 0.0)).unwrap();
    let sigma = p.sigma;
    let lx: Vec<f64> = p.scales.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = p.scales.iter().map(|l| half_line_transform(*l, sigma).ln()).collect();
    let oracle = -slope(&lx, &ly);
    assert!((oracle - 1.0).abs() < 0.1, "{oracle}");
    // Perpendicular to the jump: bins 8 and 24 of 32.
    let dirs = uniform_directions(DIRECTION_COUNT, 0.0);
    let normal = nearest_direction(&dirs, [0.0, 1.0]);
    assert_eq!(normal, 8);
    let alpha = p.fits[normal].alpha;
    assert!((alpha - oracle).abs() < 0.1, "{alpha} vs {oracle}");
    assert!(p.fits[normal].r2 >= R2_MIN);
    assert_eq!(flagged(&f, (0.0, 0.0)), vec![8, 24]);
}

#[test]
fn input_errors() {
    let f = causal();
    let h = f.h();
    let dirs = uniform_directions(8, 0.0);
    let too_high = [1.0, 1.1 * std::f64::consts::PI / h];
    assert!(matches!(
        decay_exponents(f, (0.0, 0.0), 8.0 * h, &dirs, &too_high),
        Err(ProbeError::NyquistViolation { .. })
    ));
    let edge = (f.t(f.nt - 1) - 2.0 * 8.0 * h, 0.0);
    assert!(matches!(probe(f, edge), Err(ProbeError::OutOfDomain { .. })));
    assert!(matches!(
        decay_exponents(f, (0.0, 0.0), 8.0 * h, &dirs, &[2.0, 1.0]),
        Err(ProbeError::Shape(_))
    ));
    assert!(SampledField::new(3, 3, 0.1, 0.1, (0.0, 0.0), vec![]).is_err());
}

#[test]
fn causal_kernel_flags_only_null_codirections_on_the_cone() {
    for (t, x) in [(2.0, 2.0), (3.0, -3.0), (4.5, 4.5)] {
        let c = cone_probe(causal(), t, x, 2).unwrap();
        assert!(c.localized, "({t},{x}): {c:?}");
    }
    // Backward cone as well.
    assert!(cone_probe(causal(), -3.0, 3.0, 2).unwrap().localized);
}

#[test]
fn causal_kernel_is_smooth_off_the_cone() {
    for (t, x) in [(3.0, 0.0), (5.0, -1.5), (2.0, 4.5)] {
        let p = causal().snap(t, x);
        assert!(flagged(causal(), p).is_empty(), "({t},{x})");
    }
}

#[test]
fn flags_are_stable_under_a_small_rotation_of_the_bins() {
    let f = causal();
    let p = f.snap(3.0, 3.0);
    let h = f.h();
    let scales = default_scales(h);
    let a = decay_exponents(f, p, 8.0 * h, &uniform_directions(DIRECTION_COUNT, 0.0), &scales).unwrap();
    let b = decay_exponents(f, p, 8.0 * h, &uniform_directions(DIRECTION_COUNT, 0.1), &scales).unwrap();
    let idx = |p: &DecayProfile| singular_directions(p, DEFAULT_THRESHOLD).iter().map(|d| d.index).collect::<Vec<_>>();
    assert_eq!(idx(&a), idx(&b));
}

#[test]
fn refinement_keeps_every_flag() {
    let coarse = SpacetimeGrid::with_cfl(8.0, 256, 0.9, 128).unwrap();
    let c = SampledField::from_kernel(&kg_causal(1.0, &coarse).unwrap());
    for (t, x) in [(3.0, 3.0), (4.0, -4.0), (3.0, 0.0)] {
        let a = flagged(&c, c.snap(t, x));
        let b = flagged(causal(), causal().snap(t, x));
        assert!(a.iter().all(|j| b.contains(j)), "({t},{x}): {a:?} ⊄ {b:?}");
    }
}

#[test]
fn feynman_kernel_is_one_sided_in_frequency() {
    let g = grid();
    let gf = SampledField::from_kernel(&kg_feynman_extrapolated(1.0, 0.05, g).unwrap());
    let adv = SampledField::from_kernel(&kg_green(GreenKind::Adv, 1.0, g).unwrap());
    let fwd = frequency_asymmetry(&gf, gf.snap(3.0, 3.0)).unwrap();
    assert!(fwd.ratio() >= 5.0, "{fwd:?}");
    // The backward cone favours the other half-plane.
    let bwd = frequency_asymmetry(&gf, gf.snap(-3.0, 3.0)).unwrap();
    assert!(bwd.ratio() >= 5.0);
    assert_eq!(fwd.positive > fwd.negative, bwd.positive < bwd.negative);
    // The advanced kernel is real, so its two halves carry equal mass.
    let a = frequency_asymmetry(&adv, adv.snap(-3.0, 3.0)).unwrap();
    assert!(a.ratio() <= 2.0, "{a:?}");
}

#[test]
fn singularities_propagate_along_the_bicharacteristic() {
    let g = grid();
    let d = propagation_dichotomy(1.0, g, g.dx, &[2.5, 3.5, 4.5]).unwrap();
    assert!(d.variation() < 1.0, "{d:?}");
    assert!(d.gap() > 2.0, "{d:?}");
    assert!(d.on_cone.iter().all(|a| *a < DEFAULT_THRESHOLD));
}

#[test]
fn poor_fits_are_marked_low_confidence() {
    let fit = |alpha, r2| DirectionFit {
        theta: [1.0, 0.0],
        alpha,
        r2,
        saturated: false,
        magnitudes: vec![],
    };
    let p = DecayProfile {
        point: (0.0, 0.0),
        sigma: 1.0,
        scales: vec![1.0, 2.0],
        fits: vec![fit(0.5, 0.3), fit(1.0, 0.99), fit(4.0, 0.2)],
    };
    let s = singular_directions(&p, 2.0);
    assert_eq!(s.len(), 2);
    assert!(s[0].low_confidence && !s[1].low_confidence);
    assert!(singular_directions(&p, 0.1).is_empty());
}
