//! The ten acceptance criteria as one runnable suite.
//!
//! Each criterion is a list of [`Part`]s (measured value against a budget)
//! plus an optional wall-clock limit. All random corpora derive from one
//! seeded stream: the master seed yields one sub-seed per criterion, drawn
//! in criterion order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

use crate::dirac::{build_clifford, cone_sweep, dirac_positivity_suite, DiracTestSet};
use crate::expr::parse_expression;
use crate::geometry::{flow_bicharacteristic, linspace_params, null_completion, FlowOptions, MetricChart};
use crate::linalg::{expm, max_abs, CMat, I};
use crate::minkowski_qft::*;
use crate::model_space::positivity_sweep;
use crate::special::bessel_k0;
use crate::symbols::{compatibility_residual, corpus, subprincipal, verify_identity, weitzenbock_assemble, IdentityKind};
use crate::transport::{duhamel_residual, model_duhamel, parallel_transport, transport_symbol, BasePath, TransportProblem};
use crate::wf_probe::{cone_probe, frequency_asymmetry, probe, propagation_dichotomy, singular_directions, SampledField, DEFAULT_THRESHOLD};

/// Direction of a budget comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One measured quantity against its budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    pub cmp: Cmp,
    pub budget: f64,
    pub measured: f64,
    pub pass: bool,
}

impl Part {
    pub fn at_most(name: &str, measured: f64, budget: f64) -> Self {
        Part {
            name: name.into(),
            cmp: Cmp::AtMost,
            budget,
            measured,
            pass: measured <= budget,
        }
    }

    pub fn at_least(name: &str, measured: f64, budget: f64) -> Self {
        Part {
            name: name.into(),
            cmp: Cmp::AtLeast,
            budget,
            measured,
            pass: measured >= budget,
        }
    }
}

/// Outcome of one criterion. `budget`/`measured` repeat the first part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub criterion: usize,
    pub name: String,
    pub budget: f64,
    pub measured: f64,
    pub parts: Vec<Part>,
    /// Wall-clock limit in seconds, if the criterion has one.
    pub time_limit: Option<f64>,
    pub within_time: bool,
    pub pass: bool,
    /// Kept out of serialized reports so that they stay byte-identical.
    #[serde(skip)]
    pub seconds: f64,
}

pub const CRITERIA: [(&str, Option<f64>); 10] = [
    ("null_conservation", Some(10.0)),
    ("compatibility", Some(5.0)),
    ("symbol_identities", Some(10.0)),
    ("duhamel_recursion", None),
    ("model_positivity", Some(30.0)),
    ("transport_is_parallel", None),
    ("kg_kernels", Some(60.0)),
    ("hadamard_positivity", None),
    ("wavefront_structure", None),
    ("dirac_suite", Some(60.0)),
];

/// Sub-seeds for the ten criteria.
pub fn criterion_seeds(seed: u64) -> [u64; 10] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| rng.gen())
}

/// Run criterion `k` (1-based) with its sub-seed.
pub fn run_criterion(k: usize, seed: u64) -> CheckRecord {
    let (name, limit) = CRITERIA[k - 1];
    let start = Instant::now();
    let parts = match k {
        1 => null_conservation(seed),
        2 => compatibility(seed),
        3 => symbol_identities(seed),
        4 => duhamel(seed),
        5 => model_positivity(seed),
        6 => transport_parallel(seed),
        7 => kg_kernels(),
        8 => hadamard(seed),
        9 => wavefront(),
        10 => dirac(seed),
        _ => panic!("criteria are numbered 1..=10"),
    };
    let seconds = start.elapsed().as_secs_f64();
    let parts = parts.unwrap_or_else(|e| vec![Part::at_most(&format!("error: {e}"), 1.0, 0.0)]);
    let within_time = limit.map_or(true, |l| seconds <= l);
    CheckRecord {
        criterion: k,
        name: name.into(),
        budget: parts[0].budget,
        measured: parts[0].measured,
        pass: within_time && parts.iter().all(|p| p.pass),
        parts,
        time_limit: limit,
        within_time,
        seconds,
    }
}

/// Run every criterion in order.
pub fn run_all(seed: u64) -> Vec<CheckRecord> {
    let seeds = criterion_seeds(seed);
    (1..=10).map(|k| run_criterion(k, seeds[k - 1])).collect()
}

/// `[PASS]`/`[FAIL]` line for a record.
pub fn summary_line(r: &CheckRecord) -> String {
    let worst = r.parts.iter().find(|p| !p.pass).unwrap_or(&r.parts[0]);
    let cmp = match worst.cmp {
        Cmp::AtMost => "<=",
        Cmp::AtLeast => ">=",
    };
    format!(
        "[{}] {:>2} {:<22} {} = {:.3e} ({} {:.1e}) {:.2}s",
        if r.pass { "PASS" } else { "FAIL" },
        r.criterion,
        r.name,
        worst.name,
        worst.measured,
        cmp,
        worst.budget,
        r.seconds
    )
}

type PartsResult = Result<Vec<Part>, Box<dyn std::error::Error>>;

/// FRW chart with slow expansion and a box large enough for `s ≤ 10`.
pub fn frw_chart() -> MetricChart {
    MetricChart::frw(parse_expression("exp(0.1*x0)").expect("literal"))
        .expect("valid chart")
        .with_box(vec![(-40.0, 40.0), (-100.0, 100.0)])
        .expect("valid box")
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn null_conservation(seed: u64) -> PartsResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let charts = [MetricChart::minkowski(2), MetricChart::minkowski(3), MetricChart::minkowski(4), frw_chart()];
    let opts = FlowOptions {
        require_null: true,
        ..FlowOptions::default()
    };
    let params = linspace_params(10.0, 10);
    let (mut flat, mut curved): (f64, f64) = (0.0, 0.0);
    for k in 0..100 {
        let chart = if k % 2 == 0 { &charts[(k / 2) % 3] } else { &charts[3] };
        let n = chart.dim();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spatial: Vec<f64> = (1..n).map(|_| rng.gen_range(0.2..1.5) * sign(&mut rng)).collect();
        // Past-directed rays on the FRW chart reach a = 0 before s = 10.
        let future = k % 2 == 1 || rng.gen_bool(0.5);
        let pt = null_completion(chart, &x, &spatial, future)?;
        let bic = flow_bicharacteristic(chart, &pt, &params, &opts)?;
        if k % 2 == 0 {
            flat = flat.max(bic.max_rel_p);
        } else {
            curved = curved.max(bic.max_rel_p);
        }
    }
    Ok(vec![
        Part::at_most("max_rel_drift", flat.max(curved), 1e-9),
        Part::at_most("frw_rel_drift", curved, 1e-9),
    ])
}

fn compatibility(seed: u64) -> PartsResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = MetricChart::frw(parse_expression("exp(0.3*x0)")?)?;
    let conn = corpus::connection(&mut rng, 2, 2);
    let pot = corpus::potential(&mut rng, 2, 2);
    let op = weitzenbock_assemble(&chart, &conn, &pot)?;
    let mut pts = Vec::with_capacity(100);
    for _ in 0..100 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0)];
        let s = rng.gen_range(0.3..2.0) * sign(&mut rng);
        pts.push(null_completion(&chart, &x, &[s], rng.gen_bool(0.5))?);
    }
    let base = compatibility_residual(&op, &conn, &chart, &pts)?.into_iter().fold(0.0, f64::max);
    let delta = corpus::connection(&mut rng, 2, 2);
    let pert = compatibility_residual(&op, &conn.perturbed(1e-2, &delta), &chart, &pts)?;
    let pert_min = pert.into_iter().fold(f64::INFINITY, f64::min);
    // An exact zero baseline is measured against the roundoff level.
    let gain = pert_min / base.max(f64::EPSILON);
    Ok(vec![
        Part::at_most("residual", base, 1e-8),
        Part::at_least("perturbation_gain", gain, 1e3),
    ])
}

fn symbol_identities(seed: u64) -> PartsResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for kind in IdentityKind::ALL {
        let mut r: f64 = 0.0;
        for _ in 0..20 {
            let case = corpus::identity_case(&mut rng, kind, 2, 2);
            let pts = corpus::phase_cloud(&mut rng, 2, 20);
            r = r.max(verify_identity(&case, &pts)?);
        }
        worst = worst.max(r);
        parts.push(Part::at_most(kind.name(), r, 1e-6));
    }
    parts.insert(0, Part::at_most("max_residual", worst, 1e-6));
    Ok(parts)
}

fn random_cmat(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    CMat::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn duhamel(seed: u64) -> PartsResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..=20_000).map(|k| k as f64 / 20_000.0).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (qa, qb) = (random_cmat(&mut rng, 2), random_cmat(&mut rng, 2));
        let q = move |y: f64| &qa + &qb * Complex64::new(y.sin(), 0.0);
        let sol0 = model_duhamel(&q, None, &grid)?;
        worst = worst.max(duhamel_residual(&q, None, &sol0));
        for k in 1..=2 {
            let (ra, rb) = (random_cmat(&mut rng, 2), random_cmat(&mut rng, 2));
            let w = k as f64 + 1.0;
            let r = move |y: f64| &ra + &rb * Complex64::new((w * y).cos(), 0.0);
            let sol = model_duhamel(&q, Some(&r), &grid)?;
            worst = worst.max(duhamel_residual(&q, Some(&r), &sol));
        }
    }
    let q0 = random_cmat(&mut rng, 3);
    let qc = |_: f64| q0.clone();
    let coarse: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
    let sol = model_duhamel(&qc, None, &coarse)?;
    let exp_gap = coarse
        .iter()
        .zip(&sol.b0)
        .map(|(y, b)| max_abs(&(b - expm(&(&q0 * (-I * *y))))))
        .fold(0.0, f64::max);
    Ok(vec![
        Part::at_most("ode_residual", worst, 1e-7),
        Part::at_most("constant_q_vs_expm", exp_gap, 1e-10),
    ])
}

fn model_positivity(seed: u64) -> PartsResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = positivity_sweep(&mut rng, 10_000);
    Ok(vec![
        Part::at_least("min_form_rel", s.min_form_rel, -1e-14),
        Part::at_most("bilinear_gap", s.max_bilinear_gap, 1e-12),
        Part::at_least("feynman_ratio", s.min_feynman_ratio, -1e-10),
    ])
}

fn transport_parallel(seed: u64) -> PartsResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = frw_chart();
    let conn = corpus::connection(&mut rng, 2, 2);
    let pot = corpus::potential(&mut rng, 2, 2);
    let op = weitzenbock_assemble(&chart, &conn, &pot)?;
    let sub = subprincipal(&op, &chart)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let k = rng.gen_range(0.5..1.5) * sign(&mut rng);
        let pt = null_completion(&chart, &x, &[k], true)?;
        let bic = flow_bicharacteristic(&chart, &pt, &linspace_params(1.0, 200), &FlowOptions::default())?;
        let a0 = random_cmat(&mut rng, 2);
        let a = transport_symbol(&TransportProblem::along(&bic, &sub, a0.clone()))?;
        let v = parallel_transport(&conn, &BasePath::from_bicharacteristic(&chart, &bic)?, &a0)?;
        for (p, q) in a.iter().zip(&v) {
            worst = worst.max(max_abs(&(p - q)));
        }
    }
    Ok(vec![Part::at_most("max_gap", worst, 1e-8)])
}

fn kg_kernels() -> PartsResult {
    let g = SpacetimeGrid::desk();
    let ret0 = kg_green(GreenKind::Ret, 0.0, &g)?;
    let mut plateau: f64 = 0.0;
    for (t, x) in [(2.0, 0.0), (3.0, 1.0), (4.0, -2.0), (5.0, 2.5), (6.0, 0.5), (6.5, -4.0)] {
        let v = ret0.box_average(t, x, 2).ok_or("plateau point off grid")?;
        plateau = plateau.max((v - 0.5).norm() / 0.5);
    }
    let gf = kg_feynman_extrapolated(1.0, 0.05, &g)?;
    let mut k0_gap: f64 = 0.0;
    for r in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
        let v = gf.at(0.0, r).ok_or("K0 point off grid")? * (2.0 * PI);
        let target = Complex64::new(0.0, bessel_k0(r));
        k0_gap = k0_gap.max((v - target).norm() / target.norm());
    }
    let mut residual: f64 = kg_residual(&gf, 1.0).off_source;
    for m in [0.0, 1.0] {
        for kind in [GreenKind::Ret, GreenKind::Adv] {
            residual = residual.max(kg_residual(&kg_green(kind, m, &g)?, m).off_source);
        }
    }
    Ok(vec![
        Part::at_most("plateau_rel_error", plateau, 0.02),
        Part::at_most("feynman_vs_k0", k0_gap, 0.02),
        Part::at_most("off_source_residual", residual, 1e-3),
    ])
}

fn hadamard(seed: u64) -> PartsResult {
    let g = SpacetimeGrid::desk();
    let w = kg_wightman(1.0, &g)?;
    let tests = TestFunctionSet::random(&g, 20, seed);
    let gram = gram_positivity(&w, &tests)?;
    let gf = kg_feynman_extrapolated(1.0, 0.05, &g)?;
    let adv = kg_green(GreenKind::Adv, 1.0, &g)?;
    Ok(vec![
        Part::at_least("gram_min_eig_rel", gram.min_eig / gram.spectral_radius, -1e-6),
        Part::at_most("cross_construction", feynman_consistency(&gf, &adv, &w)?, 0.03),
        Part::at_most("bisolution_residual", bisolution_residual(&w, 1.0), 1e-3),
    ])
}

fn wavefront() -> PartsResult {
    let g = SpacetimeGrid::desk();
    let causal = SampledField::from_kernel(&kg_causal(1.0, &g)?);
    let mut localized = 0.0;
    for (t, x) in [(2.0, 2.0), (3.0, -3.0), (4.5, 4.5)] {
        if cone_probe(&causal, t, x, 2)?.localized {
            localized += 1.0;
        }
    }
    let mut off_flags = 0.0;
    for (t, x) in [(3.0, 0.0), (5.0, -1.5), (2.0, 4.5)] {
        off_flags += singular_directions(&probe(&causal, causal.snap(t, x))?, DEFAULT_THRESHOLD).len() as f64;
    }
    let gf = SampledField::from_kernel(&kg_feynman_extrapolated(1.0, 0.05, &g)?);
    let adv = SampledField::from_kernel(&kg_green(GreenKind::Adv, 1.0, &g)?);
    let f_ratio = frequency_asymmetry(&gf, gf.snap(3.0, 3.0))?.ratio();
    // The advanced kernel vanishes on the forward cone; probe its mirror point.
    let a_ratio = frequency_asymmetry(&adv, adv.snap(-3.0, 3.0))?.ratio();
    let d = propagation_dichotomy(1.0, &g, g.dx, &[2.5, 3.5, 4.5])?;
    Ok(vec![
        Part::at_least("on_cone_localized", localized, 3.0),
        Part::at_most("off_cone_flags", off_flags, 0.0),
        Part::at_least("feynman_asymmetry", f_ratio, 5.0),
        Part::at_most("advanced_asymmetry", a_ratio, 2.0),
        Part::at_most("bicharacteristic_variation", d.variation(), 1.0),
        Part::at_least("on_off_cone_gap", d.gap(), 2.0),
    ])
}

fn dirac(seed: u64) -> PartsResult {
    let mut defect: f64 = 0.0;
    let mut sweeps = 0.0;
    let mut rep2 = None;
    for n in [2, 4] {
        let rep = build_clifford(n)?;
        defect = defect.max(rep.clifford_defect());
        if cone_sweep(&rep, 50, seed ^ n as u64)?.passes() {
            sweeps += 1.0;
        }
        if n == 2 {
            rep2 = Some(rep);
        }
    }
    let rep = rep2.expect("n = 2 built");
    let g = SpacetimeGrid::desk();
    let r = dirac_positivity_suite(&rep, &g, &DiracTestSet::random(&g, 20, seed))?;
    Ok(vec![
        Part::at_most("clifford_defect", defect, 0.0),
        Part::at_least("beta_sweeps_passed", sweeps, 2.0),
        Part::at_most("pairing_imag_rel", r.max_imag, 1e-8),
        Part::at_least("gram_min_eig_rel", r.min_eig, -1e-6),
        Part::at_least("omega_min_eig_rel", r.omega_min_eig, -1e-6),
        Part::at_most("d_s_plus", r.d_residual_plus, 1e-3),
        Part::at_most("d_s_minus", r.d_residual_minus, 1e-3),
        Part::at_most("split_gap", r.split_gap, 1e-6),
    ])
}
