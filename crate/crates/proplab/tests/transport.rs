use num_complex::Complex64;
use proplab::cexpr::CExprMat;
use proplab::expr::{parse_expression, Expr};
use proplab::geometry::*;
use proplab::linalg::{expm, max_abs, CMat, I};
use proplab::symbols::{corpus, subprincipal, weitzenbock_assemble, BundleConnection, Potential};
use proplab::transport::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frw_slow() -> MetricChart {
    MetricChart::frw(parse_expression("exp(0.1*x0)").unwrap())
        .unwrap()
        .with_box(vec![(-40.0, 40.0), (-100.0, 100.0)])
        .unwrap()
}

fn random_cmat(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    })
}

fn straight_line(from: &[f64], dir: &[f64], len: f64, steps: usize) -> BasePath {
    let s: Vec<f64> = (0..=steps).map(|k| len * k as f64 / steps as f64).collect();
    let x = s
        .iter()
        .map(|t| from.iter().zip(dir).map(|(a, d)| a + t * d).collect())
        .collect();
    BasePath {
        s,
        x,
        xdot: vec![dir.to_vec(); steps + 1],
    }
}

#[test]
fn constant_connection_gives_matrix_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let m = random_cmat(&mut rng, 3, 1.0);
        let conn = BundleConnection::new(vec![CExprMat::from_constant(&m), CExprMat::zeros(3)]);
        let len = 1.7;
        let path = straight_line(&[0.0, 0.0], &[1.0, 0.0], len, 400);
        let v0 = CMat::from_fn(3, 1, |i, _| Complex64::new(1.0 + i as f64, -0.5));
        let out = parallel_transport(&conn, &path, &v0).unwrap();
        let exact = expm(&(&m * (-I * len))) * &v0;
        assert!(max_abs(&(out.last().unwrap() - exact)) < 1e-9);
    }
}

#[test]
fn finite_difference_velocities_match_exact_ones() {
    let s: Vec<f64> = (0..50).map(|k| 0.02 * k as f64).collect();
    let x: Vec<Vec<f64>> = s.iter().map(|t| vec![t.sin(), t * t]).collect();
    let path = BasePath::from_samples(s.clone(), x).unwrap();
    for (t, v) in s.iter().zip(&path.xdot) {
        assert!((v[0] - t.cos()).abs() < 1e-3);
        assert!((v[1] - 2.0 * t).abs() < 1e-9);
    }
}

#[test]
fn hermitian_connection_preserves_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let conn = corpus::hermitian_connection(&mut rng, 2, 2);
    let path = straight_line(&[-0.5, 0.2], &[0.6, -0.8], 1.0, 800);
    let v0 = CMat::from_fn(2, 1, |i, _| Complex64::new(0.3, i as f64));
    let out = parallel_transport(&conn, &path, &v0).unwrap();
    for v in &out {
        assert!((v.norm() - v0.norm()).abs() < 1e-10);
    }
}

#[test]
fn small_loop_holonomy_matches_curvature() {
    // Γ₀ = [[x1, 1], [1, 0]], Γ₁ = [[0, x0], [x0, 1]] at the origin region.
    let g0 = CExprMat::from_fn(2, |i, j| {
        let s = match (i, j) {
            (0, 0) => "x1",
            (1, 1) => "0",
            _ => "1",
        };
        proplab::cexpr::CExpr::real(parse_expression(s).unwrap())
    });
    let g1 = CExprMat::from_fn(2, |i, j| {
        let s = match (i, j) {
            (0, 0) => "0",
            (1, 1) => "1",
            _ => "x0*x0+2*x0",
        };
        proplab::cexpr::CExpr::real(parse_expression(s).unwrap())
    });
    let conn = BundleConnection::new(vec![g0.clone(), g1.clone()]);
    let eps = 1e-2;
    let c = [0.1, 0.2];
    let corner = [c[0] - eps / 2.0, c[1] - eps / 2.0];
    let mut v = CMat::identity(2, 2);
    let mut at = corner.to_vec();
    for dir in [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]] {
        let path = straight_line(&at, &dir, eps, 100);
        v = parallel_transport(&conn, &path, &v).unwrap().pop().unwrap();
        at = path.x.last().unwrap().clone();
    }
    // F₀₁ = ∂₀Γ₁ − ∂₁Γ₀ + i[Γ₀, Γ₁] at the loop centre.
    let d0g1 = g1.diff(0).eval(&[c[0], c[1], 0., 0., 0., 0., 0., 0.]);
    let d1g0 = g0.diff(1).eval(&[c[0], c[1], 0., 0., 0., 0., 0., 0.]);
    let a = conn.eval(0, &c);
    let b = conn.eval(1, &c);
    let f = d0g1 - d1g0 + (&a * &b - &b * &a) * I;
    let predicted = f * (-I * eps * eps);
    let measured = v - CMat::identity(2, 2);
    assert!(max_abs(&(&measured - &predicted)) < 0.1 * max_abs(&predicted));
}

#[test]
fn lie_derivative_examples() {
    let f = |x: &[f64]| x[0] * x[0];
    let scaling = |x: &[f64]| vec![x[0]];
    assert!((lie_halfdensity(&scaling, &|_| 1.0, 0.5, &[0.7]) - 0.5).abs() < 1e-9);
    let rot = |x: &[f64]| vec![x[1], -x[0]];
    assert!((lie_halfdensity(&rot, &f, 0.5, &[1.0, 1.0]) - 2.0).abs() < 1e-8);

    let field: Vec<Expr> = ["x1", "-x0"].iter().map(|s| parse_expression(s).unwrap()).collect();
    let fe = parse_expression("x0^2").unwrap();
    assert!((lie_halfdensity_expr(&field, &fe, 0.5, &[1.0, 1.0]) - 2.0).abs() < 1e-14);
    let sc = vec![parse_expression("x0").unwrap()];
    let one = parse_expression("1").unwrap();
    assert!((lie_halfdensity_expr(&sc, &one, 0.5, &[0.3]) - 0.5).abs() < 1e-15);
}

#[test]
fn lie_derivative_numeric_matches_symbolic() {
    let field: Vec<Expr> = ["sin(x1)*x0", "exp(0.2*x0)"].iter().map(|s| parse_expression(s).unwrap()).collect();
    let fe = parse_expression("cos(x0)*x1+x1^3").unwrap();
    let fnum = |x: &[f64]| x[0].cos() * x[1] + x[1].powi(3);
    let xnum = |x: &[f64]| vec![x[1].sin() * x[0], (0.2 * x[0]).exp()];
    for p in [[0.3, -0.4], [1.1, 0.9]] {
        let a = lie_halfdensity(&xnum, &fnum, 0.5, &p);
        let b = lie_halfdensity_expr(&field, &fe, 0.5, &p);
        assert!((a - b).abs() < 1e-8);
    }
}

fn frw_bundle(rng: &mut ChaCha8Rng) -> (MetricChart, BundleConnection, Potential) {
    (frw_slow(), corpus::connection(rng, 2, 2), corpus::potential(rng, 2, 2))
}

#[test]
fn transport_symbol_equals_parallel_transport_on_frw() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (chart, conn, pot) = frw_bundle(&mut rng);
    let op = weitzenbock_assemble(&chart, &conn, &pot).unwrap();
    let sub = subprincipal(&op, &chart).unwrap();
    for _ in 0..5 {
        let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let k = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let pt = null_completion(&chart, &x, &[k], true).unwrap();
        let bic = flow_bicharacteristic(&chart, &pt, &linspace_params(1.0, 200), &FlowOptions::default()).unwrap();
        let a0 = random_cmat(&mut rng, 2, 1.0);
        let prob = TransportProblem::along(&bic, &sub, a0.clone());
        let a = transport_symbol(&prob).unwrap();
        let path = BasePath::from_bicharacteristic(&chart, &bic).unwrap();
        let v = parallel_transport(&conn, &path, &a0).unwrap();
        for (p, q) in a.iter().zip(&v) {
            assert!(max_abs(&(p - q)) < 1e-8);
        }
    }
}

#[test]
fn constant_source_grows_linearly() {
    let s: Vec<f64> = (0..=50).map(|k| 0.04 * k as f64).collect();
    let f = CMat::from_fn(2, 2, |i, j| Complex64::new((i + 2 * j) as f64, 0.5));
    let a0 = CMat::identity(2, 2);
    let prob = TransportProblem {
        s: s.clone(),
        sigma_sub: vec![CMat::zeros(2, 2); s.len()],
        f: Some(vec![f.clone(); s.len()]),
        a0: a0.clone(),
    };
    let a = transport_symbol(&prob).unwrap();
    for (t, v) in s.iter().zip(&a) {
        assert!(max_abs(&(v - (&a0 + &f * (I * *t)))) < 1e-13);
    }
}

#[test]
fn grid_mismatch_is_reported() {
    let prob = TransportProblem {
        s: vec![0.0, 1.0, 2.0],
        sigma_sub: vec![CMat::zeros(1, 1); 2],
        f: None,
        a0: CMat::identity(1, 1),
    };
    assert!(matches!(transport_symbol(&prob), Err(TransportError::GridMismatch(_))));
}

fn grid(n: usize, len: f64) -> Vec<f64> {
    (0..=n).map(|k| len * k as f64 / n as f64).collect()
}

#[test]
fn duhamel_constant_q_is_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q0 = random_cmat(&mut rng, 3, 1.0);
    let q = |_: f64| q0.clone();
    let g = grid(2000, 1.0);
    let sol = model_duhamel(&q, None, &g).unwrap();
    for (y, b) in g.iter().zip(&sol.b0).step_by(97) {
        let exact = expm(&(&q0 * (-I * *y)));
        assert!(max_abs(&(b - exact)) < 1e-10);
    }
}

#[test]
fn duhamel_free_unit_source() {
    let q = |_: f64| CMat::zeros(2, 2);
    let r = |_: f64| CMat::identity(2, 2);
    let g = grid(100, 2.0);
    let sol = model_duhamel(&q, Some(&r), &g).unwrap();
    for (y, b) in g.iter().zip(&sol.b) {
        assert!(max_abs(&(b - CMat::identity(2, 2) * (-I * *y))) < 1e-14);
    }
}

#[test]
fn duhamel_residual_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..4 {
        let (qa, qb) = (random_cmat(&mut rng, 2, 1.0), random_cmat(&mut rng, 2, 1.0));
        let (ra, rb) = (random_cmat(&mut rng, 2, 1.0), random_cmat(&mut rng, 2, 1.0));
        let q = move |y: f64| &qa + &qb * Complex64::new(y.sin(), 0.0);
        let r = move |y: f64| &ra + &rb * Complex64::new((2.0 * y).cos(), 0.0);
        let g = grid(10_000, 1.0);
        let sol = model_duhamel(&q, Some(&r), &g).unwrap();
        assert!(duhamel_residual(&q, Some(&r), &sol) < 1e-7);
        let sol0 = model_duhamel(&q, None, &g).unwrap();
        assert!(duhamel_residual(&q, None, &sol0) < 1e-7);
    }
}

#[test]
fn duhamel_detects_singular_b0() {
    // A strongly non-normal generator with large imaginary part drives det b₀ → 0.
    let q = |_: f64| CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(0.0, -30.0)]));
    let r = |_: f64| CMat::identity(1, 1);
    let g = grid(1000, 1.0);
    assert!(matches!(
        model_duhamel(&q, Some(&r), &g),
        Err(TransportError::SingularB0 { .. })
    ));
}

#[test]
fn causal_symbol_on_frw_bundle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (chart, conn, _) = frw_bundle(&mut rng);
    let b = null_completion(&chart, &[0.1, -0.3], &[0.8], true).unwrap();
    let s = 0.7;
    let bic = flow_bicharacteristic(&chart, &b, &linspace_params(s, 280), &FlowOptions::default()).unwrap();
    let a = bic.last().point();
    // Keep the search window inside the chart in both flow directions.
    let opts = RelationOptions {
        s_max: 3.0,
        ..RelationOptions::default()
    };
    let cs = causal_symbol(&chart, &conn, &a, &b, &opts).unwrap();
    assert!((cs.s - s).abs() < 1e-5);
    assert!((cs.prefactor - I * 0.5 * (2.0 * std::f64::consts::PI).sqrt()).norm() < 1e-15);
    let path = BasePath::from_bicharacteristic(&chart, &bic).unwrap();
    let direct = parallel_transport(&conn, &path, &CMat::identity(2, 2)).unwrap().pop().unwrap();
    assert!(max_abs(&(&cs.u - &direct)) < 1e-6);

    let back = causal_symbol(&chart, &conn, &b, &a, &opts).unwrap();
    assert!(max_abs(&(&cs.u * &back.u - CMat::identity(2, 2))) < 1e-8);

    let off = PhasePoint::new(vec![a.x[0] + 0.5, a.x[1]], a.xi.clone());
    let off = null_completion(&chart, &off.x, &[a.xi[1]], true).unwrap();
    let r = causal_symbol(&chart, &conn, &off, &b, &opts);
    assert!(matches!(r, Err(TransportError::NotRelated)), "{r:?}");
}
