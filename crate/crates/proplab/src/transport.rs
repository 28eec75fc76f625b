//! Transport equations along curves and bicharacteristics.
//!
//! All ODEs here are linear, `a′ = M(s)a + F(s)`, and are integrated by
//! classical RK4 on the sample grid they are given. Midpoint values of sampled
//! coefficients come from cubic Lagrange interpolation over the neighbouring
//! samples.

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{differentiate, eval_raw, Expr, NUM_SLOTS};
use crate::geometry::{
    flow_bicharacteristic, hamiltonian_field, relation_test, Bicharacteristic, FlowOptions,
    GeometryError, MetricChart, PhasePoint, RelationKind, RelationOptions,
};
use crate::linalg::{max_abs, CMat, I};
use crate::symbols::{BundleConnection, MatrixSymbol};

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("b₀ is singular at y¹ = {y} (|det| = {det:e})")]
    SingularB0 { y: f64, det: f64 },
    #[error("points are not on a common bicharacteristic")]
    NotRelated,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Value at `t` of the cubic through the (up to) four samples around interval `k`.
fn interp_mid(s: &[f64], vals: &[CMat], k: usize, t: f64) -> CMat {
    let n = s.len();
    let lo = if n < 4 { 0 } else { k.saturating_sub(1).min(n - 4) };
    let hi = (lo + 4).min(n);
    let mut acc = CMat::zeros(vals[k].nrows(), vals[k].ncols());
    for i in lo..hi {
        let mut w = 1.0;
        for j in lo..hi {
            if i != j {
                w *= (t - s[j]) / (s[i] - s[j]);
            }
        }
        acc += &vals[i] * Complex64::new(w, 0.0);
    }
    acc
}

/// RK4 for `a′ = M a + F` on the grid `s` from `a(s₀) = a0`.
pub fn rk4_linear_on_grid(
    s: &[f64],
    m: &[CMat],
    f: Option<&[CMat]>,
    a0: &CMat,
) -> Result<Vec<CMat>, TransportError> {
    if m.len() != s.len() || f.is_some_and(|f| f.len() != s.len()) {
        return Err(TransportError::GridMismatch(format!(
            "{} grid points, {} coefficient samples",
            s.len(),
            m.len()
        )));
    }
    let mut out = Vec::with_capacity(s.len());
    if s.is_empty() {
        return Ok(out);
    }
    let mut a = a0.clone();
    out.push(a.clone());
    let zero = CMat::zeros(a0.nrows(), a0.ncols());
    let forcing = |k: usize, t: Option<f64>| -> CMat {
        match (f, t) {
            (None, _) => zero.clone(),
            (Some(f), None) => f[k].clone(),
            (Some(f), Some(t)) => interp_mid(s, f, k, t),
        }
    };
    for k in 0..s.len() - 1 {
        let h = Complex64::new(s[k + 1] - s[k], 0.0);
        let tm = 0.5 * (s[k] + s[k + 1]);
        let mm = interp_mid(s, m, k, tm);
        let fm = forcing(k, Some(tm));
        let k1 = &m[k] * &a + forcing(k, None);
        let k2 = &mm * (&a + &k1 * (h * 0.5)) + &fm;
        let k3 = &mm * (&a + &k2 * (h * 0.5)) + &fm;
        let k4 = &m[k + 1] * (&a + &k3 * h) + forcing(k + 1, None);
        a += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * (h / 6.0);
        out.push(a.clone());
    }
    Ok(out)
}

/// Sampled base curve with velocities.
#[derive(Debug, Clone)]
pub struct BasePath {
    pub s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xdot: Vec<Vec<f64>>,
}

impl BasePath {
    /// Velocities by second-order finite differences of the samples.
    pub fn from_samples(s: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self, TransportError> {
        if s.len() != x.len() || s.len() < 3 {
            return Err(TransportError::GridMismatch("need ≥ 3 matching samples".into()));
        }
        let n = s.len();
        let dim = x[0].len();
        let xdot = (0..n)
            .map(|k| {
                let (a, b, c) = if k == 0 {
                    (0, 1, 2)
                } else if k == n - 1 {
                    (n - 3, n - 2, n - 1)
                } else {
                    (k - 1, k, k + 1)
                };
                // Derivative at s[k] of the parabola through samples a, b, c.
                let t = s[k];
                let (sa, sb, sc) = (s[a], s[b], s[c]);
                let wa = ((t - sb) + (t - sc)) / ((sa - sb) * (sa - sc));
                let wb = ((t - sa) + (t - sc)) / ((sb - sa) * (sb - sc));
                let wc = ((t - sa) + (t - sb)) / ((sc - sa) * (sc - sb));
                (0..dim)
                    .map(|i| wa * x[a][i] + wb * x[b][i] + wc * x[c][i])
                    .collect()
            })
            .collect();
        Ok(BasePath { s, x, xdot })
    }

    /// Exact velocities `ẋ` from the Hamiltonian field.
    pub fn from_bicharacteristic(chart: &MetricChart, bic: &Bicharacteristic) -> Result<Self, TransportError> {
        let mut s = Vec::with_capacity(bic.samples.len());
        let mut x = Vec::with_capacity(bic.samples.len());
        let mut xdot = Vec::with_capacity(bic.samples.len());
        for smp in &bic.samples {
            let (xd, _) = hamiltonian_field(chart, &smp.point())?;
            s.push(smp.s);
            x.push(smp.x.clone());
            xdot.push(xd);
        }
        Ok(BasePath { s, x, xdot })
    }
}

/// Solve `v′ = −iΓ_μ(x(s))ẋ^μ(s) v` along `path` (columns of `v0` are transported together).
pub fn parallel_transport(
    conn: &BundleConnection,
    path: &BasePath,
    v0: &CMat,
) -> Result<Vec<CMat>, TransportError> {
    if v0.nrows() != conn.rank {
        return Err(TransportError::GridMismatch("fiber rank differs from connection".into()));
    }
    let m: Vec<CMat> = path
        .x
        .iter()
        .zip(&path.xdot)
        .map(|(x, v)| conn.contract(x, v) * (-I))
        .collect();
    rk4_linear_on_grid(&path.s, &m, None, v0)
}

/// `L_X(f|dx|^α)/|dx|^α = X^μ∂_μ f + α div(X) f`, derivatives by central differences.
pub fn lie_halfdensity(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    f: &dyn Fn(&[f64]) -> f64,
    alpha: f64,
    x: &[f64],
) -> f64 {
    let n = x.len();
    let xv = field(x);
    let mut df = 0.0;
    let mut div = 0.0;
    for mu in 0..n {
        let h = 1e-5 * (1.0 + x[mu].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[mu] += h;
        xm[mu] -= h;
        df += xv[mu] * (f(&xp) - f(&xm)) / (2.0 * h);
        div += (field(&xp)[mu] - field(&xm)[mu]) / (2.0 * h);
    }
    df + alpha * div * f(x)
}

/// Same as [`lie_halfdensity`] with exact symbolic derivatives.
pub fn lie_halfdensity_expr(field: &[Expr], f: &Expr, alpha: f64, x: &[f64]) -> f64 {
    let mut s = [0.0; NUM_SLOTS];
    s[..x.len()].copy_from_slice(x);
    let mut acc = 0.0;
    for (mu, xm) in field.iter().enumerate() {
        acc += eval_raw(xm, &s) * eval_raw(&differentiate(f, mu), &s);
        acc += alpha * eval_raw(&differentiate(xm, mu), &s) * eval_raw(f, &s);
    }
    acc
}

/// Data for `a′ = i f − i σ_sub a` along a sampled bicharacteristic.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub s: Vec<f64>,
    pub sigma_sub: Vec<CMat>,
    /// Source samples; `None` means `f = 0`.
    pub f: Option<Vec<CMat>>,
    pub a0: CMat,
}

impl TransportProblem {
    /// Sample the subprincipal symbol `sub` (degree-1 symbol) along `bic`.
    pub fn along(bic: &Bicharacteristic, sub: &MatrixSymbol, a0: CMat) -> Self {
        let sigma_sub = bic
            .samples
            .iter()
            .map(|smp| sub.eval(0, &smp.x, &smp.xi))
            .collect();
        TransportProblem {
            s: bic.samples.iter().map(|p| p.s).collect(),
            sigma_sub,
            f: None,
            a0,
        }
    }
}

/// Solve `(−iX_□ + σ_sub) a = f` along the flow, i.e. `a′ = i f − i σ_sub a`.
pub fn transport_symbol(problem: &TransportProblem) -> Result<Vec<CMat>, TransportError> {
    if problem.sigma_sub.len() != problem.s.len() {
        return Err(TransportError::GridMismatch("σ_sub samples differ from grid".into()));
    }
    let m: Vec<CMat> = problem.sigma_sub.iter().map(|sig| sig * (-I)).collect();
    let f: Option<Vec<CMat>> = problem
        .f
        .as_ref()
        .map(|f| f.iter().map(|v| v * I).collect());
    rk4_linear_on_grid(&problem.s, &m, f.as_deref(), &problem.a0)
}

/// Solution of the model transport hierarchy on a `y¹` grid starting at 0.
#[derive(Debug, Clone)]
pub struct DuhamelSolution {
    pub grid: Vec<f64>,
    pub b0: Vec<CMat>,
    /// `b_k` for the supplied `r_k` (equals `b₀` when no source is given).
    pub b: Vec<CMat>,
}

/// `∂b₀/∂y¹ = −iqb₀`, `b₀(0) = 𝟙` by RK4, then
/// `b_k = −i b₀ ∫₀^{y¹} b₀⁻¹ r_k dt` by cumulative trapezoid.
pub fn model_duhamel(
    q: &dyn Fn(f64) -> CMat,
    r: Option<&dyn Fn(f64) -> CMat>,
    grid: &[f64],
) -> Result<DuhamelSolution, TransportError> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(TransportError::GridMismatch("grid must start at y¹ = 0".into()));
    }
    let n = q(0.0).nrows();
    let mut b0 = Vec::with_capacity(grid.len());
    let mut b = CMat::identity(n, n);
    b0.push(b.clone());
    for k in 0..grid.len() - 1 {
        let (y, h) = (grid[k], grid[k + 1] - grid[k]);
        let hc = Complex64::new(h, 0.0);
        let qm = q(y + 0.5 * h) * (-I);
        let k1 = q(y) * (-I) * &b;
        let k2 = &qm * (&b + &k1 * (hc * 0.5));
        let k3 = &qm * (&b + &k2 * (hc * 0.5));
        let k4 = q(y + h) * (-I) * (&b + &k3 * hc);
        b += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * (hc / 6.0);
        b0.push(b.clone());
    }
    let Some(r) = r else {
        return Ok(DuhamelSolution {
            grid: grid.to_vec(),
            b: b0.clone(),
            b0,
        });
    };
    let mut integrand = Vec::with_capacity(grid.len());
    for (y, bk) in grid.iter().zip(&b0) {
        let det = bk.determinant().norm();
        if det < 1e-10 {
            return Err(TransportError::SingularB0 { y: *y, det });
        }
        let inv = bk.clone().try_inverse().ok_or(TransportError::SingularB0 { y: *y, det })?;
        integrand.push(inv * r(*y));
    }
    let mut acc = CMat::zeros(n, n);
    let mut out = Vec::with_capacity(grid.len());
    out.push(CMat::zeros(n, n));
    for k in 0..grid.len() - 1 {
        let h = grid[k + 1] - grid[k];
        acc += (&integrand[k] + &integrand[k + 1]) * Complex64::new(0.5 * h, 0.0);
        out.push(&b0[k + 1] * &acc * (-I));
    }
    Ok(DuhamelSolution {
        grid: grid.to_vec(),
        b0,
        b: out,
    })
}

/// `max ‖−i b′ + q b + r‖` over interior grid nodes, `b′` by central differences.
pub fn duhamel_residual(
    q: &dyn Fn(f64) -> CMat,
    r: Option<&dyn Fn(f64) -> CMat>,
    sol: &DuhamelSolution,
) -> f64 {
    let g = &sol.grid;
    let mut worst: f64 = 0.0;
    for k in 1..g.len() - 1 {
        let db = (&sol.b[k + 1] - &sol.b[k - 1]) * Complex64::new(1.0 / (g[k + 1] - g[k - 1]), 0.0);
        let mut res = db * (-I) + q(g[k]) * &sol.b[k];
        if let Some(r) = r {
            res += r(g[k]);
        }
        worst = worst.max(max_abs(&res));
    }
    worst
}

/// Endomorphism part `u` of the causal propagator's principal symbol.
#[derive(Debug, Clone)]
pub struct CausalSymbol {
    pub relation: RelationKind,
    /// Flow time from B to A.
    pub s: f64,
    pub u: CMat,
    /// The scalar prefactor `(i/2)√(2π)`; the `|d_C|` density is not computed.
    pub prefactor: Complex64,
}

/// Parallel-transport `𝟙` from `B` to `A` along their common bicharacteristic.
pub fn causal_symbol(
    chart: &MetricChart,
    conn: &BundleConnection,
    a: &PhasePoint,
    b: &PhasePoint,
    opts: &RelationOptions,
) -> Result<CausalSymbol, TransportError> {
    let rel = relation_test(chart, a, b, opts)?;
    let prefactor = I * 0.5 * (2.0 * std::f64::consts::PI).sqrt();
    let id = CMat::identity(conn.rank, conn.rank);
    match (rel.kind, rel.s) {
        (RelationKind::Unrelated, _) | (_, None) => Err(TransportError::NotRelated),
        (RelationKind::Diagonal, _) => Ok(CausalSymbol {
            relation: rel.kind,
            s: 0.0,
            u: id,
            prefactor,
        }),
        (kind, Some(s)) => {
            let steps = ((400.0 * s.abs()).ceil() as usize).max(400);
            let params: Vec<f64> = (0..=steps).map(|k| s * k as f64 / steps as f64).collect();
            let bic = flow_bicharacteristic(chart, b, &params, &FlowOptions::default())?;
            let path = BasePath::from_bicharacteristic(chart, &bic)?;
            let u = parallel_transport(conn, &path, &id)?
                .pop()
                .expect("non-empty transport");
            Ok(CausalSymbol {
                relation: kind,
                s,
                u,
                prefactor,
            })
        }
    }
}
