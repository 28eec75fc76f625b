//! Lorentzian chart geometry: metric data, the Hamiltonian field of
//! `p(x, ξ) = g^{μν}(x) ξ_μ ξ_ν`, bicharacteristic flow, covector
//! classification and the geodesic relations.
//!
//! Sign convention: the Hamiltonian field is
//! `ẋ^ν = −2 g^{μν} ξ_μ`, `ξ̇_α = ∂_α g^{μν} ξ_μ ξ_ν`,
//! the negative of the textbook `(∂_ξ p, −∂_x p)`. Flow time `s` is always
//! the parameter of this field.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{d_dx, eval_raw, num, parse_expression, Expr, ParseError, MAX_DIM};
use crate::linalg::{symmetric_eigenvalues, RMat};

/// Null threshold used by classification: `|p| ≤ NULL_TOL·‖ξ‖²`.
pub const NULL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("singular metric at {x:?} (|det g| = {det:e})")]
    SingularMetric { x: Vec<f64>, det: f64 },
    #[error("point {x:?} outside the chart box")]
    OutOfChart { x: Vec<f64> },
    #[error("trajectory left the chart box at s = {}", .0.samples.last().map(|p| p.s).unwrap_or(0.0))]
    ChartExit(Box<Bicharacteristic>),
    #[error("step size underflow at s = {s}")]
    StepFailure { s: f64 },
    #[error("covector is not null: |p| = {p:e}, allowed {allowed:e}")]
    NonNullPoint { p: f64, allowed: f64 },
    #[error("flow left the chart before a match was decided")]
    Inconclusive,
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Coordinate chart with symbolic metric components.
#[derive(Debug, Clone)]
pub struct MetricChart {
    dim: usize,
    name: String,
    g: Vec<Expr>,
    dg: Vec<Vec<Expr>>,
    time_orientation: Vec<f64>,
    chart_box: Vec<(f64, f64)>,
    symbolic: Arc<OnceLock<SymbolicInverse>>,
}

/// Symbolic `det g` and `g^{μν}` (adjugate over determinant).
#[derive(Debug, Clone)]
pub struct SymbolicInverse {
    pub det: Expr,
    pub ginv: Vec<Expr>,
}

/// Numeric metric data at a point.
#[derive(Debug, Clone)]
pub struct MetricData {
    pub g: RMat,
    pub ginv: RMat,
    pub det: f64,
    /// `∂_α g_{μν}`, indexed by α.
    pub dg: Vec<RMat>,
    /// `∂_α g^{μν} = −g⁻¹ (∂_α g) g⁻¹`, indexed by α.
    pub dginv: Vec<RMat>,
    /// Levi-Civita symbols `Γ^ρ_{μν}`, indexed by ρ.
    pub christoffel: Vec<RMat>,
}

/// A point of the punctured cotangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "x and ξ dimensions differ");
        PhasePoint { x, xi }
    }

    pub fn xi_norm(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_punctured(&self) -> bool {
        self.xi_norm() > 1e-300
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovectorClass {
    TimelikeFuture,
    TimelikePast,
    NullFuture,
    NullPast,
    Spacelike,
}

impl CovectorClass {
    pub fn is_null(self) -> bool {
        matches!(self, CovectorClass::NullFuture | CovectorClass::NullPast)
    }
}

fn slots(x: &[f64]) -> [f64; 2 * MAX_DIM] {
    let mut s = [0.0; 2 * MAX_DIM];
    s[..x.len()].copy_from_slice(x);
    s
}

impl MetricChart {
    /// Build a chart from metric component expressions (row-major `dim×dim`).
    /// Symmetry, Lorentzian signature and non-degeneracy are checked on a
    /// grid of sample points in the box.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        g: Vec<Expr>,
        chart_box: Vec<(f64, f64)>,
    ) -> Result<Self, GeometryError> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(GeometryError::InvalidChart(format!("dimension {dim} not in 2..=4")));
        }
        if g.len() != dim * dim || chart_box.len() != dim {
            return Err(GeometryError::InvalidChart("component count mismatch".into()));
        }
        for e in &g {
            if e.max_slot().is_some_and(|s| s >= dim) {
                return Err(GeometryError::InvalidChart(format!(
                    "metric component {e} uses a coordinate beyond x{}",
                    dim - 1
                )));
            }
        }
        let dg = (0..dim)
            .map(|a| g.iter().map(|e| d_dx(e, a)).collect())
            .collect();
        let mut time_orientation = vec![0.0; dim];
        time_orientation[0] = 1.0;
        let chart = MetricChart {
            dim,
            name: name.into(),
            g,
            dg,
            time_orientation,
            chart_box,
            symbolic: Arc::new(OnceLock::new()),
        };
        chart.validate()?;
        Ok(chart)
    }

    /// Parse metric components from strings.
    pub fn from_strings(
        name: impl Into<String>,
        dim: usize,
        rows: &[Vec<String>],
        chart_box: Vec<(f64, f64)>,
    ) -> Result<Self, GeometryError> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(GeometryError::InvalidChart(format!("metric must be {dim}×{dim}")));
        }
        let mut g = Vec::with_capacity(dim * dim);
        for row in rows {
            for s in row {
                g.push(parse_expression(s)?);
            }
        }
        Self::new(name, dim, g, chart_box)
    }

    /// Flat `diag(−1, 1, …, 1)`.
    pub fn minkowski(dim: usize) -> Self {
        let g = (0..dim * dim)
            .map(|k| {
                let (i, j) = (k / dim, k % dim);
                num(if i != j {
                    0.0
                } else if i == 0 {
                    -1.0
                } else {
                    1.0
                })
            })
            .collect();
        Self::new(format!("minkowski{dim}"), dim, g, vec![(-1e3, 1e3); dim])
            .expect("Minkowski chart is valid")
    }

    /// 1+1 FRW chart `g = diag(−1, a(x0)²)`.
    pub fn frw(a: Expr) -> Result<Self, GeometryError> {
        let g = vec![num(-1.0), num(0.0), num(0.0), a.clone().powi(2)];
        Self::new(format!("frw:a={a}"), 2, g, vec![(-5.0, 5.0), (-100.0, 100.0)])
    }

    pub fn with_box(mut self, chart_box: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        if chart_box.len() != self.dim {
            return Err(GeometryError::InvalidChart("box dimension mismatch".into()));
        }
        self.chart_box = chart_box;
        self.validate()?;
        Ok(self)
    }

    /// Replace the future-directed time-orientation covector (default `dx⁰`).
    pub fn with_time_orientation(mut self, tau: Vec<f64>) -> Result<Self, GeometryError> {
        if tau.len() != self.dim {
            return Err(GeometryError::InvalidChart("orientation dimension mismatch".into()));
        }
        self.time_orientation = tau;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart_box(&self) -> &[(f64, f64)] {
        &self.chart_box
    }

    pub fn time_orientation(&self) -> &[f64] {
        &self.time_orientation
    }

    /// Metric component expression `g_{μν}`.
    pub fn g_expr(&self, mu: usize, nu: usize) -> &Expr {
        &self.g[mu * self.dim + nu]
    }

    /// `∂_α g_{μν}` expression.
    pub fn dg_expr(&self, alpha: usize, mu: usize, nu: usize) -> &Expr {
        &self.dg[alpha][mu * self.dim + nu]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x
                .iter()
                .zip(&self.chart_box)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Symbolic determinant and inverse metric, built once by cofactor expansion.
    pub fn symbolic_inverse(&self) -> &SymbolicInverse {
        self.symbolic.get_or_init(|| {
            let n = self.dim;
            let m: Vec<Vec<Expr>> = (0..n)
                .map(|i| (0..n).map(|j| self.g_expr(i, j).clone()).collect())
                .collect();
            let det = det_expr(&m);
            let mut ginv = vec![num(0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    // adj(g)_{ij} = (−1)^{i+j} M_{ji}
                    let minor = minor_of(&m, j, i);
                    let cof = det_expr(&minor);
                    let cof = if (i + j) % 2 == 1 { cof.neg() } else { cof };
                    ginv[i * n + j] = cof.div(det.clone());
                }
            }
            SymbolicInverse { det, ginv }
        })
    }

    fn eval_g(&self, x: &[f64]) -> RMat {
        let s = slots(x);
        DMatrix::from_fn(self.dim, self.dim, |i, j| eval_raw(self.g_expr(i, j), &s))
    }

    fn sample_points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<[f64; 3]> = self
            .chart_box
            .iter()
            .map(|&(lo, hi)| {
                let lo = lo.max(-10.0);
                let hi = hi.min(10.0);
                [lo, 0.5 * (lo + hi), hi]
            })
            .collect();
        let total = 3usize.pow(self.dim as u32);
        (0..total)
            .map(|mut k| {
                axes.iter()
                    .map(|ax| {
                        let v = ax[k % 3];
                        k /= 3;
                        v
                    })
                    .collect()
            })
            .collect()
    }

    fn validate(&self) -> Result<(), GeometryError> {
        for x in self.sample_points() {
            let g = self.eval_g(&x);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::InvalidChart(format!("non-finite metric at {x:?}")));
            }
            let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            if (&g - g.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
                return Err(GeometryError::InvalidChart(format!("metric not symmetric at {x:?}")));
            }
            let det = g.determinant();
            if det.abs() < 1e-12 {
                return Err(GeometryError::SingularMetric { x, det });
            }
            let eig = symmetric_eigenvalues(&g);
            let negative = eig.iter().filter(|v| **v < 0.0).count();
            if negative != 1 {
                return Err(GeometryError::InvalidChart(format!(
                    "signature at {x:?} has {negative} negative eigenvalues"
                )));
            }
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<(RMat, RMat, f64), GeometryError> {
        if !self.contains(x) {
            return Err(GeometryError::OutOfChart { x: x.to_vec() });
        }
        let g = self.eval_g(x);
        let det = g.determinant();
        if !(det.abs() >= 1e-12) {
            return Err(GeometryError::SingularMetric { x: x.to_vec(), det });
        }
        let ginv = g
            .clone()
            .lu()
            .try_inverse()
            .ok_or(GeometryError::SingularMetric { x: x.to_vec(), det })?;
        Ok((g, ginv, det))
    }

    /// `g⁻¹` and `∂_α g⁻¹` only (the flow's hot path).
    pub fn inverse_and_derivatives(&self, x: &[f64]) -> Result<(RMat, Vec<RMat>), GeometryError> {
        let (_, ginv, _) = self.check_point(x)?;
        let s = slots(x);
        let n = self.dim;
        let dginv = (0..n)
            .map(|a| {
                let dga = DMatrix::from_fn(n, n, |i, j| eval_raw(self.dg_expr(a, i, j), &s));
                -(&ginv * dga * &ginv)
            })
            .collect();
        Ok((ginv, dginv))
    }

    /// `g⁻¹(ξ, ξ)`.
    pub fn principal(&self, x: &[f64], xi: &[f64]) -> Result<f64, GeometryError> {
        let (_, ginv, _) = self.check_point(x)?;
        Ok(quad(&ginv, xi, xi))
    }
}

fn quad(m: &RMat, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m[(i, j)] * a[i] * b[j];
        }
    }
    acc
}

fn minor_of(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

fn det_expr(m: &[Vec<Expr>]) -> Expr {
    match m.len() {
        0 => num(1.0),
        1 => m[0][0].clone(),
        2 => m[0][0]
            .clone()
            .mul(m[1][1].clone())
            .sub(m[0][1].clone().mul(m[1][0].clone())),
        n => {
            let mut acc = num(0.0);
            for j in 0..n {
                if m[0][j].is_zero() {
                    continue;
                }
                let term = m[0][j].clone().mul(det_expr(&minor_of(m, 0, j)));
                acc = if j % 2 == 0 { acc.add(term) } else { acc.sub(term) };
            }
            acc
        }
    }
}

/// Metric, inverse, derivatives and Levi-Civita symbols at `x`.
pub fn metric_data(chart: &MetricChart, x: &[f64]) -> Result<MetricData, GeometryError> {
    let (g, ginv, det) = chart.check_point(x)?;
    let n = chart.dim;
    let s = slots(x);
    let dg: Vec<RMat> = (0..n)
        .map(|a| DMatrix::from_fn(n, n, |i, j| eval_raw(chart.dg_expr(a, i, j), &s)))
        .collect();
    let dginv = dg.iter().map(|d| -(&ginv * d * &ginv)).collect();
    let christoffel = (0..n)
        .map(|rho| {
            DMatrix::from_fn(n, n, |mu, nu| {
                let mut acc = 0.0;
                for sigma in 0..n {
                    acc += ginv[(rho, sigma)]
                        * (dg[mu][(sigma, nu)] + dg[nu][(sigma, mu)] - dg[sigma][(mu, nu)]);
                }
                0.5 * acc
            })
        })
        .collect();
    Ok(MetricData {
        g,
        ginv,
        det,
        dg,
        dginv,
        christoffel,
    })
}

/// `X_□` at a phase point: `(ẋ, ξ̇)`.
pub fn hamiltonian_field(
    chart: &MetricChart,
    pt: &PhasePoint,
) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
    let (ginv, dginv) = chart.inverse_and_derivatives(&pt.x)?;
    Ok(field_from(&ginv, &dginv, &pt.xi))
}

fn field_from(ginv: &RMat, dginv: &[RMat], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = xi.len();
    let xdot = (0..n)
        .map(|nu| -2.0 * (0..n).map(|mu| ginv[(mu, nu)] * xi[mu]).sum::<f64>())
        .collect();
    let xidot = dginv.iter().map(|d| quad(d, xi, xi)).collect();
    (xdot, xidot)
}

/// One recorded point of a bicharacteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// `p(x, ξ)` at this sample.
    pub p: f64,
}

impl FlowSample {
    pub fn point(&self) -> PhasePoint {
        PhasePoint::new(self.x.clone(), self.xi.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bicharacteristic {
    pub samples: Vec<FlowSample>,
    pub steps: usize,
    pub rejected: usize,
    /// `max_i |p(x_i, ξ_i)|` over accepted steps.
    pub max_abs_p: f64,
    /// `max_i |p(x_i, ξ_i)| / ‖ξ_i‖²` over accepted steps.
    pub max_rel_p: f64,
    pub chart_exit: bool,
}

impl Bicharacteristic {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("a bicharacteristic has at least its seed")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    /// Null tolerance relative to `‖ξ‖²` for the seed check.
    pub tol: f64,
    pub require_null: bool,
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
    /// Newton-correct `ξ₀` after each accepted step to re-impose `p = 0`.
    pub project: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-9,
            require_null: false,
            rtol: 1e-12,
            atol: 1e-13,
            initial_step: 1e-2,
            max_steps: 1_000_000,
            project: false,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Rhs<'a> {
    chart: &'a MetricChart,
    n: usize,
}

impl Rhs<'_> {
    fn eval(&self, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let (ginv, dginv) = self.chart.inverse_and_derivatives(&y[..self.n])?;
        let (xd, xid) = field_from(&ginv, &dginv, &y[self.n..]);
        Ok(xd.into_iter().chain(xid).collect())
    }
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += h * c * v;
        }
    }
    out
}

fn project_null(chart: &MetricChart, y: &mut [f64], n: usize) {
    let Ok((ginv, _)) = chart.inverse_and_derivatives(&y[..n]) else {
        return;
    };
    for _ in 0..3 {
        let xi = &y[n..];
        let p = quad(&ginv, xi, xi);
        let dp: f64 = 2.0 * (0..n).map(|nu| ginv[(0, nu)] * xi[nu]).sum::<f64>();
        if dp == 0.0 {
            return;
        }
        y[n] -= p / dp;
    }
}

/// Integrate `X_□` from `pt` (at `s = 0`) through the requested sample
/// parameters, which must be monotone and of one sign. The integrator lands
/// exactly on every requested parameter.
pub fn flow_bicharacteristic(
    chart: &MetricChart,
    pt: &PhasePoint,
    samples: &[f64],
    opts: &FlowOptions,
) -> Result<Bicharacteristic, GeometryError> {
    let n = chart.dim();
    assert_eq!(pt.dim(), n, "phase point dimension differs from chart");
    let p0 = chart.principal(&pt.x, &pt.xi)?;
    let nrm2 = pt.xi_norm().powi(2);
    if opts.require_null && p0.abs() > opts.tol * nrm2 {
        return Err(GeometryError::NonNullPoint {
            p: p0,
            allowed: opts.tol * nrm2,
        });
    }
    let direction = samples
        .iter()
        .find(|s| **s != 0.0)
        .map(|s| s.signum())
        .unwrap_or(1.0);
    let rhs = Rhs { chart, n };
    let mut y: Vec<f64> = pt.x.iter().chain(&pt.xi).copied().collect();
    let mut s = 0.0;
    let mut h = opts.initial_step * direction;
    let mut k1 = rhs.eval(&y)?;
    let mut out = Bicharacteristic {
        samples: Vec::with_capacity(samples.len()),
        steps: 0,
        rejected: 0,
        max_abs_p: p0.abs(),
        max_rel_p: p0.abs() / nrm2,
        chart_exit: false,
    };
    let record = |out: &mut Bicharacteristic, s: f64, y: &[f64], p: f64| {
        out.samples.push(FlowSample {
            s,
            x: y[..n].to_vec(),
            xi: y[n..].to_vec(),
            p,
        });
    };
    for &target in samples {
        assert!(
            (target - s) * direction >= 0.0,
            "sample parameters must be monotone in one direction from 0"
        );
        while (target - s) * direction > 0.0 {
            if out.steps + out.rejected >= opts.max_steps {
                return Err(GeometryError::StepFailure { s });
            }
            let remaining = target - s;
            let mut last = false;
            if h.abs() >= remaining.abs() {
                h = remaining;
                last = true;
            }
            let k2 = rhs.eval(&axpy(&y, h, &[(A21, &k1)]));
            let trial = k2.and_then(|k2| {
                let k3 = rhs.eval(&axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
                let k4 = rhs.eval(&axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
                let k5 = rhs.eval(&axpy(
                    &y,
                    h,
                    &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
                ))?;
                let k6 = rhs.eval(&axpy(
                    &y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ))?;
                let y5 = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
                let k7 = rhs.eval(&y5)?;
                let err_vec = axpy(
                    &vec![0.0; y.len()],
                    h,
                    &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
                );
                Ok((y5, k7, err_vec))
            });
            let (mut y5, k7, err_vec) = match trial {
                Ok(v) => v,
                Err(GeometryError::OutOfChart { .. }) | Err(GeometryError::SingularMetric { .. })
                    if h.abs() > 1e-9 =>
                {
                    out.rejected += 1;
                    h *= 0.25;
                    continue;
                }
                Err(GeometryError::OutOfChart { .. }) => {
                    out.chart_exit = true;
                    record(&mut out, s, &y, chart.principal(&y[..n], &y[n..]).unwrap_or(f64::NAN));
                    return Err(GeometryError::ChartExit(Box::new(out)));
                }
                Err(e) => return Err(e),
            };
            let err = (err_vec
                .iter()
                .zip(y.iter().zip(&y5))
                .map(|(e, (a, b))| {
                    let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / y.len() as f64)
                .sqrt();
            if err <= 1.0 {
                if opts.project {
                    project_null(chart, &mut y5, n);
                }
                s = if last { target } else { s + h };
                y = y5;
                k1 = if opts.project { rhs.eval(&y)? } else { k7 };
                out.steps += 1;
                let p = chart.principal(&y[..n], &y[n..])?;
                let nrm2: f64 = y[n..].iter().map(|v| v * v).sum();
                out.max_abs_p = out.max_abs_p.max(p.abs());
                out.max_rel_p = out.max_rel_p.max(p.abs() / nrm2);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h *= factor;
                } else {
                    h = (h * factor).abs().max(opts.initial_step * 1e-3) * direction;
                }
            } else {
                out.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            if h.abs() < 1e-14 * (1.0 + s.abs()) {
                return Err(GeometryError::StepFailure { s });
            }
        }
        let p = chart.principal(&y[..n], &y[n..])?;
        record(&mut out, s, &y, p);
    }
    Ok(out)
}

/// `n+1` evenly spaced parameters from 0 to `s_end`.
pub fn linspace_params(s_end: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count).map(|k| s_end * k as f64 / count as f64).collect()
}

/// Classification by the sign of `p` and of `g⁻¹(ξ, τ)` with `τ` the
/// future-directed orientation covector: a causal covector is future-directed
/// when it lies in the same cone as `τ`, i.e. `g⁻¹(ξ, τ) < 0`.
pub fn classify_covector(chart: &MetricChart, pt: &PhasePoint) -> Result<CovectorClass, GeometryError> {
    let (_, ginv, _) = chart.check_point(&pt.x)?;
    let p = quad(&ginv, &pt.xi, &pt.xi);
    let nrm2 = pt.xi_norm().powi(2);
    let pairing = quad(&ginv, &pt.xi, chart.time_orientation());
    let future = pairing < 0.0;
    Ok(if p.abs() <= NULL_TOL * nrm2 {
        if future {
            CovectorClass::NullFuture
        } else {
            CovectorClass::NullPast
        }
    } else if p > 0.0 {
        CovectorClass::Spacelike
    } else if future {
        CovectorClass::TimelikeFuture
    } else {
        CovectorClass::TimelikePast
    })
}

/// Solve `p(x, ξ) = 0` for `ξ₀` given the spatial components, choosing the
/// future- or past-directed root.
pub fn null_completion(
    chart: &MetricChart,
    x: &[f64],
    spatial: &[f64],
    future: bool,
) -> Result<PhasePoint, GeometryError> {
    let n = chart.dim();
    assert_eq!(spatial.len(), n - 1, "expected n−1 spatial components");
    let (_, ginv, _) = chart.check_point(x)?;
    let a = ginv[(0, 0)];
    let b: f64 = (1..n).map(|i| ginv[(0, i)] * spatial[i - 1]).sum();
    let mut cc = 0.0;
    for i in 1..n {
        for j in 1..n {
            cc += ginv[(i, j)] * spatial[i - 1] * spatial[j - 1];
        }
    }
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return Err(GeometryError::InvalidChart("no real null completion".into()));
    }
    for root in [(-b + disc.sqrt()) / a, (-b - disc.sqrt()) / a] {
        let mut xi = vec![root];
        xi.extend_from_slice(spatial);
        let pt = PhasePoint::new(x.to_vec(), xi);
        let class = classify_covector(chart, &pt)?;
        if (class == CovectorClass::NullFuture) == future {
            return Ok(pt);
        }
    }
    Err(GeometryError::InvalidChart("degenerate null completion".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Diagonal,
    CPlus,
    CMinus,
    Unrelated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relation {
    pub kind: RelationKind,
    /// Flow time taking B to (the cone over) A, when related.
    pub s: Option<f64>,
    /// Phase distance at the best match.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RelationOptions {
    pub tol: f64,
    pub s_max: f64,
    pub grid: usize,
}

impl Default for RelationOptions {
    fn default() -> Self {
        RelationOptions {
            tol: 1e-6,
            s_max: 20.0,
            grid: 400,
        }
    }
}

/// Distance in `(x, ξ/‖ξ‖)` used for conic matching.
pub fn phase_distance(a: &PhasePoint, x: &[f64], xi: &[f64]) -> f64 {
    let na = a.xi_norm();
    let nb = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dx = a.x.iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let dxi = a
        .xi
        .iter()
        .zip(xi)
        .map(|(p, q)| (p / na - q / nb).powi(2))
        .sum::<f64>()
        .sqrt();
    dx.max(dxi)
}

fn flow_to(
    chart: &MetricChart,
    from: &PhasePoint,
    ds: f64,
) -> Result<FlowSample, GeometryError> {
    let opts = FlowOptions::default();
    let bic = flow_bicharacteristic(chart, from, &[ds], &opts)?;
    Ok(bic.last().clone())
}

/// Decide whether `A` is on the forward (`C⁺`) or backward (`C⁻`) flow-out of
/// `B`, or on the diagonal, comparing `(x, ξ/‖ξ‖)` within `tol`.
pub fn relation_test(
    chart: &MetricChart,
    a: &PhasePoint,
    b: &PhasePoint,
    opts: &RelationOptions,
) -> Result<Relation, GeometryError> {
    for pt in [a, b] {
        let p = chart.principal(&pt.x, &pt.xi)?;
        let allowed = opts.tol * pt.xi_norm().powi(2);
        if p.abs() > allowed {
            return Err(GeometryError::NonNullPoint { p, allowed });
        }
    }
    let d0 = phase_distance(a, &b.x, &b.xi);
    if d0 <= opts.tol {
        return Ok(Relation {
            kind: RelationKind::Diagonal,
            s: Some(0.0),
            distance: d0,
        });
    }
    let mut exited = false;
    let mut best = (f64::INFINITY, 0.0);
    for sign in [1.0, -1.0] {
        let params = linspace_params(sign * opts.s_max, opts.grid);
        let bic = match flow_bicharacteristic(chart, b, &params, &FlowOptions::default()) {
            Ok(bic) => bic,
            Err(GeometryError::ChartExit(partial)) => {
                exited = true;
                *partial
            }
            Err(e) => return Err(e),
        };
        let d: Vec<f64> = bic
            .samples
            .iter()
            .map(|smp| phase_distance(a, &smp.x, &smp.xi))
            .collect();
        for k in 1..d.len() {
            let left = d[k - 1];
            let right = d.get(k + 1).copied().unwrap_or(f64::INFINITY);
            if d[k] > left || d[k] > right {
                continue;
            }
            // Local minimum on the coarse grid: refine in the bracketing cell pair.
            let center = &bic.samples[k];
            let step = opts.s_max / opts.grid as f64;
            let (dist, s_star) = refine_match(chart, a, center, step)?;
            if dist < best.0 {
                best = (dist, s_star);
            }
            if dist <= opts.tol {
                return Ok(Relation {
                    kind: if s_star > 0.0 {
                        RelationKind::CPlus
                    } else {
                        RelationKind::CMinus
                    },
                    s: Some(s_star),
                    distance: dist,
                });
            }
        }
    }
    if exited {
        return Err(GeometryError::Inconclusive);
    }
    Ok(Relation {
        kind: RelationKind::Unrelated,
        s: None,
        distance: best.0,
    })
}

fn refine_match(
    chart: &MetricChart,
    a: &PhasePoint,
    center: &FlowSample,
    step: f64,
) -> Result<(f64, f64), GeometryError> {
    let base = center.point();
    let eval = |ds: f64| -> f64 {
        match flow_to(chart, &base, ds) {
            Ok(smp) => phase_distance(a, &smp.x, &smp.xi),
            Err(_) => f64::INFINITY,
        }
    };
    let (mut lo, mut hi) = (-step, step);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - golden * (hi - lo);
    let mut d = lo + golden * (hi - lo);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - golden * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + golden * (hi - lo);
            fd = eval(d);
        }
        if (hi - lo).abs() < 1e-13 * (1.0 + center.s.abs()) {
            break;
        }
    }
    let ds = 0.5 * (lo + hi);
    Ok((eval(ds), center.s + ds))
}
