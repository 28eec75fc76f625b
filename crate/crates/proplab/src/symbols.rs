//! Matrix-valued symbol calculus for second-order operators.
//!
//! Convention: the symbol of `∂_μ` is `−iξ_μ`, so `−A^{μν}∂_μ∂_ν + B^μ∂_μ + C`
//! has total symbol `A^{μν}ξ_μξ_ν − iB^μξ_μ + C`. With this choice
//!
//! * `σ_sub(a) = a_{m−1} + (1/2i) Σ_μ ∂_{x^μ}∂_{ξ_μ} a_m`,
//! * `(p∘q)_{m−1} = p q_{−} + p_{−} q + i Σ_μ ∂_{ξ_μ}p ∂_{x^μ}q`,
//! * `σ_sub(□) = −2 g^{μν} Γ_ν ξ_μ` for the Weitzenböck connection `∇ = ∂ + iΓ`,
//!
//! which matches the Hamiltonian field used in [`crate::geometry`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::cexpr::{CExpr, CExprMat};
use crate::expr::{d_dx, num, parse_phase_expression, xi, Expr, ParseError, NUM_SLOTS, XI_OFFSET};
use crate::geometry::{metric_data, GeometryError, MetricChart, PhasePoint};
use crate::linalg::{max_abs, CMat, I};

pub type Slots = [f64; NUM_SLOTS];
pub type SymbolFn = Arc<dyn Fn(&Slots) -> CMat + Send + Sync>;

#[derive(Debug, Clone, Error)]
pub enum SymbolError {
    #[error("truncation underflow: need {needed} homogeneous components, have {have}")]
    TruncationUnderflow { needed: usize, have: usize },
    #[error("identity not applicable: {0}")]
    IdentityInapplicable(String),
    #[error("symbol not elliptic: |det q| = {det:e}")]
    NotElliptic { det: f64 },
    #[error("point off the characteristic set: |p| = {p:e}")]
    NonNullPoint { p: f64 },
    #[error("operator is not normally hyperbolic (deviation {deviation:e})")]
    NotNormallyHyperbolic { deviation: f64 },
    #[error("rank or dimension mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Evaluation slots for a phase point.
pub fn phase_slots(x: &[f64], xi_: &[f64]) -> Slots {
    let mut s = [0.0; NUM_SLOTS];
    s[..x.len()].copy_from_slice(x);
    s[XI_OFFSET..XI_OFFSET + xi_.len()].copy_from_slice(xi_);
    s
}

/// One homogeneous component: symbolic, or a callable whose derivatives are
/// taken by central differences with step `1e−5·(1+|v|)`.
#[derive(Clone)]
pub enum Component {
    Sym(CExprMat),
    Fun { rank: usize, f: SymbolFn },
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Sym(m) => write!(f, "Sym({} nodes, rank {})", m.size(), m.n),
            Component::Fun { rank, .. } => write!(f, "Fun(rank {rank})"),
        }
    }
}

impl Component {
    pub fn zero(rank: usize) -> Self {
        Component::Sym(CExprMat::zeros(rank))
    }

    pub fn identity(rank: usize) -> Self {
        Component::Sym(CExprMat::identity(rank))
    }

    /// `e·𝟙`.
    pub fn scalar(rank: usize, e: CExpr) -> Self {
        Component::Sym(CExprMat::scalar(rank, &e))
    }

    pub fn callable(rank: usize, f: impl Fn(&Slots) -> CMat + Send + Sync + 'static) -> Self {
        Component::Fun {
            rank,
            f: Arc::new(f),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Component::Sym(m) => m.n,
            Component::Fun { rank, .. } => *rank,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, Component::Sym(_))
    }

    pub fn eval(&self, s: &Slots) -> CMat {
        match self {
            Component::Sym(m) => m.eval(s),
            Component::Fun { f, .. } => f(s),
        }
    }

    pub fn eval_at(&self, x: &[f64], xi_: &[f64]) -> CMat {
        self.eval(&phase_slots(x, xi_))
    }

    fn as_fn(&self) -> SymbolFn {
        match self {
            Component::Sym(m) => {
                let m = m.clone();
                Arc::new(move |s: &Slots| m.eval(s))
            }
            Component::Fun { f, .. } => f.clone(),
        }
    }

    /// Derivative in evaluation slot `slot`.
    pub fn diff(&self, slot: usize) -> Component {
        match self {
            Component::Sym(m) => Component::Sym(m.diff(slot)),
            Component::Fun { rank, f } => {
                let f = f.clone();
                Component::callable(*rank, move |s: &Slots| {
                    let h = 1e-5 * (1.0 + s[slot].abs());
                    let mut sp = *s;
                    let mut sm = *s;
                    sp[slot] += h;
                    sm[slot] -= h;
                    (f(&sp) - f(&sm)) / Complex64::new(2.0 * h, 0.0)
                })
            }
        }
    }

    fn binary(
        &self,
        o: &Component,
        sym: impl Fn(&CExprMat, &CExprMat) -> CExprMat,
        op: fn(CMat, CMat) -> CMat,
    ) -> Component {
        assert_eq!(self.rank(), o.rank(), "component rank mismatch");
        match (self, o) {
            (Component::Sym(a), Component::Sym(b)) => Component::Sym(sym(a, b)),
            _ => {
                let (fa, fb) = (self.as_fn(), o.as_fn());
                Component::callable(self.rank(), move |s: &Slots| op(fa(s), fb(s)))
            }
        }
    }

    fn unary(&self, sym: impl Fn(&CExprMat) -> CExprMat, op: fn(CMat) -> CMat) -> Component {
        match self {
            Component::Sym(a) => Component::Sym(sym(a)),
            Component::Fun { rank, f } => {
                let f = f.clone();
                Component::callable(*rank, move |s: &Slots| op(f(s)))
            }
        }
    }

    pub fn add(&self, o: &Component) -> Component {
        self.binary(o, CExprMat::add, |a, b| a + b)
    }

    pub fn sub(&self, o: &Component) -> Component {
        self.binary(o, CExprMat::sub, |a, b| a - b)
    }

    pub fn mul(&self, o: &Component) -> Component {
        self.binary(o, CExprMat::mul, |a, b| a * b)
    }

    pub fn neg(&self) -> Component {
        self.unary(CExprMat::neg, |a| -a)
    }

    pub fn times_i(&self) -> Component {
        self.unary(CExprMat::times_i, |a| a * I)
    }

    /// Conjugate transpose (pointwise, no symbol-calculus correction).
    pub fn adjoint(&self) -> Component {
        self.unary(CExprMat::adjoint, |a| a.adjoint())
    }

    pub fn scale(&self, z: Complex64) -> Component {
        match self {
            Component::Sym(a) => Component::Sym(a.scale(&CExpr::constant(z))),
            Component::Fun { rank, f } => {
                let f = f.clone();
                Component::callable(*rank, move |s: &Slots| f(s) * z)
            }
        }
    }

    /// Multiply by a scalar expression.
    pub fn scale_expr(&self, e: &CExpr) -> Component {
        self.mul(&Component::scalar(self.rank(), e.clone()))
    }

    pub fn substitute(&self, map: &[Option<Expr>]) -> Component {
        match self {
            Component::Sym(a) => Component::Sym(a.substitute(map)),
            Component::Fun { .. } => panic!("substitute needs a symbolic component"),
        }
    }
}

/// `Σ_μ ∂_{x^μ}∂_{ξ_μ} c`.
pub fn mixed_trace(c: &Component, dim: usize) -> Component {
    let mut acc = Component::zero(c.rank());
    for mu in 0..dim {
        acc = acc.add(&c.diff(XI_OFFSET + mu).diff(mu));
    }
    acc
}

/// `Σ_μ ∂_{ξ_μ}p · ∂_{x^μ}q`.
fn xi_x_pairing(p: &Component, q: &Component, dim: usize) -> Component {
    let mut acc = Component::zero(p.rank());
    for mu in 0..dim {
        acc = acc.add(&p.diff(XI_OFFSET + mu).mul(&q.diff(mu)));
    }
    acc
}

/// Hamilton action `X_p q = Σ_μ (∂_{x^μ}p ∂_{ξ_μ}q − ∂_{ξ_μ}p ∂_{x^μ}q)`.
pub fn hamilton_action(p: &Component, q: &Component, dim: usize) -> Component {
    let mut acc = Component::zero(p.rank());
    for mu in 0..dim {
        let a = p.diff(mu).mul(&q.diff(XI_OFFSET + mu));
        let b = p.diff(XI_OFFSET + mu).mul(&q.diff(mu));
        acc = acc.add(&a.sub(&b));
    }
    acc
}

/// Finitely truncated polyhomogeneous symbol `a_m + a_{m−1} + …` (at most three terms).
#[derive(Clone, Debug)]
pub struct MatrixSymbol {
    pub degree: f64,
    pub dim: usize,
    pub components: Vec<Component>,
}

impl MatrixSymbol {
    pub fn new(degree: f64, dim: usize, components: Vec<Component>) -> Self {
        assert!(
            (1..=3).contains(&components.len()),
            "a symbol carries one to three homogeneous components"
        );
        let r = components[0].rank();
        assert!(components.iter().all(|c| c.rank() == r), "component ranks differ");
        MatrixSymbol {
            degree,
            dim,
            components,
        }
    }

    /// Scalar symbol `Σ_k e_k·𝟙` from phase-expression strings.
    pub fn scalar_from_strings(
        degree: f64,
        dim: usize,
        rank: usize,
        comps: &[&str],
    ) -> Result<Self, SymbolError> {
        let comps = comps
            .iter()
            .map(|s| Ok(Component::scalar(rank, CExpr::real(parse_phase_expression(s)?))))
            .collect::<Result<Vec<_>, SymbolError>>()?;
        Ok(Self::new(degree, dim, comps))
    }

    pub fn rank(&self) -> usize {
        self.components[0].rank()
    }

    pub fn principal(&self) -> &Component {
        &self.components[0]
    }

    pub fn component(&self, k: usize) -> Result<&Component, SymbolError> {
        self.components.get(k).ok_or(SymbolError::TruncationUnderflow {
            needed: k + 1,
            have: self.components.len(),
        })
    }

    pub fn eval(&self, k: usize, x: &[f64], xi_: &[f64]) -> CMat {
        self.components[k].eval_at(x, xi_)
    }

    /// Largest relative homogeneity defect over `points` and `λ ∈ {2, 5}`.
    pub fn homogeneity_defect(&self, points: &[PhasePoint]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            let d = self.degree - k as f64;
            for pt in points {
                let base = c.eval_at(&pt.x, &pt.xi);
                let scale = max_abs(&base).max(1e-300);
                for lambda in [2.0f64, 5.0] {
                    let xi_l: Vec<f64> = pt.xi.iter().map(|v| v * lambda).collect();
                    let scaled = c.eval_at(&pt.x, &xi_l);
                    let diff = max_abs(&(scaled - &base * Complex64::new(lambda.powf(d), 0.0)));
                    worst = worst.max(diff / (lambda.powf(d) * scale));
                }
            }
        }
        worst
    }
}

/// Subprincipal symbol of a truncated symbol: `a_{m−1} − (i/2) Σ ∂_x∂_ξ a_m`.
pub fn subprincipal_symbol(sym: &MatrixSymbol) -> Result<MatrixSymbol, SymbolError> {
    let sub = sym.component(1)?;
    let corr = mixed_trace(sym.principal(), sym.dim).times_i().scale(Complex64::new(0.5, 0.0));
    Ok(MatrixSymbol::new(sym.degree - 1.0, sym.dim, vec![sub.sub(&corr)]))
}

/// Top two components of the composed symbol `p∘q`.
pub fn compose_first_order(p: &MatrixSymbol, q: &MatrixSymbol) -> Result<MatrixSymbol, SymbolError> {
    if p.dim != q.dim || p.rank() != q.rank() {
        return Err(SymbolError::Mismatch("composition operands differ".into()));
    }
    let (p0, p1) = (p.principal(), p.component(1)?);
    let (q0, q1) = (q.principal(), q.component(1)?);
    let c0 = p0.mul(q0);
    let c1 = p0
        .mul(q1)
        .add(&p1.mul(q0))
        .add(&xi_x_pairing(p0, q0, p.dim).times_i());
    Ok(MatrixSymbol::new(p.degree + q.degree, p.dim, vec![c0, c1]))
}

/// Top two components of the formal adjoint's symbol.
pub fn adjoint_symbol(p: &MatrixSymbol) -> Result<MatrixSymbol, SymbolError> {
    let a0 = p.principal().adjoint();
    let a1 = p.component(1)?.adjoint().add(&mixed_trace(&a0, p.dim).times_i());
    Ok(MatrixSymbol::new(p.degree, p.dim, vec![a0, a1]))
}

/// Second-order operator `−A^{μν}∂_μ∂_ν + B^μ∂_μ + C` with matrix coefficients.
#[derive(Clone, Debug)]
pub struct SecondOrderOperator {
    pub dim: usize,
    pub rank: usize,
    /// `A^{μν}`, row-major `dim×dim`.
    pub a: Vec<CExprMat>,
    pub b: Vec<CExprMat>,
    pub c: CExprMat,
    pub normally_hyperbolic: bool,
    /// The coefficients already act on half-densities (no conjugation needed).
    pub half_density: bool,
}

impl SecondOrderOperator {
    /// Operator with scalar principal part `A^{μν} = a^{μν}·𝟙`.
    pub fn with_scalar_principal(
        dim: usize,
        rank: usize,
        a: Vec<Expr>,
        b: Vec<CExprMat>,
        c: CExprMat,
    ) -> Self {
        assert_eq!(a.len(), dim * dim);
        assert_eq!(b.len(), dim);
        let a = a
            .into_iter()
            .map(|e| CExprMat::scalar(rank, &CExpr::real(e)))
            .collect();
        SecondOrderOperator {
            dim,
            rank,
            a,
            b,
            c,
            normally_hyperbolic: false,
            half_density: false,
        }
    }

    /// Flat `□ = −η^{μν}∂_μ∂_ν` on a trivial rank-`rank` bundle.
    pub fn flat_wave(dim: usize, rank: usize) -> Self {
        let a = (0..dim * dim)
            .map(|k| {
                let (i, j) = (k / dim, k % dim);
                num(match (i == j, i) {
                    (false, _) => 0.0,
                    (true, 0) => -1.0,
                    _ => 1.0,
                })
            })
            .collect();
        let mut op = Self::with_scalar_principal(
            dim,
            rank,
            a,
            vec![CExprMat::zeros(rank); dim],
            CExprMat::zeros(rank),
        );
        op.normally_hyperbolic = true;
        op
    }

    pub fn a(&self, mu: usize, nu: usize) -> &CExprMat {
        &self.a[mu * self.dim + nu]
    }
}

/// Connection coefficients `Γ_μ` with `∇_μ = ∂_μ + iΓ_μ`.
#[derive(Clone, Debug)]
pub struct BundleConnection {
    pub dim: usize,
    pub rank: usize,
    pub gamma: Vec<CExprMat>,
}

impl BundleConnection {
    pub fn new(gamma: Vec<CExprMat>) -> Self {
        let rank = gamma.first().map(|g| g.n).unwrap_or(1);
        BundleConnection {
            dim: gamma.len(),
            rank,
            gamma,
        }
    }

    pub fn trivial(dim: usize, rank: usize) -> Self {
        Self::new(vec![CExprMat::zeros(rank); dim])
    }

    pub fn eval(&self, mu: usize, x: &[f64]) -> CMat {
        self.gamma[mu].eval(&phase_slots(x, &[]))
    }

    /// `Γ(v) = Γ_μ v^μ`.
    pub fn contract(&self, x: &[f64], v: &[f64]) -> CMat {
        let s = phase_slots(x, &[]);
        let mut acc = CMat::zeros(self.rank, self.rank);
        for (mu, g) in self.gamma.iter().enumerate() {
            if v[mu] != 0.0 {
                acc += g.eval(&s) * Complex64::new(v[mu], 0.0);
            }
        }
        acc
    }

    /// `Γ + εΔ`.
    pub fn perturbed(&self, eps: f64, delta: &BundleConnection) -> Self {
        let e = CExpr::real(num(eps));
        Self::new(
            self.gamma
                .iter()
                .zip(&delta.gamma)
                .map(|(g, d)| g.add(&d.scale(&e)))
                .collect(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct Potential {
    pub v: CExprMat,
}

impl Potential {
    pub fn zero(rank: usize) -> Self {
        Potential {
            v: CExprMat::zeros(rank),
        }
    }
}

/// `ℓ_μ = ∂_μ log|det g|^{1/4} = ∂_μ det / (4 det)`.
fn density_log_gradient(det: &Expr, dim: usize) -> Vec<Expr> {
    (0..dim)
        .map(|mu| num(0.25).mul(d_dx(det, mu)).div(det.clone()))
        .collect()
}

/// Total symbol of `|det|^{1/4} P |det|^{−1/4}` for a given density
/// determinant (`None` means a flat density, no conjugation).
pub fn total_symbol_with_density(op: &SecondOrderOperator, det: Option<&Expr>) -> MatrixSymbol {
    let n = op.dim;
    let r = op.rank;
    let (b_tilde, c_tilde) = match det.filter(|_| !op.half_density) {
        None => (op.b.clone(), op.c.clone()),
        Some(det) => {
            let ell = density_log_gradient(det, n);
            let b_tilde: Vec<CExprMat> = (0..n)
                .map(|nu| {
                    let mut acc = op.b[nu].clone();
                    for (mu, l) in ell.iter().enumerate() {
                        acc = acc.add(&op.a(mu, nu).scale_real(&num(2.0).mul(l.clone())));
                    }
                    acc
                })
                .collect();
            let mut c = op.c.clone();
            for mu in 0..n {
                c = c.sub(&op.b[mu].scale_real(&ell[mu]));
                for nu in 0..n {
                    let w = d_dx(&ell[nu], mu).sub(ell[mu].clone().mul(ell[nu].clone()));
                    c = c.add(&op.a(mu, nu).scale_real(&w));
                }
            }
            (b_tilde, c)
        }
    };
    let mut p2 = CExprMat::zeros(r);
    for mu in 0..n {
        for nu in 0..n {
            p2 = p2.add(&op.a(mu, nu).scale_real(&xi(mu).mul(xi(nu))));
        }
    }
    let mut p1 = CExprMat::zeros(r);
    for (nu, b) in b_tilde.iter().enumerate() {
        p1 = p1.add(&b.scale_real(&xi(nu)));
    }
    let p1 = p1.times_i().neg();
    MatrixSymbol::new(
        2.0,
        n,
        vec![Component::Sym(p2), Component::Sym(p1), Component::Sym(c_tilde)],
    )
}

/// Total symbol on half-densities over `chart`.
pub fn total_symbol_halfdensity(
    op: &SecondOrderOperator,
    chart: &MetricChart,
) -> Result<MatrixSymbol, SymbolError> {
    if op.dim != chart.dim() {
        return Err(SymbolError::Mismatch("operator and chart dimensions differ".into()));
    }
    let center: Vec<f64> = chart
        .chart_box()
        .iter()
        .map(|(lo, hi)| 0.5 * (lo.max(-10.0) + hi.min(10.0)))
        .collect();
    metric_data(chart, &center)?;
    Ok(total_symbol_with_density(op, Some(&chart.symbolic_inverse().det)))
}

/// Subprincipal symbol of `op` on half-densities over `chart`.
pub fn subprincipal(op: &SecondOrderOperator, chart: &MetricChart) -> Result<MatrixSymbol, SymbolError> {
    subprincipal_symbol(&total_symbol_halfdensity(op, chart)?)
}

fn ginv_exprs(chart: &MetricChart) -> Vec<Expr> {
    chart.symbolic_inverse().ginv.clone()
}

/// `G^ρ = g^{μν} Γ^ρ_{μν}` as expressions.
pub fn contracted_christoffel(chart: &MetricChart) -> Vec<Expr> {
    let n = chart.dim();
    let ginv = ginv_exprs(chart);
    (0..n)
        .map(|rho| {
            let mut acc = num(0.0);
            for mu in 0..n {
                for nu in 0..n {
                    let gmn = &ginv[mu * n + nu];
                    if gmn.is_zero() {
                        continue;
                    }
                    for sigma in 0..n {
                        let grs = &ginv[rho * n + sigma];
                        if grs.is_zero() {
                            continue;
                        }
                        let bracket = num(2.0)
                            .mul(chart.dg_expr(mu, sigma, nu).clone())
                            .sub(chart.dg_expr(sigma, mu, nu).clone());
                        if bracket.is_zero() {
                            continue;
                        }
                        acc = acc.add(num(0.5).mul(gmn.clone()).mul(grs.clone()).mul(bracket));
                    }
                }
            }
            acc
        })
        .collect()
}

/// `□ = −g^{μν}(∇_μ∇_ν − Γ^ρ_{μν}∇_ρ) + V` expanded into coefficients.
pub fn weitzenbock_assemble(
    chart: &MetricChart,
    conn: &BundleConnection,
    pot: &Potential,
) -> Result<SecondOrderOperator, SymbolError> {
    let n = chart.dim();
    let r = conn.rank;
    if conn.dim != n || pot.v.n != r {
        return Err(SymbolError::Mismatch("connection, potential and chart disagree".into()));
    }
    let ginv = ginv_exprs(chart);
    let gc = contracted_christoffel(chart);
    let id = CExprMat::identity(r);
    let gam = &conn.gamma;
    let b = (0..n)
        .map(|rho| {
            let mut acc = id.scale_real(&gc[rho]);
            for nu in 0..n {
                let g = &ginv[rho * n + nu];
                if !g.is_zero() {
                    acc = acc.add(&gam[nu].scale_real(&num(-2.0).mul(g.clone())).times_i());
                }
            }
            acc
        })
        .collect();
    let mut c = pot.v.clone();
    for mu in 0..n {
        for nu in 0..n {
            let g = &ginv[mu * n + nu];
            if g.is_zero() {
                continue;
            }
            let inner = gam[nu].diff(mu).times_i().sub(&gam[mu].mul(&gam[nu]));
            c = c.sub(&inner.scale_real(g));
        }
    }
    for rho in 0..n {
        c = c.add(&gam[rho].scale_real(&gc[rho]).times_i());
    }
    let mut op = SecondOrderOperator::with_scalar_principal(n, r, ginv, b, c);
    op.normally_hyperbolic = true;
    Ok(op)
}

/// Interior probe points of a chart box (center plus four fixed offsets).
pub fn probe_points(chart: &MetricChart) -> Vec<Vec<f64>> {
    let fracs = [0.5, 0.31, 0.73, 0.12, 0.9];
    (0..fracs.len())
        .map(|k| {
            chart
                .chart_box()
                .iter()
                .enumerate()
                .map(|(mu, (lo, hi))| {
                    let (lo, hi) = (lo.max(-10.0), hi.min(10.0));
                    lo + (hi - lo) * fracs[(k + mu) % fracs.len()]
                })
                .collect()
        })
        .collect()
}

/// Recover the Weitzenböck connection and potential of a normally hyperbolic operator.
pub fn weitzenbock_decompose(
    op: &SecondOrderOperator,
    chart: &MetricChart,
) -> Result<(BundleConnection, Potential), SymbolError> {
    let n = chart.dim();
    let r = op.rank;
    if op.dim != n {
        return Err(SymbolError::Mismatch("operator and chart dimensions differ".into()));
    }
    let mut deviation: f64 = 0.0;
    for x in probe_points(chart) {
        let md = metric_data(chart, &x)?;
        let s = phase_slots(&x, &[]);
        for mu in 0..n {
            for nu in 0..n {
                let target = CMat::identity(r, r) * Complex64::new(md.ginv[(mu, nu)], 0.0);
                deviation = deviation.max(max_abs(&(op.a(mu, nu).eval(&s) - target)));
            }
        }
    }
    if deviation > 1e-10 {
        return Err(SymbolError::NotNormallyHyperbolic { deviation });
    }
    let g = |mu: usize, nu: usize| chart.g_expr(mu, nu).clone();
    let ginv = ginv_exprs(chart);
    let gc = contracted_christoffel(chart);
    let id = CExprMat::identity(r);
    let half_i = CExpr::imag(num(0.5));
    let gamma: Vec<CExprMat> = (0..n)
        .map(|sigma| {
            let mut acc = CExprMat::zeros(r);
            for rho in 0..n {
                let gs = g(sigma, rho);
                if gs.is_zero() {
                    continue;
                }
                let diff = op.b[rho].sub(&id.scale_real(&gc[rho]));
                acc = acc.add(&diff.scale_real(&gs));
            }
            acc.scale(&half_i)
        })
        .collect();
    let mut v = op.c.clone();
    for mu in 0..n {
        for nu in 0..n {
            let gm = &ginv[mu * n + nu];
            if gm.is_zero() {
                continue;
            }
            let inner = gamma[nu].diff(mu).times_i().sub(&gamma[mu].mul(&gamma[nu]));
            v = v.add(&inner.scale_real(gm));
        }
    }
    for rho in 0..n {
        v = v.sub(&gamma[rho].scale_real(&gc[rho]).times_i());
    }
    Ok((BundleConnection::new(gamma), Potential { v }))
}

/// Largest coefficient difference between two operators at the given points.
pub fn operator_distance(p: &SecondOrderOperator, q: &SecondOrderOperator, points: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let s = phase_slots(x, &[]);
        for (a, b) in p.a.iter().zip(&q.a).chain(p.b.iter().zip(&q.b)) {
            worst = worst.max(max_abs(&(a.eval(&s) - b.eval(&s))));
        }
        worst = worst.max(max_abs(&(p.c.eval(&s) - q.c.eval(&s))));
    }
    worst
}

/// Largest coefficient difference between connections (and potentials).
pub fn connection_distance(
    a: (&BundleConnection, &Potential),
    b: (&BundleConnection, &Potential),
    points: &[Vec<f64>],
) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let s = phase_slots(x, &[]);
        for (p, q) in a.0.gamma.iter().zip(&b.0.gamma) {
            worst = worst.max(max_abs(&(p.eval(&s) - q.eval(&s))));
        }
        worst = worst.max(max_abs(&(a.1.v.eval(&s) - b.1.v.eval(&s))));
    }
    worst
}

/// `‖σ_sub(□)(x,ξ) − Γ_ν(x)(−2g^{μν}ξ_μ)‖_max` at each null point.
pub fn compatibility_residual(
    op: &SecondOrderOperator,
    conn: &BundleConnection,
    chart: &MetricChart,
    points: &[PhasePoint],
) -> Result<Vec<f64>, SymbolError> {
    let sub = subprincipal(op, chart)?;
    let n = chart.dim();
    points
        .iter()
        .map(|pt| {
            let md = metric_data(chart, &pt.x)?;
            let p: f64 = (0..n)
                .flat_map(|a| (0..n).map(move |b| (a, b)))
                .map(|(a, b)| md.ginv[(a, b)] * pt.xi[a] * pt.xi[b])
                .sum();
            if p.abs() > 1e-8 * pt.xi_norm().powi(2) {
                return Err(SymbolError::NonNullPoint { p });
            }
            let xdot: Vec<f64> = (0..n)
                .map(|nu| -2.0 * (0..n).map(|mu| md.ginv[(mu, nu)] * pt.xi[mu]).sum::<f64>())
                .collect();
            let w = conn.contract(&pt.x, &xdot);
            Ok(max_abs(&(sub.eval(0, &pt.x, &pt.xi) - w)))
        })
        .collect()
}

/// Output of [`square_root_symbols`].
#[derive(Clone, Debug)]
pub struct SquareRoot {
    /// Hermitized principal factor with its subleading term.
    pub q0: MatrixSymbol,
    /// `Q₀` plus the correction `b₁` (present for `K = 1`).
    pub q1: Option<MatrixSymbol>,
    /// Correction term `b₁ = (q*)^{−1} R / 2`.
    pub b1: Option<Component>,
    /// `max |p_m − q*q|` at the sample points.
    pub principal_residual: f64,
    /// `max |(p − Q*∘Q)_{m−1}|` for the returned `Q`.
    pub residual: f64,
}

/// Construct `Q` with `P − Q*Q` of order `m−2` (for `K = 1`).
pub fn square_root_symbols(
    p: &MatrixSymbol,
    q: &Component,
    k: usize,
    points: &[PhasePoint],
) -> Result<SquareRoot, SymbolError> {
    let dim = p.dim;
    let p1 = p.component(1)?.clone();
    for pt in points {
        let det = q.eval_at(&pt.x, &pt.xi).determinant().norm();
        if det < 1e-10 {
            return Err(SymbolError::NotElliptic { det });
        }
    }
    let qh = q.add(&q.adjoint()).scale(Complex64::new(0.5, 0.0));
    // (Q₀ + Q₀*)/2 carries the subleading term (i/2) Σ ∂_x∂_ξ q*.
    let q0_sub = mixed_trace(&q.adjoint(), dim).times_i().scale(Complex64::new(0.5, 0.0));
    let deg_q = p.degree / 2.0;
    let q0 = MatrixSymbol::new(deg_q, dim, vec![qh.clone(), q0_sub.clone()]);
    let residual_of = |qs: &MatrixSymbol| -> Result<(Component, f64), SymbolError> {
        let prod = compose_first_order(&adjoint_symbol(qs)?, qs)?;
        let r = p1.sub(&prod.components[1]);
        let worst = points
            .iter()
            .map(|pt| max_abs(&r.eval_at(&pt.x, &pt.xi)))
            .fold(0.0, f64::max);
        Ok((r, worst))
    };
    let principal_residual = points
        .iter()
        .map(|pt| {
            let qv = qh.eval_at(&pt.x, &pt.xi);
            max_abs(&(p.eval(0, &pt.x, &pt.xi) - qv.adjoint() * qv))
        })
        .fold(0.0, f64::max);
    let (r, res0) = residual_of(&q0)?;
    if k == 0 {
        return Ok(SquareRoot {
            q0,
            q1: None,
            b1: None,
            principal_residual,
            residual: res0,
        });
    }
    let qh_adj = qh.adjoint();
    let rf = r.clone();
    let b1 = Component::callable(p.rank(), move |s: &Slots| {
        let qa = qh_adj.eval(s);
        let rv = rf.eval(s);
        let inv = qa.try_inverse().unwrap_or_else(|| CMat::from_element(rv.nrows(), rv.ncols(), f64::NAN.into()));
        inv * rv * Complex64::new(0.5, 0.0)
    });
    let q1 = MatrixSymbol::new(deg_q, dim, vec![qh, q0_sub.add(&b1)]);
    let (_, res1) = residual_of(&q1)?;
    Ok(SquareRoot {
        q0,
        q1: Some(q1),
        b1: Some(b1),
        principal_residual,
        residual: res1,
    })
}

/// Canonical transformation for the Egorov check together with the pulled-back
/// operator symbol.
#[derive(Clone)]
pub struct EgorovMap {
    pub kappa: Arc<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>,
    /// Symbol of the conjugated operator (principal part `p∘κ`).
    pub pulled: MatrixSymbol,
}

impl EgorovMap {
    pub fn identity(p: &MatrixSymbol) -> Self {
        EgorovMap {
            kappa: Arc::new(|x: &[f64], xi_: &[f64]| (x.to_vec(), xi_.to_vec())),
            pulled: p.clone(),
        }
    }

    /// Lift of the affine map `y = Mx + c`: `κ(x,ξ) = (Mx + c, M^{−T}ξ)`. The
    /// pulled-back symbol is obtained by substituting into the expressions.
    pub fn affine(m: &crate::linalg::RMat, c: &[f64], p: &MatrixSymbol) -> Result<Self, SymbolError> {
        let n = p.dim;
        let mit = m
            .clone()
            .try_inverse()
            .ok_or_else(|| SymbolError::IdentityInapplicable("singular affine map".into()))?
            .transpose();
        let mut map: Vec<Option<Expr>> = vec![None; NUM_SLOTS];
        for i in 0..n {
            let mut xe = num(c[i]);
            let mut ye = num(0.0);
            for j in 0..n {
                if m[(i, j)] != 0.0 {
                    xe = xe.add(num(m[(i, j)]).mul(Expr::Var(j)));
                }
                if mit[(i, j)] != 0.0 {
                    ye = ye.add(num(mit[(i, j)]).mul(xi(j)));
                }
            }
            map[i] = Some(xe);
            map[XI_OFFSET + i] = Some(ye);
        }
        if !p.components.iter().all(Component::is_symbolic) {
            return Err(SymbolError::IdentityInapplicable("affine pullback needs a symbolic P".into()));
        }
        let pulled = MatrixSymbol::new(
            p.degree,
            n,
            p.components.iter().map(|c| c.substitute(&map)).collect(),
        );
        let (m, c, mit) = (m.clone(), c.to_vec(), mit);
        Ok(EgorovMap {
            kappa: Arc::new(move |x: &[f64], xi_: &[f64]| {
                let y = (0..n)
                    .map(|i| c[i] + (0..n).map(|j| m[(i, j)] * x[j]).sum::<f64>())
                    .collect();
                let eta = (0..n)
                    .map(|i| (0..n).map(|j| mit[(i, j)] * xi_[j]).sum::<f64>())
                    .collect();
                (y, eta)
            }),
            pulled,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    Product,
    Power,
    Inverse,
    Commutator,
    Egorov,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 5] = [
        IdentityKind::Product,
        IdentityKind::Power,
        IdentityKind::Inverse,
        IdentityKind::Commutator,
        IdentityKind::Egorov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityKind::Product => "product",
            IdentityKind::Power => "power",
            IdentityKind::Inverse => "inverse",
            IdentityKind::Commutator => "commutator",
            IdentityKind::Egorov => "egorov",
        }
    }
}

/// Inputs for [`verify_identity`].
#[derive(Clone)]
pub enum IdentityCase {
    Product { p: MatrixSymbol, q: MatrixSymbol },
    Power { p: MatrixSymbol, k: u32 },
    Inverse { p: MatrixSymbol },
    Commutator { p: MatrixSymbol, q: MatrixSymbol },
    Egorov { b: MatrixSymbol, p: MatrixSymbol, a: MatrixSymbol, map: EgorovMap },
}

impl IdentityCase {
    pub fn kind(&self) -> IdentityKind {
        match self {
            IdentityCase::Product { .. } => IdentityKind::Product,
            IdentityCase::Power { .. } => IdentityKind::Power,
            IdentityCase::Inverse { .. } => IdentityKind::Inverse,
            IdentityCase::Commutator { .. } => IdentityKind::Commutator,
            IdentityCase::Egorov { .. } => IdentityKind::Egorov,
        }
    }
}

fn max_residual(points: &[PhasePoint], lhs: &Component, rhs: &Component) -> f64 {
    points
        .iter()
        .map(|pt| max_abs(&(lhs.eval_at(&pt.x, &pt.xi) - rhs.eval_at(&pt.x, &pt.xi))))
        .fold(0.0, f64::max)
}

/// Scalar value of a principal symbol that must be `s·𝟙` at every point.
fn require_scalar(c: &Component, points: &[PhasePoint]) -> Result<(), SymbolError> {
    for pt in points {
        let m = c.eval_at(&pt.x, &pt.xi);
        let s = m[(0, 0)];
        let dev = max_abs(&(&m - CMat::identity(m.nrows(), m.ncols()) * s));
        if dev > 1e-12 * (1.0 + s.norm()) {
            return Err(SymbolError::IdentityInapplicable(
                "principal symbol is not scalar".into(),
            ));
        }
    }
    Ok(())
}

/// Parametrix symbol: `q_{−m} = p⁻¹`, `q_{−m−1} = −p⁻¹(p_{m−1}p⁻¹ + iΣ∂_ξp ∂_x p⁻¹)`.
pub fn parametrix_symbol(p: &MatrixSymbol) -> Result<MatrixSymbol, SymbolError> {
    let r = p.rank();
    let p0 = p.principal();
    let inv = match p0 {
        Component::Sym(m) => Component::scalar(r, m.get(0, 0).recip()),
        Component::Fun { f, .. } => {
            let f = f.clone();
            Component::callable(r, move |s: &Slots| {
                let m = f(s);
                let n = m.nrows();
                m.try_inverse()
                    .unwrap_or_else(|| CMat::from_element(n, n, f64::NAN.into()))
            })
        }
    };
    let inner = p
        .component(1)?
        .mul(&inv)
        .add(&xi_x_pairing(p0, &inv, p.dim).times_i());
    let q1 = inv.mul(&inner).neg();
    Ok(MatrixSymbol::new(-p.degree, p.dim, vec![inv, q1]))
}

/// Evaluate both sides of a subprincipal identity at `points`; returns the
/// largest componentwise residual.
pub fn verify_identity(case: &IdentityCase, points: &[PhasePoint]) -> Result<f64, SymbolError> {
    let half = Complex64::new(0.5, 0.0);
    match case {
        IdentityCase::Product { p, q } => {
            let lhs = subprincipal_symbol(&compose_first_order(p, q)?)?;
            let sp = subprincipal_symbol(p)?;
            let sq = subprincipal_symbol(q)?;
            let x = hamilton_action(p.principal(), q.principal(), p.dim);
            // (1/2i) X = −(i/2) X
            let rhs = sp.principal().mul(q.principal())
                .add(&p.principal().mul(sq.principal()))
                .sub(&x.times_i().scale(half));
            Ok(max_residual(points, lhs.principal(), &rhs))
        }
        IdentityCase::Power { p, k } => {
            if *k == 0 {
                return Err(SymbolError::IdentityInapplicable("power k must be ≥ 1".into()));
            }
            require_scalar(p.principal(), points)?;
            let mut acc = p.clone();
            for _ in 1..*k {
                acc = compose_first_order(&acc, p)?;
            }
            let lhs = subprincipal_symbol(&acc)?;
            let sp = subprincipal_symbol(p)?;
            let mut pow = Component::identity(p.rank());
            for _ in 1..*k {
                pow = pow.mul(p.principal());
            }
            let rhs = pow.mul(sp.principal()).scale(Complex64::new(*k as f64, 0.0));
            Ok(max_residual(points, lhs.principal(), &rhs))
        }
        IdentityCase::Inverse { p } => {
            require_scalar(p.principal(), points)?;
            for pt in points {
                let v = p.eval(0, &pt.x, &pt.xi)[(0, 0)].norm();
                if v < 1e-10 {
                    return Err(SymbolError::IdentityInapplicable(format!(
                        "principal symbol not elliptic (|p| = {v:e})"
                    )));
                }
            }
            let q = parametrix_symbol(p)?;
            let sq = subprincipal_symbol(&q)?;
            let sp = subprincipal_symbol(p)?;
            let rhs = q.principal().mul(sp.principal()).mul(q.principal()).neg();
            let id = compose_first_order(p, &q)?;
            let r1 = max_residual(points, sq.principal(), &rhs);
            let r2 = max_residual(points, &id.components[0], &Component::identity(p.rank()));
            let r3 = max_residual(points, &id.components[1], &Component::zero(p.rank()));
            Ok(r1.max(r2).max(r3))
        }
        IdentityCase::Commutator { p, q } => {
            require_scalar(p.principal(), points)?;
            let pq = compose_first_order(p, q)?;
            let qp = compose_first_order(q, p)?;
            let top = max_residual(points, &pq.components[0], &qp.components[0]);
            let lhs = pq.components[1].sub(&qp.components[1]);
            let sp = subprincipal_symbol(p)?;
            let q0 = q.principal();
            let bracket = sp.principal().mul(q0).sub(&q0.mul(sp.principal()));
            let rhs = hamilton_action(p.principal(), q0, p.dim)
                .times_i()
                .neg()
                .add(&bracket);
            Ok(top.max(max_residual(points, &lhs, &rhs)))
        }
        IdentityCase::Egorov { b, p, a, map } => {
            let lhs = compose_first_order(&compose_first_order(b, &map.pulled)?, a)?;
            let ba = compose_first_order(b, a)?;
            let mut worst: f64 = 0.0;
            for pt in points {
                let (y, eta) = (map.kappa)(&pt.x, &pt.xi);
                let pk = p.eval(0, &y, &eta);
                let s = pk[(0, 0)];
                if max_abs(&(&pk - CMat::identity(pk.nrows(), pk.ncols()) * s)) > 1e-12 * (1.0 + s.norm()) {
                    return Err(SymbolError::IdentityInapplicable(
                        "principal symbol is not scalar".into(),
                    ));
                }
                let l = lhs.eval(0, &pt.x, &pt.xi);
                let r = ba.eval(0, &pt.x, &pt.xi) * pk;
                worst = worst.max(max_abs(&(l - r)));
            }
            Ok(worst)
        }
    }
}

/// Seeded random corpora for the identity and compatibility checks.
pub mod corpus {
    use rand::Rng;

    use super::*;
    use crate::expr::{Func, var};

    /// Smooth coefficient `c₀ + Σ c_i x^i + c' sin(x^j)`.
    pub fn coefficient<R: Rng>(rng: &mut R, dim: usize) -> Expr {
        let mut e = num(rng.gen_range(-1.0..1.0));
        for i in 0..dim {
            e = e.add(num(rng.gen_range(-0.5..0.5)).mul(var(i)));
        }
        let j = rng.gen_range(0..dim);
        e.add(num(rng.gen_range(-0.5..0.5)).mul(Expr::call(Func::Sin, var(j))))
    }

    pub fn complex_coefficient<R: Rng>(rng: &mut R, dim: usize) -> CExpr {
        CExpr {
            re: coefficient(rng, dim),
            im: coefficient(rng, dim),
        }
    }

    pub fn matrix<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> CExprMat {
        let data = (0..rank * rank).map(|_| complex_coefficient(rng, dim)).collect();
        CExprMat { n: rank, data }
    }

    /// Hermitian matrix of coefficients.
    pub fn hermitian_matrix<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> CExprMat {
        let m = matrix(rng, dim, rank);
        m.add(&m.adjoint()).scale(&CExpr::real(num(0.5)))
    }

    fn xi_linear<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> CExprMat {
        let mut acc = CExprMat::zeros(rank);
        for mu in 0..dim {
            acc = acc.add(&matrix(rng, dim, rank).scale_real(&xi(mu)));
        }
        acc
    }

    /// Degree-2 symbol with elliptic scalar principal part
    /// `a(x)|ξ|² + b(x)ξ₀ξ₁` (`a ≥ 0.7`, `|b| ≤ 0.4`).
    pub fn scalar_elliptic<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> MatrixSymbol {
        let a = num(1.5)
            .add(num(rng.gen_range(-0.4..0.4)).mul(Expr::call(Func::Sin, var(0))))
            .add(num(rng.gen_range(-0.4..0.4)).mul(Expr::call(Func::Cos, var(dim - 1))));
        let b = num(rng.gen_range(-0.2..0.2))
            .mul(num(1.0).add(num(0.5).mul(Expr::call(Func::Sin, var(1 % dim)))));
        let mut p2 = num(0.0);
        for mu in 0..dim {
            p2 = p2.add(xi(mu).powi(2));
        }
        let mut p2 = a.mul(p2);
        if dim >= 2 {
            p2 = p2.add(b.mul(xi(0)).mul(xi(1)));
        }
        MatrixSymbol::new(
            2.0,
            dim,
            vec![
                Component::scalar(rank, CExpr::real(p2)),
                Component::Sym(xi_linear(rng, dim, rank)),
                Component::Sym(matrix(rng, dim, rank)),
            ],
        )
    }

    /// Degree-1 matrix symbol `M_μ(x)ξ_μ + M(x)`.
    pub fn first_order<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> MatrixSymbol {
        MatrixSymbol::new(
            1.0,
            dim,
            vec![
                Component::Sym(xi_linear(rng, dim, rank)),
                Component::Sym(matrix(rng, dim, rank)),
            ],
        )
    }

    /// Degree-0 symbol `M(x) + M'(x)ξ₀/|ξ|²`.
    pub fn zeroth_order<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> MatrixSymbol {
        let mut n2 = num(0.0);
        for mu in 0..dim {
            n2 = n2.add(xi(mu).powi(2));
        }
        let sub = matrix(rng, dim, rank).scale_real(&xi(0).div(n2));
        MatrixSymbol::new(
            0.0,
            dim,
            vec![Component::Sym(matrix(rng, dim, rank)), Component::Sym(sub)],
        )
    }

    /// Connection with smooth random (non-hermitian) coefficients.
    pub fn connection<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> BundleConnection {
        BundleConnection::new((0..dim).map(|_| matrix(rng, dim, rank)).collect())
    }

    pub fn hermitian_connection<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> BundleConnection {
        BundleConnection::new((0..dim).map(|_| hermitian_matrix(rng, dim, rank)).collect())
    }

    pub fn potential<R: Rng>(rng: &mut R, dim: usize, rank: usize) -> Potential {
        Potential {
            v: matrix(rng, dim, rank),
        }
    }

    /// Phase points with `x ∈ [−1,1]ⁿ` and `‖ξ‖ ∈ [0.5, 2]`.
    pub fn phase_cloud<R: Rng>(rng: &mut R, dim: usize, count: usize) -> Vec<PhasePoint> {
        (0..count)
            .map(|_| {
                let x = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
                let target = rng.gen_range(0.5..2.0);
                v.iter_mut().for_each(|a| *a *= target / nrm);
                PhasePoint::new(x, v)
            })
            .collect()
    }

    /// One random instance of each identity kind.
    pub fn identity_case<R: Rng>(rng: &mut R, kind: IdentityKind, dim: usize, rank: usize) -> IdentityCase {
        match kind {
            IdentityKind::Product => IdentityCase::Product {
                p: first_order(rng, dim, rank),
                q: first_order(rng, dim, rank),
            },
            IdentityKind::Power => IdentityCase::Power {
                p: scalar_elliptic(rng, dim, rank),
                k: rng.gen_range(2..=3),
            },
            IdentityKind::Inverse => IdentityCase::Inverse {
                p: scalar_elliptic(rng, dim, rank),
            },
            IdentityKind::Commutator => IdentityCase::Commutator {
                p: scalar_elliptic(rng, dim, rank),
                q: first_order(rng, dim, rank),
            },
            IdentityKind::Egorov => {
                let p = scalar_elliptic(rng, dim, rank);
                let m = crate::linalg::RMat::from_fn(dim, dim, |i, j| {
                    (if i == j { 1.0 } else { 0.0 }) + rng.gen_range(-0.3..0.3)
                });
                let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let map = EgorovMap::affine(&m, &c, &p).expect("diagonally dominant map is invertible");
                IdentityCase::Egorov {
                    b: zeroth_order(rng, dim, rank),
                    a: zeroth_order(rng, dim, rank),
                    p,
                    map,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_wave_symbol() {
        let op = SecondOrderOperator::flat_wave(2, 1);
        let sym = total_symbol_with_density(&op, None);
        let v = sym.eval(0, &[0.3, 0.1], &[2.0, 1.0])[(0, 0)];
        assert_eq!(v, Complex64::new(-3.0, 0.0));
        assert!(sym.eval(1, &[0.3, 0.1], &[2.0, 1.0])[(0, 0)].norm() == 0.0);
    }

    #[test]
    fn recip_of_complex_expr() {
        let z = CExpr::constant(Complex64::new(3.0, 4.0)).recip();
        let v = z.eval(&[0.0; NUM_SLOTS]);
        assert!((v - Complex64::new(0.12, -0.16)).norm() < 1e-15);
    }
}
