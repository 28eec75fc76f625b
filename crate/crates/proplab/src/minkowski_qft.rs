//! Klein–Gordon propagators on a 1+1 Minkowski lattice.
//!
//! Convention: `□ = ∂_t² − ∂_x²` and `(□ + m²)G = δ`. Space is periodic with
//! `nx` nodes `x_j = −L + jΔx`; time has `nt = 2M + 1` nodes `t_n = (n − M)Δt`.
//! Kernels are stored as functions of the separation `x − y`, with the
//! origin at node `(M, nx/2)`.
//!
//! Every kernel solves the same 5-point lattice equation. Per spatial mode
//! `k` the lattice frequency `θ_k` obeys `cos θ_k = 1 − Ω_k²Δt²/2` with
//! `Ω_k² = k̂² + m²` and `k̂ = (2/Δx) sin(kΔx/2)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fft::{fft2, fft_rows};
use crate::linalg::{hermitian_eigenvalues, CMat, I};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QftError {
    #[error("CFL ratio Δt/Δx = {ratio} exceeds 0.9")]
    CFLViolation { ratio: f64 },
    #[error("mass {m} below 0.1")]
    MassTooSmall { m: f64 },
    #[error("ε = {eps} outside [1e−3, 1e−1]")]
    EpsilonOutOfRange { eps: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub const MAX_CFL: f64 = 0.9;
pub const MIN_MASS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeGrid {
    pub t_half: f64,
    pub l_half: f64,
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
}

impl SpacetimeGrid {
    /// `nt` odd (time nodes symmetric about 0), `nx` even (periodic space).
    pub fn new(t_half: f64, l_half: f64, nt: usize, nx: usize) -> Result<Self, QftError> {
        if nt < 3 || nt % 2 == 0 || nx < 4 || nx % 2 == 1 {
            return Err(QftError::InvalidGrid(format!("need odd nt ≥ 3 and even nx ≥ 4, got {nt}×{nx}")));
        }
        if !(t_half > 0.0 && l_half > 0.0) {
            return Err(QftError::InvalidGrid("extents must be positive".into()));
        }
        Ok(SpacetimeGrid {
            t_half,
            l_half,
            nt,
            nx,
            dt: 2.0 * t_half / (nt - 1) as f64,
            dx: 2.0 * l_half / nx as f64,
        })
    }

    /// Grid with spacing ratio `Δt/Δx = cfl`: `nx` cells on `[−L, L)` and
    /// `2·(nt_half) + 1` time nodes.
    pub fn with_cfl(l_half: f64, nx: usize, cfl: f64, nt_half: usize) -> Result<Self, QftError> {
        let dx = 2.0 * l_half / nx as f64;
        Self::new(cfl * dx * nt_half as f64, l_half, 2 * nt_half + 1, nx)
    }

    /// 513×512 nodes, `L = 8`, `Δt/Δx = 0.9`.
    pub fn desk() -> Self {
        Self::with_cfl(8.0, 512, MAX_CFL, 256).expect("valid default grid")
    }

    pub fn cfl(&self) -> f64 {
        self.dt / self.dx
    }

    /// Time index of `t = 0`.
    pub fn n0(&self) -> usize {
        self.nt / 2
    }

    /// Space index of `x = 0`.
    pub fn j0(&self) -> usize {
        self.nx / 2
    }

    pub fn t(&self, n: usize) -> f64 {
        (n as f64 - self.n0() as f64) * self.dt
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.l_half + j as f64 * self.dx
    }

    pub fn len(&self) -> usize {
        self.nt * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nearest node to `(t, x)`, if on the grid.
    pub fn node(&self, t: f64, x: f64) -> Option<(usize, usize)> {
        let n = (t / self.dt).round() + self.n0() as f64;
        let j = ((x + self.l_half) / self.dx).round();
        (n >= 0.0 && (n as usize) < self.nt && j >= 0.0 && (j as usize) < self.nx).then_some((n as usize, j as usize))
    }

    /// Signed mode number and `k̂²` of spatial mode `q`.
    fn mode(&self, q: usize) -> (i64, f64) {
        let qs = if 2 * q < self.nx { q as i64 } else { q as i64 - self.nx as i64 };
        let k = 2.0 * std::f64::consts::PI * qs as f64 / (self.nx as f64 * self.dx);
        let s = (0.5 * k * self.dx).sin();
        (qs, 4.0 * s * s / (self.dx * self.dx))
    }

    fn same_as(&self, o: &SpacetimeGrid) -> bool {
        self.nt == o.nt && self.nx == o.nx && (self.dt - o.dt).abs() < 1e-15 && (self.dx - o.dx).abs() < 1e-15
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Ret,
    Adv,
    Causal,
    Feynman { eps: f64 },
    /// Richardson extrapolant from `ε` and `ε/2`.
    FeynmanExtrapolated { eps: f64 },
    Wightman,
    Other,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Ret => "ret",
            KernelKind::Adv => "adv",
            KernelKind::Causal => "causal",
            KernelKind::Feynman { .. } => "feynman",
            KernelKind::FeynmanExtrapolated { .. } => "feynman-extrapolated",
            KernelKind::Wightman => "wightman",
            KernelKind::Other => "other",
        }
    }
}

/// Translation-invariant kernel `K(x − y)` sampled on the grid (row = time).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    pub grid: SpacetimeGrid,
    pub m: f64,
    pub kind: KernelKind,
    pub values: Vec<Complex64>,
}

impl KernelField {
    fn zeros(grid: SpacetimeGrid, m: f64, kind: KernelKind) -> Self {
        KernelField {
            grid,
            m,
            kind,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn get(&self, n: usize, j: usize) -> Complex64 {
        self.values[n * self.grid.nx + j]
    }

    /// Value at the node nearest `(t, x)`.
    pub fn at(&self, t: f64, x: f64) -> Option<Complex64> {
        self.grid.node(t, x).map(|(n, j)| self.get(n, j))
    }

    /// Average over the `(2h+1)²` nodes around the node nearest `(t, x)`.
    pub fn box_average(&self, t: f64, x: f64, h: usize) -> Option<Complex64> {
        let (n, j) = self.grid.node(t, x)?;
        if n < h || n + h >= self.grid.nt {
            return None;
        }
        let nx = self.grid.nx;
        let mut acc = Complex64::new(0.0, 0.0);
        for a in n - h..=n + h {
            for b in 0..=2 * h {
                acc += self.get(a, (j + nx + b - h) % nx);
            }
        }
        Some(acc / ((2 * h + 1) * (2 * h + 1)) as f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn combine(&self, o: &KernelField, kind: KernelKind, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<KernelField, QftError> {
        if !self.grid.same_as(&o.grid) {
            return Err(QftError::GridMismatch("kernels live on different grids".into()));
        }
        Ok(KernelField {
            grid: self.grid,
            m: self.m,
            kind,
            values: self.values.iter().zip(&o.values).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn sub(&self, o: &KernelField) -> Result<KernelField, QftError> {
        self.combine(o, KernelKind::Other, |a, b| a - b)
    }

    pub fn add(&self, o: &KernelField) -> Result<KernelField, QftError> {
        self.combine(o, KernelKind::Other, |a, b| a + b)
    }

    pub fn scale(&self, s: Complex64) -> KernelField {
        KernelField {
            values: self.values.iter().map(|z| z * s).collect(),
            kind: KernelKind::Other,
            ..self.clone()
        }
    }

    /// `K(−t, x)`.
    pub fn time_reflect(&self) -> KernelField {
        let (nt, nx) = (self.grid.nt, self.grid.nx);
        let mut out = self.clone();
        for n in 0..nt {
            out.values[n * nx..(n + 1) * nx].copy_from_slice(&self.values[(nt - 1 - n) * nx..(nt - n) * nx]);
        }
        out
    }

    /// `K(−t, −x)` (space reflected on the periodic lattice).
    pub fn point_reflect(&self) -> KernelField {
        let (nt, nx) = (self.grid.nt, self.grid.nx);
        let mut out = self.clone();
        for n in 0..nt {
            for j in 0..nx {
                out.values[n * nx + j] = self.get(nt - 1 - n, (nx - j) % nx);
            }
        }
        out
    }

    /// Largest `|K|` at nodes with `t < |x|/slope` relative to `max|K|`.
    pub fn leak_outside(&self, slope: f64) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for n in 0..g.nt {
            for j in 0..g.nx {
                if g.t(n) < g.x(j).abs() / slope - 1e-12 {
                    worst = worst.max(self.get(n, j).norm());
                }
            }
        }
        worst / self.max_abs()
    }
}

/// Source used by the retarded solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// `δ/(ΔtΔx)` at the origin node.
    Node,
    /// Unit-mass Gaussian of width `sigma` in `x`, delta in time.
    Gaussian { sigma: f64 },
}

fn check_cfl(grid: &SpacetimeGrid) -> Result<(), QftError> {
    if grid.cfl() > MAX_CFL + 1e-12 {
        return Err(QftError::CFLViolation { ratio: grid.cfl() });
    }
    Ok(())
}

/// Leapfrog retarded solution of the lattice equation with the given source.
pub fn kg_retarded_with_source(m: f64, grid: &SpacetimeGrid, source: Source) -> Result<KernelField, QftError> {
    check_cfl(grid)?;
    let (nt, nx, n0) = (grid.nt, grid.nx, grid.n0());
    let r2 = grid.cfl().powi(2);
    let mdt2 = (m * grid.dt).powi(2);
    let src: Vec<f64> = (0..nx)
        .map(|j| match source {
            Source::Node => {
                if j == grid.j0() {
                    1.0 / (grid.dt * grid.dx)
                } else {
                    0.0
                }
            }
            Source::Gaussian { sigma } => {
                let x = grid.x(j);
                (-0.5 * x * x / (sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt() * grid.dt)
            }
        })
        .collect();
    let mut field = KernelField::zeros(*grid, m, KernelKind::Ret);
    let mut prev = vec![0.0; nx];
    let mut cur = vec![0.0; nx];
    for n in n0..nt - 1 {
        let mut next = vec![0.0; nx];
        for j in 0..nx {
            let lap = cur[(j + 1) % nx] - 2.0 * cur[j] + cur[(j + nx - 1) % nx];
            next[j] = 2.0 * cur[j] - prev[j] + r2 * lap - mdt2 * cur[j];
            if n == n0 {
                next[j] += grid.dt * grid.dt * src[j];
            }
        }
        for j in 0..nx {
            field.values[(n + 1) * nx + j] = Complex64::new(next[j], 0.0);
        }
        prev = cur;
        cur = next;
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenKind {
    Ret,
    Adv,
}

/// Retarded or advanced Green's kernel; advanced is the time reflection.
pub fn kg_green(kind: GreenKind, m: f64, grid: &SpacetimeGrid) -> Result<KernelField, QftError> {
    let ret = kg_retarded_with_source(m, grid, Source::Node)?;
    Ok(match kind {
        GreenKind::Ret => ret,
        GreenKind::Adv => KernelField {
            kind: KernelKind::Adv,
            ..ret.time_reflect()
        },
    })
}

/// `G = G^ret − G^adv`.
pub fn kg_causal(m: f64, grid: &SpacetimeGrid) -> Result<KernelField, QftError> {
    let ret = kg_green(GreenKind::Ret, m, grid)?;
    let adv = kg_green(GreenKind::Adv, m, grid)?;
    Ok(KernelField {
        kind: KernelKind::Causal,
        ..ret.sub(&adv)?
    })
}

/// Assemble a kernel from per-mode time profiles `c(q, n)`.
fn from_modes(grid: &SpacetimeGrid, m: f64, kind: KernelKind, coeff: impl Fn(usize, i64) -> Complex64 + Sync) -> KernelField {
    let (nt, nx, n0) = (grid.nt, grid.nx, grid.n0() as i64);
    let norm = 1.0 / (nx as f64 * grid.dx);
    let rows: Vec<Vec<Complex64>> = (0..nt)
        .into_par_iter()
        .map(|n| {
            let mut row: Vec<Complex64> = (0..nx)
                .map(|q| {
                    let (qs, _) = grid.mode(q);
                    let sign = if qs.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    coeff(q, n as i64 - n0) * (sign * norm)
                })
                .collect();
            fft_rows(&mut row, nx, true);
            row
        })
        .collect();
    KernelField {
        grid: *grid,
        m,
        kind,
        values: rows.concat(),
    }
}

fn check_mass(m: f64) -> Result<(), QftError> {
    if m < MIN_MASS {
        return Err(QftError::MassTooSmall { m });
    }
    Ok(())
}

/// Lattice Feynman kernel with `Ω² → Ω² − iε`: per mode `G_n = Δt z^{|n|}/(z − 1/z)`
/// where `z + 1/z = 2 − Ω²Δt²` and `|z| < 1`.
pub fn kg_feynman(m: f64, eps: f64, grid: &SpacetimeGrid) -> Result<KernelField, QftError> {
    check_mass(m)?;
    if !(1e-3 - 1e-15..=1e-1 + 1e-15).contains(&eps) {
        return Err(QftError::EpsilonOutOfRange { eps });
    }
    Ok(feynman_unchecked(m, eps, grid))
}

fn feynman_unchecked(m: f64, eps: f64, grid: &SpacetimeGrid) -> KernelField {
    let dt = grid.dt;
    let roots: Vec<(Complex64, Complex64)> = (0..grid.nx)
        .map(|q| {
            let (_, k2) = grid.mode(q);
            let w2 = Complex64::new((k2 + m * m) * dt * dt, -eps * dt * dt);
            let b = 2.0 - w2;
            let disc = (b * b - 4.0).sqrt();
            let (z1, z2) = ((b + disc) / 2.0, (b - disc) / 2.0);
            let z = if z1.norm() < z2.norm() { z1 } else { z2 };
            (z, dt / (z - 1.0 / z))
        })
        .collect();
    from_modes(grid, m, KernelKind::Feynman { eps }, |q, n| {
        let (z, a) = roots[q];
        a * z.powi(n.unsigned_abs() as i32)
    })
}

/// `2G^F(ε/2) − G^F(ε)`.
pub fn kg_feynman_extrapolated(m: f64, eps: f64, grid: &SpacetimeGrid) -> Result<KernelField, QftError> {
    let g1 = kg_feynman(m, eps, grid)?;
    let g2 = feynman_unchecked(m, 0.5 * eps, grid);
    let mut out = g2.scale(Complex64::new(2.0, 0.0)).sub(&g1)?;
    out.kind = KernelKind::FeynmanExtrapolated { eps };
    out.m = m;
    Ok(out)
}

fn lattice_theta(grid: &SpacetimeGrid, m: f64, q: usize) -> f64 {
    let (_, k2) = grid.mode(q);
    (1.0 - 0.5 * (k2 + m * m) * grid.dt * grid.dt).acos()
}

/// Lattice mode sum `ω(t,x) = (1/(N_xΔx)) Σ_k e^{ikx} Δt e^{−iθ_k n}/(2 sin θ_k)`.
pub fn kg_wightman(m: f64, grid: &SpacetimeGrid) -> Result<KernelField, QftError> {
    check_mass(m)?;
    check_cfl(grid)?;
    let thetas: Vec<f64> = (0..grid.nx).map(|q| lattice_theta(grid, m, q)).collect();
    let dt = grid.dt;
    Ok(from_modes(grid, m, KernelKind::Wightman, |q, n| {
        let th = thetas[q];
        Complex64::from_polar(dt / (2.0 * th.sin()), -th * n as f64)
    }))
}

/// `ω(0,0)` of the lattice mode sum on a grid of spacing `dx` (its UV cutoff is `π/Δx`).
pub fn wightman_at_origin(m: f64, l_half: f64, dx: f64, cfl: f64) -> Result<f64, QftError> {
    check_mass(m)?;
    let nx = (2.0 * l_half / dx).round() as usize;
    let grid = SpacetimeGrid::with_cfl(l_half, nx + nx % 2, cfl, 1)?;
    let sum: f64 = (0..grid.nx)
        .map(|q| grid.dt / (2.0 * lattice_theta(&grid, m, q).sin()))
        .sum();
    Ok(sum / (grid.nx as f64 * grid.dx))
}

/// Discrete `(□ + m²)K` at interior time rows.
pub fn apply_kg(k: &KernelField, m: f64) -> KernelField {
    let g = &k.grid;
    let (nt, nx) = (g.nt, g.nx);
    let mut out = KernelField::zeros(*g, k.m, KernelKind::Other);
    let (idt2, idx2) = (1.0 / (g.dt * g.dt), 1.0 / (g.dx * g.dx));
    for n in 1..nt - 1 {
        for j in 0..nx {
            let c = k.get(n, j);
            let tt = (k.get(n + 1, j) - 2.0 * c + k.get(n - 1, j)) * idt2;
            let xx = (k.get(n, (j + 1) % nx) - 2.0 * c + k.get(n, (j + nx - 1) % nx)) * idx2;
            out.values[n * nx + j] = tt - xx + c * (m * m);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct KgResidual {
    /// `(□+m²)K` at the source node in units of the discrete delta `1/(ΔtΔx)`.
    pub source_ratio: f64,
    /// Largest off-source `|(□+m²)K|` in the same units.
    pub off_source: f64,
}

/// Residual of `(□ + m²)K = δ` on interior rows.
pub fn kg_residual(k: &KernelField, m: f64) -> KgResidual {
    let g = &k.grid;
    let r = apply_kg(k, m);
    let unit = g.dt * g.dx;
    let (n0, j0) = (g.n0(), g.j0());
    let mut off: f64 = 0.0;
    for n in 1..g.nt - 1 {
        for j in 0..g.nx {
            if (n, j) != (n0, j0) {
                off = off.max(r.get(n, j).norm() * unit);
            }
        }
    }
    KgResidual {
        source_ratio: r.get(n0, j0).norm() * unit,
        off_source: off,
    }
}

/// `max |G^F − G^adv − iω| / max|ω|` over nodes at least 5 cells from the time boundary.
pub fn feynman_consistency(gf: &KernelField, gadv: &KernelField, omega: &KernelField) -> Result<f64, QftError> {
    let diff = gf.sub(gadv)?.sub(&omega.scale(I))?;
    let g = &gf.grid;
    let margin = 5.min(g.nt / 2);
    let mut worst: f64 = 0.0;
    for n in margin..g.nt - margin {
        for j in 0..g.nx {
            worst = worst.max(diff.get(n, j).norm());
        }
    }
    Ok(worst / omega.max_abs())
}

/// `max |(□+m²)ω| / max|ω|` on interior rows.
pub fn bisolution_residual(omega: &KernelField, m: f64) -> f64 {
    apply_kg(omega, m).max_abs() / omega.max_abs()
}

/// Smooth compactly supported test functions on a grid.
#[derive(Debug, Clone)]
pub struct TestFunctionSet {
    pub seed: u64,
    pub grid: SpacetimeGrid,
    pub functions: Vec<Vec<Complex64>>,
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

impl TestFunctionSet {
    /// Superpositions of one to three modulated bumps supported in the
    /// central quarter of the grid.
    pub fn random(grid: &SpacetimeGrid, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (th, lh) = (grid.t_half / 4.0, grid.l_half / 4.0);
        let wmax = th.min(lh).min(1.0);
        let functions = (0..count)
            .map(|_| {
                let bumps: Vec<(f64, f64, f64, Complex64, f64, f64)> = (0..rng.gen_range(1..=3))
                    .map(|_| {
                        (
                            rng.gen_range(-th..th),
                            rng.gen_range(-lh..lh),
                            rng.gen_range(0.4 * wmax..wmax),
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                            rng.gen_range(-3.0..3.0),
                            rng.gen_range(-3.0..3.0),
                        )
                    })
                    .collect();
                let mut u = vec![Complex64::new(0.0, 0.0); grid.len()];
                for n in 0..grid.nt {
                    for j in 0..grid.nx {
                        let (t, x) = (grid.t(n), grid.x(j));
                        for &(t0, x0, w, a, kt, kx) in &bumps {
                            let r2 = ((t - t0).powi(2) + (x - x0).powi(2)) / (w * w);
                            if r2 < 1.0 {
                                u[n * grid.nx + j] += a * bump(r2) * Complex64::from_polar(1.0, kt * t + kx * x);
                            }
                        }
                    }
                }
                u
            })
            .collect();
        TestFunctionSet {
            seed,
            grid: *grid,
            functions,
        }
    }

    /// Smallest distance in cells from any support node to the time boundary
    /// or to the `|x| = L/2` lines beyond which separations would wrap.
    pub fn support_margin(&self) -> usize {
        let g = &self.grid;
        let mut margin = usize::MAX;
        for u in &self.functions {
            for n in 0..g.nt {
                for j in 0..g.nx {
                    if u[n * g.nx + j].norm() > 0.0 {
                        let dt = n.min(g.nt - 1 - n);
                        let dx = j.min(g.nx - 1 - j);
                        margin = margin.min(dt).min(dx);
                    }
                }
            }
        }
        margin
    }
}

#[derive(Debug, Clone)]
pub struct GramReport {
    pub matrix: CMat,
    pub min_eig: f64,
    pub max_eig: f64,
    pub spectral_radius: f64,
    /// Largest `|Im M_aa| / spectral radius` before hermitization.
    pub max_diag_imag: f64,
}

/// `K * u` on the grid: time padded, space periodic.
fn convolve(kernel: &KernelField, khat: &[Complex64], rows: usize, u: &[Complex64]) -> Vec<Complex64> {
    let g = &kernel.grid;
    let nx = g.nx;
    let mut buf = vec![Complex64::new(0.0, 0.0); rows * nx];
    buf[..g.len()].copy_from_slice(u);
    fft2(&mut buf, rows, nx, false);
    for (a, b) in buf.iter_mut().zip(khat) {
        *a *= b;
    }
    fft2(&mut buf, rows, nx, true);
    let norm = 1.0 / (rows * nx) as f64;
    buf.truncate(g.len());
    buf.iter_mut().for_each(|z| *z *= norm);
    buf
}

fn kernel_spectrum(kernel: &KernelField) -> (Vec<Complex64>, usize) {
    let g = &kernel.grid;
    let (nt, nx) = (g.nt, g.nx);
    let rows = (2 * nt).next_power_of_two();
    let mut khat = vec![Complex64::new(0.0, 0.0); rows * nx];
    for n in 0..nt {
        let dn = n as i64 - g.n0() as i64;
        let r = dn.rem_euclid(rows as i64) as usize;
        for j in 0..nx {
            let dj = (j as i64 - g.j0() as i64).rem_euclid(nx as i64) as usize;
            khat[r * nx + dj] = kernel.get(n, j);
        }
    }
    fft2(&mut khat, rows, nx, false);
    (khat, rows)
}

/// Gram matrix `M_ab = ΣΣ ū_a(x) ω(x−y) u_b(y) (ΔtΔx)²` and its spectrum.
pub fn gram_positivity(omega: &KernelField, tests: &TestFunctionSet) -> Result<GramReport, QftError> {
    if !omega.grid.same_as(&tests.grid) {
        return Err(QftError::GridMismatch("tests and kernel grids differ".into()));
    }
    let g = &omega.grid;
    let (khat, rows) = kernel_spectrum(omega);
    let images: Vec<Vec<Complex64>> = tests
        .functions
        .par_iter()
        .map(|u| convolve(omega, &khat, rows, u))
        .collect();
    let count = tests.functions.len();
    let vol2 = (g.dt * g.dx).powi(2);
    let matrix = CMat::from_fn(count, count, |a, b| {
        tests.functions[a]
            .iter()
            .zip(&images[b])
            .map(|(ua, wb)| ua.conj() * wb)
            .sum::<Complex64>()
            * vol2
    });
    let herm = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = hermitian_eigenvalues(&herm);
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eig = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spectral_radius = min_eig.abs().max(max_eig.abs());
    let max_diag_imag = (0..count).map(|a| matrix[(a, a)].im.abs()).fold(0.0, f64::max) / spectral_radius.max(f64::MIN_POSITIVE);
    Ok(GramReport {
        matrix,
        min_eig,
        max_eig,
        spectral_radius,
        max_diag_imag,
    })
}
