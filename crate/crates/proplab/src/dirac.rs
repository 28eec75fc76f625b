//! Dirac-type operators `D = −iγ^μ∂_μ` with `γ^μγ^ν + γ^νγ^μ = 2g^{μν}`,
//! `g = diag(−1, +1, …)`, so that `D² = □ = ∂_t² − Δ`.
//!
//! The spinor pairing is `⟨u|v⟩ = (Bu)†v` with `B = iγ⁰`. Then
//! `B(−iσ_D(N♭)) = N⁰ + N^kγ⁰γ^k`, which is positive definite exactly for
//! future timelike `N`, and `D` is formally skew-adjoint: `⟨Du|v⟩ = −⟨u|Dv⟩`.
//! No pairing makes `D` selfadjoint and the β-form definite at once when
//! `(γ⁰)² = −1`; the skew relation is the one verified here.
//!
//! On the 1+1 lattice `D` uses centered differences. Its square is the
//! 5-point `□` with spacing `(2Δt, 2Δx)`, which decouples the grid into four
//! sublattices; the scalar Green kernels are therefore taken from the grid of
//! doubled spacing and embedded on the sublattice of the origin.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fft::{fft2, fft_cols, fft_rows};
use crate::linalg::{hermitian_eigenvalues, hermitian_part, CMat, I};
use crate::minkowski_qft::{kg_green, GreenKind, QftError, SpacetimeGrid};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiracError {
    #[error("no Clifford representation for n = {0} (supported: 2, 4)")]
    UnsupportedDimension(usize),
    #[error("test {index} has energy fraction {fraction:.3e} within 3 bins of a frequency cutoff")]
    BandLimitViolation { index: usize, fraction: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("representation invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Qft(#[from] QftError),
}

/// Gamma matrices and the adjoint-structure matrix `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordRep {
    pub n: usize,
    pub gammas: Vec<CMat>,
    pub b: CMat,
}

/// `g^{μμ}` for the signature `(−, +, …)`.
pub fn metric_diag(mu: usize) -> f64 {
    if mu == 0 {
        -1.0
    } else {
        1.0
    }
}

fn cmat(n: usize, entries: &[(f64, f64)]) -> CMat {
    CMat::from_row_iterator(n, n, entries.iter().map(|&(re, im)| Complex64::new(re, im)))
}

impl CliffordRep {
    /// Spinor dimension `N = 2^{⌊n/2⌋}`.
    pub fn size(&self) -> usize {
        self.gammas[0].nrows()
    }

    /// `γ^μξ_μ`.
    pub fn slash(&self, xi: &[f64]) -> CMat {
        let k = self.size();
        self.gammas
            .iter()
            .zip(xi)
            .fold(CMat::zeros(k, k), |acc, (g, x)| acc + g * Complex64::new(*x, 0.0))
    }

    /// Largest entry of `γ^μγ^ν + γ^νγ^μ − 2g^{μν}𝟙` over all pairs.
    pub fn clifford_defect(&self) -> f64 {
        let k = self.size();
        let mut worst: f64 = 0.0;
        for mu in 0..self.n {
            for nu in 0..self.n {
                let mut a = &self.gammas[mu] * &self.gammas[nu] + &self.gammas[nu] * &self.gammas[mu];
                if mu == nu {
                    a -= CMat::identity(k, k) * Complex64::new(2.0 * metric_diag(mu), 0.0);
                }
                worst = worst.max(a.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        worst
    }

    /// `⟨u|v⟩ = (Bu)†v` for single spinors.
    pub fn pairing(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        let k = self.size();
        (0..k)
            .map(|a| {
                let bu: Complex64 = (0..k).map(|c| self.b[(a, c)] * u[c]).sum();
                bu.conj() * v[a]
            })
            .sum()
    }
}

/// Fixed representations:
/// - `n = 2`: `γ⁰ = [[0,1],[−1,0]]`, `γ¹ = [[0,1],[1,0]]`.
/// - `n = 4`: `γ⁰ = i·diag(1,1,−1,−1)`, `γ^k = i[[0,σ_k],[−σ_k,0]]`.
///
/// In both cases `B = iγ⁰`.
pub fn build_clifford(n: usize) -> Result<CliffordRep, DiracError> {
    let (z, o, m, i, mi) = ((0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0));
    let gammas = match n {
        2 => vec![cmat(2, &[z, o, m, z]), cmat(2, &[z, o, o, z])],
        4 => {
            // i·[[0,σ],[−σ,0]] with σ₁ = [[0,1],[1,0]], σ₂ = [[0,−i],[i,0]], σ₃ = diag(1,−1).
            let g0 = cmat(4, &[i, z, z, z, z, i, z, z, z, z, mi, z, z, z, z, mi]);
            let g1 = cmat(4, &[z, z, z, i, z, z, i, z, z, mi, z, z, mi, z, z, z]);
            let g2 = cmat(4, &[z, z, z, o, z, z, m, z, z, m, z, z, o, z, z, z]);
            let g3 = cmat(4, &[z, z, i, z, z, z, z, mi, mi, z, z, z, z, i, z, z]);
            vec![g0, g1, g2, g3]
        }
        _ => return Err(DiracError::UnsupportedDimension(n)),
    };
    let b = &gammas[0] * I;
    let rep = CliffordRep { n, gammas, b };
    let defect = rep.clifford_defect();
    if defect != 0.0 {
        return Err(DiracError::Invariant(format!("Clifford defect {defect}")));
    }
    let gaps = discrete_adjoint_gaps(&rep, 0x5EED);
    if gaps.skew > 1e-10 {
        return Err(DiracError::Invariant(format!("skew-adjointness gap {}", gaps.skew)));
    }
    Ok(rep)
}

/// Relative gaps of `⟨Du|v⟩ ∓ ⟨u|Dv⟩` for random compactly supported spinor fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointGaps {
    /// `|⟨Du|v⟩ + ⟨u|Dv⟩| / |⟨Du|v⟩|`.
    pub skew: f64,
    /// `|⟨Du|v⟩ − ⟨u|Dv⟩| / |⟨Du|v⟩|`.
    pub selfadjoint: f64,
}

/// Centered-difference `D` on a periodic `side^n` grid with spacings `h`.
fn apply_d_periodic(rep: &CliffordRep, side: usize, h: &[f64], u: &[Complex64]) -> Vec<Complex64> {
    let (n, k) = (rep.n, rep.size());
    let nodes = side.pow(n as u32);
    let mut out = vec![Complex64::new(0.0, 0.0); nodes * k];
    for node in 0..nodes {
        let mut stride = 1;
        for mu in (0..n).rev() {
            let coord = (node / stride) % side;
            let up = node - coord * stride + ((coord + 1) % side) * stride;
            let dn = node - coord * stride + ((coord + side - 1) % side) * stride;
            for a in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..k {
                    acc += rep.gammas[mu][(a, c)] * (u[up * k + c] - u[dn * k + c]);
                }
                out[node * k + a] += -I * acc / (2.0 * h[mu]);
            }
            stride *= side;
        }
    }
    out
}

/// Discrete adjointness of `D` with respect to `⟨·|·⟩`, summed over the grid.
pub fn discrete_adjoint_gaps(rep: &CliffordRep, seed: u64) -> AdjointGaps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side: usize = if rep.n == 2 { 10 } else { 6 };
    let h: Vec<f64> = (0..rep.n).map(|_| rng.gen_range(0.2..0.6)).collect();
    let k = rep.size();
    let nodes = side.pow(rep.n as u32);
    let mut field = || -> Vec<Complex64> {
        let mut u = vec![Complex64::new(0.0, 0.0); nodes * k];
        for node in 0..nodes {
            let mut interior = true;
            let mut rest = node;
            for _ in 0..rep.n {
                let coord = rest % side;
                interior &= coord >= 2 && coord + 2 < side;
                rest /= side;
            }
            if interior {
                for a in 0..k {
                    u[node * k + a] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        u
    };
    let (u, v) = (field(), field());
    let (du, dv) = (apply_d_periodic(rep, side, &h, &u), apply_d_periodic(rep, side, &h, &v));
    let pair = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.chunks(k).zip(b.chunks(k)).map(|(x, y)| rep.pairing(x, y)).sum()
    };
    let (lhs, rhs) = (pair(&du, &v), pair(&u, &dv));
    let scale = lhs.norm().max(f64::MIN_POSITIVE);
    AdjointGaps {
        skew: (lhs + rhs).norm() / scale,
        selfadjoint: (lhs - rhs).norm() / scale,
    }
}

/// Hermitized `B(−iγ^μg_{μν}N^ν)` with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaForm {
    pub matrix: CMat,
    pub eigenvalues: Vec<f64>,
    pub positive_definite: bool,
}

impl BetaForm {
    /// Eigenvalues of both signs beyond roundoff.
    pub fn indefinite(&self) -> bool {
        let tol = 1e-12 * self.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        self.eigenvalues.iter().any(|e| *e < -tol) && self.eigenvalues.iter().any(|e| *e > tol)
    }
}

pub fn beta_form(rep: &CliffordRep, n_vec: &[f64]) -> Result<BetaForm, DiracError> {
    if n_vec.len() != rep.n {
        return Err(DiracError::Shape(format!("N has {} components, expected {}", n_vec.len(), rep.n)));
    }
    let lowered: Vec<f64> = n_vec.iter().enumerate().map(|(mu, v)| metric_diag(mu) * v).collect();
    let x = rep.slash(&lowered) * (-I);
    let matrix = hermitian_part(&(&rep.b * x));
    let eigenvalues = hermitian_eigenvalues(&matrix);
    let top = eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let positive_definite = eigenvalues.iter().all(|e| *e > 1e-12 * top);
    Ok(BetaForm {
        matrix,
        eigenvalues,
        positive_definite,
    })
}

/// Counts from a seeded sweep over future timelike and spacelike vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeSweep {
    pub timelike: usize,
    pub timelike_positive: usize,
    pub spacelike: usize,
    pub spacelike_indefinite: usize,
}

impl ConeSweep {
    pub fn passes(&self) -> bool {
        self.timelike_positive == self.timelike && self.spacelike_indefinite == self.spacelike
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 0.1 && r <= 1.0 {
            return v.iter().map(|x| x / r).collect();
        }
    }
}

/// `count` future timelike and `count` spacelike vectors with speeds in `[0, 0.95]`.
pub fn cone_sweep(rep: &CliffordRep, count: usize, seed: u64) -> Result<ConeSweep, DiracError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ConeSweep {
        timelike: count,
        timelike_positive: 0,
        spacelike: count,
        spacelike_indefinite: 0,
    };
    for _ in 0..count {
        let t = rng.gen_range(0.2..3.0);
        let v = rng.gen_range(0.0..0.95);
        let dir = random_direction(&mut rng, rep.n - 1);
        let mut n_vec = vec![t];
        n_vec.extend(dir.iter().map(|d| d * v * t));
        if beta_form(rep, &n_vec)?.positive_definite {
            out.timelike_positive += 1;
        }
        let t: f64 = rng.gen_range(-3.0..3.0);
        let v = rng.gen_range(0.05..0.95);
        let r = rng.gen_range(0.2f64..3.0).max(t.abs() / v);
        let dir = random_direction(&mut rng, rep.n - 1);
        let mut n_vec = vec![t];
        n_vec.extend(dir.iter().map(|d| d * r));
        if beta_form(rep, &n_vec)?.indefinite() {
            out.spacelike_indefinite += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiracKind {
    Ret,
    Adv,
    Causal,
    Feynman,
}

impl DiracKind {
    pub fn name(&self) -> &'static str {
        match self {
            DiracKind::Ret => "ret",
            DiracKind::Adv => "adv",
            DiracKind::Causal => "causal",
            DiracKind::Feynman => "feynman",
        }
    }
}

/// Matrix kernel `S = −iγ⁰K_t − iγ¹K_x` on the 1+1 grid, stored through its two
/// scalar components (same layout as the scalar kernels).
#[derive(Debug, Clone, PartialEq)]
pub struct DiracKernel {
    pub grid: SpacetimeGrid,
    pub kind: DiracKind,
    pub gammas: [CMat; 2],
    pub kt: Vec<Complex64>,
    pub kx: Vec<Complex64>,
}

impl DiracKernel {
    /// The 2×2 matrix at node `(n, j)`.
    pub fn entry(&self, n: usize, j: usize) -> CMat {
        let i = n * self.grid.nx + j;
        (&self.gammas[0] * self.kt[i] + &self.gammas[1] * self.kx[i]) * (-I)
    }

    fn entry_norm(&self, i: usize) -> f64 {
        let m = (&self.gammas[0] * self.kt[i] + &self.gammas[1] * self.kx[i]) * (-I);
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.kt.len()).map(|i| self.entry_norm(i)).fold(0.0, f64::max)
    }

    /// Largest entry outside the closed cone `|x| ≤ ±t/r + cells·Δx`, `±t ≥ −cells·Δt`
    /// (forward for `Ret`, backward for `Adv`), relative to the maximum. Here `r` is
    /// the grid's `Δt/Δx`.
    pub fn cone_leak(&self, cells: usize) -> f64 {
        let g = &self.grid;
        let sign = match self.kind {
            DiracKind::Adv => -1.0,
            _ => 1.0,
        };
        let pad = cells as f64;
        let mut worst: f64 = 0.0;
        for n in 0..g.nt {
            let t = sign * g.t(n);
            for j in 0..g.nx {
                let x = g.x(j).abs();
                let inside = t >= -pad * g.dt - 1e-12 && x <= t / g.cfl() + pad * g.dx + 1e-12;
                if !inside {
                    worst = worst.max(self.entry_norm(n * g.nx + j));
                }
            }
        }
        worst / self.max_abs()
    }

    fn combine(&self, o: &DiracKernel, kind: DiracKind, s: f64) -> DiracKernel {
        DiracKernel {
            kind,
            kt: self.kt.iter().zip(&o.kt).map(|(a, b)| a + b * s).collect(),
            kx: self.kx.iter().zip(&o.kx).map(|(a, b)| a + b * s).collect(),
            ..self.clone()
        }
    }
}

fn require_two(rep: &CliffordRep) -> Result<(), DiracError> {
    if rep.n != 2 {
        return Err(DiracError::UnsupportedDimension(rep.n));
    }
    Ok(())
}

/// Massless Green kernel of the centered-difference `D²` on the full grid:
/// `4·G'` on the sublattice of the origin, where `G'` is the scalar kernel of
/// the grid with spacing `(2Δt, 2Δx)`, and zero elsewhere.
pub fn doubled_green(kind: GreenKind, grid: &SpacetimeGrid) -> Result<Vec<Complex64>, DiracError> {
    if grid.nx % 4 != 0 {
        return Err(QftError::InvalidGrid(format!("nx = {} must be a multiple of 4", grid.nx)).into());
    }
    let half = grid.n0() / 2;
    let coarse = SpacetimeGrid::new(2.0 * half as f64 * grid.dt, grid.l_half, 2 * half + 1, grid.nx / 2)?;
    let g = kg_green(kind, 0.0, &coarse)?;
    let (n0, j0, nx) = (grid.n0(), grid.j0(), grid.nx);
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for a in 0..coarse.nt {
        let n = n0 + 2 * a - 2 * half;
        for b in 0..coarse.nx {
            let j = (j0 + 2 * b + nx - 2 * coarse.j0()) % nx;
            out[n * nx + j] = g.get(a, b) * 4.0;
        }
    }
    Ok(out)
}

/// Centered differences in `t` (zero on the first and last rows) and periodic `x`.
fn centered(grid: &SpacetimeGrid, f: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let (nt, nx) = (grid.nt, grid.nx);
    let mut dt = vec![Complex64::new(0.0, 0.0); f.len()];
    let mut dx = vec![Complex64::new(0.0, 0.0); f.len()];
    for n in 0..nt {
        for j in 0..nx {
            let i = n * nx + j;
            if n > 0 && n + 1 < nt {
                dt[i] = (f[i + nx] - f[i - nx]) / (2.0 * grid.dt);
            }
            dx[i] = (f[n * nx + (j + 1) % nx] - f[n * nx + (j + nx - 1) % nx]) / (2.0 * grid.dx);
        }
    }
    (dt, dx)
}

/// Smooth time window: 1 for `|t| ≤ 0.7T`, 0 for `|t| ≥ 0.95T`.
pub fn time_window(grid: &SpacetimeGrid, t: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let s = (0.95 * grid.t_half - t.abs()) / (0.25 * grid.t_half);
    if s >= 1.0 {
        1.0
    } else {
        f(s) / (f(s) + f(1.0 - s))
    }
}

/// Length of the periodic time circle used by the frequency split.
pub fn circle_rows(grid: &SpacetimeGrid) -> usize {
    (2 * grid.nt).next_power_of_two()
}

/// Time-frequency sign of DFT bin `k` on a circle of `rows`: `+1` for
/// `0 < k < rows/2`, `−1` for `rows/2 < k < rows`, `0` at DC and Nyquist.
pub fn bin_sign(k: usize, rows: usize) -> i32 {
    if k == 0 || 2 * k == rows {
        0
    } else if 2 * k < rows {
        1
    } else {
        -1
    }
}

/// Windowed kernel components placed on the time circle with the origin at row 0.
fn circle_components(k: &DiracKernel, rows: usize) -> [Vec<Complex64>; 2] {
    let g = &k.grid;
    let nx = g.nx;
    let mut out = [vec![Complex64::new(0.0, 0.0); rows * nx], vec![Complex64::new(0.0, 0.0); rows * nx]];
    for n in 0..g.nt {
        let w = time_window(g, g.t(n));
        if w == 0.0 {
            continue;
        }
        let r = (n as i64 - g.n0() as i64).rem_euclid(rows as i64) as usize;
        for j in 0..nx {
            let dj = (j as i64 - g.j0() as i64).rem_euclid(nx as i64) as usize;
            out[0][r * nx + dj] = k.kt[n * nx + j] * w;
            out[1][r * nx + dj] = k.kx[n * nx + j] * w;
        }
    }
    out
}

/// `Π_sign S Π_sign` for the windowed kernel, as a kernel on the grid.
pub fn frequency_part(k: &DiracKernel, sign: i32) -> DiracKernel {
    let g = &k.grid;
    let (rows, nx) = (circle_rows(g), g.nx);
    let mut comps = circle_components(k, rows);
    for c in comps.iter_mut() {
        fft_cols(c, rows, nx, false);
        for r in 0..rows {
            if bin_sign(r, rows) != sign {
                c[r * nx..(r + 1) * nx].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            }
        }
        fft_cols(c, rows, nx, true);
    }
    let crop = |c: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for n in 0..g.nt {
            let r = (n as i64 - g.n0() as i64).rem_euclid(rows as i64) as usize;
            for j in 0..nx {
                let dj = (j as i64 - g.j0() as i64).rem_euclid(nx as i64) as usize;
                out[n * nx + j] = c[r * nx + dj] / rows as f64;
            }
        }
        out
    };
    DiracKernel {
        kt: crop(&comps[0]),
        kx: crop(&comps[1]),
        ..k.clone()
    }
}

/// `S^kind = D∘G^kind` for the massless lattice `□ = D²`. `Feynman` is
/// `S^adv − S⁻` with `S⁻ = Π₋SΠ₋` from the windowed causal kernel.
pub fn dirac_green(kind: DiracKind, rep: &CliffordRep, grid: &SpacetimeGrid) -> Result<DiracKernel, DiracError> {
    require_two(rep)?;
    let build = |k: DiracKind, g: Vec<Complex64>| {
        let (kt, kx) = centered(grid, &g);
        DiracKernel {
            grid: *grid,
            kind: k,
            gammas: [rep.gammas[0].clone(), rep.gammas[1].clone()],
            kt,
            kx,
        }
    };
    Ok(match kind {
        DiracKind::Ret => build(kind, doubled_green(GreenKind::Ret, grid)?),
        DiracKind::Adv => build(kind, doubled_green(GreenKind::Adv, grid)?),
        DiracKind::Causal => {
            let r = doubled_green(GreenKind::Ret, grid)?;
            let a = doubled_green(GreenKind::Adv, grid)?;
            build(kind, r.iter().zip(&a).map(|(x, y)| x - y).collect())
        }
        DiracKind::Feynman => {
            let adv = dirac_green(DiracKind::Adv, rep, grid)?;
            let minus = frequency_part(&dirac_green(DiracKind::Causal, rep, grid)?, -1);
            adv.combine(&minus, DiracKind::Feynman, -1.0)
        }
    })
}

/// `D S` residual in units of the discrete delta `1/(ΔtΔx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracResidual {
    /// Largest entry of `(DS)(0)ΔtΔx − 𝟙`.
    pub source_error: f64,
    /// Largest entry of `(DS)ΔtΔx` at other nodes with `|t| ≤ t_max`.
    pub off_source: f64,
}

/// Residual of `D S = δ𝟙` (use `expect_delta = false` for bisolutions) on rows with `|t| ≤ t_max`.
pub fn dirac_residual(k: &DiracKernel, expect_delta: bool, t_max: f64) -> DiracResidual {
    let g = &k.grid;
    let (nt, nx) = (g.nt, g.nx);
    let (tt, tx) = centered(g, &k.kt);
    let (xt, xx) = centered(g, &k.kx);
    // D S = Σ_{μν} (−iγ^μ)(−iγ^ν) ∂_μ K_ν.
    let p = |mu: usize, nu: usize| -> CMat { -(&k.gammas[mu] * &k.gammas[nu]) };
    let prods = [p(0, 0), p(0, 1), p(1, 0), p(1, 1)];
    let unit = g.dt * g.dx;
    let mut res = DiracResidual {
        source_error: 0.0,
        off_source: 0.0,
    };
    for n in 2..nt - 2 {
        if g.t(n).abs() > t_max + 1e-12 {
            continue;
        }
        for j in 0..nx {
            let i = n * nx + j;
            let m = &prods[0] * tt[i] + &prods[1] * xt[i] + &prods[2] * tx[i] + &prods[3] * xx[i];
            let mut m = m * Complex64::new(unit, 0.0);
            if (n, j) == (g.n0(), g.j0()) && expect_delta {
                m -= CMat::identity(2, 2);
                res.source_error = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
            } else {
                res.off_source = res.off_source.max(m.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
    }
    res
}

/// Seeded band-limited test spinors: sums of Gaussian wavepackets with time
/// carrier `|Ω| ∈ [22, 28]`, supported in `|t| ≤ 2.4`, `|x| ≤ 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracTestSet {
    pub grid: SpacetimeGrid,
    pub seed: u64,
    /// Node-major, two components per node.
    pub functions: Vec<Vec<Complex64>>,
}

/// Gaussian wavepacket `χ e^{i(Ωt + kx)}` cut off beyond 6 widths.
#[allow(clippy::too_many_arguments)]
pub fn wavepacket(
    grid: &SpacetimeGrid,
    center: (f64, f64),
    widths: (f64, f64),
    omega: f64,
    k: f64,
    spinor: [Complex64; 2],
) -> Vec<Complex64> {
    let mut u = vec![Complex64::new(0.0, 0.0); 2 * grid.len()];
    for n in 0..grid.nt {
        let dt = (grid.t(n) - center.0) / widths.0;
        if dt.abs() > 6.0 {
            continue;
        }
        for j in 0..grid.nx {
            let dx = (grid.x(j) - center.1) / widths.1;
            if dx.abs() > 6.0 {
                continue;
            }
            let env = (-0.5 * (dt * dt + dx * dx)).exp();
            let phase = Complex64::from_polar(env, omega * grid.t(n) + k * grid.x(j));
            let i = n * grid.nx + j;
            u[2 * i] = spinor[0] * phase;
            u[2 * i + 1] = spinor[1] * phase;
        }
    }
    u
}

impl DiracTestSet {
    pub fn random(grid: &SpacetimeGrid, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let functions = (0..count)
            .map(|_| {
                let packets = rng.gen_range(1..=2);
                let mut u = vec![Complex64::new(0.0, 0.0); 2 * grid.len()];
                for _ in 0..packets {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let omega: f64 = sign * rng.gen_range(22.0..28.0);
                    let k = omega.abs() * rng.gen_range(0.9..1.1) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let spinor = [
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    ];
                    let center = (rng.gen_range(-0.3..0.3), rng.gen_range(-1.0..1.0));
                    let widths = (rng.gen_range(0.3..0.35), rng.gen_range(0.4..0.5));
                    let p = wavepacket(grid, center, widths, omega, k, spinor);
                    u.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
                }
                u
            })
            .collect();
        DiracTestSet {
            grid: *grid,
            seed,
            functions,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        DiracTestSet {
            functions: self.functions.iter().map(|u| u.iter().map(|z| z * s).collect()).collect(),
            ..self.clone()
        }
    }
}

/// Energy fraction of `u` in time bins within 3 of DC or Nyquist.
fn cutoff_fraction(spectra: &[Vec<Complex64>; 2], rows: usize, nx: usize) -> f64 {
    let (mut near, mut total) = (0.0, 0.0);
    for r in 0..rows {
        let d = r.min(rows - r).min(r.abs_diff(rows / 2));
        let e: f64 = spectra.iter().map(|s| s[r * nx..(r + 1) * nx].iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
        total += e;
        if d <= 3 {
            near += e;
        }
    }
    near / total.max(f64::MIN_POSITIVE)
}

pub const BAND_TOLERANCE: f64 = 1e-10;

/// Outcome of the Pauli–Jordan positivity checks. Ratios are relative to the
/// spectral radius of the calibrated `S` Gram unless stated otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracSuiteReport {
    /// Phase in `{±1, ±i}` making `σ⟨u_ref|Su_ref⟩` real positive.
    pub sigma: Complex64,
    /// Phase applied to `ω_D = iS⁻`; equals `−iσ`.
    pub omega_phase: Complex64,
    pub reference_q: Complex64,
    /// `|⟨u_ref|S⁻u_ref⟩| / |⟨u_ref|Su_ref⟩|`.
    pub reference_minus: f64,
    pub scale: f64,
    /// Calibrated `q(u_a) = σ⟨u_a|Su_a⟩`.
    pub q: Vec<f64>,
    pub max_imag: f64,
    pub min_eig: f64,
    /// `‖G⁺ + G⁻ − G‖ / ‖G‖` for the three Gram matrices.
    pub split_gap: f64,
    pub plus_min_eig: f64,
    pub minus_min_eig: f64,
    /// `max|D S^± u| / max|γ⁰∂_t S^± u|` on the test window.
    pub d_residual_plus: f64,
    pub d_residual_minus: f64,
    /// Smallest eigenvalue of the hermitized `ω_D` Gram relative to its spectral radius.
    pub omega_min_eig: f64,
    /// Largest `|Im u†Su| / max|u†Su|` under the Euclidean pairing.
    pub euclid_imag: f64,
}

impl DiracSuiteReport {
    pub fn reality_ok(&self) -> bool {
        self.max_imag <= 1e-8 && self.min_eig >= -1e-6
    }

    pub fn split_ok(&self) -> bool {
        self.split_gap <= 1e-6
            && self.d_residual_plus <= 1e-3
            && self.d_residual_minus <= 1e-3
            && self.plus_min_eig >= -1e-6
            && self.minus_min_eig >= -1e-6
    }

    pub fn omega_ok(&self) -> bool {
        self.omega_min_eig >= -1e-6
    }

    pub fn control_ok(&self) -> bool {
        self.euclid_imag >= 1e-3
    }

    pub fn passes(&self) -> bool {
        self.reality_ok() && self.split_ok() && self.omega_ok() && self.control_ok()
    }
}

/// Spectral data of the windowed causal kernel on the time circle.
struct CircleOperator {
    rows: usize,
    nx: usize,
    /// `Ŝ(k)` row-major 2×2 per bin.
    s_hat: Vec<[Complex64; 4]>,
    gammas: [[Complex64; 4]; 2],
}

fn flat(m: &CMat) -> [Complex64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

fn mv(m: &[Complex64; 4], v: [Complex64; 2]) -> [Complex64; 2] {
    [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]
}

impl CircleOperator {
    fn new(s: &DiracKernel) -> Self {
        let g = &s.grid;
        let (rows, nx) = (circle_rows(g), g.nx);
        let mut comps = circle_components(s, rows);
        for c in comps.iter_mut() {
            fft2(c, rows, nx, false);
        }
        let g0 = flat(&s.gammas[0]);
        let g1 = flat(&s.gammas[1]);
        let s_hat = (0..rows * nx)
            .map(|i| {
                let (a, b) = (comps[0][i], comps[1][i]);
                let mut m = [Complex64::new(0.0, 0.0); 4];
                for e in 0..4 {
                    m[e] = -I * (g0[e] * a + g1[e] * b);
                }
                m
            })
            .collect();
        CircleOperator {
            rows,
            nx,
            s_hat,
            gammas: [g0, g1],
        }
    }
}

/// Per-test images on grid rows `lo..=hi`, two components per node.
struct TestImage {
    full: Vec<Complex64>,
    plus: Vec<Complex64>,
    minus: Vec<Complex64>,
    band: f64,
}

/// Spectrum of a test supported on rows `lo..=hi`; rows outside are zero and skipped.
fn spectra_of(u: &[Complex64], grid: &SpacetimeGrid, rows: usize, lo: usize, hi: usize) -> [Vec<Complex64>; 2] {
    let nx = grid.nx;
    let mut out = [vec![Complex64::new(0.0, 0.0); rows * nx], vec![Complex64::new(0.0, 0.0); rows * nx]];
    for i in lo * nx..(hi + 1) * nx {
        out[0][i] = u[2 * i];
        out[1][i] = u[2 * i + 1];
    }
    for s in out.iter_mut() {
        fft_rows(&mut s[lo * nx..(hi + 1) * nx], nx, false);
        fft_cols(s, rows, nx, false);
    }
    out
}

/// Inverse transform of a two-component spectrum on grid rows `lo..=hi`.
fn back(mut s: [Vec<Complex64>; 2], op: &CircleOperator, lo: usize, hi: usize) -> Vec<Complex64> {
    let nx = op.nx;
    for c in s.iter_mut() {
        fft_cols(c, op.rows, nx, true);
        fft_rows(&mut c[lo * nx..(hi + 1) * nx], nx, true);
    }
    let norm = 1.0 / (op.rows * nx) as f64;
    let mut out = Vec::with_capacity((hi - lo + 1) * nx * 2);
    for i in lo * nx..(hi + 1) * nx {
        out.push(s[0][i] * norm);
        out.push(s[1][i] * norm);
    }
    out
}

fn image(op: &CircleOperator, u: &[Complex64], grid: &SpacetimeGrid, lo: usize, hi: usize) -> TestImage {
    let (rows, nx) = (op.rows, op.nx);
    let spectra = spectra_of(u, grid, rows, lo, hi);
    let band = cutoff_fraction(&spectra, rows, nx);
    let zero = || [vec![Complex64::new(0.0, 0.0); rows * nx], vec![Complex64::new(0.0, 0.0); rows * nx]];
    let (mut full, mut plus, mut minus) = (zero(), zero(), zero());
    for r in 0..rows {
        let sign = bin_sign(r, rows);
        for q in 0..nx {
            let i = r * nx + q;
            let w = mv(&op.s_hat[i], [spectra[0][i], spectra[1][i]]);
            let target = match sign {
                1 => Some(&mut plus),
                -1 => Some(&mut minus),
                _ => None,
            };
            full[0][i] = w[0];
            full[1][i] = w[1];
            if let Some(t) = target {
                t[0][i] = w[0];
                t[1][i] = w[1];
            }
        }
    }
    TestImage {
        full: back(full, op, lo, hi),
        plus: back(plus, op, lo, hi),
        minus: back(minus, op, lo, hi),
        band,
    }
}

/// `(max|Dv|, max|γ⁰∂_t v|)` with centered differences over the inner rows of a
/// two-component field stored on consecutive full grid rows.
fn d_peaks(v: &[Complex64], op: &CircleOperator, grid: &SpacetimeGrid) -> (f64, f64) {
    let nx = grid.nx;
    let h = v.len() / (2 * nx);
    let at = |r: usize, j: usize| [v[2 * (r * nx + j)], v[2 * (r * nx + j) + 1]];
    let (mut dmax, mut tmax): (f64, f64) = (0.0, 0.0);
    for r in 1..h - 1 {
        for j in 0..nx {
            let (up, dn) = (at(r + 1, j), at(r - 1, j));
            let (rt, lf) = (at(r, (j + 1) % nx), at(r, (j + nx - 1) % nx));
            let dt = [(up[0] - dn[0]) / (2.0 * grid.dt), (up[1] - dn[1]) / (2.0 * grid.dt)];
            let dx = [(rt[0] - lf[0]) / (2.0 * grid.dx), (rt[1] - lf[1]) / (2.0 * grid.dx)];
            let t_part = mv(&op.gammas[0], dt);
            let x_part = mv(&op.gammas[1], dx);
            for a in 0..2 {
                dmax = dmax.max((t_part[a] + x_part[a]).norm());
                tmax = tmax.max(t_part[a].norm());
            }
        }
    }
    (dmax, tmax)
}

fn min_eig_ratio(m: &CMat) -> (f64, f64) {
    let eig = hermitian_eigenvalues(&hermitian_part(m));
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let radius = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    (lo / radius, radius)
}

/// Rows holding any nonzero test value, padded by one.
fn support_rows(grid: &SpacetimeGrid, fs: &[&[Complex64]]) -> (usize, usize) {
    let nx = grid.nx;
    let nonzero = |n: usize| fs.iter().any(|u| u[2 * n * nx..2 * (n + 1) * nx].iter().any(|z| z.norm() > 0.0));
    let r0 = (0..grid.nt).find(|&n| nonzero(n)).unwrap_or(0);
    let r1 = (0..grid.nt).rev().find(|&n| nonzero(n)).unwrap_or(grid.nt - 1);
    (r0.saturating_sub(1), (r1 + 1).min(grid.nt - 1))
}

/// Positive-frequency reference spinor used for the phase calibration.
pub fn reference_spinor(grid: &SpacetimeGrid) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    wavepacket(grid, (0.0, 0.0), (0.32, 0.45), 25.0, 25.0, [Complex64::new(s, 0.0), Complex64::new(0.0, s)])
}

/// Pauli–Jordan positivity, the frequency split `S = S⁺ + S⁻`, and `ω_D = iS⁻`.
pub fn dirac_positivity_suite(rep: &CliffordRep, grid: &SpacetimeGrid, tests: &DiracTestSet) -> Result<DiracSuiteReport, DiracError> {
    require_two(rep)?;
    if tests.grid != *grid {
        return Err(QftError::GridMismatch("tests and suite grids differ".into()).into());
    }
    if tests.functions.is_empty() || tests.functions.iter().any(|u| u.len() != 2 * grid.len()) {
        return Err(DiracError::Shape("tests must be nonempty two-component fields on the grid".into()));
    }
    let s = dirac_green(DiracKind::Causal, rep, grid)?;
    let op = CircleOperator::new(&s);
    let reference = reference_spinor(grid);
    let mut all: Vec<&[Complex64]> = tests.functions.iter().map(|u| u.as_slice()).collect();
    all.push(&reference);
    let (r0, r1) = support_rows(grid, &all);
    if r0 == 0 || r1 + 1 >= grid.nt {
        return Err(DiracError::Shape("tests must vanish near the time boundary".into()));
    }
    let (lo, hi) = (r0 - 1, r1 + 1);
    let images: Vec<TestImage> = all.par_iter().map(|u| image(&op, u, grid, lo, hi)).collect();
    if let Some((index, im)) = images.iter().enumerate().find(|(_, im)| im.band > BAND_TOLERANCE) {
        return Err(DiracError::BandLimitViolation { index, fraction: im.band });
    }

    let nx = grid.nx;
    let window = |u: &[Complex64]| u[2 * r0 * nx..2 * (r1 + 1) * nx].to_vec();
    let inner = |v: &[Complex64]| v[2 * nx..v.len() - 2 * nx].to_vec();
    let b = flat(&rep.b);
    let bu: Vec<Vec<Complex64>> = all
        .iter()
        .map(|u| window(u).chunks(2).flat_map(|v| mv(&b, [v[0], v[1]])).collect())
        .collect();
    let full: Vec<_> = images.iter().map(|im| inner(&im.full)).collect();
    let plus: Vec<_> = images.iter().map(|im| inner(&im.plus)).collect();
    let minus: Vec<_> = images.iter().map(|im| inner(&im.minus)).collect();
    let vol2 = (grid.dt * grid.dx).powi(2);
    let dot = |a: &[Complex64], v: &[Complex64]| a.iter().zip(v).map(|(x, y)| x.conj() * y).sum::<Complex64>() * vol2;

    let count = tests.functions.len();
    let reference_q = dot(&bu[count], &full[count]);
    let sigma = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), I, -I]
        .into_iter()
        .max_by(|a, b| (a * reference_q).re.total_cmp(&(b * reference_q).re))
        .expect("four candidates");
    let reference_minus = dot(&bu[count], &minus[count]).norm() / reference_q.norm().max(f64::MIN_POSITIVE);

    let gram = |images: &[Vec<Complex64>]| -> CMat { CMat::from_fn(count, count, |a, c| sigma * dot(&bu[a], &images[c])) };
    let g_full = gram(&full);
    let g_plus = gram(&plus);
    let g_minus = gram(&minus);
    let (min_eig, scale) = min_eig_ratio(&g_full);
    let q: Vec<f64> = (0..count).map(|a| g_full[(a, a)].re).collect();
    let max_imag = (0..count).map(|a| g_full[(a, a)].im.abs()).fold(0.0, f64::max) / scale;
    let split_gap = (&g_plus + &g_minus - &g_full).norm() / g_full.norm().max(f64::MIN_POSITIVE);
    let lowest = |m: &CMat| {
        let (r, radius) = min_eig_ratio(m);
        r * radius / scale
    };
    let (plus_min_eig, minus_min_eig) = (lowest(&g_plus), lowest(&g_minus));

    let ratio = |pick: fn(&TestImage) -> &Vec<Complex64>| {
        let (num, den) = images[..count]
            .iter()
            .map(|im| d_peaks(pick(im), &op, grid))
            .fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
        num / den.max(f64::MIN_POSITIVE)
    };
    let d_residual_plus = ratio(|im| &im.plus);
    let d_residual_minus = ratio(|im| &im.minus);

    // ω_D = iS⁻; the calibration phase carried over to it is −iσ.
    let omega_phase = -I * sigma;
    let omega_gram = CMat::from_fn(count, count, |a, c| omega_phase * I * dot(&bu[a], &minus[c]));
    let omega_min_eig = min_eig_ratio(&omega_gram).0;

    let euclid: Vec<Complex64> = (0..count)
        .map(|a| dot(&window(all[a]), &full[a]))
        .collect();
    let euclid_scale = euclid.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let euclid_imag = euclid.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / euclid_scale;

    Ok(DiracSuiteReport {
        sigma,
        omega_phase,
        reference_q,
        reference_minus,
        scale,
        q,
        max_imag,
        min_eig,
        split_gap,
        plus_min_eig,
        minus_min_eig,
        d_residual_plus,
        d_residual_minus,
        omega_min_eig,
        euclid_imag,
    })
}
