//! Wavefront detection by windowed-Fourier decay.
//!
//! At a base point `x₀` the field is multiplied by the Gaussian window
//! `w(y) = exp(−|y − x₀|²/2σ²)` and transformed,
//! `F(ξ) = Σ w(y)u(y)e^{−iξ·(y − x₀)} ΔtΔx`, which is the zero-padded DFT
//! evaluated off the FFT lattice. Covectors are written `ξ = (ξ_t, ξ_x)`.
//! Along each direction `θ` a power law `|F(λθ)| ~ λ^{−α}` is fitted by log–log
//! least squares; a small `α` marks a singular codirection.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

use crate::minkowski_qft::{kg_retarded_with_source, KernelField, QftError, Source, SpacetimeGrid};

/// Default window width in cells.
pub const DEFAULT_WINDOW_CELLS: f64 = 8.0;
/// Number of angular bins in the default direction set.
pub const DIRECTION_COUNT: usize = 32;
/// Fits below this R² do not support a claimed exponent.
pub const R2_MIN: f64 = 0.9;
/// Exponent reported once the spectrum has sunk into the noise floor.
pub const ALPHA_CEILING: f64 = 10.0;
/// Default singularity threshold for second-order kernels.
pub const DEFAULT_THRESHOLD: f64 = 2.0;
/// Spectral values below this fraction of the windowed L¹ mass count as zero.
pub const FLOOR_REL: f64 = 1e-7;
/// Roundoff level relative to the field's peak; keeps empty regions from
/// reading as flat spectra.
pub const NOISE_REL: f64 = 1e-12;
/// Minimum distance from the grid edge, in window widths.
pub const BOUNDARY_MARGIN: f64 = 4.0;
/// The window is cut off on a box of this half-width (in σ).
const WINDOW_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProbeError {
    #[error("scale {scale} exceeds the Nyquist limit {limit}")]
    NyquistViolation { scale: f64, limit: f64 },
    #[error("base point ({t}, {x}) lies within {margin} of the grid edge")]
    OutOfDomain { t: f64, x: f64, margin: f64 },
    #[error("bad input: {0}")]
    Shape(String),
    #[error(transparent)]
    Qft(#[from] QftError),
}

/// Complex samples on a uniform `(t, x)` grid, row = time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
    /// Coordinates of node `(0, 0)`.
    pub t_start: f64,
    pub x_start: f64,
    pub values: Vec<Complex64>,
}

impl SampledField {
    pub fn new(nt: usize, nx: usize, dt: f64, dx: f64, origin: (f64, f64), values: Vec<Complex64>) -> Result<Self, ProbeError> {
        if values.len() != nt * nx || nt < 2 || nx < 2 {
            return Err(ProbeError::Shape(format!("{} values for a {nt}×{nx} grid", values.len())));
        }
        if !(dt > 0.0 && dx > 0.0) {
            return Err(ProbeError::Shape("spacings must be positive".into()));
        }
        Ok(SampledField {
            nt,
            nx,
            dt,
            dx,
            t_start: origin.0,
            x_start: origin.1,
            values,
        })
    }

    pub fn from_kernel(k: &KernelField) -> Self {
        let g = &k.grid;
        SampledField {
            nt: g.nt,
            nx: g.nx,
            dt: g.dt,
            dx: g.dx,
            t_start: g.t(0),
            x_start: g.x(0),
            values: k.values.clone(),
        }
    }

    /// Sample `f(t, x)` on a kernel grid.
    pub fn from_fn(g: &SpacetimeGrid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = (0..g.nt).flat_map(|n| (0..g.nx).map(move |j| (n, j))).map(|(n, j)| f(g.t(n), g.x(j))).collect();
        SampledField {
            nt: g.nt,
            nx: g.nx,
            dt: g.dt,
            dx: g.dx,
            t_start: g.t(0),
            x_start: g.x(0),
            values,
        }
    }

    /// The coarser of the two spacings; `π/h` bounds the usable scales.
    pub fn h(&self) -> f64 {
        self.dt.max(self.dx)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn t(&self, n: usize) -> f64 {
        self.t_start + n as f64 * self.dt
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_start + j as f64 * self.dx
    }

    /// Node nearest `(t, x)` as a coordinate pair.
    pub fn snap(&self, t: f64, x: f64) -> (f64, f64) {
        let n = ((t - self.t_start) / self.dt).round().clamp(0.0, (self.nt - 1) as f64) as usize;
        let j = ((x - self.x_start) / self.dx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        (self.t(n), self.x(j))
    }
}

/// `count` unit covectors at angles `2π(j + offset)/count`.
pub fn uniform_directions(count: usize, offset: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|j| {
            let phi = 2.0 * PI * (j as f64 + offset) / count as f64;
            [phi.cos(), phi.sin()]
        })
        .collect()
}

/// Five scales in half-octave steps ending at half the Nyquist limit.
pub fn default_scales(h: f64) -> Vec<f64> {
    let top = 0.5 * PI / h;
    (0..5).rev().map(|k| top * 2f64.powf(-0.5 * k as f64)).collect()
}

/// Power-law fit along one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionFit {
    pub theta: [f64; 2],
    pub alpha: f64,
    pub r2: f64,
    /// The spectrum reached the noise floor inside the scale range.
    pub saturated: bool,
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub point: (f64, f64),
    pub sigma: f64,
    pub scales: Vec<f64>,
    pub fits: Vec<DirectionFit>,
}

impl DecayProfile {
    pub fn alphas(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.alpha).collect()
    }

    pub fn min_alpha(&self) -> f64 {
        self.fits.iter().map(|f| f.alpha).fold(f64::INFINITY, f64::min)
    }
}

/// Window-weighted samples `w·u·ΔtΔx` around a base point.
struct Patch {
    tau: Vec<f64>,
    xi: Vec<f64>,
    data: Vec<Complex64>,
    mass: f64,
}

fn patch(field: &SampledField, point: (f64, f64), sigma: f64) -> Result<Patch, ProbeError> {
    if !(sigma > 0.0) {
        return Err(ProbeError::Shape("window width must be positive".into()));
    }
    let margin = BOUNDARY_MARGIN * sigma;
    let (t_end, x_end) = (field.t(field.nt - 1), field.x(field.nx - 1));
    let (t0, x0) = point;
    if t0 - margin < field.t_start - 1e-12 || t0 + margin > t_end + 1e-12 || x0 - margin < field.x_start - 1e-12 || x0 + margin > x_end + 1e-12 {
        return Err(ProbeError::OutOfDomain { t: t0, x: x0, margin });
    }
    let reach = WINDOW_CUTOFF * sigma;
    // Nodes outside the grid are zero.
    let range = |c: f64, start: f64, step: f64, len: usize| {
        let lo = ((c - reach - start) / step).ceil().max(0.0) as usize;
        let hi = (((c + reach - start) / step).floor() as isize).min(len as isize - 1).max(0) as usize;
        lo..=hi
    };
    let rows = range(t0, field.t_start, field.dt, field.nt);
    let cols = range(x0, field.x_start, field.dx, field.nx);
    let tau: Vec<f64> = rows.clone().map(|n| field.t(n) - t0).collect();
    let xi: Vec<f64> = cols.clone().map(|j| field.x(j) - x0).collect();
    let cell = field.dt * field.dx;
    let s2 = 2.0 * sigma * sigma;
    let mut data = Vec::with_capacity(tau.len() * xi.len());
    for (a, n) in rows.enumerate() {
        for (b, j) in cols.clone().enumerate() {
            let w = (-(tau[a] * tau[a] + xi[b] * xi[b]) / s2).exp();
            data.push(field.values[n * field.nx + j] * (w * cell));
        }
    }
    let mass = data.iter().map(|z| z.norm()).sum();
    Ok(Patch { tau, xi, data, mass })
}

impl Patch {
    fn transform(&self, k: [f64; 2]) -> Complex64 {
        let cols = self.xi.len();
        let phase_x: Vec<Complex64> = self.xi.iter().map(|x| Complex64::from_polar(1.0, -k[1] * x)).collect();
        self.tau
            .iter()
            .enumerate()
            .map(|(a, t)| {
                let row = &self.data[a * cols..(a + 1) * cols];
                let s: Complex64 = row.iter().zip(&phase_x).map(|(u, p)| u * p).sum();
                s * Complex64::from_polar(1.0, -k[0] * t)
            })
            .sum()
    }
}

/// Windowed transform `F(ξ)` at the given covectors.
pub fn windowed_transform(field: &SampledField, point: (f64, f64), sigma: f64, covectors: &[[f64; 2]]) -> Result<Vec<Complex64>, ProbeError> {
    let p = patch(field, point, sigma)?;
    Ok(covectors.par_iter().map(|k| p.transform(*k)).collect())
}

/// Least-squares slope and R² of `y` against `x`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    // A flat spectrum is fitted exactly by a zero slope.
    let r2 = if ss_tot <= 1e-20 * n { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, r2)
}

fn fit_direction(theta: [f64; 2], scales: &[f64], magnitudes: Vec<f64>, floor: f64) -> DirectionFit {
    let cut = magnitudes.iter().position(|m| *m <= floor);
    if cut.is_some() {
        return DirectionFit {
            theta,
            alpha: ALPHA_CEILING,
            r2: 1.0,
            saturated: true,
            magnitudes,
        };
    }
    let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = magnitudes.iter().map(|m| m.ln()).collect();
    let (slope, r2) = line_fit(&lx, &ly);
    DirectionFit {
        theta,
        alpha: (-slope).min(ALPHA_CEILING),
        r2,
        saturated: false,
        magnitudes,
    }
}

/// Fit `|F(λθ)| ~ λ^{−α}` for every direction over the given scales.
pub fn decay_exponents(
    field: &SampledField,
    point: (f64, f64),
    sigma: f64,
    directions: &[[f64; 2]],
    scales: &[f64],
) -> Result<DecayProfile, ProbeError> {
    if scales.len() < 2 || directions.is_empty() {
        return Err(ProbeError::Shape("need at least two scales and one direction".into()));
    }
    if scales.windows(2).any(|w| !(w[1] > w[0])) || scales[0] <= 0.0 {
        return Err(ProbeError::Shape("scales must be positive and increasing".into()));
    }
    let limit = PI / field.h();
    let top = *scales.last().unwrap();
    if top > limit * (1.0 + 1e-12) {
        return Err(ProbeError::NyquistViolation { scale: top, limit });
    }
    let p = patch(field, point, sigma)?;
    let noise = NOISE_REL * field.max_abs() * 2.0 * PI * sigma * sigma;
    let floor = FLOOR_REL * p.mass + noise;
    let fits = directions
        .par_iter()
        .map(|th| {
            let mags = scales.iter().map(|l| p.transform([l * th[0], l * th[1]]).norm()).collect();
            fit_direction(*th, scales, mags, floor)
        })
        .collect();
    Ok(DecayProfile {
        point,
        sigma,
        scales: scales.to_vec(),
        fits,
    })
}

/// Probe with the default window, direction set and scales.
pub fn probe(field: &SampledField, point: (f64, f64)) -> Result<DecayProfile, ProbeError> {
    let h = field.h();
    decay_exponents(field, point, DEFAULT_WINDOW_CELLS * h, &uniform_directions(DIRECTION_COUNT, 0.0), &default_scales(h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularDirection {
    pub index: usize,
    pub theta: [f64; 2],
    pub alpha: f64,
    /// The fit behind this flag has R² below [`R2_MIN`].
    pub low_confidence: bool,
}

/// Directions whose exponent falls below `threshold`.
pub fn singular_directions(profile: &DecayProfile, threshold: f64) -> Vec<SingularDirection> {
    profile
        .fits
        .iter()
        .enumerate()
        .filter(|(_, f)| f.alpha < threshold)
        .map(|(index, f)| SingularDirection {
            index,
            theta: f.theta,
            alpha: f.alpha,
            low_confidence: f.r2 < R2_MIN,
        })
        .collect()
}

/// Index of the direction closest in angle to `covector`.
pub fn nearest_direction(directions: &[[f64; 2]], covector: [f64; 2]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    let norm = covector[0].hypot(covector[1]);
    for (j, d) in directions.iter().enumerate() {
        let c = (d[0] * covector[0] + d[1] * covector[1]) / norm;
        if c > best.1 {
            best = (j, c);
        }
    }
    best.0
}

/// Circular distance between two bin indices.
pub fn bin_distance(a: usize, b: usize, count: usize) -> usize {
    let d = a.abs_diff(b) % count;
    d.min(count - d)
}

/// Both conormals `±(t, −x)` of the light cone of the origin through `(t, x)`.
pub fn null_codirections(t: f64, x: f64) -> [[f64; 2]; 2] {
    let r = t.hypot(x);
    [[t / r, -x / r], [-t / r, x / r]]
}

/// Flags are nonempty, each within `tol` bins of a target, and every target is hit.
pub fn localized(flags: &[SingularDirection], targets: &[usize], count: usize, tol: usize) -> bool {
    !flags.is_empty()
        && flags.iter().all(|f| targets.iter().any(|t| bin_distance(f.index, *t, count) <= tol))
        && targets.iter().all(|t| flags.iter().any(|f| bin_distance(f.index, *t, count) <= tol))
}

/// Result of probing the nodes within a few cells of a light-cone point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProbe {
    pub points: Vec<(f64, f64)>,
    pub flagged: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
    pub localized: bool,
}

/// Probe the nodes at `x ± k·Δx`, `k ≤ cells`, around the cone point `(t, x)`.
pub fn cone_probe(field: &SampledField, t: f64, x: f64, cells: usize) -> Result<ConeProbe, ProbeError> {
    let dirs = uniform_directions(DIRECTION_COUNT, 0.0);
    let targets: Vec<usize> = null_codirections(t, x).iter().map(|c| nearest_direction(&dirs, *c)).collect();
    let (t0, x0) = field.snap(t, x);
    let mut out = ConeProbe {
        points: Vec::new(),
        flagged: Vec::new(),
        targets: targets.clone(),
        localized: true,
    };
    for k in -(cells as i64)..=cells as i64 {
        let p = (t0, x0 + k as f64 * field.dx);
        let flags = singular_directions(&probe(field, p)?, DEFAULT_THRESHOLD);
        out.localized &= localized(&flags, &targets, DIRECTION_COUNT, 1);
        out.flagged.push(flags.iter().map(|f| f.index).collect());
        out.points.push(p);
    }
    Ok(out)
}

/// Windowed spectral mass `Σ|F|²` split by the sign of `ξ_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlaneMass {
    pub positive: f64,
    pub negative: f64,
}

impl HalfPlaneMass {
    /// Larger half over smaller half.
    pub fn ratio(&self) -> f64 {
        self.positive.max(self.negative) / self.positive.min(self.negative)
    }
}

/// Spectral mass of the two frequency half-planes at the default scales.
pub fn frequency_asymmetry(field: &SampledField, point: (f64, f64)) -> Result<HalfPlaneMass, ProbeError> {
    let h = field.h();
    let scales = default_scales(h);
    let covectors: Vec<[f64; 2]> = uniform_directions(DIRECTION_COUNT, 0.5)
        .into_iter()
        .flat_map(|d| scales.iter().map(move |l| [l * d[0], l * d[1]]).collect::<Vec<_>>())
        .collect();
    let f = windowed_transform(field, point, DEFAULT_WINDOW_CELLS * h, &covectors)?;
    let mut m = HalfPlaneMass { positive: 0.0, negative: 0.0 };
    for (k, v) in covectors.iter().zip(&f) {
        if k[0] > 0.0 {
            m.positive += v.norm_sqr();
        } else {
            m.negative += v.norm_sqr();
        }
    }
    Ok(m)
}

/// Exponents of a retarded solution along the null ray `x = t` and at `(t, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dichotomy {
    pub times: Vec<f64>,
    /// Smallest exponent within one bin of the null codirection.
    pub on_cone: Vec<f64>,
    /// Smallest exponent over all directions.
    pub off_cone: Vec<f64>,
}

impl Dichotomy {
    pub fn variation(&self) -> f64 {
        let hi = self.on_cone.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.on_cone.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Smallest off-cone exponent minus largest on-cone exponent.
    pub fn gap(&self) -> f64 {
        let on = self.on_cone.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let off = self.off_cone.iter().cloned().fold(f64::INFINITY, f64::min);
        off - on
    }
}

/// Solve `(□ + m²)u = g(x)δ(t)` with a narrow Gaussian `g` and probe along and off the ray.
pub fn propagation_dichotomy(m: f64, grid: &SpacetimeGrid, source_sigma: f64, times: &[f64]) -> Result<Dichotomy, ProbeError> {
    let u = SampledField::from_kernel(&kg_retarded_with_source(m, grid, Source::Gaussian { sigma: source_sigma })?);
    let dirs = uniform_directions(DIRECTION_COUNT, 0.0);
    let mut d = Dichotomy {
        times: times.to_vec(),
        on_cone: Vec::new(),
        off_cone: Vec::new(),
    };
    for &t in times {
        let p = u.snap(t, t);
        let prof = probe(&u, p)?;
        let target = nearest_direction(&dirs, null_codirections(t, t)[0]);
        let on = prof
            .fits
            .iter()
            .enumerate()
            .filter(|(j, _)| bin_distance(*j, target, DIRECTION_COUNT) <= 1)
            .map(|(_, f)| f.alpha)
            .fold(f64::INFINITY, f64::min);
        d.on_cone.push(on);
        d.off_cone.push(probe(&u, u.snap(t, 0.0))?.min_alpha());
    }
    Ok(d)
}
