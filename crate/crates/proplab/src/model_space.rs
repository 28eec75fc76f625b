//! Fundamental solutions of the model operator `D₁ = −i∂/∂y¹` on a uniform grid.
//!
//! Axis 0 of a [`GridSection`] is `y¹`; the remaining axes are `y′`. Values are
//! stored node-major with the `rank` fiber components contiguous.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::linalg::I;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("Feynman kinds need n = 2, got n = {0}")]
    UnsupportedDim(usize),
    #[error("section shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenKind {
    Ret,
    Adv,
    Causal,
    Feynman,
    AntiFeynman,
}

impl GreenKind {
    pub const ALL: [GreenKind; 5] = [
        GreenKind::Ret,
        GreenKind::Adv,
        GreenKind::Causal,
        GreenKind::Feynman,
        GreenKind::AntiFeynman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GreenKind::Ret => "ret",
            GreenKind::Adv => "adv",
            GreenKind::Causal => "causal",
            GreenKind::Feynman => "feynman",
            GreenKind::AntiFeynman => "antifeynman",
        }
    }
}

/// Complex `rank`-vector field on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub shape: Vec<usize>,
    pub h: Vec<f64>,
    pub origin: Vec<f64>,
    pub rank: usize,
    /// Cells at each end of the `y¹` axis where the section must vanish.
    pub margin: usize,
    pub data: Vec<Complex64>,
}

impl GridSection {
    pub fn zeros(shape: Vec<usize>, h: Vec<f64>, rank: usize, margin: usize) -> Self {
        let len = shape.iter().product::<usize>() * rank;
        let origin = vec![0.0; shape.len()];
        GridSection {
            shape,
            h,
            origin,
            rank,
            margin,
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Sample `f(y) ∈ ℂ^rank` at every node (margin cells are left at zero).
    pub fn from_fn(
        shape: Vec<usize>,
        h: Vec<f64>,
        origin: Vec<f64>,
        rank: usize,
        margin: usize,
        f: impl Fn(&[f64]) -> Vec<Complex64>,
    ) -> Self {
        let mut s = GridSection::zeros(shape, h, rank, margin);
        s.origin = origin;
        let mut idx = vec![0usize; s.shape.len()];
        let mut y = vec![0.0; s.shape.len()];
        for node in 0..s.nodes() {
            s.unravel(node, &mut idx);
            if idx[0] < margin || idx[0] + margin >= s.shape[0] {
                continue;
            }
            for (a, v) in y.iter_mut().enumerate() {
                *v = s.origin[a] + idx[a] as f64 * s.h[a];
            }
            let val = f(&y);
            s.data[node * s.rank..(node + 1) * s.rank].copy_from_slice(&val);
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn nodes(&self) -> usize {
        self.shape.iter().product()
    }

    /// Number of `(y′, component)` columns.
    fn columns(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    fn unravel(&self, mut node: usize, idx: &mut [usize]) {
        for a in (0..self.shape.len()).rev() {
            idx[a] = node % self.shape[a];
            node /= self.shape[a];
        }
    }

    /// Transverse cell volume `h₂⋯hₙ`.
    pub fn transverse_cell(&self) -> f64 {
        self.h[1..].iter().product()
    }

    pub fn cell(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max|u|` on the `y¹` margin relative to `max|u|`.
    pub fn margin_violation(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        let cols = self.columns();
        let n1 = self.shape[0];
        let worst = (0..n1)
            .filter(|j| *j < self.margin || j + self.margin >= n1)
            .flat_map(|j| self.data[j * cols..(j + 1) * cols].iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst / m
    }

    fn like(&self, data: Vec<Complex64>) -> GridSection {
        GridSection {
            data,
            ..self.clone()
        }
    }

    fn zip(&self, o: &GridSection, f: impl Fn(Complex64, Complex64) -> Complex64) -> GridSection {
        self.like(self.data.iter().zip(&o.data).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn add(&self, o: &GridSection) -> GridSection {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &GridSection) -> GridSection {
        self.zip(o, |a, b| a - b)
    }

    /// `Σ ū·w` times the cell volume.
    pub fn inner(&self, o: &GridSection) -> Complex64 {
        self.data.iter().zip(&o.data).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.cell()
    }

    /// `v(y′) = Σ_t u(t, y′) h₁`, laid out by column.
    pub fn integrate_y1(&self) -> Vec<Complex64> {
        let cols = self.columns();
        let mut v = vec![Complex64::new(0.0, 0.0); cols];
        for row in self.data.chunks(cols) {
            for (acc, z) in v.iter_mut().zip(row) {
                *acc += z;
            }
        }
        v.iter_mut().for_each(|z| *z *= self.h[0]);
        v
    }

    /// `D₁u = −i∂₁u` by central differences on interior `y¹` rows (zero on the end rows).
    pub fn d1_interior(&self) -> GridSection {
        let cols = self.columns();
        let n1 = self.shape[0];
        let mut out = vec![Complex64::new(0.0, 0.0); self.data.len()];
        for j in 1..n1 - 1 {
            for c in 0..cols {
                let d = (self.data[(j + 1) * cols + c] - self.data[(j - 1) * cols + c]) / (2.0 * self.h[0]);
                out[j * cols + c] = -I * d;
            }
        }
        self.like(out)
    }
}

/// `i·` cumulative trapezoid along `y¹` from the low end.
fn retarded(u: &GridSection) -> GridSection {
    let cols = u.columns();
    let h = u.h[0];
    let mut out = vec![Complex64::new(0.0, 0.0); u.data.len()];
    for j in 1..u.shape[0] {
        for c in 0..cols {
            let inc = 0.5 * h * (u.data[(j - 1) * cols + c] + u.data[j * cols + c]);
            out[j * cols + c] = out[(j - 1) * cols + c] + inc;
        }
    }
    out.iter_mut().for_each(|z| *z *= I);
    u.like(out)
}

/// `−i·` cumulative trapezoid along `y¹` from the high end.
fn advanced(u: &GridSection) -> GridSection {
    let cols = u.columns();
    let h = u.h[0];
    let n1 = u.shape[0];
    let mut out = vec![Complex64::new(0.0, 0.0); u.data.len()];
    for j in (0..n1 - 1).rev() {
        for c in 0..cols {
            let inc = 0.5 * h * (u.data[(j + 1) * cols + c] + u.data[j * cols + c]);
            out[j * cols + c] = out[(j + 1) * cols + c] + inc;
        }
    }
    out.iter_mut().for_each(|z| *z *= -I);
    u.like(out)
}

/// Split `u = Π₊u + Π₋u` by discrete Fourier transform along `y²`. `Π₊` keeps
/// bins `0 < k < N₂/2` (profiles `e^{+iηy²}`, `η > 0`); `Π₋` keeps the rest.
pub fn frequency_split(u: &GridSection) -> Result<(GridSection, GridSection), ModelError> {
    if u.dim() != 2 {
        return Err(ModelError::UnsupportedDim(u.dim()));
    }
    let (n1, n2, r) = (u.shape[0], u.shape[1], u.rank);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n2);
    let inv = planner.plan_fft_inverse(n2);
    let mut plus = u.data.clone();
    let mut minus = u.data.clone();
    let mut buf = vec![Complex64::new(0.0, 0.0); n2];
    for j in 0..n1 {
        for c in 0..r {
            for k in 0..n2 {
                buf[k] = u.data[(j * n2 + k) * r + c];
            }
            // Forward FFT uses e^{−2πikm/N}, so bin k carries e^{+2πikm/N}.
            fwd.process(&mut buf);
            let mut pos = buf.clone();
            for (k, z) in pos.iter_mut().enumerate() {
                if !(k > 0 && 2 * k < n2) {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            inv.process(&mut pos);
            for k in 0..n2 {
                let p = pos[k] / n2 as f64;
                plus[(j * n2 + k) * r + c] = p;
                minus[(j * n2 + k) * r + c] = u.data[(j * n2 + k) * r + c] - p;
            }
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        }
    }
    Ok((u.like(plus), u.like(minus)))
}

/// Apply one of the model fundamental solutions to `u`.
pub fn apply_model_green(kind: GreenKind, u: &GridSection) -> Result<GridSection, ModelError> {
    if u.data.len() != u.nodes() * u.rank || u.h.len() != u.dim() {
        return Err(ModelError::Shape("data length or spacing inconsistent with shape".into()));
    }
    Ok(match kind {
        GreenKind::Ret => retarded(u),
        GreenKind::Adv => advanced(u),
        GreenKind::Causal => retarded(u).sub(&advanced(u)),
        GreenKind::Feynman | GreenKind::AntiFeynman => {
            let (p, m) = frequency_split(u)?;
            let (p, m) = if kind == GreenKind::Feynman { (p, m) } else { (m, p) };
            retarded(&p).add(&advanced(&m))
        }
    })
}

/// `∫|v(y′)|² dy′` with `v = Σ_t u h₁`.
pub fn positivity_form(u: &GridSection) -> f64 {
    u.integrate_y1().iter().map(|z| z.norm_sqr()).sum::<f64>() * u.transverse_cell()
}

/// The bilinear evaluation `−i⟨u, Fu⟩` of the same form.
pub fn positivity_bilinear(u: &GridSection) -> Complex64 {
    let fu = apply_model_green(GreenKind::Causal, u).expect("causal kernel has no dimension limit");
    -I * u.inner(&fu)
}

/// `⟨v, Π₊v⟩ ∫dy′` with `v = ∫u dt`.
pub fn model_feynman_positivity(u: &GridSection) -> Result<f64, ModelError> {
    let (p, _) = frequency_split(u)?;
    let v = u.integrate_y1();
    let vp = p.integrate_y1();
    let s: Complex64 = v.iter().zip(&vp).map(|(a, b)| a.conj() * b).sum();
    Ok(s.re * u.transverse_cell())
}

/// `−i⟨u, (E^F − F^adv)u⟩` evaluated through the kernels.
pub fn model_feynman_bilinear(u: &GridSection) -> Result<Complex64, ModelError> {
    let ef = apply_model_green(GreenKind::Feynman, u)?;
    let fa = apply_model_green(GreenKind::Adv, u)?;
    Ok(-I * u.inner(&ef.sub(&fa)))
}

/// Random complex section with independent uniform entries off the margin.
pub fn random_section<R: Rng>(rng: &mut R, shape: Vec<usize>, h: Vec<f64>, rank: usize, margin: usize) -> GridSection {
    let mut s = GridSection::zeros(shape, h, rank, margin);
    let cols = s.columns();
    let n1 = s.shape[0];
    for j in margin..n1.saturating_sub(margin) {
        for z in &mut s.data[j * cols..(j + 1) * cols] {
            *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    s
}

/// Outcome of the randomized positivity sweep.
#[derive(Debug, Clone, Copy)]
pub struct PositivitySweep {
    pub sections: usize,
    pub min_form: f64,
    /// Smallest form over `‖u‖²`.
    pub min_form_rel: f64,
    /// Largest `|form − (−i⟨u,Fu⟩)|` relative to `max(1, form)`.
    pub max_bilinear_gap: f64,
    /// Smallest `⟨v,Π₊v⟩/‖v‖²`.
    pub min_feynman_ratio: f64,
    /// Largest excess of `⟨v,Π₊v⟩` over the full form, relative.
    pub max_feynman_excess: f64,
}

/// Check both positivity statements on `count` random sections of a small grid.
pub fn positivity_sweep<R: Rng>(rng: &mut R, count: usize) -> PositivitySweep {
    let mut out = PositivitySweep {
        sections: count,
        min_form: f64::INFINITY,
        min_form_rel: f64::INFINITY,
        max_bilinear_gap: 0.0,
        min_feynman_ratio: f64::INFINITY,
        max_feynman_excess: 0.0,
    };
    for _ in 0..count {
        let n1 = rng.gen_range(8..20);
        let n2 = rng.gen_range(8..20);
        let rank = rng.gen_range(1..3);
        let h = vec![rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)];
        let u = random_section(rng, vec![n1, n2], h, rank, 1);
        let form = positivity_form(&u);
        let bil = positivity_bilinear(&u);
        let scale = form.max(1.0);
        out.min_form = out.min_form.min(form);
        let norm = u.inner(&u).re;
        if norm > 0.0 {
            out.min_form_rel = out.min_form_rel.min(form / norm);
        }
        out.max_bilinear_gap = out.max_bilinear_gap.max((bil - form).norm() / scale);
        let fp = model_feynman_positivity(&u).expect("n = 2");
        let vnorm = u.integrate_y1().iter().map(|z| z.norm_sqr()).sum::<f64>() * u.transverse_cell();
        if vnorm > 0.0 {
            out.min_feynman_ratio = out.min_feynman_ratio.min(fp / vnorm);
        }
        out.max_feynman_excess = out.max_feynman_excess.max((fp - form) / scale);
    }
    out
}
