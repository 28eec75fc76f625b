//! Complex expressions (pairs of real trees) and square matrices of them.

use num_complex::Complex64;

use crate::expr::{differentiate, eval_raw, num, Expr};
use crate::linalg::CMat;

/// `re + i·im` with both parts real expression trees.
#[derive(Debug, Clone, PartialEq)]
pub struct CExpr {
    pub re: Expr,
    pub im: Expr,
}

impl CExpr {
    pub fn zero() -> Self {
        CExpr::real(num(0.0))
    }

    pub fn one() -> Self {
        CExpr::real(num(1.0))
    }

    pub fn real(re: Expr) -> Self {
        CExpr { re, im: num(0.0) }
    }

    pub fn imag(im: Expr) -> Self {
        CExpr { re: num(0.0), im }
    }

    pub fn constant(z: Complex64) -> Self {
        CExpr {
            re: num(z.re),
            im: num(z.im),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, o: &CExpr) -> CExpr {
        CExpr {
            re: self.re.clone().add(o.re.clone()),
            im: self.im.clone().add(o.im.clone()),
        }
    }

    pub fn sub(&self, o: &CExpr) -> CExpr {
        CExpr {
            re: self.re.clone().sub(o.re.clone()),
            im: self.im.clone().sub(o.im.clone()),
        }
    }

    pub fn neg(&self) -> CExpr {
        CExpr {
            re: self.re.clone().neg(),
            im: self.im.clone().neg(),
        }
    }

    pub fn mul(&self, o: &CExpr) -> CExpr {
        let (a, b, c, d) = (&self.re, &self.im, &o.re, &o.im);
        CExpr {
            re: a.clone().mul(c.clone()).sub(b.clone().mul(d.clone())),
            im: a.clone().mul(d.clone()).add(b.clone().mul(c.clone())),
        }
    }

    pub fn scale_real(&self, e: &Expr) -> CExpr {
        CExpr {
            re: self.re.clone().mul(e.clone()),
            im: self.im.clone().mul(e.clone()),
        }
    }

    pub fn scale(&self, z: Complex64) -> CExpr {
        self.mul(&CExpr::constant(z))
    }

    /// Multiply by `i`.
    pub fn times_i(&self) -> CExpr {
        CExpr {
            re: self.im.clone().neg(),
            im: self.re.clone(),
        }
    }

    pub fn conj(&self) -> CExpr {
        CExpr {
            re: self.re.clone(),
            im: self.im.clone().neg(),
        }
    }

    /// `1/z = z̄/|z|²`.
    pub fn recip(&self) -> CExpr {
        if self.im.is_zero() {
            return CExpr::real(num(1.0).div(self.re.clone()));
        }
        let m2 = self.re.clone().powi(2).add(self.im.clone().powi(2));
        CExpr {
            re: self.re.clone().div(m2.clone()),
            im: self.im.clone().neg().div(m2),
        }
    }

    pub fn diff(&self, slot: usize) -> CExpr {
        CExpr {
            re: differentiate(&self.re, slot),
            im: differentiate(&self.im, slot),
        }
    }

    pub fn eval(&self, slots: &[f64]) -> Complex64 {
        Complex64::new(eval_raw(&self.re, slots), eval_raw(&self.im, slots))
    }

    pub fn substitute(&self, map: &[Option<Expr>]) -> CExpr {
        CExpr {
            re: self.re.substitute(map),
            im: self.im.substitute(map),
        }
    }

    pub fn size(&self) -> usize {
        self.re.size() + self.im.size()
    }
}

/// Square `n×n` matrix of complex expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CExprMat {
    pub n: usize,
    pub data: Vec<CExpr>,
}

impl CExprMat {
    pub fn zeros(n: usize) -> Self {
        CExprMat {
            n,
            data: vec![CExpr::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, &CExpr::one())
    }

    /// `s·𝟙`.
    pub fn scalar(n: usize, s: &CExpr) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = s.clone();
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> CExpr) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        CExprMat { n, data }
    }

    pub fn from_constant(m: &CMat) -> Self {
        Self::from_fn(m.nrows(), |i, j| CExpr::constant(m[(i, j)]))
    }

    pub fn get(&self, i: usize, j: usize) -> &CExpr {
        &self.data[i * self.n + j]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(CExpr::is_zero)
    }

    fn zip(&self, o: &CExprMat, f: impl Fn(&CExpr, &CExpr) -> CExpr) -> CExprMat {
        assert_eq!(self.n, o.n, "matrix rank mismatch");
        CExprMat {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(a, b)).collect(),
        }
    }

    fn map(&self, f: impl Fn(&CExpr) -> CExpr) -> CExprMat {
        CExprMat {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn add(&self, o: &CExprMat) -> CExprMat {
        self.zip(o, CExpr::add)
    }

    pub fn sub(&self, o: &CExprMat) -> CExprMat {
        self.zip(o, CExpr::sub)
    }

    pub fn neg(&self) -> CExprMat {
        self.map(CExpr::neg)
    }

    pub fn mul(&self, o: &CExprMat) -> CExprMat {
        assert_eq!(self.n, o.n, "matrix rank mismatch");
        let n = self.n;
        CExprMat::from_fn(n, |i, j| {
            let mut acc = CExpr::zero();
            for k in 0..n {
                let a = self.get(i, k);
                let b = o.get(k, j);
                if !a.is_zero() && !b.is_zero() {
                    acc = acc.add(&a.mul(b));
                }
            }
            acc
        })
    }

    pub fn scale(&self, s: &CExpr) -> CExprMat {
        self.map(|e| e.mul(s))
    }

    pub fn scale_real(&self, e: &Expr) -> CExprMat {
        self.map(|c| c.scale_real(e))
    }

    pub fn times_i(&self) -> CExprMat {
        self.map(CExpr::times_i)
    }

    pub fn adjoint(&self) -> CExprMat {
        CExprMat::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn diff(&self, slot: usize) -> CExprMat {
        self.map(|e| e.diff(slot))
    }

    pub fn substitute(&self, map: &[Option<Expr>]) -> CExprMat {
        self.map(|e| e.substitute(map))
    }

    pub fn eval(&self, slots: &[f64]) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.get(i, j).eval(slots))
    }

    pub fn size(&self) -> usize {
        self.data.iter().map(CExpr::size).sum()
    }
}
