//! Scalars for formulas that are evaluated both pointwise (`f64`) and with
//! exact derivatives (`Jet`, a truncated Taylor polynomial in two variables).
//!
//! A `Jet` carries the coefficients of `u^i v^j` for `i + j <= 3` around the
//! expansion point, together with the order up to which those coefficients
//! are valid. Differentiating lowers the valid order by one.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const JET_ORDER: u8 = 3;
const NCOEF: usize = 10;

// (i, j) exponent pairs, graded by total degree.
const MONO: [(usize, usize); NCOEF] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

const fn idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

const fn count(ord: u8) -> usize {
    let d = ord as usize;
    (d + 1) * (d + 2) / 2
}

/// Arithmetic shared by `f64` and `Jet`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(x: f64) -> Self;
    fn value(&self) -> f64;
    /// `g(self)` where `derivs[k]` is the k-th derivative of `g` at `self.value()`.
    fn compose(self, derivs: &[f64]) -> Self;

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.compose(&[e, e, e, e])
    }
    fn ln(self) -> Self {
        let x = self.value();
        self.compose(&[x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)])
    }
    fn powf(self, e: f64) -> Self {
        let x = self.value();
        self.compose(&[
            x.powf(e),
            e * x.powf(e - 1.0),
            e * (e - 1.0) * x.powf(e - 2.0),
            e * (e - 1.0) * (e - 2.0) * x.powf(e - 3.0),
        ])
    }
    fn sqrt(self) -> Self {
        self.powf(0.5)
    }
    fn recip(self) -> Self {
        let x = self.value();
        let r = 1.0 / x;
        self.compose(&[r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }
    fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose(&[s, c, -s, -c])
    }
    fn cos(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose(&[c, -s, -c, s])
    }
    fn tanh(self) -> Self {
        let t = self.value().tanh();
        let d1 = 1.0 - t * t;
        self.compose(&[t, d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0)])
    }
    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }
    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn compose(self, derivs: &[f64]) -> Self {
        derivs[0]
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// Truncated bivariate Taylor polynomial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    c: [f64; NCOEF],
    ord: u8,
}

impl Jet {
    /// The k-th coordinate (0 or 1) seeded at `x`.
    pub fn variable(k: usize, x: f64) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = x;
        c[1 + k.min(1)] = 1.0;
        Jet { c, ord: JET_ORDER }
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if (i + j) as u8 > self.ord {
            f64::NAN
        } else {
            self.c[idx(i, j)]
        }
    }

    pub fn order(&self) -> u8 {
        self.ord
    }

    pub fn truncated(mut self, ord: u8) -> Self {
        let ord = ord.min(self.ord);
        for k in count(ord)..NCOEF {
            self.c[k] = 0.0;
        }
        self.ord = ord;
        self
    }

    /// First partial derivatives.
    pub fn d0(&self) -> f64 {
        self.coeff(1, 0)
    }
    pub fn d1(&self) -> f64 {
        self.coeff(0, 1)
    }
    pub fn d00(&self) -> f64 {
        2.0 * self.coeff(2, 0)
    }
    pub fn d01(&self) -> f64 {
        self.coeff(1, 1)
    }
    pub fn d11(&self) -> f64 {
        2.0 * self.coeff(0, 2)
    }

    /// Partial derivative in the k-th coordinate, valid to one order less.
    pub fn diff(&self, k: usize) -> Jet {
        if self.ord == 0 {
            return Jet { c: [f64::NAN; NCOEF], ord: 0 };
        }
        let ord = self.ord - 1;
        let mut c = [0.0; NCOEF];
        for (m, &(i, j)) in MONO.iter().enumerate().take(count(ord)) {
            let (src, fac) = if k == 0 {
                (idx(i + 1, j), (i + 1) as f64)
            } else {
                (idx(i, j + 1), (j + 1) as f64)
            };
            c[m] = fac * self.c[src];
        }
        Jet { c, ord }
    }
}

impl Scalar for Jet {
    fn constant(x: f64) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = x;
        Jet { c, ord: JET_ORDER }
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn compose(self, derivs: &[f64]) -> Self {
        let avail = (derivs.len().saturating_sub(1)) as u8;
        let ord = self.ord.min(avail);
        let mut delta = self.truncated(ord);
        delta.c[0] = 0.0;
        let mut out = Jet::constant(derivs[0]).truncated(ord);
        let mut pow = delta;
        let mut fact = 1.0;
        for (k, &dk) in derivs.iter().enumerate().take(ord as usize + 1).skip(1) {
            fact *= k as f64;
            out = out + pow * (dk / fact);
            pow = pow * delta;
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let mut c = [0.0; NCOEF];
        for (k, ck) in c.iter_mut().enumerate().take(count(ord)) {
            *ck = self.c[k] + o.c[k];
        }
        Jet { c, ord }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for ck in self.c.iter_mut() {
            *ck = -*ck;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let n = count(ord);
        let mut c = [0.0; NCOEF];
        for a in 0..n {
            let (i1, j1) = MONO[a];
            let ca = self.c[a];
            if ca == 0.0 {
                continue;
            }
            for b in 0..n {
                let (i2, j2) = MONO[b];
                if ((i1 + i2 + j1 + j2) as u8) > ord {
                    continue;
                }
                c[idx(i1 + i2, j1 + j2)] += ca * o.c[b];
            }
        }
        Jet { c, ord }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, x: f64) -> Jet {
        self.c[0] += x;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, x: f64) -> Jet {
        self.c[0] -= x;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, x: f64) -> Jet {
        for ck in self.c.iter_mut() {
            *ck *= x;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, x: f64) -> Jet {
        self * (1.0 / x)
    }
}
