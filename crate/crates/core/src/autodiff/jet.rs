//! Second-order forward jets over a handful of input coordinates.
//!
//! A [`ScalarJet2<D>`] carries `f`, `∂f/∂x_i` and `∂²f/∂x_i∂x_j` for `D`
//! tagged inputs. Network outputs evaluated on seeded jets give every
//! derivative the flow residuals need in a single forward pass.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarJet2<const D: usize> {
    pub value: f64,
    pub grad: [f64; D],
    /// Symmetric; every operation writes both triangles.
    pub hess: [[f64; D]; D],
}

/// Number of stored components of a second-order jet: value, `D` first
/// partials and the `D(D+1)/2` upper-triangular second partials.
/// `tanh` through a single `exp`; absolute error stays near `1e-16`.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub const fn jet_components(dim: usize) -> usize {
    1 + dim + dim * (dim + 1) / 2
}

/// Position of `∂²/∂x_i∂x_j` among the upper-triangular pairs
/// `(0,0),(0,1),..,(0,D-1),(1,1),..`.
pub const fn hess_pair_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * dim + 1 - i) / 2 + j - i
}

/// The `(i, j)` pairs in storage order.
pub fn hess_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in i..dim {
            pairs.push((i, j));
        }
    }
    pairs
}

impl<const D: usize> ScalarJet2<D> {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            grad: [0.0; D],
            hess: [[0.0; D]; D],
        }
    }

    /// The coordinate `x_index` itself: unit gradient, zero Hessian.
    pub fn variable(value: f64, index: usize) -> Self {
        let mut jet = Self::constant(value);
        jet.grad[index] = 1.0;
        jet
    }

    /// Seeds one jet per input coordinate.
    pub fn seed(inputs: &[f64]) -> Result<[Self; D]> {
        if !(D == 2 || D == 3) {
            return Err(Error::config(
                "input_dim",
                format!("jets support 2 or 3 input coordinates, got {D}"),
            ));
        }
        if inputs.len() != D {
            return Err(Error::ShapeMismatch(format!(
                "expected {D} input coordinates, got {}",
                inputs.len()
            )));
        }
        Ok(std::array::from_fn(|i| Self::variable(inputs[i], i)))
    }

    /// Component `c` in the layout value, grad..., upper-triangular hess...
    pub fn component(&self, c: usize) -> f64 {
        if c == 0 {
            self.value
        } else if c <= D {
            self.grad[c - 1]
        } else {
            let q = c - 1 - D;
            let (i, j) = hess_pairs(D)[q];
            self.hess[i][j]
        }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    pub fn chain(&self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..D {
            out.grad[i] = df * self.grad[i];
        }
        for i in 0..D {
            for j in i..D {
                let h = df * self.hess[i][j] + d2f * self.grad[i] * self.grad[j];
                out.hess[i][j] = h;
                out.hess[j][i] = h;
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = *self;
        out.value *= k;
        for i in 0..D {
            out.grad[i] *= k;
            for j in 0..D {
                out.hess[i][j] *= k;
            }
        }
        out
    }

    pub fn tanh(&self) -> Self {
        let t = tanh(self.value);
        let s = 1.0 - t * t;
        self.chain(t, s, -2.0 * t * s)
    }

    pub fn recip(&self) -> Result<Self> {
        let x = self.value;
        if x == 0.0 || !x.is_finite() {
            return Err(Error::domain("jet division", "divisor is zero", x));
        }
        Ok(self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)))
    }

    pub fn try_div(&self, rhs: &Self) -> Result<Self> {
        Ok(*self * rhs.recip()?)
    }

    pub fn sqrt(&self) -> Result<Self> {
        let x = self.value;
        if x <= 0.0 || !x.is_finite() {
            return Err(Error::domain("jet sqrt", "argument must be positive", x));
        }
        let r = x.sqrt();
        Ok(self.chain(r, 0.5 / r, -0.25 / (x * r)))
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().flatten().all(|h| h.is_finite())
    }
}

impl<const D: usize> Add for ScalarJet2<D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.value += rhs.value;
        for i in 0..D {
            self.grad[i] += rhs.grad[i];
            for j in 0..D {
                self.hess[i][j] += rhs.hess[i][j];
            }
        }
        self
    }
}

impl<const D: usize> Sub for ScalarJet2<D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<const D: usize> Neg for ScalarJet2<D> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const D: usize> Mul for ScalarJet2<D> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::constant(self.value * rhs.value);
        for i in 0..D {
            out.grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
        }
        for i in 0..D {
            for j in i..D {
                let h = self.hess[i][j] * rhs.value
                    + self.value * rhs.hess[i][j]
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i];
                out.hess[i][j] = h;
                out.hess[j][i] = h;
            }
        }
        out
    }
}

impl<const D: usize> Add<f64> for ScalarJet2<D> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.value += rhs;
        self
    }
}

impl<const D: usize> Mul<f64> for ScalarJet2<D> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}
