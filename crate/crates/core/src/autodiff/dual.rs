//! First-order dual numbers with a fixed number of directions, and the small
//! scalar trait the residual operators are written against.
//!
//! Residuals are evaluated with `f64` for reporting and with [`Dual<N>`] when
//! training needs the derivative of a squared residual with respect to the
//! network's output jet components.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn scale(self, k: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn var(v: f64, index: usize) -> Self {
        let mut d = [0.0; N];
        d[index] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn map_d(v: f64, a: &[f64; N], ka: f64, b: &[f64; N], kb: f64) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = ka * a[i] + kb * b[i];
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::map_d(self.v + rhs.v, &self.d, 1.0, &rhs.d, 1.0)
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::map_d(self.v - rhs.v, &self.d, 1.0, &rhs.d, -1.0)
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::map_d(self.v * rhs.v, &self.d, rhs.v, &rhs.d, self.v)
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let q = self.v * inv;
        Self::map_d(q, &self.d, inv, &rhs.d, -q * inv)
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(x: f64) -> Self {
        Self { v: x, d: [0.0; N] }
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let k = 0.5 / r;
        let mut d = self.d;
        d.iter_mut().for_each(|x| *x *= k);
        Self { v: r, d }
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        let mut d = self.d;
        d.iter_mut().for_each(|x| *x *= k);
        Self { v: self.v * k, d }
    }
}

/// Fixed-size vector helpers generic over [`Real`].
pub mod vec {
    use super::Real;

    #[inline]
    pub fn dot<T: Real, const K: usize>(a: &[T; K], b: &[T; K]) -> T {
        let mut s = a[0] * b[0];
        for i in 1..K {
            s = s + a[i] * b[i];
        }
        s
    }

    #[inline]
    pub fn axpy<T: Real, const K: usize>(k: T, x: &[T; K], y: &[T; K]) -> [T; K] {
        std::array::from_fn(|i| k * x[i] + y[i])
    }

    #[inline]
    pub fn scale<T: Real, const K: usize>(k: T, x: &[T; K]) -> [T; K] {
        std::array::from_fn(|i| k * x[i])
    }

    #[inline]
    pub fn add<T: Real, const K: usize>(a: &[T; K], b: &[T; K]) -> [T; K] {
        std::array::from_fn(|i| a[i] + b[i])
    }

    #[inline]
    pub fn sub<T: Real, const K: usize>(a: &[T; K], b: &[T; K]) -> [T; K] {
        std::array::from_fn(|i| a[i] - b[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_and_sqrt_derivatives() {
        let x = Dual::<2>::var(2.0, 0);
        let y = Dual::<2>::var(5.0, 1);
        let q = x / y;
        assert_eq!(q.v, 0.4);
        assert!((q.d[0] - 0.2).abs() < 1e-15);
        assert!((q.d[1] + 2.0 / 25.0).abs() < 1e-15);

        let r = (x * y).sqrt();
        let expect = 0.5 / 10f64.sqrt();
        assert!((r.d[0] - expect * 5.0).abs() < 1e-14);
        assert!((r.d[1] - expect * 2.0).abs() < 1e-14);
    }
}
