use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::scalar::{AdScalar, Real};

/// Upper bound on the number of calibration parameters a tangent can track.
pub const MAX_PARAMS: usize = 20;

/// Forward-mode dual number: a value plus its partial derivatives with
/// respect to the seeded calibration parameters.
///
/// The tangent lives inline so `Dual` is `Copy`. Only the first `len`
/// entries are active and every entry at or beyond `len` is zero, so a
/// constant (`len == 0`) costs no tangent arithmetic at all. A tangent
/// shorter than the parameter dimension reads as zero-padded.
#[derive(Clone, Copy)]
pub struct Dual<T: Real> {
    value: T,
    len: u8,
    tangent: [T; MAX_PARAMS],
}

impl<T: Real> Dual<T> {
    /// A value with zero tangent.
    #[inline]
    pub fn constant(value: T) -> Self {
        Dual { value, len: 0, tangent: [T::zero(); MAX_PARAMS] }
    }

    pub fn new(value: T, tangent: &[T]) -> Result<Self> {
        if tangent.len() > MAX_PARAMS {
            return Err(Error::InvalidDimension(tangent.len()));
        }
        let mut d = Self::constant(value);
        d.tangent[..tangent.len()].copy_from_slice(tangent);
        d.len = tangent.len() as u8;
        Ok(d)
    }

    /// The `index`-th independent variable out of `dim`, tangent `e_index`.
    pub fn variable(value: T, index: usize, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_PARAMS || index >= dim {
            return Err(Error::InvalidDimension(dim));
        }
        let mut d = Self::constant(value);
        d.tangent[index] = T::one();
        d.len = dim as u8;
        Ok(d)
    }

    #[inline]
    pub fn value(&self) -> T {
        self.value
    }

    /// Active tangent entries (may be shorter than the parameter dimension).
    #[inline]
    pub fn tangent(&self) -> &[T] {
        &self.tangent[..self.len as usize]
    }

    #[inline]
    pub fn partial(&self, i: usize) -> T {
        if i < MAX_PARAMS {
            self.tangent[i]
        } else {
            T::zero()
        }
    }

    /// Tangent zero-padded to `n` entries.
    pub fn gradient(&self, n: usize) -> Vec<T> {
        (0..n).map(|i| self.partial(i)).collect()
    }

    /// Drops the tangent, keeping the value.
    #[inline]
    pub fn detach(&self) -> Self {
        Self::constant(self.value)
    }

    #[inline]
    fn unary(self, value: T, deriv: T) -> Self {
        let mut out = Self::constant(value);
        out.len = self.len;
        for i in 0..self.len as usize {
            out.tangent[i] = deriv * self.tangent[i];
        }
        out
    }

    #[inline]
    fn binary(a: &Self, b: &Self, value: T, da: T, db: T) -> Self {
        let mut out = Self::constant(value);
        let len = a.len.max(b.len);
        out.len = len;
        for i in 0..len as usize {
            out.tangent[i] = da * a.tangent[i] + db * b.tangent[i];
        }
        out
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Self {
        self.unary(self.value.ln(), self.value.recip())
    }

    /// Square root; the tangent at zero is infinite (use [`Dual::checked_sqrt`]).
    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, T::lit(0.5) / s)
    }

    pub fn recip(self) -> Self {
        let r = self.value.recip();
        self.unary(r, -r * r)
    }

    pub fn powi(self, n: i32) -> Self {
        let p = self.value.powi(n);
        let d = T::from_i32(n).unwrap() * self.value.powi(n - 1);
        self.unary(p, d)
    }

    pub fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, T::one() - t * t)
    }

    /// Division that reports a zero denominator instead of producing infinities.
    pub fn checked_div(self, rhs: Self, site: &'static str) -> Result<Self> {
        if rhs.value == T::zero() {
            return Err(Error::Arithmetic { site, reason: "division by zero" });
        }
        Ok(self / rhs)
    }

    pub fn checked_sqrt(self, site: &'static str) -> Result<Self> {
        if self.value < T::zero() {
            return Err(Error::Arithmetic { site, reason: "square root of negative value" });
        }
        if self.value == T::zero() && self.len > 0 {
            return Err(Error::Arithmetic { site, reason: "square root derivative at zero" });
        }
        Ok(self.sqrt())
    }
}

impl<T: Real> Default for Dual<T> {
    fn default() -> Self {
        Self::constant(T::zero())
    }
}

impl<T: Real> From<T> for Dual<T> {
    fn from(v: T) -> Self {
        Self::constant(v)
    }
}

impl<T: Real> fmt::Debug for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dual").field("value", &self.value).field("tangent", &self.tangent()).finish()
    }
}

impl<T: Real> fmt::Display for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.value, self.tangent())
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::binary(&self, &rhs, self.value + rhs.value, T::one(), T::one())
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::binary(&self, &rhs, self.value - rhs.value, T::one(), -T::one())
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::binary(&self, &rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.value.recip();
        let q = self.value * inv;
        Self::binary(&self, &rhs, q, inv, -q * inv)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.value, -T::one())
    }
}

impl<T: Real> Add<T> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: T) -> Self {
        self.value += rhs;
        self
    }
}

impl<T: Real> Sub<T> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: T) -> Self {
        self.value -= rhs;
        self
    }
}

impl<T: Real> Mul<T> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: T) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<T: Real> Div<T> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: T) -> Self {
        let inv = rhs.recip();
        self.unary(self.value * inv, inv)
    }
}

impl<T: Real> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Real> std::iter::Sum for Dual<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::constant(T::zero()), |a, b| a + b)
    }
}

impl<T: Real> AdScalar for Dual<T> {
    type Base = T;

    #[inline]
    fn constant(v: T) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(&self) -> T {
        self.value
    }
    #[inline]
    fn tangent(&self) -> &[T] {
        Dual::tangent(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Dual::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        Dual::sqrt(self)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::ln(self)
    }
}

/// Seeds the calibration parameters as independent variables: element `i`
/// carries value `theta[i]` and tangent `e_i`.
pub fn seed_parameters<T: Real>(theta: &[T]) -> Result<Vec<Dual<T>>> {
    let n = theta.len();
    if n == 0 || n > MAX_PARAMS {
        return Err(Error::InvalidDimension(n));
    }
    theta.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, n)).collect()
}

/// Parameters as constants (no tangent work), for derivative-free evaluation.
pub fn constant_parameters<T: Real>(theta: &[T]) -> Vec<Dual<T>> {
    theta.iter().map(|&v| Dual::constant(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeding_assigns_unit_tangents() {
        let d = seed_parameters(&[2.0_f64]).unwrap();
        assert_eq!(d[0].value(), 2.0);
        assert_eq!(d[0].tangent(), &[1.0]);

        let d = seed_parameters(&[0.6_f64, 5.5, 5.5]).unwrap();
        for (i, x) in d.iter().enumerate() {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            assert_eq!(x.tangent(), e.as_slice());
        }
        assert_eq!(d[1].value(), 5.5);

        let d = seed_parameters(&[0.05_f64; 20]).unwrap();
        assert_eq!(d.len(), 20);
        assert!(d.iter().enumerate().all(|(i, x)| x.gradient(20)[i] == 1.0 && x.tangent().iter().sum::<f64>() == 1.0));
    }

    #[test]
    fn seeding_rejects_empty_and_oversized() {
        assert!(matches!(seed_parameters::<f64>(&[]), Err(Error::InvalidDimension(0))));
        assert!(matches!(seed_parameters(&[0.0_f64; 21]), Err(Error::InvalidDimension(21))));
    }

    #[test]
    fn elementary_rules() {
        let x = Dual::new(3.0_f64, &[1.0]).unwrap();
        let sq = x * x;
        assert_eq!(sq.value(), 9.0);
        assert_eq!(sq.tangent(), &[6.0]);

        let e = Dual::new(0.0_f64, &[1.0]).unwrap().exp();
        assert_eq!(e.value(), 1.0);
        assert_eq!(e.tangent(), &[1.0]);
    }

    #[test]
    fn sum_of_two_variables_squared() {
        let a = Dual::new(1.0_f64, &[1.0, 0.0]).unwrap();
        let b = Dual::new(2.0_f64, &[0.0, 1.0]).unwrap();
        let s = (a + b) * (a + b);
        assert_eq!(s.value(), 9.0);
        // central differences, h = 1e-6
        let f = |x: f64, y: f64| (x + y) * (x + y);
        let h = 1e-6;
        let dx = (f(1.0 + h, 2.0) - f(1.0 - h, 2.0)) / (2.0 * h);
        let dy = (f(1.0, 2.0 + h) - f(1.0, 2.0 - h)) / (2.0 * h);
        assert!((s.tangent()[0] - dx).abs() < 1e-6 && (dx - 6.0).abs() < 1e-6);
        assert!((s.tangent()[1] - dy).abs() < 1e-6 && (dy - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constants_mix_with_variables() {
        let x = Dual::variable(2.0_f64, 1, 3).unwrap();
        let c = Dual::constant(5.0);
        let y = c * x + c;
        assert_eq!(y.value(), 15.0);
        assert_eq!(y.gradient(3), vec![0.0, 5.0, 0.0]);
        assert_eq!((c * c).tangent(), &[] as &[f64]);
    }

    #[test]
    fn checked_division_reports_site() {
        let a = Dual::new(1.0_f64, &[1.0]).unwrap();
        let z = Dual::constant(0.0);
        match a.checked_div(z, "unit-test") {
            Err(Error::Arithmetic { site, .. }) => assert_eq!(site, "unit-test"),
            other => panic!("expected arithmetic error, got {other:?}"),
        }
        assert!(a.checked_sqrt("s").is_ok());
        assert!((-a).checked_sqrt("s").is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let x = Dual::new(3.0_f32, &[1.0]).unwrap();
        let y = (x * x).sqrt();
        assert!((y.tangent()[0] - 1.0).abs() < 1e-6);
    }
}
