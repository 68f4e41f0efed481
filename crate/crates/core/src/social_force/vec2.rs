use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::scalar::AdScalar;

/// 2-D vector over any [`AdScalar`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2<S> {
    pub x: S,
    pub y: S,
}

impl<S: AdScalar> Vec2<S> {
    #[inline]
    pub fn new(x: S, y: S) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec2 { x: S::zero(), y: S::zero() }
    }

    #[inline]
    pub fn constant(x: S::Base, y: S::Base) -> Self {
        Vec2 { x: S::constant(x), y: S::constant(y) }
    }

    #[inline]
    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// Euclidean norm; exactly zero (with zero tangent) for the zero vector so
    /// the square-root derivative never blows up.
    #[inline]
    pub fn norm(self) -> S {
        let sq = self.dot(self);
        if sq.value() == <S::Base as num_traits::Zero>::zero() {
            S::zero()
        } else {
            sq.sqrt()
        }
    }

    #[inline]
    pub fn scale(self, k: S) -> Self {
        Vec2 { x: self.x * k, y: self.y * k }
    }

    #[inline]
    pub fn scale_by(self, k: S::Base) -> Self {
        Vec2 { x: self.x * k, y: self.y * k }
    }

    #[inline]
    pub fn div(self, k: S) -> Self {
        Vec2 { x: self.x / k, y: self.y / k }
    }

    #[inline]
    pub fn values(self) -> Vec2<S::Base> {
        Vec2 { x: self.x.value(), y: self.y.value() }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<S: AdScalar> Add for Vec2<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec2 { x: self.x + o.x, y: self.y + o.y }
    }
}

impl<S: AdScalar> AddAssign for Vec2<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<S: AdScalar> Sub for Vec2<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec2 { x: self.x - o.x, y: self.y - o.y }
    }
}

impl<S: AdScalar> Neg for Vec2<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec2 { x: -self.x, y: -self.y }
    }
}

impl<S: AdScalar> Mul<S> for Vec2<S> {
    type Output = Self;
    #[inline]
    fn mul(self, k: S) -> Self {
        self.scale(k)
    }
}

/// Lifts a constant point into `S`.
#[inline]
pub fn lift<S: AdScalar>(p: Vec2<S::Base>) -> Vec2<S> {
    Vec2 { x: S::constant(p.x), y: S::constant(p.y) }
}
