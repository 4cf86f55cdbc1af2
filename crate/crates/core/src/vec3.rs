//! Minimal 3-vector generic over the scalar type, so the same geometry code
//! runs on `f64` and on tape variables.

use crate::autodiff::Real;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    pub fn splat_f64(v: [f64; 3]) -> Self {
        Vec3([T::constant(v[0]), T::constant(v[1]), T::constant(v[2])])
    }

    pub fn x(&self) -> T {
        self.0[0]
    }
    pub fn y(&self) -> T {
        self.0[1]
    }
    pub fn z(&self) -> T {
        self.0[2]
    }

    pub fn dot(self, o: Vec3<T>) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(self, o: Vec3<T>) -> Vec3<T> {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    /// Unit vector; caller must have checked the norm is safely nonzero.
    pub fn normalized(self) -> Vec3<T> {
        let n = self.norm();
        Vec3([self.0[0] / n, self.0[1] / n, self.0[2] / n])
    }

    pub fn scale(self, c: f64) -> Vec3<T> {
        Vec3([self.0[0] * c, self.0[1] * c, self.0[2] * c])
    }

    pub fn scale_t(self, c: T) -> Vec3<T> {
        Vec3([self.0[0] * c, self.0[1] * c, self.0[2] * c])
    }

    /// Primal values, for branching and diagnostics.
    pub fn values(&self) -> [f64; 3] {
        [self.0[0].value(), self.0[1].value(), self.0[2].value()]
    }

    pub fn zero() -> Self {
        Vec3([T::zero(), T::zero(), T::zero()])
    }
}

impl Vec3<f64> {
    pub fn distance(self, o: Vec3<f64>) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Vec3<T>;
    fn add(self, o: Vec3<T>) -> Vec3<T> {
        Vec3([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
        ])
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Vec3<T>;
    fn sub(self, o: Vec3<T>) -> Vec3<T> {
        Vec3([
            self.0[0] - o.0[0],
            self.0[1] - o.0[1],
            self.0[2] - o.0[2],
        ])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Vec3<T>;
    fn neg(self) -> Vec3<T> {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Vec3<T>;
    fn mul(self, c: T) -> Vec3<T> {
        self.scale_t(c)
    }
}
