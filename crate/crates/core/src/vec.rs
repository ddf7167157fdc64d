//! Frame-tagged 3-vectors.
//!
//! Fixture math runs in the normalized unit workspace, the scene in meters.
//! Tagging the frame in the type makes mixing the two a compile error;
//! conversion goes through [`crate::scene::Workspace`].

use core::fmt;
use core::marker::PhantomData;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math;

pub trait Frame: Copy + Default + fmt::Debug + PartialEq + 'static {
    const NAME: &'static str;
}

/// Scene frame: meters, `z` up, camera looking down `-z`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Scene;

/// Normalized workspace frame: each axis mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Normalized;

impl Frame for Scene {
    const NAME: &'static str = "scene";
}

impl Frame for Normalized {
    const NAME: &'static str = "normalized";
}

pub struct Vec3<F: Frame> {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    frame: PhantomData<F>,
}

impl<F: Frame> Vec3<F> {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            frame: PhantomData,
        }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_squared())
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > 1e-15 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    /// Component-wise product.
    pub fn hadamard(self, o: Self) -> Self {
        Self::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Moves toward `target` by at most `max_step`.
    pub fn step_toward(self, target: Self, max_step: f64) -> Self {
        let delta = target - self;
        let dist = delta.norm();
        if dist <= max_step || dist == 0.0 {
            target
        } else {
            self + delta * (max_step / dist)
        }
    }
}

impl<F: Frame> Clone for Vec3<F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F: Frame> Copy for Vec3<F> {}

impl<F: Frame> Default for Vec3<F> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<F: Frame> PartialEq for Vec3<F> {
    fn eq(&self, o: &Self) -> bool {
        self.x == o.x && self.y == o.y && self.z == o.z
    }
}

impl<F: Frame> fmt::Debug for Vec3<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {}, {})", F::NAME, self.x, self.y, self.z)
    }
}

impl<F: Frame> Add for Vec3<F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<F: Frame> AddAssign for Vec3<F> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<F: Frame> Sub for Vec3<F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<F: Frame> SubAssign for Vec3<F> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<F: Frame> Mul<f64> for Vec3<F> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<F: Frame> Neg for Vec3<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<F: Frame> Serialize for Vec3<F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de, F: Frame> Deserialize<'de> for Vec3<F> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[f64; 3]>::deserialize(d).map(Self::from_array)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_toward_caps_distance() {
        let a = Vec3::<Scene>::zero();
        let b = Vec3::new(3.0, 4.0, 0.0);
        let c = a.step_toward(b, 1.0);
        assert!((c.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.step_toward(b, 10.0), b);
    }

    #[test]
    fn cross_is_orthogonal() {
        let a = Vec3::<Normalized>::new(1.0, 2.0, 3.0);
        let b = Vec3::new(-2.0, 0.5, 1.0);
        let c = a.cross(b);
        assert!(c.dot(a).abs() < 1e-12);
        assert!(c.dot(b).abs() < 1e-12);
    }
}
