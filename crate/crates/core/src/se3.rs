//! Rigid-body pose algebra.
//!
//! Rotations are unit quaternions kept on the `w >= 0` half of the double
//! cover and renormalized after every composition. Matrices are computed on
//! demand only.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Below this norm a direction vector is treated as zero.
pub const MIN_DIRECTION_NORM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("direction vector has norm {0:e}, too small to define an axis")]
    ZeroVector(f64),
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
}

pub type Vec3 = Vector3<f64>;

/// Unit-quaternion rotation, canonicalized so that `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw `(w, x, y, z)` components, normalizing them.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self, Se3Error> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Se3Error::ZeroQuaternion);
        }
        Ok(Self::canonical(Unit::new_normalize(q)))
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self, Se3Error> {
        let n = axis.norm();
        if n <= MIN_DIRECTION_NORM {
            return Err(Se3Error::ZeroVector(n));
        }
        let axis = Unit::new_unchecked(axis / n);
        Ok(Self::canonical(UnitQuaternion::from_axis_angle(&axis, angle)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self::canonical(q)
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        // renormalize to keep drift out of long composition chains
        let mut raw = q.into_inner();
        raw /= raw.norm();
        if raw.w < 0.0 {
            raw = -raw;
        }
        Rotation(Unit::new_unchecked(raw))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.as_ref();
        [q.w, q.i, q.j, q.k]
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::canonical(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Self::canonical(self.0.inverse())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.0.angle()
    }

    /// Angle of the relative rotation between `self` and `other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }

    pub fn matrix(&self) -> nalgebra::Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rigid transform: `x -> R x + p`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Rotation::identity(), Vec3::new(x, y, z))
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Pose::new(rotation, Vec3::zeros())
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// 4x4 homogeneous matrix.
    pub fn matrix(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// `a * b` as homogeneous transforms.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation.compose(&b.rotation),
        translation: a.rotation.apply(&b.translation) + a.translation,
    }
}

pub fn inverse(a: &Pose) -> Pose {
    let r_inv = a.rotation.inverse();
    Pose {
        rotation: r_inv,
        translation: -r_inv.apply(&a.translation),
    }
}

/// `target` expressed in the frame of `base`, i.e. `inverse(base) * target`.
pub fn relative(base: &Pose, target: &Pose) -> Pose {
    compose(&inverse(base), target)
}

/// Minimal-angle rotation taking `from_axis` onto the direction of `to_vector`.
///
/// When the two are anti-parallel the rotation is half a turn about the
/// canonical axis least aligned with `from_axis` (lowest index on ties),
/// orthogonalized against it. For `from_axis = z` that axis is `x`.
pub fn align_axis(from_axis: &Vec3, to_vector: &Vec3) -> Result<Rotation, Se3Error> {
    let to_norm = to_vector.norm();
    if to_norm <= MIN_DIRECTION_NORM {
        return Err(Se3Error::ZeroVector(to_norm));
    }
    let from_norm = from_axis.norm();
    if from_norm <= MIN_DIRECTION_NORM {
        return Err(Se3Error::ZeroVector(from_norm));
    }
    let u = from_axis / from_norm;
    let v = to_vector / to_norm;
    let d = u.dot(&v);

    if 1.0 + d < 1e-12 {
        let axis = antiparallel_axis(&u);
        return Rotation::from_axis_angle(&axis, std::f64::consts::PI);
    }
    // half-angle quaternion (1 + u.v, u x v), normalized
    let c = u.cross(&v);
    Rotation::from_wxyz(1.0 + d, c.x, c.y, c.z)
}

fn antiparallel_axis(u: &Vec3) -> Vec3 {
    let mut best = 0;
    for i in 1..3 {
        if u[i].abs() < u[best].abs() {
            best = i;
        }
    }
    let mut e = Vec3::zeros();
    e[best] = 1.0;
    let axis = e - u * u.dot(&e);
    axis / axis.norm()
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    q: [f64; 4],
    p: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            q: self.rotation.wxyz(),
            p: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let [w, x, y, z] = repr.q;
        let rotation = Rotation::from_wxyz(w, x, y, z).map_err(serde::de::Error::custom)?;
        Ok(Pose::new(rotation, Vec3::new(repr.p[0], repr.p[1], repr.p[2])))
    }
}

impl Serialize for Rotation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.wxyz().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(deserializer)?;
        Rotation::from_wxyz(w, x, y, z).map_err(serde::de::Error::custom)
    }
}
