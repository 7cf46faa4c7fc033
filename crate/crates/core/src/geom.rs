//! Small fixed-size 3D math: vectors, rotations and similarity poses.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared distance, computed as `dx*dx + dy*dy + dz*dz` in that order.
    /// Every nearest-neighbor path uses this exact expression so that indexed
    /// and exhaustive searches agree bit for bit.
    #[inline]
    pub fn dist_sq(self, o: Vec3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(self, o: Vec3) -> f64 {
        self.dist_sq(o).sqrt()
    }

    /// Unit vector, or `None` when the norm is below `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        if n < eps || !n.is_finite() {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn get(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn centroid(points: &[Vec3]) -> Vec3 {
        if points.is_empty() {
            return Vec3::ZERO;
        }
        let mut acc = Vec3::ZERO;
        for p in points {
            acc += *p;
        }
        acc / points.len() as f64
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, axis: usize) -> &f64 {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// A 3×3 rotation matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub m: [[f64; 3]; 3],
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds the matrix whose columns are the given axes.
    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Rotation {
        Rotation {
            m: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]],
        }
    }

    pub fn column(&self, c: usize) -> Vec3 {
        Vec3::new(self.m[0][c], self.m[1][c], self.m[2][c])
    }

    /// Rodrigues rotation about `axis` (normalized internally) by `angle` radians.
    pub fn about_axis(axis: Vec3, angle: f64) -> Rotation {
        let Some(k) = axis.normalized(1e-300) else {
            return Rotation::IDENTITY;
        };
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation {
            m: [
                [t * k.x * k.x + c, t * k.x * k.y - s * k.z, t * k.x * k.z + s * k.y],
                [t * k.x * k.y + s * k.z, t * k.y * k.y + c, t * k.y * k.z - s * k.x],
                [t * k.x * k.z - s * k.y, t * k.y * k.z + s * k.x, t * k.z * k.z + c],
            ],
        }
    }

    pub fn from_axis_angle(v: Vec3) -> Rotation {
        let angle = v.norm();
        if angle < 1e-300 {
            Rotation::IDENTITY
        } else {
            Rotation::about_axis(v, angle)
        }
    }

    /// Logarithm map: axis scaled by angle in `[0, π]`.
    pub fn to_axis_angle(&self) -> Vec3 {
        let m = &self.m;
        let trace = m[0][0] + m[1][1] + m[2][2];
        let cos = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
        let angle = cos.acos();
        let w = Vec3::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]);
        if angle < 1e-9 {
            return w * 0.5;
        }
        if std::f64::consts::PI - angle < 1e-6 {
            // Near π the antisymmetric part vanishes; recover the axis from the
            // symmetric part instead.
            let diag = [m[0][0], m[1][1], m[2][2]];
            let i = (0..3)
                .max_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap())
                .unwrap();
            let mut axis = [0.0; 3];
            axis[i] = ((diag[i] - cos) / (1.0 - cos)).max(0.0).sqrt();
            for j in 0..3 {
                if j != i {
                    axis[j] = (m[i][j] + m[j][i]) / (2.0 * (1.0 - cos) * axis[i]);
                }
            }
            let mut a = Vec3::from_array(axis);
            if a.dot(w) < 0.0 {
                a = -a;
            }
            return a.normalized(1e-300).unwrap_or(Vec3::X) * angle;
        }
        w * (angle / (2.0 * angle.sin()))
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn apply_transpose(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul(&self, o: &Rotation) -> Rotation {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[r][k] * o.m[k][c]).sum();
            }
        }
        Rotation { m: out }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max absolute entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut err: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let target = if r == c { 1.0 } else { 0.0 };
                err = err.max((p.m[r][c] - target).abs());
            }
        }
        err
    }

    pub fn max_abs_diff(&self, o: &Rotation) -> f64 {
        let mut err: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                err = err.max((self.m[r][c] - o.m[r][c]).abs());
            }
        }
        err
    }

    pub fn flatten(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }
}

/// Similarity transform `p ↦ scale · R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Rotation::IDENTITY,
        translation: Vec3::ZERO,
        scale: 1.0,
    };

    pub fn new(rotation: Rotation, translation: Vec3, scale: f64) -> Pose {
        debug_assert!(scale > 0.0);
        Pose {
            rotation,
            translation,
            scale,
        }
    }

    pub fn translation(t: Vec3) -> Pose {
        Pose {
            translation: t,
            ..Pose::IDENTITY
        }
    }

    pub fn rotation(r: Rotation) -> Pose {
        Pose {
            rotation: r,
            ..Pose::IDENTITY
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.apply(p) * self.scale + self.translation
    }

    /// `outer ∘ inner`: applying the result equals applying `inner` then `outer`.
    pub fn compose(outer: &Pose, inner: &Pose) -> Pose {
        Pose {
            rotation: outer.rotation.mul(&inner.rotation),
            translation: outer.apply(inner.translation),
            scale: outer.scale * inner.scale,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        Pose {
            rotation: rt,
            translation: rt.apply(self.translation) * -inv_scale,
            scale: inv_scale,
        }
    }

    /// `other` expressed in this pose's frame: `self⁻¹ ∘ other`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        Pose::compose(&self.inverse(), other)
    }

    pub fn max_abs_diff(&self, o: &Pose) -> f64 {
        let dt = self.translation - o.translation;
        self.rotation
            .max_abs_diff(&o.rotation)
            .max(dt.max_abs())
            .max((self.scale - o.scale).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn compose_identity() {
        let p = Pose::compose(&Pose::IDENTITY, &Pose::IDENTITY);
        assert_eq!(p, Pose::IDENTITY);
    }

    #[test]
    fn compose_commuting_translations() {
        let p = Pose::compose(&Pose::translation(Vec3::X), &Pose::translation(Vec3::Y));
        assert!(p.translation.dist(Vec3::new(1.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn compose_rotation_then_translation() {
        let rz = Rotation::about_axis(Vec3::Z, FRAC_PI_2);
        let p = Pose::compose(&Pose::rotation(rz), &Pose::translation(Vec3::X));
        assert!(p.translation.dist(Vec3::Y) < 1e-15);
        assert!(p.rotation.max_abs_diff(&rz) < 1e-15);
        // Applying matches the sequential application.
        let q = Vec3::new(0.3, -0.2, 0.7);
        let seq = rz.apply(q + Vec3::X);
        assert!(p.apply(q).dist(seq) < 1e-15);
    }

    #[test]
    fn scale_multiplies() {
        let a = Pose::new(Rotation::IDENTITY, Vec3::ZERO, 2.0);
        let b = Pose::new(Rotation::IDENTITY, Vec3::X, 3.0);
        let c = Pose::compose(&a, &b);
        assert_eq!(c.scale, 6.0);
        assert_eq!(c.translation, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_roundtrip() {
        let p = Pose::new(
            Rotation::about_axis(Vec3::new(1.0, 2.0, -0.5), 0.9),
            Vec3::new(0.1, -3.0, 2.0),
            1.7,
        );
        let q = Pose::compose(&p, &p.inverse());
        assert!(q.max_abs_diff(&Pose::IDENTITY) < 1e-12);
    }

    #[test]
    fn axis_angle_roundtrip_including_pi() {
        for (axis, angle) in [
            (Vec3::new(1.0, 0.0, 0.0), 0.3),
            (Vec3::new(0.2, -1.0, 0.4), 2.5),
            (Vec3::new(0.0, 1.0, 1.0), std::f64::consts::PI),
            (Vec3::new(1.0, 1.0, 1.0), 1e-12),
        ] {
            let r = Rotation::about_axis(axis, angle);
            let back = Rotation::from_axis_angle(r.to_axis_angle());
            assert!(back.max_abs_diff(&r) < 1e-9, "{axis:?} {angle}");
        }
    }

    #[test]
    fn rotation_matrix_is_special_orthogonal() {
        let r = Rotation::about_axis(Vec3::new(0.3, 0.4, -0.2), 1.1);
        assert!(r.orthonormality_error() < 1e-12);
        assert!((r.det() - 1.0).abs() < 1e-12);
    }
}
