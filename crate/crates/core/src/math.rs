//! Small fixed-size linear algebra used throughout the tracer.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::splat(0.0);
    pub const ONE: Vec3 = Vec3::splat(1.0);

    #[inline]
    pub const fn new(x: f32, y: f32, z: f32) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub const fn splat(v: f32) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    pub fn from_array(a: [f32; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f32; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f32 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn length(self) -> f32 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.length()
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    #[inline]
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn max_component(self) -> f32 {
        self.x.max(self.y).max(self.z)
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Index of the largest component.
    pub fn max_axis(self) -> usize {
        if self.x >= self.y && self.x >= self.z {
            0
        } else if self.y >= self.z {
            1
        } else {
            2
        }
    }

    pub fn luminance(self) -> f32 {
        0.2126 * self.x + 0.7152 * self.y + 0.0722 * self.z
    }
}

impl Index<usize> for Vec3 {
    type Output = f32;
    #[inline]
    fn index(&self, i: usize) -> &f32 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f32> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f32) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f32> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f32) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box. The empty box has `lo = +inf`, `hi = -inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Default for Aabb {
    fn default() -> Self {
        Aabb::EMPTY
    }
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        lo: Vec3::splat(f32::INFINITY),
        hi: Vec3::splat(f32::NEG_INFINITY),
    };

    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Aabb { lo, hi }
    }

    pub fn from_point(p: Vec3) -> Self {
        Aabb { lo: p, hi: p }
    }

    pub fn from_points<I: IntoIterator<Item = Vec3>>(pts: I) -> Self {
        pts.into_iter().fold(Aabb::EMPTY, |b, p| b.grow(p))
    }

    pub fn is_empty(&self) -> bool {
        self.lo.x > self.hi.x || self.lo.y > self.hi.y || self.lo.z > self.hi.z
    }

    #[inline]
    pub fn grow(self, p: Vec3) -> Aabb {
        Aabb { lo: self.lo.min(p), hi: self.hi.max(p) }
    }

    #[inline]
    pub fn union(self, o: Aabb) -> Aabb {
        Aabb { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    /// Intersection of two boxes; may be empty.
    pub fn intersection(self, o: Aabb) -> Aabb {
        let b = Aabb { lo: self.lo.max(o.lo), hi: self.hi.min(o.hi) };
        if b.is_empty() {
            Aabb::EMPTY
        } else {
            b
        }
    }

    /// Closed-box overlap test (touching faces count as overlapping).
    pub fn overlaps(&self, o: &Aabb) -> bool {
        !self.is_empty()
            && !o.is_empty()
            && self.lo.x <= o.hi.x
            && o.lo.x <= self.hi.x
            && self.lo.y <= o.hi.y
            && o.lo.y <= self.hi.y
            && self.lo.z <= o.hi.z
            && o.lo.z <= self.hi.z
    }

    /// True when the interiors overlap (positive-volume intersection).
    pub fn overlaps_interior(&self, o: &Aabb) -> bool {
        self.lo.x < o.hi.x
            && o.lo.x < self.hi.x
            && self.lo.y < o.hi.y
            && o.lo.y < self.hi.y
            && self.lo.z < o.hi.z
            && o.lo.z < self.hi.z
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        p.x >= self.lo.x
            && p.x <= self.hi.x
            && p.y >= self.lo.y
            && p.y <= self.hi.y
            && p.z >= self.lo.z
            && p.z <= self.hi.z
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        o.is_empty() || (self.contains_point(o.lo) && self.contains_point(o.hi))
    }

    pub fn extent(&self) -> Vec3 {
        if self.is_empty() {
            Vec3::ZERO
        } else {
            self.hi - self.lo
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }

    pub fn surface_area(&self) -> f32 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn volume(&self) -> f32 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn diagonal(&self) -> f32 {
        self.extent().length()
    }

    /// Box enlarged on every side by `pad`.
    pub fn padded(&self, pad: f32) -> Aabb {
        Aabb { lo: self.lo - Vec3::splat(pad), hi: self.hi + Vec3::splat(pad) }
    }

    /// Part of the box on the low (`keep_low`) or high side of the plane `axis = pos`.
    pub fn clip_half(&self, axis: usize, pos: f32, keep_low: bool) -> Aabb {
        let mut lo = self.lo.to_array();
        let mut hi = self.hi.to_array();
        if keep_low {
            hi[axis] = hi[axis].min(pos);
        } else {
            lo[axis] = lo[axis].max(pos);
        }
        let b = Aabb::new(Vec3::from_array(lo), Vec3::from_array(hi));
        if b.is_empty() {
            Aabb::EMPTY
        } else {
            b
        }
    }

    /// Slab test returning the parametric `[near, far]` overlap of the ray line with
    /// the box, or `None` if the line misses it.
    #[inline]
    pub fn slab(&self, origin: Vec3, inv_dir: Vec3) -> Option<(f32, f32)> {
        self.slab_padded(origin, inv_dir, 0.0)
    }

    /// [`Aabb::slab`] with each axis interval widened by `rel` of its endpoint
    /// magnitudes, so rounding cannot reject a ray that touches a face or edge.
    #[inline]
    pub fn slab_padded(&self, origin: Vec3, inv_dir: Vec3, rel: f32) -> Option<(f32, f32)> {
        let mut near = f32::NEG_INFINITY;
        let mut far = f32::INFINITY;
        for a in 0..3 {
            let t0 = (self.lo[a] - origin[a]) * inv_dir[a];
            let t1 = (self.hi[a] - origin[a]) * inv_dir[a];
            // NaN arises for a zero direction component with the origin on a slab face;
            // treat the line as inside that slab.
            let (t0, t1) = if t0.is_nan() || t1.is_nan() {
                if origin[a] >= self.lo[a] && origin[a] <= self.hi[a] {
                    (f32::NEG_INFINITY, f32::INFINITY)
                } else {
                    return None;
                }
            } else if t0 <= t1 {
                (t0, t1)
            } else {
                (t1, t0)
            };
            if t0.is_finite() {
                near = near.max(t0 - t0.abs() * rel);
            } else {
                near = near.max(t0);
            }
            if t1.is_finite() {
                far = far.min(t1 + t1.abs() * rel);
            } else {
                far = far.min(t1);
            }
        }
        if near <= far {
            Some((near, far))
        } else {
            None
        }
    }
}

/// Ray with a half-open parameter interval `(t_min, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f32,
    pub t_max: f32,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3, t_min: f32, t_max: f32) -> Self {
        Ray { origin, dir, t_min, t_max }
    }

    pub fn at(&self, t: f32) -> Vec3 {
        self.origin + self.dir * t
    }

    pub fn inv_dir(&self) -> Vec3 {
        Vec3::new(1.0 / self.dir.x, 1.0 / self.dir.y, 1.0 / self.dir.z)
    }
}

/// Row-major 3×4 affine transform: `p' = M·p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub m: [f32; 12],
}

impl Default for Affine {
    fn default() -> Self {
        Affine::IDENTITY
    }
}

impl Affine {
    pub const IDENTITY: Affine =
        Affine { m: [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0] };

    pub fn from_rows(m: [f32; 12]) -> Self {
        Affine { m }
    }

    pub fn translation(t: Vec3) -> Self {
        Affine { m: [1.0, 0.0, 0.0, t.x, 0.0, 1.0, 0.0, t.y, 0.0, 0.0, 1.0, t.z] }
    }

    /// Uniform scale `s`, rotation by `angle` radians about +Y, then translation.
    pub fn scale_rotate_y_translate(s: f32, angle: f32, t: Vec3) -> Self {
        let (sin, cos) = angle.sin_cos();
        Affine {
            m: [s * cos, 0.0, s * sin, t.x, 0.0, s, 0.0, t.y, -s * sin, 0.0, s * cos, t.z],
        }
    }

    #[inline]
    pub fn point(&self, p: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11],
        )
    }

    #[inline]
    pub fn vector(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[4] * v.x + m[5] * v.y + m[6] * v.z,
            m[8] * v.x + m[9] * v.y + m[10] * v.z,
        )
    }

    /// Transforms a normal with the inverse-transpose of the linear part, given
    /// `self` is the inverse transform.
    #[inline]
    pub fn normal_from_inverse(&self, n: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0] * n.x + m[4] * n.y + m[8] * n.z,
            m[1] * n.x + m[5] * n.y + m[9] * n.z,
            m[2] * n.x + m[6] * n.y + m[10] * n.z,
        )
    }

    pub fn determinant(&self) -> f32 {
        let m = &self.m;
        m[0] * (m[5] * m[10] - m[6] * m[9]) - m[1] * (m[4] * m[10] - m[6] * m[8])
            + m[2] * (m[4] * m[9] - m[5] * m[8])
    }

    /// Inverse transform; `None` when the linear part is singular.
    pub fn inverse(&self) -> Option<Affine> {
        let m = &self.m;
        let det = self.determinant();
        if det.abs() < 1e-12 || !det.is_finite() {
            return None;
        }
        let inv_det = 1.0 / det;
        let a = [
            (m[5] * m[10] - m[6] * m[9]) * inv_det,
            (m[2] * m[9] - m[1] * m[10]) * inv_det,
            (m[1] * m[6] - m[2] * m[5]) * inv_det,
            (m[6] * m[8] - m[4] * m[10]) * inv_det,
            (m[0] * m[10] - m[2] * m[8]) * inv_det,
            (m[2] * m[4] - m[0] * m[6]) * inv_det,
            (m[4] * m[9] - m[5] * m[8]) * inv_det,
            (m[1] * m[8] - m[0] * m[9]) * inv_det,
            (m[0] * m[5] - m[1] * m[4]) * inv_det,
        ];
        let t = Vec3::new(m[3], m[7], m[11]);
        let tx = -(a[0] * t.x + a[1] * t.y + a[2] * t.z);
        let ty = -(a[3] * t.x + a[4] * t.y + a[5] * t.z);
        let tz = -(a[6] * t.x + a[7] * t.y + a[8] * t.z);
        Some(Affine { m: [a[0], a[1], a[2], tx, a[3], a[4], a[5], ty, a[6], a[7], a[8], tz] })
    }

    /// Conservative world bounds of a transformed box (all eight corners).
    pub fn transform_aabb(&self, b: &Aabb) -> Aabb {
        if b.is_empty() {
            return Aabb::EMPTY;
        }
        let mut out = Aabb::EMPTY;
        for i in 0..8 {
            let p = Vec3::new(
                if i & 1 == 0 { b.lo.x } else { b.hi.x },
                if i & 2 == 0 { b.lo.y } else { b.hi.y },
                if i & 4 == 0 { b.lo.z } else { b.hi.z },
            );
            out = out.grow(self.point(p));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let a = Affine::scale_rotate_y_translate(2.5, 0.7, Vec3::new(1.0, -2.0, 3.0));
        let inv = a.inverse().unwrap();
        let p = Vec3::new(0.3, 4.0, -1.2);
        let q = inv.point(a.point(p));
        assert!((q - p).length() < 1e-5);
    }

    #[test]
    fn empty_box_is_detectable() {
        assert!(Aabb::EMPTY.is_empty());
        assert!(!Aabb::from_point(Vec3::ZERO).is_empty());
        assert_eq!(Aabb::EMPTY.surface_area(), 0.0);
        assert!(Aabb::EMPTY.union(Aabb::from_point(Vec3::ONE)) == Aabb::from_point(Vec3::ONE));
    }

    #[test]
    fn slab_axis_parallel_ray() {
        let b = Aabb::new(Vec3::ZERO, Vec3::ONE);
        let r = Ray::new(Vec3::new(0.5, 0.5, -1.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 10.0);
        let (n, f) = b.slab(r.origin, r.inv_dir()).unwrap();
        assert_eq!((n, f), (1.0, 2.0));
        let miss = Ray::new(Vec3::new(1.5, 0.5, -1.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 10.0);
        assert!(b.slab(miss.origin, miss.inv_dir()).is_none());
    }

    #[test]
    fn clip_half_splits_box() {
        let b = Aabb::new(Vec3::ZERO, Vec3::splat(2.0));
        let l = b.clip_half(0, 0.5, true);
        let r = b.clip_half(0, 0.5, false);
        assert_eq!(l.hi.x, 0.5);
        assert_eq!(r.lo.x, 0.5);
        assert!(b.clip_half(0, -1.0, true).is_empty());
    }
}
