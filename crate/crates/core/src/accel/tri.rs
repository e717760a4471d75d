//! Triangle BVH over one mesh (or a subset of its triangles), in model space.

use super::bvh::Bvh;
use crate::math::{Aabb, Ray, Vec3};
use crate::scene::Mesh;

/// Determinant threshold of the triangle test.
pub const DET_EPSILON: f32 = 1e-7;

const MAX_LEAF: usize = 4;

/// Möller–Trumbore test; returns `(t, u, v)` for `t` in `(t_min, t_max]`.
#[inline]
pub fn intersect_triangle(ray: &Ray, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<(f32, f32, f32)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < DET_EPSILON {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v0;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > ray.t_min && t <= ray.t_max {
        Some((t, u, v))
    } else {
        None
    }
}

/// Closest hit inside one triangle BVH, in model space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriHit {
    pub t: f32,
    pub prim: u32,
    pub u: f32,
    pub v: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriBvh {
    pub bvh: Bvh,
    /// Triangle vertices in leaf order.
    tris: Vec<[Vec3; 3]>,
    /// Mesh-level primitive id for each entry of `tris`.
    prim_ids: Vec<u32>,
}

impl TriBvh {
    /// Builds over the whole mesh or over `subset` (mesh triangle indices).
    pub fn build(mesh: &Mesh, subset: Option<&[u32]>) -> TriBvh {
        let ids: Vec<u32> = match subset {
            Some(s) => s.to_vec(),
            None => (0..mesh.triangles.len() as u32).collect(),
        };
        assert!(!ids.is_empty(), "triangle BVH needs at least one triangle");
        let boxes: Vec<Aabb> = ids.iter().map(|&p| mesh.triangle_bounds(p as usize)).collect();
        let mut bvh = Bvh::build(&boxes, MAX_LEAF);
        let mut tris = Vec::with_capacity(ids.len());
        let mut prim_ids = Vec::with_capacity(ids.len());
        for slot in bvh.prim_order.iter_mut() {
            let p = ids[*slot as usize];
            tris.push(mesh.triangle(p as usize));
            prim_ids.push(p);
            *slot = prim_ids.len() as u32 - 1;
        }
        TriBvh { bvh, tris, prim_ids }
    }

    pub fn bounds(&self) -> Aabb {
        self.bvh.root_bounds()
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    /// Closest hit in `(t_min, t_max]`; equal distances resolve to the lower primitive id.
    pub fn intersect(&self, ray: &Ray) -> Option<TriHit> {
        let mut best: Option<TriHit> = None;
        self.bvh.traverse(ray, ray.t_max, |prims, cutoff| {
            let mut cutoff = cutoff;
            for &slot in prims {
                let [a, b, c] = self.tris[slot as usize];
                let r = Ray { t_max: cutoff, ..*ray };
                if let Some((t, u, v)) = intersect_triangle(&r, a, b, c) {
                    let prim = self.prim_ids[slot as usize];
                    let better = match best {
                        None => true,
                        Some(h) => t < h.t || (t == h.t && prim < h.prim),
                    };
                    if better {
                        best = Some(TriHit { t, prim, u, v });
                        cutoff = t;
                    }
                }
            }
            cutoff
        });
        best
    }

    /// True iff any triangle is hit in `(t_min, t_max]`.
    pub fn occluded(&self, ray: &Ray) -> bool {
        let mut found = false;
        self.bvh.traverse(ray, ray.t_max, |prims, cutoff| {
            if found {
                return f32::NEG_INFINITY;
            }
            for &slot in prims {
                let [a, b, c] = self.tris[slot as usize];
                if intersect_triangle(ray, a, b, c).is_some() {
                    found = true;
                    return f32::NEG_INFINITY;
                }
            }
            cutoff
        });
        found
    }

    pub fn validate(&self) -> Result<(), String> {
        let boxes: Vec<Aabb> = self.tris.iter().map(|t| Aabb::from_points(*t)).collect();
        self.bvh.validate(&boxes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> Mesh {
        Mesh::new(vec![Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)], vec![[0, 1, 2]], 0)
    }

    #[test]
    fn one_triangle_single_leaf() {
        let m = single();
        let b = TriBvh::build(&m, None);
        assert_eq!(b.bvh.nodes.len(), 1);
        assert_eq!(b.bounds(), m.bounds);
    }

    #[test]
    fn two_disjoint_triangles_root_is_union() {
        let m = Mesh::new(
            vec![
                Vec3::ZERO,
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(11.0, 0.0, 0.0),
                Vec3::new(10.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
            0,
        );
        let b = TriBvh {
            bvh: Bvh::build(&[m.triangle_bounds(0), m.triangle_bounds(1)], 1),
            tris: vec![m.triangle(0), m.triangle(1)],
            prim_ids: vec![0, 1],
        };
        let root = b.bvh.nodes[0];
        let l = b.bvh.nodes[root.first as usize].bounds;
        let r = b.bvh.nodes[root.first as usize + 1].bounds;
        assert_eq!(root.bounds, l.union(r));
        assert_eq!(root.bounds, m.bounds);
    }

    #[test]
    fn hit_through_center_has_analytic_distance() {
        let b = TriBvh::build(&single(), None);
        let ray = Ray::new(Vec3::new(0.0, -1.0 / 3.0, 5.0), Vec3::new(0.0, 0.0, -1.0), 0.0, f32::INFINITY);
        let h = b.intersect(&ray).unwrap();
        assert!((h.t - 5.0).abs() <= 5.0 * 1e-5);
        assert_eq!(h.prim, 0);
        let short = Ray { t_max: 4.9, ..ray };
        assert!(b.intersect(&short).is_none());
        assert!(!b.occluded(&short));
        assert!(b.occluded(&ray));
    }

    #[test]
    fn t_max_is_inclusive_and_t_min_exclusive() {
        let b = TriBvh::build(&single(), None);
        let ray = Ray::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, -1.0), 0.0, 2.0);
        assert_eq!(b.intersect(&ray).unwrap().t, 2.0);
        let past = Ray { t_min: 2.0, t_max: 10.0, ..ray };
        assert!(b.intersect(&past).is_none());
    }
}
