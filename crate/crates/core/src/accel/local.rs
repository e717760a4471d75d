//! Two-level structure over the geometry one rank holds: a triangle BVH per
//! (mesh, fragment) in model space and a top-level BVH over placed pieces.

use std::collections::HashMap;
use std::sync::Arc;

use super::bvh::Bvh;
use super::tri::TriBvh;
use crate::math::{Aabb, Affine, Ray, Vec3};
use crate::proxy::RankMask;
use crate::scene::Scene;

/// One unit of rank-resident geometry: a mesh of an instance, optionally reduced
/// to a subset of its triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryPiece {
    pub instance: usize,
    pub mesh: usize,
    /// `(fragment id, triangle subset)`; `None` means the whole mesh.
    pub fragment: Option<(u32, Arc<Vec<u32>>)>,
    /// Every rank holding this piece.
    pub owners: RankMask,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f32,
    pub instance: u32,
    pub mesh: u32,
    pub prim: u32,
    pub u: f32,
    pub v: f32,
    /// Unit geometric normal in world space.
    pub normal: Vec3,
    pub owners: RankMask,
}

impl Hit {
    /// Total order used for closest-hit selection: distance, then instance, then primitive.
    #[inline]
    pub fn precedes(&self, o: &Hit) -> bool {
        (self.t, self.instance, self.prim) < (o.t, o.instance, o.prim)
    }
}

struct Placement {
    instance: u32,
    mesh: u32,
    inverse: Affine,
    owners: RankMask,
    blas: Arc<TriBvh>,
}

pub struct LocalScene {
    scene: Arc<Scene>,
    placements: Vec<Placement>,
    tlas: Bvh,
    triangles: usize,
}

impl LocalScene {
    pub fn build(scene: &Arc<Scene>, pieces: &[GeometryPiece]) -> LocalScene {
        let mut cache: HashMap<(usize, Option<u32>), Arc<TriBvh>> = HashMap::new();
        let mut placements = Vec::with_capacity(pieces.len());
        let mut boxes = Vec::with_capacity(pieces.len());
        let mut triangles = 0;
        for p in pieces {
            let key = (p.mesh, p.fragment.as_ref().map(|f| f.0));
            let blas = cache
                .entry(key)
                .or_insert_with(|| {
                    let subset = p.fragment.as_ref().map(|f| f.1.as_slice());
                    Arc::new(TriBvh::build(&scene.meshes[p.mesh], subset))
                })
                .clone();
            let inst = &scene.instances[p.instance];
            boxes.push(inst.transform.transform_aabb(&blas.bounds()));
            triangles += blas.triangle_count();
            placements.push(Placement {
                instance: p.instance as u32,
                mesh: p.mesh as u32,
                inverse: inst.inverse,
                owners: p.owners,
                blas,
            });
        }
        let tlas = Bvh::build(&boxes, 1);
        LocalScene { scene: scene.clone(), placements, tlas, triangles }
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles
    }

    pub fn bounds(&self) -> Aabb {
        self.tlas.root_bounds()
    }

    #[inline]
    fn model_ray(p: &Placement, ray: &Ray) -> Ray {
        Ray { origin: p.inverse.point(ray.origin), dir: p.inverse.vector(ray.dir), ..*ray }
    }

    /// Closest hit in `(t_min, t_max]`.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        self.tlas.traverse(ray, ray.t_max, |prims, cutoff| {
            let mut cutoff = cutoff;
            for &i in prims {
                let p = &self.placements[i as usize];
                let local = Ray { t_max: cutoff, ..Self::model_ray(p, ray) };
                if let Some(h) = p.blas.intersect(&local) {
                    let hit = Hit {
                        t: h.t,
                        instance: p.instance,
                        mesh: p.mesh,
                        prim: h.prim,
                        u: h.u,
                        v: h.v,
                        normal: Vec3::ZERO,
                        owners: p.owners,
                    };
                    if best.is_none_or(|b| hit.precedes(&b)) {
                        best = Some(hit);
                        cutoff = h.t;
                    }
                }
            }
            cutoff
        });
        best.map(|h| complete_hit(&self.scene, h))
    }

    /// True iff any geometry is hit in `(t_min, t_max]`.
    pub fn occluded(&self, ray: &Ray) -> bool {
        let mut found = false;
        self.tlas.traverse(ray, ray.t_max, |prims, cutoff| {
            for &i in prims {
                let p = &self.placements[i as usize];
                if p.blas.occluded(&Self::model_ray(p, ray)) {
                    found = true;
                    return f32::NEG_INFINITY;
                }
            }
            cutoff
        });
        found
    }
}

/// Fills in the world-space geometric normal of a hit.
fn complete_hit(scene: &Scene, mut hit: Hit) -> Hit {
    let [a, b, c] = scene.meshes[hit.mesh as usize].triangle(hit.prim as usize);
    let n_model = (b - a).cross(c - a);
    let inst = &scene.instances[hit.instance as usize];
    let n = inst.inverse.normal_from_inverse(n_model);
    hit.normal = n.normalized();
    hit
}
