//! Oracles: a single-rank render through the engine's own shading path, and
//! brute-force scans for proxy selection and ray intersection.

use std::sync::Arc;

use crate::accel::intersect_triangle;
use crate::engine::{render_inprocess, FrameOutput, RenderConfig, Setup};
use crate::error::Result;
use crate::math::Ray;
use crate::partition::MemoryModel;
use crate::proxy::{pick_seed, ForwardKey, Proxy, RankMask};
use crate::scene::Scene;

/// Ground-truth frame: one rank holding everything, no forwarding.
pub fn render_reference(scene: Arc<Scene>, cfg: &RenderConfig) -> Result<FrameOutput> {
    render_inprocess(&Setup::single(scene, &MemoryModel::default()), cfg)
}

/// The forwarding rule by linear scan: the eligible proxy with the smallest
/// entry distance, ties to the lower index, then the seeded owner pick.
pub fn forward_oracle(ray: &Ray, visited: RankMask, proxies: &[Proxy], tmax_culling: bool, pick: u32) -> Option<usize> {
    let inv = ray.inv_dir();
    let mut best: Option<(usize, f32)> = None;
    for (i, p) in proxies.iter().enumerate() {
        if p.owners.intersects(visited) {
            continue;
        }
        if let Some(e) = p.entry(ray, inv, tmax_culling) {
            if best.is_none_or(|(_, be)| e < be) {
                best = Some((i, e));
            }
        }
    }
    best.and_then(|(i, _)| proxies[i].owners.pick(pick))
}

/// [`forward_oracle`] with the pick seed of `key`.
pub fn forward_oracle_keyed(
    ray: &Ray,
    visited: RankMask,
    proxies: &[Proxy],
    tmax_culling: bool,
    key: ForwardKey,
) -> Option<usize> {
    forward_oracle(ray, visited, proxies, tmax_culling, pick_seed(key, visited.count()))
}

/// Closest hit over every triangle of every instance: `(t, instance, mesh, prim)`.
pub fn intersect_oracle(scene: &Scene, ray: &Ray) -> Option<(f32, usize, usize, usize)> {
    let mut best: Option<(f32, usize, usize, usize)> = None;
    for (i, inst) in scene.instances.iter().enumerate() {
        let local = Ray { origin: inst.inverse.point(ray.origin), dir: inst.inverse.vector(ray.dir), ..*ray };
        for &m in &scene.objects[inst.object].meshes {
            let mesh = &scene.meshes[m];
            for prim in 0..mesh.triangle_count() {
                let [a, b, c] = mesh.triangle(prim);
                if let Some((t, _, _)) = intersect_triangle(&local, a, b, c) {
                    if t > ray.t_min && t <= ray.t_max && best.is_none_or(|(bt, bi, _, bp)| (t, i, prim) < (bt, bi, bp)) {
                        best = Some((t, i, m, prim));
                    }
                }
            }
        }
    }
    best
}

/// Largest per-value relative error `|a - b| / max(|a|, |b|)`; values with
/// both magnitudes below `floor` count as equal. Infinite on length mismatch.
pub fn relative_error(a: &[f32], b: &[f32], floor: f32) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let m = x.abs().max(y.abs());
            if x == y || m < floor {
                0.0
            } else if !(x.is_finite() && y.is_finite()) {
                f64::INFINITY
            } else {
                ((x - y).abs() / m) as f64
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Aabb, Vec3};
    use crate::scene::{SceneDesc, Camera};

    #[test]
    fn empty_scene_renders_environment() {
        let scene = Scene::new(SceneDesc {
            environment: Vec3::splat(0.5),
            camera: Some(Camera { pos: Vec3::ZERO, look_at: Vec3::new(0.0, 0.0, -1.0), up: Vec3::new(0.0, 1.0, 0.0), fov_y: 45.0 }),
            ..Default::default()
        })
        .unwrap();
        let cfg = RenderConfig { width: 8, height: 4, spp: 3, ..Default::default() };
        let out = render_reference(Arc::new(scene), &cfg).unwrap();
        assert!(out.accumulation.iter().all(|&v| v == 1.5));
        assert_eq!(out.stats.forwards_total, 0);
    }

    #[test]
    fn oracle_edge_cases() {
        let ray = Ray::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), 0.0, f32::INFINITY);
        assert_eq!(forward_oracle(&ray, RankMask::EMPTY, &[], true, 0), None);
        let p = Proxy { bounds: Aabb::new(Vec3::new(2.0, -1.0, -1.0), Vec3::new(3.0, 1.0, 1.0)), owners: RankMask::single(1) };
        assert_eq!(forward_oracle(&ray, RankMask::EMPTY, &[p], true, 0), Some(1));
        assert_eq!(forward_oracle(&ray, RankMask::from_ranks([0, 1]), &[p], true, 0), None);
    }

    #[test]
    fn relative_error_floor_and_mismatch() {
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 1e-9], 1e-6), 0.0);
        assert!((relative_error(&[1.0], &[1.001], 0.0) - 0.000999).abs() < 1e-5);
        assert_eq!(relative_error(&[1.0], &[], 0.0), f64::INFINITY);
    }
}
