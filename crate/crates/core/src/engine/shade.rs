//! Path generation and shading, shared by the distributed engine and the
//! single-rank reference.

use std::f32::consts::{FRAC_1_PI, TAU};

use super::rng::{self, SampleRng};
use super::RenderConfig;
use crate::accel::{Hit, LocalScene};
use crate::math::{Ray, Vec3};
use crate::proxy::RankMask;
use crate::scene::{Camera, Material, Scene};
use crate::transport::wire::{quantize, to_f16, PathRecord, FLAG_SHADOW};

/// Carried-distance tolerance when re-tracing a hit for shading.
pub const RETRACE_TOLERANCE: f32 = 1e-4;

/// Shadow rays stop this fraction short of the sampled light point.
const SHADOW_SHRINK: f32 = 2e-3;

#[inline]
fn offset_scale(p: Vec3) -> f32 {
    5e-5 * (1.0 + p.abs().max_component())
}

/// Ray of a record, starting at distance 0.
#[inline]
pub fn record_ray(r: &PathRecord) -> Ray {
    Ray::new(r.origin(), r.direction(), 0.0, r.t_max)
}

/// Fresh path record as generated on `rank`: not yet traced, visited = {rank}.
pub fn new_path(origin: Vec3, dir: Vec3, throughput: Vec3, pixel: u32, rank: usize) -> PathRecord {
    PathRecord {
        origin: origin.to_array(),
        dir: quantize(dir),
        throughput: quantize(throughput),
        t_max: f32::INFINITY,
        pixel_flags: pixel,
        visited: RankMask::single(rank),
        origin_rank: rank as u8,
        hit_owners: RankMask::EMPTY,
    }
}

/// Camera ray for `pixel` in sample `sample`, jittered within the pixel.
pub fn primary_ray(cam: &Camera, cfg: &RenderConfig, sample: u32, pixel: u32, rank: usize) -> PathRecord {
    let mut r = SampleRng::new(cfg.frame_seed, sample, pixel, 0, rng::CAMERA);
    let (x, y) = (pixel % cfg.width, pixel / cfg.width);
    let ray = cam.ray(cfg.width, cfg.height, x as f32 + r.next_f32(), y as f32 + r.next_f32());
    new_path(ray.origin, ray.dir, Vec3::ONE, pixel, rank)
}

/// Updates the record with the closest local hit. Only a strictly closer hit
/// replaces an earlier one, so equal-distance hits on replicated geometry keep
/// the first owner set.
#[inline]
pub fn trace_path(local: &LocalScene, rec: &mut PathRecord) {
    if let Some(h) = local.intersect(&record_ray(rec)) {
        if rec.hit_owners.is_empty() || h.t < rec.t_max {
            rec.t_max = h.t;
            rec.hit_owners = h.owners;
        }
    }
}

/// Weighted reservoir sampling in one pass: element `i` is kept with
/// probability `w_i / Σw`. Returns the index and that probability.
pub fn reservoir_pick(weights: impl IntoIterator<Item = f32>, r: &mut SampleRng) -> Option<(usize, f32)> {
    let mut total = 0.0f32;
    let mut chosen: Option<(usize, f32)> = None;
    for (i, w) in weights.into_iter().enumerate() {
        if !(w > 0.0) {
            continue;
        }
        total += w;
        if r.next_f32() * total < w {
            chosen = Some((i, w));
        }
    }
    chosen.map(|(i, w)| (i, w / total))
}

/// Orthonormal basis around unit `n` (Duff et al.).
fn basis(n: Vec3) -> (Vec3, Vec3) {
    let s = if n.z >= 0.0 { 1.0 } else { -1.0 };
    let a = -1.0 / (s + n.z);
    let b = n.x * n.y * a;
    (Vec3::new(1.0 + s * n.x * n.x * a, s * b, -s * n.x), Vec3::new(b, s + n.y * n.y * a, -n.y))
}

fn cosine_hemisphere(n: Vec3, u1: f32, u2: f32) -> Vec3 {
    let r = u1.sqrt();
    let phi = TAU * u2;
    let (t, b) = basis(n);
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()).normalized()
}

/// What shading one record produced.
#[derive(Default)]
pub struct Shaded {
    /// Radiance to add to the record's pixel.
    pub contribution: Option<Vec3>,
    pub path: Option<PathRecord>,
    pub shadow: Option<PathRecord>,
    /// Non-finite contribution or throughput; nothing was written.
    pub dropped: bool,
    /// Re-trace found no hit near the carried distance.
    pub mismatch: bool,
}

pub struct Shader<'a> {
    pub scene: &'a Scene,
    pub local: &'a LocalScene,
    pub cfg: &'a RenderConfig,
    pub rank: usize,
    pub sample: u32,
    pub bounce: u32,
}

impl Shader<'_> {
    fn rng(&self, pixel: u32, stream: u32) -> SampleRng {
        SampleRng::new(self.cfg.frame_seed, self.sample, pixel, self.bounce, stream)
    }

    fn emit(c: Vec3) -> Shaded {
        if c.is_finite() && c.x >= 0.0 && c.y >= 0.0 && c.z >= 0.0 {
            Shaded { contribution: Some(c), ..Default::default() }
        } else {
            Shaded { dropped: true, ..Default::default() }
        }
    }

    /// Shades a record that has finished distributed traversal on this rank.
    pub fn shade(&self, rec: &PathRecord) -> Shaded {
        let thr = rec.throughput();
        if rec.is_shadow() {
            if !rec.hit_owners.is_empty() {
                return Shaded::default();
            }
            return Self::emit(thr);
        }
        if rec.hit_owners.is_empty() {
            return Self::emit(thr.mul_elem(self.scene.environment));
        }
        let probe = Ray { t_max: rec.t_max * (1.0 + RETRACE_TOLERANCE), ..record_ray(rec) };
        let hit = match self.local.intersect(&probe) {
            Some(h) if (h.t - rec.t_max).abs() <= RETRACE_TOLERANCE * rec.t_max => h,
            _ => {
                let mut s = Self::emit(thr.mul_elem(self.scene.environment));
                s.mismatch = true;
                return s;
            }
        };
        match *self.scene.material_of_mesh(hit.mesh as usize) {
            Material::Emissive { emission } => {
                if self.bounce == 0 {
                    Self::emit(thr.mul_elem(Vec3::from_array(emission)))
                } else {
                    Shaded::default()
                }
            }
            Material::Diffuse { albedo } => self.shade_diffuse(rec, &probe, &hit, thr, Vec3::from_array(albedo)),
        }
    }

    fn shade_diffuse(&self, rec: &PathRecord, ray: &Ray, hit: &Hit, thr: Vec3, albedo: Vec3) -> Shaded {
        let mut out = Shaded::default();
        if self.bounce >= self.cfg.max_bounce {
            return out;
        }
        let pixel = rec.pixel();
        let p = ray.at(hit.t);
        let wo = -ray.dir;
        let ng = if hit.normal.dot(wo) < 0.0 { -hit.normal } else { hit.normal };
        let ns = self.shading_normal(hit, ng);
        let origin = p + ng * offset_scale(p);

        // next-event estimation
        let mut pick = self.rng(pixel, rng::LIGHT_PICK);
        let lights = &self.scene.lights;
        let weights = lights.iter().map(|l| l.power() / (l.centroid() - p).dot(l.centroid() - p).max(1e-6));
        if let Some((li, prob)) = reservoir_pick(weights, &mut pick) {
            let l = &lights[li];
            let mut pt = self.rng(pixel, rng::LIGHT_POINT);
            let y = l.sample(pt.next_f32(), pt.next_f32());
            let d = y - origin;
            let dist2 = d.dot(d);
            let dist = dist2.sqrt();
            if dist > 0.0 {
                let w = d / dist;
                let cos_x = ns.dot(w);
                let cos_y = l.normal.dot(w).abs();
                if cos_x > 0.0 && ng.dot(w) > 0.0 && cos_y > 0.0 {
                    let c = thr.mul_elem(albedo).mul_elem(l.emission) * (FRAC_1_PI * cos_x * cos_y * l.area / (dist2 * prob));
                    let q = quantize(c);
                    if q.iter().all(|h| h.is_finite()) {
                        out.shadow = Some(PathRecord {
                            throughput: q,
                            t_max: dist * (1.0 - SHADOW_SHRINK),
                            pixel_flags: pixel | FLAG_SHADOW,
                            ..new_path(origin, w, Vec3::ZERO, pixel, self.rank)
                        });
                    } else {
                        out.dropped = true;
                    }
                }
            }
        }

        // diffuse bounce with roulette
        let mut b = self.rng(pixel, rng::BOUNCE);
        let wi = cosine_hemisphere(ns, b.next_f32(), b.next_f32());
        if ng.dot(wi) <= 0.0 {
            return out;
        }
        let mut next = thr.mul_elem(albedo);
        let survive = (next.max_component() / self.cfg.roulette_threshold).clamp(0.0, 1.0);
        if survive < 1.0 {
            if self.rng(pixel, rng::ROULETTE).next_f32() >= survive {
                return out;
            }
            next = next / survive;
        }
        let q = [to_f16(next.x), to_f16(next.y), to_f16(next.z)];
        if !q.iter().all(|h| h.is_finite()) {
            out.dropped = true;
            return out;
        }
        out.path = Some(PathRecord { throughput: q, ..new_path(origin, wi, Vec3::ZERO, pixel, self.rank) });
        out
    }

    /// Interpolated vertex normal if the mesh has normals, else the geometric
    /// one; always on the side of `ng`.
    fn shading_normal(&self, hit: &Hit, ng: Vec3) -> Vec3 {
        let mesh = &self.scene.meshes[hit.mesh as usize];
        let Some(normals) = &mesh.normals else { return ng };
        let [a, b, c] = mesh.triangles[hit.prim as usize].map(|i| normals[i as usize]);
        let n = a * (1.0 - hit.u - hit.v) + b * hit.u + c * hit.v;
        let inst = &self.scene.instances[hit.instance as usize];
        let n = inst.inverse.normal_from_inverse(n).normalized();
        if !n.is_finite() {
            return ng;
        }
        if n.dot(ng) < 0.0 {
            -n
        } else {
            n
        }
    }
}
