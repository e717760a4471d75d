//! Scene data model: meshes, objects, instances, materials, lights and camera.
//!
//! A [`Scene`] is immutable after construction. All derived data (instance world
//! bounds, scene bounds, the emissive-triangle light list) is computed once in
//! [`Scene::new`], which also enforces the model invariants.

mod generate;
mod loader;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::{Aabb, Affine, Ray, Vec3};

pub use generate::{box_fixture, mini_island_views, shadow_fixture, MiniIsland};
pub use loader::{load_scene, parse_obj, scene_from_json_str, scene_to_json, write_obj};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Material {
    Diffuse { albedo: [f32; 3] },
    Emissive { emission: [f32; 3] },
}

impl Material {
    pub fn albedo(&self) -> Vec3 {
        match self {
            Material::Diffuse { albedo } => Vec3::from_array(*albedo),
            Material::Emissive { .. } => Vec3::ZERO,
        }
    }

    pub fn emission(&self) -> Vec3 {
        match self {
            Material::Diffuse { .. } => Vec3::ZERO,
            Material::Emissive { emission } => Vec3::from_array(*emission),
        }
    }

    pub fn is_emissive(&self) -> bool {
        matches!(self, Material::Emissive { .. })
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Material::Diffuse { albedo } => {
                if albedo.iter().any(|a| !(0.0..1.0).contains(a)) {
                    return Err(format!("diffuse albedo {albedo:?} must lie in [0, 1)"));
                }
            }
            Material::Emissive { emission } => {
                if emission.iter().any(|e| !e.is_finite() || *e < 0.0) {
                    return Err(format!("emission {emission:?} must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub triangles: Vec<[u32; 3]>,
    pub material: usize,
    pub bounds: Aabb,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, material: usize) -> Self {
        let bounds = Aabb::from_points(vertices.iter().copied());
        Mesh { vertices, normals: None, triangles, material, bounds }
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn triangle(&self, prim: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[prim];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_bounds(&self, prim: usize) -> Aabb {
        Aabb::from_points(self.triangle(prim))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.triangles.is_empty() {
            return Err("mesh has zero triangles".into());
        }
        let n = self.vertices.len() as u32;
        if let Some((i, t)) = self.triangles.iter().enumerate().find(|(_, t)| t.iter().any(|&v| v >= n)) {
            return Err(format!("triangle {i} {t:?} references a vertex >= vertex count {n}"));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.vertices.len() {
                return Err("normal count differs from vertex count".into());
            }
        }
        if self.vertices.iter().any(|v| !v.is_finite()) {
            return Err("non-finite vertex".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Object {
    pub id: String,
    /// Indices into [`Scene::meshes`].
    pub meshes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub object: usize,
    pub transform: Affine,
    pub inverse: Affine,
    pub world_bounds: Aabb,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub pos: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_y: f32,
}

impl Camera {
    /// Primary ray through the film position `(px, py)` in pixel units, `py = 0` at the top row.
    pub fn ray(&self, width: u32, height: u32, px: f32, py: f32) -> Ray {
        let forward = (self.look_at - self.pos).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let tan_half = (self.fov_y.to_radians() * 0.5).tan();
        let aspect = width as f32 / height as f32;
        let sx = (2.0 * px / width as f32 - 1.0) * tan_half * aspect;
        let sy = (1.0 - 2.0 * py / height as f32) * tan_half;
        let dir = (forward + right * sx + up * sy).normalized();
        Ray::new(self.pos, dir, 0.0, f32::INFINITY)
    }
}

/// One emissive triangle in world space; the unit of light sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightTriangle {
    pub p0: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub normal: Vec3,
    pub area: f32,
    pub emission: Vec3,
}

impl LightTriangle {
    pub fn centroid(&self) -> Vec3 {
        self.p0 + (self.e1 + self.e2) * (1.0 / 3.0)
    }

    /// Uniform point for canonical samples `(u, v)` in `[0,1)²`.
    pub fn sample(&self, u: f32, v: f32) -> Vec3 {
        let su = u.sqrt();
        let b1 = 1.0 - su;
        let b2 = v * su;
        self.p0 + self.e1 * b1 + self.e2 * b2
    }

    pub fn power(&self) -> f32 {
        self.emission.luminance() * self.area
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub meshes: Vec<Mesh>,
    pub materials: Vec<Material>,
    pub objects: Vec<Object>,
    pub instances: Vec<Instance>,
    pub camera: Camera,
    pub environment: Vec3,
    pub bounds: Aabb,
    pub lights: Vec<LightTriangle>,
}

/// Input for [`Scene::new`]; instances are `(object index, transform)` pairs.
#[derive(Clone, Debug, Default)]
pub struct SceneDesc {
    pub meshes: Vec<Mesh>,
    pub materials: Vec<Material>,
    pub objects: Vec<Object>,
    pub instances: Vec<(usize, Affine)>,
    pub camera: Option<Camera>,
    pub environment: Vec3,
}

impl Scene {
    pub fn new(desc: SceneDesc) -> Result<Scene> {
        let SceneDesc { mut meshes, materials, objects, instances, camera, environment } = desc;
        let invalid = |m: String| Error::InvalidScene(m);
        for (i, m) in materials.iter().enumerate() {
            m.validate().map_err(|e| invalid(format!("materials[{i}]: {e}")))?;
        }
        for (i, m) in meshes.iter_mut().enumerate() {
            m.validate().map_err(|e| invalid(format!("meshes[{i}]: {e}")))?;
            if m.material >= materials.len() {
                return Err(invalid(format!("meshes[{i}]: unknown material {}", m.material)));
            }
            m.bounds = Aabb::from_points(m.vertices.iter().copied());
        }
        for (i, o) in objects.iter().enumerate() {
            if o.meshes.is_empty() {
                return Err(invalid(format!("objects[{i}] ({}) owns no meshes", o.id)));
            }
            if let Some(&bad) = o.meshes.iter().find(|&&m| m >= meshes.len()) {
                return Err(invalid(format!("objects[{i}] references unknown mesh {bad}")));
            }
        }
        let mut out_instances = Vec::with_capacity(instances.len());
        for (i, (object, transform)) in instances.into_iter().enumerate() {
            let obj = objects
                .get(object)
                .ok_or_else(|| invalid(format!("instances[{i}] references unknown object {object}")))?;
            let inverse = transform
                .inverse()
                .ok_or_else(|| invalid(format!("instances[{i}] has a singular transform")))?;
            let world_bounds = obj.meshes.iter().fold(Aabb::EMPTY, |b, &m| {
                meshes[m].vertices.iter().fold(b, |b, &v| b.grow(transform.point(v)))
            });
            out_instances.push(Instance { object, transform, inverse, world_bounds });
        }
        if out_instances.is_empty() && environment.max_component() <= 0.0 {
            return Err(invalid("scene has neither geometry nor environment light".into()));
        }
        let bounds = out_instances.iter().fold(Aabb::EMPTY, |b, i| b.union(i.world_bounds));

        let mut lights = Vec::new();
        for inst in &out_instances {
            for &m in &objects[inst.object].meshes {
                let mesh = &meshes[m];
                let mat = materials[mesh.material];
                if !mat.is_emissive() || mat.emission().max_component() <= 0.0 {
                    continue;
                }
                for prim in 0..mesh.triangles.len() {
                    let [a, b, c] = mesh.triangle(prim).map(|v| inst.transform.point(v));
                    let e1 = b - a;
                    let e2 = c - a;
                    let n = e1.cross(e2);
                    let len = n.length();
                    if len <= 0.0 {
                        continue;
                    }
                    lights.push(LightTriangle {
                        p0: a,
                        e1,
                        e2,
                        normal: n / len,
                        area: 0.5 * len,
                        emission: mat.emission(),
                    });
                }
            }
        }
        if lights.is_empty() && environment.max_component() <= 0.0 {
            return Err(invalid("scene needs an emissive mesh or a nonzero environment".into()));
        }
        let camera = camera.unwrap_or_else(|| default_camera(&bounds));
        Ok(Scene {
            meshes,
            materials,
            objects,
            instances: out_instances,
            camera,
            environment,
            bounds,
            lights,
        })
    }

    pub fn material_of_mesh(&self, mesh: usize) -> &Material {
        &self.materials[self.meshes[mesh].material]
    }

    /// Number of instances referencing each object.
    pub fn instance_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.objects.len()];
        for inst in &self.instances {
            counts[inst.object] += 1;
        }
        counts
    }

    pub fn total_triangles(&self) -> usize {
        self.instances
            .iter()
            .map(|i| self.objects[i.object].meshes.iter().map(|&m| self.meshes[m].triangle_count()).sum::<usize>())
            .sum()
    }

    /// SHA-256 over the canonical binary form of the scene; used for the rank handshake.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let f = |h: &mut Sha256, v: f32| h.update(v.to_le_bytes());
        for m in &self.meshes {
            h.update((m.vertices.len() as u64).to_le_bytes());
            for v in &m.vertices {
                f(&mut h, v.x);
                f(&mut h, v.y);
                f(&mut h, v.z);
            }
            h.update((m.triangles.len() as u64).to_le_bytes());
            for t in &m.triangles {
                for i in t {
                    h.update(i.to_le_bytes());
                }
            }
            h.update((m.material as u64).to_le_bytes());
        }
        for mat in &self.materials {
            let (tag, c) = match mat {
                Material::Diffuse { albedo } => (0u8, albedo),
                Material::Emissive { emission } => (1u8, emission),
            };
            h.update([tag]);
            c.iter().for_each(|&v| f(&mut h, v));
        }
        for o in &self.objects {
            h.update(o.id.as_bytes());
            h.update([0]);
            for &m in &o.meshes {
                h.update((m as u64).to_le_bytes());
            }
        }
        for i in &self.instances {
            h.update((i.object as u64).to_le_bytes());
            i.transform.m.iter().for_each(|&v| f(&mut h, v));
        }
        let c = &self.camera;
        for v in [c.pos, c.look_at, c.up, self.environment] {
            f(&mut h, v.x);
            f(&mut h, v.y);
            f(&mut h, v.z);
        }
        f(&mut h, c.fov_y);
        h.finalize().into()
    }
}

fn default_camera(bounds: &Aabb) -> Camera {
    if bounds.is_empty() {
        return Camera { pos: Vec3::new(0.0, 0.0, 5.0), look_at: Vec3::ZERO, up: Vec3::new(0.0, 1.0, 0.0), fov_y: 45.0 };
    }
    let c = bounds.center();
    let d = bounds.diagonal().max(1e-3);
    Camera { pos: c + Vec3::new(0.0, 0.3 * d, 1.2 * d), look_at: c, up: Vec3::new(0.0, 1.0, 0.0), fov_y: 45.0 }
}
