//! Procedural test content: the mini island and a closed-box fixture.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{Camera, Material, Mesh, Object, Scene, SceneDesc};
use crate::math::{Affine, Vec3};

const ISLAND_HALF: f32 = 50.0;

/// Builder for the mini-island scene: two large interleaved ground meshes plus two
/// instanced tree objects, optionally lit by an emissive "sun" quad.
#[derive(Clone, Copy, Debug)]
pub struct MiniIsland {
    pub ground_resolution: u32,
    pub tree_counts: (u32, u32),
    pub seed: u64,
    pub sun: bool,
}

impl MiniIsland {
    pub fn new(ground_resolution: u32, tree_counts: (u32, u32), seed: u64) -> Self {
        assert!(ground_resolution >= 2, "ground resolution must be >= 2");
        assert!(tree_counts.0 >= 1 && tree_counts.1 >= 1, "each tree object needs an instance");
        MiniIsland { ground_resolution, tree_counts, seed, sun: false }
    }

    pub fn with_sun(mut self, sun: bool) -> Self {
        self.sun = sun;
        self
    }

    pub fn build(&self) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let phase = [unit(&mut rng) * 6.28, unit(&mut rng) * 6.28];
        let height = move |x: f32, z: f32| {
            let r2 = (x * x + z * z) / (ISLAND_HALF * ISLAND_HALF);
            (6.0 * (1.0 - r2)).max(0.0) + 0.8 * (x * 0.15 + phase[0]).sin() * (z * 0.13 + phase[1]).cos()
        };

        let mut desc = SceneDesc {
            materials: vec![
                Material::Diffuse { albedo: [0.30, 0.45, 0.20] },
                Material::Diffuse { albedo: [0.70, 0.62, 0.45] },
                Material::Diffuse { albedo: [0.15, 0.40, 0.18] },
                Material::Diffuse { albedo: [0.35, 0.55, 0.15] },
            ],
            environment: Vec3::new(0.35, 0.45, 0.60),
            ..SceneDesc::default()
        };

        let [ground_a, ground_b] = ground_meshes(self.ground_resolution, &height);
        for (i, (tris, verts)) in [ground_a, ground_b].into_iter().enumerate() {
            let id = if i == 0 { "groundA" } else { "groundB" };
            desc.meshes.push(Mesh::new(verts, tris, i));
            desc.objects.push(Object { id: id.into(), meshes: vec![desc.meshes.len() - 1] });
            desc.instances.push((desc.objects.len() - 1, Affine::IDENTITY));
        }

        // treeC: conifer (trunk + cone); treeD: broadleaf (trunk + sphere canopy)
        let trunk = prism(6, 0.3, 0.0, 1.5);
        let cone = cone(16, 1.6, 1.0, 5.0);
        let canopy = sphere(2, 1.8, Vec3::new(0.0, 3.5, 0.0));
        let c_meshes = vec![add_mesh(&mut desc, trunk.clone(), 2), add_mesh(&mut desc, cone, 2)];
        desc.objects.push(Object { id: "treeC".into(), meshes: c_meshes });
        let tree_c = desc.objects.len() - 1;
        let d_meshes = vec![add_mesh(&mut desc, trunk, 3), add_mesh(&mut desc, canopy, 3)];
        desc.objects.push(Object { id: "treeD".into(), meshes: d_meshes });
        let tree_d = desc.objects.len() - 1;

        for (object, count) in [(tree_c, self.tree_counts.0), (tree_d, self.tree_counts.1)] {
            for _ in 0..count {
                let r = 0.8 * ISLAND_HALF * unit(&mut rng).sqrt();
                let a = unit(&mut rng) * std::f32::consts::TAU;
                let (x, z) = (r * a.cos(), r * a.sin());
                let scale = 0.8 + 0.8 * unit(&mut rng);
                let rot = unit(&mut rng) * std::f32::consts::TAU;
                let t = Affine::scale_rotate_y_translate(scale, rot, Vec3::new(x, height(x, z) - 0.2, z));
                desc.instances.push((object, t));
            }
        }

        if self.sun {
            desc.materials.push(Material::Emissive { emission: [6.0, 5.6, 5.0] });
            let m = desc.materials.len() - 1;
            let c = Vec3::new(-10.0, 80.0, 15.0);
            let quad = quad_grid(1, c + Vec3::new(-15.0, 0.0, -15.0), Vec3::new(30.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 30.0));
            let mesh = add_mesh(&mut desc, quad, m);
            desc.objects.push(Object { id: "sun".into(), meshes: vec![mesh] });
            desc.instances.push((desc.objects.len() - 1, Affine::IDENTITY));
        }

        let views = mini_island_views();
        desc.camera = Some(views[0]);
        Scene::new(desc).expect("generated island is valid")
    }
}

/// The fixed camera set used for the forwarding experiments: default, beach, top.
pub fn mini_island_views() -> [Camera; 3] {
    let s = ISLAND_HALF;
    let up = Vec3::new(0.0, 1.0, 0.0);
    [
        Camera { pos: Vec3::new(0.9 * s, 0.45 * s, 0.9 * s), look_at: Vec3::new(0.0, 2.0, 0.0), up, fov_y: 50.0 },
        Camera { pos: Vec3::new(-0.75 * s, 4.0, 0.7 * s), look_at: Vec3::new(0.3 * s, 2.5, -0.2 * s), up, fov_y: 55.0 },
        Camera { pos: Vec3::new(0.0, 2.6 * s, 0.01), look_at: Vec3::ZERO, up: Vec3::new(0.0, 0.0, -1.0), fov_y: 50.0 },
    ]
}

/// Closed box room with two inner blocks and a ceiling light; every object has a
/// single instance, so the scene contains no instancing at all.
pub fn box_fixture() -> Scene {
    let mut desc = SceneDesc {
        materials: vec![
            Material::Diffuse { albedo: [0.75, 0.75, 0.75] },
            Material::Diffuse { albedo: [0.70, 0.15, 0.12] },
            Material::Diffuse { albedo: [0.15, 0.65, 0.15] },
            Material::Emissive { emission: [12.0, 11.0, 9.0] },
        ],
        environment: Vec3::splat(0.05),
        ..SceneDesc::default()
    };
    let n = 6;
    let l = 10.0;
    let walls: [(&str, Vec3, Vec3, Vec3, usize); 5] = [
        ("floor", Vec3::ZERO, Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, 0.0, l), 0),
        ("ceiling", Vec3::new(0.0, l, 0.0), Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, 0.0, l), 0),
        ("back", Vec3::ZERO, Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, l, 0.0), 0),
        ("left", Vec3::ZERO, Vec3::new(0.0, l, 0.0), Vec3::new(0.0, 0.0, l), 1),
        ("right", Vec3::new(l, 0.0, 0.0), Vec3::new(0.0, l, 0.0), Vec3::new(0.0, 0.0, l), 2),
    ];
    for (id, o, u, v, mat) in walls {
        let m = add_mesh(&mut desc, quad_grid(n, o, u, v), mat);
        desc.objects.push(Object { id: id.into(), meshes: vec![m] });
        desc.instances.push((desc.objects.len() - 1, Affine::IDENTITY));
    }
    let blocks = [
        ("tall", Affine::scale_rotate_y_translate(1.0, 0.3, Vec3::new(3.2, 0.0, 3.5)), 6.0),
        ("short", Affine::scale_rotate_y_translate(1.0, -0.3, Vec3::new(6.8, 0.0, 6.0)), 3.0),
    ];
    for (id, t, h) in blocks {
        let (verts, tris) = cuboid(Vec3::new(-1.4, 0.0, -1.4), Vec3::new(1.4, h, 1.4));
        let verts = verts.into_iter().map(|v| t.point(v)).collect();
        let m = add_mesh(&mut desc, (verts, tris), 0);
        desc.objects.push(Object { id: id.into(), meshes: vec![m] });
        desc.instances.push((desc.objects.len() - 1, Affine::IDENTITY));
    }
    let lamp = quad_grid(1, Vec3::new(3.5, l - 0.01, 3.5), Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 3.0));
    let m = add_mesh(&mut desc, lamp, 3);
    desc.objects.push(Object { id: "lamp".into(), meshes: vec![m] });
    desc.instances.push((desc.objects.len() - 1, Affine::IDENTITY));
    desc.camera = Some(Camera {
        pos: Vec3::new(5.0, 5.0, 24.0),
        look_at: Vec3::new(5.0, 5.0, 0.0),
        up: Vec3::new(0.0, 1.0, 0.0),
        fov_y: 40.0,
    });
    Scene::new(desc).expect("box fixture is valid")
}

/// A hut and a lamp above it, as two single-instance objects. With `roof`,
/// the hut is a closed box with the camera inside, so every shadow ray toward
/// the lamp is blocked by the hut itself; without it the hut is a bare floor.
pub fn shadow_fixture(roof: bool) -> Scene {
    let mut desc = SceneDesc {
        materials: vec![
            Material::Diffuse { albedo: [0.7, 0.7, 0.7] },
            Material::Emissive { emission: [20.0, 20.0, 20.0] },
        ],
        environment: Vec3::splat(0.2),
        ..SceneDesc::default()
    };
    let hut = if roof {
        cuboid(Vec3::ZERO, Vec3::new(4.0, 3.0, 4.0))
    } else {
        quad_grid(2, Vec3::ZERO, Vec3::new(4.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 4.0))
    };
    let lamp = quad_grid(1, Vec3::new(1.0, 10.0, 1.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0));
    for (id, geom, mat) in [("hut", hut, 0), ("lamp", lamp, 1)] {
        let m = add_mesh(&mut desc, geom, mat);
        desc.objects.push(Object { id: id.into(), meshes: vec![m] });
        desc.instances.push((desc.objects.len() - 1, Affine::IDENTITY));
    }
    desc.camera = Some(Camera {
        pos: Vec3::new(2.0, 2.5, 3.5),
        look_at: Vec3::new(2.0, 0.0, 1.0),
        up: Vec3::new(0.0, 1.0, 0.0),
        fov_y: 70.0,
    });
    Scene::new(desc).expect("shadow fixture is valid")
}

type Tris = Vec<[u32; 3]>;

fn unit(rng: &mut ChaCha8Rng) -> f32 {
    (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
}

fn add_mesh(desc: &mut SceneDesc, (verts, tris): (Vec<Vec3>, Tris), material: usize) -> usize {
    desc.meshes.push(Mesh::new(verts, tris, material));
    desc.meshes.len() - 1
}

/// Two heightfield meshes covering the island in an interleaved block checkerboard.
fn ground_meshes(res: u32, height: &dyn Fn(f32, f32) -> f32) -> [(Tris, Vec<Vec3>); 2] {
    let block = (res / 4).max(1);
    let grid = |i: u32, j: u32| {
        let x = -ISLAND_HALF + 2.0 * ISLAND_HALF * i as f32 / res as f32;
        let z = -ISLAND_HALF + 2.0 * ISLAND_HALF * j as f32 / res as f32;
        Vec3::new(x, height(x, z), z)
    };
    let mut out: [(Tris, Vec<Vec3>, HashMap<(u32, u32), u32>); 2] = Default::default();
    for j in 0..res {
        for i in 0..res {
            let which = ((i / block + j / block) % 2) as usize;
            let (tris, verts, map) = &mut out[which];
            let mut idx = |a: u32, b: u32| {
                *map.entry((a, b)).or_insert_with(|| {
                    verts.push(grid(a, b));
                    verts.len() as u32 - 1
                })
            };
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            tris.push([v00, v01, v10]);
            tris.push([v10, v01, v11]);
        }
    }
    let [(ta, va, _), (tb, vb, _)] = out;
    [(ta, va), (tb, vb)]
}

fn quad_grid(n: u32, origin: Vec3, u: Vec3, v: Vec3) -> (Vec<Vec3>, Tris) {
    let mut verts = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            verts.push(origin + u * (i as f32 / n as f32) + v * (j as f32 / n as f32));
        }
    }
    let mut tris = Vec::new();
    let w = n + 1;
    for j in 0..n {
        for i in 0..n {
            let a = j * w + i;
            tris.push([a, a + 1, a + w]);
            tris.push([a + 1, a + w + 1, a + w]);
        }
    }
    (verts, tris)
}

fn cuboid(lo: Vec3, hi: Vec3) -> (Vec<Vec3>, Tris) {
    let verts = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let faces = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let tris = faces.iter().flat_map(|f| [[f[0], f[1], f[2]], [f[0], f[2], f[3]]]).collect();
    (verts, tris)
}

fn prism(segments: u32, radius: f32, y0: f32, y1: f32) -> (Vec<Vec3>, Tris) {
    let mut verts = Vec::new();
    for k in 0..segments {
        let a = k as f32 / segments as f32 * std::f32::consts::TAU;
        let (s, c) = a.sin_cos();
        verts.push(Vec3::new(radius * c, y0, radius * s));
        verts.push(Vec3::new(radius * c, y1, radius * s));
    }
    let mut tris = Vec::new();
    for k in 0..segments {
        let a = 2 * k;
        let b = 2 * ((k + 1) % segments);
        tris.push([a, b, a + 1]);
        tris.push([b, b + 1, a + 1]);
    }
    (verts, tris)
}

fn cone(segments: u32, radius: f32, y0: f32, y1: f32) -> (Vec<Vec3>, Tris) {
    let mut verts = vec![Vec3::new(0.0, y1, 0.0), Vec3::new(0.0, y0, 0.0)];
    for k in 0..segments {
        let a = k as f32 / segments as f32 * std::f32::consts::TAU;
        let (s, c) = a.sin_cos();
        verts.push(Vec3::new(radius * c, y0, radius * s));
    }
    let mut tris = Vec::new();
    for k in 0..segments {
        let a = 2 + k;
        let b = 2 + (k + 1) % segments;
        tris.push([a, b, 0]);
        tris.push([b, a, 1]);
    }
    (verts, tris)
}

/// Subdivided octahedron projected to a sphere.
fn sphere(levels: u32, radius: f32, center: Vec3) -> (Vec<Vec3>, Tris) {
    let mut verts = vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, -1.0),
    ];
    let mut tris: Tris = vec![
        [0, 2, 4],
        [4, 2, 1],
        [1, 2, 5],
        [5, 2, 0],
        [4, 3, 0],
        [1, 3, 4],
        [5, 3, 1],
        [0, 3, 5],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let mut m = [0u32; 3];
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[e] = *mid.entry(key).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalized());
                    verts.len() as u32 - 1
                });
            }
            next.push([t[0], m[0], m[2]]);
            next.push([m[0], t[1], m[1]]);
            next.push([m[2], m[1], t[2]]);
            next.push([m[0], m[1], m[2]]);
        }
        tris = next;
    }
    (verts.into_iter().map(|v| center + v * radius).collect(), tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_contract() {
        let s = MiniIsland::new(8, (3, 4), 42).build();
        let counts = s.instance_counts();
        let singles = counts.iter().filter(|&&c| c == 1).count();
        assert_eq!(singles, 2);
        let mut multi: Vec<usize> = counts.iter().copied().filter(|&c| c > 1).collect();
        multi.sort();
        assert_eq!(multi, vec![3, 4]);
        assert_eq!(s.instances.len(), 9);
    }

    #[test]
    fn deterministic() {
        let a = MiniIsland::new(8, (3, 4), 42).build();
        let b = MiniIsland::new(8, (3, 4), 42).build();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        let c = MiniIsland::new(8, (3, 4), 43).build();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn ground_meshes_interleave_and_span_the_island() {
        let s = MiniIsland::new(16, (1, 1), 1).build();
        let a = s.meshes[s.objects[0].meshes[0]].bounds;
        let b = s.meshes[s.objects[1].meshes[0]].bounds;
        for g in [a, b] {
            assert!(g.extent().x > 1.5 * ISLAND_HALF && g.extent().z > 1.5 * ISLAND_HALF);
        }
        let tris: usize = [0, 1].iter().map(|&o| s.meshes[s.objects[o].meshes[0]].triangle_count()).sum();
        assert_eq!(tris, 2 * 16 * 16);
    }

    #[test]
    fn stress_scene_is_large() {
        let s = MiniIsland::new(64, (100, 100), 7).build();
        assert!(s.instances.len() >= 200);
    }

    #[test]
    fn sun_adds_lights() {
        let s = MiniIsland::new(8, (3, 4), 42).with_sun(true).build();
        assert_eq!(s.lights.len(), 2);
        assert!(s.lights.iter().all(|l| l.emission.max_component() > 0.0));
    }

    #[test]
    fn box_fixture_is_not_instanced() {
        let s = box_fixture();
        assert!(s.instance_counts().iter().all(|&c| c == 1));
        assert!(!s.lights.is_empty());
    }
}
