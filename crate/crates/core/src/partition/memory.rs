use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::items::{Item, ItemKind};
use crate::scene::Scene;

/// Per-element byte weights for the memory estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryModel {
    pub bytes_per_triangle: f64,
    pub bytes_per_vertex: f64,
    pub bytes_per_instance: f64,
    pub bytes_per_mesh: f64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        MemoryModel { bytes_per_triangle: 24.0, bytes_per_vertex: 24.0, bytes_per_instance: 64.0, bytes_per_mesh: 128.0 }
    }
}

impl MemoryModel {
    pub fn new(tri: f64, vert: f64, instance: f64, mesh: f64) -> Self {
        MemoryModel { bytes_per_triangle: tri, bytes_per_vertex: vert, bytes_per_instance: instance, bytes_per_mesh: mesh }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let w = [self.bytes_per_triangle, self.bytes_per_vertex, self.bytes_per_instance, self.bytes_per_mesh];
        if w.iter().all(|&x| x.is_finite() && x > 0.0) {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("memory model weights must be positive, got {w:?}")))
        }
    }

    fn mesh_cost(&self, tris: usize, verts: usize) -> f64 {
        tris as f64 * self.bytes_per_triangle + verts as f64 * self.bytes_per_vertex + self.bytes_per_mesh
    }
}

/// Resolved per-item geometry for fast repeated estimates over item subsets.
pub(crate) struct Estimator<'a> {
    scene: &'a Scene,
    model: MemoryModel,
    /// Whole meshes per item.
    meshes: Vec<Vec<usize>>,
    /// `(mesh, fragment count, triangles, vertices used)` for fragment items.
    fragments: Vec<Option<(usize, u32, usize, Vec<u32>)>>,
    instances: Vec<Vec<usize>>,
}

impl<'a> Estimator<'a> {
    pub fn new(scene: &'a Scene, items: &[Item], model: MemoryModel) -> Self {
        let mut meshes = Vec::with_capacity(items.len());
        let mut fragments = Vec::with_capacity(items.len());
        let mut instances = Vec::with_capacity(items.len());
        for item in items {
            instances.push(item.instances(scene).collect());
            match &item.kind {
                ItemKind::Object { object } => {
                    meshes.push(scene.objects[*object].meshes.clone());
                    fragments.push(None);
                }
                ItemKind::Instance { instance } => {
                    meshes.push(scene.objects[scene.instances[*instance].object].meshes.clone());
                    fragments.push(None);
                }
                ItemKind::Mesh { mesh, .. } => {
                    meshes.push(vec![*mesh]);
                    fragments.push(None);
                }
                ItemKind::Fragment { mesh, fragments: n, .. } => {
                    let tris = item.triangles.as_ref().expect("fragment carries triangles");
                    let m = &scene.meshes[*mesh];
                    let mut verts: Vec<u32> = tris.iter().flat_map(|&t| m.triangles[t as usize]).collect();
                    verts.sort_unstable();
                    verts.dedup();
                    meshes.push(Vec::new());
                    fragments.push(Some((*mesh, *n, tris.len(), verts)));
                }
            }
        }
        Estimator { scene, model, meshes, fragments, instances }
    }

    /// Bytes for the union of `items`: unique meshes counted once; a fragmented
    /// mesh costs its present triangles and the union of their vertices, or the
    /// whole mesh once all its fragments are present.
    pub fn estimate(&self, items: &[usize]) -> f64 {
        let mut whole: Vec<usize> = Vec::new();
        let mut partial: HashMap<usize, (u32, u32, usize, Vec<u32>)> = HashMap::new();
        let mut instances: Vec<usize> = Vec::new();
        for &i in items {
            whole.extend_from_slice(&self.meshes[i]);
            instances.extend_from_slice(&self.instances[i]);
            if let Some((mesh, n, tris, verts)) = &self.fragments[i] {
                let e = partial.entry(*mesh).or_insert((0, *n, 0, Vec::new()));
                e.0 += 1;
                e.2 += tris;
                e.3.extend_from_slice(verts);
            }
        }
        whole.sort_unstable();
        whole.dedup();
        instances.sort_unstable();
        instances.dedup();
        let mut bytes = instances.len() as f64 * self.model.bytes_per_instance;
        for &m in &whole {
            let mesh = &self.scene.meshes[m];
            bytes += self.model.mesh_cost(mesh.triangle_count(), mesh.vertex_count());
        }
        let mut partial: Vec<_> = partial.into_iter().collect();
        partial.sort_unstable_by_key(|e| e.0);
        for (m, (present, total, tris, mut verts)) in partial {
            if whole.binary_search(&m).is_ok() {
                continue;
            }
            let mesh = &self.scene.meshes[m];
            if present >= total {
                bytes += self.model.mesh_cost(mesh.triangle_count(), mesh.vertex_count());
            } else {
                verts.sort_unstable();
                verts.dedup();
                bytes += self.model.mesh_cost(tris, verts.len());
            }
        }
        bytes
    }
}

/// Estimated bytes needed to hold `items` on one rank.
pub fn memory_estimate(scene: &Scene, items: &[Item], model: &MemoryModel) -> f64 {
    let all: Vec<usize> = (0..items.len()).collect();
    Estimator::new(scene, items, *model).estimate(&all)
}
