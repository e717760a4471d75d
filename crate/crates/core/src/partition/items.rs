use std::sync::Arc;

use serde::Serialize;

use crate::accel::{braid_split, GeometryPiece};
use crate::math::Aabb;
use crate::proxy::RankMask;
use crate::scene::Scene;

/// What one partitionable item stands for.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ItemKind {
    /// All instances of an object.
    Object { object: usize },
    /// One instance of a multi-instance object.
    Instance { instance: usize },
    /// One mesh of a single-instance object.
    Mesh { instance: usize, mesh: usize },
    /// A braided triangle subset of a single-instance mesh.
    Fragment { instance: usize, mesh: usize, fragment: u32, fragments: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub kind: ItemKind,
    /// World-space bounds.
    pub bounds: Aabb,
    /// Triangle subset for fragments.
    pub triangles: Option<Arc<Vec<u32>>>,
}

impl Item {
    pub fn centroid(&self) -> crate::math::Vec3 {
        self.bounds.center()
    }

    /// Instances this item touches.
    pub fn instances<'a>(&'a self, scene: &'a Scene) -> Box<dyn Iterator<Item = usize> + 'a> {
        match self.kind {
            ItemKind::Object { object } => {
                Box::new(scene.instances.iter().enumerate().filter(move |(_, i)| i.object == object).map(|(k, _)| k))
            }
            ItemKind::Instance { instance } | ItemKind::Mesh { instance, .. } | ItemKind::Fragment { instance, .. } => {
                Box::new(std::iter::once(instance))
            }
        }
    }

    /// Geometry pieces this item expands to, tagged with `owners`.
    pub fn pieces(&self, scene: &Scene, owners: RankMask) -> Vec<GeometryPiece> {
        let whole = |instance: usize| {
            scene.objects[scene.instances[instance].object]
                .meshes
                .iter()
                .map(move |&mesh| GeometryPiece { instance, mesh, fragment: None, owners })
        };
        match &self.kind {
            ItemKind::Object { .. } | ItemKind::Instance { .. } => self.instances(scene).flat_map(whole).collect(),
            ItemKind::Mesh { instance, mesh } => {
                vec![GeometryPiece { instance: *instance, mesh: *mesh, fragment: None, owners }]
            }
            ItemKind::Fragment { instance, mesh, fragment, .. } => vec![GeometryPiece {
                instance: *instance,
                mesh: *mesh,
                fragment: Some((*fragment, self.triangles.clone().expect("fragment carries triangles"))),
                owners,
            }],
        }
    }

    pub fn label(&self, scene: &Scene) -> String {
        let obj = |inst: usize| &scene.objects[scene.instances[inst].object].id;
        match &self.kind {
            ItemKind::Object { object } => format!("object:{}", scene.objects[*object].id),
            ItemKind::Instance { instance } => format!("instance:{instance}:{}", obj(*instance)),
            ItemKind::Mesh { instance, mesh } => format!("mesh:{mesh}:{}", obj(*instance)),
            ItemKind::Fragment { mesh, fragment, instance, .. } => {
                format!("fragment:{mesh}.{fragment}:{}", obj(*instance))
            }
        }
    }
}

/// Instances of multi-instance objects, or meshes of single-instance objects.
pub(crate) fn instance_items(scene: &Scene) -> Vec<Item> {
    let counts = scene.instance_counts();
    let mut items = Vec::new();
    for (k, inst) in scene.instances.iter().enumerate() {
        if counts[inst.object] > 1 {
            items.push(Item { kind: ItemKind::Instance { instance: k }, bounds: inst.world_bounds, triangles: None });
        } else {
            items.extend(single_instance_meshes(scene, k));
        }
    }
    items
}

/// Whole multi-instance objects, or meshes of single-instance objects.
pub(crate) fn object_items(scene: &Scene) -> Vec<Item> {
    let counts = scene.instance_counts();
    let mut items = Vec::new();
    let mut seen = vec![false; scene.objects.len()];
    for (k, inst) in scene.instances.iter().enumerate() {
        if counts[inst.object] > 1 {
            if !std::mem::replace(&mut seen[inst.object], true) {
                let bounds = scene
                    .instances
                    .iter()
                    .filter(|i| i.object == inst.object)
                    .fold(Aabb::EMPTY, |b, i| b.union(i.world_bounds));
                items.push(Item { kind: ItemKind::Object { object: inst.object }, bounds, triangles: None });
            }
        } else {
            items.extend(single_instance_meshes(scene, k));
        }
    }
    items
}

fn single_instance_meshes(scene: &Scene, instance: usize) -> impl Iterator<Item = Item> + '_ {
    let inst = &scene.instances[instance];
    scene.objects[inst.object].meshes.iter().map(move |&mesh| Item {
        kind: ItemKind::Mesh { instance, mesh },
        bounds: scene.meshes[mesh].vertices.iter().fold(Aabb::EMPTY, |b, &v| b.grow(inst.transform.point(v))),
        triangles: None,
    })
}

/// Replaces mesh items that qualify as "large" with braided fragments.
pub(crate) fn presplit(scene: &Scene, items: Vec<Item>, rank_count: usize, opts: &super::PartitionOptions) -> Vec<Item> {
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let ItemKind::Mesh { instance, mesh } = item.kind else {
            out.push(item);
            continue;
        };
        let large = opts.is_large(scene, &item.bounds, rank_count);
        if !large {
            out.push(item);
            continue;
        }
        let frags = braid_split(&scene.meshes[mesh], &scene.instances[instance].transform, opts.braid_boxes);
        let n = frags.len() as u32;
        for (k, f) in frags.into_iter().enumerate() {
            out.push(Item {
                kind: ItemKind::Fragment { instance, mesh, fragment: k as u32, fragments: n },
                bounds: f.bounds,
                triangles: Some(Arc::new(f.triangles)),
            });
        }
    }
    out
}
