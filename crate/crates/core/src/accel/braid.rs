//! Splits one large mesh into several tight boxes by running the top-down SAH
//! splitter a limited number of times.

use super::bvh::sah_split;
use crate::math::{Aabb, Affine};
use crate::scene::Mesh;

/// A subset of a mesh's triangles with its tight world-space box.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    pub bounds: Aabb,
    pub triangles: Vec<u32>,
}

/// Returns at most `max_boxes` disjoint triangle subsets covering `mesh` (after
/// applying `transform`). The leaf with the largest surface area is split next.
pub fn braid_split(mesh: &Mesh, transform: &Affine, max_boxes: usize) -> Vec<Fragment> {
    assert!(max_boxes >= 1, "max_boxes must be >= 1");
    let boxes: Vec<Aabb> = (0..mesh.triangles.len())
        .map(|p| Aabb::from_points(mesh.triangle(p).map(|v| transform.point(v))))
        .collect();
    let make = |tris: Vec<u32>| Fragment {
        bounds: tris.iter().fold(Aabb::EMPTY, |b, &t| b.union(boxes[t as usize])),
        triangles: tris,
    };
    let mut leaves = vec![make((0..mesh.triangles.len() as u32).collect())];
    while leaves.len() < max_boxes {
        let pick = leaves
            .iter()
            .enumerate()
            .filter(|(_, f)| f.triangles.len() > 1)
            .fold(None::<(usize, f32)>, |best, (i, f)| {
                let a = f.bounds.surface_area();
                match best {
                    Some((_, ba)) if ba >= a => best,
                    _ => Some((i, a)),
                }
            });
        let Some((i, _)) = pick else { break };
        let (l, r) = sah_split(&leaves[i].triangles, &boxes).expect("leaf has >= 2 triangles");
        leaves[i] = make(l);
        leaves.insert(i + 1, make(r));
    }
    leaves
}
