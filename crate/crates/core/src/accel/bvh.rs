//! Binned-SAH bounding volume hierarchy over arbitrary boxes.

use crate::math::{Aabb, Ray};

pub const SAH_BINS: usize = 16;

/// Flattened node. Leaves reference `prim_order[first..first + count]`; inner nodes
/// (`count == 0`) have their two children at `first` and `first + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub first: u32,
    pub count: u32,
}

impl BvhNode {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Primitive indices in leaf order.
    pub prim_order: Vec<u32>,
}

/// Relative slack on a node's slab interval.
const SLAB_PAD: f32 = 1e-5;

/// Splits `prims` into two non-empty halves using binned SAH over the centroids of
/// `boxes`, falling back to an index median when the centroid spread is degenerate.
/// Returns `None` for fewer than two primitives.
pub fn sah_split(prims: &[u32], boxes: &[Aabb]) -> Option<(Vec<u32>, Vec<u32>)> {
    if prims.len() < 2 {
        return None;
    }
    let centroid = |p: u32| boxes[p as usize].center();
    let cb = prims.iter().fold(Aabb::EMPTY, |b, &p| b.grow(centroid(p)));
    let ext = cb.extent();

    let mut best: Option<(f32, usize, usize)> = None;
    for axis in 0..3 {
        if ext[axis] <= 0.0 {
            continue;
        }
        let scale = SAH_BINS as f32 / ext[axis];
        let bin_of = |p: u32| (((centroid(p)[axis] - cb.lo[axis]) * scale) as usize).min(SAH_BINS - 1);
        let mut bins = [(Aabb::EMPTY, 0usize); SAH_BINS];
        for &p in prims {
            let b = &mut bins[bin_of(p)];
            b.0 = b.0.union(boxes[p as usize]);
            b.1 += 1;
        }
        let mut right_area = [0f32; SAH_BINS];
        let mut right_count = [0usize; SAH_BINS];
        let (mut acc, mut n) = (Aabb::EMPTY, 0);
        for i in (1..SAH_BINS).rev() {
            acc = acc.union(bins[i].0);
            n += bins[i].1;
            right_area[i] = acc.surface_area();
            right_count[i] = n;
        }
        let (mut acc, mut n) = (Aabb::EMPTY, 0);
        for split in 1..SAH_BINS {
            acc = acc.union(bins[split - 1].0);
            n += bins[split - 1].1;
            if n == 0 || right_count[split] == 0 {
                continue;
            }
            let cost = acc.surface_area() * n as f32 + right_area[split] * right_count[split] as f32;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, split));
            }
        }
    }

    match best {
        Some((_, axis, split)) => {
            let scale = SAH_BINS as f32 / ext[axis];
            let (l, r): (Vec<u32>, Vec<u32>) = prims.iter().partition(|&&p| {
                ((((centroid(p)[axis] - cb.lo[axis]) * scale) as usize).min(SAH_BINS - 1)) < split
            });
            Some((l, r))
        }
        None => {
            let mid = prims.len() / 2;
            Some((prims[..mid].to_vec(), prims[mid..].to_vec()))
        }
    }
}

impl Bvh {
    /// Builds a hierarchy over `boxes`; leaves hold at most `max_leaf` primitives.
    pub fn build(boxes: &[Aabb], max_leaf: usize) -> Bvh {
        let max_leaf = max_leaf.max(1);
        let mut bvh = Bvh { nodes: Vec::new(), prim_order: Vec::with_capacity(boxes.len()) };
        if boxes.is_empty() {
            return bvh;
        }
        let all: Vec<u32> = (0..boxes.len() as u32).collect();
        bvh.nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
        let mut stack = vec![(0usize, all)];
        while let Some((node, prims)) = stack.pop() {
            let bounds = prims.iter().fold(Aabb::EMPTY, |b, &p| b.union(boxes[p as usize]));
            bvh.nodes[node].bounds = bounds;
            let split = if prims.len() <= max_leaf { None } else { sah_split(&prims, boxes) };
            match split {
                Some((l, r)) => {
                    let first = bvh.nodes.len();
                    bvh.nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
                    bvh.nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
                    bvh.nodes[node].first = first as u32;
                    bvh.nodes[node].count = 0;
                    // Right pushed first so the left subtree is emitted first.
                    stack.push((first + 1, r));
                    stack.push((first, l));
                }
                None => {
                    bvh.nodes[node].first = bvh.prim_order.len() as u32;
                    bvh.nodes[node].count = prims.len() as u32;
                    bvh.prim_order.extend_from_slice(&prims);
                }
            }
        }
        bvh
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::EMPTY, |n| n.bounds)
    }

    /// Front-to-back traversal. `visit_leaf` receives primitive indices and the
    /// current cutoff; it returns a new (smaller) cutoff when it finds something.
    /// Nodes whose entry distance exceeds the cutoff are skipped.
    pub fn traverse<F>(&self, ray: &Ray, mut cutoff: f32, mut visit_leaf: F) -> f32
    where
        F: FnMut(&[u32], f32) -> f32,
    {
        if self.nodes.is_empty() {
            return cutoff;
        }
        let inv = ray.inv_dir();
        let enter = |b: &Aabb, cutoff: f32| -> Option<f32> {
            // padded so slab rounding never culls a triangle on a face, edge or the cutoff
            let (near, far) = b.slab_padded(ray.origin, inv, SLAB_PAD)?;
            if far < ray.t_min || near > cutoff {
                None
            } else {
                Some(near)
            }
        };
        if enter(&self.nodes[0].bounds, cutoff).is_none() {
            return cutoff;
        }
        let mut stack: Vec<(u32, f32)> = Vec::with_capacity(64);
        stack.push((0, f32::NEG_INFINITY));
        while let Some((idx, near)) = stack.pop() {
            if near > cutoff {
                continue;
            }
            let node = &self.nodes[idx as usize];
            if node.is_leaf() {
                let prims = &self.prim_order[node.first as usize..(node.first + node.count) as usize];
                cutoff = visit_leaf(prims, cutoff);
                continue;
            }
            let (a, b) = (node.first, node.first + 1);
            let ea = enter(&self.nodes[a as usize].bounds, cutoff);
            let eb = enter(&self.nodes[b as usize].bounds, cutoff);
            match (ea, eb) {
                (Some(ta), Some(tb)) => {
                    if ta <= tb {
                        stack.push((b, tb));
                        stack.push((a, ta));
                    } else {
                        stack.push((a, ta));
                        stack.push((b, tb));
                    }
                }
                (Some(ta), None) => stack.push((a, ta)),
                (None, Some(tb)) => stack.push((b, tb)),
                (None, None) => {}
            }
        }
        cutoff
    }

    /// Structural self-check used by tests: child boxes nest in parents and every
    /// primitive box is inside its leaf box.
    pub fn validate(&self, boxes: &[Aabb]) -> Result<(), String> {
        let mut seen = vec![0u32; boxes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_leaf() {
                for &p in &self.prim_order[n.first as usize..(n.first + n.count) as usize] {
                    seen[p as usize] += 1;
                    if !n.bounds.contains(&boxes[p as usize]) {
                        return Err(format!("leaf {i} does not contain primitive {p}"));
                    }
                }
            } else {
                for c in [n.first, n.first + 1] {
                    if !n.bounds.contains(&self.nodes[c as usize].bounds) {
                        return Err(format!("node {i} does not contain child {c}"));
                    }
                }
            }
        }
        if let Some(p) = seen.iter().position(|&c| c != 1) {
            return Err(format!("primitive {p} appears {} times", seen[p]));
        }
        Ok(())
    }
}

/// Centroid of a box list, used by callers that split on centroids.
pub fn centroid_bounds(boxes: &[Aabb]) -> Aabb {
    boxes.iter().fold(Aabb::EMPTY, |b, x| b.grow(x.center()))
}
