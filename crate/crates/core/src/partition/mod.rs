//! Scene partitioning: splits a scene into one part per rank by repeatedly
//! halving the part with the largest estimated memory footprint.
//!
//! Spatial strategies split world-space domains and may place an item in both
//! halves. Object strategies sort whole items to one side of a plane by their
//! centroid. `best` first braids large meshes into fragments and may duplicate
//! an item across a split when that lowers the cost, within a budget.

mod items;
mod memory;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::accel::GeometryPiece;
use crate::error::{Error, Result};
use crate::math::Aabb;
use crate::proxy::{ProxyMode, RankMask, MAX_RANKS};
use crate::scene::Scene;

pub use items::{Item, ItemKind};
pub use memory::{memory_estimate, MemoryModel};

pub(crate) use memory::Estimator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SpatialSimple,
    SpatialSah,
    ObjectNaive,
    ObjectProxies,
    BvhStyle,
    Best,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::SpatialSimple,
        Strategy::SpatialSah,
        Strategy::ObjectNaive,
        Strategy::ObjectProxies,
        Strategy::BvhStyle,
        Strategy::Best,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SpatialSimple => "spatial-simple",
            Strategy::SpatialSah => "spatial-sah",
            Strategy::ObjectNaive => "object-naive",
            Strategy::ObjectProxies => "object-proxies",
            Strategy::BvhStyle => "bvh-style",
            Strategy::Best => "best",
        }
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, Strategy::SpatialSimple | Strategy::SpatialSah)
    }

    /// All instances of an object land on one rank.
    pub fn is_object(self) -> bool {
        matches!(self, Strategy::ObjectNaive | Strategy::ObjectProxies)
    }

    /// Proxy representation paired with this strategy by default.
    pub fn default_proxy_mode(self, opts: &PartitionOptions) -> ProxyMode {
        match self {
            Strategy::SpatialSimple | Strategy::SpatialSah => ProxyMode::DomainBoxes,
            Strategy::ObjectProxies => ProxyMode::Braided(opts.braid_boxes),
            Strategy::ObjectNaive | Strategy::BvhStyle | Strategy::Best => ProxyMode::PerItem,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PartitionOptions {
    /// Largest fraction of items `best` may place on more than one rank.
    pub replication_cap: f64,
    /// Fragment count for braided meshes.
    pub braid_boxes: usize,
    /// A mesh is large if its box area exceeds this fraction of the scene area
    /// divided by the rank count...
    pub presplit_area_fraction: f32,
    /// ...or its longest extent exceeds this fraction of the scene diagonal.
    pub presplit_extent_fraction: f32,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            replication_cap: 0.05,
            braid_boxes: 64,
            presplit_area_fraction: 0.25,
            presplit_extent_fraction: 0.25,
        }
    }
}

impl PartitionOptions {
    /// Whether a world-space mesh box counts as large for pre-splitting.
    pub fn is_large(&self, scene: &Scene, bounds: &Aabb, rank_count: usize) -> bool {
        bounds.surface_area() > scene.bounds.surface_area() * self.presplit_area_fraction / rank_count as f32
            || bounds.extent().max_component() > self.presplit_extent_fraction * scene.bounds.diagonal()
    }
}

/// Axis-aligned split plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub axis: usize,
    pub pos: f32,
}

/// The 3×7 candidate planes at `i/8` of `centroids` along each axis.
pub fn candidate_planes(centroids: &Aabb) -> Vec<Plane> {
    let ext = centroids.extent();
    (0..3)
        .flat_map(|axis| (1..8).map(move |i| Plane { axis, pos: centroids.lo[axis] + ext[axis] * i as f32 / 8.0 }))
        .collect()
}

/// Blended split cost: half SAH, half memory, each relative to the unsplit part.
/// Infinite when either side is empty.
pub(crate) fn blended_cost(
    est: &Estimator,
    parent: (&[usize], Aabb, f64),
    left: (&[usize], Aabb),
    right: (&[usize], Aabb),
) -> f64 {
    if left.0.is_empty() || right.0.is_empty() {
        return f64::INFINITY;
    }
    let sah_whole = parent.1.surface_area() as f64 * parent.0.len() as f64;
    let sah = left.1.surface_area() as f64 * left.0.len() as f64 + right.1.surface_area() as f64 * right.0.len() as f64;
    let sah_term = if sah_whole > 0.0 { sah / sah_whole } else { 1.0 };
    let mem_term = (est.estimate(left.0) + est.estimate(right.0)) / parent.2;
    0.5 * sah_term + 0.5 * mem_term
}

#[derive(Clone, Debug)]
struct Part {
    items: Vec<usize>,
    /// Spatial strategies only.
    domain: Aabb,
    memory: f64,
}

struct Splitter<'a> {
    strategy: Strategy,
    items: &'a [Item],
    est: Estimator<'a>,
    replicated: Vec<bool>,
    budget: usize,
}

impl Splitter<'_> {
    fn boxes(&self, ids: &[usize]) -> Aabb {
        ids.iter().fold(Aabb::EMPTY, |b, &i| b.union(self.items[i].bounds))
    }

    fn centroids(&self, ids: &[usize]) -> Aabb {
        ids.iter().fold(Aabb::EMPTY, |b, &i| b.grow(self.items[i].centroid()))
    }

    fn part(&self, items: Vec<usize>, domain: Aabb) -> Part {
        let memory = self.est.estimate(&items);
        Part { items, domain, memory }
    }

    fn splittable(&self, p: &Part) -> bool {
        p.items.len() >= 2 && (!self.strategy.is_spatial() || p.domain.extent().max_component() > 0.0)
    }

    fn split(&mut self, p: &Part) -> (Part, Part) {
        if self.strategy.is_spatial() {
            self.split_spatial(p)
        } else {
            self.split_object(p)
        }
    }

    /// Items overlapping each closed half, with domains shrunk to their content.
    fn spatial_sides(&self, p: &Part, plane: Plane) -> ((Vec<usize>, Aabb), (Vec<usize>, Aabb)) {
        let side = |keep_low| {
            let half = p.domain.clip_half(plane.axis, plane.pos, keep_low);
            let ids: Vec<usize> = p.items.iter().copied().filter(|&i| self.items[i].bounds.overlaps(&half)).collect();
            let shrunk = self.boxes(&ids).intersection(half);
            (ids, shrunk)
        };
        (side(true), side(false))
    }

    fn split_spatial(&mut self, p: &Part) -> (Part, Part) {
        let median = {
            let axis = p.domain.extent().max_axis();
            Plane { axis, pos: p.domain.center()[axis] }
        };
        let plane = match self.strategy {
            Strategy::SpatialSah => {
                let parent = (p.items.as_slice(), p.domain, p.memory);
                let mut best = (f64::INFINITY, median);
                for plane in candidate_planes(&self.centroids(&p.items)) {
                    if !(plane.pos > p.domain.lo[plane.axis] && plane.pos < p.domain.hi[plane.axis]) {
                        continue;
                    }
                    let (l, r) = self.spatial_sides(p, plane);
                    let c = blended_cost(&self.est, parent, (&l.0, l.1), (&r.0, r.1));
                    if c < best.0 {
                        best = (c, plane);
                    }
                }
                best.1
            }
            _ => median,
        };
        let ((li, ld), (ri, rd)) = self.spatial_sides(p, plane);
        (self.part(li, ld), self.part(ri, rd))
    }

    /// Cheapest centroid split of `ids`, or `None` if every candidate is degenerate.
    fn best_object_plane(&self, ids: &[usize], memory: f64) -> Option<(Plane, f64)> {
        let parent = (ids, self.boxes(ids), memory);
        let mut best: Option<(Plane, f64)> = None;
        for plane in candidate_planes(&self.centroids(ids)) {
            let (l, r) = self.centroid_sides(ids, plane);
            let c = blended_cost(&self.est, parent, (&l, self.boxes(&l)), (&r, self.boxes(&r)));
            if c.is_finite() && best.is_none_or(|b| c < b.1) {
                best = Some((plane, c));
            }
        }
        best
    }

    fn centroid_sides(&self, ids: &[usize], plane: Plane) -> (Vec<usize>, Vec<usize>) {
        ids.iter().partition(|&&i| self.items[i].centroid()[plane.axis] < plane.pos)
    }

    fn split_object(&mut self, p: &Part) -> (Part, Part) {
        let Some((plane, _)) = self.best_object_plane(&p.items, p.memory) else {
            // every centroid coincides: halve in item order
            let (l, r) = p.items.split_at(p.items.len() / 2);
            return (self.part(l.to_vec(), Aabb::EMPTY), self.part(r.to_vec(), Aabb::EMPTY));
        };
        let (mut l, mut r) = self.centroid_sides(&p.items, plane);
        if self.strategy == Strategy::Best {
            (l, r) = self.replicate(p, plane, l);
        }
        (self.part(l, Aabb::EMPTY), self.part(r, Aabb::EMPTY))
    }

    /// Duplicates straddling items into both sides while that lowers the cost
    /// and the replication budget allows.
    fn replicate(&mut self, p: &Part, plane: Plane, l: Vec<usize>) -> (Vec<usize>, Vec<usize>) {
        #[derive(Clone, Copy, PartialEq)]
        enum Side {
            L,
            R,
            Both,
        }
        let mut side: Vec<(usize, Side)> = p
            .items
            .iter()
            .map(|&i| (i, if l.contains(&i) { Side::L } else { Side::R }))
            .collect();
        let parent = (p.items.as_slice(), self.boxes(&p.items), p.memory);
        let cost = |this: &Self, side: &[(usize, Side)]| {
            let mut sides = [(Vec::new(), Aabb::EMPTY), (Vec::new(), Aabb::EMPTY)];
            for &(i, s) in side {
                let b = this.items[i].bounds;
                match s {
                    Side::L => {
                        sides[0].0.push(i);
                        sides[0].1 = sides[0].1.union(b);
                    }
                    Side::R => {
                        sides[1].0.push(i);
                        sides[1].1 = sides[1].1.union(b);
                    }
                    Side::Both => {
                        for (k, s) in sides.iter_mut().enumerate() {
                            s.0.push(i);
                            s.1 = s.1.union(b.clip_half(plane.axis, plane.pos, k == 0));
                        }
                    }
                }
            }
            blended_cost(&this.est, parent, (&sides[0].0, sides[0].1), (&sides[1].0, sides[1].1))
        };
        for k in 0..side.len() {
            let i = side[k].0;
            let b = self.items[i].bounds;
            if !(b.lo[plane.axis] < plane.pos && plane.pos < b.hi[plane.axis]) {
                continue;
            }
            if !self.replicated[i] && self.budget == 0 {
                continue;
            }
            let mut trial = side.clone();
            let mut eval = |s| {
                trial[k].1 = s;
                cost(self, &trial)
            };
            let (cl, cr, cd) = (eval(Side::L), eval(Side::R), eval(Side::Both));
            if cd < cl.min(cr) {
                side[k].1 = Side::Both;
                if !std::mem::replace(&mut self.replicated[i], true) {
                    self.budget -= 1;
                }
            }
        }
        let l = side.iter().filter(|s| s.1 != Side::R).map(|s| s.0).collect();
        let r = side.iter().filter(|s| s.1 != Side::L).map(|s| s.0).collect();
        (l, r)
    }

    /// Index of the splittable part with the largest memory, ties to the lower index.
    fn largest(&self, parts: &[Part]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, p) in parts.iter().enumerate() {
            if self.splittable(p) && best.is_none_or(|b| p.memory > parts[b].memory) {
                best = Some(k);
            }
        }
        best
    }
}

/// Items a strategy partitions, before any splitting.
pub fn partition_items(scene: &Scene, strategy: Strategy, rank_count: usize, opts: &PartitionOptions) -> Vec<Item> {
    match strategy {
        Strategy::SpatialSimple | Strategy::SpatialSah | Strategy::BvhStyle => items::instance_items(scene),
        Strategy::ObjectNaive | Strategy::ObjectProxies => items::object_items(scene),
        Strategy::Best => items::presplit(scene, items::instance_items(scene), rank_count, opts),
    }
}

/// Runs the split loop until `target` parts exist or nothing is splittable,
/// calling `observe` with the parts after every step (including the start).
fn run<'a>(
    scene: &'a Scene,
    strategy: Strategy,
    items: &'a [Item],
    model: MemoryModel,
    opts: &PartitionOptions,
    target: usize,
    mut observe: impl FnMut(&[Part]),
) -> (Vec<Part>, Vec<bool>) {
    let est = Estimator::new(scene, items, model);
    let budget = (opts.replication_cap * items.len() as f64).floor() as usize;
    let mut s = Splitter { strategy, items, est, replicated: vec![false; items.len()], budget };
    let all: Vec<usize> = (0..items.len()).collect();
    let domain = s.boxes(&all).intersection(scene.bounds);
    let mut parts = vec![s.part(all, domain)];
    observe(&parts);
    while parts.len() < target {
        let Some(k) = s.largest(&parts) else { break };
        let (l, r) = s.split(&parts[k]);
        parts[k] = l;
        parts.insert(k + 1, r);
        observe(&parts);
    }
    (parts, s.replicated)
}

/// Assignment of partition items to ranks.
#[derive(Clone, Debug)]
pub struct PartitionPlan {
    pub strategy: Strategy,
    pub rank_count: usize,
    pub options: PartitionOptions,
    pub items: Vec<Item>,
    /// Ranks holding each item.
    pub assignment: Vec<RankMask>,
    /// Per-rank domain; spatial strategies only.
    pub domains: Option<Vec<Aabb>>,
    /// Estimated bytes per rank.
    pub part_memory: Vec<f64>,
}

pub fn partition(
    scene: &Scene,
    rank_count: usize,
    strategy: Strategy,
    model: &MemoryModel,
    opts: &PartitionOptions,
) -> Result<PartitionPlan> {
    model.validate()?;
    if rank_count == 0 || rank_count > MAX_RANKS {
        return Err(Error::Config(format!("rank count must be in 1..={MAX_RANKS}, got {rank_count}")));
    }
    if !(0.0..=1.0).contains(&opts.replication_cap) {
        return Err(Error::Config(format!("replication cap must be in [0, 1], got {}", opts.replication_cap)));
    }
    let items = partition_items(scene, strategy, rank_count, opts);
    if rank_count > items.len() {
        return Err(Error::Partition(format!(
            "{rank_count} ranks requested but {strategy} yields only {} items",
            items.len()
        )));
    }
    let (parts, _) = run(scene, strategy, &items, *model, opts, rank_count, |_| {});
    if parts.len() < rank_count {
        return Err(Error::Partition(format!(
            "{strategy} could only produce {} of {rank_count} parts",
            parts.len()
        )));
    }
    let mut assignment = vec![RankMask::EMPTY; items.len()];
    for (r, p) in parts.iter().enumerate() {
        for &i in &p.items {
            assignment[i] = assignment[i].with(r);
        }
    }
    if let Some(i) = assignment.iter().position(|m| m.is_empty()) {
        return Err(Error::Invariant(format!("item {i} was assigned to no rank")));
    }
    Ok(PartitionPlan {
        strategy,
        rank_count,
        options: *opts,
        domains: strategy.is_spatial().then(|| parts.iter().map(|p| p.domain).collect()),
        part_memory: parts.iter().map(|p| p.memory).collect(),
        items,
        assignment,
    })
}

/// Memory of the largest part for `N = 1..=n_max`. Once no part can be split
/// further the value stays flat.
pub fn max_part_size_curve(
    scene: &Scene,
    strategy: Strategy,
    model: &MemoryModel,
    opts: &PartitionOptions,
    n_max: usize,
) -> Vec<(usize, f64)> {
    let items = partition_items(scene, strategy, n_max.max(1), opts);
    let mut curve = Vec::with_capacity(n_max);
    run(scene, strategy, &items, *model, opts, n_max, |parts| {
        curve.push((parts.len(), parts.iter().map(|p| p.memory).fold(0.0, f64::max)));
    });
    while curve.len() < n_max {
        let last = curve.last().map_or(0.0, |c| c.1);
        curve.push((curve.len() + 1, last));
    }
    curve.truncate(n_max);
    curve
}

impl PartitionPlan {
    pub fn items_of_rank(&self, rank: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(move |(_, m)| m.contains(rank)).map(|(i, _)| i)
    }

    /// Geometry rank `rank` loads.
    pub fn pieces_for_rank(&self, scene: &Scene, rank: usize) -> Vec<GeometryPiece> {
        self.items_of_rank(rank).flat_map(|i| self.items[i].pieces(scene, self.assignment[i])).collect()
    }

    pub fn replicated_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(|(_, m)| m.count() > 1).map(|(i, _)| i)
    }

    pub fn replication_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.replicated_items().count() as f64 / self.items.len() as f64
    }

    /// Every scene instance is held by at least one rank.
    pub fn covered_instances(&self, scene: &Scene) -> Vec<bool> {
        let mut covered = vec![false; scene.instances.len()];
        for item in &self.items {
            for i in item.instances(scene) {
                covered[i] = true;
            }
        }
        covered
    }

    /// JSON description: per-rank parts, per-item assignment and replication list.
    pub fn to_json(&self, scene: &Scene) -> serde_json::Value {
        let labels: Vec<String> = self.items.iter().map(|i| i.label(scene)).collect();
        let parts: Vec<_> = (0..self.rank_count)
            .map(|r| {
                serde_json::json!({
                    "rank": r,
                    "memoryBytes": self.part_memory[r],
                    "domain": self.domains.as_ref().map(|d| [d[r].lo.to_array(), d[r].hi.to_array()]),
                    "items": self.items_of_rank(r).map(|i| labels[i].clone()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let assignment: Vec<_> = self
            .items
            .iter()
            .zip(&self.assignment)
            .zip(&labels)
            .map(|((item, m), label)| {
                serde_json::json!({
                    "item": label,
                    "kind": item.kind,
                    "bounds": [item.bounds.lo.to_array(), item.bounds.hi.to_array()],
                    "ranks": m.iter().collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "strategy": self.strategy,
            "rankCount": self.rank_count,
            "options": self.options,
            "replicationFraction": self.replication_fraction(),
            "replicated": self.replicated_items().map(|i| labels[i].clone()).collect::<Vec<_>>(),
            "parts": parts,
            "assignment": assignment,
        })
    }
}
