//! Distributed scene description and the ray forwarding operator.
//!
//! A [`Proxy`] is a world-space box plus the set of ranks that hold geometry
//! inside it. Proxies may overlap freely. Given a ray and the set of ranks it has
//! already visited, [`ProxyBvh::select_next_rank`] finds the proxy with the
//! smallest entry distance whose owners are all unvisited, and picks one of its
//! owners. Because the rule only depends on the ray, the visited set and the
//! (identically built) proxy hierarchy, every rank evaluates it identically; this
//! is what makes [`ProxyBvh::replay_visited`] possible.

mod build;
mod mask;

use crate::accel::Bvh;
use crate::error::{Error, Result};
use crate::math::{Aabb, Ray, Vec3};

pub use build::{build_proxy_set, proxy_boxes_ply, ProxyMode};
pub use mask::{RankMask, MAX_RANKS};

/// Relative padding applied to proxy boxes in ray queries, so geometry lying on
/// a box face is never missed through rounding.
pub const PROXY_PAD: f32 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proxy {
    pub bounds: Aabb,
    pub owners: RankMask,
}

impl Proxy {
    /// The box actually used for ray queries.
    pub fn query_bounds(&self) -> Aabb {
        let m = self.bounds.lo.abs().max(self.bounds.hi.abs()).max_component();
        self.bounds.padded(PROXY_PAD * (1.0 + m))
    }

    /// Entry distance of `ray` into this proxy within `(t_min, t_max]`, or within
    /// `(t_min, inf)` when `tmax_culling` is off.
    #[inline]
    pub fn entry(&self, ray: &Ray, inv_dir: Vec3, tmax_culling: bool) -> Option<f32> {
        entry_distance(&self.query_bounds(), ray, inv_dir, tmax_culling)
    }
}

#[inline]
fn entry_distance(b: &Aabb, ray: &Ray, inv_dir: Vec3, tmax_culling: bool) -> Option<f32> {
    let (near, far) = b.slab(ray.origin, inv_dir)?;
    if far < ray.t_min {
        return None;
    }
    let entry = near.max(ray.t_min);
    if tmax_culling && entry > ray.t_max {
        return None;
    }
    Some(entry)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProxySet {
    pub proxies: Vec<Proxy>,
}

impl ProxySet {
    pub fn new(proxies: Vec<Proxy>) -> Self {
        ProxySet { proxies }
    }

    pub fn len(&self) -> usize {
        self.proxies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proxies.is_empty()
    }

    /// Broadcast encoding: `u32` count, then `{lo: 3×f32, hi: 3×f32, owners: u64}`
    /// per proxy, all little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 32 * self.proxies.len());
        out.extend_from_slice(&(self.proxies.len() as u32).to_le_bytes());
        for p in &self.proxies {
            for v in [p.bounds.lo, p.bounds.hi] {
                for c in v.to_array() {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            out.extend_from_slice(&p.owners.0.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<ProxySet> {
        let bad = |m: &str| Error::Protocol(format!("proxy set: {m}"));
        let count = u32::from_le_bytes(bytes.get(..4).ok_or_else(|| bad("truncated header"))?.try_into().unwrap()) as usize;
        if bytes.len() != 4 + 32 * count {
            return Err(bad(&format!("expected {} bytes for {count} proxies, got {}", 4 + 32 * count, bytes.len())));
        }
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let proxies = (0..count)
            .map(|i| {
                let o = 4 + 32 * i;
                Proxy {
                    bounds: Aabb::new(Vec3::new(f(o), f(o + 4), f(o + 8)), Vec3::new(f(o + 12), f(o + 16), f(o + 20))),
                    owners: RankMask(u64::from_le_bytes(bytes[o + 24..o + 32].try_into().unwrap())),
                }
            })
            .collect();
        Ok(ProxySet { proxies })
    }

    /// Checks that every sample point lies in some proxy whose owner set is a
    /// non-empty subset of `holders`. Returns the offending point on failure.
    pub fn covers(&self, points: &[Vec3], holders: RankMask) -> Result<(), Vec3> {
        for &p in points {
            let ok = self.proxies.iter().any(|x| {
                !x.owners.is_empty() && x.owners.is_subset_of(holders) && x.query_bounds().contains_point(p)
            });
            if !ok {
                return Err(p);
            }
        }
        Ok(())
    }
}

/// Identifies a ray for the pseudo-random owner pick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardKey {
    pub pixel: u32,
    pub bounce: u32,
}

/// murmur3 32-bit finalizer.
#[inline]
pub fn fmix32(mut h: u32) -> u32 {
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    h
}

/// Seed for picking among a proxy's owners: a hash of the pixel, the bounce and
/// the number of ranks visited so far.
#[inline]
pub fn pick_seed(key: ForwardKey, visited_count: u32) -> u32 {
    let mut h = fmix32(key.pixel.wrapping_mul(0xcc9e_2d51));
    h = fmix32(h ^ key.bounce.wrapping_mul(0x1b87_3593).wrapping_add(0xe654_6b64));
    fmix32(h ^ visited_count.wrapping_mul(0x85eb_ca6b).wrapping_add(0x27d4_eb2f))
}

/// Hierarchy over a proxy set, identical on every rank built from the same set.
#[derive(Clone, Debug)]
pub struct ProxyBvh {
    set: ProxySet,
    padded: Vec<Aabb>,
    bvh: Bvh,
}

impl ProxyBvh {
    pub fn build(set: ProxySet) -> ProxyBvh {
        let padded: Vec<Aabb> = set.proxies.iter().map(Proxy::query_bounds).collect();
        let bvh = Bvh::build(&padded, 2);
        ProxyBvh { set, padded, bvh }
    }

    pub fn proxies(&self) -> &ProxySet {
        &self.set
    }

    /// Closest eligible proxy: minimum entry distance among proxies whose owners
    /// do not intersect `visited`, ties to the lower index.
    pub fn closest_eligible(&self, ray: &Ray, visited: RankMask, tmax_culling: bool) -> Option<(usize, f32)> {
        let inv = ray.inv_dir();
        let mut best: Option<(usize, f32)> = None;
        let cutoff = if tmax_culling { ray.t_max } else { f32::INFINITY };
        self.bvh.traverse(ray, cutoff, |prims, cutoff| {
            for &p in prims {
                let p = p as usize;
                if self.set.proxies[p].owners.intersects(visited) {
                    continue;
                }
                if let Some(e) = entry_distance(&self.padded[p], ray, inv, tmax_culling) {
                    let better = match best {
                        None => true,
                        Some((bi, be)) => e < be || (e == be && p < bi),
                    };
                    if better {
                        best = Some((p, e));
                    }
                }
            }
            best.map_or(cutoff, |(_, e)| e.min(cutoff))
        });
        best
    }

    /// The forwarding operator: next rank for `ray`, or `None` when its
    /// distributed traversal is complete.
    pub fn select_next_rank(&self, ray: &Ray, visited: RankMask, tmax_culling: bool, pick: u32) -> Option<usize> {
        self.closest_eligible(ray, visited, tmax_culling)
            .and_then(|(p, _)| self.set.proxies[p].owners.pick(pick))
    }

    /// [`select_next_rank`](Self::select_next_rank) with the seed derived from `key`.
    pub fn next_rank(&self, ray: &Ray, visited: RankMask, tmax_culling: bool, key: ForwardKey) -> Option<usize> {
        self.select_next_rank(ray, visited, tmax_culling, pick_seed(key, visited.count()))
    }

    /// Reconstructs the visited set of a ray generated on `origin` that has just
    /// arrived on `self_rank`, by re-running the operator (without tMax culling)
    /// until it selects `self_rank`.
    pub fn replay_visited(
        &self,
        ray: &Ray,
        origin: usize,
        self_rank: usize,
        rank_count: usize,
        key: ForwardKey,
    ) -> Result<RankMask> {
        let mut visited = RankMask::single(origin);
        if origin == self_rank {
            return Ok(visited);
        }
        for _ in 0..rank_count {
            match self.next_rank(ray, visited, false, key) {
                Some(r) if r == self_rank => return Ok(visited.with(r)),
                Some(r) => visited = visited.with(r),
                None => {
                    return Err(Error::Protocol(format!(
                        "replay for pixel {} from rank {origin} ended before reaching rank {self_rank} (visited {visited:?})",
                        key.pixel
                    )))
                }
            }
        }
        Err(Error::Protocol(format!(
            "replay for pixel {} from rank {origin} did not reach rank {self_rank} within {rank_count} steps",
            key.pixel
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(lo: f32, hi: f32) -> Aabb {
        Aabb::new(Vec3::splat(lo), Vec3::splat(hi))
    }

    fn along_x(x0: f32, x1: f32) -> Aabb {
        Aabb::new(Vec3::new(x0, -1.0, -1.0), Vec3::new(x1, 1.0, 1.0))
    }

    fn x_ray() -> Ray {
        Ray::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 0.0, f32::INFINITY)
    }

    #[test]
    fn no_proxies_hit_means_done() {
        let b = ProxyBvh::build(ProxySet::new(vec![Proxy { bounds: cube(10.0, 11.0), owners: RankMask::single(1) }]));
        let r = Ray::new(Vec3::ZERO, Vec3::new(-1.0, 0.0, 0.0), 0.0, f32::INFINITY);
        assert_eq!(b.select_next_rank(&r, RankMask::EMPTY, true, 0), None);
        let empty = ProxyBvh::build(ProxySet::default());
        assert_eq!(empty.select_next_rank(&x_ray(), RankMask::EMPTY, true, 0), None);
    }

    #[test]
    fn closest_eligible_proxy_wins() {
        let b = ProxyBvh::build(ProxySet::new(vec![
            Proxy { bounds: along_x(1.0, 1.5), owners: RankMask::single(1) },
            Proxy { bounds: along_x(2.0, 2.5), owners: RankMask::single(2) },
        ]));
        assert_eq!(b.select_next_rank(&x_ray(), RankMask::single(1), true, 0), Some(2));
        assert_eq!(b.select_next_rank(&x_ray(), RankMask::EMPTY, true, 0), Some(1));
    }

    #[test]
    fn partially_visited_owner_set_is_rejected() {
        let b = ProxyBvh::build(ProxySet::new(vec![Proxy {
            bounds: along_x(1.0, 2.0),
            owners: RankMask::from_ranks([1, 2]),
        }]));
        assert_eq!(b.select_next_rank(&x_ray(), RankMask::single(1), true, 0), None);
    }

    #[test]
    fn tmax_culling_skips_proxies_behind_hit() {
        let b = ProxyBvh::build(ProxySet::new(vec![Proxy { bounds: along_x(5.0, 6.0), owners: RankMask::single(3) }]));
        let r = Ray { t_max: 4.0, ..x_ray() };
        assert_eq!(b.select_next_rank(&r, RankMask::EMPTY, true, 0), None);
        assert_eq!(b.select_next_rank(&r, RankMask::EMPTY, false, 0), Some(3));
    }

    #[test]
    fn ties_go_to_lower_index() {
        let b = ProxyBvh::build(ProxySet::new(vec![
            Proxy { bounds: along_x(1.0, 3.0), owners: RankMask::single(4) },
            Proxy { bounds: along_x(1.0, 2.0), owners: RankMask::single(2) },
        ]));
        assert_eq!(b.closest_eligible(&x_ray(), RankMask::EMPTY, true).unwrap().0, 0);
    }

    #[test]
    fn pick_uses_seed_modulo_popcount() {
        let b = ProxyBvh::build(ProxySet::new(vec![Proxy {
            bounds: along_x(1.0, 2.0),
            owners: RankMask::from_ranks([1, 3, 5]),
        }]));
        for (seed, want) in [(0, 1), (1, 3), (2, 5), (3, 1), (7, 3)] {
            assert_eq!(b.select_next_rank(&x_ray(), RankMask::EMPTY, true, seed), Some(want));
        }
    }

    #[test]
    fn replay_zero_hop() {
        let b = ProxyBvh::build(ProxySet::default());
        let key = ForwardKey { pixel: 0, bounce: 0 };
        assert_eq!(b.replay_visited(&x_ray(), 2, 2, 4, key).unwrap(), RankMask::single(2));
    }

    #[test]
    fn replay_reconstructs_line_of_ranks() {
        // The ray starts inside rank 0's box, then meets rank 2's box, then rank 1's.
        let b = ProxyBvh::build(ProxySet::new(vec![
            Proxy { bounds: along_x(-1.0, 1.0), owners: RankMask::single(0) },
            Proxy { bounds: along_x(5.0, 6.0), owners: RankMask::single(1) },
            Proxy { bounds: along_x(2.0, 3.0), owners: RankMask::single(2) },
        ]));
        let key = ForwardKey { pixel: 7, bounce: 1 };
        let ray = x_ray();
        // live traversal with bitmask tracking
        let mut visited = RankMask::single(0);
        let mut path = vec![0];
        while let Some(next) = b.next_rank(&ray, visited, false, key) {
            visited = visited.with(next);
            path.push(next);
        }
        assert_eq!(path, vec![0, 2, 1]);
        assert_eq!(b.replay_visited(&ray, 0, 1, 3, key).unwrap(), RankMask::from_ranks([0, 2, 1]));
        assert_eq!(b.replay_visited(&ray, 0, 2, 3, key).unwrap(), RankMask::from_ranks([0, 2]));
    }

    #[test]
    fn replay_that_never_reaches_self_is_a_protocol_error() {
        let b = ProxyBvh::build(ProxySet::new(vec![Proxy { bounds: along_x(2.0, 3.0), owners: RankMask::single(1) }]));
        let e = b.replay_visited(&x_ray(), 0, 2, 3, ForwardKey { pixel: 1, bounce: 0 }).unwrap_err();
        assert!(matches!(e, Error::Protocol(_)));
    }

    #[test]
    fn encoding_roundtrip_and_size() {
        let set = ProxySet::new(vec![
            Proxy { bounds: cube(0.0, 1.0), owners: RankMask::from_ranks([0, 63]) },
            Proxy { bounds: along_x(-3.5, 2.25), owners: RankMask::single(5) },
        ]);
        let bytes = set.encode();
        assert_eq!(bytes.len(), 4 + 2 * 32);
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        assert_eq!(ProxySet::decode(&bytes).unwrap(), set);
        assert!(ProxySet::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn seed_depends_on_every_input() {
        let k = ForwardKey { pixel: 10, bounce: 2 };
        let s = pick_seed(k, 1);
        assert_ne!(s, pick_seed(k, 2));
        assert_ne!(s, pick_seed(ForwardKey { pixel: 11, bounce: 2 }, 1));
        assert_ne!(s, pick_seed(ForwardKey { pixel: 10, bounce: 3 }, 1));
        assert_eq!(s, pick_seed(k, 1));
    }
}
