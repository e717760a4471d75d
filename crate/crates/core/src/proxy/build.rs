use std::fmt::Write as _;

use super::{Proxy, ProxySet, RankMask};
use crate::accel::braid_split;
use crate::error::{Error, Result};
use crate::partition::{ItemKind, PartitionPlan};
use crate::scene::Scene;

/// How a partition plan is turned into proxies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProxyMode {
    /// One box per rank: its spatial domain.
    DomainBoxes,
    /// One box per partition item.
    PerItem,
    /// One box per instance of instanced objects; large non-instanced meshes
    /// are braided into at most this many boxes.
    Braided(usize),
}

pub fn build_proxy_set(plan: &PartitionPlan, scene: &Scene, mode: ProxyMode) -> Result<ProxySet> {
    let mut proxies = Vec::new();
    match mode {
        ProxyMode::DomainBoxes => {
            let domains = plan
                .domains
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} plans have no domains", plan.strategy)))?;
            for (r, d) in domains.iter().enumerate() {
                if !d.is_empty() {
                    proxies.push(Proxy { bounds: *d, owners: RankMask::single(r) });
                }
            }
        }
        ProxyMode::PerItem => {
            for (item, &owners) in plan.items.iter().zip(&plan.assignment) {
                proxies.push(Proxy { bounds: item.bounds, owners });
            }
        }
        ProxyMode::Braided(k) => {
            for (item, &owners) in plan.items.iter().zip(&plan.assignment) {
                match item.kind {
                    ItemKind::Object { .. } => {
                        for i in item.instances(scene) {
                            proxies.push(Proxy { bounds: scene.instances[i].world_bounds, owners });
                        }
                    }
                    ItemKind::Mesh { instance, mesh }
                        if plan.options.is_large(scene, &item.bounds, plan.rank_count) =>
                    {
                        let frags = braid_split(&scene.meshes[mesh], &scene.instances[instance].transform, k);
                        proxies.extend(frags.into_iter().map(|f| Proxy { bounds: f.bounds, owners }));
                    }
                    _ => proxies.push(Proxy { bounds: item.bounds, owners }),
                }
            }
        }
    }
    Ok(ProxySet::new(proxies))
}

/// ASCII PLY of all proxy boxes, colored by owner mask.
pub fn proxy_boxes_ply(set: &ProxySet) -> String {
    let n = set.proxies.len();
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        8 * n,
        6 * n
    );
    for p in &set.proxies {
        let h = super::fmix32(p.owners.0 as u32 ^ (p.owners.0 >> 32) as u32 ^ 0x9e37_79b9);
        let [r, g, b] = [(h >> 16) as u8 | 0x40, (h >> 8) as u8 | 0x40, h as u8 | 0x40];
        for c in 0..8 {
            let pick = |axis: usize| if c >> axis & 1 == 0 { p.bounds.lo[axis] } else { p.bounds.hi[axis] };
            let _ = writeln!(s, "{} {} {} {r} {g} {b}", pick(0), pick(1), pick(2));
        }
    }
    const FACES: [[usize; 4]; 6] = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    for k in 0..n {
        for f in FACES {
            let _ = writeln!(s, "4 {} {} {} {}", 8 * k + f[0], 8 * k + f[1], 8 * k + f[2], 8 * k + f[3]);
        }
    }
    s
}
