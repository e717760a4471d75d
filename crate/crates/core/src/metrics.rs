//! Frame statistics and the two experiment tables: rays forwarded per frame and
//! largest-part memory against part count.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{render_inprocess, RenderConfig, Setup};
use crate::error::Result;
use crate::partition::{max_part_size_curve, MemoryModel, PartitionOptions, Strategy};
use crate::scene::{Camera, Scene};
use crate::transport::TransportStats;

/// Counters one rank collects while rendering a frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub rank: usize,
    /// Estimated bytes of the geometry this rank holds.
    pub memory: f64,
    /// Records this rank sent, indexed by exchange round within an epoch.
    pub forwards_per_round: Vec<u64>,
    pub shadow_forwards: u64,
    /// Sends of rays whose traversal was complete, to a rank holding the hit.
    pub shade_forwards: u64,
    /// Rays traced against local geometry (origins and arrivals).
    pub rays_traced: u64,
    pub dropped_non_finite: u64,
    pub retrace_mismatches: u64,
    /// Arrivals on a rank already in the ray's visited set.
    pub revisits: u64,
    /// Nonzero exchange rounds per (sample, wavefront).
    pub rounds_per_wavefront: Vec<u32>,
    pub transport: TransportStats,
}

/// Statistics of one rendered frame, merged over ranks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub rank_count: usize,
    pub forwards_total: u64,
    pub forwards_per_round: Vec<u64>,
    pub shadow_forwards: u64,
    pub shade_forwards: u64,
    pub bytes_rays: u64,
    pub bytes_tiles: u64,
    pub record_size: usize,
    pub rounds_per_wavefront: Vec<u32>,
    pub max_rounds: u32,
    pub per_rank_ray_counts: Vec<u64>,
    pub per_rank_memory: Vec<f64>,
    pub dropped_non_finite: u64,
    pub retrace_mismatches: u64,
    pub revisits: u64,
    /// Off-diagonal sum of the count matrices the transport logged; an
    /// independent recount of `forwards_total`.
    pub matrix_forwards: u64,
    pub exchanges: u64,
}

impl FrameStats {
    pub fn merge(ranks: &[RankStats], record_size: usize) -> FrameStats {
        let per_rank_memory = ranks.iter().map(|r| r.memory).collect();
        let mut s = FrameStats { rank_count: ranks.len(), per_rank_memory, record_size, ..Default::default() };
        for r in ranks {
            for (k, &f) in r.forwards_per_round.iter().enumerate() {
                if s.forwards_per_round.len() <= k {
                    s.forwards_per_round.resize(k + 1, 0);
                }
                s.forwards_per_round[k] += f;
            }
            s.shadow_forwards += r.shadow_forwards;
            s.shade_forwards += r.shade_forwards;
            s.bytes_rays += r.transport.bytes_rays;
            s.bytes_tiles += r.transport.bytes_tiles;
            s.per_rank_ray_counts.push(r.rays_traced);
            s.dropped_non_finite += r.dropped_non_finite;
            s.retrace_mismatches += r.retrace_mismatches;
            s.revisits += r.revisits;
        }
        s.forwards_total = s.forwards_per_round.iter().sum();
        if let Some(r0) = ranks.first() {
            s.rounds_per_wavefront = r0.rounds_per_wavefront.clone();
            s.max_rounds = r0.rounds_per_wavefront.iter().copied().max().unwrap_or(0);
            s.exchanges = r0.transport.count_matrices.len() as u64;
            s.matrix_forwards = r0
                .transport
                .count_matrices
                .iter()
                .map(|m| {
                    m.iter()
                        .enumerate()
                        .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, &c)| c as u64))
                        .sum::<u64>()
                })
                .sum();
        }
        s
    }

    pub const CSV_HEADER: &'static str = "rank_count,forwards_total,shadow_forwards,shade_forwards,bytes_rays,bytes_tiles,\
record_size,max_rounds,exchanges,dropped_non_finite,retrace_mismatches,revisits,rays_traced,max_rank_memory";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.rank_count,
            self.forwards_total,
            self.shadow_forwards,
            self.shade_forwards,
            self.bytes_rays,
            self.bytes_tiles,
            self.record_size,
            self.max_rounds,
            self.exchanges,
            self.dropped_non_finite,
            self.retrace_mismatches,
            self.revisits,
            self.per_rank_ray_counts.iter().sum::<u64>(),
            self.per_rank_memory.iter().copied().fold(0.0, f64::max),
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardsCell {
    pub view: usize,
    pub strategy: Strategy,
    pub forwards: u64,
    pub matrix_forwards: u64,
}

/// Rays forwarded per (view, strategy) at one path per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardsTable {
    pub rank_count: usize,
    pub strategies: Vec<Strategy>,
    pub cells: Vec<ForwardsCell>,
}

impl ForwardsTable {
    pub fn get(&self, view: usize, strategy: Strategy) -> Option<u64> {
        self.cells.iter().find(|c| c.view == view && c.strategy == strategy).map(|c| c.forwards)
    }

    /// One row per view, one column per strategy.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("view");
        for st in &self.strategies {
            let _ = write!(s, ",{st}");
        }
        s.push('\n');
        let views = self.cells.iter().map(|c| c.view).max().map_or(0, |v| v + 1);
        for v in 0..views {
            let _ = write!(s, "{v}");
            for &st in &self.strategies {
                let _ = write!(s, ",{}", self.get(v, st).unwrap_or(0));
            }
            s.push('\n');
        }
        s
    }
}

/// Renders each view with each strategy at 1 spp and records forwards.
/// `base` supplies size, bounces, seed and mask mode; its spp is overridden.
pub fn tabulate_forwards(
    scene: &std::sync::Arc<Scene>,
    views: &[Camera],
    strategies: &[Strategy],
    rank_count: usize,
    base: &RenderConfig,
    model: &MemoryModel,
    opts: &PartitionOptions,
) -> Result<ForwardsTable> {
    let mut cells = Vec::new();
    for &strategy in strategies {
        let setup = Setup::new(scene.clone(), rank_count, strategy, model, opts, None)?;
        for (view, cam) in views.iter().enumerate() {
            let cfg = RenderConfig { spp: 1, camera: Some(*cam), ..base.clone() };
            let out = render_inprocess(&setup, &cfg)?;
            cells.push(ForwardsCell {
                view,
                strategy,
                forwards: out.stats.forwards_total,
                matrix_forwards: out.stats.matrix_forwards,
            });
        }
    }
    Ok(ForwardsTable { rank_count, strategies: strategies.to_vec(), cells })
}

/// Largest-part memory curves, one per strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxPartTable {
    pub strategies: Vec<Strategy>,
    /// `curves[s][n - 1]` is the largest part's bytes for `n` parts.
    pub curves: Vec<Vec<f64>>,
}

impl MaxPartTable {
    pub fn curve(&self, strategy: Strategy) -> Option<&[f64]> {
        self.strategies.iter().position(|&s| s == strategy).map(|i| self.curves[i].as_slice())
    }

    /// Columns: part count, then one per strategy. Also readable by gnuplot
    /// with `set datafile separator ","`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parts");
        for st in &self.strategies {
            let _ = write!(s, ",{st}");
        }
        s.push('\n');
        let n = self.curves.first().map_or(0, Vec::len);
        for k in 0..n {
            let _ = write!(s, "{}", k + 1);
            for c in &self.curves {
                let _ = write!(s, ",{}", c[k]);
            }
            s.push('\n');
        }
        s
    }
}

pub fn tabulate_max_part(
    scene: &Scene,
    strategies: &[Strategy],
    n_max: usize,
    model: &MemoryModel,
    opts: &PartitionOptions,
) -> MaxPartTable {
    let curves = strategies
        .iter()
        .map(|&st| max_part_size_curve(scene, st, model, opts, n_max).into_iter().map(|(_, b)| b).collect())
        .collect();
    MaxPartTable { strategies: strategies.to_vec(), curves }
}
