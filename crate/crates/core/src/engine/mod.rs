//! Per-rank wavefront path tracer. Wavefront `b` carries the paths of bounce
//! `b` plus the shadow rays spawned while shading bounce `b - 1`. Each
//! wavefront runs trace / route / exchange rounds until no rank has a ray to
//! send, then every rank shades what ended on it.

pub mod image;
pub mod rng;
pub mod shade;

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::accel::{GeometryPiece, LocalScene};
use crate::error::{Error, Result};
use crate::math::Ray;
use crate::metrics::{FrameStats, RankStats};
use crate::partition::{partition, MemoryModel, PartitionOptions, PartitionPlan, Strategy};
use crate::proxy::{build_proxy_set, pick_seed, ForwardKey, ProxyBvh, ProxyMode, ProxySet, RankMask};
use crate::scene::{Camera, Scene};
use crate::transport::wire::FLAG_SHADE_ONLY;
use crate::transport::{MaskMode, Opcode, PathRecord, RankGroup};
use shade::{primary_ray, record_ray, trace_path, Shader};

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(v: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    v.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(v: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    v.iter().map(f).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    /// Last bounce that still samples lights and spawns a continuation.
    pub max_bounce: u32,
    pub frame_seed: u64,
    pub mask: MaskMode,
    /// Skip proxies beyond the ray's current closest hit.
    pub tmax_culling: bool,
    /// Roulette threshold on the largest throughput component.
    pub roulette_threshold: f32,
    /// Log every (ray, rank) visit; needed for the revisit and replay checks.
    pub record_visits: bool,
    /// Overrides the scene camera.
    pub camera: Option<Camera>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 128,
            height: 128,
            spp: 1,
            max_bounce: 4,
            frame_seed: 0,
            mask: MaskMode::Bitmask64,
            tmax_culling: true,
            roulette_threshold: 0.1,
            record_visits: false,
            camera: None,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if (self.width as u64) * (self.height as u64) > crate::transport::wire::MAX_PIXELS as u64 {
            return Err(Error::Config(format!("{}x{} exceeds the pixel id range", self.width, self.height)));
        }
        if self.mask == MaskMode::Replay && self.tmax_culling {
            return Err(Error::Config("replay mode requires tmax culling to be disabled".into()));
        }
        if !(self.roulette_threshold > 0.0 && self.roulette_threshold.is_finite()) {
            return Err(Error::Config("roulette threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> u32 {
        self.width * self.height
    }
}

/// One traversal of one ray on one rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Visit {
    pub sample: u32,
    pub wavefront: u32,
    pub pixel: u32,
    pub shadow: bool,
    pub rank: u8,
    /// Visited set after merging `rank`.
    pub visited: RankMask,
}

impl Visit {
    const BYTES: usize = 22;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.sample.to_le_bytes());
        out.extend_from_slice(&self.wavefront.to_le_bytes());
        out.extend_from_slice(&self.pixel.to_le_bytes());
        out.push(self.shadow as u8);
        out.push(self.rank);
        out.extend_from_slice(&self.visited.0.to_le_bytes());
    }

    fn decode(b: &[u8]) -> Visit {
        let u = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        Visit {
            sample: u(0),
            wavefront: u(4),
            pixel: u(8),
            shadow: b[12] != 0,
            rank: b[13],
            visited: RankMask(u64::from_le_bytes(b[14..22].try_into().unwrap())),
        }
    }

    /// Identity of the ray, without the rank.
    pub fn ray_key(&self) -> (u32, u32, u32, bool) {
        (self.sample, self.wavefront, self.pixel, self.shadow)
    }
}

/// Assembled frame on the master.
#[derive(Clone, Debug)]
pub struct FrameOutput {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    /// Radiance summed over samples, RGB row-major.
    pub accumulation: Vec<f32>,
    /// Tone-mapped RGB8.
    pub image: Vec<u8>,
    pub stats: FrameStats,
    /// Sorted visit log of all ranks (empty unless requested).
    pub visits: Vec<Visit>,
}

/// Everything one rank needs to render.
pub struct RankState {
    pub rank: usize,
    pub rank_count: usize,
    pub scene: Arc<Scene>,
    pub local: LocalScene,
    pub proxies: Arc<ProxyBvh>,
    pub memory: f64,
    /// Digest of scene, plan and proxies; compared in the handshake.
    pub digest: [u8; 32],
}

impl RankState {
    /// State of rank `rank` of `plan`; builds only that rank's geometry.
    pub fn from_plan(
        scene: &Arc<Scene>,
        plan: &PartitionPlan,
        proxies: Arc<ProxyBvh>,
        digest: [u8; 32],
        rank: usize,
    ) -> RankState {
        RankState {
            rank,
            rank_count: plan.rank_count,
            scene: scene.clone(),
            local: LocalScene::build(scene, &plan.pieces_for_rank(scene, rank)),
            proxies,
            memory: plan.part_memory[rank],
            digest,
        }
    }
}

/// Digest of everything that must agree between participants.
pub fn setup_digest(scene: &Scene, plan: Option<&PartitionPlan>, proxies: &ProxySet) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(scene.digest());
    if let Some(p) = plan {
        h.update(p.to_json(scene).to_string().as_bytes());
    }
    h.update(proxies.encode());
    h.finalize().into()
}

/// Partition, proxies and per-rank acceleration structures for an
/// in-process render; reusable across frames.
pub struct Setup {
    pub scene: Arc<Scene>,
    pub plan: Option<PartitionPlan>,
    pub proxy_set: ProxySet,
    pub ranks: Vec<RankState>,
}

impl Setup {
    /// `proxy_mode` defaults to the strategy's own.
    pub fn new(
        scene: Arc<Scene>,
        rank_count: usize,
        strategy: Strategy,
        model: &MemoryModel,
        opts: &PartitionOptions,
        proxy_mode: Option<ProxyMode>,
    ) -> Result<Setup> {
        let plan = partition(&scene, rank_count, strategy, model, opts)?;
        let mode = proxy_mode.unwrap_or_else(|| strategy.default_proxy_mode(opts));
        let proxy_set = build_proxy_set(&plan, &scene, mode)?;
        Ok(Setup::from_parts(scene, plan, proxy_set))
    }

    /// Setup with an explicit proxy set.
    pub fn from_parts(scene: Arc<Scene>, plan: PartitionPlan, proxy_set: ProxySet) -> Setup {
        let proxies = Arc::new(ProxyBvh::build(proxy_set.clone()));
        let digest = setup_digest(&scene, Some(&plan), &proxy_set);
        let ranks = (0..plan.rank_count).map(|r| RankState::from_plan(&scene, &plan, proxies.clone(), digest, r)).collect();
        Setup { scene, plan: Some(plan), proxy_set, ranks }
    }

    /// One rank holding the whole scene and no proxies: the reference setup.
    /// Also works for scenes with no geometry.
    pub fn single(scene: Arc<Scene>, model: &MemoryModel) -> Setup {
        let pieces: Vec<GeometryPiece> = scene
            .instances
            .iter()
            .enumerate()
            .flat_map(|(i, inst)| {
                scene.objects[inst.object].meshes.iter().map(move |&m| GeometryPiece {
                    instance: i,
                    mesh: m,
                    fragment: None,
                    owners: RankMask::single(0),
                })
            })
            .collect();
        let proxy_set = ProxySet::new(Vec::new());
        let memory = model.bytes_per_instance * scene.instances.len() as f64
            + scene
                .meshes
                .iter()
                .map(|m| {
                    model.bytes_per_mesh
                        + model.bytes_per_triangle * m.triangle_count() as f64
                        + model.bytes_per_vertex * m.vertex_count() as f64
                })
                .sum::<f64>();
        let rank = RankState {
            rank: 0,
            rank_count: 1,
            scene: scene.clone(),
            local: LocalScene::build(&scene, &pieces),
            proxies: Arc::new(ProxyBvh::build(proxy_set.clone())),
            memory,
            digest: setup_digest(&scene, None, &proxy_set),
        };
        Setup { scene, plan: None, proxy_set, ranks: vec![rank] }
    }

    pub fn rank_count(&self) -> usize {
        self.ranks.len()
    }
}

/// Renders a frame with every rank on its own thread of this process.
pub fn render_inprocess(setup: &Setup, cfg: &RenderConfig) -> Result<FrameOutput> {
    cfg.validate()?;
    let n = setup.rank_count();
    let format = cfg.mask.wire_format(n)?;
    let groups = RankGroup::inproc(n, format)?;
    let results: Vec<Result<Option<FrameOutput>>> = std::thread::scope(|s| {
        let handles: Vec<_> = groups
            .into_iter()
            .zip(&setup.ranks)
            .map(|(mut g, st)| s.spawn(move || run_rank(&mut g, st, cfg)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Invariant("rank panicked".into())))).collect()
    });
    let mut out = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(Some(f)) => out = Some(f),
            Ok(None) => {}
            // a failing rank makes its peers time out; report the root cause
            Err(e) if first_err.as_ref().is_none_or(|f: &Error| f.is_transport() && !e.is_transport()) => {
                first_err = Some(e)
            }
            Err(_) => {}
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => out.ok_or_else(|| Error::Invariant("no rank assembled the frame".into())),
    }
}

fn handshake_digest(setup_digest: &[u8; 32], cfg: &RenderConfig) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(setup_digest);
    h.update(format!("{cfg:?}").as_bytes());
    h.finalize().to_vec()
}

/// Renders one frame on one rank of `group`. Returns the frame on the master.
pub fn run_rank(group: &mut RankGroup, st: &RankState, cfg: &RenderConfig) -> Result<Option<FrameOutput>> {
    cfg.validate()?;
    if group.rank_count() != st.rank_count || group.id() != st.rank {
        return Err(Error::Config(format!(
            "rank {} of {} joined a group as participant {} of {}",
            st.rank,
            st.rank_count,
            group.id(),
            group.rank_count()
        )));
    }
    group.handshake(&handshake_digest(&st.digest, cfg))?;
    let set = group.broadcast_from_rank0(Opcode::ProxySet, st.proxies.proxies().encode())?;
    if ProxySet::decode(&set)? != *st.proxies.proxies() {
        return Err(Error::Protocol(format!("rank {} built a different proxy set than rank 0", st.rank)));
    }

    let mut tracer = Tracer::new(group, st, cfg);
    for sample in 0..cfg.spp {
        tracer.sample(sample)?;
    }
    let Tracer { partial, mut stats, visits, .. } = tracer;

    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let tile = group.exchange_frame_tiles(w, h, &partial)?;
    let mut fin = Vec::with_capacity(tile.len() * 5);
    fin.extend(tile.iter().flat_map(|v| v.to_le_bytes()));
    fin.extend(image::tone_map(&tile, cfg.spp));
    let tiles = group.gather_to_master(Opcode::Final, fin)?;

    stats.transport = group.stats.clone();
    let stats_payload = encode_stats(&stats, &visits);
    let all_stats = group.gather_to_master(Opcode::Stats, stats_payload)?;
    match (tiles, all_stats) {
        (Some(t), Some(s)) => assemble(group, cfg, t, s).map(Some),
        _ => Ok(None),
    }
}

/// Head participant of a socket group: joins the handshake and assembles the
/// frame. `digest` is [`setup_digest`] of the same inputs the ranks loaded.
pub fn run_head(group: &mut RankGroup, digest: &[u8; 32], cfg: &RenderConfig) -> Result<FrameOutput> {
    cfg.validate()?;
    if !group.is_head() {
        return Err(Error::Config("run_head called on a rendering rank".into()));
    }
    group.handshake(&handshake_digest(digest, cfg))?;
    let tiles = group.gather_to_master(Opcode::Final, Vec::new())?;
    let stats = group.gather_to_master(Opcode::Stats, Vec::new())?;
    match (tiles, stats) {
        (Some(t), Some(s)) => assemble(group, cfg, t, s),
        _ => Err(Error::Invariant("head is not the master".into())),
    }
}

fn encode_stats(stats: &RankStats, visits: &[Visit]) -> Vec<u8> {
    let json = serde_json::to_vec(stats).expect("stats serialize");
    let mut out = Vec::with_capacity(4 + json.len() + visits.len() * Visit::BYTES);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend(json);
    for v in visits {
        v.encode(&mut out);
    }
    out
}

fn decode_stats(b: &[u8], from: usize) -> Result<(RankStats, Vec<Visit>)> {
    let bad = || Error::Protocol(format!("malformed stats from rank {from}"));
    let len = u32::from_le_bytes(b.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
    let json = b.get(4..4 + len).ok_or_else(bad)?;
    let stats: RankStats = serde_json::from_slice(json).map_err(|_| bad())?;
    let rest = &b[4 + len..];
    if rest.len() % Visit::BYTES != 0 {
        return Err(bad());
    }
    Ok((stats, rest.chunks_exact(Visit::BYTES).map(Visit::decode).collect()))
}

fn assemble(group: &RankGroup, cfg: &RenderConfig, tiles: Vec<Vec<u8>>, stats: Vec<Vec<u8>>) -> Result<FrameOutput> {
    let n = group.rank_count();
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut accumulation = vec![0.0f32; w * h * 3];
    let mut image = vec![0u8; w * h * 3];
    for (r, t) in tiles.iter().enumerate() {
        let rows = crate::transport::tile_rows(r, n, h);
        let floats = rows.len() * w * 3;
        if t.len() != floats * 5 {
            return Err(Error::Protocol(format!("final tile from rank {r} has {} bytes", t.len())));
        }
        let range = rows.start * w * 3..rows.end * w * 3;
        for (a, c) in accumulation[range.clone()].iter_mut().zip(t[..floats * 4].chunks_exact(4)) {
            *a = f32::from_le_bytes(c.try_into().unwrap());
        }
        image[range].copy_from_slice(&t[floats * 4..]);
    }
    let mut ranks = Vec::with_capacity(n);
    let mut visits = Vec::new();
    for (r, b) in stats.iter().enumerate() {
        let (s, v) = decode_stats(b, r)?;
        ranks.push(s);
        visits.extend(v);
    }
    visits.sort_unstable();
    let stats = FrameStats::merge(&ranks, group.format().record_size());
    Ok(FrameOutput { width: cfg.width, height: cfg.height, spp: cfg.spp, accumulation, image, stats, visits })
}

/// Rank that keeps the camera ray of `pixel`: the `pixel mod k`-th of the `k`
/// owners of the closest proxy, or `pixel mod rank_count` if no proxy is hit.
pub fn primary_owner(proxies: &ProxyBvh, ray: &Ray, pixel: u32, rank_count: usize, tmax_culling: bool) -> usize {
    proxies
        .closest_eligible(ray, RankMask::EMPTY, tmax_culling)
        .and_then(|(p, _)| {
            let owners = proxies.proxies().proxies[p].owners;
            owners.nth(pixel % owners.count())
        })
        .unwrap_or(pixel as usize % rank_count)
}

/// Per-rank frame state.
struct Tracer<'a> {
    group: &'a mut RankGroup,
    st: &'a RankState,
    cfg: &'a RenderConfig,
    camera: Camera,
    replay: bool,
    partial: Vec<f32>,
    stats: RankStats,
    visits: Vec<Visit>,
}

/// Pick key of a ray; shadow rays get the top bit so that they never share a
/// seed with the path of the same pixel.
fn key_of(rec: &PathRecord, wavefront: u32) -> ForwardKey {
    let bounce = if rec.is_shadow() { wavefront | 1 << 31 } else { wavefront };
    ForwardKey { pixel: rec.pixel(), bounce }
}

impl<'a> Tracer<'a> {
    fn new(group: &'a mut RankGroup, st: &'a RankState, cfg: &'a RenderConfig) -> Self {
        let replay = group.format().is_replay();
        Tracer {
            group,
            st,
            cfg,
            camera: cfg.camera.unwrap_or(st.scene.camera),
            replay,
            partial: vec![0.0; cfg.pixels() as usize * 3],
            stats: RankStats { rank: st.rank, memory: st.memory, ..Default::default() },
            visits: Vec::new(),
        }
    }

    /// Every rank builds every camera ray; the closest proxy's owners decide
    /// which rank keeps it, rotating by pixel id among several owners.
    fn primaries(&self, sample: u32) -> Vec<PathRecord> {
        let (st, cfg, camera) = (self.st, self.cfg, self.camera);
        let (me, n) = (st.rank, st.rank_count);
        let pixels: Vec<u32> = (0..cfg.pixels()).collect();
        par_map(&pixels, |&px| {
            let rec = primary_ray(&camera, cfg, sample, px, me);
            let owner = primary_owner(&st.proxies, &record_ray(&rec), px, n, cfg.tmax_culling);
            (owner == me).then_some(rec)
        })
        .into_iter()
        .flatten()
        .collect()
    }

    fn sample(&mut self, sample: u32) -> Result<()> {
        let mut queue = self.primaries(sample);
        for wavefront in 0..=self.cfg.max_bounce {
            let shade = self.traverse(sample, wavefront, queue)?;
            queue = self.shade(sample, wavefront, &shade);
        }
        if !queue.is_empty() {
            return Err(Error::Invariant(format!("{} rays spawned past the last bounce", queue.len())));
        }
        Ok(())
    }

    /// Distributed traversal of one wavefront; returns the rays that ended on
    /// this rank and can be shaded here.
    fn traverse(&mut self, sample: u32, wavefront: u32, mut active: Vec<PathRecord>) -> Result<Vec<PathRecord>> {
        let me = self.st.rank;
        let n = self.st.rank_count;
        let mut shade = Vec::new();
        let mut rounds = 0u32;
        loop {
            self.stats.rays_traced += active.len() as u64;
            let local = &self.st.local;
            let traced = par_map(&active, |r| {
                let mut r = *r;
                if r.is_shadow() {
                    if local.occluded(&record_ray(&r)) {
                        r.hit_owners = RankMask::single(me);
                    }
                } else {
                    trace_path(local, &mut r);
                }
                r
            });

            let cull = self.cfg.tmax_culling;
            let proxies = &self.st.proxies;
            let routes = par_map(&traced, |r| {
                if r.is_shadow() && !r.hit_owners.is_empty() {
                    return None;
                }
                proxies.next_rank(&record_ray(r), r.visited, cull, key_of(r, wavefront))
            });

            let mut buckets: Vec<Vec<PathRecord>> = vec![Vec::new(); n];
            for (mut r, next) in traced.into_iter().zip(routes) {
                if self.cfg.record_visits {
                    self.visits.push(Visit {
                        sample,
                        wavefront,
                        pixel: r.pixel(),
                        shadow: r.is_shadow(),
                        rank: me as u8,
                        visited: r.visited,
                    });
                }
                if r.is_shadow() && !r.hit_owners.is_empty() {
                    continue; // occluded
                }
                match next {
                    Some(d) => {
                        if r.is_shadow() {
                            self.stats.shadow_forwards += 1;
                        }
                        buckets[d].push(r);
                    }
                    None if r.is_shadow() || r.hit_owners.is_empty() || r.hit_owners.contains(me) => shade.push(r),
                    None => {
                        let seed = pick_seed(key_of(&r, wavefront), r.visited.count());
                        let d = r.hit_owners.pick(seed).expect("non-empty hit owners");
                        r.set_flag(FLAG_SHADE_ONLY, true);
                        self.stats.shade_forwards += 1;
                        buckets[d].push(r);
                    }
                }
            }

            let counts: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
            let matrix = self.group.exchange_counts(&counts)?;
            if matrix.iter().all(|row| row.iter().all(|&c| c == 0)) {
                break;
            }
            rounds += 1;
            if rounds as usize > n {
                return Err(Error::Invariant(format!(
                    "wavefront {wavefront} of sample {sample} needed more than {n} exchange rounds"
                )));
            }
            let k = rounds as usize - 1;
            if self.stats.forwards_per_round.len() <= k {
                self.stats.forwards_per_round.resize(k + 1, 0);
            }
            self.stats.forwards_per_round[k] += counts.iter().map(|&c| c as u64).sum::<u64>();

            let arrived = self.group.exchange_rays(&buckets)?;
            active = Vec::with_capacity(arrived.len());
            for mut r in arrived {
                if r.is_shade_only() {
                    r.set_flag(FLAG_SHADE_ONLY, false);
                    shade.push(r);
                    continue;
                }
                if self.replay {
                    let origin = r.origin_rank as usize;
                    r.visited = proxies.replay_visited(&record_ray(&r), origin, me, n, key_of(&r, wavefront))?;
                } else {
                    if r.visited.contains(me) {
                        self.stats.revisits += 1;
                    }
                    r.visited = r.visited.with(me);
                }
                active.push(r);
            }
        }
        self.stats.rounds_per_wavefront.push(rounds);
        Ok(shade)
    }

    /// Shades in parallel, accumulates in queue order.
    fn shade(&mut self, sample: u32, wavefront: u32, queue: &[PathRecord]) -> Vec<PathRecord> {
        let shader = Shader {
            scene: &self.st.scene,
            local: &self.st.local,
            cfg: self.cfg,
            rank: self.st.rank,
            sample,
            bounce: wavefront,
        };
        let results = par_map(queue, |r| shader.shade(r));
        let mut next = Vec::new();
        for (rec, s) in queue.iter().zip(results) {
            if let Some(c) = s.contribution {
                let i = rec.pixel() as usize * 3;
                self.partial[i] += c.x;
                self.partial[i + 1] += c.y;
                self.partial[i + 2] += c.z;
            }
            self.stats.dropped_non_finite += s.dropped as u64;
            self.stats.retrace_mismatches += s.mismatch as u64;
            next.extend(s.path);
            next.extend(s.shadow);
        }
        next
    }
}
