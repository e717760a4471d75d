use std::collections::HashMap;
use std::fmt;
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::info;
use proxytrace::engine::image::{read_raw, write_image, write_raw};
use proxytrace::engine::{render_inprocess, run_head, run_rank, setup_digest, FrameOutput, RankState, RenderConfig, Setup};
use proxytrace::metrics::{tabulate_forwards, tabulate_max_part};
use proxytrace::partition::{partition as make_plan, MemoryModel, PartitionOptions, PartitionPlan, Strategy};
use proxytrace::proxy::{build_proxy_set, proxy_boxes_ply, ProxyBvh, ProxySet};
use proxytrace::reference::relative_error;
use proxytrace::scene::{
    box_fixture, load_scene, mini_island_views, scene_to_json, shadow_fixture, write_obj, MiniIsland, Scene,
};
use proxytrace::transport::{tcp_endpoint, MaskMode, RankGroup};
use serde_json::json;

use crate::{Backend, CompareArgs, Culling, Experiment, GenerateArgs, PartitionArgs, RenderArgs, SceneKind, SetupArgs};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Core(proxytrace::Error),
    Usage(String),
    /// Two dumps differ by more than the tolerance.
    Mismatch(String),
}

impl Failure {
    pub fn is_transport(&self) -> bool {
        matches!(self, Failure::Core(e) if e.is_transport())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => e.fmt(f),
            Failure::Usage(m) | Failure::Mismatch(m) => f.write_str(m),
        }
    }
}

impl From<proxytrace::Error> for Failure {
    fn from(e: proxytrace::Error) -> Self {
        Failure::Core(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Prints to stdout; a closed pipe ends output quietly.
fn print_out(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Usage(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn parse_size(s: &str) -> Result<(u32, u32)> {
    let bad = || Failure::Usage(format!("size must be WxH, got '{s}'"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    if s == "all" {
        return Ok(Strategy::ALL.to_vec());
    }
    Ok(s.split(',').map(|x| x.trim().parse()).collect::<proxytrace::Result<_>>()?)
}

fn options(a: &SetupArgs) -> PartitionOptions {
    let mut opts = PartitionOptions::default();
    if let Some(cap) = a.replication_cap {
        opts.replication_cap = cap;
    }
    opts
}

fn load(a: &SetupArgs) -> Result<(Arc<Scene>, Strategy)> {
    let scene = Arc::new(load_scene(&a.scene)?);
    info!("loaded {}: {} instances, {} triangles", a.scene.display(), scene.instances.len(), scene.total_triangles());
    Ok((scene, a.strategy.parse()?))
}

fn plan_and_proxies(scene: &Scene, a: &SetupArgs, strategy: Strategy) -> Result<(PartitionPlan, ProxySet)> {
    let opts = options(a);
    let plan = make_plan(scene, a.ranks, strategy, &MemoryModel::default(), &opts)?;
    let proxies = build_proxy_set(&plan, scene, strategy.default_proxy_mode(&opts))?;
    Ok((plan, proxies))
}

fn render_config(a: &RenderArgs) -> Result<RenderConfig> {
    let (width, height) = parse_size(&a.size)?;
    let mask: MaskMode = a.mask.parse()?;
    let tmax_culling = match a.culling {
        Culling::Auto => mask != MaskMode::Replay,
        Culling::On => true,
        Culling::Off => false,
    };
    Ok(RenderConfig {
        width,
        height,
        spp: a.spp,
        max_bounce: a.bounces,
        frame_seed: a.seed,
        mask,
        tmax_culling,
        ..RenderConfig::default()
    })
}

fn write_outputs(a: &RenderArgs, out: &FrameOutput) -> Result<()> {
    if let Some(p) = &a.out {
        write_image(p, out.width, out.height, &out.image)?;
    }
    if let Some(p) = &a.raw {
        write_raw(p, &out.accumulation)?;
    }
    if let Some(p) = &a.stats {
        write_text(p, &out.stats.to_csv())?;
    }
    let s = &out.stats;
    info!("forwards {} ({} shadow), max rounds {}, ray bytes {}", s.forwards_total, s.shadow_forwards, s.max_rounds, s.bytes_rays);
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let cfg = render_config(a)?;
    cfg.validate()?;
    let (scene, strategy) = load(&a.setup)?;
    let started = Instant::now();
    let out = match a.backend {
        Backend::Inproc => {
            let setup =
                Setup::new(scene, a.setup.ranks, strategy, &MemoryModel::default(), &options(&a.setup), None)?;
            Some(render_inprocess(&setup, &cfg)?)
        }
        Backend::Socket => render_socket(a, &cfg, scene, strategy)?,
    };
    if let Some(out) = out {
        info!("frame done in {:.2}s", started.elapsed().as_secs_f64());
        write_outputs(a, &out)?;
    }
    Ok(())
}

/// One participant of a socket render. Only the head returns the frame.
fn render_socket(a: &RenderArgs, cfg: &RenderConfig, scene: Arc<Scene>, strategy: Strategy) -> Result<Option<FrameOutput>> {
    let ranks = a.setup.ranks;
    let id = a.rank_id.ok_or_else(|| Failure::Usage("socket backend needs --rank-id".into()))?;
    if a.connect.len() != ranks + 1 {
        return Err(Failure::Usage(format!(
            "--connect must list {} addresses (ranks then head), got {}",
            ranks + 1,
            a.connect.len()
        )));
    }
    if id > ranks {
        return Err(Failure::Usage(format!("--rank-id {id} outside 0..={ranks}")));
    }
    let (plan, proxies) = plan_and_proxies(&scene, &a.setup, strategy)?;
    let digest = setup_digest(&scene, Some(&plan), &proxies);
    let bind = a.listen.unwrap_or(a.connect[id]);
    let listener =
        TcpListener::bind(bind).map_err(|e| Failure::Core(proxytrace::Error::Transport(format!("bind {bind}: {e}"))))?;
    let ep = tcp_endpoint(id, &a.connect, listener, Duration::from_secs(a.timeout))?;
    let mut group = RankGroup::new(ep, ranks, cfg.mask.wire_format(ranks)?)?;
    if id == ranks {
        info!("head waiting for {ranks} ranks");
        return Ok(Some(run_head(&mut group, &digest, cfg)?));
    }
    let state = RankState::from_plan(&scene, &plan, Arc::new(ProxyBvh::build(proxies)), digest, id);
    info!("rank {id}: {} triangles resident", state.local.triangle_count());
    Ok(run_rank(&mut group, &state, cfg)?)
}

fn proxies_json(set: &ProxySet) -> serde_json::Value {
    let boxes: Vec<_> = set
        .proxies
        .iter()
        .map(|p| {
            json!({
                "lo": p.bounds.lo.to_array(),
                "hi": p.bounds.hi.to_array(),
                "owners": p.owners.iter().collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "proxies": boxes })
}

pub fn partition(a: &PartitionArgs) -> Result<()> {
    let (scene, strategy) = load(&a.setup)?;
    let (plan, proxies) = plan_and_proxies(&scene, &a.setup, strategy)?;
    let plan_json = plan.to_json(&scene);
    let proxy_json = proxies_json(&proxies);
    let pretty = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("json values serialize");
    match (&a.plan, &a.proxies) {
        (None, None) => print_out(&(pretty(&json!({ "plan": plan_json, "proxies": proxy_json["proxies"] })) + "\n"))?,
        (plan_path, proxy_path) => {
            match plan_path {
                Some(p) => write_text(p, &pretty(&plan_json))?,
                None => print_out(&(pretty(&plan_json) + "\n"))?,
            }
            if let Some(p) = proxy_path {
                write_text(p, &pretty(&proxy_json))?;
            }
        }
    }
    if let Some(p) = &a.ply {
        write_text(p, &proxy_boxes_ply(&proxies))?;
    }
    info!("{} items, {} proxies, replication {:.3}", plan.items.len(), proxies.len(), plan.replication_fraction());
    Ok(())
}

fn emit(out: &Option<std::path::PathBuf>, csv: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, csv),
        None => print_out(csv),
    }
}

pub fn experiment(e: &Experiment) -> Result<()> {
    match e {
        Experiment::MaxPart { scene, strategies, nmax, out } => {
            let scene = load_scene(scene)?;
            if *nmax == 0 {
                return Err(Failure::Usage("--nmax must be at least 1".into()));
            }
            let t = tabulate_max_part(
                &scene,
                &parse_strategies(strategies)?,
                *nmax,
                &MemoryModel::default(),
                &PartitionOptions::default(),
            );
            emit(out, &t.to_csv())
        }
        Experiment::Forwards { scene, strategies, ranks, size, bounces, seed, mask, views, out } => {
            let scene = Arc::new(load_scene(scene)?);
            let (width, height) = parse_size(size)?;
            let mask: MaskMode = mask.parse()?;
            let cameras = match views.as_str() {
                "scene" => vec![scene.camera],
                "island" => mini_island_views().to_vec(),
                v => return Err(Failure::Usage(format!("unknown view set '{v}'"))),
            };
            let base = RenderConfig {
                width,
                height,
                max_bounce: *bounces,
                frame_seed: *seed,
                mask,
                tmax_culling: mask != MaskMode::Replay,
                ..RenderConfig::default()
            };
            let t = tabulate_forwards(
                &scene,
                &cameras,
                &parse_strategies(strategies)?,
                *ranks,
                &base,
                &MemoryModel::default(),
                &PartitionOptions::default(),
            )?;
            emit(out, &t.to_csv())
        }
    }
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let x = read_raw(&a.a)?;
    let y = read_raw(&a.b)?;
    if x.len() != y.len() {
        return Err(Failure::Mismatch(format!("dumps hold {} and {} values", x.len(), y.len())));
    }
    let err = relative_error(&x, &y, a.floor);
    println!("max relative error {err:.3e} over {} values", x.len());
    if err > a.tol {
        return Err(Failure::Mismatch(format!("relative error {err:.3e} exceeds {:.1e}", a.tol)));
    }
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let trees = match &a.trees {
        None => None,
        Some(t) => {
            let bad = || Failure::Usage(format!("--trees must be C,D, got '{t}'"));
            let (c, d) = t.split_once(',').ok_or_else(bad)?;
            Some((c.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?))
        }
    };
    let island = |res: u32, counts: (u32, u32), seed: u64| {
        MiniIsland::new(a.resolution.unwrap_or(res), trees.unwrap_or(counts), a.seed.unwrap_or(seed))
            .with_sun(!a.no_sun)
            .build()
    };
    let (scene, default_name) = match a.kind {
        SceneKind::MiniIsland => (island(8, (3, 4), 42), "mini-island"),
        SceneKind::Stress => (island(64, (100, 100), 7), "mini-island-stress"),
        SceneKind::Box => (box_fixture(), "box"),
        SceneKind::Shadow => (shadow_fixture(!a.open), "shadow"),
    };
    let name = a.name.as_deref().unwrap_or(default_name);
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out.display())))?;
    // meshes without vertex normals go to OBJ; the rest stay inline
    let mut objs = HashMap::new();
    for (i, mesh) in scene.meshes.iter().enumerate() {
        if mesh.normals.is_none() && mesh.triangle_count() >= 64 {
            let file = format!("{name}-mesh{i}.obj");
            write_text(&a.out.join(&file), &write_obj(mesh))?;
            objs.insert(i, file);
        }
    }
    let path = a.out.join(format!("{name}.json"));
    write_text(&path, &scene_to_json(&scene, &objs))?;
    let back = load_scene(&path)?;
    if back.digest() != scene.digest() {
        return Err(Failure::Core(proxytrace::Error::Invariant(format!("{} does not reload identically", path.display()))));
    }
    println!("{} ({} instances, {} triangles, {} OBJ files)", path.display(), scene.instances.len(), scene.total_triangles(), objs.len());
    Ok(())
}
