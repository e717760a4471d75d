//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use common::Backend;
use proxytrace::engine::shade::{primary_ray, record_ray};
use proxytrace::engine::{render_inprocess, FrameOutput, RenderConfig, Setup};
use proxytrace::metrics::{tabulate_forwards, tabulate_max_part};
use proxytrace::partition::{partition, MemoryModel, PartitionOptions, Strategy};
use proxytrace::proxy::{build_proxy_set, Proxy, ProxySet, RankMask};
use proxytrace::reference::{relative_error, render_reference};
use proxytrace::scene::{box_fixture, mini_island_views, shadow_fixture, MiniIsland, Scene};
use proxytrace::transport::{MaskMode, WireFormat};
use proxytrace::Error;

type Outcome = Result<String, String>;

fn island() -> Arc<Scene> {
    Arc::new(MiniIsland::new(8, (3, 4), 42).with_sun(true).build())
}

fn stress() -> Arc<Scene> {
    Arc::new(MiniIsland::new(64, (100, 100), 7).with_sun(true).build())
}

fn setup(scene: &Arc<Scene>, ranks: usize, strategy: Strategy) -> proxytrace::Result<Setup> {
    Setup::new(scene.clone(), ranks, strategy, &MemoryModel::default(), &PartitionOptions::default(), None)
}

fn frame() -> RenderConfig {
    RenderConfig { width: 128, height: 128, spp: 4, max_bounce: 4, frame_seed: 2024, ..Default::default() }
}

fn mask_config(mask: MaskMode) -> RenderConfig {
    RenderConfig { mask, tmax_culling: mask != MaskMode::Replay, record_visits: true, ..frame() }
}

/// Revisit count and worst rounds-per-wavefront of one frame.
fn revisits(out: &FrameOutput) -> usize {
    let mut seen = HashSet::with_capacity(out.visits.len());
    out.visits.iter().filter(|v| !seen.insert((v.ray_key(), v.rank))).count() + out.stats.revisits as usize
}

struct Sweep {
    runs: usize,
    skipped: Vec<String>,
    worst_err: f64,
    failures: Vec<String>,
    revisits: usize,
    round_violations: Vec<String>,
    slowest: f64,
}

/// Criteria 1 and 3 share the same renders.
fn sweep() -> Sweep {
    let mut s = Sweep {
        runs: 0,
        skipped: vec![],
        worst_err: 0.0,
        failures: vec![],
        revisits: 0,
        round_violations: vec![],
        slowest: 0.0,
    };
    for (name, scene) in [("mini-island", island()), ("box", Arc::new(box_fixture()))] {
        let reference = render_reference(scene.clone(), &frame()).expect("reference render");
        for strategy in Strategy::ALL {
            for ranks in [1, 2, 4, 8] {
                let st = match setup(&scene, ranks, strategy) {
                    Ok(st) => st,
                    Err(Error::Partition(_)) => {
                        s.skipped.push(format!("{name}/{strategy}/{ranks}"));
                        continue;
                    }
                    Err(e) => {
                        s.failures.push(format!("{name}/{strategy}/{ranks}: {e}"));
                        continue;
                    }
                };
                for mask in [MaskMode::Bitmask8, MaskMode::Bitmask64, MaskMode::Replay] {
                    let tag = format!("{name}/{strategy}/{ranks}/{}", mask.name());
                    let t = Instant::now();
                    let out = match render_inprocess(&st, &mask_config(mask)) {
                        Ok(o) => o,
                        Err(e) => {
                            s.failures.push(format!("{tag}: {e}"));
                            continue;
                        }
                    };
                    s.slowest = s.slowest.max(t.elapsed().as_secs_f64());
                    s.runs += 1;
                    let err = relative_error(&out.accumulation, &reference.accumulation, 1e-6);
                    s.worst_err = s.worst_err.max(err);
                    if err > 1e-4 {
                        s.failures.push(format!("{tag}: relative error {err:.3e}"));
                    }
                    s.revisits += revisits(&out);
                    if out.stats.max_rounds as usize > ranks {
                        s.round_violations.push(format!("{tag}: {} rounds", out.stats.max_rounds));
                    }
                }
            }
        }
    }
    s
}

fn criterion_1(s: &Sweep) -> Outcome {
    let skipped = if s.skipped.is_empty() {
        String::new()
    } else {
        format!("; {} plans skipped because the rank count exceeds the item count: {}", s.skipped.len(), s.skipped.join(", "))
    };
    let summary = format!(
        "{} renders, worst relative error {:.2e}, slowest {:.1}s{skipped}",
        s.runs, s.worst_err, s.slowest
    );
    if s.failures.is_empty() && s.runs > 0 {
        Ok(summary)
    } else {
        Err(format!("{summary}; failures: {}", s.failures.join("; ")))
    }
}

fn criterion_2() -> Outcome {
    let (bad, first) = common::check_forwarding(10_000, 0xacce97);
    if bad == 0 {
        Ok("10000 random soups, both culling modes, BVH == linear scan".into())
    } else {
        Err(format!("{bad} disagreements, first: {}", first.unwrap_or_default()))
    }
}

fn criterion_3(s: &Sweep) -> Outcome {
    let summary = format!("{} renders, {} revisits, {} round-bound violations", s.runs, s.revisits, s.round_violations.len());
    if s.revisits == 0 && s.round_violations.is_empty() && s.runs > 0 {
        Ok(summary)
    } else {
        Err(format!("{summary} {}", s.round_violations.join("; ")))
    }
}

fn criterion_4() -> Outcome {
    let scene = island();
    let base = RenderConfig { spp: 1, tmax_culling: false, record_visits: true, ..frame() };
    let mut compared = 0usize;
    for strategy in Strategy::ALL {
        for ranks in [4, 8] {
            let Ok(st) = setup(&scene, ranks, strategy) else { continue };
            let replay = render_inprocess(&st, &RenderConfig { mask: MaskMode::Replay, ..base.clone() }).map_err(|e| e.to_string())?;
            let bitmask = render_inprocess(&st, &RenderConfig { mask: MaskMode::Bitmask64, ..base.clone() }).map_err(|e| e.to_string())?;
            if replay.visits != bitmask.visits {
                let diff = replay.visits.iter().zip(&bitmask.visits).find(|(a, b)| a != b);
                return Err(format!("{strategy}/{ranks}: visit logs differ, first {diff:?}"));
            }
            if replay.accumulation != bitmask.accumulation {
                return Err(format!("{strategy}/{ranks}: images differ"));
            }
            compared += replay.visits.iter().filter(|v| v.visited.count() > 1).count();
        }
    }
    Ok(format!("{compared} forwarded-ray visits, replay visited sets == bitmask visited sets"))
}

fn criterion_5() -> Outcome {
    let scene = stress();
    let cfg = RenderConfig { spp: 1, ..frame() };
    let strategies = [Strategy::Best, Strategy::ObjectNaive, Strategy::ObjectProxies];
    let table = tabulate_forwards(
        &scene,
        &mini_island_views(),
        &strategies,
        4,
        &cfg,
        &MemoryModel::default(),
        &PartitionOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    if let Some(c) = table.cells.iter().find(|c| c.forwards != c.matrix_forwards) {
        return Err(format!("counter mismatch on view {}: {} vs {}", c.view, c.forwards, c.matrix_forwards));
    }
    let mut good = 0;
    let mut rows = Vec::new();
    for v in 0..3 {
        let f = |s| table.get(v, s).unwrap();
        let (best, naive, proxies) = (f(Strategy::Best), f(Strategy::ObjectNaive), f(Strategy::ObjectProxies));
        rows.push(format!("view {v}: best {best}, object-naive {naive}, object-proxies {proxies}"));
        if best < naive && proxies < naive {
            good += 1;
        }
    }
    let summary = format!("{good}/3 views ordered; {}", rows.join("; "));
    if good >= 2 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn criterion_6() -> Outcome {
    let scene = stress();
    let strategies = [Strategy::SpatialSimple, Strategy::ObjectNaive, Strategy::ObjectProxies];
    let t = tabulate_max_part(&scene, &strategies, 16, &MemoryModel::default(), &PartitionOptions::default());
    let spatial16 = t.curve(Strategy::SpatialSimple).unwrap()[15];
    let mut notes = Vec::new();
    for s in [Strategy::ObjectNaive, Strategy::ObjectProxies] {
        let c = t.curve(s).unwrap();
        if let Some(n) = c.windows(2).position(|w| w[1] > w[0]) {
            return Err(format!("{s} grows from N={} to N={}", n + 1, n + 2));
        }
        if c[3] > spatial16 {
            return Err(format!("{s}(4) = {:.0} exceeds spatial-simple(16) = {spatial16:.0}", c[3]));
        }
        notes.push(format!("{s}(4) = {:.0}", c[3]));
    }
    Ok(format!("object curves non-increasing; {} <= spatial-simple(16) = {spatial16:.0} bytes", notes.join(", ")))
}

fn criterion_7() -> Outcome {
    common::check_golden_wire()?;
    Ok(format!(
        "4 formats byte-exact against golden files, round trip exact, 8-rank records {} bytes",
        WireFormat::Mask8.record_size()
    ))
}

fn criterion_8() -> Outcome {
    let a = common::transport_fuzz(Backend::InProcess, 4, 1000, WireFormat::Mask8, 8)?;
    let b = common::transport_fuzz(Backend::Tcp, 4, 1000, WireFormat::Replay64, 9)?;
    Ok(format!("1000 rounds x 4 ranks; in-process: {a}; tcp: {b}"))
}

fn criterion_9() -> Outcome {
    let cfg = RenderConfig { width: 64, height: 64, spp: 2, max_bounce: 4, ..Default::default() };
    let closed = Arc::new(shadow_fixture(true));
    let mut checked = 0;
    for strategy in [Strategy::ObjectNaive, Strategy::BvhStyle, Strategy::Best] {
        for culling in [true, false] {
            let st = setup(&closed, 2, strategy).map_err(|e| e.to_string())?;
            let out = render_inprocess(&st, &RenderConfig { tmax_culling: culling, ..cfg.clone() }).map_err(|e| e.to_string())?;
            if out.stats.shadow_forwards != 0 {
                return Err(format!("{strategy} culling={culling}: {} shadow forwards", out.stats.shadow_forwards));
            }
            checked += 1;
        }
    }
    let open = Arc::new(shadow_fixture(false));
    let st = setup(&open, 2, Strategy::ObjectNaive).map_err(|e| e.to_string())?;
    let control = render_inprocess(&st, &RenderConfig { tmax_culling: false, ..cfg }).map_err(|e| e.to_string())?;
    if control.stats.shadow_forwards == 0 {
        return Err("control scene without the roof forwarded no shadow rays".into());
    }
    Ok(format!(
        "{checked} runs with zero shadow forwards; control without the occluder forwarded {}",
        control.stats.shadow_forwards
    ))
}

/// Owner of each pixel's camera ray by exhaustive proxy scan.
fn expected_owner(scene: &Scene, proxies: &[Proxy], cfg: &RenderConfig, ranks: usize, sample: u32, px: u32) -> usize {
    let ray = record_ray(&primary_ray(&scene.camera, cfg, sample, px, 0));
    let inv = ray.inv_dir();
    let mut best: Option<(usize, f32)> = None;
    for (i, p) in proxies.iter().enumerate() {
        if let Some(e) = p.entry(&ray, inv, cfg.tmax_culling) {
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((i, e));
            }
        }
    }
    match best {
        Some((i, _)) => {
            let o = proxies[i].owners;
            o.iter().nth((px % o.count()) as usize).unwrap()
        }
        None => px as usize % ranks,
    }
}

fn criterion_10() -> Outcome {
    let scene = island();
    let cfg = RenderConfig { width: 64, height: 64, spp: 2, max_bounce: 0, record_visits: true, ..Default::default() };
    let model = MemoryModel::default();
    let opts = PartitionOptions::default();
    let mut pixels = 0;
    let mut shared = 0;
    let mut cases: Vec<(String, Setup)> = Vec::new();
    for strategy in Strategy::ALL {
        cases.push((strategy.to_string(), setup(&scene, 4, strategy).map_err(|e| e.to_string())?));
    }
    // replicated proxies: the trees' boxes owned by two ranks each
    let plan = partition(&scene, 4, Strategy::BvhStyle, &model, &opts).map_err(|e| e.to_string())?;
    let base = build_proxy_set(&plan, &scene, Strategy::BvhStyle.default_proxy_mode(&opts)).map_err(|e| e.to_string())?;
    let doubled = base
        .proxies
        .iter()
        .enumerate()
        .map(|(i, p)| Proxy { owners: p.owners.with(i % 4).with((i + 1) % 4), ..*p })
        .collect();
    let plan2 = partition(&scene, 4, Strategy::BvhStyle, &model, &opts).map_err(|e| e.to_string())?;
    cases.push(("replicated".into(), Setup::from_parts(scene.clone(), plan2, ProxySet::new(doubled))));

    for (name, st) in &cases {
        let out = render_inprocess(st, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let mut origin: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for v in out.visits.iter().filter(|v| v.wavefront == 0 && !v.shadow && v.visited == RankMask::single(v.rank as usize)) {
            origin.entry((v.sample, v.pixel)).or_default().push(v.rank as usize);
        }
        for sample in 0..cfg.spp {
            for px in 0..cfg.width * cfg.height {
                let kept = origin.get(&(sample, px)).cloned().unwrap_or_default();
                if kept.len() != 1 {
                    return Err(format!("{name}: pixel {px} of sample {sample} kept by {kept:?}"));
                }
                let want = expected_owner(&scene, &st.proxy_set.proxies, &cfg, 4, sample, px);
                if kept[0] != want {
                    return Err(format!("{name}: pixel {px} kept by {} instead of {want}", kept[0]));
                }
                pixels += 1;
            }
        }
        if name == "replicated" {
            shared = (0..cfg.width * cfg.height)
                .filter(|&px| {
                    let ray = record_ray(&primary_ray(&scene.camera, &cfg, 0, px, 0));
                    st.ranks[0]
                        .proxies
                        .closest_eligible(&ray, RankMask::EMPTY, true)
                        .is_some_and(|(p, _)| st.proxy_set.proxies[p].owners.count() > 1)
                })
                .count();
        }
    }
    if shared == 0 {
        return Err("replicated case never selected a multi-owner proxy".into());
    }
    Ok(format!(
        "{pixels} primary rays each kept by exactly one rank, matching the pixel-id rule; {shared} pixels hit multi-owner proxies"
    ))
}

fn main() {
    let started = Instant::now();
    let sweep = sweep();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "oracle image equivalence", criterion_1(&sweep)),
        (2, "forwarding operator oracle", criterion_2()),
        (3, "no revisits and round bound", criterion_3(&sweep)),
        (4, "replay equivalence", criterion_4()),
        (5, "forward-count ordering", criterion_5()),
        (6, "largest-part memory trends", criterion_6()),
        (7, "wire format", criterion_7()),
        (8, "transport conservation", criterion_8()),
        (9, "shadow-ray locality", criterion_9()),
        (10, "primary-ray ownership", criterion_10()),
    ];
    let mut failed = 0;
    for (n, title, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.0}s", results.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
