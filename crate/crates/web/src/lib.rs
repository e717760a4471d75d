//! Browser demo. The browser has no threads or clocks, so instead of the
//! collective engine this crate drives the shared shading code sequentially
//! and simulates forwarding one ray at a time.

use std::sync::Arc;

use proxytrace::accel::{GeometryPiece, LocalScene};
use proxytrace::engine::image::tone_map;
use proxytrace::engine::primary_owner;
use proxytrace::engine::shade::{primary_ray, record_ray, trace_path, Shader};
use proxytrace::engine::{RankState, RenderConfig, Setup};
use proxytrace::partition::{MemoryModel, PartitionOptions, Strategy};
use proxytrace::proxy::{pick_seed, ForwardKey, RankMask};
use proxytrace::scene::{box_fixture, shadow_fixture, MiniIsland, Scene};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub fn scene_by_name(name: &str) -> Option<Scene> {
    match name {
        "mini-island" => Some(MiniIsland::new(8, (3, 4), 42).with_sun(true).build()),
        "box" => Some(box_fixture()),
        "shadow" => Some(shadow_fixture(true)),
        _ => None,
    }
}

/// Single-rank frame on the calling thread, in the engine's shading order.
pub fn trace_frame(scene: &Arc<Scene>, cfg: &RenderConfig) -> Vec<f32> {
    let pieces: Vec<GeometryPiece> = scene
        .instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| {
            scene.objects[inst.object].meshes.iter().map(move |&mesh| GeometryPiece {
                instance: i,
                mesh,
                fragment: None,
                owners: RankMask::single(0),
            })
        })
        .collect();
    let local = LocalScene::build(scene, &pieces);
    let camera = cfg.camera.unwrap_or(scene.camera);
    let mut acc = vec![0.0f32; cfg.pixels() as usize * 3];
    for sample in 0..cfg.spp {
        let mut queue: Vec<_> = (0..cfg.pixels()).map(|px| primary_ray(&camera, cfg, sample, px, 0)).collect();
        for bounce in 0..=cfg.max_bounce {
            let shader = Shader { scene, local: &local, cfg, rank: 0, sample, bounce };
            let mut next = Vec::new();
            for mut r in queue {
                if r.is_shadow() {
                    if local.occluded(&record_ray(&r)) {
                        continue;
                    }
                } else {
                    trace_path(&local, &mut r);
                }
                let s = shader.shade(&r);
                if let Some(c) = s.contribution {
                    let i = r.pixel() as usize * 3;
                    acc[i] += c.x;
                    acc[i + 1] += c.y;
                    acc[i + 2] += c.z;
                }
                next.extend(s.path);
                next.extend(s.shadow);
            }
            queue = next;
        }
    }
    acc
}

/// One stop of a camera ray's trip through the ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct Hop {
    pub rank: usize,
    /// Closest hit distance known after tracing here; infinite if none.
    pub t_max: f32,
    pub hit_owners: Vec<usize>,
}

/// Where one pixel's camera ray travels: the keeping rank, each rank it is
/// traced on, and the rank that shades it.
pub fn forwarding_chain(setup: &Setup, cfg: &RenderConfig, pixel: u32) -> (Vec<Hop>, usize) {
    let first: &RankState = &setup.ranks[0];
    let n = setup.rank_count();
    let camera = cfg.camera.unwrap_or(setup.scene.camera);
    let probe = primary_ray(&camera, cfg, 0, pixel, 0);
    let mut rank = primary_owner(&first.proxies, &record_ray(&probe), pixel, n, cfg.tmax_culling);
    let mut rec = primary_ray(&camera, cfg, 0, pixel, rank);
    let key = ForwardKey { pixel, bounce: 0 };
    let mut hops = Vec::new();
    loop {
        trace_path(&setup.ranks[rank].local, &mut rec);
        hops.push(Hop { rank, t_max: rec.t_max, hit_owners: rec.hit_owners.iter().collect() });
        match first.proxies.next_rank(&record_ray(&rec), rec.visited, cfg.tmax_culling, key) {
            Some(d) => {
                rec.visited = rec.visited.with(d);
                rank = d;
            }
            None => break,
        }
    }
    let shader = if rec.hit_owners.is_empty() || rec.hit_owners.contains(rank) {
        rank
    } else {
        rec.hit_owners.pick(pick_seed(key, rec.visited.count())).expect("non-empty owners")
    };
    (hops, shader)
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// A loaded scene plus the current partition.
#[wasm_bindgen]
pub struct Demo {
    scene: Arc<Scene>,
    setup: Option<Setup>,
    width: u32,
    height: u32,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str) -> Result<Demo, JsValue> {
        let scene = scene_by_name(scene).ok_or_else(|| js_err(format!("unknown scene '{scene}'")))?;
        Ok(Demo { scene: Arc::new(scene), setup: None, width: 96, height: 96 })
    }

    fn config(&self, spp: u32, bounces: u32) -> RenderConfig {
        RenderConfig { width: self.width, height: self.height, spp, max_bounce: bounces, ..RenderConfig::default() }
    }

    /// Renders a frame and returns RGBA bytes for a canvas.
    pub fn render(&mut self, width: u32, height: u32, spp: u32, bounces: u32) -> Result<Vec<u8>, JsValue> {
        self.width = width;
        self.height = height;
        let cfg = self.config(spp, bounces);
        cfg.validate().map_err(js_err)?;
        let rgb = tone_map(&trace_frame(&self.scene, &cfg), spp);
        Ok(rgb.chunks_exact(3).flat_map(|c| [c[0], c[1], c[2], 255]).collect())
    }

    /// Partitions the scene; returns JSON with the proxy boxes, their owners,
    /// each rank's memory estimate and the world bounds.
    pub fn partition(&mut self, strategy: &str, ranks: usize) -> Result<String, JsValue> {
        let strategy: Strategy = strategy.parse().map_err(js_err)?;
        let setup = Setup::new(
            self.scene.clone(),
            ranks,
            strategy,
            &MemoryModel::default(),
            &PartitionOptions::default(),
            None,
        )
        .map_err(js_err)?;
        let boxes: Vec<_> = setup
            .proxy_set
            .proxies
            .iter()
            .map(|p| json!({ "lo": p.bounds.lo.to_array(), "hi": p.bounds.hi.to_array(), "owners": p.owners.iter().collect::<Vec<_>>() }))
            .collect();
        let memory: Vec<f64> = setup.ranks.iter().map(|r| r.memory).collect();
        let b = self.scene.bounds;
        let out = json!({ "proxies": boxes, "memory": memory, "lo": b.lo.to_array(), "hi": b.hi.to_array() });
        self.setup = Some(setup);
        Ok(out.to_string())
    }

    /// Follows the camera ray through pixel (x, y) across the current
    /// partition; returns JSON with its hops and the shading rank.
    pub fn trace_pixel(&self, x: u32, y: u32) -> Result<String, JsValue> {
        let setup = self.setup.as_ref().ok_or_else(|| js_err("partition the scene first"))?;
        if x >= self.width || y >= self.height {
            return Err(js_err("pixel outside the image"));
        }
        let (hops, shader) = forwarding_chain(setup, &self.config(1, 0), y * self.width + x);
        let hops: Vec<_> = hops
            .iter()
            .map(|h| json!({ "rank": h.rank, "tMax": h.t_max.is_finite().then_some(h.t_max), "hitOwners": h.hit_owners }))
            .collect();
        Ok(json!({ "hops": hops, "shader": shader }).to_string())
    }
}
