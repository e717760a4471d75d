use std::sync::Arc;

use proxytrace::engine::shade::{primary_ray, record_ray};
use proxytrace::engine::{RenderConfig, Setup};
use proxytrace::partition::{MemoryModel, PartitionOptions, Strategy};
use proxytrace::reference::{intersect_oracle, render_reference};
use proxytrace_web::{forwarding_chain, scene_by_name, trace_frame, Demo};

fn cfg() -> RenderConfig {
    RenderConfig { width: 40, height: 30, spp: 2, max_bounce: 3, frame_seed: 5, ..Default::default() }
}

#[test]
fn sequential_tracer_equals_reference() {
    for name in ["mini-island", "box", "shadow"] {
        let scene = Arc::new(scene_by_name(name).unwrap());
        let reference = render_reference(scene.clone(), &cfg()).unwrap();
        assert_eq!(trace_frame(&scene, &cfg()), reference.accumulation, "{name}");
    }
}

#[test]
fn forwarding_chain_finds_the_closest_hit() {
    let scene = Arc::new(scene_by_name("mini-island").unwrap());
    let c = RenderConfig { spp: 1, max_bounce: 0, ..cfg() };
    for strategy in [Strategy::SpatialSah, Strategy::ObjectProxies, Strategy::Best] {
        let setup =
            Setup::new(scene.clone(), 4, strategy, &MemoryModel::default(), &PartitionOptions::default(), None).unwrap();
        for px in (0..c.pixels()).step_by(7) {
            let (hops, shader) = forwarding_chain(&setup, &c, px);
            let mut ranks: Vec<_> = hops.iter().map(|h| h.rank).collect();
            ranks.sort();
            ranks.dedup();
            assert_eq!(ranks.len(), hops.len(), "{strategy} pixel {px}: revisit");
            let last = hops.last().unwrap();
            let ray = record_ray(&primary_ray(&scene.camera, &c, 0, px, 0));
            match intersect_oracle(&scene, &ray) {
                Some((t, ..)) => {
                    assert_eq!(last.t_max, t, "{strategy} pixel {px}");
                    assert!(last.hit_owners.contains(&shader));
                }
                None => assert!(last.hit_owners.is_empty()),
            }
        }
    }
}

#[test]
fn demo_api_round_trip() {
    let mut demo = Demo::new("box").unwrap();
    let rgba = demo.render(24, 16, 1, 2).unwrap();
    assert_eq!(rgba.len(), 24 * 16 * 4);
    assert!(rgba.chunks_exact(4).all(|p| p[3] == 255));
    let v: serde_json::Value = serde_json::from_str(&demo.partition("object-naive", 3).unwrap()).unwrap();
    assert_eq!(v["memory"].as_array().unwrap().len(), 3);
    assert!(!v["proxies"].as_array().unwrap().is_empty());
    let t: serde_json::Value = serde_json::from_str(&demo.trace_pixel(12, 8).unwrap()).unwrap();
    assert!(!t["hops"].as_array().unwrap().is_empty());
    assert!(t["shader"].as_u64().unwrap() < 3);
}
