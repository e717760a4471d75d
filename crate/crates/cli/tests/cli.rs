use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_proxytrace"));
    c.env("PROXYTRACE_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, kind: &str) -> PathBuf {
    ok(&["generate", kind, "--out", dir.to_str().unwrap()]);
    let name = if kind == "stress" { "mini-island-stress" } else { kind };
    dir.join(format!("{name}.json"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Column `name` of a one-row stats CSV.
fn stat(csv: &Path, name: &str) -> u64 {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    let row: Vec<_> = lines.next().unwrap().split(',').collect();
    row[header.iter().position(|h| *h == name).unwrap()].parse().unwrap()
}

const SMALL: [&str; 6] = ["--size", "48x32", "--spp", "2", "--bounces", "3"];

#[test]
fn distributed_render_matches_one_rank() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "mini-island");
    let (a, b) = (dir.path().join("a.raw"), dir.path().join("b.raw"));
    let png = dir.path().join("a.png");
    ok(&[&["render", s(&scene), "--ranks", "1", "--raw", s(&a)], &SMALL[..]].concat());
    ok(&[&["render", s(&scene), "--ranks", "4", "--strategy", "spatial-sah", "--raw", s(&b), "--out", s(&png)], &SMALL[..]].concat());
    assert!(std::fs::metadata(&png).unwrap().len() > 0);
    ok(&["compare", s(&a), s(&b)]);
}

#[test]
fn best_forwards_fewer_rays_than_object_naive() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "mini-island");
    let mut forwards = Vec::new();
    for strategy in ["best", "object-naive"] {
        let csv = dir.path().join(format!("{strategy}.csv"));
        ok(&[&["render", s(&scene), "--ranks", "4", "--strategy", strategy, "--stats", s(&csv)], &SMALL[..]].concat());
        forwards.push(stat(&csv, "forwards_total"));
    }
    assert!(forwards[0] < forwards[1], "{forwards:?}");
}

#[test]
fn replay_and_bitmask8_agree() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "mini-island");
    let mut runs = Vec::new();
    for (mask, culling) in [("replay", "auto"), ("bitmask8", "off")] {
        let raw = dir.path().join(format!("{mask}.raw"));
        let csv = dir.path().join(format!("{mask}.csv"));
        ok(&[
            &["render", s(&scene), "--ranks", "4", "--mask", mask, "--culling", culling, "--raw", s(&raw), "--stats", s(&csv)],
            &SMALL[..],
        ]
        .concat());
        runs.push((std::fs::read(&raw).unwrap(), stat(&csv, "forwards_total")));
    }
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].1 > 0);
}

#[test]
fn replay_with_culling_is_a_domain_error() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "box");
    let out = run(&["render", s(&scene), "--ranks", "2", "--mask", "replay", "--culling", "on"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replay"));
}

#[test]
fn partition_dumps_plan_proxies_and_boxes() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "mini-island");
    let text = ok(&["partition", s(&scene), "--ranks", "3", "--strategy", "object-naive"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["plan"]["assignment"].as_array().is_some_and(|a| !a.is_empty()));
    assert!(v["proxies"].as_array().is_some_and(|a| !a.is_empty()));
    let (plan, proxies, ply) = (dir.path().join("plan.json"), dir.path().join("proxies.json"), dir.path().join("boxes.ply"));
    ok(&["partition", s(&scene), "--ranks", "3", "--plan", s(&plan), "--proxies", s(&proxies), "--ply", s(&ply)]);
    assert!(std::fs::read_to_string(&ply).unwrap().starts_with("ply\n"));
    let p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&proxies).unwrap()).unwrap();
    assert!(p["proxies"][0]["owners"].is_array());
}

#[test]
fn max_part_curves_are_monotone_for_object_modes() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "mini-island");
    let csv = ok(&["experiment", "max-part", s(&scene), "--strategies", "object-naive,object-proxies,best", "--nmax", "8"]);
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 8);
    for col in 1..=2 {
        assert!(rows.windows(2).all(|w| w[1][col] <= w[0][col]));
    }
}

#[test]
fn forwards_experiment_has_one_row_per_view() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "mini-island");
    let csv = ok(&[
        "experiment", "forwards", s(&scene), "--views", "island", "--size", "32x32", "--strategies", "best", "--ranks", "2",
    ]);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("view,best"));
}

#[test]
fn compare_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a.raw"), dir.path().join("b.raw"), dir.path().join("c.raw"));
    let f = |v: &[f32]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
    std::fs::write(&a, f(&[1.0, 2.0, 3.0])).unwrap();
    std::fs::write(&b, f(&[1.0, 2.0, 3.1])).unwrap();
    std::fs::write(&c, f(&[1.0, 2.0])).unwrap();
    ok(&["compare", s(&a), s(&a)]);
    assert_eq!(run(&["compare", s(&a), s(&b)]).status.code(), Some(1));
    ok(&["compare", s(&a), s(&b), "--tol", "0.05"]);
    assert_eq!(run(&["compare", s(&a), s(&c)]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["render"]).status.code(), Some(1));
    assert_eq!(run(&["render", "missing.json"]).status.code(), Some(1));
    assert_eq!(run(&["render", "missing.json", "--size", "12"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

fn free_ports(n: usize) -> Vec<String> {
    let ls: Vec<_> = (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    ls.iter().map(|l| l.local_addr().unwrap().to_string()).collect()
}

#[test]
fn missing_peers_exit_two() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "box");
    let peers = free_ports(3).join(",");
    let out = run(&["render", s(&scene), "--ranks", "2", "--backend", "socket", "--rank-id", "0", "--connect", &peers, "--timeout", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn socket_processes_match_reference() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "box");
    let peers = free_ports(3).join(",");
    let common = |id: &str| {
        let mut v = vec!["render", s(&scene), "--ranks", "2", "--strategy", "bvh-style", "--backend", "socket"];
        v.extend(["--rank-id", id, "--connect", &peers, "--timeout", "30"]);
        v.extend(SMALL);
        v.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let ranks: Vec<_> = ["0", "1"].iter().map(|id| bin().args(common(id)).spawn().unwrap()).collect();
    let socket_raw = dir.path().join("socket.raw");
    let mut head = common("2");
    head.extend(["--raw".into(), s(&socket_raw).into()]);
    let head = bin().args(head).output().unwrap();
    for mut r in ranks {
        assert!(r.wait().unwrap().success());
    }
    assert!(head.status.success(), "{}", String::from_utf8_lossy(&head.stderr));
    let reference = dir.path().join("ref.raw");
    ok(&[&["render", s(&scene), "--raw", s(&reference)], &SMALL[..]].concat());
    ok(&["compare", s(&socket_raw), s(&reference)]);
}

#[test]
fn generated_scenes_reload() {
    let dir = TempDir::new().unwrap();
    for kind in ["mini-island", "box", "shadow"] {
        let scene = generate(dir.path(), kind);
        ok(&["partition", s(&scene), "--ranks", "2", "--strategy", "spatial-simple", "--plan", s(&dir.path().join("p.json"))]);
    }
}
