//! Checks shared by the topic suites and the acceptance runner.
#![allow(dead_code)]

use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use proxytrace::math::{Aabb, Ray, Vec3};
use proxytrace::proxy::{Proxy, ProxyBvh, ProxySet, RankMask};
use proxytrace::reference::forward_oracle;
use proxytrace::transport::wire::{quantize, to_f16, FLAG_IN_MEDIUM, FLAG_SHADE_ONLY, FLAG_SHADOW};
use proxytrace::transport::{inproc_endpoints, tcp_endpoint, tile_rows, PathRecord, RankGroup, WireFormat};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

// ---- wire fixture -------------------------------------------------------

fn float(v: &serde_json::Value) -> f32 {
    match v {
        serde_json::Value::String(s) if s == "inf" => f32::INFINITY,
        v => v.as_f64().expect("number") as f32,
    }
}

fn triple(v: &serde_json::Value) -> [f32; 3] {
    let a = v.as_array().expect("array");
    [float(&a[0]), float(&a[1]), float(&a[2])]
}

fn ranks(v: &serde_json::Value) -> RankMask {
    RankMask::from_ranks(v.as_array().expect("array").iter().map(|r| r.as_u64().unwrap() as usize))
}

/// Records described by `wire_fixture.json`.
pub fn wire_fixture() -> Vec<PathRecord> {
    let text = std::fs::read_to_string(data("wire_fixture.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc.as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let mut pf = r["pixel"].as_u64().unwrap() as u32;
            for f in r["flags"].as_array().unwrap() {
                pf |= match f.as_str().unwrap() {
                    "shadow" => FLAG_SHADOW,
                    "inMedium" => FLAG_IN_MEDIUM,
                    "shadeOnly" => FLAG_SHADE_ONLY,
                    other => panic!("unknown flag {other}"),
                };
            }
            PathRecord {
                origin: triple(&r["origin"]),
                dir: triple(&r["dir"]).map(to_f16),
                throughput: triple(&r["throughput"]).map(to_f16),
                t_max: float(&r["tMax"]),
                pixel_flags: pf,
                visited: ranks(&r["visited"]),
                origin_rank: r["originRank"].as_u64().unwrap() as u8,
                hit_owners: ranks(&r["hitOwners"]),
            }
        })
        .collect()
}

pub const FORMATS: [(WireFormat, &str); 4] = [
    (WireFormat::Mask8, "mask8"),
    (WireFormat::Mask64, "mask64"),
    (WireFormat::Replay8, "replay8"),
    (WireFormat::Replay64, "replay64"),
];

/// Compares encodings of the fixture against the golden files and checks the
/// round trip. Returns a description of the first problem.
pub fn check_golden_wire() -> Result<(), String> {
    let records = wire_fixture();
    for (fmt, name) in FORMATS {
        let golden = std::fs::read(data(&format!("wire_{name}.bin"))).map_err(|e| e.to_string())?;
        let bytes = fmt.encode(&records);
        if bytes != golden {
            let at = bytes.iter().zip(&golden).position(|(a, b)| a != b).unwrap_or(bytes.len().min(golden.len()));
            return Err(format!("{name}: encoding differs from golden file at byte {at}"));
        }
        let back = fmt.decode(&bytes).map_err(|e| e.to_string())?;
        let expect: Vec<_> = records.iter().map(|r| fmt.canonical(r)).collect();
        if back != expect {
            return Err(format!("{name}: decode(encode(x)) differs from x"));
        }
        if fmt.encode(&back) != bytes {
            return Err(format!("{name}: re-encoding is not stable"));
        }
    }
    if WireFormat::Mask8.record_size() != 36 || WireFormat::Replay8.record_size() != 36 {
        return Err("8-rank record size is not 36 bytes".into());
    }
    Ok(())
}

// ---- random generation --------------------------------------------------

pub struct Gen(pub ChaCha8Rng);

impl Gen {
    pub fn new(seed: u64) -> Gen {
        Gen(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f32 {
        (self.0.next_u32() >> 8) as f32 / (1u32 << 24) as f32
    }

    pub fn range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u32) -> u32 {
        self.0.next_u32() % n
    }

    pub fn u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    pub fn mask(&mut self, ranks: usize, max_bits: u32) -> RankMask {
        let bits = 1 + self.below(max_bits);
        RankMask::from_ranks((0..bits).map(|_| self.below(ranks as u32) as usize))
    }

    pub fn vec(&mut self, lo: f32, hi: f32) -> Vec3 {
        Vec3::new(self.range(lo, hi), self.range(lo, hi), self.range(lo, hi))
    }

    pub fn record(&mut self, src: usize, ranks: usize) -> PathRecord {
        let flags = [0, FLAG_SHADOW, FLAG_IN_MEDIUM, FLAG_SHADOW | FLAG_SHADE_ONLY][self.below(4) as usize];
        PathRecord {
            origin: self.vec(-1e3, 1e3).to_array(),
            dir: quantize(self.vec(-1.0, 1.0).normalized()),
            throughput: quantize(self.vec(0.0, 4.0)),
            t_max: if self.below(4) == 0 { f32::INFINITY } else { self.range(0.0, 1e4) },
            pixel_flags: self.below(1 << 28) | flags,
            visited: self.mask(ranks, 3).with(src),
            origin_rank: self.below(ranks as u32) as u8,
            hit_owners: if self.below(2) == 0 { RankMask::EMPTY } else { self.mask(ranks, 2) },
        }
    }
}

// ---- forwarding oracle --------------------------------------------------

/// A soup of up to 32 boxes over up to 8 ranks, with repeated boxes (exact
/// ties), flat boxes and axis-parallel rays mixed in.
pub fn forwarding_case(g: &mut Gen) -> (Ray, RankMask, Vec<Proxy>, u32) {
    let ranks = 1 + g.below(8) as usize;
    let count = g.below(33) as usize;
    let mut proxies: Vec<Proxy> = Vec::with_capacity(count);
    for _ in 0..count {
        let bounds = match g.below(8) {
            0 if !proxies.is_empty() => proxies[g.below(proxies.len() as u32) as usize].bounds,
            1 => {
                let lo = g.vec(-10.0, 10.0);
                let mut hi = lo + g.vec(0.0, 4.0);
                hi.y = lo.y;
                Aabb::new(lo, hi)
            }
            _ => {
                let lo = g.vec(-10.0, 10.0);
                Aabb::new(lo, lo + g.vec(0.01, 6.0))
            }
        };
        proxies.push(Proxy { bounds, owners: g.mask(ranks, 3) });
    }
    let origin = g.vec(-14.0, 14.0);
    let mut dir = g.vec(-1.0, 1.0);
    match g.below(6) {
        0 => dir.x = 0.0,
        1 => {
            dir.y = 0.0;
            dir.z = 0.0
        }
        _ => {}
    }
    if dir.length() < 1e-3 {
        dir = Vec3::new(0.0, 0.0, 1.0);
    }
    let t_max = if g.below(3) == 0 { f32::INFINITY } else { g.range(0.0, 30.0) };
    let ray = Ray::new(origin, dir.normalized(), 0.0, t_max);
    let visited = if g.below(4) == 0 { RankMask::EMPTY } else { g.mask(ranks, 4) };
    (ray, visited, proxies, g.u32())
}

/// Runs `cases` random cases through the proxy BVH and the linear scan, both
/// culling modes. Returns the number of disagreements and the first one.
pub fn check_forwarding(cases: usize, seed: u64) -> (usize, Option<String>) {
    let mut g = Gen::new(seed);
    let mut bad = 0;
    let mut first = None;
    for i in 0..cases {
        let (ray, visited, proxies, pick) = forwarding_case(&mut g);
        let bvh = ProxyBvh::build(ProxySet::new(proxies.clone()));
        for cull in [true, false] {
            let a = bvh.select_next_rank(&ray, visited, cull, pick);
            let b = forward_oracle(&ray, visited, &proxies, cull, pick);
            if a != b {
                bad += 1;
                first.get_or_insert_with(|| format!("case {i} culling={cull}: bvh {a:?} oracle {b:?}"));
            }
        }
    }
    (bad, first)
}

// ---- transport fuzz -----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    InProcess,
    Tcp,
}

pub fn groups(backend: Backend, ranks: usize, format: WireFormat) -> Vec<RankGroup> {
    let timeout = Duration::from_secs(60);
    let eps = match backend {
        Backend::InProcess => inproc_endpoints(ranks, timeout),
        Backend::Tcp => {
            let listeners: Vec<TcpListener> = (0..ranks).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
            let addrs: Vec<_> = listeners.iter().map(|l| l.local_addr().unwrap()).collect();
            let handles: Vec<_> = listeners
                .into_iter()
                .enumerate()
                .map(|(id, l)| {
                    let addrs = addrs.clone();
                    std::thread::spawn(move || tcp_endpoint(id, &addrs, l, timeout).unwrap())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        }
    };
    eps.into_iter().map(|ep| RankGroup::new(ep, ranks, format).unwrap()).collect()
}

struct FuzzLog {
    sent: Vec<[u8; 49]>,
    received: Vec<[u8; 49]>,
    records: u64,
    bytes: u64,
    tiles: Vec<(Vec<f32>, Vec<f32>)>,
}

/// `rounds` random count + ray exchanges, with a compositing pass every 100
/// rounds. Checks that the global multiset of received records equals what
/// was sent (after the format's canonicalization), that byte counters equal
/// records × record size, and that each composited tile equals the sum of all
/// partial buffers in rank order.
pub fn transport_fuzz(backend: Backend, ranks: usize, rounds: usize, format: WireFormat, seed: u64) -> Result<String, String> {
    let (w, h) = (13usize, 7usize);
    let logs: Vec<Result<FuzzLog, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = groups(backend, ranks, format)
            .into_iter()
            .map(|mut g| {
                s.spawn(move || {
                    let me = g.id();
                    let mut rng = Gen::new(seed ^ (me as u64) << 32);
                    let mut log = FuzzLog { sent: vec![], received: vec![], records: 0, bytes: 0, tiles: vec![] };
                    for round in 0..rounds {
                        let mut buckets = vec![Vec::new(); ranks];
                        for (dst, b) in buckets.iter_mut().enumerate() {
                            if dst != me && rng.below(3) != 0 {
                                let k = rng.below(6);
                                b.extend((0..k).map(|_| rng.record(me, ranks)));
                            }
                        }
                        let counts: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
                        g.exchange_counts(&counts).map_err(|e| e.to_string())?;
                        for b in &buckets {
                            log.sent.extend(b.iter().map(|r| format.canonical(r).sort_key()));
                            log.records += b.len() as u64;
                        }
                        let got = g.exchange_rays(&buckets).map_err(|e| e.to_string())?;
                        log.received.extend(got.iter().map(|r| r.sort_key()));
                        if round % 100 == 99 {
                            // every rank draws every partial buffer from a shared stream
                            let mut shared = Gen::new(seed + round as u64);
                            let partials: Vec<Vec<f32>> =
                                (0..ranks).map(|_| (0..w * h * 3).map(|_| shared.range(0.0, 100.0)).collect()).collect();
                            let tile = g.exchange_frame_tiles(w, h, &partials[me]).map_err(|e| e.to_string())?;
                            let rows = tile_rows(me, ranks, h);
                            let mut oracle = vec![0.0f32; tile.len()];
                            for p in &partials {
                                for (o, v) in oracle.iter_mut().zip(&p[rows.start * w * 3..rows.end * w * 3]) {
                                    *o += v;
                                }
                            }
                            log.tiles.push((tile, oracle));
                        }
                    }
                    log.bytes = g.stats.bytes_rays;
                    Ok(log)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut sent = Vec::new();
    let mut received = Vec::new();
    let mut tiles = 0;
    for (r, log) in logs.into_iter().enumerate() {
        let log = log?;
        if log.bytes != log.records * format.record_size() as u64 {
            return Err(format!("rank {r}: {} bytes for {} records", log.bytes, log.records));
        }
        for (t, o) in &log.tiles {
            if t != o {
                return Err(format!("rank {r}: composited tile differs from the central sum"));
            }
            tiles += 1;
        }
        sent.extend(log.sent);
        received.extend(log.received);
    }
    sent.sort_unstable();
    received.sort_unstable();
    if sent != received {
        return Err(format!("sent {} records, received {} (multisets differ)", sent.len(), received.len()));
    }
    Ok(format!("{} records, {tiles} tiles", sent.len()))
}
