//! Rank groups: count exchange, ray all-to-all, tile compositing and a few
//! small collectives, over an in-process or a TCP backend.
//!
//! Participants `0..ranks` are rendering ranks. A socket group may have one
//! more participant, the head, which only takes part in the handshake and
//! receives the final image.

mod endpoint;
mod inproc;
mod socket;
pub mod wire;

use std::ops::Range;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use endpoint::{Endpoint, Opcode};
pub use inproc::inproc_endpoints;
pub use socket::tcp_endpoint;
pub use wire::{MaskMode, PathRecord, WireFormat};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Rows of the image owned by `rank` when compositing.
pub fn tile_rows(rank: usize, ranks: usize, height: usize) -> Range<usize> {
    rank * height / ranks..(rank + 1) * height / ranks
}

/// Traffic counters of one participant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransportStats {
    /// Ray records sent, per destination rank.
    pub records_sent: Vec<u64>,
    pub bytes_rays: u64,
    pub bytes_tiles: u64,
    /// Every count matrix seen, in order.
    pub count_matrices: Vec<Vec<Vec<u32>>>,
}

pub struct RankGroup {
    ep: Endpoint,
    ranks: usize,
    format: WireFormat,
    pending_counts: Option<Vec<Vec<u32>>>,
    pub stats: TransportStats,
}

impl RankGroup {
    pub fn new(ep: Endpoint, ranks: usize, format: WireFormat) -> Result<RankGroup> {
        if ranks == 0 || ep.size() < ranks || ep.size() > ranks + 1 {
            return Err(Error::Config(format!("{} participants cannot host {ranks} ranks", ep.size())));
        }
        let stats = TransportStats { records_sent: vec![0; ranks], ..Default::default() };
        Ok(RankGroup { ep, ranks, format, pending_counts: None, stats })
    }

    /// Groups for `ranks` ranks inside one process.
    pub fn inproc(ranks: usize, format: WireFormat) -> Result<Vec<RankGroup>> {
        inproc_endpoints(ranks, DEFAULT_TIMEOUT).into_iter().map(|ep| RankGroup::new(ep, ranks, format)).collect()
    }

    pub fn id(&self) -> usize {
        self.ep.id()
    }

    pub fn rank_count(&self) -> usize {
        self.ranks
    }

    pub fn is_head(&self) -> bool {
        self.ep.id() == self.ranks
    }

    /// Participant that assembles the final image: the head if there is one,
    /// else rank 0.
    pub fn master(&self) -> usize {
        if self.ep.size() > self.ranks {
            self.ranks
        } else {
            0
        }
    }

    pub fn format(&self) -> WireFormat {
        self.format
    }

    fn others(&self) -> impl Iterator<Item = usize> {
        let me = self.ep.id();
        (0..self.ranks).filter(move |&r| r != me)
    }

    fn rank_only(&self, what: &str) -> Result<()> {
        if self.is_head() {
            return Err(Error::Protocol(format!("head cannot take part in {what}")));
        }
        Ok(())
    }

    /// Every rank learns how many rays every rank sends to every other rank.
    pub fn exchange_counts(&mut self, send: &[u32]) -> Result<Vec<Vec<u32>>> {
        self.rank_only("count exchange")?;
        if send.len() != self.ranks {
            return Err(Error::Protocol(format!("count row has {} entries for {} ranks", send.len(), self.ranks)));
        }
        let bytes: Vec<u8> = send.iter().flat_map(|c| c.to_le_bytes()).collect();
        for r in self.others().collect::<Vec<_>>() {
            self.ep.send(r, Opcode::Counts, bytes.clone())?;
        }
        let mut matrix = vec![Vec::new(); self.ranks];
        matrix[self.id()] = send.to_vec();
        for r in self.others().collect::<Vec<_>>() {
            let b = self.ep.recv(r, Opcode::Counts)?;
            if b.len() != 4 * self.ranks {
                return Err(Error::Protocol(format!("count row from {r} has {} bytes", b.len())));
            }
            matrix[r] = b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        }
        self.stats.count_matrices.push(matrix.clone());
        self.pending_counts = Some(matrix.clone());
        Ok(matrix)
    }

    /// Moves every bucket to its destination; returns what arrived here,
    /// grouped by ascending source rank. Bucket sizes must match the preceding
    /// count exchange.
    pub fn exchange_rays(&mut self, buckets: &[Vec<PathRecord>]) -> Result<Vec<PathRecord>> {
        self.rank_only("ray exchange")?;
        let matrix = self
            .pending_counts
            .take()
            .ok_or_else(|| Error::Protocol("ray exchange without a preceding count exchange".into()))?;
        let me = self.id();
        if buckets.len() != self.ranks {
            return Err(Error::Protocol(format!("{} buckets for {} ranks", buckets.len(), self.ranks)));
        }
        for (r, b) in buckets.iter().enumerate() {
            if b.len() as u64 != matrix[me][r] as u64 || (r == me && !b.is_empty()) {
                return Err(Error::Protocol(format!(
                    "bucket for rank {r} holds {} rays but {} were announced",
                    b.len(),
                    matrix[me][r]
                )));
            }
        }
        let size = self.format.record_size();
        for r in self.others().collect::<Vec<_>>() {
            if buckets[r].is_empty() {
                continue;
            }
            let bytes = self.format.encode(&buckets[r]);
            self.stats.records_sent[r] += buckets[r].len() as u64;
            self.stats.bytes_rays += bytes.len() as u64;
            self.ep.send(r, Opcode::Rays, bytes)?;
        }
        let mut received = Vec::new();
        for r in self.others().collect::<Vec<_>>() {
            let expect = matrix[r][me] as usize;
            if expect == 0 {
                continue;
            }
            let bytes = self.ep.recv(r, Opcode::Rays)?;
            if bytes.len() != expect * size {
                return Err(Error::Protocol(format!(
                    "rank {r} announced {expect} rays but sent {} bytes",
                    bytes.len()
                )));
            }
            received.extend(self.format.decode(&bytes)?);
        }
        Ok(received)
    }

    /// Parallel direct send: returns this rank's tile (rows [`tile_rows`]) summed
    /// over all ranks' partial buffers in ascending rank order.
    pub fn exchange_frame_tiles(&mut self, width: usize, height: usize, partial: &[f32]) -> Result<Vec<f32>> {
        self.rank_only("compositing")?;
        if partial.len() != width * height * 3 {
            return Err(Error::Protocol(format!("partial buffer of {} floats for {width}x{height}", partial.len())));
        }
        let me = self.id();
        let row = width * 3;
        let slice = |r: usize| {
            let rows = tile_rows(r, self.ranks, height);
            &partial[rows.start * row..rows.end * row]
        };
        for r in self.others().collect::<Vec<_>>() {
            let mut bytes = Vec::with_capacity(8 + 4 * slice(r).len());
            bytes.extend_from_slice(&(width as u32).to_le_bytes());
            bytes.extend_from_slice(&(height as u32).to_le_bytes());
            bytes.extend(slice(r).iter().flat_map(|v| v.to_le_bytes()));
            self.stats.bytes_tiles += bytes.len() as u64;
            self.ep.send(r, Opcode::Tiles, bytes)?;
        }
        let own = slice(me).to_vec();
        let mut tile = vec![0.0f32; own.len()];
        for r in 0..self.ranks {
            if r == me {
                tile.iter_mut().zip(&own).for_each(|(t, v)| *t += v);
                continue;
            }
            let b = self.ep.recv(r, Opcode::Tiles)?;
            if b.len() < 8 {
                return Err(Error::Protocol(format!("rank {r} sent a truncated tile")));
            }
            let dims = (
                u32::from_le_bytes(b[..4].try_into().unwrap()) as usize,
                u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize,
            );
            if dims != (width, height) || b.len() != 8 + 4 * own.len() {
                return Err(Error::Protocol(format!(
                    "rank {r} sent a {}x{} tile for a {width}x{height} frame",
                    dims.0, dims.1
                )));
            }
            for (t, c) in tile.iter_mut().zip(b[8..].chunks_exact(4)) {
                *t += f32::from_le_bytes(c.try_into().unwrap());
            }
        }
        Ok(tile)
    }

    /// Every rank's payload, indexed by rank, delivered to the master. Returns
    /// `None` on non-master participants.
    pub fn gather_to_master(&mut self, op: Opcode, payload: Vec<u8>) -> Result<Option<Vec<Vec<u8>>>> {
        let master = self.master();
        let me = self.id();
        if me != master {
            self.ep.send(master, op, payload)?;
            return Ok(None);
        }
        let mut own = Some(payload);
        let mut out = Vec::with_capacity(self.ranks);
        for r in 0..self.ranks {
            if r == me {
                out.push(own.take().unwrap());
            } else {
                out.push(self.ep.recv(r, op)?);
            }
        }
        Ok(Some(out))
    }

    /// Rank 0's payload, delivered to every rank (not the head).
    pub fn broadcast_from_rank0(&mut self, op: Opcode, payload: Vec<u8>) -> Result<Vec<u8>> {
        self.rank_only("broadcast")?;
        if self.id() == 0 {
            for r in 1..self.ranks {
                self.ep.send(r, op, payload.clone())?;
            }
            Ok(payload)
        } else {
            self.ep.recv(0, op)
        }
    }

    /// All participants, head included, compare a digest of their inputs.
    pub fn handshake(&mut self, digest: &[u8]) -> Result<()> {
        let me = self.id();
        let n = self.ep.size();
        for p in (0..n).filter(|&p| p != me) {
            self.ep.send(p, Opcode::SceneHash, digest.to_vec())?;
        }
        for p in (0..n).filter(|&p| p != me) {
            let theirs = self.ep.recv(p, Opcode::SceneHash)?;
            if theirs != digest {
                return Err(Error::Protocol(format!("participant {p} loaded a different scene or plan")));
            }
        }
        Ok(())
    }
}
