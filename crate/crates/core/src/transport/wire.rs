//! Byte layout of forwarded paths.
//!
//! ```text
//! offset  size  field
//!      0    12  origin        3 x f32
//!     12     6  direction     3 x f16
//!     18     6  throughput    3 x f16
//!     24     4  tMax          f32
//!     28     4  pixel/flags   u32: pixel in bits 0..28, 28 shadow, 29 in-medium, 30 shade-only
//!     32     *  visited mask, or origin rank (u8) in replay mode
//!      *     *  hit owners mask
//! ```
//!
//! Masks are one byte wide for up to 8 ranks and eight bytes otherwise. The
//! narrow form is 34 bytes of payload padded to 36; the wide form is 48. In the
//! wide replay form the origin rank byte is followed by 3 padding bytes so the
//! hit mask stays 4-aligned (44 bytes). All values little-endian.

use half::f16;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::proxy::RankMask;

pub const PIXEL_BITS: u32 = 28;
pub const MAX_PIXELS: u32 = 1 << PIXEL_BITS;
pub const FLAG_SHADOW: u32 = 1 << 28;
pub const FLAG_IN_MEDIUM: u32 = 1 << 29;
/// Traversal is complete; the receiver only shades.
pub const FLAG_SHADE_ONLY: u32 = 1 << 30;

/// Rounds to the nearest f16 (ties to even), flushing subnormal results to a
/// signed zero.
#[inline]
pub fn to_f16(x: f32) -> f16 {
    let h = f16::from_f32(x);
    let bits = h.to_bits();
    if bits & 0x7c00 == 0 {
        f16::from_bits(bits & 0x8000)
    } else {
        h
    }
}

#[inline]
pub fn quantize(v: Vec3) -> [f16; 3] {
    [to_f16(v.x), to_f16(v.y), to_f16(v.z)]
}

#[inline]
pub fn expand(h: [f16; 3]) -> Vec3 {
    Vec3::new(h[0].to_f32(), h[1].to_f32(), h[2].to_f32())
}

/// A path or shadow ray in flight between ranks.
#[derive(Clone, Copy, Debug)]
pub struct PathRecord {
    pub origin: [f32; 3],
    pub dir: [f16; 3],
    pub throughput: [f16; 3],
    pub t_max: f32,
    pub pixel_flags: u32,
    pub visited: RankMask,
    /// Rank that generated the ray; what replay mode sends instead of `visited`.
    pub origin_rank: u8,
    pub hit_owners: RankMask,
}

impl PartialEq for PathRecord {
    /// Bitwise on every float field.
    fn eq(&self, o: &Self) -> bool {
        self.origin.map(f32::to_bits) == o.origin.map(f32::to_bits)
            && self.dir.map(f16::to_bits) == o.dir.map(f16::to_bits)
            && self.throughput.map(f16::to_bits) == o.throughput.map(f16::to_bits)
            && self.t_max.to_bits() == o.t_max.to_bits()
            && self.pixel_flags == o.pixel_flags
            && self.visited == o.visited
            && self.origin_rank == o.origin_rank
            && self.hit_owners == o.hit_owners
    }
}

impl Eq for PathRecord {}

impl PathRecord {
    #[inline]
    pub fn pixel(&self) -> u32 {
        self.pixel_flags & (MAX_PIXELS - 1)
    }

    #[inline]
    pub fn is_shadow(&self) -> bool {
        self.pixel_flags & FLAG_SHADOW != 0
    }

    #[inline]
    pub fn is_shade_only(&self) -> bool {
        self.pixel_flags & FLAG_SHADE_ONLY != 0
    }

    #[inline]
    pub fn set_flag(&mut self, flag: u32, on: bool) {
        if on {
            self.pixel_flags |= flag;
        } else {
            self.pixel_flags &= !flag;
        }
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        Vec3::from_array(self.origin)
    }

    #[inline]
    pub fn direction(&self) -> Vec3 {
        expand(self.dir)
    }

    #[inline]
    pub fn throughput(&self) -> Vec3 {
        expand(self.throughput)
    }

    /// Bytes used to order records in multiset comparisons.
    pub fn sort_key(&self) -> [u8; 49] {
        let mut b = [0u8; 49];
        WireFormat::Mask64.write(self, &mut b[..48]);
        b[48] = self.origin_rank;
        b
    }
}

/// How visited sets travel with a ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskMode {
    /// 8-bit visited mask; at most 8 ranks.
    Bitmask8,
    /// 64-bit visited mask.
    Bitmask64,
    /// Only the origin rank is sent; receivers recompute the visited set.
    Replay,
}

impl MaskMode {
    pub fn name(self) -> &'static str {
        match self {
            MaskMode::Bitmask8 => "bitmask8",
            MaskMode::Bitmask64 => "bitmask64",
            MaskMode::Replay => "replay",
        }
    }

    pub fn wire_format(self, rank_count: usize) -> Result<WireFormat> {
        let narrow = rank_count <= 8;
        match self {
            MaskMode::Bitmask8 if narrow => Ok(WireFormat::Mask8),
            MaskMode::Bitmask8 => Err(Error::Config(format!("bitmask8 supports at most 8 ranks, got {rank_count}"))),
            MaskMode::Bitmask64 => Ok(WireFormat::Mask64),
            MaskMode::Replay if narrow => Ok(WireFormat::Replay8),
            MaskMode::Replay => Ok(WireFormat::Replay64),
        }
    }
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [MaskMode::Bitmask8, MaskMode::Bitmask64, MaskMode::Replay]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mask mode '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WireFormat {
    Mask8,
    Mask64,
    Replay8,
    Replay64,
}

impl WireFormat {
    pub const fn record_size(self) -> usize {
        match self {
            WireFormat::Mask8 | WireFormat::Replay8 => 36,
            WireFormat::Mask64 => 48,
            WireFormat::Replay64 => 44,
        }
    }

    pub fn is_replay(self) -> bool {
        matches!(self, WireFormat::Replay8 | WireFormat::Replay64)
    }

    fn write(self, r: &PathRecord, b: &mut [u8]) {
        for (k, c) in r.origin.iter().enumerate() {
            b[4 * k..4 * k + 4].copy_from_slice(&c.to_le_bytes());
        }
        for k in 0..3 {
            b[12 + 2 * k..14 + 2 * k].copy_from_slice(&r.dir[k].to_bits().to_le_bytes());
            b[18 + 2 * k..20 + 2 * k].copy_from_slice(&r.throughput[k].to_bits().to_le_bytes());
        }
        b[24..28].copy_from_slice(&r.t_max.to_le_bytes());
        b[28..32].copy_from_slice(&r.pixel_flags.to_le_bytes());
        match self {
            WireFormat::Mask8 => {
                b[32] = r.visited.0 as u8;
                b[33] = r.hit_owners.0 as u8;
                b[34..36].fill(0);
            }
            WireFormat::Replay8 => {
                b[32] = r.origin_rank;
                b[33] = r.hit_owners.0 as u8;
                b[34..36].fill(0);
            }
            WireFormat::Mask64 => {
                b[32..40].copy_from_slice(&r.visited.0.to_le_bytes());
                b[40..48].copy_from_slice(&r.hit_owners.0.to_le_bytes());
            }
            WireFormat::Replay64 => {
                b[32] = r.origin_rank;
                b[33..36].fill(0);
                b[36..44].copy_from_slice(&r.hit_owners.0.to_le_bytes());
            }
        }
    }

    fn read(self, b: &[u8]) -> PathRecord {
        let f = |o: usize| f32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let h = |o: usize| f16::from_bits(u16::from_le_bytes([b[o], b[o + 1]]));
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let (visited, origin_rank, hit_owners) = match self {
            WireFormat::Mask8 => (RankMask(b[32] as u64), 0, RankMask(b[33] as u64)),
            WireFormat::Replay8 => (RankMask::EMPTY, b[32], RankMask(b[33] as u64)),
            WireFormat::Mask64 => (RankMask(u64_at(32)), 0, RankMask(u64_at(40))),
            WireFormat::Replay64 => (RankMask::EMPTY, b[32], RankMask(u64_at(36))),
        };
        PathRecord {
            origin: [f(0), f(4), f(8)],
            dir: [h(12), h(14), h(16)],
            throughput: [h(18), h(20), h(22)],
            t_max: f(24),
            pixel_flags: u32::from_le_bytes(b[28..32].try_into().unwrap()),
            visited,
            origin_rank,
            hit_owners,
        }
    }

    /// Appends the wire form of `records` to `out`. Only the fields the format
    /// carries are written: bitmask formats drop `origin_rank`, replay formats
    /// drop `visited`, and narrow formats truncate masks to 8 bits.
    pub fn encode_into(self, records: &[PathRecord], out: &mut Vec<u8>) {
        let n = self.record_size();
        let start = out.len();
        out.resize(start + n * records.len(), 0);
        for (r, chunk) in records.iter().zip(out[start..].chunks_exact_mut(n)) {
            self.write(r, chunk);
        }
    }

    pub fn encode(self, records: &[PathRecord]) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(records, &mut out);
        out
    }

    pub fn decode(self, bytes: &[u8]) -> Result<Vec<PathRecord>> {
        let n = self.record_size();
        if bytes.len() % n != 0 {
            return Err(Error::Protocol(format!("ray payload of {} bytes is not a multiple of {n}", bytes.len())));
        }
        Ok(bytes.chunks_exact(n).map(|c| self.read(c)).collect())
    }

    /// What survives a round trip through this format.
    pub fn canonical(self, r: &PathRecord) -> PathRecord {
        let narrow = |m: RankMask| RankMask(m.0 & 0xff);
        match self {
            WireFormat::Mask8 => {
                PathRecord { visited: narrow(r.visited), hit_owners: narrow(r.hit_owners), origin_rank: 0, ..*r }
            }
            WireFormat::Mask64 => PathRecord { origin_rank: 0, ..*r },
            WireFormat::Replay8 => PathRecord { visited: RankMask::EMPTY, hit_owners: narrow(r.hit_owners), ..*r },
            WireFormat::Replay64 => PathRecord { visited: RankMask::EMPTY, ..*r },
        }
    }
}
