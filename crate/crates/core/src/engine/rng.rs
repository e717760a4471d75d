//! Counter-based sampling: every random number is a pure function of
//! `(frame seed, sample, pixel, bounce, stream)`, so a path draws the same
//! values whichever rank shades it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const CAMERA: u32 = 0;
pub const LIGHT_PICK: u32 = 1;
pub const LIGHT_POINT: u32 = 2;
pub const BOUNCE: u32 = 3;
pub const ROULETTE: u32 = 4;

pub struct SampleRng(ChaCha8Rng);

impl SampleRng {
    pub fn new(frame_seed: u64, sample: u32, pixel: u32, bounce: u32, stream: u32) -> Self {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&frame_seed.to_le_bytes());
        seed[8..12].copy_from_slice(&sample.to_le_bytes());
        seed[12..16].copy_from_slice(&bounce.to_le_bytes());
        seed[16..20].copy_from_slice(&stream.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(pixel as u64);
        SampleRng(rng)
    }

    /// Uniform in `[0, 1)` with 24 bits of resolution.
    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.0.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let a: Vec<f32> = { let mut r = SampleRng::new(9, 1, 77, 2, BOUNCE); (0..8).map(|_| r.next_f32()).collect() };
        let b: Vec<f32> = { let mut r = SampleRng::new(9, 1, 77, 2, BOUNCE); (0..8).map(|_| r.next_f32()).collect() };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn every_key_component_matters() {
        let first = |s, sa, p, b, st| SampleRng::new(s, sa, p, b, st).next_f32();
        let base = first(1, 2, 3, 4, 0);
        assert_ne!(base, first(2, 2, 3, 4, 0));
        assert_ne!(base, first(1, 3, 3, 4, 0));
        assert_ne!(base, first(1, 2, 4, 4, 0));
        assert_ne!(base, first(1, 2, 3, 5, 0));
        assert_ne!(base, first(1, 2, 3, 4, 1));
    }

    #[test]
    fn roughly_uniform() {
        let mut r = SampleRng::new(0, 0, 0, 0, 0);
        let mean = (0..20_000).map(|_| r.next_f32() as f64).sum::<f64>() / 20_000.0;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
