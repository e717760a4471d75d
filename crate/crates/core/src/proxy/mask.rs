use std::fmt;

use serde::{Deserialize, Serialize};

/// Set of ranks as a bit field; bit `i` set means rank `i` is included.
///
/// Held as 64 bits in memory; the wire width (8 or 64 bits) is chosen by the
/// record format.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankMask(pub u64);

pub const MAX_RANKS: usize = 64;

impl RankMask {
    pub const EMPTY: RankMask = RankMask(0);

    pub fn single(rank: usize) -> Self {
        debug_assert!(rank < MAX_RANKS);
        RankMask(1 << rank)
    }

    /// All ranks `0..n`.
    pub fn all(n: usize) -> Self {
        if n >= 64 {
            RankMask(u64::MAX)
        } else {
            RankMask((1u64 << n) - 1)
        }
    }

    pub fn from_ranks<I: IntoIterator<Item = usize>>(ranks: I) -> Self {
        ranks.into_iter().fold(RankMask::EMPTY, |m, r| m.with(r))
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn contains(self, rank: usize) -> bool {
        rank < MAX_RANKS && self.0 >> rank & 1 == 1
    }

    #[inline]
    pub fn with(self, rank: usize) -> Self {
        RankMask(self.0 | 1 << rank)
    }

    #[inline]
    pub fn union(self, o: RankMask) -> Self {
        RankMask(self.0 | o.0)
    }

    #[inline]
    pub fn intersects(self, o: RankMask) -> bool {
        self.0 & o.0 != 0
    }

    pub fn is_subset_of(self, o: RankMask) -> bool {
        self.0 & !o.0 == 0
    }

    #[inline]
    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// The `n`-th set bit in ascending order (0-based), if it exists.
    pub fn nth(self, n: u32) -> Option<usize> {
        let mut bits = self.0;
        for _ in 0..n {
            if bits == 0 {
                return None;
            }
            bits &= bits - 1;
        }
        if bits == 0 {
            None
        } else {
            Some(bits.trailing_zeros() as usize)
        }
    }

    /// Rank at position `seed mod popcount` among the set bits.
    pub fn pick(self, seed: u32) -> Option<usize> {
        let c = self.count();
        if c == 0 {
            None
        } else {
            self.nth(seed % c)
        }
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_RANKS).filter(move |&r| self.contains(r))
    }

    /// Highest set rank + 1 (0 for the empty mask).
    pub fn span(self) -> usize {
        64 - self.0.leading_zeros() as usize
    }
}

impl fmt::Debug for RankMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
