//! Binary inclusion vectors over the covariates (points of the model space).

use std::fmt;

use serde::{Deserialize, Serialize};

/// Inclusion indicator `k` over `p` covariates.
///
/// `size()` is cached and always equals the number of set bits.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<bool>", into = "Vec<bool>")]
pub struct ModelIndicator {
    bits: Vec<bool>,
    size: usize,
}

impl ModelIndicator {
    pub fn empty(p: usize) -> Self {
        Self {
            bits: vec![false; p],
            size: 0,
        }
    }

    pub fn full(p: usize) -> Self {
        Self {
            bits: vec![true; p],
            size: p,
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let size = bits.iter().filter(|&&b| b).count();
        Self { bits, size }
    }

    /// Builds an indicator from 0-based covariate indices. Out-of-range indices panic.
    pub fn from_indices(p: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; p];
        for &i in indices {
            bits[i] = true;
        }
        Self::from_bits(bits)
    }

    /// Model number `mask` in the enumeration order used by the oracle: bit `i`
    /// of `mask` is covariate `i`.
    pub fn from_mask(p: usize, mask: u64) -> Self {
        debug_assert!(p <= 64);
        Self::from_bits((0..p).map(|i| (mask >> i) & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        debug_assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | (1 << i) } else { m })
    }

    pub fn p(&self) -> usize {
        self.bits.len()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        if self.bits[i] != value {
            self.bits[i] = value;
            if value {
                self.size += 1;
            } else {
                self.size -= 1;
            }
        }
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.ones().collect()
    }

    /// Entrywise maximum `k ∨ j`.
    pub fn or(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a || b)
    }

    /// Entrywise minimum `k ∧ j`.
    pub fn and(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn complement(&self) -> Self {
        Self::from_bits(self.bits.iter().map(|&b| !b).collect())
    }

    /// `self ⊃ other`: every covariate of `other` is also in `self` (non-strict).
    pub fn contains(&self, other: &Self) -> bool {
        assert_eq!(self.p(), other.p(), "indicator length mismatch");
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!(self.p(), other.p(), "indicator length mismatch");
        Self::from_bits(
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

impl From<Vec<bool>> for ModelIndicator {
    fn from(bits: Vec<bool>) -> Self {
        Self::from_bits(bits)
    }
}

impl From<ModelIndicator> for Vec<bool> {
    fn from(k: ModelIndicator) -> Self {
        k.bits
    }
}

/// Renders as a 0/1 string, covariate 0 first.
impl fmt::Display for ModelIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for ModelIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelIndicator({self})")
    }
}
