//! Mixed-radix bijection between digit vectors and dense state indices.
//!
//! The first digit is the most significant, so index order is the
//! lexicographic order of the digit vectors and index 0 is the all-zero
//! vector.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadix {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl MixedRadix {
    pub fn new(radices: Vec<usize>) -> Result<Self> {
        if let Some(pos) = radices.iter().position(|&r| r == 0) {
            return Err(Error::Config(format!("radix at position {pos} is zero")));
        }
        let mut strides = vec![0; radices.len()];
        let mut size: usize = 1;
        for (i, &r) in radices.iter().enumerate().rev() {
            strides[i] = size;
            size = size
                .checked_mul(r)
                .ok_or_else(|| Error::Overflow(format!("product of radices {radices:?}")))?;
        }
        Ok(Self { radices, strides, size })
    }

    /// Number of representable vectors.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn encode(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.radices.len() {
            return Err(Error::Length {
                field: "digits".into(),
                expected: self.radices.len(),
                actual: digits.len(),
            });
        }
        let mut index = 0;
        for (pos, ((&d, &r), &s)) in digits.iter().zip(&self.radices).zip(&self.strides).enumerate() {
            if d >= r {
                return Err(Error::alphabet(format!("digit {pos}"), d as i64, 0, r as i64 - 1));
            }
            index += d * s;
        }
        Ok(index)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.size {
            return Err(Error::StateOutOfRange {
                index,
                num_states: self.size,
            });
        }
        Ok(self
            .radices
            .iter()
            .zip(&self.strides)
            .map(|(&r, &s)| (index / s) % r)
            .collect())
    }
}

/// Joint distribution of independent per-digit distributions, as sparse
/// `(index, probability)` pairs sorted by index with duplicates merged.
///
/// `factors[i]` lists `(digit, probability)` outcomes for position `i`;
/// probabilities are multiplied in position order.
pub fn factored_product(codec: &MixedRadix, factors: &[Vec<(usize, f64)>]) -> Vec<(usize, f64)> {
    debug_assert_eq!(factors.len(), codec.radices().len());
    let mut out: Vec<(usize, f64)> = vec![(0, 1.0)];
    for (factor, &stride) in factors.iter().zip(codec.strides()) {
        let mut next = Vec::with_capacity(out.len() * factor.len());
        for &(index, p) in &out {
            for &(digit, q) in factor {
                if q > 0.0 {
                    next.push((index + digit * stride, p * q));
                }
            }
        }
        out = next;
    }
    out.sort_by_key(|&(index, _)| index);
    out.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 += later.1;
            true
        } else {
            false
        }
    });
    out
}
