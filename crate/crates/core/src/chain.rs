use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-9;

/// Row-stochastic matrix over codes `0..size`; row `i` is `P(· | i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionMatrix(Vec<Vec<f64>>);

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self(rows);
        m.validate("transition matrix")?;
        Ok(m)
    }

    pub fn identity(size: usize) -> Self {
        Self(
            (0..size)
                .map(|i| (0..size).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// Every row moves to `target` with certainty.
    pub fn constant(size: usize, target: usize) -> Self {
        Self(
            (0..size)
                .map(|_| (0..size).map(|j| if j == target { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// Active codes `1..size` stay with `1 - complete`, drop to 0 with
    /// `complete`; code 0 is absorbing.
    pub fn task_completion(size: usize, complete: f64) -> Self {
        Self(
            (0..size)
                .map(|i| {
                    let mut row = vec![0.0; size];
                    if i == 0 {
                        row[0] = 1.0;
                    } else {
                        row[0] = complete;
                        row[i] += 1.0 - complete;
                    }
                    row
                })
                .collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let n = self.0.len();
        if n == 0 {
            return Err(Error::Config(format!("{name}: empty matrix")));
        }
        for (i, row) in self.0.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "{name}: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Config(format!("{name}: row {i} has probability {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Config(format!("{name}: row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn expect_size(&self, name: &str, size: usize) -> Result<()> {
        if self.size() != size {
            return Err(Error::Config(format!(
                "{name}: expected a {size}x{size} matrix, got {0}x{0}",
                self.size()
            )));
        }
        self.validate(name)
    }

    /// Nonzero outcomes of row `from`.
    pub fn outcomes(&self, from: usize) -> Result<Vec<(usize, f64)>> {
        let row = self
            .0
            .get(from)
            .ok_or_else(|| Error::Config(format!("no transition row for code {from} (size {})", self.size())))?;
        Ok(row
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| (j, p))
            .collect())
    }

    pub fn prob(&self, from: usize, to: usize) -> Result<f64> {
        self.0
            .get(from)
            .and_then(|row| row.get(to))
            .copied()
            .ok_or_else(|| Error::Config(format!("no transition entry {from} -> {to}")))
    }
}
