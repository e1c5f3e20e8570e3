//! Alias-method sampling: O(K) setup, O(1) per draw.
//!
//! The distribution is stored as a uniform mixture of K two-point
//! distributions. A draw picks a cell uniformly, then keeps the cell's own
//! index with probability `prob[cell]` or jumps to `alias[cell]`.

use rand::Rng;

use crate::corpus::check_distribution;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    prob: f64,
    alias: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    cells: Vec<Cell>,
}

impl AliasTable {
    /// Builds a table with the small/large worklist pairing. `probs` must be
    /// nonnegative and sum to 1 within 1e-9.
    pub fn new(probs: &[f64]) -> Result<Self> {
        check_distribution(probs, 1e-9)?;
        let k = probs.len();
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * k as f64).collect();
        let mut cells: Vec<Cell> = (0..k).map(|i| Cell { prob: 1.0, alias: i as u32 }).collect();

        let mut small = Vec::with_capacity(k);
        let mut large = Vec::with_capacity(k);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            cells[s] = Cell { prob: scaled[s], alias: l as u32 };
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Whatever remains on either list is within rounding of 1.
        for i in small.into_iter().chain(large) {
            cells[i] = Cell { prob: 1.0, alias: i as u32 };
        }
        Ok(AliasTable { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Bernoulli threshold of each cell.
    pub fn prob(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.prob).collect()
    }

    pub fn alias(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.alias as usize).collect()
    }

    /// The distribution the table actually samples from.
    pub fn reconstruct(&self) -> Vec<f64> {
        let k = self.cells.len() as f64;
        let mut r = vec![0.0; self.cells.len()];
        for (i, c) in self.cells.iter().enumerate() {
            r[i] += c.prob;
            r[c.alias as usize] += 1.0 - c.prob;
        }
        r.iter_mut().for_each(|x| *x /= k);
        r
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.cells.len());
        let cell = self.cells[i];
        if rng.random::<f64>() < cell.prob {
            i
        } else {
            cell.alias as usize
        }
    }
}
