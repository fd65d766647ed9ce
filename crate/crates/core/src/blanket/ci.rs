//! Conditional G-test with a within-stratum permutation null.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::LocId;

/// Minimum number of rows a sample needs before it is tested.
pub const MIN_ROWS: usize = 200;
/// Default permutation count.
pub const PERMUTATIONS: usize = 500;
/// Significance level.
pub const ALPHA: f64 = 0.05;

/// Rows `(x_t, x_{t-1}, ..., x_{t-Γ})` of node ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CiSample {
    gamma: usize,
    rows: Vec<Vec<LocId>>,
}

impl CiSample {
    pub fn new(gamma: usize, rows: Vec<Vec<LocId>>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != gamma + 1) {
            return Err(Error::InvalidArgument(format!(
                "sample row has {} entries, expected {}",
                r.len(),
                gamma + 1
            )));
        }
        Ok(CiSample { gamma, rows })
    }

    /// Every window of `gamma + 1` consecutive locations, newest first.
    pub fn from_sequences(seqs: &[Vec<LocId>], gamma: usize) -> Self {
        let mut rows = Vec::new();
        for s in seqs {
            for t in gamma..s.len() {
                rows.push((0..=gamma).map(|lag| s[t - lag]).collect());
            }
        }
        CiSample { gamma, rows }
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn rows(&self) -> &[Vec<LocId>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<LocId>) -> Result<()> {
        if row.len() != self.gamma + 1 {
            return Err(Error::InvalidArgument(format!(
                "sample row has {} entries, expected {}",
                row.len(),
                self.gamma + 1
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: &CiSample) -> Result<()> {
        for r in &other.rows {
            self.push(r.clone())?;
        }
        Ok(())
    }
}

/// A conditional-independence test of `X_t ⊥ X_{t-target} | X_{t-l}, l ∈ cond`.
pub trait CiTest: Sync {
    fn p_value(&self, s: &CiSample, target: usize, cond: &[usize], seed: u64) -> Result<f64>;
}

/// G statistic over strata of the conditioning lags, calibrated by shuffling the
/// target column within each stratum.
#[derive(Clone, Copy, Debug)]
pub struct PermutationGTest {
    pub permutations: usize,
    pub min_rows: usize,
}

impl Default for PermutationGTest {
    fn default() -> Self {
        PermutationGTest {
            permutations: PERMUTATIONS,
            min_rows: MIN_ROWS,
        }
    }
}

impl CiTest for PermutationGTest {
    fn p_value(&self, s: &CiSample, target: usize, cond: &[usize], seed: u64) -> Result<f64> {
        if s.len() < self.min_rows {
            return Err(Error::InsufficientData(format!(
                "{} rows, at least {} needed",
                s.len(),
                self.min_rows
            )));
        }
        if self.permutations == 0 {
            return Err(Error::InvalidArgument("at least one permutation is needed".into()));
        }
        if target == 0 || target > s.gamma() || cond.iter().any(|&l| l == 0 || l > s.gamma() || l == target) {
            return Err(Error::InvalidArgument(format!(
                "lags must lie in 1..={} and differ from the target",
                s.gamma()
            )));
        }
        let strata = Strata::new(s, target, cond);
        let observed = strata.g(&strata.y);
        let exceed: usize = (0..self.permutations)
            .into_par_iter()
            .map(|b| {
                let mut rng = SplitMix64::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut y = strata.y.clone();
                for r in &strata.ranges {
                    y[r.clone()].shuffle(&mut rng);
                }
                usize::from(strata.g(&y) >= observed - 1e-9 * observed.abs().max(1.0))
            })
            .sum();
        Ok((1 + exceed) as f64 / (1 + self.permutations) as f64)
    }
}

/// Rows grouped by stratum, with `x` and `y` recoded to small stratum-local codes.
struct Strata {
    ranges: Vec<std::ops::Range<usize>>,
    x: Vec<u32>,
    y: Vec<u32>,
    // per stratum: (x levels, y levels)
    dims: Vec<(usize, usize)>,
}

impl Strata {
    fn new(s: &CiSample, target: usize, cond: &[usize]) -> Strata {
        let mut order: Vec<usize> = (0..s.len()).collect();
        let key = |i: usize| -> Vec<LocId> { cond.iter().map(|&l| s.rows[i][l]).collect() };
        order.sort_by_cached_key(|&i| (key(i), i));
        let mut ranges = Vec::new();
        let mut x = Vec::with_capacity(order.len());
        let mut y = Vec::with_capacity(order.len());
        let mut dims = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let k = key(order[start]);
            let mut end = start;
            while end < order.len() && key(order[end]) == k {
                end += 1;
            }
            let mut xc: HashMap<LocId, u32> = HashMap::new();
            let mut yc: HashMap<LocId, u32> = HashMap::new();
            for &i in &order[start..end] {
                let n = xc.len() as u32;
                x.push(*xc.entry(s.rows[i][0]).or_insert(n));
                let n = yc.len() as u32;
                y.push(*yc.entry(s.rows[i][target]).or_insert(n));
            }
            ranges.push(start..end);
            dims.push((xc.len(), yc.len()));
            start = end;
        }
        Strata { ranges, x, y, dims }
    }

    fn g(&self, y: &[u32]) -> f64 {
        let mut g = 0.0;
        let mut table = Vec::new();
        for (r, &(nx, ny)) in self.ranges.iter().zip(&self.dims) {
            if nx < 2 || ny < 2 {
                continue;
            }
            table.clear();
            table.resize(nx * ny, 0u32);
            let mut rx = vec![0u32; nx];
            let mut ry = vec![0u32; ny];
            for i in r.clone() {
                let (a, b) = (self.x[i] as usize, y[i] as usize);
                table[a * ny + b] += 1;
                rx[a] += 1;
                ry[b] += 1;
            }
            let n = r.len() as f64;
            for a in 0..nx {
                for b in 0..ny {
                    let o = table[a * ny + b];
                    if o > 0 {
                        let e = rx[a] as f64 * ry[b] as f64 / n;
                        g += o as f64 * (o as f64 / e).ln();
                    }
                }
            }
        }
        2.0 * g
    }
}

/// Shorthand for the default permutation G-test.
pub fn ci_test(s: &CiSample, target: usize, cond: &[usize], seed: u64) -> Result<f64> {
    PermutationGTest::default().p_value(s, target, cond, seed)
}
