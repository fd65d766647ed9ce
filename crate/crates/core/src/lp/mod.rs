//! Mechanism-design linear programs and their solution.
//!
//! Column `key * |outputs| + output` holds `q(key, output)`. Every program has
//! one unit-measure equality per key, both directions of the ratio constraint
//! for every neighbor pair and output, and bounds `0 <= q <= 1`.

mod build;
mod export;
mod highs_engine;
mod simplex;

pub use build::{
    add_context_invariance, build_cmdp_full_lp, build_cmdp_reduced_lp, build_mdp_lp, build_refined_lp,
    prefix_projection,
};
pub use export::{read_lp, write_lp};
pub use highs_engine::HighsSolver;
pub use simplex::DenseSimplex;

use crate::error::Result;
use crate::geo::{AugmentedSecret, LocId};
use crate::mechanisms::{MatrixMeta, PerturbationMatrix};

/// Primal feasibility required of an optimal solution.
pub const FEAS_TOL: f64 = 1e-8;

/// Sparse row `Σ coeff * x[col]` against a right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(c, a)| a * x[c]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub keys: Vec<AugmentedSecret>,
    pub outputs: Vec<LocId>,
    pub objective: Vec<f64>,
    /// `a · q <= rhs`
    pub le: Vec<SparseRow>,
    /// `a · q = rhs`
    pub eq: Vec<SparseRow>,
    pub meta: MatrixMeta,
}

impl LinearProgram {
    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    #[inline]
    pub fn column(&self, key: usize, out: usize) -> usize {
        key * self.outputs.len() + out
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.le {
            worst = worst.max(r.dot(x) - r.rhs);
        }
        for r in &self.eq {
            worst = worst.max((r.dot(x) - r.rhs).abs());
        }
        for v in x {
            worst = worst.max(-v).max(v - 1.0);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The engine stopped without a verified optimum.
    Unknown,
}

impl std::fmt::Display for LpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::Unknown => "unknown",
        })
    }
}

/// What an engine returns before polishing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
}

/// An LP engine.
pub trait LpSolver: Sync {
    fn solve_raw(&self, lp: &LinearProgram) -> RawSolution;
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present when optimal.
    pub q: Option<PerturbationMatrix>,
    pub objective: f64,
    pub max_infeasibility: f64,
    pub x: Vec<f64>,
}

/// Solves with the default engine.
pub fn solve(lp: &LinearProgram) -> LpSolution {
    solve_with(&HighsSolver::default(), lp)
}

/// Solves with `engine`, then cleans the optimum so every ratio constraint holds
/// exactly: negatives are clamped, each entry is lowered to `a * q_j` wherever a
/// row `q_i - a q_j <= 0` is violated, and rows are renormalized, repeating the
/// last two steps until the row sums settle.
pub fn solve_with(engine: &dyn LpSolver, lp: &LinearProgram) -> LpSolution {
    let raw = engine.solve_raw(lp);
    if raw.status != LpStatus::Optimal || raw.x.len() != lp.num_cols() {
        let status = if raw.status == LpStatus::Optimal {
            LpStatus::Unknown
        } else {
            raw.status
        };
        return LpSolution {
            status,
            q: None,
            objective: f64::NAN,
            max_infeasibility: f64::NAN,
            x: raw.x,
        };
    }
    let x = polish(lp, raw.x);
    let max_infeasibility = lp.max_infeasibility(&x);
    let objective = lp.objective_value(&x);
    let q = if max_infeasibility <= FEAS_TOL {
        PerturbationMatrix::new(lp.keys.clone(), lp.outputs.clone(), x.clone(), lp.meta.clone()).ok()
    } else {
        None
    };
    LpSolution {
        status: if q.is_some() {
            LpStatus::Optimal
        } else {
            LpStatus::Unknown
        },
        q,
        objective,
        max_infeasibility,
        x,
    }
}

fn polish(lp: &LinearProgram, mut x: Vec<f64>) -> Vec<f64> {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let ratios: Vec<(usize, usize, f64)> = lp
        .le
        .iter()
        .filter_map(|r| match r.coeffs.as_slice() {
            [(i, a), (j, b)] if *a == 1.0 && *b < 0.0 && r.rhs == 0.0 => Some((*i, *j, -*b)),
            _ => None,
        })
        .collect();
    let repair = |x: &mut Vec<f64>| {
        for _ in 0..200 {
            let mut changed = false;
            for &(i, j, a) in &ratios {
                let cap = a * x[j];
                if x[i] > cap {
                    x[i] = cap;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    };
    repair(&mut x);
    let k = lp.outputs.len();
    if k == 0 {
        return x;
    }
    // a repair can undo the renormalization, so alternate until rows settle
    for _ in 0..50 {
        let mut settled = true;
        for row in x.chunks_mut(k) {
            let s: f64 = row.iter().sum();
            if s > 0.0 && (s - 1.0).abs() > 1e-13 {
                settled = false;
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        if settled {
            break;
        }
        repair(&mut x);
    }
    x
}

/// Solves and returns the matrix, failing on any non-optimal status.
pub fn solve_matrix(lp: &LinearProgram) -> Result<(PerturbationMatrix, f64)> {
    let s = solve(lp);
    match s.q {
        Some(q) => Ok((q, s.objective)),
        None => Err(crate::error::Error::Solver {
            status: s.status,
            max_infeasibility: s.max_infeasibility,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::DistanceMatrix;
    use crate::utility::CostTensor;

    fn keys(n: u64) -> Vec<AugmentedSecret> {
        (0..n).map(|i| AugmentedSecret::plain(LocId(i))).collect()
    }

    fn outs(n: u64) -> Vec<LocId> {
        (0..n).map(|i| LocId(100 + i)).collect()
    }

    #[test]
    fn polish_clears_tiny_violations() {
        let c = CostTensor::new(keys(2), outs(2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let d = DistanceMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let lp = build_mdp_lp(&c, &[0.5, 0.5], &d, 2f64.ln(), 1.0).unwrap();
        // slightly infeasible point with a stray negative entry
        let x = vec![2.0 / 3.0 + 1e-11, 1.0 / 3.0 - 1e-11, 1.0 / 3.0, 2.0 / 3.0 + 1e-12];
        let p = polish(&lp, x);
        for r in &lp.le {
            assert!(r.dot(&p) <= 1e-15, "{}", r.dot(&p));
        }
        assert!(lp.max_infeasibility(&p) < 1e-10);
        let zero = polish(&lp, vec![1.0, -1e-12, 0.0, 1.0]);
        assert_eq!(zero[1], 0.0);
    }

    struct Fails;

    impl LpSolver for Fails {
        fn solve_raw(&self, _: &LinearProgram) -> RawSolution {
            RawSolution {
                status: LpStatus::Infeasible,
                x: vec![],
            }
        }
    }

    #[test]
    fn abnormal_statuses_carry_no_matrix() {
        let c = CostTensor::new(keys(1), outs(1), vec![0.0]).unwrap();
        let d = DistanceMatrix::from_rows(vec![vec![0.0]]).unwrap();
        let lp = build_mdp_lp(&c, &[1.0], &d, 1.0, 1.0).unwrap();
        let s = solve_with(&Fails, &lp);
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.q.is_none());
    }
}
