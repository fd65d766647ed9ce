//! Dense two-phase tableau simplex with Bland's pivoting rule.
//!
//! Deterministic and exact enough for small programs; used as the reference
//! engine when cross-checking other solvers.

use super::{LinearProgram, LpSolver, LpStatus, RawSolution, SparseRow};

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-10;
const REL_PIVOT: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    pub max_iterations: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            max_iterations: 200_000,
        }
    }
}

struct Tableau {
    rows: usize,
    width: usize, // columns + rhs
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.a[pr * w + pc];
        for c in 0..w {
            self.a[pr * w + c] /= p;
        }
        let pivot_row: Vec<f64> = self.a[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.a[r * w + pc];
            if f != 0.0 {
                for (c, pv) in pivot_row.iter().enumerate() {
                    if *pv != 0.0 {
                        self.a[r * w + c] -= f * pv;
                    }
                }
                self.a[r * w + pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimises `cost` over the columns allowed by `allowed`; Bland's rule.
    fn optimise(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool, budget: &mut usize) -> LpStatus {
        let ncols = self.width - 1;
        loop {
            if *budget == 0 {
                return LpStatus::Unknown;
            }
            *budget -= 1;
            // reduced cost c_j - c_B B^{-1} A_j
            let entering = (0..ncols).filter(|&c| allowed(c)).find(|&c| {
                let mut z = cost[c];
                for r in 0..self.rows {
                    let v = self.at(r, c);
                    if v != 0.0 {
                        z -= cost[self.basis[r]] * v;
                    }
                }
                z < -COST_EPS
            });
            let Some(pc) = entering else {
                return LpStatus::Optimal;
            };
            // tiny pivots wreck the tableau, so skip entries far below the column's largest
            let col_max = (0..self.rows).map(|r| self.at(r, pc)).fold(0.0, f64::max);
            let min_pivot = PIVOT_EPS.max(REL_PIVOT * col_max);
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let v = self.at(r, pc);
                if v > min_pivot {
                    // rounding can leave a basic value a hair below zero; never step backwards
                    let ratio = self.rhs(r).max(0.0) / v;
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[r] < bb),
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            let Some((_, pr, _)) = best else {
                return LpStatus::Unbounded;
            };
            self.pivot(pr, pc);
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve_raw(&self, lp: &LinearProgram) -> RawSolution {
        let n = lp.num_cols();
        // explicit upper bounds only where no unit-measure row caps the column
        let mut capped = vec![false; n];
        for r in &lp.eq {
            if r.rhs == 1.0 && r.coeffs.iter().all(|c| c.1 == 1.0) {
                for c in &r.coeffs {
                    capped[c.0] = true;
                }
            }
        }
        let mut le: Vec<SparseRow> = lp.le.clone();
        for (c, _) in capped.iter().enumerate().filter(|(_, k)| !**k) {
            le.push(SparseRow {
                coeffs: vec![(c, 1.0)],
                rhs: 1.0,
            });
        }
        let m = le.len() + lp.eq.len();
        let n_slack = le.len();
        // artificials for equality rows and for inequality rows with negative rhs
        let needs_art: Vec<bool> = le
            .iter()
            .map(|r| r.rhs < 0.0)
            .chain(lp.eq.iter().map(|_| true))
            .collect();
        let n_art = needs_art.iter().filter(|b| **b).count();
        let total = n + n_slack + n_art;
        let width = total + 1;
        let mut t = Tableau {
            rows: m,
            width,
            a: vec![0.0; m * width],
            basis: vec![0; m],
        };
        let mut art = n + n_slack;
        for (r, row) in le.iter().chain(&lp.eq).enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            for &(c, v) in &row.coeffs {
                t.a[r * width + c] += sign * v;
            }
            if r < n_slack {
                t.a[r * width + n + r] = sign;
            }
            t.a[r * width + total] = sign * row.rhs;
            if needs_art[r] {
                t.a[r * width + art] = 1.0;
                t.basis[r] = art;
                art += 1;
            } else {
                t.basis[r] = n + r;
            }
        }
        let original = t.a.clone();
        let mut budget = self.max_iterations;
        let is_art = |c: usize| c >= n + n_slack;
        if n_art > 0 {
            let phase1: Vec<f64> = (0..total).map(|c| if is_art(c) { 1.0 } else { 0.0 }).collect();
            match t.optimise(&phase1, &|_| true, &mut budget) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => unreachable!("phase one is bounded below"),
                other => {
                    return RawSolution {
                        status: other,
                        x: vec![],
                    }
                }
            }
            let infeas: f64 = (0..m).filter(|&r| is_art(t.basis[r])).map(|r| t.rhs(r)).sum();
            if infeas > 1e-9 {
                return RawSolution {
                    status: LpStatus::Infeasible,
                    x: vec![],
                };
            }
            // drive zero-level artificials out of the basis where possible
            for r in 0..m {
                if is_art(t.basis[r]) {
                    // the artificial sits at zero, so pivoting on any nonzero entry keeps
                    // the other rows' values; take the largest for stability
                    let c = (0..n + n_slack)
                        .filter(|&c| t.at(r, c).abs() > 1e-9)
                        .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
                    if let Some(c) = c {
                        t.a[r * width + total] = 0.0;
                        t.pivot(r, c);
                    }
                }
            }
        }
        let mut phase2 = vec![0.0; total];
        phase2[..n].copy_from_slice(&lp.objective);
        let status = t.optimise(&phase2, &|c| !is_art(c), &mut budget);
        if status != LpStatus::Optimal {
            return RawSolution { status, x: vec![] };
        }
        let values = refine(&original, width, &t.basis).unwrap_or_else(|| (0..m).map(|r| t.rhs(r)).collect());
        let mut x = vec![0.0; n];
        for r in 0..m {
            if t.basis[r] < n {
                x[t.basis[r]] = values[r];
            }
        }
        RawSolution {
            status: LpStatus::Optimal,
            x,
        }
    }
}

/// Basic values re-solved from the original rows, free of the tableau's
/// accumulated elimination error. `None` when the basis matrix is singular.
fn refine(a: &[f64], width: usize, basis: &[usize]) -> Option<Vec<f64>> {
    let m = basis.len();
    let rhs = width - 1;
    // augmented [B | b], row-major
    let w = m + 1;
    let mut b = vec![0.0; m * w];
    for r in 0..m {
        for (k, &c) in basis.iter().enumerate() {
            b[r * w + k] = a[r * width + c];
        }
        b[r * w + m] = a[r * width + rhs];
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| b[i * w + col].abs().total_cmp(&b[j * w + col].abs()))?;
        if b[piv * w + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..w {
                b.swap(piv * w + k, col * w + k);
            }
        }
        let p = b[col * w + col];
        for r in col + 1..m {
            let f = b[r * w + col] / p;
            if f != 0.0 {
                for k in col..w {
                    b[r * w + k] -= f * b[col * w + k];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let tail: f64 = (r + 1..m).map(|k| b[r * w + k] * x[k]).sum();
        x[r] = (b[r * w + m] - tail) / b[r * w + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AugmentedSecret, LocId};
    use crate::mechanisms::MatrixMeta;

    fn raw_lp(objective: Vec<f64>, le: Vec<SparseRow>, eq: Vec<SparseRow>) -> LinearProgram {
        LinearProgram {
            keys: vec![AugmentedSecret::plain(LocId(0))],
            outputs: (0..objective.len() as u64).map(LocId).collect(),
            objective,
            le,
            eq,
            meta: MatrixMeta::default(),
        }
    }

    fn row(coeffs: &[(usize, f64)], rhs: f64) -> SparseRow {
        SparseRow {
            coeffs: coeffs.to_vec(),
            rhs,
        }
    }

    #[test]
    fn small_textbook_program() {
        // min -x0 - x1 s.t. x0 + 2 x1 <= 1.5, x0 + x1 = 1 (bounds from the unit row)
        let lp = raw_lp(
            vec![-1.0, -2.0],
            vec![row(&[(0, 1.0), (1, 2.0)], 1.5)],
            vec![row(&[(0, 1.0), (1, 1.0)], 1.0)],
        );
        let s = DenseSimplex::default().solve_raw(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let lp = raw_lp(
            vec![1.0, 1.0],
            vec![],
            vec![row(&[(0, 1.0), (1, 1.0)], 1.0), row(&[(0, 1.0), (1, 1.0)], 0.5)],
        );
        assert_eq!(DenseSimplex::default().solve_raw(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn negative_rhs_and_explicit_caps() {
        // min x0 s.t. -x0 <= -0.25, no unit row so x0 <= 1 is added
        let lp = raw_lp(vec![1.0], vec![row(&[(0, -1.0)], -0.25)], vec![]);
        let s = DenseSimplex::default().solve_raw(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 0.25).abs() < 1e-12);
        // max x0 stays bounded by the cap
        let lp = raw_lp(vec![-1.0], vec![], vec![]);
        let s = DenseSimplex::default().solve_raw(&lp);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let lp = raw_lp(
            vec![0.0, 1.0],
            vec![],
            vec![row(&[(0, 1.0), (1, 1.0)], 1.0), row(&[(0, 2.0), (1, 2.0)], 2.0)],
        );
        let s = DenseSimplex::default().solve_raw(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }
}
