use highs::{ColProblem, HighsModelStatus, Sense};

use super::{LinearProgram, LpSolver, LpStatus, RawSolution};

/// HiGHS interior point with crossover, single-threaded with tight feasibility tolerances.
#[derive(Clone, Copy, Debug)]
pub struct HighsSolver {
    pub feasibility_tol: f64,
}

impl Default for HighsSolver {
    fn default() -> Self {
        HighsSolver { feasibility_tol: 1e-10 }
    }
}

impl LpSolver for HighsSolver {
    fn solve_raw(&self, lp: &LinearProgram) -> RawSolution {
        let n = lp.num_cols();
        if n == 0 {
            return RawSolution {
                status: LpStatus::Optimal,
                x: vec![],
            };
        }
        let mut pb = ColProblem::new();
        let mut by_col: Vec<Vec<(highs::Row, f64)>> = vec![Vec::new(); n];
        for r in &lp.le {
            let row = pb.add_row(..=r.rhs);
            for &(c, a) in &r.coeffs {
                by_col[c].push((row, a));
            }
        }
        for r in &lp.eq {
            let row = pb.add_row(r.rhs..=r.rhs);
            for &(c, a) in &r.coeffs {
                by_col[c].push((row, a));
            }
        }
        for (c, factors) in by_col.iter().enumerate() {
            pb.add_column(lp.objective[c], 0.0..=1.0, factors);
        }
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("threads", 1);
        // interior point plus crossover beats dual simplex on the dense ratio rows
        model.set_option("solver", "ipm");
        model.set_option("random_seed", 0);
        model.set_option("primal_feasibility_tolerance", self.feasibility_tol);
        model.set_option("dual_feasibility_tolerance", self.feasibility_tol);
        let solved = model.solve();
        let status = match solved.status() {
            HighsModelStatus::Optimal => LpStatus::Optimal,
            HighsModelStatus::Infeasible => LpStatus::Infeasible,
            HighsModelStatus::Unbounded => LpStatus::Unbounded,
            _ => LpStatus::Unknown,
        };
        let x = if status == LpStatus::Optimal {
            solved.get_solution().columns().to_vec()
        } else {
            vec![]
        };
        RawSolution { status, x }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::geo::{AugmentedSecret, DistanceMatrix, LocId};
    use crate::utility::CostTensor;
    use proptest::prelude::*;

    fn instance(n: usize, k: usize, costs: &[f64], prior: &[f64], pos: &[f64], eps: f64, eta: f64) -> LinearProgram {
        let keys: Vec<AugmentedSecret> = (0..n).map(|i| AugmentedSecret::plain(LocId(i as u64))).collect();
        let outs: Vec<LocId> = (0..k).map(|i| LocId(100 + i as u64)).collect();
        let c = CostTensor::new(keys, outs, costs[..n * k].to_vec()).unwrap();
        let d = DistanceMatrix::from_fn(n, |i, j| Ok((pos[i] - pos[j]).abs())).unwrap();
        let s: f64 = prior[..n].iter().sum();
        let p: Vec<f64> = prior[..n].iter().map(|v| v / s).collect();
        build_mdp_lp(&c, &p, &d, eps, eta).unwrap()
    }

    #[test]
    fn analytic_two_by_two() {
        let lp = instance(2, 2, &[0.0, 1.0, 1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], 2f64.ln(), 1.0);
        for engine in [&HighsSolver::default() as &dyn LpSolver, &DenseSimplex::default()] {
            let s = solve_with(engine, &lp);
            assert_eq!(s.status, LpStatus::Optimal);
            assert!((s.objective - 1.0 / 3.0).abs() < 1e-9);
            let q = s.q.unwrap();
            assert!((q.get(0, 0) - 2.0 / 3.0).abs() < 1e-9);
            assert!((q.get(1, 0) - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut lp = instance(1, 2, &[0.0, 1.0], &[1.0], &[0.0], 1.0, 1.0);
        lp.eq.push(SparseRow {
            coeffs: vec![(0, 1.0), (1, 1.0)],
            rhs: 0.5,
        });
        assert_eq!(solve(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn repeated_solves_agree_bitwise() {
        let costs: Vec<f64> = (0..36).map(|v| ((v * 7) % 11) as f64).collect();
        let lp = instance(
            6,
            6,
            &costs,
            &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
            &[0.0, 0.5, 1.1, 2.0, 2.2, 3.5],
            0.8,
            2.0,
        );
        assert_eq!(solve(&lp).x, solve(&lp).x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn engines_agree_on_small_programs(
            n in 1usize..5,
            k in 1usize..4,
            costs in proptest::collection::vec(0.0f64..5.0, 16),
            prior in proptest::collection::vec(0.05f64..1.0, 5),
            pos in proptest::collection::vec(0.0f64..4.0, 5),
            eps in 0.1f64..2.0,
            eta in 0.0f64..4.0,
        ) {
            let lp = instance(n, k, &costs, &prior, &pos, eps, eta);
            let a = solve_with(&HighsSolver::default(), &lp);
            let b = solve_with(&DenseSimplex::default(), &lp);
            prop_assert_eq!(a.status, LpStatus::Optimal);
            prop_assert_eq!(b.status, LpStatus::Optimal);
            prop_assert!((a.objective - b.objective).abs() < 1e-7, "{} vs {}", a.objective, b.objective);
        }

        #[test]
        fn objective_falls_as_epsilon_grows(
            costs in proptest::collection::vec(0.0f64..5.0, 16),
            pos in proptest::collection::vec(0.0f64..4.0, 4),
            e1 in 0.1f64..2.0,
            bump in 0.0f64..2.0,
        ) {
            let prior = [1.0; 4];
            let a = solve(&instance(4, 4, &costs, &prior, &pos, e1, 3.0));
            let b = solve(&instance(4, 4, &costs, &prior, &pos, e1 + bump, 3.0));
            prop_assert!(a.objective >= b.objective - 1e-7);
        }
    }
}
