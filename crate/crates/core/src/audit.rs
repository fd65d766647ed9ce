//! Privacy audits: constraint verification and posterior leakage.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{neighbor_pairs, DistanceMatrix};
use crate::mechanisms::PerturbationMatrix;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Pairs with `ε d` above this carry no usable constraint.
pub const MAX_EXPONENT: f64 = 700.0;

/// A violated `q_{i,y} <= e^{εd} q_{j,y}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub output: usize,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    pub max_violation: f64,
    /// Violations above the tolerance, worst first.
    pub violations: Vec<Violation>,
    pub pass: bool,
}

/// Checks both directions of every neighbor-pair constraint for every output.
pub fn verify_mdp(
    q: &PerturbationMatrix,
    dist: &DistanceMatrix,
    eps: f64,
    eta: f64,
    tol: f64,
) -> Result<ConstraintReport> {
    if dist.len() != q.keys().len() {
        return Err(Error::IndexMismatch(format!(
            "{} distances for {} keys",
            dist.len(),
            q.keys().len()
        )));
    }
    let pairs = neighbor_pairs(dist, eta)?;
    let k = q.outputs().len();
    let per_pair: Vec<(f64, Vec<Violation>)> = pairs
        .par_iter()
        .filter(|p| eps * p.distance <= MAX_EXPONENT)
        .map(|p| {
            let bound = (eps * p.distance).exp();
            let mut worst = f64::NEG_INFINITY;
            let mut found = Vec::new();
            for (a, b) in [(p.i, p.j), (p.j, p.i)] {
                for y in 0..k {
                    let excess = q.get(a, y) - bound * q.get(b, y);
                    worst = worst.max(excess);
                    if excess > tol {
                        found.push(Violation {
                            i: a,
                            j: b,
                            output: y,
                            excess,
                        });
                    }
                }
            }
            (worst, found)
        })
        .collect();
    let max_violation = per_pair.iter().map(|p| p.0).fold(0.0, f64::max);
    let mut violations: Vec<Violation> = per_pair.into_iter().flat_map(|p| p.1).collect();
    violations.sort_by(|a, b| {
        b.excess
            .total_cmp(&a.excess)
            .then((a.i, a.j, a.output).cmp(&(b.i, b.j, b.output)))
    });
    Ok(ConstraintReport {
        max_violation,
        pass: max_violation <= tol,
        violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLeakage {
    pub i: usize,
    pub j: usize,
    /// `+∞` when one row puts mass where the other has none.
    pub pl: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeakageReport {
    /// Every pair `i < j` of keys with positive prior.
    pub pairs: Vec<PairLeakage>,
    /// Prior-weighted mean over pairs of `E|ln(post ratio / prior ratio)|` under
    /// the pair's averaged output distribution.
    pub expected: f64,
    pub max: f64,
    /// Keys dropped for having no prior mass.
    pub excluded: Vec<usize>,
}

/// Posterior leakage of every key pair, with posteriors from Bayes' rule over the
/// outputs.
pub fn posterior_leakage(q: &PerturbationMatrix, prior: &[f64]) -> Result<LeakageReport> {
    let n = q.keys().len();
    if prior.len() != n {
        return Err(Error::IndexMismatch(format!(
            "{} prior entries for {n} keys",
            prior.len()
        )));
    }
    if let Some(p) = prior.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("prior entry {p} is not a probability")));
    }
    let excluded: Vec<usize> = (0..n).filter(|&i| prior[i] <= 0.0).collect();
    if !excluded.is_empty() {
        log::warn!("{} keys without prior mass excluded from leakage", excluded.len());
    }
    let live: Vec<usize> = (0..n).filter(|&i| prior[i] > 0.0).collect();
    let k = q.outputs().len();
    let evidence: Vec<f64> = (0..k)
        .map(|y| live.iter().map(|&i| prior[i] * q.get(i, y)).sum())
        .collect();
    let posterior = |i: usize, y: usize| prior[i] * q.get(i, y) / evidence[y];

    let rows: Vec<(PairLeakage, f64, f64)> = (0..live.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            let live = &live;
            let evidence = &evidence;
            (a + 1..live.len()).map(move |b| {
                let (i, j) = (live[a], live[b]);
                let prior_ratio = prior[i] / prior[j];
                let mut pl: f64 = 0.0;
                let mut mean = 0.0;
                for y in 0..k {
                    let (qi, qj) = (q.get(i, y), q.get(j, y));
                    if qi == 0.0 && qj == 0.0 {
                        continue;
                    }
                    let leak = if qi == 0.0 || qj == 0.0 || evidence[y] == 0.0 {
                        f64::INFINITY
                    } else {
                        ((posterior(i, y) / posterior(j, y)) / prior_ratio).ln().abs()
                    };
                    pl = pl.max(leak);
                    mean += 0.5 * (qi + qj) * leak;
                }
                (PairLeakage { i, j, pl }, mean, prior[i] * prior[j])
            })
        })
        .collect();
    let weight: f64 = rows.iter().map(|r| r.2).sum();
    let expected = if weight > 0.0 {
        rows.iter().map(|r| r.1 * r.2).sum::<f64>() / weight
    } else {
        0.0
    };
    let max = rows.iter().map(|r| r.0.pl).fold(0.0, f64::max);
    Ok(LeakageReport {
        pairs: rows.into_iter().map(|r| r.0).collect(),
        expected,
        max,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub pl: f64,
    pub bound: f64,
    /// `bound - pl`; `-∞` for infinite leakage.
    pub slack: f64,
    pub neighbor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// Smallest slack over neighbor pairs (`+∞` with none).
    pub margin: f64,
    /// Neighbor pair with the smallest slack.
    pub worst: Option<(usize, usize)>,
    /// Largest leakage over neighbor pairs.
    pub max_pl: f64,
    pub pass: bool,
}

/// Checks `PL(i,j) <= ε d(i,j) + tol` for every neighbor pair; pairs beyond
/// `eta` are reported but do not affect the verdict.
pub fn check_pl_bound(report: &LeakageReport, dist: &DistanceMatrix, eps: f64, eta: f64, tol: f64) -> BoundReport {
    let mut rows = Vec::with_capacity(report.pairs.len());
    let mut margin = f64::INFINITY;
    let mut worst = None;
    let mut max_pl: f64 = 0.0;
    for p in &report.pairs {
        let d = dist.get(p.i, p.j);
        let bound = eps * d;
        let slack = if p.pl.is_infinite() {
            f64::NEG_INFINITY
        } else {
            bound - p.pl
        };
        let neighbor = d <= eta && d.is_finite();
        if neighbor {
            max_pl = max_pl.max(p.pl);
            if slack < margin {
                margin = slack;
                worst = Some((p.i, p.j));
            }
        }
        rows.push(BoundRow {
            i: p.i,
            j: p.j,
            distance: d,
            pl: p.pl,
            bound,
            slack,
            neighbor,
        });
    }
    BoundReport {
        rows,
        margin,
        worst,
        max_pl,
        pass: margin >= -tol,
    }
}

/// Constraint check, leakage and bound check together.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub constraints: ConstraintReport,
    pub leakage: LeakageReport,
    pub bound: BoundReport,
    pub pass: bool,
}

pub fn audit(
    q: &PerturbationMatrix,
    dist: &DistanceMatrix,
    prior: &[f64],
    eps: f64,
    eta: f64,
    tol: f64,
) -> Result<AuditReport> {
    let constraints = verify_mdp(q, dist, eps, eta, tol)?;
    let leakage = posterior_leakage(q, prior)?;
    let bound = check_pl_bound(&leakage, dist, eps, eta, tol);
    Ok(AuditReport {
        pass: constraints.pass && bound.pass,
        constraints,
        leakage,
        bound,
    })
}

impl AuditReport {
    /// `key_i,key_j,distance_km,pl,bound,slack` rows followed by a `#` summary block.
    pub fn write(&self, q: &PerturbationMatrix, path: &Path) -> Result<()> {
        let mut w = crate::io::create(path)?;
        let io = |e| Error::io(path, e);
        let f = crate::io::fmt_f64;
        writeln!(w, "key_i,key_j,distance_km,pl,bound,slack").map_err(io)?;
        for r in &self.bound.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                q.keys()[r.i],
                q.keys()[r.j],
                f(r.distance),
                f(r.pl),
                f(r.bound),
                f(r.slack)
            )
            .map_err(io)?;
        }
        writeln!(w, "# pass={}", self.pass).map_err(io)?;
        writeln!(w, "# max_violation={}", f(self.constraints.max_violation)).map_err(io)?;
        writeln!(w, "# violations={}", self.constraints.violations.len()).map_err(io)?;
        if let Some(v) = self.constraints.violations.first() {
            writeln!(
                w,
                "# worst_violation={},{},{}",
                q.keys()[v.i],
                q.keys()[v.j],
                q.outputs()[v.output]
            )
            .map_err(io)?;
        }
        writeln!(w, "# max_pl={}", f(self.bound.max_pl)).map_err(io)?;
        writeln!(w, "# expected_pl={}", f(self.leakage.expected)).map_err(io)?;
        writeln!(w, "# pl_margin={}", f(self.bound.margin)).map_err(io)?;
        if let Some((i, j)) = self.bound.worst {
            writeln!(w, "# worst_pair={},{}", q.keys()[i], q.keys()[j]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
