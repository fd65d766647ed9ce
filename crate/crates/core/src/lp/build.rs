use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{LinearProgram, SparseRow};
use crate::audit::{verify_mdp, MAX_EXPONENT};
use crate::error::{Error, Result};
use crate::geo::{neighbor_pairs, AugmentedSecret, DistanceMatrix};
use crate::mechanisms::{MatrixMeta, PerturbationMatrix};
use crate::utility::CostTensor;

/// Context-free program over plain keys.
pub fn build_mdp_lp(
    cost: &CostTensor,
    prior: &[f64],
    dist: &DistanceMatrix,
    eps: f64,
    eta: f64,
) -> Result<LinearProgram> {
    if let Some(k) = cost.keys().iter().find(|k| !k.context.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "context-free program given context key {k}"
        )));
    }
    privacy_lp(cost, prior, dist, eps, eta, "mdp")
}

/// Program over full context keys `(x, v)` under the augmented metric.
pub fn build_cmdp_full_lp(
    cost: &CostTensor,
    prior: &[f64],
    dist: &DistanceMatrix,
    eps: f64,
    eta: f64,
) -> Result<LinearProgram> {
    if let Some(first) = cost.keys().first() {
        if let Some(k) = cost.keys().iter().find(|k| k.context.len() != first.context.len()) {
            return Err(Error::ContextMismatch {
                left: first.context.len(),
                right: k.context.len(),
            });
        }
    }
    let name = if cost.keys().first().is_none_or(|k| k.context.is_empty()) {
        "mdp"
    } else {
        "cmdp"
    };
    privacy_lp(cost, prior, dist, eps, eta, name)
}

/// Program over blanket keys `(x, b)` under the blanket metric.
pub fn build_cmdp_reduced_lp(
    cost: &CostTensor,
    prior: &[f64],
    dist: &DistanceMatrix,
    eps: f64,
    eta: f64,
) -> Result<LinearProgram> {
    privacy_lp(cost, prior, dist, eps, eta, "cmdp-reduced")
}

fn privacy_lp(
    cost: &CostTensor,
    prior: &[f64],
    dist: &DistanceMatrix,
    eps: f64,
    eta: f64,
    builder: &str,
) -> Result<LinearProgram> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let n = cost.keys().len();
    if prior.len() != n {
        return Err(Error::IndexMismatch(format!(
            "{} prior entries for {n} keys",
            prior.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| !(prior[i].is_finite() && prior[i] >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "key {} has no valid prior mass ({})",
            cost.keys()[i],
            prior[i]
        )));
    }
    if dist.len() != n {
        return Err(Error::IndexMismatch(format!("{} distances for {n} keys", dist.len())));
    }
    let k = cost.outputs().len();
    if k == 0 && n > 0 {
        return Err(Error::Empty("output set"));
    }
    let objective: Vec<f64> = (0..n * k).map(|c| prior[c / k] * cost.get(c / k, c % k)).collect();
    let eq = (0..n)
        .map(|i| SparseRow {
            coeffs: (0..k).map(|o| (i * k + o, 1.0)).collect(),
            rhs: 1.0,
        })
        .collect();
    let pairs = neighbor_pairs(dist, eta)?;
    let le = pairs
        .par_iter()
        .filter(|p| eps * p.distance <= MAX_EXPONENT)
        .flat_map_iter(|p| {
            let a = (eps * p.distance).exp();
            (0..k).flat_map(move |o| {
                [(p.i, p.j), (p.j, p.i)].into_iter().map(move |(u, v)| SparseRow {
                    coeffs: vec![(u * k + o, 1.0), (v * k + o, -a)],
                    rhs: 0.0,
                })
            })
        })
        .collect();
    Ok(LinearProgram {
        keys: cost.keys().to_vec(),
        outputs: cost.outputs().to_vec(),
        objective,
        le,
        eq,
        meta: MatrixMeta {
            epsilon: eps,
            eta,
            metric: "haversine".into(),
            builder: builder.into(),
        },
    })
}

/// Forces every key's row to equal the rows of the other keys with the same
/// current location.
pub fn add_context_invariance(lp: &mut LinearProgram) {
    let k = lp.outputs.len();
    let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, key) in lp.keys.iter().enumerate() {
        groups.entry(key.current).or_default().push(i);
    }
    for members in groups.values() {
        for w in members.windows(2) {
            for o in 0..k {
                lp.eq.push(SparseRow {
                    coeffs: vec![(w[0] * k + o, 1.0), (w[1] * k + o, -1.0)],
                    rhs: 0.0,
                });
            }
        }
    }
    lp.meta.builder = format!("{}+invariant", lp.meta.builder);
}

/// For each full key, the index of the qstar row it projects to.
pub fn prefix_projection(full: &[AugmentedSecret], reduced: &[AugmentedSecret]) -> Result<Vec<usize>> {
    full.iter()
        .map(|f| {
            reduced
                .iter()
                .enumerate()
                .filter(|(_, r)| r.is_prefix_of(f))
                .max_by_key(|(_, r)| r.context.len())
                .map(|(i, _)| i)
                .ok_or_else(|| Error::IndexMismatch(format!("no reduced key projects {f}")))
        })
        .collect()
}

/// Full-context program plus equalities keeping each blanket's output marginal at
/// the reduced optimum: `Σ_{v→b} p_v q_v,y = p_b q*_b,y`, with `p_b = Σ_{v→b} p_v`.
///
/// `qstar` must satisfy the reduced constraints under `reduced_dist` at (`eps`, `eta`).
#[allow(clippy::too_many_arguments)]
pub fn build_refined_lp(
    cost: &CostTensor,
    prior: &[f64],
    dist: &DistanceMatrix,
    eps: f64,
    eta: f64,
    qstar: &PerturbationMatrix,
    reduced_dist: &DistanceMatrix,
    project: &[usize],
) -> Result<LinearProgram> {
    if qstar.outputs() != cost.outputs() {
        return Err(Error::IndexMismatch(
            "qstar outputs differ from the cost outputs".into(),
        ));
    }
    if project.len() != cost.keys().len() || project.iter().any(|&b| b >= qstar.keys().len()) {
        return Err(Error::IndexMismatch(
            "projection does not map full keys onto qstar rows".into(),
        ));
    }
    let audit = verify_mdp(qstar, reduced_dist, eps, eta, super::FEAS_TOL)?;
    if !audit.pass {
        return Err(Error::InvalidArgument(format!(
            "qstar violates the reduced constraints by {}",
            audit.max_violation
        )));
    }
    let mut lp = build_cmdp_full_lp(cost, prior, dist, eps, eta)?;
    let k = cost.outputs().len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); qstar.keys().len()];
    for (v, &b) in project.iter().enumerate() {
        members[b].push(v);
    }
    for (b, vs) in members.iter().enumerate() {
        if vs.is_empty() {
            continue;
        }
        let pb: f64 = vs.iter().map(|&v| prior[v]).sum();
        for o in 0..k {
            lp.eq.push(SparseRow {
                coeffs: vs.iter().map(|&v| (v * k + o, prior[v])).collect(),
                rhs: pb * qstar.get(b, o),
            });
        }
    }
    lp.meta.builder = "cmdp-refined".into();
    Ok(lp)
}
