//! Travel-cost utility loss between true and reported locations.
//!
//! For a key with next-location distribution `p(l | key)` and a task prior over
//! destinations, reporting `y` costs
//! `Σ_task p_task Σ_l p(l | key) |path(l, task) - path(y, task)|`.
//! Terms with an unreachable path are dropped and the remaining weights
//! renormalized.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{AugmentedSecret, LocId, LocationDomain};
use crate::priors::{Distribution, PriorModel};
use crate::roadnet::{shortest_path_trees, RoadGraph};

/// Loss in km for every (key, output) pair, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTensor {
    keys: Vec<AugmentedSecret>,
    outputs: Vec<LocId>,
    c: Vec<f64>,
}

impl CostTensor {
    pub fn new(keys: Vec<AugmentedSecret>, outputs: Vec<LocId>, c: Vec<f64>) -> Result<Self> {
        if c.len() != keys.len() * outputs.len() {
            return Err(Error::IndexMismatch(format!(
                "{} costs for {} keys x {} outputs",
                c.len(),
                keys.len(),
                outputs.len()
            )));
        }
        if let Some(v) = c.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("cost {v} must be finite and >= 0")));
        }
        Ok(CostTensor { keys, outputs, c })
    }

    pub fn keys(&self) -> &[AugmentedSecret] {
        &self.keys
    }

    pub fn outputs(&self) -> &[LocId] {
        &self.outputs
    }

    #[inline]
    pub fn get(&self, key: usize, out: usize) -> f64 {
        self.c[key * self.outputs.len() + out]
    }

    pub fn row(&self, key: usize) -> &[f64] {
        let k = self.outputs.len();
        &self.c[key * k..(key + 1) * k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    /// Collapses keys through `project` (key index -> group index), averaging each
    /// group's rows with weights `weight`. Groups with zero weight take the plain mean.
    pub fn aggregate(&self, groups: Vec<AugmentedSecret>, project: &[usize], weight: &[f64]) -> Result<CostTensor> {
        if project.len() != self.keys.len() || weight.len() != self.keys.len() {
            return Err(Error::IndexMismatch("projection does not cover the cost keys".into()));
        }
        let k = self.outputs.len();
        let mut acc = vec![0.0; groups.len() * k];
        let mut plain = vec![0.0; groups.len() * k];
        let mut mass = vec![0.0; groups.len()];
        let mut count = vec![0usize; groups.len()];
        for (i, &g) in project.iter().enumerate() {
            if g >= groups.len() {
                return Err(Error::IndexMismatch(format!("group index {g} out of range")));
            }
            mass[g] += weight[i];
            count[g] += 1;
            for o in 0..k {
                acc[g * k + o] += weight[i] * self.get(i, o);
                plain[g * k + o] += self.get(i, o);
            }
        }
        for g in 0..groups.len() {
            if count[g] == 0 {
                return Err(Error::IndexMismatch(format!("group {} has no members", groups[g])));
            }
            for o in 0..k {
                acc[g * k + o] = if mass[g] > 0.0 {
                    acc[g * k + o] / mass[g]
                } else {
                    plain[g * k + o] / count[g] as f64
                };
            }
        }
        CostTensor::new(groups, self.outputs.clone(), acc)
    }

    /// Writes `key,output,cost_km` rows and a sidecar `<path>.index` listing key and
    /// output order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "key,output,cost_km").map_err(io)?;
        for (i, key) in self.keys.iter().enumerate() {
            for (o, out) in self.outputs.iter().enumerate() {
                writeln!(w, "{key},{out},{}", crate::io::fmt_f64(self.get(i, o))).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        let index = index_path(path);
        let mut body = String::from("kind,position,id\n");
        for (i, key) in self.keys.iter().enumerate() {
            body.push_str(&format!("key,{i},{key}\n"));
        }
        for (o, out) in self.outputs.iter().enumerate() {
            body.push_str(&format!("output,{o},{out}\n"));
        }
        crate::io::write_text(&index, &body)
    }

    pub fn read(path: &Path) -> Result<CostTensor> {
        let index = index_path(path);
        let mut keys = Vec::new();
        let mut outputs = Vec::new();
        for (n, line) in crate::io::read_text(&index)?.lines().enumerate().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(&index, n as u64 + 1, format!("bad index row `{line}`"));
            match parts.as_slice() {
                ["key", _, k] => keys.push(k.parse().map_err(|_| bad())?),
                ["output", _, o] => outputs.push(o.parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let key_pos: HashMap<AugmentedSecret, usize> = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let out_pos: HashMap<LocId, usize> = outputs.iter().copied().enumerate().map(|(i, o)| (o, i)).collect();
        let mut c = vec![f64::NAN; keys.len() * outputs.len()];
        for (n, line) in crate::io::read_text(path)?.lines().enumerate().skip(1) {
            let line_no = n as u64 + 1;
            let bad = |m: &str| Error::parse(path, line_no, m.to_string());
            let mut parts = line.split(',');
            let (Some(k), Some(o), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected key,output,cost_km"));
            };
            let k: AugmentedSecret = k.parse().map_err(|_| bad("bad key"))?;
            let o: LocId = o.parse().map_err(|_| bad("bad output"))?;
            let i = *key_pos.get(&k).ok_or_else(|| bad("key missing from index"))?;
            let j = *out_pos.get(&o).ok_or_else(|| bad("output missing from index"))?;
            c[i * outputs.len() + j] = crate::io::parse_f64(v).ok_or_else(|| bad("bad cost"))?;
        }
        if c.iter().any(|v| v.is_nan()) {
            return Err(Error::parse(path, 0, "cost tensor is incomplete"));
        }
        CostTensor::new(keys, outputs, c)
    }
}

fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

/// Reversed-graph shortest-path trees for every destination of a task prior,
/// flattened into a `tasks x nodes` distance table.
#[derive(Clone, Debug)]
pub struct TaskTrees {
    graph: RoadGraph,
    weights: Vec<f64>,
    // dist[t * n + node_pos]
    dist: Vec<Option<f64>>,
}

impl TaskTrees {
    pub fn new(g: &RoadGraph, task_prior: &Distribution) -> Result<Self> {
        let tasks: Vec<(LocId, f64)> = task_prior.iter().copied().filter(|(_, p)| *p > 0.0).collect();
        if tasks.is_empty() {
            return Err(Error::Empty("task prior"));
        }
        let roots: Vec<LocId> = tasks.iter().map(|t| t.0).collect();
        let trees = shortest_path_trees(g, &roots)?;
        let n = g.len();
        let mut dist = Vec::with_capacity(n * trees.len());
        for t in &trees {
            dist.extend((0..n).map(|p| t.at(p)));
        }
        Ok(TaskTrees {
            graph: g.clone(),
            weights: tasks.iter().map(|t| t.1).collect(),
            dist,
        })
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    fn pos(&self, id: LocId) -> Result<usize> {
        self.graph.position(id).ok_or(Error::UnknownId(id))
    }

    /// Loss of reporting each output when the next location follows `next`.
    pub fn cost_row(&self, next: &Distribution, outputs: &[usize]) -> Result<Vec<f64>> {
        let n = self.graph.len();
        let next_pos: Vec<(usize, f64)> = next
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(l, p)| Ok((self.pos(*l)?, *p)))
            .collect::<Result<_>>()?;
        if next_pos.is_empty() {
            return Err(Error::Empty("next-location distribution"));
        }
        let mut row = Vec::with_capacity(outputs.len());
        let mut dropped = false;
        for &y in outputs {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (t, w) in self.weights.iter().enumerate() {
                let base = t * n;
                let Some(dy) = self.dist[base + y] else {
                    dropped = true;
                    continue;
                };
                for &(l, p) in &next_pos {
                    match self.dist[base + l] {
                        Some(dl) => {
                            acc += w * p * (dl - dy).abs();
                            mass += w * p;
                        }
                        None => dropped = true,
                    }
                }
            }
            if mass <= 0.0 {
                return Err(Error::InsufficientData(format!(
                    "output {} has no reachable task for the next-location distribution",
                    self.graph.nodes()[y].id
                )));
            }
            row.push(acc / mass);
        }
        if dropped {
            log::warn!("unreachable paths dropped from a utility-loss row; weights renormalized");
        }
        Ok(row)
    }
}

fn build(
    trees: &TaskTrees,
    keys: Vec<AugmentedSecret>,
    outputs: &[LocId],
    next: impl Fn(&AugmentedSecret) -> Result<Distribution> + Sync,
) -> Result<CostTensor> {
    let out_pos: Vec<usize> = outputs.iter().map(|&o| trees.pos(o)).collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|k| trees.cost_row(&next(k)?, &out_pos))
        .collect::<Result<_>>()?;
    CostTensor::new(keys, outputs.to_vec(), rows.concat())
}

/// Costs for keys `(x, b)` whose next location follows the model's conditional
/// given the key's context lags.
pub fn cost_context_blanket(
    trees: &TaskTrees,
    m: &PriorModel,
    dom: &LocationDomain,
    keys: &[AugmentedSecret],
) -> Result<CostTensor> {
    build(trees, keys.to_vec(), dom.outputs(), |k| m.next_location_dist(k))
}

/// Costs for plain keys when the next location is drawn from the secret prior,
/// independently of the current location.
pub fn cost_context_free(trees: &TaskTrees, m: &PriorModel, dom: &LocationDomain) -> Result<CostTensor> {
    let keys: Vec<AugmentedSecret> = dom.secrets().iter().map(|&x| AugmentedSecret::plain(x)).collect();
    let prior = m.secret_dist();
    build(trees, keys, dom.outputs(), |_| Ok(prior.clone()))
}

/// Costs for first-order keys `(x_t, x_{t-1})`: every observed pair over the
/// domain's secrets.
pub fn cost_markov1(trees: &TaskTrees, m: &PriorModel, dom: &LocationDomain) -> Result<CostTensor> {
    if m.gamma() < 1 {
        return Err(Error::InvalidArgument(
            "first-order keys need context depth >= 1".into(),
        ));
    }
    let mut keys: Vec<AugmentedSecret> = m
        .full_keys()
        .into_iter()
        .map(|k| k.prefix(1))
        .filter(|k| dom.contains(k.current))
        .collect();
    keys.dedup();
    build(trees, keys, dom.outputs(), |k| m.next_location_dist(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, Location};
    use crate::priors::Smoothing;
    use crate::roadnet::Edge;

    fn ids(v: &[u64]) -> Vec<LocId> {
        v.iter().map(|&i| LocId(i)).collect()
    }

    /// Undirected path 1 - 2 - 3 with unit edges.
    fn path_graph() -> RoadGraph {
        let nodes = (1..=3)
            .map(|i| Location {
                id: LocId(i),
                point: GeoPoint::new(0.0, i as f64 * 0.01).unwrap(),
            })
            .collect();
        let mut edges = Vec::new();
        for (a, b) in [(1, 2), (2, 3)] {
            for (f, t) in [(a, b), (b, a)] {
                edges.push(Edge {
                    from: LocId(f),
                    to: LocId(t),
                    length_km: 1.0,
                });
            }
        }
        RoadGraph::new(nodes, edges).unwrap()
    }

    fn out_pos(g: &RoadGraph, v: &[u64]) -> Vec<usize> {
        v.iter().map(|&i| g.position(LocId(i)).unwrap()).collect()
    }

    #[test]
    fn perfect_report_costs_nothing() {
        let g = path_graph();
        let trees = TaskTrees::new(&g, &crate::priors::uniform(&g.node_ids()).unwrap()).unwrap();
        let row = trees.cost_row(&vec![(LocId(2), 1.0)], &out_pos(&g, &[2])).unwrap();
        assert_eq!(row, vec![0.0]);
    }

    #[test]
    fn hand_dijkstra_cost() {
        let g = path_graph();
        let trees = TaskTrees::new(&g, &vec![(LocId(3), 1.0)]).unwrap();
        let row = trees.cost_row(&vec![(LocId(1), 1.0)], &out_pos(&g, &[2])).unwrap();
        assert_eq!(row, vec![1.0]);
        // two tasks with per-task errors 1 and 3
        let trees = TaskTrees::new(&g, &vec![(LocId(1), 0.5), (LocId(3), 0.5)]).unwrap();
        let g2 = trees.cost_row(&vec![(LocId(2), 1.0)], &out_pos(&g, &[1])).unwrap();
        // task 1: |1 - 0| = 1; task 3: |1 - 2| = 1
        assert_eq!(g2, vec![1.0]);
        let row = trees.cost_row(&vec![(LocId(1), 1.0)], &out_pos(&g, &[3])).unwrap();
        // task 1: |0 - 2| = 2, task 3: |2 - 0| = 2
        assert_eq!(row, vec![2.0]);
    }

    #[test]
    fn weighted_tasks_average_errors() {
        // directed line 1 -> 2 -> 3 -> 4 with unit edges, tasks at 4 and 3
        let nodes = (1..=4)
            .map(|i| Location {
                id: LocId(i),
                point: GeoPoint::new(0.0, i as f64 * 0.01).unwrap(),
            })
            .collect();
        let edges = (1..4)
            .map(|i| Edge {
                from: LocId(i),
                to: LocId(i + 1),
                length_km: 1.0,
            })
            .collect();
        let g = RoadGraph::new(nodes, edges).unwrap();
        let trees = TaskTrees::new(&g, &vec![(LocId(3), 0.5), (LocId(4), 0.5)]).unwrap();
        // next = 1, report 2: errors |2-1| = 1 at both tasks
        assert_eq!(
            trees.cost_row(&vec![(LocId(1), 1.0)], &out_pos(&g, &[2])).unwrap(),
            vec![1.0]
        );
        // next = 1, report 4: task 4 error |3 - 0| = 3, task 3 unreachable from 4 -> dropped
        assert_eq!(
            trees.cost_row(&vec![(LocId(1), 1.0)], &out_pos(&g, &[4])).unwrap(),
            vec![3.0]
        );
        // a report that reaches no task at all is an error
        let trees = TaskTrees::new(&g, &vec![(LocId(3), 1.0)]).unwrap();
        assert!(trees.cost_row(&vec![(LocId(1), 1.0)], &out_pos(&g, &[4])).is_err());
        assert!(TaskTrees::new(&g, &vec![]).is_err());
    }

    fn path_domain(g: &RoadGraph, secrets: &[u64]) -> LocationDomain {
        let pick = |v: &[u64]| {
            g.nodes()
                .iter()
                .filter(|n| v.contains(&n.id.0))
                .copied()
                .collect::<Vec<_>>()
        };
        LocationDomain::new(pick(secrets), pick(&[1, 2, 3])).unwrap()
    }

    #[test]
    fn context_free_uses_secret_prior() {
        let g = path_graph();
        let m = PriorModel::from_sequences(&[ids(&[1]), ids(&[3])], g.node_ids(), 0, Smoothing::None).unwrap();
        let trees = TaskTrees::new(&g, &vec![(LocId(3), 1.0)]).unwrap();
        let dom = path_domain(&g, &[1, 3]);
        let c = cost_context_free(&trees, &m, &dom).unwrap();
        assert_eq!(c.keys().len(), 2);
        // report 2: 0.5 |2 - 1| + 0.5 |0 - 1| = 1, for both keys
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(1, 1), 1.0);
        // argmin over outputs agrees with a brute-force scan
        for i in 0..2 {
            let best = (0..3).min_by(|&a, &b| c.get(i, a).total_cmp(&c.get(i, b))).unwrap();
            assert!(c.row(i).iter().all(|v| *v >= c.get(i, best)));
        }
    }

    #[test]
    fn markov1_matches_blanket_of_one_lag() {
        let g = path_graph();
        let seqs = [ids(&[1, 2, 3, 2, 1, 2, 1]), ids(&[3, 2, 3, 2, 1])];
        let m = PriorModel::from_sequences(&seqs, g.node_ids(), 2, Smoothing::AddOne).unwrap();
        let trees = TaskTrees::new(&g, &crate::priors::uniform(&g.node_ids()).unwrap()).unwrap();
        let dom = path_domain(&g, &[1, 2, 3]);
        let mk = cost_markov1(&trees, &m, &dom).unwrap();
        let bl = cost_context_blanket(&trees, &m, &dom, mk.keys()).unwrap();
        assert_eq!(mk, bl);
        // a deterministic chain reports its successor for free
        let chain = PriorModel::from_sequences(&[ids(&[1, 2, 3])], g.node_ids(), 1, Smoothing::None).unwrap();
        let key = AugmentedSecret::new(LocId(2), ids(&[1]));
        let c = cost_context_blanket(&trees, &chain, &dom, &[key]).unwrap();
        assert_eq!(c.get(0, 2), 0.0);
        // the terminal key has no observed successor without smoothing
        assert!(cost_markov1(&trees, &chain, &dom).is_err());
    }

    #[test]
    fn aggregate_weights_rows() {
        let keys = vec![
            AugmentedSecret::new(LocId(1), ids(&[2])),
            AugmentedSecret::new(LocId(1), ids(&[3])),
        ];
        let c = CostTensor::new(keys, ids(&[1, 2]), vec![0.0, 4.0, 2.0, 0.0]).unwrap();
        let agg = c
            .aggregate(vec![AugmentedSecret::plain(LocId(1))], &[0, 0], &[0.75, 0.25])
            .unwrap();
        assert_eq!(agg.row(0), &[0.5, 3.0]);
        assert!(c.aggregate(vec![], &[0, 0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let keys = vec![
            AugmentedSecret::new(LocId(1), ids(&[2, 3])),
            AugmentedSecret::plain(LocId(9)),
        ];
        let c = CostTensor::new(keys, ids(&[4, 5]), vec![0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300]).unwrap();
        let path = dir.path().join("cost.csv");
        c.write(&path).unwrap();
        assert_eq!(CostTensor::read(&path).unwrap(), c);
        assert!(CostTensor::new(vec![], vec![], vec![1.0]).is_err());
    }
}
