//! Trajectory ingestion and the empirical priors fed to the mechanism LPs.
//!
//! A full key is `(x_t, x_{t-1}, ..., x_{t-Γ})`. Shorter keys are prefixes of
//! full keys (the lags `t-1..t-m`); their probabilities and next-location
//! distributions are mixtures over the full keys they prefix, weighted by the
//! joint prior.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geo::{AugmentedSecret, GeoPoint, LocId};
use crate::roadnet::{snap_to_node, RoadGraph};

/// A finite distribution over locations, sorted by id.
pub type Distribution = Vec<(LocId, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Fix {
    pub timestamp: f64,
    pub point: GeoPoint,
}

/// One vehicle trip, time-ordered with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: String,
    pub trajectory_id: String,
    pub fixes: Vec<Fix>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryLog {
    pub fn is_empty(&self) -> bool {
        self.trajectories.iter().all(|t| t.fixes.is_empty())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn record_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.fixes.len()).sum()
    }

    /// Snaps every fix to its nearest graph node.
    pub fn snap(&self, g: &RoadGraph) -> Result<Vec<Vec<LocId>>> {
        self.trajectories
            .iter()
            .map(|t| t.fixes.iter().map(|f| snap_to_node(f.point, g)).collect())
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "vehicle_id,trajectory_id,timestamp,lat,lon").map_err(io)?;
        for t in &self.trajectories {
            for f in &t.fixes {
                writeln!(
                    w,
                    "{},{},{:.3},{:.7},{:.7}",
                    t.vehicle_id,
                    t.trajectory_id,
                    f.timestamp,
                    f.point.lat(),
                    f.point.lon()
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

#[derive(Deserialize)]
struct TrajectoryRow {
    vehicle_id: String,
    trajectory_id: String,
    timestamp: f64,
    lat: f64,
    lon: f64,
}

/// Reads `vehicle_id,trajectory_id,timestamp,lat,lon` rows. Rows may come in any
/// order; each trajectory is sorted by timestamp and must not repeat one.
/// Trajectories are returned in order of first appearance.
pub fn load_trajectories(path: impl AsRef<Path>) -> Result<TrajectoryLog> {
    let path = path.as_ref();
    let rows =
        crate::io::read_rows::<TrajectoryRow>(path, &["vehicle_id", "trajectory_id", "timestamp", "lat", "lon"])?;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<(u64, Fix)>> = BTreeMap::new();
    for (line, row) in rows {
        if !row.timestamp.is_finite() {
            return Err(Error::parse(path, line, "timestamp is not finite"));
        }
        let point = GeoPoint::new(row.lat, row.lon).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let key = (row.vehicle_id, row.trajectory_id);
        let group = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        group.push((
            line,
            Fix {
                timestamp: row.timestamp,
                point,
            },
        ));
    }
    let mut trajectories = Vec::with_capacity(order.len());
    for key in order {
        let mut fixes = groups.remove(&key).unwrap_or_default();
        fixes.sort_by(|a, b| a.1.timestamp.total_cmp(&b.1.timestamp));
        if let Some(w) = fixes.windows(2).find(|w| w[0].1.timestamp == w[1].1.timestamp) {
            return Err(Error::parse(
                path,
                w[1].0,
                format!(
                    "repeated timestamp {} in trajectory {}/{}",
                    w[1].1.timestamp, key.0, key.1
                ),
            ));
        }
        trajectories.push(Trajectory {
            vehicle_id: key.0,
            trajectory_id: key.1,
            fixes: fixes.into_iter().map(|(_, f)| f).collect(),
        });
    }
    Ok(TrajectoryLog { trajectories })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothing {
    /// Add-one over the observed support.
    AddOne,
    /// Raw frequencies; unseen keys are errors.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskPriorMode {
    Uniform,
    Empirical,
}

impl std::str::FromStr for TaskPriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(TaskPriorMode::Uniform),
            "empirical" => Ok(TaskPriorMode::Empirical),
            _ => Err(Error::InvalidArgument(format!("unknown task prior mode `{s}`"))),
        }
    }
}

/// Empirical secret, joint and transition statistics at context depth Γ.
#[derive(Clone, Debug)]
pub struct PriorModel {
    gamma: usize,
    smoothing: Smoothing,
    nodes: Vec<LocId>,
    joint: BTreeMap<AugmentedSecret, f64>,
    p_x: BTreeMap<LocId, f64>,
    transitions: BTreeMap<AugmentedSecret, BTreeMap<LocId, u64>>,
    successors: BTreeMap<LocId, BTreeSet<LocId>>,
    visits: BTreeMap<LocId, u64>,
}

/// Snaps the log onto `g` and estimates priors at depth `gamma`.
pub fn estimate_priors(log: &TrajectoryLog, g: &RoadGraph, gamma: usize) -> Result<PriorModel> {
    if log.is_empty() {
        return Err(Error::Empty("trajectory log"));
    }
    let seqs = log.snap(g)?;
    PriorModel::from_sequences(&seqs, g.node_ids(), gamma, Smoothing::AddOne)
}

impl PriorModel {
    /// Estimates from node sequences, one per trajectory.
    pub fn from_sequences(seqs: &[Vec<LocId>], nodes: Vec<LocId>, gamma: usize, smoothing: Smoothing) -> Result<Self> {
        if seqs.iter().all(|s| s.is_empty()) {
            return Err(Error::Empty("trajectory log"));
        }
        let mut counts: BTreeMap<AugmentedSecret, u64> = BTreeMap::new();
        let mut transitions: BTreeMap<AugmentedSecret, BTreeMap<LocId, u64>> = BTreeMap::new();
        let mut successors: BTreeMap<LocId, BTreeSet<LocId>> = BTreeMap::new();
        let mut visits: BTreeMap<LocId, u64> = BTreeMap::new();
        for seq in seqs {
            for &x in seq {
                *visits.entry(x).or_default() += 1;
            }
            for w in seq.windows(2) {
                successors.entry(w[0]).or_default().insert(w[1]);
            }
            for t in gamma..seq.len() {
                let key = full_key(seq, t, gamma);
                if let Some(&next) = seq.get(t + 1) {
                    *transitions.entry(key.clone()).or_default().entry(next).or_default() += 1;
                }
                *counts.entry(key).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::InsufficientData(format!(
                "context depth {gamma} is longer than every trajectory"
            )));
        }
        let bump = match smoothing {
            Smoothing::AddOne => 1.0,
            Smoothing::None => 0.0,
        };
        let total: f64 = counts.values().map(|&c| c as f64 + bump).sum();
        let joint: BTreeMap<AugmentedSecret, f64> = counts
            .into_iter()
            .map(|(k, c)| (k, (c as f64 + bump) / total))
            .collect();
        let mut p_x: BTreeMap<LocId, f64> = BTreeMap::new();
        for (k, p) in &joint {
            *p_x.entry(k.current).or_default() += p;
        }
        Ok(PriorModel {
            gamma,
            smoothing,
            nodes,
            joint,
            p_x,
            transitions,
            successors,
            visits,
        })
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn nodes(&self) -> &[LocId] {
        &self.nodes
    }

    /// Secret locations with positive prior, in id order.
    pub fn secrets(&self) -> Vec<LocId> {
        self.p_x.keys().copied().collect()
    }

    /// Full keys with positive joint prior, in key order.
    pub fn full_keys(&self) -> Vec<AugmentedSecret> {
        self.joint.keys().cloned().collect()
    }

    pub fn p_x(&self) -> &BTreeMap<LocId, f64> {
        &self.p_x
    }

    pub fn p_joint(&self) -> &BTreeMap<AugmentedSecret, f64> {
        &self.joint
    }

    pub fn visits(&self) -> &BTreeMap<LocId, u64> {
        &self.visits
    }

    /// Prior of a full or prefix key: the joint mass of the full keys it prefixes.
    pub fn prob(&self, key: &AugmentedSecret) -> f64 {
        if key.context.len() > self.gamma {
            return 0.0;
        }
        self.prefixed(key).map(|(_, p)| p).sum()
    }

    fn prefixed<'a>(&'a self, key: &'a AugmentedSecret) -> impl Iterator<Item = (&'a AugmentedSecret, f64)> + 'a {
        let lo = AugmentedSecret::new(key.current, key.context.clone());
        self.joint
            .range(lo..)
            .take_while(move |(k, _)| k.current == key.current && k.context.starts_with(&key.context))
            .map(|(k, p)| (k, *p))
    }

    /// Distribution of the next-slot location given the current location and the
    /// leading `key.context.len()` lags of its context.
    pub fn next_location_dist(&self, key: &AugmentedSecret) -> Result<Distribution> {
        if key.context.len() > self.gamma {
            return Err(Error::ContextMismatch {
                left: key.context.len(),
                right: self.gamma,
            });
        }
        let mut mix: BTreeMap<LocId, f64> = BTreeMap::new();
        let mut mass = 0.0;
        for (full, p) in self.prefixed(key) {
            let Some(cond) = self.full_conditional(full)? else {
                continue;
            };
            mass += p;
            for (y, q) in cond {
                *mix.entry(y).or_default() += p * q;
            }
        }
        if mass > 0.0 {
            return Ok(mix.into_iter().map(|(y, q)| (y, q / mass)).collect());
        }
        match self.smoothing {
            Smoothing::None => Err(Error::UnseenKey(key.to_string())),
            Smoothing::AddOne => Ok(self.successor_fallback(key.current)),
        }
    }

    /// Smoothed conditional for a full key, or `None` when unsmoothed counts are absent.
    fn full_conditional(&self, key: &AugmentedSecret) -> Result<Option<Distribution>> {
        let counts = self.transitions.get(key);
        match self.smoothing {
            Smoothing::None => Ok(counts.map(|c| {
                let total: u64 = c.values().sum();
                c.iter().map(|(y, n)| (*y, *n as f64 / total as f64)).collect()
            })),
            Smoothing::AddOne => {
                let Some(support) = self.successors.get(&key.current) else {
                    return Ok(Some(vec![(key.current, 1.0)]));
                };
                let total: f64 = support
                    .iter()
                    .map(|y| 1.0 + counts.and_then(|c| c.get(y)).copied().unwrap_or(0) as f64)
                    .sum();
                Ok(Some(
                    support
                        .iter()
                        .map(|y| {
                            let n = counts.and_then(|c| c.get(y)).copied().unwrap_or(0) as f64;
                            (*y, (1.0 + n) / total)
                        })
                        .collect(),
                ))
            }
        }
    }

    fn successor_fallback(&self, x: LocId) -> Distribution {
        match self.successors.get(&x) {
            Some(s) => s.iter().map(|y| (*y, 1.0 / s.len() as f64)).collect(),
            None => vec![(x, 1.0)],
        }
    }

    /// The secret prior as a distribution.
    pub fn secret_dist(&self) -> Distribution {
        self.p_x.iter().map(|(x, p)| (*x, *p)).collect()
    }
}

fn full_key(seq: &[LocId], t: usize, gamma: usize) -> AugmentedSecret {
    AugmentedSecret::new(seq[t], (1..=gamma).map(|tau| seq[t - tau]).collect())
}

/// Task prior: uniform over the model's nodes, or proportional to visit counts.
pub fn task_prior(m: &PriorModel, mode: TaskPriorMode) -> Result<Distribution> {
    match mode {
        TaskPriorMode::Uniform => uniform(m.nodes()),
        TaskPriorMode::Empirical => {
            let total: u64 = m.visits.values().sum();
            if total == 0 {
                return Err(Error::Empty("visit counts"));
            }
            Ok(m.visits.iter().map(|(x, n)| (*x, *n as f64 / total as f64)).collect())
        }
    }
}

pub fn uniform(nodes: &[LocId]) -> Result<Distribution> {
    if nodes.is_empty() {
        return Err(Error::Empty("node set"));
    }
    let set: BTreeSet<LocId> = nodes.iter().copied().collect();
    let p = 1.0 / set.len() as f64;
    Ok(set.into_iter().map(|x| (x, p)).collect())
}

/// Writes a `key,prob` listing.
pub fn write_distribution<K: std::fmt::Display>(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = (K, f64)>,
) -> Result<()> {
    let mut w = crate::io::create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for (k, p) in rows {
        writeln!(w, "{k},{}", crate::io::fmt_f64(p)).map_err(io)?;
    }
    w.flush().map_err(io)
}
