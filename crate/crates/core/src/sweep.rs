//! The privacy-budget sweep: every mechanism at every ε, evaluated on the same
//! full-context keys.
//!
//! Priors, costs and blanket labels come from the training trajectories. Blanket
//! predictions and identifications are made on the evaluation trajectories and
//! assigned to full keys by majority vote over the windows that visit them. Every
//! mechanism is lifted onto the full keys, then scored with the full cost tensor
//! and audited under the full context metric.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::audit::{audit, DEFAULT_TOL};
use crate::blanket::{
    evaluate, identify_blanket, partition_dataset, predict_blanket, train_predictor, window_bins, write_labels,
    BinSample, Blanket, BlanketPredictor, CiSample, FeatureBin, Grids, Label, LabeledHypothesis, RegionGrid, Scores,
    SPEED_BIN_MPH,
};
use crate::error::{Error, Result};
use crate::geo::{AugmentedSecret, ContextWeights, DistanceMatrix, LocId, Location, LocationDomain};
use crate::io::fmt_f64;
use crate::lp::{build_cmdp_reduced_lp, build_mdp_lp, solve, LinearProgram};
use crate::mechanisms::{exp_mechanism, expected_loss, PerturbationMatrix};
use crate::priors::{task_prior, Distribution, PriorModel, Smoothing, TaskPriorMode, TrajectoryLog};
use crate::roadnet::RoadGraph;
use crate::utility::{cost_context_blanket, cost_context_free, cost_markov1, CostTensor, TaskTrees};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mechanism {
    Lp,
    ExpMech,
    LpMarkov1,
    LpCmdp,
    LpTrueMb,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Lp,
        Mechanism::ExpMech,
        Mechanism::LpMarkov1,
        Mechanism::LpCmdp,
        Mechanism::LpTrueMb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Lp => "LP",
            Mechanism::ExpMech => "ExpMech",
            Mechanism::LpMarkov1 => "LP+Markov1",
            Mechanism::LpCmdp => "LP+C-mDP",
            Mechanism::LpTrueMb => "LP+TrueMB",
        }
    }

    /// File-name friendly form.
    pub fn slug(&self) -> &'static str {
        match self {
            Mechanism::Lp => "lp",
            Mechanism::ExpMech => "expmech",
            Mechanism::LpMarkov1 => "lp-markov1",
            Mechanism::LpCmdp => "lp-cmdp",
            Mechanism::LpTrueMb => "lp-truemb",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.slug() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mechanism `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub gamma: usize,
    pub eta: f64,
    pub epsilons: Vec<f64>,
    /// Context weights decay as `alpha^τ`.
    pub alpha: f64,
    pub mechanisms: Vec<Mechanism>,
    pub seed: u64,
    pub train_fraction: f64,
    /// Evaluate on held-out trajectories; otherwise on all of them.
    pub disjoint: bool,
    pub task_mode: TaskPriorMode,
    /// Restrict tasks to this many nodes drawn from the task prior's support.
    pub task_sample: Option<usize>,
    pub grids: Grids,
    pub timings: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gamma: 2,
            eta: 5.0,
            epsilons: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            alpha: 0.5,
            mechanisms: Mechanism::ALL.to_vec(),
            seed: 0,
            train_fraction: 0.5,
            disjoint: true,
            task_mode: TaskPriorMode::Uniform,
            task_sample: None,
            grids: Grids {
                region: RegionGrid::rome(),
            },
            timings: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.gamma == 0 {
            return bad("the sweep needs context depth >= 1".into());
        }
        if !(self.eta >= 0.0) {
            return bad(format!("eta {} must be >= 0", self.eta));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad(format!("epsilons {:?} must be non-empty and positive", self.epsilons));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be >= 0", self.alpha));
        }
        if self.mechanisms.is_empty() {
            return bad("no mechanisms selected".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train fraction {} must lie in (0, 1]", self.train_fraction));
        }
        if self.task_sample == Some(0) {
            return bad("task sample must be positive".into());
        }
        self.grids.region.validate()
    }

    pub fn weights(&self) -> Result<ContextWeights> {
        ContextWeights::decay(self.gamma, self.alpha)
    }

    /// Metric id recorded in matrix headers.
    pub fn metric_id(&self) -> String {
        format!("context:alpha={}", self.alpha)
    }
}

/// A mechanism's keys, costs, priors and distances, plus the row of each full key.
#[derive(Clone, Debug)]
pub struct KeySpace {
    pub cost: CostTensor,
    pub prior: Vec<f64>,
    pub dist: DistanceMatrix,
    pub project: Vec<usize>,
}

impl KeySpace {
    pub fn keys(&self) -> &[AugmentedSecret] {
        self.cost.keys()
    }
}

/// Hypothesis outcome on one training bin, with the bin's features.
#[derive(Clone, Debug, PartialEq)]
pub struct PValueRow {
    pub bin: FeatureBin,
    pub latitude: f64,
    pub longitude: f64,
    pub m: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinBlankets {
    pub bin: FeatureBin,
    pub rows: usize,
    pub usable: bool,
    pub predicted: usize,
    pub identified: usize,
}

/// Everything a sweep cell needs, computed once.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: SweepConfig,
    pub domain: LocationDomain,
    pub weights: ContextWeights,
    pub model: PriorModel,
    pub full: KeySpace,
    pub plain: KeySpace,
    pub markov1: KeySpace,
    pub cmdp: KeySpace,
    pub true_mb: KeySpace,
    pub predictor: BlanketPredictor,
    pub labels: Vec<LabeledHypothesis>,
    pub pvalues: Vec<PValueRow>,
    pub bins: Vec<BinBlankets>,
    pub scores: Option<Scores>,
}

fn split(n: usize, cfg: &SweepConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(cfg.seed));
    if !cfg.disjoint {
        let take = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n);
        let mut train = idx[..take].to_vec();
        train.sort_unstable();
        return Ok((train, (0..n).collect()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(
            "a disjoint split needs at least two trajectories".into(),
        ));
    }
    let take = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n - 1);
    let (mut train, mut eval) = (idx[..take].to_vec(), idx[take..].to_vec());
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

fn subset(log: &TrajectoryLog, snapped: &[Vec<LocId>], idx: &[usize]) -> (TrajectoryLog, Vec<Vec<LocId>>) {
    (
        TrajectoryLog {
            trajectories: idx.iter().map(|&i| log.trajectories[i].clone()).collect(),
        },
        idx.iter().map(|&i| snapped[i].clone()).collect(),
    )
}

fn bin_seed(seed: u64, bin: &FeatureBin) -> u64 {
    seed ^ ((bin.time as u64) << 40 | (bin.speed as u64) << 24 | bin.region as u64)
}

fn sample_tasks(tasks: Distribution, n: Option<usize>, seed: u64) -> Distribution {
    let Some(n) = n else { return tasks };
    let mut support: Vec<(LocId, f64)> = tasks.into_iter().filter(|t| t.1 > 0.0).collect();
    if n >= support.len() {
        return support;
    }
    support.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x7461_736b));
    support.truncate(n);
    support.sort_by_key(|t| t.0);
    let z: f64 = support.iter().map(|t| t.1).sum();
    support.into_iter().map(|(x, p)| (x, p / z)).collect()
}

/// Collapses full keys onto their `size[v]`-lag prefixes.
fn reduce(full: &KeySpace, sizes: &[usize], weights: &ContextWeights, dom: &LocationDomain) -> Result<KeySpace> {
    let prefixes: Vec<AugmentedSecret> = full.keys().iter().zip(sizes).map(|(k, &m)| k.prefix(m)).collect();
    let index: BTreeMap<&AugmentedSecret, usize> = {
        let mut uniq: Vec<&AugmentedSecret> = prefixes.iter().collect();
        uniq.sort();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(i, k)| (k, i)).collect()
    };
    let keys: Vec<AugmentedSecret> = index.keys().map(|k| (*k).clone()).collect();
    let project: Vec<usize> = prefixes.iter().map(|k| index[k]).collect();
    let mut prior = vec![0.0; keys.len()];
    for (v, &b) in project.iter().enumerate() {
        prior[b] += full.prior[v];
    }
    let cost = full.cost.aggregate(keys.clone(), &project, &full.prior)?;
    let dist = DistanceMatrix::blanket(&keys, weights, dom)?;
    Ok(KeySpace {
        cost,
        prior,
        dist,
        project,
    })
}

/// Majority blanket size per full key; keys no window visited take the overall
/// majority. Ties go to the smaller blanket.
fn vote(votes: &[BTreeMap<usize, usize>]) -> Vec<usize> {
    let pick = |v: &BTreeMap<usize, usize>| v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(m, _)| *m);
    let mut overall: BTreeMap<usize, usize> = BTreeMap::new();
    for v in votes {
        for (m, c) in v {
            *overall.entry(*m).or_default() += c;
        }
    }
    let fallback = pick(&overall).unwrap_or(1);
    votes.iter().map(|v| pick(v).unwrap_or(fallback)).collect()
}

impl Experiment {
    /// Splits the log, estimates priors and costs, labels and trains the blanket
    /// predictor, and assigns blankets to full keys.
    pub fn prepare(graph: &RoadGraph, log: &TrajectoryLog, config: &SweepConfig) -> Result<Experiment> {
        config.validate()?;
        if log.is_empty() {
            return Err(Error::Empty("trajectory log"));
        }
        let gamma = config.gamma;
        let weights = config.weights()?;
        let snapped = log.snap(graph)?;
        let (train_idx, eval_idx) = split(log.len(), config)?;
        let (train_log, train_seqs) = subset(log, &snapped, &train_idx);
        let (eval_log, eval_seqs) = subset(log, &snapped, &eval_idx);

        let model = PriorModel::from_sequences(&train_seqs, graph.node_ids(), gamma, Smoothing::AddOne)?;
        let secrets: Vec<Location> = model
            .secrets()
            .into_iter()
            .map(|id| {
                graph
                    .point(id)
                    .map(|point| Location { id, point })
                    .ok_or(Error::UnknownId(id))
            })
            .collect::<Result<_>>()?;
        let domain = LocationDomain::new(secrets.clone(), secrets)?.with_points(graph.nodes());
        let tasks = sample_tasks(task_prior(&model, config.task_mode)?, config.task_sample, config.seed);
        let trees = TaskTrees::new(graph, &tasks)?;

        let full_keys = model.full_keys();
        let full = KeySpace {
            prior: full_keys.iter().map(|k| model.prob(k)).collect(),
            dist: DistanceMatrix::context(&full_keys, &weights, &domain)?,
            project: (0..full_keys.len()).collect(),
            cost: cost_context_blanket(&trees, &model, &domain, &full_keys)?,
        };

        let plain_cost = cost_context_free(&trees, &model, &domain)?;
        let plain_index: BTreeMap<LocId, usize> = plain_cost
            .keys()
            .iter()
            .enumerate()
            .map(|(i, k)| (k.current, i))
            .collect();
        let plain = KeySpace {
            prior: plain_cost.keys().iter().map(|k| model.prob(k)).collect(),
            dist: DistanceMatrix::blanket(plain_cost.keys(), &weights, &domain)?,
            project: full_keys
                .iter()
                .map(|k| plain_index.get(&k.current).copied().ok_or(Error::UnknownId(k.current)))
                .collect::<Result<_>>()?,
            cost: plain_cost,
        };

        let m1_cost = cost_markov1(&trees, &model, &domain)?;
        let m1_index: BTreeMap<&AugmentedSecret, usize> =
            m1_cost.keys().iter().enumerate().map(|(i, k)| (k, i)).collect();
        let markov1 = KeySpace {
            prior: m1_cost.keys().iter().map(|k| model.prob(k)).collect(),
            dist: DistanceMatrix::blanket(m1_cost.keys(), &weights, &domain)?,
            project: full_keys
                .iter()
                .map(|k| {
                    m1_index
                        .get(&k.prefix(1))
                        .copied()
                        .ok_or_else(|| Error::UnseenKey(k.prefix(1).to_string()))
                })
                .collect::<Result<_>>()?,
            cost: m1_cost.clone(),
        };

        // blanket labels on the training bins
        let train_bins = partition_dataset(&train_log, &train_seqs, &config.grids, gamma)?;
        let usable: Vec<(&FeatureBin, &BinSample)> = train_bins.iter().filter(|(_, s)| s.usable).collect();
        let identified: Vec<Result<crate::blanket::BlanketResult>> = usable
            .par_iter()
            .map(|(bin, s)| identify_blanket(&s.sample, gamma, bin_seed(config.seed, bin)))
            .collect();
        let mut labels = Vec::new();
        let mut pvalues = Vec::new();
        for ((bin, _), result) in usable.iter().zip(identified) {
            let result = result?;
            let (lat, lon) = config.grids.region.center(bin.region as usize);
            for h in &result.hypotheses {
                labels.push(LabeledHypothesis {
                    bin: **bin,
                    m: h.m,
                    label: h.label,
                });
                if let Some(p) = h.p_value {
                    pvalues.push(PValueRow {
                        bin: **bin,
                        latitude: lat,
                        longitude: lon,
                        m: h.m,
                        p_value: p,
                    });
                }
            }
        }
        if labels.is_empty() {
            log::warn!("no training bin has enough rows; every blanket prediction falls to the default");
        }
        let predictor = train_predictor(&labels);

        // blankets on the evaluation bins
        let eval_bins = partition_dataset(&eval_log, &eval_seqs, &config.grids, gamma)?;
        let pooled_size = {
            let mut pooled = CiSample::new(gamma, vec![])?;
            for s in eval_bins.values() {
                pooled.extend(&s.sample)?;
            }
            match identify_blanket(&pooled, gamma, config.seed) {
                Ok(r) => r.blanket.size(),
                Err(e) => {
                    log::warn!("pooled evaluation sample cannot be tested ({e}); using one lag");
                    1
                }
            }
        };
        let entries: Vec<(&FeatureBin, &BinSample)> = eval_bins.iter().collect();
        let identified: Vec<Result<(usize, Vec<LabeledHypothesis>)>> = entries
            .par_iter()
            .map(|(bin, s)| {
                if !s.usable {
                    return Ok((pooled_size, vec![]));
                }
                let r = identify_blanket(&s.sample, gamma, bin_seed(config.seed, bin))?;
                let truth = r
                    .hypotheses
                    .iter()
                    .map(|h| LabeledHypothesis {
                        bin: **bin,
                        m: h.m,
                        label: h.label,
                    })
                    .collect();
                Ok((r.blanket.size(), truth))
            })
            .collect();
        let mut bins = Vec::new();
        let mut truth = Vec::new();
        let mut sizes: BTreeMap<FeatureBin, (usize, usize)> = BTreeMap::new();
        for ((bin, s), r) in entries.iter().zip(identified) {
            let (ident, t) = r?;
            truth.extend(t);
            let predicted = predict_blanket(&predictor, bin, gamma).size();
            sizes.insert(**bin, (predicted, ident));
            bins.push(BinBlankets {
                bin: **bin,
                rows: s.sample.len(),
                usable: s.usable,
                predicted,
                identified: ident,
            });
        }
        let scores = if truth.is_empty() {
            None
        } else {
            Some(evaluate(&predictor, &truth)?)
        };

        let key_index: BTreeMap<&AugmentedSecret, usize> = full_keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let mut votes_pred = vec![BTreeMap::<usize, usize>::new(); full_keys.len()];
        let mut votes_true = vec![BTreeMap::<usize, usize>::new(); full_keys.len()];
        for (t, seq) in eval_log.trajectories.iter().zip(&eval_seqs) {
            for (now, bin) in window_bins(&t.fixes, gamma, &config.grids) {
                let key = AugmentedSecret::new(seq[now], (1..=gamma).map(|tau| seq[now - tau]).collect());
                let (Some(&v), Some(&(p, i))) = (key_index.get(&key), sizes.get(&bin)) else {
                    continue;
                };
                *votes_pred[v].entry(p).or_default() += 1;
                *votes_true[v].entry(i).or_default() += 1;
            }
        }
        let cmdp = reduce(&full, &vote(&votes_pred), &weights, &domain)?;
        let true_mb = reduce(&full, &vote(&votes_true), &weights, &domain)?;

        Ok(Experiment {
            config: config.clone(),
            domain,
            weights,
            model,
            full,
            plain,
            markov1,
            cmdp,
            true_mb,
            predictor,
            labels,
            pvalues,
            bins,
            scores,
        })
    }

    pub fn key_space(&self, m: Mechanism) -> &KeySpace {
        match m {
            Mechanism::Lp | Mechanism::ExpMech => &self.plain,
            Mechanism::LpMarkov1 => &self.markov1,
            Mechanism::LpCmdp => &self.cmdp,
            Mechanism::LpTrueMb => &self.true_mb,
        }
    }

    /// The program a mechanism solves at `eps`; `None` for the exponential mechanism.
    pub fn program(&self, m: Mechanism, eps: f64) -> Result<Option<LinearProgram>> {
        let ks = self.key_space(m);
        let eta = self.config.eta;
        Ok(match m {
            Mechanism::ExpMech => None,
            Mechanism::Lp => Some(build_mdp_lp(&ks.cost, &ks.prior, &ks.dist, eps, eta)?),
            _ => Some(build_cmdp_reduced_lp(&ks.cost, &ks.prior, &ks.dist, eps, eta)?),
        })
    }

    /// Builds one mechanism at `eps`, lifted onto the full keys.
    pub fn build(&self, m: Mechanism, eps: f64) -> Result<Built> {
        let ks = self.key_space(m);
        let started = Instant::now();
        let (q, build_s, solve_s) = match self.program(m, eps)? {
            None => {
                let q = exp_mechanism(ks.keys(), ks.cost.outputs(), &self.domain, eps)?;
                (q, started.elapsed().as_secs_f64(), None)
            }
            Some(lp) => {
                let build_s = started.elapsed().as_secs_f64();
                let t = Instant::now();
                let s = solve(&lp);
                let solve_s = t.elapsed().as_secs_f64();
                let q = s.q.ok_or(Error::Solver {
                    status: s.status,
                    max_infeasibility: s.max_infeasibility,
                })?;
                (q, build_s, Some(solve_s))
            }
        };
        let mut lifted = q.lift(self.full.keys().to_vec(), &ks.project)?;
        let mut meta = lifted.meta().clone();
        meta.eta = self.config.eta;
        meta.metric = self.config.metric_id();
        meta.builder = m.slug().to_string();
        lifted = PerturbationMatrix::new(
            lifted.keys().to_vec(),
            lifted.outputs().to_vec(),
            lifted.as_slice().to_vec(),
            meta,
        )?;
        let loss = expected_loss(&lifted, &self.full.cost, &self.full.prior)?;
        let report = audit(
            &lifted,
            &self.full.dist,
            &self.full.prior,
            eps,
            self.config.eta,
            DEFAULT_TOL,
        )?;
        Ok(Built {
            matrix: lifted,
            expected_loss: loss,
            max_pl: report.bound.max_pl,
            expected_pl: report.leakage.expected,
            pass: report.pass,
            build_s,
            solve_s,
        })
    }

    /// Runs every (mechanism, ε) cell in parallel; failures are kept per cell.
    pub fn run(&self) -> SweepReport {
        let cells: Vec<(Mechanism, f64)> = self
            .config
            .mechanisms
            .iter()
            .flat_map(|&m| self.config.epsilons.iter().map(move |&e| (m, e)))
            .collect();
        let results = cells
            .par_iter()
            .map(|&(mechanism, epsilon)| {
                let outcome = self.build(mechanism, epsilon);
                if let Err(e) = &outcome {
                    log::warn!("{mechanism} at epsilon {epsilon} failed: {e}");
                }
                Cell {
                    mechanism,
                    epsilon,
                    outcome: outcome.map_err(|e| CellError {
                        solver: matches!(e, Error::Solver { .. }),
                        message: e.to_string(),
                    }),
                }
            })
            .collect();
        SweepReport { cells: results }
    }
}

/// A mechanism lifted onto the full keys, with its scores.
#[derive(Clone, Debug)]
pub struct Built {
    pub matrix: PerturbationMatrix,
    pub expected_loss: f64,
    /// Largest leakage over neighbouring full keys.
    pub max_pl: f64,
    pub expected_pl: f64,
    pub pass: bool,
    pub build_s: f64,
    pub solve_s: Option<f64>,
}

/// Why a cell produced no mechanism.
#[derive(Clone, Debug, PartialEq)]
pub struct CellError {
    pub message: String,
    /// The solver stopped short of a verified optimum.
    pub solver: bool,
}

impl fmt::Display for CellError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub outcome: std::result::Result<Built, CellError>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub cells: Vec<Cell>,
}

/// One parsed row of `results.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub expected_loss_km: Option<f64>,
    pub max_pl: Option<f64>,
    pub pass: bool,
    pub build_s: Option<f64>,
    pub solve_s: Option<f64>,
}

const RESULTS_HEADER: &str = "mechanism,epsilon,expected_loss_km,max_pl,pass,build_s,solve_s";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

impl SweepReport {
    pub fn rows(&self, timings: bool) -> Vec<ResultRow> {
        self.cells
            .iter()
            .map(|c| {
                let ok = c.outcome.as_ref().ok();
                ResultRow {
                    mechanism: c.mechanism,
                    epsilon: c.epsilon,
                    expected_loss_km: ok.map(|b| b.expected_loss),
                    max_pl: ok.map(|b| b.max_pl),
                    pass: ok.is_some_and(|b| b.pass),
                    build_s: ok.filter(|_| timings).map(|b| b.build_s),
                    solve_s: ok.filter(|_| timings).and_then(|b| b.solve_s),
                }
            })
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (&Cell, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c, e.message.as_str())))
    }

    pub fn write_results(&self, path: &Path, timings: bool) -> Result<()> {
        let mut s = format!("{RESULTS_HEADER}\n");
        for r in self.rows(timings) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.mechanism,
                fmt_f64(r.epsilon),
                opt(r.expected_loss_km),
                opt(r.max_pl),
                r.pass,
                opt(r.build_s),
                opt(r.solve_s)
            ));
        }
        crate::io::write_text(path, &s)
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = crate::io::read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RESULTS_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header `{RESULTS_HEADER}`"))),
    }
    lines
        .map(|(n, line)| {
            let bad = |m: &str| Error::parse(path, n as u64 + 1, m.to_string());
            let f: Vec<&str> = line.split(',').collect();
            let [mech, eps, loss, pl, pass, b, s] = f.as_slice() else {
                return Err(bad("expected 7 columns"));
            };
            let num = |v: &str| -> Result<Option<f64>> {
                if v == "NA" {
                    Ok(None)
                } else {
                    crate::io::parse_f64(v).map(Some).ok_or_else(|| bad("bad number"))
                }
            };
            Ok(ResultRow {
                mechanism: mech.parse()?,
                epsilon: num(eps)?.ok_or_else(|| bad("missing epsilon"))?,
                expected_loss_km: num(loss)?,
                max_pl: num(pl)?,
                pass: pass.parse().map_err(|_| bad("bad pass flag"))?,
                build_s: num(b)?,
                solve_s: num(s)?,
            })
        })
        .collect()
}

impl Experiment {
    /// Writes the results table and the blanket diagnostics under `dir`:
    /// `results.csv`, `pvalues.csv`, `blanket_sizes.csv`, `labels.csv`,
    /// `predictor.csv`, `predictor_scores.csv`, `errors.csv` and one matrix per
    /// successful cell under `matrices/`.
    pub fn write(&self, report: &SweepReport, dir: &Path) -> Result<()> {
        let timings = self.config.timings;
        report.write_results(&dir.join("results.csv"), timings)?;

        let mut s = String::from("time_bin,speed_bin,region_bin,time,speed,latitude,longitude,m,p_value\n");
        for r in &self.pvalues {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.bin.time,
                r.bin.speed,
                r.bin.region,
                r.bin.time,
                fmt_f64((r.bin.speed as f64 + 0.5) * SPEED_BIN_MPH),
                fmt_f64(r.latitude),
                fmt_f64(r.longitude),
                r.m,
                fmt_f64(r.p_value)
            ));
        }
        crate::io::write_text(&dir.join("pvalues.csv"), &s)?;

        let mut s = String::from("time_bin,speed_bin,region_bin,rows,usable,predicted,identified\n");
        for b in &self.bins {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                b.bin.time, b.bin.speed, b.bin.region, b.rows, b.usable, b.predicted, b.identified
            ));
        }
        crate::io::write_text(&dir.join("blanket_sizes.csv"), &s)?;

        write_labels(&dir.join("labels.csv"), &self.labels, Some(Label::FailToReject))?;
        self.predictor.write(&dir.join("predictor.csv"))?;
        let scores = match &self.scores {
            Some(sc) => format!(
                "accuracy,precision,recall\n{},{},{}\n",
                fmt_f64(sc.accuracy),
                opt(sc.precision),
                opt(sc.recall)
            ),
            None => "accuracy,precision,recall\nNA,NA,NA\n".to_string(),
        };
        crate::io::write_text(&dir.join("predictor_scores.csv"), &scores)?;

        let mut w = crate::io::create(&dir.join("errors.csv"))?;
        let io = |e| Error::io(dir.join("errors.csv"), e);
        writeln!(w, "mechanism,epsilon,message").map_err(io)?;
        for (c, e) in report.failures() {
            writeln!(w, "{},{},\"{}\"", c.mechanism, fmt_f64(c.epsilon), e.replace('"', "'")).map_err(io)?;
        }
        w.flush().map_err(io)?;

        for c in &report.cells {
            if let Ok(b) = &c.outcome {
                let name = format!("{}_eps{}.csv", c.mechanism.slug(), c.epsilon);
                b.matrix.write(&dir.join("matrices").join(name))?;
            }
        }
        Ok(())
    }

    /// Blanket size assigned to each full key by a mechanism's projection.
    pub fn blanket_sizes(&self, m: Mechanism) -> Vec<Blanket> {
        let ks = self.key_space(m);
        ks.project
            .iter()
            .map(|&b| Blanket::new(ks.keys()[b].context.len()))
            .collect()
    }
}
