//! Seeded synthetic road grids and k-th order mobility traces.
//!
//! Order 1 walks follow fixed random per-node transition weights. Order 2 walks
//! keep going straight with probability `momentum`, so the next step depends on
//! the last two locations.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocId, Location, EARTH_RADIUS_KM};
use crate::priors::{Fix, Trajectory, TrajectoryLog};
use crate::roadnet::{Edge, RoadGraph};

const KM_PER_MILE: f64 = 1.609_344;

/// Which trajectories fall back to order 1 regardless of `order`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Uniform,
    /// Morning trips (hour < 12) are order 1.
    ByHour,
    /// Trips slower than 20 mph are order 1.
    BySpeed,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Regime::Uniform),
            "hour" => Ok(Regime::ByHour),
            "speed" => Ok(Regime::BySpeed),
            _ => Err(Error::InvalidArgument(format!("unknown regime `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_km: f64,
    /// South-west corner (lat, lon).
    pub origin: (f64, f64),
    pub order: usize,
    pub momentum: f64,
    pub trajectories: usize,
    /// Fixes per trajectory.
    pub length: usize,
    pub vehicles: usize,
    pub hours: Vec<u8>,
    pub speeds_mph: Vec<f64>,
    pub regime: Regime,
    pub jitter_m: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 4,
            cols: 4,
            spacing_km: 0.5,
            origin: (41.77, 12.48),
            order: 2,
            momentum: 0.9,
            trajectories: 200,
            length: 30,
            vehicles: 20,
            hours: vec![8, 20],
            speeds_mph: vec![12.5, 27.5],
            regime: Regime::Uniform,
            jitter_m: 3.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.rows == 0 || self.cols == 0 || self.rows * self.cols < 2 {
            return bad(format!("grid {}x{} needs at least two nodes", self.rows, self.cols));
        }
        if !(self.spacing_km > 0.0 && self.spacing_km.is_finite()) {
            return bad(format!("spacing {} km must be positive", self.spacing_km));
        }
        if !(1..=2).contains(&self.order) {
            return bad(format!("order {} must be 1 or 2", self.order));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1]", self.momentum));
        }
        if self.trajectories == 0 {
            return bad("trajectory count must be positive".into());
        }
        if self.length < 2 {
            return bad(format!("trajectory length {} must be at least 2", self.length));
        }
        if self.vehicles == 0 {
            return bad("vehicle count must be positive".into());
        }
        if self.hours.is_empty() || self.hours.iter().any(|h| *h > 23) {
            return bad(format!("hours {:?} must be non-empty and within 0..=23", self.hours));
        }
        if self.speeds_mph.is_empty() || self.speeds_mph.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("speeds {:?} must be non-empty and positive", self.speeds_mph));
        }
        if !(self.jitter_m >= 0.0 && self.jitter_m.is_finite()) {
            return bad(format!("jitter {} m must be >= 0", self.jitter_m));
        }
        GeoPoint::new(self.origin.0, self.origin.1)?;
        Ok(())
    }
}

/// A generated graph, the logged fixes and the true node sequences behind them.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub graph: RoadGraph,
    pub log: TrajectoryLog,
    pub sequences: Vec<Vec<LocId>>,
}

impl Synthetic {
    /// Writes `nodes.csv`, `edges.csv` and `trajectories.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.graph.write(&dir.join("nodes.csv"), &dir.join("edges.csv"))?;
        self.log.write(&dir.join("trajectories.csv"))
    }
}

fn deg_per_km() -> f64 {
    180.0 / (std::f64::consts::PI * EARTH_RADIUS_KM)
}

/// Bidirectional `rows x cols` lattice; node `r * cols + c` sits `r` steps north
/// and `c` steps east of `origin`.
pub fn grid_graph(rows: usize, cols: usize, spacing_km: f64, origin: (f64, f64)) -> Result<RoadGraph> {
    let dlat = spacing_km * deg_per_km();
    let dlon = dlat / origin.0.to_radians().cos();
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Location {
                id: LocId((r * cols + c) as u64),
                point: GeoPoint::new(round7(origin.0 + r as f64 * dlat), round7(origin.1 + c as f64 * dlon))?,
            });
        }
    }
    let mut edges = Vec::new();
    let mut link = |a: usize, b: usize| {
        let len = crate::geo::haversine_km(nodes[a].point, nodes[b].point);
        for (from, to) in [(a, b), (b, a)] {
            edges.push(Edge {
                from: nodes[from].id,
                to: nodes[to].id,
                length_km: len,
            });
        }
    };
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                link(i, i + 1);
            }
            if r + 1 < rows {
                link(i, i + cols);
            }
        }
    }
    RoadGraph::new(nodes, edges)
}

fn round7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

fn round3(v: f64) -> f64 {
    (v * 1e3).round() / 1e3
}

struct Walker {
    rows: usize,
    cols: usize,
    // per node: (neighbour, weight), weights summing to 1
    weights: Vec<Vec<(usize, f64)>>,
    momentum: f64,
}

impl Walker {
    fn new(cfg: &SynthConfig, rng: &mut Xoshiro256PlusPlus) -> Walker {
        let (rows, cols) = (cfg.rows, cfg.cols);
        let weights = (0..rows * cols)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                let mut nb = Vec::new();
                if r > 0 {
                    nb.push(i - cols);
                }
                if c > 0 {
                    nb.push(i - 1);
                }
                if c + 1 < cols {
                    nb.push(i + 1);
                }
                if r + 1 < rows {
                    nb.push(i + cols);
                }
                let raw: Vec<f64> = nb.iter().map(|_| 0.05 + rng.gen::<f64>().powi(2)).collect();
                let z: f64 = raw.iter().sum();
                nb.into_iter().zip(raw).map(|(n, w)| (n, w / z)).collect()
            })
            .collect();
        Walker {
            rows,
            cols,
            weights,
            momentum: cfg.momentum,
        }
    }

    fn first_order(&self, cur: usize, rng: &mut Xoshiro256PlusPlus) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let w = &self.weights[cur];
        for &(n, p) in w {
            acc += p;
            if u < acc {
                return n;
            }
        }
        w[w.len() - 1].0
    }

    fn second_order(&self, prev: usize, cur: usize, rng: &mut Xoshiro256PlusPlus) -> usize {
        let (pr, pc) = ((prev / self.cols) as i64, (prev % self.cols) as i64);
        let (cr, cc) = ((cur / self.cols) as i64, (cur % self.cols) as i64);
        let (nr, nc) = (2 * cr - pr, 2 * cc - pc);
        let straight = (0..self.rows as i64).contains(&nr) && (0..self.cols as i64).contains(&nc);
        let u: f64 = rng.gen();
        if straight && u < self.momentum {
            return (nr * self.cols as i64 + nc) as usize;
        }
        let ahead = straight.then(|| (nr * self.cols as i64 + nc) as usize);
        let turns: Vec<usize> = self.weights[cur]
            .iter()
            .map(|w| w.0)
            .filter(|&n| n != prev && Some(n) != ahead)
            .collect();
        if turns.is_empty() {
            return ahead.unwrap_or(prev);
        }
        turns[rng.gen_range(0..turns.len())]
    }
}

/// Generates the grid and `trajectories` walks. Each trajectory gets its own day,
/// an hour and speed drawn from the configured lists, and a start offset that
/// keeps it inside its hour when it fits.
pub fn synthesize(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let graph = grid_graph(cfg.rows, cfg.cols, cfg.spacing_km, cfg.origin)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let walker = Walker::new(cfg, &mut rng);
    let m_per_deg = 1000.0 / deg_per_km();
    let mut trajectories = Vec::with_capacity(cfg.trajectories);
    let mut sequences = Vec::with_capacity(cfg.trajectories);
    for t in 0..cfg.trajectories {
        let hour = cfg.hours[rng.gen_range(0..cfg.hours.len())];
        let mph = cfg.speeds_mph[rng.gen_range(0..cfg.speeds_mph.len())];
        let order = match cfg.regime {
            Regime::ByHour if hour < 12 => 1,
            Regime::BySpeed if mph < 20.0 => 1,
            _ => cfg.order,
        };
        let mut seq = vec![rng.gen_range(0..graph.len())];
        while seq.len() < cfg.length {
            let cur = seq[seq.len() - 1];
            let next = if order == 2 && seq.len() >= 2 {
                walker.second_order(seq[seq.len() - 2], cur, &mut rng)
            } else {
                walker.first_order(cur, &mut rng)
            };
            seq.push(next);
        }
        let step_s = cfg.spacing_km / (mph * KM_PER_MILE) * 3600.0;
        let duration = step_s * (cfg.length - 1) as f64;
        let slack = (3600.0 - duration - 1.0).max(0.0);
        let start = t as f64 * 86_400.0 + hour as f64 * 3600.0 + rng.gen::<f64>() * slack;
        let mut fixes = Vec::with_capacity(seq.len());
        for (i, &n) in seq.iter().enumerate() {
            let p = graph.nodes()[n].point;
            let jlat = (rng.gen::<f64>() * 2.0 - 1.0) * cfg.jitter_m / m_per_deg;
            let jlon = (rng.gen::<f64>() * 2.0 - 1.0) * cfg.jitter_m / (m_per_deg * p.lat().to_radians().cos());
            fixes.push(Fix {
                timestamp: round3(start + i as f64 * step_s),
                point: GeoPoint::new(round7(p.lat() + jlat), round7(p.lon() + jlon))?,
            });
        }
        trajectories.push(Trajectory {
            vehicle_id: format!("v{}", t % cfg.vehicles),
            trajectory_id: format!("t{t}"),
            fixes,
        });
        sequences.push(seq.into_iter().map(|n| graph.nodes()[n].id).collect());
    }
    Ok(Synthetic {
        graph,
        log: TrajectoryLog { trajectories },
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blanket::{identify_blanket, CiSample};

    #[test]
    fn grid_edges_are_symmetric_and_unit_spaced() {
        let g = grid_graph(3, 4, 0.5, (41.77, 12.48)).unwrap();
        assert_eq!(g.len(), 12);
        // 3 * 3 horizontal + 2 * 4 vertical links, both directions
        assert_eq!(g.edges().len(), 2 * (9 + 8));
        for e in g.edges() {
            assert!((e.length_km - 0.5).abs() < 2e-3, "{}", e.length_km);
        }
    }

    #[test]
    fn zero_trajectories_is_an_error() {
        let cfg = SynthConfig {
            trajectories: 0,
            ..SynthConfig::default()
        };
        assert!(synthesize(&cfg).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig {
            trajectories: 10,
            ..SynthConfig::default()
        };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.sequences, b.sequences);
        let c = synthesize(&SynthConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.sequences, c.sequences);
    }

    #[test]
    fn walks_move_along_edges_and_snap_back() {
        let s = synthesize(&SynthConfig {
            trajectories: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let snapped = s.log.snap(&s.graph).unwrap();
        assert_eq!(snapped, s.sequences);
        for seq in &s.sequences {
            for w in seq.windows(2) {
                assert!(s.graph.edges().iter().any(|e| e.from == w[0] && e.to == w[1]));
            }
        }
    }

    #[test]
    fn order_one_walk_yields_one_lag() {
        let cfg = SynthConfig {
            order: 1,
            trajectories: 100,
            seed: 7,
            ..SynthConfig::default()
        };
        let s = synthesize(&cfg).unwrap();
        let sample = CiSample::from_sequences(&s.sequences, 2);
        assert!(sample.len() >= 1000);
        assert_eq!(identify_blanket(&sample, 2, 3).unwrap().blanket.size(), 1);
    }

    #[test]
    fn order_two_walk_yields_two_lags() {
        let s = synthesize(&SynthConfig {
            trajectories: 100,
            seed: 7,
            ..SynthConfig::default()
        })
        .unwrap();
        let sample = CiSample::from_sequences(&s.sequences, 3);
        assert_eq!(identify_blanket(&sample, 3, 3).unwrap().blanket.size(), 2);
    }
}
