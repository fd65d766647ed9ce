//! Time, speed and region binning of examined sub-trajectories.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint, LocId};
use crate::priors::TrajectoryLog;

use super::ci::{CiSample, MIN_ROWS};

pub const SPEED_BIN_MPH: f64 = 5.0;
pub const SPEED_BINS: usize = 24;
const KM_PER_MILE: f64 = 1.609_344;

/// Rectangular lat/lon grid; points outside are clamped to the border cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionGrid {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl RegionGrid {
    /// The 4 x 5 grid over central Rome.
    pub fn rome() -> Self {
        RegionGrid {
            lat_min: 41.64,
            lat_max: 42.12,
            lon_min: 12.23,
            lon_max: 12.83,
            rows: 4,
            cols: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || !(self.lat_max > self.lat_min) || !(self.lon_max > self.lon_min) {
            return Err(Error::InvalidArgument(format!("degenerate region grid {self:?}")));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major cell index.
    pub fn cell(&self, p: GeoPoint) -> usize {
        let idx = |v: f64, lo: f64, hi: f64, n: usize| -> usize {
            let f = ((v - lo) / (hi - lo) * n as f64).floor();
            (f.max(0.0) as usize).min(n - 1)
        };
        let r = idx(p.lat(), self.lat_min, self.lat_max, self.rows);
        let c = idx(p.lon(), self.lon_min, self.lon_max, self.cols);
        r * self.cols + c
    }

    /// Centre of a cell as (lat, lon).
    pub fn center(&self, cell: usize) -> (f64, f64) {
        let (r, c) = (cell / self.cols, cell % self.cols);
        let dlat = (self.lat_max - self.lat_min) / self.rows as f64;
        let dlon = (self.lon_max - self.lon_min) / self.cols as f64;
        (
            self.lat_min + (r as f64 + 0.5) * dlat,
            self.lon_min + (c as f64 + 0.5) * dlon,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grids {
    pub region: RegionGrid,
}

/// Hour of day (UTC), 5 mph speed band and region cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureBin {
    pub time: u8,
    pub speed: u8,
    pub region: u16,
}

impl FeatureBin {
    pub fn from_features(timestamp: f64, speed_mph: f64, p: GeoPoint, grids: &Grids) -> FeatureBin {
        FeatureBin {
            time: hour_bin(timestamp),
            speed: speed_bin(speed_mph),
            region: grids.region.cell(p) as u16,
        }
    }
}

pub fn hour_bin(timestamp: f64) -> u8 {
    ((timestamp / 3600.0).floor().rem_euclid(24.0)) as u8
}

pub fn speed_bin(mph: f64) -> u8 {
    let b = (mph / SPEED_BIN_MPH).floor();
    (b.max(0.0) as usize).min(SPEED_BINS - 1) as u8
}

/// Sub-trajectories of one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct BinSample {
    pub sample: CiSample,
    /// At least [`MIN_ROWS`] rows.
    pub usable: bool,
}

/// Assigns every window `t-Γ..t` of every trajectory to the bin of its hour at
/// `t`, its average speed over the window, and its cell at `t`. `snapped` holds
/// the node ids of the log's fixes.
pub fn partition_dataset(
    log: &TrajectoryLog,
    snapped: &[Vec<LocId>],
    grids: &Grids,
    gamma: usize,
) -> Result<BTreeMap<FeatureBin, BinSample>> {
    if log.is_empty() {
        return Err(Error::Empty("trajectory log"));
    }
    grids.region.validate()?;
    if snapped.len() != log.len() {
        return Err(Error::IndexMismatch("snapped sequences do not match the log".into()));
    }
    let mut bins: BTreeMap<FeatureBin, CiSample> = BTreeMap::new();
    for (t, seq) in log.trajectories.iter().zip(snapped) {
        if seq.len() != t.fixes.len() {
            return Err(Error::IndexMismatch(format!(
                "trajectory {} snapped length differs",
                t.trajectory_id
            )));
        }
        for (now, bin) in window_bins(&t.fixes, gamma, grids) {
            let row = (0..=gamma).map(|lag| seq[now - lag]).collect();
            bins.entry(bin)
                .or_insert_with(|| CiSample::new(gamma, vec![]).unwrap())
                .push(row)?;
        }
    }
    Ok(bins
        .into_iter()
        .map(|(b, sample)| {
            let usable = sample.len() >= MIN_ROWS;
            (b, BinSample { sample, usable })
        })
        .collect())
}

/// `(t, bin)` for every position with a full window behind it.
pub fn window_bins(fixes: &[crate::priors::Fix], gamma: usize, grids: &Grids) -> Vec<(usize, FeatureBin)> {
    (gamma..fixes.len())
        .map(|now| {
            let window = &fixes[now - gamma..=now];
            let km: f64 = window.windows(2).map(|w| haversine_km(w[0].point, w[1].point)).sum();
            let hours = (window[gamma].timestamp - window[0].timestamp) / 3600.0;
            let mph = if hours > 0.0 { km / KM_PER_MILE / hours } else { 0.0 };
            (
                now,
                FeatureBin::from_features(fixes[now].timestamp, mph, fixes[now].point, grids),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{Fix, Trajectory};

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn boundary_binning() {
        assert_eq!(speed_bin(0.0), 0);
        assert_eq!(speed_bin(119.9), 23);
        assert_eq!(speed_bin(4.99), 0);
        assert_eq!(speed_bin(5.0), 1);
        assert_eq!(speed_bin(500.0), 23);
        assert_eq!(hour_bin(0.0), 0);
        assert_eq!(hour_bin(3.0 * 3600.0 + 59.0), 3);
        assert_eq!(hour_bin(86_400.0 + 7200.0), 2);
    }

    #[test]
    fn rome_cells_by_hand() {
        let g = RegionGrid::rome();
        // 0.12 degree cells in both directions
        assert_eq!(g.cell(pt(41.64, 12.23)), 0);
        assert_eq!(g.cell(pt(41.90, 12.50)), 2 * 5 + 2);
        assert_eq!(g.cell(pt(42.119, 12.829)), 3 * 5 + 4);
        assert_eq!(g.cell(pt(41.77, 12.36)), 5 + 1);
        // clamped
        assert_eq!(g.cell(pt(40.0, 13.5)), 4);
        let (lat, lon) = g.center(0);
        assert!((lat - 41.70).abs() < 1e-12 && (lon - 12.29).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_trajectory_lands_in_one_bin() {
        // 0.0001 degree north per fix at about 11 mph
        let step_km = haversine_km(pt(41.65, 12.30), pt(41.6501, 12.30));
        let dt = step_km / (11.0 * KM_PER_MILE) * 3600.0;
        let fixes: Vec<Fix> = (0..300)
            .map(|i| Fix {
                timestamp: 3.0 * 3600.0 + i as f64 * dt,
                point: pt(41.65 + 0.0001 * i as f64, 12.30),
            })
            .collect();
        let log = TrajectoryLog {
            trajectories: vec![Trajectory {
                vehicle_id: "v".into(),
                trajectory_id: "a".into(),
                fixes,
            }],
        };
        let snapped = vec![vec![LocId(1); 300]];
        let bins = partition_dataset(
            &log,
            &snapped,
            &Grids {
                region: RegionGrid::rome(),
            },
            2,
        )
        .unwrap();
        assert_eq!(bins.len(), 1);
        let (b, s) = bins.iter().next().unwrap();
        assert_eq!((b.time, b.speed, b.region), (3, 2, 0));
        assert_eq!(s.sample.len(), 298);
        assert!(s.usable);
    }

    #[test]
    fn window_speed_in_mph() {
        let a = pt(41.70, 12.30);
        let b = pt(41.70 + 0.1, 12.30);
        let km = haversine_km(a, b);
        // one hour for the hop -> km/h, converted to mph
        let fixes = vec![
            Fix {
                timestamp: 0.0,
                point: a,
            },
            Fix {
                timestamp: 3600.0,
                point: b,
            },
        ];
        let grids = Grids {
            region: RegionGrid::rome(),
        };
        let bins = window_bins(&fixes, 1, &grids);
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].1.speed, speed_bin(km / KM_PER_MILE));
        assert_eq!(bins[0].1.time, 1);
    }

    #[test]
    fn empty_log_fails() {
        let grids = Grids {
            region: RegionGrid::rome(),
        };
        assert!(partition_dataset(&TrajectoryLog::default(), &[], &grids, 1).is_err());
    }
}
