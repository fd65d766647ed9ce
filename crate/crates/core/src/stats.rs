//! Correlation coefficients and neighbourhood-density statistics.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::IndexMismatch(format!(
            "columns of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("{} rows, need at least 2", x.len())));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite value {v}")));
    }
    Ok(())
}

/// Pearson product-moment correlation; `None` when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn sign(v: f64) -> i64 {
    (v > 0.0) as i64 - (v < 0.0) as i64
}

/// Kendall's tau-b, which corrects for ties in either column.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tie_x, mut tie_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = sign(x[i] - x[j]);
            let dy = sign(y[i] - y[j]);
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    // pairs untied in x include those tied only in y, and vice versa
    let nx = (concordant + discordant + tie_y) as f64;
    let ny = (concordant + discordant + tie_x) as f64;
    if nx == 0.0 || ny == 0.0 {
        return Ok(None);
    }
    Ok(Some(
        ((concordant - discordant) as f64 / (nx * ny).sqrt()).clamp(-1.0, 1.0),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    pub feature: String,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
}

/// Correlates every column of `features` with `target`.
pub fn correlate(features: &[(String, Vec<f64>)], target: &[f64]) -> Result<Vec<Correlation>> {
    features
        .iter()
        .map(|(name, col)| {
            Ok(Correlation {
                feature: name.clone(),
                pearson: pearson(col, target)?,
                spearman: spearman(col, target)?,
                kendall: kendall(col, target)?,
            })
        })
        .collect()
}

/// Feature columns and the `p_value` column of a headed table. Columns named in
/// `features` must all be present.
pub fn read_feature_table(path: &Path, features: &[&str]) -> Result<(Vec<(String, Vec<f64>)>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::from_csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::from_csv(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing header column `{name}`")))
    };
    let target_col = find("p_value")?;
    let cols: Vec<usize> = features.iter().map(|f| find(f)).collect::<Result<_>>()?;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    let mut target = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::from_csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |c: usize| {
            record
                .get(c)
                .and_then(crate::io::parse_f64)
                .ok_or_else(|| Error::parse(path, line, format!("bad number in column `{}`", &headers[c])))
        };
        target.push(num(target_col)?);
        for (v, &c) in values.iter_mut().zip(&cols) {
            v.push(num(c)?);
        }
    }
    Ok((features.iter().map(|f| f.to_string()).zip(values).collect(), target))
}

/// Per-point neighbourhood statistics, distances in metres.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub k: usize,
    pub radius_m: f64,
    /// Sorted distances to the `k` nearest other points, per point.
    pub knn: Vec<Vec<f64>>,
    /// Other points within `radius_m` (inclusive), per point.
    pub counts: Vec<usize>,
}

impl Density {
    /// Distance to the k-th nearest neighbour, per point.
    pub fn kth(&self) -> Vec<f64> {
        self.knn.iter().map(|d| d[self.k - 1]).collect()
    }

    pub fn mean_knn(&self) -> Vec<f64> {
        self.knn
            .iter()
            .map(|d| d.iter().sum::<f64>() / d.len() as f64)
            .collect()
    }

    /// `(c, fraction of points with at least c neighbours)` for `c = 0..=max`.
    pub fn count_ccdf(&self) -> Vec<(usize, f64)> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        let n = self.counts.len() as f64;
        (0..=max)
            .map(|c| (c, self.counts.iter().filter(|&&v| v >= c).count() as f64 / n))
            .collect()
    }
}

/// Brute-force kNN distances and radius counts over all pairs.
pub fn density(points: &[GeoPoint], k: usize, radius_m: f64) -> Result<Density> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k >= points.len() {
        return Err(Error::InsufficientData(format!(
            "{} points cannot have {k} neighbours each",
            points.len()
        )));
    }
    if !(radius_m >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius_m} must be >= 0")));
    }
    let mut knn = Vec::with_capacity(points.len());
    let mut counts = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        let mut d: Vec<f64> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &q)| haversine_km(p, q) * 1000.0)
            .collect();
        d.sort_by(f64::total_cmp);
        counts.push(d.iter().take_while(|&&v| v <= radius_m).count());
        d.truncate(k);
        knn.push(d);
    }
    Ok(Density {
        k,
        radius_m,
        knn,
        counts,
    })
}

/// Equal-width histogram as `(lower, upper, count)`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<(f64, f64, usize)>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if values.is_empty() {
        return Err(Error::Empty("histogram values"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Textbook sums, written independently of the implementations above.
    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    fn spearman_distinct_oracle(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64], i: usize| 1.0 + v.iter().filter(|&&w| w < v[i]).count() as f64;
        let n = x.len() as f64;
        let d2: f64 = (0..x.len()).map(|i| (rank(x, i) - rank(y, i)).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        let (mut n1, mut n2) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    let a = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
                    let b = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
                    s += a * b;
                    n1 += a * a;
                    n2 += b * b;
                }
            }
        }
        s / (n1 * n2).sqrt()
    }

    #[test]
    fn perfect_monotone_pair() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.5, 7.0, 20.0];
        assert_eq!(spearman(&x, &y).unwrap(), Some(1.0));
        assert_eq!(kendall(&x, &y).unwrap(), Some(1.0));
        let lin = [3.0, 5.0, 7.0, 9.0];
        assert!((pearson(&x, &lin).unwrap().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_anticorrelation() {
        assert_eq!(pearson(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), Some(-1.0));
        assert_eq!(kendall(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), Some(-1.0));
    }

    #[test]
    fn constant_column_is_undefined() {
        let x = [1.0, 1.0, 1.0];
        let y = [0.1, 0.5, 0.2];
        assert_eq!(pearson(&x, &y).unwrap(), None);
        assert_eq!(spearman(&x, &y).unwrap(), None);
        assert_eq!(kendall(&x, &y).unwrap(), None);
    }

    #[test]
    fn tied_ranks_are_averaged() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn kendall_tau_b_with_ties_by_hand() {
        // pairs: (12)c (13)tx (14)c (23)c (24)c (34)c -> S = 5, n1 = 5, n2 = 6
        let x = [1.0, 2.0, 1.0, 3.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let t = kendall(&x, &y).unwrap().unwrap();
        assert!((t - 5.0 / 30f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
        assert!(kendall(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn coefficients_match_textbook_formulas(pairs in proptest::collection::vec((-50i32..50, -50i32..50), 3..40)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64 * 0.37).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64 * 1.3 + 0.2).collect();
            if let Some(r) = pearson(&x, &y).unwrap() {
                prop_assert!((r - pearson_oracle(&x, &y)).abs() < 1e-12);
            }
            if let Some(t) = kendall(&x, &y).unwrap() {
                prop_assert!((t - kendall_oracle(&x, &y)).abs() < 1e-12);
            }
        }

        #[test]
        fn spearman_matches_rank_difference_formula(seed in proptest::collection::vec(0u32..1_000_000, 3..30)) {
            // distinct values so the d^2 formula applies
            let x: Vec<f64> = (0..seed.len()).map(|i| i as f64 * 1.5).collect();
            let y: Vec<f64> = seed.iter().enumerate().map(|(i, s)| *s as f64 + i as f64 * 1e-3).collect();
            let s = spearman(&x, &y).unwrap().unwrap();
            prop_assert!((s - spearman_distinct_oracle(&x, &y)).abs() < 1e-12);
        }

        #[test]
        fn coefficients_are_bounded(pairs in proptest::collection::vec((-5i32..5, -5i32..5), 2..20)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            for r in [pearson(&x, &y), spearman(&x, &y), kendall(&x, &y)] {
                if let Some(r) = r.unwrap() {
                    prop_assert!((-1.0..=1.0).contains(&r));
                }
            }
        }
    }

    fn line(n: usize, step_deg: f64) -> Vec<GeoPoint> {
        (0..n)
            .map(|i| GeoPoint::new(0.0, i as f64 * step_deg).unwrap())
            .collect()
    }

    #[test]
    fn coincident_points_have_zero_knn() {
        let p = GeoPoint::new(41.9, 12.5).unwrap();
        let d = density(&[p, p], 1, 10.0).unwrap();
        assert_eq!(d.kth(), vec![0.0, 0.0]);
        assert_eq!(d.counts, vec![1, 1]);
    }

    #[test]
    fn unit_line_counts_by_hand() {
        // spacing ~111 m along the equator, radius covers one step either side
        let pts = line(10, 0.001);
        let step = haversine_km(pts[0], pts[1]) * 1000.0;
        let d = density(&pts, 2, step * 1.5).unwrap();
        let expected: Vec<usize> = (0..10).map(|i| if i == 0 || i == 9 { 1 } else { 2 }).collect();
        assert_eq!(d.counts, expected);
        // two steps either side
        let d = density(&pts, 2, step * 2.5).unwrap();
        assert_eq!(d.counts, vec![2, 3, 4, 4, 4, 4, 4, 4, 3, 2]);
        assert!((d.kth()[0] - 2.0 * step).abs() < 1e-6);
        assert!((d.kth()[5] - step).abs() < 1e-6);
        let ccdf = d.count_ccdf();
        assert_eq!(ccdf[0], (0, 1.0));
        assert_eq!(ccdf[3], (3, 0.8));
        assert_eq!(ccdf[4], (4, 0.6));
    }

    #[test]
    fn k_at_least_n_is_rejected() {
        let pts = line(3, 0.01);
        assert!(density(&pts, 3, 1.0).is_err());
        assert!(density(&pts, 0, 1.0).is_err());
        assert!(density(&pts, 2, 1.0).is_ok());
    }

    #[test]
    fn histogram_covers_every_value() {
        let h = histogram(&[0.0, 0.5, 1.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 5);
        assert_eq!(h[0], (0.0, 1.0, 2));
        assert_eq!(h[1], (1.0, 2.0, 3));
        assert_eq!(histogram(&[3.0, 3.0], 4).unwrap()[0].2, 2);
    }
}
