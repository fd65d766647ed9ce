//! Locations, the great-circle base metric and its context-augmented extension.
//!
//! Secrets are either plain locations or locations joined with an ordered
//! context of earlier locations (`t-1` first). The augmented distance adds a
//! weighted base distance per context lag on top of the current-location
//! distance, so it stays a metric whenever the weights are non-negative.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::Deserialize;

use crate::error::{Error, Result};

/// IUGG mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Identifier of a location or road-network node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(transparent)]
pub struct LocId(pub u64);

impl fmt::Display for LocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for LocId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u64>()
            .map(LocId)
            .map_err(|_| Error::InvalidArgument(format!("bad location id `{s}`")))
    }
}

/// A point on the sphere in decimal degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::InvalidCoordinate(format!("({lat}, {lon}) is not finite")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidCoordinate(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidCoordinate(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub id: LocId,
    pub point: GeoPoint,
}

#[derive(Clone, Debug)]
enum BaseMetric {
    Haversine,
    Table { km: Vec<f64>, n: usize },
}

/// The secret set, the output set and the base distance between their members.
#[derive(Clone, Debug)]
pub struct LocationDomain {
    secrets: Vec<LocId>,
    outputs: Vec<LocId>,
    points: HashMap<LocId, GeoPoint>,
    slot: HashMap<LocId, usize>,
    metric: BaseMetric,
}

impl LocationDomain {
    /// Domain under the Haversine metric.
    pub fn new(secrets: Vec<Location>, outputs: Vec<Location>) -> Result<Self> {
        let mut points = HashMap::new();
        let secret_ids = collect_unique(&secrets, &mut points)?;
        let output_ids = collect_unique(&outputs, &mut points)?;
        let slot = points.keys().copied().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(LocationDomain {
            secrets: secret_ids,
            outputs: output_ids,
            points,
            slot,
            metric: BaseMetric::Haversine,
        })
    }

    /// Registers coordinates for locations that may appear in contexts without being
    /// secrets or outputs. Known ids keep their point.
    pub fn with_points(mut self, extra: &[Location]) -> Self {
        if let BaseMetric::Haversine = self.metric {
            for l in extra {
                self.points.entry(l.id).or_insert(l.point);
            }
        }
        self
    }

    /// Domain with an explicit distance table over `ids` (row-major, km). Secrets and
    /// outputs must be drawn from `ids`. The table is checked for the metric axioms.
    pub fn with_distance_table(ids: &[LocId], km: Vec<f64>, secrets: Vec<LocId>, outputs: Vec<LocId>) -> Result<Self> {
        let n = ids.len();
        if km.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "distance table has {} entries, expected {}",
                km.len(),
                n * n
            )));
        }
        let mut slot = HashMap::new();
        for (i, &id) in ids.iter().enumerate() {
            if slot.insert(id, i).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        for i in 0..n {
            if km[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!("d({0},{0}) != 0", ids[i])));
            }
            for j in 0..n {
                let d = km[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidArgument(format!("bad distance {d}")));
                }
                if d != km[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "asymmetric distance between {} and {}",
                        ids[i], ids[j]
                    )));
                }
            }
        }
        for &id in secrets.iter().chain(outputs.iter()) {
            if !slot.contains_key(&id) {
                return Err(Error::UnknownId(id));
            }
        }
        check_unique(&secrets)?;
        check_unique(&outputs)?;
        let dom = LocationDomain {
            secrets,
            outputs,
            points: HashMap::new(),
            slot,
            metric: BaseMetric::Table { km, n },
        };
        dom.check_triangle(ids, 2000, 0)?;
        Ok(dom)
    }

    pub fn secrets(&self) -> &[LocId] {
        &self.secrets
    }

    pub fn outputs(&self) -> &[LocId] {
        &self.outputs
    }

    pub fn point(&self, id: LocId) -> Option<GeoPoint> {
        self.points.get(&id).copied()
    }

    pub fn contains(&self, id: LocId) -> bool {
        self.slot.contains_key(&id)
    }

    /// Base distance in km.
    pub fn distance(&self, a: LocId, b: LocId) -> Result<f64> {
        match &self.metric {
            BaseMetric::Haversine => {
                let pa = self.points.get(&a).ok_or(Error::UnknownId(a))?;
                let pb = self.points.get(&b).ok_or(Error::UnknownId(b))?;
                Ok(haversine_km(*pa, *pb))
            }
            BaseMetric::Table { km, n } => {
                let i = *self.slot.get(&a).ok_or(Error::UnknownId(a))?;
                let j = *self.slot.get(&b).ok_or(Error::UnknownId(b))?;
                Ok(km[i * n + j])
            }
        }
    }

    /// Checks the triangle inequality on sampled triples (exhaustively when small).
    pub fn check_triangle(&self, ids: &[LocId], samples: usize, seed: u64) -> Result<()> {
        let n = ids.len();
        if n < 3 {
            return Ok(());
        }
        let check = |a: LocId, b: LocId, c: LocId| -> Result<()> {
            let (ab, bc, ac) = (self.distance(a, b)?, self.distance(b, c)?, self.distance(a, c)?);
            if ac > ab + bc + 1e-9 * (1.0 + ac) {
                return Err(Error::InvalidArgument(format!(
                    "triangle inequality fails for ({a}, {b}, {c})"
                )));
            }
            Ok(())
        };
        if n <= 40 {
            for &a in ids {
                for &b in ids {
                    for &c in ids {
                        check(a, b, c)?;
                    }
                }
            }
        } else {
            let mut rng = SplitMix64::seed_from_u64(seed);
            for _ in 0..samples {
                let a = ids[rng.gen_range(0..n)];
                let b = ids[rng.gen_range(0..n)];
                let c = ids[rng.gen_range(0..n)];
                check(a, b, c)?;
            }
        }
        Ok(())
    }
}

fn collect_unique(list: &[Location], points: &mut HashMap<LocId, GeoPoint>) -> Result<Vec<LocId>> {
    let mut seen = std::collections::HashSet::new();
    let mut ids = Vec::with_capacity(list.len());
    for loc in list {
        if !seen.insert(loc.id) {
            return Err(Error::DuplicateId(loc.id));
        }
        if let Some(prev) = points.insert(loc.id, loc.point) {
            if prev != loc.point {
                return Err(Error::InvalidArgument(format!(
                    "location {} has two different coordinates",
                    loc.id
                )));
            }
        }
        ids.push(loc.id);
    }
    Ok(ids)
}

fn check_unique(ids: &[LocId]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for &id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(())
}

/// Per-lag weights `w_{t-1}, ..., w_{t-Γ}` of the augmented metric.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextWeights {
    weights: Vec<f64>,
}

impl ContextWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "context weight {w} must be finite and >= 0"
            )));
        }
        Ok(ContextWeights { weights })
    }

    /// Geometric decay `w_{t-τ} = alpha^τ`.
    pub fn decay(gamma: usize, alpha: f64) -> Result<Self> {
        Self::new((1..=gamma).map(|tau| alpha.powi(tau as i32)).collect())
    }

    pub fn gamma(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// The first `len` lag weights.
    pub fn truncated(&self, len: usize) -> ContextWeights {
        ContextWeights {
            weights: self.weights[..len.min(self.weights.len())].to_vec(),
        }
    }
}

/// A secret location joined with its context, `context[0]` being `t-1`.
///
/// With an empty context this is a plain location key. Blanket keys store the
/// values at the blanket lags in increasing lag order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AugmentedSecret {
    pub current: LocId,
    pub context: Vec<LocId>,
}

impl AugmentedSecret {
    pub fn plain(current: LocId) -> Self {
        AugmentedSecret {
            current,
            context: Vec::new(),
        }
    }

    pub fn new(current: LocId, context: Vec<LocId>) -> Self {
        AugmentedSecret { current, context }
    }

    /// The key restricted to its first `len` context lags.
    pub fn prefix(&self, len: usize) -> AugmentedSecret {
        AugmentedSecret {
            current: self.current,
            context: self.context[..len.min(self.context.len())].to_vec(),
        }
    }

    pub fn is_prefix_of(&self, other: &AugmentedSecret) -> bool {
        self.current == other.current && other.context.starts_with(&self.context)
    }
}

impl fmt::Display for AugmentedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.current)?;
        for v in &self.context {
            write!(f, "|{v}")?;
        }
        Ok(())
    }
}

impl FromStr for AugmentedSecret {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('|');
        let current = parts
            .next()
            .ok_or_else(|| Error::InvalidArgument(format!("bad key `{s}`")))?
            .parse()?;
        let context = parts.map(str::parse).collect::<Result<Vec<LocId>>>()?;
        Ok(AugmentedSecret { current, context })
    }
}

/// Augmented distance `d(x,x') + Σ_τ w_τ d(v_τ, v'_τ)` between two secrets with
/// equal-length contexts.
pub fn context_distance(
    s: &AugmentedSecret,
    s2: &AugmentedSecret,
    w: &ContextWeights,
    dom: &LocationDomain,
) -> Result<f64> {
    if s.context.len() != s2.context.len() {
        return Err(Error::ContextMismatch {
            left: s.context.len(),
            right: s2.context.len(),
        });
    }
    if s.context.len() > w.gamma() {
        return Err(Error::ContextMismatch {
            left: s.context.len(),
            right: w.gamma(),
        });
    }
    let mut d = dom.distance(s.current, s2.current)?;
    for ((a, b), wt) in s.context.iter().zip(&s2.context).zip(w.as_slice()) {
        d += wt * dom.distance(*a, *b)?;
    }
    Ok(d)
}

/// Augmented distance over the lags both keys carry. For blanket keys of equal
/// length this is [`context_distance`]; keys with different blanket sizes only
/// compare their shared leading lags, which never exceeds the full-context distance.
pub fn blanket_distance(
    s: &AugmentedSecret,
    s2: &AugmentedSecret,
    w: &ContextWeights,
    dom: &LocationDomain,
) -> Result<f64> {
    let shared = s.context.len().min(s2.context.len());
    if shared > w.gamma() {
        return Err(Error::ContextMismatch {
            left: shared,
            right: w.gamma(),
        });
    }
    let mut d = dom.distance(s.current, s2.current)?;
    for tau in 0..shared {
        d += w.as_slice()[tau] * dom.distance(s.context[tau], s2.context[tau])?;
    }
    Ok(d)
}

/// Symmetric matrix of pairwise distances between the keys of a mechanism.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    km: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Result<f64>) -> Result<Self> {
        let mut km = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j)?;
                if !(d >= 0.0) {
                    return Err(Error::InvalidArgument(format!("distance {d} between keys {i},{j}")));
                }
                km[i * n + j] = d;
                km[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, km })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("distance matrix is not square".into()));
        }
        Self::from_fn(n, |i, j| {
            if rows[i][j] != rows[j][i] {
                return Err(Error::InvalidArgument(format!("asymmetric distance at {i},{j}")));
            }
            Ok(rows[i][j])
        })
    }

    /// Augmented distances between equal-length keys.
    pub fn context(keys: &[AugmentedSecret], w: &ContextWeights, dom: &LocationDomain) -> Result<Self> {
        Self::from_fn(keys.len(), |i, j| context_distance(&keys[i], &keys[j], w, dom))
    }

    /// Shared-lag distances between blanket keys of possibly different sizes.
    pub fn blanket(keys: &[AugmentedSecret], w: &ContextWeights, dom: &LocationDomain) -> Result<Self> {
        Self::from_fn(keys.len(), |i, j| blanket_distance(&keys[i], &keys[j], w, dom))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.km[i * self.n + j]
    }
}

/// An unordered neighbor pair `i < j` of key indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

/// Every unordered pair of distinct keys within `eta` (inclusive). `eta` may be infinite.
pub fn neighbor_pairs(dist: &DistanceMatrix, eta: f64) -> Result<Vec<NeighborPair>> {
    if eta.is_nan() || eta < 0.0 {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    let mut pairs = Vec::new();
    for i in 0..dist.len() {
        for j in (i + 1)..dist.len() {
            let d = dist.get(i, j);
            if d <= eta {
                pairs.push(NeighborPair { i, j, distance: d });
            }
        }
    }
    Ok(pairs)
}

#[derive(Deserialize)]
struct LocationRow {
    id: LocId,
    lat: f64,
    lon: f64,
}

/// Reads an `id,lat,lon` file (header required).
pub fn load_locations(path: impl AsRef<Path>) -> Result<Vec<Location>> {
    let path = path.as_ref();
    crate::io::read_rows::<LocationRow>(path, &["id", "lat", "lon"])?
        .into_iter()
        .map(|(line, row)| {
            let point = GeoPoint::new(row.lat, row.lon).map_err(|e| Error::parse(path, line, e.to_string()))?;
            Ok(Location { id: row.id, point })
        })
        .collect()
}
