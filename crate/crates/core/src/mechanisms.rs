//! Perturbation matrices, the exponential-mechanism baseline and run-time sampling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::blanket::Blanket;
use crate::error::{Error, Result};
use crate::geo::{AugmentedSecret, LocId, LocationDomain};
use crate::utility::CostTensor;

/// Row-sum tolerance accepted on construction.
pub const ROW_TOL: f64 = 1e-9;

/// Provenance recorded alongside a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixMeta {
    pub epsilon: f64,
    pub eta: f64,
    /// e.g. `haversine` or `context:alpha=0.5`
    pub metric: String,
    pub builder: String,
}

impl Default for MatrixMeta {
    fn default() -> Self {
        MatrixMeta {
            epsilon: f64::NAN,
            eta: f64::NAN,
            metric: "haversine".into(),
            builder: "unknown".into(),
        }
    }
}

/// Row-stochastic map from secret keys to output distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationMatrix {
    keys: Vec<AugmentedSecret>,
    outputs: Vec<LocId>,
    probs: Vec<f64>,
    meta: MatrixMeta,
    index: HashMap<AugmentedSecret, usize>,
}

impl PerturbationMatrix {
    pub fn new(keys: Vec<AugmentedSecret>, outputs: Vec<LocId>, probs: Vec<f64>, meta: MatrixMeta) -> Result<Self> {
        let k = outputs.len();
        if probs.len() != keys.len() * k {
            return Err(Error::IndexMismatch(format!(
                "{} probabilities for {} keys x {k} outputs",
                probs.len(),
                keys.len()
            )));
        }
        if k == 0 && !keys.is_empty() {
            return Err(Error::Empty("output set"));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, key) in keys.iter().enumerate() {
            if index.insert(key.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate key {key}")));
            }
            let row = &probs[i * k..(i + 1) * k];
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidArgument(format!(
                    "probability {p} outside [0,1] in row {key}"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidArgument(format!("row {key} sums to {s}")));
            }
        }
        Ok(PerturbationMatrix {
            keys,
            outputs,
            probs,
            meta,
            index,
        })
    }

    pub fn keys(&self) -> &[AugmentedSecret] {
        &self.keys
    }

    pub fn outputs(&self) -> &[LocId] {
        &self.outputs
    }

    pub fn meta(&self) -> &MatrixMeta {
        &self.meta
    }

    pub fn key_index(&self, key: &AugmentedSecret) -> Option<usize> {
        self.index.get(key).copied()
    }

    #[inline]
    pub fn get(&self, key: usize, out: usize) -> f64 {
        self.probs[key * self.outputs.len() + out]
    }

    pub fn row(&self, key: usize) -> &[f64] {
        let k = self.outputs.len();
        &self.probs[key * k..(key + 1) * k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Re-indexes onto `keys`, row `i` copied from row `project[i]` of `self`.
    pub fn lift(&self, keys: Vec<AugmentedSecret>, project: &[usize]) -> Result<PerturbationMatrix> {
        if project.len() != keys.len() {
            return Err(Error::IndexMismatch("projection does not cover the keys".into()));
        }
        let mut probs = Vec::with_capacity(keys.len() * self.outputs.len());
        for &r in project {
            if r >= self.keys.len() {
                return Err(Error::IndexMismatch(format!("row {r} out of range")));
            }
            probs.extend_from_slice(self.row(r));
        }
        PerturbationMatrix::new(keys, self.outputs.clone(), probs, self.meta.clone())
    }

    /// Header block of `# name=value` lines, then `key,output,prob` rows.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::create(path)?;
        let io = |e| Error::io(path, e);
        let schema = match self.keys.iter().map(|k| k.context.len()).max() {
            None | Some(0) => "x".to_string(),
            Some(n) => format!("x|v1..v{n}"),
        };
        writeln!(w, "# epsilon={}", crate::io::fmt_f64(self.meta.epsilon)).map_err(io)?;
        writeln!(w, "# eta={}", crate::io::fmt_f64(self.meta.eta)).map_err(io)?;
        writeln!(w, "# metric={}", self.meta.metric).map_err(io)?;
        writeln!(w, "# builder={}", self.meta.builder).map_err(io)?;
        writeln!(w, "# key_schema={schema}").map_err(io)?;
        writeln!(w, "key,output,prob").map_err(io)?;
        for (i, key) in self.keys.iter().enumerate() {
            for (o, out) in self.outputs.iter().enumerate() {
                writeln!(w, "{key},{out},{}", crate::io::fmt_f64(self.get(i, o))).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a matrix written by [`PerturbationMatrix::write`]. Key and output order
    /// follow first appearance.
    pub fn read(path: &Path) -> Result<PerturbationMatrix> {
        let text = crate::io::read_text(path)?;
        let mut meta = MatrixMeta::default();
        let mut keys: Vec<AugmentedSecret> = Vec::new();
        let mut outputs: Vec<LocId> = Vec::new();
        let mut key_pos: HashMap<AugmentedSecret, usize> = HashMap::new();
        let mut out_pos: HashMap<LocId, usize> = HashMap::new();
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        let mut header_seen = false;
        for (n, line) in text.lines().enumerate() {
            let line_no = n as u64 + 1;
            let bad = |m: String| Error::parse(path, line_no, m);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((name, value)) = rest.trim().split_once('=') else {
                    continue;
                };
                let num = |v: &str| crate::io::parse_f64(v).ok_or_else(|| bad(format!("bad number `{v}`")));
                match name.trim() {
                    "epsilon" => meta.epsilon = num(value)?,
                    "eta" => meta.eta = num(value)?,
                    "metric" => meta.metric = value.trim().to_string(),
                    "builder" => meta.builder = value.trim().to_string(),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != "key,output,prob" {
                    return Err(bad(format!("expected header `key,output,prob`, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let [k, o, p] = parts.as_slice() else {
                return Err(bad(format!("expected 3 fields, found {}", parts.len())));
            };
            let key: AugmentedSecret = k.parse().map_err(|e: Error| bad(e.to_string()))?;
            let out: LocId = o.parse().map_err(|e: Error| bad(e.to_string()))?;
            let prob = crate::io::parse_f64(p).ok_or_else(|| bad(format!("bad probability `{p}`")))?;
            let i = *key_pos.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                keys.len() - 1
            });
            let j = *out_pos.entry(out).or_insert_with(|| {
                outputs.push(out);
                outputs.len() - 1
            });
            cells.push((i, j, prob));
        }
        if !header_seen {
            return Err(Error::parse(path, 1, "missing `key,output,prob` header"));
        }
        let mut probs = vec![f64::NAN; keys.len() * outputs.len()];
        for (i, j, p) in cells {
            probs[i * outputs.len() + j] = p;
        }
        if probs.iter().any(|p| p.is_nan()) {
            return Err(Error::parse(path, 0, "matrix is missing (key, output) cells"));
        }
        PerturbationMatrix::new(keys, outputs, probs, meta)
    }
}

/// Exponential mechanism `q(k, y) ∝ exp(-ε d(k, y) / 2)` where `d` is the base
/// distance from the key's current location to the output.
pub fn exp_mechanism(
    keys: &[AugmentedSecret],
    outputs: &[LocId],
    dom: &LocationDomain,
    eps: f64,
) -> Result<PerturbationMatrix> {
    let mut d = Vec::with_capacity(keys.len() * outputs.len());
    for k in keys {
        for &y in outputs {
            d.push(dom.distance(k.current, y)?);
        }
    }
    exp_mechanism_with(keys, outputs, &d, eps)
}

/// Exponential mechanism from a precomputed `keys x outputs` distance table.
pub fn exp_mechanism_with(
    keys: &[AugmentedSecret],
    outputs: &[LocId],
    d: &[f64],
    eps: f64,
) -> Result<PerturbationMatrix> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let k = outputs.len();
    if d.len() != keys.len() * k {
        return Err(Error::IndexMismatch(
            "distance table does not match keys x outputs".into(),
        ));
    }
    let mut probs = Vec::with_capacity(d.len());
    for i in 0..keys.len() {
        let scores: Vec<f64> = d[i * k..(i + 1) * k].iter().map(|d| -eps * d / 2.0).collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = w.iter().sum();
        probs.extend(w.iter().map(|w| w / z));
    }
    PerturbationMatrix::new(
        keys.to_vec(),
        outputs.to_vec(),
        probs,
        MatrixMeta {
            epsilon: eps,
            eta: f64::INFINITY,
            metric: "haversine".into(),
            builder: "exp".into(),
        },
    )
}

/// `Σ_key p(key) Σ_out c(key, out) q(key, out)`.
pub fn expected_loss(q: &PerturbationMatrix, c: &CostTensor, p: &[f64]) -> Result<f64> {
    if q.keys() != c.keys() || q.outputs() != c.outputs() {
        return Err(Error::IndexMismatch(
            "matrix and cost tensor are indexed differently".into(),
        ));
    }
    if p.len() != q.keys().len() {
        return Err(Error::IndexMismatch(format!(
            "{} prior entries for {} keys",
            p.len(),
            q.keys().len()
        )));
    }
    Ok(q.as_slice()
        .chunks(q.outputs().len().max(1))
        .zip(c.as_slice().chunks(c.outputs().len().max(1)))
        .zip(p)
        .map(|((qr, cr), p)| p * qr.iter().zip(cr).map(|(q, c)| q * c).sum::<f64>())
        .sum())
}

/// Uniform double in `[0, 1)` from the top 53 bits of a 64-bit draw.
pub fn unit_draw(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws an output for `key` by inverse CDF on a SplitMix64 stream seeded with `seed`.
pub fn sample_output(q: &PerturbationMatrix, key: &AugmentedSecret, seed: u64) -> Result<LocId> {
    let i = q.key_index(key).ok_or_else(|| Error::UnseenKey(key.to_string()))?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    Ok(q.outputs()[inverse_cdf(q.row(i), unit_draw(&mut rng))])
}

/// Index of the first entry whose cumulative mass exceeds `u`; rounding leftovers
/// fall on the last positive entry.
pub fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in row.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Row key for a release at `x` given the recent locations `history` (oldest first).
pub fn blanket_key_for(x: LocId, history: &[LocId], blanket: &Blanket) -> Result<AugmentedSecret> {
    let m = blanket.size();
    if history.len() < m {
        return Err(Error::InsufficientData(format!(
            "blanket of {m} lags needs {m} past locations, got {}",
            history.len()
        )));
    }
    Ok(AugmentedSecret::new(x, history.iter().rev().take(m).copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(ids: &[u64]) -> Vec<AugmentedSecret> {
        ids.iter().map(|&i| AugmentedSecret::plain(LocId(i))).collect()
    }

    fn outs(ids: &[u64]) -> Vec<LocId> {
        ids.iter().map(|&i| LocId(i)).collect()
    }

    #[test]
    fn exp_mechanism_hand_rows() {
        let q = exp_mechanism_with(&plain(&[1]), &outs(&[1, 2]), &[3.0, 3.0], 1.0).unwrap();
        assert_eq!(q.row(0), &[0.5, 0.5]);
        let q = exp_mechanism_with(&plain(&[1]), &outs(&[1, 2]), &[0.0, 1.0], 4f64.ln()).unwrap();
        assert!((q.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!(exp_mechanism_with(&plain(&[1]), &outs(&[1]), &[0.0], 0.0).is_err());
    }

    #[test]
    fn construction_checks() {
        assert!(PerturbationMatrix::new(plain(&[1]), outs(&[1, 2]), vec![0.5, 0.6], MatrixMeta::default()).is_err());
        assert!(PerturbationMatrix::new(plain(&[1]), outs(&[1, 2]), vec![1.5, -0.5], MatrixMeta::default()).is_err());
        assert!(PerturbationMatrix::new(plain(&[1, 1]), outs(&[1]), vec![1.0, 1.0], MatrixMeta::default()).is_err());
        assert!(PerturbationMatrix::new(plain(&[1]), outs(&[1]), vec![1.0, 0.0], MatrixMeta::default()).is_err());
    }

    #[test]
    fn expected_loss_hand_cases() {
        let keys = plain(&[1]);
        let q = PerturbationMatrix::new(keys.clone(), outs(&[1, 2]), vec![0.5, 0.5], MatrixMeta::default()).unwrap();
        let c = CostTensor::new(keys.clone(), outs(&[1, 2]), vec![0.0, 2.0]).unwrap();
        assert_eq!(expected_loss(&q, &c, &[1.0]).unwrap(), 1.0);
        let id = PerturbationMatrix::new(
            plain(&[1, 2]),
            outs(&[1, 2]),
            vec![1.0, 0.0, 0.0, 1.0],
            MatrixMeta::default(),
        )
        .unwrap();
        let c = CostTensor::new(plain(&[1, 2]), outs(&[1, 2]), vec![0.0, 5.0, 7.0, 0.0]).unwrap();
        assert_eq!(expected_loss(&id, &c, &[0.5, 0.5]).unwrap(), 0.0);
        assert!(expected_loss(&id, &c, &[1.0]).is_err());
        let other = CostTensor::new(plain(&[2, 1]), outs(&[1, 2]), vec![0.0; 4]).unwrap();
        assert!(matches!(
            expected_loss(&id, &other, &[0.5, 0.5]),
            Err(Error::IndexMismatch(_))
        ));
    }

    #[test]
    fn sampling_is_reproducible_and_respects_point_mass() {
        let q = PerturbationMatrix::new(
            plain(&[1, 2]),
            outs(&[7, 8, 9]),
            vec![0.0, 1.0, 0.0, 0.2, 0.3, 0.5],
            MatrixMeta::default(),
        )
        .unwrap();
        for seed in 0..200 {
            assert_eq!(sample_output(&q, &plain(&[1])[0], seed).unwrap(), LocId(8));
            let a = sample_output(&q, &plain(&[2])[0], seed).unwrap();
            assert_eq!(a, sample_output(&q, &plain(&[2])[0], seed).unwrap());
        }
        assert!(sample_output(&q, &plain(&[3])[0], 0).is_err());
    }

    #[test]
    fn sampling_frequencies_within_three_sigma() {
        let q = PerturbationMatrix::new(
            plain(&[1]),
            outs(&[1, 2]),
            vec![2.0 / 3.0, 1.0 / 3.0],
            MatrixMeta::default(),
        )
        .unwrap();
        let n = 100_000u64;
        let hits = (0..n)
            .filter(|&s| sample_output(&q, &q.keys()[0], s).unwrap() == LocId(1))
            .count() as f64;
        let p = 2.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - n as f64 * p).abs() <= 3.0 * sigma, "{hits}");
    }

    #[test]
    fn blanket_keys_project_history() {
        let h = outs(&[4, 5, 6]);
        let x = LocId(9);
        assert_eq!(
            blanket_key_for(x, &h, &Blanket::new(0)).unwrap(),
            AugmentedSecret::plain(x)
        );
        assert_eq!(
            blanket_key_for(x, &h, &Blanket::new(1)).unwrap(),
            AugmentedSecret::new(x, outs(&[6]))
        );
        assert_eq!(
            blanket_key_for(x, &h, &Blanket::new(2)).unwrap(),
            AugmentedSecret::new(x, outs(&[6, 5]))
        );
        assert!(blanket_key_for(x, &h, &Blanket::new(4)).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let keys = vec![
            AugmentedSecret::new(LocId(1), outs(&[2, 3])),
            AugmentedSecret::new(LocId(2), outs(&[1, 1])),
        ];
        let probs = vec![1.0 / 3.0, 2.0 / 3.0, 0.1, 0.9];
        let meta = MatrixMeta {
            epsilon: 0.3,
            eta: f64::INFINITY,
            metric: "context:alpha=0.5".into(),
            builder: "cmdp".into(),
        };
        let q = PerturbationMatrix::new(keys, outs(&[5, 6]), probs, meta).unwrap();
        let path = dir.path().join("q.csv");
        q.write(&path).unwrap();
        let back = PerturbationMatrix::read(&path).unwrap();
        assert_eq!(back, q);
        std::fs::write(&path, "key,output,prob\n1,2,0.5\n").unwrap();
        assert!(PerturbationMatrix::read(&path).is_err());
        std::fs::write(&path, "key,output,prob\n1,2,0.5\n1,3,x\n").unwrap();
        assert!(PerturbationMatrix::read(&path).unwrap_err().to_string().contains(":3:"));
    }

    proptest! {
        #[test]
        fn exp_mechanism_ratio_bound_all_pairs(
            pts in proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05), 2..12),
            eps in 0.05f64..5.0,
        ) {
            let locs: Vec<crate::geo::Location> = pts
                .iter()
                .enumerate()
                .map(|(i, (a, b))| crate::geo::Location { id: LocId(i as u64), point: crate::geo::GeoPoint::new(*a, *b).unwrap() })
                .collect();
            let dom = LocationDomain::new(locs.clone(), locs.clone()).unwrap();
            let keys: Vec<AugmentedSecret> = locs.iter().map(|l| AugmentedSecret::plain(l.id)).collect();
            let q = exp_mechanism(&keys, dom.outputs(), &dom, eps).unwrap();
            for i in 0..keys.len() {
                for j in 0..keys.len() {
                    let d = dom.distance(keys[i].current, keys[j].current).unwrap();
                    for y in 0..q.outputs().len() {
                        prop_assert!(q.get(i, y).ln() - q.get(j, y).ln() <= eps * d + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn inverse_cdf_hits_positive_entries(row in proptest::collection::vec(0.0f64..1.0, 1..8), u in 0.0f64..1.0) {
            let s: f64 = row.iter().sum();
            prop_assume!(s > 0.0);
            let row: Vec<f64> = row.iter().map(|p| p / s).collect();
            let i = inverse_cdf(&row, u);
            prop_assert!(row[i] > 0.0);
        }
    }
}
