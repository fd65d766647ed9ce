//! Decision-table blanket predictor trained on labelled hypotheses.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::partition::FeatureBin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Reject,
    FailToReject,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Reject => "reject",
            Label::FailToReject => "fail",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "reject" => Ok(Label::Reject),
            "fail" => Ok(Label::FailToReject),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledHypothesis {
    pub bin: FeatureBin,
    pub m: usize,
    pub label: Label,
}

/// Majority label per (bin, m); everything else gets the default label.
#[derive(Clone, Debug, PartialEq)]
pub struct BlanketPredictor {
    table: BTreeMap<(FeatureBin, usize), Label>,
    default: Label,
}

impl BlanketPredictor {
    pub fn predict(&self, bin: &FeatureBin, m: usize) -> Label {
        self.table.get(&(*bin, m)).copied().unwrap_or(self.default)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn default_label(&self) -> Label {
        self.default
    }

    pub fn entries(&self) -> impl Iterator<Item = LabeledHypothesis> + '_ {
        self.table
            .iter()
            .map(|(&(bin, m), &label)| LabeledHypothesis { bin, m, label })
    }

    /// The training table plus a `default` line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let rows: Vec<LabeledHypothesis> = self.entries().collect();
        write_labels(path, &rows, Some(self.default))
    }

    pub fn read(path: &Path) -> Result<BlanketPredictor> {
        let (rows, default) = read_labels(path)?;
        let mut p = train_predictor(&rows);
        if let Some(d) = default {
            p.default = d;
        }
        Ok(p)
    }
}

/// Majority vote per (bin, m); ties and unseen keys fall to fail-to-reject.
pub fn train_predictor(labeled: &[LabeledHypothesis]) -> BlanketPredictor {
    let mut votes: BTreeMap<(FeatureBin, usize), (usize, usize)> = BTreeMap::new();
    for h in labeled {
        let v = votes.entry((h.bin, h.m)).or_default();
        match h.label {
            Label::Reject => v.0 += 1,
            Label::FailToReject => v.1 += 1,
        }
    }
    BlanketPredictor {
        table: votes
            .into_iter()
            .map(|(k, (r, f))| (k, if r > f { Label::Reject } else { Label::FailToReject }))
            .collect(),
        default: Label::FailToReject,
    }
}

/// Accuracy, precision and recall with `reject` as the positive class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn evaluate(p: &BlanketPredictor, truth: &[LabeledHypothesis]) -> Result<Scores> {
    if truth.is_empty() {
        return Err(Error::Empty("labelled hypotheses"));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for h in truth {
        let guess = p.predict(&h.bin, h.m);
        if guess == h.label {
            correct += 1;
        }
        match (guess, h.label) {
            (Label::Reject, Label::Reject) => tp += 1,
            (Label::Reject, Label::FailToReject) => fp += 1,
            (Label::FailToReject, Label::Reject) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(Scores {
        accuracy: correct as f64 / truth.len() as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// `time_bin,speed_bin,region_bin,m,label` rows, optionally followed by `default,label`.
pub fn write_labels(path: &Path, rows: &[LabeledHypothesis], default: Option<Label>) -> Result<()> {
    let mut w = crate::io::create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "time_bin,speed_bin,region_bin,m,label").map_err(io)?;
    for h in rows {
        writeln!(w, "{},{},{},{},{}", h.bin.time, h.bin.speed, h.bin.region, h.m, h.label).map_err(io)?;
    }
    if let Some(d) = default {
        writeln!(w, "default,{d}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_labels(path: &Path) -> Result<(Vec<LabeledHypothesis>, Option<Label>)> {
    let text = crate::io::read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "time_bin,speed_bin,region_bin,m,label" => {}
        _ => {
            return Err(Error::parse(
                path,
                1,
                "expected header `time_bin,speed_bin,region_bin,m,label`",
            ))
        }
    }
    let mut rows = Vec::new();
    let mut default = None;
    for (n, line) in lines {
        let line_no = n as u64 + 1;
        let bad = |m: String| Error::parse(path, line_no, m);
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        match parts.as_slice() {
            ["default", l] => default = Some(l.parse().map_err(|e: Error| bad(e.to_string()))?),
            [t, s, r, m, l] => {
                let num = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("bad integer `{v}`")));
                let (t, s, r, m) = (num(t)?, num(s)?, num(r)?, num(m)?);
                if t >= 24 || s >= super::partition::SPEED_BINS as u64 || r > u16::MAX as u64 {
                    return Err(bad("bin index out of range".into()));
                }
                rows.push(LabeledHypothesis {
                    bin: FeatureBin {
                        time: t as u8,
                        speed: s as u8,
                        region: r as u16,
                    },
                    m: m as usize,
                    label: l.parse().map_err(|e: Error| bad(e.to_string()))?,
                });
            }
            _ => return Err(bad(format!("expected 5 fields, found {}", parts.len()))),
        }
    }
    Ok((rows, default))
}
