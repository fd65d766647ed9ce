//! Markov-blanket discovery, feature-binned partitioning and blanket prediction.
//!
//! Blankets grow from `{t-1}` one lag at a time, so a blanket is fully described
//! by its size `m`: the lags `t-1, ..., t-m`.

mod ci;
mod partition;
mod predictor;

pub use ci::{ci_test, CiSample, CiTest, PermutationGTest, ALPHA, MIN_ROWS, PERMUTATIONS};
pub use partition::{
    partition_dataset, window_bins, BinSample, FeatureBin, Grids, RegionGrid, SPEED_BINS, SPEED_BIN_MPH,
};
pub use predictor::{
    evaluate, read_labels, train_predictor, write_labels, BlanketPredictor, Label, LabeledHypothesis, Scores,
};

use std::fmt;

use crate::error::{Error, Result};

/// The lags `t-1, ..., t-m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Blanket(usize);

impl Blanket {
    pub fn new(size: usize) -> Self {
        Blanket(size)
    }

    pub fn size(&self) -> usize {
        self.0
    }

    pub fn lags(&self) -> Vec<usize> {
        (1..=self.0).collect()
    }
}

impl fmt::Display for Blanket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lags: Vec<String> = self.lags().iter().map(|l| format!("t-{l}")).collect();
        write!(f, "{{{}}}", lags.join(","))
    }
}

/// One tested null hypothesis `X_t ⊥ X_{t-m-1} | X_{t-1..t-m}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisTest {
    pub m: usize,
    /// `None` for hypotheses labelled without testing.
    pub p_value: Option<f64>,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlanketResult {
    pub blanket: Blanket,
    /// Labels for `m = 1..Γ-1`, in order.
    pub hypotheses: Vec<HypothesisTest>,
    /// Every lag up to Γ was added without a stopping test.
    pub exhausted: bool,
}

/// Grows the blanket from `{t-1}` while the next lag is conditionally dependent.
///
/// Hypotheses after the stopping one condition on a superset and are labelled
/// fail-to-reject without testing.
pub fn identify_blanket(s: &CiSample, gamma: usize, seed: u64) -> Result<BlanketResult> {
    identify_blanket_with(&PermutationGTest::default(), s, gamma, seed)
}

pub fn identify_blanket_with(test: &dyn CiTest, s: &CiSample, gamma: usize, seed: u64) -> Result<BlanketResult> {
    if gamma == 0 {
        return Err(Error::InvalidArgument(
            "blanket discovery needs context depth >= 1".into(),
        ));
    }
    if gamma > s.gamma() {
        return Err(Error::ContextMismatch {
            left: gamma,
            right: s.gamma(),
        });
    }
    let mut m = 1;
    let mut hypotheses = Vec::new();
    let mut exhausted = true;
    while m < gamma {
        let cond: Vec<usize> = (1..=m).collect();
        let p = test.p_value(s, m + 1, &cond, seed.wrapping_add(m as u64))?;
        let label = if p <= ALPHA { Label::Reject } else { Label::FailToReject };
        hypotheses.push(HypothesisTest {
            m,
            p_value: Some(p),
            label,
        });
        if label == Label::FailToReject {
            exhausted = false;
            break;
        }
        m += 1;
    }
    for later in (hypotheses.len() + 1)..gamma {
        hypotheses.push(HypothesisTest {
            m: later,
            p_value: None,
            label: Label::FailToReject,
        });
    }
    Ok(BlanketResult {
        blanket: Blanket(m),
        hypotheses,
        exhausted,
    })
}

/// Runs the blanket loop against a predictor in place of the test.
pub fn predict_blanket(p: &BlanketPredictor, bin: &FeatureBin, gamma: usize) -> Blanket {
    if gamma == 0 {
        return Blanket(0);
    }
    let mut m = 1;
    while m < gamma && p.predict(bin, m) == Label::Reject {
        m += 1;
    }
    Blanket(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocId;

    /// Rejects exactly the lags listed.
    struct Scripted(Vec<usize>);

    impl CiTest for Scripted {
        fn p_value(&self, _: &CiSample, target: usize, _: &[usize], _: u64) -> Result<f64> {
            Ok(if self.0.contains(&(target - 1)) { 0.0 } else { 1.0 })
        }
    }

    fn sample(gamma: usize) -> CiSample {
        CiSample::new(gamma, vec![vec![LocId(0); gamma + 1]; 10]).unwrap()
    }

    #[test]
    fn loop_follows_the_published_order() {
        let r = identify_blanket_with(&Scripted(vec![]), &sample(4), 4, 0).unwrap();
        assert_eq!(r.blanket, Blanket::new(1));
        assert!(!r.exhausted);
        let labels: Vec<_> = r
            .hypotheses
            .iter()
            .map(|h| (h.m, h.label, h.p_value.is_some()))
            .collect();
        assert_eq!(
            labels,
            vec![
                (1, Label::FailToReject, true),
                (2, Label::FailToReject, false),
                (3, Label::FailToReject, false)
            ]
        );
        let r = identify_blanket_with(&Scripted(vec![1]), &sample(4), 4, 0).unwrap();
        assert_eq!(r.blanket, Blanket::new(2));
        assert_eq!(r.hypotheses[0].label, Label::Reject);
        // a later rejection is never reached once the loop stops
        let r = identify_blanket_with(&Scripted(vec![2]), &sample(4), 4, 0).unwrap();
        assert_eq!(r.blanket, Blanket::new(1));
        let r = identify_blanket_with(&Scripted(vec![1, 2, 3]), &sample(4), 4, 0).unwrap();
        assert_eq!(r.blanket, Blanket::new(4));
        assert!(r.exhausted);
    }

    #[test]
    fn gamma_one_is_always_first_lag() {
        let r = identify_blanket_with(&Scripted(vec![1, 2]), &sample(1), 1, 0).unwrap();
        assert_eq!(r.blanket, Blanket::new(1));
        assert!(r.hypotheses.is_empty());
        assert!(identify_blanket(&sample(2), 0, 0).is_err());
        assert!(identify_blanket(&sample(1), 2, 0).is_err());
    }

    #[test]
    fn display_lists_lags() {
        assert_eq!(Blanket::new(2).to_string(), "{t-1,t-2}");
        assert_eq!(Blanket::new(0).to_string(), "{}");
    }
}
