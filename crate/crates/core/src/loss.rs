//! Contingency tables and the multivariate losses the trainer optimizes.
//!
//! All losses except Hamming live on the 0–100 scale (100·(1−measure));
//! Hamming is the raw error count 2(b+c), which keeps the equivalence with
//! a plain SVM intact. Averaging by 1/n is applied by the training layer,
//! not here.

use crate::error::{Error, Result};
use std::fmt;

/// Counts of a predicted labeling against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    /// true positives (a)
    pub tpc: usize,
    /// false positives (b)
    pub fpc: usize,
    /// false negatives (c)
    pub fnc: usize,
    /// true negatives (d)
    pub tnc: usize,
}

impl ContingencyTable {
    pub fn new(tpc: usize, fpc: usize, fnc: usize, tnc: usize) -> Self {
        Self { tpc, fpc, fnc, tnc }
    }

    pub fn from_labels(y_true: &[i8], y_pred: &[i8]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Data(format!(
                "label length mismatch: {} vs {}",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut t = Self::new(0, 0, 0, 0);
        for (&yt, &yp) in y_true.iter().zip(y_pred) {
            match (yt, yp) {
                (1, 1) => t.tpc += 1,
                (-1, 1) => t.fpc += 1,
                (1, -1) => t.fnc += 1,
                (-1, -1) => t.tnc += 1,
                _ => return Err(Error::Data(format!("labels must be ±1, got ({yt}, {yp})"))),
            }
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.tpc + self.fpc + self.fnc + self.tnc
    }

    /// Number of true positives in the sample (p).
    pub fn positives(&self) -> usize {
        self.tpc + self.fnc
    }

    /// Number of true negatives in the sample (q).
    pub fn negatives(&self) -> usize {
        self.fpc + self.tnc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Hamming,
    FBeta,
    PrecAtK,
    RecAtK,
    Prbep,
}

/// Which multivariate loss to optimize, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    beta: f64,
    k: usize,
}

impl LossSpec {
    pub fn hamming() -> Self {
        Self {
            kind: LossKind::Hamming,
            beta: 1.0,
            k: 0,
        }
    }

    pub fn f1() -> Self {
        Self::fbeta(1.0).expect("beta 1.0 is valid")
    }

    pub fn fbeta(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            kind: LossKind::FBeta,
            beta,
            k: 0,
        })
    }

    pub fn prec_at(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(Self {
            kind: LossKind::PrecAtK,
            beta: 1.0,
            k,
        })
    }

    pub fn rec_at(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(Self {
            kind: LossKind::RecAtK,
            beta: 1.0,
            k,
        })
    }

    pub fn prbep() -> Self {
        Self {
            kind: LossKind::Prbep,
            beta: 1.0,
            k: 0,
        }
    }

    /// Builds a spec from the CLI-facing name plus optional parameters.
    pub fn from_cli(name: &str, beta: Option<f64>, k: Option<usize>) -> Result<Self> {
        match name {
            "hamming" => Ok(Self::hamming()),
            "f1" => Ok(Self::f1()),
            "fbeta" => Self::fbeta(beta.ok_or_else(|| {
                Error::Config("loss 'fbeta' requires --beta".into())
            })?),
            "prec@k" => Self::prec_at(k.ok_or_else(|| {
                Error::Config("loss 'prec@k' requires --k".into())
            })?),
            "rec@k" => Self::rec_at(k.ok_or_else(|| {
                Error::Config("loss 'rec@k' requires --k".into())
            })?),
            "prbep" => Ok(Self::prbep()),
            other => Err(Error::Config(format!(
                "unknown loss '{other}' (expected hamming|f1|fbeta|prec@k|rec@k|prbep)"
            ))),
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Checks sample-size constraints that can only be verified once the
    /// dataset is known (k ≤ n for the @k losses).
    pub fn bind(&self, n: usize) -> Result<()> {
        match self.kind {
            LossKind::PrecAtK | LossKind::RecAtK if self.k > n => Err(Error::Config(format!(
                "k = {} exceeds the number of examples n = {n}",
                self.k
            ))),
            _ => Ok(()),
        }
    }

    /// Whether a table is admissible for this loss.
    pub fn admissible(&self, t: &ContingencyTable) -> bool {
        match self.kind {
            LossKind::Hamming | LossKind::FBeta => true,
            LossKind::PrecAtK | LossKind::RecAtK => t.tpc + t.fpc == self.k,
            LossKind::Prbep => t.fpc == t.fnc,
        }
    }

    /// Loss of an admissible table; errors on inadmissible input.
    pub fn loss_value(&self, t: &ContingencyTable) -> Result<f64> {
        if !self.admissible(t) {
            return Err(Error::Data(format!(
                "table (a={}, b={}, c={}, d={}) inadmissible for {self}",
                t.tpc, t.fpc, t.fnc, t.tnc
            )));
        }
        Ok(self.loss_from_counts(t.tpc, t.fpc, t.fnc, t.tnc))
    }

    /// Loss from raw counts without the admissibility check; the hot path
    /// for the label-oracle grid, which enumerates admissible (a, b) only.
    #[inline]
    pub fn loss_from_counts(&self, a: usize, b: usize, c: usize, _d: usize) -> f64 {
        debug_assert!(self.admissible(&ContingencyTable::new(a, b, c, _d)));
        let (af, bf, cf) = (a as f64, b as f64, c as f64);
        match self.kind {
            LossKind::Hamming => 2.0 * (bf + cf),
            LossKind::FBeta => {
                let b2 = self.beta * self.beta;
                let denom = (1.0 + b2) * af + bf + b2 * cf;
                if denom == 0.0 {
                    // empty true-positive set predicted empty: perfect
                    0.0
                } else {
                    100.0 * (1.0 - (1.0 + b2) * af / denom)
                }
            }
            LossKind::PrecAtK => 100.0 * (1.0 - af / (af + bf)),
            LossKind::RecAtK => {
                if a + c == 0 {
                    0.0
                } else {
                    100.0 * (1.0 - af / (af + cf))
                }
            }
            LossKind::Prbep => {
                if a + b == 0 {
                    0.0
                } else {
                    100.0 * (1.0 - af / (af + bf))
                }
            }
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Hamming => write!(f, "hamming"),
            LossKind::FBeta if self.beta == 1.0 => write!(f, "f1"),
            LossKind::FBeta => write!(f, "fbeta(beta={})", self.beta),
            LossKind::PrecAtK => write!(f, "prec@{}", self.k),
            LossKind::RecAtK => write!(f, "rec@{}", self.k),
            LossKind::Prbep => write!(f, "prbep"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_loss_hand_case() {
        let spec = LossSpec::f1();
        let t = ContingencyTable::new(2, 1, 1, 0);
        // F1 = 4/6, loss = 100·(1 − 2/3)
        let loss = spec.loss_value(&t).unwrap();
        assert!((loss - 100.0 / 3.0).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn f1_perfect_prediction_is_zero() {
        let spec = LossSpec::f1();
        let t = ContingencyTable::new(5, 0, 0, 3);
        assert_eq!(spec.loss_value(&t).unwrap(), 0.0);
    }

    #[test]
    fn prec_at_k_hand_case() {
        let spec = LossSpec::prec_at(3).unwrap();
        let t = ContingencyTable::new(2, 1, 4, 2);
        let loss = spec.loss_value(&t).unwrap();
        assert!((loss - 100.0 / 3.0).abs() < 1e-12);
        // a+b ≠ k is inadmissible
        let bad = ContingencyTable::new(2, 2, 4, 2);
        assert!(spec.loss_value(&bad).is_err());
    }

    #[test]
    fn prbep_hand_case() {
        let spec = LossSpec::prbep();
        let t = ContingencyTable::new(3, 2, 2, 1);
        assert!((spec.loss_value(&t).unwrap() - 40.0).abs() < 1e-12);
        let bad = ContingencyTable::new(3, 2, 1, 1);
        assert!(spec.loss_value(&bad).is_err());
    }

    #[test]
    fn hamming_uses_error_count_scale() {
        let spec = LossSpec::hamming();
        let t = ContingencyTable::new(3, 2, 4, 1);
        assert_eq!(spec.loss_value(&t).unwrap(), 12.0); // 2·(2+4)
        assert_eq!(
            spec.loss_value(&ContingencyTable::new(3, 0, 0, 7)).unwrap(),
            0.0
        );
        // fully inverted prediction: maximal 2n
        let inv = ContingencyTable::new(0, 7, 3, 0);
        assert_eq!(spec.loss_value(&inv).unwrap(), 20.0);
    }

    #[test]
    fn table_from_labels_hand_cases() {
        let y = [1, 1, -1];
        let t = ContingencyTable::from_labels(&y, &[1, -1, -1]).unwrap();
        assert_eq!(t, ContingencyTable::new(1, 0, 1, 1));
        let same = ContingencyTable::from_labels(&y, &y).unwrap();
        assert_eq!(same, ContingencyTable::new(2, 0, 0, 1));
        let inv = ContingencyTable::from_labels(&y, &[-1, -1, 1]).unwrap();
        assert_eq!(inv, ContingencyTable::new(0, 1, 2, 0));
        assert!(ContingencyTable::from_labels(&y, &[1, 1]).is_err());
    }

    #[test]
    fn fbeta_extremes() {
        for beta in [0.5, 1.0, 2.0] {
            let spec = LossSpec::fbeta(beta).unwrap();
            // zero loss iff b = c = 0 with a > 0
            assert_eq!(spec.loss_from_counts(4, 0, 0, 2), 0.0);
            assert!(spec.loss_from_counts(4, 1, 0, 2) > 0.0);
            assert!(spec.loss_from_counts(4, 0, 1, 2) > 0.0);
            // loss 100 iff a = 0 with p > 0
            assert_eq!(spec.loss_from_counts(0, 2, 3, 1), 100.0);
        }
        assert!(LossSpec::fbeta(0.0).is_err());
        assert!(LossSpec::fbeta(-1.0).is_err());
    }

    #[test]
    fn cli_names_round_trip() {
        assert_eq!(LossSpec::from_cli("f1", None, None).unwrap(), LossSpec::f1());
        assert_eq!(
            LossSpec::from_cli("hamming", None, None).unwrap(),
            LossSpec::hamming()
        );
        assert_eq!(
            LossSpec::from_cli("fbeta", Some(2.0), None).unwrap(),
            LossSpec::fbeta(2.0).unwrap()
        );
        assert_eq!(
            LossSpec::from_cli("prec@k", None, Some(5)).unwrap(),
            LossSpec::prec_at(5).unwrap()
        );
        assert!(LossSpec::from_cli("prec@k", None, None).is_err());
        assert!(LossSpec::from_cli("auc", None, None).is_err());
        // non-FBeta kinds ignore beta entirely
        let a = LossSpec::from_cli("prbep", Some(3.0), None).unwrap();
        let t = ContingencyTable::new(2, 1, 1, 2);
        assert_eq!(
            a.loss_value(&t).unwrap(),
            LossSpec::prbep().loss_value(&t).unwrap()
        );
    }

    #[test]
    fn bind_checks_k() {
        assert!(LossSpec::prec_at(5).unwrap().bind(4).is_err());
        assert!(LossSpec::prec_at(5).unwrap().bind(5).is_ok());
        assert!(LossSpec::f1().bind(1).is_ok());
    }

    proptest! {
        #[test]
        fn scaled_losses_stay_in_range(
            a in 0usize..20, b in 0usize..20, c in 0usize..20, d in 0usize..20,
            beta in 0.25f64..4.0,
        ) {
            // Hamming is on the raw-count scale and excluded here.
            let specs = [
                LossSpec::fbeta(beta).unwrap(),
                LossSpec::prec_at(a + b).unwrap_or(LossSpec::f1()),
                LossSpec::rec_at(a + b).unwrap_or(LossSpec::f1()),
                LossSpec::prbep(),
            ];
            for spec in specs {
                let t = ContingencyTable::new(
                    a,
                    b,
                    if spec.kind() == LossKind::Prbep { b } else { c },
                    d,
                );
                if spec.admissible(&t) {
                    let v = spec.loss_value(&t).unwrap();
                    prop_assert!((0.0..=100.0).contains(&v), "{spec}: {v}");
                }
            }
        }
    }
}
