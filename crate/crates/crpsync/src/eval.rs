//! Confusion-matrix metrics and the (window, threshold) report grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions against {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("bad report line {line}: {reason}")]
    BadReport { line: usize, reason: String },
}

/// Counts and derived rates for one evaluation. Rates with an empty
/// denominator are 0 by convention: a model that never predicts the positive
/// class scores zero precision, not an error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Tallies binary predictions against targets.
pub fn confusion(predictions: &[bool], targets: &[bool]) -> Result<Metrics, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fn_ = 0;
    for (&p, &t) in predictions.iter().zip(targets) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Metrics {
        let ratio = |num: usize, denom: usize| {
            if denom == 0 {
                0.0
            } else {
                num as f64 / denom as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1,
        }
    }
}

/// Metrics per `(w, epsilon)` cell, ordered by window then threshold.
///
/// The text and CSV renderings round to three decimals; the full-precision
/// CSV is what [`GridReport::from_csv_full`] parses back, so a report on
/// disk can be extended one cell at a time across runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridReport {
    // Keyed by (w, epsilon bits); positive finite f64 bits order like the
    // numbers themselves.
    cells: BTreeMap<(usize, u64), Metrics>,
}

impl GridReport {
    pub fn new() -> GridReport {
        GridReport::default()
    }

    /// Inserts or replaces one cell.
    pub fn insert(&mut self, w: usize, epsilon: f64, metrics: Metrics) {
        assert!(epsilon > 0.0 && epsilon.is_finite(), "epsilon must be positive");
        self.cells.insert((w, epsilon.to_bits()), metrics);
    }

    pub fn get(&self, w: usize, epsilon: f64) -> Option<&Metrics> {
        self.cells.get(&(w, epsilon.to_bits()))
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, f64, &Metrics)> {
        self.cells
            .iter()
            .map(|((w, bits), m)| (*w, f64::from_bits(*bits), m))
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:>4} {:>8} {:>9} {:>10} {:>7} {:>6}",
            "w", "epsilon", "accuracy", "precision", "recall", "f1"
        )
        .unwrap();
        for (w, eps, m) in self.cells() {
            writeln!(
                out,
                "{w:>4} {eps:>8} {:>9.3} {:>10.3} {:>7.3} {:>6.3}",
                m.accuracy, m.precision, m.recall, m.f1
            )
            .unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        self.render_csv(false)
    }

    pub fn to_csv_full(&self) -> String {
        self.render_csv(true)
    }

    fn render_csv(&self, full: bool) -> String {
        let mut out = String::from("w,epsilon,accuracy,precision,recall,f1,tp,fp,tn,fn\n");
        for (w, eps, m) in self.cells() {
            if full {
                writeln!(
                    out,
                    "{w},{eps},{},{},{},{},{},{},{},{}",
                    m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn_
                )
                .unwrap();
            } else {
                writeln!(
                    out,
                    "{w},{eps},{:.3},{:.3},{:.3},{:.3},{},{},{},{}",
                    m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn_
                )
                .unwrap();
            }
        }
        out
    }

    /// Parses a full-precision CSV produced by [`GridReport::to_csv_full`].
    pub fn from_csv_full(text: &str) -> Result<GridReport, EvalError> {
        let mut report = GridReport::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| EvalError::BadReport {
                line: i + 1,
                reason: reason.into(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(bad("expected 10 fields"));
            }
            let w: usize = fields[0].parse().map_err(|_| bad("bad w"))?;
            let eps: f64 = fields[1].parse().map_err(|_| bad("bad epsilon"))?;
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(bad("bad epsilon"));
            }
            let counts: Vec<usize> = fields[6..10]
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("bad count"))?;
            // Rates are recomputed from counts; they are only stored for
            // readers.
            report.insert(w, eps, Metrics::from_counts(counts[0], counts[1], counts[2], counts[3]));
        }
        Ok(report)
    }
}
