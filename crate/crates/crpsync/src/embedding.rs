//! Normalization and time-delay embedding.
//!
//! States are compared by Euclidean distance downstream, so channels with
//! wildly different scales (price vs volume) must be z-scored first or one
//! channel dominates the threshold. Embedding then stacks `k` delayed copies
//! of each channel so a state carries `tau`-spaced history.
//!
//! [`estimate_delay_ami`] and [`estimate_dimension_fnn`] are diagnostics for
//! choosing `tau` and `k`; runs take both from configuration.

use thiserror::Error;

use crate::ingestion::TimeSeries;
use crate::par::map_indices;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("series too short: need at least {needed} observations, have {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("{0} has zero variance")]
    ZeroVariance(String),
}

/// Delay-embedding parameters: `k` copies spaced `tau` observations apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingParams {
    pub k: usize,
    pub tau: usize,
}

impl EmbeddingParams {
    pub fn new(k: usize, tau: usize) -> EmbeddingParams {
        assert!(k >= 1, "embedding dimension k must be at least 1");
        assert!(tau >= 1, "embedding delay tau must be at least 1");
        EmbeddingParams { k, tau }
    }

    /// Rows a series of length `len` yields: `len - tau * (k - 1)`, or zero.
    pub fn embedded_len(&self, len: usize) -> usize {
        len.saturating_sub(self.tau * (self.k - 1))
    }
}

/// A series after delay embedding: `rows` states of `width = k * d` values.
///
/// A state is channel-major: each channel contributes its `k` delayed samples
/// as one contiguous run, channels in canonical order. Distances are
/// permutation-invariant, so the layout only matters for reading states back.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSeries {
    states: Vec<f64>,
    rows: usize,
    width: usize,
    params: EmbeddingParams,
}

impl EmbeddedSeries {
    /// Wraps raw state vectors that were built elsewhere.
    pub fn from_states(states: Vec<f64>, width: usize, params: EmbeddingParams) -> EmbeddedSeries {
        assert!(width > 0 && states.len() % width == 0, "states must be whole rows");
        EmbeddedSeries {
            rows: states.len() / width,
            states,
            width,
            params,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> EmbeddingParams {
        self.params
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.width..(i + 1) * self.width]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

/// Z-scores every channel with the population standard deviation.
///
/// A constant channel cannot be normalized and is an error here; windowed
/// dataset construction handles that case separately because a short window
/// of a legitimate series can easily be flat.
pub fn zscore(ts: &TimeSeries) -> Result<TimeSeries, EmbeddingError> {
    let mut out = Vec::with_capacity(ts.dim());
    for (channel, values) in ts.channels() {
        let z = zscore_values(values)
            .ok_or_else(|| EmbeddingError::ZeroVariance(format!("channel {channel}")))?;
        out.push(z);
    }
    Ok(ts.with_values(out))
}

/// `(x - mean) / sigma` with population sigma, or `None` when every value is
/// identical. The all-equal test is exact on purpose: a variance that merely
/// rounds to a tiny number still normalizes fine.
pub(crate) fn zscore_values(values: &[f64]) -> Option<Vec<f64>> {
    let first = *values.first()?;
    if values.iter().all(|v| *v == first) {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    Some(values.iter().map(|v| (v - mean) / sigma).collect())
}

/// Delay-embeds all channels of `ts`.
pub fn embed(ts: &TimeSeries, params: EmbeddingParams) -> Result<EmbeddedSeries, EmbeddingError> {
    let span = params.tau * (params.k - 1);
    let rows = params.embedded_len(ts.len());
    if rows == 0 {
        return Err(EmbeddingError::SeriesTooShort {
            needed: span + 1,
            actual: ts.len(),
        });
    }
    let width = params.k * ts.dim();
    let mut states = Vec::with_capacity(rows * width);
    for i in 0..rows {
        for (_, values) in ts.channels() {
            for g in 0..params.k {
                states.push(values[i + g * params.tau]);
            }
        }
    }
    Ok(EmbeddedSeries {
        states,
        rows,
        width,
        params,
    })
}

/// Average-mutual-information curve and the delay it suggests.
#[derive(Clone, Debug)]
pub struct DelayEstimate {
    pub tau: usize,
    /// `curve[l - 1]` is the mutual information between `x_t` and `x_{t+l}`.
    pub curve: Vec<f64>,
    /// False when the curve never turned upward within `max_lag`.
    pub minimum_found: bool,
}

/// Picks the embedding delay as the first local minimum of the average
/// mutual information between the series and its lagged copy.
///
/// Mutual information uses an equal-width joint histogram with
/// `ceil(sqrt(T))` bins per axis and natural logarithms. The first lag `l`
/// with `mi(l+1) >= mi(l)` wins; a curve that only decreases yields
/// `max_lag` with `minimum_found = false` and a logged warning.
pub fn estimate_delay_ami(x: &[f64], max_lag: usize) -> Result<DelayEstimate, EmbeddingError> {
    assert!(max_lag >= 1, "max_lag must be at least 1");
    // mi(max_lag) still needs at least two pairs to say anything.
    if x.len() < max_lag + 2 {
        return Err(EmbeddingError::SeriesTooShort {
            needed: max_lag + 2,
            actual: x.len(),
        });
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(EmbeddingError::ZeroVariance("series".into()));
    }
    let bins = (x.len() as f64).sqrt().ceil() as usize;
    let bin_of = |v: f64| -> usize {
        let b = ((v - lo) / (hi - lo) * bins as f64) as usize;
        b.min(bins - 1)
    };

    let curve: Vec<f64> = (1..=max_lag)
        .map(|lag| {
            let pairs = x.len() - lag;
            let mut joint = vec![0usize; bins * bins];
            for t in 0..pairs {
                joint[bin_of(x[t]) * bins + bin_of(x[t + lag])] += 1;
            }
            let mut row = vec![0usize; bins];
            let mut col = vec![0usize; bins];
            for i in 0..bins {
                for j in 0..bins {
                    row[i] += joint[i * bins + j];
                    col[j] += joint[i * bins + j];
                }
            }
            let n = pairs as f64;
            let mut mi = 0.0;
            for i in 0..bins {
                for j in 0..bins {
                    let c = joint[i * bins + j];
                    if c > 0 {
                        let p = c as f64 / n;
                        mi += p * (p * n * n / (row[i] as f64 * col[j] as f64)).ln();
                    }
                }
            }
            mi
        })
        .collect();

    for lag in 1..max_lag {
        if curve[lag] >= curve[lag - 1] {
            return Ok(DelayEstimate {
                tau: lag,
                curve,
                minimum_found: true,
            });
        }
    }
    log::warn!("mutual information still falling at lag {max_lag}; using max_lag as the delay");
    Ok(DelayEstimate {
        tau: max_lag,
        curve,
        minimum_found: false,
    })
}

/// False-nearest-neighbor fractions and the dimension they suggest.
#[derive(Clone, Debug)]
pub struct DimensionEstimate {
    pub k: usize,
    /// `fractions[k - 1]` is the false-neighbor share at dimension `k`.
    pub fractions: Vec<f64>,
    /// False when no dimension up to `max_k` got under the 1% threshold.
    pub converged: bool,
}

const FNN_RATIO_TOL: f64 = 10.0;
const FNN_CONVERGED: f64 = 0.01;

/// Picks the embedding dimension by the false-nearest-neighbor criterion.
///
/// The series is z-scored internally. For each candidate dimension `k`, each
/// state's nearest neighbor (ties to the lowest index) is tested: the
/// neighbor is false when adding the next delayed coordinate stretches the
/// pair by more than 10x its dimension-`k` distance, or when the pair
/// coincides at dimension `k` but separates at `k + 1`. The first `k` with
/// under 1% false neighbors wins; otherwise `max_k` is returned with
/// `converged = false` and a logged warning.
pub fn estimate_dimension_fnn(
    x: &[f64],
    tau: usize,
    max_k: usize,
) -> Result<DimensionEstimate, EmbeddingError> {
    assert!(tau >= 1, "tau must be at least 1");
    assert!(max_k >= 1, "max_k must be at least 1");
    let z = zscore_values(x).ok_or_else(|| EmbeddingError::ZeroVariance("series".into()))?;
    // Dimension max_k needs states with a continuation coordinate.
    let needed = max_k * tau + 2;
    if x.len() < needed {
        return Err(EmbeddingError::SeriesTooShort {
            needed,
            actual: x.len(),
        });
    }

    let mut fractions = Vec::with_capacity(max_k);
    for k in 1..=max_k {
        let n_points = z.len() - k * tau;
        let false_count: usize = map_indices(n_points, |i| {
            let mut best = usize::MAX;
            let mut best_d2 = f64::INFINITY;
            for j in 0..n_points {
                if j == i {
                    continue;
                }
                let mut d2 = 0.0;
                for g in 0..k {
                    let d = z[i + g * tau] - z[j + g * tau];
                    d2 += d * d;
                }
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = j;
                }
            }
            let extra = (z[i + k * tau] - z[best + k * tau]).abs();
            let d = best_d2.sqrt();
            let is_false = if d == 0.0 {
                extra > 0.0
            } else {
                extra / d > FNN_RATIO_TOL
            };
            usize::from(is_false)
        })
        .into_iter()
        .sum();
        let fraction = false_count as f64 / n_points as f64;
        fractions.push(fraction);
        if fraction < FNN_CONVERGED {
            return Ok(DimensionEstimate {
                k,
                fractions,
                converged: true,
            });
        }
    }
    log::warn!("false-neighbor fraction never fell under 1% up to k={max_k}");
    Ok(DimensionEstimate {
        k: max_k,
        fractions,
        converged: false,
    })
}
