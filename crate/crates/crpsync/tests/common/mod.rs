//! Fixtures and reference implementations shared by the integration suites.
//!
//! The `naive_*` functions are independent re-implementations of the
//! pipeline math, written as plain nested loops over `Vec` so the library's
//! packed kernels have something structurally different to agree with.

#![allow(dead_code)]

use std::path::Path;

use chrono::NaiveDate;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crpsync::bitmat::BitMatrix;
use crpsync::ingestion::{Channel, TimeSeries};

pub const TOY_A: [f64; 10] = [1.0, 2.0, 1.0, 1.0, 3.0, 4.0, 4.0, 2.0, 3.0, 3.0];
pub const TOY_B: [f64; 10] = [1.0, 3.0, 3.0, 3.0, 4.0, 2.0, 4.0, 2.0, 3.0, 3.0];

pub fn calendar(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
    (0..n as u64).map(|i| start + chrono::Days::new(i)).collect()
}

pub fn price_series(ticker: &str, values: &[f64]) -> TimeSeries {
    TimeSeries::new(
        ticker.to_string(),
        calendar(values.len()),
        vec![(Channel::Price, values.to_vec())],
    )
    .unwrap()
}

pub fn toy_pair() -> (TimeSeries, TimeSeries) {
    (price_series("A", &TOY_A), price_series("B", &TOY_B))
}

/// Two 3-channel series of length `len` whose synchronization alternates on
/// a fixed schedule: inside every 50-epoch cycle the first 20 epochs track
/// each other (small independent noise), the remaining 30 are phase-shifted
/// apart. The exact labels still come from the computed plot diagonal; the
/// schedule only guarantees both classes occur in temporal blocks.
pub fn coupled_pair(len: usize, seed: u64) -> (TimeSeries, TimeSeries) {
    let mut rng = StdRng::seed_from_u64(seed);
    let periods = [23.0, 41.0, 59.0];
    let phases = [0.0, 1.3, 2.1];
    let shifts = [0.7, 0.8, 0.9]; // of pi, per channel, while out of sync
    let mut a_channels = Vec::new();
    let mut b_channels = Vec::new();
    for c in 0..3 {
        let mut a = Vec::with_capacity(len);
        let mut b = Vec::with_capacity(len);
        for t in 0..len {
            let arg = 2.0 * std::f64::consts::PI * t as f64 / periods[c] + phases[c];
            let base = arg.sin();
            a.push(base + 0.05 * rng.gen_range(-1.0..1.0));
            if t % 50 < 20 {
                b.push(base + 0.05 * rng.gen_range(-1.0..1.0));
            } else {
                let detached = (arg + shifts[c] * std::f64::consts::PI).sin();
                b.push(detached + 0.05 * rng.gen_range(-1.0..1.0));
            }
        }
        a_channels.push(a);
        b_channels.push(b);
    }
    let wrap = |ticker: &str, ch: Vec<Vec<f64>>| {
        let mut it = ch.into_iter();
        TimeSeries::new(
            ticker.to_string(),
            calendar(len),
            vec![
                (Channel::Price, it.next().unwrap()),
                (Channel::Volume, it.next().unwrap()),
                (Channel::Return, it.next().unwrap()),
            ],
        )
        .unwrap()
    };
    (wrap("SYNA", a_channels), wrap("SYNB", b_channels))
}

/// Writes `n_tickers` CSV files (schema `date,adj_close,volume`) sharing one
/// calendar of `n_days` consecutive days. All tickers track one market
/// factor during global "on" blocks (26 of every 60 days, with a small
/// per-ticker schedule jitter) and wander off on ticker-specific
/// trajectories otherwise, so every pair alternates between tightly
/// synchronized blocks and detached blocks whose sine crossings produce
/// occasional loose near-misses. Returns the tickers in lexicographic
/// order.
pub fn market_csvs(dir: &Path, n_tickers: usize, n_days: usize, seed: u64) -> Vec<String> {
    assert!(n_tickers <= 99);
    let mut rng = StdRng::seed_from_u64(seed);
    let dates = calendar(n_days);
    let tau = std::f64::consts::TAU;
    // Prices and volumes are affine in the underlying signal, so the
    // pipeline's z-scores reproduce the signal geometry exactly.
    let factor_price: Vec<f64> = (0..n_days)
        .map(|t| {
            let t = t as f64;
            0.117 * (tau * t / 37.0 + 0.4).sin() + 0.067 * (tau * t / 91.0).cos()
        })
        .collect();
    let factor_volume: Vec<f64> = (0..n_days)
        .map(|t| {
            let t = t as f64;
            0.10 * (tau * t / 53.0 + 1.1).sin() + 0.05 * (tau * t / 29.0).cos()
        })
        .collect();

    let mut tickers = Vec::with_capacity(n_tickers);
    for i in 0..n_tickers {
        let ticker = format!("S{:02}", i + 1);
        // Distinct coupling offsets keep every pair's sync blocks at least 11
        // days long while giving each pair a stretch of one-sided epochs.
        let jitter = (13 * i) % 16;
        let mut rows = String::from("date,adj_close,volume\n");
        for (t, date) in dates.iter().enumerate() {
            let on = (t + jitter) % 60 < 26;
            // Coupled days track the shared factor. Detached days add an
            // idiosyncratic deviation redrawn every day; its norm is bimodal
            // in z-units: a near mode that straddles the loose recurrence
            // threshold (flickery cells there, none under the tight one) and
            // a far mode that keeps detached tickers from colliding below
            // the tight threshold. Loosening the threshold therefore buys
            // strictly noisier synchronization targets, and the deviations
            // carry no advance warning of the next coupling window.
            let (dev_price, dev_volume) = if on {
                (0.0, 0.0)
            } else {
                let r = if rng.gen_bool(0.50) {
                    rng.gen_range(0.55..0.95)
                } else {
                    rng.gen_range(1.4..2.4)
                };
                let angle = rng.gen_range(0.0..tau);
                (0.151 * r * angle.cos(), 0.126 * r * angle.sin())
            };
            let x_price = factor_price[t] + dev_price + 0.002 * rng.gen_range(-1.0..1.0);
            let x_volume = factor_volume[t] + dev_volume + 0.002 * rng.gen_range(-1.0..1.0);
            let price = 100.0 * (1.0 + x_price);
            let volume = (2e6 * (1.0 + x_volume)).round();
            rows.push_str(&format!("{date},{price:.6},{volume}\n"));
        }
        std::fs::write(dir.join(format!("{ticker}.csv")), rows).unwrap();
        tickers.push(ticker);
    }
    tickers
}

pub fn naive_zscore(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    x.iter().map(|v| (v - mean) / sigma).collect()
}

/// Channel-major delay embedding: state `i` holds, channel by channel, the
/// samples at `i, i + tau, ..., i + (k-1) tau`.
pub fn naive_embed(channels: &[Vec<f64>], k: usize, tau: usize) -> Vec<Vec<f64>> {
    let len = channels[0].len();
    let rows = len - tau * (k - 1);
    (0..rows)
        .map(|i| {
            let mut state = Vec::with_capacity(k * channels.len());
            for ch in channels {
                for j in 0..k {
                    state.push(ch[i + j * tau]);
                }
            }
            state
        })
        .collect()
}

/// Double-loop recurrence test, Euclidean, threshold inclusive.
pub fn naive_crp(a: &[Vec<f64>], b: &[Vec<f64>], epsilon: f64) -> Vec<Vec<bool>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                    d2.sqrt() <= epsilon
                })
                .collect()
        })
        .collect()
}

/// Exhaustive diagonal-line statistics: recurrence rate, determinism with
/// minimum line length `l_min`, and the longest line. With `exclude_loi`
/// the main diagonal contributes to nothing, including the rate's
/// denominator.
pub fn naive_rqa(grid: &[Vec<bool>], l_min: usize, exclude_loi: bool) -> (f64, f64, usize) {
    let rows = grid.len();
    let cols = if rows == 0 { 0 } else { grid[0].len() };
    if rows == 0 || cols == 0 {
        return (0.0, 0.0, 0);
    }
    let mut ones = 0usize;
    let mut in_lines = 0usize;
    let mut dmax = 0usize;
    for offset in -(rows as isize - 1)..cols as isize {
        if exclude_loi && offset == 0 {
            continue;
        }
        let mut run = 0usize;
        let mut close_run = |run: &mut usize| {
            if *run >= l_min {
                in_lines += *run;
            }
            dmax = dmax.max(*run);
            *run = 0;
        };
        for i in 0..rows {
            let j = i as isize + offset;
            if j < 0 || j >= cols as isize {
                continue;
            }
            if grid[i][j as usize] {
                ones += 1;
                run += 1;
            } else {
                close_run(&mut run);
            }
        }
        close_run(&mut run);
    }
    let denom = if exclude_loi {
        rows * cols - rows.min(cols)
    } else {
        rows * cols
    };
    let rr = if denom == 0 { 0.0 } else { ones as f64 / denom as f64 };
    let det = if ones == 0 { 0.0 } else { in_lines as f64 / ones as f64 };
    (rr, det, dmax)
}

pub fn grid_of(bits: &BitMatrix) -> Vec<Vec<bool>> {
    (0..bits.rows())
        .map(|i| (0..bits.cols()).map(|j| bits.get(i, j)).collect())
        .collect()
}

/// F1 of the constant-positive and constant-negative classifiers.
pub fn baseline_f1(targets: &[bool]) -> (f64, f64) {
    let p = targets.iter().filter(|t| **t).count();
    let n = targets.len();
    let all_positive = if p == 0 {
        0.0
    } else {
        2.0 * p as f64 / (n + p) as f64
    };
    (all_positive, 0.0)
}
