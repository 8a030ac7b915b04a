//! Recurrence and cross-recurrence plots, RQA measures, PGM rendering.
//!
//! A plot thresholds pairwise Euclidean distances between embedded states:
//! cell `(i, j)` is 1 when `||a_i - b_j|| <= epsilon`. Distances exactly at
//! the threshold count as recurrent, and comparisons run on squared
//! distances so no square root is taken in the hot loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::bitmat::BitMatrix;
use crate::embedding::EmbeddedSeries;

#[derive(Debug, Error)]
pub enum RecurrenceError {
    #[error("embedded widths differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is {rows}x{cols}, need square for a diagonal")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has no cells")]
    EmptyMatrix,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// A series against itself. The main diagonal is identically 1 and is
    /// excluded from RQA measures.
    SelfRp,
    /// Two different series; the diagonal is data.
    CrossRp,
}

#[derive(Clone, Debug)]
pub struct RecurrenceMatrix {
    pub bits: BitMatrix,
    pub epsilon: f64,
    pub kind: MatrixKind,
}

/// Low-level distance-threshold kernels. Public so the benchmark suite can
/// time the sequential and parallel variants against each other; pipeline
/// code goes through [`recurrence_plot`] and [`cross_recurrence_plot`].
pub mod kernel {
    use super::BitMatrix;

    /// Fills one row's words: bit `j` is set when the squared distance
    /// between `a_row` and state `j` of `b` is at most `eps2`. Walking a
    /// 64-column block per word keeps the inner loop branch-free and the
    /// written word in a register.
    fn fill_row(a_row: &[f64], b: &[f64], width: usize, cols: usize, eps2: f64, out: &mut [u64]) {
        for (wi, word) in out.iter_mut().enumerate() {
            let j0 = wi * 64;
            let jn = (j0 + 64).min(cols);
            let mut bits = 0u64;
            for j in j0..jn {
                let b_row = &b[j * width..j * width + width];
                let mut d2 = 0.0;
                for t in 0..width {
                    let d = a_row[t] - b_row[t];
                    d2 += d * d;
                }
                bits |= u64::from(d2 <= eps2) << (j - j0);
            }
            *word = bits;
        }
    }

    pub fn crp_bits_seq(a: &[f64], b: &[f64], width: usize, eps: f64) -> BitMatrix {
        assert!(width > 0 && a.len() % width == 0 && b.len() % width == 0);
        let rows = a.len() / width;
        let cols = b.len() / width;
        let wpr = cols.div_ceil(64);
        let mut words = vec![0u64; rows * wpr];
        for (i, out) in words.chunks_mut(wpr.max(1)).enumerate().take(rows) {
            fill_row(&a[i * width..(i + 1) * width], b, width, cols, eps * eps, out);
        }
        BitMatrix::from_words(rows, cols, words)
    }

    #[cfg(feature = "parallel")]
    pub fn crp_bits_par(a: &[f64], b: &[f64], width: usize, eps: f64) -> BitMatrix {
        use rayon::prelude::*;
        assert!(width > 0 && a.len() % width == 0 && b.len() % width == 0);
        let rows = a.len() / width;
        let cols = b.len() / width;
        let wpr = cols.div_ceil(64);
        let mut words = vec![0u64; rows * wpr];
        if wpr > 0 {
            words
                .par_chunks_mut(wpr)
                .enumerate()
                .for_each(|(i, out)| {
                    fill_row(&a[i * width..(i + 1) * width], b, width, cols, eps * eps, out)
                });
        }
        BitMatrix::from_words(rows, cols, words)
    }

    /// Rows split across threads when the `parallel` feature is on. Each row
    /// is written independently, so both variants produce identical bits.
    pub fn crp_bits(a: &[f64], b: &[f64], width: usize, eps: f64) -> BitMatrix {
        #[cfg(feature = "parallel")]
        {
            crp_bits_par(a, b, width, eps)
        }
        #[cfg(not(feature = "parallel"))]
        {
            crp_bits_seq(a, b, width, eps)
        }
    }
}

/// Self-recurrence plot of one embedded series.
pub fn recurrence_plot(e: &EmbeddedSeries, epsilon: f64) -> RecurrenceMatrix {
    assert!(epsilon > 0.0 && epsilon.is_finite(), "epsilon must be positive");
    RecurrenceMatrix {
        bits: kernel::crp_bits(e.states(), e.states(), e.width(), epsilon),
        epsilon,
        kind: MatrixKind::SelfRp,
    }
}

/// Cross-recurrence plot of two embedded series sharing one state space.
pub fn cross_recurrence_plot(
    a: &EmbeddedSeries,
    b: &EmbeddedSeries,
    epsilon: f64,
) -> Result<RecurrenceMatrix, RecurrenceError> {
    assert!(epsilon > 0.0 && epsilon.is_finite(), "epsilon must be positive");
    if a.width() != b.width() || a.params() != b.params() {
        return Err(RecurrenceError::DimensionMismatch {
            left: a.width(),
            right: b.width(),
        });
    }
    Ok(RecurrenceMatrix {
        bits: kernel::crp_bits(a.states(), b.states(), a.width(), epsilon),
        epsilon,
        kind: MatrixKind::CrossRp,
    })
}

/// The main diagonal as booleans: entry `t` says whether the two series'
/// states at time `t` are within the threshold. This is the label source
/// for prediction.
pub fn diagonal_targets(m: &RecurrenceMatrix) -> Result<Vec<bool>, RecurrenceError> {
    let (rows, cols) = (m.bits.rows(), m.bits.cols());
    if rows != cols {
        return Err(RecurrenceError::NotSquare { rows, cols });
    }
    Ok((0..rows).map(|i| m.bits.get(i, i)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RqaMeasures {
    /// Recurrence rate: share of recurrent cells.
    pub rr: f64,
    /// Determinism: share of recurrent cells on diagonal lines of length at
    /// least `l_min`.
    pub det: f64,
    /// Longest diagonal line.
    pub dmax: usize,
}

/// Diagonal-line statistics of a plot.
///
/// For a self plot the line of identity is excluded from every count,
/// including the recurrence-rate denominator. Empty matrices and all-zero
/// matrices yield zero rates rather than dividing by zero.
pub fn rqa_measures(m: &RecurrenceMatrix, l_min: usize) -> RqaMeasures {
    assert!(l_min >= 1, "l_min must be at least 1");
    let (rows, cols) = (m.bits.rows(), m.bits.cols());
    if rows == 0 || cols == 0 {
        return RqaMeasures { rr: 0.0, det: 0.0, dmax: 0 };
    }
    let skip_loi = m.kind == MatrixKind::SelfRp;
    let mut total = 0usize;
    let mut in_lines = 0usize;
    let mut dmax = 0usize;
    let mut close_run = |run: &mut usize| {
        if *run > 0 {
            total += *run;
            if *run >= l_min {
                in_lines += *run;
            }
            dmax = dmax.max(*run);
            *run = 0;
        }
    };
    for offset in -(rows as isize - 1)..=(cols as isize - 1) {
        if skip_loi && offset == 0 {
            continue;
        }
        let (mut i, mut j) = if offset >= 0 {
            (0usize, offset as usize)
        } else {
            ((-offset) as usize, 0usize)
        };
        let mut run = 0usize;
        while i < rows && j < cols {
            if m.bits.get(i, j) {
                run += 1;
            } else {
                close_run(&mut run);
            }
            i += 1;
            j += 1;
        }
        close_run(&mut run);
    }
    let denom = rows * cols - if skip_loi { rows.min(cols) } else { 0 };
    RqaMeasures {
        rr: if denom == 0 { 0.0 } else { total as f64 / denom as f64 },
        det: if total == 0 { 0.0 } else { in_lines as f64 / total as f64 },
        dmax,
    }
}

/// Writes the plot as a binary PGM image: recurrent cells black on white,
/// row 0 at the top.
pub fn render_pgm(m: &RecurrenceMatrix, path: &Path) -> Result<(), RecurrenceError> {
    let (rows, cols) = (m.bits.rows(), m.bits.cols());
    if rows == 0 || cols == 0 {
        return Err(RecurrenceError::EmptyMatrix);
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let mut row = vec![0u8; cols];
    for i in 0..rows {
        for (j, px) in row.iter_mut().enumerate() {
            *px = if m.bits.get(i, j) { 0 } else { 255 };
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}
