//! Bit-packed binary matrices.
//!
//! Recurrence plots are dense 0/1 matrices, often built by the thousand and
//! cached to disk, so they are stored one bit per cell. Each row occupies
//! `ceil(cols / 64)` little-endian `u64` words; bit `j` of a row lives in
//! word `j / 64` at bit position `j % 64`.

use std::fmt;

/// Row-major binary matrix with rows padded to whole 64-bit words.
///
/// Padding bits beyond `cols` are always zero. That invariant makes
/// whole-word comparison and popcounts valid, so `PartialEq` and
/// [`count_ones`](BitMatrix::count_ones) operate on words directly.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    /// Assembles a matrix from pre-filled row words. Callers must leave the
    /// padding bits of each row zero; this is checked in debug builds.
    pub(crate) fn from_words(rows: usize, cols: usize, words: Vec<u64>) -> Self {
        let words_per_row = cols.div_ceil(64);
        assert_eq!(words.len(), rows * words_per_row);
        let m = BitMatrix {
            rows,
            cols,
            words_per_row,
            words,
        };
        debug_assert!(m.padding_clear());
        m
    }

    fn padding_clear(&self) -> bool {
        let tail = self.cols % 64;
        if tail == 0 || self.words_per_row == 0 {
            return true;
        }
        let mask = !((1u64 << tail) - 1);
        (0..self.rows).all(|i| self.words[i * self.words_per_row + self.words_per_row - 1] & mask == 0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        let word = self.words[i * self.words_per_row + j / 64];
        word >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        let word = &mut self.words[i * self.words_per_row + j / 64];
        let bit = 1u64 << (j % 64);
        if value {
            *word |= bit;
        } else {
            *word &= !bit;
        }
    }

    /// Number of set cells in the whole matrix.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn transposed(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) {
                    t.set(j, i, true);
                }
            }
        }
        t
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                write!(f, "{}", if self.get(i, j) { '1' } else { '0' })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
