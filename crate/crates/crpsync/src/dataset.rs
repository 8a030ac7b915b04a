//! Supervised examples from sliding windows over an aligned pair.
//!
//! Example `e` is the cross-recurrence plot of the `w` observations starting
//! at index `e`, z-scored within the window alone, labelled with entry
//! `e + w` of the full-series plot diagonal. The label therefore describes
//! the day after the window ends and is computed from the full-series
//! normalization, while the input sees only in-window statistics. A window
//! plot is deliberately not a submatrix of the full plot: re-normalizing per
//! window is what makes examples comparable across time, and a test below
//! pins that distinction down.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::bitmat::BitMatrix;
use crate::embedding::{embed, zscore, zscore_values, EmbeddingError, EmbeddingParams};
use crate::ingestion::{Channel, TimeSeries};
use crate::par::map_indices;
use crate::recurrence::{cross_recurrence_plot, diagonal_targets, kernel, RecurrenceError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("series too short: {0}")]
    SeriesTooShort(String),
    #[error("pair is not aligned: {0}")]
    NotAligned(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("train split contains a single class")]
    SingleClass,
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Recurrence(#[from] RecurrenceError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: bad dataset cache: {reason}")]
    BadCache { path: PathBuf, reason: String },
}

/// Window length, embedding, and recurrence threshold for one dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowConfig {
    pub w: usize,
    pub embedding: EmbeddingParams,
    pub epsilon: f64,
}

impl WindowConfig {
    pub fn new(w: usize, embedding: EmbeddingParams, epsilon: f64) -> WindowConfig {
        assert!(epsilon > 0.0 && epsilon.is_finite(), "epsilon must be positive");
        WindowConfig { w, embedding, epsilon }
    }

    /// Side length of a window plot: embedding eats `tau * (k - 1)` rows.
    pub fn window_side(&self) -> usize {
        self.embedding.embedded_len(self.w)
    }
}

/// Directory name a dataset with this configuration is cached under.
pub fn cache_dir_name(cfg: &WindowConfig) -> String {
    format!(
        "w{}_eps{}_k{}_tau{}",
        cfg.w, cfg.epsilon, cfg.embedding.k, cfg.embedding.tau
    )
}

/// One supervised example: a window plot and the next day's diagonal entry.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: BitMatrix,
    pub target: bool,
    pub pair: Arc<(String, String)>,
    /// Index into the full-series embedded timeline of the diagonal entry
    /// this example predicts. Strictly increasing within a pair.
    pub target_index: usize,
}

/// Temporally split examples plus the train-frequency class weights.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    /// `(weight of class 0, weight of class 1)`, `n / (2 * n_c)` over the
    /// train split; `(1, 1)` when train is single-class.
    pub class_weights: (f64, f64),
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds every window example of one aligned pair.
///
/// Windows with a constant channel are z-scored to all zeros for that
/// channel (a flat week of volume is data, not an error) and counted in a
/// single warning; the full series having a constant channel is an error
/// because the labels would be meaningless.
pub fn build_pair_examples(
    a: &TimeSeries,
    b: &TimeSeries,
    cfg: &WindowConfig,
) -> Result<Vec<Example>, DatasetError> {
    if a.dates() != b.dates() {
        return Err(DatasetError::NotAligned(format!(
            "{} and {} disagree on dates",
            a.ticker(),
            b.ticker()
        )));
    }
    let channels_a: Vec<Channel> = a.channels().map(|(c, _)| c).collect();
    let channels_b: Vec<Channel> = b.channels().map(|(c, _)| c).collect();
    if channels_a != channels_b {
        return Err(DatasetError::NotAligned(format!(
            "{} and {} carry different channels",
            a.ticker(),
            b.ticker()
        )));
    }

    let side = cfg.window_side();
    if side < 2 {
        return Err(DatasetError::SeriesTooShort(format!(
            "w={} embeds to a {side}-row window at k={}, tau={}; need at least 2",
            cfg.w, cfg.embedding.k, cfg.embedding.tau
        )));
    }

    let za = zscore(a)?;
    let zb = zscore(b)?;
    let ea = embed(&za, cfg.embedding)?;
    let eb = embed(&zb, cfg.embedding)?;
    let v_prime = ea.rows();
    if v_prime <= cfg.w {
        return Err(DatasetError::SeriesTooShort(format!(
            "{} embedded days, need more than w={}",
            v_prime, cfg.w
        )));
    }
    let full = cross_recurrence_plot(&ea, &eb, cfg.epsilon)?;
    let diag = diagonal_targets(&full).expect("aligned pair embeds to a square plot");

    let pair = Arc::new((a.ticker().to_string(), b.ticker().to_string()));
    let n = v_prime - cfg.w;
    let built: Vec<(Example, Vec<Channel>, Vec<Channel>)> = map_indices(n, |e| {
        let (sa, zeroed_a) = window_states(a, e, cfg);
        let (sb, zeroed_b) = window_states(b, e, cfg);
        // Windows are the parallel unit, so each one runs the sequential
        // kernel.
        let input = kernel::crp_bits_seq(&sa, &sb, cfg.embedding.k * a.dim(), cfg.epsilon);
        let example = Example {
            input,
            target: diag[e + cfg.w],
            pair: Arc::clone(&pair),
            target_index: e + cfg.w,
        };
        (example, zeroed_a, zeroed_b)
    });

    let mut flat_windows: BTreeMap<(String, Channel), usize> = BTreeMap::new();
    let mut examples = Vec::with_capacity(n);
    for (example, zeroed_a, zeroed_b) in built {
        for c in zeroed_a {
            *flat_windows.entry((a.ticker().to_string(), c)).or_default() += 1;
        }
        for c in zeroed_b {
            *flat_windows.entry((b.ticker().to_string(), c)).or_default() += 1;
        }
        examples.push(example);
    }
    for ((ticker, channel), count) in flat_windows {
        log::warn!(
            "{ticker}: {count} window(s) of length {} have constant {channel}; z-scored to zeros",
            cfg.w
        );
    }
    Ok(examples)
}

fn window_states(ts: &TimeSeries, e: usize, cfg: &WindowConfig) -> (Vec<f64>, Vec<Channel>) {
    let crop = ts.slice(e..e + cfg.w);
    let mut zeroed = Vec::new();
    let mut values = Vec::with_capacity(crop.dim());
    for (c, vals) in crop.channels() {
        match zscore_values(vals) {
            Some(z) => values.push(z),
            None => {
                zeroed.push(c);
                values.push(vec![0.0; vals.len()]);
            }
        }
    }
    let embedded = embed(&crop.with_values(values), cfg.embedding)
        .expect("window side was validated before building");
    (embedded.states().to_vec(), zeroed)
}

/// Fraction rounded up, guarded against `n * frac` landing a hair under an
/// integer it mathematically equals (0.7 is not representable).
fn ceil_frac(n: usize, frac: f64) -> usize {
    ((n as f64) * frac - 1e-9).ceil().max(0.0) as usize
}

///// Splits one pair's examples at the `train_frac` point of their timeline:
/// an example is train+validation when its target epoch falls in the first
/// `ceil(train_frac * epochs)` epochs (epochs counted through the last
/// target), validation being the last `ceil(val_frac * that)` of the block,
/// and the remainder is test. For a windowed pair whose targets run from
/// `w` to `V' - 1` this puts exactly `ceil(train_frac * V') - w` examples
/// in train+validation, so the boundary is a calendar date, not an example
/// quantile. Earlier examples never see later ones' statistics.
pub fn split_temporal(
    mut examples: Vec<Example>,
    train_frac: f64,
    val_frac: f64,
) -> Result<SplitDataset, DatasetError> {
    assert!(train_frac > 0.0 && train_frac < 1.0, "train_frac must be in (0, 1)");
    assert!(val_frac > 0.0 && val_frac < 1.0, "val_frac must be in (0, 1)");
    examples.sort_by_key(|e| e.target_index);
    let n = examples.len();
    let epochs = examples.last().map_or(0, |e| e.target_index + 1);
    let boundary = ceil_frac(epochs, train_frac);
    let tv = examples.partition_point(|e| e.target_index < boundary);
    let val = ceil_frac(tv, val_frac);
    let train = tv - val;
    let test = n - tv;
    if train == 0 || val == 0 || test == 0 {
        return Err(DatasetError::TooFewExamples(format!(
            "{n} example(s) split into {train}/{val}/{test}"
        )));
    }
    let rest = examples.split_off(tv);
    let validation = examples.split_off(train);
    let class_weights = weights_or_uniform(&examples);
    Ok(SplitDataset {
        train: examples,
        validation,
        test: rest,
        class_weights,
    })
}

fn weights_or_uniform(train: &[Example]) -> (f64, f64) {
    let targets: Vec<bool> = train.iter().map(|e| e.target).collect();
    match class_weights(&targets) {
        Ok(w) => w,
        Err(_) => {
            log::warn!("train split is single-class; using uniform class weights");
            (1.0, 1.0)
        }
    }
}

/// Inverse-frequency class weights `n / (2 * n_c)`. A balanced set yields
/// `(1, 1)`; the weighted counts `n_0 * w_0 + n_1 * w_1` always sum to `n`.
pub fn class_weights(targets: &[bool]) -> Result<(f64, f64), DatasetError> {
    let n1 = targets.iter().filter(|t| **t).count();
    let n0 = targets.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(DatasetError::SingleClass);
    }
    let n = targets.len() as f64;
    Ok((n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)))
}

/// Concatenates per-pair splits in pair order and recomputes class weights
/// over the pooled train split. Split membership is untouched: an example
/// validates in the pool iff it validated in its own pair.
pub fn pool_pairs(
    parts: BTreeMap<(String, String), SplitDataset>,
) -> Result<SplitDataset, DatasetError> {
    if parts.is_empty() {
        return Err(DatasetError::TooFewExamples("no pairs to pool".into()));
    }
    let mut side: Option<usize> = None;
    let mut pooled = SplitDataset {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        class_weights: (1.0, 1.0),
    };
    for (key, part) in parts {
        for example in part
            .train
            .iter()
            .chain(&part.validation)
            .chain(&part.test)
        {
            let s = example.input.rows();
            match side {
                None => side = Some(s),
                Some(expect) if expect != s => {
                    return Err(DatasetError::ShapeMismatch(format!(
                        "pair {}-{} has {s}x{s} inputs, pool is {expect}x{expect}",
                        key.0, key.1
                    )));
                }
                _ => {}
            }
        }
        pooled.train.extend(part.train);
        pooled.validation.extend(part.validation);
        pooled.test.extend(part.test);
    }
    pooled.class_weights = weights_or_uniform(&pooled.train);
    Ok(pooled)
}

// --- dataset cache ------------------------------------------------------
//
// One file per (pair, window config), magic "CRPD", all integers
// little-endian:
//
//   "CRPD" | version u8 | w u32 | k u32 | tau u32 | epsilon f64 | side u32
//   | n u32 | ticker_a (u16 len + utf-8) | ticker_b | first_target u32
//   | targets: ceil(n/8) bytes, bit i = example i, LSB first
//   | inputs: n blocks of side * ceil(side/64) u64 words
//
// Examples are stored in target order and their indices are contiguous, so
// only the first index is kept. Rebuilding from identical inputs writes
// identical bytes.

const DATASET_MAGIC: &[u8; 4] = b"CRPD";
const DATASET_VERSION: u8 = 1;

pub fn write_dataset_cache(
    path: &Path,
    cfg: &WindowConfig,
    examples: &[Example],
) -> Result<(), DatasetError> {
    if examples.is_empty() {
        return Err(DatasetError::TooFewExamples("nothing to cache".into()));
    }
    let side = cfg.window_side();
    let first = examples[0].target_index;
    let pair = Arc::clone(&examples[0].pair);
    for (i, e) in examples.iter().enumerate() {
        if e.input.rows() != side || e.input.cols() != side {
            return Err(DatasetError::ShapeMismatch(format!(
                "example {i} is {}x{}, config says {side}",
                e.input.rows(),
                e.input.cols()
            )));
        }
        if e.target_index != first + i || e.pair != pair {
            return Err(DatasetError::ShapeMismatch(format!(
                "example {i} breaks the contiguous single-pair layout"
            )));
        }
    }

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&[DATASET_VERSION])?;
    w.write_all(&(cfg.w as u32).to_le_bytes())?;
    w.write_all(&(cfg.embedding.k as u32).to_le_bytes())?;
    w.write_all(&(cfg.embedding.tau as u32).to_le_bytes())?;
    w.write_all(&cfg.epsilon.to_le_bytes())?;
    w.write_all(&(side as u32).to_le_bytes())?;
    w.write_all(&(examples.len() as u32).to_le_bytes())?;
    for t in [&pair.0, &pair.1] {
        w.write_all(&(t.len() as u16).to_le_bytes())?;
        w.write_all(t.as_bytes())?;
    }
    w.write_all(&(first as u32).to_le_bytes())?;
    let mut packed = vec![0u8; examples.len().div_ceil(8)];
    for (i, e) in examples.iter().enumerate() {
        if e.target {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    for e in examples {
        for word in e.input.words() {
            w.write_all(&word.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_cache(path: &Path) -> Result<(WindowConfig, Vec<Example>), DatasetError> {
    let bad = |reason: String| DatasetError::BadCache {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    if &head[..4] != DATASET_MAGIC {
        return Err(bad("not a dataset cache".into()));
    }
    if head[4] != DATASET_VERSION {
        return Err(bad(format!("unsupported version {}", head[4])));
    }
    let w = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let tau = read_u32(&mut r)? as usize;
    let epsilon = f64::from_le_bytes(read_array(&mut r)?);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(bad(format!("bad epsilon {epsilon}")));
    }
    if k == 0 || tau == 0 {
        return Err(bad("zero embedding parameter".into()));
    }
    let cfg = WindowConfig::new(w, EmbeddingParams::new(k, tau), epsilon);
    let side = read_u32(&mut r)? as usize;
    if side != cfg.window_side() {
        return Err(bad(format!(
            "side {side} does not match w={w}, k={k}, tau={tau}"
        )));
    }
    let n = read_u32(&mut r)? as usize;
    let mut read_ticker = || -> Result<String, DatasetError> {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)?;
        let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| bad("ticker is not utf-8".into()))
    };
    let pair = Arc::new((read_ticker()?, read_ticker()?));
    let first = read_u32(&mut r)? as usize;
    let mut packed = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut packed)?;
    let words_per_example = side * side.div_ceil(64);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let mut words = Vec::with_capacity(words_per_example);
        for _ in 0..words_per_example {
            words.push(u64::from_le_bytes(read_array(&mut r)?));
        }
        examples.push(Example {
            input: BitMatrix::from_words(side, side, words),
            target: packed[i / 8] >> (i % 8) & 1 == 1,
            pair: Arc::clone(&pair),
            target_index: first + i,
        });
    }
    Ok((cfg, examples))
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}
