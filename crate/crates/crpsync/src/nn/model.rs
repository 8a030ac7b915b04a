//! The two-stage convolutional classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::tensor::Tensor;
use super::NnError;
use crate::bitmat::BitMatrix;

/// Layer sizes. Both convolutions use stride 1 and no padding; pooling is
/// non-overlapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub pool1: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub pool2: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv1_filters: 16,
            conv1_kernel: 3,
            pool1: 2,
            conv2_filters: 32,
            conv2_kernel: 3,
            pool2: 2,
        }
    }
}

impl Architecture {
    /// Smallest input side the shape chain survives with every stage
    /// non-empty.
    pub fn min_side(&self) -> usize {
        self.conv1_kernel + self.pool1 * (self.conv2_kernel + self.pool2 - 1) - 1
    }

    /// `(pool1 side, pool2 side, flattened feature count)` for an input of
    /// `side x side`.
    fn feature_shape(&self, side: usize) -> Result<(usize, usize, usize), NnError> {
        let too_small = || NnError::WindowTooSmall {
            side,
            min_side: self.min_side(),
        };
        let s1 = side.checked_sub(self.conv1_kernel - 1).ok_or_else(too_small)?;
        let p1 = s1 / self.pool1;
        if p1 == 0 {
            return Err(too_small());
        }
        let s2 = p1.checked_sub(self.conv2_kernel - 1).ok_or_else(too_small)?;
        let p2 = s2 / self.pool2;
        if p2 == 0 {
            return Err(too_small());
        }
        Ok((p1, p2, self.conv2_filters * p2 * p2))
    }
}

/// Parameters of the classifier for one fixed input side.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub input_side: usize,
    pub conv1_w: Tensor,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Tensor,
    pub conv2_b: Vec<f64>,
    pub dense_w: Tensor,
    pub dense_b: Vec<f64>,
}

/// Everything the backward pass needs from one forward pass.
pub struct Activations {
    x: Tensor,
    z1: Tensor,
    r1: Tensor,
    arg1: Vec<usize>,
    p1: Tensor,
    z2: Tensor,
    r2: Tensor,
    arg2: Vec<usize>,
    flat: Vec<f64>,
}

/// Parameter gradients, same shapes as [`Model`]'s parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub conv1_w: Tensor,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Tensor,
    pub conv2_b: Vec<f64>,
    pub dense_w: Tensor,
    pub dense_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Gradients {
        Gradients {
            conv1_w: Tensor::zeros(model.conv1_w.shape()),
            conv1_b: vec![0.0; model.conv1_b.len()],
            conv2_w: Tensor::zeros(model.conv2_w.shape()),
            conv2_b: vec![0.0; model.conv2_b.len()],
            dense_w: Tensor::zeros(model.dense_w.shape()),
            dense_b: vec![0.0; model.dense_b.len()],
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for slice in self.slices_mut() {
            for x in slice {
                *x *= factor;
            }
        }
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.conv1_w.data(),
            &self.conv1_b,
            self.conv2_w.data(),
            &self.conv2_b,
            self.dense_w.data(),
            &self.dense_b,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.conv1_w.data_mut(),
            &mut self.conv1_b,
            self.conv2_w.data_mut(),
            &mut self.conv2_b,
            self.dense_w.data_mut(),
            &mut self.dense_b,
        ]
    }
}

/// A window plot as the network input: `[1, side, side]`, cells 0.0 or 1.0.
pub fn input_tensor(bits: &BitMatrix) -> Tensor {
    let (rows, cols) = (bits.rows(), bits.cols());
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(f64::from(u8::from(bits.get(i, j))));
        }
    }
    Tensor::from_data(&[1, rows, cols], data)
}

impl Model {
    /// Builds a model with He-style uniform initial weights: each tensor is
    /// drawn from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, biases start at
    /// zero. The draw order is fixed (conv1, conv2, dense), so one seed
    /// always produces bit-identical parameters.
    pub fn new(input_side: usize, arch: Architecture, seed: u64) -> Result<Model, NnError> {
        let (_, _, flat) = arch.feature_shape(input_side)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shape: &[usize], fan_in: usize| -> Tensor {
            let limit = (6.0 / fan_in as f64).sqrt();
            let n = shape.iter().product();
            Tensor::from_data(shape, (0..n).map(|_| rng.gen_range(-limit..limit)).collect())
        };
        let k1 = arch.conv1_kernel;
        let k2 = arch.conv2_kernel;
        let conv1_w = draw(&[arch.conv1_filters, 1, k1, k1], k1 * k1);
        let conv2_w = draw(
            &[arch.conv2_filters, arch.conv1_filters, k2, k2],
            arch.conv1_filters * k2 * k2,
        );
        let dense_w = draw(&[1, flat], flat);
        Ok(Model {
            arch,
            input_side,
            conv1_w,
            conv1_b: vec![0.0; arch.conv1_filters],
            conv2_w,
            conv2_b: vec![0.0; arch.conv2_filters],
            dense_w,
            dense_b: vec![0.0; 1],
        })
    }

    pub fn param_sizes(&self) -> [usize; 6] {
        [
            self.conv1_w.numel(),
            self.conv1_b.len(),
            self.conv2_w.numel(),
            self.conv2_b.len(),
            self.dense_w.numel(),
            self.dense_b.len(),
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.conv1_w.data_mut(),
            &mut self.conv1_b,
            self.conv2_w.data_mut(),
            &mut self.conv2_b,
            self.dense_w.data_mut(),
            &mut self.dense_b,
        ]
    }

    /// Runs the network, returning the logit and the activations backward
    /// needs.
    pub fn forward(&self, x: &Tensor) -> Result<(f64, Activations), NnError> {
        if x.shape() != [1, self.input_side, self.input_side] {
            return Err(NnError::ShapeMismatch(format!(
                "input is {:?}, model expects [1, {side}, {side}]",
                x.shape(),
                side = self.input_side
            )));
        }
        let z1 = ops::conv2d_forward(x, &self.conv1_w, &self.conv1_b, 1, 0)?;
        let r1 = ops::relu_forward(&z1);
        let (p1, arg1) = ops::maxpool2d_forward(&r1, self.arch.pool1)?;
        let z2 = ops::conv2d_forward(&p1, &self.conv2_w, &self.conv2_b, 1, 0)?;
        let r2 = ops::relu_forward(&z2);
        let (p2, arg2) = ops::maxpool2d_forward(&r2, self.arch.pool2)?;
        let flat = p2.data().to_vec();
        let logit = ops::dense_forward(&flat, &self.dense_w, &self.dense_b)?[0];
        Ok((
            logit,
            Activations {
                x: x.clone(),
                z1,
                r1,
                arg1,
                p1,
                z2,
                r2,
                arg2,
                flat,
            },
        ))
    }

    /// Propagates a logit gradient back to all parameters.
    pub fn backward(&self, acts: &Activations, dlogit: f64) -> Result<Gradients, NnError> {
        let (dflat, dense_w, dense_b) = ops::dense_backward(&acts.flat, &self.dense_w, &[dlogit])?;
        let side = isqrt(acts.flat.len() / self.arch.conv2_filters);
        let dp2 = Tensor::from_data(&[self.arch.conv2_filters, side, side], dflat);
        let dr2 = ops::maxpool2d_backward(acts.r2.shape(), &acts.arg2, &dp2);
        let dz2 = ops::relu_backward(&acts.z2, &dr2);
        let (dp1, conv2_w, conv2_b) = ops::conv2d_backward(&acts.p1, &self.conv2_w, &dz2, 1, 0)?;
        let dr1 = ops::maxpool2d_backward(acts.r1.shape(), &acts.arg1, &dp1);
        let dz1 = ops::relu_backward(&acts.z1, &dr1);
        let (_, conv1_w, conv1_b) = ops::conv2d_backward(&acts.x, &self.conv1_w, &dz1, 1, 0)?;
        Ok(Gradients {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            dense_w,
            dense_b,
        })
    }
}

fn isqrt(n: usize) -> usize {
    let r = (n as f64).sqrt().round() as usize;
    debug_assert_eq!(r * r, n, "pooled feature map must be square");
    r
}
