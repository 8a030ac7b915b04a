//! Forward and backward passes for each layer type.
//!
//! Convolution is cross-correlation (no kernel flip), stride and zero
//! padding as given. Backward passes take the forward inputs they need
//! explicitly so every function stays a pure mapping that can be checked
//! against finite differences in isolation.

use super::tensor::Tensor;
use super::NnError;

fn shape_err(msg: String) -> NnError {
    NnError::ShapeMismatch(msg)
}

fn conv_out(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (input + 2 * padding >= kernel).then(|| (input + 2 * padding - kernel) / stride + 1)
}

/// `x`: `[C, H, W]`, `weight`: `[F, C, KH, KW]`, `bias`: `F` values.
/// Output `[F, OH, OW]` with `OH = (H + 2p - KH) / stride + 1`.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<Tensor, NnError> {
    let (c, h, w, f, kh, kw) = conv_shapes(x, weight, bias, stride)?;
    let oh = conv_out(h, kh, stride, padding)
        .ok_or_else(|| shape_err(format!("input {h}x{w} smaller than kernel {kh}x{kw}")))?;
    let ow = conv_out(w, kw, stride, padding)
        .ok_or_else(|| shape_err(format!("input {h}x{w} smaller than kernel {kh}x{kw}")))?;
    let xd = x.data();
    let wd = weight.data();
    let mut out = Tensor::zeros(&[f, oh, ow]);
    let od = out.data_mut();
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[fi];
                for ci in 0..c {
                    for ky in 0..kh {
                        let iy = oy * stride + ky;
                        let Some(iy) = iy.checked_sub(padding).filter(|v| *v < h) else {
                            continue;
                        };
                        for kx in 0..kw {
                            let ix = ox * stride + kx;
                            let Some(ix) = ix.checked_sub(padding).filter(|v| *v < w) else {
                                continue;
                            };
                            acc += xd[(ci * h + iy) * w + ix]
                                * wd[((fi * c + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                od[(fi * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss through [`conv2d_forward`]: returns
/// `(dx, dweight, dbias)` given `dy` of the output's shape.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dy: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Vec<f64>), NnError> {
    let (c, h, w, f, kh, kw) = conv_shapes(x, weight, &vec![0.0; weight.shape()[0]], stride)?;
    let oh = conv_out(h, kh, stride, padding).ok_or_else(|| shape_err("kernel too large".into()))?;
    let ow = conv_out(w, kw, stride, padding).ok_or_else(|| shape_err("kernel too large".into()))?;
    if dy.shape() != [f, oh, ow] {
        return Err(shape_err(format!(
            "dy is {:?}, forward output is [{f}, {oh}, {ow}]",
            dy.shape()
        )));
    }
    let xd = x.data();
    let wd = weight.data();
    let dyd = dy.data();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = vec![0.0; f];
    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dyd[(fi * oh + oy) * ow + ox];
                db[fi] += g;
                for ci in 0..c {
                    for ky in 0..kh {
                        let Some(iy) = (oy * stride + ky).checked_sub(padding).filter(|v| *v < h)
                        else {
                            continue;
                        };
                        for kx in 0..kw {
                            let Some(ix) =
                                (ox * stride + kx).checked_sub(padding).filter(|v| *v < w)
                            else {
                                continue;
                            };
                            let wi = ((fi * c + ci) * kh + ky) * kw + kx;
                            let xi = (ci * h + iy) * w + ix;
                            dxd[xi] += g * wd[wi];
                            dwd[wi] += g * xd[xi];
                        }
                    }
                }
            }
        }
    }
    Ok((dx, dw, db))
}

fn conv_shapes(
    x: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize, usize), NnError> {
    if stride == 0 {
        return Err(shape_err("stride must be at least 1".into()));
    }
    let [c, h, w] = *x.shape() else {
        return Err(shape_err(format!("conv input must be rank 3, got {:?}", x.shape())));
    };
    let [f, wc, kh, kw] = *weight.shape() else {
        return Err(shape_err(format!(
            "conv weight must be rank 4, got {:?}",
            weight.shape()
        )));
    };
    if wc != c {
        return Err(shape_err(format!("weight expects {wc} channels, input has {c}")));
    }
    if bias.len() != f {
        return Err(shape_err(format!("bias has {} entries for {f} filters", bias.len())));
    }
    Ok((c, h, w, f, kh, kw))
}

/// Elementwise `max(x, 0)`.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Subgradient at 0 is 0: gradient flows only where the input was strictly
/// positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    assert_eq!(x.shape(), dy.shape(), "relu gradient shape mismatch");
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Non-overlapping `p x p` max pooling with stride `p`; rows and columns
/// that do not fill a whole patch are dropped. Returns the pooled tensor and
/// the flat input index of each patch maximum (first occurrence wins ties),
/// which is exactly what the backward pass routes gradient through.
pub fn maxpool2d_forward(x: &Tensor, p: usize) -> Result<(Tensor, Vec<usize>), NnError> {
    if p == 0 {
        return Err(shape_err("pool size must be at least 1".into()));
    }
    let [c, h, w] = *x.shape() else {
        return Err(shape_err(format!("pool input must be rank 3, got {:?}", x.shape())));
    };
    let (oh, ow) = (h / p, w / p);
    if oh == 0 || ow == 0 {
        return Err(shape_err(format!("cannot pool {h}x{w} by {p}")));
    }
    let xd = x.data();
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = vec![0usize; c * oh * ow];
    let od = out.data_mut();
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for ky in 0..p {
                    for kx in 0..p {
                        let idx = (ci * h + oy * p + ky) * w + ox * p + kx;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ci * oh + oy) * ow + ox;
                od[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    assert_eq!(argmax.len(), dy.numel(), "argmax length mismatch");
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        dxd[idx] += g;
    }
    dx
}

/// `weight`: `[out, in]`, returns `weight . x + bias`.
pub fn dense_forward(x: &[f64], weight: &Tensor, bias: &[f64]) -> Result<Vec<f64>, NnError> {
    let [rows, cols] = *weight.shape() else {
        return Err(shape_err(format!(
            "dense weight must be rank 2, got {:?}",
            weight.shape()
        )));
    };
    if x.len() != cols || bias.len() != rows {
        return Err(shape_err(format!(
            "dense [{rows}x{cols}] applied to input {} with bias {}",
            x.len(),
            bias.len()
        )));
    }
    let wd = weight.data();
    Ok((0..rows)
        .map(|r| {
            bias[r]
                + wd[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
        })
        .collect())
}

pub fn dense_backward(
    x: &[f64],
    weight: &Tensor,
    dy: &[f64],
) -> Result<(Vec<f64>, Tensor, Vec<f64>), NnError> {
    let [rows, cols] = *weight.shape() else {
        return Err(shape_err(format!(
            "dense weight must be rank 2, got {:?}",
            weight.shape()
        )));
    };
    if x.len() != cols || dy.len() != rows {
        return Err(shape_err(format!(
            "dense backward [{rows}x{cols}] with input {} and dy {}",
            x.len(),
            dy.len()
        )));
    }
    let wd = weight.data();
    let mut dx = vec![0.0; cols];
    let mut dw = Tensor::zeros(&[rows, cols]);
    let dwd = dw.data_mut();
    for r in 0..rows {
        for c in 0..cols {
            dx[c] += dy[r] * wd[r * cols + c];
            dwd[r * cols + c] = dy[r] * x[c];
        }
    }
    Ok((dx, dw, dy.to_vec()))
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_data(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::from_data(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let w = Tensor::from_data(&[1, 1, 1, 1], vec![1.0]);
        let y = conv2d_forward(&x, &w, &[0.0], 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_ones_kernel_sums_patches() {
        let x = Tensor::from_data(&[1, 3, 3], vec![1.0; 9]);
        let w = Tensor::from_data(&[1, 1, 2, 2], vec![1.0; 4]);
        let y = conv2d_forward(&x, &w, &[0.0], 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|v| *v == 4.0));
    }

    #[test]
    fn conv_padding_and_stride() {
        let x = Tensor::from_data(&[1, 3, 3], (1..=9).map(|i| i as f64).collect());
        let w = Tensor::from_data(&[1, 1, 3, 3], vec![1.0; 9]);
        let y = conv2d_forward(&x, &w, &[0.5], 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        // Corner patches see a 2x2 window of the input under zero padding.
        assert_eq!(y.get(&[0, 0, 0]), 1.0 + 2.0 + 4.0 + 5.0 + 0.5);
        assert_eq!(y.get(&[0, 1, 1]), 5.0 + 6.0 + 8.0 + 9.0 + 0.5);
    }

    #[test]
    fn conv_rejects_undersized_input() {
        let x = Tensor::from_data(&[1, 2, 2], vec![0.0; 4]);
        let w = Tensor::from_data(&[1, 1, 3, 3], vec![0.0; 9]);
        assert!(matches!(
            conv2d_forward(&x, &w, &[0.0], 1, 0),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    /// Central finite difference of `sum(dy * conv(x, w, b))` against the
    /// analytic backward pass, for every input, weight, and bias entry.
    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, padding) in &[(1usize, 0usize), (1, 1), (2, 1)] {
            let mut x = random_tensor(&mut rng, &[2, 5, 5]);
            let mut w = random_tensor(&mut rng, &[3, 2, 3, 3]);
            let mut b: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let y = conv2d_forward(&x, &w, &b, stride, padding).unwrap();
            let dy = random_tensor(&mut rng, y.shape());
            let (dx, dw, db) = conv2d_backward(&x, &w, &dy, stride, padding).unwrap();

            let h = 1e-5;
            let objective = |x: &Tensor, w: &Tensor, b: &[f64]| -> f64 {
                conv2d_forward(x, w, b, stride, padding)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(y, g)| y * g)
                    .sum()
            };
            for i in 0..x.numel() {
                let orig = x.data()[i];
                x.data_mut()[i] = orig + h;
                let up = objective(&x, &w, &b);
                x.data_mut()[i] = orig - h;
                let down = objective(&x, &w, &b);
                x.data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    (numeric - dx.data()[i]).abs() < 1e-6 * (1.0 + numeric.abs()),
                    "dx[{i}] stride={stride} pad={padding}: {numeric} vs {}",
                    dx.data()[i]
                );
            }
            for i in 0..w.numel() {
                let orig = w.data()[i];
                w.data_mut()[i] = orig + h;
                let up = objective(&x, &w, &b);
                w.data_mut()[i] = orig - h;
                let down = objective(&x, &w, &b);
                w.data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    (numeric - dw.data()[i]).abs() < 1e-6 * (1.0 + numeric.abs()),
                    "dw[{i}]: {numeric} vs {}",
                    dw.data()[i]
                );
            }
            for i in 0..b.len() {
                let orig = b[i];
                b[i] = orig + h;
                let up = objective(&x, &w, &b);
                b[i] = orig - h;
                let down = objective(&x, &w, &b);
                b[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!((numeric - db[i]).abs() < 1e-6 * (1.0 + numeric.abs()));
            }
        }
    }

    #[test]
    fn relu_clamps_and_gates() {
        let x = Tensor::from_data(&[1, 1, 4], vec![-2.0, 0.0, 0.5, 3.0]);
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 0.5, 3.0]);
        let dy = Tensor::from_data(&[1, 1, 4], vec![1.0; 4]);
        let dx = relu_backward(&x, &dy);
        // Zero input gets zero gradient.
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn maxpool_picks_maximum_and_first_tie() {
        let x = Tensor::from_data(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, argmax) = maxpool2d_forward(&x, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(argmax, &[3]);

        let flat = Tensor::from_data(&[1, 2, 2], vec![7.0; 4]);
        let (_, arg) = maxpool2d_forward(&flat, 2).unwrap();
        assert_eq!(arg, &[0], "ties resolve to the first index in scan order");
    }

    #[test]
    fn maxpool_drops_remainder_and_routes_gradient() {
        let x = Tensor::from_data(&[1, 5, 5], (0..25).map(|i| i as f64).collect());
        let (y, argmax) = maxpool2d_forward(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        // Patch maxima of the top-left 4x4; row/col 4 are dropped.
        assert_eq!(y.data(), &[6.0, 8.0, 16.0, 18.0]);
        let dy = Tensor::from_data(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let dx = maxpool2d_backward(&[1, 5, 5], &argmax, &dy);
        assert_eq!(dx.get(&[0, 1, 1]), 1.0);
        assert_eq!(dx.get(&[0, 1, 3]), 2.0);
        assert_eq!(dx.get(&[0, 3, 1]), 3.0);
        assert_eq!(dx.get(&[0, 3, 3]), 4.0);
        assert_eq!(dx.data().iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn dense_forward_and_gradients() {
        let w = Tensor::from_data(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = dense_forward(&[1.0, 0.0, -1.0], &w, &[0.5, -0.5]).unwrap();
        assert_eq!(y, vec![1.0 - 3.0 + 0.5, 4.0 - 6.0 - 0.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (dx, dw, db) = dense_backward(&x, &w, &dy).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            xp[i] += h;
            let up: f64 = dense_forward(&xp, &w, &[0.0, 0.0])
                .unwrap()
                .iter()
                .zip(&dy)
                .map(|(y, g)| y * g)
                .sum();
            xp[i] -= 2.0 * h;
            let down: f64 = dense_forward(&xp, &w, &[0.0, 0.0])
                .unwrap()
                .iter()
                .zip(&dy)
                .map(|(y, g)| y * g)
                .sum();
            assert!(((up - down) / (2.0 * h) - dx[i]).abs() < 1e-6);
        }
        for r in 0..2 {
            for c in 0..3 {
                assert!((dw.get(&[r, c]) - dy[r] * x[c]).abs() < 1e-12);
            }
        }
        assert_eq!(db, dy);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-12);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(-800.0) >= 0.0);
    }
}
