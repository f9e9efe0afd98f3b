//! Non-overlapping average pooling over the valid region.

use super::Tensor;
use crate::error::{Error, Result};

/// Output side length for pool size `p` on an input side of `n`.
pub fn pooled_len(n: usize, p: usize) -> usize {
    (n - p) / p + 1
}

pub(crate) fn pool_forward(input: &[f64], channels: usize, h: usize, w: usize, p: usize, out: &mut [f64]) {
    let (ho, wo) = (pooled_len(h, p), pooled_len(w, p));
    let scale = 1.0 / (p * p) as f64;
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        let dst = &mut out[c * ho * wo..(c + 1) * ho * wo];
        dst.fill(0.0);
        for y in 0..ho * p {
            let row = &plane[y * w..y * w + wo * p];
            let acc = &mut dst[(y / p) * wo..(y / p + 1) * wo];
            for (x, v) in row.iter().enumerate() {
                acc[x / p] += v;
            }
        }
        dst.iter_mut().for_each(|v| *v *= scale);
    }
}

pub(crate) fn pool_backward(dout: &[f64], channels: usize, h: usize, w: usize, p: usize, dinput: &mut [f64]) {
    let (ho, wo) = (pooled_len(h, p), pooled_len(w, p));
    let scale = 1.0 / (p * p) as f64;
    dinput.fill(0.0);
    for c in 0..channels {
        let src = &dout[c * ho * wo..(c + 1) * ho * wo];
        let plane = &mut dinput[c * h * w..(c + 1) * h * w];
        for y in 0..ho * p {
            let grads = &src[(y / p) * wo..(y / p + 1) * wo];
            for (x, v) in plane[y * w..y * w + wo * p].iter_mut().enumerate() {
                *v = grads[x / p] * scale;
            }
        }
    }
}

/// Average pools each channel with a `p x p` window and stride `p`;
/// trailing rows and columns that do not fill a window are dropped.
pub fn avg_pool_valid(input: &Tensor, p: usize) -> Result<Tensor> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::Shape(format!("pool input must be C x H x W, got {:?}", input.shape())));
    };
    if p == 0 || h < p || w < p {
        return Err(Error::Shape(format!("cannot pool {h}x{w} with window {p}")));
    }
    let mut out = Tensor::zeros(&[c, pooled_len(h, p), pooled_len(w, p)]);
    pool_forward(input.data(), c, h, w, p, out.data_mut());
    Ok(out)
}

/// Gradient of `sum(dout * avg_pool_valid(x, p))` with respect to `x`.
pub fn avg_pool_valid_backward(input_shape: &[usize], p: usize, dout: &Tensor) -> Result<Tensor> {
    let &[c, h, w] = input_shape else {
        return Err(Error::Shape(format!("pool input must be C x H x W, got {input_shape:?}")));
    };
    if p == 0 || h < p || w < p {
        return Err(Error::Shape(format!("cannot pool {h}x{w} with window {p}")));
    }
    dout.expect_shape(&[c, pooled_len(h, p), pooled_len(w, p)], "pool output gradient")?;
    let mut dx = Tensor::zeros(input_shape);
    pool_backward(dout.data(), c, h, w, p, dx.data_mut());
    Ok(dx)
}
