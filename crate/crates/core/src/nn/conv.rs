//! Dilated 3x3 convolution with "same" zero padding and stride 1.
//!
//! The forward pass unrolls the input into a `(C_in * 9) x (H * W)` column
//! matrix and multiplies it with the `C_out x (C_in * 9)` weight matrix.

use super::Tensor;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// `c = a * b + beta * c` for row-major `a` (m x k), `b` (k x n), `c` (m x n).
/// Transposed operands are read through their strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides address exactly the m*k, k*n
    // and m*n elements of the three buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unrolls `input` (C x H x W) into `cols` ((C * 9) x (H * W)).
pub(crate) fn im2col(input: &[f64], channels: usize, height: usize, width: usize, dilation: usize, cols: &mut [f64]) {
    let hw = height * width;
    debug_assert_eq!(cols.len(), channels * TAPS * hw);
    for c in 0..channels {
        let plane = &input[c * hw..(c + 1) * hw];
        for tap in 0..TAPS {
            let dy = (tap / KERNEL) as isize - 1;
            let dx = (tap % KERNEL) as isize - 1;
            let (dy, dx) = (dy * dilation as isize, dx * dilation as isize);
            let row = &mut cols[(c * TAPS + tap) * hw..(c * TAPS + tap + 1) * hw];
            let x_lo = (-dx).max(0) as usize;
            let x_hi = (width as isize - dx).min(width as isize).max(0) as usize;
            for y in 0..height {
                let out = &mut row[y * width..(y + 1) * width];
                let sy = y as isize + dy;
                if sy < 0 || sy >= height as isize || x_lo >= x_hi {
                    out.fill(0.0);
                    continue;
                }
                let src = &plane[sy as usize * width..(sy as usize + 1) * width];
                out[..x_lo].fill(0.0);
                let s0 = (x_lo as isize + dx) as usize;
                out[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                out[x_hi..].fill(0.0);
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(cols: &[f64], channels: usize, height: usize, width: usize, dilation: usize, input: &mut [f64]) {
    let hw = height * width;
    input.fill(0.0);
    for c in 0..channels {
        let plane = &mut input[c * hw..(c + 1) * hw];
        for tap in 0..TAPS {
            let dy = ((tap / KERNEL) as isize - 1) * dilation as isize;
            let dx = ((tap % KERNEL) as isize - 1) * dilation as isize;
            let row = &cols[(c * TAPS + tap) * hw..(c * TAPS + tap + 1) * hw];
            let x_lo = (-dx).max(0) as usize;
            let x_hi = (width as isize - dx).min(width as isize).max(0) as usize;
            if x_lo >= x_hi {
                continue;
            }
            for y in 0..height {
                let sy = y as isize + dy;
                if sy < 0 || sy >= height as isize {
                    continue;
                }
                let src = &row[y * width + x_lo..y * width + x_hi];
                let s0 = sy as usize * width + (x_lo as isize + dx) as usize;
                for (d, s) in plane[s0..s0 + src.len()].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
}

/// Pre-activation `z = W * cols + b`, written to `out` (C_out x H*W).
pub(crate) fn conv_forward(cols: &[f64], weights: &[f64], bias: &[f64], in_channels: usize, hw: usize, out: &mut [f64]) {
    let out_channels = bias.len();
    for (o, row) in out.chunks_exact_mut(hw).enumerate() {
        row.fill(bias[o]);
    }
    gemm(out_channels, in_channels * TAPS, hw, weights, false, cols, false, 1.0, out);
}

/// Accumulates weight and bias gradients from the pre-activation gradient
/// `dz` (C_out x H*W) and optionally writes the input-column gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    cols: &[f64],
    weights: &[f64],
    dz: &[f64],
    in_channels: usize,
    hw: usize,
    dweights: &mut [f64],
    dbias: &mut [f64],
    dcols: Option<&mut [f64]>,
) {
    let out_channels = dbias.len();
    let k = in_channels * TAPS;
    for (o, row) in dz.chunks_exact(hw).enumerate() {
        dbias[o] += row.iter().sum::<f64>();
    }
    gemm(out_channels, hw, k, dz, false, cols, true, 1.0, dweights);
    if let Some(dcols) = dcols {
        gemm(k, out_channels, hw, weights, true, dz, false, 0.0, dcols);
    }
}

fn check_conv_shapes(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let &[cin, h, w] = input.shape() else {
        return Err(Error::Shape(format!("conv input must be C x H x W, got {:?}", input.shape())));
    };
    let &[cout, wcin, kh, kw] = weights.shape() else {
        return Err(Error::Shape(format!("conv weights must be 4-d, got {:?}", weights.shape())));
    };
    if wcin != cin || kh != KERNEL || kw != KERNEL {
        return Err(Error::Shape(format!(
            "weights {:?} do not fit input {:?}",
            weights.shape(),
            input.shape()
        )));
    }
    bias.expect_shape(&[cout], "conv bias")?;
    Ok((cin, h, w, cout))
}

/// Same-padded dilated cross-correlation of one C_in x H x W input.
pub fn conv2d_same(input: &Tensor, weights: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    let (cin, h, w, cout) = check_conv_shapes(input, weights, bias)?;
    if dilation == 0 {
        return Err(Error::InvalidArgument("dilation must be positive".into()));
    }
    let mut cols = vec![0.0; cin * TAPS * h * w];
    im2col(input.data(), cin, h, w, dilation, &mut cols);
    let mut out = Tensor::zeros(&[cout, h, w]);
    conv_forward(&cols, weights.data(), bias.data(), cin, h * w, out.data_mut());
    Ok(out)
}

/// Gradients of `sum(dout * conv2d_same(input))` with respect to input,
/// weights and bias.
pub fn conv2d_same_backward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    dilation: usize,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (cin, h, w, cout) = check_conv_shapes(input, weights, bias)?;
    dout.expect_shape(&[cout, h, w], "conv output gradient")?;
    let mut cols = vec![0.0; cin * TAPS * h * w];
    im2col(input.data(), cin, h, w, dilation, &mut cols);
    let mut dw = Tensor::zeros(weights.shape());
    let mut db = Tensor::zeros(bias.shape());
    let mut dcols = vec![0.0; cols.len()];
    conv_backward(
        &cols,
        weights.data(),
        dout.data(),
        cin,
        h * w,
        dw.data_mut(),
        db.data_mut(),
        Some(&mut dcols),
    );
    let mut dx = Tensor::zeros(input.shape());
    col2im(&dcols, cin, h, w, dilation, dx.data_mut());
    Ok((dx, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop reference.
    fn naive(input: &Tensor, weights: &Tensor, bias: &Tensor, d: usize) -> Tensor {
        let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let cout = weights.shape()[0];
        let mut out = Tensor::zeros(&[cout, h, w]);
        for o in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias.data()[o];
                    for c in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + (ky as isize - 1) * d as isize;
                                let sx = x as isize + (kx as isize - 1) * d as isize;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    acc += weights.at(&[o, c, ky, kx]) * input.at(&[c, sy as usize, sx as usize]);
                                }
                            }
                        }
                    }
                    out.set(&[o, y, x], acc);
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn all_ones_counts_neighbors() {
        let input = Tensor::filled(&[1, 3, 3], 1.0);
        let weights = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let out = conv2d_same(&input, &weights, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(out.at(&[0, 1, 1]), 9.0);
        assert_eq!(out.at(&[0, 0, 0]), 4.0);
        assert_eq!(out.at(&[0, 0, 1]), 6.0);
        assert_eq!(out.at(&[0, 2, 2]), 4.0);
    }

    #[test]
    fn center_tap_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random(&[2, 5, 4], &mut rng);
        let mut weights = Tensor::zeros(&[2, 2, 3, 3]);
        weights.set(&[0, 0, 1, 1], 1.0);
        weights.set(&[1, 1, 1, 1], 1.0);
        for d in [1, 2, 4] {
            let out = conv2d_same(&input, &weights, &Tensor::zeros(&[2]), d).unwrap();
            assert_eq!(out, input);
        }
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..24 {
            let cin = 1 + case % 3;
            let cout = 1 + case % 4;
            let h = 3 + case % 5;
            let w = 2 + (case * 7) % 6;
            let d = [1, 2, 4, 8][case % 4];
            let input = random(&[cin, h, w], &mut rng);
            let weights = random(&[cout, cin, 3, 3], &mut rng);
            let bias = random(&[cout], &mut rng);
            let fast = conv2d_same(&input, &weights, &bias, d).unwrap();
            let slow = naive(&input, &weights, &bias, d);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "case {case}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = random(&[2, 5, 6], &mut rng);
        let weights = random(&[3, 2, 3, 3], &mut rng);
        let bias = random(&[3], &mut rng);
        let dout = random(&[3, 5, 6], &mut rng);
        let objective = |i: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let out = naive(i, w, b, 2);
            out.data().iter().zip(dout.data()).map(|(o, g)| o * g).sum()
        };
        let (dx, dw, db) = conv2d_same_backward(&input, &weights, &bias, 2, &dout).unwrap();
        let h = 1e-6;
        let check = |analytic: &Tensor, perturb: &dyn Fn(usize, f64) -> f64| {
            for i in 0..analytic.len() {
                let numeric = (perturb(i, h) - perturb(i, -h)) / (2.0 * h);
                assert!((numeric - analytic.data()[i]).abs() < 1e-6);
            }
        };
        check(&dx, &|i, e| {
            let mut t = input.clone();
            t.data_mut()[i] += e;
            objective(&t, &weights, &bias)
        });
        check(&dw, &|i, e| {
            let mut t = weights.clone();
            t.data_mut()[i] += e;
            objective(&input, &t, &bias)
        });
        check(&db, &|i, e| {
            let mut t = bias.clone();
            t.data_mut()[i] += e;
            objective(&input, &weights, &t)
        });
    }

    #[test]
    fn shape_errors() {
        let input = Tensor::zeros(&[2, 4, 4]);
        let weights = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d_same(&input, &weights, &Tensor::zeros(&[1]), 1).is_err());
        let weights = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(conv2d_same(&input, &weights, &Tensor::zeros(&[2]), 1).is_err());
        assert!(conv2d_same(&Tensor::zeros(&[4, 4]), &weights, &Tensor::zeros(&[1]), 1).is_err());
    }
}
