//! Layer primitives: circular 1-D convolution (via im2col + GEMM), batch
//! normalization, dense layers, activations and the power-normalization
//! layer. Every op comes as a forward producing a cache and a backward
//! consuming it; backward passes are exact Jacobian-transpose products.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::nn::{TrainMode, BN_EPS, BN_MOMENTUM};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3};

// ---------------------------------------------------------------------------
// Circular 1-D convolution
// ---------------------------------------------------------------------------

/// Cache for one convolution layer: the im2col patch matrix and the input
/// shape (needed to scatter gradients back).
pub struct ConvCache {
    cols: Array2<f64>,
    in_shape: (usize, usize, usize),
}

/// Source-position table for circular padding: entry `t*kernel + j` holds
/// `(t + j - kernel/2) mod K`.
fn circular_offsets(k_len: usize, kernel: usize) -> Vec<usize> {
    let half = (kernel / 2) as isize;
    let mut table = Vec::with_capacity(k_len * kernel);
    for t in 0..k_len as isize {
        for j in 0..kernel as isize {
            table.push((t + j - half).rem_euclid(k_len as isize) as usize);
        }
    }
    table
}

/// Reorders `[c_out, c_in, kernel]` weights into the `[c_out, kernel*c_in]`
/// matrix matching the im2col column layout (`j * c_in + c`).
fn weight_matrix(w: &ArrayView3<f64>) -> Array2<f64> {
    let (c_out, c_in, kernel) = w.dim();
    let mut w2 = Array2::zeros((c_out, kernel * c_in));
    for o in 0..c_out {
        for c in 0..c_in {
            for j in 0..kernel {
                w2[[o, j * c_in + c]] = w[[o, c, j]];
            }
        }
    }
    w2
}

/// Circular convolution forward. `x` is `[B, K, c_in]`, the result
/// `[B, K, c_out]` with `out[b, t, o] = bias_o + sum_{c,j} w[o, c, j] *
/// x[b, (t + j - kernel/2) mod K, c]` (stride 1, wrap-around padding).
pub fn conv1d_forward(
    x: &Array3<f64>,
    w: &ArrayView3<f64>,
    b: &ArrayView1<f64>,
) -> (Array3<f64>, ConvCache) {
    let (batch, k_len, c_in) = x.dim();
    let (c_out, w_c_in, kernel) = w.dim();
    assert_eq!(c_in, w_c_in, "channel mismatch: input {c_in}, kernel {w_c_in}");

    let offsets = circular_offsets(k_len, kernel);
    let xs = x.as_slice().expect("conv input must be contiguous");
    let mut cols = Array2::<f64>::zeros((batch * k_len, kernel * c_in));
    {
        let cs = cols.as_slice_mut().unwrap();
        let row_w = kernel * c_in;
        for bi in 0..batch {
            let x_base = bi * k_len * c_in;
            for t in 0..k_len {
                let row = (bi * k_len + t) * row_w;
                for j in 0..kernel {
                    let src = offsets[t * kernel + j];
                    let from = x_base + src * c_in;
                    cs[row + j * c_in..row + (j + 1) * c_in]
                        .copy_from_slice(&xs[from..from + c_in]);
                }
            }
        }
    }

    let w2 = weight_matrix(w);
    let mut out2 = cols.dot(&w2.t()); // [B*K, c_out]
    {
        let bs = b.as_slice().expect("bias must be contiguous");
        let os = out2.as_slice_mut().unwrap();
        for row in 0..batch * k_len {
            let base = row * c_out;
            for (o, &bias) in bs.iter().enumerate() {
                os[base + o] += bias;
            }
        }
    }
    let out = out2.into_shape((batch, k_len, c_out)).unwrap();
    (out, ConvCache { cols, in_shape: (batch, k_len, c_in) })
}

/// Backward of [`conv1d_forward`]: returns `(d_input, d_weight, d_bias)`.
pub fn conv1d_backward(
    cache: &ConvCache,
    w: &ArrayView3<f64>,
    d_out: &Array3<f64>,
) -> (Array3<f64>, Array3<f64>, Array1<f64>) {
    let (batch, k_len, c_in) = cache.in_shape;
    let (c_out, _, kernel) = w.dim();
    let rows = batch * k_len;

    let d_out2 = d_out.view().into_shape((rows, c_out)).unwrap();

    // Bias gradient: column sums.
    let mut d_b = Array1::<f64>::zeros(c_out);
    {
        let db = d_b.as_slice_mut().unwrap();
        let ds = d_out.as_slice().expect("d_out must be contiguous");
        for row in 0..rows {
            let base = row * c_out;
            for o in 0..c_out {
                db[o] += ds[base + o];
            }
        }
    }

    // Weight gradient through the same column layout, then un-permute.
    let d_w2 = d_out2.t().dot(&cache.cols); // [c_out, kernel*c_in]
    let mut d_w = Array3::<f64>::zeros((c_out, c_in, kernel));
    for o in 0..c_out {
        for c in 0..c_in {
            for j in 0..kernel {
                d_w[[o, c, j]] = d_w2[[o, j * c_in + c]];
            }
        }
    }

    // Input gradient: push column gradients back through the circular gather.
    let d_cols = d_out2.dot(&weight_matrix(w)); // [B*K, kernel*c_in]
    let offsets = circular_offsets(k_len, kernel);
    let mut d_x = Array3::<f64>::zeros((batch, k_len, c_in));
    {
        let dxs = d_x.as_slice_mut().unwrap();
        let dcs = d_cols.as_slice().unwrap();
        let row_w = kernel * c_in;
        for bi in 0..batch {
            let x_base = bi * k_len * c_in;
            for t in 0..k_len {
                let row = (bi * k_len + t) * row_w;
                for j in 0..kernel {
                    let dst = x_base + offsets[t * kernel + j] * c_in;
                    let src = row + j * c_in;
                    for c in 0..c_in {
                        dxs[dst + c] += dcs[src + c];
                    }
                }
            }
        }
    }
    (d_x, d_w, d_b)
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Cache for a batch-norm layer in training mode, plus the running-average
/// updates to be committed after a successful step.
pub struct BnCache {
    x_hat: Array3<f64>,
    inv_std: Array1<f64>,
    /// `0.99 * running + 0.01 * batch`, staged here until the owning
    /// network's update step copies them over the stored running statistics.
    pub new_running_mean: Array1<f64>,
    pub new_running_var: Array1<f64>,
}

/// Per-channel sums over the `[B, L, C]` layout, accumulated row-wise so the
/// inner loop stays contiguous. `f` maps (value, channel) to the summand.
fn per_channel_sum(x: &Array3<f64>, mut f: impl FnMut(f64, usize, &mut [f64])) -> Array1<f64> {
    let (batch, l_len, c) = x.dim();
    let mut acc = Array1::<f64>::zeros(c);
    let accs = acc.as_slice_mut().unwrap();
    let xs = x.as_slice().expect("bn input must be contiguous");
    for row in 0..batch * l_len {
        let base = row * c;
        for ci in 0..c {
            f(xs[base + ci], ci, accs);
        }
    }
    acc
}

/// Batch normalization over `[B, L, C]`, normalizing each channel across the
/// `B*L` samples. Training mode uses batch statistics (biased variance) and
/// stages a running-average update; inference mode applies the stored running
/// averages as a fixed affine map and produces no cache.
pub fn batchnorm_forward(
    x: &Array3<f64>,
    gamma: &ArrayView1<f64>,
    beta: &ArrayView1<f64>,
    running_mean: &ArrayView1<f64>,
    running_var: &ArrayView1<f64>,
    mode: TrainMode,
) -> (Array3<f64>, Option<BnCache>) {
    let (batch, l_len, c) = x.dim();
    let n = (batch * l_len) as f64;
    match mode {
        TrainMode::Inference => {
            let mut y = x.clone();
            let ys = y.as_slice_mut().unwrap();
            let g = gamma.as_slice().unwrap();
            let be = beta.as_slice().unwrap();
            let rm = running_mean.as_slice().unwrap();
            let rv = running_var.as_slice().unwrap();
            let scale: Vec<f64> =
                (0..c).map(|ci| g[ci] / (rv[ci] + BN_EPS).sqrt()).collect();
            for row in 0..batch * l_len {
                let base = row * c;
                for ci in 0..c {
                    ys[base + ci] = (ys[base + ci] - rm[ci]) * scale[ci] + be[ci];
                }
            }
            (y, None)
        }
        TrainMode::Training => {
            debug_assert!(batch * l_len >= 2, "training-mode batch norm needs at least 2 samples");
            let mut mean = per_channel_sum(x, |v, ci, acc| acc[ci] += v);
            mean.mapv_inplace(|s| s / n);
            let ms = mean.as_slice().unwrap().to_vec();
            let mut var = per_channel_sum(x, |v, ci, acc| {
                let d = v - ms[ci];
                acc[ci] += d * d;
            });
            var.mapv_inplace(|s| s / n);

            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let mut x_hat = x.clone();
            {
                let xh = x_hat.as_slice_mut().unwrap();
                let is = inv_std.as_slice().unwrap();
                for row in 0..batch * l_len {
                    let base = row * c;
                    for ci in 0..c {
                        xh[base + ci] = (xh[base + ci] - ms[ci]) * is[ci];
                    }
                }
            }
            let mut y = x_hat.clone();
            {
                let ys = y.as_slice_mut().unwrap();
                let g = gamma.as_slice().unwrap();
                let be = beta.as_slice().unwrap();
                for row in 0..batch * l_len {
                    let base = row * c;
                    for ci in 0..c {
                        ys[base + ci] = ys[base + ci] * g[ci] + be[ci];
                    }
                }
            }
            let new_running_mean = running_mean
                .iter()
                .zip(mean.iter())
                .map(|(&r, &m)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * m)
                .collect::<Array1<f64>>();
            let new_running_var = running_var
                .iter()
                .zip(var.iter())
                .map(|(&r, &v)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * v)
                .collect::<Array1<f64>>();
            (y, Some(BnCache { x_hat, inv_std, new_running_mean, new_running_var }))
        }
    }
}

/// Backward of training-mode batch norm: returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward(
    cache: &BnCache,
    gamma: &ArrayView1<f64>,
    d_out: &Array3<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let (batch, l_len, c) = cache.x_hat.dim();
    let n = (batch * l_len) as f64;
    let ds = d_out.as_slice().expect("d_out must be contiguous");
    let xh = cache.x_hat.as_slice().unwrap();

    let mut d_beta = Array1::<f64>::zeros(c);
    let mut d_gamma = Array1::<f64>::zeros(c);
    {
        let db = d_beta.as_slice_mut().unwrap();
        let dg = d_gamma.as_slice_mut().unwrap();
        for row in 0..batch * l_len {
            let base = row * c;
            for ci in 0..c {
                db[ci] += ds[base + ci];
                dg[ci] += ds[base + ci] * xh[base + ci];
            }
        }
    }

    // dx = gamma * inv_std * (dy - (d_beta + x_hat * d_gamma) / N)
    let mut d_x = Array3::<f64>::zeros((batch, l_len, c));
    {
        let dx = d_x.as_slice_mut().unwrap();
        let g = gamma.as_slice().unwrap();
        let is = cache.inv_std.as_slice().unwrap();
        let db = d_beta.as_slice().unwrap();
        let dg = d_gamma.as_slice().unwrap();
        for row in 0..batch * l_len {
            let base = row * c;
            for ci in 0..c {
                let i = base + ci;
                dx[i] = g[ci] * is[ci] * (ds[i] - (db[ci] + xh[i] * dg[ci]) / n);
            }
        }
    }
    (d_x, d_gamma, d_beta)
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Numerically safe softplus `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically safe logistic sigmoid, with the output clamped into the open
/// interval (0, 1) so downstream logs stay finite.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(1e-15, 1.0 - 1e-15)
}

/// Mish activation `x * tanh(softplus(x))`.
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

/// Derivative of Mish at `x`:
/// `tanh(sp) + x * (1 - tanh^2(sp)) * sigmoid(x)` with `sp = softplus(x)`.
pub fn mish_grad(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid_raw(x)
}

fn sigmoid_raw(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

/// Dense forward `y = x W^T + b` with `x: [B, d_in]`, `w: [d_out, d_in]`.
pub fn dense_forward(x: &Array2<f64>, w: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += b;
    y
}

/// Backward of [`dense_forward`]: returns `(d_input, d_weight, d_bias)`.
pub fn dense_backward(
    x: &Array2<f64>,
    w: &ArrayView2<f64>,
    d_out: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d_w = d_out.t().dot(x);
    let d_x = d_out.dot(w);
    let d_b = d_out.sum_axis(ndarray::Axis(0));
    (d_x, d_w, d_b)
}

// ---------------------------------------------------------------------------
// Power normalization
// ---------------------------------------------------------------------------

/// Cache for the power-normalization layer.
pub struct PowerNormCache {
    x: Array3<f64>,
    scale: Array1<f64>,
    power: Array1<f64>,
}

/// Projects each block onto the power-`K` sphere: `y = sqrt(K) * x / ||x||`,
/// where the norm runs over all `2K` real entries of the `[K, 2]` block.
/// An all-zero block has no direction and is rejected.
pub fn power_norm_forward(x: &Array3<f64>) -> Result<(Array3<f64>, PowerNormCache)> {
    let (batch, k_len, two) = x.dim();
    debug_assert_eq!(two, 2);
    let n = k_len as f64;
    let mut scale = Array1::<f64>::zeros(batch);
    let mut power = Array1::<f64>::zeros(batch);
    let xs = x.as_slice().expect("power-norm input must be contiguous");
    let stride = k_len * two;
    for b in 0..batch {
        let p: f64 = xs[b * stride..(b + 1) * stride].iter().map(|v| v * v).sum();
        if p == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "block {b}: cannot power-normalize an all-zero transmitter output"
            )));
        }
        power[b] = p;
        scale[b] = (n / p).sqrt();
    }
    let mut y = x.clone();
    {
        let ys = y.as_slice_mut().unwrap();
        for b in 0..batch {
            let s = scale[b];
            for v in &mut ys[b * stride..(b + 1) * stride] {
                *v *= s;
            }
        }
    }
    Ok((y, PowerNormCache { x: x.clone(), scale, power }))
}

/// Backward of [`power_norm_forward`] — the exact Jacobian of the projection,
/// not a pass-through: `dx = s * (g - x * <g, x> / p)` per block.
pub fn power_norm_backward(cache: &PowerNormCache, d_out: &Array3<f64>) -> Array3<f64> {
    let (batch, k_len, two) = cache.x.dim();
    let stride = k_len * two;
    let xs = cache.x.as_slice().unwrap();
    let gs = d_out.as_slice().expect("d_out must be contiguous");
    let mut d_x = Array3::<f64>::zeros((batch, k_len, two));
    let dxs = d_x.as_slice_mut().unwrap();
    for b in 0..batch {
        let range = b * stride..(b + 1) * stride;
        let dot: f64 = gs[range.clone()].iter().zip(&xs[range.clone()]).map(|(g, x)| g * x).sum();
        let s = cache.scale[b];
        let p = cache.power[b];
        for i in range {
            dxs[i] = s * (gs[i] - xs[i] * dot / p);
        }
    }
    d_x
}

// ---------------------------------------------------------------------------
// Receiver input assembly
// ---------------------------------------------------------------------------

/// Builds the receiver input `[B, K, 4]` from received blocks `[B, K, 2]`
/// and the per-block channel coefficients: feature order
/// `[Re y, Im y, Re h, Im h]`, with `h` repeated along the block.
pub fn assemble_receiver_input(y: &Array3<f64>, h: &[ChannelRealization]) -> Array3<f64> {
    let (batch, k_len, two) = y.dim();
    debug_assert_eq!(two, 2);
    debug_assert_eq!(batch, h.len());
    let mut out = Array3::<f64>::zeros((batch, k_len, 4));
    {
        let os = out.as_slice_mut().unwrap();
        let ys = y.as_slice().expect("received batch must be contiguous");
        for b in 0..batch {
            for t in 0..k_len {
                let dst = (b * k_len + t) * 4;
                let src = (b * k_len + t) * 2;
                os[dst] = ys[src];
                os[dst + 1] = ys[src + 1];
                os[dst + 2] = h[b].re;
                os[dst + 3] = h[b].im;
            }
        }
    }
    out
}
