//! Network building blocks with explicit forward and backward passes.
//!
//! Every backward takes the cached forward input plus the output gradient,
//! accumulates parameter gradients, and returns the input gradient. Parallel
//! loops split only along disjoint output rows, keeping results identical for
//! any thread count.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{axpy_shifted, dot_shifted, ParamTensor, Tensor};

/// Same-length 1D cross-correlation with zero padding. Kernel size must be odd.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamTensor, // shape [out_ch, in_ch, k]
    pub bias: ParamTensor,   // shape [out_ch]
    in_ch: usize,
    out_ch: usize,
    k: usize,
}

impl Conv1d {
    /// Kaiming fan-in initialization for weights, zero biases. Values are
    /// rounded to f32 precision so a freshly initialized model survives a
    /// checkpoint round trip bit-exactly.
    pub fn init(name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let fan_in = (in_ch * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let normal = Normal::new(0.0, std).expect("std is finite and positive");
        let weight: Vec<f64> = (0..out_ch * in_ch * k)
            .map(|_| normal.sample(rng) as f32 as f64)
            .collect();
        Self {
            weight: ParamTensor::new(format!("{name}.weight"), vec![out_ch, in_ch, k], weight),
            bias: ParamTensor::new(format!("{name}.bias"), vec![out_ch], vec![0.0; out_ch]),
            in_ch,
            out_ch,
            k,
        }
    }

    pub fn zeroed(name: &str, in_ch: usize, out_ch: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        Self {
            weight: ParamTensor::new(
                format!("{name}.weight"),
                vec![out_ch, in_ch, k],
                vec![0.0; out_ch * in_ch * k],
            ),
            bias: ParamTensor::new(format!("{name}.bias"), vec![out_ch], vec![0.0; out_ch]),
            in_ch,
            out_ch,
            k,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.channels() != self.in_ch {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input channels", self.in_ch),
                got: format!("{} channels", x.channels()),
            });
        }
        let (batch, _, len) = x.shape();
        let half = (self.k / 2) as isize;
        let mut out = Tensor::zeros(batch, self.out_ch, len);
        let out_ch = self.out_ch;
        let in_ch = self.in_ch;
        let k = self.k;
        let weight = &self.weight.data;
        let bias = &self.bias.data;
        out.data_mut()
            .par_chunks_mut(len)
            .enumerate()
            .for_each(|(row, out_row)| {
                let n = row / out_ch;
                let oc = row % out_ch;
                out_row.fill(bias[oc]);
                for ic in 0..in_ch {
                    let x_row = x.row(n, ic);
                    let w_base = (oc * in_ch + ic) * k;
                    for kk in 0..k {
                        axpy_shifted(out_row, x_row, weight[w_base + kk], kk as isize - half);
                    }
                }
            });
        Ok(out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (batch, _, len) = x.shape();
        if grad_out.shape() != (batch, self.out_ch, len) {
            return Err(Error::ShapeMismatch {
                expected: format!("({batch},{},{len})", self.out_ch),
                got: format!("{:?}", grad_out.shape()),
            });
        }
        let half = (self.k / 2) as isize;
        let in_ch = self.in_ch;
        let out_ch = self.out_ch;
        let k = self.k;

        let mut grad_in = Tensor::zeros(batch, in_ch, len);
        let weight = &self.weight.data;
        grad_in
            .data_mut()
            .par_chunks_mut(len)
            .enumerate()
            .for_each(|(row, gi_row)| {
                let n = row / in_ch;
                let ic = row % in_ch;
                for oc in 0..out_ch {
                    let go_row = grad_out.row(n, oc);
                    let w_base = (oc * in_ch + ic) * k;
                    for kk in 0..k {
                        // out[i] += w * x[i + shift]  =>  dx[j] += w * dout[j - shift]
                        let shift = kk as isize - half;
                        axpy_shifted(gi_row, go_row, weight[w_base + kk], -shift);
                    }
                }
            });

        self.weight
            .grad
            .par_chunks_mut(in_ch * k)
            .enumerate()
            .for_each(|(oc, wg)| {
                for n in 0..batch {
                    let go_row = grad_out.row(n, oc);
                    for ic in 0..in_ch {
                        let x_row = x.row(n, ic);
                        for kk in 0..k {
                            wg[ic * k + kk] +=
                                dot_shifted(go_row, x_row, kk as isize - half);
                        }
                    }
                }
            });
        for oc in 0..out_ch {
            let mut acc = 0.0;
            for n in 0..batch {
                acc += grad_out.row(n, oc).iter().sum::<f64>();
            }
            self.bias.grad[oc] += acc;
        }
        Ok(grad_in)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient through ReLU given the cached pre-activation.
pub fn relu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert!(pre.same_shape(grad_out));
    let mut out = grad_out.clone();
    for (g, p) in out.data_mut().iter_mut().zip(pre.data()) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Interleave `alpha` channels of length `d` into one channel of length
/// `alpha * d`: `out[alpha*i + c] = phi[c, i]`. Pure reindexing.
pub fn sub_pixel_rearrange(phi: &Tensor, alpha: usize) -> Result<Tensor> {
    if phi.channels() != alpha {
        return Err(Error::ChannelCountNotAlpha { channels: phi.channels(), alpha });
    }
    let (batch, _, d) = phi.shape();
    let mut out = Tensor::zeros(batch, 1, alpha * d);
    for n in 0..batch {
        for c in 0..alpha {
            let src = phi.row(n, c);
            let dst = out.row_mut(n, 0);
            for i in 0..d {
                dst[alpha * i + c] = src[i];
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`sub_pixel_rearrange`]; also its gradient.
pub fn sub_pixel_inverse(y: &Tensor, alpha: usize) -> Result<Tensor> {
    let (batch, channels, n_len) = y.shape();
    if channels != 1 || n_len % alpha != 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("(_, 1, multiple of {alpha})"),
            got: format!("{:?}", y.shape()),
        });
    }
    let d = n_len / alpha;
    let mut out = Tensor::zeros(batch, alpha, d);
    for n in 0..batch {
        let src = y.row(n, 0);
        for c in 0..alpha {
            let dst = out.row_mut(n, c);
            for i in 0..d {
                dst[i] = src[alpha * i + c];
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbor upsampling of a single-channel tensor.
pub fn nn_upsample(x: &Tensor, alpha: usize) -> Result<Tensor> {
    let (batch, channels, d) = x.shape();
    if channels != 1 {
        return Err(Error::ShapeMismatch {
            expected: "single-channel input".into(),
            got: format!("{channels} channels"),
        });
    }
    let mut out = Tensor::zeros(batch, 1, alpha * d);
    for n in 0..batch {
        let src = x.row(n, 0);
        let dst = out.row_mut(n, 0);
        for i in 0..d {
            let v = src[i];
            for c in 0..alpha {
                dst[alpha * i + c] = v;
            }
        }
    }
    Ok(out)
}

pub fn nn_upsample_backward(grad_out: &Tensor, alpha: usize) -> Result<Tensor> {
    let (batch, _, n_len) = grad_out.shape();
    debug_assert_eq!(n_len % alpha, 0);
    let d = n_len / alpha;
    let mut out = Tensor::zeros(batch, 1, d);
    for n in 0..batch {
        let src = grad_out.row(n, 0);
        let dst = out.row_mut(n, 0);
        for i in 0..d {
            let mut acc = 0.0;
            for c in 0..alpha {
                acc += src[alpha * i + c];
            }
            dst[i] = acc;
        }
    }
    Ok(out)
}

/// Mean of squared differences over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    let n = pred.data().len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Gradient of [`mse_loss`] with respect to the prediction.
pub fn mse_loss_backward(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    let n = pred.data().len() as f64;
    let (b, c, l) = pred.shape();
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Tensor::from_vec(b, c, l, data)
}

/// One local residual unit: `x + conv2(relu(conv1(x)))`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
}

/// Forward cache of one residual block.
pub struct BlockTrace {
    pub input: Tensor,
    pub pre_act: Tensor,
    pub act: Tensor,
}

impl ResidualBlock {
    pub fn init(name: &str, channels: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv1d::init(&format!("{name}.conv1"), channels, channels, k, rng),
            conv2: Conv1d::init(&format!("{name}.conv2"), channels, channels, k, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = relu(&self.conv1.forward(x)?);
        let r = self.conv2.forward(&h)?;
        x.add(&r)
    }

    pub fn forward_trace(&self, x: Tensor) -> Result<(Tensor, BlockTrace)> {
        let pre_act = self.conv1.forward(&x)?;
        let act = relu(&pre_act);
        let r = self.conv2.forward(&act)?;
        let out = x.add(&r)?;
        Ok((out, BlockTrace { input: x, pre_act, act }))
    }

    pub fn backward(&mut self, trace: &BlockTrace, grad_out: &Tensor) -> Result<Tensor> {
        let g_act = self.conv2.backward(&trace.act, grad_out)?;
        let g_pre = relu_backward(&trace.pre_act, &g_act);
        let mut g_in = self.conv1.backward(&trace.input, &g_pre)?;
        g_in.add_assign(grad_out)?; // skip connection
        Ok(g_in)
    }
}
