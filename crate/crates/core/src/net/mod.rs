//! The learned reconstruction network.
//!
//! Layout: a two-conv feature extractor, a stack of local residual blocks
//! bridged by a feature-space skip connection, a two-conv reconstruction head
//! emitting `alpha` channels, sub-pixel rearrangement to the high-res length,
//! and a signal-level residual that adds the nearest-neighbor upsampled input.
//! With a zeroed reconstruction head the network is exactly NN upsampling, so
//! training starts from that identity and learns the missing detail.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{Domain, TimeSeries};
use crate::tensor::{ParamTensor, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{
    mse_loss, mse_loss_backward, nn_upsample, relu, sub_pixel_inverse, sub_pixel_rearrange,
    Conv1d, ResidualBlock,
};
pub use optim::{adam_step, train, AdamState, TrainConfig, TrainReport};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelHyper {
    pub alpha: usize,
    pub channels: usize,
    pub n_blocks: usize,
    pub kernel_size: usize,
}

impl ModelHyper {
    /// Defaults: 64 feature channels, 16 residual blocks, kernel size 3.
    pub fn new(alpha: usize) -> Self {
        Self { alpha, channels: 64, n_blocks: 16, kernel_size: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 {
            return Err(Error::InvalidConfig("alpha must be at least 1".into()));
        }
        if self.channels < 1 || self.n_blocks < 1 {
            return Err(Error::InvalidConfig("channels and n_blocks must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidConfig("kernel size must be odd".into()));
        }
        Ok(())
    }
}

/// The reconstruction network: parameters plus architecture.
#[derive(Debug, Clone)]
pub struct SrpModel {
    hyper: ModelHyper,
    rng_seed: u64,
    update_count: u64,
    extract1: Conv1d,
    extract2: Conv1d,
    blocks: Vec<ResidualBlock>,
    recon1: Conv1d,
    recon2: Conv1d,
}

impl SrpModel {
    /// Seeded initialization. The final reconstruction conv starts at zero so
    /// the untrained network reproduces NN upsampling exactly.
    pub fn new(hyper: ModelHyper, rng_seed: u64) -> Result<Self> {
        Self::build(hyper, rng_seed, true)
    }

    /// Like [`new`](Self::new) but with a randomly initialized reconstruction
    /// head; used by gradient checks, where a zero head would zero most of
    /// the gradient field.
    pub fn new_with_random_head(hyper: ModelHyper, rng_seed: u64) -> Result<Self> {
        Self::build(hyper, rng_seed, false)
    }

    fn build(hyper: ModelHyper, rng_seed: u64, zero_head: bool) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let c = hyper.channels;
        let k = hyper.kernel_size;
        let extract1 = Conv1d::init("extract1", 1, c, k, &mut rng);
        let extract2 = Conv1d::init("extract2", c, c, k, &mut rng);
        let blocks = (0..hyper.n_blocks)
            .map(|i| ResidualBlock::init(&format!("block{i:02}"), c, k, &mut rng))
            .collect();
        let recon1 = Conv1d::init("recon1", c, c, k, &mut rng);
        let recon2 = if zero_head {
            Conv1d::zeroed("recon2", c, hyper.alpha, k)
        } else {
            Conv1d::init("recon2", c, hyper.alpha, k, &mut rng)
        };
        Ok(Self { hyper, rng_seed, update_count: 0, extract1, extract2, blocks, recon1, recon2 })
    }

    pub fn hyper(&self) -> &ModelHyper {
        &self.hyper
    }

    pub fn alpha(&self) -> usize {
        self.hyper.alpha
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub(crate) fn set_update_count(&mut self, n: u64) {
        self.update_count = n;
    }

    pub(crate) fn bump_update_count(&mut self) {
        self.update_count += 1;
    }

    /// Parameters in canonical (checkpoint) order.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = vec![
            &self.extract1.weight,
            &self.extract1.bias,
            &self.extract2.weight,
            &self.extract2.bias,
        ];
        for b in &self.blocks {
            out.push(&b.conv1.weight);
            out.push(&b.conv1.bias);
            out.push(&b.conv2.weight);
            out.push(&b.conv2.bias);
        }
        out.push(&self.recon1.weight);
        out.push(&self.recon1.bias);
        out.push(&self.recon2.weight);
        out.push(&self.recon2.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![
            &mut self.extract1.weight,
            &mut self.extract1.bias,
            &mut self.extract2.weight,
            &mut self.extract2.bias,
        ];
        for b in &mut self.blocks {
            out.push(&mut b.conv1.weight);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weight);
            out.push(&mut b.conv2.bias);
        }
        out.push(&mut self.recon1.weight);
        out.push(&mut self.recon1.bias);
        out.push(&mut self.recon2.weight);
        out.push(&mut self.recon2.bias);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.all_finite())
    }

    /// Inference pass: `(B, 1, d)` in, `(B, 1, alpha*d)` out.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let alpha = self.hyper.alpha;
        let e1 = relu(&self.extract1.forward(x)?);
        let e2 = relu(&self.extract2.forward(&e1)?);
        let mut g = e2.clone();
        for block in &self.blocks {
            g = block.forward(&g)?;
        }
        let h = e2.add(&g)?;
        let r = relu(&self.recon1.forward(&h)?);
        let phi = self.recon2.forward(&r)?;
        let mut y = sub_pixel_rearrange(&phi, alpha)?;
        y.add_assign(&nn_upsample(x, alpha)?)?;
        Ok(y)
    }

    /// Forward pass that keeps the activations needed by [`backward`](Self::backward).
    pub fn forward_trace(&self, x: Tensor) -> Result<(Tensor, Trace)> {
        self.check_input(&x)?;
        let alpha = self.hyper.alpha;
        let e1_pre = self.extract1.forward(&x)?;
        let e1_act = relu(&e1_pre);
        let e2_pre = self.extract2.forward(&e1_act)?;
        let e2_act = relu(&e2_pre);
        let mut g = e2_act.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, trace) = block.forward_trace(g)?;
            blocks.push(trace);
            g = next;
        }
        let h = e2_act.add(&g)?;
        let r1_pre = self.recon1.forward(&h)?;
        let r1_act = relu(&r1_pre);
        let phi = self.recon2.forward(&r1_act)?;
        let mut y = sub_pixel_rearrange(&phi, alpha)?;
        y.add_assign(&nn_upsample(&x, alpha)?)?;
        let trace = Trace { x, e1_pre, e1_act, e2_pre, blocks, h, r1_pre, r1_act };
        Ok((y, trace))
    }

    /// Accumulates parameter gradients for the traced forward pass and
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, trace: &Trace, grad_y: &Tensor) -> Result<Tensor> {
        let alpha = self.hyper.alpha;
        let g_up = layers::nn_upsample_backward(grad_y, alpha)?;
        let g_phi = sub_pixel_inverse(grad_y, alpha)?;
        let g_r1_act = self.recon2.backward(&trace.r1_act, &g_phi)?;
        let g_r1_pre = layers::relu_backward(&trace.r1_pre, &g_r1_act);
        let g_h = self.recon1.backward(&trace.h, &g_r1_pre)?;

        let mut g_stack = g_h.clone();
        for (block, btrace) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            g_stack = block.backward(btrace, &g_stack)?;
        }
        let mut g_e2_act = g_stack;
        g_e2_act.add_assign(&g_h)?; // feature-space skip around the stack

        let g_e2_pre = layers::relu_backward(&trace.e2_pre, &g_e2_act);
        let g_e1_act = self.extract2.backward(&trace.e1_act, &g_e2_pre)?;
        let g_e1_pre = layers::relu_backward(&trace.e1_pre, &g_e1_act);
        let mut g_x = self.extract1.backward(&trace.x, &g_e1_pre)?;
        g_x.add_assign(&g_up)?; // signal-level residual
        Ok(g_x)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != 1 {
            return Err(Error::ShapeMismatch {
                expected: "(B, 1, d) input".into(),
                got: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }
}

/// Cached activations of one traced forward pass.
pub struct Trace {
    pub(crate) x: Tensor,
    e1_pre: Tensor,
    e1_act: Tensor,
    e2_pre: Tensor,
    blocks: Vec<layers::BlockTrace>,
    h: Tensor,
    r1_pre: Tensor,
    r1_act: Tensor,
}

/// Reconstruct a high-rate series from a preprocessed low-rate one.
pub fn infer(model: &SrpModel, x: &TimeSeries) -> Result<TimeSeries> {
    if x.domain() != Domain::Preprocessed {
        return Err(Error::DomainMismatch {
            expected: Domain::Preprocessed.to_string(),
            got: x.domain().to_string(),
        });
    }
    let input = Tensor::from_vec(1, 1, x.len(), x.samples().to_vec())?;
    let out = model.forward(&input)?;
    Ok(TimeSeries::new(
        out.into_data(),
        x.sample_rate_hz() * model.alpha() as f64,
        Domain::Preprocessed,
    ))
}
