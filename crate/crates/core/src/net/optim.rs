//! Adam with bias correction and the two-phase training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Tensor};

use super::layers::{mse_loss, mse_loss_backward};
use super::SrpModel;

/// Optimization settings. The learning rate starts at `lr_phase1` for
/// `updates_phase1` mini-batch updates and then drops to `lr_phase2` for
/// another `updates_phase2` (the fine-tuning phase).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub lr_phase1: f64,
    pub updates_phase1: usize,
    pub lr_phase2: f64,
    pub updates_phase2: usize,
    pub seed: u64,
    /// Write a checkpoint every N updates when a directory is supplied to
    /// [`train`]; 0 disables intermediate checkpoints.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            lr_phase1: 1e-4,
            updates_phase1: 0,
            lr_phase2: 1e-6,
            updates_phase2: 0,
            seed: 0,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    /// The published recipe: 1e6 updates at 1e-4, then 1e6 more at 1e-6.
    pub fn paper_scale() -> Self {
        Self { updates_phase1: 1_000_000, updates_phase2: 1_000_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidConfig("Adam betas must lie in (0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.lr_phase1 <= 0.0 || self.lr_phase2 <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn total_updates(&self) -> usize {
        self.updates_phase1 + self.updates_phase2
    }

    pub fn lr_at(&self, update: usize) -> f64 {
        if update < self.updates_phase1 {
            self.lr_phase1
        } else {
            self.lr_phase2
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new_like(params: &[&ParamTensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update over `params` using their accumulated gradients.
pub fn adam_step(
    params: &mut [&mut ParamTensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} moment buffers", params.len()),
            got: format!("{}", state.m.len()),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (pi, param) in params.iter_mut().enumerate() {
        if state.m[pi].len() != param.data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("moments of size {}", param.data.len()),
                got: format!("{}", state.m[pi].len()),
            });
        }
        let m = &mut state.m[pi];
        let v = &mut state.v[pi];
        for i in 0..param.data.len() {
            let g = param.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            param.data[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Per-update log of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

/// Train on `(low_res, high_res)` sample pairs in the preprocessed domain.
///
/// Mini-batches are drawn from a seeded shuffle that reshuffles whenever the
/// remaining pool is smaller than a batch, so runs are reproducible for a
/// fixed config. Writes intermediate checkpoints into `checkpoint_dir` when
/// configured.
pub fn train(
    model: &mut SrpModel,
    pairs: &[(&[f64], &[f64])],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let alpha = model.alpha();
    let d = pairs[0].0.len();
    for (lo, hi) in pairs {
        if lo.len() != d || hi.len() != alpha * d {
            return Err(Error::ShapeMismatch {
                expected: format!("pairs of ({d}, {})", alpha * d),
                got: format!("({}, {})", lo.len(), hi.len()),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut next_index = |rng: &mut ChaCha8Rng, order: &mut Vec<usize>| -> usize {
        if cursor >= order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let idx = order[cursor];
        cursor += 1;
        idx
    };

    let mut state = AdamState::new_like(&model.params());
    let mut losses = Vec::with_capacity(cfg.total_updates());

    for update in 0..cfg.total_updates() {
        let batch: Vec<usize> =
            (0..cfg.batch_size).map(|_| next_index(&mut rng, &mut order)).collect();
        let mut x = Vec::with_capacity(cfg.batch_size * d);
        let mut y = Vec::with_capacity(cfg.batch_size * alpha * d);
        for &bi in &batch {
            x.extend_from_slice(pairs[bi].0);
            y.extend_from_slice(pairs[bi].1);
        }
        let x = Tensor::from_vec(cfg.batch_size, 1, d, x)?;
        let y = Tensor::from_vec(cfg.batch_size, 1, alpha * d, y)?;

        let (pred, trace) = model.forward_trace(x)?;
        let loss = mse_loss(&pred, &y)?;
        if !loss.is_finite() {
            let param_norm: f64 = model
                .params()
                .iter()
                .flat_map(|p| p.data.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            return Err(Error::NonFiniteLoss {
                update,
                diagnostic: format!(
                    "lr={:e} batch={:?} param_norm={param_norm:.3e}",
                    cfg.lr_at(update),
                    batch
                ),
            });
        }
        model.zero_grads();
        let grad_y = mse_loss_backward(&pred, &y)?;
        model.backward(&trace, &grad_y)?;
        adam_step(&mut model.params_mut(), &mut state, cfg, cfg.lr_at(update))?;
        model.bump_update_count();
        losses.push(loss);

        if cfg.checkpoint_interval > 0 && (update + 1) % cfg.checkpoint_interval == 0 {
            if let Some(dir) = checkpoint_dir {
                let path = dir.join(format!("ckpt_{:08}.bin", update + 1));
                super::save_checkpoint(model, &path)?;
            }
        }
    }

    Ok(TrainReport { losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelHyper;
    use rand::Rng;

    fn tiny_model(alpha: usize, seed: u64) -> SrpModel {
        SrpModel::new(
            ModelHyper { alpha, channels: 4, n_blocks: 2, kernel_size: 3 },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut model = tiny_model(2, 1);
        let before: Vec<Vec<f64>> = model.params().iter().map(|p| p.data.clone()).collect();
        let mut state = AdamState::new_like(&model.params());
        let cfg = TrainConfig::default();
        model.zero_grads();
        adam_step(&mut model.params_mut(), &mut state, &cfg, 1e-2).unwrap();
        let after: Vec<Vec<f64>> = model.params().iter().map(|p| p.data.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn adam_first_step_is_signed_gradient_scaled_by_lr() {
        // At t=1 the bias-corrected moments collapse to g and g^2, so the
        // update is -lr * g / (|g| + eps').
        let mut param = ParamTensor::new("p", vec![3], vec![1.0, -2.0, 0.5]);
        param.grad = vec![0.3, -0.7, 0.0];
        let cfg = TrainConfig::default();
        let lr = 1e-2;
        let mut state = AdamState::new_like(&[&param]);
        let mut params = [&mut param];
        adam_step(&mut params, &mut state, &cfg, lr).unwrap();
        let expect = |p0: f64, g: f64| {
            let m_hat = g;
            let v_hat = g * g;
            p0 - lr * m_hat / (v_hat.sqrt() + cfg.epsilon)
        };
        assert!((param.data[0] - expect(1.0, 0.3)).abs() < 1e-12);
        assert!((param.data[1] - expect(-2.0, -0.7)).abs() < 1e-12);
        assert_eq!(param.data[2], 0.5);
        // Magnitude is approximately lr for any non-zero gradient.
        assert!(((param.data[0] - 1.0).abs() - lr).abs() < 1e-6);
    }

    #[test]
    fn adam_rejects_mismatched_state() {
        let mut param = ParamTensor::new("p", vec![2], vec![0.0, 0.0]);
        let other = ParamTensor::new("q", vec![3], vec![0.0; 3]);
        let mut state = AdamState::new_like(&[&other]);
        let cfg = TrainConfig::default();
        let mut params = [&mut param];
        assert!(matches!(
            adam_step(&mut params, &mut state, &cfg, 1e-3),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn toy_pairs(n: usize, d: usize, alpha: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let hi: Vec<f64> = (0..alpha * d).map(|_| rng.random_range(0.0..1.0)).collect();
                let lo: Vec<f64> = (0..d).map(|i| hi[alpha * i]).collect();
                (lo, hi)
            })
            .collect()
    }

    fn as_refs(pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<(&[f64], &[f64])> {
        pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect()
    }

    #[test]
    fn train_records_one_loss_per_update_and_decreases() {
        let pairs = toy_pairs(8, 8, 2, 3);
        let refs = as_refs(&pairs);
        let mut model = tiny_model(2, 4);
        let cfg = TrainConfig {
            batch_size: 4,
            updates_phase1: 60,
            updates_phase2: 10,
            lr_phase1: 1e-2,
            lr_phase2: 1e-4,
            seed: 5,
            ..Default::default()
        };
        let report = train(&mut model, &refs, &cfg, None).unwrap();
        assert_eq!(report.losses.len(), 70);
        assert_eq!(model.update_count(), 70);
        let head: f64 = report.losses[..10].iter().sum();
        let tail: f64 = report.losses[60..].iter().sum();
        assert!(tail < head, "loss failed to decrease: {head} -> {tail}");
    }

    #[test]
    fn train_is_deterministic_per_seed() {
        let pairs = toy_pairs(6, 8, 2, 9);
        let refs = as_refs(&pairs);
        let cfg = TrainConfig {
            batch_size: 3,
            updates_phase1: 25,
            lr_phase1: 1e-3,
            seed: 11,
            ..Default::default()
        };
        let mut m1 = tiny_model(2, 8);
        let r1 = train(&mut m1, &refs, &cfg, None).unwrap();
        let mut m2 = tiny_model(2, 8);
        let r2 = train(&mut m2, &refs, &cfg, None).unwrap();
        assert_eq!(r1.losses, r2.losses);
        for (a, b) in m1.params().iter().zip(m2.params().iter()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn train_rejects_inconsistent_pairs() {
        let mut model = tiny_model(2, 0);
        let lo = vec![0.0; 8];
        let hi = vec![0.0; 15]; // should be 16
        let pairs: Vec<(&[f64], &[f64])> = vec![(lo.as_slice(), hi.as_slice())];
        let cfg = TrainConfig { updates_phase1: 1, ..Default::default() };
        assert!(matches!(
            train(&mut model, &pairs, &cfg, None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn train_empty_dataset_is_an_error() {
        let mut model = tiny_model(2, 0);
        let cfg = TrainConfig { updates_phase1: 1, ..Default::default() };
        assert!(matches!(train(&mut model, &[], &cfg, None), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn paper_scale_schedule_passes_validation() {
        let cfg = TrainConfig::paper_scale();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_updates(), 2_000_000);
        assert_eq!(cfg.lr_at(0), 1e-4);
        assert_eq!(cfg.lr_at(999_999), 1e-4);
        assert_eq!(cfg.lr_at(1_000_000), 1e-6);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let mut model = tiny_model(2, 1);
        let lo = vec![f64::INFINITY; 8];
        let hi = vec![0.0; 16];
        let pairs: Vec<(&[f64], &[f64])> = vec![(lo.as_slice(), hi.as_slice())];
        let cfg = TrainConfig { updates_phase1: 3, batch_size: 1, ..Default::default() };
        match train(&mut model, &pairs, &cfg, None) {
            Err(Error::NonFiniteLoss { update: 0, diagnostic }) => {
                assert!(diagnostic.contains("lr="));
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }
}
