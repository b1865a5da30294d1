//! Adam with coupled L2, epoch step-decay of the learning rate, patience
//! based early stopping and the training loop.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::model::{
    batch_loss_and_gradients, evaluate_loss, init_parameters, ModelConfig, ModelParameters,
    SequenceSample, Window,
};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub decay_gamma: f64,
    pub decay_every: usize,
    pub l2_penalty: f64,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Playas per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Optional global gradient-norm clip.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            decay_gamma: 0.9,
            decay_every: 5,
            l2_penalty: 2.5e-6,
            patience: 16,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 500,
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.base_lr > 0.0) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return bad(format!("decay_gamma must be in (0, 1], got {}", self.decay_gamma));
        }
        if self.decay_every == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("decay_every, patience and batch_size must be at least 1".into());
        }
        if !(self.l2_penalty >= 0.0) {
            return bad(format!("l2_penalty must be non-negative, got {}", self.l2_penalty));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must be in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive".into());
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return bad(format!("max_grad_norm must be positive, got {n}"));
            }
        }
        Ok(())
    }
}

/// `base_lr · gamma^⌊epoch / decay_every⌋`, epochs counted from 0.
pub fn lr_at_epoch(epoch: usize, config: &TrainConfig) -> f64 {
    let steps = epoch / config.decay_every.max(1);
    // Repeated multiplication rather than powi, whose rounding may differ
    // between compile-time and run-time evaluation.
    let decay = (0..steps).fold(1.0, |acc, _| acc * config.decay_gamma);
    config.base_lr * decay
}

/// Moment estimates per parameter tensor, in sorted parameter-name order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn for_params(params: &ModelParameters) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|(_, m)| vec![0.0; m.data().len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// State for a single flat parameter slice.
    pub fn for_len(n: usize) -> Self {
        Self {
            m: vec![vec![0.0; n]],
            v: vec![vec![0.0; n]],
            t: 0,
        }
    }
}

/// Update one tensor in place. `t` is the already-incremented step count.
fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    config: &TrainConfig,
) {
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for k in 0..theta.len() {
        let g = grad[k] + config.l2_penalty * theta[k];
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        theta[k] -= lr * m_hat / (v_hat.sqrt() + config.adam_epsilon);
    }
}

/// One Adam step on a flat slice, with L2 added to the gradient before the
/// moment updates.
pub fn adam_step_slice(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != 1 || state.m[0].len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params", params.len()),
            format!("{} grads", grads.len()),
        ));
    }
    check_lr_and_grads(lr, grads.iter())?;
    state.t += 1;
    let (m, v) = (&mut state.m[0], &mut state.v[0]);
    adam_update(params, grads, m, v, state.t, lr, config);
    Ok(())
}

/// One Adam step over every parameter tensor.
pub fn adam_step(
    params: &mut ModelParameters,
    grads: &ModelParameters,
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if state.m.len() != 9 {
        return Err(Error::shape("adam_step", "9 tensors", format!("{} moment arrays", state.m.len())));
    }
    for ((name, p), (_, g)) in params.tensors().iter().zip(grads.tensors()) {
        if p.shape() != g.shape() {
            return Err(Error::shape(name, p.shape_str(), g.shape_str()));
        }
    }
    check_lr_and_grads(lr, grads.tensors().iter().flat_map(|(_, g)| g.data().iter()))?;
    state.t += 1;
    let t = state.t;
    for (k, ((_, p), (_, g))) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        adam_update(p.data_mut(), g.data(), &mut state.m[k], &mut state.v[k], t, lr, config);
    }
    Ok(())
}

fn check_lr_and_grads<'a>(lr: f64, mut grads: impl Iterator<Item = &'a f64>) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if grads.any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(())
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut ModelParameters, max_norm: f64) -> f64 {
    let norm = grads.sum_squares().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for (_, g) in grads.tensors_mut() {
            g.scale(k);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Halt { best_epoch: usize },
}

/// Tracks the best validation loss and a snapshot of the matching parameters.
#[derive(Clone, Debug)]
pub struct EarlyStopController {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
    best_params: Option<ModelParameters>,
}

impl EarlyStopController {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: None,
            epochs_since_improvement: 0,
            best_params: None,
        }
    }

    /// Record the validation loss of a finished epoch. A strictly lower loss
    /// resets the counter and snapshots `params`; anything else increments
    /// it, and the controller halts once it reaches the patience.
    pub fn update(&mut self, epoch: usize, val_loss: f64, params: &ModelParameters) -> StopDecision {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = Some(epoch);
            self.epochs_since_improvement = 0;
            self.best_params = Some(params.clone());
        } else {
            self.epochs_since_improvement += 1;
        }
        match self.best_epoch {
            Some(best_epoch) if self.epochs_since_improvement >= self.patience => {
                StopDecision::Halt { best_epoch }
            }
            _ => StopDecision::Continue,
        }
    }

    pub fn best_params(&self) -> Option<&ModelParameters> {
        self.best_params.as_ref()
    }

    pub fn into_best_params(self) -> Option<ModelParameters> {
        self.best_params
    }
}

/// Run the early-stopping rule over a loss trace without parameters.
/// Returns `(halt epoch, best epoch)` or `None` if the trace never halts.
pub fn early_stop_trace(losses: &[f64], patience: usize) -> Option<(usize, usize)> {
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since = 0;
    for (epoch, &l) in losses.iter().enumerate() {
        if l < best {
            best = l;
            best_epoch = epoch;
            since = 0;
        } else {
            since += 1;
            if since >= patience {
                return Some((epoch, best_epoch));
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub is_best: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Epoch after which early stopping fired, if it did.
    pub halted_at: Option<usize>,
}

impl TrainingHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "lr", "train_loss", "val_loss", "is_best"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.lr.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.is_best.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Train from a fresh initialization seeded by `train_config.seed`.
///
/// Each epoch shuffles the playa order with an epoch-seeded generator, runs
/// mini-batches over the train prefix of every sequence with one Adam step
/// per batch, then scores the full sequences on the validation months. The
/// returned parameters are the best-validation snapshot.
pub fn fit(
    samples: &[SequenceSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParameters, TrainingHistory)> {
    fit_with(samples, model_config, train_config, |_| {})
}

pub fn fit_with<F>(
    samples: &[SequenceSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ModelParameters, TrainingHistory)>
where
    F: FnMut(&EpochRecord),
{
    train_config.validate()?;
    model_config.validate()?;
    for s in samples {
        s.validate(model_config)?;
    }
    let trainable: Vec<&SequenceSample> = samples
        .iter()
        .filter(|s| s.count_in(Split::Train, s.len()) > 0)
        .collect();
    if trainable.is_empty() {
        return Err(Error::EmptyLossWindow(Split::Train.to_string()));
    }
    if samples.iter().all(|s| s.count_in(Split::Validation, s.len()) == 0) {
        return Err(Error::EmptyLossWindow(Split::Validation.to_string()));
    }

    let mut params = init_parameters(model_config, train_config.seed)?;
    let mut state = AdamState::for_params(&params);
    let mut stopper = EarlyStopController::new(train_config.patience);
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..trainable.len()).collect();

    for epoch in 0..train_config.max_epochs {
        let lr = lr_at_epoch(epoch, train_config);
        let mut shuffle_rng = rng::stream(
            train_config.seed,
            rng::streams::SHUFFLE_BASE + epoch as u64,
        );
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);

        let mut weighted_loss = 0.0;
        let mut weight = 0usize;
        for (batch_index, chunk) in order.chunks(train_config.batch_size).enumerate() {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| trainable[i]).collect();
            let (loss, mut grads) = batch_loss_and_gradients(
                &batch,
                &params,
                model_config,
                Split::Train,
                Window::TrainPrefix,
            )?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_index,
                    reason: format!("loss {loss}"),
                });
            }
            if let Some(max_norm) = train_config.max_grad_norm {
                clip_grad_norm(&mut grads, max_norm);
            }
            adam_step(&mut params, &grads, &mut state, lr, train_config).map_err(|e| {
                Error::Divergence {
                    epoch,
                    batch: batch_index,
                    reason: e.to_string(),
                }
            })?;
            let n: usize = batch
                .iter()
                .map(|s| s.count_in(Split::Train, s.train_prefix_len()))
                .sum();
            weighted_loss += loss * n as f64;
            weight += n;
        }
        let train_loss = weighted_loss / weight as f64;

        let (val_loss, _) = evaluate_loss(samples, &params, model_config, Split::Validation)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                reason: format!("validation loss {val_loss}"),
            });
        }
        let decision = stopper.update(epoch, val_loss, &params);
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            is_best: stopper.best_epoch == Some(epoch),
        };
        on_epoch(&record);
        history.epochs.push(record);
        if let StopDecision::Halt { .. } = decision {
            history.halted_at = Some(epoch);
            break;
        }
    }
    history.best_epoch = stopper.best_epoch;
    let best = stopper
        .into_best_params()
        .ok_or_else(|| Error::Config("max_epochs is 0; nothing was trained".into()))?;
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbedDims, VocabSizes};
    use proptest::prelude::*;

    #[test]
    fn step_decay_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at_epoch(0, &cfg), 0.01);
        assert_eq!(lr_at_epoch(4, &cfg), 0.01);
        assert_eq!(lr_at_epoch(5, &cfg), 0.01 * 0.9);
        assert_eq!(lr_at_epoch(35, &cfg), 0.01 * (0.9 * 0.9 * 0.9 * 0.9 * 0.9 * 0.9 * 0.9));
        assert!((lr_at_epoch(35, &cfg) - 0.004_782_969).abs() < 1e-12);
    }

    #[test]
    fn defaults_validate() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            decay_gamma: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_gradient_at_zero_is_a_fixed_point() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.0];
        let mut st = AdamState::for_len(1);
        adam_step_slice(&mut p, &[0.0], &mut st, 0.01, &cfg).unwrap();
        assert_eq!(p, vec![0.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig {
            l2_penalty: 0.0,
            ..TrainConfig::default()
        };
        let mut p = vec![1.0];
        let mut st = AdamState::for_len(1);
        adam_step_slice(&mut p, &[0.5], &mut st, 0.01, &cfg).unwrap();
        let delta = p[0] - 1.0;
        assert!((delta + 0.009_999_999_8).abs() < 1e-13, "{delta}");
        assert_eq!(st.t, 1);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0];
        let mut st = AdamState::for_len(1);
        let err = adam_step_slice(&mut p, &[f64::NAN], &mut st, 0.01, &cfg);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, vec![1.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn three_steps_match_scalar_reference() {
        let cfg = TrainConfig::default();
        let grads = [0.3, -1.2, 0.05];
        let mut p = vec![0.7];
        let mut st = AdamState::for_len(1);
        for g in grads {
            adam_step_slice(&mut p, &[g], &mut st, 0.01, &cfg).unwrap();
        }
        // Hand-unrolled reference.
        let (b1, b2, eps, l2, lr) = (0.9f64, 0.999f64, 1e-8, 2.5e-6, 0.01);
        let (mut theta, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        let (mut p1, mut p2) = (1.0f64, 1.0f64);
        for g in grads {
            p1 *= b1;
            p2 *= b2;
            let g = g + l2 * theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - p1)) / ((v / (1.0 - p2)).sqrt() + eps);
        }
        assert!((p[0] - theta).abs() <= 1e-15, "{} vs {theta}", p[0]);
    }

    #[test]
    fn early_stop_traces() {
        // Strictly decreasing: never halts.
        let dec: Vec<f64> = (0..100).map(|e| 1.0 / (e as f64 + 1.0)).collect();
        assert_eq!(early_stop_trace(&dec, 16), None);

        // Best at 35, flat afterwards.
        let mut trace: Vec<f64> = (0..=35).map(|e| 1.0 - e as f64 * 0.01).collect();
        trace.extend(std::iter::repeat(0.9).take(40));
        assert_eq!(early_stop_trace(&trace, 16), Some((51, 35)));

        // Improvements at 0 and 3 only.
        let mut trace = vec![1.0, 1.5, 1.2, 0.8];
        trace.extend(std::iter::repeat(0.8).take(30));
        assert_eq!(early_stop_trace(&trace, 16), Some((19, 3)));

        // Patience 1, constant loss.
        assert_eq!(early_stop_trace(&[0.5, 0.5, 0.5], 1), Some((1, 0)));
    }

    #[test]
    fn controller_restores_the_best_snapshot() {
        let cfg = ModelConfig {
            hidden_size: 2,
            numeric_feature_count: 1,
            embed_dims: EmbedDims {
                playa_id: 1,
                huc8: 1,
                author: 1,
            },
            vocab_sizes: VocabSizes {
                playa_id: 1,
                huc8: 1,
                author: 1,
            },
        };
        let mut ctl = EarlyStopController::new(2);
        let mut p = ModelParameters::zeros(&cfg);
        let mut snapshot = None;
        for (epoch, loss) in [3.0, 2.0, 2.5, 2.0].into_iter().enumerate() {
            p.head_b.data_mut()[0] = epoch as f64;
            if epoch == 1 {
                snapshot = Some(p.clone());
            }
            let d = ctl.update(epoch, loss, &p);
            assert!(ctl.epochs_since_improvement <= ctl.patience);
            if epoch == 3 {
                assert_eq!(d, StopDecision::Halt { best_epoch: 1 });
            } else {
                assert_eq!(d, StopDecision::Continue);
            }
        }
        assert_eq!(ctl.best_params(), snapshot.as_ref());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let cfg = ModelConfig {
            hidden_size: 2,
            numeric_feature_count: 1,
            embed_dims: EmbedDims {
                playa_id: 1,
                huc8: 1,
                author: 1,
            },
            vocab_sizes: VocabSizes {
                playa_id: 1,
                huc8: 1,
                author: 1,
            },
        };
        let mut g = ModelParameters::zeros(&cfg);
        g.w_hh.fill(3.0);
        let before = clip_grad_norm(&mut g, 1.0);
        assert!(before > 1.0);
        assert!((g.sum_squares().sqrt() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lr_is_non_increasing(epoch in 0usize..2000, gamma in 0.01f64..=1.0, every in 1usize..20) {
            let cfg = TrainConfig { decay_gamma: gamma, decay_every: every, ..TrainConfig::default() };
            prop_assert!(lr_at_epoch(epoch + 1, &cfg) <= lr_at_epoch(epoch, &cfg));
        }

        #[test]
        fn l2_alone_never_grows_a_parameter(
            theta in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0],
            l2 in 1e-6f64..1.0,
        ) {
            // Fresh state: the first step has magnitude lr, so |θ| ≥ lr keeps
            // the update from overshooting zero.
            let cfg = TrainConfig { l2_penalty: l2, ..TrainConfig::default() };
            let mut p = vec![theta];
            let mut st = AdamState::for_len(1);
            adam_step_slice(&mut p, &[0.0], &mut st, 0.01, &cfg).unwrap();
            prop_assert!(p[0].abs() <= theta.abs());
        }
    }
}
