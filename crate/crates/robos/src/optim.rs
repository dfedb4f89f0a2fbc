//! Adam and the mini-batch training loop.
//!
//! The optimizer follows the standard recurrence: first/second moment
//! updates, bias correction with the incremented step counter, then
//! `theta -= eta * m_hat / (sqrt(v_hat) + delta)`. The training loop runs
//! shuffled mini-batches of the empirical risk (mean per-sample loss plus an
//! optional `l2/2 * ||theta||^2` term), tracks validation loss on the
//! chronological tail of the training split, stops early on `patience`
//! stale epochs, and returns the best-validation parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::WindowedDataset;
use crate::loss::{LossError, LossSpec};
use crate::nn::{GradientBuffer, NetError, Network};
use crate::par::map_indices;
use crate::seeds;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("training diverged at epoch {epoch}: non-finite risk")]
    Diverged { epoch: usize },
    #[error("gradient shape does not match network")]
    ShapeMismatch,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch inputs and targets disagree: {inputs} vs {targets}")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Adam optimizer state: moment buffers plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradientBuffer,
    v: GradientBuffer,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    /// Numerical stabilizer added to `sqrt(v_hat)` in the update.
    pub num_delta: f64,
}

impl AdamState {
    /// Fresh state with the standard constants `beta1 = 0.9`,
    /// `beta2 = 0.999`, `delta = 1e-8`.
    pub fn new(net: &Network, eta: f64) -> Self {
        AdamState {
            m: GradientBuffer::zeros_like(net),
            v: GradientBuffer::zeros_like(net),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eta,
            num_delta: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update of every parameter in `net` from gradient `grad`.
    /// The step counter increments first, so bias corrections use the new
    /// value.
    pub fn step(&mut self, net: &mut Network, grad: &GradientBuffer) -> Result<(), TrainError> {
        if !grad.shape_matches(net) || !self.m.shape_matches(net) {
            return Err(TrainError::ShapeMismatch);
        }
        if !grad.is_finite() {
            return Err(TrainError::NonFiniteGradient);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for ((layer, m), (v, g)) in net
            .layers_mut()
            .iter_mut()
            .zip(&mut self.m.layers)
            .zip(self.v.layers.iter_mut().zip(&grad.layers))
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let ms = m.d_weights.iter_mut().chain(m.d_bias.iter_mut());
            let vs = v.d_weights.iter_mut().chain(v.d_bias.iter_mut());
            let gs = g.d_weights.iter().chain(g.d_bias.iter());
            for (((p, m), v), &g) in params.zip(ms).zip(vs).zip(gs) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.eta * m_hat / (v_hat.sqrt() + self.num_delta);
            }
        }
        Ok(())
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub l2_coeff: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults: 200 epochs, batch 32, lr 1e-3, patience 5, no L2.
    pub fn new(loss: LossSpec) -> Self {
        TrainConfig {
            loss,
            max_epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 5,
            l2_coeff: 0.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        self.loss.validate()?;
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(TrainError::InvalidConfig(
                "max_epochs, batch_size, and patience must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_coeff.is_finite() && self.l2_coeff >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "l2_coeff must be nonnegative, got {}",
                self.l2_coeff
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }

    /// `epoch,train_loss,val_loss,stopped_early` rows; the flag is true only
    /// on the row where early stopping triggered.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,stopped_early\n");
        for (i, r) in self.records.iter().enumerate() {
            let stopped = self.stopped_early && i + 1 == self.records.len();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, stopped
            ));
        }
        out
    }
}

/// Carves the early-stopping validation slice out of `n_train` training
/// windows: the chronological last 10% (at least one window).
pub fn validation_split(n_train: usize) -> (usize, usize) {
    let n_val = (n_train / 10).max(1);
    (n_train.saturating_sub(n_val), n_val)
}

/// Mean per-sample loss over a batch plus `l2_coeff/2 * ||theta||^2`.
pub fn empirical_risk(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[f64],
    spec: &LossSpec,
    l2_coeff: f64,
) -> Result<f64, TrainError> {
    if inputs.len() != targets.len() {
        return Err(TrainError::LengthMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    if inputs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let losses = map_indices(inputs.len(), |i| -> Result<f64, TrainError> {
        let yhat = net.forward(&inputs[i])?;
        Ok(spec.value(targets[i] - yhat)?)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    let mut risk = sum / inputs.len() as f64;
    if l2_coeff > 0.0 {
        risk += l2_coeff * 0.5 * net.param_sq_norm();
    }
    Ok(risk)
}

/// Mean loss gradient over the batch (no regularization term), exact
/// reverse mode per sample, accumulated in index order.
pub fn batch_gradient(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[f64],
    spec: &LossSpec,
) -> Result<GradientBuffer, TrainError> {
    if inputs.len() != targets.len() {
        return Err(TrainError::LengthMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    if inputs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let indices: Vec<usize> = (0..inputs.len()).collect();
    batch_gradient_indexed(net, inputs, targets, &indices, spec)
}

fn batch_gradient_indexed(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[f64],
    batch: &[usize],
    spec: &LossSpec,
) -> Result<GradientBuffer, TrainError> {
    let per_sample = map_indices(batch.len(), |k| -> Result<GradientBuffer, TrainError> {
        let i = batch[k];
        let yhat = net.forward(&inputs[i])?;
        let r = targets[i] - yhat;
        // dL/dy_hat = -dL/dr.
        let upstream = -spec.grad(r)?;
        Ok(net.backward(&inputs[i], upstream)?)
    });
    let mut acc: Option<GradientBuffer> = None;
    for g in per_sample {
        let g = g?;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(total) => total.add_assign(&g),
        }
    }
    let mut total = acc.expect("batch checked nonempty");
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

/// Trains `net` on the training windows of `data` and returns the
/// parameters of the best validation epoch together with the loss history.
pub fn train(
    net: Network,
    data: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainingHistory), TrainError> {
    cfg.validate()?;
    let (inputs, targets) = data.train_slices();
    let n_train = inputs.len();
    if n_train < 2 {
        return Err(TrainError::DatasetTooSmall(format!(
            "{n_train} training windows; need at least 2"
        )));
    }
    if cfg.batch_size > n_train {
        return Err(TrainError::DatasetTooSmall(format!(
            "batch size {} exceeds {} training windows",
            cfg.batch_size, n_train
        )));
    }
    let (n_fit, n_val) = validation_split(n_train);
    let (fit_inputs, val_inputs) = inputs.split_at(n_fit);
    let (fit_targets, val_targets) = targets.split_at(n_fit);
    debug_assert_eq!(val_inputs.len(), n_val);

    let mut net = net;
    let mut adam = AdamState::new(&net, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..n_fit).collect();

    let mut history = TrainingHistory::default();
    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;

    let non_finite_as_divergence = |e: TrainError, epoch: usize| match e {
        TrainError::Loss(LossError::NonFiniteResidual(_)) | TrainError::NonFiniteGradient => {
            TrainError::Diverged { epoch }
        }
        other => other,
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = batch_gradient_indexed(&net, fit_inputs, fit_targets, chunk, &cfg.loss)
                .map_err(|e| non_finite_as_divergence(e, epoch))?;
            if cfg.l2_coeff > 0.0 {
                grad.add_scaled_params(&net, cfg.l2_coeff);
            }
            adam
                .step(&mut net, &grad)
                .map_err(|e| non_finite_as_divergence(e, epoch))?;
        }

        let train_loss = empirical_risk(&net, fit_inputs, fit_targets, &cfg.loss, cfg.l2_coeff)
            .map_err(|e| non_finite_as_divergence(e, epoch))?;
        let val_loss = empirical_risk(&net, val_inputs, val_targets, &cfg.loss, 0.0)
            .map_err(|e| non_finite_as_divergence(e, epoch))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_net = net.clone();
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    Ok((best_net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};
    use proptest::prelude::*;

    // theta_t for 10 Adam steps with g = 1 and the standard constants,
    // from a high-precision evaluation of the recurrence: each step
    // subtracts exactly eta / (1 + delta).
    const STEP: f64 = 0.000_999_999_990_000_000_1;

    fn scalar_net(w: f64) -> Network {
        Network::from_layers(vec![
            DenseLayer::from_parts(vec![w], vec![0.0], 1, Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    fn scalar_grad(net: &Network, g: f64) -> GradientBuffer {
        let mut buf = GradientBuffer::zeros_like(net);
        buf.layers[0].d_weights[0] = g;
        buf
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = Network::init(&[3, 4, 1], 9).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 1e-3);
        let grad = GradientBuffer::zeros_like(&net);
        adam.step(&mut net, &grad).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_matches_derived_value() {
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net, 1e-3);
        let grad = scalar_grad(&net, 1.0);
        adam.step(&mut net, &grad).unwrap();
        let w = net.layers()[0].weights[0];
        assert!((w + STEP).abs() < 1e-15, "got {w}");
    }

    #[test]
    fn ten_steps_match_high_precision_recurrence() {
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net, 1e-3);
        for t in 1..=10u32 {
            let grad = scalar_grad(&net, 1.0);
            adam.step(&mut net, &grad).unwrap();
            let expected = -STEP * f64::from(t);
            let w = net.layers()[0].weights[0];
            assert!(
                (w - expected).abs() < 1e-12,
                "step {t}: {w} vs {expected}"
            );
        }
    }

    #[test]
    fn hundred_steps_on_quadratic_decrease_theta() {
        // f(theta) = theta^2, gradient 2 theta, starting at 1.
        let mut net = scalar_net(1.0);
        let mut adam = AdamState::new(&net, 1e-3);
        let mut prev = 1.0f64;
        for t in 1..=100 {
            let w = net.layers()[0].weights[0];
            let grad = scalar_grad(&net, 2.0 * w);
            adam.step(&mut net, &grad).unwrap();
            let now = net.layers()[0].weights[0];
            if t > 5 {
                assert!(now.abs() < prev.abs(), "step {t}: |{now}| >= |{prev}|");
            }
            prev = now;
        }
        assert!(prev.abs() < 0.95, "final |theta| = {}", prev.abs());
    }

    #[test]
    fn adam_matches_independent_scalar_reference() {
        // Hand-rolled scalar Adam, kept separate from the buffer-based one.
        let (b1, b2, eta, de) = (0.9, 0.999, 1e-3, 1e-8);
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 1.0f64);
        let mut net = scalar_net(1.0);
        let mut adam = AdamState::new(&net, eta);
        for t in 1..=50 {
            let g = 2.0 * theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= eta * mh / (vh.sqrt() + de);

            let g_net = scalar_grad(&net, 2.0 * net.layers()[0].weights[0]);
            adam.step(&mut net, &g_net).unwrap();
            let w = net.layers()[0].weights[0];
            assert!((w - theta).abs() < 1e-15, "step {t}: {w} vs {theta}");
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_non_finite() {
        let mut net = Network::init(&[2, 1], 0).unwrap();
        let other = Network::init(&[3, 1], 0).unwrap();
        let mut adam = AdamState::new(&net, 1e-3);
        let wrong = GradientBuffer::zeros_like(&other);
        assert!(matches!(
            adam.step(&mut net, &wrong),
            Err(TrainError::ShapeMismatch)
        ));
        let mut bad = GradientBuffer::zeros_like(&net);
        bad.layers[0].d_weights[0] = f64::NAN;
        assert!(matches!(
            adam.step(&mut net, &bad),
            Err(TrainError::NonFiniteGradient)
        ));
    }

    #[test]
    fn empirical_risk_examples() {
        // Perfect predictor: y = 2x, w = 2.
        let net = scalar_net(2.0);
        let inputs = vec![vec![1.0], vec![2.0]];
        let targets = vec![2.0, 4.0];
        assert_eq!(
            empirical_risk(&net, &inputs, &targets, &LossSpec::Square, 0.0).unwrap(),
            0.0
        );

        // Residuals {1, 3} under square loss: (1 + 9) / 2 = 5.
        let zero = scalar_net(0.0);
        let r = empirical_risk(
            &zero,
            &[vec![0.0], vec![0.0]],
            &[1.0, 3.0],
            &LossSpec::Square,
            0.0,
        )
        .unwrap();
        assert_eq!(r, 5.0);

        // Robos risk stays below lambda on any batch.
        let spec = LossSpec::robos(1.0, 0.4, 0.01);
        let r = empirical_risk(
            &zero,
            &[vec![0.0], vec![0.0], vec![0.0]],
            &[100.0, -5.0, 0.3],
            &spec,
            0.0,
        )
        .unwrap();
        assert!(r < 0.4);

        assert!(matches!(
            empirical_risk(&zero, &[], &[], &LossSpec::Square, 0.0),
            Err(TrainError::EmptyBatch)
        ));
    }

    #[test]
    fn empirical_risk_includes_l2_term() {
        let net = scalar_net(2.0); // ||theta||^2 = 4 (bias 0)
        let r = empirical_risk(&net, &[vec![1.0]], &[2.0], &LossSpec::Square, 0.5).unwrap();
        assert_eq!(r, 0.5 * 0.5 * 4.0);
    }

    fn linear_dataset(n: usize, slope: f64, seed: u64) -> WindowedDataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
            inputs.push(vec![x]);
            targets.push(slope * x);
        }
        let split = (0.8 * n as f64).floor() as usize;
        WindowedDataset::from_parts(inputs, targets, split, 0.0, 1.0).unwrap()
    }

    #[test]
    fn train_converges_on_noiseless_linear_data() {
        let data = linear_dataset(200, 2.0, 5);
        let net = Network::init(&[1, 1], 1).unwrap();
        let mut cfg = TrainConfig::new(LossSpec::Square);
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 16;
        cfg.patience = 200;
        cfg.seed = 5;
        let (trained, _) = train(net, &data, &cfg).unwrap();
        let (fit_in, fit_t) = data.train_slices();
        let risk = empirical_risk(&trained, fit_in, fit_t, &LossSpec::Square, 0.0).unwrap();
        assert!(risk.sqrt() < 1e-2, "train RMSE {}", risk.sqrt());
    }

    #[test]
    fn early_stop_honors_patience_exactly() {
        // Zero targets and a zero network: validation loss is 0 every epoch,
        // so it never strictly improves after epoch 1.
        let inputs: Vec<Vec<f64>> = (0..20).map(|_| vec![0.0]).collect();
        let targets = vec![0.0; 20];
        let data = WindowedDataset::from_parts(inputs, targets, 16, 0.0, 1.0).unwrap();
        let net = scalar_net(0.0);
        let mut cfg = TrainConfig::new(LossSpec::Square);
        cfg.patience = 1;
        cfg.batch_size = 4;
        let (_, history) = train(net, &data, &cfg).unwrap();
        assert!(history.stopped_early);
        assert_eq!(history.epochs_run(), 2);
        assert_eq!(history.best_epoch, 1);
    }

    #[test]
    fn train_is_deterministic() {
        let data = linear_dataset(120, 1.5, 9);
        let mut cfg = TrainConfig::new(LossSpec::huber(1.0));
        cfg.max_epochs = 20;
        cfg.patience = 20;
        cfg.seed = 77;
        let run = || {
            let net = Network::init(&[1, 4, 1], 13).unwrap();
            train(net, &data, &cfg).unwrap()
        };
        let (net_a, hist_a) = run();
        let (net_b, hist_b) = run();
        assert_eq!(net_a, net_b);
        assert_eq!(hist_a, hist_b);
    }

    #[test]
    fn train_returns_best_validation_epoch() {
        let data = linear_dataset(150, 2.0, 3);
        let net = Network::init(&[1, 4, 1], 2).unwrap();
        let mut cfg = TrainConfig::new(LossSpec::Square);
        cfg.max_epochs = 40;
        cfg.patience = 40;
        cfg.learning_rate = 5e-3;
        let (trained, history) = train(net, &data, &cfg).unwrap();
        let best_recorded = history
            .records
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        let (inputs, targets) = data.train_slices();
        let (n_fit, _) = validation_split(inputs.len());
        let val_risk = empirical_risk(
            &trained,
            &inputs[n_fit..],
            &targets[n_fit..],
            &LossSpec::Square,
            0.0,
        )
        .unwrap();
        assert!((val_risk - best_recorded).abs() < 1e-12);
    }

    #[test]
    fn train_rejects_oversized_batch_and_tiny_datasets() {
        let data = linear_dataset(10, 1.0, 0);
        let net = Network::init(&[1, 1], 0).unwrap();
        let mut cfg = TrainConfig::new(LossSpec::Square);
        cfg.batch_size = 100;
        assert!(matches!(
            train(net, &data, &cfg),
            Err(TrainError::DatasetTooSmall(_))
        ));
    }

    #[test]
    fn history_csv_shape() {
        let history = TrainingHistory {
            records: vec![
                EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.25, },
                EpochRecord { epoch: 2, train_loss: 0.4, val_loss: 0.3, },
            ],
            stopped_early: true,
            best_epoch: 1,
        };
        let csv = history.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss,stopped_early");
        assert_eq!(lines[1], "1,0.5,0.25,false");
        assert_eq!(lines[2], "2,0.4,0.3,true");
    }

    proptest! {
        #[test]
        fn degenerate_betas_give_sign_normalized_descent(g in -100f64..100.0) {
            prop_assume!(g.abs() > 1e-9);
            let mut net = scalar_net(0.0);
            let mut adam = AdamState::new(&net, 1e-2);
            adam.beta1 = 0.0;
            adam.beta2 = 0.0;
            let grad = scalar_grad(&net, g);
            adam.step(&mut net, &grad).unwrap();
            let w = net.layers()[0].weights[0];
            let expected = -1e-2 * g / (g.abs() + 1e-8);
            prop_assert!((w - expected).abs() < 1e-15);
        }

        #[test]
        fn first_update_is_minus_sign_of_gradient_times_eta(g in -1e3f64..1e3) {
            prop_assume!(g.abs() > 1e-6);
            let mut net = scalar_net(0.0);
            let mut adam = AdamState::new(&net, 1e-3);
            let grad = scalar_grad(&net, g);
            adam.step(&mut net, &grad).unwrap();
            let w = net.layers()[0].weights[0];
            // m_hat = g, v_hat = g^2, so the update is -eta * sign(g) up to
            // the delta slack.
            prop_assert!((w + 1e-3 * g.signum()).abs() < 1e-9);
        }
    }
}
