use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Rbm, RbmError, Result, VisibleKind};
use crate::rng::RngStream;

/// Hidden-unit sparsity penalty: the hidden biases are nudged by
/// `cost * (target - q)` where `q` is a running mean of hidden activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    pub target: f64,
    pub cost: f64,
}

/// Decay of the running hidden-activation mean used by [`Sparsity`].
pub const SPARSITY_DECAY: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub visible_kind: VisibleKind,
    pub hidden_units: usize,
    /// Gibbs steps per update (the k of CD-k).
    pub cd_steps: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Momentum during the first `momentum_warmup_epochs` epochs.
    pub initial_momentum: f64,
    pub momentum: f64,
    pub momentum_warmup_epochs: usize,
    /// L2 penalty applied to the weights only.
    pub weight_decay: f64,
    pub sparsity: Option<Sparsity>,
    /// Use Gaussian visible means instead of samples inside the Gibbs chain.
    pub mean_field_visible: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::bernoulli(16)
    }
}

impl TrainConfig {
    pub fn bernoulli(hidden_units: usize) -> Self {
        Self {
            visible_kind: VisibleKind::Bernoulli,
            hidden_units,
            cd_steps: 1,
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            initial_momentum: 0.5,
            momentum: 0.9,
            momentum_warmup_epochs: 5,
            weight_decay: 2e-4,
            sparsity: None,
            mean_field_visible: false,
        }
    }

    pub fn gaussian(hidden_units: usize) -> Self {
        Self {
            visible_kind: VisibleKind::Gaussian,
            learning_rate: 0.01,
            ..Self::bernoulli(hidden_units)
        }
    }

    pub fn for_kind(visible_kind: VisibleKind, hidden_units: usize) -> Self {
        match visible_kind {
            VisibleKind::Bernoulli => Self::bernoulli(hidden_units),
            VisibleKind::Gaussian => Self::gaussian(hidden_units),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RbmError::InvalidConfig(msg));
        if self.hidden_units == 0 || self.cd_steps == 0 || self.batch_size == 0 {
            return bad("hidden_units, cd_steps and batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate {} must be finite and positive",
                self.learning_rate
            ));
        }
        for m in [self.initial_momentum, self.momentum] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum {m} outside [0, 1)"));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            ));
        }
        if let Some(s) = self.sparsity {
            if !(s.target > 0.0 && s.target < 1.0) || !(s.cost.is_finite() && s.cost >= 0.0) {
                return bad(format!(
                    "sparsity target {} / cost {} invalid",
                    s.target, s.cost
                ));
            }
        }
        Ok(())
    }

    pub fn momentum_at(&self, epoch: usize) -> f64 {
        if epoch < self.momentum_warmup_epochs {
            self.initial_momentum
        } else {
            self.momentum
        }
    }
}

/// Batch-averaged CD statistics `⟨v₀h₀ᵀ − v_k h_kᵀ⟩`, `⟨v₀ − v_k⟩`, `⟨h₀ − h_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    /// Mean of `h₀` over the batch (feeds the sparsity estimate).
    pub hidden_mean: Array1<f64>,
}

impl Gradient {
    pub fn dot(&self, other: &Gradient) -> f64 {
        (&self.weights * &other.weights).sum()
            + self.visible_bias.dot(&other.visible_bias)
            + self.hidden_bias.dot(&other.hidden_bias)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Velocity and sparsity bookkeeping carried between updates.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateState {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub hidden_activity: Option<Array1<f64>>,
}

impl UpdateState {
    pub fn new(rbm: &Rbm) -> Self {
        Self {
            weights: Array2::zeros(rbm.weights().raw_dim()),
            visible_bias: Array1::zeros(rbm.visible_units()),
            hidden_bias: Array1::zeros(rbm.hidden_units()),
            hidden_activity: None,
        }
    }
}

/// Runs a k-step Gibbs chain from each row of `batch` and returns the
/// averaged CD statistics. The chain samples hidden units; the statistics use
/// hidden expectations at both ends.
pub fn cd_gradient(
    rbm: &Rbm,
    batch: ArrayView2<f64>,
    cd_steps: usize,
    mean_field_visible: bool,
    rng: &mut RngStream,
) -> Result<Gradient> {
    if batch.nrows() == 0 {
        return Err(RbmError::EmptyData);
    }
    let h0 = rbm.hidden_expectation_batch(batch)?;
    let mut hidden_probs = h0.clone();
    let mut v = batch.to_owned();
    for _ in 0..cd_steps {
        let h_sample = hidden_probs.mapv(|p| rng.bernoulli(p));
        let mean = rbm.visible_expectation_batch(h_sample.view())?;
        v = if mean_field_visible && rbm.visible_kind() == VisibleKind::Gaussian {
            mean
        } else {
            rbm.sample_visible_batch(mean, rng)
        };
        hidden_probs = rbm.hidden_expectation_batch(v.view())?;
    }
    let hk = hidden_probs;
    let scale = 1.0 / batch.nrows() as f64;
    let weights = (batch.t().dot(&h0) - v.t().dot(&hk)) * scale;
    let visible_bias = (&batch - &v).sum_axis(Axis(0)) * scale;
    let hidden_mean = h0.sum_axis(Axis(0)) * scale;
    let hidden_bias = &hidden_mean - &(hk.sum_axis(Axis(0)) * scale);
    Ok(Gradient {
        weights,
        visible_bias,
        hidden_bias,
        hidden_mean,
    })
}

impl Rbm {
    /// One CD-k step on a mini-batch (a single row reproduces the per-example
    /// rule). Momentum blends into `state`; weight decay acts on `W` only.
    /// The model is left untouched if the update would go non-finite.
    pub fn cd_k_update(
        &mut self,
        batch: ArrayView2<f64>,
        cfg: &TrainConfig,
        momentum: f64,
        rng: &mut RngStream,
        state: &mut UpdateState,
    ) -> Result<Gradient> {
        let grad = cd_gradient(self, batch, cfg.cd_steps, cfg.mean_field_visible, rng)?;
        let lr = cfg.learning_rate;

        let vel_w =
            &state.weights * momentum + (&grad.weights - &(self.weights() * cfg.weight_decay)) * lr;
        let vel_b = &state.visible_bias * momentum + &grad.visible_bias * lr;
        let vel_c = &state.hidden_bias * momentum + &grad.hidden_bias * lr;

        let mut next = self.clone();
        next.apply_delta(&vel_w, &vel_b, &vel_c);
        let mut activity = state.hidden_activity.clone();
        if let Some(sparsity) = cfg.sparsity {
            let q = match activity {
                Some(q) => q * SPARSITY_DECAY + &grad.hidden_mean * (1.0 - SPARSITY_DECAY),
                None => grad.hidden_mean.clone(),
            };
            *next.hidden_bias_mut() += &((sparsity.target - &q) * sparsity.cost);
            activity = Some(q);
        }
        next.check_finite()?;

        *self = next;
        state.weights = vel_w;
        state.visible_bias = vel_b;
        state.hidden_bias = vel_c;
        state.hidden_activity = activity;
        Ok(grad)
    }
}

fn validate_data(data: ArrayView2<f64>, kind: VisibleKind) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(RbmError::EmptyData);
    }
    for (row, r) in data.outer_iter().enumerate() {
        for &value in r {
            if !value.is_finite() {
                return Err(RbmError::OutOfDomain { row, value });
            }
            if kind == VisibleKind::Bernoulli && !(0.0..=1.0).contains(&value) {
                return Err(RbmError::OutOfDomain { row, value });
            }
        }
    }
    Ok(())
}

/// Trains a fresh RBM on the rows of `data` with shuffled mini-batches.
pub fn train_rbm(data: ArrayView2<f64>, cfg: &TrainConfig, rng: &mut RngStream) -> Result<Rbm> {
    cfg.validate()?;
    validate_data(data, cfg.visible_kind)?;
    let mut rbm = Rbm::initialize(data.ncols(), cfg.hidden_units, cfg.visible_kind, rng);
    let mut state = UpdateState::new(&rbm);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    for epoch in 0..cfg.epochs {
        let momentum = cfg.momentum_at(epoch);
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            rbm.cd_k_update(batch.view(), cfg, momentum, rng, &mut state)?;
        }
    }
    Ok(rbm)
}
