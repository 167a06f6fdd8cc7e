//! Restricted Boltzmann machines with Bernoulli or Gaussian (unit variance)
//! visible units and Bernoulli hidden units, trained by contrastive divergence.
//!
//! Energy conventions:
//!
//! * Bernoulli visible: `E(v, h) = -bᵀv - cᵀh - vᵀWh`
//! * Gaussian visible:  `E(v, h) = ½(v - b)ᵀ(v - b) - cᵀh - vᵀWh`
//!
//! Both are consistent with the conditionals `E[h|v] = σ(c + Wᵀv)` and
//! `E[v|h] = σ(b + Wh)` (Bernoulli) or `b + Wh` (Gaussian).

pub mod exact;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

pub use train::{cd_gradient, train_rbm, Gradient, Sparsity, TrainConfig, UpdateState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RbmError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite values in {block} after update")]
    NonFinite { block: &'static str },
    #[error("training data is empty")]
    EmptyData,
    #[error("value {value} outside [0, 1] in Bernoulli input at row {row}")]
    OutOfDomain { row: usize, value: f64 },
    #[error("enumeration over {units} units exceeds the budget of {limit}")]
    TooLarge { units: usize, limit: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = RbmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibleKind {
    Bernoulli,
    Gaussian,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights are `m × n` (visible × hidden).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RbmRecord", into = "RbmRecord")]
pub struct Rbm {
    weights: Array2<f64>,
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
    visible_kind: VisibleKind,
}

impl Rbm {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        visible_kind: VisibleKind,
    ) -> Result<Self> {
        let (m, n) = weights.dim();
        if visible_bias.len() != m {
            return Err(RbmError::DimensionMismatch {
                what: "visible bias",
                expected: m,
                found: visible_bias.len(),
            });
        }
        if hidden_bias.len() != n {
            return Err(RbmError::DimensionMismatch {
                what: "hidden bias",
                expected: n,
                found: hidden_bias.len(),
            });
        }
        let rbm = Self {
            weights,
            visible_bias,
            hidden_bias,
            visible_kind,
        };
        rbm.check_finite()?;
        Ok(rbm)
    }

    pub fn zeros(visible: usize, hidden: usize, visible_kind: VisibleKind) -> Self {
        Self {
            weights: Array2::zeros((visible, hidden)),
            visible_bias: Array1::zeros(visible),
            hidden_bias: Array1::zeros(hidden),
            visible_kind,
        }
    }

    /// Weights drawn from N(0, 0.01²), biases zero.
    pub fn initialize(
        visible: usize,
        hidden: usize,
        visible_kind: VisibleKind,
        rng: &mut RngStream,
    ) -> Self {
        let weights = Array2::from_shape_simple_fn((visible, hidden), || 0.01 * rng.gaussian());
        Self {
            weights,
            ..Self::zeros(visible, hidden, visible_kind)
        }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub fn visible_kind(&self) -> VisibleKind {
        self.visible_kind
    }

    pub fn visible_units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_units(&self) -> usize {
        self.weights.ncols()
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.weights.iter().any(|x| !x.is_finite()) {
            return Err(RbmError::NonFinite { block: "weights" });
        }
        if self.visible_bias.iter().any(|x| !x.is_finite()) {
            return Err(RbmError::NonFinite {
                block: "visible bias",
            });
        }
        if self.hidden_bias.iter().any(|x| !x.is_finite()) {
            return Err(RbmError::NonFinite {
                block: "hidden bias",
            });
        }
        Ok(())
    }

    fn check_visible(&self, len: usize) -> Result<()> {
        if len != self.visible_units() {
            return Err(RbmError::DimensionMismatch {
                what: "visible vector",
                expected: self.visible_units(),
                found: len,
            });
        }
        Ok(())
    }

    fn check_hidden(&self, len: usize) -> Result<()> {
        if len != self.hidden_units() {
            return Err(RbmError::DimensionMismatch {
                what: "hidden vector",
                expected: self.hidden_units(),
                found: len,
            });
        }
        Ok(())
    }

    /// `σ(c + Wᵀv)`.
    pub fn hidden_expectation(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_visible(v.len())?;
        Ok((v.dot(&self.weights) + &self.hidden_bias).mapv_into(sigmoid))
    }

    /// `σ(b + Wh)` for Bernoulli visible units, `b + Wh` for Gaussian.
    pub fn visible_expectation(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_hidden(h.len())?;
        let pre = self.weights.dot(&h) + &self.visible_bias;
        Ok(match self.visible_kind {
            VisibleKind::Bernoulli => pre.mapv_into(sigmoid),
            VisibleKind::Gaussian => pre,
        })
    }

    pub fn sample_hidden(&self, v: ArrayView1<f64>, rng: &mut RngStream) -> Result<Array1<f64>> {
        Ok(self.hidden_expectation(v)?.mapv_into(|p| rng.bernoulli(p)))
    }

    pub fn sample_visible(&self, h: ArrayView1<f64>, rng: &mut RngStream) -> Result<Array1<f64>> {
        let mean = self.visible_expectation(h)?;
        Ok(self.sample_visible_from_mean(mean, rng))
    }

    fn sample_visible_from_mean<D: ndarray::Dimension>(
        &self,
        mean: ndarray::Array<f64, D>,
        rng: &mut RngStream,
    ) -> ndarray::Array<f64, D> {
        match self.visible_kind {
            VisibleKind::Bernoulli => mean.mapv_into(|p| rng.bernoulli(p)),
            VisibleKind::Gaussian => mean.mapv_into(|mu| mu + rng.gaussian()),
        }
    }

    /// One block-Gibbs step: `h ~ p(h|v_prev)`, then `v ~ p(v|h)`.
    pub fn gibbs_step(
        &self,
        v_prev: ArrayView1<f64>,
        rng: &mut RngStream,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let h = self.sample_hidden(v_prev, rng)?;
        let v = self.sample_visible(h.view(), rng)?;
        Ok((h, v))
    }

    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        self.check_visible(v.len())?;
        self.check_hidden(h.len())?;
        let interaction = v.dot(&self.weights.dot(&h));
        let hidden_term = self.hidden_bias.dot(&h);
        let visible_term = match self.visible_kind {
            VisibleKind::Bernoulli => -self.visible_bias.dot(&v),
            VisibleKind::Gaussian => {
                let d = &v - &self.visible_bias;
                0.5 * d.dot(&d)
            }
        };
        Ok(visible_term - hidden_term - interaction)
    }

    /// Row-wise `σ(c + Wᵀv)` for a batch of visible vectors.
    pub fn hidden_expectation_batch(&self, v: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_visible(v.ncols())?;
        Ok((v.dot(&self.weights) + &self.hidden_bias).mapv_into(sigmoid))
    }

    /// Row-wise visible expectation for a batch of hidden vectors.
    pub fn visible_expectation_batch(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_hidden(h.ncols())?;
        let pre = h.dot(&self.weights.t()) + &self.visible_bias;
        Ok(match self.visible_kind {
            VisibleKind::Bernoulli => pre.mapv_into(sigmoid),
            VisibleKind::Gaussian => pre,
        })
    }

    pub(crate) fn sample_visible_batch(
        &self,
        mean: Array2<f64>,
        rng: &mut RngStream,
    ) -> Array2<f64> {
        self.sample_visible_from_mean(mean, rng)
    }

    pub(crate) fn apply_delta(&mut self, dw: &Array2<f64>, db: &Array1<f64>, dc: &Array1<f64>) {
        self.weights += dw;
        self.visible_bias += db;
        self.hidden_bias += dc;
    }

    pub(crate) fn hidden_bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.hidden_bias
    }
}

/// Mean squared reconstruction error of `data` through one up-down pass of
/// expectations. Handy for monitoring training.
pub fn reconstruction_error(rbm: &Rbm, data: ArrayView2<f64>) -> Result<f64> {
    let h = rbm.hidden_expectation_batch(data)?;
    let v = rbm.visible_expectation_batch(h.view())?;
    let diff = &v - &data;
    Ok(diff.mapv(|x| x * x).sum_axis(Axis(1)).mean().unwrap_or(0.0))
}

#[derive(Serialize, Deserialize)]
struct RbmRecord {
    visible_kind: VisibleKind,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    /// One row per visible unit.
    weights: Vec<Vec<f64>>,
}

impl From<Rbm> for RbmRecord {
    fn from(rbm: Rbm) -> Self {
        Self {
            visible_kind: rbm.visible_kind,
            visible_bias: rbm.visible_bias.to_vec(),
            hidden_bias: rbm.hidden_bias.to_vec(),
            weights: rbm.weights.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl TryFrom<RbmRecord> for Rbm {
    type Error = RbmError;

    fn try_from(record: RbmRecord) -> Result<Self> {
        let m = record.visible_bias.len();
        let n = record.hidden_bias.len();
        if record.weights.len() != m {
            return Err(RbmError::DimensionMismatch {
                what: "weight rows",
                expected: m,
                found: record.weights.len(),
            });
        }
        if let Some(row) = record.weights.iter().find(|r| r.len() != n) {
            return Err(RbmError::DimensionMismatch {
                what: "weight columns",
                expected: n,
                found: row.len(),
            });
        }
        let flat: Vec<f64> = record.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((m, n), flat).expect("shape checked above");
        Rbm::new(
            weights,
            Array1::from(record.visible_bias),
            Array1::from(record.hidden_bias),
            record.visible_kind,
        )
    }
}
