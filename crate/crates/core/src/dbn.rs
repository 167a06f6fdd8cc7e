//! Deep belief nets: a stack of RBMs trained greedily, bottom layer first.
//! The bottom layer has Gaussian visible units for real-valued input; every
//! layer above sees the hidden expectations of the layer below.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rbm::{train_rbm, Rbm, RbmError, TrainConfig, VisibleKind};
use crate::rng::RngStream;

/// Soft activations at or above this value round to 1.
pub const CODE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DbnError {
    #[error("a deep belief net needs at least one layer")]
    NoLayers,
    #[error("layer {layer} expects {expected} inputs but the layer below emits {found}")]
    LayerChain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer} must have {expected:?} visible units")]
    LayerKind { layer: usize, expected: VisibleKind },
    #[error("input has {found} values, the net expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: RbmError,
    },
}

pub type Result<T, E = DbnError> = std::result::Result<T, E>;

/// Top-layer binary code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryCode(pub Vec<bool>);

impl BinaryCode {
    pub fn from_soft(soft: ArrayView1<f64>) -> Self {
        Self(soft.iter().map(|&p| p >= CODE_THRESHOLD).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn to_array(&self) -> Array1<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl std::fmt::Display for BinaryCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Per-layer training configuration. The architecture is the input width
/// followed by each layer's `hidden_units`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbnConfig {
    pub layers: Vec<TrainConfig>,
}

impl DbnConfig {
    /// Default configs for the given hidden widths: Gaussian bottom layer,
    /// Bernoulli layers above.
    pub fn from_widths(hidden_widths: &[usize]) -> Self {
        let layers = hidden_widths
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let kind = if j == 0 {
                    VisibleKind::Gaussian
                } else {
                    VisibleKind::Bernoulli
                };
                TrainConfig::for_kind(kind, n)
            })
            .collect();
        Self { layers }
    }

    pub fn architecture(&self, input_width: usize) -> Vec<usize> {
        std::iter::once(input_width)
            .chain(self.layers.iter().map(|c| c.hidden_units))
            .collect()
    }

    pub fn code_width(&self) -> usize {
        self.layers.last().map_or(0, |c| c.hidden_units)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rbm>", into = "Vec<Rbm>")]
pub struct Dbn {
    layers: Vec<Rbm>,
}

impl TryFrom<Vec<Rbm>> for Dbn {
    type Error = DbnError;

    fn try_from(layers: Vec<Rbm>) -> Result<Self> {
        Dbn::new(layers)
    }
}

impl From<Dbn> for Vec<Rbm> {
    fn from(dbn: Dbn) -> Self {
        dbn.layers
    }
}

impl Dbn {
    /// Checks that adjacent widths chain and that only the bottom layer may
    /// have Gaussian visible units.
    pub fn new(layers: Vec<Rbm>) -> Result<Self> {
        if layers.is_empty() {
            return Err(DbnError::NoLayers);
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[1].visible_units() != pair[0].hidden_units() {
                return Err(DbnError::LayerChain {
                    layer: j + 1,
                    expected: pair[1].visible_units(),
                    found: pair[0].hidden_units(),
                });
            }
        }
        if let Some(j) = layers
            .iter()
            .skip(1)
            .position(|l| l.visible_kind() != VisibleKind::Bernoulli)
        {
            return Err(DbnError::LayerKind {
                layer: j + 1,
                expected: VisibleKind::Bernoulli,
            });
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Rbm] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].visible_units()
    }

    pub fn code_width(&self) -> usize {
        self.layers.last().expect("non-empty").hidden_units()
    }

    /// Layer widths `m, n_1, …, n_l`.
    pub fn architecture(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(Rbm::hidden_units))
            .collect()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_width() {
            return Err(DbnError::DimensionMismatch {
                expected: self.input_width(),
                found: len,
            });
        }
        Ok(())
    }

    /// Feed-forward chain of hidden expectations through every layer.
    pub fn encode_soft(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(v.len())?;
        let mut x = v.to_owned();
        for layer in &self.layers {
            x = layer.hidden_expectation(x.view()).expect("widths chain");
        }
        Ok(x)
    }

    pub fn encode(&self, v: ArrayView1<f64>) -> Result<BinaryCode> {
        Ok(BinaryCode::from_soft(self.encode_soft(v)?.view()))
    }

    /// Row-wise [`Dbn::encode_soft`].
    pub fn encode_soft_batch(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(data.ncols())?;
        let mut x = data.to_owned();
        for layer in &self.layers {
            x = layer
                .hidden_expectation_batch(x.view())
                .expect("widths chain");
        }
        Ok(x)
    }

    pub fn encode_batch(&self, data: ArrayView2<f64>) -> Result<Vec<BinaryCode>> {
        Ok(self
            .encode_soft_batch(data)?
            .rows()
            .into_iter()
            .map(BinaryCode::from_soft)
            .collect())
    }

    /// Propagates a code back down through the visible expectations of every
    /// layer. The bottom layer returns Gaussian means.
    pub fn reconstruct(&self, code: &BinaryCode) -> Result<Array1<f64>> {
        if code.len() != self.code_width() {
            return Err(DbnError::DimensionMismatch {
                expected: self.code_width(),
                found: code.len(),
            });
        }
        let mut x = code.to_array();
        for layer in self.layers.iter().rev() {
            x = layer.visible_expectation(x.view()).expect("widths chain");
        }
        Ok(x)
    }
}

/// Greedy layer-wise training. Layer `j + 1` is trained on the hidden
/// expectations of layer `j` over the whole training set.
pub fn train_dbn(data: ArrayView2<f64>, cfg: &DbnConfig, rng: &mut RngStream) -> Result<Dbn> {
    if cfg.layers.is_empty() {
        return Err(DbnError::NoLayers);
    }
    let mut layers = Vec::with_capacity(cfg.layers.len());
    let mut input = data.to_owned();
    for (j, layer_cfg) in cfg.layers.iter().enumerate() {
        let rbm = train_rbm(input.view(), layer_cfg, rng)
            .map_err(|source| DbnError::Layer { layer: j, source })?;
        if j + 1 < cfg.layers.len() {
            input = rbm
                .hidden_expectation_batch(input.view())
                .expect("trained on this width");
        }
        layers.push(rbm);
    }
    Dbn::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array2};

    fn zero_dbn(widths: &[usize]) -> Dbn {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                Rbm::zeros(
                    w[0],
                    w[1],
                    if j == 0 {
                        VisibleKind::Gaussian
                    } else {
                        VisibleKind::Bernoulli
                    },
                )
            })
            .collect();
        Dbn::new(layers).unwrap()
    }

    fn two_clusters(rng: &mut RngStream, n: usize, sigma: f64) -> (Array2<f64>, Vec<usize>) {
        let centers = [
            [2.0, 2.0, -2.0, -2.0, 1.0, -1.0],
            [-2.0, -2.0, 2.0, 2.0, -1.0, 1.0],
        ];
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let data = Array2::from_shape_fn((n, 6), |(i, j)| {
            centers[labels[i]][j] + sigma * rng.gaussian()
        });
        (data, labels)
    }

    #[test]
    fn zero_net_encodes_to_half() {
        let d = zero_dbn(&[4, 3, 2]);
        assert_eq!(
            d.encode_soft(arr1(&[1.0, -2.0, 3.0, 0.0]).view()).unwrap(),
            arr1(&[0.5, 0.5])
        );
        assert_eq!(
            d.encode(arr1(&[0.0; 4]).view()).unwrap(),
            BinaryCode(vec![true, true])
        );
        assert_eq!(d.architecture(), vec![4, 3, 2]);
    }

    #[test]
    fn zero_net_reconstructs_visible_bias() {
        let g = Rbm::new(
            Array2::zeros((2, 3)),
            arr1(&[1.5, -0.5]),
            arr1(&[0.0; 3]),
            VisibleKind::Gaussian,
        )
        .unwrap();
        let b = Rbm::zeros(3, 2, VisibleKind::Bernoulli);
        let d = Dbn::new(vec![g, b]).unwrap();
        let out = d.reconstruct(&BinaryCode(vec![true, false])).unwrap();
        assert_eq!(out, arr1(&[1.5, -0.5]));
    }

    #[test]
    fn threshold_ties_round_up() {
        assert_eq!(
            BinaryCode::from_soft(arr1(&[0.9, 0.1, 0.5]).view()),
            BinaryCode(vec![true, false, true])
        );
        assert_eq!(BinaryCode(vec![true, false, true]).to_string(), "101");
    }

    #[test]
    fn single_layer_reduces_to_rbm() {
        let mut rng = RngStream::new(1);
        let (data, _) = two_clusters(&mut rng, 60, 0.3);
        let cfg = DbnConfig::from_widths(&[3]);
        let d = train_dbn(data.view(), &cfg, &mut RngStream::new(2)).unwrap();
        let r = train_rbm(data.view(), &cfg.layers[0], &mut RngStream::new(2)).unwrap();
        assert_eq!(d.layers(), std::slice::from_ref(&r));
        let x = data.row(0);
        assert_eq!(d.encode_soft(x).unwrap(), r.hidden_expectation(x).unwrap());
        let code = BinaryCode(vec![true, false, true]);
        assert_eq!(
            d.reconstruct(&code).unwrap(),
            r.visible_expectation(code.to_array().view()).unwrap()
        );
    }

    #[test]
    fn constructor_enforces_chaining_and_kinds() {
        let a = Rbm::zeros(4, 3, VisibleKind::Gaussian);
        let b = Rbm::zeros(2, 2, VisibleKind::Bernoulli);
        assert!(matches!(
            Dbn::new(vec![a.clone(), b]),
            Err(DbnError::LayerChain { layer: 1, .. })
        ));
        let g = Rbm::zeros(3, 2, VisibleKind::Gaussian);
        assert!(matches!(
            Dbn::new(vec![a, g]),
            Err(DbnError::LayerKind { layer: 1, .. })
        ));
        assert_eq!(Dbn::new(vec![]).unwrap_err(), DbnError::NoLayers);
    }

    #[test]
    fn dimension_errors() {
        let d = zero_dbn(&[4, 2]);
        assert!(d.encode(arr1(&[1.0]).view()).is_err());
        assert!(d.reconstruct(&BinaryCode(vec![true])).is_err());
    }

    #[test]
    fn wide_architectures_train() {
        let mut rng = RngStream::new(3);
        let data = Array2::from_shape_fn((50, 12), |_| rng.gaussian());
        let mut cfg = DbnConfig::from_widths(&[100, 70, 40]);
        for layer in &mut cfg.layers {
            layer.epochs = 2;
        }
        let d = train_dbn(data.view(), &cfg, &mut rng).unwrap();
        assert_eq!(d.architecture(), vec![12, 100, 70, 40]);
        assert_eq!(d.encode(data.row(0)).unwrap().len(), 40);
    }

    #[test]
    fn training_is_reproducible_and_encoding_pure() {
        let mut rng = RngStream::new(4);
        let (data, _) = two_clusters(&mut rng, 80, 0.3);
        let cfg = DbnConfig::from_widths(&[8, 4]);
        let a = train_dbn(data.view(), &cfg, &mut RngStream::new(5)).unwrap();
        let b = train_dbn(data.view(), &cfg, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        let x = data.row(3);
        let s1 = a.encode_soft(x).unwrap();
        let s2 = a.encode_soft(x).unwrap();
        assert!(s1
            .iter()
            .zip(s2.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_eq!(
            a.encode_batch(data.view()).unwrap()[3],
            a.encode(x).unwrap()
        );
    }

    fn trained_cluster_model() -> (Dbn, RngStream) {
        let mut rng = RngStream::new(6);
        let (data, _) = two_clusters(&mut rng, 600, 0.3);
        let cfg = DbnConfig::from_widths(&[8, 3]);
        (train_dbn(data.view(), &cfg, &mut rng).unwrap(), rng)
    }

    #[test]
    fn reconstruction_lands_near_cluster_mean() {
        let (d, mut rng) = trained_cluster_model();
        let sigma = 0.3;
        let centers = [
            [2.0, 2.0, -2.0, -2.0, 1.0, -1.0],
            [-2.0, -2.0, 2.0, 2.0, -1.0, 1.0],
        ];
        let (held_out, labels) = two_clusters(&mut rng, 200, sigma);
        let close = held_out
            .rows()
            .into_iter()
            .zip(&labels)
            .filter(|(x, label)| {
                let r = d.reconstruct(&d.encode(*x).unwrap()).unwrap();
                let dist = r
                    .iter()
                    .zip(&centers[**label])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                dist <= 3.0 * sigma * (6f64).sqrt()
            })
            .count();
        assert!(close >= 180, "{close}/200");
    }

    #[test]
    fn codes_stable_under_small_noise() {
        let (d, mut rng) = trained_cluster_model();
        let (held_out, _) = two_clusters(&mut rng, 200, 0.3);
        // Signal scale is about 2, so 1% noise has sigma 0.02.
        let same = held_out
            .rows()
            .into_iter()
            .filter(|x| {
                let noisy = x.mapv(|v| v + 0.02 * rng.gaussian());
                d.encode(*x).unwrap() == d.encode(noisy.view()).unwrap()
            })
            .count();
        assert!(same >= 190, "{same}/200");
    }
}
