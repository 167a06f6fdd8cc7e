//! Observation types and the preprocessing shared by training and detection:
//! validation, unit-variance scaling and sliding-window snapshots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative deviation from the uniform sample grid that is still accepted.
pub const SAMPLING_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("observation has no samples")]
    EmptyObservation,
    #[error("no observations given")]
    EmptyInput,
    #[error("timestamps not strictly increasing at row {row}: {previous} then {current}")]
    NonMonotonicTime {
        row: usize,
        previous: f64,
        current: f64,
    },
    #[error("negative timestamp {time} at row {row}")]
    NegativeTime { row: usize, time: f64 },
    #[error("arity mismatch at row {row}: expected {expected} values, found {found}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("discrete value {value} at row {row}, column {column} is not 0 or 1")]
    NonBinaryDiscrete {
        row: usize,
        column: usize,
        value: f64,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("observations disagree on signal kinds")]
    KindsMismatch,
    #[error("cycle has {samples} samples, a window needs {window}")]
    TooShort { samples: usize, window: usize },
    #[error("irregular sampling at row {row}: expected t={expected}, found t={found}")]
    IrregularSampling {
        row: usize,
        expected: f64,
        found: f64,
    },
    #[error("invalid windowing parameters: {0}")]
    InvalidWindow(String),
    #[error("invalid scaling parameters: {0}")]
    InvalidScaling(String),
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Discrete,
    Continuous,
}

/// One timestamp's worth of signal values together with their kind tags.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    values: Vec<f64>,
    kinds: Vec<SignalKind>,
}

impl SignalVector {
    pub fn new(values: Vec<f64>, kinds: Vec<SignalKind>) -> Result<Self> {
        if values.is_empty() {
            return Err(SignalError::EmptyObservation);
        }
        check_row(0, &values, &kinds)?;
        Ok(Self { values, kinds })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kinds(&self) -> &[SignalKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_row(row: usize, values: &[f64], kinds: &[SignalKind]) -> Result<()> {
    if values.len() != kinds.len() {
        return Err(SignalError::ArityMismatch {
            row,
            expected: kinds.len(),
            found: values.len(),
        });
    }
    for (column, (&value, kind)) in values.iter().zip(kinds).enumerate() {
        if !value.is_finite() {
            return Err(SignalError::NonFinite { row, column });
        }
        if *kind == SignalKind::Discrete && value != 0.0 && value != 1.0 {
            return Err(SignalError::NonBinaryDiscrete { row, column, value });
        }
    }
    Ok(())
}

/// One production cycle: strictly increasing timestamps, each with a signal
/// vector of identical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationExample {
    kinds: Vec<SignalKind>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl ObservationExample {
    /// Validating constructor.
    pub fn new(rows: Vec<(f64, Vec<f64>)>, kinds: Vec<SignalKind>) -> Result<Self> {
        if rows.is_empty() || kinds.is_empty() {
            return Err(SignalError::EmptyObservation);
        }
        let mut times = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        for (row, (t, v)) in rows.into_iter().enumerate() {
            if !t.is_finite() {
                return Err(SignalError::NonFinite { row, column: 0 });
            }
            if t < 0.0 {
                return Err(SignalError::NegativeTime { row, time: t });
            }
            if let Some(&previous) = times.last() {
                if t <= previous {
                    return Err(SignalError::NonMonotonicTime {
                        row,
                        previous,
                        current: t,
                    });
                }
            }
            check_row(row, &v, &kinds)?;
            times.push(t);
            values.push(v);
        }
        Ok(Self {
            kinds,
            times,
            rows: values,
        })
    }

    pub fn kinds(&self) -> &[SignalKind] {
        &self.kinds
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn signal_vector(&self, index: usize) -> SignalVector {
        SignalVector {
            values: self.rows[index].clone(),
            kinds: self.kinds.clone(),
        }
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        indices_of(&self.kinds, SignalKind::Continuous)
    }

    pub fn discrete_indices(&self) -> Vec<usize> {
        indices_of(&self.kinds, SignalKind::Discrete)
    }

    /// Returns a copy with each row transformed by `f`. Kinds are kept, so
    /// `f` must not change arity or break discrete values.
    pub(crate) fn map_rows(&self, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut out = self.clone();
        for (i, row) in out.rows.iter_mut().enumerate() {
            f(i, row);
        }
        out
    }
}

pub fn indices_of(kinds: &[SignalKind], kind: SignalKind) -> Vec<usize> {
    kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == kind)
        .map(|(i, _)| i)
        .collect()
}

/// Per-continuous-signal affine map `(x - offset) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl ScalingParams {
    pub fn identity(signals: usize) -> Self {
        Self {
            scale: vec![1.0; signals],
            offset: vec![0.0; signals],
        }
    }

    pub fn new(scale: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let params = Self { scale, offset };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.len() != self.offset.len() {
            return Err(SignalError::InvalidScaling(format!(
                "{} scale factors but {} offsets",
                self.scale.len(),
                self.offset.len()
            )));
        }
        if let Some(s) = self.scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(SignalError::InvalidScaling(format!(
                "scale factor {s} is not strictly positive and finite"
            )));
        }
        if self.offset.iter().any(|o| !o.is_finite()) {
            return Err(SignalError::InvalidScaling("non-finite offset".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingWarning {
    /// Continuous signal (index among continuous signals) with zero variance;
    /// its scale is left at 1.
    ConstantSignal { index: usize },
}

/// Fits unit-variance scale factors over the pooled continuous samples of all
/// observations. Offsets stay at zero.
pub fn fit_scaling(
    observations: &[ObservationExample],
) -> Result<(ScalingParams, Vec<ScalingWarning>)> {
    let first = observations.first().ok_or(SignalError::EmptyInput)?;
    if observations.iter().any(|o| o.kinds != first.kinds) {
        return Err(SignalError::KindsMismatch);
    }
    let columns = first.continuous_indices();
    let mut scale = Vec::with_capacity(columns.len());
    let mut warnings = Vec::new();
    for (index, &col) in columns.iter().enumerate() {
        // Welford over the pooled samples.
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for row in observations.iter().flat_map(|o| o.rows.iter()) {
            n += 1;
            let delta = row[col] - mean;
            mean += delta / n as f64;
            m2 += delta * (row[col] - mean);
        }
        let std = (m2 / n as f64).sqrt();
        if std > 0.0 && std.is_finite() {
            scale.push(1.0 / std);
        } else {
            warnings.push(ScalingWarning::ConstantSignal { index });
            scale.push(1.0);
        }
    }
    let offset = vec![0.0; scale.len()];
    Ok((ScalingParams { scale, offset }, warnings))
}

/// Applies `params` to the continuous columns; discrete columns are untouched.
pub fn apply_scaling(
    observation: &ObservationExample,
    params: &ScalingParams,
) -> Result<ObservationExample> {
    let columns = observation.continuous_indices();
    if columns.len() != params.len() {
        return Err(SignalError::ArityMismatch {
            row: 0,
            expected: columns.len(),
            found: params.len(),
        });
    }
    Ok(observation.map_rows(|_, row| {
        for (k, &col) in columns.iter().enumerate() {
            row[col] = (row[col] - params.offset[k]) * params.scale[k];
        }
    }))
}

/// Sliding-window configuration, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub window_seconds: f64,
    /// Fraction of a window shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub sample_time: f64,
}

impl WindowParams {
    pub fn new(window_seconds: f64, overlap: f64, sample_time: f64) -> Result<Self> {
        let params = Self {
            window_seconds,
            overlap,
            sample_time,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_time.is_finite() && self.sample_time > 0.0) {
            return Err(SignalError::InvalidWindow(format!(
                "sample time {} must be positive",
                self.sample_time
            )));
        }
        if !(self.window_seconds.is_finite() && self.window_seconds >= self.sample_time) {
            return Err(SignalError::InvalidWindow(format!(
                "window {} s shorter than sample time {} s",
                self.window_seconds, self.sample_time
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SignalError::InvalidWindow(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        Ok(())
    }

    /// Samples per window, `round(window / sample_time)`.
    pub fn samples_per_window(&self) -> usize {
        ((self.window_seconds / self.sample_time).round() as usize).max(1)
    }

    /// Samples between consecutive window ends, `max(1, floor(w (1 - overlap)))`.
    pub fn stride(&self) -> usize {
        let w = self.samples_per_window() as f64;
        // The epsilon absorbs products such as 10 * 0.7 = 6.9999999.
        ((w * (1.0 - self.overlap) + 1e-9).floor() as usize).max(1)
    }

    /// Number of snapshots a uniform cycle of `samples` samples yields.
    pub fn snapshot_count(&self, samples: usize) -> usize {
        let w = self.samples_per_window();
        if samples < w {
            0
        } else {
            (samples - w) / self.stride() + 1
        }
    }
}

/// Concatenated continuous sub-vectors of one window, oldest sample first.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub window_end: f64,
    /// Row index of the window's last sample within its observation.
    pub end_index: usize,
    pub values: Vec<f64>,
}

/// Checks that `observation` sits on a uniform grid of `sample_time` spacing.
pub fn check_uniform_sampling(observation: &ObservationExample, sample_time: f64) -> Result<()> {
    let t0 = observation.times[0];
    for (row, &t) in observation.times.iter().enumerate() {
        let expected = t0 + row as f64 * sample_time;
        if (t - expected).abs() > SAMPLING_TOLERANCE * sample_time {
            return Err(SignalError::IrregularSampling {
                row,
                expected,
                found: t,
            });
        }
    }
    Ok(())
}

/// Cuts `observation` into snapshots. The first window ends at the w-th
/// sample and a trailing partial window is dropped.
pub fn window(observation: &ObservationExample, params: &WindowParams) -> Result<Vec<Snapshot>> {
    params.validate()?;
    check_uniform_sampling(observation, params.sample_time)?;
    let w = params.samples_per_window();
    let n = observation.len();
    if n < w {
        return Err(SignalError::TooShort {
            samples: n,
            window: w,
        });
    }
    let columns = observation.continuous_indices();
    let stride = params.stride();
    let snapshots = (w - 1..n)
        .step_by(stride)
        .map(|end| {
            let mut values = Vec::with_capacity(w * columns.len());
            for row in &observation.rows[end + 1 - w..=end] {
                values.extend(columns.iter().map(|&c| row[c]));
            }
            Snapshot {
                window_end: observation.times[end],
                end_index: end,
                values,
            }
        })
        .collect();
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SignalKind::{Continuous as C, Discrete as D};

    fn uniform(
        n: usize,
        dt: f64,
        kinds: Vec<SignalKind>,
        f: impl Fn(usize, usize) -> f64,
    ) -> ObservationExample {
        let rows = (0..n)
            .map(|i| (i as f64 * dt, (0..kinds.len()).map(|j| f(i, j)).collect()))
            .collect();
        ObservationExample::new(rows, kinds).unwrap()
    }

    #[test]
    fn build_minimal_observation() {
        let o = ObservationExample::new(
            vec![(0.0, vec![0.5, 1.0]), (1.0, vec![0.7, 0.0])],
            vec![C, D],
        )
        .unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.signal_vector(1).values(), &[0.7, 0.0]);
    }

    #[test]
    fn equal_timestamps_rejected() {
        let err =
            ObservationExample::new(vec![(1.0, vec![0.5]), (1.0, vec![0.7])], vec![C]).unwrap_err();
        assert!(matches!(err, SignalError::NonMonotonicTime { row: 1, .. }));
    }

    #[test]
    fn non_binary_discrete_rejected() {
        let err = ObservationExample::new(vec![(0.0, vec![0.5, 2.0])], vec![C, D]).unwrap_err();
        assert_eq!(
            err,
            SignalError::NonBinaryDiscrete {
                row: 0,
                column: 1,
                value: 2.0
            }
        );
    }

    #[test]
    fn arity_mismatch_rejected() {
        let err = ObservationExample::new(vec![(0.0, vec![0.5])], vec![C, D]).unwrap_err();
        assert!(matches!(
            err,
            SignalError::ArityMismatch {
                expected: 2,
                found: 1,
                ..
            }
        ));
        assert!(SignalVector::new(vec![1.0], vec![C, C]).is_err());
    }

    fn single_signal(values: &[f64]) -> ObservationExample {
        uniform(values.len(), 1.0, vec![C], |i, _| values[i])
    }

    #[test]
    fn fit_scaling_examples() {
        let (p, w) = fit_scaling(&[single_signal(&[0.0, 2.0, 0.0, 2.0])]).unwrap();
        assert_eq!(p.scale, vec![1.0]);
        assert!(w.is_empty());

        // Population std of {0, 4, 0, 4} is 2.
        let (p, _) = fit_scaling(&[single_signal(&[0.0, 4.0, 0.0, 4.0])]).unwrap();
        assert!((p.scale[0] - 0.5).abs() < 1e-15);

        let (p, w) = fit_scaling(&[single_signal(&[3.0, 3.0, 3.0])]).unwrap();
        assert_eq!(p.scale, vec![1.0]);
        assert_eq!(w, vec![ScalingWarning::ConstantSignal { index: 0 }]);
    }

    #[test]
    fn fit_scaling_pools_cycles_and_skips_discrete() {
        let a = uniform(
            2,
            1.0,
            vec![D, C],
            |i, j| if j == 0 { 1.0 } else { [0.0, 4.0][i] },
        );
        let b = uniform(
            2,
            1.0,
            vec![D, C],
            |i, j| if j == 0 { 0.0 } else { [0.0, 4.0][i] },
        );
        let (p, _) = fit_scaling(&[a, b]).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.scale[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn apply_scaling_examples() {
        let o = single_signal(&[4.0, 2.0]);
        let scaled = apply_scaling(&o, &ScalingParams::new(vec![0.5], vec![0.0]).unwrap()).unwrap();
        assert_eq!(scaled.rows(), &[vec![2.0], vec![1.0]]);
        assert_eq!(apply_scaling(&o, &ScalingParams::identity(1)).unwrap(), o);

        let mixed = uniform(3, 1.0, vec![C, D], |i, j| {
            if j == 0 {
                3.0
            } else {
                (i % 2) as f64
            }
        });
        let scaled =
            apply_scaling(&mixed, &ScalingParams::new(vec![2.0], vec![0.0]).unwrap()).unwrap();
        for (a, b) in scaled.rows().iter().zip(mixed.rows()) {
            assert_eq!(a[0], 6.0);
            assert_eq!(a[1], b[1]);
        }
        assert!(apply_scaling(&mixed, &ScalingParams::identity(2)).is_err());
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(ScalingParams::new(vec![0.0], vec![0.0]).is_err());
        assert!(ScalingParams::new(vec![f64::INFINITY], vec![0.0]).is_err());
    }

    #[test]
    fn paper_cycle_yields_fourteen_snapshots() {
        let o = uniform(150, 0.2, vec![C, C, C, D], |i, j| {
            if j == 3 {
                0.0
            } else {
                (i * 3 + j) as f64
            }
        });
        let params = WindowParams::new(3.0, 0.3, 0.2).unwrap();
        assert_eq!(params.samples_per_window(), 15);
        assert_eq!(params.stride(), 10);
        let snaps = window(&o, &params).unwrap();
        assert_eq!(snaps.len(), 14);
        assert_eq!(snaps.len(), params.snapshot_count(150));
        assert!(snaps.iter().all(|s| s.values.len() == 45));
        assert_eq!(snaps[0].end_index, 14);
        assert!((snaps[0].window_end - 2.8).abs() < 1e-12);
    }

    #[test]
    fn whole_cycle_window_gives_one_snapshot() {
        let o = uniform(20, 0.5, vec![C], |i, _| i as f64);
        let snaps = window(&o, &WindowParams::new(10.0, 0.0, 0.5).unwrap()).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(
            snaps[0].values,
            (0..20).map(|i| i as f64).collect::<Vec<_>>()
        );
    }

    #[test]
    fn short_and_irregular_cycles_rejected() {
        let o = uniform(5, 1.0, vec![C], |i, _| i as f64);
        assert_eq!(
            window(&o, &WindowParams::new(6.0, 0.0, 1.0).unwrap()).unwrap_err(),
            SignalError::TooShort {
                samples: 5,
                window: 6
            }
        );
        let jittered = ObservationExample::new(
            vec![(0.0, vec![0.0]), (1.05, vec![0.0]), (2.3, vec![0.0])],
            vec![C],
        )
        .unwrap();
        let err = window(&jittered, &WindowParams::new(1.0, 0.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, SignalError::IrregularSampling { row: 2, .. }));
    }

    #[test]
    fn invalid_window_params() {
        assert!(WindowParams::new(1.0, 1.0, 0.2).is_err());
        assert!(WindowParams::new(0.1, 0.0, 0.2).is_err());
        assert!(WindowParams::new(1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn window_count_and_ordering(
            n in 1usize..80,
            w in 1usize..20,
            overlap in 0.0f64..0.95,
            d in 1usize..4,
        ) {
            let dt = 0.25;
            let mut kinds = vec![C; d];
            kinds.insert(0, D);
            let o = uniform(n, dt, kinds, |i, j| if j == 0 { (i % 2) as f64 } else { (i * 10 + j) as f64 });
            let params = WindowParams::new(w as f64 * dt, overlap, dt).unwrap();
            let result = window(&o, &params);
            if n < w {
                prop_assert!(result.is_err());
                return Ok(());
            }
            let snaps = result.unwrap();
            prop_assert_eq!(snaps.len(), (n - w) / params.stride() + 1);
            for s in &snaps {
                prop_assert_eq!(s.values.len(), w * d);
                for i in 1..=w {
                    // Sub-vector i sits at t_w + (i - w) * dt.
                    let row = s.end_index + i - w;
                    prop_assert!((o.times()[row] - (s.window_end + (i as f64 - w as f64) * dt)).abs() < 1e-9);
                    for k in 0..d {
                        prop_assert_eq!(s.values[(i - 1) * d + k], o.rows()[row][k + 1]);
                    }
                }
            }
            prop_assert_eq!(window(&o, &params).unwrap(), snaps);
        }

        #[test]
        fn rescaled_data_has_unit_scale(values in prop::collection::vec(-50.0f64..50.0, 3..40)) {
            prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-3));
            let o = single_signal(&values);
            let (p, _) = fit_scaling(std::slice::from_ref(&o)).unwrap();
            let scaled = apply_scaling(&o, &p).unwrap();
            let (q, w) = fit_scaling(&[scaled]).unwrap();
            prop_assert!(w.is_empty());
            prop_assert!((q.scale[0] - 1.0).abs() < 1e-9);
        }
    }
}
