//! Synthetic hybrid cycles built from piecewise-constant phases, and the
//! perturbations used to evaluate detection.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;
use crate::signals::{ObservationExample, SignalError, SignalKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("invalid cycle spec: {0}")]
    InvalidSpec(String),
    #[error("invalid anomaly spec: {0}")]
    InvalidAnomaly(String),
    #[error("anomaly span of {span} samples exceeds the {samples}-sample cycle")]
    SpanTooLong { span: usize, samples: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub type Result<T, E = DatagenError> = std::result::Result<T, E>;

/// One segment of the base cycle. `levels` lists the continuous signals
/// first, then the discrete ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub duration: f64,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSpec {
    pub continuous: usize,
    pub discrete: usize,
    pub sample_time: f64,
    /// Standard deviation of the Gaussian noise on continuous signals.
    pub noise_sigma: f64,
    /// Each phase duration is scaled by `Uniform(1 - j, 1 + j)`.
    pub duration_jitter: f64,
    pub phases: Vec<Phase>,
}

/// Spacing of the default continuous levels.
pub const LEVEL_STEP: f64 = 1.0 / 6.0;

impl Default for CycleSpec {
    /// Three continuous and one discrete signal over six 5 s phases, sampled
    /// every 0.2 s (150 samples per 30 s cycle). Continuous levels lie on a
    /// grid of [`LEVEL_STEP`] and neighbouring phases differ by at least one
    /// step, over six times the noise sigma.
    fn default() -> Self {
        let steps = [
            [0.0, 1.0, 2.0, 0.0],
            [2.0, 1.0, 0.0, 1.0],
            [2.0, 3.0, 1.0, 1.0],
            [0.0, 3.0, 3.0, 0.0],
            [1.0, 0.0, 3.0, 0.0],
            [3.0, 2.0, 1.0, 1.0],
        ];
        let continuous = 3;
        Self {
            continuous,
            discrete: 1,
            sample_time: 0.2,
            noise_sigma: 0.025,
            duration_jitter: 0.05,
            phases: steps
                .iter()
                .map(|row| Phase {
                    duration: 5.0,
                    levels: row
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if i < continuous { x * LEVEL_STEP } else { x })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl CycleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DatagenError::InvalidSpec(msg));
        if self.continuous + self.discrete == 0 {
            return bad("at least one signal is required".into());
        }
        if self.phases.is_empty() {
            return bad("at least one phase is required".into());
        }
        if !(self.sample_time.is_finite() && self.sample_time > 0.0) {
            return bad(format!("sample time {} must be positive", self.sample_time));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return bad(format!(
                "duration jitter {} outside [0, 1)",
                self.duration_jitter
            ));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration.is_finite() && p.duration > 0.0) {
                return bad(format!(
                    "phase {i} duration {} must be positive",
                    p.duration
                ));
            }
            if p.levels.len() != self.continuous + self.discrete {
                return bad(format!(
                    "phase {i} has {} levels, expected {}",
                    p.levels.len(),
                    self.continuous + self.discrete
                ));
            }
            if p.levels.iter().any(|l| !l.is_finite()) {
                return bad(format!("phase {i} has a non-finite level"));
            }
            if p.levels[self.continuous..]
                .iter()
                .any(|&l| l != 0.0 && l != 1.0)
            {
                return bad(format!("phase {i} has a discrete level other than 0 or 1"));
            }
        }
        Ok(())
    }

    pub fn kinds(&self) -> Vec<SignalKind> {
        let mut kinds = vec![SignalKind::Continuous; self.continuous];
        kinds.extend(std::iter::repeat_n(SignalKind::Discrete, self.discrete));
        kinds
    }

    pub fn nominal_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// Samples per cycle, fixed at the nominal duration.
    pub fn samples_per_cycle(&self) -> usize {
        ((self.nominal_duration() / self.sample_time).round() as usize).max(1)
    }

    /// Phase durations with multiplicative jitter applied.
    pub fn jittered_durations(&self, rng: &mut RngStream) -> Vec<f64> {
        let j = self.duration_jitter;
        self.phases
            .iter()
            .map(|p| p.duration * rng.uniform_range(1.0 - j, 1.0 + j))
            .collect()
    }

    /// One cycle. The grid length is fixed, so the final phase is truncated or
    /// extended to fill it.
    pub fn generate_cycle(&self, rng: &mut RngStream) -> Result<ObservationExample> {
        self.validate()?;
        let durations = self.jittered_durations(rng);
        let mut ends = Vec::with_capacity(durations.len());
        let mut acc = 0.0;
        for d in &durations {
            acc += d;
            ends.push(acc);
        }
        let rows = (0..self.samples_per_cycle())
            .map(|i| {
                let t = i as f64 * self.sample_time;
                let phase = ends.iter().position(|&e| t < e).unwrap_or(ends.len() - 1);
                let levels = &self.phases[phase].levels;
                let mut row = levels.clone();
                for value in &mut row[..self.continuous] {
                    *value += self.noise_sigma * rng.gaussian();
                }
                (t, row)
            })
            .collect();
        Ok(ObservationExample::new(rows, self.kinds())?)
    }
}

/// `n` cycles. Cycle `i` draws from its own sub-stream of a seed taken from
/// `rng`, so cycles can be generated independently.
pub fn generate_cycles(
    spec: &CycleSpec,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<ObservationExample>> {
    spec.validate()?;
    let root = rng.next_u64();
    (0..n)
        .map(|i| spec.generate_cycle(&mut RngStream::derived(root, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    /// Gaussian noise over the span starting at the first sample.
    NoiseAtStart,
    /// Gaussian noise over a span starting at a uniformly drawn sample.
    NoiseAtRandom,
    /// Signal set to zero.
    DropToZero,
    /// Signal multiplied by `1 + magnitude`.
    RaiseByFraction,
    /// Linear ramp from 0 to `magnitude` added to the signal.
    Ramp,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoiseAtStart => "noise-at-start",
            Self::NoiseAtRandom => "noise-at-random",
            Self::DropToZero => "drop-to-zero",
            Self::RaiseByFraction => "raise-by-fraction",
            Self::Ramp => "ramp",
        }
    }
}

impl std::fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "noise-at-start" => Self::NoiseAtStart,
            "noise-at-random" => Self::NoiseAtRandom,
            "drop-to-zero" => Self::DropToZero,
            "raise-by-fraction" => Self::RaiseByFraction,
            "ramp" => Self::Ramp,
            _ => return Err(DatagenError::InvalidAnomaly(format!("unknown kind {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Noise sigma, raise fraction or ramp height, depending on `kind`.
    pub magnitude: f64,
    /// Number of consecutive samples modified.
    pub span: usize,
    /// Continuous signal to modify (index among continuous signals); all of
    /// them when `None`.
    pub signal: Option<usize>,
}

impl AnomalySpec {
    pub fn new(kind: AnomalyKind, magnitude: f64, span: usize) -> Self {
        Self {
            kind,
            magnitude,
            span,
            signal: None,
        }
    }
}

/// Perturbs a copy of `observation`; returns it with the timestamp of the
/// first modified sample. Discrete signals are never touched.
pub fn inject_anomaly(
    observation: &ObservationExample,
    spec: &AnomalySpec,
    rng: &mut RngStream,
) -> Result<(ObservationExample, f64)> {
    if spec.span == 0 || !spec.magnitude.is_finite() {
        return Err(DatagenError::InvalidAnomaly(format!(
            "span {} / magnitude {} invalid",
            spec.span, spec.magnitude
        )));
    }
    let n = observation.len();
    if spec.span > n {
        return Err(DatagenError::SpanTooLong {
            span: spec.span,
            samples: n,
        });
    }
    let continuous = observation.continuous_indices();
    let columns: Vec<usize> = match spec.signal {
        Some(k) if k < continuous.len() => vec![continuous[k]],
        Some(k) => {
            return Err(DatagenError::InvalidAnomaly(format!(
                "signal {k} out of range ({} continuous signals)",
                continuous.len()
            )))
        }
        None => continuous,
    };
    let start = match spec.kind {
        AnomalyKind::NoiseAtRandom => rng.index(n - spec.span + 1),
        _ => 0,
    };
    let end = start + spec.span;
    let modified = observation.map_rows(|i, row| {
        if !(start..end).contains(&i) {
            return;
        }
        let k = i - start;
        for &c in &columns {
            row[c] = match spec.kind {
                AnomalyKind::NoiseAtStart | AnomalyKind::NoiseAtRandom => {
                    row[c] + spec.magnitude * rng.gaussian()
                }
                AnomalyKind::DropToZero => 0.0,
                AnomalyKind::RaiseByFraction => row[c] * (1.0 + spec.magnitude),
                AnomalyKind::Ramp => {
                    let frac = if spec.span == 1 {
                        1.0
                    } else {
                        k as f64 / (spec.span - 1) as f64
                    };
                    row[c] + spec.magnitude * frac
                }
            };
        }
    });
    Ok((modified, observation.times()[start]))
}
