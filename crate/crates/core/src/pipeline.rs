//! Learning a behavior model from hybrid observations and checking new
//! cycles against it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{
    self, AutomatonError, Convergence, DetectOptions, DiscreteObservation, Signature,
    TimedAutomaton, Verdict, VerdictKind,
};
use crate::dbn::{self, Dbn, DbnConfig, DbnError};
use crate::rng::RngStream;
use crate::signals::{
    self, ObservationExample, ScalingParams, ScalingWarning, SignalError, SignalKind, WindowParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("observations contain no continuous signal")]
    NoContinuousSignals,
    #[error("observation kinds do not match the model")]
    KindsMismatch,
    #[error("cannot infer the sample time from a single sample")]
    UnknownSampleTime,
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Dbn(#[from] DbnError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_seconds: f64,
    pub overlap: f64,
    /// Taken from the first two samples of the first observation when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_time: Option<f64>,
    pub dbn: DbnConfig,
    #[serde(default)]
    pub convergence: Convergence,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3.0,
            overlap: 0.3,
            sample_time: None,
            dbn: DbnConfig::from_widths(&[40, 30, 20, 15]),
            convergence: Convergence::Batch,
            seed: 0,
        }
    }
}

/// Scaling, discretizer and automaton learned together. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct BehaviorModel {
    kinds: Vec<SignalKind>,
    scaling: ScalingParams,
    windowing: WindowParams,
    dbn: Dbn,
    automaton: TimedAutomaton,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    kinds: Vec<SignalKind>,
    scaling: ScalingParams,
    windowing: WindowParams,
    dbn: Dbn,
    automaton: TimedAutomaton,
}

impl From<BehaviorModel> for ModelRecord {
    fn from(m: BehaviorModel) -> Self {
        Self {
            kinds: m.kinds,
            scaling: m.scaling,
            windowing: m.windowing,
            dbn: m.dbn,
            automaton: m.automaton,
        }
    }
}

impl TryFrom<ModelRecord> for BehaviorModel {
    type Error = PipelineError;

    fn try_from(r: ModelRecord) -> Result<Self> {
        Self::from_parts(r.kinds, r.scaling, r.windowing, r.dbn, r.automaton)
    }
}

impl BehaviorModel {
    pub fn from_parts(
        kinds: Vec<SignalKind>,
        scaling: ScalingParams,
        windowing: WindowParams,
        dbn: Dbn,
        automaton: TimedAutomaton,
    ) -> Result<Self> {
        let continuous = signals::indices_of(&kinds, SignalKind::Continuous).len();
        let discrete = kinds.len() - continuous;
        if continuous == 0 {
            return Err(PipelineError::NoContinuousSignals);
        }
        scaling.validate()?;
        windowing.validate()?;
        if scaling.len() != continuous {
            return Err(PipelineError::Inconsistent(format!(
                "{} scale factors for {continuous} continuous signals",
                scaling.len()
            )));
        }
        let input = windowing.samples_per_window() * continuous;
        if dbn.input_width() != input {
            return Err(PipelineError::Inconsistent(format!(
                "net input width {} but windows hold {input} values",
                dbn.input_width()
            )));
        }
        let width = dbn.code_width() + discrete;
        if let Some(found) = automaton.width() {
            if found != width {
                return Err(PipelineError::Inconsistent(format!(
                    "automaton signatures have {found} bits, expected {width}"
                )));
            }
        }
        Ok(Self {
            kinds,
            scaling,
            windowing,
            dbn,
            automaton,
        })
    }

    pub fn kinds(&self) -> &[SignalKind] {
        &self.kinds
    }

    pub fn scaling(&self) -> &ScalingParams {
        &self.scaling
    }

    pub fn windowing(&self) -> &WindowParams {
        &self.windowing
    }

    pub fn dbn(&self) -> &Dbn {
        &self.dbn
    }

    pub fn automaton(&self) -> &TimedAutomaton {
        &self.automaton
    }

    pub fn code_width(&self) -> usize {
        self.dbn.code_width()
    }

    pub fn native_discrete_indices(&self) -> Vec<usize> {
        signals::indices_of(&self.kinds, SignalKind::Discrete)
    }

    /// Signature width: code bits followed by one bit per discrete signal.
    pub fn signature_width(&self) -> usize {
        self.code_width() + self.native_discrete_indices().len()
    }

    /// Turns a raw cycle into the bit stream the automaton sees: at each
    /// window end, the window's code followed by the discrete values sampled
    /// at that same instant.
    pub fn discretize(&self, observation: &ObservationExample) -> Result<DiscreteObservation> {
        if observation.kinds() != self.kinds.as_slice() {
            return Err(PipelineError::KindsMismatch);
        }
        let scaled = signals::apply_scaling(observation, &self.scaling)?;
        discretize_scaled(&self.dbn, &scaled, &self.windowing)
    }
}

fn snapshot_matrix(snapshots: &[signals::Snapshot]) -> Array2<f64> {
    let cols = snapshots.first().map_or(0, |s| s.values.len());
    let mut m = Array2::zeros((snapshots.len(), cols));
    for (mut row, s) in m.rows_mut().into_iter().zip(snapshots) {
        row.assign(&ndarray::ArrayView1::from(&s.values));
    }
    m
}

fn discretize_scaled(
    dbn: &Dbn,
    scaled: &ObservationExample,
    windowing: &WindowParams,
) -> Result<DiscreteObservation> {
    let snapshots = signals::window(scaled, windowing)?;
    let codes = dbn.encode_batch(snapshot_matrix(&snapshots).view())?;
    let discrete = scaled.discrete_indices();
    let samples = snapshots
        .iter()
        .zip(codes)
        .map(|(s, code)| {
            let mut bits = code.0;
            let row = &scaled.rows()[s.end_index];
            bits.extend(discrete.iter().map(|&c| row[c] == 1.0));
            (s.window_end, Signature::new(bits))
        })
        .collect();
    Ok(DiscreteObservation::new(samples)?)
}

/// Counts gathered while learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnSummary {
    pub snapshots: usize,
    pub distinct_codes: usize,
    pub states: usize,
    pub transitions: usize,
    pub warnings: Vec<ScalingWarning>,
}

pub fn learn_model(
    observations: &[ObservationExample],
    cfg: &PipelineConfig,
) -> Result<(BehaviorModel, LearnSummary)> {
    let first = observations.first().ok_or(SignalError::EmptyInput)?;
    let kinds = first.kinds().to_vec();
    if observations.iter().any(|o| o.kinds() != kinds.as_slice()) {
        return Err(SignalError::KindsMismatch.into());
    }
    if first.continuous_indices().is_empty() {
        return Err(PipelineError::NoContinuousSignals);
    }
    let sample_time = match cfg.sample_time {
        Some(dt) => dt,
        None if first.len() > 1 => first.times()[1] - first.times()[0],
        None => return Err(PipelineError::UnknownSampleTime),
    };
    let windowing = WindowParams::new(cfg.window_seconds, cfg.overlap, sample_time)?;

    let (scaling, warnings) = signals::fit_scaling(observations)?;
    let scaled = observations
        .iter()
        .map(|o| signals::apply_scaling(o, &scaling))
        .collect::<Result<Vec<_>, _>>()?;

    let mut pooled = Vec::new();
    for o in &scaled {
        pooled.extend(signals::window(o, &windowing)?);
    }
    let data = snapshot_matrix(&pooled);
    let mut rng = RngStream::new(cfg.seed);
    let dbn = dbn::train_dbn(data.view(), &cfg.dbn, &mut rng)?;
    let distinct_codes = dbn
        .encode_batch(data.view())?
        .into_iter()
        .collect::<BTreeSet<_>>()
        .len();

    let streams = scaled
        .iter()
        .map(|o| discretize_scaled(&dbn, o, &windowing))
        .collect::<Result<Vec<_>>>()?;
    let automaton = automaton::learn_automaton(&streams, cfg.convergence)?;

    let summary = LearnSummary {
        snapshots: pooled.len(),
        distinct_codes,
        states: automaton.states().len(),
        transitions: automaton.transitions().len(),
        warnings,
    };
    let model = BehaviorModel::from_parts(kinds, scaling, windowing, dbn, automaton)?;
    Ok((model, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    UnexpectedInitialState,
    NewPattern,
    UnknownEvent,
    WrongTiming,
    Normal,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Self::UnexpectedInitialState,
        Self::NewPattern,
        Self::UnknownEvent,
        Self::WrongTiming,
        Self::Normal,
    ];

    /// Anomalies landing on a signature the automaton never saw are new
    /// patterns; everything else keeps the automaton's verdict.
    pub fn of(verdict: &Verdict) -> Self {
        if verdict.is_anomaly() && !verdict.signature_known {
            return Self::NewPattern;
        }
        match verdict.kind {
            VerdictKind::Normal => Self::Normal,
            VerdictKind::UnknownEvent => Self::UnknownEvent,
            VerdictKind::WrongTiming => Self::WrongTiming,
            VerdictKind::UnexpectedInitialState => Self::UnexpectedInitialState,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::UnexpectedInitialState => "unexpected_initial_state",
            Self::NewPattern => "new_pattern",
            Self::UnknownEvent => "unknown_event",
            Self::WrongTiming => "wrong_timing",
            Self::Normal => "normal",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub class: Classification,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Anomalies in order, or a single `Normal` finding.
    pub findings: Vec<Finding>,
}

impl PipelineReport {
    pub fn classification(&self) -> Classification {
        self.findings[0].class
    }

    pub fn is_normal(&self) -> bool {
        self.classification() == Classification::Normal
    }
}

pub fn detect_anomalies(
    model: &BehaviorModel,
    observation: &ObservationExample,
    options: DetectOptions,
) -> Result<PipelineReport> {
    let stream = model.discretize(observation)?;
    let report = automaton::detect(&model.automaton, &stream, options)?;
    let findings = report
        .verdicts
        .into_iter()
        .map(|verdict| Finding {
            class: Classification::of(&verdict),
            verdict,
        })
        .collect();
    Ok(PipelineReport { findings })
}

/// Classification counts per label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: BTreeMap<String, BTreeMap<Classification, usize>>,
}

impl Evaluation {
    pub fn total(&self, label: &str) -> usize {
        self.rows.get(label).map_or(0, |r| r.values().sum())
    }

    pub fn count(&self, label: &str, class: Classification) -> usize {
        self.rows
            .get(label)
            .and_then(|r| r.get(&class))
            .copied()
            .unwrap_or(0)
    }

    pub fn percentage(&self, label: &str, class: Classification) -> f64 {
        match self.total(label) {
            0 => 0.0,
            n => 100.0 * self.count(label, class) as f64 / n as f64,
        }
    }

    /// Share of non-`Normal` cycles under `label`, in percent.
    pub fn flagged_percentage(&self, label: &str) -> f64 {
        match self.total(label) {
            0 => 0.0,
            _ => 100.0 - self.percentage(label, Classification::Normal),
        }
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.keys().map(|k| k.len()).max().unwrap_or(0).max(5);
        write!(f, "{:<width$}", "label")?;
        for c in Classification::ALL {
            write!(f, " {:>24}", c.as_str())?;
        }
        writeln!(f, " {:>6}", "n")?;
        for label in self.rows.keys() {
            write!(f, "{label:<width$}")?;
            for c in Classification::ALL {
                write!(f, " {:>23.0}%", self.percentage(label, c))?;
            }
            writeln!(f, " {:>6}", self.total(label))?;
        }
        Ok(())
    }
}

/// Classifies every `(label, cycle)` pair in stop-at-first mode.
pub fn evaluate<'a>(
    model: &BehaviorModel,
    cycles: impl IntoIterator<Item = (&'a str, &'a ObservationExample)>,
    timing_tolerance: f64,
) -> Result<Evaluation> {
    let options = DetectOptions {
        timing_tolerance,
        ..DetectOptions::default()
    };
    let mut evaluation = Evaluation::default();
    for (label, cycle) in cycles {
        let class = detect_anomalies(model, cycle, options)?.classification();
        *evaluation
            .rows
            .entry(label.to_string())
            .or_default()
            .entry(class)
            .or_default() += 1;
    }
    Ok(evaluation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Verdict;

    fn verdict(kind: VerdictKind, known: bool) -> Verdict {
        Verdict {
            kind,
            at: 0.0,
            source: None,
            event: None,
            signature: Signature::new(vec![true]),
            signature_known: known,
            dwell: None,
            interval: None,
        }
    }

    #[test]
    fn relabeling() {
        use Classification as C;
        assert_eq!(C::of(&verdict(VerdictKind::Normal, true)), C::Normal);
        assert_eq!(
            C::of(&verdict(VerdictKind::UnknownEvent, true)),
            C::UnknownEvent
        );
        assert_eq!(
            C::of(&verdict(VerdictKind::UnknownEvent, false)),
            C::NewPattern
        );
        assert_eq!(
            C::of(&verdict(VerdictKind::UnexpectedInitialState, false)),
            C::NewPattern
        );
        assert_eq!(
            C::of(&verdict(VerdictKind::UnexpectedInitialState, true)),
            C::UnexpectedInitialState
        );
        assert_eq!(
            C::of(&verdict(VerdictKind::WrongTiming, true)),
            C::WrongTiming
        );
    }

    #[test]
    fn empty_evaluation() {
        let e = Evaluation::default();
        assert!(e.rows.is_empty());
        assert_eq!(e.flagged_percentage("modified"), 0.0);
        assert_eq!(e.to_string().lines().count(), 1);
    }

    #[test]
    fn percentages_partition() {
        let mut e = Evaluation::default();
        let row = e.rows.entry("noise".into()).or_default();
        row.insert(Classification::NewPattern, 3);
        row.insert(Classification::Normal, 1);
        row.insert(Classification::UnknownEvent, 2);
        let sum: f64 = Classification::ALL
            .iter()
            .map(|&c| e.percentage("noise", c))
            .sum();
        assert!((sum - 100.0).abs() < 1e-12);
        assert!((e.flagged_percentage("noise") - 500.0 / 6.0).abs() < 1e-12);
    }
}
