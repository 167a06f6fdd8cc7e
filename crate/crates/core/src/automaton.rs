//! Timed automata learned from discrete observation streams.
//!
//! States are keyed by the discrete signal vector (the signature). An event
//! is the set of bits that differ between two consecutive signatures, so a
//! transition is fully determined by its source and event. Each transition
//! carries a `[min, max]` interval of the dwell time in its source state.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutomatonError {
    #[error("observation has no samples")]
    EmptyObservation,
    #[error("no training examples given")]
    EmptyInput,
    #[error("timestamps not strictly increasing at sample {index}")]
    NonMonotonicTime { index: usize },
    #[error("signature width {found} does not match {expected}")]
    SignatureLengthMismatch { expected: usize, found: usize },
    #[error("state {source_state} with event {event} already leads to state {existing}, not {conflicting}")]
    NondeterminismConflict {
        source_state: StateId,
        event: String,
        existing: StateId,
        conflicting: StateId,
    },
    #[error("malformed automaton: {0}")]
    Malformed(String),
    #[error("cannot parse {what} from {text:?}")]
    Parse { what: &'static str, text: String },
}

pub type Result<T, E = AutomatonError> = std::result::Result<T, E>;

/// Discrete signal vector identifying a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Signature(Vec<bool>);

impl Signature {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bits that change going from `self` to `next`.
    pub fn diff(&self, next: &Signature) -> TaEvent {
        TaEvent(
            self.0
                .iter()
                .zip(&next.0)
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, (_, &b))| (i, if b { Edge::Rise } else { Edge::Fall }))
                .collect(),
        )
    }

    /// Applies an event's bit flips.
    pub fn apply(&self, event: &TaEvent) -> Signature {
        let mut bits = self.0.clone();
        for &(i, edge) in &event.0 {
            bits[i] = edge == Edge::Rise;
        }
        Signature(bits)
    }
}

impl From<Vec<bool>> for Signature {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Signature {
    type Err = AutomatonError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(AutomatonError::Parse {
                    what: "signature",
                    text: s.to_string(),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Signature)
    }
}

impl From<Signature> for String {
    fn from(s: Signature) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for Signature {
    type Error = AutomatonError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Edge {
    /// 0 → 1
    Rise,
    /// 1 → 0
    Fall,
}

/// Bit changes between two signatures, sorted by bit index. Written as e.g.
/// `+0,-3` (bit 0 rises, bit 3 falls).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct TaEvent(Vec<(usize, Edge)>);

impl TaEvent {
    pub fn changes(&self) -> &[(usize, Edge)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for TaEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (i, edge)) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            let sign = if *edge == Edge::Rise { '+' } else { '-' };
            write!(f, "{sign}{i}")?;
        }
        Ok(())
    }
}

impl FromStr for TaEvent {
    type Err = AutomatonError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AutomatonError::Parse {
            what: "event",
            text: s.to_string(),
        };
        let mut changes = Vec::new();
        for part in s.split(',') {
            let edge = match part.chars().next() {
                Some('+') => Edge::Rise,
                Some('-') => Edge::Fall,
                _ => return Err(bad()),
            };
            let index: usize = part[1..].parse().map_err(|_| bad())?;
            changes.push((index, edge));
        }
        if changes.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(bad());
        }
        Ok(TaEvent(changes))
    }
}

impl From<TaEvent> for String {
    fn from(e: TaEvent) -> Self {
        e.to_string()
    }
}

impl TryFrom<String> for TaEvent {
    type Error = AutomatonError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Closed dwell-time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingInterval {
    pub min: f64,
    pub max: f64,
}

impl TimingInterval {
    pub fn point(t: f64) -> Self {
        Self { min: t, max: t }
    }

    /// Widens to cover `t`; returns whether the interval changed.
    pub fn cover(&mut self, t: f64) -> bool {
        let (min, max) = (self.min.min(t), self.max.max(t));
        let changed = min != self.min || max != self.max;
        self.min = min;
        self.max = max;
        changed
    }

    pub fn contains(&self, t: f64, tolerance: f64) -> bool {
        t >= self.min * (1.0 - tolerance) && t <= self.max * (1.0 + tolerance)
    }
}

/// Discrete-only observation: timestamps with equal-width bit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteObservation {
    times: Vec<f64>,
    signatures: Vec<Signature>,
}

impl DiscreteObservation {
    pub fn new(samples: Vec<(f64, Signature)>) -> Result<Self> {
        let width = samples
            .first()
            .ok_or(AutomatonError::EmptyObservation)?
            .1
            .len();
        let mut times = Vec::with_capacity(samples.len());
        let mut signatures = Vec::with_capacity(samples.len());
        for (index, (t, s)) in samples.into_iter().enumerate() {
            if s.len() != width {
                return Err(AutomatonError::SignatureLengthMismatch {
                    expected: width,
                    found: s.len(),
                });
            }
            if times.last().is_some_and(|&prev| t <= prev) || !t.is_finite() {
                return Err(AutomatonError::NonMonotonicTime { index });
            }
            times.push(t);
            signatures.push(s);
        }
        Ok(Self { times, signatures })
    }

    pub fn width(&self) -> usize {
        self.signatures[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, &Signature)> {
        self.times.iter().copied().zip(&self.signatures)
    }
}

/// One entry of the collapsed event stream. The first entry has no event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventEntry {
    pub time: f64,
    pub signature: Signature,
    pub event: Option<TaEvent>,
}

/// Collapses repeated signatures: each entry marks the first time a new
/// signature appears, together with the diff from the previous one.
pub fn to_event_stream(observation: &DiscreteObservation) -> Vec<EventEntry> {
    let mut out: Vec<EventEntry> = Vec::new();
    for (time, signature) in observation.samples() {
        match out.last() {
            None => out.push(EventEntry {
                time,
                signature: signature.clone(),
                event: None,
            }),
            Some(prev) if prev.signature != *signature => {
                let event = prev.signature.diff(signature);
                out.push(EventEntry {
                    time,
                    signature: signature.clone(),
                    event: Some(event),
                });
            }
            Some(_) => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaState {
    pub id: StateId,
    pub signature: Signature,
    pub visit_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaTransition {
    pub source: StateId,
    pub destination: StateId,
    pub event: TaEvent,
    pub timing: TimingInterval,
    pub observation_count: u64,
}

/// When learning stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Convergence {
    /// Every example is processed exactly once.
    #[default]
    Batch,
    /// Passes over the examples repeat until one adds no state or transition
    /// and widens no interval. Counts are only accumulated on the first pass.
    Online { max_passes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AutomatonRecord", into = "AutomatonRecord")]
pub struct TimedAutomaton {
    width: Option<usize>,
    states: Vec<TaState>,
    transitions: Vec<TaTransition>,
    initial_state_ids: BTreeSet<StateId>,
    by_signature: HashMap<Signature, StateId>,
    by_event: HashMap<(StateId, TaEvent), usize>,
}

impl Default for TimedAutomaton {
    fn default() -> Self {
        Self::new()
    }
}

impl TimedAutomaton {
    pub fn new() -> Self {
        Self {
            width: None,
            states: Vec::new(),
            transitions: Vec::new(),
            initial_state_ids: BTreeSet::new(),
            by_signature: HashMap::new(),
            by_event: HashMap::new(),
        }
    }

    pub fn states(&self) -> &[TaState] {
        &self.states
    }

    pub fn transitions(&self) -> &[TaTransition] {
        &self.transitions
    }

    pub fn initial_state_ids(&self) -> &BTreeSet<StateId> {
        &self.initial_state_ids
    }

    /// Signature width, once any state exists.
    pub fn width(&self) -> Option<usize> {
        self.width
    }

    pub fn state(&self, id: StateId) -> &TaState {
        &self.states[id]
    }

    pub fn state_by_signature(&self, signature: &Signature) -> Option<StateId> {
        self.by_signature.get(signature).copied()
    }

    pub fn transition(&self, source: StateId, event: &TaEvent) -> Option<&TaTransition> {
        self.by_event
            .get(&(source, event.clone()))
            .map(|&i| &self.transitions[i])
    }

    fn check_width(&self, width: usize) -> Result<()> {
        match self.width {
            Some(expected) if expected != width => Err(AutomatonError::SignatureLengthMismatch {
                expected,
                found: width,
            }),
            _ => Ok(()),
        }
    }

    /// Returns the state for `signature`, creating it if needed.
    fn ensure_state(&mut self, signature: &Signature, changed: &mut bool) -> StateId {
        if let Some(id) = self.state_by_signature(signature) {
            return id;
        }
        let id = self.states.len();
        self.states.push(TaState {
            id,
            signature: signature.clone(),
            visit_count: 0,
        });
        self.by_signature.insert(signature.clone(), id);
        self.width = Some(signature.len());
        *changed = true;
        id
    }

    /// Feeds one example into the automaton. Returns whether anything other
    /// than a counter changed.
    pub fn learn_example(&mut self, example: &DiscreteObservation) -> Result<bool> {
        self.learn_inner(example, true)
    }

    fn learn_inner(&mut self, example: &DiscreteObservation, count: bool) -> Result<bool> {
        self.check_width(example.width())?;
        let stream = to_event_stream(example);
        let mut changed = false;
        let first = &stream[0];
        let mut current = self.ensure_state(&first.signature, &mut changed);
        changed |= self.initial_state_ids.insert(current);
        if count {
            self.states[current].visit_count += 1;
        }
        let mut entered = first.time;
        for entry in &stream[1..] {
            let event = entry
                .event
                .clone()
                .expect("non-initial entries carry events");
            let dwell = entry.time - entered;
            let destination = self.ensure_state(&entry.signature, &mut changed);
            match self.by_event.get(&(current, event.clone())) {
                Some(&i) => {
                    let existing = self.transitions[i].destination;
                    if existing != destination {
                        return Err(AutomatonError::NondeterminismConflict {
                            source_state: current,
                            event: event.to_string(),
                            existing,
                            conflicting: destination,
                        });
                    }
                    changed |= self.transitions[i].timing.cover(dwell);
                    if count {
                        self.transitions[i].observation_count += 1;
                    }
                }
                None => {
                    self.by_event
                        .insert((current, event.clone()), self.transitions.len());
                    self.transitions.push(TaTransition {
                        source: current,
                        destination,
                        event,
                        timing: TimingInterval::point(dwell),
                        observation_count: 1,
                    });
                    changed = true;
                }
            }
            if count {
                self.states[destination].visit_count += 1;
            }
            current = destination;
            entered = entry.time;
        }
        Ok(changed)
    }

    /// Graphviz rendering: nodes by id (initial states double-circled), edges
    /// labeled with event and dwell interval. Output is byte-stable.
    pub fn export_dot(&self) -> String {
        use fmt::Write;
        let mut out =
            String::from("digraph automaton {\n    rankdir=LR;\n    node [shape=circle];\n");
        for s in &self.states {
            let shape = if self.initial_state_ids.contains(&s.id) {
                ", shape=doublecircle"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "    s{id} [label=\"{id}\", tooltip=\"{sig}\"{shape}];",
                id = s.id,
                sig = s.signature
            );
        }
        let mut edges: Vec<&TaTransition> = self.transitions.iter().collect();
        edges.sort_by(|a, b| {
            (a.source, a.destination, &a.event).cmp(&(b.source, b.destination, &b.event))
        });
        for t in edges {
            let _ = writeln!(
                out,
                "    s{} -> s{} [label=\"{} [{:.3}, {:.3}]\"];",
                t.source, t.destination, t.event, t.timing.min, t.timing.max
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Learns an automaton from examples in the given order.
pub fn learn_automaton(
    examples: &[DiscreteObservation],
    convergence: Convergence,
) -> Result<TimedAutomaton> {
    if examples.is_empty() {
        return Err(AutomatonError::EmptyInput);
    }
    let mut automaton = TimedAutomaton::new();
    for example in examples {
        automaton.learn_inner(example, true)?;
    }
    if let Convergence::Online { max_passes } = convergence {
        for _ in 1..max_passes {
            let mut changed = false;
            for example in examples {
                changed |= automaton.learn_inner(example, false)?;
            }
            if !changed {
                break;
            }
        }
    }
    Ok(automaton)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Normal,
    UnknownEvent,
    WrongTiming,
    UnexpectedInitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Time of the offending observation (last sample for `Normal`).
    pub at: f64,
    /// State the automaton was in, if any.
    pub source: Option<StateId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<TaEvent>,
    /// Signature observed at `at`.
    pub signature: Signature,
    /// Whether `signature` is a state of the automaton.
    pub signature_known: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell: Option<f64>,
    /// Violated interval (for `WrongTiming`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<TimingInterval>,
}

impl Verdict {
    fn new(kind: VerdictKind, at: f64, signature: &Signature, known: bool) -> Self {
        Self {
            kind,
            at,
            source: None,
            event: None,
            signature: signature.clone(),
            signature_known: known,
            dwell: None,
            interval: None,
        }
    }

    pub fn is_anomaly(&self) -> bool {
        self.kind != VerdictKind::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// Return at the first anomaly.
    #[default]
    StopAtFirst,
    /// Keep replaying after anomalies, resynchronising on known signatures,
    /// and collect every anomaly.
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectOptions {
    /// Relative widening of every interval: `[min (1 - tol), max (1 + tol)]`.
    pub timing_tolerance: f64,
    pub mode: DetectionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    /// Anomalies in order; a single `Normal` verdict when there are none.
    pub verdicts: Vec<Verdict>,
}

impl AnomalyReport {
    pub fn is_normal(&self) -> bool {
        self.verdicts.iter().all(|v| !v.is_anomaly())
    }

    /// First anomaly, or the `Normal` verdict.
    pub fn primary(&self) -> &Verdict {
        &self.verdicts[0]
    }
}

/// Replays `observation` through `automaton`.
pub fn detect(
    automaton: &TimedAutomaton,
    observation: &DiscreteObservation,
    options: DetectOptions,
) -> Result<AnomalyReport> {
    automaton.check_width(observation.width())?;
    let stream = to_event_stream(observation);
    let stop = options.mode == DetectionMode::StopAtFirst;
    let mut verdicts = Vec::new();

    let first = &stream[0];
    let mut current = automaton.state_by_signature(&first.signature);
    match current {
        Some(id) if automaton.initial_state_ids.contains(&id) => {}
        known => {
            let mut v = Verdict::new(
                VerdictKind::UnexpectedInitialState,
                first.time,
                &first.signature,
                known.is_some(),
            );
            v.source = known;
            verdicts.push(v);
            if stop || known.is_none() {
                return Ok(AnomalyReport { verdicts });
            }
        }
    }

    let mut entered = first.time;
    for entry in &stream[1..] {
        let event = entry
            .event
            .clone()
            .expect("non-initial entries carry events");
        let dwell = entry.time - entered;
        let target = automaton.state_by_signature(&entry.signature);
        let anomaly = match current {
            Some(source) => match automaton.transition(source, &event) {
                Some(t) if t.timing.contains(dwell, options.timing_tolerance) => None,
                Some(t) => {
                    let mut v =
                        Verdict::new(VerdictKind::WrongTiming, entry.time, &entry.signature, true);
                    v.dwell = Some(dwell);
                    v.interval = Some(t.timing);
                    Some(v)
                }
                None => Some(Verdict::new(
                    VerdictKind::UnknownEvent,
                    entry.time,
                    &entry.signature,
                    target.is_some(),
                )),
            }
            .map(|mut v| {
                v.source = Some(source);
                v.event = Some(event);
                v
            }),
            // Lost after an earlier anomaly: only unknown signatures are reported.
            None if target.is_none() => Some(Verdict::new(
                VerdictKind::UnknownEvent,
                entry.time,
                &entry.signature,
                false,
            )),
            None => None,
        };
        if let Some(v) = anomaly {
            verdicts.push(v);
            if stop {
                return Ok(AnomalyReport { verdicts });
            }
        }
        current = target;
        entered = entry.time;
    }

    if verdicts.is_empty() {
        let last = stream.last().expect("non-empty stream");
        let at = observation.times.last().copied().unwrap_or(last.time);
        let mut v = Verdict::new(VerdictKind::Normal, at, &last.signature, true);
        v.source = current;
        verdicts.push(v);
    }
    Ok(AnomalyReport { verdicts })
}

#[derive(Serialize, Deserialize)]
struct AutomatonRecord {
    states: Vec<TaState>,
    transitions: Vec<TaTransition>,
    initial_state_ids: BTreeSet<StateId>,
}

impl From<TimedAutomaton> for AutomatonRecord {
    fn from(a: TimedAutomaton) -> Self {
        Self {
            states: a.states,
            transitions: a.transitions,
            initial_state_ids: a.initial_state_ids,
        }
    }
}

impl TryFrom<AutomatonRecord> for TimedAutomaton {
    type Error = AutomatonError;

    fn try_from(record: AutomatonRecord) -> Result<Self> {
        let bad = |msg: String| Err(AutomatonError::Malformed(msg));
        let mut a = TimedAutomaton::new();
        for (i, s) in record.states.iter().enumerate() {
            if s.id != i {
                return bad(format!("state at position {i} has id {}", s.id));
            }
            a.check_width(s.signature.len())?;
            if a.by_signature.insert(s.signature.clone(), i).is_some() {
                return bad(format!("duplicate signature {}", s.signature));
            }
            a.width = Some(s.signature.len());
        }
        let n = record.states.len();
        for (i, t) in record.transitions.iter().enumerate() {
            if t.source >= n || t.destination >= n {
                return bad(format!("transition {i} references a missing state"));
            }
            if !(t.timing.min >= 0.0 && t.timing.min <= t.timing.max) || t.observation_count == 0 {
                return bad(format!("transition {i} has an invalid interval or count"));
            }
            if t.event.is_empty()
                || t.event
                    .changes()
                    .last()
                    .is_some_and(|(bit, _)| *bit >= a.width.unwrap_or(0))
                || record.states[t.source].signature.apply(&t.event)
                    != record.states[t.destination].signature
            {
                return bad(format!(
                    "transition {i} event does not connect its endpoints"
                ));
            }
            if a.by_event.insert((t.source, t.event.clone()), i).is_some() {
                return bad(format!("transition {i} duplicates a (source, event) pair"));
            }
        }
        if let Some(id) = record.initial_state_ids.iter().find(|&&id| id >= n) {
            return bad(format!("initial state {id} does not exist"));
        }
        a.states = record.states;
        a.transitions = record.transitions;
        a.initial_state_ids = record.initial_state_ids;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(s: &str) -> Signature {
        s.parse().unwrap()
    }

    fn obs(samples: &[(f64, &str)]) -> DiscreteObservation {
        DiscreteObservation::new(samples.iter().map(|(t, s)| (*t, sig(s))).collect()).unwrap()
    }

    #[test]
    fn event_stream_collapses_repeats() {
        let d = obs(&[
            (0.0, "00"),
            (1.0, "00"),
            (2.0, "01"),
            (3.0, "01"),
            (4.0, "11"),
        ]);
        let stream = to_event_stream(&d);
        assert_eq!(stream.len(), 3);
        assert_eq!(
            (
                stream[0].time,
                stream[0].signature.to_string(),
                stream[0].event.is_none()
            ),
            (0.0, "00".into(), true)
        );
        assert_eq!(
            (
                stream[1].time,
                stream[1].event.as_ref().unwrap().to_string()
            ),
            (2.0, "+1".into())
        );
        assert_eq!(
            (
                stream[2].time,
                stream[2].event.as_ref().unwrap().to_string()
            ),
            (4.0, "+0".into())
        );

        let constant = obs(&[(0.0, "1"), (1.0, "1"), (2.0, "1")]);
        assert_eq!(to_event_stream(&constant).len(), 1);

        let alternating = obs(&[(0.0, "0"), (0.5, "1"), (1.0, "0"), (1.5, "1")]);
        let stream = to_event_stream(&alternating);
        let events: Vec<String> = stream[1..]
            .iter()
            .map(|e| e.event.as_ref().unwrap().to_string())
            .collect();
        assert_eq!(events, ["+0", "-0", "+0"]);
        assert!(stream
            .windows(2)
            .all(|w| (w[1].time - w[0].time - 0.5).abs() < 1e-12));
    }

    #[test]
    fn observation_validation() {
        assert_eq!(
            DiscreteObservation::new(vec![]).unwrap_err(),
            AutomatonError::EmptyObservation
        );
        assert!(DiscreteObservation::new(vec![(0.0, sig("01")), (1.0, sig("1"))]).is_err());
        assert!(DiscreteObservation::new(vec![(1.0, sig("01")), (1.0, sig("11"))]).is_err());
    }

    #[test]
    fn round_trip_cycle() {
        let a = learn_automaton(
            &[obs(&[(0.0, "0"), (1.0, "1"), (3.0, "0")])],
            Convergence::Batch,
        )
        .unwrap();
        assert_eq!(a.states().len(), 2);
        assert_eq!(a.transitions().len(), 2);
        assert_eq!(a.transitions()[0].timing, TimingInterval::point(1.0));
        assert_eq!(a.transitions()[1].timing, TimingInterval::point(2.0));
        assert_eq!(
            a.initial_state_ids().iter().copied().collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn intervals_widen_and_count() {
        let a = learn_automaton(
            &[
                obs(&[(0.0, "0"), (1.0, "1")]),
                obs(&[(0.0, "0"), (1.4, "1")]),
            ],
            Convergence::Batch,
        )
        .unwrap();
        assert_eq!(a.transitions().len(), 1);
        assert_eq!(
            a.transitions()[0].timing,
            TimingInterval { min: 1.0, max: 1.4 }
        );
        assert_eq!(a.transitions()[0].observation_count, 2);
    }

    #[test]
    fn online_convergence_matches_batch_structure() {
        let examples = [
            obs(&[(0.0, "00"), (1.0, "01"), (2.0, "11")]),
            obs(&[(0.0, "01"), (2.0, "11")]),
        ];
        let batch = learn_automaton(&examples, Convergence::Batch).unwrap();
        let online = learn_automaton(&examples, Convergence::Online { max_passes: 5 }).unwrap();
        assert_eq!(batch, online);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(
            learn_automaton(&[], Convergence::Batch).unwrap_err(),
            AutomatonError::EmptyInput
        );
    }

    fn trained() -> TimedAutomaton {
        learn_automaton(
            &[
                obs(&[(0.0, "00"), (1.0, "01"), (2.4, "11")]),
                obs(&[(0.0, "00"), (1.0, "01"), (2.0, "11")]),
            ],
            Convergence::Batch,
        )
        .unwrap()
    }

    #[test]
    fn detect_verdicts() {
        let a = trained();
        let strict = DetectOptions::default();
        let normal = detect(&a, &obs(&[(0.0, "00"), (1.0, "01"), (2.2, "11")]), strict).unwrap();
        assert!(normal.is_normal());
        assert_eq!(normal.verdicts.len(), 1);

        // Dwell in 01 was 1.0..1.4; 2.0 > 1.4 * 1.1.
        let slow = detect(
            &a,
            &obs(&[(0.0, "00"), (1.0, "01"), (3.0, "11")]),
            DetectOptions {
                timing_tolerance: 0.1,
                ..strict
            },
        )
        .unwrap();
        let v = slow.primary();
        assert_eq!(v.kind, VerdictKind::WrongTiming);
        assert_eq!(v.interval, Some(TimingInterval { min: 1.0, max: 1.4 }));
        assert_eq!(v.dwell, Some(2.0));
        assert_eq!(v.source, Some(1));

        // Within the widened interval.
        let ok = detect(
            &a,
            &obs(&[(0.0, "00"), (1.0, "01"), (2.5, "11")]),
            DetectOptions {
                timing_tolerance: 0.1,
                ..strict
            },
        )
        .unwrap();
        assert!(ok.is_normal());

        let unknown = detect(&a, &obs(&[(0.0, "00"), (1.0, "10")]), strict).unwrap();
        assert_eq!(unknown.primary().kind, VerdictKind::UnknownEvent);
        assert!(!unknown.primary().signature_known);

        // Known destination reached by an unseen event.
        let novel = detect(&a, &obs(&[(0.0, "00"), (1.0, "11")]), strict).unwrap();
        assert_eq!(novel.primary().kind, VerdictKind::UnknownEvent);
        assert!(novel.primary().signature_known);

        let init = detect(&a, &obs(&[(0.0, "01"), (1.0, "11")]), strict).unwrap();
        assert_eq!(init.primary().kind, VerdictKind::UnexpectedInitialState);
        assert!(init.primary().signature_known);
        assert_eq!(init.verdicts.len(), 1);

        let alien = detect(
            &a,
            &obs(&[(0.0, "10")]),
            DetectOptions {
                mode: DetectionMode::Streaming,
                ..strict
            },
        )
        .unwrap();
        assert_eq!(alien.verdicts.len(), 1);
        assert!(!alien.primary().signature_known);

        assert!(matches!(
            detect(&a, &obs(&[(0.0, "000")]), strict),
            Err(AutomatonError::SignatureLengthMismatch { .. })
        ));
    }

    #[test]
    fn streaming_collects_all_anomalies() {
        let a = trained();
        let opts = DetectOptions {
            mode: DetectionMode::Streaming,
            ..Default::default()
        };
        let d = obs(&[(0.0, "01"), (5.0, "11"), (6.0, "10"), (7.0, "11")]);
        let kinds: Vec<VerdictKind> = detect(&a, &d, opts)
            .unwrap()
            .verdicts
            .iter()
            .map(|v| v.kind)
            .collect();
        assert_eq!(
            kinds,
            [
                VerdictKind::UnexpectedInitialState,
                VerdictKind::WrongTiming,
                VerdictKind::UnknownEvent
            ]
        );
    }

    #[test]
    fn dot_export() {
        let empty = TimedAutomaton::new().export_dot();
        assert!(!empty.contains("->"));
        assert!(!empty.contains("label"));
        let a = learn_automaton(
            &[obs(&[(0.0, "0"), (1.0, "1"), (3.0, "0")])],
            Convergence::Batch,
        )
        .unwrap();
        let dot = a.export_dot();
        assert_eq!(dot.matches("[label=\"").count(), 4);
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("s0 -> s1 [label=\"+0 [1.000, 1.000]\"]"));
        assert_eq!(dot, a.export_dot());
    }

    #[test]
    fn event_text_round_trip() {
        let e: TaEvent = "+0,-3".parse().unwrap();
        assert_eq!(e.changes(), &[(0, Edge::Rise), (3, Edge::Fall)]);
        assert!("+3,+1".parse::<TaEvent>().is_err());
        assert!("x".parse::<Signature>().is_err());
    }

    // Random corpora over narrow signatures so states and events recur.
    fn corpus() -> impl Strategy<Value = Vec<DiscreteObservation>> {
        (1usize..4).prop_flat_map(|width| {
            prop::collection::vec(
                prop::collection::vec(
                    (1u32..8, prop::collection::vec(any::<bool>(), width)),
                    1..12,
                ),
                1..6,
            )
            .prop_map(|examples| {
                examples
                    .into_iter()
                    .map(|samples| {
                        let mut t = 0.0;
                        let samples = samples
                            .into_iter()
                            .map(|(gap, bits)| {
                                t += gap as f64 * 0.25;
                                (t, Signature::new(bits))
                            })
                            .collect();
                        DiscreteObservation::new(samples).unwrap()
                    })
                    .collect()
            })
        })
    }

    type Structure = (BTreeSet<String>, BTreeSet<String>, BTreeSet<String>);

    fn structure(a: &TimedAutomaton) -> Structure {
        let sig_of = |id: StateId| a.state(id).signature.to_string();
        (
            a.states()
                .iter()
                .map(|s| format!("{} {}", s.signature, s.visit_count))
                .collect(),
            a.transitions()
                .iter()
                .map(|t| {
                    format!(
                        "{} {} {} {} {} {}",
                        sig_of(t.source),
                        t.event,
                        sig_of(t.destination),
                        t.timing.min,
                        t.timing.max,
                        t.observation_count
                    )
                })
                .collect(),
            a.initial_state_ids().iter().map(|&id| sig_of(id)).collect(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn structure_independent_of_order(examples in corpus(), seed in any::<u64>()) {
            let forward = learn_automaton(&examples, Convergence::Batch).unwrap();
            let mut shuffled = examples.clone();
            let mut rng = crate::rng::RngStream::new(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            let other = learn_automaton(&shuffled, Convergence::Batch).unwrap();
            prop_assert_eq!(structure(&forward), structure(&other));
        }

        #[test]
        fn events_connect_endpoints(examples in corpus()) {
            let a = learn_automaton(&examples, Convergence::Batch).unwrap();
            for t in a.transitions() {
                prop_assert_eq!(a.state(t.source).signature.apply(&t.event), a.state(t.destination).signature.clone());
            }
        }

        #[test]
        fn intervals_contain_training_dwells_and_replay_is_normal(examples in corpus()) {
            let a = learn_automaton(&examples, Convergence::Batch).unwrap();
            for ex in &examples {
                let stream = to_event_stream(ex);
                let mut state = a.state_by_signature(&stream[0].signature).unwrap();
                for w in stream.windows(2) {
                    let t = a.transition(state, w[1].event.as_ref().unwrap()).unwrap();
                    prop_assert!(t.timing.contains(w[1].time - w[0].time, 0.0));
                    state = t.destination;
                }
                prop_assert!(detect(&a, ex, DetectOptions::default()).unwrap().is_normal());
            }
        }

        #[test]
        fn adding_examples_is_monotone(examples in corpus()) {
            let mut a = TimedAutomaton::new();
            for ex in &examples {
                let before = a.clone();
                a.learn_example(ex).unwrap();
                prop_assert!(a.states().len() >= before.states().len());
                for (old, new) in before.states().iter().zip(a.states()) {
                    prop_assert_eq!(&old.signature, &new.signature);
                }
                for old in before.transitions() {
                    let new = a.transition(old.source, &old.event).unwrap();
                    prop_assert_eq!(new.destination, old.destination);
                    prop_assert!(new.timing.min <= old.timing.min && new.timing.max >= old.timing.max);
                }
                prop_assert!(before.initial_state_ids().is_subset(a.initial_state_ids()));
            }
        }
    }
}
