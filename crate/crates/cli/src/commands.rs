use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hybrid_ad_core::automaton::{DetectOptions, Verdict};
use hybrid_ad_core::datagen::{
    generate_cycles, inject_anomaly, AnomalyKind, AnomalySpec, CycleSpec,
};
use hybrid_ad_core::pipeline::{detect_anomalies, learn_model, Classification, Evaluation};
use hybrid_ad_core::signals::SignalKind;
use hybrid_ad_core::RngStream;
use serde::Serialize;

use crate::csvio::{self, Schema};
use crate::error::{self, CliError, Result};
use crate::files::{read_toml, Manifest, ManifestEntry, ModelFile, TrainSettings, MANIFEST_NAME};

/// Learn behavior models of hybrid systems from cycle recordings and flag
/// anomalous cycles.
///
/// Exit status: 0 success, 2 usage error, 3 malformed input file,
/// 4 validation or training failure, 5 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "hybrid-ad", version)]
pub struct Cli {
    /// Root seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus of cycle CSV files and a manifest.
    Generate(GenerateArgs),
    /// Learn a model from a directory of cycle CSV files.
    Train(TrainArgs),
    /// Classify every cycle in a directory against a model.
    Detect(DetectArgs),
    /// Summarize a model and optionally export its automaton as DOT.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Cycle spec (TOML); built-in base cycle when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(short = 'n', long, default_value_t = 200)]
    pub cycles: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Perturb every cycle: noise-at-start, noise-at-random, drop-to-zero,
    /// raise-by-fraction or ramp.
    #[arg(long)]
    pub anomaly: Option<AnomalyKind>,
    /// Noise sigma, raise fraction or ramp height.
    #[arg(long, default_value_t = 1.0)]
    pub magnitude: f64,
    /// Perturbed samples per cycle.
    #[arg(long, default_value_t = 15)]
    pub span: usize,
    /// Continuous signal to perturb (all when omitted).
    #[arg(long)]
    pub signal: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training settings (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub window_seconds: Option<f64>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub sample_time: Option<f64>,
    /// Hidden layer widths, bottom to top, e.g. `40,30,20,15`.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub cd_k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// JSON-lines report, one line per cycle.
    #[arg(long)]
    pub out: PathBuf,
    /// Relative widening of every learned timing interval.
    #[arg(long, default_value_t = 0.0)]
    pub timing_tolerance: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(args) => generate(&args, cli.seed.unwrap_or(0), out),
        Command::Train(args) => train(&args, cli.seed, out),
        Command::Detect(args) => detect(&args, out),
        Command::Inspect(args) => inspect(&args, out),
    }
}

fn stdout_error(e: std::io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}

pub fn generate(args: &GenerateArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => read_toml::<CycleSpec>(path)?,
        None => CycleSpec::default(),
    };
    spec.validate()?;
    let anomaly = args.anomaly.map(|kind| AnomalySpec {
        kind,
        magnitude: args.magnitude,
        span: args.span,
        signal: args.signal,
    });
    let mut rng = RngStream::new(seed);
    let cycles = generate_cycles(&spec, args.cycles, &mut rng)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;

    let schema = Schema::generic(&spec.kinds());
    let digits = args.cycles.saturating_sub(1).to_string().len().max(4);
    let mut entries = Vec::with_capacity(cycles.len());
    for (i, cycle) in cycles.iter().enumerate() {
        let file = format!("cycle_{i:0digits$}.csv");
        let (observation, injected_at) = match &anomaly {
            Some(a) => {
                let (o, t) = inject_anomaly(cycle, a, &mut rng)?;
                (o, Some(t))
            }
            None => (cycle.clone(), None),
        };
        csvio::write_cycle_file(&args.out.join(&file), &schema, &observation)?;
        entries.push(ManifestEntry {
            file,
            label: anomaly.map_or_else(|| "normal".to_string(), |a| a.kind.to_string()),
            injected_at,
        });
    }
    let manifest = Manifest {
        seed,
        spec,
        anomaly,
        cycles: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    error::write(&args.out.join(MANIFEST_NAME), json)?;
    writeln!(
        out,
        "wrote {} cycles to {}",
        cycles.len(),
        args.out.display()
    )
    .map_err(stdout_error)
}

pub fn train(args: &TrainArgs, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let mut settings = match &args.config {
        Some(path) => read_toml::<TrainSettings>(path)?,
        None => TrainSettings::default(),
    };
    if let Some(s) = seed {
        settings.seed = s;
    }
    if let Some(v) = args.window_seconds {
        settings.window_seconds = v;
    }
    if let Some(v) = args.overlap {
        settings.overlap = v;
    }
    if let Some(v) = args.sample_time {
        settings.sample_time = Some(v);
    }
    if let Some(v) = &args.layers {
        settings.layers = v.clone();
    }
    if let Some(v) = args.cd_k {
        settings.cd_k = v;
    }
    if let Some(v) = args.epochs {
        settings.epochs = v;
    }
    if let Some(v) = args.lr {
        settings.lr = Some(v);
    }
    if settings.layers.is_empty() {
        return Err(CliError::Validation(
            "at least one hidden layer is required".into(),
        ));
    }
    let config = settings.to_config();

    let (_, cycles) = csvio::read_dir(&args.data)?;
    let observations: Vec<_> = cycles.into_iter().map(|c| c.observation).collect();
    let (model, summary) = learn_model(&observations, &config)?;
    let file = ModelFile::new(model, config, summary.clone());
    error::write(&args.out, file.to_json())?;

    let mut report = format!(
        "cycles: {}\nsnapshots: {}\ndistinct codes: {}\nstates: {}\ntransitions: {}\n",
        observations.len(),
        summary.snapshots,
        summary.distinct_codes,
        summary.states,
        summary.transitions
    );
    for w in &summary.warnings {
        report.push_str(&format!("warning: {w:?}\n"));
    }
    out.write_all(report.as_bytes()).map_err(stdout_error)
}

#[derive(Serialize)]
struct ReportLine<'a> {
    cycle: &'a str,
    class: Classification,
    detail: &'a Verdict,
    t: f64,
}

pub fn detect(args: &DetectArgs, out: &mut dyn Write) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let manifest = Manifest::load(&args.data)?;
    let (_, cycles) = csvio::read_dir(&args.data)?;
    let options = DetectOptions {
        timing_tolerance: args.timing_tolerance,
        ..DetectOptions::default()
    };
    let mut lines = String::new();
    let mut evaluation = Evaluation::default();
    for cycle in &cycles {
        let report = detect_anomalies(&file.model, &cycle.observation, options)
            .map_err(|e| CliError::Validation(format!("cycle `{}`: {e}", cycle.id)))?;
        let finding = &report.findings[0];
        let line = ReportLine {
            cycle: &cycle.id,
            class: finding.class,
            detail: &finding.verdict,
            t: finding.verdict.at,
        };
        lines.push_str(&serde_json::to_string(&line).expect("report serializes"));
        lines.push('\n');
        let stem = cycle.id.split('/').next().unwrap_or(&cycle.id);
        let label = manifest
            .as_ref()
            .and_then(|m| m.label_of(stem))
            .unwrap_or("all");
        *evaluation
            .rows
            .entry(label.to_string())
            .or_default()
            .entry(finding.class)
            .or_default() += 1;
    }
    error::write(&args.out, lines)?;
    write!(out, "{evaluation}").map_err(stdout_error)
}

pub fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let model = &file.model;
    let automaton = model.automaton();
    let architecture: Vec<String> = model
        .dbn()
        .architecture()
        .iter()
        .map(|w| w.to_string())
        .collect();
    let continuous = model
        .kinds()
        .iter()
        .filter(|&&k| k == SignalKind::Continuous)
        .count();
    let w = model.windowing();
    let text = format!(
        "format: {} v{}\n\
         signals: {} continuous, {} discrete\n\
         window: {} s ({} samples), overlap {}, sample time {} s\n\
         architecture: {}\n\
         code width: {}\n\
         signature width: {}\n\
         states: {}\n\
         transitions: {}\n\
         initial states: {:?}\n\
         seed: {}\n\
         config digest: {}\n",
        file.format,
        file.version,
        continuous,
        model.native_discrete_indices().len(),
        w.window_seconds,
        w.samples_per_window(),
        w.overlap,
        w.sample_time,
        architecture.join("-"),
        model.code_width(),
        model.signature_width(),
        automaton.states().len(),
        automaton.transitions().len(),
        automaton.initial_state_ids(),
        file.metadata.seed,
        file.metadata.config_digest,
    );
    if let Some(path) = &args.dot {
        error::write(path, automaton.export_dot())?;
    }
    out.write_all(text.as_bytes()).map_err(stdout_error)
}
