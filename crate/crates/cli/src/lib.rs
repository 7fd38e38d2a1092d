//! The `mcv` command.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mcv_core::analysis::{bh_adjust, parse_p_values, tabulate, trials, write_cells_csv, write_trials_csv};
use mcv_core::channel::{codec_from_id, impair_file};
use mcv_core::parser::robustness::one_edit_report;
use mcv_core::parser::{tokenize, StopWords};
use mcv_core::manifest::ExperimentManifest;
use mcv_core::results::ResultsDocument;
use mcv_core::scoring::{levenshtein, score_with_truth, truncated_distance, TokenAggregation, DISTANCE_CAP};
use mcv_core::{
    generate_plate, normalize_answer, plate_to_nato, ImpairmentSpec, MatchMetric, NatoLexicon, TranscriptParser,
    DEFAULT_LEAD_SENTENCE, PASSTHROUGH_CODEC,
};
use mcv_robot::{clean_transcript_table, engine_from_spec, run_session, ApiClient, RunOptions};
use mcv_service::{ExperimentConfig, ServiceConfig, Store};

#[derive(Debug, Parser)]
#[command(name = "mcv", version, about = "License-plate listening experiments over impaired voice channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment service.
    Serve(ServeArgs),
    /// Build an experiment into a data directory without starting the service.
    Build(BuildArgs),
    /// Pass one WAVE file through the impairment chain.
    Impair(ImpairArgs),
    /// Parse a transcript into a plate.
    Parse(ParseArgs),
    /// Compare an answer with the ground truth.
    Score(ScoreArgs),
    /// Print a seeded random plate and its spoken form.
    Plate(PlateArgs),
    /// Enumerate single-edit variants of every lexicon word.
    Robustness(RobustnessArgs),
    /// Analyze an exported results document.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Machine subject.
    #[command(subcommand)]
    Robot(RobotCommand),
    /// Download an experiment's results document (admin).
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "MCV_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "MCV_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Admin endpoints are disabled without a token.
    #[arg(long, env = "MCV_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
    /// Static files (the participant UI) served under `/`.
    #[arg(long, env = "MCV_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Experiment config as JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "MCV_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Overrides the id in the config.
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ImpairArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    #[arg(long, default_value = PASSTHROUGH_CODEC)]
    pub codec: String,
    #[arg(long, default_value_t = 0.01)]
    pub p_gb: f64,
    /// Defaults to 1 - p_gb.
    #[arg(long)]
    pub p_bg: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub burst_k: u32,
    #[arg(long, default_value_t = 0.0)]
    pub frame_drop: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Levscore,
    Bleu,
}

impl From<MetricArg> for MatchMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Levscore => MatchMetric::Levscore,
            MetricArg::Bleu => MatchMetric::Bleu,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    Mean,
    Sum,
}

impl From<AggregationArg> for TokenAggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Mean => TokenAggregation::Mean,
            AggregationArg::Sum => TokenAggregation::Sum,
        }
    }
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Transcript text; read from stdin when absent.
    pub text: Option<String>,
    #[arg(long, value_enum, default_value = "levscore")]
    pub metric: MetricArg,
    #[arg(long, default_value = DEFAULT_LEAD_SENTENCE)]
    pub lead: String,
    /// Drop every stop word, including digit homophones such as "won".
    #[arg(long)]
    pub strict_stopwords: bool,
    /// Print token matches as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub answer: String,
    #[arg(long)]
    pub truth: String,
}

#[derive(Debug, Args)]
pub struct PlateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = DEFAULT_LEAD_SENTENCE)]
    pub lead: String,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long, value_enum, default_value = "levscore")]
    pub metric: MetricArg,
    /// Write the collision list here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-condition means, one row per (codec, burst_k, subject_type).
    Tabulate(TableArgs),
    /// One row per answered trial, for external statistics software.
    Trials(TableArgs),
    /// Benjamini-Hochberg adjustment of a p-value list.
    Bh(BhArgs),
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BhArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// One p-value per line.
    #[arg(long)]
    pub pvalues: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum RobotCommand {
    /// Walk one session through a speech-to-text engine.
    Run(RobotRunArgs),
    /// Write a `mock:` transcript table holding the clean spoken form of
    /// every recording in a manifest.
    MockTable(MockTableArgs),
}

#[derive(Debug, Args)]
pub struct MockTableArgs {
    /// `manifest.json` or the experiment directory holding it.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RobotRunArgs {
    /// Service base URL.
    #[arg(long)]
    pub url: String,
    /// Experiment id or shared link.
    #[arg(long)]
    pub experiment: String,
    /// `mock:<table.json>`, `external:<cmd>` or `http:<url>`.
    #[arg(long)]
    pub engine: String,
    #[arg(long, value_enum, default_value = "levscore")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "mean")]
    pub aggregation: AggregationArg,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Adds the with-truth score from the admin export.
    #[arg(long, env = "MCV_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
    /// Progress file for resuming an interrupted run.
    #[arg(long)]
    pub progress: Option<PathBuf>,
    /// Mock engine only: corrupt one word per transcript.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long, default_value_t = 120)]
    pub engine_timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub url: String,
    #[arg(long)]
    pub experiment: String,
    #[arg(long, env = "MCV_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_results(path: &Path) -> Result<ResultsDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Build(a) => build(a),
        Command::Impair(a) => impair(a),
        Command::Parse(a) => parse(a),
        Command::Score(a) => score(a),
        Command::Plate(a) => plate(a),
        Command::Robustness(a) => robustness(a),
        Command::Analyze(c) => analyze(c),
        Command::Robot(RobotCommand::Run(a)) => robot_run(a),
        Command::Robot(RobotCommand::MockTable(a)) => mock_table(a),
        Command::Export(a) => export(a),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    if a.admin_token.is_none() {
        eprintln!("warning: no admin token configured; experiment creation and export are disabled");
    }
    let config = ServiceConfig {
        data_dir: a.data_dir,
        bind: a.bind,
        admin_token: a.admin_token,
        static_dir: a.static_dir,
    };
    runtime()?.block_on(mcv_service::serve(config))?;
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text).context("parsing experiment config")?;
    if a.id.is_some() {
        config.id = a.id;
    }
    let store = Store::open(&a.data_dir)?;
    let manifest = store.create_experiment(&config)?;
    println!("{}", manifest.id);
    eprintln!(
        "built {} recordings into {}",
        manifest.recordings.len(),
        store.experiment_dir(&manifest.id).display()
    );
    Ok(())
}

fn impair(a: ImpairArgs) -> Result<()> {
    let spec = ImpairmentSpec {
        codec: a.codec.clone(),
        p_gb: a.p_gb,
        p_bg: a.p_bg.unwrap_or(1.0 - a.p_gb),
        burst_k: a.burst_k,
        frame_drop_p: a.frame_drop,
        seed: a.seed,
    };
    let codec = codec_from_id(&a.codec)?;
    let out = impair_file(&a.input, &a.output, &spec, codec.as_ref())?;
    eprintln!(
        "wrote {} samples at {} Hz to {}",
        out.samples.len(),
        out.sample_rate,
        a.output.display()
    );
    Ok(())
}

fn parse(a: ParseArgs) -> Result<()> {
    let text = match a.text {
        Some(t) => t,
        None => io::read_to_string(io::stdin())?,
    };
    let mut parser = TranscriptParser::new(a.metric.into()).with_lead(&a.lead);
    if a.strict_stopwords {
        parser = parser.with_stopwords(StopWords::english());
    }
    let parsed = parser.parse(&text);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&parsed)?);
    } else {
        println!("{}", parsed.plate);
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let (answer, truth) = (normalize_answer(&a.answer), normalize_answer(&a.truth));
    println!("answer\t{answer}");
    println!("truth\t{truth}");
    println!("score\t{:.6}", score_with_truth(&answer, &truth));
    println!("levenshtein\t{}", levenshtein(&answer, &truth));
    println!("truncated\t{}", truncated_distance(&answer, &truth, DISTANCE_CAP)?);
    Ok(())
}

fn plate(a: PlateArgs) -> Result<()> {
    let plate = generate_plate(a.seed);
    println!("{plate}\t{}", plate_to_nato(&plate, &NatoLexicon::standard(), &a.lead)?);
    Ok(())
}

fn robustness(a: RobustnessArgs) -> Result<()> {
    let report = one_edit_report(
        &NatoLexicon::standard(),
        a.metric.into(),
        &tokenize(DEFAULT_LEAD_SENTENCE),
        &StopWords::english_sparing_homophones(),
    );
    output(a.out.as_deref())?.write_all(report.collision_fixture().as_bytes())?;
    eprintln!(
        "{} variants, {} recovered, {} collisions, {} removed by filters",
        report.total_variants,
        report.recovered,
        report.collisions.len(),
        report.filtered.len()
    );
    if !report.mismatches.is_empty() {
        bail!("matcher disagreed with exhaustive scoring on {} variants", report.mismatches.len());
    }
    Ok(())
}

fn analyze(c: AnalyzeCommand) -> Result<()> {
    match c {
        AnalyzeCommand::Tabulate(a) => {
            let cells = tabulate(&read_results(&a.results)?)?;
            write_cells_csv(&cells, output(a.csv.as_deref())?)?;
        }
        AnalyzeCommand::Trials(a) => {
            let rows = trials(&read_results(&a.results)?)?;
            write_trials_csv(&rows, output(a.csv.as_deref())?)?;
        }
        AnalyzeCommand::Bh(a) => {
            let text = fs::read_to_string(&a.pvalues).with_context(|| format!("reading {}", a.pvalues.display()))?;
            let p = parse_p_values(&text)?;
            let result = bh_adjust(&p, a.alpha)?;
            let mut out = io::stdout().lock();
            writeln!(out, "index\tp\tadjusted\trejected")?;
            for (i, p) in p.iter().enumerate() {
                writeln!(out, "{i}\t{p}\t{:.6}\t{}", result.adjusted[i], result.rejected[i])?;
            }
        }
    }
    Ok(())
}

fn mock_table(a: MockTableArgs) -> Result<()> {
    let dir = if a.manifest.is_dir() {
        a.manifest.clone()
    } else {
        a.manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let manifest = ExperimentManifest::load_dir(&dir).with_context(|| format!("loading {}", a.manifest.display()))?;
    let mut out = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &clean_transcript_table(&manifest))?;
    writeln!(out)?;
    Ok(())
}

fn robot_run(a: RobotRunArgs) -> Result<()> {
    let timeout = Duration::from_secs(a.engine_timeout_secs);
    let engine = engine_from_spec(&a.engine, timeout, a.noise_seed)?;
    let options = RunOptions {
        metric: a.metric.into(),
        aggregation: a.aggregation.into(),
        admin_token: a.admin_token,
        progress_path: a.progress,
        ..RunOptions::default()
    };
    let report = runtime()?.block_on(run_session(&a.url, &a.experiment, engine.as_ref(), &options))?;
    let json = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(path) => fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    eprintln!(
        "session {}: {} recordings, {} engine failures",
        report.session_id,
        report.recordings.len(),
        report.engine_failures
    );
    if let Some(s) = &report.without_truth {
        eprintln!("score without ground truth: {:.4}", s.experiment_score);
    }
    if let Some(s) = &report.with_truth {
        eprintln!("score with ground truth: {:.4}", s.experiment_score);
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let id = mcv_robot::experiment_id_from_link(&a.experiment);
    let doc = runtime()?.block_on(async {
        ApiClient::new(&a.url, Duration::from_secs(60))?
            .results(&id, &a.admin_token)
            .await
    })?;
    output(a.out.as_deref())?.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    Ok(())
}
