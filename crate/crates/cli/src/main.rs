//! `grlsm`: corpus generation, training, evaluation and reports.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage or config error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grlsm::autodiff::{Graph, NodeId};
use grlsm::corpus::{build_dataset, generate_corpus, read_corpus_file, write_corpus_file, CorpusSpec, Vocab};
use grlsm::dynamics::{energy, integrate_flow, unit_bowl};
use grlsm::format::{fmt_f64, to_json_sig17};
use grlsm::metrics::{
    compare, comparison_csv, evaluate, held_out_docs, latent_stability, probe_windows, stability_csv, MetricsReport,
    DEFAULT_EPS,
};
use grlsm::model::ModelParams;
use grlsm::regularizer::{regularizer, LatentVector, RegConfig};
use grlsm::train::{history_csv, train};
use grlsm::Error;
use serde::Serialize;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::NeedTwoPasses(_) | Error::SmallGroup(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

type BoxedLoss<'a> = Box<dyn Fn(&mut Graph, &[NodeId]) -> NodeId + 'a>;

#[derive(Parser)]
#[command(
    name = "grlsm",
    version,
    about = "Gradient-regularized latent space modulation on a toy character model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic structured corpus.
    GenCorpus(GenCorpusArgs),
    /// Train a model on a corpus file.
    Train(TrainArgs),
    /// Evaluate a model and write a metrics report.
    Eval(EvalArgs),
    /// Latent stability under embedding perturbations.
    Stability(StabilityArgs),
    /// Integrate the latent gradient flow.
    Flow(FlowArgs),
    /// Compare a baseline and a regularized metrics report.
    Report(ReportArgs),
}

fn parse_range(s: &str) -> Result<[usize; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok([lo, hi])
}

fn parse_docs(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("docs must be ≥ 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Output corpus file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = parse_docs)]
    docs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sections per document, LO,HI.
    #[arg(long, value_parser = parse_range)]
    sections: Option<[usize; 2]>,
    /// Bullets per section, LO,HI.
    #[arg(long, value_parser = parse_range)]
    bullets: Option<[usize; 2]>,
    /// Numbered items per section, LO,HI.
    #[arg(long, value_parser = parse_range)]
    numbered: Option<[usize; 2]>,
    /// Body sentences per section, LO,HI.
    #[arg(long, value_parser = parse_range)]
    sentences: Option<[usize; 2]>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file; history and resolved config go to the same directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Run configuration; only its `eval` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the evaluation seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Perturbation magnitudes.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EPS)]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    passes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of held-out windows probed.
    #[arg(long, default_value_t = 64)]
    windows: usize,
    #[arg(long, default_value_t = 256)]
    max_len: usize,
}

#[derive(Args)]
struct FlowArgs {
    /// Built-in loss instead of a model: `quadratic` is ½‖z‖².
    #[arg(long, value_parser = ["quadratic"], conflicts_with_all = ["model", "corpus"])]
    demo: Option<String>,
    #[arg(long, requires = "corpus")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    corpus: Option<PathBuf>,
    /// Which corpus example (window, next token) to start from, with a model.
    #[arg(long, default_value_t = 0)]
    example: usize,
    /// Starting latent for the demo, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.0], allow_hyphen_values = true)]
    z0: Vec<f64>,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Output trajectory CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    grlsm: PathBuf,
    /// Output comparison CSV.
    #[arg(long)]
    out: PathBuf,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// `dir/stem.config.json` next to `out`.
fn resolved_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.config.json"))
}

fn write_resolved<T: Serialize>(out: &Path, cfg: &T) -> CliResult {
    let bytes = to_json_sig17(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&resolved_path(out), &bytes)
}

fn load_model(path: &Path) -> Result<ModelParams, CliError> {
    ModelParams::from_json_bytes(&read(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_texts(path: &Path) -> Result<Vec<String>, CliError> {
    let texts = read_corpus_file(path)?;
    if texts.is_empty() {
        return Err(CliError::Runtime(format!(
            "{}: corpus has no documents",
            path.display()
        )));
    }
    Ok(texts)
}

fn gen_corpus(a: GenCorpusArgs) -> CliResult {
    let d = CorpusSpec::default();
    let spec = CorpusSpec {
        docs: a.docs,
        seed: a.seed,
        sections_range: a.sections.unwrap_or(d.sections_range),
        bullets_range: a.bullets.unwrap_or(d.bullets_range),
        numbered_range: a.numbered.unwrap_or(d.numbered_range),
        body_sentences_range: a.sentences.unwrap_or(d.body_sentences_range),
        ..d
    };
    spec.validate()?;
    let texts: Vec<String> = generate_corpus(&spec).into_iter().map(|doc| doc.text).collect();
    let bytes = write_corpus_file(&a.out, &texts)?;
    write_resolved(&a.out, &spec)?;
    println!("{} documents, {} bytes", texts.len(), bytes);
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let cfg = RunConfig::load(&a.config)?;
    let texts = load_texts(&a.corpus)?;
    let vocab = Vocab::from_texts(texts.iter().map(String::as_str));
    let data = build_dataset(&texts, &vocab, cfg.model.window, cfg.corpus.max_len, cfg.corpus.pad_to)?;
    let init = ModelParams::init(vocab, cfg.model.window, cfg.model.dims(), cfg.train.seed);
    let (model, history) = train(&init, &data, &cfg.train).map_err(|e| match e {
        Error::NonFiniteLoss { epoch, batch } => {
            CliError::Runtime(format!("training diverged at epoch {epoch}, batch {batch}"))
        }
        other => other.into(),
    })?;
    write(&a.out, &model.to_json_bytes())?;
    write(
        &a.out.with_file_name(&cfg.outputs.history),
        history_csv(&history).as_bytes(),
    )?;
    write_resolved(&a.out, &cfg)?;
    if let Some(last) = history.last() {
        println!(
            "{} epochs, train_loss {}, val_loss {}",
            history.len(),
            fmt_f64(last.train_loss),
            fmt_f64(last.val_loss)
        );
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let mut eval_cfg = match &a.config {
        Some(p) => RunConfig::load(p)?.eval,
        None => Default::default(),
    };
    if let Some(s) = a.seed {
        eval_cfg.seed = s;
    }
    let model = load_model(&a.model)?;
    let texts = load_texts(&a.corpus)?;
    let report = evaluate(&model, &texts, &eval_cfg)?;
    write(
        &a.out,
        &to_json_sig17(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    write_resolved(&a.out, &eval_cfg)?;
    println!("perplexity {}", fmt_f64(report.perplexity));
    Ok(())
}

fn stability_cmd(a: StabilityArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let texts = load_texts(&a.corpus)?;
    let data = build_dataset(&texts, &model.vocab, model.window, a.max_len, 0)?;
    let examples = data.examples_for(&held_out_docs(&model, texts.len()));
    let rows = latent_stability(
        &model.evaluator(),
        &probe_windows(&examples, a.windows),
        &a.eps,
        a.passes,
        a.seed,
    )?;
    write(&a.out, stability_csv(&rows).as_bytes())?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        eps: &'a [f64],
        passes: usize,
        seed: u64,
        windows: usize,
        max_len: usize,
    }
    write_resolved(
        &a.out,
        &Resolved {
            eps: &a.eps,
            passes: a.passes,
            seed: a.seed,
            windows: a.windows,
            max_len: a.max_len,
        },
    )
}

fn flow_cmd(a: FlowArgs) -> CliResult {
    if !(a.dt > 0.0 && a.dt.is_finite()) {
        return Err(CliError::Usage(format!("--dt must be > 0, got {}", a.dt)));
    }
    let reg = RegConfig {
        lambda: a.lambda,
        delta: a.delta,
        ..RegConfig::default()
    };
    reg.validate()?;
    let model;
    let target;
    let (z0, loss): (LatentVector, BoxedLoss<'_>) = match (&a.demo, &a.model, &a.corpus) {
        (Some(_), _, _) => (LatentVector::new(a.z0.clone())?, Box::new(unit_bowl)),
        (None, Some(m), Some(c)) => {
            model = load_model(m)?;
            let texts = load_texts(c)?;
            let data = build_dataset(&texts, &model.vocab, model.window, usize::MAX, 0)?;
            let ex = data
                .examples()
                .into_iter()
                .nth(a.example)
                .ok_or_else(|| CliError::Usage(format!("--example {} is out of range", a.example)))?;
            target = ex.target;
            let m = &model;
            (
                model.encode(&ex.window)?,
                Box::new(move |g: &mut _, z: &[_]| m.latent_loss_node(g, z, target)),
            )
        }
        _ => {
            return Err(CliError::Usage(
                "flow needs --demo quadratic or --model with --corpus".into(),
            ))
        }
    };
    let traj = integrate_flow(&z0, &*loss, &reg, a.dt, a.steps)?;
    let last = traj.last().expect("trajectory is non-empty");
    let base = {
        let mut g = Graph::new();
        let zn: Vec<_> = last.as_slice().iter().map(|&v| g.variable(v)).collect();
        let l = loss(&mut g, &zn);
        g.value(l)
    };
    let value = base + reg.lambda * regularizer(&*loss, last, &reg, 0)?;
    write(&a.out, traj.to_csv().as_bytes())?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        demo: Option<&'a str>,
        model: Option<&'a Path>,
        corpus: Option<&'a Path>,
        example: usize,
        z0: &'a [f64],
        dt: f64,
        steps: usize,
        reg: &'a RegConfig,
    }
    write_resolved(
        &a.out,
        &Resolved {
            demo: a.demo.as_deref(),
            model: a.model.as_deref(),
            corpus: a.corpus.as_deref(),
            example: a.example,
            z0: z0.as_slice(),
            dt: a.dt,
            steps: a.steps,
            reg: &reg,
        },
    )?;
    let e = if traj.len() >= 3 {
        energy(&traj, value, &reg)?
    } else {
        value
    };
    println!("final_loss {}", fmt_f64(value));
    println!("energy {}", fmt_f64(e));
    Ok(())
}

const COHERENCE_NOTE: &str = "note: improvements are relative changes against the baseline. Coherence has no \
scoring rubric and is not computed; structural_alignment and semantic_consistency stand in for it.";

fn report_cmd(a: ReportArgs) -> CliResult {
    let parse = |p: &Path| -> Result<MetricsReport, CliError> {
        serde_json::from_slice(&read(p)?).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    };
    let baseline = parse(&a.baseline)?;
    let grlsm = parse(&a.grlsm)?;
    write(&a.out, comparison_csv(&compare(&baseline, &grlsm)).as_bytes())?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        baseline: &'a Path,
        grlsm: &'a Path,
    }
    write_resolved(
        &a.out,
        &Resolved {
            baseline: &a.baseline,
            grlsm: &a.grlsm,
        },
    )?;
    println!("{COHERENCE_NOTE}");
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Stability(a) => stability_cmd(a),
        Command::Flow(a) => flow_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Runtime(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}
