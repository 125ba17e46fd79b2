use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use lgibg::checkpoint::Checkpoint;
use lgibg::config::RunConfig;
use lgibg::dataset::Dataset;
use lgibg::gnn::EmbeddingTable;
use lgibg::graph::{build_local_graph, LocalContextGraph};
use lgibg::model::Model;
use lgibg::selfcheck::{model_gradient_check, toy_problem};
use lgibg::stream::{day_range, default_day_origin, parse_event_log, slice_day, Vocabulary};
use lgibg::synth::{generate, ScenarioSpec};
use lgibg::training::{evaluate, history_csv, holdout, run_protocol, split_protocol, train, EvalReport, TaskReport};
use lgibg::{Error, Result};

#[derive(Parser)]
#[command(name = "lgibg", version, about = "Behavior graphs for daily affect prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-day graphs from one event log and dump them as JSON.
    BuildGraph(BuildGraphArgs),
    /// Run the split protocol on a cohort and train a final model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on seeded splits of a cohort.
    Eval(EvalArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Export attention weights of one sample.
    Inspect(InspectArgs),
    /// Verify model gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Start of day 0 in seconds; defaults to the midnight before the first event.
    #[arg(long)]
    day_origin: Option<i64>,
    #[arg(long, default_value_t = 3)]
    span: usize,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat dotted-key JSON config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "LGBG_SEED")]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set train.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dp: Option<usize>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Disable the tanh after each message-passing layer.
    #[arg(long)]
    linear_layers: bool,
    #[arg(long)]
    no_homogeneous: bool,
    #[arg(long)]
    no_heterogeneous: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, env = "LGBG_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, env = "LGBG_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Index into the cohort's labelled samples.
    #[arg(long)]
    sample: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, env = "LGBG_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn load_table(path: Option<&Path>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    match path {
        Some(p) => EmbeddingTable::load(p, vocab, Some(seed)),
        None => Ok(EmbeddingTable::fallback(vocab, dim, seed)),
    }
}

fn build_graph(args: &BuildGraphArgs) -> Result<()> {
    if args.span == 0 {
        return Err(Error::Validation("--span must be at least 1".into()));
    }
    let vocab = Vocabulary::load(&args.vocab)?;
    let streams = parse_event_log(&args.log, &vocab)?;
    let table = load_table(args.embeddings.as_deref(), &vocab, 50, 0)?;
    ensure_dir(&args.out)?;
    let origin = args.day_origin.or_else(|| default_day_origin(&streams));
    let mut graphs: Vec<LocalContextGraph> = Vec::new();
    if let Some(origin) = origin {
        if let Some((first, last)) = day_range(&streams, origin) {
            for day in first..=last {
                graphs.push(build_local_graph(&slice_day(&streams, day, origin), &table)?);
            }
        }
    }
    let samples: Vec<Value> = graphs
        .windows(args.span)
        .map(|w| json!({"anchor_day": w[w.len() - 1].day_index, "days": w.iter().map(|g| g.day_index).collect::<Vec<_>>()}))
        .collect();
    if samples.is_empty() {
        eprintln!("warning: no {}-day window in {}", args.span, args.log.display());
    }
    if streams.unlisted_locations > 0 {
        eprintln!(
            "warning: {} events mapped to other-location",
            streams.unlisted_locations
        );
    }
    let dump = json!({
        "day_origin": origin,
        "span": args.span,
        "graphs": graphs,
        "samples": samples,
    });
    write(&args.out.join("graphs.json"), &pretty(&dump))
}

fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {raw:?}")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

fn run_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut config = match &args.config.config {
        Some(p) => RunConfig::from_flat_json(&fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?)?,
        None => RunConfig::default(),
    };
    let mut flags: Vec<(String, Value)> = Vec::new();
    if let Some(s) = args.config.seed {
        flags.push(("train.seed".into(), json!(s)));
    }
    if let Some(v) = args.lambda {
        flags.push(("train.lambda".into(), json!(v)));
    }
    if let Some(v) = args.layers {
        flags.push(("model.layers".into(), json!(v)));
    }
    if let Some(v) = args.dp {
        flags.push(("model.rep_dim".into(), json!(v)));
    }
    if let Some(v) = args.splits {
        flags.push(("eval.splits".into(), json!(v)));
    }
    if let Some(v) = args.epochs {
        flags.push(("train.epochs".into(), json!(v)));
    }
    if args.linear_layers {
        flags.push(("model.nonlinear".into(), json!(false)));
    }
    if args.no_homogeneous {
        flags.push(("model.homogeneous".into(), json!(false)));
    }
    if args.no_heterogeneous {
        flags.push(("model.heterogeneous".into(), json!(false)));
    }
    for raw in &args.config.overrides {
        flags.push(parse_override(raw)?);
    }
    for (k, v) in flags {
        config.set(&k, v)?;
    }
    config.validate()?;
    Ok(config)
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let config = run_config(args)?;
    let data = Dataset::load(&args.data)?;
    let table = load_table(
        config.data.embeddings.as_deref().map(Path::new),
        &data.vocab,
        config.model.node_dim,
        config.data.embedding_seed,
    )?;
    if table.dim() != config.model.node_dim {
        return Err(Error::Validation(format!(
            "embedding file has dimension {}, model.node_dim is {}",
            table.dim(),
            config.model.node_dim
        )));
    }
    let samples = data.samples(config.data.span, &table)?;
    if samples.is_empty() {
        return Err(Error::InsufficientData("no labelled samples in the cohort".into()));
    }
    ensure_dir(&args.out)?;
    write(&args.out.join("config.json"), &(config.to_flat_json() + "\n"))?;

    let outcome = run_protocol::<f64>(&samples, &table, &config.model, &config.train, config.eval.splits)?;
    write(&args.out.join("metrics.csv"), &outcome.report.to_csv())?;
    write(&args.out.join("metrics.json"), &(outcome.report.to_json() + "\n"))?;
    let mut history = String::from("task,");
    for (i, h) in outcome.histories.iter().enumerate() {
        let csv = history_csv(h);
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            history.push_str(header);
            history.push('\n');
        }
        for line in lines {
            history.push_str(&format!("{i},{line}\n"));
        }
    }
    write(&args.out.join("history.csv"), &history)?;

    let model = Model::<f64>::new(config.model.clone(), table, config.train.seed)?;
    let prepared = model.prepare(&samples)?;
    let all: Vec<usize> = (0..prepared.len()).collect();
    let (fit, validation) = holdout(&all, config.train.validation_fraction, config.train.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| prepared[i].clone()).collect::<Vec<_>>();
    let final_run = train(model, &pick(&fit), &pick(&validation), &config.train)?;
    write(&args.out.join("final_history.csv"), &history_csv(&final_run.history))?;
    Checkpoint::new(&final_run.model, &config, &data.vocab).save(&args.out.join("checkpoint.json"))?;
    println!("{}", outcome.report.to_csv().lines().last().unwrap_or_default());
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let model = checkpoint.model::<f64>()?;
    let data = Dataset::load(&args.data)?;
    if data.vocab != checkpoint.vocabulary()? {
        return Err(Error::Validation(
            "cohort vocabulary differs from the checkpoint's".into(),
        ));
    }
    let samples = data.samples(checkpoint.config.data.span, &model.embeddings)?;
    let prepared = model.prepare(&samples)?;
    let seed = args.seed.unwrap_or(checkpoint.config.train.seed);
    let tasks = split_protocol(prepared.len(), args.splits, seed)?;
    let mut reports = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let test: Vec<_> = task.test.iter().map(|&j| prepared[j].clone()).collect();
        let (metrics, confusion) = evaluate(&model, &test)?;
        reports.push(TaskReport {
            task: i,
            samples: test.len(),
            metrics,
            confusion,
        });
    }
    let report = EvalReport::new(reports);
    ensure_dir(&args.out)?;
    write(&args.out.join("eval.csv"), &report.to_csv())?;
    write(&args.out.join("eval.json"), &(report.to_json() + "\n"))?;
    write(
        &args.out.join("config.json"),
        &(checkpoint.config.to_flat_json() + "\n"),
    )?;
    println!("{}", report.to_csv().lines().last().unwrap_or_default());
    Ok(())
}

fn synth_cmd(args: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::Io {
        path: args.spec.clone(),
        source: e,
    })?;
    let mut spec: ScenarioSpec =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("scenario spec: {e}")))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let generated = generate(&spec)?;
    ensure_dir(&args.out)?;
    generated.dataset.save(&args.out)?;
    write(&args.out.join("spec.json"), &pretty(&spec))?;
    println!(
        "{} subjects, {} days, {} labels",
        generated.dataset.subjects.len(),
        spec.days,
        generated.dataset.subjects.iter().map(|s| s.pam.len()).sum::<usize>()
    );
    Ok(())
}

fn inspect_cmd(args: &InspectArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let model = checkpoint.model::<f64>()?;
    let data = Dataset::load(&args.data)?;
    let samples = data.samples(checkpoint.config.data.span, &model.embeddings)?;
    let sample = samples.get(args.sample).ok_or_else(|| {
        Error::Usage(format!(
            "sample {} out of range for {} samples",
            args.sample,
            samples.len()
        ))
    })?;
    let prepared = model.prepare(std::slice::from_ref(sample))?;
    let export = model.attention(sample, &prepared[0])?;
    ensure_dir(&args.out)?;
    write(
        &args.out.join(format!("attention-{}.json", args.sample)),
        &pretty(&export),
    )
}

fn gradcheck_cmd(args: &GradcheckArgs) -> Result<bool> {
    let problem = toy_problem(args.seed)?;
    let report = model_gradient_check(&problem, args.eps, args.corrupt_gradient)?;
    for p in &report.params {
        println!("{:<32} {:.3e}", p.name, p.max_rel_error);
    }
    let pass = report.max_rel_error < args.tolerance;
    println!(
        "{} max relative error {:.3e} over {} coordinates (tolerance {:.0e})",
        if pass { "PASS" } else { "FAIL" },
        report.max_rel_error,
        report.coordinates_checked,
        args.tolerance
    );
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        write(&out.join("gradcheck.json"), &pretty(&report))?;
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::BuildGraph(a) => build_graph(a).map(|_| true),
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Eval(a) => eval_cmd(a).map(|_| true),
        Command::Synth(a) => synth_cmd(a).map(|_| true),
        Command::Inspect(a) => inspect_cmd(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
