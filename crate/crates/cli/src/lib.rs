//! Command-line front end: `prepare`, `train`, `eval`, `infer`, `exec` and
//! `analyze`.
//!
//! Exit codes: 0 on success, 1 on user error (bad flags, unreadable or
//! malformed input), 2 on internal error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use tpn2f::analysis::{self, cluster_relations, collect_relation_vectors, emit_report, extract_assignments};
use tpn2f::config::{ConfigError, TrainConfig};
use tpn2f::data::{
    build_vocabularies, load_dataset, normalize_constant, preprocess_program, write_dataset, DataError, DatasetKind,
    RewriteTable, Sample,
};
use tpn2f::lang::{
    evaluate_metrics, exec_algolisp, exec_mathqa, flatten_program_tree, parse_call_sequence,
    parse_tuple_sequence, ExecSuite, IoTest, LispValue, Prediction, ProgramEnv, RelationalTuple,
};
use tpn2f::parallel::Parallelism;
use tpn2f::train::{TrainError, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

/// File the effective configuration is echoed to inside an output directory.
pub const CONFIG_ECHO: &str = "config.cfg";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

fn internal(msg: impl Into<String>) -> CliError {
    CliError::Internal(msg.into())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        user(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        user(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io(_)
            | TrainError::CorruptCheckpoint(_)
            | TrainError::Version { .. }
            | TrainError::VocabMismatch(_)
            | TrainError::EmptyDataset
            | TrainError::Data(_) => user(e.to_string()),
            other => internal(other.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        match e {
            analysis::AnalysisError::Model(_) | analysis::AnalysisError::Train(_) => internal(e.to_string()),
            other => user(other.to_string()),
        }
    }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    internal(format!("cannot write `{}`: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "tpn2f", version, about = "Natural-language to program synthesis with tensor product representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalise dataset files and write them with the vocabulary.
    Prepare(PrepareArgs),
    /// Train a model; writes checkpoints, a JSON-lines log and the effective config.
    Train(TrainArgs),
    /// Score predictions against gold programs.
    Eval(EvalArgs),
    /// Decode programs for every record of a dataset file.
    Infer(InferArgs),
    /// Run one program.
    Exec(ExecArgs),
    /// Role/filler assignments and relation clusters of a trained model.
    Analyze(AnalyzeArgs),
}

/// Flags that override config-file values.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// `key = value` or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset kind; also picks the preset when no config file is given.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// tpr or lstm.
    #[arg(long)]
    encoder: Option<String>,
    /// tpr or lstm.
    #[arg(long)]
    decoder: Option<String>,
    /// sum_tprs or last_state.
    #[arg(long)]
    pooling: Option<String>,
    /// Argument slots per tuple.
    #[arg(long)]
    positions: Option<usize>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match (&self.config, &self.dataset) {
            (Some(path), _) => TrainConfig::load(path)?,
            (None, Some(kind)) => TrainConfig::preset(kind)?,
            (None, None) => TrainConfig::mathqa(),
        };
        let flags: [(&str, Option<String>); 9] = [
            ("dataset", self.dataset.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("encoder", self.encoder.clone()),
            ("decoder", self.decoder.clone()),
            ("pooling", self.pooling.clone()),
            ("positions", self.positions.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| user(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long, default_value = "mathqa")]
    dataset: String,
    /// Dataset files; the vocabulary is built from the first. Repeatable.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Argument slots per tuple (default: the dataset preset's).
    #[arg(long)]
    positions: Option<usize>,
    /// JSON table of ternary-operator rewrites.
    #[arg(long)]
    rewrite_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training data (JSON-lines or JSON array).
    #[arg(long)]
    train: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Run without the rayon pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction JSON-lines (`id`, `program`).
    #[arg(long)]
    pred: PathBuf,
    /// Gold JSON-lines; dataset records or `id`/`program` records.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value = "mathqa")]
    dataset: String,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Prediction JSON-lines to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args, Debug)]
struct ExecArgs {
    #[arg(long, default_value = "mathqa")]
    dataset: String,
    /// Program text: tuples, call form, or an s-expression for algolisp.
    #[arg(long, conflicts_with = "program_file")]
    program: Option<String>,
    #[arg(long)]
    program_file: Option<PathBuf>,
    /// Comma-separated question numbers n0, n1, … (mathqa).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    numbers: Vec<f64>,
    /// JSON object of input bindings (algolisp).
    #[arg(long, conflicts_with = "env_file")]
    env: Option<String>,
    #[arg(long)]
    env_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of relation clusters.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// k-means seed (default: the checkpoint's training seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Records whose role/filler assignments are reported.
    #[arg(long, default_value_t = 20)]
    limit: usize,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("TPN2F_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (without the program name) and runs the command.
pub fn dispatch<S: AsRef<str>>(argv: &[S]) -> i32 {
    init_logging();
    let args = std::iter::once("tpn2f").chain(argv.iter().map(AsRef::as_ref));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Prepare(a) => prepare(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Infer(a) => infer(&a),
        Command::Exec(a) => exec(&a),
        Command::Analyze(a) => analyze(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dataset_kind(s: &str) -> Result<DatasetKind> {
    s.parse().map_err(user)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| write_err(path, e))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| write_err(path, e))
}

fn preprocess(samples: &mut [Sample], positions: usize, table: &RewriteTable) -> Result<()> {
    for s in samples {
        s.program = preprocess_program(&s.program, positions, table)
            .map_err(|e| user(format!("record `{}`: {e}", s.id)))?;
    }
    Ok(())
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let kind = dataset_kind(&a.dataset)?;
    let mut cfg = TrainConfig::preset(&a.dataset)?;
    if let Some(p) = a.positions {
        cfg.set("positions", &p.to_string())?;
    }
    let table = match &a.rewrite_table {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| user(format!("cannot read `{}`: {e}", path.display())))?;
            RewriteTable::from_json(&text).map_err(|e| user(format!("rewrite table: {e}")))?
        }
        None => RewriteTable::mathqa_default(),
    };
    create_dir(&a.out)?;
    let mut vocab = None;
    for input in &a.input {
        let mut samples = load_dataset(input, kind)?;
        preprocess(&mut samples, cfg.positions, &table)?;
        if vocab.is_none() {
            vocab = Some(build_vocabularies(&samples)?);
        }
        let name = input.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
        let path = a.out.join(format!("{name}.jsonl"));
        write_dataset(&path, &samples).map_err(|e| write_err(&path, e))?;
        println!("{}: {} records", path.display(), samples.len());
    }
    if let Some(v) = vocab {
        write_json(&a.out.join("vocab.json"), &v)?;
    }
    std::fs::write(a.out.join(CONFIG_ECHO), cfg.to_kv()).map_err(|e| write_err(&a.out, e))?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let mut samples = load_dataset(&a.train, cfg.dataset)?;
    preprocess(&mut samples, cfg.positions, &RewriteTable::mathqa_default())?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let mut t = Trainer::load(path)?;
            if t.config.dataset != cfg.dataset || t.config.positions != cfg.positions {
                return Err(user("resume checkpoint was trained with a different dataset kind or tuple width"));
            }
            // only the schedule may change on resume
            t.config.epochs = cfg.epochs;
            t.config.patience = cfg.patience;
            t
        }
        None => Trainer::new(cfg, build_vocabularies(&samples)?)?,
    };
    if a.sequential {
        trainer.parallelism = Parallelism::Sequential;
    }
    let data = trainer.encode(&samples)?;
    create_dir(&a.out)?;
    let echo = a.out.join(CONFIG_ECHO);
    std::fs::write(&echo, trainer.config.to_kv()).map_err(|e| write_err(&echo, e))?;
    let log_path = a.out.join(TRAIN_LOG);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| write_err(&log_path, e))?);
    let ckpt = a.out.join(CHECKPOINT_FILE);
    let history = trainer.fit(&data, |t, stats| {
        serde_json::to_writer(&mut log, stats).map_err(|e| TrainError::Io(e.into()))?;
        writeln!(log)?;
        log.flush()?;
        t.save(&ckpt)?;
        Ok(true)
    });
    let history = history.map_err(|e| match e {
        TrainError::Io(e) => internal(format!("writing training output: {e}")),
        other => CliError::from(other),
    })?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs: loss {:.6}, op_acc {:.4}; checkpoint {}",
            last.epoch,
            last.mean_loss,
            last.op_acc,
            ckpt.display()
        );
    } else {
        println!("nothing to do: checkpoint already has {} epochs", trainer.epoch);
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| user(format!("cannot read `{}`: {e}", path.display())))
}

fn parse_program_text(text: &str, kind: DatasetKind) -> Result<Vec<RelationalTuple>> {
    let text = text.trim();
    let parsed = match kind {
        DatasetKind::MathQa if text.starts_with('(') => parse_tuple_sequence(text),
        DatasetKind::MathQa => parse_call_sequence(text),
        // tuples always contain commas; s-expressions never do
        DatasetKind::AlgoLisp if text.contains(',') => parse_tuple_sequence(text),
        DatasetKind::AlgoLisp => flatten_program_tree(text),
    };
    let mut program = parsed.map_err(|e| user(format!("program: {e}")))?;
    if kind == DatasetKind::MathQa {
        for t in &mut program {
            for a in &mut t.args {
                *a = normalize_constant(a);
            }
        }
    }
    Ok(program)
}

/// `id`, `program` and, when present, what to execute it against.
struct ProgramRecord {
    id: String,
    program: Vec<RelationalTuple>,
    suite: ExecSuite,
}

fn program_records(path: &Path, kind: DatasetKind) -> Result<Vec<ProgramRecord>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let at = |msg: String| user(format!("{}:{}: {msg}", path.display(), i + 1));
        let v: Value = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        if v.get("text").is_some() {
            // a full dataset record
            let s = tpn2f::data::parse_dataset(line, kind).map_err(|e| at(e.to_string()))?.remove(0);
            let id = v.get("id").map_or_else(|| (i + 1).to_string(), |_| s.id.clone());
            out.push(ProgramRecord {
                id,
                suite: s.exec_suite(kind),
                program: s.program,
            });
            continue;
        }
        let program = match v.get("program") {
            Some(Value::String(s)) => parse_program_text(s, kind)?,
            Some(p @ Value::Array(_)) => serde_json::from_value(p.clone()).map_err(|e| at(e.to_string()))?,
            _ => return Err(at("missing `program`".into())),
        };
        let id = match v.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => (i + 1).to_string(),
        };
        let suite = match kind {
            DatasetKind::MathQa => match v.get("numbers") {
                Some(n) => ExecSuite::MathQa {
                    numbers: serde_json::from_value(n.clone()).map_err(|e| at(e.to_string()))?,
                    options: None,
                    correct: None,
                },
                None => ExecSuite::None,
            },
            DatasetKind::AlgoLisp => match v.get("tests") {
                Some(t) => ExecSuite::AlgoLisp {
                    tests: serde_json::from_value::<Vec<IoTest>>(t.clone()).map_err(|e| at(e.to_string()))?,
                },
                None => ExecSuite::None,
            },
        };
        out.push(ProgramRecord { id, program, suite });
    }
    Ok(out)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let kind = dataset_kind(&a.dataset)?;
    let preds = program_records(&a.pred, kind)?;
    let golds = program_records(&a.gold, kind)?;
    let by_id: BTreeMap<&str, &ProgramRecord> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut pred_programs = Vec::with_capacity(golds.len());
    for g in &golds {
        match by_id.get(g.id.as_str()) {
            Some(p) => pred_programs.push(p.program.clone()),
            None => return Err(user(format!("no prediction for gold record `{}`", g.id))),
        }
    }
    let gold_programs: Vec<Vec<RelationalTuple>> = golds.iter().map(|g| g.program.clone()).collect();
    let suites: Vec<ExecSuite> = golds.iter().map(|g| g.suite.clone()).collect();
    let report = evaluate_metrics(&pred_programs, &gold_programs, &suites, Parallelism::Parallel.available())
        .map_err(|e| internal(e.to_string()))?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| internal(e.to_string()))?;
    println!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, text + "\n").map_err(|e| write_err(out, e))?;
    }
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    let trainer = Trainer::load(&a.checkpoint)?;
    let samples = load_dataset(&a.input, trainer.config.dataset)?;
    let max_len = a.max_len.unwrap_or(trainer.config.max_decode_len);
    let mut out = BufWriter::new(File::create(&a.out).map_err(|e| write_err(&a.out, e))?);
    for s in &samples {
        let program = tpn2f::train::decode_program(&trainer.model, &trainer.vocab, &s.text, max_len)
            .map_err(|e| internal(e.to_string()))?;
        let p = Prediction {
            id: s.id.clone(),
            program,
        };
        serde_json::to_writer(&mut out, &p).map_err(|e| write_err(&a.out, e))?;
        writeln!(out).map_err(|e| write_err(&a.out, e))?;
    }
    out.flush().map_err(|e| write_err(&a.out, e))?;
    println!("{} predictions written to {}", samples.len(), a.out.display());
    Ok(())
}

fn exec(a: &ExecArgs) -> Result<()> {
    let kind = dataset_kind(&a.dataset)?;
    let text = match (&a.program, &a.program_file) {
        (Some(p), _) => p.clone(),
        (None, Some(path)) => read_text(path)?,
        (None, None) => return Err(user("exec needs --program or --program-file")),
    };
    let program = parse_program_text(&text, kind)?;
    match kind {
        DatasetKind::MathQa => {
            let value = exec_mathqa(&program, &ProgramEnv::new(a.numbers.clone()))
                .map_err(|e| user(format!("execution failed: {e}")))?;
            println!("{value}");
        }
        DatasetKind::AlgoLisp => {
            let env_text = match (&a.env, &a.env_file) {
                (Some(e), _) => e.clone(),
                (None, Some(path)) => read_text(path)?,
                (None, None) => "{}".to_string(),
            };
            let env: BTreeMap<String, Value> =
                serde_json::from_str(&env_text).map_err(|e| user(format!("--env must be a JSON object: {e}")))?;
            let bindings = env
                .into_iter()
                .map(|(k, v)| LispValue::from_json(&v).map(|v| (k, v)))
                .collect::<std::result::Result<BTreeMap<_, _>, _>>()
                .map_err(|e| user(format!("--env: {e}")))?;
            let value = exec_algolisp(&program, &bindings).map_err(|e| user(format!("execution failed: {e}")))?;
            match value.to_json() {
                Some(v) => println!("{v}"),
                None => println!("{value:?}"),
            }
        }
    }
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let trainer = Trainer::load(&a.checkpoint)?;
    if !trainer.model.has_dictionaries() || trainer.model.positional_unbinding().is_none() {
        return Err(user("analyze needs a model with a TPR encoder and a TPR decoder"));
    }
    let samples = load_dataset(&a.input, trainer.config.dataset)?;
    if samples.is_empty() {
        return Err(user(format!("`{}` has no records", a.input.display())));
    }
    let mut assignments = Vec::new();
    for s in samples.iter().take(a.limit) {
        assignments.extend(extract_assignments(&trainer.model, &trainer.vocab, &s.text)?);
    }
    let inputs: Vec<Vec<usize>> = samples.iter().map(|s| trainer.vocab.encode_tokens(&s.text)).collect();
    let stats = collect_relation_vectors(
        &trainer.model,
        &trainer.vocab,
        &inputs,
        trainer.config.max_decode_len,
        Parallelism::Parallel.available(),
    )?;
    let seed = a.seed.unwrap_or(trainer.config.seed);
    let k = a.k.min(stats.len());
    if stats.len() < 2 {
        return Err(user(format!(
            "the model emitted {} distinct relation(s); clustering needs at least 2",
            stats.len()
        )));
    }
    let (clusters, pca) = cluster_relations(&stats, k.max(1), seed)?;
    let files = emit_report(&assignments, &clusters, seed, &a.out)?;
    write_json(
        &a.out.join("relation_vectors.json"),
        &json!({
            "relations": stats,
            "explained_variance_ratio": pca.explained_variance_ratio,
        }),
    )?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tpn2f::lang::format_program;

    #[test]
    fn flags_override_config_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "preset = algolisp\nepochs = 7\nseed = 3\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            epochs: Some(2),
            set: vec!["grad_clip=5".into()],
            ..ConfigArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.grad_clip, Some(5.0));
        assert_eq!(cfg.d_role, TrainConfig::algolisp().d_role);
    }

    #[test]
    fn dataset_flag_selects_preset() {
        let args = ConfigArgs {
            dataset: Some("algolisp".into()),
            ..ConfigArgs::default()
        };
        assert_eq!(args.resolve().unwrap(), TrainConfig::algolisp());
        assert_eq!(ConfigArgs::default().resolve().unwrap(), TrainConfig::mathqa());
    }

    #[test]
    fn bad_set_is_a_user_error() {
        let args = ConfigArgs {
            set: vec!["epochs".into()],
            ..ConfigArgs::default()
        };
        assert!(matches!(args.resolve(), Err(CliError::User(_))));
        let args = ConfigArgs {
            set: vec!["nonsense=1".into()],
            ..ConfigArgs::default()
        };
        assert!(matches!(args.resolve(), Err(CliError::User(m)) if m.contains("nonsense")));
    }

    #[test]
    fn program_text_forms() {
        let p = parse_program_text("add(n0,n1), divide(#0,const_100)", DatasetKind::MathQa).unwrap();
        assert_eq!(format_program(&p), "(add,n0,n1) (divide,#0,const100)");
        let p = parse_program_text("(map a (partial1 b --))", DatasetKind::AlgoLisp).unwrap();
        assert_eq!(format_program(&p), "(partial1,b,--) (map,a,#0)");
    }

    #[test]
    fn unknown_command_exits_one() {
        assert_eq!(dispatch(&["frobnicate"]), EXIT_USER);
        assert_eq!(dispatch(&["exec", "--bogus"]), EXIT_USER);
        assert_eq!(dispatch(&["--help"]), EXIT_OK);
    }
}
