//! Command-line trainer, predictor, and evaluator.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/format error,
//! 4 convergence cap hit (outputs are still written), 5 selfcheck failure.

use clap::{Args, Parser, Subcommand};
use perfsel::metrics::Measure;
use perfsel::model::TrainedModel;
use perfsel::selfcheck::{run_selfcheck, SelfCheckConfig};
use perfsel::trace::{InnerRecord, OuterRecord, TraceSink};
use perfsel::{
    train_binary, train_one_vs_rest, CapacityMode, Error, LossSpec, MulticlassDataset,
    TrainConfig,
};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

const EXIT_CONFIG: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_CONVERGENCE: i32 = 4;
const EXIT_SELFCHECK: i32 = 5;

const MANIFEST_HEADER: &str = "perfsel manifest 1";

#[derive(Parser)]
#[command(name = "perfsel", version, about = "Budgeted feature selection for multivariate performance measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (one per class and a manifest for multiclass data)
    Train(TrainArgs),
    /// Score examples with a trained model or manifest
    Predict(PredictArgs),
    /// Evaluate scores or a model against labeled data
    Eval(EvalArgs),
    /// Run the built-in exhaustive verification suites
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Loss to optimize: hamming|f1|fbeta|prec@k|rec@k|prbep
    #[arg(long)]
    loss: String,
    /// Beta for --loss fbeta
    #[arg(long)]
    beta: Option<f64>,
    /// k for --loss prec@k / rec@k
    #[arg(long)]
    k: Option<usize>,
    /// Feature budget per generated group
    #[arg(long = "B", default_value_t = 10)]
    budget: usize,
    /// Capacity as a multiple of the sample size (C = scale·n)
    #[arg(long = "C-scale", default_value_t = 0.1, conflicts_with = "c_absolute")]
    c_scale: f64,
    /// Capacity as an absolute value instead of C = scale·n
    #[arg(long = "C-absolute")]
    c_absolute: Option<f64>,
    /// Inner ε-optimality tolerance
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    #[arg(long, default_value_t = 200)]
    max_cuts: usize,
    /// Relative-improvement stop for the outer loop
    #[arg(long, default_value_t = 1e-4)]
    outer_tol: f64,
    /// Reserved for randomized tie shuffling (training is deterministic)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-feature max-|value| scaling before training
    #[arg(long)]
    scale_features: bool,
    /// Train a single binary model for this class vs the rest
    #[arg(long)]
    positive_class: Option<String>,
    /// Train one-vs-rest classes on parallel threads
    #[arg(long)]
    parallel_classes: bool,
    /// Write key=value trace records to this file ("-" for stderr)
    #[arg(long)]
    trace: Option<String>,
    /// Output model file (binary) or directory (multiclass)
    #[arg(long)]
    out: PathBuf,
    /// Training data in SVMlight/LibSVM text format
    data: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file or multiclass manifest
    #[arg(long)]
    model: PathBuf,
    /// Output: one score per line (binary) or one class token (multiclass)
    #[arg(long)]
    out: PathBuf,
    /// Test data in SVMlight/LibSVM text format (labels are ignored)
    data: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Score file produced by predict (binary evaluation)
    #[arg(long, conflicts_with = "model")]
    scores: Option<PathBuf>,
    /// Model file or manifest; scores are computed on the fly
    #[arg(long)]
    model: Option<PathBuf>,
    /// Labeled data in SVMlight/LibSVM text format
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated: f1,accuracy,prbep,rec@2p,prec@k,rec@k
    #[arg(long, value_delimiter = ',', required = true)]
    measures: Vec<String>,
    /// k for the prec@k / rec@k measures
    #[arg(long)]
    k: Option<usize>,
    /// Positive class for binary evaluation (default: larger token)
    #[arg(long)]
    positive_class: Option<String>,
    /// Emit the line-oriented machine format (measure<TAB>class<TAB>value)
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Largest sample size for the exhaustive label suite (clamped to 14)
    #[arg(long, default_value_t = 10)]
    max_n: usize,
    /// Random draws per configuration
    #[arg(long, default_value_t = 50)]
    draws: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Deliberately perturb the fast routes to exercise the failure path
    #[arg(long)]
    perturb: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    };
    std::process::exit(code);
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Qcqp(_) | Error::QcqpNotConverged { .. } => EXIT_CONVERGENCE,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> perfsel::Result<i32> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Selfcheck(args) => cmd_selfcheck(args),
    }
}

/// key=value trace records, line oriented.
struct KvTrace<W: Write> {
    out: W,
}

impl<W: Write> TraceSink for KvTrace<W> {
    fn inner(&mut self, r: &InnerRecord) {
        let _ = writeln!(
            self.out,
            "event=inner iter={} J={:.6e} J_K={:.6e} gap={:.6e} cuts={}",
            r.iteration, r.objective_upper, r.objective_lower, r.gap, r.cuts
        );
    }

    fn outer(&mut self, r: &OuterRecord) {
        let _ = writeln!(
            self.out,
            "event=outer t={} pool={} objective={:.6e} gap={:.6e} cuts={}",
            r.iteration, r.pool_size, r.objective, r.gap, r.cuts
        );
    }
}

fn make_trace(arg: &Option<String>) -> perfsel::Result<Box<dyn TraceSink>> {
    match arg.as_deref() {
        None => Ok(Box::new(perfsel::trace::NullTrace)),
        Some("-") => Ok(Box::new(KvTrace {
            out: std::io::stderr(),
        })),
        Some(path) => Ok(Box::new(KvTrace {
            out: BufWriter::new(File::create(path)?),
        })),
    }
}

fn load_dataset(path: &Path) -> perfsel::Result<MulticlassDataset> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    MulticlassDataset::parse_svmlight(BufReader::new(file))
}

fn cmd_train(args: TrainArgs) -> perfsel::Result<i32> {
    let loss = LossSpec::from_cli(&args.loss, args.beta, args.k)?;
    let capacity = match args.c_absolute {
        Some(c) => CapacityMode::Absolute(c),
        None => CapacityMode::Scale(args.c_scale),
    };
    let cfg = TrainConfig {
        loss,
        budget: args.budget,
        capacity,
        eps: args.eps,
        max_outer: args.max_outer,
        max_cuts: args.max_cuts,
        outer_tol: args.outer_tol,
        seed: args.seed,
        store_betas: false,
        excluded: Vec::new(),
    };
    cfg.validate()?;

    let mut ds = load_dataset(&args.data)?;
    if args.scale_features {
        ds = ds.scale_max_abs();
    }
    let mut trace = make_trace(&args.trace)?;

    let mut all_converged = true;
    if let Some(positive) = &args.positive_class {
        let view = ds.binarize(positive)?;
        view.check_trainable()?;
        let model = train_binary(&view, &cfg, trace.as_mut())?;
        all_converged = model.converged;
        save_model(&model, &args.out)?;
        eprintln!(
            "trained '{positive}' vs rest: {} nonzero weights, {} groups",
            model.nonzeros(),
            model.groups.len()
        );
    } else if ds.classes().len() <= 2 {
        let positive = ds.binary_positive_class()?.to_string();
        let view = ds.binarize(&positive)?;
        view.check_trainable()?;
        let model = train_binary(&view, &cfg, trace.as_mut())?;
        all_converged = model.converged;
        save_model(&model, &args.out)?;
        eprintln!(
            "trained binary model (positive class '{positive}'): {} nonzero weights, {} groups",
            model.nonzeros(),
            model.groups.len()
        );
    } else {
        let (models, warnings) =
            train_one_vs_rest(&ds, &cfg, args.parallel_classes, trace.as_mut())?;
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        fs::create_dir_all(&args.out)?;
        let mut manifest = String::from(MANIFEST_HEADER);
        manifest.push('\n');
        manifest.push_str(&format!("classes {}\n", models.len()));
        for (i, cm) in models.iter().enumerate() {
            let filename = format!("class_{i:03}_{}.model", sanitize(&cm.class));
            save_model(&cm.model, &args.out.join(&filename))?;
            manifest.push_str(&format!("{}\t{filename}\n", cm.class));
            all_converged &= cm.model.converged;
            eprintln!(
                "trained '{}': {} nonzero weights, {} groups",
                cm.class,
                cm.model.nonzeros(),
                cm.model.groups.len()
            );
        }
        fs::write(args.out.join("manifest"), manifest)?;
    }

    if all_converged {
        Ok(0)
    } else {
        eprintln!("warning: iteration cap reached before convergence; model written anyway");
        Ok(EXIT_CONVERGENCE)
    }
}

fn sanitize(token: &str) -> String {
    token
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn save_model(model: &TrainedModel, path: &Path) -> perfsel::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    model.save(&mut out)?;
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> perfsel::Result<TrainedModel> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    TrainedModel::load(BufReader::new(file))
}

/// (class token, model) pairs from a manifest, in manifest order.
fn load_manifest(path: &Path) -> perfsel::Result<Vec<(String, TrainedModel)>> {
    let text = fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line == MANIFEST_HEADER => {}
        _ => {
            return Err(Error::ModelFormat {
                line: 1,
                msg: format!("expected '{MANIFEST_HEADER}'"),
            })
        }
    }
    let (_, count_line) = lines.next().ok_or(Error::ModelFormat {
        line: 2,
        msg: "missing class count".into(),
    })?;
    let count: usize = count_line
        .strip_prefix("classes ")
        .and_then(|s| s.parse().ok())
        .ok_or(Error::ModelFormat {
            line: 2,
            msg: format!("expected 'classes <n>', got '{count_line}'"),
        })?;
    let mut models = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, line) = lines.next().ok_or(Error::ModelFormat {
            line: 0,
            msg: "manifest truncated".into(),
        })?;
        let (class, file) = line.split_once('\t').ok_or(Error::ModelFormat {
            line: i + 1,
            msg: "expected <class><TAB><file>".into(),
        })?;
        models.push((class.to_string(), load_model(&dir.join(file))?));
    }
    Ok(models)
}

fn is_manifest(path: &Path) -> perfsel::Result<bool> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    Ok(first.trim_end() == MANIFEST_HEADER)
}

fn warn_unseen_features(ds: &MulticlassDataset, n_features: u32) {
    if ds.n_features() > n_features {
        eprintln!(
            "warning: test data has feature indices up to {} but the model was trained on {}; extra features are ignored",
            ds.n_features(),
            n_features
        );
    }
}

fn cmd_predict(args: PredictArgs) -> perfsel::Result<i32> {
    let ds = load_dataset(&args.data)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    if is_manifest(&args.model)? {
        let models = load_manifest(&args.model)?;
        if models.is_empty() {
            return Err(Error::Data("manifest lists no classes".into()));
        }
        let max_features = models.iter().map(|(_, m)| m.n_features).max().unwrap();
        warn_unseen_features(&ds, max_features);
        for x in ds.examples() {
            // argmax over class scores, ties to the first manifest entry
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (i, (_, model)) in models.iter().enumerate() {
                let s = model.predict_score(x);
                if s > best_score {
                    best_score = s;
                    best = i;
                }
            }
            writeln!(out, "{}", models[best].0)?;
        }
    } else {
        let model = load_model(&args.model)?;
        warn_unseen_features(&ds, model.n_features);
        for x in ds.examples() {
            writeln!(out, "{:.16e}", model.predict_score(x))?;
        }
    }
    out.flush()?;
    Ok(0)
}

fn read_scores(path: &Path, expected: usize) -> perfsel::Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        scores.push(line.parse::<f64>().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("invalid score '{line}'"),
        })?);
    }
    if scores.len() != expected {
        return Err(Error::Data(format!(
            "{} scores for {expected} examples",
            scores.len()
        )));
    }
    Ok(scores)
}

fn cmd_eval(args: EvalArgs) -> perfsel::Result<i32> {
    let ds = load_dataset(&args.data)?;
    let measures: Vec<Measure> = args
        .measures
        .iter()
        .map(|name| Measure::from_cli(name, args.k))
        .collect::<perfsel::Result<_>>()?;

    // (class, scores, labels) rows to evaluate
    let mut rows: Vec<(String, Vec<f64>, Vec<i8>)> = Vec::new();
    if let Some(score_path) = &args.scores {
        let positive = match &args.positive_class {
            Some(c) => c.clone(),
            None => ds.binary_positive_class()?.to_string(),
        };
        let labels = ds.binarize(&positive)?.labels().to_vec();
        rows.push((positive, read_scores(score_path, ds.n())?, labels));
    } else if let Some(model_path) = &args.model {
        if is_manifest(model_path)? {
            for (class, model) in load_manifest(model_path)? {
                match ds.binarize(&class) {
                    Ok(view) => {
                        let scores =
                            ds.examples().iter().map(|x| model.predict_score(x)).collect();
                        rows.push((class, scores, view.labels().to_vec()));
                    }
                    Err(_) => {
                        eprintln!("warning: class '{class}' absent from evaluation data; skipped");
                    }
                }
            }
            if rows.is_empty() {
                return Err(Error::Data(
                    "no manifest class appears in the evaluation data".into(),
                ));
            }
        } else {
            let model = load_model(model_path)?;
            let positive = match &args.positive_class {
                Some(c) => c.clone(),
                None => ds.binary_positive_class()?.to_string(),
            };
            let labels = ds.binarize(&positive)?.labels().to_vec();
            let scores = ds.examples().iter().map(|x| model.predict_score(x)).collect();
            rows.push((positive, scores, labels));
        }
    } else {
        return Err(Error::Config("eval needs --scores or --model".into()));
    }

    let report = perfsel::EvalReport::build(&rows, &measures)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if args.tsv {
        print!("{}", report.to_tsv());
    } else {
        print!("{}", report.to_table());
    }
    Ok(0)
}

fn cmd_selfcheck(args: SelfcheckArgs) -> perfsel::Result<i32> {
    let cfg = SelfCheckConfig {
        max_n: args.max_n,
        draws: args.draws,
        seed: args.seed,
        perturb: args.perturb,
    };
    let results = run_selfcheck(&cfg)?;
    let mut all_pass = true;
    for r in &results {
        println!(
            "suite {:<32} cases={:<5} max_deviation={:.3e} tolerance={:.0e} {}",
            r.name,
            r.cases,
            r.max_deviation,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
        all_pass &= r.passed;
    }
    Ok(if all_pass { 0 } else { EXIT_SELFCHECK })
}
