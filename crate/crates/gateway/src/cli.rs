//! Command line front end. Each subcommand maps onto one library operation.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use scatgate::classify::{self, ClassifierSpec, Labeled, LogisticParams, Sample};
use scatgate::dataset::{
    self, read_probability_csv, write_probability_csv, FeatureSet, LabelRecord, LabelStore,
};
use scatgate::embed::{FeatureConfig, FeatureExtractor};
use scatgate::ensemble::{self, ClassifierColumn, Strategy, VoteConfig};
use scatgate::frame::{load_frame, save_frame};
use scatgate::metrics::{self, MetricConfig};
use scatgate::physics::{self, RealismConfig, RealismReport, DEFAULT_N_THETA};
use scatgate::pipeline::score_frame;
use scatgate::synth::{generate_corpus, CorpusConfig};
use scatgate::{BitDepth, Center, PatternClass, ProbabilityVector, ScatterFrame, Verdict};

use crate::config::ServiceConfig;
use crate::error::{GatewayError, Result};
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(
    name = "scatgate",
    version,
    about = "Realism gating for generated scattering frames"
)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth {
        /// Corpus config TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Realism scores for image files or directories, one JSON line each.
    Score {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write JSONL here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, value_parser = parse_pattern)]
        pattern: Option<PatternClass>,
    },
    /// Polar warp of one frame, written as a 16-bit PNG.
    Warp {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Center as `x,y`; found by grid search when omitted.
        #[arg(long, value_parser = parse_center)]
        center: Option<Center>,
        #[arg(long, default_value_t = DEFAULT_N_THETA)]
        n_theta: usize,
        /// Radial bins; defaults to half the shorter side.
        #[arg(long)]
        n_r: Option<usize>,
    },
    /// Grid-search beam center of one frame.
    Center {
        image: PathBuf,
        /// Search half-width in px; defaults to a quarter of the shorter side, at most 40.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 4)]
        step: usize,
    },
    /// Feature vectors for image files or directories, as CSV.
    Features {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Frames the normalization is fitted on; defaults to the inputs.
        #[arg(long)]
        reference: Vec<PathBuf>,
    },
    /// FID, KID and optionally IS between two feature CSVs.
    Metrics {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        /// `id,p_realistic,p_fake` CSV for the inception score.
        #[arg(long)]
        probs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        subset_size: Option<usize>,
        #[arg(long, default_value_t = 50)]
        subsets: usize,
        #[arg(long, default_value_t = 10)]
        splits: usize,
    },
    /// Train one classifier, or a loop round's whole panel with `--root`.
    Train(TrainArgs),
    /// Combine probability CSVs into ensemble decisions.
    Vote {
        #[arg(long = "probs", required = true)]
        probs: Vec<PathBuf>,
        #[arg(long, value_parser = parse_strategy, default_value = "soft-average")]
        strategy: Strategy,
        /// JSON array of weights, one per `--probs`, in order.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Decisions CSV (`id,verdict,p_realistic`); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Label JSONL to evaluate against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// EnsembleReport JSON, requires `--truth`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Seed round 1 of the labeling loop.
    LoopSeed(LoopArgs),
    /// Queue the most uncertain pool images of a trained round for review.
    LoopPropose {
        #[command(flatten)]
        common: LoopArgs,
        #[arg(long)]
        round: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record human verdicts for queued images from an `image_id,verdict` CSV.
    LoopReview {
        #[command(flatten)]
        common: LoopArgs,
        #[arg(long)]
        round: u32,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        annotator: String,
    },
    /// Close a round and assemble the next one.
    LoopBuild {
        #[command(flatten)]
        common: LoopArgs,
        #[arg(long)]
        round: u32,
        /// Multiplies the dataset's next-round targets.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Per-round metrics of the loop as JSON.
    Report {
        #[command(flatten)]
        common: LoopArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    /// Dataset directory holding `manifest.jsonl`.
    #[arg(long)]
    pub root: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierKind {
    Logistic,
    KNearest,
    PhysicsRule,
    External,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory; trains the panel of `--round`.
    #[arg(long, conflicts_with_all = ["features", "labels", "kind"])]
    pub root: Option<PathBuf>,
    #[arg(long, requires = "root")]
    pub round: Option<u32>,

    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Physics scores: JSONL as written by `score`.
    #[arg(long)]
    pub physics: Option<PathBuf>,
    /// Label JSONL; the latest human verdict per image is used.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<ClassifierKind>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Probability CSV ingested by the external kind.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Share of labeled rows held out for the validation report.
    #[arg(long, default_value_t = 0.2)]
    pub validation: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write predictions for every input row as a probability CSV.
    #[arg(long)]
    pub predict: Option<PathBuf>,
}

fn parse_pattern(s: &str) -> std::result::Result<PatternClass, String> {
    s.parse().map_err(|e: scatgate::Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: scatgate::Error| e.to_string())
}

fn parse_center(s: &str) -> std::result::Result<Center, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y: {e}"))?;
    Ok(Center::new(x, y))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => synth(config.as_deref(), &out, cli.seed.unwrap_or(0)),
        Command::Score {
            inputs,
            json,
            pattern,
        } => score(&inputs, json.as_deref(), pattern),
        Command::Warp {
            image,
            out,
            center,
            n_theta,
            n_r,
        } => warp(&image, &out, center, n_theta, n_r),
        Command::Center {
            image,
            window,
            step,
        } => center(&image, window, step),
        Command::Features {
            inputs,
            out,
            reference,
        } => features(&inputs, &out, &reference),
        Command::Metrics {
            real,
            generated,
            probs,
            out,
            subset_size,
            subsets,
            splits,
        } => {
            let config = MetricConfig {
                subset_size,
                n_subsets: subsets,
                n_splits: splits,
                seed: cli.seed.unwrap_or(0),
            };
            metrics_cmd(&real, &generated, probs.as_deref(), out.as_deref(), &config)
        }
        Command::Train(args) => train(&args, cli.seed),
        Command::Vote {
            probs,
            strategy,
            weights,
            threshold,
            out,
            truth,
            report,
        } => vote(
            &probs,
            strategy,
            weights.as_deref(),
            threshold,
            out.as_deref(),
            truth.as_deref(),
            report.as_deref(),
        ),
        Command::LoopSeed(a) => {
            let ws = open_workspace(&a.root, cli.seed)?;
            let mut lp = ws.open_loop()?;
            let round = lp.seed()?;
            emit_json(None, round)
        }
        Command::LoopPropose { common, round, out } => {
            let ws = open_workspace(&common.root, cli.seed)?;
            let mut lp = ws.open_loop()?;
            let samples = ws.samples()?;
            let queue = ws.propose(&mut lp, round, &samples, Utc::now())?;
            emit_json(out.as_deref(), &queue)
        }
        Command::LoopReview {
            common,
            round,
            decisions,
            annotator,
        } => {
            let ws = open_workspace(&common.root, cli.seed)?;
            let mut lp = ws.open_loop()?;
            let decisions = read_decisions(&decisions)?;
            lp.review(round, &decisions, &annotator, Utc::now())?;
            eprintln!("recorded {} verdicts for round {round}", decisions.len());
            Ok(())
        }
        Command::LoopBuild {
            common,
            round,
            scale,
        } => {
            let ws = open_workspace(&common.root, cli.seed)?;
            let mut lp = ws.open_loop()?;
            let base = ws.settings().next_targets;
            let targets = match scale {
                Some(f) => base
                    .scaled(f)
                    .map_err(|e| GatewayError::Usage(format!("--scale: {e}")))?,
                None => base,
            };
            let next = lp.build_next(round, &targets)?;
            emit_json(None, next)
        }
        Command::Report { common, out } => {
            let ws = open_workspace(&common.root, cli.seed)?;
            let lp = ws.open_loop()?;
            emit_json(out.as_deref(), &lp.report())
        }
        Command::Serve {
            config,
            listen,
            data_root,
        } => {
            let mut c = match config {
                Some(p) => ServiceConfig::read_toml(p)?,
                None => ServiceConfig::default(),
            };
            if let Some(l) = listen {
                c.listen = l;
            }
            if let Some(d) = data_root {
                c.data_root = d;
            }
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| GatewayError::Internal(e.to_string()))?;
            rt.block_on(crate::service::serve(c))
        }
    }
}

fn open_workspace(root: &Path, seed: Option<u64>) -> Result<Workspace> {
    let ws = Workspace::open(root)?;
    match seed {
        Some(s) => {
            let mut settings = ws.settings().clone();
            settings.config.seed = s;
            ws.with_settings(settings)
        }
        None => Ok(ws),
    }
}

fn emit_json<T: Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| GatewayError::Internal(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| GatewayError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

/// Image files named directly or found (non-recursively) in directories,
/// sorted by path.
pub fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in std::fs::read_dir(input).map_err(|e| GatewayError::io(input, e))? {
                let p = entry.map_err(|e| GatewayError::io(input, e))?.path();
                let ext = p
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(str::to_ascii_lowercase);
                if p.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                    out.push(p);
                }
            }
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(GatewayError::Usage(format!(
                "no such file or directory: {}",
                input.display()
            )));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(GatewayError::Usage("no images found in the inputs".into()));
    }
    Ok(out)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<ScatterFrame>> {
    paths
        .par_iter()
        .map(|p| load_frame(p).map_err(GatewayError::from))
        .collect()
}

fn synth(config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let config = match config {
        Some(p) => CorpusConfig::read_toml(p)?,
        None => CorpusConfig::default(),
    };
    let (manifest, _) = generate_corpus(&config, out, seed)?;
    eprintln!("wrote {} frames to {}", manifest.len(), out.display());
    Ok(())
}

fn score(inputs: &[PathBuf], json: Option<&Path>, pattern: Option<PatternClass>) -> Result<()> {
    let paths = collect_images(inputs)?;
    let base = RealismConfig::default();
    let reports = paths
        .par_iter()
        .map(|p| {
            let frame = load_frame(p)?;
            score_frame(&frame, pattern, &base)
        })
        .collect::<scatgate::Result<Vec<RealismReport>>>()?;
    let mut sink: Box<dyn Write> = match json {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| GatewayError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    let where_ = json
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    for r in &reports {
        let line = serde_json::to_string(r).map_err(|e| GatewayError::Internal(e.to_string()))?;
        writeln!(sink, "{line}").map_err(|e| GatewayError::io(&where_, e))?;
    }
    sink.flush().map_err(|e| GatewayError::io(&where_, e))
}

fn warp(
    image: &Path,
    out: &Path,
    center: Option<Center>,
    n_theta: usize,
    n_r: Option<usize>,
) -> Result<()> {
    let frame = load_frame(image)?;
    let c = match center {
        Some(c) => c,
        None => {
            let search = physics::CenterSearch::for_frame(&frame);
            physics::find_center(&frame, search.window, search.coarse_step)?.center
        }
    };
    let n_r = n_r.unwrap_or(frame.width().min(frame.height()) / 2);
    let polar = physics::warp_polar(&frame, c, n_theta, n_r)?;
    save_frame(&polar.to_frame()?, out, BitDepth::Sixteen)?;
    eprintln!("warped about ({:.2}, {:.2}) into {n_theta}x{n_r}", c.x, c.y);
    Ok(())
}

fn center(image: &Path, window: Option<usize>, step: usize) -> Result<()> {
    if step == 0 {
        return Err(GatewayError::Usage("--step must be positive".into()));
    }
    let frame = load_frame(image)?;
    let window = window.unwrap_or_else(|| physics::CenterSearch::for_frame(&frame).window);
    let fit = physics::find_center(&frame, window, step)?;
    emit_json(None, &fit)
}

fn features(inputs: &[PathBuf], out: &Path, reference: &[PathBuf]) -> Result<()> {
    let frames = load_all(&collect_images(inputs)?)?;
    let refs = if reference.is_empty() {
        None
    } else {
        Some(load_all(&collect_images(reference)?)?)
    };
    let fit_on: Vec<&ScatterFrame> = refs.as_ref().unwrap_or(&frames).iter().collect();
    let extractor = FeatureExtractor::fit(FeatureConfig::default(), &fit_on)?;
    let all: Vec<&ScatterFrame> = frames.iter().collect();
    extractor.extract_set(&all)?.write_csv(out)?;
    eprintln!("wrote {} feature rows to {}", frames.len(), out.display());
    Ok(())
}

fn metrics_cmd(
    real: &Path,
    generated: &Path,
    probs: Option<&Path>,
    out: Option<&Path>,
    config: &MetricConfig,
) -> Result<()> {
    let real = FeatureSet::read_csv(real)?;
    let generated = FeatureSet::read_csv(generated)?;
    let probs: Option<Vec<Vec<f64>>> = match probs {
        Some(p) => Some(
            read_probability_csv(p)?
                .into_iter()
                .map(|(_, v)| v.as_array().to_vec())
                .collect(),
        ),
        None => None,
    };
    let report = metrics::metric_report(
        &real.values(),
        &generated.values(),
        probs.as_deref(),
        &generated.extractor,
        config,
    )?;
    emit_json(out, &report)
}

/// Latest human verdict per image in a label JSONL.
fn read_verdicts(path: &Path) -> Result<HashMap<String, Verdict>> {
    let records: Vec<LabelRecord> = dataset::read_jsonl(path)?;
    let store = LabelStore::from_records(records)?;
    Ok(store
        .records()
        .iter()
        .filter_map(|r| {
            store
                .latest_human(&r.image_id)
                .map(|(_, l)| (r.image_id.clone(), l.verdict))
        })
        .collect())
}

fn train(args: &TrainArgs, seed: Option<u64>) -> Result<()> {
    if let Some(root) = &args.root {
        let round = args
            .round
            .ok_or_else(|| GatewayError::Usage("--round is required with --root".into()))?;
        let ws = open_workspace(root, seed)?;
        let mut lp = ws.open_loop()?;
        let state = lp
            .round(round)
            .cloned()
            .ok_or_else(|| GatewayError::NotFound(format!("round {round}")))?;
        let samples = ws.samples()?;
        let training = ws.train(&state, &samples)?;
        ws.commit_training(&mut lp, round, &training)?;
        return emit_json(args.out.as_deref(), &training.report);
    }
    let kind = args
        .kind
        .ok_or_else(|| GatewayError::Usage("--kind is required without --root".into()))?;
    let labels_path = args
        .labels
        .as_deref()
        .ok_or_else(|| GatewayError::Usage("--labels is required without --root".into()))?;
    let spec = match kind {
        ClassifierKind::Logistic => ClassifierSpec::Logistic(LogisticParams {
            learning_rate: args.learning_rate,
            batch_size: args.batch_size,
            epochs: args.epochs,
            l2: args.l2,
        }),
        ClassifierKind::KNearest => ClassifierSpec::KNearest { k: args.k },
        ClassifierKind::PhysicsRule => ClassifierSpec::PhysicsRule,
        ClassifierKind::External => ClassifierSpec::External {
            path: args.external.clone().ok_or_else(|| {
                GatewayError::Usage("--external is required for the external kind".into())
            })?,
        },
    };
    spec.validate()
        .map_err(|e| GatewayError::Usage(e.to_string()))?;
    let samples = cli_samples(args.features.as_deref(), args.physics.as_deref())?;
    let verdicts = read_verdicts(labels_path)?;
    let labeled: Vec<Labeled> = samples
        .iter()
        .filter_map(|s| {
            verdicts.get(&s.id).map(|v| Labeled {
                sample: s.clone(),
                verdict: *v,
            })
        })
        .collect();
    let seed = seed.unwrap_or(0);
    let (train_set, validation) = if args.validation > 0.0 {
        let v: Vec<Verdict> = labeled.iter().map(|l| l.verdict).collect();
        let (fit, hold) = classify::split_train_validation(&v, args.validation, seed)?;
        (
            fit.iter().map(|&i| labeled[i].clone()).collect::<Vec<_>>(),
            Some(hold.iter().map(|&i| labeled[i].clone()).collect::<Vec<_>>()),
        )
    } else {
        (labeled, None)
    };
    let name = kind
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let model = classify::train(
        name,
        &spec,
        &train_set,
        validation.as_deref(),
        seed,
        0,
        None,
    )?;
    if let Some(p) = &args.predict {
        let rows = samples
            .iter()
            .map(|s| Ok((s.id.clone(), model.predict_proba(s)?)))
            .collect::<scatgate::Result<Vec<(String, ProbabilityVector)>>>()?;
        write_probability_csv(p, &rows)?;
    }
    match &args.out {
        Some(p) => Ok(model.save_json(p)?),
        None => emit_json(None, &model),
    }
}

/// Samples from a feature CSV and/or a physics score JSONL, in first-seen order.
fn cli_samples(features: Option<&Path>, physics: Option<&Path>) -> Result<Vec<Sample>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Sample> = HashMap::new();
    if let Some(p) = features {
        for row in FeatureSet::read_csv(p)?.rows() {
            order.push(row.id.clone());
            by_id.insert(
                row.id.clone(),
                Sample {
                    id: row.id.clone(),
                    features: row.values.clone(),
                    physics: None,
                },
            );
        }
    }
    if let Some(p) = physics {
        let reports: Vec<RealismReport> = dataset::read_jsonl(p)?;
        for r in reports {
            let s = by_id.entry(r.id.clone()).or_insert_with(|| {
                order.push(r.id.clone());
                Sample {
                    id: r.id.clone(),
                    features: Vec::new(),
                    physics: None,
                }
            });
            s.physics = Some(r.composite);
        }
    }
    if order.is_empty() {
        return Err(GatewayError::Usage(
            "pass --features and/or --physics".into(),
        ));
    }
    Ok(order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("indexed"))
        .collect())
}

fn vote(
    probs: &[PathBuf],
    strategy: Strategy,
    weights: Option<&Path>,
    threshold: f64,
    out: Option<&Path>,
    truth: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    let tables = probs
        .iter()
        .map(read_probability_csv)
        .collect::<scatgate::Result<Vec<_>>>()?;
    let ids: Vec<String> = tables[0].iter().map(|(id, _)| id.clone()).collect();
    let mut columns = Vec::with_capacity(tables.len());
    for (path, table) in probs.iter().zip(&tables) {
        let index = dataset::probability_index(table);
        if index.len() != ids.len() {
            return Err(GatewayError::Usage(format!(
                "--probs {} has {} rows, expected {}",
                path.display(),
                index.len(),
                ids.len()
            )));
        }
        let probabilities = ids
            .iter()
            .map(|id| {
                index.get(id).copied().ok_or_else(|| {
                    GatewayError::Usage(format!("--probs {} has no row for {id}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        columns.push(ClassifierColumn {
            name: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            probabilities,
        });
    }
    let weights: Option<Vec<f64>> = match weights {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| GatewayError::io(p, e))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| GatewayError::Usage(format!("--weights: {e}")))?,
            )
        }
        None => None,
    };
    if strategy == Strategy::SoftWeighted && weights.is_none() {
        return Err(GatewayError::Usage(
            "--weights is required for soft-weighted voting".into(),
        ));
    }
    let config = VoteConfig {
        strategy,
        weights: if strategy == Strategy::SoftWeighted {
            weights.clone()
        } else {
            None
        },
        threshold,
        ..VoteConfig::new(strategy)
    };
    config
        .validate(columns.len())
        .map_err(|e| GatewayError::Usage(e.to_string()))?;
    let decisions = ensemble::decide_panel(&config, &columns)?;

    let mut csv = String::from("id,verdict,p_realistic\n");
    for (id, d) in ids.iter().zip(&decisions) {
        csv.push_str(&format!("{id},{},{}\n", d.verdict.as_str(), d.p_realistic));
    }
    match out {
        Some(p) => std::fs::write(p, csv).map_err(|e| GatewayError::io(p, e))?,
        None => print!("{csv}"),
    }

    if let Some(report_path) = report {
        let truth_path =
            truth.ok_or_else(|| GatewayError::Usage("--report requires --truth".into()))?;
        let verdicts = read_verdicts(truth_path)?;
        let keep: Vec<usize> = (0..ids.len())
            .filter(|&i| verdicts.contains_key(&ids[i]))
            .collect();
        let sub: Vec<ClassifierColumn> = columns
            .iter()
            .map(|c| ClassifierColumn {
                name: c.name.clone(),
                probabilities: keep.iter().map(|&i| c.probabilities[i]).collect(),
            })
            .collect();
        let truth_v: Vec<Verdict> = keep.iter().map(|&i| verdicts[&ids[i]]).collect();
        let mut strategies = vec![
            VoteConfig {
                threshold,
                ..VoteConfig::new(Strategy::Hard)
            },
            VoteConfig {
                threshold,
                ..VoteConfig::new(Strategy::SoftAverage)
            },
        ];
        if let Some(w) = weights {
            strategies.push(VoteConfig {
                threshold,
                ..VoteConfig::weighted(w)
            });
        }
        let r = ensemble::evaluate_grid(&sub, &strategies, &truth_v, threshold, 0)?;
        emit_json(Some(report_path), &r)?;
    }
    Ok(())
}

fn read_decisions(path: &Path) -> Result<Vec<(String, Verdict)>> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("image_id")) {
            continue;
        }
        let (id, verdict) = line.split_once(',').ok_or_else(|| {
            GatewayError::Usage(format!(
                "{}:{}: expected image_id,verdict",
                path.display(),
                i + 1
            ))
        })?;
        let verdict: Verdict = verdict
            .trim()
            .parse()
            .map_err(|e| GatewayError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((id.trim().to_string(), verdict));
    }
    Ok(out)
}
