//! Command-line front end: `train`, `tune`, `predict`, `eval` and `explain`.

pub mod pipeline;
pub mod tune;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::boost::BoostConfig;
use crate::data::{binary_labels, one_vs_rest};
use crate::data::{Bag, Label, LabeledSample, WindowNorm};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::BoostModel;
use crate::reduce::ReductionSpec;
use crate::weak::{Variant, WeakLearnConfig};
use pipeline::{train_binary, Dataset, LengthSpec, Prep, ScaleMode, Task, TrainParams};
use tune::{cross_validate_grid, select_best, CvPlan};

const SL_NU_GRID: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
const MIL_NU_GRID: [f64; 5] = [0.5, 0.3, 0.2, 0.15, 0.1];
const SL_INV_SIGMA2_GRID: [f64; 8] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0];
const MIL_SIGMA2_GRID: [f64; 6] = [0.005, 0.01, 0.05, 0.1, 0.5, 1.0];

#[derive(Debug, Parser)]
#[command(name = "shapelet-mil", version, about = "Shapelet-based multiple-instance boosting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model (one-vs-rest directory when there are more than two classes).
    Train(TrainArgs),
    /// Grid-search ν and σ² by cross-validation, then train the winner.
    Tune(TuneArgs),
    /// Write `index,score,label` for every record.
    Predict(ApplyArgs),
    /// Accuracy and margin losses as JSON.
    Eval(EvalArgs),
    /// Per-term contributions as JSON lines.
    Explain(ApplyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV (label first, then the series) or MIL JSON lines.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Timeseries)]
    pub task: Task,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Comma list; values with a decimal point are fractions of the series length.
    #[arg(long)]
    pub lengths: Option<String>,
    #[arg(long, value_enum, default_value_t = KernelKind::Gaussian)]
    pub kernel: KernelKind,
    /// Gaussian bandwidth σ² (comma list for `tune`).
    #[arg(long, value_delimiter = ',', conflicts_with = "inv_sigma2")]
    pub sigma2: Vec<f64>,
    /// Alternatively give 1/σ² (comma list for `tune`).
    #[arg(long, value_delimiter = ',')]
    pub inv_sigma2: Vec<f64>,
    /// Soft-margin parameter ν (comma list for `tune`).
    #[arg(long, value_delimiter = ',')]
    pub nu: Vec<f64>,
    /// k-means clusters per class and length; 0 keeps every instance.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train this many times with shifted seeds and keep the best training accuracy.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value_t = Variant::Op2)]
    pub variant: Variant,
    #[arg(long)]
    pub try_negative: bool,
    /// Use only the one-hot initializer as weak learner.
    #[arg(long)]
    pub rough: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 50)]
    pub max_dc: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub delta_stop: f64,
    #[arg(long, default_value_t = 200)]
    pub max_columns: usize,
    /// z-normalize every window.
    #[arg(long)]
    pub znorm: bool,
    /// Feature scaling for MIL instances.
    #[arg(long, value_enum, default_value_t = ScaleMode::None)]
    pub scale: ScaleMode,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learn: LearnArgs,
    /// Output model file, or directory for multi-class data.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learn: LearnArgs,
    /// Folds per CV run (default 3 for series, 5 for MIL).
    #[arg(long)]
    pub folds: Option<usize>,
    /// CV repetitions (default 3 for series, 1 for MIL).
    #[arg(long)]
    pub cv_runs: Option<usize>,
    /// Score grid cells with the one-hot weak learner only.
    #[arg(long)]
    pub rough_tune: bool,
    /// Where to write the retrained model; omitted means grid search only.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Where to write every grid cell's score as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file or one-vs-rest directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub apply: ApplyArgs,
    /// Margins ρ at which to report the empirical margin loss.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub rho: Vec<f64>,
}

/// A binary model or a set of one-vs-rest models.
#[derive(Debug, Clone)]
pub enum Classifier {
    Binary(BoostModel),
    OneVsRest(Vec<(i64, BoostModel)>),
}

fn class_file(dir: &Path, class: i64) -> PathBuf {
    dir.join(format!("model_class_{class}.json"))
}

impl Classifier {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_dir() {
            return Ok(Classifier::Binary(BoostModel::load(path)?));
        }
        let mut members = Vec::new();
        for entry in fs::read_dir(path)? {
            let p = entry?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(id) = name.strip_prefix("model_class_").and_then(|r| r.strip_suffix(".json")) {
                let class = id
                    .parse::<i64>()
                    .map_err(|_| Error::Model(format!("bad member file name {name}")))?;
                members.push((class, BoostModel::load(&p)?));
            }
        }
        if members.is_empty() {
            return Err(Error::Model(format!("{} holds no model_class_*.json", path.display())));
        }
        members.sort_by_key(|m| m.0);
        let first = &members[0].1;
        if members
            .iter()
            .any(|(_, m)| m.lengths != first.lengths || m.preprocess != first.preprocess)
        {
            return Err(Error::Model("one-vs-rest members disagree on preprocessing".into()));
        }
        Ok(Classifier::OneVsRest(members))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Classifier::Binary(m) => m.save(path),
            Classifier::OneVsRest(members) => {
                fs::create_dir_all(path)?;
                members.iter().try_for_each(|(c, m)| m.save(class_file(path, *c)))
            }
        }
    }

    fn prep(&self) -> Prep {
        match self {
            Classifier::Binary(m) => Prep::from_model(m),
            Classifier::OneVsRest(members) => Prep::from_model(&members[0].1),
        }
    }

    /// Score and predicted class id. One-vs-rest takes the highest member score.
    pub fn classify(&self, bag: &Bag) -> Result<(f64, i64)> {
        match self {
            Classifier::Binary(m) => {
                let s = m.score(bag)?;
                Ok((s, binary_class(m, Label::from_sign(s))))
            }
            Classifier::OneVsRest(members) => {
                let mut best = (f64::NEG_INFINITY, members[0].0);
                for (c, m) in members {
                    let s = m.score(bag)?;
                    if s > best.0 {
                        best = (s, *c);
                    }
                }
                Ok(best)
            }
        }
    }

    pub fn accuracy(&self, bags: &[Bag], classes: &[i64]) -> Result<f64> {
        let mut correct = 0;
        for (bag, &c) in bags.iter().zip(classes) {
            if self.classify(bag)?.1 == c {
                correct += 1;
            }
        }
        Ok(correct as f64 / bags.len().max(1) as f64)
    }
}

fn binary_class(model: &BoostModel, label: Label) -> i64 {
    match label {
        Label::Positive => model.metadata.class.unwrap_or(1),
        Label::Negative => model.metadata.negative_class.unwrap_or(-1),
    }
}

/// ±1 labels matching how `model` was trained.
fn model_labels(model: &BoostModel, classes: &[i64]) -> Result<Vec<Label>> {
    match model.metadata.class {
        Some(c) => Ok(one_vs_rest(classes, c)),
        None => binary_labels(classes),
    }
}

fn window_norm(znorm: bool) -> WindowNorm {
    if znorm {
        WindowNorm::ZNorm
    } else {
        WindowNorm::None
    }
}

fn single(values: &[f64], flag: &str, default: f64) -> Result<f64> {
    match values {
        [] => Ok(default),
        [v] => Ok(*v),
        _ => Err(Error::InvalidInput(format!("--{flag} takes a single value here; use `tune` for grids"))),
    }
}

impl LearnArgs {
    fn length_spec(&self) -> Result<LengthSpec> {
        self.lengths.as_deref().map_or_else(|| Ok(LengthSpec::default()), LengthSpec::parse)
    }

    fn params(&self, kernel: KernelSpec, nu: f64) -> TrainParams {
        TrainParams {
            kernel,
            boost: BoostConfig {
                nu,
                delta_stop: self.delta_stop,
                max_columns: self.max_columns,
                weak: WeakLearnConfig {
                    variant: self.variant,
                    epsilon: self.epsilon,
                    max_iter: self.max_dc,
                    rough: self.rough,
                    try_negative: self.try_negative,
                },
            },
            reduction: ReductionSpec {
                k: self.k,
                seed: self.seed,
                ..ReductionSpec::default()
            },
            restarts: self.restarts,
        }
    }

    /// The single kernel requested for `train`.
    fn kernel(&self) -> Result<KernelSpec> {
        match self.kernel {
            KernelKind::Linear => Ok(KernelSpec::Linear),
            KernelKind::Gaussian => {
                let sigma2 = if self.inv_sigma2.is_empty() {
                    single(&self.sigma2, "sigma2", 1.0)?
                } else {
                    1.0 / single(&self.inv_sigma2, "inv-sigma2", 1.0)?
                };
                KernelSpec::gaussian(sigma2)
            }
        }
    }

    fn sigma2_grid(&self, task: Task) -> Vec<f64> {
        if !self.inv_sigma2.is_empty() {
            self.inv_sigma2.iter().map(|v| 1.0 / v).collect()
        } else if !self.sigma2.is_empty() {
            self.sigma2.clone()
        } else {
            match task {
                Task::Timeseries => SL_INV_SIGMA2_GRID.iter().map(|v| 1.0 / v).collect(),
                Task::Mil => MIL_SIGMA2_GRID.to_vec(),
            }
        }
    }

    fn nu_grid(&self, task: Task) -> Vec<f64> {
        if !self.nu.is_empty() {
            return self.nu.clone();
        }
        match task {
            Task::Timeseries => SL_NU_GRID.to_vec(),
            Task::Mil => MIL_NU_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
struct MemberSummary {
    class: i64,
    training_accuracy: f64,
    columns: usize,
    terms: usize,
    nonzeros: usize,
    gamma: f64,
}

/// Trains one model per binary problem defined by `data`'s classes.
fn train_classifier(data: &Dataset, bags: Vec<Bag>, prep: &Prep, params: &TrainParams) -> Result<(Classifier, Vec<MemberSummary>)> {
    let ids = data.class_ids();
    if ids.len() < 2 {
        return Err(Error::InvalidInput("training data holds a single class".into()));
    }
    let summary = |class: i64, t: &pipeline::Trained| MemberSummary {
        class,
        training_accuracy: t.training_accuracy,
        columns: t.output.columns.len(),
        terms: t.model.terms.len(),
        nonzeros: t.model.total_nonzeros(),
        gamma: t.output.gamma(),
    };
    if ids.len() == 2 {
        let labels = binary_labels(&data.classes)?;
        let positive = data.classes[labels.iter().position(|&l| l == Label::Positive).expect("two classes")];
        let negative = *ids.iter().find(|&&c| c != positive).expect("two classes");
        let sample = LabeledSample::new(bags, labels)?;
        let mut t = train_binary(&sample, params)?;
        t.model.preprocess = prep.to_preprocess();
        t.model.metadata.class = Some(positive);
        t.model.metadata.negative_class = Some(negative);
        let s = summary(positive, &t);
        return Ok((Classifier::Binary(t.model), vec![s]));
    }
    let mut members = Vec::new();
    let mut summaries = Vec::new();
    for &c in &ids {
        info!("one-vs-rest: class {c}");
        let sample = LabeledSample::new(bags.clone(), one_vs_rest(&data.classes, c))?;
        let mut t = train_binary(&sample, params)?;
        t.model.preprocess = prep.to_preprocess();
        t.model.metadata.class = Some(c);
        summaries.push(summary(c, &t));
        members.push((c, t.model));
    }
    Ok((Classifier::OneVsRest(members), summaries))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let start = Instant::now();
    let data = Dataset::load(&args.data.data, args.data.task)?;
    let prep = Prep::fit(&data, &args.learn.length_spec()?, window_norm(args.learn.znorm), args.learn.scale)?;
    let bags = prep.bags(&data)?;
    let kernel = args.learn.kernel()?;
    let params = args.learn.params(kernel, single(&args.learn.nu, "nu", 0.2)?);
    let (classifier, members) = train_classifier(&data, bags.clone(), &prep, &params)?;
    classifier.save(&args.model)?;
    let accuracy = classifier.accuracy(&bags, &data.classes)?;
    print_json(&json!({
        "model": args.model,
        "classes": data.class_ids(),
        "lengths": prep.lengths,
        "training_accuracy": accuracy,
        "members": members,
        "wall_time_secs": start.elapsed().as_secs_f64(),
    }))
}

fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let start = Instant::now();
    let task = args.data.task;
    let data = Dataset::load(&args.data.data, task)?;
    let prep = Prep::fit(&data, &args.learn.length_spec()?, window_norm(args.learn.znorm), args.learn.scale)?;
    let bags = prep.bags(&data)?;
    if args.learn.kernel == KernelKind::Linear {
        return Err(Error::InvalidInput("tune searches Gaussian bandwidths; use train for the linear kernel".into()));
    }
    let nus = args.learn.nu_grid(task);
    let sigma2s = args.learn.sigma2_grid(task);
    let plan = CvPlan {
        runs: args.cv_runs.unwrap_or(match task {
            Task::Timeseries => 3,
            Task::Mil => 1,
        }),
        folds: args.folds.unwrap_or(match task {
            Task::Timeseries => 3,
            Task::Mil => 5,
        }),
        seed: args.learn.seed,
    };
    let ids = data.class_ids();
    if ids.len() < 2 {
        return Err(Error::InvalidInput("training data holds a single class".into()));
    }
    // one binary problem, or one per class for one-vs-rest
    let problems: Vec<(Option<i64>, Vec<Label>)> = if ids.len() == 2 {
        vec![(None, binary_labels(&data.classes)?)]
    } else {
        ids.iter().map(|&c| (Some(c), one_vs_rest(&data.classes, c))).collect()
    };
    let mut grids = Vec::new();
    let mut winners = Vec::new();
    for (class, labels) in &problems {
        let sample = LabeledSample::new(bags.clone(), labels.clone())?;
        let mut template = args.learn.params(KernelSpec::Linear, nus[0]);
        template.boost.weak.rough = args.rough_tune || args.learn.rough;
        let cells = cross_validate_grid(&sample, &nus, &sigma2s, &template, &plan)?;
        let best = select_best(&cells)
            .ok_or_else(|| Error::InvalidInput("no grid cell could be evaluated".into()))?
            .clone();
        info!("class {class:?}: best nu {} sigma2 {} (cv accuracy {:.4})", best.nu, best.sigma2, best.mean_accuracy);
        grids.push(json!({ "class": class, "cells": cells }));
        winners.push((*class, best));
    }
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&grids).map_err(|e| Error::InvalidInput(e.to_string()))?;
        fs::write(out, text)?;
    }

    let mut trained = serde_json::Value::Null;
    if let Some(path) = &args.model {
        let mut members = Vec::new();
        let mut summaries = Vec::new();
        for ((class, labels), (_, best)) in problems.iter().zip(&winners) {
            let sample = LabeledSample::new(bags.clone(), labels.clone())?;
            let mut params = args.learn.params(KernelSpec::gaussian(best.sigma2)?, best.nu);
            params.boost.weak.rough = args.learn.rough;
            let mut t = train_binary(&sample, &params)?;
            t.model.preprocess = prep.to_preprocess();
            match class {
                Some(c) => t.model.metadata.class = Some(*c),
                None => {
                    let positive = data.classes[labels.iter().position(|&l| l == Label::Positive).expect("two classes")];
                    t.model.metadata.class = Some(positive);
                    t.model.metadata.negative_class = ids.iter().copied().find(|&c| c != positive);
                }
            }
            summaries.push(json!({
                "class": t.model.metadata.class,
                "training_accuracy": t.training_accuracy,
                "columns": t.output.columns.len(),
                "nonzeros": t.model.total_nonzeros(),
            }));
            members.push((t.model.metadata.class.expect("set above"), t.model));
        }
        let classifier = if members.len() == 1 {
            Classifier::Binary(members.pop().expect("one member").1)
        } else {
            Classifier::OneVsRest(members)
        };
        classifier.save(path)?;
        trained = json!({
            "model": path,
            "training_accuracy": classifier.accuracy(&bags, &data.classes)?,
            "members": summaries,
        });
    }
    print_json(&json!({
        "best": winners.iter().map(|(c, b)| json!({
            "class": c, "nu": b.nu, "sigma2": b.sigma2, "cv_accuracy": b.mean_accuracy
        })).collect::<Vec<_>>(),
        "grid": { "nu": nus, "sigma2": sigma2s, "folds": plan.folds, "runs": plan.runs },
        "trained": trained,
        "wall_time_secs": start.elapsed().as_secs_f64(),
    }))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_for_apply(args: &ApplyArgs) -> Result<(Classifier, Dataset, Vec<Bag>)> {
    let classifier = Classifier::load(&args.model)?;
    let data = Dataset::load(&args.data.data, args.data.task)?;
    let bags = classifier.prep().bags(&data)?;
    Ok((classifier, data, bags))
}

fn cmd_predict(args: &ApplyArgs) -> Result<()> {
    let (classifier, _, bags) = load_for_apply(args)?;
    let mut out = open_out(args.out.as_deref())?;
    writeln!(out, "index,score,label")?;
    for (i, bag) in bags.iter().enumerate() {
        let (score, label) = classifier.classify(bag)?;
        writeln!(out, "{i},{score},{label}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (classifier, data, bags) = load_for_apply(&args.apply)?;
    let accuracy = classifier.accuracy(&bags, &data.classes)?;
    let margin = |model: &BoostModel| -> Result<Vec<serde_json::Value>> {
        let sample = LabeledSample::new(bags.clone(), model_labels(model, &data.classes)?)?;
        args.rho
            .iter()
            .map(|&rho| Ok(json!({ "rho": rho, "loss": model.margin_loss(&sample, rho)? })))
            .collect()
    };
    let report = match &classifier {
        Classifier::Binary(m) => json!({
            "n": bags.len(),
            "accuracy": accuracy,
            "margin_loss": margin(m)?,
        }),
        Classifier::OneVsRest(members) => json!({
            "n": bags.len(),
            "accuracy": accuracy,
            "members": members
                .iter()
                .map(|(c, m)| Ok(json!({ "class": c, "margin_loss": margin(m)? })))
                .collect::<Result<Vec<_>>>()?,
        }),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut out = open_out(args.apply.out.as_deref())?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn cmd_explain(args: &ApplyArgs) -> Result<()> {
    let (classifier, _, bags) = load_for_apply(args)?;
    let mut out = open_out(args.out.as_deref())?;
    for (i, bag) in bags.iter().enumerate() {
        let (_, class) = classifier.classify(bag)?;
        let (model, member) = match &classifier {
            Classifier::Binary(m) => (m, None),
            Classifier::OneVsRest(members) => {
                let m = &members.iter().find(|(c, _)| *c == class).expect("predicted member").1;
                (m, Some(class))
            }
        };
        let e = model.explain(bag)?;
        let mut record = json!({
            "bag_index": i,
            "score": e.score,
            "label": class,
            "terms": e.terms,
        });
        if let Some(c) = member {
            record["class"] = json!(c);
        }
        writeln!(out, "{record}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Explain(a) => cmd_explain(a),
    }
}
