//! Dataset loading, preprocessing and the training entry points shared by
//! the subcommands.

use std::path::Path;

use clap::ValueEnum;
use log::info;
use serde::{Deserialize, Serialize};

use crate::boost::{lpboost_train, BoostConfig, BoostOutput};
use crate::data::{load_mil_jsonl_classes, load_timeseries_csv};
use crate::data::{build_pool, make_bag_from_series_with, Bag, Instance, LabeledSample, WindowNorm};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::{BoostModel, FeatureScale, Preprocess};
use crate::reduce::{kmeans_reduce, ReductionSpec};
use crate::weak::LengthContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Timeseries,
    Mil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ScaleMode {
    #[default]
    None,
    /// Min-max scale every feature to `[0, 1]` using the training instances.
    Minmax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Series(Vec<Vec<f64>>),
    Bags(Vec<Bag>),
}

/// Raw records with integer class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Records,
    pub classes: Vec<i64>,
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>, task: Task) -> Result<Self> {
        Ok(match task {
            Task::Timeseries => {
                let d = load_timeseries_csv(path)?;
                Dataset {
                    records: Records::Series(d.series),
                    classes: d.classes,
                }
            }
            Task::Mil => {
                let d = load_mil_jsonl_classes(path)?;
                Dataset {
                    records: Records::Bags(d.bags),
                    classes: d.classes,
                }
            }
        })
    }

    pub fn from_series(series: Vec<Vec<f64>>, classes: Vec<i64>) -> Self {
        Dataset {
            records: Records::Series(series),
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Distinct class ids in increasing order.
    pub fn class_ids(&self) -> Vec<i64> {
        let mut c = self.classes.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Length of the shortest series, for resolving length fractions.
    pub fn min_series_length(&self) -> Option<usize> {
        match &self.records {
            Records::Series(s) => s.iter().map(Vec::len).min(),
            Records::Bags(_) => None,
        }
    }
}

/// Subsequence lengths as fractions of the series length or as absolute values.
#[derive(Debug, Clone, PartialEq)]
pub enum LengthSpec {
    Fractions(Vec<f64>),
    Absolute(Vec<usize>),
}

impl Default for LengthSpec {
    fn default() -> Self {
        LengthSpec::Fractions((1..=10).map(|i| i as f64 * 0.05).collect())
    }
}

impl LengthSpec {
    /// Comma-separated values; tokens containing a decimal point are
    /// fractions of the series length, integers are absolute lengths.
    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty length list".into()));
        }
        if tokens.iter().all(|t| !t.contains('.')) {
            let v = tokens
                .iter()
                .map(|t| t.parse::<usize>().map_err(|e| Error::InvalidInput(format!("length {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            return Ok(LengthSpec::Absolute(v));
        }
        let v = tokens
            .iter()
            .map(|t| match t.parse::<f64>() {
                Ok(f) if f > 0.0 && f <= 1.0 => Ok(f),
                _ => Err(Error::InvalidInput(format!("length fraction {t:?} must be in (0, 1]"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LengthSpec::Fractions(v))
    }

    /// Each fraction `f` becomes `max(2, ⌊f·L⌋)`; duplicates are removed.
    pub fn resolve(&self, series_length: usize) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = match self {
            LengthSpec::Fractions(f) => f
                .iter()
                .map(|&f| ((f * series_length as f64 + 1e-9).floor() as usize).max(2))
                .collect(),
            LengthSpec::Absolute(v) => v.clone(),
        };
        out.sort_unstable();
        out.dedup();
        if let Some(&bad) = out.iter().find(|&&l| l == 0 || l > series_length) {
            return Err(Error::InvalidLength {
                length: bad,
                reason: format!("series length is {series_length}"),
            });
        }
        Ok(out)
    }
}

/// Turns records into bags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prep {
    /// Window lengths for series; empty for MIL data.
    pub lengths: Vec<usize>,
    pub window_norm: WindowNorm,
    pub feature_scale: Option<FeatureScale>,
}

impl Prep {
    /// Resolves lengths and fits any scaling on `data`.
    pub fn fit(data: &Dataset, lengths: &LengthSpec, window_norm: WindowNorm, scale: ScaleMode) -> Result<Self> {
        match &data.records {
            Records::Series(_) => {
                let l = data
                    .min_series_length()
                    .ok_or_else(|| Error::InvalidInput("no series".into()))?;
                Ok(Prep {
                    lengths: lengths.resolve(l)?,
                    window_norm,
                    feature_scale: None,
                })
            }
            Records::Bags(bags) => {
                let feature_scale = match scale {
                    ScaleMode::None => None,
                    ScaleMode::Minmax => FeatureScale::fit_minmax(bags.iter().flat_map(|b| b.instances())),
                };
                Ok(Prep {
                    lengths: Vec::new(),
                    window_norm,
                    feature_scale,
                })
            }
        }
    }

    pub fn from_model(model: &BoostModel) -> Self {
        Prep {
            lengths: model.lengths.clone(),
            window_norm: model.preprocess.window_norm,
            feature_scale: model.preprocess.feature_scale.clone(),
        }
    }

    pub fn to_preprocess(&self) -> Preprocess {
        Preprocess {
            window_norm: self.window_norm,
            feature_scale: self.feature_scale.clone(),
        }
    }

    pub fn bags(&self, data: &Dataset) -> Result<Vec<Bag>> {
        match &data.records {
            Records::Series(series) => series
                .iter()
                .map(|s| make_bag_from_series_with(s, &self.lengths, self.window_norm))
                .collect(),
            Records::Bags(bags) => match &self.feature_scale {
                None => Ok(bags.clone()),
                Some(scale) => bags
                    .iter()
                    .map(|b| {
                        let inst = b
                            .instances()
                            .map(|x| Instance::new(scale.apply(x)?))
                            .collect::<Result<Vec<_>>>()?;
                        Bag::from_instances(inst)
                    })
                    .collect(),
            },
        }
    }
}

/// Everything needed to train one binary model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub kernel: KernelSpec,
    pub boost: BoostConfig,
    /// `k == 0` keeps the full pool.
    pub reduction: ReductionSpec,
    /// Independent trainings with shifted seeds; the best training accuracy wins.
    pub restarts: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            kernel: KernelSpec::Gaussian { sigma2: 1.0 },
            boost: BoostConfig::default(),
            reduction: ReductionSpec::default(),
            restarts: 1,
        }
    }
}

/// The pool of every length present in the sample, reduced per class.
pub fn build_pools(sample: &LabeledSample, reduction: &ReductionSpec) -> Result<Vec<crate::data::InstancePool>> {
    sample
        .lengths()
        .into_iter()
        .map(|l| {
            if reduction.k == 0 {
                build_pool(sample, l)
            } else {
                kmeans_reduce(sample, l, reduction)
            }
        })
        .collect()
}

pub fn build_contexts(sample: &LabeledSample, kernel: KernelSpec, reduction: &ReductionSpec) -> Result<Vec<LengthContext>> {
    build_pools(sample, reduction)?
        .into_iter()
        .map(|pool| LengthContext::build(sample, pool, kernel))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: BoostModel,
    pub output: BoostOutput,
    pub training_accuracy: f64,
}

/// Trains a binary model, keeping the best of `params.restarts` runs.
pub fn train_binary(sample: &LabeledSample, params: &TrainParams) -> Result<Trained> {
    let mut best: Option<Trained> = None;
    for r in 0..params.restarts.max(1) {
        let mut reduction = params.reduction.clone();
        reduction.seed = reduction.seed.wrapping_add(r as u64);
        let contexts = build_contexts(sample, params.kernel, &reduction)?;
        let output = lpboost_train(&contexts, sample.labels(), &params.boost)?;
        let mut model = BoostModel::from_boost(&output, &contexts, params.kernel, params.boost.nu)?;
        model.metadata.seed = reduction.seed;
        model.metadata.variant = params.boost.weak.variant;
        let training_accuracy = model.accuracy(sample)?;
        model.metadata.training_accuracy = Some(training_accuracy);
        info!(
            "restart {r}: {} columns, training accuracy {training_accuracy:.4}",
            output.columns.len()
        );
        if best.as_ref().is_none_or(|b| training_accuracy > b.training_accuracy) {
            best = Some(Trained {
                model,
                output,
                training_accuracy,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
