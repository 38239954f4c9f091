//! Cross-validated grid search over `(ν, σ²)`.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::pipeline::{build_pools, TrainParams};
use crate::boost::{lpboost_train, BoostConfig};
use crate::data::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::kernel::{gaussian_from_sq_dist, pool_sq_dists, CrossRows, GramMatrix, KernelSpec};
use crate::weak::{hypothesis_value, LengthContext};

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub runs: usize,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub nu: f64,
    pub sigma2: f64,
    pub mean_accuracy: f64,
    pub folds_used: usize,
}

/// Validation index sets of a stratified `folds`-fold split.
pub fn stratified_folds(labels: &[Label], folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for class in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for (k, i) in idx.into_iter().enumerate() {
            out[(k + offset) % folds].push(i);
        }
        // continue the round robin so fold sizes stay balanced
        offset = (offset + labels.iter().filter(|&&l| l == class).count()) % folds;
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Mean validation accuracy of every grid cell. Cells are indexed
/// `[nu][sigma2]` in the order given.
pub fn cross_validate_grid(
    sample: &LabeledSample,
    nus: &[f64],
    sigma2s: &[f64],
    template: &TrainParams,
    plan: &CvPlan,
) -> Result<Vec<CellResult>> {
    if nus.is_empty() || sigma2s.is_empty() {
        return Err(Error::InvalidInput("empty tuning grid".into()));
    }
    if plan.folds < 2 {
        return Err(Error::InvalidInput("at least two folds are needed".into()));
    }
    let mut sums = vec![0.0; nus.len() * sigma2s.len()];
    let mut counts = vec![0usize; nus.len() * sigma2s.len()];
    for run in 0..plan.runs.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(run as u64);
        let folds = stratified_folds(sample.labels(), plan.folds, &mut rng);
        for (f, val_idx) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = (0..sample.len()).filter(|i| val_idx.binary_search(i).is_err()).collect();
            let train = sample.subset(&train_idx)?;
            let val = sample.subset(val_idx)?;
            if !train.has_both_classes() || val.is_empty() {
                warn!("run {run} fold {f}: training part lacks a class; skipped");
                continue;
            }
            let pools = build_pools(&train, &template.reduction)?;
            let pool_d2: Vec<Vec<f64>> = pools.iter().map(pool_sq_dists).collect();
            let train_d2: Vec<CrossRows> = pools.iter().map(|p| CrossRows::sq_dists(p, train.bags())).collect();
            let val_d2: Vec<CrossRows> = pools.iter().map(|p| CrossRows::sq_dists(p, val.bags())).collect();
            // σ² cells build their own contexts and run in parallel; the ν
            // cells of one σ² share warm starts and run in order
            let scored: Vec<Vec<(usize, f64)>> = sigma2s
                .par_iter()
                .enumerate()
                .map(|(s, &sigma2)| -> Result<Vec<(usize, f64)>> {
                    KernelSpec::gaussian(sigma2)?;
                    let mut contexts = Vec::with_capacity(pools.len());
                    let mut val_cross = Vec::with_capacity(pools.len());
                    for (k, pool) in pools.iter().enumerate() {
                        let len = pool.length();
                        let gram = GramMatrix::gaussian_from_sq_dists(sigma2, len, pool.len(), &pool_d2[k]);
                        let cross = train_d2[k].map(|d| gaussian_from_sq_dist(d, len, sigma2));
                        contexts.push(LengthContext::new(pool.clone(), gram, cross, train.labels())?);
                        val_cross.push(val_d2[k].map(|d| gaussian_from_sq_dist(d, len, sigma2)));
                    }
                    let mut out = Vec::with_capacity(nus.len());
                    for (n, &nu) in nus.iter().enumerate() {
                        let cfg = BoostConfig {
                            nu,
                            ..template.boost.clone()
                        };
                        if cfg.validate(train.len()).is_err() {
                            warn!("nu {nu} is infeasible for {} training bags; cell skipped", train.len());
                            continue;
                        }
                        let acc = match lpboost_train(&contexts, train.labels(), &cfg) {
                            Ok(trained) => {
                                let mut correct = 0;
                                for i in 0..val.len() {
                                    let score: f64 = trained
                                        .primal
                                        .weights
                                        .iter()
                                        .zip(&trained.columns)
                                        .map(|(w, c)| {
                                            w * hypothesis_value(&c.shapelet.alpha, val_cross[c.context].bag_rows(i))
                                                .expect("validation bags share the lengths")
                                                .0
                                        })
                                        .sum();
                                    if Label::from_sign(score) == val.label(i) {
                                        correct += 1;
                                    }
                                }
                                correct as f64 / val.len() as f64
                            }
                            Err(e) => {
                                warn!("nu {nu}, sigma2 {sigma2}: training failed ({e}); scored as 0");
                                0.0
                            }
                        };
                        out.push((n * sigma2s.len() + s, acc));
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            for (cell, acc) in scored.into_iter().flatten() {
                sums[cell] += acc;
                counts[cell] += 1;
            }
            info!("run {run} fold {f} done");
        }
    }
    let mut out = Vec::with_capacity(sums.len());
    for (n, &nu) in nus.iter().enumerate() {
        for (s, &sigma2) in sigma2s.iter().enumerate() {
            let cell = n * sigma2s.len() + s;
            out.push(CellResult {
                nu,
                sigma2,
                mean_accuracy: if counts[cell] > 0 {
                    sums[cell] / counts[cell] as f64
                } else {
                    f64::NAN
                },
                folds_used: counts[cell],
            });
        }
    }
    Ok(out)
}

/// Highest mean accuracy; ties go to the smaller ν, then the larger σ².
pub fn select_best(cells: &[CellResult]) -> Option<&CellResult> {
    cells
        .iter()
        .filter(|c| c.mean_accuracy.is_finite())
        .reduce(|best, c| {
            let better = c.mean_accuracy > best.mean_accuracy
                || (c.mean_accuracy == best.mean_accuracy
                    && (c.nu < best.nu || (c.nu == best.nu && c.sigma2 > best.sigma2)));
            if better {
                c
            } else {
                best
            }
        })
}
