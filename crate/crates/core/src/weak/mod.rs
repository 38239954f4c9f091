//! Weak learner: finds the shapelet `u = Σ_z α_z Φ(z)` maximizing the
//! weighted edge `Σ_i d_i y_i max_{x∈B_i} ⟨u, Φ(x)⟩` over a norm ball.
//!
//! The objective is a difference of convex functions. Each DC step fixes the
//! maximizing instance of every positive bag and solves the remaining convex
//! problem, either over `‖α‖₁ ≤ 1` as a linear program ([`Variant::Op2`]) or
//! over `αᵀGα ≤ 1` ([`Variant::Op1`]).

mod op1;
mod op2;

use std::sync::{Mutex, OnceLock};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InstancePool, Label, LabeledSample};
use crate::error::{Error, Result};
use crate::kernel::{CrossRows, GramFactor, GramMatrix, KernelSpec};

pub use op1::solve_linearized_op1;
pub use op2::solve_linearized_op2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `αᵀ G α ≤ 1`, the RKHS norm ball.
    Op1,
    /// `‖α‖₁ ≤ 1`, which favours sparse shapelets.
    #[default]
    Op2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLearnConfig {
    pub variant: Variant,
    /// DC loop stops once an iteration improves the objective by at most this.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Return the one-hot initializer without running the DC loop.
    pub rough: bool,
    /// Also consider `−e_z` when choosing the one-hot initializer. Rough
    /// mode always does, since nonnegative columns alone cannot vote for the
    /// negative class.
    pub try_negative: bool,
}

impl Default for WeakLearnConfig {
    fn default() -> Self {
        WeakLearnConfig {
            variant: Variant::Op2,
            epsilon: 1e-4,
            max_iter: 50,
            rough: false,
            try_negative: false,
        }
    }
}

impl WeakLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Coefficients over the pool of one subsequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct Shapelet {
    pub length: usize,
    pub alpha: Vec<f64>,
}

impl Shapelet {
    pub fn zero(length: usize, pool_size: usize) -> Self {
        Shapelet {
            length,
            alpha: vec![0.0; pool_size],
        }
    }

    pub fn nonzeros(&self) -> usize {
        self.alpha.iter().filter(|&&a| a != 0.0).count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum()
    }
}

/// Boosting weights over the bags of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    d: Vec<f64>,
}

impl WeightedSample {
    /// Checks `0 ≤ d_i ≤ cap` and `Σ d_i = 1`.
    pub fn new(d: Vec<f64>, cap: f64) -> Result<Self> {
        let sum: f64 = d.iter().sum();
        if d.iter().any(|&v| !(v >= -1e-12 && v <= cap + 1e-12)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "bag weights must lie in [0, {cap}] and sum to 1 (sum {sum})"
            )));
        }
        Ok(WeightedSample { d })
    }

    pub fn uniform(m: usize) -> Self {
        WeightedSample {
            d: vec![1.0 / m as f64; m],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.d
    }
}

/// `max_x k_xᵀα` over the given cross rows and the first index attaining it.
pub fn hypothesis_value<'a>(
    alpha: &[f64],
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<(f64, usize)> {
    let support: Vec<(usize, f64)> = alpha
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, a)| a != 0.0)
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (j, k) in rows.into_iter().enumerate() {
        let v: f64 = support.iter().map(|&(z, a)| k[z] * a).sum();
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, j));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("bag has no instances of the shapelet length".into()))
}

/// `Σ_i y_i d_i h(B_i)` from per-bag hypothesis values.
pub fn edge(values: &[f64], labels: &[Label], d: &[f64]) -> f64 {
    values
        .iter()
        .zip(labels)
        .zip(d)
        .map(|((v, y), d)| y.sign() * d * v)
        .sum()
}

/// Everything the weak learner needs for one subsequence length: the pool,
/// its Gram matrix, cross rows for the training bags, and solver caches.
#[derive(Debug)]
pub struct LengthContext {
    pool: InstancePool,
    gram: GramMatrix,
    cross: CrossRows,
    labels: Vec<Label>,
    /// `max_{x∈B_i} K(z, x)`, row-major bags × pool.
    bag_max: Vec<f64>,
    bag_min: OnceLock<Vec<f64>>,
    factor: OnceLock<GramFactor>,
    op1_cache: OnceLock<op1::Projected>,
    op1_warm: Mutex<Option<Vec<f64>>>,
    op2_state: Mutex<Option<op2::State>>,
}

impl LengthContext {
    pub fn new(pool: InstancePool, gram: GramMatrix, cross: CrossRows, labels: &[Label]) -> Result<Self> {
        let p = pool.len();
        if gram.size() != p || cross.pool_size() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: gram.size(),
            });
        }
        if cross.bag_count() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: cross.bag_count(),
            });
        }
        if let Some(i) = (0..labels.len()).find(|&i| cross.instance_count(i) == 0) {
            return Err(Error::InvalidInput(format!(
                "bag {i} has no instances of length {}",
                pool.length()
            )));
        }
        let bag_max = column_extremes(&cross, f64::max);
        Ok(LengthContext {
            pool,
            gram,
            cross,
            labels: labels.to_vec(),
            bag_max,
            bag_min: OnceLock::new(),
            factor: OnceLock::new(),
            op1_cache: OnceLock::new(),
            op1_warm: Mutex::new(None),
            op2_state: Mutex::new(None),
        })
    }

    /// Builds the Gram matrix and cross rows for `sample` directly.
    pub fn build(sample: &LabeledSample, pool: InstancePool, spec: KernelSpec) -> Result<Self> {
        let gram = GramMatrix::build(spec, &pool);
        let cross = CrossRows::build(spec, &pool, sample.bags());
        Self::new(pool, gram, cross, sample.labels())
    }

    pub fn length(&self) -> usize {
        self.pool.length()
    }

    pub fn pool(&self) -> &InstancePool {
        &self.pool
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn cross(&self) -> &CrossRows {
        &self.cross
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn bag_count(&self) -> usize {
        self.labels.len()
    }

    pub fn factor(&self) -> &GramFactor {
        self.factor.get_or_init(|| self.gram.factor())
    }

    fn bag_min(&self) -> &[f64] {
        self.bag_min.get_or_init(|| column_extremes(&self.cross, f64::min))
    }

    /// `h(B_i)` and its maximizer for every training bag.
    pub fn values(&self, alpha: &[f64]) -> Vec<(f64, usize)> {
        (0..self.bag_count())
            .map(|i| hypothesis_value(alpha, self.cross.bag_rows(i)).expect("bags checked nonempty"))
            .collect()
    }

    /// The DC objective `−Σ_i d_i y_i h(B_i)`.
    pub fn objective(&self, alpha: &[f64], d: &[f64]) -> f64 {
        let values: Vec<f64> = self.values(alpha).into_iter().map(|v| v.0).collect();
        -edge(&values, &self.labels, d)
    }

    /// Linearized objective `−cᵀα + Σ_{r: y=−1} d_r max_{x∈B_r} k_xᵀα`.
    pub fn linearized_objective(&self, alpha: &[f64], c: &[f64], d: &[f64]) -> f64 {
        let lin: f64 = c.iter().zip(alpha).map(|(c, a)| c * a).sum();
        let neg: f64 = (0..self.bag_count())
            .filter(|&i| self.labels[i] == Label::Negative && d[i] != 0.0)
            .map(|i| d[i] * hypothesis_value(alpha, self.cross.bag_rows(i)).expect("nonempty").0)
            .sum();
        neg - lin
    }

    /// `c = Σ_{k: y=+1} d_k k_{x*_k}` for the maximizers of `alpha`.
    pub fn linear_term(&self, alpha: &[f64], d: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.pool.len()];
        for i in 0..self.bag_count() {
            if self.labels[i] != Label::Positive || d[i] == 0.0 {
                continue;
            }
            let (_, j) = hypothesis_value(alpha, self.cross.bag_rows(i)).expect("nonempty");
            for (ci, k) in c.iter_mut().zip(self.cross.row(i, j)) {
                *ci += d[i] * k;
            }
        }
        c
    }
}

fn column_extremes(cross: &CrossRows, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    let p = cross.pool_size();
    let mut out = Vec::with_capacity(cross.bag_count() * p);
    for i in 0..cross.bag_count() {
        let mut rows = cross.bag_rows(i);
        let mut acc = rows.next().map(<[f64]>::to_vec).unwrap_or_default();
        for row in rows {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a = pick(*a, v);
            }
        }
        out.extend(acc);
    }
    out
}

/// The one-hot vector `±e_z` (scaled into the ball if needed) maximizing the
/// edge, found by enumerating the pool. Ties go to the lowest index and to
/// `+e_z` over `−e_z`.
pub fn init_one_hot(ctx: &LengthContext, d: &[f64], config: &WeakLearnConfig) -> (Shapelet, f64) {
    let p = ctx.pool.len();
    let m = ctx.bag_count();
    let scale = |z: usize| match config.variant {
        Variant::Op1 => ctx.gram.get(z, z).sqrt().max(1.0),
        Variant::Op2 => 1.0,
    };
    let scores = |table: &[f64], sign: f64| -> Vec<f64> {
        let mut s = vec![0.0; p];
        for i in 0..m {
            let w = d[i] * ctx.labels[i].sign() * sign;
            if w == 0.0 {
                continue;
            }
            for (sz, v) in s.iter_mut().zip(&table[i * p..(i + 1) * p]) {
                *sz += w * v;
            }
        }
        s
    };
    let pos = scores(&ctx.bag_max, 1.0);
    let mut best = (f64::NEG_INFINITY, 0usize, 1.0);
    for (z, &v) in pos.iter().enumerate() {
        let v = v / scale(z);
        if v > best.0 {
            best = (v, z, 1.0);
        }
    }
    if config.try_negative || config.rough {
        // max_x (−k_x)_z = −min_x k_{x,z}
        let neg = scores(ctx.bag_min(), -1.0);
        for (z, &v) in neg.iter().enumerate() {
            let v = v / scale(z);
            if v > best.0 {
                best = (v, z, -1.0);
            }
        }
    }
    let (value, z, sign) = best;
    let mut sh = Shapelet::zero(ctx.length(), p);
    sh.alpha[z] = sign / scale(z);
    (sh, -value)
}

#[derive(Debug, Clone)]
pub struct DcOutcome {
    pub shapelet: Shapelet,
    /// Final subproblem objective; an upper bound on the true objective.
    pub objective: f64,
    /// `f_0, f_1, …` with `f_0` the initializer's objective.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn solve_linearized(
    ctx: &LengthContext,
    c: &[f64],
    d: &[f64],
    variant: Variant,
) -> Result<(Vec<f64>, f64)> {
    match variant {
        Variant::Op1 => solve_linearized_op1(ctx, c, d),
        Variant::Op2 => solve_linearized_op2(ctx, c, d),
    }
}

/// Runs the DC algorithm on one length from the one-hot initializer.
pub fn dc_weak_learn(ctx: &LengthContext, d: &[f64], config: &WeakLearnConfig) -> Result<DcOutcome> {
    let (init, f0) = init_one_hot(ctx, d, config);
    let mut alpha = init.alpha;
    let mut trace = vec![f0];
    if config.rough {
        return Ok(DcOutcome {
            shapelet: Shapelet {
                length: ctx.length(),
                alpha,
            },
            objective: f0,
            trace,
            converged: true,
        });
    }
    let mut converged = false;
    let mut stopped = false;
    for t in 1..=config.max_iter {
        let prev = *trace.last().expect("trace starts nonempty");
        let c = ctx.linear_term(&alpha, d);
        let (candidate, f_candidate) = match solve_linearized(ctx, &c, d, config.variant) {
            Ok(step) => step,
            Err(e @ Error::Solver(_)) => {
                // the current point stays valid, so keep it
                warn!("length {}: DC loop stopped at step {t}: {e}", ctx.length());
                stopped = true;
                break;
            }
            Err(e) => {
                return Err(Error::WeakLearner {
                    length: ctx.length(),
                    iteration: t,
                    source: Box::new(e),
                })
            }
        };
        // the current point is feasible for this subproblem, so never step uphill
        let f_current = ctx.linearized_objective(&alpha, &c, d);
        let f_t = if f_candidate <= f_current {
            alpha = candidate;
            f_candidate
        } else {
            f_current
        };
        let f_t = f_t.min(prev);
        trace.push(f_t);
        if prev - f_t <= config.epsilon {
            converged = true;
            break;
        }
    }
    if !converged && !stopped {
        warn!(
            "DC loop for length {} hit the {}-iteration cap",
            ctx.length(),
            config.max_iter
        );
    }
    let objective = *trace.last().expect("nonempty");
    debug!("length {}: DC objective {objective:.6} after {} steps", ctx.length(), trace.len() - 1);
    Ok(DcOutcome {
        shapelet: Shapelet {
            length: ctx.length(),
            alpha,
        },
        objective,
        trace,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct WeakResult {
    /// Index into the context list of the winning length.
    pub context: usize,
    pub shapelet: Shapelet,
    /// Per-bag hypothesis values of the winner.
    pub values: Vec<f64>,
    pub edge: f64,
    pub outcome: DcOutcome,
}

/// Runs [`dc_weak_learn`] for every length and keeps the shapelet with the
/// largest edge. Ties go to the smaller length. Lengths whose solver fails are
/// skipped with a warning.
pub fn best_over_lengths(
    contexts: &[LengthContext],
    d: &[f64],
    config: &WeakLearnConfig,
) -> Result<WeakResult> {
    if contexts.is_empty() {
        return Err(Error::InvalidInput("no subsequence lengths to search".into()));
    }
    let results: Vec<Result<WeakResult>> = contexts
        .par_iter()
        .enumerate()
        .map(|(k, ctx)| {
            let outcome = dc_weak_learn(ctx, d, config)?;
            let values: Vec<f64> = ctx.values(&outcome.shapelet.alpha).into_iter().map(|v| v.0).collect();
            let e = edge(&values, ctx.labels(), d);
            Ok(WeakResult {
                context: k,
                shapelet: outcome.shapelet.clone(),
                values,
                edge: e,
                outcome,
            })
        })
        .collect();
    let mut best: Option<WeakResult> = None;
    let mut failures = 0;
    let mut last_error = String::new();
    for r in results {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        r.edge > b.edge
                            || (r.edge == b.edge && contexts[r.context].length() < contexts[b.context].length())
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                warn!("weak learner skipped a length: {e}");
                failures += 1;
                last_error = e.to_string();
            }
        }
    }
    best.ok_or(Error::AllLengthsFailed(failures, last_error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_pool, Bag, Instance};

    fn bag(points: &[&[f64]]) -> Bag {
        Bag::from_instances(points.iter().map(|p| Instance::new(p.to_vec()).unwrap()).collect()).unwrap()
    }

    fn ctx_for(sample: &LabeledSample, spec: KernelSpec) -> LengthContext {
        let len = sample.lengths()[0];
        let pool = build_pool(sample, len).unwrap();
        LengthContext::build(sample, pool, spec).unwrap()
    }

    #[test]
    fn hypothesis_value_cases() {
        let rows: Vec<&[f64]> = vec![&[1.0, 0.0], &[0.0, 1.0]];
        assert_eq!(hypothesis_value(&[1.0, 0.0], rows.clone()).unwrap(), (1.0, 0));
        assert_eq!(hypothesis_value(&[0.0, 0.0], rows.clone()).unwrap(), (0.0, 0));
        assert_eq!(hypothesis_value(&[0.0, 2.0], rows).unwrap(), (2.0, 1));
        assert!(hypothesis_value(&[1.0], Vec::<&[f64]>::new()).is_err());
    }

    #[test]
    fn gaussian_self_similarity() {
        let s = LabeledSample::new(vec![bag(&[&[0.0], &[3.0]])], vec![Label::Positive]).unwrap();
        let ctx = ctx_for(&s, KernelSpec::gaussian(1.0).unwrap());
        let v = ctx.values(&[1.0, 0.0]);
        assert_eq!(v[0], (1.0, 0));
    }

    #[test]
    fn edge_arithmetic() {
        let labels = [Label::Positive, Label::Negative];
        assert!((edge(&[0.6, 0.2], &labels, &[0.5, 0.5]) - 0.2).abs() < 1e-15);
        assert_eq!(edge(&[0.0, 0.0], &labels, &[0.5, 0.5]), 0.0);
        assert_eq!(edge(&[1.0, -1.0], &labels, &[0.5, 0.5]), 1.0);
    }

    #[test]
    fn one_hot_picks_positive_instance() {
        let s = LabeledSample::new(
            vec![bag(&[&[1.0, 0.0]]), bag(&[&[0.0, 1.0]])],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        let ctx = ctx_for(&s, KernelSpec::Linear);
        let (sh, f) = init_one_hot(&ctx, &[0.5, 0.5], &WeakLearnConfig::default());
        assert_eq!(sh.alpha, vec![1.0, 0.0]);
        assert!((f + 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_hot_single_pool_and_negative_flag() {
        let s = LabeledSample::new(vec![bag(&[&[2.0]]), bag(&[&[2.0]])], vec![Label::Negative, Label::Negative])
            .unwrap();
        let ctx = ctx_for(&s, KernelSpec::Linear);
        let (sh, f) = init_one_hot(&ctx, &[0.5, 0.5], &WeakLearnConfig::default());
        assert_eq!(sh.alpha, vec![1.0]);
        assert!((f - 4.0).abs() < 1e-12);
        let cfg = WeakLearnConfig {
            try_negative: true,
            ..Default::default()
        };
        let (sh, f) = init_one_hot(&ctx, &[0.5, 0.5], &cfg);
        assert_eq!(sh.alpha, vec![-1.0]);
        assert!((f + 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_scaled_into_ellipsoid() {
        let s = LabeledSample::new(vec![bag(&[&[2.0]])], vec![Label::Positive]).unwrap();
        let ctx = ctx_for(&s, KernelSpec::Linear);
        let cfg = WeakLearnConfig {
            variant: Variant::Op1,
            ..Default::default()
        };
        let (sh, _) = init_one_hot(&ctx, &[1.0], &cfg);
        assert!((ctx.gram().quad_form(&sh.alpha) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rough_mode_returns_initializer() {
        let s = LabeledSample::new(
            vec![bag(&[&[1.0, 0.0], &[0.5, 0.5]]), bag(&[&[0.0, 1.0]])],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        let ctx = ctx_for(&s, KernelSpec::gaussian(1.0).unwrap());
        let cfg = WeakLearnConfig {
            rough: true,
            ..Default::default()
        };
        let out = dc_weak_learn(&ctx, &[0.5, 0.5], &cfg).unwrap();
        let (init, f0) = init_one_hot(&ctx, &[0.5, 0.5], &cfg);
        assert_eq!(out.shapelet, init);
        assert_eq!(out.trace, vec![f0]);
    }

    #[test]
    fn weighted_sample_validation() {
        assert!(WeightedSample::new(vec![0.5, 0.5], 0.5).is_ok());
        assert!(WeightedSample::new(vec![0.75, 0.25], 0.5).is_err());
        assert!(WeightedSample::new(vec![0.5, 0.4], 1.0).is_err());
        assert_eq!(WeightedSample::uniform(4).weights(), &[0.25; 4]);
    }
}
