//! LPBoost column generation over weak shapelet hypotheses.
//!
//! The restricted master is the soft-margin dual
//!
//! ```text
//! min γ  s.t.  Σ_i y_i d_i h_j(B_i) ≤ γ  (every column j),  Σ d = 1,  0 ≤ d ≤ 1/(νm)
//! ```
//!
//! whose row multipliers are the ensemble weights.

use log::{debug, warn};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::weak::{best_over_lengths, LengthContext, Shapelet, WeakLearnConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub nu: f64,
    /// A new column must beat the current γ by more than this.
    pub delta_stop: f64,
    pub max_columns: usize,
    pub weak: WeakLearnConfig,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            nu: 0.2,
            delta_stop: 1e-6,
            max_columns: 200,
            weak: WeakLearnConfig::default(),
        }
    }
}

impl BoostConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidInput(format!("nu must be in (0, 1], got {}", self.nu)));
        }
        if self.nu * (m as f64) < 1.0 - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "nu * m must be at least 1 (nu {}, m {m})",
                self.nu
            )));
        }
        if self.max_columns == 0 {
            return Err(Error::InvalidInput("max_columns must be positive".into()));
        }
        self.weak.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub gamma: f64,
    pub d: Vec<f64>,
    /// Multiplier of each column row, `≥ 0`.
    pub column_duals: Vec<f64>,
    /// Multiplier of `Σ d = 1`.
    pub sum_dual: f64,
}

/// Solves the restricted master for the signed value matrix
/// `margins[j][i] = y_i h_j(B_i)`.
pub fn solve_master(margins: &[Vec<f64>], nu: f64) -> Result<MasterSolution> {
    let Some(first) = margins.first() else {
        return Err(Error::InvalidInput("master needs at least one column".into()));
    };
    let m = first.len();
    let cap = 1.0 / (nu * m as f64);
    let mut objective = vec![0.0; m + 1];
    objective[m] = 1.0;
    let mut lp = LinearProgram::new(objective);
    for i in 0..m {
        lp.set_bounds(i, 0.0, cap);
    }
    lp.set_bounds(m, f64::NEG_INFINITY, f64::INFINITY);
    for col in margins {
        let mut row = col.clone();
        row.push(-1.0);
        lp.add_le(row, 0.0);
    }
    let mut ones = vec![1.0; m];
    ones.push(0.0);
    lp.add_eq(ones, 1.0);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("master LP reported {:?}", sol.status)));
    }
    let k = margins.len();
    Ok(MasterSolution {
        gamma: sol.x[m],
        d: sol.x[..m].iter().map(|v| v.clamp(0.0, cap)).collect(),
        column_duals: sol.duals[..k].iter().map(|v| v.max(0.0)).collect(),
        sum_dual: sol.duals[k],
    })
}

/// Primal soft-margin solution recovered from the master duals.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalRecovery {
    pub rho: f64,
    /// Column weights normalized to sum to one.
    pub weights: Vec<f64>,
    pub xi: Vec<f64>,
    pub objective: f64,
    /// `|objective − γ|`.
    pub gap: f64,
}

/// Recovers `(ρ, w, ξ)` and checks the primal objective
/// `ρ − (1/νm) Σ ξ_i` against `γ`. Fails when they differ by more than 1e-4.
pub fn recover_primal_and_check(master: &MasterSolution, margins: &[Vec<f64>], nu: f64) -> Result<PrimalRecovery> {
    let m = master.d.len();
    let total: f64 = master.column_duals.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DualityGap { gap: f64::INFINITY });
    }
    let weights: Vec<f64> = master.column_duals.iter().map(|w| w / total).collect();
    let rho = -master.sum_dual;
    let xi: Vec<f64> = (0..m)
        .map(|i| {
            let margin: f64 = weights.iter().zip(margins).map(|(w, col)| w * col[i]).sum();
            (rho - margin).max(0.0)
        })
        .collect();
    let objective = rho - xi.iter().sum::<f64>() / (nu * m as f64);
    let gap = (objective - master.gamma).abs();
    if gap > 1e-4 {
        return Err(Error::DualityGap { gap });
    }
    if gap > 1e-6 {
        warn!("primal/dual objectives differ by {gap:.3e}");
    }
    Ok(PrimalRecovery {
        rho,
        weights,
        xi,
        objective,
        gap,
    })
}

/// A hypothesis accepted into the master.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    /// Index of the length context the shapelet lives in.
    pub context: usize,
    pub shapelet: Shapelet,
    /// `h(B_i)` on the training bags.
    pub values: Vec<f64>,
    pub edge: f64,
}

/// Per-iteration record kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Iteration {
    pub gamma_before: f64,
    pub edge: f64,
    pub accepted: bool,
    pub length: usize,
    pub nonzeros: usize,
    /// γ after re-solving the master (accepted columns only).
    pub gamma_after: Option<f64>,
    /// Largest violation of `0 ≤ d ≤ 1/(νm)` or `Σ d = 1` after the solve.
    pub d_violation: f64,
}

#[derive(Debug, Clone)]
pub struct BoostOutput {
    pub columns: Vec<Column>,
    pub master: MasterSolution,
    pub primal: PrimalRecovery,
    pub history: Vec<Iteration>,
    /// True when the loop ended because no column beat γ.
    pub converged: bool,
}

impl BoostOutput {
    pub fn gamma(&self) -> f64 {
        self.master.gamma
    }

    /// `Σ_j w_j h_j(B_i)` on the training bags.
    pub fn training_scores(&self) -> Vec<f64> {
        let m = self.master.d.len();
        (0..m)
            .map(|i| {
                self.primal
                    .weights
                    .iter()
                    .zip(&self.columns)
                    .map(|(w, c)| w * c.values[i])
                    .sum()
            })
            .collect()
    }
}

fn box_violation(d: &[f64], cap: f64) -> f64 {
    let sum: f64 = d.iter().sum();
    d.iter()
        .map(|&v| (-v).max(v - cap).max(0.0))
        .fold((sum - 1.0).abs(), f64::max)
}

/// Runs LPBoost until no weak hypothesis has edge above `γ + δ_stop` or the
/// column cap is reached.
pub fn lpboost_train(contexts: &[LengthContext], labels: &[Label], config: &BoostConfig) -> Result<BoostOutput> {
    let m = labels.len();
    config.validate(m)?;
    if !labels.contains(&Label::Positive) || !labels.contains(&Label::Negative) {
        return Err(Error::InvalidInput("training data must contain both classes".into()));
    }
    if contexts.iter().any(|c| c.labels() != labels) {
        return Err(Error::InvalidInput("length contexts were built for different labels".into()));
    }
    let cap = 1.0 / (config.nu * m as f64);
    let mut d = vec![1.0 / m as f64; m];
    let mut gamma = 0.0;
    let mut columns: Vec<Column> = Vec::new();
    let mut margins: Vec<Vec<f64>> = Vec::new();
    let mut master: Option<MasterSolution> = None;
    let mut history = Vec::new();
    let mut converged = false;

    while columns.len() < config.max_columns {
        let t = history.len() + 1;
        let fail = |e: Error, columns: usize, gamma: f64| Error::Boosting {
            iteration: t,
            columns,
            gamma,
            source: Box::new(e),
        };
        let weak = best_over_lengths(contexts, &d, &config.weak).map_err(|e| fail(e, columns.len(), gamma))?;
        let length = contexts[weak.context].length();
        let nonzeros = weak.shapelet.nonzeros();
        let accepted = weak.edge > gamma + config.delta_stop;
        debug!(
            "t={t} gamma={gamma:.6} edge={:.6} length={length} nnz={nonzeros}{}",
            weak.edge,
            if accepted { "" } else { " (rejected)" }
        );
        let mut record = Iteration {
            gamma_before: gamma,
            edge: weak.edge,
            accepted,
            length,
            nonzeros,
            gamma_after: None,
            d_violation: 0.0,
        };
        if !accepted {
            history.push(record);
            if columns.is_empty() {
                return Err(Error::NoSeparatingColumn {
                    edge: weak.edge,
                    threshold: gamma + config.delta_stop,
                });
            }
            converged = true;
            break;
        }
        margins.push(weak.values.iter().zip(labels).map(|(v, y)| y.sign() * v).collect());
        columns.push(Column {
            context: weak.context,
            shapelet: weak.shapelet,
            values: weak.values,
            edge: weak.edge,
        });
        let sol = solve_master(&margins, config.nu).map_err(|e| fail(e, columns.len(), gamma))?;
        if let Some(prev) = &master {
            if sol.gamma < prev.gamma - 1e-9 {
                warn!("master gamma decreased from {} to {}", prev.gamma, sol.gamma);
            }
        }
        record.gamma_after = Some(sol.gamma);
        record.d_violation = box_violation(&sol.d, cap);
        history.push(record);
        gamma = sol.gamma;
        d = sol.d.clone();
        master = Some(sol);
    }
    if !converged {
        warn!("stopped at the column cap of {}", config.max_columns);
    }
    let master = master.expect("at least one column accepted");
    let primal = recover_primal_and_check(&master, &margins, config.nu)?;
    Ok(BoostOutput {
        columns,
        master,
        primal,
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn master_box_binding() {
        let s = solve_master(&[vec![1.0, -1.0]], 1.0).unwrap();
        assert!(s.gamma.abs() < 1e-12);
        assert!((s.d[0] - 0.5).abs() < 1e-12 && (s.d[1] - 0.5).abs() < 1e-12);
        let r = recover_primal_and_check(&s, &[vec![1.0, -1.0]], 1.0).unwrap();
        assert!((r.weights[0] - 1.0).abs() < 1e-12);
        assert!(r.gap < 1e-12);
    }

    #[test]
    fn master_half_nu() {
        let margins = vec![vec![1.0, 1.0, -1.0, -1.0]];
        let s = solve_master(&margins, 0.5).unwrap();
        assert!((s.gamma + 1.0).abs() < 1e-12);
        assert!(s.d[0].abs() < 1e-12 && s.d[1].abs() < 1e-12);
        assert!((s.d[2] - 0.5).abs() < 1e-12 && (s.d[3] - 0.5).abs() < 1e-12);
        let dup = solve_master(&[margins[0].clone(), margins[0].clone()], 0.5).unwrap();
        assert!((dup.gamma - s.gamma).abs() < 1e-12);
    }

    #[test]
    fn perfect_margins_have_no_slack() {
        let margins = vec![vec![0.5, 0.7, 0.6], vec![0.9, 0.2, 0.4]];
        let s = solve_master(&margins, 1.0 / 3.0).unwrap();
        let r = recover_primal_and_check(&s, &margins, 1.0 / 3.0).unwrap();
        assert!(r.xi.iter().all(|&x| x < 1e-12));
        assert!(r.gap < 1e-9);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let cfg = BoostConfig {
            nu: 0.1,
            ..Default::default()
        };
        assert!(cfg.validate(5).is_err());
        assert!(cfg.validate(10).is_ok());
        let cfg = BoostConfig {
            nu: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate(10).is_err());
    }
}
