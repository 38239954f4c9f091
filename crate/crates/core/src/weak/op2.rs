use super::LengthContext;
use crate::data::Label;
use crate::error::{Error, Result};
use crate::lp::{solve_lp_warm, Basis, LinearProgram, LpStatus};

/// The ℓ1-ball subproblem as an LP over `(α⁺, α⁻, λ)`:
///
/// ```text
/// min −cᵀ(α⁺ − α⁻) + Σ_r d_r λ_r
/// s.t. k_xᵀ(α⁺ − α⁻) ≤ λ_r   for every instance x of every negative bag r
///      Σ α⁺ + Σ α⁻ ≤ 1,  α± ≥ 0,  λ free
/// ```
///
/// Only the objective changes between calls, so the last optimal basis is
/// kept as a warm start.
#[derive(Debug)]
pub(super) struct State {
    lp: LinearProgram,
    negatives: Vec<usize>,
    basis: Option<Basis>,
}

impl State {
    fn build(ctx: &LengthContext) -> Self {
        let p = ctx.pool().len();
        let negatives: Vec<usize> = (0..ctx.bag_count())
            .filter(|&i| ctx.labels()[i] == Label::Negative)
            .collect();
        let n = 2 * p + negatives.len();
        let mut lp = LinearProgram::new(vec![0.0; n]);
        for (r, &i) in negatives.iter().enumerate() {
            lp.set_bounds(2 * p + r, f64::NEG_INFINITY, f64::INFINITY);
            for k in ctx.cross().bag_rows(i) {
                let mut row = Vec::with_capacity(n);
                row.extend_from_slice(k);
                row.extend(k.iter().map(|v| -v));
                row.extend((0..negatives.len()).map(|s| if s == r { -1.0 } else { 0.0 }));
                lp.add_le(row, 0.0);
            }
        }
        let mut l1 = vec![1.0; 2 * p];
        l1.resize(n, 0.0);
        lp.add_le(l1, 1.0);
        State {
            lp,
            negatives,
            basis: None,
        }
    }
}

/// Minimizes `−cᵀα + Σ_{r: y=−1} d_r max_{x∈B_r} k_xᵀα` over `‖α‖₁ ≤ 1`.
/// Returns the minimizer and its objective.
pub fn solve_linearized_op2(ctx: &LengthContext, c: &[f64], d: &[f64]) -> Result<(Vec<f64>, f64)> {
    let p = ctx.pool().len();
    if c.len() != p || d.len() != ctx.bag_count() {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: c.len(),
        });
    }
    let mut guard = ctx.op2_state.lock().expect("op2 state lock poisoned");
    let state = guard.get_or_insert_with(|| State::build(ctx));
    let mut objective: Vec<f64> = c.iter().map(|v| -v).collect();
    objective.extend_from_slice(c);
    objective.extend(state.negatives.iter().map(|&i| d[i]));
    state.lp.set_objective(objective);

    let sol = solve_lp_warm(&state.lp, state.basis.as_ref())?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("linearized subproblem reported {:?}", sol.status)));
    }
    state.basis = sol.basis.clone();
    drop(guard);

    let alpha: Vec<f64> = (0..p).map(|z| sol.x[z] - sol.x[p + z]).collect();
    let f = ctx.linearized_objective(&alpha, c, d);
    Ok((alpha, f))
}
