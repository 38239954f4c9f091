//! Brute-force reference solvers for tiny instances.
//!
//! Nothing here calls into the production LP, kernel or weak-learner code;
//! the arithmetic is written out again so the two paths can be compared.

use crate::data::{InstancePool, LabeledSample};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::lp::LinearProgram;

/// Variables beyond this make vertex enumeration impractical.
pub const MAX_ORACLE_VARS: usize = 6;
/// Pools beyond this make the grid impractical.
pub const MAX_GRID_POOL: usize = 3;

const BOX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexOutcome {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

impl VertexOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            VertexOutcome::Optimal(v) => Some(*v),
            _ => None,
        }
    }
}

/// Minimizes an LP by enumerating every basic solution of its constraint set.
///
/// Variables are confined to `[-1e6, 1e6]`; an optimum touching that box is
/// reported as unbounded.
pub fn lp_vertex_oracle(lp: &LinearProgram) -> Result<VertexOutcome> {
    let n = lp.num_vars();
    if n > MAX_ORACLE_VARS {
        return Err(Error::InvalidInput(format!(
            "vertex oracle supports at most {MAX_ORACLE_VARS} variables, got {n}"
        )));
    }
    // constraints a·x ≤ b (or = b), plus variable bounds and the box
    let mut cons: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for i in 0..lp.num_rows() {
        let (row, rhs) = lp.row(i);
        cons.push((row.to_vec(), rhs, lp.is_equality(i)));
    }
    for j in 0..n {
        let (lo, hi) = lp.bounds(j);
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let ub = if hi.is_finite() { hi.min(BOX) } else { BOX };
        let lb = if lo.is_finite() { lo.max(-BOX) } else { -BOX };
        cons.push((e.clone(), ub, false));
        cons.push((e.iter().map(|v| -v).collect(), -lb, false));
    }
    let eqs: Vec<usize> = (0..cons.len()).filter(|&k| cons[k].2).collect();
    let ineqs: Vec<usize> = (0..cons.len()).filter(|&k| !cons[k].2).collect();

    let feasible = |x: &[f64]| {
        cons.iter().all(|(a, b, eq)| {
            let lhs: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
            let tol = 1e-9 * (1.0 + b.abs());
            if *eq {
                (lhs - b).abs() <= tol
            } else {
                lhs <= b + tol
            }
        })
    };

    let objective = lp.objective();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let all: Vec<usize> = eqs.iter().chain(&ineqs).copied().collect();
    let mut chosen = Vec::with_capacity(n);
    for_each_subset(all.len(), n, &mut chosen, &mut |subset| {
        // every equality must be active unless there are more than n of them
        let active_eqs = subset.iter().filter(|&&k| cons[all[k]].2).count();
        if active_eqs < eqs.len().min(n) {
            return;
        }
        let mut m = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (r, &k) in subset.iter().enumerate() {
            let (a, b, _) = &cons[all[k]];
            m[r * n..(r + 1) * n].copy_from_slice(a);
            rhs[r] = *b;
        }
        if let Some(x) = gauss_solve(n, m, rhs) {
            if feasible(&x) {
                let v: f64 = objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, x));
                }
            }
        }
    });
    Ok(match best {
        None => VertexOutcome::Infeasible,
        Some((v, x)) => {
            if x.iter().any(|xi| xi.abs() >= BOX * (1.0 - 1e-9)) {
                VertexOutcome::Unbounded
            } else {
                VertexOutcome::Optimal(v)
            }
        }
    })
}

fn for_each_subset(total: usize, k: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    let start = chosen.last().map_or(0, |&c| c + 1);
    let remaining = k - chosen.len();
    for i in start..total {
        if total - i < remaining {
            break;
        }
        chosen.push(i);
        for_each_subset(total, k, chosen, f);
        chosen.pop();
    }
}

/// Gauss-Jordan elimination with full pivoting; `None` when singular.
fn gauss_solve(n: usize, mut m: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let mut col_of: Vec<usize> = (0..n).collect();
    for step in 0..n {
        let mut piv = (step, step, 0.0f64);
        for r in step..n {
            for c in step..n {
                let v = m[r * n + c].abs();
                if v > piv.2 {
                    piv = (r, c, v);
                }
            }
        }
        if piv.2 < 1e-11 {
            return None;
        }
        let (pr, pc, _) = piv;
        for c in 0..n {
            m.swap(step * n + c, pr * n + c);
        }
        rhs.swap(step, pr);
        for r in 0..n {
            m.swap(r * n + step, r * n + pc);
        }
        col_of.swap(step, pc);
        let p = m[step * n + step];
        for r in 0..n {
            if r == step {
                continue;
            }
            let f = m[r * n + step] / p;
            if f != 0.0 {
                for c in step..n {
                    m[r * n + c] -= f * m[step * n + c];
                }
                rhs[r] -= f * rhs[step];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        x[col_of[i]] = rhs[i] / m[i * n + i];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridConstraint {
    /// `‖α‖₁ ≤ 1`.
    L1,
    /// `αᵀ G α ≤ 1`.
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub points: usize,
}

fn kernel_value(spec: KernelSpec, x: &[f64], z: &[f64]) -> f64 {
    match spec {
        KernelSpec::Linear => {
            let mut s = 0.0;
            for i in 0..x.len() {
                s += x[i] * z[i];
            }
            s
        }
        KernelSpec::Gaussian { sigma2 } => {
            let mut s = 0.0;
            for i in 0..x.len() {
                let t = x[i] - z[i];
                s += t * t;
            }
            (-s / (x.len() as f64 * sigma2)).exp()
        }
    }
}

/// Scans a regular grid of step `step` over the feasible set and returns the
/// point minimizing `−Σ_i d_i y_i max_{x∈B_i} Σ_z α_z K(z, x)`.
pub fn grid_weak_objective_oracle(
    sample: &LabeledSample,
    pool: &InstancePool,
    spec: KernelSpec,
    d: &[f64],
    constraint: GridConstraint,
    step: f64,
) -> Result<GridOptimum> {
    let p = pool.len();
    if p == 0 || p > MAX_GRID_POOL {
        return Err(Error::InvalidInput(format!(
            "grid oracle needs 1..={MAX_GRID_POOL} pool elements, got {p}"
        )));
    }
    if !(step > 0.0) || d.len() != sample.len() {
        return Err(Error::InvalidInput("bad grid step or weight vector".into()));
    }
    let length = pool.length();
    let pool_vecs: Vec<Vec<f64>> = (0..p).map(|a| pool.get(a).to_vec()).collect();
    // k values per bag, per instance, per pool element
    let mut bags: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for i in 0..sample.len() {
        let coeff = d[i] * sample.label(i).sign();
        let Some(group) = sample.bag(i).group(length) else {
            return Err(Error::InvalidInput(format!("bag {i} has no length-{length} instances")));
        };
        let rows = group
            .iter()
            .map(|x| pool_vecs.iter().map(|z| kernel_value(spec, z, x)).collect())
            .collect();
        bags.push((coeff, rows));
    }
    let mut gram = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            gram[a * p + b] = kernel_value(spec, &pool_vecs[a], &pool_vecs[b]);
        }
    }

    let half_widths: Vec<f64> = match constraint {
        GridConstraint::L1 => vec![1.0; p],
        GridConstraint::Ellipsoid => {
            // the box around {αᵀGα ≤ 1} has half-widths sqrt((G⁻¹)_aa)
            let mut inv_diag = Vec::with_capacity(p);
            for a in 0..p {
                let mut e = vec![0.0; p];
                e[a] = 1.0;
                let col = gauss_solve(p, gram.clone(), e).ok_or_else(|| {
                    Error::InvalidInput("grid oracle needs a nonsingular Gram matrix".into())
                })?;
                inv_diag.push(col[a].max(0.0).sqrt());
            }
            inv_diag
        }
    };
    let counts: Vec<i64> = half_widths.iter().map(|h| (h / step).floor() as i64).collect();
    let total: f64 = counts.iter().map(|&c| (2 * c + 1) as f64).product();
    if total > 5e7 {
        return Err(Error::InvalidInput(format!("grid of {total} points is too large")));
    }

    let mut best = GridOptimum {
        alpha: vec![0.0; p],
        objective: f64::INFINITY,
        points: 0,
    };
    let mut idx: Vec<i64> = counts.iter().map(|&c| -c).collect();
    let mut alpha = vec![0.0; p];
    loop {
        for a in 0..p {
            alpha[a] = idx[a] as f64 * step;
        }
        let inside = match constraint {
            GridConstraint::L1 => alpha.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-12,
            GridConstraint::Ellipsoid => {
                let mut q = 0.0;
                for a in 0..p {
                    for b in 0..p {
                        q += alpha[a] * gram[a * p + b] * alpha[b];
                    }
                }
                q <= 1.0 + 1e-12
            }
        };
        if inside {
            best.points += 1;
            let mut f = 0.0;
            for (coeff, rows) in &bags {
                let mut mx = f64::NEG_INFINITY;
                for k in rows {
                    let mut v = 0.0;
                    for a in 0..p {
                        v += k[a] * alpha[a];
                    }
                    if v > mx {
                        mx = v;
                    }
                }
                f -= coeff * mx;
            }
            if f < best.objective {
                best.objective = f;
                best.alpha.copy_from_slice(&alpha);
            }
        }
        // odometer increment
        let mut a = 0;
        loop {
            if a == p {
                return Ok(best);
            }
            if idx[a] < counts[a] {
                idx[a] += 1;
                break;
            }
            idx[a] = -counts[a];
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_pool, Bag, Instance, Label};

    #[test]
    fn vertex_oracle_small_cases() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_ge(vec![1.0], 1.0);
        assert_eq!(lp_vertex_oracle(&lp).unwrap(), VertexOutcome::Optimal(1.0));

        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_ge(vec![1.0], 1.0);
        assert_eq!(lp_vertex_oracle(&lp).unwrap(), VertexOutcome::Unbounded);

        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(lp_vertex_oracle(&lp).unwrap(), VertexOutcome::Infeasible);
    }

    #[test]
    fn vertex_oracle_master_example() {
        // min γ s.t. Σ y_i d_i h(B_i) ≤ γ, Σd = 1, 0 ≤ d ≤ 1/2 with margins (1,1,-1,-1)
        let mut lp = LinearProgram::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        for j in 0..4 {
            lp.set_bounds(j, 0.0, 0.5);
        }
        lp.set_bounds(4, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_le(vec![1.0, 1.0, -1.0, -1.0, -1.0], 0.0);
        lp.add_eq(vec![1.0, 1.0, 1.0, 1.0, 0.0], 1.0);
        let v = lp_vertex_oracle(&lp).unwrap().objective().unwrap();
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_vertex_has_one_objective() {
        // three constraints through (1,1) in the plane
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_le(vec![1.0, 0.0], 1.0);
        lp.add_le(vec![0.0, 1.0], 1.0);
        lp.add_le(vec![1.0, 1.0], 2.0);
        let v = lp_vertex_oracle(&lp).unwrap().objective().unwrap();
        assert!((v + 2.0).abs() < 1e-12);
    }

    fn sample_1d(points: &[(f64, Label)]) -> LabeledSample {
        let bags = points
            .iter()
            .map(|&(v, _)| Bag::from_instances(vec![Instance::new(vec![v]).unwrap()]).unwrap())
            .collect();
        LabeledSample::new(bags, points.iter().map(|p| p.1).collect()).unwrap()
    }

    #[test]
    fn grid_single_pool_matches_sign_solution() {
        let s = sample_1d(&[(2.0, Label::Negative)]);
        let pool = build_pool(&s, 1).unwrap();
        let g = grid_weak_objective_oracle(&s, &pool, KernelSpec::Linear, &[1.0], GridConstraint::L1, 0.01)
            .unwrap();
        // K = 4, objective 4α, minimized at α = −1
        assert_eq!(g.points, 201, "{g:?}");
        assert!((g.alpha[0] + 1.0).abs() < 1e-12);
        assert!((g.objective + 4.0).abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn ellipsoid_grid_filters_points() {
        let s = sample_1d(&[(2.0, Label::Positive)]);
        let pool = build_pool(&s, 1).unwrap();
        // G = [[4]] so |α| ≤ 1/2
        let g =
            grid_weak_objective_oracle(&s, &pool, KernelSpec::Linear, &[1.0], GridConstraint::Ellipsoid, 0.01)
                .unwrap();
        assert_eq!(g.points, 101);
        assert!((g.alpha[0] - 0.5).abs() < 1e-12);
        assert!((g.objective + 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_refuses_large_pool() {
        let s = sample_1d(&[
            (1.0, Label::Positive),
            (2.0, Label::Positive),
            (3.0, Label::Negative),
            (4.0, Label::Negative),
        ]);
        let pool = build_pool(&s, 1).unwrap();
        let r = grid_weak_objective_oracle(&s, &pool, KernelSpec::Linear, &[0.25; 4], GridConstraint::L1, 0.01);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
