use super::LengthContext;
use crate::data::Label;
use crate::error::{Error, Result};

const MAX_ITER: usize = 20_000;
const GAP_TOL: f64 = 1e-8;
const CHECK_EVERY: usize = 10;

/// Negative-bag cross rows in the whitened coordinates `ĥ_x = Wᵀ k_x`, where
/// `α = W β` maps the unit ball in `β` onto `αᵀ G α ≤ 1`.
#[derive(Debug)]
pub(super) struct Projected {
    rank: usize,
    /// `(bag index, first row, row count)` per negative bag.
    groups: Vec<(usize, usize, usize)>,
    hat: Vec<f64>,
    lipschitz: f64,
}

impl Projected {
    fn build(ctx: &LengthContext) -> Self {
        let factor = ctx.factor();
        let rank = factor.rank();
        let mut groups = Vec::new();
        let mut hat = Vec::new();
        let mut rows = 0;
        for i in 0..ctx.bag_count() {
            if ctx.labels()[i] != Label::Negative {
                continue;
            }
            let start = rows;
            for k in ctx.cross().bag_rows(i) {
                hat.extend(factor.project(k));
                rows += 1;
            }
            groups.push((i, start, rows - start));
        }
        let mut proj = Projected {
            rank,
            groups,
            hat,
            lipschitz: 0.0,
        };
        proj.lipschitz = proj.spectral_norm_sq();
        proj
    }

    fn rows(&self) -> usize {
        self.hat.len() / self.rank.max(1)
    }

    fn row(&self, x: usize) -> &[f64] {
        &self.hat[x * self.rank..(x + 1) * self.rank]
    }

    /// `Ĥ μ = Σ_x μ_x ĥ_x`.
    fn combine(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rank];
        for (x, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                for (o, h) in out.iter_mut().zip(self.row(x)) {
                    *o += m * h;
                }
            }
        }
        out
    }

    fn dots(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|x| self.row(x).iter().zip(v).map(|(h, v)| h * v).sum())
            .collect()
    }

    /// Largest eigenvalue of `ĤᵀĤ` by power iteration, padded slightly.
    fn spectral_norm_sq(&self) -> f64 {
        if self.rows() == 0 || self.rank == 0 {
            return 0.0;
        }
        let mut v = vec![1.0 / (self.rank as f64).sqrt(); self.rank];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w = self.combine(&self.dots(&v));
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = w.into_iter().map(|a| a / norm).collect();
            if (next - lambda).abs() <= 1e-9 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda * 1.05 + 1e-12
    }
}

/// Euclidean projection of `v` onto `{μ ≥ 0, Σ μ = s}`.
fn project_simplex(v: &mut [f64], s: f64) {
    if s <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - s) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Primal objective in whitened coordinates.
fn primal(proj: &Projected, c_hat: &[f64], d: &[f64], beta: &[f64]) -> f64 {
    let lin: f64 = c_hat.iter().zip(beta).map(|(c, b)| c * b).sum();
    let mut neg = 0.0;
    for &(i, start, len) in &proj.groups {
        if d[i] == 0.0 {
            continue;
        }
        let mx = (start..start + len)
            .map(|x| proj.row(x).iter().zip(beta).map(|(h, b)| h * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        neg += d[i] * mx;
    }
    neg - lin
}

/// Minimizes `−cᵀα + Σ_{r: y=−1} d_r max_{x∈B_r} k_xᵀα` over `αᵀ G α ≤ 1`.
///
/// Works in the eigenbasis of `G` and solves the dual
/// `min_μ ‖ĉ − Ĥμ‖` over per-bag scaled simplices with accelerated projected
/// gradient; the duality gap certifies the returned point.
pub fn solve_linearized_op1(ctx: &LengthContext, c: &[f64], d: &[f64]) -> Result<(Vec<f64>, f64)> {
    let p = ctx.pool().len();
    if c.len() != p || d.len() != ctx.bag_count() {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: c.len(),
        });
    }
    let factor = ctx.factor();
    let proj = ctx.op1_cache.get_or_init(|| Projected::build(ctx));
    let c_hat = factor.project(c);
    let n = proj.rows();

    let finish = |beta: &[f64]| -> (Vec<f64>, f64) {
        let mut alpha = factor.lift(beta);
        let q = ctx.gram().quad_form(&alpha);
        if q > 1.0 {
            let s = q.sqrt();
            alpha.iter_mut().for_each(|a| *a /= s);
        }
        let f = ctx.linearized_objective(&alpha, c, d);
        (alpha, f)
    };
    let normalized = |r: &[f64]| -> Vec<f64> {
        let norm = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            r.iter().map(|a| a / norm).collect()
        } else {
            vec![0.0; r.len()]
        }
    };

    let active = proj.groups.iter().any(|&(i, _, _)| d[i] > 0.0);
    if !active || n == 0 {
        return Ok(finish(&normalized(&c_hat)));
    }

    let project = |mu: &mut [f64]| {
        for &(i, start, len) in &proj.groups {
            project_simplex(&mut mu[start..start + len], d[i].max(0.0));
        }
    };
    let mut mu = {
        let warm = ctx.op1_warm.lock().expect("op1 warm lock poisoned");
        match warm.as_ref() {
            Some(w) if w.len() == n => w.clone(),
            _ => proj
                .groups
                .iter()
                .flat_map(|&(_, _, len)| std::iter::repeat_n(1.0 / len as f64, len))
                .collect(),
        }
    };
    project(&mut mu);

    let step = 1.0 / proj.lipschitz.max(1e-12);
    let mut y = mu.clone();
    let mut t = 1.0f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut gap = f64::INFINITY;
    for k in 0..MAX_ITER {
        if k % CHECK_EVERY == 0 {
            let hmu = proj.combine(&mu);
            let r: Vec<f64> = c_hat.iter().zip(&hmu).map(|(c, h)| c - h).collect();
            let dual = -r.iter().map(|a| a * a).sum::<f64>().sqrt();
            let beta = normalized(&r);
            let mut p_val = primal(proj, &c_hat, d, &beta);
            let mut cand = beta;
            if p_val > 0.0 {
                // β = 0 is feasible with objective 0
                p_val = 0.0;
                cand = vec![0.0; proj.rank];
            }
            if best.as_ref().is_none_or(|(b, _)| p_val < *b) {
                best = Some((p_val, cand));
            }
            let best_p = best.as_ref().expect("set above").0;
            gap = best_p - dual;
            if gap <= GAP_TOL {
                *ctx.op1_warm.lock().expect("op1 warm lock poisoned") = Some(mu);
                return Ok(finish(&best.expect("set above").1));
            }
        }
        let hy = proj.combine(&y);
        let r: Vec<f64> = c_hat.iter().zip(&hy).map(|(c, h)| c - h).collect();
        let g = proj.dots(&r);
        let mut next: Vec<f64> = y.iter().zip(&g).map(|(y, g)| y + step * g).collect();
        project(&mut next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        // restart momentum when it points uphill
        let uphill: f64 = y
            .iter()
            .zip(&next)
            .zip(&mu)
            .map(|((y, nx), m)| (y - nx) * (nx - m))
            .sum();
        if uphill > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            y = next.iter().zip(&mu).map(|(nx, m)| nx + beta * (nx - m)).collect();
            t = t_next;
        }
        mu = next;
    }
    let (objective, beta) = best.expect("checked at least once");
    let (alpha, _) = finish(&beta);
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        gap,
        objective,
        best: alpha,
    })
}
