//! Dense linear programming: a bounded-variable revised simplex method.
//!
//! Problems have the form
//!
//! ```text
//! minimize cᵀx  subject to  A x ≤ b,  E x = f,  lo ≤ x ≤ hi
//! ```
//!
//! Dual multipliers are reported for the Lagrangian `cᵀx + yᵀ(Ax − b) +
//! zᵀ(Ex − f)`, so `y ≥ 0` on inequality rows at an optimum.

mod lu;
mod simplex;

pub use simplex::Basis;

use log::debug;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Inequality rows first, then equality rows; each has `n` coefficients.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    n_ineq: usize,
}

impl LinearProgram {
    /// A problem with the given objective and all variables in `[0, ∞)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            rows: Vec::new(),
            rhs: Vec::new(),
            n_ineq: 0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.n_ineq
    }

    pub fn num_eq(&self) -> usize {
        self.rows.len() - self.n_ineq
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.num_vars());
        self.objective = objective;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    /// Row `i` in the combined order (inequalities, then equalities).
    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (&self.rows[i], self.rhs[i])
    }

    pub fn is_equality(&self, i: usize) -> bool {
        i >= self.n_ineq
    }

    /// Adds `coeffsᵀ x ≤ rhs`.
    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars());
        self.rows.insert(self.n_ineq, coeffs);
        self.rhs.insert(self.n_ineq, rhs);
        self.n_ineq += 1;
        self
    }

    /// Adds `coeffsᵀ x ≥ rhs` as `-coeffsᵀ x ≤ -rhs`.
    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(coeffs.into_iter().map(|v| -v).collect(), -rhs)
    }

    /// Adds `coeffsᵀ x = rhs`.
    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(coeffs);
        self.rhs.push(rhs);
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let finite = |v: &f64| v.is_finite();
        if !self.objective.iter().all(finite)
            || !self.rhs.iter().all(finite)
            || !self.rows.iter().all(|r| r.len() == n && r.iter().all(finite))
        {
            return Err(Error::InvalidInput("LP has non-finite or ragged data".into()));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!("invalid bounds on x{j}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One multiplier per row in the combined order; `≥ 0` on inequality rows.
    pub duals: Vec<f64>,
    /// `c_j + a_jᵀ y`: the multiplier of the active bound on `x_j`.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Final basis, usable to warm-start a problem with the same constraints.
    pub basis: Option<Basis>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    simplex::Simplex::new(lp).solve(None)
}

/// Solves starting from `basis` when it is still primal feasible; falls back
/// to a cold start otherwise. A warm solve that fails or reports an unbounded
/// ray is repeated from a cold start.
pub fn solve_lp_warm(lp: &LinearProgram, basis: Option<&Basis>) -> Result<LpSolution> {
    lp.validate()?;
    let Some(basis) = basis else {
        return simplex::Simplex::new(lp).solve(None);
    };
    match simplex::Simplex::new(lp).solve(Some(basis)) {
        Ok(sol) if sol.status != LpStatus::Unbounded => Ok(sol),
        Ok(_) => simplex::Simplex::new(lp).solve(None),
        Err(e) => {
            debug!("warm-started solve failed ({e}); retrying from a cold start");
            simplex::Simplex::new(lp).solve(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn kkt_check(lp: &LinearProgram, sol: &LpSolution) {
        let n = lp.num_vars();
        let mut dual_obj = 0.0;
        for i in 0..lp.num_rows() {
            let (row, rhs) = lp.row(i);
            let ax: f64 = row.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
            if lp.is_equality(i) {
                assert!((ax - rhs).abs() <= 1e-8, "row {i}: {ax} != {rhs}");
            } else {
                assert!(ax <= rhs + 1e-8, "row {i}: {ax} > {rhs}");
                assert!(sol.duals[i] >= -1e-8, "dual {i} = {}", sol.duals[i]);
                assert!((sol.duals[i] * (rhs - ax)).abs() <= 1e-7);
            }
            dual_obj -= sol.duals[i] * rhs;
        }
        for j in 0..n {
            let (lo, hi) = lp.bounds(j);
            let x = sol.x[j];
            assert!(x >= lo - 1e-8 && x <= hi + 1e-8);
            let mut r = lp.objective()[j];
            for i in 0..lp.num_rows() {
                r += sol.duals[i] * lp.row(i).0[j];
            }
            assert!((r - sol.reduced_costs[j]).abs() <= 1e-7);
            // reduced cost sign must match the active bound
            if r > 1e-8 {
                assert!((x - lo).abs() <= 1e-8, "x{j}={x} r={r}");
            } else if r < -1e-8 {
                assert!((x - hi).abs() <= 1e-8, "x{j}={x} r={r}");
            }
            if r != 0.0 {
                dual_obj += r * x;
            }
        }
        assert!((dual_obj - sol.objective).abs() <= 1e-6, "{dual_obj} vs {}", sol.objective);
    }

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_ge(vec![1.0], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        kkt_check(&lp, &s);
    }

    #[test]
    fn capped_simplex() {
        let mut lp = LinearProgram::new(vec![-1.0, -1.0, 1.0, 1.0]);
        for j in 0..4 {
            lp.set_bounds(j, 0.0, 0.5);
        }
        lp.add_eq(vec![1.0; 4], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        for (x, e) in s.x.iter().zip([0.5, 0.5, 0.0, 0.0]) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!((s.objective + 1.0).abs() < 1e-12);
        kkt_check(&lp, &s);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);

        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![1.0, 1.0], 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0]);
        lp.add_eq(vec![1.0, 1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0, 2.0], 2.0);
        lp.add_ge(vec![0.0, 1.0, 1.0], 0.5);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 2.0 * 0.5 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn warm_start_after_objective_change() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let mut lp = LinearProgram::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        for j in 0..n {
            lp.set_bounds(j, -1.0, 2.0);
        }
        for _ in 0..15 {
            lp.add_le((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0.0..2.0));
        }
        let first = solve_lp(&lp).unwrap();
        lp.set_objective((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let warm = solve_lp_warm(&lp, first.basis.as_ref()).unwrap();
        let cold = solve_lp(&lp).unwrap();
        assert!((warm.objective - cold.objective).abs() < 1e-9);
        kkt_check(&lp, &warm);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under naive Dantzig pricing.
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective + 0.05).abs() < 1e-9);
        kkt_check(&lp, &s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn random_lps_satisfy_kkt(seed in 0u64..100_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..8);
            let mut lp = LinearProgram::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
            for j in 0..n {
                match rng.random_range(0..4) {
                    0 => { lp.set_bounds(j, -1.0, 1.0); }
                    1 => { lp.set_bounds(j, 0.0, 3.0); }
                    2 => { lp.set_bounds(j, f64::NEG_INFINITY, 2.0); }
                    _ => { lp.set_bounds(j, -2.0, f64::INFINITY); }
                }
            }
            for _ in 0..rng.random_range(0..8) {
                lp.add_le((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-1.0..2.0));
            }
            if rng.random_bool(0.5) {
                lp.add_eq((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-0.5..0.5));
            }
            let s = solve_lp(&lp).unwrap();
            if s.is_optimal() {
                kkt_check(&lp, &s);
            }
        }

        /// Kernel-row LPs with zero right-hand sides are highly degenerate
        /// and their columns nearly collinear.
        #[test]
        fn degenerate_kernel_lps_satisfy_kkt(seed in 0u64..100_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = rng.random_range(1..=6usize);
            let bags = rng.random_range(2..=8usize);
            let sigma2 = [0.05, 1.0, 20.0][rng.random_range(0..3)];
            let point = |rng: &mut rand_chacha::ChaCha8Rng| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let pool: Vec<[f64; 2]> = (0..p).map(|_| point(&mut rng)).collect();
            let n = 2 * p + bags;
            let mut c: Vec<f64> = (0..p).map(|_| rng.random_range(-0.1..0.0) * 10f64.powi(-rng.random_range(0..8))).collect();
            c.extend(c.clone().iter().map(|v| -v));
            c.extend((0..bags).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..0.2) }));
            let mut lp = LinearProgram::new(c);
            for j in 0..n {
                if j < 2 * p {
                    lp.set_bounds(j, 0.0, f64::INFINITY);
                } else {
                    lp.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
                }
            }
            for b in 0..bags {
                for _ in 0..rng.random_range(5..20) {
                    let x = point(&mut rng);
                    let mut row = vec![0.0; n];
                    for (z, q) in pool.iter().enumerate() {
                        let d2 = (x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2);
                        let k = (-d2 / (2.0 * sigma2)).exp();
                        row[z] = k;
                        row[p + z] = -k;
                    }
                    row[2 * p + b] = -1.0;
                    lp.add_le(row, 0.0);
                }
            }
            let mut l1 = vec![1.0; 2 * p];
            l1.extend(vec![0.0; bags]);
            lp.add_le(l1, 1.0);
            let s = solve_lp(&lp).unwrap();
            prop_assert!(s.is_optimal());
            kkt_check(&lp, &s);
        }

        #[test]
        fn scaling_objective_keeps_vertex(seed in 0u64..10_000, scale in 0.1f64..10.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut lp = LinearProgram::new(c.clone());
            for j in 0..n { lp.set_bounds(j, 0.0, 1.0); }
            for _ in 0..3 {
                lp.add_le((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0.1..1.0));
            }
            let a = solve_lp(&lp).unwrap();
            lp.set_objective(c.iter().map(|v| v * scale).collect());
            let b = solve_lp(&lp).unwrap();
            prop_assert!((a.objective * scale - b.objective).abs() < 1e-9 * scale.max(1.0));
            // vertex identical up to degenerate ties in the objective
            let gap: f64 = a.x.iter().zip(&b.x).map(|(p, q)| (p - q).abs()).sum();
            let tie = (a.objective * scale - b.objective).abs() < 1e-12 && gap > 0.0;
            prop_assert!(gap < 1e-9 || tie);
        }
    }
}
