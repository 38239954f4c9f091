use log::debug;

use super::lu::DenseLu;
use super::{LinearProgram, LpSolution, LpStatus};
use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const LU_TOL: f64 = 1e-9;
/// Pivot threshold below which a repaired basis drops a column.
const REPAIR_TOL: f64 = 1e-9;
/// Smallest pivot, relative to the largest ratio-test candidate, that
/// Bland's rule may choose.
const BLAND_PIVOT_RATIO: f64 = 1e-3;
const MAX_REPAIRS: usize = 8;
/// Relative widening of basic bounds while degenerate vertices are crossed.
const PERTURB: f64 = 1e-6;
/// Largest bound violation accepted in a returned optimum; repair aims for
/// `FEAS_TOL`, leaving some room so the two phases do not chase each other.
const ACCEPT_TOL: f64 = 1e-8;
const RECOMPUTE_EVERY: usize = 40;
/// Eta updates accumulated before the basis is factored afresh.
const REFACTOR_EVERY: usize = 64;

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColStatus {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

/// Basic/nonbasic status of every structural and logical column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    status: Vec<ColStatus>,
}

#[derive(Debug, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded,
    /// Repair mode found no improving column while still infeasible.
    Stuck,
    /// No progress within the stall limit.
    Stalled,
}

/// Product-form update `B_new = B_old E`, where `E` is the identity except
/// for column `pos`, which holds `col`.
struct Eta {
    pos: usize,
    col: Vec<f64>,
}

/// Column layout: `0..n` structural, `n..n+m` one logical unit column per
/// row (slack for `≤` rows, a phase-1 artificial fixed at zero afterwards for
/// equality rows), then extra phase-1 artificials for `≤` rows whose slack
/// starts infeasible.
///
/// At each refactorization the basis is split into rows covered by basic
/// unit columns and a dense LU of the kernel `A[P, T]`, where `P` are the
/// uncovered rows and `T` the basic structural columns. Later pivots are
/// applied as eta updates until the next refactorization.
pub(super) struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    unit_row: Vec<usize>,
    unit_sign: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    status: Vec<ColStatus>,
    /// Basic column at each basis position.
    head: Vec<usize>,
    cover: Vec<Option<usize>>,
    p_rows: Vec<usize>,
    t_cols: Vec<usize>,
    lu: DenseLu,
    etas: Vec<Eta>,
    iterations: usize,
    max_iterations: usize,
    /// Iterations between recomputations of the basic values.
    recompute_every: usize,
}

impl<'a> Simplex<'a> {
    pub fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut a = vec![0.0; m * n];
        for i in 0..m {
            for (j, &v) in lp.rows[i].iter().enumerate() {
                a[j * m + i] = v;
            }
        }
        Simplex {
            lp,
            m,
            n,
            a,
            b: lp.rhs.clone(),
            unit_row: Vec::new(),
            unit_sign: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            cost: Vec::new(),
            x: Vec::new(),
            status: Vec::new(),
            head: Vec::new(),
            cover: vec![None; m],
            p_rows: Vec::new(),
            t_cols: Vec::new(),
            lu: DenseLu::default(),
            etas: Vec::new(),
            iterations: 0,
            max_iterations: 50_000usize.max(100 * (n + m)),
            recompute_every: RECOMPUTE_EVERY,
        }
    }

    pub fn solve(mut self, warm: Option<&Basis>) -> Result<LpSolution> {
        if let Some(basis) = warm {
            if self.try_warm_start(basis)? {
                return self.phase_two();
            }
        }
        self.cold_start()?;
        if self.run_phase(false, false)? != PhaseEnd::Optimal {
            return Err(Error::Solver("phase 1 reported an unbounded ray".into()));
        }
        self.recompute_basics();
        let infeas: f64 = (self.n..self.cost.len())
            .filter(|&c| self.cost[c] != 0.0)
            .map(|c| self.x[c])
            .sum();
        let scale = self.b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if infeas > 1e-8 * scale {
            return Ok(self.finish(LpStatus::Infeasible));
        }
        // artificials are pinned to zero from here on
        for c in self.n..self.cost.len() {
            let is_eq_logical = c < self.n + self.m && self.lp.is_equality(c - self.n);
            if c >= self.n + self.m || is_eq_logical {
                self.lo[c] = 0.0;
                self.hi[c] = 0.0;
                if self.status[c] != ColStatus::Basic {
                    self.status[c] = ColStatus::Lower;
                    self.x[c] = 0.0;
                }
            }
        }
        self.phase_two()
    }

    fn phase_two(mut self) -> Result<LpSolution> {
        self.cost = vec![0.0; self.lo.len()];
        self.cost[..self.n].copy_from_slice(self.lp.objective());
        let saved = self.perturb_basic_bounds(0);
        let perturbed = self.run_phase(false, false);
        self.restore_bounds(saved);
        match perturbed {
            Ok(PhaseEnd::Unbounded) => return Ok(self.finish(LpStatus::Unbounded)),
            Err(e) => debug!("perturbed solve failed ({e}); continuing on the exact bounds"),
            Ok(_) => {}
        }
        match self.optimize()? {
            PhaseEnd::Unbounded => Ok(self.finish(LpStatus::Unbounded)),
            _ => Ok(self.finish(LpStatus::Optimal)),
        }
    }

    /// Alternates repair and optimization until the basis is optimal and
    /// within `ACCEPT_TOL` of its bounds. A stalled optimization is resumed
    /// on freshly perturbed bounds; the last round falls back to Bland's rule
    /// instead.
    fn optimize(&mut self) -> Result<PhaseEnd> {
        let objective = self.lp.objective();
        for round in 1..=MAX_REPAIRS {
            self.recompute_basics();
            let violation = self.max_violation();
            if violation > FEAS_TOL {
                debug!("basis lies {violation:e} outside its bounds; restoring feasibility");
                if self.run_phase(true, false)? != PhaseEnd::Optimal {
                    break;
                }
            }
            self.cost.iter_mut().for_each(|c| *c = 0.0);
            self.cost[..self.n].copy_from_slice(objective);
            match self.run_phase(false, round < MAX_REPAIRS)? {
                PhaseEnd::Unbounded => return Ok(PhaseEnd::Unbounded),
                PhaseEnd::Stalled => {
                    debug!("degenerate stall; perturbing bounds");
                    let saved = self.perturb_basic_bounds(round as u64);
                    let end = self.run_phase(false, false);
                    self.restore_bounds(saved);
                    if end? == PhaseEnd::Unbounded {
                        return Ok(PhaseEnd::Unbounded);
                    }
                    continue;
                }
                _ => {}
            }
            self.recompute_basics();
            if self.max_violation() <= ACCEPT_TOL {
                return Ok(PhaseEnd::Optimal);
            }
            // updated values drifted; track the basis exactly from now on
            self.recompute_every = 1;
        }
        Err(Error::Solver(format!(
            "numerical failure: primal feasibility lost (violation {:e})",
            self.max_violation()
        )))
    }

    /// Widens the finite bounds of the basic variables by small distinct
    /// amounts so that degenerate vertices split apart. Returns the exact
    /// bounds.
    fn perturb_basic_bounds(&mut self, round: u64) -> (Vec<f64>, Vec<f64>) {
        let saved = (self.lo.clone(), self.hi.clone());
        for (k, &c) in self.head.iter().enumerate() {
            if c >= self.n + self.m || self.lo[c] == self.hi[c] {
                continue;
            }
            let mut z = (c as u64 ^ (k as u64) << 32 ^ round << 56).wrapping_add(0x9e37_79b9_7f4a_7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            let u = 1.0 + (z >> 11) as f64 / (1u64 << 53) as f64;
            if self.lo[c].is_finite() {
                self.lo[c] -= PERTURB * u * (1.0 + self.lo[c].abs());
            }
            if self.hi[c].is_finite() {
                self.hi[c] += PERTURB * u * (1.0 + self.hi[c].abs());
            }
        }
        saved
    }

    /// Reinstates exact bounds and moves nonbasic columns onto them.
    fn restore_bounds(&mut self, (lo, hi): (Vec<f64>, Vec<f64>)) {
        self.lo = lo;
        self.hi = hi;
        for c in 0..self.lo.len() {
            if self.status[c] != ColStatus::Basic {
                self.x[c] = self.nonbasic_value(c, self.status[c]);
            }
        }
    }

    fn init_columns(&mut self) {
        let (n, m) = (self.n, self.m);
        self.lo = Vec::with_capacity(n + m);
        self.hi = Vec::with_capacity(n + m);
        self.lo.extend_from_slice(&self.lp.lower);
        self.hi.extend_from_slice(&self.lp.upper);
        self.unit_row = (0..m).collect();
        self.unit_sign = vec![1.0; m];
        for _ in 0..m {
            self.lo.push(0.0);
            // equality logicals get their real bounds after phase 1
            self.hi.push(f64::INFINITY);
        }
        self.x = vec![0.0; n + m];
        self.status = vec![ColStatus::Lower; n + m];
        self.head = Vec::with_capacity(m);
    }

    fn nonbasic_value(&self, c: usize, status: ColStatus) -> f64 {
        match status {
            ColStatus::Lower => self.lo[c],
            ColStatus::Upper => self.hi[c],
            _ => 0.0,
        }
    }

    fn cold_start(&mut self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        self.init_columns();
        for j in 0..n {
            let st = if self.lo[j].is_finite() {
                ColStatus::Lower
            } else if self.hi[j].is_finite() {
                ColStatus::Upper
            } else {
                ColStatus::Zero
            };
            self.status[j] = st;
            self.x[j] = self.nonbasic_value(j, st);
        }
        let mut resid = self.b.clone();
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for (r, a) in resid.iter_mut().zip(&self.a[j * m..(j + 1) * m]) {
                    *r -= a * xj;
                }
            }
        }
        self.cost = vec![0.0; n + m];
        for (i, &r) in resid.iter().enumerate() {
            let logical = n + i;
            if self.lp.is_equality(i) {
                self.unit_sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
                self.cost[logical] = 1.0;
                self.status[logical] = ColStatus::Basic;
                self.x[logical] = r.abs();
                self.head.push(logical);
            } else if r >= -FEAS_TOL {
                self.status[logical] = ColStatus::Basic;
                self.x[logical] = r.max(0.0);
                self.head.push(logical);
            } else {
                let art = self.lo.len();
                self.unit_row.push(i);
                self.unit_sign.push(-1.0);
                self.lo.push(0.0);
                self.hi.push(f64::INFINITY);
                self.cost.push(1.0);
                self.x.push(-r);
                self.status.push(ColStatus::Basic);
                self.head.push(art);
            }
        }
        self.refactor()
    }

    fn try_warm_start(&mut self, basis: &Basis) -> Result<bool> {
        let (n, m) = (self.n, self.m);
        if basis.status.len() != n + m {
            return Ok(false);
        }
        self.init_columns();
        for i in 0..m {
            if self.lp.is_equality(i) {
                self.hi[n + i] = 0.0;
            }
        }
        for (c, &st) in basis.status.iter().enumerate() {
            let ok = match st {
                ColStatus::Basic => true,
                ColStatus::Lower => self.lo[c].is_finite(),
                ColStatus::Upper => self.hi[c].is_finite(),
                ColStatus::Zero => !self.lo[c].is_finite() && !self.hi[c].is_finite(),
            };
            if !ok {
                return Ok(false);
            }
            self.status[c] = st;
            self.x[c] = self.nonbasic_value(c, st);
            if st == ColStatus::Basic {
                self.head.push(c);
            }
        }
        if self.head.len() != m || self.refactor().is_err() {
            return Ok(false);
        }
        self.recompute_basics();
        Ok(self.max_violation() <= FEAS_TOL)
    }

    /// Factors the current basis and clears the eta file. Positions are
    /// reassigned: covered row `i` holds its unit column at position `i`, and
    /// kernel column `t_cols[k]` sits at position `p_rows[k]`. A numerically
    /// singular basis is repaired by swapping its dependent structural columns
    /// for logicals, which may leave basic variables outside their bounds.
    fn refactor(&mut self) -> Result<()> {
        let singular = || Error::Solver("singular basis encountered".into());
        let kernel = self.split_basis()?;
        let k = self.t_cols.len();
        self.lu = match DenseLu::factor(k, kernel.clone(), LU_TOL) {
            Some(lu) => lu,
            None => {
                let (cols, rows) = DenseLu::deficiency(k, kernel, REPAIR_TOL);
                if cols.is_empty() {
                    return Err(singular());
                }
                debug!("replacing {} dependent basic columns with logicals", cols.len());
                for (&t, &r) in cols.iter().zip(&rows) {
                    let out = self.t_cols[t];
                    let logical = self.n + self.p_rows[r];
                    let slot = self.head.iter().position(|&c| c == out).expect("basic column");
                    self.head[slot] = logical;
                    self.status[logical] = ColStatus::Basic;
                    let (lo, hi, x) = (self.lo[out], self.hi[out], self.x[out]);
                    let st = match (lo.is_finite(), hi.is_finite()) {
                        (true, true) if hi - x < x - lo => ColStatus::Upper,
                        (true, _) => ColStatus::Lower,
                        (false, true) => ColStatus::Upper,
                        (false, false) => ColStatus::Zero,
                    };
                    self.status[out] = st;
                    self.x[out] = self.nonbasic_value(out, st);
                }
                let kernel = self.split_basis()?;
                DenseLu::factor(self.t_cols.len(), kernel, LU_TOL).ok_or_else(singular)?
            }
        };
        for i in 0..self.m {
            if let Some(u) = self.cover[i] {
                self.head[i] = u;
            }
        }
        for (&row, &col) in self.p_rows.iter().zip(&self.t_cols) {
            self.head[row] = col;
        }
        self.etas.clear();
        Ok(())
    }

    /// Splits the basis into covered rows and the kernel, returned row-major.
    fn split_basis(&mut self) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let singular = || Error::Solver("singular basis encountered".into());
        self.cover = vec![None; m];
        self.t_cols.clear();
        for &c in &self.head {
            if c < n {
                self.t_cols.push(c);
            } else if self.cover[self.unit_row[c - n]].replace(c).is_some() {
                return Err(singular());
            }
        }
        self.t_cols.sort_unstable();
        self.p_rows = (0..m).filter(|&i| self.cover[i].is_none()).collect();
        let k = self.t_cols.len();
        if self.p_rows.len() != k {
            return Err(singular());
        }
        let mut kernel = vec![0.0; k * k];
        for (p, &row) in self.p_rows.iter().enumerate() {
            for (t, &col) in self.t_cols.iter().enumerate() {
                kernel[p * k + t] = self.a[col * m + row];
            }
        }
        Ok(kernel)
    }

    fn column(&self, c: usize) -> Vec<f64> {
        if c < self.n {
            self.a[c * self.m..(c + 1) * self.m].to_vec()
        } else {
            let u = c - self.n;
            let mut v = vec![0.0; self.m];
            v[self.unit_row[u]] = self.unit_sign[u];
            v
        }
    }

    /// Solves `B w = r`; `w` is indexed by basis position.
    fn ftran(&self, r: &[f64]) -> Vec<f64> {
        let m = self.m;
        let rp: Vec<f64> = self.p_rows.iter().map(|&i| r[i]).collect();
        let wt = self.lu.solve(&rp);
        let mut acc = vec![0.0; m];
        for (&col, &w) in self.t_cols.iter().zip(&wt) {
            if w != 0.0 {
                for (s, a) in acc.iter_mut().zip(&self.a[col * m..(col + 1) * m]) {
                    *s += a * w;
                }
            }
        }
        let mut w = vec![0.0; m];
        for i in 0..m {
            if let Some(u) = self.cover[i] {
                w[i] = (r[i] - acc[i]) / self.unit_sign[u - self.n];
            }
        }
        for (&row, v) in self.p_rows.iter().zip(wt) {
            w[row] = v;
        }
        for eta in &self.etas {
            let vp = w[eta.pos] / eta.col[eta.pos];
            if vp != 0.0 {
                for (wi, e) in w.iter_mut().zip(&eta.col) {
                    *wi -= e * vp;
                }
            }
            w[eta.pos] = vp;
        }
        w
    }

    /// Solves `yᵀ B = uᵀ` for a position-indexed `u`; `y` is indexed by row.
    fn btran(&self, mut u: Vec<f64>) -> Vec<f64> {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let p = eta.pos;
            let rest = dot(&u, &eta.col) - u[p] * eta.col[p];
            u[p] = (u[p] - rest) / eta.col[p];
        }
        let mut y = vec![0.0; m];
        for i in 0..m {
            if let Some(c) = self.cover[i] {
                y[i] = u[i] / self.unit_sign[c - self.n];
            }
        }
        let rhs: Vec<f64> = self
            .p_rows
            .iter()
            .zip(&self.t_cols)
            .map(|(&row, &col)| {
                u[row] - dot(&self.a[col * m..(col + 1) * m], &y)
            })
            .collect();
        let yp = self.lu.solve_transpose(&rhs);
        for (&row, v) in self.p_rows.iter().zip(yp) {
            y[row] = v;
        }
        y
    }

    /// Row prices `y` with `yᵀ B = c_Bᵀ`.
    fn prices(&self) -> Vec<f64> {
        self.btran(self.head.iter().map(|&c| self.cost[c]).collect())
    }

    fn reduced_cost(&self, c: usize, y: &[f64]) -> f64 {
        if c < self.n {
            self.cost[c] - dot(&self.a[c * self.m..(c + 1) * self.m], y)
        } else {
            let u = c - self.n;
            self.cost[c] - y[self.unit_row[u]] * self.unit_sign[u]
        }
    }

    /// `r -= v · column(c)`.
    fn sub_column(&self, r: &mut [f64], c: usize, v: f64) {
        if c < self.n {
            let m = self.m;
            for (ri, a) in r.iter_mut().zip(&self.a[c * m..(c + 1) * m]) {
                *ri -= a * v;
            }
        } else {
            let u = c - self.n;
            r[self.unit_row[u]] -= self.unit_sign[u] * v;
        }
    }

    fn recompute_basics(&mut self) {
        let mut r = self.b.clone();
        for c in 0..self.lo.len() {
            if self.status[c] == ColStatus::Basic || self.x[c] == 0.0 {
                continue;
            }
            self.sub_column(&mut r, c, self.x[c]);
        }
        let mut w = self.ftran(&r);
        // one step of iterative refinement
        for (&c, &v) in self.head.iter().zip(&w) {
            self.sub_column(&mut r, c, v);
        }
        if r.iter().any(|&v| v != 0.0) {
            let dw = self.ftran(&r);
            w.iter_mut().zip(dw).for_each(|(a, d)| *a += d);
        }
        for (&c, v) in self.head.iter().zip(w) {
            self.x[c] = v;
        }
    }

    fn objective_value(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Effective bounds of column `c`. In repair mode a basic variable that
    /// violates a bound may move freely away from it and is stopped at it.
    fn effective_bounds(&self, c: usize, repair: bool) -> (f64, f64) {
        let (lo, hi, x) = (self.lo[c], self.hi[c], self.x[c]);
        if repair && self.status[c] == ColStatus::Basic {
            if x < lo - FEAS_TOL {
                return (f64::NEG_INFINITY, lo);
            }
            if x > hi + FEAS_TOL {
                return (hi, f64::INFINITY);
            }
        }
        (lo, hi)
    }

    /// Sum of bound violations of the basic variables, with the matching
    /// phase cost (`−1` below, `+1` above) installed in `self.cost`.
    fn install_repair_costs(&mut self) -> f64 {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        let mut total = 0.0;
        for &c in &self.head {
            let (lo, hi, x) = (self.lo[c], self.hi[c], self.x[c]);
            if x < lo - FEAS_TOL {
                self.cost[c] = -1.0;
                total += lo - x;
            } else if x > hi + FEAS_TOL {
                self.cost[c] = 1.0;
                total += x - hi;
            }
        }
        total
    }

    /// Primal simplex iterations on the current cost vector. With `repair`
    /// set, the cost is the sum of infeasibilities of the basic variables,
    /// rebuilt every iteration, and the phase ends once it reaches zero.
    /// With `stall_exit` set, a stall returns instead of switching to
    /// Bland's rule.
    fn run_phase(&mut self, repair: bool, stall_exit: bool) -> Result<PhaseEnd> {
        let mut bland = false;
        let mut best_obj = f64::INFINITY;
        let mut stalled = 0usize;
        let stall_limit = 2 * (self.n + self.m);
        let mut since_recompute = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::Solver(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            since_recompute += 1;
            if repair || since_recompute >= self.recompute_every {
                self.recompute_basics();
                since_recompute = 0;
            }
            let obj = if repair {
                let infeasibility = self.install_repair_costs();
                if infeasibility == 0.0 {
                    return Ok(PhaseEnd::Optimal);
                }
                infeasibility
            } else {
                self.objective_value()
            };
            if obj < best_obj - 1e-12 * (1.0 + best_obj.abs()) {
                best_obj = obj;
                stalled = 0;
                bland = false;
            } else {
                stalled += 1;
                if stalled > stall_limit {
                    if stall_exit {
                        return Ok(PhaseEnd::Stalled);
                    }
                    bland = true;
                }
            }
            let y = self.prices();

            // pricing
            let mut entering: Option<(usize, f64)> = None;
            for c in 0..self.lo.len() {
                let st = self.status[c];
                if st == ColStatus::Basic || self.lo[c] == self.hi[c] {
                    continue;
                }
                let d = self.reduced_cost(c, &y);
                let eligible = match st {
                    ColStatus::Lower => d < -OPT_TOL,
                    ColStatus::Upper => d > OPT_TOL,
                    ColStatus::Zero => d.abs() > OPT_TOL,
                    ColStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((c, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((c, d));
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(if repair { PhaseEnd::Stuck } else { PhaseEnd::Optimal });
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };

            let w = self.ftran(&self.column(q));
            let pivot_tol = PIVOT_TOL * w.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            // candidate leaving positions with the rate of change of their
            // basic variable per unit step
            let moves: Vec<(usize, f64)> = w
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > pivot_tol)
                .map(|(p, v)| (p, -dir * v))
                .collect();

            // Harris two-pass ratio test; returns (step, bound reached)
            let limit = |c: usize, rate: f64, tol: f64| -> (f64, f64) {
                let (lo, hi) = self.effective_bounds(c, repair);
                if rate < 0.0 && lo.is_finite() {
                    (((self.x[c] - lo + tol) / -rate).max(0.0), lo)
                } else if rate > 0.0 && hi.is_finite() {
                    (((hi - self.x[c] + tol) / rate).max(0.0), hi)
                } else {
                    (f64::INFINITY, f64::NAN)
                }
            };
            let relaxed = moves
                .iter()
                .map(|&(p, r)| limit(self.head[p], r, FEAS_TOL).0)
                .fold(f64::INFINITY, f64::min);
            // (position, rate, step, bound)
            let candidates: Vec<(usize, f64, f64, f64)> = moves
                .iter()
                .map(|&(p, rate)| {
                    let (exact, bound) = limit(self.head[p], rate, 0.0);
                    (p, rate, exact, bound)
                })
                .filter(|c| c.2 <= relaxed)
                .collect();
            // Bland's rule only chooses among reasonably sized pivots
            let min_rate = BLAND_PIVOT_RATIO * candidates.iter().fold(0.0f64, |a, c| a.max(c.1.abs()));
            let mut leaving: Option<(usize, f64, f64, f64)> = None;
            for &(p, rate, exact, bound) in &candidates {
                if bland && rate.abs() < min_rate {
                    continue;
                }
                let better = match leaving {
                    None => true,
                    Some((lp, lrate, lexact, _)) => {
                        if bland {
                            exact < lexact || (exact == lexact && self.head[p] < self.head[lp])
                        } else {
                            rate.abs() > lrate.abs()
                        }
                    }
                };
                if better {
                    leaving = Some((p, rate, exact, bound));
                }
            }
            let flip = self.hi[q] - self.lo[q];
            let theta_leave = leaving.map_or(f64::INFINITY, |l| l.2);
            if flip.is_infinite() && theta_leave.is_infinite() {
                if !self.etas.is_empty() {
                    // confirm the ray on a fresh factorization
                    self.refactor()?;
                    self.recompute_basics();
                    since_recompute = 0;
                    continue;
                }
                if repair {
                    return Err(Error::Solver("unbounded ray while restoring feasibility".into()));
                }
                return Ok(PhaseEnd::Unbounded);
            }

            let step = flip.min(theta_leave);
            self.x[q] += dir * step;
            for &(p, rate) in &moves {
                self.x[self.head[p]] += step * rate;
            }
            if flip <= theta_leave {
                // bound flip, basis unchanged
                self.status[q] = if dir > 0.0 { ColStatus::Upper } else { ColStatus::Lower };
            } else {
                let (p, _, _, bound) = leaving.expect("finite step has a leaving variable");
                let l = self.head[p];
                self.x[l] = bound;
                self.status[l] = if bound == self.lo[l] { ColStatus::Lower } else { ColStatus::Upper };
                self.status[q] = ColStatus::Basic;
                self.head[p] = q;
                self.etas.push(Eta { pos: p, col: w });
                if self.etas.len() >= REFACTOR_EVERY {
                    self.refactor()?;
                    self.recompute_basics();
                    since_recompute = 0;
                }
            }
        }
    }

    fn max_violation(&self) -> f64 {
        (0..self.lo.len())
            .map(|c| (self.lo[c] - self.x[c]).max(self.x[c] - self.hi[c]))
            .fold(0.0, f64::max)
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        let n = self.n;
        let x = self.x[..n].to_vec();
        let objective = self.lp.objective().iter().zip(&x).map(|(c, x)| c * x).sum();
        let (duals, reduced_costs, basis) = if status == LpStatus::Optimal {
            let y = self.prices();
            let reduced = (0..n).map(|j| self.reduced_cost(j, &y)).collect();
            let has_artificial = self.status[n + self.m..]
                .iter()
                .any(|&s| s == ColStatus::Basic);
            let basis = (!has_artificial).then(|| Basis {
                status: self.status[..n + self.m].to_vec(),
            });
            (y.iter().map(|v| -v).collect(), reduced, basis)
        } else {
            (vec![0.0; self.m], vec![0.0; n], None)
        };
        LpSolution {
            status,
            x,
            duals,
            reduced_costs,
            objective,
            iterations: self.iterations,
            basis,
        }
    }
}
