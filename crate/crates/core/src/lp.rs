//! Bounded-variable revised simplex with a dense basis inverse.
//!
//! Maximizes `c.x` subject to `lb_i <= a_i.x <= ub_i` per row and
//! `l_j <= x_j <= u_j` per variable. Two phases: artificials are driven
//! out first, then the true objective is optimized. Dantzig pricing with
//! a Bland's-rule fallback once the pivot budget is exceeded.

use crate::error::{Result, SimError};

const TOL_PIVOT: f64 = 1e-9;
const TOL_REDUCED: f64 = 1e-9;
const TOL_FEAS: f64 = 1e-7;
const REFACTOR_EVERY: usize = 200;

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lb: f64,
    pub ub: f64,
}

impl LpRow {
    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        LpRow {
            coeffs,
            lb: rhs,
            ub: rhs,
        }
    }

    pub fn le(coeffs: Vec<(usize, f64)>, ub: f64) -> Self {
        LpRow {
            coeffs,
            lb: f64::NEG_INFINITY,
            ub,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Objective coefficients (maximize), one per structural variable.
    pub obj: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.obj.len()
    }
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    /// Rows that could not be satisfied (phase-1 certificate).
    Infeasible { violated_rows: Vec<usize> },
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

struct Simplex {
    m: usize,
    n_total: usize,
    n_struct: usize,
    // Column-major sparse matrix including slacks and artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj: Vec<f64>,
    status: Vec<VarStatus>,
    values: Vec<f64>,
    basis: Vec<usize>,
    // Dense row-major basis inverse.
    binv: Vec<f64>,
    pivots: usize,
    bland_after: usize,
    pivot_budget: usize,
}

impl Simplex {
    fn new(p: &LpProblem) -> Result<Self> {
        let n = p.n_vars();
        let m = p.rows.len();
        let n_total = n + 2 * m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_total];
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                if j >= n {
                    return Err(SimError::Solver(format!(
                        "row {i} references undeclared variable {j}"
                    )));
                }
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }

        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut obj = vec![0.0; n_total];
        obj[..n].copy_from_slice(&p.obj);

        // Slack for row i: a.x + s = 0 with s in [-ub, -lb].
        for (i, row) in p.rows.iter().enumerate() {
            cols[n + i].push((i, 1.0));
            lower.push(if row.ub.is_finite() { -row.ub } else { f64::NEG_INFINITY });
            upper.push(if row.lb.is_finite() { -row.lb } else { f64::INFINITY });
        }

        // Nonbasic start values for structurals and slacks.
        let mut status = Vec::with_capacity(n_total);
        let mut values = Vec::with_capacity(n_total);
        for j in 0..n + m {
            let (l, u) = (lower[j], upper[j]);
            if l.is_finite() && (!u.is_finite() || l.abs() <= u.abs()) {
                status.push(VarStatus::AtLower);
                values.push(l);
            } else if u.is_finite() {
                status.push(VarStatus::AtUpper);
                values.push(u);
            } else {
                status.push(VarStatus::Free);
                values.push(0.0);
            }
        }

        // Residual per row decides the artificial's sign; artificials form
        // the starting basis.
        let mut residual = vec![0.0; m];
        for j in 0..n + m {
            let v = values[j];
            if v != 0.0 {
                for &(i, a) in &cols[j] {
                    residual[i] += a * v;
                }
            }
        }
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let sigma = if residual[i] > 0.0 { -1.0 } else { 1.0 };
            cols[n + m + i].push((i, sigma));
            lower.push(0.0);
            upper.push(f64::INFINITY);
            status.push(VarStatus::Basic);
            values.push(residual[i].abs());
            basis.push(n + m + i);
        }

        // Basis of artificials is +/-1 diagonal; its inverse likewise.
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            let sigma = if residual[i] > 0.0 { -1.0 } else { 1.0 };
            binv[i * m + i] = sigma;
        }

        let cols_count = n_total;
        Ok(Simplex {
            m,
            n_total,
            n_struct: n,
            cols,
            lower,
            upper,
            obj,
            status,
            values,
            basis,
            binv,
            pivots: 0,
            bland_after: 10 * (m + cols_count),
            pivot_budget: 200 * (m + cols_count) + 20_000,
        })
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(i, v)| y[i] * v).sum()
    }

    /// delta = B^-1 A_j
    fn ftran(&self, j: usize, delta: &mut [f64]) {
        delta.iter_mut().for_each(|d| *d = 0.0);
        for &(i, v) in &self.cols[j] {
            if v != 0.0 {
                for r in 0..self.m {
                    delta[r] += self.binv[r * self.m + i] * v;
                }
            }
        }
    }

    /// y = c_B B^-1 for the given objective.
    fn btran(&self, obj: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let c = obj[b];
            if c != 0.0 {
                for i in 0..self.m {
                    y[i] += c * self.binv[r * self.m + i];
                }
            }
        }
    }

    fn refactorize(&mut self) -> Result<()> {
        let m = self.m;
        // Gauss-Jordan on [B | I].
        let mut mat = vec![0.0; m * m];
        for (r, &b) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[b] {
                mat[i * m + r] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = mat[col * m + col].abs();
            for r in col + 1..m {
                let v = mat[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(SimError::Solver("singular basis during refactorization".into()));
            }
            if piv != col {
                for k in 0..m {
                    mat.swap(col * m + k, piv * m + k);
                    inv.swap(col * m + k, piv * m + k);
                }
            }
            let p = mat[col * m + col];
            for k in 0..m {
                mat[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = mat[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            mat[r * m + k] -= f * mat[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n_total {
            if self.status[j] != VarStatus::Basic {
                let v = self.values[j];
                if v != 0.0 {
                    for &(i, a) in &self.cols[j] {
                        rhs[i] -= a * v;
                    }
                }
            }
        }
        let basis = self.basis.clone();
        for (r, &b) in basis.iter().enumerate() {
            let mut v = 0.0;
            for i in 0..m {
                v += self.binv[r * m + i] * rhs[i];
            }
            self.values[b] = v;
        }
    }

    /// Run simplex iterations on `obj` until optimal/unbounded.
    /// Returns Ok(true) when optimal, Ok(false) when unbounded.
    fn optimize(&mut self, obj: &[f64]) -> Result<bool> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut delta = vec![0.0; m];
        loop {
            self.btran(obj, &mut y);
            let bland = self.pivots > self.bland_after;

            // Entering variable.
            let mut entering: Option<(usize, f64, f64)> = None; // (j, reduced, dir)
            for j in 0..self.n_total {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = obj[j] - self.col_dot(j, &y);
                let dir = match st {
                    VarStatus::AtLower if d > TOL_REDUCED => 1.0,
                    VarStatus::AtUpper if d < -TOL_REDUCED => -1.0,
                    VarStatus::Free if d.abs() > TOL_REDUCED => d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, d, dir));
                    break;
                }
                match entering {
                    Some((_, best, _)) if d.abs() <= best.abs() => {}
                    _ => entering = Some((j, d, dir)),
                }
            }
            let Some((j_in, _, dir)) = entering else {
                return Ok(true);
            };

            self.ftran(j_in, &mut delta);

            // Ratio test: basics move at rate -dir*delta per unit step.
            let own_limit = match dir {
                d if d > 0.0 => self.upper[j_in] - self.values[j_in],
                _ => self.values[j_in] - self.lower[j_in],
            };
            let mut t_max = own_limit;
            let mut leaving: Option<(usize, bool)> = None; // (basis row, hits_upper)
            for r in 0..m {
                let rate = -dir * delta[r];
                let b = self.basis[r];
                if rate < -TOL_PIVOT {
                    if self.lower[b].is_finite() {
                        let room = (self.values[b] - self.lower[b]).max(0.0);
                        let t = room / -rate;
                        if t < t_max {
                            t_max = t;
                            leaving = Some((r, false));
                        }
                    }
                } else if rate > TOL_PIVOT && self.upper[b].is_finite() {
                    let room = (self.upper[b] - self.values[b]).max(0.0);
                    let t = room / rate;
                    if t < t_max {
                        t_max = t;
                        leaving = Some((r, true));
                    }
                }
            }

            if t_max.is_infinite() {
                return Ok(false);
            }
            let t_max = t_max.max(0.0);

            self.pivots += 1;
            if self.pivots > self.pivot_budget {
                return Err(SimError::Solver(format!(
                    "pivot budget exhausted after {} pivots",
                    self.pivots
                )));
            }

            // Apply the step.
            for r in 0..m {
                let rate = -dir * delta[r];
                if rate != 0.0 {
                    let b = self.basis[r];
                    self.values[b] += rate * t_max;
                }
            }
            self.values[j_in] += dir * t_max;

            match leaving {
                None => {
                    // Bound flip.
                    self.status[j_in] = if dir > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.values[j_in] = if dir > 0.0 {
                        self.upper[j_in]
                    } else {
                        self.lower[j_in]
                    };
                }
                Some((row, hits_upper)) => {
                    let j_out = self.basis[row];
                    let piv = delta[row];
                    if piv.abs() < TOL_PIVOT {
                        self.refactorize()?;
                        continue;
                    }
                    self.status[j_out] = if hits_upper {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.values[j_out] = if hits_upper {
                        self.upper[j_out]
                    } else {
                        self.lower[j_out]
                    };
                    self.status[j_in] = VarStatus::Basic;
                    self.basis[row] = j_in;

                    // Pivot update of the dense inverse.
                    let inv_piv = 1.0 / piv;
                    for k in 0..m {
                        self.binv[row * m + k] *= inv_piv;
                    }
                    for r in 0..m {
                        if r != row {
                            let f = delta[r];
                            if f != 0.0 {
                                for k in 0..m {
                                    self.binv[r * m + k] -= f * self.binv[row * m + k];
                                }
                            }
                        }
                    }
                }
            }

            if self.pivots % REFACTOR_EVERY == 0 {
                self.refactorize()?;
            }
        }
    }
}

/// Solve an LP to optimality.
pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    for j in 0..p.n_vars() {
        if p.lower[j] > p.upper[j] + 1e-12 {
            return Ok(LpOutcome::Infeasible { violated_rows: vec![] });
        }
    }
    let mut s = Simplex::new(p)?;
    let m = s.m;
    let n = s.n_struct;

    // Phase 1: minimize the artificial sum.
    let mut phase1_obj = vec![0.0; s.n_total];
    for j in n + m..s.n_total {
        phase1_obj[j] = -1.0;
    }
    if !s.optimize(&phase1_obj)? {
        return Err(SimError::Solver("phase 1 unbounded".into()));
    }
    let infeas: f64 = (n + m..s.n_total).map(|j| s.values[j].max(0.0)).sum();
    if infeas > TOL_FEAS {
        let violated: Vec<usize> = (0..m)
            .filter(|&i| s.values[n + m + i] > TOL_FEAS)
            .collect();
        return Ok(LpOutcome::Infeasible { violated_rows: violated });
    }

    // Fix artificials at zero for phase 2.
    for j in n + m..s.n_total {
        s.lower[j] = 0.0;
        s.upper[j] = 0.0;
        if s.status[j] != VarStatus::Basic {
            s.values[j] = 0.0;
        }
    }

    let phase2_obj = s.obj.clone();
    if !s.optimize(&phase2_obj)? {
        return Ok(LpOutcome::Unbounded);
    }

    let x: Vec<f64> = s.values[..n].to_vec();
    let objective = x.iter().zip(&p.obj).map(|(v, c)| v * c).sum();
    Ok(LpOutcome::Optimal { x, objective })
}
