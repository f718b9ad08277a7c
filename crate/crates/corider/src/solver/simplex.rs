//! Two-phase primal simplex on a dense tableau with bounded variables.
//!
//! Variables live in `[lower, upper]` directly; nonbasic variables sit at a
//! finite bound, so box constraints never become extra rows. Every row gets
//! an artificial column. The artificials form the starting basis, and after
//! phase 1 they are pinned to zero but kept in the tableau: the final
//! reduced cost of row `i`'s artificial is `-y_i`, which is how dual values
//! are read off without tracking an explicit basis inverse.

use super::{
    LinearProgram, LpOutcome, LpSolution, RowOp, Sense, SolverError, EPS_FEAS, EPS_PIVOT,
};

/// Optimality tolerance on reduced costs during pivoting.
const EPS_D: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
}

/// How a user variable maps onto internal columns. Internal columns always
/// have a finite lower bound.
enum VarMap {
    /// Same orientation, finite lower bound.
    Keep(usize),
    /// `x = upper - t` for variables bounded only above.
    Mirror(usize),
    /// `x = p - m` for free variables.
    Split(usize, usize),
}

struct Tableau {
    m: usize,
    ncols: usize,
    a: Vec<Vec<f64>>,
    /// Value of the basic variable of each row.
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Maintained reduced-cost rows for phase 1 and phase 2.
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// First artificial column; artificial for row i is `art0 + i`.
    art0: usize,
    pivots: u64,
    max_pivots: u64,
}

enum StepResult {
    Optimal,
    Unbounded,
    Progress,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::Basic => {
                let r = self.basis.iter().position(|&b| b == j).expect("basic col");
                self.xb[r]
            }
            ColState::AtLower => self.lo[j],
            ColState::AtUpper => self.hi[j],
        }
    }

    /// One simplex step under Bland's rule for the given phase.
    fn step(&mut self, phase1: bool) -> Result<StepResult, SolverError> {
        let d = if phase1 { &self.d1 } else { &self.d2 };
        let mut entering = None;
        for j in 0..self.ncols {
            if self.hi[j] <= self.lo[j] {
                continue;
            }
            match self.state[j] {
                ColState::Basic => continue,
                ColState::AtLower if d[j] < -EPS_D => {
                    entering = Some((j, 1.0));
                }
                ColState::AtUpper if d[j] > EPS_D => {
                    entering = Some((j, -1.0));
                }
                _ => continue,
            }
            if entering.is_some() {
                break;
            }
        }
        let Some((j, dir)) = entering else {
            return Ok(StepResult::Optimal);
        };

        // Ratio test: how far can x_j move before it or a basic variable
        // hits a bound. Ties pick the leaving variable with the lowest
        // column index (Bland).
        let mut t_best = self.hi[j] - self.lo[j]; // may be +inf
        let mut leave: Option<usize> = None; // row index
        for r in 0..self.m {
            let g = dir * self.a[r][j];
            let k = self.basis[r];
            let limit = if g > EPS_PIVOT {
                if self.lo[k].is_finite() {
                    (self.xb[r] - self.lo[k]).max(0.0) / g
                } else {
                    continue;
                }
            } else if g < -EPS_PIVOT {
                if self.hi[k].is_finite() {
                    (self.hi[k] - self.xb[r]).max(0.0) / -g
                } else {
                    continue;
                }
            } else {
                continue;
            };
            let better = match leave {
                None => limit < t_best - 1e-12,
                Some(lr) => {
                    limit < t_best - 1e-12
                        || (limit < t_best + 1e-12 && self.basis[r] < self.basis[lr])
                }
            };
            if better {
                t_best = limit.min(t_best);
                leave = Some(r);
            }
        }

        if t_best.is_infinite() {
            return Ok(StepResult::Unbounded);
        }
        self.pivots += 1;
        if self.pivots > self.max_pivots {
            return Err(SolverError::IterationLimit(self.pivots));
        }

        match leave {
            None => {
                // Bound flip: x_j crosses its whole interval, basis unchanged.
                let t = t_best;
                for r in 0..self.m {
                    self.xb[r] -= dir * t * self.a[r][j];
                }
                self.state[j] = match self.state[j] {
                    ColState::AtLower => ColState::AtUpper,
                    ColState::AtUpper => ColState::AtLower,
                    ColState::Basic => unreachable!(),
                };
                Ok(StepResult::Progress)
            }
            Some(rp) => {
                let t = t_best;
                let entering_value = match self.state[j] {
                    ColState::AtLower => self.lo[j] + t,
                    ColState::AtUpper => self.hi[j] - t,
                    ColState::Basic => unreachable!(),
                };
                let k = self.basis[rp];
                for r in 0..self.m {
                    self.xb[r] -= dir * t * self.a[r][j];
                }
                // The leaving variable lands on whichever of its bounds the
                // movement pushed it toward.
                self.state[k] = if dir * self.a[rp][j] > 0.0 {
                    ColState::AtLower
                } else {
                    ColState::AtUpper
                };
                self.pivot(rp, j, entering_value);
                Ok(StepResult::Progress)
            }
        }
    }

    /// Row-reduces column `j` to a unit column with its 1 in row `rp` and
    /// installs `j` as that row's basic variable at `value`.
    fn pivot(&mut self, rp: usize, j: usize, value: f64) {
        let piv = self.a[rp][j];
        debug_assert!(piv.abs() > EPS_PIVOT);
        let inv = 1.0 / piv;
        for x in self.a[rp].iter_mut() {
            *x *= inv;
        }
        let prow = self.a[rp].clone();
        for r in 0..self.m {
            if r == rp {
                continue;
            }
            let f = self.a[r][j];
            if f.abs() > 0.0 {
                for (x, p) in self.a[r].iter_mut().zip(&prow) {
                    *x -= f * p;
                }
                self.a[r][j] = 0.0;
            }
        }
        for dd in [&mut self.d1, &mut self.d2] {
            let f = dd[j];
            if f.abs() > 0.0 {
                for (x, p) in dd.iter_mut().zip(&prow) {
                    *x -= f * p;
                }
                dd[j] = 0.0;
            }
        }
        self.basis[rp] = j;
        self.state[j] = ColState::Basic;
        self.xb[rp] = value;
    }

    fn run(&mut self, phase1: bool) -> Result<StepResult, SolverError> {
        loop {
            match self.step(phase1)? {
                StepResult::Progress => continue,
                other => return Ok(other),
            }
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, SolverError> {
    lp.validate()?;
    let n_user = lp.num_vars();
    let m = lp.num_rows();
    let minimize = lp.sense == Sense::Minimize;
    let sense_sign = if minimize { 1.0 } else { -1.0 };

    // Map user variables to internal columns with finite lower bounds.
    let mut maps = Vec::with_capacity(n_user);
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut c2 = Vec::new();
    for j in 0..n_user {
        let (l, u) = lp.bounds(j);
        let cost = sense_sign * lp.objective()[j];
        if l.is_finite() {
            maps.push(VarMap::Keep(lo.len()));
            lo.push(l);
            hi.push(u);
            c2.push(cost);
        } else if u.is_finite() {
            maps.push(VarMap::Mirror(lo.len()));
            lo.push(0.0);
            hi.push(f64::INFINITY);
            c2.push(-cost);
        } else {
            maps.push(VarMap::Split(lo.len(), lo.len() + 1));
            lo.push(0.0);
            hi.push(f64::INFINITY);
            c2.push(cost);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            c2.push(-cost);
        }
    }
    let n_struct = lo.len();

    // Dense equality rows over structural + slack columns, all terms of a
    // row accumulated (duplicate coefficients sum).
    let nslack = lp.rows().iter().filter(|r| r.op != RowOp::Eq).count();
    let ncols = n_struct + nslack + m;
    let art0 = n_struct + nslack;
    let mut a = vec![vec![0.0; ncols]; m];
    let mut rhs = vec![0.0; m];
    let mut slack_at = n_struct;
    for (i, row) in lp.rows().iter().enumerate() {
        rhs[i] = row.rhs;
        for &(uj, coef) in &row.coefs {
            match maps[uj] {
                VarMap::Keep(cj) => a[i][cj] += coef,
                VarMap::Mirror(cj) => {
                    // x = u - t: contribute coef*u to the constant side.
                    a[i][cj] -= coef;
                    rhs[i] -= coef * lp.bounds(uj).1;
                }
                VarMap::Split(pj, mj) => {
                    a[i][pj] += coef;
                    a[i][mj] -= coef;
                }
            }
        }
        if row.op != RowOp::Eq {
            a[i][slack_at] = if row.op == RowOp::Le { 1.0 } else { -1.0 };
            slack_at += 1;
        }
    }
    for _ in n_struct..art0 {
        lo.push(0.0);
        hi.push(f64::INFINITY);
        c2.push(0.0);
    }

    // Start with every column at its lower bound; scale rows so residuals
    // are nonnegative, then cover each residual with an artificial.
    let mut sigma = vec![1.0; m];
    let mut xb = vec![0.0; m];
    for i in 0..m {
        let mut resid = rhs[i];
        for j in 0..art0 {
            resid -= a[i][j] * lo[j];
        }
        if resid < 0.0 {
            sigma[i] = -1.0;
            for x in a[i].iter_mut() {
                *x = -*x;
            }
            resid = -resid;
        }
        a[i][art0 + i] = 1.0;
        xb[i] = resid;
    }
    for _ in 0..m {
        lo.push(0.0);
        hi.push(f64::INFINITY);
        c2.push(0.0);
    }

    // Reduced costs for the artificial basis: d = c - colsum(A) in phase 1
    // (artificial costs are 1), d = c2 in phase 2 (artificial costs are 0).
    let mut d1 = vec![0.0; ncols];
    for j in 0..ncols {
        let colsum: f64 = (0..m).map(|i| a[i][j]).sum();
        d1[j] = if j >= art0 { 1.0 - colsum } else { -colsum };
    }
    let d2 = c2.clone();

    let mut state = vec![ColState::AtLower; ncols];
    let basis: Vec<usize> = (0..m).map(|i| art0 + i).collect();
    for &b in &basis {
        state[b] = ColState::Basic;
    }
    let mut tab = Tableau {
        m,
        ncols,
        a,
        xb,
        basis,
        state,
        lo,
        hi,
        d1,
        d2,
        art0,
        pivots: 0,
        max_pivots: 200_000 + 200 * (m as u64 + ncols as u64),
    };

    match tab.run(true)? {
        StepResult::Unbounded => {
            // Phase 1 minimizes a sum of nonnegative variables.
            return Err(SolverError::Invalid(
                "phase 1 reported unbounded".to_string(),
            ));
        }
        StepResult::Optimal => {}
        StepResult::Progress => unreachable!(),
    }
    let infeas: f64 = (0..m)
        .filter(|&r| tab.basis[r] >= tab.art0)
        .map(|r| tab.xb[r])
        .sum();
    let rhs_scale = 1.0 + rhs.iter().fold(0.0f64, |s, b| s.max(b.abs()));
    if infeas > EPS_FEAS * rhs_scale {
        let certificate: Vec<f64> = (0..m)
            .map(|i| -sigma[i] * tab.d1[tab.art0 + i])
            .collect();
        return Ok(LpOutcome::Infeasible { certificate });
    }

    // Pin artificials at zero and push any still in the basis back out.
    for i in 0..m {
        let j = tab.art0 + i;
        tab.hi[j] = 0.0;
    }
    for r in 0..m {
        if tab.basis[r] < tab.art0 {
            continue;
        }
        let Some(col) = (0..tab.art0).find(|&j| {
            tab.state[j] != ColState::Basic && tab.a[r][j].abs() > 1e-7
        }) else {
            continue; // redundant row; its artificial stays basic at zero
        };
        let k = tab.basis[r];
        tab.state[k] = ColState::AtLower;
        let v = tab.value(col);
        tab.pivot(r, col, v);
    }

    match tab.run(false)? {
        StepResult::Unbounded => return Ok(LpOutcome::Unbounded),
        StepResult::Optimal => {}
        StepResult::Progress => unreachable!(),
    }

    // Recover user-space values, duals, and reduced costs.
    let mut x = vec![0.0; n_user];
    for (uj, map) in maps.iter().enumerate() {
        x[uj] = match *map {
            VarMap::Keep(cj) => tab.value(cj),
            VarMap::Mirror(cj) => lp.bounds(uj).1 - tab.value(cj),
            VarMap::Split(pj, mj) => tab.value(pj) - tab.value(mj),
        };
    }
    let duals: Vec<f64> = (0..m)
        .map(|i| sense_sign * -sigma[i] * tab.d2[tab.art0 + i])
        .collect();
    let reduced_costs: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Keep(cj) => sense_sign * tab.d2[cj],
            VarMap::Mirror(cj) => sense_sign * -tab.d2[cj],
            VarMap::Split(pj, _) => sense_sign * tab.d2[pj],
        })
        .collect();
    let objective = lp.objective_value(&x);
    Ok(LpOutcome::Optimal(LpSolution {
        x,
        objective,
        duals,
        reduced_costs,
        pivots: tab.pivots,
    }))
}
