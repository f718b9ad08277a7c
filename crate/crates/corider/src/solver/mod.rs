//! Exact linear and binary-integer programming on dense tableaus.
//!
//! Scope is deliberately small: the matching, trip-timing, and fairness
//! problems in this crate produce LPs with at most a few thousand variables,
//! so a dense bounded-variable simplex with Bland's anti-cycling rule is
//! plenty and keeps every pivot auditable. Binary programs run through
//! depth-first branch and bound on the LP relaxation.
//!
//! Determinism: identical programs yield identical solutions, pivot for
//! pivot. Entering variables are chosen by lowest index, leaving variables
//! break ties by lowest index, and branching fixes the lowest-index most
//! fractional variable to 1 first.

mod branch;
mod simplex;

pub use branch::{solve_bip, BinaryProgram, BipOutcome, BipSolution, DEFAULT_NODE_LIMIT};
pub use simplex::solve_lp;

use thiserror::Error;

/// Feasibility tolerance: a point is feasible when every row and bound is
/// violated by at most this much.
pub const EPS_FEAS: f64 = 1e-7;
/// Objective tolerance for comparing solver results against references.
pub const EPS_OBJ: f64 = 1e-6;
/// A relaxation value within this distance of 0 or 1 counts as integral.
pub const EPS_INT: f64 = 1e-6;
/// Pivot magnitude threshold; smaller tableau entries are treated as zero.
pub(crate) const EPS_PIVOT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed program: {0}")]
    Invalid(String),
    #[error("simplex iteration limit reached after {0} pivots")]
    IterationLimit(u64),
    #[error("branch and bound node limit reached after {0} nodes")]
    NodeLimit(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Row comparator in a constraint `a.x (op) rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub op: RowOp,
    pub rhs: f64,
}

/// A linear program over bounded continuous variables.
///
/// Bounds may be infinite on either side. Rows hold sparse coefficient
/// lists; duplicate variable entries in one row are summed.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    obj: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            obj: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds a variable with objective coefficient `obj` and bounds
    /// `[lower, upper]`; returns its index.
    pub fn add_var(&mut self, obj: f64, lower: f64, upper: f64) -> usize {
        self.obj.push(obj);
        self.lower.push(lower);
        self.upper.push(upper);
        self.obj.len() - 1
    }

    pub fn add_row(&mut self, op: RowOp, rhs: f64, coefs: &[(usize, f64)]) {
        self.rows.push(Row {
            coefs: coefs.to_vec(),
            op,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.obj
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub(crate) fn validate(&self) -> Result<(), SolverError> {
        for (j, &c) in self.obj.iter().enumerate() {
            if !c.is_finite() {
                return Err(SolverError::Invalid(format!(
                    "objective coefficient of variable {j} is not finite"
                )));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(SolverError::Invalid(format!("variable {j} has NaN bound")));
            }
            if self.lower[j] > self.upper[j] {
                return Err(SolverError::Invalid(format!(
                    "variable {j} has empty bound interval [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(SolverError::Invalid(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coefs {
                if j >= self.num_vars() {
                    return Err(SolverError::Invalid(format!(
                        "row {i} references unknown variable {j}"
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::Invalid(format!(
                        "row {i} has non-finite coefficient on variable {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Row activity `a.x` for each row at the point `x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.coefs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Objective value of `x` under the declared sense.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// No feasible point. Carries the phase-1 duals as a certificate: a
    /// combination of the rows proving emptiness.
    Infeasible { certificate: Vec<f64> },
    Unbounded,
}

/// An optimal basic solution together with its dual values.
///
/// `duals[i]` is the sensitivity of the optimal objective to the rhs of row
/// `i` (in the declared sense), so for a minimization problem a `Ge` row has
/// a nonnegative dual and an `Le` row a nonpositive one. `reduced_costs[j]`
/// is the sensitivity to variable `j`'s active bound.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub pivots: u64,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible { .. })
    }
}

/// Checks that `sol` is primal feasible, dual feasible, complementary, and
/// that the primal and dual objectives agree. Returns the list of violations
/// so tests can print them.
pub fn certify_optimal(lp: &LinearProgram, sol: &LpSolution) -> Vec<String> {
    let mut bad = Vec::new();
    let n = lp.num_vars();
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    if sol.x.len() != n || sol.duals.len() != lp.num_rows() {
        bad.push("solution shape mismatch".to_string());
        return bad;
    }

    let scale = 1.0 + sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (j, &v) in sol.x.iter().enumerate() {
        if v < lp.lower[j] - EPS_FEAS * scale || v > lp.upper[j] + EPS_FEAS * scale {
            bad.push(format!("x[{j}] = {v} outside [{}, {}]", lp.lower[j], lp.upper[j]));
        }
    }
    let acts = lp.activities(&sol.x);
    for (i, row) in lp.rows.iter().enumerate() {
        let slack = row.rhs - acts[i];
        let tol = EPS_FEAS * (1.0 + row.rhs.abs()) * scale;
        let violated = match row.op {
            RowOp::Le => slack < -tol,
            RowOp::Ge => slack > tol,
            RowOp::Eq => slack.abs() > tol,
        };
        if violated {
            bad.push(format!("row {i} violated: activity {} vs rhs {}", acts[i], row.rhs));
        }
        // Complementary slackness: an inactive inequality carries no dual.
        if !matches!(row.op, RowOp::Eq) && slack.abs() > tol && sol.duals[i].abs() > EPS_OBJ {
            bad.push(format!(
                "row {i} slack {slack} but dual {} is nonzero",
                sol.duals[i]
            ));
        }
        // Dual sign: for the minimized form, Ge rows have y >= 0, Le rows y <= 0.
        let y_min = sign * sol.duals[i];
        match row.op {
            RowOp::Ge if y_min < -EPS_OBJ => {
                bad.push(format!("row {i} (Ge) has wrong-signed dual {}", sol.duals[i]))
            }
            RowOp::Le if y_min > EPS_OBJ => {
                bad.push(format!("row {i} (Le) has wrong-signed dual {}", sol.duals[i]))
            }
            _ => {}
        }
    }

    // Reduced costs recomputed from the returned duals, then used for dual
    // feasibility, complementarity with the bounds, and the dual objective.
    let mut d = vec![0.0; n];
    for (j, dj) in d.iter_mut().enumerate() {
        *dj = sign * lp.obj[j];
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let y = sign * sol.duals[i];
        for &(j, a) in &row.coefs {
            d[j] -= y * a;
        }
    }
    let mut dual_obj: f64 = lp
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| sign * sol.duals[i] * row.rhs)
        .sum();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let fixed = hi - lo <= EPS_FEAS;
        if fixed {
            // A pinned variable absorbs any reduced cost.
            dual_obj += d[j] * sol.x[j];
            continue;
        }
        let at_lower = sol.x[j] - lo <= EPS_FEAS * scale;
        let at_upper = hi - sol.x[j] <= EPS_FEAS * scale;
        let tol = EPS_OBJ * (1.0 + d[j].abs());
        if !at_lower && !at_upper && d[j].abs() > tol {
            bad.push(format!("interior x[{j}] has reduced cost {}", d[j]));
        }
        if at_lower && !at_upper && d[j] < -EPS_OBJ {
            bad.push(format!("x[{j}] at lower bound with reduced cost {}", d[j]));
        }
        if at_upper && !at_lower && d[j] > EPS_OBJ {
            bad.push(format!("x[{j}] at upper bound with reduced cost {}", d[j]));
        }
        if d[j] > 0.0 && lo.is_finite() {
            dual_obj += d[j] * lo;
        } else if d[j] < 0.0 && hi.is_finite() {
            dual_obj += d[j] * hi;
        } else if d[j].abs() > EPS_OBJ {
            bad.push(format!(
                "x[{j}] unbounded in the direction of reduced cost {}",
                d[j]
            ));
        }
    }
    let primal_obj = sign * sol.objective;
    if (primal_obj - dual_obj).abs() > EPS_OBJ * (1.0 + primal_obj.abs()) {
        bad.push(format!(
            "duality gap: primal {primal_obj} vs dual {dual_obj} (minimized form)"
        ));
    }
    let reported = lp.objective_value(&sol.x);
    if (reported - sol.objective).abs() > EPS_OBJ * (1.0 + reported.abs()) {
        bad.push(format!(
            "objective {} does not match c.x = {reported}",
            sol.objective
        ));
    }
    bad
}

#[cfg(test)]
mod tests;
