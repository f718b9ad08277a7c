//! Depth-first branch and bound for pure binary programs.
//!
//! Each node solves the LP relaxation with branching decisions applied as
//! bound fixings. Branching picks the lowest-index variable whose value is
//! farthest from integral and explores the fix-to-1 child first, which
//! favors matchings that actually assign trips.

use super::{
    solve_lp, LinearProgram, LpOutcome, Row, RowOp, Sense, SolverError, EPS_FEAS, EPS_INT,
};

#[derive(Debug, Clone)]
pub struct BinaryProgram {
    pub sense: Sense,
    obj: Vec<f64>,
    rows: Vec<Row>,
}

impl BinaryProgram {
    pub fn new(sense: Sense) -> Self {
        BinaryProgram {
            sense,
            obj: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, obj: f64) -> usize {
        self.obj.push(obj);
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

    pub fn objective_value(&self, x: &[bool]) -> f64 {
        self.obj
            .iter()
            .zip(x)
            .map(|(c, &v)| if v { *c } else { 0.0 })
            .sum()
    }

    pub fn satisfied(&self, x: &[bool]) -> bool {
        self.rows.iter().all(|row| {
            let act: f64 = row
                .coefs
                .iter()
                .map(|&(j, a)| if x[j] { a } else { 0.0 })
                .sum();
            let tol = EPS_FEAS * (1.0 + row.rhs.abs());
            match row.op {
                RowOp::Le => act <= row.rhs + tol,
                RowOp::Ge => act >= row.rhs - tol,
                RowOp::Eq => (act - row.rhs).abs() <= tol,
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct BipSolution {
    pub x: Vec<bool>,
    pub objective: f64,
    pub nodes: u64,
}

#[derive(Debug, Clone)]
pub enum BipOutcome {
    Optimal(BipSolution),
    Infeasible,
}

impl BipOutcome {
    pub fn optimal(self) -> Option<BipSolution> {
        match self {
            BipOutcome::Optimal(s) => Some(s),
            BipOutcome::Infeasible => None,
        }
    }
}

struct Search<'a> {
    bp: &'a BinaryProgram,
    lp: LinearProgram,
    incumbent: Option<(f64, Vec<bool>)>,
    nodes: u64,
    node_limit: u64,
}

pub const DEFAULT_NODE_LIMIT: u64 = 2_000_000;

pub fn solve_bip(bp: &BinaryProgram, node_limit: u64) -> Result<BipOutcome, SolverError> {
    // Internally minimize; flip the objective back at the end.
    let flip = bp.sense == Sense::Maximize;
    let mut lp = LinearProgram::new(Sense::Minimize);
    for &c in &bp.obj {
        lp.add_var(if flip { -c } else { c }, 0.0, 1.0);
    }
    for row in &bp.rows {
        lp.add_row(row.op, row.rhs, &row.coefs);
    }
    let mut search = Search {
        bp,
        lp,
        incumbent: None,
        nodes: 0,
        node_limit,
    };
    search.node(&mut vec![None; bp.num_vars()])?;
    Ok(match search.incumbent {
        None => BipOutcome::Infeasible,
        Some((_, x)) => {
            let objective = bp.objective_value(&x);
            BipOutcome::Optimal(BipSolution {
                x,
                objective,
                nodes: search.nodes,
            })
        }
    })
}

impl Search<'_> {
    fn node(&mut self, fixed: &mut Vec<Option<bool>>) -> Result<(), SolverError> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(SolverError::NodeLimit(self.nodes));
        }
        let outcome = solve_lp(&self.lp)?;
        let sol = match outcome {
            LpOutcome::Infeasible { .. } => return Ok(()),
            LpOutcome::Unbounded => {
                return Err(SolverError::Invalid(
                    "binary relaxation reported unbounded".to_string(),
                ))
            }
            LpOutcome::Optimal(s) => s,
        };
        if let Some((best, _)) = &self.incumbent {
            if sol.objective >= best - 1e-9 {
                return Ok(());
            }
        }

        // Most fractional unfixed variable, lowest index on ties.
        let mut branch: Option<(usize, f64)> = None;
        for (j, &v) in sol.x.iter().enumerate() {
            if fixed[j].is_some() {
                continue;
            }
            let dist = v.min(1.0 - v).max(0.0);
            if dist <= EPS_INT {
                continue;
            }
            match branch {
                Some((_, d)) if dist <= d + 1e-12 => {}
                _ => branch = Some((j, dist)),
            }
        }

        match branch {
            None => {
                let x: Vec<bool> = sol
                    .x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| fixed[j].unwrap_or(v > 0.5))
                    .collect();
                if self.bp.satisfied(&x) {
                    let obj = self
                        .bp
                        .obj
                        .iter()
                        .zip(&x)
                        .map(|(c, &v)| if v { *c } else { 0.0 })
                        .sum::<f64>();
                    let obj_min = if self.bp.sense == Sense::Maximize {
                        -obj
                    } else {
                        obj
                    };
                    let better = match &self.incumbent {
                        None => true,
                        Some((best, _)) => obj_min < best - 1e-12,
                    };
                    if better {
                        self.incumbent = Some((obj_min, x));
                    }
                } else if let Some(j) = (0..self.bp.num_vars()).find(|&j| fixed[j].is_none()) {
                    // Rounding broke a row: force a decision on some free
                    // variable instead of accepting the point.
                    self.branch_on(j, fixed)?;
                }
                Ok(())
            }
            Some((j, _)) => self.branch_on(j, fixed),
        }
    }

    fn branch_on(&mut self, j: usize, fixed: &mut Vec<Option<bool>>) -> Result<(), SolverError> {
        for value in [true, false] {
            fixed[j] = Some(value);
            let v = if value { 1.0 } else { 0.0 };
            self.set_bounds(j, v, v);
            self.node(fixed)?;
        }
        fixed[j] = None;
        self.set_bounds(j, 0.0, 1.0);
        Ok(())
    }

    fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lp.lower[j] = lo;
        self.lp.upper[j] = hi;
    }
}
