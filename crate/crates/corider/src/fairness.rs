//! Randomized matchings with a guaranteed service floor.
//!
//! A lottery over deterministic matchings can promise every feasible
//! rider a minimum probability of being served, which no single
//! matching can. The master linear programs here optimize over that
//! lottery space by column generation: the master prices rider
//! coverage, and a matching solve with adjusted prices proposes the
//! next column. The same pricing loop drives the maximum achievable
//! floor, the cheapest lottery at a given floor, per-rider floors, and
//! the exact cost-of-fairness frontier.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{blocking_pairs, solve_matching, DeterministicMatching, MatchOptions};
use crate::rtv::MatchingProblem;
use crate::solver::{solve_lp, LinearProgram, LpSolution, RowOp, Sense, SolverError, EPS_OBJ};

/// Support entries below this probability are treated as numerical zero.
pub const EPS_PROB: f64 = 1e-9;

/// Pricing stops when no matching undercuts the master by more than this.
const PRICE_TOL: f64 = EPS_OBJ;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("fairness level {0} outside [0, 1]")]
    BadTheta(f64),
    #[error("expected {expected} per-rider levels, got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A lottery over deterministic matchings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilisticMatching {
    /// Matchings with their probabilities; entries below [`EPS_PROB`]
    /// are dropped.
    pub support: Vec<(DeterministicMatching, f64)>,
    /// Service probability per rider (zero for infeasible riders).
    pub coverage: Vec<f64>,
    pub expected_cost: f64,
}

impl ProbabilisticMatching {
    pub fn point_mass(m: DeterministicMatching) -> Self {
        ProbabilisticMatching {
            coverage: m.matched.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            expected_cost: m.total_cost,
            support: vec![(m, 1.0)],
        }
    }
}

#[derive(Debug, Clone)]
pub enum FairOutcome {
    Optimal(ProbabilisticMatching),
    /// The requested floor exceeds what any lottery can deliver.
    Infeasible,
}

impl FairOutcome {
    pub fn optimal(self) -> Option<ProbabilisticMatching> {
        match self {
            FairOutcome::Optimal(pm) => Some(pm),
            FairOutcome::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum MaxFairness {
    /// No rider appears in any trip option, so a service floor is moot.
    NoFeasibleRiders,
    Level { theta: f64, lottery: ProbabilisticMatching },
}

impl MaxFairness {
    pub fn theta(&self) -> Option<f64> {
        match self {
            MaxFairness::NoFeasibleRiders => None,
            MaxFairness::Level { theta, .. } => Some(*theta),
        }
    }
}

/// Column pool shared across master solves. Matchings are identified by
/// their assignment vector; duplicates are dropped.
struct Pool {
    cols: Vec<DeterministicMatching>,
    seen: HashSet<Vec<Option<usize>>>,
    option_costs: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
}

impl Pool {
    fn new(problem: &MatchingProblem) -> Self {
        Pool {
            cols: Vec::new(),
            seen: HashSet::new(),
            option_costs: problem
                .drivers
                .iter()
                .map(|d| d.options.iter().map(|o| o.cost).collect())
                .collect(),
            lambdas: problem.riders.iter().map(|r| r.lambda).collect(),
        }
    }

    /// Columns may arrive from the free pricing copy; restore true costs
    /// before pooling.
    fn insert(&mut self, mut m: DeterministicMatching) -> bool {
        m.total_cost = m
            .assigned
            .iter()
            .enumerate()
            .filter_map(|(d, k)| k.map(|k| self.option_costs[d][k]))
            .sum::<f64>()
            + self
                .lambdas
                .iter()
                .zip(&m.matched)
                .filter(|&(_, &hit)| !hit)
                .map(|(l, _)| l)
                .sum::<f64>();
        if self.seen.insert(m.assigned.clone()) {
            self.cols.push(m);
            true
        } else {
            false
        }
    }
}

fn min_cost_matching(problem: &MatchingProblem) -> Result<DeterministicMatching, SolverError> {
    Ok(solve_matching(problem, &MatchOptions::default())?
        .optimal()
        .expect("unconstrained matching is always feasible"))
}

/// Copy of the problem where every trip and fallback is free, so that a
/// matching solve with coverage prices maximizes total price collected.
fn coverage_pricing_problem(problem: &MatchingProblem) -> MatchingProblem {
    let mut p = problem.clone();
    for d in &mut p.drivers {
        for o in &mut d.options {
            o.cost = 0.0;
        }
    }
    for r in &mut p.riders {
        r.lambda = 0.0;
    }
    p
}

/// Propose the matching minimizing true cost minus collected coverage
/// prices. Returns the matching and that priced value.
fn price_against_costs(
    problem: &MatchingProblem,
    prices: &[f64],
) -> Result<(DeterministicMatching, f64), SolverError> {
    let opts = MatchOptions { rider_weights: prices.to_vec(), ..MatchOptions::default() };
    let m = solve_matching(problem, &opts)?
        .optimal()
        .expect("pricing program is always feasible");
    let collected: f64 = m
        .matched
        .iter()
        .enumerate()
        .filter(|&(_, &hit)| hit)
        .map(|(r, _)| prices[r])
        .sum();
    let value = m.total_cost - collected;
    Ok((m, value))
}

/// Propose the matching collecting the most coverage price.
fn price_coverage(
    zero: &MatchingProblem,
    prices: &[f64],
) -> Result<(DeterministicMatching, f64), SolverError> {
    let (m, value) = price_against_costs(zero, prices)?;
    Ok((m, -value))
}

struct MasterSolution {
    p: Vec<f64>,
    rider_duals: Vec<f64>,
    convexity_dual: f64,
    objective: f64,
}

/// Solve the restricted master: cheapest mixture of pooled matchings
/// covering feasible rider `i` with probability at least `rhs[i]`.
fn solve_master(
    pool: &Pool,
    feasible: &[usize],
    rhs: &[f64],
) -> Result<Option<MasterSolution>, SolverError> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    let vars: Vec<usize> = pool
        .cols
        .iter()
        .map(|m| lp.add_var(m.total_cost, 0.0, 1.0))
        .collect();
    for (i, &r) in feasible.iter().enumerate() {
        let coefs: Vec<(usize, f64)> = pool
            .cols
            .iter()
            .zip(&vars)
            .filter(|(m, _)| m.matched[r])
            .map(|(_, &v)| (v, 1.0))
            .collect();
        lp.add_row(RowOp::Ge, rhs[i], &coefs);
    }
    let all: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_row(RowOp::Eq, 1.0, &all);

    let sol: LpSolution = match solve_lp(&lp)? {
        crate::solver::LpOutcome::Optimal(s) => s,
        crate::solver::LpOutcome::Infeasible { .. } => return Ok(None),
        crate::solver::LpOutcome::Unbounded => {
            return Err(SolverError::Invalid("bounded master reported unbounded".into()))
        }
    };
    Ok(Some(MasterSolution {
        p: vars.iter().map(|&v| sol.x[v]).collect(),
        rider_duals: sol.duals[..feasible.len()].to_vec(),
        convexity_dual: sol.duals[feasible.len()],
        objective: sol.objective,
    }))
}

fn lottery_from(pool: &Pool, p: &[f64], n_riders: usize) -> ProbabilisticMatching {
    let mut coverage = vec![0.0; n_riders];
    let mut expected_cost = 0.0;
    for (m, &prob) in pool.cols.iter().zip(p) {
        if prob <= 0.0 {
            continue;
        }
        expected_cost += prob * m.total_cost;
        for r in 0..n_riders {
            if m.matched[r] {
                coverage[r] += prob;
            }
        }
    }
    let support = pool
        .cols
        .iter()
        .zip(p)
        .filter(|&(_, &prob)| prob > EPS_PROB)
        .map(|(m, &prob)| (m.clone(), prob))
        .collect();
    ProbabilisticMatching { support, coverage, expected_cost }
}

/// A certified optimum of the fair master at one floor level.
struct FairPoint {
    theta: f64,
    cost: f64,
    /// Sensitivity of the optimal cost to a uniform floor increase; a
    /// subgradient of the cost curve.
    slope: f64,
}

/// Column generation for the min-cost master at the given per-rider
/// floors. The pool must already certify feasibility (seed it with a
/// lottery meeting the floors); a master infeasibility is then final.
fn generate_min_cost(
    problem: &MatchingProblem,
    pool: &mut Pool,
    feasible: &[usize],
    rhs: &[f64],
) -> Result<Option<(MasterSolution, ProbabilisticMatching)>, SolverError> {
    loop {
        let Some(master) = solve_master(pool, feasible, rhs)? else {
            return Ok(None);
        };
        let mut prices = vec![0.0; problem.riders.len()];
        for (i, &r) in feasible.iter().enumerate() {
            prices[r] = master.rider_duals[i].max(0.0);
        }
        let (proposal, value) = price_against_costs(problem, &prices)?;
        if value - master.convexity_dual >= -PRICE_TOL || !pool.insert(proposal) {
            let lottery = lottery_from(pool, &master.p, problem.riders.len());
            return Ok(Some((master, lottery)));
        }
    }
}

/// Largest floor any lottery can guarantee every feasible rider, with a
/// lottery achieving it.
pub fn max_fairness(problem: &MatchingProblem) -> Result<MaxFairness, FairnessError> {
    let feasible = problem.feasible_riders();
    if feasible.is_empty() {
        return Ok(MaxFairness::NoFeasibleRiders);
    }
    let zero = coverage_pricing_problem(problem);
    let mut pool = Pool::new(problem);
    pool.insert(min_cost_matching(problem)?);

    loop {
        // Master: maximize the floor over mixtures of pooled matchings.
        let mut lp = LinearProgram::new(Sense::Maximize);
        let vars: Vec<usize> = pool.cols.iter().map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
        let floor = lp.add_var(1.0, 0.0, 1.0);
        for &r in &feasible {
            let mut coefs: Vec<(usize, f64)> = pool
                .cols
                .iter()
                .zip(&vars)
                .filter(|(m, _)| m.matched[r])
                .map(|(_, &v)| (v, 1.0))
                .collect();
            coefs.push((floor, -1.0));
            lp.add_row(RowOp::Ge, 0.0, &coefs);
        }
        let all: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
        lp.add_row(RowOp::Eq, 1.0, &all);

        let sol = match solve_lp(&lp).map_err(FairnessError::Solver)? {
            crate::solver::LpOutcome::Optimal(s) => s,
            _ => {
                return Err(FairnessError::Solver(SolverError::Invalid(
                    "floor master must be feasible and bounded".into(),
                )))
            }
        };
        let mut prices = vec![0.0; problem.riders.len()];
        for (i, &r) in feasible.iter().enumerate() {
            prices[r] = (-sol.duals[i]).max(0.0);
        }
        let alpha = sol.duals[feasible.len()];
        let (proposal, collected) = price_coverage(&zero, &prices)?;
        if collected - alpha <= PRICE_TOL || !pool.insert(proposal) {
            let p: Vec<f64> = vars.iter().map(|&v| sol.x[v]).collect();
            let mut lottery = lottery_from(&pool, &p, problem.riders.len());
            // The floor master ignores cost; recompute it for reporting.
            lottery.expected_cost = pool
                .cols
                .iter()
                .zip(&p)
                .map(|(m, &prob)| prob * m.total_cost)
                .sum();
            return Ok(MaxFairness::Level { theta: sol.objective, lottery });
        }
    }
}

/// Cheapest lottery guaranteeing every feasible rider probability at
/// least `theta`. Infeasible exactly when `theta` exceeds the maximum
/// achievable floor.
pub fn min_cost_fair(
    problem: &MatchingProblem,
    theta: f64,
) -> Result<FairOutcome, FairnessError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(FairnessError::BadTheta(theta));
    }
    let mut pool = Pool::new(problem);
    let max = max_fairness(problem)?;
    if let MaxFairness::Level { lottery, .. } = &max {
        for (m, _) in &lottery.support {
            pool.insert(m.clone());
        }
    }
    pool.insert(min_cost_matching(problem)?);
    let feasible = problem.feasible_riders();
    let rhs = vec![theta; feasible.len()];
    match generate_min_cost(problem, &mut pool, &feasible, &rhs)? {
        Some((_, lottery)) => Ok(FairOutcome::Optimal(lottery)),
        None => Ok(FairOutcome::Infeasible),
    }
}

/// Per-rider floors. Feasibility is decided first by maximizing the
/// worst slack over all lotteries; the slack-optimal support then seeds
/// the cost phase.
pub fn min_cost_fair_hetero(
    problem: &MatchingProblem,
    thetas: &[f64],
) -> Result<FairOutcome, FairnessError> {
    if thetas.len() != problem.riders.len() {
        return Err(FairnessError::Arity { expected: problem.riders.len(), got: thetas.len() });
    }
    for &t in thetas {
        if !(0.0..=1.0).contains(&t) {
            return Err(FairnessError::BadTheta(t));
        }
    }
    let feasible = problem.feasible_riders();
    let mut pool = Pool::new(problem);
    pool.insert(min_cost_matching(problem)?);

    if !feasible.is_empty() {
        let zero = coverage_pricing_problem(problem);
        let slack = loop {
            // Master: maximize the worst floor slack. Coverage feeds a
            // per-rider margin variable; the worst margin is the
            // objective. Margins are boxed since every quantity in
            // play lives in [-1, 1].
            let mut lp = LinearProgram::new(Sense::Maximize);
            let vars: Vec<usize> = pool.cols.iter().map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
            let margins: Vec<usize> =
                feasible.iter().map(|_| lp.add_var(0.0, -2.0, 2.0)).collect();
            let worst = lp.add_var(1.0, -2.0, 2.0);
            for (i, &r) in feasible.iter().enumerate() {
                let mut coefs: Vec<(usize, f64)> = pool
                    .cols
                    .iter()
                    .zip(&vars)
                    .filter(|(m, _)| m.matched[r])
                    .map(|(_, &v)| (v, 1.0))
                    .collect();
                coefs.push((margins[i], -1.0));
                lp.add_row(RowOp::Ge, 0.0, &coefs);
                lp.add_row(RowOp::Ge, thetas[r], &[(margins[i], 1.0), (worst, -1.0)]);
            }
            let all: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
            lp.add_row(RowOp::Eq, 1.0, &all);

            let sol = match solve_lp(&lp).map_err(FairnessError::Solver)? {
                crate::solver::LpOutcome::Optimal(s) => s,
                _ => {
                    return Err(FairnessError::Solver(SolverError::Invalid(
                        "slack master must be feasible and bounded".into(),
                    )))
                }
            };
            let mut prices = vec![0.0; problem.riders.len()];
            for (i, &r) in feasible.iter().enumerate() {
                prices[r] = (-sol.duals[2 * i]).max(0.0);
            }
            let alpha = sol.duals[2 * feasible.len()];
            let (proposal, collected) = price_coverage(&zero, &prices)?;
            if collected - alpha <= PRICE_TOL || !pool.insert(proposal) {
                break sol.objective;
            }
        };
        if slack < -1e-9 {
            return Ok(FairOutcome::Infeasible);
        }
    }

    let rhs: Vec<f64> = feasible.iter().map(|&r| thetas[r]).collect();
    match generate_min_cost(problem, &mut pool, &feasible, &rhs)? {
        Some((_, lottery)) => Ok(FairOutcome::Optimal(lottery)),
        None => Ok(FairOutcome::Infeasible),
    }
}

/// The optimal cost of the fair master as a function of the floor:
/// piecewise linear, convex, nondecreasing on `[0, max_theta]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoFrontier {
    /// Corner points (floor, optimal expected cost), floor increasing;
    /// starts at floor 0 with the unconstrained minimum cost.
    pub breakpoints: Vec<(f64, f64)>,
    /// Per-segment slope, one entry fewer than breakpoints.
    pub slopes: Vec<f64>,
    pub max_theta: f64,
    /// True when the probe budget ran out and some segment is a chord
    /// rather than a certified piece.
    pub approximate: bool,
}

impl ParetoFrontier {
    /// Interpolated optimal cost at `theta`, if within the domain.
    pub fn cost_at(&self, theta: f64) -> Option<f64> {
        if theta < -1e-12 || theta > self.max_theta + 1e-12 {
            return None;
        }
        let pts = &self.breakpoints;
        if pts.len() == 1 {
            return Some(pts[0].1);
        }
        let i = pts
            .windows(2)
            .position(|w| theta <= w[1].0 + 1e-12)
            .unwrap_or(pts.len() - 2);
        let (t0, c0) = pts[i];
        let (t1, c1) = pts[i + 1];
        if t1 <= t0 {
            return Some(c0);
        }
        Some(c0 + (c1 - c0) * ((theta - t0) / (t1 - t0)))
    }
}

struct FrontierBuild<'a> {
    problem: &'a MatchingProblem,
    pool: Pool,
    feasible: Vec<usize>,
    budget: usize,
    approximate: bool,
}

impl FrontierBuild<'_> {
    fn solve_at(&mut self, theta: f64) -> Result<FairPoint, FairnessError> {
        let rhs = vec![theta; self.feasible.len()];
        let (master, _) = generate_min_cost(self.problem, &mut self.pool, &self.feasible, &rhs)?
            .ok_or_else(|| {
                FairnessError::Solver(SolverError::Invalid(format!(
                    "master infeasible inside the certified domain at {theta}"
                )))
            })?;
        Ok(FairPoint {
            theta,
            cost: master.objective,
            slope: master.rider_duals.iter().map(|d| d.max(0.0)).sum(),
        })
    }

    /// Emit the interior corner points between two certified points.
    /// The supporting lines at both ends either explain the whole
    /// interval or pin an intersection to probe.
    fn certify(
        &mut self,
        a: &FairPoint,
        b: &FairPoint,
        out: &mut Vec<(f64, f64)>,
    ) -> Result<(), FairnessError> {
        let span = b.theta - a.theta;
        if span <= 1e-10 {
            return Ok(());
        }
        let tol = |v: f64| PRICE_TOL * (1.0 + v.abs());
        let line_a = |t: f64| a.cost + a.slope * (t - a.theta);
        let line_b = |t: f64| b.cost + b.slope * (t - b.theta);
        // Either endpoint's supporting line passing through the other
        // point makes the whole interval one segment.
        if (line_a(b.theta) - b.cost).abs() <= tol(b.cost)
            || (line_b(a.theta) - a.cost).abs() <= tol(a.cost)
        {
            return Ok(());
        }
        let cross = if (a.slope - b.slope).abs() <= 1e-9 * (1.0 + a.slope.abs() + b.slope.abs()) {
            // Parallel distinct supporting lines: degenerate duals.
            // Fall back to the midpoint; the probe still certifies.
            0.5 * (a.theta + b.theta)
        } else {
            ((b.cost - b.slope * b.theta) - (a.cost - a.slope * a.theta)) / (a.slope - b.slope)
        };
        let cross = cross.clamp(a.theta + 0.25 * span * 1e-6, b.theta - 0.25 * span * 1e-6);
        if self.budget == 0 {
            self.approximate = true;
            return Ok(());
        }
        self.budget -= 1;
        let probe = self.solve_at(cross)?;
        if (probe.cost - line_a(cross)).abs() <= tol(probe.cost)
            && (probe.cost - line_b(cross)).abs() <= tol(probe.cost)
        {
            out.push((cross, probe.cost));
            return Ok(());
        }
        self.certify(a, &probe, out)?;
        out.push((probe.theta, probe.cost));
        self.certify(&probe, b, out)
    }
}

/// Trace the exact cost-of-fairness curve on `[0, max_theta]` by
/// bisection with supporting-line certification. `max_iters` caps the
/// number of interior probes.
pub fn pareto_frontier(
    problem: &MatchingProblem,
    max_iters: usize,
) -> Result<ParetoFrontier, FairnessError> {
    let base = min_cost_matching(problem)?;
    let base_cost = base.total_cost;
    let max = max_fairness(problem)?;
    let MaxFairness::Level { theta: theta0, lottery } = max else {
        return Ok(ParetoFrontier {
            breakpoints: vec![(0.0, base_cost)],
            slopes: vec![],
            max_theta: 0.0,
            approximate: false,
        });
    };

    let mut build = FrontierBuild {
        problem,
        pool: Pool::new(problem),
        feasible: problem.feasible_riders(),
        budget: max_iters,
        approximate: false,
    };
    for (m, _) in &lottery.support {
        build.pool.insert(m.clone());
    }
    build.pool.insert(base);

    // The unconstrained end is pinned exactly: a point mass on the
    // min-cost matching, no master roundoff.
    let mut left = build.solve_at(0.0)?;
    left.cost = base_cost;
    let right = match build.solve_at(theta0) {
        Ok(p) => p,
        // The top floor came out of the floor master; back off a hair
        // if its own master balks at reproducing it.
        Err(FairnessError::Solver(_)) => build.solve_at(theta0 - 1e-9)?,
        Err(e) => return Err(e),
    };
    let max_theta = right.theta;

    let mut interior = Vec::new();
    build.certify(&left, &right, &mut interior)?;

    let mut pts = Vec::with_capacity(interior.len() + 2);
    pts.push((left.theta, left.cost));
    pts.extend(interior);
    pts.push((right.theta, right.cost));
    pts.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-10);

    // Merge collinear neighbors so breakpoints are true corners.
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for pt in pts {
        while merged.len() >= 2 {
            let (t0, c0) = merged[merged.len() - 2];
            let (t1, c1) = merged[merged.len() - 1];
            let s0 = (c1 - c0) / (t1 - t0);
            let s1 = (pt.1 - c1) / (pt.0 - t1);
            if (s0 - s1).abs() <= 1e-6 * (1.0 + s0.abs() + s1.abs()) {
                merged.pop();
            } else {
                break;
            }
        }
        merged.push(pt);
    }
    let slopes = merged
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    Ok(ParetoFrontier {
        breakpoints: merged,
        slopes,
        max_theta,
        approximate: build.approximate,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExPostOffender {
    pub support_index: usize,
    pub probability: f64,
    pub blocking: Vec<(usize, Vec<usize>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExPostReport {
    pub offenders: Vec<ExPostOffender>,
}

impl ExPostReport {
    pub fn is_clean(&self) -> bool {
        self.offenders.is_empty()
    }
}

/// Audit every matching the lottery actually plays for blocking pairs.
pub fn check_ex_post_stability(
    problem: &MatchingProblem,
    pm: &ProbabilisticMatching,
) -> ExPostReport {
    let offenders = pm
        .support
        .iter()
        .enumerate()
        .filter(|&(_, (_, p))| *p > EPS_PROB)
        .filter_map(|(i, (m, p))| {
            let blocking = blocking_pairs(problem, m);
            if blocking.is_empty() {
                None
            } else {
                Some(ExPostOffender { support_index: i, probability: *p, blocking })
            }
        })
        .collect();
    ExPostReport { offenders }
}
