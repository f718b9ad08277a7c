//! Desk-scale audits of the optimization pipeline: brute-force oracles
//! for trips, matchings, and fair lotteries, measured price-of-X ratios
//! with their worst-case bounds, and CSV run reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::fairness::{min_cost_fair, FairOutcome, FairnessError};
use crate::matching::{
    solve_matching, DeterministicMatching, MatchOptions, MatchOutcome, Objective,
};
use crate::model::{Instance, ModelError, UserRef};
use crate::rtv::{driver_stats, max_applicable_theta, MatchingProblem};
use crate::solver::{solve_lp, LinearProgram, LpOutcome, RowOp, Sense, SolverError};
use crate::trip::{solve_timing, DriverSchedule, Route, Stop, StopKind, TripResult};

/// Largest `drivers + riders` for which full matching enumeration runs.
pub const ENUM_GUARD: usize = 10;
/// Hard cap on candidate assignments any exhaustive search will walk.
pub const ASSIGN_GUARD: f64 = 1e6;
/// Finest step of the wait-grid trip oracle, in minutes.
pub const GRID_STEP: f64 = 0.05;

const TRIP_ORACLE_LIMIT: usize = 3;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cost ratios need a positive unconstrained minimum cost, got {0}")]
    NonPositiveBase(f64),
    #[error("exhaustive search over ~{candidates:.0} assignments exceeds the {limit:.0} cap")]
    TooLarge { candidates: f64, limit: f64 },
    #[error("trip oracle handles at most {limit} riders, got {got}")]
    TripTooBig { got: usize, limit: usize },
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A measured cost ratio against the unconstrained minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioOutcome {
    Ratio(f64),
    /// The constrained side has no solution: the floor exceeds the
    /// achievable maximum, or no stable matching exists.
    NoSolution,
    /// An enumeration guard ruled the measurement out.
    NotComputed,
}

impl RatioOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            RatioOutcome::Ratio(v) => Some(*v),
            _ => None,
        }
    }
}

fn min_cost_matching(problem: &MatchingProblem) -> Result<DeterministicMatching, SolverError> {
    Ok(solve_matching(problem, &MatchOptions::default())?
        .optimal()
        .expect("unconstrained matching is always feasible"))
}

fn positive_base(problem: &MatchingProblem) -> Result<f64, AnalysisError> {
    let base = min_cost_matching(problem)?.total_cost;
    if base > 0.0 {
        Ok(base)
    } else {
        Err(AnalysisError::NonPositiveBase(base))
    }
}

/// Best-case fairness premium: cheapest lottery holding every feasible
/// rider's probability at `theta`, over the unconstrained minimum.
pub fn pof(problem: &MatchingProblem, theta: f64) -> Result<RatioOutcome, AnalysisError> {
    let base = positive_base(problem)?;
    Ok(match min_cost_fair(problem, theta)? {
        FairOutcome::Optimal(pm) => RatioOutcome::Ratio(pm.expected_cost / base),
        FairOutcome::Infeasible => RatioOutcome::NoSolution,
    })
}

/// Every assignment of one option per driver with disjoint rider sets,
/// or `None` when more than `cap` exist.
pub fn enumerate_matchings(
    problem: &MatchingProblem,
    cap: usize,
) -> Option<Vec<DeterministicMatching>> {
    let mut candidates = 1f64;
    for col in &problem.drivers {
        candidates *= col.options.len() as f64;
    }
    if candidates > ASSIGN_GUARD * 10.0 {
        return None;
    }
    let mut choice = vec![0usize; problem.drivers.len()];
    let mut out = Vec::new();
    loop {
        let mut cover = vec![0u8; problem.riders.len()];
        for (d, &k) in choice.iter().enumerate() {
            for &r in &problem.drivers[d].options[k].riders {
                cover[r] += 1;
            }
        }
        if cover.iter().all(|&c| c <= 1) {
            let matched: Vec<bool> = cover.iter().map(|&c| c == 1).collect();
            let total_cost = choice
                .iter()
                .enumerate()
                .map(|(d, &k)| problem.drivers[d].options[k].cost)
                .sum::<f64>()
                + problem
                    .riders
                    .iter()
                    .zip(&matched)
                    .filter(|&(_, &hit)| !hit)
                    .map(|(info, _)| info.lambda)
                    .sum::<f64>();
            out.push(DeterministicMatching {
                assigned: choice.iter().map(|&k| Some(k)).collect(),
                matched,
                total_cost,
            });
            if out.len() > cap {
                return None;
            }
        }
        let mut d = 0;
        loop {
            if d == choice.len() {
                return Some(out);
            }
            choice[d] += 1;
            if choice[d] < problem.drivers[d].options.len() {
                break;
            }
            choice[d] = 0;
            d += 1;
        }
    }
}

/// Cheapest mixture of the enumerated matchings meeting `floors[r]` for
/// every feasible rider `r`. `Ok(None)` when the floors are unreachable.
pub fn oracle_fair_cost(
    problem: &MatchingProblem,
    floors: &[f64],
    cap: usize,
) -> Result<Option<f64>, AnalysisError> {
    assert_eq!(floors.len(), problem.riders.len());
    let cols = enumerate_matchings(problem, cap).ok_or(AnalysisError::TooLarge {
        candidates: cap as f64,
        limit: cap as f64,
    })?;
    let feasible = problem.feasible_riders();
    let rhs: Vec<f64> = feasible.iter().map(|&r| floors[r]).collect();
    full_fair_lp(&cols, &feasible, &rhs, Sense::Minimize)
}

/// Largest floor a lottery over the enumerated matchings can guarantee
/// every feasible rider.
pub fn oracle_max_fairness(problem: &MatchingProblem, cap: usize) -> Result<f64, AnalysisError> {
    let cols = enumerate_matchings(problem, cap).ok_or(AnalysisError::TooLarge {
        candidates: cap as f64,
        limit: cap as f64,
    })?;
    let feasible = problem.feasible_riders();
    if feasible.is_empty() {
        return Ok(0.0);
    }
    let mut lp = LinearProgram::new(Sense::Maximize);
    let vars: Vec<usize> = cols.iter().map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();
    let floor = lp.add_var(1.0, 0.0, 1.0);
    for &r in &feasible {
        let mut coefs: Vec<(usize, f64)> = cols
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
    Ok(solve_lp(&lp)?.optimal().expect("floor program is feasible and bounded").objective)
}

fn full_fair_lp(
    cols: &[DeterministicMatching],
    feasible: &[usize],
    rhs: &[f64],
    sense: Sense,
) -> Result<Option<f64>, AnalysisError> {
    let mut lp = LinearProgram::new(sense);
    let vars: Vec<usize> = cols.iter().map(|m| lp.add_var(m.total_cost, 0.0, 1.0)).collect();
    for (i, &r) in feasible.iter().enumerate() {
        let coefs: Vec<(usize, f64)> = cols
            .iter()
            .zip(&vars)
            .filter(|(m, _)| m.matched[r])
            .map(|(_, &v)| (v, 1.0))
            .collect();
        lp.add_row(RowOp::Ge, rhs[i], &coefs);
    }
    let all: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
    lp.add_row(RowOp::Eq, 1.0, &all);
    match solve_lp(&lp)? {
        LpOutcome::Optimal(s) => Ok(Some(s.objective)),
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded => {
            Err(AnalysisError::Solver(SolverError::Invalid("bounded mixture LP unbounded".into())))
        }
    }
}

/// Worst-case fairness premium: the cost of the dearest cost-minimizing
/// fair solution at any level from `theta` up to the bound-applicable
/// maximum. Fair costs grow convexly with the level, so the worst sits
/// at the top of that range; it is measured there with one mixture LP
/// over the full matching enumeration. `NotComputed` past the guard.
pub fn spof(problem: &MatchingProblem, theta: f64) -> Result<RatioOutcome, AnalysisError> {
    spof_guarded(problem, theta, ENUM_GUARD)
}

pub fn spof_guarded(
    problem: &MatchingProblem,
    theta: f64,
    guard: usize,
) -> Result<RatioOutcome, AnalysisError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(AnalysisError::Fairness(FairnessError::BadTheta(theta)));
    }
    if problem.drivers.len() + problem.riders.len() > guard {
        return Ok(RatioOutcome::NotComputed);
    }
    let Some(cols) = enumerate_matchings(problem, ASSIGN_GUARD as usize) else {
        return Ok(RatioOutcome::NotComputed);
    };
    let base_m = min_cost_matching(problem)?;
    if base_m.total_cost <= 0.0 {
        return Err(AnalysisError::NonPositiveBase(base_m.total_cost));
    }
    let feasible = problem.feasible_riders();
    if feasible.is_empty() {
        return Ok(RatioOutcome::Ratio(1.0));
    }
    let theta0 = oracle_max_fairness(problem, ASSIGN_GUARD as usize)?;
    if theta > theta0 + 1e-9 {
        return Ok(RatioOutcome::NoSolution);
    }
    let stats =
        driver_stats(problem, &base_m.option_indices().expect("no role flexibility here"));
    let level = theta.max(max_applicable_theta(&stats)).min(theta0);
    let rhs = vec![level; feasible.len()];
    match full_fair_lp(&cols, &feasible, &rhs, Sense::Minimize)? {
        Some(cost) => Ok(RatioOutcome::Ratio(cost / base_m.total_cost)),
        None => Ok(RatioOutcome::NoSolution),
    }
}

/// Stability premium: cheapest stable matching cost over the minimum.
/// `NoSolution` reports that no stable matching exists.
pub fn pos(problem: &MatchingProblem) -> Result<RatioOutcome, AnalysisError> {
    let base = positive_base(problem)?;
    let opts = MatchOptions { require_stability: true, ..MatchOptions::default() };
    Ok(match solve_matching(problem, &opts)? {
        MatchOutcome::Optimal(m) => RatioOutcome::Ratio(m.total_cost / base),
        MatchOutcome::Infeasible => RatioOutcome::NoSolution,
    })
}

/// Trip oracle output: the best cost over every stop order timed exactly,
/// and (for at most two riders) an independent wait-grid timing.
#[derive(Debug, Clone)]
pub struct TripOracle {
    pub order: TripResult,
    pub grid_cost: Option<f64>,
}

/// Reference for `trip_cost`: enumerates every capacity-feasible stop
/// order with each pickup before its dropoff. Orders are timed exactly;
/// trips of at most two riders are additionally timed by grid search
/// over the start time and per-pickup waits, refined to [`GRID_STEP`].
pub fn oracle_trip_cost(
    inst: &Instance,
    driver: usize,
    riders: &[usize],
) -> Result<TripOracle, AnalysisError> {
    if riders.len() > TRIP_ORACLE_LIMIT {
        return Err(AnalysisError::TripTooBig { got: riders.len(), limit: TRIP_ORACLE_LIMIT });
    }
    let mut set = riders.to_vec();
    set.sort_unstable();
    set.dedup();
    assert_eq!(set.len(), riders.len(), "rider set has duplicates");

    let cap = inst.drivers[driver].capacity;
    let orders = stop_orders(&set, cap);
    let mut best: Option<DriverSchedule> = None;
    let mut grid_best: Option<f64> = None;
    for middle in &orders {
        let route = Route { driver, middle: middle.clone() };
        if let TripResult::Feasible(s) = solve_timing(inst, &route)? {
            if best.as_ref().map_or(true, |b| s.cost < b.cost) {
                best = Some(s);
            }
        }
        if set.len() <= 2 && !set.is_empty() {
            if let Some(c) = OrderTiming::new(inst, driver, middle).grid_min() {
                grid_best = Some(grid_best.map_or(c, |g: f64| g.min(c)));
            }
        }
    }
    if set.is_empty() {
        grid_best = solo_cost(inst, driver);
    }
    let order = match best {
        Some(s) => TripResult::Feasible(s),
        None => TripResult::Infeasible,
    };
    Ok(TripOracle { order, grid_cost: grid_best })
}

/// Closed-form cost of the driver's solo trip: leave as close to the
/// preferred time as the window allows.
fn solo_cost(inst: &Instance, driver: usize) -> Option<f64> {
    let b = &inst.drivers[driver].base;
    let direct = inst.time(b.origin, b.destination);
    let hi = b.window.latest.min(inst.horizon) - direct;
    if b.window.earliest > hi + 1e-9 {
        return None;
    }
    let t0 = b.preferred.clamp(b.window.earliest, hi);
    Some(b.c_dev * (t0 - b.preferred).abs() + b.c_trl * direct)
}

fn stop_orders(set: &[usize], cap: usize) -> Vec<Vec<Stop>> {
    fn rec(
        set: &[usize],
        cap: usize,
        picked: u32,
        dropped: u32,
        cur: &mut Vec<Stop>,
        out: &mut Vec<Vec<Stop>>,
    ) {
        if cur.len() == 2 * set.len() {
            out.push(cur.clone());
            return;
        }
        let onboard = (picked & !dropped).count_ones() as usize;
        for (i, &r) in set.iter().enumerate() {
            let bit = 1u32 << i;
            if picked & bit == 0 {
                if onboard < cap {
                    cur.push(Stop { rider: r, kind: StopKind::Pickup });
                    rec(set, cap, picked | bit, dropped, cur, out);
                    cur.pop();
                }
            } else if dropped & bit == 0 {
                cur.push(Stop { rider: r, kind: StopKind::Dropoff });
                rec(set, cap, picked, dropped | bit, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(set, cap, 0, 0, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Copy)]
enum WaitChoice {
    Fixed(f64),
    /// Wait until the pickup opens.
    ToEarliest,
    /// Wait until the rider's preferred departure.
    ToPreferred,
}

/// One stop order prepared for grid timing: stop locations, leg times,
/// each participant's pickup/dropoff positions, and which pickups may
/// wait. Pickups chained to the start by zero-length legs share the
/// departure time and cannot wait.
struct OrderTiming<'a> {
    inst: &'a Instance,
    legs: Vec<f64>,
    users: Vec<(UserRef, usize, usize)>,
    waits: Vec<(usize, usize)>,
}

impl<'a> OrderTiming<'a> {
    fn new(inst: &'a Instance, driver: usize, middle: &[Stop]) -> Self {
        let db = &inst.drivers[driver].base;
        let mut locs = vec![db.origin];
        let mut users = vec![(UserRef::Driver(driver), 0usize, middle.len() + 1)];
        let mut pickup_at: Vec<Option<usize>> = vec![None; middle.len() + 2];
        for (k, stop) in middle.iter().enumerate() {
            let rb = &inst.riders[stop.rider].base;
            match stop.kind {
                StopKind::Pickup => {
                    locs.push(rb.origin);
                    users.push((UserRef::Rider(stop.rider), k + 1, usize::MAX));
                    pickup_at[k + 1] = Some(users.len() - 1);
                }
                StopKind::Dropoff => {
                    locs.push(rb.destination);
                    let u = users
                        .iter()
                        .position(|&(who, _, _)| who == UserRef::Rider(stop.rider))
                        .expect("dropoff after pickup");
                    users[u].2 = k + 1;
                }
            }
        }
        locs.push(db.destination);
        let legs: Vec<f64> = locs.windows(2).map(|w| inst.time(w[0], w[1])).collect();
        let mut lead = 0;
        while lead < legs.len() && legs[lead] <= 1e-12 {
            lead += 1;
        }
        let waits: Vec<(usize, usize)> = (1..locs.len() - 1)
            .filter(|&v| v > lead)
            .filter_map(|v| pickup_at[v].map(|u| (v, u)))
            .collect();
        OrderTiming { inst, legs, users, waits }
    }

    fn eval(&self, t0: f64, w: &[WaitChoice]) -> Option<f64> {
        let m = self.legs.len() + 1;
        let mut t = Vec::with_capacity(m);
        t.push(t0);
        let mut wi = 0;
        for v in 1..m {
            let mut time = t[v - 1] + self.legs[v - 1];
            if wi < self.waits.len() && self.waits[wi].0 == v {
                let b = self.inst.base(self.users[self.waits[wi].1].0);
                time = match w[wi] {
                    WaitChoice::Fixed(extra) => (time + extra).max(b.window.earliest),
                    WaitChoice::ToEarliest => time.max(b.window.earliest),
                    WaitChoice::ToPreferred => time.max(b.preferred).max(b.window.earliest),
                };
                wi += 1;
            }
            t.push(time);
        }
        if t[m - 1] > self.inst.horizon + 1e-9 {
            return None;
        }
        let mut cost = 0.0;
        for &(who, pick, drop) in &self.users {
            let b = self.inst.base(who);
            let direct = self.inst.time(b.origin, b.destination);
            if t[pick] + 1e-9 < b.window.earliest
                || t[drop] > b.window.latest + 1e-9
                || t[drop] - t[pick] > direct + b.max_detour + 1e-9
            {
                return None;
            }
            cost += b.c_dev * (t[pick] - b.preferred).abs() + b.c_trl * (t[drop] - t[pick]);
        }
        Some(cost)
    }

    /// Multi-resolution sweep over the start time and pickup waits, with
    /// window-snap candidates folded into every pass.
    fn grid_min(&self) -> Option<f64> {
        let db = self.inst.base(self.users[0].0);
        let t_lo = db.window.earliest.max(0.0);
        let t_hi = self.inst.horizon.min(db.window.latest).max(t_lo);
        let dims = 1 + self.waits.len();
        let spans: Vec<(f64, f64)> =
            std::iter::once((t_lo, t_hi)).chain(self.waits.iter().map(|_| (0.0, self.inst.horizon))).collect();

        let sweep = |centers: &[Vec<f64>]| -> Vec<(f64, Vec<f64>)> {
            // Cartesian product of per-dim candidates, keeping the three
            // cheapest feasible points.
            let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
            let mut idx = vec![0usize; dims];
            loop {
                let point: Vec<f64> = (0..dims).map(|i| centers[i][idx[i]]).collect();
                let w: Vec<WaitChoice> =
                    point[1..].iter().map(|&x| WaitChoice::Fixed(x)).collect();
                if let Some(c) = self.eval(point[0], &w) {
                    best.push((c, point));
                    best.sort_by(|a, b| a.0.total_cmp(&b.0));
                    best.truncate(3);
                }
                let mut i = 0;
                loop {
                    if i == dims {
                        return best;
                    }
                    idx[i] += 1;
                    if idx[i] < centers[i].len() {
                        break;
                    }
                    idx[i] = 0;
                    i += 1;
                }
            }
        };
        let ladder = |n: usize| -> Vec<Vec<f64>> {
            spans
                .iter()
                .map(|&(lo, hi)| (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect())
                .collect()
        };

        let mut seeds = sweep(&ladder(24));
        if seeds.is_empty() {
            seeds = sweep(&ladder(96));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        let coarse_step: Vec<f64> = spans.iter().map(|&(lo, hi)| (hi - lo) / 24.0).collect();
        for (c0, p0) in seeds {
            let (mut c, mut p) = (c0, p0);
            let mut step = coarse_step.clone();
            while step.iter().any(|&s| s > GRID_STEP / 4.0) {
                let centers: Vec<Vec<f64>> = (0..dims)
                    .map(|i| {
                        let (lo, hi) = spans[i];
                        (-4i32..=4)
                            .map(|j| (p[i] + j as f64 * step[i] / 4.0).clamp(lo, hi))
                            .collect()
                    })
                    .collect();
                if let Some((bc, bp)) = sweep(&centers).into_iter().next() {
                    if bc < c {
                        c = bc;
                        p = bp;
                    }
                }
                for s in &mut step {
                    *s /= 4.0;
                }
            }
            if best.as_ref().map_or(true, |(bc, _)| c < *bc) {
                best = Some((c, p));
            }
        }
        let (mut c, p) = best?;

        // Snap pass: align the start with the driver's preferred time and
        // each wait with the rider's window opening or preferred time.
        let t_cands = [p[0], db.preferred.clamp(t_lo, t_hi), t_lo];
        let n_snaps = 3usize.pow(self.waits.len() as u32);
        for &t0 in &t_cands {
            for mask in 0..n_snaps {
                let mut w = Vec::with_capacity(self.waits.len());
                let mut m = mask;
                for i in 0..self.waits.len() {
                    w.push(match m % 3 {
                        0 => WaitChoice::Fixed(p[1 + i]),
                        1 => WaitChoice::ToEarliest,
                        _ => WaitChoice::ToPreferred,
                    });
                    m /= 3;
                }
                if let Some(v) = self.eval(t0, &w) {
                    c = c.min(v);
                }
            }
        }
        Some(c)
    }
}

/// Exhaustive reference for `solve_matching` under the same flags: walks
/// every per-driver option choice (plus the inactive state of role-flex
/// drivers) and keeps the best assignment passing every active check.
pub fn oracle_matching(
    problem: &MatchingProblem,
    opts: &MatchOptions,
) -> Result<MatchOutcome, AnalysisError> {
    let flexed: Vec<Option<usize>> = {
        let mut f = vec![None; problem.drivers.len()];
        for &(d, rm) in &opts.role_flex {
            f[d] = Some(rm);
        }
        f
    };
    let mirror: Vec<bool> = {
        let mut m = vec![false; problem.riders.len()];
        for &(_, rm) in &opts.role_flex {
            m[rm] = true;
        }
        m
    };
    let mut candidates = 1f64;
    for (d, col) in problem.drivers.iter().enumerate() {
        candidates *= (col.options.len() + usize::from(flexed[d].is_some())) as f64;
    }
    if candidates > ASSIGN_GUARD {
        return Err(AnalysisError::TooLarge { candidates, limit: ASSIGN_GUARD });
    }

    let weight = |w: &[f64], i: usize| w.get(i).copied().unwrap_or(0.0);
    let nd = problem.drivers.len();
    let mut choice = vec![0usize; nd];
    let mut best: Option<(f64, DeterministicMatching)> = None;
    'outer: loop {
        'candidate: {
            let assigned: Vec<Option<usize>> = (0..nd)
                .map(|d| (choice[d] < problem.drivers[d].options.len()).then_some(choice[d]))
                .collect();
            let mut cover = vec![0u8; problem.riders.len()];
            for d in 0..nd {
                if let Some(k) = assigned[d] {
                    for &r in &problem.drivers[d].options[k].riders {
                        cover[r] += 1;
                    }
                }
            }
            if cover.iter().any(|&c| c > 1) {
                break 'candidate;
            }
            for d in 0..nd {
                if let Some(rm) = flexed[d] {
                    if assigned[d].is_some() == (cover[rm] == 1) {
                        break 'candidate;
                    }
                }
            }
            // Realized utilities drive the participation and deviation
            // checks below.
            let mut rider_u: Vec<f64> =
                problem.riders.iter().map(|r| r.unmatched_utility).collect();
            for d in 0..nd {
                if let Some(k) = assigned[d] {
                    let opt = &problem.drivers[d].options[k];
                    for (j, &r) in opt.riders.iter().enumerate() {
                        rider_u[r] = opt.rider_utilities[j];
                    }
                }
            }
            if opts.require_ir {
                for d in 0..nd {
                    if let Some(k) = assigned[d] {
                        let opt = &problem.drivers[d].options[k];
                        let solo = problem.drivers[d].options[0].driver_utility;
                        if opt.driver_utility < solo - 1e-9 {
                            break 'candidate;
                        }
                        for (j, &r) in opt.riders.iter().enumerate() {
                            if opt.rider_utilities[j] < problem.riders[r].unmatched_utility - 1e-9
                            {
                                break 'candidate;
                            }
                        }
                    }
                }
            }
            if opts.require_stability {
                for d in 0..nd {
                    let col = &problem.drivers[d].options;
                    for (k, opt) in col.iter().enumerate() {
                        if assigned[d] == Some(k) {
                            continue;
                        }
                        let driver_better = assigned[d]
                            .map_or(false, |cur| col[cur].driver_utility > opt.driver_utility);
                        if driver_better {
                            continue;
                        }
                        let rider_blocks = opt
                            .riders
                            .iter()
                            .enumerate()
                            .any(|(j, &r)| rider_u[r] > opt.rider_utilities[j]);
                        if !rider_blocks {
                            break 'candidate;
                        }
                    }
                }
            }
            let mut score = 0.0;
            let mut total_cost = 0.0;
            for d in 0..nd {
                if let Some(k) = assigned[d] {
                    let opt = &problem.drivers[d].options[k];
                    let base = match opts.objective {
                        Objective::Cost => opt.cost,
                        Objective::Welfare => {
                            -(opt.driver_utility + opt.rider_utilities.iter().sum::<f64>())
                        }
                    };
                    let adj: f64 =
                        opt.riders.iter().map(|&r| weight(&opts.rider_weights, r)).sum();
                    score += base - adj - weight(&opts.driver_weights, d);
                    total_cost += opt.cost;
                }
            }
            for (r, info) in problem.riders.iter().enumerate() {
                if cover[r] == 0 && !mirror[r] {
                    score += match opts.objective {
                        Objective::Cost => info.lambda,
                        Objective::Welfare => -info.unmatched_utility,
                    };
                    total_cost += info.lambda;
                }
            }
            if best.as_ref().map_or(true, |(s, _)| score < *s) {
                let matched: Vec<bool> = cover.iter().map(|&c| c == 1).collect();
                best = Some((score, DeterministicMatching { assigned, matched, total_cost }));
            }
        }
        let mut d = 0;
        loop {
            if d == nd {
                break 'outer;
            }
            choice[d] += 1;
            let span = problem.drivers[d].options.len() + usize::from(flexed[d].is_some());
            if choice[d] < span {
                break;
            }
            choice[d] = 0;
            d += 1;
        }
    }
    Ok(match best {
        Some((_, m)) => MatchOutcome::Optimal(m),
        None => MatchOutcome::Infeasible,
    })
}

/// Cost comparison of the unconstrained optimum against its stable and
/// fair counterparts, with the matching worst-case bounds.
#[derive(Debug, Clone)]
pub struct TradeoffReport {
    pub min_cost: f64,
    /// `None` when no stable matching exists.
    pub stable_cost: Option<f64>,
    pub thetas: Vec<f64>,
    /// Cheapest fair lottery cost per requested level; `None` when the
    /// level is unachievable.
    pub fair_cost: Vec<Option<f64>>,
    pub pof: Vec<RatioOutcome>,
    pub spof: Vec<RatioOutcome>,
    pub pos: RatioOutcome,
    pub pof_bound: Vec<Option<f64>>,
    pub spof_bound: Option<f64>,
    /// Wall-clock seconds per phase.
    pub runtimes: Vec<(String, f64)>,
}

pub fn tradeoff_report(
    problem: &MatchingProblem,
    thetas: &[f64],
) -> Result<TradeoffReport, AnalysisError> {
    let mut runtimes = Vec::new();
    let clock = Instant::now();
    let base_m = min_cost_matching(problem)?;
    let min_cost = base_m.total_cost;
    runtimes.push(("min_cost".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let stable_opts = MatchOptions { require_stability: true, ..MatchOptions::default() };
    let stable_cost = solve_matching(problem, &stable_opts)?.optimal().map(|m| m.total_cost);
    runtimes.push(("stable".to_string(), clock.elapsed().as_secs_f64()));

    let stats =
        driver_stats(problem, &base_m.option_indices().expect("no role flexibility here"));
    let spof_bound_v = crate::rtv::spof_bound(&stats);

    let mut fair_cost = Vec::new();
    let mut pof_v = Vec::new();
    let mut spof_v = Vec::new();
    let mut pof_bound_v = Vec::new();
    let clock = Instant::now();
    for &theta in thetas {
        let fair = match min_cost_fair(problem, theta)? {
            FairOutcome::Optimal(pm) => Some(pm.expected_cost),
            FairOutcome::Infeasible => None,
        };
        fair_cost.push(fair);
        pof_v.push(match fair {
            _ if min_cost <= 0.0 => RatioOutcome::NotComputed,
            Some(c) => RatioOutcome::Ratio(c / min_cost),
            None => RatioOutcome::NoSolution,
        });
        spof_v.push(if min_cost <= 0.0 {
            RatioOutcome::NotComputed
        } else {
            spof(problem, theta)?
        });
        pof_bound_v.push(crate::rtv::pof_bound(&stats, theta));
    }
    runtimes.push(("fair".to_string(), clock.elapsed().as_secs_f64()));

    let pos_v = match (min_cost > 0.0, stable_cost) {
        (false, _) => RatioOutcome::NotComputed,
        (true, Some(c)) => RatioOutcome::Ratio(c / min_cost),
        (true, None) => RatioOutcome::NoSolution,
    };

    let report = TradeoffReport {
        min_cost,
        stable_cost,
        thetas: thetas.to_vec(),
        fair_cost,
        pof: pof_v,
        spof: spof_v,
        pos: pos_v,
        pof_bound: pof_bound_v,
        spof_bound: spof_bound_v,
        runtimes,
    };
    debug_assert!(report
        .pof
        .iter()
        .chain(report.spof.iter())
        .chain(std::iter::once(&report.pos))
        .filter_map(|r| r.value())
        .all(|v| v >= 1.0 - 1e-9));
    Ok(report)
}

/// Driving minutes the matched trips save: each served schedule replaces
/// its participants' separate direct drives with one shared vehicle run.
pub fn reduced_travel_time(inst: &Instance, schedules: &[&DriverSchedule]) -> f64 {
    schedules
        .iter()
        .map(|s| {
            let d = s.route.driver;
            let mut defaults = inst.direct_time(UserRef::Driver(d));
            let mut locs = vec![inst.drivers[d].base.origin];
            for stop in &s.route.middle {
                let rb = &inst.riders[stop.rider].base;
                match stop.kind {
                    StopKind::Pickup => {
                        defaults += inst.direct_time(UserRef::Rider(stop.rider));
                        locs.push(rb.origin);
                    }
                    StopKind::Dropoff => locs.push(rb.destination),
                }
            }
            locs.push(inst.drivers[d].base.destination);
            let vehicle: f64 = locs.windows(2).map(|w| inst.time(w[0], w[1])).sum();
            defaults - vehicle
        })
        .sum()
}

/// One pipeline run for the experiment CSVs.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub drivers: usize,
    pub riders: usize,
    pub matched_riders: usize,
    pub total_cost: f64,
    pub reduced_travel_time: f64,
    pub runtime_s: f64,
}

const RUN_HEADER: [&str; 8] = [
    "label",
    "seed",
    "drivers",
    "riders",
    "matched_riders",
    "total_cost",
    "reduced_travel_time",
    "runtime_s",
];
const SUMMARY_HEADER: [&str; 6] = [
    "label",
    "runs",
    "mean_total_cost",
    "mean_matched_riders",
    "mean_reduced_travel_time",
    "mean_runtime_s",
];

/// Write `runs.csv` (one row per record, input order) and `summary.csv`
/// (per-label means over seeds, labels sorted). Returns both paths.
pub fn write_report(dir: &Path, records: &[RunRecord]) -> Result<(PathBuf, PathBuf), AnalysisError> {
    std::fs::create_dir_all(dir)?;
    let runs_path = dir.join("runs.csv");
    let mut w = csv::Writer::from_path(&runs_path)?;
    w.write_record(RUN_HEADER)?;
    for r in records {
        w.write_record(&[
            r.label.clone(),
            r.seed.to_string(),
            r.drivers.to_string(),
            r.riders.to_string(),
            r.matched_riders.to_string(),
            r.total_cost.to_string(),
            r.reduced_travel_time.to_string(),
            r.runtime_s.to_string(),
        ])?;
    }
    w.flush()?;

    let mut labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record(SUMMARY_HEADER)?;
    for label in labels {
        let group: Vec<&RunRecord> = records.iter().filter(|r| r.label == label).collect();
        let n = group.len() as f64;
        let mean = |f: &dyn Fn(&RunRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        w.write_record(&[
            label.to_string(),
            group.len().to_string(),
            mean(&|r| r.total_cost).to_string(),
            mean(&|r| r.matched_riders as f64).to_string(),
            mean(&|r| r.reduced_travel_time).to_string(),
            mean(&|r| r.runtime_s).to_string(),
        ])?;
    }
    w.flush()?;
    Ok((runs_path, summary_path))
}
