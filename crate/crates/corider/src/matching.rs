//! Deterministic matching of riders to driver trips.
//!
//! Each driver takes exactly one priced trip option (possibly the solo
//! drive) and each rider is covered at most once; leaving a rider out
//! costs their fallback penalty. The assignment is solved exactly as a
//! binary program, one independent component at a time. Participation
//! and stability constraints, role flexibility, and price adjustments
//! bolt onto the same core program.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rtv::{Component, MatchingProblem};
use crate::solver::{solve_bip, BinaryProgram, BipOutcome, RowOp, Sense, SolverError, DEFAULT_NODE_LIMIT};

/// Utility comparisons treat anything within this slack as a tie.
const UTIL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Minimize total cost: chosen trip costs plus fallback penalties.
    Cost,
    /// Maximize the sum of user utilities (minimize its negation).
    Welfare,
}

/// Knobs for [`solve_matching`]. The default solves the plain min-cost
/// assignment with no side constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Force every participant to do at least as well as staying out.
    /// Trip options that leave the driver below the solo drive, or a
    /// rider below the fallback, are pinned to zero.
    pub require_ir: bool,
    /// Add the no-blocking rows. May make the program infeasible; that
    /// outcome is a certificate that no stable matching exists.
    pub require_stability: bool,
    /// Users announced in both roles, as (driver, mirroring rider)
    /// index pairs. The driver's pick-one row becomes a coupling row:
    /// the person either drives (mirror rider stays uncovered, at no
    /// fallback charge) or rides (driver side goes inactive entirely).
    pub role_flex: Vec<(usize, usize)>,
    /// Price adjustment per rider, subtracted from every trip option
    /// covering that rider. Empty means all zeros.
    pub rider_weights: Vec<f64>,
    /// Price adjustment per driver, subtracted from every option of
    /// that driver. Empty means all zeros.
    pub driver_weights: Vec<f64>,
    pub objective: Objective,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            require_ir: false,
            require_stability: false,
            role_flex: Vec::new(),
            rider_weights: Vec::new(),
            driver_weights: Vec::new(),
            objective: Objective::Cost,
        }
    }
}

/// One assignment of trip options to drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicMatching {
    /// Chosen option index per driver. `None` only for a role-flexible
    /// driver whose mirror rider got matched instead.
    pub assigned: Vec<Option<usize>>,
    pub matched: Vec<bool>,
    /// Chosen trip costs plus fallback penalties of uncovered riders,
    /// ignoring price adjustments. Mirror riders never pay a fallback.
    pub total_cost: f64,
}

impl DeterministicMatching {
    /// Option index per driver when every driver is active.
    pub fn option_indices(&self) -> Option<Vec<usize>> {
        self.assigned.iter().copied().collect()
    }

    pub fn rider_set<'a>(&self, problem: &'a MatchingProblem, d: usize) -> &'a [usize] {
        match self.assigned[d] {
            Some(k) => &problem.drivers[d].options[k].riders,
            None => &[],
        }
    }
}

#[derive(Debug, Clone)]
pub enum MatchOutcome {
    Optimal(DeterministicMatching),
    /// No assignment satisfies the active constraint set. Under
    /// stability this proves that no stable matching exists.
    Infeasible,
}

impl MatchOutcome {
    pub fn optimal(self) -> Option<DeterministicMatching> {
        match self {
            MatchOutcome::Optimal(m) => Some(m),
            MatchOutcome::Infeasible => None,
        }
    }
}

fn weight(w: &[f64], i: usize) -> f64 {
    w.get(i).copied().unwrap_or(0.0)
}

/// Merge components bridged by a role-flex pair, so each coupling row
/// stays inside one program.
fn effective_components(problem: &MatchingProblem, role_flex: &[(usize, usize)]) -> Vec<Component> {
    if role_flex.is_empty() {
        return problem.components.clone();
    }
    let mut comp_of_driver = HashMap::new();
    let mut comp_of_rider = HashMap::new();
    for (i, c) in problem.components.iter().enumerate() {
        for &d in &c.drivers {
            comp_of_driver.insert(d, i);
        }
        for &r in &c.riders {
            comp_of_rider.insert(r, i);
        }
    }
    let n = problem.components.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for &(d, rm) in role_flex {
        let (a, b) = (comp_of_driver[&d], comp_of_rider[&rm]);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut merged: Vec<Component> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let at = *slot.entry(root).or_insert_with(|| {
            merged.push(Component { drivers: vec![], riders: vec![] });
            merged.len() - 1
        });
        merged[at].drivers.extend(&problem.components[i].drivers);
        merged[at].riders.extend(&problem.components[i].riders);
    }
    for c in &mut merged {
        c.drivers.sort_unstable();
        c.riders.sort_unstable();
    }
    merged
}

/// Solve the assignment program restricted to one component. Returns
/// `None` when the constraint set admits no assignment.
fn solve_component(
    problem: &MatchingProblem,
    comp: &Component,
    opts: &MatchOptions,
    mirrors: &HashMap<usize, usize>,
    mirror_riders: &HashSet<usize>,
) -> Result<Option<(Vec<(usize, usize)>, Vec<usize>)>, SolverError> {
    let mut bip = BinaryProgram::new(Sense::Minimize);

    // Trip variables, drivers in index order, options in table order.
    let mut cols: Vec<(usize, usize)> = Vec::new();
    let mut col_var: HashMap<(usize, usize), usize> = HashMap::new();
    for &d in &comp.drivers {
        for (k, opt) in problem.drivers[d].options.iter().enumerate() {
            let base = match opts.objective {
                Objective::Cost => opt.cost,
                Objective::Welfare => {
                    -(opt.driver_utility + opt.rider_utilities.iter().sum::<f64>())
                }
            };
            let adj: f64 = opt.riders.iter().map(|&r| weight(&opts.rider_weights, r)).sum();
            let v = bip.add_var(base - adj - weight(&opts.driver_weights, d));
            col_var.insert((d, k), v);
            cols.push((d, k));
        }
    }
    // Fallback variables. Price adjustments touch trip options only, so
    // the fallback penalty rides through unchanged; a matched rider's
    // adjustment lands exactly once, on the covering trip.
    let mut y_var: HashMap<usize, usize> = HashMap::new();
    for &r in &comp.riders {
        let base = if mirror_riders.contains(&r) {
            0.0
        } else {
            match opts.objective {
                Objective::Cost => problem.riders[r].lambda,
                Objective::Welfare => -problem.riders[r].unmatched_utility,
            }
        };
        y_var.insert(r, bip.add_var(base));
    }

    // Each rider is covered by one trip or falls back.
    for &r in &comp.riders {
        let mut coefs: Vec<(usize, f64)> = cols
            .iter()
            .filter(|&&(d, k)| problem.drivers[d].options[k].riders.contains(&r))
            .map(|&(d, k)| (col_var[&(d, k)], 1.0))
            .collect();
        coefs.push((y_var[&r], 1.0));
        bip.add_row(RowOp::Eq, 1.0, &coefs);
    }
    // Each driver runs one option; a role-flexible driver instead runs
    // exactly when their mirror rider goes uncovered.
    for &d in &comp.drivers {
        let mut coefs: Vec<(usize, f64)> = (0..problem.drivers[d].options.len())
            .map(|k| (col_var[&(d, k)], 1.0))
            .collect();
        match mirrors.get(&d) {
            Some(&rm) => {
                coefs.push((y_var[&rm], -1.0));
                bip.add_row(RowOp::Eq, 0.0, &coefs);
            }
            None => bip.add_row(RowOp::Eq, 1.0, &coefs),
        }
    }

    if opts.require_ir {
        // Pin down options that would pay a participant worse than
        // staying out. Emitted only where they actually cut; the
        // remaining rows are vacuous at any binary point.
        for &(d, k) in &cols {
            let opt = &problem.drivers[d].options[k];
            let solo = problem.drivers[d].options[0].driver_utility;
            if opt.driver_utility < solo - UTIL_TOL {
                bip.add_row(RowOp::Ge, 0.0, &[(col_var[&(d, k)], opt.driver_utility - solo)]);
            }
            for (j, &r) in opt.riders.iter().enumerate() {
                let out = problem.riders[r].unmatched_utility;
                if opt.rider_utilities[j] < out - UTIL_TOL {
                    bip.add_row(
                        RowOp::Ge,
                        0.0,
                        &[(col_var[&(d, k)], opt.rider_utilities[j] - out)],
                    );
                }
            }
        }
    }

    if opts.require_stability {
        // Per rider, every trip variable covering them with the utility
        // it pays; feeds the strictly-better scans below.
        let mut rider_cols: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        for &(d, k) in &cols {
            let opt = &problem.drivers[d].options[k];
            for (j, &r) in opt.riders.iter().enumerate() {
                rider_cols
                    .entry(r)
                    .or_default()
                    .push((col_var[&(d, k)], opt.rider_utilities[j]));
            }
        }
        // One row per potential deviation (d,S): either it is matched,
        // or someone it needs already does strictly better. Strictness
        // is encoded by membership, so utility ties do not block.
        for &(d, k) in &cols {
            let opt = &problem.drivers[d].options[k];
            let mut terms: HashMap<usize, f64> = HashMap::new();
            *terms.entry(col_var[&(d, k)]).or_insert(0.0) += 1.0;
            for (k2, other) in problem.drivers[d].options.iter().enumerate() {
                if k2 != k && other.driver_utility > opt.driver_utility {
                    *terms.entry(col_var[&(d, k2)]).or_insert(0.0) += 1.0;
                }
            }
            for (j, &r) in opt.riders.iter().enumerate() {
                let here = opt.rider_utilities[j];
                for &(v, u) in rider_cols.get(&r).into_iter().flatten() {
                    if u > here {
                        *terms.entry(v).or_insert(0.0) += 1.0;
                    }
                }
                if problem.riders[r].unmatched_utility > here {
                    *terms.entry(y_var[&r]).or_insert(0.0) += 1.0;
                }
            }
            let mut coefs: Vec<(usize, f64)> = terms.into_iter().collect();
            coefs.sort_unstable_by_key(|&(v, _)| v);
            bip.add_row(RowOp::Ge, 1.0, &coefs);
        }
    }

    let outcome = solve_bip(&bip, DEFAULT_NODE_LIMIT)?;
    let sol = match outcome {
        BipOutcome::Optimal(s) => s,
        BipOutcome::Infeasible => return Ok(None),
    };
    let picked: Vec<(usize, usize)> = cols
        .iter()
        .copied()
        .filter(|&(d, k)| sol.x[col_var[&(d, k)]])
        .collect();
    let uncovered: Vec<usize> = comp
        .riders
        .iter()
        .copied()
        .filter(|r| sol.x[y_var[r]])
        .collect();
    Ok(Some((picked, uncovered)))
}

/// Find the optimal assignment under the given options, or report that
/// none exists. Infeasibility is an answer; solver failures surface as
/// errors.
pub fn solve_matching(
    problem: &MatchingProblem,
    opts: &MatchOptions,
) -> Result<MatchOutcome, SolverError> {
    let mirrors: HashMap<usize, usize> = opts.role_flex.iter().copied().collect();
    let mirror_riders: HashSet<usize> = opts.role_flex.iter().map(|&(_, r)| r).collect();
    for &(d, rm) in &opts.role_flex {
        if d >= problem.drivers.len() || rm >= problem.riders.len() {
            return Err(SolverError::Invalid(format!(
                "role-flex pair ({d}, {rm}) out of range"
            )));
        }
    }

    let mut assigned: Vec<Option<usize>> = vec![None; problem.drivers.len()];
    let mut matched = vec![false; problem.riders.len()];
    for comp in &effective_components(problem, &opts.role_flex) {
        let Some((picked, uncovered)) =
            solve_component(problem, comp, opts, &mirrors, &mirror_riders)?
        else {
            return Ok(MatchOutcome::Infeasible);
        };
        let mut open: HashSet<usize> = comp.riders.iter().copied().collect();
        for r in uncovered {
            open.remove(&r);
        }
        for (d, k) in picked {
            assigned[d] = Some(k);
            for &r in &problem.drivers[d].options[k].riders {
                matched[r] = true;
                open.remove(&r);
            }
        }
        debug_assert!(open.is_empty(), "rider neither covered nor fallen back");
    }

    let mut m = DeterministicMatching { assigned, matched, total_cost: 0.0 };
    m.total_cost = matching_cost(problem, &m, &mirror_riders);
    if opts.require_stability && !blocking_pairs(problem, &m).is_empty() {
        return Err(SolverError::Invalid(
            "stability rows admitted a matching with a blocking pair".into(),
        ));
    }
    Ok(MatchOutcome::Optimal(m))
}

fn matching_cost(
    problem: &MatchingProblem,
    m: &DeterministicMatching,
    mirror_riders: &HashSet<usize>,
) -> f64 {
    let trips: f64 = m
        .assigned
        .iter()
        .enumerate()
        .filter_map(|(d, k)| k.map(|k| problem.drivers[d].options[k].cost))
        .sum();
    let fallback: f64 = problem
        .riders
        .iter()
        .enumerate()
        .filter(|&(r, _)| !m.matched[r] && !mirror_riders.contains(&r))
        .map(|(_, info)| info.lambda)
        .sum();
    trips + fallback
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub best: DeterministicMatching,
    pub worst_cost: f64,
}

/// Randomized greedy baseline: shuffle the drivers, then let each take
/// the option that cuts total cost the most among riders still open.
/// Runs `restarts` orderings and keeps the best; the worst cost tags
/// along to show the spread.
pub fn greedy_baseline(problem: &MatchingProblem, seed: u64, restarts: usize) -> GreedyOutcome {
    let nd = problem.drivers.len();
    let nr = problem.riders.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..nd).collect();
    let mut best: Option<DeterministicMatching> = None;
    let mut worst = f64::NEG_INFINITY;

    for _ in 0..restarts.max(1) {
        order.shuffle(&mut rng);
        let mut open = vec![true; nr];
        let mut assigned: Vec<Option<usize>> = vec![None; nd];
        for &d in &order {
            let mut pick = 0usize;
            let mut pick_net = f64::INFINITY;
            for (k, opt) in problem.drivers[d].options.iter().enumerate() {
                if opt.riders.iter().any(|&r| !open[r]) {
                    continue;
                }
                // Net change to total cost: the trip replaces the
                // covered riders' fallback penalties.
                let net = opt.cost - opt.riders.iter().map(|&r| problem.riders[r].lambda).sum::<f64>();
                if net < pick_net {
                    pick_net = net;
                    pick = k;
                }
            }
            assigned[d] = Some(pick);
            for &r in &problem.drivers[d].options[pick].riders {
                open[r] = false;
            }
        }
        let matched: Vec<bool> = open.iter().map(|&o| !o).collect();
        let mut m = DeterministicMatching { assigned, matched, total_cost: 0.0 };
        m.total_cost = matching_cost(problem, &m, &HashSet::new());
        worst = worst.max(m.total_cost);
        if best.as_ref().map_or(true, |b| m.total_cost < b.total_cost) {
            best = Some(m);
        }
    }
    GreedyOutcome { best: best.expect("at least one restart"), worst_cost: worst }
}

/// Every feasible deviation (d,S) not currently matched where the
/// driver and all of S strictly gain by switching. Includes the solo
/// drive, a driver walking out on their riders. Empty means stable.
pub fn blocking_pairs(
    problem: &MatchingProblem,
    m: &DeterministicMatching,
) -> Vec<(usize, Vec<usize>)> {
    let u = utilities(problem, m);
    let mut out = Vec::new();
    for (d, col) in problem.drivers.iter().enumerate() {
        for (k, opt) in col.options.iter().enumerate() {
            if m.assigned[d] == Some(k) {
                continue;
            }
            if opt.driver_utility <= u.drivers[d] {
                continue;
            }
            if opt
                .riders
                .iter()
                .enumerate()
                .all(|(j, &r)| opt.rider_utilities[j] > u.riders[r])
            {
                out.push((d, opt.riders.clone()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserUtilities {
    pub drivers: Vec<f64>,
    pub riders: Vec<f64>,
}

/// Realized utility per user. Unmatched riders sit at their fallback;
/// an inactive role-flexible driver side sits at the solo baseline.
pub fn utilities(problem: &MatchingProblem, m: &DeterministicMatching) -> UserUtilities {
    let mut riders: Vec<f64> = problem.riders.iter().map(|r| r.unmatched_utility).collect();
    let mut drivers = Vec::with_capacity(problem.drivers.len());
    for (d, col) in problem.drivers.iter().enumerate() {
        let k = m.assigned[d].unwrap_or(0);
        drivers.push(col.options[k].driver_utility);
        if let Some(k) = m.assigned[d] {
            let opt = &col.options[k];
            for (j, &r) in opt.riders.iter().enumerate() {
                riders[r] = opt.rider_utilities[j];
            }
        }
    }
    UserUtilities { drivers, riders }
}

/// True when no participant would rather have stayed out.
pub fn is_ir(problem: &MatchingProblem, m: &DeterministicMatching) -> bool {
    let u = utilities(problem, m);
    let drivers_ok = problem.drivers.iter().enumerate().all(|(d, col)| {
        u.drivers[d] >= col.options[0].driver_utility - UTIL_TOL
    });
    let riders_ok = problem.riders.iter().enumerate().all(|(r, info)| {
        !m.matched[r] || u.riders[r] >= info.unmatched_utility - UTIL_TOL
    });
    drivers_ok && riders_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{costly_stability_problem, no_stable_problem};
    use crate::rtv::{build_rtv, DriverColumns, RiderInfo, RtvOptions, TripOption};
    use crate::testutil::small_instance;
    use crate::trip::TripCache;

    fn opt(riders: &[usize], cost: f64, du: f64, ru: &[f64]) -> TripOption {
        TripOption {
            riders: riders.to_vec(),
            cost,
            driver_utility: du,
            rider_utilities: ru.to_vec(),
            schedule: None,
        }
    }

    fn problem(drivers: Vec<Vec<TripOption>>, riders: Vec<(f64, f64)>) -> MatchingProblem {
        let nd = drivers.len();
        let nr = riders.len();
        MatchingProblem {
            drivers: drivers
                .into_iter()
                .enumerate()
                .map(|(d, options)| DriverColumns { id: format!("d{d}"), options })
                .collect(),
            riders: riders
                .into_iter()
                .enumerate()
                .map(|(r, (lambda, out))| RiderInfo {
                    id: format!("r{r}"),
                    lambda,
                    unmatched_utility: out,
                })
                .collect(),
            components: vec![Component {
                drivers: (0..nd).collect(),
                riders: (0..nr).collect(),
            }],
        }
    }

    fn rtv_problem(seed: u64, nd: usize, nr: usize) -> MatchingProblem {
        let inst = small_instance(seed, nd, nr);
        let cache = TripCache::new();
        build_rtv(&inst, &cache, &RtvOptions::default())
    }

    /// Objective value the program assigns to a concrete choice vector,
    /// recomputed from the option data.
    fn program_value(p: &MatchingProblem, opts: &MatchOptions, choice: &[Option<usize>]) -> f64 {
        let mirror_riders: HashSet<usize> = opts.role_flex.iter().map(|&(_, r)| r).collect();
        let mut covered = vec![false; p.riders.len()];
        let mut total = 0.0;
        for (d, &k) in choice.iter().enumerate() {
            let Some(k) = k else { continue };
            let o = &p.drivers[d].options[k];
            let base = match opts.objective {
                Objective::Cost => o.cost,
                Objective::Welfare => -(o.driver_utility + o.rider_utilities.iter().sum::<f64>()),
            };
            total += base - weight(&opts.driver_weights, d);
            for &r in &o.riders {
                covered[r] = true;
                total -= weight(&opts.rider_weights, r);
            }
        }
        for (r, info) in p.riders.iter().enumerate() {
            if !covered[r] && !mirror_riders.contains(&r) {
                total += match opts.objective {
                    Objective::Cost => info.lambda,
                    Objective::Welfare => -info.unmatched_utility,
                };
            }
        }
        total
    }

    /// Brute force over every assignment, applying the constraint
    /// definitions directly. Returns the best objective value, or None
    /// when nothing passes.
    fn enumerate_best(p: &MatchingProblem, opts: &MatchOptions) -> Option<f64> {
        let mirrors: HashMap<usize, usize> = opts.role_flex.iter().copied().collect();
        let nd = p.drivers.len();
        let mut best: Option<f64> = None;
        let mut choice: Vec<Option<usize>> = vec![Some(0); nd];

        fn recurse(
            p: &MatchingProblem,
            opts: &MatchOptions,
            mirrors: &HashMap<usize, usize>,
            choice: &mut Vec<Option<usize>>,
            d: usize,
            best: &mut Option<f64>,
        ) {
            if d == p.drivers.len() {
                if feasible(p, opts, mirrors, choice) {
                    let v = program_value(p, opts, choice);
                    if best.map_or(true, |b| v < b) {
                        *best = Some(v);
                    }
                }
                return;
            }
            for k in 0..p.drivers[d].options.len() {
                choice[d] = Some(k);
                recurse(p, opts, mirrors, choice, d + 1, best);
            }
            if mirrors.contains_key(&d) {
                choice[d] = None;
                recurse(p, opts, mirrors, choice, d + 1, best);
            }
        }

        fn feasible(
            p: &MatchingProblem,
            opts: &MatchOptions,
            mirrors: &HashMap<usize, usize>,
            choice: &[Option<usize>],
        ) -> bool {
            let mut cover = vec![0usize; p.riders.len()];
            for (d, &k) in choice.iter().enumerate() {
                if let Some(k) = k {
                    for &r in &p.drivers[d].options[k].riders {
                        cover[r] += 1;
                    }
                }
            }
            if cover.iter().any(|&c| c > 1) {
                return false;
            }
            for (&d, &rm) in mirrors {
                if (choice[d].is_none()) != (cover[rm] == 1) {
                    return false;
                }
            }
            if opts.require_ir {
                for (d, &k) in choice.iter().enumerate() {
                    let Some(k) = k else { continue };
                    let o = &p.drivers[d].options[k];
                    if o.driver_utility < p.drivers[d].options[0].driver_utility - UTIL_TOL {
                        return false;
                    }
                    for (j, &r) in o.riders.iter().enumerate() {
                        if o.rider_utilities[j] < p.riders[r].unmatched_utility - UTIL_TOL {
                            return false;
                        }
                    }
                }
            }
            if opts.require_stability {
                // Current placement utility per rider.
                let mut cur: Vec<f64> = p.riders.iter().map(|r| r.unmatched_utility).collect();
                for (d, &k) in choice.iter().enumerate() {
                    if let Some(k) = k {
                        let o = &p.drivers[d].options[k];
                        for (j, &r) in o.riders.iter().enumerate() {
                            cur[r] = o.rider_utilities[j];
                        }
                    }
                }
                for (d, col) in p.drivers.iter().enumerate() {
                    for (k, o) in col.options.iter().enumerate() {
                        if choice[d] == Some(k) {
                            continue;
                        }
                        let driver_held = match choice[d] {
                            Some(k2) => col.options[k2].driver_utility > o.driver_utility,
                            None => false,
                        };
                        let some_rider_held = o
                            .riders
                            .iter()
                            .enumerate()
                            .any(|(j, &r)| cur[r] > o.rider_utilities[j]);
                        if !driver_held && !some_rider_held {
                            return false;
                        }
                    }
                }
            }
            true
        }

        recurse(p, opts, &mirrors, &mut choice, 0, &mut best);
        best
    }

    fn assert_agrees(p: &MatchingProblem, opts: &MatchOptions, tag: &str) {
        let got = solve_matching(p, opts).unwrap();
        let want = enumerate_best(p, opts);
        match (got, want) {
            (MatchOutcome::Optimal(m), Some(v)) => {
                let mv = program_value(p, opts, &m.assigned);
                assert!((mv - v).abs() <= 1e-6, "{tag}: got {mv}, enumeration found {v}");
            }
            (MatchOutcome::Infeasible, None) => {}
            (MatchOutcome::Optimal(m), None) => {
                panic!("{tag}: solver matched at {} but enumeration found nothing", m.total_cost)
            }
            (MatchOutcome::Infeasible, Some(v)) => {
                panic!("{tag}: solver infeasible but enumeration found {v}")
            }
        }
    }

    #[test]
    fn empty_rider_set_takes_solo_drives() {
        let p = problem(
            vec![vec![opt(&[], 3.0, 0.0, &[])], vec![opt(&[], 5.0, 0.0, &[])]],
            vec![],
        );
        let m = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
        assert_eq!(m.assigned, vec![Some(0), Some(0)]);
        assert_eq!(m.total_cost, 8.0);
    }

    #[test]
    fn min_cost_on_no_stable_fixture() {
        let p = no_stable_problem();
        let m = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
        assert!((m.total_cost - 206.0).abs() < 1e-9);
        let pairs: Vec<usize> = (0..3)
            .filter(|&d| m.rider_set(&p, d).len() == 2)
            .collect();
        assert_eq!(pairs.len(), 1, "exactly one pair trip");
        let u = utilities(&p, &m);
        let mut served: Vec<f64> = m.rider_set(&p, pairs[0]).iter().map(|&r| u.riders[r]).collect();
        served.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(served, vec![57.0, 63.0]);
        assert!(is_ir(&p, &m));
        // The cheapest matching is not stable: the leftover rider's own
        // driver would rather scoop them up with one current passenger.
        assert_eq!(blocking_pairs(&p, &m).len(), 1);
    }

    #[test]
    fn no_stable_fixture_is_infeasible_under_stability() {
        let opts = MatchOptions { require_stability: true, ..MatchOptions::default() };
        match solve_matching(&no_stable_problem(), &opts).unwrap() {
            MatchOutcome::Infeasible => {}
            MatchOutcome::Optimal(m) => panic!("unexpected stable matching at {}", m.total_cost),
        }
    }

    #[test]
    fn stability_can_cost_five_orders_of_magnitude() {
        let p = costly_stability_problem();
        let free = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
        assert!((free.total_cost - 0.002).abs() < 1e-12);
        let opts = MatchOptions { require_stability: true, ..MatchOptions::default() };
        let stable = solve_matching(&p, &opts).unwrap().optimal().unwrap();
        assert!((stable.total_cost - 200.0).abs() < 1e-9);
        assert_eq!(stable.rider_set(&p, 0), &[0]);
        assert_eq!(stable.rider_set(&p, 1), &[] as &[usize]);
        assert!(blocking_pairs(&p, &stable).is_empty());
        assert!((stable.total_cost / free.total_cost - 1e5).abs() < 1e-6);
    }

    #[test]
    fn participation_rows_pin_bad_options() {
        let p = problem(
            vec![vec![
                opt(&[], 5.0, 10.0, &[]),
                opt(&[0], 1.0, 12.0, &[-5.0]),
                opt(&[1], 0.5, 4.0, &[3.0]),
            ]],
            vec![(10.0, 0.0), (10.0, 0.0)],
        );
        let free = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
        assert_eq!(free.assigned, vec![Some(2)]);
        let opts = MatchOptions { require_ir: true, ..MatchOptions::default() };
        let ir = solve_matching(&p, &opts).unwrap().optimal().unwrap();
        assert_eq!(ir.assigned, vec![Some(0)], "both pickups violate someone's threshold");
        assert!((ir.total_cost - 25.0).abs() < 1e-9);
        assert!(is_ir(&p, &ir));
        assert!(!is_ir(&p, &free));
    }

    #[test]
    fn stability_rows_force_mutual_gains() {
        let p = problem(
            vec![vec![opt(&[], 2.0, 0.0, &[]), opt(&[0], 7.0, 5.0, &[5.0])]],
            vec![(4.0, 0.0)],
        );
        let free = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
        assert_eq!(free.assigned, vec![Some(0)], "solo plus fallback is cheaper");
        assert_eq!(blocking_pairs(&p, &free), vec![(0, vec![0])]);
        let opts = MatchOptions { require_stability: true, ..MatchOptions::default() };
        let stable = solve_matching(&p, &opts).unwrap().optimal().unwrap();
        assert_eq!(stable.assigned, vec![Some(1)]);
        assert!(blocking_pairs(&p, &stable).is_empty());
    }

    #[test]
    fn role_flex_lets_a_driver_ride_along() {
        let mut p = problem(
            vec![
                vec![opt(&[], 1.0, 0.0, &[]), opt(&[0], 2.0, 0.0, &[0.0])],
                vec![opt(&[], 10.0, 0.0, &[])],
            ],
            vec![(5.0, 0.0)],
        );
        // Separate components, bridged only by the role-flex coupling.
        p.components = vec![
            Component { drivers: vec![0], riders: vec![0] },
            Component { drivers: vec![1], riders: vec![] },
        ];
        let flex = MatchOptions { role_flex: vec![(1, 0)], ..MatchOptions::default() };
        let m = solve_matching(&p, &flex).unwrap().optimal().unwrap();
        assert_eq!(m.assigned, vec![Some(1), None], "second driver rides with the first");
        assert!(m.matched[0]);
        assert!((m.total_cost - 2.0).abs() < 1e-12);
        // Without the pairing the second driver must drive.
        let rigid = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
        assert_eq!(rigid.assigned, vec![Some(1), Some(0)]);
        assert!((rigid.total_cost - 12.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_enumeration_across_flag_combos() {
        for seed in 0..12u64 {
            let p = rtv_problem(seed, 2, 4);
            let combos: Vec<(MatchOptions, &str)> = vec![
                (MatchOptions::default(), "plain"),
                (MatchOptions { require_ir: true, ..MatchOptions::default() }, "ir"),
                (
                    MatchOptions { require_stability: true, ..MatchOptions::default() },
                    "stability",
                ),
                (
                    MatchOptions {
                        require_ir: true,
                        require_stability: true,
                        ..MatchOptions::default()
                    },
                    "ir+stability",
                ),
                (
                    MatchOptions { objective: Objective::Welfare, ..MatchOptions::default() },
                    "welfare",
                ),
                (
                    MatchOptions {
                        rider_weights: (0..4).map(|r| 0.3 + 0.7 * r as f64).collect(),
                        driver_weights: vec![0.4, 0.8],
                        ..MatchOptions::default()
                    },
                    "weights",
                ),
                (
                    MatchOptions { role_flex: vec![(0, 0)], ..MatchOptions::default() },
                    "role-flex",
                ),
            ];
            for (opts, tag) in &combos {
                assert_agrees(&p, opts, &format!("seed {seed} {tag}"));
            }
        }
    }

    #[test]
    fn greedy_single_driver_matches_optimal() {
        for seed in 0..8u64 {
            let p = rtv_problem(seed, 1, 4);
            let best = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
            let greedy = greedy_baseline(&p, seed, 1);
            assert!(
                (greedy.best.total_cost - best.total_cost).abs() <= 1e-9,
                "seed {seed}: greedy {} vs optimal {}",
                greedy.best.total_cost,
                best.total_cost
            );
        }
    }

    #[test]
    fn greedy_never_beats_the_optimum() {
        for seed in 0..8u64 {
            let p = rtv_problem(seed, 3, 5);
            let best = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
            let greedy = greedy_baseline(&p, seed, 9);
            assert!(greedy.best.total_cost >= best.total_cost - 1e-9);
            assert!(greedy.worst_cost >= greedy.best.total_cost - 1e-9);
            let repeat = greedy_baseline(&p, seed, 9);
            assert_eq!(repeat.best, greedy.best, "same seed, same answer");
        }
    }

    #[test]
    fn welfare_mode_maximizes_the_utility_sum() {
        for seed in 0..6u64 {
            let p = rtv_problem(seed, 2, 4);
            let opts = MatchOptions { objective: Objective::Welfare, ..MatchOptions::default() };
            let m = solve_matching(&p, &opts).unwrap().optimal().unwrap();
            let total = |mm: &DeterministicMatching| {
                let u = utilities(&p, mm);
                u.drivers.iter().sum::<f64>() + u.riders.iter().sum::<f64>()
            };
            let got = total(&m);
            // Independent recomputation over every assignment.
            let mut best = f64::NEG_INFINITY;
            let nopts: Vec<usize> = p.drivers.iter().map(|d| d.options.len()).collect();
            let mut choice = vec![0usize; p.drivers.len()];
            loop {
                let mut cover = vec![0usize; p.riders.len()];
                for (d, &k) in choice.iter().enumerate() {
                    for &r in &p.drivers[d].options[k].riders {
                        cover[r] += 1;
                    }
                }
                if cover.iter().all(|&c| c <= 1) {
                    let mm = DeterministicMatching {
                        assigned: choice.iter().map(|&k| Some(k)).collect(),
                        matched: cover.iter().map(|&c| c == 1).collect(),
                        total_cost: 0.0,
                    };
                    best = best.max(total(&mm));
                }
                let mut d = 0;
                loop {
                    if d == choice.len() {
                        break;
                    }
                    choice[d] += 1;
                    if choice[d] < nopts[d] {
                        break;
                    }
                    choice[d] = 0;
                    d += 1;
                }
                if d == choice.len() {
                    break;
                }
            }
            assert!((got - best).abs() <= 1e-6, "seed {seed}: welfare {got} vs best {best}");
        }
    }

    #[test]
    fn rider_participation_comes_free_with_min_cost() {
        for seed in 0..10u64 {
            let p = rtv_problem(seed, 2, 4);
            let m = solve_matching(&p, &MatchOptions::default()).unwrap().optimal().unwrap();
            let u = utilities(&p, &m);
            for (r, info) in p.riders.iter().enumerate() {
                assert!(
                    u.riders[r] >= info.unmatched_utility - 1e-9,
                    "seed {seed}: rider {r} worse off than the fallback"
                );
            }
        }
    }
}
