//! Pricing a single trip: one driver, a set of riders, optimal stop order
//! and stop times.
//!
//! For a fixed stop order the times are a small LP ([`solve_timing`]);
//! the order itself is found by exact depth-first search over feasible
//! interleavings with admissible pruning ([`trip_cost`]). Warm starts and
//! random seeds only tighten the search incumbent, never the result.

use crate::model::{Instance, ModelError, TravelTime, UserRef};
use crate::solver::{solve_lp, LinearProgram, LpOutcome, RowOp, Sense};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::RwLock;

/// Two same-cost routes count as equal for search purposes.
const EPS_COST: f64 = 1e-9;
/// Slack for pruning tests so float noise never cuts off an optimum.
const EPS_PRUNE: f64 = 1e-9;
/// Legs at or below this are "zero" for the departure-chain rule.
const EPS_LEG: f64 = 1e-12;
/// Random seed orders tried before the exact search.
pub const SHUFFLE_TRIES: usize = 5;
/// Grid radius within which one driver's route seeds another's search.
pub const REUSE_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

/// A rider service event between the driver's own endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Stop {
    pub rider: usize,
    pub kind: StopKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Route {
    pub driver: usize,
    /// Pickups and dropoffs in service order; the driver's origin precedes
    /// and the driver's destination follows implicitly.
    pub middle: Vec<Stop>,
}

impl Route {
    pub fn riders(&self) -> Vec<usize> {
        let mut r: Vec<usize> =
            self.middle.iter().filter(|s| s.kind == StopKind::Pickup).map(|s| s.rider).collect();
        r.sort_unstable();
        r
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DriverSchedule {
    pub route: Route,
    /// One departure/arrival time per stop: driver origin, `route.middle`,
    /// driver destination.
    pub times: Vec<f64>,
    pub driver_cost: f64,
    /// `(rider, cost)` sorted by rider index.
    pub rider_costs: Vec<(usize, f64)>,
    /// Total cost of the trip across the driver and all riders.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TripResult {
    Feasible(DriverSchedule),
    Infeasible,
}

impl TripResult {
    pub fn cost(&self) -> Option<f64> {
        match self {
            TripResult::Feasible(s) => Some(s.cost),
            TripResult::Infeasible => None,
        }
    }

    pub fn schedule(&self) -> Option<&DriverSchedule> {
        match self {
            TripResult::Feasible(s) => Some(s),
            TripResult::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TripOptions {
    pub warm_start: bool,
    pub shuffle_tries: usize,
}

impl Default for TripOptions {
    fn default() -> Self {
        TripOptions { warm_start: true, shuffle_tries: SHUFFLE_TRIES }
    }
}

/// Shared memo of priced trips, keyed by driver and sorted rider set.
/// Reads are cheap clones; concurrent inserts of the same key write the
/// same value, so racing lookups stay consistent.
#[derive(Default)]
pub struct TripCache {
    map: RwLock<HashMap<(usize, Vec<usize>), TripResult>>,
    by_riders: RwLock<HashMap<Vec<usize>, Vec<usize>>>,
}

impl TripCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, driver: usize, riders: &[usize]) -> Option<TripResult> {
        self.map.read().unwrap().get(&(driver, riders.to_vec())).cloned()
    }

    /// Drivers with a cached result for exactly this rider set, sorted.
    pub fn drivers_for(&self, riders: &[usize]) -> Vec<usize> {
        let mut ds =
            self.by_riders.read().unwrap().get(riders).cloned().unwrap_or_default();
        ds.sort_unstable();
        ds
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&self, driver: usize, riders: Vec<usize>, result: TripResult) {
        let mut idx = self.by_riders.write().unwrap();
        let ds = idx.entry(riders.clone()).or_default();
        if !ds.contains(&driver) {
            ds.push(driver);
        }
        drop(idx);
        self.map.write().unwrap().insert((driver, riders), result);
    }
}

/// Expanded route: locations and each participant's stop positions.
struct Expanded {
    locs: Vec<usize>,
    /// Driver first, then riders sorted by index.
    users: Vec<UserRef>,
    pick: Vec<usize>,
    drop: Vec<usize>,
}

fn expand(inst: &Instance, route: &Route) -> Result<Expanded, ModelError> {
    if route.driver >= inst.drivers.len() {
        return Err(ModelError::Invalid(format!("no driver {}", route.driver)));
    }
    let driver = &inst.drivers[route.driver];
    let riders = route.riders();
    if riders.len() > driver.capacity {
        return Err(ModelError::Invalid(format!(
            "route for {} carries {} riders, capacity {}",
            driver.base.id,
            riders.len(),
            driver.capacity
        )));
    }

    let m = route.middle.len() + 2;
    let mut locs = Vec::with_capacity(m);
    let mut users = vec![UserRef::Driver(route.driver)];
    let mut pick = vec![0usize];
    let mut drop = vec![m - 1];
    for &r in &riders {
        if r >= inst.riders.len() {
            return Err(ModelError::Invalid(format!("no rider {r}")));
        }
        users.push(UserRef::Rider(r));
        pick.push(usize::MAX);
        drop.push(usize::MAX);
    }

    locs.push(driver.base.origin);
    let mut onboard = 0usize;
    for (k, stop) in route.middle.iter().enumerate() {
        let pos = k + 1;
        let u = riders.binary_search(&stop.rider).map_err(|_| {
            ModelError::Invalid(format!("stop for rider {} without a pickup pair", stop.rider))
        })? + 1;
        let base = &inst.riders[stop.rider].base;
        match stop.kind {
            StopKind::Pickup => {
                if pick[u] != usize::MAX {
                    return Err(ModelError::Invalid(format!("rider {} picked up twice", stop.rider)));
                }
                pick[u] = pos;
                locs.push(base.origin);
                onboard += 1;
                if onboard > driver.capacity {
                    return Err(ModelError::Invalid(format!(
                        "route for {} exceeds capacity {}",
                        driver.base.id, driver.capacity
                    )));
                }
            }
            StopKind::Dropoff => {
                if pick[u] == usize::MAX {
                    return Err(ModelError::Invalid(format!(
                        "rider {} dropped off before pickup",
                        stop.rider
                    )));
                }
                if drop[u] != usize::MAX {
                    return Err(ModelError::Invalid(format!(
                        "rider {} dropped off twice",
                        stop.rider
                    )));
                }
                drop[u] = pos;
                locs.push(base.destination);
                onboard -= 1;
            }
        }
    }
    locs.push(driver.base.destination);
    for (u, (&p, &q)) in pick.iter().zip(&drop).enumerate() {
        if p == usize::MAX || q == usize::MAX {
            return Err(ModelError::Invalid(format!(
                "user {:?} is missing a pickup or dropoff",
                users[u]
            )));
        }
    }
    Ok(Expanded { locs, users, pick, drop })
}

/// Optimal stop times for a fixed stop order.
///
/// The vehicle may wait at any stop; waiting while riders are onboard is
/// billed through their in-vehicle time. One exception: co-located stops
/// at the very head of the route share the departure time, so waiting for
/// a co-located pickup's window counts as the driver's departure deviation
/// rather than as free pre-ride idling.
pub fn solve_timing(inst: &Instance, route: &Route) -> Result<TripResult, ModelError> {
    let ex = expand(inst, route)?;
    let m = ex.locs.len();
    let k = ex.users.len();

    let mut lp = LinearProgram::new(Sense::Minimize);
    // Stop-time variables, window bounds folded in.
    let mut obj = vec![0.0f64; m];
    let mut lower = vec![0.0f64; m];
    let mut upper = vec![inst.horizon; m];
    for (u, &user) in ex.users.iter().enumerate() {
        let base = inst.base(user);
        obj[ex.pick[u]] -= base.c_trl;
        obj[ex.drop[u]] += base.c_trl;
        lower[ex.pick[u]] = lower[ex.pick[u]].max(base.window.earliest);
        upper[ex.drop[u]] = upper[ex.drop[u]].min(base.window.latest);
    }
    for v in 0..m {
        lp.add_var(obj[v], lower[v], upper[v]);
    }
    // Departure-deviation magnitudes.
    let w0 = m;
    for &user in &ex.users {
        lp.add_var(inst.base(user).c_dev, 0.0, f64::INFINITY);
    }

    let mut lead = 0;
    while lead < m - 1 && inst.time(ex.locs[lead], ex.locs[lead + 1]) <= EPS_LEG {
        lead += 1;
    }
    for v in 0..m - 1 {
        let leg = inst.time(ex.locs[v], ex.locs[v + 1]);
        let op = if v < lead { RowOp::Eq } else { RowOp::Ge };
        lp.add_row(op, leg, &[(v + 1, 1.0), (v, -1.0)]);
    }
    for (u, &user) in ex.users.iter().enumerate() {
        let base = inst.base(user);
        let direct = inst.time(base.origin, base.destination);
        lp.add_row(
            RowOp::Le,
            direct + base.max_detour,
            &[(ex.drop[u], 1.0), (ex.pick[u], -1.0)],
        );
        lp.add_row(RowOp::Ge, -base.preferred, &[(w0 + u, 1.0), (ex.pick[u], -1.0)]);
        lp.add_row(RowOp::Ge, base.preferred, &[(w0 + u, 1.0), (ex.pick[u], 1.0)]);
    }

    let sol = match solve_lp(&lp).map_err(|e| ModelError::Invalid(format!("timing: {e}")))? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible { .. } => return Ok(TripResult::Infeasible),
        LpOutcome::Unbounded => {
            return Err(ModelError::Invalid("timing relaxation unbounded".into()))
        }
    };

    let times: Vec<f64> = sol.x[..m].to_vec();
    let mut driver_cost = 0.0;
    let mut rider_costs = Vec::with_capacity(k - 1);
    let mut cost = 0.0;
    for (u, &user) in ex.users.iter().enumerate() {
        let c = inst.base(user).trip_cost(times[ex.pick[u]], times[ex.drop[u]])?;
        cost += c;
        match user {
            UserRef::Driver(_) => driver_cost = c,
            UserRef::Rider(r) => rider_costs.push((r, c)),
        }
    }
    debug_assert!((cost - sol.objective).abs() <= 1e-6 * cost.abs().max(1.0));
    Ok(TripResult::Feasible(DriverSchedule {
        route: route.clone(),
        times,
        driver_cost,
        rider_costs,
        cost,
    }))
}

/// Whether some driverless interleaving of two riders' stops meets both
/// riders' windows and detour limits. Screens rider pairs before trips
/// containing both are ever enumerated.
pub fn riders_compatible(inst: &Instance, r1: usize, r2: usize) -> bool {
    // (rider, kind) sequences with each pickup before its dropoff
    const ORDERS: [[(u8, StopKind); 4]; 6] = {
        use StopKind::{Dropoff as Q, Pickup as O};
        [
            [(0, O), (0, Q), (1, O), (1, Q)],
            [(0, O), (1, O), (0, Q), (1, Q)],
            [(0, O), (1, O), (1, Q), (0, Q)],
            [(1, O), (0, O), (0, Q), (1, Q)],
            [(1, O), (0, O), (1, Q), (0, Q)],
            [(1, O), (1, Q), (0, O), (0, Q)],
        ]
    };
    let riders = [r1, r2];
    for order in &ORDERS {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let mut pick = [usize::MAX; 2];
        let mut drop = [usize::MAX; 2];
        for (v, &(who, kind)) in order.iter().enumerate() {
            let base = &inst.riders[riders[who as usize]].base;
            match kind {
                StopKind::Pickup => {
                    pick[who as usize] = v;
                    lp.add_var(0.0, base.window.earliest, inst.horizon);
                }
                StopKind::Dropoff => {
                    drop[who as usize] = v;
                    lp.add_var(0.0, 0.0, base.window.latest.min(inst.horizon));
                }
            }
        }
        let loc = |&(who, kind): &(u8, StopKind)| {
            let base = &inst.riders[riders[who as usize]].base;
            match kind {
                StopKind::Pickup => base.origin,
                StopKind::Dropoff => base.destination,
            }
        };
        for v in 0..3 {
            let leg = inst.time(loc(&order[v]), loc(&order[v + 1]));
            lp.add_row(RowOp::Ge, leg, &[(v + 1, 1.0), (v, -1.0)]);
        }
        for (i, &r) in riders.iter().enumerate() {
            let base = &inst.riders[r].base;
            let direct = inst.time(base.origin, base.destination);
            lp.add_row(RowOp::Le, direct + base.max_detour, &[(drop[i], 1.0), (pick[i], -1.0)]);
        }
        if matches!(solve_lp(&lp), Ok(LpOutcome::Optimal(_))) {
            return true;
        }
    }
    false
}

/// Candidate routes for `(driver, riders)` recovered from already-priced
/// trips: missing-rider insertion into the cheapest cached subset, a merge
/// of two subset routes that agree on their common order, and routes of
/// nearby drivers priced for the same rider set. Candidates seed the search
/// incumbent only; they never change the optimum.
pub fn warm_start_from(
    inst: &Instance,
    cache: &TripCache,
    driver: usize,
    riders: &[usize],
) -> Vec<Route> {
    let mut out = Vec::new();
    if riders.is_empty() {
        return out;
    }

    let mut subs: Vec<(usize, Option<DriverSchedule>)> = Vec::new();
    for &r in riders {
        let sub: Vec<usize> = riders.iter().copied().filter(|&x| x != r).collect();
        let sched = match cache.get(driver, &sub) {
            Some(TripResult::Feasible(s)) => Some(s),
            _ => None,
        };
        subs.push((r, sched));
    }

    // Insert the missing rider anywhere in the cheapest subset route.
    let best_sub = subs
        .iter()
        .filter_map(|(r, s)| s.as_ref().map(|s| (*r, s)))
        .min_by(|a, b| a.1.cost.partial_cmp(&b.1.cost).unwrap().then(a.0.cmp(&b.0)));
    if let Some((r, sched)) = best_sub {
        let mid = &sched.route.middle;
        for i in 0..=mid.len() {
            for j in i..=mid.len() {
                let mut middle = mid.clone();
                middle.insert(i, Stop { rider: r, kind: StopKind::Pickup });
                middle.insert(j + 1, Stop { rider: r, kind: StopKind::Dropoff });
                out.push(Route { driver, middle });
            }
        }
    }

    // Merge two subset routes that order their shared riders identically.
    for a in 0..subs.len() {
        for b in 0..subs.len() {
            if a == b {
                continue;
            }
            let ((miss_a, sa), (miss_b, sb)) = (&subs[a], &subs[b]);
            let (Some(sa), Some(sb)) = (sa, sb) else { continue };
            // `sa` lacks rider `miss_a` and contains `miss_b`; embed
            // `miss_a`'s stops into it at the slots `sb` used.
            let shared_a: Vec<Stop> =
                sa.route.middle.iter().copied().filter(|s| s.rider != *miss_b).collect();
            let shared_b: Vec<Stop> =
                sb.route.middle.iter().copied().filter(|s| s.rider != *miss_a).collect();
            if shared_a != shared_b {
                continue;
            }
            let slot = |kind: StopKind| {
                let mut shared_seen = 0usize;
                for s in &sb.route.middle {
                    if s.rider == *miss_a {
                        if s.kind == kind {
                            break;
                        }
                    } else {
                        shared_seen += 1;
                    }
                }
                // First index in `sa.middle` preceded by that many shared stops.
                let mut seen = 0usize;
                for (i, s) in sa.route.middle.iter().enumerate() {
                    if seen == shared_seen {
                        return i;
                    }
                    if s.rider != *miss_b {
                        seen += 1;
                    }
                }
                sa.route.middle.len()
            };
            let (po, pq) = (slot(StopKind::Pickup), slot(StopKind::Dropoff));
            let mut middle = sa.route.middle.clone();
            middle.insert(po, Stop { rider: *miss_a, kind: StopKind::Pickup });
            middle.insert(pq.max(po) + 1, Stop { rider: *miss_a, kind: StopKind::Dropoff });
            out.push(Route { driver, middle });
        }
    }

    // Reuse a nearby driver's route for the same rider set.
    if let TravelTime::Euclidean { .. } = inst.travel {
        let here = &inst.drivers[driver].base;
        let (ho, hq) = (inst.locations[here.origin].point, inst.locations[here.destination].point);
        for d2 in cache.drivers_for(riders) {
            if d2 == driver {
                continue;
            }
            let there = &inst.drivers[d2].base;
            let (to, tq) =
                (inst.locations[there.origin].point, inst.locations[there.destination].point);
            let close = match (ho, hq, to, tq) {
                (Some(a), Some(b), Some(c), Some(d)) => {
                    (a[0] - c[0]).abs().max((a[1] - c[1]).abs()) <= REUSE_RADIUS
                        && (b[0] - d[0]).abs().max((b[1] - d[1]).abs()) <= REUSE_RADIUS
                }
                _ => false,
            };
            if !close {
                continue;
            }
            if let Some(TripResult::Feasible(s)) = cache.get(d2, riders) {
                out.push(Route { driver, middle: s.route.middle });
            }
        }
    }
    out
}

struct Search<'a> {
    inst: &'a Instance,
    driver: usize,
    set: &'a [usize],
    cap: usize,
    // Per rider, aligned with `set`.
    o_loc: Vec<usize>,
    q_loc: Vec<usize>,
    earliest: Vec<f64>,
    latest: Vec<f64>,
    budget: Vec<f64>,
    c_trl: Vec<f64>,
    d_latest: f64,
    d_budget: f64,
    d_ctrl: f64,
    best_cost: f64,
    best: Option<DriverSchedule>,
    middle: Vec<Stop>,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, driver: usize, set: &'a [usize]) -> Self {
        let d = &inst.drivers[driver];
        let d_direct = inst.time(d.base.origin, d.base.destination);
        let mut s = Search {
            inst,
            driver,
            set,
            cap: d.capacity,
            o_loc: Vec::new(),
            q_loc: Vec::new(),
            earliest: Vec::new(),
            latest: Vec::new(),
            budget: Vec::new(),
            c_trl: Vec::new(),
            d_latest: d.base.window.latest,
            d_budget: d_direct + d.base.max_detour,
            d_ctrl: d.base.c_trl,
            best_cost: f64::INFINITY,
            best: None,
            middle: Vec::with_capacity(2 * set.len()),
        };
        for &r in set {
            let base = &inst.riders[r].base;
            s.o_loc.push(base.origin);
            s.q_loc.push(base.destination);
            s.earliest.push(base.window.earliest);
            s.latest.push(base.window.latest);
            s.budget.push(inst.time(base.origin, base.destination) + base.max_detour);
            s.c_trl.push(base.c_trl);
        }
        s
    }

    fn offer(&mut self, route: &Route) {
        if let Ok(TripResult::Feasible(sched)) = solve_timing(self.inst, route) {
            if sched.cost < self.best_cost - EPS_COST {
                self.best_cost = sched.cost;
                self.best = Some(sched);
            }
        }
    }

    fn leaf(&mut self) {
        let route = Route { driver: self.driver, middle: self.middle.clone() };
        match solve_timing(self.inst, &route).expect("search route is well formed") {
            TripResult::Feasible(sched) => {
                if sched.cost < self.best_cost - EPS_COST {
                    self.best_cost = sched.cost;
                    self.best = Some(sched);
                }
            }
            TripResult::Infeasible => {}
        }
    }

    /// `reach` lower-bounds the current stop's time over all completions,
    /// `path` is pure travel so far, `lb` the travel cost already committed,
    /// `pick_path` each picked rider's `path` at boarding.
    fn extend(
        &mut self,
        last_loc: usize,
        reach: f64,
        path: f64,
        lb: f64,
        picked: u32,
        dropped: u32,
        pick_path: &mut Vec<f64>,
    ) {
        let n = self.set.len();
        let full = (1u32 << n) - 1;
        if dropped == full {
            let d = &self.inst.drivers[self.driver];
            let leg = self.inst.time(last_loc, d.base.destination);
            if reach + leg > self.d_latest + EPS_PRUNE {
                return;
            }
            if path + leg > self.d_budget + EPS_PRUNE {
                return;
            }
            if lb + leg * self.d_ctrl >= self.best_cost + EPS_PRUNE {
                return;
            }
            self.leaf();
            return;
        }

        // Candidate next stops, nearest first.
        let mut cands: Vec<(f64, usize, StopKind)> = Vec::new();
        let onboard_count = (picked & !dropped).count_ones() as usize;
        for i in 0..n {
            let bit = 1u32 << i;
            if picked & bit == 0 {
                if onboard_count < self.cap {
                    cands.push((self.inst.time(last_loc, self.o_loc[i]), i, StopKind::Pickup));
                }
            } else if dropped & bit == 0 {
                cands.push((self.inst.time(last_loc, self.q_loc[i]), i, StopKind::Dropoff));
            }
        }
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        'next: for (leg, i, kind) in cands {
            let bit = 1u32 << i;
            let is_pickup = kind == StopKind::Pickup;
            let reach2 = if is_pickup {
                (reach + leg).max(self.earliest[i])
            } else {
                reach + leg
            };
            let path2 = path + leg;

            // No completion can deliver anyone already (or just) onboard
            // after their window closes or their detour budget runs out.
            if reach2 > self.d_latest + EPS_PRUNE || path2 > self.d_budget + EPS_PRUNE {
                continue;
            }
            let mut onboard_ctrl = self.d_ctrl;
            for j in 0..n {
                let jbit = 1u32 << j;
                let rides = picked & jbit != 0 && dropped & jbit == 0;
                if rides {
                    onboard_ctrl += self.c_trl[j];
                    if reach2 > self.latest[j] + EPS_PRUNE
                        || path2 - pick_path[j] > self.budget[j] + EPS_PRUNE
                    {
                        continue 'next;
                    }
                }
            }
            if is_pickup && reach2 > self.latest[i] + EPS_PRUNE {
                continue;
            }

            let lb2 = lb + leg * onboard_ctrl;
            if lb2 >= self.best_cost + EPS_PRUNE {
                continue;
            }

            let (loc, picked2, dropped2) = if is_pickup {
                pick_path[i] = path2;
                (self.o_loc[i], picked | bit, dropped)
            } else {
                (self.q_loc[i], picked, dropped | bit)
            };
            self.middle.push(Stop { rider: self.set[i], kind });
            self.extend(loc, reach2, path2, lb2, picked2, dropped2, pick_path);
            self.middle.pop();
        }
    }
}

fn shuffle_seed(driver: usize, set: &[usize]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mix = |h: &mut u64, v: u64| {
        *h ^= v;
        *h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    mix(&mut h, driver as u64 + 1);
    for &r in set {
        mix(&mut h, r as u64 + 2);
    }
    h
}

fn random_order(rng: &mut ChaCha8Rng, set: &[usize], cap: usize) -> Vec<Stop> {
    let n = set.len();
    let mut picked = 0u32;
    let mut dropped = 0u32;
    let mut out = Vec::with_capacity(2 * n);
    while out.len() < 2 * n {
        let onboard = (picked & !dropped).count_ones() as usize;
        let mut choices = Vec::new();
        for i in 0..n {
            let bit = 1u32 << i;
            if picked & bit == 0 {
                if onboard < cap {
                    choices.push(Stop { rider: set[i], kind: StopKind::Pickup });
                }
            } else if dropped & bit == 0 {
                choices.push(Stop { rider: set[i], kind: StopKind::Dropoff });
            }
        }
        let pick = choices[rng.gen_range(0..choices.len())];
        let i = set.iter().position(|&r| r == pick.rider).unwrap();
        match pick.kind {
            StopKind::Pickup => picked |= 1 << i,
            StopKind::Dropoff => dropped |= 1 << i,
        }
        out.push(pick);
    }
    out
}

/// Cheapest feasible trip serving exactly `riders`, or `Infeasible` when no
/// stop order fits everyone's windows, detours, and the vehicle capacity.
/// Results are memoized in `cache`.
pub fn trip_cost(
    inst: &Instance,
    cache: &TripCache,
    driver: usize,
    riders: &[usize],
    opts: &TripOptions,
) -> TripResult {
    let mut set: Vec<usize> = riders.to_vec();
    set.sort_unstable();
    set.dedup();
    assert_eq!(set.len(), riders.len(), "rider set has duplicates");

    if let Some(hit) = cache.get(driver, &set) {
        return hit;
    }
    if set.len() > inst.drivers[driver].capacity {
        let r = TripResult::Infeasible;
        cache.insert(driver, set, r.clone());
        return r;
    }

    let mut search = Search::new(inst, driver, &set);
    if set.is_empty() {
        search.leaf();
    } else {
        if opts.warm_start {
            for route in warm_start_from(inst, cache, driver, &set) {
                if expand(inst, &route).is_ok() {
                    search.offer(&route);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(driver, &set));
        for _ in 0..opts.shuffle_tries {
            let middle = random_order(&mut rng, &set, search.cap);
            let route = Route { driver, middle };
            search.offer(&route);
        }

        let d = &inst.drivers[driver];
        let mut pick_path = vec![0.0; set.len()];
        search.extend(d.base.origin, d.base.window.earliest, 0.0, 0.0, 0, 0, &mut pick_path);
    }

    let result = match search.best {
        Some(s) => TripResult::Feasible(s),
        None => TripResult::Infeasible,
    };
    cache.insert(driver, set, result.clone());
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::hub_instance;
    use crate::testutil::small_instance;

    fn route(driver: usize, stops: &[(usize, StopKind)]) -> Route {
        Route {
            driver,
            middle: stops.iter().map(|&(rider, kind)| Stop { rider, kind }).collect(),
        }
    }

    /// Every capacity-feasible stop order, timed; no pruning.
    fn oracle(inst: &Instance, driver: usize, set: &[usize]) -> Option<f64> {
        fn rec(
            inst: &Instance,
            driver: usize,
            set: &[usize],
            cap: usize,
            picked: u32,
            dropped: u32,
            middle: &mut Vec<Stop>,
            best: &mut Option<f64>,
        ) {
            let n = set.len();
            if dropped == (1u32 << n) - 1 {
                let r = Route { driver, middle: middle.clone() };
                if let Ok(TripResult::Feasible(s)) = solve_timing(inst, &r) {
                    if best.map_or(true, |b| s.cost < b) {
                        *best = Some(s.cost);
                    }
                }
                return;
            }
            let onboard = (picked & !dropped).count_ones() as usize;
            for i in 0..n {
                let bit = 1u32 << i;
                if picked & bit == 0 && onboard < cap {
                    middle.push(Stop { rider: set[i], kind: StopKind::Pickup });
                    rec(inst, driver, set, cap, picked | bit, dropped, middle, best);
                    middle.pop();
                } else if picked & bit != 0 && dropped & bit == 0 {
                    middle.push(Stop { rider: set[i], kind: StopKind::Dropoff });
                    rec(inst, driver, set, cap, picked, dropped | bit, middle, best);
                    middle.pop();
                }
            }
        }
        let mut best = None;
        if set.len() <= inst.drivers[driver].capacity {
            rec(
                inst,
                driver,
                set,
                inst.drivers[driver].capacity,
                0,
                0,
                &mut Vec::new(),
                &mut best,
            );
        }
        best
    }

    #[test]
    fn solo_drive_prices_at_preference() {
        let inst = small_instance(3, 1, 0);
        let cache = TripCache::new();
        let res = trip_cost(&inst, &cache, 0, &[], &TripOptions::default());
        let s = res.schedule().unwrap();
        let d = &inst.drivers[0].base;
        let direct = inst.time(d.origin, d.destination);
        assert!((s.cost - d.c_trl * direct).abs() < 1e-9);
        assert!((s.times[0] - d.preferred).abs() < 1e-9);
    }

    #[test]
    fn hub_solo_ride_shares_departure_with_colocated_pickup() {
        let inst = hub_instance();
        let r = route(0, &[(0, StopKind::Pickup), (0, StopKind::Dropoff)]);
        let s = solve_timing(&inst, &r).unwrap();
        let s = s.schedule().unwrap();
        // Waiting for the rider's window shows up as departure deviation.
        assert_eq!(s.times, vec![1.0, 1.0, 4.0, 5.0]);
        assert!((s.driver_cost - 104.0).abs() < 1e-9);
        assert_eq!(s.rider_costs.len(), 1);
        assert!((s.rider_costs[0].1 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn hub_pair_ride_costs() {
        let inst = hub_instance();
        let r = route(
            0,
            &[
                (0, StopKind::Pickup),
                (1, StopKind::Pickup),
                (1, StopKind::Dropoff),
                (0, StopKind::Dropoff),
            ],
        );
        let s = solve_timing(&inst, &r).unwrap();
        let s = s.schedule().unwrap();
        assert_eq!(s.times, vec![1.0, 1.0, 3.0, 6.0, 8.0, 9.0]);
        assert!((s.driver_cost - 108.0).abs() < 1e-9);
        assert!((s.rider_costs[0].1 - 7.0).abs() < 1e-9);
        assert!((s.rider_costs[1].1 - 13.0).abs() < 1e-9);
        assert!((s.cost - 128.0).abs() < 1e-9);

        let cache = TripCache::new();
        let best = trip_cost(&inst, &cache, 0, &[0, 1], &TripOptions::default());
        assert!((best.cost().unwrap() - 128.0).abs() < 1e-9);
    }

    #[test]
    fn hub_cross_single() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let res = trip_cost(&inst, &cache, 0, &[1], &TripOptions::default());
        let s = res.schedule().unwrap();
        assert!((s.driver_cost - 6.0).abs() < 1e-9);
        assert!((s.rider_costs[0].1 - 8.0).abs() < 1e-9);
    }

    #[test]
    fn malformed_routes_error() {
        let inst = hub_instance();
        for bad in [
            route(0, &[(0, StopKind::Dropoff), (0, StopKind::Pickup)]),
            route(0, &[(0, StopKind::Pickup)]),
            route(0, &[(0, StopKind::Pickup), (0, StopKind::Dropoff), (1, StopKind::Dropoff)]),
            // capacity 2 with three riders onboard at once
            route(
                0,
                &[
                    (0, StopKind::Pickup),
                    (1, StopKind::Pickup),
                    (2, StopKind::Pickup),
                    (0, StopKind::Dropoff),
                    (1, StopKind::Dropoff),
                    (2, StopKind::Dropoff),
                ],
            ),
        ] {
            assert!(solve_timing(&inst, &bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn oversized_set_is_infeasible() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let res = trip_cost(&inst, &cache, 0, &[0, 1, 2], &TripOptions::default());
        assert_eq!(res, TripResult::Infeasible);
    }

    #[test]
    fn incompatible_window_is_infeasible() {
        let mut inst = hub_instance();
        inst.riders[1].base.window = crate::model::TimeWindow { earliest: 7.0, latest: 10.0 };
        let r = route(0, &[(1, StopKind::Pickup), (1, StopKind::Dropoff)]);
        // Driver must reach the hub by 10 but cannot pick up before 7.
        assert_eq!(solve_timing(&inst, &r).unwrap(), TripResult::Infeasible);
    }

    #[test]
    fn matches_order_enumeration() {
        let mut checked_feasible = 0;
        for seed in 0..60u64 {
            let n_riders = 1 + (seed % 3) as usize;
            let inst = small_instance(seed, 1, n_riders);
            let set: Vec<usize> = (0..n_riders).collect();
            let cache = TripCache::new();
            let got = trip_cost(&inst, &cache, 0, &set, &TripOptions::default());
            let want = oracle(&inst, 0, &set);
            match (got.cost(), want) {
                (Some(g), Some(w)) => {
                    assert!((g - w).abs() < 1e-9, "seed {seed}: {g} vs {w}");
                    checked_feasible += 1;
                }
                (None, None) => {}
                (g, w) => panic!("seed {seed}: feasibility mismatch {g:?} vs {w:?}"),
            }
        }
        assert!(checked_feasible >= 15, "only {checked_feasible} feasible trips sampled");
    }

    #[test]
    fn warm_start_never_changes_cost() {
        for seed in 100..125u64 {
            let inst = small_instance(seed, 2, 3);
            let set = vec![0usize, 1, 2];
            let cold = TripCache::new();
            let plain = trip_cost(
                &inst,
                &cold,
                0,
                &set,
                &TripOptions { warm_start: false, shuffle_tries: 0 },
            );

            let warm = TripCache::new();
            // Prefill everything the warm start can draw on.
            for d in 0..2 {
                for r in 0..3 {
                    trip_cost(&inst, &warm, d, &[r], &TripOptions::default());
                }
                for a in 0..3 {
                    for b in a + 1..3 {
                        trip_cost(&inst, &warm, d, &[a, b], &TripOptions::default());
                    }
                }
                trip_cost(&inst, &warm, d, &set, &TripOptions::default());
            }
            let with = warm.get(0, &set).unwrap();
            match (plain.cost(), with.cost()) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}"),
                (None, None) => {}
                (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn results_are_reproducible() {
        let inst = small_instance(7, 1, 3);
        let run = || {
            let cache = TripCache::new();
            trip_cost(&inst, &cache, 0, &[0, 1, 2], &TripOptions::default())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cache_hits_return_the_stored_result() {
        let inst = small_instance(9, 1, 2);
        let cache = TripCache::new();
        let first = trip_cost(&inst, &cache, 0, &[0, 1], &TripOptions::default());
        let second = trip_cost(&inst, &cache, 0, &[0, 1], &TripOptions::default());
        assert_eq!(first, second);
        assert_eq!(cache.drivers_for(&[0, 1]), vec![0]);
    }

    #[test]
    fn rider_pair_screening() {
        let inst = hub_instance();
        assert!(riders_compatible(&inst, 0, 1));
        let mut tight = hub_instance();
        tight.riders[0].base.window = crate::model::TimeWindow { earliest: 1.0, latest: 4.0 };
        tight.riders[1].base.window = crate::model::TimeWindow { earliest: 7.5, latest: 8.0 };
        // r2 cannot even board before r1's dropoff deadline plus travel.
        assert!(!riders_compatible(&tight, 0, 1));
    }
}
