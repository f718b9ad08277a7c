//! Trip enumeration: from an instance to the full set of priced trip
//! options per driver, grouped into independent components.
//!
//! Enumeration is level-wise per driver: a set of h riders is tried only
//! if every (h-1)-subset is feasible and all rider pairs are mutually
//! compatible. This is exact when travel times satisfy the triangle
//! inequality (always for euclidean instances; matrix instances are
//! expected to be shortest-path closures).

use crate::model::{Instance, UserRef};
use crate::trip::{riders_compatible, trip_cost, DriverSchedule, TripCache, TripOptions, TripResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

pub const DEFAULT_MAX_TRIP_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct RtvOptions {
    /// Upper bound on riders per trip, on top of vehicle capacity.
    pub max_trip_size: usize,
    /// Drop driver-rider pairs whose solo-shared ride leaves either side
    /// worse off than staying out. Off by default: the matching layer
    /// applies participation constraints itself when asked.
    pub ir_screen: bool,
    /// Split the instance into independent components and enumerate them
    /// in parallel.
    pub decompose: bool,
    pub trip: TripOptions,
}

impl Default for RtvOptions {
    fn default() -> Self {
        RtvOptions {
            max_trip_size: DEFAULT_MAX_TRIP_SIZE,
            ir_screen: false,
            decompose: true,
            trip: TripOptions::default(),
        }
    }
}

/// Which driver-rider pairs can share a feasible trip at all, and which
/// rider pairs could ever ride together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RvGraph {
    /// Per driver: riders with a feasible two-person ride, sorted.
    pub driver_rider: Vec<Vec<usize>>,
    /// Per rider: compatible riders, sorted.
    pub rider_rider: Vec<Vec<usize>>,
}

pub fn build_rv(inst: &Instance, cache: &TripCache, opts: &RtvOptions) -> RvGraph {
    // Singleton searches are trivial; warm starts would only introduce
    // order dependence across the parallel loop.
    let solo_opts = TripOptions { warm_start: false, ..opts.trip.clone() };

    let driver_rider: Vec<Vec<usize>> = (0..inst.drivers.len())
        .into_par_iter()
        .map(|d| {
            let solo = trip_cost(inst, cache, d, &[], &solo_opts);
            let solo_utility = match &solo {
                TripResult::Feasible(s) => inst.drivers[d].base.value - s.cost,
                TripResult::Infeasible => f64::NEG_INFINITY,
            };
            (0..inst.riders.len())
                .filter(|&r| {
                    let res = trip_cost(inst, cache, d, &[r], &solo_opts);
                    let Some(sched) = res.schedule() else { return false };
                    if !opts.ir_screen {
                        return true;
                    }
                    let rider = &inst.riders[r];
                    let rider_util = rider.base.value - sched.rider_costs[0].1;
                    let driver = &inst.drivers[d];
                    let driver_util = driver.base.value - sched.driver_cost
                        + driver.rho * rider_util;
                    driver_util >= solo_utility - 1e-9
                        && rider_util >= rider.base.value - rider.lambda - 1e-9
                })
                .collect()
        })
        .collect();

    let rider_rider: Vec<Vec<usize>> = (0..inst.riders.len())
        .into_par_iter()
        .map(|r| {
            (0..inst.riders.len())
                .filter(|&s| s != r && riders_compatible(inst, r.min(s), r.max(s)))
                .collect()
        })
        .collect();

    RvGraph { driver_rider, rider_rider }
}

/// An independent subproblem: no feasible trip crosses component borders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub drivers: Vec<usize>,
    pub riders: Vec<usize>,
}

/// Partition users by connectivity in the pair graph. Users who cannot
/// share any ride end up in singleton components.
pub fn decompose(inst: &Instance, rv: &RvGraph) -> Vec<Component> {
    let nd = inst.drivers.len();
    let nr = inst.riders.len();
    let mut parent: Vec<usize> = (0..nd + nr).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for (d, riders) in rv.driver_rider.iter().enumerate() {
        for &r in riders {
            union(&mut parent, d, nd + r);
        }
    }
    for (r, others) in rv.rider_rider.iter().enumerate() {
        for &s in others {
            union(&mut parent, nd + r, nd + s);
        }
    }

    let mut groups: HashMap<usize, Component> = HashMap::new();
    for d in 0..nd {
        let root = find(&mut parent, d);
        groups.entry(root).or_insert_with(|| Component { drivers: vec![], riders: vec![] })
            .drivers
            .push(d);
    }
    for r in 0..nr {
        let root = find(&mut parent, nd + r);
        groups.entry(root).or_insert_with(|| Component { drivers: vec![], riders: vec![] })
            .riders
            .push(r);
    }
    let mut out: Vec<Component> = groups.into_values().collect();
    for c in &mut out {
        c.drivers.sort_unstable();
        c.riders.sort_unstable();
    }
    out.sort_by_key(|c| (c.drivers.first().copied().unwrap_or(usize::MAX), c.riders.first().copied()));
    out
}

/// One priced way for a driver to serve a rider set. `riders` is sorted;
/// the empty set is the solo drive. Utilities fold deviation, travel, and
/// the driver's share of rider welfare; they are what the participation
/// and stability constraints compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripOption {
    pub riders: Vec<usize>,
    pub cost: f64,
    pub driver_utility: f64,
    pub rider_utilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<DriverSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverColumns {
    pub id: String,
    /// `options[0]` is always the solo drive.
    pub options: Vec<TripOption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderInfo {
    pub id: String,
    /// Cost of the fallback mode; the price of leaving the rider out.
    pub lambda: f64,
    pub unmatched_utility: f64,
}

/// Everything the matching layer needs: per-driver priced trip options,
/// per-rider fallback data, and the component structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingProblem {
    pub drivers: Vec<DriverColumns>,
    pub riders: Vec<RiderInfo>,
    pub components: Vec<Component>,
}

impl MatchingProblem {
    /// Riders that appear in at least one trip option.
    pub fn feasible_riders(&self) -> Vec<usize> {
        let mut seen = vec![false; self.riders.len()];
        for d in &self.drivers {
            for opt in &d.options {
                for &r in &opt.riders {
                    seen[r] = true;
                }
            }
        }
        (0..self.riders.len()).filter(|&r| seen[r]).collect()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let nr = self.riders.len();
        let mut in_component = vec![false; self.drivers.len() + nr];
        for c in &self.components {
            for &d in &c.drivers {
                if d >= self.drivers.len() || std::mem::replace(&mut in_component[d], true) {
                    out.push(format!("driver {d} missing or repeated in components"));
                }
            }
            for &r in &c.riders {
                if r >= nr || std::mem::replace(&mut in_component[self.drivers.len() + r], true) {
                    out.push(format!("rider {r} missing or repeated in components"));
                }
            }
        }
        if !in_component.iter().all(|&x| x) {
            out.push("components do not cover every user".into());
        }
        for (d, col) in self.drivers.iter().enumerate() {
            if col.options.first().map_or(true, |o| !o.riders.is_empty()) {
                out.push(format!("driver {d} lacks a leading solo option"));
            }
            let mut seen = HashSet::new();
            for opt in &col.options {
                if opt.riders.windows(2).any(|w| w[0] >= w[1]) {
                    out.push(format!("driver {d}: unsorted rider set {:?}", opt.riders));
                }
                if opt.riders.iter().any(|&r| r >= nr) {
                    out.push(format!("driver {d}: rider out of range in {:?}", opt.riders));
                }
                if opt.rider_utilities.len() != opt.riders.len() {
                    out.push(format!("driver {d}: utility arity mismatch on {:?}", opt.riders));
                }
                if !opt.cost.is_finite() {
                    out.push(format!("driver {d}: non-finite cost on {:?}", opt.riders));
                }
                if !seen.insert(opt.riders.clone()) {
                    out.push(format!("driver {d}: duplicate option {:?}", opt.riders));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("problem serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, crate::model::ModelError> {
        let p: MatchingProblem = serde_json::from_str(text)
            .map_err(|e| crate::model::ModelError::Parse(e.to_string()))?;
        let violations = p.validate();
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(crate::model::ModelError::Invalid(violations.join("; ")))
        }
    }
}

fn option_from_schedule(inst: &Instance, d: usize, sched: &DriverSchedule) -> TripOption {
    let driver = &inst.drivers[d];
    let riders: Vec<usize> = sched.rider_costs.iter().map(|&(r, _)| r).collect();
    let rider_utilities: Vec<f64> =
        sched.rider_costs.iter().map(|&(r, c)| inst.riders[r].base.value - c).collect();
    let driver_utility = driver.base.value - sched.driver_cost
        + driver.rho * rider_utilities.iter().sum::<f64>();
    TripOption {
        riders,
        cost: sched.cost,
        driver_utility,
        rider_utilities,
        schedule: Some(sched.clone()),
    }
}

/// All feasible priced trips for every driver in one component.
/// Levels run across drivers so that one driver's size-h results are
/// available as warm starts when the next driver prices the same set.
fn enumerate_component(
    inst: &Instance,
    cache: &TripCache,
    rv: &RvGraph,
    comp: &Component,
    opts: &RtvOptions,
) -> Vec<(usize, Vec<TripOption>)> {
    let mut per_driver: Vec<(usize, Vec<TripOption>)> = Vec::new();
    let mut frontier: HashMap<usize, Vec<Vec<usize>>> = HashMap::new();

    for &d in &comp.drivers {
        let solo = trip_cost(inst, cache, d, &[], &opts.trip)
            .schedule()
            .map(|s| option_from_schedule(inst, d, s))
            .expect("a validated driver can always drive alone");
        let mut options = vec![solo];
        let mut level1 = Vec::new();
        for &r in &rv.driver_rider[d] {
            if let TripResult::Feasible(s) = trip_cost(inst, cache, d, &[r], &opts.trip) {
                options.push(option_from_schedule(inst, d, &s));
                level1.push(vec![r]);
            }
        }
        frontier.insert(d, level1);
        per_driver.push((d, options));
    }

    let mut size = 2;
    loop {
        let mut any = false;
        for (d, options) in per_driver.iter_mut() {
            let d = *d;
            if size > inst.drivers[d].capacity.min(opts.max_trip_size) {
                continue;
            }
            let prev = &frontier[&d];
            if prev.is_empty() {
                continue;
            }
            let prev_set: HashSet<&[usize]> = prev.iter().map(|s| s.as_slice()).collect();
            let mut next: Vec<Vec<usize>> = Vec::new();
            let mut tried: HashSet<Vec<usize>> = HashSet::new();
            for set in prev {
                for &r in &rv.driver_rider[d] {
                    if r <= *set.last().unwrap() {
                        continue;
                    }
                    if !set.iter().all(|&s| rv.rider_rider[s].binary_search(&r).is_ok()) {
                        continue;
                    }
                    let mut cand: Vec<usize> = set.clone();
                    cand.push(r);
                    if !tried.insert(cand.clone()) {
                        continue;
                    }
                    // Every subset one smaller must itself be feasible.
                    let mut sub = Vec::with_capacity(size - 1);
                    let closed = (0..cand.len()).all(|skip| {
                        sub.clear();
                        sub.extend(cand.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &x)| x));
                        prev_set.contains(sub.as_slice())
                    });
                    if !closed {
                        continue;
                    }
                    if let TripResult::Feasible(s) = trip_cost(inst, cache, d, &cand, &opts.trip) {
                        options.push(option_from_schedule(inst, d, &s));
                        next.push(cand);
                    }
                }
            }
            if !next.is_empty() {
                any = true;
            }
            frontier.insert(d, next);
        }
        if !any {
            break;
        }
        size += 1;
    }
    per_driver
}

/// Enumerate and price every feasible trip, returning the assignment
/// problem the matching layer consumes.
pub fn build_rtv(inst: &Instance, cache: &TripCache, opts: &RtvOptions) -> MatchingProblem {
    let rv = build_rv(inst, cache, opts);
    let components = if opts.decompose {
        decompose(inst, &rv)
    } else {
        vec![Component {
            drivers: (0..inst.drivers.len()).collect(),
            riders: (0..inst.riders.len()).collect(),
        }]
    };

    let enumerated: Vec<Vec<(usize, Vec<TripOption>)>> = components
        .par_iter()
        .map(|comp| enumerate_component(inst, cache, &rv, comp, opts))
        .collect();

    let mut drivers: Vec<DriverColumns> = inst
        .drivers
        .iter()
        .map(|d| DriverColumns { id: d.base.id.clone(), options: Vec::new() })
        .collect();
    for group in enumerated {
        for (d, options) in group {
            drivers[d].options = options;
        }
    }
    let riders = inst
        .riders
        .iter()
        .map(|r| RiderInfo {
            id: r.base.id.clone(),
            lambda: r.lambda,
            unmatched_utility: r.base.value - r.lambda,
        })
        .collect();
    MatchingProblem { drivers, riders, components }
}

/// Per-driver summary of how uneven the driver's trip prices are; feeds
/// the worst-case price bounds below.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverStats {
    pub driver: usize,
    /// Riders appearing in any of the driver's options.
    pub feasible_riders: Vec<usize>,
    /// Riders this driver serves in the reference minimum-cost matching.
    pub assigned: Vec<usize>,
    /// Worst option price over the assigned option's price, where an
    /// option is priced with the fallback penalties of the feasible
    /// riders it leaves out. A plain trip-cost ratio understates how
    /// much rotating the driver onto another trip really costs the
    /// system (the abandoned riders fall back), and the price bounds
    /// below would not dominate measured ratios. Undefined when the
    /// assigned option prices at zero.
    pub cost_ratio: Option<f64>,
}

/// `assigned_option[d]` is the option index driver `d` uses in a
/// minimum-cost matching.
pub fn driver_stats(problem: &MatchingProblem, assigned_option: &[usize]) -> Vec<DriverStats> {
    assert_eq!(assigned_option.len(), problem.drivers.len());
    problem
        .drivers
        .iter()
        .enumerate()
        .map(|(d, col)| {
            let mut feasible: Vec<usize> = col.options.iter().flat_map(|o| o.riders.clone()).collect();
            feasible.sort_unstable();
            feasible.dedup();
            let left_out = |opt: &TripOption| -> f64 {
                feasible
                    .iter()
                    .filter(|r| !opt.riders.contains(r))
                    .map(|&r| problem.riders[r].lambda)
                    .sum()
            };
            let chosen = &col.options[assigned_option[d]];
            let base = chosen.cost + left_out(chosen);
            let worst = col
                .options
                .iter()
                .map(|o| o.cost + left_out(o))
                .fold(f64::NEG_INFINITY, f64::max);
            let cost_ratio = if base > 1e-12 { Some(worst / base) } else { None };
            DriverStats {
                driver: d,
                feasible_riders: feasible,
                assigned: chosen.riders.clone(),
                cost_ratio,
            }
        })
        .collect()
}

/// Largest fairness threshold for which the price bounds below apply:
/// one over the largest feasible-rider pool.
pub fn max_applicable_theta(stats: &[DriverStats]) -> f64 {
    stats
        .iter()
        .filter(|s| !s.feasible_riders.is_empty())
        .map(|s| 1.0 / s.feasible_riders.len() as f64)
        .fold(1.0, f64::min)
}

/// Worst-case ratio of the cheapest fair distribution at threshold
/// `theta` to the unconstrained minimum cost. `None` when `theta` is out
/// of the applicable range or a needed cost ratio is undefined.
pub fn pof_bound(stats: &[DriverStats], theta: f64) -> Option<f64> {
    if theta < 0.0 || theta > max_applicable_theta(stats) + 1e-12 {
        return None;
    }
    let mut bound = 1.0f64;
    for s in stats {
        let n = s.feasible_riders.len();
        if n == 0 {
            continue;
        }
        let ratio = s.cost_ratio?;
        let term = if s.assigned.is_empty() {
            theta * n as f64 * (ratio - 1.0) + 1.0
        } else {
            theta * (n as f64 - 1.0) * (ratio - 1.0) + 1.0
        };
        bound = bound.max(term);
    }
    Some(bound)
}

/// Worst-case ratio of the cheapest stable matching to the unconstrained
/// minimum cost, from the same per-driver statistics.
pub fn spof_bound(stats: &[DriverStats]) -> Option<f64> {
    let mut bound = 1.0f64;
    for s in stats {
        let n = s.feasible_riders.len();
        if n == 0 {
            continue;
        }
        let ratio = s.cost_ratio?;
        let term = if s.assigned.is_empty() {
            ratio
        } else {
            (n as f64 - 1.0) * (ratio - 1.0) / n as f64 + 1.0
        };
        bound = bound.max(term);
    }
    Some(bound)
}

/// Convenience for `decompose` callers that want user handles.
pub fn component_users(c: &Component) -> Vec<UserRef> {
    c.drivers
        .iter()
        .map(|&d| UserRef::Driver(d))
        .chain(c.riders.iter().map(|&r| UserRef::Rider(r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::hub_instance;
    use crate::model::Location;
    use crate::testutil::small_instance;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn hub_rv_is_complete() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let rv = build_rv(&inst, &cache, &RtvOptions::default());
        assert_eq!(rv.driver_rider, vec![vec![0, 1, 2]; 3]);
        assert_eq!(rv.rider_rider, vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
    }

    #[test]
    fn hub_ir_screen_drops_own_rider_edges() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let opts = RtvOptions { ir_screen: true, ..RtvOptions::default() };
        let rv = build_rv(&inst, &cache, &opts);
        // Serving the co-located rider alone costs the driver 104 against 4
        // solo; only the cross-town pairs survive the participation screen.
        assert_eq!(rv.driver_rider, vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
    }

    #[test]
    fn hub_options_and_prices() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let problem = build_rtv(&inst, &cache, &RtvOptions::default());
        assert_eq!(problem.validate(), Vec::<String>::new());
        assert_eq!(problem.components.len(), 1);
        assert_eq!(problem.feasible_riders(), vec![0, 1, 2]);

        for (d, col) in problem.drivers.iter().enumerate() {
            // Solo, three singles, and the two pairs containing the driver's
            // co-located rider. Pairs without that rider miss the riders'
            // shared deadline, and capacity 2 blocks the triple.
            assert_eq!(col.options.len(), 6, "driver {d}");
            let by_set = |set: &[usize]| {
                col.options.iter().find(|o| o.riders == set).unwrap_or_else(|| {
                    panic!("driver {d} lacks option {set:?}")
                })
            };
            assert!(close(by_set(&[]).cost, 4.0));
            assert!(close(by_set(&[]).driver_utility, 996.0));
            assert!(close(by_set(&[d]).cost, 107.0));
            assert!(close(by_set(&[d]).driver_utility, 963.0));
            assert!(close(by_set(&[d]).rider_utilities[0], 67.0));
            let others: Vec<usize> = (0..3).filter(|&r| r != d).collect();
            for &r in &others {
                assert!(close(by_set(&[r]).cost, 14.0));
                assert!(close(by_set(&[r]).driver_utility, 1056.0));

                let mut pair = vec![d, r];
                pair.sort_unstable();
                let o = by_set(&pair);
                assert!(close(o.cost, 128.0));
                assert!(close(o.driver_utility, 1012.0));
                // Own rider rides longer and pays 7; the other deviates and pays 13.
                let own_pos = pair.iter().position(|&x| x == d).unwrap();
                assert!(close(o.rider_utilities[own_pos], 63.0));
                assert!(close(o.rider_utilities[1 - own_pos], 57.0));
            }
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for seed in 200..230u64 {
            let inst = small_instance(seed, 2, 4);
            let cache = TripCache::new();
            let problem = build_rtv(&inst, &cache, &RtvOptions::default());

            let brute_cache = TripCache::new();
            let solo = TripOptions { warm_start: false, shuffle_tries: 0 };
            for d in 0..inst.drivers.len() {
                let cap = inst.drivers[d].capacity.min(DEFAULT_MAX_TRIP_SIZE);
                let mut want: Vec<(Vec<usize>, f64)> = Vec::new();
                for mask in 0u32..1 << inst.riders.len() {
                    let set: Vec<usize> =
                        (0..inst.riders.len()).filter(|r| mask >> r & 1 == 1).collect();
                    if set.len() > cap {
                        continue;
                    }
                    if let TripResult::Feasible(s) =
                        trip_cost(&inst, &brute_cache, d, &set, &solo)
                    {
                        want.push((set, s.cost));
                    }
                }
                let mut got: Vec<(Vec<usize>, f64)> = problem.drivers[d]
                    .options
                    .iter()
                    .map(|o| (o.riders.clone(), o.cost))
                    .collect();
                got.sort_by(|a, b| a.0.cmp(&b.0));
                want.sort_by(|a, b| a.0.cmp(&b.0));
                assert_eq!(got.len(), want.len(), "seed {seed} driver {d}");
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.0, w.0, "seed {seed} driver {d}");
                    assert!(close(g.1, w.1), "seed {seed} driver {d}: {} vs {}", g.1, w.1);
                }
            }
        }
    }

    #[test]
    fn distant_clusters_split_into_components() {
        let mut inst = small_instance(42, 2, 3);
        let far = small_instance(43, 2, 3);
        let base_locs = inst.locations.len();
        for mut l in far.locations {
            if let Some(p) = &mut l.point {
                p[0] += 1000.0;
                p[1] += 1000.0;
            }
            l.id = format!("far_{}", l.id);
            inst.locations.push(Location { id: l.id, point: l.point });
        }
        for mut d in far.drivers {
            d.base.id = format!("far_{}", d.base.id);
            d.base.origin += base_locs;
            d.base.destination += base_locs;
            inst.drivers.push(d);
        }
        for mut r in far.riders {
            r.base.id = format!("far_{}", r.base.id);
            r.base.origin += base_locs;
            r.base.destination += base_locs;
            inst.riders.push(r);
        }
        assert_eq!(inst.validate(), Vec::<String>::new());

        let cache = TripCache::new();
        let problem = build_rtv(&inst, &cache, &RtvOptions::default());
        assert!(problem.components.len() >= 2, "{:?}", problem.components);
        // No option may span the two clusters.
        for (d, col) in problem.drivers.iter().enumerate() {
            for o in &col.options {
                for &r in &o.riders {
                    assert_eq!(d < 2, r < 3, "option {:?} of driver {d} crosses clusters", o.riders);
                }
            }
        }
    }

    #[test]
    fn problem_json_round_trip() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let problem = build_rtv(&inst, &cache, &RtvOptions::default());
        let back = MatchingProblem::from_json(&problem.to_json()).unwrap();
        assert_eq!(back, problem);
    }

    #[test]
    fn stats_and_bounds() {
        let stats = vec![
            DriverStats {
                driver: 0,
                feasible_riders: vec![0, 1, 2],
                assigned: vec![0],
                cost_ratio: Some(3.0),
            },
            DriverStats {
                driver: 1,
                feasible_riders: vec![0, 1],
                assigned: vec![],
                cost_ratio: Some(2.0),
            },
        ];
        assert!(close(max_applicable_theta(&stats), 1.0 / 3.0));
        // Driver 0: theta*2*2+1, driver 1: theta*2*1+1; at theta=0.25 the
        // first dominates.
        assert!(close(pof_bound(&stats, 0.25).unwrap(), 2.0));
        assert_eq!(pof_bound(&stats, 0.4), None);
        assert!(pof_bound(&stats, 0.0).unwrap() == 1.0);
        // Driver 0: 2*2/3+1, driver 1: ratio itself.
        assert!(close(spof_bound(&stats).unwrap(), 1.0 + 4.0 / 3.0));

        let undefined = vec![DriverStats {
            driver: 0,
            feasible_riders: vec![0],
            assigned: vec![0],
            cost_ratio: None,
        }];
        assert_eq!(pof_bound(&undefined, 0.1), None);
        assert_eq!(spof_bound(&undefined), None);
    }

    #[test]
    fn stats_come_from_the_problem() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let problem = build_rtv(&inst, &cache, &RtvOptions::default());
        // Assign every driver their own-rider pair's cheaper cross single.
        let assigned: Vec<usize> = problem
            .drivers
            .iter()
            .map(|col| col.options.iter().position(|o| o.riders.is_empty()).unwrap())
            .collect();
        let stats = driver_stats(&problem, &assigned);
        for s in &stats {
            assert_eq!(s.feasible_riders, vec![0, 1, 2]);
            assert!(s.assigned.is_empty());
            // Priciest option is the own-rider single (107 plus two
            // abandoned fallbacks at 70) against the solo base of 4
            // plus all three fallbacks.
            assert!(close(s.cost_ratio.unwrap(), 247.0 / 214.0));
        }
    }

    #[test]
    fn matrix_without_geometry_still_enumerates() {
        let inst = hub_instance();
        let cache = TripCache::new();
        let opts = RtvOptions { decompose: false, ..RtvOptions::default() };
        let problem = build_rtv(&inst, &cache, &opts);
        assert_eq!(problem.components.len(), 1);
        assert_eq!(problem.drivers.iter().map(|c| c.options.len()).sum::<usize>(), 18);
    }
}
