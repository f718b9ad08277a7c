//! Hand-built instances with externally verified optima. Used by tests and
//! by `oracle-check` as known-answer inputs.
//!
//! The JSON copies under `fixtures/` are committed; `regenerate_fixture_files`
//! (ignored by default) rewrites them from the constructors here.

use crate::model::*;
use crate::rtv::{Component, DriverColumns, MatchingProblem, RiderInfo, TripOption};

/// Three commuters drive to a shared hub; three riders start where the
/// drivers start. Solo rides violate the drivers' participation threshold
/// while shared rides clear it, so matchings are forced into pair trips
/// with asymmetric rider costs. Road graph, not a grid: co-located stops
/// are distinct locations with zero travel time between them.
pub fn hub_instance() -> Instance {
    // Base graph: origin triangle, destination triangle, one hub.
    const N: usize = 7;
    let (oa, ob, oc, qa, qb, qc, q) = (0, 1, 2, 3, 4, 5, 6);
    let edges = [
        (oa, qa, 3.0),
        (ob, qb, 3.0),
        (oc, qc, 3.0),
        (oa, ob, 2.0),
        (ob, oc, 2.0),
        (oc, oa, 2.0),
        (qa, qb, 2.0),
        (qb, qc, 2.0),
        (qc, qa, 2.0),
        (qa, q, 1.0),
        (qb, q, 1.0),
        (qc, q, 1.0),
    ];
    let mut d = [[f64::INFINITY; N]; N];
    for i in 0..N {
        d[i][i] = 0.0;
    }
    for &(u, v, w) in &edges {
        d[u][v] = w;
        d[v][u] = w;
    }
    for k in 0..N {
        for i in 0..N {
            for j in 0..N {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }

    // One location per user endpoint, mapped onto the base nodes.
    let placements = [
        ("d1_o", oa),
        ("d1_q", q),
        ("d2_o", ob),
        ("d2_q", q),
        ("d3_o", oc),
        ("d3_q", q),
        ("r1_o", oa),
        ("r1_q", qa),
        ("r2_o", ob),
        ("r2_q", qb),
        ("r3_o", oc),
        ("r3_q", qc),
    ];
    let locations: Vec<Location> =
        placements.iter().map(|(id, _)| Location { id: (*id).into(), point: None }).collect();
    let n = placements.len();
    let mut minutes = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            minutes[i * n + j] = d[placements[i].1][placements[j].1];
        }
    }

    let driver = |i: usize| Driver {
        base: UserBase {
            id: format!("d{}", i + 1),
            origin: 2 * i,
            destination: 2 * i + 1,
            window: TimeWindow { earliest: 0.0, latest: 10.0 },
            preferred: 0.0,
            max_detour: 10.0,
            value: 1000.0,
            c_dev: 100.0,
            c_trl: 1.0,
        },
        capacity: 2,
        rho: 1.0,
    };
    let rider = |i: usize| Rider {
        base: UserBase {
            id: format!("r{}", i + 1),
            origin: 6 + 2 * i,
            destination: 7 + 2 * i,
            window: TimeWindow { earliest: 1.0, latest: 8.0 },
            preferred: 1.0,
            max_detour: 7.0,
            value: 70.0,
            c_dev: 5.0,
            c_trl: 1.0,
        },
        lambda: 70.0,
    };

    Instance {
        horizon: 10.0,
        locations,
        travel: TravelTime::Matrix { minutes, n },
        drivers: (0..3).map(driver).collect(),
        riders: (0..3).map(rider).collect(),
    }
}

fn option(riders: &[usize], cost: f64, driver_utility: f64, rider_utilities: &[f64]) -> TripOption {
    TripOption {
        riders: riders.to_vec(),
        cost,
        driver_utility,
        rider_utilities: rider_utilities.to_vec(),
        schedule: None,
    }
}

fn one_component(n_drivers: usize, n_riders: usize) -> Vec<Component> {
    vec![Component {
        drivers: (0..n_drivers).collect(),
        riders: (0..n_riders).collect(),
    }]
}

/// Priced cost table with no stable assignment. Drivers rank pair trips
/// (1012) over driving alone (996) over a single pickup (963); a rider
/// does best riding alone with their own driver (67), worse paired with
/// them (63), worst as the add-on in another pair (57). Every matching
/// leaves someone who would rather switch. Minimum cost is 206: one pair
/// trip, two solo drives, one fallback.
pub fn no_stable_problem() -> MatchingProblem {
    let mut drivers = Vec::new();
    for i in 0..3usize {
        let mut options = vec![option(&[], 4.0, 996.0, &[])];
        options.push(option(&[i], 107.0, 963.0, &[67.0]));
        for j in 0..3usize {
            if j == i {
                continue;
            }
            let pair = if i < j { [i, j] } else { [j, i] };
            let utils: Vec<f64> = pair
                .iter()
                .map(|&r| if r == i { 63.0 } else { 57.0 })
                .collect();
            options.push(option(&pair, 128.0, 1012.0, &utils));
        }
        drivers.push(DriverColumns { id: format!("d{}", i + 1), options });
    }
    let riders = (0..3)
        .map(|i| RiderInfo {
            id: format!("r{}", i + 1),
            lambda: 70.0,
            unmatched_utility: 0.0,
        })
        .collect();
    MatchingProblem { drivers, riders, components: one_component(3, 3) }
}

/// One driver, one cheap rider, one expensive rider. Raising the
/// coverage floor first spreads probability onto the expensive single
/// trip, then onto the overpriced pair trip, so the cost of fairness is
/// piecewise linear with a kink at one half.
pub fn tradeoff_problem() -> MatchingProblem {
    const EPS: f64 = 1e-3;
    const STEEP: f64 = 10.0;
    let options = vec![
        option(&[], 1.0 - EPS, -(1.0 - EPS), &[]),
        option(&[0], 1.0 - EPS, -(1.0 - EPS), &[0.0]),
        option(&[1], STEEP - EPS, -(STEEP - EPS), &[0.0]),
        option(&[0, 1], STEEP + 1.0, -(STEEP + 1.0), &[0.0, 0.0]),
    ];
    let riders = (0..2)
        .map(|i| RiderInfo {
            id: format!("r{}", i + 1),
            lambda: EPS,
            unmatched_utility: -EPS,
        })
        .collect();
    MatchingProblem {
        drivers: vec![DriverColumns { id: "d1".into(), options }],
        riders,
        components: one_component(1, 2),
    }
}

/// Two drivers, two riders, one missing pairing. The only stable
/// assignment sends the expensive driver out empty, costing five orders
/// of magnitude more than the cost-minimizing one.
pub fn costly_stability_problem() -> MatchingProblem {
    const EPS: f64 = 1e-3;
    const STIFF: f64 = 100.0;
    let d0 = DriverColumns {
        id: "d1".into(),
        options: vec![
            option(&[], 0.0, 1.0, &[]),
            option(&[0], 0.0, 10.0, &[10.0]),
            option(&[1], EPS, 5.0, &[5.0]),
        ],
    };
    let d1 = DriverColumns {
        id: "d2".into(),
        options: vec![
            option(&[], STIFF, 1.0, &[]),
            option(&[0], EPS, 5.0, &[5.0]),
        ],
    };
    let riders = (0..2)
        .map(|i| RiderInfo {
            id: format!("r{}", i + 1),
            lambda: STIFF,
            unmatched_utility: -STIFF,
        })
        .collect();
    MatchingProblem {
        drivers: vec![d0, d1],
        riders,
        components: one_component(2, 2),
    }
}

/// One driver, five riders, mutually exclusive coverage. Riders three
/// through five are only reachable via trips the driver and the favored
/// rider both want to walk away from, so any distribution fair to them
/// carries ex-post blocking pairs; at fairness zero the point mass on
/// the cheap trip is clean.
pub fn expost_conflict_problem() -> MatchingProblem {
    const EPS: f64 = 1e-3;
    const STIFF: f64 = 100.0;
    let mut options = vec![
        option(&[], 0.0, 10.0, &[]),
        option(&[0], EPS, 20.0, &[50.0]),
    ];
    for i in 1..5usize {
        options.push(option(&[i], STIFF, 5.0, &[30.0]));
    }
    options.push(option(&[0, 1], STIFF, 6.0, &[40.0, 30.0]));
    let riders = (0..5)
        .map(|i| RiderInfo {
            id: format!("r{}", i + 1),
            lambda: 1.0,
            unmatched_utility: 0.0,
        })
        .collect();
    MatchingProblem {
        drivers: vec![DriverColumns { id: "d1".into(), options }],
        riders,
        components: one_component(1, 5),
    }
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hub_instance_is_clean() {
        assert_eq!(hub_instance().validate(), Vec::<String>::new());
    }

    #[test]
    fn hub_distances() {
        let inst = hub_instance();
        let id = |want: &str| inst.locations.iter().position(|l| l.id == want).unwrap();
        let t = |a: &str, b: &str| inst.time(id(a), id(b));
        assert_eq!(t("d1_o", "r1_o"), 0.0); // co-located start
        assert_eq!(t("r1_o", "r1_q"), 3.0);
        assert_eq!(t("r1_q", "d1_q"), 1.0);
        assert_eq!(t("d1_o", "d1_q"), 4.0);
        assert_eq!(t("r1_o", "r2_o"), 2.0);
        assert_eq!(t("r1_q", "r2_q"), 2.0);
        assert_eq!(t("d1_o", "r2_q"), 5.0); // shortest path through either triangle
        // Symmetry survives the shortest-path closure.
        for u in 0..inst.locations.len() {
            for v in 0..inst.locations.len() {
                assert_eq!(inst.time(u, v), inst.time(v, u));
            }
        }
    }

    #[test]
    fn hub_instance_file_matches_constructor() {
        let path = fixture_dir().join("hub_instance.json");
        let loaded = load_instance(&path).unwrap();
        assert_eq!(loaded.instance, hub_instance());
    }

    fn problem_fixtures() -> Vec<(&'static str, MatchingProblem)> {
        vec![
            ("no_stable_problem.json", no_stable_problem()),
            ("tradeoff_problem.json", tradeoff_problem()),
            ("costly_stability_problem.json", costly_stability_problem()),
            ("expost_conflict_problem.json", expost_conflict_problem()),
        ]
    }

    #[test]
    fn problem_fixtures_are_clean() {
        for (name, p) in problem_fixtures() {
            assert_eq!(p.validate(), Vec::<String>::new(), "{name}");
        }
    }

    #[test]
    fn problem_fixture_files_match_constructors() {
        for (name, p) in problem_fixtures() {
            let text = std::fs::read_to_string(fixture_dir().join(name)).unwrap();
            assert_eq!(MatchingProblem::from_json(&text).unwrap(), p, "{name}");
        }
    }

    #[test]
    #[ignore]
    fn regenerate_fixture_files() {
        std::fs::create_dir_all(fixture_dir()).unwrap();
        save_instance(&hub_instance(), &fixture_dir().join("hub_instance.json")).unwrap();
        for (name, p) in problem_fixtures() {
            std::fs::write(fixture_dir().join(name), p.to_json()).unwrap();
        }
    }
}
