//! Random small instances for unit tests. Always validate-clean; windows
//! are tight enough that some trips come out infeasible, which the oracle
//! comparisons need.

use crate::model::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub(crate) fn small_instance(seed: u64, n_drivers: usize, n_riders: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let horizon = 200.0;
    let mut locations = Vec::new();
    // Everyone travels roughly southwest-to-northeast so shared trips exist.
    let point = |rng: &mut ChaCha8Rng, lo: f64| -> [f64; 2] {
        [lo + rng.gen_range(0.0..8.0), lo + rng.gen_range(0.0..8.0)]
    };

    let make_base = |rng: &mut ChaCha8Rng, id: String, locations: &mut Vec<Location>| {
        let o = point(rng, 0.0);
        let q = point(rng, 12.0);
        let origin = locations.len();
        locations.push(Location { id: format!("{id}_o"), point: Some(o) });
        let destination = locations.len();
        locations.push(Location { id: format!("{id}_q"), point: Some(q) });
        let direct = ((o[0] - q[0]).powi(2) + (o[1] - q[1]).powi(2)).sqrt();
        let earliest = rng.gen_range(0.0..25.0);
        let latest = earliest + direct * rng.gen_range(1.2..2.0) + rng.gen_range(2.0..12.0);
        let preferred = earliest + rng.gen::<f64>() * (latest - direct - earliest);
        UserBase {
            id,
            origin,
            destination,
            window: TimeWindow { earliest, latest },
            preferred,
            max_detour: direct * rng.gen_range(0.2..0.9) + rng.gen_range(0.0..4.0),
            value: 0.0,
            c_dev: rng.gen_range(0.5..3.0),
            c_trl: rng.gen_range(1.0..4.0),
        }
    };

    let mut drivers = Vec::new();
    for i in 0..n_drivers {
        let mut base = make_base(&mut rng, format!("d{i}"), &mut locations);
        let direct = dist(&locations, base.origin, base.destination);
        base.max_detour = direct * rng.gen_range(0.8..2.0) + rng.gen_range(5.0..15.0);
        base.window.latest = base.window.earliest + direct + base.max_detour;
        base.preferred = base.preferred.clamp(base.window.earliest, base.window.latest - direct);
        base.value = base.c_trl * direct * rng.gen_range(1.2..2.5);
        drivers.push(Driver { base, capacity: rng.gen_range(2..=4), rho: rng.gen_range(0.0..1.5) });
    }
    let mut riders = Vec::new();
    for i in 0..n_riders {
        let mut base = make_base(&mut rng, format!("r{i}"), &mut locations);
        let direct = dist(&locations, base.origin, base.destination);
        let floor = base.c_trl * direct;
        base.value = floor * rng.gen_range(1.2..2.5);
        let lambda = floor + rng.gen::<f64>() * (base.value - floor);
        riders.push(Rider { base, lambda });
    }

    let inst = Instance {
        horizon,
        locations,
        travel: TravelTime::Euclidean { minutes_per_unit: 1.0 },
        drivers,
        riders,
    };
    debug_assert_eq!(inst.validate(), Vec::<String>::new());
    inst
}

fn dist(locations: &[Location], u: usize, v: usize) -> f64 {
    let a = locations[u].point.unwrap();
    let b = locations[v].point.unwrap();
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
