//! Domain model: users, travel times, instances, and instance files.
//!
//! An instance is immutable once loaded/validated; every later stage only
//! reads it. Times are minutes as f64 on the horizon [0, T]. Co-located
//! stops are distinct locations (each location belongs to exactly one
//! user endpoint), so routes can reference "the driver's origin" and "the
//! rider's origin" separately even when they coincide geometrically.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
    #[error("invalid: {0}")]
    Invalid(String),
}

/// Index into `Instance::locations`.
pub type LocId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    /// Grid coordinates; None for matrix-backed instances.
    pub point: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub earliest: f64,
    pub latest: f64,
}

/// Travel times in minutes between locations.
#[derive(Debug, Clone, PartialEq)]
pub enum TravelTime {
    /// Euclidean distance over location points, scaled to minutes.
    Euclidean { minutes_per_unit: f64 },
    /// Explicit row-major matrix over location indices.
    Matrix { minutes: Vec<f64>, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserBase {
    pub id: String,
    pub origin: LocId,
    pub destination: LocId,
    pub window: TimeWindow,
    /// Preferred departure time from the origin.
    pub preferred: f64,
    /// Extra travel time the user tolerates beyond the direct trip.
    pub max_detour: f64,
    /// Trip value.
    pub value: f64,
    /// Cost per minute of departure deviation.
    pub c_dev: f64,
    /// Cost per minute in the vehicle.
    pub c_trl: f64,
}

impl UserBase {
    /// Cost of leaving the origin at `depart` and arriving at `arrive`:
    /// deviation from the preferred departure plus time spent traveling.
    pub fn trip_cost(&self, depart: f64, arrive: f64) -> Result<f64, ModelError> {
        if depart > arrive {
            return Err(ModelError::Invalid(format!(
                "user {}: departure {depart} after arrival {arrive}",
                self.id
            )));
        }
        Ok(self.c_dev * (depart - self.preferred).abs() + self.c_trl * (arrive - depart))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rider {
    pub base: UserBase,
    /// Cost of the alternative transportation mode when unmatched.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Driver {
    pub base: UserBase,
    /// Rider seats.
    pub capacity: usize,
    /// Extra-utility factor: matched riders' utilities count this much
    /// toward the driver's own.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserRef {
    Driver(usize),
    Rider(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub horizon: f64,
    pub locations: Vec<Location>,
    pub travel: TravelTime,
    pub drivers: Vec<Driver>,
    pub riders: Vec<Rider>,
}

impl Instance {
    pub fn time(&self, u: LocId, v: LocId) -> f64 {
        match &self.travel {
            TravelTime::Euclidean { minutes_per_unit } => {
                let a = self.locations[u].point.expect("euclidean location without point");
                let b = self.locations[v].point.expect("euclidean location without point");
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() * minutes_per_unit
            }
            TravelTime::Matrix { minutes, n } => minutes[u * n + v],
        }
    }

    pub fn base(&self, user: UserRef) -> &UserBase {
        match user {
            UserRef::Driver(i) => &self.drivers[i].base,
            UserRef::Rider(i) => &self.riders[i].base,
        }
    }

    /// Direct origin-to-destination time for a user.
    pub fn direct_time(&self, user: UserRef) -> f64 {
        let b = self.base(user);
        self.time(b.origin, b.destination)
    }

    /// Checks every structural invariant; returns one message per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.locations.len();

        match &self.travel {
            TravelTime::Euclidean { minutes_per_unit } => {
                if !minutes_per_unit.is_finite() || *minutes_per_unit <= 0.0 {
                    out.push(format!("minutes_per_unit must be positive, got {minutes_per_unit}"));
                }
                for loc in &self.locations {
                    if loc.point.is_none() {
                        out.push(format!("location {} lacks coordinates", loc.id));
                    }
                }
            }
            TravelTime::Matrix { minutes, n: mn } => {
                if *mn != n || minutes.len() != n * n {
                    out.push(format!(
                        "matrix is {}x{} but there are {n} locations",
                        mn,
                        if *mn > 0 { minutes.len() / mn } else { 0 }
                    ));
                }
                for (k, &t) in minutes.iter().enumerate() {
                    if !t.is_finite() || t < 0.0 {
                        out.push(format!("matrix entry {k} is {t}, want nonnegative"));
                        break;
                    }
                }
            }
        }

        let mut loc_ids: Vec<&str> = self.locations.iter().map(|l| l.id.as_str()).collect();
        loc_ids.sort_unstable();
        for w in loc_ids.windows(2) {
            if w[0] == w[1] {
                out.push(format!("duplicate location id {}", w[0]));
            }
        }

        let mut refs = vec![0usize; n];
        let mut check_base = |base: &UserBase, out: &mut Vec<String>| {
            if base.origin >= n || base.destination >= n {
                out.push(format!("user {}: endpoint out of range", base.id));
                return;
            }
            refs[base.origin] += 1;
            refs[base.destination] += 1;
            let w = base.window;
            if !(0.0 <= w.earliest && w.earliest <= w.latest && w.latest <= self.horizon) {
                out.push(format!(
                    "user {}: window [{}, {}] outside [0, {}]",
                    base.id, w.earliest, w.latest, self.horizon
                ));
            }
            if base.max_detour < 0.0 {
                out.push(format!("user {}: negative max_detour", base.id));
            }
            for (name, v) in [("c_dev", base.c_dev), ("c_trl", base.c_trl), ("value", base.value)] {
                if !v.is_finite() || v < 0.0 {
                    out.push(format!("user {}: {name} = {v}, want nonnegative", base.id));
                }
            }
        };

        for d in &self.drivers {
            check_base(&d.base, &mut out);
            if d.capacity < 1 {
                out.push(format!("driver {}: capacity must be at least 1", d.base.id));
            }
            if d.rho < 0.0 {
                out.push(format!("driver {}: negative rho", d.base.id));
            }
        }
        for r in &self.riders {
            check_base(&r.base, &mut out);
        }

        let mut user_ids: Vec<&str> = self
            .drivers
            .iter()
            .map(|d| d.base.id.as_str())
            .chain(self.riders.iter().map(|r| r.base.id.as_str()))
            .collect();
        user_ids.sort_unstable();
        for w in user_ids.windows(2) {
            if w[0] == w[1] {
                out.push(format!("duplicate user id {}", w[0]));
            }
        }

        for (j, &count) in refs.iter().enumerate() {
            if count != 1 {
                out.push(format!(
                    "location {} referenced {count} times, want exactly once",
                    self.locations[j].id
                ));
            }
        }

        // Time-dependent checks only make sense once endpoints resolve.
        if out.is_empty() {
            let check_times = |base: &UserBase, lambda: Option<f64>, out: &mut Vec<String>| {
                let direct = self.time(base.origin, base.destination);
                let w = base.window;
                if w.earliest + direct > w.latest + 1e-9 {
                    out.push(format!(
                        "user {}: window cannot fit the direct trip ({direct} min)",
                        base.id
                    ));
                }
                if base.preferred < w.earliest - 1e-9 || base.preferred > w.latest - direct + 1e-9 {
                    out.push(format!(
                        "user {}: preferred departure {} outside [{}, {}]",
                        base.id,
                        base.preferred,
                        w.earliest,
                        w.latest - direct
                    ));
                }
                if let Some(l) = lambda {
                    let floor = base.c_trl * direct;
                    if l < floor - 1e-9 || l > base.value + 1e-9 {
                        out.push(format!(
                            "user {}: lambda {} outside [{floor}, {}]",
                            base.id, l, base.value
                        ));
                    }
                }
            };
            for d in &self.drivers {
                check_times(&d.base, None, &mut out);
            }
            for r in &self.riders {
                check_times(&r.base, Some(r.lambda), &mut out);
            }
        }
        out
    }
}

// -------------------------------------------------------------------------
// Instance files. Field names below are the on-disk contract.

#[derive(Serialize, Deserialize)]
struct RawInstance {
    horizon: f64,
    metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minutes_per_unit: Option<f64>,
    locations: Vec<RawLocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<f64>>,
    drivers: Vec<RawUser>,
    riders: Vec<RawUser>,
}

#[derive(Serialize, Deserialize)]
struct RawLocation {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawUser {
    id: String,
    origin: String,
    destination: String,
    window: [f64; 2],
    preferred: f64,
    max_detour: f64,
    value: f64,
    c_dev: f64,
    c_trl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

#[derive(Debug)]
pub struct LoadedInstance {
    pub instance: Instance,
    /// Repairs applied during loading (currently only lambda clamping).
    pub warnings: Vec<String>,
}

pub fn instance_from_json(text: &str) -> Result<LoadedInstance, ModelError> {
    let raw: RawInstance =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let mut warnings = Vec::new();

    let travel = match raw.metric.as_str() {
        "euclidean" => TravelTime::Euclidean {
            minutes_per_unit: raw.minutes_per_unit.unwrap_or(1.0),
        },
        "matrix" => {
            let minutes = raw
                .matrix
                .ok_or_else(|| ModelError::Parse("metric is \"matrix\" but no matrix given".into()))?;
            TravelTime::Matrix { minutes, n: raw.locations.len() }
        }
        other => {
            return Err(ModelError::Parse(format!(
                "unknown metric {other:?}, want \"euclidean\" or \"matrix\""
            )))
        }
    };

    let locations: Vec<Location> = raw
        .locations
        .into_iter()
        .map(|l| Location {
            id: l.id,
            point: match (l.x, l.y) {
                (Some(x), Some(y)) => Some([x, y]),
                _ => None,
            },
        })
        .collect();
    let find = |id: &str| -> Result<LocId, ModelError> {
        locations
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| ModelError::Parse(format!("unknown location id {id:?}")))
    };

    let to_base = |u: &RawUser| -> Result<UserBase, ModelError> {
        Ok(UserBase {
            id: u.id.clone(),
            origin: find(&u.origin)?,
            destination: find(&u.destination)?,
            window: TimeWindow { earliest: u.window[0], latest: u.window[1] },
            preferred: u.preferred,
            max_detour: u.max_detour,
            value: u.value,
            c_dev: u.c_dev,
            c_trl: u.c_trl,
        })
    };

    let mut drivers = Vec::new();
    for u in &raw.drivers {
        drivers.push(Driver {
            base: to_base(u)?,
            capacity: u
                .capacity
                .ok_or_else(|| ModelError::Parse(format!("driver {}: missing capacity", u.id)))?,
            rho: u.rho.ok_or_else(|| ModelError::Parse(format!("driver {}: missing rho", u.id)))?,
        });
    }
    let mut riders = Vec::new();
    for u in &raw.riders {
        let base = to_base(u)?;
        let mut lambda =
            u.lambda.ok_or_else(|| ModelError::Parse(format!("rider {}: missing lambda", u.id)))?;
        if lambda > base.value {
            warnings.push(format!(
                "rider {}: lambda {} exceeds trip value {}; using the value",
                u.id, lambda, base.value
            ));
            lambda = base.value;
        }
        riders.push(Rider { base, lambda });
    }

    Ok(LoadedInstance {
        instance: Instance { horizon: raw.horizon, locations, travel, drivers, riders },
        warnings,
    })
}

pub fn instance_to_json(inst: &Instance) -> String {
    let (metric, minutes_per_unit, matrix) = match &inst.travel {
        TravelTime::Euclidean { minutes_per_unit } => {
            ("euclidean".to_string(), Some(*minutes_per_unit), None)
        }
        TravelTime::Matrix { minutes, .. } => ("matrix".to_string(), None, Some(minutes.clone())),
    };
    let loc = |j: LocId| inst.locations[j].id.clone();
    let from_base = |b: &UserBase, lambda: Option<f64>, capacity: Option<usize>, rho: Option<f64>| RawUser {
        id: b.id.clone(),
        origin: loc(b.origin),
        destination: loc(b.destination),
        window: [b.window.earliest, b.window.latest],
        preferred: b.preferred,
        max_detour: b.max_detour,
        value: b.value,
        c_dev: b.c_dev,
        c_trl: b.c_trl,
        lambda,
        capacity,
        rho,
    };
    let raw = RawInstance {
        horizon: inst.horizon,
        metric,
        minutes_per_unit,
        locations: inst
            .locations
            .iter()
            .map(|l| RawLocation {
                id: l.id.clone(),
                x: l.point.map(|p| p[0]),
                y: l.point.map(|p| p[1]),
            })
            .collect(),
        matrix,
        drivers: inst
            .drivers
            .iter()
            .map(|d| from_base(&d.base, None, Some(d.capacity), Some(d.rho)))
            .collect(),
        riders: inst
            .riders
            .iter()
            .map(|r| from_base(&r.base, Some(r.lambda), None, None))
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("instance serialization");
    s.push('\n');
    s
}

pub fn load_instance(path: &Path) -> Result<LoadedInstance, ModelError> {
    let text = fs::read_to_string(path)?;
    instance_from_json(&text)
}

pub fn save_instance(inst: &Instance, path: &Path) -> Result<(), ModelError> {
    Ok(fs::write(path, instance_to_json(inst))?)
}
