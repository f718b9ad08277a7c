//! Seeded synthetic instances: a morning rush hour on a square grid, and
//! a uniform wide-area setting.
//!
//! Clock: minute zero is 7:00 and crossing the grid diagonal takes 60
//! minutes, so the default 50-unit grid rides at 60/(50·√2) minutes per
//! unit. Each user draws from its own RNG substream, so growing the user
//! count never perturbs earlier users.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Driver, Instance, Location, Rider, TimeWindow, TravelTime, UserBase};

pub const HORIZON: f64 = 120.0;

const CAPACITY: usize = 4;
const C_TRL: f64 = 3.0;
const C_DEV: f64 = 1.0;
const RUSH_RHO: f64 = 1.2;
/// Latest arrival stretches the direct trip by this much.
const WINDOW_FLEX: f64 = 1.3;
const DETOUR_FRAC: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("type shares sum to {0}, want 1")]
    BadShares(f64),
    #[error("rectangle {0} leaves the grid")]
    BadRect(String),
    #[error("driver:rider ratio needs both sides, got {0}:{1}")]
    BadRatio(usize, usize),
    #[error("window flexibility ratio {0} is below 1")]
    BadFlex(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.x0 <= p[0] && p[0] <= self.x1 && self.y0 <= p[1] && p[1] <= self.y1
    }

    fn inside_grid(&self, grid: f64) -> bool {
        0.0 <= self.x0 && self.x0 <= self.x1 && self.x1 <= grid
            && 0.0 <= self.y0 && self.y0 <= self.y1 && self.y1 <= grid
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        [rng.gen_range(self.x0..=self.x1), rng.gen_range(self.y0..=self.y1)]
    }
}

/// One destination class: its share of the population, where its trips
/// end, and the latest departure minute printed on the map for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserType {
    pub share: f64,
    pub dest: Rect,
    pub latest: f64,
}

/// Morning commute out of one neighborhood. The five destination classes
/// keep the published map's layout; window recipes vary by class, from
/// the rigid early commute (first class) to wide mid-morning windows
/// (last two).
#[derive(Debug, Clone, PartialEq)]
pub struct RushHourConfig {
    pub users: usize,
    /// drivers : riders, applied round-robin over the user index.
    pub ratio: (usize, usize),
    pub seed: u64,
    /// Side length of the square grid.
    pub grid: f64,
    /// Where everyone lives.
    pub origin: Rect,
    pub types: [UserType; 5],
}

impl RushHourConfig {
    /// Map geometry traced from the published drawing, normalized to the
    /// 50-unit grid.
    pub fn new(users: usize, ratio: (usize, usize), seed: u64) -> Self {
        RushHourConfig {
            users,
            ratio,
            seed,
            grid: 50.0,
            origin: Rect::new(22.73, 23.33, 28.91, 35.33),
            types: [
                UserType { share: 0.4, dest: Rect::new(0.0, 0.0, 14.36, 19.33), latest: 12.0 },
                UserType { share: 0.2, dest: Rect::new(36.36, 30.0, 50.0, 50.0), latest: 20.0 },
                UserType { share: 0.1, dest: Rect::new(20.0, 0.0, 36.36, 14.67), latest: 40.0 },
                UserType { share: 0.2, dest: Rect::new(14.18, 20.67, 28.18, 36.67), latest: 60.0 },
                UserType { share: 0.1, dest: Rect::new(0.0, 23.33, 13.64, 50.0), latest: 60.0 },
            ],
        }
    }
}

/// Wide-area setting: endpoints uniform over the whole grid, windows a
/// fixed stretch of the direct trip, no altruism.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformConfig {
    pub users: usize,
    pub ratio: (usize, usize),
    pub seed: u64,
    pub grid: f64,
    /// ≥ 1; latest arrival = earliest departure + flex · direct time.
    pub flex: f64,
    pub detour_frac: f64,
}

impl UniformConfig {
    pub fn new(users: usize, ratio: (usize, usize), seed: u64) -> Self {
        UniformConfig { users, ratio, seed, grid: 50.0, flex: WINDOW_FLEX, detour_frac: DETOUR_FRAC }
    }
}

pub fn minutes_per_unit(grid: f64) -> f64 {
    60.0 / (grid * std::f64::consts::SQRT_2)
}

fn user_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn check_ratio(ratio: (usize, usize)) -> Result<(), GeneratorError> {
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(GeneratorError::BadRatio(ratio.0, ratio.1));
    }
    Ok(())
}

struct Assembler {
    mpu: f64,
    locations: Vec<Location>,
    drivers: Vec<Driver>,
    riders: Vec<Rider>,
}

impl Assembler {
    fn new(grid: f64) -> Self {
        Assembler {
            mpu: minutes_per_unit(grid),
            locations: Vec::new(),
            drivers: Vec::new(),
            riders: Vec::new(),
        }
    }

    fn time(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() * self.mpu
    }

    /// `rho` decides the role: drivers carry it, riders get a fallback
    /// price equal to their trip value.
    #[allow(clippy::too_many_arguments)]
    fn push_user(
        &mut self,
        driver: bool,
        rho: f64,
        origin: [f64; 2],
        dest: [f64; 2],
        window: TimeWindow,
        preferred: f64,
        max_detour: f64,
        value: f64,
    ) {
        let id = if driver {
            format!("d{}", self.drivers.len() + 1)
        } else {
            format!("r{}", self.riders.len() + 1)
        };
        let o = self.locations.len();
        self.locations.push(Location { id: format!("{id}.o"), point: Some(origin) });
        self.locations.push(Location { id: format!("{id}.d"), point: Some(dest) });
        let base = UserBase {
            id,
            origin: o,
            destination: o + 1,
            window,
            preferred,
            max_detour,
            value,
            c_dev: C_DEV,
            c_trl: C_TRL,
        };
        if driver {
            self.drivers.push(Driver { base, capacity: CAPACITY, rho });
        } else {
            self.riders.push(Rider { base, lambda: value });
        }
    }

    fn finish(self) -> Instance {
        Instance {
            horizon: HORIZON,
            locations: self.locations,
            travel: TravelTime::Euclidean { minutes_per_unit: self.mpu },
            drivers: self.drivers,
            riders: self.riders,
        }
    }
}

pub fn gen_rush_hour(config: &RushHourConfig) -> Result<Instance, GeneratorError> {
    check_ratio(config.ratio)?;
    let share_sum: f64 = config.types.iter().map(|t| t.share).sum();
    if (share_sum - 1.0).abs() > 1e-9 {
        return Err(GeneratorError::BadShares(share_sum));
    }
    for rect in std::iter::once(&config.origin).chain(config.types.iter().map(|t| &t.dest)) {
        if !rect.inside_grid(config.grid) {
            return Err(GeneratorError::BadRect(format!(
                "({},{})-({},{})",
                rect.x0, rect.y0, rect.x1, rect.y1
            )));
        }
    }

    let mut asm = Assembler::new(config.grid);
    // window slack draws span one grid side, expressed in minutes
    let slack_span = config.grid * asm.mpu;
    let (a, b) = config.ratio;
    for i in 0..config.users {
        let mut rng = user_rng(config.seed, i);
        let pick: f64 = rng.gen();
        let mut acc = 0.0;
        let mut kind = config.types.len() - 1;
        for (k, t) in config.types.iter().enumerate() {
            acc += t.share;
            if pick < acc {
                kind = k;
                break;
            }
        }
        let t = &config.types[kind];
        let origin = config.origin.sample(&mut rng);
        let dest = t.dest.sample(&mut rng);
        let time = asm.time(origin, dest);
        let latest = t.latest;
        let (te, tl, tp) = match kind {
            // rigid early commute: everyone out the door by the printed
            // time, arrival bound follows the trip
            0 => {
                let te = rng.gen_range(0.0..=latest);
                let tp = rng.gen_range(te..=latest);
                (te, (latest + time).min(HORIZON), tp)
            }
            // strict window, looser preference
            1 => {
                let te = rng.gen_range(0.0..=latest);
                let slack = rng.gen_range(0.0..=0.5 * slack_span);
                (te, (latest + WINDOW_FLEX * time).min(HORIZON - 1.0), te + slack / 2.0)
            }
            // flexible window widened by the slack draw
            2 => {
                let te = rng.gen_range(0.0..=latest);
                let slack = rng.gen_range(0.0..=slack_span);
                (te, (te + slack + WINDOW_FLEX * time).min(HORIZON - 1.0), te + slack / 2.0)
            }
            // late classes keep room for the trip before the printed time
            _ => {
                let te = rng.gen_range(0.0..=(latest - 2.0 - time).max(1.0));
                let slack = rng.gen_range(0.0..=slack_span);
                (te, (te + slack + WINDOW_FLEX * time).min(HORIZON - 1.0), te + slack / 2.0)
            }
        };
        // the preference must leave room for the direct trip
        let tp = tp.clamp(te, tl - time);
        let value = C_TRL * time * rng.gen_range(1.0..=2.5);
        asm.push_user(
            i % (a + b) < a,
            RUSH_RHO,
            origin,
            dest,
            TimeWindow { earliest: te, latest: tl },
            tp,
            DETOUR_FRAC * time,
            value,
        );
    }
    Ok(asm.finish())
}

pub fn gen_uniform(config: &UniformConfig) -> Result<Instance, GeneratorError> {
    check_ratio(config.ratio)?;
    if config.flex < 1.0 {
        return Err(GeneratorError::BadFlex(config.flex));
    }
    let mut asm = Assembler::new(config.grid);
    let whole = Rect::new(0.0, 0.0, config.grid, config.grid);
    let (a, b) = config.ratio;
    for i in 0..config.users {
        let mut rng = user_rng(config.seed, i);
        let origin = whole.sample(&mut rng);
        let dest = whole.sample(&mut rng);
        let time = asm.time(origin, dest);
        let te = rng.gen_range(0.0..=(60.0 - time).max(0.0));
        let tl = te + config.flex * time;
        let tp = (te + rng.gen_range(0.0..=0.1 * time)).clamp(te, tl - time);
        let value = C_TRL * time * rng.gen_range(1.0..=2.5);
        asm.push_user(
            i % (a + b) < a,
            0.0,
            origin,
            dest,
            TimeWindow { earliest: te, latest: tl },
            tp,
            config.detour_frac * time,
            value,
        );
    }
    Ok(asm.finish())
}
