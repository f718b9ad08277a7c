//! Command-line front end: generate instances, run the matching and
//! fairness pipelines, and audit them against the brute-force oracles.
//!
//! Exit codes: 0 success, 2 the model is infeasible (a meaningful
//! answer, e.g. no stable matching), 3 bad input, 4 an internal limit
//! tripped. Output files depend only on the arguments and seed; wall
//! clock goes to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{
    self, oracle_fair_cost, oracle_matching, oracle_trip_cost, reduced_travel_time,
    AnalysisError, RatioOutcome,
};
use crate::fairness::{
    max_fairness, min_cost_fair, min_cost_fair_hetero, pareto_frontier, FairOutcome,
    FairnessError, MaxFairness, ProbabilisticMatching,
};
use crate::generator::{gen_rush_hour, gen_uniform, GeneratorError, RushHourConfig, UniformConfig};
use crate::matching::{
    solve_matching, DeterministicMatching, MatchOptions, MatchOutcome, Objective,
};
use crate::model::{instance_from_json, Instance, ModelError};
use crate::rtv::{build_rtv, MatchingProblem, RtvOptions};
use crate::solver::SolverError;
use crate::trip::{trip_cost, TripCache, TripOptions};

const PARETO_BUDGET: usize = 64;

#[derive(Parser)]
#[command(name = "corider", version, about = "Peer-to-peer ridesharing matcher")]
struct Cli {
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic instance file
    Generate(GenerateArgs),
    /// Minimum-cost deterministic matching
    #[command(name = "match")]
    Match(RunArgs),
    /// Cheapest lottery holding every reachable rider's service floor
    Fair(RunArgs),
    /// Cost-versus-floor frontier
    Pareto(RunArgs),
    /// Cost ratios against the unconstrained optimum, with bounds
    Analyze(RunArgs),
    /// Compare the optimizers with brute-force oracles on random seeds
    OracleCheck(CheckArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rush,
    Uniform,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Cost,
    Welfare,
}

fn parse_ratio(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("want DRIVERS:RIDERS, e.g. 1:4")?;
    let a = a.trim().parse::<usize>().map_err(|_| format!("bad driver share {a:?}"))?;
    let b = b.trim().parse::<usize>().map_err(|_| format!("bad rider share {b:?}"))?;
    Ok((a, b))
}

#[derive(Args)]
struct SourceArgs {
    /// Instance file, or a priced trip-options file
    #[arg(long, value_name = "FILE", conflicts_with = "generate")]
    instance: Option<PathBuf>,
    /// Generate the input instead of loading it
    #[arg(long, value_enum, value_name = "MODE")]
    generate: Option<Mode>,
    #[arg(long, default_value_t = 50)]
    users: usize,
    /// Driver:rider split over the user index
    #[arg(long, default_value = "1:1", value_parser = parse_ratio)]
    ratio: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Require individual rationality
    #[arg(long)]
    ir: bool,
    /// Require stability; reports infeasibility when none exists
    #[arg(long)]
    stability: bool,
    /// Treat a driver and a rider announcing the identical trip as one
    /// person who may take either role
    #[arg(long)]
    role_flex: bool,
    /// Riders per trip cap
    #[arg(long, value_name = "N")]
    max_trip_size: Option<usize>,
    /// Service floor in [0, 1]
    #[arg(long)]
    theta: Option<f64>,
    /// JSON array with one floor per rider
    #[arg(long, value_name = "FILE", conflicts_with = "theta")]
    theta_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Cost)]
    objective: ObjectiveArg,
    #[arg(long)]
    no_decompose: bool,
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per oracle family
    #[arg(long, default_value_t = 4)]
    rounds: usize,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Model(_) | CliError::Generator(_) | CliError::Io(_) => 3,
            CliError::Csv(_) => 3,
            CliError::Solver(e) => solver_code(e),
            CliError::Fairness(FairnessError::Solver(e)) => solver_code(e),
            CliError::Fairness(_) => 3,
            CliError::Analysis(e) => analysis_code(e),
        }
    }
}

fn solver_code(e: &SolverError) -> i32 {
    match e {
        SolverError::IterationLimit(_) | SolverError::NodeLimit(_) => 4,
        SolverError::Invalid(_) => 4,
    }
}

fn analysis_code(e: &AnalysisError) -> i32 {
    match e {
        AnalysisError::TooLarge { .. } | AnalysisError::TripTooBig { .. } => 4,
        AnalysisError::Solver(e) => solver_code(e),
        AnalysisError::Fairness(FairnessError::Solver(e)) => solver_code(e),
        _ => 3,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.jobs > 0 {
        // a pool may already exist when run in-process; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let outcome = match cli.cmd {
        Cmd::Generate(a) => cmd_generate(&a),
        Cmd::Match(a) => cmd_match(&a),
        Cmd::Fair(a) => cmd_fair(&a),
        Cmd::Pareto(a) => cmd_pareto(&a),
        Cmd::Analyze(a) => cmd_analyze(&a),
        Cmd::OracleCheck(a) => cmd_oracle_check(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn generate(source: &SourceArgs) -> Result<Instance, CliError> {
    let mode = source
        .generate
        .ok_or_else(|| CliError::Usage("pass --instance FILE or --generate MODE".into()))?;
    let inst = match mode {
        Mode::Rush => gen_rush_hour(&RushHourConfig::new(source.users, source.ratio, source.seed))?,
        Mode::Uniform => gen_uniform(&UniformConfig::new(source.users, source.ratio, source.seed))?,
    };
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(CliError::Usage(format!("generated instance invalid: {}", violations.join("; "))));
    }
    Ok(inst)
}

enum Loaded {
    Inst(Instance),
    Problem(MatchingProblem),
}

fn load(source: &SourceArgs) -> Result<Loaded, CliError> {
    match &source.instance {
        None => Ok(Loaded::Inst(generate(source)?)),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            match instance_from_json(&text) {
                Ok(loaded) => {
                    for w in &loaded.warnings {
                        eprintln!("warning: {w}");
                    }
                    let violations = loaded.instance.validate();
                    if !violations.is_empty() {
                        return Err(CliError::Usage(format!(
                            "{}: {}",
                            path.display(),
                            violations.join("; ")
                        )));
                    }
                    Ok(Loaded::Inst(loaded.instance))
                }
                // fall back to a priced trip-options file
                Err(inst_err) => match MatchingProblem::from_json(&text) {
                    Ok(p) => Ok(Loaded::Problem(p)),
                    Err(_) => Err(CliError::Model(inst_err)),
                },
            }
        }
    }
}

struct Pipeline {
    problem: MatchingProblem,
    inst: Option<Instance>,
    match_opts: MatchOptions,
}

/// Drivers and riders announcing the very same trip are one person; pair
/// them so the matcher can pick the person's role.
fn mirror_pairs(inst: &Instance) -> Vec<(usize, usize)> {
    let same_spot = |a: usize, b: usize| inst.time(a, b).abs() <= 1e-12;
    let mut used = vec![false; inst.riders.len()];
    let mut out = Vec::new();
    for (d, drv) in inst.drivers.iter().enumerate() {
        let db = &drv.base;
        for (r, rid) in inst.riders.iter().enumerate() {
            let rb = &rid.base;
            if !used[r]
                && same_spot(db.origin, rb.origin)
                && same_spot(db.destination, rb.destination)
                && db.window == rb.window
                && (db.preferred - rb.preferred).abs() <= 1e-12
            {
                used[r] = true;
                out.push((d, r));
                break;
            }
        }
    }
    out
}

fn build_pipeline(args: &RunArgs) -> Result<Pipeline, CliError> {
    let mut rtv_opts = RtvOptions {
        decompose: !args.no_decompose,
        trip: TripOptions { warm_start: !args.no_warm_start, ..TripOptions::default() },
        ..RtvOptions::default()
    };
    if let Some(cap) = args.max_trip_size {
        rtv_opts.max_trip_size = cap;
    }
    let (problem, inst, role_flex) = match load(&args.source)? {
        Loaded::Problem(p) => (p, None, Vec::new()),
        Loaded::Inst(inst) => {
            let cache = TripCache::new();
            let problem = build_rtv(&inst, &cache, &rtv_opts);
            let pairs = if args.role_flex { mirror_pairs(&inst) } else { Vec::new() };
            (problem, Some(inst), pairs)
        }
    };
    let match_opts = MatchOptions {
        require_ir: args.ir,
        require_stability: args.stability,
        role_flex,
        objective: match args.objective {
            ObjectiveArg::Cost => Objective::Cost,
            ObjectiveArg::Welfare => Objective::Welfare,
        },
        ..MatchOptions::default()
    };
    Ok(Pipeline { problem, inst, match_opts })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(v: f64) -> String {
    format!("{v:.9}")
}

fn cmd_generate(args: &GenerateArgs) -> Result<i32, CliError> {
    if args.source.instance.is_some() {
        return Err(CliError::Usage("generate writes a file; --instance makes no sense here".into()));
    }
    let inst = generate(&args.source)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("instance.json");
    crate::model::save_instance(&inst, &path)?;
    println!(
        "wrote {} ({} drivers, {} riders, seed {})",
        path.display(),
        inst.drivers.len(),
        inst.riders.len(),
        args.source.seed
    );
    Ok(0)
}

fn assignment_label(problem: &MatchingProblem, m: &DeterministicMatching) -> String {
    problem
        .drivers
        .iter()
        .enumerate()
        .map(|(d, col)| {
            let served = match m.assigned[d] {
                None => "~".to_string(),
                Some(k) if col.options[k].riders.is_empty() => "-".to_string(),
                Some(k) => col.options[k]
                    .riders
                    .iter()
                    .map(|&r| problem.riders[r].id.as_str())
                    .collect::<Vec<_>>()
                    .join(";"),
            };
            format!("{}:{}", col.id, served)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_match(args: &RunArgs) -> Result<i32, CliError> {
    let pipe = build_pipeline(args)?;
    let m = match solve_matching(&pipe.problem, &pipe.match_opts)? {
        MatchOutcome::Optimal(m) => m,
        MatchOutcome::Infeasible => {
            if args.stability {
                eprintln!("infeasible: no stable matching exists for this instance");
            } else {
                eprintln!("infeasible: the active constraints admit no matching");
            }
            return Ok(2);
        }
    };
    let problem = &pipe.problem;
    let mut w = csv_writer(&args.out.join("matching.csv"))?;
    w.write_record(["role", "id", "served", "cost"])?;
    for (d, col) in problem.drivers.iter().enumerate() {
        let (served, cost) = match m.assigned[d] {
            None => ("~".to_string(), 0.0),
            Some(k) => {
                let opt = &col.options[k];
                let names: Vec<&str> =
                    opt.riders.iter().map(|&r| problem.riders[r].id.as_str()).collect();
                let served = if names.is_empty() { "-".to_string() } else { names.join(";") };
                (served, opt.cost)
            }
        };
        w.write_record(&["driver".to_string(), col.id.clone(), served, fmt(cost)])?;
    }
    let mut carried_by: Vec<Option<usize>> = vec![None; problem.riders.len()];
    for (d, col) in problem.drivers.iter().enumerate() {
        if let Some(k) = m.assigned[d] {
            for &r in &col.options[k].riders {
                carried_by[r] = Some(d);
            }
        }
    }
    let mut is_mirror = vec![false; problem.riders.len()];
    for &(_, r) in &pipe.match_opts.role_flex {
        is_mirror[r] = true;
    }
    for (r, info) in problem.riders.iter().enumerate() {
        let (served, cost) = match carried_by[r] {
            Some(d) => (problem.drivers[d].id.clone(), 0.0),
            None if is_mirror[r] => ("driving".to_string(), 0.0),
            None => ("fallback".to_string(), info.lambda),
        };
        w.write_record(&["rider".to_string(), info.id.clone(), served, fmt(cost)])?;
    }
    w.flush()?;

    let matched = m.matched.iter().filter(|&&x| x).count();
    let mut line = format!(
        "cost {:.6}; matched {}/{} riders",
        m.total_cost,
        matched,
        problem.riders.len()
    );
    if let Some(inst) = &pipe.inst {
        let schedules: Vec<_> = problem
            .drivers
            .iter()
            .enumerate()
            .filter_map(|(d, col)| m.assigned[d].and_then(|k| col.options[k].schedule.as_ref()))
            .collect();
        line.push_str(&format!(
            "; reduced travel time {:.3} min",
            reduced_travel_time(inst, &schedules)
        ));
    }
    println!("{line}");
    Ok(0)
}

fn load_floors(path: &Path, riders: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let floors: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: want a JSON array of floors: {e}", path.display())))?;
    if floors.len() != riders {
        return Err(CliError::Usage(format!(
            "{}: {} floors for {} riders",
            path.display(),
            floors.len(),
            riders
        )));
    }
    Ok(floors)
}

fn write_lottery(
    out: &Path,
    problem: &MatchingProblem,
    pm: &ProbabilisticMatching,
) -> Result<(), CliError> {
    let mut w = csv_writer(&out.join("lottery.csv"))?;
    w.write_record(["probability", "cost", "assignment"])?;
    for (m, p) in &pm.support {
        w.write_record(&[fmt(*p), fmt(m.total_cost), assignment_label(problem, m)])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_fair(args: &RunArgs) -> Result<i32, CliError> {
    let pipe = build_pipeline(args)?;
    let problem = &pipe.problem;
    let outcome = match &args.theta_file {
        Some(path) => {
            let floors = load_floors(path, problem.riders.len())?;
            min_cost_fair_hetero(problem, &floors)?
        }
        None => min_cost_fair(problem, args.theta.unwrap_or(0.0))?,
    };
    match outcome {
        FairOutcome::Optimal(pm) => {
            write_lottery(&args.out, problem, &pm)?;
            let floor = problem
                .feasible_riders()
                .iter()
                .map(|&r| pm.coverage[r])
                .fold(f64::INFINITY, f64::min);
            println!(
                "expected cost {:.6}; support {}; floor reached {:.6}",
                pm.expected_cost,
                pm.support.len(),
                if floor.is_finite() { floor } else { 1.0 }
            );
            Ok(0)
        }
        FairOutcome::Infeasible => {
            let reach = match max_fairness(problem)? {
                MaxFairness::Level { theta, .. } => theta,
                MaxFairness::NoFeasibleRiders => 0.0,
            };
            eprintln!("infeasible: requested floor exceeds the achievable {reach:.6}");
            Ok(2)
        }
    }
}

fn cmd_pareto(args: &RunArgs) -> Result<i32, CliError> {
    let pipe = build_pipeline(args)?;
    let frontier = pareto_frontier(&pipe.problem, PARETO_BUDGET)?;
    let mut w = csv_writer(&args.out.join("frontier.csv"))?;
    w.write_record(["theta", "cost", "slope"])?;
    for (i, (theta, cost)) in frontier.breakpoints.iter().enumerate() {
        let slope = frontier.slopes.get(i).map(|s| fmt(*s)).unwrap_or_default();
        w.write_record(&[fmt(*theta), fmt(*cost), slope])?;
    }
    w.flush()?;
    println!(
        "{} breakpoints up to floor {:.6}{}",
        frontier.breakpoints.len(),
        frontier.max_theta,
        if frontier.approximate { " (approximate)" } else { "" }
    );
    Ok(0)
}

fn ratio_cell(r: &RatioOutcome) -> String {
    match r {
        RatioOutcome::Ratio(v) => fmt(*v),
        RatioOutcome::NoSolution => "no-solution".into(),
        RatioOutcome::NotComputed => "not-computed".into(),
    }
}

fn cmd_analyze(args: &RunArgs) -> Result<i32, CliError> {
    let pipe = build_pipeline(args)?;
    let problem = &pipe.problem;
    let thetas = match args.theta {
        Some(t) => vec![t],
        None => match max_fairness(problem)? {
            MaxFairness::Level { theta, .. } => {
                (0..=4).map(|i| theta * i as f64 / 4.0).collect()
            }
            MaxFairness::NoFeasibleRiders => vec![0.0],
        },
    };
    let report = analysis::tradeoff_report(problem, &thetas)?;
    let mut w = csv_writer(&args.out.join("report.csv"))?;
    w.write_record([
        "theta",
        "fair_cost",
        "pof",
        "pof_bound",
        "spof",
        "min_cost",
        "stable_cost",
        "pos",
        "spof_bound",
    ])?;
    for (i, &theta) in report.thetas.iter().enumerate() {
        w.write_record(&[
            fmt(theta),
            report.fair_cost[i].map(fmt).unwrap_or_else(|| "unreachable".into()),
            ratio_cell(&report.pof[i]),
            report.pof_bound[i].map(fmt).unwrap_or_default(),
            ratio_cell(&report.spof[i]),
            fmt(report.min_cost),
            report.stable_cost.map(fmt).unwrap_or_else(|| "none".into()),
            ratio_cell(&report.pos),
            report.spof_bound.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    for (phase, secs) in &report.runtimes {
        eprintln!("{phase}: {secs:.3}s");
    }
    println!("analyzed {} floors; min cost {:.6}", report.thetas.len(), report.min_cost);
    Ok(0)
}

fn cmd_oracle_check(args: &CheckArgs) -> Result<i32, CliError> {
    let mut failures = 0usize;
    for round in 0..args.rounds {
        let seed = args.seed.wrapping_add(round as u64);
        let inst = gen_rush_hour(&RushHourConfig::new(8, (1, 1), seed))
            .map_err(CliError::Generator)?;
        let cache = TripCache::new();
        let topts = TripOptions::default();

        let mut trip_ok = 0;
        let mut trip_n = 0;
        for d in 0..inst.drivers.len() {
            let mut sets: Vec<Vec<usize>> = vec![vec![]];
            sets.extend((0..inst.riders.len().min(3)).map(|r| vec![r]));
            if inst.riders.len() >= 2 {
                sets.push(vec![0, 1]);
            }
            for set in sets {
                trip_n += 1;
                let fast = trip_cost(&inst, &cache, d, &set, &topts);
                let slow = oracle_trip_cost(&inst, d, &set)?;
                let ok = match (fast.cost(), slow.order.cost()) {
                    (Some(a), Some(b)) => {
                        (a - b).abs() <= 1e-6
                            && slow
                                .grid_cost
                                .map_or(set.len() > 2, |g| g - a >= -1e-6 && g - a <= 0.2)
                    }
                    (None, None) => true,
                    _ => false,
                };
                if ok {
                    trip_ok += 1;
                } else {
                    failures += 1;
                    eprintln!("round {round}: trip oracle mismatch for driver {d}, riders {set:?}");
                }
            }
        }

        let problem = build_rtv(&inst, &cache, &RtvOptions::default());
        let mut match_ok = 0;
        let mut match_n = 0;
        for (ir, stab) in [(false, false), (true, false), (false, true), (true, true)] {
            match_n += 1;
            let opts =
                MatchOptions { require_ir: ir, require_stability: stab, ..MatchOptions::default() };
            let fast = solve_matching(&problem, &opts)?.optimal();
            let slow = oracle_matching(&problem, &opts)?.optimal();
            let ok = match (fast, slow) {
                (Some(a), Some(b)) => (a.total_cost - b.total_cost).abs() <= 1e-7,
                (None, None) => true,
                _ => false,
            };
            if ok {
                match_ok += 1;
            } else {
                failures += 1;
                eprintln!("round {round}: matching oracle mismatch at ir={ir} stability={stab}");
            }
        }

        let mut fair_ok = 0;
        let mut fair_n = 0;
        if let Some(cols) = analysis::enumerate_matchings(&problem, 10_000) {
            if cols.len() <= 10_000 {
                for theta in [0.0, 0.3] {
                    fair_n += 1;
                    let fast = match min_cost_fair(&problem, theta)? {
                        FairOutcome::Optimal(pm) => Some(pm.expected_cost),
                        FairOutcome::Infeasible => None,
                    };
                    let slow =
                        oracle_fair_cost(&problem, &vec![theta; problem.riders.len()], 10_000)?;
                    let ok = match (fast, slow) {
                        (Some(a), Some(b)) => (a - b).abs() <= 1e-6,
                        (None, None) => true,
                        _ => false,
                    };
                    if ok {
                        fair_ok += 1;
                    } else {
                        failures += 1;
                        eprintln!("round {round}: fair oracle mismatch at floor {theta}");
                    }
                }
            }
        }
        println!(
            "round {round}: trips {trip_ok}/{trip_n}, matchings {match_ok}/{match_n}, fair {fair_ok}/{fair_n}"
        );
    }
    if failures == 0 {
        println!("all oracle checks passed");
        Ok(0)
    } else {
        eprintln!("{failures} oracle checks failed");
        Ok(1)
    }
}
