//! `fpphe` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input, 2 infeasible or unstable result,
//! 3 resource cap exceeded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use fpphe::analytics::{self, GwSpec, DEFAULT_TOL};
use fpphe::brw::{self, DEFAULT_INDIVIDUAL_CAP, DEFAULT_TAIL_START};
use fpphe::experiments::{self, csv_summary, BoundInputs, TimeEvent, TrialPlan};
use fpphe::feasibility::{self, FeasibilityProblem, PathFamily, RateEstimateConfig};
use fpphe::graph::{
    build_capped_tree, build_complete_tree, build_tile, build_tile_tree, export_dot, restrict_to_side, Graph,
};
use fpphe::rng::trial_rng;
use fpphe::seeding::{fixed_seeds, place_seeds, SeedConfig};
use fpphe::sim::{simulate, StopCondition};
use fpphe::{Error, Result, Side, TileParams, VertexId};

#[derive(Parser)]
#[command(name = "fpphe", version, about = "First passage percolation in a hostile environment")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; not every command supports every format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph and print it as JSON or DOT.
    Graph(GraphArgs),
    /// Run one simulation.
    Simulate(SimulateArgs),
    /// Closed-form calculators.
    #[command(subcommand)]
    Analytics(AnalyticsCmd),
    /// Solve the (H, L) parameter system from a JSON problem.
    Feasibility(FeasibilityArgs),
    /// Estimate passage-rate constants by simulation.
    Rates(RatesArgs),
    /// Branching random walk diagnostics.
    #[command(subcommand, name = "brw-diag")]
    BrwDiag(BrwCmd),
    /// Monte Carlo estimate of one event from a JSON plan.
    Estimate(EstimateArgs),
    /// P(B infected by FPP1) on a tile over a grid of mu.
    Sweep(SweepArgs),
    /// Threshold events on one side of a tile.
    Restricted(RestrictedArgs),
    /// Tile-tree reachability against the independent-tile approximation.
    Survival(SurvivalArgs),
    /// Coverage of Wilson intervals on synthetic Bernoulli data.
    Selftest(SelftestArgs),
}

#[derive(Args, Serialize, Clone)]
struct GraphArgs {
    /// Tile parameters, e.g. D=3,L=1,H=1,R=2.
    #[arg(long)]
    tile: Option<TileParams>,
    /// Keep only one side of the tile.
    #[arg(long, requires = "tile")]
    side: Option<Side>,
    /// Build a tile tree with this branching (needs --tile and --depth).
    #[arg(long, requires_all = ["tile", "depth"])]
    phi: Option<u32>,
    #[arg(long)]
    depth: Option<u32>,
    /// Complete tree `d,h`.
    #[arg(long, value_parser = parse_pair, conflicts_with_all = ["tile", "capped_tree", "graph_file"])]
    complete_tree: Option<(u32, u32)>,
    /// Capped tree `d,h`.
    #[arg(long, value_parser = parse_pair, conflicts_with_all = ["tile", "graph_file"])]
    capped_tree: Option<(u32, u32)>,
    /// A graph previously written with `graph --format json`.
    #[arg(long, conflicts_with = "tile")]
    graph_file: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once(',').ok_or("expected `d,h`")?;
    let p = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(a)?, p(b)?))
}

impl GraphArgs {
    fn build(&self) -> Result<Graph> {
        if let Some(path) = &self.graph_file {
            let text = fs::read_to_string(path)?;
            let v: Value = serde_json::from_str(&text)?;
            let dump = v.get("graph").cloned().unwrap_or(v);
            return Graph::from_dump(serde_json::from_value(dump)?);
        }
        if let Some((d, h)) = self.complete_tree {
            return build_complete_tree(d, h);
        }
        if let Some((d, h)) = self.capped_tree {
            return build_capped_tree(d, h);
        }
        let Some(tile) = self.tile else {
            return Err(Error::InvalidParameter(
                "choose a graph: --tile, --complete-tree, --capped-tree or --graph-file".into(),
            ));
        };
        match (self.phi, self.side) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter("--side and --phi are exclusive".into())),
            (Some(phi), None) => {
                let depth = self.depth.ok_or_else(|| Error::InvalidParameter("--phi needs --depth".into()))?;
                Ok(build_tile_tree(phi, depth, &tile)?.graph)
            }
            (None, Some(side)) => restrict_to_side(&build_tile(&tile)?, side),
            (None, None) => build_tile(&tile),
        }
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Trial index within the master seed's streams.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Origin vertex id or landmark (default: vertex 0).
    #[arg(long)]
    origin: Option<String>,
    /// Stop when this vertex id or landmark is infected.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    max_infected: Option<usize>,
    /// Comma-separated seed vertices used instead of sampling.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<String>>,
    /// Read the seed configuration from a binary blob.
    #[arg(long, conflicts_with = "seeds")]
    seeds_in: Option<PathBuf>,
    /// Write the seed configuration used to a binary blob.
    #[arg(long)]
    seeds_out: Option<PathBuf>,
    /// Write every infection as one JSON line.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn resolve_vertex(g: &Graph, s: &str) -> Result<VertexId> {
    match s.parse::<VertexId>() {
        Ok(v) if g.contains(v) => Ok(v),
        Ok(v) => Err(Error::InvalidParameter(format!("vertex {v} not in graph"))),
        Err(_) => g.require_landmark(s),
    }
}

#[derive(Subcommand, Clone)]
enum AnalyticsCmd {
    /// Extinction probability of Binomial(d, 1-mu) offspring.
    Gw {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Supercriticality and the second-moment condition.
    Tech {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        mu: f64,
    },
    /// P(N_1 = 1).
    POne {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        mu: f64,
    },
    /// -ln(eps)/gamma.
    Quantile {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Time slack for given eps and lambda.
    FrakC {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        lambda: f64,
    },
    JansonUpper {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        mean: f64,
        #[arg(long)]
        delta: f64,
    },
    JansonLower {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        mean: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Tile-tree branching from the mu2 parameters.
    Phi {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        mu2: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        f: f64,
        #[arg(long)]
        eps: f64,
    },
    EpsMax {
        #[arg(long)]
        mu2: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        f: f64,
    },
    /// Bond percolation threshold 1/phi.
    Threshold {
        #[arg(long)]
        phi: u32,
    },
    /// Probability a Binomial(phi, p) tree reaches a depth.
    Reach {
        #[arg(long)]
        phi: u32,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        depth: u32,
    },
}

#[derive(Args, Serialize)]
struct FeasibilityArgs {
    /// Problem as a JSON file path or inline JSON.
    #[arg(long)]
    input: String,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FamilyKind {
    Path,
    Tree,
}

#[derive(Args, Serialize)]
struct RatesArgs {
    #[arg(long, value_enum, default_value = "path")]
    family: FamilyKind,
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    k_min: u32,
    #[arg(long, default_value_t = 10)]
    k_max: u32,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Required tail decay per unit length (the c0 = c1 default is 0.1).
    #[arg(long, default_value_t = 0.1)]
    target_exponent: f64,
    #[arg(long, default_value_t = 1e-3)]
    grid: f64,
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Args, Serialize, Clone, Copy)]
struct GwArgs {
    #[arg(long)]
    d: u32,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Subcommand, Clone)]
enum BrwCmd {
    /// Generation sizes of sampled walks.
    Sample {
        #[command(flatten)]
        gw: GwArgs,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        max_gen: u32,
    },
    /// Minimum passage time to a level, with a tail fit.
    MinPassage {
        #[command(flatten)]
        gw: GwArgs,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        n: u32,
        /// Include the raw samples.
        #[arg(long)]
        values: bool,
    },
    /// Birth-time statistics per generation.
    BirthStats {
        #[command(flatten)]
        gw: GwArgs,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        max_gen: u32,
    },
    /// Decay rate of E[1/N_n] among survivors.
    InverseRate {
        #[command(flatten)]
        gw: GwArgs,
        #[arg(long)]
        n_max: u32,
    },
    /// Frequency of generation sizes outside the growth window.
    Sandwich {
        #[command(flatten)]
        gw: GwArgs,
        #[arg(long, default_value_t = 0.2)]
        eps1: f64,
        #[arg(long, default_value_t = 0.1)]
        eps_prime: f64,
        #[arg(long)]
        max_gen: u32,
    },
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Plan as a JSON file path or inline JSON.
    #[arg(long)]
    plan: String,
    /// Overrides the plan's trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Overrides the plan's master seed.
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    workers: usize,
    /// Also write per-trial logs as JSON lines.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    tile: TileParams,
    #[arg(long)]
    lambda: f64,
    /// Comma-separated mu grid.
    #[arg(long, value_delimiter = ',', required = true)]
    mu: Vec<f64>,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    workers: usize,
}

#[derive(Args, Serialize)]
struct RestrictedArgs {
    #[arg(long)]
    tile: TileParams,
    #[arg(long)]
    side: Side,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    lambda: f64,
    /// Threshold events `T <= t` on B's infection time (`inf` allowed).
    #[arg(long, value_delimiter = ',')]
    threshold: Vec<String>,
    /// Feasibility problem whose solution supplies the standard events.
    #[arg(long)]
    problem: Option<String>,
    /// eps,eta_2,eta_D,f_2,f_D for the reference bounds.
    #[arg(long, value_delimiter = ',', requires = "problem")]
    bounds: Option<Vec<f64>>,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    workers: usize,
}

#[derive(Args, Serialize)]
struct SurvivalArgs {
    #[arg(long)]
    phi: u32,
    #[arg(long)]
    depth: u32,
    #[arg(long)]
    tile: TileParams,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    workers: usize,
}

#[derive(Args, Serialize)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1000)]
    outer: u64,
    #[arg(long, default_value_t = 1000)]
    inner: u64,
    #[arg(long)]
    p_true: f64,
    #[arg(long, default_value_t = 1.96)]
    z: f64,
    #[arg(long)]
    master_seed: Option<u64>,
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidParameter("--master-seed is required for randomized commands".into()))
}

/// Reads a JSON argument given either inline or as a file path.
fn read_json_arg(arg: &str) -> Result<Value> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else {
        fs::read_to_string(arg)?
    };
    Ok(serde_json::from_str(&text)?)
}

fn config<T: Serialize>(command: &str, args: &T) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    v["command"] = json!(command);
    v
}

fn record(config: Value, body: Value) -> Value {
    let mut v = body;
    v["config"] = config;
    v
}

fn line(v: &Value) -> String {
    let mut s = v.to_string();
    s.push('\n');
    s
}

fn check_format(format: Format, allowed: &[Format], command: &str) -> Result<()> {
    if allowed.contains(&format) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "format `{}` is not available for `{command}`",
            serde_json::to_value(format).expect("serializes").as_str().unwrap_or("?")
        )))
    }
}

fn run(cli: &Cli) -> Result<String> {
    let format = cli.format.unwrap_or(Format::Json);
    match &cli.command {
        Command::Graph(a) => {
            check_format(format, &[Format::Json, Format::Dot], "graph")?;
            let g = a.build()?;
            let cfg = config("graph", &a);
            Ok(match format {
                Format::Dot => format!("// config: {cfg}\n{}", export_dot(&g)),
                _ => line(&record(
                    cfg,
                    json!({
                        "vertex_count": g.vertex_count(),
                        "edge_count": g.edge_count(),
                        "graph": g.to_dump(),
                    }),
                )),
            })
        }
        Command::Simulate(a) => {
            check_format(format, &[Format::Json], "simulate")?;
            simulate_cmd(a)
        }
        Command::Analytics(cmd) => {
            check_format(format, &[Format::Json], "analytics")?;
            analytics_cmd(cmd.clone())
        }
        Command::Feasibility(a) => {
            check_format(format, &[Format::Json], "feasibility")?;
            let problem: FeasibilityProblem = serde_json::from_value(read_json_arg(&a.input)?)?;
            let sol = feasibility::solve_hl(&problem)?;
            let out = line(&record(
                json!({ "command": "feasibility", "problem": problem }),
                json!({ "solution": sol }),
            ));
            if sol.feasible {
                Ok(out)
            } else {
                // The audit values are still useful when no solution exists.
                emit(cli.out.as_deref(), &out)?;
                Err(Error::Infeasible(format!(
                    "no (H, L) up to H = {}; H coefficient {}",
                    problem.h_cap, sol.h_coefficient
                )))
            }
        }
        Command::Rates(a) => {
            check_format(format, &[Format::Json], "rates")?;
            let family = match a.family {
                FamilyKind::Path => PathFamily::Path,
                FamilyKind::Tree => PathFamily::Tree { d: a.d },
            };
            let cfg = RateEstimateConfig {
                family,
                gamma: a.gamma,
                k_min: a.k_min,
                k_max: a.k_max,
                trials: a.trials,
                target_exponent: a.target_exponent,
                grid: a.grid,
                cout_max: 50.0,
                master_seed: require_seed(a.master_seed)?,
            };
            let est = feasibility::estimate_rate_constants(&cfg)?;
            let mut c = config("rates", &a);
            c["c0"] = json!(a.target_exponent);
            c["c1"] = json!(a.target_exponent);
            Ok(line(&record(c, json!({ "estimate": est }))))
        }
        Command::BrwDiag(cmd) => {
            check_format(format, &[Format::Json], "brw-diag")?;
            brw_cmd(cmd.clone())
        }
        Command::Estimate(a) => {
            check_format(format, &[Format::Json, Format::Csv], "estimate")?;
            let mut plan: TrialPlan = serde_json::from_value(read_json_arg(&a.plan)?)?;
            if let Some(t) = a.trials {
                plan.trials = t;
            }
            if let Some(s) = a.master_seed {
                plan.master_seed = s;
            }
            let r = experiments::estimate_event(&plan, a.workers)?;
            eprintln!("wall time: {:.3}s", r.wall_time.as_secs_f64());
            if let Some(path) = &a.audit {
                let logs = experiments::trial_logs(&plan, a.workers)?;
                let text: String = logs
                    .iter()
                    .map(|l| line(&serde_json::to_value(l).expect("serializes")))
                    .collect();
                fs::write(path, text)?;
            }
            Ok(match format {
                Format::Csv => csv_summary([&r]),
                _ => line(&serde_json::to_value(&r)?),
            })
        }
        Command::Sweep(a) => {
            check_format(format, &[Format::Json, Format::Csv], "sweep")?;
            let rep = experiments::tile_sweep(&a.tile, a.lambda, &a.mu, a.trials, require_seed(a.master_seed)?, a.workers)?;
            Ok(match format {
                Format::Csv => csv_summary(rep.rows.iter().map(|r| &r.result)),
                _ => rep.to_jsonl(),
            })
        }
        Command::Restricted(a) => {
            check_format(format, &[Format::Json, Format::Csv], "restricted")?;
            restricted_cmd(a, format)
        }
        Command::Survival(a) => {
            check_format(format, &[Format::Json, Format::Csv], "survival")?;
            let rep = experiments::survival_proxy(
                a.phi,
                a.depth,
                &a.tile,
                a.mu,
                a.lambda,
                a.trials,
                require_seed(a.master_seed)?,
                a.workers,
            )?;
            Ok(match format {
                Format::Csv => csv_summary([&rep.direct, &rep.p_tile]),
                _ => line(&record(config("survival", &a), json!({ "report": rep }))),
            })
        }
        Command::Selftest(a) => {
            check_format(format, &[Format::Json], "selftest")?;
            let rep = experiments::ci_selftest(a.outer, a.inner, a.p_true, a.z, require_seed(a.master_seed)?)?;
            Ok(line(&record(config("selftest", &a), json!({ "coverage": rep }))))
        }
    }
}

fn simulate_cmd(a: &SimulateArgs) -> Result<String> {
    let master = require_seed(a.master_seed)?;
    let g = a.graph.build()?;
    let origin = match &a.origin {
        Some(s) => resolve_vertex(&g, s)?,
        None => 0,
    };
    let stop = StopCondition {
        target: a.target.as_deref().map(|s| resolve_vertex(&g, s)).transpose()?,
        time_horizon: a.horizon,
        max_infected: a.max_infected,
    };
    let stop = if stop == StopCondition::default() {
        StopCondition::exhaustive()
    } else {
        stop
    };
    let mut rng = trial_rng(master, a.trial);
    let seeds = if let Some(list) = &a.seeds {
        let ids = list.iter().map(|s| resolve_vertex(&g, s)).collect::<Result<Vec<_>>>()?;
        fixed_seeds(&g, &ids)?
    } else if let Some(path) = &a.seeds_in {
        let (cfg, _) = SeedConfig::from_blob(&fs::read(path)?)?;
        if cfg.len() != g.vertex_count() {
            return Err(Error::InvalidParameter("seed blob does not match the graph size".into()));
        }
        cfg
    } else {
        place_seeds(&g, a.mu, &[origin], &mut rng)?
    };
    if let Some(path) = &a.seeds_out {
        fs::write(path, seeds.to_blob(Some(master)))?;
    }
    let out = simulate(&g, origin, &seeds, a.lambda, &stop, &mut rng)?;
    let cfg = config("simulate", a);
    if let Some(path) = &a.trace {
        let mut text = line(&json!({ "config": cfg }));
        for rec in out.infections() {
            text.push_str(&line(&serde_json::to_value(rec)?));
        }
        fs::write(path, text)?;
    }
    let mut body = out.to_json();
    body["seed_count"] = json!(seeds.seed_count());
    Ok(line(&record(cfg, body)))
}

fn analytics_cmd(cmd: AnalyticsCmd) -> Result<String> {
    let (name, cfg, body) = match cmd {
        AnalyticsCmd::Gw { d, mu, tol } => (
            "gw",
            json!({ "d": d, "mu": mu, "tol": tol }),
            json!({ "extinction": analytics::gw_extinction(GwSpec::new(d, mu)?, tol)? }),
        ),
        AnalyticsCmd::Tech { d, mu } => {
            let (c1, c2) = analytics::check_tech_cond(d, mu)?;
            ("tech", json!({ "d": d, "mu": mu }), json!({ "cond1": c1, "cond2": c2 }))
        }
        AnalyticsCmd::POne { d, mu } => (
            "p-one",
            json!({ "d": d, "mu": mu }),
            json!({ "p_one": analytics::p_one(GwSpec::new(d, mu)?)? }),
        ),
        AnalyticsCmd::Quantile { eps, gamma } => (
            "quantile",
            json!({ "eps": eps, "gamma": gamma }),
            json!({ "constant": analytics::edge_quantile_const(eps, gamma)? }),
        ),
        AnalyticsCmd::FrakC { eps, lambda } => (
            "frak-c",
            json!({ "eps": eps, "lambda": lambda }),
            json!({ "frak_c": analytics::frak_c(eps, lambda)? }),
        ),
        AnalyticsCmd::JansonUpper { a, mean, delta } => (
            "janson-upper",
            json!({ "a": a, "mean": mean, "delta": delta }),
            json!({ "bound": analytics::janson_upper_tail(a, mean, delta)? }),
        ),
        AnalyticsCmd::JansonLower { a, mean, delta } => (
            "janson-lower",
            json!({ "a": a, "mean": mean, "delta": delta }),
            json!({ "bound": analytics::janson_lower_tail(a, mean, delta)? }),
        ),
        AnalyticsCmd::Phi { d, mu2, eta, f, eps } => (
            "phi",
            json!({ "d": d, "mu2": mu2, "eta": eta, "f": f, "eps": eps }),
            json!({ "phi": analytics::phi_from_params(d, mu2, eta, f, eps)? }),
        ),
        AnalyticsCmd::EpsMax { mu2, eta, f } => (
            "eps-max",
            json!({ "mu2": mu2, "eta": eta, "f": f }),
            json!({ "eps_max": analytics::epsilon_max(mu2, eta, f) }),
        ),
        AnalyticsCmd::Threshold { phi } => (
            "threshold",
            json!({ "phi": phi }),
            json!({ "threshold": analytics::tree_percolation_threshold(phi)? }),
        ),
        AnalyticsCmd::Reach { phi, p, depth } => (
            "reach",
            json!({ "phi": phi, "p": p, "depth": depth }),
            json!({ "reach": analytics::gw_reach_probability(phi, p, depth)? }),
        ),
    };
    let mut cfg = cfg;
    cfg["command"] = json!(format!("analytics {name}"));
    Ok(line(&record(cfg, body)))
}

fn brw_cmd(cmd: BrwCmd) -> Result<String> {
    let gw_of = |g: &GwArgs| -> Result<(GwSpec, u64)> { Ok((GwSpec::new(g.d, g.mu)?, require_seed(g.master_seed)?)) };
    let caveat = brw::CONDITIONING_CAVEAT;
    let (name, cfg, body) = match cmd {
        BrwCmd::Sample { gw, gamma, max_gen } => {
            let (spec, seed) = gw_of(&gw)?;
            let samples = brw::sample_brw(spec, gamma, max_gen, gw.trials, seed, DEFAULT_INDIVIDUAL_CAP)?;
            let means: Vec<f64> = (0..=max_gen as usize)
                .map(|j| samples.iter().map(|s| s.generation_sizes[j] as f64).sum::<f64>() / gw.trials.max(1) as f64)
                .collect();
            let survived = samples.iter().filter(|s| s.survived_to == max_gen).count();
            (
                "sample",
                json!({ "gw": gw, "gamma": gamma, "max_gen": max_gen }),
                json!({ "mean_generation_sizes": means, "survived_to_max_gen": survived }),
            )
        }
        BrwCmd::MinPassage { gw, gamma, n, values } => {
            let (spec, seed) = gw_of(&gw)?;
            let m = brw::min_passage(spec, gamma, n, gw.trials, seed)?;
            let (mean, var) = fpphe::stats::mean_var(&m.values);
            let fit = brw::fit_concentration(&m.values, DEFAULT_TAIL_START).ok();
            let mut body = json!({
                "kept": m.kept(),
                "discarded_extinct": m.discarded_extinct,
                "mean": mean,
                "sd": var.sqrt(),
                "fit": fit,
                "caveat": caveat,
            });
            if values {
                body["values"] = json!(m.values);
            }
            ("min-passage", json!({ "gw": gw, "gamma": gamma, "n": n }), body)
        }
        BrwCmd::BirthStats { gw, c1, max_gen } => {
            let (spec, seed) = gw_of(&gw)?;
            let rows = brw::generation_birth_stats(spec, c1, max_gen, gw.trials, seed)?;
            (
                "birth-stats",
                json!({ "gw": gw, "c1": c1, "max_gen": max_gen }),
                json!({ "rows": rows, "caveat": caveat }),
            )
        }
        BrwCmd::InverseRate { gw, n_max } => {
            let (spec, seed) = gw_of(&gw)?;
            let r = brw::inverse_size_rate(spec, n_max, gw.trials, seed)?;
            ("inverse-rate", json!({ "gw": gw, "n_max": n_max }), json!({ "result": r }))
        }
        BrwCmd::Sandwich { gw, eps1, eps_prime, max_gen } => {
            let (spec, seed) = gw_of(&gw)?;
            let rows = brw::size_sandwich(spec, eps1, eps_prime, max_gen, gw.trials, seed)?;
            (
                "sandwich",
                json!({ "gw": gw, "eps1": eps1, "eps_prime": eps_prime, "max_gen": max_gen }),
                json!({ "rows": rows, "caveat": caveat }),
            )
        }
    };
    let mut cfg = cfg;
    cfg["command"] = json!(format!("brw-diag {name}"));
    Ok(line(&record(cfg, body)))
}

fn restricted_cmd(a: &RestrictedArgs, format: Format) -> Result<String> {
    let seed = require_seed(a.master_seed)?;
    let mut events = Vec::new();
    for t in &a.threshold {
        let threshold: f64 = serde_json::from_value::<Wrapper>(json!({ "t": t }))
            .map_err(|e| Error::InvalidParameter(format!("threshold `{t}`: {e}")))?
            .t;
        events.push(TimeEvent {
            label: "time".into(),
            threshold,
            at_least: false,
            require_cap_fpp1: false,
            reference_bound: None,
        });
    }
    if let Some(p) = &a.problem {
        let problem: FeasibilityProblem = serde_json::from_value(read_json_arg(p)?)?;
        let sol = feasibility::solve_hl(&problem)?;
        if !sol.feasible {
            return Err(Error::Infeasible("the problem has no feasible (H, L)".into()));
        }
        let bounds = match a.bounds.as_deref() {
            None => None,
            Some(&[eps, eta_2, eta_d, f_2, f_d]) => Some(BoundInputs { eps, eta_2, eta_d, f_2, f_d }),
            Some(_) => return Err(Error::InvalidParameter("--bounds takes eps,eta_2,eta_D,f_2,f_D".into())),
        };
        events.extend(
            experiments::tile_time_events(&problem, sol.h, sol.l, a.mu, bounds)
                .into_iter()
                .filter(|(side, _)| *side == a.side)
                .map(|(_, e)| e),
        );
    }
    let rep = experiments::restricted_events(&a.tile, a.side, a.mu, a.lambda, &events, a.trials, seed, a.workers)?;
    Ok(match format {
        Format::Csv => csv_summary(&rep.results),
        _ => line(&record(config("restricted", a), json!({ "report": rep }))),
    })
}

#[derive(serde::Deserialize)]
struct Wrapper {
    #[serde(with = "experiments::time_serde")]
    t: f64,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = cli.out.clone();
    match run(&cli).and_then(|text| emit(out.as_deref(), &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
