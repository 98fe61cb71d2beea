//! Monte Carlo orchestration.
//!
//! Trial `i` of a plan draws everything (seed coins first, then edge delays)
//! from `trial_rng(master_seed, i)`, so results do not depend on the number
//! of worker threads. Reusing the same master seed across `mu` values
//! couples the runs: seed sets are nested in `mu`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::gw_reach_probability;
use crate::error::{Error, Result};
use crate::feasibility::FeasibilityProblem;
use crate::graph::{
    build_capped_tree, build_complete_tree, build_tile, build_tile_tree, restrict_to_side, Graph, GraphDump,
    Role, Side, TileParams, VertexId,
};
use crate::rng::{substream, trial_rng};
use crate::seeding::{fixed_seeds, place_seeds, SeedConfig};
use crate::sim::{simulate, simulate_observed, PType, SimOutcome, StopCondition};
use crate::stats::{bonferroni_z, two_proportion_z, wilson_interval};

pub const DEFAULT_Z: f64 = 1.96;

/// Two-sided level of a single `z > 3` comparison.
pub const WITNESS_ALPHA: f64 = 0.0027;

/// Serde helpers for times that may be `+inf`, written as the string `"inf"`.
pub mod time_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        if t.is_infinite() && *t > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*t)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) => match s.to_ascii_lowercase().trim_start_matches('+') {
                "inf" | "infinity" => Ok(f64::INFINITY),
                other => other.parse().map_err(de::Error::custom),
            },
        }
    }
}

/// A vertex given by id or by landmark name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexRef {
    Id(VertexId),
    Name(String),
}

impl VertexRef {
    pub fn resolve(&self, g: &Graph) -> Result<VertexId> {
        match self {
            VertexRef::Id(v) if g.contains(*v) => Ok(*v),
            VertexRef::Id(v) => Err(Error::invalid(format!("vertex {v} not in graph"))),
            VertexRef::Name(n) => g.require_landmark(n),
        }
    }
}

impl std::fmt::Display for VertexRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VertexRef::Id(v) => write!(f, "{v}"),
            VertexRef::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    Tile { tile: TileParams },
    Side { tile: TileParams, side: Side },
    CompleteTree { d: u32, h: u32 },
    CappedTree { d: u32, h: u32 },
    TileTree { phi: u32, depth: u32, tile: TileParams },
    /// Path `0 - 1 - ... - length`, landmarks `start` and `end`.
    Path { length: u32 },
    /// Triangle on `O = 0`, `a = 1`, `B = 2`.
    Triangle,
    Custom { graph: GraphDump },
}

/// A built graph plus tile-tree junctions when applicable.
pub struct BuiltGraph {
    pub graph: Graph,
    pub junctions: Option<Vec<Vec<VertexId>>>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<BuiltGraph> {
        let plain = |graph| BuiltGraph { graph, junctions: None };
        Ok(match self {
            GraphSpec::Tile { tile } => plain(build_tile(tile)?),
            GraphSpec::Side { tile, side } => plain(restrict_to_side(&build_tile(tile)?, *side)?),
            GraphSpec::CompleteTree { d, h } => plain(build_complete_tree(*d, *h)?),
            GraphSpec::CappedTree { d, h } => plain(build_capped_tree(*d, *h)?),
            GraphSpec::TileTree { phi, depth, tile } => {
                let t = build_tile_tree(*phi, *depth, tile)?;
                BuiltGraph {
                    graph: t.graph,
                    junctions: Some(t.junctions),
                }
            }
            GraphSpec::Path { length } => {
                let edges: Vec<_> = (0..*length).map(|i| (i, i + 1)).collect();
                plain(Graph::from_edges(
                    *length as usize + 1,
                    &edges,
                    &[("start", 0), ("end", *length)],
                    0,
                )?)
            }
            GraphSpec::Triangle => plain(Graph::from_edges(
                3,
                &[(0, 1), (0, 2), (1, 2)],
                &[("O", 0), ("a", 1), ("B", 2)],
                0,
            )?),
            GraphSpec::Custom { graph } => plain(Graph::from_dump(graph.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Estimand {
    /// The vertex is infected, with the given type.
    TypeIs {
        vertex: VertexRef,
        #[serde(rename = "type")]
        ptype: PType,
    },
    /// Infected no later than `threshold`.
    TimeAtMost {
        vertex: VertexRef,
        #[serde(with = "time_serde")]
        threshold: f64,
    },
    /// Not infected before `threshold` (never infected counts).
    TimeAtLeast {
        vertex: VertexRef,
        #[serde(with = "time_serde")]
        threshold: f64,
    },
    /// `FPP1` infects some junction at tile depth `depth` of a tile tree.
    JunctionReached { depth: u32 },
}

impl Estimand {
    pub fn label(&self) -> String {
        match self {
            Estimand::TypeIs { vertex, ptype } => format!("type:{vertex}={ptype}"),
            Estimand::TimeAtMost { vertex, threshold } => format!("time:{vertex}<={threshold}"),
            Estimand::TimeAtLeast { vertex, threshold } => format!("time:{vertex}>={threshold}"),
            Estimand::JunctionReached { depth } => format!("junction-reached:{depth}"),
        }
    }
}

fn default_z() -> f64 {
    DEFAULT_Z
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialPlan {
    pub graph: GraphSpec,
    pub mu: f64,
    pub lambda: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub estimand: Estimand,
    /// Use exactly these seeds in every trial instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_seeds: Option<Vec<VertexRef>>,
    /// Defaults to vertex 0, the construction root of every built graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<VertexRef>,
    /// Defaults to stopping at the estimand's vertex, or running to
    /// exhaustion for junction events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopCondition>,
    #[serde(default = "default_z")]
    pub z: f64,
}

impl TrialPlan {
    pub fn new(graph: GraphSpec, mu: f64, lambda: f64, trials: u64, master_seed: u64, estimand: Estimand) -> Self {
        TrialPlan {
            graph,
            mu,
            lambda,
            trials,
            master_seed,
            estimand,
            fixed_seeds: None,
            origin: None,
            stop: None,
            z: DEFAULT_Z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::invalid("z must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimand: String,
    pub mu: f64,
    pub lambda: f64,
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub master_seed: u64,
    /// Kept out of serialized records so they are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
    pub metadata: serde_json::Value,
}

impl EstimateResult {
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        estimand: String,
        successes: u64,
        trials: u64,
        z: f64,
        mu: f64,
        lambda: f64,
        master_seed: u64,
        metadata: serde_json::Value,
    ) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials, z);
        EstimateResult {
            estimand,
            mu,
            lambda,
            successes,
            trials,
            p_hat: successes as f64 / trials.max(1) as f64,
            ci_low,
            ci_high,
            z,
            master_seed,
            wall_time: Duration::ZERO,
            metadata,
        }
    }

    /// Binomial standard error at `p_hat`.
    pub fn sigma(&self) -> f64 {
        crate::stats::proportion_sigma(self.p_hat, self.trials)
    }
}

/// Outcome summary of one trial, enough to recount the estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub index: u64,
    pub success: bool,
    pub target_time: Option<f64>,
    pub target_type: Option<PType>,
}

/// A plan with its graph built and vertex references resolved.
pub struct PreparedPlan {
    pub plan: TrialPlan,
    pub graph: Graph,
    pub origin: VertexId,
    fixed: Option<SeedConfig>,
    stop: StopCondition,
    target: Option<VertexId>,
    junction_mask: Option<Vec<bool>>,
}

impl PreparedPlan {
    pub fn new(plan: &TrialPlan) -> Result<Self> {
        plan.validate()?;
        let built = plan.graph.build()?;
        let g = built.graph;
        let origin = match &plan.origin {
            Some(r) => r.resolve(&g)?,
            None => 0,
        };
        let fixed = match &plan.fixed_seeds {
            Some(list) => {
                let ids = list.iter().map(|r| r.resolve(&g)).collect::<Result<Vec<_>>>()?;
                Some(fixed_seeds(&g, &ids)?)
            }
            None => None,
        };
        let (target, junction_mask) = match &plan.estimand {
            Estimand::TypeIs { vertex, .. }
            | Estimand::TimeAtMost { vertex, .. }
            | Estimand::TimeAtLeast { vertex, .. } => (Some(vertex.resolve(&g)?), None),
            Estimand::JunctionReached { depth } => {
                let junctions = built
                    .junctions
                    .as_ref()
                    .ok_or_else(|| Error::invalid("junction events need a tile-tree graph"))?;
                let level = junctions
                    .get(*depth as usize)
                    .ok_or_else(|| Error::invalid(format!("tile tree has no depth {depth}")))?;
                let mut mask = vec![false; g.vertex_count()];
                for &v in level {
                    mask[v as usize] = true;
                }
                (None, Some(mask))
            }
        };
        let stop = match (plan.stop, target) {
            (Some(s), _) => s,
            (None, Some(t)) => StopCondition::target(t),
            (None, None) => StopCondition::exhaustive(),
        };
        stop.validate(&g)?;
        Ok(PreparedPlan {
            plan: plan.clone(),
            graph: g,
            origin,
            fixed,
            stop,
            target,
            junction_mask,
        })
    }

    fn seeds(&self, rng: &mut crate::rng::TrialRng) -> Result<SeedConfig> {
        match &self.fixed {
            Some(f) => Ok(f.clone()),
            None => place_seeds(&self.graph, self.plan.mu, &[self.origin], rng),
        }
    }

    /// Runs trial `i`, returning its log and the full outcome.
    pub fn run_trial_full(&self, i: u64) -> Result<(TrialLog, SimOutcome)> {
        let p = &self.plan;
        let mut rng = trial_rng(p.master_seed, i);
        let seeds = self.seeds(&mut rng)?;
        let out = match &self.junction_mask {
            Some(mask) => simulate_observed(&self.graph, self.origin, &seeds, p.lambda, &self.stop, &mut rng, |r| {
                if r.ptype == PType::Fpp1 && mask[r.vertex as usize] {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })?,
            None => simulate(&self.graph, self.origin, &seeds, p.lambda, &self.stop, &mut rng)?,
        };
        let rec = self.target.and_then(|t| out.record(t).copied());
        let success = match &p.estimand {
            Estimand::TypeIs { ptype, .. } => rec.is_some_and(|r| r.ptype == *ptype),
            Estimand::TimeAtMost { threshold, .. } => rec.is_some_and(|r| r.time <= *threshold),
            Estimand::TimeAtLeast { threshold, .. } => rec.is_none_or(|r| r.time >= *threshold),
            Estimand::JunctionReached { .. } => {
                let mask = self.junction_mask.as_ref().expect("mask built for junction events");
                out.records
                    .iter()
                    .flatten()
                    .any(|r| r.ptype == PType::Fpp1 && mask[r.vertex as usize])
            }
        };
        let log = TrialLog {
            index: i,
            success,
            target_time: rec.map(|r| r.time),
            target_type: rec.map(|r| r.ptype),
        };
        Ok((log, out))
    }

    pub fn run_trial(&self, i: u64) -> Result<TrialLog> {
        self.run_trial_full(i).map(|(log, _)| log)
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Err(Error::invalid("workers must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn plan_metadata(plan: &TrialPlan) -> serde_json::Value {
    serde_json::json!({ "plan": plan })
}

pub fn estimate_event(plan: &TrialPlan, workers: usize) -> Result<EstimateResult> {
    let start = Instant::now();
    let prep = PreparedPlan::new(plan)?;
    let successes = with_workers(workers, || {
        (0..plan.trials)
            .into_par_iter()
            .try_fold(|| 0u64, |acc, i| Ok::<_, Error>(acc + u64::from(prep.run_trial(i)?.success)))
            .try_reduce(|| 0, |a, b| Ok(a + b))
    })??;
    let mut r = EstimateResult::from_counts(
        plan.estimand.label(),
        successes,
        plan.trials,
        plan.z,
        plan.mu,
        plan.lambda,
        plan.master_seed,
        plan_metadata(plan),
    );
    r.wall_time = start.elapsed();
    Ok(r)
}

/// Per-trial logs in trial order, for auditing a count.
pub fn trial_logs(plan: &TrialPlan, workers: usize) -> Result<Vec<TrialLog>> {
    let prep = PreparedPlan::new(plan)?;
    with_workers(workers, || {
        (0..plan.trials)
            .into_par_iter()
            .map(|i| prep.run_trial(i))
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub result: EstimateResult,
    /// Trials in which `B` was infected from the upper part.
    pub winner_upper: u64,
    pub winner_lower: u64,
    /// Level (distance from `O`) of the seed whose `FPPλ` cluster took `B`,
    /// keyed `side:level`.
    pub seed_level_histogram: BTreeMap<String, u64>,
    /// Trials whose parent chain from `B` met a vertex of the other side.
    pub side_inconsistencies: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacentComparison {
    pub mu_from: f64,
    pub mu_to: f64,
    pub z: f64,
    /// `-1` significant decrease, `1` significant increase, `0` neither.
    pub significant: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub z_critical: f64,
    pub comparisons: Vec<AdjacentComparison>,
    /// No significant increase between adjacent `mu` values.
    pub nonincreasing_within_noise: bool,
    /// Middle `mu` of adjacent pairs changing direction significantly.
    pub non_monotone_witnesses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub tile: TileParams,
    pub lambda: f64,
    pub master_seed: u64,
    pub rows: Vec<SweepRow>,
    pub monotonicity: MonotonicityReport,
}

impl SweepReport {
    /// One JSON line per `mu`, then the monotonicity summary.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        let header = serde_json::json!({
            "tile": self.tile, "lambda": self.lambda, "master_seed": self.master_seed,
        });
        for row in &self.rows {
            let mut v = serde_json::to_value(row).expect("serializable");
            v["config"] = header.clone();
            s.push_str(&v.to_string());
            s.push('\n');
        }
        let mut v = serde_json::json!({ "monotonicity": self.monotonicity });
        v["config"] = header;
        s.push_str(&v.to_string());
        s.push('\n');
        s
    }
}

/// Adjacent two-proportion tests with a Bonferroni-corrected `z > 3`.
pub fn monotonicity_report(mus: &[f64], results: &[EstimateResult]) -> MonotonicityReport {
    let m = mus.len().saturating_sub(1);
    let z_critical = bonferroni_z(WITNESS_ALPHA, m).max(3.0);
    let comparisons: Vec<AdjacentComparison> = results
        .windows(2)
        .zip(mus.windows(2))
        .map(|(r, mu)| {
            let z = two_proportion_z(r[0].successes, r[0].trials, r[1].successes, r[1].trials);
            let significant = if z > z_critical {
                1
            } else if z < -z_critical {
                -1
            } else {
                0
            };
            AdjacentComparison {
                mu_from: mu[0],
                mu_to: mu[1],
                z,
                significant,
            }
        })
        .collect();
    let non_monotone_witnesses = comparisons
        .windows(2)
        .filter(|w| w[0].significant != 0 && w[1].significant == -w[0].significant)
        .map(|w| w[0].mu_to)
        .collect();
    MonotonicityReport {
        z_critical,
        nonincreasing_within_noise: comparisons.iter().all(|c| c.significant <= 0),
        comparisons,
        non_monotone_witnesses,
    }
}

#[derive(Debug, Clone, Copy)]
struct TileTrial {
    fpp1: bool,
    upper: Option<bool>,
    seed_level: Option<u32>,
    inconsistent: bool,
}

fn tile_trial(prep: &PreparedPlan, b: VertexId, i: u64) -> Result<TileTrial> {
    let (log, out) = prep.run_trial_full(i)?;
    let g = &prep.graph;
    let upper = out.record(b).and_then(|r| r.parent).map(|p| g.role(p) == Role::UpperPart);
    let other = match upper {
        Some(true) => Some(Role::LowerPart),
        Some(false) => Some(Role::UpperPart),
        None => None,
    };
    let inconsistent = other.is_some_and(|o| out.parent_chain(b).any(|v| g.role(v) == o));
    Ok(TileTrial {
        fpp1: log.success,
        upper,
        seed_level: out.winning_seed_level,
        inconsistent,
    })
}

/// `P_mu(B infected by FPP1)` on one tile for each `mu`, with winner-side
/// split and winning-seed levels. All `mu` share the trial streams.
pub fn tile_sweep(
    p: &TileParams,
    lambda: f64,
    mu_list: &[f64],
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<SweepReport> {
    if mu_list.is_empty() {
        return Err(Error::invalid("mu list is empty"));
    }
    let mut rows = Vec::with_capacity(mu_list.len());
    for &mu in mu_list {
        let start = Instant::now();
        let plan = TrialPlan::new(
            GraphSpec::Tile { tile: *p },
            mu,
            lambda,
            trials,
            master_seed,
            Estimand::TypeIs {
                vertex: VertexRef::Name("B".into()),
                ptype: PType::Fpp1,
            },
        );
        let prep = PreparedPlan::new(&plan)?;
        let b = prep.graph.require_landmark("B")?;
        let per_trial = with_workers(workers, || {
            (0..trials)
                .into_par_iter()
                .map(|i| tile_trial(&prep, b, i))
                .collect::<Result<Vec<_>>>()
        })??;
        let successes = per_trial.iter().filter(|t| t.fpp1).count() as u64;
        let mut hist = BTreeMap::new();
        let (mut up, mut low, mut bad) = (0, 0, 0);
        for t in &per_trial {
            match t.upper {
                Some(true) => up += 1,
                Some(false) => low += 1,
                None => {}
            }
            bad += u64::from(t.inconsistent);
            if let (Some(level), Some(side)) = (t.seed_level, t.upper) {
                let key = format!("{}:{level}", if side { "upper" } else { "lower" });
                *hist.entry(key).or_insert(0) += 1;
            }
        }
        let mut result = EstimateResult::from_counts(
            plan.estimand.label(),
            successes,
            trials,
            plan.z,
            mu,
            lambda,
            master_seed,
            plan_metadata(&plan),
        );
        result.wall_time = start.elapsed();
        rows.push(SweepRow {
            result,
            winner_upper: up,
            winner_lower: low,
            seed_level_histogram: hist,
            side_inconsistencies: bad,
        });
    }
    let results: Vec<EstimateResult> = rows.iter().map(|r| r.result.clone()).collect();
    Ok(SweepReport {
        tile: *p,
        lambda,
        master_seed,
        monotonicity: monotonicity_report(mu_list, &results),
        rows,
    })
}

/// A threshold event on the infection time `T` of `B` within one tile side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEvent {
    pub label: String,
    #[serde(with = "time_serde")]
    pub threshold: f64,
    /// `T >= threshold` instead of `T <= threshold`.
    #[serde(default)]
    pub at_least: bool,
    /// Also require the side's cap vertex (`W_up` or `W_low`) to be `FPP1`.
    #[serde(default)]
    pub require_cap_fpp1: bool,
    /// A reference lower bound reported next to the estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bound: Option<f64>,
}

/// Inputs for the reference lower bounds of the four tile-side events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub eps: f64,
    pub eta_2: f64,
    pub eta_d: f64,
    /// Extinction probabilities of the seed-free clusters for `d = 2` and `d = D`.
    pub f_2: f64,
    pub f_d: f64,
}

/// The time events whose probabilities drive a tile at small and at large
/// `mu`, built from feasibility constants and a chosen `(H, L)`:
///
/// * lower, `T <= C + (H+1)/cin2 + R/(λ cin1)`
/// * upper, `T >= (L+1)/coutD`
/// * lower, `T >= (H/2)/cout2 + (H/2+1)/(λ cout2) + R/(λ cout1)`
/// * upper, `T <= 2C + (L+1)/cinD` with `W_up` of type `FPP1`
///
/// With `bounds`, each event carries its reference lower bound at `mu`.
pub fn tile_time_events(
    problem: &FeasibilityProblem,
    h: u64,
    l: u64,
    mu: f64,
    bounds: Option<BoundInputs>,
) -> Vec<(Side, TimeEvent)> {
    let red = problem.red_lhs(h);
    let white = problem.white_lhs(h);
    let c = &problem.constants;
    let up_slow = (l as f64 + 1.0) / c.cout_d;
    let up_fast = 2.0 * problem.frak_c + (l as f64 + 1.0) / c.cin_d;
    let q = 1.0 - mu;
    let b = |f: &dyn Fn(BoundInputs) -> f64| bounds.map(f);
    vec![
        (
            Side::Lower,
            TimeEvent {
                label: "lower-fast".into(),
                threshold: red,
                at_least: false,
                require_cap_fpp1: false,
                reference_bound: b(&|x| {
                    (1.0 - x.eps).powi(3) * q * q * ((1.0 - x.f_2 - x.eta_2) * q * q - x.eps)
                }),
            },
        ),
        (
            Side::Upper,
            TimeEvent {
                label: "upper-slow".into(),
                threshold: up_slow,
                at_least: true,
                require_cap_fpp1: false,
                reference_bound: b(&|x| 1.0 - x.eps),
            },
        ),
        (
            Side::Lower,
            TimeEvent {
                label: "lower-slow".into(),
                threshold: white,
                at_least: true,
                require_cap_fpp1: false,
                reference_bound: b(&|x| 1.0 - 3.0 * x.eps),
            },
        ),
        (
            Side::Upper,
            TimeEvent {
                label: "upper-fast-fpp1-cap".into(),
                threshold: up_fast,
                at_least: false,
                require_cap_fpp1: true,
                reference_bound: b(&|x| {
                    (1.0 - x.eps).powi(2) * q * q * ((1.0 - x.eta_d - x.f_d) * q * q - x.eps)
                }),
            },
        ),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestrictedReport {
    pub side: Side,
    /// One result per time event, then `B` of type `FPP1`, then the side's
    /// cap vertex of type `FPP1`.
    pub results: Vec<EstimateResult>,
    pub events: Vec<TimeEvent>,
    pub mean_time: f64,
    pub time_sd: f64,
}

/// Estimates time events for `B` on one side of a tile, from a single batch
/// of trials.
#[allow(clippy::too_many_arguments)]
pub fn restricted_events(
    p: &TileParams,
    side: Side,
    mu: f64,
    lambda: f64,
    events: &[TimeEvent],
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<RestrictedReport> {
    let plan = TrialPlan::new(
        GraphSpec::Side { tile: *p, side },
        mu,
        lambda,
        trials,
        master_seed,
        Estimand::TypeIs {
            vertex: VertexRef::Name("B".into()),
            ptype: PType::Fpp1,
        },
    );
    let prep = PreparedPlan::new(&plan)?;
    let cap_name = match side {
        Side::Upper => "W_up",
        Side::Lower => "W_low",
    };
    let cap = prep.graph.require_landmark(cap_name)?;
    let per_trial: Vec<(f64, bool, bool)> = with_workers(workers, || {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let (log, out) = prep.run_trial_full(i)?;
                let cap_fpp1 = out.ptype(cap) == Some(PType::Fpp1);
                Ok((log.target_time.unwrap_or(f64::INFINITY), log.success, cap_fpp1))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let meta = plan_metadata(&plan);
    let count = |pred: &dyn Fn(&(f64, bool, bool)) -> bool| per_trial.iter().filter(|t| pred(t)).count() as u64;
    let result = |label: String, s: u64| {
        let mut m = meta.clone();
        m["side"] = serde_json::json!(side);
        EstimateResult::from_counts(label, s, trials, plan.z, mu, lambda, master_seed, m)
    };
    let mut results = Vec::with_capacity(events.len() + 2);
    for ev in events {
        let s = count(&|&(t, _, cap_ok)| {
            let hit = if ev.at_least { t >= ev.threshold } else { t <= ev.threshold };
            hit && (!ev.require_cap_fpp1 || cap_ok)
        });
        let mut r = result(format!("{}:{}", ev.label, ev.threshold), s);
        r.metadata["event"] = serde_json::to_value(ev).expect("serializable");
        results.push(r);
    }
    results.push(result("type:B=FPP1".into(), count(&|t| t.1)));
    results.push(result(format!("type:{cap_name}=FPP1"), count(&|t| t.2)));
    let times: Vec<f64> = per_trial.iter().map(|t| t.0).collect();
    let (mean_time, var) = crate::stats::mean_var(&times);
    Ok(RestrictedReport {
        side,
        results,
        events: events.to_vec(),
        mean_time,
        time_sd: var.sqrt(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub phi: u32,
    pub depth: u32,
    /// `FPP1` infects a depth-`depth` junction of the tile tree.
    pub direct: EstimateResult,
    /// `B` of type `FPP1` on a standalone tile.
    pub p_tile: EstimateResult,
    /// Reach probability of a Galton–Watson tree with `Binomial(phi, p_tile)`
    /// offspring, for depths `1..=depth`.
    pub approximation: Vec<f64>,
    /// `direct.p_hat - approximation[depth - 1]`.
    pub gap: f64,
}

/// Direct tile-tree estimate against the independent-tile approximation.
/// The standalone-tile trials use a separate substream of `master_seed`.
#[allow(clippy::too_many_arguments)]
pub fn survival_proxy(
    phi: u32,
    depth: u32,
    p: &TileParams,
    mu: f64,
    lambda: f64,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<SurvivalReport> {
    let direct_plan = TrialPlan::new(
        GraphSpec::TileTree { phi, depth, tile: *p },
        mu,
        lambda,
        trials,
        master_seed,
        Estimand::JunctionReached { depth },
    );
    let direct = estimate_event(&direct_plan, workers)?;
    let tile_plan = TrialPlan::new(
        GraphSpec::Tile { tile: *p },
        mu,
        lambda,
        trials,
        substream(master_seed, 1),
        Estimand::TypeIs {
            vertex: VertexRef::Name("B".into()),
            ptype: PType::Fpp1,
        },
    );
    let p_tile = estimate_event(&tile_plan, workers)?;
    let approximation = (1..=depth)
        .map(|k| gw_reach_probability(phi, p_tile.p_hat, k))
        .collect::<Result<Vec<_>>>()?;
    let gap = direct.p_hat - approximation[depth as usize - 1];
    Ok(SurvivalReport {
        phi,
        depth,
        direct,
        p_tile,
        approximation,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub p_true: f64,
    pub z: f64,
    pub outer: u64,
    pub inner: u64,
    pub covered: u64,
    pub coverage: f64,
    pub master_seed: u64,
}

/// Fraction of Wilson intervals from `outer` Bernoulli(`p_true`) batches of
/// size `inner` that contain `p_true`.
pub fn ci_selftest(outer: u64, inner: u64, p_true: f64, z: f64, master_seed: u64) -> Result<CoverageReport> {
    use rand::Rng;
    if !(0.0..=1.0).contains(&p_true) {
        return Err(Error::invalid(format!("p_true must lie in [0, 1], got {p_true}")));
    }
    if outer == 0 || inner == 0 {
        return Err(Error::invalid("outer and inner counts must be >= 1"));
    }
    let covered: u64 = (0..outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            let s = (0..inner).filter(|_| rng.random::<f64>() < p_true).count() as u64;
            let (lo, hi) = wilson_interval(s, inner, z);
            u64::from(lo <= p_true && p_true <= hi)
        })
        .sum();
    Ok(CoverageReport {
        p_true,
        z,
        outer,
        inner,
        covered,
        coverage: covered as f64 / outer as f64,
        master_seed,
    })
}

pub const CSV_HEADER: &str = "mu,lambda,estimand,p_hat,ci_low,ci_high,trials,successes,seed";

/// CSV summary, one line per result.
pub fn csv_summary<'a>(results: impl IntoIterator<Item = &'a EstimateResult>) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in results {
        let label = if r.estimand.contains([',', '"']) {
            format!("\"{}\"", r.estimand.replace('"', "\"\""))
        } else {
            r.estimand.clone()
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.mu, r.lambda, label, r.p_hat, r.ci_low, r.ci_high, r.trials, r.successes, r.master_seed
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile() -> TileParams {
        TileParams::new(3, 2, 2, 3).unwrap()
    }

    fn b_fpp1() -> Estimand {
        Estimand::TypeIs {
            vertex: VertexRef::Name("B".into()),
            ptype: PType::Fpp1,
        }
    }

    #[test]
    fn origin_event_is_certain() {
        let plan = TrialPlan::new(
            GraphSpec::Tile { tile: tile() },
            0.5,
            0.3,
            200,
            1,
            Estimand::TypeIs {
                vertex: VertexRef::Name("O".into()),
                ptype: PType::Fpp1,
            },
        );
        let r = estimate_event(&plan, 2).unwrap();
        assert_eq!(r.successes, 200);
        assert_eq!(r.p_hat, 1.0);
        assert_eq!(r.ci_high, 1.0);
        assert!(r.ci_low <= r.p_hat);
    }

    #[test]
    fn missing_landmark_is_invalid() {
        let plan = TrialPlan::new(
            GraphSpec::CompleteTree { d: 2, h: 3 },
            0.1,
            1.0,
            10,
            1,
            b_fpp1(),
        );
        assert!(matches!(estimate_event(&plan, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_trials_rejected() {
        let plan = TrialPlan::new(GraphSpec::Triangle, 0.1, 1.0, 0, 1, b_fpp1());
        assert_eq!(estimate_event(&plan, 1).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn junction_event_needs_tile_tree() {
        let plan = TrialPlan::new(
            GraphSpec::Tile { tile: tile() },
            0.1,
            1.0,
            10,
            1,
            Estimand::JunctionReached { depth: 1 },
        );
        assert!(estimate_event(&plan, 1).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let plan = TrialPlan::new(GraphSpec::Tile { tile: tile() }, 0.2, 0.3, 3000, 42, b_fpp1());
        let a = estimate_event(&plan, 1).unwrap();
        let b = estimate_event(&plan, 4).unwrap();
        assert_eq!(a.successes, b.successes);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn audit_logs_recount() {
        let plan = TrialPlan::new(GraphSpec::Tile { tile: tile() }, 0.3, 0.5, 500, 9, b_fpp1());
        let r = estimate_event(&plan, 3).unwrap();
        let logs = trial_logs(&plan, 2).unwrap();
        assert_eq!(logs.iter().filter(|l| l.success).count() as u64, r.successes);
        assert!(logs.iter().enumerate().all(|(i, l)| l.index == i as u64));
    }

    #[test]
    fn sweep_extremes_and_consistency() {
        let rep = tile_sweep(&tile(), 0.2, &[0.0, 0.3, 1.0], 400, 5, 2).unwrap();
        assert_eq!(rep.rows[0].result.p_hat, 1.0);
        assert_eq!(rep.rows[2].result.p_hat, 0.0);
        for row in &rep.rows {
            assert_eq!(row.side_inconsistencies, 0);
            assert_eq!(row.winner_upper + row.winner_lower, 400);
            let fpp_lambda = row.result.trials - row.result.successes;
            assert_eq!(row.seed_level_histogram.values().sum::<u64>(), fpp_lambda);
        }
    }

    #[test]
    fn unit_rate_sweep_is_pathwise_monotone() {
        // At λ = 1 types do not change times and seed sets are nested in mu,
        // so success counts can only go down.
        let mus: Vec<f64> = (0..6).map(|i| f64::from(i) * 0.1).collect();
        let rep = tile_sweep(&tile(), 1.0, &mus, 1000, 8, 2).unwrap();
        for w in rep.rows.windows(2) {
            assert!(w[1].result.successes <= w[0].result.successes);
        }
        assert!(rep.monotonicity.nonincreasing_within_noise);
        assert!(rep.monotonicity.non_monotone_witnesses.is_empty());
    }

    #[test]
    fn monotonicity_flags_direction_changes() {
        let mk = |s: u64| EstimateResult::from_counts("x".into(), s, 10_000, 1.96, 0.0, 1.0, 0, serde_json::Value::Null);
        let res = vec![mk(9000), mk(5000), mk(8000), mk(8010)];
        let rep = monotonicity_report(&[0.1, 0.2, 0.3, 0.4], &res);
        assert_eq!(rep.comparisons[0].significant, -1);
        assert_eq!(rep.comparisons[1].significant, 1);
        assert_eq!(rep.comparisons[2].significant, 0);
        assert_eq!(rep.non_monotone_witnesses, vec![0.2]);
        assert!(!rep.nonincreasing_within_noise);
    }

    #[test]
    fn infinite_threshold_is_certain_and_serializes() {
        let ev = TimeEvent {
            label: "all".into(),
            threshold: f64::INFINITY,
            at_least: false,
            require_cap_fpp1: false,
            reference_bound: None,
        };
        let json = serde_json::to_string(&ev).unwrap();
        assert!(json.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<TimeEvent>(&json).unwrap(), ev);
        let rep = restricted_events(&tile(), Side::Lower, 0.4, 0.5, &[ev], 300, 2, 2).unwrap();
        assert_eq!(rep.results[0].p_hat, 1.0);
    }

    #[test]
    fn upper_cap_fpp1_without_seeds() {
        let rep = restricted_events(&tile(), Side::Upper, 0.0, 0.5, &[], 200, 3, 1).unwrap();
        assert_eq!(rep.results.last().unwrap().p_hat, 1.0);
    }

    #[test]
    fn survival_without_seeds_is_certain() {
        let rep = survival_proxy(2, 2, &tile(), 0.0, 0.5, 100, 4, 2).unwrap();
        assert_eq!(rep.direct.p_hat, 1.0);
        assert_eq!(rep.p_tile.p_hat, 1.0);
        assert_eq!(rep.approximation, vec![1.0, 1.0]);
    }

    #[test]
    fn selftest_degenerate_probabilities() {
        assert_eq!(ci_selftest(200, 50, 0.0, 1.96, 1).unwrap().coverage, 1.0);
        assert_eq!(ci_selftest(200, 50, 1.0, 1.96, 1).unwrap().coverage, 1.0);
    }

    #[test]
    fn plan_json_round_trip_with_inf() {
        let plan = TrialPlan::new(
            GraphSpec::Path { length: 4 },
            0.0,
            1.0,
            10,
            3,
            Estimand::TimeAtMost {
                vertex: VertexRef::Name("end".into()),
                threshold: f64::INFINITY,
            },
        );
        let s = serde_json::to_string(&plan).unwrap();
        let back: TrialPlan = serde_json::from_str(&s).unwrap();
        assert_eq!(back.estimand, plan.estimand);
        assert_eq!(estimate_event(&back, 1).unwrap().p_hat, 1.0);
    }

    #[test]
    fn csv_has_expected_columns() {
        let r = EstimateResult::from_counts("a,b".into(), 5, 10, 1.96, 0.1, 0.2, 7, serde_json::Value::Null);
        let csv = csv_summary([&r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert!(lines.next().unwrap().starts_with("0.1,0.2,\"a,b\",0.5,"));
    }
}
