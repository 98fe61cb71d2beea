//! Event-driven simulation of the two competing infections.
//!
//! [`simulate`] samples one exponential delay per directed edge instance at
//! the moment its tail vertex is infected and processes tentative
//! infections in time order (a Dijkstra search with random weights). By
//! memorylessness this has the same law as running every edge clock
//! literally, which is what [`explicit_clock_simulate`] does; the latter is
//! slow and exists to cross-check the former.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, VertexId};
use crate::seeding::SeedConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PType {
    #[serde(rename = "FPP1")]
    Fpp1,
    #[serde(rename = "FPPLAMBDA")]
    FppLambda,
}

impl PType {
    #[inline]
    fn rate(self, lambda: f64) -> f64 {
        match self {
            PType::Fpp1 => 1.0,
            PType::FppLambda => lambda,
        }
    }
}

impl std::fmt::Display for PType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PType::Fpp1 => "FPP1",
            PType::FppLambda => "FPPLAMBDA",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfectionRecord {
    pub vertex: VertexId,
    pub time: f64,
    #[serde(rename = "type")]
    pub ptype: PType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub via_edge: Option<EdgeId>,
    pub parent: Option<VertexId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TargetReached,
    Horizon,
    Exhausted,
    Budget,
}

/// When to halt. At least one field must be set; whichever is met first wins.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StopCondition {
    #[serde(default)]
    pub target: Option<VertexId>,
    #[serde(default)]
    pub time_horizon: Option<f64>,
    #[serde(default)]
    pub max_infected: Option<usize>,
}

impl StopCondition {
    pub fn target(v: VertexId) -> Self {
        StopCondition {
            target: Some(v),
            ..Default::default()
        }
    }

    pub fn horizon(t: f64) -> Self {
        StopCondition {
            time_horizon: Some(t),
            ..Default::default()
        }
    }

    /// Runs until no tentative infection is left.
    pub fn exhaustive() -> Self {
        Self::horizon(f64::INFINITY)
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.target.is_none() && self.time_horizon.is_none() && self.max_infected.is_none() {
            return Err(Error::invalid("stop condition needs a target, horizon or budget"));
        }
        if let Some(t) = self.target {
            if !g.contains(t) {
                return Err(Error::invalid(format!("target {t} not in graph")));
            }
        }
        if let Some(h) = self.time_horizon {
            if h.is_nan() || h <= 0.0 {
                return Err(Error::invalid(format!("time horizon must be positive, got {h}")));
            }
        }
        if self.max_infected == Some(0) {
            return Err(Error::invalid("max_infected must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetVerdict {
    pub vertex: VertexId,
    #[serde(rename = "type")]
    pub ptype: PType,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub records: Vec<Option<InfectionRecord>>,
    pub stop_reason: StopReason,
    pub target_verdict: Option<TargetVerdict>,
    /// Seed that started the `FPPλ` cluster reaching the target, when the
    /// target ended up `FPPλ`.
    pub winning_seed: Option<VertexId>,
    pub winning_seed_level: Option<u32>,
    pub infected_count: usize,
}

impl SimOutcome {
    #[inline]
    pub fn record(&self, v: VertexId) -> Option<&InfectionRecord> {
        self.records[v as usize].as_ref()
    }

    pub fn ptype(&self, v: VertexId) -> Option<PType> {
        self.record(v).map(|r| r.ptype)
    }

    pub fn time(&self, v: VertexId) -> Option<f64> {
        self.record(v).map(|r| r.time)
    }

    /// `v`, its parent, grandparent, ... up to the origin.
    pub fn parent_chain(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        let mut cur = self.record(v).map(|r| r.vertex);
        std::iter::from_fn(move || {
            let here = cur?;
            cur = self.record(here).and_then(|r| r.parent);
            Some(here)
        })
    }

    /// Infections in time order.
    pub fn infections(&self) -> Vec<InfectionRecord> {
        let mut out: Vec<InfectionRecord> = self.records.iter().flatten().copied().collect();
        out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.vertex.cmp(&b.vertex)));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Row {
            vertex: VertexId,
            time: f64,
            #[serde(rename = "type")]
            ptype: PType,
            parent: Option<VertexId>,
        }
        let rows: Vec<Row> = self
            .infections()
            .into_iter()
            .map(|r| Row {
                vertex: r.vertex,
                time: r.time,
                ptype: r.ptype,
                parent: r.parent,
            })
            .collect();
        serde_json::json!({
            "stop_reason": self.stop_reason,
            "target": self.target_verdict,
            "winning_seed": self.winning_seed,
            "winning_seed_level": self.winning_seed_level,
            "infected_count": self.infected_count,
            "infections": rows,
        })
    }
}

/// A tentative infection packed as `time bits | vertex | edge`. Times are
/// non-negative, so their bit patterns sort like the values and a single
/// integer comparison gives time order with ties broken by vertex id, then
/// edge id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event(u128);

impl Event {
    #[inline]
    fn new(time: f64, vertex: VertexId, edge: EdgeId) -> Self {
        debug_assert!(time >= 0.0);
        Event(u128::from(time.to_bits()) << 64 | u128::from(vertex) << 32 | u128::from(edge))
    }

    #[inline]
    fn time(self) -> f64 {
        f64::from_bits((self.0 >> 64) as u64)
    }

    #[inline]
    fn vertex(self) -> VertexId {
        (self.0 >> 32) as VertexId
    }

    #[inline]
    fn edge(self) -> EdgeId {
        self.0 as EdgeId
    }
}

/// Marks an infected vertex in the `best` array.
const INFECTED: f64 = -1.0;

fn validate_inputs(g: &Graph, origin: VertexId, seeds: &SeedConfig, lambda: f64, stop: &StopCondition) -> Result<()> {
    if !g.contains(origin) {
        return Err(Error::invalid(format!("origin {origin} not in graph")));
    }
    if seeds.len() != g.vertex_count() {
        return Err(Error::invalid(format!(
            "seed configuration has {} entries for {} vertices",
            seeds.len(),
            g.vertex_count()
        )));
    }
    if seeds.is_seed(origin) {
        return Err(Error::invalid("the origin must not host a seed"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    stop.validate(g)
}

/// Outcome of an infection step against the stop condition.
enum Step {
    Continue,
    Stop(StopReason),
}

#[inline]
fn after_infection<F>(rec: &InfectionRecord, count: usize, stop: &StopCondition, observe: &mut F) -> Step
where
    F: FnMut(&InfectionRecord) -> ControlFlow<()>,
{
    if observe(rec).is_break() || stop.target == Some(rec.vertex) {
        return Step::Stop(StopReason::TargetReached);
    }
    if stop.max_infected.is_some_and(|m| count >= m) {
        return Step::Stop(StopReason::Budget);
    }
    Step::Continue
}

fn finish(g: &Graph, records: Vec<Option<InfectionRecord>>, stop_reason: StopReason, stop: &StopCondition, infected_count: usize) -> SimOutcome {
    let target_verdict = stop.target.and_then(|t| {
        records[t as usize].map(|r| TargetVerdict {
            vertex: t,
            ptype: r.ptype,
            time: r.time,
        })
    });
    let mut out = SimOutcome {
        records,
        stop_reason,
        target_verdict,
        winning_seed: None,
        winning_seed_level: None,
        infected_count,
    };
    if let Some(TargetVerdict { vertex, ptype: PType::FppLambda, .. }) = out.target_verdict {
        // Walk back through FPPλ vertices; the last one before an FPP1
        // parent is the seed that started this cluster.
        let mut seed = vertex;
        for v in out.parent_chain(vertex) {
            if out.ptype(v) == Some(PType::FppLambda) {
                seed = v;
            } else {
                break;
            }
        }
        out.winning_seed = Some(seed);
        out.winning_seed_level = Some(g.generation(seed));
    }
    out
}

/// Runs the process from `origin` until `stop` is met.
pub fn simulate<R: Rng + ?Sized>(
    g: &Graph,
    origin: VertexId,
    seeds: &SeedConfig,
    lambda: f64,
    stop: &StopCondition,
    rng: &mut R,
) -> Result<SimOutcome> {
    simulate_observed(g, origin, seeds, lambda, stop, rng, |_| ControlFlow::Continue(()))
}

/// As [`simulate`], calling `observe` on every infection in time order. If
/// `observe` breaks, the run halts with [`StopReason::TargetReached`].
pub fn simulate_observed<R, F>(
    g: &Graph,
    origin: VertexId,
    seeds: &SeedConfig,
    lambda: f64,
    stop: &StopCondition,
    rng: &mut R,
    mut observe: F,
) -> Result<SimOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&InfectionRecord) -> ControlFlow<()>,
{
    validate_inputs(g, origin, seeds, lambda, stop)?;
    let n = g.vertex_count();
    let horizon = stop.time_horizon.unwrap_or(f64::INFINITY);
    let mut records: Vec<Option<InfectionRecord>> = vec![None; n];
    let mut best = vec![f64::INFINITY; n];
    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();

    let root = InfectionRecord {
        vertex: origin,
        time: 0.0,
        ptype: PType::Fpp1,
        via_edge: None,
        parent: None,
    };
    records[origin as usize] = Some(root);
    best[origin as usize] = INFECTED;
    let mut count = 1;
    if let Step::Stop(reason) = after_infection(&root, count, stop, &mut observe) {
        return Ok(finish(g, records, reason, stop, count));
    }
    schedule(g, &mut best, &mut heap, &root, lambda, rng);

    let mut last_time = 0.0f64;
    let reason = loop {
        let Some(Reverse(ev)) = heap.pop() else {
            break StopReason::Exhausted;
        };
        let (time, vertex, edge) = (ev.time(), ev.vertex(), ev.edge());
        if best[vertex as usize] < 0.0 {
            continue;
        }
        if time > horizon {
            break StopReason::Horizon;
        }
        assert!(time >= last_time, "events processed out of time order");
        last_time = time;

        let [a, b] = g.edge(edge);
        let from = if a == vertex { b } else { a };
        let parent_type = records[from as usize].expect("event source is infected").ptype;
        let ptype = if seeds.is_seed(vertex) {
            PType::FppLambda
        } else {
            parent_type
        };
        let rec = InfectionRecord {
            vertex,
            time,
            ptype,
            via_edge: Some(edge),
            parent: Some(from),
        };
        records[vertex as usize] = Some(rec);
        best[vertex as usize] = INFECTED;
        count += 1;
        if let Step::Stop(reason) = after_infection(&rec, count, stop, &mut observe) {
            break reason;
        }
        schedule(g, &mut best, &mut heap, &rec, lambda, rng);
    };
    Ok(finish(g, records, reason, stop, count))
}

#[inline]
fn schedule<R: Rng + ?Sized>(
    g: &Graph,
    best: &mut [f64],
    heap: &mut BinaryHeap<Reverse<Event>>,
    from: &InfectionRecord,
    lambda: f64,
    rng: &mut R,
) {
    let rate = from.ptype.rate(lambda);
    for &(w, e) in g.incident(from.vertex) {
        if best[w as usize] < 0.0 {
            continue;
        }
        let delay: f64 = rng.sample(Exp1);
        let t = from.time + delay / rate;
        // An event later than the best pending one for `w` can never win.
        if t <= best[w as usize] {
            best[w as usize] = t;
            heap.push(Reverse(Event::new(t, w, e)));
        }
    }
}

/// Infection time and type of `target`, i.e. the mixed passage time from
/// `origin` on `g`.
pub fn first_passage_time<R: Rng + ?Sized>(
    g: &Graph,
    origin: VertexId,
    target: VertexId,
    seeds: &SeedConfig,
    lambda: f64,
    rng: &mut R,
) -> Result<(f64, PType)> {
    let out = simulate(g, origin, seeds, lambda, &StopCondition::target(target), rng)?;
    match out.target_verdict {
        Some(v) => Ok((v.time, v.ptype)),
        None => Err(Error::Exhausted(format!("target {target} is unreachable from {origin}"))),
    }
}

/// Literal simulation with live exponential clocks on every directed edge
/// from an infected to an uninfected vertex. At each step the next ringing
/// clock is drawn from the superposition of all live clocks.
pub fn explicit_clock_simulate<R: Rng + ?Sized>(
    g: &Graph,
    origin: VertexId,
    seeds: &SeedConfig,
    lambda: f64,
    stop: &StopCondition,
    rng: &mut R,
) -> Result<SimOutcome> {
    validate_inputs(g, origin, seeds, lambda, stop)?;
    let n = g.vertex_count();
    let horizon = stop.time_horizon.unwrap_or(f64::INFINITY);
    let mut records: Vec<Option<InfectionRecord>> = vec![None; n];

    struct Clock {
        from: VertexId,
        to: VertexId,
        edge: EdgeId,
        rate: f64,
    }
    let mut clocks: Vec<Clock> = Vec::new();
    let open = |records: &[Option<InfectionRecord>], clocks: &mut Vec<Clock>, rec: &InfectionRecord| {
        let rate = rec.ptype.rate(lambda);
        for &(w, e) in g.incident(rec.vertex) {
            if records[w as usize].is_none() {
                clocks.push(Clock {
                    from: rec.vertex,
                    to: w,
                    edge: e,
                    rate,
                });
            }
        }
    };

    let root = InfectionRecord {
        vertex: origin,
        time: 0.0,
        ptype: PType::Fpp1,
        via_edge: None,
        parent: None,
    };
    records[origin as usize] = Some(root);
    let mut count = 1;
    let mut never = |_: &InfectionRecord| ControlFlow::Continue(());
    if let Step::Stop(reason) = after_infection(&root, count, stop, &mut never) {
        return Ok(finish(g, records, reason, stop, count));
    }
    open(&records, &mut clocks, &root);

    let mut now = 0.0f64;
    let reason = loop {
        if clocks.is_empty() {
            break StopReason::Exhausted;
        }
        let total: f64 = clocks.iter().map(|c| c.rate).sum();
        let wait: f64 = rng.sample(Exp1);
        now += wait / total;
        if now > horizon {
            break StopReason::Horizon;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut idx = clocks.len() - 1;
        for (i, c) in clocks.iter().enumerate() {
            if pick < c.rate {
                idx = i;
                break;
            }
            pick -= c.rate;
        }
        let c = &clocks[idx];
        let parent_type = records[c.from as usize].expect("clock source is infected").ptype;
        let ptype = if seeds.is_seed(c.to) {
            PType::FppLambda
        } else {
            parent_type
        };
        let rec = InfectionRecord {
            vertex: c.to,
            time: now,
            ptype,
            via_edge: Some(c.edge),
            parent: Some(c.from),
        };
        records[rec.vertex as usize] = Some(rec);
        count += 1;
        clocks.retain(|c| c.to != rec.vertex);
        if let Step::Stop(reason) = after_infection(&rec, count, stop, &mut never) {
            break reason;
        }
        open(&records, &mut clocks, &rec);
    };
    Ok(finish(g, records, reason, stop, count))
}
