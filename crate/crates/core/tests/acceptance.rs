//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! Criterion 11 runs the tile sweep at `FPPHE_ACCEPT_SWEEP_TRIALS` trials per
//! point (default 2000) and projects the runtime of the full 10^5-trial run.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use statrs::distribution::{ContinuousCDF, Gamma};

use fpphe::analytics::{self, GwSpec};
use fpphe::brw;
use fpphe::experiments::{self, Estimand, GraphSpec, TrialPlan, VertexRef};
use fpphe::feasibility::{self, FeasibilityProblem, RateConstants, DEFAULT_H_CAP};
use fpphe::graph::{Graph, TileParams, VertexId};
use fpphe::rng::trial_rng;
use fpphe::seeding::{fixed_seeds, SeedConfig};
use fpphe::sim::{self, PType, StopCondition};
use fpphe::stats::{ks_one_sample, ks_two_sample, two_proportion_z};

/// Pinned tolerances.
mod tol {
    pub const GW_EXACT: f64 = 1e-10;
    pub const SIGMAS: f64 = 3.0;
    pub const KS_ALPHA: f64 = 0.01;
    pub const TECH_PRODUCT: f64 = 1e-4;
    pub const BRW_RATE: f64 = 0.15;
    pub const COVERAGE: (f64, f64) = (0.94, 0.97);
    pub const SCIPY_GAMMA_REL: f64 = 1e-9;
}

const MASTER: u64 = 0x00F0_9E11_A11C_E5ED;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn gate(pass: bool, detail: String) -> Self {
        Verdict { pass, detail }
    }
}

fn within_runtime(v: Verdict, elapsed: Duration, budget: Duration) -> Verdict {
    let ok = elapsed <= budget;
    Verdict {
        pass: v.pass && ok,
        detail: format!("{}; runtime {:.2}s (budget {:.0}s)", v.detail, elapsed.as_secs_f64(), budget.as_secs_f64()),
    }
}

fn timed(budget_secs: u64, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f();
    within_runtime(v, start.elapsed(), Duration::from_secs(budget_secs))
}

fn c1_gw_extinction() -> Verdict {
    timed(10, || {
        let q_oracle = 1.0 / 9.0;
        let q = analytics::gw_extinction(GwSpec::new(2, 0.25).unwrap(), 1e-13).unwrap();
        let exact_ok = (q - q_oracle).abs() < tol::GW_EXACT;

        // From 64 individuals the extinction probability is (1/9)^64.
        let n = 100_000u64;
        let mut extinct = 0u64;
        for i in 0..n {
            let mut rng = trial_rng(MASTER, i);
            let mut size = 1u64;
            while size > 0 && size < 64 {
                size = Binomial::new(2 * size, 0.75).unwrap().sample(&mut rng);
            }
            extinct += u64::from(size == 0);
        }
        let freq = extinct as f64 / n as f64;
        let sigma = (q_oracle * (1.0 - q_oracle) / n as f64).sqrt();
        let mc_ok = (freq - q_oracle).abs() < tol::SIGMAS * sigma;
        Verdict::gate(
            exact_ok && mc_ok,
            format!("q={q:.15}, |q-1/9|={:.1e}; MC {freq:.5} over {n} trees, {:.2} sigma", (q - q_oracle).abs(), (freq - q_oracle).abs() / sigma),
        )
    })
}

fn c2_triangle_race() -> Verdict {
    timed(60, || {
        let n = 1_000_000u64;
        let mut parts = Vec::new();
        let mut pass = true;
        // Independently re-derived by two-dimensional quadrature of
        // P(X2 > X1 + Y) before freezing.
        for (lambda, oracle) in [(1.0, 0.75), (0.2, 0.916_666_666_666_666_6)] {
            let mut plan = TrialPlan::new(
                GraphSpec::Triangle,
                0.0,
                lambda,
                n,
                MASTER,
                Estimand::TypeIs { vertex: VertexRef::Name("B".into()), ptype: PType::Fpp1 },
            );
            plan.fixed_seeds = Some(vec![VertexRef::Name("a".into())]);
            let r = experiments::estimate_event(&plan, 1).unwrap();
            let sigma = (oracle * (1.0 - oracle) / n as f64).sqrt();
            let z = (r.p_hat - oracle).abs() / sigma;
            pass &= z < tol::SIGMAS;
            parts.push(format!("lambda={lambda}: p={:.5} vs {oracle:.5} ({z:.2} sigma)", r.p_hat));
        }
        Verdict::gate(pass, parts.join(", "))
    })
}

/// Connected multigraph on `n` vertices with parallel edges, plus a seed set
/// avoiding the origin 0 and the target `n - 1`.
fn random_multigraph(n: usize, rng: &mut ChaCha8Rng) -> (Graph, Vec<VertexId>) {
    let mut edges = Vec::new();
    for v in 1..n as VertexId {
        edges.push((rng.random_range(0..v), v));
    }
    for _ in 0..n {
        let a = rng.random_range(0..n as VertexId);
        let b = rng.random_range(0..n as VertexId);
        if a != b {
            edges.push((a, b));
        }
    }
    let seeds = (1..n as VertexId - 1).filter(|_| rng.random::<f64>() < 0.4).collect();
    (Graph::from_edges(n, &edges, &[], 0).unwrap(), seeds)
}

fn c3_dual_implementation() -> Verdict {
    let n_trials = 100_000u64;
    let lambda = 0.35;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
        let n = 4 + k as usize;
        let (g, seed_list) = random_multigraph(n, &mut rng);
        let seeds = fixed_seeds(&g, &seed_list).unwrap();
        let target = n as VertexId - 1;
        let stop = StopCondition::target(target);
        let run = |explicit: bool| {
            let mut fpp1 = 0u64;
            let mut times = Vec::with_capacity(n_trials as usize);
            for i in 0..n_trials {
                let mut r = trial_rng(MASTER + 2 * k + u64::from(explicit), i);
                let out = if explicit {
                    sim::explicit_clock_simulate(&g, 0, &seeds, lambda, &stop, &mut r)
                } else {
                    sim::simulate(&g, 0, &seeds, lambda, &stop, &mut r)
                }
                .unwrap();
                let v = out.target_verdict.expect("connected graph");
                fpp1 += u64::from(v.ptype == PType::Fpp1);
                times.push(v.time);
            }
            (fpp1, times)
        };
        let (s_heap, t_heap) = run(false);
        let (s_clock, t_clock) = run(true);
        let z = two_proportion_z(s_heap, n_trials, s_clock, n_trials);
        let ks = ks_two_sample(&t_heap, &t_clock);
        let ok = z.abs() < tol::SIGMAS && ks.passes(tol::KS_ALPHA);
        pass &= ok;
        parts.push(format!(
            "n={n} m={} seeds={}: z={z:.2} KS p={:.3}",
            g.edge_count(),
            seed_list.len(),
            ks.p_value
        ));
    }
    Verdict::gate(pass, parts.join("; "))
}

fn c4_gamma_law() -> Verdict {
    let k = 20u32;
    let n = 10_000u64;
    let g = GraphSpec::Path { length: k }.build().unwrap().graph;
    let end = g.require_landmark("end").unwrap();
    let seeds = SeedConfig::empty(g.vertex_count());
    let times: Vec<f64> = (0..n)
        .map(|i| sim::first_passage_time(&g, 0, end, &seeds, 1.0, &mut trial_rng(MASTER, i)).unwrap().0)
        .collect();
    let mean = times.iter().sum::<f64>() / n as f64;
    let band = 3.0 * f64::from(k).sqrt() / (n as f64).sqrt();
    let gamma = Gamma::new(f64::from(k), 1.0).unwrap();
    let ks = ks_one_sample(&times, |x| gamma.cdf(x));
    Verdict::gate(
        (mean - 20.0).abs() < band && ks.passes(tol::KS_ALPHA),
        format!("mean {mean:.4} (band 20 +- {band:.4}), KS D={:.4} p={:.3}", ks.statistic, ks.p_value),
    )
}

fn c5_feasibility() -> Verdict {
    timed(1, || {
        let c = RateConstants::uniform(0.5, 2.0);
        let l0 = feasibility::lambda_zero(&c).unwrap();
        let l0_ok = l0 == 0.25 / 7.75;

        let p = FeasibilityProblem { lambda: 0.01, constants: c, frak_c: 10.0, r: 100, h_cap: DEFAULT_H_CAP };
        let s = feasibility::solve_hl(&p).unwrap();
        // Direct substitution, written out independently of the library.
        let (h, l) = (s.h as f64, s.l as f64);
        let (lam, cc, r) = (0.01, 10.0, 100.0);
        let red = (h + 1.0) / 0.5 + r / (lam * 0.5) + cc < (l + 1.0) / 2.0;
        let half = (s.h / 2) as f64;
        let white = half / 2.0 + (half + 1.0) / (lam * 2.0) + r / (lam * 2.0) > 2.0 * cc + (l + 1.0) / 0.5;
        let ok = l0_ok && s.feasible && s.verifies() && red && white && s.h.is_multiple_of(2);
        Verdict::gate(
            ok,
            format!("lambda_zero={l0} (exact: {l0_ok}); H={} L={} feasible={} red={red} white={white}", s.h, s.l, s.feasible),
        )
    })
}

fn c6_tech_condition() -> Verdict {
    let a = analytics::check_tech_cond(10, 0.6).unwrap();
    let product = 100.0 * 0.4f64.powi(2) * 0.6f64.powi(9);
    let b = analytics::check_tech_cond(2, 0.6).unwrap();
    let ok = a == (true, true) && (product - 0.1612).abs() < tol::TECH_PRODUCT && (16.0 * 0.6f64.powi(9) - product).abs() < 1e-15 && !b.0;
    Verdict::gate(ok, format!("(10, 0.6) -> {a:?} with product {product:.6}; (2, 0.6) -> {b:?}"))
}

fn c7_janson() -> Verdict {
    // Exact Gamma(mean, 1) tails, frozen from an independent implementation:
    // (mean, delta, P(X >= (1+delta) mean), P(X <= (1-delta) mean)).
    const FROZEN: [(f64, f64, f64, f64); 9] = [
        (5.0, 0.25, 0.252_985_323_309_298_3, 0.322_452_363_895_456_56),
        (5.0, 0.5, 0.132_061_856_287_720_6, 0.108_821_981_085_848_77),
        (5.0, 1.0, 0.029_252_688_076_961_124, 0.0),
        (10.0, 0.25, 0.201_431_104_945_535_9, 0.223_592_386_980_285_33),
        (10.0, 0.5, 0.069_853_660_699_409_86, 0.031_828_057_306_204_81),
        (10.0, 1.0, 0.004_995_412_308_307_578_5, 0.0),
        (20.0, 0.25, 0.133_574_834_085_650_4, 0.124_781_215_032_524_96),
        (20.0, 0.5, 0.021_873_468_441_390_91, 0.003_454_341_975_856_833_4),
        (20.0, 1.0, 0.000_176_302_897_738_567_7, 0.0),
    ];
    let mut pass = true;
    let mut worst_up = f64::INFINITY;
    let mut worst_low = f64::INFINITY;
    for (mean, delta, up_frozen, low_frozen) in FROZEN {
        let g = Gamma::new(mean, 1.0).unwrap();
        let up = g.sf((1.0 + delta) * mean);
        let low = g.cdf((1.0 - delta) * mean);
        pass &= (up - up_frozen).abs() <= tol::SCIPY_GAMMA_REL * up_frozen;
        pass &= (low - low_frozen).abs() <= tol::SCIPY_GAMMA_REL * low_frozen.max(1e-300);

        let bu = analytics::janson_upper_tail(1.0, mean, delta).unwrap();
        pass &= bu > up;
        worst_up = worst_up.min(bu / up);
        // The lower-tail bound is only defined for delta < 1.
        if delta < 1.0 {
            let bl = analytics::janson_lower_tail(1.0, mean, delta).unwrap();
            pass &= bl > low;
            worst_low = worst_low.min(bl / low);
        }
    }
    Verdict::gate(
        pass,
        format!("9 upper cells (min bound/exact {worst_up:.3}), 6 lower cells with delta<1 (min {worst_low:.3})"),
    )
}

fn c8_brw_rate() -> Verdict {
    timed(300, || {
        let r = brw::inverse_size_rate(GwSpec::new(3, 0.3).unwrap(), 20, 12_000, MASTER).unwrap();
        let oracle = -(2.1f64.ln());
        let rate = r.rates[19];
        let surv = r.surviving[19];
        Verdict::gate(
            surv >= 10_000 && (rate - oracle).abs() < tol::BRW_RATE && (r.limit - oracle).abs() < 1e-12,
            format!("rate(n=20)={rate:.4} vs {oracle:.4}, {surv} surviving trials"),
        )
    })
}

fn sweep_bytes(workers: u32) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_fpphe"))
        .args(["sweep", "--tile", "D=4,L=6,H=8,R=20", "--lambda", "0.05", "--mu", "0,0.1,0.2", "--trials", "200"])
        .args(["--master-seed", "42", "--workers", &workers.to_string()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn c9_determinism() -> Verdict {
    let one = sweep_bytes(1);
    let eight = sweep_bytes(8);
    Verdict::gate(one == eight && !one.is_empty(), format!("{} bytes of JSONL, identical: {}", one.len(), one == eight))
}

fn c10_ci_machinery() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [0.05, 0.5] {
        let r = experiments::ci_selftest(1000, 1000, p, 1.96, MASTER).unwrap();
        pass &= (tol::COVERAGE.0..=tol::COVERAGE.1).contains(&r.coverage);
        parts.push(format!("p={p}: coverage {:.3}", r.coverage));
    }
    Verdict::gate(pass, parts.join(", "))
}

fn c11_sweep_demo() -> Verdict {
    let trials: u64 = std::env::var("FPPHE_ACCEPT_SWEEP_TRIALS").ok().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let tile = TileParams::new(4, 6, 8, 20).unwrap();
    let mus: Vec<f64> = (0..9).map(|i| f64::from(i) * 0.05).collect();
    let start = Instant::now();
    let control = experiments::tile_sweep(&tile, 1.0, &mus, trials, MASTER, 1).unwrap();
    let small = experiments::tile_sweep(&tile, 0.05, &mus, trials, MASTER, 1).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let projected_min = elapsed * 100_000.0 / trials as f64 / 60.0;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());

    let consistent = [&control, &small].iter().all(|r| r.rows.iter().all(|row| row.side_inconsistencies == 0));
    let emitted = [&control, &small].iter().all(|r| {
        r.rows.len() == mus.len()
            && r.rows.iter().all(|row| row.winner_upper + row.winner_lower <= trials)
            && r.to_jsonl().lines().count() == mus.len() + 1
    });
    let pass = control.monotonicity.nonincreasing_within_noise && consistent && emitted;
    let split = |r: &experiments::SweepReport| {
        r.rows
            .iter()
            .map(|row| format!("{:.3}", row.result.p_hat))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let seeded_levels: usize = small.rows.iter().map(|r| r.seed_level_histogram.len()).max().unwrap_or(0);
    Verdict::gate(
        pass,
        format!(
            "{trials} trials/point; lambda=1 p: [{}] monotone={}; lambda=0.05 p: [{}] witnesses={:?} (descriptive), \
             up to {seeded_levels} seed-level bins; {elapsed:.1}s here, projected {projected_min:.1} min at 1e5 \
             trials/point on {cores} core(s), budget 30 min (non-gating)",
            split(&control),
            control.monotonicity.nonincreasing_within_noise,
            split(&small),
            small.monotonicity.non_monotone_witnesses,
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("GW extinction", c1_gw_extinction),
        ("simulator race oracle", c2_triangle_race),
        ("dual-implementation equivalence", c3_dual_implementation),
        ("Gamma law on a path", c4_gamma_law),
        ("feasibility system", c5_feasibility),
        ("technical condition", c6_tech_condition),
        ("Janson bounds dominate exact tails", c7_janson),
        ("BRW inverse-size rate", c8_brw_rate),
        ("determinism across workers", c9_determinism),
        ("Wilson CI coverage", c10_ci_machinery),
        ("tile sweep demonstration", c11_sweep_demo),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2}. {name}: {}", i + 1, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
