//! Branching random walk diagnostics.
//!
//! The seed-free cluster of the root in the `d`-ary tree, with `Exp(gamma)`
//! edge delays, is a branching random walk in continuous time: an
//! individual's children are its non-seed tree children (offspring law
//! `Binomial(d, 1 - mu)`), each born an independent `Exp(gamma)` time after
//! the parent.
//!
//! All conditioning on survival is by rejection and refers to survival to
//! the level under study, not survival forever.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{check_tech_cond, p_one, GwSpec};
use crate::error::{Error, Result};
use crate::rng::{trial_rng, TrialRng};
use crate::stats::{mean_var, proportion_sigma, wilson_interval};

/// Default cap on the number of individuals one trial may create.
pub const DEFAULT_INDIVIDUAL_CAP: u64 = 10_000_000;

/// Survival conditioning is rejected as unstable above this extinction rate.
pub const MAX_DISCARD_FRACTION: f64 = 0.99;

pub const CONDITIONING_CAVEAT: &str =
    "conditioned on survival to the studied level, not on survival forever";

/// One realisation, truncated at `max_gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrwSample {
    /// `N_0 = 1, N_1, ..., N_max_gen`.
    pub generation_sizes: Vec<u64>,
    /// Birth times per generation.
    pub birth_times: Vec<Vec<f64>>,
    /// Index of each individual's parent within the previous generation.
    pub parents: Vec<Vec<u32>>,
    /// Last generation with at least one individual.
    pub survived_to: u32,
}

impl BrwSample {
    /// `K_j`: generation-`j` individuals born by time `t`.
    pub fn born_by(&self, j: usize, t: f64) -> u64 {
        self.birth_times[j].iter().filter(|&&b| b <= t).count() as u64
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("gamma must be positive, got {gamma}")))
    }
}

/// Child slots are visited in order; each draws one uniform for the seed
/// coin and, if the child is alive, one `Exp(1)` for its delay.
fn grow_one(spec: GwSpec, gamma: f64, max_gen: u32, cap: u64, rng: &mut TrialRng) -> Result<BrwSample> {
    let mut sizes = vec![1u64];
    let mut births = vec![vec![0.0]];
    let mut parents = vec![Vec::new()];
    let mut total = 1u64;
    for _ in 0..max_gen {
        let prev = births.last().expect("generation 0 present");
        let mut next = Vec::new();
        let mut next_parents = Vec::new();
        for (i, &t) in prev.iter().enumerate() {
            for _ in 0..spec.d {
                if rng.random::<f64>() >= spec.mu {
                    let w: f64 = rng.sample(Exp1);
                    next.push(t + w / gamma);
                    next_parents.push(i as u32);
                }
            }
        }
        total += next.len() as u64;
        if total > cap {
            return Err(Error::ResourceLimit {
                what: "branching random walk individuals",
                requested: u128::from(total),
                cap: u128::from(cap),
            });
        }
        sizes.push(next.len() as u64);
        births.push(next);
        parents.push(next_parents);
    }
    let survived_to = sizes.iter().rposition(|&n| n > 0).unwrap_or(0) as u32;
    Ok(BrwSample {
        generation_sizes: sizes,
        birth_times: births,
        parents,
        survived_to,
    })
}

/// Independent samples; trial `i` uses the `i`-th per-trial stream.
pub fn sample_brw(
    spec: GwSpec,
    gamma: f64,
    max_gen: u32,
    trials: u64,
    master_seed: u64,
    individual_cap: u64,
) -> Result<Vec<BrwSample>> {
    spec.validate()?;
    check_gamma(gamma)?;
    if max_gen == 0 {
        return Err(Error::invalid("max_gen must be >= 1"));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| grow_one(spec, gamma, max_gen, individual_cap, &mut trial_rng(master_seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinPassageSamples {
    pub gamma: f64,
    pub level: u32,
    /// Minimum birth time in generation `level`, one per surviving trial.
    pub values: Vec<f64>,
    pub discarded_extinct: u64,
    pub caveat: String,
}

impl MinPassageSamples {
    pub fn kept(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn discard_fraction(&self) -> f64 {
        self.discarded_extinct as f64 / (self.discarded_extinct + self.kept()).max(1) as f64
    }
}

/// Best-first growth: individuals are expanded in birth-time order, so the
/// first one popped at generation `n` is the minimum. `None` if the cluster
/// dies out first.
fn min_passage_one(spec: GwSpec, gamma: f64, n: u32, cap: u64, rng: &mut TrialRng) -> Result<Option<f64>> {
    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((Key(0.0), 0u32)));
    let mut created = 1u64;
    while let Some(Reverse((Key(t), gen))) = heap.pop() {
        if gen == n {
            return Ok(Some(t));
        }
        for _ in 0..spec.d {
            if rng.random::<f64>() >= spec.mu {
                let w: f64 = rng.sample(Exp1);
                heap.push(Reverse((Key(t + w / gamma), gen + 1)));
                created += 1;
            }
        }
        if created > cap {
            return Err(Error::ResourceLimit {
                what: "branching random walk individuals",
                requested: u128::from(created),
                cap: u128::from(cap),
            });
        }
    }
    Ok(None)
}

/// Minimum passage time from the root to generation `n`, conditioned on
/// survival to `n`. `trials` counts attempts, kept and discarded.
pub fn min_passage(spec: GwSpec, gamma: f64, n: u32, trials: u64, master_seed: u64) -> Result<MinPassageSamples> {
    spec.validate()?;
    check_gamma(gamma)?;
    if n == 0 || trials == 0 {
        return Err(Error::invalid("level and trials must be >= 1"));
    }
    // A path (d = 1, mu = 0) never dies and is allowed although not supercritical.
    if !spec.is_supercritical() && !(spec.d == 1 && spec.mu == 0.0) {
        return Err(Error::invalid(format!(
            "offspring mean {} must exceed 1",
            spec.mean()
        )));
    }
    let raw: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| min_passage_one(spec, gamma, n, DEFAULT_INDIVIDUAL_CAP, &mut trial_rng(master_seed, i)))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = raw.iter().flatten().copied().collect();
    let out = MinPassageSamples {
        gamma,
        level: n,
        discarded_extinct: trials - values.len() as u64,
        values,
        caveat: CONDITIONING_CAVEAT.into(),
    };
    if out.discard_fraction() > MAX_DISCARD_FRACTION {
        return Err(Error::Unstable(format!(
            "{} of {} trials went extinct before level {n}",
            out.discarded_extinct, trials
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationFit {
    /// Prefactor `C` in `P(|M - mean| > alpha) ~ C exp(-delta alpha)`.
    pub c_hat: f64,
    pub delta_hat: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub points: usize,
}

/// Tail level at which the fitting window starts by default.
pub const DEFAULT_TAIL_START: f64 = 0.1;

/// Least-squares fit of `ln P(|M - mean| > alpha)` against `alpha`.
///
/// The window starts at the deviation exceeded with probability
/// `tail_start` and stops at the 99th percentile of the deviations or the
/// largest `alpha` with at least 30 exceedances, whichever is smaller; 50
/// equally spaced `alpha` values are used. Near the centre the two-sided
/// tail is not exponential even for exponential samples, hence the offset
/// start.
pub fn fit_concentration(values: &[f64], tail_start: f64) -> Result<ConcentrationFit> {
    if values.len() < 1000 {
        return Err(Error::invalid(format!("need at least 1000 samples, got {}", values.len())));
    }
    if !(tail_start > 0.0 && tail_start <= 1.0) {
        return Err(Error::invalid("tail_start must lie in (0, 1]"));
    }
    let (mean, _) = mean_var(values);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - mean).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let n = dev.len();
    let p99 = dev[(n as f64 * 0.99) as usize - 1];
    let thirty = dev[n - 30];
    let alpha_max = p99.min(thirty);
    let start_idx = ((n as f64 * (1.0 - tail_start)) as usize).min(n - 1);
    let alpha_min = if tail_start >= 1.0 { 0.0 } else { dev[start_idx] };
    if !(alpha_max > alpha_min) {
        return Err(Error::invalid("samples are degenerate; tail fit undefined"));
    }
    const POINTS: usize = 50;
    let (mut xs, mut ys) = (Vec::with_capacity(POINTS), Vec::with_capacity(POINTS));
    for i in 0..POINTS {
        let alpha = alpha_min + (alpha_max - alpha_min) * i as f64 / (POINTS - 1) as f64;
        let exceed = n - dev.partition_point(|&d| d <= alpha);
        if exceed >= 30 {
            xs.push(alpha);
            ys.push((exceed as f64 / n as f64).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::invalid("too few tail points for a fit"));
    }
    let (mx, _) = mean_var(&xs);
    let (my, _) = mean_var(&ys);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(ConcentrationFit {
        c_hat: (my - slope * mx).exp(),
        delta_hat: -slope,
        alpha_min,
        alpha_max,
        points: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationBirthRow {
    pub j: u32,
    /// Trials with `N_j >= 1`.
    pub surviving: u64,
    /// Among those, the fraction whose whole generation is born by `C1 j`.
    pub p_all_born: f64,
    pub p_sigma: f64,
    pub mean_k: f64,
    pub mean_n: f64,
    /// `1 - exp(-j C1 / 2) / C1`.
    pub claimed_bound: f64,
    /// Some sample had `K_j > N_j` (never expected).
    pub k_exceeds_n: bool,
}

/// Per-generation birth statistics at unit edge rate.
pub fn generation_birth_stats(
    spec: GwSpec,
    c1: f64,
    max_gen: u32,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<GenerationBirthRow>> {
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::invalid(format!("C1 must be positive, got {c1}")));
    }
    let samples = sample_brw(spec, 1.0, max_gen, trials, master_seed, DEFAULT_INDIVIDUAL_CAP)?;
    Ok((1..=max_gen)
        .map(|j| {
            let ju = j as usize;
            let t = c1 * f64::from(j);
            let (mut surviving, mut all, mut k_sum, mut n_sum, mut bad) = (0u64, 0u64, 0u64, 0u64, false);
            for s in &samples {
                let n = s.generation_sizes[ju];
                let k = s.born_by(ju, t);
                bad |= k > n;
                if n == 0 {
                    continue;
                }
                surviving += 1;
                all += u64::from(k == n);
                k_sum += k;
                n_sum += n;
            }
            let denom = surviving.max(1) as f64;
            let p = all as f64 / denom;
            GenerationBirthRow {
                j,
                surviving,
                p_all_born: p,
                p_sigma: proportion_sigma(p, surviving.max(1)),
                mean_k: k_sum as f64 / denom,
                mean_n: n_sum as f64 / denom,
                claimed_bound: 1.0 - (-f64::from(j) * c1 / 2.0).exp() / c1,
                k_exceeds_n: bad,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSizeRate {
    /// `(1/n) ln E[1/N_n | N_n >= 1]` for `n = 1..=n_max`.
    pub rates: Vec<f64>,
    /// Trials with `N_n >= 1`, per `n`.
    pub surviving: Vec<u64>,
    /// `max{ln p1, -ln(d(1-mu))}`.
    pub limit: f64,
    pub caveat: String,
}

/// Generation sizes only: `N_{j+1} ~ Binomial(d N_j, 1 - mu)`.
pub fn inverse_size_rate(spec: GwSpec, n_max: u32, trials: u64, master_seed: u64) -> Result<InverseSizeRate> {
    spec.validate()?;
    let (supercritical, tech) = check_tech_cond(spec.d, spec.mu)?;
    if !supercritical || !tech {
        return Err(Error::invalid(format!(
            "(d={}, mu={}) must be supercritical and satisfy d²(1-mu)²mu^(d-1) < 1",
            spec.d, spec.mu
        )));
    }
    if n_max == 0 || trials == 0 {
        return Err(Error::invalid("n_max and trials must be >= 1"));
    }
    let per_trial: Vec<Vec<u64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            let mut n = 1u64;
            (0..n_max)
                .map(|_| {
                    if n > 0 {
                        n = Binomial::new(n * u64::from(spec.d), 1.0 - spec.mu)
                            .expect("valid binomial")
                            .sample(&mut rng);
                    }
                    n
                })
                .collect()
        })
        .collect();
    let mut rates = Vec::with_capacity(n_max as usize);
    let mut surviving = Vec::with_capacity(n_max as usize);
    for j in 0..n_max as usize {
        let alive: Vec<f64> = per_trial
            .iter()
            .map(|v| v[j])
            .filter(|&n| n > 0)
            .map(|n| 1.0 / n as f64)
            .collect();
        let kept = alive.len() as u64;
        if (trials - kept) as f64 / trials as f64 > MAX_DISCARD_FRACTION {
            return Err(Error::Unstable(format!(
                "{} of {trials} trials extinct by generation {}",
                trials - kept,
                j + 1
            )));
        }
        let mean_inv = alive.iter().sum::<f64>() / kept as f64;
        rates.push(mean_inv.ln() / (j + 1) as f64);
        surviving.push(kept);
    }
    let p1 = p_one(spec)?;
    let limit = p1.ln().max(-spec.mean().ln());
    Ok(InverseSizeRate {
        rates,
        surviving,
        limit,
        caveat: CONDITIONING_CAVEAT.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub j: u32,
    pub surviving: u64,
    /// Fraction of surviving trials with `N_j` outside the window.
    pub violation: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Frequency of `N_j` leaving `[eps' m^{(1-eps1) j}, m^{(1+eps1) j} / eps']`,
/// `m = d(1-mu)`, among trials with `N_j >= 1`.
pub fn size_sandwich(
    spec: GwSpec,
    eps1: f64,
    eps_prime: f64,
    max_gen: u32,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<SandwichRow>> {
    spec.validate()?;
    if !(eps1 > 0.0 && eps1 < 1.0 && eps_prime > 0.0 && eps_prime <= 1.0) {
        return Err(Error::invalid("need 0 < eps1 < 1 and 0 < eps' <= 1"));
    }
    let m = spec.mean();
    let per_trial: Vec<Vec<u64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            let mut n = 1u64;
            (0..max_gen)
                .map(|_| {
                    if n > 0 {
                        n = Binomial::new(n * u64::from(spec.d), 1.0 - spec.mu)
                            .expect("valid binomial")
                            .sample(&mut rng);
                    }
                    n
                })
                .collect()
        })
        .collect();
    Ok((1..=max_gen)
        .map(|j| {
            let jf = f64::from(j);
            let lo = eps_prime * m.powf((1.0 - eps1) * jf);
            let hi = m.powf((1.0 + eps1) * jf) / eps_prime;
            let (mut kept, mut bad) = (0u64, 0u64);
            for v in &per_trial {
                let n = v[j as usize - 1];
                if n == 0 {
                    continue;
                }
                kept += 1;
                let x = n as f64;
                bad += u64::from(x < lo || x > hi);
            }
            let (ci_low, ci_high) = wilson_interval(bad, kept, 1.96);
            SandwichRow {
                j,
                surviving: kept,
                violation: bad as f64 / kept.max(1) as f64,
                ci_low,
                ci_high,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{gw_extinction, DEFAULT_TOL};
    use approx::assert_abs_diff_eq;

    fn spec(d: u32, mu: f64) -> GwSpec {
        GwSpec::new(d, mu).unwrap()
    }

    #[test]
    fn mu_one_dies_immediately() {
        let s = sample_brw(spec(3, 1.0), 1.0, 4, 50, 1, DEFAULT_INDIVIDUAL_CAP).unwrap();
        assert!(s.iter().all(|b| b.generation_sizes[1] == 0 && b.survived_to == 0));
    }

    #[test]
    fn mu_zero_binary_is_deterministic_in_size() {
        for b in sample_brw(spec(2, 0.0), 1.0, 6, 20, 2, DEFAULT_INDIVIDUAL_CAP).unwrap() {
            let expect: Vec<u64> = (0..=6).map(|j| 1u64 << j).collect();
            assert_eq!(b.generation_sizes, expect);
        }
    }

    #[test]
    fn sample_invariants() {
        for b in sample_brw(spec(3, 0.4), 2.0, 6, 200, 3, DEFAULT_INDIVIDUAL_CAP).unwrap() {
            assert_eq!(b.generation_sizes[0], 1);
            for j in 1..b.generation_sizes.len() {
                assert!(b.generation_sizes[j] <= 3 * b.generation_sizes[j - 1]);
                for (i, &t) in b.birth_times[j].iter().enumerate() {
                    assert!(t > b.birth_times[j - 1][b.parents[j][i] as usize]);
                }
            }
        }
    }

    #[test]
    fn individual_cap_is_enforced() {
        let err = sample_brw(spec(2, 0.0), 1.0, 20, 1, 1, 1000).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn mean_growth() {
        let s = sample_brw(spec(2, 0.25), 1.0, 5, 10_000, 4, DEFAULT_INDIVIDUAL_CAP).unwrap();
        let n5: Vec<f64> = s.iter().map(|b| b.generation_sizes[5] as f64).collect();
        let (mean, var) = mean_var(&n5);
        let target = 1.5f64.powi(5);
        assert!((mean - target).abs() < 3.0 * (var / 1e4).sqrt(), "{mean} vs {target}");
    }

    #[test]
    fn path_min_passage_is_gamma() {
        let m = min_passage(spec(1, 0.0), 2.0, 10, 4000, 5).unwrap();
        assert_eq!(m.discarded_extinct, 0);
        let (mean, _) = mean_var(&m.values);
        let sd = (10.0f64 / 4.0 / 4000.0).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * sd);
    }

    #[test]
    fn branching_min_passage_beats_single_path() {
        let m = min_passage(spec(2, 0.25), 1.0, 10, 2000, 6).unwrap();
        let (mean, _) = mean_var(&m.values);
        assert!(mean.is_finite() && mean <= 10.0);
        assert!(m.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn discard_fraction_tracks_extinction() {
        let s = spec(2, 0.25);
        let m = min_passage(s, 1.0, 12, 20_000, 7).unwrap();
        let q = gw_extinction(s, DEFAULT_TOL).unwrap();
        let sigma = proportion_sigma(q, 20_000);
        assert!((m.discard_fraction() - q).abs() < 3.0 * sigma, "{} vs {q}", m.discard_fraction());
    }

    #[test]
    fn subcritical_min_passage_rejected() {
        assert!(min_passage(spec(2, 0.6), 1.0, 5, 100, 1).is_err());
    }

    #[test]
    fn exp_tail_fit() {
        let mut rng = trial_rng(8, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(Exp1)).collect();
        let fit = fit_concentration(&xs, DEFAULT_TAIL_START).unwrap();
        assert!((fit.delta_hat - 1.0).abs() < 0.15, "{fit:?}");

        let doubled: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let fit2 = fit_concentration(&doubled, DEFAULT_TAIL_START).unwrap();
        assert_abs_diff_eq!(fit2.delta_hat, fit.delta_hat / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_tail_steepens_with_range() {
        let mut rng = trial_rng(9, 0);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        // Pushing the window outward steepens the fitted exponential.
        let near = fit_concentration(&xs, 0.5).unwrap();
        let far = fit_concentration(&xs, 0.05).unwrap();
        assert!(far.alpha_min > near.alpha_min);
        assert!(far.delta_hat > near.delta_hat + 0.3, "{near:?} {far:?}");
    }

    #[test]
    fn degenerate_fit_rejected() {
        assert!(fit_concentration(&[3.0; 2000], DEFAULT_TAIL_START).is_err());
        assert!(fit_concentration(&[1.0; 10], DEFAULT_TAIL_START).is_err());
    }

    #[test]
    fn birth_stats_trivial_cases() {
        let rows = generation_birth_stats(spec(1, 0.0), 1e6, 8, 200, 10).unwrap();
        assert!(rows.iter().all(|r| r.p_all_born == 1.0 && !r.k_exceeds_n));
        let rows = generation_birth_stats(spec(2, 0.25), 10.0, 10, 2000, 11).unwrap();
        assert!(rows.iter().all(|r| r.mean_k <= r.mean_n && !r.k_exceeds_n));
    }

    #[test]
    fn inverse_size_rate_full_binary() {
        let r = inverse_size_rate(spec(2, 0.0), 10, 50, 12).unwrap();
        for (j, &rate) in r.rates.iter().enumerate() {
            assert_abs_diff_eq!(rate, -(2f64.ln()), epsilon = 1e-12);
            assert_eq!(r.surviving[j], 50);
        }
        assert_abs_diff_eq!(r.limit, -(2f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn inverse_size_limit_value() {
        let r = inverse_size_rate(spec(3, 0.3), 2, 100, 13).unwrap();
        assert_abs_diff_eq!(r.limit, -(2.1f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(r.limit, -0.7419, epsilon = 1e-4);
    }

    #[test]
    fn inverse_size_rate_requires_conditions() {
        assert!(inverse_size_rate(spec(2, 0.6), 5, 10, 1).is_err());
    }
}
