//! The `(H, L)` parameter system for a tile and empirical passage-rate
//! constants.
//!
//! For rate constants `c_in^{(k)} < 1 < c_out^{(k)}` (`k` = 1 for paths, 2
//! for the binary lower tree, `D` for the upper tree), a time slack `C`,
//! rate `lambda` and tail length `R`, a tile needs integers `H` (even) and
//! `L` with
//!
//! ```text
//! (H+1)/cin2 + R/(λ cin1) + C                      < (L+1)/coutD     (red)
//! (H/2)/cout2 + (H/2+1)/(λ cout2) + R/(λ cout1)    > 2C + (L+1)/cinD (white)
//! ```
//!
//! The gap between the two bounds on `L + 1` grows linearly in `H` with slope
//! `cinD/(2 cout2) (1 + 1/λ) - coutD/cin2`, positive exactly when
//! `lambda < lambda_zero`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::trial_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub cin1: f64,
    pub cin2: f64,
    #[serde(rename = "cinD")]
    pub cin_d: f64,
    pub cout1: f64,
    pub cout2: f64,
    #[serde(rename = "coutD")]
    pub cout_d: f64,
}

impl RateConstants {
    /// All `c_in` equal to `cin` and all `c_out` equal to `cout`.
    pub fn uniform(cin: f64, cout: f64) -> Self {
        RateConstants {
            cin1: cin,
            cin2: cin,
            cin_d: cin,
            cout1: cout,
            cout2: cout,
            cout_d: cout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cin1", self.cin1), ("cin2", self.cin2), ("cinD", self.cin_d)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [("cout1", self.cout1), ("cout2", self.cout2), ("coutD", self.cout_d)] {
            if !(v > 1.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must exceed 1, got {v}")));
            }
        }
        Ok(())
    }

    /// Slope in `H` of the admissible `L`-window width.
    pub fn h_coefficient(&self, lambda: f64) -> f64 {
        self.cin_d / (2.0 * self.cout2) * (1.0 + 1.0 / lambda) - self.cout_d / self.cin2
    }
}

/// `cinD cin2 / (2 cout2 coutD - cinD cin2)`.
pub fn lambda_zero(c: &RateConstants) -> Result<f64> {
    c.validate()?;
    let num = c.cin_d * c.cin2;
    let den = 2.0 * c.cout2 * c.cout_d - num;
    if den <= 0.0 {
        return Err(Error::Infeasible(format!("lambda_zero denominator {den} is not positive")));
    }
    Ok(num / den)
}

pub const DEFAULT_H_CAP: u64 = 1 << 40;

fn default_h_cap() -> u64 {
    DEFAULT_H_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityProblem {
    pub lambda: f64,
    pub constants: RateConstants,
    /// Time slack `C`.
    pub frak_c: f64,
    #[serde(rename = "R")]
    pub r: u64,
    /// Largest `H` tried before giving up.
    #[serde(default = "default_h_cap")]
    pub h_cap: u64,
}

impl FeasibilityProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.frak_c >= 0.0 && self.frak_c.is_finite()) {
            return Err(Error::invalid("frak_c must be a nonnegative time"));
        }
        if self.r == 0 {
            return Err(Error::invalid("R must be >= 1"));
        }
        self.constants.validate()
    }

    /// Left side of the red inequality at `h`.
    pub fn red_lhs(&self, h: u64) -> f64 {
        let c = &self.constants;
        (h as f64 + 1.0) / c.cin2 + self.r as f64 / (self.lambda * c.cin1) + self.frak_c
    }

    pub fn red_rhs(&self, l: u64) -> f64 {
        (l as f64 + 1.0) / self.constants.cout_d
    }

    /// Left side of the white inequality at even `h`.
    pub fn white_lhs(&self, h: u64) -> f64 {
        let c = &self.constants;
        let half = (h / 2) as f64;
        half / c.cout2 + (half + 1.0) / (self.lambda * c.cout2) + self.r as f64 / (self.lambda * c.cout1)
    }

    pub fn white_rhs(&self, l: u64) -> f64 {
        2.0 * self.frak_c + (l as f64 + 1.0) / self.constants.cin_d
    }

    pub fn red_holds(&self, h: u64, l: u64) -> bool {
        self.red_lhs(h) < self.red_rhs(l)
    }

    pub fn white_holds(&self, h: u64, l: u64) -> bool {
        self.white_lhs(h) > self.white_rhs(l)
    }

    /// Integer window `[lo, hi]` of `L` satisfying both inequalities at `h`,
    /// found from the closed-form bounds and then settled by direct
    /// evaluation of each inequality.
    pub fn l_window(&self, h: u64) -> Option<(u64, u64)> {
        let c = &self.constants;
        let lo_real = c.cout_d * self.red_lhs(h) - 1.0;
        let mut lo = if lo_real < 0.0 { 0 } else { lo_real.floor() as u64 };
        lo = lo.saturating_sub(2);
        while !self.red_holds(h, lo) {
            lo = lo.checked_add(1)?;
        }
        while lo > 0 && self.red_holds(h, lo - 1) {
            lo -= 1;
        }

        let hi_real = c.cin_d * (self.white_lhs(h) - 2.0 * self.frak_c) - 1.0;
        if hi_real < 0.0 && !self.white_holds(h, 0) {
            return None;
        }
        let mut hi = if hi_real < 0.0 { 0 } else { hi_real.floor() as u64 + 2 };
        while hi > 0 && !self.white_holds(h, hi) {
            hi -= 1;
        }
        while self.white_holds(h, hi + 1) {
            hi += 1;
        }
        if !self.white_holds(h, hi) {
            return None;
        }
        let lo = lo.max(1);
        (lo <= hi).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilitySolution {
    #[serde(rename = "H")]
    pub h: u64,
    #[serde(rename = "L")]
    pub l: u64,
    pub feasible: bool,
    pub lhs1: f64,
    pub rhs1: f64,
    pub lhs2: f64,
    pub rhs2: f64,
    /// Full admissible window for `L` at the returned `H`.
    pub l_window: Option<(u64, u64)>,
    pub h_coefficient: f64,
    pub lambda_zero: f64,
}

impl FeasibilitySolution {
    fn audit(p: &FeasibilityProblem, h: u64, l: u64, feasible: bool, window: Option<(u64, u64)>) -> Self {
        FeasibilitySolution {
            h,
            l,
            feasible,
            lhs1: p.red_lhs(h),
            rhs1: p.red_rhs(l),
            lhs2: p.white_lhs(h),
            rhs2: p.white_rhs(l),
            l_window: window,
            h_coefficient: p.constants.h_coefficient(p.lambda),
            lambda_zero: lambda_zero(&p.constants).unwrap_or(f64::NAN),
        }
    }

    /// Re-checks both inequalities from the stored audit values.
    pub fn verifies(&self) -> bool {
        self.lhs1 < self.rhs1 && self.lhs2 > self.rhs2
    }
}

/// Smallest even `H` (and smallest `L` for it) satisfying both inequalities.
///
/// `H` starts at the smallest even integer making the combined sufficient
/// condition strict; if the `L`-window is still empty it is increased in
/// steps of 2 up to `h_cap`. When the slope in `H` is not positive the window
/// can only shrink as `H` grows, so only `H = 2` is tried.
pub fn solve_hl(p: &FeasibilityProblem) -> Result<FeasibilitySolution> {
    p.validate()?;
    let c = &p.constants;
    let coef = c.h_coefficient(p.lambda);
    let lam = p.lambda;
    let r = p.r as f64;
    let constant = c.cout_d / c.cin2
        + r / lam * (c.cout_d / c.cin1 - c.cin_d / c.cout1)
        + 2.0 * p.frak_c * (c.cout_d + c.cin_d)
        + 1.0;

    let start = if coef > 0.0 {
        let mut h = (constant / coef).floor().max(0.0) as u64;
        while !(constant < h as f64 * coef) {
            h += 1;
        }
        while h > 0 && constant < (h - 1) as f64 * coef {
            h -= 1;
        }
        h.max(2)
    } else {
        2
    };
    let mut h = start + start % 2;
    let last = if coef > 0.0 { p.h_cap } else { h };

    while h <= last {
        if let Some((lo, hi)) = p.l_window(h) {
            let sol = FeasibilitySolution::audit(p, h, lo, true, Some((lo, hi)));
            assert!(
                p.red_holds(h, lo) && p.white_holds(h, lo) && sol.verifies(),
                "solver returned (H={h}, L={lo}) that fails direct substitution"
            );
            return Ok(sol);
        }
        h += 2;
    }
    Ok(FeasibilitySolution::audit(p, h.min(last), 0, false, None))
}

/// Graph family for passage-rate estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PathFamily {
    /// A single half-line path (`d = 1`).
    Path,
    /// The `d`-ary tree; paths of length `k` from the root end in generation `k`.
    Tree { d: u32 },
}

impl PathFamily {
    pub fn degree(&self) -> u32 {
        match *self {
            PathFamily::Path => 1,
            PathFamily::Tree { d } => d,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimateConfig {
    pub family: PathFamily,
    pub gamma: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub trials: u64,
    /// Required decay rate of both tails, per unit `k`.
    pub target_exponent: f64,
    #[serde(default = "default_grid")]
    pub grid: f64,
    #[serde(default = "default_cout_max")]
    pub cout_max: f64,
    pub master_seed: u64,
}

fn default_grid() -> f64 {
    1e-3
}

fn default_cout_max() -> f64 {
    50.0
}

/// Empirical tail at one `k` for the selected constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub k: u32,
    pub bound: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Largest grid `c < 1` with `P(some path of length k takes >= k/(γc)) <= e^{-a k}` for all tested `k`.
    pub cin_hat: Option<f64>,
    /// Smallest grid `c > 1` with `P(some path of length k takes <= k/(γc)) <= e^{-a k}` for all tested `k`.
    pub cout_hat: Option<f64>,
    /// `min_k -ln(tail_k)/k` at the selected constants; infinite when every tail is zero.
    pub cin_exponent: Option<f64>,
    pub cout_exponent: Option<f64>,
    pub cin_tails: Vec<TailPoint>,
    pub cout_tails: Vec<TailPoint>,
    pub warnings: Vec<String>,
}

/// Per-trial min and max passage time over all root paths of length `k`,
/// for every `k` in `1..=k_max`. Edges are sampled generation by
/// generation, so the values at `k` do not depend on `k_max`.
fn path_extremes(family: PathFamily, gamma: f64, k_max: u32, master_seed: u64, trial: u64) -> Vec<(f64, f64)> {
    use rand::Rng;
    use rand_distr::Exp1;
    let d = family.degree() as usize;
    let mut rng = trial_rng(master_seed, trial);
    let mut out = Vec::with_capacity(k_max as usize);
    let mut level = vec![0.0f64];
    for _ in 0..k_max {
        let mut next = Vec::with_capacity(level.len() * d);
        for &t in &level {
            for _ in 0..d {
                let w: f64 = rng.sample(Exp1);
                next.push(t + w / gamma);
            }
        }
        let (lo, hi) = next
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        out.push((lo, hi));
        level = next;
    }
    out
}

/// Grid search for the largest admissible `c_in < 1` and smallest admissible
/// `c_out > 1` from simulated path extremes.
pub fn estimate_rate_constants(cfg: &RateEstimateConfig) -> Result<RateEstimate> {
    if cfg.trials < 1000 {
        return Err(Error::invalid(format!("need at least 1000 trials, got {}", cfg.trials)));
    }
    if cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(Error::invalid("k range must satisfy 1 <= k_min <= k_max"));
    }
    if !(cfg.gamma > 0.0) || !(cfg.target_exponent > 0.0) || !(cfg.grid > 0.0 && cfg.grid < 1.0) {
        return Err(Error::invalid("gamma, target_exponent and grid must be positive (grid < 1)"));
    }
    if cfg.family.degree() == 0 {
        return Err(Error::invalid("tree degree must be >= 1"));
    }
    let leaves = (cfg.family.degree() as f64).powi(cfg.k_max as i32);
    if leaves * cfg.trials as f64 > 4e9 {
        return Err(Error::ResourceLimit {
            what: "rate estimation",
            requested: (leaves * cfg.trials as f64) as u128,
            cap: 4_000_000_000,
        });
    }

    let per_trial: Vec<Vec<(f64, f64)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| path_extremes(cfg.family, cfg.gamma, cfg.k_max, cfg.master_seed, i))
        .collect();

    let ks: Vec<u32> = (cfg.k_min..=cfg.k_max).collect();
    let n = cfg.trials as f64;
    // Sorted per-k samples of the min and max.
    let mut mins: Vec<Vec<f64>> = Vec::with_capacity(ks.len());
    let mut maxs: Vec<Vec<f64>> = Vec::with_capacity(ks.len());
    for &k in &ks {
        let mut lo: Vec<f64> = per_trial.iter().map(|v| v[k as usize - 1].0).collect();
        let mut hi: Vec<f64> = per_trial.iter().map(|v| v[k as usize - 1].1).collect();
        lo.sort_by(f64::total_cmp);
        hi.sort_by(f64::total_cmp);
        mins.push(lo);
        maxs.push(hi);
    }
    let bound = |k: u32| (-cfg.target_exponent * f64::from(k)).exp();
    // P(max >= k/(γc)) and P(min <= k/(γc)).
    let upper_tail = |idx: usize, c: f64| {
        let thr = f64::from(ks[idx]) / (cfg.gamma * c);
        let below = maxs[idx].partition_point(|&x| x < thr);
        (maxs[idx].len() - below) as f64 / n
    };
    let lower_tail = |idx: usize, c: f64| {
        let thr = f64::from(ks[idx]) / (cfg.gamma * c);
        mins[idx].partition_point(|&x| x <= thr) as f64 / n
    };

    let steps_in = ((1.0 / cfg.grid).round() as u64).max(2);
    let cin_hat = (1..steps_in)
        .rev()
        .map(|i| i as f64 * cfg.grid)
        .find(|&c| (0..ks.len()).all(|j| upper_tail(j, c) <= bound(ks[j])));
    let steps_out = ((cfg.cout_max - 1.0) / cfg.grid).ceil() as u64;
    let cout_hat = (1..=steps_out)
        .map(|i| 1.0 + i as f64 * cfg.grid)
        .find(|&c| (0..ks.len()).all(|j| lower_tail(j, c) <= bound(ks[j])));

    let tails = |c: Option<f64>, tail: &dyn Fn(usize, f64) -> f64| -> Vec<TailPoint> {
        c.map(|c| {
            (0..ks.len())
                .map(|j| TailPoint {
                    k: ks[j],
                    bound: bound(ks[j]),
                    tail: tail(j, c),
                })
                .collect()
        })
        .unwrap_or_default()
    };
    let cin_tails = tails(cin_hat, &upper_tail);
    let cout_tails = tails(cout_hat, &lower_tail);
    let exponent = |pts: &[TailPoint]| {
        (!pts.is_empty()).then(|| {
            pts.iter()
                .map(|p| if p.tail > 0.0 { -p.tail.ln() / f64::from(p.k) } else { f64::INFINITY })
                .fold(f64::INFINITY, f64::min)
        })
    };

    let mut warnings = Vec::new();
    if bound(cfg.k_max) < 1.0 / n {
        warnings.push(format!(
            "estimate-unstable: e^(-{} * {}) = {:.3e} is below the resolution 1/trials = {:.3e}; tails at large k are only checked to be zero",
            cfg.target_exponent,
            cfg.k_max,
            bound(cfg.k_max),
            1.0 / n
        ));
    }
    if cin_hat.is_none() {
        warnings.push("no admissible c_in on the grid".into());
    }
    if cout_hat.is_none() {
        warnings.push(format!("no admissible c_out up to {}", cfg.cout_max));
    }
    Ok(RateEstimate {
        cin_hat,
        cout_hat,
        cin_exponent: exponent(&cin_tails),
        cout_exponent: exponent(&cout_tails),
        cin_tails,
        cout_tails,
        warnings,
    })
}
