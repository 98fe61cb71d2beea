//! Closed-form and fixed-point calculators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for [`gw_extinction`].
pub const DEFAULT_TOL: f64 = 1e-12;

/// Galton–Watson process with offspring law `Binomial(d, 1 - mu)`: the
/// seed-free descendants of a vertex in the `d`-ary tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwSpec {
    pub d: u32,
    pub mu: f64,
}

impl GwSpec {
    pub fn new(d: u32, mu: f64) -> Result<Self> {
        let s = GwSpec { d, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("offspring bound d must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        Ok(())
    }

    /// Mean offspring `d (1 - mu)`.
    pub fn mean(&self) -> f64 {
        f64::from(self.d) * (1.0 - self.mu)
    }

    pub fn is_supercritical(&self) -> bool {
        self.mean() > 1.0
    }

    /// Probability generating function `(mu + (1 - mu) s)^d`.
    pub fn pgf(&self, s: f64) -> f64 {
        (self.mu + (1.0 - self.mu) * s).powi(self.d as i32)
    }

    fn pgf_derivative(&self, s: f64) -> f64 {
        let d = f64::from(self.d);
        d * (1.0 - self.mu) * (self.mu + (1.0 - self.mu) * s).powi(self.d as i32 - 1)
    }
}

/// Extinction probability: the smallest fixed point of the offspring pgf.
///
/// Iterates `q <- g(q)` from `q = 0` until successive iterates differ by less
/// than `tol / 10`; after 10⁴ iterations switches to Newton steps from the
/// current iterate, which lies below the root and so converges upward to it.
pub fn gw_extinction(spec: GwSpec, tol: f64) -> Result<f64> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if !spec.is_supercritical() {
        return Ok(1.0);
    }
    let mut q = 0.0f64;
    for _ in 0..10_000 {
        let next = spec.pgf(q);
        if (next - q).abs() < tol / 10.0 {
            return Ok(next);
        }
        q = next;
    }
    for _ in 0..200 {
        let h = spec.pgf(q) - q;
        let dh = spec.pgf_derivative(q) - 1.0;
        if dh == 0.0 {
            break;
        }
        let next = (q - h / dh).clamp(0.0, 1.0);
        if (next - q).abs() < tol / 10.0 {
            return Ok(next);
        }
        q = next;
    }
    Ok(q)
}

/// The two conditions on `(d, mu)`: supercriticality `d(1-mu) > 1` and
/// `d² (1-mu)² mu^{d-1} < 1`.
pub fn check_tech_cond(d: u32, mu: f64) -> Result<(bool, bool)> {
    GwSpec::new(d, mu)?;
    let m = f64::from(d) * (1.0 - mu);
    Ok((m > 1.0, m * m * mu.powi(d as i32 - 1) < 1.0))
}

/// `P(N_1 = 1) = d (1 - mu) mu^{d-1}`.
pub fn p_one(spec: GwSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.mean() * spec.mu.powi(spec.d as i32 - 1))
}

/// Smallest `C` with `P(Exp(gamma) < C) >= 1 - eps`, i.e. `-ln(eps) / gamma`.
pub fn edge_quantile_const(eps: f64, gamma: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("rate must be positive, got {gamma}")));
    }
    Ok(-eps.ln() / gamma)
}

/// `max{C(eps, 1), C(eps, lambda)}`: a time by which any single edge has
/// fired with probability at least `1 - eps`, whichever type holds it.
pub fn frak_c(eps: f64, lambda: f64) -> Result<f64> {
    Ok(edge_quantile_const(eps, 1.0)?.max(edge_quantile_const(eps, lambda)?))
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {x}")))
    }
}

/// Upper-tail bound for a sum `X` of independent exponentials with minimal
/// rate `a_star` and mean `mean`:
/// `P(X >= (1+delta) E X) <= exp(-a_star E X (delta - ln(1+delta))) / (1+delta)`.
pub fn janson_upper_tail(a_star: f64, mean: f64, delta: f64) -> Result<f64> {
    check_positive("a_star", a_star)?;
    check_positive("mean", mean)?;
    check_positive("delta", delta)?;
    let exponent = -a_star * mean * (delta - delta.ln_1p());
    Ok((exponent.exp() / (1.0 + delta)).min(1.0))
}

/// Lower-tail bound `P(X <= (1-delta) E X) <= exp(-a_star E X (-delta - ln(1-delta)))`
/// for `0 < delta < 1`.
pub fn janson_lower_tail(a_star: f64, mean: f64, delta: f64) -> Result<f64> {
    check_positive("a_star", a_star)?;
    check_positive("mean", mean)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let exponent = -a_star * mean * (-delta - (-delta).ln_1p());
    Ok(exponent.exp().min(1.0))
}

/// `(1 - eta_d - f_d)(1 - mu2)² - eps`, the bracket shared by the tile
/// degree formula and the epsilon cap.
fn bracket(mu2: f64, eta_d: f64, f_d: f64) -> f64 {
    (1.0 - eta_d - f_d) * (1.0 - mu2) * (1.0 - mu2)
}

/// Number of children per tile in the tile tree:
/// `ceil(2 D³ / (0.99 [(1 - eta_D - f_D)(1 - mu2)² - eps]))`.
pub fn phi_from_params(d: u32, mu2: f64, eta_d: f64, f_d: f64, eps: f64) -> Result<u64> {
    if d == 0 {
        return Err(Error::invalid("D must be positive"));
    }
    let denom = bracket(mu2, eta_d, f_d) - eps;
    if !(denom > 0.0) {
        return Err(Error::Infeasible(format!(
            "(1 - eta - f)(1 - mu2)^2 - eps = {denom} is not positive"
        )));
    }
    let d = f64::from(d);
    let phi = (2.0 * d * d * d / (0.99 * denom)).ceil();
    if phi > u64::MAX as f64 {
        return Err(Error::Infeasible("tile degree overflows".into()));
    }
    Ok(phi as u64)
}

/// `min{1/700, (1 - eta_D - f_D)(1 - mu2)²}`. May be nonpositive, which the
/// caller must treat as infeasible.
pub fn epsilon_max(mu2: f64, eta_d: f64, f_d: f64) -> f64 {
    (1.0f64 / 700.0).min(bracket(mu2, eta_d, f_d))
}

/// Critical retention probability `1/phi` of bond percolation on the
/// `phi`-ary tree.
pub fn tree_percolation_threshold(phi: u32) -> Result<f64> {
    if phi == 0 {
        return Err(Error::invalid("phi must be >= 1"));
    }
    Ok(1.0 / f64::from(phi))
}

/// Probability that a Galton–Watson tree with `Binomial(phi, p)` offspring
/// has at least one individual in generation `depth`.
pub fn gw_reach_probability(phi: u32, p: f64, depth: u32) -> Result<f64> {
    if phi == 0 {
        return Err(Error::invalid("phi must be >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p must lie in [0, 1], got {p}")));
    }
    let mut reach = 1.0f64;
    for _ in 0..depth {
        reach = 1.0 - (1.0 - p * reach).powi(phi as i32);
    }
    Ok(reach)
}
