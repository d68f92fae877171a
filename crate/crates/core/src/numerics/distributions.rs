//! Upper tails and quantiles of the Fisher and χ² distributions.

use serde::{Deserialize, Serialize};

use super::special::{beta_inc_pair, gamma_q, ln_beta, ln_gamma};
use crate::error::{FlmError, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TailProb(f64);

impl TailProb {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(TailProb(value))
        } else {
            Err(FlmError::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<TailProb> for f64 {
    fn from(p: TailProb) -> f64 {
        p.0
    }
}

fn check_dof(k: usize, m: usize) -> Result<()> {
    if k == 0 || m == 0 {
        return Err(FlmError::Domain(format!(
            "degrees of freedom must be positive (got {k}, {m})"
        )));
    }
    Ok(())
}

/// `P(F(k, m) >= x)`.
pub fn fisher_upper_tail(x: f64, k: usize, m: usize) -> Result<TailProb> {
    check_dof(k, m)?;
    if x.is_nan() || x < 0.0 {
        return Err(FlmError::Domain(format!("Fisher tail evaluated at {x}")));
    }
    Ok(TailProb(fisher_tail_unchecked(x, k as f64, m as f64)))
}

#[inline]
pub(crate) fn fisher_tail_unchecked(x: f64, k: f64, m: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let kx = k * x;
    let denom = m + kx;
    // CDF = I_{kx/(m+kx)}(k/2, m/2); both arguments formed without cancellation.
    let (_, upper) = beta_inc_pair(0.5 * k, 0.5 * m, kx / denom, m / denom);
    upper
}

/// Density of `F(k, m)` at `x > 0`.
pub fn fisher_density(x: f64, k: usize, m: usize) -> f64 {
    if x <= 0.0 {
        return if k == 2 { 1.0 } else if k < 2 { f64::INFINITY } else { 0.0 };
    }
    let (k, m) = (k as f64, m as f64);
    let log = 0.5 * k * k.ln() + 0.5 * m * m.ln() + (0.5 * k - 1.0) * x.ln()
        - 0.5 * (k + m) * (m + k * x).ln()
        - ln_beta(0.5 * k, 0.5 * m);
    log.exp()
}

/// The `x` such that `P(F(k, m) >= x) = alpha`.
///
/// Bracketed bisection with Newton steps from the density; stops once the
/// bracket is narrower than about 1e-15 relative.
pub fn fisher_upper_quantile(alpha: f64, k: usize, m: usize) -> Result<f64> {
    check_dof(k, m)?;
    check_level(alpha)?;
    let (kf, mf) = (k as f64, m as f64);
    invert_upper_tail(alpha, |x| fisher_tail_unchecked(x, kf, mf), |x| fisher_density(x, k, m))
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FlmError::Domain(format!("quantile level {alpha} not in (0, 1)")))
    }
}

/// Solves `tail(x) = alpha` on `x > 0` for a decreasing `tail`: doubling
/// bracket, then Newton steps safeguarded by bisection.
fn invert_upper_tail(alpha: f64, tail: impl Fn(f64) -> f64, density: impl Fn(f64) -> f64) -> Result<f64> {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while tail(hi) > alpha {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(FlmError::Domain(format!("quantile at level {alpha} overflows")));
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = tail(x) - alpha;
        if f == 0.0 {
            return Ok(x);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        let dens = density(x);
        let newton = x + f / dens;
        x = if dens.is_finite() && dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// `P(χ²(k) >= x)`.
pub fn chi2_upper_tail(x: f64, k: usize) -> Result<TailProb> {
    if k == 0 {
        return Err(FlmError::Domain("χ² degrees of freedom must be positive".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(FlmError::Domain(format!("χ² tail evaluated at {x}")));
    }
    Ok(TailProb(gamma_q(0.5 * k as f64, 0.5 * x)))
}

/// Density of `χ²(k)` at `x > 0`.
pub fn chi2_density(x: f64, k: usize) -> f64 {
    if x <= 0.0 {
        return if k == 2 { 0.5 } else if k < 2 { f64::INFINITY } else { 0.0 };
    }
    let h = 0.5 * k as f64;
    ((h - 1.0) * x.ln() - 0.5 * x - h * std::f64::consts::LN_2 - ln_gamma(h)).exp()
}

/// The `x` such that `P(χ²(k) >= x) = alpha`.
pub fn chi2_upper_quantile(alpha: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(FlmError::Domain("χ² degrees of freedom must be positive".into()));
    }
    check_level(alpha)?;
    let h = 0.5 * k as f64;
    invert_upper_tail(alpha, |x| gamma_q(h, 0.5 * x), |x| chi2_density(x, k))
}
