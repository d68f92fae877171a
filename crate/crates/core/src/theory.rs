//! Separation rates over ellipsoids, the optimal projection dimension, the
//! rate with the iterated-log adaptation penalty, and a monotonicity
//! diagnostic for eigenvalue sequences.

use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};

/// Smoothness below which the polynomial regime is outside the known
/// upper-bound guarantee.
pub const POLYNOMIAL_GUARANTEE_THRESHOLD: f64 = 3.5;

/// The sequence `k ↦ a_k² λ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum DecayProfile {
    /// `a_k² λ_k = k^{-s}`.
    Polynomial { s: f64 },
    /// `a_k² λ_k = e^{-s k}`.
    Exponential { s: f64 },
    /// Explicit `a_k` and `λ_k`, indexed from `k = 1`.
    Tabulated { a: Vec<f64>, lambda: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Polynomial,
    Exponential,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidSpec {
    profile: DecayProfile,
    radius: f64,
}

impl EllipsoidSpec {
    pub fn new(profile: DecayProfile, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(FlmError::Domain(format!("radius must be positive, got {radius}")));
        }
        match &profile {
            DecayProfile::Polynomial { s } => {
                if !(*s > 0.5 && s.is_finite()) {
                    return Err(FlmError::Domain(format!("polynomial smoothness must exceed 1/2, got {s}")));
                }
            }
            DecayProfile::Exponential { s } => {
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(FlmError::Domain(format!("exponential rate must be positive, got {s}")));
                }
            }
            DecayProfile::Tabulated { a, lambda } => {
                if a.is_empty() || a.len() != lambda.len() {
                    return Err(FlmError::DimensionMismatch {
                        what: "tabulated eigenvalues",
                        expected: a.len(),
                        got: lambda.len(),
                    });
                }
                if a.iter().chain(lambda).any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(FlmError::Domain("tabulated sequences must be positive".into()));
                }
                if a.windows(2).any(|w| w[1] > w[0]) {
                    return Err(FlmError::Domain("a_k must be nonincreasing".into()));
                }
                let prod: Vec<f64> = a.iter().zip(lambda).map(|(a, l)| a * a * l).collect();
                if prod.windows(2).any(|w| w[1] > w[0]) {
                    return Err(FlmError::Domain("a_k² λ_k must be nonincreasing".into()));
                }
            }
        }
        Ok(EllipsoidSpec { profile, radius })
    }

    pub fn polynomial(s: f64, radius: f64) -> Result<Self> {
        Self::new(DecayProfile::Polynomial { s }, radius)
    }

    pub fn exponential(s: f64, radius: f64) -> Result<Self> {
        Self::new(DecayProfile::Exponential { s }, radius)
    }

    pub fn profile(&self) -> &DecayProfile {
        &self.profile
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn regime(&self) -> Regime {
        match self.profile {
            DecayProfile::Polynomial { .. } => Regime::Polynomial,
            DecayProfile::Exponential { .. } => Regime::Exponential,
            DecayProfile::Tabulated { .. } => Regime::Tabulated,
        }
    }

    /// `a_k² λ_k`, or `None` past the end of a table.
    pub fn decay(&self, k: usize) -> Option<f64> {
        let kf = k as f64;
        match &self.profile {
            DecayProfile::Polynomial { s } => Some(kf.powf(-s)),
            DecayProfile::Exponential { s } => Some((-s * kf).exp()),
            DecayProfile::Tabulated { a, lambda } => {
                let i = k.checked_sub(1)?;
                Some(a.get(i)? * a[i] * lambda.get(i)?)
            }
        }
    }

    /// True for polynomial smoothness at or below 7/2.
    pub fn outside_guarantee(&self) -> bool {
        matches!(self.profile, DecayProfile::Polynomial { s } if s <= POLYNOMIAL_GUARANTEE_THRESHOLD)
    }

    fn scan_limit(&self, requested: usize) -> usize {
        match &self.profile {
            DecayProfile::Tabulated { a, .. } => requested.min(a.len()),
            _ => requested,
        }
    }
}

/// Default scan bound `max(10⁴, 10 n)`.
pub fn default_scan_bound(n: usize) -> usize {
    10_000usize.max(n.saturating_mul(10))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub n: usize,
    pub regime: Regime,
    pub radius: f64,
    pub constant_c: f64,
    pub rho_sq: f64,
    pub argmax_k: usize,
    pub k_star: usize,
    pub rho_tilde_sq: f64,
    pub argmax_k_tilde: usize,
    pub k_max: usize,
    pub outside_guarantee: bool,
}

/// `max(1, log log max(k, 3))`.
pub fn iterated_log_penalty(k: usize) -> f64 {
    (k.max(3) as f64).ln().ln().max(1.0)
}

fn check_common(n: usize, c: f64) -> Result<()> {
    if n == 0 {
        return Err(FlmError::Domain("sample size must be positive".into()));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(FlmError::Domain(format!("constant C must be nonnegative, got {c}")));
    }
    Ok(())
}

/// `sup_{k ≤ k_max} min(C √(pen(k) k) / n, R² a_k² λ_k)` with its argmax.
fn scan_sup(
    spec: &EllipsoidSpec,
    n: usize,
    c: f64,
    k_max: usize,
    penalty: impl Fn(usize) -> f64,
) -> Result<(f64, usize)> {
    let limit = spec.scan_limit(k_max);
    if limit == 0 {
        return Err(FlmError::ScanBound("empty scan range".into()));
    }
    let r2 = spec.radius * spec.radius;
    let nf = n as f64;
    let tail_start = limit - limit / 10;
    let mut best = (f64::NEG_INFINITY, 1);
    let mut prev = f64::INFINITY;
    for k in 1..=limit {
        let decay = spec.decay(k).expect("within table");
        let value = (c * (penalty(k) * k as f64).sqrt() / nf).min(r2 * decay);
        if value > best.0 {
            best = (value, k);
        }
        if k > tail_start && value > prev {
            return Err(FlmError::ScanBound(format!(
                "scan bound {limit} too small: the lower envelope still increases at k = {k}"
            )));
        }
        prev = value;
    }
    Ok(best)
}

/// `ρ²_{a,R,n}` by direct scan, together with `k*_n` and the penalized rate.
pub fn separation_rate(spec: &EllipsoidSpec, n: usize, c: f64, k_max: Option<usize>) -> Result<RateReport> {
    check_common(n, c)?;
    let k_max = k_max.unwrap_or_else(|| default_scan_bound(n));
    let (rho_sq, argmax_k) = scan_sup(spec, n, c, k_max, |_| 1.0)?;
    let (rho_tilde_sq, argmax_k_tilde) = scan_sup(spec, n, c, k_max, iterated_log_penalty)?;
    let k_star = optimal_dimension_within(spec, n, k_max)?;
    Ok(RateReport {
        n,
        regime: spec.regime(),
        radius: spec.radius,
        constant_c: c,
        rho_sq,
        argmax_k,
        k_star,
        rho_tilde_sq,
        argmax_k_tilde,
        k_max: spec.scan_limit(k_max),
        outside_guarantee: spec.outside_guarantee(),
    })
}

/// `k*_n = inf{k ≥ 1 : R² a_k² λ_k ≤ √k / n}`.
pub fn optimal_dimension(spec: &EllipsoidSpec, n: usize) -> Result<usize> {
    check_common(n, 1.0)?;
    optimal_dimension_within(spec, n, default_scan_bound(n))
}

fn optimal_dimension_within(spec: &EllipsoidSpec, n: usize, k_max: usize) -> Result<usize> {
    let r2 = spec.radius * spec.radius;
    let nf = n as f64;
    (1..=spec.scan_limit(k_max))
        .find(|&k| r2 * spec.decay(k).expect("within table") <= (k as f64).sqrt() / nf)
        .ok_or_else(|| FlmError::ScanBound(format!("no crossing found up to k = {k_max}")))
}

/// `ρ̃²_{a,R,n}`: the separation rate with `√k` replaced by
/// `√(max(1, log log(k ∨ 3))) √k`.
pub fn adaptive_rate(spec: &EllipsoidSpec, n: usize, c: f64, k_max: Option<usize>) -> Result<f64> {
    check_common(n, c)?;
    let k_max = k_max.unwrap_or_else(|| default_scan_bound(n));
    Ok(scan_sup(spec, n, c, k_max, iterated_log_penalty)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub holds: bool,
    /// Smallest `j` with `u_j ≥ u_{j-1}`.
    pub first_violation: Option<usize>,
}

/// Checks that `j λ_j max(log^{1+γ} j, 1)` strictly decreases over the
/// supplied `λ_1, …, λ_K`.
pub fn check_assumption_b2(lambda: &[f64], gamma: f64) -> Result<MonotonicityCheck> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(FlmError::Domain(format!("γ must be positive, got {gamma}")));
    }
    if let Some(j) = lambda.iter().position(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(FlmError::Domain(format!("λ_{} is not positive", j + 1)));
    }
    let term = |j: usize| {
        let jf = j as f64;
        jf * lambda[j - 1] * jf.ln().max(0.0).powf(1.0 + gamma).max(1.0)
    };
    let first_violation = (2..=lambda.len()).find(|&j| term(j) >= term(j - 1));
    Ok(MonotonicityCheck {
        holds: first_violation.is_none(),
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_small_n() {
        let spec = EllipsoidSpec::polynomial(4.0, 1.0).unwrap();
        let r = separation_rate(&spec, 100, 1.0, None).unwrap();
        assert_eq!(r.argmax_k, 2);
        assert_abs_diff_eq!(r.rho_sq, 2f64.sqrt() / 100.0, epsilon = 1e-15);
        assert_eq!(r.k_star, 3);
        assert!(!r.outside_guarantee);
        assert!(r.rho_tilde_sq >= r.rho_sq);
    }

    #[test]
    fn k_star_one_when_signal_tiny() {
        let spec = EllipsoidSpec::polynomial(2.0, 0.05).unwrap();
        assert_eq!(optimal_dimension(&spec, 100).unwrap(), 1);
    }

    #[test]
    fn zero_constant_gives_zero() {
        let spec = EllipsoidSpec::exponential(1.0, 1.0).unwrap();
        assert_eq!(adaptive_rate(&spec, 1000, 0.0, None).unwrap(), 0.0);
    }

    #[test]
    fn short_table_is_reported() {
        let a = vec![1.0; 5];
        let lambda = vec![1.0, 0.9, 0.8, 0.7, 0.6];
        let spec = EllipsoidSpec::new(DecayProfile::Tabulated { a, lambda }, 1.0).unwrap();
        assert!(matches!(separation_rate(&spec, 10_000, 1.0, None), Err(FlmError::ScanBound(_))));
    }

    #[test]
    fn table_validation() {
        let bad = DecayProfile::Tabulated {
            a: vec![1.0, 2.0],
            lambda: vec![1.0, 0.1],
        };
        assert!(EllipsoidSpec::new(bad, 1.0).is_err());
        assert!(EllipsoidSpec::polynomial(0.5, 1.0).is_err());
        assert!(EllipsoidSpec::exponential(1.0, 0.0).is_err());
    }

    #[test]
    fn b2_examples() {
        let harmonic: Vec<f64> = (1..=100).map(|j| 1.0 / j as f64).collect();
        let r = check_assumption_b2(&harmonic, 0.5).unwrap();
        assert!(!r.holds);
        let geometric: Vec<f64> = (1..=500).map(|j| (-(j as f64)).exp()).collect();
        assert!(check_assumption_b2(&geometric, 1.0).unwrap().holds);
    }

    #[test]
    fn penalty_floor() {
        assert_eq!(iterated_log_penalty(1), 1.0);
        assert_eq!(iterated_log_penalty(15), 1.0);
        assert!(iterated_log_penalty(16) > 1.0);
    }
}
