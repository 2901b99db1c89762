//! Iterated rectified-mean chains: the recursion w_{n+1} = g(alpha * w_n),
//! the geometric chain of ATM option values, and the closed-form chain sum
//! with its criticality classification at sigma = sqrt(2 pi).

use crate::gaussian::{g_raw, SQRT_2PI};
use crate::{require_finite, Error, Regime, Result, CRITICAL_BAND};

/// Relative step tolerance that stops the iteration as converged.
pub const CONVERGENCE_RTOL: f64 = 1e-12;

/// Configuration for the w_{n+1} = g(alpha * w_n) recursion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecursionConfig {
    pub alpha: f64,
    pub w0: f64,
    pub max_steps: usize,
    pub divergence_cap: f64,
}

impl RecursionConfig {
    pub fn new(alpha: f64, w0: f64, max_steps: usize, divergence_cap: f64) -> Result<Self> {
        require_finite("alpha", alpha)?;
        require_finite("w0", w0)?;
        require_finite("divergence_cap", divergence_cap)?;
        if alpha < 0.0 {
            return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
        }
        if w0 <= 0.0 {
            return Err(Error::Domain(format!("w0 must be > 0, got {w0}")));
        }
        if max_steps == 0 {
            return Err(Error::Domain("max_steps must be >= 1".into()));
        }
        if divergence_cap <= w0 {
            return Err(Error::Domain(format!(
                "divergence_cap must exceed w0, got cap {divergence_cap} vs w0 {w0}"
            )));
        }
        Ok(RecursionConfig { alpha, w0, max_steps, divergence_cap })
    }
}

/// Why an iteration stopped. `step` is the index into `values` of the last
/// element produced.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum Termination {
    /// Ran the full step budget.
    Completed,
    /// A value exceeded the divergence cap.
    Diverged { step: usize },
    /// Successive values got closer than the relative tolerance.
    Converged { step: usize, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ChainTrajectory {
    pub values: Vec<f64>,
    pub terminated_by: Termination,
}

/// Run the recursion from w0, applying at most `max_steps` updates.
/// `values[0]` is w0 itself.
pub fn iterate_g(cfg: &RecursionConfig) -> ChainTrajectory {
    let mut values = Vec::with_capacity(cfg.max_steps.min(4096) + 1);
    values.push(cfg.w0);
    for _ in 0..cfg.max_steps {
        let w = *values.last().expect("nonempty");
        let next = g_raw(cfg.alpha * w);
        values.push(next);
        let step = values.len() - 1;
        if next > cfg.divergence_cap {
            return ChainTrajectory { values, terminated_by: Termination::Diverged { step } };
        }
        if (next - w).abs() < CONVERGENCE_RTOL * w.abs().max(1.0) {
            return ChainTrajectory {
                values,
                terminated_by: Termination::Converged { step, tolerance: CONVERGENCE_RTOL },
            };
        }
    }
    ChainTrajectory { values, terminated_by: Termination::Completed }
}

/// Positive fixed point of w = g(alpha * w) on (0, bracket_hi], if any.
/// Returns None when the curve never crosses the identity there (for
/// alpha >= 1/sqrt(2 pi) the map grows at least linearly with slope > 1, so
/// no positive fixed point exists).
pub fn find_fixed_point(alpha: f64, bracket_hi: f64) -> Result<Option<f64>> {
    require_finite("alpha", alpha)?;
    require_finite("bracket_hi", bracket_hi)?;
    if alpha < 0.0 {
        return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if bracket_hi <= 0.0 {
        return Err(Error::Domain(format!("bracket_hi must be > 0, got {bracket_hi}")));
    }
    if alpha == 0.0 {
        // g(0) = 1 identically, so the fixed point is exact.
        return Ok(if bracket_hi >= 1.0 { Some(1.0) } else { None });
    }

    let h = |w: f64| g_raw(alpha * w) - w;

    // h(0+) = 1 > 0; scan for the first sign change, then bisect.
    const SCAN: usize = 4096;
    let mut lo = 1e-12;
    let mut h_lo = h(lo);
    let mut hi = None;
    for i in 1..=SCAN {
        let w = bracket_hi * (i as f64) / (SCAN as f64);
        let hw = h(w);
        if h_lo > 0.0 && hw <= 0.0 {
            hi = Some(w);
            break;
        }
        lo = w;
        h_lo = hw;
    }
    let Some(mut hi) = hi else {
        return Ok(None);
    };

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at floating-point resolution
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    debug_assert!(h(root).abs() < 1e-10);
    Ok(Some(root))
}

/// Geometric chain of ATM values: mean option value mu1 and per-period
/// volatility sigma (as a fraction of the level, e.g. 0.2 for 20%).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AtmChainParams {
    pub mu1: f64,
    pub sigma_pct: f64,
}

impl AtmChainParams {
    pub fn new(mu1: f64, sigma_pct: f64) -> Result<Self> {
        require_finite("mu1", mu1)?;
        require_finite("sigma_pct", sigma_pct)?;
        if mu1 <= 0.0 {
            return Err(Error::Domain(format!("mu1 must be > 0, got {mu1}")));
        }
        if sigma_pct <= 0.0 {
            return Err(Error::Domain(format!("sigma_pct must be > 0, got {sigma_pct}")));
        }
        Ok(AtmChainParams { mu1, sigma_pct })
    }

    /// Per-step growth factor beta = sigma / sqrt(2 pi).
    pub fn beta(&self) -> f64 {
        self.sigma_pct / SQRT_2PI
    }
}

/// First n values of the geometric chain mu_k = mu1 * beta^k, k = 0..n-1.
pub fn atm_chain(params: &AtmChainParams, n: usize) -> Result<ChainTrajectory> {
    if n == 0 {
        return Err(Error::Domain("chain length must be >= 1".into()));
    }
    let beta = params.beta();
    let mut values = Vec::with_capacity(n);
    let mut v = params.mu1;
    values.push(v);
    for _ in 1..n {
        v *= beta;
        values.push(v);
    }
    Ok(ChainTrajectory { values, terminated_by: Termination::Completed })
}

/// Sum of the full geometric chain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum ChainSum {
    Finite(f64),
    Divergent,
}

/// Closed form mu1 * sqrt(2 pi) / (sqrt(2 pi) - sigma), finite iff
/// sigma < sqrt(2 pi).
pub fn chain_sum(params: &AtmChainParams) -> ChainSum {
    if params.beta() < 1.0 {
        ChainSum::Finite(params.mu1 * SQRT_2PI / (SQRT_2PI - params.sigma_pct))
    } else {
        ChainSum::Divergent
    }
}

/// Classify the unconditional chain by beta = sigma / sqrt(2 pi) against 1.
pub fn classify_unconditional(sigma_pct: f64) -> Result<Regime> {
    require_finite("sigma_pct", sigma_pct)?;
    if sigma_pct <= 0.0 {
        return Err(Error::Domain(format!("sigma_pct must be > 0, got {sigma_pct}")));
    }
    let beta = sigma_pct / SQRT_2PI;
    Ok(if (beta - 1.0).abs() <= CRITICAL_BAND {
        Regime::Critical
    } else if beta < 1.0 {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    })
}
