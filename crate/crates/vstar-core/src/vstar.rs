//! Survivorship analytics: survival probability per period, the effective
//! growth factor conditional on surviving, the implied power-law tail
//! exponent, the critical curve in (sigma, k_th) space, and phase-diagram
//! grids over it.
//!
//! Conventions: sigma is per-period volatility as a fraction of wealth,
//! k_th is the survival threshold as a multiple of wealth, z = k_th / sigma.

use rayon::prelude::*;

use crate::gaussian::{mills_raw, sf_raw, SQRT_2PI, SQRT_PI_OVER_2};
use crate::{require_finite, Error, Regime, Result, CRITICAL_BAND};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Point in the (sigma, k_th) parameter plane. sigma > 0, k_th finite.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VStarParams {
    pub sigma: f64,
    pub k_th: f64,
}

impl VStarParams {
    pub fn new(sigma: f64, k_th: f64) -> Result<Self> {
        require_finite("sigma", sigma)?;
        require_finite("k_th", k_th)?;
        if sigma <= 0.0 {
            return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(VStarParams { sigma, k_th })
    }

    /// Standardized threshold z = k_th / sigma.
    pub fn z(&self) -> f64 {
        self.k_th / self.sigma
    }
}

/// Everything derivable from a parameter point in closed form.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct VStarDerived {
    pub z: f64,
    pub p: f64,
    pub beta_eff: f64,
    /// Tail exponent -ln(p)/ln(beta_eff); present only when beta_eff > 1
    /// and p < 1.
    pub alpha: Option<f64>,
}

/// Per-period survival probability p = 1 - CDF(z). Mathematically in (0, 1);
/// in floating point it saturates at 1 for z below about -8.3, and a hard
/// underflow to 0 (z above about 38.6) is reported as a range error.
pub fn survival_probability(params: &VStarParams) -> Result<f64> {
    let p = sf_raw(params.z());
    if p == 0.0 {
        return Err(Error::Range(format!(
            "survival probability underflows at z = {}",
            params.z()
        )));
    }
    Ok(p)
}

/// Conditional growth factor given survival: sigma * pdf(z) / p, computed as
/// sigma / mills_ratio(z) so the large-z cancellation never appears.
pub fn beta_eff(params: &VStarParams) -> Result<f64> {
    let be = params.sigma / mills_raw(params.z());
    if !(be > 0.0 && be.is_finite()) {
        return Err(Error::Range(format!(
            "effective growth factor left range at z = {}",
            params.z()
        )));
    }
    Ok(be)
}

/// Tail exponent of the stationary wealth distribution, -ln(p)/ln(beta_eff).
/// None when the conditional chain does not grow (beta_eff <= 1) or when
/// selection is vacuous (p saturated at 1).
pub fn power_law_exponent(params: &VStarParams) -> Result<Option<f64>> {
    let p = survival_probability(params)?;
    let be = beta_eff(params)?;
    Ok(if be > 1.0 && p < 1.0 { Some(-p.ln() / be.ln()) } else { None })
}

/// All derived quantities at once; identical values to the scalar ops.
pub fn derive(params: &VStarParams) -> Result<VStarDerived> {
    let p = survival_probability(params)?;
    let be = beta_eff(params)?;
    let alpha = if be > 1.0 && p < 1.0 { Some(-p.ln() / be.ln()) } else { None };
    Ok(VStarDerived { z: params.z(), p, beta_eff: be, alpha })
}

/// Classify a parameter point by beta_eff against 1.
pub fn classify_vstar(params: &VStarParams) -> Result<Regime> {
    let be = beta_eff(params)?;
    Ok(if (be - 1.0).abs() <= CRITICAL_BAND {
        Regime::Critical
    } else if be < 1.0 {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    })
}

/// Critical volatility at standardized threshold z: sigma_c(z) = M(z).
pub fn critical_sigma(z: f64) -> Result<f64> {
    require_finite("z", z)?;
    Ok(mills_raw(z))
}

/// Critical threshold at standardized threshold z: k_c(z) = z * M(z).
pub fn critical_k_th(z: f64) -> Result<f64> {
    require_finite("z", z)?;
    Ok(z * mills_raw(z))
}

/// Magnitude of the standardized threshold where the critical curve passes
/// through sigma = sqrt(2 pi). The defining equation 1 - CDF(z) = exp(-z^2/2)
/// (equivalently M(z) = sqrt(2 pi)) has its root on the negative axis, at
/// -0.72860...; the conventional reported value is the magnitude, and the
/// matching threshold constant is k = -z_star * sqrt(2 pi).
pub fn solve_z_star() -> f64 {
    let f = |z: f64| sf_raw(z) - (-0.5 * z * z).exp();
    // f(-3) > 0, f(0-) = -0.5 < 0: bisect on (-3, 0).
    let mut lo = -3.0;
    let mut hi = -1e-8;
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    debug_assert!(f(root).abs() < 1e-12);
    -root
}

/// The four quoted constants of the framework.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FourConstants {
    /// Critical unconditional volatility sqrt(2 pi).
    pub sigma_star: f64,
    /// Critical thresholded volatility sqrt(pi / 2); exactly sigma_star / 2.
    pub sigma_star_th: f64,
    /// Magnitude of the standardized threshold at the curve intersection.
    pub z_star: f64,
    /// Threshold multiple at the intersection, -z_star * sqrt(2 pi).
    pub k_star_th: f64,
}

pub fn four_constants() -> FourConstants {
    let z_star = solve_z_star();
    FourConstants {
        sigma_star: SQRT_2PI,
        sigma_star_th: SQRT_PI_OVER_2,
        z_star,
        k_star_th: -z_star * SQRT_2PI,
    }
}

/// Years until compounding at volatility sigma (fraction per year, > 0)
/// crosses the critical constant: 2 pi / sigma^2 unconditional, or a quarter
/// of that, (pi/2) / sigma^2, under the survival threshold.
pub fn time_to_criticality(sigma_pct: f64, thresholded: bool) -> Result<f64> {
    require_finite("sigma_pct", sigma_pct)?;
    if sigma_pct <= 0.0 {
        return Err(Error::Domain(format!("sigma_pct must be > 0, got {sigma_pct}")));
    }
    let sig2 = sigma_pct * sigma_pct;
    // T_th is computed as (2 pi / 4) / sigma^2 so T / T_th is exactly 4.
    Ok(if thresholded { (TWO_PI / 4.0) / sig2 } else { TWO_PI / sig2 })
}

/// Annual volatilities (as fractions) of the standard reference table.
pub const TTC_TABLE_VOLS: [f64; 11] =
    [0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 8.0];

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TtcRow {
    pub vol: f64,
    pub t_star_years: f64,
    pub t_star_th_years: f64,
    pub t_star_human: String,
    pub t_star_th_human: String,
}

/// The standard 11-row time-to-criticality table.
pub fn ttc_table() -> Vec<TtcRow> {
    TTC_TABLE_VOLS
        .iter()
        .map(|&vol| {
            let t = time_to_criticality(vol, false).expect("table vols are valid");
            let t_th = time_to_criticality(vol, true).expect("table vols are valid");
            TtcRow {
                vol,
                t_star_years: t,
                t_star_th_years: t_th,
                t_star_human: humanize_years(t),
                t_star_th_human: humanize_years(t_th),
            }
        })
        .collect()
}

/// Render a duration in years the way the reference table prints it:
/// whole years at 10 and above, one decimal of years down to 1, then months,
/// then weeks. The unit is singular when the rounded value is exactly 1.0.
pub fn humanize_years(years: f64) -> String {
    fn one_dp(v: f64, unit: &str) -> String {
        let s = format!("{v:.1}");
        if s == "1.0" {
            format!("{s} {unit}")
        } else {
            format!("{s} {unit}s")
        }
    }
    if years >= 10.0 {
        format!("{years:.0} years")
    } else if years >= 1.0 {
        one_dp(years, "year")
    } else {
        let months = years * 12.0;
        if months >= 1.0 {
            one_dp(months, "month")
        } else {
            one_dp(years * 52.0, "week")
        }
    }
}

/// Axis-aligned grid over the (sigma, k_th) plane, endpoints inclusive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseGridSpec {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub n_sigma: usize,
    pub n_k: usize,
}

impl PhaseGridSpec {
    pub fn new(
        sigma_min: f64,
        sigma_max: f64,
        k_min: f64,
        k_max: f64,
        n_sigma: usize,
        n_k: usize,
    ) -> Result<Self> {
        for (name, v) in [
            ("sigma_min", sigma_min),
            ("sigma_max", sigma_max),
            ("k_min", k_min),
            ("k_max", k_max),
        ] {
            require_finite(name, v)?;
        }
        if sigma_min <= 0.0 {
            return Err(Error::Domain(format!("sigma_min must be > 0, got {sigma_min}")));
        }
        if sigma_max <= sigma_min {
            return Err(Error::Domain("sigma_max must exceed sigma_min".into()));
        }
        if k_max <= k_min {
            return Err(Error::Domain("k_max must exceed k_min".into()));
        }
        if n_sigma < 2 || n_k < 2 {
            return Err(Error::Domain("grid resolution must be at least 2 per axis".into()));
        }
        Ok(PhaseGridSpec { sigma_min, sigma_max, k_min, k_max, n_sigma, n_k })
    }
}

/// One evaluated grid node.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhaseCell {
    pub sigma: f64,
    pub k_th: f64,
    pub p: f64,
    pub beta_eff: f64,
    pub alpha: Option<f64>,
    pub regime: Regime,
}

/// Evaluated grid. `cells` is row-major: the k axis is the slow index, so
/// `cells[ki * sigmas.len() + si]` is the node (sigmas[si], ks[ki]).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PhaseGrid {
    pub sigmas: Vec<f64>,
    pub ks: Vec<f64>,
    pub cells: Vec<PhaseCell>,
}

/// n evenly spaced values from lo to hi inclusive, n >= 2.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(n >= 2);
    let step = (hi - lo) / ((n - 1) as f64);
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * (i as f64)).collect();
    v[n - 1] = hi; // endpoint exact regardless of rounding
    v
}

pub fn phase_grid(spec: &PhaseGridSpec) -> Result<PhaseGrid> {
    let sigmas = linspace(spec.sigma_min, spec.sigma_max, spec.n_sigma);
    let ks = linspace(spec.k_min, spec.k_max, spec.n_k);
    phase_grid_on_axes(sigmas, ks)
}

/// Evaluate every (sigma, k) node. Cells are independent, so they are
/// evaluated in parallel; output order and values do not depend on the
/// degree of parallelism.
pub fn phase_grid_on_axes(sigmas: Vec<f64>, ks: Vec<f64>) -> Result<PhaseGrid> {
    if sigmas.is_empty() || ks.is_empty() {
        return Err(Error::Domain("grid axes must be nonempty".into()));
    }
    for &s in &sigmas {
        require_finite("sigma", s)?;
        if s <= 0.0 {
            return Err(Error::Domain(format!("grid sigma must be > 0, got {s}")));
        }
    }
    for &k in &ks {
        require_finite("k_th", k)?;
    }
    let n_sigma = sigmas.len();
    let cells: Result<Vec<PhaseCell>> = (0..n_sigma * ks.len())
        .into_par_iter()
        .map(|idx| {
            let sigma = sigmas[idx % n_sigma];
            let k_th = ks[idx / n_sigma];
            let params = VStarParams { sigma, k_th };
            let d = derive(&params)?;
            let regime = if (d.beta_eff - 1.0).abs() <= CRITICAL_BAND {
                Regime::Critical
            } else if d.beta_eff < 1.0 {
                Regime::Subcritical
            } else {
                Regime::Supercritical
            };
            Ok(PhaseCell { sigma, k_th, p: d.p, beta_eff: d.beta_eff, alpha: d.alpha, regime })
        })
        .collect();
    Ok(PhaseGrid { sigmas, ks, cells: cells? })
}

/// CSV with header `sigma,k_th,p,beta_eff,alpha,regime`, one cell per row in
/// grid order. `alpha` is empty where undefined.
pub fn write_phase_grid_csv<W: std::io::Write>(grid: &PhaseGrid, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "sigma,k_th,p,beta_eff,alpha,regime")?;
    for c in &grid.cells {
        match c.alpha {
            Some(a) => writeln!(out, "{},{},{},{},{},{}", c.sigma, c.k_th, c.p, c.beta_eff, a, c.regime)?,
            None => writeln!(out, "{},{},{},{},,{}", c.sigma, c.k_th, c.p, c.beta_eff, c.regime)?,
        }
    }
    Ok(())
}
