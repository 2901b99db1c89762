//! Browser bindings for the static demo page: thin JSON adapters over the
//! analytics core. Every exported function returns a JSON string so the page
//! needs nothing beyond the wasm-bindgen loader. The simulation runs through
//! the sequential path; results are bitwise identical to the native tool at
//! the same seed.

use wasm_bindgen::prelude::*;

use vstar_core::atv::{bucketize, simulate_serial, SimConfig};
use vstar_core::chain::{chain_sum, classify_unconditional, AtmChainParams, ChainSum};
use vstar_core::tail::{
    fit_tail, rank_curve, theory_overlay, FitMethod, FitWindow, TailFit, DEFAULT_WEALTH_FLOOR,
};
use vstar_core::vstar::{
    classify_vstar, critical_k_th, critical_sigma, derive, four_constants, linspace,
    time_to_criticality, VStarParams,
};
use vstar_core::Error;

type CoreResult<T> = vstar_core::Result<T>;

/// Population cap for the in-browser simulation.
const MAX_BROWSER_POPULATION: u64 = 100_000;
/// Period cap for the in-browser simulation.
const MAX_BROWSER_PERIODS: u32 = 50;
/// Points kept on the downsampled rank curve.
const RANK_PLOT_POINTS: usize = 400;

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// The four reference constants.
#[wasm_bindgen]
pub fn constants_json() -> String {
    let c = four_constants();
    serde_json::json!({
        "sigma_star": c.sigma_star,
        "sigma_star_th": c.sigma_star_th,
        "z_star": c.z_star,
        "k_star_th": c.k_star_th,
    })
    .to_string()
}

/// Closed-form analytics at one (sigma, k_th) point.
#[wasm_bindgen]
pub fn analytics_json(sigma: f64, k_th: f64) -> Result<String, JsError> {
    analytics_impl(sigma, k_th).map_err(to_js)
}

fn analytics_impl(sigma: f64, k_th: f64) -> CoreResult<String> {
    let params = VStarParams::new(sigma, k_th)?;
    let d = derive(&params)?;
    let chain = AtmChainParams::new(1.0, sigma)?;
    let z = params.z();
    Ok(serde_json::json!({
        "sigma": sigma,
        "k_th": k_th,
        "z": z,
        "p": d.p,
        "beta_eff": d.beta_eff,
        "alpha": d.alpha,
        "regime": classify_vstar(&params)?.to_string(),
        "beta": chain.beta(),
        "regime_unconditional": classify_unconditional(sigma)?.to_string(),
        "chain_sum": match chain_sum(&chain) {
            ChainSum::Finite(total) => Some(total),
            ChainSum::Divergent => None,
        },
        "t_star_years": time_to_criticality(sigma, false)?,
        "t_star_th_years": time_to_criticality(sigma, true)?,
        "critical_sigma_at_z": critical_sigma(z)?,
        "critical_k_at_z": critical_k_th(z)?,
    })
    .to_string())
}

/// Effective growth factor and regime over a (sigma, k_th) grid, plus the
/// critical curve as a parametric polyline for drawing. Cell order is
/// row-major in k: index ki * n_sigma + si, matching the native grid tool.
#[wasm_bindgen]
pub fn phase_field_json(
    sigma_min: f64,
    sigma_max: f64,
    k_min: f64,
    k_max: f64,
    n_sigma: usize,
    n_k: usize,
) -> Result<String, JsError> {
    phase_field_impl(sigma_min, sigma_max, k_min, k_max, n_sigma, n_k).map_err(to_js)
}

fn phase_field_impl(
    sigma_min: f64,
    sigma_max: f64,
    k_min: f64,
    k_max: f64,
    n_sigma: usize,
    n_k: usize,
) -> CoreResult<String> {
    if !(2..=512).contains(&n_sigma) || !(2..=512).contains(&n_k) {
        return Err(Error::Domain(format!(
            "grid must be between 2x2 and 512x512, got {n_sigma}x{n_k}"
        )));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && k_min < k_max) {
        return Err(Error::Domain(
            "need 0 < sigma_min < sigma_max and k_min < k_max".into(),
        ));
    }
    let sigmas = linspace(sigma_min, sigma_max, n_sigma);
    let ks = linspace(k_min, k_max, n_k);
    let mut beta_eff = Vec::with_capacity(n_sigma * n_k);
    let mut regime = Vec::with_capacity(n_sigma * n_k);
    for &k in &ks {
        for &s in &sigmas {
            let params = VStarParams::new(s, k)?;
            let d = derive(&params)?;
            beta_eff.push(d.beta_eff);
            regime.push(classify_vstar(&params)?.to_string());
        }
    }
    // Parametric critical curve (sigma_c(z), k_c(z)); the page clips it to
    // the viewport. z covers sigma_c from ~18 down to well under any usable
    // sigma_min, and k_c(z) tops out just below 1.
    let mut curve = Vec::new();
    for z in linspace(-2.0, 40.0, 2_048) {
        curve.push((critical_sigma(z)?, critical_k_th(z)?));
    }
    Ok(serde_json::json!({
        "sigmas": sigmas,
        "ks": ks,
        "beta_eff": beta_eff,
        "regime": regime,
        "critical_curve": curve,
    })
    .to_string())
}

fn fit_json(fit: Option<TailFit>) -> serde_json::Value {
    match fit {
        Some(f) => serde_json::json!({
            "alpha_hat": f.alpha_hat,
            "stderr": f.stderr,
            "n_tail": f.n_tail,
        }),
        None => serde_json::Value::Null,
    }
}

/// Simulate a population in the browser and return its rank-wealth curve on
/// log axes, both tail fits, and the predicted power law when one exists.
#[wasm_bindgen]
pub fn rank_curve_json(
    sigma: f64,
    k_th: f64,
    n: u32,
    t: u32,
    seed: u32,
) -> Result<String, JsError> {
    rank_curve_impl(sigma, k_th, n, t, seed).map_err(to_js)
}

fn rank_curve_impl(sigma: f64, k_th: f64, n: u32, t: u32, seed: u32) -> CoreResult<String> {
    let n = (n as u64).clamp(1_000, MAX_BROWSER_POPULATION);
    let t = t.clamp(1, MAX_BROWSER_PERIODS);
    let params = VStarParams::new(sigma, k_th)?;
    let cfg = SimConfig {
        n,
        t,
        w0: 20_000.0,
        sigma_high: sigma,
        sigma_low: 0.1,
        k_th: Some(k_th),
        seed: seed as u64,
        chunk_size: 16_384,
    };
    let snapshot = simulate_serial(&cfg)?;
    let buckets = bucketize(&snapshot);
    let curve = rank_curve(&snapshot.final_wealth, DEFAULT_WEALTH_FLOOR)?;
    let m = curve.len();
    let points = curve.downsample_log(RANK_PLOT_POINTS);

    let window = FitWindow::default();
    let fits = serde_json::json!({
        "rank_regression": fit_json(fit_tail(&curve, FitMethod::RankRegression, window).ok()),
        "hill_mle": fit_json(fit_tail(&curve, FitMethod::HillMle, window).ok()),
    });

    // Rank-space theory line r(v) = r0 (v / v0)^(-alpha), anchored at the
    // deep edge of the default fit window.
    let theory = match vstar_core::vstar::power_law_exponent(&params)? {
        Some(alpha) => {
            let r0 = ((window.hi_q * m as f64).floor() as usize).clamp(1, m);
            let v0 = curve.wealth_at_rank(r0);
            let v_hi = curve.wealth_at_rank(1);
            if v0 < v_hi {
                let overlay: Vec<(f64, f64)> = theory_overlay(&params, v0, v_hi, 128)?
                    .into_iter()
                    .map(|(v, frac)| (v, frac * r0 as f64))
                    .collect();
                serde_json::json!({ "alpha": alpha, "overlay": overlay })
            } else {
                serde_json::json!({ "alpha": alpha, "overlay": serde_json::Value::Null })
            }
        }
        None => serde_json::Value::Null,
    };

    Ok(serde_json::json!({
        "n": n,
        "t": t,
        "m": m,
        "bankrupt_fraction": buckets.bankrupt as f64 / n as f64,
        "points": points,
        "fits": fits,
        "theory": theory,
    })
    .to_string())
}
