//! Tail-index estimation on final wealth distributions: rank-wealth curves,
//! log-rank regression and the Hill MLE over quantile windows, a stability
//! ladder with a plateau flag, and theory overlays from the analytic
//! exponent.

use crate::vstar::{power_law_exponent, VStarParams};
use crate::{require_finite, Error, Result};

/// Observations below this wealth are excluded from curves by default.
pub const DEFAULT_WEALTH_FLOOR: f64 = 1.0;

/// Minimum observations an estimator window must contain.
pub const MIN_TAIL_POINTS: usize = 50;

/// Wealth values above a floor, sorted descending; rank r (1-based) pairs
/// with the r-th largest value.
#[derive(Debug, Clone, PartialEq)]
pub struct RankWealthCurve {
    wealth_desc: Vec<f64>,
}

impl RankWealthCurve {
    pub fn len(&self) -> usize {
        self.wealth_desc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealth_desc.is_empty()
    }

    /// Wealth at 1-based rank r.
    pub fn wealth_at_rank(&self, rank: usize) -> f64 {
        self.wealth_desc[rank - 1]
    }

    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.wealth_desc.iter().enumerate().map(|(i, &w)| (i as u64 + 1, w))
    }

    /// At most `max_points` points at roughly log-spaced ranks (rank 1 and
    /// the last rank always included). Used for exports so a desk-scale curve
    /// stays plottable.
    pub fn downsample_log(&self, max_points: usize) -> Vec<(u64, f64)> {
        let m = self.len();
        if m <= max_points {
            return self.points().collect();
        }
        let mut out = Vec::with_capacity(max_points);
        let log_m = (m as f64).ln();
        let mut last = 0usize;
        for i in 0..max_points {
            let frac = i as f64 / (max_points - 1) as f64;
            let mut rank = (log_m * frac).exp().round() as usize;
            rank = rank.clamp(1, m);
            if rank <= last {
                rank = last + 1;
                if rank > m {
                    break;
                }
            }
            out.push((rank as u64, self.wealth_desc[rank - 1]));
            last = rank;
        }
        if out.last().map(|&(r, _)| r as usize) != Some(m) {
            out.push((m as u64, self.wealth_desc[m - 1]));
        }
        out
    }
}

/// Build the rank-wealth curve from raw final wealth.
pub fn rank_curve(wealth: &[f64], floor: f64) -> Result<RankWealthCurve> {
    require_finite("floor", floor)?;
    if floor < 0.0 {
        return Err(Error::Domain(format!("floor must be >= 0, got {floor}")));
    }
    let mut kept: Vec<f64> = wealth.iter().copied().filter(|w| w.is_finite() && *w > floor).collect();
    if kept.is_empty() {
        return Err(Error::Estimation(format!(
            "no observations above the floor of {floor}"
        )));
    }
    kept.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite after filter"));
    Ok(RankWealthCurve { wealth_desc: kept })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    RankRegression,
    HillMle,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMethod::RankRegression => "rank_regression",
            FitMethod::HillMle => "hill_mle",
        })
    }
}

/// Quantile window into the sorted curve: ranks between lo_q * len and
/// hi_q * len. The Hill estimator, being a top-k statistic, uses the top
/// hi_q fraction and ignores lo_q.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitWindow {
    pub lo_q: f64,
    pub hi_q: f64,
}

impl FitWindow {
    pub fn new(lo_q: f64, hi_q: f64) -> Result<Self> {
        require_finite("lo_q", lo_q)?;
        require_finite("hi_q", hi_q)?;
        if !(0.0..1.0).contains(&lo_q) || !(0.0..=1.0).contains(&hi_q) || lo_q >= hi_q {
            return Err(Error::Domain(format!(
                "window must satisfy 0 <= lo_q < hi_q <= 1, got ({lo_q}, {hi_q})"
            )));
        }
        Ok(FitWindow { lo_q, hi_q })
    }
}

impl Default for FitWindow {
    /// Top 0.1% to 2% of above-floor observations.
    fn default() -> Self {
        FitWindow { lo_q: 0.001, hi_q: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TailFit {
    pub alpha_hat: f64,
    pub method: FitMethod,
    pub window: FitWindow,
    /// Asymptotic standard error: alpha_hat * sqrt(2 / n_tail) for the rank
    /// regression, alpha_hat / sqrt(n_tail) for Hill.
    pub stderr: f64,
    pub n_tail: usize,
}

/// Fit the tail exponent on a window of the curve.
pub fn fit_tail(curve: &RankWealthCurve, method: FitMethod, window: FitWindow) -> Result<TailFit> {
    let m = curve.len();
    match method {
        FitMethod::RankRegression => {
            let r_lo = ((window.lo_q * m as f64).ceil() as usize).max(1);
            let r_hi = ((window.hi_q * m as f64).floor() as usize).min(m);
            if r_hi < r_lo || r_hi - r_lo + 1 < MIN_TAIL_POINTS {
                return Err(Error::Estimation(format!(
                    "window ({}, {}) holds {} points, need at least {MIN_TAIL_POINTS}",
                    window.lo_q,
                    window.hi_q,
                    r_hi.saturating_sub(r_lo - 1)
                )));
            }
            let n_tail = r_hi - r_lo + 1;
            // Regress ln(rank) on ln(wealth); slope is -alpha. Centered sums
            // keep the slope invariant under wealth rescaling.
            let mut sx = 0.0;
            let mut sy = 0.0;
            for rank in r_lo..=r_hi {
                let w = curve.wealth_at_rank(rank);
                if w <= 0.0 {
                    return Err(Error::Estimation("nonpositive wealth in fit window".into()));
                }
                sx += w.ln();
                sy += (rank as f64).ln();
            }
            let mx = sx / n_tail as f64;
            let my = sy / n_tail as f64;
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            for rank in r_lo..=r_hi {
                let dx = curve.wealth_at_rank(rank).ln() - mx;
                let dy = (rank as f64).ln() - my;
                sxx += dx * dx;
                sxy += dx * dy;
            }
            // Sorted curve: the window is constant iff its ends are equal.
            // sxx can still round to a nonzero subnormal there, so test the
            // ends rather than the accumulated spread.
            if sxx == 0.0 || curve.wealth_at_rank(r_lo) == curve.wealth_at_rank(r_hi) {
                return Err(Error::Estimation("degenerate fit window (constant wealth)".into()));
            }
            let alpha_hat = -(sxy / sxx);
            if !(alpha_hat > 0.0 && alpha_hat.is_finite()) {
                return Err(Error::Estimation(format!(
                    "window does not look like a decaying tail (alpha_hat = {alpha_hat})"
                )));
            }
            let stderr = alpha_hat * (2.0 / n_tail as f64).sqrt();
            Ok(TailFit { alpha_hat, method, window, stderr, n_tail })
        }
        FitMethod::HillMle => {
            // Standard Hill over the top k order statistics with threshold at
            // the (k+1)-th.
            let k = ((window.hi_q * m as f64).floor() as usize).min(m - 1);
            if k < MIN_TAIL_POINTS {
                return Err(Error::Estimation(format!(
                    "top-{} window holds {k} points, need at least {MIN_TAIL_POINTS}",
                    window.hi_q
                )));
            }
            let thr = curve.wealth_at_rank(k + 1);
            if thr <= 0.0 {
                return Err(Error::Estimation("nonpositive threshold in fit window".into()));
            }
            let mut sum = 0.0;
            for rank in 1..=k {
                sum += (curve.wealth_at_rank(rank) / thr).ln();
            }
            if sum <= 0.0 {
                return Err(Error::Estimation("degenerate fit window (constant wealth)".into()));
            }
            let alpha_hat = k as f64 / sum;
            let stderr = alpha_hat / (k as f64).sqrt();
            Ok(TailFit { alpha_hat, method, window, stderr, n_tail: k })
        }
    }
}

/// Fits across a ladder of nested window depths, plus a plateau verdict:
/// true when max - min of the ladder's alpha_hat stays below 15% of the
/// median.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TailStability {
    pub rungs: Vec<TailFit>,
    pub plateau: bool,
}

/// Ladder depths as fractions of the curve that the deepest rank reaches.
/// The span runs to half the curve on purpose: a genuine power law keeps a
/// flat ladder that deep, while a tail that merely mimics one over a couple
/// of decades falls off the plateau by the last rungs.
const LADDER_FRACTIONS: [f64; 5] = [0.01, 0.04, 0.10, 0.25, 0.50];

/// Spread tolerance of the plateau verdict, relative to the median.
pub const PLATEAU_SPREAD: f64 = 0.15;

pub fn tail_stability(curve: &RankWealthCurve, method: FitMethod) -> Result<TailStability> {
    let m = curve.len();
    if m < 500 {
        return Err(Error::Estimation(format!(
            "stability ladder needs at least 500 points above the floor, got {m}"
        )));
    }
    let mut rungs = Vec::with_capacity(LADDER_FRACTIONS.len());
    let mut last_k = 0usize;
    for &f in &LADDER_FRACTIONS {
        // Depth in ranks, clamped so every rung is usable on small curves.
        let k = ((f * m as f64) as usize)
            .max(MIN_TAIL_POINTS * 2)
            .min(m - 1);
        if k == last_k {
            continue; // clamping collapsed this rung into the previous one
        }
        last_k = k;
        let hi_q = k as f64 / m as f64;
        let window = match method {
            FitMethod::HillMle => FitWindow { lo_q: 0.0, hi_q },
            FitMethod::RankRegression => FitWindow { lo_q: hi_q / 20.0, hi_q },
        };
        rungs.push(fit_tail(curve, method, window)?);
    }
    if rungs.len() < 3 {
        return Err(Error::Estimation("stability ladder collapsed to fewer than 3 rungs".into()));
    }
    let mut alphas: Vec<f64> = rungs.iter().map(|r| r.alpha_hat).collect();
    alphas.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = alphas[alphas.len() / 2];
    let spread = alphas[alphas.len() - 1] - alphas[0];
    Ok(TailStability { rungs, plateau: spread < PLATEAU_SPREAD * median })
}

/// Points (v, relative CCDF) of the analytic tail v^{-alpha}, log-spaced on
/// [v_lo, v_hi] and normalized so the first point is exactly (v_lo, 1).
/// Fails for parameter points without a power-law tail.
pub fn theory_overlay(
    params: &VStarParams,
    v_lo: f64,
    v_hi: f64,
    n_points: usize,
) -> Result<Vec<(f64, f64)>> {
    require_finite("v_lo", v_lo)?;
    require_finite("v_hi", v_hi)?;
    if v_lo <= 0.0 || v_hi <= v_lo {
        return Err(Error::Domain(format!(
            "need 0 < v_lo < v_hi, got ({v_lo}, {v_hi})"
        )));
    }
    if n_points < 2 {
        return Err(Error::Domain("overlay needs at least 2 points".into()));
    }
    let alpha = power_law_exponent(params)?.ok_or_else(|| {
        Error::Domain(format!(
            "no power-law tail at sigma = {}, k_th = {} (not supercritical)",
            params.sigma, params.k_th
        ))
    })?;
    let log_lo = v_lo.ln();
    let step = (v_hi.ln() - log_lo) / (n_points - 1) as f64;
    let mut out = Vec::with_capacity(n_points);
    out.push((v_lo, 1.0));
    for i in 1..n_points {
        let v = (log_lo + step * i as f64).exp();
        out.push((v, (v / v_lo).powf(-alpha)));
    }
    Ok(out)
}
