//! Population simulator for the two-branch survivorship game. Each period a
//! participant in the high-risk branch receives max(z * sigma_high * w, 0)
//! and keeps playing only while that payoff clears k_th * w; a failed period
//! still pays out, but moves the participant to the low-risk branch
//! (w * (1 + sigma_low * z), clipped at 0) for good.
//!
//! Draws come from a counter-based generator keyed on
//! (seed, participant, period, stream), so results are bit-identical for any
//! thread count or chunk size, and both variates are consumed every period
//! for every participant regardless of branch.

use rayon::prelude::*;

use crate::gaussian::{cdf_raw, pdf_raw, SQRT_2PI};
use crate::{require_finite, Error, Result};

/// Hard cap on population size (snapshot memory is O(n)).
pub const MAX_POPULATION: u64 = 100_000_000;
/// Hard cap on n * t, the total number of participant-periods.
pub const MAX_PARTICIPANT_PERIODS: u64 = 2_000_000_000;

/// Volatilities of the standard nine-run reference ladder.
pub const LADDER_SIGMAS: [f64; 9] = [0.10, 0.50, 1.00, 1.50, 2.00, 2.51, 3.00, 3.50, 4.00];

/// Simulation configuration. `k_th` of None disables the dropout rule
/// entirely (participants stay in the high-risk branch forever).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub n: u64,
    pub t: u32,
    pub w0: f64,
    pub sigma_high: f64,
    pub sigma_low: f64,
    pub k_th: Option<f64>,
    pub seed: u64,
    pub chunk_size: usize,
}

impl SimConfig {
    /// Desk-scale defaults: n = 1e6, t = 15, w0 = 20000, sigma_low = 0.1,
    /// k_th = 2.5.
    pub fn desk_scale(sigma_high: f64, seed: u64) -> Self {
        SimConfig {
            n: 1_000_000,
            t: 15,
            w0: 20_000.0,
            sigma_high,
            sigma_low: 0.1,
            k_th: Some(2.5),
            seed,
            chunk_size: 16_384,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("n must be >= 1".into()));
        }
        if self.t == 0 {
            return Err(Error::Domain("t must be >= 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::Domain("chunk_size must be >= 1".into()));
        }
        require_finite("w0", self.w0)?;
        if self.w0 <= 0.0 {
            return Err(Error::Domain(format!("w0 must be > 0, got {}", self.w0)));
        }
        require_finite("sigma_high", self.sigma_high)?;
        if self.sigma_high <= 0.0 {
            return Err(Error::Domain(format!("sigma_high must be > 0, got {}", self.sigma_high)));
        }
        require_finite("sigma_low", self.sigma_low)?;
        if self.sigma_low < 0.0 {
            return Err(Error::Domain(format!("sigma_low must be >= 0, got {}", self.sigma_low)));
        }
        if let Some(k) = self.k_th {
            require_finite("k_th", k)?;
        }
        if self.n > MAX_POPULATION {
            return Err(Error::Resource(format!(
                "population {} exceeds the cap of {MAX_POPULATION}",
                self.n
            )));
        }
        if self.n * u64::from(self.t) > MAX_PARTICIPANT_PERIODS {
            return Err(Error::Resource(format!(
                "n * t = {} exceeds the cap of {MAX_PARTICIPANT_PERIODS}",
                self.n * u64::from(self.t)
            )));
        }
        Ok(())
    }
}

/// Final state of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthSnapshot {
    pub final_wealth: Vec<f64>,
    /// Periods each participant ended still inside the high-risk branch.
    /// A participant dropping out in the first period scores 0; one that
    /// never fails scores t.
    pub periods_survived_high: Vec<u32>,
    pub seed_used: u64,
    pub t: u32,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

// splitmix64 finalizer; a bijection on u64 with full avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based draw: hash of (seed, participant, period, stream).
#[inline]
fn counter_u64(seed: u64, participant: u64, period: u32, stream: u32) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN_GAMMA).wrapping_add(participant));
    h = mix64(
        h.wrapping_add(GOLDEN_GAMMA)
            .wrapping_add((u64::from(period) << 1) | u64::from(stream)),
    );
    h
}

/// Map to the open interval (0, 1); never returns 0 or 1, so the normal
/// quantile below is always finite.
#[inline]
fn to_uniform(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Inverse standard-normal CDF: Acklam's rational approximation polished by
/// one Halley step against the erfc-based CDF, giving near machine accuracy
/// across the whole open interval.
#[inline]
fn std_normal_quantile(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LOW: f64 = 0.02425;

    let mut x = if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };
    // One Halley iteration.
    let e = cdf_raw(x) - u;
    let t = e / pdf_raw(x);
    x -= t / (1.0 + 0.5 * x * t);
    x
}

const STREAM_HIGH: u32 = 0;
const STREAM_LOW: u32 = 1;

#[inline]
fn step_one(cfg: &SimConfig, period: u32, i: u64, w: &mut f64, high: &mut bool, survived: &mut u32) {
    let z_hi = std_normal_quantile(to_uniform(counter_u64(cfg.seed, i, period, STREAM_HIGH)));
    let z_lo = std_normal_quantile(to_uniform(counter_u64(cfg.seed, i, period, STREAM_LOW)));
    let cur = *w;
    let payoff_high = (z_hi * cfg.sigma_high * cur).max(0.0);
    let payoff_low = (cur * (1.0 + cfg.sigma_low * z_lo)).max(0.0);
    if *high {
        // Threshold uses the wealth brought into the period; a failing
        // participant still receives this period's payoff.
        *w = payoff_high;
        match cfg.k_th {
            Some(k) if payoff_high < k * cur => *high = false,
            _ => *survived += 1,
        }
    } else {
        *w = payoff_low;
    }
}

/// Run the simulation. One full-population pass per period; within a period
/// the population is processed in `chunk_size` blocks in parallel.
pub fn simulate(cfg: &SimConfig) -> Result<WealthSnapshot> {
    cfg.validate()?;
    let n = cfg.n as usize;
    let mut wealth = vec![cfg.w0; n];
    let mut in_high = vec![true; n];
    let mut survived = vec![0u32; n];
    let chunk = cfg.chunk_size;

    for period in 0..cfg.t {
        wealth
            .par_chunks_mut(chunk)
            .zip(in_high.par_chunks_mut(chunk))
            .zip(survived.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(ci, ((wc, hc), sc))| {
                let base = (ci * chunk) as u64;
                for j in 0..wc.len() {
                    step_one(cfg, period, base + j as u64, &mut wc[j], &mut hc[j], &mut sc[j]);
                }
            });
    }

    Ok(WealthSnapshot {
        final_wealth: wealth,
        periods_survived_high: survived,
        seed_used: cfg.seed,
        t: cfg.t,
    })
}

/// Sequential twin of [`simulate`] for hosts without a thread pool (wasm).
/// The generator is keyed by (seed, participant, period, stream), so the
/// result is bitwise identical to the parallel path.
pub fn simulate_serial(cfg: &SimConfig) -> Result<WealthSnapshot> {
    cfg.validate()?;
    let n = cfg.n as usize;
    let mut wealth = vec![cfg.w0; n];
    let mut in_high = vec![true; n];
    let mut survived = vec![0u32; n];

    for period in 0..cfg.t {
        for i in 0..n {
            step_one(cfg, period, i as u64, &mut wealth[i], &mut in_high[i], &mut survived[i]);
        }
    }

    Ok(WealthSnapshot {
        final_wealth: wealth,
        periods_survived_high: survived,
        seed_used: cfg.seed,
        t: cfg.t,
    })
}

/// Wealth thresholds of the cumulative table columns.
pub const TAIL_THRESHOLDS: [f64; 7] = [2e4, 5e4, 1e5, 1e6, 1e7, 1e8, 1e9];

/// Band and cumulative counts of a final wealth distribution. Bands are
/// [0, 100), [100, 2000), [2000, 20000]; cumulative counts are strict
/// (w > threshold), so bands plus the first cumulative column partition the
/// population.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BucketTable {
    pub n: u64,
    pub bankrupt: u64,
    pub heavy_loss: u64,
    pub mid: u64,
    /// Counts above each of TAIL_THRESHOLDS, in order.
    pub tail: [u64; 7],
    /// count(> 1e6) / count(> 1e7); +inf when the denominator is 0.
    pub ratio: f64,
}

pub fn bucketize(snapshot: &WealthSnapshot) -> BucketTable {
    let mut bankrupt = 0u64;
    let mut heavy_loss = 0u64;
    let mut mid = 0u64;
    let mut tail = [0u64; 7];
    for &w in &snapshot.final_wealth {
        if w < 100.0 {
            bankrupt += 1;
        } else if w < 2000.0 {
            heavy_loss += 1;
        } else if w <= 20_000.0 {
            mid += 1;
        }
        for (slot, &thr) in tail.iter_mut().zip(TAIL_THRESHOLDS.iter()) {
            if w > thr {
                *slot += 1;
            } else {
                break; // thresholds ascend
            }
        }
    }
    let ratio = if tail[4] == 0 { f64::INFINITY } else { tail[3] as f64 / tail[4] as f64 };
    BucketTable {
        n: snapshot.final_wealth.len() as u64,
        bankrupt,
        heavy_loss,
        mid,
        tail,
        ratio,
    }
}

/// Run a list of configurations in order. Any failure aborts the sweep with
/// the failing run's index attached.
pub fn sweep(cfgs: &[SimConfig]) -> Result<Vec<BucketTable>> {
    if cfgs.is_empty() {
        return Err(Error::Domain("sweep needs at least one configuration".into()));
    }
    cfgs.iter()
        .enumerate()
        .map(|(i, cfg)| {
            let snap = simulate(cfg).map_err(|e| match e {
                Error::Domain(m) => Error::Domain(format!("run {i}: {m}")),
                Error::Resource(m) => Error::Resource(format!("run {i}: {m}")),
                other => other,
            })?;
            Ok(bucketize(&snap))
        })
        .collect()
}

/// CSV of one row per participant: `participant,final_wealth,periods_survived_high`.
pub fn write_snapshot_csv<W: std::io::Write>(
    snapshot: &WealthSnapshot,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "participant,final_wealth,periods_survived_high")?;
    for (i, (&w, &s)) in snapshot
        .final_wealth
        .iter()
        .zip(snapshot.periods_survived_high.iter())
        .enumerate()
    {
        writeln!(out, "{i},{w},{s}")?;
    }
    Ok(())
}

/// CSV of bucket tables, one row per (sigma, table), in the reference column
/// order. beta is sigma / sqrt(2 pi); ratio prints as `inf` when infinite.
pub fn write_bucket_csv<W: std::io::Write>(
    rows: &[(f64, BucketTable)],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "sigma,beta,bankrupt,heavy_loss,mid,gt_20k,gt_50k,gt_100k,gt_1m,gt_10m,gt_100m,gt_1b,ratio"
    )?;
    for (sigma, b) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            sigma,
            sigma / SQRT_2PI,
            b.bankrupt,
            b.heavy_loss,
            b.mid,
            b.tail[0],
            b.tail[1],
            b.tail[2],
            b.tail[3],
            b.tail[4],
            b.tail[5],
            b.tail[6],
            b.ratio
        )?;
    }
    Ok(())
}

const DUMP_MAGIC: &[u8; 8] = b"VSTRWLT1";

/// Compact binary wealth dump: 8-byte magic, then n, t, seed as u64
/// little-endian, then n final-wealth f64 little-endian values.
pub fn write_dump<W: std::io::Write>(snapshot: &WealthSnapshot, out: &mut W) -> std::io::Result<()> {
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&(snapshot.final_wealth.len() as u64).to_le_bytes())?;
    out.write_all(&u64::from(snapshot.t).to_le_bytes())?;
    out.write_all(&snapshot.seed_used.to_le_bytes())?;
    for &w in &snapshot.final_wealth {
        out.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

/// Header and wealth values read back from a binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthDump {
    pub t: u32,
    pub seed: u64,
    pub wealth: Vec<f64>,
}

pub fn read_dump<R: std::io::Read>(input: &mut R) -> Result<WealthDump> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Domain("not a wealth dump (bad magic)".into()));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word);
    input.read_exact(&mut word)?;
    let t = u64::from_le_bytes(word);
    input.read_exact(&mut word)?;
    let seed = u64::from_le_bytes(word);
    if n > MAX_POPULATION {
        return Err(Error::Resource(format!(
            "dump claims {n} participants, above the cap of {MAX_POPULATION}"
        )));
    }
    let t = u32::try_from(t).map_err(|_| Error::Domain(format!("dump period count {t} out of range")))?;
    let mut wealth = Vec::with_capacity(n as usize);
    for _ in 0..n {
        input.read_exact(&mut word)?;
        wealth.push(f64::from_le_bytes(word));
    }
    Ok(WealthDump { t, seed, wealth })
}
