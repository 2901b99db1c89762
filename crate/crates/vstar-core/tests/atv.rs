//! Tests for the population simulator: bit-level determinism under any
//! parallel decomposition, agreement of survivor statistics with the
//! closed-form analytics, bucket-table bookkeeping, and the dump format.

mod common;

use common::assert_close;
use vstar_core::atv::{
    bucketize, read_dump, simulate, simulate_serial, sweep, write_bucket_csv, write_dump,
    write_snapshot_csv, SimConfig, WealthSnapshot, LADDER_SIGMAS, MAX_PARTICIPANT_PERIODS,
    MAX_POPULATION, TAIL_THRESHOLDS,
};
use vstar_core::gaussian::{rectified_mean, NormalSpec};
use vstar_core::vstar::{beta_eff, survival_probability, VStarParams};
use vstar_core::Error;

fn small_cfg(sigma_high: f64, n: u64, t: u32, seed: u64) -> SimConfig {
    SimConfig {
        n,
        t,
        w0: 20_000.0,
        sigma_high,
        sigma_low: 0.1,
        k_th: Some(2.5),
        seed,
        chunk_size: 4096,
    }
}

#[test]
fn bitwise_deterministic_across_chunk_sizes_and_threads() {
    let base = small_cfg(3.0, 20_000, 10, 42);
    let reference = simulate(&base).unwrap();
    // Chunk size must not matter.
    for chunk_size in [1usize, 7, 333, 20_000] {
        let cfg = SimConfig { chunk_size, ..base };
        let snap = simulate(&cfg).unwrap();
        assert_eq!(snap.final_wealth, reference.final_wealth, "chunk {chunk_size}");
        assert_eq!(snap.periods_survived_high, reference.periods_survived_high);
    }
    // Thread count must not matter.
    for threads in [1usize, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let snap = pool.install(|| simulate(&base)).unwrap();
        assert_eq!(snap.final_wealth, reference.final_wealth, "{threads} threads");
        assert_eq!(snap.periods_survived_high, reference.periods_survived_high);
    }
    // The pool-free path must not matter either.
    assert_eq!(simulate_serial(&base).unwrap(), reference);
}

#[test]
fn different_seeds_decouple_runs() {
    let a = simulate(&small_cfg(3.0, 10_000, 5, 1)).unwrap();
    let b = simulate(&small_cfg(3.0, 10_000, 5, 2)).unwrap();
    assert_ne!(a.final_wealth, b.final_wealth);
}

#[test]
fn survivor_counts_follow_powers_of_p() {
    let cfg = small_cfg(3.0, 200_000, 5, 99);
    let snap = simulate(&cfg).unwrap();
    let p = survival_probability(&VStarParams::new(3.0, 2.5).unwrap()).unwrap();
    let n = cfg.n as f64;
    for r in 1..=3u32 {
        let expected = p.powi(r as i32);
        let got = snap.periods_survived_high.iter().filter(|&&s| s >= r).count() as f64 / n;
        let se = (expected * (1.0 - expected) / n).sqrt();
        assert!(
            (got - expected).abs() < 4.0 * se,
            "round {r}: got {got}, expected {expected}, se {se}"
        );
    }
}

#[test]
fn first_round_survivor_wealth_matches_conditional_growth() {
    let cfg = small_cfg(3.0, 400_000, 1, 7);
    let snap = simulate(&cfg).unwrap();
    let params = VStarParams::new(3.0, 2.5).unwrap();
    let be = beta_eff(&params).unwrap();
    let mut m = 0usize;
    let mut sum = 0.0;
    for (w, s) in snap.final_wealth.iter().zip(&snap.periods_survived_high) {
        if *s >= 1 {
            m += 1;
            sum += w / cfg.w0;
        }
    }
    let mean = sum / m as f64;
    // Conditional standard deviation of the survivor multiplier at this point.
    let cond_sd = 1.406_240_836_704_089_1;
    let se = cond_sd / (m as f64).sqrt();
    assert!(
        (mean - be).abs() < 4.0 * se,
        "survivor mean {mean} vs beta_eff {be}, se {se} ({m} survivors)"
    );
}

#[test]
fn no_dropout_mean_matches_rectified_growth() {
    let cfg = SimConfig {
        n: 400_000,
        t: 1,
        w0: 1.0,
        sigma_high: 2.0,
        sigma_low: 0.1,
        k_th: None,
        seed: 5,
        chunk_size: 8192,
    };
    let snap = simulate(&cfg).unwrap();
    // Everyone stays in the high branch and scores the full period count.
    assert!(snap.periods_survived_high.iter().all(|&s| s == 1));
    let mean = snap.final_wealth.iter().sum::<f64>() / cfg.n as f64;
    let exact = rectified_mean(NormalSpec::new(0.0, 2.0).unwrap());
    // sd of max(2 Z, 0) = 2 sqrt(1/2 - 1/(2 pi))
    let sd = 2.0 * (0.5 - 1.0 / (2.0 * std::f64::consts::PI)).sqrt();
    let se = sd / (cfg.n as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "mean {mean} vs {exact}, se {se}");
}

#[test]
fn dropout_pays_the_failing_period_then_freezes_under_zero_low_vol() {
    // A threshold nobody can clear pushes the whole population through the
    // dropout path in period 0; with sigma_low = 0 the low branch then holds
    // wealth constant, so a 1-period and a 5-period run must agree bitwise.
    let one = SimConfig {
        n: 50_000,
        t: 1,
        w0: 20_000.0,
        sigma_high: 3.0,
        sigma_low: 0.0,
        k_th: Some(1e9),
        seed: 11,
        chunk_size: 4096,
    };
    let five = SimConfig { t: 5, ..one };
    let a = simulate(&one).unwrap();
    let b = simulate(&five).unwrap();
    assert_eq!(a.final_wealth, b.final_wealth);
    assert!(a.periods_survived_high.iter().all(|&s| s == 0));
    assert!(b.periods_survived_high.iter().all(|&s| s == 0));
    // The failing period still paid out: about half the population (z > 0)
    // holds positive wealth.
    let positive = a.final_wealth.iter().filter(|&&w| w > 0.0).count() as f64;
    assert_close(positive / one.n as f64, 0.5, 0.02, "paid-out fraction");
}

#[test]
fn bucket_table_on_a_fabricated_snapshot() {
    let wealth = vec![
        0.0, 99.9, 100.0, 1999.9, 2000.0, 20_000.0, 20_000.5, 5e4 + 1.0, 1e5 + 1.0, 1e6 + 1.0,
        1e7 + 1.0, 1e8 + 1.0, 1e9 + 1.0,
    ];
    let n = wealth.len();
    let snap = WealthSnapshot {
        final_wealth: wealth,
        periods_survived_high: vec![0; n],
        seed_used: 0,
        t: 1,
    };
    let b = bucketize(&snap);
    assert_eq!(b.n, 13);
    assert_eq!(b.bankrupt, 2);
    assert_eq!(b.heavy_loss, 2);
    assert_eq!(b.mid, 2);
    assert_eq!(b.tail, [7, 6, 5, 4, 3, 2, 1]);
    assert_close(b.ratio, 4.0 / 3.0, 1e-15, "ratio");
    // Bands plus the first cumulative column partition the population.
    assert_eq!(b.bankrupt + b.heavy_loss + b.mid + b.tail[0], b.n);
}

#[test]
fn bucket_ratio_is_infinite_without_deep_tail() {
    let snap = WealthSnapshot {
        final_wealth: vec![10.0, 3000.0, 2e6],
        periods_survived_high: vec![0; 3],
        seed_used: 0,
        t: 1,
    };
    let b = bucketize(&snap);
    assert_eq!(b.tail[3], 1);
    assert_eq!(b.tail[4], 0);
    assert!(b.ratio.is_infinite());
}

#[test]
fn simulated_buckets_partition_population() {
    let cfg = small_cfg(3.0, 100_000, 15, 123);
    let snap = simulate(&cfg).unwrap();
    let b = bucketize(&snap);
    assert_eq!(b.bankrupt + b.heavy_loss + b.mid + b.tail[0], cfg.n);
    // Cumulative counts are nonincreasing along ascending thresholds.
    assert!(b.tail.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(TAIL_THRESHOLDS.len(), b.tail.len());
}

#[test]
fn dump_roundtrips_bitwise() {
    let cfg = small_cfg(2.0, 1000, 5, 314);
    let snap = simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_dump(&snap, &mut buf).unwrap();
    assert_eq!(buf.len(), 8 + 3 * 8 + 1000 * 8);
    let dump = read_dump(&mut buf.as_slice()).unwrap();
    assert_eq!(dump.wealth, snap.final_wealth);
    assert_eq!(dump.t, snap.t);
    assert_eq!(dump.seed, snap.seed_used);
}

#[test]
fn dump_rejects_bad_magic_and_truncation() {
    let cfg = small_cfg(2.0, 10, 2, 1);
    let snap = simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_dump(&snap, &mut buf).unwrap();

    let mut corrupted = buf.clone();
    corrupted[0] ^= 0xFF;
    assert!(matches!(read_dump(&mut corrupted.as_slice()), Err(Error::Domain(_))));

    let truncated = &buf[..buf.len() - 4];
    assert!(matches!(read_dump(&mut &truncated[..]), Err(Error::Io(_))));

    // A header claiming an absurd population is refused before allocation.
    let mut huge = buf[..32].to_vec();
    huge[8..16].copy_from_slice(&(MAX_POPULATION + 1).to_le_bytes());
    assert!(matches!(read_dump(&mut huge.as_slice()), Err(Error::Resource(_))));
}

#[test]
fn snapshot_csv_shape() {
    let cfg = small_cfg(3.0, 5, 3, 8);
    let snap = simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_snapshot_csv(&snap, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "participant,final_wealth,periods_survived_high");
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0], i.to_string());
        assert!(fields[1].parse::<f64>().unwrap() >= 0.0);
        assert!(fields[2].parse::<u32>().unwrap() <= 3);
    }
}

#[test]
fn bucket_csv_shape_and_infinite_ratio() {
    let snap = WealthSnapshot {
        final_wealth: vec![10.0, 3000.0],
        periods_survived_high: vec![0; 2],
        seed_used: 0,
        t: 1,
    };
    let rows = vec![(0.1, bucketize(&snap))];
    let mut buf = Vec::new();
    write_bucket_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "sigma,beta,bankrupt,heavy_loss,mid,gt_20k,gt_50k,gt_100k,gt_1m,gt_10m,gt_100m,gt_1b,ratio"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.1,"));
    assert!(lines[1].ends_with(",inf"));
}

#[test]
fn sweep_reports_the_failing_run() {
    let good = small_cfg(3.0, 100, 2, 1);
    let bad = SimConfig { n: 0, ..good };
    let err = sweep(&[good, bad]).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("run 1"), "unexpected message: {msg}");
    assert!(matches!(sweep(&[]), Err(Error::Domain(_))));
}

#[test]
fn resource_caps_are_enforced() {
    let over_pop = SimConfig { n: MAX_POPULATION + 1, ..small_cfg(3.0, 1, 1, 0) };
    assert!(matches!(over_pop.validate(), Err(Error::Resource(_))));
    let over_periods = SimConfig {
        n: MAX_POPULATION,
        t: ((MAX_PARTICIPANT_PERIODS / MAX_POPULATION) + 1) as u32,
        ..small_cfg(3.0, 1, 1, 0)
    };
    assert!(matches!(over_periods.validate(), Err(Error::Resource(_))));
}

#[test]
fn config_validation_errors() {
    assert!(matches!(small_cfg(0.0, 10, 1, 0).validate(), Err(Error::Domain(_))));
    assert!(matches!(small_cfg(-1.0, 10, 1, 0).validate(), Err(Error::Domain(_))));
    let zero_n = SimConfig { n: 0, ..small_cfg(1.0, 10, 1, 0) };
    assert!(matches!(zero_n.validate(), Err(Error::Domain(_))));
    let zero_t = SimConfig { t: 0, ..small_cfg(1.0, 10, 1, 0) };
    assert!(matches!(zero_t.validate(), Err(Error::Domain(_))));
    let neg_low = SimConfig { sigma_low: -0.1, ..small_cfg(1.0, 10, 1, 0) };
    assert!(matches!(neg_low.validate(), Err(Error::Domain(_))));
    let nan_k = SimConfig { k_th: Some(f64::NAN), ..small_cfg(1.0, 10, 1, 0) };
    assert!(matches!(nan_k.validate(), Err(Error::Domain(_))));
    let zero_chunk = SimConfig { chunk_size: 0, ..small_cfg(1.0, 10, 1, 0) };
    assert!(matches!(zero_chunk.validate(), Err(Error::Domain(_))));
}

#[test]
fn desk_scale_defaults() {
    let cfg = SimConfig::desk_scale(3.0, 77);
    assert_eq!(cfg.n, 1_000_000);
    assert_eq!(cfg.t, 15);
    assert_eq!(cfg.w0, 20_000.0);
    assert_eq!(cfg.k_th, Some(2.5));
    assert_eq!(cfg.seed, 77);
    cfg.validate().unwrap();
    assert_eq!(LADDER_SIGMAS.len(), 9);
}
