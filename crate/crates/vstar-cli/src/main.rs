//! Command-line front end: closed-form constants and point analytics,
//! phase-diagram grids, population simulation runs, tail-exponent fits, and
//! digest-verified replay of recorded runs.
//!
//! Exit codes: 0 success, 2 usage, 3 domain/range/estimation error,
//! 4 i/o error, 5 resource limit.
//!
//! Every run that writes at least one file also writes a JSON manifest next
//! to its first output (`<output>.manifest.json`) recording the resolved
//! configuration, seeds, and a SHA-256 digest per output. `vstar replay
//! <manifest>` re-runs that configuration into a scratch directory and
//! verifies that the digests still match.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vstar_core::atv::{
    bucketize, read_dump, simulate, write_bucket_csv, write_dump, write_snapshot_csv, SimConfig,
    LADDER_SIGMAS,
};
use vstar_core::chain::{chain_sum, classify_unconditional, AtmChainParams, ChainSum};
use vstar_core::gaussian::{SQRT_2PI, SQRT_PI_OVER_2};
use vstar_core::tail::{
    fit_tail, rank_curve, tail_stability, theory_overlay, FitMethod, FitWindow, TailFit,
    TailStability, DEFAULT_WEALTH_FLOOR,
};
use vstar_core::vstar::{
    derive, four_constants, linspace, phase_grid_on_axes, power_law_exponent, time_to_criticality,
    ttc_table, write_phase_grid_csv, PhaseGridSpec, VStarParams,
};
use vstar_core::{Error as CoreError, Regime};

const TOOL_NAME: &str = "vstar";
/// Point cap of the downsampled rank-wealth CSV written by `fit --rank-csv`.
const MAX_RANK_CSV_POINTS: usize = 10_000;

// ---------------------------------------------------------------------------
// argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = TOOL_NAME,
    version,
    about = "Survivorship analytics and population simulator for rectified growth",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// JSON object supplying defaults for the subcommand's parameters;
    /// explicit flags win over the file, the file wins over built-ins.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the four reference constants of the critical framework.
    Constants {
        /// Emit JSON instead of aligned text.
        #[arg(long)]
        json: bool,
    },
    /// Closed-form analytics at a single parameter point.
    Analytics(AnalyticsArgs),
    /// Evaluate the (sigma, k_th) phase diagram on a grid and write it as CSV.
    PhaseGrid(PhaseGridArgs),
    /// Run the population simulator and bucket the final wealth.
    Simulate(SimulateArgs),
    /// Fit tail exponents to a binary wealth dump.
    Fit(FitArgs),
    /// Print the time-to-criticality reference table.
    Ttc {
        /// Emit JSON instead of aligned text.
        #[arg(long)]
        json: bool,
    },
    /// Re-run a recorded manifest and verify its output digests.
    Replay {
        /// Path to a `*.manifest.json` written by an earlier run.
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct AnalyticsArgs {
    /// Per-period volatility as a fraction of wealth.
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,

    /// Survival threshold as a multiple of wealth; omit for the
    /// unconditional quantities only.
    #[arg(long, allow_negative_numbers = true)]
    k_th: Option<f64>,

    /// Emit JSON instead of aligned text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PhaseGridArgs {
    #[arg(long, allow_negative_numbers = true)]
    sigma_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k_max: Option<f64>,
    /// Grid points along the sigma axis.
    #[arg(long)]
    n_sigma: Option<usize>,
    /// Grid points along the k_th axis.
    #[arg(long)]
    n_k: Option<usize>,

    /// Insert the two critical volatilities as exact grid columns.
    #[arg(long)]
    mark_criticals: bool,

    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// High-branch volatility; required unless --table1.
    #[arg(long, conflicts_with = "table1", allow_negative_numbers = true)]
    sigma_high: Option<f64>,

    /// Run the standard nine-volatility ladder instead of a single
    /// configuration; ladder run i uses seed + i.
    #[arg(long)]
    table1: bool,

    /// Population size.
    #[arg(long)]
    n: Option<u64>,

    /// Number of periods.
    #[arg(long)]
    t: Option<u32>,

    /// Starting wealth.
    #[arg(long)]
    w0: Option<f64>,

    /// Low-branch volatility.
    #[arg(long, allow_negative_numbers = true)]
    sigma_low: Option<f64>,

    /// Dropout threshold as a multiple of wealth.
    #[arg(long, conflicts_with = "no_dropout", allow_negative_numbers = true)]
    k_th: Option<f64>,

    /// Disable the dropout rule entirely.
    #[arg(long)]
    no_dropout: bool,

    /// Base RNG seed; required, there is no default.
    #[arg(long)]
    seed: Option<u64>,

    /// Participants per parallel work unit.
    #[arg(long)]
    chunk_size: Option<usize>,

    /// Bucket-table CSV path (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Per-participant snapshot CSV path.
    #[arg(long, value_name = "FILE", conflicts_with = "table1")]
    snapshot_out: Option<PathBuf>,

    /// Binary wealth dump path (input format of `fit`).
    #[arg(long, value_name = "FILE", conflicts_with = "table1")]
    dump_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Binary wealth dump to read (written by `simulate --dump-out`).
    #[arg(long, value_name = "FILE")]
    snapshot: PathBuf,

    /// Estimator to run.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,

    /// Lower rank quantile of the fit window.
    #[arg(long)]
    window_lo: Option<f64>,

    /// Upper rank quantile of the fit window.
    #[arg(long)]
    window_hi: Option<f64>,

    /// Wealth floor below which observations are ignored.
    #[arg(long, allow_negative_numbers = true)]
    floor: Option<f64>,

    /// Volatility of the analytic point for a theory overlay (needs --k-th).
    #[arg(long, requires = "k_th", allow_negative_numbers = true)]
    sigma: Option<f64>,

    /// Threshold of the analytic point for a theory overlay (needs --sigma).
    #[arg(long, requires = "sigma", allow_negative_numbers = true)]
    k_th: Option<f64>,

    /// JSON report path (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Downsampled rank-wealth CSV path.
    #[arg(long, value_name = "FILE")]
    rank_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Both,
    Rank,
    Hill,
}

impl MethodArg {
    fn as_str(self) -> &'static str {
        match self {
            MethodArg::Both => "both",
            MethodArg::Rank => "rank",
            MethodArg::Hill => "hill",
        }
    }
}

// ---------------------------------------------------------------------------
// error plumbing
// ---------------------------------------------------------------------------

enum CliError {
    /// Missing or inconsistent arguments; exits 2 like a parse failure.
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

fn exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Domain(_) | CoreError::Range(_) | CoreError::Estimation(_) => 3,
        CoreError::Io(_) => 4,
        CoreError::Resource(_) => 5,
    }
}

/// Restore the default SIGPIPE disposition so `vstar ttc | head` dies
/// quietly like any other filter instead of panicking on a closed stdout.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        if let Err(e) = pool {
            eprintln!("error: cannot configure {threads} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Constants { json } => run_constants(json),
        Command::Analytics(args) => run_analytics(args, &cfg),
        Command::PhaseGrid(args) => run_phase_grid(args, &cfg),
        Command::Simulate(args) => run_simulate(args, &cfg),
        Command::Fit(args) => run_fit(args, &cfg),
        Command::Ttc { json } => run_ttc(json),
        Command::Replay { manifest } => run_replay(&manifest),
    }
}

// ---------------------------------------------------------------------------
// config file
// ---------------------------------------------------------------------------

/// Flat JSON object of parameter defaults, e.g. {"sigma_high": 3.0, "n": 1000}.
/// Keys irrelevant to the invoked subcommand are ignored.
struct FileConfig(serde_json::Map<String, serde_json::Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig(serde_json::Map::new()));
        };
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CoreError::Domain(format!("config is not valid JSON: {e}")))?;
        match value {
            serde_json::Value::Object(map) => Ok(FileConfig(map)),
            _ => Err(CoreError::Domain("config must be a JSON object".into()).into()),
        }
    }

    fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.0.get(key) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| CoreError::Domain(format!("config key {key} must be a number")).into()),
        }
    }

    fn u64(&self, key: &str) -> CliResult<Option<u64>> {
        match self.0.get(key) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| {
                    CoreError::Domain(format!("config key {key} must be a non-negative integer"))
                        .into()
                }),
        }
    }

    fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn u32(&self, key: &str) -> CliResult<Option<u32>> {
        match self.u64(key)? {
            None => Ok(None),
            Some(v) => u32::try_from(v)
                .map(Some)
                .map_err(|_| CoreError::Domain(format!("config key {key} exceeds u32")).into()),
        }
    }

    fn bool(&self, key: &str) -> CliResult<Option<bool>> {
        match self.0.get(key) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| CoreError::Domain(format!("config key {key} must be a boolean")).into()),
        }
    }

    fn string(&self, key: &str) -> CliResult<Option<String>> {
        match self.0.get(key) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| CoreError::Domain(format!("config key {key} must be a string")).into()),
        }
    }
}

// ---------------------------------------------------------------------------
// manifests and replay
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
struct OutputRecord {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    started_utc: String,
    finished_utc: String,
    outputs: Vec<OutputRecord>,
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok((hex, total))
}

/// Write through a temp file and rename, so a crashed run never leaves a
/// half-written output at the final path.
fn write_atomic<F>(path: &Path, fill: F) -> io::Result<()>
where
    F: FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
{
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    let result = (|| {
        let mut writer = io::BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut writer)?;
        writer.flush()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Hash a freshly written output, recording the path as declared (replay
/// remaps the physical location but keys records by the declared path).
fn finish_output(declared: &str, actual: &Path) -> CliResult<OutputRecord> {
    let (sha256, bytes) = sha256_file(actual)?;
    Ok(OutputRecord { path: declared.to_string(), sha256, bytes })
}

fn write_run_manifest(
    command: &str,
    config: serde_json::Value,
    seeds: Vec<u64>,
    started_utc: String,
    outputs: &[OutputRecord],
) -> CliResult<()> {
    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
        seeds,
        started_utc,
        finished_utc: now_utc(),
        outputs: outputs.to_vec(),
    };
    let path = PathBuf::from(format!("{}.manifest.json", outputs[0].path));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn run_replay(manifest_path: &Path) -> CliResult<()> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CoreError::Domain(format!("manifest parse error: {e}")))?;
    if manifest.tool != TOOL_NAME {
        return Err(CoreError::Domain(format!(
            "manifest was written by {:?}, not {TOOL_NAME}",
            manifest.tool
        ))
        .into());
    }

    let scratch = std::env::temp_dir().join(format!("vstar-replay-{}", std::process::id()));
    fs::create_dir_all(&scratch)?;
    let remap = |declared: &str| {
        let flat: String = declared
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect();
        scratch.join(flat)
    };

    let replayed = (|| -> CliResult<Vec<OutputRecord>> {
        match manifest.command.as_str() {
            "simulate" => {
                let job: SimulateJob = decode_job(&manifest.config)?;
                execute_simulate(&job, &remap, true)
            }
            "phase-grid" => {
                let job: PhaseGridJob = decode_job(&manifest.config)?;
                execute_phase_grid(&job, &remap, true)
            }
            "fit" => {
                let job: FitJob = decode_job(&manifest.config)?;
                execute_fit(&job, &remap, true)
            }
            other => Err(CoreError::Domain(format!("replay does not support command {other:?}")).into()),
        }
    })();
    let cleanup = fs::remove_dir_all(&scratch);
    let replayed = replayed?;
    cleanup?;

    let mut all_ok = true;
    for recorded in &manifest.outputs {
        match replayed.iter().find(|o| o.path == recorded.path) {
            Some(got) if got.sha256 == recorded.sha256 && got.bytes == recorded.bytes => {
                println!("ok       {} ({} bytes)", recorded.path, got.bytes);
            }
            Some(got) => {
                all_ok = false;
                println!(
                    "MISMATCH {} (recorded {}, replayed {})",
                    recorded.path, recorded.sha256, got.sha256
                );
            }
            None => {
                all_ok = false;
                println!("MISSING  {} (replay produced no such output)", recorded.path);
            }
        }
    }
    if all_ok {
        println!("replay verified {} output(s)", manifest.outputs.len());
        Ok(())
    } else {
        Err(CoreError::Domain("replay digests do not match the manifest".into()).into())
    }
}

fn decode_job<T: serde::de::DeserializeOwned>(config: &serde_json::Value) -> CliResult<T> {
    serde_json::from_value(config.clone())
        .map_err(|e| CoreError::Domain(format!("manifest config does not match its command: {e}")).into())
}

fn encode_job<T: Serialize>(job: &T) -> serde_json::Value {
    serde_json::to_value(job).expect("job serializes")
}

// ---------------------------------------------------------------------------
// constants / analytics / ttc
// ---------------------------------------------------------------------------

fn run_constants(json: bool) -> CliResult<()> {
    let constants = four_constants();
    if json {
        println!("{}", serde_json::to_string_pretty(&constants).expect("constants serialize"));
    } else {
        println!("sigma_star     {}", constants.sigma_star);
        println!("sigma_star_th  {}", constants.sigma_star_th);
        println!("z_star         {}", constants.z_star);
        println!("k_star_th      {}", constants.k_star_th);
    }
    Ok(())
}

#[derive(Serialize)]
struct UnconditionalBlock {
    beta: f64,
    regime: Regime,
    /// Closed-form chain sum; absent when the chain diverges.
    chain_sum: Option<f64>,
    t_star_years: f64,
}

#[derive(Serialize)]
struct ThresholdedBlock {
    k_th: f64,
    z: f64,
    p: f64,
    beta_eff: f64,
    alpha: Option<f64>,
    regime: Regime,
    t_star_th_years: f64,
}

#[derive(Serialize)]
struct AnalyticsReport {
    sigma: f64,
    unconditional: UnconditionalBlock,
    thresholded: Option<ThresholdedBlock>,
}

fn run_analytics(args: AnalyticsArgs, cfg: &FileConfig) -> CliResult<()> {
    let Some(sigma) = args.sigma.or(cfg.f64("sigma")?) else {
        return Err(CliError::Usage(
            "analytics needs --sigma (or a \"sigma\" key in --config)".into(),
        ));
    };
    let k_th = args.k_th.or(cfg.f64("k_th")?);

    let chain = AtmChainParams::new(1.0, sigma)?;
    let unconditional = UnconditionalBlock {
        beta: chain.beta(),
        regime: classify_unconditional(sigma)?,
        chain_sum: match chain_sum(&chain) {
            ChainSum::Finite(total) => Some(total),
            ChainSum::Divergent => None,
        },
        t_star_years: time_to_criticality(sigma, false)?,
    };

    let thresholded = match k_th {
        Some(k_th) => {
            let params = VStarParams::new(sigma, k_th)?;
            let derived = derive(&params)?;
            Some(ThresholdedBlock {
                k_th,
                z: derived.z,
                p: derived.p,
                beta_eff: derived.beta_eff,
                alpha: derived.alpha,
                regime: vstar_core::vstar::classify_vstar(&params)?,
                t_star_th_years: time_to_criticality(sigma, true)?,
            })
        }
        None => None,
    };

    let report = AnalyticsReport { sigma, unconditional, thresholded };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }

    println!("sigma               {sigma}");
    println!("beta                {}", report.unconditional.beta);
    println!("regime              {}", report.unconditional.regime);
    match report.unconditional.chain_sum {
        Some(total) => println!("chain_sum           {total}"),
        None => println!("chain_sum           divergent"),
    }
    println!("t_star_years        {}", report.unconditional.t_star_years);
    if let Some(t) = &report.thresholded {
        println!("k_th                {}", t.k_th);
        println!("z                   {}", t.z);
        println!("p                   {}", t.p);
        println!("beta_eff            {}", t.beta_eff);
        match t.alpha {
            Some(alpha) => println!("alpha               {alpha}"),
            None => println!("alpha               n/a"),
        }
        println!("regime_thresholded  {}", t.regime);
        println!("t_star_th_years     {}", t.t_star_th_years);
    }
    Ok(())
}

fn run_ttc(json: bool) -> CliResult<()> {
    let rows = ttc_table();
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
        return Ok(());
    }
    println!("{:<6} {:<14} {}", "vol", "t_star", "t_star_th");
    for row in &rows {
        let vol = format!("{}%", (row.vol * 100.0).round() as i64);
        println!("{:<6} {:<14} {}", vol, row.t_star_human, row.t_star_th_human);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// phase-grid
// ---------------------------------------------------------------------------

/// Fully resolved phase-grid run; serialized into the manifest for replay.
#[derive(Serialize, Deserialize, Clone)]
struct PhaseGridJob {
    sigma_min: f64,
    sigma_max: f64,
    k_min: f64,
    k_max: f64,
    n_sigma: usize,
    n_k: usize,
    mark_criticals: bool,
    out: String,
}

fn run_phase_grid(args: PhaseGridArgs, cfg: &FileConfig) -> CliResult<()> {
    let job = PhaseGridJob {
        sigma_min: args.sigma_min.or(cfg.f64("sigma_min")?).unwrap_or(0.2),
        sigma_max: args.sigma_max.or(cfg.f64("sigma_max")?).unwrap_or(4.0),
        k_min: args.k_min.or(cfg.f64("k_min")?).unwrap_or(-3.0),
        k_max: args.k_max.or(cfg.f64("k_max")?).unwrap_or(4.0),
        n_sigma: args.n_sigma.or(cfg.usize("n_sigma")?).unwrap_or(200),
        n_k: args.n_k.or(cfg.usize("n_k")?).unwrap_or(200),
        mark_criticals: args.mark_criticals || cfg.bool("mark_criticals")?.unwrap_or(false),
        out: args.out.display().to_string(),
    };
    let started = now_utc();
    let outputs = execute_phase_grid(&job, &identity_remap, false)?;
    write_run_manifest("phase-grid", encode_job(&job), Vec::new(), started, &outputs)
}

fn identity_remap(declared: &str) -> PathBuf {
    PathBuf::from(declared)
}

fn execute_phase_grid(
    job: &PhaseGridJob,
    remap: &dyn Fn(&str) -> PathBuf,
    quiet: bool,
) -> CliResult<Vec<OutputRecord>> {
    // Validates ranges and point counts even when the axes are built by hand.
    let spec = PhaseGridSpec::new(job.sigma_min, job.sigma_max, job.k_min, job.k_max, job.n_sigma, job.n_k)?;
    let mut sigmas = linspace(spec.sigma_min, spec.sigma_max, spec.n_sigma);
    if job.mark_criticals {
        for critical in [SQRT_PI_OVER_2, SQRT_2PI] {
            if critical > spec.sigma_min && critical < spec.sigma_max {
                sigmas.push(critical);
            }
        }
        sigmas.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite axis"));
        sigmas.dedup();
    }
    let ks = linspace(spec.k_min, spec.k_max, spec.n_k);
    let n_cells = sigmas.len() * ks.len();
    let grid = phase_grid_on_axes(sigmas, ks)?;

    let actual = remap(&job.out);
    write_atomic(&actual, |w| write_phase_grid_csv(&grid, w))?;
    let record = finish_output(&job.out, &actual)?;
    if !quiet {
        println!("wrote {} ({n_cells} cells)", job.out);
    }
    Ok(vec![record])
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Fully resolved simulation run; serialized into the manifest for replay.
#[derive(Serialize, Deserialize, Clone)]
struct SimulateJob {
    table1: bool,
    /// Absent exactly when table1 runs the ladder.
    sigma_high: Option<f64>,
    n: u64,
    t: u32,
    w0: f64,
    sigma_low: f64,
    k_th: Option<f64>,
    seed: u64,
    chunk_size: usize,
    out: Option<String>,
    snapshot_out: Option<String>,
    dump_out: Option<String>,
}

fn run_simulate(args: SimulateArgs, cfg: &FileConfig) -> CliResult<()> {
    let table1 = args.table1 || cfg.bool("table1")?.unwrap_or(false);
    let sigma_high = args.sigma_high.or(cfg.f64("sigma_high")?);
    if table1 && args.sigma_high.is_some() {
        // clap catches the flag/flag conflict; this catches flag vs config.
        return Err(CliError::Usage("--table1 runs the fixed ladder; drop --sigma-high".into()));
    }
    if !table1 && sigma_high.is_none() {
        return Err(CliError::Usage(
            "simulate needs --sigma-high (or \"sigma_high\" in --config), or --table1".into(),
        ));
    }
    let Some(seed) = args.seed.or(cfg.u64("seed")?) else {
        return Err(CliError::Usage(
            "simulate needs an explicit --seed (or a \"seed\" key in --config)".into(),
        ));
    };
    let no_dropout = args.no_dropout || cfg.bool("no_dropout")?.unwrap_or(false);
    let k_th = if no_dropout {
        None
    } else {
        Some(args.k_th.or(cfg.f64("k_th")?).unwrap_or(2.5))
    };

    let job = SimulateJob {
        table1,
        sigma_high: if table1 { None } else { sigma_high },
        n: args.n.or(cfg.u64("n")?).unwrap_or(1_000_000),
        t: args.t.or(cfg.u32("t")?).unwrap_or(15),
        w0: args.w0.or(cfg.f64("w0")?).unwrap_or(20_000.0),
        sigma_low: args.sigma_low.or(cfg.f64("sigma_low")?).unwrap_or(0.1),
        k_th,
        seed,
        chunk_size: args.chunk_size.or(cfg.usize("chunk_size")?).unwrap_or(16_384),
        out: args.out.map(|p| p.display().to_string()).or(cfg.string("out")?),
        snapshot_out: args.snapshot_out.map(|p| p.display().to_string()),
        dump_out: args.dump_out.map(|p| p.display().to_string()),
    };
    let started = now_utc();
    let outputs = execute_simulate(&job, &identity_remap, false)?;
    if outputs.is_empty() {
        return Ok(()); // stdout-only runs leave no manifest behind
    }
    let seeds = if job.table1 {
        (0..LADDER_SIGMAS.len() as u64).map(|i| job.seed + i).collect()
    } else {
        vec![job.seed]
    };
    write_run_manifest("simulate", encode_job(&job), seeds, started, &outputs)
}

fn job_config(job: &SimulateJob, sigma_high: f64, seed: u64) -> SimConfig {
    SimConfig {
        n: job.n,
        t: job.t,
        w0: job.w0,
        sigma_high,
        sigma_low: job.sigma_low,
        k_th: job.k_th,
        seed,
        chunk_size: job.chunk_size,
    }
}

fn execute_simulate(
    job: &SimulateJob,
    remap: &dyn Fn(&str) -> PathBuf,
    quiet: bool,
) -> CliResult<Vec<OutputRecord>> {
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    let mut single_snapshot = None;

    if job.table1 {
        for (i, &sigma) in LADDER_SIGMAS.iter().enumerate() {
            let cfg = job_config(job, sigma, job.seed + i as u64);
            let snapshot = simulate(&cfg)?;
            rows.push((sigma, bucketize(&snapshot)));
        }
    } else {
        let sigma = job
            .sigma_high
            .ok_or_else(|| CoreError::Domain("simulate config lacks sigma_high".into()))?;
        let cfg = job_config(job, sigma, job.seed);
        let snapshot = simulate(&cfg)?;
        rows.push((sigma, bucketize(&snapshot)));
        single_snapshot = Some(snapshot);
    }

    match &job.out {
        Some(declared) => {
            let actual = remap(declared);
            write_atomic(&actual, |w| write_bucket_csv(&rows, w))?;
            outputs.push(finish_output(declared, &actual)?);
            if !quiet {
                println!("wrote {declared}");
            }
        }
        None => {
            if !quiet {
                write_bucket_csv(&rows, &mut io::stdout().lock())?;
            }
        }
    }

    if let Some(snapshot) = &single_snapshot {
        if let Some(declared) = &job.snapshot_out {
            let actual = remap(declared);
            write_atomic(&actual, |w| write_snapshot_csv(snapshot, w))?;
            outputs.push(finish_output(declared, &actual)?);
            if !quiet {
                println!("wrote {declared}");
            }
        }
        if let Some(declared) = &job.dump_out {
            let actual = remap(declared);
            write_atomic(&actual, |w| write_dump(snapshot, w))?;
            outputs.push(finish_output(declared, &actual)?);
            if !quiet {
                println!("wrote {declared}");
            }
        }
    }
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

/// Fully resolved fit run; serialized into the manifest for replay.
#[derive(Serialize, Deserialize, Clone)]
struct FitJob {
    snapshot: String,
    method: String,
    window_lo: f64,
    window_hi: f64,
    floor: f64,
    sigma: Option<f64>,
    k_th: Option<f64>,
    out: Option<String>,
    rank_csv: Option<String>,
}

#[derive(Serialize)]
struct TheoryBlock {
    sigma: f64,
    k_th: f64,
    /// Predicted exponent; absent when the point is not supercritical.
    alpha: Option<f64>,
    /// (wealth, expected survivor fraction) overlay, anchored at the window
    /// edge; absent whenever alpha is.
    overlay: Option<Vec<(f64, f64)>>,
    note: Option<String>,
}

#[derive(Serialize)]
struct FitReport {
    snapshot: String,
    periods: u32,
    seed: u64,
    n_total: usize,
    floor: f64,
    n_above_floor: usize,
    fits: Vec<TailFit>,
    stability: Vec<TailStability>,
    theory: Option<TheoryBlock>,
}

fn run_fit(args: FitArgs, cfg: &FileConfig) -> CliResult<()> {
    let method = args
        .method
        .map(|m| m.as_str().to_string())
        .or(cfg.string("method")?)
        .unwrap_or_else(|| "both".to_string());
    let default_window = FitWindow::default();
    let sigma = args.sigma.or(cfg.f64("sigma")?);
    let k_th = args.k_th.or(cfg.f64("k_th")?);
    if sigma.is_some() != k_th.is_some() {
        return Err(CliError::Usage("a theory overlay needs both --sigma and --k-th".into()));
    }
    let job = FitJob {
        snapshot: args.snapshot.display().to_string(),
        method,
        window_lo: args.window_lo.or(cfg.f64("window_lo")?).unwrap_or(default_window.lo_q),
        window_hi: args.window_hi.or(cfg.f64("window_hi")?).unwrap_or(default_window.hi_q),
        floor: args.floor.or(cfg.f64("floor")?).unwrap_or(DEFAULT_WEALTH_FLOOR),
        sigma,
        k_th,
        out: args.out.map(|p| p.display().to_string()),
        rank_csv: args.rank_csv.map(|p| p.display().to_string()),
    };
    let started = now_utc();
    let outputs = execute_fit(&job, &identity_remap, false)?;
    if outputs.is_empty() {
        return Ok(());
    }
    write_run_manifest("fit", encode_job(&job), Vec::new(), started, &outputs)
}

fn parse_methods(name: &str) -> CliResult<Vec<FitMethod>> {
    match name {
        "both" => Ok(vec![FitMethod::RankRegression, FitMethod::HillMle]),
        "rank" => Ok(vec![FitMethod::RankRegression]),
        "hill" => Ok(vec![FitMethod::HillMle]),
        other => Err(CoreError::Domain(format!(
            "unknown fit method {other:?}; expected both, rank, or hill"
        ))
        .into()),
    }
}

fn execute_fit(
    job: &FitJob,
    remap: &dyn Fn(&str) -> PathBuf,
    quiet: bool,
) -> CliResult<Vec<OutputRecord>> {
    let methods = parse_methods(&job.method)?;
    let mut reader = io::BufReader::new(fs::File::open(&job.snapshot)?);
    let dump = read_dump(&mut reader)?;
    let curve = rank_curve(&dump.wealth, job.floor)?;
    let window = FitWindow::new(job.window_lo, job.window_hi)?;

    let mut fits = Vec::new();
    let mut stability = Vec::new();
    for &method in &methods {
        fits.push(fit_tail(&curve, method, window)?);
        stability.push(tail_stability(&curve, method)?);
    }

    let theory = match (job.sigma, job.k_th) {
        (Some(sigma), Some(k_th)) => {
            let params = VStarParams::new(sigma, k_th)?;
            let alpha = power_law_exponent(&params)?;
            let block = match alpha {
                Some(alpha_value) => {
                    let deepest = ((window.hi_q * curve.len() as f64).floor() as usize)
                        .clamp(1, curve.len());
                    let v_lo = curve.wealth_at_rank(deepest);
                    let v_hi = curve.wealth_at_rank(1);
                    if v_lo < v_hi {
                        TheoryBlock {
                            sigma,
                            k_th,
                            alpha: Some(alpha_value),
                            overlay: Some(theory_overlay(&params, v_lo, v_hi, 200)?),
                            note: None,
                        }
                    } else {
                        TheoryBlock {
                            sigma,
                            k_th,
                            alpha: Some(alpha_value),
                            overlay: None,
                            note: Some("wealth curve is too flat for an overlay".into()),
                        }
                    }
                }
                None => TheoryBlock {
                    sigma,
                    k_th,
                    alpha: None,
                    overlay: None,
                    note: Some(
                        "parameter point is not supercritical, so no power-law tail is predicted"
                            .into(),
                    ),
                },
            };
            Some(block)
        }
        _ => None,
    };

    let report = FitReport {
        snapshot: job.snapshot.clone(),
        periods: dump.t,
        seed: dump.seed,
        n_total: dump.wealth.len(),
        floor: job.floor,
        n_above_floor: curve.len(),
        fits,
        stability,
        theory,
    };

    let mut outputs = Vec::new();
    match &job.out {
        Some(declared) => {
            let actual = remap(declared);
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            write_atomic(&actual, |w| {
                w.write_all(text.as_bytes())?;
                w.write_all(b"\n")
            })?;
            outputs.push(finish_output(declared, &actual)?);
            if !quiet {
                println!("wrote {declared}");
            }
        }
        None => {
            if !quiet {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            }
        }
    }
    if let Some(declared) = &job.rank_csv {
        let actual = remap(declared);
        let points = curve.downsample_log(MAX_RANK_CSV_POINTS);
        write_atomic(&actual, |w| {
            writeln!(w, "rank,wealth")?;
            for (rank, wealth) in &points {
                writeln!(w, "{rank},{wealth}")?;
            }
            Ok(())
        })?;
        outputs.push(finish_output(declared, &actual)?);
        if !quiet {
            println!("wrote {declared}");
        }
    }
    Ok(outputs)
}
