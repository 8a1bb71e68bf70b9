//! `fieldscan`: simulate, scan, calibrate and test multivariate lattice fields.
//!
//! Coordinates on the command line are 0-based: a box written with 1-based
//! corners `a_i..b_i` has origin `a_i - 1` and size `b_i - a_i + 1`.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fieldscan::bounds::VolumeProfile;
use fieldscan::io::{import_csv, load_field, save_field, write_atomic};
use fieldscan::{
    covariance_diagnostic, critical_value_for_norm, empirical_critical_value, generate, global_test, scan,
    scan_detailed, write_window_dump, AnomalySpec, BranchRule, Calibration, CalibrationConfig, Generator,
    MultiField, NormOrder, SimConfig, Threshold, ThresholdSource,
};
use serde_json::json;

use config::{parse_anomaly, parse_variant, RunConfig};

#[derive(Parser)]
#[command(name = "fieldscan", version, about = "Scan statistics for mean shifts in multivariate lattice fields")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "FIELDSCAN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an m-dependent Gaussian field, optionally with a mean shift.
    Simulate(SimulateArgs),
    /// Compute the scan statistic and its maximizing window.
    Scan(ScanArgs),
    /// Theoretical critical value from the tail bound.
    CriticalValue(CriticalValueArgs),
    /// Empirical critical value from simulated null fields.
    Calibrate(CalibrateArgs),
    /// Test a field for a mean shift. Exit 0: not rejected, 2: rejected.
    Detect(DetectArgs),
    /// Empirical covariance by axis and lag.
    Covariance(CovarianceArgs),
}

/// JSON parameter file; flags take precedence over its values.
#[derive(Args)]
struct ConfigFile {
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct GeometryFlags {
    /// Extents per axis, e.g. 50,50,50.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Number of components per site.
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args, Default)]
struct ModelFlags {
    /// Dependence range (block side of the simulator).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Bernstein scale; defaults to sigma.
    #[arg(long = "H")]
    h: Option<f64>,
    /// Branch rule of the tail bound: window or complement.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<BranchRule>,
}

#[derive(Args, Default)]
struct SpaceFlags {
    /// Window generator: cubic:K or all.
    #[arg(long)]
    windows: Option<Generator>,
    /// Volume fraction limits gamma0,gamma1.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    gamma: Option<Vec<f64>>,
    /// Norm order: a number >= 1 or inf.
    #[arg(long)]
    norm: Option<NormOrder>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigFile,
    #[command(flatten)]
    geometry: GeometryFlags,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mean shift as origin;size;shift, e.g. 10,10,10;30,30,30;5,5,5.
    #[arg(long, value_parser = parse_anomaly_arg)]
    anomaly: Option<AnomalySpec>,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON report with the resolved configuration.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    config: ConfigFile,
    #[command(flatten)]
    space: SpaceFlags,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV with the contrast of every window.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct CriticalValueArgs {
    #[command(flatten)]
    config: ConfigFile,
    #[command(flatten)]
    geometry: GeometryFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    space: SpaceFlags,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    config: ConfigFile,
    #[command(flatten)]
    geometry: GeometryFlags,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[command(flatten)]
    space: SpaceFlags,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    config: ConfigFile,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    space: SpaceFlags,
    #[arg(long)]
    alpha: Option<f64>,
    /// Fixed threshold.
    #[arg(long, conflicts_with = "calibration")]
    threshold: Option<f64>,
    /// Output of `calibrate`; its sample supplies the threshold.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CovarianceArgs {
    #[arg(long)]
    input: PathBuf,
    /// Largest lag; defaults to min(10, smallest extent - 1).
    #[arg(long)]
    max_lag: Option<usize>,
    /// Correlation tolerance for the suggested m.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_anomaly_arg(s: &str) -> Result<AnomalySpec, String> {
    parse_anomaly(s).map_err(|e| e.to_string())
}

impl GeometryFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.dims {
            cfg.dims = Some(d.clone());
        }
        if let Some(n) = self.components {
            cfg.n = Some(n);
        }
    }
}

impl ModelFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.m = self.m.or(cfg.m);
        cfg.sigma = self.sigma.or(cfg.sigma);
        cfg.h = self.h.or(cfg.h);
        cfg.variant = self.variant.or(cfg.variant);
    }
}

impl SpaceFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(g) = &self.windows {
            cfg.generator = Some(g.clone());
        }
        if let Some(g) = &self.gamma {
            if g.len() != 2 {
                bail!("--gamma takes two values gamma0,gamma1");
            }
            cfg.gamma0 = Some(g[0]);
            cfg.gamma1 = Some(g[1]);
        }
        if let Some(p) = self.norm {
            cfg.norm = Some(p);
        }
        Ok(())
    }
}

/// Six significant digits for terminal output.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..6).contains(&e) {
        format!("{:.*}", (5 - e) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn fmt_rect(r: &fieldscan::HyperRect) -> String {
    format!("origin {:?} size {:?}", r.origin, r.size)
}

fn read_field(path: &Path) -> Result<MultiField> {
    let field = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        import_csv(file)?
    } else {
        load_field(path)?
    };
    Ok(field)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::resolve(args.config.config.as_deref(), RunConfig::default())?;
    args.geometry.apply(&mut cfg);
    cfg.m = args.m.or(cfg.m);
    cfg.sigma = args.sigma.or(cfg.sigma);
    cfg.seed = args.seed.or(cfg.seed);
    if args.anomaly.is_some() {
        cfg.anomaly = args.anomaly;
    }
    let dims = cfg.field_dims()?;
    cfg.d = Some(dims.d());
    let sim = SimConfig { dims, m: cfg.m()?, sigma: cfg.sigma()?, seed: cfg.seed()?, anomaly: cfg.anomaly.clone() };
    let field = generate(&sim)?;
    save_field(&field, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} ({} sites, {} components)", args.out.display(), field.dims().sites(), field.dims().n());
    if let Some(path) = &args.report {
        write_json(path, &json!({ "config": cfg, "output": args.out }))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_scan(args: ScanArgs) -> Result<ExitCode> {
    let field = read_field(&args.input)?;
    let mut cfg = RunConfig::resolve(args.config.config.as_deref(), RunConfig::default())?;
    args.space.apply(&mut cfg)?;
    cfg.adopt_dims(field.dims())?;
    let space = cfg.space(field.dims())?;
    let norm = cfg.norm();
    let result = if let Some(path) = &args.dump {
        let r = scan_detailed(&field, &space, norm)?;
        let mut buf = Vec::new();
        write_window_dump(r.per_window.as_deref().unwrap_or_default(), &mut buf)?;
        write_atomic(path, &buf).with_context(|| format!("writing {}", path.display()))?;
        r
    } else {
        scan(&field, &space, norm)?
    };
    println!("T_W = {}", sig6(result.statistic));
    println!("argmax {}", fmt_rect(&result.argmax));
    println!("windows = {}", result.windows_scanned);
    if let Some(path) = &args.out {
        write_json(
            path,
            &json!({
                "config": cfg,
                "statistic": result.statistic,
                "argmax": result.argmax,
                "norm": result.norm,
                "windows": result.windows_scanned,
            }),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_critical_value(args: CriticalValueArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::resolve(args.config.config.as_deref(), RunConfig::default())?;
    args.geometry.apply(&mut cfg);
    args.model.apply(&mut cfg);
    args.space.apply(&mut cfg)?;
    cfg.alpha = args.alpha.or(cfg.alpha);
    if cfg.n.is_none() && cfg.dims.is_some() {
        cfg.n = Some(1);
    }
    let dims = cfg.field_dims()?;
    cfg.d = Some(dims.d());
    let space = cfg.space(&dims)?;
    let params = cfg.model(&dims)?;
    let alpha = cfg.alpha();
    let norm = cfg.norm();
    let profile = VolumeProfile::from_space(&space)?;
    let cv = critical_value_for_norm(alpha, &profile, norm, &params)?;
    println!("y = {}", sig6(cv.y));
    println!("log bound = {} (log alpha = {})", sig6(cv.log_bound), sig6(alpha.ln()));
    println!("windows = {}", profile.windows());
    if cv.degenerate {
        println!("warning: the bound stays below alpha down to y = 0; the critical value is degenerate");
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &json!({
                "config": cfg,
                "y": cv.y,
                "log_bound": cv.log_bound,
                "alpha": cv.alpha,
                "degenerate": cv.degenerate,
                "relative_width": cv.relative_width,
                "iterations": cv.iterations,
                "windows": profile.windows(),
            }),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_calibrate(args: CalibrateArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::resolve(args.config.config.as_deref(), RunConfig::default())?;
    args.geometry.apply(&mut cfg);
    cfg.m = args.m.or(cfg.m);
    cfg.sigma = args.sigma.or(cfg.sigma);
    args.space.apply(&mut cfg)?;
    cfg.reps = args.reps.or(cfg.reps);
    cfg.alpha = args.alpha.or(cfg.alpha);
    cfg.seed = args.seed.or(cfg.seed);
    let dims = cfg.field_dims()?;
    cfg.d = Some(dims.d());
    let space = cfg.space(&dims)?;
    let config = CalibrationConfig {
        reps: *cfg.reps.get_or_insert(config::DEFAULT_REPS),
        alpha: cfg.alpha(),
        sim: SimConfig { dims, m: cfg.m()?, sigma: cfg.sigma()?, seed: 0, anomaly: None },
        space,
        norm: cfg.norm(),
        master_seed: cfg.seed()?,
    };
    let cal = empirical_critical_value(&config)?;
    println!("y_hat = {} (rank {} of {})", sig6(cal.y_hat), cal.rank, cal.reps);
    if cal.rank_is_max {
        println!("warning: too few replications; y_hat is the sample maximum");
    }
    write_json(
        &args.out,
        &json!({
            "y_hat": cal.y_hat,
            "alpha": cal.alpha,
            "reps": cal.reps,
            "rank": cal.rank,
            "rank_is_max": cal.rank_is_max,
            "sample": cal.sample,
            "config": cfg,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn load_calibration(path: &Path) -> Result<Calibration> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
    let mut sample: Vec<f64> = serde_json::from_value(v["sample"].clone()).context("calibration file lacks a sample")?;
    if sample.len() < 2 {
        bail!("calibration sample needs at least two values");
    }
    sample.sort_by(f64::total_cmp);
    let alpha = v["alpha"].as_f64().context("calibration file lacks alpha")?;
    let y_hat = v["y_hat"].as_f64().context("calibration file lacks y_hat")?;
    let reps = sample.len();
    Ok(Calibration { y_hat, alpha, reps, rank: 0, rank_is_max: false, sample })
}

fn run_detect(args: DetectArgs) -> Result<ExitCode> {
    let field = read_field(&args.input)?;
    let mut cfg = RunConfig::resolve(args.config.config.as_deref(), RunConfig::default())?;
    args.model.apply(&mut cfg);
    args.space.apply(&mut cfg)?;
    cfg.alpha = args.alpha.or(cfg.alpha);
    cfg.adopt_dims(field.dims())?;
    let space = cfg.space(field.dims())?;
    let norm = cfg.norm();

    let threshold = if let Some(y) = args.threshold {
        Threshold { value: y, source: ThresholdSource::User, alpha: cfg.alpha }
    } else if let Some(path) = &args.calibration {
        let cal = load_calibration(path)?;
        let alpha = *cfg.alpha.get_or_insert(cal.alpha);
        let value = if alpha == cal.alpha { cal.y_hat } else { cal.quantile(alpha)? };
        Threshold { value, source: ThresholdSource::Empirical, alpha: Some(alpha) }
    } else {
        let alpha = cfg.alpha();
        let params = cfg.model(field.dims())?;
        let cv = critical_value_for_norm(alpha, &VolumeProfile::from_space(&space)?, norm, &params)?;
        if cv.degenerate {
            bail!("theoretical critical value is degenerate for this configuration; pass --threshold");
        }
        Threshold { value: cv.y, source: ThresholdSource::Theoretical, alpha: Some(alpha) }
    };

    let report = global_test(&field, &space, norm, threshold)?;
    println!("T_W = {}, threshold = {} ({:?})", sig6(report.statistic), sig6(report.threshold), report.threshold_source);
    println!("argmax {}", fmt_rect(&report.argmax));
    println!(
        "{}: {} window(s) at or above the threshold",
        if report.reject_global { "rejected" } else { "not rejected" },
        report.rejected_windows.len()
    );
    if let Some(path) = &args.out {
        let mut v = serde_json::to_value(&report)?;
        v["config"] = serde_json::to_value(&cfg)?;
        write_json(path, &v)?;
    }
    Ok(if report.reject_global { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn run_covariance(args: CovarianceArgs) -> Result<ExitCode> {
    let field = read_field(&args.input)?;
    let min_extent = *field.dims().dims().iter().min().expect("at least one axis");
    if min_extent < 2 {
        bail!("covariance needs an extent of at least 2 on every axis");
    }
    let max_lag = args.max_lag.unwrap_or_else(|| 10.min(min_extent - 1));
    let diag = covariance_diagnostic(&field, max_lag)?;
    for (axis, covs) in diag.per_axis.iter().enumerate() {
        let corr: Vec<String> = (0..covs.len()).map(|lag| sig6(diag.correlation(axis, lag))).collect();
        println!("axis {axis}: {}", corr.join(" "));
    }
    let suggested = diag.suggest_m(args.tol);
    match suggested {
        Some(m) => println!("suggested m = {m}"),
        None => println!("no lag up to {max_lag} has correlation within {}", args.tol),
    }
    if diag.degenerate {
        println!("warning: constant field; covariances are all zero");
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &json!({
                "input": args.input,
                "max_lag": max_lag,
                "per_axis": diag.per_axis,
                "pairs": diag.pairs,
                "degenerate": diag.degenerate,
                "suggested_m": suggested,
                "tol": args.tol,
            }),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Scan(a) => run_scan(a),
        Command::CriticalValue(a) => run_critical_value(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Detect(a) => run_detect(a),
        Command::Covariance(a) => run_covariance(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.5734400123), "0.573440");
        assert_eq!(sig6(123.456789), "123.457");
        assert_eq!(sig6(-42.3361), "-42.3361");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
