//! `softcs`: characteristic curves, SER sweeps and convergence studies as CSV.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softcs::denoiser::{characteristic_curve, linear_grid, CurveMode, DiscreteSparsePrior, GuardConfig};
use softcs::recovery::RecoveryVariant;
use softcs::simkit::{run_convergence, run_sweep, SweepParams, SEED_RULE};
use softcs::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;

#[derive(Parser)]
#[command(name = "softcs", version, about = "Soft-feedback denoisers and iterative discrete sparse recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Soft value and error variance of the scalar denoisers over a grid of observations.
    Curves(CurvesArgs),
    /// Symbol error rate versus SNR for each recovery variant.
    Sweep(SweepArgs),
    /// Mean symbol error rate after every iteration at one SNR.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct CurvesArgs {
    /// Effective noise variance; repeat for several curves.
    #[arg(long = "sigma-n2", allow_hyphen_values = true, default_values_t = [0.1, 0.01])]
    sigma_n2: Vec<f64>,
    /// Probability of each nonzero symbol.
    #[arg(long, default_value_t = 0.1)]
    p1: f64,
    /// Full symmetric signal alphabet, including 0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 0.0, 1.0])]
    alphabet: Vec<f64>,
    #[arg(long = "z-min", default_value_t = -2.0, allow_hyphen_values = true)]
    z_min: f64,
    #[arg(long = "z-max", default_value_t = 2.0, allow_hyphen_values = true)]
    z_max: f64,
    #[arg(long = "z-steps", default_value_t = 401)]
    z_steps: usize,
    /// biased, xu, nu or all.
    #[arg(long, default_value = "all")]
    mode: String,
    /// Disable variance clamping; singular unbiasing becomes an error.
    #[arg(long = "no-clamp")]
    no_clamp: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    /// Comma-separated subset of ims,xuims,nuims,tms.
    #[arg(long, value_delimiter = ',', default_values_t = RecoveryVariant::ALL)]
    variants: Vec<RecoveryVariant>,
    /// Signal length.
    #[arg(long = "L", default_value_t = 258)]
    l: usize,
    /// Number of measurements.
    #[arg(long = "K", default_value_t = 129)]
    k: usize,
    /// Number of nonzeros.
    #[arg(long = "s", default_value_t = 15)]
    s: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "SOFTCS_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    #[arg(long = "snr-db-min", default_value_t = 10.0, allow_hyphen_values = true)]
    snr_db_min: f64,
    #[arg(long = "snr-db-max", default_value_t = 20.0, allow_hyphen_values = true)]
    snr_db_max: f64,
    #[arg(long = "snr-db-step", default_value_t = 1.0)]
    snr_db_step: f64,
    /// Single SNR point; overrides the min/max/step grid.
    #[arg(long = "snr-db", allow_hyphen_values = true, conflicts_with_all = ["snr_db_min", "snr_db_max", "snr_db_step"])]
    snr_db: Option<f64>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    #[arg(long = "snr-db", default_value_t = 18.0, allow_hyphen_values = true)]
    snr_db: f64,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

/// Output produced by a subcommand plus whether every requested trial completed.
struct Report {
    text: String,
    complete: bool,
}

struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new(subcommand: &str) -> Self {
        let mut m = Self { lines: Vec::new() };
        m.push("tool", "softcs");
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("subcommand", subcommand);
        m.push("timestamp", chrono::Utc::now().to_rfc3339());
        m
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn render(&self, out: &mut String) {
        for (k, v) in &self.lines {
            let _ = writeln!(out, "# {k}={v}");
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn curves(args: &CurvesArgs) -> Result<Report, Failure> {
    let modes: Vec<CurveMode> = if args.mode == "all" {
        CurveMode::ALL.to_vec()
    } else {
        vec![args.mode.parse().map_err(|_| {
            Failure::Usage(format!("unknown mode '{}' (expected biased, xu, nu or all)", args.mode))
        })?]
    };
    if args.sigma_n2.is_empty() {
        return Err(Failure::Usage("at least one --sigma-n2 is required".into()));
    }
    if args.z_steps == 0 {
        return Err(Failure::Usage("--z-steps must be at least 1".into()));
    }
    if args.z_min.is_nan() || args.z_max.is_nan() || args.z_min > args.z_max {
        return Err(Failure::Usage("--z-min must not exceed --z-max".into()));
    }
    let nonzero = args.alphabet.iter().filter(|&&a| a != 0.0).count();
    let p0 = 1.0 - args.p1 * nonzero as f64;
    let probs = args.alphabet.iter().map(|&a| if a == 0.0 { p0 } else { args.p1 }).collect();
    let prior = DiscreteSparsePrior::new(args.alphabet.clone(), probs)?;
    let guard = if args.no_clamp { GuardConfig::unclamped() } else { GuardConfig::default() };
    let grid = linear_grid(args.z_min, args.z_max, args.z_steps);

    let mut m = Manifest::new("curves");
    m.push("sigma_n2", join(&args.sigma_n2));
    m.push("p1", args.p1);
    m.push("alphabet", join(&args.alphabet));
    m.push("z_min", args.z_min);
    m.push("z_max", args.z_max);
    m.push("z_steps", args.z_steps);
    m.push("mode", &args.mode);
    m.push("clamp", !args.no_clamp);

    let mut body = String::from("z,mode,sigma_n2,soft_value,error_variance\n");
    for &s2 in &args.sigma_n2 {
        for &mode in &modes {
            for p in characteristic_curve(&prior, s2, &grid, mode, &guard)? {
                let _ = writeln!(body, "{},{},{},{},{}", p.z, mode, s2, p.value, p.variance);
            }
        }
    }
    let mut text = String::new();
    m.render(&mut text);
    text.push_str(&body);
    Ok(Report { text, complete: true })
}

fn campaign_params(c: &CampaignArgs) -> Result<SweepParams, Failure> {
    if c.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    Ok(SweepParams {
        k: c.k,
        l: c.l,
        s: c.s,
        iterations: c.iterations,
        ..SweepParams::default()
    })
}

fn campaign_manifest(sub: &str, c: &CampaignArgs, p: &SweepParams) -> Manifest {
    let mut m = Manifest::new(sub);
    m.push("variants", join(&c.variants));
    m.push("L", p.l);
    m.push("K", p.k);
    m.push("s", p.s);
    m.push("nonzero_alphabet", join(&p.nonzero_alphabet));
    m.push("iterations", p.iterations);
    m.push("seed", c.seed);
    m.push("seed_rule", SEED_RULE);
    m.push("workers", c.workers);
    m
}

fn snr_grid(args: &SweepArgs) -> Result<Vec<f64>, Failure> {
    if let Some(v) = args.snr_db {
        return Ok(vec![v]);
    }
    let (lo, hi, step) = (args.snr_db_min, args.snr_db_max, args.snr_db_step);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || lo > hi {
        return Err(Failure::Usage("SNR grid needs finite min <= max and step > 0".into()));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

fn sweep(args: &SweepArgs) -> Result<Report, Failure> {
    let c = &args.campaign;
    let params = campaign_params(c)?;
    let grid = snr_grid(args)?;
    let res = run_sweep(&c.variants, &grid, c.trials, &params, c.seed, c.workers)?;

    let mut m = campaign_manifest("sweep", c, &params);
    match args.snr_db {
        Some(v) => m.push("snr_db", v),
        None => {
            m.push("snr_db_min", args.snr_db_min);
            m.push("snr_db_max", args.snr_db_max);
            m.push("snr_db_step", args.snr_db_step);
        }
    }
    m.push("snr_grid", join(&grid));
    m.push("trials_requested", c.trials);
    m.push(
        "trials_completed",
        join(&res.points.iter().map(|p| format!("{}@{}={}", p.variant, p.snr_db, p.trials)).collect::<Vec<_>>()),
    );
    m.push("trials_failed", res.failures());

    let mut text = String::new();
    m.render(&mut text);
    text.push_str("variant,snr_db,trials,symbol_errors,ser\n");
    for p in &res.points {
        let _ = writeln!(text, "{},{},{},{},{}", p.variant, p.snr_db, p.trials, p.symbol_errors, p.ser);
    }
    Ok(Report { text, complete: res.failures() == 0 })
}

fn convergence(args: &ConvergenceArgs) -> Result<Report, Failure> {
    let c = &args.campaign;
    let params = campaign_params(c)?;
    let res = run_convergence(&c.variants, args.snr_db, c.trials, &params, c.seed, c.workers)?;
    let failed: usize = res.curves.iter().map(|cv| cv.failed).sum();

    let mut m = campaign_manifest("convergence", c, &params);
    m.push("snr_db", args.snr_db);
    m.push("trials_requested", c.trials);
    m.push(
        "trials_completed",
        join(&res.curves.iter().map(|cv| format!("{}={}", cv.variant, cv.trials)).collect::<Vec<_>>()),
    );
    m.push("trials_failed", failed);

    let mut text = String::new();
    m.render(&mut text);
    text.push_str("variant,iteration,mean_ser\n");
    for cv in &res.curves {
        for (i, ser) in cv.mean_ser.iter().enumerate() {
            let _ = writeln!(text, "{},{},{}", cv.variant, i + 1, ser);
        }
    }
    Ok(Report { text, complete: failed == 0 })
}

fn emit(text: &str, out: Option<&PathBuf>) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match &cli.command {
        Command::Curves(a) => (curves(a), a.out.as_ref()),
        Command::Sweep(a) => (sweep(a), a.campaign.out.as_ref()),
        Command::Convergence(a) => (convergence(a), a.campaign.out.as_ref()),
    };
    match result {
        Ok(report) => {
            if let Err(e) = emit(&report.text, out) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::FAILURE;
            }
            if report.complete {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: some trials failed; see trials_failed in the header");
                ExitCode::from(EXIT_INCOMPLETE)
            }
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
