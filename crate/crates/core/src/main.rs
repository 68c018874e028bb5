use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use resdep::bias::KStarRule;
use resdep::estimators::Margin;
use resdep::ingest::{default_na_tokens, ingest, DateFilter, IngestionSpec, DATE_FORMAT};
use resdep::oracle::check_identities;
use resdep::pseudo::{PseudoSample, TiePolicy};
use resdep::sim::{run_study, run_study_with_threads, ReportFormat, StudyConfig};
use resdep::workflow::{estimate_paths, second_order_for, write_estimate_csv, EstimateOptions, SecondOrderChoice};
use resdep::{Error, Result};

/// Residual dependence index estimation and simulation.
#[derive(Debug, Parser)]
#[command(name = "resdep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo study described by a TOML config.
    Simulate(SimulateArgs),
    /// Estimate paths k -> eta(k) with confidence intervals from a CSV file.
    Estimate(EstimateArgs),
    /// Estimate the second-order parameters (tau, beta) of a CSV sample.
    SecondOrder(SecondOrderArgs),
    /// Check the exact identities on a random sample.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file; `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TieArg {
    First,
    Strict,
    Jitter,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MarginArg {
    FrechetShifted,
    FrechetUnshifted,
    ParetoT,
}

impl From<MarginArg> for Margin {
    fn from(m: MarginArg) -> Self {
        match m {
            MarginArg::FrechetShifted => Margin::FrechetShifted,
            MarginArg::FrechetUnshifted => Margin::FrechetUnshifted,
            MarginArg::ParetoT => Margin::ParetoT,
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "x")]
    x: String,
    #[arg(long, default_value = "y")]
    y: String,
    /// Date column (YYYY-MM-DD), needed for --months/--from/--to.
    #[arg(long)]
    date_col: Option<String>,
    /// Keep only these calendar months, e.g. 4,5,6.
    #[arg(long, value_delimiter = ',')]
    months: Vec<u32>,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    /// Marginal quantile both values must exceed (0 disables).
    #[arg(long, default_value_t = 0.9)]
    quantile: f64,
    /// Rows with either value below this are dropped.
    #[arg(long, default_value_t = 1.0)]
    dry: f64,
    /// Keep rows where either value exceeds its quantile.
    #[arg(long)]
    either: bool,
    /// Missing-value tokens (default: empty, NA, N/A, NaN, nan, -, null).
    #[arg(long, value_delimiter = ',')]
    na: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "first")]
    ties: TieArg,
    #[arg(long, default_value_t = 0)]
    jitter_seed: u64,
}

impl DataArgs {
    fn spec(&self) -> Result<IngestionSpec> {
        let parse_date = |s: &Option<String>| -> Result<Option<NaiveDate>> {
            s.as_deref()
                .map(|d| {
                    NaiveDate::parse_from_str(d, DATE_FORMAT)
                        .map_err(|_| Error::Config(format!("date '{d}' does not match {DATE_FORMAT}")))
                })
                .transpose()
        };
        let filter = DateFilter {
            months: self.months.clone(),
            from: parse_date(&self.from)?,
            to: parse_date(&self.to)?,
        };
        let date_filter = (filter != DateFilter::default()).then_some(filter);
        Ok(IngestionSpec {
            date_column: self.date_col.clone(),
            na_tokens: self.na.clone().unwrap_or_else(default_na_tokens),
            dry_threshold: self.dry,
            quantile_filter: self.quantile,
            date_filter,
            either: self.either,
            ..IngestionSpec::new(&self.data, &self.x, &self.y)
        })
    }

    fn tie_policy(&self) -> TiePolicy {
        match self.ties {
            TieArg::First => TiePolicy::FirstOccurrence,
            TieArg::Strict => TiePolicy::Strict,
            TieArg::Jitter => TiePolicy::Jitter { seed: self.jitter_seed },
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated q values; q = 1 (Hill) is always included.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5])]
    q: Vec<f64>,
    /// Largest k/n on the path.
    #[arg(long, default_value_t = 0.3)]
    k_max: f64,
    #[arg(long, value_enum, default_value = "frechet-shifted")]
    margin: MarginArg,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    reduce_bias: bool,
    /// k* rule: pow<p>, sqrtk or a fixed integer.
    #[arg(long, default_value = "pow0.3")]
    kstar: String,
    /// User-supplied tau for the bias correction (requires --beta).
    #[arg(long, requires = "beta")]
    tau: Option<f64>,
    #[arg(long, requires = "tau")]
    beta: Option<f64>,
    /// Threshold for estimating tau and beta.
    #[arg(long)]
    k0: Option<usize>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SecondOrderArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k0: Option<usize>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_output(out: &Option<PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = StudyConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let report = match args.threads {
        Some(t) => run_study_with_threads(config, t)?,
        None => run_study(config)?,
    };
    match args.format {
        None => report.write_to(&args.out),
        Some(fmt) => {
            let format = match fmt {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Jsonl => ReportFormat::JsonLines,
            };
            write_output(&Some(args.out), |w| report.emit(format, w))
        }
    }?;
    let flagged = report.rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        eprintln!("warning: {flagged} cells failed in more than 10% of replicates");
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let (sample, counts) = ingest(&args.data.spec()?)?;
    eprintln!(
        "read {} rows, retained {} (missing {}, out of dates {}, dry {}, below quantile {})",
        counts.read, counts.retained, counts.missing, counts.out_of_dates, counts.dry, counts.below_quantile
    );
    let second_order = match (args.tau, args.beta) {
        (Some(tau), Some(beta)) => SecondOrderChoice::UserSupplied { tau, beta },
        _ => SecondOrderChoice::Estimate { k0: args.k0 },
    };
    let opts = EstimateOptions {
        q_list: args.q,
        k_max_fraction: args.k_max,
        margin: args.margin.into(),
        level: args.level,
        reduce_bias: args.reduce_bias,
        kstar_rule: args.kstar.parse::<KStarRule>()?,
        second_order,
        tie_policy: args.data.tie_policy(),
    };
    let rows = estimate_paths(&sample, &opts)?;
    write_output(&args.out, |w| write_estimate_csv(&rows, w))
}

fn second_order(args: SecondOrderArgs) -> Result<()> {
    let (sample, _) = ingest(&args.data.spec()?)?;
    let pseudo = PseudoSample::new(&sample, args.data.tie_policy())?;
    let so = second_order_for(&pseudo, SecondOrderChoice::Estimate { k0: args.k0 })?;
    println!("n,k0,tau_hat,beta_hat");
    println!("{},{},{},{}", pseudo.n(), so.k0, so.tau_hat, so.beta_hat);
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let r = check_identities(args.n, args.seed)?;
    println!(
        "joint exceedance counts: {} levels, {} mismatches",
        r.count_checks, r.count_mismatches
    );
    println!(
        "tail functional vs naive loop: {} evaluations, max relative error {:e}",
        r.functional_checks, r.max_functional_error
    );
    if r.holds(1e-12) {
        println!("all identities hold");
        Ok(())
    } else {
        Err(Error::Domain("identity check failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::SecondOrder(a) => second_order(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
