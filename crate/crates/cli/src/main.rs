use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vmem_lt::bootstrap::{BootstrapConfig, StatisticSpec, TestSpec};
use vmem_lt::estimation::FitOptions;
use vmem_lt::lt_test::{Aggregation, GammaWeight};
use vmem_lt::vmem::DEFAULT_BURN_IN;
use vmem_lt_cli::config::load_config;
use vmem_lt_cli::figures::{emit_figure_data, parse_figure_spec, write_figure_csv};
use vmem_lt_cli::single::{render_human, render_kv, run_single_test};
use vmem_lt_cli::study::{read_study_csv, run_study, write_study_csv};

/// Laplace-transform specification tests for vector multiplicative error models.
///
/// Set VMEMLT_WORKERS to fix the number of worker threads; RUST_LOG=info
/// shows progress.
#[derive(Parser)]
#[command(name = "vmemlt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo size and power studies.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Fit a vMEM to a series and test its innovation law.
    Test(TestArgs),
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Run every cell of a study config and write the result table.
    Run {
        config: PathBuf,
        /// Result table; overrides `output` in the config. Without either,
        /// the table goes to stdout and no ledger is kept.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cell ledger; defaults to `<out>.ledger`.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Cut power-curve data out of a study table.
    Figures {
        table: PathBuf,
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    #[value(name = "S")]
    S,
    #[value(name = "psi-mean")]
    PsiMean,
    #[value(name = "psi-max")]
    PsiMax,
}

#[derive(Args)]
struct TestArgs {
    /// CSV with header `t,x1,...,xd` and strictly positive entries.
    series: PathBuf,
    /// vMEM order `p,q`.
    #[arg(long, default_value = "1,1", value_parser = parse_order)]
    order: (usize, usize),
    /// Estimate full `B` matrices instead of diagonal ones.
    #[arg(long)]
    full_b: bool,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "S")]
    statistic: StatisticArg,
    /// Artificial samples for the `psi` statistics.
    #[arg(long = "M", default_value_t = 10)]
    m: usize,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Print `key=value` lines instead of the summary.
    #[arg(long)]
    kv: bool,
    /// Also write the `key=value` record to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_order(s: &str) -> Result<(usize, usize), String> {
    let (p, q) = s.split_once(',').ok_or("expected `p,q`")?;
    let p = p.trim().parse().map_err(|_| format!("bad p in `{s}`"))?;
    let q = q.trim().parse().map_err(|_| format!("bad q in `{s}`"))?;
    Ok((p, q))
}

fn configure_workers() -> Result<(), String> {
    let Ok(v) = std::env::var("VMEMLT_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or(format!("VMEMLT_WORKERS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn write_output(path: Option<&Path>, text: &[u8]) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text),
    }
}

fn study_run(config: &Path, out: Option<PathBuf>, ledger: Option<PathBuf>) -> ExitCode {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let out = out.or_else(|| cfg.output.clone());
    let ledger = ledger.or_else(|| {
        out.as_ref().map(|o| {
            let mut name = o.as_os_str().to_owned();
            name.push(".ledger");
            PathBuf::from(name)
        })
    });
    let outcome = match run_study(&cfg, ledger.as_deref()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut buf = Vec::new();
    if let Err(e) = write_study_csv(&outcome.rows, &mut buf).map_err(|e| e.to_string()).and_then(|_| {
        write_output(out.as_deref(), &buf).map_err(|e| e.to_string())
    }) {
        eprintln!("error: writing table: {e}");
        return ExitCode::FAILURE;
    }
    log::info!("{} cells, {} from the ledger", outcome.rows.len(), outcome.reused);
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("failed cell {}: {}", f.cell, f.message);
        }
        ExitCode::FAILURE
    }
}

fn study_figures(table: &Path, spec: &Path, out: Option<&Path>) -> ExitCode {
    let result = (|| -> vmem_lt::Result<Vec<u8>> {
        let rows = read_study_csv(std::fs::File::open(table)?)?;
        let spec = parse_figure_spec(&std::fs::read_to_string(spec)?)?;
        let points = emit_figure_data(&rows, &spec)?;
        let mut buf = Vec::new();
        write_figure_csv(&points, &mut buf)?;
        Ok(buf)
    })();
    match result.and_then(|buf| Ok(write_output(out, &buf)?)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(vmem_lt::Error::MissingCells(keys)) => {
            eprintln!("error: {} cells missing from {}:", keys.len(), table.display());
            for k in keys {
                eprintln!("  {k}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn test(args: &TestArgs) -> ExitCode {
    let weight = match GammaWeight::new(args.kappa, args.gamma) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let statistic = match args.statistic {
        StatisticArg::S => StatisticSpec::S,
        StatisticArg::PsiMean => StatisticSpec::Psi { mode: Aggregation::Mean, m: args.m },
        StatisticArg::PsiMax => StatisticSpec::Psi { mode: Aggregation::Max, m: args.m },
    };
    let test = TestSpec { statistic, weight };
    let cfg = BootstrapConfig {
        replicates: args.b,
        burn_in: args.burn_in,
        m: statistic.m(),
        seed: args.seed,
    };
    let opts = FitOptions {
        order: args.order,
        b_diagonal: !args.full_b,
        ..FitOptions::default()
    };
    let outcome = match run_single_test(&args.series, &opts, &test, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", args.series.display());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let kv = render_kv(&outcome, &test, &cfg);
    if args.kv {
        print!("{kv}");
    } else {
        print!("{}", render_human(&outcome, &test, &cfg));
    }
    if let Some(path) = &args.out {
        if let Err(e) = std::fs::write(path, &kv) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Study(StudyCommand::Run { config, out, ledger }) => study_run(&config, out, ledger),
        Command::Study(StudyCommand::Figures { table, spec, out }) => study_figures(&table, &spec, out.as_deref()),
        Command::Test(args) => test(&args),
    }
}
