use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mirrorfree_harness::runner::write_antilip_csv;
use mirrorfree_harness::trace::fmt_real;
use mirrorfree_harness::{
    antilip_table, certify_experiment, default_suite, exit_code, parse_seeds, run_experiment, write_plotdata,
    ExperimentConfig, HarnessError, Result, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(name = "mfmp", version, about = "Mirror-free mirror prox experiment runner")]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file; may be repeated.
    #[arg(long = "config", value_name = "FILE")]
    configs: Vec<PathBuf>,

    /// Use the built-in default suite instead of config files.
    #[arg(long, conflicts_with = "configs")]
    default_suite: bool,

    /// Output root.
    #[arg(long, env = OUTPUT_ROOT_ENV, default_value = DEFAULT_OUTPUT_ROOT)]
    out: PathBuf,

    /// Seed list overriding the configs, e.g. `0,4,9` or `0..10`.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the algorithms and write traces and summaries.
    Run(ExperimentArgs),
    /// Check the relative constants and conservativeness of each instance.
    Certify(ExperimentArgs),
    /// Tabulate the anti-Lipschitz ratio against its closed form.
    Antilip {
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        e: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01")]
        theta: Vec<f64>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge the traces of a directory into one long-format table.
    Plotdata {
        dir: PathBuf,
        /// Defaults to `<dir>/plotdata.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_configs(args: &ExperimentArgs) -> Result<Vec<ExperimentConfig>> {
    let mut configs = if args.default_suite {
        default_suite()
    } else {
        if args.configs.is_empty() {
            return Err(HarnessError::InvalidInput("pass --config or --default-suite".into()));
        }
        args.configs
            .iter()
            .map(|p| ExperimentConfig::load(p))
            .collect::<Result<Vec<_>>>()?
    };
    if let Some(s) = &args.seeds {
        let seeds = parse_seeds(s)?;
        for c in &mut configs {
            c.run.seeds = seeds.clone();
        }
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

fn cmd_run(args: &ExperimentArgs, quiet: bool) -> Result<i32> {
    let configs = load_configs(args)?;
    let mut code = exit_code::OK;
    for cfg in &configs {
        let summary = run_experiment(cfg, &args.out)?;
        if !quiet {
            println!("{} ({}, K={})", summary.label, summary.algorithm, summary.iterations);
            for r in &summary.runs {
                println!(
                    "  seed {:>3}  {:<12} iters {:>5}  |F| {:>24}  checks {}",
                    r.seed,
                    format!("{:?}", r.status).to_lowercase(),
                    r.iterations_completed,
                    r.final_op_norm.map(fmt_real).unwrap_or_else(|| "-".into()),
                    if r.checks.passed() { "ok" } else { "FAILED" }
                );
            }
            println!("  -> {}", cfg.output_dir(&args.out).display());
        }
        if code == exit_code::OK {
            code = summary.exit_code();
        }
    }
    Ok(code)
}

fn cmd_certify(args: &ExperimentArgs, quiet: bool) -> Result<i32> {
    let configs = load_configs(args)?;
    for cfg in &configs {
        let summary = certify_experiment(cfg, &args.out)?;
        if quiet {
            continue;
        }
        println!("{}", summary.label);
        for s in &summary.seeds {
            let c = &s.certificates;
            let witness = |p: &[f64]| p.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
            println!(
                "  seed {:>3}  L {:.6e} {} (margin {:.3e})  m {:.6e} {} (margin {:.3e}){}",
                s.seed,
                c.l,
                if c.smoothness.holds { "holds" } else { "FAILS" },
                c.smoothness.worst_margin,
                c.m,
                if c.strong_monotonicity.holds { "holds" } else { "FAILS" },
                c.strong_monotonicity.worst_margin,
                if s.m_fallback { "  [m lowered]" } else { "" }
            );
            if !c.smoothness.holds {
                println!("      smoothness witness [{}]", witness(&c.smoothness.worst_point));
            }
            if !c.strong_monotonicity.holds {
                println!(
                    "      monotonicity witness [{}]",
                    witness(&c.strong_monotonicity.worst_point)
                );
            }
            println!(
                "      delta F {:.3e}  delta H {:.3e}  co-delta (F vs L*H) {:.3e}",
                s.delta_f, s.delta_h, s.co_delta
            );
        }
    }
    Ok(exit_code::OK)
}

fn cmd_antilip(b: f64, e: f64, thetas: &[f64], out: Option<&Path>, quiet: bool) -> Result<i32> {
    let rows = antilip_table(b, e, thetas)?;
    if !quiet {
        println!("{:>12} {:>24} {:>24} {:>12}", "theta", "ratio", "d(theta)", "rel. diff");
        for r in &rows {
            println!(
                "{:>12} {:>24} {:>24} {:>12.3e}",
                r.theta,
                fmt_real(r.ratio),
                fmt_real(r.closed_form),
                r.relative_difference
            );
        }
    }
    if let Some(path) = out {
        write_antilip_csv(path, &rows)?;
    }
    Ok(exit_code::OK)
}

fn cmd_plotdata(dir: &Path, out: Option<&Path>, quiet: bool) -> Result<i32> {
    if !dir.is_dir() {
        return Err(HarnessError::InvalidInput(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("plotdata.csv"));
    let n = write_plotdata(dir, &out)?;
    if !quiet {
        println!("{n} rows -> {}", out.display());
    }
    Ok(exit_code::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "warn"
    }))
    .init();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::Certify(args) => cmd_certify(args, cli.quiet),
        Command::Antilip { b, e, theta, out } => cmd_antilip(*b, *e, theta, out.as_deref(), cli.quiet),
        Command::Plotdata { dir, out } => cmd_plotdata(dir, out.as_deref(), cli.quiet),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
