use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use permahom::config::{parse_config, Stage};
use permahom::dns_thin::Comparison;
use permahom::pipeline::{compare_dirs, read_k, run_stages, RunManifest};
use permahom::{Error, Result};

/// Homogenized permeability of thin perforated domains.
#[derive(Parser)]
#[command(name = "permahom", version)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (for `compare` with `--dns`/`--darcy`, the report file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Lift the DNS unknown-count cap.
    #[arg(long, global = true)]
    override_grid_cap: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the two cell problems.
    Cell,
    /// Assemble K from the cell outputs.
    K,
    /// Solve the homogenized Darcy problem.
    Darcy,
    /// Direct Stokes simulation of the thin domain.
    Dns,
    /// Compare DNS column averages with Darcy.
    Compare {
        /// DNS run directory or a directory of `run_*` directories.
        #[arg(long, requires = "darcy")]
        dns: Option<PathBuf>,
        /// Darcy run directory or a directory of `run_*` directories.
        #[arg(long, requires = "dns")]
        darcy: Option<PathBuf>,
    },
    /// Check the unfolding norm identities on random fields.
    VerifyUnfold,
    /// Run the stages listed in the configuration.
    Pipeline,
}

fn init_logging() {
    let level = std::env::var("PERMAHOM_LOG").unwrap_or_else(|_| "error".into());
    let level = match level.to_ascii_lowercase().as_str() {
        "debug" => log::LevelFilter::Debug,
        "info" => log::LevelFilter::Info,
        _ => log::LevelFilter::Error,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn usage(key: &str, message: &str) -> Error {
    Error::Validation {
        key: key.into(),
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("{e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Compare {
        dns: Some(dns),
        darcy: Some(darcy),
    } = &cli.command
    {
        let report = cli.out.clone().unwrap_or_else(|| PathBuf::from("report.csv"));
        let outcome = compare_dirs(dns, darcy, &report)?;
        print_comparisons(&outcome.comparisons);
        return match outcome.audit_passed {
            Some(false) => Err(Error::CheckFailed {
                check: "scaling_audit".into(),
                message: "scaled norms change by a factor of two or more".into(),
            }),
            _ => Ok(()),
        };
    }

    let config = cli.config.as_ref().ok_or_else(|| usage("--config", "required"))?;
    let out = cli.out.as_ref().ok_or_else(|| usage("--out", "required"))?;
    let mut cfg = parse_config(config)?;
    if cli.override_grid_cap {
        cfg.grid_cap = None;
    }
    let bytes = std::fs::read(config)?;
    let stages = match cli.command {
        Command::Cell => vec![Stage::Cell],
        Command::K => vec![Stage::K],
        Command::Darcy => vec![Stage::Darcy],
        Command::Dns => vec![Stage::Dns],
        Command::Compare { .. } => vec![Stage::Compare],
        Command::VerifyUnfold => vec![Stage::VerifyUnfold],
        Command::Pipeline => cfg.stages.clone(),
    };
    let result = run_stages(&cfg, &bytes, out, &stages);
    if let Ok(m) = result.as_ref().map(Clone::clone).or_else(|_| RunManifest::load(out)) {
        for s in &m.stages {
            if stages.iter().any(|st| st.name() == s.name) {
                println!("{:<14} {:<7} {:>9.2} s", s.name, s.status, s.seconds);
            }
        }
    }
    result?;
    if stages.contains(&Stage::K) {
        print_k(out)?;
    }
    if stages.contains(&Stage::Compare) {
        let report = permahom::io::read_csv(&out.join("compare").join("report.csv"))?;
        for r in 0..report.rows.len() {
            println!(
                "a_eps = {:<8} rel_err_velocity = {:<12} u3_ratio = {}",
                report.str_at(r, "a_eps")?,
                report.str_at(r, "rel_err_velocity")?,
                report.str_at(r, "u3_ratio")?
            );
        }
    }
    Ok(())
}

fn print_k(out: &Path) -> Result<()> {
    let k = read_k(&out.join("k").join("K.csv"))?;
    println!("K     = [[{:e}, {:e}], [{:e}, {:e}]]", k.k[0][0], k.k[0][1], k.k[1][0], k.k[1][1]);
    println!(
        "K_alt = [[{:e}, {:e}], [{:e}, {:e}]]",
        k.k_alt[0][0], k.k_alt[0][1], k.k_alt[1][0], k.k_alt[1][1]
    );
    Ok(())
}

fn print_comparisons(cmps: &[Comparison]) {
    for c in cmps {
        match c {
            Comparison::Report(r) => println!(
                "a_eps = {:<8} rel_err_velocity = {:<12.4e} u3_ratio = {:.4e}",
                r.a_eps, r.rel_err_velocity, r.u3_ratio
            ),
            Comparison::NotApplicable => println!("no obstacles: comparison not applicable"),
        }
    }
}
