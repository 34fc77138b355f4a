use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypercd::cd_algebra::{format_table, MAX_LEVEL};
use hypercd_cli::pipeline::run_file;
use hypercd_cli::{init_threads, selftest_suites};

/// Cayley-Dickson dressing-method scenarios and invariant checks.
///
/// Set HYPERCD_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "hypercd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario of a TOML configuration and write CSV and JSON reports.
    Run { config: PathBuf },
    /// Run the algebra, operator and line-integral invariant suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append a failing suite (exercises the failure exit status).
        #[arg(long)]
        force_fail: bool,
    },
    /// Print the basis multiplication table of A_r.
    Table { r: u32 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(4);
    }
    match cli.command {
        Command::Run { config } => match run_file(&config) {
            Ok((report, csv, json)) => {
                for r in &report.residuals {
                    let order = match (r.exact, r.order_est) {
                        (true, _) => "exact".to_string(),
                        (false, Some(o)) => format!("{o:.2}"),
                        (false, None) => "-".to_string(),
                    };
                    println!(
                        "{:<18} h={:<8} Linf={:.3e} L2={:.3e} order={order}",
                        r.equation_id, r.h, r.res_linf, r.res_l2
                    );
                }
                println!("wrote {} and {}", csv.display(), json.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Selftest { seed, force_fail } => {
            let suites = selftest_suites(seed, force_fail);
            let mut all_ok = true;
            for s in &suites {
                let status = if s.ok() { "ok  " } else { "FAIL" };
                println!("{status} {:<40} {}/{}", s.name, s.passed, s.total);
                for n in &s.notes {
                    println!("       {n}");
                }
                all_ok &= s.ok();
            }
            if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Table { r } => {
            if r > MAX_LEVEL {
                eprintln!("error: r must be at most {MAX_LEVEL}");
                return ExitCode::from(4);
            }
            print!("{}", format_table(r));
            ExitCode::SUCCESS
        }
    }
}
