use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cocycle::cli::{apply_overrides, parse_config, run_scenario};

#[derive(Parser)]
#[command(name = "cocycle", version, about = "Run cocycle experiments from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV results, plot scripts and summary.csv
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Multiplies every assertion tolerance
        #[arg(long)]
        tol_scale: Option<f64>,
    },
    /// Parse and validate a scenario, printing the resolved configuration
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config } => match parse_config(&config).and_then(|mut s| {
            s.resolve()?;
            s.to_toml()
        }) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Run {
            config,
            out,
            seed,
            threads,
            tol_scale,
        } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
                    eprintln!("warning: {e}");
                }
            }
            let outcome = parse_config(&config)
                .and_then(|mut s| apply_overrides(&mut s, out, seed, tol_scale).map(|_| s))
                .and_then(|s| run_scenario(&s));
            match outcome {
                Ok(o) => {
                    for a in &o.assertions {
                        println!(
                            "{:<5} {:<32} measured {:>13.6e}  tolerance {:>13.6e}",
                            if a.pass { "PASS" } else { "FAIL" },
                            a.name,
                            a.measured,
                            a.tolerance
                        );
                    }
                    if let Some(e) = &o.error {
                        eprintln!("error: {e}");
                    }
                    println!("results in {} (exit {})", o.out_dir.display(), o.exit_code);
                    o.exit_code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
