//! `alt-planner`: run simulation studies, check study configs, and serve the
//! advisor.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use alt_planner_advisor::ServeOptions;
use alt_planner_core::harness::{run_study, write_outputs, StudyConfig};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "alt-planner",
    version,
    about = "Sequential planning of accelerated life tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation study and write pcs.csv, traces.csv and meta.csv.
    Study {
        /// Study config (TOML, or JSON with a .json extension).
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a study config and print the resolved settings.
    ValidateConfig { file: PathBuf },
    /// Start the advisor HTTP service.
    Serve {
        #[arg(long, env = "ALT_PLANNER_DATA_DIR", default_value = "alt-planner-data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        /// Directory with the web UI bundle, served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Study {
            config,
            out,
            threads,
            seed,
        } => {
            let mut cfg = StudyConfig::from_path(&config).map_err(|e| e.to_string())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| e.to_string())?;
            let result = pool
                .install(|| run_study(&cfg))
                .map_err(|e| e.to_string())?;
            write_outputs(&result, &out).map_err(|e| e.to_string())?;
            for m in &result.methods {
                println!(
                    "{:<22} {:<12} final PCS {:.3} ± {:.3}  censored {:.3}",
                    m.method.policy.label(),
                    m.method.track.label(),
                    m.pcs.last().copied().unwrap_or(f64::NAN),
                    m.stderr.last().copied().unwrap_or(f64::NAN),
                    m.censoring_rate,
                );
            }
            println!("wrote {} in {:.2}s", out.display(), result.wall_seconds);
            Ok(())
        }
        Command::ValidateConfig { file } => {
            let cfg = StudyConfig::from_path(&file).map_err(|e| e.to_string())?;
            let cands = cfg.candidates().map_err(|e| e.to_string())?;
            println!("ok: {}", file.display());
            println!(
                "K={} d={} lab settings={} parameters={} signal/std={} replications={} n_steps={} methods={}",
                cfg.k,
                cfg.d,
                cands.m(),
                cands.feature_dim(),
                cfg.signal_to_std(),
                cfg.replications,
                cfg.n_steps,
                cfg.methods.len()
            );
            Ok(())
        }
        Command::Serve {
            data_dir,
            port,
            host,
            static_dir,
        } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime
                .block_on(alt_planner_advisor::serve(ServeOptions {
                    data_dir,
                    addr: SocketAddr::new(host, port),
                    static_dir,
                }))
                .map_err(|e| e.to_string())
        }
    }
}
