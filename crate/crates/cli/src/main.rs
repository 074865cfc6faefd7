use std::io::{stderr, stdout};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cbf_shield::commands::{self, EXIT_ERROR, EXIT_OK};
use cbf_shield::sim::ScenarioConfig;
use cbf_shield_teleop::{TeleopOptions, TeleopServer, DEFAULT_BIND};

/// Safety-filter simulator, benchmark, log replay and teleop service.
///
/// Exit codes: 0 success, 1 configuration or input error, 2 collision,
/// 3 replay divergence. `CBF_SHIELD_THREADS` is reserved and ignored.
#[derive(Parser)]
#[command(name = "cbf-shield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write run.csv, summary.json, config.json and obstacles.bin.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config value, e.g. `cbf_params.kappa=35` or `filter.enabled=false`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Time the CBF evaluation and closed-form filter against obstacle count.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
    },
    /// Recompute h and a* over a logged run and report divergence.
    Replay {
        /// Run directory or its run.csv.
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Serve the simulation to a WebSocket operator until interrupted.
    Serve {
        /// Scenario with an external velocity reference.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = DEFAULT_BIND)]
        bind: SocketAddr,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        #[arg(long, default_value_t = 3.0)]
        max_speed: f64,
        /// Wait for a `start` action before stepping.
        #[arg(long)]
        paused: bool,
    },
}

fn serve(config: PathBuf, bind: SocketAddr, overrides: Vec<String>, opts: TeleopOptions) -> i32 {
    let cfg = match ScenarioConfig::load(&config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    runtime.block_on(async move {
        let server = match TeleopServer::spawn(cfg, opts, bind).await {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
        };
        println!("{}", server.url());
        let _ = tokio::signal::ctrl_c().await;
        server.shutdown().await;
        EXIT_OK
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if std::env::var_os("CBF_SHIELD_THREADS").is_some() {
        log::debug!("CBF_SHIELD_THREADS is ignored");
    }
    let (mut out, mut err) = (stdout(), stderr());
    let code = match Cli::parse().command {
        Command::Run {
            config,
            out: dir,
            overrides,
        } => commands::run(&config, &dir, &overrides, &mut out, &mut err),
        Command::Bench { n, reps } => commands::bench(&n, reps, &mut out, &mut err),
        Command::Replay { log, overrides } => {
            commands::replay_log(&log, &overrides, &mut out, &mut err)
        }
        Command::Serve {
            config,
            bind,
            overrides,
            time_scale,
            max_speed,
            paused,
        } => serve(
            config,
            bind,
            overrides,
            TeleopOptions {
                time_scale,
                max_speed,
                start_paused: paused,
                ..Default::default()
            },
        ),
    };
    ExitCode::from(code as u8)
}
