use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use decopt::algorithms::{dmbfgs_stepsize_bound, ndcg_stepsize_bound, AlgoParams, AlgorithmKind};
use decopt::config::{load_config, ExperimentConfig};
use decopt::runner::{self, RunError, Termination, OUTPUT_DIR_ENV};
use decopt::topology::validate_mixing_matrix;

const EXIT_DIVERGED: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "decopt", version, about = "Decentralized optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metric trace.
    Run { config: PathBuf },
    /// Run several experiments on a shared problem and network.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
    },
    /// Check a config and the network it generates without running.
    Validate { config: PathBuf },
    /// Print the theoretical maximum stepsize.
    Bound {
        algo: AlgorithmKind,
        #[arg(long = "L")]
        l_smooth: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        n: usize,
        #[arg(long = "l", default_value_t = AlgoParams::default().l)]
        lower: f64,
        #[arg(long = "u", default_value_t = AlgoParams::default().u)]
        upper: f64,
    },
}

fn exit_code(err: &RunError) -> u8 {
    match err {
        RunError::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig, (u8, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (EXIT_IO, format!("{}: {e}", path.display())))?;
    load_config(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.6e}"))
}

fn cmd_run(path: &Path) -> Result<u8, (u8, String)> {
    let config = read_config(path)?;
    let result = runner::run(&config).map_err(|e| (exit_code(&e), e.to_string()))?;
    let last = result.final_row();
    println!("algorithm      {}", result.label);
    println!("alpha          {:e}", result.alpha);
    println!("sigma          {:.6}", result.sigma);
    println!("edges          {}", result.edges);
    println!("L, mu          {:e}, {:e}", result.l, result.mu);
    println!("termination    {:?}", result.termination);
    println!("iterations     {}", result.iterations);
    println!("comm_volume    {}", last.comm_volume);
    println!("optimality     {}", fmt_opt(last.optimality_error));
    println!("relative       {}", fmt_opt(last.relative_error));
    if let Some(p) = &result.csv_path {
        println!("trace          {}", p.display());
    }
    if let Some(report) = &result.report {
        println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
    }
    Ok(match result.termination {
        Termination::Divergence => EXIT_DIVERGED,
        _ => 0,
    })
}

fn cmd_compare(paths: &[PathBuf]) -> Result<u8, (u8, String)> {
    let configs = paths.iter().map(|p| read_config(p)).collect::<Result<Vec<_>, _>>()?;
    let cmp = runner::compare(&configs).map_err(|e| (exit_code(&e), e.to_string()))?;
    print!("{}", cmp.table());
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from) {
        let path = dir.join("comparison.csv");
        let io = |e: std::io::Error| (EXIT_IO, format!("{}: {e}", path.display()));
        std::fs::create_dir_all(&dir).map_err(io)?;
        let file = std::fs::File::create(&path).map_err(io)?;
        cmp.write_aligned_csv(std::io::BufWriter::new(file)).map_err(io)?;
        println!("traces written to {}", path.display());
    }
    let diverged = cmp.rows.iter().any(|r| r.termination == Termination::Divergence);
    Ok(if diverged { EXIT_DIVERGED } else { 0 })
}

fn cmd_validate(path: &Path) -> Result<u8, (u8, String)> {
    let mut config = read_config(path)?;
    config.run.compute_z_star = false;
    let instance = runner::build_instance(&config).map_err(|e| (exit_code(&e), e.to_string()))?;
    let report = validate_mixing_matrix(instance.mixing.weights(), &instance.graph);
    let c = instance.smoothness();
    println!("config         ok");
    println!("nodes          {}", instance.graph.node_count());
    println!("edges          {}", instance.graph.edge_count());
    println!("sigma          {}", fmt_opt(report.sigma));
    println!("mixing valid   {}", report.passed());
    println!("L, mu          {:e}, {:e}", c.l, c.mu);
    if config.algorithm.auto_alpha {
        let alpha = runner::theoretical_alpha(config.algorithm.name, &instance, config.algorithm.l, config.algorithm.u)
            .map_err(|e| (exit_code(&e), e.to_string()))?;
        println!("alpha (bound)  {alpha:e}");
    }
    Ok(if report.passed() { 0 } else { EXIT_CONFIG })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(algo: AlgorithmKind, l: f64, mu: f64, sigma: f64, n: usize, lower: f64, upper: f64) -> Result<u8, (u8, String)> {
    if !(l > 0.0) || !(0.0..1.0).contains(&sigma) || n == 0 {
        return Err((EXIT_CONFIG, "need L > 0, sigma in [0, 1) and n >= 1".into()));
    }
    let alpha = match algo {
        AlgorithmKind::Ndcg => ndcg_stepsize_bound(l, sigma, n),
        AlgorithmKind::Dmbfgs => {
            dmbfgs_stepsize_bound(l, mu, sigma, lower, upper).map_err(|e| (EXIT_CONFIG, e.to_string()))?
        }
        other => return Err((EXIT_CONFIG, format!("no theoretical stepsize for {other}"))),
    };
    println!("{alpha:e}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Compare { configs } => cmd_compare(configs),
        Command::Validate { config } => cmd_validate(config),
        Command::Bound {
            algo,
            l_smooth,
            mu,
            sigma,
            n,
            lower,
            upper,
        } => cmd_bound(*algo, *l_smooth, *mu, *sigma, *n, *lower, *upper),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
