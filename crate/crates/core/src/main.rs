use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fracinv::experiments::{run_experiment, dump_debug_artifacts, ExperimentConfig, ExperimentKind, GammaPolicy, RawConfig};
use fracinv::{Error, Result};

/// Run the fractional diffusion experiments and write CSV results.
#[derive(Debug, Parser)]
#[command(name = "fracinv", version)]
struct Cli {
    /// convergence_table, example_5_1, example_5_2, example_5_3, example_5_4 or illposedness
    experiment: String,
    /// Caputo order in (0, 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Fractional Laplacian order in (0, 1)
    #[arg(long)]
    s: Option<f64>,
    /// Number of mesh intervals on [-1, 1]
    #[arg(long)]
    n: Option<usize>,
    /// Number of time steps
    #[arg(long)]
    k: Option<usize>,
    /// Final time
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Comma-separated relative noise levels
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// zero, paper_formula (1e-2 * theta^0.8), or an explicit non-negative value
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with flat keys; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// CSV of x,value samples to use as the initial value
    #[arg(long)]
    target: Option<PathBuf>,
    /// Noise level used for stopping and gamma instead of the measured one
    #[arg(long)]
    theta: Option<f64>,
    /// Also write the stiffness and mass matrices
    #[arg(long)]
    dump_matrices: bool,
    /// Also write the forward trajectory of the experiment's target
    #[arg(long)]
    dump_trajectory: bool,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let file = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    let flags = RawConfig {
        experiment: Some(cli.experiment.parse::<ExperimentKind>()?),
        alpha: cli.alpha,
        s: cli.s,
        n: cli.n,
        k: cli.k,
        t: cli.t_final,
        mu_list: cli.mu.clone(),
        seed: cli.seed,
        gamma_policy: cli.gamma.as_deref().map(str::parse::<GammaPolicy>).transpose()?,
        output_dir: cli.out.clone(),
        sigma: None,
        eta: None,
        max_iter: cli.max_iter,
        target_csv: cli.target.clone(),
        theta: cli.theta,
    };
    ExperimentConfig::resolve(file.merge(flags))
}

fn run(cli: &Cli) -> Result<usize> {
    let config = resolve(cli)?;
    if cli.dump_matrices || cli.dump_trajectory {
        for path in dump_debug_artifacts(&config, cli.dump_matrices, cli.dump_trajectory)? {
            println!("wrote {}", path.display());
        }
    }
    let summary = run_experiment(&config)?;
    for line in &summary.lines {
        println!("{line}");
    }
    println!("results in {}", summary.output.display());
    Ok(summary.failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("error kind=partial_failure failed_cells={failures}");
            ExitCode::from(1)
        }
        Err(e) => {
            report(&e);
            ExitCode::from(2)
        }
    }
}

fn report(e: &Error) {
    let message = e.to_string().replace('\n', " ");
    eprintln!("error kind={} message=\"{}\"", e.kind(), message.replace('"', "'"));
}
