use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carleman_core::acceptance::{run_acceptance, AcceptOptions};
use carleman_core::io::manifest_summary;
use carleman_core::pipeline::{run_scenario_file, Overrides};
use carleman_core::scenario::Stage;

/// Exit status of `accept` when a criterion fails.
const ACCEPT_FAILED: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "carleman", version, about = "Carleman weights, transport solves and inverse-problem experiments")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, env = "CARLEMAN_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Positivity, spd, structure factor and dissipativity of the coefficients.
    Check(RunArgs),
    /// phi0, its gradient and the weight constants.
    Weight(RunArgs),
    /// Forward solve with traces and energy.
    Solve(RunArgs),
    /// s-sweep of the weighted estimate over seeded test functions.
    Carleman(RunArgs),
    /// Inverse source problem.
    Isp(RunArgs),
    /// Inverse problem for the zeroth-order coefficient.
    Icp(RunArgs),
    /// Inverse problem for the principal pair from d + 1 measurements.
    Icp2(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// The acceptance suite.
    Accept(AcceptArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Artifact directory (default: the scenario's `out`, else out/<stage>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated s values for the sweep.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    s_list: Option<Vec<f64>>,
    /// Tikhonov parameter of the inverse stages.
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative noise level of the ISP observation.
    #[arg(long)]
    noise: Option<f64>,
    /// Dyadic grid refinements.
    #[arg(long)]
    refine: Option<u32>,
}

#[derive(Args, Debug)]
struct AcceptArgs {
    #[arg(long, default_value = "out/accept")]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            beta: self.beta,
            s_list: self.s_list.clone(),
            lambda: self.lambda,
            noise: self.noise,
            refine: self.refine,
        }
    }
}

fn run(stage: Stage, args: &RunArgs) -> ExitCode {
    let outcome = match run_scenario_file(&args.scenario, Some(stage), &args.overrides()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for line in &outcome.log {
        println!("{line}");
    }
    print!("{}", manifest_summary(&outcome.manifest));
    println!("artifacts: {} ({} files)", outcome.out_dir.display(), outcome.manifest.len());
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(outcome.exit_code() as u8)
}

fn accept(args: &AcceptArgs) -> ExitCode {
    let opts = AcceptOptions {
        seed: args.seed,
        ..Default::default()
    };
    match run_acceptance(&args.out, &opts) {
        Ok(summary) => {
            print!("{}", summary.table());
            println!("artifacts: {} ({} files)", summary.out_dir.display(), summary.manifest.len());
            if summary.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(ACCEPT_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors are configuration errors (exit 1); clap would use 2.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: configuration error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match &cli.command {
        Command::Check(a) => run(Stage::Check, a),
        Command::Weight(a) => run(Stage::Weight, a),
        Command::Solve(a) => run(Stage::Solve, a),
        Command::Carleman(a) => run(Stage::Carleman, a),
        Command::Isp(a) => run(Stage::Isp, a),
        Command::Icp(a) => run(Stage::Icp, a),
        Command::Icp2(a) => run(Stage::Icp2, a),
        Command::All(a) => run(Stage::All, a),
        Command::Accept(a) => accept(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn s_list_is_comma_separated() {
        let cli = Cli::try_parse_from(["carleman", "carleman", "--scenario", "a.toml", "--s-list", "1,2.5,10"]).unwrap();
        let Command::Carleman(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.s_list, Some(vec![1.0, 2.5, 10.0]));
        assert_eq!(a.overrides().s_list, Some(vec![1.0, 2.5, 10.0]));
    }

    #[test]
    fn scenario_is_required() {
        assert!(Cli::try_parse_from(["carleman", "isp"]).is_err());
        assert!(Cli::try_parse_from(["carleman", "isp", "--scenario", "x", "--lambda", "nope"]).is_err());
    }
}
