use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regmap_cli::report::read_report;
use regmap_cli::{load_instance, run_tasks, CliError, RunOptions, DEFAULT_CAP};

#[derive(Parser)]
#[command(name = "regmap", version, about = "Regularity moduli and certificates for set-valued maps on finite grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bracket a modulus of a map around or at a reference pair.
    Estimate(RunArgs),
    /// Check that openness, inverse Lipschitz and regularity moduli agree.
    VerifyEquiv(RunArgs),
    /// Certify a composition theorem instance.
    Certify(RunArgs),
    /// Distance estimates and bounds for implicit multifunctions.
    Implicit(RunArgs),
    /// Solve u ∈ G(F₁(x), F₂(x)) by Ekeland descent.
    Solve(RunArgs),
    /// Check the coincidence-set distance bound.
    VerifyFixpoint(RunArgs),
    /// Run every task in the instance regardless of its subcommand.
    Run(RunArgs),
    /// Pretty-print a stored report.
    Report {
        /// Path to a `<task>.json` report.
        path: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Task name, or `all`.
    #[arg(long, default_value = "all")]
    task: String,
    /// Directory for `<task>.json` (and `<task>.csv`) reports; without it
    /// reports go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fail_fast: bool,
    /// Overrides the bisection resolution of every config.
    #[arg(long)]
    resolution: Option<f64>,
    /// Largest tuple count a task may enumerate.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(args: RunArgs, command: Option<&str>) -> ExitCode {
    let mut inst = match load_instance(&args.instance) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    if let Some(r) = args.resolution {
        if let Err(e) = inst.override_resolution(r) {
            return fail(e);
        }
    }
    if let Err(e) = inst.check_cap(args.cap) {
        return fail(e);
    }
    let opts = RunOptions { task: Some(args.task.clone()), command: command.map(str::to_string), fail_fast: args.fail_fast };
    if args.task != "all" && !inst.file.tasks.iter().any(|t| t.name == args.task) {
        return fail(CliError::Invalid(format!("no task named `{}`", args.task)));
    }
    let reports = run_tasks(&inst, &opts);
    if reports.is_empty() {
        eprintln!("no matching tasks");
    }
    for r in &reports {
        match &args.out {
            Some(dir) => {
                if let Err(e) = r.write_to(dir) {
                    return fail(e);
                }
                println!("{}", r.summary_line());
            }
            None => println!("{}", r.to_json()),
        }
    }
    if reports.iter().all(|r| r.status.is_ok()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Estimate(a) => run(a, Some("estimate")),
        Command::VerifyEquiv(a) => run(a, Some("verify-equiv")),
        Command::Certify(a) => run(a, Some("certify")),
        Command::Implicit(a) => run(a, Some("implicit")),
        Command::Solve(a) => run(a, Some("solve")),
        Command::VerifyFixpoint(a) => run(a, Some("verify-fixpoint")),
        Command::Run(a) => run(a, None),
        Command::Report { path } => match read_report(&path) {
            Ok(r) => {
                println!("{}", r.pretty());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
