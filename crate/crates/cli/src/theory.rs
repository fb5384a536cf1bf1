use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Subcommand};
use dasco_core::theory::oracle::{verify_instances, InstanceCheck};
use dasco_core::theory::{example_1d, kkt_check, solve_dual_greedy, solve_single_generator, DiscreteProblem};
use serde::Serialize;

use crate::{CmdResult, Failure};

#[derive(Debug, Subcommand)]
pub enum TheoryCommand {
    /// Compare both closed forms with their oracles on random instances.
    Check(CheckArgs),
    /// The two-action example with p_data = (0.5, 0.5) and f = (1.3, 0.7) maximized.
    #[command(name = "example-1d")]
    Example1d,
    /// Solve one instance given on the command line.
    Solve(SolveArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub max_n: usize,
    /// CSV destination; stdout when omitted (the summary then goes to stderr).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Comma-separated data probabilities.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub p_data: Vec<f64>,
    /// Comma-separated objective values, minimized unless --maximize.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub f: Vec<f64>,
    #[arg(long)]
    pub maximize: bool,
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn write_checks<W: std::io::Write>(w: W, checks: &[InstanceCheck]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(w);
    for c in checks {
        w.serialize(c).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

fn check(a: CheckArgs) -> CmdResult {
    let start = Instant::now();
    let checks = verify_instances(a.instances, a.seed, a.max_n)?;
    match &a.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
            write_checks(file, &checks)?;
        }
        None => write_checks(std::io::stdout().lock(), &checks)?,
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    let max = |f: fn(&InstanceCheck) -> f64| checks.iter().map(f).fold(0.0, f64::max);
    let verdict = if passed == checks.len() { "pass" } else { "fail" };
    let summary = format!(
        "{verdict}: {passed}/{} instances, max TV {:.2e}, max stationarity residual {:.2e}, max greedy-LP gap {:.2e}, {:.2}s",
        checks.len(),
        max(|c| c.tv_closed_form_vs_mirror),
        max(|c| c.max_stationarity_residual),
        max(|c| c.greedy_lp_gap),
        start.elapsed().as_secs_f64()
    );
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    if verdict == "pass" {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("{} instances failed", checks.len() - passed)))
    }
}

#[derive(Debug, Serialize)]
struct SolveReport {
    maximize: bool,
    p_data: Vec<f64>,
    f: Vec<f64>,
    single_p_g: Vec<f64>,
    single_nu: f64,
    single_expected_f: f64,
    single_objective: f64,
    single_max_kkt_violation: f64,
    dual_p_g: Vec<f64>,
    dual_p_aux: Vec<f64>,
    dual_expected_f: f64,
}

fn solve(a: SolveArgs) -> CmdResult {
    let prob = if a.maximize {
        DiscreteProblem::maximizing(a.p_data.clone(), a.f.clone())?
    } else {
        DiscreteProblem::new(a.p_data.clone(), a.f.clone())?
    };
    let single = solve_single_generator(&prob)?;
    let kkt = kkt_check(&prob, &single);
    let dual = solve_dual_greedy(&prob);
    let sign = if a.maximize { -1.0 } else { 1.0 };
    let report = SolveReport {
        maximize: a.maximize,
        single_expected_f: sign * prob.expected_f(&single.p_g),
        single_nu: single.nu,
        single_objective: single.objective_value,
        single_max_kkt_violation: kkt.max_violation,
        single_p_g: single.p_g,
        dual_expected_f: sign * dual.objective_value,
        dual_p_g: dual.p_g,
        dual_p_aux: dual.p_aux,
        p_data: a.p_data,
        f: a.f,
    };
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

pub fn run(c: TheoryCommand) -> CmdResult {
    match c {
        TheoryCommand::Check(a) => check(a),
        TheoryCommand::Example1d => {
            println!("{}", serde_json::to_string_pretty(&example_1d()).unwrap());
            Ok(())
        }
        TheoryCommand::Solve(a) => solve(a),
    }
}
