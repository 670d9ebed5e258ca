//! Experiment runner for the `okl` binary: `run`, `alignment`,
//! `verify-budget` and `batch`.

pub mod args;
pub mod experiment;
pub mod report;

use std::process::ExitCode;

use okl_core::evaluation::mean_sd;
use okl_core::OklError;
use serde::Serialize;
use thiserror::Error;

use args::{AlignmentArgs, BatchArgs, Cli, Command, OutputFormat, RunArgs, VerifyArgs};
use experiment::{Aggregate, ExperimentSpec};
use report::{say, with_suffix, SCHEMA};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<OklError> for CliError {
    fn from(e: OklError) -> Self {
        match e {
            OklError::InvalidConfig(_) | OklError::InvalidKernel(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Alignment(a) => cmd_alignment(&a),
        Command::VerifyBudget(a) => cmd_verify_budget(&a),
        Command::Batch(a) => cmd_batch(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("okl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let ds = experiment::load_dataset(&a.data)?;
    let spec = ExperimentSpec {
        algo: a.algo,
        learner: a.learner.clone(),
        etas: a.eta.clone(),
        rank: a.rank,
        perms: a.perms,
        seed: a.seed,
        scaled: a.data.scale,
        alignment: a.alignment,
        omit_timing: a.omit_timing,
    };
    let result = experiment::run_experiment(&spec, &ds)?;
    experiment::ensure_dir(&a.out)?;
    let stem = report::run_stem(&a.out, a.algo.as_str(), &ds.name);
    let records: Vec<_> = result.groups.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let aggregates: Vec<Aggregate> = result.groups.iter().map(|(g, _)| g.clone()).collect();
    if matches!(a.output_format, OutputFormat::Json | OutputFormat::Both) {
        report::write_jsonl(&with_suffix(&stem, ".runs.jsonl"), &records)?;
        let file = report::AggregateFile { schema: SCHEMA, aggregates: &aggregates, best: &result.best().0, alignment: result.alignment };
        report::write_json(&with_suffix(&stem, ".aggregate.json"), &file)?;
    }
    if matches!(a.output_format, OutputFormat::Csv | OutputFormat::Both) {
        report::write_run_csv(&with_suffix(&stem, ".csv"), &records)?;
    }
    let hyper = if a.algo == args::Algo::Pomdr { "c" } else { "eta" };
    for g in &aggregates {
        say(&format!(
            "{} {} sigma={} {hyper}={:.4e}: AMR {} ± {} %  time {:.3} ± {:.3} s  t_bar set in {}/{}  restarts {:.1}",
            g.algo.as_str(),
            g.dataset,
            a.learner.sigma,
            g.c,
            pct(g.amr_mean),
            pct(g.amr_sd),
            g.time_mean,
            g.time_sd,
            g.t_bar_set,
            g.perms,
            g.restarts_mean
        ));
    }
    let best = &result.best().0;
    say(&format!("best {hyper}={:.4e}: AMR {} ± {} %", best.c, pct(best.amr_mean), pct(best.amr_sd)));
    if let Some(at) = result.alignment {
        say(&format!("A_T = {at:.4}"));
    }
    Ok(())
}

pub fn cmd_alignment(a: &AlignmentArgs) -> Result<(), CliError> {
    let ds = experiment::load_dataset(&a.data)?;
    let sigmas = a.sigmas.clone().unwrap_or_else(experiment::default_sigmas);
    let pool = experiment::thread_pool()?;
    let mut rows = Vec::new();
    for sigma in sigmas {
        let row = pool.install(|| experiment::alignment_row(&ds, &a.learner, sigma, a.perms.max(1), a.seed, a.chunk))?;
        let t_bar: Vec<String> = row.t_bar.iter().map(|t| t.map_or("+inf".to_string(), |v| v.to_string())).collect();
        say(&format!(
            "{} sigma={}: A_T = {:.3}  delta_sum = {:.3}  B0 = {}  t_bar = [{}]",
            row.dataset,
            row.sigma,
            row.alignment,
            row.delta_sum_mean,
            row.b0,
            t_bar.join(", ")
        ));
        rows.push(row);
    }
    experiment::ensure_dir(&a.out)?;
    let stem = a.out.join(format!("alignment_{}", ds.name));
    if matches!(a.output_format, OutputFormat::Json | OutputFormat::Both) {
        report::write_jsonl(&with_suffix(&stem, ".jsonl"), &rows)?;
    }
    if matches!(a.output_format, OutputFormat::Csv | OutputFormat::Both) {
        report::write_alignment_csv(&with_suffix(&stem, ".csv"), &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyRecord<'a> {
    schema: &'static str,
    zeta: f64,
    report: &'a okl_core::evaluation::HarnessReport,
}

pub fn cmd_verify_budget(a: &VerifyArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for &n in &a.n {
        if n == 0 {
            return Err(CliError::Config("--n must be positive".into()));
        }
        let r0 = a.r0.unwrap_or(n as f64);
        for profile in experiment::spectrum_profiles(a.decay, &a.r, &a.p, r0)? {
            let rep = experiment::verify_budget_one(&profile, n, a.zeta, a.alpha, a.seed)?;
            say(&format!(
                "{:?} n={} alpha={:.3e}: |S| = {}  bound = {:.2}  slack = {:.2}  satisfied = {}",
                profile.decay, n, rep.alpha, rep.final_size, rep.bound.bound_value, rep.bound.slack, rep.bound.satisfied
            ));
            reports.push(rep);
        }
    }
    experiment::ensure_dir(&a.out)?;
    let records: Vec<VerifyRecord> = reports.iter().map(|r| VerifyRecord { schema: SCHEMA, zeta: a.zeta, report: r }).collect();
    report::write_jsonl(&a.out.join("verify_budget.jsonl"), &records)?;
    Ok(())
}

pub fn cmd_batch(a: &BatchArgs) -> Result<(), CliError> {
    let (train, test) = experiment::batch_sets(a)?;
    let rows = experiment::run_batch(&train, &test, &a.learner, a.r_seeds, a.seed)?;
    experiment::ensure_dir(&a.out)?;
    let stem = a.out.join(format!("batch_{}", train.name));
    report::write_jsonl(&with_suffix(&stem, ".jsonl"), &rows)?;
    report::write_batch_csv(&with_suffix(&stem, ".csv"), &rows)?;
    for c in &a.learner.lr_scale {
        let errs: Vec<f64> = rows.iter().filter(|r| r.c == *c).map(|r| r.report.test_error_rate).collect();
        let risks: Vec<f64> = rows.iter().filter(|r| r.c == *c).map(|r| r.report.test_hinge_risk).collect();
        let (em, es) = mean_sd(&errs);
        let (rm, rs) = mean_sd(&risks);
        say(&format!(
            "{} c={c}: test error {} ± {} %  hinge risk {rm:.4} ± {rs:.4}  over {} draws of r",
            train.name,
            pct(em),
            pct(es),
            errs.len()
        ));
    }
    Ok(())
}
