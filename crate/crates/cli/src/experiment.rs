//! Experiment orchestration shared by the subcommands and the acceptance
//! tests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use okl_core::baselines::{stepsize_grid, FogdLearner, FourierFeatureMap, NogdLearner, OgdLearner};
use okl_core::data::{self, CsvOptions, Dataset, Format};
use okl_core::evaluation::{self, mean_sd, BatchReport, HarnessReport, RunOptions, RunReport};
use okl_core::kernel::{KernelSpec, SpectrumProfile};
use okl_core::learner::{PomdrConfig, PomdrLearner};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Algo, DataArgs, DataFormat, LearnerArgs};
use crate::CliError;

pub const DATA_DIR_VAR: &str = "OKL_DATA_DIR";
pub const THREADS_VAR: &str = "OKL_THREADS";

/// SplitMix64 step, used to derive independent seeds from the base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `perm`-th permutation.
pub fn perm_seed(base: u64, perm: usize) -> u64 {
    derive_seed(base, perm as u64)
}

/// Resolves a dataset argument: an existing path is used as is, otherwise
/// `<dir>/<name>{,.libsvm,.libsvm.gz,.csv,.csv.gz}` is tried with `dir` from
/// `$OKL_DATA_DIR` (default `data`).
pub fn resolve_dataset(name: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let dir = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
    for suffix in ["", ".libsvm.gz", ".libsvm", ".csv.gz", ".csv", ".txt"] {
        let p = dir.join(format!("{name}{suffix}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(CliError::Data(format!("dataset {name:?} not found (looked in {})", dir.display())))
}

pub fn load_dataset(args: &DataArgs) -> Result<Dataset, CliError> {
    load_named(&args.data, args)
}

pub fn load_named(name: &str, args: &DataArgs) -> Result<Dataset, CliError> {
    let path = resolve_dataset(name)?;
    let format = match args.format {
        Some(DataFormat::Libsvm) => Format::Libsvm,
        Some(DataFormat::Csv) => Format::Csv,
        None => Format::from_path(&path).unwrap_or(Format::Libsvm),
    };
    let csv = CsvOptions { label_column: args.label_column, has_header: args.header };
    let ds = data::load(&path, format, csv).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if ds.is_empty() {
        return Err(CliError::Data(format!("{}: no examples", path.display())));
    }
    Ok(if args.scale { ds.min_max_scaled() } else { ds })
}

pub fn parse_b0(s: &str) -> Result<Option<usize>, CliError> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    s.parse::<usize>()
        .map(Some)
        .map_err(|_| CliError::Config(format!("--B0 must be a positive integer or `auto`, got {s:?}")))
}

pub fn pomdr_config(args: &LearnerArgs, horizon: usize, lr_scale: f64, seed: u64) -> Result<PomdrConfig, CliError> {
    let cfg = PomdrConfig {
        u: args.u,
        zeta: args.zeta,
        budget: args.budget,
        b0: parse_b0(&args.b0)?,
        window: args.window,
        lr_scale,
        ald_scale: args.ald_scale,
        horizon,
        seed,
        consistency_check: false,
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn gaussian(sigma: f64) -> Result<KernelSpec, CliError> {
    KernelSpec::gaussian(sigma).map_err(|e| CliError::Config(e.to_string()))
}

/// Thread pool with `$OKL_THREADS` workers (rayon's default when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| CliError::Config(e.to_string()))
}

/// Fully resolved settings of one learner run.
#[derive(Clone, Debug, Serialize)]
pub struct RunSettings {
    pub algo: Algo,
    pub dataset: String,
    pub rounds: usize,
    pub sigma: f64,
    pub zeta: f64,
    #[serde(rename = "B")]
    pub budget: usize,
    #[serde(rename = "B0")]
    pub b0: usize,
    #[serde(rename = "M")]
    pub window: usize,
    #[serde(rename = "U")]
    pub u: f64,
    /// Learning-rate multiplier for POMDR, stepsize η for the baselines.
    pub c: f64,
    pub ald_scale: f64,
    pub rank: Option<usize>,
    pub scaled: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub schema: &'static str,
    pub settings: RunSettings,
    pub perm: usize,
    pub perm_seed: u64,
    pub alignment: Option<f64>,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub algo: Algo,
    pub dataset: String,
    pub c: f64,
    pub perms: usize,
    pub amr_mean: f64,
    pub amr_sd: f64,
    pub time_mean: f64,
    pub time_sd: f64,
    pub t_bar_set: usize,
    pub restarts_mean: f64,
}

pub fn aggregate(records: &[RunRecord]) -> Aggregate {
    let amr: Vec<f64> = records.iter().map(|r| r.report.amr).collect();
    let time: Vec<f64> = records.iter().map(|r| r.report.wall_time_seconds).collect();
    let (amr_mean, amr_sd) = mean_sd(&amr);
    let (time_mean, time_sd) = mean_sd(&time);
    let restarts: Vec<f64> = records.iter().map(|r| r.report.restart_times.len() as f64).collect();
    let first = &records[0].settings;
    Aggregate {
        algo: first.algo,
        dataset: first.dataset.clone(),
        c: first.c,
        perms: records.len(),
        amr_mean,
        amr_sd,
        time_mean,
        time_sd,
        t_bar_set: records.iter().filter(|r| r.report.t_bar.is_some()).count(),
        restarts_mean: mean_sd(&restarts).0,
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub algo: Algo,
    pub learner: LearnerArgs,
    pub etas: Option<Vec<f64>>,
    pub rank: Option<usize>,
    pub perms: usize,
    pub seed: u64,
    pub scaled: bool,
    pub alignment: bool,
    pub omit_timing: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// One group of permutation runs per hyperparameter value.
    pub groups: Vec<(Aggregate, Vec<RunRecord>)>,
    pub alignment: Option<f64>,
}

impl ExperimentResult {
    /// Group with the lowest mean mistake ratio.
    pub fn best(&self) -> &(Aggregate, Vec<RunRecord>) {
        self.groups
            .iter()
            .min_by(|a, b| a.0.amr_mean.total_cmp(&b.0.amr_mean))
            .expect("at least one group")
    }
}

fn hyper_values(spec: &ExperimentSpec, horizon: usize) -> Vec<f64> {
    match spec.algo {
        Algo::Pomdr => spec.learner.lr_scale.clone(),
        _ => spec.etas.clone().unwrap_or_else(|| stepsize_grid(horizon)),
    }
}

/// Runs one learner on one permutation.
pub fn run_single(spec: &ExperimentSpec, ds: &Dataset, c: f64, perm: usize) -> Result<RunRecord, CliError> {
    let seed = perm_seed(spec.seed, perm);
    let stream = ds.permute(seed);
    let kernel = gaussian(spec.learner.sigma)?;
    let horizon = stream.len();
    let opts = RunOptions { norm_check_every: spec.learner.norm_check_every };
    let l = &spec.learner;
    let mut rank = None;
    let (b0, mut report) = match spec.algo {
        Algo::Pomdr => {
            let cfg = pomdr_config(l, horizon, c, seed)?;
            let b0 = cfg.resolved_b0();
            let mut learner = PomdrLearner::new(cfg, kernel).map_err(|e| CliError::Config(e.to_string()))?;
            (b0, evaluation::run(&mut learner, &stream, opts)?)
        }
        Algo::Ogd => {
            let mut learner = OgdLearner::new(kernel, c, l.u);
            (0, evaluation::run(&mut learner, &stream, opts)?)
        }
        Algo::Fogd => {
            let map = FourierFeatureMap::new(stream.dimension, l.budget, l.sigma, derive_seed(seed, 1))
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut learner = FogdLearner::new(map, c, l.u);
            (0, evaluation::run(&mut learner, &stream, opts)?)
        }
        Algo::Nogd => {
            let k = spec.rank.unwrap_or_else(|| NogdLearner::<KernelSpec>::default_rank(l.budget));
            rank = Some(k);
            let mut learner =
                NogdLearner::new(kernel, l.budget, k, c, l.u).map_err(|e| CliError::Config(e.to_string()))?;
            (0, evaluation::run(&mut learner, &stream, opts)?)
        }
    };
    if spec.omit_timing {
        report.wall_time_seconds = 0.0;
    }
    Ok(RunRecord {
        schema: crate::report::SCHEMA,
        settings: RunSettings {
            algo: spec.algo,
            dataset: ds.name.clone(),
            rounds: horizon,
            sigma: l.sigma,
            zeta: l.zeta,
            budget: l.budget,
            b0,
            window: l.window,
            u: l.u,
            c,
            ald_scale: l.ald_scale,
            rank,
            scaled: spec.scaled,
            seed: spec.seed,
        },
        perm,
        perm_seed: seed,
        alignment: None,
        report,
    })
}

/// Every hyperparameter value × permutation, run in the `$OKL_THREADS` pool.
pub fn run_experiment(spec: &ExperimentSpec, ds: &Dataset) -> Result<ExperimentResult, CliError> {
    if spec.perms == 0 {
        return Err(CliError::Config("--perms must be positive".into()));
    }
    if spec.algo == Algo::Pomdr {
        for c in &spec.learner.lr_scale {
            pomdr_config(&spec.learner, ds.len(), *c, spec.seed)?;
        }
    }
    let values = hyper_values(spec, ds.len());
    let jobs: Vec<(f64, usize)> = values.iter().flat_map(|c| (0..spec.perms).map(move |p| (*c, p))).collect();
    let pool = thread_pool()?;
    let mut records: Vec<RunRecord> =
        pool.install(|| jobs.par_iter().map(|(c, p)| run_single(spec, ds, *c, *p)).collect::<Result<_, _>>())?;
    let alignment = if spec.alignment {
        let k = gaussian(spec.learner.sigma)?;
        Some(pool.install(|| evaluation::dataset_alignment(ds, &k, evaluation::DEFAULT_CHUNK))?)
    } else {
        None
    };
    for r in &mut records {
        r.alignment = alignment;
    }
    let mut groups = Vec::new();
    for (i, _) in values.iter().enumerate() {
        let group: Vec<RunRecord> = records[i * spec.perms..(i + 1) * spec.perms].to_vec();
        groups.push((aggregate(&group), group));
    }
    Ok(ExperimentResult { groups, alignment })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentRow {
    pub schema: &'static str,
    pub dataset: String,
    pub rounds: usize,
    pub sigma: f64,
    pub alignment: f64,
    /// Mean over permutations of the δ-sum recorded by the learner.
    pub delta_sum_mean: f64,
    #[serde(rename = "B0")]
    pub b0: usize,
    /// First-phase-switch round per permutation (`None` = never switched).
    pub t_bar: Vec<Option<usize>>,
    pub alignment_seconds: f64,
    pub zeta: f64,
    pub c: f64,
    pub seed: u64,
}

pub fn default_sigmas() -> Vec<f64> {
    (-2..=6).map(|e| 2f64.powi(e)).collect()
}

/// `A_T` for one σ plus the phase-switch round from POMDR passes.
pub fn alignment_row(
    ds: &Dataset,
    learner: &LearnerArgs,
    sigma: f64,
    perms: usize,
    seed: u64,
    chunk: usize,
) -> Result<AlignmentRow, CliError> {
    let kernel = gaussian(sigma)?;
    let start = Instant::now();
    let a_t = evaluation::dataset_alignment(ds, &kernel, chunk)?;
    let alignment_seconds = start.elapsed().as_secs_f64();
    let c = learner.lr_scale.first().copied().unwrap_or(0.1);
    let spec = ExperimentSpec {
        algo: Algo::Pomdr,
        learner: LearnerArgs { sigma, lr_scale: vec![c], norm_check_every: 0, ..learner.clone() },
        etas: None,
        rank: None,
        perms,
        seed,
        scaled: false,
        alignment: false,
        omit_timing: false,
    };
    let runs: Vec<RunRecord> = (0..perms).map(|p| run_single(&spec, ds, c, p)).collect::<Result<_, _>>()?;
    let deltas: Vec<f64> = runs.iter().map(|r| r.report.delta_sum).collect();
    Ok(AlignmentRow {
        schema: crate::report::SCHEMA,
        dataset: ds.name.clone(),
        rounds: ds.len(),
        sigma,
        alignment: a_t,
        delta_sum_mean: mean_sd(&deltas).0,
        b0: runs[0].settings.b0,
        t_bar: runs.iter().map(|r| r.report.t_bar).collect(),
        alignment_seconds,
        zeta: learner.zeta,
        c,
        seed,
    })
}

pub fn spectrum_profiles(decay: crate::args::Decay, rates: &[f64], exponents: &[f64], r0: f64) -> Result<Vec<SpectrumProfile>, CliError> {
    let cfg = |e: okl_core::OklError| CliError::Config(e.to_string());
    match decay {
        crate::args::Decay::Exp => rates.iter().map(|r| SpectrumProfile::exponential(r0, *r).map_err(cfg)).collect(),
        crate::args::Decay::Poly => exponents.iter().map(|p| SpectrumProfile::polynomial(r0, *p).map_err(cfg)).collect(),
    }
}

/// Harness run with `α = D·n^(−2ζ)` (D from the synthesized diagonal) unless
/// an absolute `alpha` is given.
pub fn verify_budget_one(profile: &SpectrumProfile, n: usize, zeta: f64, alpha: Option<f64>, seed: u64) -> Result<HarnessReport, CliError> {
    let alpha = match alpha {
        Some(a) => a,
        None => {
            let g = okl_core::kernel::synthesize_psd(profile, n, seed)?;
            let d = (0..n).map(|i| g.get(i, i)).fold(f64::NEG_INFINITY, f64::max);
            d * (n as f64).powf(-2.0 * zeta)
        }
    };
    Ok(evaluation::theorem1_harness(profile, n, alpha, seed)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchRecord {
    pub schema: &'static str,
    pub dataset: String,
    pub train_size: usize,
    pub test_size: usize,
    pub sigma: f64,
    pub zeta: f64,
    pub c: f64,
    pub seed: u64,
    pub report: BatchReport,
}

/// Train/test sets for `batch`: an explicit test file, or a seeded split.
pub fn batch_sets(args: &crate::args::BatchArgs) -> Result<(Dataset, Dataset), CliError> {
    let ds = load_dataset(&args.data)?;
    match &args.test {
        Some(t) => {
            let test = load_named(t, &args.data)?;
            if test.dimension > ds.dimension {
                return Err(CliError::Data(format!(
                    "test set has dimension {} > training dimension {}",
                    test.dimension, ds.dimension
                )));
            }
            let d = ds.dimension;
            Ok((ds, pad_to(test, d)))
        }
        None => {
            if !(args.split > 0.0 && args.split < 1.0) {
                return Err(CliError::Config(format!("--split must lie in (0, 1), got {}", args.split)));
            }
            let (train, test) = ds.permute(derive_seed(args.seed, u64::MAX)).split(args.split);
            if train.is_empty() || test.is_empty() {
                return Err(CliError::Data("split produced an empty side".into()));
            }
            Ok((train, test))
        }
    }
}

fn pad_to(mut ds: Dataset, d: usize) -> Dataset {
    if ds.dimension < d {
        for e in &mut ds.examples {
            let mut f = e.features().to_vec();
            f.resize(d, 0.0);
            e.instance = okl_core::Instance::dense(f);
        }
        ds.dimension = d;
    }
    ds
}

pub fn run_batch(
    train: &Dataset,
    test: &Dataset,
    learner: &LearnerArgs,
    r_seeds: usize,
    seed: u64,
) -> Result<Vec<BatchRecord>, CliError> {
    let kernel = gaussian(learner.sigma)?;
    let mut out = Vec::new();
    for c in &learner.lr_scale {
        let cfg = pomdr_config(learner, train.len(), *c, seed)?;
        let pool = thread_pool()?;
        let reports: Vec<BatchReport> = pool.install(|| {
            (0..r_seeds)
                .into_par_iter()
                .map(|i| evaluation::online_to_batch(&cfg, &kernel, train, test, derive_seed(seed, 1000 + i as u64)))
                .collect::<okl_core::Result<_>>()
        })?;
        for report in reports {
            out.push(BatchRecord {
                schema: crate::report::SCHEMA,
                dataset: train.name.clone(),
                train_size: train.len(),
                test_size: test.len(),
                sigma: learner.sigma,
                zeta: learner.zeta,
                c: *c,
                seed,
                report,
            });
        }
    }
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}
