//! Metrics and bound checks: mistake ratios, kernel alignment, the δ-sum
//! inequality, the budget-size harness on synthetic spectra and
//! online-to-batch risk.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::BudgetSet;
use crate::data::{Dataset, Label};
use crate::error::{OklError, Result};
use crate::kernel::{synthesize_psd, Instance, Kernel, KernelSpec, SpectrumDecay, SpectrumProfile};
use crate::learner::{hinge, OnlineLearner, PomdrConfig, PomdrLearner};
use crate::optimism::OptimismWindow;

pub const DEFAULT_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub empirical_value: f64,
    pub bound_value: f64,
    pub satisfied: bool,
    pub slack: f64,
}

impl BoundReport {
    pub fn new(empirical_value: f64, bound_value: f64) -> Self {
        BoundReport {
            empirical_value,
            bound_value,
            satisfied: empirical_value <= bound_value + 1e-9,
            slack: bound_value - empirical_value,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub algo: String,
    pub rounds: usize,
    pub mistakes: usize,
    pub amr: f64,
    pub cumulative_loss: f64,
    pub alignment: Option<f64>,
    /// Sum of the δ values the learner recorded.
    pub delta_sum: f64,
    /// `(round, |S|)` whenever the support size changed.
    pub budget_trace: Vec<(usize, usize)>,
    pub max_support: usize,
    pub t_bar: Option<usize>,
    pub restart_times: Vec<usize>,
    pub wall_time_seconds: f64,
    /// Largest `‖f‖ − U` seen on the rounds whose norm was recomputed.
    pub max_norm_excess: f64,
    pub norm_checks: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Recompute `‖f‖` densely every this many rounds (0 disables).
    pub norm_check_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { norm_check_every: 500 }
    }
}

/// Plays every example of `ds` in order.
pub fn run<L: OnlineLearner>(learner: &mut L, ds: &Dataset, options: RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let mut mistakes = 0;
    let mut loss = 0.0;
    let mut delta_sum = 0.0;
    let mut trace = Vec::new();
    let mut last_size = learner.support_size();
    let mut max_support = last_size;
    let mut max_norm_excess = f64::NEG_INFINITY;
    let mut norm_checks = 0;
    let n = ds.len();
    for (i, e) in ds.examples.iter().enumerate() {
        let out = learner.step(&e.instance, e.label)?;
        let round = i + 1;
        if out.mistake(e.label) {
            mistakes += 1;
        }
        loss += out.hinge_loss;
        delta_sum += out.delta;
        let size = learner.support_size();
        if size != last_size {
            trace.push((round, size));
            last_size = size;
        }
        max_support = max_support.max(size);
        let check = options.norm_check_every > 0 && (round % options.norm_check_every == 0 || round == n);
        if check {
            if let Some(u) = learner.radius() {
                max_norm_excess = max_norm_excess.max(learner.dense_norm()? - u);
                norm_checks += 1;
            }
        }
    }
    Ok(RunReport {
        algo: learner.name().to_string(),
        rounds: n,
        mistakes,
        amr: if n == 0 { 0.0 } else { mistakes as f64 / n as f64 },
        cumulative_loss: loss,
        alignment: None,
        delta_sum,
        budget_trace: trace,
        max_support,
        t_bar: learner.t_bar(),
        restart_times: learner.restart_times().to_vec(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        max_norm_excess: if norm_checks == 0 { 0.0 } else { max_norm_excess },
        norm_checks,
    })
}

/// `A_T = Σ κ(x_t, x_t) − (1/T) Yᵀ K Y`, accumulated over row blocks of
/// `chunk` rows without storing `K`.
pub fn kernel_alignment<K: Kernel + Sync>(instances: &[Instance], labels: &[Label], kernel: &K, chunk: usize) -> Result<f64> {
    if instances.len() != labels.len() {
        return Err(OklError::LengthMismatch { expected: instances.len(), got: labels.len() });
    }
    let n = instances.len();
    if n == 0 {
        return Ok(0.0);
    }
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    // Each block covers rows [s, s+chunk) against columns j ≥ i; off-diagonal
    // terms count twice.
    let parts: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|&s| -> Result<(f64, f64)> {
            let mut diag = 0.0;
            let mut quad = 0.0;
            for i in s..(s + chunk).min(n) {
                let kii = kernel.evaluate(&instances[i], &instances[i])?;
                diag += kii;
                let mut row = 0.0;
                for j in (i + 1)..n {
                    row += y[j] * kernel.evaluate(&instances[i], &instances[j])?;
                }
                quad += kii + 2.0 * y[i] * row;
            }
            Ok((diag, quad))
        })
        .collect::<Result<_>>()?;
    let (diag, quad) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(diag - quad / n as f64)
}

pub fn dataset_alignment<K: Kernel + Sync>(ds: &Dataset, kernel: &K, chunk: usize) -> Result<f64> {
    kernel_alignment(&ds.instances(), &ds.labels(), kernel, chunk)
}

/// `Σ_τ max(κ(x,x) − 2y·(−∇̄)(x), 0)` with exact gradients on every round,
/// against `4 A_T + 7 D`.
pub fn lemma3_check<K: Kernel + Sync>(instances: &[Instance], labels: &[Label], kernel: &K, window: usize) -> Result<BoundReport> {
    let mut w = OptimismWindow::new(window);
    let mut total = 0.0;
    for (x, y) in instances.iter().zip(labels) {
        total += w.delta_exact(kernel, x, *y)?.delta;
        w.push(x.clone(), *y);
    }
    let a_t = kernel_alignment(instances, labels, kernel, DEFAULT_CHUNK)?;
    Ok(BoundReport::new(total, 4.0 * a_t + 7.0 * kernel.upper_bound()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarnessReport {
    pub profile: SpectrumProfile,
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub final_size: usize,
    pub bound: BoundReport,
}

/// Budget-size bound for the eigenvalue decay of `profile`: exponential
/// `2 ln(R0/α)/ln(1/r) + 2`, polynomial `e·((D/A)·R0/α)^(1/p) + 1`.
pub fn budget_size_bound(profile: &SpectrumProfile, alpha: f64, lower: f64, upper: f64) -> f64 {
    match profile.decay {
        SpectrumDecay::Exponential { r } => 2.0 * (profile.r0 / alpha).ln() / (1.0 / r).ln() + 2.0,
        SpectrumDecay::Polynomial { p } => std::f64::consts::E * ((upper / lower) * profile.r0 / alpha).powf(1.0 / p) + 1.0,
    }
}

/// ALD-gated insertion (threshold `√alpha`) over every row of a matrix with
/// the given spectrum; the final budget size is compared with
/// [`budget_size_bound`].
pub fn theorem1_harness(profile: &SpectrumProfile, n: usize, alpha: f64, seed: u64) -> Result<HarnessReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(OklError::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    let gram = synthesize_psd(profile, n, seed)?;
    let kernel = KernelSpec::precomputed(gram)?;
    let threshold = alpha.sqrt();
    let mut budget = BudgetSet::tracked(n);
    for i in 0..n {
        let x = Instance::Index(i);
        let ald = budget.ald_check(&kernel, &x, threshold)?;
        if !ald.holds {
            budget.insert_tracked(x, Label::Positive, i, &ald)?;
        }
    }
    let (lower, upper) = (kernel.lower_bound(), kernel.upper_bound());
    let final_size = budget.len();
    Ok(HarnessReport {
        profile: *profile,
        n,
        alpha,
        seed,
        lower_bound: lower,
        upper_bound: upper,
        final_size,
        bound: BoundReport::new(final_size as f64, budget_size_bound(profile, alpha, lower, upper)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretBounds {
    /// `6U√(A_T + 2D) + 9U`
    pub pomd: f64,
    /// The first-phase bound plus `6U√(2T(A_T + 2D))/√B`.
    pub omdr: f64,
    /// Cumulative loss minus that of the zero hypothesis (`T`).
    pub regret_vs_zero: f64,
    pub vs_pomd: BoundReport,
    pub vs_omdr: BoundReport,
}

pub fn regret_bound_values(cumulative_loss: f64, rounds: usize, cfg: &PomdrConfig, a_t: f64, upper: f64) -> RegretBounds {
    let u = cfg.u;
    let pomd = 6.0 * u * (a_t + 2.0 * upper).sqrt() + 9.0 * u;
    let omdr = pomd + 6.0 * u * (2.0 * rounds as f64 * (a_t + 2.0 * upper)).sqrt() / (cfg.budget as f64).sqrt();
    let regret_vs_zero = cumulative_loss - rounds as f64;
    RegretBounds {
        pomd,
        omdr,
        regret_vs_zero,
        vs_pomd: BoundReport::new(regret_vs_zero, pomd),
        vs_omdr: BoundReport::new(regret_vs_zero, omdr),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub r: usize,
    pub r_seed: u64,
    pub test_hinge_risk: f64,
    pub test_error_rate: f64,
}

/// Draws `r` uniformly from `[1, T]` with `T = |train|`, trains for `r − 1`
/// rounds and evaluates `f_r` on `test`.
pub fn online_to_batch<K: Kernel + Clone>(cfg: &PomdrConfig, kernel: &K, train: &Dataset, test: &Dataset, r_seed: u64) -> Result<BatchReport> {
    if train.is_empty() {
        return Err(OklError::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(r_seed);
    let r = rng.random_range(1..=train.len());
    online_to_batch_at(cfg, kernel, train, test, r, r_seed)
}

/// [`online_to_batch`] with a fixed `r`.
pub fn online_to_batch_at<K: Kernel + Clone>(
    cfg: &PomdrConfig,
    kernel: &K,
    train: &Dataset,
    test: &Dataset,
    r: usize,
    r_seed: u64,
) -> Result<BatchReport> {
    if test.is_empty() {
        return Err(OklError::Empty("test set"));
    }
    let mut cfg = cfg.clone();
    cfg.horizon = train.len();
    let mut learner = PomdrLearner::new(cfg, kernel.clone())?;
    for e in train.examples.iter().take(r.saturating_sub(1)) {
        learner.step(&e.instance, e.label)?;
    }
    let snap = learner.snapshot();
    let mut risk = 0.0;
    let mut errors = 0;
    for e in &test.examples {
        let m = snap.evaluate(kernel, &e.instance)?;
        risk += hinge(m, e.label);
        if Label::from_margin(m) != e.label {
            errors += 1;
        }
    }
    let n = test.len() as f64;
    Ok(BatchReport { r, r_seed, test_hinge_risk: risk / n, test_error_rate: errors as f64 / n })
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
