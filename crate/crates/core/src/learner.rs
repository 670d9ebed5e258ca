//! The POMDR learner: optimistic mirror descent with an ALD-gated budget,
//! switching to plain budget growth with halving once the budget reaches `B0`.

use serde::{Deserialize, Serialize};

use crate::budget::BudgetSet;
use crate::data::Label;
use crate::error::{OklError, Result};
use crate::hypothesis::KernelExpansion;
use crate::kernel::{Instance, Kernel};
use crate::optimism::{DeltaRecord, OptimismWindow};

/// Reset constant of the learning rate during the first phase.
pub const POMD_EPSILON: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PomdrConfig {
    /// Radius of the hypothesis ball.
    pub u: f64,
    pub zeta: f64,
    /// Maximum budget `B` during the second phase; must be even.
    pub budget: usize,
    /// Phase-switch size `B0`; `None` means `⌈15 ln T⌉`.
    pub b0: Option<usize>,
    /// Optimism window length `M`.
    pub window: usize,
    /// Multiplier `c` on the learning rate.
    pub lr_scale: f64,
    /// The ALD threshold is `ald_scale · T^(−ζ)`.
    pub ald_scale: f64,
    /// Horizon `T`.
    pub horizon: usize,
    pub seed: u64,
    /// Verify and rebuild the inverse Gram matrix after every insertion.
    #[serde(default)]
    pub consistency_check: bool,
}

impl PomdrConfig {
    /// `U = 25, B = 400, M = 15, c = 0.1, threshold 10·T^(−ζ)`.
    pub fn standard(horizon: usize, zeta: f64) -> Self {
        PomdrConfig {
            u: 25.0,
            zeta,
            budget: 400,
            b0: None,
            window: 15,
            lr_scale: 0.1,
            ald_scale: 10.0,
            horizon,
            seed: 0,
            consistency_check: false,
        }
    }

    pub fn auto_b0(horizon: usize) -> usize {
        (15.0 * (horizon.max(1) as f64).ln()).ceil().max(1.0) as usize
    }

    pub fn resolved_b0(&self) -> usize {
        self.b0.unwrap_or_else(|| Self::auto_b0(self.horizon))
    }

    pub fn ald_threshold(&self) -> f64 {
        self.ald_scale * (self.horizon as f64).powf(-self.zeta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OklError::InvalidConfig(m));
        if !(self.u > 0.0 && self.u.is_finite()) {
            return bad(format!("U must be positive, got {}", self.u));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta must lie in (0, 1], got {}", self.zeta));
        }
        if self.budget == 0 || self.budget % 2 != 0 {
            return bad(format!("B must be even and positive, got {}", self.budget));
        }
        let b0 = self.resolved_b0();
        if b0 == 0 || b0 >= self.budget {
            return bad(format!("B0 must satisfy 0 < B0 < B, got B0 = {b0}, B = {}", self.budget));
        }
        if self.window == 0 {
            return bad("M must be positive".into());
        }
        if !(self.lr_scale > 0.0 && self.lr_scale.is_finite()) {
            return bad(format!("c must be positive, got {}", self.lr_scale));
        }
        if !(self.ald_scale > 0.0 && self.ald_scale.is_finite()) {
            return bad(format!("ald_scale must be positive, got {}", self.ald_scale));
        }
        if self.horizon == 0 {
            return bad("T must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Pomd,
    Omdr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseEvent {
    None,
    Switched,
    Halved,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundOutcome {
    pub prediction: Label,
    pub margin: f64,
    pub hinge_loss: f64,
    pub updated: bool,
    pub delta: f64,
    pub phase_event: PhaseEvent,
    pub lambda: f64,
}

impl RoundOutcome {
    pub fn mistake(&self, label: Label) -> bool {
        self.prediction != label
    }
}

pub fn hinge(margin: f64, label: Label) -> f64 {
    (1.0 - label.sign() * margin).max(0.0)
}

/// Common round protocol shared by POMDR and the baselines.
pub trait OnlineLearner {
    fn name(&self) -> &'static str;

    fn step(&mut self, x: &Instance, label: Label) -> Result<RoundOutcome>;

    /// Number of stored support points (or features for linear models).
    fn support_size(&self) -> usize;

    /// Cached `‖f‖`.
    fn norm(&self) -> f64;

    /// `‖f‖` recomputed from scratch.
    fn dense_norm(&self) -> Result<f64>;

    /// Radius of the ball the hypothesis is projected onto, if any.
    fn radius(&self) -> Option<f64>;

    fn t_bar(&self) -> Option<usize> {
        None
    }

    fn restart_times(&self) -> &[usize] {
        &[]
    }
}

/// Frozen `f_{t+1}` after `t` rounds: `f'_t + λ_{t+1}·(−∇̄_{t+1})`.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub support: Vec<Instance>,
    pub coefficients: Vec<f64>,
    pub window: Vec<(Instance, Label)>,
    pub lambda: f64,
    pub round: usize,
}

impl Snapshot {
    pub fn evaluate<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<f64> {
        let mut v = 0.0;
        for (xi, a) in self.support.iter().zip(&self.coefficients) {
            v += a * kernel.evaluate(xi, x)?;
        }
        if !self.window.is_empty() {
            let mut s = 0.0;
            for (xr, y) in &self.window {
                s += y.sign() * kernel.evaluate(xr, x)?;
            }
            v += self.lambda * s / self.window.len() as f64;
        }
        Ok(v)
    }

    pub fn predict<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<Label> {
        Ok(Label::from_margin(self.evaluate(kernel, x)?))
    }
}

#[derive(Clone, Debug)]
pub struct PomdrLearner<K> {
    kernel: K,
    cfg: PomdrConfig,
    b0: usize,
    threshold: f64,
    phase: Phase,
    budget: BudgetSet,
    f: KernelExpansion,
    window: OptimismWindow,
    delta_sum: f64,
    epsilon: f64,
    t: usize,
    t_bar: Option<usize>,
    restarts: Vec<usize>,
    mistakes: usize,
    cumulative_loss: f64,
}

impl<K: Kernel> PomdrLearner<K> {
    pub fn new(cfg: PomdrConfig, kernel: K) -> Result<Self> {
        cfg.validate()?;
        let b0 = cfg.resolved_b0();
        Ok(PomdrLearner {
            threshold: cfg.ald_threshold(),
            b0,
            phase: Phase::Pomd,
            budget: BudgetSet::tracked(b0).with_consistency_check(cfg.consistency_check),
            f: KernelExpansion::new(cfg.u),
            window: OptimismWindow::new(cfg.window),
            delta_sum: 0.0,
            epsilon: POMD_EPSILON,
            t: 0,
            t_bar: None,
            restarts: Vec::new(),
            mistakes: 0,
            cumulative_loss: 0.0,
            kernel,
            cfg,
        })
    }

    pub fn config(&self) -> &PomdrConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn b0(&self) -> usize {
        self.b0
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn budget(&self) -> &BudgetSet {
        &self.budget
    }

    pub fn hypothesis(&self) -> &KernelExpansion {
        &self.f
    }

    pub fn window(&self) -> &OptimismWindow {
        &self.window
    }

    pub fn delta_sum(&self) -> f64 {
        self.delta_sum
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Completed rounds.
    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn mistakes(&self) -> usize {
        self.mistakes
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }

    /// `λ = c·U / √(ε + Σδ)` for the next round.
    pub fn learning_rate(&self) -> f64 {
        self.cfg.lr_scale * self.cfg.u / (self.epsilon + self.delta_sum).sqrt()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            support: self.budget.instances().cloned().collect(),
            coefficients: self.f.coefficients().to_vec(),
            window: self.window.entries().map(|e| (e.instance.clone(), e.label)).collect(),
            lambda: self.learning_rate(),
            round: self.t,
        }
    }

    pub fn step(&mut self, x: &Instance, label: Label) -> Result<RoundOutcome> {
        if self.t >= self.cfg.horizon {
            return Err(OklError::HorizonExhausted(self.cfg.horizon));
        }
        let round = self.t + 1;
        let y = label.sign();
        let lambda = self.learning_rate();

        let column = self.budget.column(&self.kernel, x)?;
        let window_values = self.window.kernel_values(&self.kernel, x)?;
        let self_kernel = self.kernel.evaluate(x, x)?;
        let f_prev = self.f.value_from_column(&column);
        let optimistic = self.window.value_from_kernel_values(&window_values);
        let margin = f_prev + lambda * optimistic;
        let prediction = Label::from_margin(margin);
        let loss = hinge(margin, label);

        let mut event = PhaseEvent::None;
        let mut record = DeltaRecord::zero();
        // Kernel column of x against the budget after this round, kept with
        // the window entry while the inverse Gram matrix is maintained.
        let mut window_column = Some(column.clone());

        if loss > 0.0 {
            match self.phase {
                Phase::Pomd => {
                    let ald = self.budget.ald_from_column(column, self_kernel, self.kernel.upper_bound(), self.threshold)?;
                    if ald.holds {
                        let bkb = ald.projected_sq_norm();
                        let beta_f = self
                            .budget
                            .bilinear(self.f.coefficients(), &ald.beta)
                            .expect("tracked budget caches its Gram matrix");
                        let cross = match self.window.cached_cross(&ald.beta) {
                            Some(c) => c,
                            None => self.window.cross(&self.kernel, &self.budget, &ald.beta)?,
                        };
                        record = DeltaRecord::approx(bkb, cross, y);
                        self.f.apply_approx(&ald.beta, bkb, beta_f, y, lambda);
                    } else {
                        self.budget.insert_tracked(x.clone(), label, round, &ald)?;
                        self.window.extend_columns(&window_values);
                        self.f.push_coefficient();
                        self.f.apply_exact(self_kernel, f_prev, y, lambda);
                        record = DeltaRecord::exact(self_kernel, optimistic, y);
                        if let Some(c) = window_column.as_mut() {
                            c.push(self_kernel);
                        }
                        if self.budget.len() == self.b0 {
                            self.t_bar = Some(round + 1);
                            self.phase = Phase::Omdr;
                            self.budget.convert_to_plain(self.cfg.budget);
                            self.window.clear_columns();
                            window_column = None;
                            event = PhaseEvent::Switched;
                        }
                    }
                }
                Phase::Omdr => {
                    self.budget.insert_plain(x.clone(), label, round)?;
                    self.f.push_coefficient();
                    self.f.apply_exact(self_kernel, f_prev, y, lambda);
                    record = DeltaRecord::exact(self_kernel, optimistic, y);
                    if self.budget.len() == self.cfg.budget {
                        self.f.halve_and_redistribute(&mut self.budget, &self.kernel)?;
                        self.restarts.push(round);
                        event = PhaseEvent::Halved;
                    }
                }
            }
        }

        if self.phase == Phase::Omdr {
            window_column = None;
        }
        match window_column {
            Some(c) => self.window.push_with_column(x.clone(), label, c),
            None => self.window.push(x.clone(), label),
        }
        self.delta_sum += record.delta;
        if event != PhaseEvent::None {
            // A new segment starts with the next round.
            self.delta_sum = 0.0;
            self.epsilon = 4.0 * self.kernel.upper_bound();
        }
        self.t = round;
        if prediction != label {
            self.mistakes += 1;
        }
        self.cumulative_loss += loss;

        Ok(RoundOutcome {
            prediction,
            margin,
            hinge_loss: loss,
            updated: loss > 0.0,
            delta: record.delta,
            phase_event: event,
            lambda,
        })
    }
}

impl<K: Kernel> OnlineLearner for PomdrLearner<K> {
    fn name(&self) -> &'static str {
        "pomdr"
    }

    fn step(&mut self, x: &Instance, label: Label) -> Result<RoundOutcome> {
        PomdrLearner::step(self, x, label)
    }

    fn support_size(&self) -> usize {
        self.budget.len()
    }

    fn norm(&self) -> f64 {
        self.f.norm()
    }

    fn dense_norm(&self) -> Result<f64> {
        Ok(self.f.dense_squared_norm(&self.budget, &self.kernel)?.max(0.0).sqrt())
    }

    fn radius(&self) -> Option<f64> {
        Some(self.cfg.u)
    }

    fn t_bar(&self) -> Option<usize> {
        self.t_bar
    }

    fn restart_times(&self) -> &[usize] {
        &self.restarts
    }
}
