//! Budgeted online kernel learning with optimistic mirror descent.
//!
//! The central type is [`PomdrLearner`]: hinge-loss online classification in a
//! reproducing kernel Hilbert space whose support set grows only when a new
//! example is not approximately linearly dependent on the stored ones, and
//! which falls back to a capped budget with halving once that set reaches
//! `B0 = ⌈15 ln T⌉` points. Kernel OGD, FOGD and NOGD baselines share the
//! same [`OnlineLearner`] protocol.

pub mod baselines;
pub mod budget;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod hypothesis;
pub mod kernel;
pub mod learner;
pub mod optimism;

pub use baselines::{stepsize_grid, FogdLearner, FourierFeatureMap, NogdLearner, NystromMap, OgdLearner};
pub use budget::{AldResult, BudgetMode, BudgetSet, Member};
pub use data::{CsvOptions, Dataset, Format, Label, LabeledExample};
pub use error::{OklError, Result};
pub use evaluation::{BoundReport, RunOptions, RunReport};
pub use hypothesis::KernelExpansion;
pub use kernel::{
    CountingKernel, GramMatrix, Instance, Kernel, KernelKind, KernelSpec, SpectrumDecay, SpectrumProfile,
};
pub use learner::{OnlineLearner, Phase, PhaseEvent, PomdrConfig, PomdrLearner, RoundOutcome, Snapshot};
pub use optimism::{DeltaRecord, OptimismWindow};
