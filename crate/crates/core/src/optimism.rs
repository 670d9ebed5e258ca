//! Sliding-window optimistic gradient `∇̄_t = −(1/M_t) Σ_r y_{t−r} κ(x_{t−r}, ·)`
//! and the clipped optimism error `δ_t` that drives the learning rate.

use std::collections::VecDeque;

use crate::budget::{dot, BudgetSet};
use crate::data::Label;
use crate::error::{OklError, Result};
use crate::kernel::{Instance, Kernel};

#[derive(Clone, Debug)]
pub struct WindowEntry {
    pub instance: Instance,
    pub label: Label,
    /// `κ(x_i, x_entry)` against the current tracked budget, when maintained.
    column: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct OptimismWindow {
    capacity: usize,
    entries: VecDeque<WindowEntry>,
}

/// `δ = max(raw, 0)` with `raw = ‖∇̃ − ∇̄‖² − ‖∇̄‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaRecord {
    pub delta: f64,
    pub raw: f64,
    pub used_exact_gradient: bool,
}

impl DeltaRecord {
    pub fn zero() -> Self {
        DeltaRecord { delta: 0.0, raw: 0.0, used_exact_gradient: false }
    }

    /// `κ(x,x) − 2y·(−∇̄)(x)`
    pub fn exact(self_kernel: f64, optimistic_value: f64, y: f64) -> Self {
        let raw = self_kernel - 2.0 * y * optimistic_value;
        DeltaRecord { delta: raw.max(0.0), raw, used_exact_gradient: true }
    }

    /// `βᵀK_Sβ − 2y·(1/M)Σ_r y_r Σ_i β_i κ(x_i, x_r)`; `cross` is the averaged
    /// double sum.
    pub fn approx(beta_k_beta: f64, cross: f64, y: f64) -> Self {
        let raw = beta_k_beta - 2.0 * y * cross;
        DeltaRecord { delta: raw.max(0.0), raw, used_exact_gradient: false }
    }
}

impl OptimismWindow {
    pub fn new(capacity: usize) -> Self {
        OptimismWindow { capacity: capacity.max(1), entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `M_t`: number of stored examples.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    pub fn push(&mut self, instance: Instance, label: Label) {
        self.push_entry(WindowEntry { instance, label, column: None });
    }

    /// Pushes an example together with its kernel column against the budget.
    pub(crate) fn push_with_column(&mut self, instance: Instance, label: Label, column: Vec<f64>) {
        self.push_entry(WindowEntry { instance, label, column: Some(column) });
    }

    fn push_entry(&mut self, e: WindowEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    /// `κ(x_r, x)` for every stored example, oldest first.
    pub fn kernel_values<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<Vec<f64>> {
        self.entries.iter().map(|e| kernel.evaluate(&e.instance, x)).collect()
    }

    /// `(1/M_t) Σ_r y_r v_r` for kernel values from [`kernel_values`](Self::kernel_values).
    pub fn value_from_kernel_values(&self, values: &[f64]) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let s: f64 = self.entries.iter().zip(values).map(|(e, v)| e.label.sign() * v).sum();
        s / self.entries.len() as f64
    }

    /// `−∇̄_t(x)`; zero for an empty window.
    pub fn optimistic_value_at<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<f64> {
        let values = self.kernel_values(kernel, x)?;
        Ok(self.value_from_kernel_values(&values))
    }

    /// Optimism error of the exact gradient `−y κ(x, ·)`.
    pub fn delta_exact<K: Kernel>(&self, kernel: &K, x: &Instance, label: Label) -> Result<DeltaRecord> {
        let kxx = kernel.evaluate(x, x)?;
        let opt = self.optimistic_value_at(kernel, x)?;
        Ok(DeltaRecord::exact(kxx, opt, label.sign()))
    }

    /// Optimism error of the projected gradient `−y Φ_S β`.
    pub fn delta_approx<K: Kernel>(&self, kernel: &K, budget: &BudgetSet, beta: &[f64], label: Label) -> Result<DeltaRecord> {
        if beta.len() != budget.len() {
            return Err(OklError::LengthMismatch { expected: budget.len(), got: beta.len() });
        }
        let mut beta_k_beta = 0.0;
        for (i, xi) in budget.instances().enumerate() {
            if beta[i] != 0.0 {
                beta_k_beta += beta[i] * dot(beta, &budget.column(kernel, xi)?);
            }
        }
        let cross = self.cross(kernel, budget, beta)?;
        Ok(DeltaRecord::approx(beta_k_beta, cross, label.sign()))
    }

    /// `(1/M_t) Σ_r y_r Σ_i β_i κ(x_i, x_r)`.
    pub fn cross<K: Kernel>(&self, kernel: &K, budget: &BudgetSet, beta: &[f64]) -> Result<f64> {
        if self.entries.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for e in &self.entries {
            s += e.label.sign() * dot(beta, &budget.column(kernel, &e.instance)?);
        }
        Ok(s / self.entries.len() as f64)
    }

    /// `(1/M_t) Σ_r y_r βᵀ k_S(x_r)` from the cached columns; `None` if any
    /// entry lacks a column aligned with `beta`.
    pub(crate) fn cached_cross(&self, beta: &[f64]) -> Option<f64> {
        if self.entries.is_empty() {
            return Some(0.0);
        }
        let mut s = 0.0;
        for e in &self.entries {
            let col = e.column.as_ref()?;
            if col.len() != beta.len() {
                return None;
            }
            s += e.label.sign() * dot(beta, col);
        }
        Some(s / self.entries.len() as f64)
    }

    /// Appends `κ(x_new, x_r)` to each cached column after a budget insertion.
    pub(crate) fn extend_columns(&mut self, values: &[f64]) {
        for (e, v) in self.entries.iter_mut().zip(values) {
            if let Some(col) = e.column.as_mut() {
                col.push(*v);
            }
        }
    }

    pub(crate) fn clear_columns(&mut self) {
        for e in &mut self.entries {
            e.column = None;
        }
    }
}
