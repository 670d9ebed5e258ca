//! Kernel functions, Gram matrices and spectrum diagnostics.
//!
//! An [`Instance`] is either a dense feature vector or a row index into a
//! precomputed kernel matrix. Both go through the same [`Kernel`] trait so the
//! budget machinery can be driven by real data or by a matrix with a
//! prescribed eigen-spectrum.

use std::cell::Cell;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OklError, Result};

/// Largest matrix accepted by [`eigenvalues`].
pub const MAX_EIGEN_DIM: usize = 5000;

/// A point the kernel can be evaluated on.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Dense(Arc<[f64]>),
    /// Row of a precomputed kernel matrix.
    Index(usize),
}

impl Instance {
    pub fn dense(features: Vec<f64>) -> Self {
        Instance::Dense(features.into())
    }

    pub fn features(&self) -> Option<&[f64]> {
        match self {
            Instance::Dense(v) => Some(v),
            Instance::Index(_) => None,
        }
    }
}

impl From<Vec<f64>> for Instance {
    fn from(v: Vec<f64>) -> Self {
        Instance::dense(v)
    }
}

/// A positive definite kernel with values in `[lower_bound, upper_bound]`
/// on the diagonal.
pub trait Kernel {
    fn evaluate(&self, x: &Instance, v: &Instance) -> Result<f64>;

    /// `A`: lower bound on `κ(x, x)`.
    fn lower_bound(&self) -> f64;

    /// `D`: upper bound on `κ(x, x)`.
    fn upper_bound(&self) -> f64;
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn evaluate(&self, x: &Instance, v: &Instance) -> Result<f64> {
        (**self).evaluate(x, v)
    }
    fn lower_bound(&self) -> f64 {
        (**self).lower_bound()
    }
    fn upper_bound(&self) -> f64 {
        (**self).upper_bound()
    }
}

#[derive(Clone, Debug)]
pub enum KernelKind {
    /// `exp(-‖x − v‖² / (2σ²))`
    Gaussian { sigma: f64 },
    Precomputed(Arc<GramMatrix>),
}

#[derive(Clone, Debug)]
pub struct KernelSpec {
    kind: KernelKind,
    lower_bound: f64,
    upper_bound: f64,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(OklError::InvalidKernel(format!("sigma must be positive, got {sigma}")));
        }
        Ok(KernelSpec { kind: KernelKind::Gaussian { sigma }, lower_bound: 1.0, upper_bound: 1.0 })
    }

    /// Kernel whose instances are the row indices of `matrix`. The diagonal
    /// bounds are the observed minimum and maximum of the diagonal.
    pub fn precomputed(matrix: GramMatrix) -> Result<Self> {
        if matrix.n() == 0 {
            return Err(OklError::Empty("precomputed kernel matrix"));
        }
        let diag = matrix.entries.diagonal();
        let lower = diag.min();
        let upper = diag.max();
        if !(lower > 0.0) {
            return Err(OklError::InvalidKernel(format!(
                "precomputed diagonal must be positive, minimum is {lower}"
            )));
        }
        Ok(KernelSpec { kind: KernelKind::Precomputed(Arc::new(matrix)), lower_bound: lower, upper_bound: upper })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Gaussian { sigma } => Some(sigma),
            KernelKind::Precomputed(_) => None,
        }
    }
}

impl Kernel for KernelSpec {
    fn evaluate(&self, x: &Instance, v: &Instance) -> Result<f64> {
        match (&self.kind, x, v) {
            (KernelKind::Gaussian { sigma }, Instance::Dense(a), Instance::Dense(b)) => {
                if a.len() != b.len() {
                    return Err(OklError::DimensionMismatch { left: a.len(), right: b.len() });
                }
                let dist2: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                Ok((-dist2 / (2.0 * sigma * sigma)).exp())
            }
            (KernelKind::Precomputed(m), Instance::Index(i), Instance::Index(j)) => {
                let n = m.n();
                if *i >= n {
                    return Err(OklError::IndexOutOfRange { index: *i, n });
                }
                if *j >= n {
                    return Err(OklError::IndexOutOfRange { index: *j, n });
                }
                Ok(m.get(*i, *j))
            }
            (KernelKind::Gaussian { .. }, _, _) => Err(OklError::InstanceKind("gaussian kernel needs dense instances")),
            (KernelKind::Precomputed(_), _, _) => {
                Err(OklError::InstanceKind("precomputed kernel needs index instances"))
            }
        }
    }

    fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    fn upper_bound(&self) -> f64 {
        self.upper_bound
    }
}

/// Wraps a kernel and counts evaluations. Used to check per-round costs.
#[derive(Debug)]
pub struct CountingKernel<K> {
    inner: K,
    count: Cell<u64>,
}

impl<K: Kernel> CountingKernel<K> {
    pub fn new(inner: K) -> Self {
        CountingKernel { inner, count: Cell::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }

    pub fn reset(&self) {
        self.count.set(0);
    }
}

impl<K: Kernel> Kernel for CountingKernel<K> {
    fn evaluate(&self, x: &Instance, v: &Instance) -> Result<f64> {
        self.count.set(self.count.get() + 1);
        self.inner.evaluate(x, v)
    }
    fn lower_bound(&self) -> f64 {
        self.inner.lower_bound()
    }
    fn upper_bound(&self) -> f64 {
        self.inner.upper_bound()
    }
}

/// Dense symmetric kernel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    /// Wraps a square matrix. Symmetry is checked lazily by [`eigenvalues`].
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(OklError::DimensionMismatch { left: entries.nrows(), right: entries.ncols() });
        }
        Ok(GramMatrix { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(OklError::DimensionMismatch { left: n, right: r.len() });
            }
        }
        Ok(GramMatrix { entries: DMatrix::from_fn(n, n, |i, j| rows[i][j]) })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Builds the Gram matrix of `instances`. Rows are computed in parallel; only
/// the upper triangle is evaluated and mirrored, so the result is exactly
/// symmetric.
pub fn gram<K: Kernel + Sync>(kernel: &K, instances: &[Instance]) -> Result<GramMatrix> {
    let n = instances.len();
    if n == 0 {
        return Err(OklError::Empty("gram needs at least one instance"));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| kernel.evaluate(&instances[i], &instances[j])).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    Ok(GramMatrix { entries: m })
}

/// All eigenvalues of a symmetric matrix in descending order.
pub fn eigenvalues(g: &GramMatrix) -> Result<Vec<f64>> {
    let n = g.n();
    if n > MAX_EIGEN_DIM {
        return Err(OklError::TooLarge(n));
    }
    let scale = g.entries.amax().max(1.0);
    let asym = g.max_asymmetry();
    if asym > 1e-12 * scale {
        return Err(OklError::NotSymmetric(asym));
    }
    let mut values: Vec<f64> = SymmetricEigen::new(g.entries.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decay", rename_all = "lowercase")]
pub enum SpectrumDecay {
    /// `λ_i = R0 · r^i`, `0 < r < 1`.
    Exponential { r: f64 },
    /// `λ_i = R0 · i^(-p)`, `p ≥ 1`.
    Polynomial { p: f64 },
}

/// A prescribed eigenvalue sequence, indexed from 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub decay: SpectrumDecay,
    pub r0: f64,
}

impl SpectrumProfile {
    pub fn exponential(r0: f64, r: f64) -> Result<Self> {
        let p = SpectrumProfile { decay: SpectrumDecay::Exponential { r }, r0 };
        p.validate()?;
        Ok(p)
    }

    pub fn polynomial(r0: f64, p: f64) -> Result<Self> {
        let prof = SpectrumProfile { decay: SpectrumDecay::Polynomial { p }, r0 };
        prof.validate()?;
        Ok(prof)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(OklError::InvalidKernel(format!("R0 must be positive, got {}", self.r0)));
        }
        match self.decay {
            SpectrumDecay::Exponential { r } if !(r > 0.0 && r < 1.0) => {
                Err(OklError::InvalidKernel(format!("exponential rate must lie in (0,1), got {r}")))
            }
            SpectrumDecay::Polynomial { p } if !(p >= 1.0 && p.is_finite()) => {
                Err(OklError::InvalidKernel(format!("polynomial exponent must be >= 1, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// The `i`-th eigenvalue, `i ≥ 1`.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        let i = i as f64;
        match self.decay {
            SpectrumDecay::Exponential { r } => self.r0 * r.powf(i),
            SpectrumDecay::Polynomial { p } => self.r0 * i.powf(-p),
        }
    }

    pub fn sequence(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.eigenvalue(i)).collect()
    }
}

/// Returns `Q Λ Qᵀ` where `Λ` holds the first `n` eigenvalues of `profile` and
/// `Q` is a Haar-distributed orthogonal matrix drawn from `seed`.
pub fn synthesize_psd(profile: &SpectrumProfile, n: usize, seed: u64) -> Result<GramMatrix> {
    profile.validate()?;
    if n == 0 {
        return Err(OklError::Empty("synthesize_psd needs n >= 1"));
    }
    if n > MAX_EIGEN_DIM {
        return Err(OklError::TooLarge(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Fix column signs so that Q is Haar distributed.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let lambdas = profile.sequence(n);
    let mut scaled = q.clone();
    for (j, lam) in lambdas.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*lam);
    }
    let mut k = scaled * q.transpose();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = avg;
            k[(j, i)] = avg;
        }
    }
    Ok(GramMatrix { entries: k })
}
