//! Comparison learners: kernel OGD, FOGD on random Fourier features and NOGD
//! on Nyström features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::budget::dot;
use crate::data::Label;
use crate::error::{OklError, Result};
use crate::kernel::{Instance, Kernel};
use crate::learner::{hinge, OnlineLearner, PhaseEvent, RoundOutcome};

/// Diagonal regularization added to the landmark Gram matrix.
pub const NYSTROM_RIDGE: f64 = 1e-10;

/// `η ∈ {10^-3, …, 10^3} / √T`.
pub fn stepsize_grid(horizon: usize) -> Vec<f64> {
    let s = (horizon.max(1) as f64).sqrt();
    (-3..=3).map(|e| 10f64.powi(e) / s).collect()
}

fn outcome(margin: f64, label: Label, updated: bool, lambda: f64) -> RoundOutcome {
    RoundOutcome {
        prediction: Label::from_margin(margin),
        margin,
        hinge_loss: hinge(margin, label),
        updated,
        delta: 0.0,
        phase_event: PhaseEvent::None,
        lambda,
    }
}

fn project(w: &mut [f64], radius: f64) {
    let n = dot(w, w).sqrt();
    if n > radius {
        let s = radius / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
}

/// Unbudgeted kernel online gradient descent on the hinge loss,
/// `f ← Π_U(f + η y κ(x, ·))`.
#[derive(Clone, Debug)]
pub struct OgdLearner<K> {
    kernel: K,
    eta: f64,
    radius: f64,
    support: Vec<Instance>,
    coefficients: Vec<f64>,
    squared_norm: f64,
}

impl<K: Kernel> OgdLearner<K> {
    pub fn new(kernel: K, eta: f64, radius: f64) -> Self {
        OgdLearner { kernel, eta, radius, support: Vec::new(), coefficients: Vec::new(), squared_norm: 0.0 }
    }

    pub fn evaluate(&self, x: &Instance) -> Result<f64> {
        let mut v = 0.0;
        for (xi, a) in self.support.iter().zip(&self.coefficients) {
            v += a * self.kernel.evaluate(xi, x)?;
        }
        Ok(v)
    }

    pub fn support(&self) -> &[Instance] {
        &self.support
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

impl<K: Kernel> OnlineLearner for OgdLearner<K> {
    fn name(&self) -> &'static str {
        "ogd"
    }

    fn step(&mut self, x: &Instance, label: Label) -> Result<RoundOutcome> {
        let margin = self.evaluate(x)?;
        let out = outcome(margin, label, false, self.eta);
        if out.hinge_loss > 0.0 {
            let y = label.sign();
            let kxx = self.kernel.evaluate(x, x)?;
            self.squared_norm += self.eta * self.eta * kxx + 2.0 * self.eta * y * margin;
            self.support.push(x.clone());
            self.coefficients.push(self.eta * y);
            let n = self.squared_norm.max(0.0).sqrt();
            if n > self.radius {
                let s = self.radius / n;
                self.coefficients.iter_mut().for_each(|a| *a *= s);
                self.squared_norm = self.radius * self.radius;
            }
            return Ok(RoundOutcome { updated: true, ..out });
        }
        Ok(out)
    }

    fn support_size(&self) -> usize {
        self.support.len()
    }

    fn norm(&self) -> f64 {
        self.squared_norm.max(0.0).sqrt()
    }

    fn dense_norm(&self) -> Result<f64> {
        let mut s = 0.0;
        for (i, xi) in self.support.iter().enumerate() {
            for (j, xj) in self.support.iter().enumerate() {
                s += self.coefficients[i] * self.coefficients[j] * self.kernel.evaluate(xi, xj)?;
            }
        }
        Ok(s.max(0.0).sqrt())
    }

    fn radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// `z(x) = √(2/B) cos(Ωx + b)` with `Ω_ij ~ N(0, 1/σ²)`, `b_i ~ U[0, 2π)`.
#[derive(Clone, Debug)]
pub struct FourierFeatureMap {
    frequencies: DMatrix<f64>,
    phases: Vec<f64>,
    scale: f64,
}

impl FourierFeatureMap {
    pub fn new(dimension: usize, num_features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if num_features == 0 {
            return Err(OklError::InvalidConfig("number of random features must be positive".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(OklError::InvalidKernel(format!("sigma must be positive, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / sigma).expect("valid normal");
        let frequencies = DMatrix::from_fn(num_features, dimension, |_, _| normal.sample(&mut rng));
        let phases = (0..num_features).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Ok(FourierFeatureMap { frequencies, phases, scale: (2.0 / num_features as f64).sqrt() })
    }

    pub fn num_features(&self) -> usize {
        self.phases.len()
    }

    pub fn dimension(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(OklError::DimensionMismatch { left: x.len(), right: self.dimension() });
        }
        let proj = &self.frequencies * DVector::from_column_slice(x);
        Ok(proj.iter().zip(&self.phases).map(|(p, b)| self.scale * (p + b).cos()).collect())
    }
}

/// Linear online gradient descent on a fixed feature map.
#[derive(Clone, Debug)]
struct LinearModel {
    w: Vec<f64>,
    eta: f64,
    radius: f64,
}

impl LinearModel {
    fn step(&mut self, z: &[f64], label: Label) -> RoundOutcome {
        let margin = dot(&self.w, z);
        let out = outcome(margin, label, false, self.eta);
        if out.hinge_loss > 0.0 {
            let step = self.eta * label.sign();
            self.w.iter_mut().zip(z).for_each(|(w, v)| *w += step * v);
            project(&mut self.w, self.radius);
            return RoundOutcome { updated: true, ..out };
        }
        out
    }

    fn norm(&self) -> f64 {
        dot(&self.w, &self.w).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct FogdLearner {
    map: FourierFeatureMap,
    model: LinearModel,
}

impl FogdLearner {
    pub fn new(map: FourierFeatureMap, eta: f64, radius: f64) -> Self {
        let model = LinearModel { w: vec![0.0; map.num_features()], eta, radius };
        FogdLearner { map, model }
    }

    pub fn weights(&self) -> &[f64] {
        &self.model.w
    }
}

impl OnlineLearner for FogdLearner {
    fn name(&self) -> &'static str {
        "fogd"
    }

    fn step(&mut self, x: &Instance, label: Label) -> Result<RoundOutcome> {
        let f = x.features().ok_or(OklError::InstanceKind("random features need dense instances"))?;
        let z = self.map.map(f)?;
        Ok(self.model.step(&z, label))
    }

    fn support_size(&self) -> usize {
        self.map.num_features()
    }

    fn norm(&self) -> f64 {
        self.model.norm()
    }

    fn dense_norm(&self) -> Result<f64> {
        Ok(self.model.norm())
    }

    fn radius(&self) -> Option<f64> {
        Some(self.model.radius)
    }
}

/// Rank-`k` Nyström features `φ(x) = Λ_k^(−1/2) V_kᵀ k_L(x)` over landmarks `L`.
#[derive(Clone, Debug)]
pub struct NystromMap {
    landmarks: Vec<Instance>,
    factor: DMatrix<f64>,
}

impl NystromMap {
    pub fn build<K: Kernel>(kernel: &K, landmarks: Vec<Instance>, rank: usize) -> Result<Self> {
        if landmarks.is_empty() {
            return Err(OklError::Empty("Nyström landmarks"));
        }
        let n = landmarks.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = kernel.evaluate(&landmarks[i], &landmarks[j])?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
            g[(i, i)] += NYSTROM_RIDGE;
        }
        let eig = SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let keep: Vec<usize> = order.into_iter().take(rank.clamp(1, n)).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
        if keep.is_empty() {
            return Err(OklError::Singular);
        }
        let mut factor = DMatrix::zeros(keep.len(), n);
        for (r, &i) in keep.iter().enumerate() {
            let s = 1.0 / eig.eigenvalues[i].sqrt();
            for c in 0..n {
                factor[(r, c)] = s * eig.eigenvectors[(c, i)];
            }
        }
        Ok(NystromMap { landmarks, factor })
    }

    pub fn rank(&self) -> usize {
        self.factor.nrows()
    }

    pub fn landmarks(&self) -> &[Instance] {
        &self.landmarks
    }

    pub fn map<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<Vec<f64>> {
        let col: Vec<f64> = self.landmarks.iter().map(|l| kernel.evaluate(l, x)).collect::<Result<_>>()?;
        Ok((&self.factor * DVector::from_vec(col)).iter().copied().collect())
    }
}

/// Kernel OGD while the first `B` examples are collected as landmarks, then
/// linear OGD on the rank-`k` Nyström features, starting from the projection
/// of the kernel hypothesis.
#[derive(Clone, Debug)]
pub struct NogdLearner<K> {
    kernel: K,
    landmarks_wanted: usize,
    rank: usize,
    landmarks: Vec<Instance>,
    ogd: OgdLearner<K>,
    map: Option<NystromMap>,
    model: LinearModel,
}

impl<K: Kernel + Clone> NogdLearner<K> {
    pub fn new(kernel: K, landmarks: usize, rank: usize, eta: f64, radius: f64) -> Result<Self> {
        if landmarks == 0 || rank == 0 || rank > landmarks {
            return Err(OklError::InvalidConfig(format!(
                "Nyström needs 0 < rank <= landmarks, got rank {rank}, landmarks {landmarks}"
            )));
        }
        Ok(NogdLearner {
            ogd: OgdLearner::new(kernel.clone(), eta, radius),
            kernel,
            landmarks_wanted: landmarks,
            rank,
            landmarks: Vec::with_capacity(landmarks),
            map: None,
            model: LinearModel { w: Vec::new(), eta, radius },
        })
    }

    /// `rank = 0.2·B`.
    pub fn default_rank(landmarks: usize) -> usize {
        ((0.2 * landmarks as f64).round() as usize).max(1)
    }

    pub fn feature_map(&self) -> Option<&NystromMap> {
        self.map.as_ref()
    }

    fn finish_landmarks(&mut self) -> Result<()> {
        let map = NystromMap::build(&self.kernel, std::mem::take(&mut self.landmarks), self.rank)?;
        let mut w = vec![0.0; map.rank()];
        for (xs, a) in self.ogd.support().iter().zip(self.ogd.coefficients()) {
            let phi = map.map(&self.kernel, xs)?;
            w.iter_mut().zip(&phi).for_each(|(w, p)| *w += a * p);
        }
        project(&mut w, self.model.radius);
        self.model.w = w;
        self.map = Some(map);
        Ok(())
    }
}

impl<K: Kernel + Clone> OnlineLearner for NogdLearner<K> {
    fn name(&self) -> &'static str {
        "nogd"
    }

    fn step(&mut self, x: &Instance, label: Label) -> Result<RoundOutcome> {
        if let Some(map) = &self.map {
            let z = map.map(&self.kernel, x)?;
            return Ok(self.model.step(&z, label));
        }
        let out = self.ogd.step(x, label)?;
        self.landmarks.push(x.clone());
        if self.landmarks.len() == self.landmarks_wanted {
            self.finish_landmarks()?;
        }
        Ok(out)
    }

    fn support_size(&self) -> usize {
        match &self.map {
            Some(m) => m.landmarks().len(),
            None => self.ogd.support_size(),
        }
    }

    fn norm(&self) -> f64 {
        match self.map {
            Some(_) => self.model.norm(),
            None => self.ogd.norm(),
        }
    }

    fn dense_norm(&self) -> Result<f64> {
        match self.map {
            Some(_) => Ok(self.model.norm()),
            None => self.ogd.dense_norm(),
        }
    }

    fn radius(&self) -> Option<f64> {
        Some(self.model.radius)
    }
}
