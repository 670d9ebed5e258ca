//! The hypothesis `f' = Σ a_i κ(x_i, ·)` over the budget members.
//!
//! The RKHS norm is cached and updated incrementally on every gradient step;
//! the only dense recomputation happens when the budget is halved.

use crate::budget::{dot, BudgetMode, BudgetSet};
use crate::data::Label;
use crate::error::{OklError, Result};
use crate::kernel::{Instance, Kernel};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelExpansion {
    coefficients: Vec<f64>,
    squared_norm: f64,
    radius: f64,
}

impl KernelExpansion {
    pub fn new(radius: f64) -> Self {
        KernelExpansion { coefficients: Vec::new(), squared_norm: 0.0, radius }
    }

    pub fn from_parts(coefficients: Vec<f64>, squared_norm: f64, radius: f64) -> Self {
        KernelExpansion { coefficients, squared_norm, radius }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn squared_norm(&self) -> f64 {
        self.squared_norm
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm.max(0.0).sqrt()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `Σ a_i κ(x_i, x)`.
    pub fn evaluate_at<K: Kernel>(&self, budget: &BudgetSet, kernel: &K, x: &Instance) -> Result<f64> {
        self.check_aligned(budget)?;
        let column = budget.column(kernel, x)?;
        Ok(self.value_from_column(&column))
    }

    /// `Σ a_i k_i` for a precomputed kernel column.
    pub fn value_from_column(&self, column: &[f64]) -> f64 {
        dot(&self.coefficients, column)
    }

    /// Exact-gradient step `f' ← Π_U(f' + λ y κ(x, ·))`. `x` must be the last
    /// member of `budget`; its coefficient is created if the caller has just
    /// inserted it.
    pub fn step_exact<K: Kernel>(
        &mut self,
        budget: &BudgetSet,
        kernel: &K,
        x: &Instance,
        label: Label,
        lambda: f64,
    ) -> Result<()> {
        match budget.members().last() {
            Some(m) if &m.instance == x => {}
            _ => return Err(OklError::NotLastMember),
        }
        if self.coefficients.len() + 1 == budget.len() {
            self.coefficients.push(0.0);
        }
        self.check_aligned(budget)?;
        let column = budget.column(kernel, x)?;
        let prev = self.value_from_column(&column);
        let kxx = kernel.evaluate(x, x)?;
        self.apply_exact(kxx, prev, label.sign(), lambda);
        Ok(())
    }

    /// Exact step given `κ(x, x)` and `f'(x)`; updates the last coefficient.
    pub(crate) fn apply_exact(&mut self, self_kernel: f64, prev_value: f64, y: f64, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        self.squared_norm += lambda * lambda * self_kernel + 2.0 * lambda * y * prev_value;
        if let Some(last) = self.coefficients.last_mut() {
            *last += lambda * y;
        }
        self.project_to_ball();
    }

    /// Approximate-gradient step `f' ← Π_U(f' + λ y Φ_S β)`.
    pub fn step_approx<K: Kernel>(
        &mut self,
        budget: &BudgetSet,
        kernel: &K,
        label: Label,
        lambda: f64,
        beta: &[f64],
    ) -> Result<()> {
        self.check_aligned(budget)?;
        if beta.len() != budget.len() {
            return Err(OklError::LengthMismatch { expected: budget.len(), got: beta.len() });
        }
        // f'(x_i) for every member, then βᵀ K_S β and Σ β_i f'(x_i)
        let mut beta_k_beta = 0.0;
        let mut beta_f = 0.0;
        for (i, xi) in budget.instances().enumerate() {
            let col = budget.column(kernel, xi)?;
            beta_k_beta += beta[i] * dot(beta, &col);
            beta_f += beta[i] * self.value_from_column(&col);
        }
        self.apply_approx(beta, beta_k_beta, beta_f, label.sign(), lambda);
        Ok(())
    }

    pub(crate) fn apply_approx(&mut self, beta: &[f64], beta_k_beta: f64, beta_f: f64, y: f64, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        self.squared_norm += lambda * lambda * beta_k_beta + 2.0 * lambda * y * beta_f;
        for (a, b) in self.coefficients.iter_mut().zip(beta) {
            *a += lambda * y * b;
        }
        self.project_to_ball();
    }

    pub(crate) fn push_coefficient(&mut self) {
        self.coefficients.push(0.0);
    }

    /// Scales `f'` back onto the ball of radius `U` if it left it.
    pub fn project_to_ball(&mut self) {
        if self.squared_norm < 0.0 {
            self.squared_norm = 0.0;
        }
        let norm = self.squared_norm.sqrt();
        if norm > self.radius {
            let s = self.radius / norm;
            for a in &mut self.coefficients {
                *a *= s;
            }
            self.squared_norm = self.radius * self.radius;
        }
    }

    /// Removes the newest half of a full plain budget. Each removed
    /// coefficient is added to the kept member with the largest kernel value
    /// against it (ties go to the oldest). The norm is recomputed densely; no
    /// rescaling happens here.
    pub fn redistribute_removed<K: Kernel>(&mut self, budget: &mut BudgetSet, kernel: &K) -> Result<()> {
        if budget.mode() != BudgetMode::Plain {
            return Err(OklError::WrongBudgetMode("tracked"));
        }
        let cap = budget.capacity();
        if budget.len() != cap || cap % 2 != 0 {
            return Err(OklError::LengthMismatch { expected: cap, got: budget.len() });
        }
        self.check_aligned(budget)?;
        let half = cap / 2;
        let removed = budget.retain_oldest(half)?;
        let removed_coeffs = self.coefficients.split_off(half);
        for (member, a) in removed.iter().zip(removed_coeffs) {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (i, kept) in budget.instances().enumerate() {
                let v = kernel.evaluate(kept, &member.instance)?;
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            self.coefficients[best] += a;
        }
        self.squared_norm = self.dense_squared_norm(budget, kernel)?;
        Ok(())
    }

    /// [`redistribute_removed`](Self::redistribute_removed) followed by a
    /// rescale to norm exactly `U`. Returns `false` when the redistributed
    /// expansion has zero norm and was left unscaled.
    pub fn halve_and_redistribute<K: Kernel>(&mut self, budget: &mut BudgetSet, kernel: &K) -> Result<bool> {
        self.redistribute_removed(budget, kernel)?;
        let norm = self.norm();
        if norm <= 0.0 || self.coefficients.iter().all(|a| *a == 0.0) {
            self.squared_norm = 0.0;
            return Ok(false);
        }
        let s = self.radius / norm;
        for a in &mut self.coefficients {
            *a *= s;
        }
        self.squared_norm = self.radius * self.radius;
        Ok(true)
    }

    /// `aᵀ K_S a` by direct evaluation.
    pub fn dense_squared_norm<K: Kernel>(&self, budget: &BudgetSet, kernel: &K) -> Result<f64> {
        self.check_aligned(budget)?;
        let inst: Vec<&Instance> = budget.instances().collect();
        let mut total = 0.0;
        for i in 0..inst.len() {
            let ai = self.coefficients[i];
            if ai == 0.0 {
                continue;
            }
            total += ai * ai * kernel.evaluate(inst[i], inst[i])?;
            for j in (i + 1)..inst.len() {
                total += 2.0 * ai * self.coefficients[j] * kernel.evaluate(inst[i], inst[j])?;
            }
        }
        Ok(total.max(0.0))
    }

    fn check_aligned(&self, budget: &BudgetSet) -> Result<()> {
        if self.coefficients.len() != budget.len() {
            return Err(OklError::LengthMismatch { expected: budget.len(), got: self.coefficients.len() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{GramMatrix, KernelSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad_form(coeffs: &[f64], pts: &[Instance], k: &KernelSpec) -> f64 {
        let mut s = 0.0;
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                s += coeffs[i] * coeffs[j] * k.evaluate(&pts[i], &pts[j]).unwrap();
            }
        }
        s
    }

    fn plain_with(points: &[Instance]) -> BudgetSet {
        let mut b = BudgetSet::plain(points.len());
        for (i, p) in points.iter().enumerate() {
            b.insert_plain(p.clone(), Label::Positive, i).unwrap();
        }
        b
    }

    fn random_points(n: usize, seed: u64) -> Vec<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Instance::dense((0..3).map(|_| rng.random_range(-1.0..1.0)).collect())).collect()
    }

    #[test]
    fn evaluate_cases() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = random_points(5, 1);
        let b = plain_with(&pts);
        let zero = KernelExpansion::from_parts(vec![0.0; 5], 0.0, 10.0);
        assert_eq!(zero.evaluate_at(&b, &k, &pts[0]).unwrap(), 0.0);

        let coeffs = vec![0.3, -1.2, 0.7, 2.0, -0.1];
        let f = KernelExpansion::from_parts(coeffs.clone(), 0.0, 10.0);
        let q = Instance::dense(vec![0.2, 0.2, -0.4]);
        let mut expect = 0.0;
        for (a, p) in coeffs.iter().zip(&pts) {
            expect += a * k.evaluate(p, &q).unwrap();
        }
        assert!((f.evaluate_at(&b, &k, &q).unwrap() - expect).abs() < 1e-12);

        let single = plain_with(&pts[..1]);
        let f = KernelExpansion::from_parts(vec![2.0], 4.0, 10.0);
        assert_eq!(f.evaluate_at(&single, &k, &pts[0]).unwrap(), 2.0);
        assert!(f.evaluate_at(&b, &k, &pts[0]).is_err());
    }

    #[test]
    fn exact_step_from_zero() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = Instance::dense(vec![1.0]);
        let b = plain_with(&[x.clone()]);
        let mut f = KernelExpansion::new(25.0);
        f.step_exact(&b, &k, &x, Label::Positive, 0.5).unwrap();
        assert_eq!(f.coefficients(), &[0.5]);
        assert_relative_eq!(f.squared_norm(), 0.25, epsilon = 1e-15);

        let before = f.clone();
        f.step_exact(&b, &k, &x, Label::Positive, 0.0).unwrap();
        assert_eq!(f, before);

        let other = Instance::dense(vec![2.0]);
        assert!(matches!(f.step_exact(&b, &k, &other, Label::Positive, 0.1), Err(OklError::NotLastMember)));
    }

    #[test]
    fn exact_step_norm_matches_quadratic_form() {
        let k = KernelSpec::gaussian(0.9).unwrap();
        let pts = random_points(3, 4);
        let b = plain_with(&pts);
        let coeffs = vec![0.4, -0.8, 0.0];
        let mut f = KernelExpansion::from_parts(coeffs.clone(), quad_form(&coeffs, &pts, &k), 100.0);
        f.step_exact(&b, &k, &pts[2], Label::Negative, 0.37).unwrap();
        let oracle = quad_form(f.coefficients(), &pts, &k);
        assert!((f.squared_norm() - oracle).abs() < 1e-9);
        assert_relative_eq!(f.coefficients()[2], -0.37);
    }

    #[test]
    fn approx_step_cases() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = random_points(4, 6);
        let b = plain_with(&pts);
        let coeffs = vec![0.1, 0.2, -0.3, 0.5];
        let mut f = KernelExpansion::from_parts(coeffs.clone(), quad_form(&coeffs, &pts, &k), 100.0);
        let before = f.clone();
        f.step_approx(&b, &k, Label::Positive, 0.4, &[0.0; 4]).unwrap();
        assert_eq!(f, before);

        let beta = [0.9, -0.4, 0.25, 1.3];
        f.step_approx(&b, &k, Label::Negative, 0.6, &beta).unwrap();
        let oracle = quad_form(f.coefficients(), &pts, &k);
        assert!((f.squared_norm() - oracle).abs() < 1e-9);
        assert!(f.step_approx(&b, &k, Label::Negative, 0.6, &beta[..2]).is_err());

        let one = plain_with(&pts[..1]);
        let mut g = KernelExpansion::from_parts(vec![0.0], 0.0, 10.0);
        g.step_approx(&one, &k, Label::Negative, 0.3, &[1.0]).unwrap();
        assert_relative_eq!(g.coefficients()[0], -0.3);
    }

    #[test]
    fn projection_cases() {
        let mut f = KernelExpansion::from_parts(vec![1.0, 2.0], 4.0, 4.0);
        f.project_to_ball();
        assert_eq!(f.coefficients(), &[1.0, 2.0]);

        let mut f = KernelExpansion::from_parts(vec![1.0, 2.0], 64.0, 4.0);
        f.project_to_ball();
        assert_eq!(f.coefficients(), &[0.5, 1.0]);
        assert_eq!(f.squared_norm(), 16.0);

        let k = KernelSpec::gaussian(0.5).unwrap();
        let pts = random_points(6, 9);
        let coeffs = vec![3.0, -2.0, 4.0, 1.0, -5.0, 2.5];
        let mut f = KernelExpansion::from_parts(coeffs.clone(), quad_form(&coeffs, &pts, &k), 1.5);
        f.project_to_ball();
        assert!((quad_form(f.coefficients(), &pts, &k).sqrt() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn halving_two_members() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = random_points(2, 3);
        let mut b = plain_with(&pts);
        let (a1, a2) = (0.7, -1.9);
        let u = 3.0;
        let mut f = KernelExpansion::from_parts(vec![a1, a2], quad_form(&[a1, a2], &pts, &k), u);
        assert!(f.halve_and_redistribute(&mut b, &k).unwrap());
        assert_eq!(b.len(), 1);
        let expect = (a1 + a2) * u / ((a1 + a2).abs() * 1.0f64.sqrt());
        assert_relative_eq!(f.coefficients()[0], expect, epsilon = 1e-12);
        assert_relative_eq!(f.squared_norm(), u * u);
    }

    #[test]
    fn halving_zero_expansion_skips_rescale() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = random_points(4, 5);
        let mut b = plain_with(&pts);
        let mut f = KernelExpansion::from_parts(vec![0.0; 4], 0.0, 2.0);
        assert!(!f.halve_and_redistribute(&mut b, &k).unwrap());
        assert_eq!(f.coefficients(), &[0.0, 0.0]);
        assert_eq!(f.squared_norm(), 0.0);
    }

    #[test]
    fn halving_four_members_by_hand() {
        // x3 is closest to x2, x4 ties between x1 and x2 and goes to x1.
        let g = GramMatrix::from_rows(&[
            vec![1.0, 0.2, 0.1, 0.3],
            vec![0.2, 1.0, 0.6, 0.3],
            vec![0.1, 0.6, 1.0, 0.2],
            vec![0.3, 0.3, 0.2, 1.0],
        ])
        .unwrap();
        let k = KernelSpec::precomputed(g).unwrap();
        let pts: Vec<Instance> = (0..4).map(Instance::Index).collect();
        let mut b = plain_with(&pts);
        let coeffs = vec![1.0, 2.0, -0.5, 0.25];
        let mut f = KernelExpansion::from_parts(coeffs.clone(), quad_form(&coeffs, &pts, &k), 2.0);
        f.halve_and_redistribute(&mut b, &k).unwrap();
        // pre-rescale: [1.25, 1.5], norm² = 1.25² + 1.5² + 2·0.2·1.25·1.5 = 4.5625
        let pre_norm = 4.5625f64.sqrt();
        assert_relative_eq!(f.coefficients()[0], 1.25 * 2.0 / pre_norm, epsilon = 1e-12);
        assert_relative_eq!(f.coefficients()[1], 1.5 * 2.0 / pre_norm, epsilon = 1e-12);
        assert_relative_eq!(quad_form(f.coefficients(), &pts[..2], &k), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn halving_preconditions() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let pts = random_points(3, 1);
        let mut b = BudgetSet::plain(4);
        for (i, p) in pts.iter().enumerate() {
            b.insert_plain(p.clone(), Label::Positive, i).unwrap();
        }
        let mut f = KernelExpansion::from_parts(vec![1.0; 3], 1.0, 1.0);
        assert!(f.halve_and_redistribute(&mut b, &k).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn redistribution_preserves_mass_and_rescale_is_exact(seed in 0u64..100_000, half in 1usize..8) {
                let k = KernelSpec::gaussian(0.8).unwrap();
                let pts = random_points(2 * half, seed);
                let mut b = plain_with(&pts);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                let coeffs: Vec<f64> = (0..2 * half).map(|_| rng.random_range(-2.0..2.0)).collect();
                let mass: f64 = coeffs.iter().sum();
                let mut f = KernelExpansion::from_parts(coeffs.clone(), quad_form(&coeffs, &pts, &k), 1.7);
                let mut b2 = b.clone();
                let mut g = f.clone();
                g.redistribute_removed(&mut b2, &k).unwrap();
                prop_assert!((g.coefficients().iter().sum::<f64>() - mass).abs() < 1e-12);

                if f.halve_and_redistribute(&mut b, &k).unwrap() {
                    let n2 = quad_form(f.coefficients(), &pts[..half], &k);
                    prop_assert!((n2.sqrt() - 1.7).abs() <= 1e-8 * 1.7);
                }
            }

            #[test]
            fn norm_cache_tracks_mixed_operations(seed in 0u64..100_000) {
                let k = KernelSpec::gaussian(1.0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut b = BudgetSet::plain(16);
                let mut f = KernelExpansion::new(3.0);
                let mut next = 0usize;
                for _ in 0..1000 {
                    let op = rng.random_range(0..3);
                    let y = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
                    let lam = rng.random_range(0.0..0.8);
                    if op == 0 || b.is_empty() {
                        if b.len() == b.capacity() {
                            f.halve_and_redistribute(&mut b, &k).unwrap();
                        }
                        let x = Instance::dense((0..2).map(|_| rng.random_range(-1.5..1.5)).collect());
                        b.insert_plain(x.clone(), y, next).unwrap();
                        next += 1;
                        f.step_exact(&b, &k, &x, y, lam).unwrap();
                    } else if op == 1 {
                        let beta: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                        f.step_approx(&b, &k, y, lam, &beta).unwrap();
                    } else {
                        let x = b.members().last().unwrap().instance.clone();
                        f.step_exact(&b, &k, &x, y, lam).unwrap();
                    }
                    let dense = f.dense_squared_norm(&b, &k).unwrap();
                    prop_assert!((f.squared_norm() - dense).abs() <= 1e-6 * dense.max(1e-3));
                    prop_assert!(dense.sqrt() <= 3.0 + 1e-6);
                }
            }
        }
    }
}
