//! The support set `S_t`.
//!
//! In tracked mode the set keeps `K_S` and `K_S⁻¹` up to date so that the
//! approximate-linear-dependence (ALD) test costs `O(|S|)` kernel
//! evaluations plus `O(|S|²)` arithmetic. In plain mode it is an append-only
//! list with a hard capacity.

use nalgebra::{DMatrix, DVector};

use crate::data::Label;
use crate::error::{OklError, Result};
use crate::kernel::{Instance, Kernel};

/// Insertions with a projection error below this are refused.
pub const MIN_INSERT_ALPHA: f64 = 1e-12;

/// Tolerance of the optional inverse consistency check.
pub const INVERSE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetMode {
    Tracked,
    Plain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub instance: Instance,
    pub label: Label,
    pub arrival: usize,
}

/// Outcome of projecting `κ(x, ·)` onto the span of the budget.
#[derive(Clone, Debug, PartialEq)]
pub struct AldResult {
    /// `β* = K_S⁻¹ k_S`
    pub beta: Vec<f64>,
    /// Projection error, clamped to `[0, D]`. Equals `D` for an empty budget.
    pub alpha: f64,
    pub holds: bool,
    /// `k_S`, the kernel column `κ(x_i, x)`.
    pub column: Vec<f64>,
    /// `κ(x, x)`
    pub self_kernel: f64,
}

impl AldResult {
    /// `βᵀ K_S β`, which equals `βᵀ k_S` for the exact projection.
    pub fn projected_sq_norm(&self) -> f64 {
        dot(&self.beta, &self.column)
    }
}

#[derive(Clone, Debug)]
pub struct BudgetSet {
    members: Vec<Member>,
    capacity: usize,
    mode: BudgetMode,
    gram: Option<DMatrix<f64>>,
    inverse: Option<DMatrix<f64>>,
    consistency_check: bool,
}

impl BudgetSet {
    pub fn tracked(capacity: usize) -> Self {
        BudgetSet {
            members: Vec::new(),
            capacity,
            mode: BudgetMode::Tracked,
            gram: Some(DMatrix::zeros(0, 0)),
            inverse: Some(DMatrix::zeros(0, 0)),
            consistency_check: false,
        }
    }

    pub fn plain(capacity: usize) -> Self {
        BudgetSet { members: Vec::new(), capacity, mode: BudgetMode::Plain, gram: None, inverse: None, consistency_check: false }
    }

    /// After every tracked insertion, verify `K_S · K_S⁻¹ ≈ I` and rebuild the
    /// inverse from scratch when the check fails.
    pub fn with_consistency_check(mut self, on: bool) -> Self {
        self.consistency_check = on;
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> BudgetMode {
        self.mode
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.members.iter().map(|m| &m.instance)
    }

    pub fn inverse_gram(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    /// Cached `K_S` (tracked mode only).
    pub fn gram_cache(&self) -> Option<&DMatrix<f64>> {
        self.gram.as_ref()
    }

    /// `κ(x_i, x)` for every member, in member order.
    pub fn column<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<Vec<f64>> {
        self.members.iter().map(|m| kernel.evaluate(&m.instance, x)).collect()
    }

    pub fn ald_check<K: Kernel>(&self, kernel: &K, x: &Instance, threshold: f64) -> Result<AldResult> {
        self.require(BudgetMode::Tracked)?;
        let column = self.column(kernel, x)?;
        let self_kernel = kernel.evaluate(x, x)?;
        self.ald_from_column(column, self_kernel, kernel.upper_bound(), threshold)
    }

    /// ALD test from an already evaluated kernel column.
    pub fn ald_from_column(&self, column: Vec<f64>, self_kernel: f64, upper_bound: f64, threshold: f64) -> Result<AldResult> {
        self.require(BudgetMode::Tracked)?;
        if column.len() != self.len() {
            return Err(OklError::LengthMismatch { expected: self.len(), got: column.len() });
        }
        let (beta, alpha) = if self.is_empty() {
            (Vec::new(), upper_bound)
        } else {
            let inv = self.inverse.as_ref().expect("tracked budget keeps an inverse");
            let k = DVector::from_column_slice(&column);
            let beta: Vec<f64> = (inv * &k).iter().copied().collect();
            let alpha = (self_kernel - dot(&column, &beta)).clamp(0.0, upper_bound);
            (beta, alpha)
        };
        Ok(AldResult { beta, alpha, holds: alpha.sqrt() <= threshold, column, self_kernel })
    }

    /// Appends `x` and extends `K_S⁻¹` by the rank-one update
    /// `pad(K_S⁻¹) + (1/α)(β; −1)(β; −1)ᵀ`.
    pub fn insert_tracked(&mut self, x: Instance, label: Label, arrival: usize, prior: &AldResult) -> Result<()> {
        self.require(BudgetMode::Tracked)?;
        let n = self.len();
        if n >= self.capacity {
            return Err(OklError::BudgetFull(self.capacity));
        }
        if prior.beta.len() != n || prior.column.len() != n {
            return Err(OklError::LengthMismatch { expected: n, got: prior.beta.len() });
        }
        self.check_arrival(arrival)?;
        // For an empty budget α is set to D by convention; the Schur complement
        // of the 1x1 Gram is κ(x, x) itself.
        let schur = if n == 0 { prior.self_kernel } else { prior.alpha };
        if !(schur >= MIN_INSERT_ALPHA) {
            return Err(OklError::DegenerateInsertion(schur));
        }

        let gram = self.gram.as_mut().expect("tracked");
        let mut grown = DMatrix::zeros(n + 1, n + 1);
        grown.view_mut((0, 0), (n, n)).copy_from(gram);
        for i in 0..n {
            grown[(i, n)] = prior.column[i];
            grown[(n, i)] = prior.column[i];
        }
        grown[(n, n)] = prior.self_kernel;
        *gram = grown;

        let inv = self.inverse.as_mut().expect("tracked");
        let mut next = DMatrix::zeros(n + 1, n + 1);
        next.view_mut((0, 0), (n, n)).copy_from(inv);
        let scale = 1.0 / schur;
        for i in 0..=n {
            let vi = if i < n { prior.beta[i] } else { -1.0 };
            for j in 0..=n {
                let vj = if j < n { prior.beta[j] } else { -1.0 };
                next[(i, j)] += scale * vi * vj;
            }
        }
        *inv = next;

        self.members.push(Member { instance: x, label, arrival });
        if self.consistency_check && self.inverse_residual().unwrap_or(0.0) > INVERSE_TOLERANCE {
            self.rebuild_inverse()?;
        }
        Ok(())
    }

    pub fn insert_plain(&mut self, x: Instance, label: Label, arrival: usize) -> Result<()> {
        self.require(BudgetMode::Plain)?;
        if self.len() >= self.capacity {
            return Err(OklError::BudgetFull(self.capacity));
        }
        self.check_arrival(arrival)?;
        self.members.push(Member { instance: x, label, arrival });
        Ok(())
    }

    /// `det(K_{S ∪ {x}}) / det(K_S)`; `D` for an empty budget.
    pub fn determinant_ratio<K: Kernel>(&self, kernel: &K, x: &Instance) -> Result<f64> {
        if self.is_empty() {
            return Ok(kernel.upper_bound());
        }
        let n = self.len();
        let mut pts: Vec<&Instance> = self.instances().collect();
        pts.push(x);
        let mut full = DMatrix::zeros(n + 1, n + 1);
        for i in 0..=n {
            for j in i..=n {
                let v = kernel.evaluate(pts[i], pts[j])?;
                full[(i, j)] = v;
                full[(j, i)] = v;
            }
        }
        let small = full.view((0, 0), (n, n)).into_owned();
        let det_small = small.lu().determinant();
        if det_small.abs() < f64::MIN_POSITIVE {
            return Err(OklError::Singular);
        }
        Ok(full.lu().determinant() / det_small)
    }

    /// `max |K_S · K_S⁻¹ − I|`, tracked mode only.
    pub fn inverse_residual(&self) -> Option<f64> {
        let (gram, inv) = (self.gram.as_ref()?, self.inverse.as_ref()?);
        let n = self.len();
        let prod = gram * inv;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
        Some(worst)
    }

    /// Recomputes `K_S⁻¹` from the cached Gram matrix.
    pub fn rebuild_inverse(&mut self) -> Result<()> {
        self.require(BudgetMode::Tracked)?;
        let gram = self.gram.as_ref().expect("tracked").clone();
        let inv = match gram.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => gram.try_inverse().ok_or(OklError::Singular)?,
        };
        self.inverse = Some(inv);
        Ok(())
    }

    /// Drops the inverse and switches to append-only mode with a new capacity.
    pub fn convert_to_plain(&mut self, capacity: usize) {
        self.mode = BudgetMode::Plain;
        self.gram = None;
        self.inverse = None;
        self.capacity = capacity;
    }

    /// Keeps the `keep` oldest members and returns the removed ones (plain mode).
    pub fn retain_oldest(&mut self, keep: usize) -> Result<Vec<Member>> {
        self.require(BudgetMode::Plain)?;
        if keep > self.len() {
            return Err(OklError::LengthMismatch { expected: self.len(), got: keep });
        }
        Ok(self.members.split_off(keep))
    }

    /// `uᵀ K_S v` from the cached Gram matrix.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Option<f64> {
        let g = self.gram.as_ref()?;
        let n = self.len();
        if u.len() != n || v.len() != n {
            return None;
        }
        let mut total = 0.0;
        for j in 0..n {
            if v[j] == 0.0 {
                continue;
            }
            let col = g.column(j);
            let s: f64 = u.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            total += s * v[j];
        }
        Some(total)
    }

    fn require(&self, mode: BudgetMode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(OklError::WrongBudgetMode(match self.mode {
                BudgetMode::Tracked => "tracked",
                BudgetMode::Plain => "plain",
            }))
        }
    }

    fn check_arrival(&self, arrival: usize) -> Result<()> {
        match self.members.last() {
            Some(last) if last.arrival >= arrival => Err(OklError::ArrivalOrder { last: last.arrival, got: arrival }),
            _ => Ok(()),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Instance> {
        (0..n).map(|_| Instance::dense((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())).collect()
    }

    /// Solves `A z = b` by Gaussian elimination with partial pivoting.
    fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, p);
            for r in (c + 1)..n {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        let mut z = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = ((r + 1)..n).map(|k| m[r][k] * z[k]).sum();
            z[r] = (m[r][n] - s) / m[r][r];
        }
        z
    }

    fn cofactor_det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> =
                    m[1..].iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect()).collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * cofactor_det(&minor)
            })
            .sum()
    }

    fn fill(k: &KernelSpec, points: &[Instance]) -> BudgetSet {
        let mut b = BudgetSet::tracked(usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let ald = b.ald_check(k, p, 0.0).unwrap();
            b.insert_tracked(p.clone(), Label::Positive, i, &ald).unwrap();
        }
        b
    }

    #[test]
    fn empty_budget_uses_upper_bound() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let b = BudgetSet::tracked(10);
        let x = Instance::dense(vec![1.0, 2.0]);
        let r = b.ald_check(&k, &x, 0.5).unwrap();
        assert!(r.beta.is_empty());
        assert_eq!(r.alpha, 1.0);
        assert!(!r.holds);
        assert!(b.ald_check(&k, &x, 1.0).unwrap().holds);
        assert_eq!(b.determinant_ratio(&k, &x).unwrap(), 1.0);
    }

    #[test]
    fn self_query_is_linearly_dependent() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = Instance::dense(vec![0.3, 0.1]);
        let b = fill(&k, &[x.clone()]);
        let r = b.ald_check(&k, &x, 1e-3).unwrap();
        assert_relative_eq!(r.beta[0], 1.0, epsilon = 1e-12);
        assert!(r.alpha.abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn alpha_matches_least_squares_oracle() {
        let k = KernelSpec::gaussian(0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = pts(3, 2, &mut rng);
        let q = pts(1, 2, &mut rng).pop().unwrap();
        let b = fill(&k, &s);
        let r = b.ald_check(&k, &q, 0.1).unwrap();

        let kk: Vec<Vec<f64>> = s.iter().map(|a| s.iter().map(|c| k.evaluate(a, c).unwrap()).collect()).collect();
        let kx: Vec<f64> = s.iter().map(|a| k.evaluate(a, &q).unwrap()).collect();
        let beta = solve(&kk, &kx);
        // ‖Φβ − κ(x,·)‖² = κ(x,x) − 2βᵀk + βᵀKβ
        let quad: f64 = (0..3).map(|i| (0..3).map(|j| beta[i] * kk[i][j] * beta[j]).sum::<f64>()).sum();
        let resid = 1.0 - 2.0 * dot(&beta, &kx) + quad;
        assert!((r.alpha - resid).abs() < 1e-8);
        for (a, b) in r.beta.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn first_insertion_inverse() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let b = fill(&k, &[Instance::dense(vec![4.0])]);
        assert_eq!(b.inverse_gram().unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn two_point_inverse_matches_closed_form() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x1 = Instance::dense(vec![0.0, 0.0]);
        let x2 = Instance::dense(vec![0.5, 0.7]);
        let c = k.evaluate(&x1, &x2).unwrap();
        let b = fill(&k, &[x1, x2]);
        let inv = b.inverse_gram().unwrap();
        let det = 1.0 - c * c;
        let expect = [[1.0 / det, -c / det], [-c / det, 1.0 / det]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - expect[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ten_insertions_match_dense_inverse() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = pts(10, 3, &mut rng);
        let b = fill(&k, &s);
        let kk: Vec<Vec<f64>> = s.iter().map(|a| s.iter().map(|c| k.evaluate(a, c).unwrap()).collect()).collect();
        let inv = b.inverse_gram().unwrap();
        for j in 0..10 {
            let e: Vec<f64> = (0..10).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            let col = solve(&kk, &e);
            for i in 0..10 {
                assert!((inv[(i, j)] - col[i]).abs() < 1e-6);
            }
        }
        assert!(b.inverse_residual().unwrap() < 1e-6);
    }

    #[test]
    fn plain_capacity_contract() {
        let mut b = BudgetSet::plain(4);
        for i in 0..3 {
            b.insert_plain(Instance::Index(i), Label::Negative, i).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert!(b.inverse_gram().is_none());
        b.insert_plain(Instance::Index(3), Label::Negative, 3).unwrap();
        assert!(matches!(b.insert_plain(Instance::Index(4), Label::Negative, 4), Err(OklError::BudgetFull(4))));
    }

    #[test]
    fn mode_and_order_errors() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let plain = BudgetSet::plain(3);
        assert!(matches!(plain.ald_check(&k, &Instance::dense(vec![0.0]), 1.0), Err(OklError::WrongBudgetMode(_))));
        let mut b = BudgetSet::plain(3);
        b.insert_plain(Instance::dense(vec![0.0]), Label::Positive, 5).unwrap();
        assert!(matches!(
            b.insert_plain(Instance::dense(vec![1.0]), Label::Positive, 5),
            Err(OklError::ArrivalOrder { .. })
        ));
    }

    #[test]
    fn degenerate_insertion_is_refused() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = Instance::dense(vec![1.0]);
        let mut b = fill(&k, &[x.clone()]);
        let r = b.ald_check(&k, &x, 0.0).unwrap();
        assert!(matches!(b.insert_tracked(x, Label::Positive, 9, &r), Err(OklError::DegenerateInsertion(_))));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn determinant_ratio_cases() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x1 = Instance::dense(vec![0.0]);
        let x2 = Instance::dense(vec![0.9]);
        let c = k.evaluate(&x1, &x2).unwrap();
        let b = fill(&k, &[x1]);
        assert_relative_eq!(b.determinant_ratio(&k, &x2).unwrap(), 1.0 - c * c, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = pts(4, 2, &mut rng);
        let q = pts(1, 2, &mut rng).pop().unwrap();
        let b = fill(&k, &s);
        let alpha = b.ald_check(&k, &q, 0.0).unwrap().alpha;
        let mut all = s.clone();
        all.push(q.clone());
        let big: Vec<Vec<f64>> = all.iter().map(|a| all.iter().map(|c| k.evaluate(a, c).unwrap()).collect()).collect();
        let small: Vec<Vec<f64>> = big[..4].iter().map(|r| r[..4].to_vec()).collect();
        let ratio = cofactor_det(&big) / cofactor_det(&small);
        assert!((alpha - ratio).abs() <= 1e-8 * ratio.abs().max(1e-300));
        assert!((b.determinant_ratio(&k, &q).unwrap() - ratio).abs() <= 1e-8 * ratio);
    }

    #[test]
    fn rebuild_restores_inverse() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = pts(6, 2, &mut rng);
        let mut b = fill(&k, &s).with_consistency_check(true);
        let before = b.inverse_gram().unwrap().clone();
        b.rebuild_inverse().unwrap();
        assert!((b.inverse_gram().unwrap() - before).amax() < 1e-6);
        assert!(b.inverse_residual().unwrap() < 1e-8);
    }

    #[test]
    fn retain_oldest_drops_newest() {
        let mut b = BudgetSet::plain(4);
        for i in 0..4 {
            b.insert_plain(Instance::Index(i), Label::Positive, i * 10).unwrap();
        }
        let removed = b.retain_oldest(2).unwrap();
        assert_eq!(b.members().iter().map(|m| m.arrival).collect::<Vec<_>>(), vec![0, 10]);
        assert_eq!(removed.iter().map(|m| m.arrival).collect::<Vec<_>>(), vec![20, 30]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]
            #[test]
            fn inverse_stays_consistent(seed in 0u64..1_000_000, n in 1usize..30, d in 4usize..9) {
                let k = KernelSpec::gaussian(1.0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut b = BudgetSet::tracked(usize::MAX);
                for (i, p) in pts(n, d, &mut rng).into_iter().enumerate() {
                    let r = b.ald_check(&k, &p, 1e-3).unwrap();
                    if !r.holds {
                        b.insert_tracked(p, Label::Positive, i, &r).unwrap();
                    }
                }
                prop_assert!(b.inverse_residual().unwrap() <= 1e-6);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(20))]
            #[test]
            fn larger_threshold_never_grows_budget(seed in 0u64..1_000_000) {
                let k = KernelSpec::gaussian(0.7).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let stream = pts(150, 3, &mut rng);
                let sizes: Vec<usize> = [0.05, 0.2, 0.6].iter().map(|&thr| {
                    let mut b = BudgetSet::tracked(usize::MAX);
                    for (i, p) in stream.iter().enumerate() {
                        let r = b.ald_check(&k, p, thr).unwrap();
                        if !r.holds {
                            b.insert_tracked(p.clone(), Label::Positive, i, &r).unwrap();
                        }
                    }
                    b.len()
                }).collect();
                prop_assert!(sizes[0] >= sizes[1] && sizes[1] >= sizes[2], "{:?}", sizes);
            }
        }
    }
}
