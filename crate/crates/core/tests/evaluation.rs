use okl_core::evaluation::{self, kernel_alignment, lemma3_check, online_to_batch, online_to_batch_at, theorem1_harness};
use okl_core::kernel::{Instance, Kernel, KernelSpec, SpectrumProfile};
use okl_core::{
    stepsize_grid, Dataset, FogdLearner, FourierFeatureMap, Label, LabeledExample, NogdLearner, OgdLearner,
    PomdrConfig, PomdrLearner, RunOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_stream(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let examples = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.3 * rng.sample::<f64, _>(StandardNormal);
            LabeledExample { instance: Instance::dense(x), label: Label::from_margin(s), source_index: i }
        })
        .collect();
    Dataset { examples, dimension: d, name: format!("synthetic-{seed}") }
}

fn naive_alignment<K: Kernel>(ds: &Dataset, k: &K) -> f64 {
    let n = ds.len();
    let mut trace = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        let (xi, yi) = (&ds.examples[i].instance, ds.examples[i].label.sign());
        trace += k.evaluate(xi, xi).unwrap();
        for j in 0..n {
            quad += yi * ds.examples[j].label.sign() * k.evaluate(xi, &ds.examples[j].instance).unwrap();
        }
    }
    trace - quad / n as f64
}

/// Σ_t max(κ(x_t,x_t) − (2 y_t / M_t) Σ_r y_r κ(x_r, x_t), 0) over the last M examples.
fn naive_delta_sum<K: Kernel>(ds: &Dataset, k: &K, m: usize) -> f64 {
    let mut total = 0.0;
    for t in 0..ds.len() {
        let e = &ds.examples[t];
        let lo = t.saturating_sub(m);
        let opt = if t == 0 {
            0.0
        } else {
            ds.examples[lo..t].iter().map(|r| r.label.sign() * k.evaluate(&r.instance, &e.instance).unwrap()).sum::<f64>() / (t - lo) as f64
        };
        total += (k.evaluate(&e.instance, &e.instance).unwrap() - 2.0 * e.label.sign() * opt).max(0.0);
    }
    total
}

#[test]
fn alignment_is_chunk_invariant_and_matches_double_sum() {
    let ds = gaussian_stream(1, 150, 4);
    let k = KernelSpec::gaussian(0.9).unwrap();
    let expected = naive_alignment(&ds, &k);
    for chunk in [1, 7, 64, 1000] {
        let got = kernel_alignment(&ds.instances(), &ds.labels(), &k, chunk).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "chunk {chunk}: {got} vs {expected}");
    }
}

#[test]
fn delta_sum_bound_holds_on_twenty_streams_and_three_kernels() {
    for sigma in [0.5, 1.0, 2.0] {
        let k = KernelSpec::gaussian(sigma).unwrap();
        for seed in 0..20 {
            let ds = gaussian_stream(100 + seed, 500, 10);
            let rep = lemma3_check(&ds.instances(), &ds.labels(), &k, 15).unwrap();
            let sum = naive_delta_sum(&ds, &k, 15);
            assert!((rep.empirical_value - sum).abs() <= 1e-9 * sum.max(1.0));
            assert!(rep.satisfied, "σ={sigma} seed {seed}: {} > {}", rep.empirical_value, rep.bound_value);
        }
    }
}

#[test]
fn budget_size_bound_on_a_small_grid() {
    let n = 128;
    let alpha = 1.0 / (n * n) as f64;
    let mut profiles = vec![];
    for r in [0.3, 0.5, 0.9] {
        profiles.push(SpectrumProfile::exponential(n as f64, r).unwrap());
    }
    for p in [1.0, 2.0, 3.0] {
        profiles.push(SpectrumProfile::polynomial(n as f64, p).unwrap());
    }
    for prof in profiles {
        let rep = theorem1_harness(&prof, n, alpha, 3).unwrap();
        assert!(rep.final_size >= 1);
        assert!(rep.bound.satisfied, "{prof:?}: {} > {}", rep.final_size, rep.bound.bound_value);
    }
}

#[test]
fn run_reports_are_consistent_for_every_learner() {
    let ds = gaussian_stream(9, 600, 3);
    let t = ds.len();
    let k = KernelSpec::gaussian(0.8).unwrap();
    let eta = stepsize_grid(t)[3];
    let opts = RunOptions { norm_check_every: 50 };
    let mut cfg = PomdrConfig::standard(t, 0.5);
    cfg.budget = 40;
    cfg.b0 = Some(20);
    cfg.u = 3.0;
    let reports = vec![
        evaluation::run(&mut PomdrLearner::new(cfg, k.clone()).unwrap(), &ds, opts).unwrap(),
        evaluation::run(&mut OgdLearner::new(k.clone(), eta, 3.0), &ds, opts).unwrap(),
        evaluation::run(&mut FogdLearner::new(FourierFeatureMap::new(3, 40, 0.8, 1).unwrap(), eta, 3.0), &ds, opts).unwrap(),
        evaluation::run(&mut NogdLearner::new(k, 40, 8, eta, 3.0).unwrap(), &ds, opts).unwrap(),
    ];
    for rep in reports {
        assert_eq!(rep.rounds, t);
        assert_eq!(rep.amr, rep.mistakes as f64 / t as f64, "{}", rep.algo);
        assert!(rep.norm_checks >= t / 50);
        assert!(rep.max_norm_excess <= 1e-6, "{}: {}", rep.algo, rep.max_norm_excess);
        if rep.algo == "pomdr" {
            assert!(rep.budget_trace.iter().all(|&(_, s)| s <= 40));
            assert!(rep.restart_times.len() as f64 <= 2.0 * t as f64 / 40.0 - 1.0);
            assert!(rep.t_bar.is_some());
        }
    }
}

#[test]
fn baseline_runs_are_deterministic() {
    let ds = gaussian_stream(4, 300, 3);
    let k = KernelSpec::gaussian(0.8).unwrap();
    let eta = stepsize_grid(ds.len())[3];
    let run = || {
        let mut l = FogdLearner::new(FourierFeatureMap::new(3, 32, 0.8, 5).unwrap(), eta, 25.0);
        let a = evaluation::run(&mut l, &ds, RunOptions::default()).unwrap();
        let mut l = NogdLearner::new(k.clone(), 30, 6, eta, 25.0).unwrap();
        let b = evaluation::run(&mut l, &ds, RunOptions::default()).unwrap();
        (a.mistakes, a.cumulative_loss, b.mistakes, b.cumulative_loss)
    };
    assert_eq!(run(), run());
}

#[test]
fn online_to_batch_at_first_round_is_the_zero_hypothesis() {
    let ds = gaussian_stream(2, 400, 3);
    let (train, test) = ds.split(0.8);
    let k = KernelSpec::gaussian(1.0).unwrap();
    let cfg = PomdrConfig::standard(train.len(), 0.5);
    let rep = online_to_batch_at(&cfg, &k, &train, &test, 1, 0).unwrap();
    assert_eq!(rep.test_hinge_risk, 1.0);
    let negatives = test.labels().iter().filter(|l| **l == Label::Negative).count();
    assert_eq!(rep.test_error_rate, negatives as f64 / test.len() as f64);
    let later = online_to_batch(&cfg, &k, &train, &test, 17).unwrap();
    assert!((1..=train.len()).contains(&later.r));
    assert_eq!(later, online_to_batch(&cfg, &k, &train, &test, 17).unwrap());
}
