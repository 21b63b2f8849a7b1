use landau_core::experiments::{conservation_report, stability_experiment, summarize_stability};
use landau_core::{
    run, run_coupled, sample_initial, step, step_coupled, w2_exact, DCoupledConfig, DSimConfig, DVec3, FSimConfig,
    InitialSpec, KernelParams, NoiseMode, NoiseStream,
};

fn kernel(gamma: f64) -> KernelParams<f64> {
    KernelParams::new(gamma, 1e-3).unwrap()
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let mut cfg = DSimConfig::new(kernel(-1.5), 300, 0.01, 0.05, 5);
    cfg.diag_every = 2;
    let one = in_pool(1, || run(&cfg).unwrap());
    let four = in_pool(4, || run(&cfg).unwrap());
    assert_eq!(one, four);

    let mut c = DCoupledConfig::new(cfg.clone(), InitialSpec::standard_gaussian(), 2);
    c.seed_b = Some(77);
    assert_eq!(in_pool(1, || run_coupled(&c).unwrap()), in_pool(3, || run_coupled(&c).unwrap()));
}

#[test]
fn drift_only_runs_conserve_momentum_to_rounding() {
    for gamma in [0.0, -0.5, -2.0, -2.9] {
        let mut cfg = DSimConfig::new(kernel(gamma), 400, 1e-3, 0.02, 9);
        cfg.noise = NoiseMode::Off;
        let series = run(&cfg).unwrap();
        let r = conservation_report(&series, 0.05);
        assert!(r.momentum_drift < 1e-13, "gamma {gamma}: {}", r.momentum_drift);
    }
}

#[test]
fn single_precision_follows_double() {
    let kp = KernelParams::new(-1.0f32, 1e-3).unwrap();
    let cfg = FSimConfig::new(kp, 200, 0.01, 0.05, 3);
    let single = run(&cfg).unwrap();
    let double = run(&DSimConfig::new(kernel(-1.0), 200, 0.01, 0.05, 3)).unwrap();
    assert_eq!(single.records.len(), double.records.len());
    for (s, d) in single.records.iter().zip(&double.records) {
        assert!((f64::from(s.m2) - d.m2).abs() < 1e-4 * d.m2, "{} vs {}", s.m2, d.m2);
    }
}

#[test]
fn coupled_first_marginal_is_the_single_step() {
    // The first ensemble of a coupled step uses the same Gaussians as the
    // single step, so the two agree exactly.
    let kp = kernel(-0.7);
    let a = sample_initial(&InitialSpec::standard_gaussian(), 64, 1).unwrap();
    let b = a.shifted(DVec3::new(0.1, 0.0, -0.2));
    let plan = w2_exact(&a, &b).unwrap();
    let noise = NoiseStream::new(4);
    for mode in [NoiseMode::Off, NoiseMode::Aggregated, NoiseMode::PerAtom] {
        let single = step(&a, &kp, 0.01, &noise, 3, mode).unwrap();
        let pair = step_coupled(&a, &b, &plan, &kp, 0.01, &noise, 3, mode).unwrap().unwrap();
        let gap = single
            .ensemble
            .velocities()
            .iter()
            .zip(pair.a.velocities())
            .map(|(x, y)| (*x - *y).norm())
            .fold(0.0, f64::max);
        assert!(gap < 1e-13, "{mode:?}: {gap}");
    }
}

#[test]
fn stability_pipeline_on_a_small_problem() {
    let mut base = DSimConfig::new(kernel(-0.5), 150, 0.01, 0.1, 0);
    base.diag_every = 2;
    let b = InitialSpec::Gaussian { mean: DVec3::new(0.2, 0.0, 0.0), covariance: landau_core::DMat3::identity() };
    let mut cfg = DCoupledConfig::new(base, b, 3);
    cfg.seed_b = Some(500);
    let seeds = [1, 2, 3, 4];
    let r = stability_experiment(&cfg, &seeds, 0.0).unwrap();
    assert!(r.dominance_holds && !r.trivial && !r.blow_up);
    assert_eq!(r.slopes.len(), 4);
    assert!(r.c_hat.unwrap().is_finite());
    // c_max is the largest slope, so the envelope slack is reported and the
    // summary matches one rebuilt from the individual runs.
    assert!(r.envelope_slack.unwrap() >= 0.0);
    let runs: Vec<_> = seeds.iter().map(|&s| run_coupled(&cfg.for_seed(s)).unwrap()).collect();
    assert_eq!(summarize_stability(&runs, &seeds, 0.0).unwrap(), r);
    assert!(summarize_stability(&runs[..2], &seeds, 0.0).is_err());
}
