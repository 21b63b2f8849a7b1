//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `LANDAU_ACCEPT_ONLY=1,4,9` restricts the run to some criteria;
//! `LANDAU_ACCEPT_STRICT=1` makes any FAIL line a non-zero exit.
//! The full suite at the stated sizes takes about an hour on one core.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use landau_core::dynamics::EstimatorSettings;
use landau_core::ensemble::{abar, entropy_hat, lp_norm_hat, silverman_bandwidth};
use landau_core::experiments::{
    admissible_exponents, conservation_report, fit_blowup_rate, lp_blowup_bound, maxwell_covariance_oracle,
    stability_experiment,
};
use landau_core::validation::{kernel_deviations, lipschitz_violations, metric_defects, transport_mismatches};
use landau_core::{
    run, run_coupled, sample_initial, step, DCoupledConfig, DMat3, DSimConfig, DVec3, InitialSpec, KernelParams,
    NoiseMode, NoiseStream,
};

struct Outcome {
    passed: bool,
    detail: String,
}

/// Sub-checks joined into one verdict.
#[derive(Default)]
struct Parts {
    passed: bool,
    text: Vec<String>,
}

impl Parts {
    fn new() -> Self {
        Self { passed: true, text: Vec::new() }
    }

    fn add(&mut self, ok: bool, text: String) {
        self.passed &= ok;
        self.text.push(format!("{}{}", if ok { "" } else { "[FAIL] " }, text));
    }

    fn done(self) -> Outcome {
        Outcome { passed: self.passed, detail: self.text.join("; ") }
    }
}

fn budget(parts: &mut Parts, start: Instant, limit: Duration) {
    let e = start.elapsed();
    parts.add(e < limit, format!("runtime {:.2}s < {:.0}s", e.as_secs_f64(), limit.as_secs_f64()));
}

fn kernel(gamma: f64, eps: f64) -> KernelParams<f64> {
    KernelParams::new(gamma, eps).expect("valid kernel")
}

fn gaussian(mean: [f64; 3], diag: [f64; 3]) -> InitialSpec<f64> {
    InitialSpec::Gaussian { mean: DVec3::from_array(mean), covariance: DMat3::from_diag(diag) }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn kernel_identities() -> Outcome {
    let start = Instant::now();
    let d = kernel_deviations(10_000, 101, None);
    let mut p = Parts::new();
    p.add(d.factorization <= 1e-12, format!("max |sigma sigma^T - a|_F = {:.2e}", d.factorization));
    p.add(d.null_direction <= 1e-12, format!("max |a z| / (|a|_F |z|) = {:.2e}", d.null_direction));
    p.add(d.min_eigenvalue >= -1e-12, format!("min lambda_min(a) = {:.2e}", d.min_eigenvalue));
    budget(&mut p, start, Duration::from_secs(1));
    p.done()
}

fn lipschitz() -> Outcome {
    let start = Instant::now();
    let v = lipschitz_violations(100_000, 102);
    let mut p = Parts::new();
    p.add(v == 0, format!("{v} violations in 1e5 pairs"));
    budget(&mut p, start, Duration::from_secs(5));
    p.done()
}

fn transport() -> Outcome {
    let start = Instant::now();
    let bad = transport_mismatches(100, 103);
    let (sym, tri) = metric_defects(1000, 104);
    let mut p = Parts::new();
    p.add(bad == 0, format!("{bad}/600 exact-vs-bruteforce mismatches"));
    p.add(sym <= 1e-12, format!("symmetry defect {sym:.2e}"));
    p.add(tri <= 1e-9, format!("triangle excess {tri:.2e}"));
    budget(&mut p, start, Duration::from_secs(30));
    p.done()
}

fn maxwell() -> Outcome {
    let kp = kernel(0.0, 1e-3);
    let diag = [2.0, 1.0, 1.0];
    let sigma0 = DMat3::from_diag(diag);
    let tol = 0.02 * sigma0.trace() / 3.0;
    let mut ens = sample_initial(&gaussian([0.0; 3], diag), 20_000, 201).expect("valid spec");
    let noise = NoiseStream::new(201);
    let dt = 1e-3;
    let mut p = Parts::new();
    for k in 0..1000u64 {
        ens = step(&ens, &kp, dt, &noise, k, NoiseMode::Aggregated).expect("finite step").ensemble;
        if matches!(k + 1, 250 | 500 | 1000) {
            let t = (k + 1) as f64 * dt;
            let want = maxwell_covariance_oracle(&sigma0, t).expect("SPD");
            let dev = ens.covariance().max_abs_diff(&want);
            p.add(dev <= tol, format!("t = {t}: max entry deviation {dev:.4} (tol {tol:.4})"));
        }
    }
    p.done()
}

fn conservation() -> Outcome {
    let kp = kernel(-1.0, 1e-3);
    let mut base = DSimConfig::new(kp, 10_000, 1e-3, 1.0, 301);
    base.diag_every = 10;
    let mut p = Parts::new();

    let mut drift_only = base.clone();
    drift_only.noise = NoiseMode::Off;
    let r = conservation_report(&run(&drift_only).expect("valid config"), 0.05);
    p.add(r.momentum_drift <= 1e-10, format!("drift-only momentum drift {:.2e}", r.momentum_drift));

    let (mut energy, mut violations) = (Vec::new(), Vec::new());
    for seed in 301..306 {
        let mut c = base.clone();
        c.seed = seed;
        let series = run(&c).expect("valid config");
        let r = conservation_report(&series, 0.05);
        energy.push(if series.blow_up.is_some() { f64::INFINITY } else { r.energy_drift });
        violations.push(r.entropy_violations as f64);
    }
    let (e, v) = (median(energy.clone()), median(violations.clone()));
    p.add(e <= 0.02, format!("median energy drift {e:.4} (per seed {energy:.4?})"));
    p.add(v == 0.0, format!("median entropy violations {v} (per seed {violations:?})"));
    p.done()
}

fn degeneracy() -> Outcome {
    let mut base = DSimConfig::new(kernel(-1.0, 1e-3), 500, 1e-3, 0.1, 401);
    base.diag_every = 5;
    let initial = base.initial.clone();
    let cfg = DCoupledConfig::new(base, initial, 10);
    let series = run_coupled(&cfg).expect("valid config");
    let mut p = Parts::new();
    let max_w2 = series.records.iter().map(|r| r.w2sq).fold(0.0, f64::max);
    let zero = series.records.iter().all(|r| r.w2sq == 0.0);
    p.add(zero, format!("max W2^2 over {} records = {max_w2:e}", series.records.len()));
    let same = series.final_ensembles.as_ref().is_some_and(|(a, b)| {
        a.velocities()
            .iter()
            .zip(b.velocities())
            .all(|(x, y)| x.to_array().map(f64::to_bits) == y.to_array().map(f64::to_bits))
    });
    p.add(same, "final ensembles bitwise identical".into());
    p.done()
}

fn stability() -> Outcome {
    let mut base = DSimConfig::new(kernel(-0.5, 1e-3), 2000, 1e-3, 1.0, 0);
    base.diag_every = 10;
    let initial_b = gaussian([1e-2, 0.0, 0.0], [1.0; 3]);
    let seeds: Vec<u64> = (501..511).collect();
    let mut p = Parts::new();
    for recouple in [1, 10] {
        let cfg = DCoupledConfig::new(base.clone(), initial_b.clone(), recouple);
        let r = stability_experiment(&cfg, &seeds, 1e-9).expect("valid config");
        p.add(r.dominance_holds && !r.blow_up, format!("recouple {recouple}: (a) dominance {}", r.dominance_holds));
        let fmt = |x: Option<f64>| x.map_or("none".into(), |v| format!("{v:.3e}"));
        let ok = r.c_hat.is_some_and(f64::is_finite) && r.relative_spread.is_some_and(|s| s <= 0.5);
        p.add(ok, format!("(b) C_hat {} spread {}", fmt(r.c_hat), fmt(r.relative_spread)));
        let g = r.growth_median.unwrap_or(f64::NAN);
        p.add(g <= 100.0, format!("(c) median W2^2(1)/W2^2(0) = {g:.6}"));
    }
    p.done()
}

fn estimators() -> Outcome {
    let mut p = Parts::new();
    let std = InitialSpec::<f64>::standard_gaussian();
    let ens = sample_initial(&std, 10_000, 601).expect("valid spec");
    let h_true = -1.5 * (1.0 + (2.0 * PI).ln());
    let h = entropy_hat(&ens, 4).expect("k < N").value;
    p.add((h - h_true).abs() <= 0.15, format!("entropy {h:.4} vs {h_true:.4}"));
    let l2_true = (4.0 * PI).powf(-0.75);
    let l2 = lp_norm_hat(&ens, 2.0, silverman_bandwidth(&ens)).expect("valid bandwidth");
    p.add((l2 / l2_true - 1.0).abs() <= 0.10, format!("L2 norm {l2:.5} vs {l2_true:.5}"));
    let big = sample_initial(&std, 100_000, 602).expect("valid spec");
    let c_true = 2.0 / 3.0 * 2.0 * (2.0 / PI).sqrt();
    let eig = abar(&big, DVec3::zero(), &kernel(-1.0, 1e-4)).sym_eigenvalues();
    let worst = eig.iter().map(|e| (e / c_true - 1.0).abs()).fold(0.0, f64::max);
    p.add(worst <= 0.03, format!("abar eigenvalues {eig:.4?} vs {c_true:.4}"));
    p.done()
}

fn exponents() -> Outcome {
    let mut p = Parts::new();
    let q = admissible_exponents(1.0 - 5f64.sqrt()).ok().and_then(|e| e.q_min).unwrap_or(f64::NAN);
    p.add((q - 2.0).abs() <= 1e-12, format!("q_min = {q:.15}"));
    let (lo, hi) = admissible_exponents(-1.0).and_then(|e| e.p_range(2.0)).unwrap_or((f64::NAN, f64::NAN));
    p.add((lo - 1.5).abs() <= 1e-12 && (hi - 1.8).abs() <= 1e-12, format!("p-range ({lo:.15}, {hi:.15})"));
    // lp0^p = 1 puts the start at arctan(1); tan(3 pi / 8) = 1 + sqrt(2).
    let y = lp_blowup_bound(1.0, 2.0, 1.0, PI / 8.0).map_or(f64::NAN, |b| b.bound.powi(2));
    p.add((y - (1.0 + 2f64.sqrt())).abs() <= 1e-12, format!("bound^p = {y:.15}"));
    p.done()
}

fn very_soft() -> Outcome {
    let p_exp = 6.5;
    let mut p = Parts::new();
    let mut cfg = DSimConfig::new(kernel(-2.5, 1e-3), 4000, 1e-3, 0.5, 701);
    cfg.diag_every = 10;
    cfg.estimators = EstimatorSettings { lp_exponent: p_exp, ..EstimatorSettings::default() };
    let series = run(&cfg).expect("valid config");
    let fit = fit_blowup_rate(&series, p_exp).expect("non-empty series");
    let finite = series.records.iter().filter(|r| r.t < fit.t_star).all(|r| r.lp_norm.is_finite());
    p.add(
        finite && series.blow_up.is_none(),
        format!("benign: L^p finite on {} records before T* = {:.3e}", series.records.len(), fit.t_star),
    );

    // A floor whose square underflows leaves the radial factor unbounded, so
    // a tightly packed ensemble overflows in the first step.
    let mut hot = DSimConfig::new(kernel(-2.5, 1e-200), 64, 1e-3, 0.01, 702);
    hot.initial = InitialSpec::UniformBall { center: DVec3::zero(), radius: 1e-200 };
    let series = run(&hot).expect("valid config");
    let flagged = series.records.last().is_some_and(|r| r.flags.blow_up);
    p.add(series.blow_up.is_some() && flagged, format!("concentrated: aborted with {:?}", series.blow_up));
    p.done()
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("LANDAU_ACCEPT_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var_os("LANDAU_ACCEPT_STRICT").is_some();
    let criteria: [Criterion; 10] = [
        ("kernel identities", kernel_identities),
        ("Lipschitz bounds", lipschitz),
        ("transport exactness", transport),
        ("Maxwell-molecule oracle", maxwell),
        ("conservation", conservation),
        ("coupling degeneracy", degeneracy),
        ("coupled stability", stability),
        ("estimator calibration", estimators),
        ("exponent arithmetic", exponents),
        ("very soft potential", very_soft),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        failed += usize::from(!out.passed);
        let verdict = if out.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {id:>2} {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), out.detail);
        std::io::stdout().flush().ok();
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
