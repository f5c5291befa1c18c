//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the report is always printed; exits non-zero if anything fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use support::{brute_force_transport, conditional_tail_quadrature, ks_distance, random_measure};
use tailspec_core::estimators::{critical_s, tail_fraction, theta_from_fraction, ConvConfig, TwoStepConfig};
use tailspec_core::harness::{
    run_convergence_experiment, Aggregate, ExperimentConfig, ModelTemplate, TAG_CONV, TAG_TWO_STEP,
};
use tailspec_core::output::{ERROR_CHART, ROWS_FILE, SLOPES_FILE, TAU_COUNT_CHART, TAU_TILDE_COUNT_CHART};
use tailspec_core::sampling::{sample_conditional_pareto_vec, sample_pareto, RngStream};
use tailspec_core::transport::{wasserstein_p, wasserstein_pp};
use tailspec_core::{spectral_measure_of, validate_measure, Matrix};

const BASE_SEED: u64 = 20240601;

struct Report {
    failed: usize,
}

impl Report {
    fn record(&mut self, id: &str, title: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} {title}: {detail}");
        if !ok {
            self.failed += 1;
        }
    }
}

fn grid() -> Vec<usize> {
    (11..=17).map(|k| 1usize << k).collect()
}

fn experiment(alpha: f64, s: f64, conv: Option<ConvConfig>, two_step: Option<TwoStepConfig>) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelTemplate::worst_case(alpha, s),
        conv,
        two_step,
        n_grid: grid(),
        replicates: 30,
        base_seed: BASE_SEED,
        aggregate: Aggregate::Median,
        p: 1.0,
    }
}

fn conv_theory(alpha: f64, s: f64) -> f64 {
    let sc = critical_s(alpha);
    if s < sc {
        -s
    } else {
        -sc
    }
}

fn c1(rep: &mut Report) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.2, 0.4] {
        for alpha in [0.5, 1.0, 2.0] {
            let cfg = experiment(alpha, s, Some(ConvConfig::new(1.0, alpha, s, 2)), None);
            let res = run_convergence_experiment(&cfg).expect("experiment runs");
            let slope = res.slope(TAG_CONV).unwrap_or(f64::NAN);
            let theory = conv_theory(alpha, s);
            let cell_ok = (slope - theory).abs() <= 0.10;
            ok &= cell_ok;
            parts.push(format!(
                "(a={alpha}, s={s}) slope {slope:.3} vs {theory:.3}{}",
                if cell_ok { "" } else { " OUT" }
            ));
        }
    }
    let detail = format!("kappa_bar=1; {}; {:.1}s", parts.join(", "), start.elapsed().as_secs_f64());
    rep.record("C1", "conventional rates within 0.10 of theory", ok, detail);
}

fn c2(rep: &mut Report) {
    let start = Instant::now();
    let s = 0.4;
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        let conv = (alpha == 2.0).then(|| ConvConfig::new(1.0, alpha, s, 2));
        let cfg = experiment(alpha, s, conv, Some(TwoStepConfig::new(0.3, 1.0, alpha, s, 2)));
        let res = run_convergence_experiment(&cfg).expect("experiment runs");
        let slope = res.slope(TAG_TWO_STEP).unwrap_or(f64::NAN);
        let cell_ok = (slope + 0.4).abs() <= 0.12;
        ok &= cell_ok;
        parts.push(format!("a={alpha} slope {slope:.3}{}", if cell_ok { "" } else { " OUT" }));
        if alpha == 2.0 {
            let n_max = *cfg.n_grid.last().unwrap();
            let two = res.aggregate_at(TAG_TWO_STEP, n_max).unwrap_or(f64::NAN);
            let conv = res.aggregate_at(TAG_CONV, n_max).unwrap_or(f64::NAN);
            let order_ok = two < conv;
            ok &= order_ok;
            parts.push(format!(
                "n={n_max}: two-step {two:.4} < conv {conv:.4}{}",
                if order_ok { "" } else { " OUT" }
            ));
        }
    }
    let detail = format!("target -0.400; {}; {:.1}s", parts.join(", "), start.elapsed().as_secs_f64());
    rep.record("C2", "two-step rates within 0.12 of -0.4 and ordering", ok, detail);
}

fn c3(rep: &mut Report) {
    let (alpha, s) = (2.0, 0.2);
    let slope_at = |kappa_bar: f64| {
        let cfg = experiment(alpha, s, Some(ConvConfig::new(kappa_bar, alpha, s, 2)), None);
        run_convergence_experiment(&cfg).expect("experiment runs").slope(TAG_CONV).unwrap_or(f64::NAN)
    };
    let (one, tenth) = (slope_at(1.0), slope_at(0.1));
    rep.record(
        "C3",
        "kappa_bar sensitivity",
        one <= tenth - 0.05,
        format!("slope(kappa_bar=1) {one:.3}, slope(kappa_bar=0.1) {tenth:.3}, gap {:.3}", tenth - one),
    );
}

fn c4(rep: &mut Report) {
    let start = Instant::now();
    let mut rng = RngStream::new(BASE_SEED, 4);
    let mut max_dev: f64 = 0.0;
    for i in 0..1000 {
        let dim = 2 + i % 3;
        let p = if i % 2 == 0 { 1.0 } else { 2.0 };
        let mu = random_measure(&mut rng, dim, 3);
        let nu = random_measure(&mut rng, dim, 3);
        let (got, _) = wasserstein_pp(&mu, &nu, p).expect("solver");
        max_dev = max_dev.max((got - brute_force_transport(&mu, &nu, p)).abs());
    }
    let mut worst_slack: f64 = f64::NEG_INFINITY;
    for i in 0..500 {
        let dim = 2 + i % 3;
        let mu = random_measure(&mut rng, dim, 6);
        let nu = random_measure(&mut rng, dim, 6);
        let rho = random_measure(&mut rng, dim, 6);
        let w = |a, b| wasserstein_p(a, b, 1.0).expect("solver");
        let (mn, nm, nr, mr, mm) = (w(&mu, &nu), w(&nu, &mu), w(&nu, &rho), w(&mu, &rho), w(&mu, &mu));
        worst_slack = worst_slack.max(mm.abs()).max((mn - nm).abs()).max(mr - mn - nr).max(-mn);
    }
    let ok = max_dev <= 1e-8 && worst_slack <= 1e-8 && start.elapsed().as_secs_f64() <= 30.0;
    rep.record(
        "C4",
        "OT exactness and metric axioms",
        ok,
        format!(
            "max |LP - oracle| {max_dev:.2e} over 1000 pairs, worst axiom violation {worst_slack:.2e} over 500 triples, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

fn c5(rep: &mut Report) {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, alpha) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let mut rng = RngStream::new(BASE_SEED, k as u64);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_pareto(alpha, &mut rng)).collect();
        let d = ks_distance(xs, |z| 1.0 - (1.0 + z).powf(-alpha));
        ok &= d < 0.01;
        parts.push(format!("KS(a={alpha}) {d:.4}"));
    }
    let want = conditional_tail_quadrature(2.0, 5.0, 10.0);
    let mut rng = RngStream::new(BASE_SEED, 5);
    let draws = 400_000;
    let hits = (0..draws)
        .filter(|_| sample_conditional_pareto_vec(2, 2.0, 5.0, &mut rng, 1_000_000).expect("sampler")[0] > 10.0)
        .count();
    let got = hits as f64 / draws as f64;
    let rel = (got / want - 1.0).abs();
    ok &= rel < 0.02;
    parts.push(format!("P(z1>10 | |z|>=5) {got:.5} vs quadrature {want:.5} (rel {rel:.4})"));
    ok &= start.elapsed().as_secs_f64() <= 60.0;
    rep.record("C5", "sampler fidelity", ok, format!("{}; {:.1}s", parts.join(", "), start.elapsed().as_secs_f64()));
}

fn c6(rep: &mut Report) {
    let mut rng = RngStream::new(BASE_SEED, 6);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let theta = 0.5 + 1.5 * rng.uniform();
        let tau = 0.1 + 100.0 * rng.uniform();
        let alpha = 0.3 + 3.7 * rng.uniform();
        let r_hat = 0.5 + 1.5 * rng.uniform();
        let fraction = tail_fraction(theta, r_hat, tau, alpha);
        let back = theta_from_fraction(fraction, r_hat, tau, alpha).unwrap_or(f64::NAN);
        worst = worst.max(((back - theta) / theta).abs());
    }
    rep.record("C6", "estimating-equation round trip", worst <= 1e-10, format!("max relative error {worst:.2e} over 1000 draws"));
}

fn c7(rep: &mut Report) {
    let mut ok = true;
    let mut notes = Vec::new();
    let k = spectral_measure_of(&Matrix::identity(2), 2.0).unwrap();
    let e = k.atoms() == [vec![0.0, 1.0], vec![1.0, 0.0]] && k.weights() == [0.5, 0.5];
    ok &= e;
    notes.push(format!("identity {}", if e { "ok" } else { "MISMATCH" }));
    let k = spectral_measure_of(&Matrix::diag(&[2.0, 1.0]), 1.0).unwrap();
    let e = k.atoms() == [vec![0.0, 1.0], vec![1.0, 0.0]]
        && (k.weights()[0] - 1.0 / 3.0).abs() <= 1e-15
        && (k.weights()[1] - 2.0 / 3.0).abs() <= 1e-15;
    ok &= e;
    notes.push(format!("diag(2,1) {}", if e { "ok" } else { "MISMATCH" }));
    let k = spectral_measure_of(&Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap(), 2.0).unwrap();
    let e = k.atoms() == [vec![1.0, 0.0]] && k.weights() == [1.0];
    ok &= e;
    notes.push(format!("duplicate merge {}", if e { "ok" } else { "MISMATCH" }));

    let mut rng = RngStream::new(BASE_SEED, 7);
    let (mut worst_sum, mut perm_ok, mut scale_ok): (f64, bool, bool) = (0.0, true, true);
    for i in 0..1000 {
        let d = 2 + i % 3;
        let m = d + rng.index(4);
        let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| 0.01 + 5.0 * rng.uniform()).collect()).collect();
        let alpha = 0.2 + 3.8 * rng.uniform();
        let a = Matrix::from_columns(&cols).unwrap();
        let k = spectral_measure_of(&a, alpha).unwrap();
        worst_sum = worst_sum.max((k.weights().iter().sum::<f64>() - 1.0).abs());
        ok &= validate_measure(&k);
        let mut shuffled = cols.clone();
        shuffled.reverse();
        shuffled.rotate_left(i % m);
        perm_ok &= spectral_measure_of(&Matrix::from_columns(&shuffled).unwrap(), alpha).unwrap() == k;
        let t = 0.1 + 10.0 * rng.uniform();
        let kt = spectral_measure_of(&a.scaled(t), alpha).unwrap();
        scale_ok &= kt.atoms().iter().flatten().zip(k.atoms().iter().flatten()).all(|(x, y)| (x - y).abs() <= 1e-12)
            && kt.weights().iter().zip(k.weights()).all(|(x, y)| (x - y).abs() <= 1e-12);
    }
    ok &= worst_sum <= 1e-12 && perm_ok && scale_ok;
    notes.push(format!("max |sum w - 1| {worst_sum:.1e}, permutation {perm_ok}, scaling {scale_ok} over 1000 matrices"));
    rep.record("C7", "spectral-measure identities", ok, notes.join(", "));
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tailspec")
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_experiment(config: &Path, out: &Path, threads: usize) -> bool {
    Command::new(bin())
        .args(["experiment", "--threads", &threads.to_string(), "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn c8(rep: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("det.json");
    std::fs::write(
        &cfg,
        r#"{
  "model": { "alpha": 2.0, "s": 0.4, "latent_kind": "tilted_worst_case" },
  "estimator": { "conv": { "kappa_bar": 1.0 }, "two_step": { "kappa_tilde": 0.3, "kappa": 1.0 } },
  "experiment": { "n_grid": [1024, 2048, 4096, 8192], "replicates": 8, "base_seed": 20240601 }
}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("t1"), dir.path().join("t8"));
    let ran = run_experiment(&cfg, &a, 1) && run_experiment(&cfg, &b, 8);
    let same = |f: &str| ran && std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok();
    let (rows, slopes) = (same(ROWS_FILE), same(SLOPES_FILE));
    rep.record(
        "C8",
        "determinism across thread counts",
        ran && rows && slopes,
        format!("ran {ran}, rows.csv identical {rows}, slopes.csv identical {slopes}"),
    );
}

fn c9(rep: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let start = Instant::now();
    let ran = run_experiment(&config_path("smoke.json"), &out, 4);
    let secs = start.elapsed().as_secs_f64();
    let files = [ROWS_FILE, SLOPES_FILE, ERROR_CHART, TAU_COUNT_CHART, TAU_TILDE_COUNT_CHART];
    let missing: Vec<&str> = files.iter().copied().filter(|f| !out.join(f).is_file()).collect();
    rep.record(
        "C9",
        "smoke config end to end",
        ran && missing.is_empty() && secs < 10.0,
        format!("exit ok {ran}, {secs:.2}s, missing files {missing:?}"),
    );
}

fn main() {
    // `cargo test -- --list` and filters from other targets must not trigger the full run
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut rep = Report { failed: 0 };
    c1(&mut rep);
    c2(&mut rep);
    c3(&mut rep);
    c4(&mut rep);
    c5(&mut rep);
    c6(&mut rep);
    c7(&mut rep);
    c8(&mut rep);
    c9(&mut rep);
    println!("acceptance: {} of 9 criteria passed", 9 - rep.failed);
    if rep.failed > 0 {
        std::process::exit(1);
    }
}
