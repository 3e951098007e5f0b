//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use opticenter_core::bench::{
    corrupt, default_methods, generate_scene, replicate_rng, run_monte_carlo, scene_rng,
    MonteCarloReport, ScenarioConfig,
};
use opticenter_core::formulations::build;
use opticenter_core::prox::{
    huber, project_ball, project_box, prox_abs, prox_huber, prox_huber_of_norm, prox_norm,
    BoxConstraint, ProxFunction,
};
use opticenter_core::solvers::{
    solve_primal_dual, solve_tls, solve_wls_closed_form, Method, PrimalDualConfig,
};
use opticenter_core::{DirectionMode, Layout, LossSpec, ObservationSet, Threshold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

const BENCH_REPS: usize = 100;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("1 TLS Model 2 bias and sigma bands", criterion_tls_bands),
        ("2 Model 2 beats Model 1 for every loss", criterion_rankings),
        ("3 solver equivalence", criterion_equivalence),
        ("4 prox oracle suite", criterion_prox),
        ("5 noiseless exactness", criterion_noiseless),
        ("6 end-to-end bead pipeline", criterion_pipeline),
        (
            "7 determinism across reruns and thread counts",
            criterion_determinism,
        ),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let c = run();
        let secs = started.elapsed().as_secs_f64();
        println!(
            "{} criterion {name} ({secs:.1} s): {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// Monte Carlo at the published noise settings, shared by criteria 1 and 2.
fn reference_bench() -> &'static (Vec<MonteCarloReport>, Duration) {
    use std::sync::OnceLock;
    static REPORTS: OnceLock<(Vec<MonteCarloReport>, Duration)> = OnceLock::new();
    REPORTS.get_or_init(|| {
        let config = ScenarioConfig::reference();
        let mut methods = default_methods();
        methods.retain(|m| *m != Method::tls(Layout::Model2));
        let reports =
            run_monte_carlo(&config, &methods, BENCH_REPS, &PrimalDualConfig::default()).unwrap();
        // the TLS cell is timed on its own
        let started = Instant::now();
        let tls = run_monte_carlo(
            &config,
            &[Method::tls(Layout::Model2)],
            BENCH_REPS,
            &PrimalDualConfig::default(),
        )
        .unwrap();
        let elapsed = started.elapsed();
        (reports.into_iter().chain(tls).collect(), elapsed)
    })
}

fn report<'a>(reports: &'a [MonteCarloReport], name: &str) -> &'a MonteCarloReport {
    reports
        .iter()
        .find(|r| r.method == name)
        .unwrap_or_else(|| panic!("no report for {name}"))
}

fn criterion_tls_bands() -> Check {
    let (reports, elapsed) = reference_bench();
    let tls = report(reports, "tls:2");
    let bias_ok = tls.bias_percent.iter().all(|b| b.abs() <= 0.3);
    let sigma_ok = tls.sigma_percent.iter().all(|s| (0.4..=1.2).contains(s));
    let problem1: Vec<&MonteCarloReport> = reports
        .iter()
        .filter(|r| r.method.starts_with("pd:"))
        .collect();
    let best_pd = problem1
        .iter()
        .map(|r| r.aggregate_error)
        .fold(f64::INFINITY, f64::min);
    let below = tls.aggregate_error < best_pd;
    let fast = elapsed.as_secs_f64() < 60.0;
    let fmt = |v: &[f64; 3]| format!("{:.2}/{:.2}/{:.2}", v[0], v[1], v[2]);
    check(
        bias_ok && sigma_ok && below && fast && tls.valid,
        format!(
            "bias% {} (|.| <= 0.3), sigma% {} (in [0.4, 1.2]), aggregate {:.1} vs best primal-dual {:.1}, \
             {} replications in {:.2} s",
            fmt(&tls.bias_percent),
            fmt(&tls.sigma_percent),
            tls.aggregate_error,
            best_pd,
            tls.realizations,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_rankings() -> Check {
    let (reports, _) = reference_bench();
    let mut pass = true;
    let mut parts = Vec::new();
    for loss in ["l1", "block-l2", "huber:t=auto"] {
        let m1 = report(reports, &format!("pd:1:{loss}"));
        let m2 = report(reports, &format!("pd:2:{loss}"));
        let aggregate = m2.aggregate_error < m1.aggregate_error;
        let z_bias = m1.bias_percent[2].abs() > m2.bias_percent[2].abs();
        pass &= aggregate && z_bias && m1.valid && m2.valid;
        parts.push(format!(
            "{loss}: aggregate {:.1} < {:.1}, |z bias| {:.2}% > {:.2}%",
            m2.aggregate_error,
            m1.aggregate_error,
            m1.bias_percent[2].abs(),
            m2.bias_percent[2].abs()
        ));
    }
    check(pass, parts.join("; "))
}

fn criterion_equivalence() -> Check {
    let config = ScenarioConfig::reference();
    let scene = generate_scene(&config, &mut scene_rng(config.seed)).unwrap();
    let pd = PrimalDualConfig {
        relative_tolerance: 1e-13,
        max_iterations: 200_000,
        ..PrimalDualConfig::default()
    };
    let mut worst_pd = 0.0_f64;
    for r in 0..50 {
        let noisy = corrupt(&scene, &config, &mut replicate_rng(config.seed, r)).unwrap();
        let system = build(&noisy, Layout::Model1, DirectionMode::AsMeasured).unwrap();
        let wls = solve_wls_closed_form(&system).unwrap().center;
        let got = solve_primal_dual(&system, LossSpec::SquaredBlocks, &pd)
            .unwrap()
            .solution
            .center;
        worst_pd = worst_pd.max((got - wls).norm() / wls.coords.norm());
    }

    let mut worst_tls = 0.0_f64;
    for seed in 0..10 {
        let exact = ScenarioConfig {
            seed,
            ..ScenarioConfig::reference()
        };
        let scene = generate_scene(&exact, &mut scene_rng(seed)).unwrap();
        for layout in [Layout::Model1, Layout::Model2] {
            let system = build(&scene, layout, DirectionMode::Unit).unwrap();
            let s = solve_tls(&system).unwrap();
            let c = exact.true_center;
            let mut want = vec![c.x, c.y, c.z];
            let mut got = vec![s.center.x, s.center.y, s.center.z];
            if let Some(d) = &s.aux_distances {
                want.extend(
                    scene
                        .iter()
                        .map(|o| o.direction().as_ref().dot(&(o.anchor() - c))),
                );
                got.extend(d.iter());
            }
            let (want, got) = (DVector::from_vec(want), DVector::from_vec(got));
            worst_tls = worst_tls.max((got - &want).norm() / want.norm());
        }
    }
    check(
        worst_pd <= 1e-5 && worst_tls <= 1e-8,
        format!(
            "primal-dual (sq) vs closed-form WLS, 50 noisy instances: worst relative gap {worst_pd:.2e} (<= 1e-5); \
             TLS on 20 exact systems: worst relative error {worst_tls:.2e} (<= 1e-8)"
        ),
    )
}

type Prox = Box<dyn Fn(&DVector<f64>, f64, f64) -> DVector<f64>>;
type Objective = Box<dyn Fn(&DVector<f64>, f64) -> f64>;

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    // sum of uniforms, close enough to normal for probing
    DVector::from_fn(n, |_, _| {
        (0..6).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() / 1.414
    })
}

fn prox_cases() -> Vec<(String, usize, Prox, Objective)> {
    let bounds = BoxConstraint::new(vec![-0.5, 0.0, -1.0], vec![0.5, 2.0, 0.25]).unwrap();
    let inside = bounds.clone();
    let mut cases: Vec<(String, usize, Prox, Objective)> = vec![
        (
            "abs".into(),
            4,
            Box::new(|x, g, _| prox_abs(x, g)),
            Box::new(|u, _| u.iter().map(|v| v.abs()).sum()),
        ),
        (
            "norm".into(),
            3,
            Box::new(|x, g, _| prox_norm(x, g)),
            Box::new(|u, _| u.norm()),
        ),
        (
            "huber".into(),
            1,
            Box::new(|x, g, t| DVector::from_element(1, prox_huber(x[0], t, g))),
            Box::new(|u, t| huber(u[0], t)),
        ),
        (
            "huber of norm".into(),
            3,
            Box::new(|x, g, t| prox_huber_of_norm(x, t, g)),
            Box::new(|u, t| huber(u.norm(), t)),
        ),
        (
            "ball".into(),
            3,
            Box::new(|x, _, t| project_ball(x, t)),
            Box::new(|u, t| {
                if u.norm() <= t * (1.0 + 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }),
        ),
        (
            "box".into(),
            3,
            Box::new(move |x, _, _| project_box(x, &bounds)),
            Box::new(move |u, _| {
                if inside.contains(u) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }),
        ),
    ];
    for spec in [
        "l1",
        "l2",
        "block-l2",
        "huber:t=1",
        "huber-norm:t=1",
        "block-huber:t=1",
        "sq",
    ] {
        let spec: LossSpec = spec.parse().unwrap();
        // the threshold is drawn per case and substituted here
        let with_t = move |t: f64| {
            let s = match spec {
                LossSpec::HuberComponentwise(_) => {
                    LossSpec::HuberComponentwise(Threshold::Fixed(t))
                }
                LossSpec::HuberGlobalNorm(_) => LossSpec::HuberGlobalNorm(Threshold::Fixed(t)),
                LossSpec::BlockHuberNorm(_) => LossSpec::BlockHuberNorm(Threshold::Fixed(t)),
                other => other,
            };
            s.resolve(&DVector::zeros(6))
        };
        cases.push((
            format!("loss {spec}"),
            6,
            Box::new(move |x, g, t| {
                let mut out = x.clone();
                with_t(t).prox_in_place(out.as_mut_slice(), g);
                out
            }),
            Box::new(move |u, t| with_t(t).value(u.as_slice())),
        ));
    }
    cases
}

fn criterion_prox() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut failures = Vec::new();
    let cases = prox_cases();
    for (name, dim, prox, f) in &cases {
        let mut ok = true;
        for _ in 0..100 {
            let x = gaussian(*dim, &mut rng) * rng.random_range(0.1..5.0);
            let gamma = rng.random_range(0.05..4.0);
            let t = rng.random_range(0.1..3.0);
            let p = prox(&x, gamma, t);
            let obj = |u: &DVector<f64>| 0.5 * (u - &x).norm_squared() + gamma * f(u, t);
            let best = obj(&p);
            ok &= best.is_finite();
            for k in 0..1000 {
                let q = &p + gaussian(*dim, &mut rng) * [1e-6, 1e-3, 1e-1][k % 3];
                ok &= best <= obj(&q) + 1e-12 * best.abs().max(1.0);
            }
        }
        for _ in 0..1000 {
            let gamma = rng.random_range(0.05..4.0);
            let t = rng.random_range(0.1..3.0);
            let x = gaussian(*dim, &mut rng) * 2.0;
            let y = gaussian(*dim, &mut rng) * 2.0;
            let d = prox(&x, gamma, t) - prox(&y, gamma, t);
            ok &= d.norm_squared() <= (&x - &y).dot(&d) + 1e-12;
        }
        if !ok {
            failures.push(name.clone());
        }
    }

    // at unit step: x/2 inside |x| <= 2t, x - t sign(x) outside
    let mut formula_gap = 0.0_f64;
    for t in [0.1, 0.5, 1.0, 2.5, 40.0] {
        for k in -400..=400 {
            let x = k as f64 * t / 100.0;
            let want = if x.abs() <= 2.0 * t {
                x / 2.0
            } else {
                x - t * x.signum()
            };
            formula_gap = formula_gap.max((prox_huber(x, t, 1.0) - want).abs());
        }
    }
    check(
        failures.is_empty() && formula_gap == 0.0,
        format!(
            "{} operators x 100 draws x 1000 perturbations and 1000 firm-nonexpansiveness pairs, failing: {:?}; \
             unit-step Huber formula max gap {formula_gap:e}",
            cases.len(),
            failures
        ),
    )
}

fn criterion_noiseless() -> Check {
    let mut methods = vec![
        Method::wls(),
        Method::tls(Layout::Model1),
        Method::tls(Layout::Model2),
    ];
    for layout in [Layout::Model1, Layout::Model2] {
        for loss in [
            "l1",
            "l2",
            "block-l2",
            "huber",
            "huber-norm:t=5",
            "block-huber",
            "sq",
        ] {
            methods.push(Method::primal_dual(layout, loss.parse().unwrap()));
        }
    }
    let mut worst = 0.0_f64;
    let mut worst_method = String::new();
    let mut bundles = Vec::new();
    for (n, seed) in [(2, 1), (3, 2), (200, 3)] {
        let config = ScenarioConfig {
            n_beads: n,
            seed,
            ..ScenarioConfig::reference()
        };
        bundles.push((
            config.true_center,
            generate_scene(&config, &mut scene_rng(seed)).unwrap(),
        ));
    }
    for (truth, scene) in &bundles {
        for m in &methods {
            let c = m
                .solve(scene, DirectionMode::Unit, &PrimalDualConfig::default())
                .unwrap()
                .center;
            let err = (c - truth).norm();
            if err > worst {
                worst = err;
                worst_method = format!("{m} with {} lines", scene.len());
            }
        }
    }
    check(
        worst <= 1e-6,
        format!(
            "{} methods on exact bundles of 2, 3 and 200 lines: worst error {worst:.2e} ({worst_method}) <= 1e-6",
            methods.len()
        ),
    )
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_opticenter"));
    c.env_remove("OPTICENTER_SEED");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = bin()
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn criterion_pipeline() -> Check {
    match pipeline() {
        Ok(c) => c,
        Err(e) => check(false, e),
    }
}

fn pipeline() -> Result<Check, String> {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let d = dir.path();
    let started = Instant::now();
    let planted = [128.0, 128.0, 500.0];
    run_in(
        d,
        &[
            "synth-stack",
            "--seed",
            "11",
            "--out",
            "beads.raw",
            "--scene-out",
            "planted.csv",
        ],
    )?;
    run_in(
        d,
        &["extract", "--stack", "beads.raw", "--out", "lines.csv"],
    )?;
    run_in(
        d,
        &[
            "estimate",
            "--input",
            "lines.csv",
            "--solver",
            "tls",
            "--model",
            "2",
            "--out",
            "center.json",
        ],
    )?;
    let est: Value =
        serde_json::from_str(&fs::read_to_string(d.join("center.json")).unwrap()).unwrap();
    let c: Vec<f64> = serde_json::from_value(est["center"].clone()).unwrap();
    let center = format!("{},{},{}", c[0], c[1], c[2]);
    let summary: Value = serde_json::from_str(
        run_in(
            d,
            &[
                "analyze",
                "--input",
                "lines.csv",
                "--center",
                &center,
                "--out",
                "tilt.csv",
            ],
        )?
        .trim(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();

    let rel: Vec<f64> = c
        .iter()
        .zip(planted)
        .map(|(g, w)| (g - w).abs() / w)
        .collect();
    let r_squared = summary["fit"]["r_squared"].as_f64().unwrap_or(f64::NAN);
    let max_tilt = summary["max_angle"].as_f64().unwrap_or(f64::NAN);
    // tilt implied by where the beads were planted
    let scene = ObservationSet::read_csv(fs::File::open(d.join("planted.csv")).unwrap()).unwrap();
    let predicted = scene
        .iter()
        .map(|o| {
            let a = o.anchor();
            (a.x - planted[0])
                .hypot(a.y - planted[1])
                .atan2(planted[2] - a.z)
        })
        .fold(0.0, f64::max);
    let kept = summary["kept"].as_u64().unwrap_or(0);
    Ok(check(
        rel.iter().all(|r| *r <= 0.02) && r_squared > 0.95 && (max_tilt - predicted).abs() <= 0.02 && elapsed < 120.0,
        format!(
            "{kept} lines, center ({:.2}, {:.2}, {:.2}) off by {:.2}/{:.2}/{:.2}% (<= 2%), R^2 {r_squared:.3} (> 0.95), \
             max tilt {max_tilt:.3} vs {predicted:.3} rad (within 0.02), {elapsed:.1} s (< 120)",
            c[0],
            c[1],
            c[2],
            rel[0] * 100.0,
            rel[1] * 100.0,
            rel[2] * 100.0
        ),
    ))
}

fn criterion_determinism() -> Check {
    match determinism() {
        Ok(c) => c,
        Err(e) => check(false, e),
    }
}

// Every file in `dir`, with timing and thread count removed from manifests.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in fs::read_dir(&p).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = path
                .strip_prefix(dir)
                .unwrap()
                .to_string_lossy()
                .into_owned();
            let mut bytes = fs::read(&path).unwrap();
            if name.ends_with("manifest.json") {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                let o = v.as_object_mut().unwrap();
                o.remove("duration_seconds");
                o.remove("threads");
                // the thread count is also on the recorded command line
                if let Some(Value::Array(argv)) = o.get_mut("argv") {
                    if let Some(i) = argv.iter().position(|a| a == "--threads") {
                        argv.drain(i..i + 2);
                    }
                }
                bytes = serde_json::to_vec(&v).unwrap();
            }
            files.insert(name, bytes);
        }
    }
    files
}

fn session(dir: &Path, threads: &str) -> Result<Vec<String>, String> {
    let t = ["--threads", threads];
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "simulate",
            "--center",
            "1000,1000,5000",
            "--seed",
            "21",
            "--out",
            "scene.csv",
        ],
        vec![
            "corrupt",
            "--input",
            "scene.csv",
            "--seed",
            "21",
            "--replicate",
            "3",
            "--out",
            "noisy.csv",
        ],
        vec![
            "estimate",
            "--input",
            "noisy.csv",
            "--loss",
            "huber",
            "--out",
            "pd.json",
        ],
        vec![
            "estimate",
            "--input",
            "noisy.csv",
            "--solver",
            "tls",
            "--out",
            "tls.json",
        ],
        vec![
            "estimate",
            "--input",
            "noisy.csv",
            "--solver",
            "wls",
            "--model",
            "1",
            "--out",
            "wls.json",
        ],
        vec![
            "bench",
            "--seed",
            "21",
            "--reps",
            "6",
            "--n",
            "80",
            "--out-dir",
            "bench",
        ],
        vec![
            "bench",
            "--seed",
            "22",
            "--reps",
            "4",
            "--n",
            "60",
            "--redraw-scene",
            "--methods",
            "tls:2,pd:1:l1",
            "--out-dir",
            "redraw",
        ],
        vec![
            "synth-stack",
            "--seed",
            "5",
            "--dims",
            "96,96,64",
            "--n",
            "8",
            "--layers",
            "20,40",
            "--center",
            "48,48,200",
            "--out",
            "s.raw",
            "--scene-out",
            "planted.csv",
        ],
        vec!["extract", "--stack", "s.raw", "--out", "found.csv"],
        vec![
            "analyze",
            "--input",
            "found.csv",
            "--center",
            "48,48,200",
            "--out",
            "tilt.csv",
        ],
    ];
    let mut stdout = Vec::new();
    for c in &commands {
        let args: Vec<&str> = c.iter().chain(t.iter()).copied().collect();
        stdout.push(run_in(dir, &args)?);
    }
    stdout.push(run_in(dir, &["replay", "noisy.csv.manifest.json"])?);
    Ok(stdout)
}

fn determinism() -> Result<Check, String> {
    let runs: Vec<(TempDir, &str)> = ["1", "1", "4"]
        .iter()
        .map(|t| (TempDir::new().unwrap(), *t))
        .collect();
    let mut snapshots = Vec::new();
    let mut outputs = Vec::new();
    for (dir, threads) in &runs {
        outputs.push(session(dir.path(), threads)?);
        snapshots.push(snapshot(dir.path()));
    }
    let files = snapshots[0].len();
    let mut differing = Vec::new();
    for (name, bytes) in &snapshots[0] {
        if snapshots[1..].iter().any(|s| s.get(name) != Some(bytes)) {
            differing.push(name.clone());
        }
    }
    let same_stdout = outputs.iter().all(|o| *o == outputs[0]);
    let same_names = snapshots.iter().all(|s| s.keys().eq(snapshots[0].keys()));
    Ok(check(
        differing.is_empty() && same_stdout && same_names,
        format!(
            "11 commands run three times (1, 1 and 4 threads): {files} files compared, differing {differing:?}, \
             console output identical: {same_stdout}"
        ),
    ))
}
