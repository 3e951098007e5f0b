use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use opticenter_core::bench::{
    corrupt, default_methods, estimates_csv, format_table, generate_scene, replicate_rng,
    run_monte_carlo, scene_rng, ScenarioConfig,
};
use opticenter_core::formulations::build;
use opticenter_core::solvers::{
    solve_primal_dual, solve_tls, solve_wls_closed_form, Method, PrimalDualConfig, SolverKind,
    StepSize,
};
use opticenter_core::{BoxConstraint, DirectionMode, LossSpec, ObservationSet, Point3, Threshold};
use opticenter_psf::{
    extract, orientation_vs_distance, plant_scene, synthesize_stack, BeadParams, ExtractionParams,
    PlantingConfig, VolumeStack,
};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::cli::*;
use crate::{Failure, Outcome};

pub(crate) fn execute(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Bench(a) => bench(a),
        Command::SynthStack(a) => synth_stack(a),
        Command::Extract(a) => extract_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::Replay(_) => unreachable!("replay is resolved before execution"),
    }
}

/// The output a manifest is written next to.
pub(crate) fn primary_output(command: &Command) -> Option<PathBuf> {
    Some(match command {
        Command::Simulate(a) => a.out.clone(),
        Command::Corrupt(a) => a.out.clone(),
        Command::Estimate(a) => a.out.clone(),
        Command::Bench(a) => a.out_dir.clone(),
        Command::SynthStack(a) => a.out.clone(),
        Command::Extract(a) => a.out.clone(),
        Command::Analyze(a) => a.out.clone(),
        Command::Replay(_) => return None,
    })
}

fn read_observations(path: &Path) -> anyhow::Result<ObservationSet> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ObservationSet::read_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn write_observations(obs: &ObservationSet, path: &Path) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    obs.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn scenario(
    n: usize,
    center: [f64; 3],
    layers: &[f64],
    weights: &Option<Vec<f64>>,
    seed: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        n_beads: n,
        true_center: Point3::from(center),
        layer_depths: layers.to_vec(),
        layer_weights: weights.clone().unwrap_or_else(|| vec![1.0; layers.len()]),
        seed,
        ..ScenarioConfig::reference()
    }
}

fn with_noise(mut config: ScenarioConfig, noise: &NoiseArgs) -> ScenarioConfig {
    config.outlier_probability = noise.outlier_prob;
    config.sigma_direction = noise.sigma_dir;
    config.sigma_anchor = noise.sigma_anchor;
    config
}

fn usage_check(config: &ScenarioConfig) -> Result<(), Failure> {
    config.validate().map_err(|e| Failure::Usage(e.to_string()))
}

fn direction_mode(options: &SolverArgs) -> DirectionMode {
    if options.renormalize {
        DirectionMode::Unit
    } else {
        DirectionMode::AsMeasured
    }
}

fn simulate(a: &SimulateArgs) -> Result<Outcome, Failure> {
    let mut config = scenario(a.n, a.center, &a.layers, &a.layer_weights, a.seed);
    config.lateral_range = a.lateral_range;
    usage_check(&config)?;
    let scene = generate_scene(&config, &mut scene_rng(a.seed))?;
    write_observations(&scene, &a.out)?;
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        seed: Some(a.seed),
        summary: format!("wrote {} lines to {}", scene.len(), a.out.display()),
        ..Outcome::default()
    })
}

fn corrupt_cmd(a: &CorruptArgs) -> Result<Outcome, Failure> {
    let config = with_noise(
        ScenarioConfig {
            seed: a.seed,
            ..ScenarioConfig::reference()
        },
        &a.noise,
    );
    usage_check(&config)?;
    let scene = read_observations(&a.input)?;
    let noisy = corrupt(&scene, &config, &mut replicate_rng(a.seed, a.replicate))?;
    write_observations(&noisy, &a.out)?;
    Ok(Outcome {
        inputs: vec![a.input.clone()],
        outputs: vec![a.out.clone()],
        seed: Some(a.seed),
        summary: format!(
            "wrote {} corrupted lines to {}",
            noisy.len(),
            a.out.display()
        ),
    })
}

fn solver_config(options: &SolverArgs, gamma: &str) -> Result<PrimalDualConfig, Failure> {
    let step = match gamma {
        "auto" => StepSize::Auto,
        g => match g.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => StepSize::Fixed(v),
            _ => {
                return Err(Failure::Usage(format!(
                    "--gamma must be `auto` or a positive number, got `{g}`"
                )))
            }
        },
    };
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Failure::Usage(
            "--tol and --max-iter must be positive".into(),
        ));
    }
    Ok(PrimalDualConfig {
        step,
        max_iterations: options.max_iter,
        relative_tolerance: options.tol,
        ..PrimalDualConfig::default()
    })
}

fn estimate(a: &EstimateArgs) -> Result<Outcome, Failure> {
    let method =
        Method::new(a.solver, a.model, a.loss).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut config = solver_config(&a.solver_options, &a.gamma)?;
    let obs = read_observations(&a.input)?;
    obs.ensure_non_empty()?;
    let system = build(&obs, a.model, direction_mode(&a.solver_options))?;
    if let Some((w, h)) = a.fov {
        config.constraint = Some(BoxConstraint::field_of_view(w, h, system.cols())?);
    }

    let mut extra = serde_json::Map::new();
    let solution = match a.solver {
        SolverKind::Wls => solve_wls_closed_form(&system)?,
        SolverKind::Tls => solve_tls(&system)?,
        SolverKind::PrimalDual => {
            let out = solve_primal_dual(&system, a.loss, &config)?;
            extra.insert("step".into(), json!(out.step));
            if a.loss.threshold().is_some() {
                extra.insert("huber_threshold".into(), json!(out.loss.huber_threshold()));
            }
            out.solution
        }
    };
    let d = &solution.diagnostics;
    let mut report = json!({
        "method": method.to_string(),
        "center": [solution.center.x, solution.center.y, solution.center.z],
        "aux_distances": solution.aux_distances.as_ref().map(|v| v.as_slice().to_vec()),
        "observations": obs.len(),
        "iterations": d.iterations,
        "objective": d.objective,
        "residual_norm": d.residual_norm,
        "termination": d.termination.as_str(),
    });
    report
        .as_object_mut()
        .expect("object literal")
        .extend(extra);
    write_json(&a.out, &report)?;
    Ok(Outcome {
        inputs: vec![a.input.clone()],
        outputs: vec![a.out.clone()],
        seed: None,
        summary: format!(
            "{}: center = ({:.4}, {:.4}, {:.4})",
            method, solution.center.x, solution.center.y, solution.center.z
        ),
    })
}

fn bench(a: &BenchArgs) -> Result<Outcome, Failure> {
    let mut config = with_noise(
        scenario(a.n, a.center, &a.layers, &a.layer_weights, a.seed),
        &a.noise,
    );
    config.redraw_scene = a.redraw_scene;
    config.directions = direction_mode(&a.solver_options);
    usage_check(&config)?;
    if a.reps < 2 {
        return Err(Failure::Usage("--reps must be at least 2".into()));
    }
    let solver = solver_config(&a.solver_options, "auto")?;
    let mut methods = a.methods.clone().unwrap_or_else(default_methods);
    if let Some(t) = a.huber_t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Usage("--huber-t must be positive".into()));
        }
        for m in &mut methods {
            m.loss = match m.loss {
                LossSpec::HuberComponentwise(Threshold::Auto) => {
                    LossSpec::HuberComponentwise(Threshold::Fixed(t))
                }
                LossSpec::HuberGlobalNorm(Threshold::Auto) => {
                    LossSpec::HuberGlobalNorm(Threshold::Fixed(t))
                }
                LossSpec::BlockHuberNorm(Threshold::Auto) => {
                    LossSpec::BlockHuberNorm(Threshold::Fixed(t))
                }
                other => other,
            };
        }
    }

    let reports = run_monte_carlo(&config, &methods, a.reps, &solver)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let table = format_table(&reports);
    let report_path = a.out_dir.join("report.json");
    let table_path = a.out_dir.join("table.txt");
    let csv_path = a.out_dir.join("estimates.csv");
    write_json(
        &report_path,
        &json!({
            "seed": a.seed,
            "replications": a.reps,
            "true_center": [config.true_center.x, config.true_center.y, config.true_center.z],
            "reports": reports,
        }),
    )?;
    fs::write(&table_path, &table)?;
    fs::write(&csv_path, estimates_csv(&reports))?;
    Ok(Outcome {
        outputs: vec![report_path, table_path, csv_path],
        seed: Some(a.seed),
        summary: table,
        ..Outcome::default()
    })
}

fn synth_stack(a: &SynthStackArgs) -> Result<Outcome, Failure> {
    let mut inputs = Vec::new();
    let mut outputs = vec![a.out.clone(), VolumeStack::sidecar_path(&a.out)];
    // stream 0 places beads, stream 1 draws pixel noise
    let mut placement = scene_rng(a.seed);
    let mut noise: ChaCha8Rng = replicate_rng(a.seed, 0);
    let scene = match &a.scene {
        Some(path) => {
            inputs.push(path.clone());
            read_observations(path)?
        }
        None => {
            let planting = PlantingConfig {
                dims: a.dims,
                n_beads: a.n,
                center: Point3::from(a.center),
                layer_depths: a.layers.clone(),
                min_spacing: a.spacing,
                border: a.border,
            };
            plant_scene(&planting, &mut placement)?
        }
    };
    let params = BeadParams {
        sigma_parallel: a.sigma_parallel,
        sigma_perpendicular: a.sigma_perp,
        peak_intensity: a.peak,
        background: a.background,
        noise_sigma: a.noise,
        ..BeadParams::default()
    };
    let stack = synthesize_stack(&scene, &params, a.dims, &mut noise)?;
    stack.write(&a.out)?;
    if let Some(path) = &a.scene_out {
        write_observations(&scene, path)?;
        outputs.push(path.clone());
    }
    Ok(Outcome {
        inputs,
        outputs,
        seed: Some(a.seed),
        summary: format!(
            "rendered {} beads into a {}x{}x{} stack at {}",
            scene.len(),
            a.dims[0],
            a.dims[1],
            a.dims[2],
            a.out.display()
        ),
    })
}

fn extract_cmd(a: &ExtractArgs) -> Result<Outcome, Failure> {
    let params = ExtractionParams {
        blur_sigmas: a.blur,
        tophat_half_sizes: a.tophat,
        threshold: a.threshold,
        min_volume: a.min_volume,
        max_extent: a.max_extent,
        ratio_filter: a.ratio_filter,
    };
    params
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let stack =
        VolumeStack::read(&a.stack).with_context(|| format!("reading {}", a.stack.display()))?;
    let found = extract(&stack, &params)?;
    write_observations(&found.observations, &a.out)?;
    let mut summary = serde_json::to_value(&found)?;
    summary["observations"] = json!(found.observations.len());
    Ok(Outcome {
        inputs: vec![a.stack.clone(), VolumeStack::sidecar_path(&a.stack)],
        outputs: vec![a.out.clone()],
        seed: None,
        summary: serde_json::to_string(&summary)?,
    })
}

fn analyze(a: &AnalyzeArgs) -> Result<Outcome, Failure> {
    if !(a.ratio_filter >= 0.0) {
        return Err(Failure::Usage("--ratio-filter must be nonnegative".into()));
    }
    let obs = read_observations(&a.input)?;
    let kept: ObservationSet = obs
        .iter()
        .filter(|o| o.weight() > a.ratio_filter)
        .cloned()
        .collect();
    let table = orientation_vs_distance(&kept, &Point3::from(a.center));
    fs::write(&a.out, table.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    let summary = json!({
        "lines": obs.len(),
        "kept": kept.len(),
        "max_angle": table.max_angle(),
        "fit": table.fit,
    });
    Ok(Outcome {
        inputs: vec![a.input.clone()],
        outputs: vec![a.out.clone()],
        seed: None,
        summary: serde_json::to_string(&summary)?,
    })
}
