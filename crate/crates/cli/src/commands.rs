use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use rpl_core::config::RunConfig;
use rpl_core::mcwf::{
    deterministic_leakage_error, estimate_gate_error, stats_csv, with_workers, TrajectorySpec,
};
use rpl_core::metrics::{evaluate_gate, GateTarget, BASIS};
use rpl_core::model::{DriveSetup, GateModels};
use rpl_core::optimizer::optimize as run_optimizer;
use rpl_core::propagator::{trajectory_csv, PropagateOptions};
use rpl_core::sweep::{fit_linear, run_sweep};
use rpl_core::waveform::Family;
use rpl_core::{Error, Result};
use serde_json::{json, Value};

use crate::Common;

pub type Runner = fn(&Context) -> Result<Outcome>;

pub struct Context {
    cfg: RunConfig,
    out: PathBuf,
    force: bool,
    provenance: Value,
}

/// Files to write (name, contents), exit code and a one-line summary.
pub struct Outcome {
    files: Vec<(String, String)>,
    code: u8,
    summary: String,
}

impl Outcome {
    fn ok(files: Vec<(String, String)>, summary: String) -> Self {
        Self {
            files,
            code: 0,
            summary,
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Loads the config, runs the command, then writes every artifact. Nothing
/// is written unless the command succeeds.
pub fn execute(name: &str, args: &Common, run: Runner) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if args.workers == Some(0) {
        return Err(Error::Config("--workers must be ≥ 1".into()));
    }
    let provenance = json!({
        "tool": "rpl",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "config": serde_json::to_value(&cfg)?,
    });
    let ctx = Context {
        cfg,
        out: args.out.clone(),
        force: args.force,
        provenance,
    };
    let outcome = with_workers(args.workers, || run(&ctx))??;
    if !outcome.files.is_empty() {
        fs::create_dir_all(&args.out)?;
    }
    for (file, contents) in &outcome.files {
        fs::write(args.out.join(file), contents)?;
    }
    println!("{}", outcome.summary);
    Ok(ExitCode::from(outcome.code))
}

fn symmetric_models(
    cfg: &RunConfig,
    blockade_mhz: Option<f64>,
    with_decay: bool,
) -> Result<GateModels> {
    let mut p = cfg.physics_params()?;
    if let Some(b) = blockade_mhz {
        p = p.with_blockade_mhz(b);
    }
    if !with_decay {
        p.decay = 0.0;
    }
    GateModels::build(&DriveSetup::Symmetric(cfg.build_waveform()?.into()), &p)
}

fn headline(target: GateTarget, fidelity: f64, corrected: f64) -> f64 {
    match target {
        GateTarget::StrictCz => fidelity,
        GateTarget::ControlledPhase => corrected,
    }
}

pub fn simulate(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let waveform = cfg.build_waveform()?;
    let models = symmetric_models(cfg, None, true)?;
    let run = evaluate_gate(&models, cfg.simulation.options())?;
    let report = run.outcome.report();
    let fidelity = headline(cfg.target, report.fidelity, report.corrected.fidelity);
    let manifolds: Vec<Value> = [
        (&models.m00, &run.m00),
        (&models.m01, &run.m01),
        (&models.m10, &run.m10),
    ]
    .iter()
    .zip(BASIS)
    .map(|((m, r), name)| {
        json!({
            "input": name,
            "basis": m.labels(),
            "steps": r.step_count,
            "max_norm_drift": r.max_norm_drift,
            "final_populations": r.final_state.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>(),
        })
    })
    .collect();
    let doc = json!({
        "provenance": ctx.provenance,
        "family": waveform.family(),
        "target": cfg.target,
        "fidelity": fidelity,
        "gate_error": 1.0 - fidelity,
        "gate": report,
        "manifolds": manifolds,
        "waveform_check": waveform.validate(),
    });
    let mut files = vec![("gate_report.json".to_string(), json_text(&doc))];
    for ((m, r), name) in [
        (&models.m00, &run.m00),
        (&models.m01, &run.m01),
        (&models.m10, &run.m10),
    ]
    .iter()
    .zip(BASIS)
    {
        files.push((
            format!("trajectory_{name}.csv"),
            trajectory_csv(m.labels(), &r.samples),
        ));
    }
    files.push(("waveform.csv".into(), waveform.to_csv(1001)));
    Ok(Outcome::ok(
        files,
        format!(
            "fidelity {fidelity:.8} ({:?}), gate error {:.3e}",
            cfg.target,
            1.0 - fidelity
        ),
    ))
}

/// Minimum fidelity for a convention to count as consistent with the model.
const CALIBRATION_THRESHOLD: f64 = 0.99;

pub fn calibrate(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let lock_path = ctx.out.join("convention.lock");
    if lock_path.exists() && !ctx.force {
        let lock: Value = serde_json::from_str(&fs::read_to_string(&lock_path)?)?;
        let passed = lock["passed"].as_bool().unwrap_or(false);
        let summary = format!(
            "reusing {} (selected {})",
            lock_path.display(),
            lock["selected"]
        );
        return Ok(Outcome {
            files: vec![],
            code: if passed { 0 } else { 4 },
            summary,
        });
    }
    let family = cfg.waveform.family();
    if family == Family::Sampled {
        return Err(Error::Config(
            "waveform.family: calibration needs a sinusoidal or bernstein waveform".into(),
        ));
    }
    let mut results = serde_json::Map::new();
    let mut best: Option<(&str, f64)> = None;
    for (name, angular) in [("angular", true), ("linear", false)] {
        let mut c = cfg.clone();
        c.waveform.angular = angular;
        let g = evaluate_gate(
            &symmetric_models(&c, None, false)?,
            PropagateOptions::default().with_tol(cfg.simulation.tol),
        )?;
        let r = g.outcome.report();
        let score = headline(cfg.target, r.fidelity, r.corrected.fidelity);
        results.insert(name.into(), json!({ "fidelity": r.fidelity, "corrected_fidelity": r.corrected.fidelity, "score": score }));
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((name, score));
        }
    }
    let (selected, score) = best.expect("two conventions scored");
    let passed = score > CALIBRATION_THRESHOLD;
    let doc = json!({
        "provenance": ctx.provenance,
        "family": family,
        "target": cfg.target,
        "conventions": results,
        "selected": selected,
        "angular": selected == "angular",
        "passed": passed,
    });
    let summary = if passed {
        format!("selected {selected} convention (score {score:.8})")
    } else {
        format!("neither convention reaches {CALIBRATION_THRESHOLD}: best {selected} at {score:.6}; model mismatch")
    };
    Ok(Outcome {
        files: vec![("convention.lock".into(), json_text(&doc))],
        code: if passed { 0 } else { 4 },
        summary,
    })
}

pub fn mcwf(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let m = cfg
        .mcwf
        .as_ref()
        .ok_or_else(|| Error::Config("mcwf: block missing".into()))?;
    let target = m.target.unwrap_or(cfg.target);
    let lines = m
        .blockade_mhz
        .clone()
        .unwrap_or_else(|| vec![cfg.physics.blockade_mhz]);
    let mut files = Vec::new();
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for b in lines {
        let models = symmetric_models(cfg, Some(b), false)?;
        let mut stats = Vec::new();
        let mut points = Vec::new();
        for &gamma in &m.gamma_per_us {
            let spec = TrajectorySpec::new(models.clone(), gamma, m.n_trajectories, m.base_seed)
                .with_target(target)
                .with_tol(cfg.simulation.tol);
            let s = estimate_gate_error(&spec)?;
            let oracle = deterministic_leakage_error(&models, gamma, target, cfg.simulation.tol)?;
            let z =
                (s.standard_error > 0.0).then(|| (s.mean_gate_error - oracle) / s.standard_error);
            points.push(json!({
                "gamma_per_us": gamma,
                "mean_error": s.mean_gate_error,
                "stderr": s.standard_error,
                "jump_fraction": { "00": s.jump_fraction[0], "01": s.jump_fraction[1], "10": s.jump_fraction[2] },
                "oracle_error": oracle,
                "z_score": z,
            }));
            stats.push(s);
        }
        let xs: Vec<f64> = stats.iter().map(|s| s.gamma).collect();
        let ys: Vec<f64> = stats.iter().map(|s| s.mean_gate_error).collect();
        let fit = fit_linear(&xs, &ys).ok();
        if let Some(f) = fit {
            summary.push(format!(
                "B = {b} MHz: slope {:.4e} per 1/μs, R² {:.4}",
                f.slope, f.r_squared
            ));
        }
        let file = format!("mcwf_stats_B{b}MHz.csv");
        files.push((file.clone(), stats_csv(&stats)));
        reports.push(json!({ "B_MHz": b, "stats_file": file, "points": points, "fit": fit }));
    }
    let doc = json!({
        "provenance": ctx.provenance,
        "target": target,
        "n_trajectories": m.n_trajectories,
        "base_seed": m.base_seed,
        "lines": reports,
    });
    files.push(("mcwf_report.json".into(), json_text(&doc)));
    let summary = if summary.is_empty() {
        format!("{} stats file(s) written", files.len() - 1)
    } else {
        summary.join("\n")
    };
    Ok(Outcome::ok(files, summary))
}

pub fn sweep(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let spec = cfg.sweep_spec()?;
    let result = run_sweep(&spec)?;
    let fit = result.fit().ok();
    let doc = json!({
        "provenance": ctx.provenance,
        "axis": result.axis_name,
        "perturbation": spec.perturbation,
        "epsilon": spec.epsilon,
        "target": spec.target,
        "mcwf": spec.mcwf,
        "csv": "sweep.csv",
        "rows": result.rows,
        "fit": fit,
    });
    let summary = format!("{} points along {}", result.rows.len(), result.axis_name);
    Ok(Outcome::ok(
        vec![
            ("sweep.csv".into(), result.to_csv()),
            ("sweep_manifest.json".into(), json_text(&doc)),
        ],
        summary,
    ))
}

pub fn optimize(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let problem = cfg.optimization_problem()?;
    let report = run_optimizer(&problem)?;
    let waveform =
        problem
            .parametrization
            .build(&report.best_params, problem.gate_time, problem.angular)?;
    let mut p = problem.physics;
    p.decay = 0.0;
    let models = GateModels::build(&DriveSetup::Symmetric(waveform.clone().into()), &p)?;
    let gate = evaluate_gate(&models, PropagateOptions::default())?
        .outcome
        .report();
    let doc = json!({
        "provenance": ctx.provenance,
        "target": problem.target,
        "best_error": report.best_error,
        "evaluations": report.evaluations,
        "evaluations_to_1e-4": report.evals_to_reach(1e-4),
        "budget_exhausted": report.budget_exhausted,
        "best_waveform": waveform.to_spec(),
        "gate": gate,
        "restarts": report.restarts,
        "trace_csv": "optimize_trace.csv",
    });
    let summary = format!(
        "best error {:.3e} after {} evaluations",
        report.best_error, report.evaluations
    );
    Ok(Outcome::ok(
        vec![
            ("optimize_trace.csv".into(), report.trace_csv()),
            ("optimize_report.json".into(), json_text(&doc)),
        ],
        summary,
    ))
}
