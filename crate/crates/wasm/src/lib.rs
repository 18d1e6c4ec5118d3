//! Browser bindings. Every export takes the command-line tool's JSON run
//! configuration and returns a JSON string; errors come back as a thrown
//! string.

use rpl_core::config::RunConfig;
use rpl_core::metrics::{evaluate_gate, GateTarget};
use rpl_core::model::{DriveSetup, GateModels};
use rpl_core::propagator::phase_trace;
use rpl_core::sweep::{run_sweep, Axis, SweepSpec};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn parse(config: &str) -> Result<RunConfig, String> {
    RunConfig::from_json(config).map_err(|e| e.to_string())
}

fn headline(target: GateTarget, strict: f64, corrected: f64) -> f64 {
    match target {
        GateTarget::StrictCz => 1.0 - strict,
        GateTarget::ControlledPhase => 1.0 - corrected,
    }
}

/// `{t_us, omega_MHz, delta_MHz}` on `points` uniform samples, in linear
/// frequency units whatever the convention.
pub fn waveform_preview_json(config: &str, points: usize) -> Result<String, String> {
    let cfg = parse(config)?;
    let w = cfg.build_waveform().map_err(|e| e.to_string())?;
    let scale = if w.angular() {
        1.0 / rpl_core::waveform::TWO_PI
    } else {
        1.0
    };
    let samples = w.samples(points.clamp(2, 4096));
    Ok(json!({
        "t_us": samples.iter().map(|s| s.0).collect::<Vec<_>>(),
        "omega_MHz": samples.iter().map(|s| s.1 * scale).collect::<Vec<_>>(),
        "delta_MHz": samples.iter().map(|s| s.2 * scale).collect::<Vec<_>>(),
        "check": w.validate(),
    })
    .to_string())
}

/// Gate report plus population and phase traces of the `|00⟩` manifold.
pub fn simulate_gate_json(config: &str, points: usize) -> Result<String, String> {
    let cfg = parse(config)?;
    let w = cfg.build_waveform().map_err(|e| e.to_string())?;
    let p = cfg.physics_params().map_err(|e| e.to_string())?;
    let models =
        GateModels::build(&DriveSetup::Symmetric(w.into()), &p).map_err(|e| e.to_string())?;
    let opts = cfg.simulation.options().with_record(points.clamp(2, 4096));
    let run = evaluate_gate(&models, opts).map_err(|e| e.to_string())?;
    let report = run.outcome.report();
    let traces = |r: &rpl_core::propagator::PropagationResult| {
        let phases = phase_trace(&r.samples);
        json!({
            "t_us": r.samples.iter().map(|s| s.t).collect::<Vec<_>>(),
            "populations": (0..r.final_state.len())
                .map(|k| r.samples.iter().map(|s| s.amplitudes[k].norm_sqr()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "phases_rad": phases.phases,
        })
    };
    Ok(json!({
        "target": cfg.target,
        "gate_error": headline(cfg.target, report.fidelity, report.corrected.fidelity),
        "gate": report,
        "m00": { "labels": models.m00.labels(), "trace": traces(&run.m00) },
        "m01": { "labels": models.m01.labels(), "trace": traces(&run.m01) },
    })
    .to_string())
}

/// Gate error at each blockade shift in `values_mhz`, decay-free.
pub fn blockade_scan_json(config: &str, values_mhz: &[f64]) -> Result<String, String> {
    let cfg = parse(config)?;
    if values_mhz.is_empty() || values_mhz.len() > 64 {
        return Err("between 1 and 64 blockade values".into());
    }
    let w = cfg.build_waveform().map_err(|e| e.to_string())?;
    let mut p = cfg.physics_params().map_err(|e| e.to_string())?;
    p.decay = 0.0;
    let mut spec = SweepSpec::new(w, p, Axis::Blockade, values_mhz.to_vec());
    spec.target = cfg.target;
    spec.tol = cfg.simulation.tol;
    let result = run_sweep(&spec).map_err(|e| e.to_string())?;
    Ok(json!({ "target": cfg.target, "rows": result.rows }).to_string())
}

#[wasm_bindgen]
pub fn waveform_preview(config: &str, points: usize) -> Result<String, JsValue> {
    waveform_preview_json(config, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_gate(config: &str, points: usize) -> Result<String, JsValue> {
    simulate_gate_json(config, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn blockade_scan(config: &str, values_mhz: Vec<f64>) -> Result<String, JsValue> {
    blockade_scan_json(config, &values_mhz).map_err(|e| JsValue::from_str(&e))
}
