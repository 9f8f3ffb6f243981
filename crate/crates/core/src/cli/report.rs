//! JSON documents: run manifests and result blocks.

use std::time::Instant;

use nalgebra::DVector;
use serde_json::{json, Value};

use super::io::InputInfo;
use crate::datagen::{DeltaReference, PlantedTruth};
use crate::geometry::Basis;
use crate::oracle::{DeltaEstimate, OracleResult};
use crate::solver::SolveReport;

/// Everything needed to rerun a command. Timing lives here so result
/// blocks stay byte-identical across reruns.
pub struct Manifest {
    command: &'static str,
    argv: Vec<String>,
    seed: Option<u64>,
    config: Value,
    input: Option<InputInfo>,
    warnings: Vec<String>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &'static str, argv: Vec<String>, seed: Option<u64>) -> Self {
        Self { command, argv, seed, config: Value::Null, input: None, warnings: Vec::new(), started: Instant::now() }
    }

    pub fn config(&mut self, config: Value) {
        self.config = config;
    }

    pub fn input(&mut self, info: InputInfo) {
        self.input = Some(info);
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    /// The `{"manifest", "result"}` document.
    pub fn finish(self, result: Value) -> Value {
        let input = self.input.map(|i| {
            json!({ "path": i.path.display().to_string(), "sha256": i.sha256, "n": i.n, "d": i.d })
        });
        json!({
            "manifest": {
                "command": self.command,
                "argv": self.argv,
                "version": env!("CARGO_PKG_VERSION"),
                "seed": self.seed,
                "config": self.config,
                "input": input,
                "timing": { "wall_ms": self.started.elapsed().as_secs_f64() * 1e3 },
                "warnings": self.warnings,
            },
            "result": result,
        })
    }
}

/// Basis vectors as rows.
pub fn basis_rows(b: &Basis) -> Value {
    let rows: Vec<Vec<f64>> = (0..b.dim()).map(|j| b.vector(j).iter().copied().collect()).collect();
    json!(rows)
}

pub fn vector(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

pub fn delta_value(d: DeltaEstimate) -> Value {
    match d {
        DeltaEstimate::Value(v) => json!(v),
        DeltaEstimate::ExactFit => json!("exact-fit"),
    }
}

pub fn solve_result(method: &str, r: &SolveReport) -> Value {
    let mut out = json!({
        "method": method,
        "subspace": basis_rows(&r.subspace),
        "trimmed_cost_k": r.trimmed_cost_k,
        "trimmed_cost_span": r.trimmed_cost_span,
        "span_dim": r.span_dim,
        "coreset": {
            "size": r.trace.all().len(),
            "indices": r.trace.all(),
            "round_draws": r.trace.rounds().iter().map(Vec::len).collect::<Vec<_>>(),
        },
        "per_round_residual_mass": r.per_round_residual_mass,
        "exact_fit": r.exact_fit,
        "inlier_indices": r.inlier_indices,
    });
    if let Some(m) = &r.mestimator {
        out["mestimator"] = json!({
            "loss": m.loss.to_string(),
            "p_cost_k": m.p_cost_k,
            "p_cost_span": m.p_cost_span,
            "init_factor": m.init_factor,
            "residual_sample_size": m.residual_sample_size,
        });
    }
    if let Some(a) = &r.affine {
        out["affine"] = json!({
            "origin": vector(&a.origin),
            "sample": a.sample,
            "best_part": a.best_part,
            "parts_evaluated": a.parts_evaluated,
        });
    }
    out
}

pub fn oracle_result(method: &str, r: &OracleResult) -> Value {
    json!({
        "method": method,
        "best_cost": r.best_cost,
        "best_inliers": r.best_inliers,
        "best_subspace": basis_rows(&r.best_subspace),
        "subsets_evaluated": r.subsets_evaluated,
        "exact": r.exact,
    })
}

pub fn truth_result(truth: &PlantedTruth, model: &str, points_path: &str) -> Value {
    json!({
        "points": points_path,
        "outlier_model": model,
        "subspace": basis_rows(&truth.subspace),
        "inlier_indices": truth.inlier_indices,
        "sigma_in": truth.sigma_in,
        "outlier_scale": truth.outlier_scale,
        "achieved_delta": delta_value(truth.achieved_delta),
        "delta_reference": match truth.delta_reference {
            DeltaReference::PlantedSubspace => "planted-subspace",
            DeltaReference::ExactOracle => "exact-oracle",
        },
        "affine_origin": truth.affine_origin.as_ref().map(vector),
    })
}
