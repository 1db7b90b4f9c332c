//! The three entry points. Each writes its artifacts into `out` and returns
//! the process exit code.

use std::path::Path;

use anyhow::{Context, Result};
use koopid_core::identifier::integrate_identifier;
use koopid_core::meta::{exhaustive_oracle, run_bo, IdentifierEvaluator};
use koopid_core::plant::true_koopman;
use koopid_core::{
    IdentityInput, KoopmanEstimate, MaskEvaluator, Matrix, MetaRecord, ObservableCatalog, ObservableLibrary,
    PlantParams,
};
use serde_json::{json, Value};

use crate::config::Experiment;
use crate::evaluate::{CachedEvaluator, ParallelEvaluator};
use crate::output::{write_json, write_meta_history, write_text, write_timeseries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Exact pair when the library lifts to `{x1, x2, x1², x1⁴}` in that order.
pub fn known_truth(
    catalog: &ObservableCatalog,
    library: &ObservableLibrary,
    plant: &PlantParams,
) -> Option<KoopmanEstimate> {
    let wanted: [&[u32]; 4] = [&[1, 0], &[0, 1], &[2, 0], &[4, 0]];
    let got: Vec<&[u32]> = library.indices().iter().filter_map(|&k| catalog.entry(k).map(|m| m.exponents())).collect();
    if got.len() != 4 || got.iter().zip(wanted).any(|(g, w)| *g != w) {
        return None;
    }
    let (a, b) = true_koopman(plant);
    Some(KoopmanEstimate::from_parts(&a, &Matrix::from_row_slice(4, 1, &b)))
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn prepare(out: &Path, exp: &Experiment) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("config.toml"), &exp.echo())
}

fn config_json(exp: &Experiment) -> Value {
    let mut raw = exp.raw.clone();
    raw.meta.seed = exp.meta.seed;
    serde_json::to_value(raw).expect("config serializes")
}

pub fn identify(exp: &Experiment, out: &Path) -> Result<i32> {
    prepare(out, exp)?;
    let truth = known_truth(&exp.catalog, &exp.library, &exp.run.plant);
    let n = exp.library.n_xi();
    let d = n + 1;
    let mut summary = json!({
        "command": "identify",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_json(exp),
        "library": exp.library.indices(),
        "mask": exp.library.encode(exp.catalog.len()).to_string(),
        "stack_capacity_covers_regressor": exp.run.stack.capacity >= d,
    });

    let outcome = match integrate_identifier(&exp.run, &exp.catalog, &exp.library, &IdentityInput, truth.as_ref()) {
        Ok(o) => o,
        Err(e) => {
            summary["error"] = json!(e.to_string());
            summary["converged"] = json!(false);
            summary["exit_code"] = json!(EXIT_NOT_CONVERGED);
            write_json(&out.join("summary.json"), &summary)?;
            return Ok(EXIT_NOT_CONVERGED);
        }
    };

    write_timeseries(&out.join("timeseries.csv"), &outcome.trajectory, n, 1)?;
    let s = &outcome.summary;
    let est = &outcome.estimate;
    summary["a_hat"] = json!(rows(&est.a_hat()));
    summary["b_hat"] = json!(rows(&est.b_hat()));
    summary["rank_condition"] = json!({
        "satisfied": s.rank_condition,
        "m_theta": s.m_theta,
        "rank_tol": exp.run.stack.rank_tol,
        "samples": outcome.stack.len(),
    });
    summary["run"] = serde_json::to_value(s)?;
    summary["stored_loss"] = json!(koopid_core::meta::stored_loss(est, &outcome.stack));
    if let Some(t) = &truth {
        summary["truth"] = json!({
            "a": rows(&t.a_hat()),
            "b": rows(&t.b_hat()),
            "max_abs_a_error": max_abs_diff(&est.a_hat(), &t.a_hat()),
            "max_abs_b_error": max_abs_diff(&est.b_hat(), &t.b_hat()),
        });
    }
    let code = if s.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    summary["converged"] = json!(s.converged);
    summary["exit_code"] = json!(code);
    write_json(&out.join("summary.json"), &summary)?;
    Ok(code)
}

fn candidate_json(r: &MetaRecord) -> Value {
    json!({
        "mask": r.mask.to_string(),
        "library": r.mask.decode().map(|l| l.indices().to_vec()).unwrap_or_default(),
        "n_xi": r.n_xi,
        "ell": r.ell,
        "J_R": r.j_r,
        "activation_time": r.summary.as_ref().and_then(|s| s.activation_time),
        "m_theta": r.summary.as_ref().map(|s| s.m_theta),
        "converged": r.summary.as_ref().map(|s| s.converged),
        "failure": r.failure,
    })
}

pub fn meta(exp: &Experiment, out: &Path) -> Result<i32> {
    prepare(out, exp)?;
    let ev = CachedEvaluator::new(IdentifierEvaluator::new(
        &exp.run,
        &exp.catalog,
        &IdentityInput,
        exp.meta.lambda_sparsity,
    ));
    let res = run_bo(&exp.meta, &exp.space, &ev)?;
    write_meta_history(&out.join("meta_history.csv"), &res.history, &res.best_so_far)?;
    let best = res.best_record();
    let summary = json!({
        "command": "meta",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_json(exp),
        "seed": exp.meta.seed,
        "theta_star": best.mask.decode().map(|l| l.indices().to_vec()).unwrap_or_default(),
        "theta_star_mask": best.mask.to_string(),
        "J_R_star": best.j_r,
        "evaluations": res.history.len(),
        "distinct_evaluations": ev.cached(),
        "stagnated": res.stagnated,
        "candidates": res.history.iter().map(candidate_json).collect::<Vec<_>>(),
        "exit_code": EXIT_OK,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(EXIT_OK)
}

pub fn oracle(exp: &Experiment, out: &Path, jobs: usize) -> Result<i32> {
    prepare(out, exp)?;
    let inner = IdentifierEvaluator::new(&exp.run, &exp.catalog, &IdentityInput, exp.meta.lambda_sparsity);
    let ev = ParallelEvaluator::new(inner, jobs)?;
    let res = exhaustive_oracle(&exp.space, &ev as &dyn MaskEvaluator);
    let mut running = f64::INFINITY;
    let best_so_far: Vec<f64> = res
        .table
        .iter()
        .map(|r| {
            running = running.min(r.j_r);
            running
        })
        .collect();
    write_meta_history(&out.join("meta_history.csv"), &res.table, &best_so_far)?;
    let best = res.best_record();
    let ranking: Vec<Value> = res.ranking().iter().take(10).map(|&i| candidate_json(&res.table[i])).collect();
    let summary = json!({
        "command": "oracle",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_json(exp),
        "jobs": jobs,
        "theta_star": best.mask.decode().map(|l| l.indices().to_vec()).unwrap_or_default(),
        "theta_star_mask": best.mask.to_string(),
        "J_R_star": best.j_r,
        "evaluations": res.table.len(),
        "top10": ranking,
        "candidates": res.table.iter().map(candidate_json).collect::<Vec<_>>(),
        "exit_code": EXIT_OK,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(EXIT_OK)
}
