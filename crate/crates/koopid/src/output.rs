//! CSV and JSON artifacts.
//!
//! Every CSV starts with a `# koopid <name> v<N>` comment line naming the
//! schema, followed by a header row with a fixed column order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use koopid_core::identifier::StepLog;
use koopid_core::MetaRecord;

pub const TIMESERIES_SCHEMA: &str = "# koopid timeseries v1";
pub const META_HISTORY_SCHEMA: &str = "# koopid meta_history v1";
pub const META_HISTORY_COLUMNS: [&str; 6] = ["iter", "mask", "n_xi", "ell", "J_R", "best_so_far"];

/// `t, x1, x2, u, n_s, e_norm, g_norm, V, regret, sigma_err,
/// xi_1..xi_n, xi_hat_bar_1..xi_hat_bar_n, a_i_j.., b_i_k..`
pub fn timeseries_columns(n: usize, m: usize) -> Vec<String> {
    let mut cols: Vec<String> =
        ["t", "x1", "x2", "u", "n_s", "e_norm", "g_norm", "V", "regret", "sigma_err"].map(String::from).to_vec();
    cols.extend((1..=n).map(|i| format!("xi_{i}")));
    cols.extend((1..=n).map(|i| format!("xi_hat_bar_{i}")));
    for i in 1..=n {
        cols.extend((1..=n).map(|j| format!("a_{i}_{j}")));
        cols.extend((1..=m).map(|k| format!("b_{i}_{k}")));
    }
    cols
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_writer(path: &Path, schema: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{schema}")?;
    Ok(csv::Writer::from_writer(w))
}

pub fn write_timeseries(path: &Path, rows: &[StepLog], n: usize, m: usize) -> Result<()> {
    let mut w = csv_writer(path, TIMESERIES_SCHEMA)?;
    w.write_record(timeseries_columns(n, m))?;
    for r in rows {
        let mut rec = vec![
            num(r.t),
            num(r.x[0]),
            num(r.x[1]),
            num(r.u),
            num(r.n_s),
            num(r.e_norm),
            num(r.g_norm),
            num(r.v),
            num(r.regret),
        ];
        rec.push(r.sigma_err.map(num).unwrap_or_default());
        rec.extend(r.xi.iter().copied().map(num));
        rec.extend(r.xi_hat_bar.iter().copied().map(num));
        rec.extend(r.ab.iter().copied().map(num));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_meta_history(path: &Path, records: &[MetaRecord], best_so_far: &[f64]) -> Result<()> {
    let mut w = csv_writer(path, META_HISTORY_SCHEMA)?;
    w.write_record(META_HISTORY_COLUMNS)?;
    for (i, (r, b)) in records.iter().zip(best_so_far).enumerate() {
        w.write_record([(i + 1).to_string(), r.mask.to_string(), r.n_xi.to_string(), num(r.ell), num(r.j_r), num(*b)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
