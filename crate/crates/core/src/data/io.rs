use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{PeReport, TrajectoryDataset};
use crate::error::{config_err, dim_err, Result};
use crate::traffic::Scope;

fn scope_label(scope: Scope) -> String {
    match scope {
        Scope::Global => "global".into(),
        Scope::Subsystem(i) => format!("subsystem:{i}"),
    }
}

fn parse_scope(s: &str) -> Result<Scope> {
    if s == "global" {
        return Ok(Scope::Global);
    }
    s.strip_prefix("subsystem:")
        .and_then(|i| i.parse().ok())
        .map(Scope::Subsystem)
        .ok_or_else(|| config_err(format!("bad scope `{s}` in dataset")))
}

/// Write a dataset as CSV: a header row, one row per sample with columns
/// `u_*`, `eps`, `y_*`, then `#`-prefixed `key=value` metadata lines.
pub fn write_dataset_csv(data: &TrajectoryDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.input_dim()).map(|i| format!("u_{i}")).collect();
    header.push("eps".into());
    header.extend((1..=data.output_dim()).map(|i| format!("y_{i}")));
    w.write_record(&header)?;
    for j in 0..data.len() {
        let mut row: Vec<String> = data.u.column(j).iter().map(|v| format!("{v:e}")).collect();
        row.push(format!("{:e}", data.eps[(0, j)]));
        row.extend(data.y.column(j).iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);
    let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
    writeln!(f, "# scope={}", scope_label(data.scope))?;
    writeln!(f, "# v_star={:e}", data.v_star)?;
    if let Some(pe) = &data.pe {
        writeln!(f, "# pe_order={}", pe.order)?;
        writeln!(f, "# pe_rows={}", pe.rows)?;
        writeln!(f, "# pe_rank={}", pe.rank)?;
        writeln!(f, "# pe_sigma_max={:e}", pe.sigma_max)?;
        writeln!(f, "# pe_sigma_min={:e}", pe.sigma_min)?;
        writeln!(f, "# pe_satisfied={}", pe.satisfied)?;
    }
    Ok(())
}

/// Read a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<TrajectoryDataset> {
    let mut meta = std::collections::HashMap::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if let Some(kv) = line.strip_prefix('#') {
            if let Some((k, v)) = kv.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.clone();
    let nu = header.iter().filter(|h| h.starts_with("u_")).count();
    let ny = header.iter().filter(|h| h.starts_with("y_")).count();
    if header.len() != nu + ny + 1 || header.get(nu) != Some("eps") {
        return Err(dim_err("dataset header must be u_*, eps, y_*"));
    }
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        cols.push(row.map_err(|e| config_err(format!("bad number in dataset: {e}")))?);
    }
    let t = cols.len();
    let u = DMatrix::from_fn(nu, t, |i, j| cols[j][i]);
    let eps = DMatrix::from_fn(1, t, |_, j| cols[j][nu]);
    let y = DMatrix::from_fn(ny, t, |i, j| cols[j][nu + 1 + i]);
    let scope = parse_scope(meta.get("scope").map(String::as_str).unwrap_or("global"))?;
    let get = |k: &str| meta.get(k).ok_or_else(|| config_err(format!("dataset metadata lacks `{k}`")));
    let v_star: f64 = get("v_star")?.parse().map_err(|_| config_err("bad v_star"))?;
    let mut data = TrajectoryDataset::new(scope, u, eps, y, v_star)?;
    if meta.contains_key("pe_order") {
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| config_err(format!("bad `{k}`"))) };
        data.pe = Some(PeReport {
            order: num("pe_order")? as usize,
            rows: num("pe_rows")? as usize,
            rank: num("pe_rank")? as usize,
            sigma_max: num("pe_sigma_max")?,
            sigma_min: num("pe_sigma_min")?,
            satisfied: get("pe_satisfied")? == "true",
        });
    }
    Ok(data)
}
