//! Parallel, resumable parameter sweeps over evolution runs.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::Value;

use crate::commands::{run_evolve, RunSummary};
use crate::config::SweepManifest;
use crate::store::{run_id, write_atomic};

struct Row {
    values: Vec<Value>,
    dir: Option<PathBuf>,
    outcome: std::result::Result<RunSummary, String>,
}

fn cell(v: &Value) -> String {
    let text = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    csv_escape(&text)
}

fn csv_escape(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn render(manifest: &SweepManifest, rows: &[Option<Row>]) -> String {
    let mut out = String::from("index");
    for a in &manifest.axes {
        out.push(',');
        out.push_str(&csv_escape(&a.path));
    }
    out.push_str(",run,status,verdict,predicted,t_final,t_star_estimate,kinetic_ratio,mass_drift,energy_drift,steps,error\n");
    for (i, row) in rows.iter().enumerate() {
        let Some(row) = row else { continue };
        out.push_str(&i.to_string());
        for v in &row.values {
            out.push(',');
            out.push_str(&cell(v));
        }
        let run = row
            .dir
            .as_ref()
            .and_then(|d| d.file_name())
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        match &row.outcome {
            Ok(s) => out.push_str(&format!(
                ",{run},ok,{},{},{:e},{},{:e},{:e},{:e},{},\n",
                s.verdict,
                s.predicted,
                s.t_final,
                opt(s.t_star_estimate),
                s.kinetic_ratio,
                s.mass_drift,
                s.energy_drift,
                s.steps
            )),
            Err(e) => out.push_str(&format!(",{run},error,,,,,,,,,{}\n", csv_escape(e))),
        }
    }
    out
}

pub struct SweepReport {
    pub dir: PathBuf,
    pub computed: usize,
    pub reused: usize,
    pub failed: usize,
}

pub fn cmd_sweep(manifest: &SweepManifest, out: &Path, workers: Option<usize>) -> Result<SweepReport> {
    let points = manifest.points()?;
    let canonical = serde_json::json!({
        "base": manifest.base.canonical(),
        "axes": manifest.axes,
    });
    let id = run_id("sweep", &canonical);
    let dir = out.join(format!("sweep-{}", &id[..16]));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_atomic(&dir.join("sweep.json"), serde_json::to_string_pretty(&canonical)? + "\n")?;
    let summary_path = dir.join("summary.csv");

    let threads = workers.unwrap_or(manifest.max_parallel).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("worker pool")?;
    let rows: Mutex<Vec<Option<Row>>> = Mutex::new((0..points.len()).map(|_| None).collect());
    let counts = Mutex::new((0usize, 0usize, 0usize));
    pool.install(|| {
        points.par_iter().enumerate().for_each(|(i, (values, cfg))| {
            let result = run_evolve(cfg, out);
            let row = match result {
                Ok(o) => {
                    let mut c = counts.lock().unwrap();
                    if o.reused {
                        c.1 += 1;
                    } else {
                        c.0 += 1;
                    }
                    Row { values: values.clone(), dir: Some(o.dir), outcome: Ok(o.summary) }
                }
                Err(e) => {
                    counts.lock().unwrap().2 += 1;
                    Row { values: values.clone(), dir: None, outcome: Err(format!("{e:#}")) }
                }
            };
            let mut rows = rows.lock().unwrap();
            rows[i] = Some(row);
            // The summary is rewritten and renamed into place after every run.
            if let Err(e) = write_atomic(&summary_path, render(manifest, &rows)) {
                eprintln!("warning: {e:#}");
            }
        });
    });
    let (computed, reused, failed) = *counts.lock().unwrap();
    Ok(SweepReport { dir, computed, reused, failed })
}
