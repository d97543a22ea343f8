use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::study::StudyResult;
use crate::error::{Error, Result};

pub const PCS_FILE: &str = "pcs.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const META_FILE: &str = "meta.csv";

/// Label of the material coding written to the metadata.
pub const ENCODING: &str = "dummy_k_minus_1_baseline_0";

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `pcs.csv`, `traces.csv` and `meta.csv` into `dir`, creating it if
/// needed. Floats use the shortest round-trip representation, so identical
/// results give byte-identical files.
pub fn write_outputs(result: &StudyResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_pcs(result, &dir.join(PCS_FILE))?;
    write_traces(result, &dir.join(TRACES_FILE))?;
    write_meta(result, &dir.join(META_FILE))
}

pub fn write_pcs(result: &StudyResult, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e: csv::Error| io_err(path, e);
    w.write_record(["method", "track", "step", "pcs", "stderr"])
        .map_err(csv_err)?;
    for m in &result.methods {
        for (step, (p, se)) in m.pcs.iter().zip(&m.stderr).enumerate() {
            w.write_record([
                m.method.policy.label().to_string(),
                m.method.track.label().to_string(),
                step.to_string(),
                p.to_string(),
                se.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_traces(result: &StudyResult, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e: csv::Error| io_err(path, e);
    w.write_record([
        "method",
        "track",
        "replication",
        "step",
        "chosen_index",
        "censored",
        "ei_value",
    ])
    .map_err(csv_err)?;
    for m in &result.methods {
        for t in &m.traces {
            for s in &t.steps {
                w.write_record([
                    m.method.policy.label().to_string(),
                    m.method.track.label().to_string(),
                    t.replication.to_string(),
                    s.step.to_string(),
                    s.chosen_index.to_string(),
                    opt(s.censored.map(u8::from)),
                    opt(s.ei_value),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_meta(result: &StudyResult, path: &Path) -> Result<()> {
    let cfg = &result.config;
    let mut rows: Vec<(String, String)> = vec![
        ("seed".into(), cfg.seed.to_string()),
        ("replications".into(), cfg.replications.to_string()),
        ("n_steps".into(), cfg.n_steps.to_string()),
        ("K".into(), cfg.k.to_string()),
        ("d".into(), cfg.d.to_string()),
        ("noise_sd".into(), cfg.noise_sd.to_string()),
        ("signal_to_std".into(), cfg.signal_to_std().to_string()),
        ("tau".into(), cfg.tau.to_string()),
        (
            "prior_points_per_material".into(),
            cfg.prior_points_per_material.to_string(),
        ),
        ("refit_every".into(), cfg.refit_every.to_string()),
        ("encoding".into(), ENCODING.into()),
        (
            "prior_censoring_rate".into(),
            result.prior_censoring_rate.to_string(),
        ),
        (
            "overall_censoring_rate".into(),
            result.overall_censoring_rate().to_string(),
        ),
    ];
    for m in &result.methods {
        let key = format!("{}:{}", m.method.policy.label(), m.method.track.label());
        rows.push((
            format!("censoring_rate:{key}"),
            m.censoring_rate.to_string(),
        ));
        rows.push((format!("fallbacks:{key}"), m.fallbacks.to_string()));
    }
    rows.push(("wall_time_seconds".into(), result.wall_seconds.to_string()));

    let mut w = writer(path)?;
    let csv_err = |e: csv::Error| io_err(path, e);
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    let mut f = w.into_inner().map_err(|e| io_err(path, e))?;
    f.flush().map_err(|e| io_err(path, e))
}
