use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use tokenloss_core::correlate::MetricSeries;
use tokenloss_core::loss_store::{load_manifest, read_metric_file};
use tokenloss_core::quantiles::{default_ks, parse_summaries, summarize_path, SummaryMode};
use tokenloss_core::{CheckpointMeta, Error, Manifest, SummaryName, SummarySet};

use crate::args::ModeArgs;
use crate::{usage, CliResult};

pub fn summary_mode(m: &ModeArgs) -> CliResult<SummaryMode> {
    if !(m.epsilon > 0.0 && m.epsilon <= 0.01) {
        return Err(usage(format!("--epsilon {} outside (0, 0.01]", m.epsilon)));
    }
    Ok(if m.exact {
        SummaryMode::Exact
    } else if m.sketch {
        SummaryMode::Sketch { epsilon: m.epsilon }
    } else {
        SummaryMode::Auto { epsilon: m.epsilon }
    })
}

pub fn parse_ks(list: Option<&str>) -> CliResult<Vec<u8>> {
    let Some(list) = list else {
        return Ok(default_ks());
    };
    let mut ks = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.parse::<u8>() {
            Ok(k) if (1..=99).contains(&k) => ks.push(k),
            _ => return Err(usage(format!("bad percentile {tok:?}: expected an integer in 1..=99"))),
        }
    }
    if ks.is_empty() {
        return Err(usage("--ks is empty"));
    }
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

pub fn parse_summary_set(list: &str) -> CliResult<Vec<SummaryName>> {
    parse_summaries(list).map_err(|e| usage(e.to_string()))
}

pub fn parse_floats(list: &str, what: &str) -> CliResult<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| usage(format!("bad {what} value {t:?}"))))
        .collect()
}

pub fn parse_bounds(list: &str) -> CliResult<Vec<f64>> {
    let bounds = parse_floats(list, "band edge")?;
    tokenloss_core::shape::bands(&bounds).map_err(|e| usage(e.to_string()))?;
    Ok(bounds)
}

pub fn parse_steps(list: &str) -> CliResult<Vec<usize>> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| usage(format!("bad step {t:?}"))))
        .collect()
}

pub fn manifest(path: &Path) -> CliResult<Manifest> {
    Ok(load_manifest(path)?)
}

/// Checkpoints of the given families (all when empty), each once, in
/// manifest order.
pub fn members<'a>(manifest: &'a Manifest, families: &[String]) -> CliResult<Vec<&'a CheckpointMeta>> {
    for f in families {
        manifest.family(f)?;
    }
    Ok(manifest
        .checkpoints
        .iter()
        .filter(|c| families.is_empty() || families.iter().any(|f| c.in_family(f)))
        .collect())
}

/// The families to report: the requested ones, or every family.
pub fn families_or_all(manifest: &Manifest, families: &[String]) -> CliResult<Vec<String>> {
    for f in families {
        manifest.family(f)?;
    }
    Ok(if families.is_empty() {
        manifest.families()
    } else {
        families.to_vec()
    })
}

pub fn summarize_all(checkpoints: &[&CheckpointMeta], ks: &[u8], mode: SummaryMode) -> CliResult<Vec<SummarySet>> {
    let out = checkpoints
        .par_iter()
        .map(|c| summarize_path(&c.loss_path, &c.id, ks, mode))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(out)
}

/// Picks the summaries of `ids` out of a table computed for a superset.
pub fn subset(table: &[SummarySet], ids: &[&CheckpointMeta]) -> Vec<SummarySet> {
    ids.iter()
        .filter_map(|c| table.iter().find(|s| s.checkpoint_id == c.id).cloned())
        .collect()
}

/// Metric values for `name`: manifest metrics, overridden by the file.
pub fn metric_series(name: &str, checkpoints: &[&CheckpointMeta], file: Option<&Path>) -> CliResult<MetricSeries> {
    let mut values: BTreeMap<String, f64> = checkpoints
        .iter()
        .filter_map(|c| c.metrics.get(name).map(|&v| (c.id.clone(), v)))
        .collect();
    if let Some(path) = file {
        values.extend(read_metric_file(path)?);
    }
    let ids: Vec<String> = checkpoints.iter().map(|c| c.id.clone()).collect();
    let vals = ids
        .iter()
        .map(|id| {
            values.get(id).copied().ok_or_else(|| {
                Error::MissingSummary {
                    checkpoint: id.clone(),
                    summary: name.to_string(),
                }
                .into()
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(MetricSeries::new(name, ids, vals)?)
}

pub fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

pub fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            std::fs::write(path, text).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| crate::CliError::Internal(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}
