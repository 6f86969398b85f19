use std::path::Path;

use tokenloss_core::correlate::{
    crossing_step, normalize_series, passk_ci, percentile_sweep, select, MetricSeries, RuleColumn, SelectionRule,
};
use tokenloss_core::format::sig;
use tokenloss_core::quantiles::profile_ks;
use tokenloss_core::{CheckpointMeta, Error, SummaryName, SummarySet};

use crate::args::CorrelateArgs;
use crate::common::{csv_text, manifest, metric_series, summarize_all, summary_mode, write_text};
use crate::render::{crossing_csv, sweep_csv, trajectory_csv, TrajectoryPoint};
use crate::{usage, CliResult};

fn passk_section(path: &Path, samples: u32, digits: usize) -> CliResult<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let fractions = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                text: l.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let ci = passk_ci(&fractions, samples)?;
    let header = ["prompts", "samples", "mean", "half_width"].map(String::from);
    Ok(csv_text(
        &header,
        &[vec![
            ci.prompts.to_string(),
            ci.samples_per_prompt.to_string(),
            sig(ci.mean, digits),
            sig(ci.half_width, digits),
        ]],
    ))
}

/// Default selection rules for a metric.
pub fn default_rules(metric: Option<&str>) -> String {
    match metric {
        Some(m) => format!("mean,median,{m}"),
        None => "mean,median".to_string(),
    }
}

pub fn sweep_section(
    table: &[SummarySet],
    ids: &[&CheckpointMeta],
    metric: &str,
    metric_file: Option<&Path>,
    digits: usize,
) -> CliResult<String> {
    let series = metric_series(metric, ids, metric_file)?;
    Ok(sweep_csv(&percentile_sweep(table, &series, &profile_ks())?, digits))
}

/// Selection table. Every metric named by a rule is attached; `metric_file`
/// supplies values for `metric`.
pub fn select_section(
    table: &[SummarySet],
    ids: &[&CheckpointMeta],
    rules: &[SelectionRule],
    metric: Option<&str>,
    metric_file: Option<&Path>,
    digits: usize,
) -> CliResult<String> {
    let mut names: Vec<&str> = rules
        .iter()
        .filter_map(|r| match &r.column {
            RuleColumn::Metric(n) => Some(n.as_str()),
            RuleColumn::Summary(_) => None,
        })
        .chain(metric)
        .collect();
    names.dedup();
    let mut series: Vec<MetricSeries> = Vec::new();
    for name in names {
        if series.iter().any(|s| s.name == name) {
            continue;
        }
        let file = if Some(name) == metric { metric_file } else { None };
        series.push(metric_series(name, ids, file)?);
    }
    Ok(select(table, &series, rules)?.render(digits))
}

pub fn run(a: CorrelateArgs, digits: usize) -> CliResult<()> {
    let mut sections = Vec::new();
    if let Some(path) = &a.passk {
        sections.push(passk_section(path, a.samples, digits)?);
    }
    let wants_family = a.sweep || a.select.is_some() || a.trajectory.is_some() || a.metric.is_some();
    if wants_family || a.passk.is_none() {
        let Some(manifest_path) = &a.manifest else {
            return Err(usage("--manifest is required unless only --passk is given"));
        };
        let Some(family) = &a.family else {
            return Err(usage("--family is required"));
        };
        let mode = summary_mode(&a.mode)?;
        let m = manifest(manifest_path)?;
        let ids = m.family(family)?;
        let sweep = a.sweep || (a.select.is_none() && a.trajectory.is_none());
        let rules = a
            .select
            .as_deref()
            .map(SelectionRule::parse_list)
            .transpose()
            .map_err(|e| usage(e.to_string()))?;
        let tracked: SummaryName = a.summary.parse().map_err(|e: Error| usage(e.to_string()))?;
        if a.crossing && a.trajectory.is_none() {
            return Err(usage("--crossing needs --trajectory"));
        }
        if a.crossing && a.reference.is_none() && a.reference_checkpoint.is_none() {
            return Err(usage("--crossing needs --reference or --reference-checkpoint"));
        }
        if a.metric_file.is_some() && a.metric.is_none() {
            return Err(usage("--metric-file needs --metric"));
        }
        let mut ks = profile_ks();
        ks.extend([1, 99]);
        if let SummaryName::Percentile(k) = tracked {
            ks.push(k);
        }
        ks.sort_unstable();
        ks.dedup();
        let table = summarize_all(&ids, &ks, mode)?;

        if sweep {
            let Some(metric) = &a.metric else {
                return Err(usage("--sweep needs --metric"));
            };
            sections.push(sweep_section(&table, &ids, metric, a.metric_file.as_deref(), digits)?);
        }
        if let Some(rules) = rules {
            sections.push(select_section(
                &table,
                &ids,
                &rules,
                a.metric.as_deref(),
                a.metric_file.as_deref(),
                digits,
            )?);
        }
        if let Some(objective) = &a.trajectory {
            let mut points: Vec<(u64, &str, f64)> = ids
                .iter()
                .zip(&table)
                .filter(|(c, _)| &c.objective == objective)
                .map(|(c, s)| Ok((c.step, c.id.as_str(), s.require(tracked)?)))
                .collect::<CliResult<_>>()?;
            if points.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no checkpoints with objective {objective:?} in family {family:?}"
                ))
                .into());
            }
            points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
            let values: Vec<f64> = points.iter().map(|p| p.2).collect();
            let normalized = if a.normalize {
                Some(normalize_series(&values)?)
            } else {
                None
            };
            let rows: Vec<TrajectoryPoint> = points
                .iter()
                .enumerate()
                .map(|(i, p)| TrajectoryPoint {
                    step: p.0,
                    checkpoint_id: p.1.to_string(),
                    value: p.2,
                    normalized: normalized.as_ref().map(|n| n[i]),
                })
                .collect();
            sections.push(trajectory_csv(tracked, &rows, digits));
            if a.crossing {
                let reference = match (&a.reference, &a.reference_checkpoint) {
                    (Some(v), _) => *v,
                    (None, Some(id)) => {
                        let c = m.get(id).ok_or_else(|| usage(format!("unknown checkpoint {id:?}")))?;
                        summarize_all(&[c], &ks, mode)?[0].require(tracked)?
                    }
                    (None, None) => unreachable!("checked above"),
                };
                let series: Vec<(u64, f64)> = points.iter().map(|p| (p.0, p.2)).collect();
                sections.push(crossing_csv(reference, crossing_step(&series, reference), digits));
            }
        }
    }
    write_text(a.out.as_deref(), &sections.join("\n"))
}
