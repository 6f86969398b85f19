//! Correlating CE summaries with external quality metrics, selection rules,
//! trajectory normalization and crossing detection, and pass@k intervals.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::quantiles::{SummaryName, SummarySet};

/// An external per-checkpoint quality metric (judge score, accuracy, ...).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: String,
    pub checkpoint_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, checkpoint_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if checkpoint_ids.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: checkpoint_ids.len(),
                right: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "metric {name:?} has non-finite value {} for {:?}",
                values[i], checkpoint_ids[i]
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &checkpoint_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(MetricSeries {
            name,
            checkpoint_ids,
            values,
        })
    }

    pub fn from_map(name: impl Into<String>, map: &BTreeMap<String, f64>) -> Result<Self> {
        Self::new(name, map.keys().cloned().collect(), map.values().copied().collect())
    }

    pub fn get(&self, checkpoint_id: &str) -> Option<f64> {
        self.checkpoint_ids
            .iter()
            .position(|id| id == checkpoint_id)
            .map(|i| self.values[i])
    }

    pub fn require(&self, checkpoint_id: &str) -> Result<f64> {
        self.get(checkpoint_id).ok_or_else(|| Error::MissingSummary {
            checkpoint: checkpoint_id.to_string(),
            summary: self.name.clone(),
        })
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!(
            "correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("correlation inputs must be finite"));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation input has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, tied values sharing the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// One row of a correlation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub summary: SummaryName,
    pub pearson: f64,
    pub spearman: f64,
}

/// Correlates the mean and each percentile in `ks` with `metric` across the
/// family. Rows come in the order mean, then `ks`.
pub fn percentile_sweep(summaries: &[SummarySet], metric: &MetricSeries, ks: &[u8]) -> Result<Vec<SweepRow>> {
    let y = summaries
        .iter()
        .map(|s| metric.require(&s.checkpoint_id))
        .collect::<Result<Vec<_>>>()?;
    std::iter::once(SummaryName::Mean)
        .chain(ks.iter().map(|&k| SummaryName::Percentile(k)))
        .map(|name| {
            let x = summaries.iter().map(|s| s.require(name)).collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                summary: name,
                pearson: pearson(&x, &y)?,
                spearman: spearman(&x, &y)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "name")]
pub enum RuleColumn {
    Summary(SummaryName),
    Metric(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRule {
    pub column: RuleColumn,
    pub direction: Direction,
}

impl SelectionRule {
    /// CE summaries are minimized, anything else is a metric to maximize.
    pub fn parse(token: &str) -> Self {
        match token.parse::<SummaryName>() {
            Ok(name) => SelectionRule {
                column: RuleColumn::Summary(name),
                direction: Direction::Min,
            },
            Err(_) => SelectionRule {
                column: RuleColumn::Metric(token.to_string()),
                direction: Direction::Max,
            },
        }
    }

    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        let rules: Vec<Self> = list
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Self::parse)
            .collect();
        if rules.is_empty() {
            return Err(Error::invalid("no selection rules given"));
        }
        Ok(rules)
    }

    pub fn label(&self) -> String {
        match &self.column {
            RuleColumn::Summary(name) => format!("Best {name} CE"),
            RuleColumn::Metric(name) => format!("Best {name}"),
        }
    }
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub rule: SelectionRule,
    pub checkpoint_id: String,
    pub value: f64,
    pub summary: SummarySet,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
}

impl SelectionTable {
    /// Markdown table with one row per rule: selected checkpoint, mean,
    /// median and p95, then every metric column.
    pub fn render(&self, digits: usize) -> String {
        let metric_names: Vec<&String> = self
            .rows
            .first()
            .map(|r| r.metrics.keys().collect())
            .unwrap_or_default();
        let mut out = String::from("| Selection rule | Selected checkpoint | Mean CE | Median CE | p95 CE |");
        for m in &metric_names {
            out.push_str(&format!(" {m} |"));
        }
        out.push('\n');
        out.push_str("|---|---|---|---|---|");
        out.push_str(&"---|".repeat(metric_names.len()));
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| sig(v, digits));
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |",
                row.rule.label(),
                row.checkpoint_id,
                cell(Some(row.summary.mean)),
                cell(row.summary.get(SummaryName::MEDIAN)),
                cell(row.summary.get(SummaryName::Percentile(95))),
            ));
            for m in &metric_names {
                out.push_str(&format!(" {} |", cell(row.metrics.get(*m).copied())));
            }
            out.push('\n');
        }
        out
    }
}

/// Applies each rule to the family. Ties go to the lexicographically
/// smallest checkpoint id.
pub fn select(summaries: &[SummarySet], metrics: &[MetricSeries], rules: &[SelectionRule]) -> Result<SelectionTable> {
    if summaries.is_empty() {
        return Err(Error::EmptyGroup("family"));
    }
    let metric_row = |id: &str| -> BTreeMap<String, f64> {
        metrics
            .iter()
            .filter_map(|m| m.get(id).map(|v| (m.name.clone(), v)))
            .collect()
    };
    let rows = rules
        .iter()
        .map(|rule| {
            let column = summaries
                .iter()
                .map(|s| match &rule.column {
                    RuleColumn::Summary(name) => s.require(*name),
                    RuleColumn::Metric(name) => metrics
                        .iter()
                        .find(|m| &m.name == name)
                        .ok_or_else(|| Error::invalid(format!("unknown metric {name:?}")))?
                        .require(&s.checkpoint_id),
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best = 0;
            for i in 1..summaries.len() {
                let better = match rule.direction {
                    Direction::Min => column[i] < column[best],
                    Direction::Max => column[i] > column[best],
                };
                let tie_wins = column[i] == column[best] && summaries[i].checkpoint_id < summaries[best].checkpoint_id;
                if better || tie_wins {
                    best = i;
                }
            }
            let s = &summaries[best];
            Ok(SelectionRow {
                rule: rule.clone(),
                checkpoint_id: s.checkpoint_id.clone(),
                value: column[best],
                summary: s.clone(),
                metrics: metric_row(&s.checkpoint_id),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionTable { rows })
}

/// Min-max normalization onto `[0, 1]`.
pub fn normalize_series(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot normalize an empty series"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::Degenerate("constant series cannot be min-max normalized".into()));
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// First step whose value is strictly below `reference`.
pub fn crossing_step(series: &[(u64, f64)], reference: f64) -> Option<u64> {
    series.iter().find(|(_, v)| *v < reference).map(|(s, _)| *s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassAtK {
    pub mean: f64,
    pub half_width: f64,
    pub prompts: usize,
    pub samples_per_prompt: u32,
}

/// Mean pass rate over prompts with a 95% normal-approximation half-width
/// from the per-prompt binomial sampling variance.
pub fn passk_ci(fractions: &[f64], samples_per_prompt: u32) -> Result<PassAtK> {
    if fractions.is_empty() {
        return Err(Error::EmptyGroup("prompts"));
    }
    if samples_per_prompt == 0 {
        return Err(Error::invalid("samples per prompt must be at least 1"));
    }
    let n = samples_per_prompt as f64;
    if let Some(p) = fractions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("success fraction {p} outside [0, 1]")));
    }
    let prompts = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / prompts;
    let var: f64 = fractions.iter().map(|p| p * (1.0 - p) / n).sum();
    Ok(PassAtK {
        mean,
        half_width: 1.96 * var.sqrt() / prompts,
        prompts: fractions.len(),
        samples_per_prompt,
    })
}
