//! Text renderings shared by the standalone subcommands and `report`.

use tokenloss_core::concordance::ConcordanceReport;
use tokenloss_core::correlate::SweepRow;
use tokenloss_core::format::sig;
use tokenloss_core::shape::{BandTable, PercentileProfile};
use tokenloss_core::{SummaryName, SummarySet};

use crate::common::csv_text;

pub fn summaries_csv(table: &[SummarySet], ks: &[u8], digits: usize) -> String {
    let mut header = vec!["checkpoint_id".to_string(), "count".into(), "mean".into()];
    header.extend(ks.iter().map(|&k| SummaryName::Percentile(k).to_string()));
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|s| {
            let mut row = vec![s.checkpoint_id.clone(), s.count.to_string(), sig(s.mean, digits)];
            row.extend(ks.iter().map(|k| sig(s.percentiles[k], digits)));
            row
        })
        .collect();
    csv_text(&header, &rows)
}

/// Markdown table with one row per family: `pi(S)` then every pairwise
/// concordance of the summary set.
pub fn concordance_table(reports: &[ConcordanceReport], summaries: &[SummaryName], decimals: usize) -> String {
    let mut out = String::from("| Checkpoint family | pi(S) |");
    for a in 0..summaries.len() {
        for b in a + 1..summaries.len() {
            out.push_str(&format!(" {{{},{}}} |", summaries[a], summaries[b]));
        }
    }
    out.push('\n');
    let cols = 1 + summaries.len() * (summaries.len() - 1) / 2;
    out.push_str("|---|");
    out.push_str(&"---|".repeat(cols));
    out.push('\n');
    for r in reports {
        out.push_str(&format!("| {} ({}) | {:.*} |", r.family, r.checkpoints, decimals, r.pi));
        for p in &r.pairwise {
            out.push_str(&format!(" {:.*} |", decimals, p.pi));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow], digits: usize) -> String {
    let header = ["summary", "pearson", "spearman"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.summary.to_string(), sig(r.pearson, digits), sig(r.spearman, digits)])
        .collect();
    csv_text(&header, &rows)
}

pub fn profiles_csv(profiles: &[(String, PercentileProfile)], digits: usize) -> String {
    let mut header = vec!["family".to_string(), "checkpoint_id".into(), "iqr".into()];
    if let Some((_, p)) = profiles.first() {
        header.extend(p.ks.iter().map(|&k| SummaryName::Percentile(k).to_string()));
    }
    let rows: Vec<Vec<String>> = profiles
        .iter()
        .map(|(family, p)| {
            let mut row = vec![family.clone(), p.checkpoint_id.clone(), sig(p.iqr, digits)];
            row.extend(p.standardized.iter().map(|v| sig(*v, digits)));
            row
        })
        .collect();
    csv_text(&header, &rows)
}

pub fn distance_matrix_csv(ids: &[String], matrix: &[Vec<f64>], digits: usize) -> String {
    let mut header = vec!["checkpoint_id".to_string()];
    header.extend(ids.iter().cloned());
    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(matrix)
        .map(|(id, row)| {
            let mut r = vec![id.clone()];
            r.extend(row.iter().map(|v| sig(*v, digits)));
            r
        })
        .collect();
    csv_text(&header, &rows)
}

pub struct FamilyDistance {
    pub a: String,
    pub b: String,
    pub pairs: usize,
    pub mean: f64,
}

pub fn family_distances_csv(rows: &[FamilyDistance], digits: usize) -> String {
    let header = ["family_a", "family_b", "pairs", "mean_distance"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.a.clone(), r.b.clone(), r.pairs.to_string(), sig(r.mean, digits)])
        .collect();
    csv_text(&header, &rows)
}

pub struct TailRow {
    pub family: String,
    pub k: u8,
    pub checkpoints: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn tail_csv(rows: &[TailRow], digits: usize) -> String {
    let header = ["family", "k", "checkpoints", "mean", "std"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.clone(),
                r.k.to_string(),
                r.checkpoints.to_string(),
                sig(r.mean, digits),
                sig(r.std, digits),
            ]
        })
        .collect();
    csv_text(&header, &rows)
}

/// Percent of tokens per band, one row per checkpoint, then delta rows
/// against the reference when given.
pub fn bands_csv(tables: &[BandTable], deltas: &[(String, Vec<f64>)], digits: usize) -> String {
    let mut header = vec!["checkpoint_id".to_string(), "row".into()];
    if let Some(t) = tables.first() {
        header.extend(t.bands.iter().map(|b| b.label()));
    }
    let mut rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let mut r = vec![t.checkpoint_id.clone(), "mass".into()];
            r.extend(t.mass.iter().map(|m| sig(*m, digits)));
            r
        })
        .collect();
    for (id, d) in deltas {
        let mut r = vec![id.clone(), "delta".into()];
        r.extend(d.iter().map(|m| sig(*m, digits)));
        rows.push(r);
    }
    csv_text(&header, &rows)
}

pub struct TrajectoryPoint {
    pub step: u64,
    pub checkpoint_id: String,
    pub value: f64,
    pub normalized: Option<f64>,
}

pub fn trajectory_csv(summary: SummaryName, points: &[TrajectoryPoint], digits: usize) -> String {
    let mut header = vec!["step".to_string(), "checkpoint_id".into(), summary.to_string()];
    let normalized = points.first().is_some_and(|p| p.normalized.is_some());
    if normalized {
        header.push("normalized".into());
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut r = vec![p.step.to_string(), p.checkpoint_id.clone(), sig(p.value, digits)];
            if let Some(n) = p.normalized {
                r.push(sig(n, digits));
            }
            r
        })
        .collect();
    csv_text(&header, &rows)
}

pub fn crossing_csv(reference: f64, step: Option<u64>, digits: usize) -> String {
    let header = ["reference", "crossing_step"].map(String::from);
    let step = step.map_or_else(|| "none".to_string(), |s| s.to_string());
    csv_text(&header, &[vec![sig(reference, digits), step]])
}
