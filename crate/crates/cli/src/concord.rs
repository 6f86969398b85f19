use tokenloss_core::concordance::{concordance, ConcordanceReport};
use tokenloss_core::{Manifest, SummaryName, SummarySet};

use crate::args::ConcordArgs;
use crate::common::{manifest, members, parse_summary_set, subset, summarize_all, summary_mode, write_text};
use crate::render::concordance_table;
use crate::{usage, CliResult};

pub fn check_summaries(list: &str) -> CliResult<Vec<SummaryName>> {
    let s = parse_summary_set(list)?;
    if s.len() < 2 {
        return Err(usage(format!("--summaries needs at least two summaries, got {list:?}")));
    }
    Ok(s)
}

pub fn percentiles_of(summaries: &[SummaryName]) -> Vec<u8> {
    let mut ks: Vec<u8> = summaries
        .iter()
        .filter_map(|s| match s {
            SummaryName::Percentile(k) => Some(*k),
            SummaryName::Mean => None,
        })
        .collect();
    if ks.is_empty() {
        ks.push(50);
    }
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Reports for the requested families, or for every family with at least
/// two checkpoints.
pub fn reports(
    m: &Manifest,
    families: &[String],
    table: &[SummarySet],
    summaries: &[SummaryName],
) -> CliResult<Vec<ConcordanceReport>> {
    let names = if families.is_empty() {
        m.families()
            .into_iter()
            .filter(|f| m.family(f).map(|c| c.len() >= 2).unwrap_or(false))
            .collect()
    } else {
        families.to_vec()
    };
    names
        .iter()
        .map(|f| {
            let ids = m.family(f)?;
            Ok(concordance(f, &subset(table, &ids), summaries)?)
        })
        .collect()
}

pub fn run(a: ConcordArgs) -> CliResult<()> {
    let summaries = check_summaries(&a.summaries)?;
    let mode = summary_mode(&a.mode)?;
    let m = manifest(&a.manifest)?;
    let all = members(&m, &a.families)?;
    let table = summarize_all(&all, &percentiles_of(&summaries), mode)?;
    let reports = reports(&m, &a.families, &table, &summaries)?;
    write_text(a.out.as_deref(), &concordance_table(&reports, &summaries, a.decimals))
}
