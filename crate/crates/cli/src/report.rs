use std::collections::BTreeMap;

use serde::Serialize;
use tokenloss_core::concordance::ConcordanceReport;
use tokenloss_core::correlate::{percentile_sweep, SelectionRule, SweepRow};
use tokenloss_core::quantiles::profile_ks;
use tokenloss_core::shape::{standardize_profile, BandTable, PercentileProfile};
use tokenloss_core::SummarySet;

use crate::args::{ReportArgs, Section};
use crate::common::{
    families_or_all, manifest, members, metric_series, parse_bounds, parse_ks, subset, summarize_all, summary_mode,
    write_text,
};
use crate::concord::{check_summaries, percentiles_of, reports};
use crate::correlate::{default_rules, select_section, sweep_section};
use crate::render::{concordance_table, summaries_csv};
use crate::shape::{band_tables, section, ShapeInputs};
use crate::svg::line_chart;
use crate::{usage, CliError, CliResult};

#[derive(Serialize, Default)]
struct FamilyJson {
    checkpoints: Vec<String>,
    sweep: Option<Vec<SweepRow>>,
    bands: Option<Vec<BandTable>>,
    profiles: Option<Vec<PercentileProfile>>,
    skipped: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct ReportJson {
    summaries: Vec<SummarySet>,
    concordance: Vec<ConcordanceReport>,
    families: BTreeMap<String, FamilyJson>,
}

struct Doc {
    text: String,
}

impl Doc {
    fn heading(&mut self, level: usize, title: &str) {
        self.text.push_str(&format!("{} {title}\n\n", "#".repeat(level)));
    }

    fn csv(&mut self, body: &str) {
        self.text.push_str(&format!("```csv\n{body}```\n\n"));
    }

    fn table(&mut self, body: &str) {
        self.text.push_str(body);
        self.text.push('\n');
    }

    fn skipped(&mut self, err: &CliError) {
        self.text.push_str(&format!("_Not available: {}_\n\n", err.json_line()));
    }
}

pub fn run(a: ReportArgs, digits: usize) -> CliResult<()> {
    let summaries = check_summaries(&a.summaries)?;
    let ks = parse_ks(a.ks.as_deref())?;
    let bounds = parse_bounds(&a.bands)?;
    let mode = summary_mode(&a.mode)?;
    if a.metric_file.is_some() && a.metric.is_none() {
        return Err(usage("--metric-file needs --metric"));
    }
    let rules_text = a.select.clone().unwrap_or_else(|| default_rules(a.metric.as_deref()));
    let rules = SelectionRule::parse_list(&rules_text).map_err(|e| usage(e.to_string()))?;

    let m = manifest(&a.manifest)?;
    let families = families_or_all(&m, &a.families)?;
    let all = members(&m, &a.families)?;
    let mut table_ks = ks.clone();
    table_ks.extend(profile_ks());
    table_ks.extend([1, 99]);
    table_ks.extend(percentiles_of(&summaries));
    table_ks.sort_unstable();
    table_ks.dedup();
    let table = summarize_all(&all, &table_ks, mode)?;

    let mut doc = Doc {
        text: String::from("# Loss distribution report\n\n"),
    };
    doc.text.push_str(&format!(
        "Manifest: `{}`. Families: {}. Checkpoints: {}.\n\n",
        a.manifest.display(),
        families.join(", "),
        all.len()
    ));
    doc.heading(2, "Summaries");
    doc.csv(&summaries_csv(&table, &ks, digits));

    doc.heading(2, "Concordance");
    let concordance = reports(&m, &a.families, &table, &summaries)?;
    doc.table(&concordance_table(&concordance, &summaries, a.decimals));

    let mut json_families = BTreeMap::new();
    for f in &families {
        let ids = m.family(f)?;
        let fam_table = subset(&table, &ids);
        let mut fj = FamilyJson {
            checkpoints: ids.iter().map(|c| c.id.clone()).collect(),
            ..FamilyJson::default()
        };
        doc.heading(2, &format!("Family `{f}`"));

        doc.heading(3, &format!("{f}: selection"));
        match select_section(
            &fam_table,
            &ids,
            &rules,
            a.metric.as_deref(),
            a.metric_file.as_deref(),
            digits,
        ) {
            Ok(t) => doc.table(&t),
            Err(e) => {
                doc.skipped(&e);
                fj.skipped.insert("selection".into(), e.json_line());
            }
        }

        if let Some(metric) = &a.metric {
            doc.heading(3, &format!("{f}: sweep"));
            match sweep_section(&fam_table, &ids, metric, a.metric_file.as_deref(), digits) {
                Ok(t) => {
                    doc.csv(&t);
                    let series = metric_series(metric, &ids, a.metric_file.as_deref())?;
                    let rows = percentile_sweep(&fam_table, &series, &profile_ks())?;
                    let labels: Vec<String> = rows.iter().map(|r| r.summary.to_string()).collect();
                    let svg = line_chart(
                        &format!("{f}: correlation with {metric}"),
                        &labels,
                        &[
                            ("pearson", rows.iter().map(|r| r.pearson).collect()),
                            ("spearman", rows.iter().map(|r| r.spearman).collect()),
                        ],
                        -1.0,
                        1.0,
                    );
                    write_text(Some(&a.out_dir.join(format!("sweep-{f}.svg"))), &svg)?;
                    fj.sweep = Some(rows);
                }
                Err(e) => {
                    doc.skipped(&e);
                    fj.skipped.insert("sweep".into(), e.json_line());
                }
            }
        }

        let inp = ShapeInputs {
            families: vec![f.clone()],
            members: ids.clone(),
            bounds: bounds.clone(),
            reference: None,
            tail_k: 95,
        };
        for (which, name) in [
            (Section::Bands, "bands"),
            (Section::Tail, "tail"),
            (Section::Distances, "distances"),
            (Section::Profiles, "profiles"),
        ] {
            doc.heading(3, &format!("{f}: {name}"));
            match section(&m, &inp, &fam_table, which, digits) {
                Ok(t) => doc.csv(&t),
                Err(e) => {
                    doc.skipped(&e);
                    fj.skipped.insert(name.into(), e.json_line());
                }
            }
        }
        fj.bands = band_tables(&ids, &bounds).ok();
        fj.profiles = fam_table
            .iter()
            .map(standardize_profile)
            .collect::<Result<Vec<_>, _>>()
            .ok();
        json_families.insert(f.clone(), fj);
    }

    let json = ReportJson {
        summaries: table,
        concordance,
        families: json_families,
    };
    let mut json_text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Internal(e.to_string()))?;
    json_text.push('\n');
    write_text(Some(&a.out_dir.join("report.json")), &json_text)?;
    write_text(Some(&a.out_dir.join("report.md")), &doc.text)
}
