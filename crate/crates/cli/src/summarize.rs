use rayon::prelude::*;
use tokenloss_core::quantiles::summarize_path;
use tokenloss_core::{Error, SummarySet};

use crate::args::{Format, SummarizeArgs};
use crate::common::{manifest, members, parse_ks, summarize_all, summary_mode, write_text};
use crate::render::summaries_csv;
use crate::{usage, CliResult};

pub fn run(a: SummarizeArgs, digits: usize) -> CliResult<()> {
    let ks = parse_ks(a.ks.as_deref())?;
    let mode = summary_mode(&a.mode)?;
    let table: Vec<SummarySet> = match &a.manifest {
        Some(path) => {
            let m = manifest(path)?;
            summarize_all(&members(&m, &a.families)?, &ks, mode)?
        }
        None => {
            if a.paths.is_empty() {
                return Err(usage("give loss dump paths or --manifest"));
            }
            if !a.families.is_empty() {
                return Err(usage("--family requires --manifest"));
            }
            a.paths
                .par_iter()
                .map(|p| {
                    let id = p
                        .file_stem()
                        .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                    summarize_path(p, &id, &ks, mode)
                })
                .collect::<Result<Vec<_>, Error>>()?
        }
    };
    let text = match a.format {
        Format::Csv => summaries_csv(&table, &ks, digits),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&table).map_err(|e| crate::CliError::Internal(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    write_text(a.out.as_deref(), &text)
}
