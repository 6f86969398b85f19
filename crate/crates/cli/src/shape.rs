use tokenloss_core::loss_store::read_loss_dump;
use tokenloss_core::quantiles::profile_ks;
use tokenloss_core::shape::{
    band_delta, band_masses, distance_matrix, mean_pairwise_distance, standardize_profile, standardized_stats,
    BandTable, PercentileProfile,
};
use tokenloss_core::{CheckpointMeta, Error, Manifest, SummarySet};

use crate::args::{Section, ShapeArgs};
use crate::common::{
    families_or_all, manifest, members, parse_bounds, subset, summarize_all, summary_mode, write_text,
};
use crate::render::{
    bands_csv, distance_matrix_csv, family_distances_csv, profiles_csv, tail_csv, FamilyDistance, TailRow,
};
use crate::{usage, CliResult};

pub const SECTIONS: [(Section, &str); 5] = [
    (Section::Profiles, "profiles"),
    (Section::Distances, "distances"),
    (Section::FamilyDistances, "family-distances"),
    (Section::Tail, "tail"),
    (Section::Bands, "bands"),
];

pub struct ShapeInputs<'a> {
    pub families: Vec<String>,
    pub members: Vec<&'a CheckpointMeta>,
    pub bounds: Vec<f64>,
    pub reference: Option<String>,
    pub tail_k: u8,
}

pub fn inputs<'a>(m: &'a Manifest, a: &ShapeArgs) -> CliResult<ShapeInputs<'a>> {
    if !profile_ks().contains(&a.tail_k) {
        return Err(usage(format!("--tail-k {} is not on the profile grid 5..95", a.tail_k)));
    }
    let members = members(m, &a.families)?;
    if let Some(r) = &a.reference {
        if !members.iter().any(|c| &c.id == r) {
            return Err(usage(format!(
                "--reference {r:?} is not among the selected checkpoints"
            )));
        }
    }
    Ok(ShapeInputs {
        families: families_or_all(m, &a.families)?,
        members,
        bounds: parse_bounds(&a.bands)?,
        reference: a.reference.clone(),
        tail_k: a.tail_k,
    })
}

/// Renders one section. `table` must hold profile-grid summaries for every
/// selected checkpoint.
pub fn section(
    m: &Manifest,
    inp: &ShapeInputs,
    table: &[SummarySet],
    which: Section,
    digits: usize,
) -> CliResult<String> {
    let profiles_of = |ids: &[&CheckpointMeta]| -> CliResult<Vec<PercentileProfile>> {
        subset(table, ids)
            .iter()
            .map(|s| standardize_profile(s).map_err(Into::into))
            .collect()
    };
    let family_members = |f: &str| -> CliResult<Vec<&CheckpointMeta>> { Ok(m.family(f)?) };
    Ok(match which {
        Section::Profiles => {
            let mut rows = Vec::new();
            for f in &inp.families {
                for p in profiles_of(&family_members(f)?)? {
                    rows.push((f.clone(), p));
                }
            }
            profiles_csv(&rows, digits)
        }
        Section::Distances => {
            let profiles = profiles_of(&inp.members)?;
            let ids: Vec<String> = profiles.iter().map(|p| p.checkpoint_id.clone()).collect();
            distance_matrix_csv(&ids, &distance_matrix(&profiles)?, digits)
        }
        Section::FamilyDistances => {
            let per: Vec<(String, Vec<PercentileProfile>)> = inp
                .families
                .iter()
                .map(|f| Ok((f.clone(), profiles_of(&family_members(f)?)?)))
                .collect::<CliResult<_>>()?;
            let mut rows = Vec::new();
            for (i, (fa, pa)) in per.iter().enumerate() {
                for (fb, pb) in &per[i..] {
                    let (pairs, other) = if fa == fb {
                        (pa.len() * pa.len().saturating_sub(1) / 2, None)
                    } else {
                        (pa.len() * pb.len(), Some(pb.as_slice()))
                    };
                    if pairs == 0 {
                        continue;
                    }
                    rows.push(FamilyDistance {
                        a: fa.clone(),
                        b: fb.clone(),
                        pairs,
                        mean: mean_pairwise_distance(pa, other)?,
                    });
                }
            }
            family_distances_csv(&rows, digits)
        }
        Section::Tail => {
            let rows = inp
                .families
                .iter()
                .map(|f| {
                    let profiles = profiles_of(&family_members(f)?)?;
                    let (mean, std) = standardized_stats(&profiles, inp.tail_k)?;
                    Ok(TailRow {
                        family: f.clone(),
                        k: inp.tail_k,
                        checkpoints: profiles.len(),
                        mean,
                        std,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            tail_csv(&rows, digits)
        }
        Section::Bands => {
            let tables = band_tables(&inp.members, &inp.bounds)?;
            let mut deltas = Vec::new();
            if let Some(r) = &inp.reference {
                let reference = tables
                    .iter()
                    .find(|t| &t.checkpoint_id == r)
                    .expect("reference checked");
                for t in &tables {
                    if &t.checkpoint_id != r {
                        deltas.push((format!("{}-{}", t.checkpoint_id, r), band_delta(t, reference)?));
                    }
                }
            }
            bands_csv(&tables, &deltas, digits)
        }
        Section::All => unreachable!("expanded by the caller"),
    })
}

pub fn band_tables(members: &[&CheckpointMeta], bounds: &[f64]) -> CliResult<Vec<BandTable>> {
    use rayon::prelude::*;
    let out = members
        .par_iter()
        .map(|c| band_masses(&read_loss_dump(&c.loss_path)?.with_id(&c.id), bounds))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(out)
}

pub fn run(a: ShapeArgs, digits: usize) -> CliResult<()> {
    let mode = summary_mode(&a.mode)?;
    let m = manifest(&a.manifest)?;
    let inp = inputs(&m, &a)?;
    let table = summarize_all(&inp.members, &profile_ks(), mode)?;
    let wanted: Vec<(Section, &str)> = SECTIONS
        .iter()
        .copied()
        .filter(|(s, _)| a.section == Section::All || *s == a.section)
        .collect();
    let rendered = wanted
        .iter()
        .map(|(s, name)| Ok((*name, section(&m, &inp, &table, *s, digits)?)))
        .collect::<CliResult<Vec<_>>>()?;
    match &a.out_dir {
        Some(dir) => {
            for (name, text) in &rendered {
                write_text(Some(&dir.join(format!("{name}.csv"))), text)?;
            }
            Ok(())
        }
        None if rendered.len() == 1 => write_text(None, &rendered[0].1),
        None => {
            let text = rendered
                .iter()
                .map(|(name, text)| format!("# {name}\n{text}"))
                .collect::<Vec<_>>()
                .join("\n");
            write_text(None, &text)
        }
    }
}
