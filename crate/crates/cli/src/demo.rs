use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tokenloss_core::distill::{
    dose_response, student_label, CorpusConfig, Distribution, DoseResponse, DoseResponseRow, KSpec, LabConfig,
    StepRule, StudentConfig,
};
use tokenloss_core::format::sig;
use tokenloss_core::loss_store::write_loss_dump;
use tokenloss_core::{CheckpointMeta, LossVector, Manifest};

use crate::args::{DemoArgs, StepRuleArg};
use crate::common::{csv_text, parse_steps, write_text};
use crate::{usage, CliResult};

pub fn dose_csv(rows: &[DoseResponseRow], digits: usize) -> String {
    let header = ["k", "source", "mean_ce", "median_ce", "p95_ce"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.source.to_string(),
                sig(r.mean_ce, digits),
                sig(r.median_ce, digits),
                sig(r.p95_ce, digits),
            ]
        })
        .collect();
    csv_text(&header, &rows)
}

fn config(a: &DemoArgs) -> CliResult<LabConfig> {
    let ks = KSpec::parse_list(&a.k).map_err(|e| usage(e.to_string()))?;
    if !ks.contains(&KSpec::Full) {
        return Err(usage("--k must include \"full\""));
    }
    Ok(LabConfig {
        corpus: CorpusConfig {
            vocab: a.vocab,
            zipf: a.zipf,
            length: a.length,
            dispersion: a.dispersion,
            seed: a.seed,
        },
        alpha: a.alpha,
        ks,
        held_out: a.held_out,
        student: StudentConfig {
            k: KSpec::Full,
            steps: a.steps,
            learning_rate: a.lr,
            floor: a.floor,
            rule: match a.step_rule {
                StepRuleArg::Mirror => StepRule::Mirror,
                StepRuleArg::Logit => StepRule::Logit,
            },
            snapshots: parse_steps(&a.snapshots)?,
        },
    })
}

struct Entry {
    meta: CheckpointMeta,
    losses: LossVector,
}

fn quality(kl: f64) -> BTreeMap<String, f64> {
    [("teacher_kl".to_string(), kl), ("fidelity".to_string(), (-kl).exp())]
        .into_iter()
        .collect()
}

fn entries(d: &DoseResponse, steps: usize, dump_dir: &Path) -> Vec<Entry> {
    let teacher_rows: Vec<Distribution> = (0..d.teacher.vocab()).map(|r| d.teacher.row(r)).collect();
    let path = |id: &str| dump_dir.join(format!("{id}.bin"));
    let meta = |id: &str, families: &[&str], step: u64, objective: &str, metrics| CheckpointMeta {
        id: id.to_string(),
        families: families.iter().map(|f| f.to_string()).collect(),
        step,
        objective: objective.to_string(),
        metrics,
        loss_path: path(id),
    };
    let mut out = vec![Entry {
        meta: meta("teacher", &["lab", "trajectory", "oracle"], 0, "teacher", quality(0.0)),
        losses: d.teacher_losses.clone(),
    }];
    for s in &d.students {
        let label = student_label(s.k);
        for ((step, losses), (_, model)) in s.snapshot_losses.iter().zip(&s.run.snapshots) {
            let kl = model.weighted_kl(&teacher_rows, &d.weights);
            out.push(Entry {
                meta: meta(
                    losses.checkpoint_id(),
                    &["trajectory"],
                    *step as u64,
                    &label,
                    quality(kl),
                ),
                losses: losses.clone(),
            });
        }
        out.push(Entry {
            meta: meta(
                &label,
                &["lab", "trajectory"],
                steps as u64,
                &label,
                quality(s.teacher_kl),
            ),
            losses: s.trained.clone(),
        });
        out.push(Entry {
            meta: meta(
                s.oracle.checkpoint_id(),
                &["oracle"],
                0,
                &format!("{label}-oracle"),
                BTreeMap::new(),
            ),
            losses: s.oracle.clone(),
        });
    }
    out
}

pub fn run(a: DemoArgs, digits: usize) -> CliResult<()> {
    let cfg = config(&a)?;
    let d = dose_response(&cfg)?;
    write_text(Some(&a.out), &dose_csv(&d.rows, digits))?;

    let base: PathBuf = a
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let dump_dir = base.join("losses");
    std::fs::create_dir_all(&dump_dir).map_err(|e| tokenloss_core::Error::Io {
        path: dump_dir.clone(),
        source: e,
    })?;
    let entries = entries(&d, cfg.student.steps, &dump_dir);
    for e in &entries {
        write_loss_dump(&e.losses, &e.meta.loss_path)?;
    }
    let manifest = Manifest {
        version: 1,
        checkpoints: entries.into_iter().map(|e| e.meta).collect(),
    };
    write_text(Some(&base.join("manifest.toml")), &manifest.to_toml(&base)?)
}
