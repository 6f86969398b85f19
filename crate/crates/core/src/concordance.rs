//! Concordance of a set of summaries over a checkpoint family.
//!
//! A summary set `S` is concordant on a checkpoint pair `{A, B}` when every
//! summary orders the pair the same way. An exact tie under one summary
//! breaks concordance unless every summary in `S` ties on that pair.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantiles::{SummaryName, SummarySet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseConcordance {
    pub summaries: (SummaryName, SummaryName),
    pub concordant_pairs: u64,
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcordanceReport {
    pub family: String,
    pub summaries: Vec<SummaryName>,
    pub checkpoints: usize,
    pub concordant_pairs: u64,
    pub total_pairs: u64,
    /// Pairs on which at least one summary ties exactly.
    pub tied_pairs: u64,
    pub pi: f64,
    /// One entry per two-element subset of `summaries`, in lexicographic
    /// order of positions.
    pub pairwise: Vec<PairwiseConcordance>,
}

fn sign(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Extracts the `checkpoints x summaries` value matrix, failing on the first
/// missing entry.
fn value_matrix(table: &[SummarySet], summaries: &[SummaryName]) -> Result<Vec<Vec<f64>>> {
    table
        .iter()
        .map(|s| summaries.iter().map(|&name| s.require(name)).collect())
        .collect()
}

fn pair_concordant(row_a: &[f64], row_b: &[f64], columns: &[usize]) -> bool {
    let mut signs = columns.iter().map(|&c| sign(row_a[c], row_b[c]));
    let first = signs.next().expect("at least one summary");
    signs.all(|s| s == first)
}

fn count_concordant(values: &[Vec<f64>], columns: &[usize]) -> u64 {
    let m = values.len();
    let mut n = 0;
    for i in 0..m {
        for j in i + 1..m {
            if pair_concordant(&values[i], &values[j], columns) {
                n += 1;
            }
        }
    }
    n
}

/// Computes `pi(S)` and all pairwise concordances for one family.
pub fn concordance(family: &str, table: &[SummarySet], summaries: &[SummaryName]) -> Result<ConcordanceReport> {
    if summaries.len() < 2 {
        return Err(Error::invalid("concordance needs at least two summaries"));
    }
    if table.len() < 2 {
        return Err(Error::invalid(format!(
            "family {family:?} needs at least two checkpoints, has {}",
            table.len()
        )));
    }
    let values = value_matrix(table, summaries)?;
    let m = table.len() as u64;
    let total_pairs = m * (m - 1) / 2;
    let all: Vec<usize> = (0..summaries.len()).collect();
    let concordant_pairs = count_concordant(&values, &all);

    let mut tied_pairs = 0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if all.iter().any(|&c| values[i][c] == values[j][c]) {
                tied_pairs += 1;
            }
        }
    }

    let mut pairwise = Vec::new();
    for a in 0..summaries.len() {
        for b in a + 1..summaries.len() {
            let c = count_concordant(&values, &[a, b]);
            pairwise.push(PairwiseConcordance {
                summaries: (summaries[a], summaries[b]),
                concordant_pairs: c,
                pi: c as f64 / total_pairs as f64,
            });
        }
    }

    Ok(ConcordanceReport {
        family: family.to_string(),
        summaries: summaries.to_vec(),
        checkpoints: table.len(),
        concordant_pairs,
        total_pairs,
        tied_pairs,
        pi: concordant_pairs as f64 / total_pairs as f64,
        pairwise,
    })
}

/// Kendall's tau-a: `(concordant - discordant) / (n (n - 1) / 2)`. Pairs tied
/// in either ranking count as neither.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("kendall tau needs at least two items"));
    }
    let mut score: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let s = sign(a[i], a[j]) as i64 * sign(b[i], b[j]) as i64;
            score += s;
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    Ok(score as f64 / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use SummaryName::{Mean, Percentile};

    const MEDIAN: SummaryName = SummaryName::MEDIAN;
    const P95: SummaryName = Percentile(95);

    fn set(id: &str, mean: f64, median: f64, p95: f64) -> SummarySet {
        SummarySet {
            checkpoint_id: id.into(),
            mean,
            percentiles: [(50, median), (95, p95)].into_iter().collect(),
            count: 1,
        }
    }

    /// Brute force straight from the definition: for every pair, collect the
    /// set of signs over all summaries.
    fn brute_pi(rows: &[Vec<f64>]) -> f64 {
        let m = rows.len();
        let mut ok = 0;
        let mut total = 0;
        for i in 0..m {
            for j in 0..m {
                if i >= j {
                    continue;
                }
                total += 1;
                let signs: std::collections::BTreeSet<i8> = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(x, y)| {
                        if x < y {
                            -1
                        } else if x > y {
                            1
                        } else {
                            0
                        }
                    })
                    .collect();
                if signs.len() == 1 {
                    ok += 1;
                }
            }
        }
        ok as f64 / total as f64
    }

    fn table_from(rows: &[Vec<f64>]) -> (Vec<SummarySet>, Vec<SummaryName>) {
        let names: Vec<SummaryName> = (0..rows[0].len())
            .map(|c| if c == 0 { Mean } else { Percentile(c as u8 * 10) })
            .collect();
        let sets = rows
            .iter()
            .enumerate()
            .map(|(i, r)| SummarySet {
                checkpoint_id: format!("c{i}"),
                mean: r[0],
                percentiles: r[1..]
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| ((c as u8 + 1) * 10, v))
                    .collect(),
                count: 1,
            })
            .collect();
        (sets, names)
    }

    #[test]
    fn reported_fraction_formatting() {
        let pi: f64 = 141.0 / 153.0;
        assert!((pi - 0.9216).abs() < 1e-4);
        assert_eq!(format!("{pi:.2}"), "0.92");
        assert_eq!(format!("{:.2}", 43.0 / 105.0), "0.41");
    }

    #[test]
    fn two_checkpoints_agree() {
        let t = [set("a", 1.0, 0.5, 5.0), set("b", 2.0, 0.6, 6.0)];
        let r = concordance("f", &t, &[Mean, MEDIAN]).unwrap();
        assert_eq!(r.pi, 1.0);
        assert_eq!(r.total_pairs, 1);
        assert_eq!(r.pairwise.len(), 1);
    }

    #[test]
    fn eight_random_checkpoints_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let t: Vec<SummarySet> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| set(&format!("c{i}"), r[0], r[1], r[2]))
            .collect();
        let rep = concordance("f", &t, &[Mean, MEDIAN, P95]).unwrap();
        assert_eq!(rep.total_pairs, 28);
        assert_eq!(rep.pi, brute_pi(&rows));
        for pw in &rep.pairwise {
            assert!(rep.pi <= pw.pi);
        }
    }

    #[test]
    fn tie_rule() {
        // Mean ties, median does not: not concordant.
        let t = [set("a", 1.0, 0.5, 5.0), set("b", 1.0, 0.6, 6.0)];
        let r = concordance("f", &t, &[Mean, MEDIAN]).unwrap();
        assert_eq!(r.concordant_pairs, 0);
        assert_eq!(r.tied_pairs, 1);
        // Everything ties: concordant.
        let t = [set("a", 1.0, 0.5, 5.0), set("b", 1.0, 0.5, 6.0)];
        let r = concordance("f", &t, &[Mean, MEDIAN]).unwrap();
        assert_eq!(r.concordant_pairs, 1);
    }

    #[test]
    fn errors() {
        let t = [set("a", 1.0, 0.5, 5.0), set("b", 2.0, 0.6, 6.0)];
        assert!(concordance("f", &t, &[Mean]).is_err());
        assert!(concordance("f", &t[..1], &[Mean, MEDIAN]).is_err());
        let err = concordance("f", &t, &[Mean, Percentile(10)]).unwrap_err();
        match err {
            Error::MissingSummary { checkpoint, summary } => {
                assert_eq!(checkpoint, "a");
                assert_eq!(summary, "p10");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Pairs (1,2): a up, b down; (1,3): up, down; (2,3): up, up -> C=1, D=2.
        let tau = kendall_tau(&[1.0, 2.0, 3.0], &[6.0, 4.0, 5.0]).unwrap();
        assert!((tau - (-1.0 / 3.0)).abs() < 1e-15);
        let (t, n) = table_from(&[vec![1.0, 6.0], vec![2.0, 4.0], vec![3.0, 5.0]]);
        let pi = concordance("f", &t, &n).unwrap().pi;
        assert!((pi - (1.0 + tau) / 2.0).abs() < 1e-15);
        assert!(matches!(
            kendall_tau(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn tie_free_table(max_m: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2..=max_m).prop_flat_map(move |m| {
            (0..cols)
                .map(|_| Just((0..m).collect::<Vec<usize>>()).prop_shuffle())
                .collect::<Vec<_>>()
                .prop_map(move |perms| {
                    (0..m)
                        .map(|i| perms.iter().map(|p| p[i] as f64 + 0.5).collect())
                        .collect()
                })
        })
    }

    proptest! {
        #[test]
        fn pi_two_is_kendall_fraction(rows in tie_free_table(12, 2)) {
            let (t, n) = table_from(&rows);
            let pi = concordance("f", &t, &n).unwrap().pi;
            let a: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            let tau = kendall_tau(&a, &b).unwrap();
            prop_assert!((pi - (1.0 + tau) / 2.0).abs() <= 1e-12);
        }

        #[test]
        fn monotone_transform_invariant(rows in tie_free_table(10, 3)) {
            let (t, n) = table_from(&rows);
            let before = concordance("f", &t, &n).unwrap();
            let warped: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![r[0].powi(3) + 7.0, r[1], r[2]])
                .collect();
            let (t2, _) = table_from(&warped);
            let after = concordance("f", &t2, &n).unwrap();
            prop_assert_eq!(before.concordant_pairs, after.concordant_pairs);
        }

        #[test]
        fn adding_summary_never_increases(rows in prop::collection::vec(
            prop::collection::vec(0u8..4, 4), 2..10)) {
            // Small integer values produce plenty of ties.
            let rows: Vec<Vec<f64>> = rows.into_iter()
                .map(|r| r.into_iter().map(f64::from).collect()).collect();
            let (t, n) = table_from(&rows);
            let mut prev = f64::INFINITY;
            for k in 2..=4 {
                let pi = concordance("f", &t, &n[..k]).unwrap().pi;
                prop_assert!(pi <= prev);
                prop_assert_eq!(pi, brute_pi(&rows.iter().map(|r| r[..k].to_vec()).collect::<Vec<_>>()));
                prev = pi;
            }
        }
    }
}
