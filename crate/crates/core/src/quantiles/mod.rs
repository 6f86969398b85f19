//! Mean and percentile summaries of per-token losses.
//!
//! Percentiles use linear interpolation between closest ranks: for `n`
//! sorted values and percentile `k`, the fractional index is
//! `h = (n - 1) * k / 100` and `p_k = x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)])`.
//! `+inf` sorts last; an interpolation step touching `+inf` yields `+inf`.

mod sketch;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

pub use sketch::{merge as sketch_merge, QuantileSketch};

use crate::error::{Error, Result};
use crate::loss_store::{LossReader, LossVector};

/// Inputs above this many values are summarized with the sketch unless the
/// exact path is forced.
pub const EXACT_LIMIT: u64 = 1 << 26;

/// Default percentile grid: 1, 5, 10, ..., 95, 99.
pub fn default_ks() -> Vec<u8> {
    let mut ks = vec![1];
    ks.extend((5..=95).step_by(5));
    ks.push(99);
    ks
}

/// Grid used for standardized profiles and percentile sweeps.
pub fn profile_ks() -> Vec<u8> {
    (5..=95).step_by(5).collect()
}

/// A named scalar summary of a loss distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SummaryName {
    Mean,
    Percentile(u8),
}

impl SummaryName {
    pub const MEDIAN: SummaryName = SummaryName::Percentile(50);
}

impl fmt::Display for SummaryName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SummaryName::Mean => f.write_str("mean"),
            SummaryName::Percentile(50) => f.write_str("median"),
            SummaryName::Percentile(k) => write!(f, "p{k:02}"),
        }
    }
}

impl FromStr for SummaryName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "mean" => return Ok(SummaryName::Mean),
            "median" => return Ok(SummaryName::MEDIAN),
            _ => {}
        }
        s.strip_prefix('p')
            .and_then(|k| k.parse::<u8>().ok())
            .filter(|k| (1..=99).contains(k))
            .map(SummaryName::Percentile)
            .ok_or_else(|| Error::invalid(format!("unknown summary {s:?}")))
    }
}

impl Serialize for SummaryName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Parses a comma-separated list of summary names.
pub fn parse_summaries(list: &str) -> Result<Vec<SummaryName>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Named scalar CE summaries for one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarySet {
    pub checkpoint_id: String,
    pub mean: f64,
    pub percentiles: BTreeMap<u8, f64>,
    pub count: u64,
}

impl SummarySet {
    pub fn get(&self, name: SummaryName) -> Option<f64> {
        match name {
            SummaryName::Mean => Some(self.mean),
            SummaryName::Percentile(k) => self.percentiles.get(&k).copied(),
        }
    }

    pub fn require(&self, name: SummaryName) -> Result<f64> {
        self.get(name).ok_or_else(|| Error::MissingSummary {
            checkpoint: self.checkpoint_id.clone(),
            summary: name.to_string(),
        })
    }

    pub fn median(&self) -> Option<f64> {
        self.get(SummaryName::MEDIAN)
    }
}

fn check_ks(ks: &[u8]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::invalid("percentile set is empty"));
    }
    if let Some(k) = ks.iter().find(|k| !(1..=99).contains(*k)) {
        return Err(Error::invalid(format!("percentile {k} outside 1..=99")));
    }
    Ok(())
}

/// Percentile `k` (0..=100) of an ascending slice.
pub fn percentile_of_sorted(sorted: &[f32], k: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of empty slice");
    let h = (n - 1) as f64 * k / 100.0;
    let lo = (h.floor() as usize).min(n - 1);
    let frac = h - lo as f64;
    let a = sorted[lo] as f64;
    if frac == 0.0 || lo + 1 >= n {
        return a;
    }
    let b = sorted[lo + 1] as f64;
    if a == b {
        a
    } else if b.is_infinite() {
        f64::INFINITY
    } else {
        a + frac * (b - a)
    }
}

/// Neumaier-compensated sum; the result does not depend on buffering.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
    infinite: bool,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        if v.is_infinite() {
            self.infinite = true;
            return;
        }
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            self.sum + self.comp
        }
    }
}

/// Exact mean and percentiles of an in-memory loss vector.
pub fn summarize_exact(losses: &LossVector, ks: &[u8]) -> Result<SummarySet> {
    check_ks(ks)?;
    let mut sorted = losses.losses().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    // Summing in sorted order makes the mean independent of input order.
    let mut acc = CompensatedSum::default();
    for &v in &sorted {
        acc.add(v as f64);
    }
    let n = sorted.len();
    let percentiles = ks
        .iter()
        .map(|&k| (k, percentile_of_sorted(&sorted, k as f64)))
        .collect();
    Ok(SummarySet {
        checkpoint_id: losses.checkpoint_id().to_string(),
        mean: acc.total() / n as f64,
        percentiles,
        count: n as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SummaryMode {
    /// Exact up to [`EXACT_LIMIT`] values, sketch beyond.
    Auto {
        epsilon: f64,
    },
    Exact,
    Sketch {
        epsilon: f64,
    },
}

impl Default for SummaryMode {
    fn default() -> Self {
        SummaryMode::Auto { epsilon: 1e-3 }
    }
}

/// Summarizes a loss dump on disk. The sketch path streams the file and
/// computes the mean exactly alongside the sketch.
pub fn summarize_path(path: impl AsRef<Path>, checkpoint_id: &str, ks: &[u8], mode: SummaryMode) -> Result<SummarySet> {
    check_ks(ks)?;
    let path = path.as_ref();
    let reader = LossReader::open(path)?;
    let epsilon = match mode {
        SummaryMode::Exact => None,
        SummaryMode::Sketch { epsilon } => Some(epsilon),
        SummaryMode::Auto { epsilon } => match reader.declared_count() {
            Some(n) if n > EXACT_LIMIT => Some(epsilon),
            _ => None,
        },
    };
    match epsilon {
        None => {
            let mut losses = Vec::with_capacity(reader.declared_count().unwrap_or(0) as usize);
            for v in reader {
                losses.push(v?);
            }
            summarize_exact(&LossVector::new(checkpoint_id, losses)?, ks)
        }
        Some(epsilon) => {
            let mut sketch = QuantileSketch::new(epsilon)?;
            let mut acc = CompensatedSum::default();
            for v in reader {
                let v = v? as f64;
                acc.add(v);
                sketch.insert(v);
            }
            if sketch.count() == 0 {
                return Err(Error::EmptyLosses);
            }
            let values = sketch.quantiles(&ks.iter().map(|&k| k as f64).collect::<Vec<_>>());
            Ok(SummarySet {
                checkpoint_id: checkpoint_id.to_string(),
                mean: acc.total() / sketch.count() as f64,
                percentiles: ks.iter().copied().zip(values).collect(),
                count: sketch.count(),
            })
        }
    }
}

/// Mean loss of the `true`-labelled and `false`-labelled tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupedSummary {
    pub mean_true: f64,
    pub mean_false: f64,
    /// `mean_false / mean_true`.
    pub ratio: f64,
}

/// Splits losses by a boolean label (e.g. greedy correctness, `true` =
/// correct) and reports the incorrect/correct mean ratio.
pub fn grouped_summary(losses: &LossVector, labels: &[bool]) -> Result<GroupedSummary> {
    if labels.len() != losses.count() {
        return Err(Error::LengthMismatch {
            left: losses.count(),
            right: labels.len(),
        });
    }
    let (mut t, mut f) = (CompensatedSum::default(), CompensatedSum::default());
    let (mut nt, mut nf) = (0usize, 0usize);
    for (&v, &label) in losses.losses().iter().zip(labels) {
        if label {
            t.add(v as f64);
            nt += 1;
        } else {
            f.add(v as f64);
            nf += 1;
        }
    }
    if nt == 0 {
        return Err(Error::EmptyGroup("correct"));
    }
    if nf == 0 {
        return Err(Error::EmptyGroup("incorrect"));
    }
    Ok(GroupedSummary::from_means(t.total() / nt as f64, f.total() / nf as f64))
}

impl GroupedSummary {
    pub fn from_means(mean_true: f64, mean_false: f64) -> Self {
        GroupedSummary {
            mean_true,
            mean_false,
            ratio: mean_false / mean_true,
        }
    }
}

/// One row of a mean / median / p95 trade-off table, e.g.
/// `| Top-5 KL | 1.708 | 0.525 | 7.82 |`.
pub fn render_tradeoff_row(label: &str, s: &SummarySet) -> Result<String> {
    let median = s.require(SummaryName::MEDIAN)?;
    let p95 = s.require(SummaryName::Percentile(95))?;
    Ok(format!("| {label} | {:.3} | {median:.3} | {p95:.2} |", s.mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    fn lv(v: Vec<f32>) -> LossVector {
        LossVector::new("t", v).unwrap()
    }

    /// Independent oracle: full sort by `partial_cmp`, then index arithmetic.
    fn oracle(values: &[f32], k: u8) -> f64 {
        let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() - 1) as f64 * k as f64 / 100.0;
        let i = h.floor() as usize;
        let f = h - i as f64;
        if f == 0.0 || i + 1 == v.len() {
            return v[i];
        }
        if v[i] == v[i + 1] {
            return v[i];
        }
        if v[i + 1].is_infinite() {
            return f64::INFINITY;
        }
        v[i] + f * (v[i + 1] - v[i])
    }

    #[test]
    fn symmetric_three() {
        let s = summarize_exact(&lv(vec![1.0, 2.0, 3.0]), &[50]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median(), Some(2.0));
        assert_eq!(s.count, 3);
    }

    #[test]
    fn interpolates_between_ranks() {
        let s = summarize_exact(&lv(vec![4.0, 1.0, 3.0, 2.0]), &[25, 50, 75]).unwrap();
        // h = 3k/100: 0.75, 1.5, 2.25
        assert_eq!(s.percentiles[&25], 1.75);
        assert_eq!(s.percentiles[&50], 2.5);
        assert_eq!(s.percentiles[&75], 3.25);
    }

    #[test]
    fn empty_ks_and_out_of_range() {
        assert!(summarize_exact(&lv(vec![1.0]), &[]).is_err());
        assert!(summarize_exact(&lv(vec![1.0]), &[0]).is_err());
        assert!(summarize_exact(&lv(vec![1.0]), &[100]).is_err());
    }

    #[test]
    fn infinity_sentinel() {
        // 10 values, one +inf: mean is +inf, median finite, p99 touches inf.
        let mut v: Vec<f32> = (1..=9).map(|x| x as f32).collect();
        v.push(f32::INFINITY);
        let s = summarize_exact(&lv(v), &[50, 88, 89, 99]).unwrap();
        assert_eq!(s.mean, f64::INFINITY);
        assert_eq!(s.percentiles[&50], 5.5);
        assert!(s.percentiles[&88].is_finite());
        assert_eq!(s.percentiles[&99], f64::INFINITY);
    }

    #[test]
    fn lognormal_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = LogNormal::new(0.0, 1.5).unwrap();
        let v: Vec<f32> = (0..100_000).map(|_| d.sample(&mut rng) as f32).collect();
        let ks: Vec<u8> = (1..=99).collect();
        let s = summarize_exact(&lv(v.clone()), &ks).unwrap();
        for k in ks {
            assert_eq!(s.percentiles[&k], oracle(&v, k), "k={k}");
        }
    }

    #[test]
    fn summary_names() {
        assert_eq!("mean".parse::<SummaryName>().unwrap(), SummaryName::Mean);
        assert_eq!("median".parse::<SummaryName>().unwrap(), SummaryName::MEDIAN);
        assert_eq!("p95".parse::<SummaryName>().unwrap(), SummaryName::Percentile(95));
        assert_eq!("p05".parse::<SummaryName>().unwrap(), SummaryName::Percentile(5));
        assert!("p0".parse::<SummaryName>().is_err());
        assert!("p100".parse::<SummaryName>().is_err());
        assert!("avg".parse::<SummaryName>().is_err());
        assert_eq!(SummaryName::Percentile(5).to_string(), "p05");
        assert_eq!(SummaryName::MEDIAN.to_string(), "median");
        assert_eq!(
            parse_summaries("mean,median,p95").unwrap(),
            vec![SummaryName::Mean, SummaryName::MEDIAN, SummaryName::Percentile(95)]
        );
    }

    #[test]
    fn tradeoff_row_fixture() {
        let s = SummarySet {
            checkpoint_id: "top5-250k".into(),
            mean: 1.708,
            percentiles: [(50, 0.525), (95, 7.82)].into_iter().collect(),
            count: 1,
        };
        assert_eq!(
            render_tradeoff_row("Top-5 KL", &s).unwrap(),
            "| Top-5 KL | 1.708 | 0.525 | 7.82 |"
        );
    }

    #[test]
    fn grouped_ratio() {
        let g = GroupedSummary::from_means(0.243, 0.605);
        assert_eq!(format!("{:.2}", g.ratio), "2.49");

        let same = grouped_summary(&lv(vec![0.7; 6]), &[true, false, true, false, true, false]).unwrap();
        assert_eq!(same.ratio, 1.0);

        assert!(matches!(
            grouped_summary(&lv(vec![1.0, 2.0]), &[true, true]),
            Err(Error::EmptyGroup("incorrect"))
        ));
        assert!(matches!(
            grouped_summary(&lv(vec![1.0, 2.0]), &[false, false]),
            Err(Error::EmptyGroup("correct"))
        ));
        assert!(matches!(
            grouped_summary(&lv(vec![1.0, 2.0]), &[false]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn grouped_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f32> = (0..5000).map(|_| rng.random::<f32>() * 4.0).collect();
        let labels: Vec<bool> = (0..5000).map(|_| rng.random_bool(0.7)).collect();
        let g = grouped_summary(&lv(v.clone()), &labels).unwrap();
        let pick = |want: bool| {
            let xs: Vec<f64> = v
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == want)
                .map(|(&x, _)| x as f64)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let (t, f) = (pick(true), pick(false));
        assert!((g.mean_true - t).abs() < 1e-12);
        assert!((g.mean_false - f).abs() < 1e-12);
        assert!((g.ratio - f / t).abs() < 1e-12);
    }

    #[test]
    fn summarize_path_modes_agree_on_small_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let v: Vec<f32> = (0..1000).map(|i| (i % 97) as f32 * 0.1).collect();
        crate::loss_store::write_loss_dump(&lv(v.clone()), &p).unwrap();
        let exact = summarize_path(&p, "x", &[50], SummaryMode::Exact).unwrap();
        let auto = summarize_path(&p, "x", &[50], SummaryMode::default()).unwrap();
        assert_eq!(exact, auto);
        assert_eq!(
            exact,
            summarize_exact(&LossVector::new("x", v).unwrap(), &[50]).unwrap()
        );
        let sk = summarize_path(&p, "x", &[50], SummaryMode::Sketch { epsilon: 1e-3 }).unwrap();
        // Below the sketch capacity nothing is compacted, so the sketch
        // returns an exact order statistic.
        assert!((sk.percentiles[&50] - exact.percentiles[&50]).abs() <= 0.1 + 1e-6);
        assert!((sk.mean - exact.mean).abs() < 1e-9);
    }

    fn losses() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(
            prop_oneof![9 => 0.0f32..20.0, 1 => Just(f32::INFINITY), 1 => Just(1.0f32)],
            1..3000,
        )
    }

    proptest! {
        #[test]
        fn exact_equals_oracle(v in losses(), k in 1u8..=99) {
            let s = summarize_exact(&lv(v.clone()), &[k]).unwrap();
            let got = s.percentiles[&k];
            let want = oracle(&v, k);
            prop_assert!(got == want || (got.is_nan() && want.is_nan()));
        }

        #[test]
        fn monotone_and_bounded(v in losses()) {
            let ks: Vec<u8> = (1..=99).collect();
            let s = summarize_exact(&lv(v.clone()), &ks).unwrap();
            let lo = v.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
            let hi = v.iter().cloned().fold(0.0, f32::max) as f64;
            let ps: Vec<f64> = s.percentiles.values().copied().collect();
            for w in ps.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for p in ps {
                prop_assert!(lo <= p && p <= hi);
            }
            prop_assert!(s.mean >= 0.0);
        }

        #[test]
        fn permutation_invariant(mut v in losses(), seed in any::<u64>()) {
            let ks = default_ks();
            let a = summarize_exact(&lv(v.clone()), &ks).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..v.len()).rev() {
                let j = rng.random_range(0..=i);
                v.swap(i, j);
            }
            let b = summarize_exact(&lv(v), &ks).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
