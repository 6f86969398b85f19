//! Distribution shape: IQR-standardized percentile profiles and the share of
//! tokens falling in fixed loss bands.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss_store::LossVector;
use crate::quantiles::{profile_ks, SummaryName, SummarySet};

/// Default band edges in nats. Bands are `[0, 0.1), [0.1, 0.5), ...,
/// [10, inf)`.
pub const DEFAULT_BOUNDS: [f64; 5] = [0.1, 0.5, 1.5, 5.0, 10.0];

/// Percentiles expressed as signed distance from the median in IQR units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileProfile {
    pub checkpoint_id: String,
    pub ks: Vec<u8>,
    pub standardized: Vec<f64>,
    pub iqr: f64,
}

impl PercentileProfile {
    pub fn at(&self, k: u8) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.standardized[i])
    }
}

/// Standardizes `summary` on the grid 5, 10, ..., 95.
pub fn standardize_profile(summary: &SummarySet) -> Result<PercentileProfile> {
    let ks = profile_ks();
    let p = |k: u8| summary.require(SummaryName::Percentile(k));
    let median = p(50)?;
    let iqr = p(75)? - p(25)?;
    if !(iqr.is_finite() && iqr > 0.0) {
        return Err(Error::Degenerate(format!(
            "checkpoint {:?} has interquartile range {iqr}",
            summary.checkpoint_id
        )));
    }
    let standardized = ks
        .iter()
        .map(|&k| p(k).map(|v| (v - median) / iqr))
        .collect::<Result<Vec<_>>>()?;
    Ok(PercentileProfile {
        checkpoint_id: summary.checkpoint_id.clone(),
        ks,
        standardized,
        iqr,
    })
}

/// Euclidean distance between two profiles on the same grid.
pub fn profile_distance(a: &PercentileProfile, b: &PercentileProfile) -> Result<f64> {
    if a.ks != b.ks {
        return Err(Error::invalid(format!(
            "profile grids differ for {:?} and {:?}",
            a.checkpoint_id, b.checkpoint_id
        )));
    }
    Ok(a.standardized
        .iter()
        .zip(&b.standardized)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Symmetric distance matrix over `profiles`.
pub fn distance_matrix(profiles: &[PercentileProfile]) -> Result<Vec<Vec<f64>>> {
    let n = profiles.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = profile_distance(&profiles[i], &profiles[j])?;
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    Ok(out)
}

/// Mean distance over all unordered pairs within `group`, or over all
/// cross pairs when `other` is given. Distances are computed between
/// individual checkpoints and then averaged.
pub fn mean_pairwise_distance(group: &[PercentileProfile], other: Option<&[PercentileProfile]>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    match other {
        None => {
            for i in 0..group.len() {
                for j in i + 1..group.len() {
                    total += profile_distance(&group[i], &group[j])?;
                    n += 1;
                }
            }
        }
        Some(other) => {
            for a in group {
                for b in other {
                    total += profile_distance(a, b)?;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("no profile pairs to average"));
    }
    Ok(total / n as f64)
}

/// Mean and sample standard deviation of one standardized percentile.
pub fn standardized_stats(profiles: &[PercentileProfile], k: u8) -> Result<(f64, f64)> {
    let xs = profiles
        .iter()
        .map(|p| {
            p.at(k).ok_or_else(|| Error::MissingSummary {
                checkpoint: p.checkpoint_id.clone(),
                summary: SummaryName::Percentile(k).to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if xs.is_empty() {
        return Err(Error::invalid("no profiles"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, sd))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn label(&self) -> String {
        use crate::format::sig;
        if self.lower == 0.0 {
            format!("<{}", sig(self.upper, 6))
        } else if self.upper.is_infinite() {
            format!(">={}", sig(self.lower, 6))
        } else {
            format!("{}-{}", sig(self.lower, 6), sig(self.upper, 6))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandTable {
    pub checkpoint_id: String,
    pub bands: Vec<Band>,
    /// Percent of tokens per band, aligned with `bands`.
    pub mass: Vec<f64>,
}

impl BandTable {
    /// Masses at a fixed number of decimals joined by `sep`, e.g.
    /// `26.3/20.4/21.0/25.8/6.1/0.4`.
    pub fn render_row(&self, decimals: usize, sep: &str) -> String {
        self.mass
            .iter()
            .map(|m| format!("{m:.decimals$}"))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

/// Bands `[0, b0), [b0, b1), ..., [b_last, inf)` for strictly increasing,
/// positive `bounds`.
pub fn bands(bounds: &[f64]) -> Result<Vec<Band>> {
    if bounds.is_empty() {
        return Err(Error::invalid("band bounds are empty"));
    }
    if bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::invalid("band bounds must be finite and positive"));
    }
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("band bounds must be strictly increasing"));
    }
    let mut edges = vec![0.0];
    edges.extend_from_slice(bounds);
    edges.push(f64::INFINITY);
    Ok(edges
        .windows(2)
        .map(|w| Band {
            lower: w[0],
            upper: w[1],
        })
        .collect())
}

pub fn band_masses(losses: &LossVector, bounds: &[f64]) -> Result<BandTable> {
    let bands = bands(bounds)?;
    let mut counts = vec![0u64; bands.len()];
    for &v in losses.losses() {
        // Number of edges <= v gives the half-open band index.
        let idx = bounds.partition_point(|&b| b <= v as f64);
        counts[idx] += 1;
    }
    let n = losses.count() as f64;
    Ok(BandTable {
        checkpoint_id: losses.checkpoint_id().to_string(),
        bands,
        mass: counts.iter().map(|&c| 100.0 * c as f64 / n).collect(),
    })
}

/// `a - b` in percentage points, band by band.
pub fn band_delta(a: &BandTable, b: &BandTable) -> Result<Vec<f64>> {
    if a.bands != b.bands {
        return Err(Error::invalid("band tables use different bounds"));
    }
    Ok(a.mass.iter().zip(&b.mass).map(|(x, y)| x - y).collect())
}
