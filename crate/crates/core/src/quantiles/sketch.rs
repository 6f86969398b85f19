use crate::error::{Error, Result};

/// Upper bound on the number of levels any sketch can reach (counts are
/// `u64`); used to size buffers so the rank guarantee holds for every `n`.
const LEVEL_BUDGET: f64 = 52.0;

/// Deterministic mergeable quantile sketch with an additive rank-error
/// guarantee.
///
/// Values live in a stack of sorted-on-demand buffers; an item at level `h`
/// stands for `2^h` inputs. A full buffer is compacted by sorting it and
/// promoting every other element (alternating the starting offset) to the
/// next level. One compaction at level `h` moves any rank estimate by at most
/// `2^h`, and the sketch tracks the exact sum of those bounds, which never
/// exceeds `epsilon * count`.
#[derive(Debug, Clone)]
pub struct QuantileSketch {
    epsilon: f64,
    capacity: usize,
    levels: Vec<Vec<f64>>,
    odd_offset: Vec<bool>,
    count: u64,
    error_bound: u64,
}

impl QuantileSketch {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.01) {
            return Err(Error::invalid(format!("sketch epsilon {epsilon} outside (0, 0.01]")));
        }
        let mut capacity = (LEVEL_BUDGET / epsilon).ceil() as usize;
        capacity += capacity % 2;
        Ok(QuantileSketch {
            epsilon,
            capacity,
            levels: vec![Vec::new()],
            odd_offset: vec![false],
            count: 0,
            error_bound: 0,
        })
    }

    /// Builds a sketch from a stream of values.
    pub fn build(values: impl IntoIterator<Item = f64>, epsilon: f64) -> Result<Self> {
        let mut s = Self::new(epsilon)?;
        s.extend(values);
        Ok(s)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Worst-case absolute rank error of any query answer.
    pub fn rank_error_bound(&self) -> u64 {
        self.error_bound
    }

    /// Number of retained items.
    pub fn retained(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Adds one value. NaN is ignored.
    pub fn insert(&mut self, value: f64) {
        if value.is_nan() {
            return;
        }
        self.levels[0].push(value);
        self.count += 1;
        if self.levels[0].len() >= self.capacity {
            self.compact_from(0);
        }
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.insert(v);
        }
    }

    fn compact_from(&mut self, start: usize) {
        let mut h = start;
        while h < self.levels.len() {
            if self.levels[h].len() >= self.capacity {
                self.compact_level(h);
            }
            h += 1;
        }
    }

    fn compact_level(&mut self, h: usize) {
        if h + 1 == self.levels.len() {
            self.levels.push(Vec::new());
            self.odd_offset.push(false);
        }
        let mut buf = std::mem::take(&mut self.levels[h]);
        buf.sort_unstable_by(f64::total_cmp);
        // An odd element out stays behind so weight is conserved.
        let keep = if buf.len() % 2 == 1 { buf.pop() } else { None };
        let offset = self.odd_offset[h] as usize;
        self.odd_offset[h] = !self.odd_offset[h];
        let promoted = buf.iter().skip(offset).step_by(2).copied();
        self.levels[h + 1].extend(promoted);
        self.levels[h].extend(keep);
        self.error_bound += 1u64 << h;
    }

    /// Merges `other` into `self`. Both sketches must share `epsilon`.
    pub fn merge(&mut self, other: &QuantileSketch) -> Result<()> {
        if self.epsilon != other.epsilon {
            return Err(Error::invalid(format!(
                "cannot merge sketches with epsilon {} and {}",
                self.epsilon, other.epsilon
            )));
        }
        while self.levels.len() < other.levels.len() {
            self.levels.push(Vec::new());
            self.odd_offset.push(false);
        }
        for (mine, theirs) in self.levels.iter_mut().zip(&other.levels) {
            mine.extend_from_slice(theirs);
        }
        self.count += other.count;
        self.error_bound += other.error_bound;
        self.compact_from(0);
        Ok(())
    }

    fn weighted(&self) -> Vec<(f64, u64)> {
        let mut items: Vec<(f64, u64)> = self
            .levels
            .iter()
            .enumerate()
            .flat_map(|(h, buf)| buf.iter().map(move |&v| (v, 1u64 << h)))
            .collect();
        items.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        items
    }

    /// Estimated number of inputs `<= value`.
    pub fn rank(&self, value: f64) -> u64 {
        self.levels
            .iter()
            .enumerate()
            .map(|(h, buf)| buf.iter().filter(|&&v| v <= value).count() as u64 * (1u64 << h))
            .sum()
    }

    /// Value at percentile `k` in `[0, 100]`; `None` on an empty sketch.
    pub fn query(&self, k: f64) -> Option<f64> {
        self.quantiles(&[k]).pop().filter(|v| !v.is_nan())
    }

    /// Answers several percentile queries with one pass over the retained
    /// items. Returns NaN entries on an empty sketch.
    pub fn quantiles(&self, ks: &[f64]) -> Vec<f64> {
        let items = self.weighted();
        if items.is_empty() {
            return vec![f64::NAN; ks.len()];
        }
        let mut cum = Vec::with_capacity(items.len());
        let mut acc = 0u64;
        for &(_, w) in &items {
            acc += w;
            cum.push(acc);
        }
        ks.iter()
            .map(|&k| {
                let target = (k.clamp(0.0, 100.0) / 100.0 * self.count as f64).ceil() as u64;
                let i = cum.partition_point(|&c| c < target.max(1));
                items[i.min(items.len() - 1)].0
            })
            .collect()
    }
}

/// Merges two sketches into a new one.
pub fn merge(a: &QuantileSketch, b: &QuantileSketch) -> Result<QuantileSketch> {
    let mut out = a.clone();
    out.merge(b)?;
    Ok(out)
}
