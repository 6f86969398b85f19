//! Top-K distillation lab on a tabular bigram model.
//!
//! A Zipf-weighted random bigram source generates a training stream, the
//! teacher is fit by add-alpha counting, and students are trained towards
//! each context's top-K renormalized teacher row. [`converged_oracle`] is the
//! student a long enough run converges to, so the effect of K on the held-out
//! loss distribution can be checked exactly.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::loss_store::LossVector;
use crate::quantiles::{summarize_exact, CompensatedSum};

const SUM_TOL: f64 = 1e-9;

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution is empty"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("distribution entries must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("distribution sums to {total}")));
        }
        Ok(Distribution { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("weights must have a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn softmax(logits: &[f64]) -> Result<Self> {
        Self::new(softmax(logits))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Keeps the `k` largest entries (lower index first among equals) and
/// renormalizes them; every other entry becomes exactly zero.
pub fn topk_renormalize(p: &Distribution, k: usize) -> Result<Distribution> {
    let v = p.len();
    if k < 1 || k > v {
        return Err(Error::invalid(format!("K = {k} outside 1..={v}")));
    }
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&a, &b| p.probs[b].total_cmp(&p.probs[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; v];
    let mut z = CompensatedSum::default();
    for &i in &order[..k] {
        z.add(p.probs[i]);
    }
    let z = z.total();
    for &i in &order[..k] {
        out[i] = p.probs[i] / z;
    }
    Ok(Distribution { probs: out })
}

/// `KL(p || q)` in nats; `+inf` when `q` misses part of the support of `p`.
pub fn kl(p: &Distribution, q: &Distribution) -> f64 {
    let mut acc = CompensatedSum::default();
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc.add(pi * (pi.ln() - qi.ln()));
    }
    acc.total().max(0.0)
}

/// Gradient of `KL(p_target || softmax(logits))` with respect to the logits.
pub fn kl_grad_logits(p_target: &Distribution, logits: &[f64]) -> Vec<f64> {
    softmax(logits)
        .iter()
        .zip(&p_target.probs)
        .map(|(q, p)| q - p)
        .collect()
}

/// Bigram model: row `r` of the logit matrix is the next-token distribution
/// after token `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularLM {
    vocab: usize,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl TabularLM {
    pub fn new(vocab: usize, logits: Vec<f64>) -> Result<Self> {
        if vocab == 0 || logits.len() != vocab * vocab {
            return Err(Error::invalid(format!(
                "expected {vocab}x{vocab} logits, got {}",
                logits.len()
            )));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        let probs = logits.chunks(vocab).flat_map(softmax).collect();
        Ok(TabularLM { vocab, logits, probs })
    }

    /// Builds a model from strictly positive row distributions.
    pub fn from_rows(rows: &[Distribution]) -> Result<Self> {
        let vocab = rows.len();
        let mut logits = Vec::with_capacity(vocab * vocab);
        for row in rows {
            if row.len() != vocab {
                return Err(Error::invalid("rows must be vocab-sized"));
            }
            if row.probs.iter().any(|&p| p <= 0.0) {
                return Err(Error::invalid("rows must be strictly positive"));
            }
            logits.extend(row.probs.iter().map(|p| p.ln()));
        }
        Self::new(vocab, logits)
    }

    /// Model initialized at zero logits (uniform rows).
    pub fn uniform(vocab: usize) -> Result<Self> {
        Self::new(vocab, vec![0.0; vocab * vocab])
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn logits(&self, context: usize) -> &[f64] {
        &self.logits[context * self.vocab..(context + 1) * self.vocab]
    }

    pub fn probs(&self, context: usize) -> &[f64] {
        &self.probs[context * self.vocab..(context + 1) * self.vocab]
    }

    pub fn row(&self, context: usize) -> Distribution {
        Distribution {
            probs: self.probs(context).to_vec(),
        }
    }

    pub fn prob(&self, context: usize, next: usize) -> f64 {
        self.probs[context * self.vocab + next]
    }

    /// Per-token CE `-log q(x_t | x_{t-1})` over `stream[1..]`.
    pub fn evaluate(&self, checkpoint_id: &str, stream: &[u32]) -> Result<LossVector> {
        let losses: Vec<f64> = stream
            .windows(2)
            .map(|w| -self.prob(w[0] as usize, w[1] as usize).ln())
            .collect();
        LossVector::from_f64(checkpoint_id, &losses)
    }

    /// Context-weighted `sum_r w_r KL(target_r || self_r)`.
    pub fn weighted_kl(&self, targets: &[Distribution], weights: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for (r, (t, &w)) in targets.iter().zip(weights).enumerate() {
            if w > 0.0 {
                acc.add(w * kl(t, &self.row(r)));
            }
        }
        acc.total()
    }
}

/// Synthetic corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusConfig {
    pub vocab: usize,
    pub zipf: f64,
    pub length: usize,
    /// Log-normal spread applied to each row's Zipf weights.
    pub dispersion: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab: 64,
            zipf: 1.1,
            length: 200_000,
            dispersion: 3.0,
            seed: 7,
        }
    }
}

/// Ground-truth source plus its sampled training stream.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub truth: TabularLM,
    pub train: Vec<u32>,
}

impl Corpus {
    /// A fresh stream from the same ground truth, independent of the
    /// training stream.
    pub fn held_out(&self, length: usize) -> Result<Vec<u32>> {
        if length < 2 {
            return Err(Error::invalid("held-out stream needs at least 2 tokens"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1);
        Ok(sample_stream(&self.truth, length, &mut rng))
    }
}

fn sample_stream(model: &TabularLM, length: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let v = model.vocab();
    let cdfs: Vec<Vec<f64>> = (0..v)
        .map(|r| {
            let mut acc = 0.0;
            model
                .probs(r)
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(length);
    let mut prev = 0usize;
    out.push(0);
    for _ in 1..length {
        let u: f64 = rng.random::<f64>() * cdfs[prev][v - 1];
        let next = cdfs[prev].partition_point(|&c| c <= u).min(v - 1);
        out.push(next as u32);
        prev = next;
    }
    out
}

/// Draws the ground-truth bigram source and a training stream.
pub fn synth_corpus(config: &CorpusConfig) -> Result<Corpus> {
    let CorpusConfig {
        vocab,
        zipf,
        length,
        dispersion,
        seed,
    } = *config;
    if vocab < 8 {
        return Err(Error::invalid(format!("vocabulary {vocab} < 8")));
    }
    if length < 10_000 {
        return Err(Error::invalid(format!("corpus length {length} < 10000")));
    }
    if !(zipf > 0.0 && zipf.is_finite()) {
        return Err(Error::invalid(format!("Zipf exponent {zipf} must be positive")));
    }
    if !(dispersion >= 0.0 && dispersion.is_finite()) {
        return Err(Error::invalid(format!("dispersion {dispersion} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = Vec::with_capacity(vocab * vocab);
    for _ in 0..vocab {
        for j in 0..vocab {
            let g: f64 = rng.sample(StandardNormal);
            logits.push(-zipf * ((j + 1) as f64).ln() + dispersion * g);
        }
    }
    let truth = TabularLM::new(vocab, logits)?;
    let train = sample_stream(&truth, length, &mut rng);
    Ok(Corpus {
        config: config.clone(),
        truth,
        train,
    })
}

fn check_stream(stream: &[u32], vocab: usize) -> Result<()> {
    if stream.len() < 2 {
        return Err(Error::invalid("stream needs at least 2 tokens"));
    }
    if let Some(t) = stream.iter().find(|&&t| t as usize >= vocab) {
        return Err(Error::invalid(format!("token {t} outside vocabulary {vocab}")));
    }
    Ok(())
}

/// Add-alpha smoothed bigram counts.
pub fn fit_teacher(stream: &[u32], vocab: usize, alpha: f64) -> Result<TabularLM> {
    check_stream(stream, vocab)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("smoothing alpha {alpha} must be positive")));
    }
    let mut counts = vec![0u64; vocab * vocab];
    for w in stream.windows(2) {
        counts[w[0] as usize * vocab + w[1] as usize] += 1;
    }
    let rows = counts
        .chunks(vocab)
        .map(|c| Distribution::from_weights(&c.iter().map(|&n| n as f64 + alpha).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    TabularLM::from_rows(&rows)
}

/// Empirical frequency of each token in context position.
pub fn context_weights(stream: &[u32], vocab: usize) -> Result<Vec<f64>> {
    check_stream(stream, vocab)?;
    let mut w = vec![0.0; vocab];
    for &t in &stream[..stream.len() - 1] {
        w[t as usize] += 1.0;
    }
    let n = (stream.len() - 1) as f64;
    Ok(w.into_iter().map(|c| c / n).collect())
}

/// Truncation level: `Top(k)` or the full vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KSpec {
    Top(usize),
    Full,
}

impl KSpec {
    pub fn resolve(self, vocab: usize) -> Result<usize> {
        match self {
            KSpec::Full => Ok(vocab),
            KSpec::Top(k) if (1..=vocab).contains(&k) => Ok(k),
            KSpec::Top(k) => Err(Error::invalid(format!("K = {k} outside 1..={vocab}"))),
        }
    }

    pub fn parse_list(list: &str) -> Result<Vec<KSpec>> {
        list.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Top(k) => write!(f, "{k}"),
            KSpec::Full => f.write_str("full"),
        }
    }
}

impl FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(KSpec::Full);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KSpec::Top(k)),
            _ => Err(Error::invalid(format!(
                "bad K {s:?}: expected a positive integer or \"full\""
            ))),
        }
    }
}

impl Serialize for KSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// How a training step moves the student row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Step of size `lr` against the logit gradient `q - p` taken in
    /// probability space: `q <- q - lr (q - p)`, then floored at
    /// `floor` and renormalized. Context weights cancel against the
    /// per-row curvature, so every row moves at the same rate.
    #[default]
    Mirror,
    /// Plain gradient descent on the context-weighted objective:
    /// `z <- z - lr w_r (q - p)`.
    Logit,
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mirror" => Ok(StepRule::Mirror),
            "logit" => Ok(StepRule::Logit),
            _ => Err(Error::invalid(format!("unknown step rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentConfig {
    pub k: KSpec,
    pub steps: usize,
    pub learning_rate: f64,
    pub floor: f64,
    pub rule: StepRule,
    /// Steps after which a copy of the student is kept.
    pub snapshots: Vec<usize>,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            k: KSpec::Full,
            steps: 20_000,
            learning_rate: 0.5,
            floor: 1e-9,
            rule: StepRule::Mirror,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub student: TabularLM,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub snapshots: Vec<(usize, TabularLM)>,
}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor > 0.0 && floor <= 1e-6) {
        return Err(Error::invalid(format!("probability floor {floor} outside (0, 1e-6]")));
    }
    Ok(())
}

/// Top-K targets for every teacher row.
pub fn topk_targets(teacher: &TabularLM, k: usize) -> Result<Vec<Distribution>> {
    (0..teacher.vocab())
        .map(|r| topk_renormalize(&teacher.row(r), k))
        .collect()
}

/// Trains a zero-initialized student on the top-K truncated teacher,
/// full-batch over all contexts weighted by `weights`.
pub fn distill_student(teacher: &TabularLM, weights: &[f64], config: &StudentConfig) -> Result<StudentRun> {
    let v = teacher.vocab();
    if weights.len() != v {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: v,
        });
    }
    if config.steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    check_floor(config.floor)?;
    let lr = config.learning_rate;
    let lr_ok = match config.rule {
        StepRule::Mirror => lr > 0.0 && lr <= 1.0,
        StepRule::Logit => lr > 0.0 && lr.is_finite(),
    };
    if !lr_ok {
        return Err(Error::invalid(format!(
            "learning rate {lr} out of range for {:?}",
            config.rule
        )));
    }
    let k = config.k.resolve(v)?;
    let targets = topk_targets(teacher, k)?;
    let mut student = TabularLM::uniform(v)?;
    let initial_loss = student.weighted_kl(&targets, weights);
    let mut snapshots = Vec::new();
    let floor = config.floor;
    for step in 1..=config.steps {
        let mut logits = student.logits.clone();
        for (r, target) in targets.iter().enumerate() {
            if weights[r] <= 0.0 {
                continue;
            }
            let row = &mut logits[r * v..(r + 1) * v];
            let grad = kl_grad_logits(target, row);
            match config.rule {
                StepRule::Mirror => {
                    let q = student.probs(r);
                    let mut next: Vec<f64> = q.iter().zip(&grad).map(|(q, g)| (q - lr * g).max(floor)).collect();
                    let z: f64 = next.iter().sum();
                    next.iter_mut().for_each(|p| *p /= z);
                    for (dst, p) in row.iter_mut().zip(&next) {
                        *dst = p.ln();
                    }
                }
                StepRule::Logit => {
                    for (dst, g) in row.iter_mut().zip(&grad) {
                        *dst -= lr * weights[r] * g;
                    }
                }
            }
            if row.iter().any(|z| !z.is_finite()) {
                return Err(Error::Divergence { step, row: r });
            }
        }
        student = TabularLM::new(v, logits)?;
        if config.snapshots.contains(&step) && step != config.steps {
            snapshots.push((step, student.clone()));
        }
    }
    let final_loss = student.weighted_kl(&targets, weights);
    Ok(StudentRun {
        student,
        initial_loss,
        final_loss,
        snapshots,
    })
}

/// The fixed point of the mirror step: each top-K target row with its zeros
/// raised to `floor` and renormalized.
pub fn converged_oracle(teacher: &TabularLM, k: KSpec, floor: f64) -> Result<TabularLM> {
    check_floor(floor)?;
    let k = k.resolve(teacher.vocab())?;
    let rows = topk_targets(teacher, k)?
        .into_iter()
        .map(|t| Distribution::from_weights(&t.probs.iter().map(|p| p.max(floor)).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    TabularLM::from_rows(&rows)
}

/// Full lab configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabConfig {
    pub corpus: CorpusConfig,
    pub alpha: f64,
    pub ks: Vec<KSpec>,
    pub held_out: usize,
    pub student: StudentConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            corpus: CorpusConfig::default(),
            alpha: 0.1,
            ks: vec![KSpec::Top(2), KSpec::Top(4), KSpec::Top(8), KSpec::Top(16), KSpec::Full],
            held_out: 50_000,
            student: StudentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Teacher,
    Trained,
    Oracle,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Teacher => "teacher",
            Source::Trained => "trained",
            Source::Oracle => "oracle",
        })
    }
}

/// Held-out CE summaries of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoseResponseRow {
    pub k: KSpec,
    pub source: Source,
    pub mean_ce: f64,
    pub median_ce: f64,
    pub p95_ce: f64,
}

impl DoseResponseRow {
    fn from_losses(k: KSpec, source: Source, losses: &LossVector) -> Result<Self> {
        let s = summarize_exact(losses, &[50, 95])?;
        Ok(DoseResponseRow {
            k,
            source,
            mean_ce: s.mean,
            median_ce: s.percentiles[&50],
            p95_ce: s.percentiles[&95],
        })
    }
}

#[derive(Debug, Clone)]
pub struct StudentOutcome {
    pub k: KSpec,
    pub run: StudentRun,
    pub trained: LossVector,
    pub oracle: LossVector,
    /// Held-out losses at each snapshot step.
    pub snapshot_losses: Vec<(usize, LossVector)>,
    /// Context-weighted `KL(teacher || student)` for the final student.
    pub teacher_kl: f64,
}

#[derive(Debug, Clone)]
pub struct DoseResponse {
    pub teacher: TabularLM,
    pub teacher_losses: LossVector,
    pub weights: Vec<f64>,
    pub rows: Vec<DoseResponseRow>,
    pub students: Vec<StudentOutcome>,
}

impl DoseResponse {
    pub fn row(&self, k: KSpec, source: Source) -> Option<&DoseResponseRow> {
        self.rows.iter().find(|r| r.k == k && r.source == source)
    }
}

/// Label used for student checkpoint ids, e.g. `top4` or `full`.
pub fn student_label(k: KSpec) -> String {
    match k {
        KSpec::Top(k) => format!("top{k}"),
        KSpec::Full => "full".to_string(),
    }
}

/// Fits the teacher, trains one student per K in parallel, and
/// summarizes teacher, trained and oracle losses on a held-out stream.
///
/// Rows come teacher first, then per K (in the given order) the trained
/// and oracle rows.
pub fn dose_response(config: &LabConfig) -> Result<DoseResponse> {
    if !config.ks.contains(&KSpec::Full) {
        return Err(Error::invalid("K list must include \"full\""));
    }
    let corpus = synth_corpus(&config.corpus)?;
    let v = config.corpus.vocab;
    for &k in &config.ks {
        k.resolve(v)?;
    }
    let teacher = fit_teacher(&corpus.train, v, config.alpha)?;
    let weights = context_weights(&corpus.train, v)?;
    let held = corpus.held_out(config.held_out)?;
    let teacher_losses = teacher.evaluate("teacher", &held)?;
    let teacher_rows: Vec<Distribution> = (0..v).map(|r| teacher.row(r)).collect();

    let students = config
        .ks
        .par_iter()
        .map(|&k| {
            let cfg = StudentConfig {
                k,
                ..config.student.clone()
            };
            let run = distill_student(&teacher, &weights, &cfg)?;
            let label = student_label(k);
            let trained = run.student.evaluate(&label, &held)?;
            let oracle =
                converged_oracle(&teacher, k, config.student.floor)?.evaluate(&format!("{label}-oracle"), &held)?;
            let snapshot_losses = run
                .snapshots
                .iter()
                .map(|(step, m)| Ok((*step, m.evaluate(&format!("{label}-s{step}"), &held)?)))
                .collect::<Result<Vec<_>>>()?;
            let teacher_kl = run.student.weighted_kl(&teacher_rows, &weights);
            Ok(StudentOutcome {
                k,
                run,
                trained,
                oracle,
                snapshot_losses,
                teacher_kl,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = vec![DoseResponseRow::from_losses(
        KSpec::Full,
        Source::Teacher,
        &teacher_losses,
    )?];
    for s in &students {
        rows.push(DoseResponseRow::from_losses(s.k, Source::Trained, &s.trained)?);
        rows.push(DoseResponseRow::from_losses(s.k, Source::Oracle, &s.oracle)?);
    }
    Ok(DoseResponse {
        teacher,
        teacher_losses,
        weights,
        rows,
        students,
    })
}
