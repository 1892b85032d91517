use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::retrieval::{cosine, EmbedError, Embedder};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to matches and totals of orders above one.
    AddOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub bleu_max_n: usize,
    pub smoothing: Smoothing,
    pub rouge_beta: f64,
    pub meteor_alpha: f64,
    pub meteor_gamma: f64,
    pub meteor_beta_exp: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bleu_max_n: 4,
            smoothing: Smoothing::None,
            rouge_beta: 1.0,
            meteor_alpha: 0.9,
            meteor_gamma: 0.5,
            meteor_beta_exp: 3.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.bleu_max_n == 0 {
            return Err(EvalError::Config("bleu_max_n must be at least 1".into()));
        }
        if !unit(self.meteor_alpha) || !unit(self.meteor_gamma) {
            return Err(EvalError::Config("meteor_alpha and meteor_gamma must lie in [0, 1]".into()));
        }
        if !(self.rouge_beta > 0.0) || !(self.meteor_beta_exp > 0.0) {
            return Err(EvalError::Config("rouge_beta and meteor_beta_exp must be positive".into()));
        }
        Ok(())
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Per-order clipped matches and totals, plus (prediction, reference) lengths.
#[derive(Debug, Clone, Default, PartialEq)]
struct BleuStats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    pred_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn new(max_n: usize) -> Self {
        Self { matches: vec![0; max_n], totals: vec![0; max_n], pred_len: 0, ref_len: 0 }
    }

    fn add(&mut self, pred: &[String], reference: &[String]) {
        for n in 1..=self.matches.len() {
            let p = ngrams(pred, n);
            let r = ngrams(reference, n);
            self.matches[n - 1] += p.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum::<usize>();
            self.totals[n - 1] += pred.len().saturating_sub(n - 1);
        }
        self.pred_len += pred.len();
        self.ref_len += reference.len();
    }

    /// Geometric mean over orders the prediction is long enough to have,
    /// times the brevity penalty.
    fn score(&self, smoothing: Smoothing) -> f64 {
        if self.pred_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (i, (&m, &t)) in self.matches.iter().zip(&self.totals).enumerate() {
            if t == 0 {
                continue;
            }
            let (m, t) = match smoothing {
                Smoothing::AddOne if i > 0 => (m as f64 + 1.0, t as f64 + 1.0),
                _ => (m as f64, t as f64),
            };
            if m == 0.0 {
                return 0.0;
            }
            log_sum += (m / t).ln();
            orders += 1;
        }
        let bp = if self.pred_len < self.ref_len { (1.0 - self.ref_len as f64 / self.pred_len as f64).exp() } else { 1.0 };
        (bp * (log_sum / orders as f64).exp()).clamp(0.0, 1.0)
    }
}

pub fn sentence_bleu(prediction: &str, reference: &str, config: &MetricConfig) -> f64 {
    let mut stats = BleuStats::new(config.bleu_max_n.max(1));
    stats.add(&tokenize(prediction), &tokenize(reference));
    stats.score(config.smoothing)
}

/// Corpus-level BLEU: n-gram counts and lengths are pooled before scoring.
pub fn corpus_bleu(predictions: &[&str], references: &[&str], config: &MetricConfig) -> Result<f64, EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), references: references.len() });
    }
    let mut stats = BleuStats::new(config.bleu_max_n.max(1));
    for (p, r) in predictions.iter().zip(references) {
        stats.add(&tokenize(p), &tokenize(r));
    }
    Ok(stats.score(config.smoothing))
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0; b.len() + 1];
    for x in a {
        let mut cur = vec![0; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS-based F-measure; `rouge_beta` weights recall.
pub fn rouge_l(prediction: &str, reference: &str, config: &MetricConfig) -> f64 {
    let (p, r) = (tokenize(prediction), tokenize(reference));
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs(&p, &r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (prec, rec) = (l / p.len() as f64, l / r.len() as f64);
    let b2 = config.rouge_beta * config.rouge_beta;
    ((1.0 + b2) * prec * rec / (rec + b2 * prec)).clamp(0.0, 1.0)
}

/// Exact-match unigram alignment as (prediction position, reference
/// position) pairs. Each prediction token takes the reference position right
/// after the previous match when that token is there, else the earliest
/// unused equal token.
fn align(pred: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in pred.iter().enumerate() {
        let next = out.last().map(|&(_, j)| j + 1);
        let pick = next
            .filter(|&j| j < reference.len() && !used[j] && &reference[j] == tok)
            .or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == tok));
        if let Some(j) = pick {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// METEOR restricted to exact matches:
/// `Fmean = P·R / (α·P + (1−α)·R)`, `penalty = γ·(chunks/matches)^β`,
/// `score = Fmean·(1 − penalty)`.
pub fn meteor_lite(prediction: &str, reference: &str, config: &MetricConfig) -> f64 {
    let (p, r) = (tokenize(prediction), tokenize(reference));
    let alignment = align(&p, &r);
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + alignment.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count();
    let prec = m as f64 / p.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let a = config.meteor_alpha;
    let fmean = prec * rec / (a * prec + (1.0 - a) * rec);
    let penalty = config.meteor_gamma * (chunks as f64 / m as f64).powf(config.meteor_beta_exp);
    (fmean * (1.0 - penalty)).clamp(0.0, 1.0)
}

/// Cosine between document embeddings, in [-1, 1].
pub fn semantic_similarity(prediction: &str, reference: &str, embedder: &dyn Embedder) -> Result<f64, EmbedError> {
    let a = embedder.embed(prediction)?;
    let b = embedder.embed(reference)?;
    Ok(cosine(&a, &b).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MetricConfig {
        MetricConfig::default()
    }

    #[test]
    fn bleu_cases() {
        assert_eq!(sentence_bleu("the cat sat", "the cat sat", &cfg()), 1.0);
        assert_eq!(sentence_bleu("dog runs", "the cat sat", &cfg()), 0.0);
        assert_eq!(sentence_bleu("", "the cat", &cfg()), 0.0);
        let v = sentence_bleu("the cat sat", "the cat sat down", &cfg());
        assert!((v - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn smoothing_rescues_missing_orders() {
        let c = MetricConfig { smoothing: Smoothing::AddOne, ..cfg() };
        assert_eq!(sentence_bleu("cat the", "the cat", &cfg()), 0.0);
        assert!(sentence_bleu("cat the", "the cat", &c) > 0.0);
        assert_eq!(sentence_bleu("dog", "the cat", &c), 0.0);
    }

    #[test]
    fn rouge_cases() {
        let v = rouge_l("a c d", "a b c d", &cfg());
        assert!((v - 2.0 * 0.75 / 1.75).abs() < 1e-12);
        assert_eq!(rouge_l("", "", &cfg()), 0.0);
    }

    #[test]
    fn alignment_prefers_contiguity() {
        let t = |s: &str| tokenize(s);
        assert_eq!(align(&t("a b a b"), &t("a b a b")), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(align(&t("x a"), &t("a a")), vec![(1, 0)]);
    }

    #[test]
    fn corpus_length_mismatch() {
        assert!(matches!(corpus_bleu(&["a"], &[], &cfg()), Err(EvalError::LengthMismatch { .. })));
    }
}
