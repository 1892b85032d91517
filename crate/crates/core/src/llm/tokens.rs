/// Token count estimation for context budgeting.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// Word/character heuristic: the larger of `ceil(4/3 · words)` and
/// `ceil(chars / 5)`. Words are whitespace-separated runs.
///
/// Both terms are monotone under concatenation, so
/// `estimate(a + b) >= max(estimate(a), estimate(b))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEstimator;

impl TokenEstimator for HeuristicEstimator {
    fn estimate(&self, text: &str) -> usize {
        let words = text.split_whitespace().count();
        let chars = text.chars().count();
        (words * 4).div_ceil(3).max(chars.div_ceil(5))
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    HeuristicEstimator.estimate(text)
}
