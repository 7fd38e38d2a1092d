//! Character-level BLEU between a transcribed token (hypothesis) and a
//! lexicon word (reference).

use std::collections::HashMap;

pub const DEFAULT_MAX_N: usize = 4;

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    for gram in chars.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and hypothesis n-gram total for order `n`.
pub fn modified_precision(token: &[char], word: &[char], n: usize) -> (usize, usize) {
    let hyp = ngram_counts(token, n);
    let reference = ngram_counts(word, n);
    let clipped = hyp
        .iter()
        .map(|(gram, &count)| count.min(reference.get(gram).copied().unwrap_or(0)))
        .sum();
    (clipped, token.len().saturating_sub(n - 1))
}

/// Geometric mean of modified character n-gram precisions for
/// `n = 1..=min(max_n, len(token))`, times the brevity penalty
/// `exp(1 - len(word) / len(token))` when the token is shorter.
///
/// Zero precisions are smoothed by exponential decay: the i-th zero
/// precision encountered becomes `1 / 2^i`.
pub fn char_bleu(token: &str, word: &str, max_n: usize) -> f64 {
    let token: Vec<char> = token.chars().collect();
    let word: Vec<char> = word.chars().collect();
    if token.is_empty() || word.is_empty() {
        return 0.0;
    }
    let orders = max_n.max(1).min(token.len());
    let mut zeros = 0i32;
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let (clipped, total) = modified_precision(&token, &word, n);
        let precision = if clipped == 0 {
            zeros += 1;
            0.5f64.powi(zeros)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let brevity = if token.len() < word.len() {
        (1.0 - word.len() as f64 / token.len() as f64).exp()
    } else {
        1.0
    };
    brevity * (log_sum / orders as f64).exp()
}
