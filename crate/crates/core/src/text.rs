//! Shared text utilities: the tokenizer used for budgets, comment filtering,
//! BM25 and the lexical metrics, plus token-budget truncation and chunking.
//!
//! A token is a maximal run of alphanumeric characters, lowercased. Everything
//! else is a separator.

/// Lowercased alphanumeric runs of `text`, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .map(|(start, end)| text[start..end].to_lowercase())
        .collect()
}

/// Number of tokens in `text` under [`tokenize`].
pub fn token_count(text: &str) -> usize {
    token_spans(text).count()
}

/// Byte ranges of every token in `text`.
pub fn token_spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || {
        // skip separators
        let start = loop {
            let (idx, ch) = chars.next()?;
            if ch.is_alphanumeric() {
                break idx;
            }
        };
        let mut end = text.len();
        while let Some(&(idx, ch)) = chars.peek() {
            if !ch.is_alphanumeric() {
                end = idx;
                break;
            }
            chars.next();
        }
        Some((start, end))
    })
}

/// Cuts `text` right after its `max_tokens`-th token, keeping the original
/// characters. Text already within budget is returned unchanged.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> &str {
    if max_tokens == 0 {
        return "";
    }
    match token_spans(text).nth(max_tokens - 1) {
        Some((_, end)) if token_spans(&text[end..]).next().is_some() => &text[..end],
        _ => text,
    }
}

/// Splits `text` into consecutive pieces of at most `max_tokens` tokens each.
/// Piece boundaries fall between tokens; separators stay with the preceding
/// piece.
pub fn split_by_tokens(text: &str, max_tokens: usize) -> Vec<&str> {
    assert!(max_tokens > 0, "token budget must be positive");
    let spans: Vec<(usize, usize)> = token_spans(text).collect();
    if spans.is_empty() {
        return Vec::new();
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    for group in spans.chunks(max_tokens) {
        let last = group.len() - 1;
        let group_end = group[last].1;
        let next_start = spans
            .iter()
            .find(|(s, _)| *s >= group_end)
            .map(|(s, _)| *s)
            .unwrap_or(text.len());
        pieces.push(&text[start..next_start]);
        start = next_start;
    }
    pieces
}

/// Token windows of `max_tokens` with `overlap` tokens shared between
/// neighbouring windows. Used for KBA chunking.
pub fn overlapping_windows(text: &str, max_tokens: usize, overlap: usize) -> Vec<String> {
    assert!(max_tokens > 0, "token budget must be positive");
    assert!(overlap < max_tokens, "overlap must be smaller than the window");
    let spans: Vec<(usize, usize)> = token_spans(text).collect();
    if spans.is_empty() {
        return Vec::new();
    }
    let stride = max_tokens - overlap;
    let mut windows = Vec::new();
    let mut first = 0;
    loop {
        let last = (first + max_tokens).min(spans.len()) - 1;
        windows.push(text[spans[first].0..spans[last].1].to_string());
        if last + 1 >= spans.len() {
            break;
        }
        first += stride;
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_on_non_alphanumeric_runs() {
        assert_eq!(
            tokenize("Specified blob_does-NOT exist!! (v2.1)"),
            vec!["specified", "blob", "does", "not", "exist", "v2", "1"]
        );
        assert!(tokenize("  --- ").is_empty());
        assert_eq!(token_count("Grüße aus Köln"), 3);
    }

    #[test]
    fn truncation_keeps_original_text() {
        assert_eq!(truncate_to_tokens("One, two; three four", 2), "One, two");
        assert_eq!(truncate_to_tokens("One, two.", 2), "One, two.");
        assert_eq!(truncate_to_tokens("abc", 0), "");
    }

    #[test]
    fn split_preserves_all_text() {
        let text = "a b c d e f g";
        let pieces = split_by_tokens(text, 3);
        assert_eq!(pieces.concat(), text);
        assert_eq!(pieces.iter().map(|p| token_count(p)).collect::<Vec<_>>(), vec![3, 3, 1]);
    }

    #[test]
    fn windows_overlap() {
        let w = overlapping_windows("a b c d e f", 4, 2);
        assert_eq!(w, vec!["a b c d", "c d e f"]);
        assert_eq!(overlapping_windows("a b", 4, 1), vec!["a b"]);
    }
}
