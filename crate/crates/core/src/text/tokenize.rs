use alloc::string::String;
use alloc::vec::Vec;

/// A token with its position in the source text, in Unicode scalar values
/// (`end` exclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercased whitespace tokenization. Punctuation at either end of a word is
/// split off one character per token; punctuation inside a word stays
/// (`i..n..s..u..l..t` is one token).
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.token).collect()
}

pub fn tokenize_with_offsets(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_word(&chars, start, i, &mut out);
    }
    out
}

fn split_word(chars: &[char], start: usize, end: usize, out: &mut Vec<TokenSpan>) {
    let mut lo = start;
    while lo < end && is_punct(chars[lo]) {
        lo += 1;
    }
    let mut hi = end;
    while hi > lo && is_punct(chars[hi - 1]) {
        hi -= 1;
    }
    for p in start..lo {
        out.push(span(chars, p, p + 1));
    }
    if lo < hi {
        out.push(span(chars, lo, hi));
    }
    for p in hi.max(lo)..end {
        out.push(span(chars, p, p + 1));
    }
}

fn span(chars: &[char], start: usize, end: usize) -> TokenSpan {
    let token = chars[start..end].iter().flat_map(|c| c.to_lowercase()).collect();
    TokenSpan { token, start, end }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn detaches_trailing_punctuation() {
        assert_eq!(tokenize("You are an insult!"), vec!["you", "are", "an", "insult", "!"]);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n ").is_empty());
    }

    #[test]
    fn keeps_inner_punctuation() {
        assert_eq!(tokenize("i..n..s..u..l..t"), vec!["i..n..s..u..l..t"]);
        assert_eq!(tokenize("\"don't\""), vec!["\"", "don't", "\""]);
    }

    #[test]
    fn punctuation_only_words_split_per_character() {
        assert_eq!(tokenize("wait ...?"), vec!["wait", ".", ".", ".", "?"]);
    }

    #[test]
    fn unicode_lowercasing_and_offsets() {
        let spans = tokenize_with_offsets("Ťažký ŽIVOT, ok");
        let toks: Vec<&str> = spans.iter().map(|s| s.token.as_str()).collect();
        assert_eq!(toks, vec!["ťažký", "život", ",", "ok"]);
        assert_eq!((spans[1].start, spans[1].end), (6, 11));
        assert_eq!((spans[2].start, spans[2].end), (11, 12));
        assert_eq!((spans[3].start, spans[3].end), (13, 15));
    }
}
