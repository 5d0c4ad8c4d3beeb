//! Tokenization and normalization shared by linking, perturbation, and
//! dataset diffing.
//!
//! Questions are whitespace-tokenizable; leading and trailing punctuation is
//! split into separate tokens so that spans stay word-aligned. Normalization
//! lowercases and strips punctuation, and is a fixed point on already
//! normalized text.

/// Punctuation split off the edges of whitespace-separated words.
const EDGE_PUNCT: &[char] = &[
    ',', '.', '?', '!', ';', ':', '"', '\'', '(', ')', '[', ']', '`',
];

/// Punctuation that attaches to the previous token when detokenizing.
const ATTACH_LEFT: &[char] = &[',', '.', '?', '!', ';', ':', ')', ']', '\'', '"', '`'];

/// Punctuation that attaches to the following token when detokenizing.
const ATTACH_RIGHT: &[char] = &['(', '['];

/// Split text into surface tokens, peeling edge punctuation into separate
/// tokens. Internal punctuation (apostrophes, decimal points) is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut rest = word;
        let mut leading = Vec::new();
        while let Some(c) = rest.chars().next() {
            if EDGE_PUNCT.contains(&c) {
                leading.push(c.to_string());
                rest = &rest[c.len_utf8()..];
            } else {
                break;
            }
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().last() {
            if EDGE_PUNCT.contains(&c) {
                trailing.push(c.to_string());
                rest = &rest[..rest.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        tokens.extend(leading);
        if !rest.is_empty() {
            tokens.push(rest.to_string());
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

/// Lowercase and strip all non-alphanumeric characters. Pure punctuation
/// tokens normalize to the empty string.
pub fn normalize_token(token: &str) -> String {
    token
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Normalize a phrase into a token sequence: underscores become spaces, then
/// each whitespace token is normalized; empty tokens are dropped.
pub fn normalize_phrase(phrase: &str) -> Vec<String> {
    phrase
        .replace('_', " ")
        .split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Normalized phrase as a single space-joined string.
pub fn normalize_phrase_str(phrase: &str) -> String {
    normalize_phrase(phrase).join(" ")
}

/// Join tokens with single spaces, reattaching punctuation.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut suppress_space = false;
    for token in tokens {
        let is_left_attach =
            token.chars().count() == 1 && token.chars().all(|c| ATTACH_LEFT.contains(&c));
        let is_right_attach =
            token.chars().count() == 1 && token.chars().all(|c| ATTACH_RIGHT.contains(&c));
        if !out.is_empty() && !suppress_space && !is_left_attach {
            out.push(' ');
        }
        out.push_str(token);
        suppress_space = is_right_attach;
    }
    out
}

/// True when the token starts with an uppercase letter.
pub fn starts_uppercase(token: &str) -> bool {
    token.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Uppercase the first letter of the token, leaving the rest untouched.
pub fn capitalize_first(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
