//! Tokenization shared by the entity index and the mock providers.

/// Lowercases `text`, splits on every non-alphanumeric character and drops
/// tokens shorter than two characters. No stemming and no stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|tok| tok.chars().count() >= 2)
        .map(str::to_owned)
        .collect()
}

/// Distinct tokens in first-occurrence order.
pub fn distinct_tokens(text: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    tokenize(text).into_iter().filter(|tok| seen.insert(tok.clone())).collect()
}

/// Tokens present in both strings, sorted and deduplicated.
pub fn shared_tokens(a: &str, b: &str) -> Vec<String> {
    let left: std::collections::BTreeSet<String> = tokenize(a).into_iter().collect();
    let right: std::collections::BTreeSet<String> = tokenize(b).into_iter().collect();
    left.intersection(&right).cloned().collect()
}
