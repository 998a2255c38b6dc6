use std::collections::{HashMap, HashSet};

/// English stopwords removed from category-derived queries.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "etc", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Builds a query string from one root-to-leaf category path.
///
/// Terms are concatenated in path order, normalised, stopwords dropped, and
/// repeated words collapsed onto their deepest occurrence. Returns `None` when
/// nothing survives.
pub fn extract_query(path: &[String], stopwords: &HashSet<String>) -> Option<String> {
    let tokens: Vec<String> = path
        .iter()
        .flat_map(|term| tokenize(term))
        .filter(|t| !stopwords.contains(t))
        .collect();
    let mut last: HashMap<&str, usize> = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        last.insert(t.as_str(), i);
    }
    let kept: Vec<&str> = tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| last[t.as_str()] == *i)
        .map(|(_, t)| t.as_str())
        .collect();
    if kept.is_empty() {
        None
    } else {
        Some(kept.join(" "))
    }
}
