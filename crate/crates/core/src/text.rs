//! Word tokenization shared by attribute matching and command parsing.

use std::collections::BTreeSet;

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "to", "for", "with", "in", "on", "at", "by", "from",
    "into", "onto", "up", "it", "its", "this", "that", "these", "those", "then", "i", "me", "my",
    "we", "our", "you", "your", "want", "please", "can", "could", "would", "should", "like",
    "need", "let", "is", "are", "be", "some", "them", "their", "as", "so", "s", "over", "out",
    "off", "will", "just", "now", "same", "time", "while", "after", "before", "using", "use",
];

/// Lowercase alphanumeric tokens with stop words removed and a light plural
/// normalization applied, in order of appearance (duplicates kept).
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| normalize(&w.to_lowercase()))
        .filter(|w| !STOP_WORDS.contains(&w.as_str()))
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

fn normalize(word: &str) -> String {
    let n = word.len();
    if n > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..n - 3]);
    }
    for suffix in ["xes", "ches", "shes", "sses"] {
        if n > suffix.len() + 1 && word.ends_with(suffix) {
            return word[..n - 2].to_string();
        }
    }
    if n > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") {
        return word[..n - 1].to_string();
    }
    word.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_drops_stop_words() {
        assert_eq!(tokens("Pour water from THE Kettle"), ["pour", "water", "kettle"]);
    }

    #[test]
    fn splits_on_punctuation_and_hyphens() {
        assert_eq!(tokens("thin-handle, pour; wrap"), ["thin", "handle", "pour", "wrap"]);
    }

    #[test]
    fn plural_forms_collapse() {
        assert_eq!(tokens("bottles boxes glasses berries"), ["bottle", "box", "glass", "berry"]);
        assert_eq!(tokens("glass bus"), ["glass", "bus"]);
    }
}
