//! Tokenization and label normalization shared by every stage of the pipeline.
//!
//! Corpus text and concept labels go through the same [`tokenize`] so that a
//! concept matches a document exactly when its label tokens appear verbatim.

/// Lowercases, strips every non-alphanumeric character, and splits on
/// whitespace. Documents made only of punctuation yield no tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let token: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect();
            (!token.is_empty()).then_some(token)
        })
        .collect()
}

/// Case-folds and collapses internal whitespace. Two labels name the same
/// concept iff their normalized forms are equal.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
