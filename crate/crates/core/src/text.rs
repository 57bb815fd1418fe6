//! String helpers shared by extraction, embedding and prompting.

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

/// Entity canonical form: NFKC, lowercase, whitespace collapsed and trimmed.
pub fn canonicalize(surface: &str) -> String {
    let folded: String = surface.nfkc().collect::<String>().to_lowercase();
    collapse_whitespace(&folded)
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased alphanumeric word tokens.
pub fn word_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_folds_case_width_and_spaces() {
        assert_eq!(canonicalize("  Radio   City "), "radio city");
        assert_eq!(canonicalize("India"), canonicalize("india"));
        // fullwidth letters fold under NFKC
        assert_eq!(canonicalize("ＵＳＡ"), "usa");
        assert_eq!(canonicalize("New\tYork\nCity"), "new york city");
    }

    #[test]
    fn tokens_split_on_punctuation() {
        assert_eq!(word_tokens("Paris, France!"), vec!["paris", "france"]);
        assert!(word_tokens(" -- ").is_empty());
    }
}
