use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;

/// Cutoffs reported for Recall@k.
pub const RECALL_KS: [usize; 5] = [1, 2, 5, 8, 10];

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"))
}

/// Lowercase, drop ASCII punctuation, drop articles, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt == gt { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut same = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pt.len() as f64;
    let recall = same as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Whether any gold id is among the first `k` ranked ids; `None` when there
/// is no gold to score against.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> Option<bool> {
    if gold.is_empty() {
        return None;
    }
    Some(ranked.iter().take(k).any(|id| gold.contains(id.as_ref())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gold(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Eiffel Tower!"), "eiffel tower");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("a  A   the"), "");
    }

    #[test]
    fn em_and_f1_examples() {
        assert_eq!(exact_match("Barack Obama", "barack obama"), 1.0);
        assert_eq!(exact_match("Obama", "Barack Obama"), 0.0);
        assert_eq!(exact_match("the Nile", "Nile"), 1.0);
        assert!((token_f1("the quick fox", "quick brown fox") - 0.8).abs() < 1e-15);
        assert_eq!(token_f1("same words", "same words"), 1.0);
        assert_eq!(token_f1("", "answer"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
    }

    #[test]
    fn recall_cutoffs() {
        let ranked = ["x", "y", "g", "z"];
        assert_eq!(recall_at_k(&ranked, &gold(&["g"]), 5), Some(true));
        assert_eq!(recall_at_k(&ranked, &gold(&["g"]), 2), Some(false));
        assert_eq!(recall_at_k(&ranked, &gold(&[]), 2), None);
    }

    proptest! {
        #[test]
        fn em_implies_full_f1(p in "[a-zA-Z ,.!]{0,20}", g in "[a-zA-Z ,.!]{0,20}") {
            let e = exact_match(&p, &g);
            let f = token_f1(&p, &g);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(e <= f);
            if e == 1.0 {
                prop_assert_eq!(f, 1.0);
            }
        }

        #[test]
        fn recall_is_monotone_in_k(
            ranked in proptest::collection::vec("[a-e]", 0..12),
            g in proptest::collection::btree_set("[a-e]", 1..3),
        ) {
            let flags: Vec<bool> = RECALL_KS.iter().map(|&k| recall_at_k(&ranked, &g, k).unwrap()).collect();
            for w in flags.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }
}
