mod support;

use propex_core::answer::{assemble_answer_prompt, generate_answer, Exemplar};
use propex_core::prompts::PromptSet;
use propex_core::providers::MockChat;
use support::{mock_index, mock_retrieve, QUERY};

const GOLDEN: &str = "tests/fixtures/answer_prompt_golden.txt";

fn render(system: &str, user: &str) -> String {
    format!("=== system ===\n{system}\n=== user ===\n{user}")
}

/// Set PROPEX_BLESS=1 to rewrite the golden file after an intended change.
#[test]
fn prompt_matches_golden_file() {
    let index = mock_index(2);
    let trace = mock_retrieve(QUERY, &index);
    let exemplars = vec![Exemplar {
        question: "Which city hosts the observatory founded by Ada Reyes?".into(),
        answer: "Port Halden".into(),
        evidence: "Ada Reyes founded Keel Observatory. Keel Observatory stands in Port Halden.".into(),
    }];
    let prompt = assemble_answer_prompt(&trace, &index, QUERY, &PromptSet::default(), &exemplars, 12_000).unwrap();
    let got = render(&prompt.system, &prompt.user_text());
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("PROPEX_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(got, want);
}

#[test]
fn shrinking_budget_drops_lowest_ranks_first() {
    let index = mock_index(2);
    let trace = mock_retrieve(QUERY, &index);
    let ranked: Vec<&str> = trace.ranked_ids();
    let prompts = PromptSet::default();
    let mut previous: Option<Vec<String>> = None;
    for budget in (0..=1200).rev().step_by(7) {
        let p = assemble_answer_prompt(&trace, &index, QUERY, &prompts, &[], budget).unwrap();
        let ids: Vec<String> = p.passage_ids().map(str::to_owned).collect();
        assert!(!ids.is_empty(), "top passage is always kept");
        assert_eq!(ids, ranked[..ids.len()], "a rank-order prefix at budget {budget}");
        if ids.len() > 1 {
            let used: usize = p.ranked_passages.iter().map(|pp| pp.block().chars().count()).sum();
            assert!(used <= budget);
        }
        if let Some(prev) = &previous {
            assert!(ids.len() <= prev.len(), "smaller budget never adds passages");
        }
        previous = Some(ids);
    }
}

#[test]
fn mock_answer_cites_only_prompt_passages() {
    let index = mock_index(2);
    let trace = mock_retrieve(QUERY, &index);
    let prompt = assemble_answer_prompt(&trace, &index, QUERY, &PromptSet::default(), &[], 12_000).unwrap();
    let record = generate_answer(&prompt, &MockChat::new(), &trace.trace_id).unwrap();
    let allowed: Vec<&str> = prompt.passage_ids().collect();
    assert!(!record.answer_text.is_empty());
    assert!(record.cited_passage_ids.iter().all(|c| allowed.contains(&c.as_str())));
    assert_eq!(record.trace_ref, trace.trace_id);
}
