use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexer::Passage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    HotpotQa,
    #[serde(rename = "2wiki")]
    TwoWiki,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hotpotqa" => Ok(Self::HotpotQa),
            "2wiki" | "2wikimultihopqa" => Ok(Self::TwoWiki),
            other => Err(Error::InvalidParam(format!("unknown dataset format `{other}` (hotpotqa | 2wiki)"))),
        }
    }
}

impl DatasetFormat {
    fn stage(self) -> &'static str {
        match self {
            Self::HotpotQa => "hotpotqa dataset",
            Self::TwoWiki => "2wiki dataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub question_id: String,
    pub question: String,
    pub gold_answer: String,
    pub gold_passage_ids: BTreeSet<String>,
    /// False when a supporting title could not be mapped to a passage.
    pub recall_scorable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub passages: Vec<Passage>,
    pub examples: Vec<QaExample>,
    pub warnings: Vec<String>,
}

/// `(title, sentences)` pairs; both formats store context and supporting
/// facts as JSON arrays.
#[derive(Deserialize)]
struct RawExample {
    #[serde(rename = "_id", alias = "id")]
    id: serde_json::Value,
    question: String,
    answer: serde_json::Value,
    #[serde(default)]
    supporting_facts: Vec<(String, serde_json::Value)>,
    context: Vec<(String, Vec<String>)>,
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(if *b { "yes" } else { "no" }.into()),
        _ => None,
    }
}

fn passage_text(sentences: &[String]) -> String {
    sentences
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn raw_records(src: &str, origin: &str, stage: &'static str) -> Result<Vec<(usize, RawExample)>> {
    let malformed = |line: usize, message: String| Error::Malformed {
        stage,
        path: origin.to_string(),
        line,
        message,
    };
    let trimmed = src.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(src).map_err(|e| malformed(e.line(), e.to_string()))?;
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value(v)
                    .map(|r| (i + 1, r))
                    .map_err(|e| malformed(0, format!("record {}: {e}", i + 1)))
            })
            .collect()
    } else {
        src.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map(|r| (i + 1, r))
                    .map_err(|e| malformed(i + 1, e.to_string()))
            })
            .collect()
    }
}

/// Parses a HotpotQA or 2WikiMultihopQA file (JSON array or JSON lines).
/// Context paragraphs become passages keyed by title; a title seen again
/// with different text gets a `#n` suffix.
pub fn parse_dataset(src: &str, origin: &str, format: DatasetFormat) -> Result<Dataset> {
    let stage = format.stage();
    let records = raw_records(src, origin, stage)?;
    let mut out = Dataset::default();
    let mut by_title: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    let mut seen_ids = BTreeSet::new();

    for (record_no, raw) in records {
        let malformed = |message: String| Error::Malformed {
            stage,
            path: origin.to_string(),
            line: record_no,
            message,
        };
        let question_id = scalar(&raw.id).ok_or_else(|| malformed("`_id` must be a string or number".into()))?;
        if !seen_ids.insert(question_id.clone()) {
            return Err(Error::DuplicateId(question_id));
        }
        let gold_answer = scalar(&raw.answer).ok_or_else(|| malformed("`answer` must be a scalar".into()))?;

        let mut local: BTreeMap<&str, String> = BTreeMap::new();
        for (title, sentences) in &raw.context {
            let text = passage_text(sentences);
            if text.is_empty() {
                out.warnings.push(format!("question {question_id}: context `{title}` is empty, skipped"));
                continue;
            }
            let variants = by_title.entry(title.clone()).or_default();
            let id = match variants.iter().find(|(_, i)| out.passages[*i].text == text) {
                Some((id, _)) => id.clone(),
                None => {
                    let id = if variants.is_empty() {
                        title.clone()
                    } else {
                        format!("{title}#{}", variants.len())
                    };
                    variants.push((id.clone(), out.passages.len()));
                    out.passages.push(Passage {
                        passage_id: id.clone(),
                        title: title.clone(),
                        text,
                    });
                    id
                }
            };
            local.insert(title.as_str(), id);
        }

        let mut gold = BTreeSet::new();
        let mut scorable = true;
        for (title, _) in &raw.supporting_facts {
            match local.get(title.as_str()) {
                Some(id) => {
                    gold.insert(id.clone());
                }
                None => {
                    scorable = false;
                    out.warnings.push(format!(
                        "question {question_id}: supporting title `{title}` not in its context; recall not scored"
                    ));
                }
            }
        }
        if gold.is_empty() {
            scorable = false;
        }
        out.examples.push(QaExample {
            question_id,
            question: raw.question,
            gold_answer,
            gold_passage_ids: gold,
            recall_scorable: scorable,
        });
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io("reading dataset", path, e))?;
    parse_dataset(&src, &path.display().to_string(), format)
}
