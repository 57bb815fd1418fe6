use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::Passage;
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    id: String,
    title: String,
    text: String,
}

/// Reads a JSON-lines corpus: one `{"id", "title", "text"}` object per line.
pub fn ingest_corpus(path: &Path) -> Result<Vec<Passage>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io("reading corpus", path, e))?;
    parse_corpus(&src, &path.display().to_string())
}

/// Parses corpus text; `origin` names the source in error messages.
pub fn parse_corpus(src: &str, origin: &str) -> Result<Vec<Passage>> {
    let malformed = |line: usize, message: String| Error::Malformed {
        stage: "corpus",
        path: origin.to_string(),
        line,
        message,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(raw).map_err(|e| malformed(line, e.to_string()))?;
        if rec.id.trim().is_empty() {
            return Err(malformed(line, "empty id".into()));
        }
        if rec.text.trim().is_empty() {
            return Err(malformed(line, format!("passage `{}` has empty text", rec.id)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(Passage {
            passage_id: rec.id,
            title: rec.title,
            text: rec.text,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_records_in_order() {
        let src = r#"{"id":"b","title":"B","text":"second"}
{"id":"a","title":"A","text":"first"}
"#;
        let ps = parse_corpus(src, "mem").unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].passage_id, "b");
        assert_eq!(ps[1].text, "first");
    }

    #[test]
    fn missing_text_reports_its_line() {
        let src = "{\"id\":\"a\",\"title\":\"A\",\"text\":\"ok\"}\n\n{\"id\":\"b\",\"title\":\"B\"}\n";
        match parse_corpus(src, "c.jsonl").unwrap_err() {
            Error::Malformed { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "c.jsonl");
            }
            e => panic!("unexpected {e:?}"),
        }
        let blank = "{\"id\":\"a\",\"title\":\"A\",\"text\":\"  \"}";
        assert!(matches!(parse_corpus(blank, "x"), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let src = "{\"id\":\"a\",\"title\":\"A\",\"text\":\"x\"}\n{\"id\":\"a\",\"title\":\"A2\",\"text\":\"y\"}";
        match parse_corpus(src, "x").unwrap_err() {
            Error::DuplicateId(id) => assert_eq!(id, "a"),
            e => panic!("unexpected {e:?}"),
        }
    }
}
