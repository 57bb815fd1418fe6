//! Versioned prompt templates.
//!
//! Wording lives in a TOML data file so it can be swapped without touching
//! code; the code only relies on the `{placeholder}` names and on the leading
//! `Task:` line of each system text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_PROMPTS: &str = include_str!("../prompts/v1.toml");

/// File name looked up inside a prompt-template directory.
pub const PROMPT_FILE: &str = "prompts.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerTemplate {
    pub system: String,
    pub directive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSet {
    pub version: String,
    pub reprompt: String,
    pub entity_extraction: Template,
    pub triple_extraction: Template,
    pub fact_gate: Template,
    pub answer: AnswerTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::parse(DEFAULT_PROMPTS).expect("bundled prompt set parses")
    }
}

impl PromptSet {
    pub fn parse(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Malformed {
            stage: "prompts",
            path: PROMPT_FILE.into(),
            line: e.span().map(|s| line_of(src, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    /// Loads `<dir>/prompts.toml`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(PROMPT_FILE);
        let src = std::fs::read_to_string(&path).map_err(|e| Error::io("reading prompt set", &path, e))?;
        Self::parse(&src).map_err(|e| match e {
            Error::Malformed { stage, line, message, .. } => Error::Malformed {
                stage,
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Substitutes `{name}` placeholders in a single pass; substituted values are
/// never re-scanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// The step named by a system text's leading `Task:` line.
pub fn task_of(system_text: &str) -> Option<&str> {
    system_text.lines().next()?.strip_prefix("Task:").map(str::trim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_parses_and_tags_tasks() {
        let p = PromptSet::default();
        assert_eq!(task_of(&p.entity_extraction.system), Some("entity-extraction"));
        assert_eq!(task_of(&p.triple_extraction.system), Some("triple-extraction"));
        assert_eq!(task_of(&p.fact_gate.system), Some("fact-gate"));
        assert_eq!(task_of(&p.answer.system), Some("answer"));
    }

    #[test]
    fn render_is_single_pass() {
        let out = render("a {x} b {y} {z}", &[("x", "{y}"), ("y", "2")]);
        assert_eq!(out, "a {y} b 2 {z}");
        assert_eq!(render("open { brace", &[]), "open { brace");
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let err = PromptSet::parse("version = \"x\"\nreprompt = 3\n").unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
