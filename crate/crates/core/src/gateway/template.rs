//! Prompt templates with `{name}` placeholders.
//!
//! A full prompt is an instruction (the template body, rendered) followed by a
//! blank line and the node layout: `NODE A: {text_a}\nNODE B: {text_b}` for
//! pair prompts, `NODE A: {text_a}` for single-node prompts. Node A is always
//! the node being classified.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAIR_LAYOUT: &str = "NODE A: {text_a}\nNODE B: {text_b}";
pub const SINGLE_LAYOUT: &str = "NODE A: {text_a}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("cannot read template {path}: {reason}")]
    Unreadable { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "I_EP")]
    EdgePredict,
    #[serde(rename = "I_KB")]
    KnowledgeBase,
    #[serde(rename = "I_E")]
    Extract,
    #[serde(rename = "I_SELF")]
    SelfLoop,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [Self::EdgePredict, Self::KnowledgeBase, Self::Extract, Self::SelfLoop];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EdgePredict => "I_EP",
            Self::KnowledgeBase => "I_KB",
            Self::Extract => "I_E",
            Self::SelfLoop => "I_SELF",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            Self::EdgePredict => include_str!("../../templates/I_EP.txt"),
            Self::KnowledgeBase => include_str!("../../templates/I_KB.txt"),
            Self::Extract => include_str!("../../templates/I_E.txt"),
            Self::SelfLoop => include_str!("../../templates/I_SELF.txt"),
        }
    }

    fn layout(self) -> &'static str {
        match self {
            Self::SelfLoop => SINGLE_LAYOUT,
            _ => PAIR_LAYOUT,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    /// Hex SHA-256 over the body and the node layout.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.id.as_str().as_bytes());
        h.update([0]);
        h.update(self.body.as_bytes());
        h.update([0]);
        h.update(self.id.layout().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Placeholder names referenced by `body`, in order of first appearance.
pub fn placeholders(body: &str) -> Vec<String> {
    let mut names = Vec::new();
    scan(body, |piece| {
        if let Piece::Placeholder(name) = piece {
            if !names.iter().any(|n| n == name) {
                names.push(name.to_owned());
            }
        }
        Ok::<_, ()>(())
    })
    .expect("scan callback is infallible");
    names
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn scan<'a, E>(body: &'a str, mut f: impl FnMut(Piece<'a>) -> Result<(), E>) -> Result<(), E> {
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            f(Piece::Literal(&rest[..open]))?;
            f(Piece::Placeholder(&after[..name_len]))?;
            rest = &after[name_len + 1..];
        } else {
            // Not a placeholder; keep the brace literally.
            f(Piece::Literal(&rest[..=open]))?;
            rest = after;
        }
    }
    f(Piece::Literal(rest))
}

/// Single-pass literal substitution: text inserted for one placeholder is
/// never scanned again, so node texts containing `{text_b}` stay untouched.
pub fn render_prompt(body: &str, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(body.len());
    scan(body, |piece| {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(name) => match bindings.get(name) {
                Some(value) => out.push_str(value),
                None => return Err(TemplateError::MissingBinding(name.to_owned())),
            },
        }
        Ok(())
    })?;
    Ok(out)
}

/// A prompt ready to send, split into its instruction and node-text parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub template_hash: String,
    pub instruction: String,
    pub input: String,
    pub bindings: BTreeMap<String, String>,
}

impl RenderedPrompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.instruction, self.input)
    }
}

/// The four instruction templates used by one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TemplateId::ALL
            .iter()
            .map(|&id| {
                (
                    id,
                    PromptTemplate {
                        id,
                        body: id.default_body().trim_end().to_owned(),
                    },
                )
            })
            .collect();
        Self { templates }
    }
}

impl TemplateSet {
    /// Defaults, overridden by any `I_EP.txt`, `I_KB.txt`, `I_E.txt`,
    /// `I_SELF.txt` found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if path.exists() {
                let body = fs::read_to_string(&path).map_err(|e| TemplateError::Unreadable {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })?;
                set.set(id, body.trim_end());
            }
        }
        Ok(set)
    }

    pub fn set(&mut self, id: TemplateId, body: &str) {
        self.templates.insert(id, PromptTemplate { id, body: body.to_owned() });
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    /// Template hashes keyed by id string, for provenance records.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .values()
            .map(|t| (t.id.as_str().to_owned(), t.hash()))
            .collect()
    }

    pub fn render(&self, id: TemplateId, bindings: BTreeMap<String, String>) -> Result<RenderedPrompt, TemplateError> {
        let template = self.get(id);
        Ok(RenderedPrompt {
            template_id: id,
            template_hash: template.hash(),
            instruction: render_prompt(&template.body, &bindings)?,
            input: render_prompt(id.layout(), &bindings)?,
            bindings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn substitutes_single_placeholder() {
        assert_eq!(render_prompt("A: {text_a}", &bind(&[("text_a", "x")])).unwrap(), "A: x");
    }

    #[test]
    fn missing_binding_is_reported() {
        assert_eq!(
            render_prompt("A: {text_a} B: {text_b}", &bind(&[("text_a", "x")])).unwrap_err(),
            TemplateError::MissingBinding("text_b".into())
        );
    }

    #[test]
    fn repeated_placeholders_are_all_substituted() {
        assert_eq!(
            render_prompt("{text_a}/{text_a}", &bind(&[("text_a", "x")])).unwrap(),
            "x/x"
        );
    }

    #[test]
    fn inserted_text_is_not_rescanned() {
        let out = render_prompt("{text_a}|{text_b}", &bind(&[("text_a", "{text_b}"), ("text_b", "y")])).unwrap();
        assert_eq!(out, "{text_b}|y");
    }

    #[test]
    fn non_placeholder_braces_stay_literal() {
        let out = render_prompt("json {\"k\": 1} {X} {} {text_a}", &bind(&[("text_a", "v")])).unwrap();
        assert_eq!(out, "json {\"k\": 1} {X} {} v");
    }

    #[test]
    fn default_templates_render_with_expected_bindings() {
        let set = TemplateSet::default();
        let full = bind(&[("text_a", "ta"), ("text_b", "tb"), ("label_name", "cs"), ("class_list", "cs, math")]);
        for id in TemplateId::ALL {
            let p = set.render(id, full.clone()).unwrap();
            assert!(!p.text().contains("{text_a}"));
            assert!(p.input.starts_with("NODE A: ta"));
        }
        let kb = set.render(TemplateId::KnowledgeBase, full.clone()).unwrap();
        assert!(kb.text().contains("cs") && kb.text().contains("tb"));
        assert_eq!(placeholders(&set.get(TemplateId::Extract).body), ["class_list"]);
    }

    #[test]
    fn template_hash_tracks_body() {
        let mut set = TemplateSet::default();
        let before = set.get(TemplateId::Extract).hash();
        set.set(TemplateId::Extract, "Classify NODE A.");
        assert_ne!(before, set.get(TemplateId::Extract).hash());
        assert_ne!(
            TemplateSet::default().get(TemplateId::Extract).hash(),
            TemplateSet::default().get(TemplateId::KnowledgeBase).hash()
        );
    }

    #[test]
    fn templates_load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("I_E.txt"), "Custom {class_list}\n").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.get(TemplateId::Extract).body, "Custom {class_list}");
        assert_eq!(set.get(TemplateId::KnowledgeBase), TemplateSet::default().get(TemplateId::KnowledgeBase));
    }
}
