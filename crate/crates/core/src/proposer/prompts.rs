//! Prompt-template library.
//!
//! A template file is a short header followed by `---` and the body:
//!
//! ```text
//! id: integral_action
//! priority: 40
//! triggers: sse_exceeded
//! ---
//! The controller below misses {spec} ...
//! ```
//!
//! Lower `priority` wins; ties go to the smaller id. A template with no
//! triggers is an exploration template and is used when nothing else matches.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::evaluator::SpecFlag;

/// Placeholders a template body may reference.
pub const PLACEHOLDERS: [&str; 6] = [
    "spec",
    "plant",
    "structure_doc",
    "feedback_doc",
    "primitive_catalog",
    "output_schema",
];

const BUILTIN: [(&str, &str); 6] = [
    (
        "boundary_layer.txt",
        include_str!("../../templates/boundary_layer.txt"),
    ),
    (
        "derivative_damping.txt",
        include_str!("../../templates/derivative_damping.txt"),
    ),
    (
        "divergence_recovery.txt",
        include_str!("../../templates/divergence_recovery.txt"),
    ),
    (
        "exploration.txt",
        include_str!("../../templates/exploration.txt"),
    ),
    (
        "feedforward.txt",
        include_str!("../../templates/feedforward.txt"),
    ),
    (
        "integral_action.txt",
        include_str!("../../templates/integral_action.txt"),
    ),
];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("{source_name}: {message}")]
    Format {
        source_name: String,
        message: String,
    },
    #[error("duplicate template id '{0}'")]
    DuplicateId(String),
    #[error("template library is empty")]
    Empty,
    #[error("template library has no exploration template (one without triggers)")]
    NoExploration,
    #[error("template '{template}' references unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("template '{template}': no value for placeholder {{{placeholder}}}")]
    MissingValue {
        template: String,
        placeholder: String,
    },
    #[error("cannot read templates from {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub priority: u32,
    pub triggers: BTreeSet<SpecFlag>,
    pub text: String,
}

impl PromptTemplate {
    pub fn parse(source_name: &str, content: &str) -> Result<Self, PromptError> {
        let fail = |message: String| PromptError::Format {
            source_name: source_name.to_string(),
            message,
        };
        let (header, body) = content
            .split_once("\n---\n")
            .ok_or_else(|| fail("missing '---' line between header and body".into()))?;
        let mut id = None;
        let mut priority = None;
        let mut triggers = BTreeSet::new();
        for line in header.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| fail(format!("header line without ':': {line}")))?;
            let value = value.trim();
            match key.trim() {
                "id" => id = Some(value.to_string()),
                "priority" => {
                    priority = Some(
                        value
                            .parse()
                            .map_err(|_| fail(format!("priority is not an integer: {value}")))?,
                    )
                }
                "triggers" => {
                    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        triggers.insert(
                            SpecFlag::parse(name)
                                .ok_or_else(|| fail(format!("unknown trigger flag: {name}")))?,
                        );
                    }
                }
                other => return Err(fail(format!("unknown header key: {other}"))),
            }
        }
        let template = Self {
            id: id.ok_or_else(|| fail("missing id".into()))?,
            priority: priority.ok_or_else(|| fail("missing priority".into()))?,
            triggers,
            text: body.to_string(),
        };
        for name in placeholders(&template.text) {
            if !PLACEHOLDERS.contains(&name) {
                return Err(PromptError::UnknownPlaceholder {
                    template: template.id.clone(),
                    placeholder: name.to_string(),
                });
            }
        }
        Ok(template)
    }

    /// Substitutes every placeholder. Values are inserted verbatim and not
    /// rescanned.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some((start, name)) = next_placeholder(rest) {
            out.push_str(&rest[..start]);
            let value = values.get(name).ok_or_else(|| PromptError::MissingValue {
                template: self.id.clone(),
                placeholder: name.to_string(),
            })?;
            out.push_str(value);
            rest = &rest[start + name.len() + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder_char(c: char) -> bool {
    c.is_ascii_lowercase() || c == '_'
}

/// Next `{name}` with a lowercase identifier; other braces are literal text.
fn next_placeholder(text: &str) -> Option<(usize, &str)> {
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        let after = &text[start + 1..];
        let len = after
            .find(|c: char| !is_placeholder_char(c))
            .unwrap_or(after.len());
        if len > 0 && after[len..].starts_with('}') {
            return Some((start, &after[..len]));
        }
        from = start + 1;
    }
    None
}

fn placeholders(text: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some((start, name)) = next_placeholder(rest) {
        names.push(name);
        rest = &rest[start + name.len() + 2..];
    }
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptLibrary {
    templates: Vec<PromptTemplate>,
}

impl PromptLibrary {
    pub fn new(mut templates: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        if templates.is_empty() {
            return Err(PromptError::Empty);
        }
        templates.sort_by(|a, b| (a.priority, &a.id).cmp(&(b.priority, &b.id)));
        let mut seen = BTreeSet::new();
        for t in &templates {
            if !seen.insert(t.id.clone()) {
                return Err(PromptError::DuplicateId(t.id.clone()));
            }
        }
        if !templates.iter().any(|t| t.triggers.is_empty()) {
            return Err(PromptError::NoExploration);
        }
        Ok(Self { templates })
    }

    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, text)| PromptTemplate::parse(name, text))
            .collect::<Result<Vec<_>, _>>()
            .expect("built-in templates parse");
        Self::new(templates).expect("built-in library is well-formed")
    }

    /// Loads every `*.txt` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |e: std::io::Error| PromptError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut templates = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(io)?;
            templates.push(PromptTemplate::parse(&p.display().to_string(), &text)?);
        }
        Self::new(templates)
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Best-ranked template triggered by `flags`, else the best-ranked
    /// exploration template.
    pub fn select(&self, flags: &BTreeSet<SpecFlag>) -> &PromptTemplate {
        self.templates
            .iter()
            .find(|t| !t.triggers.is_disjoint(flags))
            .or_else(|| self.templates.iter().find(|t| t.triggers.is_empty()))
            .expect("library always has an exploration template")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(id: &str, priority: u32, triggers: &str, body: &str) -> PromptTemplate {
        PromptTemplate::parse(
            id,
            &format!("id: {id}\npriority: {priority}\ntriggers: {triggers}\n---\n{body}"),
        )
        .unwrap()
    }

    #[test]
    fn builtin_selection() {
        let lib = PromptLibrary::builtin();
        let flags = |fs: &[SpecFlag]| fs.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(
            lib.select(&flags(&[SpecFlag::SseExceeded])).id,
            "integral_action"
        );
        assert_eq!(lib.select(&flags(&[])).id, "exploration");
        assert_eq!(
            lib.select(&flags(&[
                SpecFlag::SseExceeded,
                SpecFlag::ChatteringDetected
            ]))
            .id,
            "boundary_layer"
        );
    }

    #[test]
    fn tie_breaks_by_id() {
        let lib = PromptLibrary::new(vec![
            tpl("b", 1, "sse_exceeded", "x"),
            tpl("a", 1, "sse_exceeded", "y"),
            tpl("z", 9, "", "z"),
        ])
        .unwrap();
        let flags = [SpecFlag::SseExceeded].into_iter().collect();
        assert_eq!(lib.select(&flags).id, "a");
    }

    #[test]
    fn render_substitutes_and_leaves_json_braces() {
        let t = tpl("t", 1, "", "Meet {spec}. Reply as {\"nodes\": []}.");
        let mut values = BTreeMap::new();
        values.insert("spec", "Mp < 5%".to_string());
        assert_eq!(
            t.render(&values).unwrap(),
            "Meet Mp < 5%. Reply as {\"nodes\": []}."
        );
    }

    #[test]
    fn missing_value_names_placeholder() {
        let t = tpl("t", 1, "", "{plant}");
        let err = t.render(&BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("{plant}"), "{err}");
    }

    #[test]
    fn unknown_placeholder_rejected_at_parse() {
        let err = PromptTemplate::parse("t", "id: t\npriority: 1\ntriggers:\n---\n{weather}")
            .unwrap_err();
        assert!(matches!(err, PromptError::UnknownPlaceholder { .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = PromptLibrary::new(vec![tpl("a", 1, "", "x"), tpl("a", 2, "", "y")]).unwrap_err();
        assert_eq!(err, PromptError::DuplicateId("a".into()));
    }
}
