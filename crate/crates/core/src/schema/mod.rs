//! Predicate schema: the ordered predicate set, entity types, and
//! per-predicate description templates with subject/object slots.
//!
//! A schema is loaded from a human-editable text file with three sections:
//!
//! ```text
//! [predicates]
//! NULL
//! TREATS
//!
//! [entity_types]
//! Chemical
//! Disease
//!
//! [templates]
//! NULL = There are no relations between the @subject@ and the @object@.
//! TREATS|Chemical|Disease = Applies a @subject@ remedy ... a @object@ condition.
//! ```
//!
//! Template keys are either `PREDICATE` (a fallback for any type pair) or
//! `PREDICATE|SUBJTYPE|OBJTYPE`. Every template must contain the
//! `@subject@` and `@object@` placeholders exactly once each. The loader
//! validates everything and reports every violation, not just the first.

pub mod mark;

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

pub const NULL_PREDICATE: &str = "NULL";
pub const SUBJECT_SLOT: &str = "@subject@";
pub const OBJECT_SLOT: &str = "@object@";

/// Template lookup key as written in the schema file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TemplateKey {
    /// Fallback for a predicate regardless of entity types.
    Plain(String),
    /// Exact (predicate, subject type, object type) triple.
    Typed(String, String, String),
}

impl TemplateKey {
    pub fn parse(raw: &str) -> Result<Self> {
        let parts: Vec<&str> = raw.split('|').map(str::trim).collect();
        match parts.as_slice() {
            [p] if !p.is_empty() => Ok(TemplateKey::Plain(p.to_string())),
            [p, s, o] if !p.is_empty() && !s.is_empty() && !o.is_empty() => Ok(
                TemplateKey::Typed(p.to_string(), s.to_string(), o.to_string()),
            ),
            _ => Err(Error::Schema(format!(
                "template key '{raw}' must be PREDICATE or PREDICATE|SUBJTYPE|OBJTYPE"
            ))),
        }
    }

    pub fn predicate(&self) -> &str {
        match self {
            TemplateKey::Plain(p) => p,
            TemplateKey::Typed(p, _, _) => p,
        }
    }

    pub fn render(&self) -> String {
        match self {
            TemplateKey::Plain(p) => p.clone(),
            TemplateKey::Typed(p, s, o) => format!("{p}|{s}|{o}"),
        }
    }
}

/// One validated template: its text and the byte offsets of both slots.
#[derive(Debug, Clone)]
pub struct Template {
    pub key: TemplateKey,
    pub text: String,
    subject_at: usize,
    object_at: usize,
}

/// A description template instantiated with concrete entity spans.
///
/// Slot positions are carried through as byte ranges of the inserted spans
/// so that marking never has to rediscover them by string search (spans
/// may repeat inside a template).
#[derive(Debug, Clone)]
pub struct FilledDescription {
    pub text: String,
    pub subject_range: Range<usize>,
    pub object_range: Range<usize>,
    pub subject_type: String,
    pub object_type: String,
}

/// The predicate set R (NULL first), entity types, and templates.
#[derive(Debug, Clone)]
pub struct PredicateSchema {
    predicates: Vec<String>,
    entity_types: Vec<String>,
    templates: Vec<Template>,
    typed_lookup: HashMap<(String, String, String), usize>,
    plain_lookup: HashMap<String, usize>,
}

impl PredicateSchema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Parses the sectioned text format, collecting every violation.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut violations = Vec::new();
        let mut predicates = Vec::new();
        let mut entity_types = Vec::new();
        let mut templates = Vec::new();
        let mut section: Option<&str> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                match name {
                    "predicates" | "entity_types" | "templates" => section = Some(match name {
                        "predicates" => "predicates",
                        "entity_types" => "entity_types",
                        _ => "templates",
                    }),
                    other => {
                        violations.push(format!("line {}: unknown section [{other}]", lineno + 1));
                        section = None;
                    }
                }
                continue;
            }
            match section {
                Some("predicates") => predicates.push(line.to_string()),
                Some("entity_types") => entity_types.push(line.to_string()),
                Some("templates") => match line.split_once('=') {
                    Some((key, value)) => {
                        templates.push((key.trim().to_string(), value.trim().to_string()))
                    }
                    None => violations.push(format!(
                        "line {}: template line must be KEY = TEXT",
                        lineno + 1
                    )),
                },
                _ => violations.push(format!(
                    "line {}: content before any [section] header",
                    lineno + 1
                )),
            }
        }

        Self::from_parts_inner(predicates, entity_types, templates, violations)
    }

    /// Builds a schema from already-split parts (used by checkpoints).
    pub fn from_parts(
        predicates: Vec<String>,
        entity_types: Vec<String>,
        templates: Vec<(String, String)>,
    ) -> Result<Self> {
        Self::from_parts_inner(predicates, entity_types, templates, Vec::new())
    }

    fn from_parts_inner(
        predicates: Vec<String>,
        entity_types: Vec<String>,
        raw_templates: Vec<(String, String)>,
        mut violations: Vec<String>,
    ) -> Result<Self> {
        if predicates.is_empty() {
            violations.push("no predicates declared".to_string());
        } else if predicates[0] != NULL_PREDICATE {
            violations.push(format!(
                "first predicate must be {NULL_PREDICATE}, got '{}'",
                predicates[0]
            ));
        }
        for p in &predicates {
            if p.contains('|') || p.contains('=') {
                violations.push(format!("predicate '{p}' must not contain '|' or '='"));
            }
        }
        for (i, p) in predicates.iter().enumerate() {
            if predicates[..i].contains(p) {
                violations.push(format!("duplicate predicate '{p}'"));
            }
        }
        if entity_types.is_empty() {
            violations.push("no entity types declared".to_string());
        }
        for t in &entity_types {
            if t.chars().any(char::is_whitespace) || t.contains('|') || t.contains('=') {
                violations.push(format!(
                    "entity type '{t}' must not contain whitespace, '|' or '='"
                ));
            }
        }
        for (i, t) in entity_types.iter().enumerate() {
            if entity_types[..i].contains(t) {
                violations.push(format!("duplicate entity type '{t}'"));
            }
        }

        let mut templates = Vec::new();
        let mut typed_lookup = HashMap::new();
        let mut plain_lookup = HashMap::new();
        for (raw_key, text) in &raw_templates {
            let key = match TemplateKey::parse(raw_key) {
                Ok(k) => k,
                Err(e) => {
                    violations.push(e.to_string());
                    continue;
                }
            };
            if !predicates.contains(&key.predicate().to_string()) {
                violations.push(format!(
                    "template '{raw_key}' references undeclared predicate '{}'",
                    key.predicate()
                ));
            }
            if let TemplateKey::Typed(_, s, o) = &key {
                for t in [s, o] {
                    if !entity_types.contains(t) {
                        violations.push(format!(
                            "template '{raw_key}' references undeclared entity type '{t}'"
                        ));
                    }
                }
            }
            match Template::new(key.clone(), text.clone()) {
                Ok(template) => {
                    let idx = templates.len();
                    let duplicate = match &key {
                        TemplateKey::Plain(p) => {
                            plain_lookup.insert(p.clone(), idx).is_some()
                        }
                        TemplateKey::Typed(p, s, o) => typed_lookup
                            .insert((p.clone(), s.clone(), o.clone()), idx)
                            .is_some(),
                    };
                    if duplicate {
                        violations.push(format!("duplicate template key '{raw_key}'"));
                    }
                    templates.push(template);
                }
                Err(e) => violations.push(e.to_string()),
            }
        }

        for p in &predicates {
            let has_any = templates.iter().any(|t| t.key.predicate() == p);
            if !has_any {
                violations.push(format!("predicate '{p}' has no template"));
            }
        }

        if !violations.is_empty() {
            return Err(Error::SchemaViolations(violations));
        }
        Ok(Self {
            predicates,
            entity_types,
            templates,
            typed_lookup,
            plain_lookup,
        })
    }

    pub fn predicates(&self) -> &[String] {
        &self.predicates
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn n_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicates.iter().position(|p| p == name)
    }

    pub fn has_entity_type(&self, name: &str) -> bool {
        self.entity_types.iter().any(|t| t == name)
    }

    /// Templates in file order (deterministic).
    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    /// Resolves the template for a (predicate, subject type, object type)
    /// triple: the exact typed key wins, then the predicate fallback.
    pub fn resolve_template(
        &self,
        predicate: &str,
        subject_type: &str,
        object_type: &str,
    ) -> Result<&Template> {
        let typed = (
            predicate.to_string(),
            subject_type.to_string(),
            object_type.to_string(),
        );
        if let Some(&idx) = self.typed_lookup.get(&typed) {
            return Ok(&self.templates[idx]);
        }
        if let Some(&idx) = self.plain_lookup.get(predicate) {
            return Ok(&self.templates[idx]);
        }
        Err(Error::Schema(format!(
            "no template for ({predicate}, {subject_type}, {object_type}) and no fallback"
        )))
    }

    /// Fills a template's slots with the given spans, returning the text
    /// plus the byte ranges where the spans landed.
    pub fn fill_template(
        &self,
        predicate: &str,
        subject_span: &str,
        object_span: &str,
        subject_type: &str,
        object_type: &str,
    ) -> Result<FilledDescription> {
        let template = self.resolve_template(predicate, subject_type, object_type)?;
        Ok(template.fill(subject_span, object_span, subject_type, object_type))
    }
}

impl Template {
    /// Validates the exactly-one-placeholder rule for both slots.
    pub fn new(key: TemplateKey, text: String) -> Result<Self> {
        let subject_at = placeholder_offset(&key, &text, SUBJECT_SLOT)?;
        let object_at = placeholder_offset(&key, &text, OBJECT_SLOT)?;
        Ok(Self {
            key,
            text,
            subject_at,
            object_at,
        })
    }

    pub fn fill(
        &self,
        subject_span: &str,
        object_span: &str,
        subject_type: &str,
        object_type: &str,
    ) -> FilledDescription {
        let subject_first = self.subject_at < self.object_at;
        let (first_at, first_len, first_span) = if subject_first {
            (self.subject_at, SUBJECT_SLOT.len(), subject_span)
        } else {
            (self.object_at, OBJECT_SLOT.len(), object_span)
        };
        let (second_at, second_len, second_span) = if subject_first {
            (self.object_at, OBJECT_SLOT.len(), object_span)
        } else {
            (self.subject_at, SUBJECT_SLOT.len(), subject_span)
        };

        let pre = &self.text[..first_at];
        let mid = &self.text[first_at + first_len..second_at];
        let post = &self.text[second_at + second_len..];

        let mut text = String::with_capacity(
            pre.len() + first_span.len() + mid.len() + second_span.len() + post.len(),
        );
        text.push_str(pre);
        let first_range = text.len()..text.len() + first_span.len();
        text.push_str(first_span);
        text.push_str(mid);
        let second_range = text.len()..text.len() + second_span.len();
        text.push_str(second_span);
        text.push_str(post);

        let (subject_range, object_range) = if subject_first {
            (first_range, second_range)
        } else {
            (second_range, first_range)
        };
        FilledDescription {
            text,
            subject_range,
            object_range,
            subject_type: subject_type.to_string(),
            object_type: object_type.to_string(),
        }
    }
}

fn placeholder_offset(key: &TemplateKey, text: &str, slot: &str) -> Result<usize> {
    let count = text.matches(slot).count();
    if count != 1 {
        return Err(Error::Schema(format!(
            "template '{}' must contain {slot} exactly once, found {count}",
            key.render()
        )));
    }
    Ok(text.find(slot).expect("counted above"))
}
