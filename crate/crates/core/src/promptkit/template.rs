use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PromptError;

/// Name → replacement text for one render.
pub type Bindings = BTreeMap<String, String>;

/// Builds [`Bindings`] from `(name, value)` pairs.
pub fn bindings<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings
where
    K: Into<String>,
    V: ToString,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Segment {
    Text(String),
    Slot(String),
}

/// Text with `{name}` placeholders. Names may contain letters, digits,
/// underscores, hyphens and spaces; `{{` and `}}` produce literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
    pub placeholders: BTreeSet<String>,
    segments: Vec<Segment>,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == ' '
}

fn parse(id: &str, body: &str) -> Result<Vec<Segment>, PromptError> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|(_, n)| *n) == Some('{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek().map(|(_, n)| *n) == Some('}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                let mut closed = false;
                for (_, n) in chars.by_ref() {
                    if n == '}' {
                        closed = true;
                        break;
                    }
                    if !is_name_char(n) {
                        break;
                    }
                    name.push(n);
                }
                if !closed || name.trim().is_empty() || name.trim() != name {
                    return Err(PromptError::Syntax {
                        id: id.to_string(),
                        offset: pos,
                        reason: "unterminated or malformed placeholder".into(),
                    });
                }
                if !text.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut text)));
                }
                segments.push(Segment::Slot(name));
            }
            '}' => {
                return Err(PromptError::Syntax {
                    id: id.to_string(),
                    offset: pos,
                    reason: "unmatched `}`".into(),
                })
            }
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    Ok(segments)
}

impl PromptTemplate {
    /// Parses `body`, declaring exactly the placeholders it uses.
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, PromptError> {
        let id = id.into();
        let body = body.into();
        let segments = parse(&id, &body)?;
        let placeholders = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.clone()),
                Segment::Text(_) => None,
            })
            .collect();
        Ok(Self {
            id,
            body,
            placeholders,
            segments,
        })
    }

    /// Parses `body` and checks that it only uses `declared` placeholders.
    /// Declared names the body never uses are kept in the declared set.
    pub fn with_declared<S: Into<String>>(
        id: impl Into<String>,
        body: impl Into<String>,
        declared: impl IntoIterator<Item = S>,
    ) -> Result<Self, PromptError> {
        let mut template = Self::new(id, body)?;
        let declared: BTreeSet<String> = declared.into_iter().map(Into::into).collect();
        if let Some(unknown) = template.placeholders.difference(&declared).next() {
            return Err(PromptError::UnknownPlaceholder {
                id: template.id,
                name: unknown.clone(),
            });
        }
        template.placeholders = declared;
        Ok(template)
    }

    /// A template whose rendering is exactly `text`.
    pub fn literal(id: impl Into<String>, text: &str) -> Self {
        let escaped = text.replace('{', "{{").replace('}', "}}");
        Self::new(id, escaped).expect("escaped text always parses")
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, PromptError> {
        if let Some(missing) = self.placeholders.iter().find(|p| !bindings.contains_key(*p)) {
            return Err(PromptError::MissingBinding {
                id: self.id.clone(),
                name: missing.clone(),
            });
        }
        let mut out = String::with_capacity(self.body.len());
        for segment in &self.segments {
            match segment {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => out.push_str(&bindings[name]),
            }
        }
        Ok(out)
    }
}

/// Renders `template` with `bindings`; extra bindings are ignored.
pub fn render(template: &PromptTemplate, bindings: &Bindings) -> Result<String, PromptError> {
    template.render(bindings)
}
