//! Strict parsing of model output into actions.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Expected shape of a response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParserSpec {
    /// First standalone number, which must be integral.
    Integer,
    /// First standalone number, rounded to `places` decimals when given.
    Decimal {
        places: Option<u32>,
    },
    /// A reason line followed by a line holding an integer.
    ReasonInteger,
    /// Exactly one of the allowed tokens.
    Choice {
        allowed: Vec<String>,
    },
    /// A reason line followed by a decision line naming one allowed token.
    TwoLine {
        decisions: Vec<String>,
    },
    FreeText,
}

impl ParserSpec {
    pub fn choice<S: Into<String>>(allowed: impl IntoIterator<Item = S>) -> Self {
        Self::Choice {
            allowed: allowed.into_iter().map(Into::into).collect(),
        }
    }

    pub fn two_line<S: Into<String>>(decisions: impl IntoIterator<Item = S>) -> Self {
        Self::TwoLine {
            decisions: decisions.into_iter().map(Into::into).collect(),
        }
    }

    /// Follow-up message sent once when a response does not parse.
    pub fn reminder(&self) -> String {
        match self {
            Self::Integer => "Please reply with a single integer only.".into(),
            Self::Decimal { places: Some(p) } => {
                format!("Please reply with a single number with {p} decimal places only.")
            }
            Self::Decimal { places: None } => "Please reply with a single number only.".into(),
            Self::ReasonInteger => {
                "Please give the reason in the first line and only the number in the second line.".into()
            }
            Self::Choice { allowed } => format!("Please reply with exactly one of: {}.", allowed.join(", ")),
            Self::TwoLine { decisions } => format!(
                "Please answer in two lines: the reason in the first line and one of {} in the second line.",
                decisions.join(", ")
            ),
            Self::FreeText => "Please reply in plain text.".into(),
        }
    }

    pub fn parse(&self, raw: &str) -> ParsedAction {
        let value = match self {
            Self::Integer => first_number(raw).and_then(|n| {
                let v: f64 = n.parse().ok()?;
                (v.fract() == 0.0 && v.abs() < 9.0e15).then_some(ActionValue::Integer(v as i64))
            }),
            Self::Decimal { places } => first_number(raw).and_then(|n| {
                let v: f64 = n.parse().ok()?;
                let v = match places {
                    Some(p) => {
                        let scale = 10f64.powi(*p as i32);
                        (v * scale).round() / scale
                    }
                    None => v,
                };
                Some(ActionValue::Decimal(v))
            }),
            Self::ReasonInteger => {
                let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
                match lines.as_slice() {
                    [_, .., last] => Self::Integer.parse(last).value,
                    _ => None,
                }
            }
            Self::Choice { allowed } => match_choice(raw, allowed).map(ActionValue::Choice),
            Self::TwoLine { decisions } => parse_two_line(raw, decisions),
            Self::FreeText => {
                let text = raw.trim();
                (!text.is_empty()).then(|| ActionValue::FreeText(text.to_string()))
            }
        };
        ParsedAction {
            raw: raw.to_string(),
            conforming: value.is_some(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionValue {
    Integer(i64),
    Decimal(f64),
    Choice(String),
    TwoLine { reason: String, decision: String },
    FreeText(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub raw: String,
    pub value: Option<ActionValue>,
    pub conforming: bool,
}

impl ParsedAction {
    pub fn integer(&self) -> Option<i64> {
        match self.value {
            Some(ActionValue::Integer(v)) => Some(v),
            _ => None,
        }
    }

    pub fn number(&self) -> Option<f64> {
        match self.value {
            Some(ActionValue::Integer(v)) => Some(v as f64),
            Some(ActionValue::Decimal(v)) => Some(v),
            _ => None,
        }
    }

    /// The chosen token for choice and two-line parsers.
    pub fn choice(&self) -> Option<&str> {
        match &self.value {
            Some(ActionValue::Choice(c)) => Some(c),
            Some(ActionValue::TwoLine { decision, .. }) => Some(decision),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.value {
            Some(ActionValue::FreeText(t)) => Some(t),
            _ => None,
        }
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"));

/// First number token not glued to letters, digits or a preceding dot.
fn first_number(raw: &str) -> Option<&str> {
    NUMBER.find_iter(raw).find_map(|m| {
        let before = raw[..m.start()].chars().next_back();
        let after = raw[m.end()..].chars().next();
        let glued_before = before.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.');
        let glued_after = after.is_some_and(|c| c.is_alphanumeric() || c == '_');
        (!glued_before && !glued_after).then(|| m.as_str())
    })
}

/// Lowercased words separated by single spaces, with padding spaces.
fn words(text: &str) -> String {
    let mut out = String::from(" ");
    for word in text
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
    {
        out.push_str(&word.to_lowercase());
        out.push(' ');
    }
    out
}

/// The unique allowed token present in `raw` as whole words. A token whose
/// words are part of another matched token (`left` inside `upper left`) is
/// not counted separately.
fn match_choice(raw: &str, allowed: &[String]) -> Option<String> {
    let haystack = words(raw);
    let matched: Vec<(&String, String)> = allowed
        .iter()
        .map(|a| (a, words(a)))
        .filter(|(_, w)| !w.trim().is_empty() && haystack.contains(w.as_str()))
        .collect();
    let maximal: Vec<&String> = matched
        .iter()
        .filter(|(_, w)| {
            !matched
                .iter()
                .any(|(_, other)| other.len() > w.len() && other.contains(w.as_str()))
        })
        .map(|(a, _)| *a)
        .collect();
    match maximal.as_slice() {
        [only] => Some((*only).clone()),
        _ => None,
    }
}

fn parse_two_line(raw: &str, decisions: &[String]) -> Option<ActionValue> {
    let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let (last, rest) = lines.split_last()?;
    if rest.is_empty() {
        return None;
    }
    let decision = match_choice(last, decisions)?;
    Some(ActionValue::TwoLine {
        reason: rest.join("\n"),
        decision,
    })
}
