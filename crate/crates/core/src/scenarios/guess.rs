//! Number guessing: an adjudicator thinks of a number and a guesser narrows
//! it down from higher/lower feedback.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::{self, AgentState, Observation, ObservationKind, ParserSpec};
use crate::promptkit::{bindings, Bindings};
use crate::provider::{ChatRequest, LlmSettings, ScenarioOracle};
use crate::runtime::{ExitSpec, RunCtx, RuntimeError, Scenario, StepOutcome};

pub const NAME: &str = "guess";
pub const CONGRATULATIONS: &str = "Congratulations!";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Higher,
    Lower,
    Correct,
}

impl Feedback {
    /// Adjudicator reply shown to the guesser.
    pub fn message(self) -> &'static str {
        match self {
            Self::Higher => "The guess is higher than the answer.",
            Self::Lower => "The guess is lower than the answer.",
            Self::Correct => CONGRATULATIONS,
        }
    }

    fn history_note(self) -> &'static str {
        match self {
            Self::Higher => "higher than the answer",
            Self::Lower => "lower than the answer",
            Self::Correct => "correct",
        }
    }
}

pub fn adjudicate(target: i64, guess: i64) -> Feedback {
    match guess.cmp(&target) {
        std::cmp::Ordering::Equal => Feedback::Correct,
        std::cmp::Ordering::Greater => Feedback::Higher,
        std::cmp::Ordering::Less => Feedback::Lower,
    }
}

/// `[50 (higher than the answer), 25 (lower than the answer)]`
pub fn format_history(history: &[(i64, Feedback)]) -> String {
    let items: Vec<String> = history
        .iter()
        .map(|(g, f)| format!("{g} ({})", f.history_note()))
        .collect();
    format!("[{}]", items.join(", "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// The adjudicator agent picks the number.
    Adjudicator,
    /// Drawn uniformly from the run's random stream.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessPersona {
    None,
    Aggressive,
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuessParams {
    pub range: (i64, i64),
    /// Fixed target; overrides `target_source`.
    pub target: Option<i64>,
    pub target_source: TargetSource,
    /// Include the domain-knowledge clause about binary search.
    pub bsearch_hint: bool,
    pub one_shot: bool,
    /// Ask for a reason line before the number.
    pub reasoning: bool,
    /// Reflect once at the start of this round (needs a prior guess).
    pub planning_at: Option<u64>,
    pub persona: GuessPersona,
    /// The adjudicator gives a hint before the first guess.
    pub hint_conversation: bool,
    pub explain: bool,
    pub settings: LlmSettings,
}

impl Default for GuessParams {
    fn default() -> Self {
        Self {
            range: (1, 100),
            target: None,
            target_source: TargetSource::Adjudicator,
            bsearch_hint: true,
            one_shot: false,
            reasoning: false,
            planning_at: None,
            persona: GuessPersona::None,
            hint_conversation: false,
            explain: false,
            settings: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessState {
    pub range: (i64, i64),
    pub target: i64,
    pub history: Vec<(i64, Feedback)>,
    pub guesses: Vec<f64>,
    pub hint: Option<String>,
    pub anomalies: Vec<String>,
    pub guesser: AgentState,
    pub adjudicator: AgentState,
}

impl GuessState {
    pub fn trace(&self) -> Vec<i64> {
        self.history.iter().map(|(g, _)| *g).collect()
    }
}

/// `binary_search` when every guess lies inside the interval still
/// consistent with earlier feedback and no guess repeats; `other` otherwise.
pub fn behavior_label(range: (i64, i64), history: &[(i64, Feedback)]) -> &'static str {
    let (mut lo, mut hi) = range;
    let mut seen = std::collections::BTreeSet::new();
    for &(g, f) in history {
        if g < lo || g > hi || !seen.insert(g) {
            return "other";
        }
        match f {
            Feedback::Higher => hi = g - 1,
            Feedback::Lower => lo = g + 1,
            Feedback::Correct => {}
        }
    }
    "binary_search"
}

pub struct GuessScenario {
    pub params: GuessParams,
}

impl GuessScenario {
    pub fn new(params: GuessParams) -> Self {
        Self { params }
    }

    fn even_only(ctx: &RunCtx) -> bool {
        ctx.variants()
            .0
            .get("guess.rules")
            .is_some_and(|(_, v)| v == "even_only")
    }

    fn draw_target(&self, ctx: &mut RunCtx) -> Result<i64, RuntimeError> {
        let (lo, hi) = self.params.range;
        if Self::even_only(ctx) {
            let first = lo + lo.rem_euclid(2);
            let count = ((hi - first) / 2 + 1).max(1) as u64;
            Ok(first + 2 * ctx.below("guess.target", count)? as i64)
        } else {
            Ok(lo + ctx.below("guess.target", (hi - lo + 1) as u64)? as i64)
        }
    }

    fn range_bindings(&self) -> Bindings {
        let (lo, hi) = self.params.range;
        bindings([("range begin", lo.to_string()), ("range end", hi.to_string())])
    }

    fn extras(&self, ctx: &RunCtx) -> Result<String, RuntimeError> {
        let mut extras = String::new();
        let empty = Bindings::new();
        if self.params.bsearch_hint {
            extras.push(' ');
            extras.push_str(&ctx.render("guess.knowledge", &empty)?);
        }
        if self.params.one_shot {
            extras.push(' ');
            extras.push_str(&ctx.render("guess.one_shot", &empty)?);
        }
        Ok(extras)
    }

    fn hint_clause(ctx: &RunCtx, hint: Option<&str>) -> Result<String, RuntimeError> {
        match hint.map(str::trim).filter(|h| !h.is_empty()) {
            Some(h) => {
                let h = h.trim_end_matches('.');
                Ok(format!(
                    " {}",
                    ctx.render("guess.hint_clause", &bindings([("hint", h)]))?
                ))
            }
            None => Ok(String::new()),
        }
    }

    fn history_bindings(&self, ctx: &RunCtx, state: &GuessState) -> Result<Bindings, RuntimeError> {
        let mut b = Bindings::new();
        b.insert("rules".into(), ctx.render("guess.rules", &self.range_bindings())?);
        let last = state.history.last().map(|(g, _)| g.to_string()).unwrap_or_default();
        b.insert("previous guess".into(), last);
        b.insert("guess history".into(), format_history(&state.history));
        Ok(b)
    }

    fn guess_prompt(&self, ctx: &RunCtx, state: &GuessState) -> Result<(String, Bindings), RuntimeError> {
        let format_id = if self.params.reasoning {
            "guess.reasoning_format"
        } else {
            "guess.format"
        };
        let format = ctx.render(format_id, &Bindings::new())?;
        let mut extras = self.extras(ctx)?;
        let hint = Self::hint_clause(ctx, state.hint.as_deref())?;
        let mut b = self.history_bindings(ctx, state)?;
        b.insert("format".into(), format);
        if state.history.is_empty() {
            extras.push_str(&hint);
            b.insert("extras".into(), extras);
            b.remove("previous guess");
            b.remove("guess history");
            Ok(("guess.first".into(), b))
        } else {
            b.insert("extras".into(), extras);
            b.insert("hint".into(), hint);
            Ok(("guess.next".into(), b))
        }
    }

    fn anomaly(ctx: &mut RunCtx, state: &mut GuessState, note: String) -> Result<(), RuntimeError> {
        ctx.world(Some("guesser"), json!({"anomaly": note}))?;
        state.anomalies.push(note);
        Ok(())
    }
}

impl Scenario for GuessScenario {
    type State = GuessState;

    const NAME: &'static str = NAME;

    fn params(&self) -> Value {
        serde_json::to_value(&self.params).unwrap_or(Value::Null)
    }

    fn stages(&self) -> &'static [&'static str] {
        &["hint", "plan", "guesser", "adjudicate", "explain"]
    }

    fn init(&self, ctx: &mut RunCtx) -> Result<GuessState, RuntimeError> {
        let (lo, hi) = self.params.range;
        if lo > hi {
            return Err(RuntimeError::Config(format!("empty range {lo}..{hi}")));
        }
        let mut guesser = AgentState::new("guesser", self.params.settings.clone(), 64);
        guesser.persona = match self.params.persona {
            GuessPersona::None => String::new(),
            GuessPersona::Aggressive => ctx.render("guess.persona_aggressive", &Bindings::new())?,
            GuessPersona::Conservative => ctx.render("guess.persona_conservative", &Bindings::new())?,
        };
        let adjudicator = AgentState::new("adjudicator", self.params.settings.clone(), 1);
        let target = match (self.params.target, self.params.target_source) {
            (Some(t), _) => t,
            (None, TargetSource::Random) => self.draw_target(ctx)?,
            (None, TargetSource::Adjudicator) => {
                ctx.set_stage("adjudicator");
                let template = ctx.template("guess.adjudicator")?;
                let d = agent::act(
                    ctx,
                    &adjudicator,
                    "adjudicator",
                    &template,
                    &self.range_bindings(),
                    &ParserSpec::Integer,
                )?;
                let even_only = Self::even_only(ctx);
                match d.action.integer() {
                    Some(t) if (lo..=hi).contains(&t) && (!even_only || t % 2 == 0) => t,
                    _ => self.draw_target(ctx)?,
                }
            }
        };
        if !(lo..=hi).contains(&target) {
            return Err(RuntimeError::Config(format!("target {target} outside {lo}..{hi}")));
        }
        ctx.world(None, json!({"target": target}))?;
        Ok(GuessState {
            range: (lo, hi),
            target,
            history: Vec::new(),
            guesses: Vec::new(),
            hint: None,
            anomalies: Vec::new(),
            guesser,
            adjudicator,
        })
    }

    fn step(&self, ctx: &mut RunCtx, state: &mut GuessState) -> Result<StepOutcome, RuntimeError> {
        let round = ctx.round;
        if round == 1 && self.params.hint_conversation {
            ctx.set_stage("hint");
            let template = ctx.template("guess.hint")?;
            let b = bindings([("target number", state.target.to_string())]);
            let d = agent::act(ctx, &state.adjudicator, "hint", &template, &b, &ParserSpec::FreeText)?;
            state.hint = d.action.text().map(str::to_string);
            if let Some(h) = &state.hint {
                state
                    .guesser
                    .push(Observation::new(round, ObservationKind::HeardMessage, h.clone()));
            }
        }
        if self.params.planning_at == Some(round) && !state.history.is_empty() {
            ctx.set_stage("plan");
            let template = ctx.template("guess.plan")?;
            let b = self.history_bindings(ctx, state)?;
            state.guesser = agent::reflect(ctx, &state.guesser, "plan", &template, &b)?;
        }

        ctx.set_stage("guesser");
        let (template_id, b) = self.guess_prompt(ctx, state)?;
        let template = ctx.template(&template_id)?;
        let parser = if self.params.reasoning {
            ParserSpec::ReasonInteger
        } else {
            ParserSpec::Integer
        };
        let decision = agent::act(ctx, &state.guesser, "guesser", &template, &b, &parser)?;
        let (lo, hi) = state.range;
        let guess = match decision.action.integer() {
            Some(g) => g,
            None => {
                let g = lo + ctx.below("guess.fallback", (hi - lo + 1) as u64)? as i64;
                Self::anomaly(ctx, state, format!("unparseable guess, drew {g}"))?;
                g
            }
        };
        if !(lo..=hi).contains(&guess) {
            Self::anomaly(ctx, state, format!("guess {guess} outside {lo}..{hi}"))?;
        }
        if state.history.iter().any(|(g, _)| *g == guess) {
            Self::anomaly(ctx, state, format!("repeated guess {guess}"))?;
        }

        ctx.set_stage("adjudicate");
        let feedback = adjudicate(state.target, guess);
        ctx.world(
            Some("adjudicator"),
            json!({"guess": guess, "feedback": feedback, "message": feedback.message()}),
        )?;
        state.history.push((guess, feedback));
        state.guesses.push(guess as f64);
        state
            .guesser
            .push(Observation::new(round, ObservationKind::OwnAction, guess.to_string()));
        state
            .guesser
            .push(Observation::new(round, ObservationKind::Feedback, feedback.message()));

        if self.params.explain {
            ctx.set_stage("explain");
            let template = ctx.template("guess.explain")?;
            let b = self.history_bindings(ctx, state)?;
            agent::explain(ctx, &state.guesser, decision.seq, "explain", &template, &b)?;
        }
        Ok(match feedback {
            Feedback::Correct => StepOutcome::Endpoint(CONGRATULATIONS.into()),
            _ => StepOutcome::Continue,
        })
    }

    fn series<'s>(&self, state: &'s GuessState, name: &str) -> Option<&'s [f64]> {
        (name == "guesses").then_some(state.guesses.as_slice())
    }

    fn exit_specs(&self) -> Vec<ExitSpec> {
        vec![ExitSpec::Endpoint]
    }

    fn metrics(&self, state: &GuessState) -> Value {
        let solved = state.history.last().is_some_and(|(_, f)| *f == Feedback::Correct);
        json!({
            "metric": state.history.len(),
            "behavior": behavior_label(state.range, &state.history),
            "guess_count": state.history.len(),
            "solved": solved,
            "target": state.target,
            "trace": state.trace(),
            "anomalies": state.anomalies.len(),
        })
    }

    /// Spec: `{"history": [[50, "higher"], [25, "lower"]], "hint": "..."}`.
    fn probe(&self, ctx: &mut RunCtx, spec: &Value, explain: bool) -> Result<(), RuntimeError> {
        let history: Vec<(i64, Feedback)> = match spec.get("history") {
            Some(h) => {
                serde_json::from_value(h.clone()).map_err(|e| RuntimeError::Config(format!("probe history: {e}")))?
            }
            None => Vec::new(),
        };
        let state = GuessState {
            range: self.params.range,
            target: self.params.target.unwrap_or(self.params.range.0),
            guesses: history.iter().map(|(g, _)| *g as f64).collect(),
            history,
            hint: spec.get("hint").and_then(Value::as_str).map(str::to_string),
            anomalies: Vec::new(),
            guesser: AgentState::new("guesser", self.params.settings.clone(), 64),
            adjudicator: AgentState::new("adjudicator", self.params.settings.clone(), 1),
        };
        let (template_id, b) = self.guess_prompt(ctx, &state)?;
        let template = ctx.template(&template_id)?;
        let d = agent::act(ctx, &state.guesser, "guesser", &template, &b, &ParserSpec::Integer)?;
        if explain {
            let mut after = state.clone();
            if let Some(g) = d.action.integer() {
                after.history.push((g, Feedback::Correct));
            }
            let template = ctx.template("guess.explain")?;
            let b = self.history_bindings(ctx, &after)?;
            agent::explain(ctx, &state.guesser, d.seq, "explain", &template, &b)?;
        }
        Ok(())
    }
}

static RANGE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"from (-?\d+) to (-?\d+)").expect("valid regex"));
static FEEDBACK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(-?\d+) \((higher|lower) than the answer\)").expect("valid regex"));
static BETWEEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"between (-?\d+) and (-?\d+)").expect("valid regex"));
static DECIDED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"You decided (-?\d+)").expect("valid regex"));

fn num(m: Option<regex::Match<'_>>) -> Option<i64> {
    m?.as_str().parse().ok()
}

/// Interval still consistent with the range, hint and feedback in `text`.
fn feasible(text: &str) -> (i64, i64) {
    let (mut lo, mut hi) = RANGE
        .captures(text)
        .and_then(|c| Some((num(c.get(1))?, num(c.get(2))?)))
        .unwrap_or((1, 100));
    if let Some((a, b)) = BETWEEN
        .captures(text)
        .and_then(|c| Some((num(c.get(1))?, num(c.get(2))?)))
    {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    for c in FEEDBACK.captures_iter(text) {
        let Some(g) = num(c.get(1)) else { continue };
        match &c[2] {
            "higher" => hi = hi.min(g - 1),
            _ => lo = lo.max(g + 1),
        }
    }
    if lo > hi {
        (hi, lo)
    } else {
        (lo, hi)
    }
}

/// Decade containing `target`, clipped to the range.
fn decade(target: i64, range: (i64, i64)) -> (i64, i64) {
    let lo = target.div_euclid(10) * 10;
    (lo.max(range.0), (lo + 9).min(range.1))
}

/// Scripted guesser and adjudicator.
///
/// The guesser bisects the feasible interval at its floor midpoint. It picks
/// the lower-middle even number when told the answer is even, and a
/// request-seeded point of the interval when told it cannot bisect.
pub struct GuessOracle;

impl GuessOracle {
    pub fn guess(text: &str, seed: u64) -> i64 {
        let (lo, hi) = feasible(text);
        if text.contains("cannot use binary search") {
            return lo + (seed % (hi - lo + 1) as u64) as i64;
        }
        if text.contains("even integer") {
            let first = lo + lo.rem_euclid(2);
            if first <= hi {
                let count = (hi - first) / 2 + 1;
                return first + 2 * ((count - 1) / 2);
            }
        }
        (lo + hi).div_euclid(2)
    }
}

impl ScenarioOracle for GuessOracle {
    fn respond(&self, stage: &str, request: &ChatRequest) -> String {
        let text = request.first_user_text().unwrap_or("");
        let seed = request.cache_key().seed();
        match stage {
            "guesser" => {
                let g = Self::guess(text, seed);
                if text.contains("in the second line") {
                    let (lo, hi) = feasible(text);
                    format!("The answer lies between {lo} and {hi}.\n{g}")
                } else {
                    g.to_string()
                }
            }
            "adjudicator" => {
                let (lo, hi) = feasible(text);
                (lo + (seed % (hi - lo + 1) as u64) as i64).to_string()
            }
            "hint" => {
                let target = num(DECIDED.captures(text).and_then(|c| c.get(1))).unwrap_or(50);
                let (lo, hi) = decade(target, (i64::MIN, i64::MAX));
                format!("The number is between {lo} and {hi}.")
            }
            "plan" => {
                let (lo, hi) = feasible(text);
                format!(
                    "Based on the history, the number is between {lo} and {hi}. I will keep guessing the midpoint of the remaining range."
                )
            }
            "explain" => "It is the midpoint of the remaining range.".into(),
            _ => String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjudication() {
        assert_eq!(adjudicate(28, 50), Feedback::Higher);
        assert_eq!(adjudicate(28, 28), Feedback::Correct);
        assert_eq!(adjudicate(53, 50), Feedback::Lower);
        assert_eq!(Feedback::Correct.message(), "Congratulations!");
    }

    #[test]
    fn history_format() {
        let h = [(50, Feedback::Higher), (25, Feedback::Lower)];
        assert_eq!(
            format_history(&h),
            "[50 (higher than the answer), 25 (lower than the answer)]"
        );
    }

    #[test]
    fn oracle_midpoints() {
        let text = "The number will be an integer ranging from 1 to 100. The history of your guess is [50 (higher than the answer), 25 (lower than the answer)].";
        assert_eq!(feasible(text), (26, 49));
        assert_eq!(GuessOracle::guess(text, 0), 37);
        assert_eq!(GuessOracle::guess("ranging from 1 to 100.", 0), 50);
        assert_eq!(GuessOracle::guess("an even integer ranging from 1 to 100.", 0), 50);
        assert_eq!(
            GuessOracle::guess(
                "an even integer ranging from 1 to 100. [50 (higher than the answer)]",
                0
            ),
            24
        );
        let r = GuessOracle::guess("from 1 to 100. You cannot use binary search.", 12345);
        assert!((1..=100).contains(&r));
    }

    #[test]
    fn hint_narrows() {
        assert_eq!(decade(28, (1, 100)), (20, 29));
        assert_eq!(decade(100, (1, 100)), (100, 100));
        assert_eq!(
            feasible("from 1 to 100. hint: The number is between 20 and 29"),
            (20, 29)
        );
    }

    #[test]
    fn labels() {
        let ok = [(50, Feedback::Higher), (25, Feedback::Lower), (37, Feedback::Higher)];
        assert_eq!(behavior_label((1, 100), &ok), "binary_search");
        let bad = [(50, Feedback::Higher), (60, Feedback::Higher)];
        assert_eq!(behavior_label((1, 100), &bad), "other");
    }
}
