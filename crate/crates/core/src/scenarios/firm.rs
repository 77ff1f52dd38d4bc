//! Bertrand duopoly with differentiated goods: two firms post prices each
//! round under linear demand, optionally talking and planning.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{self, AgentState, Observation, ObservationKind, ParserSpec};
use crate::analysis::{stable_collusion_onset, summarize_bins, Series};
use crate::promptkit::{bindings, Bindings};
use crate::provider::{ChatRequest, LlmSettings, ScenarioOracle};
use crate::runtime::{
    mediate_conversation, Audience, ConversationPolicy, Eligibility, ExitSpec, Participant, RunCtx, RuntimeError,
    Scenario, SpeakOrder, StepOutcome,
};

pub const NAME: &str = "firm";

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("singular market parameters: {0}")]
    SingularParameters(&'static str),
}

/// Linear demand `q_i = (alpha - beta p_i + d p_j) / b` with
/// `alpha = a (beta - d)` and `b = beta^2 - d^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub a: f64,
    pub d: f64,
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            a: 14.0,
            d: 1.0 / 300.0,
            beta: 1.0 / 150.0,
            c1: 2.0,
            c2: 2.0,
        }
    }
}

impl MarketParams {
    pub fn alpha(&self) -> f64 {
        self.a * self.beta - self.a * self.d
    }

    pub fn b(&self) -> f64 {
        self.beta * self.beta - self.d * self.d
    }

    pub fn cost(&self, firm: usize) -> f64 {
        if firm == 0 {
            self.c1
        } else {
            self.c2
        }
    }
}

/// Unclamped demands; may be negative for extreme prices.
pub fn demand(p1: f64, p2: f64, params: &MarketParams) -> (f64, f64) {
    let (alpha, beta, d, b) = (params.alpha(), params.beta, params.d, params.b());
    ((alpha - beta * p1 + d * p2) / b, (alpha - beta * p2 + d * p1) / b)
}

pub fn profit(p: f64, c: f64, q: f64) -> f64 {
    (p - c) * q
}

pub fn bertrand_price(params: &MarketParams) -> Result<(f64, f64), MarketError> {
    let (alpha, beta, d) = (params.alpha(), params.beta, params.d);
    let den = 4.0 * beta * beta - d * d;
    if den == 0.0 {
        return Err(MarketError::SingularParameters("4 beta^2 = d^2"));
    }
    let p = |own: f64, other: f64| (d * alpha + beta * d * other + 2.0 * beta * alpha + 2.0 * beta * beta * own) / den;
    Ok((p(params.c1, params.c2), p(params.c2, params.c1)))
}

pub fn monopoly_price(params: &MarketParams) -> Result<(f64, f64), MarketError> {
    if params.beta == params.d {
        return Err(MarketError::SingularParameters("d = beta"));
    }
    let base = params.alpha() / (2.0 * (params.beta - params.d));
    Ok((base + params.c1 / 2.0, base + params.c2 / 2.0))
}

/// Profit-maximizing price for `firm` against `p_other`.
pub fn best_response(p_other: f64, firm: usize, params: &MarketParams) -> f64 {
    (params.alpha() + params.d * p_other + params.beta * params.cost(firm)) / (2.0 * params.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirmPersona {
    None,
    Active,
    Aggressive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirmParams {
    pub market: MarketParams,
    pub persona: FirmPersona,
    pub memory_window: usize,
    pub planning: bool,
    pub planning_cadence: u64,
    pub planning_start: u64,
    pub conversation: bool,
    pub conversation_quota: u32,
    /// Which firm speaks first in Phase 1.
    pub conversation_first: usize,
    pub convergence_span: usize,
    pub convergence_theta: f64,
    pub oscillation_span: usize,
    pub explain: bool,
    pub settings: LlmSettings,
}

impl Default for FirmParams {
    fn default() -> Self {
        Self {
            market: MarketParams::default(),
            persona: FirmPersona::None,
            memory_window: 20,
            planning: true,
            planning_cadence: 20,
            planning_start: 21,
            conversation: false,
            conversation_quota: 3,
            conversation_first: 0,
            convergence_span: 400,
            convergence_theta: 0.01,
            oscillation_span: 800,
            explain: false,
            settings: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FirmSeries {
    pub prices: Vec<f64>,
    pub demands: Vec<f64>,
    pub profits: Vec<f64>,
    pub strategies: Vec<(u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub round: u64,
    pub firms: [FirmSeries; 2],
    pub agents: [AgentState; 2],
    pub conversation_enabled: bool,
    pub utterances: u64,
    pub anomalies: Vec<String>,
}

pub const FIRM_NAMES: [&str; 2] = ["Firm 1", "Firm 2"];

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn history_line(round: u64, p: f64, q: f64, pi: f64, p_other: f64) -> String {
    format!(
        "Round #{round}: [{}, {}, {}, {}]",
        fmt2(p),
        fmt2(q),
        fmt2(pi),
        fmt2(p_other)
    )
}

pub struct FirmScenario {
    pub params: FirmParams,
}

impl FirmScenario {
    pub fn new(params: FirmParams) -> Self {
        Self { params }
    }

    fn history_block(ctx: &RunCtx, agent: &AgentState) -> Result<String, RuntimeError> {
        let lines: Vec<&str> = agent
            .observations(ObservationKind::OwnAction)
            .map(|o| o.content.as_str())
            .collect();
        if lines.is_empty() {
            return Ok(String::new());
        }
        ctx.render(
            "firm.history",
            &bindings([
                ("previous_round_number", lines.len().to_string()),
                ("previous_decisions", lines.join(", ")),
            ]),
        )
    }

    fn transcript_text(utterances: &[(String, String)]) -> String {
        utterances
            .iter()
            .map(|(who, text)| format!("{who}: {text}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn plan_evidence(&self, state: &MarketState, firm: usize) -> Result<Bindings, RuntimeError> {
        let other = 1 - firm;
        let series = |label: &str, v: &Vec<f64>| {
            Series::new(label, v.clone()).map_err(|e| RuntimeError::Scenario(e.to_string()))
        };
        let own = &state.firms[firm];
        let price = summarize_bins(&series("price", &own.prices)?, 20, 20);
        let dem = summarize_bins(&series("demand", &own.demands)?, 20, 20);
        let prof = summarize_bins(&series("profit", &own.profits)?, 20, 20);
        let opp = summarize_bins(&series("other", &state.firms[other].prices)?, 20, 20);
        let stats: Vec<String> = price
            .iter()
            .zip(&dem)
            .zip(&prof)
            .zip(&opp)
            .map(|(((p, q), pi), o)| {
                format!(
                    "Rounds #{} - #{}: [{}, {}, {}, {}]",
                    p.first_round,
                    p.last_round,
                    fmt2(p.mean),
                    fmt2(q.mean),
                    fmt2(pi.mean),
                    fmt2(o.mean)
                )
            })
            .collect();
        let start = own.strategies.len().saturating_sub(20);
        let strategies: Vec<String> = own.strategies[start..]
            .iter()
            .map(|(r, s)| format!("Round #{r}: {s}"))
            .collect();
        let past = if strategies.is_empty() {
            "None".to_string()
        } else {
            strategies.join("\n")
        };
        Ok(bindings([
            ("summary_statistics", stats.join("\n")),
            ("past_strategies", past),
        ]))
    }

    fn system_text(&self, ctx: &RunCtx, firm: usize, conversation: bool) -> Result<String, RuntimeError> {
        let mut text = ctx.render(
            "firm.game",
            &bindings([
                ("firm_name", FIRM_NAMES[firm].to_string()),
                ("firm_name_2", FIRM_NAMES[1 - firm].to_string()),
                ("firm_cost", fmt2(self.params.market.cost(firm))),
            ]),
        )?;
        if conversation {
            text.push('\n');
            text.push_str(&ctx.render("firm.conversation_rules", &Bindings::new())?);
        }
        Ok(text)
    }

    fn agent(&self, ctx: &RunCtx, firm: usize, conversation: bool) -> Result<AgentState, RuntimeError> {
        let persona = match self.params.persona {
            FirmPersona::None => String::new(),
            FirmPersona::Active => ctx.render("firm.persona_active", &Bindings::new())?,
            FirmPersona::Aggressive => ctx.render("firm.persona_aggressive", &Bindings::new())?,
        };
        Ok(AgentState::new(
            format!("firm{}", firm + 1),
            self.params.settings.clone(),
            self.params.memory_window,
        )
        .personalize(persona)
        .with_system(self.system_text(ctx, firm, conversation)?))
    }

    fn price_prompt(ctx: &RunCtx, agent: &AgentState, round: u64, transcript: &str) -> Result<Bindings, RuntimeError> {
        let history = Self::history_block(ctx, agent)?;
        let transcript = if transcript.is_empty() {
            String::new()
        } else {
            format!("\nThe discussion in Phase 1 of this round:\n{transcript}")
        };
        Ok(bindings([
            ("round", round.to_string()),
            ("history", history),
            ("transcript", transcript),
        ]))
    }

    fn settle(&self, ctx: &mut RunCtx, state: &mut MarketState, prices: [f64; 2]) -> Result<(), RuntimeError> {
        ctx.set_stage("market");
        let round = ctx.round;
        let market = &self.params.market;
        let (mut q1, mut q2) = demand(prices[0], prices[1], market);
        for (i, q) in [&mut q1, &mut q2].into_iter().enumerate() {
            if *q < 0.0 {
                let note = format!("round {round}: negative demand {q:.2} for firm {} clamped to 0", i + 1);
                ctx.world(None, json!({"anomaly": note}))?;
                state.anomalies.push(note);
                *q = 0.0;
            }
        }
        let q = [q1, q2];
        let pi = [profit(prices[0], market.c1, q1), profit(prices[1], market.c2, q2)];
        ctx.world(
            None,
            json!({"market": {"round": round, "p": prices, "q": q, "profit": pi}}),
        )?;
        for i in 0..2 {
            let f = &mut state.firms[i];
            f.prices.push(prices[i]);
            f.demands.push(q[i]);
            f.profits.push(pi[i]);
            let line = history_line(round, prices[i], q[i], pi[i], prices[1 - i]);
            state.agents[i].push(Observation::new(round, ObservationKind::OwnAction, line));
        }
        state.round = round;
        Ok(())
    }

    fn planning_due(&self, round: u64) -> bool {
        self.params.planning
            && round >= self.params.planning_start
            && self.params.planning_cadence > 0
            && (round - self.params.planning_start).is_multiple_of(self.params.planning_cadence)
    }

    fn conversation(&self, ctx: &mut RunCtx, state: &MarketState) -> Result<Vec<(String, String)>, RuntimeError> {
        ctx.set_stage("talk");
        let round = ctx.round;
        let quota = self.params.conversation_quota;
        let policy = ConversationPolicy {
            eligibility: Eligibility::Quota(quota),
            order: SpeakOrder::RoundRobin {
                start: self.params.conversation_first % 2,
            },
            audience: Audience::Everyone,
            deliver_only_to_later: false,
            max_turns: 2 * quota as usize,
        };
        let participants = [Participant::new("firm1"), Participant::new("firm2")];
        let agents = &state.agents;
        let transcript = mediate_conversation(ctx, &participants, &policy, |ctx, who, so_far| {
            let i = if who.id == "firm1" { 0 } else { 1 };
            let spoken = so_far.utterances.iter().filter(|u| u.speaker == who.id).count() as u32;
            let lines: Vec<(String, String)> = so_far
                .utterances
                .iter()
                .map(|u| {
                    (
                        FIRM_NAMES[if u.speaker == "firm1" { 0 } else { 1 }].to_string(),
                        u.text.clone(),
                    )
                })
                .collect();
            let text = Self::transcript_text(&lines);
            let b = bindings([
                ("round", round.to_string()),
                ("history", Self::history_block(ctx, &agents[i])?),
                ("transcript", if text.is_empty() { "(none)".to_string() } else { text }),
                ("firm_name_2", FIRM_NAMES[1 - i].to_string()),
                ("remaining", (quota - spoken).to_string()),
            ]);
            let template = ctx.template("firm.talk")?;
            let d = agent::act(ctx, &agents[i], "talk", &template, &b, &ParserSpec::FreeText)?;
            Ok(d.action.text().map(str::to_string))
        })?;
        Ok(transcript
            .utterances
            .iter()
            .map(|u| {
                (
                    FIRM_NAMES[if u.speaker == "firm1" { 0 } else { 1 }].to_string(),
                    u.text.clone(),
                )
            })
            .collect())
    }
}

impl Scenario for FirmScenario {
    type State = MarketState;

    const NAME: &'static str = NAME;

    fn params(&self) -> Value {
        serde_json::to_value(&self.params).unwrap_or(Value::Null)
    }

    fn stages(&self) -> &'static [&'static str] {
        &["plan", "talk", "price", "market", "explain"]
    }

    fn init(&self, ctx: &mut RunCtx) -> Result<MarketState, RuntimeError> {
        let market = &self.params.market;
        let (pb, _) = bertrand_price(market).map_err(|e| RuntimeError::Config(e.to_string()))?;
        let (pm, _) = monopoly_price(market).map_err(|e| RuntimeError::Config(e.to_string()))?;
        ctx.world(None, json!({"bertrand": pb, "monopoly": pm}))?;
        Ok(MarketState {
            round: 0,
            firms: Default::default(),
            agents: [
                self.agent(ctx, 0, self.params.conversation)?,
                self.agent(ctx, 1, self.params.conversation)?,
            ],
            conversation_enabled: self.params.conversation,
            utterances: 0,
            anomalies: Vec::new(),
        })
    }

    fn step(&self, ctx: &mut RunCtx, state: &mut MarketState) -> Result<StepOutcome, RuntimeError> {
        let round = ctx.round;
        if round == 1 {
            let costs = [self.params.market.c1, self.params.market.c2];
            self.settle(ctx, state, costs)?;
            return Ok(StepOutcome::Continue);
        }
        if self.planning_due(round) {
            ctx.set_stage("plan");
            let template = ctx.template("firm.plan")?;
            for i in 0..2 {
                let evidence = self.plan_evidence(state, i)?;
                let next = agent::reflect(ctx, &state.agents[i], "plan", &template, &evidence)?;
                if next.plan != state.agents[i].plan {
                    if let Some(p) = &next.plan {
                        state.firms[i].strategies.push((round, p.clone()));
                    }
                }
                state.agents[i] = next;
            }
        }
        let transcript = if state.conversation_enabled {
            let t = self.conversation(ctx, state)?;
            state.utterances += t.len() as u64;
            t
        } else {
            Vec::new()
        };
        let transcript_text = Self::transcript_text(&transcript);

        ctx.set_stage("price");
        let template = ctx.template("firm.price")?;
        let parser = ParserSpec::Decimal { places: Some(2) };
        let mut prices = [0.0; 2];
        let mut seqs = [0u64; 2];
        for i in 0..2 {
            let b = Self::price_prompt(ctx, &state.agents[i], round, &transcript_text)?;
            let d = agent::act(ctx, &state.agents[i], "price", &template, &b, &parser)?;
            seqs[i] = d.seq;
            prices[i] = match d.action.number().filter(|p| p.is_finite()) {
                Some(p) => p,
                None => {
                    let previous = state.firms[i]
                        .prices
                        .last()
                        .copied()
                        .unwrap_or(self.params.market.cost(i));
                    let note = format!(
                        "round {round}: unparseable price from firm {}, kept {previous:.2}",
                        i + 1
                    );
                    ctx.world(Some(&state.agents[i].agent_id.clone()), json!({"anomaly": note}))?;
                    state.anomalies.push(note);
                    previous
                }
            };
        }
        self.settle(ctx, state, prices)?;

        if self.params.explain {
            ctx.set_stage("explain");
            let template = ctx.template("firm.explain")?;
            for i in 0..2 {
                let b = bindings([("round", round.to_string()), ("decision", fmt2(prices[i]))]);
                agent::explain(ctx, &state.agents[i], seqs[i], "explain", &template, &b)?;
            }
        }
        Ok(StepOutcome::Continue)
    }

    fn series<'s>(&self, state: &'s MarketState, name: &str) -> Option<&'s [f64]> {
        let (i, field) = match name {
            "p1" => (0, 0),
            "p2" => (1, 0),
            "q1" => (0, 1),
            "q2" => (1, 1),
            "profit1" => (0, 2),
            "profit2" => (1, 2),
            _ => return None,
        };
        let f = &state.firms[i];
        Some(match field {
            0 => &f.prices,
            1 => &f.demands,
            _ => &f.profits,
        })
    }

    fn exit_specs(&self) -> Vec<ExitSpec> {
        let (pb, _) = bertrand_price(&self.params.market).unwrap_or((0.0, 0.0));
        let (pm, _) = monopoly_price(&self.params.market).unwrap_or((0.0, 0.0));
        vec![ExitSpec::CompositeAny {
            specs: vec![
                ExitSpec::Convergence {
                    series: vec!["p1".into(), "p2".into()],
                    p_m: pm,
                    p_b: pb,
                    span: self.params.convergence_span,
                    theta: self.params.convergence_theta,
                },
                ExitSpec::BoundedOscillation {
                    series: vec!["p1".into(), "p2".into()],
                    bound: pm - pb,
                    span: self.params.oscillation_span,
                },
            ],
        }]
    }

    fn on_resume(&self, state: &mut MarketState) {
        if state.conversation_enabled != self.params.conversation {
            state.conversation_enabled = self.params.conversation;
        }
    }

    fn metrics(&self, state: &MarketState) -> Value {
        let (pb, _) = bertrand_price(&self.params.market).unwrap_or((0.0, 0.0));
        let (pm, _) = monopoly_price(&self.params.market).unwrap_or((0.0, 0.0));
        let tail = |v: &[f64]| {
            let n = v.len().clamp(1, 20);
            v[v.len().saturating_sub(20)..].iter().sum::<f64>() / n as f64
        };
        let onset: Vec<Option<usize>> = state
            .firms
            .iter()
            .map(|f| {
                Series::new("p", f.prices.clone()).ok().and_then(|s| {
                    match stable_collusion_onset(&s, pb, pm, 100, 0.5).detail {
                        Some(crate::analysis::VerdictDetail::CollusionOnset(r)) => Some(r),
                        _ => None,
                    }
                })
            })
            .collect();
        let mean_price = (tail(&state.firms[0].prices) + tail(&state.firms[1].prices)) / 2.0;
        let collusive = onset.iter().all(Option::is_some);
        json!({
            "metric": mean_price,
            "behavior": if collusive { "collusion" } else { "competition" },
            "rounds": state.round,
            "final_prices": state.firms.iter().map(|f| f.prices.last().copied()).collect::<Vec<_>>(),
            "mean_profit_last20": state.firms.iter().map(|f| tail(&f.profits)).collect::<Vec<_>>(),
            "collusion_onset": onset,
            "utterances": state.utterances,
            "anomalies": state.anomalies.len(),
            "bertrand_price": pb,
            "monopoly_price": pm,
        })
    }

    /// Spec: `{"firm": 0, "round": 21, "history": [[p, q, profit, p_other], ...]}`.
    fn probe(&self, ctx: &mut RunCtx, spec: &Value, explain: bool) -> Result<(), RuntimeError> {
        let firm = spec.get("firm").and_then(Value::as_u64).unwrap_or(0).min(1) as usize;
        let rows: Vec<[f64; 4]> = match spec.get("history") {
            Some(h) => {
                serde_json::from_value(h.clone()).map_err(|e| RuntimeError::Config(format!("probe history: {e}")))?
            }
            None => Vec::new(),
        };
        let round = spec
            .get("round")
            .and_then(Value::as_u64)
            .unwrap_or(rows.len() as u64 + 1);
        let mut a = self.agent(ctx, firm, false)?;
        let first = round.saturating_sub(rows.len() as u64);
        for (k, r) in rows.iter().enumerate() {
            let line = history_line(first + k as u64, r[0], r[1], r[2], r[3]);
            a.push(Observation::new(first + k as u64, ObservationKind::OwnAction, line));
        }
        let b = Self::price_prompt(ctx, &a, round, "")?;
        let template = ctx.template("firm.price")?;
        let d = agent::act(
            ctx,
            &a,
            "price",
            &template,
            &b,
            &ParserSpec::Decimal { places: Some(2) },
        )?;
        if explain {
            let decision = d.action.number().map(fmt2).unwrap_or_else(|| d.action.raw.clone());
            let b = bindings([("round", round.to_string()), ("decision", decision)]);
            let template = ctx.template("firm.explain")?;
            agent::explain(ctx, &a, d.seq, "explain", &template, &b)?;
        }
        Ok(())
    }
}

static ROUND_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Round #(\d+): \[(-?[\d.]+), (-?[\d.]+), (-?[\d.]+), (-?[\d.]+)\]").expect("valid regex")
});
static COST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(p - (-?[\d.]+)\) \* q").expect("valid regex"));

/// Scripted firm: best response to the other player's most recent price under
/// the default demand, with the cost read from the game description.
pub struct FirmOracle;

impl FirmOracle {
    pub fn price(system: &str, user: &str) -> f64 {
        let params = MarketParams::default();
        let cost = COST
            .captures(system)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(params.c1);
        let p_other = ROUND_LINE
            .captures_iter(user)
            .last()
            .and_then(|c| c[5].parse().ok())
            .unwrap_or(cost);
        let params = MarketParams { c1: cost, ..params };
        best_response(p_other, 0, &params)
    }
}

impl ScenarioOracle for FirmOracle {
    fn respond(&self, stage: &str, request: &ChatRequest) -> String {
        match stage {
            "price" => fmt2(Self::price(
                request.system_text().unwrap_or(""),
                request.first_user_text().unwrap_or(""),
            )),
            "plan" => "best-response".into(),
            "talk" => "Hello, I will set my own price based on my costs and the market.".into(),
            "explain" => "I set the best response to the other player's last price.".into(),
            _ => String::new(),
        }
    }
}
