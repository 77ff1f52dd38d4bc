//! Plea bargaining: sampled defendant personas answer plea offers across
//! fairness, comparative and risk conditions, plus a 36-item social
//! functioning questionnaire.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{self, AgentState, ParserSpec};
use crate::analysis::{two_proportion_test, Table};
use crate::promptkit::{bindings, Bindings};
use crate::provider::{ChatRequest, LlmSettings, ScenarioOracle};
use crate::runtime::{ExitSpec, RunCtx, RuntimeError, Scenario, SimRng, StepOutcome};

pub const NAME: &str = "plea";
pub const DEFAULT_DEMOGRAPHICS: &str = include_str!("../../assets/plea_demographics.csv");
pub const DEFAULT_TCU_ITEMS: &str = include_str!("../../assets/tcu_items.csv");
pub const DIMENSIONS: [&str; 5] = ["gender", "ethnicity", "education", "occupation", "location"];
pub const TCU_ITEMS: usize = 36;
pub const TCU_BATCH: usize = 18;

#[derive(Debug, Error, PartialEq)]
pub enum PleaError {
    #[error("malformed demographics table: {0}")]
    MalformedTable(String),
    #[error("malformed questionnaire: {0}")]
    MalformedQuestionnaire(String),
    #[error("key covers {key} items but the sheet has {sheet}")]
    KeyMismatch { key: usize, sheet: usize },
}

impl From<PleaError> for RuntimeError {
    fn from(e: PleaError) -> Self {
        RuntimeError::Config(e.to_string())
    }
}

/// Source of random numbers for persona sampling.
pub trait Draws {
    fn uniform(&mut self, purpose: &str) -> Result<f64, RuntimeError>;
    fn standard_normal(&mut self, purpose: &str) -> Result<f64, RuntimeError>;
}

impl Draws for RunCtx {
    fn uniform(&mut self, purpose: &str) -> Result<f64, RuntimeError> {
        RunCtx::uniform(self, purpose)
    }

    fn standard_normal(&mut self, purpose: &str) -> Result<f64, RuntimeError> {
        RunCtx::standard_normal(self, purpose)
    }
}

impl Draws for SimRng {
    fn uniform(&mut self, _purpose: &str) -> Result<f64, RuntimeError> {
        Ok(self.next_f64())
    }

    fn standard_normal(&mut self, _purpose: &str) -> Result<f64, RuntimeError> {
        Ok(SimRng::standard_normal(self))
    }
}

/// Category weights per demographic dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicsTable {
    pub dimensions: BTreeMap<String, Vec<(String, f64)>>,
    /// SHA-256 of the source text.
    pub checksum: String,
}

#[derive(Debug, Deserialize)]
struct DemographicRow {
    dimension: String,
    category: String,
    weight: f64,
}

impl DemographicsTable {
    /// Parses `dimension,category,weight` rows. Every dimension must be
    /// present with non-negative weights summing to 1.
    pub fn parse(text: &str) -> Result<Self, PleaError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut dimensions: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for row in reader.deserialize::<DemographicRow>() {
            let row = row.map_err(|e| PleaError::MalformedTable(e.to_string()))?;
            if !DIMENSIONS.contains(&row.dimension.as_str()) {
                return Err(PleaError::MalformedTable(format!(
                    "unknown dimension `{}`",
                    row.dimension
                )));
            }
            if !(row.weight >= 0.0 && row.weight.is_finite()) {
                return Err(PleaError::MalformedTable(format!("bad weight for `{}`", row.category)));
            }
            dimensions
                .entry(row.dimension)
                .or_default()
                .push((row.category, row.weight));
        }
        for dim in DIMENSIONS {
            let Some(cats) = dimensions.get(dim) else {
                return Err(PleaError::MalformedTable(format!("missing dimension `{dim}`")));
            };
            let total: f64 = cats.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(PleaError::MalformedTable(format!("`{dim}` weights sum to {total}")));
            }
        }
        Ok(Self {
            dimensions,
            checksum: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_DEMOGRAPHICS).expect("shipped demographics table is valid")
    }

    fn draw(&self, dim: &str, u: f64) -> &str {
        let cats = &self.dimensions[dim];
        let mut acc = 0.0;
        for (cat, w) in cats {
            acc += w;
            if u < acc {
                return cat;
            }
        }
        cats.iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map_or(cats[0].0.as_str(), |(c, _)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleaPersona {
    pub gender: String,
    pub ethnicity: String,
    pub education: String,
    pub occupation: String,
    pub location: String,
    /// Risk-taking and social-support adjustment sentence is added.
    pub adjusted: bool,
    pub temperature: f64,
}

impl PleaPersona {
    pub fn describe(&self) -> String {
        [
            &self.gender,
            &self.ethnicity,
            &self.education,
            &self.occupation,
            &self.location,
        ]
        .map(String::as_str)
        .join(", ")
    }
}

/// Maps a draw `x ~ N(1, 1)` so that ±3σ lands on 0 and 2.
pub fn temperature_from_normal(x: f64) -> f64 {
    (1.0 + (x - 1.0) / 3.0).clamp(0.0, 2.0)
}

pub fn sample_temperature(rng: &mut impl Draws) -> Result<f64, RuntimeError> {
    let x = 1.0 + rng.standard_normal("plea.temperature")?;
    Ok(temperature_from_normal(x))
}

pub fn sample_persona(
    table: &DemographicsTable,
    adjustment_probability: f64,
    rng: &mut impl Draws,
) -> Result<PleaPersona, RuntimeError> {
    let mut picks = Vec::with_capacity(DIMENSIONS.len());
    for dim in DIMENSIONS {
        let u = rng.uniform("plea.demographics")?;
        picks.push(table.draw(dim, u).to_string());
    }
    let temperature = sample_temperature(rng)?;
    let adjusted = rng.uniform("plea.adjustment")? < adjustment_probability;
    let [gender, ethnicity, education, occupation, location]: [String; 5] = picks.try_into().expect("five dimensions");
    Ok(PleaPersona {
        gender,
        ethnicity,
        education,
        occupation,
        location,
        adjusted,
        temperature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcuScale {
    Hostility,
    RiskTaking,
    SocialSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcuItem {
    pub item: usize,
    pub scale: TcuScale,
    pub reversed: bool,
    pub text: String,
}

/// Parses `item,scale,reversed,text` rows; items must be numbered 1..=n.
pub fn parse_questionnaire(text: &str) -> Result<Vec<TcuItem>, PleaError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut items = Vec::new();
    for row in reader.deserialize::<TcuItem>() {
        items.push(row.map_err(|e| PleaError::MalformedQuestionnaire(e.to_string()))?);
    }
    for (k, item) in items.iter().enumerate() {
        if item.item != k + 1 {
            return Err(PleaError::MalformedQuestionnaire(format!(
                "item {} out of order",
                item.item
            )));
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likert {
    DisagreeStrongly,
    Disagree,
    Uncertain,
    Agree,
    AgreeStrongly,
}

impl Likert {
    pub fn score(self) -> u8 {
        match self {
            Self::DisagreeStrongly => 1,
            Self::Disagree => 2,
            Self::Uncertain => 3,
            Self::Agree => 4,
            Self::AgreeStrongly => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DisagreeStrongly => "disagree strongly",
            Self::Disagree => "disagree",
            Self::Uncertain => "uncertain",
            Self::Agree => "agree",
            Self::AgreeStrongly => "agree strongly",
        }
    }

    /// Finds an answer phrase in `text`, longest phrases first.
    pub fn find(text: &str) -> Option<Self> {
        let lower = text.to_lowercase();
        const PHRASES: [(&str, Likert); 7] = [
            ("disagree strongly", Likert::DisagreeStrongly),
            ("strongly disagree", Likert::DisagreeStrongly),
            ("agree strongly", Likert::AgreeStrongly),
            ("strongly agree", Likert::AgreeStrongly),
            ("disagree", Likert::Disagree),
            ("uncertain", Likert::Uncertain),
            ("agree", Likert::Agree),
        ];
        PHRASES.iter().find(|(p, _)| lower.contains(p)).map(|(_, l)| *l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcuAnswerSheet {
    pub answers: Vec<Likert>,
    /// 0-based indices that had no readable answer and were set to uncertain.
    pub declined: Vec<usize>,
}

static LEADING_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*[.):-]").expect("valid regex"));

/// Reads answers for items `first..first + count` (0-based) from one batch
/// reply. Numbered lines go to their item; unnumbered lines fill the next
/// open slot.
pub fn parse_batch(reply: &str, first: usize, count: usize) -> (Vec<Option<Likert>>, Vec<usize>) {
    let mut slots: Vec<Option<Likert>> = vec![None; count];
    let mut cursor = 0;
    for line in reply.lines() {
        let Some(answer) = Likert::find(line) else { continue };
        let numbered = LEADING_NUMBER
            .captures(line)
            .and_then(|c| c[1].parse::<usize>().ok())
            .filter(|n| (first + 1..=first + count).contains(n));
        let slot = match numbered {
            Some(n) => n - first - 1,
            None => {
                while cursor < count && slots[cursor].is_some() {
                    cursor += 1;
                }
                if cursor == count {
                    continue;
                }
                cursor
            }
        };
        if slots[slot].is_none() {
            slots[slot] = Some(answer);
        }
    }
    let declined = (0..count).filter(|&k| slots[k].is_none()).map(|k| first + k).collect();
    (slots, declined)
}

/// Assembles a sheet from the two batch replies.
pub fn sheet_from_batches(replies: &[&str]) -> TcuAnswerSheet {
    let mut answers = Vec::with_capacity(TCU_ITEMS);
    let mut declined = Vec::new();
    for (b, reply) in replies.iter().enumerate() {
        let (slots, gaps) = parse_batch(reply, b * TCU_BATCH, TCU_BATCH);
        answers.extend(slots.into_iter().map(|s| s.unwrap_or(Likert::Uncertain)));
        declined.extend(gaps);
    }
    while answers.len() < TCU_ITEMS {
        declined.push(answers.len());
        answers.push(Likert::Uncertain);
    }
    TcuAnswerSheet { answers, declined }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcuScores {
    pub hostility: f64,
    pub risk_taking: f64,
    pub social_support: f64,
}

/// Scale score = mean item score × 10, reversed items scored `6 - x`.
pub fn score_tcu(sheet: &TcuAnswerSheet, key: &[TcuItem]) -> Result<TcuScores, PleaError> {
    if key.len() != sheet.answers.len() {
        return Err(PleaError::KeyMismatch {
            key: key.len(),
            sheet: sheet.answers.len(),
        });
    }
    let mut sums: BTreeMap<TcuScale, (f64, usize)> = BTreeMap::new();
    for (answer, item) in sheet.answers.iter().zip(key) {
        let x = f64::from(answer.score());
        let x = if item.reversed { 6.0 - x } else { x };
        let e = sums.entry(item.scale).or_default();
        e.0 += x;
        e.1 += 1;
    }
    let scale = |s: TcuScale| sums.get(&s).map_or(f64::NAN, |(t, n)| t / *n as f64 * 10.0);
    Ok(TcuScores {
        hostility: scale(TcuScale::Hostility),
        risk_taking: scale(TcuScale::RiskTaking),
        social_support: scale(TcuScale::SocialSupport),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfPerception {
    Guilty,
    Innocent,
    Uncertain,
}

impl SelfPerception {
    pub const ALL: [SelfPerception; 3] = [Self::Guilty, Self::Innocent, Self::Uncertain];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Guilty => "guilty",
            Self::Innocent => "innocent",
            Self::Uncertain => "uncertain",
        }
    }

    /// Fills "In your heart, you ___ the speed limit."
    pub fn phrase(self) -> &'static str {
        match self {
            Self::Guilty => "know that you exceeded",
            Self::Innocent => "know that you did not exceed",
            Self::Uncertain => "are not sure whether you exceeded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparative {
    None,
    Better,
    Similar,
    Worse,
}

impl Comparative {
    pub fn typical_sentence(self) -> Option<u32> {
        match self {
            Self::None => None,
            Self::Better => Some(45),
            Self::Similar => Some(30),
            Self::Worse => Some(15),
        }
    }

    fn compared_to(self) -> &'static str {
        match self {
            Self::None => "",
            Self::Better => "shorter than",
            Self::Similar => "the same as",
            Self::Worse => "longer than",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShot {
    Ex1,
    Ex2,
    Ex3,
}

struct Example {
    self_perception: &'static str,
    probability: u32,
    period: u32,
    answer: &'static str,
}

const EXAMPLES: [Example; 3] = [
    Example {
        self_perception: "are not sure whether you left",
        probability: 80,
        period: 9,
        answer: "I am not sure I caused the fire, and I do not want to admit to something I may not have done.\nreject",
    },
    Example {
        self_perception: "are not sure whether you left",
        probability: 90,
        period: 3,
        answer: "Even with high odds against me, I will not plead guilty to a death I am not sure I caused.\nreject",
    },
    Example {
        self_perception: "remember that you left",
        probability: 95,
        period: 2,
        answer: "I know I left the heater on and a conviction is almost certain, so two months is far better than twelve.\naccept",
    },
];

/// The few-shot section for the selected examples, in example order.
pub fn few_shot_block(ctx: &RunCtx, selected: &[FewShot]) -> Result<String, RuntimeError> {
    let mut chosen: Vec<FewShot> = selected.to_vec();
    chosen.sort();
    chosen.dedup();
    if chosen.is_empty() {
        return Ok(String::new());
    }
    let mut parts = vec![ctx.render("plea.few_shot_header", &Bindings::new())?];
    for (k, ex) in chosen.iter().enumerate() {
        let e = &EXAMPLES[*ex as usize];
        parts.push(ctx.render(
            "plea.few_shot_example",
            &bindings([
                ("EID", format!("#{}", k + 1)),
                ("self-perception", e.self_perception.to_string()),
                ("probability", format!("{}%", e.probability)),
                ("period", e.period.to_string()),
                ("answer", e.answer.to_string()),
            ]),
        )?);
    }
    Ok(parts.join("\n\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    /// Period 30 at 50% conviction probability.
    Substantive,
    /// The same offer against three typical sentences, one persona each.
    Comparative,
    /// Five period/probability pairs of equal expected sentence.
    Risk,
    /// The 36-item questionnaire.
    Tcu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PleaCase {
    pub self_perception: SelfPerception,
    pub period_months: u32,
    pub conviction_probability: u32,
    pub comparative: Comparative,
}

impl PleaCase {
    pub fn label(&self) -> String {
        match self.comparative.typical_sentence() {
            Some(t) => format!("{}m/{}% vs {t}m", self.period_months, self.conviction_probability),
            None => format!("{}m/{}%", self.period_months, self.conviction_probability),
        }
    }
}

pub const RISK_GRID: [(u32, u32); 5] = [(3, 5), (18, 30), (30, 50), (42, 70), (57, 95)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub factor: Factor,
    pub self_perception: Option<SelfPerception>,
}

impl Block {
    /// Case lists answered by each agent of the block. Comparative agents
    /// answer all three cases; other factors give one case per agent list.
    pub fn case_groups(&self) -> Vec<Vec<PleaCase>> {
        let sp = self.self_perception.unwrap_or(SelfPerception::Uncertain);
        let case = |period, probability, comparative| PleaCase {
            self_perception: sp,
            period_months: period,
            conviction_probability: probability,
            comparative,
        };
        match self.factor {
            Factor::Substantive => vec![vec![case(30, 50, Comparative::None)]],
            Factor::Comparative => vec![[Comparative::Better, Comparative::Similar, Comparative::Worse]
                .map(|c| case(30, 50, c))
                .to_vec()],
            Factor::Risk => RISK_GRID
                .iter()
                .map(|&(p, q)| vec![case(p, q, Comparative::None)])
                .collect(),
            Factor::Tcu => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PleaParams {
    pub n_agents: usize,
    pub factors: Vec<Factor>,
    pub self_perceptions: Vec<SelfPerception>,
    pub few_shot: Vec<FewShot>,
    pub adjustment_probability: f64,
    pub sample_temperature: bool,
    /// CSV text replacing the shipped demographics table.
    pub demographics: Option<String>,
    /// CSV text replacing the shipped questionnaire and key.
    pub questionnaire: Option<String>,
    pub settings: LlmSettings,
}

impl Default for PleaParams {
    fn default() -> Self {
        Self {
            n_agents: 200,
            factors: vec![Factor::Substantive, Factor::Comparative, Factor::Risk],
            self_perceptions: SelfPerception::ALL.to_vec(),
            few_shot: Vec::new(),
            adjustment_probability: 0.5,
            sample_temperature: true,
            demographics: None,
            questionnaire: None,
            settings: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub factor: Option<Factor>,
    pub case: Option<PleaCase>,
    pub n: usize,
    pub accepted: usize,
    /// Replies that did not follow the two-line format; counted as rejects.
    pub nonconforming: usize,
    /// Agents whose request failed in transport; not in `n`.
    pub excluded: usize,
}

impl CellResult {
    pub fn wtap(&self) -> Option<f64> {
        (self.n > 0).then(|| self.accepted as f64 / self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcuRecord {
    pub agent: String,
    pub persona: PleaPersona,
    pub sheet: TcuAnswerSheet,
    pub scores: TcuScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleaState {
    pub blocks: Vec<Block>,
    pub next_block: usize,
    pub cells: Vec<CellResult>,
    pub tcu: Vec<TcuRecord>,
    pub demographics_checksum: String,
    pub anomalies: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PleaDecision {
    Accept,
    Reject,
}

pub struct PleaScenario {
    pub params: PleaParams,
    table: DemographicsTable,
    questionnaire: Vec<TcuItem>,
}

impl PleaScenario {
    pub fn new(params: PleaParams) -> Result<Self, PleaError> {
        let table = match &params.demographics {
            Some(text) => DemographicsTable::parse(text)?,
            None => DemographicsTable::builtin(),
        };
        let questionnaire = parse_questionnaire(params.questionnaire.as_deref().unwrap_or(DEFAULT_TCU_ITEMS))?;
        if questionnaire.len() != TCU_ITEMS {
            return Err(PleaError::KeyMismatch {
                key: questionnaire.len(),
                sheet: TCU_ITEMS,
            });
        }
        Ok(Self {
            params,
            table,
            questionnaire,
        })
    }

    pub fn table(&self) -> &DemographicsTable {
        &self.table
    }

    fn blocks(&self) -> Vec<Block> {
        let mut blocks = Vec::new();
        for &factor in &self.params.factors {
            if factor == Factor::Tcu {
                blocks.push(Block {
                    factor,
                    self_perception: None,
                });
                continue;
            }
            for &sp in &self.params.self_perceptions {
                blocks.push(Block {
                    factor,
                    self_perception: Some(sp),
                });
            }
        }
        blocks
    }

    fn agent(&self, id: String, persona: &PleaPersona) -> AgentState {
        let mut settings = self.params.settings.clone();
        if self.params.sample_temperature {
            settings = settings.with_temperature(persona.temperature);
        }
        let mut a = AgentState::new(id, settings, 1).personalize(persona.describe());
        a.attrs = json!({"adjusted": persona.adjusted});
        a
    }

    fn adjustment(ctx: &RunCtx, persona: &PleaPersona) -> Result<String, RuntimeError> {
        if persona.adjusted {
            ctx.render("plea.adjustment", &Bindings::new())
        } else {
            Ok(String::new())
        }
    }

    fn plea_bindings(&self, ctx: &RunCtx, persona: &PleaPersona, case: &PleaCase) -> Result<Bindings, RuntimeError> {
        let crime = ctx.render(
            "plea.crime",
            &bindings([("self-perception", case.self_perception.phrase())]),
        )?;
        let comparative = match case.comparative.typical_sentence() {
            Some(typical) => ctx.render(
                "plea.comparative",
                &bindings([
                    ("period", case.period_months.to_string()),
                    ("compared_to", case.comparative.compared_to().to_string()),
                    ("typical_sentence", format!("{typical}-month suspension")),
                ]),
            )?,
            None => String::new(),
        };
        let offer = ctx.render(
            "plea.offer",
            &bindings([
                ("period", case.period_months.to_string()),
                ("probability", format!("{}%", case.conviction_probability)),
                ("comparative information", comparative),
            ]),
        )?;
        Ok(bindings([
            ("few-shot examples", few_shot_block(ctx, &self.params.few_shot)?),
            ("adjustment", Self::adjustment(ctx, persona)?),
            ("crime scenario", crime),
            ("plea bargain", offer),
        ]))
    }

    /// One plea prompt. `None` when the request failed in transport.
    fn decide(
        &self,
        ctx: &mut RunCtx,
        agent: &AgentState,
        persona: &PleaPersona,
        case: &PleaCase,
    ) -> Result<Option<(PleaDecision, bool)>, RuntimeError> {
        ctx.set_stage("plea");
        let b = self.plea_bindings(ctx, persona, case)?;
        let template = ctx.template("plea.instruction")?;
        let parser = ParserSpec::two_line(["accept", "reject"]);
        match agent::act(ctx, agent, "plea", &template, &b, &parser) {
            Ok(d) => {
                let decision = match d.action.choice() {
                    Some("accept") => PleaDecision::Accept,
                    _ => PleaDecision::Reject,
                };
                Ok(Some((decision, d.action.conforming)))
            }
            Err(RuntimeError::Provider(e)) if !e.is_fatal() => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn tcu(
        &self,
        ctx: &mut RunCtx,
        agent: &AgentState,
        persona: &PleaPersona,
    ) -> Result<Option<TcuAnswerSheet>, RuntimeError> {
        ctx.set_stage("tcu");
        let template = ctx.template("plea.tcu")?;
        let adjustment = Self::adjustment(ctx, persona)?;
        let mut replies = Vec::with_capacity(2);
        for batch in self.questionnaire.chunks(TCU_BATCH) {
            let items = batch
                .iter()
                .map(|i| format!("{}. {}", i.item, i.text))
                .collect::<Vec<_>>()
                .join("\n");
            let b = bindings([("adjustment", adjustment.clone()), ("items", items)]);
            match agent::act(ctx, agent, "tcu", &template, &b, &ParserSpec::FreeText) {
                Ok(d) => replies.push(d.action.raw),
                Err(RuntimeError::Provider(e)) if !e.is_fatal() => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
        Ok(Some(sheet_from_batches(&refs)))
    }

    fn cell_index(state: &mut PleaState, factor: Factor, case: PleaCase) -> usize {
        match state
            .cells
            .iter()
            .position(|c| c.factor == Some(factor) && c.case == Some(case))
        {
            Some(i) => i,
            None => {
                state.cells.push(CellResult {
                    factor: Some(factor),
                    case: Some(case),
                    ..CellResult::default()
                });
                state.cells.len() - 1
            }
        }
    }

    /// Pairwise self-perception comparisons per condition.
    pub fn comparisons(state: &PleaState) -> Vec<Value> {
        let mut out = Vec::new();
        for (i, a) in state.cells.iter().enumerate() {
            for b in &state.cells[i + 1..] {
                let (Some(ca), Some(cb)) = (a.case, b.case) else {
                    continue;
                };
                let same_condition = a.factor == b.factor
                    && ca.period_months == cb.period_months
                    && ca.conviction_probability == cb.conviction_probability
                    && ca.comparative == cb.comparative;
                if !same_condition || a.n == 0 || b.n == 0 {
                    continue;
                }
                if let Ok(t) = two_proportion_test(a.accepted as u64, a.n as u64, b.accepted as u64, b.n as u64) {
                    out.push(json!({
                        "factor": a.factor,
                        "condition": ca.label(),
                        "a": ca.self_perception.as_str(),
                        "b": cb.self_perception.as_str(),
                        "p_value": t.p_two_sided,
                        "method": t.method,
                    }));
                }
            }
        }
        out
    }
}

impl Scenario for PleaScenario {
    type State = PleaState;

    const NAME: &'static str = NAME;

    fn params(&self) -> Value {
        serde_json::to_value(&self.params).unwrap_or(Value::Null)
    }

    fn stages(&self) -> &'static [&'static str] {
        &["persona", "tcu", "plea"]
    }

    fn init(&self, ctx: &mut RunCtx) -> Result<PleaState, RuntimeError> {
        let blocks = self.blocks();
        if blocks.is_empty() {
            return Err(RuntimeError::Config("no plea factors selected".into()));
        }
        ctx.world(
            None,
            json!({"demographics_checksum": self.table.checksum, "blocks": blocks}),
        )?;
        Ok(PleaState {
            blocks,
            next_block: 0,
            cells: Vec::new(),
            tcu: Vec::new(),
            demographics_checksum: self.table.checksum.clone(),
            anomalies: Vec::new(),
        })
    }

    fn step(&self, ctx: &mut RunCtx, state: &mut PleaState) -> Result<StepOutcome, RuntimeError> {
        let Some(block) = state.blocks.get(state.next_block).cloned() else {
            return Ok(StepOutcome::Endpoint("battery complete".into()));
        };
        let tag = state.next_block;
        let groups = if block.factor == Factor::Tcu {
            vec![Vec::new()]
        } else {
            block.case_groups()
        };
        for (g, cases) in groups.iter().enumerate() {
            for k in 0..self.params.n_agents {
                ctx.set_stage("persona");
                let persona = sample_persona(&self.table, self.params.adjustment_probability, ctx)?;
                let id = format!("b{tag}g{g}a{k}");
                ctx.world(Some(&id), json!({"persona": persona}))?;
                let agent = self.agent(id.clone(), &persona);
                if block.factor == Factor::Tcu {
                    match self.tcu(ctx, &agent, &persona)? {
                        Some(sheet) => {
                            let scores = score_tcu(&sheet, &self.questionnaire)?;
                            ctx.world(
                                Some(&id),
                                json!({"tcu": {"scores": scores, "declined": sheet.declined}}),
                            )?;
                            state.tcu.push(TcuRecord {
                                agent: id,
                                persona,
                                sheet,
                                scores,
                            });
                        }
                        None => state.anomalies.push(format!("{id}: questionnaire request failed")),
                    }
                    continue;
                }
                for case in cases {
                    let cell = Self::cell_index(state, block.factor, *case);
                    match self.decide(ctx, &agent, &persona, case)? {
                        Some((decision, conforming)) => {
                            let c = &mut state.cells[cell];
                            c.n += 1;
                            c.accepted += usize::from(decision == PleaDecision::Accept);
                            c.nonconforming += usize::from(!conforming);
                            ctx.world(
                                Some(&id),
                                json!({"decision": {"case": case, "decision": decision, "conforming": conforming}}),
                            )?;
                        }
                        None => {
                            state.cells[cell].excluded += 1;
                            state
                                .anomalies
                                .push(format!("{id}: request failed for {}", case.label()));
                        }
                    }
                }
            }
        }
        state.next_block += 1;
        if state.next_block == state.blocks.len() {
            return Ok(StepOutcome::Endpoint("battery complete".into()));
        }
        Ok(StepOutcome::Continue)
    }

    fn series<'s>(&self, _state: &'s PleaState, _name: &str) -> Option<&'s [f64]> {
        None
    }

    fn exit_specs(&self) -> Vec<ExitSpec> {
        vec![ExitSpec::Endpoint]
    }

    fn metrics(&self, state: &PleaState) -> Value {
        let n: usize = state.cells.iter().map(|c| c.n).sum();
        let accepted: usize = state.cells.iter().map(|c| c.accepted).sum();
        let overall = if n > 0 { accepted as f64 / n as f64 } else { 0.0 };
        let cells: Vec<Value> = state
            .cells
            .iter()
            .map(|c| {
                json!({
                    "factor": c.factor,
                    "case": c.case,
                    "n": c.n,
                    "accepted": c.accepted,
                    "nonconforming": c.nonconforming,
                    "excluded": c.excluded,
                    "wtap": c.wtap(),
                })
            })
            .collect();
        let mean = |f: fn(&TcuScores) -> f64| {
            (!state.tcu.is_empty())
                .then(|| state.tcu.iter().map(|r| f(&r.scores)).sum::<f64>() / state.tcu.len() as f64)
        };
        json!({
            "metric": overall,
            "behavior": if overall >= 0.5 { "accepts" } else { "rejects" },
            "cells": cells,
            "comparisons": Self::comparisons(state),
            "tcu_means": {
                "hostility": mean(|s| s.hostility),
                "risk_taking": mean(|s| s.risk_taking),
                "social_support": mean(|s| s.social_support),
            },
            "demographics_checksum": state.demographics_checksum,
            "anomalies": state.anomalies.len(),
        })
    }

    /// Spec: `{"self_perception": "guilty", "period": 30, "probability": 50,
    /// "comparative": "none", "persona": {...}}`; missing persona fields are
    /// sampled. There is no explanation stage.
    fn probe(&self, ctx: &mut RunCtx, spec: &Value, _explain: bool) -> Result<(), RuntimeError> {
        let get = |k: &str| spec.get(k).cloned().unwrap_or(Value::Null);
        let bad = |e: serde_json::Error| RuntimeError::Config(format!("probe spec: {e}"));
        let case = PleaCase {
            self_perception: serde_json::from_value(get("self_perception")).unwrap_or(SelfPerception::Uncertain),
            period_months: spec.get("period").and_then(Value::as_u64).unwrap_or(30) as u32,
            conviction_probability: spec.get("probability").and_then(Value::as_u64).unwrap_or(50) as u32,
            comparative: serde_json::from_value(get("comparative")).unwrap_or(Comparative::None),
        };
        let persona = match spec.get("persona") {
            Some(p) => serde_json::from_value(p.clone()).map_err(bad)?,
            None => sample_persona(&self.table, self.params.adjustment_probability, ctx)?,
        };
        let agent = self.agent("defendant".into(), &persona);
        self.decide(ctx, &agent, &persona, &case)?;
        Ok(())
    }
}

/// WTAP by self-perception (rows) and condition (columns).
pub fn wtap_table(state: &PleaState) -> Table {
    let mut conditions: Vec<String> = Vec::new();
    for c in &state.cells {
        if let Some(case) = c.case {
            let label = case.label();
            if !conditions.contains(&label) {
                conditions.push(label);
            }
        }
    }
    let mut header = vec!["self_perception".to_string()];
    header.extend(conditions.iter().cloned());
    let mut table = Table::new(header);
    for sp in SelfPerception::ALL {
        let row_cells: Vec<&CellResult> = state
            .cells
            .iter()
            .filter(|c| c.case.is_some_and(|k| k.self_perception == sp))
            .collect();
        if row_cells.is_empty() {
            continue;
        }
        let mut row = vec![sp.as_str().to_string()];
        for label in &conditions {
            let value = row_cells
                .iter()
                .find(|c| c.case.is_some_and(|k| &k.label() == label))
                .and_then(|c| c.wtap())
                .map_or(String::new(), |w| format!("{w:.4}"));
            row.push(value);
        }
        table.push(row);
    }
    table
}

pub fn tcu_table(state: &PleaState) -> Table {
    let mut table = Table::new(["agent", "hostility", "risk_taking", "social_support"]);
    for r in &state.tcu {
        table.push([
            r.agent.clone(),
            format!("{:.2}", r.scores.hostility),
            format!("{:.2}", r.scores.risk_taking),
            format!("{:.2}", r.scores.social_support),
        ]);
    }
    table
}

static PERIOD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"face a (\d+)-month suspension").expect("valid regex"));
static PROBABILITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"probability of conviction stands at (\d+)%").expect("valid regex"));
static HEART: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"In your heart, you (.+?) the speed limit").expect("valid regex"));
static TYPICAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"is (shorter than|the same as|longer than) the sentence").expect("valid regex"));
static ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^(\d+)\. ").expect("valid regex"));

/// Scripted defendant: accepts when the offered months do not exceed the
/// expected trial sentence (probability × 60) plus a slack of +6 months when
/// guilty and −6 when innocent. Comparative framing shifts the slack by ±3.
pub struct PleaOracle;

impl PleaOracle {
    pub fn accepts(self_perception: SelfPerception, period: u32, probability: u32, comparative: Comparative) -> bool {
        let slack: i64 = match self_perception {
            SelfPerception::Guilty => 6,
            SelfPerception::Innocent => -6,
            SelfPerception::Uncertain => 0,
        } + match comparative {
            Comparative::Better => 3,
            Comparative::Worse => -3,
            Comparative::None | Comparative::Similar => 0,
        };
        // Compare in hundredths of a month to stay exact.
        i64::from(period) * 100 <= i64::from(probability) * 60 + slack * 100
    }

    fn read(text: &str) -> Option<(SelfPerception, u32, u32, Comparative)> {
        let period = PERIOD.captures(text)?[1].parse().ok()?;
        let probability = PROBABILITY.captures(text)?[1].parse().ok()?;
        let heart = HEART.captures(text)?[1].to_string();
        let sp = if heart.contains("not exceed") {
            SelfPerception::Innocent
        } else if heart.contains("not sure") {
            SelfPerception::Uncertain
        } else {
            SelfPerception::Guilty
        };
        let comparative = match TYPICAL.captures(text).map(|c| c[1].to_string()).as_deref() {
            Some("shorter than") => Comparative::Better,
            Some("the same as") => Comparative::Similar,
            Some("longer than") => Comparative::Worse,
            _ => Comparative::None,
        };
        Some((sp, period, probability, comparative))
    }
}

impl ScenarioOracle for PleaOracle {
    fn respond(&self, stage: &str, request: &ChatRequest) -> String {
        let user = request.last_user_text().unwrap_or("");
        match stage {
            "plea" => match Self::read(user) {
                Some((sp, period, probability, comparative)) => {
                    let accept = Self::accepts(sp, period, probability, comparative);
                    let decision = if accept { "accept" } else { "reject" };
                    format!("The offer weighed against the expected trial outcome.\n{decision}")
                }
                None => "I cannot tell.".into(),
            },
            "tcu" => ITEM
                .captures_iter(user)
                .map(|c| format!("{}. uncertain", &c[1]))
                .collect::<Vec<_>>()
                .join("\n"),
            _ => String::new(),
        }
    }
}
