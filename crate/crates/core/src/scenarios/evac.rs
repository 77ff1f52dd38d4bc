//! Room evacuation on a 33×33 grid with three exits. Each round agents go
//! through congestion, optional local conversation, and four decision stages
//! (feelings, exit assessment, exit choice, move) before moves are resolved.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{self, AgentState, ParserSpec};
use crate::analysis::Table;
use crate::promptkit::{bindings, Bindings, PromptTemplate};
use crate::provider::{ChatRequest, LlmSettings, ScenarioOracle};
use crate::runtime::{
    mediate_conversation, Audience, ConversationPolicy, Eligibility, ExitSpec, Participant, RunCtx, RuntimeError,
    Scenario, SpeakOrder, StepOutcome,
};

pub const NAME: &str = "evac";
pub const GRID_SIZE: i32 = 33;
pub const DEFAULT_OBSTACLES: &str = include_str!("../../assets/evac_obstacles.txt");

#[derive(Debug, Error, PartialEq)]
pub enum EvacError {
    #[error("{requested} agents do not fit in {free} free cells")]
    CapacityExceeded { requested: usize, free: usize },
    #[error("obstacle map: {0}")]
    ObstacleMap(String),
}

/// `(row, column)`, 1-based, row 1 at the top.
pub type Pos = (i32, i32);

pub fn chebyshev(a: Pos, b: Pos) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitId {
    Left,
    Bottom,
    Right,
}

impl ExitId {
    /// Also the tie-break order.
    pub const ALL: [ExitId; 3] = [ExitId::Left, ExitId::Bottom, ExitId::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Bottom => "bottom",
            Self::Right => "right",
        }
    }

    pub fn cells(self) -> &'static [Pos] {
        match self {
            Self::Left => &[(16, 1), (17, 1), (18, 1)],
            Self::Bottom => &[(33, 16), (33, 17), (33, 18)],
            Self::Right => &[(17, 33)],
        }
    }
}

impl FromStr for ExitId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown exit `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Floor,
    Wall,
    Obstacle,
    Exit(ExitId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

impl Direction {
    /// Fixed order used to break ties.
    pub const ALL: [Direction; 8] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::UpperLeft,
        Direction::UpperRight,
        Direction::LowerLeft,
        Direction::LowerRight,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Self::Up => (-1, 0),
            Self::Down => (1, 0),
            Self::Left => (0, -1),
            Self::Right => (0, 1),
            Self::UpperLeft => (-1, -1),
            Self::UpperRight => (-1, 1),
            Self::LowerLeft => (1, -1),
            Self::LowerRight => (1, 1),
        }
    }

    pub fn is_diagonal(self) -> bool {
        let (di, dj) = self.delta();
        di != 0 && dj != 0
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Up => "up",
            Self::Down => "down",
            Self::Left => "left",
            Self::Right => "right",
            Self::UpperLeft => "upper-left",
            Self::UpperRight => "upper-right",
            Self::LowerLeft => "lower-left",
            Self::LowerRight => "lower-right",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name)
    }

    pub fn apply(self, p: Pos) -> Pos {
        let (di, dj) = self.delta();
        (p.0 + di, p.1 + dj)
    }

    /// Compass direction from `from` toward `to`; `None` when equal.
    pub fn toward(from: Pos, to: Pos) -> Option<Self> {
        let d = ((to.0 - from.0).signum(), (to.1 - from.1).signum());
        Self::ALL.into_iter().find(|x| x.delta() == d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacGrid {
    cells: Vec<Cell>,
}

impl EvacGrid {
    /// Walled room with the three exits; `obstacles` is a 33-line bitmap
    /// where `#` marks an obstacle. Bitmap cells on the boundary are ignored.
    pub fn new(obstacles: Option<&str>) -> Result<Self, EvacError> {
        let n = GRID_SIZE;
        let mut cells = Vec::with_capacity((n * n) as usize);
        for i in 1..=n {
            for j in 1..=n {
                let boundary = i == 1 || j == 1 || i == n || j == n;
                cells.push(if boundary { Cell::Wall } else { Cell::Floor });
            }
        }
        let mut grid = Self { cells };
        for exit in ExitId::ALL {
            for &p in exit.cells() {
                grid.set(p, Cell::Exit(exit));
            }
        }
        if let Some(map) = obstacles {
            let lines: Vec<&str> = map.lines().filter(|l| !l.trim().is_empty()).collect();
            if lines.len() != n as usize {
                return Err(EvacError::ObstacleMap(format!(
                    "expected {n} rows, found {}",
                    lines.len()
                )));
            }
            for (r, line) in lines.iter().enumerate() {
                let chars: Vec<char> = line.trim_end().chars().collect();
                if chars.len() != n as usize {
                    return Err(EvacError::ObstacleMap(format!(
                        "row {} has {} columns, expected {n}",
                        r + 1,
                        chars.len()
                    )));
                }
                for (c, ch) in chars.into_iter().enumerate() {
                    let p = (r as i32 + 1, c as i32 + 1);
                    match ch {
                        '#' if grid.cell(p) == Cell::Floor => grid.set(p, Cell::Obstacle),
                        '#' | '.' => {}
                        other => {
                            return Err(EvacError::ObstacleMap(format!("unexpected `{other}` at {p:?}")));
                        }
                    }
                }
            }
        }
        Ok(grid)
    }

    fn index(p: Pos) -> Option<usize> {
        let n = GRID_SIZE;
        ((1..=n).contains(&p.0) && (1..=n).contains(&p.1)).then(|| ((p.0 - 1) * n + (p.1 - 1)) as usize)
    }

    fn set(&mut self, p: Pos, cell: Cell) {
        if let Some(k) = Self::index(p) {
            self.cells[k] = cell;
        }
    }

    /// Cells outside the room read as walls.
    pub fn cell(&self, p: Pos) -> Cell {
        Self::index(p).map_or(Cell::Wall, |k| self.cells[k])
    }

    pub fn walkable(&self, p: Pos) -> bool {
        matches!(self.cell(p), Cell::Floor | Cell::Exit(_))
    }

    /// Floor cells in row-major order.
    pub fn free_cells(&self) -> Vec<Pos> {
        let n = GRID_SIZE;
        (1..=n)
            .flat_map(|i| (1..=n).map(move |j| (i, j)))
            .filter(|&p| self.cell(p) == Cell::Floor)
            .collect()
    }

    /// Distance to the nearest cell of `exit` and that cell.
    pub fn exit_distance(&self, p: Pos, exit: ExitId) -> (i32, Pos) {
        exit.cells()
            .iter()
            .map(|&c| (chebyshev(p, c), c))
            .min_by_key(|&(d, _)| d)
            .expect("every exit has cells")
    }

    /// Nearest exit, ties broken left, bottom, right.
    pub fn nearest_exit(&self, p: Pos) -> (ExitId, i32) {
        ExitId::ALL
            .into_iter()
            .map(|e| (e, self.exit_distance(p, e).0))
            .min_by_key(|&(_, d)| d)
            .expect("three exits")
    }
}

/// Which agent stands on each cell.
#[derive(Debug, Clone)]
pub struct Occupancy {
    cells: Vec<Option<usize>>,
}

impl Occupancy {
    pub fn of(agents: &[EvacAgent]) -> Self {
        let mut cells = vec![None; (GRID_SIZE * GRID_SIZE) as usize];
        for (k, a) in agents.iter().enumerate() {
            if a.status.on_grid() {
                if let Some(i) = EvacGrid::index(a.position) {
                    cells[i] = Some(k);
                }
            }
        }
        Self { cells }
    }

    pub fn at(&self, p: Pos) -> Option<usize> {
        EvacGrid::index(p).and_then(|k| self.cells[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub radius: i32,
    pub half_angle_deg: f64,
}

impl Default for FieldOfView {
    fn default() -> Self {
        Self {
            radius: 10,
            half_angle_deg: 45.0,
        }
    }
}

impl FieldOfView {
    /// Whether `cell` lies in the cone from `me` toward `target`.
    pub fn contains(&self, me: Pos, target: Pos, cell: Pos) -> bool {
        if cell == me || chebyshev(me, cell) > self.radius {
            return false;
        }
        let u = ((target.0 - me.0) as f64, (target.1 - me.1) as f64);
        let v = ((cell.0 - me.0) as f64, (cell.1 - me.1) as f64);
        let nu = u.0.hypot(u.1);
        if nu == 0.0 {
            return true;
        }
        let cos = (u.0 * v.0 + u.1 * v.1) / (nu * v.0.hypot(v.1));
        cos >= self.half_angle_deg.to_radians().cos() - 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitView {
    pub exit: ExitId,
    pub distance: i32,
    pub people: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub exits: [ExitView; 3],
    /// Distinct agents in any of the three cones.
    pub visible: usize,
}

pub fn field_of_view(grid: &EvacGrid, occupancy: &Occupancy, me: Pos, fov: &FieldOfView) -> View {
    let r = fov.radius;
    let targets: Vec<Pos> = ExitId::ALL.iter().map(|&e| grid.exit_distance(me, e).1).collect();
    let mut people = [0usize; 3];
    let mut visible = 0;
    for i in me.0 - r..=me.0 + r {
        for j in me.1 - r..=me.1 + r {
            let cell = (i, j);
            if occupancy.at(cell).is_none() {
                continue;
            }
            let mut seen = false;
            for (k, &t) in targets.iter().enumerate() {
                if fov.contains(me, t, cell) {
                    people[k] += 1;
                    seen = true;
                }
            }
            visible += usize::from(seen);
        }
    }
    let exits = [0, 1, 2].map(|k| ExitView {
        exit: ExitId::ALL[k],
        distance: chebyshev(me, targets[k]),
        people: people[k],
    });
    View { exits, visible }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvacPersona {
    pub mental_strong: bool,
    pub physical_strong: bool,
}

impl EvacPersona {
    pub const ALL: [EvacPersona; 4] = [
        EvacPersona::new(true, true),
        EvacPersona::new(true, false),
        EvacPersona::new(false, true),
        EvacPersona::new(false, false),
    ];

    pub const fn new(mental_strong: bool, physical_strong: bool) -> Self {
        Self {
            mental_strong,
            physical_strong,
        }
    }

    pub fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|&p| p == self)
            .expect("persona is one of four")
    }

    /// `{mental}_{physical}`, e.g. `strong_weak`.
    pub fn label(self) -> &'static str {
        ["strong_strong", "strong_weak", "weak_strong", "weak_weak"][self.index()]
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == label)
    }

    /// Means of competitive ability, tolerance ability and tolerance limit.
    pub fn attribute_means(self) -> [f64; 3] {
        if self.physical_strong {
            [3.0, 18.0, 26.0]
        } else {
            [2.0, 16.0, 23.0]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Normal,
    /// Overtaken this round; does not move.
    Critical,
    Disabled,
    Escaped,
}

impl AgentStatus {
    pub fn on_grid(self) -> bool {
        matches!(self, Self::Normal | Self::Critical)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacAgent {
    pub id: usize,
    pub position: Pos,
    pub persona: EvacPersona,
    pub competitive: f64,
    pub tolerance: f64,
    pub tolerance_limit: f64,
    pub status: AgentStatus,
    pub overtaken: u32,
    pub target: Option<ExitId>,
    pub target_history: Vec<ExitId>,
    pub last_position: Option<Pos>,
    pub panic: String,
    /// Exit proximity, people count and crowd density weights (ABM mode).
    pub weights: Option<[f64; 3]>,
    pub escaped_round: Option<u64>,
    pub llm: AgentState,
}

impl EvacAgent {
    pub fn name(id: usize) -> String {
        format!("agent{id}")
    }
}

/// Sum of positive competitive-ability advantages of occupied neighbors.
pub fn congestion_degree(agents: &[EvacAgent], occupancy: &Occupancy, who: usize) -> f64 {
    let me = &agents[who];
    Direction::ALL
        .iter()
        .filter_map(|d| occupancy.at(d.apply(me.position)))
        .map(|k| (agents[k].competitive - me.competitive).max(0.0))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionOutcome {
    Unchanged,
    Overtaken,
    Recovered,
    Disabled,
}

/// Applies one congestion check with the given degree.
pub fn congestion_update(agent: &mut EvacAgent, degree: f64) -> CongestionOutcome {
    if degree > agent.tolerance {
        agent.overtaken += 1;
        if f64::from(agent.overtaken) > agent.tolerance_limit {
            agent.status = AgentStatus::Disabled;
            CongestionOutcome::Disabled
        } else {
            agent.status = AgentStatus::Critical;
            CongestionOutcome::Overtaken
        }
    } else if agent.status == AgentStatus::Critical {
        agent.status = AgentStatus::Normal;
        CongestionOutcome::Recovered
    } else {
        CongestionOutcome::Unchanged
    }
}

/// Settles move intents onto empty cells. When several agents want the same
/// cell one of them is drawn uniformly; the rest stay put. Returns the
/// winning `(agent, destination)` pairs in destination order.
pub fn resolve_moves(ctx: &mut RunCtx, intents: &[(usize, Pos)]) -> Result<Vec<(usize, Pos)>, RuntimeError> {
    let mut by_cell: BTreeMap<Pos, Vec<usize>> = BTreeMap::new();
    for &(agent, dest) in intents {
        by_cell.entry(dest).or_default().push(agent);
    }
    let mut winners = Vec::with_capacity(by_cell.len());
    for (dest, mut contenders) in by_cell {
        contenders.sort_unstable();
        let k = if contenders.len() > 1 {
            ctx.below("evac.conflict", contenders.len() as u64)? as usize
        } else {
            0
        };
        winners.push((contenders[k], dest));
    }
    Ok(winners)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvacMode {
    /// All four stages answered by the model.
    Llm,
    /// Only feelings come from the model; exit choice and movement follow a
    /// weighted rule.
    Abm,
}

pub const PANIC_WORDS: [&str; 5] = ["minimal", "mild", "moderate", "high", "extreme"];

/// Parses `minimal, mild, moderate` into weights on a 0..1 scale.
pub fn parse_panic_weights(text: &str) -> Option<[f64; 3]> {
    let words: Vec<String> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    let weights: Vec<f64> = words
        .iter()
        .filter_map(|w| PANIC_WORDS.iter().position(|p| p == w))
        .map(|k| k as f64 * 0.25)
        .collect();
    (weights.len() == 3).then(|| [weights[0], weights[1], weights[2]])
}

/// Weighted exit score; lower is better. All-zero weights reduce to proximity.
pub fn abm_exit(grid: &EvacGrid, occupancy: &Occupancy, view: &View, weights: [f64; 3]) -> ExitId {
    let span = f64::from(GRID_SIZE - 1);
    let total = view.exits.iter().map(|e| e.people).max().unwrap_or(0).max(1) as f64;
    let proximity = if weights.iter().all(|&w| w == 0.0) {
        1.0
    } else {
        weights[0]
    };
    let score = |e: &ExitView| {
        let density = exit_density(grid, occupancy, e.exit);
        proximity * f64::from(e.distance) / span + weights[1] * e.people as f64 / total + weights[2] * density
    };
    let mut best = view.exits[0];
    for e in &view.exits[1..] {
        if score(e) < score(&best) - 1e-12 {
            best = *e;
        }
    }
    best.exit
}

/// Occupied fraction of floor cells within Chebyshev distance 3 of the exit.
pub fn exit_density(grid: &EvacGrid, occupancy: &Occupancy, exit: ExitId) -> f64 {
    let mut cells = std::collections::BTreeSet::new();
    for &c in exit.cells() {
        for i in c.0 - 3..=c.0 + 3 {
            for j in c.1 - 3..=c.1 + 3 {
                if grid.cell((i, j)) == Cell::Floor {
                    cells.insert((i, j));
                }
            }
        }
    }
    if cells.is_empty() {
        return 0.0;
    }
    let used = cells.iter().filter(|&&p| occupancy.at(p).is_some()).count();
    used as f64 / cells.len() as f64
}

/// Feasible move minimizing the distance to `target`, ties by direction order.
pub fn greedy_move(target: Pos, options: &[(Direction, Pos)]) -> Option<Direction> {
    options
        .iter()
        .min_by_key(|(d, p)| (chebyshev(*p, target), Direction::ALL.iter().position(|x| x == d)))
        .map(|(d, _)| *d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvacParams {
    pub n_agents: usize,
    pub obstacles: bool,
    /// Bitmap replacing the shipped obstacle layout.
    pub obstacle_map: Option<String>,
    pub fov: FieldOfView,
    pub conversation: bool,
    pub share_probability: f64,
    pub hearing_radius: f64,
    pub mode: EvacMode,
    pub round_cap: u64,
    pub explain: bool,
    pub settings: LlmSettings,
}

impl Default for EvacParams {
    fn default() -> Self {
        Self {
            n_agents: 100,
            obstacles: false,
            obstacle_map: None,
            fov: FieldOfView::default(),
            conversation: false,
            share_probability: 0.2,
            hearing_radius: 5.0,
            mode: EvacMode::Llm,
            round_cap: 50,
            explain: false,
            settings: LlmSettings::default(),
        }
    }
}

impl EvacParams {
    /// The room these parameters describe.
    pub fn grid(&self) -> Result<EvacGrid, EvacError> {
        let map = match (&self.obstacle_map, self.obstacles) {
            (Some(m), _) => Some(m.as_str()),
            (None, true) => Some(DEFAULT_OBSTACLES),
            (None, false) => None,
        };
        EvacGrid::new(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacState {
    pub round: u64,
    pub grid: EvacGrid,
    pub agents: Vec<EvacAgent>,
    /// Cumulative escapes per persona after each round.
    pub escaped_by_round: Vec<[u32; 4]>,
    /// Escaped fraction after each round.
    pub escaped_fraction: Vec<f64>,
    pub anomalies: Vec<String>,
}

impl EvacState {
    pub fn counts(&self) -> (usize, usize, usize) {
        let escaped = self.agents.iter().filter(|a| a.status == AgentStatus::Escaped).count();
        let disabled = self.agents.iter().filter(|a| a.status == AgentStatus::Disabled).count();
        (escaped, disabled, self.agents.len() - escaped - disabled)
    }
}

/// Places agents uniformly on free cells with one quarter per persona and
/// samples their attributes.
pub fn build_grid(ctx: &mut RunCtx, params: &EvacParams) -> Result<(EvacGrid, Vec<EvacAgent>), RuntimeError> {
    let grid = params.grid().map_err(|e| RuntimeError::Config(e.to_string()))?;
    let free = grid.free_cells();
    if params.n_agents > free.len() {
        let e = EvacError::CapacityExceeded {
            requested: params.n_agents,
            free: free.len(),
        };
        return Err(RuntimeError::Config(e.to_string()));
    }
    let order = ctx.permutation("evac.placement", free.len())?;
    let mut agents = Vec::with_capacity(params.n_agents);
    for id in 0..params.n_agents {
        let persona = EvacPersona::ALL[id % 4];
        let means = persona.attribute_means();
        let mut attrs = [0.0; 3];
        for (a, mu) in attrs.iter_mut().zip(means) {
            *a = mu + ctx.standard_normal("evac.attribute")?;
        }
        agents.push(EvacAgent {
            id,
            position: free[order[id]],
            persona,
            competitive: attrs[0],
            tolerance: attrs[1],
            tolerance_limit: attrs[2],
            status: AgentStatus::Normal,
            overtaken: 0,
            target: None,
            target_history: Vec::new(),
            last_position: None,
            panic: String::new(),
            weights: None,
            escaped_round: None,
            llm: AgentState::new(EvacAgent::name(id), params.settings.clone(), 4),
        });
    }
    Ok((grid, agents))
}

fn fmt_pos(p: Pos) -> String {
    format!("({}, {})", p.0, p.1)
}

fn py_list<S: AsRef<str>>(items: &[S]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("'{}'", s.as_ref())).collect();
    format!("[{}]", quoted.join(", "))
}

pub struct EvacScenario {
    pub params: EvacParams,
}

/// What one agent decided this round.
#[derive(Debug, Clone, Default)]
struct Choice {
    target: Option<ExitId>,
    direction: Option<Direction>,
    seq: Option<u64>,
}

impl EvacScenario {
    pub fn new(params: EvacParams) -> Self {
        Self { params }
    }

    fn four_directions(ctx: &RunCtx) -> bool {
        ctx.variants()
            .0
            .get("evac.move")
            .is_some_and(|(_, v)| v == "four_directions")
    }

    fn prepare_agent(&self, ctx: &RunCtx, agent: &mut EvacAgent) -> Result<(), RuntimeError> {
        let persona = ctx.render(&format!("evac.persona_{}", agent.persona.label()), &Bindings::new())?;
        let system = ctx.render("evac.movement_instruction", &Bindings::new())?;
        agent.llm = agent.llm.clone().personalize(persona).with_system(system);
        Ok(())
    }

    fn scenario_text(ctx: &RunCtx, view: &View) -> Result<String, RuntimeError> {
        let nearest = view.exits.iter().map(|e| e.distance).min().unwrap_or(0);
        ctx.render(
            "evac.scenario",
            &bindings([
                ("distance_to_nearest_exit", nearest.to_string()),
                ("number_of_people", view.visible.to_string()),
            ]),
        )
    }

    fn exit_lines(view: &View) -> String {
        view.exits
            .iter()
            .map(|e| {
                format!(
                    "The {} exit: distance {}, {} people towards it.",
                    e.exit.as_str(),
                    e.distance,
                    e.people
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn options(ctx: &RunCtx, grid: &EvacGrid, occupancy: &Occupancy, p: Pos) -> Vec<(Direction, Pos)> {
        let four = Self::four_directions(ctx);
        Direction::ALL
            .into_iter()
            .filter(|d| !(four && d.is_diagonal()))
            .map(|d| (d, d.apply(p)))
            .filter(|&(_, q)| grid.walkable(q) && occupancy.at(q).is_none())
            .collect()
    }

    fn ask(
        ctx: &mut RunCtx,
        agent: &AgentState,
        stage: &str,
        scenario: &str,
        body: &str,
        parser: &ParserSpec,
    ) -> Result<agent::Decision, RuntimeError> {
        ctx.set_stage(stage);
        let text = if scenario.is_empty() {
            body.to_string()
        } else {
            format!("{scenario}\n\n{body}")
        };
        let template = PromptTemplate::literal(format!("evac.{stage}"), &text);
        agent::act(ctx, agent, stage, &template, &Bindings::new(), parser)
    }

    fn anomaly(
        ctx: &mut RunCtx,
        anomalies: &mut Vec<String>,
        agent: &EvacAgent,
        note: String,
    ) -> Result<(), RuntimeError> {
        ctx.world(Some(&EvacAgent::name(agent.id)), json!({"anomaly": note}))?;
        anomalies.push(note);
        Ok(())
    }

    /// The four decision stages for one normal agent.
    fn decide(
        &self,
        ctx: &mut RunCtx,
        grid: &EvacGrid,
        occupancy: &Occupancy,
        agent: &mut EvacAgent,
        heard: &[String],
        anomalies: &mut Vec<String>,
    ) -> Result<Choice, RuntimeError> {
        let view = field_of_view(grid, occupancy, agent.position, &self.params.fov);
        let scenario = Self::scenario_text(ctx, &view)?;
        let empty = Bindings::new();

        if self.params.mode == EvacMode::Abm {
            let body = ctx.render("evac.feelings_abm", &empty)?;
            let d = Self::ask(ctx, &agent.llm, "feelings", &scenario, &body, &ParserSpec::FreeText)?;
            let weights = d.action.text().and_then(parse_panic_weights);
            if weights.is_none() {
                Self::anomaly(
                    ctx,
                    anomalies,
                    agent,
                    format!("round {}: unreadable inclination", ctx.round),
                )?;
            }
            let weights = weights.unwrap_or([0.5; 3]);
            agent.weights = Some(weights);
            agent.panic = d.action.raw.trim().to_string();
            let target = abm_exit(grid, occupancy, &view, weights);
            let cell = grid.exit_distance(agent.position, target).1;
            let options = Self::options(ctx, grid, occupancy, agent.position);
            let direction = greedy_move(cell, &options);
            ctx.set_stage("move");
            ctx.world(
                Some(&EvacAgent::name(agent.id)),
                json!({"abm": {"weights": weights, "target": target, "direction": direction}}),
            )?;
            return Ok(Choice {
                target: Some(target),
                direction,
                seq: None,
            });
        }

        let body = ctx.render("evac.feelings", &empty)?;
        let d = Self::ask(ctx, &agent.llm, "feelings", &scenario, &body, &ParserSpec::FreeText)?;
        agent.panic = d.action.text().unwrap_or("").to_string();

        let body = ctx.render(
            "evac.assessment",
            &bindings([
                ("panic_level", agent.panic.clone()),
                ("exit_lines", Self::exit_lines(&view)),
            ]),
        )?;
        let d = Self::ask(ctx, &agent.llm, "assessment", &scenario, &body, &ParserSpec::FreeText)?;
        let assessment = d.action.text().unwrap_or("").to_string();

        let target_history = match agent.target_history.last() {
            Some(last) => {
                let names: Vec<&str> = agent.target_history.iter().map(|e| e.as_str()).collect();
                ctx.render(
                    "evac.target_history",
                    &bindings([
                        ("target_exit_history", py_list(&names)),
                        ("target_exit", last.as_str().to_string()),
                    ]),
                )?
            }
            None => String::new(),
        };
        let heard_block = if heard.is_empty() {
            String::new()
        } else {
            let lines: Vec<String> = heard.iter().map(|m| format!("\"{m}\"")).collect();
            ctx.render(
                "evac.receive",
                &bindings([
                    ("number_of_people", heard.len().to_string()),
                    ("messages", lines.join("\n")),
                ]),
            )?
        };
        let body = ctx.render(
            "evac.choice",
            &bindings([
                ("panic_level", agent.panic.clone()),
                ("assessment", assessment),
                ("target_history", target_history),
                ("heard", heard_block),
            ]),
        )?;
        let exits: Vec<&str> = ["bottom", "left", "right"].to_vec();
        let d = Self::ask(ctx, &agent.llm, "choice", &scenario, &body, &ParserSpec::choice(exits))?;
        let Some(target) = d.action.choice().and_then(|c| c.parse::<ExitId>().ok()) else {
            Self::anomaly(
                ctx,
                anomalies,
                agent,
                format!("round {}: no exit chosen, staying", ctx.round),
            )?;
            return Ok(Choice::default());
        };

        let options = Self::options(ctx, grid, occupancy, agent.position);
        if options.is_empty() {
            return Ok(Choice {
                target: Some(target),
                ..Choice::default()
            });
        }
        let order = ctx.permutation("evac.options", options.len())?;
        let shuffled: Vec<(Direction, Pos)> = order.iter().map(|&k| options[k]).collect();
        let exit_cell = grid.exit_distance(agent.position, target).1;
        let direction = Direction::toward(agent.position, exit_cell).map_or("front", Direction::name);
        let position_history = ctx.render(
            "evac.position_history",
            &bindings([
                ("last_position", fmt_pos(agent.last_position.unwrap_or(agent.position))),
                ("exit_position", fmt_pos(exit_cell)),
                ("cur_position", fmt_pos(agent.position)),
                ("direction", direction.to_string()),
            ]),
        )?;
        let movement_list = shuffled
            .iter()
            .map(|(d, q)| format!("'{}': move to {}", d.name(), fmt_pos(*q)))
            .collect::<Vec<_>>()
            .join("\n");
        let names: Vec<&str> = shuffled.iter().map(|(d, _)| d.name()).collect();
        let body = ctx.render(
            "evac.move",
            &bindings([
                ("position_history", position_history),
                ("movement_list", movement_list),
                ("valid_directions", py_list(&names)),
            ]),
        )?;
        let d = Self::ask(ctx, &agent.llm, "move", &scenario, &body, &ParserSpec::choice(names))?;
        let direction = d.action.choice().and_then(Direction::from_name);
        if direction.is_none() {
            Self::anomaly(
                ctx,
                anomalies,
                agent,
                format!("round {}: no valid move, staying", ctx.round),
            )?;
        }
        Ok(Choice {
            target: Some(target),
            direction,
            seq: Some(d.seq),
        })
    }

    fn explain_move(
        &self,
        ctx: &mut RunCtx,
        agent: &EvacAgent,
        from: Pos,
        choice: &Choice,
    ) -> Result<(), RuntimeError> {
        let (Some(target), Some(dir), Some(seq)) = (choice.target, choice.direction, choice.seq) else {
            return Ok(());
        };
        ctx.set_stage("explain");
        let exit_dir = Direction::toward(from, ExitId::cells(target)[0]).map_or("front", Direction::name);
        let b = bindings([
            ("choose_target_exit", target.as_str().to_string()),
            ("current_position", fmt_pos(from)),
            ("exit_direction", exit_dir.to_string()),
            ("choose_direction_of_movement", dir.name().to_string()),
        ]);
        let template = ctx.template("evac.explain")?;
        agent::explain(ctx, &agent.llm, seq, "explain", &template, &b)?;
        Ok(())
    }

    fn conversation(
        &self,
        ctx: &mut RunCtx,
        state: &EvacState,
        occupancy: &Occupancy,
    ) -> Result<(Vec<usize>, BTreeMap<String, Vec<String>>), RuntimeError> {
        let movers: Vec<usize> = (0..state.agents.len())
            .filter(|&k| state.agents[k].status == AgentStatus::Normal)
            .collect();
        if !self.params.conversation {
            return Ok((movers, BTreeMap::new()));
        }
        ctx.set_stage("share");
        let participants: Vec<Participant> = movers
            .iter()
            .map(|&k| {
                let a = &state.agents[k];
                Participant::at(
                    EvacAgent::name(a.id),
                    (f64::from(a.position.0), f64::from(a.position.1)),
                )
            })
            .collect();
        let policy = ConversationPolicy {
            eligibility: Eligibility::Probability(self.params.share_probability),
            order: SpeakOrder::Random,
            audience: Audience::WithinRadius(self.params.hearing_radius),
            deliver_only_to_later: true,
            max_turns: movers.len(),
        };
        let by_name: BTreeMap<String, usize> = movers
            .iter()
            .map(|&k| (EvacAgent::name(state.agents[k].id), k))
            .collect();
        let share = ctx.render("evac.share", &Bindings::new())?;
        let transcript = mediate_conversation(ctx, &participants, &policy, |ctx, who, _| {
            let a = &state.agents[by_name[&who.id]];
            let view = field_of_view(&state.grid, occupancy, a.position, &self.params.fov);
            let scenario = Self::scenario_text(ctx, &view)?;
            let d = Self::ask(ctx, &a.llm, "share", &scenario, &share, &ParserSpec::FreeText)?;
            Ok(d.action.text().map(str::to_string))
        })?;
        let mut heard: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for u in &transcript.utterances {
            for listener in &u.audience {
                heard.entry(listener.clone()).or_default().push(u.text.clone());
            }
        }
        let order = transcript.order.iter().map(|id| by_name[id]).collect();
        Ok((order, heard))
    }

    fn agent_from_probe(&self, ctx: &RunCtx, spec: &Value) -> Result<EvacAgent, RuntimeError> {
        let bad = |what: &str| RuntimeError::Config(format!("probe spec: {what}"));
        let pos = |v: &Value| -> Option<Pos> {
            let a = v.as_array()?;
            Some((a.first()?.as_i64()? as i32, a.get(1)?.as_i64()? as i32))
        };
        let position = spec
            .get("position")
            .and_then(pos)
            .ok_or_else(|| bad("missing position [row, col]"))?;
        let persona = match spec.get("persona").and_then(Value::as_str) {
            Some(l) => EvacPersona::from_label(l).ok_or_else(|| bad("unknown persona"))?,
            None => EvacPersona::ALL[0],
        };
        let target_history = spec
            .get("target_history")
            .and_then(Value::as_array)
            .map(|xs| xs.iter().filter_map(|x| x.as_str()?.parse().ok()).collect())
            .unwrap_or_default();
        let means = persona.attribute_means();
        let mut agent = EvacAgent {
            id: 0,
            position,
            persona,
            competitive: means[0],
            tolerance: means[1],
            tolerance_limit: means[2],
            status: AgentStatus::Normal,
            overtaken: 0,
            target: None,
            target_history,
            last_position: spec.get("last_position").and_then(pos),
            panic: String::new(),
            weights: None,
            escaped_round: None,
            llm: AgentState::new(EvacAgent::name(0), self.params.settings.clone(), 4),
        };
        self.prepare_agent(ctx, &mut agent)?;
        Ok(agent)
    }
}

impl Scenario for EvacScenario {
    type State = EvacState;

    const NAME: &'static str = NAME;

    fn params(&self) -> Value {
        serde_json::to_value(&self.params).unwrap_or(Value::Null)
    }

    fn stages(&self) -> &'static [&'static str] {
        &[
            "congestion",
            "share",
            "feelings",
            "assessment",
            "choice",
            "move",
            "explain",
            "resolve",
        ]
    }

    fn init(&self, ctx: &mut RunCtx) -> Result<EvacState, RuntimeError> {
        let (grid, mut agents) = build_grid(ctx, &self.params)?;
        for a in &mut agents {
            self.prepare_agent(ctx, a)?;
        }
        let placement: Vec<Value> = agents
            .iter()
            .map(|a| json!([a.id, a.position.0, a.position.1, a.persona.label()]))
            .collect();
        ctx.world(None, json!({"placement": placement}))?;
        Ok(EvacState {
            round: 0,
            grid,
            agents,
            escaped_by_round: Vec::new(),
            escaped_fraction: Vec::new(),
            anomalies: Vec::new(),
        })
    }

    fn step(&self, ctx: &mut RunCtx, state: &mut EvacState) -> Result<StepOutcome, RuntimeError> {
        let round = ctx.round;
        ctx.set_stage("congestion");
        let occupancy = Occupancy::of(&state.agents);
        let degrees: Vec<Option<f64>> = (0..state.agents.len())
            .map(|k| {
                state.agents[k]
                    .status
                    .on_grid()
                    .then(|| congestion_degree(&state.agents, &occupancy, k))
            })
            .collect();
        for (k, degree) in degrees.into_iter().enumerate() {
            let Some(degree) = degree else { continue };
            let agent = &mut state.agents[k];
            let outcome = congestion_update(agent, degree);
            if outcome != CongestionOutcome::Unchanged {
                ctx.world(
                    Some(&EvacAgent::name(agent.id)),
                    json!({"congestion": {"degree": degree, "outcome": outcome, "overtaken": agent.overtaken}}),
                )?;
            }
        }
        let occupancy = Occupancy::of(&state.agents);

        let (order, heard) = self.conversation(ctx, state, &occupancy)?;
        let mut intents = Vec::new();
        for k in order {
            let heard_here = heard
                .get(&EvacAgent::name(state.agents[k].id))
                .cloned()
                .unwrap_or_default();
            let mut agent = state.agents[k].clone();
            let choice = self.decide(
                ctx,
                &state.grid,
                &occupancy,
                &mut agent,
                &heard_here,
                &mut state.anomalies,
            )?;
            if let Some(t) = choice.target {
                agent.target = Some(t);
                agent.target_history.push(t);
            }
            if let Some(d) = choice.direction {
                intents.push((k, d.apply(agent.position)));
            }
            if self.params.explain {
                self.explain_move(ctx, &agent, agent.position, &choice)?;
            }
            state.agents[k] = agent;
        }

        ctx.set_stage("resolve");
        let winners = resolve_moves(ctx, &intents)?;
        let mut escaped_now = Vec::new();
        let mut right_exit = 0;
        for a in state.agents.iter_mut().filter(|a| a.status.on_grid()) {
            a.last_position = Some(a.position);
        }
        for (k, dest) in winners {
            let agent = &mut state.agents[k];
            agent.position = dest;
            if let Cell::Exit(exit) = state.grid.cell(dest) {
                agent.status = AgentStatus::Escaped;
                agent.escaped_round = Some(round);
                escaped_now.push(agent.id);
                right_exit += usize::from(exit == ExitId::Right);
            }
        }
        let mut cumulative = [0u32; 4];
        for a in state.agents.iter().filter(|a| a.status == AgentStatus::Escaped) {
            cumulative[a.persona.index()] += 1;
        }
        state.escaped_by_round.push(cumulative);
        let (escaped, disabled, active) = state.counts();
        state
            .escaped_fraction
            .push(escaped as f64 / state.agents.len().max(1) as f64);
        state.round = round;
        let positions: Vec<[i64; 3]> = state
            .agents
            .iter()
            .filter(|a| a.status.on_grid())
            .map(|a| [a.id as i64, i64::from(a.position.0), i64::from(a.position.1)])
            .collect();
        ctx.world(
            None,
            json!({"grid": {
                "round": round,
                "positions": positions,
                "escaped_now": escaped_now,
                "right_exit": right_exit,
                "escaped": escaped,
                "disabled": disabled,
                "active": active,
            }}),
        )?;
        if active == 0 {
            return Ok(StepOutcome::Endpoint("room empty".into()));
        }
        Ok(StepOutcome::Continue)
    }

    fn series<'s>(&self, state: &'s EvacState, name: &str) -> Option<&'s [f64]> {
        (name == "escaped").then_some(state.escaped_fraction.as_slice())
    }

    fn exit_specs(&self) -> Vec<ExitSpec> {
        vec![
            ExitSpec::Endpoint,
            ExitSpec::MaxIterations {
                rounds: self.params.round_cap,
            },
        ]
    }

    fn metrics(&self, state: &EvacState) -> Value {
        let (escaped, disabled, active) = state.counts();
        let fraction = escaped as f64 / state.agents.len().max(1) as f64;
        let rounds: Vec<f64> = state
            .agents
            .iter()
            .filter_map(|a| a.escaped_round)
            .map(|r| r as f64)
            .collect();
        let mean_round = (!rounds.is_empty()).then(|| rounds.iter().sum::<f64>() / rounds.len() as f64);
        let last = state.escaped_by_round.last().copied().unwrap_or_default();
        let by_persona: serde_json::Map<String, Value> = EvacPersona::ALL
            .iter()
            .map(|p| (p.label().to_string(), json!(last[p.index()])))
            .collect();
        json!({
            "metric": fraction,
            "behavior": if fraction >= 0.5 { "evacuate" } else { "linger" },
            "escaped": escaped,
            "disabled": disabled,
            "active": active,
            "mean_escape_round": mean_round,
            "escaped_by_persona": by_persona,
            "anomalies": state.anomalies.len(),
        })
    }

    /// Spec: `{"position": [r, c], "persona": "strong_weak", "others": [[r, c], ...],
    /// "target_history": ["left"], "last_position": [r, c], "heard": ["..."]}`.
    fn probe(&self, ctx: &mut RunCtx, spec: &Value, explain: bool) -> Result<(), RuntimeError> {
        let grid = self.params.grid().map_err(|e| RuntimeError::Config(e.to_string()))?;
        let mut agents = vec![self.agent_from_probe(ctx, spec)?];
        if let Some(others) = spec.get("others").and_then(Value::as_array) {
            for (k, o) in others.iter().enumerate() {
                let mut other = agents[0].clone();
                other.id = k + 1;
                other.position = (
                    o.get(0).and_then(Value::as_i64).unwrap_or(0) as i32,
                    o.get(1).and_then(Value::as_i64).unwrap_or(0) as i32,
                );
                agents.push(other);
            }
        }
        let heard: Vec<String> = spec
            .get("heard")
            .and_then(Value::as_array)
            .map(|xs| xs.iter().filter_map(|x| x.as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        let occupancy = Occupancy::of(&agents);
        let mut agent = agents[0].clone();
        let mut anomalies = Vec::new();
        let choice = self.decide(ctx, &grid, &occupancy, &mut agent, &heard, &mut anomalies)?;
        if explain {
            self.explain_move(ctx, &agent, agent.position, &choice)?;
        }
        Ok(())
    }
}

/// One character per cell: `#` wall, `O` obstacle, `E` exit, `.` floor,
/// `A`-`D` agents by persona.
pub fn raster(state: &EvacState) -> String {
    render_raster(&state.grid, &persona_map(&state.agents))
}

pub fn snapshot_svg(state: &EvacState) -> String {
    render_svg(&state.grid, &persona_map(&state.agents))
}

fn persona_map(agents: &[EvacAgent]) -> BTreeMap<Pos, usize> {
    agents
        .iter()
        .filter(|a| a.status.on_grid())
        .map(|a| (a.position, a.persona.index()))
        .collect()
}

/// Raster of `grid` with agents given as position to persona index.
pub fn render_raster(grid: &EvacGrid, agents: &BTreeMap<Pos, usize>) -> String {
    let mut out = String::with_capacity((GRID_SIZE * (GRID_SIZE + 1)) as usize);
    for i in 1..=GRID_SIZE {
        for j in 1..=GRID_SIZE {
            let ch = match agents.get(&(i, j)) {
                Some(&persona) => (b'A' + persona as u8) as char,
                None => match grid.cell((i, j)) {
                    Cell::Floor => '.',
                    Cell::Wall => '#',
                    Cell::Obstacle => 'O',
                    Cell::Exit(_) => 'E',
                },
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

pub fn render_svg(grid: &EvacGrid, agents: &BTreeMap<Pos, usize>) -> String {
    const CELL: i32 = 12;
    const PERSONA_COLORS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];
    let size = GRID_SIZE * CELL;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    for i in 1..=GRID_SIZE {
        for j in 1..=GRID_SIZE {
            let (x, y) = ((j - 1) * CELL, (i - 1) * CELL);
            let fill = match grid.cell((i, j)) {
                Cell::Floor => "#ffffff",
                Cell::Wall => "#333333",
                Cell::Obstacle => "#999999",
                Cell::Exit(_) => "#4daf4a",
            };
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\"/>"
            );
            if let Some(&persona) = agents.get(&(i, j)) {
                let color = PERSONA_COLORS[persona % PERSONA_COLORS.len()];
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{color}\"/>",
                    x + CELL / 2,
                    y + CELL / 2,
                    CELL / 2 - 1
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Cumulative escapes per persona by round.
pub fn escape_table(state: &EvacState) -> Table {
    let mut header = vec!["round".to_string()];
    header.extend(EvacPersona::ALL.iter().map(|p| p.label().to_string()));
    header.push("total".into());
    let mut table = Table::new(header);
    for (r, counts) in state.escaped_by_round.iter().enumerate() {
        let mut row = vec![(r + 1).to_string()];
        row.extend(counts.iter().map(u32::to_string));
        row.push(counts.iter().sum::<u32>().to_string());
        table.push(row);
    }
    table
}

static EXIT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(left|bottom|right) exit: distance (\d+)").expect("valid regex"));
static OPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"'([a-z-]+)': move to \((\d+), (\d+)\)").expect("valid regex"));
static EXIT_AT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"exit at \((\d+), (\d+)\)").expect("valid regex"));

/// Scripted evacuee: picks the nearest exit and steps greedily toward it.
/// In the gallery framing it strolls instead.
pub struct EvacOracle;

impl EvacOracle {
    fn nearest_exit(text: &str) -> Option<&'static str> {
        let mut best: Option<(i64, usize)> = None;
        for c in EXIT_LINE.captures_iter(text) {
            let exit = ExitId::ALL.iter().position(|e| e.as_str() == &c[1])?;
            let d: i64 = c[2].parse().ok()?;
            if best.is_none_or(|(bd, be)| (d, exit) < (bd, be)) {
                best = Some((d, exit));
            }
        }
        best.map(|(_, e)| ExitId::ALL[e].as_str())
    }

    fn move_choice(text: &str, wander: Option<u64>) -> Option<String> {
        let options: Vec<(Direction, Pos)> = OPTION
            .captures_iter(text)
            .filter_map(|c| Some((Direction::from_name(&c[1])?, (c[2].parse().ok()?, c[3].parse().ok()?))))
            .collect();
        if options.is_empty() {
            return None;
        }
        if let Some(seed) = wander {
            return Some(options[(seed % options.len() as u64) as usize].0.name().to_string());
        }
        let exit = EXIT_AT.captures(text)?;
        let target: Pos = (exit[1].parse().ok()?, exit[2].parse().ok()?);
        greedy_move(target, &options).map(|d| d.name().to_string())
    }
}

impl ScenarioOracle for EvacOracle {
    fn respond(&self, stage: &str, request: &ChatRequest) -> String {
        let user = request.last_user_text().unwrap_or("");
        let gallery = user.contains("gallery");
        match stage {
            "feelings" if user.contains("inclination") => "high, mild, moderate".into(),
            "feelings" => "I am worried but I am not panicking.".into(),
            "assessment" => {
                let lines: Vec<String> = EXIT_LINE
                    .captures_iter(user)
                    .map(|c| format!("The {} exit: distance {} feels manageable.", &c[1], &c[2]))
                    .collect();
                lines.join(" ")
            }
            "choice" => Self::nearest_exit(user).unwrap_or("left").to_string(),
            "move" => {
                let wander = gallery.then(|| request.cache_key().seed());
                Self::move_choice(user, wander).unwrap_or_default()
            }
            "share" if gallery => "These paintings are lovely, take your time.".into(),
            "share" => "Stay calm and head to the closest exit.".into(),
            "explain" => "It brings me closer to the exit I chose.".into(),
            _ => String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = EvacGrid::new(None).unwrap();
        assert_eq!(g.cell((17, 33)), Cell::Exit(ExitId::Right));
        assert_eq!(g.cell((16, 33)), Cell::Wall);
        assert_eq!(g.cell((33, 16)), Cell::Exit(ExitId::Bottom));
        assert_eq!(g.cell((18, 1)), Cell::Exit(ExitId::Left));
        assert_eq!(g.free_cells().len(), 31 * 31);
        let with = EvacGrid::new(Some(DEFAULT_OBSTACLES)).unwrap();
        assert!(with.free_cells().len() < 31 * 31);
        assert!(with.free_cells().len() >= 400);
        assert!(EvacGrid::new(Some("..\n")).is_err());
    }

    #[test]
    fn distances() {
        let g = EvacGrid::new(None).unwrap();
        assert_eq!(g.nearest_exit((2, 3)), (ExitId::Left, 14));
        assert_eq!(g.exit_distance((17, 2), ExitId::Left).0, 1);
        assert_eq!(g.exit_distance((32, 17), ExitId::Bottom).0, 1);
    }

    #[test]
    fn view_cone() {
        let fov = FieldOfView::default();
        // Toward the bottom exit from (16, 23): straight down and 45° off count.
        assert!(fov.contains((16, 23), (33, 18), (20, 22)));
        assert!(!fov.contains((16, 23), (33, 18), (10, 23)));
        assert!(!fov.contains((16, 23), (33, 18), (28, 20)));
    }

    #[test]
    fn panic_words() {
        assert_eq!(parse_panic_weights("minimal, mild, moderate"), Some([0.0, 0.25, 0.5]));
        assert_eq!(parse_panic_weights("High, extreme, minimal."), Some([0.75, 1.0, 0.0]));
        assert_eq!(parse_panic_weights("calm"), None);
    }

    #[test]
    fn oracle_move() {
        let text = "you have chosen the exit at (16, 1) and you are at (2, 3)\n\
                    'right': move to (2, 4)\n'down': move to (3, 3)\n'lower-left': move to (3, 2)";
        assert_eq!(EvacOracle::move_choice(text, None).as_deref(), Some("down"));
        assert_eq!(
            EvacOracle::nearest_exit(
                "The left exit: distance 14. The bottom exit: distance 31. The right exit: distance 14."
            ),
            Some("left")
        );
    }
}
