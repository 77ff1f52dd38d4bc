//! Tables and plots rebuilt from a run's event log and metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::evac::{self, EvacParams, EvacPersona};
use super::params_from;
use crate::analysis::{write_csv, write_svg_lineplot, LinePlot, Series, Table};
use crate::runtime::{EventKind, EventRecord, RunResult, RuntimeError, ScenarioKind};

fn header(events: &[EventRecord]) -> Result<&Value, RuntimeError> {
    events
        .iter()
        .find_map(|e| e.payload.get("header"))
        .ok_or_else(|| RuntimeError::Journal("log has no header event".into()))
}

fn worlds<'a>(events: &'a [EventRecord], key: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
    events
        .iter()
        .filter(|e| e.kind == EventKind::World)
        .filter_map(move |e| e.payload.get(key))
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Writes the exports for the run in `events` into `out_dir` and returns the
/// files written. `metrics` is needed for the plea tables.
pub fn export_run(
    events: &[EventRecord],
    metrics: Option<&RunResult>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, RuntimeError> {
    let header = header(events)?;
    let kind: ScenarioKind = header["scenario"].as_str().unwrap_or_default().parse()?;
    std::fs::create_dir_all(out_dir).map_err(|e| RuntimeError::io(out_dir, e))?;
    match kind {
        ScenarioKind::Firm => export_firm(events, out_dir),
        ScenarioKind::Evac => export_evac(events, &header["params"], out_dir),
        ScenarioKind::Guess => export_guess(events, out_dir),
        ScenarioKind::Plea => export_plea(metrics, out_dir),
    }
}

fn export_firm(events: &[EventRecord], out_dir: &Path) -> Result<Vec<PathBuf>, RuntimeError> {
    let mut table = Table::new(["round", "p1", "p2", "q1", "q2", "profit1", "profit2"]);
    let (mut p1, mut p2) = (Vec::new(), Vec::new());
    for m in worlds(events, "market") {
        let (p, q, pi) = (&m["p"], &m["q"], &m["profit"]);
        table.push([
            m["round"].to_string(),
            f(&p[0]).to_string(),
            f(&p[1]).to_string(),
            f(&q[0]).to_string(),
            f(&q[1]).to_string(),
            f(&pi[0]).to_string(),
            f(&pi[1]).to_string(),
        ]);
        p1.push(f(&p[0]));
        p2.push(f(&p[1]));
    }
    let csv = out_dir.join("prices.csv");
    write_csv(&csv, &table)?;
    let mut references = Vec::new();
    for e in events.iter().filter(|e| e.kind == EventKind::World) {
        if let (Some(b), Some(m)) = (e.payload.get("bertrand"), e.payload.get("monopoly")) {
            references.push(("Bertrand".to_string(), f(b)));
            references.push(("monopoly".to_string(), f(m)));
        }
    }
    let plot = LinePlot {
        title: "Prices by round".into(),
        x_label: "round".into(),
        y_label: "price".into(),
        series: vec![Series::new("Firm 1", p1)?, Series::new("Firm 2", p2)?],
        reference_lines: references,
    };
    let svg = out_dir.join("prices.svg");
    write_svg_lineplot(&svg, &plot)?;
    Ok(vec![csv, svg])
}

fn export_evac(events: &[EventRecord], params: &Value, out_dir: &Path) -> Result<Vec<PathBuf>, RuntimeError> {
    let params: EvacParams = params_from(params)?;
    let grid = params.grid().map_err(|e| RuntimeError::Config(e.to_string()))?;
    let personas: BTreeMap<i64, usize> = worlds(events, "placement")
        .flat_map(|p| p.as_array().cloned().unwrap_or_default())
        .filter_map(|row| {
            let persona = EvacPersona::from_label(row[3].as_str()?)?;
            Some((row[0].as_i64()?, persona.index()))
        })
        .collect();
    let frames = out_dir.join("frames");
    std::fs::create_dir_all(&frames).map_err(|e| RuntimeError::io(&frames, e))?;
    let mut table = Table::new(["round", "escaped", "disabled", "active", "right_exit"]);
    let mut written = Vec::new();
    let mut last = BTreeMap::new();
    for g in worlds(events, "grid") {
        let round = g["round"].as_u64().unwrap_or(0);
        table.push([
            round.to_string(),
            g["escaped"].to_string(),
            g["disabled"].to_string(),
            g["active"].to_string(),
            g["right_exit"].to_string(),
        ]);
        let agents: BTreeMap<evac::Pos, usize> = g["positions"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|p| {
                let id = p[0].as_i64()?;
                let pos = (p[1].as_i64()? as i32, p[2].as_i64()? as i32);
                Some((pos, personas.get(&id).copied().unwrap_or(0)))
            })
            .collect();
        let path = frames.join(format!("round-{round:03}.txt"));
        std::fs::write(&path, evac::render_raster(&grid, &agents)).map_err(|e| RuntimeError::io(&path, e))?;
        written.push(path);
        last = agents;
    }
    let csv = out_dir.join("escapes.csv");
    write_csv(&csv, &table)?;
    let svg = out_dir.join("final.svg");
    std::fs::write(&svg, evac::render_svg(&grid, &last)).map_err(|e| RuntimeError::io(&svg, e))?;
    written.insert(0, svg);
    written.insert(0, csv);
    Ok(written)
}

fn export_guess(events: &[EventRecord], out_dir: &Path) -> Result<Vec<PathBuf>, RuntimeError> {
    let mut table = Table::new(["attempt", "guess", "feedback"]);
    let attempts = events
        .iter()
        .filter(|e| e.kind == EventKind::World && e.payload.get("guess").is_some());
    for (k, e) in attempts.enumerate() {
        let feedback = e.payload["feedback"].as_str().unwrap_or_default().to_string();
        table.push([(k + 1).to_string(), e.payload["guess"].to_string(), feedback]);
    }
    let csv = out_dir.join("guesses.csv");
    write_csv(&csv, &table)?;
    Ok(vec![csv])
}

fn export_plea(metrics: Option<&RunResult>, out_dir: &Path) -> Result<Vec<PathBuf>, RuntimeError> {
    let metrics = metrics.ok_or_else(|| RuntimeError::Config("plea export needs the run's metrics file".into()))?;
    let mut table = Table::new([
        "factor",
        "self_perception",
        "period_months",
        "conviction_probability",
        "comparative",
        "n",
        "accepted",
        "wtap",
    ]);
    for c in metrics.metrics["cells"].as_array().into_iter().flatten() {
        let case = &c["case"];
        let text = |v: &Value| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
        table.push([
            text(&c["factor"]),
            text(&case["self_perception"]),
            text(&case["period_months"]),
            text(&case["conviction_probability"]),
            text(&case["comparative"]),
            text(&c["n"]),
            text(&c["accepted"]),
            c["wtap"].as_f64().map(|w| format!("{w:.4}")).unwrap_or_default(),
        ]);
    }
    let csv = out_dir.join("wtap.csv");
    write_csv(&csv, &table)?;
    Ok(vec![csv])
}
