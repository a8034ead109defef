//! Plot-ready tables, one CSV per figure, rebuilt from the JSON artifacts.

use std::path::Path;

use domar_core::household::Regime;
use domar_core::tax_optimizer::{FrontierPoint, SweepRow};
use domar_core::transition::TransitionRow;
use domar_core::wealth::ExceedancePoint;
use serde::Deserialize;

use crate::error::CliError;
use crate::manifest::{read_json, Output};

pub const FIGURES: [&str; 29] = [
    "fig2a", "fig2b", "fig4a", "fig4b", "fig4c", "fig4d", "fig4e", "fig4f", "fig5", "fig6", "fig7a", "fig7b", "fig7c",
    "fig7d", "fig7e", "fig7f", "fig8", "fig9", "fig10", "fig11a", "fig11b", "fig11c", "fig11d", "fig11e", "fig11f",
    "fig2", "fig4", "fig7", "fig11",
];

/// Headers plus formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

type Column<'a, T> = (&'a str, fn(&T) -> String);

impl Table {
    fn build<T>(items: &[T], cols: &[Column<T>]) -> Self {
        Self {
            headers: cols.iter().map(|(h, _)| h.to_string()).collect(),
            rows: items.iter().map(|it| cols.iter().map(|(_, f)| f(it)).collect()).collect(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn regime(r: Regime) -> String {
    r.as_str().to_string()
}

#[derive(Deserialize)]
struct ShareView {
    group: String,
    fraction: f64,
    share_pct: f64,
}

#[derive(Deserialize)]
struct EquilibriumView {
    exceedance: Vec<ExceedancePoint>,
    shares: Vec<ShareView>,
}

#[derive(Deserialize)]
struct FrontierView {
    points: Vec<FrontierPoint>,
    kinks: Vec<f64>,
}

#[derive(Deserialize)]
pub struct WealthComparison {
    pub wealth: f64,
    pub panel: String,
    pub baseline: f64,
    pub optimum: f64,
}

#[derive(Deserialize)]
struct OptimizeView {
    grid: Vec<FrontierPoint>,
    wealth: Vec<WealthComparison>,
}

#[derive(Deserialize)]
struct SweepView {
    rows: Vec<SweepRow>,
}

#[derive(Deserialize)]
struct TransitionView {
    rows: Vec<TransitionRow>,
}

/// Frontier point tagged with whether it is the grid point nearest a kink.
struct Marked<'a> {
    p: &'a FrontierPoint,
    kink: bool,
}

fn marked<'a>(points: &'a [FrontierPoint], kinks: &[f64]) -> Vec<Marked<'a>> {
    let nearest: Vec<usize> = kinks
        .iter()
        .filter_map(|k| (0..points.len()).min_by(|&a, &b| (points[a].tau_k - k).abs().total_cmp(&(points[b].tau_k - k).abs())))
        .collect();
    points.iter().enumerate().map(|(i, p)| Marked { p, kink: nearest.contains(&i) }).collect()
}

fn frontier_panel(fig: &str, points: &[Marked]) -> Table {
    let mut cols: Vec<Column<Marked>> = vec![("tau_k", |m| num(m.p.tau_k))];
    let panel: Vec<Column<Marked>> = match fig {
        "a" => vec![("tau_l", |m| num(m.p.tau_l)), ("tau_c", |m| num(m.p.tau_c))],
        "b" => vec![("welfare", |m| num(m.p.welfare))],
        "c" => vec![("capital", |m| num(m.p.capital))],
        "d" => vec![
            ("consumption", |m| num(m.p.consumption)),
            ("consumption_workers", |m| num(m.p.consumption_workers)),
            ("consumption_entrepreneurs", |m| num(m.p.consumption_entrepreneurs)),
        ],
        "e" => vec![("R", |m| num(m.p.gross_rate)), ("pretax_rate", |m| num(m.p.pretax_rate))],
        _ => vec![("omega", |m| num(m.p.omega)), ("post_tax_wage", |m| num(m.p.post_tax_wage))],
    };
    cols.extend(panel);
    cols.push(("regime", |m| regime(m.p.regime)));
    cols.push(("kink", |m| u8::from(m.kink).to_string()));
    Table::build(points, &cols)
}

fn grid_panel(fig: &str, points: &[FrontierPoint]) -> Table {
    let mut cols: Vec<Column<FrontierPoint>> = vec![("tau_l", |p| num(p.tau_l)), ("tau_k", |p| num(p.tau_k))];
    let panel: Vec<Column<FrontierPoint>> = match fig {
        "a" => vec![("tau_c", |p| num(p.tau_c))],
        "b" => vec![("welfare", |p| num(p.welfare))],
        "c" => vec![("capital", |p| num(p.capital))],
        "d" => vec![
            ("consumption", |p| num(p.consumption)),
            ("consumption_workers", |p| num(p.consumption_workers)),
            ("consumption_entrepreneurs", |p| num(p.consumption_entrepreneurs)),
        ],
        "e" => vec![("R", |p| num(p.gross_rate)), ("pretax_rate", |p| num(p.pretax_rate))],
        _ => vec![("omega", |p| num(p.omega)), ("post_tax_wage", |p| num(p.post_tax_wage))],
    };
    cols.extend(panel);
    cols.push(("regime", |p| regime(p.regime)));
    Table::build(points, &cols)
}

fn sweep_table(param: &str, rows: &[SweepRow]) -> Table {
    let mut t = Table::build(
        rows,
        &[
            ("value", |r| num(r.value)),
            ("tau_l", |r| num(r.tau_l)),
            ("tau_k", |r| num(r.tau_k)),
            ("tau_c", |r| num(r.tau_c)),
            ("welfare", |r| num(r.welfare)),
            ("R", |r| num(r.gross_rate)),
            ("pretax_rate", |r| num(r.pretax_rate)),
            ("omega", |r| num(r.omega)),
            ("regime", |r| r.regime.map(regime).unwrap_or_default()),
        ],
    );
    t.headers[0] = param.to_string();
    t
}

fn transition_panel(fig: &str, rows: &[TransitionRow]) -> Table {
    let mut cols: Vec<Column<TransitionRow>> = vec![("t", |r| r.t.to_string())];
    let panel: Vec<Column<TransitionRow>> = match fig {
        "a" => vec![("R", |r| num(r.gross_rate))],
        "b" => vec![("omega", |r| num(r.omega))],
        "c" => vec![("capital", |r| num(r.capital))],
        "d" => vec![
            ("consumption_total", |r| num(r.consumption_total)),
            ("consumption_workers", |r| num(r.consumption_workers)),
            ("consumption_entrepreneurs", |r| num(r.consumption_entrepreneurs)),
        ],
        "e" => vec![("bonds_workers", |r| num(r.bonds_workers)), ("bonds_entrepreneurs", |r| num(r.bonds_entrepreneurs))],
        _ => vec![
            ("revenue_total", |r| num(r.revenue_total)),
            ("revenue_labor", |r| num(r.revenue_labor)),
            ("revenue_consumption", |r| num(r.revenue_consumption)),
            ("revenue_capital", |r| num(r.revenue_capital)),
        ],
    };
    cols.extend(panel);
    Table::build(rows, &cols)
}

/// Artifact a figure is built from.
pub fn source_artifact(fig: &str) -> Option<&'static str> {
    Some(match fig {
        "fig2a" | "fig2b" => "equilibrium.json",
        f if f.starts_with("fig4") => "frontier.json",
        "fig5" => "sweep_no_consumption_tax_gamma.json",
        "fig6" => "sweep_no_consumption_tax_sigma.json",
        f if f.starts_with("fig7") || f == "fig8" => "optimize.json",
        "fig9" => "sweep_full_gamma.json",
        "fig10" => "sweep_full_sigma.json",
        f if f.starts_with("fig11") => "transition.json",
        _ => return None,
    })
}

/// Builds one figure's table from the artifacts in `dir`.
pub fn build(fig: &str, dir: &Path) -> Result<Table, CliError> {
    let artifact = source_artifact(fig).ok_or_else(|| CliError::Config(format!("unknown figure id '{fig}'")))?;
    let sub = |prefix: &str| fig.strip_prefix(prefix).unwrap_or("");
    Ok(match fig {
        "fig2a" => Table::build(
            &read_json::<EquilibriumView>(dir, artifact)?.exceedance,
            &[
                ("wealth", |p| num(p.wealth)),
                ("exceedance_prob", |p| num(p.exceedance_prob)),
                ("source", |p| p.source.as_str().to_string()),
            ],
        ),
        "fig2b" => Table::build(
            &read_json::<EquilibriumView>(dir, artifact)?.shares,
            &[("group", |s| s.group.clone()), ("fraction", |s| num(s.fraction)), ("share_pct", |s| num(s.share_pct))],
        ),
        f if f.starts_with("fig4") => {
            let v: FrontierView = read_json(dir, artifact)?;
            frontier_panel(sub("fig4"), &marked(&v.points, &v.kinks))
        }
        "fig5" | "fig9" => sweep_table("gamma", &read_json::<SweepView>(dir, artifact)?.rows),
        "fig6" | "fig10" => sweep_table("sigma", &read_json::<SweepView>(dir, artifact)?.rows),
        "fig8" => Table::build(
            &read_json::<OptimizeView>(dir, artifact)?.wealth,
            &[
                ("wealth", |w| num(w.wealth)),
                ("panel", |w| w.panel.clone()),
                ("baseline_exceedance", |w| num(w.baseline)),
                ("optimum_exceedance", |w| num(w.optimum)),
            ],
        ),
        f if f.starts_with("fig7") => grid_panel(sub("fig7"), &read_json::<OptimizeView>(dir, artifact)?.grid),
        _ => transition_panel(sub("fig11"), &read_json::<TransitionView>(dir, artifact)?.rows),
    })
}

/// Expands a figure group such as `fig4` into its panels.
pub fn expand(fig: &str) -> Vec<String> {
    let panels = |base: &str| ["a", "b", "c", "d", "e", "f"].iter().map(|p| format!("{base}{p}")).collect();
    match fig {
        "fig2" => vec!["fig2a".into(), "fig2b".into()],
        "fig4" | "fig7" | "fig11" => panels(fig),
        f => vec![f.to_string()],
    }
}

/// Figures built from a given artifact.
pub fn figures_from(artifact: &str) -> Vec<String> {
    FIGURES
        .iter()
        .flat_map(|f| expand(f))
        .filter(|f| source_artifact(f) == Some(artifact))
        .fold(Vec::new(), |mut acc, f| {
            if !acc.contains(&f) {
                acc.push(f);
            }
            acc
        })
}

#[derive(Deserialize)]
struct HashView {
    manifest_hash: String,
}

/// Writes `<fig>.csv` into `dir` for `fig` (or each panel of a group),
/// stamped with the hash of the artifact it was built from.
pub fn emit(fig: &str, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut written = Vec::new();
    for f in expand(fig) {
        let artifact = source_artifact(&f).ok_or_else(|| CliError::Config(format!("unknown figure id '{f}'")))?;
        let hash: HashView = read_json(dir, artifact)?;
        let out = Output { dir: dir.to_path_buf(), hash: hash.manifest_hash };
        let name = format!("{f}.csv");
        out.write_table(&name, &build(&f, dir)?)?;
        written.push(name);
    }
    Ok(written)
}
