//! Plot scripts for result tables. Scripts are plain Python with
//! matplotlib, read the CSV through a path relative to themselves and are
//! never run here.

use std::path::Path;

use crate::error::{RunError, RunResult};
use crate::table::Table;

/// One plotted line.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotScript {
    pub file_name: String,
    /// What the script draws, as read from the table here.
    pub series: Vec<Series>,
    pub body: String,
}

fn mismatch(t: &Table, what: &str) -> RunError {
    RunError::Config(format!("{}: schema mismatch: {what}", t.name))
}

fn num(t: &Table, s: &str) -> RunResult<f64> {
    s.parse::<f64>().map_err(|_| mismatch(t, &format!("`{s}` is not a number")))
}

fn has(t: &Table, cols: &[&str]) -> bool {
    cols.iter().all(|c| t.columns.iter().any(|h| h == c))
}

/// Rows of `t` as `(group key, x, y)`, keeping rows where `filter` holds.
fn grouped(t: &Table, x: &str, y: &str, group: &[&str], filter: Option<(&str, &str)>) -> RunResult<Vec<Series>> {
    let idx = |c: &str| t.columns.iter().position(|h| h == c).expect("checked by caller");
    let (xi, yi) = (idx(x), idx(y));
    let gi: Vec<usize> = group.iter().map(|g| idx(g)).collect();
    let mut out: Vec<Series> = Vec::new();
    for r in &t.rows {
        if let Some((c, v)) = filter {
            if r[idx(c)] != v {
                continue;
            }
        }
        let label = group.iter().zip(&gi).map(|(g, i)| format!("{g}={}", r[*i])).collect::<Vec<_>>().join(" ");
        let pt = (num(t, &r[xi])?, num(t, &r[yi])?);
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push(pt),
            None => out.push(Series { label, points: vec![pt] }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

fn distinct(t: &Table, col: &str) -> usize {
    let mut v: Vec<&str> = t.column(col).unwrap_or_default();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn py_list(items: &[&str]) -> String {
    items.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ")
}

/// Script body: read the CSV, optionally filter rows, plot `y` against
/// `x` with one line per `group` combination.
#[allow(clippy::too_many_arguments)]
fn script(csv_rel: &str, png: &str, x: &str, ys: &[&str], group: &[&str], filter: Option<(&str, &str)>, xlabel: &str, ylabel: &str, logx: bool) -> String {
    let filter = match filter {
        Some((c, v)) => format!("rows = [r for r in rows if r[{c:?}] == {v:?}]\n"),
        None => String::new(),
    };
    let logx = if logx { "ax.set_xscale(\"log\", base=2)\n" } else { "" };
    format!(
        r##"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = os.path.join(HERE, {csv_rel:?})

with open(CSV, newline="") as f:
    rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
{filter}
GROUP = [{group}]
series = {{}}
for r in rows:
    key = " ".join(f"{{g}}={{r[g]}}" for g in GROUP)
    series.setdefault(key, []).append(r)

fig, ax = plt.subplots()
for key, rs in series.items():
    rs.sort(key=lambda r: float(r[{x:?}]))
    xs = [float(r[{x:?}]) for r in rs]
    for y in [{ys}]:
        label = " ".join(s for s in (key, y if len([{ys}]) > 1 else "") if s)
        ax.plot(xs, [float(r[y]) for r in rs], marker="o", label=label)
{logx}ax.set_xlabel({xlabel:?})
ax.set_ylabel({ylabel:?})
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, {png:?}))
"##,
        group = py_list(group),
        ys = py_list(ys),
    )
}

/// Scripts that fit `t`: ratio against `n` and against `sigma` for ratio
/// tables, lattice signal against the closed form for solver profiles.
pub fn plot_scripts(t: &Table, csv_rel: &str) -> RunResult<Vec<PlotScript>> {
    if t.columns.is_empty() || t.rows.is_empty() {
        return Err(mismatch(t, "no rows"));
    }
    let mut out = Vec::new();
    if has(t, &["n", "sigma_x", "alpha", "beta", "ratio", "ratio_method"]) {
        let f = Some(("ratio_method", "analytic"));
        let by_sigma = distinct(t, "sigma_x") > 1;
        if distinct(t, "n") > 1 || !by_sigma {
            let g = ["alpha", "beta", "sigma_x"];
            out.push(PlotScript {
                file_name: "plot_ratio_vs_n.py".into(),
                series: grouped(t, "n", "ratio", &g, f)?,
                body: script(csv_rel, "ratio_vs_n.png", "n", &["ratio"], &g, f, "agents n", "kappa / l0", true),
            });
        }
        if by_sigma {
            let g = ["n", "alpha", "beta"];
            out.push(PlotScript {
                file_name: "plot_ratio_vs_sigma.py".into(),
                series: grouped(t, "sigma_x", "ratio", &g, f)?,
                body: script(csv_rel, "ratio_vs_sigma.png", "sigma_x", &["ratio"], &g, f, "sigma", "kappa / l0", false),
            });
        }
    } else if has(t, &["mode", "t", "l_star", "ansatz"]) {
        let g = ["mode"];
        let mut series = grouped(t, "t", "l_star", &g, None)?;
        series.extend(grouped(t, "t", "ansatz", &g, None)?.into_iter().map(|s| Series { label: format!("{} ansatz", s.label), ..s }));
        out.push(PlotScript {
            file_name: "plot_signal_vs_ansatz.py".into(),
            series,
            body: script(csv_rel, "signal_vs_ansatz.png", "t", &["l_star", "ansatz"], &g, None, "t", "signal at the central node", false),
        });
    } else {
        return Err(mismatch(t, "no plot fits these columns"));
    }
    for s in &mut out {
        if s.series.iter().all(|x| x.points.is_empty()) {
            return Err(mismatch(t, "no analytic rows to plot"));
        }
    }
    Ok(out)
}

/// Writes the scripts for the CSV at `csv` into `dir`.
pub fn emit_plot_scripts(csv: &Path, dir: &Path) -> RunResult<Vec<PlotScript>> {
    let t = Table::read(csv)?;
    std::fs::create_dir_all(dir)?;
    let abs = |p: &Path| std::fs::canonicalize(p);
    let rel = pathdiff::diff_paths(abs(csv)?, abs(dir)?)
        .ok_or_else(|| RunError::Io(format!("no relative path from {} to {}", dir.display(), csv.display())))?;
    let rel = rel.to_string_lossy().replace('\\', "/");
    let scripts = plot_scripts(&t, &rel)?;
    for s in &scripts {
        std::fs::write(dir.join(&s.file_name), &s.body)?;
    }
    Ok(scripts)
}
