//! Static SVG figures from observable and sweep CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use lhring::observables::{ObservableSeries, CSV_SCHEMA};
use plotters::prelude::*;

pub const SWEEP_SCHEMA: &str = "# lhring-sweep v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// Sweep files get the sweep layout, one series file a single panel, several the transport layout.
    Auto,
    /// P_T, P_q0 and P_NS in one panel.
    Single,
    /// P_NS above, P_T below, one line per file.
    Transport,
    /// P_q0 and P_NS in one panel.
    Momentum,
    /// P_T at the readout time against the swept parameter.
    Sweep,
}

/// A named curve with an optional error band.
struct Curve {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
    se: Vec<f64>,
}

struct Sweep {
    parameter: String,
    curve: Curve,
}

enum Input {
    Series(String, ObservableSeries),
    Sweep(Sweep),
}

fn label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_sweep(text: &str, name: String) -> anyhow::Result<Sweep> {
    let mut lines = text.lines().skip(1);
    let header = lines.next().context("sweep CSV has no header")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() != 3 || cols[1] != "P_T" || cols[2] != "P_T_stderr" {
        bail!("unexpected sweep header {header:?}");
    }
    let mut curve = Curve { label: name, x: vec![], y: vec![], se: vec![] };
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("sweep CSV line {}", i + 3))?;
        if v.len() != 3 {
            bail!("sweep CSV line {} has {} columns", i + 3, v.len());
        }
        curve.x.push(v[0]);
        curve.y.push(v[1]);
        curve.se.push(v[2]);
    }
    if curve.x.is_empty() {
        bail!("sweep CSV has no data rows");
    }
    Ok(Sweep { parameter: cols[0].to_string(), curve })
}

fn read(path: &Path) -> anyhow::Result<Input> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().next().map(str::trim);
    match first {
        Some(CSV_SCHEMA) => Ok(Input::Series(
            label(path),
            ObservableSeries::read_csv(&text).with_context(|| path.display().to_string())?,
        )),
        Some(SWEEP_SCHEMA) => {
            Ok(Input::Sweep(read_sweep(&text, label(path)).with_context(|| path.display().to_string())?))
        }
        Some(other) => {
            Err(lhring::Error::validation(format!("{}: unknown CSV schema {other:?}", path.display())).into())
        }
        None => Err(lhring::Error::validation(format!("{}: empty CSV", path.display())).into()),
    }
}

fn bounds(curves: &[Curve]) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for i in 0..c.x.len() {
            x = (x.0.min(c.x[i]), x.1.max(c.x[i]));
            y = (y.0.min(c.y[i] - c.se[i]), y.1.max(c.y[i] + c.se[i]));
        }
    }
    if x.1 <= x.0 {
        x.1 = x.0 + 1.0;
    }
    let pad = 0.05 * (y.1 - y.0).max(1e-3);
    ((x.0, x.1), (y.0.min(0.0) - pad, y.1 + pad))
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    x_desc: &str,
    y_desc: &str,
    curves: &[Curve],
) -> anyhow::Result<()>
where
    DB::ErrorType: 'static,
{
    let ((x0, x1), (y0, y1)) = bounds(curves);
    let mut chart = ChartBuilder::on(area)
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw().map_err(|e| anyhow::anyhow!("{e}"))?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        if c.se.iter().any(|&s| s > 0.0) {
            let mut band: Vec<(f64, f64)> = c.x.iter().zip(&c.y).zip(&c.se).map(|((&x, &y), &s)| (x, y + s)).collect();
            band.extend(c.x.iter().zip(&c.y).zip(&c.se).rev().map(|((&x, &y), &s)| (x, y - s)));
            chart
                .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        chart
            .draw_series(LineSeries::new(c.x.iter().copied().zip(c.y.iter().copied()), color.stroke_width(2)))
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

fn series_curve(name: &str, what: &str, s: &ObservableSeries) -> Curve {
    let (y, se) = match what {
        "P_T" => (&s.p_t, &s.p_t_se),
        "P_q0" => (&s.p_q0, &s.p_q0_se),
        _ => (&s.p_ns, &s.p_ns_se),
    };
    Curve { label: name.to_string(), x: s.t.clone(), y: y.clone(), se: se.clone() }
}

/// Draws `inputs` with `layout` into an SVG at `out`.
pub fn render(inputs: &[PathBuf], layout: Layout, out: &Path) -> anyhow::Result<()> {
    let data: Vec<Input> = inputs.iter().map(|p| read(p)).collect::<anyhow::Result<_>>()?;
    let sweeps = data.iter().filter(|d| matches!(d, Input::Sweep(_))).count();
    let layout = match layout {
        Layout::Auto if sweeps > 0 => Layout::Sweep,
        Layout::Auto if data.len() == 1 => Layout::Single,
        Layout::Auto => Layout::Transport,
        l => l,
    };
    if (layout == Layout::Sweep) != (sweeps == data.len()) || (sweeps > 0 && sweeps < data.len()) {
        return Err(lhring::Error::validation(format!("layout {layout:?} does not match the CSV schemas")).into());
    }
    let series: Vec<(&str, &ObservableSeries)> = data
        .iter()
        .filter_map(|d| match d {
            Input::Series(n, s) => Some((n.as_str(), s)),
            Input::Sweep(_) => None,
        })
        .collect();
    let tall = layout == Layout::Transport;
    let root = SVGBackend::new(out, (800, if tall { 800 } else { 480 })).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    match layout {
        Layout::Single => {
            let curves: Vec<Curve> = series
                .iter()
                .flat_map(|(n, s)| {
                    ["P_T", "P_q0", "P_NS"].map(|w| {
                        let label = if series.len() == 1 { w.to_string() } else { format!("{n} {w}") };
                        Curve { label, ..series_curve(n, w, s) }
                    })
                })
                .collect();
            panel(&root, "t", "probability", &curves)?;
        }
        Layout::Momentum => {
            let curves: Vec<Curve> = series
                .iter()
                .flat_map(|(n, s)| {
                    ["P_q0", "P_NS"].map(|w| Curve { label: format!("{n} {w}"), ..series_curve(n, w, s) })
                })
                .collect();
            panel(&root, "t", "population", &curves)?;
        }
        Layout::Transport => {
            let (upper, lower) = root.split_vertically(400);
            let ns: Vec<Curve> = series.iter().map(|(n, s)| series_curve(n, "P_NS", s)).collect();
            let pt: Vec<Curve> = series.iter().map(|(n, s)| series_curve(n, "P_T", s)).collect();
            panel(&upper, "t", "P_NS", &ns)?;
            panel(&lower, "t", "P_T", &pt)?;
        }
        Layout::Sweep => {
            let mut param = String::new();
            let curves: Vec<Curve> = data
                .into_iter()
                .filter_map(|d| match d {
                    Input::Sweep(s) => {
                        param = s.parameter;
                        Some(s.curve)
                    }
                    Input::Series(..) => None,
                })
                .collect();
            panel(&root, &param, "P_T", &curves)?;
        }
        Layout::Auto => unreachable!("resolved above"),
    }
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}
