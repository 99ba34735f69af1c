use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::EpisodeOutcome;
use crate::trafficsim::TravelLog;
use crate::{Error, Result};

/// Per-tick series of one episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    /// Seconds elapsed, starting at 1.
    pub ticks: Vec<u64>,
    /// Vehicles on the road after each tick.
    pub vehicles: Vec<usize>,
    /// Average travel time of the vehicles departed so far, with those
    /// still travelling counted up to the tick.
    pub att: Vec<f64>,
}

fn running_att(log: &TravelLog, t: u64) -> f64 {
    let mut sum = 0u64;
    let mut n = 0u64;
    for r in log.records.iter().filter(|r| r.depart < t) {
        let end = r.finish.map_or(t, |f| f.min(t));
        sum += end - r.depart;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

pub fn episode_series(outcome: &EpisodeOutcome) -> Series {
    let ticks: Vec<u64> = (1..=outcome.on_road.len() as u64).collect();
    Series {
        att: ticks.iter().map(|&t| running_att(&outcome.log, t)).collect(),
        vehicles: outcome.on_road.clone(),
        ticks,
    }
}

/// A bare line chart.
pub fn render_svg(title: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 50.0;
    let x_max = xs.iter().copied().fold(1.0, f64::max);
    let y_max = ys.iter().copied().fold(1.0, f64::max);
    let px = |x: f64| PAD + x / x_max * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - y / y_max * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} L{PAD} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">time (s)</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y_max:.1}</text>"#,
        PAD - 4.0,
        PAD + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{x_max}</text>"#,
        W - PAD,
        H - PAD + 14.0
    );
    if !xs.is_empty() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="steelblue" fill="none"/>"#,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<name>.csv` (tick, vehicles, att) and two SVG charts rendered
/// from the same numbers. Returns the written paths.
pub fn emit_plots(dir: &Path, name: &str, series: &Series) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("tick,vehicles,att\n");
    for ((t, v), a) in series.ticks.iter().zip(&series.vehicles).zip(&series.att) {
        let _ = writeln!(csv, "{t},{v},{a}");
    }
    let xs: Vec<f64> = series.ticks.iter().map(|&t| t as f64).collect();
    let vehicles: Vec<f64> = series.vehicles.iter().map(|&v| v as f64).collect();
    let files = [
        (format!("{name}.csv"), csv),
        (
            format!("{name}_vehicles.svg"),
            render_svg(&format!("{name}: vehicles on road"), "vehicles", &xs, &vehicles),
        ),
        (
            format!("{name}_att.svg"),
            render_svg(&format!("{name}: average travel time"), "seconds", &xs, &series.att),
        ),
    ];
    let mut out = Vec::new();
    for (file, text) in files {
        let path = dir.join(file);
        write(&path, &text)?;
        out.push(path);
    }
    Ok(out)
}
