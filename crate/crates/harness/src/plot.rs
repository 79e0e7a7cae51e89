//! SVG line charts of sweep results, one file per channel kind, MSE on a
//! log axis.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::sweep::{read_results, ResultRow};
use crate::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum XAxis {
    #[value(name = "K")]
    Sensors,
    #[value(name = "snr_db")]
    SnrDb,
}

impl XAxis {
    fn value(&self, row: &ResultRow) -> f64 {
        match self {
            XAxis::Sensors => row.sensors as f64,
            XAxis::SnrDb => row.snr_db,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            XAxis::Sensors => "number of sensors K",
            XAxis::SnrDb => "SNR [dB]",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SeriesKey {
    #[value(name = "protocol")]
    Protocol,
    #[value(name = "seed")]
    Seed,
}

/// One line: label and `(x, mean MSE)` points sorted by `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn series_label(row: &ResultRow, key: SeriesKey, x: XAxis, rows: &[ResultRow]) -> String {
    let base = match key {
        SeriesKey::Protocol => row.protocol.clone(),
        SeriesKey::Seed => format!("seed {}", row.seed),
    };
    // The axis not plotted is folded into the label when it varies.
    let varies = match x {
        XAxis::Sensors => rows.iter().any(|r| r.snr_db != row.snr_db),
        XAxis::SnrDb => rows.iter().any(|r| r.sensors != row.sensors),
    };
    match (varies, x) {
        (false, _) => base,
        (true, XAxis::Sensors) => format!("{base}, {} dB", row.snr_db),
        (true, XAxis::SnrDb) => format!("{base}, K={}", row.sensors),
    }
}

/// Groups rows of one channel into series; failed rows are skipped and
/// repeated `(series, x)` entries are averaged.
pub fn build_series(rows: &[ResultRow], x: XAxis, key: SeriesKey) -> Vec<Series> {
    // (label, [(x, sum of MSE, count)])
    type Acc = Vec<(String, Vec<(f64, f64, usize)>)>;
    let mut acc: Acc = Vec::new();
    for r in rows.iter().filter(|r| !r.failed()) {
        let label = series_label(r, key, x, rows);
        let i = match acc.iter().position(|(l, _)| *l == label) {
            Some(i) => i,
            None => {
                acc.push((label, Vec::new()));
                acc.len() - 1
            }
        };
        let xv = x.value(r);
        match acc[i].1.iter_mut().find(|(px, _, _)| *px == xv) {
            Some(p) => {
                p.1 += r.mse;
                p.2 += 1;
            }
            None => acc[i].1.push((xv, r.mse, 1)),
        }
    }
    acc.into_iter()
        .map(|(label, pts)| {
            let mut points: Vec<(f64, f64)> = pts.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect()
}

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn plot_err<E: std::fmt::Debug>(e: E) -> HarnessError {
    HarnessError::Plot(format!("{e:?}"))
}

pub fn render_svg(path: &Path, title: &str, x: XAxis, series: &[Series]) -> Result<()> {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    // Zero MSE cannot sit on a log axis; clamp it to a floor.
    let positive = || pts().map(|p| p.1).filter(|v| *v > 0.0);
    let floor = positive().fold(f64::INFINITY, f64::min);
    let top = positive().fold(f64::NEG_INFINITY, f64::max);
    if !x0.is_finite() || !floor.is_finite() {
        return Err(HarnessError::Plot(format!("nothing to plot for {title}")));
    }
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (y0, y1) = (floor / 2.0, top * 2.0);
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(72)
        .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x.label())
        .y_desc("MSE")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let data: Vec<(f64, f64)> = s.points.iter().map(|&(px, py)| (px, py.max(y0))).collect();
        chart
            .draw_series(LineSeries::new(data.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.label.clone())
            .legend(move |(lx, ly)| PathElement::new(vec![(lx, ly), (lx + 18, ly)], color.stroke_width(2)));
        chart
            .draw_series(data.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Renders `<stem>_<channel>.svg` for every channel in the results file.
pub fn plot_results(csv: &Path, out_dir: &Path, x: XAxis, key: SeriesKey) -> Result<Vec<PathBuf>> {
    let rows = read_results(csv)?;
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    let mut channels: Vec<String> = Vec::new();
    for r in &rows {
        if !channels.contains(&r.channel) {
            channels.push(r.channel.clone());
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for ch in channels {
        let subset: Vec<ResultRow> = rows.iter().filter(|r| r.channel == ch).cloned().collect();
        let series = build_series(&subset, x, key);
        let path = out_dir.join(format!("{stem}_{ch}.svg"));
        render_svg(&path, &format!("{stem}: {ch} channel"), x, &series)?;
        written.push(path);
    }
    Ok(written)
}
