use std::path::Path;

use plotters::prelude::*;

use super::{BarFigure, ReportError, StackFigure};
use crate::evalgen::{Framing, Verdict};
use crate::scoring::Variant;

fn err<E: std::fmt::Display>(e: E) -> ReportError {
    ReportError::Plot(e.to_string())
}

const BAND_COLORS: [RGBColor; 4] = [RGBColor(46, 125, 50), RGBColor(249, 168, 37), RGBColor(198, 40, 40), RGBColor(120, 120, 120)];

/// One grouped bar chart per (platform, variant): framings on the x axis,
/// one bar per model. Returns the file names written.
pub fn bar_charts(fig: &BarFigure, dir: &Path) -> Result<Vec<String>, ReportError> {
    let mut platforms: Vec<&str> = fig.bars.iter().map(|b| b.platform.as_str()).collect();
    platforms.sort();
    platforms.dedup();
    let mut models: Vec<&str> = fig.bars.iter().map(|b| b.model.as_str()).collect();
    models.sort();
    models.dedup();
    let mut written = Vec::new();
    for platform in platforms {
        for variant in [Variant::Full, Variant::CommonMorphemesExcluded] {
            let bars: Vec<_> = fig.bars.iter().filter(|b| b.platform == platform && b.variant == variant).collect();
            if bars.is_empty() {
                continue;
            }
            let name = format!("{}_f1_{platform}_{}.svg", fig.task, variant.as_str());
            let path = dir.join(&name);
            let root = SVGBackend::new(&path, (800, 420)).into_drawing_area();
            root.fill(&WHITE).map_err(err)?;
            let mut chart = ChartBuilder::on(&root)
                .caption(format!("{} F1, {platform} ({})", fig.task, variant.as_str()), ("sans-serif", 20))
                .margin(10)
                .x_label_area_size(30)
                .y_label_area_size(40)
                .build_cartesian_2d(0f64..Framing::ALL.len() as f64, 0f64..1f64)
                .map_err(err)?;
            chart
                .configure_mesh()
                .disable_x_mesh()
                .x_labels(Framing::ALL.len() * 2 + 1)
                .x_label_formatter(&|x| {
                    let i = x.floor() as usize;
                    if (x - i as f64 - 0.5).abs() < 1e-6 && i < Framing::ALL.len() {
                        Framing::ALL[i].to_string()
                    } else {
                        String::new()
                    }
                })
                .y_desc("F1")
                .draw()
                .map_err(err)?;
            let width = 0.8 / models.len() as f64;
            for (mi, model) in models.iter().enumerate() {
                let color = Palette99::pick(mi).to_rgba();
                let rects: Vec<_> = bars
                    .iter()
                    .filter(|b| b.model == *model)
                    .map(|b| {
                        let x0 = b.framing as usize as f64 + 0.1 + width * mi as f64;
                        Rectangle::new([(x0, 0.0), (x0 + width * 0.95, b.f1)], color.filled())
                    })
                    .collect();
                chart
                    .draw_series(rects)
                    .map_err(err)?
                    .label(*model)
                    .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
            }
            chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(err)?;
            root.present().map_err(err)?;
            written.push(name);
        }
    }
    Ok(written)
}

/// One 100% stacked bar chart of verdict shares per platform.
pub fn stacked_charts(fig: &StackFigure, dir: &Path) -> Result<Vec<String>, ReportError> {
    let mut platforms: Vec<&str> = fig.stacks.iter().map(|s| s.platform.as_str()).collect();
    platforms.sort();
    platforms.dedup();
    let mut written = Vec::new();
    for platform in platforms {
        let name = format!("decoding_distribution_{platform}.svg");
        let path = dir.join(&name);
        let root = SVGBackend::new(&path, (800, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("decoding verdicts, {platform}"), ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(40)
            .build_cartesian_2d(0f64..Framing::ALL.len() as f64, 0f64..100f64)
            .map_err(err)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(Framing::ALL.len() * 2 + 1)
            .x_label_formatter(&|x| {
                let i = x.floor() as usize;
                if (x - i as f64 - 0.5).abs() < 1e-6 && i < Framing::ALL.len() {
                    Framing::ALL[i].to_string()
                } else {
                    String::new()
                }
            })
            .y_desc("% of definitions")
            .draw()
            .map_err(err)?;
        for (vi, verdict) in Verdict::ALL.iter().enumerate() {
            let color = BAND_COLORS[vi];
            let rects: Vec<_> = fig
                .stacks
                .iter()
                .filter(|s| s.platform == platform)
                .map(|s| {
                    let below: f64 = s.bands[..vi].iter().map(|b| b.percent).sum();
                    let x0 = s.framing as usize as f64 + 0.2;
                    Rectangle::new([(x0, below), (x0 + 0.6, below + s.bands[vi].percent)], color.filled())
                })
                .collect();
            chart
                .draw_series(rects)
                .map_err(err)?
                .label(verdict.as_str())
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(err)?;
        root.present().map_err(err)?;
        written.push(name);
    }
    Ok(written)
}
