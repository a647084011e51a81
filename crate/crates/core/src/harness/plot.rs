use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Line plot of per-round series (round `t = 1..`) as SVG.
pub fn plot_metric(path: &Path, title: &str, lines: &[(String, Vec<f64>)]) -> Result<()> {
    let draw_err = |e: &dyn std::fmt::Display| Error::io(path, std::io::Error::other(e.to_string()));
    let rounds = lines.iter().map(|(_, y)| y.len()).max().unwrap_or(0).max(2);
    let finite = lines.iter().flat_map(|(_, y)| y.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi.max(lo + 1e-12) * 1.05) } else { (0.0, 1.0) };

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(1f64..rounds as f64, lo..hi)
        .map_err(|e| draw_err(&e))?;
    chart.configure_mesh().x_desc("round").y_desc(title).draw().map_err(|e| draw_err(&e))?;
    for (k, (name, ys)) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(
                ys.iter().enumerate().map(|(t, &y)| ((t + 1) as f64, y)),
                color.stroke_width(2),
            ))
            .map_err(|e| draw_err(&e))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(&e))?;
    root.present().map_err(|e| draw_err(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        plot_metric(&path, "cumulative_regret", &[("a".into(), vec![0.0, 1.0, 1.5]), ("b".into(), vec![0.5; 3])])
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
    }
}
