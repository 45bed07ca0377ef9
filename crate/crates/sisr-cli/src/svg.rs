//! Renderer-free static SVG output: polyline plots and rect heatmaps.

/// One named series of (x, y) points; gaps (`None`) break the polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, Option<f64>)>,
    pub color: &'a str,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Line plot with log-x support and a small legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, log_x: bool, series: &[Series]) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| if log_x { p.0.log10() } else { p.0 }))
        .collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().filter_map(|p| p.1))
        .collect();
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo).max(1e-300) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo).max(1e-300) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        W / 2.0
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    for k in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let label_x = if log_x { 10f64.powf(fx) } else { fx };
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            sx(fx),
            H - MARGIN + 18.0,
            fmt_sig(label_x)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fmt(fy)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{x_label}</text>\n",
        W / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        H / 2.0,
        H / 2.0
    ));
    for (i, s) in series.iter().enumerate() {
        let mut run: Vec<String> = Vec::new();
        let mut segs: Vec<Vec<String>> = Vec::new();
        for (x, y) in &s.points {
            let x = if log_x { x.log10() } else { *x };
            match y {
                Some(y) => run.push(format!("{:.2},{:.2}", sx(x), sy(*y))),
                None => {
                    if !run.is_empty() {
                        segs.push(std::mem::take(&mut run));
                    }
                }
            }
        }
        if !run.is_empty() {
            segs.push(run);
        }
        for seg in segs {
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                s.color,
                seg.join(" ")
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            W - MARGIN - 150.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            s.color,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap over an (x, y) grid; `None` cells render grey.
pub fn heatmap(
    title: &str,
    x_labels: &[f64],
    y_labels: &[f64],
    values: &[Vec<Option<f64>>],
) -> String {
    let defined: Vec<f64> = values.iter().flatten().filter_map(|v| *v).collect();
    let (lo, hi) = bounds(&defined);
    let nx = x_labels.len() as f64;
    let ny = y_labels.len() as f64;
    let cw = (W - 2.0 * MARGIN) / nx;
    let ch = (H - 2.0 * MARGIN) / ny;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        W / 2.0
    ));
    for (i, _x) in x_labels.iter().enumerate() {
        for (j, _y) in y_labels.iter().enumerate() {
            let v = values[i][j];
            let color = match v {
                Some(v) => {
                    let t = ((v - lo) / (hi - lo).max(1e-300)).clamp(0.0, 1.0);
                    // blue (low CV, coherent) to red (high CV)
                    format!(
                        "rgb({},{},{})",
                        (255.0 * t) as u8,
                        (64.0 + 32.0 * (1.0 - t)) as u8,
                        (255.0 * (1.0 - t)) as u8
                    )
                }
                None => "rgb(200,200,200)".into(),
            };
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                MARGIN + i as f64 * cw,
                H - MARGIN - (j as f64 + 1.0) * ch,
                cw,
                ch,
                color
            ));
        }
    }
    for (i, x) in x_labels.iter().enumerate() {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            MARGIN + (i as f64 + 0.5) * cw,
            H - MARGIN + 14.0,
            fmt_sig(*x)
        ));
    }
    for (j, y) in y_labels.iter().enumerate() {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
            MARGIN - 4.0,
            H - MARGIN - (j as f64 + 0.5) * ch + 3.0,
            fmt_sig(*y)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() && lo < hi {
        (lo, hi)
    } else if lo.is_finite() {
        (lo - 1.0, lo + 1.0)
    } else {
        (0.0, 1.0)
    }
}

fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 0.01 && x.abs() < 1000.0 {
        format!("{x:.3}")
    } else {
        format!("{x:.1e}")
    }
}
