//! Minimal SVG plot writer: axes, data polyline with markers, and an
//! optional guide line, on log-log scales.

pub struct LogLogPlot {
    pub title: String,
    pub series: Vec<(f64, f64)>,
    /// Slope of the reference guide drawn through the first data point.
    pub guide_slope: Option<f64>,
}

impl LogLogPlot {
    pub fn render(&self) -> String {
        let (w, h) = (640.0, 480.0);
        let margin = 60.0;
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| (x.log10(), y.log10()))
            .collect();
        if pts.is_empty() {
            return format!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\"><text x=\"20\" y=\"40\">no positive data</text></svg>"
            );
        }
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let pad = 0.25;
        x0 -= pad;
        x1 += pad;
        y0 -= pad;
        y1 += pad;
        let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
        let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
            margin, self.title
        ));
        // Axes.
        out.push_str(&format!(
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            m = margin,
            b = h - margin,
            r = w - margin,
            t = margin
        ));
        // Guide line through the first point.
        if let Some(slope) = self.guide_slope {
            let (gx, gy) = pts[0];
            let y_at = |x: f64| gy + slope * (x - gx);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n",
                sx(x0 + pad),
                sy(y_at(x0 + pad)),
                sx(x1 - pad),
                sy(y_at(x1 - pad))
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"gray\">slope {slope}</text>\n",
                sx(x1 - pad) - 80.0,
                sy(y_at(x1 - pad)) - 8.0
            ));
        }
        // Data polyline + markers.
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"steelblue\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        // Tick labels at the data points (x) and extremes (y).
        for &(x, _) in &pts {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>\n",
                sx(x),
                h - margin + 18.0,
                10f64.powf(x)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2e}</text>\n",
            8.0,
            sy(y0 + pad),
            10f64.powf(y0 + pad)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2e}</text>\n",
            8.0,
            sy(y1 - pad),
            10f64.powf(y1 - pad)
        ));
        out.push_str("</svg>\n");
        out
    }
}
