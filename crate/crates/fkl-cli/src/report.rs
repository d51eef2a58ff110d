use crate::runner::ExperimentRecord;

const PALETTE: &[&str] = &["#1b6ca8", "#c7402d", "#3a8f4d", "#8756b0", "#b08c2f"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 60.0;
const MR: f64 = 20.0;
const MT: f64 = 20.0;
const MB: f64 = 45.0;

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    reference: Option<f64>,
}

fn column(rec: &ExperimentRecord, name: &str) -> Option<usize> {
    rec.header.iter().position(|h| h == name)
}

/// Pick the (x, y) columns to plot: degree against the first rate-like
/// column, falling back to the first parseable numeric pair.
fn extract(rec: &ExperimentRecord) -> Option<Series> {
    let xi = column(rec, "degree")?;
    let yi = ["rate_log", "upper_log", "estimate", "gap"]
        .iter()
        .find_map(|c| column(rec, c))?;
    let ri = column(rec, "reference_log");
    let mut points = Vec::new();
    let mut reference = None;
    for row in &rec.rows {
        let (Ok(x), Ok(y)) = (row[xi].parse::<f64>(), row[yi].parse::<f64>()) else {
            continue;
        };
        points.push((x, y));
        if let Some(ri) = ri {
            if let Ok(r) = row[ri].parse::<f64>() {
                reference = Some(r);
            }
        }
    }
    if points.is_empty() {
        return None;
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(Series {
        name: rec.spec.name.clone(),
        points,
        reference,
    })
}

pub fn text_summary(records: &[ExperimentRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&format!(
            "{}: operation={} rows={} hash={} wall={}ms\n",
            rec.spec.name,
            rec.spec.operation,
            rec.rows.len(),
            &rec.input_hash[..12],
            rec.wall_ms
        ));
        if rec.rows.is_empty() {
            out.push_str("  no data\n");
            continue;
        }
        out.push_str(&format!("  columns: {}\n", rec.header.join(", ")));
        if let Some(last) = rec.rows.last() {
            out.push_str(&format!("  last row: {}\n", last.join(", ")));
        }
    }
    out
}

/// Self-contained SVG line plot of rate vs degree, one series per record,
/// dashed rule at the reference value when present. Returns None when no
/// record has plottable rows.
pub fn svg_plot(records: &[ExperimentRecord]) -> Option<String> {
    let series: Vec<Series> = records.iter().filter_map(extract).collect();
    if series.is_empty() {
        return None;
    }
    let all_x = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let all_y = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.reference));
    let (x0, x1) = bounds(all_x);
    let (y0, y1) = bounds(all_y);
    let px = |x: f64| ML + (x - x0) / (x1 - x0).max(1e-300) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0).max(1e-300) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB,
        H - MB
    ));
    for (label, x) in [(x0, x0), (x1, x1)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            px(x),
            H - MB + 16.0
        ));
    }
    for y in [y0, y1] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y:.4}</text>\n",
            ML - 6.0,
            py(y) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">degree</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0
    ));

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(r) = s.reference {
            svg.push_str(&format!(
                "<line x1=\"{ML}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"{color}\" \
                 stroke-dasharray=\"5,4\" opacity=\"0.6\"/>\n",
                py(r),
                W - MR
            ));
        }
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            ML + 10.0,
            MT + 14.0 * (k as f64 + 1.0),
            xml_escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    (lo, hi)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
