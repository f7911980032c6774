use std::fmt::Write as _;

use tsqa::datasets::CorpusRecord;

const WIDTH: f64 = 960.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 40.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// `t` column plus one denormalized column per series. Shorter series
/// leave trailing cells empty.
pub fn to_csv(record: &CorpusRecord) -> String {
    let series = record.values();
    let mut out = String::from("t");
    for s in &record.series {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    for t in 0..n {
        let _ = write!(out, "{t}");
        for s in &series {
            out.push(',');
            if let Some(v) = s.values.get(t) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel per series, drawn from normalized values, with each
/// fluctuation window from the pool shaded.
pub fn to_svg(record: &CorpusRecord) -> String {
    let height = MARGIN + record.series.len() as f64 * (PANEL + MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let inner = WIDTH - 2.0 * MARGIN;
    for (i, s) in record.series.iter().enumerate() {
        let top = MARGIN + i as f64 * (PANEL + MARGIN);
        let n = s.values.len().max(2);
        let x = |t: f64| MARGIN + inner * t / (n - 1) as f64;
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="13">{} (scaling {}, offset {})</text>"#,
            top - 8.0,
            escape(&s.name),
            s.value_scaling,
            s.value_offset
        );
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN}" y="{top:.1}" width="{inner:.1}" height="{PANEL:.1}" fill="none" stroke="#999"/>"##
        );
        for f in &s.pool.fluctuations {
            let x0 = x(f.position as f64);
            let x1 = x((f.position + f.duration.max(1)).min(n - 1) as f64).max(x0 + 1.0);
            let _ = writeln!(
                out,
                r##"<rect class="fluctuation" data-kind="{}" data-start="{}" data-end="{}" x="{x0:.2}" y="{top:.1}" width="{:.2}" height="{PANEL:.1}" fill="#f5b041" fill-opacity="0.3"/>"##,
                f.kind.id(),
                f.position,
                f.position + f.duration,
                x1 - x0
            );
        }
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(t, v)| format!("{:.2},{:.2}", x(t as f64), top + PANEL * (1.0 - v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            points.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}
