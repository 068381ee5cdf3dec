//! Self-contained SVG plots of sweep summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::sweep::{SummaryRow, SweepResult};
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One named curve of per-N summaries.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub rows: Vec<SummaryRow>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_log10(v: f64) -> Option<f64> {
    (v > 0.0 && v.is_finite()).then(|| v.log10())
}

/// Median `log10 sup_error` against `log10 N`, with the interquartile band, and the
/// summary numbers as a table inside `<metadata>` and as a visible text block.
pub fn convergence_svg(title: &str, series: &[Series]) -> String {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for r in &s.rows {
            xs.push((r.n as f64).log10());
            for v in [r.error_q25, r.error_median, r.error_q75] {
                ys.extend(finite_log10(v));
            }
        }
    }
    let (x0, x1) = bounds(&xs, 0.0, 1.0);
    let (y0, y1) = bounds(&ys, -3.0, 0.0);
    let (y0, y1) = (y0.floor(), y1.ceil());
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{h}" viewBox="0 0 {WIDTH} {h}" font-family="sans-serif" font-size="11">"#,
        h = HEIGHT + 22.0 * (1 + series.iter().map(|s| s.rows.len()).sum::<usize>()) as f64,
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    svg.push_str("<metadata>\nstrategy,N,count,error_q25,error_median,error_q75,delta_median,alpha_median,bound56_median\n");
    for s in series {
        for r in &s.rows {
            let _ = writeln!(
                svg,
                "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                escape(&s.name),
                r.n,
                r.count,
                r.error_q25,
                r.error_median,
                r.error_q75,
                r.delta_median,
                r.alpha_median,
                r.bound56_median
            );
        }
    }
    svg.push_str("</metadata>\n");
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    let mut e = y0 as i64;
    while e as f64 <= y1 {
        let y = py(e as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{l}" y1="{y:.1}" x2="{r}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            l - 4.0,
            y + 4.0
        );
        e += 1;
    }
    for n in [2usize, 5, 10, 20, 50, 100, 200, 500, 1000] {
        let x = (n as f64).log10();
        if x < x0 - 1e-12 || x > x1 + 1e-12 {
            continue;
        }
        let xp = px(x);
        let _ = writeln!(
            svg,
            r#"<line x1="{xp:.1}" y1="{b}" x2="{xp:.1}" y2="{}" stroke="black"/><text x="{xp:.1}" y="{}" text-anchor="middle">{n}</text>"#,
            b + 4.0,
            b + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">N</text>"#,
        WIDTH / 2.0,
        b + 34.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">sup error</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts = |f: fn(&SummaryRow) -> f64| -> Vec<(f64, f64)> {
            s.rows
                .iter()
                .filter_map(|r| finite_log10(f(r)).map(|y| (px((r.n as f64).log10()), py(y))))
                .collect()
        };
        let lo = pts(|r| r.error_q25);
        let hi = pts(|r| r.error_q75);
        if !lo.is_empty() && lo.len() == hi.len() {
            let band: Vec<String> = lo
                .iter()
                .chain(hi.iter().rev())
                .map(|(x, y)| format!("{x:.1},{y:.1}"))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
        }
        let mid: Vec<String> = pts(|r| r.error_median)
            .iter()
            .map(|(x, y)| format!("{x:.1},{y:.1}"))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            mid.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            r - 120.0,
            t + 16.0 + 14.0 * k as f64,
            escape(&s.name)
        );
    }

    let mut y = HEIGHT + 16.0;
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{y}" font-family="monospace">strategy     N   median_err   q25          q75          delta_N</text>"#
    );
    for s in series {
        for r in &s.rows {
            y += 22.0;
            let _ = writeln!(
                svg,
                r#"<text x="10" y="{y}" font-family="monospace" xml:space="preserve">{:<10} {:>4}   {:.4e}   {:.4e}   {:.4e}   {:.4e}</text>"#,
                escape(&s.name),
                r.n,
                r.error_median,
                r.error_q25,
                r.error_q75,
                r.delta_median
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut a = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut b = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !a.is_finite() || !b.is_finite() {
        return (lo, hi);
    }
    if b - a < 1e-9 {
        a -= 0.5;
        b += 0.5;
    }
    (a, b)
}

/// Writes `convergence_<strategy>.svg` per strategy and `convergence.svg` with all of them.
pub fn write_plots(result: &SweepResult, dir: &Path, title: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let series: Vec<Series> = result
        .strategies()
        .into_iter()
        .map(|name| Series {
            rows: result.summary(&name),
            name,
        })
        .collect();
    let mut written = Vec::new();
    for s in &series {
        let path = dir.join(format!("convergence_{}.svg", s.name));
        std::fs::write(&path, convergence_svg(&format!("{title}: {}", s.name), std::slice::from_ref(s)))?;
        written.push(path);
    }
    let path = dir.join("convergence.svg");
    std::fs::write(&path, convergence_svg(title, &series))?;
    written.push(path);
    Ok(written)
}
