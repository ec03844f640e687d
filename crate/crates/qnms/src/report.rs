//! CSV and SVG report writers.

use std::fmt::Write as _;
use std::path::Path;

use qnms_core::evaluation::{Method, RecallReport};
use qnms_core::training::EpochLog;

use crate::error::{Error, Result};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

/// `report.csv`: `#` header lines with the run parameters, then
/// `method,split,N,referent_recall,contextual_recall`. Undefined recalls
/// are written as `NA`.
pub fn recall_csv(report: &RecallReport, split: &str, header: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k}={v}");
    }
    let _ = writeln!(out, "# queries={}", report.queries);
    let _ = writeln!(out, "# referent_queries={}", report.referent_queries);
    let _ = writeln!(out, "# contextual_boxes={}", report.contextual_boxes);
    out.push_str("method,split,N,referent_recall,contextual_recall\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{split},{},{},{}",
            r.method.as_str(),
            r.budget,
            cell(r.referent_recall),
            cell(r.contextual_recall)
        );
    }
    out
}

pub fn loss_csv(history: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss\n");
    for h in history {
        let _ = writeln!(out, "{},{}", h.epoch, h.loss);
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Recall-vs-N curves on a log-scaled N axis, one line per method and
/// split (solid referent, dashed contextual).
pub fn recall_svg(report: &RecallReport) -> String {
    let budgets: Vec<usize> = {
        let mut b: Vec<usize> = report.rows.iter().map(|r| r.budget).collect();
        b.sort_unstable();
        b.dedup();
        b
    };
    let lo = (*budgets.first().unwrap_or(&1) as f64).ln();
    let hi = (*budgets.last().unwrap_or(&1) as f64).ln();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |n: usize| MARGIN + ((n as f64).ln() - lo) / span * (W - 2.0 * MARGIN);
    let y = |v: f64| H - MARGIN - v * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN} {MARGIN} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#,
            MARGIN - 6.0,
            y(tick) + 4.0
        );
    }
    for &n in &budgets {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{n}</text>"#,
            x(n),
            H - MARGIN + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">N (proposals kept)</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">recall</text>"#,
        H / 2.0,
        H / 2.0
    );

    let mut legend = 0;
    for (method, colour) in [(Method::Baseline, "#d62728"), (Method::QueryAware, "#1f77b4")] {
        type Pick = fn(&qnms_core::evaluation::RecallRow) -> Option<f64>;
        let splits: [(&str, &str, Pick); 2] = [
            ("referent", "", |r| r.referent_recall),
            ("contextual", "6 4", |r| r.contextual_recall),
        ];
        for (name, dash, pick) in splits {
            let pts: Vec<String> = report
                .rows_for(method)
                .filter_map(|r| pick(r).map(|v| format!("{:.2},{:.2}", x(r.budget), y(v))))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN + 16.0 * legend as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{t}" y="{ty}">{} {name}</text>"#,
                method.as_str(),
                a = W - MARGIN - 150.0,
                b = W - MARGIN - 125.0,
                t = W - MARGIN - 120.0,
                ty = ly + 4.0
            );
            legend += 1;
        }
    }
    s.push_str("</svg>\n");
    s
}
