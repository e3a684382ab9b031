use std::fmt::Write as _;

use crate::stats::{DeltaParity, FairnessReport, Group, Metric, RocPoint};

fn pct(m: &Metric) -> String {
    format!(
        "{:.2} ({:.2}) [{:.2}, {:.2}]",
        100.0 * m.value,
        100.0 * m.ci_half_width,
        100.0 * m.ci_lo,
        100.0 * m.ci_hi
    )
}

fn delta(d: &DeltaParity) -> String {
    format!(
        "{:.2} ({:.2}) [{:.2}, {:.2}]",
        100.0 * d.value,
        100.0 * d.ci_half_width,
        100.0 * d.ci_lo,
        100.0 * d.ci_hi
    )
}

/// Side-by-side text table, one column per system. Percentages to 2 decimals,
/// each cell as `value (half-width) [lo, hi]`.
pub fn results_table(reports: &[FairnessReport]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let mut row = |label: &str, f: &dyn Fn(&FairnessReport) -> String| {
        rows.push((label.to_string(), reports.iter().map(f).collect()));
    };
    row("Accuracy (Overall)", &|r| pct(&r.accuracy_overall));
    row("Accuracy (Lighter-skin individuals)", &|r| pct(&r.accuracy_lighter));
    row("Accuracy (Darker-skin individuals)", &|r| pct(&r.accuracy_darker));
    row("Delta-parity (signed) value", &|r| delta(&r.delta));
    row("Specificity (Lighter-skin individuals)", &|r| {
        pct(&r.specificity_lighter)
    });
    row("Sensitivity (Lighter-skin individuals)", &|r| {
        pct(&r.sensitivity_lighter)
    });
    row("Specificity (Darker-skin individuals)", &|r| pct(&r.specificity_darker));
    row("Sensitivity (Darker-skin individuals)", &|r| pct(&r.sensitivity_darker));
    row("Welch t-test", &|r| {
        format!("t={:.3}, p={:.4}", r.welch.t, r.welch.p_two_sided)
    });
    row("ROC AUC (Lighter / Darker)", &|r| {
        format!("{:.3} / {:.3}", r.auc_lighter, r.auc_darker)
    });
    row("Sensitivity (Leftover darker, referable)", &|r| {
        r.leftover_sensitivity.as_ref().map(pct).unwrap_or_else(|| "n/a".into())
    });

    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Metric".len());
    let mut col_w: Vec<usize> = reports.iter().map(|r| r.system.len()).collect();
    for (_, cells) in &rows {
        for (w, c) in col_w.iter_mut().zip(cells) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "Metric");
    for (r, w) in reports.iter().zip(&col_w) {
        let _ = write!(out, " | {:<w$}", r.system);
    }
    out.push('\n');
    let total = label_w + col_w.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "{label:<label_w$}");
        for (c, w) in cells.iter().zip(&col_w) {
            let _ = write!(out, " | {c:<w$}");
        }
        out.push('\n');
    }
    out
}

const SIZE: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn xy(fpr: f64, tpr: f64) -> (f64, f64) {
    (MARGIN + fpr * SIZE, MARGIN + (1.0 - tpr) * SIZE)
}

/// ROC plot with the chance diagonal and an AUC annotation to 3 decimals.
pub fn roc_svg(system: &str, group: Group, points: &[RocPoint], auc: f64) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let (x0, y0) = xy(0.0, 0.0);
    let (x1, y1) = xy(1.0, 1.0);
    let poly: Vec<String> = points
        .iter()
        .map(|p| {
            let (x, y) = xy(p.fpr, p.tpr);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(s, "  <title>{} - {}</title>", xml_escape(system), group.label());
    let _ = writeln!(
        s,
        r#"  <rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"  <line class="diagonal" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#888" stroke-dasharray="4 4"/>"##
    );
    let _ = writeln!(
        s,
        r##"  <polyline class="roc" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        poly.join(" ")
    );
    let _ = writeln!(
        s,
        r#"  <text class="auc" x="{}" y="{}" font-family="sans-serif" font-size="14">AUC = {auc:.3}</text>"#,
        MARGIN + 0.55 * SIZE,
        MARGIN + 0.9 * SIZE
    );
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">False positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        full - 10.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="12" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">True positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// File-name friendly form of a system name.
pub fn slug(system: &str) -> String {
    let mut out = String::new();
    for c in system.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

/// `(file name, contents)` of both ROC plots of one report.
pub fn roc_plots(report: &FairnessReport) -> Vec<(String, String)> {
    [
        (Group::Lighter, &report.roc_lighter, report.auc_lighter),
        (Group::Darker, &report.roc_darker, report.auc_darker),
    ]
    .into_iter()
    .map(|(g, pts, auc)| {
        (
            format!("roc_{}_{}.svg", slug(&report.system), g.code()),
            roc_svg(&report.system, g, pts, auc),
        )
    })
    .collect()
}
