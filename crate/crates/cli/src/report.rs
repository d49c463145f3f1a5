//! CSV summaries and the SVG heatmap.

use std::fmt::Write;

use anyhow::{bail, Result};
use bcwi_core::eval::{ci95, PlaneScan};

use crate::experiment::SeedResult;

const SUMMARY_HEADER: &str = "method,setting_mean,test_acc_mean,test_acc_ci95,test_nfr_mean,test_nfr_ci95,dev_acc_mean,dev_nfr_mean,seeds";

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ci_cell(v: &[f64]) -> String {
    match ci95(v) {
        Ok(agg) => format!("{:.4}", agg.ci_halfwidth),
        Err(_) => String::new(),
    }
}

/// One row per method with cross-seed means and 95% half-widths. Accuracy
/// and NFR are in percent.
pub fn summary_csv(results: &[SeedResult]) -> Result<String> {
    let Some(first) = results.first() else {
        bail!("no seed results to summarize");
    };
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (k, m) in first.methods.iter().enumerate() {
        let rows: Vec<_> = results.iter().map(|r| &r.methods[k]).collect();
        if rows.iter().any(|r| r.method != m.method) {
            bail!("seed results list methods in different orders");
        }
        let pct = |f: &dyn Fn(&crate::experiment::MethodResult) -> f64| rows.iter().map(|r| 100.0 * f(r)).collect::<Vec<_>>();
        let test_acc = pct(&|r| r.test.accuracy);
        let test_nfr = pct(&|r| r.test.nfr);
        let dev_acc = pct(&|r| r.dev.accuracy);
        let dev_nfr = pct(&|r| r.dev.nfr);
        let settings: Vec<f64> = rows.iter().filter_map(|r| r.setting).collect();
        let setting = if settings.is_empty() {
            String::new()
        } else {
            format!("{:.4}", mean(&settings))
        };
        writeln!(
            out,
            "{},{},{:.4},{},{:.4},{},{:.4},{:.4},{}",
            m.method,
            setting,
            mean(&test_acc),
            ci_cell(&test_acc),
            mean(&test_nfr),
            ci_cell(&test_nfr),
            mean(&dev_acc),
            mean(&dev_nfr),
            rows.len()
        )?;
    }
    Ok(out)
}

/// Dark blue through teal to yellow, sampled at `t ∈ [0, 1]` and quantized
/// to 256 steps.
pub fn ramp(t: f64) -> (u8, u8, u8) {
    let step = (t.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    let stops = [(0.0, (68.0, 1.0, 84.0)), (0.5, (33.0, 145.0, 140.0)), (1.0, (253.0, 231.0, 37.0))];
    let (lo, hi) = if step <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let f = (step - lo.0) / (hi.0 - lo.0);
    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    (mix(lo.1 .0, hi.1 .0), mix(lo.1 .1, hi.1 .1), mix(lo.1 .2, hi.1 .2))
}

/// Heatmap of a plane scan with the old, new and target models marked.
pub fn heatmap_svg(scan: &PlaneScan) -> String {
    const CELL: f64 = 16.0;
    const MARGIN: f64 = 40.0;
    const LEGEND: f64 = 70.0;
    let (nx, ny) = (scan.xs.len(), scan.ys.len());
    let (w, h) = (nx as f64 * CELL, ny as f64 * CELL);
    let finite = scan.values.iter().flatten().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        w + 2.0 * MARGIN + LEGEND,
        h + 2.0 * MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="20">{:?}</text>"#, scan.metric);
    for (j, row) in scan.values.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let (r, g, b) = ramp((v - lo) / span);
            // row 0 is the lowest y, drawn at the bottom
            let y = MARGIN + (ny - 1 - j) as f64 * CELL;
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({r},{g},{b})"/>"#,
                MARGIN + i as f64 * CELL
            );
        }
    }
    let (x0, x1) = (scan.xs[0], scan.xs[nx - 1]);
    let (y0, y1) = (scan.ys[0], scan.ys[ny - 1]);
    let to_px = |x: f64, y: f64| {
        (
            MARGIN + CELL / 2.0 + (x - x0) / (x1 - x0) * (w - CELL),
            MARGIN + CELL / 2.0 + (y1 - y) / (y1 - y0) * (h - CELL),
        )
    };
    for (label, (x, y)) in [("old", scan.old_xy), ("new", scan.new_xy), ("target", scan.target_xy)] {
        let (px, py) = to_px(x, y);
        let _ = writeln!(
            svg,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="5" fill="white" stroke="black" stroke-width="1.5"/><text x="{:.2}" y="{:.2}" fill="white" stroke="black" stroke-width="0.3">{label}</text>"#,
            px + 7.0,
            py - 7.0
        );
    }
    let lx = MARGIN * 1.5 + w;
    for k in 0..=32 {
        let t = k as f64 / 32.0;
        let (r, g, b) = ramp(t);
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{:.2}" width="16" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
            MARGIN + (1.0 - t) * (h - h / 33.0),
            h / 33.0 + 0.5
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}">max {hi:.4}</text>"#, lx - 4.0, MARGIN - 6.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}">min {lo:.4}</text>"#, lx - 4.0, MARGIN + h + 16.0);
    svg.push_str("</svg>\n");
    svg
}
