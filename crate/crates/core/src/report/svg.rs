//! SVG figure rendering: PCA scatter plots and similarity heatmaps.
//!
//! Output is byte-stable: element order is sorted (raters, then essays),
//! all coordinates are formatted with two decimals, and styling is
//! self-contained. SVG keeps figures diffable and golden-testable without
//! image tooling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ColorRamp, ReportError};
use crate::reduce::LabeledPoint;
use crate::similarity::HeatmapMatrix;

const SCATTER_WIDTH: f64 = 800.0;
const SCATTER_HEIGHT: f64 = 600.0;
const PLOT_LEFT: f64 = 60.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_RIGHT_MARGIN: f64 = 170.0;
const PLOT_BOTTOM_MARGIN: f64 = 50.0;

const PALETTE: [&str; 9] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#17becf",
];

#[derive(Clone, Copy)]
enum Glyph {
    Circle,
    Square,
    Triangle,
    Diamond,
    Plus,
    Cross,
}

const GLYPHS: [Glyph; 6] = [
    Glyph::Circle,
    Glyph::Square,
    Glyph::Triangle,
    Glyph::Diamond,
    Glyph::Plus,
    Glyph::Cross,
];

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn glyph_svg(glyph: Glyph, x: f64, y: f64, color: &str, class: &str) -> String {
    let r = 5.0;
    match glyph {
        Glyph::Circle => format!(
            r#"<circle class="{class}" cx="{}" cy="{}" r="{}" fill="{color}"/>"#,
            px(x),
            px(y),
            px(r)
        ),
        Glyph::Square => format!(
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
            px(x - r),
            px(y - r),
            px(2.0 * r),
            px(2.0 * r)
        ),
        Glyph::Triangle => format!(
            r#"<polygon class="{class}" points="{},{} {},{} {},{}" fill="{color}"/>"#,
            px(x),
            px(y - r),
            px(x - r),
            px(y + r),
            px(x + r),
            px(y + r)
        ),
        Glyph::Diamond => format!(
            r#"<polygon class="{class}" points="{},{} {},{} {},{} {},{}" fill="{color}"/>"#,
            px(x),
            px(y - r),
            px(x + r),
            px(y),
            px(x),
            px(y + r),
            px(x - r),
            px(y)
        ),
        Glyph::Plus => format!(
            r#"<path class="{class}" d="M {} {} L {} {} M {} {} L {} {}" stroke="{color}" stroke-width="2.5" fill="none"/>"#,
            px(x - r),
            px(y),
            px(x + r),
            px(y),
            px(x),
            px(y - r),
            px(x),
            px(y + r)
        ),
        Glyph::Cross => format!(
            r#"<path class="{class}" d="M {} {} L {} {} M {} {} L {} {}" stroke="{color}" stroke-width="2.5" fill="none"/>"#,
            px(x - r),
            px(y - r),
            px(x + r),
            px(y + r),
            px(x - r),
            px(y + r),
            px(x + r),
            px(y - r)
        ),
    }
}

fn data_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // 5% margin on each side; degenerate (zero-range) axes get a unit span.
    let range = hi - lo;
    if range > 0.0 {
        (lo - 0.05 * range, hi + 0.05 * range)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Render matched-score projection points as an 800x600 scatter figure.
///
/// The affine map from data to pixels is
/// `px = PLOT_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_width` and
/// `py = PLOT_TOP + (y_hi - y) / (y_hi - y_lo) * plot_height`, where the
/// bounds are the data bounds with a 5% margin. Each rater gets a fixed
/// glyph shape and color; elements are emitted sorted by rater then essay.
pub fn render_pca_scatter(
    points: &[LabeledPoint],
    score_level: i32,
) -> Result<String, ReportError> {
    if points.len() < 2 {
        return Err(ReportError::InsufficientPoints(points.len()));
    }
    let mut sorted: Vec<&LabeledPoint> = points.iter().collect();
    sorted.sort_by(|a, b| (&a.rater_id, &a.essay_id).cmp(&(&b.rater_id, &b.essay_id)));

    let plot_w = SCATTER_WIDTH - PLOT_LEFT - PLOT_RIGHT_MARGIN;
    let plot_h = SCATTER_HEIGHT - PLOT_TOP - PLOT_BOTTOM_MARGIN;
    let (x_lo, x_hi) = data_bounds(sorted.iter().map(|p| p.x));
    let (y_lo, y_hi) = data_bounds(sorted.iter().map(|p| p.y));
    let to_px = |x: f64| PLOT_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let to_py = |y: f64| PLOT_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut style_index: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &sorted {
        let next = style_index.len();
        style_index.entry(p.rater_id.as_str()).or_insert(next);
    }

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        SCATTER_WIDTH as u32, SCATTER_HEIGHT as u32, SCATTER_WIDTH as u32, SCATTER_HEIGHT as u32
    );
    svg.push_str(r#"<desc>2-D PCA projection of rationale embeddings pooled over raters whose score matched the reference at this level.</desc>"#);
    let _ = write!(
        svg,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        SCATTER_WIDTH as u32, SCATTER_HEIGHT as u32
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">Score {} rationale embeddings (PCA)</text>"#,
        px(PLOT_LEFT + plot_w / 2.0),
        score_level
    );
    let _ = write!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444" stroke-width="1"/>"##,
        px(PLOT_LEFT),
        px(PLOT_TOP),
        px(plot_w),
        px(plot_h)
    );
    // axis extent labels
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
        px(PLOT_LEFT),
        px(PLOT_TOP + plot_h + 16.0),
        px(x_lo)
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
        px(PLOT_LEFT + plot_w),
        px(PLOT_TOP + plot_h + 16.0),
        px(x_hi)
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
        px(PLOT_LEFT - 6.0),
        px(PLOT_TOP + plot_h),
        px(y_lo)
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
        px(PLOT_LEFT - 6.0),
        px(PLOT_TOP + 10.0),
        px(y_hi)
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1</text>"#,
        px(PLOT_LEFT + plot_w / 2.0),
        px(SCATTER_HEIGHT - 12.0)
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {})">PC2</text>"#,
        px(PLOT_TOP + plot_h / 2.0),
        px(PLOT_TOP + plot_h / 2.0)
    );

    for p in &sorted {
        let idx = style_index[p.rater_id.as_str()];
        let color = PALETTE[idx % PALETTE.len()];
        let glyph = GLYPHS[idx % GLYPHS.len()];
        svg.push_str(&glyph_svg(glyph, to_px(p.x), to_py(p.y), color, "pt"));
    }

    let legend_x = PLOT_LEFT + plot_w + 24.0;
    let mut legend_y = PLOT_TOP + 10.0;
    for (rater_id, &idx) in &style_index {
        let color = PALETTE[idx % PALETTE.len()];
        let glyph = GLYPHS[idx % GLYPHS.len()];
        svg.push_str(&glyph_svg(glyph, legend_x, legend_y, color, "legend"));
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            px(legend_x + 12.0),
            px(legend_y + 4.0),
            xml_escape(rater_id)
        );
        legend_y += 20.0;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render a similarity heatmap: an n x n colored grid with absolute score
/// differences as centered labels and essay ids as row/column ticks.
pub fn render_heatmap(matrix: &HeatmapMatrix, ramp: &ColorRamp) -> Result<String, ReportError> {
    let n = matrix.cells.len();
    if n == 0 {
        return Err(ReportError::ShapeMismatch("empty matrix".into()));
    }
    if matrix.labels.len() != n
        || matrix.essay_order.len() != n
        || matrix.cells.iter().any(|row| row.len() != n)
        || matrix.labels.iter().any(|row| row.len() != n)
    {
        return Err(ReportError::ShapeMismatch(format!(
            "cells {}x?, labels {}, essay_order {}",
            n,
            matrix.labels.len(),
            matrix.essay_order.len()
        )));
    }
    let cell: f64 = (520.0 / n as f64).clamp(16.0, 64.0);
    let left = 90.0;
    let top = 90.0;
    let width = left + cell * n as f64 + 20.0;
    let height = top + cell * n as f64 + 20.0;
    let font = (cell * 0.45).clamp(8.0, 16.0);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        px(width),
        px(height),
        px(width),
        px(height)
    );
    svg.push_str(r#"<desc>Cell (i, j): cosine similarity between the LLM rationale for row essay i and the reference rationale for column essay j; the printed number is the absolute score difference. The diagonal is the matched-essay comparison.</desc>"#);
    let _ = write!(
        svg,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        px(width),
        px(height)
    );

    for (i, row) in matrix.cells.iter().enumerate() {
        for (j, &value) in row.iter().enumerate() {
            let x = left + j as f64 * cell;
            let y = top + i as f64 * cell;
            let _ = write!(
                svg,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                px(x),
                px(y),
                px(cell),
                px(cell),
                ramp.css(value)
            );
            let text_color = if ramp.luminance(value) < 0.5 {
                "#ffffff"
            } else {
                "#000000"
            };
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="{}" fill="{}" text-anchor="middle" dominant-baseline="central">{}</text>"#,
                px(x + cell / 2.0),
                px(y + cell / 2.0),
                px(font),
                text_color,
                matrix.labels[i][j]
            );
        }
    }
    for (i, essay_id) in matrix.essay_order.iter().enumerate() {
        // row tick
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end" dominant-baseline="central">{}</text>"#,
            px(left - 6.0),
            px(top + i as f64 * cell + cell / 2.0),
            xml_escape(essay_id)
        );
        // column tick, rotated
        let cx = left + i as f64 * cell + cell / 2.0;
        let cy = top - 6.0;
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="start" transform="rotate(-90 {} {})">{}</text>"#,
            px(cx),
            px(cy),
            px(cx),
            px(cy),
            xml_escape(essay_id)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
