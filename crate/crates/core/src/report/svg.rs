//! Self-contained SVG plots: PC1/PC2 scatter and rectilinear dendrogram.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::statkit::{Dendrogram, PartitionLabeling, PcaResult};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("scatter needs at least 2 components, got {0}")]
    TooFewComponents(usize),
    #[error("scatter needs at least one point")]
    NoPoints,
    #[error("dendrogram needs at least 2 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo <= 0.0 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.08 * (hi - lo);
    (lo - pad, hi + pad)
}

fn write_file(path: &Path, body: &str) -> Result<(), PlotError> {
    std::fs::write(path, body).map_err(|source| PlotError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// PC1 vs PC2 scatter, one labeled marker per row colored by cluster.
pub fn render_scatter(scores: &PcaResult, labels: &PartitionLabeling) -> Result<String, PlotError> {
    if scores.n_components() < 2 {
        return Err(PlotError::TooFewComponents(scores.n_components()));
    }
    if scores.row_ids.is_empty() {
        return Err(PlotError::NoPoints);
    }
    let (x0, x1) = padded_range(scores.scores.iter().map(|s| s[0]));
    let (y0, y1) = padded_range(scores.scores.iter().map(|s| s[1]));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let pct = |i: usize| (scores.explained_ratio[i] * 100.0).round();

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    if x0 < 0.0 && x1 > 0.0 {
        let x = px(0.0);
        writeln!(out, r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{}" stroke="#ccc"/>"##, HEIGHT - MARGIN).unwrap();
    }
    if y0 < 0.0 && y1 > 0.0 {
        let y = py(0.0);
        writeln!(out, r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ccc"/>"##, WIDTH - MARGIN).unwrap();
    }
    writeln!(
        out,
        r#"<text class="axis" x="{}" y="{}" text-anchor="middle">PC1 ({}%)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        pct(0)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text class="axis" x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">PC2 ({}%)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        pct(1)
    )
    .unwrap();
    for (id, s) in scores.row_ids.iter().zip(&scores.scores) {
        let cluster = labels.label_of(id).unwrap_or(0);
        let color = PALETTE[cluster % PALETTE.len()];
        let (x, y) = (px(s[0]), py(s[1]));
        writeln!(
            out,
            r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}" data-id="{}" data-cluster="{cluster}"/>"#,
            escape(id)
        )
        .unwrap();
        writeln!(out, r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#, x + 6.0, y - 6.0, escape(id)).unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_scatter(scores: &PcaResult, labels: &PartitionLabeling, path: &Path) -> Result<(), PlotError> {
    write_file(path, &render_scatter(scores, labels)?)
}

/// Rectilinear dendrogram with leaves along the bottom in non-crossing order
/// and a linkage-distance axis on the left.
pub fn render_dendrogram(d: &Dendrogram) -> Result<String, PlotError> {
    let n = d.n_leaves();
    if n < 2 {
        return Err(PlotError::TooFewLeaves(n));
    }
    let max_h = d.merges.iter().map(|m| m.height).fold(0.0, f64::max);
    let top = if max_h > 0.0 { max_h } else { 1.0 };
    let bottom = HEIGHT - MARGIN - 30.0;
    let py = |h: f64| bottom - h / top * (bottom - MARGIN);
    let step = (WIDTH - 2.0 * MARGIN) / n as f64;

    let mut x = vec![0.0; n + d.merges.len()];
    let mut y = vec![bottom; n + d.merges.len()];
    for (slot, &leaf) in d.leaf_order().iter().enumerate() {
        x[leaf] = MARGIN + step * (slot as f64 + 0.5);
    }
    for (i, m) in d.merges.iter().enumerate() {
        x[n + i] = (x[m.left] + x[m.right]) / 2.0;
        y[n + i] = py(m.height);
    }

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(out, r##"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{bottom}" stroke="#444"/>"##).unwrap();
    for t in 0..=4 {
        let h = top * t as f64 / 4.0;
        let yy = py(h);
        writeln!(
            out,
            r##"<line x1="{}" y1="{yy:.2}" x2="{MARGIN}" y2="{yy:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{h:.3}</text>"##,
            MARGIN - 4.0,
            MARGIN - 6.0,
            yy + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text class="axis" x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">linkage distance</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();
    for (i, m) in d.merges.iter().enumerate() {
        let (xl, yl, xr, yr, h) = (x[m.left], y[m.left], x[m.right], y[m.right], y[n + i]);
        writeln!(
            out,
            r#"<path class="merge" d="M{xl:.2},{yl:.2} V{h:.2} H{xr:.2} V{yr:.2}" fill="none" stroke="black" data-height="{}"/>"#,
            m.height
        )
        .unwrap();
    }
    for (leaf, id) in d.leaf_ids.iter().enumerate() {
        let (lx, ly) = (x[leaf], bottom + 12.0);
        writeln!(
            out,
            r#"<text class="leaf" x="{lx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-45 {lx:.2} {ly:.2})">{}</text>"#,
            escape(id)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_dendrogram(d: &Dendrogram, path: &Path) -> Result<(), PlotError> {
    write_file(path, &render_dendrogram(d)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statkit::{hcluster, pca, standardize, FeatureMatrix, Merge, PartitionSource};

    fn three_points() -> (PcaResult, PartitionLabeling) {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
            vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 3.0]],
        )
        .unwrap();
        let r = pca(&standardize(&m).unwrap(), 2).unwrap();
        let l = PartitionLabeling::new(PartitionSource::Kmeans, r.row_ids.clone(), &[0, 1, 1]);
        (r, l)
    }

    #[test]
    fn scatter_has_one_marker_and_label_per_point() {
        let (r, l) = three_points();
        let svg = render_scatter(&r, &l).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches(r#"class="label""#).count(), 3);
        let pc1 = format!("PC1 ({}%)", (r.explained_ratio[0] * 100.0).round());
        assert!(svg.contains(&pc1));
        assert_eq!(svg, render_scatter(&r, &l).unwrap());
    }

    #[test]
    fn scatter_needs_two_components() {
        let (mut r, l) = three_points();
        r.components.truncate(1);
        assert!(matches!(render_scatter(&r, &l), Err(PlotError::TooFewComponents(1))));
    }

    #[test]
    fn dendrogram_brackets_at_merge_heights() {
        let m = FeatureMatrix::new(
            vec!["p0".into(), "p1".into(), "p10".into()],
            vec!["x".into()],
            vec![vec![0.0], vec![1.0], vec![10.0]],
        )
        .unwrap();
        let svg = render_dendrogram(&hcluster(&m).unwrap()).unwrap();
        assert!(svg.contains(r#"data-height="1""#));
        assert!(svg.contains(r#"data-height="9.5""#));
        assert_eq!(svg.matches(r#"class="leaf""#).count(), 3);

        let two = Dendrogram {
            leaf_ids: vec!["a".into(), "b".into()],
            merges: vec![Merge { left: 0, right: 1, height: 2.0, size: 2 }],
        };
        assert_eq!(render_dendrogram(&two).unwrap().matches("<path").count(), 1);
        let one = Dendrogram { leaf_ids: vec!["a".into()], merges: vec![] };
        assert!(matches!(render_dendrogram(&one), Err(PlotError::TooFewLeaves(1))));
    }
}
