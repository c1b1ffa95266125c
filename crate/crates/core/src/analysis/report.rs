use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AssignmentRecord, Result};

/// One relation symbol in the 2-D cluster plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    pub relation: String,
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi > lo {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    } else {
        (out_lo + out_hi) / 2.0
    }
}

/// Relation symbols on their first two principal components, coloured by
/// cluster.
pub fn render_scatter_svg(points: &[ClusterPoint]) -> String {
    let mut out = String::new();
    svg_open(&mut out, WIDTH, HEIGHT);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let (xl, xh) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.x), h.max(p.x)));
    let (yl, yh) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.y), h.max(p.y)));
    for p in points {
        let cx = scale(p.x, xl, xh, MARGIN + 10.0, WIDTH - MARGIN - 10.0);
        let cy = scale(p.y, yl, yh, HEIGHT - MARGIN - 10.0, MARGIN + 10.0);
        let color = PALETTE[p.cluster % PALETTE.len()];
        let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{color}"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#,
            cx + 6.0,
            cy + 3.0,
            escape(&p.relation)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Token × role grid, cell opacity = kept role score.
pub fn render_roles_svg(assignments: &[AssignmentRecord]) -> String {
    let roles: BTreeSet<usize> = assignments.iter().flat_map(|a| a.kept_roles.iter().map(|r| r.0)).collect();
    let roles: Vec<usize> = roles.into_iter().collect();
    let cell = 18.0;
    let left = 100.0;
    let top = 30.0;
    let w = left + cell * roles.len() as f64 + 10.0;
    let h = top + cell * assignments.len() as f64 + 10.0;
    let mut out = String::new();
    svg_open(&mut out, w, h);
    for (j, r) in roles.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="9" text-anchor="middle">{r}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0
        );
    }
    for (i, a) in assignments.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell * 0.7,
            escape(&a.token)
        );
        for &(role, score) in &a.kept_roles {
            let j = roles.binary_search(&role).expect("collected above");
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="#1f77b4" fill-opacity="{score:.3}"/>"##,
                left + cell * j as f64
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `assignments.csv`, `clusters.csv`, `scatter.svg`, `roles.svg` and a
/// plain-text `summary.txt` listing cluster members and the k-means seed.
pub fn emit_report(
    assignments: &[AssignmentRecord],
    clusters: &[ClusterPoint],
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let paths: Vec<PathBuf> = ["assignments.csv", "clusters.csv", "scatter.svg", "roles.svg", "summary.txt"]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();

    let mut w = csv::Writer::from_path(&paths[0])?;
    w.write_record(["token", "position", "role", "filler", "score"])?;
    for a in assignments {
        let pos = a.position.to_string();
        for &(f, s) in &a.kept_fillers {
            w.write_record([a.token.as_str(), &pos, "", &f.to_string(), &format!("{s:.6}")])?;
        }
        for &(r, s) in &a.kept_roles {
            w.write_record([a.token.as_str(), &pos, &r.to_string(), "", &format!("{s:.6}")])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[1])?;
    w.write_record(["relation", "x", "y", "cluster"])?;
    for p in clusters {
        w.write_record([p.relation.clone(), format!("{:.6}", p.x), format!("{:.6}", p.y), p.cluster.to_string()])?;
    }
    w.flush()?;

    std::fs::write(&paths[2], render_scatter_svg(clusters))?;
    std::fs::write(&paths[3], render_roles_svg(assignments))?;

    let mut summary = format!("k-means seed: {seed}\n");
    let k = clusters.iter().map(|p| p.cluster + 1).max().unwrap_or(0);
    for c in 0..k {
        let members: Vec<&str> = clusters.iter().filter(|p| p.cluster == c).map(|p| p.relation.as_str()).collect();
        let _ = writeln!(summary, "cluster {c}: {}", members.join(" "));
    }
    std::fs::write(&paths[4], summary)?;
    Ok(paths)
}
