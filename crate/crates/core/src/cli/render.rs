use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::qdaa::Qdaa;

const CELL: f64 = 24.0;
const MARGIN: f64 = 60.0;

/// SVG projection of the reachable rectangles onto two variables. Cells are
/// drawn at equal size (threshold values label the axes), filled with
/// opacity equal to the largest first-passage intensity among rectangles
/// projecting onto them. Reachable cells are outlined grey, initial ones
/// black.
pub fn render_svg(q: &Qdaa, x: &str, y: &str) -> Result<String, String> {
    let names = &q.provenance.var_names;
    let axis = |v: &str| {
        names
            .iter()
            .position(|n| n == v)
            .ok_or_else(|| format!("unknown variable {v:?} (have {})", names.join(", ")))
    };
    let (ax, ay) = (axis(x)?, axis(y)?);
    if ax == ay {
        return Err("projection axes must differ".into());
    }
    let p = &q.provenance.partition;
    let (nx, ny) = (p.cells(ax), p.cells(ay));

    let chain = q.chain();
    let mut opacity: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (rect, h) in chain.intensities() {
        let o = opacity.entry((rect[ax], rect[ay])).or_insert(0.0);
        *o = o.max(h.clamp(0.0, 1.0));
    }
    let initial: Vec<(usize, usize)> = q
        .initial
        .iter()
        .filter_map(|&i| q.nodes[i].rect())
        .map(|r| (r[ax], r[ay]))
        .collect();

    let (w, h) = (2.0 * MARGIN + nx as f64 * CELL, 2.0 * MARGIN + ny as f64 * CELL);
    let cx = |i: usize| MARGIN + i as f64 * CELL;
    let cy = |j: usize| h - MARGIN - (j + 1) as f64 * CELL;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..nx {
        for j in 0..ny {
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="none" stroke="#e0e0e0"/>"##,
                cx(i),
                cy(j)
            );
        }
    }
    for (&(i, j), &o) in &opacity {
        let _ = writeln!(
            s,
            r##"<rect class="reach" data-cell="{i},{j}" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="#1f4e9c" fill-opacity="{o}" stroke="#808080"/>"##,
            cx(i),
            cy(j)
        );
    }
    for &(i, j) in &initial {
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="none" stroke="black" stroke-width="2"/>"#,
            cx(i),
            cy(j)
        );
    }
    let step = |n: usize| (n / 10).max(1);
    for (k, t) in p.thresholds(ax).iter().enumerate().step_by(step(nx)) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#,
            cx(k),
            h - MARGIN + 14.0
        );
    }
    for (k, t) in p.thresholds(ay).iter().enumerate().step_by(step(ny)) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#,
            MARGIN - 4.0,
            h - MARGIN - k as f64 * CELL + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x}</text>"#,
        w / 2.0,
        h - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{y}</text>"#,
        h / 2.0,
        h / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}
