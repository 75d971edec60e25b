//! SVG figures of a 3-player game in the preimputation plane: a grayscale
//! dissatisfaction heatmap, the core, the cohesion field as arrows and
//! trajectories on top.

use std::fmt::Write as _;

use cohesion::fields::evaluate;
use cohesion::game::plane_basis;
use cohesion::Game;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    /// Half-width of the square window in plane coordinates, centered at 0.
    pub extent: f64,
    pub heatmap: bool,
    pub heatmap_cells: usize,
    pub field: bool,
    pub arrow_cells: usize,
    /// Side of the drawing in pixels.
    pub size: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        // contains the example start (-4, -3, 7), at plane coordinates
        // (-0.71, -8.57), with margin
        PlotOptions { extent: 10.0, heatmap: true, heatmap_cells: 200, field: true, arrow_cells: 20, size: 600.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Plane coordinates of the cell center.
    pub u: f64,
    pub w: f64,
    pub theta: f64,
    pub in_core: bool,
}

/// Point of X at plane coordinates `(u, w)`.
pub fn lift(u: f64, w: f64) -> [f64; 3] {
    let b = plane_basis(3);
    [u * b[0][0] + w * b[1][0], u * b[0][1] + w * b[1][1], u * b[0][2] + w * b[1][2]]
}

/// Plane coordinates of a point of X.
pub fn flatten(x: &[f64]) -> (f64, f64) {
    let b = plane_basis(3);
    (b[0].iter().zip(x).map(|(p, q)| p * q).sum(), b[1].iter().zip(x).map(|(p, q)| p * q).sum())
}

/// Heatmap cells in row-major order, top row (largest `w`) first.
pub fn heatmap_cells(g: &Game, opts: &PlotOptions) -> Vec<Cell> {
    let k = opts.heatmap_cells;
    let step = 2.0 * opts.extent / k as f64;
    let mut cells = Vec::with_capacity(k * k);
    for row in 0..k {
        let w = opts.extent - (row as f64 + 0.5) * step;
        for col in 0..k {
            let u = -opts.extent + (col as f64 + 0.5) * step;
            let fp = evaluate(g, &lift(u, w));
            cells.push(Cell { u, w, theta: fp.theta, in_core: fp.aggrieved.is_empty() });
        }
    }
    cells
}

struct Figure {
    opts: PlotOptions,
    body: String,
}

impl Figure {
    fn px(&self, u: f64, w: f64) -> (f64, f64) {
        let s = self.opts.size / (2.0 * self.opts.extent);
        ((u + self.opts.extent) * s, (self.opts.extent - w) * s)
    }
}

/// Renders the figure. Trajectories are lists of points of X.
pub fn render(g: &Game, opts: &PlotOptions, trajectories: &[Vec<Vec<f64>>]) -> String {
    assert_eq!(g.n(), 3, "plots need exactly three players");
    let mut fig = Figure { opts: opts.clone(), body: String::new() };
    if opts.heatmap {
        heatmap(g, &mut fig);
    } else {
        core_outline(g, &mut fig);
    }
    if opts.field {
        arrows(g, &mut fig);
    }
    for path in trajectories {
        polyline(&mut fig, path);
    }
    let size = opts.size;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(
        out,
        r##"<defs><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#c0392b"/></marker></defs>"##
    );
    let _ = writeln!(out, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    out.push_str(&fig.body);
    out.push_str("</svg>\n");
    out
}

fn heatmap(g: &Game, fig: &mut Figure) {
    let cells = heatmap_cells(g, &fig.opts);
    let k = fig.opts.heatmap_cells;
    let levels: Vec<f64> = cells.iter().map(|c| c.theta.sqrt()).collect();
    let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let side = fig.opts.size / k as f64;
    let color = |i: usize| {
        if cells[i].in_core {
            "#5b8fd6".to_string()
        } else {
            // darker where dissatisfaction is larger
            let shade = (255.0 * (1.0 - (levels[i] - lo) / span)).round() as u8;
            format!("#{shade:02x}{shade:02x}{shade:02x}")
        }
    };
    // drawn in cell units, scaled to pixels
    let _ = writeln!(fig.body, r#"<g shape-rendering="crispEdges" transform="scale({side})">"#);
    for row in 0..k {
        // merge runs of equal color along a row
        let mut col = 0;
        while col < k {
            let c = color(row * k + col);
            let mut end = col + 1;
            while end < k && color(row * k + end) == c {
                end += 1;
            }
            let _ = writeln!(fig.body, r#"<rect x="{col}" y="{row}" width="{}" height="1" fill="{c}"/>"#, end - col);
            col = end;
        }
    }
    fig.body.push_str("</g>\n");
}

/// Core drawn as shaded cells when there is no heatmap underneath.
fn core_outline(g: &Game, fig: &mut Figure) {
    let cells = heatmap_cells(g, &fig.opts);
    let side = fig.opts.size / fig.opts.heatmap_cells as f64;
    fig.body.push_str("<g shape-rendering=\"crispEdges\" fill=\"#5b8fd6\">\n");
    for (i, _) in cells.iter().enumerate().filter(|(_, c)| c.in_core) {
        let (row, col) = (i / fig.opts.heatmap_cells, i % fig.opts.heatmap_cells);
        let _ = writeln!(
            fig.body,
            r#"<rect x="{:.3}" y="{:.3}" width="{side:.3}" height="{side:.3}"/>"#,
            col as f64 * side,
            row as f64 * side
        );
    }
    fig.body.push_str("</g>\n");
}

fn arrows(g: &Game, fig: &mut Figure) {
    let k = fig.opts.arrow_cells;
    let step = 2.0 * fig.opts.extent / k as f64;
    let mut field = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            let u = -fig.opts.extent + (col as f64 + 0.5) * step;
            let w = fig.opts.extent - (row as f64 + 0.5) * step;
            let (du, dw) = flatten(&evaluate(g, &lift(u, w)).phi);
            field.push((u, w, du, dw));
        }
    }
    let mut mags: Vec<f64> = field.iter().map(|f| f.2.hypot(f.3)).filter(|&m| m > 0.0).collect();
    if mags.is_empty() {
        return;
    }
    mags.sort_by(f64::total_cmp);
    // the median arrow spans half a cell; longer ones are capped at 0.9 cells
    let scale = 0.5 * step / mags[mags.len() / 2];
    let cap = 0.9 * step;
    fig.body.push_str("<g stroke=\"#c0392b\" stroke-width=\"1.2\" marker-end=\"url(#head)\">\n");
    for (u, w, du, dw) in field {
        let m = du.hypot(dw);
        if m == 0.0 {
            continue;
        }
        let len = (m * scale).min(cap);
        let (x0, y0) = fig.px(u - 0.5 * len * du / m, w - 0.5 * len * dw / m);
        let (x1, y1) = fig.px(u + 0.5 * len * du / m, w + 0.5 * len * dw / m);
        let _ = writeln!(fig.body, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/>"#);
    }
    fig.body.push_str("</g>\n");
}

fn polyline(fig: &mut Figure, path: &[Vec<f64>]) {
    let Some(first) = path.first() else { return };
    let pts: Vec<String> = path
        .iter()
        .map(|x| {
            let (u, w) = flatten(x);
            let (a, b) = fig.px(u, w);
            format!("{a:.2},{b:.2}")
        })
        .collect();
    let _ = writeln!(
        fig.body,
        r##"<polyline points="{}" fill="none" stroke="#1e8449" stroke-width="2"/>"##,
        pts.join(" ")
    );
    let (u, w) = flatten(first);
    let (a, b) = fig.px(u, w);
    let _ = writeln!(fig.body, r##"<circle cx="{a:.2}" cy="{b:.2}" r="4" fill="#1e8449"/>"##);
    let (u, w) = flatten(path.last().unwrap());
    let (a, b) = fig.px(u, w);
    let _ = writeln!(
        fig.body,
        r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="#f1c40f" stroke="black"/>"##,
        a - 4.0,
        b - 4.0
    );
}
