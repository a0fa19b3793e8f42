//! Standalone SVG 1.1 figures of edge fields and weighted curves.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::space::{comb_bar, MetricGraph, Path};

/// Color ramp for edge values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Colormap {
    /// Blue through pale yellow to red.
    #[default]
    TwoRamp,
    /// Light gray to black.
    Gray,
}

impl Colormap {
    fn stops(self) -> &'static [(f64, [u8; 3])] {
        match self {
            Colormap::TwoRamp => &[(0.0, [44, 123, 182]), (0.5, [255, 255, 191]), (1.0, [215, 25, 28])],
            Colormap::Gray => &[(0.0, [224, 224, 224]), (1.0, [0, 0, 0])],
        }
    }

    /// Color at `t` in `[0, 1]`, linear between stops.
    pub fn color(self, t: f64) -> [u8; 3] {
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
        let stops = self.stops();
        let k = stops.windows(2).position(|w| t <= w[1].0).unwrap_or(stops.len() - 2);
        let ((t0, c0), (t1, c1)) = (stops[k], stops[k + 1]);
        let s = (t - t0) / (t1 - t0);
        let mix = |a: u8, b: u8| (a as f64 + s * (b as f64 - a as f64)).round() as u8;
        [mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2])]
    }

    pub fn name(self) -> &'static str {
        match self {
            Colormap::TwoRamp => "tworamp",
            Colormap::Gray => "gray",
        }
    }
}

impl FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tworamp" => Ok(Colormap::TwoRamp),
            "gray" => Ok(Colormap::Gray),
            other => Err(Error::InvalidArgument(format!(
                "unknown colormap {other:?}, expected tworamp or gray"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Style {
    pub width: u32,
    pub height: u32,
    pub colormap: Colormap,
    pub title: Option<String>,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            colormap: Colormap::default(),
            title: None,
        }
    }
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis-aligned rectangles of the plane that the domain excludes, read
/// from the graph's domain descriptor.
fn excluded_regions(graph: &MetricGraph) -> Vec<[f64; 4]> {
    let meta = graph.meta();
    match meta.domain.as_str() {
        "comb" => (1..=meta.k.unwrap_or(0))
            .map(|n| {
                let (l, r) = comb_bar(n);
                [l, 0.0, r, 0.5]
            })
            .collect(),
        "lshape" => vec![[-1.0, -1.0, 0.0, 0.0]],
        _ => Vec::new(),
    }
}

struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
    left: f64,
    top: f64,
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (self.left + (x - self.x0) * self.scale, self.top + (self.y1 - y) * self.scale)
    }
}

/// Draws the graph with edges colored by `field` (uniform gray without a
/// field), excluded regions shaded, and each curve as a polyline whose
/// stroke width is proportional to its mass.
///
/// The output depends only on the inputs, so identical inputs give
/// byte-identical documents.
pub fn render_svg(graph: &MetricGraph, field: Option<&[f64]>, curves: &[(Path, f64)], style: &Style) -> Result<String> {
    if style.width < 64 || style.height < 64 {
        return Err(Error::InvalidArgument(format!(
            "image must be at least 64x64 pixels, got {}x{}",
            style.width, style.height
        )));
    }
    if let Some(f) = field {
        if f.len() != graph.edge_count() {
            return Err(Error::InvalidArgument(format!(
                "field has {} entries but the graph has {} edges",
                f.len(),
                graph.edge_count()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field has non-finite entries".into()));
        }
    }
    for (path, mass) in curves {
        crate::space::check_path(graph, path)?;
        if !(mass.is_finite() && *mass >= 0.0) {
            return Err(Error::InvalidArgument(format!("curve mass must be nonnegative, got {mass}")));
        }
    }
    let nodes = graph.nodes();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for v in nodes {
        x0 = x0.min(v.x);
        x1 = x1.max(v.x);
        y0 = y0.min(v.y);
        y1 = y1.max(v.y);
    }
    if nodes.len() > 1 && x1 - x0 == 0.0 && y1 - y0 == 0.0 {
        return Err(Error::InvalidGraph("nodes have no planar layout: all coordinates coincide".into()));
    }
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let span_y = if y1 > y0 { y1 - y0 } else { 1.0 };

    let (w, h) = (style.width as f64, style.height as f64);
    let margin = 24.0;
    let legend = if field.is_some() { 96.0 } else { 0.0 };
    let title_band = if style.title.is_some() { 24.0 } else { 0.0 };
    let avail_w = (w - 2.0 * margin - legend).max(16.0);
    let avail_h = (h - 2.0 * margin - title_band).max(16.0);
    let scale = (avail_w / span_x).min(avail_h / span_y);
    let frame = Frame {
        x0: x0 - (span_x - (x1 - x0)) / 2.0,
        y1: y1 + (span_y - (y1 - y0)) / 2.0,
        scale,
        left: margin + (avail_w - span_x * scale) / 2.0,
        top: margin + title_band + (avail_h - span_y * scale) / 2.0,
    };

    let shortest = graph
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = (&nodes[e.u], &nodes[e.v]);
            (a.x - b.x).hypot(a.y - b.y) * scale
        })
        .fold(f64::INFINITY, f64::min);
    let edge_width = if shortest.is_finite() { (0.3 * shortest).clamp(0.5, 4.0) } else { 1.0 };

    let mut s = String::new();
    let out = &mut s;
    writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>").unwrap();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        style.width, style.height, style.width, style.height
    )
    .unwrap();
    writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>", style.width, style.height).unwrap();
    if let Some(title) = &style.title {
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            w / 2.0,
            margin + 8.0,
            escape(title)
        )
        .unwrap();
    }

    let regions = excluded_regions(graph);
    if !regions.is_empty() {
        writeln!(out, "<g id=\"excluded\" fill=\"#bdbdbd\" stroke=\"#636363\" stroke-width=\"1\">").unwrap();
        for [ax, ay, bx, by] in regions {
            let (px, py) = frame.px(ax, by);
            writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\"/>",
                px,
                py,
                (bx - ax) * scale,
                (by - ay) * scale
            )
            .unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }

    let (lo, hi) = match field {
        Some(f) => (
            f.iter().copied().fold(0.0, f64::min),
            f.iter().copied().fold(0.0, f64::max),
        ),
        None => (0.0, 0.0),
    };
    writeln!(out, "<g id=\"edges\" stroke-width=\"{edge_width:.2}\" stroke-linecap=\"round\">").unwrap();
    for (id, e) in graph.edges().iter().enumerate() {
        let (ax, ay) = frame.px(nodes[e.u].x, nodes[e.u].y);
        let (bx, by) = frame.px(nodes[e.v].x, nodes[e.v].y);
        let color = match field {
            Some(f) => {
                let t = if hi > lo { (f[id] - lo) / (hi - lo) } else { 0.0 };
                hex(style.colormap.color(t))
            }
            None => "#969696".to_string(),
        };
        writeln!(out, "<line x1=\"{ax:.2}\" y1=\"{ay:.2}\" x2=\"{bx:.2}\" y2=\"{by:.2}\" stroke=\"{color}\"/>").unwrap();
    }
    writeln!(out, "</g>").unwrap();

    if !curves.is_empty() {
        let heaviest = curves.iter().map(|c| c.1).fold(0.0, f64::max);
        writeln!(out, "<g id=\"curves\" fill=\"none\" stroke=\"#000000\" stroke-opacity=\"0.6\" stroke-linejoin=\"round\">").unwrap();
        for (path, mass) in curves {
            let width = if heaviest > 0.0 { 6.0 * mass / heaviest } else { 0.0 };
            let points: Vec<String> = path
                .nodes()
                .iter()
                .map(|&v| {
                    let (px, py) = frame.px(nodes[v].x, nodes[v].y);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            writeln!(out, "<polyline points=\"{}\" stroke-width=\"{width:.3}\"/>", points.join(" ")).unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }

    if field.is_some() {
        let bar_x = w - margin - legend + 24.0;
        let bar_top = margin + title_band;
        let bar_h = avail_h;
        writeln!(out, "<defs>").unwrap();
        writeln!(out, "<linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">").unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            writeln!(out, "<stop offset=\"{t:.1}\" stop-color=\"{}\"/>", hex(style.colormap.color(t))).unwrap();
        }
        writeln!(out, "</linearGradient>").unwrap();
        writeln!(out, "</defs>").unwrap();
        writeln!(out, "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"11\">").unwrap();
        writeln!(
            out,
            "<rect x=\"{bar_x:.2}\" y=\"{bar_top:.2}\" width=\"16\" height=\"{bar_h:.2}\" fill=\"url(#ramp)\" stroke=\"#000000\" stroke-width=\"0.5\"/>"
        )
        .unwrap();
        writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", bar_x + 20.0, bar_top + 10.0, format_label(hi)).unwrap();
        writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", bar_x + 20.0, bar_top + bar_h, format_label(lo)).unwrap();
        writeln!(out, "</g>").unwrap();
    }
    writeln!(out, "</svg>").unwrap();
    Ok(s)
}

fn format_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_domain, DomainSpec, Edge, GraphMeta, Node};

    fn rectangle() -> MetricGraph {
        build_domain(&DomainSpec::Rectangle { a: 2.0, b: 1.0, h: 0.25 }).unwrap()
    }

    fn horizontal_field(g: &MetricGraph) -> Vec<f64> {
        g.edges()
            .iter()
            .map(|e| if g.node(e.u).y == g.node(e.v).y { 1.0 } else { 0.0 })
            .collect()
    }

    #[test]
    fn density_field_colors_follow_orientation() {
        let g = rectangle();
        let f = horizontal_field(&g);
        let svg = render_svg(&g, Some(&f), &[], &Style::default()).unwrap();
        let top = hex(Colormap::TwoRamp.color(1.0));
        let bottom = hex(Colormap::TwoRamp.color(0.0));
        let horizontal = f.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(svg.matches(&format!("stroke=\"{top}\"/>")).count(), horizontal);
        assert_eq!(svg.matches(&format!("stroke=\"{bottom}\"/>")).count(), f.len() - horizontal);
        assert!(svg.contains("id=\"legend\""));
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn output_is_deterministic() {
        let g = rectangle();
        let f = horizontal_field(&g);
        let a = render_svg(&g, Some(&f), &[], &Style::default()).unwrap();
        let b = render_svg(&g, Some(&f), &[], &Style::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comb_bars_are_excluded_regions() {
        let g = build_domain(&DomainSpec::Comb { k: 3, h: 1.0 / 32.0 }).unwrap();
        let svg = render_svg(&g, None, &[], &Style::default()).unwrap();
        let group = svg.split("<g id=\"excluded\"").nth(1).unwrap().split("</g>").next().unwrap();
        assert_eq!(group.matches("<rect").count(), 3);
    }

    #[test]
    fn empty_curve_list_draws_only_the_graph() {
        let g = rectangle();
        let svg = render_svg(&g, None, &[], &Style::default()).unwrap();
        assert!(!svg.contains("polyline"));
        assert_eq!(svg.matches("<line").count(), g.edge_count());
    }

    #[test]
    fn curve_width_is_proportional_to_mass() {
        let g = rectangle();
        let a = Path::from_nodes(&g, vec![0, 1, 2]).unwrap();
        let b = Path::from_nodes(&g, vec![1, 2, 3]).unwrap();
        let svg = render_svg(&g, None, &[(a, 2.0), (b, 1.0)], &Style::default()).unwrap();
        assert!(svg.contains("stroke-width=\"6.000\""));
        assert!(svg.contains("stroke-width=\"3.000\""));
    }

    #[test]
    fn degenerate_layout_is_rejected() {
        let nodes = (0..2).map(|i| Node { id: i, x: 0.0, y: 0.0, boundary: true }).collect();
        let edges = vec![Edge { u: 0, v: 1, length: 1.0, measure: 1.0 }];
        let g = MetricGraph::new(nodes, edges, GraphMeta::default()).unwrap();
        assert!(render_svg(&g, None, &[], &Style::default()).is_err());
    }

    #[test]
    fn colormap_endpoints_and_parsing() {
        assert_eq!(Colormap::Gray.color(0.0), [224, 224, 224]);
        assert_eq!(Colormap::Gray.color(1.0), [0, 0, 0]);
        assert_eq!(Colormap::TwoRamp.color(0.5), [255, 255, 191]);
        assert_eq!("gray".parse::<Colormap>().unwrap(), Colormap::Gray);
        assert!("jet".parse::<Colormap>().is_err());
    }
}
