//! Minimal self-contained SVG plots: line charts and scatter panels with
//! ellipse glyphs.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            return Range {
                lo: lo - 0.5,
                hi: hi + 0.5,
            };
        }
        let pad = 0.05 * (hi - lo);
        Range {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

/// Plot area inside an SVG document.
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: Range,
    yr: Range,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + self.xr.frac(x) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + (1.0 - self.yr.frac(y)) * self.h
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (x0, y0, w, h) = (self.x0, self.y0, self.w, self.h);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#000"/>"##
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.xr.lo + f * (self.xr.hi - self.xr.lo);
            let yv = self.yr.lo + f * (self.yr.hi - self.yr.lo);
            let (tx, ty) = (x0 + f * w, y0 + h - f * h);
            let _ = writeln!(
                out,
                r##"<text x="{tx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"##,
                y0 + h + 14.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                ty + 3.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"##,
            x0 + w / 2.0,
            y0 + h + 30.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"##,
            x0 - 38.0,
            y0 + h / 2.0,
            x0 - 38.0,
            y0 + h / 2.0,
            escape(ylabel)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn document(width: f64, height: f64, title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n\
         <text x=\"{:.1}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n{body}</svg>\n",
        width / 2.0,
        escape(title)
    )
}

fn legend(out: &mut String, x: f64, y: f64, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let yy = y + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="{}" stroke-width="2"/>"##,
            x + 16.0,
            color(i)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"##,
            x + 20.0,
            yy + 3.0,
            escape(name)
        );
    }
}

/// One polyline per series; every series shares the x values of its own points.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let panel = Panel {
        x0: 60.0,
        y0: 30.0,
        w: 520.0,
        h: 320.0,
        xr: Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))),
        yr: Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))),
    };
    let mut body = String::new();
    panel.axes(&mut body, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", panel.px(x), panel.py(y)))
            .collect();
        let _ = writeln!(
            body,
            r##"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"##,
            color(i),
            pts.join(" ")
        );
    }
    let names: Vec<String> = series.iter().map(|s| s.name.clone()).collect();
    legend(&mut body, 600.0, 40.0, &names);
    document(760.0, 400.0, title, &body)
}

/// An axis-aligned ellipse glyph: center and semi-axes in data units.
#[derive(Debug, Clone, Copy)]
pub struct Glyph {
    pub center: (f64, f64),
    pub semi: (f64, f64),
    /// Hollow glyphs mark samples dropped from the distinguishable subset.
    pub filled: bool,
}

pub struct ScatterGroup {
    pub name: String,
    pub glyphs: Vec<Glyph>,
}

/// One scatter panel per coordinate pair, laid out horizontally.
pub fn scatter_panels(
    title: &str,
    axes: &[(String, String)],
    groups: &[Vec<ScatterGroup>],
) -> String {
    let side = 300.0;
    let gap = 70.0;
    let mut body = String::new();
    for (k, ((xl, yl), panel_groups)) in axes.iter().zip(groups).enumerate() {
        let all = || panel_groups.iter().flat_map(|g| g.glyphs.iter());
        let xr = Range::of(all().flat_map(|g| [g.center.0 - g.semi.0, g.center.0 + g.semi.0]));
        let yr = Range::of(all().flat_map(|g| [g.center.1 - g.semi.1, g.center.1 + g.semi.1]));
        let panel = Panel {
            x0: 60.0 + k as f64 * (side + gap),
            y0: 30.0,
            w: side,
            h: side,
            xr,
            yr,
        };
        panel.axes(&mut body, xl, yl);
        for (i, g) in panel_groups.iter().enumerate() {
            for glyph in &g.glyphs {
                let rx = (glyph.semi.0 / (xr.hi - xr.lo) * side).max(0.5);
                let ry = (glyph.semi.1 / (yr.hi - yr.lo) * side).max(0.5);
                let fill = if glyph.filled { color(i) } else { "none" };
                let _ = writeln!(
                    body,
                    r##"<ellipse cx="{:.2}" cy="{:.2}" rx="{rx:.2}" ry="{ry:.2}" fill="{fill}" fill-opacity="0.35" stroke="{}" stroke-width="0.6"/>"##,
                    panel.px(glyph.center.0),
                    panel.py(glyph.center.1),
                    color(i)
                );
            }
        }
    }
    let names: Vec<String> = groups
        .first()
        .map(|g| g.iter().map(|s| s.name.clone()).collect())
        .unwrap_or_default();
    let width = 60.0 + axes.len() as f64 * (side + gap) + 80.0;
    legend(&mut body, width - 130.0, 40.0, &names);
    document(width, side + 80.0, title, &body)
}

/// Number of `<tag ...>` elements, for tests.
pub fn count_elements(svg: &str, tag: &str) -> usize {
    svg.matches(&format!("<{tag} ")).count()
}
