//! Minimal deterministic SVG charts: grouped bars with whiskers, and
//! lines over a numeric axis. Output depends only on the inputs.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 80.0;
const PALETTE: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

/// A value with a whisker range (e.g. mean over seeds, min..max).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct BarSeries {
    pub name: String,
    /// One entry per category; `None` leaves a gap.
    pub points: Vec<Option<Point>>,
}

#[derive(Debug, Clone)]
pub struct LineSeries {
    pub name: String,
    pub points: Vec<(f64, Point)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Padded axis range and tick positions covering `[lo, hi]`.
fn axis(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let span = (hi - lo).max(1e-3);
    let (lo, hi) = (lo - 0.1 * span, hi + 0.1 * span);
    let step = nice_step(hi - lo);
    let mut ticks = Vec::new();
    let mut k = (lo / step).ceil() as i64;
    while (k as f64) * step <= hi + 1e-12 {
        ticks.push(k as f64 * step);
        k += 1;
    }
    (lo, hi, ticks)
}

fn decimals(step: f64) -> usize {
    (-step.log10().floor()).max(0.0) as usize
}

struct Frame {
    out: String,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn new(title: &str, y_label: &str, note: &str, lo: f64, hi: f64) -> Self {
        let (y_lo, y_hi, ticks) = axis(lo, hi);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(out, "<!-- {} -->", escape(note));
        let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            escape(title)
        );
        let mut f = Frame { out, y_lo, y_hi };
        let digits = ticks.get(1).map_or(3, |t| decimals(t - ticks[0]));
        for &t in &ticks {
            let y = f.y(t);
            let _ = writeln!(
                f.out,
                "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" stroke=\"#e0e0e0\"/>\
                 <text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\">{t:.digits$}</text>",
                WIDTH - RIGHT,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            f.out,
            "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{:.1}\" stroke=\"black\"/>\
             <line x1=\"{LEFT}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM,
            WIDTH - RIGHT,
            HEIGHT - BOTTOM
        );
        let mid = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
        let _ = writeln!(
            f.out,
            "<text x=\"18\" y=\"{mid:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {mid:.1})\">{}</text>",
            escape(y_label)
        );
        f
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - TOP - BOTTOM;
        HEIGHT - BOTTOM - (v - self.y_lo) / (self.y_hi - self.y_lo) * h
    }

    fn whisker(&mut self, x: f64, p: Point, color: &str) {
        let (a, b) = (self.y(p.lo), self.y(p.hi));
        let _ = writeln!(
            self.out,
            "<line x1=\"{x:.2}\" y1=\"{a:.2}\" x2=\"{x:.2}\" y2=\"{b:.2}\" stroke=\"{color}\"/>\
             <line x1=\"{:.2}\" y1=\"{a:.2}\" x2=\"{:.2}\" y2=\"{a:.2}\" stroke=\"{color}\"/>\
             <line x1=\"{:.2}\" y1=\"{b:.2}\" x2=\"{:.2}\" y2=\"{b:.2}\" stroke=\"{color}\"/>",
            x - 4.0,
            x + 4.0,
            x - 4.0,
            x + 4.0
        );
    }

    fn legend(&mut self, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let x = WIDTH - RIGHT + 16.0;
            let _ = writeln!(
                self.out,
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\
                 <text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
                y - 10.0,
                PALETTE[i % PALETTE.len()],
                x + 18.0,
                y,
                escape(name)
            );
        }
    }

    fn finish(mut self, x_label: &str) -> String {
        let _ = writeln!(
            self.out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n</svg>",
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            HEIGHT - 16.0,
            escape(x_label)
        );
        self.out
    }
}

fn range<'a>(points: impl Iterator<Item = &'a Point>) -> (f64, f64) {
    points.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.lo).min(p.value), hi.max(p.hi).max(p.value))
    })
}

pub fn bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    categories: &[String],
    series: &[BarSeries],
    note: &str,
) -> String {
    let (mut lo, hi) = range(series.iter().flat_map(|s| s.points.iter().flatten()));
    if !lo.is_finite() {
        return Frame::new(title, y_label, note, 0.0, 1.0).finish(x_label);
    }
    // Bars grow from the bottom of the visible range.
    lo = lo.min(hi - 1e-3);
    let mut f = Frame::new(title, y_label, note, lo, hi);
    let base = f.y(f.y_lo);
    let plot_w = WIDTH - LEFT - RIGHT;
    let group = plot_w / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (c, name) in categories.iter().enumerate() {
        let gx = LEFT + group * c as f64 + group * 0.1;
        for (s, ser) in series.iter().enumerate() {
            let Some(p) = ser.points.get(c).copied().flatten() else {
                continue;
            };
            let color = PALETTE[s % PALETTE.len()];
            let x = gx + bar * s as f64;
            let top = f.y(p.value);
            let _ = writeln!(
                f.out,
                "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.8\">\
                 <title>{} {}: {:.5}</title></rect>",
                bar * 0.9,
                (base - top).max(0.0),
                escape(name),
                escape(&ser.name),
                p.value
            );
            f.whisker(x + bar * 0.45, p, "black");
        }
        let _ = writeln!(
            f.out,
            "<text x=\"{:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            LEFT + group * (c as f64 + 0.5),
            HEIGHT - BOTTOM + 18.0,
            escape(name)
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    f.legend(&names);
    f.finish(x_label)
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[LineSeries], note: &str) -> String {
    let (lo, hi) = range(series.iter().flat_map(|s| s.points.iter().map(|(_, p)| p)));
    if !lo.is_finite() {
        return Frame::new(title, y_label, note, 0.0, 1.0).finish(x_label);
    }
    let mut f = Frame::new(title, y_label, note, lo, hi);
    let xs = series.iter().flat_map(|s| s.points.iter().map(|(x, _)| *x));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x_lo, x_hi, x_ticks) = axis(x_lo, x_hi);
    let plot_w = WIDTH - LEFT - RIGHT;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let digits = x_ticks.get(1).map_or(2, |t| decimals(t - x_ticks[0]));
    for &t in &x_ticks {
        let _ = writeln!(
            f.out,
            "<text x=\"{:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{t:.digits$}</text>",
            sx(t),
            HEIGHT - BOTTOM + 18.0
        );
    }
    for (s, ser) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|(x, p)| format!("{:.2},{:.2}", sx(*x), f.y(p.value)))
            .collect();
        let _ = writeln!(
            f.out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        for &(x, p) in &ser.points {
            let cx = sx(x);
            f.whisker(cx, p, color);
            let _ = writeln!(
                f.out,
                "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"><title>{} @ {x}: {:.5}</title></circle>",
                f.y(p.value),
                escape(&ser.name),
                p.value
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    f.legend(&names);
    f.finish(x_label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Point {
        Point {
            value: v,
            lo: v - 0.01,
            hi: v + 0.01,
        }
    }

    #[test]
    fn ticks_are_round_and_cover_range() {
        let (lo, hi, ticks) = axis(0.61, 0.67);
        assert!(lo < 0.61 && hi > 0.67);
        assert!(ticks.len() >= 3);
        assert!((ticks[1] - ticks[0] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn charts_are_deterministic_and_escaped() {
        let cats = vec!["a<b".to_string(), "c".to_string()];
        let series = vec![BarSeries {
            name: "rho=0.2".into(),
            points: vec![Some(p(0.65)), None],
        }];
        let a = bar_chart("AUC", "arm", "AUC", &cats, &series, "n");
        assert_eq!(a, bar_chart("AUC", "arm", "AUC", &cats, &series, "n"));
        assert!(a.contains("a&lt;b") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<rect x=").count(), 2, "one bar plus one legend swatch");

        let lines = vec![LineSeries {
            name: "base".into(),
            points: vec![(0.0, p(0.7)), (0.4, p(0.6))],
        }];
        let l = line_chart("AUC", "rho", "AUC", &lines, "n");
        assert!(l.contains("<polyline"));
        assert_eq!(l.matches("<circle").count(), 2);
    }
}
