//! Self-contained SVG line plots.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
/// Log axes show at most this many decades below the largest value.
const MAX_DECADES: f64 = 12.0;

const COLORS: [&str; 6] = ["#1f4e79", "#c0392b", "#27864a", "#8e44ad", "#d68910", "#566573"];

pub struct Line<'a> {
    pub label: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub dashed: bool,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
    pub lines: Vec<Line<'a>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_text(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

impl Plot<'_> {
    pub fn render(&self) -> String {
        let pts = || self.lines.iter().flat_map(|l| l.xs.iter().zip(l.ys.iter()));
        let finite = |v: &f64| v.is_finite();
        let (mut x0, mut x1) = pts().map(|(x, _)| *x).filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if !(x0 < x1) {
            x0 = if x0.is_finite() { x0 - 0.5 } else { 0.0 };
            x1 = x0 + 1.0;
        }
        let ys: Vec<f64> = pts().map(|(_, y)| *y).filter(finite).collect();
        let (y0, y1) = if self.log_y {
            let top = ys.iter().copied().filter(|&y| y > 0.0).fold(f64::NEG_INFINITY, f64::max);
            let bot = ys.iter().copied().filter(|&y| y > 0.0).fold(f64::INFINITY, f64::min);
            if top.is_finite() {
                let hi = top.log10().ceil();
                let lo = bot.log10().floor().max(hi - MAX_DECADES).min(hi - 1.0);
                (lo, hi)
            } else {
                (-1.0, 0.0)
            }
        } else {
            let lo = ys.iter().copied().fold(0.0, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo { (lo, hi * 1.05) } else { (lo, lo + 1.0) }
        };
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(self.title));
        // grid and ticks
        let step = nice_step(x1 - x0);
        let mut x = (x0 / step).ceil() * step;
        while x <= x1 + 1e-9 * step {
            let px = sx(x);
            let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e5e5e5"/>"##, TOP + ph);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_text(x));
            x += step;
        }
        let yticks: Vec<f64> = if self.log_y {
            let every = ((y1 - y0) / 6.0).ceil().max(1.0);
            let mut v = Vec::new();
            let mut e = y1;
            while e >= y0 - 1e-9 {
                v.push(e);
                e -= every;
            }
            v
        } else {
            let step = nice_step(y1 - y0);
            let mut v = Vec::new();
            let mut y = (y0 / step).ceil() * step;
            while y <= y1 + 1e-9 * step {
                v.push(y);
                y += step;
            }
            v
        };
        for y in yticks {
            let py = sy(y);
            let label = if self.log_y { format!("1e{}", y.round() as i64) } else { tick_text(y) };
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e5e5e5"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, py + 4.0);
        }
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 14.0, escape(self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(self.y_label)
        );
        let _ = writeln!(s, r#"<clipPath id="area"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>"#);
        for (i, line) in self.lines.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let dash = if line.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            // a run of drawable points per polyline; gaps where a log axis cannot show a value
            let mut runs: Vec<Vec<String>> = vec![Vec::new()];
            for (&x, &y) in line.xs.iter().zip(line.ys) {
                let ok = x.is_finite() && y.is_finite() && (!self.log_y || y > 0.0);
                if ok {
                    let v = ty(y).max(y0 - 1.0);
                    runs.last_mut().expect("nonempty").push(format!("{:.2},{:.2}", sx(x), sy(v)));
                } else if !runs.last().expect("nonempty").is_empty() {
                    runs.push(Vec::new());
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                if run.len() == 1 {
                    let (cx, cy) = run[0].split_once(',').expect("pair");
                    let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}" clip-path="url(#area)"/>"#);
                } else {
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash} clip-path="url(#area)"/>"#,
                        run.join(" ")
                    );
                }
            }
            let ly = TOP + 16.0 + 18.0 * i as f64;
            let lx = LEFT + pw - 230.0;
            let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.8"{dash}/>"#, lx + 24.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 30.0, ly + 4.0, escape(line.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_deterministically() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let a = [1.0, 0.5, 0.25, 0.125];
        let b = [1.0, 0.1, 0.0, 1e-30];
        let p = Plot {
            title: "decay <test>",
            x_label: "t",
            y_label: "mix",
            log_y: true,
            lines: vec![Line { label: "obs", xs: &xs, ys: &a, dashed: false }, Line { label: "bound", xs: &xs, ys: &b, dashed: true }],
        };
        let s = p.render();
        assert_eq!(s, p.render());
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("decay &lt;test&gt;"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert_eq!(s.matches("<circle").count(), 1);
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }

    #[test]
    fn linear_axis_handles_flat_series() {
        let xs = [0.0, 1.0];
        let ys = [2.0, 2.0];
        let p = Plot { title: "", x_label: "t", y_label: "y", log_y: false, lines: vec![Line { label: "c", xs: &xs, ys: &ys, dashed: false }] };
        assert!(p.render().contains("<polyline"));
    }
}
