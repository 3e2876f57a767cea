//! Minimal SVG line charts.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 720.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;

fn extent(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = it.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} L{PAD},{b} L{r},{b}" fill="none" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(xv), H - PAD + 18.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, PAD - 6.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 14.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(y_label),
        y = H / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let mut d = String::new();
        for (j, (x, y)) in ser.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, d.trim_end(), ser.color);
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, ser.color, a = W - PAD - 140.0, b = W - PAD - 120.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - PAD - 114.0, ly + 4.0, escape(ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
