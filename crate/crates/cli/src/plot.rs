use std::fmt::Write;

use crate::output::{fmt_sig, CsvRow};
use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 6;

const PALETTE: [&str; 8] = [
    "#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Groups rows by method in order of first appearance.
pub fn series_from_rows(rows: &[CsvRow]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        if !(r.value.is_finite() && r.mean_sinr_db.is_finite()) {
            continue;
        }
        match out.iter_mut().find(|s| s.name == r.method) {
            Some(s) => s.points.push((r.value, r.mean_sinr_db)),
            None => out.push(Series {
                name: r.method.clone(),
                points: vec![(r.value, r.mean_sinr_db)],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn range(vals: impl Iterator<Item = f64>, margin: f64) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi == lo {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = margin * (hi - lo);
    (lo - pad, hi + pad)
}

fn axis_label(sweep_var: &str) -> &str {
    match sweep_var {
        "snr_db" => "input SNR (dB)",
        "n_snapshots" => "number of snapshots",
        other => other,
    }
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

/// Static line chart of mean SINR against the sweep variable. The y range
/// spans every series with a 5% margin on each side and is recorded in the
/// root element's `data-y-min` / `data-y-max` attributes.
pub fn render_svg(rows: &[CsvRow]) -> Result<String, CliError> {
    let series = series_from_rows(rows);
    if series.is_empty() {
        return Err(CliError::Csv {
            row: 0,
            reason: "no finite data rows to plot".into(),
        });
    }
    let sweep_var = rows.first().map(|r| r.sweep_var.as_str()).unwrap_or("");
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = range(all().map(|p| p.0), 0.0);
    let (y0, y1) = range(all().map(|p| p.1), 0.05);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12" data-y-min="{}" data-y-max="{}">"#,
        fmt_sig(y0),
        fmt_sig(y1)
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );

    for k in 0..TICKS {
        let t = k as f64 / (TICKS - 1) as f64;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"##,
            num(px),
            num(TOP),
            num(TOP + ph),
            num(TOP + ph + 16.0),
            format_tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"##,
            num(LEFT),
            num(py),
            num(LEFT + pw),
            num(LEFT - 6.0),
            num(py + 4.0),
            format_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(LEFT + pw / 2.0),
        num(HEIGHT - 15.0),
        axis_label(sweep_var)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">output SINR (dB)</text>"#,
        num(TOP + ph / 2.0)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{},{}", num(sx(x)), num(sy(y)))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-method="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            ser.name,
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle class="marker" data-method="{}" cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                ser.name,
                num(sx(x)),
                num(sy(y))
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="2"/><text x="{3}" y="{4}">{5}</text>"#,
            num(lx),
            num(ly),
            num(lx + 20.0),
            num(lx + 26.0),
            num(ly + 4.0),
            ser.name
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_tick(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    if r == 0.0 {
        "0".into()
    } else {
        fmt_sig(r)
    }
}
