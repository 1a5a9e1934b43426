//! Minimal SVG line charts of predicted vs actual profiles.

use std::fmt::Write;

use crate::commands::ProfileRecord;

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;

/// (label, color, dashed, accessor)
type Series = (&'static str, &'static str, bool, fn(&ProfileRecord) -> f64);

const SERIES: [Series; 5] = [
    ("actual", "#000000", false, |r| r.actual_mps),
    ("predicted", "#d62728", false, |r| r.predicted_mps),
    ("tmc_direct", "#1f77b4", true, |r| r.tmc_direct_mps),
    ("average_speed", "#2ca02c", true, |r| r.average_speed_mps),
    ("posted_speed", "#7f7f7f", true, |r| r.posted_speed_mps),
];

/// One chart for the rows of a single trip, x = standard-point index, y = m/s.
pub fn profile_chart(rows: &[ProfileRecord]) -> String {
    let x_max = rows.iter().map(|r| r.sp_index).max().unwrap_or(0).max(1) as f64;
    let y_max = rows
        .iter()
        .flat_map(|r| SERIES.iter().map(move |s| (s.3)(r)))
        .filter(|v| v.is_finite())
        .fold(1.0_f64, f64::max);
    let y_top = (y_max / 5.0).ceil() * 5.0;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |i: f64| LEFT + pw * i / x_max;
    let py = |v: f64| TOP + ph * (1.0 - v / y_top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let title = format!("{} ({})", rows.first().map_or("", |r| &r.trip_id), rows.first().map_or("", |r| &r.config_id));
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#, escape(&title));

    for i in 0..=5 {
        let v = y_top * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.0}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = ((x_max / 10.0).ceil() as usize).max(1);
    for i in (0..=x_max as usize).step_by(step) {
        let x = px(i as f64);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{i}</text>"#, TOP + ph + 16.0);
    }
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">standard point</text>"#,
        LEFT + pw / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">speed (m/s)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (k, (label, color, dashed, get)) in SERIES.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.sp_index as f64), py(get(r))))
            .collect();
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{label}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
