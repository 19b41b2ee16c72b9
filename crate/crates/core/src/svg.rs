//! Static label-vs-time step plots of prediction traces.

use std::fmt::Write;

use crate::domain::{InteractionLabel, NUM_CLASSES};
use crate::error::Result;
use crate::postprocess::PredictionTrace;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 130.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Series<'a> {
    name: &'static str,
    color: &'static str,
    labels: &'a [usize],
    /// Vertical offset in pixels so coinciding series stay visible.
    offset: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn series(trace: &PredictionTrace) -> Vec<Series<'_>> {
    let mut out = Vec::new();
    if let Some(t) = &trace.truth {
        out.push(Series { name: "true", color: "#222222", labels: t, offset: 0.0 });
    }
    out.push(Series { name: "ensembled", color: "#d62728", labels: &trace.ensembled, offset: -3.0 });
    out.push(Series { name: "smoothed", color: "#1f77b4", labels: &trace.smoothed, offset: 3.0 });
    out
}

/// Render the true (when present), ensembled and smoothed label series of
/// one trial as a step plot.
pub fn timeline_svg(trace: &PredictionTrace, title: &str) -> Result<String> {
    trace.validate()?;
    let n = trace.len().max(1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |i: usize| LEFT + plot_w * i as f64 / n as f64;
    let y = |c: usize| TOP + plot_h * (c as f64 + 0.5) / NUM_CLASSES as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14">{}</text>"#, LEFT, escape(title));

    for c in 0..NUM_CLASSES {
        let name = InteractionLabel::from_index(c)?.name();
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{name}</text>"##,
            y = y(c),
            x2 = LEFT + plot_w,
            tx = LEFT - 6.0,
            ty = y(c) + 4.0,
        );
    }
    let ticks = 10.min(n);
    for k in 0..=ticks {
        let i = n * k / ticks.max(1);
        let _ = writeln!(
            s,
            r##"<line x1="{xi:.2}" y1="{y0:.2}" x2="{xi:.2}" y2="{y1:.2}" stroke="#888888"/><text x="{xi:.2}" y="{ty:.2}" text-anchor="middle">{i}</text>"##,
            xi = x(i),
            y0 = TOP + plot_h,
            y1 = TOP + plot_h + 5.0,
            ty = TOP + plot_h + 18.0,
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">packet</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    for (k, ser) in series(trace).iter().enumerate() {
        let mut d = String::new();
        for (i, &c) in ser.labels.iter().enumerate() {
            let yy = y(c) + ser.offset;
            if i == 0 {
                let _ = write!(d, "M{:.2},{yy:.2}", x(0));
            } else {
                let _ = write!(d, " V{yy:.2}");
            }
            let _ = write!(d, " H{:.2}", x(i + 1));
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            ser.color
        );
        let lx = WIDTH - RIGHT - 250.0 + 85.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="18" x2="{:.2}" y2="18" stroke="{}" stroke-width="2"/><text x="{:.2}" y="22">{}</text>"#,
            lx + 16.0,
            ser.color,
            lx + 20.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// The data behind [`timeline_svg`]: one row per packet with class names.
pub fn timeline_csv(trace: &PredictionTrace) -> Result<String> {
    trace.validate()?;
    let name = |c: usize| InteractionLabel::from_index(c).map(|l| l.name());
    let mut s = String::from("packet,true,ensembled,smoothed\n");
    for i in 0..trace.len() {
        let truth = match &trace.truth {
            Some(t) => name(t[i])?,
            None => "",
        };
        let _ = writeln!(s, "{i},{truth},{},{}", name(trace.ensembled[i])?, name(trace.smoothed[i])?);
    }
    Ok(s)
}
