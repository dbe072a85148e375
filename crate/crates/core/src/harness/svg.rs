//! Loss-space plot for two-task runs: each trajectory drawn in `(L_1, L_2)`
//! on log axes, shading from light (early steps) to saturated (late steps).

use std::fmt::Write;

use crate::harness::RunResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 60.0;
const LOSS_FLOOR: f64 = 1e-8;
const SEGMENTS: usize = 24;

fn palette(i: usize) -> (u8, u8, u8) {
    const COLORS: [(u8, u8, u8); 6] = [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (214, 39, 40),
        (148, 103, 189),
        (140, 86, 75),
    ];
    COLORS[i % COLORS.len()]
}

fn lerp_white(c: (u8, u8, u8), t: f64) -> String {
    let mix = |v: u8| (255.0 + (v as f64 - 255.0) * (0.25 + 0.75 * t)).round() as u8;
    format!("rgb({},{},{})", mix(c.0), mix(c.1), mix(c.2))
}

/// Renders `(label, result)` pairs; runs with the same label share a colour.
pub fn render_loss_svg(runs: &[(String, &RunResult)]) -> String {
    let pts: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|(_, r)| {
            r.trajectory
                .iter()
                .filter(|rec| rec.losses.len() >= 2)
                .map(|rec| {
                    (
                        rec.losses[0].max(LOSS_FLOOR).log10(),
                        rec.losses[1].max(LOSS_FLOOR).log10(),
                    )
                })
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut labels: Vec<&str> = Vec::new();
    for (l, _) in runs {
        if !labels.contains(&l.as_str()) {
            labels.push(l);
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(d as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">1e{d}</text>"#,
            HEIGHT - MARGIN + 16.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(d as f64);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" font-size="11" text-anchor="end">1e{d}</text>"#,
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">loss 1</text>"#,
        WIDTH / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">loss 2</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for ((label, _), p) in runs.iter().zip(&pts) {
        let color = palette(labels.iter().position(|l| l == label).unwrap_or(0));
        if p.len() < 2 {
            continue;
        }
        let chunk = p.len().div_ceil(SEGMENTS).max(1);
        let n_chunks = (p.len() - 1).div_ceil(chunk);
        for (k, start) in (0..p.len() - 1).step_by(chunk).enumerate() {
            let end = (start + chunk).min(p.len() - 1);
            let t = if n_chunks > 1 {
                k as f64 / (n_chunks - 1) as f64
            } else {
                1.0
            };
            let coords: Vec<String> = p[start..=end]
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                coords.join(" "),
                lerp_white(color, t)
            );
        }
        let (fx, fy) = p[0];
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#,
            sx(fx),
            sy(fy)
        );
    }
    for (i, l) in labels.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 90.0;
        let c = palette(i);
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="4" fill="rgb({},{},{})"/><text x="{:.1}" y="{y:.1}" font-size="12">{l}</text>"#,
            y - 5.0,
            c.0,
            c.1,
            c.2,
            x + 18.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run, RunConfig};
    use crate::problems::ProblemSpec;
    use crate::types::EmtlConfig;
    use crate::weighting::Strategy;

    #[test]
    fn renders_one_polyline_group_per_run() {
        let cfg = RunConfig::new(
            ProblemSpec::quad2([1.0, 100.0]),
            Strategy::Mgda,
            EmtlConfig {
                steps: 50,
                ..EmtlConfig::default()
            },
        );
        let r = run(&cfg).unwrap();
        let svg = render_loss_svg(&[("mgda".into(), &r), ("mgda".into(), &r)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(">mgda</text>"));
    }
}
