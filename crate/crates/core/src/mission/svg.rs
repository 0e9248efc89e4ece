//! Minimal static SVG plots, no external renderer.

use crate::geometry::Vec3;
use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Linear map from a data range onto the plot area.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = range(&mut xs.clone());
        let (y0, y1) = range(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN);
        let sy = HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN);
        (sx, sy)
    }

    fn points(&self, pts: impl Iterator<Item = (f64, f64)>) -> String {
        let mut s = String::new();
        for (x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let (a, b) = self.px(x, y);
            let _ = write!(s, "{a:.2},{b:.2} ");
        }
        s.trim_end().to_string()
    }
}

fn header(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        WIDTH / 2.0
    );
    let (l, b) = (MARGIN, HEIGHT - MARGIN);
    let (r, t) = (WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (v, anchor, x, y) in [
        (frame.x0, "start", l, b + 16.0),
        (frame.x1, "end", r, b + 16.0),
        (frame.y0, "end", l - 4.0, b),
        (frame.y1, "end", l - 4.0, t + 10.0),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#
        );
    }
    s
}

/// Line plot of several series sharing one abscissa.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    x: &[f64],
    series: &[(&str, Vec<f64>)],
) -> String {
    let frame = Frame::fit(
        x.iter().copied(),
        series.iter().flat_map(|(_, ys)| ys.iter().copied()),
    );
    let mut s = header(title, x_label, y_label, &frame);
    if frame.y0 < 0.0 && frame.y1 > 0.0 {
        let (a, y) = frame.px(frame.x0, 0.0);
        let (b, _) = frame.px(frame.x1, 0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 3"/>"##
        );
    }
    for (i, (label, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts = frame.points(x.iter().copied().zip(ys.iter().copied()));
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>"#
        );
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{label}</text>"#,
            WIDTH - MARGIN - 40.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Oblique projection of a target-frame point: axial distance to the right,
/// `z` up, `y` receding at 30°.
fn project(p: &Vec3) -> (f64, f64) {
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    (p.x + 0.5 * c * p.y, p.z + 0.5 * s * p.y)
}

/// Trajectory of the tip in the target frame against the funnel surface
/// `x = a·√l`. The silhouette meridian is tagged `id="funnel-boundary"`.
pub fn funnel_plot(a: f64, trajectory: &[Vec3]) -> String {
    let max_lateral = trajectory
        .iter()
        .map(|e| e.y.hypot(e.z))
        .filter(|v| v.is_finite())
        .fold(0.2f64, f64::max);
    let l_max = max_lateral * 1.1;
    let mesh_point = |l: f64, phi: f64| Vec3::new(a * l.sqrt(), l * phi.cos(), l * phi.sin());
    const N: usize = 60;
    let radii: Vec<f64> = (0..=N)
        .map(|i| l_max * (i as f64 / N as f64).powi(2))
        .collect();

    let projected_traj: Vec<(f64, f64)> = trajectory.iter().map(project).collect();
    let mesh_extent = [
        mesh_point(l_max, 0.0),
        mesh_point(l_max, std::f64::consts::PI),
        Vec3::zeros(),
    ];
    let all: Vec<(f64, f64)> = projected_traj
        .iter()
        .copied()
        .chain(mesh_extent.iter().map(project))
        .chain(radii.iter().flat_map(|&l| {
            [
                project(&mesh_point(l, std::f64::consts::FRAC_PI_2)),
                project(&mesh_point(l, -std::f64::consts::FRAC_PI_2)),
            ]
        }))
        .collect();
    let frame = Frame::fit(all.iter().map(|p| p.0), all.iter().map(|p| p.1));
    let mut s = header(
        &format!("Tip trajectory vs funnel (a = {a})"),
        "axial x [m] (y oblique)",
        "z [m]",
        &frame,
    );

    // meridians
    for k in 0..12 {
        let phi = k as f64 * std::f64::consts::TAU / 12.0;
        let pts = frame.points(radii.iter().map(|&l| project(&mesh_point(l, phi))));
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#c8c8c8" stroke-width="0.8" points="{pts}"/>"##
        );
    }
    // rings
    for j in 1..=6 {
        let l = l_max * (j as f64 / 6.0).powi(2);
        let pts = frame.points(
            (0..=48).map(|k| project(&mesh_point(l, k as f64 * std::f64::consts::TAU / 48.0))),
        );
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#c8c8c8" stroke-width="0.8" points="{pts}"/>"##
        );
    }
    let boundary = frame.points(
        radii
            .iter()
            .rev()
            .map(|&l| project(&mesh_point(l, -std::f64::consts::FRAC_PI_2)))
            .chain(
                radii
                    .iter()
                    .skip(1)
                    .map(|&l| project(&mesh_point(l, std::f64::consts::FRAC_PI_2))),
            ),
    );
    let _ = writeln!(
        s,
        r##"<polyline id="funnel-boundary" data-a="{a}" fill="none" stroke="#555" stroke-width="1.5" points="{boundary}"/>"##
    );
    let pts = frame.points(projected_traj.into_iter());
    let _ = writeln!(
        s,
        r#"<polyline id="trajectory" fill="none" stroke="{}" stroke-width="2" points="{pts}"/>"#,
        COLORS[1]
    );
    s.push_str("</svg>\n");
    s
}
