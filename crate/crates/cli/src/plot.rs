//! Static SVG plot of vehicle paths in the world frame.

use std::fmt::Write;

use perfboost::plants::PointMassParams;
use perfboost::scenario::Scenario;
use perfboost::Trajectory;

const SIZE: f64 = 480.0;
const PAD: f64 = 24.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Obstacle disk drawn behind the paths.
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Mountain obstacles at one standard deviation, TLTL obstacles at `r_obs`.
pub fn scenario_disks(s: &Scenario) -> Vec<Disk> {
    let mut out: Vec<Disk> = s
        .loss
        .obstacles
        .iter()
        .map(|o| Disk {
            center: o.center,
            radius: (0.5 * (o.cov[0][0] + o.cov[1][1])).sqrt(),
        })
        .collect();
    if let Some(t) = &s.tltl {
        out.extend(t.obstacles.iter().map(|&c| Disk {
            center: c,
            radius: t.r_obs,
        }));
    }
    out
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Frame {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        Frame {
            lo,
            scale: (SIZE - 2.0 * PAD) / span,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            PAD + (p[0] - self.lo[0]) * self.scale,
            SIZE - PAD - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

/// Paths of every vehicle with start dots, target crosses and obstacle
/// disks.
pub fn paths_svg(plant: &PointMassParams, traj: &Trajectory, disks: &[Disk], waypoints: &[[f64; 2]]) -> String {
    let paths: Vec<Vec<[f64; 2]>> = (0..plant.n_vehicles())
        .map(|i| traj.x.iter().map(|x| plant.positions(x)[i]).collect())
        .collect();
    let extents = paths
        .iter()
        .flatten()
        .copied()
        .chain(plant.targets.iter().copied())
        .chain(waypoints.iter().copied())
        .chain(disks.iter().flat_map(|d| {
            [
                [d.center[0] - d.radius, d.center[1] - d.radius],
                [d.center[0] + d.radius, d.center[1] + d.radius],
            ]
        }));
    let f = Frame::fit(extents);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for d in disks {
        let (cx, cy) = f.map(d.center);
        let _ = writeln!(
            s,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#bbbbbb" fill-opacity="0.5"/>"##,
            d.radius * f.scale
        );
    }
    for w in waypoints {
        let (x, y) = f.map(*w);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="#555555"/>"##,
            x - 4.0,
            y - 4.0
        );
    }
    for (i, path) in paths.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = path
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .map(|p| {
                let (x, y) = f.map(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        if let Some(p) = path.first() {
            let (x, y) = f.map(*p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
        }
        let (x, y) = f.map(plant.targets[i]);
        let _ = writeln!(
            s,
            r#"<path d="M{:.2},{:.2} l10,10 m0,-10 l-10,10" stroke="{color}" stroke-width="2"/>"#,
            x - 5.0,
            y - 5.0
        );
    }
    s.push_str("</svg>\n");
    s
}
