//! Overhead (ground-plane) SVG view of a generated interaction.

use std::fmt::Write;

use crate::error::Result;
use crate::motion::{project_root_trajectory, SkeletonSpec, Trajectory, TwoAgentMotion};

const SIZE: f64 = 480.0;
const PAD: f64 = 24.0;

/// Layer ids and stroke colors, in drawing order.
pub const LAYERS: [(&str, &str); 3] = [("target", "#888888"), ("leader", "#d62728"), ("follower", "#1f77b4")];

fn polyline(points: &[[f64; 2]], map: &impl Fn([f64; 2]) -> (f64, f64)) -> String {
    let mut s = String::new();
    for (i, p) in points.iter().enumerate() {
        let (x, y) = map(*p);
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{x:.3},{y:.3}").unwrap();
    }
    s
}

/// Target (dashed), leader root path and follower root path, seen from above.
/// Ground x runs right and ground z runs down.
pub fn overhead_svg(motion: &TwoAgentMotion, targets: &[Trajectory], skeleton: &SkeletonSpec) -> Result<String> {
    let leader = project_root_trajectory(&motion.agent_a, skeleton)?;
    let follower = project_root_trajectory(&motion.agent_b, skeleton)?;
    let all = targets
        .iter()
        .chain([&leader, &follower])
        .flat_map(|t| t.points().iter().copied());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let scale = (SIZE - 2.0 * PAD) / span;
    let map = move |p: [f64; 2]| (PAD + (p[0] - lo[0]) * scale, PAD + (p[1] - lo[1]) * scale);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(svg, r#"  <rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let paths: [(&str, &str, Vec<&Trajectory>, &str); 3] = [
        (LAYERS[0].0, LAYERS[0].1, targets.iter().collect(), r#" stroke-dasharray="6 4""#),
        (LAYERS[1].0, LAYERS[1].1, vec![&leader], ""),
        (LAYERS[2].0, LAYERS[2].1, vec![&follower], ""),
    ];
    for (id, color, trs, extra) in paths {
        writeln!(svg, r#"  <g id="{id}" fill="none" stroke="{color}" stroke-width="2"{extra}>"#).unwrap();
        for tr in trs {
            writeln!(svg, r#"    <polyline points="{}"/>"#, polyline(tr.points(), &map)).unwrap();
        }
        writeln!(svg, "  </g>").unwrap();
    }
    for (i, (id, color)) in LAYERS.iter().enumerate() {
        let y = 14.0 + 14.0 * i as f64;
        writeln!(
            svg,
            r#"  <text x="6" y="{y}" font-family="sans-serif" font-size="11" fill="{color}">{id}</text>"#
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::tests::random_pair;

    #[test]
    fn three_layers_and_balanced_tags() {
        let s = SkeletonSpec::default();
        let x = random_pair(8, 22, 4);
        let tr = Trajectory::planar(30.0, (0..8).map(|f| [f as f64 * 0.1, 0.0]).collect()).unwrap();
        let svg = overhead_svg(&x, &[tr], &s).unwrap();
        for (id, _) in LAYERS {
            assert!(svg.contains(&format!(r#"<g id="{id}""#)));
        }
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("<g ").count(), svg.matches("</g>").count());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn no_target_leaves_empty_layer() {
        let s = SkeletonSpec::default();
        let svg = overhead_svg(&random_pair(5, 22, 1), &[], &s).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
