use std::fmt::Write;

use super::{EvalError, TrajectoryLog};
use crate::world::{Shape, WorldLayout};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];
const PX_PER_M: f64 = 80.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders trajectories over their shared layout as SVG: obstacles,
/// start and goal markers, one polyline per log and a legend with each
/// robot's radius and velocity bounds. World y points up.
pub fn emit_plot(logs: &[TrajectoryLog], layout: &WorldLayout) -> Result<String, EvalError> {
    if logs.is_empty() {
        return Err(EvalError::EmptyLogs);
    }
    if let Some(l) = logs.iter().find(|l| l.meta.layout != layout.name) {
        return Err(EvalError::LayoutMismatch {
            expected: layout.name.clone(),
            found: l.meta.layout.clone(),
        });
    }
    let (w, h) = (layout.bounds.w, layout.bounds.h);
    let legend_h = 0.3 * logs.len() as f64 + 0.2;
    let mut s = String::new();
    // writing to a String cannot fail
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{} {} {} {}">"#,
        w * PX_PER_M,
        (h + legend_h) * PX_PER_M,
        -w / 2.0,
        -h / 2.0,
        w,
        h + legend_h
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, esc(&layout.name));
    let _ = writeln!(s, r#"<g id="world" transform="scale(1,-1)">"#);
    let _ = writeln!(
        s,
        r#"<rect class="bounds" x="{}" y="{}" width="{w}" height="{h}" fill="white" stroke="black" stroke-width="0.04"/>"#,
        -w / 2.0,
        -h / 2.0
    );
    for o in &layout.obstacles {
        let style = r##"class="obstacle" fill="#888" stroke="#444" stroke-width="0.02""##;
        match o {
            Shape::Circle { center, radius } => {
                let _ = writeln!(s, r#"<circle {style} cx="{}" cy="{}" r="{radius}"/>"#, center.x, center.y);
            }
            Shape::Rect { min, max } => {
                let _ = writeln!(
                    s,
                    r#"<rect {style} x="{}" y="{}" width="{}" height="{}"/>"#,
                    min.x,
                    min.y,
                    max.x - min.x,
                    max.y - min.y
                );
            }
            Shape::Polygon { vertices } => {
                let pts: Vec<String> = vertices.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
                let _ = writeln!(s, r#"<polygon {style} points="{}"/>"#, pts.join(" "));
            }
        }
    }
    for (i, log) in logs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = log.rows.iter().map(|r| format!("{:.4},{:.4}", r.x, r.y)).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="trajectory" data-index="{i}" fill="none" stroke="{color}" stroke-width="0.03" points="{}"/>"#,
            pts.join(" ")
        );
        if let Some(p) = log.start() {
            let _ = writeln!(
                s,
                r#"<circle class="start" cx="{}" cy="{}" r="{}" fill="none" stroke="{color}" stroke-width="0.02"/>"#,
                p.x, p.y, log.meta.radius
            );
        }
        let g = log.meta.goal;
        let _ = writeln!(
            s,
            r#"<rect class="goal" x="{}" y="{}" width="0.16" height="0.16" fill="{color}"/>"#,
            g.x - 0.08,
            g.y - 0.08
        );
        for m in &log.swaps {
            let _ = writeln!(
                s,
                r#"<path class="swap" d="M {} {} L {} {} M {} {} L {} {}" stroke="black" stroke-width="0.03"/>"#,
                m.x - 0.1,
                m.y - 0.1,
                m.x + 0.1,
                m.y + 0.1,
                m.x - 0.1,
                m.y + 0.1,
                m.x + 0.1,
                m.y - 0.1
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="0.2">"#);
    for (i, log) in logs.iter().enumerate() {
        let y = h / 2.0 + 0.3 * (i as f64 + 1.0);
        let color = PALETTE[i % PALETTE.len()];
        let m = &log.meta;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="0.05"/>"#,
            -w / 2.0 + 0.1,
            y - 0.07,
            -w / 2.0 + 0.5,
            y - 0.07
        );
        let _ = writeln!(
            s,
            r#"<text class="legend-entry" x="{}" y="{}">{} R={:.2} m, v_max={:.2} m/s, omega_max={:.2} rad/s</text>"#,
            -w / 2.0 + 0.6,
            y,
            esc(&m.controller),
            m.radius,
            m.v_max,
            m.omega_max
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, NavEnv};
    use crate::eval::{run_episode, Straight};
    use crate::vehicle::{DimensionalConfig, Pose, VelocityCommand};
    use crate::world::Point;
    use std::sync::Arc;

    fn straight_log(radius: f64) -> (TrajectoryLog, Arc<WorldLayout>) {
        let layout = Arc::new(WorldLayout::resolve("env0").unwrap());
        let mut env = NavEnv::new(layout.clone(), EnvConfig::default());
        env.set_robot(DimensionalConfig::new(radius, 0.5, 1.0).unwrap());
        let mut c = Straight::new(VelocityCommand::new(0.4, 0.0));
        let (_, log) = run_episode(&mut env, &mut c, Pose::new(-3.5, 3.5, 0.0), Point::new(3.0, 3.5), &[], "straight").unwrap();
        (log, layout)
    }

    fn polylines(doc: &roxmltree::Document) -> Vec<Vec<(f64, f64)>> {
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .map(|n| {
                n.attribute("points")
                    .unwrap()
                    .split_whitespace()
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn straight_run_gives_monotone_polyline() {
        let (log, layout) = straight_log(0.2);
        let svg = emit_plot(&[log], &layout).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines = polylines(&doc);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].len() > 2);
        assert!(lines[0].windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn two_logs_two_lines_two_legend_entries() {
        let (a, layout) = straight_log(0.2);
        let (b, _) = straight_log(0.35);
        let svg = emit_plot(&[a, b], &layout).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(polylines(&doc).len(), 2);
        let entries: Vec<String> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("legend-entry"))
            .map(|n| n.text().unwrap().to_string())
            .collect();
        assert_eq!(entries.len(), 2);
        assert_ne!(entries[0], entries[1]);
        assert!(entries[1].contains("R=0.35"));
        assert!(doc.descendants().filter(|n| n.attribute("class") == Some("obstacle")).count() == layout.obstacles.len());
    }

    #[test]
    fn empty_or_foreign_logs_rejected() {
        let (log, _) = straight_log(0.2);
        let other = WorldLayout::resolve("env1").unwrap();
        assert!(matches!(emit_plot(&[], &other), Err(EvalError::EmptyLogs)));
        assert!(matches!(emit_plot(&[log], &other), Err(EvalError::LayoutMismatch { .. })));
    }
}
