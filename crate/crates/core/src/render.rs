//! SVG scenes of plans and runs, plus PGM export of belief grids.
//!
//! A [`Scene`] is a flat list of tagged elements. The SVG writer emits one
//! SVG node per element carrying its id, so the element list doubles as a
//! manifest of what a picture shows.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dynamics::RobotState;
use crate::error::Result;
use crate::geometry::{ConvexPolygon, Ellipsoid, Vec2};
use crate::planner::NlpSolution;
use crate::reactive_set::ReactiveSetModel;
use crate::sensor::{fov_polygon, BeliefMap, Bounds, SensorParams};
use crate::simulator::{Scenario, SimTrace};

/// Pixels per metre.
pub const SCALE: f64 = 100.0;
/// Velocity arrow length per m/s.
const ARROW_SCALE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    KnownObstacle,
    UnknownObstacle,
    Path,
    Velocity,
    ReactiveSet,
    Fov,
    Detection,
    Start,
    Goal,
    Robot,
}

impl Role {
    fn style(self) -> &'static str {
        match self {
            Role::KnownObstacle => r##"fill="#d62728" fill-opacity="0.6" stroke="#d62728""##,
            Role::UnknownObstacle => r##"fill="#000000" fill-opacity="0.8" stroke="#000000""##,
            Role::Path => r##"fill="none" stroke="#1f77b4" stroke-width="2""##,
            Role::Velocity => r##"stroke="#1f77b4" stroke-width="1" marker-end="url(#arrow)""##,
            Role::ReactiveSet => r##"fill="#2ca02c" fill-opacity="0.05" stroke="#2ca02c" stroke-width="1""##,
            Role::Fov => r##"fill="#ffbf00" fill-opacity="0.12" stroke="#b08000" stroke-width="0.5""##,
            Role::Detection => r##"stroke="#d62728" stroke-width="3""##,
            Role::Start => r##"fill="#1f77b4""##,
            Role::Goal => r##"fill="none" stroke="#2ca02c" stroke-width="2""##,
            Role::Robot => r##"fill="#ff7f0e""##,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Polygon {
        points: Vec<[f64; 2]>,
    },
    Polyline {
        points: Vec<[f64; 2]>,
    },
    Arrow {
        from: [f64; 2],
        to: [f64; 2],
    },
    /// `{center + shape z : |z| <= 1}`, shape stored row-major.
    Ellipse {
        center: [f64; 2],
        shape: [f64; 4],
    },
    Cross {
        at: [f64; 2],
        size: f64,
    },
    Dot {
        at: [f64; 2],
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Element {
    pub id: String,
    pub role: Role,
    #[serde(flatten)]
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scene {
    pub title: String,
    pub bounds: Bounds,
    pub elements: Vec<Element>,
}

fn pt(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

fn poly_points(p: &ConvexPolygon) -> Vec<[f64; 2]> {
    p.vertices().iter().copied().map(pt).collect()
}

impl Scene {
    pub fn new(title: impl Into<String>, bounds: Bounds) -> Self {
        Self {
            title: title.into(),
            bounds,
            elements: Vec::new(),
        }
    }

    pub fn push(&mut self, role: Role, shape: Shape) {
        let n = self.elements.iter().filter(|e| e.role == role).count();
        let tag = serde_json::to_value(role).expect("role serializes");
        let id = format!("{}-{n}", tag.as_str().unwrap_or("element"));
        self.elements.push(Element { id, role, shape });
    }

    pub fn polygon(&mut self, role: Role, p: &ConvexPolygon) {
        self.push(role, Shape::Polygon { points: poly_points(p) });
    }

    pub fn ellipse(&mut self, e: &Ellipsoid) {
        let m = e.shape;
        self.push(
            Role::ReactiveSet,
            Shape::Ellipse {
                center: pt(e.center),
                shape: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
            },
        );
    }

    /// Obstacles of the world, coloured by whether the belief knows them.
    pub fn obstacles(&mut self, belief: &BeliefMap, truth: &[ConvexPolygon]) {
        for o in &belief.known_obstacles {
            self.polygon(Role::KnownObstacle, o);
        }
        for o in truth.iter().filter(|o| !belief.knows(o)) {
            self.polygon(Role::UnknownObstacle, o);
        }
    }

    pub fn endpoints(&mut self, start: Vec2, goal: Vec2) {
        self.push(
            Role::Start,
            Shape::Dot {
                at: pt(start),
                radius: 0.05,
            },
        );
        self.push(
            Role::Goal,
            Shape::Dot {
                at: pt(goal),
                radius: 0.1,
            },
        );
    }

    pub fn velocity(&mut self, x: &RobotState) {
        let dir = Vec2::new(x.heading.cos(), x.heading.sin());
        self.push(
            Role::Velocity,
            Shape::Arrow {
                from: pt(x.position),
                to: pt(x.position + dir * (x.linear_speed * ARROW_SCALE)),
            },
        );
    }

    /// Ids of all elements; what a rendered SVG must contain, no more.
    pub fn manifest(&self) -> Vec<String> {
        self.elements.iter().map(|e| e.id.clone()).collect()
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.bounds.min.x) * SCALE, (self.bounds.max.y - p[1]) * SCALE)
    }

    fn points_attr(&self, pts: &[[f64; 2]]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_svg(&self) -> String {
        let size = self.bounds.size() * SCALE;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
            size.x, size.y, size.x, size.y
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        s.push_str(concat!(
            r##"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="4" markerHeight="4" orient="auto">"##,
            r##"<path d="M0,0 L10,5 L0,10 z" fill="#1f77b4"/></marker></defs>"##,
            "\n"
        ));
        s.push_str(r##"<rect x="0" y="0" width="100%" height="100%" fill="#ffffff" stroke="#888888"/>"##);
        s.push('\n');
        for e in &self.elements {
            let style = e.role.style();
            let id = &e.id;
            let _ = match &e.shape {
                Shape::Polygon { points } => {
                    writeln!(
                        s,
                        r#"<polygon id="{id}" points="{}" {style}/>"#,
                        self.points_attr(points)
                    )
                }
                Shape::Polyline { points } => {
                    writeln!(
                        s,
                        r#"<polyline id="{id}" points="{}" {style}/>"#,
                        self.points_attr(points)
                    )
                }
                Shape::Arrow { from, to } => {
                    let (x1, y1) = self.px(*from);
                    let (x2, y2) = self.px(*to);
                    writeln!(
                        s,
                        r#"<line id="{id}" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#
                    )
                }
                Shape::Ellipse { center, shape } => {
                    let (cx, cy) = self.px(*center);
                    let (rx, ry, angle) = ellipse_axes(*shape);
                    // The y flip reverses the sense of rotation.
                    writeln!(
                        s,
                        r#"<ellipse id="{id}" cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.3} {cx:.2} {cy:.2})" {style}/>"#,
                        rx * SCALE,
                        ry * SCALE,
                        -angle.to_degrees()
                    )
                }
                Shape::Cross { at, size } => {
                    let (x, y) = self.px(*at);
                    let h = size * SCALE;
                    writeln!(
                        s,
                        r#"<path id="{id}" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" {style}/>"#,
                        x - h,
                        y - h,
                        x + h,
                        y + h,
                        x - h,
                        y + h,
                        x + h,
                        y - h
                    )
                }
                Shape::Dot { at, radius } => {
                    let (x, y) = self.px(*at);
                    writeln!(
                        s,
                        r#"<circle id="{id}" cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#,
                        radius * SCALE
                    )
                }
            };
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Semi-axes and orientation of the major axis of `{M z : |z| <= 1}` from
/// the eigen-decomposition of `M M^T`.
pub fn ellipse_axes(m: [f64; 4]) -> (f64, f64, f64) {
    let a = m[0] * m[0] + m[1] * m[1];
    let b = m[0] * m[2] + m[1] * m[3];
    let c = m[2] * m[2] + m[3] * m[3];
    let mean = 0.5 * (a + c);
    let dev = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    ((mean + dev).sqrt(), (mean - dev).max(0.0).sqrt(), angle)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Ids in an SVG document, in order of appearance.
pub fn svg_ids(svg: &str) -> Vec<String> {
    svg.split(" id=\"")
        .skip(1)
        .filter_map(|rest| rest.split('"').next())
        .filter(|id| *id != "arrow")
        .map(str::to_string)
        .collect()
}

/// A solution drawn over the belief it was planned on: path, velocity arrows
/// and reactive ellipses at every node, fields of view every `lag` nodes.
pub fn plan_scene(
    sc: &Scenario,
    belief: &BeliefMap,
    sol: &NlpSolution,
    reactive: &ReactiveSetModel,
    sensor: &SensorParams,
) -> Result<Scene> {
    let mut scene = Scene::new(
        format!("{} {:?} plan, t_f = {:.3} s", sc.name, sol.mode, sol.t_f),
        sc.world,
    );
    scene.obstacles(belief, &sc.true_obstacles);
    let every = sol.lag.max(1);
    for (i, x) in sol.states.iter().enumerate() {
        if i % every == 0 {
            scene.polygon(Role::Fov, &fov_polygon(x, sensor));
        }
    }
    if sol.mode == crate::planner::Mode::Secure {
        for x in &sol.states {
            // Solver tolerance can leave speeds a hair outside the calibrated box.
            let mut x = *x;
            x.linear_speed = x.linear_speed.clamp(0.0, reactive.v_max);
            x.angular_speed = x.angular_speed.clamp(-reactive.omega_max, reactive.omega_max);
            scene.ellipse(&reactive.evaluate(&x)?);
        }
    }
    scene.push(
        Role::Path,
        Shape::Polyline {
            points: sol.states.iter().map(|x| pt(x.position)).collect(),
        },
    );
    for x in &sol.states {
        scene.velocity(x);
    }
    scene.endpoints(sol.states[0].position, sc.goal);
    Ok(scene)
}

/// Snapshot of a run at time `t`: realized path so far, the robot's pose
/// and field of view, detections so far and the belief's known obstacles.
pub fn sim_frame(sc: &Scenario, trace: &SimTrace, t: f64, label: &str) -> Scene {
    let mut scene = Scene::new(format!("{} t = {t:.2} s ({label})", sc.name), sc.world);
    let snap = trace
        .snapshots
        .iter()
        .rev()
        .find(|s| s.t <= t + 1e-9)
        .or(trace.snapshots.first());
    match snap {
        Some(s) => scene.obstacles(&s.belief, &sc.true_obstacles),
        None => {
            for o in &sc.true_obstacles {
                scene.polygon(Role::UnknownObstacle, o);
            }
        }
    }
    let upto: Vec<&crate::simulator::StepRecord> = trace.steps.iter().take_while(|s| s.t <= t + 1e-9).collect();
    let robot = upto.last().map_or(sc.start, |s| s.state);
    scene.polygon(Role::Fov, &fov_polygon(&robot, &sc.sensor));
    let mut path = vec![pt(sc.start.position)];
    path.extend(upto.iter().map(|s| pt(s.state.position)));
    scene.push(Role::Path, Shape::Polyline { points: path });
    for d in trace.detections.iter().filter(|d| d.time <= t + 1e-9) {
        scene.push(
            Role::Detection,
            Shape::Cross {
                at: pt(d.robot_state.position),
                size: 0.08,
            },
        );
    }
    scene.velocity(&robot);
    scene.endpoints(sc.start.position, sc.goal);
    scene.push(
        Role::Robot,
        Shape::Dot {
            at: pt(robot.position),
            radius: 0.04,
        },
    );
    scene
}

/// Start, first detection (if any) and final frames of a run.
pub fn sim_frames(sc: &Scenario, trace: &SimTrace) -> Vec<(String, Scene)> {
    let mut frames = vec![("start".to_string(), sim_frame(sc, trace, 0.0, "start"))];
    if let Some(d) = trace.detections.first() {
        frames.push(("detection".to_string(), sim_frame(sc, trace, d.time, "detection")));
    }
    let end = trace.steps.last().map_or(0.0, |s| s.t);
    frames.push(("final".to_string(), sim_frame(sc, trace, end, "final")));
    frames
}

/// Belief grid as a binary PGM, north up: 0 inside a known obstacle, 255
/// observed free, 128 unobserved.
pub fn belief_pgm(belief: &BeliefMap) -> Vec<u8> {
    let g = &belief.observed_free;
    let mut out = format!("P5\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    for row in (0..g.ny).rev() {
        for col in 0..g.nx {
            let idx = row * g.nx + col;
            let v = if belief.in_known_obstacle(g.center(idx)) {
                0
            } else if g.get(idx) {
                255
            } else {
                128
            };
            out.push(v);
        }
    }
    out
}
