//! Triangular field of view, occlusion-aware visibility, detection of
//! obstacles the map omitted, and the belief map built from what was seen.

use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::error::{Error, Result};
use crate::geometry::{point_polygon_distance, segment_crosses_interior, ConvexPolygon, Ellipsoid, Vec2};

/// Boundary sampling step used to find detection witnesses.
pub const DETECTION_SPACING: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorParams {
    /// Length of the two equal sides of the triangle (m).
    pub range: f64,
    /// Half of the apex angle (rad).
    pub half_angle: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            range: 2.0,
            half_angle: std::f64::consts::FRAC_PI_3,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::InvalidParams(format!(
                "sensor range must be positive, got {}",
                self.range
            )));
        }
        if !(self.half_angle > 0.0 && self.half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParams(format!(
                "sensor half angle must lie in (0, pi/2), got {}",
                self.half_angle
            )));
        }
        Ok(())
    }

    /// Field of view in the robot frame: apex at the origin, axis along +x.
    pub fn body_fov(&self) -> ConvexPolygon {
        let (s, c) = self.half_angle.sin_cos();
        ConvexPolygon::from_vertices(&[
            Vec2::zeros(),
            Vec2::new(self.range * c, -self.range * s),
            Vec2::new(self.range * c, self.range * s),
        ])
        .expect("validated sensor parameters give a proper triangle")
    }
}

/// World-frame field of view at state `x`.
pub fn fov_polygon(x: &RobotState, sp: &SensorParams) -> ConvexPolygon {
    sp.body_fov().transformed(x.heading, x.position)
}

/// True iff `p` lies in the field of view and the sight line from the robot
/// does not pass through the interior of any occluder.
pub fn visible(p: Vec2, x: &RobotState, occluders: &[ConvexPolygon], sp: &SensorParams) -> bool {
    if !fov_polygon(x, sp).contains(p) {
        return false;
    }
    line_of_sight(x.position, p, occluders)
}

pub fn line_of_sight(from: Vec2, to: Vec2, occluders: &[ConvexPolygon]) -> bool {
    if (to - from).norm() == 0.0 {
        return true;
    }
    !occluders.iter().any(|o| segment_crosses_interior(from, to, o))
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn size(&self) -> Vec2 {
        self.max - self.min
    }

    pub fn polygon(&self) -> Result<ConvexPolygon> {
        ConvexPolygon::rectangle(self.min, self.max)
    }
}

/// Boolean occupancy grid over a [`Bounds`] rectangle with square cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Vec2,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    cells: Vec<bool>,
}

impl Grid {
    pub fn new(bounds: &Bounds, cell: f64) -> Result<Self> {
        if !(cell > 0.0) {
            return Err(Error::InvalidParams(format!("cell size must be positive, got {cell}")));
        }
        let size = bounds.size();
        if !(size.x > 0.0 && size.y > 0.0) {
            return Err(Error::InvalidParams("world bounds are empty".into()));
        }
        let nx = (size.x / cell).ceil() as usize;
        let ny = (size.y / cell).ceil() as usize;
        Ok(Self {
            origin: bounds.min,
            cell,
            nx,
            ny,
            cells: vec![false; nx * ny],
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, idx: usize) -> bool {
        self.cells[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.cells[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn center(&self, idx: usize) -> Vec2 {
        let ix = idx % self.nx;
        let iy = idx / self.nx;
        self.origin + Vec2::new((ix as f64 + 0.5) * self.cell, (iy as f64 + 0.5) * self.cell)
    }

    pub fn index_of(&self, p: Vec2) -> Option<usize> {
        let q = (p - self.origin) / self.cell;
        if q.x < 0.0 || q.y < 0.0 {
            return None;
        }
        let (ix, iy) = (q.x.floor() as usize, q.y.floor() as usize);
        (ix < self.nx && iy < self.ny).then_some(iy * self.nx + ix)
    }

    /// Indices of cells whose centers fall in the box `[lo, hi]`.
    fn cells_in_box(&self, lo: Vec2, hi: Vec2) -> impl Iterator<Item = usize> + '_ {
        let to_range = |a: f64, b: f64, n: usize| {
            let start = ((a / self.cell) - 0.5).ceil().max(0.0) as usize;
            let end = (((b / self.cell) - 0.5).floor() + 1.0).clamp(0.0, n as f64) as usize;
            start..end.max(start)
        };
        let lo = lo - self.origin;
        let hi = hi - self.origin;
        let xs = to_range(lo.x, hi.x, self.nx);
        let ys = to_range(lo.y, hi.y, self.ny);
        ys.flat_map(move |iy| xs.clone().map(move |ix| iy * self.nx + ix))
    }

    /// Cells whose centers lie in `poly` (cell-center rasterization).
    pub fn cells_in_polygon(&self, poly: &ConvexPolygon) -> Vec<usize> {
        let (lo, hi) = poly.bounds();
        self.cells_in_box(lo, hi)
            .filter(|&i| poly.contains(self.center(i)))
            .collect()
    }

    /// Cells whose centers lie in `e`.
    pub fn cells_in_ellipsoid(&self, e: &Ellipsoid) -> Vec<usize> {
        let (lo, hi) = e.bounds();
        self.cells_in_box(lo, hi)
            .filter(|&i| e.contains(self.center(i)))
            .collect()
    }

    /// Cells whose centers lie within `radius` of `c`.
    pub fn cells_in_disc(&self, c: Vec2, radius: f64) -> Vec<usize> {
        let r = Vec2::repeat(radius);
        self.cells_in_box(c - r, c + r)
            .filter(|&i| (self.center(i) - c).norm() <= radius)
            .collect()
    }

    /// Cells whose squares may overlap `poly` (center within half a diagonal).
    pub fn cells_touching(&self, poly: &ConvexPolygon) -> Vec<usize> {
        let pad = Vec2::repeat(self.cell);
        let (lo, hi) = poly.bounds();
        let reach = self.cell * std::f64::consts::FRAC_1_SQRT_2;
        self.cells_in_box(lo - pad, hi + pad)
            .filter(|&i| point_polygon_distance(self.center(i), poly) <= reach)
            .collect()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }
}

/// The planner's view of the world: map obstacles plus detections, and the
/// region the sensor has actually seen to be free.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    pub bounds: Bounds,
    pub known_obstacles: Vec<ConvexPolygon>,
    pub observed_free: Grid,
}

impl BeliefMap {
    pub fn new(bounds: Bounds, known_obstacles: Vec<ConvexPolygon>, cell: f64) -> Result<Self> {
        Ok(Self {
            bounds,
            known_obstacles,
            observed_free: Grid::new(&bounds, cell)?,
        })
    }

    /// True iff `p` is inside some known obstacle.
    pub fn in_known_obstacle(&self, p: Vec2) -> bool {
        self.known_obstacles.iter().any(|o| o.contains(p))
    }

    /// True iff `o` is already covered by a single known obstacle.
    pub fn knows(&self, o: &ConvexPolygon) -> bool {
        self.known_obstacles
            .iter()
            .any(|k| o.vertices().iter().all(|v| k.depth(*v) >= -1e-9))
    }

    /// Marks every cell in the disc around `center` that has line of sight
    /// to it as observed free. Used to seed the start region.
    pub fn seed_observed_disc(&mut self, center: Vec2, radius: f64, occluders: &[ConvexPolygon]) {
        for idx in self.observed_free.cells_in_disc(center, radius) {
            let c = self.observed_free.center(idx);
            if !self.in_known_obstacle(c) && line_of_sight(center, c, occluders) {
                self.observed_free.set(idx, true);
            }
        }
    }

    /// Cells currently marked observed free.
    pub fn observed_count(&self) -> usize {
        self.observed_free.count()
    }
}

/// An obstacle absent from the belief that became visible.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub time: f64,
    pub obstacle: ConvexPolygon,
    pub robot_state: RobotState,
    /// Visible boundary point that triggered the detection.
    pub witness: Vec2,
}

/// Unknown obstacles (true obstacles not covered by the belief) with at least
/// one boundary sample that is visible and lies outside every known obstacle.
pub fn detect(
    time: f64,
    x: &RobotState,
    true_obstacles: &[ConvexPolygon],
    belief: &BeliefMap,
    sp: &SensorParams,
) -> Vec<DetectionEvent> {
    let fov = fov_polygon(x, sp);
    let mut events = Vec::new();
    for o in true_obstacles {
        if belief.knows(o) {
            continue;
        }
        let (lo, hi) = o.bounds();
        let (flo, fhi) = fov.bounds();
        if hi.x < flo.x || hi.y < flo.y || lo.x > fhi.x || lo.y > fhi.y {
            continue;
        }
        let witness = o.boundary_samples(DETECTION_SPACING).into_iter().find(|p| {
            fov.contains(*p)
                && !belief.known_obstacles.iter().any(|k| k.depth(*p) > 1e-9)
                && line_of_sight(x.position, *p, true_obstacles)
        });
        if let Some(witness) = witness {
            events.push(DetectionEvent {
                time,
                obstacle: o.clone(),
                robot_state: *x,
                witness,
            });
        }
    }
    events
}

/// Cells whose centers are in the field of view at `x` and have an
/// unobstructed sight line, given the occluders.
pub fn visible_cells(grid: &Grid, x: &RobotState, occluders: &[ConvexPolygon], sp: &SensorParams) -> Vec<usize> {
    let fov = fov_polygon(x, sp);
    grid.cells_in_polygon(&fov)
        .into_iter()
        .filter(|&i| line_of_sight(x.position, grid.center(i), occluders))
        .collect()
}

/// Folds one observation into the belief: detected obstacles become known,
/// cells they overlap are cleared, and every visible cell center outside the
/// known obstacles is marked observed free.
pub fn update_belief(
    belief: &mut BeliefMap,
    x: &RobotState,
    events: &[DetectionEvent],
    true_obstacles: &[ConvexPolygon],
    sp: &SensorParams,
) {
    for ev in events {
        if !belief.knows(&ev.obstacle) {
            belief.known_obstacles.push(ev.obstacle.clone());
        }
    }
    for idx in visible_cells(&belief.observed_free, x, true_obstacles, sp) {
        if belief.observed_free.get(idx) {
            continue;
        }
        let c = belief.observed_free.center(idx);
        if belief.in_known_obstacle(c) {
            continue;
        }
        belief.observed_free.set(idx, true);
    }
    for ev in events {
        for idx in belief.observed_free.cells_touching(&ev.obstacle) {
            belief.observed_free.set(idx, false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn open_belief() -> BeliefMap {
        BeliefMap::new(Bounds::new(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0)), vec![], 0.05).unwrap()
    }

    #[test]
    fn fov_triangle_corners() {
        let sp = SensorParams::default();
        let fov = fov_polygon(&RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0), &sp);
        let s3 = 3f64.sqrt();
        let want = [Vec2::zeros(), Vec2::new(1.0, -s3), Vec2::new(1.0, s3)];
        for w in want {
            assert!(fov.vertices().iter().any(|v| (v - w).norm() < 1e-12));
        }
        assert_eq!(fov.faces().len(), 3);
        let area = sp.range * sp.range * sp.half_angle.sin() * sp.half_angle.cos();
        assert!((fov.area() - area).abs() < 1e-9);
    }

    #[test]
    fn fov_rotates_with_heading() {
        let sp = SensorParams::default();
        let a = fov_polygon(&RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0), &sp);
        let b = fov_polygon(&RobotState::new(0.0, 0.0, FRAC_PI_2, 0.0, 0.0), &sp);
        for v in a.vertices() {
            let r = Vec2::new(-v.y, v.x);
            assert!(b.vertices().iter().any(|w| (w - r).norm() < 1e-12));
        }
    }

    #[test]
    fn range_limit_along_axis() {
        let sp = SensorParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let axis_reach = sp.range * sp.half_angle.cos();
        assert!(visible(Vec2::new(axis_reach - 1e-6, 0.0), &x, &[], &sp));
        assert!(!visible(Vec2::new(sp.range + 1e-6, 0.0), &x, &[], &sp));
        assert!(!fov_polygon(&x, &sp).contains(Vec2::new(axis_reach + 1e-6, 0.0)));
    }

    #[test]
    fn visibility_examples() {
        let sp = SensorParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(visible(x.position, &x, &[], &sp));
        let wall = ConvexPolygon::rectangle(Vec2::new(0.4, -0.5), Vec2::new(0.5, 0.5)).unwrap();
        assert!(visible(Vec2::new(0.8, 0.0), &x, &[], &sp));
        assert!(!visible(Vec2::new(0.8, 0.0), &x, &[wall], &sp));
    }

    #[test]
    fn detect_examples() {
        let sp = SensorParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let belief = open_belief();
        assert!(detect(0.0, &x, &[], &belief, &sp).is_empty());

        // unknown box hidden behind a known wall
        let wall = ConvexPolygon::rectangle(Vec2::new(0.3, -0.6), Vec2::new(0.4, 0.6)).unwrap();
        let hidden = ConvexPolygon::rectangle(Vec2::new(0.7, -0.1), Vec2::new(0.8, 0.1)).unwrap();
        let mut belief = open_belief();
        belief.known_obstacles.push(wall.clone());
        let truth = vec![wall.clone(), hidden.clone()];
        assert!(detect(0.0, &x, &truth, &belief, &sp).is_empty());

        // without the wall it is seen
        let truth = vec![hidden.clone()];
        let ev = detect(1.5, &x, &truth, &open_belief(), &sp);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].time, 1.5);
        assert_eq!(ev[0].obstacle, hidden);
    }

    #[test]
    fn single_update_marks_fov_rasterization() {
        let sp = SensorParams::default();
        let x = RobotState::new(0.1, 0.2, 0.3, 0.0, 0.0);
        let mut belief = open_belief();
        update_belief(&mut belief, &x, &[], &[], &sp);
        let mut expected = belief.observed_free.cells_in_polygon(&fov_polygon(&x, &sp));
        expected.sort();
        let got: Vec<usize> = (0..belief.observed_free.len())
            .filter(|&i| belief.observed_free.get(i))
            .collect();
        assert_eq!(got, expected);

        let snapshot = belief.clone();
        update_belief(&mut belief, &x, &[], &[], &sp);
        assert_eq!(belief, snapshot);
    }

    #[test]
    fn detected_obstacle_clears_cells() {
        let sp = SensorParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let mut belief = open_belief();
        belief.seed_observed_disc(Vec2::zeros(), 2.0, &[]);
        let box_ = ConvexPolygon::rectangle(Vec2::new(0.6, -0.1), Vec2::new(0.8, 0.1)).unwrap();
        let events = detect(0.0, &x, std::slice::from_ref(&box_), &belief, &sp);
        assert_eq!(events.len(), 1);
        update_belief(&mut belief, &x, &events, std::slice::from_ref(&box_), &sp);
        assert!(belief.knows(&box_));
        for i in 0..belief.observed_free.len() {
            if belief.observed_free.get(i) {
                assert!(!box_.contains(belief.observed_free.center(i)));
            }
        }
    }
}
