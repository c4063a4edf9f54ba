//! Exact 2D convex geometry: half-space polygons, ellipsoids, and the margin
//! functions the planner uses as constraints.
//!
//! Ellipsoids are stored as `{center + S z : |z| <= 1}`. Every margin that the
//! optimizer consumes has a companion `*_grad` function returning the partial
//! derivatives with respect to the ellipsoid center and shape matrix, so the
//! chain rule through the reactive-set model stays analytic.

use nalgebra::{Matrix2, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

const VERTEX_TOL: f64 = 1e-9;

/// Counterclockwise rotation by `angle`.
pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Derivative of [`rotation`] with respect to the angle.
pub fn rotation_derivative(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(-s, -c, c, -s)
}

/// Quarter-turn counterclockwise rotation of a vector.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Half-plane `{y : normal . y <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub normal: Vec2,
    pub offset: f64,
}

impl Face {
    /// Signed slack `offset - normal . p`; nonnegative inside.
    #[inline]
    pub fn slack(&self, p: Vec2) -> f64 {
        self.offset - self.normal.dot(&p)
    }
}

/// Bounded convex polygon kept in both vertex (counterclockwise) and
/// half-space form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    faces: Vec<Face>,
}

impl ConvexPolygon {
    /// Builds a polygon from a vertex loop. Clockwise input is reversed,
    /// collinear and duplicate vertices are dropped; nonconvex loops are
    /// rejected.
    pub fn from_vertices(points: &[Vec2]) -> Result<Self> {
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q: &Vec2| (p - q).norm() > VERTEX_TOL) {
                pts.push(*p);
            }
        }
        while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() <= VERTEX_TOL {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 distinct vertices, got {}",
                pts.len()
            )));
        }
        let signed_area = shoelace(&pts);
        if signed_area.abs() < 1e-12 {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        if signed_area < 0.0 {
            pts.reverse();
        }
        let scale = pts.iter().map(|p| p.norm()).fold(1.0, f64::max);
        let mut kept: Vec<Vec2> = Vec::with_capacity(pts.len());
        let n = pts.len();
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let cur = pts[i];
            let next = pts[(i + 1) % n];
            let turn = cross(cur - prev, next - cur);
            if turn < -1e-12 * scale * scale {
                return Err(Error::InvalidPolygon("vertex loop is not convex".into()));
            }
            if turn > 1e-12 * scale * scale {
                kept.push(cur);
            }
        }
        if kept.len() < 3 {
            return Err(Error::InvalidPolygon("degenerate vertex loop".into()));
        }
        // A star-shaped but self-overlapping loop passes the local turn test;
        // total turning must be exactly one revolution.
        let mut winding = 0.0;
        for i in 0..kept.len() {
            let a = kept[(i + 1) % kept.len()] - kept[i];
            let b = kept[(i + 2) % kept.len()] - kept[(i + 1) % kept.len()];
            winding += cross(a, b).atan2(a.dot(&b));
        }
        if (winding - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(Error::InvalidPolygon("vertex loop winds more than once".into()));
        }
        let faces = faces_of(&kept);
        Ok(Self { vertices: kept, faces })
    }

    /// Axis-aligned rectangle `[min.x, max.x] x [min.y, max.y]`.
    pub fn rectangle(min: Vec2, max: Vec2) -> Result<Self> {
        Self::from_vertices(&[min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)])
    }

    /// Rectangle centered at `center` with the given side lengths.
    pub fn centered_box(center: Vec2, width: f64, height: f64) -> Result<Self> {
        let half = Vec2::new(width / 2.0, height / 2.0);
        Self::rectangle(center - half, center + half)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let mut acc = Vec2::zeros();
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = cross(p, q);
            acc += (p + q) * w;
            a2 += w;
        }
        acc / (3.0 * a2)
    }

    /// Minimum face slack of `p`; nonnegative iff `p` is inside.
    pub fn depth(&self, p: Vec2) -> f64 {
        self.faces.iter().map(|f| f.slack(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.depth(p) >= -VERTEX_TOL
    }

    /// Image under the rigid motion `y -> R(angle) y + translation`.
    pub fn transformed(&self, angle: f64, translation: Vec2) -> Self {
        let r = rotation(angle);
        let vertices: Vec<Vec2> = self.vertices.iter().map(|v| r * v + translation).collect();
        let faces = faces_of(&vertices);
        Self { vertices, faces }
    }

    /// Image under a general invertible affine map. Orientation is restored
    /// when the map reflects.
    pub fn mapped(&self, map: &AffineMap2) -> Result<Self> {
        let pts: Vec<Vec2> = self.vertices.iter().map(|v| map.apply(*v)).collect();
        Self::from_vertices(&pts)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Evenly spaced boundary samples with spacing at most `spacing`,
    /// vertices included.
    pub fn boundary_samples(&self, spacing: f64) -> Vec<Vec2> {
        let n = self.vertices.len();
        let mut out = Vec::new();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let steps = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
            for k in 0..steps {
                out.push(a + (b - a) * (k as f64 / steps as f64));
            }
        }
        out
    }
}

fn shoelace(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<f64>() / 2.0
}

fn faces_of(vertices: &[Vec2]) -> Vec<Face> {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let d = b - a;
            let normal = Vec2::new(d.y, -d.x).normalize();
            Face {
                normal,
                offset: normal.dot(&a),
            }
        })
        .collect()
}

impl Serialize for ConvexPolygon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pts: Vec<[f64; 2]> = self.vertices.iter().map(|v| [v.x, v.y]).collect();
        pts.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConvexPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pts: Vec<[f64; 2]> = Vec::deserialize(d)?;
        let pts: Vec<Vec2> = pts.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        ConvexPolygon::from_vertices(&pts).map_err(serde::de::Error::custom)
    }
}

/// Ellipsoid `{center + shape z : |z| <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec2,
    pub shape: Mat2,
}

impl Ellipsoid {
    pub fn new(center: Vec2, shape: Mat2) -> Result<Self> {
        let det = shape.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(Error::DegenerateEllipsoid { det });
        }
        Ok(Self { center, shape })
    }

    pub fn circle(center: Vec2, radius: f64) -> Result<Self> {
        Self::new(center, Mat2::identity() * radius)
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.shape.determinant().abs()
    }

    pub fn boundary_point(&self, angle: f64) -> Vec2 {
        self.center + self.shape * Vec2::new(angle.cos(), angle.sin())
    }

    /// Support function `max_{y in E} dir . y`.
    pub fn support(&self, dir: Vec2) -> f64 {
        dir.dot(&self.center) + (self.shape.transpose() * dir).norm()
    }

    /// Norm of the preimage of `p` in the unit ball; `<= 1` inside.
    pub fn normalized_radius(&self, p: Vec2) -> f64 {
        match self.shape.try_inverse() {
            Some(inv) => (inv * (p - self.center)).norm(),
            None => f64::INFINITY,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.normalized_radius(p) <= 1.0 + 1e-12
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let hx = (self.shape.transpose() * Vec2::x()).norm();
        let hy = (self.shape.transpose() * Vec2::y()).norm();
        let h = Vec2::new(hx, hy);
        (self.center - h, self.center + h)
    }

    /// Semi-axis lengths (singular values of the shape), largest first.
    pub fn semi_axes(&self) -> (f64, f64) {
        let sv = self.shape.singular_values();
        (sv[0].max(sv[1]), sv[0].min(sv[1]))
    }

    /// Shape matrix as a symmetric positive-definite square root of
    /// `shape shape^T`. Both describe the same set.
    pub fn canonical_shape(&self) -> Mat2 {
        let eig = SymmetricEigen::new(self.shape * self.shape.transpose());
        eig.eigenvectors
            * Mat2::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
            * eig.eigenvectors.transpose()
    }
}

/// Affine map `y -> linear y + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap2 {
    pub linear: Mat2,
    pub translation: Vec2,
}

impl AffineMap2 {
    pub fn identity() -> Self {
        Self {
            linear: Mat2::identity(),
            translation: Vec2::zeros(),
        }
    }

    pub fn apply(&self, y: Vec2) -> Vec2 {
        self.linear * y + self.translation
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &AffineMap2) -> AffineMap2 {
        AffineMap2 {
            linear: self.linear * other.linear,
            translation: self.linear * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Result<AffineMap2> {
        let det = self.linear.determinant();
        let inv = self
            .linear
            .try_inverse()
            .filter(|_| det.abs() > 1e-15)
            .ok_or(Error::DegenerateEllipsoid { det })?;
        Ok(AffineMap2 {
            linear: inv,
            translation: -(inv * self.translation),
        })
    }
}

/// The bijection taking `e` onto the closed unit ball.
pub fn unit_ball_map(e: &Ellipsoid) -> Result<AffineMap2> {
    let det = e.shape.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 {
        return Err(Error::DegenerateEllipsoid { det });
    }
    let inv = e.shape.try_inverse().ok_or(Error::DegenerateEllipsoid { det })?;
    Ok(AffineMap2 {
        linear: inv,
        translation: -(inv * e.center),
    })
}

/// A margin value with its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginGrad {
    pub value: f64,
    pub d_center: Vec2,
    /// `d value / d shape[(r, c)]`.
    pub d_shape: Mat2,
}

/// Margin of `e` inside a single half-plane:
/// `offset - normal . center - |shape^T normal|`.
pub fn face_margin(e: &Ellipsoid, face: &Face) -> f64 {
    face.slack(e.center) - (e.shape.transpose() * face.normal).norm()
}

pub fn face_margin_grad(e: &Ellipsoid, face: &Face) -> MarginGrad {
    let stn = e.shape.transpose() * face.normal;
    let len = stn.norm();
    let d_shape = if len > 0.0 {
        -(face.normal * stn.transpose()) / len
    } else {
        Mat2::zeros()
    };
    MarginGrad {
        value: face.slack(e.center) - len,
        d_center: -face.normal,
        d_shape,
    }
}

/// Face margin for a polygon given in a body frame and placed at a rigid
/// pose `(position, heading)`. Returns the margin gradient plus the
/// derivative with respect to `(position.x, position.y, heading)`.
pub fn posed_face_margin_grad(e: &Ellipsoid, body_face: &Face, position: Vec2, heading: f64) -> (MarginGrad, [f64; 3]) {
    let normal = rotation(heading) * body_face.normal;
    let face = Face {
        normal,
        offset: body_face.offset + normal.dot(&position),
    };
    let g = face_margin_grad(e, &face);
    let stn = e.shape.transpose() * normal;
    let len = stn.norm();
    let dn = perp(normal);
    let mut d_heading = dn.dot(&(position - e.center));
    if len > 0.0 {
        d_heading -= (e.shape * stn).dot(&dn) / len;
    }
    (g, [normal.x, normal.y, d_heading])
}

/// Largest support-function inflation of `e` that keeps it inside `p`;
/// nonnegative iff `e` is a subset of `p`.
pub fn ellipsoid_in_polygon_margin(e: &Ellipsoid, p: &ConvexPolygon) -> f64 {
    p.faces()
        .iter()
        .map(|f| face_margin(e, f))
        .fold(f64::INFINITY, f64::min)
}

/// Gradient of [`ellipsoid_in_polygon_margin`], taken from the first
/// minimizing face on ties. Also returns that face index.
pub fn ellipsoid_in_polygon_margin_grad(e: &Ellipsoid, p: &ConvexPolygon) -> (MarginGrad, usize) {
    let mut best = (face_margin_grad(e, &p.faces()[0]), 0);
    for (i, f) in p.faces().iter().enumerate().skip(1) {
        let m = face_margin(e, f);
        if m < best.0.value {
            best = (face_margin_grad(e, f), i);
        }
    }
    best
}

/// Separation between `e` and `o` measured in the frame where `e` is the
/// unit ball: distance from the origin to the mapped polygon minus one.
/// When the ellipsoid center lies inside `o` the value is `-1 - depth`,
/// where `depth` is the mapped distance from the origin to the nearest face.
/// Positive iff the two sets are disjoint.
pub fn ellipsoid_polygon_separation(e: &Ellipsoid, o: &ConvexPolygon) -> f64 {
    ellipsoid_polygon_separation_grad(e, o).value
}

pub fn ellipsoid_polygon_separation_grad(e: &Ellipsoid, o: &ConvexPolygon) -> MarginGrad {
    let Some(inv) = e.shape.try_inverse() else {
        return MarginGrad {
            value: f64::NEG_INFINITY,
            d_center: Vec2::zeros(),
            d_shape: Mat2::zeros(),
        };
    };
    let c = e.center;
    if o.depth(c) >= 0.0 {
        // Penetration: -1 - min_f (b_f - n_f.c) / |S^T n_f|.
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, f) in o.faces().iter().enumerate() {
            let len = (e.shape.transpose() * f.normal).norm();
            let d = f.slack(c) / len;
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, i, len));
            }
        }
        let (depth, i, len) = best.expect("polygon has faces");
        let f = o.faces()[i];
        let slack = f.slack(c);
        let nnts = f.normal * (f.normal.transpose() * e.shape);
        return MarginGrad {
            value: -1.0 - depth,
            d_center: f.normal / len,
            d_shape: nnts * (slack / (len * len * len)),
        };
    }
    let verts = o.vertices();
    let n = verts.len();
    let mapped: Vec<Vec2> = verts.iter().map(|v| inv * (v - c)).collect();
    let mut best_q = mapped[0];
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let a = mapped[i];
        let b = mapped[(i + 1) % n];
        let q = closest_on_segment(Vec2::zeros(), a, b);
        let d = q.norm();
        if d < best_d {
            best_d = d;
            best_q = q;
        }
    }
    let q = best_q;
    let (d_center, d_shape) = if best_d > 0.0 {
        let qhat = q / best_d;
        let w = inv.transpose() * qhat;
        (-w, -(w * q.transpose()))
    } else {
        (Vec2::zeros(), Mat2::zeros())
    };
    MarginGrad {
        value: best_d - 1.0,
        d_center,
        d_shape,
    }
}

fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    a + d * t
}

/// Euclidean distance from `p` to `poly`; zero inside.
pub fn point_polygon_distance(p: Vec2, poly: &ConvexPolygon) -> f64 {
    if poly.depth(p) >= 0.0 {
        return 0.0;
    }
    nearest_boundary_point(p, poly).1
}

fn nearest_boundary_point(p: Vec2, poly: &ConvexPolygon) -> (Vec2, f64) {
    let v = poly.vertices();
    let n = v.len();
    let mut best = (v[0], f64::INFINITY);
    for i in 0..n {
        let q = closest_on_segment(p, v[i], v[(i + 1) % n]);
        let d = (p - q).norm();
        if d < best.1 {
            best = (q, d);
        }
    }
    best
}

/// Signed distance (negative inside, by depth to the nearest face) and its
/// gradient with respect to `p`.
pub fn signed_distance_grad(p: Vec2, poly: &ConvexPolygon) -> (f64, Vec2) {
    let mut best: Option<(f64, Vec2)> = None;
    for f in poly.faces() {
        let s = f.slack(p);
        if best.is_none_or(|(bs, _)| s < bs) {
            best = Some((s, f.normal));
        }
    }
    let (slack, normal) = best.expect("polygon has faces");
    if slack >= 0.0 {
        return (-slack, normal);
    }
    let (q, d) = nearest_boundary_point(p, poly);
    if d > 0.0 {
        (d, (p - q) / d)
    } else {
        (0.0, normal)
    }
}

/// Parameter interval `[t0, t1]` of the segment `a + t (b - a)` that lies in
/// the closed polygon, if any.
fn clip_segment(a: Vec2, b: Vec2, poly: &ConvexPolygon) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for f in poly.faces() {
        let num = f.slack(a);
        let den = f.normal.dot(&d);
        if den.abs() < 1e-15 {
            if num < -VERTEX_TOL {
                return None;
            }
            continue;
        }
        let t = num / den;
        if den > 0.0 {
            t1 = t1.min(t);
        } else {
            t0 = t0.max(t);
        }
        if t0 > t1 + 1e-12 {
            return None;
        }
    }
    Some((t0, t1.max(t0)))
}

/// True iff the closed segment `[a, b]` meets the closed polygon.
pub fn segment_intersects_polygon(a: Vec2, b: Vec2, poly: &ConvexPolygon) -> bool {
    clip_segment(a, b, poly).is_some()
}

/// True iff the segment passes through the polygon's interior (grazing a
/// vertex or sliding along an edge does not count).
pub fn segment_crosses_interior(a: Vec2, b: Vec2, poly: &ConvexPolygon) -> bool {
    match clip_segment(a, b, poly) {
        Some((t0, t1)) if t1 > t0 => {
            let mid = a + (b - a) * (0.5 * (t0 + t1));
            poly.depth(mid) > 1e-9
        }
        _ => false,
    }
}

/// Convex hull by Andrew's monotone chain; counterclockwise, without
/// collinear points. Fewer than three distinct points are returned as is.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() <= 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 1] - hull[hull.len() - 2], p - hull[hull.len() - 1]) <= 1e-15
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area ellipse enclosing `points`, by Khachiyan's barycentric
/// coordinate ascent with Todd-Yildirim away steps. The result is rescaled
/// so that every point is contained exactly.
pub fn minimum_enclosing_ellipsoid(points: &[Vec2], tol: f64) -> Result<Ellipsoid> {
    const MAX_ITER: usize = 10_000;
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len();
    let mean = points.iter().sum::<Vec2>() / n as f64;
    let scale = points.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(Error::DegenerateInput("all points coincide".into()));
    }
    // Work on centered, unit-scaled coordinates for conditioning.
    let pts: Vec<Vec2> = points.iter().map(|p| (p - mean) / scale).collect();
    let cov = pts.iter().fold(Mat2::zeros(), |acc, p| acc + p * p.transpose()) / n as f64;
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.min() <= 1e-12 {
        return Err(Error::DegenerateInput("points are collinear".into()));
    }

    let lifted: Vec<Vector3<f64>> = pts.iter().map(|p| Vector3::new(p.x, p.y, 1.0)).collect();
    let dim = 2.0;
    let mut u = vec![1.0 / n as f64; n];
    let mut m = vec![0.0; n];
    for _ in 0..MAX_ITER {
        let x = lifted
            .iter()
            .zip(&u)
            .fold(nalgebra::Matrix3::zeros(), |acc, (q, &w)| acc + q * q.transpose() * w);
        let Some(xinv) = x.try_inverse() else {
            return Err(Error::DegenerateInput("singular moment matrix".into()));
        };
        for (mi, q) in m.iter_mut().zip(&lifted) {
            *mi = q.dot(&(xinv * q));
        }
        let (j, mj) = m
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        let (k, mk) = m
            .iter()
            .copied()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
        let up = mj / (dim + 1.0) - 1.0;
        let down = 1.0 - mk / (dim + 1.0);
        if up.max(down) <= tol {
            break;
        }
        let (idx, mi) = if up > down { (j, mj) } else { (k, mk) };
        let mut step = (mi - (dim + 1.0)) / ((dim + 1.0) * (mi - 1.0));
        if idx == k && up <= down {
            step = step.max(-u[k] / (1.0 - u[k]));
        }
        for w in u.iter_mut() {
            *w *= 1.0 - step;
        }
        u[idx] += step;
        if u[idx] < 0.0 {
            u[idx] = 0.0;
        }
    }
    let center = pts.iter().zip(&u).fold(Vec2::zeros(), |acc, (p, &w)| acc + p * w);
    let second = pts
        .iter()
        .zip(&u)
        .fold(Mat2::zeros(), |acc, (p, &w)| acc + p * p.transpose() * w);
    let sigma = (second - center * center.transpose()) * dim;
    let eig = SymmetricEigen::new(sigma);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::DegenerateInput("collapsed ellipse".into()));
    }
    let mut shape =
        eig.eigenvectors * Mat2::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let inv = shape
        .try_inverse()
        .ok_or(Error::DegenerateInput("collapsed ellipse".into()))?;
    let worst = pts.iter().map(|p| (inv * (p - center)).norm()).fold(0.0, f64::max);
    if worst > 1.0 {
        shape *= worst;
    }
    Ellipsoid::new(center * scale + mean, shape * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn square(h: f64) -> ConvexPolygon {
        ConvexPolygon::rectangle(Vec2::new(-h, -h), Vec2::new(h, h)).unwrap()
    }

    #[test]
    fn polygon_invariants_hold() {
        // clockwise input with a collinear vertex on the bottom edge
        let p = ConvexPolygon::from_vertices(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.0),
        ])
        .unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert!(p.area() > 0.0);
        for f in p.faces() {
            assert!((f.normal.norm() - 1.0).abs() < 1e-12);
        }
        for v in p.vertices() {
            let on = p.faces().iter().filter(|f| f.slack(*v).abs() < 1e-9).count();
            assert_eq!(on, 2);
            assert!(p.faces().iter().all(|f| f.slack(*v) >= -1e-9));
        }
    }

    #[test]
    fn rejects_nonconvex_and_degenerate() {
        let bowtie = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(ConvexPolygon::from_vertices(&bowtie).is_err());
        let dart = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.3),
            Vec2::new(1.0, 2.0),
        ];
        assert!(ConvexPolygon::from_vertices(&dart).is_err());
        let line = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        assert!(ConvexPolygon::from_vertices(&line).is_err());
        assert!(ConvexPolygon::from_vertices(&line[..2]).is_err());
    }

    #[test]
    fn unit_ball_map_examples() {
        let m = unit_ball_map(&Ellipsoid::circle(Vec2::zeros(), 1.0).unwrap()).unwrap();
        assert_eq!(m, AffineMap2::identity());

        let m = unit_ball_map(&Ellipsoid::circle(Vec2::new(3.0, 0.0), 2.0).unwrap()).unwrap();
        assert!((m.linear - Mat2::from_diagonal(&Vec2::new(0.5, 0.5))).norm() < 1e-15);
        assert!((m.translation - Vec2::new(-1.5, 0.0)).norm() < 1e-15);

        let degenerate = Ellipsoid {
            center: Vec2::zeros(),
            shape: Mat2::new(1.0, 2.0, 2.0, 4.0),
        };
        assert!(matches!(
            unit_ball_map(&degenerate),
            Err(Error::DegenerateEllipsoid { .. })
        ));
        assert!(Ellipsoid::new(Vec2::zeros(), degenerate.shape).is_err());
    }

    #[test]
    fn in_polygon_margin_examples() {
        let unit = Ellipsoid::circle(Vec2::zeros(), 1.0).unwrap();
        assert!((ellipsoid_in_polygon_margin(&unit, &square(2.0)) - 1.0).abs() < 1e-12);
        assert!(ellipsoid_in_polygon_margin(&unit, &square(1.0)).abs() < 1e-12);
    }

    #[test]
    fn separation_examples() {
        let unit = Ellipsoid::circle(Vec2::zeros(), 1.0).unwrap();
        let far = ConvexPolygon::rectangle(Vec2::new(3.0, -1.0), Vec2::new(5.0, 1.0)).unwrap();
        assert!((ellipsoid_polygon_separation(&unit, &far) - 2.0).abs() < 1e-12);
        assert!(ellipsoid_polygon_separation(&unit, &square(0.5)) <= -1.0);
        assert!(ellipsoid_polygon_separation(&unit, &square(3.0)) <= -1.0);
    }

    #[test]
    fn point_distance_examples() {
        let right = ConvexPolygon::rectangle(Vec2::new(1.0, -1.0), Vec2::new(2.0, 1.0)).unwrap();
        assert!((point_polygon_distance(Vec2::zeros(), &right) - 1.0).abs() < 1e-15);
        assert_eq!(point_polygon_distance(Vec2::zeros(), &square(1.0)), 0.0);
        let (d, g) = signed_distance_grad(Vec2::new(0.5, 0.0), &square(1.0));
        assert!((d + 0.5).abs() < 1e-15);
        assert!((g - Vec2::x()).norm() < 1e-15);
    }

    #[test]
    fn segment_examples() {
        let s = square(1.0);
        assert!(segment_intersects_polygon(
            Vec2::new(-3.0, 0.0),
            Vec2::new(3.0, 0.0),
            &s
        ));
        assert!(!segment_intersects_polygon(
            Vec2::new(-3.0, 2.0),
            Vec2::new(3.0, 2.5),
            &s
        ));
        assert!(segment_intersects_polygon(
            Vec2::new(-3.0, 1.0),
            Vec2::new(3.0, 1.0),
            &s
        ));
        assert!(!segment_crosses_interior(Vec2::new(-3.0, 1.0), Vec2::new(3.0, 1.0), &s));
        assert!(segment_crosses_interior(Vec2::new(-3.0, 0.0), Vec2::new(0.0, 0.0), &s));
        assert!(!segment_crosses_interior(
            Vec2::new(-3.0, 0.0),
            Vec2::new(-1.0, 0.0),
            &s
        ));
    }

    #[test]
    fn mvee_of_square_corners_is_circumcircle() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let e = minimum_enclosing_ellipsoid(&pts, 1e-6).unwrap();
        assert!((e.center - Vec2::new(0.5, 0.5)).norm() < 1e-6);
        let (a, b) = e.semi_axes();
        assert!((a - FRAC_1_SQRT_2).abs() < 1e-6 && (b - FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn mvee_of_circle_points_is_the_circle() {
        let c = Vec2::new(1.0, -2.0);
        let pts: Vec<Vec2> = (0..24)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 24.0;
                c + Vec2::new(1.5 * t.cos(), 1.5 * t.sin())
            })
            .collect();
        let e = minimum_enclosing_ellipsoid(&pts, 1e-6).unwrap();
        assert!((e.center - c).norm() < 1e-5);
        let (a, b) = e.semi_axes();
        assert!((a - 1.5).abs() < 1e-5 && (b - 1.5).abs() < 1e-5);
    }

    #[test]
    fn mvee_rejects_collinear() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)];
        assert!(matches!(
            minimum_enclosing_ellipsoid(&pts, 1e-6),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn hull_drops_interior_points() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.5, 0.5),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.5, 0.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(shoelace(&h) > 0.0);
    }

    #[test]
    fn affine_inverse_roundtrip() {
        let m = AffineMap2 {
            linear: Mat2::new(2.0, 0.3, -0.7, 1.1),
            translation: Vec2::new(0.4, -3.0),
        };
        let id = m.compose(&m.inverse().unwrap());
        assert!((id.linear - Mat2::identity()).amax() < 1e-9);
        assert!(id.translation.amax() < 1e-9);
    }
}
