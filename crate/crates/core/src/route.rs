//! Route geometry.
//!
//! A route is the shape-point polyline of one fixed commute, resampled into
//! standard points spaced `spacing_m` apart by arc length. Standard point `i`
//! sits at arc `i * spacing_m`; a terminal point is always emitted at the exact
//! route end, so the last interval may be shorter than the spacing.
//!
//! Distances along the polyline use the haversine formula. Anything needing
//! angles or perpendicular offsets (curvature, projection) works in a local
//! equirectangular plane centred on the route.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_SPACING_M: f64 = 100.0;

/// Relative tolerance used when deciding whether the route length is an exact
/// multiple of the spacing.
const SPACING_REL_TOL: f64 = 1e-6;

/// Turns whose sine is below this are treated as straight.
const COLLINEAR_SINE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("coordinate out of range: lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("shape point {index}: {reason}")]
    InvalidShapePoint { index: usize, reason: String },
    #[error("spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("degenerate route: {0}")]
    DegenerateRoute(String),
    #[error("expected {expected} tmc codes, got {actual}")]
    CodeCountMismatch { expected: usize, actual: usize },
}

/// WGS-84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, RouteError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(RouteError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Local equirectangular projection. Affine in (lat, lon), so straight lines in
/// degree space stay straight in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    /// (east, north) offset from the origin in meters.
    pub fn to_xy(&self, p: GeoPoint) -> [f64; 2] {
        [
            EARTH_RADIUS_M * (p.lon - self.origin.lon).to_radians() * self.cos_lat,
            EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
        ]
    }

    pub fn from_xy(&self, xy: [f64; 2]) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + (xy[1] / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (xy[0] / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
        }
    }
}

/// Map-geometry vertex. Carries the road attributes that hold from this vertex
/// up to the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapePoint {
    pub position: GeoPoint,
    pub altitude_m: f64,
    pub lanes: u32,
    pub speed_limit_mps: f64,
    /// Covering TMC section, if known when the geometry was exported.
    #[serde(default)]
    pub tmc_code: String,
}

impl ShapePoint {
    fn validate(&self, index: usize) -> Result<(), RouteError> {
        GeoPoint::new(self.position.lat, self.position.lon)?;
        let bad = |reason: &str| {
            Err(RouteError::InvalidShapePoint {
                index,
                reason: reason.to_string(),
            })
        };
        if self.lanes < 1 {
            return bad("lanes must be >= 1");
        }
        if !(self.speed_limit_mps > 0.0 && self.speed_limit_mps.is_finite()) {
            return bad("speed limit must be positive");
        }
        if !self.altitude_m.is_finite() {
            return bad("altitude must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardPoint {
    pub index: usize,
    pub position: GeoPoint,
    pub arc_position_m: f64,
    pub dist_to_upstream_shape_m: f64,
    /// Signed, positive for left turns.
    pub curvature_per_m: f64,
    pub altitude_m: f64,
    pub lanes: u32,
    pub speed_limit_mps: f64,
    pub tmc_code: String,
}

impl StandardPoint {
    /// The five geometric inputs in fixed order: distance to upstream shape
    /// point, curvature, altitude, lanes, speed limit.
    pub fn geometric_features(&self) -> [f64; 5] {
        [
            self.dist_to_upstream_shape_m,
            self.curvature_per_m,
            self.altitude_m,
            f64::from(self.lanes),
            self.speed_limit_mps,
        ]
    }
}

/// Result of projecting a point onto the route polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub arc_position_m: f64,
    pub lateral_offset_m: f64,
}

/// Shape-point polyline with precomputed arc lengths and planar coordinates.
#[derive(Debug, Clone)]
struct Polyline {
    arc: Vec<f64>,
    xy: Vec<[f64; 2]>,
    frame: LocalFrame,
}

impl Polyline {
    fn new(points: &[GeoPoint]) -> Self {
        let mean_lat = points.iter().map(|p| p.lat).sum::<f64>() / points.len() as f64;
        let frame = LocalFrame::new(GeoPoint {
            lat: mean_lat,
            lon: points[0].lon,
        });
        let mut arc = Vec::with_capacity(points.len());
        let mut total = 0.0;
        arc.push(0.0);
        for w in points.windows(2) {
            total += haversine_distance(w[0], w[1]);
            arc.push(total);
        }
        Self {
            arc,
            xy: points.iter().map(|&p| frame.to_xy(p)).collect(),
            frame,
        }
    }

    fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Index of the last vertex whose arc position is <= `s`.
    fn upstream_vertex(&self, s: f64) -> usize {
        self.arc.partition_point(|&a| a <= s).saturating_sub(1)
    }

    /// Segment index and fraction along it for arc position `s`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let last_seg = self.arc.len() - 2;
        let j = self.upstream_vertex(s).min(last_seg);
        let len = self.arc[j + 1] - self.arc[j];
        let t = if len > 0.0 {
            ((s - self.arc[j]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (j, t)
    }

    fn project_xy(&self, p: [f64; 2]) -> Projection {
        let mut best = Projection {
            arc_position_m: 0.0,
            lateral_offset_m: f64::INFINITY,
        };
        for j in 0..self.xy.len() - 1 {
            let (t, d) = project_onto_segment(p, self.xy[j], self.xy[j + 1]);
            if d < best.lateral_offset_m {
                best = Projection {
                    arc_position_m: self.arc[j] + t * (self.arc[j + 1] - self.arc[j]),
                    lateral_offset_m: d,
                };
            }
        }
        best
    }

    /// Menger curvature at the interior vertex nearest in arc to `s`.
    fn curvature_near(&self, s: f64) -> f64 {
        let n = self.xy.len();
        if n < 3 {
            return 0.0;
        }
        let v = (1..n - 1)
            .min_by(|&a, &b| {
                (self.arc[a] - s)
                    .abs()
                    .total_cmp(&(self.arc[b] - s).abs())
                    .then(a.cmp(&b))
            })
            .unwrap();
        menger_curvature(self.xy[v - 1], self.xy[v], self.xy[v + 1])
    }
}

/// Parameter `t` in [0, 1] of the closest point on segment ab, and the distance to it.
pub(crate) fn project_onto_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (t, ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
}

/// Signed curvature 1/R of the circle through three planar points.
fn menger_curvature(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let bc = ((c[0] - b[0]).powi(2) + (c[1] - b[1]).powi(2)).sqrt();
    let ac = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2)).sqrt();
    if ab == 0.0 || bc == 0.0 || ac == 0.0 {
        return 0.0;
    }
    let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
    if cross.abs() <= COLLINEAR_SINE_TOL * ab * bc {
        return 0.0;
    }
    2.0 * cross / (ab * bc * ac)
}

/// Signed curvature at `arc_position_m` along the shape-point polyline.
///
/// Uses the Menger curvature of the interior vertex nearest in arc length and
/// its two neighbours; positions near either end fall back to the nearest
/// interior triple. Polylines with fewer than three vertices are straight.
pub fn curvature_at(shape_points: &[ShapePoint], arc_position_m: f64) -> f64 {
    if shape_points.len() < 3 {
        return 0.0;
    }
    let positions: Vec<GeoPoint> = shape_points.iter().map(|s| s.position).collect();
    Polyline::new(&positions).curvature_near(arc_position_m)
}

/// Standard-point arc positions for a polyline of `length` meters.
fn standard_arcs(length: f64, spacing: f64) -> Vec<f64> {
    let tol = SPACING_REL_TOL * spacing;
    let full = ((length + tol) / spacing).floor() as usize;
    let mut arcs: Vec<f64> = (0..=full).map(|i| (i as f64 * spacing).min(length)).collect();
    let last = *arcs.last().unwrap();
    if length - last > tol {
        arcs.push(length);
    } else {
        *arcs.last_mut().unwrap() = length;
    }
    arcs
}

#[derive(Debug, Clone)]
pub struct Route {
    shape_points: Vec<ShapePoint>,
    standard_points: Vec<StandardPoint>,
    spacing_m: f64,
    polyline: Polyline,
}

impl Route {
    /// Resamples `shape_points` into standard points every `spacing_m` meters.
    ///
    /// Lanes, speed limit and TMC code are inherited from the upstream shape
    /// point; altitude is interpolated linearly between the bracketing ones.
    pub fn build(shape_points: Vec<ShapePoint>, spacing_m: f64) -> Result<Self, RouteError> {
        if !(spacing_m > 0.0 && spacing_m.is_finite()) {
            return Err(RouteError::InvalidSpacing(spacing_m));
        }
        for (i, sp) in shape_points.iter().enumerate() {
            sp.validate(i)?;
        }
        let distinct = shape_points
            .windows(2)
            .filter(|w| w[0].position != w[1].position)
            .count();
        if shape_points.len() < 2 || distinct == 0 {
            return Err(RouteError::DegenerateRoute(
                "need at least 2 distinct shape points".into(),
            ));
        }
        let positions: Vec<GeoPoint> = shape_points.iter().map(|s| s.position).collect();
        let polyline = Polyline::new(&positions);
        let length = polyline.length();
        if length <= 0.0 {
            return Err(RouteError::DegenerateRoute("zero total length".into()));
        }
        if length < spacing_m * (1.0 - SPACING_REL_TOL) {
            return Err(RouteError::DegenerateRoute(format!(
                "route length {length:.3} m is shorter than spacing {spacing_m} m"
            )));
        }

        let standard_points = standard_arcs(length, spacing_m)
            .into_iter()
            .enumerate()
            .map(|(index, s)| {
                let (j, t) = polyline.locate(s);
                let up = polyline.upstream_vertex(s);
                let (a, b) = (&shape_points[j], &shape_points[j + 1]);
                let attrs = &shape_points[up];
                StandardPoint {
                    index,
                    position: GeoPoint {
                        lat: a.position.lat + t * (b.position.lat - a.position.lat),
                        lon: a.position.lon + t * (b.position.lon - a.position.lon),
                    },
                    arc_position_m: s,
                    dist_to_upstream_shape_m: (s - polyline.arc[up]).max(0.0),
                    curvature_per_m: polyline.curvature_near(s),
                    altitude_m: a.altitude_m + t * (b.altitude_m - a.altitude_m),
                    lanes: attrs.lanes,
                    speed_limit_mps: attrs.speed_limit_mps,
                    tmc_code: attrs.tmc_code.clone(),
                }
            })
            .collect();

        Ok(Self {
            shape_points,
            standard_points,
            spacing_m,
            polyline,
        })
    }

    pub fn shape_points(&self) -> &[ShapePoint] {
        &self.shape_points
    }

    pub fn standard_points(&self) -> &[StandardPoint] {
        &self.standard_points
    }

    /// Number of standard points, `l + 1`.
    pub fn len(&self) -> usize {
        self.standard_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.standard_points.is_empty()
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn total_length_m(&self) -> f64 {
        self.polyline.length()
    }

    pub fn frame(&self) -> LocalFrame {
        self.polyline.frame
    }

    /// Arc positions of the shape points.
    pub fn shape_arcs(&self) -> &[f64] {
        &self.polyline.arc
    }

    /// Orthogonal projection of `p` onto the nearest polyline segment.
    pub fn project_point(&self, p: GeoPoint) -> Projection {
        self.polyline.project_xy(self.polyline.frame.to_xy(p))
    }

    /// Position on the polyline at arc `s` (clamped to the route).
    pub fn position_at(&self, s: f64) -> GeoPoint {
        let (j, t) = self.polyline.locate(s.clamp(0.0, self.total_length_m()));
        let (a, b) = (self.shape_points[j].position, self.shape_points[j + 1].position);
        GeoPoint {
            lat: a.lat + t * (b.lat - a.lat),
            lon: a.lon + t * (b.lon - a.lon),
        }
    }

    /// Compass heading in degrees (0 = north, clockwise) of the segment at arc `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let (j, _) = self.polyline.locate(s.clamp(0.0, self.total_length_m()));
        let (a, b) = (self.polyline.xy[j], self.polyline.xy[j + 1]);
        (b[0] - a[0]).atan2(b[1] - a[1]).to_degrees().rem_euclid(360.0)
    }

    pub fn altitude_at(&self, s: f64) -> f64 {
        let (j, t) = self.polyline.locate(s.clamp(0.0, self.total_length_m()));
        let (a, b) = (&self.shape_points[j], &self.shape_points[j + 1]);
        a.altitude_m + t * (b.altitude_m - a.altitude_m)
    }

    /// Replaces every standard point's TMC code, e.g. with the output of
    /// [`crate::tmc::map_route_to_tmc`].
    pub fn with_tmc_codes(mut self, codes: &[String]) -> Result<Self, RouteError> {
        if codes.len() != self.standard_points.len() {
            return Err(RouteError::CodeCountMismatch {
                expected: self.standard_points.len(),
                actual: codes.len(),
            });
        }
        for (sp, code) in self.standard_points.iter_mut().zip(codes) {
            sp.tmc_code.clone_from(code);
        }
        Ok(self)
    }
}

/// Free-function form of [`Route::build`].
pub fn build_route(shape_points: Vec<ShapePoint>, spacing_m: f64) -> Result<Route, RouteError> {
    Route::build(shape_points, spacing_m)
}

/// Free-function form of [`Route::project_point`]; returns (arc position, lateral offset).
pub fn project_point(route: &Route, p: GeoPoint) -> (f64, f64) {
    let pr = route.project_point(p);
    (pr.arc_position_m, pr.lateral_offset_m)
}

#[derive(Debug, Serialize, Deserialize)]
struct ShapeRecord {
    lat: f64,
    lon: f64,
    altitude_m: f64,
    lanes: u32,
    speed_limit_mps: f64,
    #[serde(default)]
    tmc_code: String,
}

/// Reads a route geometry file: header row, then
/// `lat,lon,altitude_m,lanes,speed_limit_mps,tmc_code` per shape point.
pub fn read_shape_points(path: &Path) -> crate::Result<Vec<ShapePoint>> {
    let mut rdr = crate::csv_reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<ShapeRecord>() {
        let r = rec.map_err(|e| crate::csv_error(path, e))?;
        let position = GeoPoint::new(r.lat, r.lon).map_err(|e| {
            crate::Error::parse(path, out.len() as u64 + 2, format!("{},{}", r.lat, r.lon), e.to_string())
        })?;
        out.push(ShapePoint {
            position,
            altitude_m: r.altitude_m,
            lanes: r.lanes,
            speed_limit_mps: r.speed_limit_mps,
            tmc_code: r.tmc_code,
        });
    }
    Ok(out)
}

pub fn write_shape_points(path: &Path, points: &[ShapePoint]) -> crate::Result<()> {
    let mut w = crate::csv_writer(path)?;
    for p in points {
        w.serialize(ShapeRecord {
            lat: p.position.lat,
            lon: p.position.lon,
            altitude_m: p.altitude_m,
            lanes: p.lanes,
            speed_limit_mps: p.speed_limit_mps,
            tmc_code: p.tmc_code.clone(),
        })
        .map_err(|e| crate::csv_error(path, e))?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}
