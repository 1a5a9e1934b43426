//! GPS trip logs, route matching and velocity-profile extraction.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::route::{GeoPoint, Route};

const META_HEADER: [&str; 2] = ["trip_id", "start_datetime_iso8601"];
const SAMPLE_HEADER: [&str; 6] = ["t_rel_s", "lat", "lon", "speed_mps", "heading_deg", "altitude_m"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveCycleError {
    #[error("trip {trip_id} does not match the route: {reason}")]
    UnmatchedTrip { trip_id: String, reason: String },
    #[error("trip {trip_id}: {reason}")]
    InvalidTrip { trip_id: String, reason: String },
    #[error("profile {trip_id} has {actual} points, route has {expected}")]
    LengthMismatch {
        trip_id: String,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsSample {
    pub t_rel_s: f64,
    pub position: GeoPoint,
    pub speed_mps: f64,
    pub heading_deg: f64,
    pub altitude_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripLog {
    pub trip_id: String,
    /// Trip start, seconds since the Unix epoch (UTC).
    pub start_time: i64,
    pub samples: Vec<GpsSample>,
}

impl TripLog {
    pub fn validate(&self) -> Result<(), DriveCycleError> {
        let bad = |reason: String| {
            Err(DriveCycleError::InvalidTrip {
                trip_id: self.trip_id.clone(),
                reason,
            })
        };
        if self.samples.is_empty() {
            return bad("no samples".into());
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1].t_rel_s <= w[0].t_rel_s {
                return bad(format!("t_rel_s not strictly increasing at sample {}", i + 1));
            }
        }
        if let Some(i) = self.samples.iter().position(|s| !(s.speed_mps >= 0.0)) {
            return bad(format!("negative speed at sample {i}"));
        }
        Ok(())
    }

    /// Logger speed at the first sample, known when the trip starts.
    pub fn start_speed_mps(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.speed_mps)
    }
}

/// Driver speed at every standard point of a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub trip_id: String,
    pub start_time: i64,
    /// Vehicle speed when the trip starts; pads the driver-history window
    /// before the first standard point.
    pub start_speed_mps: f64,
    pub speeds_mps: Vec<f64>,
}

pub fn format_timestamp(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

/// Accepts RFC 3339 / ISO 8601 date-times or plain epoch seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

/// Parses a trip log:
///
/// ```text
/// trip_id,start_datetime_iso8601
/// trip_000,2015-03-02T07:45:00Z
/// t_rel_s,lat,lon,speed_mps,heading_deg,altitude_m
/// 0,42.28,-83.74,27.1,95.0,251.2
/// ...
/// ```
pub fn parse_trip_log(path: &Path) -> crate::Result<TripLog> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    parse_trip_log_str(&text, path)
}

pub fn parse_trip_log_str(text: &str, path: &Path) -> crate::Result<TripLog> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l.trim()));
    let err = |line: u64, content: &str, reason: &str| crate::Error::parse(path, line, content, reason);
    fn fields(l: &str) -> Vec<&str> {
        l.split(',').map(str::trim).collect()
    }

    let (n, l) = lines.next().ok_or_else(|| err(1, "", "empty file"))?;
    if fields(l) != META_HEADER {
        return Err(err(n, l, "expected header trip_id,start_datetime_iso8601"));
    }
    let (n, l) = lines.next().ok_or_else(|| err(n + 1, "", "missing trip metadata"))?;
    let meta = fields(l);
    if meta.len() != 2 || meta[0].is_empty() {
        return Err(err(n, l, "expected trip_id,start_datetime_iso8601"));
    }
    let start_time = parse_timestamp(meta[1]).ok_or_else(|| err(n, l, "invalid start datetime"))?;
    let trip_id = meta[0].to_string();
    let (n, l) = lines.next().ok_or_else(|| err(n + 1, "", "missing sample header"))?;
    if fields(l) != SAMPLE_HEADER {
        return Err(err(n, l, "expected header t_rel_s,lat,lon,speed_mps,heading_deg,altitude_m"));
    }

    let mut samples: Vec<GpsSample> = Vec::new();
    let mut last_line = n;
    for (n, l) in lines.filter(|(_, l)| !l.is_empty()) {
        last_line = n;
        let f = fields(l);
        if f.len() != 6 {
            return Err(err(n, l, "expected 6 fields"));
        }
        let v: Vec<f64> = f
            .iter()
            .map(|x| x.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| err(n, l, "non-numeric field"))?;
        let position = GeoPoint::new(v[1], v[2]).map_err(|e| err(n, l, &e.to_string()))?;
        if v[3] < 0.0 {
            return Err(err(n, l, "negative speed"));
        }
        if let Some(prev) = samples.last() {
            if v[0] <= prev.t_rel_s {
                return Err(err(n, l, "NonMonotonicTime: t_rel_s must be strictly increasing"));
            }
        }
        samples.push(GpsSample {
            t_rel_s: v[0],
            position,
            speed_mps: v[3],
            heading_deg: v[4],
            altitude_m: v[5],
        });
    }
    if samples.is_empty() {
        return Err(err(last_line + 1, "", "trip has no samples"));
    }
    Ok(TripLog {
        trip_id,
        start_time,
        samples,
    })
}

pub fn write_trip_log(path: &Path, trip: &TripLog) -> crate::Result<()> {
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| crate::Error::io(path, e);
    writeln!(w, "{}", META_HEADER.join(",")).map_err(io)?;
    writeln!(w, "{},{}", trip.trip_id, format_timestamp(trip.start_time)).map_err(io)?;
    writeln!(w, "{}", SAMPLE_HEADER.join(",")).map_err(io)?;
    for s in &trip.samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.t_rel_s, s.position.lat, s.position.lon, s.speed_mps, s.heading_deg, s.altitude_m
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// Largest lateral offset at which a sample counts as on the route.
    pub max_offset_m: f64,
    /// Fraction of standard points that need a nearby sample.
    pub min_coverage: f64,
    /// Backward jumps up to this size are treated as jitter and clamped.
    pub jitter_tolerance_m: f64,
    /// Reject when more than this fraction of on-route samples jump backwards.
    pub max_backtrack_fraction: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            max_offset_m: 50.0,
            min_coverage: 0.95,
            jitter_tolerance_m: 10.0,
            max_backtrack_fraction: 0.2,
        }
    }
}

/// An on-route sample in route coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedSample {
    pub t_rel_s: f64,
    pub arc_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Accept,
    RejectCoverage,
    RejectBacktracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripMatch {
    pub verdict: Verdict,
    /// Fraction of standard points with a matched sample nearby.
    pub coverage: f64,
    /// On-route samples with monotone arc positions, in time order.
    pub matched: Vec<MatchedSample>,
    pub off_route: usize,
    pub backtracks: usize,
}

impl TripMatch {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }
}

/// Decides whether `trip` drove `route`.
///
/// Samples farther than `max_offset_m` from the polyline are dropped. Of the
/// rest, samples jumping back by more than the jitter tolerance are outliers;
/// smaller backward jumps are clamped so matched arcs never decrease. A
/// standard point is covered when some matched sample lies within
/// `max_offset_m` of it along the route.
pub fn match_trip_to_route(trip: &TripLog, route: &Route, params: &MatchParams) -> TripMatch {
    let mut matched: Vec<MatchedSample> = Vec::with_capacity(trip.samples.len());
    let mut off_route = 0;
    let mut backtracks = 0;
    let mut running_max = f64::NEG_INFINITY;
    for s in &trip.samples {
        let pr = route.project_point(s.position);
        if pr.lateral_offset_m > params.max_offset_m {
            off_route += 1;
            continue;
        }
        if pr.arc_position_m < running_max - params.jitter_tolerance_m {
            backtracks += 1;
            continue;
        }
        running_max = running_max.max(pr.arc_position_m);
        matched.push(MatchedSample {
            t_rel_s: s.t_rel_s,
            arc_m: running_max,
            speed_mps: s.speed_mps,
        });
    }

    let sps = route.standard_points();
    let covered = sps
        .iter()
        .filter(|sp| {
            let s = sp.arc_position_m;
            let i = matched.partition_point(|m| m.arc_m < s);
            let near = |j: usize| matched.get(j).is_some_and(|m| (m.arc_m - s).abs() <= params.max_offset_m);
            near(i) || (i > 0 && near(i - 1))
        })
        .count();
    let coverage = covered as f64 / sps.len() as f64;
    let on_route = matched.len() + backtracks;
    let verdict = if coverage < params.min_coverage {
        Verdict::RejectCoverage
    } else if on_route > 0 && backtracks as f64 > params.max_backtrack_fraction * on_route as f64 {
        Verdict::RejectBacktracking
    } else {
        Verdict::Accept
    };
    TripMatch {
        verdict,
        coverage,
        matched,
        off_route,
        backtracks,
    }
}

/// Reduces a matched trip to one speed per standard point.
///
/// Each point takes the logger speed interpolated linearly (in arc length)
/// between the two bracketing samples when both lie within two standard-point
/// spacings; otherwise the nearest sample within that window. Points with no
/// sample in the window are filled by linear interpolation across the gap, and
/// leading or trailing gaps copy the nearest valid value.
pub fn extract_velocity_profile(
    trip: &TripLog,
    route: &Route,
    params: &MatchParams,
) -> Result<VelocityProfile, DriveCycleError> {
    let m = match_trip_to_route(trip, route, params);
    if !m.accepted() {
        return Err(DriveCycleError::UnmatchedTrip {
            trip_id: trip.trip_id.clone(),
            reason: format!(
                "{:?} (coverage {:.3}, {} off-route, {} backtracking samples)",
                m.verdict, m.coverage, m.off_route, m.backtracks
            ),
        });
    }
    let speeds = profile_from_matched(&m.matched, route)
        .ok_or_else(|| DriveCycleError::UnmatchedTrip {
            trip_id: trip.trip_id.clone(),
            reason: "no sample near any standard point".into(),
        })?;
    Ok(VelocityProfile {
        trip_id: trip.trip_id.clone(),
        start_time: trip.start_time,
        start_speed_mps: trip.start_speed_mps(),
        speeds_mps: speeds,
    })
}

fn profile_from_matched(matched: &[MatchedSample], route: &Route) -> Option<Vec<f64>> {
    let window = 2.0 * route.spacing_m();
    let raw: Vec<Option<f64>> = route
        .standard_points()
        .iter()
        .map(|sp| {
            let s = sp.arc_position_m;
            let hi = matched.partition_point(|m| m.arc_m < s);
            let lo = matched.partition_point(|m| m.arc_m <= s);
            // below: last sample with arc <= s; above: first sample with arc >= s.
            let below = lo.checked_sub(1).map(|j| &matched[j]);
            let above = matched.get(hi);
            match (below, above) {
                (Some(b), Some(a)) if s - b.arc_m <= window && a.arc_m - s <= window => {
                    let span = a.arc_m - b.arc_m;
                    if span > 0.0 {
                        let t = (s - b.arc_m) / span;
                        Some(b.speed_mps + t * (a.speed_mps - b.speed_mps))
                    } else {
                        Some(b.speed_mps)
                    }
                }
                (b, a) => [b, a]
                    .into_iter()
                    .flatten()
                    .map(|m| ((m.arc_m - s).abs(), m.speed_mps))
                    .filter(|&(d, _)| d <= window)
                    .min_by(|x, y| x.0.total_cmp(&y.0))
                    .map(|(_, v)| v),
            }
        })
        .collect();
    fill_gaps(&raw)
}

/// Linear interpolation across interior gaps, nearest-value copy at the ends.
fn fill_gaps(raw: &[Option<f64>]) -> Option<Vec<f64>> {
    let valid: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].is_some()).collect();
    let (&first, &last) = (valid.first()?, valid.last()?);
    let mut out = vec![0.0; raw.len()];
    for (i, o) in out.iter_mut().enumerate() {
        *o = match raw[i] {
            Some(v) => v,
            None if i < first => raw[first].unwrap(),
            None if i > last => raw[last].unwrap(),
            None => {
                let k = valid.partition_point(|&j| j < i);
                let (a, b) = (valid[k - 1], valid[k]);
                let (va, vb) = (raw[a].unwrap(), raw[b].unwrap());
                va + (vb - va) * (i - a) as f64 / (b - a) as f64
            }
        };
    }
    Some(out)
}

/// Writes profiles as `trip_id,start_datetime_iso8601,start_speed_mps,sp_index,speed_mps`.
pub fn write_profiles(path: &Path, profiles: &[VelocityProfile]) -> crate::Result<()> {
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| crate::Error::io(path, e);
    writeln!(w, "trip_id,start_datetime_iso8601,start_speed_mps,sp_index,speed_mps").map_err(io)?;
    for p in profiles {
        let start = format_timestamp(p.start_time);
        for (i, v) in p.speeds_mps.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", p.trip_id, start, p.start_speed_mps, i, v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_profiles(path: &Path) -> crate::Result<Vec<VelocityProfile>> {
    #[derive(Deserialize)]
    struct Row {
        trip_id: String,
        start_datetime_iso8601: String,
        start_speed_mps: f64,
        sp_index: usize,
        speed_mps: f64,
    }
    let mut rdr = crate::csv_reader(path)?;
    let mut out: Vec<VelocityProfile> = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let r = rec.map_err(|e| crate::csv_error(path, e))?;
        let line = i as u64 + 2;
        let start_time = parse_timestamp(&r.start_datetime_iso8601)
            .ok_or_else(|| crate::Error::parse(path, line, r.start_datetime_iso8601.clone(), "invalid datetime"))?;
        if out.last().is_none_or(|p| p.trip_id != r.trip_id) {
            out.push(VelocityProfile {
                trip_id: r.trip_id,
                start_time,
                start_speed_mps: r.start_speed_mps,
                speeds_mps: Vec::new(),
            });
        }
        let p = out.last_mut().unwrap();
        if r.sp_index != p.speeds_mps.len() {
            return Err(crate::Error::parse(path, line, r.sp_index.to_string(), "sp_index out of sequence"));
        }
        p.speeds_mps.push(r.speed_mps);
    }
    Ok(out)
}
