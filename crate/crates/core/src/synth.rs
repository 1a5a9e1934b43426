//! Deterministic synthetic worlds: a curved route split into TMC sections,
//! diurnal section traffic with congestion dips, and GPS trips driven by a
//! simple driver persona.
//!
//! Randomness comes from named ChaCha streams so that, for example, asking
//! for more trips never changes the world or the earlier trips.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drive_cycle::{write_profiles, write_trip_log, GpsSample, TripLog, VelocityProfile};
use crate::route::{GeoPoint, LocalFrame, Route, ShapePoint};
use crate::tmc::{
    locate_sections, map_route_to_tmc, sample_tmc, write_history_file, write_section_table, SectionGeometry,
    TmcHistory, TmcObservation, DEFAULT_LATERAL_THRESHOLD_M,
};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid synthetic parameters: {0}")]
pub struct SynthError(pub String);

const DAY_S: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub seed: u64,
    pub route_length_m: f64,
    pub n_sections: usize,
    pub n_shape_points: usize,
    /// Fractional speed drop at the slowest hour of the day.
    pub diurnal_amplitude: f64,
    /// Hour of day (UTC) with the slowest traffic.
    pub diurnal_phase_h: f64,
    /// Mean congestion events per section per day.
    pub congestion_rate_per_day: f64,
    /// Fractional speed drop at the bottom of a congestion event.
    pub congestion_depth: f64,
    pub congestion_duration_s: f64,
    pub tmc_sample_period_s: f64,
    pub n_days: usize,
    /// Epoch seconds of the first history day (midnight UTC).
    pub start_epoch_s: i64,
    pub spacing_m: f64,
    pub freeflow_speed_mps: f64,
    pub speed_limit_mps: f64,
    /// Heading change between consecutive shape segments, standard deviation.
    pub heading_sigma_deg: f64,
    /// GPS position noise, standard deviation per axis.
    pub gps_noise_m: f64,
    pub origin: GeoPoint,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            seed: 42,
            route_length_m: 5000.0,
            n_sections: 5,
            n_shape_points: 40,
            diurnal_amplitude: 0.3,
            diurnal_phase_h: 17.0,
            congestion_rate_per_day: 2.0,
            congestion_depth: 0.4,
            congestion_duration_s: 1800.0,
            tmc_sample_period_s: 60.0,
            n_days: 7,
            // 2015-03-02T00:00:00Z
            start_epoch_s: 1_425_254_400,
            spacing_m: crate::route::DEFAULT_SPACING_M,
            freeflow_speed_mps: 27.0,
            speed_limit_mps: 29.06,
            heading_sigma_deg: 6.0,
            gps_noise_m: 2.0,
            origin: GeoPoint { lat: 42.30, lon: -83.23 },
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError(m));
        let positive = [
            ("route_length_m", self.route_length_m),
            ("tmc_sample_period_s", self.tmc_sample_period_s),
            ("spacing_m", self.spacing_m),
            ("freeflow_speed_mps", self.freeflow_speed_mps),
            ("speed_limit_mps", self.speed_limit_mps),
            ("congestion_duration_s", self.congestion_duration_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let fractions = [
            ("diurnal_amplitude", self.diurnal_amplitude),
            ("congestion_depth", self.congestion_depth),
        ];
        for (name, v) in fractions {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        for (name, v) in [
            ("congestion_rate_per_day", self.congestion_rate_per_day),
            ("heading_sigma_deg", self.heading_sigma_deg),
            ("gps_noise_m", self.gps_noise_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.n_shape_points < 2 {
            return bad("n_shape_points must be >= 2".into());
        }
        if self.n_sections < 1 || self.n_sections > self.n_shape_points {
            return bad(format!(
                "n_sections must be in 1..={} (n_shape_points), got {}",
                self.n_shape_points, self.n_sections
            ));
        }
        if self.n_days < 1 {
            return bad("n_days must be >= 1".into());
        }
        if self.route_length_m < self.spacing_m {
            return bad("route_length_m must be at least one standard-point spacing".into());
        }
        if self.route_length_m / (self.n_sections as f64) < 2.0 * DEFAULT_LATERAL_THRESHOLD_M {
            return bad("sections too short to resolve".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverPersona {
    /// Multiplier on traffic speed; 1.08 drives 8% above the flow.
    pub speed_ratio: f64,
    /// Slowdown in m/s per unit of `|curvature| * 100 m`.
    pub curvature_sensitivity: f64,
    pub noise_sigma_mps: f64,
    /// First-order lag time constant toward the desired speed.
    pub reaction_lag_s: f64,
}

impl Default for DriverPersona {
    fn default() -> Self {
        Self {
            speed_ratio: 1.08,
            curvature_sensitivity: 2.0,
            noise_sigma_mps: 0.5,
            reaction_lag_s: 2.0,
        }
    }
}

impl DriverPersona {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.speed_ratio > 0.0 && self.speed_ratio.is_finite()) {
            return Err(SynthError(format!("speed_ratio must be > 0, got {}", self.speed_ratio)));
        }
        for (name, v) in [
            ("curvature_sensitivity", self.curvature_sensitivity),
            ("noise_sigma_mps", self.noise_sigma_mps),
            ("reaction_lag_s", self.reaction_lag_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Stream ids; one per independent consumer of randomness.
const STREAM_GEOMETRY: u64 = 1;
const STREAM_SECTIONS: u64 = 2;
const STREAM_TRAFFIC: u64 = 3;
const STREAM_TRIPS: u64 = 1 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
pub struct World {
    pub params: WorldParams,
    /// Standard points carry the codes of the minimum section cover.
    pub route: Route,
    pub sections: Vec<SectionGeometry>,
    /// Section boundaries along the route; section `i` spans
    /// `[bounds[i], bounds[i + 1])`.
    pub section_bounds_m: Vec<f64>,
    pub history: TmcHistory,
}

/// Headings from a Gaussian random walk, segment lengths scaled so the
/// polyline is `route_length_m` long.
fn generate_shape(p: &WorldParams, rng: &mut ChaCha8Rng) -> Result<Vec<[f64; 2]>, SynthError> {
    let sigma = p.heading_sigma_deg.to_radians();
    let turn = Normal::new(0.0, sigma).map_err(|e| SynthError(e.to_string()))?;
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let seg = p.route_length_m / (p.n_shape_points - 1) as f64;
    let mut xy = vec![[0.0, 0.0]];
    for _ in 1..p.n_shape_points {
        let [x, y] = *xy.last().unwrap();
        xy.push([x + seg * heading.sin(), y + seg * heading.cos()]);
        heading += turn.sample(rng);
    }
    Ok(xy)
}

fn build_world_route(p: &WorldParams, xy: &[[f64; 2]], bounds: &[f64], lanes: &[u32]) -> Result<Route, SynthError> {
    let frame = LocalFrame::new(p.origin);
    let mut scale = 1.0;
    let mut route = None;
    // The local frame is not exactly metric on the sphere; rescale until the
    // haversine length matches.
    for _ in 0..4 {
        let seg_arcs: Vec<f64> = xy
            .windows(2)
            .scan(0.0, |s, w| {
                *s += scale * ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
                Some(*s)
            })
            .collect();
        let points: Vec<ShapePoint> = xy
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let arc = if i == 0 { 0.0 } else { seg_arcs[i - 1] };
                let sec = bounds.partition_point(|&b| b <= arc).saturating_sub(1).min(lanes.len() - 1);
                ShapePoint {
                    position: frame.from_xy([v[0] * scale, v[1] * scale]),
                    altitude_m: 200.0 + 10.0 * (arc / 1000.0).sin(),
                    lanes: lanes[sec],
                    speed_limit_mps: p.speed_limit_mps,
                    tmc_code: String::new(),
                }
            })
            .collect();
        let r = Route::build(points, p.spacing_m).map_err(|e| SynthError(e.to_string()))?;
        scale *= p.route_length_m / r.total_length_m();
        route = Some(r);
    }
    Ok(route.unwrap())
}

pub fn section_code(i: usize) -> String {
    format!("106+{:05}", 4000 + i)
}

/// Multiplicative traffic factor in (0, 1] at time `t` (epoch seconds).
fn diurnal_factor(p: &WorldParams, t: i64) -> f64 {
    let hour = t.rem_euclid(DAY_S) as f64 / 3600.0;
    let phase = std::f64::consts::TAU * (hour - p.diurnal_phase_h) / 24.0;
    1.0 - p.diurnal_amplitude * 0.5 * (1.0 + phase.cos())
}

pub fn generate_world(params: &WorldParams) -> Result<World, SynthError> {
    params.validate()?;
    let p = params;
    let xy = generate_shape(p, &mut stream(p.seed, STREAM_GEOMETRY))?;

    // Section boundaries: jittered equal split, each at least 60% of equal.
    let mut rng = stream(p.seed, STREAM_SECTIONS);
    let equal = p.route_length_m / p.n_sections as f64;
    let mut bounds = vec![0.0];
    for i in 1..p.n_sections {
        bounds.push(equal * (i as f64 + rng.random_range(-0.2..0.2)));
    }
    bounds.push(p.route_length_m);
    let lanes: Vec<u32> = (0..p.n_sections).map(|_| rng.random_range(2..=3)).collect();
    let freeflow: Vec<f64> = (0..p.n_sections)
        .map(|_| p.freeflow_speed_mps * rng.random_range(0.95..1.05))
        .collect();

    let route = build_world_route(p, &xy, &bounds, &lanes)?;
    let total = route.total_length_m();
    // Bounds in the final route's arc, which matches the target length to
    // well below a meter.
    let scale = total / p.route_length_m;
    let bounds: Vec<f64> = bounds.iter().map(|b| b * scale).collect();
    let shape_arcs = route.shape_arcs().to_vec();
    let sections: Vec<SectionGeometry> = (0..p.n_sections)
        .map(|i| {
            let (a, b) = (bounds[i], bounds[i + 1]);
            let mut geometry = vec![route.position_at(a)];
            geometry.extend(
                shape_arcs
                    .iter()
                    .filter(|&&s| s > a && s < b)
                    .map(|&s| route.position_at(s)),
            );
            geometry.push(route.position_at(b));
            SectionGeometry {
                code: section_code(i),
                geometry,
            }
        })
        .collect();

    let located = locate_sections(&route, &sections).map_err(|e| SynthError(e.to_string()))?;
    let mapping = map_route_to_tmc(&route, &located, DEFAULT_LATERAL_THRESHOLD_M).map_err(|e| SynthError(e.to_string()))?;
    let mut shape = route.shape_points().to_vec();
    for (sp, &s) in shape.iter_mut().zip(&shape_arcs) {
        let i = bounds.partition_point(|&b| b <= s).clamp(1, p.n_sections) - 1;
        sp.tmc_code = section_code(i);
    }
    let route = Route::build(shape, p.spacing_m)
        .and_then(|r| r.with_tmc_codes(&mapping.point_codes))
        .map_err(|e| SynthError(e.to_string()))?;

    let history = generate_traffic(p, &freeflow)?;
    Ok(World {
        params: p.clone(),
        route,
        sections,
        section_bounds_m: bounds,
        history,
    })
}

fn generate_traffic(p: &WorldParams, freeflow: &[f64]) -> Result<TmcHistory, SynthError> {
    let mut rng = stream(p.seed, STREAM_TRAFFIC);
    let period = p.tmc_sample_period_s.round().max(1.0) as i64;
    let end = p.start_epoch_s + p.n_days as i64 * DAY_S;
    let mut obs = Vec::new();
    for (i, &ff) in freeflow.iter().enumerate() {
        // Congestion events as (start, duration).
        let mut events = Vec::new();
        if p.congestion_rate_per_day > 0.0 && p.congestion_depth > 0.0 {
            let count = Poisson::new(p.congestion_rate_per_day).map_err(|e| SynthError(e.to_string()))?;
            for d in 0..p.n_days as i64 {
                let n = count.sample(&mut rng) as usize;
                for _ in 0..n {
                    let start = p.start_epoch_s + d * DAY_S + rng.random_range(0..DAY_S);
                    let dur = p.congestion_duration_s * rng.random_range(0.5..1.5);
                    events.push((start, dur));
                }
            }
        }
        let code = section_code(i);
        let mut t = p.start_epoch_s;
        while t < end {
            let mut f = diurnal_factor(p, t);
            for &(s, dur) in &events {
                let x = (t - s) as f64 / dur;
                if (0.0..1.0).contains(&x) {
                    f *= 1.0 - p.congestion_depth * (std::f64::consts::PI * x).sin();
                }
            }
            obs.push(TmcObservation {
                code: code.clone(),
                timestamp: t,
                current_speed_mps: (ff * f * 100.0).round() / 100.0,
                freeflow_speed_mps: (ff * 100.0).round() / 100.0,
            });
            t += period;
        }
    }
    Ok(TmcHistory::from_observations(obs))
}

impl World {
    /// Writes `route.csv`, `sections.csv` and one `tmc/<date>.csv` per day.
    pub fn write(&self, dir: &Path) -> crate::Result<()> {
        let tmc_dir = dir.join("tmc");
        std::fs::create_dir_all(&tmc_dir).map_err(|e| crate::Error::io(&tmc_dir, e))?;
        crate::route::write_shape_points(&dir.join("route.csv"), self.route.shape_points())?;
        write_section_table(&dir.join("sections.csv"), &self.sections)?;
        let mut obs: Vec<TmcObservation> = self.history.observations().collect();
        obs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.code.cmp(&b.code)));
        for day in obs.chunk_by(|a, b| a.timestamp.div_euclid(DAY_S) == b.timestamp.div_euclid(DAY_S)) {
            let date = crate::drive_cycle::format_timestamp(day[0].timestamp.div_euclid(DAY_S) * DAY_S);
            let path = tmc_dir.join(format!("{}.csv", &date[..10]));
            write_history_file(&path, day)?;
        }
        Ok(())
    }
}

/// One synthetic trip: the GPS log and the exact profile that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrip {
    pub log: TripLog,
    pub truth: VelocityProfile,
}

const MIN_SPEED_MPS: f64 = 1.0;

/// Drives `count` trips. At every standard point the persona aims for
/// `ratio * TMC(arrival time) - sensitivity * |curvature| * 100 + noise`,
/// approaches it with a first-order lag, and varies speed linearly in arc
/// length between points. GPS samples are taken every second.
pub fn generate_trips(world: &World, persona: &DriverPersona, count: usize, seed: u64) -> Result<Vec<SynthTrip>, SynthError> {
    persona.validate()?;
    let p = &world.params;
    let (first, last) = world
        .history
        .time_span()
        .ok_or_else(|| SynthError("world has no traffic history".into()))?;
    // Leave room for a full TMC lookback window before the start and the
    // drive itself after it.
    let lookback = (crate::experiments::TMC_M_RANGE.1 as f64 * p.tmc_sample_period_s) as i64;
    let drive_time = (3.0 * world.route.total_length_m() / MIN_SPEED_MPS.max(0.2 * p.freeflow_speed_mps)) as i64;
    let lo = first + lookback;
    let hi = last - drive_time;
    if hi <= lo {
        return Err(SynthError("traffic history too short for a trip".into()));
    }
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, STREAM_TRIPS + i as u64);
            let start = rng.random_range(lo..hi);
            drive_trip(world, persona, format!("trip_{i:03}"), start, &mut rng)
        })
        .collect()
}

fn drive_trip(
    world: &World,
    persona: &DriverPersona,
    trip_id: String,
    start: i64,
    rng: &mut ChaCha8Rng,
) -> Result<SynthTrip, SynthError> {
    let route = &world.route;
    let sps = route.standard_points();
    let noise = Normal::new(0.0, persona.noise_sigma_mps).map_err(|e| SynthError(e.to_string()))?;
    let gps = Normal::new(0.0, world.params.gps_noise_m).map_err(|e| SynthError(e.to_string()))?;
    let desired = |i: usize, t: f64, rng: &mut ChaCha8Rng| -> Result<f64, SynthError> {
        let sp = &sps[i];
        let tmc = sample_tmc(&world.history, &sp.tmc_code, start + t.floor() as i64).map_err(|e| SynthError(e.to_string()))?;
        let v = persona.speed_ratio * tmc - persona.curvature_sensitivity * sp.curvature_per_m.abs() * 100.0
            + noise.sample(rng);
        Ok(v.max(MIN_SPEED_MPS))
    };

    // Speeds at standard points and arrival times (seconds after start).
    let mut speeds = vec![desired(0, 0.0, rng)?];
    let mut arrivals = vec![0.0];
    for i in 1..sps.len() {
        let ds = sps[i].arc_position_m - sps[i - 1].arc_position_m;
        let v0 = speeds[i - 1];
        let target = desired(i, arrivals[i - 1] + ds / v0, rng)?;
        let v1 = if persona.reaction_lag_s > 0.0 {
            v0 + (target - v0) * (1.0 - (-(ds / v0) / persona.reaction_lag_s).exp())
        } else {
            target
        };
        let v1 = v1.max(MIN_SPEED_MPS);
        arrivals.push(arrivals[i - 1] + segment_time(ds, v0, v1));
        speeds.push(v1);
    }

    // With speed linear in arc, v(s) = v0 + a (s - s0), the motion inside a
    // segment is s(t) = s0 + v0 (e^{a t} - 1) / a.
    let frame = route.frame();
    let mut samples = Vec::new();
    let end_t = *arrivals.last().unwrap();
    let mut seg = 0;
    let mut k = 0u64;
    loop {
        let t = k as f64;
        if t > end_t {
            break;
        }
        while seg + 2 < sps.len() && arrivals[seg + 1] <= t {
            seg += 1;
        }
        let (s0, s1) = (sps[seg].arc_position_m, sps[seg + 1].arc_position_m);
        let (v0, v1) = (speeds[seg], speeds[seg + 1]);
        let a = (v1 - v0) / (s1 - s0);
        let tau = t - arrivals[seg];
        let (s, v) = if a.abs() < 1e-12 {
            (s0 + v0 * tau, v0)
        } else {
            let e = (a * tau).exp();
            (s0 + v0 * (e - 1.0) / a, v0 * e)
        };
        let s = s.min(s1);
        let xy = frame.to_xy(route.position_at(s));
        let pos = frame.from_xy([xy[0] + gps.sample(rng), xy[1] + gps.sample(rng)]);
        samples.push(GpsSample {
            t_rel_s: t,
            position: pos,
            speed_mps: (v * 1000.0).round() / 1000.0,
            heading_deg: (route.heading_at(s) * 10.0).round() / 10.0,
            altitude_m: (route.altitude_at(s) * 10.0).round() / 10.0,
        });
        k += 1;
    }
    let truth = VelocityProfile {
        trip_id: trip_id.clone(),
        start_time: start,
        start_speed_mps: samples[0].speed_mps,
        speeds_mps: speeds,
    };
    Ok(SynthTrip {
        log: TripLog {
            trip_id,
            start_time: start,
            samples,
        },
        truth,
    })
}

/// Time to cover `ds` with speed linear in arc from `v0` to `v1`.
fn segment_time(ds: f64, v0: f64, v1: f64) -> f64 {
    if (v1 - v0).abs() < 1e-12 * v0 {
        ds / v0
    } else {
        ds * (v1 / v0).ln() / (v1 - v0)
    }
}

/// Writes `trips/<trip_id>.csv` per trip and the ground truth to `truth.csv`.
pub fn write_trips(dir: &Path, trips: &[SynthTrip]) -> crate::Result<()> {
    let trip_dir = dir.join("trips");
    std::fs::create_dir_all(&trip_dir).map_err(|e| crate::Error::io(&trip_dir, e))?;
    for t in trips {
        write_trip_log(&trip_dir.join(format!("{}.csv", t.log.trip_id)), &t.log)?;
    }
    let truth: Vec<VelocityProfile> = trips.iter().map(|t| t.truth.clone()).collect();
    write_profiles(&dir.join("truth.csv"), &truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive_cycle::{extract_velocity_profile, MatchParams};
    use crate::experiments::{baseline_tmc_direct, rmse};

    fn small() -> WorldParams {
        WorldParams {
            route_length_m: 3000.0,
            n_sections: 3,
            n_shape_points: 20,
            n_days: 2,
            ..WorldParams::default()
        }
    }

    #[test]
    fn sections_partition_the_route() {
        let w = generate_world(&small()).unwrap();
        assert!((w.route.total_length_m() - 3000.0).abs() < 0.5, "{}", w.route.total_length_m());
        assert_eq!(w.section_bounds_m.len(), 4);
        assert_eq!(w.section_bounds_m[0], 0.0);
        assert!((w.section_bounds_m[3] - w.route.total_length_m()).abs() < 1e-9);
        assert!(w.section_bounds_m.windows(2).all(|b| b[0] < b[1]));
        let located = locate_sections(&w.route, &w.sections).unwrap();
        for (sec, b) in located.iter().zip(w.section_bounds_m.windows(2)) {
            assert!((sec.start_arc_m - b[0]).abs() < 0.5);
            assert!((sec.end_arc_m - b[1]).abs() < 0.5);
        }
        let codes: Vec<&str> = w.route.standard_points().iter().map(|s| s.tmc_code.as_str()).collect();
        assert_eq!(codes.first(), Some(&"106+04000"));
        assert_eq!(codes.last(), Some(&"106+04002"));
    }

    #[test]
    fn flat_traffic_without_diurnal_or_congestion() {
        let w = generate_world(&WorldParams {
            diurnal_amplitude: 0.0,
            congestion_rate_per_day: 0.0,
            ..small()
        })
        .unwrap();
        for code in w.history.codes() {
            let s = w.history.series(code).unwrap();
            assert!(s.iter().all(|o| o.current_speed_mps == s[0].current_speed_mps));
        }
    }

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let w = generate_world(&small()).unwrap();
            w.write(d.path()).unwrap();
            write_trips(d.path(), &generate_trips(&w, &DriverPersona::default(), 3, 9).unwrap()).unwrap();
        }
        for f in ["route.csv", "sections.csv", "truth.csv", "trips/trip_002.csv", "tmc/2015-03-03.csv"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn more_trips_do_not_change_earlier_ones() {
        let w = generate_world(&small()).unwrap();
        let few = generate_trips(&w, &DriverPersona::default(), 2, 5).unwrap();
        let many = generate_trips(&w, &DriverPersona::default(), 5, 5).unwrap();
        assert_eq!(few[..], many[..2]);
    }

    #[test]
    fn plain_driver_follows_tmc_direct() {
        let w = generate_world(&small()).unwrap();
        let persona = DriverPersona {
            speed_ratio: 1.0,
            curvature_sensitivity: 0.0,
            noise_sigma_mps: 0.0,
            reaction_lag_s: 0.0,
        };
        for t in generate_trips(&w, &persona, 5, 1).unwrap() {
            let base = baseline_tmc_direct(&w.route, &w.history, t.truth.start_time).unwrap();
            // A 3 km drive spans a few TMC samples; the hold error stays small.
            assert!(rmse(&base.speeds_mps, &t.truth.speeds_mps).unwrap() < 1.0);
        }
    }

    #[test]
    fn faster_persona_on_flat_traffic() {
        let w = generate_world(&WorldParams {
            diurnal_amplitude: 0.0,
            congestion_rate_per_day: 0.0,
            freeflow_speed_mps: 20.0,
            ..small()
        })
        .unwrap();
        let persona = DriverPersona {
            speed_ratio: 1.1,
            curvature_sensitivity: 0.0,
            noise_sigma_mps: 0.0,
            reaction_lag_s: 0.0,
        };
        let t = &generate_trips(&w, &persona, 1, 1).unwrap()[0];
        // Per-section free flow varies within 5%.
        assert!(t.truth.speeds_mps.iter().all(|&v| (v - 22.0).abs() < 22.0 * 0.051));
    }

    #[test]
    fn extraction_recovers_truth() {
        let w = generate_world(&small()).unwrap();
        for t in generate_trips(&w, &DriverPersona::default(), 4, 3).unwrap() {
            let p = extract_velocity_profile(&t.log, &w.route, &MatchParams::default()).unwrap();
            let e = rmse(&p.speeds_mps, &t.truth.speeds_mps).unwrap();
            assert!(e < 0.2, "{}: {e}", t.log.trip_id);
            assert_eq!(p.start_speed_mps, t.truth.start_speed_mps);
        }
    }

    #[test]
    fn invalid_params() {
        assert!(generate_world(&WorldParams {
            n_sections: 50,
            n_shape_points: 10,
            ..small()
        })
        .is_err());
        assert!(generate_world(&WorldParams {
            route_length_m: -1.0,
            ..small()
        })
        .is_err());
        let w = generate_world(&small()).unwrap();
        let bad = DriverPersona {
            speed_ratio: 0.0,
            ..DriverPersona::default()
        };
        assert!(generate_trips(&w, &bad, 1, 0).is_err());
    }
}
