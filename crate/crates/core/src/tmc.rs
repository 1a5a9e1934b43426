//! TMC section mapping and history extraction.
//!
//! Two stages: [`map_route_to_tmc`] picks the minimum ordered sequence of
//! sections covering every standard point, then [`extract_tmc_history`] pulls
//! every archived observation for those codes into a [`TmcHistory`].

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::route::{project_onto_segment, GeoPoint, Route};

pub const DEFAULT_LATERAL_THRESHOLD_M: f64 = 30.0;
pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 60.0;

const HISTORY_HEADER: [&str; 4] = [
    "tmc_code",
    "timestamp_utc_s",
    "current_speed_mps",
    "freeflow_speed_mps",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TmcError {
    #[error("standard point {index} is farther than {threshold_m} m from every section")]
    UncoveredPoint { index: usize, threshold_m: f64 },
    #[error("no TMC observations for code {code}")]
    NoData { code: String },
    #[error("section {code}: {reason}")]
    InvalidSection { code: String, reason: String },
    #[error("duplicate section code {0}")]
    DuplicateCode(String),
}

/// Section geometry as stored in a section table, before it is located on a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionGeometry {
    pub code: String,
    pub geometry: Vec<GeoPoint>,
}

/// A TMC section located along a route.
#[derive(Debug, Clone, PartialEq)]
pub struct TmcSection {
    pub code: String,
    pub start_arc_m: f64,
    pub end_arc_m: f64,
    pub geometry: Vec<GeoPoint>,
}

/// Locates each section on the route by projecting its vertices; the section's
/// arc span is the range of those projections.
pub fn locate_sections(route: &Route, table: &[SectionGeometry]) -> Result<Vec<TmcSection>, TmcError> {
    let mut seen = HashSet::new();
    table
        .iter()
        .map(|s| {
            if !seen.insert(s.code.as_str()) {
                return Err(TmcError::DuplicateCode(s.code.clone()));
            }
            if s.geometry.is_empty() {
                return Err(TmcError::InvalidSection {
                    code: s.code.clone(),
                    reason: "empty geometry".into(),
                });
            }
            let arcs = s.geometry.iter().map(|&p| route.project_point(p).arc_position_m);
            let (lo, hi) = arcs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                (lo.min(a), hi.max(a))
            });
            if lo >= hi {
                return Err(TmcError::InvalidSection {
                    code: s.code.clone(),
                    reason: format!("zero-length span at arc {lo:.1} m"),
                });
            }
            Ok(TmcSection {
                code: s.code.clone(),
                start_arc_m: lo,
                end_arc_m: hi,
                geometry: s.geometry.clone(),
            })
        })
        .collect()
}

/// Ordered covering sections plus the per-standard-point assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct TmcMapping {
    pub codes: Vec<String>,
    /// One code per standard point.
    pub point_codes: Vec<String>,
}

/// Which standard points lie within `threshold_m` of each section's geometry.
pub(crate) fn coverage_matrix(route: &Route, sections: &[TmcSection], threshold_m: f64) -> Vec<Vec<bool>> {
    let frame = route.frame();
    let sps: Vec<[f64; 2]> = route
        .standard_points()
        .iter()
        .map(|sp| frame.to_xy(sp.position))
        .collect();
    sections
        .iter()
        .map(|sec| {
            let geom: Vec<[f64; 2]> = sec.geometry.iter().map(|&p| frame.to_xy(p)).collect();
            sps.iter()
                .map(|&p| {
                    let d = if geom.len() == 1 {
                        ((p[0] - geom[0][0]).powi(2) + (p[1] - geom[0][1]).powi(2)).sqrt()
                    } else {
                        geom.windows(2)
                            .map(|w| project_onto_segment(p, w[0], w[1]).1)
                            .fold(f64::INFINITY, f64::min)
                    };
                    d <= threshold_m
                })
                .collect()
        })
        .collect()
}

/// Maps the route onto the minimum ordered sequence of covering sections.
///
/// Each section covers the standard points within `threshold_m` of its
/// geometry; every maximal run of covered indices is an interval candidate.
/// Greedy farthest-reach selection over those intervals is optimal for
/// covering a line. A point covered by two chosen sections goes to the one
/// reaching farther ahead.
pub fn map_route_to_tmc(
    route: &Route,
    sections: &[TmcSection],
    threshold_m: f64,
) -> Result<TmcMapping, TmcError> {
    let covered = coverage_matrix(route, sections, threshold_m);
    let n = route.len();

    // (first index, last index, section) for every maximal covered run.
    let mut runs = Vec::new();
    for (s, row) in covered.iter().enumerate() {
        let mut i = 0;
        while i < n {
            if row[i] {
                let start = i;
                while i + 1 < n && row[i + 1] {
                    i += 1;
                }
                runs.push((start, i, s));
            }
            i += 1;
        }
    }

    let mut chosen: Vec<(usize, usize, usize)> = Vec::new();
    let mut next = 0;
    while next < n {
        let best = runs
            .iter()
            .filter(|&&(a, b, _)| a <= next && next <= b)
            .max_by(|x, y| x.1.cmp(&y.1).then(y.2.cmp(&x.2)))
            .copied()
            .ok_or(TmcError::UncoveredPoint {
                index: next,
                threshold_m,
            })?;
        chosen.push(best);
        next = best.1 + 1;
    }

    let mut point_codes = vec![String::new(); n];
    for &(a, b, s) in &chosen {
        for code in &mut point_codes[a..=b] {
            code.clone_from(&sections[s].code);
        }
    }
    Ok(TmcMapping {
        codes: chosen.iter().map(|&(_, _, s)| sections[s].code.clone()).collect(),
        point_codes,
    })
}

/// One archived record.
#[derive(Debug, Clone, PartialEq)]
pub struct TmcObservation {
    pub code: String,
    pub timestamp: i64,
    pub current_speed_mps: f64,
    pub freeflow_speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmcSample {
    pub timestamp: i64,
    pub current_speed_mps: f64,
    pub freeflow_speed_mps: f64,
}

/// Observations grouped by section code, each group strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TmcHistory {
    series: BTreeMap<String, Vec<TmcSample>>,
    sample_period_s: f64,
}

impl Default for TmcHistory {
    fn default() -> Self {
        Self {
            series: BTreeMap::new(),
            sample_period_s: DEFAULT_SAMPLE_PERIOD_S,
        }
    }
}

impl TmcHistory {
    /// Groups, sorts and deduplicates observations. For duplicate
    /// `(code, timestamp)` pairs the one appearing last wins.
    pub fn from_observations(obs: impl IntoIterator<Item = TmcObservation>) -> Self {
        let mut series: BTreeMap<String, Vec<TmcSample>> = BTreeMap::new();
        for o in obs {
            series.entry(o.code).or_default().push(TmcSample {
                timestamp: o.timestamp,
                current_speed_mps: o.current_speed_mps,
                freeflow_speed_mps: o.freeflow_speed_mps,
            });
        }
        for samples in series.values_mut() {
            // Stable, so equal timestamps keep read order and the last one survives.
            samples.sort_by_key(|s| s.timestamp);
            let mut deduped: Vec<TmcSample> = Vec::with_capacity(samples.len());
            for s in samples.drain(..) {
                match deduped.last_mut() {
                    Some(last) if last.timestamp == s.timestamp => *last = s,
                    _ => deduped.push(s),
                }
            }
            *samples = deduped;
        }
        let sample_period_s = median_period(&series).unwrap_or(DEFAULT_SAMPLE_PERIOD_S);
        Self {
            series,
            sample_period_s,
        }
    }

    pub fn series(&self, code: &str) -> Option<&[TmcSample]> {
        self.series.get(code).map(Vec::as_slice)
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    /// Nominal spacing between samples, the median observed gap.
    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Total number of observations.
    pub fn len(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    /// Time range covered by any series.
    pub fn time_span(&self) -> Option<(i64, i64)> {
        let first = self.series.values().filter_map(|s| s.first()).map(|s| s.timestamp).min()?;
        let last = self.series.values().filter_map(|s| s.last()).map(|s| s.timestamp).max()?;
        Some((first, last))
    }

    pub fn observations(&self) -> impl Iterator<Item = TmcObservation> + '_ {
        self.series.iter().flat_map(|(code, samples)| {
            samples.iter().map(move |s| TmcObservation {
                code: code.clone(),
                timestamp: s.timestamp,
                current_speed_mps: s.current_speed_mps,
                freeflow_speed_mps: s.freeflow_speed_mps,
            })
        })
    }
}

fn median_period(series: &BTreeMap<String, Vec<TmcSample>>) -> Option<f64> {
    let mut gaps: Vec<i64> = series
        .values()
        .flat_map(|s| s.windows(2).map(|w| w[1].timestamp - w[0].timestamp))
        .collect();
    if gaps.is_empty() {
        return None;
    }
    let mid = gaps.len() / 2;
    Some(*gaps.select_nth_unstable(mid).1 as f64)
}

/// Zero-order-hold lookup: the latest observation at or before `t`, or the
/// earliest one when `t` precedes the series.
pub fn sample_tmc(history: &TmcHistory, code: &str, t: i64) -> Result<f64, TmcError> {
    let series = history
        .series(code)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| TmcError::NoData { code: code.to_string() })?;
    let i = series.partition_point(|s| s.timestamp <= t);
    Ok(series[i.saturating_sub(1)].current_speed_mps)
}

/// Merged history plus the requested codes the archive had nothing for.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub history: TmcHistory,
    pub missing_codes: Vec<String>,
}

/// Parses one history file, keeping only records whose code passes `keep`.
pub fn parse_history_file(
    path: &Path,
    keep: impl Fn(&str) -> bool,
) -> crate::Result<Vec<TmcObservation>> {
    let mut rdr = crate::csv_reader(path)?;
    let header = rdr.byte_headers().map_err(|e| crate::csv_error(path, e))?;
    let names: Vec<&[u8]> = header.iter().collect();
    if names != HISTORY_HEADER.iter().map(|h| h.as_bytes()).collect::<Vec<_>>() {
        return Err(crate::Error::parse(
            path,
            1,
            String::from_utf8_lossy(&header.as_slice().to_vec()).into_owned(),
            format!("expected header {}", HISTORY_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    let mut rec = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(crate::csv_error(path, e)),
        }
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: &str| {
            let content = rec
                .iter()
                .map(|f| String::from_utf8_lossy(f).into_owned())
                .collect::<Vec<_>>()
                .join(",");
            crate::Error::parse(path, line, content, reason)
        };
        if rec.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let code = std::str::from_utf8(&rec[0]).map_err(|_| bad("code is not UTF-8"))?;
        if code.is_empty() {
            return Err(bad("empty tmc_code"));
        }
        if !keep(code) {
            continue;
        }
        let num = |i: usize| -> Option<&str> { std::str::from_utf8(&rec[i]).ok() };
        let timestamp: i64 = num(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("invalid timestamp_utc_s"))?;
        let current: f64 = num(2)
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| *v >= 0.0 && v.is_finite())
            .ok_or_else(|| bad("current_speed_mps must be a finite number >= 0"))?;
        let freeflow: f64 = num(3)
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| *v > 0.0 && v.is_finite())
            .ok_or_else(|| bad("freeflow_speed_mps must be a finite number > 0"))?;
        out.push(TmcObservation {
            code: code.to_string(),
            timestamp,
            current_speed_mps: current,
            freeflow_speed_mps: freeflow,
        });
    }
    Ok(out)
}

/// Collects all records for `codes` from `archive`. Files are parsed in
/// parallel and merged in the given order, so for duplicate records the
/// one from the later file wins.
pub fn extract_tmc_history(codes: &[String], archive: &[PathBuf]) -> crate::Result<Extraction> {
    let wanted: HashSet<&str> = codes.iter().map(String::as_str).collect();
    let parsed: Vec<Vec<TmcObservation>> = archive
        .par_iter()
        .map(|path| parse_history_file(path, |c| wanted.contains(c)))
        .collect::<crate::Result<_>>()?;
    let history = TmcHistory::from_observations(parsed.into_iter().flatten());
    let mut missing = Vec::new();
    let mut seen = HashSet::new();
    for code in codes {
        if seen.insert(code.as_str()) && history.series(code).is_none() {
            log::warn!("no TMC history for requested code {code}");
            missing.push(code.clone());
        }
    }
    Ok(Extraction {
        history,
        missing_codes: missing,
    })
}

/// History files in `dir` (`*.csv`), sorted by file name.
pub fn list_archive(dir: &Path) -> crate::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| crate::Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn write_history_file<'a>(
    path: &Path,
    obs: impl IntoIterator<Item = &'a TmcObservation>,
) -> crate::Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| crate::Error::io(path, e);
    writeln!(w, "{}", HISTORY_HEADER.join(",")).map_err(io)?;
    for o in obs {
        writeln!(
            w,
            "{},{},{},{}",
            o.code, o.timestamp, o.current_speed_mps, o.freeflow_speed_mps
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionRecord {
    tmc_code: String,
    geometry: String,
}

/// Reads a section table: header `tmc_code,geometry`, geometry as
/// `lat:lon;lat:lon;...`.
pub fn read_section_table(path: &Path) -> crate::Result<Vec<SectionGeometry>> {
    let mut rdr = crate::csv_reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<SectionRecord>().enumerate() {
        let r = rec.map_err(|e| crate::csv_error(path, e))?;
        let line = i as u64 + 2;
        let geometry = r
            .geometry
            .split(';')
            .filter(|v| !v.trim().is_empty())
            .map(|v| {
                let (lat, lon) = v.split_once(':')?;
                let lat = lat.trim().parse().ok()?;
                let lon = lon.trim().parse().ok()?;
                GeoPoint::new(lat, lon).ok()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| crate::Error::parse(path, line, r.geometry.clone(), "invalid lat:lon vertex"))?;
        out.push(SectionGeometry {
            code: r.tmc_code,
            geometry,
        });
    }
    Ok(out)
}

pub fn write_section_table(path: &Path, sections: &[SectionGeometry]) -> crate::Result<()> {
    let mut w = crate::csv_writer(path)?;
    for s in sections {
        let geometry = s
            .geometry
            .iter()
            .map(|p| format!("{}:{}", p.lat, p.lon))
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(SectionRecord {
            tmc_code: s.code.clone(),
            geometry,
        })
        .map_err(|e| crate::csv_error(path, e))?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}
