//! One function per subcommand. Each returns the `--json` summary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};
use speedprof::drive_cycle::{extract_velocity_profile, parse_timestamp, parse_trip_log, write_profiles, MatchParams};
use speedprof::experiments::{baseline_tmc_direct, run_sweep, train_on_dataset, PROFILES_FILE, SUMMARY_FILE};
use speedprof::features::{Dataset, TripContext};
use speedprof::nn::TrainedModel;
use speedprof::route::{read_shape_points, Route};
use speedprof::synth::{generate_trips, generate_world, write_trips};
use speedprof::tmc::{
    extract_tmc_history, list_archive, locate_sections, map_route_to_tmc, read_section_table, write_history_file,
    TmcHistory, TmcMapping, DEFAULT_LATERAL_THRESHOLD_M,
};
use speedprof::VelocityProfile;

use crate::config::RunConfig;
use crate::guard::OutputGuard;
use crate::{ConfigArgs, Failure};

/// Name under which `synth-world` and `sweep` store the effective config.
pub const CONFIG_FILE: &str = "config.json";

#[derive(Args, Debug)]
pub struct SynthWorldArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory; receives route.csv, sections.csv, tmc/, trips/,
    /// truth.csv and a config.json pointing at them.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtractTmcArgs {
    /// Route shape-point csv.
    #[arg(long, value_name = "FILE")]
    pub route: PathBuf,
    /// TMC section table csv.
    #[arg(long, value_name = "FILE")]
    pub sections: PathBuf,
    /// Directory of daily history csv files.
    #[arg(long, value_name = "DIR")]
    pub archive: PathBuf,
    /// History csv restricted to the sections covering the route.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the per-standard-point section assignment here.
    #[arg(long, value_name = "FILE")]
    pub mapping_out: Option<PathBuf>,
    /// Standard-point spacing in meters.
    #[arg(long, default_value_t = speedprof::route::DEFAULT_SPACING_M, value_name = "M")]
    pub spacing_m: f64,
    /// Largest distance from a section's geometry at which it covers a point.
    #[arg(long, default_value_t = DEFAULT_LATERAL_THRESHOLD_M, value_name = "M")]
    pub threshold_m: f64,
}

#[derive(Args, Debug)]
pub struct BuildDatasetArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset csv; the normalizer sidecar goes to `<FILE>.json` and the
    /// extracted velocity profiles to `<FILE>.profiles.csv`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset written by build-dataset (its `.json` sidecar must sit next to it).
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// Where to write the trained model JSON.
    #[arg(long, value_name = "FILE")]
    pub model_out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Supplies the route, sections and TMC archive the prediction reads.
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Model JSON written by train.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Trip start, RFC 3339 (2015-03-02T07:45:00Z) or epoch seconds.
    #[arg(long, value_name = "T")]
    pub trip_start: String,
    /// Speed at departure in m/s; defaults to the TMC speed of the first
    /// point at the start time.
    #[arg(long, value_name = "MPS")]
    pub start_speed: Option<f64>,
    /// Predicted profile csv.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Report directory; defaults to the config's `paths.output_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report directory written by sweep.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Also render one SVG per trip into `<DIR>/plots/`.
    #[arg(long)]
    pub plots: bool,
}

fn load_config(a: &ConfigArgs) -> Result<RunConfig, Failure> {
    RunConfig::load(a.config.as_deref(), &a.overrides)
}

/// Route with standard points labelled by the minimum section cover.
fn mapped_route(route: &Path, sections: &Path, spacing_m: f64, threshold_m: f64) -> Result<(Route, TmcMapping), Failure> {
    let route = Route::build(read_shape_points(route)?, spacing_m)?;
    let table = read_section_table(sections)?;
    let located = locate_sections(&route, &table)?;
    let mapping = map_route_to_tmc(&route, &located, threshold_m)?;
    let route = route.with_tmc_codes(&mapping.point_codes)?;
    log::info!(
        "route: {} standard points over {:.0} m, {} covering sections",
        route.len(),
        route.total_length_m(),
        mapping.codes.len()
    );
    Ok((route, mapping))
}

fn history_for(archive: &Path, codes: &[String]) -> Result<TmcHistory, Failure> {
    let files = list_archive(archive)?;
    let ex = extract_tmc_history(codes, &files)?;
    log::info!("TMC history: {} records from {} files", ex.history.len(), files.len());
    Ok(ex.history)
}

fn route_and_history(cfg: &RunConfig) -> Result<(Route, TmcHistory), Failure> {
    for p in [&cfg.paths.route, &cfg.paths.sections, &cfg.paths.tmc_archive] {
        Failure::require(p)?;
    }
    let (route, mapping) = mapped_route(&cfg.paths.route, &cfg.paths.sections, cfg.spacing_m, cfg.lateral_threshold_m)?;
    let history = history_for(&cfg.paths.tmc_archive, &mapping.codes)?;
    Ok((route, history))
}

/// Profiles of every trip log that matches the route; rejected trips are logged.
fn trip_profiles(dir: &Path, route: &Route, params: &MatchParams) -> Result<Vec<VelocityProfile>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Failure::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "csv") {
            files.push(p);
        }
    }
    files.sort();
    let mut out = Vec::new();
    for f in &files {
        let log = parse_trip_log(f)?;
        match extract_velocity_profile(&log, route, params) {
            Ok(p) => out.push(p),
            Err(e) => log::warn!("skipping {}: {e}", f.display()),
        }
    }
    log::info!("{} of {} trips matched the route", out.len(), files.len());
    if out.is_empty() {
        return Err(Failure {
            class: "drive_cycle.no_trips".into(),
            message: format!("no trip in {} matched the route", dir.display()),
            code: 1,
        });
    }
    Ok(out)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn synth_world(a: &SynthWorldArgs) -> Result<Value, Failure> {
    let cfg = load_config(&a.cfg)?;
    let mut params = cfg.world.clone();
    params.spacing_m = cfg.spacing_m;
    let world = generate_world(&params)?;
    let trips = generate_trips(&world, &cfg.persona, cfg.n_trips, cfg.seed)?;

    let mut g = OutputGuard::new();
    g.dir(&a.out)?;
    for d in ["tmc", "trips"] {
        g.dir(&a.out.join(d))?;
    }
    for f in ["route.csv", "sections.csv", "truth.csv", CONFIG_FILE] {
        g.file(&a.out.join(f))?;
    }
    world.write(&a.out)?;
    write_trips(&a.out, &trips)?;

    // The written config reproduces this run and points at its outputs.
    let mut saved = cfg.clone();
    saved.world = params;
    saved.paths = Default::default();
    let text = serde_json::to_string_pretty(&saved).expect("config serializes") + "\n";
    let path = a.out.join(CONFIG_FILE);
    std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
    g.commit();

    log::info!("wrote world with {} standard points and {} trips to {}", world.route.len(), trips.len(), a.out.display());
    Ok(json!({
        "command": "synth-world",
        "out": path_str(&a.out),
        "config": path_str(&path),
        "standard_points": world.route.len(),
        "sections": world.sections.len(),
        "tmc_records": world.history.len(),
        "trips": trips.len(),
    }))
}

pub fn extract_tmc(a: &ExtractTmcArgs) -> Result<Value, Failure> {
    if !(a.spacing_m > 0.0 && a.spacing_m.is_finite()) || !(a.threshold_m > 0.0 && a.threshold_m.is_finite()) {
        return Err(Failure::usage("--spacing-m and --threshold-m must be positive"));
    }
    for p in [&a.route, &a.sections, &a.archive] {
        Failure::require(p)?;
    }
    let (route, mapping) = mapped_route(&a.route, &a.sections, a.spacing_m, a.threshold_m)?;
    let files = list_archive(&a.archive)?;
    let ex = extract_tmc_history(&mapping.codes, &files)?;

    let mut g = OutputGuard::new();
    g.file(&a.out)?;
    let obs: Vec<_> = ex.history.observations().collect();
    write_history_file(&a.out, &obs)?;
    if let Some(m) = &a.mapping_out {
        g.file(m)?;
        write_mapping(m, &route)?;
    }
    g.commit();
    Ok(json!({
        "command": "extract-tmc",
        "out": path_str(&a.out),
        "standard_points": route.len(),
        "codes": mapping.codes,
        "records": obs.len(),
        "missing_codes": ex.missing_codes,
    }))
}

fn write_mapping(path: &Path, route: &Route) -> Result<(), Failure> {
    let io = |e| Failure::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "sp_index,arc_position_m,tmc_code").map_err(io)?;
    for sp in route.standard_points() {
        writeln!(w, "{},{},{}", sp.index, sp.arc_position_m, sp.tmc_code).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `<out>.profiles.csv`, next to the dataset.
pub fn profiles_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".profiles.csv");
    PathBuf::from(s)
}

pub fn build_dataset(a: &BuildDatasetArgs) -> Result<Value, Failure> {
    let cfg = load_config(&a.cfg)?;
    Failure::require(&cfg.paths.trips)?;
    let (route, history) = route_and_history(&cfg)?;
    let profiles = trip_profiles(&cfg.paths.trips, &route, &cfg.matching)?;
    let data = Dataset::build(&route, &history, &profiles, &cfg.features)?;

    let mut g = OutputGuard::new();
    let side = Dataset::sidecar_path(&a.out);
    let prof = profiles_path(&a.out);
    for p in [&a.out, &side, &prof] {
        g.file(p)?;
    }
    data.write(&a.out)?;
    write_profiles(&prof, &profiles)?;
    g.commit();
    Ok(json!({
        "command": "build-dataset",
        "out": path_str(&a.out),
        "sidecar": path_str(&side),
        "profiles": path_str(&prof),
        "trips": profiles.len(),
        "rows": data.rows.len(),
        "input_dimension": cfg.features.input_dimension(),
    }))
}

pub fn train(a: &TrainArgs) -> Result<Value, Failure> {
    let cfg = load_config(&a.cfg)?;
    Failure::require(&a.dataset)?;
    let data = Dataset::read(&a.dataset)?;
    if data.config != cfg.features {
        log::warn!("dataset was built with {:?}; training on it instead of the configured features", data.config);
    }
    log::info!("training {} on {} rows", cfg.architecture.label(), data.rows.len());
    let model = train_on_dataset(&data, &cfg.architecture, &cfg.train, cfg.seed)?;

    let mut g = OutputGuard::new();
    g.file(&a.model_out)?;
    model.save(&a.model_out)?;
    g.commit();
    Ok(json!({
        "command": "train",
        "model": path_str(&a.model_out),
        "arch": cfg.architecture.label(),
        "rows": data.rows.len(),
        "input_dimension": data.config.input_dimension(),
    }))
}

pub fn predict(a: &PredictArgs) -> Result<Value, Failure> {
    let start = parse_timestamp(&a.trip_start)
        .ok_or_else(|| Failure::usage(format!("--trip-start {:?} is neither RFC 3339 nor epoch seconds", a.trip_start)))?;
    if let Some(v) = a.start_speed {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Failure::usage(format!("--start-speed must be >= 0, got {v}")));
        }
    }
    let cfg = load_config(&a.cfg)?;
    Failure::require(&a.model)?;
    let model = TrainedModel::load(&a.model)?;
    let (route, history) = route_and_history(&cfg)?;
    let start_speed = match a.start_speed {
        Some(v) => v,
        None => baseline_tmc_direct(&route, &history, start)?.speeds_mps[0],
    };
    let ctx = TripContext {
        start_time: start,
        start_speed_mps: start_speed,
    };
    let speeds = model.predict_profile(&route, &history, &ctx)?;

    let mut g = OutputGuard::new();
    g.file(&a.out)?;
    let io = |e| Failure::io(&a.out, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(&a.out).map_err(io)?);
    writeln!(w, "sp_index,arc_position_m,lat,lon,tmc_code,predicted_mps").map_err(io)?;
    for (sp, v) in route.standard_points().iter().zip(&speeds) {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            sp.index, sp.arc_position_m, sp.position.lat, sp.position.lon, sp.tmc_code, v
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    g.commit();
    Ok(json!({
        "command": "predict",
        "out": path_str(&a.out),
        "trip_start": start,
        "start_speed_mps": start_speed,
        "standard_points": speeds.len(),
    }))
}

pub fn sweep(a: &SweepArgs) -> Result<Value, Failure> {
    if a.workers == Some(0) {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    let cfg = load_config(&a.cfg)?;
    Failure::require(&cfg.paths.trips)?;
    let (route, history) = route_and_history(&cfg)?;
    let profiles = trip_profiles(&cfg.paths.trips, &route, &cfg.matching)?;
    let settings = cfg.sweep_settings(a.workers.unwrap_or(0));
    let report = run_sweep(&cfg.grid, &profiles, &route, &history, &settings)?;

    let out = a.out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
    let mut g = OutputGuard::new();
    g.dir(&out)?;
    for f in [
        speedprof::experiments::REPORT_FILE,
        SUMMARY_FILE,
        speedprof::experiments::TRIP_RMSE_FILE,
        PROFILES_FILE,
        CONFIG_FILE,
    ] {
        g.file(&out.join(f))?;
    }
    report.write(&out)?;
    let path = out.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
    g.commit();

    let failed = report.summary.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        log::warn!("{failed} configs failed and are unranked");
    }
    Ok(json!({
        "command": "sweep",
        "out": path_str(&out),
        "trips": profiles.len(),
        "summary_rows": report.summary.len(),
        "failed": failed,
        "best_config": report.best_config,
    }))
}

#[derive(Debug, serde::Deserialize)]
struct SummaryRecord {
    rank: String,
    config_id: String,
    n: String,
    k: String,
    m: String,
    r: String,
    arch: String,
    mean_rmse_mps: String,
    pooled_rmse_mps: String,
    trips: String,
    status: String,
}

#[derive(Debug, serde::Deserialize)]
pub struct ProfileRecord {
    pub config_id: String,
    pub trip_id: String,
    pub sp_index: usize,
    pub actual_mps: f64,
    pub predicted_mps: f64,
    pub tmc_direct_mps: f64,
    pub average_speed_mps: f64,
    pub posted_speed_mps: f64,
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| Failure {
            class: "parse.invalid_record".into(),
            message: format!("{}: {e}", path.display()),
            code: 1,
        })
}

pub const SUMMARY_TABLE_FILE: &str = "summary.md";
pub const PLOTS_DIR: &str = "plots";

pub fn report(a: &ReportArgs) -> Result<Value, Failure> {
    let summary_path = a.input.join(SUMMARY_FILE);
    let rows: Vec<SummaryRecord> = read_csv(&summary_path)?;
    let profiles: Vec<ProfileRecord> = if a.plots {
        read_csv(&a.input.join(PROFILES_FILE))?
    } else {
        Vec::new()
    };

    let header = ["rank", "config", "n", "k", "m", "r", "arch", "mean RMSE (m/s)", "pooled RMSE (m/s)", "trips", "status"];
    let table: Vec<[String; 11]> = rows
        .iter()
        .map(|r| {
            [
                r.rank.clone(),
                r.config_id.clone(),
                r.n.clone(),
                r.k.clone(),
                r.m.clone(),
                r.r.clone(),
                r.arch.clone(),
                r.mean_rmse_mps.clone(),
                r.pooled_rmse_mps.clone(),
                r.trips.clone(),
                r.status.clone(),
            ]
        })
        .collect();
    let mut md = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for row in &table {
        md.push_str(&format!("| {} |\n", row.join(" | ").replace('\n', " ")));
    }

    let mut g = OutputGuard::new();
    let table_path = g.file(&a.input.join(SUMMARY_TABLE_FILE))?;
    std::fs::write(&table_path, &md).map_err(|e| Failure::io(&table_path, e))?;

    let mut plots = Vec::new();
    if a.plots {
        let dir = a.input.join(PLOTS_DIR);
        g.dir(&dir)?;
        for chunk in profiles.chunk_by(|x, y| x.trip_id == y.trip_id && x.config_id == y.config_id) {
            let path = dir.join(format!("{}.svg", chunk[0].trip_id));
            g.file(&path)?;
            std::fs::write(&path, crate::svg::profile_chart(chunk)).map_err(|e| Failure::io(&path, e))?;
            plots.push(path_str(&path));
        }
    }
    g.commit();
    log::info!("{} summary rows, {} plots", rows.len(), plots.len());
    Ok(json!({
        "command": "report",
        "table": path_str(&table_path),
        "rows": rows.len(),
        "plots": plots,
    }))
}
