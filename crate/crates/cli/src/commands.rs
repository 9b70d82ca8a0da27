//! Subcommands.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use frostroute::ingest::{aggregate_by_location, parse_sensor_csv, write_sensor_csv, ColumnMapping, ParseOutcome};
use frostroute::model::{
    evaluate_classifier, evaluate_regressor, load_model, samples_from_rows, save_model, split_dataset, Task,
};
use frostroute::roadgraph::{load_edges_csv, parse_osm_xml, write_edges_csv, SpeedTable};
use frostroute::safety::{assign_edge_conditions, ConditionSource, EdgeConditions, NearestAggregateFeatures};
use frostroute::weather::{
    join_features, load_weather_csv, ProviderConfig, ReqwestTransport, WeatherCache, WeatherSource,
};
use frostroute::{Cell, RoadGraph, SensorRecord, TrainedModel, WeatherDaily};
use serde_json::json;

use crate::config::{require, AppConfig};
use crate::engine::{parse_latlon, Snapshot};

#[derive(Debug, Parser)]
#[command(name = "frostroute", about = "Winter road condition routing", disable_version_flag = true)]
pub struct Cli {
    /// Configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate sensor CSV, print a summary.
    Ingest {
        #[arg(long)]
        sensors: Option<PathBuf>,
        /// Write accepted records as canonical CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-location aggregates as JSON.
        #[arg(long)]
        aggregates: Option<PathBuf>,
    },
    /// Build the road graph from OSM XML and write the edge CSV.
    BuildGraph {
        #[arg(long)]
        osm: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit classifier and regressor, write both models, print evaluation.
    Train {
        /// Serve weather from the cache only.
        #[arg(long)]
        offline: bool,
    },
    /// Evaluate a range of k on the held-out split.
    Evaluate {
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
        k: Vec<usize>,
        #[arg(long)]
        offline: bool,
    },
    /// Estimate a condition for every edge and write them.
    Assign {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        offline: bool,
    },
    /// Plan a route between two points.
    Route {
        #[arg(long, value_parser = parse_latlon, allow_hyphen_values = true)]
        from: (f64, f64),
        #[arg(long, value_parser = parse_latlon, allow_hyphen_values = true)]
        to: (f64, f64),
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Print the version.
    Version,
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> Result<AppConfig> {
    match path {
        Some(p) => AppConfig::load(p),
        None => {
            let cfg = AppConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    if let Command::Version = cli.command {
        writeln!(out, "frostroute {}", env!("CARGO_PKG_VERSION"))?;
        return Ok(0);
    }
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Ingest {
            sensors,
            out: csv_out,
            aggregates,
        } => {
            let path = sensors.or_else(|| cfg.paths.sensor_csv.clone());
            let parsed = read_sensors(&cfg, &path)?;
            let agg = aggregate_by_location(&parsed.records);
            if let Some(p) = csv_out {
                write_sensor_csv(create(&p)?, &parsed.records)?;
            }
            if let Some(p) = aggregates {
                serde_json::to_writer_pretty(create(&p)?, &agg.aggregates)?;
            }
            print_json(
                out,
                &json!({
                    "data_rows": parsed.data_rows(),
                    "parsed": parsed.records.len(),
                    "row_errors": parsed.row_errors.len(),
                    "errors": parsed.row_errors,
                    "locations": agg.aggregates.len(),
                    "coverage": agg.stats,
                }),
            )?;
        }
        Command::BuildGraph { osm, out: csv_out } => {
            let osm = osm.or_else(|| cfg.paths.osm.clone());
            let osm = require(&osm, "osm")?;
            let parse = parse_osm_xml(BufReader::new(open(osm)?), cfg.bbox, &SpeedTable::default())?;
            let target = csv_out.or_else(|| cfg.paths.edges_csv.clone());
            let Some(target) = target else {
                bail!("no output path: pass --out or set paths.edges_csv");
            };
            write_edges_csv(create(&target)?, &parse.graph)?;
            print_json(
                out,
                &json!({
                    "nodes": parse.graph.node_count(),
                    "edges": parse.graph.edge_count(),
                    "skipped_ways": parse.skipped_ways.len(),
                    "warnings": parse.graph.warnings().len(),
                    "output": target,
                }),
            )?;
        }
        Command::Train { offline } => {
            let data = training_data(&cfg, offline)?;
            let classifier = TrainedModel::fit(&data.train, cfg.feature_list.clone(), cfg.k, Task::Classify, cfg.seed)?;
            let regressor = TrainedModel::fit(&data.train, cfg.feature_list.clone(), cfg.k, Task::Regress, cfg.seed)?;
            let c_report = evaluate_classifier(&classifier, &data.test)?;
            let r_report = evaluate_regressor(&regressor, &data.test)?;
            let c_path = output_path(&cfg.paths.classifier_model, "classifier_model")?;
            let r_path = output_path(&cfg.paths.regressor_model, "regressor_model")?;
            save_model(&classifier, create(c_path)?)?;
            save_model(&regressor, create(r_path)?)?;
            print_json(
                out,
                &json!({
                    "rows": data.rows,
                    "unmatched": data.unmatched,
                    "train": data.train.len(),
                    "test": data.test.len(),
                    "classifier": c_report,
                    "regressor": r_report,
                }),
            )?;
        }
        Command::Evaluate { k, offline } => {
            if k.contains(&0) {
                bail!("k must satisfy k ≥ 1");
            }
            let ks: BTreeSet<usize> = k.into_iter().collect();
            let data = training_data(&cfg, offline)?;
            let first = *ks.first().context("no k given")?;
            let c = TrainedModel::fit(&data.train, cfg.feature_list.clone(), first, Task::Classify, cfg.seed)?;
            let r = TrainedModel::fit(&data.train, cfg.feature_list.clone(), first, Task::Regress, cfg.seed)?;
            let mut sweep = Vec::new();
            for k in ks {
                sweep.push(json!({
                    "k": k,
                    "classifier": evaluate_classifier(&c.with_k(k)?, &data.test)?,
                    "regressor": evaluate_regressor(&r.with_k(k)?, &data.test)?,
                }));
            }
            print_json(out, &json!({ "train": data.train.len(), "test": data.test.len(), "sweep": sweep }))?;
        }
        Command::Assign { out: target, offline } => {
            let graph = load_graph(&cfg)?;
            let conditions = compute_conditions(&cfg, &graph, offline)?;
            let target = target.or_else(|| cfg.paths.conditions.clone());
            let Some(target) = target else {
                bail!("no output path: pass --out or set paths.conditions");
            };
            serde_json::to_writer_pretty(create(&target)?, &conditions)?;
            print_json(
                out,
                &json!({
                    "edges": conditions.len(),
                    "measured": conditions.count_by_source(ConditionSource::Measured),
                    "predicted": conditions.count_by_source(ConditionSource::Predicted),
                    "default": conditions.count_by_source(ConditionSource::Default),
                    "output": target,
                }),
            )?;
        }
        Command::Route { from, to, alpha } => {
            let snap = load_snapshot(&cfg)?;
            return Ok(match snap.route(from, to, alpha) {
                Ok(r) => {
                    print_json(out, &r)?;
                    0
                }
                Err(e) => {
                    print_json(out, &e.body())?;
                    1
                }
            });
        }
        Command::Serve { bind, port } => {
            let snap = Arc::new(load_snapshot(&cfg)?);
            let mut server = cfg.server.clone();
            if let Some(b) = bind {
                server.bind = b;
            }
            if let Some(p) = port {
                server.port = p;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(snap, &server, cfg.paths.static_dir.as_deref(), out))?;
        }
        Command::Version => unreachable!("handled above"),
    }
    Ok(0)
}

fn open(p: &Path) -> Result<File> {
    File::open(p).with_context(|| format!("opening {}", p.display()))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
}

fn output_path<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().with_context(|| format!("config key paths.{key} is not set"))
}

fn read_sensors(cfg: &AppConfig, path: &Option<PathBuf>) -> Result<ParseOutcome> {
    let path = require(path, "sensor_csv")?;
    let mapping = match &cfg.paths.column_mapping {
        Some(_) => ColumnMapping::from_json(&std::fs::read_to_string(require(&cfg.paths.column_mapping, "column_mapping")?)?)?,
        None => ColumnMapping::identity(),
    };
    Ok(parse_sensor_csv(open(path)?, &mapping)?)
}

/// Weather for the given records from the CSV or the provider.
fn load_weather(cfg: &AppConfig, records: &[SensorRecord], offline: bool) -> Result<Vec<WeatherDaily>> {
    if let Some(p) = &cfg.paths.weather_csv {
        let _ = require(&cfg.paths.weather_csv, "weather_csv")?;
        return Ok(load_weather_csv(open(p)?)?.entries);
    }
    let Some(_) = &cfg.paths.weather_provider else {
        bail!("feature list needs weather: set paths.weather_csv or paths.weather_provider");
    };
    let provider: ProviderConfig =
        serde_json::from_str(&std::fs::read_to_string(require(&cfg.paths.weather_provider, "weather_provider")?)?)?;
    let cache_dir = output_path(&cfg.paths.cache_dir, "cache_dir")?;
    let cache = WeatherCache::new(cache_dir);
    let source = if offline {
        WeatherSource::offline(provider.id.clone(), cache)
    } else {
        WeatherSource::online(provider, cache, Box::new(ReqwestTransport::new()))
    };
    let wanted: BTreeSet<(Cell, _)> =
        records.iter().map(|r| (r.cell(), r.timestamp.date_naive())).collect();
    let mut out = Vec::new();
    for (cell, date) in wanted {
        match source.fetch_daily_weather(cell, date) {
            Ok(w) => out.push(w),
            Err(e) => eprintln!("warning: weather {cell} {date}: {e}"),
        }
    }
    Ok(out)
}

struct TrainingData {
    rows: usize,
    unmatched: usize,
    train: Vec<frostroute::Sample>,
    test: Vec<frostroute::Sample>,
}

fn training_data(cfg: &AppConfig, offline: bool) -> Result<TrainingData> {
    let parsed = read_sensors(cfg, &cfg.paths.sensor_csv)?;
    let weather = if cfg.feature_list.needs_weather() {
        load_weather(cfg, &parsed.records, offline)?
    } else {
        Vec::new()
    };
    let joined = join_features(&parsed.records, &weather, &cfg.feature_list, cfg.join_radius_m);
    let samples = samples_from_rows(&joined.rows, &cfg.tables()?)?;
    let (train, test) = split_dataset(&samples, cfg.test_fraction, cfg.seed)?;
    Ok(TrainingData {
        rows: samples.len(),
        unmatched: joined.unmatched.len(),
        train,
        test,
    })
}

pub fn load_graph(cfg: &AppConfig) -> Result<RoadGraph> {
    if cfg.paths.edges_csv.as_ref().is_some_and(|p| p.exists()) {
        let p = require(&cfg.paths.edges_csv, "edges_csv")?;
        return Ok(load_edges_csv(open(p)?, &SpeedTable::default())?);
    }
    if cfg.paths.osm.is_some() {
        let p = require(&cfg.paths.osm, "osm")?;
        return Ok(parse_osm_xml(BufReader::new(open(p)?), cfg.bbox, &SpeedTable::default())?.graph);
    }
    bail!("no road network: set paths.edges_csv or paths.osm");
}

fn load_optional_model(path: &Option<PathBuf>, task: Task) -> Result<Option<TrainedModel>> {
    match path {
        Some(p) if p.exists() => {
            let m: TrainedModel = load_model(BufReader::new(open(p)?)).with_context(|| format!("loading {}", p.display()))?;
            if m.task != task {
                bail!("{}: expected a {task:?} model", p.display());
            }
            Ok(Some(m))
        }
        _ => Ok(None),
    }
}

/// Conditions from sensor aggregates and the classifier, or defaults when
/// no sensor data is configured.
pub fn compute_conditions(cfg: &AppConfig, graph: &RoadGraph, offline: bool) -> Result<EdgeConditions<f64>> {
    let tables = cfg.tables()?;
    if cfg.paths.sensor_csv.is_none() {
        return Ok(EdgeConditions::uniform_default(graph, &cfg.conditions));
    }
    let parsed = read_sensors(cfg, &cfg.paths.sensor_csv)?;
    let agg = aggregate_by_location(&parsed.records);
    let classifier = load_optional_model(&cfg.paths.classifier_model, Task::Classify)?;
    let weather = match &classifier {
        Some(m) if m.feature_list.needs_weather() => load_weather(cfg, &parsed.records, offline)?,
        _ => Vec::new(),
    };
    let features = NearestAggregateFeatures {
        aggregates: &agg.aggregates,
        weather: &weather,
        radius_m: cfg.join_radius_m,
        weather_radius_m: cfg.join_radius_m,
    };
    Ok(assign_edge_conditions(
        graph,
        &agg.aggregates,
        classifier.as_ref(),
        &features,
        &tables,
        &cfg.conditions,
        cfg.snap_radius_m,
    )?)
}

/// Graph, conditions and models as configured.
pub fn load_snapshot(cfg: &AppConfig) -> Result<Snapshot> {
    let graph = load_graph(cfg)?;
    let conditions = match &cfg.paths.conditions {
        Some(p) if p.exists() => serde_json::from_reader(BufReader::new(open(p)?))
            .with_context(|| format!("parsing conditions {}", p.display()))?,
        _ => compute_conditions(cfg, &graph, true)?,
    };
    Snapshot::new(
        graph,
        conditions,
        cfg.tables()?,
        load_optional_model(&cfg.paths.classifier_model, Task::Classify)?,
        load_optional_model(&cfg.paths.regressor_model, Task::Regress)?,
        cfg.default_alpha,
        cfg.snap_radius_m,
    )
}
