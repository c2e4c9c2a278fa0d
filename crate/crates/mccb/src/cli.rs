//! Batch workflow: ingest -> align -> train -> balance -> reproduce ->
//! evaluate, including the five-way baseline comparison.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::balance::{balance_with_constraints, BalanceResult};
use crate::error::{Error, Result};
use crate::gmm::EmConfig;
use crate::metrics;
use crate::multicoord::{ModelSchema, MultiCoordModel};
use crate::reproduce::{ConstraintSet, Reproducer, WeightTriple};
use crate::trajectory::{load_demonstrations, DemoFormat, DemonstrationSet, Trajectory};

/// Run configuration; every field can be overridden by the flag of the
/// same name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub format: DemoFormat,
    /// Common horizon after alignment; defaults to the medoid's length.
    #[serde(default)]
    pub target_t: Option<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Via points per demo label: time index and target value.
    #[serde(default)]
    pub via_points: std::collections::BTreeMap<String, Vec<(usize, Vec<f64>)>>,
    pub out: PathBuf,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<String>,
}

fn default_k() -> usize {
    5
}

fn default_grid_step() -> f64 {
    0.05
}

fn default_baselines() -> Vec<String> {
    ["cartesian", "tangent", "laplacian", "uniform", "mccb"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 0.5) {
            return Err(Error::Config(format!(
                "grid_step must lie in (0, 0.5], got {}",
                self.grid_step
            )));
        }
        if let Some(t) = self.target_t {
            if t < 3 {
                return Err(Error::Config("target_t must be >= 3".into()));
            }
        }
        let known = ["cartesian", "tangent", "laplacian", "uniform", "mccb"];
        for b in &self.baselines {
            if !known.contains(&b.as_str()) {
                return Err(Error::Config(format!("unknown baseline `{b}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "mccb", about = "Multi-coordinate trajectory learning from demonstration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align demonstrations, fit the three coordinate models, and learn
    /// the cost weights; writes model.json, balance.json, manifest.json.
    Train(ConfigArgs),
    /// Reproduce every demonstration under each baseline weight setting
    /// and tabulate the metrics.
    Compare(ConfigArgs),
    /// Generate a reproduction for novel constraints from trained
    /// artifacts.
    Reproduce(ReproduceArgs),
    /// Metrics between two trajectory CSV files.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON file with the run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// csv-dir or jsonl.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub target_t: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of cartesian,tangent,laplacian,uniform,mccb.
    #[arg(long)]
    pub baselines: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Output directory of a previous `train` run.
    #[arg(long)]
    pub artifacts: PathBuf,
    /// Constraint point `t:v1,v2,...`; repeatable. The first and last
    /// time indices are the usual choices.
    #[arg(long = "point")]
    pub points: Vec<String>,
    /// Identifier used in the output file names.
    #[arg(long, default_value = "novel")]
    pub id: String,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// First trajectory (headerless CSV, one row per time step).
    pub a: PathBuf,
    /// Second trajectory.
    pub b: PathBuf,
    /// Emit a CSV row instead of JSON.
    #[arg(long)]
    pub csv: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config: RunConfig = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                serde_json::from_str(&text)?
            }
            None => RunConfig {
                data: PathBuf::new(),
                format: DemoFormat::CsvDir,
                target_t: None,
                k: default_k(),
                seed: 0,
                grid_step: default_grid_step(),
                via_points: Default::default(),
                out: PathBuf::from("mccb_out"),
                baselines: default_baselines(),
            },
        };
        if let Some(v) = &self.data {
            config.data = v.clone();
        }
        if let Some(v) = &self.format {
            config.format = match v.as_str() {
                "csv-dir" => DemoFormat::CsvDir,
                "jsonl" => DemoFormat::Jsonl,
                other => return Err(Error::Config(format!("unknown format `{other}`"))),
            };
        }
        if let Some(v) = self.target_t {
            config.target_t = Some(v);
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.grid_step {
            config.grid_step = v;
        }
        if let Some(v) = &self.out {
            config.out = v.clone();
        }
        if let Some(v) = &self.baselines {
            config.baselines = v.split(',').map(|s| s.trim().to_string()).collect();
        }
        if config.data.as_os_str().is_empty() {
            return Err(Error::Config("no dataset path given (--data or config file)".into()));
        }
        config.validate()?;
        Ok(config)
    }
}

/// Manifest written next to every run's outputs; enough to re-run the
/// exact experiment.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub reference_index: usize,
    pub target_t: usize,
    pub n_demos: usize,
    pub dims: usize,
    pub version: String,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args.resolve()?),
        Command::Compare(args) => cmd_compare(&args.resolve()?),
        Command::Reproduce(args) => cmd_reproduce(&args),
        Command::Metrics(args) => cmd_metrics(&args),
    }
}

fn load_aligned(config: &RunConfig) -> Result<(DemonstrationSet, usize, usize)> {
    let raw = load_demonstrations(&config.data, config.format)?;
    let reference = raw.medoid_index();
    let target_t = config.target_t.unwrap_or_else(|| raw.demos()[reference].horizon());
    let aligned = raw.dtw_align(reference, target_t)?;
    Ok((aligned, reference, target_t))
}

fn demo_constraints(config: &RunConfig, demos: &DemonstrationSet) -> Result<Vec<ConstraintSet>> {
    demos
        .demos()
        .iter()
        .zip(demos.labels())
        .map(|(demo, label)| {
            let mut cons = ConstraintSet::endpoints(demo);
            if let Some(vias) = config.via_points.get(label) {
                for (t, target) in vias {
                    if *t >= demo.horizon() {
                        return Err(Error::Config(format!(
                            "via point index {t} out of horizon {} for {label}",
                            demo.horizon()
                        )));
                    }
                    cons = cons.with_point(*t, target);
                }
            }
            Ok(cons)
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::new();
    let s = traj.samples();
    for t in 0..s.nrows() {
        let row: Vec<String> = (0..s.ncols()).map(|d| format!("{}", s[(t, d)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn cmd_train(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out).map_err(|e| Error::Io {
        path: config.out.display().to_string(),
        source: e,
    })?;
    let (aligned, reference_index, target_t) = load_aligned(config)?;
    if aligned.len() == 1 {
        eprintln!("warning: single demonstration: balancing degenerate");
    }
    let model = MultiCoordModel::train(&aligned, config.k, config.seed, &EmConfig::default())?;
    let constraints = demo_constraints(config, &aligned)?;
    let result = balance_with_constraints(&model, &aligned, &constraints, config.grid_step)?;
    if result.degenerate_beta {
        eprintln!("warning: all coordinate costs at floor; beta set uniform");
    }

    write_json(&config.out.join("model.json"), &model.to_schema())?;
    write_json(&config.out.join("balance.json"), &result)?;
    write_json(
        &config.out.join("manifest.json"),
        &Manifest {
            config: config.clone(),
            reference_index,
            target_t,
            n_demos: aligned.len(),
            dims: aligned.dims(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;
    println!(
        "trained: K={} T={target_t} N={} alpha=({:.4}, {:.4}, {:.4})",
        config.k,
        aligned.len(),
        result.alpha[0],
        result.alpha[1],
        result.alpha[2]
    );
    Ok(())
}

fn baseline_weights(name: &str, result: &BalanceResult) -> Result<WeightTriple> {
    match name {
        "cartesian" => WeightTriple::new(1.0, 0.0, 0.0),
        "tangent" => WeightTriple::new(0.0, 1.0, 0.0),
        "laplacian" => WeightTriple::new(0.0, 0.0, 1.0),
        "uniform" => WeightTriple::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        "mccb" => Ok(result.weights),
        other => Err(Error::Config(format!("unknown baseline `{other}`"))),
    }
}

pub fn cmd_compare(config: &RunConfig) -> Result<()> {
    let model_schema: ModelSchema = read_json(&config.out.join("model.json"))?;
    let result: BalanceResult = read_json(&config.out.join("balance.json"))?;
    let manifest: Manifest = read_json(&config.out.join("manifest.json"))?;
    let model = MultiCoordModel::from_schema(&model_schema)?;

    let (aligned, _, target_t) = load_aligned(&manifest.config)?;
    if target_t != model.horizon() || aligned.dims() != model.dims() {
        return Err(Error::Config(
            "dataset no longer matches the trained artifacts (horizon or dims changed)".into(),
        ));
    }
    let constraints = demo_constraints(&manifest.config, &aligned)?;
    let rep = Reproducer::new(&model)?;
    let with_sea = aligned.dims() == 2;

    let mut per_demo = String::from(if with_sea {
        "method,demo,sse,dtwd,frechet,sea\n"
    } else {
        "method,demo,sse,dtwd,frechet\n"
    });
    let mut overlays = String::from("demo,method,t,values\n");
    // per method: metric name -> values across demos
    let mut summary_rows: Vec<(String, String, f64, f64)> = Vec::new();

    for name in &config.baselines {
        let weights = baseline_weights(name, &result)?;
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); if with_sea { 4 } else { 3 }];
        for (demo, (label, cons)) in aligned
            .demos()
            .iter()
            .zip(aligned.labels().iter().zip(&constraints))
        {
            match rep.solve(&weights, cons) {
                Ok(solution) => {
                    let report = metrics::report(&solution.trajectory, demo)?;
                    let mut vals = vec![report.sse, report.dtwd, report.frechet];
                    if let Some(sea) = report.sea {
                        vals.push(sea);
                    }
                    let cells: Vec<String> = vals.iter().map(|v| format!("{v}")).collect();
                    per_demo.push_str(&format!("{name},{label},{}\n", cells.join(",")));
                    for (col, v) in columns.iter_mut().zip(&vals) {
                        col.push(*v);
                    }
                    let s = solution.trajectory.samples();
                    for t in 0..s.nrows() {
                        let coords: Vec<String> =
                            (0..s.ncols()).map(|d| format!("{}", s[(t, d)])).collect();
                        overlays.push_str(&format!("{label},{name},{t},{}\n", coords.join(";")));
                    }
                }
                Err(Error::UnderdeterminedReproduction) => {
                    let n_metrics = if with_sea { 4 } else { 3 };
                    per_demo.push_str(&format!(
                        "{name},{label},{}\n",
                        vec!["infeasible"; n_metrics].join(",")
                    ));
                }
                Err(e) => return Err(e),
            }
        }
        let metric_names: &[&str] = if with_sea {
            &["sse", "dtwd", "frechet", "sea"]
        } else {
            &["sse", "dtwd", "frechet"]
        };
        for (metric, vals) in metric_names.iter().zip(&columns) {
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let mut sorted = vals.clone();
            sorted.sort_by(f64::total_cmp);
            let median = if sorted.len() % 2 == 1 {
                sorted[sorted.len() / 2]
            } else {
                0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
            };
            summary_rows.push((name.clone(), metric.to_string(), mean, median));
        }
    }

    let mut summary = String::from("method,metric,mean,median\n");
    for (method, metric, mean, median) in summary_rows {
        summary.push_str(&format!("{method},{metric},{mean},{median}\n"));
    }

    let write = |name: &str, text: &str| -> Result<()> {
        let path = config.out.join(name);
        fs::write(&path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    };
    write("compare_per_demo.csv", &per_demo)?;
    write("compare_summary.csv", &summary)?;
    write("overlays.csv", &overlays)?;
    print!("{summary}");
    Ok(())
}

fn parse_point(spec: &str) -> Result<(usize, Vec<f64>)> {
    let (t, vals) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bad point spec `{spec}`, expected t:v1,v2")))?;
    let t: usize = t
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad time index in `{spec}`")))?;
    let vals: Vec<f64> = vals
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value in `{spec}`")))
        })
        .collect::<Result<_>>()?;
    Ok((t, vals))
}

pub fn cmd_reproduce(args: &ReproduceArgs) -> Result<()> {
    let model_schema: ModelSchema = read_json(&args.artifacts.join("model.json"))?;
    let result: BalanceResult = read_json(&args.artifacts.join("balance.json"))?;
    let model = MultiCoordModel::from_schema(&model_schema)?;
    if args.points.is_empty() {
        return Err(Error::Config("need at least one --point".into()));
    }
    let mut cons = ConstraintSet::new(model.horizon());
    for spec in &args.points {
        let (t, vals) = parse_point(spec)?;
        if vals.len() != model.dims() {
            return Err(Error::Config(format!(
                "point `{spec}` has {} values, model has {} dims",
                vals.len(),
                model.dims()
            )));
        }
        cons = cons.with_point(t, &vals);
    }
    let rep = Reproducer::new(&model)?;
    let solution = rep.solve(&result.weights, &cons)?;

    let csv_path = args.artifacts.join(format!("repro_{}.csv", args.id));
    write_trajectory_csv(&csv_path, &solution.trajectory)?;
    write_json(
        &args.artifacts.join(format!("repro_{}.json", args.id)),
        &serde_json::json!({
            "id": args.id,
            "weights": result.weights,
            "costs": solution.costs,
            "kkt_residual": solution.kkt_residual,
            "constraint_residual": solution.constraint_residual,
        }),
    )?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let a = read_trajectory_csv(&args.a)?;
    let b = read_trajectory_csv(&args.b)?;
    let report = metrics::report(&a, &b)?;
    let mut stdout = std::io::stdout();
    if args.csv {
        let sea = report.sea.map(|v| format!("{v}")).unwrap_or_default();
        writeln!(
            stdout,
            "sse,dtwd,frechet,sea\n{},{},{},{sea}",
            report.sse, report.dtwd, report.frechet
        )
        .ok();
    } else {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?).ok();
    }
    Ok(())
}

// parse a single headerless CSV trajectory file
fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.display().to_string(),
                        line: i + 1,
                        msg: format!("malformed value `{}`", tok.trim()),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Trajectory::from_rows(&rows, 1.0)
}

/// Process exit code for an error, per the documented convention:
/// 2 config/IO, 3 numerical failure, 4 infeasible constraints.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Config(_)
        | Error::Json(_)
        | Error::InvalidArgument(_)
        | Error::InvalidTrajectory(_)
        | Error::InvalidDemonstrationSet(_) => 2,
        Error::DegenerateComponent { .. }
        | Error::SingularBlock(_)
        | Error::DimensionMismatch(_)
        | Error::UnderdeterminedReproduction => 3,
        Error::InfeasibleConstraints(_) | Error::NoFeasibleCandidate => 4,
    }
}
