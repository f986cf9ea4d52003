//! Command-line front end. `main.rs` only forwards to [`run`].

mod config;

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{clt_prediction_2d, NoiseModel, DEFAULT_ETA};
use crate::error::{Result, UrnError};
use crate::finance::{run_allocation_batch, PerformanceModel};
use crate::meanfield::{
    equilibria_2d, equilibria_general, interval_star, scan_alpha, AlphaGrid, GeneralOptions,
    MeanFieldModel, Stability,
};
use crate::montecarlo::{
    atomic_write, classify_endpoints, clt_check, git_describe, run_batch, write_batch_dir,
    write_endpoints_csv, BatchSpec, BatchSummary,
};
use crate::polya::{dirichlet_limit_check, trap_exclusion, TrapQuery};
use crate::urn::{RecordingPolicy, RuleKind};

pub use config::{ExperimentConfig, ModelKind, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Default max-norm radius for endpoint labels.
const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Parser, Debug)]
#[command(name = "urnlab", version = git_version(), about = "Skewed generalised Pólya urns: simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn git_version() -> &'static str {
    concat!(
        env!("CARGO_PKG_VERSION"),
        " (",
        env!("URNLAB_GIT_DESCRIBE"),
        ")"
    )
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo batch of urn trajectories.
    Simulate(Inputs),
    /// Zeros of the mean field and their stability.
    Equilibria(Inputs),
    /// Equilibrium count of `f(y) = y^α` over an α grid.
    Scan(Inputs),
    /// Fluctuation prediction at each attractive root, optionally checked
    /// against a batch.
    Clt(Inputs),
    /// Dirichlet limit and trap exclusion for the identity model.
    Polya(Inputs),
    /// Adaptive allocation runs.
    Finance(Inputs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Equilibria(_) => "equilibria",
            Command::Scan(_) => "scan",
            Command::Clt(_) => "clt",
            Command::Polya(_) => "polya",
            Command::Finance(_) => "finance",
        }
    }

    fn inputs(&self) -> &Inputs {
        match self {
            Command::Simulate(i)
            | Command::Equilibria(i)
            | Command::Scan(i)
            | Command::Clt(i)
            | Command::Polya(i)
            | Command::Finance(i) => i,
        }
    }
}

/// Flags override the matching keys of `--config`.
#[derive(Args, Debug, Default, Clone)]
pub struct Inputs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `identity | power:<α> | sqrt | custom:<path>`.
    #[arg(long)]
    pub f: Option<String>,
    /// `skewed_frequency` or `skewed_raw`.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    /// Comma-separated success probabilities.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// Comma-separated initial composition.
    #[arg(long, value_delimiter = ',')]
    pub y0: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record every k steps instead of the geometric default.
    #[arg(long)]
    pub every: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// `start:stop:step`.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub paths: bool,
}

impl Inputs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig {
                schema: SCHEMA_VERSION,
                ..Default::default()
            },
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = Some(v.clone()); })*
            };
        }
        take!(f, model, p1, p2, p, y0, horizon, runs, seed, output, alpha, eta, epsilon, starts);
        if self.p.is_some() {
            c.p1 = None;
            c.p2 = None;
        } else if self.p1.is_some() || self.p2.is_some() {
            c.p = None;
        }
        if let Some(r) = &self.rule {
            c.rule = Some(
                serde_json::from_value::<RuleKind>(Value::String(r.clone()))
                    .map_err(|_| UrnError::Config(format!("unknown rule `{r}`")))?,
            );
        }
        if let Some(k) = self.every {
            c.checkpoints = Some(RecordingPolicy::Every(k));
        }
        if self.paths {
            c.paths = Some(true);
        }
        Ok(c)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    config_hash: String,
    seed: u64,
    git_describe: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch: Option<BatchSummary>,
    timestamp: u64,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, config: &'a ExperimentConfig, batch: Option<BatchSummary>) -> Self {
        Manifest {
            command,
            config,
            config_hash: config.hash(),
            seed: config.seed(),
            git_describe: git_describe(),
            batch,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Exclusive claim on an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| UrnError::io(dir, e))?;
        let path = dir.join(".urnlab.lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    UrnError::io(
                        &path,
                        std::io::Error::new(
                            e.kind(),
                            "output directory is in use by another urnlab process",
                        ),
                    )
                } else {
                    UrnError::io(&path, e)
                }
            })?;
        Ok(DirLock { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr as one JSON object.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        return report(&e);
    }
    match execute(&cli.command) {
        Ok(out) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("output serializes")
            );
            EXIT_OK
        }
        Err(e) => report(&e),
    }
}

fn report(e: &UrnError) -> i32 {
    eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("URNLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        UrnError::Config(format!(
            "URNLAB_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    // a second call in the same process (tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs one command and returns the JSON summary printed on stdout.
pub fn execute(command: &Command) -> Result<Value> {
    let cfg = command.inputs().resolve()?;
    let name = command.name();
    match command {
        Command::Simulate(_) => cmd_simulate(name, &cfg),
        Command::Equilibria(_) => cmd_equilibria(name, &cfg),
        Command::Scan(_) => cmd_scan(name, &cfg),
        Command::Clt(_) => cmd_clt(name, &cfg),
        Command::Polya(_) => cmd_polya(name, &cfg),
        Command::Finance(_) => cmd_finance(name, &cfg),
    }
}

fn attractor_targets(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<f64>)>> {
    let (p1, p2) = cfg.two_colour()?;
    let report = equilibria_2d(&cfg.shape()?, p1, p2)?;
    Ok(report
        .points
        .iter()
        .enumerate()
        .map(|(k, e)| {
            (
                format!("root{}_{}", k + 1, e.stability.as_str()),
                e.y.clone(),
            )
        })
        .collect())
}

fn cmd_simulate(name: &str, cfg: &ExperimentConfig) -> Result<Value> {
    let spec = BatchSpec {
        runs: cfg.runs.unwrap_or(1),
        horizon: cfg.horizon.unwrap_or(10_000),
        master_seed: cfg.seed(),
        policy: cfg.policy(),
        initial: cfg.initial()?,
        rule: cfg.drawing_rule()?,
        model: cfg.addition_model()?,
    };
    spec.validate()?;
    let dir = cfg.output_dir(name);
    let _lock = DirLock::acquire(&dir)?;
    let batch = run_batch(&spec)?;
    let manifest = Manifest::new(name, cfg, Some(BatchSummary::from(&spec)));
    write_batch_dir(
        &dir,
        &manifest,
        &batch,
        cfg.paths.unwrap_or(spec.runs <= 100),
    )?;
    let mut endpoint_counts = None;
    if spec.initial.dim() == 2
        && cfg.probabilities()?.is_some()
        && spec.rule.kind == RuleKind::SkewedFrequency
    {
        let labels = classify_endpoints(
            &batch,
            &attractor_targets(cfg)?,
            cfg.epsilon.unwrap_or(DEFAULT_EPSILON),
        );
        write_endpoints_csv(&dir.join("endpoints.csv"), &labels)?;
        let mut counts = std::collections::BTreeMap::<String, usize>::new();
        for l in &labels {
            *counts.entry(l.label.clone()).or_default() += 1;
        }
        endpoint_counts = Some(counts);
    }
    Ok(json!({
        "command": name,
        "output": dir,
        "runs": spec.runs,
        "horizon": spec.horizon,
        "endpoints": endpoint_counts,
    }))
}

fn cmd_equilibria(name: &str, cfg: &ExperimentConfig) -> Result<Value> {
    let f = cfg.shape()?;
    let h = cfg.mean_field_h()?;
    let d = h.nrows();
    let report = if d == 2 && cfg.probabilities()?.is_some() && cfg.h.is_none() {
        let (p1, p2) = cfg.two_colour()?;
        equilibria_2d(&f, p1, p2)?
    } else {
        let model = MeanFieldModel::new(f, h)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
        equilibria_general(
            &model,
            cfg.starts.unwrap_or(200),
            &mut rng,
            &GeneralOptions::default(),
        )?
    };
    let out = serde_json::to_value(&report)?;
    if let Some(dir) = &cfg.output {
        let _lock = DirLock::acquire(dir)?;
        write_json(&dir.join("equilibria.json"), &report)?;
        write_json(&dir.join("manifest.json"), &Manifest::new(name, cfg, None))?;
    }
    Ok(out)
}

fn cmd_scan(name: &str, cfg: &ExperimentConfig) -> Result<Value> {
    let (p1, p2) = cfg.two_colour()?;
    let grid = AlphaGrid::parse(cfg.alpha.as_deref().unwrap_or("0.5:6:0.05"))?;
    let table = scan_alpha(p1, p2, &grid.values()?)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let dir = cfg.output_dir(name);
    let _lock = DirLock::acquire(&dir)?;
    atomic_write(&dir.join("scan.csv"), &csv)?;
    write_json(&dir.join("manifest.json"), &Manifest::new(name, cfg, None))?;
    Ok(json!({
        "command": name,
        "output": dir,
        "rows": table.rows.len(),
        "tangency": table.tangency,
    }))
}

fn cmd_clt(name: &str, cfg: &ExperimentConfig) -> Result<Value> {
    let f = cfg.shape()?;
    let (p1, p2) = cfg.two_colour()?;
    let model = cfg.addition_model()?;
    let noise = NoiseModel::from_model(&model)?;
    let eta = cfg.eta.unwrap_or(DEFAULT_ETA);
    let roots = equilibria_2d(&f, p1, p2)?;
    let attractive: Vec<f64> = roots
        .with_stability(Stability::Attractive)
        .map(|e| e.y[0])
        .collect();
    let runs = cfg.runs.unwrap_or(0);
    let horizon = cfg.horizon.unwrap_or(100_000);
    let initial = cfg.initial()?;
    let fh = (runs > 0).then_some((horizon, initial.tr_y0));
    let predictions = attractive
        .iter()
        .map(|y| clt_prediction_2d(&f, p1, p2, &noise, *y, eta, fh))
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    if runs > 0 {
        let spec = BatchSpec {
            runs,
            horizon,
            master_seed: cfg.seed(),
            policy: RecordingPolicy::FinalOnly,
            initial,
            rule: cfg.drawing_rule()?,
            model,
        };
        let batch = run_batch(&spec)?;
        let retain = (predictions.len() > 1).then(|| cfg.epsilon.unwrap_or(DEFAULT_EPSILON));
        for p in &predictions {
            checks.push(match clt_check(&batch, p, retain) {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => json!({ "error": e.code(), "message": e.to_string() }),
            });
        }
    }
    let out = json!({ "predictions": predictions, "checks": checks });
    if let Some(dir) = &cfg.output {
        let _lock = DirLock::acquire(dir)?;
        write_json(&dir.join("clt.json"), &out)?;
        write_json(&dir.join("manifest.json"), &Manifest::new(name, cfg, None))?;
    }
    Ok(out)
}

/// Nonempty proper subsets of `0..d`, listed by bitmask.
fn proper_subsets(d: usize) -> Vec<Vec<usize>> {
    (1..(1u32 << d) - 1)
        .map(|mask| (0..d).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

fn cmd_polya(name: &str, cfg: &ExperimentConfig) -> Result<Value> {
    let f = cfg.shape()?;
    let model = cfg.addition_model()?;
    let initial = cfg.initial()?;
    let d = initial.dim();
    if d > 12 {
        return Err(UrnError::Scope(
            "trap enumeration is limited to 12 colours".into(),
        ));
    }
    let traps: Vec<Value> = proper_subsets(d)
        .into_iter()
        .map(|s| {
            let q = TrapQuery::new(s.clone(), d, f.clone())?;
            let subset: Vec<usize> = s.iter().map(|i| i + 1).collect();
            Ok(match trap_exclusion(&q) {
                Ok(v) => json!({ "subset": subset, "point": q.face_barycenter(), "verdict": v }),
                Err(e) => json!({ "subset": subset, "point": q.face_barycenter(), "error": e.code(), "message": e.to_string() }),
            })
        })
        .collect::<Result<_>>()?;
    let runs = cfg.runs.unwrap_or(0);
    let dirichlet = if runs > 0 {
        Some(dirichlet_limit_check(
            &f,
            &model,
            &initial.y,
            runs,
            cfg.horizon.unwrap_or(10_000),
            cfg.seed(),
        )?)
    } else {
        None
    };
    let out = json!({ "traps": traps, "dirichlet": dirichlet });
    if let Some(dir) = &cfg.output {
        let _lock = DirLock::acquire(dir)?;
        write_json(&dir.join("polya.json"), &out)?;
        write_json(&dir.join("manifest.json"), &Manifest::new(name, cfg, None))?;
    }
    Ok(out)
}

fn cmd_finance(name: &str, cfg: &ExperimentConfig) -> Result<Value> {
    let f = cfg.shape()?;
    let p = cfg
        .probabilities()?
        .ok_or_else(|| UrnError::Config("`p` or `p1`/`p2` is required for this command".into()))?;
    let perf = PerformanceModel::new(p.clone())?;
    let initial = cfg.initial()?;
    let runs = cfg.runs.unwrap_or(1);
    let horizon = cfg.horizon.unwrap_or(100_000);
    let policy = cfg.policy();
    let dir = cfg.output_dir(name);
    let _lock = DirLock::acquire(&dir)?;
    let trajs = run_allocation_batch(&perf, &f, &initial.y, horizon, runs, cfg.seed(), &policy)?;
    if cfg.paths.unwrap_or(runs <= 100) {
        for (k, t) in trajs.iter().enumerate() {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            atomic_write(&dir.join("paths").join(format!("run_{k}.csv")), &buf)?;
        }
    }
    let d = p.len();
    let mut finals = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut finals);
        let mut header = vec!["run".to_string()];
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.extend((1..=d).map(|i| format!("pi{i}")));
        header.push("hdist".into());
        w.write_record(&header)?;
        for (k, t) in trajs.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(t.final_y.iter().map(|v| v.to_string()));
            row.extend(t.final_pi.iter().map(|v| v.to_string()));
            row.push(t.points.last().map_or(f64::NAN, |p| p.hdist).to_string());
            w.write_record(&row)?;
        }
        w.flush()
            .map_err(|e| UrnError::io(dir.join("finals.csv"), e))?;
    }
    atomic_write(&dir.join("finals.csv"), &finals)?;
    let pi_ok = trajs
        .iter()
        .filter(|t| crate::linalg::max_dist(&t.final_pi, &p) <= 0.03)
        .count();
    let interval = (d == 2).then(|| interval_star(p[0], p[1]));
    let inside = interval.map(|(lo, hi)| {
        trajs
            .iter()
            .filter(|t| t.final_y[0] >= lo && t.final_y[0] <= hi)
            .count()
    });
    let summary = json!({
        "runs": runs,
        "horizon": horizon,
        "interval_star": interval,
        "fraction_in_interval_star": inside.map(|k| k as f64 / runs as f64),
        "fraction_pi_within_0_03": pi_ok as f64 / runs as f64,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("manifest.json"), &Manifest::new(name, cfg, None))?;
    Ok(json!({ "command": name, "output": dir, "summary": summary }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets() {
        assert_eq!(proper_subsets(2), vec![vec![0], vec![1]]);
        assert_eq!(proper_subsets(3).len(), 6);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"schema":1,"f":"sqrt","p1":0.7,"p2":0.75,"seed":3}"#,
        )
        .unwrap();
        let i = Inputs {
            config: Some(path),
            seed: Some(9),
            p: Some(vec![0.6, 0.6]),
            ..Default::default()
        };
        let c = i.resolve().unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.probabilities().unwrap(), Some(vec![0.6, 0.6]));
        assert_eq!(c.f.as_deref(), Some("sqrt"));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(a);
        assert!(DirLock::acquire(dir.path()).is_ok());
    }
}
