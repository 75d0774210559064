//! Experiment execution, reporting and inventory listing behind the CLI.
//!
//! A results directory holds:
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | copy of the experiment file |
//! | `manifest.json` | config hash, seeds, per-seed wall-clock |
//! | `matrix_seed{N}.csv` | evaluation matrix of seed N |
//! | `model_seed{N}.json` | final network of seed N (`_task{i}` per task for independent runs) |
//! | `aggregate.csv` | per-cell mean and standard deviation over finished seeds |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::LearnerRegistry;
use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::env::arm::{hlr_default_tasks, llr_default_tasks};
use crate::env::wheeled::track_table;
use crate::env::{Benchmark, EnvConfig, EnvRegistry, TaskGoal};
use crate::harness::{aggregate_runs, run_sequence_with, AggregateMatrix, EvalMatrix, Protocol};
use crate::kinematics::KinematicChain;

pub const OUTPUT_ROOT_VAR: &str = "CROSS_OUTPUT_ROOT";
pub const MANIFEST_FORMAT: &str = "cross-run-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunnerError {
    /// Bad configuration, arguments or inputs.
    #[error("{0}")]
    Input(String),
    /// Failure while executing.
    #[error("{0}")]
    Runtime(String),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Input(_) => 1,
            RunnerError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for RunnerError {
    fn from(e: ConfigError) -> Self {
        RunnerError::Input(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunnerError> {
    // Write then rename so an interrupted run never leaves a truncated file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub matrix: String,
    pub models: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub benchmark: Benchmark,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedEntry>,
    pub wall_clock_seconds: f64,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>, RunnerError> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| RunnerError::Input(format!("{}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(RunnerError::Input(format!(
                "{}: unsupported manifest {} v{}",
                path.display(),
                m.format,
                m.version
            )));
        }
        Ok(Some(m))
    }

    fn save(&self, dir: &Path) -> Result<(), RunnerError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), &(text + "\n"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run only this seed.
    pub seed: Option<u64>,
    /// Results directory, overriding the config and output root.
    pub out: Option<PathBuf>,
    /// Root for results directories named in configs.
    pub output_root: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub executed: Vec<u64>,
    pub skipped: Vec<u64>,
    pub aggregate: AggregateMatrix,
}

pub fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    if let Some(out) = &opts.out {
        return out.clone();
    }
    let root = opts.output_root.clone().unwrap_or_else(|| PathBuf::from("results"));
    root.join(cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.name)))
}

pub fn matrix_file(seed: u64) -> String {
    format!("matrix_seed{seed}.csv")
}

/// Executes every configured seed (or the one override) not already present
/// in the results directory.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunSummary, RunnerError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let exp = cfg.resolve()?;
    let seeds = match opts.seed {
        Some(s) => vec![s],
        None => exp.seeds.clone(),
    };
    let out = output_dir(&cfg, opts);
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let hash = exp.run.config_hash.clone();
    let mut manifest = match Manifest::load(&out)? {
        Some(m) if m.config_hash != hash => {
            return Err(RunnerError::Input(format!(
                "{} holds results of a different configuration (hash {}); choose another --out",
                out.display(),
                m.config_hash
            )))
        }
        Some(m) => m,
        None => Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            name: cfg.name.clone(),
            benchmark: cfg.benchmark,
            config_hash: hash.clone(),
            seeds: Vec::new(),
            runs: Vec::new(),
            wall_clock_seconds: 0.0,
        },
    };
    let config_text = fs::read_to_string(config_path).map_err(|e| io_err(config_path, e))?;
    write_file(&out.join("config.toml"), &config_text)?;
    for &s in &seeds {
        if !manifest.seeds.contains(&s) {
            manifest.seeds.push(s);
        }
    }
    manifest.save(&out)?;

    let (mut executed, mut skipped) = (Vec::new(), Vec::new());
    for &seed in &seeds {
        let done = manifest.runs.iter().any(|r| r.seed == seed && out.join(&r.matrix).exists());
        if done {
            if !opts.quiet {
                eprintln!("seed {seed}: results present, skipping");
            }
            skipped.push(seed);
            continue;
        }
        let entry = run_one_seed(&exp, seed, &out, opts.quiet)?;
        manifest.runs.retain(|r| r.seed != seed);
        manifest.runs.push(entry);
        manifest.runs.sort_by_key(|r| r.seed);
        manifest.wall_clock_seconds = manifest.runs.iter().map(|r| r.wall_clock_seconds).sum();
        manifest.save(&out)?;
        executed.push(seed);
    }

    let matrices = load_matrices(&out, &manifest)?;
    let aggregate = aggregate_runs(&matrices).map_err(|e| RunnerError::Runtime(e.to_string()))?;
    write_file(&out.join("aggregate.csv"), &aggregate.to_csv_string())?;
    Ok(RunSummary { out_dir: out, executed, skipped, aggregate })
}

fn run_one_seed(exp: &Experiment, seed: u64, out: &Path, quiet: bool) -> Result<SeedEntry, RunnerError> {
    let started = Instant::now();
    let total = exp.run.tasks.len();
    let mut progress = |stage: usize, recs: &[crate::harness::EvalRecord]| {
        if !quiet {
            let mean = recs.iter().map(|r| r.accuracy).sum::<f64>() / recs.len() as f64;
            eprintln!("seed {seed}: task {}/{total} done, mean accuracy {mean:.3}", stage + 1);
        }
    };
    let result = run_sequence_with(&exp.run, seed, &EnvRegistry::default(), &LearnerRegistry::default(), &mut progress)
        .map_err(|e| RunnerError::Runtime(format!("seed {seed}: {e}")))?;
    let mut models = Vec::new();
    for (i, learner) in result.learners.iter().enumerate() {
        let name = match exp.run.protocol {
            Protocol::Sequential => format!("model_seed{seed}.json"),
            Protocol::Independent => format!("model_seed{seed}_task{i}.json"),
        };
        write_file(&out.join(&name), &learner.network().save_json())?;
        models.push(name);
    }
    let matrix = matrix_file(seed);
    write_file(&out.join(&matrix), &result.matrix.to_csv_string())?;
    Ok(SeedEntry { seed, matrix, models, wall_clock_seconds: started.elapsed().as_secs_f64() })
}

fn load_matrices(dir: &Path, manifest: &Manifest) -> Result<Vec<EvalMatrix>, RunnerError> {
    let mut out = Vec::new();
    for r in &manifest.runs {
        let path = dir.join(&r.matrix);
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        let m = EvalMatrix::read_csv(file, &manifest.config_hash)
            .map_err(|e| RunnerError::Input(format!("{}: {e}", path.display())))?;
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub runs: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    if !dir.is_dir() {
        return Err(RunnerError::Input(format!("{} is not a directory", dir.display())));
    }
    let mut dirs = Vec::new();
    if dir.join("manifest.json").exists() {
        dirs.push(dir.to_path_buf());
    }
    let mut subs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("manifest.json").exists())
        .collect();
    subs.sort();
    dirs.extend(subs);
    Ok(dirs)
}

fn fmt_cell(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// Rows are evaluated tasks, columns training stages; cells above the diagonal are `-`.
pub fn triangular_table(agg: &AggregateMatrix, metric: fn(&crate::harness::AggregateCell) -> f64) -> String {
    let stages: Vec<usize> = {
        let mut s: Vec<usize> = agg.cells.iter().map(|c| c.trained_upto).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut evaluated: Vec<usize> = agg.cells.iter().map(|c| c.evaluated).collect();
    evaluated.sort_unstable();
    evaluated.dedup();
    let mut out = String::from("task");
    for t in &stages {
        out.push_str(&format!(",T{}", t + 1));
    }
    out.push('\n');
    for e in &evaluated {
        out.push_str(&format!("T{}", e + 1));
        for t in &stages {
            out.push(',');
            match agg.get(*t, *e) {
                Some(c) => out.push_str(&fmt_cell(metric(c))),
                None => out.push('-'),
            }
        }
        out.push('\n');
    }
    out
}

/// Mean accuracy over tasks seen so far, averaged across seeds.
pub fn accuracy_curve(matrices: &[EvalMatrix]) -> String {
    let mut out = String::from("trained_upto,tasks_evaluated,mean_accuracy,std_accuracy\n");
    let stages = matrices.first().map(|m| m.stages()).unwrap_or_default();
    for s in stages {
        let per_seed: Vec<f64> = matrices.iter().filter_map(|m| m.mean_accuracy_at(s)).collect();
        let n = matrices[0].records.iter().filter(|r| r.trained_upto == s).count();
        let st = crate::harness::Stat::of(&per_seed);
        out.push_str(&format!("{},{},{},{}\n", s, n, fmt_cell(st.mean), fmt_cell(st.std)));
    }
    out
}

pub fn retention_table(agg: &AggregateMatrix) -> String {
    let mut out =
        String::from("trained_upto,accuracy_mean,accuracy_std,avg_step_reward_mean,avg_episode_reward_mean\n");
    let mut col: Vec<&crate::harness::AggregateCell> = agg.cells.iter().filter(|c| c.evaluated == 0).collect();
    col.sort_by_key(|c| c.trained_upto);
    for c in col {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.trained_upto,
            fmt_cell(c.accuracy.mean),
            fmt_cell(c.accuracy.std),
            fmt_cell(c.avg_step_reward.mean),
            fmt_cell(c.avg_episode_reward.mean)
        ));
    }
    out
}

/// Writes tables and curve data for every run directory under `dir` into `dir/report`.
pub fn cmd_report(dir: &Path) -> Result<ReportSummary, RunnerError> {
    let dirs = run_dirs(dir)?;
    let mut runs = Vec::new();
    let mut files = Vec::new();
    let report = dir.join("report");
    for d in dirs {
        let manifest = Manifest::load(&d)?.expect("run_dirs checked the manifest");
        let matrices = load_matrices(&d, &manifest)?;
        if matrices.is_empty() {
            continue;
        }
        fs::create_dir_all(&report).map_err(|e| io_err(&report, e))?;
        let agg = aggregate_runs(&matrices).map_err(|e| RunnerError::Input(e.to_string()))?;
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| manifest.name.clone());
        let outputs = [
            (format!("{name}-accuracy.csv"), triangular_table(&agg, |c| c.accuracy.mean)),
            (format!("{name}-step-reward.csv"), triangular_table(&agg, |c| c.avg_step_reward.mean)),
            (format!("{name}-episode-reward.csv"), triangular_table(&agg, |c| c.avg_episode_reward.mean)),
            (format!("{name}-curve.csv"), accuracy_curve(&matrices)),
            (format!("{name}-retention.csv"), retention_table(&agg)),
        ];
        for (file, text) in outputs {
            let path = report.join(file);
            write_file(&path, &text)?;
            files.push(path);
        }
        runs.push(name);
    }
    if runs.is_empty() {
        return Err(RunnerError::Input(format!("no evaluation matrices found under {}", dir.display())));
    }
    Ok(ReportSummary { runs, files })
}

/// Prints the task or track inventory of a benchmark.
pub fn cmd_list<W: Write>(benchmark: &str, out: &mut W) -> Result<(), RunnerError> {
    let bench: Benchmark = benchmark.parse().map_err(|e: crate::env::EnvError| RunnerError::Input(e.to_string()))?;
    let text = match bench {
        Benchmark::Mlf | Benchmark::Mpo => {
            track_table(bench, EnvConfig::default().mlf.led_seed).map_err(|e| RunnerError::Runtime(e.to_string()))?
        }
        Benchmark::Hlr | Benchmark::Llr => {
            let chain = KinematicChain::panda();
            let seq = if bench == Benchmark::Hlr {
                hlr_default_tasks(&chain, &EnvConfig::default().hlr)
            } else {
                llr_default_tasks(&chain, crate::config::LLR_GOAL_ACTIONS)
                    .map_err(|e| RunnerError::Runtime(e.to_string()))?
            };
            let mut s = String::from("index,name,goal_x,goal_y,goal_z,step_budget\n");
            for (i, t) in seq.tasks.iter().enumerate() {
                if let TaskGoal::Pose(p) = t.goal {
                    let [x, y, z] = p.map(fmt_cell);
                    s.push_str(&format!("{i},{},{x},{y},{z},{}\n", t.name, t.step_budget));
                }
            }
            s
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| RunnerError::Runtime(e.to_string()))
}
