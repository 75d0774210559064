//! Evaluation records, per-run matrices and their aggregation.

use std::io;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Column order of the matrix interchange file.
pub const MATRIX_COLUMNS: [&str; 7] =
    ["run_seed", "trained_upto", "evaluated", "episodes", "avg_step_reward", "avg_episode_reward", "accuracy"];

/// Summary of greedy evaluation on task `evaluated` after training through `trained_upto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub trained_upto: usize,
    pub evaluated: usize,
    pub episodes: usize,
    pub avg_step_reward: f64,
    pub avg_episode_reward: f64,
    pub accuracy: f64,
}

/// One finished evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub rewards: Vec<f64>,
    pub reached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub avg_step_reward: f64,
    pub avg_episode_reward: f64,
    pub accuracy: f64,
}

pub fn compute_metrics(traces: &[EpisodeTrace]) -> Result<Metrics, HarnessError> {
    if traces.is_empty() {
        return Err(HarnessError::NoEpisodes);
    }
    let n = traces.len() as f64;
    let mut step = 0.0;
    let mut episode = 0.0;
    let mut reached = 0usize;
    for t in traces {
        let sum: f64 = t.rewards.iter().sum();
        if !t.rewards.is_empty() {
            step += sum / t.rewards.len() as f64;
        }
        episode += sum;
        reached += t.reached as usize;
    }
    Ok(Metrics { avg_step_reward: step / n, avg_episode_reward: episode / n, accuracy: reached as f64 / n })
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    run_seed: u64,
    trained_upto: usize,
    evaluated: usize,
    episodes: usize,
    avg_step_reward: f64,
    avg_episode_reward: f64,
    accuracy: f64,
}

/// All evaluation records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    pub run_seed: u64,
    pub config_hash: String,
    pub records: Vec<EvalRecord>,
}

impl EvalMatrix {
    pub fn new(run_seed: u64, config_hash: impl Into<String>) -> Self {
        Self { run_seed, config_hash: config_hash.into(), records: Vec::new() }
    }

    pub fn push(&mut self, r: EvalRecord) -> Result<(), HarnessError> {
        if r.evaluated > r.trained_upto {
            return Err(HarnessError::Matrix(format!(
                "record ({}, {}) above the diagonal",
                r.trained_upto, r.evaluated
            )));
        }
        if !(0.0..=1.0).contains(&r.accuracy) {
            return Err(HarnessError::Matrix(format!("accuracy {} outside [0, 1]", r.accuracy)));
        }
        if self.get(r.trained_upto, r.evaluated).is_some() {
            return Err(HarnessError::Matrix(format!("duplicate record ({}, {})", r.trained_upto, r.evaluated)));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn get(&self, trained_upto: usize, evaluated: usize) -> Option<&EvalRecord> {
        self.records.iter().find(|r| r.trained_upto == trained_upto && r.evaluated == evaluated)
    }

    /// Sorted distinct `trained_upto` values.
    pub fn stages(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.records.iter().map(|r| r.trained_upto).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Records of task `evaluated` ordered by training stage.
    pub fn column(&self, evaluated: usize) -> Vec<EvalRecord> {
        let mut c: Vec<EvalRecord> = self.records.iter().filter(|r| r.evaluated == evaluated).copied().collect();
        c.sort_by_key(|r| r.trained_upto);
        c
    }

    /// Records of the first task: its retention over the sequence.
    pub fn retention(&self) -> Vec<EvalRecord> {
        self.column(0)
    }

    /// Mean accuracy over every task evaluated at `trained_upto`.
    pub fn mean_accuracy_at(&self, trained_upto: usize) -> Option<f64> {
        let row: Vec<f64> =
            self.records.iter().filter(|r| r.trained_upto == trained_upto).map(|r| r.accuracy).collect();
        (!row.is_empty()).then(|| row.iter().sum::<f64>() / row.len() as f64)
    }

    pub fn final_mean_accuracy(&self) -> Option<f64> {
        self.stages().last().and_then(|&s| self.mean_accuracy_at(s))
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(Row {
                run_seed: self.run_seed,
                trained_upto: r.trained_upto,
                evaluated: r.evaluated,
                episodes: r.episodes,
                avg_step_reward: r.avg_step_reward,
                avg_episode_reward: r.avg_episode_reward,
                accuracy: r.accuracy,
            })?;
        }
        if self.records.is_empty() {
            out.write_record(MATRIX_COLUMNS)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses a matrix file. The hash is not part of the file and is supplied by the caller.
    pub fn read_csv<R: io::Read>(r: R, config_hash: &str) -> Result<Self, HarnessError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(MATRIX_COLUMNS) {
            return Err(HarnessError::Matrix(format!(
                "unexpected columns: {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut seed = None;
        let mut m = EvalMatrix::new(0, config_hash);
        for row in rdr.deserialize() {
            let row: Row = row?;
            match seed {
                None => seed = Some(row.run_seed),
                Some(s) if s != row.run_seed => {
                    return Err(HarnessError::Matrix(format!("mixed run seeds {s} and {}", row.run_seed)))
                }
                _ => {}
            }
            m.push(EvalRecord {
                trained_upto: row.trained_upto,
                evaluated: row.evaluated,
                episodes: row.episodes,
                avg_step_reward: row.avg_step_reward,
                avg_episode_reward: row.avg_episode_reward,
                accuracy: row.accuracy,
            })?;
        }
        m.run_seed = seed.unwrap_or(0);
        Ok(m)
    }
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCell {
    pub trained_upto: usize,
    pub evaluated: usize,
    pub runs: usize,
    pub avg_step_reward: Stat,
    pub avg_episode_reward: Stat,
    pub accuracy: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMatrix {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<AggregateCell>,
}

pub fn aggregate_runs(matrices: &[EvalMatrix]) -> Result<AggregateMatrix, HarnessError> {
    let first = matrices.first().ok_or(HarnessError::NoRuns)?;
    if let Some(m) = matrices.iter().find(|m| m.config_hash != first.config_hash) {
        return Err(HarnessError::ConfigMismatch { expected: first.config_hash.clone(), got: m.config_hash.clone() });
    }
    let mut keys: Vec<(usize, usize)> =
        matrices.iter().flat_map(|m| m.records.iter().map(|r| (r.trained_upto, r.evaluated))).collect();
    keys.sort_unstable();
    keys.dedup();
    let cells = keys
        .into_iter()
        .map(|(t, e)| {
            let recs: Vec<&EvalRecord> = matrices.iter().filter_map(|m| m.get(t, e)).collect();
            let stat = |f: fn(&EvalRecord) -> f64| Stat::of(&recs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateCell {
                trained_upto: t,
                evaluated: e,
                runs: recs.len(),
                avg_step_reward: stat(|r| r.avg_step_reward),
                avg_episode_reward: stat(|r| r.avg_episode_reward),
                accuracy: stat(|r| r.accuracy),
            }
        })
        .collect();
    Ok(AggregateMatrix {
        config_hash: first.config_hash.clone(),
        seeds: matrices.iter().map(|m| m.run_seed).collect(),
        cells,
    })
}

impl AggregateMatrix {
    pub fn get(&self, trained_upto: usize, evaluated: usize) -> Option<&AggregateCell> {
        self.cells.iter().find(|c| c.trained_upto == trained_upto && c.evaluated == evaluated)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "trained_upto,evaluated,runs,avg_step_reward_mean,avg_step_reward_std,\
             avg_episode_reward_mean,avg_episode_reward_std,accuracy_mean,accuracy_std\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.trained_upto,
                c.evaluated,
                c.runs,
                c.avg_step_reward.mean,
                c.avg_step_reward.std,
                c.avg_episode_reward.mean,
                c.avg_episode_reward.std,
                c.accuracy.mean,
                c.accuracy.std
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, e: usize, acc: f64) -> EvalRecord {
        EvalRecord {
            trained_upto: t,
            evaluated: e,
            episodes: 2,
            avg_step_reward: acc / 2.0,
            avg_episode_reward: acc,
            accuracy: acc,
        }
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(&[EpisodeTrace { rewards: vec![1.0, 1.0], reached: true }]).unwrap();
        assert_eq!((m.avg_step_reward, m.avg_episode_reward, m.accuracy), (1.0, 2.0, 1.0));
        let m = compute_metrics(&[
            EpisodeTrace { rewards: vec![1.0], reached: true },
            EpisodeTrace { rewards: vec![0.0], reached: false },
        ])
        .unwrap();
        assert_eq!(m.accuracy, 0.5);
        let llr = EpisodeTrace { rewards: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6], reached: false };
        assert_eq!(compute_metrics(&[llr]).unwrap().avg_episode_reward, 0.6);
        assert!(matches!(compute_metrics(&[]), Err(HarnessError::NoEpisodes)));
    }

    #[test]
    fn rejects_upper_triangle_and_duplicates() {
        let mut m = EvalMatrix::new(0, "h");
        assert!(m.push(rec(0, 1, 0.5)).is_err());
        m.push(rec(1, 0, 0.5)).unwrap();
        assert!(m.push(rec(1, 0, 0.5)).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut m = EvalMatrix::new(7, "abc");
        m.push(rec(0, 0, 1.0)).unwrap();
        m.push(EvalRecord { avg_step_reward: 0.1 + 0.2, ..rec(1, 0, 0.35) }).unwrap();
        let text = m.to_csv_string();
        assert!(
            text.starts_with("run_seed,trained_upto,evaluated,episodes,avg_step_reward,avg_episode_reward,accuracy\n")
        );
        assert_eq!(EvalMatrix::read_csv(text.as_bytes(), "abc").unwrap(), m);
    }

    #[test]
    fn csv_rejects_wrong_header() {
        assert!(EvalMatrix::read_csv("seed,a\n1,2\n".as_bytes(), "h").is_err());
    }

    #[test]
    fn aggregate_examples() {
        let mut a = EvalMatrix::new(0, "h");
        a.push(rec(0, 0, 0.2)).unwrap();
        let mut b = EvalMatrix::new(1, "h");
        b.push(rec(0, 0, 0.4)).unwrap();
        let agg = aggregate_runs(&[a.clone(), b]).unwrap();
        assert!((agg.get(0, 0).unwrap().accuracy.mean - 0.3).abs() < 1e-15);

        let same = aggregate_runs(&[a.clone(), a.clone()]).unwrap();
        let c = same.get(0, 0).unwrap();
        assert_eq!((c.accuracy.mean, c.accuracy.std), (0.2, 0.0));

        let other = EvalMatrix { config_hash: "x".into(), ..a.clone() };
        assert!(matches!(aggregate_runs(&[a, other]), Err(HarnessError::ConfigMismatch { .. })));
        assert!(matches!(aggregate_runs(&[]), Err(HarnessError::NoRuns)));
    }

    #[test]
    fn retention_is_first_column() {
        let mut m = EvalMatrix::new(0, "h");
        for t in 0..3 {
            for e in 0..=t {
                m.push(rec(t, e, 1.0 / (1 + t + e) as f64)).unwrap();
            }
        }
        let ret: Vec<usize> = m.retention().iter().map(|r| r.trained_upto).collect();
        assert_eq!(ret, vec![0, 1, 2]);
        assert_eq!(m.final_mean_accuracy().unwrap(), (1.0 / 3.0 + 0.25 + 0.2) / 3.0);
    }
}
