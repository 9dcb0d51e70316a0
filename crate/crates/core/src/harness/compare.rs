use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use super::experiment::{load_run_info, RunInfo, METRICS_FILE};
use super::metrics::{read_metrics, MetricRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub final_return: f64,
    pub best_return: f64,
    /// First real step whose evaluation reached the threshold.
    pub steps_to_threshold: Option<u64>,
    pub records: Vec<MetricRecord>,
}

/// Runs laid side by side on the real-step axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub threshold: Option<f64>,
    pub runs: Vec<RunSummary>,
    pub steps: Vec<u64>,
}

/// Compares runs that share task and protocol configuration. Runs whose
/// hashes differ are refused.
pub fn compare(dirs: &[PathBuf], threshold: Option<f64>) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(Error::Usage("compare needs at least one run directory".into()));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        runs.push(summarize(dir, threshold)?);
    }
    let first = &runs[0].info;
    for r in &runs[1..] {
        if r.info.task_hash != first.task_hash {
            return Err(Error::ComparisonRefused(format!(
                "{} and {} use different task configurations",
                runs[0].dir.display(),
                r.dir.display()
            )));
        }
        if r.info.protocol_hash != first.protocol_hash {
            return Err(Error::ComparisonRefused(format!(
                "{} and {} use different protocol configurations",
                runs[0].dir.display(),
                r.dir.display()
            )));
        }
    }
    let steps: BTreeSet<u64> = runs
        .iter()
        .flat_map(|r| r.records.iter().map(|m| m.real_step))
        .collect();
    Ok(Comparison {
        threshold,
        runs,
        steps: steps.into_iter().collect(),
    })
}

fn summarize(dir: &Path, threshold: Option<f64>) -> Result<RunSummary> {
    let info = load_run_info(dir)?;
    let records = read_metrics(dir.join(METRICS_FILE))?;
    let last = records
        .last()
        .ok_or_else(|| Error::Format(format!("{} has no metric records", dir.display())))?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        final_return: last.eval_return_mean,
        best_return: records
            .iter()
            .map(|r| r.eval_return_mean)
            .fold(f64::NEG_INFINITY, f64::max),
        steps_to_threshold: threshold.and_then(|t| {
            records
                .iter()
                .find(|r| r.eval_return_mean >= t)
                .map(|r| r.real_step)
        }),
        info,
        records,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |r: &RunSummary| r.dir.display().to_string();
        let width = self.runs.iter().map(|r| name(r).len()).max().unwrap_or(3).max(3);
        writeln!(
            f,
            "{:<width$}  {:<8}  {:>6}  {:>12}  {:>12}  {:>18}",
            "run", "agent", "seed", "final", "best", "steps_to_threshold"
        )?;
        for r in &self.runs {
            let reach = match (self.threshold, r.steps_to_threshold) {
                (None, _) => "-".to_string(),
                (Some(_), Some(s)) => s.to_string(),
                (Some(_), None) => "never".to_string(),
            };
            writeln!(
                f,
                "{:<width$}  {:<8}  {:>6}  {:>12.2}  {:>12.2}  {:>18}",
                name(r),
                r.info.agent,
                r.info.seed,
                r.final_return,
                r.best_return,
                reach
            )?;
        }
        writeln!(f)?;
        write!(f, "{:>10}", "real_step")?;
        for i in 0..self.runs.len() {
            write!(f, "  {:>12}", format!("run{}", i + 1))?;
        }
        writeln!(f)?;
        for &s in &self.steps {
            write!(f, "{s:>10}")?;
            for r in &self.runs {
                match r.records.iter().find(|m| m.real_step == s) {
                    Some(m) => write!(f, "  {:>12.2}", m.eval_return_mean)?,
                    None => write!(f, "  {:>12}", "")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
