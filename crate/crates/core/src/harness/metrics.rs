use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "real_step,eval_return_mean,eval_return_std,wall_clock_s,model_holdout_nll";

/// One evaluation point of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub real_step: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub wall_clock_s: Option<f64>,
    pub model_holdout_nll: Option<f64>,
}

impl MetricRecord {
    pub fn to_csv_line(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{}",
            self.real_step,
            self.eval_return_mean,
            self.eval_return_std,
            opt(self.wall_clock_s),
            opt(self.model_holdout_nll)
        )
        .expect("writing to a String");
        s
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Format(format!("metrics line `{line}` has {} fields", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("metrics value `{s}`: {e}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        Ok(MetricRecord {
            real_step: f[0]
                .parse()
                .map_err(|e| Error::Format(format!("metrics step `{}`: {e}", f[0])))?,
            eval_return_mean: num(f[1])?,
            eval_return_std: num(f[2])?,
            wall_clock_s: opt(f[3])?,
            model_holdout_nll: opt(f[4])?,
        })
    }
}

/// Appends records to a CSV file, flushing after each line so the file stays
/// valid if the run aborts.
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))?;
        Ok(MetricsWriter {
            path,
            file,
            last_step: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &MetricRecord) -> Result<()> {
        if self.last_step.is_some_and(|s| record.real_step < s) {
            return Err(Error::Usage(format!(
                "metric records must not go back in real steps ({} after {:?})",
                record.real_step, self.last_step
            )));
        }
        writeln!(self.file, "{}", record.to_csv_line()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))?;
        self.last_step = Some(record.real_step);
        Ok(())
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(Error::Format(format!("{} lacks the metrics header", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricRecord::parse_csv_line)
        .collect()
}
