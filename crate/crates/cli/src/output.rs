//! File emission and ingestion helpers.

use std::io::Write;
use std::path::Path;

use ensemble_mdp::StochasticMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes to a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV with header `t,<columns...>`; row `k` is labelled `t0 + k`.
pub fn table_csv(columns: &[String], rows: &[Vec<f64>], t0: usize) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (k, row) in rows.iter().enumerate() {
        let mut record = vec![(t0 + k).to_string()];
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&record).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// `rho_1 .. rho_n`.
pub fn state_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Reads a `t,s` signal with rows for `t = 1..=T` in order.
pub fn read_signal(path: &Path, horizon: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::Parse(format!("signal: {e}")))?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "s" {
        return Err(CliError::Parse(format!("signal header must be `t,s`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut signal = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(format!("signal: {e}")))?;
        let t: usize = record[0]
            .parse()
            .map_err(|_| CliError::Parse(format!("signal row {}: bad time `{}`", k + 1, &record[0])))?;
        if t != k + 1 {
            return Err(CliError::Parse(format!("signal row {}: expected t = {}, found {t}", k + 1, k + 1)));
        }
        let s: f64 = record[1]
            .parse()
            .map_err(|_| CliError::Parse(format!("signal row {}: bad value `{}`", k + 1, &record[1])))?;
        signal.push(s);
    }
    if signal.len() != horizon {
        return Err(CliError::Invalid(format!("signal has {} rows, expected T = {horizon}", signal.len())));
    }
    Ok(signal)
}

/// Transition schedule on disk: `p_traj[t][dest][src]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub p_traj: Vec<Vec<Vec<f64>>>,
}

impl TransitionFile {
    pub fn new(p_traj: &[StochasticMatrix]) -> Self {
        TransitionFile {
            n: p_traj.first().map_or(0, StochasticMatrix::n),
            horizon: p_traj.len(),
            p_traj: p_traj.iter().map(StochasticMatrix::rows).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("transition file: {e}")))
    }

    pub fn matrices(&self) -> Result<Vec<StochasticMatrix>, CliError> {
        if self.p_traj.len() != self.horizon {
            return Err(CliError::Invalid(format!(
                "transition file lists {} matrices, expected T = {}",
                self.p_traj.len(),
                self.horizon
            )));
        }
        self.p_traj
            .iter()
            .map(|rows| {
                if rows.len() != self.n {
                    return Err(CliError::Invalid(format!("transition matrix has {} rows, expected {}", rows.len(), self.n)));
                }
                Ok(StochasticMatrix::from_rows(rows)?)
            })
            .collect()
    }
}
