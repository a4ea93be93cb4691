use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{JuiceError, Result};

use super::config::ExperimentConfig;
use super::run::{ExperimentResults, FailureCount, ResultRow};

pub const CSV_HEADER: [&str; 8] = [
    "algorithm",
    "tau_p",
    "trials",
    "nmse",
    "nmse_db",
    "srr",
    "mean_iters",
    "mean_seconds",
];

/// Reproducibility record written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub failures: Vec<FailureCount>,
}

/// `results.csv` → `results.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| JuiceError::io(path, e))?;
    write_csv_to(rows, file).map_err(|e| match e {
        JuiceError::Parse { message, .. } => JuiceError::parse(path, message),
        other => other,
    })
}

pub fn write_csv_to<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let csv_err = |e: csv::Error| JuiceError::parse(Path::new("<csv>"), e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    // written explicitly so that an empty table still has its header
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| JuiceError::parse(Path::new("<csv>"), e.to_string()))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| JuiceError::parse(path, e.to_string()))?;
    let header = r.headers().map_err(|e| JuiceError::parse(path, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(JuiceError::parse(path, format!("unexpected header {header:?}")));
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| JuiceError::parse(path, e.to_string()))
}

/// Writes the CSV table to `path` and the JSON sidecar beside it.
pub fn emit_results(results: &ExperimentResults, config: &ExperimentConfig, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| JuiceError::io(dir, e))?;
    }
    write_csv(&results.rows, path)?;
    let sidecar = Sidecar {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        failures: results.failures.clone(),
    };
    let json_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| JuiceError::parse(&json_path, e.to_string()))?;
    std::fs::write(&json_path, text).map_err(|e| JuiceError::io(&json_path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| JuiceError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| JuiceError::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::Algorithm;

    fn row(alg: Algorithm, nmse: f64) -> ResultRow {
        ResultRow {
            algorithm: alg,
            tau_p: 20,
            trials: 100,
            nmse: Some(nmse),
            nmse_db: Some(crate::metrics::to_db(nmse)),
            srr: Some(0.8125),
            mean_iters: Some(41.37),
            mean_seconds: None,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn nmse_db_column() {
        let mut buf = Vec::new();
        write_csv_to(&[row(Algorithm::Proposed, 0.01)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "proposed,20,100,0.01,-20.0,0.8125,41.37,");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![
            row(Algorithm::Proposed, 0.0123456789012345),
            row(Algorithm::IrL21, 1.0 / 3.0),
            ResultRow {
                nmse: None,
                nmse_db: None,
                mean_seconds: Some(0.25),
                ..row(Algorithm::OracleMmse, 0.5)
            },
        ];
        write_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = write_csv(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
