use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{invalid, Error, Result};
use crate::evaluation::SCHEMA_VERSION;

/// One (seed, grid point, algorithm) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub seed: u64,
    pub family: String,
    pub m: usize,
    #[serde(rename = "N")]
    pub total_n: usize,
    pub d: usize,
    #[serde(rename = "R2_planted")]
    pub r2_planted: f64,
    #[serde(rename = "R2_mode")]
    pub r2_mode: String,
    pub algorithm: String,
    /// Zero for algorithms without a proximal weight.
    pub lambda: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
    #[serde(rename = "K_T")]
    pub final_steps: usize,
    pub aer: f64,
    pub ier_max: f64,
    pub stderr: f64,
    pub wall_ms: f64,
    /// Per-client risks, written only by [`write_ier_long`].
    #[serde(skip)]
    pub ier_client: Vec<f64>,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    schema_version: u32,
    rows: &'a [ResultRow],
}

fn check_rows(rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(invalid("refusing to write an empty result table"));
    }
    for r in rows {
        let vals = [r.r2_planted, r.lambda, r.aer, r.ier_max, r.stderr, r.wall_ms];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value in row for {} seed {}", r.algorithm, r.seed)));
        }
    }
    Ok(())
}

/// Writes `rows` as CSV or JSON. Floats use the shortest decimal that reads
/// back to the same value.
pub fn write_results<W: Write>(rows: &[ResultRow], w: W, format: OutputFormat) -> Result<()> {
    check_rows(rows)?;
    match format {
        OutputFormat::Csv => {
            let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
            for r in rows {
                out.serialize(r)?;
            }
            out.flush()?;
        }
        OutputFormat::Json => emit_json(rows, w)?,
    }
    Ok(())
}

/// JSON form: `{"schema_version": 1, "rows": [...]}` with the CSV column names.
pub fn emit_json<W: Write>(rows: &[ResultRow], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &JsonTable { schema_version: SCHEMA_VERSION, rows })?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes `rows` to `path`. An empty table is an error and leaves no file.
pub fn emit_results(rows: &[ResultRow], path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    check_rows(rows)?;
    let mut buf = Vec::new();
    write_results(rows, &mut buf, format)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Long format: `experiment_id,seed,algorithm,R2_planted,client,ier`.
pub fn write_ier_long<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    check_rows(rows)?;
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["experiment_id", "seed", "algorithm", "R2_planted", "client", "ier"])?;
    for r in rows {
        for (i, v) in r.ier_client.iter().enumerate() {
            out.write_record([
                r.experiment_id.clone(),
                r.seed.to_string(),
                r.algorithm.clone(),
                r.r2_planted.to_string(),
                i.to_string(),
                v.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, aer: f64) -> ResultRow {
        ResultRow {
            experiment_id: "t".into(),
            seed,
            family: "quadratic".into(),
            m: 2,
            total_n: 10,
            d: 3,
            r2_planted: 0.1 + 0.2,
            r2_mode: "aer".into(),
            algorithm: "fedavg".into(),
            lambda: 0.0,
            rounds: 20,
            final_steps: 0,
            aer,
            ier_max: aer * 3.0,
            stderr: 0.0,
            wall_ms: 0.0,
            ier_client: Vec::new(),
        }
    }

    #[test]
    fn header_and_round_trip() {
        let rows = vec![row(1, 1.0 / 3.0), row(2, 1e-300)];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf, OutputFormat::Csv).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "experiment_id,seed,family,m,N,d,R2_planted,R2_mode,algorithm,lambda,T,K_T,aer,ier_max,stderr,wall_ms"
        );
        assert!(!text.contains('\r'));
        assert_eq!(read_results_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(emit_results(&[], &path, OutputFormat::Csv).is_err());
        assert!(!path.exists());
        let mut bad = row(1, f64::NAN);
        bad.aer = f64::NAN;
        assert!(emit_results(&[bad], &path, OutputFormat::Json).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn json_mirrors_the_columns() {
        let mut buf = Vec::new();
        emit_json(&[row(7, 0.5)], &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["rows"][0]["K_T"], 0);
        assert_eq!(v["rows"][0]["R2_planted"].as_f64(), Some(0.1 + 0.2));
    }
}
