//! On-disk formats. JSON floats use the shortest representation that
//! parses back to the same `f64`; CSV floats use 17 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gmki_core::gaussian::{Gaussian, GaussianMixture};
use gmki_core::oracles::{Axis, GriddedDensity};
use gmki_core::{DMatrix, DVector, IterationRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";
pub const TIMINGS: &str = "timings.csv";
pub const FINAL_MIXTURE: &str = "final_mixture.json";
pub const DENSITY: &str = "density.csv";
pub const CONFIG: &str = "config.toml";

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// A float that keeps non-finite values through JSON by writing them as
/// the strings `"inf"`, `"-inf"` and `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            v if v.is_finite() => s.serialize_f64(v),
            v if v.is_nan() => s.serialize_str("nan"),
            v if v > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(Real(f64::INFINITY)),
                "-inf" => Ok(Real(f64::NEG_INFINITY)),
                "nan" => Ok(Real(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

fn wrap(v: &[f64]) -> Vec<Real> {
    v.iter().map(|x| Real(*x)).collect()
}

fn unwrap(v: Vec<Real>) -> Vec<f64> {
    v.into_iter().map(|x| x.0).collect()
}

/// One line of `records.jsonl`. Wall time is left out so that identical
/// runs produce identical files; it goes to `timings.csv` instead.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    iteration: usize,
    log_weights: Vec<Real>,
    means: Vec<Vec<Real>>,
    covariances: Vec<Vec<Real>>,
    cov_frobenius: Vec<Real>,
    misfits: Vec<Real>,
    forward_evals: usize,
    diagnostic_evals: usize,
}

pub fn record_line(r: &IterationRecord) -> String {
    serde_json::to_string(&RecordLine {
        iteration: r.iteration,
        log_weights: wrap(&r.log_weights),
        means: r.means.iter().map(|m| wrap(m)).collect(),
        covariances: r.covariances.iter().map(|c| wrap(c)).collect(),
        cov_frobenius: wrap(&r.cov_frobenius),
        misfits: wrap(&r.misfits),
        forward_evals: r.forward_evals,
        diagnostic_evals: r.diagnostic_evals,
    })
    .expect("records serialize")
}

pub fn parse_record_line(line: &str) -> serde_json::Result<IterationRecord> {
    let l: RecordLine = serde_json::from_str(line)?;
    Ok(IterationRecord {
        iteration: l.iteration,
        log_weights: unwrap(l.log_weights),
        means: l.means.into_iter().map(unwrap).collect(),
        covariances: l.covariances.into_iter().map(unwrap).collect(),
        cov_frobenius: unwrap(l.cov_frobenius),
        misfits: unwrap(l.misfits),
        forward_evals: l.forward_evals,
        diagnostic_evals: l.diagnostic_evals,
        wall_time_s: 0.0,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<IterationRecord>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = parse_record_line(&line)
            .map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// Final mixture with row-major covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureFile {
    pub dim: usize,
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl MixtureFile {
    pub fn from_mixture(mix: &GaussianMixture) -> Self {
        let n = mix.dim();
        Self {
            dim: n,
            log_weights: mix.log_weights().to_vec(),
            weights: mix.weights(),
            means: mix.components().iter().map(|g| g.mean().as_slice().to_vec()).collect(),
            covariances: mix
                .components()
                .iter()
                .map(|g| (0..n * n).map(|i| g.cov()[(i / n, i % n)]).collect())
                .collect(),
        }
    }

    /// Rebuilds the mixture. Stored log-weights are already normalized, so
    /// renormalizing moves them by rounding only.
    pub fn to_mixture(&self) -> Result<GaussianMixture, CliError> {
        let n = self.dim;
        if self.means.len() != self.log_weights.len() || self.covariances.len() != self.means.len() {
            return Err(CliError::Config("mixture file: component counts disagree".into()));
        }
        let components = self
            .means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| {
                if m.len() != n || c.len() != n * n {
                    return Err(CliError::Config("mixture file: entry has the wrong length".into()));
                }
                Ok(Gaussian::new(DVector::from_column_slice(m), DMatrix::from_row_slice(n, n, c))?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(GaussianMixture::new(components, self.log_weights.clone())?)
    }
}

pub fn write_density(path: &Path, d: &GriddedDensity) -> Result<(), CliError> {
    let mut w = create(path)?;
    d.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_density(path: &Path) -> Result<GriddedDensity, CliError> {
    GriddedDensity::read_csv(&mut open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Serializable copy of a grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisFile {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl From<Axis> for AxisFile {
    fn from(a: Axis) -> Self {
        Self { lo: a.lo, hi: a.hi, n: a.n }
    }
}

/// Writes rows of floats under `header`, 17 significant digits each.
pub fn write_csv_rows<'a>(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>> + 'a) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
