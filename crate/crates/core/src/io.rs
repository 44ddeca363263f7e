//! CSV datasets, JSON configuration and JSON reports.
//!
//! Reports are written with a fixed key order and every float printed with
//! 17 significant digits, so identical inputs give byte-identical files and
//! reading a report back reproduces each number exactly. Non-finite values
//! are written as `null` and read back as NaN.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::inference::InferenceReport;
use crate::likelihood::ConditionDiagnostics;
use crate::model::{Dataset, LinkPair, Observation, INTERCEPT_NAME};
use crate::simulate::{McReport, MisspecificationReport};
use crate::solver::{FitResult, FitWarning, ModelKind};

pub const SCHEMA_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Which CSV columns feed the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub response_column: String,
    pub trials_column: String,
    pub zero_covariates: Vec<String>,
    pub count_covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub add_intercepts: bool,
}

fn default_true() -> bool {
    true
}

impl DatasetSchema {
    /// Parses an inline JSON schema (starting with `{`) or reads it from a file.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if arg.trim_start().starts_with('{') {
            Ok(serde_json::from_str(arg)?)
        } else {
            read_json(arg)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    pub rows_read: usize,
    /// 1-based data rows skipped because every field was empty.
    pub dropped_rows: Vec<usize>,
}

pub fn read_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<CsvLoad> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, schema)
}

pub fn read_csv_from(reader: impl std::io::Read, schema: &DatasetSchema) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let find = |name: &str| index.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));

    let y_col = find(&schema.response_column)?;
    let n_col = find(&schema.trials_column)?;
    let x_cols = schema.zero_covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let w_cols = schema.count_covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    let mut rows_read = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        rows_read += 1;
        if record.iter().all(|f| f.trim().is_empty()) {
            dropped.push(row);
            continue;
        }
        let cell = |col: usize| record.get(col).unwrap_or("").trim();
        let count = |col: usize, name: &str| -> Result<u64> {
            cell(col).parse::<u64>().map_err(|_| Error::Cell {
                row,
                column: name.to_string(),
                reason: format!("expected a nonnegative integer, found {:?}", cell(col)),
            })
        };
        let real = |col: usize, name: &str| -> Result<f64> {
            match cell(col).parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Cell {
                    row,
                    column: name.to_string(),
                    reason: format!("expected a finite number, found {:?}", cell(col)),
                }),
            }
        };
        let y = count(y_col, &schema.response_column)?;
        let n = count(n_col, &schema.trials_column)?;
        if n == 0 {
            return Err(Error::Cell { row, column: schema.trials_column.clone(), reason: "trials must be positive".into() });
        }
        if y > n {
            return Err(Error::Cell {
                row,
                column: schema.response_column.clone(),
                reason: format!("response {y} exceeds trials {n}"),
            });
        }
        let mut x = Vec::with_capacity(x_cols.len() + 1);
        let mut w = Vec::with_capacity(w_cols.len() + 1);
        if schema.add_intercepts {
            x.push(1.0);
            w.push(1.0);
        }
        for (&c, name) in x_cols.iter().zip(&schema.zero_covariates) {
            x.push(real(c, name)?);
        }
        for (&c, name) in w_cols.iter().zip(&schema.count_covariates) {
            w.push(real(c, name)?);
        }
        rows.push(Observation::new(y, n, x, w));
    }

    let names = |cols: &[String]| -> Vec<String> {
        let mut v = Vec::with_capacity(cols.len() + 1);
        if schema.add_intercepts {
            v.push(INTERCEPT_NAME.to_string());
        }
        v.extend(cols.iter().cloned());
        v
    };
    let dataset = Dataset::with_names(rows, names(&schema.zero_covariates), names(&schema.count_covariates))?;
    Ok(CsvLoad { dataset, rows_read, dropped_rows: dropped })
}

/// Schema describing the file [`write_csv`] produces for `data`.
pub fn schema_for(data: &Dataset) -> DatasetSchema {
    DatasetSchema {
        response_column: "y".into(),
        trials_column: "n".into(),
        zero_covariates: data.zero_names()[1..].to_vec(),
        count_covariates: data.count_names()[1..].to_vec(),
        add_intercepts: true,
    }
}

/// Writes `y`, `n` and every non-intercept covariate column once; a name
/// listed in both designs is a shared column.
pub fn write_csv_to(data: &Dataset, out: impl std::io::Write) -> Result<DatasetSchema> {
    let schema = schema_for(data);
    let mut columns: Vec<(String, bool, usize)> = Vec::new();
    for (j, name) in data.zero_names().iter().enumerate().skip(1) {
        columns.push((name.clone(), true, j));
    }
    for (j, name) in data.count_names().iter().enumerate().skip(1) {
        match columns.iter().find(|(n, _, _)| n == name) {
            Some(&(_, true, zj)) => {
                if data.observations().iter().any(|o| o.x[zj] != o.w[j]) {
                    return Err(Error::Config(format!("column {name:?} differs between the two designs")));
                }
            }
            Some(_) => return Err(Error::Config(format!("duplicate column {name:?}"))),
            None => columns.push((name.clone(), false, j)),
        }
    }
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string(), "n".to_string()];
    header.extend(columns.iter().map(|c| c.0.clone()));
    wtr.write_record(&header)?;
    for o in data.observations() {
        let mut rec = vec![o.y.to_string(), o.n_trials.to_string()];
        rec.extend(columns.iter().map(|&(_, zero, j)| if zero { o.x[j] } else { o.w[j] }.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(schema)
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<DatasetSchema> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    let schema = write_csv_to(data, &mut buf)?;
    buf.flush().map_err(|e| Error::io(path, e))?;
    Ok(schema)
}

/// Pretty JSON with every float written as `{:.16e}` (17 significant digits).
struct SigDigits<'a>(PrettyFormatter<'a>);

impl Formatter for SigDigits<'_> {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
    fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Deserializers mapping JSON `null` back to NaN.
pub mod nullable {
    use serde::{Deserialize, Deserializer};

    pub fn f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub fn vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }

    pub fn opt_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        Ok(Option::<Vec<Option<f64>>>::deserialize(d)?
            .map(|v| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub links: LinkPair,
    pub zero_covariates: Vec<String>,
    pub count_covariates: Vec<String>,
    pub observations: usize,
}

/// Fit outcome plus Wald inference, as written by `zib fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub software_version: String,
    pub model: ModelSpec,
    pub seed: Option<u64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(deserialize_with = "nullable::f64")]
    pub loglik: f64,
    #[serde(deserialize_with = "nullable::f64")]
    pub score_norm: f64,
    #[serde(deserialize_with = "nullable::vec")]
    pub estimates: Vec<f64>,
    /// Absent when the fit did not converge.
    #[serde(deserialize_with = "nullable::opt_vec")]
    pub std_errors: Option<Vec<f64>>,
    #[serde(deserialize_with = "nullable::opt_vec")]
    pub z_values: Option<Vec<f64>>,
    #[serde(deserialize_with = "nullable::opt_vec")]
    pub p_values: Option<Vec<f64>>,
    pub level: f64,
    #[serde(deserialize_with = "nullable::opt_vec")]
    pub ci_lower: Option<Vec<f64>>,
    #[serde(deserialize_with = "nullable::opt_vec")]
    pub ci_upper: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub information: Vec<Vec<f64>>,
    pub diagnostics: ConditionDiagnostics,
    #[serde(deserialize_with = "nullable::vec")]
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<FitWarning>,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl FitReport {
    pub fn new(fit: &FitResult, inference: Option<&InferenceReport>, data: &Dataset, level: f64, seed: Option<u64>) -> Self {
        let zero_covariates = match fit.model {
            ModelKind::ZeroInflated => data.zero_names().to_vec(),
            ModelKind::BinomialOnly => Vec::new(),
        };
        FitReport {
            schema_version: SCHEMA_VERSION,
            software_version: SOFTWARE_VERSION.to_string(),
            model: ModelSpec {
                kind: fit.model,
                links: fit.links,
                zero_covariates,
                count_covariates: data.count_names().to_vec(),
                observations: data.len(),
            },
            seed,
            converged: fit.converged,
            iterations: fit.iterations,
            loglik: fit.loglik,
            score_norm: fit.score_norm,
            estimates: fit.theta_hat.to_stacked(),
            std_errors: inference.map(|r| r.std_errors.clone()),
            z_values: inference.map(|r| r.z_values.clone()),
            p_values: inference.map(|r| r.p_values.clone()),
            level,
            ci_lower: inference.map(|r| r.ci_lower.clone()),
            ci_upper: inference.map(|r| r.ci_upper.clone()),
            covariance: inference.map(|r| rows(&r.covariance)),
            information: rows(&fit.information.matrix),
            diagnostics: fit.diagnostics,
            loglik_trace: fit.loglik_trace.clone(),
            warnings: fit.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReportDocument {
    pub schema_version: u32,
    pub software_version: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: McReport,
}

impl McReportDocument {
    pub fn new(report: McReport) -> Self {
        McReportDocument {
            schema_version: SCHEMA_VERSION,
            software_version: SOFTWARE_VERSION.to_string(),
            seed: report.design.seed_or_default(),
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecificationDocument {
    pub schema_version: u32,
    pub software_version: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: MisspecificationReport,
}

impl MisspecificationDocument {
    pub fn new(report: MisspecificationReport) -> Self {
        MisspecificationDocument {
            schema_version: SCHEMA_VERSION,
            software_version: SOFTWARE_VERSION.to_string(),
            seed: report.correct.design.seed_or_default(),
            report,
        }
    }
}

pub fn write_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path)
}

/// Tab-separated standardized estimates of the included replications.
pub fn standardized_table(report: &McReport) -> String {
    let k = report.theta0.len();
    let mut s = String::from("replicate");
    for j in 0..k {
        s.push_str(&format!("\tz{j}"));
    }
    s.push('\n');
    for r in report.records.iter().filter(|r| r.converged && r.error.is_none()) {
        s.push_str(&r.replicate.to_string());
        for v in &r.standardized {
            s.push_str(&format!("\t{v:.17e}"));
        }
        s.push('\n');
    }
    s
}
