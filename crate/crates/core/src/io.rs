//! File formats: matrices as JSON or interleaved CSV, the versioned model
//! document, and float formatting that is stable across runs.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::intertwining::{IntertwiningModel, Tolerances};
use crate::operator::{C64, ComplexMatrix, ComplexVector, Eigensystem};
use crate::report::RelationReport;
use crate::zoo::{Expectation, Fixture, FixtureId, Params};
use crate::{Error, Result};

pub const MODEL_SCHEMA: &str = "isospec-model-v1";
pub const CSV_HEADER: &str = "# isospec-csv-v1";

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// serde_json formatter that writes every float through [`fmt_f64`].
/// Non-finite values never reach it: serde_json emits `null` for those.
#[derive(Default)]
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with fixed float formatting, newline-terminated.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `[re, im]` pairs.
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.entries.len() != self.rows * self.cols {
            return Err(Error::Parse(format!(
                "matrix declares {}x{} but has {} entries",
                self.rows,
                self.cols,
                self.entries.len()
            )));
        }
        if let Some(k) = self.entries.iter().position(|[re, im]| !re.is_finite() || !im.is_finite()) {
            return Err(Error::Parse(format!(
                "non-finite entry at row {}, column {}",
                k / self.cols.max(1),
                k % self.cols.max(1)
            )));
        }
        Ok(ComplexMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.entries.iter().map(|&[re, im]| C64::new(re, im)),
        ))
    }
}

pub fn parse_matrix_json(text: &str) -> Result<ComplexMatrix> {
    let m: MatrixJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("matrix JSON: {e}")))?;
    m.to_matrix()
}

/// One matrix row per line, `re,im` interleaved. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<ComplexMatrix> {
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums = line
            .split(',')
            .map(|t| {
                let v: f64 = t
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", lineno + 1, t.trim())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse(format!("line {}: non-finite value", lineno + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() % 2 != 0 {
            return Err(Error::Parse(format!(
                "line {}: odd number of fields; expected re,im pairs",
                lineno + 1
            )));
        }
        let row: Vec<C64> = nums.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} columns, previous rows have {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    let cols = rows[0].len();
    Ok(ComplexMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

pub fn matrix_to_csv(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let fields: Vec<String> = (0..m.ncols())
            .flat_map(|j| [fmt_f64(m[(i, j)].re), fmt_f64(m[(i, j)].im)])
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Reads `.csv` as interleaved CSV and anything else as matrix JSON.
pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_matrix_csv(&text)
    } else {
        parse_matrix_json(&text)
    }
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn vector_pairs(v: &ComplexVector) -> Vec<[f64; 2]> {
    v.iter().map(|&z| pair(z)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureInfo {
    pub id: FixtureId,
    pub params: Params,
    pub truncation: Option<usize>,
    pub expectations: Vec<Expectation>,
}

/// Serialized form of an [`IntertwiningModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    pub case: String,
    pub theta1: MatrixJson,
    #[serde(rename = "X")]
    pub x: MatrixJson,
    pub theta2: MatrixJson,
    pub kernel_set: Vec<usize>,
    pub tilde_k: Vec<Option<f64>>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub phi1: Vec<Vec<[f64; 2]>>,
    pub residuals: RelationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureInfo>,
}

impl ModelFile {
    pub fn new(model: &IntertwiningModel, residuals: RelationReport) -> Self {
        Self {
            schema: MODEL_SCHEMA.into(),
            case: model.case.to_string(),
            theta1: MatrixJson::from_matrix(&model.theta1),
            x: MatrixJson::from_matrix(&model.x),
            theta2: MatrixJson::from_matrix(&model.theta2),
            kernel_set: model.kernel_set.clone(),
            tilde_k: model.tilde_k.clone(),
            eigenvalues: model.eigenvalues.iter().map(|&z| pair(z)).collect(),
            phi1: model.phi1.iter().map(vector_pairs).collect(),
            residuals,
            fixture: None,
        }
    }

    pub fn from_fixture(f: &Fixture, residuals: RelationReport) -> Self {
        let mut file = Self::new(&f.model, residuals);
        file.fixture = Some(FixtureInfo {
            id: f.id,
            params: f.params.clone(),
            truncation: f.truncation,
            expectations: f.expectations.clone(),
        });
        file
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema {:?}, expected {MODEL_SCHEMA:?}",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Rebuild the model from `theta1`, `X` and the stored eigendata, then
    /// put the stored `theta2` back so that edits to it are not silently
    /// repaired.
    pub fn to_model(&self, tol: Tolerances) -> Result<IntertwiningModel> {
        let theta1 = self.theta1.to_matrix()?;
        let x = self.x.to_matrix()?;
        let theta2 = self.theta2.to_matrix()?;
        let values: Vec<C64> = self.eigenvalues.iter().map(|&[re, im]| C64::new(re, im)).collect();
        let vectors: Vec<ComplexVector> = self
            .phi1
            .iter()
            .map(|v| ComplexVector::from_iterator(v.len(), v.iter().map(|&[re, im]| C64::new(re, im))))
            .collect();
        let finite = values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && vectors.iter().all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        if !finite {
            return Err(Error::Parse("non-finite eigendata".into()));
        }
        let es = Eigensystem::from_parts(values, vectors, tol.multiplicity)?;
        let mut model = IntertwiningModel::with_eigensystem(theta1, x, es, tol)?;
        if theta2.shape() != model.theta2.shape() {
            return Err(Error::Dimension(format!(
                "stored theta2 is {:?}, the construction gives {:?}",
                theta2.shape(),
                model.theta2.shape()
            )));
        }
        model.theta2 = theta2;
        Ok(model)
    }

    /// Stored kernel set and `k~` against a fresh model.
    pub fn metadata_mismatch(&self, model: &IntertwiningModel) -> Option<String> {
        if self.kernel_set != model.kernel_set {
            return Some(format!(
                "stored kernel set {:?}, recomputed {:?}",
                self.kernel_set, model.kernel_set
            ));
        }
        if self.tilde_k.len() != model.tilde_k.len() {
            return Some("tilde_k has the wrong length".into());
        }
        for (n, (a, b)) in self.tilde_k.iter().zip(&model.tilde_k).enumerate() {
            let same = match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                (None, None) => true,
                _ => false,
            };
            if !same {
                return Some(format!("tilde_k[{n}]: stored {a:?}, recomputed {b:?}"));
            }
        }
        None
    }
}

/// CSV writer for fixed-column tables; rows are formatted immediately.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: Vec<String>,
    body: String,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        let fields: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(self.body, "{}", fields.join(","));
    }

    pub fn render(&self) -> String {
        format!("{CSV_HEADER}\n{}\n{}", self.columns.join(","), self.body)
    }
}
