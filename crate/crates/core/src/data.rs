//! Datasets, centring/scaling, CSV input/output and simulated data.

use crate::linalg::column_means;
use crate::rng::{self, seeded};
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Name of the label column written by the generators.
pub const CLASS_COLUMN: &str = "class";

/// An `n x p` numeric sample with feature names and optional class labels.
///
/// Labels are carried along for display; nothing in the estimation pipeline
/// reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    values: DMatrix<T>,
    feature_names: Vec<String>,
    labels: Option<Vec<String>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(values: DMatrix<T>, feature_names: Vec<String>, labels: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(format!("empty dataset ({n}x{p})")));
        }
        if feature_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} feature names for {p} columns",
                feature_names.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dimension(format!("{} labels for {n} rows", l.len())));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.finite()) {
            // column-major storage
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos % n + 1,
                pos / n + 1
            )));
        }
        Ok(Self {
            values,
            feature_names,
            labels,
        })
    }

    /// Dataset with generated feature names `x1..xp`.
    pub fn from_matrix(values: DMatrix<T>) -> Result<Self> {
        let names = default_names("x", values.ncols());
        Self::new(values, names, None)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<T> {
        self.values.row(i).transpose()
    }

    /// Same rows restricted to the given columns.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.p()) {
            return Err(Error::Dimension(format!("column {bad} out of range")));
        }
        let values = self.values.select_columns(columns);
        let names = columns.iter().map(|&c| self.feature_names[c].clone()).collect();
        Self::new(values, names, self.labels.clone())
    }

    pub fn with_values(&self, values: DMatrix<T>, feature_names: Vec<String>) -> Result<Self> {
        Self::new(values, feature_names, self.labels.clone())
    }

    /// Writes the comma-separated format read by [`load_csv`]: a header row,
    /// then one row per observation, with the labels (if any) in a trailing
    /// `class` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = self.feature_names.join(",");
        if self.labels.is_some() {
            header.push(',');
            header.push_str(CLASS_COLUMN);
        }
        writeln!(out, "{header}")?;
        for i in 0..self.n() {
            let mut line = String::new();
            for j in 0..self.p() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{}", self.values[(i, j)]));
            }
            if let Some(labels) = &self.labels {
                line.push(',');
                line.push_str(&labels[i]);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn default_names(prefix: &str, p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("{prefix}{j}")).collect()
}

/// Reads a numeric CSV file. See [`read_csv`].
pub fn load_csv<T: Real>(path: impl AsRef<Path>, has_header: bool, label_column: Option<&str>) -> Result<Dataset<T>> {
    let file = std::fs::File::open(path)?;
    read_csv(file, has_header, label_column)
}

/// Parses comma-separated numeric data (`.` decimal separator, no quoting).
///
/// The column named `label_column` (which requires a header) is moved into
/// the dataset labels. At least two rows and two numeric columns are required.
pub fn read_csv<T: Real, R: Read>(input: R, has_header: bool, label_column: Option<&str>) -> Result<Dataset<T>> {
    read_csv_min_columns(input, has_header, label_column, 2)
}

/// As [`read_csv`], requiring at least `min_columns` numeric columns.
pub fn read_csv_min_columns<T: Real, R: Read>(
    input: R,
    has_header: bool,
    label_column: Option<&str>,
    min_columns: usize,
) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(|e| csv_error(e, 1))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let label_index = match (label_column, &header) {
        (None, _) => None,
        (Some(name), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidData(format!("no column named `{name}`")))?,
        ),
        (Some(name), None) => {
            return Err(Error::InvalidArgument(format!(
                "label column `{name}` requires a header row"
            )))
        }
    };

    let first_row = if has_header { 2 } else { 1 };
    let mut cells: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (k, record) in reader.records().enumerate() {
        let row = first_row + k;
        let record = record.map_err(|e| csv_error(e, row))?;
        width.get_or_insert(record.len());
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_index {
                labels.push(cell.to_string());
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("`{cell}` is not finite"),
                });
            }
            cells.push(T::lit(value));
        }
        n += 1;
    }

    let total = width.unwrap_or(header.as_ref().map_or(0, Vec::len));
    let p = total.saturating_sub(usize::from(label_index.is_some()));
    if p < min_columns.max(1) {
        return Err(Error::InvalidData(format!(
            "need at least {} numeric columns, found {p}",
            min_columns.max(1)
        )));
    }
    if n < 2 {
        return Err(Error::InvalidData(format!("need at least 2 rows, found {n}")));
    }
    let names = match header {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != label_index)
            .map(|(_, name)| name)
            .collect(),
        None => default_names("x", p),
    };
    let values = DMatrix::from_row_slice(n, p, &cells);
    Dataset::new(values, names, label_index.map(|_| labels))
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::InvalidData(format!(
            "ragged input: row {row} has {len} fields, expected {expected_len}"
        )),
        csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
        _ => Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    Center,
    CenterScale,
}

impl std::str::FromStr for PreprocessMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Self::Center),
            "center_scale" | "center-scale" => Ok(Self::CenterScale),
            other => Err(Error::InvalidArgument(format!(
                "unknown preprocessing mode `{other}` (expected center or center_scale)"
            ))),
        }
    }
}

/// Column centring and optional scaling by the sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor<T: Real> {
    pub mode: PreprocessMode,
    pub mean: DVector<T>,
    /// All ones in `Center` mode.
    pub scale: DVector<T>,
}

impl<T: Real> Preprocessor<T> {
    pub fn fit(data: &Dataset<T>, mode: PreprocessMode) -> Result<Self> {
        let mean = column_means(data.values());
        let p = data.p();
        let scale = match mode {
            PreprocessMode::Center => DVector::from_element(p, T::one()),
            PreprocessMode::CenterScale => {
                let n = data.n();
                if n < 2 {
                    return Err(Error::InvalidData("scaling needs at least 2 rows".into()));
                }
                let mut s = DVector::zeros(p);
                for j in 0..p {
                    let col = data.values().column(j);
                    let ss = col.iter().fold(T::zero(), |acc, &v| {
                        let dv = v - mean[j];
                        acc + dv * dv
                    });
                    let var = ss / T::from_count(n - 1);
                    if !(var > T::zero()) {
                        return Err(Error::ZeroVariance(data.feature_names()[j].clone()));
                    }
                    s[j] = var.sqrt();
                }
                s
            }
        };
        Ok(Self { mode, mean, scale })
    }

    pub fn from_parts(mode: PreprocessMode, mean: DVector<T>, scale: DVector<T>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::Dimension("mean and scale lengths differ".into()));
        }
        if scale.iter().any(|s| !(*s > T::zero()) || !s.finite()) {
            return Err(Error::InvalidArgument("scale entries must be positive".into()));
        }
        Ok(Self { mode, mean, scale })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        self.check(data)?;
        let mut out = data.values().clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        data.with_values(out, data.feature_names().to_vec())
    }

    pub fn invert(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        self.check(data)?;
        let mut out = data.values().clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.apply(|v| *v = *v * s + m);
        }
        data.with_values(out, data.feature_names().to_vec())
    }

    fn check(&self, data: &Dataset<T>) -> Result<()> {
        if data.p() != self.p() {
            return Err(Error::Dimension(format!(
                "preprocessor fitted on {} columns, data has {}",
                self.p(),
                data.p()
            )));
        }
        Ok(())
    }
}

pub fn fit_preprocessor<T: Real>(data: &Dataset<T>, mode: PreprocessMode) -> Result<Preprocessor<T>> {
    Preprocessor::fit(data, mode)
}

pub fn apply_preprocessor<T: Real>(pre: &Preprocessor<T>, data: &Dataset<T>) -> Result<Dataset<T>> {
    pre.apply(data)
}

/// Component means of the triangle mixture in the first two coordinates.
pub const TRIANGLE_MEANS: [[f64; 2]; 3] = [[-1.0, -1.0], [0.0, 1.0], [1.0, -1.0]];
/// Common isotropic variance of the triangle components.
pub const TRIANGLE_VARIANCE: f64 = 0.1;

/// Three equal-weight bivariate Gaussians centred on the vertices of a
/// triangle in coordinates 1-2, padded with `p - 2` independent standard
/// Gaussian coordinates. Labels record the component of origin (1..=3).
pub fn simulate_triangle<T: Real>(n: usize, p: usize, seed: u64) -> Result<Dataset<T>> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("triangle data needs p >= 2, got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let sd = TRIANGLE_VARIANCE.sqrt();
    let mut values = DMatrix::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let g = rng.random_range(0..3usize);
        for k in 0..2 {
            let z: f64 = rng::standard_normal(&mut rng);
            values[(i, k)] = T::lit(TRIANGLE_MEANS[g][k] + sd * z);
        }
        for k in 2..p {
            values[(i, k)] = rng::standard_normal(&mut rng);
        }
        labels.push((g + 1).to_string());
    }
    Dataset::new(values, default_names("x", p), Some(labels))
}

/// Number of waveform features.
pub const WAVEFORM_FEATURES: usize = 21;

/// Triangular base waveform `h` (1, 2 or 3) at feature `j` (1-based).
pub fn waveform_base(h: usize, j: i32) -> f64 {
    let w1 = |j: i32| (6 - (j - 11).abs()).max(0) as f64;
    match h {
        1 => w1(j),
        2 => w1(j - 4),
        3 => w1(j + 4),
        _ => panic!("waveform index must be 1, 2 or 3"),
    }
}

/// Noise-free waveform profile of `class` (1..=3) at mixing weight `u`.
pub fn waveform_profile(class: usize, u: f64) -> [f64; WAVEFORM_FEATURES] {
    let (a, b) = match class {
        1 => (1, 2),
        2 => (2, 3),
        3 => (3, 1),
        _ => panic!("waveform class must be 1, 2 or 3"),
    };
    let mut out = [0.0; WAVEFORM_FEATURES];
    for (k, v) in out.iter_mut().enumerate() {
        let j = k as i32 + 1;
        *v = u * waveform_base(a, j) + (1.0 - u) * waveform_base(b, j);
    }
    out
}

/// Breiman's three-class waveform data with 21 features. Each feature gets
/// its own standard normal noise draw.
pub fn simulate_waveform<T: Real>(n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let mut values = DMatrix::zeros(n, WAVEFORM_FEATURES);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = rng.random_range(1..=3usize);
        let u: f64 = rng.random();
        let profile = waveform_profile(class, u);
        for (j, base) in profile.iter().enumerate() {
            let eps: f64 = rng::standard_normal(&mut rng);
            values[(i, j)] = T::lit(base + eps);
        }
        labels.push(class.to_string());
    }
    Dataset::new(values, default_names("x", WAVEFORM_FEATURES), Some(labels))
}
