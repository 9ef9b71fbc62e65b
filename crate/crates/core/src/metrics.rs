//! Diagnostics for fitted projections.

use crate::data::Dataset;
use crate::ga::{run_ppgmmga, GaConfig};
use crate::gmm::GaussianMixture;
use crate::linalg::{span_projector, spectral_norm_sym};
use crate::negentropy::{entropy_mc, gaussian_entropy, EstimatorKind, EstimatorSpec, DEFAULT_MC_SAMPLES};
use crate::projection::{pca_basis, project_mixture, Basis};
use crate::{Error, Real, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Monte Carlo negentropy of the mixture projected on `basis`, with its
/// standard error.
pub fn mc_negentropy_of_basis<T: Real>(
    model: &GaussianMixture<T>,
    basis: &Basis<T>,
    samples: usize,
    seed: u64,
) -> Result<(T, T)> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 Monte Carlo samples".into()));
    }
    let projected = project_mixture(model, basis)?;
    let (_, cov) = projected.moments();
    let (h, se) = entropy_mc(&projected, samples, seed)?;
    Ok((gaussian_entropy(&cov)? - h, se))
}

/// `J_a / J_mc`; above 1 the approximation overestimates.
pub fn relative_accuracy<T: Real>(j_a: T, j_mc: T) -> Result<T> {
    if j_mc == T::zero() || !j_mc.finite() || !j_a.finite() {
        return Err(Error::Undefined(format!(
            "relative accuracy {} / {} is undefined",
            j_a.as_f64(),
            j_mc.as_f64()
        )));
    }
    Ok(j_a / j_mc)
}

/// Projection-norm distance between two column spaces: the spectral norm of
/// the difference of the orthogonal projectors, and its arcsine in degrees.
pub fn subspace_distance<T: Real>(b1: &Basis<T>, b2: &Basis<T>) -> Result<(T, T)> {
    if b1.p() != b2.p() || b1.d() != b2.d() {
        return Err(Error::Dimension(format!(
            "bases are {}x{} and {}x{}",
            b1.p(),
            b1.d(),
            b2.p(),
            b2.d()
        )));
    }
    let diff = b1.projector()? - b2.projector()?;
    let delta = spectral_norm_sym(&diff).min(T::one()).max(T::zero());
    Ok((delta, delta.asin() * T::lit(180.0) / T::pi()))
}

/// Angle in degrees between the spans of two raw matrices.
pub fn subspace_angle<T: Real>(b1: &DMatrix<T>, b2: &DMatrix<T>) -> Result<T> {
    let diff = span_projector(b1)? - span_projector(b2)?;
    let delta = spectral_norm_sym(&diff).min(T::one()).max(T::zero());
    Ok(delta.asin() * T::lit(180.0) / T::pi())
}

/// Per-feature component contrast of a two-component diagonal mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScreen<T: Real> {
    /// `μ_j1 − μ_j2`
    pub signal: Vec<T>,
    /// `|μ_j1 − μ_j2| / (σ_j1 + σ_j2)`
    pub abs_snr: Vec<T>,
}

impl<T: Real> FeatureScreen<T> {
    /// Indices of features with `|signal| ≥ min_signal` and
    /// `abs_snr ≥ min_snr`.
    pub fn select(&self, min_signal: T, min_snr: T) -> Vec<usize> {
        (0..self.signal.len())
            .filter(|&j| self.signal[j].abs() >= min_signal && self.abs_snr[j] >= min_snr)
            .collect()
    }
}

pub fn screen_features<T: Real>(model: &GaussianMixture<T>) -> Result<FeatureScreen<T>> {
    if model.n_components() != 2 {
        return Err(Error::InvalidArgument(format!(
            "feature screening needs exactly 2 components, got {}",
            model.n_components()
        )));
    }
    let (c1, c2) = (model.component(0), model.component(1));
    for c in [c1, c2] {
        let cov = c.covariance();
        let off = (0..cov.nrows())
            .flat_map(|i| (0..cov.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .any(|(i, j)| cov[(i, j)] != T::zero());
        if off {
            return Err(Error::InvalidArgument(
                "feature screening needs diagonal covariances".into(),
            ));
        }
    }
    let p = model.dim();
    let mut signal = Vec::with_capacity(p);
    let mut abs_snr = Vec::with_capacity(p);
    for j in 0..p {
        let s = c1.mean()[j] - c2.mean()[j];
        let noise = c1.covariance()[(j, j)].sqrt() + c2.covariance()[(j, j)].sqrt();
        signal.push(s);
        abs_snr.push(s.abs() / noise);
    }
    Ok(FeatureScreen { signal, abs_snr })
}

/// Settings for [`compare_estimators`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub estimators: Vec<EstimatorKind>,
    pub ga: GaConfig,
    pub mc_samples: usize,
    /// Include a principal-component column (needs data).
    pub pca: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            estimators: EstimatorKind::CLOSED_FORM.to_vec(),
            ga: GaConfig::default(),
            mc_samples: DEFAULT_MC_SAMPLES,
            pca: true,
        }
    }
}

/// Offset added to the run seed for each estimator's GA.
pub fn estimator_seed_offset(kind: EstimatorKind) -> u64 {
    match kind {
        EstimatorKind::Ut => 0,
        EstimatorKind::Var => 1,
        EstimatorKind::Sote => 2,
        EstimatorKind::Mc => 3,
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonColumn<T: Real> {
    pub label: String,
    /// Maximised approximated negentropy (absent for PCA).
    pub negentropy: Option<T>,
    pub mc_negentropy: Option<T>,
    pub mc_std_error: Option<T>,
    pub relative_accuracy: Option<T>,
    pub basis: Option<Basis<T>>,
    /// Failure or not-applicable explanation.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport<T: Real> {
    pub d: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub columns: Vec<ComparisonColumn<T>>,
    /// Pairwise angles in degrees; `None` where a basis is missing.
    pub angles: Vec<Vec<Option<T>>>,
}

fn mc_column<T: Real>(
    model: &GaussianMixture<T>,
    label: String,
    negentropy: Option<T>,
    basis: Basis<T>,
    samples: usize,
    seed: u64,
) -> ComparisonColumn<T> {
    match mc_negentropy_of_basis(model, &basis, samples, seed) {
        Ok((j_mc, se)) => {
            // a ratio against an MC value within noise of zero is meaningless
            let (rel, note) = match negentropy {
                Some(j_a) if j_mc > T::lit(3.0) * se => match relative_accuracy(j_a, j_mc) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                },
                Some(_) => (
                    None,
                    Some("not applicable: MC negentropy is indistinguishable from zero".into()),
                ),
                None => (None, None),
            };
            ComparisonColumn {
                label,
                negentropy,
                mc_negentropy: Some(j_mc),
                mc_std_error: Some(se),
                relative_accuracy: rel,
                basis: Some(basis),
                note,
            }
        }
        Err(e) => ComparisonColumn {
            label,
            negentropy,
            mc_negentropy: None,
            mc_std_error: None,
            relative_accuracy: None,
            basis: Some(basis),
            note: Some(format!("MC negentropy failed: {e}")),
        },
    }
}

/// Runs the GA once per estimator (seed plus a fixed per-estimator offset),
/// evaluates every resulting basis, plus an optional PCA basis of `data`,
/// with one shared MC seed, and tabulates pairwise subspace angles.
pub fn compare_estimators<T: Real>(
    model: &GaussianMixture<T>,
    data: Option<&Dataset<T>>,
    d: usize,
    config: &CompareConfig,
    seed: u64,
) -> Result<ComparisonReport<T>> {
    let mc_seed = seed;
    let mut columns: Vec<ComparisonColumn<T>> = config
        .estimators
        .par_iter()
        .map(|&kind| {
            let ga = GaConfig {
                seed: seed.wrapping_add(estimator_seed_offset(kind)),
                ..config.ga.clone()
            };
            let spec = match kind {
                EstimatorKind::Mc => EstimatorSpec::monte_carlo(config.mc_samples, mc_seed),
                k => EstimatorSpec::new(k),
            };
            match run_ppgmmga(model, d, &spec, &ga) {
                Ok(r) => mc_column(
                    model,
                    kind.code().to_string(),
                    Some(r.best_fitness),
                    r.best_basis,
                    config.mc_samples,
                    mc_seed,
                ),
                Err(e) => ComparisonColumn {
                    label: kind.code().to_string(),
                    negentropy: None,
                    mc_negentropy: None,
                    mc_std_error: None,
                    relative_accuracy: None,
                    basis: None,
                    note: Some(format!("pursuit failed: {e}")),
                },
            }
        })
        .collect();
    if config.pca {
        let data = data.ok_or_else(|| Error::InvalidArgument("PCA column requested without data".into()))?;
        if data.p() != model.dim() {
            return Err(Error::Dimension("data and model dimensions differ".into()));
        }
        let column = match pca_basis(data, d) {
            Ok(pca) => {
                let mut c = mc_column(model, "PCA".into(), None, pca.basis, config.mc_samples, mc_seed);
                if c.note.is_none() {
                    c.note = pca.warning;
                }
                c
            }
            Err(e) => ComparisonColumn {
                label: "PCA".into(),
                negentropy: None,
                mc_negentropy: None,
                mc_std_error: None,
                relative_accuracy: None,
                basis: None,
                note: Some(format!("PCA failed: {e}")),
            },
        };
        columns.push(column);
    }
    let k = columns.len();
    let mut angles = vec![vec![None; k]; k];
    for i in 0..k {
        if columns[i].basis.is_some() {
            angles[i][i] = Some(T::zero());
        }
        for j in i + 1..k {
            if let (Some(a), Some(b)) = (&columns[i].basis, &columns[j].basis) {
                let deg = subspace_distance(a, b).ok().map(|(_, deg)| deg);
                angles[i][j] = deg;
                angles[j][i] = deg;
            }
        }
    }
    Ok(ComparisonReport {
        d,
        mc_samples: config.mc_samples,
        mc_seed,
        columns,
        angles,
    })
}

pub const COMPARISON_SCHEMA_VERSION: u32 = 1;

/// Table rows of a comparison, one entry per column label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRows {
    pub negentropy: Vec<Option<f64>>,
    pub mc_negentropy: Vec<Option<f64>>,
    pub mc_std_error: Vec<Option<f64>>,
    pub relative_accuracy: Vec<Option<f64>>,
}

/// JSON form of a [`ComparisonReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonDocument {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub d: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub labels: Vec<String>,
    pub rows: ComparisonRows,
    /// Degrees, row-major by label.
    pub angles: Vec<Vec<Option<f64>>>,
    pub notes: Vec<Option<String>>,
    /// Column-major `p x d` basis per label.
    pub bases: Vec<Option<Vec<Vec<f64>>>>,
}

impl ComparisonDocument {
    pub fn from_report<T: Real>(report: &ComparisonReport<T>, seed: u64, config_hash: Option<String>) -> Self {
        let col = |f: &dyn Fn(&ComparisonColumn<T>) -> Option<T>| -> Vec<Option<f64>> {
            report.columns.iter().map(|c| f(c).map(|v| v.as_f64())).collect()
        };
        Self {
            schema_version: COMPARISON_SCHEMA_VERSION,
            seed,
            config_hash,
            d: report.d,
            mc_samples: report.mc_samples,
            mc_seed: report.mc_seed,
            labels: report.columns.iter().map(|c| c.label.clone()).collect(),
            rows: ComparisonRows {
                negentropy: col(&|c| c.negentropy),
                mc_negentropy: col(&|c| c.mc_negentropy),
                mc_std_error: col(&|c| c.mc_std_error),
                relative_accuracy: col(&|c| c.relative_accuracy),
            },
            angles: report
                .angles
                .iter()
                .map(|row| row.iter().map(|v| v.map(|x| x.as_f64())).collect())
                .collect(),
            notes: report.columns.iter().map(|c| c.note.clone()).collect(),
            bases: report
                .columns
                .iter()
                .map(|c| {
                    c.basis.as_ref().map(|b| {
                        b.matrix()
                            .column_iter()
                            .map(|col| col.iter().map(|v| v.as_f64()).collect())
                            .collect()
                    })
                })
                .collect(),
        }
    }

    /// Structural checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        let schema = |m: String| Err(Error::Schema(m));
        if self.schema_version != COMPARISON_SCHEMA_VERSION {
            return schema(format!("unsupported schema_version {}", self.schema_version));
        }
        let k = self.labels.len();
        let rows = &self.rows;
        for (name, len) in [
            ("rows.negentropy", rows.negentropy.len()),
            ("rows.mc_negentropy", rows.mc_negentropy.len()),
            ("rows.mc_std_error", rows.mc_std_error.len()),
            ("rows.relative_accuracy", rows.relative_accuracy.len()),
            ("angles", self.angles.len()),
            ("notes", self.notes.len()),
            ("bases", self.bases.len()),
        ] {
            if len != k {
                return schema(format!("{name} has {len} entries for {k} labels"));
            }
        }
        for i in 0..k {
            if self.angles[i].len() != k {
                return schema(format!("angle row {i} has {} entries", self.angles[i].len()));
            }
            if let Some(v) = self.angles[i][i] {
                if v != 0.0 {
                    return schema(format!("angle diagonal entry {i} is {v}"));
                }
            }
            for j in 0..k {
                if self.angles[i][j] != self.angles[j][i] {
                    return schema(format!("angle matrix is not symmetric at ({i}, {j})"));
                }
                if let Some(v) = self.angles[i][j] {
                    if !(0.0..=90.0).contains(&v) {
                        return schema(format!("angle ({i}, {j}) = {v} outside [0, 90]"));
                    }
                }
            }
            if let (Some(r), Some(a), Some(m)) = (rows.relative_accuracy[i], rows.negentropy[i], rows.mc_negentropy[i])
            {
                if r != a / m {
                    return schema(format!(
                        "relative accuracy of `{}` is not negentropy / mc_negentropy",
                        self.labels[i]
                    ));
                }
            }
            if let Some(b) = &self.bases[i] {
                if b.len() != self.d || b.iter().any(|c| c.len() != b[0].len()) {
                    return schema(format!("basis of `{}` is not p x d", self.labels[i]));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }
}
