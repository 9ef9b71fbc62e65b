//! Gaussian mixture densities: evaluation, moments, sampling, EM fitting
//! under parsimonious covariance constraints and BIC model selection.

use crate::data::{Dataset, PreprocessMode, Preprocessor};
use crate::linalg::{self, cholesky_lower, inverse_pd, log_det_from_cholesky, symmetrize};
use crate::rng::{self, seeded, substream};
use crate::scalar::log_sum_exp;
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Covariance constraint family, named by volume / shape / orientation
/// (E = equal across components, V = varying, I = identity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CovarianceModel {
    /// `Σ_g = λ I`
    EII,
    /// `Σ_g = λ_g I`
    VII,
    /// `Σ_g = Δ`, one diagonal matrix shared by all components
    EEI,
    /// `Σ_g = Δ_g`, per-component diagonal
    VVI,
    /// `Σ_g = Σ`, one full matrix shared by all components
    EEE,
    /// unconstrained
    VVV,
}

impl CovarianceModel {
    pub const ALL: [CovarianceModel; 6] = [
        CovarianceModel::EII,
        CovarianceModel::VII,
        CovarianceModel::EEI,
        CovarianceModel::VVI,
        CovarianceModel::EEE,
        CovarianceModel::VVV,
    ];

    pub const DIAGONAL: [CovarianceModel; 4] = [
        CovarianceModel::EII,
        CovarianceModel::VII,
        CovarianceModel::EEI,
        CovarianceModel::VVI,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Self::EII => "EII",
            Self::VII => "VII",
            Self::EEI => "EEI",
            Self::VVI => "VVI",
            Self::EEE => "EEE",
            Self::VVV => "VVV",
        }
    }

    pub fn is_diagonal(self) -> bool {
        !matches!(self, Self::EEE | Self::VVV)
    }

    pub fn is_spherical(self) -> bool {
        matches!(self, Self::EII | Self::VII)
    }

    /// All components share one covariance matrix.
    pub fn is_shared(self) -> bool {
        matches!(self, Self::EII | Self::EEI | Self::EEE)
    }

    /// Number of free covariance parameters.
    pub fn covariance_params(self, g: usize, p: usize) -> usize {
        match self {
            Self::EII => 1,
            Self::VII => g,
            Self::EEI => p,
            Self::VVI => g * p,
            Self::EEE => p * (p + 1) / 2,
            Self::VVV => g * p * (p + 1) / 2,
        }
    }

    /// Family that the image of a constrained mixture falls in after an
    /// orthonormal projection. Spherical and full families are preserved;
    /// diagonal structure is not.
    pub fn after_projection(self) -> Self {
        match self {
            Self::EEI => Self::EEE,
            Self::VVI => Self::VVV,
            other => other,
        }
    }
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for CovarianceModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariance model `{s}`")))
    }
}

/// Free parameters of a `g`-component mixture in `p` dimensions.
pub fn n_params(model: CovarianceModel, g: usize, p: usize) -> usize {
    (g - 1) + g * p + model.covariance_params(g, p)
}

/// `2 loglik - k log n`; larger is better.
pub fn bic<T: Real>(loglik: T, n_params: usize, n: usize) -> T {
    loglik + loglik - T::from_count(n_params) * T::from_count(n).ln()
}

/// One Gaussian component with its cached factorization.
#[derive(Debug, Clone)]
pub struct Component<T: Real> {
    mean: DVector<T>,
    covariance: DMatrix<T>,
    chol: DMatrix<T>,
    precision: DMatrix<T>,
    log_norm: T,
}

impl<T: Real> Component<T> {
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self> {
        let p = mean.len();
        if covariance.shape() != (p, p) {
            return Err(Error::Dimension(format!(
                "mean has length {p} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidArgument("component mean is not finite".into()));
        }
        if linalg::asymmetry(&covariance) > T::lit(1e-8) {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let covariance = symmetrize(&covariance);
        let chol = cholesky_lower(&covariance, "component covariance")?;
        let log_det = log_det_from_cholesky(&chol);
        let precision = inverse_pd(&chol);
        let log_norm = -(T::from_count(p) * T::two_pi().ln() + log_det) * T::lit(0.5);
        Ok(Self {
            mean,
            covariance,
            chol,
            precision,
            log_norm,
        })
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky(&self) -> &DMatrix<T> {
        &self.chol
    }

    pub fn precision(&self) -> &DMatrix<T> {
        &self.precision
    }

    pub fn log_det(&self) -> T {
        log_det_from_cholesky(&self.chol)
    }

    pub fn log_pdf(&self, x: &DVector<T>) -> T {
        let diff = x - &self.mean;
        let y = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - y.norm_squared() * T::lit(0.5)
    }

    /// `log φ` for every row of `x` (`n x p`).
    pub fn log_pdf_rows(&self, x: &DMatrix<T>) -> Vec<T> {
        let (n, p) = x.shape();
        let xs = x.as_slice();
        let l = self.chol.as_slice();
        let mu = self.mean.as_slice();
        let half = T::lit(0.5);
        let mut y = vec![T::zero(); p];
        (0..n)
            .map(|i| {
                let mut q = T::zero();
                for j in 0..p {
                    let mut s = xs[i + j * n] - mu[j];
                    for k in 0..j {
                        s -= l[j + k * p] * y[k];
                    }
                    y[j] = s / l[j + j * p];
                    q += y[j] * y[j];
                }
                self.log_norm - q * half
            })
            .collect()
    }
}

/// Finite mixture of multivariate Gaussians, `f(x) = Σ π_g φ(x; μ_g, Σ_g)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture<T: Real> {
    weights: Vec<T>,
    log_weights: Vec<T>,
    components: Vec<Component<T>>,
    model: CovarianceModel,
}

impl<T: Real> GaussianMixture<T> {
    /// Validates and assembles a mixture. Weights must be nonnegative, not
    /// all zero and sum to one; covariances must be symmetric positive
    /// definite.
    pub fn new(
        weights: Vec<T>,
        means: Vec<DVector<T>>,
        covariances: Vec<DMatrix<T>>,
        model: CovarianceModel,
    ) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if means.len() != g || covariances.len() != g {
            return Err(Error::Dimension(format!(
                "{g} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let p = means[0].len();
        if p == 0 || means.iter().any(|m| m.len() != p) {
            return Err(Error::Dimension("component means differ in length".into()));
        }
        if weights.iter().any(|w| !w.finite() || *w < T::zero()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        let tol = T::lit(1e-12).max(T::eps() * T::from_count(16 * g));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let components = means
            .into_iter()
            .zip(covariances)
            .map(|(m, s)| Component::new(m, s))
            .collect::<Result<Vec<_>>>()?;
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
            model,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    pub fn component(&self, g: usize) -> &Component<T> {
        &self.components[g]
    }

    pub fn means(&self) -> Vec<DVector<T>> {
        self.components.iter().map(|c| c.mean.clone()).collect()
    }

    pub fn covariances(&self) -> Vec<DMatrix<T>> {
        self.components.iter().map(|c| c.covariance.clone()).collect()
    }

    pub fn covariance_model(&self) -> CovarianceModel {
        self.model
    }

    pub fn n_params(&self) -> usize {
        n_params(self.model, self.n_components(), self.dim())
    }

    fn check_point(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has length {}, mixture dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `log π_g + log φ_g(x)` for every component.
    pub fn weighted_log_pdfs(&self, x: &DVector<T>) -> Vec<T> {
        self.components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| *lw + c.log_pdf(x))
            .collect()
    }

    /// `log f(x)` through log-sum-exp.
    pub fn log_density(&self, x: &DVector<T>) -> Result<T> {
        self.check_point(x)?;
        Ok(log_sum_exp(&self.weighted_log_pdfs(x)))
    }

    pub fn density(&self, x: &DVector<T>) -> Result<T> {
        Ok(self.log_density(x)?.exp())
    }

    /// `log f` for every row of `x`.
    pub fn log_density_rows(&self, x: &DMatrix<T>) -> Result<Vec<T>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "data has {} columns, mixture dimension is {}",
                x.ncols(),
                self.dim()
            )));
        }
        let per_component: Vec<Vec<T>> = self.components.iter().map(|c| c.log_pdf_rows(x)).collect();
        let mut buf = vec![T::zero(); self.n_components()];
        Ok((0..x.nrows())
            .map(|i| {
                for (g, b) in buf.iter_mut().enumerate() {
                    *b = self.log_weights[g] + per_component[g][i];
                }
                log_sum_exp(&buf)
            })
            .collect())
    }

    /// `∇f(x) = Σ π_g φ_g(x) Σ_g⁻¹ (μ_g − x)`.
    pub fn gradient_density(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_point(x)?;
        let mut grad = DVector::zeros(self.dim());
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let w = (*lw + c.log_pdf(x)).exp();
            grad += (&c.precision * (&c.mean - x)) * w;
        }
        Ok(grad)
    }

    /// Overall mean and covariance (law of total covariance).
    pub fn moments(&self) -> (DVector<T>, DMatrix<T>) {
        let p = self.dim();
        let mut mean = DVector::zeros(p);
        for (c, &w) in self.components.iter().zip(&self.weights) {
            mean += &c.mean * w;
        }
        let mut cov = DMatrix::zeros(p, p);
        for (c, &w) in self.components.iter().zip(&self.weights) {
            let d = &c.mean - &mean;
            cov += (&c.covariance + &d * d.transpose()) * w;
        }
        (mean, symmetrize(&cov))
    }

    /// Draws `n` points; returns the `n x p` sample and the 0-based component
    /// of origin of each row.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DMatrix<T>, Vec<usize>) {
        let p = self.dim();
        let mut values = DMatrix::zeros(n, p);
        let mut origin = Vec::with_capacity(n);
        let mut z = DVector::zeros(p);
        for i in 0..n {
            let g = rng::categorical(rng, &self.weights);
            for k in 0..p {
                z[k] = rng::standard_normal(rng);
            }
            let c = &self.components[g];
            let x = &c.mean + &c.chol * &z;
            values.set_row(i, &x.transpose());
            origin.push(g);
        }
        (values, origin)
    }

    /// Seeded sample with 1-based component labels.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let (values, origin) = self.sample_with(n, &mut seeded(seed));
        let labels = origin.into_iter().map(|g| (g + 1).to_string()).collect();
        let names = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        Dataset::new(values, names, Some(labels))
    }

    /// Whether every covariance satisfies the constraint of `model` to
    /// within `tol` (relative to the largest covariance entry).
    pub fn satisfies_constraints(&self, tol: T) -> bool {
        let scale = self
            .components
            .iter()
            .map(|c| c.covariance.amax())
            .fold(T::zero(), |a, b| a.max(b))
            .max(T::min_positive_value());
        let close = |a: &DMatrix<T>, b: &DMatrix<T>| (a - b).amax() <= tol * scale;
        let p = self.dim();
        let first = &self.components[0].covariance;
        self.components.iter().all(|c| {
            let s = &c.covariance;
            let diag = DMatrix::from_diagonal(&s.diagonal());
            let structural = match self.model {
                CovarianceModel::EII | CovarianceModel::VII => {
                    let lambda = s.trace() / T::from_count(p);
                    close(s, &(DMatrix::identity(p, p) * lambda))
                }
                CovarianceModel::EEI | CovarianceModel::VVI => close(s, &diag),
                CovarianceModel::EEE | CovarianceModel::VVV => true,
            };
            let shared = !self.model.is_shared() || close(s, first);
            structural && shared
        })
    }
}

/// Convergence and restart settings for EM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-8,
        }
    }
}

/// How EM is started.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Farthest-point seeding refined by k-means, repeated `restarts` times
    /// from different random first centres; the run with the largest final
    /// log-likelihood wins.
    FarthestPoint { restarts: usize },
    /// Hard partition (0-based component per row) used for the first M-step.
    Partition(Vec<usize>),
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::FarthestPoint { restarts: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T: Real> {
    pub model: GaussianMixture<T>,
    pub loglik: T,
    pub n_params: usize,
    pub bic: T,
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<T>,
}

impl<T: Real> FitReport<T> {
    pub fn n_components(&self) -> usize {
        self.model.n_components()
    }

    pub fn covariance_model(&self) -> CovarianceModel {
        self.model.covariance_model()
    }
}

struct EmData<'a, T: Real> {
    x: &'a DMatrix<T>,
    floor: T,
}

/// Fits a `g`-component mixture with covariance family `model` by EM.
pub fn em_fit<T: Real>(
    data: &Dataset<T>,
    g: usize,
    model: CovarianceModel,
    init: &InitStrategy,
    seed: u64,
    options: &EmOptions,
) -> Result<FitReport<T>> {
    let n = data.n();
    if g == 0 {
        return Err(Error::InvalidArgument("number of components must be at least 1".into()));
    }
    if n <= g {
        return Err(Error::InvalidArgument(format!(
            "need more than {g} observations, got {n}"
        )));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let x = data.values();
    let mean_var = {
        let means = linalg::column_means(x);
        let mut acc = T::zero();
        for (j, col) in x.column_iter().enumerate() {
            acc += col.iter().fold(T::zero(), |a, &v| a + (v - means[j]) * (v - means[j])) / T::from_count(n);
        }
        acc / T::from_count(x.ncols())
    };
    let floor = T::lit(1e-8) * mean_var.max(T::min_positive_value());
    let em = EmData { x, floor };

    match init {
        InitStrategy::Partition(labels) => {
            if labels.len() != n || labels.iter().any(|&l| l >= g) {
                return Err(Error::InvalidArgument("partition does not match data".into()));
            }
            run_em(&em, g, model, labels, options)
        }
        InitStrategy::FarthestPoint { restarts } => {
            let restarts = if g == 1 { 1 } else { (*restarts).max(1) };
            let mut best: Option<FitReport<T>> = None;
            let mut seen: Vec<Vec<usize>> = Vec::new();
            let mut last_err = None;
            for r in 0..restarts {
                let mut rng = substream(seed, r as u64);
                let labels = kmeans_partition(x, g, &mut rng);
                if seen.contains(&labels) {
                    continue;
                }
                seen.push(labels.clone());
                match run_em(&em, g, model, &labels, options) {
                    Ok(fit) => {
                        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                            best = Some(fit);
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            best.ok_or_else(|| last_err.unwrap_or_else(|| Error::FitFailed("no restart succeeded".into())))
        }
    }
}

/// Farthest-point seeding (random first centre) followed by Lloyd iterations.
fn kmeans_partition<T: Real, R: Rng + ?Sized>(x: &DMatrix<T>, g: usize, rng: &mut R) -> Vec<usize> {
    let n = x.nrows();
    let rows: Vec<DVector<T>> = (0..n).map(|i| x.row(i).transpose()).collect();
    let mut centres = vec![rows[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<T> = rows.iter().map(|r| (r - &centres[0]).norm_squared()).collect();
    while centres.len() < g {
        let (far, _) = nearest.iter().enumerate().fold(
            (0, T::lit(-1.0)),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        );
        let c = rows[far].clone();
        for (d, r) in nearest.iter_mut().zip(&rows) {
            *d = (*d).min((r - &c).norm_squared());
        }
        centres.push(c);
    }

    let mut labels = vec![0; n];
    for _ in 0..50 {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let mut best = (0, T::lit(f64::INFINITY));
            for (k, c) in centres.iter().enumerate() {
                let d = (r - c).norm_squared();
                if d < best.1 {
                    best = (k, d);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }
        let p = x.ncols();
        let mut sums = vec![DVector::zeros(p); g];
        let mut counts = vec![0usize; g];
        for (r, &l) in rows.iter().zip(&labels) {
            sums[l] += r;
            counts[l] += 1;
        }
        for k in 0..g {
            if counts[k] > 0 {
                centres[k] = &sums[k] / T::from_count(counts[k]);
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn run_em<T: Real>(
    em: &EmData<'_, T>,
    g: usize,
    model: CovarianceModel,
    labels: &[usize],
    options: &EmOptions,
) -> Result<FitReport<T>> {
    let n = em.x.nrows();
    let mut resp = DMatrix::zeros(n, g);
    for (i, &l) in labels.iter().enumerate() {
        resp[(i, l)] = T::one();
    }
    let mut mixture = m_step(em, &resp, model)?;
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;
    let tol = T::lit(options.tol);
    for _ in 0..options.max_iter.max(1) {
        let loglik = e_step(&mixture, em.x, &mut resp)?;
        if !loglik.finite() {
            return Err(Error::FitFailed(format!(
                "{} G={g}: log-likelihood is not finite",
                model.code()
            )));
        }
        let prev = trace.last().copied();
        trace.push(loglik);
        if let Some(prev) = prev {
            if (loglik - prev).abs() <= tol * loglik.abs() {
                converged = true;
                break;
            }
        }
        if trace.len() == options.max_iter {
            break;
        }
        mixture = m_step(em, &resp, model)?;
    }
    let loglik = *trace.last().expect("at least one E-step");
    let k = n_params(model, g, em.x.ncols());
    Ok(FitReport {
        bic: bic(loglik, k, n),
        model: mixture,
        loglik,
        n_params: k,
        iterations: trace.len(),
        converged,
        loglik_trace: trace,
    })
}

/// Fills `resp` with posterior membership probabilities and returns the
/// log-likelihood.
fn e_step<T: Real>(mixture: &GaussianMixture<T>, x: &DMatrix<T>, resp: &mut DMatrix<T>) -> Result<T> {
    let g = mixture.n_components();
    let per_component: Vec<Vec<T>> = mixture.components.iter().map(|c| c.log_pdf_rows(x)).collect();
    let mut buf = vec![T::zero(); g];
    let mut loglik = T::zero();
    for i in 0..x.nrows() {
        for k in 0..g {
            buf[k] = mixture.log_weights[k] + per_component[k][i];
        }
        let lf = log_sum_exp(&buf);
        loglik += lf;
        for k in 0..g {
            resp[(i, k)] = (buf[k] - lf).exp();
        }
    }
    Ok(loglik)
}

/// Posterior membership probabilities (`n x G`) of the rows of `x`.
pub fn responsibilities<T: Real>(mixture: &GaussianMixture<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.ncols() != mixture.dim() {
        return Err(Error::Dimension("data and mixture dimensions differ".into()));
    }
    let mut resp = DMatrix::zeros(x.nrows(), mixture.n_components());
    e_step(mixture, x, &mut resp)?;
    Ok(resp)
}

fn m_step<T: Real>(em: &EmData<'_, T>, resp: &DMatrix<T>, model: CovarianceModel) -> Result<GaussianMixture<T>> {
    let (n, p) = em.x.shape();
    let g = resp.ncols();
    let nf = T::from_count(n);
    let min_weight = T::one() / (T::lit(10.0) * nf);

    let counts: Vec<T> = resp.column_iter().map(|c| c.sum()).collect();
    let mut weights = Vec::with_capacity(g);
    for (k, &nk) in counts.iter().enumerate() {
        let w = nk / nf;
        if !(w >= min_weight) {
            return Err(Error::FitFailed(format!(
                "{} G={g}: component {} weight {w} fell below 1/(10n)",
                model.code(),
                k + 1
            )));
        }
        weights.push(w);
    }
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    for w in &mut weights {
        *w /= total;
    }

    let xs = em.x.as_slice();
    let means: Vec<DVector<T>> = (0..g)
        .map(|k| {
            let r = resp.column(k);
            let r = r.as_slice();
            DVector::from_fn(p, |j, _| {
                let col = &xs[j * n..(j + 1) * n];
                col.iter().zip(r).fold(T::zero(), |a, (&x, &w)| a + w * x) / counts[k]
            })
        })
        .collect();

    // Weighted scatter matrices W_k (or only their diagonals).
    let scatter = |k: usize| -> DMatrix<T> {
        let r = resp.column(k);
        let r = r.as_slice();
        let mut centred = em.x.clone();
        for (j, col) in centred.as_mut_slice().chunks_exact_mut(n).enumerate() {
            let mu = means[k][j];
            for (v, &w) in col.iter_mut().zip(r) {
                *v = (*v - mu) * w.sqrt();
            }
        }
        if model.is_diagonal() {
            DMatrix::from_diagonal(&DVector::from_iterator(
                p,
                centred
                    .as_slice()
                    .chunks_exact(n)
                    .map(|c| c.iter().fold(T::zero(), |a, &v| a + v * v)),
            ))
        } else {
            symmetrize(&centred.tr_mul(&centred))
        }
    };
    let scatters: Vec<DMatrix<T>> = (0..g).map(scatter).collect();
    let pooled = || scatters.iter().fold(DMatrix::zeros(p, p), |a, w| a + w);
    let pf = T::from_count(p);

    let covariances: Vec<DMatrix<T>> = match model {
        CovarianceModel::EII => {
            let lambda = pooled().trace() / (nf * pf);
            vec![DMatrix::identity(p, p) * lambda.max(em.floor); g]
        }
        CovarianceModel::VII => scatters
            .iter()
            .zip(&counts)
            .map(|(w, &nk)| DMatrix::identity(p, p) * (w.trace() / (nk * pf)).max(em.floor))
            .collect(),
        CovarianceModel::EEI => {
            let d = pooled().diagonal().map(|v| (v / nf).max(em.floor));
            vec![DMatrix::from_diagonal(&d); g]
        }
        CovarianceModel::VVI => scatters
            .iter()
            .zip(&counts)
            .map(|(w, &nk)| DMatrix::from_diagonal(&w.diagonal().map(|v| (v / nk).max(em.floor))))
            .collect(),
        CovarianceModel::EEE => vec![clamp_eigenvalues(pooled() / nf, em.floor); g],
        CovarianceModel::VVV => scatters
            .iter()
            .zip(&counts)
            .map(|(w, &nk)| clamp_eigenvalues(w / nk, em.floor))
            .collect(),
    };

    GaussianMixture::new(weights, means, covariances, model).map_err(|e| match e {
        Error::NotPositiveDefinite(_) => Error::FitFailed(format!(
            "{} G={g}: covariance not positive definite after regularisation",
            model.code()
        )),
        other => other,
    })
}

fn clamp_eigenvalues<T: Real>(s: DMatrix<T>, floor: T) -> DMatrix<T> {
    let s = symmetrize(&s);
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return s;
    }
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clamped) * v.transpose()))
}

/// One row of a model-selection table.
#[derive(Debug, Clone)]
pub struct SelectionEntry<T: Real> {
    pub g: usize,
    pub model: CovarianceModel,
    pub outcome: std::result::Result<FitReport<T>, String>,
}

#[derive(Debug, Clone)]
pub struct ModelSelection<T: Real> {
    pub best: FitReport<T>,
    /// Every attempted `(G, model)` pair in `G`-major, then enum order.
    pub table: Vec<SelectionEntry<T>>,
}

/// Fits every `(G, model)` pair and keeps the fit with the largest BIC.
/// Ties go to fewer parameters, then smaller `G`, then enum order.
pub fn select_model<T: Real>(
    data: &Dataset<T>,
    g_range: std::ops::RangeInclusive<usize>,
    models: &[CovarianceModel],
    seed: u64,
    options: &EmOptions,
) -> Result<ModelSelection<T>> {
    if g_range.is_empty() || models.is_empty() {
        return Err(Error::InvalidArgument("empty component range or model list".into()));
    }
    let pairs: Vec<(usize, CovarianceModel)> = g_range.flat_map(|g| models.iter().map(move |&m| (g, m))).collect();
    let init = InitStrategy::default();
    let table: Vec<SelectionEntry<T>> = pairs
        .par_iter()
        .map(|&(g, model)| SelectionEntry {
            g,
            model,
            outcome: em_fit(data, g, model, &init, seed, options).map_err(|e| e.to_string()),
        })
        .collect();

    let mut best: Option<&FitReport<T>> = None;
    for entry in &table {
        let Ok(fit) = &entry.outcome else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                if fit.bic != b.bic {
                    fit.bic > b.bic
                } else {
                    (fit.n_params, fit.n_components(), fit.covariance_model())
                        < (b.n_params, b.n_components(), b.covariance_model())
                }
            }
        };
        if better {
            best = Some(fit);
        }
    }
    match best {
        Some(b) => Ok(ModelSelection { best: b.clone(), table }),
        None => {
            let report = table
                .iter()
                .map(|e| {
                    format!(
                        "  {} G={}: {}",
                        e.model,
                        e.g,
                        e.outcome.as_ref().err().map(String::as_str).unwrap_or("")
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Err(Error::AllFitsFailed(report))
        }
    }
}

/// Current version of the model JSON document.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Serialized mixture together with the preprocessing that produced the
/// data it was fitted on. Covariances are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub parameterization: CovarianceModel,
    pub dimension: usize,
    pub components: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<PreprocessingDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessingDocument {
    pub mode: PreprocessMode,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ModelDocument {
    pub fn from_model<T: Real>(model: &GaussianMixture<T>, pre: Option<&Preprocessor<T>>) -> Self {
        let p = model.dim();
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            parameterization: model.covariance_model(),
            dimension: p,
            components: model.n_components(),
            weights: model.weights().iter().map(|w| w.as_f64()).collect(),
            means: model
                .components()
                .iter()
                .map(|c| c.mean().iter().map(|v| v.as_f64()).collect())
                .collect(),
            covariances: model
                .components()
                .iter()
                .map(|c| {
                    let s = c.covariance();
                    (0..p).flat_map(|i| (0..p).map(move |j| s[(i, j)].as_f64())).collect()
                })
                .collect(),
            preprocessing: pre.map(|pre| PreprocessingDocument {
                mode: pre.mode,
                mean: pre.mean.iter().map(|v| v.as_f64()).collect(),
                scale: pre.scale.iter().map(|v| v.as_f64()).collect(),
            }),
            feature_names: None,
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<GaussianMixture<T>> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let (p, g) = (self.dimension, self.components);
        if self.weights.len() != g || self.means.len() != g || self.covariances.len() != g {
            return Err(Error::Schema("component count does not match arrays".into()));
        }
        if self.means.iter().any(|m| m.len() != p) || self.covariances.iter().any(|c| c.len() != p * p) {
            return Err(Error::Schema("dimension does not match arrays".into()));
        }
        GaussianMixture::new(
            self.weights.iter().map(|&w| T::lit(w)).collect(),
            self.means
                .iter()
                .map(|m| DVector::from_iterator(p, m.iter().map(|&v| T::lit(v))))
                .collect(),
            self.covariances
                .iter()
                .map(|c| DMatrix::from_row_iterator(p, p, c.iter().map(|&v| T::lit(v))))
                .collect(),
            self.parameterization,
        )
    }

    pub fn preprocessor<T: Real>(&self) -> Result<Option<Preprocessor<T>>> {
        self.preprocessing
            .as_ref()
            .map(|d| {
                if d.mean.len() != self.dimension {
                    return Err(Error::Schema("preprocessing length does not match dimension".into()));
                }
                Preprocessor::from_parts(
                    d.mode,
                    DVector::from_iterator(d.mean.len(), d.mean.iter().map(|&v| T::lit(v))),
                    DVector::from_iterator(d.scale.len(), d.scale.iter().map(|&v| T::lit(v))),
                )
            })
            .transpose()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn normal_1d(mean: f64, var: f64) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    fn two_point_1d() -> GaussianMixture<f64> {
        let (m1, s1) = normal_1d(-1.0, 1.0);
        let (m2, s2) = normal_1d(1.0, 1.0);
        GaussianMixture::new(vec![0.5, 0.5], vec![m1, m2], vec![s1, s2], CovarianceModel::EII).unwrap()
    }

    #[test]
    fn standard_normal_log_density_at_mode() {
        let (m, s) = normal_1d(0.0, 1.0);
        let g = GaussianMixture::new(vec![1.0], vec![m], vec![s], CovarianceModel::EII).unwrap();
        let v = g.log_density(&DVector::from_element(1, 0.0)).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((v + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn symmetric_pair_log_density() {
        let v = two_point_1d().log_density(&DVector::from_element(1, 0.0)).unwrap();
        assert!((v - (-0.5 * (2.0 * PI).ln() - 0.5)).abs() < 1e-15);
        assert!((v + 1.418939).abs() < 1e-6);
    }

    #[test]
    fn gradient_examples() {
        let (m, s) = normal_1d(0.0, 1.0);
        let g = GaussianMixture::new(vec![1.0], vec![m], vec![s], CovarianceModel::EII).unwrap();
        assert_eq!(g.gradient_density(&DVector::from_element(1, 0.0)).unwrap()[0], 0.0);
        let d = g.gradient_density(&DVector::from_element(1, 1.0)).unwrap()[0];
        let phi1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((d + phi1).abs() < 1e-15);
        assert!((d + 0.241971).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        let g = two_point_1d();
        assert!(matches!(g.log_density(&DVector::zeros(2)), Err(Error::Dimension(_))));
        assert!(matches!(
            g.gradient_density(&DVector::zeros(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn invalid_mixtures_are_rejected() {
        let (m, s) = normal_1d(0.0, 1.0);
        assert!(GaussianMixture::new(vec![0.7], vec![m.clone()], vec![s.clone()], CovarianceModel::EII).is_err());
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            GaussianMixture::new(vec![1.0], vec![m], vec![bad], CovarianceModel::EII),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(n_params(CovarianceModel::EII, 1, 2), 3);
        assert_eq!(n_params(CovarianceModel::VVV, 2, 3), 19);
        assert_eq!(n_params(CovarianceModel::VVI, 3, 21), 128);
    }

    #[test]
    fn bic_arithmetic() {
        let v = bic(-100.0, 5, 50);
        assert!((v - (-200.0 - 5.0 * 50f64.ln())).abs() < 1e-12);
        assert!((v + 219.560).abs() < 1e-3);
    }

    #[test]
    fn moments_of_symmetric_pair() {
        let g = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0])],
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            CovarianceModel::EII,
        )
        .unwrap();
        let (m, s) = g.moments();
        assert!(m.amax() < 1e-15);
        assert!((s - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn zero_weight_component_is_never_sampled() {
        let (m1, s1) = normal_1d(0.0, 1.0);
        let (m2, s2) = normal_1d(5.0, 1.0);
        let g = GaussianMixture::new(vec![1.0, 0.0], vec![m1, m2], vec![s1, s2], CovarianceModel::VII).unwrap();
        let d = g.sample(1000, 3).unwrap();
        assert!(d.labels().unwrap().iter().all(|l| l == "1"));
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let (m, s) = normal_1d(0.0, 1.0);
        let g = GaussianMixture::new(vec![1.0], vec![m], vec![s], CovarianceModel::EII).unwrap();
        let a = g.sample(100_000, 17).unwrap();
        assert_eq!(a, g.sample(100_000, 17).unwrap());
        let mean = a.values().column(0).sum() / 1e5;
        assert!(mean.abs() < 0.02);
    }

    #[test]
    fn g1_eii_closed_form() {
        let d = crate::data::simulate_triangle::<f64>(300, 3, 2).unwrap();
        let fit = em_fit(
            &d,
            1,
            CovarianceModel::EII,
            &InitStrategy::default(),
            0,
            &EmOptions::default(),
        )
        .unwrap();
        let sample_mean = linalg::column_means(d.values());
        assert!((fit.model.component(0).mean() - &sample_mean).amax() < 1e-10);
        let n = d.n() as f64;
        let mut var = 0.0;
        for j in 0..3 {
            let c = d.values().column(j);
            var += c.iter().map(|v| (v - sample_mean[j]).powi(2)).sum::<f64>() / n;
        }
        let lambda = fit.model.component(0).covariance()[(0, 0)];
        assert!((lambda - var / 3.0).abs() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let g = GaussianMixture::new(
            vec![0.1 + 0.2, 0.7 - 1e-17],
            vec![
                DVector::from_vec(vec![1.0 / 3.0, -2.0]),
                DVector::from_vec(vec![PI, 1e-300]),
            ],
            vec![
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0 / 7.0]),
                DMatrix::identity(2, 2) * 0.1,
            ],
            CovarianceModel::VVV,
        );
        // 0.1 + 0.2 + 0.7 is not exactly 1 in binary; the tolerance accepts it
        let g = g.unwrap();
        let doc = ModelDocument::from_model(&g, None);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(doc, back);
        let g2: GaussianMixture<f64> = back.to_model().unwrap();
        assert_eq!(g2.weights(), g.weights());
        for k in 0..2 {
            assert_eq!(g2.component(k).mean(), g.component(k).mean());
            assert_eq!(g2.component(k).covariance(), g.component(k).covariance());
        }
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let g = two_point_1d();
        let mut doc = ModelDocument::from_model(&g, None);
        doc.schema_version = 99;
        assert!(matches!(doc.to_model::<f64>(), Err(Error::Schema(_))));
    }
}
