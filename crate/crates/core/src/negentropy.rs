//! Differential entropy and negentropy of Gaussian mixtures.
//!
//! The entropy of a mixture has no closed form. Four estimators are offered:
//! plain Monte Carlo, the unscented transformation (UT), the variational
//! upper bound (VAR) and a second-order Taylor expansion of `log f` around
//! each component mean (SOTE). Negentropy is the entropy of the Gaussian with
//! the mixture's mean and covariance minus the mixture entropy. All values are
//! in nats.

use crate::gmm::{Component, GaussianMixture};
use crate::linalg::{log_det_pd, sym_eigen_desc};
use crate::rng::substream;
use crate::scalar::log_sum_exp;
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Monte Carlo sample size used when none is given.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Rows drawn per independent random substream by [`entropy_mc`].
const MC_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "UT")]
    Ut,
    #[serde(rename = "VAR")]
    Var,
    #[serde(rename = "SOTE")]
    Sote,
}

impl EstimatorKind {
    /// The deterministic, closed-form estimators.
    pub const CLOSED_FORM: [EstimatorKind; 3] = [EstimatorKind::Ut, EstimatorKind::Var, EstimatorKind::Sote];

    pub fn code(self) -> &'static str {
        match self {
            Self::Mc => "MC",
            Self::Ut => "UT",
            Self::Var => "VAR",
            Self::Sote => "SOTE",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MC" => Ok(Self::Mc),
            "UT" => Ok(Self::Ut),
            "VAR" => Ok(Self::Var),
            "SOTE" => Ok(Self::Sote),
            _ => Err(Error::InvalidArgument(format!("unknown estimator `{s}`"))),
        }
    }
}

/// Estimator together with its Monte Carlo settings (ignored by the
/// closed-form kinds).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: 0,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            kind: EstimatorKind::Mc,
            mc_samples: samples,
            mc_seed: seed,
        }
    }
}

impl From<EstimatorKind> for EstimatorSpec {
    fn from(kind: EstimatorKind) -> Self {
        Self::new(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegentropyEstimate<T: Real> {
    pub spec: EstimatorSpec,
    pub entropy: T,
    /// Entropy of the Gaussian with the mixture's covariance.
    pub gaussian_entropy: T,
    /// `gaussian_entropy - entropy`
    pub negentropy: T,
    pub mc_std_error: Option<T>,
}

/// `½ log((2πe)^d |Σ|)`.
pub fn gaussian_entropy<T: Real>(covariance: &DMatrix<T>) -> Result<T> {
    let d = T::from_count(covariance.nrows());
    let log_det = log_det_pd(covariance)?;
    Ok((d * (T::two_pi().ln() + T::one()) + log_det) * T::lit(0.5))
}

fn component_entropy<T: Real>(c: &Component<T>) -> T {
    let d = T::from_count(c.mean().len());
    (d * (T::two_pi().ln() + T::one()) + c.log_det()) * T::lit(0.5)
}

/// Monte Carlo entropy `-(1/S) Σ log f(z_i)` with `z_i` drawn from `model`,
/// and its standard error.
///
/// Draws are made in fixed-size chunks, each from its own substream of
/// `seed`, and partial sums are combined in chunk order, so the result is
/// bit-identical for any number of worker threads.
pub fn entropy_mc<T: Real>(model: &GaussianMixture<T>, samples: usize, seed: u64) -> Result<(T, T)> {
    if samples < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 2 samples".into()));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    // (count, mean, M2) of -log f per chunk
    let partial: Vec<Result<(usize, T, T)>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = MC_CHUNK.min(samples - k * MC_CHUNK);
            let mut rng = substream(seed, k as u64);
            let (z, _) = model.sample_with(len, &mut rng);
            let logf = model.log_density_rows(&z)?;
            let nf = T::from_count(len);
            let mean = logf.iter().fold(T::zero(), |a, &v| a - v) / nf;
            let m2 = logf.iter().fold(T::zero(), |a, &v| {
                let dv = -v - mean;
                a + dv * dv
            });
            Ok((len, mean, m2))
        })
        .collect();

    let (mut count, mut mean, mut m2) = (0usize, T::zero(), T::zero());
    for part in partial {
        let (nb, mb, m2b) = part?;
        let (na, nbf) = (T::from_count(count), T::from_count(nb));
        let total = na + nbf;
        let delta = mb - mean;
        mean += delta * nbf / total;
        m2 += m2b + delta * delta * na * nbf / total;
        count += nb;
    }
    let var = m2 / T::from_count(count - 1);
    let std_error = (var / T::from_count(count)).sqrt();
    if !mean.finite() {
        return Err(Error::Undefined("Monte Carlo entropy is not finite".into()));
    }
    Ok((mean, std_error))
}

/// The `2d` points `μ ± √(d λ_k) u_k`, `(λ_k, u_k)` being the eigenpairs of
/// the covariance. The `+` points come first, in descending eigenvalue order.
pub fn sigma_points<T: Real>(mean: &DVector<T>, covariance: &DMatrix<T>) -> Result<Vec<DVector<T>>> {
    let d = mean.len();
    if covariance.shape() != (d, d) {
        return Err(Error::Dimension("mean and covariance sizes differ".into()));
    }
    let (values, vectors) = sym_eigen_desc(covariance);
    if values.iter().any(|v| !(*v > T::zero())) {
        return Err(Error::NotPositiveDefinite("sigma-point covariance".into()));
    }
    let df = T::from_count(d);
    let offsets: Vec<DVector<T>> = values
        .iter()
        .enumerate()
        .map(|(k, &l)| vectors.column(k) * (df * l).sqrt())
        .collect();
    let mut points: Vec<DVector<T>> = offsets.iter().map(|o| mean + o).collect();
    points.extend(offsets.iter().map(|o| mean - o));
    Ok(points)
}

/// Unscented-transformation entropy:
/// `-(1/2d) Σ_g π_g Σ_k log f(z_gk)` over the sigma points of each component.
pub fn entropy_ut<T: Real>(model: &GaussianMixture<T>) -> Result<T> {
    let d = model.dim();
    let mut acc = T::zero();
    for (c, &w) in model.components().iter().zip(model.weights()) {
        if w == T::zero() {
            continue;
        }
        let mut inner = T::zero();
        for z in sigma_points(c.mean(), c.covariance())? {
            inner += log_sum_exp(&model.weighted_log_pdfs(&z));
        }
        acc += w * inner;
    }
    Ok(-acc / T::from_count(2 * d))
}

/// `KL(N(μ₀, Σ₀) ‖ N(μ₁, Σ₁))`.
pub fn kl_gaussian<T: Real>(mean0: &DVector<T>, cov0: &DMatrix<T>, mean1: &DVector<T>, cov1: &DMatrix<T>) -> Result<T> {
    let d = mean0.len();
    if mean1.len() != d || cov0.shape() != (d, d) || cov1.shape() != (d, d) {
        return Err(Error::Dimension("Gaussians of different dimension".into()));
    }
    let c0 = Component::new(mean0.clone(), cov0.clone())?;
    let c1 = Component::new(mean1.clone(), cov1.clone())?;
    Ok(kl_components(&c0, &c1))
}

fn kl_components<T: Real>(c0: &Component<T>, c1: &Component<T>) -> T {
    let d = T::from_count(c0.mean().len());
    let trace = c1.precision().component_mul(c0.covariance()).sum();
    let diff = c1.mean() - c0.mean();
    let maha = diff.dot(&(c1.precision() * &diff));
    (trace + maha - d + c1.log_det() - c0.log_det()) * T::lit(0.5)
}

/// Variational entropy bound
/// `Σ_g π_g h(φ_g) − Σ_g π_g log Σ_l π_l exp(−KL(φ_g ‖ φ_l))`.
///
/// This is an upper bound on the true entropy and is exact for a single
/// component.
pub fn entropy_var<T: Real>(model: &GaussianMixture<T>) -> Result<T> {
    let comps = model.components();
    let weights = model.weights();
    let log_w: Vec<T> = weights.iter().map(|w| w.ln()).collect();
    let mut h = T::zero();
    let mut buf = vec![T::zero(); comps.len()];
    for (g, cg) in comps.iter().enumerate() {
        if weights[g] == T::zero() {
            continue;
        }
        for (l, cl) in comps.iter().enumerate() {
            buf[l] = if l == g {
                log_w[l]
            } else {
                log_w[l] - kl_components(cg, cl)
            };
        }
        h += weights[g] * (component_entropy(cg) - log_sum_exp(&buf));
    }
    Ok(h)
}

/// Hessian of `log f` at `x`:
/// `Σ_g r_g [Σ_g⁻¹(μ_g − x)(μ_g − x)ᵀΣ_g⁻¹ − Σ_g⁻¹] − s sᵀ`, with
/// `r_g = π_g φ_g(x) / f(x)` and `s = ∇ log f(x) = Σ_g r_g Σ_g⁻¹(μ_g − x)`.
/// Equal to `(1/f) ∇²f − (1/f²) ∇f ∇fᵀ`, evaluated in log space.
pub fn hessian_log_density<T: Real>(model: &GaussianMixture<T>, x: &DVector<T>) -> Result<DMatrix<T>> {
    let log_terms = {
        if x.len() != model.dim() {
            return Err(Error::Dimension(format!(
                "point has length {}, mixture dimension is {}",
                x.len(),
                model.dim()
            )));
        }
        model.weighted_log_pdfs(x)
    };
    let log_f = log_sum_exp(&log_terms);
    if !(log_f > T::min_positive_value().ln()) {
        return Err(Error::NegligibleDensity {
            density: log_f.exp().as_f64(),
        });
    }
    let d = model.dim();
    let mut score = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for (c, lt) in model.components().iter().zip(&log_terms) {
        let r = (*lt - log_f).exp();
        if r == T::zero() {
            continue;
        }
        let v = c.precision() * (c.mean() - x);
        score += &v * r;
        second += (&v * v.transpose() - c.precision()) * r;
    }
    let h = second - &score * score.transpose();
    Ok(crate::linalg::symmetrize(&h))
}

/// Second-order Taylor entropy
/// `−Σ_g π_g [log f(μ_g) + ½ ⟨H(μ_g), Σ_g⟩]`, `H` the Hessian of `log f`
/// and `⟨A, B⟩ = Σ_ij a_ij b_ij`.
pub fn entropy_sote<T: Real>(model: &GaussianMixture<T>) -> Result<T> {
    let mut acc = T::zero();
    for (c, &w) in model.components().iter().zip(model.weights()) {
        if w == T::zero() {
            continue;
        }
        let log_f = log_sum_exp(&model.weighted_log_pdfs(c.mean()));
        let h = hessian_log_density(model, c.mean())?;
        let contraction = h.component_mul(c.covariance()).sum();
        acc += w * (log_f + contraction * T::lit(0.5));
    }
    Ok(-acc)
}

/// Entropy of `model` with the chosen estimator; the standard error is set
/// for Monte Carlo only.
pub fn entropy<T: Real>(model: &GaussianMixture<T>, spec: &EstimatorSpec) -> Result<(T, Option<T>)> {
    match spec.kind {
        EstimatorKind::Mc => {
            let (h, se) = entropy_mc(model, spec.mc_samples, spec.mc_seed)?;
            Ok((h, Some(se)))
        }
        EstimatorKind::Ut => Ok((entropy_ut(model)?, None)),
        EstimatorKind::Var => Ok((entropy_var(model)?, None)),
        EstimatorKind::Sote => Ok((entropy_sote(model)?, None)),
    }
}

/// Negentropy `h(N(μ_z, Σ_z)) − h(f)` with `Σ_z` the covariance implied by
/// the mixture parameters.
pub fn negentropy<T: Real>(model: &GaussianMixture<T>, spec: &EstimatorSpec) -> Result<NegentropyEstimate<T>> {
    let (_, cov) = model.moments();
    let gaussian = gaussian_entropy(&cov)?;
    let (h, se) = entropy(model, spec)?;
    let value = gaussian - h;
    if !value.finite() {
        return Err(Error::Undefined(format!("{} negentropy is not finite", spec.kind)));
    }
    Ok(NegentropyEstimate {
        spec: *spec,
        entropy: h,
        gaussian_entropy: gaussian,
        negentropy: value,
        mc_std_error: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::CovarianceModel;

    fn gauss_1d(m: f64, v: f64) -> GaussianMixture<f64> {
        GaussianMixture::new(
            vec![1.0],
            vec![DVector::from_element(1, m)],
            vec![DMatrix::from_element(1, 1, v)],
            CovarianceModel::EII,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_entropy_examples() {
        let h1 = gaussian_entropy(&DMatrix::from_element(1, 1, 1.0f64)).unwrap();
        assert!((h1 - 1.418939).abs() < 1e-6);
        let h2 = gaussian_entropy(&DMatrix::<f64>::identity(2, 2)).unwrap();
        assert!((h2 - 2.837877).abs() < 1e-6);
        let h4 = gaussian_entropy(&DMatrix::from_element(1, 1, 4.0f64)).unwrap();
        assert!((h4 - 2.112086).abs() < 1e-6);
        assert!(gaussian_entropy(&DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn sigma_point_examples() {
        let pts = sigma_points(&DVector::zeros(2), &DMatrix::<f64>::identity(2, 2)).unwrap();
        let r2 = 2f64.sqrt();
        let mut got: Vec<(f64, f64)> = pts.iter().map(|p| (p[0].abs(), p[1].abs())).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0].0).abs() < 1e-15 && (got[0].1 - r2).abs() < 1e-15);
        assert!((got[3].0 - r2).abs() < 1e-15 && got[3].1.abs() < 1e-15);
        let s: DVector<f64> = pts.iter().sum();
        assert!(s.amax() < 1e-15);

        let pts = sigma_points(&DVector::from_element(1, 3.0), &DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert_eq!(pts[0][0], 5.0);
        assert_eq!(pts[1][0], 1.0);
    }

    #[test]
    fn sigma_points_match_moments() {
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let pts = sigma_points(&mean, &cov).unwrap();
        let m: DVector<f64> = pts.iter().sum::<DVector<f64>>() / 6.0;
        assert!((&m - &mean).amax() < 1e-14);
        let c = pts
            .iter()
            .fold(DMatrix::zeros(3, 3), |a, p| a + (p - &mean) * (p - &mean).transpose())
            / 6.0;
        assert!((c - cov).amax() < 1e-10);
        assert!(sigma_points(&mean, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn kl_examples() {
        let z = DVector::from_element(1, 0.0f64);
        let one = DVector::from_element(1, 1.0);
        let i = DMatrix::from_element(1, 1, 1.0);
        let four = DMatrix::from_element(1, 1, 4.0);
        assert_eq!(kl_gaussian(&z, &i, &z, &i).unwrap(), 0.0);
        assert!((kl_gaussian(&z, &i, &one, &i).unwrap() - 0.5).abs() < 1e-15);
        let v = kl_gaussian(&z, &i, &z, &four).unwrap();
        assert!((v - 0.5 * (0.25 - 1.0 + 4f64.ln())).abs() < 1e-15);
        assert!((v - 0.318147).abs() < 1e-6);
    }

    #[test]
    fn single_gaussian_estimators_are_exact() {
        let g = gauss_1d(2.0, 3.0);
        let exact = gaussian_entropy(&DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert!((entropy_ut(&g).unwrap() - exact).abs() < 1e-12);
        assert_eq!(entropy_var(&g).unwrap(), exact);
        assert!((entropy_sote(&g).unwrap() - exact).abs() < 1e-12);
        let j = negentropy(&g, &EstimatorKind::Var.into()).unwrap();
        assert_eq!(j.negentropy, 0.0);
    }

    #[test]
    fn hessian_of_single_gaussian_is_minus_precision() {
        let g = GaussianMixture::new(
            vec![1.0],
            vec![DVector::from_vec(vec![1.0, 2.0])],
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])],
            CovarianceModel::VVV,
        )
        .unwrap();
        let prec = g.component(0).precision().clone();
        for x in [[0.0, 0.0], [3.0, -1.0], [1.0, 2.0]] {
            let h = hessian_log_density(&g, &DVector::from_vec(x.to_vec())).unwrap();
            assert!((h + &prec).amax() < 1e-12);
        }
    }

    #[test]
    fn hessian_off_diagonal_vanishes_at_mirror_midpoint() {
        let g = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])],
            vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            ],
            CovarianceModel::EEI,
        )
        .unwrap();
        let h: DMatrix<f64> = hessian_log_density(&g, &DVector::zeros(2)).unwrap();
        assert!(h[(0, 1)].abs() < 1e-15 && h[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn hessian_rejects_negligible_density() {
        let g = gauss_1d(0.0, 1e-4);
        assert!(matches!(
            hessian_log_density(&g, &DVector::from_element(1, 100.0)),
            Err(Error::NegligibleDensity { .. })
        ));
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let g = gauss_1d(0.0, 1.0);
        let a = entropy_mc(&g, 20_000, 5).unwrap();
        let b = entropy_mc(&g, 20_000, 5).unwrap();
        assert_eq!(a, b);
        assert!(entropy_mc(&g, 1, 5).is_err());
    }

    #[test]
    fn monte_carlo_thread_count_independent() {
        let g = gauss_1d(0.0, 1.0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| entropy_mc(&g, 50_000, 9).unwrap());
        let b = many.install(|| entropy_mc(&g, 50_000, 9).unwrap());
        assert_eq!(a, b);
    }
}
