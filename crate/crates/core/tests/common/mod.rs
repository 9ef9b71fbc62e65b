#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ppgmm::gmm::{CovarianceModel, GaussianMixture};
use ppgmm::rng::{seeded, standard_normal, uniform, SeededRng};

pub fn rng(seed: u64) -> SeededRng {
    seeded(seed)
}

pub fn random_spd(p: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| standard_normal::<f64, _>(rng));
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.2
}

/// Random full-covariance mixture with well separated but overlapping components.
pub fn random_mixture(g: usize, p: usize, rng: &mut SeededRng) -> GaussianMixture<f64> {
    let raw: Vec<f64> = (0..g).map(|_| uniform(rng, 0.2, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..g)
        .map(|_| DVector::from_fn(p, |_, _| 2.0 * standard_normal::<f64, _>(rng)))
        .collect();
    let covs = (0..g).map(|_| random_spd(p, rng)).collect();
    GaussianMixture::new(weights, means, covs, CovarianceModel::VVV).unwrap()
}

pub fn single_gaussian(p: usize, rng: &mut SeededRng) -> GaussianMixture<f64> {
    random_mixture(1, p, rng)
}

/// Gram–Schmidt on a random Gaussian matrix.
pub fn random_basis(p: usize, d: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, d, |_, _| standard_normal::<f64, _>(rng));
    let mut q: DMatrix<f64> = DMatrix::zeros(p, d);
    for j in 0..d {
        let mut v = a.column(j).into_owned();
        for k in 0..j {
            let proj = q.column(k).dot(&v);
            v -= q.column(k) * proj;
        }
        let norm = v.norm();
        q.set_column(j, &(v / norm));
    }
    q
}

/// Uniformly random orthogonal `d x d` matrix.
pub fn random_rotation(d: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    random_basis(d, d, rng)
}
