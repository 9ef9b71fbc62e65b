mod common;

use common::{random_basis, random_mixture, random_rotation, rng};
use nalgebra::{DMatrix, DVector};
use ppgmm::data::Dataset;
use ppgmm::ga::{crossover_local_arithmetic, mutate_single_gene, mutate_uniform, selection_probabilities};
use ppgmm::gmm::{em_fit, CovarianceModel, EmOptions, InitStrategy};
use ppgmm::metrics::subspace_distance;
use ppgmm::negentropy::{negentropy, EstimatorKind, EstimatorSpec};
use ppgmm::projection::{angle_bounds, decode, encode, orthonormalize, project_mixture, AngleGenome, Basis};
use ppgmm::rng::uniform;
use proptest::prelude::*;

fn genome_strategy() -> impl Strategy<Value = AngleGenome<f64>> {
    (3usize..9, 1usize..4, any::<u64>()).prop_filter_map("d < p", |(p, d, seed)| {
        if d >= p {
            return None;
        }
        let mut r = rng(seed);
        let angles = angle_bounds::<f64>(p, d)
            .into_iter()
            .map(|(lo, hi)| uniform(&mut r, lo, hi))
            .collect();
        AngleGenome::new(angles, p, d).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoded_columns_have_unit_norm(genome in genome_strategy()) {
        let b = decode(&genome);
        for col in b.matrix().column_iter() {
            prop_assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn every_unit_vector_is_reachable(p in 2usize..10, seed in any::<u64>()) {
        let v = random_basis(p, 1, &mut rng(seed));
        let genome = encode(&v).unwrap();
        for ((lo, hi), a) in genome.bounds().iter().zip(genome.angles()) {
            prop_assert!(*lo <= *a && *a <= *hi);
        }
        let back = decode(&genome);
        prop_assert!((back.matrix() - v).amax() < 1e-10);
    }

    #[test]
    fn orthonormalization_keeps_the_span(p in 3usize..9, d in 1usize..3, seed in any::<u64>()) {
        prop_assume!(d < p);
        let mut r = rng(seed);
        let raw = DMatrix::from_fn(p, d, |_, _| uniform(&mut r, -1.0, 1.0));
        let q = orthonormalize(&Basis::external(raw.clone()).unwrap()).unwrap();
        prop_assert!(q.is_orthonormal());
        // raw lies in span(q): q qᵀ raw = raw
        let residual = q.matrix() * (q.matrix().transpose() * &raw) - &raw;
        prop_assert!(residual.amax() < 1e-10);
    }

    #[test]
    fn projection_commutes_with_moments(p in 2usize..6, g in 1usize..4, d in 1usize..3, seed in any::<u64>()) {
        prop_assume!(d < p);
        let mut r = rng(seed);
        let model = random_mixture(g, p, &mut r);
        let b = random_basis(p, d, &mut r);
        let projected = project_mixture(&model, &Basis::external(b.clone()).unwrap()).unwrap();
        let (mu, sigma) = model.moments();
        let (mu_z, sigma_z) = projected.moments();
        prop_assert!((mu_z - b.transpose() * mu).amax() < 1e-10);
        prop_assert!((sigma_z - b.transpose() * sigma * &b).amax() < 1e-10);
    }

    #[test]
    fn em_log_likelihood_never_decreases(g in 1usize..4, model_ix in 0usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let truth = random_mixture(3, 2, &mut r);
        let data: Dataset<f64> = truth.sample(150, seed).unwrap();
        let model = CovarianceModel::ALL[model_ix];
        if let Ok(fit) = em_fit(&data, g, model, &InitStrategy::default(), seed, &EmOptions::default()) {
            for w in fit.loglik_trace.windows(2) {
                prop_assert!(w[1] - w[0] >= -1e-8, "{} -> {}", w[0], w[1]);
            }
            prop_assert!(fit.model.satisfies_constraints(1e-8));
        }
    }

    #[test]
    fn subspace_distance_is_a_rotation_invariant_metric(p in 3usize..8, d in 1usize..3, seed in any::<u64>()) {
        prop_assume!(d < p);
        let mut r = rng(seed);
        let a = random_basis(p, d, &mut r);
        let b = random_basis(p, d, &mut r);
        let c = random_basis(p, d, &mut r);
        let q = random_rotation(d, &mut r);
        let basis = |m: &DMatrix<f64>| Basis::external(m.clone()).unwrap();
        let (ab, deg) = subspace_distance(&basis(&a), &basis(&b)).unwrap();
        let (ba, _) = subspace_distance(&basis(&b), &basis(&a)).unwrap();
        let (bc, _) = subspace_distance(&basis(&b), &basis(&c)).unwrap();
        let (ac, _) = subspace_distance(&basis(&a), &basis(&c)).unwrap();
        let (aq, _) = subspace_distance(&basis(&(&a * &q)), &basis(&b)).unwrap();
        let (aa, _) = subspace_distance(&basis(&a), &basis(&a)).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((0.0..=90.0 + 1e-9).contains(&deg));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!((aq - ab).abs() < 1e-10);
        prop_assert!(aa < 1e-10);
    }

    #[test]
    fn closed_form_negentropy_is_rotation_invariant(p in 3usize..6, g in 1usize..4, d in 1usize..3, seed in any::<u64>()) {
        prop_assume!(d < p);
        let mut r = rng(seed);
        let model = random_mixture(g, p, &mut r);
        let b = random_basis(p, d, &mut r);
        let q = random_rotation(d, &mut r);
        let m1 = project_mixture(&model, &Basis::external(b.clone()).unwrap()).unwrap();
        let m2 = project_mixture(&model, &Basis::external(&b * q).unwrap()).unwrap();
        for kind in EstimatorKind::CLOSED_FORM {
            let spec = EstimatorSpec::new(kind);
            let j1 = negentropy(&m1, &spec).unwrap().negentropy;
            let j2 = negentropy(&m2, &spec).unwrap().negentropy;
            prop_assert!((j1 - j2).abs() <= 1e-8, "{kind}: {j1} vs {j2}");
        }
    }

    #[test]
    fn selection_probabilities_form_a_distribution(
        fitness in prop::collection::vec(-5.0f64..5.0, 1..40),
        scaled in any::<bool>(),
    ) {
        let probs = selection_probabilities(&fitness, scaled.then_some(2.0)).unwrap();
        prop_assert!(probs.iter().all(|&q| q >= 0.0));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // fitter individuals are never less likely to be picked
        for i in 0..fitness.len() {
            for j in 0..fitness.len() {
                if fitness[i] > fitness[j] {
                    prop_assert!(probs[i] >= probs[j] - 1e-15);
                }
            }
        }
    }

    #[test]
    fn crossover_children_stay_between_parents(genome in genome_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let bounds = genome.bounds();
        let other: Vec<f64> = bounds.iter().map(|&(lo, hi)| uniform(&mut r, lo, hi)).collect();
        let (c1, c2) = crossover_local_arithmetic(genome.angles(), &other, &mut r);
        for i in 0..other.len() {
            let (a, b) = (genome.angles()[i], other[i]);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(lo - 1e-12 <= c1[i] && c1[i] <= hi + 1e-12);
            prop_assert!(lo - 1e-12 <= c2[i] && c2[i] <= hi + 1e-12);
            prop_assert!((c1[i] + c2[i] - a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mutation_stays_in_bounds(genome in genome_strategy(), seed in any::<u64>(), rate in 0.0f64..1.0) {
        let mut r = rng(seed);
        let bounds = genome.bounds();
        let mut a = genome.angles().to_vec();
        let mut b = genome.angles().to_vec();
        mutate_uniform(&mut a, rate, &bounds, &mut r);
        mutate_single_gene(&mut b, rate, &bounds, &mut r);
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            prop_assert!(lo <= a[i] && a[i] <= hi);
            prop_assert!(lo <= b[i] && b[i] <= hi);
        }
        let changed = b.iter().zip(genome.angles()).filter(|(x, y)| x != y).count();
        prop_assert!(changed <= 1);
    }
}

#[test]
fn single_gaussian_negentropy_is_zero_after_projection() {
    let mut r = rng(99);
    let model = random_mixture(1, 5, &mut r);
    let b = Basis::external(random_basis(5, 2, &mut r)).unwrap();
    let projected = project_mixture(&model, &b).unwrap();
    for kind in EstimatorKind::CLOSED_FORM {
        let j = negentropy(&projected, &EstimatorSpec::new(kind)).unwrap().negentropy;
        assert!(j.abs() < 1e-10, "{kind}: {j}");
    }
}

#[test]
fn projected_mixture_sample_moments_match_model() {
    let mut r = rng(3);
    let model = random_mixture(3, 4, &mut r);
    let b = random_basis(4, 2, &mut r);
    let projected = project_mixture(&model, &Basis::external(b.clone()).unwrap()).unwrap();
    let x = model.sample(50_000, 8).unwrap();
    let z = x.values() * &b;
    let mean = DVector::from_fn(2, |j, _| z.column(j).mean());
    let (mu, _) = projected.moments();
    assert!((mean - mu).amax() < 0.05);
}
