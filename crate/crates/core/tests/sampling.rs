//! Frequency checks of the stochastic GA operators against their stated
//! probabilities.

use ppgmm::ga::{mutate_single_gene, mutate_uniform, select_parents, selection_probabilities};
use ppgmm::rng::seeded;

#[test]
fn per_gene_mutation_rate_matches_probability() {
    let mut r = seeded(1);
    let bounds = vec![(0.0, 1.0); 20];
    let trials = 20_000;
    let mut changed = 0usize;
    for _ in 0..trials {
        let mut genes = vec![2.0; 20];
        mutate_uniform(&mut genes, 0.1, &bounds, &mut r);
        changed += genes.iter().filter(|&&g| g != 2.0).count();
    }
    let rate = changed as f64 / (trials * 20) as f64;
    // binomial standard error is about 4.7e-4
    assert!((rate - 0.1).abs() < 3e-3, "rate {rate}");
}

#[test]
fn per_individual_mutation_touches_one_gene_at_the_stated_rate() {
    let mut r = seeded(2);
    let bounds = vec![(0.0, 1.0); 12];
    let trials = 40_000;
    let mut mutated = 0usize;
    let mut position = [0usize; 12];
    for _ in 0..trials {
        let mut genes = vec![2.0; 12];
        mutate_single_gene(&mut genes, 0.25, &bounds, &mut r);
        let hits: Vec<usize> = (0..12).filter(|&i| genes[i] != 2.0).collect();
        assert!(hits.len() <= 1);
        if let Some(&i) = hits.first() {
            mutated += 1;
            position[i] += 1;
        }
    }
    let rate = mutated as f64 / trials as f64;
    assert!((rate - 0.25).abs() < 0.01, "rate {rate}");
    let expected = mutated as f64 / 12.0;
    for count in position {
        assert!((count as f64 - expected).abs() < 5.0 * expected.sqrt());
    }
}

#[test]
fn parent_frequencies_follow_selection_probabilities() {
    let fitness = [0.1, 0.5, 1.0, 2.0, 0.0, 0.7];
    let probs = selection_probabilities(&fitness, Some(2.0)).unwrap();
    let mean = fitness.iter().sum::<f64>() / 6.0;
    let max = 2.0;
    let a = mean / (max - mean);
    let b = mean * (1.0 - a);
    let raw: Vec<f64> = fitness.iter().map(|f| (a * f + b).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    for (p, q) in probs.iter().zip(&raw) {
        assert!((p - q / total).abs() < 1e-12);
    }
    // scaled maximum is twice the scaled mean
    assert!((raw[3] - 2.0 * total / 6.0).abs() < 1e-12);

    let mut r = seeded(3);
    let pairs = select_parents(&fitness, 60_000, Some(2.0), &mut r).unwrap();
    let mut counts = [0usize; 6];
    for (i, j) in pairs {
        counts[i] += 1;
        counts[j] += 1;
    }
    let n = 60_000.0;
    for (c, p) in counts.iter().zip(&probs) {
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!(
            (*c as f64 - n * p).abs() <= 5.0 * sd.max(1.0),
            "count {c} expected {}",
            n * p
        );
    }
}

#[test]
fn failed_evaluations_are_never_selected() {
    let fitness = [1.0, f64::NAN, 0.5, f64::NEG_INFINITY];
    let probs = selection_probabilities(&fitness, Some(2.0)).unwrap();
    assert_eq!(probs[1], 0.0);
    assert_eq!(probs[3], 0.0);
    let mut r = seeded(4);
    for (i, j) in select_parents(&fitness, 2000, Some(2.0), &mut r).unwrap() {
        assert!(i == 0 || i == 2);
        assert!(j == 0 || j == 2);
    }
}
