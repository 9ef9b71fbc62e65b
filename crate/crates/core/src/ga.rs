//! Hybrid real-coded genetic algorithm over angle genomes.
//!
//! Individuals are sine-cosine angle vectors; fitness is the approximated
//! negentropy of the mixture projected on the decoded (and orthonormalized)
//! basis. Each generation applies elitism, proportional selection with
//! linear fitness scaling, local arithmetic crossover and uniform mutation.
//! With a small probability the current best individual is refined by a
//! bounded quasi-Newton ascent.
//!
//! Every random draw happens on the coordinating thread in a fixed order;
//! only fitness evaluation is parallel. Results therefore depend on the seed
//! alone, not on the thread count.

use crate::gmm::GaussianMixture;
use crate::negentropy::{negentropy, EstimatorSpec};
use crate::projection::{angle_bounds, decode, orthonormalize, project_mixture, AngleGenome, Basis};
use crate::rng::{self, seeded};
use crate::{Error, Real, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Best-fitness gains at or below this count as no improvement.
pub const STALL_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub pop_size: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub p_local_search: f64,
    pub elitism: usize,
    pub max_iter: usize,
    /// Stop after this many consecutive generations without improvement.
    pub run_stall: usize,
    pub seed: u64,
    /// Target ratio of the best scaled fitness to the mean.
    pub scaling_factor: f64,
    pub mutation_scope: MutationScope,
    pub local_search: LocalSearchOptions,
}

/// What `p_mutation` applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationScope {
    /// Every gene is redrawn independently with probability `p_mutation`.
    PerGene,
    /// With probability `p_mutation` one gene, chosen uniformly, is redrawn.
    #[default]
    PerIndividual,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            pop_size: 100,
            p_crossover: 0.8,
            p_mutation: 0.1,
            p_local_search: 0.05,
            elitism: 1,
            max_iter: 1000,
            run_stall: 100,
            seed: 0,
            scaling_factor: 2.0,
            mutation_scope: MutationScope::PerIndividual,
            local_search: LocalSearchOptions::default(),
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} is not a probability")))
            }
        };
        prob("p_crossover", self.p_crossover)?;
        prob("p_mutation", self.p_mutation)?;
        prob("p_local_search", self.p_local_search)?;
        if self.pop_size < 2 {
            return Err(Error::InvalidArgument("pop_size must be at least 2".into()));
        }
        if self.elitism >= self.pop_size {
            return Err(Error::InvalidArgument("elitism must be smaller than pop_size".into()));
        }
        if self.max_iter == 0 || self.run_stall == 0 {
            return Err(Error::InvalidArgument("max_iter and run_stall must be positive".into()));
        }
        if !(self.scaling_factor > 1.0) {
            return Err(Error::InvalidArgument("scaling_factor must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSearchOptions {
    pub max_iter: usize,
    /// Relative objective decrease below which the search stops.
    pub ftol: f64,
    /// Projected-gradient infinity norm below which the search stops.
    pub gtol: f64,
    /// Relative finite-difference step.
    pub step: f64,
}

impl Default for LocalSearchOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            ftol: 1e-10,
            gtol: 1e-8,
            step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PpResult<T: Real> {
    pub best_genome: AngleGenome<T>,
    /// Orthonormalized decoding of `best_genome`.
    pub best_basis: Basis<T>,
    pub best_fitness: T,
    /// Best fitness of each generation.
    pub fitness_trace: Vec<T>,
    /// Mean fitness (over successful evaluations) of each generation.
    pub mean_trace: Vec<T>,
    pub generations_run: usize,
    pub estimator: EstimatorSpec,
    pub warnings: Vec<String>,
}

impl<T: Real> PpResult<T> {
    /// `generation,best,mean` rows with a header line.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("generation,best,mean\n");
        for (k, (b, m)) in self.fitness_trace.iter().zip(&self.mean_trace).enumerate() {
            out.push_str(&format!("{},{},{}\n", k + 1, b.as_f64(), m.as_f64()));
        }
        out
    }
}

/// Projection index of a genome: decode, orthonormalize, project the mixture
/// and estimate its negentropy.
pub fn fitness<T: Real>(genome: &AngleGenome<T>, model: &GaussianMixture<T>, spec: &EstimatorSpec) -> Result<T> {
    let basis = orthonormalize(&decode(genome))?;
    let projected = project_mixture(model, &basis)?;
    Ok(negentropy(&projected, spec)?.negentropy)
}

/// Selection probabilities from raw fitnesses. Non-finite entries (failed
/// evaluations) get probability zero.
///
/// With `scaling = Some(c)`, fitnesses (shifted to be nonnegative when any is
/// negative) are mapped by `f' = a f + b` so that the mean is kept and the
/// maximum becomes `c` times the mean; negative results are clamped to zero.
/// A degenerate population falls back to uniform selection.
pub fn selection_probabilities(fitness: &[f64], scaling: Option<f64>) -> Result<Vec<f64>> {
    let finite: Vec<usize> = (0..fitness.len()).filter(|&i| fitness[i].is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Optimisation("no individual has a finite fitness".into()));
    }
    let uniform = || {
        let mut p = vec![0.0; fitness.len()];
        let w = 1.0 / finite.len() as f64;
        for &i in &finite {
            p[i] = w;
        }
        p
    };
    let min = finite.iter().map(|&i| fitness[i]).fold(f64::INFINITY, f64::min);
    let shift = if min < 0.0 { -min } else { 0.0 };
    let mut f = vec![0.0; fitness.len()];
    for &i in &finite {
        f[i] = fitness[i] + shift;
    }
    if let Some(c) = scaling {
        let mean = finite.iter().map(|&i| f[i]).sum::<f64>() / finite.len() as f64;
        let max = finite.iter().map(|&i| f[i]).fold(f64::NEG_INFINITY, f64::max);
        let spread = max - mean;
        if !(spread > f64::EPSILON * max.abs().max(1e-300)) || !(mean > 0.0) {
            return Ok(uniform());
        }
        let a = (c - 1.0) * mean / spread;
        let b = mean * (1.0 - a);
        for &i in &finite {
            f[i] = (a * f[i] + b).max(0.0);
        }
    }
    let total: f64 = finite.iter().map(|&i| f[i]).sum();
    if !(total > 0.0) {
        return Ok(uniform());
    }
    Ok(f.into_iter().map(|v| v / total).collect())
}

/// Draws `count` parents (in consecutive pairs) with replacement, with
/// probabilities from [`selection_probabilities`].
pub fn select_parents<R: Rng + ?Sized>(
    fitness: &[f64],
    count: usize,
    scaling: Option<f64>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let probs = selection_probabilities(fitness, scaling)?;
    Ok((0..count.div_ceil(2))
        .map(|_| (rng::categorical(rng, &probs), rng::categorical(rng, &probs)))
        .collect())
}

/// Local arithmetic crossover with explicit per-gene mixing weights.
pub fn crossover_with_weights<T: Real>(p1: &[T], p2: &[T], a: &[T]) -> (Vec<T>, Vec<T>) {
    assert_eq!(p1.len(), p2.len());
    assert_eq!(p1.len(), a.len());
    let c1 = (0..p1.len())
        .map(|i| a[i] * p1[i] + (T::one() - a[i]) * p2[i])
        .collect();
    let c2 = (0..p1.len())
        .map(|i| (T::one() - a[i]) * p1[i] + a[i] * p2[i])
        .collect();
    (c1, c2)
}

/// Local arithmetic crossover: an independent `U[0,1]` weight per gene.
pub fn crossover_local_arithmetic<T: Real, R: Rng + ?Sized>(p1: &[T], p2: &[T], rng: &mut R) -> (Vec<T>, Vec<T>) {
    let a: Vec<T> = (0..p1.len()).map(|_| rng::uniform(rng, T::zero(), T::one())).collect();
    crossover_with_weights(p1, p2, &a)
}

/// Uniform mutation: each gene is redrawn from its interval with
/// probability `p_mutation`.
pub fn mutate_uniform<T: Real, R: Rng + ?Sized>(genes: &mut [T], p_mutation: f64, bounds: &[(T, T)], rng: &mut R) {
    for (g, &(lo, hi)) in genes.iter_mut().zip(bounds) {
        if rng.random::<f64>() < p_mutation {
            *g = rng::uniform(rng, lo, hi);
        }
    }
}

/// Redraws one uniformly chosen gene with probability `p_mutation`.
pub fn mutate_single_gene<T: Real, R: Rng + ?Sized>(genes: &mut [T], p_mutation: f64, bounds: &[(T, T)], rng: &mut R) {
    if rng.random::<f64>() < p_mutation {
        let j = rng.random_range(0..genes.len());
        genes[j] = rng::uniform(rng, bounds[j].0, bounds[j].1);
    }
}

fn clamp_to(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.max(lo).min(hi);
    }
}

/// Outcome of [`maximize_bounded`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Box-constrained maximization by projected BFGS with central
/// finite-difference gradients and Armijo backtracking along the projected
/// path. `objective` returning `None` marks an infeasible point.
///
/// The returned value is never below the value at the (clamped) start.
pub fn maximize_bounded<F>(
    objective: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &LocalSearchOptions,
) -> Option<LocalOptimum>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        objective(x).filter(|v| v.is_finite()).map(|v| -v)
    };
    let mut x = x0.to_vec();
    clamp_to(&mut x, bounds);
    let mut fx = eval(&x)?;

    let gradient = |x: &[f64], fx: f64, eval: &mut dyn FnMut(&[f64]) -> Option<f64>| -> Vec<f64> {
        let mut g = vec![0.0; n];
        let mut probe = x.to_vec();
        for i in 0..n {
            let (lo, hi) = bounds[i];
            let h = opts.step * x[i].abs().max(1.0);
            let up = (x[i] + h).min(hi);
            let down = (x[i] - h).max(lo);
            probe[i] = up;
            let fu = if up > x[i] { eval(&probe) } else { Some(fx) };
            probe[i] = down;
            let fd = if down < x[i] { eval(&probe) } else { Some(fx) };
            probe[i] = x[i];
            g[i] = match (fu, fd) {
                (Some(a), Some(b)) if up > down => (a - b) / (up - down),
                _ => 0.0,
            };
        }
        g
    };

    let mut h_inv = vec![vec![0.0; n]; n];
    let reset = |h: &mut Vec<Vec<f64>>| {
        for (i, row) in h.iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[i] = 1.0;
        }
    };
    reset(&mut h_inv);

    let mut g = gradient(&x, fx, &mut eval);
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= bounds[i].0 && g[i] > 0.0) || (x[i] >= bounds[i].1 && g[i] < 0.0))
            .collect();
        let pg = (0..n).filter(|&i| !active[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg <= opts.gtol {
            break;
        }
        let mut dir: Vec<f64> = (0..n)
            .map(|i| {
                if active[i] {
                    0.0
                } else {
                    -(0..n).filter(|&j| !active[j]).map(|j| h_inv[i][j] * g[j]).sum::<f64>()
                }
            })
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            reset(&mut h_inv);
            dir = (0..n).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
            slope = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        }
        // keep the first trial step inside a box-sized neighbourhood
        let span = dir
            .iter()
            .zip(bounds)
            .map(|(d, (lo, hi))| d.abs() / (hi - lo))
            .fold(0.0, f64::max);
        let mut alpha = if span > 0.5 { 0.5 / span } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
            clamp_to(&mut trial, bounds);
            let decrease: f64 = trial.iter().zip(&x).zip(&g).map(|((t, x), g)| (t - x) * g).sum();
            if let Some(ft) = eval(&trial) {
                if ft <= fx + 1e-4 * decrease && ft < fx {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let _ = slope;
        let Some((x_new, f_new)) = accepted else { break };
        let g_new = gradient(&x_new, f_new, &mut eval);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h_inv[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let small = fx - f_new <= opts.ftol * (fx.abs() + f_new.abs() + opts.ftol);
        x = x_new;
        fx = f_new;
        g = g_new;
        if small {
            break;
        }
    }
    Some(LocalOptimum {
        x,
        value: -fx,
        iterations,
        evaluations: evals,
    })
}

/// Refines a genome by bounded quasi-Newton ascent on the fitness. On
/// evaluation failure the input is returned with a warning.
pub fn local_search<T: Real>(
    genome: &AngleGenome<T>,
    model: &GaussianMixture<T>,
    spec: &EstimatorSpec,
    opts: &LocalSearchOptions,
) -> (AngleGenome<T>, Option<String>) {
    let (p, d) = (genome.p(), genome.d());
    let bounds: Vec<(f64, f64)> = genome.bounds().iter().map(|(a, b)| (a.as_f64(), b.as_f64())).collect();
    let objective = |x: &[f64]| -> Option<f64> {
        let g = AngleGenome::new(x.iter().map(|&v| T::lit(v)).collect(), p, d).ok()?;
        fitness(&g, model, spec).ok().map(|v| v.as_f64())
    };
    let x0: Vec<f64> = genome.angles().iter().map(|a| a.as_f64()).collect();
    match maximize_bounded(objective, &x0, &bounds, opts) {
        None => (
            genome.clone(),
            Some("local search: starting point could not be evaluated".into()),
        ),
        Some(opt) => {
            // bounds hold exactly in f64; re-clamp after conversion to T
            let angles = opt
                .x
                .iter()
                .zip(genome.bounds())
                .map(|(&v, (lo, hi))| T::lit(v).max(lo).min(hi))
                .collect();
            match AngleGenome::new(angles, p, d) {
                Ok(g) => (g, None),
                Err(e) => (genome.clone(), Some(format!("local search: {e}"))),
            }
        }
    }
}

struct Individual<T: Real> {
    genes: Vec<T>,
    fitness: Option<T>,
}

fn rank_key<T: Real>(f: Option<T>) -> f64 {
    f.map_or(f64::NEG_INFINITY, |v| v.as_f64())
}

/// Maximizes the approximated negentropy of `d`-dimensional projections of
/// `model` with the hybrid GA.
pub fn run_ppgmmga<T: Real>(
    model: &GaussianMixture<T>,
    d: usize,
    spec: &EstimatorSpec,
    config: &GaConfig,
) -> Result<PpResult<T>> {
    run_ppgmmga_from(model, d, spec, config, &[])
}

/// As [`run_ppgmmga`], with the first members of the initial population
/// replaced by `initial`.
pub fn run_ppgmmga_from<T: Real>(
    model: &GaussianMixture<T>,
    d: usize,
    spec: &EstimatorSpec,
    config: &GaConfig,
    initial: &[AngleGenome<T>],
) -> Result<PpResult<T>> {
    config.validate()?;
    let p = model.dim();
    if d == 0 || d >= p {
        return Err(Error::InvalidArgument(format!("need 1 <= d < p, got d={d}, p={p}")));
    }
    if initial.iter().any(|g| g.p() != p || g.d() != d) {
        return Err(Error::Dimension("initial genome does not match (p, d)".into()));
    }
    let bounds = angle_bounds::<T>(p, d);
    let mut rng = seeded(config.seed);
    let mut warnings = Vec::new();

    let evaluate = |genes: &[T]| -> Option<T> {
        let g = AngleGenome::new(genes.to_vec(), p, d).ok()?;
        fitness(&g, model, spec).ok()
    };

    let mut pop: Vec<Individual<T>> = (0..config.pop_size)
        .map(|k| {
            let genes = match initial.get(k) {
                Some(g) => g.angles().to_vec(),
                None => bounds.iter().map(|&(lo, hi)| rng::uniform(&mut rng, lo, hi)).collect(),
            };
            Individual { genes, fitness: None }
        })
        .collect();

    let mut fitness_trace: Vec<T> = Vec::new();
    let mut mean_trace: Vec<T> = Vec::new();
    let mut best: Option<(Vec<T>, T)> = None;
    let mut stall = 0usize;

    for generation in 1..=config.max_iter {
        let pending: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].fitness.is_none()).collect();
        let values: Vec<Option<T>> = pending.par_iter().map(|&i| evaluate(&pop[i].genes)).collect();
        for (&i, v) in pending.iter().zip(values) {
            pop[i].fitness = v;
        }
        if pop.iter().all(|ind| ind.fitness.is_none()) {
            return Err(Error::Optimisation(format!(
                "every fitness evaluation failed in generation {generation}"
            )));
        }

        let best_idx = (0..pop.len())
            .max_by(|&a, &b| {
                rank_key(pop[a].fitness)
                    .total_cmp(&rank_key(pop[b].fitness))
                    .then(b.cmp(&a))
            })
            .expect("nonempty population");

        if rng.random::<f64>() < config.p_local_search {
            let start = AngleGenome::new(pop[best_idx].genes.clone(), p, d)?;
            let (refined, warning) = local_search(&start, model, spec, &config.local_search);
            warnings.extend(warning);
            if let Some(v) = evaluate(refined.angles()) {
                if v > pop[best_idx].fitness.expect("best is finite") {
                    let worst = (0..pop.len())
                        .min_by(|&a, &b| {
                            rank_key(pop[a].fitness)
                                .total_cmp(&rank_key(pop[b].fitness))
                                .then(a.cmp(&b))
                        })
                        .expect("nonempty population");
                    pop[worst] = Individual {
                        genes: refined.angles().to_vec(),
                        fitness: Some(v),
                    };
                }
            }
        }

        let ranked = {
            let mut idx: Vec<usize> = (0..pop.len()).collect();
            idx.sort_by(|&a, &b| {
                rank_key(pop[b].fitness)
                    .total_cmp(&rank_key(pop[a].fitness))
                    .then(a.cmp(&b))
            });
            idx
        };
        let gen_best = pop[ranked[0]].fitness.expect("at least one finite fitness");
        let finite: Vec<T> = pop.iter().filter_map(|ind| ind.fitness).collect();
        let gen_mean = finite.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(finite.len());
        fitness_trace.push(gen_best);
        mean_trace.push(gen_mean);

        match &best {
            Some((_, b)) if gen_best.as_f64() <= b.as_f64() + STALL_EPS => stall += 1,
            _ => stall = 0,
        }
        if best.as_ref().is_none_or(|(_, b)| gen_best > *b) {
            best = Some((pop[ranked[0]].genes.clone(), gen_best));
        }
        if stall >= config.run_stall || generation == config.max_iter {
            break;
        }

        // next generation
        let raw: Vec<f64> = pop.iter().map(|ind| rank_key(ind.fitness)).collect();
        let n_offspring = config.pop_size - config.elitism;
        let pairs = select_parents(&raw, n_offspring, Some(config.scaling_factor), &mut rng)?;
        let mut next: Vec<Individual<T>> = ranked[..config.elitism]
            .iter()
            .map(|&i| Individual {
                genes: pop[i].genes.clone(),
                fitness: pop[i].fitness,
            })
            .collect();
        for (a, b) in pairs {
            let (mut c1, mut c2) = if rng.random::<f64>() < config.p_crossover {
                crossover_local_arithmetic(&pop[a].genes, &pop[b].genes, &mut rng)
            } else {
                (pop[a].genes.clone(), pop[b].genes.clone())
            };
            for c in [&mut c1, &mut c2] {
                match config.mutation_scope {
                    MutationScope::PerGene => mutate_uniform(c, config.p_mutation, &bounds, &mut rng),
                    MutationScope::PerIndividual => mutate_single_gene(c, config.p_mutation, &bounds, &mut rng),
                }
            }
            for c in [c1, c2] {
                if next.len() < config.pop_size {
                    next.push(Individual {
                        genes: c,
                        fitness: None,
                    });
                }
            }
        }
        pop = next;
    }

    let (genes, best_fitness) = best.expect("at least one generation ran");
    let best_genome = AngleGenome::new(genes, p, d)?;
    let best_basis = orthonormalize(&decode(&best_genome))?;
    Ok(PpResult {
        best_genome,
        best_basis,
        best_fitness,
        generations_run: fitness_trace.len(),
        fitness_trace,
        mean_trace,
        estimator: *spec,
        warnings,
    })
}
