//! The M3GP evolutionary loop.
//!
//! An [`Individual`] is an ordered list of expression trees ("dimensions").
//! Its fitness is the training accuracy of a Mahalanobis nearest-centroid
//! classifier fitted in the space those trees span; ties in accuracy go to
//! the smaller individual.

mod impact;
mod operators;

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{project_columns, Dataset, DatasetError};
use crate::expr::{simplify, Expr};
use crate::mdclass::{fraction_equal, MdError, MdModel};

pub use impact::{
    dimension_impacts, prune_dimensions, rank_dimension_impact, rank_dimension_impact_per_model, RankedDimension,
};
pub use operators::{
    crossover_subtree, crossover_swap_dimensions, mutate, mutate_add_dimension, mutate_remove_dimension,
    mutate_subtree, GeneticOperator,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("individual has no cached fitness")]
    UncachedFitness,
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("training data needs at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("no models to rank")]
    NoModels,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] MdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorProbabilities {
    pub crossover_subtree: f64,
    pub crossover_swap_dimensions: f64,
    pub mutation_subtree: f64,
    pub mutation_add_dimension: f64,
    pub mutation_remove_dimension: f64,
}

impl Default for OperatorProbabilities {
    fn default() -> Self {
        Self {
            crossover_subtree: 0.25,
            crossover_swap_dimensions: 0.25,
            mutation_subtree: 1.0 / 6.0,
            mutation_add_dimension: 1.0 / 6.0,
            mutation_remove_dimension: 1.0 / 6.0,
        }
    }
}

impl OperatorProbabilities {
    pub fn as_array(&self) -> [(GeneticOperator, f64); 5] {
        [
            (GeneticOperator::SubtreeCrossover, self.crossover_subtree),
            (GeneticOperator::DimensionCrossover, self.crossover_swap_dimensions),
            (GeneticOperator::SubtreeMutation, self.mutation_subtree),
            (GeneticOperator::AddDimension, self.mutation_add_dimension),
            (GeneticOperator::RemoveDimension, self.mutation_remove_dimension),
        ]
    }

    /// Draws an operator with one uniform variate.
    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> GeneticOperator {
        let u: f64 = rng.random();
        let table = self.as_array();
        let mut acc = 0.0;
        for (op, p) in table {
            acc += p;
            if u < acc {
                return op;
            }
        }
        table[4].0
    }

    /// Draws among the mutations only, proportionally to their weights.
    pub fn choose_mutation<R: Rng + ?Sized>(&self, rng: &mut R) -> GeneticOperator {
        let table = &self.as_array()[2..];
        let total: f64 = table.iter().map(|t| t.1).sum();
        if total <= 0.0 {
            return GeneticOperator::SubtreeMutation;
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for &(op, p) in table {
            acc += p;
            if u < acc {
                return op;
            }
        }
        table[2].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub generations: usize,
    pub population_size: usize,
    pub tournament_size: usize,
    pub init_max_depth: usize,
    pub operators: OperatorProbabilities,
    pub elitism: usize,
    pub seed: u64,
    /// Offspring with any tree deeper than this are replaced by their parent.
    pub max_depth: usize,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generations: 50,
            population_size: 200,
            tournament_size: 5,
            init_max_depth: 6,
            operators: OperatorProbabilities::default(),
            elitism: 1,
            seed: 0,
            max_depth: 17,
            runs: 30,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let probs = self.operators.as_array();
        if probs.iter().any(|p| !(p.1 >= 0.0)) {
            return Err(EngineError::InvalidConfig(
                "operator probabilities must be non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().map(|p| p.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::InvalidConfig(format!(
                "operator probabilities sum to {sum}"
            )));
        }
        let counts = [
            ("generations", self.generations),
            ("population_size", self.population_size),
            ("tournament_size", self.tournament_size),
            ("init_max_depth", self.init_max_depth),
            ("elitism", self.elitism),
            ("max_depth", self.max_depth),
            ("runs", self.runs),
        ];
        if let Some((name, _)) = counts.iter().find(|c| c.1 == 0) {
            return Err(EngineError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.elitism >= self.population_size {
            return Err(EngineError::InvalidConfig(
                "elitism must leave room for offspring".into(),
            ));
        }
        if self.init_max_depth > self.max_depth {
            return Err(EngineError::InvalidConfig("initial depth exceeds the depth cap".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    dimensions: Vec<Expr>,
    fitness: Option<f64>,
    size: usize,
}

impl Individual {
    pub fn new(dimensions: Vec<Expr>) -> Self {
        assert!(!dimensions.is_empty(), "an individual needs at least one dimension");
        let size = dimensions.iter().map(Expr::size).sum();
        Self {
            dimensions,
            fitness: None,
            size,
        }
    }

    pub fn dimensions(&self) -> &[Expr] {
        &self.dimensions
    }

    pub fn into_dimensions(self) -> Vec<Expr> {
        self.dimensions
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    /// Total node count over all dimensions.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn max_depth(&self) -> usize {
        self.dimensions.iter().map(Expr::depth).max().unwrap_or(0)
    }

    /// Computes and caches training accuracy.
    pub fn evaluate(&mut self, train: &Dataset) -> f64 {
        let f = fitness_of(&self.dimensions, train);
        self.fitness = Some(f);
        f
    }

    /// The classifier this individual induces on `train`.
    pub fn to_model(&self, train: &Dataset) -> Result<MdModel, EngineError> {
        Ok(MdModel::fit_dataset(self.dimensions.clone(), train)?)
    }

    fn with_fitness(mut self, f: f64) -> Self {
        self.fitness = Some(f);
        self
    }
}

/// Training accuracy of the nearest-centroid classifier fitted on the
/// projection of `train` through `dimensions`. Any projection or fit
/// failure scores 0.
pub fn fitness_of(dimensions: &[Expr], train: &Dataset) -> f64 {
    let Ok(columns) = project_columns(train, dimensions) else {
        return 0.0;
    };
    let Ok(model) = MdModel::fit_columns(&columns, train.labels(), train.classes(), Vec::new()) else {
        return 0.0;
    };
    match model.predict_columns(&columns) {
        Ok(pred) => fraction_equal(train.labels(), &pred),
        Err(_) => 0.0,
    }
}

/// Evaluates and caches fitness on `ind`.
pub fn fitness(ind: &mut Individual, train: &Dataset) -> Result<f64, EngineError> {
    check_train(train)?;
    Ok(ind.evaluate(train))
}

fn check_train(train: &Dataset) -> Result<(), EngineError> {
    let present = train.present_classes();
    if present < 2 {
        return Err(EngineError::TooFewClasses(present));
    }
    Ok(())
}

/// `Greater` when `a` beats `b`: higher fitness, then smaller size.
/// `Equal` on a full tie.
pub fn compare(a: &Individual, b: &Individual) -> Result<Ordering, EngineError> {
    let (fa, fb) = match (a.fitness, b.fitness) {
        (Some(fa), Some(fb)) => (fa, fb),
        _ => return Err(EngineError::UncachedFitness),
    };
    Ok(fa.total_cmp(&fb).then(b.size.cmp(&a.size)))
}

/// The better of two evaluated individuals, `a` on a full tie.
fn better<'a>(a: &'a Individual, b: &'a Individual) -> &'a Individual {
    match compare(a, b).expect("population is evaluated") {
        Ordering::Less => b,
        _ => a,
    }
}

/// Best individual of an evaluated population, earliest on ties.
pub fn best_of(pop: &[Individual]) -> Result<&Individual, EngineError> {
    let first = pop
        .first()
        .ok_or_else(|| EngineError::InvalidConfig("empty population".into()))?;
    if pop.iter().any(|i| i.fitness.is_none()) {
        return Err(EngineError::UncachedFitness);
    }
    Ok(pop[1..].iter().fold(first, |best, cand| better(best, cand)))
}

/// Draws `size` individuals with replacement and returns the best; earlier
/// draws win full ties.
pub fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Individual], size: usize, rng: &mut R) -> &'a Individual {
    assert!(!pop.is_empty(), "tournament over an empty population");
    let mut winner = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let cand = &pop[rng.random_range(0..pop.len())];
        winner = better(winner, cand);
    }
    winner
}

/// `population_size` single-dimension individuals grown to `init_max_depth`.
pub fn init_population<R: Rng + ?Sized>(config: &RunConfig, arity: usize, rng: &mut R) -> Vec<Individual> {
    (0..config.population_size)
        .map(|_| Individual::new(vec![Expr::grow_random(config.init_max_depth, arity, rng)]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub median_fitness: f64,
    pub best_size: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Pruned and simplified best individual, fitness re-evaluated.
    pub champion: Individual,
    /// One entry for the initial population and one per generation.
    pub trace: Vec<GenerationStats>,
}

fn evaluate_all(pop: &mut [Individual], train: &Dataset) {
    pop.par_iter_mut().filter(|i| i.fitness.is_none()).for_each(|i| {
        i.evaluate(train);
    });
}

fn generation_stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let best = best_of(pop).expect("evaluated population");
    let fits: Vec<f64> = pop.iter().map(|i| i.fitness.unwrap_or(0.0)).collect();
    GenerationStats {
        generation,
        best_fitness: best.fitness.unwrap_or(0.0),
        median_fitness: crate::stats::median(&fits).unwrap_or(0.0),
        best_size: best.size,
    }
}

fn within_cap(ind: &Individual, cap: usize) -> bool {
    ind.dimensions.iter().all(|d| d.depth() <= cap)
}

/// Evolves a population and returns the post-processed champion with the
/// per-generation trace.
///
/// All random draws happen on `rng` in a fixed order; fitness evaluation
/// runs in parallel but draws nothing, so results depend only on the seed.
pub fn evolve_with_trace<R: Rng + ?Sized>(
    train: &Dataset,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunOutcome, EngineError> {
    config.validate()?;
    check_train(train)?;
    let arity = train.arity();
    if arity == 0 {
        return Err(EngineError::InvalidConfig("training data has no features".into()));
    }
    let mut pop = init_population(config, arity, rng);
    evaluate_all(&mut pop, train);
    let mut trace = vec![generation_stats(0, &pop)];

    for generation in 1..=config.generations {
        let mut next = elites(&pop, config.elitism);
        while next.len() < config.population_size {
            let room = config.population_size - next.len();
            let mut op = config.operators.choose(rng);
            if op.is_crossover() && room == 1 {
                op = config.operators.choose_mutation(rng);
            }
            if op.is_crossover() {
                let a = tournament(&pop, config.tournament_size, rng);
                let b = tournament(&pop, config.tournament_size, rng);
                let (ca, cb) = match op {
                    GeneticOperator::SubtreeCrossover => crossover_subtree(a, b, rng),
                    _ => crossover_swap_dimensions(a, b, rng),
                };
                next.push(if within_cap(&ca, config.max_depth) {
                    ca
                } else {
                    a.clone()
                });
                next.push(if within_cap(&cb, config.max_depth) {
                    cb
                } else {
                    b.clone()
                });
            } else {
                let a = tournament(&pop, config.tournament_size, rng);
                let child = mutate(op, a, config.init_max_depth, arity, rng);
                next.push(if within_cap(&child, config.max_depth) {
                    child
                } else {
                    a.clone()
                });
            }
        }
        evaluate_all(&mut next, train);
        pop = next;
        trace.push(generation_stats(generation, &pop));
    }

    let best = best_of(&pop)?.clone();
    let pruned = prune_dimensions(&best, train)?;
    let simplified: Vec<Expr> = pruned.dimensions.iter().map(simplify).collect();
    let mut champion = Individual::new(simplified);
    champion.evaluate(train);
    Ok(RunOutcome { champion, trace })
}

/// Evolves and returns only the champion.
pub fn evolve<R: Rng + ?Sized>(train: &Dataset, config: &RunConfig, rng: &mut R) -> Result<Individual, EngineError> {
    evolve_with_trace(train, config, rng).map(|o| o.champion)
}

/// The `count` best individuals, best first.
fn elites(pop: &[Individual], count: usize) -> Vec<Individual> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    // stable sort keeps earlier individuals first on full ties
    order.sort_by(|&a, &b| compare(&pop[b], &pop[a]).expect("evaluated population"));
    order.iter().take(count).map(|&i| pop[i].clone()).collect()
}
