use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Individual;
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneticOperator {
    SubtreeCrossover,
    DimensionCrossover,
    SubtreeMutation,
    AddDimension,
    RemoveDimension,
}

impl GeneticOperator {
    pub fn is_crossover(self) -> bool {
        matches!(
            self,
            GeneticOperator::SubtreeCrossover | GeneticOperator::DimensionCrossover
        )
    }
}

fn random_point<R: Rng + ?Sized>(ind: &Individual, rng: &mut R) -> (usize, usize) {
    let dim = rng.random_range(0..ind.dimensions.len());
    let node = rng.random_range(0..ind.dimensions[dim].size());
    (dim, node)
}

/// Swaps a random subtree of a random dimension of `a` with one of `b`.
pub fn crossover_subtree<R: Rng + ?Sized>(a: &Individual, b: &Individual, rng: &mut R) -> (Individual, Individual) {
    let (da, na) = random_point(a, rng);
    let (db, nb) = random_point(b, rng);
    let mut dims_a = a.dimensions.clone();
    let mut dims_b = b.dimensions.clone();
    let piece_b = dims_b[db].subtree(nb).expect("node index in range").clone();
    let piece_a = dims_a[da].replace_subtree(na, piece_b).expect("node index in range");
    dims_b[db].replace_subtree(nb, piece_a);
    (Individual::new(dims_a), Individual::new(dims_b))
}

/// Exchanges one whole dimension of `a` with one of `b`.
pub fn crossover_swap_dimensions<R: Rng + ?Sized>(
    a: &Individual,
    b: &Individual,
    rng: &mut R,
) -> (Individual, Individual) {
    let da = rng.random_range(0..a.dimensions.len());
    let db = rng.random_range(0..b.dimensions.len());
    let mut dims_a = a.dimensions.clone();
    let mut dims_b = b.dimensions.clone();
    std::mem::swap(&mut dims_a[da], &mut dims_b[db]);
    (Individual::new(dims_a), Individual::new(dims_b))
}

/// Replaces a random node of a random dimension with a freshly grown tree.
pub fn mutate_subtree<R: Rng + ?Sized>(a: &Individual, grow_depth: usize, arity: usize, rng: &mut R) -> Individual {
    let (dim, node) = random_point(a, rng);
    let fresh = Expr::grow_random(grow_depth, arity, rng);
    let mut dims = a.dimensions.clone();
    dims[dim].replace_subtree(node, fresh);
    Individual::new(dims)
}

/// Appends a freshly grown dimension.
pub fn mutate_add_dimension<R: Rng + ?Sized>(
    a: &Individual,
    grow_depth: usize,
    arity: usize,
    rng: &mut R,
) -> Individual {
    let mut dims = a.dimensions.clone();
    dims.push(Expr::grow_random(grow_depth, arity, rng));
    Individual::new(dims)
}

/// Deletes a random dimension; an individual with a single dimension is
/// returned unchanged (and no random number is drawn).
pub fn mutate_remove_dimension<R: Rng + ?Sized>(a: &Individual, rng: &mut R) -> Individual {
    if a.dimensions.len() < 2 {
        return a.clone();
    }
    let mut dims = a.dimensions.clone();
    dims.remove(rng.random_range(0..dims.len()));
    Individual::new(dims)
}

/// Applies one of the three mutation operators.
///
/// # Panics
/// If `op` is a crossover.
pub fn mutate<R: Rng + ?Sized>(
    op: GeneticOperator,
    a: &Individual,
    grow_depth: usize,
    arity: usize,
    rng: &mut R,
) -> Individual {
    match op {
        GeneticOperator::SubtreeMutation => mutate_subtree(a, grow_depth, arity, rng),
        GeneticOperator::AddDimension => mutate_add_dimension(a, grow_depth, arity, rng),
        GeneticOperator::RemoveDimension => mutate_remove_dimension(a, rng),
        other => panic!("{other:?} is not a mutation"),
    }
}
