use serde::{Deserialize, Serialize};

use super::{fitness_of, EngineError, Individual};
use crate::dataset::Dataset;
use crate::expr::{simplify, Expr};

/// Removes, first to last, every dimension whose removal does not lower
/// training accuracy. The last remaining dimension is never removed.
pub fn prune_dimensions(ind: &Individual, train: &Dataset) -> Result<Individual, EngineError> {
    let mut current = ind.clone();
    let mut fit = match current.fitness {
        Some(f) => f,
        None => current.evaluate(train),
    };
    let mut i = 0;
    while i < current.dimensions.len() && current.dimensions.len() > 1 {
        let mut dims = current.dimensions.clone();
        dims.remove(i);
        let reduced = fitness_of(&dims, train);
        if reduced >= fit {
            current = Individual::new(dims).with_fitness(reduced);
            fit = reduced;
        } else {
            i += 1;
        }
    }
    Ok(current)
}

/// Accuracy lost on `train` when each dimension is left out. A
/// single-dimension model is compared with the majority-class rate.
pub fn dimension_impacts(model: &Individual, train: &Dataset) -> Vec<f64> {
    let full = fitness_of(&model.dimensions, train);
    if model.dimensions.len() == 1 {
        let majority = train.class_counts().into_iter().max().unwrap_or(0) as f64 / train.n_rows().max(1) as f64;
        return vec![full - majority];
    }
    (0..model.dimensions.len())
        .map(|i| {
            let mut dims = model.dimensions.clone();
            dims.remove(i);
            full - fitness_of(&dims, train)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDimension {
    pub expression: Expr,
    pub impact: f64,
    pub model: usize,
    pub dimension: usize,
}

/// Pools every dimension of every model, ranks by impact (ties: earlier
/// model, then earlier dimension) and returns the `top_k` best, simplified.
pub fn rank_dimension_impact(
    models: &[Individual],
    train: &Dataset,
    top_k: usize,
) -> Result<Vec<RankedDimension>, EngineError> {
    let entries: Vec<(&Individual, &Dataset)> = models.iter().map(|m| (m, train)).collect();
    rank_dimension_impact_per_model(&entries, top_k)
}

/// As [`rank_dimension_impact`], each model scored on its own training set.
pub fn rank_dimension_impact_per_model(
    entries: &[(&Individual, &Dataset)],
    top_k: usize,
) -> Result<Vec<RankedDimension>, EngineError> {
    if entries.is_empty() {
        return Err(EngineError::NoModels);
    }
    if top_k == 0 {
        return Err(EngineError::InvalidConfig("top_k must be at least 1".into()));
    }
    let mut pooled: Vec<RankedDimension> = entries
        .iter()
        .enumerate()
        .flat_map(|(m, (ind, train))| {
            dimension_impacts(ind, train)
                .into_iter()
                .enumerate()
                .map(move |(d, impact)| RankedDimension {
                    expression: ind.dimensions[d].clone(),
                    impact,
                    model: m,
                    dimension: d,
                })
        })
        .collect();
    // stable: equal impacts keep (model, dimension) order
    pooled.sort_by(|a, b| b.impact.total_cmp(&a.impact));
    pooled.truncate(top_k);
    for r in &mut pooled {
        r.expression = simplify(&r.expression);
    }
    Ok(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth;
    use crate::expr::parse;

    fn ind(formulas: &[&str]) -> Individual {
        Individual::new(formulas.iter().map(|f| parse(f).unwrap()).collect())
    }

    #[test]
    fn duplicate_dimension_is_pruned() {
        let ds = synth::blobs(100, 100, 3, 3.0, "T", 4);
        let twin = ind(&["X0 + X1", "X0 + X1"]);
        let pruned = prune_dimensions(&twin, &ds).unwrap();
        assert_eq!(pruned.dimensions().len(), 1);
        assert!(pruned.fitness().unwrap() >= fitness_of(twin.dimensions(), &ds));
    }

    #[test]
    fn necessary_dimensions_stay() {
        // the class gap lies on the diagonal, so each axis alone loses accuracy
        let ds = synth::gaussian(
            "T",
            &[
                synth::GaussianClass {
                    label: "a".into(),
                    count: 200,
                    mean: vec![0.0, 0.0],
                    std_dev: vec![1.0, 1.0],
                },
                synth::GaussianClass {
                    label: "b".into(),
                    count: 200,
                    mean: vec![1.5, 1.5],
                    std_dev: vec![1.0, 1.0],
                },
            ],
            3,
        );
        let both = ind(&["X0", "X1"]);
        let full = fitness_of(both.dimensions(), &ds);
        assert!(fitness_of(&[parse("X0").unwrap()], &ds) < full);
        assert!(fitness_of(&[parse("X1").unwrap()], &ds) < full);
        assert_eq!(prune_dimensions(&both, &ds).unwrap().dimensions(), both.dimensions());
    }

    #[test]
    fn last_dimension_is_never_removed() {
        let ds = synth::blobs(50, 50, 2, 3.0, "T", 1);
        let flat = ind(&["X0 - X0"]);
        assert_eq!(prune_dimensions(&flat, &ds).unwrap().dimensions().len(), 1);
    }

    #[test]
    fn impacts_and_ranking() {
        let ds = synth::gaussian(
            "T",
            &[
                synth::GaussianClass {
                    label: "a".into(),
                    count: 150,
                    mean: vec![0.0, 0.0, 0.0],
                    std_dev: vec![1.0, 1.0, 1.0],
                },
                synth::GaussianClass {
                    label: "b".into(),
                    count: 150,
                    mean: vec![6.0, 0.3, 0.0],
                    std_dev: vec![1.0, 1.0, 1.0],
                },
            ],
            2,
        );
        // X0 carries the separation, X2 carries nothing.
        let strong = ind(&["X0", "X2"]);
        let weak = ind(&["X1 + 0", "X2"]);
        let impacts = dimension_impacts(&strong, &ds);
        assert!(impacts[0] > 0.2, "{impacts:?}");
        assert!(impacts[1].abs() < 0.05, "{impacts:?}");

        let ranked = rank_dimension_impact(&[weak.clone(), strong.clone()], &ds, 3).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!((ranked[0].model, ranked[0].dimension), (1, 0));
        assert_eq!(ranked[0].expression, parse("X0").unwrap());
        assert!(ranked.windows(2).all(|w| w[0].impact >= w[1].impact));

        let single = ind(&["X0"]);
        let majority = 0.5;
        let imp = dimension_impacts(&single, &ds);
        assert!((imp[0] - (fitness_of(single.dimensions(), &ds) - majority)).abs() < 1e-12);

        let top1 = rank_dimension_impact(&[weak.clone(), strong], &ds, 1).unwrap();
        assert_eq!(top1.len(), 1);
        // simplified on the way out
        let weak_only = rank_dimension_impact(&[weak], &ds, 2).unwrap();
        assert!(weak_only.iter().any(|r| r.expression == parse("X1").unwrap()));
        assert!(matches!(rank_dimension_impact(&[], &ds, 1), Err(EngineError::NoModels)));
    }

    #[test]
    fn unchanged_accuracy_means_zero_impact() {
        let ds = synth::blobs(60, 60, 2, 8.0, "T", 7);
        let twin = ind(&["X0 + X1", "X0 + X1"]);
        assert_eq!(dimension_impacts(&twin, &ds), vec![0.0, 0.0]);
    }
}
