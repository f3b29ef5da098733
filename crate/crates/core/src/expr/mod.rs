//! Arithmetic expression trees over dataset features.
//!
//! An [`Expr`] is one hyper-feature: a binary tree whose leaves are feature
//! references (`X0`, `X1`, ...) or constants and whose internal nodes are the
//! four arithmetic operators. Division is protected and every intermediate
//! value is clamped, so evaluation is a total function.

mod parse;
mod simplify;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse, ParseError};
pub use simplify::simplify;

/// Denominators at or below this magnitude make protected division return 1.
pub const PROTECTED_DIV_EPS: f64 = 1e-12;
/// Largest magnitude any evaluation result may take.
pub const CLAMP_LIMIT: f64 = 1e150;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("feature index X{index} out of range for a row of {arity} features")]
    FeatureOutOfRange { index: usize, arity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    /// Protected division.
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let v = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b.abs() <= PROTECTED_DIV_EPS {
                    1.0
                } else {
                    a / b
                }
            }
        };
        clamp(v)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Maps non-finite values to 0 and saturates magnitudes at [`CLAMP_LIMIT`].
#[inline]
pub fn clamp(v: f64) -> f64 {
    if !v.is_finite() {
        0.0
    } else if v > CLAMP_LIMIT {
        CLAMP_LIMIT
    } else if v < -CLAMP_LIMIT {
        -CLAMP_LIMIT
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Feature(usize),
    Const(f64),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn feature(index: usize) -> Self {
        Expr::Feature(index)
    }

    /// Builds a constant leaf. Non-finite values are clamped so the
    /// finite-constant invariant always holds.
    pub fn constant(value: f64) -> Self {
        Expr::Const(clamp(value))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinOp::Div, lhs, rhs)
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Const(_) => 1,
            Expr::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    /// Depth of the tree; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Const(_) => 1,
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Highest feature index referenced, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Expr::Feature(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Binary(_, l, r) => match (l.max_feature(), r.max_feature()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }

    pub fn has_constant(&self) -> bool {
        match self {
            Expr::Feature(_) => false,
            Expr::Const(_) => true,
            Expr::Binary(_, l, r) => l.has_constant() || r.has_constant(),
        }
    }

    /// Checks that every feature reference fits a row of `arity` values.
    pub fn check_arity(&self, arity: usize) -> Result<(), EvalError> {
        match self.max_feature() {
            Some(index) if index >= arity => Err(EvalError::FeatureOutOfRange { index, arity }),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, row: &[f64]) -> Result<f64, EvalError> {
        self.check_arity(row.len())?;
        Ok(self.eval_unchecked(row))
    }

    fn eval_unchecked(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Feature(i) => clamp(row[*i]),
            Expr::Const(c) => *c,
            Expr::Binary(op, l, r) => op.apply(l.eval_unchecked(row), r.eval_unchecked(row)),
        }
    }

    /// Evaluates over column-major data, one output per row.
    ///
    /// Produces exactly the values `evaluate` would produce row by row.
    pub fn evaluate_columns(&self, columns: &[Vec<f64>], n_rows: usize) -> Result<Vec<f64>, EvalError> {
        self.check_arity(columns.len())?;
        Ok(self.eval_columns_unchecked(columns, n_rows))
    }

    fn eval_columns_unchecked(&self, columns: &[Vec<f64>], n_rows: usize) -> Vec<f64> {
        match self {
            Expr::Feature(i) => columns[*i].iter().map(|&v| clamp(v)).collect(),
            Expr::Const(c) => vec![*c; n_rows],
            Expr::Binary(op, l, r) => {
                let mut lhs = l.eval_columns_unchecked(columns, n_rows);
                let rhs = r.eval_columns_unchecked(columns, n_rows);
                for (a, b) in lhs.iter_mut().zip(&rhs) {
                    *a = op.apply(*a, *b);
                }
                lhs
            }
        }
    }

    /// Returns the subtree at preorder position `index`.
    pub fn subtree(&self, index: usize) -> Option<&Expr> {
        let mut remaining = index;
        self.subtree_inner(&mut remaining)
    }

    fn subtree_inner(&self, remaining: &mut usize) -> Option<&Expr> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        match self {
            Expr::Binary(_, l, r) => l.subtree_inner(remaining).or_else(|| r.subtree_inner(remaining)),
            _ => None,
        }
    }

    /// Replaces the subtree at preorder position `index`, returning the one
    /// that was removed. Returns `None` (and leaves `self` untouched) if the
    /// index is out of range.
    pub fn replace_subtree(&mut self, index: usize, replacement: Expr) -> Option<Expr> {
        let mut remaining = index;
        let slot = self.subtree_mut(&mut remaining)?;
        Some(std::mem::replace(slot, replacement))
    }

    fn subtree_mut(&mut self, remaining: &mut usize) -> Option<&mut Expr> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        match self {
            Expr::Binary(_, l, r) => {
                if let Some(found) = l.subtree_mut(remaining) {
                    return Some(found);
                }
                r.subtree_mut(remaining)
            }
            _ => None,
        }
    }

    /// Random tree by the grow method: leaves are feature references only and
    /// every non-root-limited position chooses an operator with probability
    /// one half.
    pub fn grow_random<R: Rng + ?Sized>(max_depth: usize, arity: usize, rng: &mut R) -> Expr {
        assert!(max_depth >= 1, "grow depth must be at least 1");
        assert!(arity >= 1, "grow needs at least one feature");
        if max_depth > 1 && rng.random_bool(0.5) {
            let op = BinOp::ALL[rng.random_range(0..BinOp::ALL.len())];
            let lhs = Self::grow_random(max_depth - 1, arity, rng);
            let rhs = Self::grow_random(max_depth - 1, arity, rng);
            Expr::binary(op, lhs, rhs)
        } else {
            Expr::Feature(rng.random_range(0..arity))
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        parse::write_expr(self, f)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Renders an expression in the infix text grammar.
pub fn format(expr: &Expr) -> String {
    expr.to_string()
}

/// The ten published burnt-area hyper-features, in `HF0..HF9` order.
pub const BUNDLED_HYPERFEATURES: &str = include_str!("../../assets/burnt_area_hyperfeatures.txt");

/// Parses a hyper-feature asset: one formula per line, blank lines and
/// `#` comments ignored.
pub fn parse_asset(text: &str) -> Result<Vec<Expr>, ParseError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse)
        .collect()
}

pub fn bundled_hyperfeatures() -> Vec<Expr> {
    parse_asset(BUNDLED_HYPERFEATURES).expect("bundled hyper-feature asset is valid")
}

/// Writes formulas one per line, the format `parse_asset` reads back.
pub fn format_asset(exprs: &[Expr]) -> String {
    let mut out = String::new();
    for e in exprs {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x(i: usize) -> Expr {
        Expr::feature(i)
    }

    #[test]
    fn protected_division() {
        let e = Expr::div(x(0), x(1));
        assert_eq!(e.evaluate(&[6.0, 2.0]).unwrap(), 3.0);
        assert_eq!(e.evaluate(&[6.0, 0.0]).unwrap(), 1.0);
        assert_eq!(e.evaluate(&[6.0, 1e-13]).unwrap(), 1.0);
    }

    #[test]
    fn difference_feature() {
        let e = Expr::sub(x(0), x(6));
        let v = e.evaluate(&[0.5, 9.0, 9.0, 9.0, 9.0, 9.0, 0.2]).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_feature_is_reported() {
        let e = Expr::add(x(0), x(4));
        assert_eq!(
            e.evaluate(&[1.0, 2.0]),
            Err(EvalError::FeatureOutOfRange { index: 4, arity: 2 })
        );
    }

    #[test]
    fn clamping() {
        let big = Expr::mul(x(0), x(0));
        assert_eq!(big.evaluate(&[1e100]).unwrap(), CLAMP_LIMIT);
        assert_eq!(
            Expr::sub(Expr::Const(0.0), big.clone()).evaluate(&[1e100]).unwrap(),
            -CLAMP_LIMIT
        );
        assert_eq!(x(0).evaluate(&[f64::NAN]).unwrap(), 0.0);
        assert_eq!(Expr::constant(f64::INFINITY), Expr::Const(0.0));
    }

    #[test]
    fn column_evaluation_matches_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let columns: Vec<Vec<f64>> = (0..4)
            .map(|c| (0..5).map(|r| (r * 4 + c) as f64 - 7.0).collect())
            .collect();
        for _ in 0..200 {
            let e = Expr::grow_random(6, 4, &mut rng);
            let col = e.evaluate_columns(&columns, 5).unwrap();
            for (r, v) in col.iter().enumerate() {
                let row: Vec<f64> = columns.iter().map(|c| c[r]).collect();
                assert_eq!(v.to_bits(), e.evaluate(&row).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn subtree_indexing_is_preorder() {
        // (X0 + X1) * X2
        let mut e = Expr::mul(Expr::add(x(0), x(1)), x(2));
        assert_eq!(e.subtree(1), Some(&Expr::add(x(0), x(1))));
        assert_eq!(e.subtree(3), Some(&x(1)));
        assert_eq!(e.subtree(4), Some(&x(2)));
        assert_eq!(e.subtree(5), None);
        let old = e.replace_subtree(2, x(5)).unwrap();
        assert_eq!(old, x(0));
        assert_eq!(e, Expr::mul(Expr::add(x(5), x(1)), x(2)));
        assert!(e.replace_subtree(9, x(0)).is_none());
    }

    #[test]
    fn grow_depth_one_is_a_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(matches!(Expr::grow_random(1, 7, &mut rng), Expr::Feature(i) if i < 7));
        }
    }

    #[test]
    fn grow_respects_depth_and_terminal_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut seen = [false; 7];
        for _ in 0..10_000 {
            let e = Expr::grow_random(6, 7, &mut rng);
            assert!((1..=6).contains(&e.depth()));
            assert!(!e.has_constant());
            mark_features(&e, &mut seen);
        }
        assert!(seen.iter().all(|&s| s));
    }

    fn mark_features(e: &Expr, seen: &mut [bool]) {
        match e {
            Expr::Feature(i) => seen[*i] = true,
            Expr::Const(_) => {}
            Expr::Binary(_, l, r) => {
                mark_features(l, seen);
                mark_features(r, seen);
            }
        }
    }

    #[test]
    fn bundled_asset_has_ten_formulas() {
        let hfs = bundled_hyperfeatures();
        assert_eq!(hfs.len(), 10);
        assert!(hfs.iter().all(|e| e.max_feature().unwrap() < 7));
    }
}
