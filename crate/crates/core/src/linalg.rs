//! Small dense symmetric-matrix routines (row-major `d × d` slices).

/// Relative pivot floor below which a factorization counts as failed.
const PIVOT_FLOOR: f64 = 1e-12;

/// Lower Cholesky factor of an SPD matrix, or `None` if a pivot is
/// non-finite or falls below `1e-12` times the largest diagonal entry.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let max_diag = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
    let floor = PIVOT_FLOOR * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !sum.is_finite() || sum <= floor {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                let v = sum / l[j * d + j];
                if !v.is_finite() {
                    return None;
                }
                l[i * d + j] = v;
            }
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix from its Cholesky factor, symmetrized exactly.
pub fn inverse_from_cholesky(l: &[f64], d: usize) -> Vec<f64> {
    // L^{-1} by forward substitution, then A^{-1} = L^{-T} L^{-1}.
    let mut linv = vec![0.0; d * d];
    for col in 0..d {
        for i in col..d {
            let mut sum = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                sum -= l[i * d + k] * linv[k * d + col];
            }
            linv[i * d + col] = sum / l[i * d + i];
        }
    }
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in i..d {
                sum += linv[k * d + i] * linv[k * d + j];
            }
            inv[i * d + j] = sum;
            inv[j * d + i] = sum;
        }
    }
    inv
}

/// `vᵀ A v` for a row-major `A`.
pub fn quadratic_form(a: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut total = 0.0;
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        let mut s = 0.0;
        for j in 0..d {
            s += row[j] * v[j];
        }
        total += v[i] * s;
    }
    total
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}
