//! Small dense solver for the policy-evaluation systems.

use crate::scalar::Scalar;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major `n×n`. Returns `None` when a pivot falls below `1e-13`.
pub fn solve_dense<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let tiny = T::tol(1e-13);
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tiny {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r * n + k] * x[k];
        }
        x[r] = acc / a[r * n + r];
    }
    Some(x)
}

/// Inverts a row-major `n×n` matrix by Gauss-Jordan elimination with
/// partial pivoting. Returns `None` when a pivot falls below `1e-13`.
pub fn invert_dense<T: Scalar>(mut a: Vec<T>, n: usize) -> Option<Vec<T>> {
    assert_eq!(a.len(), n * n);
    let tiny = T::tol(1e-13);
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = T::one();
    }
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tiny {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let d = T::one() / a[col * n + col];
        for k in 0..n {
            a[col * n + k] *= d;
            inv[col * n + k] *= d;
        }
        let (pivot_a, pivot_inv) = (a[col * n..(col + 1) * n].to_vec(), inv[col * n..(col + 1) * n].to_vec());
        for r in 0..n {
            let f = a[r * n + col];
            if r == col || f == T::zero() {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * pivot_a[k];
            }
            for (k, &p) in pivot_inv.iter().enumerate() {
                if p != T::zero() {
                    inv[r * n + k] -= f * p;
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = solve_dense(vec![0.0, 2.0, 1.0, 1.0f64], vec![4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_is_none() {
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0f64], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0f64];
        let inv = invert_dense(a.clone(), 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(invert_dense(vec![1.0, 2.0, 2.0, 4.0f64], 2).is_none());
    }
}
