//! Dense decompositions with deterministic conventions.
//!
//! All factorizations are delegated to `nalgebra`; this module pins the
//! conventions the rest of the crate relies on:
//!
//! * singular values and symmetric eigenvalues are returned sorted descending;
//! * each singular/eigen vector is sign-normalized so its first entry with
//!   magnitude above [`SIGN_EPS`] is positive, making factorizations
//!   reproducible across runs;
//! * symmetric solves fall back to an eigenvalue pseudo-inverse (minimum-norm
//!   solution) when the system is rank-deficient, and report that they did.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Entries at or below this magnitude are treated as zero when picking the
/// sign-defining entry of a singular/eigen vector.
pub const SIGN_EPS: f64 = 1e-12;

/// Thin singular value decomposition `a = u * diag(s) * v^T`.
///
/// `u` is `m x k`, `v` is `n x k`, `s` has length `k = min(m, n)` and is
/// sorted descending. Columns of `u`/`v` follow the sign convention above.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

pub(crate) fn na_from_array2(a: &ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

pub(crate) fn array2_from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub(crate) fn na_from_array1(v: &ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub(crate) fn array1_from_na(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Flips the sign of column `j` in `cols` (and of the paired column in
/// `paired`, if any) so the first entry with `|x| > SIGN_EPS` is positive.
fn fix_column_signs(cols: &mut DMatrix<f64>, mut paired: Option<&mut DMatrix<f64>>) {
    for j in 0..cols.ncols() {
        let lead = (0..cols.nrows())
            .map(|i| cols[(i, j)])
            .find(|x| x.abs() > SIGN_EPS);
        if let Some(x) = lead {
            if x < 0.0 {
                for i in 0..cols.nrows() {
                    cols[(i, j)] = -cols[(i, j)];
                }
                if let Some(p) = paired.as_deref_mut() {
                    for i in 0..p.nrows() {
                        p[(i, j)] = -p[(i, j)];
                    }
                }
            }
        }
    }
}

/// Thin SVD with descending singular values and sign-normalized vectors.
///
/// Implemented as one-sided Jacobi rather than delegated: the implicit-QR SVD
/// shipped with the matrix library returns singular values wrong by ~1e-2 on
/// exactly rank-deficient inputs (see the regression test below), and
/// rank-deficient matrices are this crate's bread and butter — every
/// singular-value soft-thresholding output is one. One-sided Jacobi preserves
/// high relative accuracy for small singular values and keeps normalized
/// columns orthonormal by construction.
pub fn thin_svd(a: &ArrayView2<f64>) -> ThinSvd {
    let (m, n) = a.dim();
    if m >= n {
        jacobi_svd_tall(a)
    } else {
        let t = a.t().to_owned();
        let svd = jacobi_svd_tall(&t.view());
        let mut u = na_from_array2(&svd.v.view());
        let mut v = na_from_array2(&svd.u.view());
        fix_column_signs(&mut u, Some(&mut v));
        ThinSvd {
            u: array2_from_na(&u),
            s: svd.s,
            v: array2_from_na(&v),
        }
    }
}

/// One-sided Jacobi SVD for `m >= n`: rotates column pairs of a working copy
/// until all pairs are relatively orthogonal, then reads off `sigma_j` as the
/// column norms. Deterministic; at most 60 sweeps (typical matrices need < 15).
fn jacobi_svd_tall(a: &ArrayView2<f64>) -> ThinSvd {
    let (m, n) = a.dim();
    let mut w = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let mut s = Array1::zeros(n);
    let mut u = Array2::zeros((m, n));
    let mut vv = Array2::zeros((n, n));
    let mut zero_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        for i in 0..n {
            vv[(i, dst)] = v[(i, src)];
        }
        if norms[src] > 0.0 {
            for i in 0..m {
                u[(i, dst)] = w[(i, src)] / norms[src];
            }
        } else {
            zero_cols.push(dst);
        }
    }
    // Exactly zero columns get a deterministic orthonormal completion.
    for dst in zero_cols {
        'basis: for k in 0..m {
            let mut r = Array1::<f64>::zeros(m);
            r[k] = 1.0;
            for j in 0..n {
                if j == dst {
                    continue;
                }
                let proj: f64 = (0..m).map(|i| u[(i, j)] * r[i]).sum();
                for i in 0..m {
                    r[i] -= proj * u[(i, j)];
                }
            }
            let rn = r.dot(&r).sqrt();
            if rn > 0.5 {
                for i in 0..m {
                    u[(i, dst)] = r[i] / rn;
                }
                break 'basis;
            }
        }
    }
    let mut un = na_from_array2(&u.view());
    let mut vn = na_from_array2(&vv.view());
    fix_column_signs(&mut un, Some(&mut vn));
    ThinSvd {
        u: array2_from_na(&un),
        s,
        v: array2_from_na(&vn),
    }
}

/// Eigenvalues (descending) and matching orthonormal eigenvector columns of a
/// symmetric matrix. Symmetry is the caller's responsibility; only the given
/// entries are used as-is.
pub fn sym_eig_desc(a: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(na_from_array2(a));
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues are finite")
    });
    let mut values = DVector::zeros(k);
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), k);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_signs(&mut vectors, None);
    (array1_from_na(&values), array2_from_na(&vectors))
}

/// Solves the symmetric system `g x = b`.
///
/// Tries Cholesky first; on failure (or an unreliable solve) falls back to an
/// eigenvalue pseudo-inverse, which yields the minimum-norm solution of the
/// least-squares problem. Returns `(x, rank_deficient)`.
pub fn solve_sym(g: &ArrayView2<f64>, b: &ArrayView1<f64>) -> (Array1<f64>, bool) {
    let gn = na_from_array2(g);
    let bn = na_from_array1(b);
    if let Some(chol) = nalgebra::Cholesky::new(gn.clone()) {
        let x = chol.solve(&bn);
        let residual = (&gn * &x - &bn).norm();
        let scale = gn.norm() * x.norm() + bn.norm();
        if residual <= 1e-8 * (scale + 1.0) {
            return (array1_from_na(&x), false);
        }
    }
    let (vals, vecs) = sym_eig_desc(g);
    let lead = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = (g.nrows() as f64) * f64::EPSILON * lead.max(f64::MIN_POSITIVE);
    let mut x = Array1::<f64>::zeros(b.len());
    let mut deficient = false;
    for (j, &lam) in vals.iter().enumerate() {
        if lam > cutoff {
            let col = vecs.column(j);
            let coeff = col.dot(b) / lam;
            x.scaled_add(coeff, &col);
        } else {
            deficient = true;
        }
    }
    (x, deficient)
}

/// Orthonormal basis for the column span of `a` via thin QR, sign-normalized.
/// `a` must have full column rank.
pub fn orthonormal_cols(a: &ArrayView2<f64>) -> Array2<f64> {
    let qr = na_from_array2(a).qr();
    let mut q = qr.q();
    fix_column_signs(&mut q, None);
    array2_from_na(&q)
}

/// Largest principal-angle sine between equal-rank orthonormal column spans:
/// `sigma_max((I - b b^T) a)`. Zero-rank spans compare as identical.
pub fn subspace_max_sin(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    if a.ncols() == 0 && b.ncols() == 0 {
        return 0.0;
    }
    let proj = b.dot(&b.t().dot(a));
    let resid = a - &proj;
    let svd = thin_svd(&resid.view());
    svd.s.iter().cloned().fold(0.0_f64, f64::max)
}

/// Largest eigenvalue of a symmetric PSD operator given by `apply`, via power
/// iteration with a fixed deterministic start vector. Converges the Rayleigh
/// quotient to ~1e-13 relative change; the result is a (slight) underestimate,
/// so callers needing an upper bound must inflate it.
pub fn power_iter_sym<F>(dim: usize, apply: F) -> f64
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    assert!(dim > 0, "power iteration needs a positive dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut v = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    v.mapv_inplace(|x| x / norm);
    let mut rayleigh = 0.0_f64;
    for _ in 0..10_000 {
        let w = apply(&v);
        let new_rayleigh = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        let done = (new_rayleigh - rayleigh).abs() <= 1e-13 * new_rayleigh.abs().max(1e-300);
        rayleigh = new_rayleigh;
        if done {
            break;
        }
        v = w / wn;
    }
    rayleigh
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn thin_svd_reconstructs_and_sorts() {
        let a = array![
            [1.0, 2.0, 0.5],
            [-0.3, 0.7, 1.1],
            [0.2, -0.4, 0.9],
            [1.5, 0.1, -0.6]
        ];
        let svd = thin_svd(&a.view());
        assert_eq!(svd.u.dim(), (4, 3));
        assert_eq!(svd.v.dim(), (3, 3));
        for i in 1..3 {
            assert!(svd.s[i - 1] >= svd.s[i]);
        }
        let recon = svd.u.dot(&Array2::from_diag(&svd.s)).dot(&svd.v.t());
        assert_abs_diff_eq!(recon, a, epsilon = 1e-12);
        // Sign convention: every left singular vector leads with a positive entry.
        for j in 0..3 {
            let lead = svd.u.column(j).iter().cloned().find(|x| x.abs() > SIGN_EPS);
            assert!(lead.expect("nonzero column") > 0.0);
        }
    }

    /// Regression oracle (frozen from numpy): an exactly rank-deficient matrix
    /// whose middle singular value the delegated implicit-QR SVD reported as
    /// 0.9112643278 instead of 0.8854447456.
    #[test]
    fn rank_deficient_singular_values_match_frozen_oracle() {
        let a = array![
            [-5.28070479300310147e-1, 5.43663306024048221e-1, -6.02444717143062469e-1],
            [2.65790453663297843e-1, -2.61996188845657341e-1, 3.65639227913355902e-1],
            [-3.49582169468959786e-2, 1.03853554593850456e-1, 3.23926279470595491e-1],
            [-5.10957890133899029e-2, 3.23946021243699700e-1, 1.39634555430480489e0]
        ];
        let svd = thin_svd(&a.view());
        assert_abs_diff_eq!(svd.s[0], 1.6126384151455, epsilon = 1e-12);
        assert_abs_diff_eq!(svd.s[1], 0.885444745582792, epsilon = 1e-12);
        assert!(svd.s[2] <= 1e-14);
        let gram_u = svd.u.t().dot(&svd.u);
        let gram_v = svd.v.t().dot(&svd.v);
        assert_abs_diff_eq!(gram_u, Array2::eye(3), epsilon = 1e-13);
        assert_abs_diff_eq!(gram_v, Array2::eye(3), epsilon = 1e-13);
        let recon = svd.u.dot(&Array2::from_diag(&svd.s)).dot(&svd.v.t());
        assert_abs_diff_eq!(recon, a, epsilon = 1e-13);
    }

    #[test]
    fn wide_zero_and_single_column_edge_cases() {
        // Wide matrix: factors swap through the transposed path.
        let a = array![[1.0, 0.0, 2.0, -1.0], [0.0, 3.0, 0.5, 1.0]];
        let svd = thin_svd(&a.view());
        assert_eq!(svd.u.dim(), (2, 2));
        assert_eq!(svd.v.dim(), (4, 2));
        let recon = svd.u.dot(&Array2::from_diag(&svd.s)).dot(&svd.v.t());
        assert_abs_diff_eq!(recon, a, epsilon = 1e-12);

        let z = Array2::<f64>::zeros((3, 2));
        let svdz = thin_svd(&z.view());
        assert_eq!(svdz.s, ndarray::Array1::<f64>::zeros(2));
        // Completed factors are still orthonormal.
        assert_abs_diff_eq!(svdz.u.t().dot(&svdz.u), Array2::eye(2), epsilon = 1e-14);

        let c = array![[3.0], [4.0]];
        let svdc = thin_svd(&c.view());
        assert_abs_diff_eq!(svdc.s[0], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_is_deterministic_under_repetition() {
        let a = array![[0.3, -1.2], [2.0, 0.8], [-0.5, 0.4]];
        let s1 = thin_svd(&a.view());
        let s2 = thin_svd(&a.view());
        assert_eq!(s1.u, s2.u);
        assert_eq!(s1.s, s2.s);
        assert_eq!(s1.v, s2.v);
    }

    #[test]
    fn sym_eig_sorted_and_orthonormal() {
        let a = array![[2.0, 0.3, 0.0], [0.3, 5.0, 0.1], [0.0, 0.1, 1.0]];
        let (vals, vecs) = sym_eig_desc(&a.view());
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let gram = vecs.t().dot(&vecs);
        assert_abs_diff_eq!(gram, Array2::eye(3), epsilon = 1e-12);
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        assert_abs_diff_eq!(recon, a, epsilon = 1e-12);
    }

    #[test]
    fn solve_sym_full_rank() {
        let g = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![1.0, 2.0];
        let (x, deficient) = solve_sym(&g.view(), &b.view());
        assert!(!deficient);
        assert_abs_diff_eq!(g.dot(&x), b, epsilon = 1e-12);
    }

    #[test]
    fn solve_sym_singular_returns_min_norm() {
        // g x = b has solutions x1 + x2 = 2; the minimum-norm one is (1, 1).
        let g = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![2.0, 2.0];
        let (x, deficient) = solve_sym(&g.view(), &b.view());
        assert!(deficient);
        assert_abs_diff_eq!(x, array![1.0, 1.0], epsilon = 1e-10);
    }

    #[test]
    fn power_iteration_matches_dense_eigensolve() {
        let a = array![
            [3.0, 1.0, 0.2, 0.0],
            [1.0, 2.5, 0.4, 0.1],
            [0.2, 0.4, 1.8, 0.3],
            [0.0, 0.1, 0.3, 0.9]
        ];
        let (vals, _) = sym_eig_desc(&a.view());
        let est = power_iter_sym(4, |v| a.dot(v));
        assert_abs_diff_eq!(est, vals[0], epsilon = 1e-9 * vals[0]);
    }

    #[test]
    fn subspace_sin_zero_for_same_span_one_for_orthogonal() {
        let e01 = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        // Same span, different basis (rotation by 30 degrees).
        let c = 0.75_f64.sqrt();
        let rot = array![[c, -0.5], [0.5, c], [0.0, 0.0]];
        assert_abs_diff_eq!(subspace_max_sin(&e01.view(), &rot.view()), 0.0, epsilon = 1e-12);
        let e2 = array![[0.0], [0.0], [1.0]];
        let e0 = array![[1.0], [0.0], [0.0]];
        assert_abs_diff_eq!(subspace_max_sin(&e0.view(), &e2.view()), 1.0, epsilon = 1e-12);
    }
}
