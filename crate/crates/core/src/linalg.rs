//! Dense linear-algebra helpers shared by the decomposition modules.
//!
//! All routines return spectra in descending order with a stable ordering
//! among equal values, and apply the crate-wide sign convention to
//! singular/eigen vectors.

use nalgebra::{DMatrix, DVector};

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Thin SVD `a = U diag(s) V^T` with singular values in descending order.
///
/// Returns `(U, s, V)` where `U` is `m x k`, `V` is `n x k`, `k = min(m, n)`.
pub fn svd_desc(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (DMatrix::zeros(m, 0), Vec::new(), DMatrix::zeros(n, 0));
    }
    if m < n {
        let (v, s, u) = svd_desc(&a.transpose());
        return (u, s, v);
    }
    let (mut work, mut v) = (a.clone(), DMatrix::identity(n, n));
    jacobi_sweeps(&mut work, &mut v);
    let norms: Vec<f64> = (0..n).map(|j| work.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms[order[0]];
    let mut uo = DMatrix::zeros(m, k);
    let mut vo = DMatrix::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    let mut filled = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        vo.set_column(dst, &v.column(src));
        if sigma > f64::EPSILON * top && sigma > 0.0 {
            uo.set_column(dst, &(work.column(src) / sigma));
            filled.push(dst);
        }
        s.push(sigma);
    }
    complete_orthonormal(&mut uo, &filled);
    (uo, s, vo)
}

/// One-sided (Hestenes) Jacobi: rotate column pairs of `work` until they
/// are mutually orthogonal, accumulating the rotations in `v`.
fn jacobi_sweeps(work: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = work.ncols();
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = work.column(p).norm_squared();
                let beta = work.column(q).norm_squared();
                let gamma = work.column(p).dot(&work.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_columns(work, p, q, c, sn);
                rotate_columns(v, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fill the columns of `u` not listed in `filled` with unit vectors
/// orthogonal to everything already there (Gram-Schmidt on the identity).
fn complete_orthonormal(u: &mut DMatrix<f64>, filled: &[usize]) {
    let (m, k) = u.shape();
    let mut basis: Vec<usize> = filled.to_vec();
    let mut candidate = 0;
    for j in 0..k {
        if filled.contains(&j) {
            continue;
        }
        while candidate < m {
            let mut x = DVector::zeros(m);
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &b in &basis {
                    let proj = u.column(b).dot(&x);
                    x.axpy(-proj, &u.column(b), 1.0);
                }
            }
            let nx = x.norm();
            if nx > 1e-8 {
                u.set_column(j, &(x / nx));
                basis.push(j);
                break;
            }
        }
    }
}

/// Number of singular values above `RANK_TOL * s[0]` (input sorted descending).
pub fn numerical_rank(s: &[f64]) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().take_while(|&&x| x > RANK_TOL * top).count(),
        _ => 0,
    }
}

/// Flip column `j` of `primary` (and of `partner`, when given) so the first
/// entry of largest magnitude in `primary[:, j]` is nonnegative.
pub fn fix_signs(primary: &mut DMatrix<f64>, mut partner: Option<&mut DMatrix<f64>>) {
    for j in 0..primary.ncols() {
        let col = primary.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            primary.column_mut(j).neg_mut();
            if let Some(p) = partner.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest entrywise deviation from symmetry relative to the largest entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

/// Left-to-right dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn column_vec(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.column(j).into_owned()
}

/// Spectral 2-norm of a matrix.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    svd_desc(m).1.first().copied().unwrap_or(0.0)
}
