//! Exponential and logarithm maps between `sym(n)` / `so(n)` and the
//! groups `Sym+(n)` / `SO(n)`.
//!
//! The symmetric maps use spectral calculus. `skew_exp` is a general
//! scaling-and-squaring Padé(6,6) exponential; `rotation_log` reads the
//! rotation angles off the real Schur form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Skew-symmetry tolerance for `skew_exp` inputs (relative to the largest entry).
pub const SKEW_TOL: f64 = 1e-12;
/// Orthogonality tolerance `|Q^T Q - I|_F` for `rotation_log` inputs.
pub const ROTATION_TOL: f64 = 1e-8;
/// Rotation angles closer than this to pi are rejected.
pub const BRANCH_MARGIN: f64 = 1e-6;

const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::input(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !linalg::is_finite(m) {
        return Err(Error::input(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    check_square(m, what)?;
    let asym = linalg::asymmetry(m);
    if asym > 1e-10 {
        return Err(Error::input(format!(
            "{what} is not symmetric (relative deviation {asym:e})"
        )));
    }
    Ok(())
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, v) = linalg::sym_eigen_desc(m);
    let fd = DVector::from_iterator(values.len(), values.iter().map(|&l| f(l)));
    linalg::symmetrize(&(&v * DMatrix::from_diagonal(&fd) * v.transpose()))
}

/// `exp(H)` for symmetric `H`; the result is SPD.
pub fn sym_exp(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(h, "sym_exp input")?;
    Ok(spectral_map(h, f64::exp))
}

/// Principal logarithm of an SPD matrix.
pub fn sym_log(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a, "sym_log input")?;
    let (values, _) = linalg::sym_eigen_desc(a);
    let min = *values.last().unwrap();
    if !(min > 0.0) {
        return Err(Error::Domain(format!(
            "sym_log needs a positive definite matrix, smallest eigenvalue is {min:e}"
        )));
    }
    Ok(spectral_map(a, f64::ln))
}

/// Matrix exponential by scaling and squaring with the diagonal Padé(6,6)
/// approximant, scaled so that `|X|_inf <= 1/2`.
pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm_inf = (0..n)
        .map(|i| x.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm_inf > 0.5 {
        (norm_inf / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = x * 2f64.powi(-squarings);
    let eye = DMatrix::<f64>::identity(n, n);
    let mut num = eye.clone() * PADE6[0];
    let mut den = eye.clone() * PADE6[0];
    let mut power = eye;
    for (k, &c) in PADE6.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut result = den.lu().solve(&num).expect("Pade denominator is nonsingular for |X| <= 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `exp(S)` for skew-symmetric `S`: a rotation.
pub fn skew_exp(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(s, "skew_exp input")?;
    let scale = s.amax();
    if scale > 0.0 && (s + s.transpose()).amax() > SKEW_TOL * scale {
        return Err(Error::input("skew_exp input is not skew-symmetric"));
    }
    let skew = (s - s.transpose()) * 0.5;
    Ok(expm(&skew))
}

/// Principal logarithm of a rotation: skew `S` with `exp(S) = Q` and all
/// rotation angles in `(-pi, pi)`.
pub fn rotation_log(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(q, "rotation_log input")?;
    let n = q.nrows();
    let defect = (q.transpose() * q - DMatrix::<f64>::identity(n, n)).norm();
    if defect > ROTATION_TOL {
        return Err(Error::Domain(format!(
            "matrix is not orthogonal (|Q^T Q - I|_F = {defect:e})"
        )));
    }
    let det = q.determinant();
    if det <= 0.0 {
        return Err(Error::Domain(format!("orthogonal matrix has determinant {det}")));
    }
    let (basis, t) = q.clone().schur().unpack();
    let mut log_t = DMatrix::<f64>::zeros(n, n);
    let limit = std::f64::consts::PI - BRANCH_MARGIN;
    let mut j = 0;
    while j < n {
        let is_pair = j + 1 < n && t[(j + 1, j)].abs() > 1e-14;
        if is_pair {
            let (a, b, c, d) = (t[(j, j)], t[(j, j + 1)], t[(j + 1, j)], t[(j + 1, j + 1)]);
            let angle = ((c - b) * 0.5).atan2((a + d) * 0.5);
            let (cos, sin) = (angle.cos(), angle.sin());
            let off_rotation = (a - cos).abs() + (d - cos).abs() + (c - sin).abs() + (b + sin).abs();
            if off_rotation > 1e-8 {
                // A 2x2 block with real eigenvalues: an orthogonal one has
                // eigenvalues +1 and -1, and -1 has no principal log.
                return Err(Error::LogBranch {
                    angle: std::f64::consts::PI,
                    margin: BRANCH_MARGIN,
                });
            }
            if angle.abs() > limit {
                return Err(Error::LogBranch {
                    angle,
                    margin: BRANCH_MARGIN,
                });
            }
            log_t[(j, j + 1)] = -angle;
            log_t[(j + 1, j)] = angle;
            j += 2;
        } else {
            if t[(j, j)] < 0.0 {
                return Err(Error::LogBranch {
                    angle: std::f64::consts::PI,
                    margin: BRANCH_MARGIN,
                });
            }
            j += 1;
        }
    }
    let s = &basis * log_t * basis.transpose();
    Ok((&s - s.transpose()) * 0.5)
}
