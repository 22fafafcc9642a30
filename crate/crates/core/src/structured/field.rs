//! Matrix-valued fields on the parameter samples (SPD tensors, rotations)
//! and their linear encoding through Lie-algebra log-coordinates.
//!
//! Flattening basis of the algebra, fixed for interchange:
//!
//! * `sym(n)`: the `n` diagonal entries, then the strict upper triangle in
//!   row-major order, off-diagonal entries multiplied by `sqrt(2)`;
//! * `so(n)`: the strict upper triangle in row-major order, times `sqrt(2)`.
//!
//! With this scaling the Euclidean inner product of encoded vectors equals
//! the Frobenius inner product of the matrices.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lie;
use crate::ensemble::{SampledMeasure, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on symmetry / skewness of samples and log-coordinates.
pub const ALGEBRA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Manifold {
    /// Symmetric positive definite matrices, encoded by `sym_log`.
    Spd,
    /// Special orthogonal matrices, encoded by `rotation_log`.
    Rotation,
    /// Samples already are symmetric log-coordinates.
    SymmetricLogCoords,
    /// Samples already are skew log-coordinates.
    SkewLogCoords,
}

/// A linear subspace `g` of `n x n` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LieAlgebra {
    Symmetric,
    Skew,
    General,
}

impl Manifold {
    pub fn algebra(self) -> LieAlgebra {
        match self {
            Manifold::Spd | Manifold::SymmetricLogCoords => LieAlgebra::Symmetric,
            Manifold::Rotation | Manifold::SkewLogCoords => LieAlgebra::Skew,
        }
    }

    fn exponentiates(self) -> bool {
        matches!(self, Manifold::Spd | Manifold::Rotation)
    }
}

impl LieAlgebra {
    /// Dimension of the algebra inside `n x n` matrices.
    pub fn dim(self, n: usize) -> usize {
        match self {
            LieAlgebra::Symmetric => n * (n + 1) / 2,
            LieAlgebra::Skew => n * n.saturating_sub(1) / 2,
            LieAlgebra::General => n * n,
        }
    }

    /// Largest deviation from membership, relative to the largest entry.
    pub fn deviation(self, m: &DMatrix<f64>) -> f64 {
        let scale = m.amax();
        if scale == 0.0 || !m.is_square() {
            return if m.is_square() { 0.0 } else { f64::INFINITY };
        }
        match self {
            LieAlgebra::Symmetric => (m - m.transpose()).amax() / scale,
            LieAlgebra::Skew => (m + m.transpose()).amax() / scale,
            LieAlgebra::General => 0.0,
        }
    }

    pub fn contains(self, m: &DMatrix<f64>) -> bool {
        self.deviation(m) <= ALGEBRA_TOL
    }

    /// Matrix size `n` whose algebra has dimension `dim`, if any.
    pub fn size_for_dim(self, dim: usize) -> Option<usize> {
        (0..=dim + 1).find(|&n| self.dim(n) == dim && n > 0)
    }

    /// Coordinates of `m` in the fixed orthonormal basis.
    pub fn flatten(self, m: &DMatrix<f64>) -> DVector<f64> {
        let n = m.nrows();
        let mut out = Vec::with_capacity(self.dim(n));
        match self {
            LieAlgebra::Symmetric => {
                out.extend((0..n).map(|i| m[(i, i)]));
                for i in 0..n {
                    for j in i + 1..n {
                        out.push(SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
                    }
                }
            }
            LieAlgebra::Skew => {
                for i in 0..n {
                    for j in i + 1..n {
                        out.push(SQRT_2 * 0.5 * (m[(i, j)] - m[(j, i)]));
                    }
                }
            }
            LieAlgebra::General => {
                for i in 0..n {
                    for j in 0..n {
                        out.push(m[(i, j)]);
                    }
                }
            }
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(self, v: &[f64], n: usize) -> Result<DMatrix<f64>> {
        if v.len() != self.dim(n) {
            return Err(Error::input(format!(
                "{} coordinates do not describe a {n}x{n} {self:?} matrix",
                v.len()
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut it = v.iter().copied();
        match self {
            LieAlgebra::Symmetric => {
                for i in 0..n {
                    m[(i, i)] = it.next().unwrap();
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let x = it.next().unwrap() / SQRT_2;
                        m[(i, j)] = x;
                        m[(j, i)] = x;
                    }
                }
            }
            LieAlgebra::Skew => {
                for i in 0..n {
                    for j in i + 1..n {
                        let x = it.next().unwrap() / SQRT_2;
                        m[(i, j)] = x;
                        m[(j, i)] = -x;
                    }
                }
            }
            LieAlgebra::General => {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = it.next().unwrap();
                    }
                }
            }
        }
        Ok(m)
    }
}

/// `N` matrices `A(mu_i)` on a manifold with their log-coordinates `H(mu_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFieldEnsemble {
    samples: Vec<DMatrix<f64>>,
    manifold: Manifold,
    log_coords: Vec<DMatrix<f64>>,
    measure: SampledMeasure,
}

impl MatrixFieldEnsemble {
    /// Validate samples against the manifold and compute their logarithms.
    pub fn new(samples: Vec<DMatrix<f64>>, manifold: Manifold, measure: SampledMeasure) -> Result<Self> {
        if samples.len() != measure.len() {
            return Err(Error::input(format!(
                "{} samples but the measure has {} points",
                samples.len(),
                measure.len()
            )));
        }
        let n = samples[0].nrows();
        if n == 0 || (manifold.algebra() == LieAlgebra::Skew && n < 2) {
            return Err(Error::Domain(format!("{manifold:?} fields need n >= 2, got {n}")));
        }
        let mut log_coords = Vec::with_capacity(samples.len());
        for (i, a) in samples.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::input(format!(
                    "sample {i} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let h = Self::log_of(a, manifold).map_err(|e| Error::at_sample(i, e))?;
            log_coords.push(h);
        }
        Ok(Self {
            samples,
            manifold,
            log_coords,
            measure,
        })
    }

    pub fn with_uniform_weights(samples: Vec<DMatrix<f64>>, manifold: Manifold) -> Result<Self> {
        let measure = SampledMeasure::uniform_unlabelled(samples.len())?;
        Self::new(samples, manifold, measure)
    }

    fn log_of(a: &DMatrix<f64>, manifold: Manifold) -> Result<DMatrix<f64>> {
        if !linalg::is_finite(a) {
            return Err(Error::Domain("sample has non-finite entries".into()));
        }
        match manifold {
            Manifold::Spd => {
                if linalg::asymmetry(a) > ALGEBRA_TOL {
                    return Err(Error::Domain("SPD sample is not symmetric".into()));
                }
                lie::sym_log(a)
            }
            Manifold::Rotation => lie::rotation_log(a),
            Manifold::SymmetricLogCoords | Manifold::SkewLogCoords => {
                let algebra = manifold.algebra();
                if !algebra.contains(a) {
                    return Err(Error::Domain(format!("sample is not in the {algebra:?} algebra")));
                }
                Ok(match algebra {
                    LieAlgebra::Skew => (a - a.transpose()) * 0.5,
                    _ => linalg::symmetrize(a),
                })
            }
        }
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    pub fn log_coords(&self) -> &[DMatrix<f64>] {
        &self.log_coords
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn measure(&self) -> &SampledMeasure {
        &self.measure
    }

    pub fn matrix_size(&self) -> usize {
        self.samples[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Flatten the log-coordinates into a snapshot ensemble over the algebra basis.
pub fn encode_field(field: &MatrixFieldEnsemble) -> Result<SnapshotEnsemble> {
    let algebra = field.manifold.algebra();
    let n = field.matrix_size();
    let d = algebra.dim(n);
    let mut data = DMatrix::zeros(d, field.len());
    for (i, h) in field.log_coords.iter().enumerate() {
        data.set_column(i, &algebra.flatten(h));
    }
    SnapshotEnsemble::new(data, field.measure.clone())
}

/// Unflatten each column into the algebra of `manifold` and exponentiate
/// (for the group tags) back onto the manifold.
pub fn decode_field(ens: &SnapshotEnsemble, manifold: Manifold) -> Result<MatrixFieldEnsemble> {
    let algebra = manifold.algebra();
    let n = algebra.size_for_dim(ens.state_dim()).ok_or_else(|| {
        Error::Domain(format!(
            "state dimension {} is not the dimension of any {algebra:?} algebra",
            ens.state_dim()
        ))
    })?;
    if algebra == LieAlgebra::Skew && n < 2 {
        return Err(Error::Domain("skew fields need n >= 2".into()));
    }
    let mut samples = Vec::with_capacity(ens.num_samples());
    let mut log_coords = Vec::with_capacity(ens.num_samples());
    for i in 0..ens.num_samples() {
        let h = algebra.unflatten(ens.data().column(i).as_slice(), n)?;
        let a = if manifold.exponentiates() {
            match algebra {
                LieAlgebra::Skew => lie::skew_exp(&h)?,
                _ => lie::sym_exp(&h)?,
            }
        } else {
            h.clone()
        };
        samples.push(a);
        log_coords.push(h);
    }
    Ok(MatrixFieldEnsemble {
        samples,
        manifold,
        log_coords,
        measure: ens.measure().clone(),
    })
}

/// Frobenius distance per sample between two fields of equal shape.
pub fn sample_distances(a: &MatrixFieldEnsemble, b: &MatrixFieldEnsemble) -> Result<Vec<f64>> {
    if a.len() != b.len() || a.matrix_size() != b.matrix_size() {
        return Err(Error::input("fields differ in size"));
    }
    Ok(a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (x - y).norm())
        .collect())
}

/// Parse a field from rows of `n*n` row-major entries.
pub fn field_from_rows(rows: &DMatrix<f64>, n: usize, manifold: Manifold) -> Result<MatrixFieldEnsemble> {
    if rows.ncols() != n * n {
        return Err(Error::input(format!(
            "matrix-field rows have {} columns, expected n^2 = {}",
            rows.ncols(),
            n * n
        )));
    }
    let samples = (0..rows.nrows())
        .map(|i| DMatrix::from_row_slice(n, n, rows.row(i).transpose().as_slice()))
        .collect();
    MatrixFieldEnsemble::with_uniform_weights(samples, manifold)
}

/// Inverse of [`field_from_rows`].
pub fn field_to_rows(field: &MatrixFieldEnsemble) -> DMatrix<f64> {
    let n = field.matrix_size();
    DMatrix::from_fn(field.len(), n * n, |i, k| field.samples[i][(k / n, k % n)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::kl_expand;
    use crate::testutil::*;

    fn random_spd(seed: u64, n: usize) -> DMatrix<f64> {
        let mut rng = rng(seed);
        let m = random_matrix(&mut rng, n, n);
        let h = linalg::symmetrize(&m);
        lie::sym_exp(&(&h * (1.5 / linalg::norm2(&h)))).unwrap()
    }

    #[test]
    fn flatten_preserves_frobenius_inner_product() {
        let mut rng = rng(61);
        for algebra in [LieAlgebra::Symmetric, LieAlgebra::Skew, LieAlgebra::General] {
            let (a, b) = (random_matrix(&mut rng, 4, 4), random_matrix(&mut rng, 4, 4));
            let project = |m: &DMatrix<f64>| match algebra {
                LieAlgebra::Symmetric => linalg::symmetrize(m),
                LieAlgebra::Skew => (m - m.transpose()) * 0.5,
                LieAlgebra::General => m.clone(),
            };
            let (a, b) = (project(&a), project(&b));
            let frob = a.component_mul(&b).sum();
            let flat = algebra.flatten(&a).dot(&algebra.flatten(&b));
            assert!((frob - flat).abs() < 1e-12);
            let back = algebra.unflatten(algebra.flatten(&a).as_slice(), 4).unwrap();
            assert!((back - a).amax() < 1e-15);
        }
    }

    #[test]
    fn basis_order_is_diagonal_then_upper_row_major() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = LieAlgebra::Symmetric.flatten(&m);
        let expect = [1.0, 4.0, 6.0, 2.0 * SQRT_2, 3.0 * SQRT_2, 5.0 * SQRT_2];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(LieAlgebra::Symmetric.size_for_dim(6), Some(3));
        assert_eq!(LieAlgebra::Skew.size_for_dim(6), Some(4));
        assert_eq!(LieAlgebra::Symmetric.size_for_dim(4), None);
    }

    #[test]
    fn identity_field_encodes_to_zero() {
        let field =
            MatrixFieldEnsemble::with_uniform_weights(vec![DMatrix::identity(3, 3); 4], Manifold::Spd).unwrap();
        let ens = encode_field(&field).unwrap();
        assert_eq!((ens.state_dim(), ens.num_samples()), (6, 4));
        assert!(ens.data().amax() < 1e-15);
    }

    #[test]
    fn scalar_field_encodes_to_logs() {
        let values = [0.5, 1.0, 2.0, 7.5];
        let samples = values.iter().map(|&a| DMatrix::from_element(1, 1, a)).collect();
        let ens = encode_field(&MatrixFieldEnsemble::with_uniform_weights(samples, Manifold::Spd).unwrap()).unwrap();
        for (i, a) in values.iter().enumerate() {
            assert!((ens.data()[(0, i)] - a.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn spd_field_roundtrip_through_pod() {
        let samples: Vec<_> = (0..6).map(|i| random_spd(70 + i, 3)).collect();
        let field = MatrixFieldEnsemble::with_uniform_weights(samples, Manifold::Spd).unwrap();
        let ens = encode_field(&field).unwrap();
        let kl = kl_expand(&ens);
        let rebuilt = SnapshotEnsemble::new(kl.reconstruct_all(), ens.measure().clone()).unwrap();
        let decoded = decode_field(&rebuilt, Manifold::Spd).unwrap();
        for err in sample_distances(&field, &decoded).unwrap() {
            assert!(err <= 1e-8, "{err}");
        }
    }

    #[test]
    fn rotation_field_roundtrip() {
        let mut rng = rng(62);
        let samples: Vec<_> = (0..5)
            .map(|_| {
                let m = random_matrix(&mut rng, 3, 3);
                let s = (&m - m.transpose()) * 0.5;
                lie::skew_exp(&(&s * (2.0 / linalg::norm2(&s)))).unwrap()
            })
            .collect();
        let field = MatrixFieldEnsemble::with_uniform_weights(samples, Manifold::Rotation).unwrap();
        let ens = encode_field(&field).unwrap();
        assert_eq!(ens.state_dim(), 3);
        let decoded = decode_field(&ens, Manifold::Rotation).unwrap();
        for err in sample_distances(&field, &decoded).unwrap() {
            assert!(err <= 1e-8);
        }
    }

    #[test]
    fn log_coordinate_tags_pass_through() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -1.5, 0.0]);
        let field = MatrixFieldEnsemble::with_uniform_weights(vec![h.clone()], Manifold::SkewLogCoords).unwrap();
        let ens = encode_field(&field).unwrap();
        assert!((ens.data()[(0, 0)] - 1.5 * SQRT_2).abs() < 1e-15);
        let back = decode_field(&ens, Manifold::SkewLogCoords).unwrap();
        assert!((&back.samples()[0] - h).amax() < 1e-15);
    }

    #[test]
    fn tag_mismatch_is_domain_error() {
        let not_spd = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let err = MatrixFieldEnsemble::with_uniform_weights(vec![DMatrix::identity(2, 2), not_spd], Manifold::Spd)
            .unwrap_err();
        match err {
            Error::AtSample { index, source } => {
                assert_eq!(index, 1);
                assert!(matches!(*source, Error::Domain(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
        let sym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MatrixFieldEnsemble::with_uniform_weights(vec![sym], Manifold::Rotation).is_err());
        let ens = SnapshotEnsemble::with_uniform_weights(DMatrix::zeros(4, 2)).unwrap();
        assert!(matches!(decode_field(&ens, Manifold::Spd), Err(Error::Domain(_))));
        assert!(MatrixFieldEnsemble::with_uniform_weights(vec![DMatrix::identity(1, 1)], Manifold::Rotation).is_err());
    }

    #[test]
    fn rows_roundtrip() {
        let samples: Vec<_> = (0..3).map(|i| random_spd(80 + i, 2)).collect();
        let field = MatrixFieldEnsemble::with_uniform_weights(samples, Manifold::Spd).unwrap();
        let rows = field_to_rows(&field);
        assert_eq!(rows.shape(), (3, 4));
        let back = field_from_rows(&rows, 2, Manifold::Spd).unwrap();
        assert_eq!(back.samples(), field.samples());
    }
}
