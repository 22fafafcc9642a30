//! Reproducing kernel of a sampled model: the Gram matrix
//! `G_ij = <r(mu_i), r(mu_j)>_U` and the RKHS it induces on the samples.
//!
//! Functions in the RKHS are represented by coefficient vectors `a` against
//! the kernel sections, `phi = sum_i a_i k(mu_i, .)`. Out-of-sample
//! evaluation needs the caller to supply the new snapshots; see
//! [`cross_gram`].

use nalgebra::{DMatrix, DVector};

use crate::ensemble::SnapshotEnsemble;
use crate::error::{Error, Result};
use crate::linalg;

/// Symmetric PSD `N x N` Gram matrix of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GramKernel {
    entries: DMatrix<f64>,
    state_dim: usize,
}

/// `phi = sum_i a_i k(mu_i, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsFunction {
    pub coeffs: DVector<f64>,
}

impl RkhsFunction {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    /// The kernel section `k(mu_i, .)`.
    pub fn section(n: usize, i: usize) -> Self {
        Self {
            coeffs: DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// `G = A^T A`, independent of the measure weights.
pub fn gram(ens: &SnapshotEnsemble) -> GramKernel {
    let a = ens.data();
    let n = a.ncols();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = linalg::dot(a.column(i).as_slice(), a.column(j).as_slice());
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    GramKernel {
        entries: g,
        state_dim: a.nrows(),
    }
}

/// Kernel values `<r(mu_i), r(nu_j)>_U` between two ensembles sharing `U`.
pub fn cross_gram(left: &SnapshotEnsemble, right: &SnapshotEnsemble) -> Result<DMatrix<f64>> {
    if left.state_dim() != right.state_dim() {
        return Err(Error::input(format!(
            "state dimensions differ: {} vs {}",
            left.state_dim(),
            right.state_dim()
        )));
    }
    let (a, b) = (left.data(), right.data());
    Ok(DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        linalg::dot(a.column(i).as_slice(), b.column(j).as_slice())
    }))
}

impl GramKernel {
    /// Wrap a Gram matrix computed elsewhere. Must be square and symmetric.
    pub fn from_entries(entries: DMatrix<f64>, state_dim: usize) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::input("Gram matrix must be square"));
        }
        if linalg::asymmetry(&entries) > crate::ensemble::SYMMETRY_TOL {
            return Err(Error::input("Gram matrix is not symmetric"));
        }
        Ok(Self { entries, state_dim })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Source dimensions `(d, N)`.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.state_dim, self.size())
    }

    fn check(&self, f: &RkhsFunction) -> Result<()> {
        if f.len() != self.size() {
            return Err(Error::input(format!(
                "RKHS function has {} coefficients, kernel has {} samples",
                f.len(),
                self.size()
            )));
        }
        Ok(())
    }

    fn row_dot(&self, j: usize, a: &DVector<f64>) -> f64 {
        (0..self.size()).fold(0.0, |acc, k| acc + self.entries[(j, k)] * a[k])
    }

    /// `<a, b>_R = a^T G b`.
    pub fn inner(&self, a: &RkhsFunction, b: &RkhsFunction) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let n = self.size();
        Ok((0..n).fold(0.0, |acc, i| acc + a.coeffs[i] * self.row_dot(i, &b.coeffs)))
    }

    /// `<k(mu_j, .), phi>_R = e_j^T G a`.
    pub fn reproduce(&self, j: usize, phi: &RkhsFunction) -> Result<f64> {
        self.check(phi)?;
        if j >= self.size() {
            return Err(Error::input(format!(
                "sample index {j} out of range for {} samples",
                self.size()
            )));
        }
        Ok(self.row_dot(j, &phi.coeffs))
    }

    /// Pointwise values `phi(mu_j) = (G a)_j` at every sample.
    pub fn evaluate(&self, phi: &RkhsFunction) -> Result<DVector<f64>> {
        self.check(phi)?;
        Ok(DVector::from_fn(self.size(), |j, _| self.row_dot(j, &phi.coeffs)))
    }

    /// Eigenvalues of `G`, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigen_desc(&self.entries).0
    }
}

/// Lift coefficients to the state space: `sum_i a_i r(mu_i)`.
pub fn synthesize(ens: &SnapshotEnsemble, phi: &RkhsFunction) -> Result<DVector<f64>> {
    if phi.len() != ens.num_samples() {
        return Err(Error::input("coefficient length does not match the ensemble"));
    }
    Ok(ens.data() * &phi.coeffs)
}
