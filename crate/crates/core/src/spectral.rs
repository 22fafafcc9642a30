//! Spectral decomposition of the correlation, SVD of the associated linear
//! map (Karhunen-Loeve / POD expansion), best n-term truncation, the
//! method of snapshots on the parameter side, and factorizations `C = B^T B`.
//!
//! Conventions shared by every routine here:
//!
//! * spectra are sorted descending, ties keep their original order;
//! * a singular value `s_m <= 1e-12 * s_1` counts as zero, and on the
//!   eigenvalue side `lambda_m <= 1e-12 * lambda_1` does;
//! * each spatial mode (eigenvector) is flipped so its first entry of
//!   largest magnitude is nonnegative, with the paired parametric mode
//!   flipped along with it.

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{CorrelationMatrix, SampledMeasure, SnapshotEnsemble, PSD_TOL};
use crate::error::{Error, Result};
use crate::kernel::GramKernel;
use crate::linalg::{self, RANK_TOL};

/// Mismatch allowed between `B1^T B1` and `B2^T B2` in [`unitary_equivalence`].
pub const FACTOR_CONSISTENCY_TOL: f64 = 1e-8;

/// `C = sum_m lambda_m v_m v_m^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues)) * v.transpose()
    }
}

/// `r(mu_i) = sum_m sigma_m s_m(mu_i) v_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlExpansion {
    singular_values: Vec<f64>,
    /// `d x M`, orthonormal in `U`.
    spatial_modes: DMatrix<f64>,
    /// `N x M`, orthonormal in `Q`: `S^T W S = I`.
    parametric_modes: DMatrix<f64>,
    weights: Vec<f64>,
    discarded_energy: f64,
}

/// How many modes [`KlExpansion::truncate`] keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep exactly this many modes.
    Rank(usize),
    /// Keep the fewest modes with discarded energy `sum_{m>n} lambda_m <= eps^2`.
    Energy(f64),
}

impl KlExpansion {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `lambda_m = sigma_m^2`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s * s).collect()
    }

    pub fn spatial_modes(&self) -> &DMatrix<f64> {
        &self.spatial_modes
    }

    pub fn parametric_modes(&self) -> &DMatrix<f64> {
        &self.parametric_modes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state_dim(&self) -> usize {
        self.spatial_modes.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.parametric_modes.nrows()
    }

    /// Energy removed by truncation so far: `sum_{m>n} lambda_m`.
    pub fn discarded_energy(&self) -> f64 {
        self.discarded_energy
    }

    /// Energy still carried by the expansion, `sum_m lambda_m`.
    pub fn retained_energy(&self) -> f64 {
        self.singular_values.iter().rev().map(|s| s * s).sum()
    }

    /// `tail[n] = sum_{m>n} lambda_m` for `n = 0..=rank`, summed from the
    /// small end.
    pub fn tail_energies(&self) -> Vec<f64> {
        let r = self.rank();
        let mut tail = vec![0.0; r + 1];
        for n in (0..r).rev() {
            tail[n] = tail[n + 1] + self.singular_values[n] * self.singular_values[n];
        }
        tail
    }

    pub fn truncate(&self, how: Truncation) -> Result<KlExpansion> {
        let tail = self.tail_energies();
        let n = match how {
            Truncation::Rank(n) => {
                if n > self.rank() {
                    return Err(Error::input(format!(
                        "cannot keep {n} modes of a rank-{} expansion",
                        self.rank()
                    )));
                }
                n
            }
            Truncation::Energy(eps) => {
                if !(eps >= 0.0) {
                    return Err(Error::input(format!("energy tolerance {eps} is negative")));
                }
                let budget = eps * eps;
                (0..=self.rank()).find(|&n| tail[n] <= budget).unwrap_or(self.rank())
            }
        };
        Ok(KlExpansion {
            singular_values: self.singular_values[..n].to_vec(),
            spatial_modes: self.spatial_modes.columns(0, n).into_owned(),
            parametric_modes: self.parametric_modes.columns(0, n).into_owned(),
            weights: self.weights.clone(),
            discarded_energy: self.discarded_energy + tail[n],
        })
    }

    /// `sum_m sigma_m s_m(mu_i) v_m`.
    pub fn reconstruct(&self, i: usize) -> Result<DVector<f64>> {
        if i >= self.num_samples() {
            return Err(Error::input(format!(
                "sample index {i} out of range for {} samples",
                self.num_samples()
            )));
        }
        let mut out = DVector::zeros(self.state_dim());
        for m in 0..self.rank() {
            out.axpy(
                self.singular_values[m] * self.parametric_modes[(i, m)],
                &self.spatial_modes.column(m),
                1.0,
            );
        }
        Ok(out)
    }

    /// All reconstructed snapshots as a `d x N` matrix.
    pub fn reconstruct_all(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.state_dim(), self.num_samples());
        for i in 0..self.num_samples() {
            out.set_column(i, &self.reconstruct(i).expect("index in range"));
        }
        out
    }

    /// Measured `sum_i w_i |r(mu_i) - r_n(mu_i)|^2` against an ensemble.
    pub fn weighted_error(&self, ens: &SnapshotEnsemble) -> Result<f64> {
        if ens.state_dim() != self.state_dim() || ens.num_samples() != self.num_samples() {
            return Err(Error::input("ensemble shape does not match the expansion"));
        }
        let mut err = 0.0;
        for (i, &w) in ens.weights().iter().enumerate() {
            let diff = ens.data().column(i) - self.reconstruct(i)?;
            err += w * diff.norm_squared();
        }
        Ok(err)
    }

    /// Largest entry of `|V^T V - I|` and `|S^T W S - I|`.
    pub fn orthonormality_defect(&self) -> (f64, f64) {
        let r = self.rank();
        let eye = DMatrix::<f64>::identity(r, r);
        let v = &self.spatial_modes;
        let spatial = (v.transpose() * v - &eye).amax();
        let ws = DMatrix::from_fn(self.num_samples(), r, |i, m| {
            self.weights[i] * self.parametric_modes[(i, m)]
        });
        let parametric = (self.parametric_modes.transpose() * ws - eye).amax();
        (spatial, parametric)
    }
}

/// Eigen-decomposition of a correlation matrix, descending.
///
/// Eigenvalues in `[-1e-12 * lambda_max, 0)` are clipped to zero; anything
/// more negative is a [`Error::NotPsd`].
pub fn eigendecompose(c: &CorrelationMatrix) -> Result<SpectralDecomposition> {
    let (mut values, mut vectors) = linalg::sym_eigen_desc(c.entries());
    clip_negative(&mut values)?;
    linalg::fix_signs(&mut vectors, None);
    Ok(SpectralDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

fn clip_negative(values: &mut [f64]) -> Result<()> {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = PSD_TOL * top;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::NotPsd {
                    eigenvalue: *v,
                    tolerance: tol,
                });
            }
            *v = 0.0;
        }
    }
    Ok(())
}

/// Karhunen-Loeve expansion via the SVD of `A W^{1/2}`.
///
/// A zero ensemble yields a rank-0 expansion.
pub fn kl_expand(ens: &SnapshotEnsemble) -> KlExpansion {
    let sw = ens.measure().sqrt_weights();
    let mut scaled = ens.data().clone();
    for (j, s) in sw.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let (u, s, v) = linalg::svd_desc(&scaled);
    let rank = linalg::numerical_rank(&s);
    let mut spatial = u.columns(0, rank).into_owned();
    let mut parametric = v.columns(0, rank).into_owned();
    for (i, s) in sw.iter().enumerate() {
        parametric.row_mut(i).unscale_mut(*s);
    }
    linalg::fix_signs(&mut spatial, Some(&mut parametric));
    KlExpansion {
        singular_values: s[..rank].to_vec(),
        spatial_modes: spatial,
        parametric_modes: parametric,
        weights: ens.weights().to_vec(),
        discarded_energy: 0.0,
    }
}

/// Parameter-side spectrum from the method of snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSpectrum {
    /// All `N` eigenvalues of `W^{1/2} G W^{1/2}`, descending, clipped at 0.
    pub eigenvalues: Vec<f64>,
    /// Parametric modes `s_m = W^{-1/2} u_m` for the nonzero eigenvalues (`N x rank`).
    pub parametric_modes: DMatrix<f64>,
    weights: Vec<f64>,
}

impl SnapshotSpectrum {
    pub fn rank(&self) -> usize {
        self.parametric_modes.ncols()
    }

    pub fn nonzero_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.rank()]
    }

    /// Largest deviation in `k(mu_i, mu_j) = sum_m lambda_m s_m(mu_i) s_m(mu_j)`.
    pub fn mercer_residual(&self, g: &GramKernel) -> f64 {
        let n = self.parametric_modes.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut sum = 0.0;
                for m in 0..self.rank() {
                    sum += self.eigenvalues[m]
                        * self.parametric_modes[(i, m)]
                        * self.parametric_modes[(j, m)];
                }
                worst = worst.max((g.entries()[(i, j)] - sum).abs());
            }
        }
        worst
    }

    /// Lift to a full expansion with `v_m = R* s_m / sigma_m`, using the
    /// ensemble the kernel was built from.
    pub fn lift(&self, ens: &SnapshotEnsemble) -> Result<KlExpansion> {
        if ens.num_samples() != self.parametric_modes.nrows() {
            return Err(Error::input("ensemble size does not match the spectrum"));
        }
        let r = self.rank();
        let mut spatial = DMatrix::zeros(ens.state_dim(), r);
        let mut parametric = self.parametric_modes.clone();
        let mut sigmas = Vec::with_capacity(r);
        for m in 0..r {
            let sigma = self.eigenvalues[m].sqrt();
            let v = ens.apply_r_adjoint(&parametric.column(m).into_owned())? / sigma;
            spatial.set_column(m, &v);
            sigmas.push(sigma);
        }
        linalg::fix_signs(&mut spatial, Some(&mut parametric));
        Ok(KlExpansion {
            singular_values: sigmas,
            spatial_modes: spatial,
            parametric_modes: parametric,
            weights: self.weights.clone(),
            discarded_energy: 0.0,
        })
    }
}

/// Method of snapshots: eigen-decompose `W^{1/2} G W^{1/2}` (`N x N`) instead
/// of the `d x d` correlation.
pub fn method_of_snapshots(g: &GramKernel, measure: &SampledMeasure) -> Result<SnapshotSpectrum> {
    let n = g.size();
    if measure.len() != n {
        return Err(Error::input(format!(
            "kernel has {n} samples but the measure has {}",
            measure.len()
        )));
    }
    let sw = measure.sqrt_weights();
    let scaled = DMatrix::from_fn(n, n, |i, j| sw[i] * g.entries()[(i, j)] * sw[j]);
    let (mut values, vectors) = linalg::sym_eigen_desc(&scaled);
    clip_negative(&mut values)?;
    let top = values.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 {
        values.iter().take_while(|&&l| l > RANK_TOL * top).count()
    } else {
        0
    };
    let mut modes = vectors.columns(0, rank).into_owned();
    for (i, s) in sw.iter().enumerate() {
        modes.row_mut(i).unscale_mut(*s);
    }
    linalg::fix_signs(&mut modes, None);
    Ok(SnapshotSpectrum {
        eigenvalues: values,
        parametric_modes: modes,
        weights: measure.weights().to_vec(),
    })
}

/// A factor `B` (`h x d`) with `B^T B = C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub factor: DMatrix<f64>,
}

impl Factorization {
    pub fn codomain_dim(&self) -> usize {
        self.factor.nrows()
    }

    /// `B^T B`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.factor.transpose() * &self.factor
    }

    /// `|B^T B - C|_F / |C|_F` (absolute when `C = 0`).
    pub fn residual(&self, c: &CorrelationMatrix) -> f64 {
        let r = (self.gram() - c.entries()).norm();
        let scale = c.frobenius_norm();
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }

    /// Eigenvalues of `B B^T`, descending; their nonzero part is the
    /// spectrum of `C`.
    pub fn codomain_spectrum(&self) -> Vec<f64> {
        linalg::sym_eigen_desc(&(&self.factor * self.factor.transpose())).0
    }
}

/// Pivoted Cholesky: `P C P^T = L L^T`, returned as `B = L^T P` so that
/// `B^T B = C`. Singular `C` yields zero trailing rows in `B`.
pub fn cholesky_factor(c: &CorrelationMatrix) -> Result<Factorization> {
    let n = c.dim();
    let mut a = c.entries().clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    let stop_tol = n as f64 * f64::EPSILON * max_diag;
    let psd_tol = (PSD_TOL * n as f64 * max_diag).max(stop_tol);

    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[(i, i)] > a[(p, p)] {
                p = i;
            }
        }
        if a[(p, p)] <= stop_tol {
            // Remaining Schur complement must vanish for a PSD input.
            for i in k..n {
                for j in k..n {
                    let v = a[(i, j)];
                    if (i == j && v < -psd_tol) || (i != j && v.abs() > psd_tol) {
                        return Err(Error::NotPsd {
                            eigenvalue: if i == j { v } else { -v.abs() },
                            tolerance: psd_tol,
                        });
                    }
                }
            }
            break;
        }
        if p != k {
            a.swap_rows(k, p);
            a.swap_columns(k, p);
            perm.swap(k, p);
            for j in 0..k {
                l.swap((k, j), (p, j));
            }
        }
        let pivot = a[(k, k)].sqrt();
        l[(k, k)] = pivot;
        for i in k + 1..n {
            l[(i, k)] = a[(i, k)] / pivot;
        }
        for j in k + 1..n {
            for i in j..n {
                let v = a[(i, j)] - l[(i, k)] * l[(j, k)];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }

    let lt = l.transpose();
    let mut b = DMatrix::zeros(n, n);
    for (j, &col) in perm.iter().enumerate() {
        b.set_column(col, &lt.column(j));
    }
    Ok(Factorization { factor: b })
}

/// Symmetric square root `C^{1/2} = sum_m lambda_m^{1/2} v_m v_m^T`.
pub fn sqrt_factor(c: &CorrelationMatrix) -> Result<Factorization> {
    let spec = eigendecompose(c)?;
    let v = &spec.eigenvectors;
    let roots = DVector::from_iterator(spec.eigenvalues.len(), spec.eigenvalues.iter().map(|l| l.sqrt()));
    let b = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(Factorization {
        factor: linalg::symmetrize(&b),
    })
}

/// Orthogonal `X` minimising `|B2 - X B1|_F` (orthogonal Procrustes).
///
/// When the shared `C` is singular, `X` is only determined on the row space
/// of `B1`; its action on the complement is whatever the SVD returns.
pub fn unitary_equivalence(b1: &Factorization, b2: &Factorization) -> Result<DMatrix<f64>> {
    let (f1, f2) = (&b1.factor, &b2.factor);
    if f1.shape() != f2.shape() {
        return Err(Error::input(format!(
            "factor shapes differ: {:?} vs {:?}",
            f1.shape(),
            f2.shape()
        )));
    }
    let (c1, c2) = (b1.gram(), b2.gram());
    let scale = c1.norm().max(c2.norm());
    let mismatch = if scale > 0.0 {
        (&c1 - &c2).norm() / scale
    } else {
        0.0
    };
    if mismatch > FACTOR_CONSISTENCY_TOL {
        return Err(Error::InconsistentFactorization {
            mismatch,
            tolerance: FACTOR_CONSISTENCY_TOL,
        });
    }
    let (u, _, v) = linalg::svd_desc(&(f2 * f1.transpose()));
    Ok(u * v.transpose())
}
