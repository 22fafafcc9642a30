//! Two-subsystem models `r(mu) = (r_1(mu), r_2(mu))` on `U = U_1 x U_2`.
//!
//! The coupled inner product is `s_1 <u_1, v_1> + s_2 <u_2, v_2>` with
//! subsystem scales defaulting to 1. Correlation and kernel are block
//! diagonal; the partitioned variant additionally splits the parameter
//! coordinates into a tensor grid `M_1 x M_2`.

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{CorrelationMatrix, SampledMeasure, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::kernel::{gram, GramKernel};
use crate::linalg;
use crate::spectral::{kl_expand, KlExpansion, Truncation};

/// Tensor-grid layout of the samples: sample `i` sits at
/// `(i / n2, i % n2)` on `M_1 x M_2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPartition {
    pub m1_indices: Vec<usize>,
    pub m2_indices: Vec<usize>,
    pub n1: usize,
    pub n2: usize,
}

impl GridPartition {
    /// Check that the measure's points form a row-major `N_1 x N_2` grid
    /// over the two coordinate groups.
    pub fn detect(measure: &SampledMeasure, m1_indices: Vec<usize>, m2_indices: Vec<usize>) -> Result<Self> {
        let dim = measure.coord_dim();
        for &c in m1_indices.iter().chain(&m2_indices) {
            if c >= dim {
                return Err(Error::input(format!(
                    "partition index {c} out of range for {dim} coordinates"
                )));
            }
        }
        if m1_indices.is_empty() || m2_indices.is_empty() {
            return Err(Error::input("both partition groups need at least one coordinate"));
        }
        if m1_indices.iter().any(|c| m2_indices.contains(c)) {
            return Err(Error::input("partition groups overlap"));
        }
        let key = |i: usize, idx: &[usize]| -> Vec<u64> {
            idx.iter().map(|&c| measure.points()[i].coords[c].to_bits()).collect()
        };
        let distinct = |idx: &[usize]| {
            let mut seen: Vec<Vec<u64>> = Vec::new();
            for i in 0..measure.len() {
                let k = key(i, idx);
                if !seen.contains(&k) {
                    seen.push(k);
                }
            }
            seen
        };
        let (keys1, keys2) = (distinct(&m1_indices), distinct(&m2_indices));
        let (n1, n2) = (keys1.len(), keys2.len());
        if n1 * n2 != measure.len() {
            return Err(Error::input(format!(
                "samples do not form a tensor grid: {n1} x {n2} distinct values but {} samples",
                measure.len()
            )));
        }
        for i in 0..measure.len() {
            if key(i, &m1_indices) != keys1[i / n2] || key(i, &m2_indices) != keys2[i % n2] {
                return Err(Error::input(format!(
                    "sample {i} breaks the row-major (mu_1, mu_2) grid layout"
                )));
            }
        }
        Ok(Self {
            m1_indices,
            m2_indices,
            n1,
            n2,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEnsemble {
    sub1: SnapshotEnsemble,
    sub2: SnapshotEnsemble,
    partition: Option<GridPartition>,
    scales: (f64, f64),
}

impl CoupledEnsemble {
    pub fn new(sub1: SnapshotEnsemble, sub2: SnapshotEnsemble) -> Result<Self> {
        if sub1.num_samples() != sub2.num_samples() {
            return Err(Error::input(format!(
                "subsystems have {} and {} samples",
                sub1.num_samples(),
                sub2.num_samples()
            )));
        }
        if sub1.measure() != sub2.measure() {
            return Err(Error::input("subsystems do not share the parameter samples and weights"));
        }
        Ok(Self {
            sub1,
            sub2,
            partition: None,
            scales: (1.0, 1.0),
        })
    }

    /// Attach a parameter partition; the samples must form a tensor grid.
    pub fn with_partition(mut self, m1_indices: Vec<usize>, m2_indices: Vec<usize>) -> Result<Self> {
        self.partition = Some(GridPartition::detect(self.sub1.measure(), m1_indices, m2_indices)?);
        Ok(self)
    }

    pub fn with_scales(mut self, s1: f64, s2: f64) -> Result<Self> {
        if !(s1 > 0.0 && s2 > 0.0 && s1.is_finite() && s2.is_finite()) {
            return Err(Error::input(format!("subsystem scales must be positive, got ({s1}, {s2})")));
        }
        self.scales = (s1, s2);
        Ok(self)
    }

    pub fn sub1(&self) -> &SnapshotEnsemble {
        &self.sub1
    }

    pub fn sub2(&self) -> &SnapshotEnsemble {
        &self.sub2
    }

    pub fn measure(&self) -> &SampledMeasure {
        self.sub1.measure()
    }

    pub fn partition(&self) -> Option<&GridPartition> {
        self.partition.as_ref()
    }

    pub fn scales(&self) -> (f64, f64) {
        self.scales
    }

    pub fn num_samples(&self) -> usize {
        self.sub1.num_samples()
    }

    /// `(<u_1, r_1(mu_i)>, <u_2, r_2(mu_i)>)` for every sample.
    pub fn apply_r(&self, u1: &DVector<f64>, u2: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((
            self.sub1.apply_r(u1)? * self.scales.0,
            self.sub2.apply_r(u2)? * self.scales.1,
        ))
    }

    /// Per-subsystem correlations `s_j C_j`.
    pub fn block_correlations(&self) -> (CorrelationMatrix, CorrelationMatrix) {
        let scale = |c: CorrelationMatrix, s: f64| {
            if s == 1.0 {
                c
            } else {
                CorrelationMatrix::from_trusted(c.entries() * s)
            }
        };
        (
            scale(self.sub1.correlation(), self.scales.0),
            scale(self.sub2.correlation(), self.scales.1),
        )
    }

    /// `diag(C_1, C_2)` on `R^{d_1 + d_2}`.
    pub fn coupling_correlation(&self) -> CorrelationMatrix {
        let (c1, c2) = self.block_correlations();
        let (d1, d2) = (c1.dim(), c2.dim());
        let mut c = DMatrix::zeros(d1 + d2, d1 + d2);
        c.view_mut((0, 0), (d1, d1)).copy_from(c1.entries());
        c.view_mut((d1, d1), (d2, d2)).copy_from(c2.entries());
        CorrelationMatrix::from_trusted(c)
    }

    /// `sum_j <R_j u_j, R_j v_j>_Q` evaluated block by block.
    pub fn coupled_bilinear(
        &self,
        u: (&DVector<f64>, &DVector<f64>),
        v: (&DVector<f64>, &DVector<f64>),
    ) -> Result<f64> {
        let q = self.measure();
        let (s1, s2) = self.scales;
        let first = q.q_inner(&self.sub1.apply_r(u.0)?, &self.sub1.apply_r(v.0)?)?;
        let second = q.q_inner(&self.sub2.apply_r(u.1)?, &self.sub2.apply_r(v.1)?)?;
        Ok(s1 * first + s2 * second)
    }

    pub fn coupled_kernel(&self) -> CoupledKernel {
        let scale = |g: GramKernel, s: f64| if s == 1.0 { g.entries().clone() } else { g.entries() * s };
        CoupledKernel {
            diag1: scale(gram(&self.sub1), self.scales.0),
            diag2: scale(gram(&self.sub2), self.scales.1),
        }
    }

    /// Independent KL expansions per subsystem on the shared measure,
    /// truncated to `n1` and `n2` modes.
    pub fn coupled_pod(&self, n1: usize, n2: usize) -> Result<CoupledPod> {
        let full1 = kl_expand(&self.sub1);
        let full2 = kl_expand(&self.sub2);
        let kl1 = full1.truncate(Truncation::Rank(n1))?;
        let kl2 = full2.truncate(Truncation::Rank(n2))?;
        Ok(CoupledPod {
            kl1,
            kl2,
            scales: self.scales,
        })
    }
}

/// Block-diagonal `2 x 2` matrix kernel; off-diagonal blocks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledKernel {
    pub diag1: DMatrix<f64>,
    pub diag2: DMatrix<f64>,
}

impl CoupledKernel {
    /// `k_c(mu_i, mu_j) = diag(diag1[i][j], diag2[i][j])`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.diag1[(i, j)], 0.0, 0.0, self.diag2[(i, j)]])
    }

    /// Largest spread of `diag1` along `mu_2` fibres and of `diag2` along
    /// `mu_1` fibres. Both vanish when each subsystem depends only on its
    /// own parameter group.
    pub fn fibre_variation(&self, grid: &GridPartition) -> (f64, f64) {
        let (n1, n2) = (grid.n1, grid.n2);
        let idx = |a: usize, b: usize| a * n2 + b;
        let spread = |vals: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        };
        let mut v1 = 0.0f64;
        for i1 in 0..n1 {
            for j1 in 0..n1 {
                let mut it = (0..n2).flat_map(|i2| (0..n2).map(move |j2| (i2, j2)));
                let mut vals = it.by_ref().map(|(i2, j2)| self.diag1[(idx(i1, i2), idx(j1, j2))]);
                v1 = v1.max(spread(&mut vals));
            }
        }
        let mut v2 = 0.0f64;
        for i2 in 0..n2 {
            for j2 in 0..n2 {
                let mut it = (0..n1).flat_map(|i1| (0..n1).map(move |j1| (i1, j1)));
                let mut vals = it.by_ref().map(|(i1, j1)| self.diag2[(idx(i1, i2), idx(j1, j2))]);
                v2 = v2.max(spread(&mut vals));
            }
        }
        (v1, v2)
    }

    /// `diag1` restricted to one representative per `M_1` value (`N_1 x N_1`).
    pub fn reduced_diag1(&self, grid: &GridPartition) -> DMatrix<f64> {
        DMatrix::from_fn(grid.n1, grid.n1, |a, b| self.diag1[(a * grid.n2, b * grid.n2)])
    }

    /// `diag2` restricted to one representative per `M_2` value (`N_2 x N_2`).
    pub fn reduced_diag2(&self, grid: &GridPartition) -> DMatrix<f64> {
        DMatrix::from_fn(grid.n2, grid.n2, |a, b| self.diag2[(a, b)])
    }
}

/// Per-subsystem truncated expansions sharing one parameter sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPod {
    pub kl1: KlExpansion,
    pub kl2: KlExpansion,
    scales: (f64, f64),
}

impl CoupledPod {
    /// `sum_j s_j sum_{m > n_j} lambda_m^(j)`.
    pub fn joint_error(&self) -> f64 {
        self.scales.0 * self.kl1.discarded_energy() + self.scales.1 * self.kl2.discarded_energy()
    }

    /// Joint weighted squared error measured against the snapshots.
    pub fn measured_error(&self, ce: &CoupledEnsemble) -> Result<f64> {
        Ok(self.scales.0 * self.kl1.weighted_error(ce.sub1())?
            + self.scales.1 * self.kl2.weighted_error(ce.sub2())?)
    }

    /// Reduced coupled state at sample `i`.
    pub fn reconstruct(&self, i: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((self.kl1.reconstruct(i)?, self.kl2.reconstruct(i)?))
    }
}

/// Sorted union of two spectra, descending.
pub fn spectrum_union(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(|x, y| y.total_cmp(x));
    all
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn eigenvalues(c: &CorrelationMatrix) -> Vec<f64> {
    linalg::sym_eigen_desc(c.entries()).0
}
