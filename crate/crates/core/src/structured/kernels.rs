//! Vector- and matrix-valued models `r(mu) = sum_k r_k(mu) (x) R_k` and
//! their block correlations and block kernels.
//!
//! Inner products between the scalar components are always taken in `U`.
//! Flattened indices on `U (x) R^e` are `a * e + p` (state index major).

use nalgebra::{DMatrix, DVector};

use super::field::LieAlgebra;
use crate::ensemble::{CorrelationMatrix, SampledMeasure, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::linalg;

/// `r(mu) = sum_k r_k(mu) r_k` with scalar components `r_k: M -> U` and
/// frame vectors `r_k` in `E = R^e`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldEnsemble {
    components: Vec<SnapshotEnsemble>,
    frame: Vec<DVector<f64>>,
}

impl VectorFieldEnsemble {
    pub fn new(components: Vec<SnapshotEnsemble>, frame: Vec<DVector<f64>>) -> Result<Self> {
        check_components(&components)?;
        if frame.len() != components.len() {
            return Err(Error::input(format!(
                "{} components but {} frame vectors",
                components.len(),
                frame.len()
            )));
        }
        let e = frame[0].len();
        if e == 0 {
            return Err(Error::input("frame vectors must have length >= 1"));
        }
        for (k, f) in frame.iter().enumerate() {
            if f.len() != e {
                return Err(Error::input(format!("frame vector {k} has length {}, expected {e}", f.len())));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::input(format!("frame vector {k} is not finite")));
            }
        }
        Ok(Self { components, frame })
    }

    pub fn components(&self) -> &[SnapshotEnsemble] {
        &self.components
    }

    pub fn frame(&self) -> &[DVector<f64>] {
        &self.frame
    }

    pub fn state_dim(&self) -> usize {
        self.components[0].state_dim()
    }

    pub fn num_samples(&self) -> usize {
        self.components[0].num_samples()
    }

    pub fn frame_dim(&self) -> usize {
        self.frame[0].len()
    }

    pub fn measure(&self) -> &SampledMeasure {
        self.components[0].measure()
    }

    /// The model as a scalar ensemble on `R^{d*e}`.
    pub fn flattened(&self) -> SnapshotEnsemble {
        let (d, e, n) = (self.state_dim(), self.frame_dim(), self.num_samples());
        let mut data = DMatrix::zeros(d * e, n);
        for (comp, f) in self.components.iter().zip(&self.frame) {
            for i in 0..n {
                for a in 0..d {
                    let x = comp.data()[(a, i)];
                    for p in 0..e {
                        data[(a * e + p, i)] += x * f[p];
                    }
                }
            }
        }
        SnapshotEnsemble::new(data, self.measure().clone()).expect("shapes checked at construction")
    }

    fn frame_maps(&self) -> Vec<DMatrix<f64>> {
        self.frame
            .iter()
            .map(|f| DMatrix::from_column_slice(1, f.len(), f.as_slice()))
            .collect()
    }
}

fn check_components(components: &[SnapshotEnsemble]) -> Result<()> {
    let first = components
        .first()
        .ok_or_else(|| Error::input("at least one component is required"))?;
    for (k, c) in components.iter().enumerate().skip(1) {
        if c.state_dim() != first.state_dim() || c.num_samples() != first.num_samples() {
            return Err(Error::input(format!(
                "component {k} is {}x{}, expected {}x{}",
                c.state_dim(),
                c.num_samples(),
                first.state_dim(),
                first.num_samples()
            )));
        }
        if c.measure() != first.measure() {
            return Err(Error::input(format!("component {k} does not share the measure")));
        }
    }
    Ok(())
}

/// `N x N` array of `b x b` blocks `k(mu_i, mu_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixKernelBlock {
    blocks: Vec<DMatrix<f64>>,
    num_samples: usize,
    block_dim: usize,
}

impl MatrixKernelBlock {
    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.num_samples + j]
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    /// The `(N*b) x (N*b)` matrix with block `(i, j)` at rows `i*b..`, cols `j*b..`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let (n, b) = (self.num_samples, self.block_dim);
        let mut out = DMatrix::zeros(n * b, n * b);
        for i in 0..n {
            for j in 0..n {
                out.view_mut((i * b, j * b), (b, b)).copy_from(self.block(i, j));
            }
        }
        out
    }

    /// `(W^{1/2} (x) I) K (W^{1/2} (x) I)`: the kernel as an operator on `Q (x) R^b`.
    pub fn weighted(&self, measure: &SampledMeasure) -> Result<DMatrix<f64>> {
        if measure.len() != self.num_samples {
            return Err(Error::input("measure size does not match the kernel"));
        }
        let b = self.block_dim;
        let sw = measure.sqrt_weights();
        let mut k = self.assembled();
        for r in 0..k.nrows() {
            for c in 0..k.ncols() {
                k[(r, c)] *= sw[r / b] * sw[c / b];
            }
        }
        Ok(k)
    }

    /// Largest `|k(mu_i, mu_j) - k(mu_j, mu_i)^T|`.
    pub fn block_symmetry_defect(&self) -> f64 {
        let n = self.num_samples;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.block(i, j) - self.block(j, i).transpose()).amax());
            }
        }
        worst
    }

    /// Smallest and largest eigenvalue of the assembled matrix.
    pub fn eigen_range(&self) -> (f64, f64) {
        let (values, _) = linalg::sym_eigen_desc(&self.assembled());
        (*values.last().unwrap(), values[0])
    }

    /// `lambda_min >= -tol * lambda_max`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let (lo, hi) = self.eigen_range();
        lo >= -tol * hi.max(0.0)
    }
}

/// `G_kl[i][j] = <r_k(mu_i), r_l(mu_j)>_U` for all component pairs.
fn component_grams(components: &[SnapshotEnsemble]) -> Vec<DMatrix<f64>> {
    let k = components.len();
    let n = components[0].num_samples();
    let mut out = Vec::with_capacity(k * k);
    for ck in components {
        for cl in components {
            out.push(DMatrix::from_fn(n, n, |i, j| {
                linalg::dot(ck.data().column(i).as_slice(), cl.data().column(j).as_slice())
            }));
        }
    }
    out
}

/// `C_kl = sum_i w_i r_k(mu_i) r_l(mu_i)^T` for all component pairs.
fn component_correlations(components: &[SnapshotEnsemble]) -> Vec<DMatrix<f64>> {
    let d = components[0].state_dim();
    let w = components[0].weights();
    let mut out = Vec::with_capacity(components.len().pow(2));
    for ck in components {
        for cl in components {
            let mut c = DMatrix::zeros(d, d);
            for (i, &wi) in w.iter().enumerate() {
                let (x, y) = (ck.data().column(i), cl.data().column(i));
                for b in 0..d {
                    let s = wi * y[b];
                    for a in 0..d {
                        c[(a, b)] += s * x[a];
                    }
                }
            }
            out.push(c);
        }
    }
    out
}

/// `sum_{k,l} G_kl(i, j) M_k^T M_l`.
fn block_kernel(components: &[SnapshotEnsemble], maps: &[DMatrix<f64>]) -> MatrixKernelBlock {
    let grams = component_grams(components);
    let kk = components.len();
    let n = components[0].num_samples();
    let b = maps[0].ncols();
    let products: Vec<DMatrix<f64>> = (0..kk * kk)
        .map(|kl| maps[kl / kk].transpose() * &maps[kl % kk])
        .collect();
    let mut blocks = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut block = DMatrix::zeros(b, b);
            for kl in 0..kk * kk {
                block += &products[kl] * grams[kl][(i, j)];
            }
            blocks.push(block);
        }
    }
    MatrixKernelBlock {
        blocks,
        num_samples: n,
        block_dim: b,
    }
}

/// `C[(a,p),(b,q)] = sum_{k,l} C_kl[a,b] (M_k^T M_l)[p,q]`.
fn block_correlation(components: &[SnapshotEnsemble], maps: &[DMatrix<f64>]) -> CorrelationMatrix {
    let corrs = component_correlations(components);
    let kk = components.len();
    let d = components[0].state_dim();
    let e = maps[0].ncols();
    let mut out = DMatrix::zeros(d * e, d * e);
    for kl in 0..kk * kk {
        let frame = maps[kl / kk].transpose() * &maps[kl % kk];
        let c = &corrs[kl];
        for a in 0..d {
            for b in 0..d {
                let cab = c[(a, b)];
                if cab == 0.0 {
                    continue;
                }
                for p in 0..e {
                    for q in 0..e {
                        out[(a * e + p, b * e + q)] += cab * frame[(p, q)];
                    }
                }
            }
        }
    }
    CorrelationMatrix::from_trusted(linalg::symmetrize(&out))
}

/// `k_E(mu_i, mu_j) = sum_{k,l} <r_k(mu_i), r_l(mu_j)>_U r_k r_l^T` (`e x e` blocks).
pub fn vector_kernel(vfe: &VectorFieldEnsemble) -> MatrixKernelBlock {
    let maps: Vec<DMatrix<f64>> = vfe
        .frame
        .iter()
        .map(|f| DMatrix::from_column_slice(1, f.len(), f.as_slice()))
        .collect();
    // M_k = r_k^T (1 x e) gives M_k^T M_l = r_k r_l^T.
    block_kernel(&vfe.components, &maps)
}

/// The vector correlation on `U (x) E = R^{d*e}`:
/// `<C_E (u (x) x), v (x) y> = sum_{k,l} <R_k u, R_l v>_Q (x . r_k)(r_l . y)`.
pub fn vector_correlation(vfe: &VectorFieldEnsemble) -> CorrelationMatrix {
    block_correlation(&vfe.components, &vfe.frame_maps())
}

/// `sum_{k,l} (r_k . r_l) C_kl` on `U`: the state-side operator whose
/// nonzero spectrum matches the weighted [`vector_kernel`].
pub fn frame_contracted_correlation(vfe: &VectorFieldEnsemble) -> CorrelationMatrix {
    let corrs = component_correlations(&vfe.components);
    let kk = vfe.components.len();
    let d = vfe.state_dim();
    let mut out = DMatrix::zeros(d, d);
    for kl in 0..kk * kk {
        out += &corrs[kl] * vfe.frame[kl / kk].dot(&vfe.frame[kl % kk]);
    }
    CorrelationMatrix::from_trusted(linalg::symmetrize(&out))
}

fn check_maps(components: &[SnapshotEnsemble], maps: &[DMatrix<f64>], algebra: LieAlgebra) -> Result<()> {
    check_components(components)?;
    if maps.len() != components.len() {
        return Err(Error::input(format!(
            "{} components but {} matrices",
            components.len(),
            maps.len()
        )));
    }
    let n = maps[0].nrows();
    for (k, m) in maps.iter().enumerate() {
        if m.shape() != (n, n) || n == 0 {
            return Err(Error::input(format!(
                "matrix {k} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !linalg::is_finite(m) || !algebra.contains(m) {
            return Err(Error::input(format!("matrix {k} is not in the {algebra:?} algebra")));
        }
    }
    Ok(())
}

/// `k_F(mu_i, mu_j) = sum_{k,l} <r_k(mu_i), r_l(mu_j)>_U R_k^T R_l` (`n x n` blocks).
pub fn tensor_kernel(
    components: &[SnapshotEnsemble],
    maps: &[DMatrix<f64>],
    algebra: LieAlgebra,
) -> Result<MatrixKernelBlock> {
    check_maps(components, maps, algebra)?;
    Ok(block_kernel(components, maps))
}

/// Tensor correlation on `U (x) F = R^{d*n}`:
/// `<C_F (u (x) x), v (x) y> = sum_{k,l} <R_k u, R_l v>_Q (R_k x)^T (R_l y)`.
pub fn tensor_correlation(
    components: &[SnapshotEnsemble],
    maps: &[DMatrix<f64>],
    algebra: LieAlgebra,
) -> Result<CorrelationMatrix> {
    check_maps(components, maps, algebra)?;
    Ok(block_correlation(components, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;

    fn unit(e: usize, k: usize) -> DVector<f64> {
        DVector::from_fn(e, |i, _| if i == k { 1.0 } else { 0.0 })
    }

    #[test]
    fn single_component_on_axis() {
        let mut rng = rng(91);
        let comp = random_ensemble(&mut rng, 3, 4);
        let vfe = VectorFieldEnsemble::new(vec![comp.clone()], vec![unit(2, 0)]).unwrap();
        let k = vector_kernel(&vfe);
        let g = crate::kernel::gram(&comp);
        for i in 0..4 {
            for j in 0..4 {
                let expect = DMatrix::from_row_slice(2, 2, &[g.entries()[(i, j)], 0.0, 0.0, 0.0]);
                assert!((k.block(i, j) - expect).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn orthogonal_components_give_diagonal_blocks() {
        // r_1 lives in the first two state coordinates, r_2 in the last two.
        let mut rng = rng(92);
        let measure = SampledMeasure::from_weights(random_weights(&mut rng, 3)).unwrap();
        let mut a1 = random_matrix(&mut rng, 4, 3);
        let mut a2 = random_matrix(&mut rng, 4, 3);
        a1.rows_mut(2, 2).fill(0.0);
        a2.rows_mut(0, 2).fill(0.0);
        let comps = vec![
            SnapshotEnsemble::new(a1, measure.clone()).unwrap(),
            SnapshotEnsemble::new(a2, measure).unwrap(),
        ];
        let vfe = VectorFieldEnsemble::new(comps, vec![unit(2, 0), unit(2, 1)]).unwrap();
        let k = vector_kernel(&vfe);
        for i in 0..3 {
            for j in 0..3 {
                let b = k.block(i, j);
                assert_eq!(b[(0, 1)], 0.0);
                assert_eq!(b[(1, 0)], 0.0);
            }
        }
    }

    #[test]
    fn degenerate_frame_reduces_to_scalar_correlation() {
        let mut rng = rng(93);
        let comp = random_ensemble(&mut rng, 4, 5);
        let vfe = VectorFieldEnsemble::new(vec![comp.clone()], vec![DVector::from_element(1, 1.0)]).unwrap();
        let c = vector_correlation(&vfe);
        assert!((c.entries() - comp.correlation().entries()).amax() < 1e-14);
    }

    #[test]
    fn zero_components_give_zero_operator() {
        let comp = SnapshotEnsemble::with_uniform_weights(DMatrix::zeros(3, 2)).unwrap();
        let vfe = VectorFieldEnsemble::new(vec![comp.clone(), comp], vec![unit(2, 0), unit(2, 1)]).unwrap();
        assert_eq!(vector_correlation(&vfe).entries(), &DMatrix::zeros(6, 6));
        assert_eq!(vector_kernel(&vfe).assembled(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn tensor_kernel_examples() {
        let mut rng = rng(94);
        let comp = random_ensemble(&mut rng, 3, 3);
        let g = crate::kernel::gram(&comp);
        let k = tensor_kernel(&[comp.clone()], &[DMatrix::identity(2, 2)], LieAlgebra::Symmetric).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.block(i, j) - DMatrix::<f64>::identity(2, 2) * g.entries()[(i, j)]).amax() < 1e-15);
            }
        }
        let z = tensor_kernel(&[comp.clone(), comp.clone()], &[DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)], LieAlgebra::Skew)
            .unwrap();
        assert_eq!(z.assembled(), DMatrix::zeros(6, 6));
    }

    #[test]
    fn input_errors() {
        let mut rng = rng(95);
        let a = random_ensemble(&mut rng, 3, 3);
        let b = random_ensemble(&mut rng, 3, 4);
        assert!(VectorFieldEnsemble::new(vec![a.clone()], vec![]).is_err());
        assert!(VectorFieldEnsemble::new(vec![a.clone(), b], vec![unit(2, 0), unit(2, 1)]).is_err());
        let not_sym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(tensor_kernel(&[a.clone()], &[not_sym], LieAlgebra::Symmetric).is_err());
        assert!(tensor_kernel(&[a.clone()], &[DMatrix::zeros(2, 3)], LieAlgebra::General).is_err());
        assert!(tensor_kernel(&[a], &[], LieAlgebra::General).is_err());
    }
}
