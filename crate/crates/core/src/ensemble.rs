//! Sampled parametric models: parameter points with quadrature weights,
//! snapshot matrices, and the discrete associated linear map `R` with its
//! correlation `C = R*R`.
//!
//! The state space `U` is `R^d` with the Euclidean inner product. The
//! parameter-function space `Q` is `L2(M, w)` restricted to the samples,
//! i.e. `<phi, psi>_Q = sum_i w_i phi_i psi_i`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg;

/// Tolerance on `sum w_i = 1` for probability measures.
pub const PROBABILITY_TOL: f64 = 1e-12;
/// Relative symmetry tolerance for correlation matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative PSD tolerance: eigenvalues down to `-PSD_TOL * lambda_max` are accepted.
pub const PSD_TOL: f64 = 1e-12;

/// One parameter value `mu`. Coordinates are opaque reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub coords: Vec<f64>,
    pub label: Option<String>,
}

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self {
            coords,
            label: None,
        }
    }

    pub fn labelled(coords: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            coords,
            label: Some(label.into()),
        }
    }
}

/// Discrete measure on the parameter set: points with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMeasure {
    points: Vec<ParameterPoint>,
    weights: Vec<f64>,
    probability: bool,
}

impl SampledMeasure {
    pub fn new(points: Vec<ParameterPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("a sampled measure needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(Error::input(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].coords.len();
        for (i, p) in points.iter().enumerate() {
            if p.coords.len() != dim {
                return Err(Error::input(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    p.coords.len()
                )));
            }
            if p.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::input(format!("point {i} has a non-finite coordinate")));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::input(format!("weight {i} = {w} is not positive")));
            }
        }
        Ok(Self {
            points,
            weights,
            probability: false,
        })
    }

    /// Uniform weights `1/N`: the Monte-Carlo reading of a probability measure.
    pub fn uniform(points: Vec<ParameterPoint>) -> Result<Self> {
        let n = points.len();
        let mut m = Self::new(points, vec![1.0 / n.max(1) as f64; n])?;
        m.probability = true;
        Ok(m)
    }

    /// `n` anonymous points with uniform weights.
    pub fn uniform_unlabelled(n: usize) -> Result<Self> {
        Self::uniform(vec![ParameterPoint::new(Vec::new()); n])
    }

    /// `n` anonymous points with the given weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::new(vec![ParameterPoint::new(Vec::new()); weights.len()], weights)
    }

    /// Flag the measure as a probability measure, checking `sum w_i = 1`.
    /// Read parameter points from a headerless CSV, one row per sample.
    /// With `weights_column` the last column holds the weight; otherwise
    /// the weights are uniform `1/N`. `expected` checks the row count.
    pub fn load(path: &Path, weights_column: bool, expected: Option<usize>) -> Result<Self> {
        let params = io::read_csv_rows(path)?;
        let display = path.display().to_string();
        let parse_err = |line: u64, message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        if let Some(n) = expected {
            if params.len() != n {
                return Err(parse_err(
                    params.last().map(|(l, _)| *l).unwrap_or(1),
                    format!("{} parameter rows but the snapshot file has {n} columns", params.len()),
                ));
            }
        }
        if params.is_empty() {
            return Err(parse_err(1, "no parameter rows".into()));
        }
        let width = params[0].1.len();
        let mut points = Vec::with_capacity(params.len());
        let mut weights = Vec::with_capacity(params.len());
        for (line, row) in params {
            if row.len() != width {
                return Err(parse_err(line, format!("expected {width} columns, found {}", row.len())));
            }
            if weights_column {
                let Some((&w, coords)) = row.split_last() else {
                    return Err(parse_err(line, "missing weight column".into()));
                };
                if w <= 0.0 {
                    return Err(parse_err(line, format!("row {line}: weight {w} is not positive")));
                }
                weights.push(w);
                points.push(ParameterPoint::new(coords.to_vec()));
            } else {
                points.push(ParameterPoint::new(row));
            }
        }
        if weights_column {
            SampledMeasure::new(points, weights)
        } else {
            SampledMeasure::uniform(points)
        }
    }

    pub fn into_probability(mut self) -> Result<Self> {
        let total = self.total_weight();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::input(format!(
                "weights sum to {total}, not 1, for a probability measure"
            )));
        }
        self.probability = true;
        Ok(self)
    }

    /// Rescale weights to sum to one and flag as a probability measure.
    pub fn normalized(mut self) -> Self {
        let total = self.total_weight();
        for w in &mut self.weights {
            *w /= total;
        }
        self.probability = true;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_probability(&self) -> bool {
        self.probability
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn coord_dim(&self) -> usize {
        self.points[0].coords.len()
    }

    /// `<phi, psi>_Q = sum_i w_i phi_i psi_i`.
    pub fn q_inner(&self, phi: &DVector<f64>, psi: &DVector<f64>) -> Result<f64> {
        let n = self.len();
        if phi.len() != n || psi.len() != n {
            return Err(Error::input(format!(
                "Q inner product needs length {n}, got {} and {}",
                phi.len(),
                psi.len()
            )));
        }
        Ok((0..n).fold(0.0, |acc, i| acc + self.weights[i] * phi[i] * psi[i]))
    }

    pub(crate) fn sqrt_weights(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.weights.iter().map(|w| w.sqrt()))
    }
}

/// Snapshot matrix `A` (`d x N`, column `i` is `r(mu_i)`) with its measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEnsemble {
    data: DMatrix<f64>,
    measure: SampledMeasure,
}

impl SnapshotEnsemble {
    pub fn new(data: DMatrix<f64>, measure: SampledMeasure) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::input("state dimension must be at least 1"));
        }
        if data.ncols() != measure.len() {
            return Err(Error::input(format!(
                "{} snapshots but the measure has {} points",
                data.ncols(),
                measure.len()
            )));
        }
        if !linalg::is_finite(&data) {
            return Err(Error::input("snapshot matrix contains non-finite entries"));
        }
        Ok(Self { data, measure })
    }

    /// Snapshots with uniform weights `1/N` on anonymous points.
    pub fn with_uniform_weights(data: DMatrix<f64>) -> Result<Self> {
        let measure = SampledMeasure::uniform_unlabelled(data.ncols())?;
        Self::new(data, measure)
    }

    /// Read a snapshot CSV (`d` rows, `N` columns) and a parameter CSV (`N` rows).
    ///
    /// With `weights_column` set, the last column of each parameter row is
    /// taken as its weight; otherwise all weights are `1/N`.
    pub fn load(snapshot_path: &Path, params_path: &Path, weights_column: bool) -> Result<Self> {
        let data = io::read_matrix_csv(snapshot_path)?;
        let measure = SampledMeasure::load(params_path, weights_column, Some(data.ncols()))?;
        Self::new(data, measure)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn measure(&self) -> &SampledMeasure {
        &self.measure
    }

    pub fn weights(&self) -> &[f64] {
        self.measure.weights()
    }

    pub fn state_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn snapshot(&self, i: usize) -> DVector<f64> {
        self.data.column(i).into_owned()
    }

    /// Same snapshots under a different measure on the same number of points.
    pub fn reweighted(&self, measure: SampledMeasure) -> Result<Self> {
        Self::new(self.data.clone(), measure)
    }

    /// `C = sum_i w_i r_i r_i^T`, accumulated left to right and symmetrized.
    pub fn correlation(&self) -> CorrelationMatrix {
        let d = self.state_dim();
        let mut c = DMatrix::zeros(d, d);
        for (i, &w) in self.weights().iter().enumerate() {
            let r = self.data.column(i);
            for b in 0..d {
                let wb = w * r[b];
                for a in 0..d {
                    c[(a, b)] += wb * r[a];
                }
            }
        }
        CorrelationMatrix {
            entries: linalg::symmetrize(&c),
        }
    }

    /// `(R u)_i = <r(mu_i), u>_U`.
    pub fn apply_r(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.state_dim() {
            return Err(Error::input(format!(
                "R expects a state of length {}, got {}",
                self.state_dim(),
                u.len()
            )));
        }
        let u = u.as_slice();
        Ok(DVector::from_iterator(
            self.num_samples(),
            (0..self.num_samples()).map(|i| linalg::dot(self.data.column(i).as_slice(), u)),
        ))
    }

    /// `R* phi = sum_i w_i phi_i r(mu_i)`, the adjoint with respect to the
    /// weighted `Q` inner product.
    pub fn apply_r_adjoint(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        if phi.len() != self.num_samples() {
            return Err(Error::input(format!(
                "R* expects a parameter function of length {}, got {}",
                self.num_samples(),
                phi.len()
            )));
        }
        let mut out = DVector::zeros(self.state_dim());
        for (i, &w) in self.weights().iter().enumerate() {
            out.axpy(w * phi[i], &self.data.column(i), 1.0);
        }
        Ok(out)
    }

    /// `sum_i w_i |r(mu_i)|^2`, the trace of the correlation.
    pub fn energy(&self) -> f64 {
        self.weights()
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, &w)| acc + w * self.data.column(i).norm_squared())
    }
}

/// Symmetric positive semidefinite `d x d` correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validate a user-supplied matrix: square, symmetric to `SYMMETRY_TOL`
    /// relative, PSD to `PSD_TOL` relative. The stored matrix is symmetrized.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::input(format!(
                "correlation must be a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !linalg::is_finite(&entries) {
            return Err(Error::input("correlation contains non-finite entries"));
        }
        let asym = linalg::asymmetry(&entries);
        if asym > SYMMETRY_TOL {
            return Err(Error::input(format!(
                "correlation is not symmetric (relative deviation {asym:e})"
            )));
        }
        let entries = linalg::symmetrize(&entries);
        let (values, _) = linalg::sym_eigen_desc(&entries);
        let top = values[0].max(0.0);
        let bottom = *values.last().unwrap();
        if bottom < -PSD_TOL * top || (top == 0.0 && bottom < 0.0) {
            return Err(Error::NotPsd {
                eigenvalue: bottom,
                tolerance: PSD_TOL * top,
            });
        }
        Ok(Self { entries })
    }

    /// Wrap a matrix that is symmetric PSD by construction.
    pub(crate) fn from_trusted(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// `<C u, v>`.
    pub fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (&self.entries * u).dot(v)
    }
}
