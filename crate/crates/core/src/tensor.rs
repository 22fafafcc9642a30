//! Snapshot tensors over product parameter sets, binary splits of the
//! parameter axes, and TT-SVD.
//!
//! Axis 0 is the state axis; axes `1..K` are parameter axes, each with its
//! own positive weights. Every decomposition works on the tensor scaled by
//! `sqrt(w)` along each parameter axis, so truncation errors are measured in
//! the weighted norm `sum t^2 prod_j w_j`, and factors are unscaled again
//! afterwards. Data is stored row-major; matricizations group the state axis
//! on the left.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{SampledMeasure, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg;

const PRODUCT_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// One weight vector per parameter axis (`shape[1..]`).
    weights: Vec<Vec<f64>>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl SnapshotTensor {
    /// Tensor with unit weights on every parameter axis.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let weights = shape.iter().skip(1).map(|&n| vec![1.0; n]).collect();
        Self::with_weights(shape, data, weights)
    }

    pub fn with_weights(shape: Vec<usize>, data: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::input("a snapshot tensor needs a state axis and at least one parameter axis"));
        }
        if shape.contains(&0) {
            return Err(Error::input(format!("axis sizes must be >= 1, got {shape:?}")));
        }
        let size: usize = shape.iter().product();
        if data.len() != size {
            return Err(Error::input(format!(
                "shape {shape:?} needs {size} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("tensor contains non-finite entries"));
        }
        if weights.len() != shape.len() - 1 {
            return Err(Error::input("need one weight vector per parameter axis"));
        }
        for (j, w) in weights.iter().enumerate() {
            if w.len() != shape[j + 1] {
                return Err(Error::input(format!(
                    "axis {} has {} entries but {} weights",
                    j + 1,
                    shape[j + 1],
                    w.len()
                )));
            }
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::input(format!("axis {} has a non-positive weight", j + 1)));
            }
        }
        Ok(Self { shape, data, weights })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let st = strides(&self.shape);
        self.data[index.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Product weight `prod_j w_j(i_j)` of each flat entry.
    fn entry_weights(&self) -> Vec<f64> {
        let st = strides(&self.shape);
        (0..self.data.len())
            .map(|flat| {
                (1..self.order())
                    .map(|k| self.weights[k - 1][(flat / st[k]) % self.shape[k]])
                    .product()
            })
            .collect()
    }

    /// `sqrt(sum t^2 prod_j w_j)`.
    pub fn weighted_norm(&self) -> f64 {
        self.entry_weights()
            .iter()
            .zip(&self.data)
            .map(|(w, x)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Weighted distance to another tensor of the same shape and weights.
    pub fn weighted_distance(&self, other: &SnapshotTensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::input(format!(
                "shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .entry_weights()
            .iter()
            .zip(self.data.iter().zip(&other.data))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    fn scaled_data(&self) -> Vec<f64> {
        self.entry_weights()
            .iter()
            .zip(&self.data)
            .map(|(w, x)| w.sqrt() * x)
            .collect()
    }

    /// Back to a `d x N` snapshot ensemble with the product measure.
    pub fn detensorize(&self) -> SnapshotEnsemble {
        let d = self.shape[0];
        let n: usize = self.shape[1..].iter().product();
        let data = DMatrix::from_row_slice(d, n, &self.data);
        let mut weights = vec![1.0; n];
        let st = strides(&self.shape[1..]);
        for (flat, w) in weights.iter_mut().enumerate() {
            for (j, ws) in self.weights.iter().enumerate() {
                *w *= ws[(flat / st[j]) % self.shape[j + 1]];
            }
        }
        let measure = SampledMeasure::from_weights(weights).expect("weights are positive");
        SnapshotEnsemble::new(data, measure).expect("shape checked")
    }

    /// Matricize with the state axis and `left` parameter axes as rows and
    /// `right` parameter axes as columns (each group keeps its order).
    fn matricize(&self, data: &[f64], left: &[usize], right: &[usize]) -> DMatrix<f64> {
        let st = strides(&self.shape);
        let row_axes: Vec<usize> = std::iter::once(0).chain(left.iter().copied()).collect();
        let rows: usize = row_axes.iter().map(|&a| self.shape[a]).product();
        let cols: usize = right.iter().map(|&a| self.shape[a]).product();
        let offsets = |axes: &[usize], count: usize| -> Vec<usize> {
            (0..count)
                .map(|mut idx| {
                    let mut off = 0;
                    for &a in axes.iter().rev() {
                        off += (idx % self.shape[a]) * st[a];
                        idx /= self.shape[a];
                    }
                    off
                })
                .collect()
        };
        let (ro, co) = (offsets(&row_axes, rows), offsets(right, cols));
        DMatrix::from_fn(rows, cols, |r, c| data[ro[r] + co[c]])
    }

    fn axis_sqrt_weights(&self, axes: &[usize], with_state: bool) -> Vec<f64> {
        let mut out = vec![1.0];
        let all: Vec<usize> = if with_state {
            std::iter::once(0).chain(axes.iter().copied()).collect()
        } else {
            axes.to_vec()
        };
        for &a in &all {
            let ws: Vec<f64> = if a == 0 {
                vec![1.0; self.shape[0]]
            } else {
                self.weights[a - 1].iter().map(|w| w.sqrt()).collect()
            };
            out = out.iter().flat_map(|&o| ws.iter().map(move |&w| o * w)).collect();
        }
        out
    }
}

/// Reshape `ens` onto a row-major parameter grid.
///
/// The measure must factor as a product over the grid axes; the per-axis
/// weights are recovered from its marginals.
pub fn tensorize(ens: &SnapshotEnsemble, grid: &[usize]) -> Result<SnapshotTensor> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::input(format!("invalid grid shape {grid:?}")));
    }
    let n: usize = grid.iter().product();
    if n != ens.num_samples() {
        return Err(Error::input(format!(
            "grid {grid:?} has {n} points but the ensemble has {} samples",
            ens.num_samples()
        )));
    }
    let d = ens.state_dim();
    let mut data = Vec::with_capacity(d * n);
    for a in 0..d {
        data.extend(ens.data().row(a).iter());
    }

    let w = ens.weights();
    let total: f64 = w.iter().sum();
    let axes = grid.len() as f64;
    let st = strides(grid);
    let mut weights = Vec::with_capacity(grid.len());
    for (j, &nj) in grid.iter().enumerate() {
        let mut marginal = vec![0.0; nj];
        for (flat, &wi) in w.iter().enumerate() {
            marginal[(flat / st[j]) % nj] += wi;
        }
        let norm = total.powf(1.0 / axes - 1.0);
        weights.push(marginal.iter().map(|m| m * norm).collect::<Vec<f64>>());
    }
    for (flat, &wi) in w.iter().enumerate() {
        let prod: f64 = (0..grid.len()).map(|j| weights[j][(flat / st[j]) % grid[j]]).product();
        if (prod - wi).abs() > PRODUCT_WEIGHT_TOL * wi.max(total / n as f64) {
            return Err(Error::input(format!(
                "sample weights do not factor over the grid {grid:?} (sample {flat})"
            )));
        }
    }
    let mut shape = vec![d];
    shape.extend_from_slice(grid);
    SnapshotTensor::with_weights(shape, data, weights)
}

/// Fewest kept values such that the discarded energy stays within
/// `budget`, after the relative rank rule and an optional cap.
fn choose_rank(s: &[f64], budget: f64, cap: Option<usize>) -> (usize, f64) {
    let rank = linalg::numerical_rank(s);
    let mut tail = vec![0.0; s.len() + 1];
    for m in (0..s.len()).rev() {
        tail[m] = tail[m + 1] + s[m] * s[m];
    }
    let mut r = (0..=rank).find(|&r| tail[r] <= budget).unwrap_or(rank);
    if let Some(c) = cap {
        r = r.min(c);
    }
    (r, tail[r])
}

/// Result of a binary split `t ~ left * diag(s) * right`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub left_axes: Vec<usize>,
    pub right_axes: Vec<usize>,
    /// `rows x r`, rows over the state axis and the left parameter axes.
    pub left: DMatrix<f64>,
    /// `r x cols`, columns over the right parameter axes.
    pub right: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Every singular value of the weighted matricization, kept or not.
    pub all_singular_values: Vec<f64>,
    pub discarded_energy: f64,
}

impl Split {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `left * diag(s) * right`, in unweighted coordinates.
    pub fn reconstruct_matrix(&self) -> DMatrix<f64> {
        let s = DVector::from_column_slice(&self.singular_values);
        &self.left * DMatrix::from_diagonal(&s) * &self.right
    }
}

/// Split the parameter axes into `left` and `right` groups (state axis on
/// the left) and truncate the SVD of the weighted matricization so that
/// `sum discarded s^2 <= eps^2`.
pub fn split(t: &SnapshotTensor, left: &[usize], right: &[usize], eps: f64) -> Result<Split> {
    let k = t.order();
    let mut seen = vec![false; k];
    for &a in left.iter().chain(right) {
        if a == 0 || a >= k {
            return Err(Error::input(format!("axis {a} is not a parameter axis of an order-{k} tensor")));
        }
        if seen[a] {
            return Err(Error::input(format!("axis {a} appears twice in the partition")));
        }
        seen[a] = true;
    }
    if seen.iter().skip(1).any(|s| !s) {
        return Err(Error::input("the partition must cover every parameter axis"));
    }
    if right.is_empty() {
        return Err(Error::input("the right group of a split must be non-empty"));
    }
    if !(eps >= 0.0) {
        return Err(Error::input(format!("tolerance {eps} is negative")));
    }
    let m = t.matricize(&t.scaled_data(), left, right);
    let (u, s, v) = linalg::svd_desc(&m);
    let (r, discarded) = choose_rank(&s, eps * eps, None);
    let mut lf = u.columns(0, r).into_owned();
    let mut rf = v.columns(0, r).transpose();
    for (i, w) in t.axis_sqrt_weights(left, true).iter().enumerate() {
        lf.row_mut(i).unscale_mut(*w);
    }
    for (j, w) in t.axis_sqrt_weights(right, false).iter().enumerate() {
        rf.column_mut(j).unscale_mut(*w);
    }
    Ok(Split {
        left_axes: left.to_vec(),
        right_axes: right.to_vec(),
        left: lf,
        right: rf,
        singular_values: s[..r].to_vec(),
        all_singular_values: s,
        discarded_energy: discarded,
    })
}

/// Weighted error of a split against the tensor it came from.
pub fn split_error(t: &SnapshotTensor, sp: &Split) -> Result<f64> {
    let m = t.matricize(t.data(), &sp.left_axes, &sp.right_axes);
    let approx = sp.reconstruct_matrix();
    if approx.shape() != m.shape() {
        return Err(Error::Structure("split does not match the tensor shape".into()));
    }
    let rw = t.axis_sqrt_weights(&sp.left_axes, true);
    let cw = t.axis_sqrt_weights(&sp.right_axes, false);
    let mut err = 0.0;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let diff = (m[(r, c)] - approx[(r, c)]) * rw[r] * cw[c];
            err += diff * diff;
        }
    }
    Ok(err.sqrt())
}

/// Order-3 TT core of shape `(r_left, n, r_right)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TtCore {
    pub r_left: usize,
    pub n: usize,
    pub r_right: usize,
    pub data: Vec<f64>,
}

impl TtCore {
    pub fn new(r_left: usize, n: usize, r_right: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != r_left * n * r_right {
            return Err(Error::Structure(format!(
                "core ({r_left}, {n}, {r_right}) needs {} entries, got {}",
                r_left * n * r_right,
                data.len()
            )));
        }
        Ok(Self {
            r_left,
            n,
            r_right,
            data,
        })
    }

    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[(a * self.n + i) * self.r_right + b]
    }

    /// The core as an `r_left x (n * r_right)` matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.r_left, self.n * self.r_right, &self.data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtDecomposition {
    pub cores: Vec<TtCore>,
    /// Discarded energy per split (`K - 1` entries).
    pub discarded: Vec<f64>,
    /// Kept singular values per split.
    pub singular_values: Vec<Vec<f64>>,
    pub max_bond: Option<usize>,
    /// Parameter-axis weights of the source tensor.
    pub weights: Vec<Vec<f64>>,
}

impl TtDecomposition {
    /// `r_0, r_1, ..., r_K`.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.cores.iter().map(|c| c.r_left).collect();
        b.push(self.cores.last().map(|c| c.r_right).unwrap_or(1));
        b
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n).collect()
    }

    /// `sqrt(sum over splits of discarded energy)`.
    pub fn error_bound(&self) -> f64 {
        self.discarded.iter().sum::<f64>().sqrt()
    }
}

/// Sequential left-to-right TT-SVD. Each of the `K - 1` splits may discard
/// up to `eps^2 / (K - 1)`, so the total error is at most `eps`; bond
/// dimensions are further capped by `max_bond`.
pub fn tt_svd(t: &SnapshotTensor, eps: f64, max_bond: Option<usize>) -> Result<TtDecomposition> {
    if !(eps >= 0.0) {
        return Err(Error::input(format!("tolerance {eps} is negative")));
    }
    if max_bond == Some(0) {
        return Err(Error::input("bond cap must be at least 1"));
    }
    let shape = t.shape().to_vec();
    let k = shape.len();
    let splits = k - 1;
    let budget = eps * eps / splits as f64;

    let mut rest = t.scaled_data();
    let mut r_prev = 1;
    let mut cores = Vec::with_capacity(k);
    let mut discarded = Vec::with_capacity(splits);
    let mut kept = Vec::with_capacity(splits);
    for &nk in &shape[..splits] {
        let rows = r_prev * nk;
        let cols = rest.len() / rows;
        let m = DMatrix::from_row_slice(rows, cols, &rest);
        let (u, s, v) = linalg::svd_desc(&m);
        let (r, tail) = choose_rank(&s, budget, max_bond);
        let mut core = Vec::with_capacity(rows * r);
        for row in 0..rows {
            core.extend((0..r).map(|b| u[(row, b)]));
        }
        cores.push(TtCore::new(r_prev, nk, r, core)?);
        rest = Vec::with_capacity(r * cols);
        for b in 0..r {
            rest.extend((0..cols).map(|c| s[b] * v[(c, b)]));
        }
        discarded.push(tail);
        kept.push(s[..r].to_vec());
        r_prev = r;
    }
    cores.push(TtCore::new(r_prev, shape[k - 1], 1, rest)?);

    // Undo the sqrt(w) scaling on every parameter axis.
    for (axis, core) in cores.iter_mut().enumerate().skip(1) {
        let w = &t.weights()[axis - 1];
        let (n, rr) = (core.n, core.r_right);
        for (flat, x) in core.data.iter_mut().enumerate() {
            *x /= w[(flat / rr) % n].sqrt();
        }
    }
    Ok(TtDecomposition {
        cores,
        discarded,
        singular_values: kept,
        max_bond,
        weights: t.weights().to_vec(),
    })
}

/// Contract all cores back into a full tensor.
pub fn tt_reconstruct(tt: &TtDecomposition) -> Result<SnapshotTensor> {
    let first = tt
        .cores
        .first()
        .ok_or_else(|| Error::Structure("TT has no cores".into()))?;
    if first.r_left != 1 {
        return Err(Error::Structure(format!("first core has left bond {}", first.r_left)));
    }
    if tt.cores.last().unwrap().r_right != 1 {
        return Err(Error::Structure("last core must have right bond 1".into()));
    }
    for (k, pair) in tt.cores.windows(2).enumerate() {
        if pair[0].r_right != pair[1].r_left {
            return Err(Error::Structure(format!(
                "bond mismatch between cores {k} and {}: {} vs {}",
                k + 1,
                pair[0].r_right,
                pair[1].r_left
            )));
        }
    }
    // acc is (prod of sizes so far) x r, row-major.
    let mut acc = DMatrix::from_row_slice(first.n, first.r_right, &first.data);
    for core in &tt.cores[1..] {
        let next = &acc * core.as_matrix();
        let rows = next.nrows() * core.n;
        let flat: Vec<f64> = (0..next.nrows())
            .flat_map(|i| next.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        acc = DMatrix::from_row_slice(rows, core.r_right, &flat);
    }
    let data: Vec<f64> = acc.column(0).iter().copied().collect();
    let shape = tt.shape();
    if shape.len() < 2 {
        return Err(Error::Structure("TT needs at least two cores".into()));
    }
    let weights = if tt.weights.len() == shape.len() - 1 {
        tt.weights.clone()
    } else {
        shape[1..].iter().map(|&n| vec![1.0; n]).collect()
    };
    SnapshotTensor::with_weights(shape, data, weights)
}

/// Manifest describing an exported TT.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TtManifest {
    pub shape: Vec<usize>,
    pub bond_dims: Vec<usize>,
    #[serde(serialize_with = "io::fixed_vec")]
    pub discarded_energies: Vec<f64>,
    #[serde(serialize_with = "io::fixed")]
    pub error_bound: f64,
    pub max_bond: Option<usize>,
    /// Core file names; each holds an `r_left x (n * r_right)` matrix.
    pub cores: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

/// Write `tt_manifest.json` plus `tt_core_<k>.csv` files into `dir`.
pub fn write_tt(dir: &Path, tt: &TtDecomposition) -> Result<TtManifest> {
    let mut names = Vec::with_capacity(tt.cores.len());
    for (k, core) in tt.cores.iter().enumerate() {
        let name = format!("tt_core_{k}.csv");
        io::write_matrix_csv(&dir.join(&name), &core.as_matrix())?;
        names.push(name);
    }
    let manifest = TtManifest {
        shape: tt.shape(),
        bond_dims: tt.bond_dims(),
        discarded_energies: tt.discarded.clone(),
        error_bound: tt.error_bound(),
        max_bond: tt.max_bond,
        cores: names,
        weights: tt.weights.clone(),
    };
    let text = serde_json::to_string_pretty(&ManifestOut(&manifest)).map_err(|source| Error::Json {
        path: dir.join("tt_manifest.json").display().to_string(),
        source,
    })?;
    io::write_atomic(&dir.join("tt_manifest.json"), format!("{text}\n").as_bytes())?;
    Ok(manifest)
}

/// Weights are written in the fixed float format too.
struct ManifestOut<'a>(&'a TtManifest);

impl Serialize for ManifestOut<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let m = self.0;
        let mut st = s.serialize_struct("TtManifest", 7)?;
        st.serialize_field("shape", &m.shape)?;
        st.serialize_field("bond_dims", &m.bond_dims)?;
        st.serialize_field(
            "discarded_energies",
            &m.discarded_energies.iter().map(|&x| io::Fixed(x)).collect::<Vec<_>>(),
        )?;
        st.serialize_field("error_bound", &io::Fixed(m.error_bound))?;
        st.serialize_field("max_bond", &m.max_bond)?;
        st.serialize_field("cores", &m.cores)?;
        let w: Vec<Vec<io::Fixed>> = m
            .weights
            .iter()
            .map(|ws| ws.iter().map(|&x| io::Fixed(x)).collect())
            .collect();
        st.serialize_field("weights", &w)?;
        st.end()
    }
}

/// Read a TT written by [`write_tt`].
pub fn read_tt(manifest_path: &Path) -> Result<TtDecomposition> {
    let manifest: TtManifest = io::read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.cores.len() != manifest.shape.len() || manifest.bond_dims.len() != manifest.shape.len() + 1 {
        return Err(Error::Structure("manifest core count does not match its shape".into()));
    }
    let mut cores = Vec::with_capacity(manifest.cores.len());
    for (k, name) in manifest.cores.iter().enumerate() {
        let (rl, n, rr) = (manifest.bond_dims[k], manifest.shape[k], manifest.bond_dims[k + 1]);
        let data = if rl * n * rr == 0 {
            Vec::new()
        } else {
            let m = io::read_matrix_csv(&dir.join(name))?;
            if m.shape() != (rl, n * rr) {
                return Err(Error::Structure(format!(
                    "{name} is {}x{}, expected {rl}x{}",
                    m.nrows(),
                    m.ncols(),
                    n * rr
                )));
            }
            (0..rl).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect()
        };
        cores.push(TtCore::new(rl, n, rr, data)?);
    }
    let singular_values = vec![Vec::new(); manifest.discarded_energies.len()];
    Ok(TtDecomposition {
        cores,
        discarded: manifest.discarded_energies,
        singular_values,
        max_bond: manifest.max_bond,
        weights: manifest.weights,
    })
}
