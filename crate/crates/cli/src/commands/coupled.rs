use std::path::Path;

use anyhow::{ensure, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use romkit::coupled::{eigenvalues, spectrum_union, CoupledEnsemble};
use romkit::io::Fixed;
use romkit::{SnapshotEnsemble, Truncation};
use serde::Serialize;

use super::emit_modes;
use crate::analysis::{analyse, compare_spectra, relative_gap, PodSection, SPECTRUM_TOL, TRUNCATION_TOL};
use crate::config::{self, load_measure, resolve, CoupledConfig};
use crate::report::{fx, Audit, Report};

const ADDITIVITY_TOL: f64 = 1e-12;
const ADDITIVITY_PROBES: usize = 20;
const FIBRE_TOL: f64 = 1e-12;

#[derive(Serialize)]
struct Subsystem {
    name: String,
    scale: Fixed,
    pod: PodSection,
}

#[derive(Serialize)]
struct JointRow {
    n: usize,
    n1: usize,
    n2: usize,
    predicted: Fixed,
    measured: Fixed,
}

#[derive(Serialize)]
struct Fibres {
    m1: Vec<usize>,
    m2: Vec<usize>,
    n1: usize,
    n2: usize,
    /// Spread of the first diagonal kernel block along `mu_2` fibres, and of
    /// the second along `mu_1` fibres, relative to the largest entry.
    variation: [Fixed; 2],
    audited: bool,
}

#[derive(Serialize)]
struct CoupledResult {
    subsystems: Vec<Subsystem>,
    coupling_spectrum: Vec<Fixed>,
    union_spectrum: Vec<Fixed>,
    union_deviation: Fixed,
    kernel_spectrum_deviation: Fixed,
    block_additivity_deviation: Fixed,
    joint_truncation: Vec<JointRow>,
    partition: Option<Fibres>,
}

/// Joint truncation order: merge the (scaled) subsystem spectra, keeping
/// the largest eigenvalues first; ties go to subsystem 1.
fn joint_order(l1: &[f64], l2: &[f64]) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(l1.len() + l2.len());
    while i < l1.len() || j < l2.len() {
        if j == l2.len() || (i < l1.len() && l1[i] >= l2[j]) {
            i += 1;
        } else {
            j += 1;
        }
        out.push((i, j));
    }
    out
}

pub fn run(config_path: &Path, out: &Path, seed: u64, weights_flag: bool) -> Result<bool> {
    let cfg: CoupledConfig = config::load(config_path)?;
    ensure!(cfg.subsystems.len() == 2, "a coupled manifest needs exactly two subsystems");
    let data: Vec<DMatrix<f64>> = cfg
        .subsystems
        .iter()
        .map(|s| romkit::io::read_matrix_csv(&resolve(config_path, &s.snapshots)))
        .collect::<Result<_, _>>()?;
    ensure!(
        data[0].ncols() == data[1].ncols(),
        "subsystems have {} and {} samples",
        data[0].ncols(),
        data[1].ncols()
    );
    let measure = load_measure(
        config_path,
        cfg.params.as_deref(),
        cfg.weights_column || weights_flag,
        cfg.probability,
        data[0].ncols(),
    )?;
    let [d1, d2]: [DMatrix<f64>; 2] = data.try_into().expect("two subsystems");
    let mut ce = CoupledEnsemble::new(
        SnapshotEnsemble::new(d1, measure.clone())?,
        SnapshotEnsemble::new(d2, measure)?,
    )?;
    if let Some([s1, s2]) = cfg.scales {
        ce = ce.with_scales(s1, s2)?;
    }
    if let Some(p) = &cfg.partition {
        ce = ce.with_partition(p.m1.clone(), p.m2.clone())?;
    }
    let (s1, s2) = ce.scales();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audits = Vec::new();
    let mut outputs = Vec::new();
    let mut subsystems = Vec::new();
    let mut spectra = Vec::new();
    let mut kls = Vec::new();
    for (spec, (ens, scale)) in cfg.subsystems.iter().zip([(ce.sub1(), s1), (ce.sub2(), s2)]) {
        let a = analyse(ens, None, &mut rng)?;
        audits.extend(a.audits.into_iter().map(|x| x.prefixed(&spec.name)));
        emit_modes(out, &format!("{}_", spec.name), &a.full, &mut outputs)?;
        spectra.push(a.full.eigenvalues().iter().map(|l| l * scale).collect::<Vec<f64>>());
        kls.push(a.full);
        subsystems.push(Subsystem {
            name: spec.name.clone(),
            scale: Fixed(scale),
            pod: a.section,
        });
    }

    // diag(s1 C1, s2 C2) has exactly the union of the block spectra.
    let coupling = eigenvalues(&ce.coupling_correlation());
    let (c1, c2) = ce.block_correlations();
    let union = spectrum_union(&eigenvalues(&c1), &eigenvalues(&c2));
    let union_dev = compare_spectra(&coupling, &union);
    audits.push(Audit::at_most("coupling.spectrum_union", union_dev, SPECTRUM_TOL));

    // The weighted coupled kernel on Q (x) R^2 pairs with the coupling correlation.
    let kernel = ce.coupled_kernel();
    let n = ce.num_samples();
    let sw: Vec<f64> = ce.measure().weights().iter().map(|w| w.sqrt()).collect();
    let weighted = DMatrix::from_fn(2 * n, 2 * n, |a, b| {
        let (i, p, j, q) = (a / 2, a % 2, b / 2, b % 2);
        sw[i] * sw[j] * kernel.block(i, j)[(p, q)]
    });
    let kernel_spectrum = romkit::linalg::sym_eigen_desc(&weighted).0;
    let kernel_dev = compare_spectra(&coupling, &kernel_spectrum);
    audits.push(Audit::at_most("coupling.kernel_duality", kernel_dev, SPECTRUM_TOL));

    // Dense coupling correlation vs the block-wise parameter-side sum.
    let dense = ce.coupling_correlation();
    let (dim1, dim2) = (ce.sub1().state_dim(), ce.sub2().state_dim());
    let mut additivity = 0.0f64;
    for _ in 0..ADDITIVITY_PROBES {
        let mut v = |k: usize| DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (u1, u2, v1, v2) = (v(dim1), v(dim2), v(dim1), v(dim2));
        let u = DVector::from_iterator(dim1 + dim2, u1.iter().chain(u2.iter()).copied());
        let w = DVector::from_iterator(dim1 + dim2, v1.iter().chain(v2.iter()).copied());
        let joint = dense.bilinear(&u, &w);
        let blocks = ce.coupled_bilinear((&u1, &u2), (&v1, &v2))?;
        let scale = (dense.bilinear(&u, &u) * dense.bilinear(&w, &w)).sqrt();
        if scale > 0.0 {
            additivity = additivity.max((joint - blocks).abs() / scale);
        }
    }
    audits.push(Audit::at_most("coupling.block_additivity", additivity, ADDITIVITY_TOL));

    // Joint truncation driven by the union spectrum.
    let total = s1 * ce.sub1().energy() + s2 * ce.sub2().energy();
    let (t1, t2) = (kls[0].tail_energies(), kls[1].tail_energies());
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (k, (n1, n2)) in joint_order(&spectra[0], &spectra[1]).into_iter().enumerate() {
        let predicted = s1 * t1[n1] + s2 * t2[n2];
        let e1 = kls[0].truncate(Truncation::Rank(n1))?.weighted_error(ce.sub1())?;
        let e2 = kls[1].truncate(Truncation::Rank(n2))?.weighted_error(ce.sub2())?;
        let measured = s1 * e1 + s2 * e2;
        worst = worst.max(relative_gap(measured, predicted, total));
        rows.push(JointRow {
            n: k + 1,
            n1,
            n2,
            predicted: Fixed(predicted),
            measured: Fixed(measured),
        });
    }
    audits.push(Audit::at_most("coupling.joint_truncation", worst, TRUNCATION_TOL));

    let partition = match (ce.partition(), &cfg.partition) {
        (Some(grid), Some(spec)) => {
            let (v1, v2) = kernel.fibre_variation(grid);
            let rel = |v: f64, m: &DMatrix<f64>| if m.amax() > 0.0 { v / m.amax() } else { v };
            let (r1, r2) = (rel(v1, &kernel.diag1), rel(v2, &kernel.diag2));
            if spec.independent {
                audits.push(Audit::at_most("coupling.fibre_constancy", r1.max(r2), FIBRE_TOL));
            }
            Some(Fibres {
                m1: grid.m1_indices.clone(),
                m2: grid.m2_indices.clone(),
                n1: grid.n1,
                n2: grid.n2,
                variation: [Fixed(r1), Fixed(r2)],
                audited: spec.independent,
            })
        }
        _ => None,
    };

    let result = CoupledResult {
        subsystems,
        coupling_spectrum: fx(&coupling),
        union_spectrum: fx(&union),
        union_deviation: Fixed(union_dev),
        kernel_spectrum_deviation: Fixed(kernel_dev),
        block_additivity_deviation: Fixed(additivity),
        joint_truncation: rows,
        partition,
    };
    let report = Report::new("coupled", seed, audits, outputs, result);
    report.write(out)?;
    Ok(report.passed)
}
