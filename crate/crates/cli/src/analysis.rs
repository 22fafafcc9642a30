//! POD analysis shared by the `pod`, `coupled` and `matrix-field` commands:
//! truncation table, spectrum duality, Eckart-Young adversary and the
//! kernel isometry checks.

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use romkit::io::Fixed;
use romkit::kernel::{gram, synthesize};
use romkit::spectral::{eigendecompose, kl_expand, method_of_snapshots};
use romkit::{KlExpansion, RkhsFunction, SnapshotEnsemble, Truncation};
use serde::Serialize;

use crate::report::{fx, Audit};

/// Relative tolerance for predicted vs measured truncation error.
pub const TRUNCATION_TOL: f64 = 1e-10;
/// Tails below this fraction of the total energy are compared absolutely.
pub const ENERGY_FLOOR: f64 = 1e-14;
/// Spectra are compared relative to the largest eigenvalue.
pub const SPECTRUM_TOL: f64 = 1e-10;
pub const ISOMETRY_TOL: f64 = 1e-12;
pub const ADVERSARY_CANDIDATES: usize = 100;
const KERNEL_PROBES: usize = 10;

#[derive(Debug, Serialize)]
pub struct TruncationRow {
    pub n: usize,
    pub predicted: Fixed,
    pub measured: Fixed,
    /// `measured / predicted`; absent when the tail is below the floor.
    pub ratio: Option<Fixed>,
}

#[derive(Debug, Serialize)]
pub struct Spectra {
    /// Eigenvalues of the `d x d` correlation.
    pub u_side: Vec<Fixed>,
    /// Eigenvalues of the weighted `N x N` Gram matrix.
    pub q_side: Vec<Fixed>,
    pub max_relative_deviation: Fixed,
}

#[derive(Debug, Serialize)]
pub struct Adversary {
    pub candidates: usize,
    /// Smallest `(candidate error - optimal error) / scale`; never negative
    /// when the truncated expansion is optimal.
    pub min_relative_margin: Fixed,
}

#[derive(Debug, Serialize)]
pub struct Selected {
    pub n: usize,
    pub predicted: Fixed,
    pub measured: Fixed,
}

#[derive(Debug, Serialize)]
pub struct PodSection {
    pub state_dim: usize,
    pub num_samples: usize,
    pub rank: usize,
    pub total_energy: Fixed,
    pub singular_values: Vec<Fixed>,
    pub truncation: Vec<TruncationRow>,
    pub selected: Option<Selected>,
    pub spectra: Spectra,
    pub eckart_young: Adversary,
    pub kernel_isometry_deviation: Fixed,
}

pub struct PodAnalysis {
    pub section: PodSection,
    pub audits: Vec<Audit>,
    pub full: KlExpansion,
    pub kept: KlExpansion,
}

/// `|measured - predicted|` relative to `max(predicted, floor * total)`.
pub fn relative_gap(measured: f64, predicted: f64, total: f64) -> f64 {
    let scale = predicted.max(ENERGY_FLOOR * total);
    if scale == 0.0 {
        return (measured - predicted).abs();
    }
    (measured - predicted).abs() / scale
}

pub fn analyse(ens: &SnapshotEnsemble, truncation: Option<Truncation>, rng: &mut ChaCha8Rng) -> Result<PodAnalysis> {
    let full = kl_expand(ens);
    let total = ens.energy();
    let tails = full.tail_energies();
    let mut audits = Vec::new();

    let mut rows = Vec::with_capacity(full.rank());
    let mut worst = 0.0f64;
    for n in 1..=full.rank() {
        let predicted = tails[n];
        let measured = full.truncate(Truncation::Rank(n))?.weighted_error(ens)?;
        worst = worst.max(relative_gap(measured, predicted, total));
        rows.push(TruncationRow {
            n,
            predicted: Fixed(predicted),
            measured: Fixed(measured),
            ratio: (predicted > ENERGY_FLOOR * total).then(|| Fixed(measured / predicted)),
        });
    }
    audits.push(Audit::at_most("truncation_identity", worst, TRUNCATION_TOL));

    let kept = match truncation {
        Some(t) => full.truncate(t)?,
        None => full.clone(),
    };
    let selected = truncation.map(|_| -> Result<Selected> {
        Ok(Selected {
            n: kept.rank(),
            predicted: Fixed(kept.discarded_energy()),
            measured: Fixed(kept.weighted_error(ens)?),
        })
    });
    let selected = selected.transpose()?;

    let spectra = duality(ens)?;
    audits.push(Audit::at_most(
        "spectrum_duality",
        spectra.max_relative_deviation.0,
        SPECTRUM_TOL,
    ));

    let margin = adversary(ens, &full, rng);
    audits.push(Audit::at_least_minus("eckart_young", margin, TRUNCATION_TOL));

    let (iso, exact) = kernel_checks(ens, rng)?;
    audits.push(Audit::at_most("kernel_isometry", iso, ISOMETRY_TOL));
    audits.push(Audit::at_most("kernel_reproduction", if exact { 0.0 } else { 1.0 }, 0.0));

    Ok(PodAnalysis {
        section: PodSection {
            state_dim: ens.state_dim(),
            num_samples: ens.num_samples(),
            rank: full.rank(),
            total_energy: Fixed(total),
            singular_values: fx(full.singular_values()),
            truncation: rows,
            selected,
            spectra,
            eckart_young: Adversary {
                candidates: if full.rank() == 0 { 0 } else { ADVERSARY_CANDIDATES },
                min_relative_margin: Fixed(margin),
            },
            kernel_isometry_deviation: Fixed(iso),
        },
        audits,
        full,
        kept,
    })
}

/// Compare the two nonzero spectra: the leading `min(d, N)` eigenvalues must
/// agree and everything beyond must vanish, relative to the largest one.
pub fn compare_spectra(a: &[f64], b: &[f64]) -> f64 {
    let top = a.iter().chain(b).fold(0.0f64, |m, &x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let k = a.len().min(b.len());
    let paired = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    let rest = a[k..].iter().chain(&b[k..]).map(|x| x.abs());
    paired.chain(rest).fold(0.0, f64::max) / top
}

fn duality(ens: &SnapshotEnsemble) -> Result<Spectra> {
    let u_side = eigendecompose(&ens.correlation())?.eigenvalues;
    let q_side = method_of_snapshots(&gram(ens), ens.measure())?.eigenvalues;
    let dev = compare_spectra(&u_side, &q_side);
    Ok(Spectra {
        u_side: fx(&u_side),
        q_side: fx(&q_side),
        max_relative_deviation: Fixed(dev),
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random rank-`n` competitors: orthonormalised perturbations of the optimal
/// spatial basis at random scales. Returns the smallest relative margin.
fn adversary(ens: &SnapshotEnsemble, kl: &KlExpansion, rng: &mut ChaCha8Rng) -> f64 {
    let rank = kl.rank();
    if rank == 0 {
        return 0.0;
    }
    let total = ens.energy();
    let tails = kl.tail_energies();
    let d = ens.state_dim();
    let mut worst = f64::INFINITY;
    for j in 0..ADVERSARY_CANDIDATES {
        let n = 1 + j % rank;
        let delta = 10f64.powf(rng.random_range(-8.0..1.0));
        let basis = DMatrix::from_fn(d, n, |i, m| kl.spatial_modes()[(i, m)] + delta * gaussian(rng));
        let q = basis.qr().q();
        let mut err = 0.0;
        for (i, &w) in ens.weights().iter().enumerate() {
            let r = ens.data().column(i);
            let coeff = q.transpose() * r;
            err += w * (r - &q * coeff).norm_squared();
        }
        let scale = tails[n].max(ENERGY_FLOOR * total);
        worst = worst.min((err - tails[n]) / scale);
    }
    worst
}

/// `|A a|^2` vs `a^T G a` on random coefficients, and exact agreement of
/// the reproducing identity with direct evaluation.
fn kernel_checks(ens: &SnapshotEnsemble, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = gram(ens);
    let n = ens.num_samples();
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..KERNEL_PROBES {
        let a = RkhsFunction::new(DVector::from_fn(n, |_, _| gaussian(rng)));
        let u = synthesize(ens, &a)?;
        let lhs = u.norm_squared();
        let rhs = g.inner(&a, &a)?;
        let scale = lhs.abs().max(rhs.abs());
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        let values = g.evaluate(&a)?;
        for j in 0..n {
            exact &= g.reproduce(j, &a)? == values[j];
        }
    }
    Ok((worst, exact))
}
