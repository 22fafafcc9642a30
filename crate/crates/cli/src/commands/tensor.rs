use std::path::Path;

use anyhow::Result;
use romkit::io::Fixed;
use romkit::spectral::kl_expand;
use romkit::tensor::{split, split_error, tensorize, tt_reconstruct, tt_svd, write_tt};
use serde::Serialize;

use crate::analysis::{relative_gap, TRUNCATION_TOL};
use crate::config::{self, TensorConfig};
use crate::report::{fx, Audit, Report};

/// Slack on the TT error bound and on exact reconstruction.
const TT_TOL: f64 = 1e-10;

#[derive(Serialize)]
struct SplitRow {
    left: Vec<usize>,
    right: Vec<usize>,
    eps: Fixed,
    rank: usize,
    singular_values: Vec<Fixed>,
    discarded_energy: Fixed,
    measured_squared_error: Fixed,
}

#[derive(Serialize)]
struct TensorResult {
    shape: Vec<usize>,
    weighted_norm: Fixed,
    eps: Fixed,
    max_bond: Option<usize>,
    bond_dims: Vec<usize>,
    discarded_energies: Vec<Fixed>,
    error_bound: Fixed,
    measured_error: Fixed,
    splits: Vec<SplitRow>,
    manifest: &'static str,
}

pub fn run(config_path: &Path, out: &Path, seed: u64, weights_flag: bool) -> Result<bool> {
    let mut cfg: TensorConfig = config::load(config_path)?;
    cfg.source.weights_column |= weights_flag;
    let ens = cfg.source.load(config_path)?;
    let t = tensorize(&ens, &cfg.grid)?;
    let norm = t.weighted_norm();

    let tt = tt_svd(&t, cfg.eps, cfg.max_bond)?;
    let measured = t.weighted_distance(&tt_reconstruct(&tt)?)?;
    let bound = tt.error_bound();
    let mut audits = vec![Audit::at_most(
        "tt_error_bound",
        measured - bound,
        TT_TOL * bound + 1e-14 * norm,
    )];
    if cfg.eps == 0.0 && cfg.max_bond.is_none() {
        audits.push(Audit::at_most("tt_exact", measured, TT_TOL * norm));
    }
    if cfg.grid.len() == 1 {
        // Two cores: the single split is the weighted matrix SVD.
        let kl = kl_expand(&ens);
        let top = kl.singular_values().first().copied().unwrap_or(0.0);
        let full = split(&t, &[], &[1], 0.0)?.all_singular_values;
        let dev = full
            .iter()
            .enumerate()
            .map(|(i, s)| (s - kl.singular_values().get(i).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        audits.push(Audit::at_most("order_two_matches_kl", dev, TT_TOL * top));
    }

    let mut splits = Vec::new();
    let mut worst = 0.0f64;
    for spec in &cfg.splits {
        let sp = split(&t, &spec.left, &spec.right, spec.eps)?;
        let err = split_error(&t, &sp)?;
        worst = worst.max(relative_gap(err * err, sp.discarded_energy, norm * norm));
        splits.push(SplitRow {
            left: spec.left.clone(),
            right: spec.right.clone(),
            eps: Fixed(spec.eps),
            rank: sp.rank(),
            singular_values: fx(&sp.singular_values),
            discarded_energy: Fixed(sp.discarded_energy),
            measured_squared_error: Fixed(err * err),
        });
    }
    if !splits.is_empty() {
        audits.push(Audit::at_most("split_truncation_identity", worst, TRUNCATION_TOL));
    }

    let manifest = write_tt(out, &tt)?;
    let mut outputs = manifest.cores.clone();
    outputs.push("tt_manifest.json".into());

    let result = TensorResult {
        shape: t.shape().to_vec(),
        weighted_norm: Fixed(norm),
        eps: Fixed(cfg.eps),
        max_bond: cfg.max_bond,
        bond_dims: tt.bond_dims(),
        discarded_energies: fx(&tt.discarded),
        error_bound: Fixed(bound),
        measured_error: Fixed(measured),
        splits,
        manifest: "tt_manifest.json",
    };
    let report = Report::new("tensor", seed, audits, outputs, result);
    report.write(out)?;
    Ok(report.passed)
}
