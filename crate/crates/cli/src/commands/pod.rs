use std::path::Path;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::emit_modes;
use crate::analysis::{analyse, PodSection};
use crate::config::{self, PodConfig};
use crate::report::Report;

pub fn run(config_path: &Path, out: &Path, seed: u64, weights_flag: bool) -> Result<bool> {
    let mut cfg: PodConfig = config::load(config_path)?;
    cfg.source.weights_column |= weights_flag;
    let ens = cfg.source.load(config_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analysis = analyse(&ens, cfg.truncation.map(Into::into), &mut rng)?;

    let mut outputs = Vec::new();
    if cfg.export_modes {
        emit_modes(out, "", &analysis.kept, &mut outputs)?;
    }
    let report: Report<PodSection> = Report::new("pod", seed, analysis.audits, outputs, analysis.section);
    report.write(out)?;
    Ok(report.passed)
}
