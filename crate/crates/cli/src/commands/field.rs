use std::path::Path;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use romkit::io::{self, Fixed};
use romkit::structured::{decode_field, encode_field, field_to_rows, sample_distances, Manifold, MatrixFieldEnsemble};
use romkit::SnapshotEnsemble;
use serde::Serialize;

use super::{emit, emit_modes};
use crate::analysis::{analyse, PodSection};
use crate::config::{self, load_measure, resolve, FieldConfig};
use crate::report::{fx, Audit, Report};

/// Per-sample Frobenius roundtrip tolerance at full rank.
const ROUNDTRIP_TOL: f64 = 1e-8;

#[derive(Serialize)]
struct FieldResult {
    manifold: Manifold,
    n: usize,
    num_samples: usize,
    encoded_dim: usize,
    encoded_energy: Fixed,
    pod: PodSection,
    roundtrip_errors: Vec<Fixed>,
    max_roundtrip_error: Fixed,
}

pub fn run(config_path: &Path, out: &Path, seed: u64, weights_flag: bool) -> Result<bool> {
    let cfg: FieldConfig = config::load(config_path)?;
    let rows = io::read_matrix_csv(&resolve(config_path, &cfg.samples))?;
    let parsed = romkit::structured::field_from_rows(&rows, cfg.n, cfg.manifold)?;
    let measure = load_measure(
        config_path,
        cfg.params.as_deref(),
        cfg.weights_column || weights_flag,
        cfg.probability,
        parsed.len(),
    )?;
    let field = MatrixFieldEnsemble::new(parsed.samples().to_vec(), cfg.manifold, measure)?;

    let encoded = encode_field(&field)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analysis = analyse(&encoded, cfg.truncation.map(Into::into), &mut rng)?;
    let reduced = SnapshotEnsemble::new(analysis.kept.reconstruct_all(), encoded.measure().clone())?;
    let decoded = decode_field(&reduced, cfg.manifold)?;
    let errors = sample_distances(&field, &decoded)?;
    let worst = errors.iter().copied().fold(0.0, f64::max);

    let mut audits = analysis.audits;
    if analysis.kept.rank() == analysis.full.rank() {
        audits.push(Audit::at_most("roundtrip", worst, ROUNDTRIP_TOL));
    }

    let mut outputs = Vec::new();
    emit(out, "encoded.csv", encoded.data(), &mut outputs)?;
    emit(out, "decoded.csv", &field_to_rows(&decoded), &mut outputs)?;
    emit_modes(out, "", &analysis.kept, &mut outputs)?;

    let result = FieldResult {
        manifold: cfg.manifold,
        n: cfg.n,
        num_samples: field.len(),
        encoded_dim: encoded.state_dim(),
        encoded_energy: Fixed(encoded.energy()),
        pod: analysis.section,
        roundtrip_errors: fx(&errors),
        max_roundtrip_error: Fixed(worst),
    };
    let report = Report::new("matrix-field", seed, audits, outputs, result);
    report.write(out)?;
    Ok(report.passed)
}
