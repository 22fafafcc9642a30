pub mod coupled;
pub mod field;
pub mod pod;
pub mod simulate;
pub mod tensor;

use std::path::Path;

use anyhow::Result;
use nalgebra::DMatrix;
use romkit::io;
use romkit::KlExpansion;

/// Write a matrix into `out` and remember its name for the report.
pub(crate) fn emit(out: &Path, name: &str, m: &DMatrix<f64>, outputs: &mut Vec<String>) -> Result<()> {
    io::write_matrix_csv(&out.join(name), m)?;
    outputs.push(name.to_string());
    Ok(())
}

pub(crate) fn emit_modes(out: &Path, prefix: &str, kl: &KlExpansion, outputs: &mut Vec<String>) -> Result<()> {
    let s = DMatrix::from_column_slice(kl.rank(), 1, kl.singular_values());
    emit(out, &format!("{prefix}singular_values.csv"), &s, outputs)?;
    emit(out, &format!("{prefix}spatial_modes.csv"), kl.spatial_modes(), outputs)?;
    emit(out, &format!("{prefix}parametric_modes.csv"), kl.parametric_modes(), outputs)
}
