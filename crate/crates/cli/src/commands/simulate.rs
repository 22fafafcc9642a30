use std::path::Path;

use anyhow::{ensure, Result};
use nalgebra::DMatrix;
use romkit::io::{self, Fixed};
use romkit::piston::Scenario;
use serde::Serialize;

use super::emit;
use crate::report::{Audit, Report};

#[derive(Serialize)]
struct Manifest {
    subsystems: Vec<Sub>,
    params: &'static str,
    weights_column: bool,
    observation_times: &'static str,
    num_samples: usize,
    num_observations: usize,
    coordinates: [&'static str; 5],
    p0: Fixed,
}

#[derive(Serialize)]
struct Sub {
    name: &'static str,
    snapshots: &'static str,
    rows: usize,
    cols: usize,
}

#[derive(Serialize)]
struct Summary {
    num_samples: usize,
    num_observations: usize,
    t_final: Fixed,
    dt: Fixed,
    stride: usize,
    manifest: &'static str,
}

pub fn run(config: &Path, out: &Path, seed: u64) -> Result<bool> {
    let scenario = Scenario::load(config)?;
    let ce = scenario.simulate()?;
    let times = scenario.observation_times()?;
    let (t_obs, n) = ce.sub1().data().shape();

    let mut outputs = Vec::new();
    emit(out, "solid.csv", ce.sub1().data(), &mut outputs)?;
    emit(out, "gas.csv", ce.sub2().data(), &mut outputs)?;
    let coord_dim = ce.measure().coord_dim();
    let params = DMatrix::from_fn(n, coord_dim + 1, |i, c| {
        if c < coord_dim {
            ce.measure().points()[i].coords[c]
        } else {
            ce.measure().weights()[i]
        }
    });
    emit(out, "params.csv", &params, &mut outputs)?;
    emit(out, "times.csv", &DMatrix::from_column_slice(times.len(), 1, &times), &mut outputs)?;

    let manifest = Manifest {
        subsystems: vec![
            Sub { name: "solid", snapshots: "solid.csv", rows: t_obs, cols: n },
            Sub { name: "gas", snapshots: "gas.csv", rows: t_obs, cols: n },
        ],
        params: "params.csv",
        weights_column: true,
        observation_times: "times.csv",
        num_samples: n,
        num_observations: t_obs,
        coordinates: ["m", "k", "S", "c0", "gamma_minus_1"],
        p0: Fixed(scenario.p0),
    };
    io::write_atomic(&out.join("manifest.json"), io::to_json_pretty(&manifest)?.as_bytes())?;
    outputs.push("manifest.json".into());

    // Re-read everything and compare against what was simulated.
    let mut mismatch = 0.0f64;
    for (name, m) in [("solid.csv", ce.sub1().data()), ("gas.csv", ce.sub2().data())] {
        let back = io::read_matrix_csv(&out.join(name))?;
        ensure!(back.shape() == (t_obs, n), "{name} has shape {:?}", back.shape());
        mismatch = mismatch.max((back - m).amax());
    }
    let back = io::read_matrix_csv(&out.join("params.csv"))?;
    ensure!(back.shape() == params.shape(), "params.csv has shape {:?}", back.shape());
    mismatch = mismatch.max((back - &params).amax());
    let audits = vec![Audit::at_most("file_roundtrip", mismatch, 0.0)];

    let summary = Summary {
        num_samples: n,
        num_observations: t_obs,
        t_final: Fixed(scenario.t_final),
        dt: Fixed(scenario.dt),
        stride: scenario.stride,
        manifest: "manifest.json",
    };
    let report = Report::new("simulate", seed, audits, outputs, summary);
    report.write(out)?;
    Ok(report.passed)
}
