//! Mass-spring system coupled to a gas-filled piston.
//!
//! The solid displacement `w` drives a piston of area `S`; the gas behind it
//! follows the simple-wave relation
//! `p = p0 (1 + (gamma - 1)/2 * v/c0)^(2 gamma / (gamma - 1))`, and
//! `m w'' + k w = S (p - p0)`.
//!
//! Integration is fixed-step classical RK4. Parameter sweeps produce a
//! [`CoupledEnsemble`] with the displacement history as subsystem 1 and the
//! pressure history as subsystem 2.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coupled::CoupledEnsemble;
use crate::ensemble::{ParameterPoint, SampledMeasure, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PistonParams {
    pub m: f64,
    pub k: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub c0: f64,
    pub gamma: f64,
    pub p0: f64,
}

impl Default for PistonParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            k: 1.0,
            s: 0.1,
            c0: 10.0,
            gamma: 1.4,
            p0: 1.0,
        }
    }
}

impl PistonParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("m", self.m), ("k", self.k), ("S", self.s), ("c0", self.c0), ("p0", self.p0)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::input(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::input(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but admits `S = 0`, the decoupled
    /// oscillator.
    pub fn validate_allow_decoupled(&self) -> Result<()> {
        if self.s == 0.0 {
            return Self { s: 1.0, ..*self }.validate();
        }
        self.validate()
    }

    /// Coordinates `(m, k, S, c0, gamma - 1)`.
    pub fn coords(&self) -> Vec<f64> {
        vec![self.m, self.k, self.s, self.c0, self.gamma - 1.0]
    }

    fn exponent(&self) -> f64 {
        2.0 * self.gamma / (self.gamma - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PistonState {
    pub w: f64,
    pub v: f64,
}

impl PistonState {
    pub fn new(w: f64, v: f64) -> Self {
        Self { w, v }
    }

    /// `m v^2 / 2 + k w^2 / 2`.
    pub fn energy(&self, p: &PistonParams) -> f64 {
        0.5 * p.m * self.v * self.v + 0.5 * p.k * self.w * self.w
    }
}

fn gas_base(v: f64, p: &PistonParams, time: f64) -> Result<f64> {
    let base = 1.0 + 0.5 * (p.gamma - 1.0) * (v / p.c0);
    if base > 0.0 {
        Ok(base)
    } else {
        Err(Error::GasLaw { base, time })
    }
}

fn pressure_at(s: &PistonState, p: &PistonParams, time: f64) -> Result<f64> {
    Ok(p.p0 * gas_base(s.v, p, time)?.powf(p.exponent()))
}

fn rhs_at(s: &PistonState, p: &PistonParams, time: f64) -> Result<PistonState> {
    let force = p.s * p.p0 / p.m;
    let gas = force * gas_base(s.v, p, time)?.powf(p.exponent()) - force;
    Ok(PistonState {
        w: s.v,
        v: -(p.k / p.m) * s.w + gas,
    })
}

/// Gas pressure on the piston.
pub fn pressure(s: &PistonState, p: &PistonParams) -> Result<f64> {
    pressure_at(s, p, 0.0)
}

/// Time derivative `(w', v')`.
pub fn rhs(s: &PistonState, p: &PistonParams) -> Result<PistonState> {
    rhs_at(s, p, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PistonState>,
    pub pressures: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> PistonState {
        *self.states.last().expect("trajectory holds the initial state")
    }
}

/// Number of RK4 steps used for horizon `t_final` and step `dt`. The last
/// step is shortened when `dt` does not divide `t_final`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(format!("dt must be positive, got {dt}")));
    }
    if !(t_final.is_finite() && t_final >= dt) {
        return Err(Error::input(format!("T = {t_final} must be at least dt = {dt}")));
    }
    let ratio = t_final / dt;
    let nearest = ratio.round();
    Ok(if (ratio - nearest).abs() <= 1e-9 * ratio {
        nearest as usize
    } else {
        ratio.ceil() as usize
    })
}

fn rk4_step(s: &PistonState, p: &PistonParams, t: f64, h: f64) -> Result<PistonState> {
    let add = |a: &PistonState, b: &PistonState, c: f64| PistonState {
        w: a.w + c * b.w,
        v: a.v + c * b.v,
    };
    let k1 = rhs_at(s, p, t)?;
    let k2 = rhs_at(&add(s, &k1, 0.5 * h), p, t + 0.5 * h)?;
    let k3 = rhs_at(&add(s, &k2, 0.5 * h), p, t + 0.5 * h)?;
    let k4 = rhs_at(&add(s, &k3, h), p, t + h)?;
    Ok(PistonState {
        w: s.w + h / 6.0 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
        v: s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
    })
}

/// Integrate from `s0` over `[0, t_final]`, storing every step.
pub fn integrate(p: &PistonParams, s0: PistonState, t_final: f64, dt: f64) -> Result<Trajectory> {
    p.validate_allow_decoupled()?;
    if !(s0.w.is_finite() && s0.v.is_finite()) {
        return Err(Error::input("initial state must be finite"));
    }
    let steps = step_count(t_final, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut pressures = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(s0);
    pressures.push(pressure_at(&s0, p, 0.0)?);
    let mut s = s0;
    for i in 0..steps {
        let t = i as f64 * dt;
        let t_next = if i + 1 == steps { t_final } else { (i + 1) as f64 * dt };
        s = rk4_step(&s, p, t, t_next - t)?;
        if !(s.w.is_finite() && s.v.is_finite()) {
            return Err(Error::input(format!("integration diverged at t = {t_next}")));
        }
        times.push(t_next);
        states.push(s);
        pressures.push(pressure_at(&s, p, t_next)?);
    }
    Ok(Trajectory {
        times,
        states,
        pressures,
    })
}

/// Integrate every parameter point and collect the displacement (subsystem
/// 1) and pressure (subsystem 2) at the given step indices. Samples get
/// uniform weights `1/N`; grid points are integrated concurrently but the
/// output is ordered by grid index.
pub fn sample_snapshots(
    grid: &[PistonParams],
    s0: PistonState,
    t_final: f64,
    dt: f64,
    observation_steps: &[usize],
) -> Result<CoupledEnsemble> {
    if grid.is_empty() {
        return Err(Error::input("parameter grid is empty"));
    }
    if observation_steps.is_empty() {
        return Err(Error::input("no observation times"));
    }
    let steps = step_count(t_final, dt)?;
    if let Some(&bad) = observation_steps.iter().find(|&&i| i > steps) {
        return Err(Error::input(format!("observation step {bad} is past the last step {steps}")));
    }

    let run = |p: &PistonParams| -> Result<(Vec<f64>, Vec<f64>)> {
        let traj = integrate(p, s0, t_final, dt)?;
        Ok((
            observation_steps.iter().map(|&i| traj.states[i].w).collect(),
            observation_steps.iter().map(|&i| traj.pressures[i]).collect(),
        ))
    };
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(grid.len());
    let chunk = grid.len().div_ceil(threads);
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("integration thread panicked"))
            .collect()
    });

    let (t_obs, n) = (observation_steps.len(), grid.len());
    let mut a1 = DMatrix::zeros(t_obs, n);
    let mut a2 = DMatrix::zeros(t_obs, n);
    for (j, res) in results.into_iter().enumerate() {
        let (w, pr) = res.map_err(|e| Error::at_sample(j, e))?;
        a1.column_mut(j).copy_from_slice(&w);
        a2.column_mut(j).copy_from_slice(&pr);
    }
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, p)| ParameterPoint::labelled(p.coords(), format!("mu{i}")))
        .collect();
    let measure = SampledMeasure::uniform(points)?;
    CoupledEnsemble::new(
        SnapshotEnsemble::new(a1, measure.clone())?,
        SnapshotEnsemble::new(a2, measure)?,
    )
}

/// Overrides for one grid point; unset fields fall back to the base
/// parameters. `gamma_minus_1` is an alternative to `gamma`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_minus_1: Option<f64>,
}

impl ParamSpec {
    fn apply(&self, base: PistonParams, path: &str) -> Result<PistonParams> {
        if self.gamma.is_some() && self.gamma_minus_1.is_some() {
            return Err(Error::input(format!("{path}: give either gamma or gamma_minus_1, not both")));
        }
        Ok(PistonParams {
            m: self.m.unwrap_or(base.m),
            k: self.k.unwrap_or(base.k),
            s: self.s.unwrap_or(base.s),
            c0: self.c0.unwrap_or(base.c0),
            gamma: self.gamma.or(self.gamma_minus_1.map(|g| g + 1.0)).unwrap_or(base.gamma),
            p0: base.p0,
        })
    }
}

/// One swept coordinate: `count` evenly spaced values in `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + i as f64 * h })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSpec {
    /// Explicit list of points.
    Points(Vec<ParamSpec>),
    /// Tensor product of ranges, row-major (the first range varies slowest).
    Ranges(Vec<RangeSpec>),
}

fn default_base() -> ParamSpec {
    ParamSpec::default()
}

fn default_p0() -> f64 {
    1.0
}

fn default_s0() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_t() -> f64 {
    20.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    100
}

/// Simulation scenario as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_base")]
    pub base: ParamSpec,
    #[serde(default = "default_p0")]
    pub p0: f64,
    pub grid: GridSpec,
    #[serde(default = "default_s0")]
    pub s0: [f64; 2],
    #[serde(rename = "T", default = "default_t")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Observe every `stride`-th step, starting at `t = 0`.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            base: default_base(),
            p0: default_p0(),
            grid: GridSpec::Points(vec![ParamSpec::default()]),
            s0: default_s0(),
            t_final: default_t(),
            dt: default_dt(),
            stride: default_stride(),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn base_params(&self) -> Result<PistonParams> {
        let defaults = PistonParams {
            p0: self.p0,
            ..PistonParams::default()
        };
        self.base.apply(defaults, "base")
    }

    /// Expand the grid and validate every point; errors name the offending
    /// field.
    pub fn params(&self) -> Result<Vec<PistonParams>> {
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return Err(Error::input(format!("p0: must be positive, got {}", self.p0)));
        }
        let base = self.base_params()?;
        let grid = match &self.grid {
            GridSpec::Points(points) => points
                .iter()
                .enumerate()
                .map(|(i, spec)| spec.apply(base, &format!("grid.points[{i}]")))
                .collect::<Result<Vec<_>>>()?,
            GridSpec::Ranges(ranges) => {
                let mut grid = vec![base];
                for (r, range) in ranges.iter().enumerate() {
                    let path = format!("grid.ranges[{r}]");
                    if range.count == 0 {
                        return Err(Error::input(format!("{path}.count: must be at least 1")));
                    }
                    if !(range.min.is_finite() && range.max.is_finite()) {
                        return Err(Error::input(format!("{path}: bounds must be finite")));
                    }
                    let mut next = Vec::with_capacity(grid.len() * range.count);
                    for p in &grid {
                        for x in range.values() {
                            next.push(set_coord(*p, &range.name, x, &path)?);
                        }
                    }
                    grid = next;
                }
                grid
            }
        };
        if grid.is_empty() {
            return Err(Error::input("grid: no parameter points"));
        }
        for (i, p) in grid.iter().enumerate() {
            p.validate_allow_decoupled()
                .map_err(|e| Error::input(format!("grid point {i}: {e}")))?;
        }
        Ok(grid)
    }

    pub fn initial_state(&self) -> PistonState {
        PistonState::new(self.s0[0], self.s0[1])
    }

    pub fn observation_steps(&self) -> Result<Vec<usize>> {
        if self.stride == 0 {
            return Err(Error::input("stride: must be at least 1"));
        }
        let steps = step_count(self.t_final, self.dt)
            .map_err(|e| Error::input(format!("T/dt: {e}")))?;
        Ok((0..=steps).step_by(self.stride).collect())
    }

    pub fn observation_times(&self) -> Result<Vec<f64>> {
        let steps = step_count(self.t_final, self.dt)?;
        Ok(self
            .observation_steps()?
            .into_iter()
            .map(|i| if i == steps { self.t_final } else { i as f64 * self.dt })
            .collect())
    }

    pub fn simulate(&self) -> Result<CoupledEnsemble> {
        let s0 = self.initial_state();
        if !(s0.w.is_finite() && s0.v.is_finite()) {
            return Err(Error::input("s0: must be finite"));
        }
        sample_snapshots(&self.params()?, s0, self.t_final, self.dt, &self.observation_steps()?)
    }
}

fn set_coord(p: PistonParams, name: &str, x: f64, path: &str) -> Result<PistonParams> {
    let mut p = p;
    match name {
        "m" => p.m = x,
        "k" => p.k = x,
        "S" => p.s = x,
        "c0" => p.c0 = x,
        "gamma" => p.gamma = x,
        "gamma_minus_1" => p.gamma = x + 1.0,
        other => {
            return Err(Error::input(format!(
                "{path}.name: unknown coordinate {other:?} (expected m, k, S, c0, gamma or gamma_minus_1)"
            )))
        }
    }
    Ok(p)
}
