//! IMEX Euler reference solver: the Stokes part is integrated exactly, the
//! nonlinearity and the compensator drift explicitly. A step containing
//! jumps is split at their event times so each jump is added atomically
//! at the moment it occurs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::nonlinearity::quadratic;
use crate::noise::{JumpNoiseModel, JumpRecord};
use crate::path::{FieldPath, PathGrid};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleScheme {
    /// `u_{m+1} = e^{-dt A}(u_m - dt B(u_m, u_m) - dt m)`
    #[default]
    ImexEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub dt: f64,
    pub scheme: OracleScheme,
}

impl OracleConfig {
    pub fn new(dt: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            scheme: OracleScheme::ImexEuler,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Oracle step half the solver step.
    pub fn for_solver(solver_dt: f64) -> Result<Self> {
        Self::new(0.5 * solver_dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "oracle step {} must be positive",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Oracle path on `[0, horizon]` with step as close to `cfg.dt` as the
/// horizon allows.
pub fn imex_oracle(
    model: &JumpNoiseModel,
    record: &JumpRecord,
    u0: &SpectralField,
    horizon: f64,
    cfg: &OracleConfig,
) -> Result<FieldPath> {
    cfg.validate()?;
    record.validate()?;
    if u0.grid() != model.grid() {
        return Err(Error::GridMismatch {
            left: u0.grid().n(),
            right: model.grid().n(),
        });
    }
    if record.horizon + 1e-12 < horizon {
        return Err(Error::InvalidParameter(format!(
            "jump record covers [0, {}], shorter than the horizon {horizon}",
            record.horizon
        )));
    }
    let time = PathGrid::with_step(horizon, cfg.dt)?;
    let dt = time.dt();
    let k2 = model.grid().k_squared_table();
    let decay: Vec<f64> = k2.iter().map(|&l| (-l * dt).exp()).collect();
    let drift = model.compensator_drift();
    let step = |u: &mut SpectralField, h: f64, decay: &[f64]| {
        let mut rhs = quadratic(u);
        rhs += &drift;
        u.axpy(-h, &rhs);
        u.apply_multiplier_table(decay);
    };
    let jumps: Vec<(f64, f64)> = record
        .times
        .iter()
        .zip(&record.marks)
        .map(|(&t, &z)| (t, z))
        .filter(|&(t, _)| t <= horizon)
        .collect();
    let mut next = 0;
    let mut u = u0.clone();
    while next < jumps.len() && jumps[next].0 <= time.t0 {
        u += &model.profile(jumps[next].1);
        next += 1;
    }
    let mut nodes = Vec::with_capacity(time.nodes());
    nodes.push(u.clone());
    for m in 0..time.steps {
        let end = time.time(m + 1);
        if next < jumps.len() && jumps[next].0 <= end {
            let mut at = time.time(m);
            while next < jumps.len() && jumps[next].0 <= end {
                let (tau, z) = jumps[next];
                let h = tau - at;
                if h > 0.0 {
                    let d: Vec<f64> = k2.iter().map(|&l| (-l * h).exp()).collect();
                    step(&mut u, h, &d);
                }
                u += &model.profile(z);
                at = tau;
                next += 1;
            }
            let h = end - at;
            if h > 0.0 {
                let d: Vec<f64> = k2.iter().map(|&l| (-l * h).exp()).collect();
                step(&mut u, h, &d);
            }
        } else {
            step(&mut u, dt, &decay);
        }
        if !u.is_finite() {
            return Err(Error::BlowUp(end));
        }
        nodes.push(u.clone());
    }
    FieldPath::new(time, nodes)
}

/// `||u - v||_{L^4 L^4} / ||v||_{L^4 L^4}` on the nodes of `u`, where the
/// grid of `v` refines that of `u` by an integer factor.
pub fn relative_l4l4_gap(u: &FieldPath, v: &FieldPath) -> Result<f64> {
    let (tu, tv) = (u.time_grid(), v.time_grid());
    if tv.steps % tu.steps != 0 || !tu.same_as(&PathGrid { steps: tu.steps, ..tv }) {
        return Err(Error::PathMismatch(format!(
            "grid {tv:?} does not refine {tu:?}"
        )));
    }
    let stride = tv.steps / tu.steps;
    let sampled = FieldPath::new(
        tu,
        (0..=tu.steps).map(|m| v.node(m * stride).clone()).collect(),
    )?;
    let diff: Vec<f64> = u
        .nodes()
        .par_iter()
        .zip(sampled.nodes().par_iter())
        .map(|(a, b)| (a - b).l4_norm().powi(4))
        .collect();
    let num = crate::path::l4l4_from_series(&diff, tu.dt());
    let den = sampled.l4l4_norm();
    Ok(if den > 0.0 { num / den } else { num })
}
