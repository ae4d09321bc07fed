//! Pathwise checks of the energy estimate for `Y = u - Zhat`, its Gronwall
//! integrated forms, and the functional inequalities behind them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::SpectralField;
use crate::path::FieldPath;
use crate::verify::calibrate::{embedding_ratios, Constants, MARGIN};

/// Multiplier of the discretization slack in [`energy_audit`].
pub const SLACK_KAPPA: f64 = 10.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    /// `min_m (rhs_m + slack_m - lhs_m)`
    pub margin: f64,
    /// `max_m (|lhs_m| + rhs_m)`, the size the margin is judged against
    pub scale: f64,
    /// node of the smallest margin
    pub worst_node: usize,
}

impl EnergyAudit {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.margin >= -rel_tol * self.scale
    }
}

/// Forward-difference form of
/// `1/2 d/dt ||Y||^2 + ||Y||_V^2 <= 1/2 C1 ||Y||^2 ||Zhat||_4^4 + 1/2 C2 ||Zhat||_4^2`
/// at every node `m < M`. The slack is `kappa dt L_m`, where `L_m` is the
/// local Lipschitz estimate `max(|q_{m+1} - q_m|, |q_m - q_{m-1}|) / dt` of
/// the difference quotient `q` of `1/2 ||Y||^2`.
pub fn energy_audit(y: &FieldPath, zhat: &FieldPath, c1: f64, c2: f64) -> Result<EnergyAudit> {
    y.check_compatible(zhat)?;
    let s = NormSeries::of(y, zhat);
    Ok(energy_audit_series(&s, y.time_grid().dt(), c1, c2))
}

/// Per-node norms entering the energy and Gronwall audits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormSeries {
    /// `||Y||_2^2`
    pub h2: Vec<f64>,
    /// `||grad Y||_2^2`
    pub v2: Vec<f64>,
    /// `||Zhat||_4`
    pub z4: Vec<f64>,
}

impl NormSeries {
    pub fn of(y: &FieldPath, zhat: &FieldPath) -> Self {
        Self {
            h2: y.nodes().iter().map(|f| f.l2_norm().powi(2)).collect(),
            v2: y.nodes().iter().map(|f| f.grad_l2_norm().powi(2)).collect(),
            z4: zhat.nodes().par_iter().map(SpectralField::l4_norm).collect(),
        }
    }
}

/// [`energy_audit`] on precomputed norms of a uniform grid with step `dt`.
pub fn energy_audit_series(s: &NormSeries, dt: f64, c1: f64, c2: f64) -> EnergyAudit {
    let (h2, v2, z4) = (&s.h2, &s.v2, &s.z4);
    let steps = h2.len().saturating_sub(1);
    let q: Vec<f64> = (0..steps).map(|m| (h2[m + 1] - h2[m]) / (2.0 * dt)).collect();
    let mut out = EnergyAudit {
        margin: f64::INFINITY,
        ..Default::default()
    };
    for m in 0..steps {
        let lhs = q[m] + v2[m];
        let rhs = 0.5 * c1 * h2[m] * z4[m].powi(4) + 0.5 * c2 * z4[m].powi(2);
        let mut jump: f64 = 0.0;
        if m + 1 < steps {
            jump = jump.max((q[m + 1] - q[m]).abs());
        }
        if m > 0 {
            jump = jump.max((q[m] - q[m - 1]).abs());
        }
        let slack = SLACK_KAPPA * jump;
        let margin = rhs + slack - lhs;
        if margin < out.margin {
            out.margin = margin;
            out.worst_node = m;
        }
        out.scale = out.scale.max(lhs.abs() + rhs);
    }
    if steps == 0 {
        out.margin = 0.0;
    }
    out
}

/// `(b - a) / max(a, b)` with `0 / 0 = 0`, in `[-1, 1]`.
fn relative_margin(bound: f64, value: f64) -> f64 {
    let top = bound.max(value);
    if top > 0.0 {
        (bound - value) / top
    } else {
        0.0
    }
}

/// `(b - a) / max(a, b)` for `b = exp(log_bound)` given in log form, so
/// that bounds beyond the floating-point range still compare.
fn relative_margin_log(log_bound: f64, value: f64) -> f64 {
    if value <= 0.0 {
        return if log_bound == f64::NEG_INFINITY { 0.0 } else { 1.0 };
    }
    let d = log_bound - value.ln();
    if d >= 0.0 {
        -(-d).exp_m1()
    } else {
        d.exp_m1()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GronwallAudit {
    /// `min_t` relative margin of
    /// `||Y(t)||^2 <= C2 int_0^t e^{C1 int_s^t ||Zhat||_4^4} ||Zhat(s)||_4^4 ds`,
    /// the integrated bound as displayed
    pub displayed_margin: f64,
    /// same with source `||Zhat(s)||_4^2`, the integral of the differential
    /// inequality
    pub integrated_margin: f64,
    /// relative margin of
    /// `int ||Y||_V^2 <= C1 sup ||Y||^2 int ||Zhat||_4^4 + C2 int ||Zhat||_4^2`
    pub v_budget_margin: f64,
    /// `log` of the largest displayed right-hand side
    pub log_max_bound: f64,
}

impl GronwallAudit {
    pub fn holds(&self, tol: f64) -> bool {
        self.displayed_margin >= -tol && self.v_budget_margin >= -tol
    }
}

/// Log of `I_m = sum_{j < m} dt e^{C1 sum_{j <= i < m} dt a_i} s_j`, by
/// `I_{m+1} = e^{C1 dt a_m} (I_m + dt s_m)`.
fn log_gronwall_series(a: &[f64], s: &[f64], c1: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    let mut log_i = f64::NEG_INFINITY;
    out.push(log_i);
    for m in 0..a.len().saturating_sub(1) {
        let add = (dt * s[m]).ln();
        let hi = log_i.max(add);
        let sum = if hi == f64::NEG_INFINITY {
            hi
        } else {
            hi + ((log_i - hi).exp() + (add - hi).exp()).ln()
        };
        log_i = sum + c1 * dt * a[m];
        out.push(log_i);
    }
    out
}

/// Integrated forms of the energy estimate. Margins are relative,
/// `(bound - value) / max(bound, value)`, so they stay finite when the
/// exponential factor overflows.
pub fn gronwall_audit(y: &FieldPath, zhat: &FieldPath, c1: f64, c2: f64) -> Result<GronwallAudit> {
    y.check_compatible(zhat)?;
    let s = NormSeries::of(y, zhat);
    Ok(gronwall_audit_series(&s, y.time_grid().dt(), c1, c2))
}

/// [`gronwall_audit`] on precomputed norms of a uniform grid with step `dt`.
pub fn gronwall_audit_series(s: &NormSeries, dt: f64, c1: f64, c2: f64) -> GronwallAudit {
    let h2 = &s.h2;
    let a: Vec<f64> = s.z4.iter().map(|z| z.powi(4)).collect();
    let s2: Vec<f64> = s.z4.iter().map(|z| z * z).collect();
    let log_c2 = c2.ln();
    let displayed = log_gronwall_series(&a, &a, c1, dt);
    let integrated = log_gronwall_series(&a, &s2, c1, dt);
    let mut out = GronwallAudit {
        displayed_margin: f64::INFINITY,
        integrated_margin: f64::INFINITY,
        v_budget_margin: 0.0,
        log_max_bound: f64::NEG_INFINITY,
    };
    for m in 0..h2.len() {
        out.displayed_margin = out
            .displayed_margin
            .min(relative_margin_log(log_c2 + displayed[m], h2[m]));
        out.integrated_margin = out
            .integrated_margin
            .min(relative_margin_log(log_c2 + integrated[m], h2[m]));
        out.log_max_bound = out.log_max_bound.max(log_c2 + displayed[m]);
    }
    let steps = h2.len().saturating_sub(1);
    let sup_h = h2.iter().copied().fold(0.0, f64::max);
    let int_v = dt * s.v2[..steps].iter().sum::<f64>();
    let int_a = dt * a[..steps].iter().sum::<f64>();
    let int_s2 = dt * s2[..steps].iter().sum::<f64>();
    out.v_budget_margin = relative_margin(c1 * sup_h * int_a + c2 * int_s2, int_v);
    if out.log_max_bound == f64::NEG_INFINITY {
        out.log_max_bound = f64::MIN;
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAudit {
    /// `max ||v||_4 / ||A^{1/4} v||_2`
    pub embedding: f64,
    /// `max ||A^{1/4} v||_2 / (||grad v||_2^{1/2} ||v||_2^{1/2})`
    pub interpolation: f64,
    pub samples: usize,
}

/// Largest embedding and interpolation ratios over `samples`.
pub fn sobolev_embedding_audit(samples: &[SpectralField]) -> EmbeddingAudit {
    let (e, p) = samples
        .par_iter()
        .map(embedding_ratios)
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    EmbeddingAudit {
        embedding: e,
        interpolation: p,
        samples: samples.len(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaSob1Audit {
    /// `C (||v||^4_{L^inf H} + ||v||^4_{L^2 V}) - int ||v||_4^4`
    pub margin: f64,
    /// the right-hand side
    pub scale: f64,
}

impl LemmaSob1Audit {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.margin >= -rel_tol * self.scale
    }
}

/// `int_0^T ||v||_4^4 <= C (||v||^4_{L^inf H} + ||v||^4_{L^2 V})` with the
/// frozen `C = C_gn^4 / 2` times the audit margin.
pub fn lemma_sob1_audit(v: &FieldPath, constants: &Constants) -> LemmaSob1Audit {
    let lhs = v.l4l4_norm().powi(4);
    let rhs = MARGIN * constants.lemma_sob1() * (v.linf_h_norm().powi(4) + v.l2_v_norm().powi(4));
    LemmaSob1Audit {
        margin: rhs - lhs,
        scale: rhs,
    }
}
