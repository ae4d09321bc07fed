//! Per-run audit record, serialized as schema-versioned JSON.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::verify::audit::{EnergyAudit, GronwallAudit, LemmaSob1Audit};

/// Version tag of the serialized [`NormReport`] layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Relative tolerance of the energy and Lemma audits, in units of their scale.
pub const AUDIT_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub schema: u32,
    pub seed: u64,
    pub c_b: f64,
    pub c_gn: f64,
    pub c1: f64,
    pub c2: f64,
    /// `C'` of the Lipschitz bound and the radius `M = 1 / (6 C')`
    pub c_prime: f64,
    pub ball_radius: f64,
    /// step counts of the accepted subintervals
    pub segment_steps: Vec<usize>,
    /// Picard contraction ratios of every subinterval, in order
    pub contraction_ratios: Vec<f64>,
    pub max_contraction_ratio: f64,
    pub max_picard_iterations: usize,
    /// largest `L^4 L^4` norm of a Picard iterate
    pub max_iterate_norm: f64,
    /// `max_iterate_norm / ball_radius`
    pub max_ball_fraction: f64,
    /// largest `||Y - Gamma(Y)||_{L^4 L^4}` over subintervals
    pub fixed_point_residual: f64,
    /// `max_m ||u(t_m) - (mild right-hand side)(t_m)||_2`
    pub mild_residual: f64,
    /// `||u - u_oracle||_{L^4 L^4} / ||u_oracle||_{L^4 L^4}` against the
    /// IMEX oracle at half the step
    pub oracle_gap: f64,
    pub energy: EnergyAudit,
    pub gronwall: GronwallAudit,
    /// `gronwall.displayed_margin`, the relative margin of the integrated bound
    pub gronwall_margin: f64,
    pub lemma_sob1: LemmaSob1Audit,
    /// `||B(u) - B(u_oracle)||_{L^2 V'}` against the Hoelder bound
    pub lipschitz_lhs: f64,
    pub lipschitz_rhs: f64,
    /// `int_0^T ||Z||_4^4 dt`
    pub z_l4l4_pow4: f64,
    pub u_l4l4: f64,
    /// ensemble statistic, absent for a single path
    pub burkholder_ratio: Option<f64>,
}

impl NormReport {
    pub fn validate(&self) -> Result<()> {
        if self.schema != REPORT_SCHEMA {
            return Err(Error::Format(format!(
                "report schema {} is not supported (expected {REPORT_SCHEMA})",
                self.schema
            )));
        }
        if let Some(name) = first_non_finite(&serde_json::to_value(self)?, "") {
            return Err(Error::Format(format!("report entry {name} is not finite")));
        }
        Ok(())
    }

    /// Names of the violated audit invariants, empty when all hold.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.energy.holds(AUDIT_REL_TOL) {
            out.push(format!(
                "energy inequality: margin {:.3e} below -{AUDIT_REL_TOL:e} x {:.3e}",
                self.energy.margin, self.energy.scale
            ));
        }
        if self.gronwall.displayed_margin < -AUDIT_REL_TOL {
            out.push(format!(
                "integrated Gronwall bound: relative margin {:.3e}",
                self.gronwall.displayed_margin
            ));
        }
        if self.gronwall.v_budget_margin < -AUDIT_REL_TOL {
            out.push(format!(
                "V-norm budget: relative margin {:.3e}",
                self.gronwall.v_budget_margin
            ));
        }
        if !self.lemma_sob1.holds(AUDIT_REL_TOL) {
            out.push(format!(
                "L4 interpolation lemma: margin {:.3e}",
                self.lemma_sob1.margin
            ));
        }
        if self.lipschitz_lhs > self.lipschitz_rhs {
            out.push(format!(
                "Lipschitz bound of B: {:.3e} > {:.3e}",
                self.lipschitz_lhs, self.lipschitz_rhs
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }

    /// Fields of `self` that differ from `golden` by more than
    /// `rel_tol * max(|a|, |b|, 1e-300)`, by dotted path.
    pub fn diff(&self, golden: &NormReport, rel_tol: f64) -> Result<Vec<String>> {
        let mut out = Vec::new();
        diff_values(
            &serde_json::to_value(self)?,
            &serde_json::to_value(golden)?,
            "",
            rel_tol,
            &mut out,
        );
        Ok(out)
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// serde_json writes non-finite floats as `null`; a `null` outside an
/// optional slot therefore marks one.
fn first_non_finite(v: &Value, path: &str) -> Option<String> {
    match v {
        Value::Object(map) => map.iter().find_map(|(k, x)| {
            if x.is_null() && k != "burkholder_ratio" {
                Some(join(path, k))
            } else {
                first_non_finite(x, &join(path, k))
            }
        }),
        Value::Array(xs) => xs.iter().enumerate().find_map(|(i, x)| {
            if x.is_null() {
                Some(join(path, &i.to_string()))
            } else {
                first_non_finite(x, &join(path, &i.to_string()))
            }
        }),
        _ => None,
    }
}

fn diff_values(a: &Value, b: &Value, path: &str, rel_tol: f64, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                match y.get(k) {
                    Some(vb) => diff_values(va, vb, &join(path, k), rel_tol, out),
                    None => out.push(join(path, k)),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(join(path, k));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path} (length {} vs {})", x.len(), y.len()));
                return;
            }
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                diff_values(va, vb, &join(path, &i.to_string()), rel_tol, out);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (p, q) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let scale = p.abs().max(q.abs()).max(1e-300);
            if !((p - q).abs() <= rel_tol * scale) {
                out.push(format!("{path} ({p} vs {q})"));
            }
        }
        _ => {
            if a != b {
                out.push(path.to_string());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> NormReport {
        NormReport {
            schema: REPORT_SCHEMA,
            seed: 7,
            c_b: 0.5,
            c_gn: 0.45,
            c1: 1.0,
            c2: 2.0,
            c_prime: 0.3,
            ball_radius: 1.0 / 1.8,
            segment_steps: vec![10, 6],
            contraction_ratios: vec![0.4, 0.45],
            max_contraction_ratio: 0.45,
            max_picard_iterations: 12,
            max_iterate_norm: 0.2,
            max_ball_fraction: 0.36,
            fixed_point_residual: 1e-10,
            mild_residual: 1e-3,
            oracle_gap: 0.01,
            energy: EnergyAudit {
                margin: 1.0,
                scale: 2.0,
                worst_node: 3,
            },
            gronwall: GronwallAudit {
                displayed_margin: 0.5,
                integrated_margin: 0.6,
                v_budget_margin: 0.7,
                log_max_bound: 3.0,
            },
            gronwall_margin: 0.5,
            lemma_sob1: LemmaSob1Audit {
                margin: 0.1,
                scale: 1.0,
            },
            lipschitz_lhs: 0.1,
            lipschitz_rhs: 0.2,
            z_l4l4_pow4: 3.0,
            u_l4l4: 1.5,
            burkholder_ratio: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let back = NormReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(r, back);
        assert!(r.failures().is_empty());
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let mut r = sample();
        r.c1 = f64::INFINITY;
        assert!(r.validate().is_err());
        let mut r = sample();
        r.contraction_ratios.push(f64::NAN);
        assert!(r.validate().is_err());
        let mut r = sample();
        r.schema = 99;
        assert!(NormReport::from_json(&r.to_json().unwrap()).is_err());
    }

    #[test]
    fn diff_respects_tolerance() {
        let a = sample();
        let mut b = sample();
        b.c1 *= 1.0 + 1e-12;
        assert!(a.diff(&b, 1e-9).unwrap().is_empty());
        b.energy.margin = 1.5;
        let d = a.diff(&b, 1e-9).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d[0].starts_with("energy.margin"));
    }

    #[test]
    fn failures_name_the_invariant() {
        let mut r = sample();
        r.gronwall.v_budget_margin = -0.1;
        let f = r.failures();
        assert_eq!(f.len(), 1);
        assert!(f[0].contains("V-norm budget"));
    }
}
