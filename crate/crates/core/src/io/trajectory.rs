//! Per-node norm series of one run, stored as CSV.
//!
//! Columns: `t, u_l2, u_l4, grad_y_l2, y_l2, z_l4, residual`. Here `y` and
//! `z` are the two parts of the splitting `u = Y + Zhat`, so `z_l4` is the
//! norm of the shifted convolution `Zhat`, which equals `Z` for zero initial
//! data on a single subinterval. Floats are written in shortest round-trip
//! form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: [&str; 7] = ["t", "u_l2", "u_l4", "grad_y_l2", "y_l2", "z_l4", "residual"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub u_l2: f64,
    pub u_l4: f64,
    pub grad_y_l2: f64,
    pub y_l2: f64,
    pub z_l4: f64,
    pub residual: f64,
}

impl TrajectoryRow {
    fn values(&self) -> [f64; 7] {
        [
            self.t,
            self.u_l2,
            self.u_l4,
            self.grad_y_l2,
            self.y_l2,
            self.z_l4,
            self.residual,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.values().iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses and validates a trajectory: the header must match, every
    /// value must be finite, norms non-negative and times strictly
    /// increasing.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty trajectory file".into()))?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        if names != HEADER {
            return Err(Error::Format(format!(
                "trajectory header {header:?} does not match {:?}",
                HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != HEADER.len() {
                return Err(Error::Format(format!(
                    "row {}: {} columns, expected {}",
                    i + 1,
                    cells.len(),
                    HEADER.len()
                )));
            }
            let mut v = [0.0; 7];
            for (slot, (cell, name)) in v.iter_mut().zip(cells.iter().zip(HEADER)) {
                let x: f64 = cell.trim().parse().map_err(|_| {
                    Error::Format(format!("row {}: {name} = {cell:?} is not a number", i + 1))
                })?;
                if !x.is_finite() {
                    return Err(Error::Format(format!("row {}: {name} is not finite", i + 1)));
                }
                if name != "t" && x < 0.0 {
                    return Err(Error::Format(format!("row {}: norm {name} is negative", i + 1)));
                }
                *slot = x;
            }
            if let Some(prev) = rows.last().map(|r: &TrajectoryRow| r.t) {
                if !(v[0] > prev) {
                    return Err(Error::Format(format!(
                        "row {}: time {} does not increase",
                        i + 1,
                        v[0]
                    )));
                }
            }
            rows.push(TrajectoryRow {
                t: v[0],
                u_l2: v[1],
                u_l4: v[2],
                grad_y_l2: v[3],
                y_l2: v[4],
                z_l4: v[5],
                residual: v[6],
            });
        }
        if rows.len() < 2 {
            return Err(Error::Format("a trajectory needs at least two rows".into()));
        }
        Ok(Self { rows })
    }

    /// Common step of the rows, if they are uniformly spaced to 1e-9 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        let n = self.rows.len();
        if n < 2 {
            return None;
        }
        let dt = (self.rows[n - 1].t - self.rows[0].t) / (n - 1) as f64;
        let ok = self
            .rows
            .windows(2)
            .all(|w| ((w[1].t - w[0].t) - dt).abs() <= 1e-9 * dt.max(f64::MIN_POSITIVE));
        ok.then_some(dt)
    }

    pub fn column(&self, f: impl Fn(&TrajectoryRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        Trajectory {
            rows: (0..5)
                .map(|i| TrajectoryRow {
                    t: i as f64 * 0.1,
                    u_l2: 1.0 / (i as f64 + 1.0),
                    u_l4: 0.3,
                    grad_y_l2: 1e-300,
                    y_l2: 0.0,
                    z_l4: std::f64::consts::PI,
                    residual: 1e-7 * i as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample();
        let csv = t.to_csv();
        assert!(csv.starts_with("t,u_l2,u_l4,grad_y_l2,y_l2,z_l4,residual\n"));
        let back = Trajectory::from_csv(&csv).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), csv);
        assert!((back.uniform_step().unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let csv = sample().to_csv();
        assert!(Trajectory::from_csv("").is_err());
        assert!(Trajectory::from_csv(&csv.replacen("u_l2", "v", 1)).is_err());
        assert!(Trajectory::from_csv(&(csv.clone() + "1,2\n")).is_err());
        assert!(Trajectory::from_csv(&(csv.clone() + "9,1,1,1,1,1,NaN\n")).is_err());
        assert!(Trajectory::from_csv(&(csv.clone() + "9,-1,1,1,1,1,1\n")).is_err());
        assert!(Trajectory::from_csv(&(csv + "0,1,1,1,1,1,1\n")).is_err());
    }
}
