//! Mild solutions by the fixed-point construction.
//!
//! With `Zhat(t) = Z(t) + e^{-tA} u0` the shifted unknown `Y = u - Zhat`
//! solves `Y = Gamma(Y) = Phi_{-B(Y + Zhat)}`, where
//! `Phi_f(t) = int_0^t e^{-(t-s)A} f(s) ds`. On a short interval `[0, T0]`,
//! chosen so that `Zhat` and `Phi_{B(Zhat)}` are small in `L^4(L^4)`, the
//! map `Gamma` contracts the ball of radius `M = 1 / (6 C')` and Picard
//! iteration converges. The solution is continued to `[0, T]` by restarting
//! from `u(T0)` with the initial datum folded into the next `Zhat`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PhysicalField, SpectralField};
use crate::noise::{stochastic_convolution, JumpNoiseModel, JumpRecord};
use crate::nonlinearity::{quadratic, quadratic_from_physical};
use crate::path::{l4l4_from_series, FieldPath, PathGrid};

/// Default Picard stopping tolerance in `L^4(L^4)`.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default Picard iteration cap.
pub const DEFAULT_MAX_ITER: usize = 60;

/// Exponential-integrator multipliers for one step `h`.
struct StepTables {
    decay: Vec<f64>,
    /// `(1 - e^{-h|k|^2}) / |k|^2`
    weight: Vec<f64>,
}

impl StepTables {
    fn new(grid: crate::grid::Grid, h: f64) -> Self {
        let kk = grid.k_squared_table();
        let decay = kk.iter().map(|&l| (-l * h).exp()).collect();
        let weight = kk
            .iter()
            .map(|&l| if l == 0.0 { 0.0 } else { -(-l * h).exp_m1() / l })
            .collect();
        Self { decay, weight }
    }
}

/// `Phi_f` at the nodes, for `f` piecewise constant and equal to its left
/// node value on each step. Exact when `f` is constant in time.
pub fn duhamel(f: &FieldPath) -> FieldPath {
    let time = f.time_grid();
    let grid = f.grid();
    let tables = StepTables::new(grid, time.dt());
    let mut nodes = Vec::with_capacity(time.nodes());
    nodes.push(SpectralField::zeros(grid));
    for fm in &f.nodes()[..time.steps] {
        let prev = nodes.last().expect("nodes start with zero");
        let next = SpectralField::exponential_step(prev, &tables.decay, &tables.weight, fm);
        nodes.push(next);
    }
    FieldPath::new(time, nodes).expect("one node per grid point")
}

/// `-B(v(t_m), v(t_m))` at every node that enters the left-endpoint rule;
/// the final node carries zero.
fn drift_path(v: &FieldPath) -> FieldPath {
    let steps = v.time_grid().steps;
    let mut nodes: Vec<SpectralField> = v.nodes()[..steps]
        .par_iter()
        .map(|x| {
            let mut b = quadratic(x);
            b.scale(-1.0);
            b
        })
        .collect();
    nodes.push(SpectralField::zeros(v.grid()));
    FieldPath::new(v.time_grid(), nodes).expect("one node per grid point")
}

/// `Phi_{-B(v)}`.
pub fn duhamel_of_drift(v: &FieldPath) -> FieldPath {
    duhamel(&drift_path(v))
}

/// `Gamma(Y) = Phi_{-B(Y + Zhat)}`.
pub fn picard_map(y: &FieldPath, zhat: &FieldPath) -> Result<FieldPath> {
    Ok(duhamel_of_drift(&y.add(zhat)?))
}

/// The interval selected by [`choose_t0`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T0Choice {
    pub steps: usize,
    pub time: PathGrid,
    /// `||Zhat||_{L^4(L^4)} + ||Phi_{B(Zhat)}||_{L^4(L^4)}` on the interval
    pub value: f64,
    /// `M / 2`
    pub bound: f64,
    /// the next larger candidate, with its value, when one was tested
    pub rejected: Option<(usize, f64)>,
}

/// Radius `M = 1 / (6 C')` of the contraction ball.
pub fn ball_radius(c_prime: f64) -> f64 {
    1.0 / (6.0 * c_prime)
}

/// Dyadic candidate step counts `m, m/2, m/4, ...` down to 2, largest first.
/// A count leaving a single step at the end is lowered by one so that the
/// remainder can form a grid of its own.
fn dyadic_candidates(steps: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let mut c = steps >> j;
        if c < 2 {
            break;
        }
        if steps - c == 1 {
            c -= 1;
        }
        if c >= 2 && out.last() != Some(&c) {
            out.push(c);
        }
        j += 1;
    }
    if out.last() != Some(&2) && steps >= 2 && steps != 3 {
        out.push(2);
    }
    out
}

/// `Zhat` nodes, produced on demand along the grid.
trait NodeSource {
    fn node(&mut self, i: usize) -> SpectralField;
}

impl NodeSource for &FieldPath {
    fn node(&mut self, i: usize) -> SpectralField {
        FieldPath::node(self, i).clone()
    }
}

/// `Zhat` of a restarted segment, `e^{-(t - t_a)A}(u_a - Z_a) + Z(t)`.
struct RestartSource<'a> {
    z: &'a FieldPath,
    first: usize,
    decay: &'a [f64],
    /// `e^{-(t_i - t_a)A}(u_a - Z_a)` at the last node produced
    free: SpectralField,
    next: usize,
}

impl NodeSource for RestartSource<'_> {
    fn node(&mut self, i: usize) -> SpectralField {
        assert_eq!(i, self.next, "restart nodes are produced in order");
        if i > 0 {
            self.free.apply_multiplier_table(self.decay);
        }
        self.next += 1;
        &self.free + self.z.node(self.first + i)
    }
}

/// `Zhat`, `Phi_{-B(Zhat)}` and their `L^4` series, grown step by step.
struct Prefix {
    tables: StepTables,
    dt: f64,
    zhat: Vec<SpectralField>,
    /// `-B(Zhat)` at each node
    drift: Vec<SpectralField>,
    phi: Vec<SpectralField>,
    z4: Vec<f64>,
    p4: Vec<f64>,
}

impl Prefix {
    fn new(grid: crate::grid::Grid, dt: f64) -> Self {
        Self {
            tables: StepTables::new(grid, dt),
            dt,
            zhat: Vec::new(),
            drift: Vec::new(),
            phi: Vec::new(),
            z4: Vec::new(),
            p4: Vec::new(),
        }
    }

    /// Extends both paths to `steps + 1` nodes.
    fn grow(&mut self, source: &mut impl NodeSource, steps: usize) {
        let old = self.zhat.len();
        if old > steps {
            return;
        }
        let fresh: Vec<SpectralField> = (old..=steps).map(|i| source.node(i)).collect();
        let (drift, z4): (Vec<SpectralField>, Vec<f64>) = fresh
            .par_iter()
            .map(|x| {
                let mut b = quadratic(x);
                b.scale(-1.0);
                (b, x.l4_norm().powi(4))
            })
            .unzip();
        self.zhat.extend(fresh);
        self.drift.extend(drift);
        self.z4.extend(z4);
        let first_new = self.phi.len();
        for i in first_new..=steps {
            let phi = if i == 0 {
                SpectralField::zeros(self.zhat[0].grid())
            } else {
                SpectralField::exponential_step(
                    &self.phi[i - 1],
                    &self.tables.decay,
                    &self.tables.weight,
                    &self.drift[i - 1],
                )
            };
            self.phi.push(phi);
        }
        let p4: Vec<f64> = self.phi[first_new..]
            .par_iter()
            .map(|p| p.l4_norm().powi(4))
            .collect();
        self.p4.extend(p4);
    }

    fn value(&self, steps: usize) -> f64 {
        l4l4_from_series(&self.z4[..=steps], self.dt) + l4l4_from_series(&self.p4[..=steps], self.dt)
    }
}

/// Largest dyadic prefix of `full` on which
/// `||Zhat|| + ||Phi_{B(Zhat)}|| <= M / 2` in `L^4(L^4)`, together with
/// `Zhat` and `Phi_{-B(Zhat)}` there; the latter is the first Picard
/// iterate. Both norms grow with the interval, so candidates are tried from
/// the shortest up and the paths are only built as far as needed.
fn select_interval(
    full: PathGrid,
    grid: crate::grid::Grid,
    mut source: impl NodeSource,
    c_prime: f64,
) -> Result<(T0Choice, FieldPath, FieldPath)> {
    if !(c_prime > 0.0 && c_prime.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz constant C' = {c_prime} must be positive"
        )));
    }
    let bound = 0.5 * ball_radius(c_prime);
    let mut prefix = Prefix::new(grid, full.dt());
    let mut accepted: Option<(usize, f64)> = None;
    let mut rejected = None;
    for c in dyadic_candidates(full.steps).into_iter().rev() {
        prefix.grow(&mut source, c);
        let value = prefix.value(c);
        if value <= bound {
            accepted = Some((c, value));
        } else {
            rejected = Some((c, value));
            break;
        }
    }
    let Some((steps, value)) = accepted else {
        let (_, value) = rejected.expect("at least one candidate");
        return Err(Error::StepTooCoarse {
            start: full.t0,
            value,
            bound,
        });
    };
    let time = full.window(0, steps)?;
    prefix.zhat.truncate(steps + 1);
    prefix.phi.truncate(steps + 1);
    let choice = T0Choice {
        steps,
        time,
        value,
        bound,
        rejected,
    };
    Ok((
        choice,
        FieldPath::new(time, prefix.zhat)?,
        FieldPath::new(time, prefix.phi)?,
    ))
}

/// Largest dyadic prefix of `full` on which Picard iteration from
/// `Phi_{-B(Zhat)}` converges with all ratios at most [`RATIO_CAP`]. By
/// causality of `Gamma`, the first iterate on a shorter prefix is the prefix
/// of the first iterate on a longer one, so it is computed once.
fn contraction_interval(
    full: PathGrid,
    mut source: impl NodeSource,
    settings: &PicardSettings,
    segment: usize,
) -> Result<(T0Choice, FieldPath, PicardOutcome)> {
    let nodes = (0..=full.steps).map(|i| source.node(i)).collect();
    let zhat_full = FieldPath::new(full, nodes)?;
    let start_full = duhamel_of_drift(&zhat_full);
    let z4 = zhat_full.l4_pow4_series();
    let p4 = start_full.l4_pow4_series();
    let dt = full.dt();
    let bound = 0.5 * ball_radius(settings.c_prime);
    let mut rejected = None;
    let mut last_err = None;
    for c in dyadic_candidates(full.steps) {
        let zhat = zhat_full.prefix(c)?;
        let start = start_full.prefix(c)?;
        let value = l4l4_from_series(&z4[..=c], dt) + l4l4_from_series(&p4[..=c], dt);
        match picard_iterate(&zhat, start, settings, segment, RATIO_CAP) {
            Ok(outcome) => {
                let choice = T0Choice {
                    steps: c,
                    time: full.window(0, c)?,
                    value,
                    bound,
                    rejected,
                };
                return Ok((choice, zhat, outcome));
            }
            Err(e @ (Error::Divergence { .. } | Error::NonConvergence { .. })) => {
                rejected = Some((c, value));
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one candidate"))
}

/// Largest dyadic prefix `[t0, t0 + T0]` of the grid of `zhat` on which
/// `||Zhat||_{L^4(L^4)} + ||Phi_{B(Zhat)}||_{L^4(L^4)} <= M / 2`.
pub fn choose_t0(zhat: &FieldPath, c_prime: f64) -> Result<T0Choice> {
    select_interval(zhat.time_grid(), zhat.grid(), zhat, c_prime).map(|(c, _, _)| c)
}

/// Largest contraction ratio accepted on a subinterval, `0.5 (1 + 0.2)`.
pub const RATIO_CAP: f64 = 0.6;

/// How subintervals of a continued solve are selected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubintervalPolicy {
    /// Largest dyadic interval with
    /// `||Zhat|| + ||Phi_{B(Zhat)}|| <= M / 2` for the frozen `C'`.
    Theory,
    /// Largest dyadic interval on which Picard iteration converges with every
    /// measured ratio at most [`RATIO_CAP`].
    #[default]
    Contraction,
}

impl std::str::FromStr for SubintervalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(Self::Theory),
            "contraction" => Ok(Self::Contraction),
            other => Err(Error::InvalidParameter(format!(
                "unknown subinterval policy {other:?} (expected theory or contraction)"
            ))),
        }
    }
}

impl std::fmt::Display for SubintervalPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Theory => "theory",
            Self::Contraction => "contraction",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// frozen constant `C'` of the Lipschitz estimate for `Gamma`
    pub c_prime: f64,
    pub policy: SubintervalPolicy,
}

impl PicardSettings {
    pub fn new(c_prime: f64) -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            c_prime,
            policy: SubintervalPolicy::default(),
        }
    }

    pub fn with_policy(self, policy: SubintervalPolicy) -> Self {
        Self { policy, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !(self.c_prime > 0.0 && self.c_prime.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant C' = {} must be positive",
                self.c_prime
            )));
        }
        Ok(())
    }
}

/// Diagnostics of one Picard solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PicardStats {
    pub iterations: usize,
    /// `||Y^(k) - Y^(k-1)||` for `k = 1, 2, ...`
    pub increments: Vec<f64>,
    /// ratios of consecutive increments
    pub ratios: Vec<f64>,
    /// `||Y^(k)||` for `k = 0, 1, ...`
    pub iterate_norms: Vec<f64>,
    /// `||Y - Gamma(Y)||` of the returned iterate
    pub residual: f64,
}

impl PicardStats {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_iterate_norm(&self) -> f64 {
        self.iterate_norms.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardOutcome {
    pub y: FieldPath,
    pub stats: PicardStats,
}

/// Iterates `Y^(k) = Gamma(Y^(k-1))` from `Y^(0) = Gamma(0)` until the
/// increment drops below `tol`.
pub fn picard_solve(zhat: &FieldPath, settings: &PicardSettings) -> Result<PicardOutcome> {
    settings.validate()?;
    let start = duhamel_of_drift(zhat);
    picard_iterate(zhat, start, settings, 0, 1.0)
}

/// Picard iteration from an arbitrary first iterate.
pub fn picard_solve_from(
    zhat: &FieldPath,
    start: FieldPath,
    settings: &PicardSettings,
) -> Result<PicardOutcome> {
    settings.validate()?;
    zhat.check_compatible(&start)?;
    picard_iterate(zhat, start, settings, 0, 1.0)
}

/// `int |a - b|^4 dx` by the grid quadrature; `b = None` stands for zero.
fn l4_pow4_between(a: &PhysicalField, b: Option<&PhysicalField>) -> f64 {
    let w = a.grid().cell_area();
    let sum: f64 = match b {
        None => a
            .v1
            .iter()
            .zip(&a.v2)
            .map(|(x, y)| (x * x + y * y).powi(2))
            .sum(),
        Some(b) => a
            .v1
            .iter()
            .zip(&a.v2)
            .zip(b.v1.iter().zip(&b.v2))
            .map(|((x, y), (p, q))| {
                let (d1, d2) = (x - p, y - q);
                (d1 * d1 + d2 * d2).powi(2)
            })
            .sum(),
    };
    w * sum
}

/// `Gamma(Y)` from the physical values of `Y` and `Zhat`.
fn picard_map_physical(y: &[PhysicalField], zhat: &[PhysicalField], time: PathGrid) -> FieldPath {
    let grid = zhat[0].grid();
    let steps = time.steps;
    let mut drift: Vec<SpectralField> = y[..steps]
        .par_iter()
        .zip(&zhat[..steps])
        .map(|(y, z)| {
            let u1: Vec<f64> = y.v1.iter().zip(&z.v1).map(|(a, b)| a + b).collect();
            let u2: Vec<f64> = y.v2.iter().zip(&z.v2).map(|(a, b)| a + b).collect();
            let mut b = quadratic_from_physical(grid, &u1, &u2);
            b.scale(-1.0);
            b
        })
        .collect();
    drift.push(SpectralField::zeros(grid));
    duhamel(&FieldPath::new(time, drift).expect("one node per grid point"))
}

fn physical_nodes(f: &FieldPath) -> Vec<PhysicalField> {
    f.nodes().par_iter().map(SpectralField::to_physical).collect()
}

/// Picard loop; a ratio above `ratio_cap` while the increment is still
/// above `tol` aborts with [`Error::Divergence`]. Physical values of `Zhat`
/// and of the current iterate are kept, so each step costs one transform
/// each way per node.
fn picard_iterate(
    zhat: &FieldPath,
    start: FieldPath,
    settings: &PicardSettings,
    segment: usize,
    ratio_cap: f64,
) -> Result<PicardOutcome> {
    let time = zhat.time_grid();
    let dt = time.dt();
    let zphys = physical_nodes(zhat);
    let mut stats = PicardStats::default();
    let mut y = start;
    let mut yphys = physical_nodes(&y);
    let norm = |a: &[PhysicalField], b: Option<&[PhysicalField]>| {
        let series: Vec<f64> = a
            .par_iter()
            .enumerate()
            .map(|(i, x)| l4_pow4_between(x, b.map(|b| &b[i])))
            .collect();
        l4l4_from_series(&series, dt)
    };
    stats.iterate_norms.push(norm(&yphys, None));
    loop {
        if stats.iterations >= settings.max_iter {
            return Err(Error::NonConvergence {
                segment,
                iterations: stats.iterations,
                ratios: stats.ratios,
            });
        }
        let next = picard_map_physical(&yphys, &zphys, time);
        let next_phys = physical_nodes(&next);
        let inc = norm(&next_phys, Some(&yphys));
        stats.iterations += 1;
        if let Some(&prev) = stats.increments.last() {
            if prev > 0.0 {
                let ratio = inc / prev;
                stats.ratios.push(ratio);
                if ratio > ratio_cap && inc > settings.tol {
                    return Err(Error::Divergence {
                        segment,
                        ratio,
                        ratios: stats.ratios,
                    });
                }
            }
        }
        stats.increments.push(inc);
        stats.iterate_norms.push(norm(&next_phys, None));
        if !next.is_finite() {
            return Err(Error::BlowUp(time.t0));
        }
        y = next;
        yphys = next_phys;
        if inc <= settings.tol {
            break;
        }
    }
    let image = physical_nodes(&picard_map_physical(&yphys, &zphys, time));
    stats.residual = norm(&image, Some(&yphys));
    Ok(PicardOutcome { y, stats })
}

/// One accepted subinterval of a continued solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// index of the first node in the global grid
    pub first: usize,
    pub choice: T0Choice,
    pub picard: PicardStats,
    /// `Y` and `Zhat` of this segment at its closing node
    pub closing: (SpectralField, SpectralField),
}

impl Segment {
    pub fn steps(&self) -> usize {
        self.choice.steps
    }

    pub fn last(&self) -> usize {
        self.first + self.choice.steps
    }
}

/// A mild solution on a uniform grid, assembled from restarted segments.
///
/// Each node belongs to the segment that starts at it or contains it in its
/// interior, and `y`, `zhat` hold that segment's values, so `u = y + zhat`
/// at every node. The final node belongs to the last segment.
#[derive(Clone, Debug, PartialEq)]
pub struct MildSolution {
    pub time: PathGrid,
    pub u0: SpectralField,
    pub y: FieldPath,
    pub zhat: FieldPath,
    pub u: FieldPath,
    pub segments: Vec<Segment>,
    pub settings: PicardSettings,
}

impl MildSolution {
    /// `(Y, Zhat)` of one segment on its own grid.
    pub fn segment_paths(&self, index: usize) -> Result<(FieldPath, FieldPath)> {
        let seg = &self.segments[index];
        let range = seg.first..=seg.last();
        let mut y = self.y.nodes()[range.clone()].to_vec();
        let mut zh = self.zhat.nodes()[range].to_vec();
        let steps = seg.steps();
        y[steps] = seg.closing.0.clone();
        zh[steps] = seg.closing.1.clone();
        Ok((
            FieldPath::new(seg.choice.time, y)?,
            FieldPath::new(seg.choice.time, zh)?,
        ))
    }

    pub fn max_picard_ratio(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.picard.max_ratio())
            .fold(0.0, f64::max)
    }

    pub fn max_picard_iterations(&self) -> usize {
        self.segments
            .iter()
            .map(|s| s.picard.iterations)
            .max()
            .unwrap_or(0)
    }

    pub fn max_fixed_point_residual(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.picard.residual)
            .fold(0.0, f64::max)
    }

    /// Largest `||Y^(k)|| / M` over all iterates of all segments.
    pub fn max_ball_fraction(&self) -> f64 {
        let m = ball_radius(self.settings.c_prime);
        self.segments
            .iter()
            .map(|s| s.picard.max_iterate_norm() / m)
            .fold(0.0, f64::max)
    }

    /// `max_m ||u(t_m) - Y(t_m) - Zhat(t_m)||_{L^2}`, zero up to rounding.
    pub fn decomposition_defect(&self) -> f64 {
        self.u
            .nodes()
            .iter()
            .zip(self.y.nodes().iter().zip(self.zhat.nodes()))
            .map(|(u, (y, z))| (&(u - y) - z).l2_norm())
            .fold(0.0, f64::max)
    }
}

fn check_initial_datum(u0: &SpectralField) -> Result<()> {
    if !u0.is_mean_zero() {
        return Err(Error::NonzeroMean(0.0));
    }
    let scale = u0.max_abs_coeff().max(f64::MIN_POSITIVE);
    if u0.divergence_defect() > 1e-12 * scale || !u0.is_finite() {
        return Err(Error::InvalidParameter(
            "initial velocity must be finite and divergence-free".into(),
        ));
    }
    Ok(())
}

/// Solves on `time` given the stochastic convolution `z` on the same grid.
pub fn continue_with_convolution(
    z: &FieldPath,
    u0: &SpectralField,
    settings: &PicardSettings,
) -> Result<MildSolution> {
    settings.validate()?;
    check_initial_datum(u0)?;
    let time = z.time_grid();
    let grid = z.grid();
    if u0.grid() != grid {
        return Err(Error::GridMismatch {
            left: u0.grid().n(),
            right: grid.n(),
        });
    }
    let tables = StepTables::new(grid, time.dt());
    let mut y_nodes: Vec<SpectralField> = Vec::with_capacity(time.nodes());
    let mut zh_nodes: Vec<SpectralField> = Vec::with_capacity(time.nodes());
    let mut segments = Vec::new();
    // u at the start of the current segment
    let mut u_start = u0 + z.node(0);
    let mut first = 0;
    while first < time.steps {
        let remaining = time.window(first, time.steps - first)?;
        let source = RestartSource {
            z,
            first,
            decay: &tables.decay,
            free: &u_start - z.node(first),
            next: 0,
        };
        let (choice, zhat, outcome) = match settings.policy {
            SubintervalPolicy::Theory => {
                let (choice, zhat, start) =
                    select_interval(remaining, grid, source, settings.c_prime).map_err(|e| {
                        match e {
                            Error::StepTooCoarse { value, bound, .. } => Error::StepTooCoarse {
                                start: remaining.t0,
                                value,
                                bound,
                            },
                            other => other,
                        }
                    })?;
                let outcome = picard_iterate(&zhat, start, settings, segments.len(), 1.0)?;
                (choice, zhat, outcome)
            }
            SubintervalPolicy::Contraction => {
                contraction_interval(remaining, source, settings, segments.len())?
            }
        };
        let steps = choice.steps;
        let y_end = outcome.y.last().clone();
        let zh_end = zhat.last().clone();
        u_start = &y_end + &zh_end;
        y_nodes.truncate(first);
        zh_nodes.truncate(first);
        y_nodes.extend(outcome.y.into_nodes());
        zh_nodes.extend(zhat.into_nodes());
        segments.push(Segment {
            first,
            choice,
            picard: outcome.stats,
            closing: (y_end, zh_end),
        });
        first += steps;
    }
    let y = FieldPath::new(time, y_nodes)?;
    let zhat = FieldPath::new(time, zh_nodes)?;
    let u = y.add(&zhat)?;
    Ok(MildSolution {
        time,
        u0: u0.clone(),
        y,
        zhat,
        u,
        segments,
        settings: *settings,
    })
}

/// Builds `Zhat` from the jump record, solves on `[0, T0]`, restarts from
/// `u(T0)` and repeats until the grid is covered.
pub fn continue_solution(
    model: &JumpNoiseModel,
    record: &JumpRecord,
    u0: &SpectralField,
    time: PathGrid,
    settings: &PicardSettings,
) -> Result<MildSolution> {
    if time.t0 != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "solutions start at t = 0, not {}",
            time.t0
        )));
    }
    if u0.grid() != model.grid() {
        return Err(Error::GridMismatch {
            left: u0.grid().n(),
            right: model.grid().n(),
        });
    }
    let z = crate::noise::convolution_path(model, record, time)?;
    continue_with_convolution(&z, u0, settings)
}

/// Time integral of `e^{-(t - s)A} f(s)` over each step for `f` linear
/// between its node values; exact for such `f`.
fn duhamel_piecewise_linear(f: &[SpectralField], time: PathGrid) -> Vec<SpectralField> {
    let h = time.dt();
    let grid = f[0].grid();
    let kk = grid.k_squared_table();
    let (mut w0, mut w1, mut decay) = (vec![0.0; kk.len()], vec![0.0; kk.len()], vec![0.0; kk.len()]);
    for (i, &l) in kk.iter().enumerate() {
        decay[i] = (-l * h).exp();
        if l == 0.0 {
            continue;
        }
        let x = l * h;
        let e = -(-x).exp_m1();
        // int_0^h e^{-l(h - s)} (1 - s/h) ds and int_0^h e^{-l(h - s)} s/h ds
        let lin = (1.0 - e / x) / l;
        w1[i] = lin;
        w0[i] = e / l - lin;
    }
    let mut out = Vec::with_capacity(f.len());
    let mut phi = SpectralField::zeros(grid);
    out.push(phi.clone());
    for m in 0..time.steps {
        phi.apply_multiplier_table(&decay);
        let mut a = f[m].clone();
        a.apply_multiplier_table(&w0);
        let mut b = f[m + 1].clone();
        b.apply_multiplier_table(&w1);
        phi += &a;
        phi += &b;
        out.push(phi.clone());
    }
    out
}

/// `||u(t_m) - [e^{-t_m A} u0 - int_0^{t_m} e^{-(t_m - s)A} B(u(s)) ds + Z(t_m)]||_{L^2}`
/// at every node, with the convolution recomputed from the record and the
/// time integral taken with piecewise-linear interpolation of `B(u)`, a
/// rule independent of the one the solver uses.
pub fn mild_residual_series(
    sol: &MildSolution,
    model: &JumpNoiseModel,
    record: &JumpRecord,
) -> Result<Vec<f64>> {
    let time = sol.time;
    let z = stochastic_convolution(model, record, &time.times())?;
    let b: Vec<SpectralField> = sol.u.nodes().par_iter().map(quadratic).collect();
    let phi = duhamel_piecewise_linear(&b, time);
    let kk = sol.u0.grid().k_squared_table();
    let decay: Vec<f64> = kk.iter().map(|&l| (-l * time.dt()).exp()).collect();
    let mut free = sol.u0.clone();
    let mut out = Vec::with_capacity(time.nodes());
    for m in 0..time.nodes() {
        if m > 0 {
            free.apply_multiplier_table(&decay);
        }
        let mut rhs = &free - &phi[m];
        rhs += &z[m];
        out.push((sol.u.node(m) - &rhs).l2_norm());
    }
    Ok(out)
}

/// Largest entry of [`mild_residual_series`].
pub fn mild_residual(sol: &MildSolution, model: &JumpNoiseModel, record: &JumpRecord) -> Result<f64> {
    Ok(mild_residual_series(sol, model, record)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::noise::{MarkLaw, NoiseParams, DEFAULT_PHASE_SEED};
    use crate::random::{eigen_mode, random_field};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn taylor_green(grid: Grid) -> SpectralField {
        crate::random::taylor_green(grid, 1.0)
    }

    #[test]
    fn candidates_are_dyadic() {
        assert_eq!(dyadic_candidates(16), vec![16, 8, 4, 2]);
        assert_eq!(dyadic_candidates(1000), vec![1000, 500, 250, 125, 62, 31, 15, 7, 3, 2]);
        assert_eq!(dyadic_candidates(3), vec![3]);
        assert_eq!(dyadic_candidates(2), vec![2]);
        for steps in 2..300 {
            for c in dyadic_candidates(steps) {
                assert!(c >= 2 && c <= steps && steps - c != 1, "{steps} {c}");
            }
        }
    }

    #[test]
    fn duhamel_of_constant_mode() {
        let g = Grid::new(16).unwrap();
        let time = PathGrid::new(0.0, 0.5, 10).unwrap();
        let c = eigen_mode(g, 2, 1, 0.3);
        let f = FieldPath::new(time, vec![c.clone(); 11]).unwrap();
        let phi = duhamel(&f);
        for (i, p) in phi.nodes().iter().enumerate() {
            let t = time.time(i);
            let expect = &c * ((1.0 - (-5.0 * t).exp()) / 5.0);
            assert!((p - &expect).max_abs_coeff() < 1e-15);
        }
        let zero = duhamel(&FieldPath::zeros(time, g));
        assert!(zero.nodes().iter().all(|p| p.max_abs_coeff() == 0.0));
    }

    #[test]
    fn picard_map_scales_quadratically() {
        let g = Grid::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let time = PathGrid::new(0.0, 0.1, 8).unwrap();
        let nodes = (0..9).map(|_| random_field(g, &mut rng, 1.0)).collect();
        let zhat = FieldPath::new(time, nodes).unwrap();
        let y0 = FieldPath::zeros(time, g);
        let a = picard_map(&y0, &zhat).unwrap();
        let b = picard_map(&y0, &zhat.scaled(0.3)).unwrap();
        for (x, y) in a.nodes().iter().zip(b.nodes()) {
            assert!((&(x * 0.09) - y).max_abs_coeff() < 1e-14 * (1.0 + x.max_abs_coeff()));
            assert!(y.is_solenoidal(1e-10));
        }
        let zero = picard_map(&y0, &FieldPath::zeros(time, g)).unwrap();
        assert!(zero.nodes().iter().all(|p| p.max_abs_coeff() == 0.0));
        let other = FieldPath::zeros(PathGrid::new(0.0, 0.2, 8).unwrap(), g);
        assert!(picard_map(&other, &zhat).is_err());
    }

    #[test]
    fn zero_forcing_converges_immediately() {
        let g = Grid::new(16).unwrap();
        let time = PathGrid::new(0.0, 1.0, 16).unwrap();
        let zhat = FieldPath::zeros(time, g);
        assert_eq!(choose_t0(&zhat, 0.5).unwrap().steps, 16);
        let out = picard_solve(&zhat, &PicardSettings::new(0.5)).unwrap();
        assert_eq!(out.stats.iterations, 1);
        assert_eq!(out.y.l4l4_norm(), 0.0);
    }

    #[test]
    fn taylor_green_decays_exactly() {
        let g = Grid::new(16).unwrap();
        let u0 = taylor_green(g);
        let time = PathGrid::new(0.0, 1.0, 50).unwrap();
        let z = FieldPath::zeros(time, g);
        let sol = continue_with_convolution(&z, &u0, &PicardSettings::new(0.3)).unwrap();
        for (i, u) in sol.u.nodes().iter().enumerate() {
            let expect = &u0 * (-2.0 * time.time(i)).exp();
            assert!((u - &expect).l2_norm() < 1e-12);
        }
        assert!(sol.decomposition_defect() == 0.0);
    }

    #[test]
    fn rejects_bad_initial_data() {
        let g = Grid::new(16).unwrap();
        let time = PathGrid::new(0.0, 1.0, 16).unwrap();
        let z = FieldPath::zeros(time, g);
        let mut u0 = SpectralField::zeros(g);
        u0.set_mode(1, 0, [num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 0.0)]);
        assert!(continue_with_convolution(&z, &u0, &PicardSettings::new(0.3)).is_err());
    }

    #[test]
    fn too_coarse_steps_are_reported() {
        let g = Grid::new(16).unwrap();
        let time = PathGrid::new(0.0, 1.0, 4).unwrap();
        let big = &taylor_green(g) * 100.0;
        let z = FieldPath::new(time, vec![big; 5]).unwrap();
        assert!(matches!(choose_t0(&z, 0.3), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn small_noise_solution_has_small_residual() {
        let g = Grid::new(16).unwrap();
        let model = JumpNoiseModel::new(
            g,
            NoiseParams {
                rate: 5.0,
                marks: MarkLaw::SymmetricTwoPoint { amplitude: 1.0 },
                sigma: 0.02,
                gamma: 1.5,
                alpha: 0.1,
                phase_seed: DEFAULT_PHASE_SEED,
            },
        )
        .unwrap();
        let record = crate::noise::sample_jumps(&model, 0.5, 3).unwrap();
        let u0 = &taylor_green(g) * 0.01;
        let run = |steps| {
            let time = PathGrid::new(0.0, 0.5, steps).unwrap();
            let sol = continue_solution(&model, &record, &u0, time, &PicardSettings::new(0.3)).unwrap();
            assert!(sol.decomposition_defect() < 1e-15);
            assert!(sol.max_picard_ratio() <= 0.6);
            assert!(sol.max_fixed_point_residual() <= 2.0 * DEFAULT_TOL);
            mild_residual(&sol, &model, &record).unwrap()
        };
        let (r1, r2) = (run(100), run(200));
        assert!(r1 > 0.0 && r1 < 1e-3, "{r1}");
        assert!(r1 / r2 > 1.4 && r1 / r2 < 2.6, "{r1} {r2}");
    }
}
