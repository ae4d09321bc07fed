//! Finite-activity compensated Poisson noise and its stochastic convolution.
//!
//! The intensity measure is `nu = rate * marks`, a finite measure on the
//! real mark space. A jump with mark `z` kicks the velocity by
//! `xi(z) = z * sigma * P`, where `P` is a fixed divergence-free profile with
//! Fourier amplitudes `|k|^{-gamma}` and pseudo-random phases. Because the
//! measure has finitely many atoms on `[0, T]`, the convolution
//! `Z(t) = int_0^t int e^{-(t-s)A} xi(z) N~(ds, dz)` is an exact finite sum
//! plus the closed-form compensator `A^{-1}(I - e^{-tA}) m`, `m = rate E[xi]`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SobolevOrder, SpectralField};
use crate::grid::Grid;
use crate::path::{FieldPath, PathGrid};
use crate::seed::path_seed;

/// Default seed of the profile phases.
pub const DEFAULT_PHASE_SEED: u64 = 0x5EED_F1E1D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum MarkLaw {
    /// `+amplitude` or `-amplitude` with equal probability.
    SymmetricTwoPoint { amplitude: f64 },
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
    Uniform { low: f64, high: f64 },
    /// Normal law conditioned on `|z - mean| <= bound`.
    TruncatedGaussian { mean: f64, std_dev: f64, bound: f64 },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            MarkLaw::SymmetricTwoPoint { amplitude } if !amplitude.is_finite() => {
                bad(format!("mark amplitude {amplitude} must be finite"))
            }
            MarkLaw::TwoPoint { low, high, p_high }
                if !(low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_high)) =>
            {
                bad(format!("two-point law ({low}, {high}, p = {p_high}) is invalid"))
            }
            MarkLaw::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                bad(format!("uniform law on [{low}, {high}] is invalid"))
            }
            MarkLaw::TruncatedGaussian {
                mean,
                std_dev,
                bound,
            } if !(mean.is_finite() && std_dev > 0.0 && bound > 0.0 && bound.is_finite()) => bad(
                format!("truncated Gaussian ({mean}, {std_dev}, {bound}) is invalid"),
            ),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::SymmetricTwoPoint { amplitude } => {
                if rng.random::<bool>() {
                    amplitude
                } else {
                    -amplitude
                }
            }
            MarkLaw::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
            MarkLaw::Uniform { low, high } => rng.random_range(low..high),
            MarkLaw::TruncatedGaussian {
                mean,
                std_dev,
                bound,
            } => {
                let normal = Normal::new(mean, std_dev).expect("validated law");
                loop {
                    let z = normal.sample(rng);
                    if (z - mean).abs() <= bound {
                        return z;
                    }
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::SymmetricTwoPoint { .. } => 0.0,
            MarkLaw::TwoPoint { low, high, p_high } => p_high * high + (1.0 - p_high) * low,
            MarkLaw::Uniform { low, high } => 0.5 * (low + high),
            MarkLaw::TruncatedGaussian { mean, .. } => mean,
        }
    }

    /// `E[z^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkLaw::SymmetricTwoPoint { amplitude } => amplitude * amplitude,
            MarkLaw::TwoPoint { low, high, p_high } => {
                p_high * high * high + (1.0 - p_high) * low * low
            }
            MarkLaw::Uniform { low, high } => (high * high + high * low + low * low) / 3.0,
            MarkLaw::TruncatedGaussian {
                mean,
                std_dev,
                bound,
            } => {
                // E[(z - mean)^2] for the truncated law by Simpson's rule on the density.
                let b = bound / std_dev;
                let m = 4000;
                let h = 2.0 * b / m as f64;
                let (mut mass, mut var) = (0.0, 0.0);
                for i in 0..=m {
                    let x = -b + i as f64 * h;
                    let w = if i == 0 || i == m {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let d = (-0.5 * x * x).exp();
                    mass += w * d;
                    var += w * x * x * d;
                }
                mean * mean + std_dev * std_dev * var / mass
            }
        }
    }

    pub fn is_centered(&self) -> bool {
        self.mean() == 0.0
    }
}

/// Noise coefficients of the reference problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Jumps per unit time, the total mass of the intensity measure.
    pub rate: f64,
    pub marks: MarkLaw,
    pub sigma: f64,
    pub gamma: f64,
    /// Order of the space `H^{-2 alpha, 4}` the noise must live in.
    pub alpha: f64,
    #[serde(default = "default_phase_seed")]
    pub phase_seed: u64,
}

fn default_phase_seed() -> u64 {
    DEFAULT_PHASE_SEED
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpNoiseModel {
    params: NoiseParams,
    grid: Grid,
    /// `xi(1) / sigma`
    shape: SpectralField,
}

/// Checks `0 < alpha < 1/4` and `gamma + 2 alpha > 1`, the condition under
/// which the profile series has finite `H^{-2 alpha, 4}` norm in the
/// continuum limit.
pub fn check_integrability(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.25) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must lie in (0, 1/4)"
        )));
    }
    if !(gamma > 0.0) || !(gamma + 2.0 * alpha > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} with alpha = {alpha} violates the noise integrability condition \
             gamma + 2 alpha > 1; raise gamma above {}",
            1.0 - 2.0 * alpha
        )));
    }
    Ok(())
}

impl JumpNoiseModel {
    pub fn new(grid: Grid, params: NoiseParams) -> Result<Self> {
        if !(params.rate >= 0.0 && params.rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "jump rate {} must be finite and non-negative",
                params.rate
            )));
        }
        if !(params.sigma >= 0.0 && params.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise amplitude {} must be finite and non-negative",
                params.sigma
            )));
        }
        check_integrability(params.alpha, params.gamma)?;
        params.marks.validate()?;
        let shape = profile_shape(grid, params.gamma, params.phase_seed);
        Ok(Self {
            params,
            grid,
            shape,
        })
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rate(&self) -> f64 {
        self.params.rate
    }

    /// Same model with another amplitude.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.grid, NoiseParams { sigma, ..self.params })
    }

    /// The jump profile `xi(z)`.
    pub fn profile(&self, z: f64) -> SpectralField {
        &self.shape * (z * self.params.sigma)
    }

    /// `m = rate E[xi(z)]`, the compensator drift.
    pub fn compensator_drift(&self) -> SpectralField {
        self.profile(self.params.rate * self.params.marks.mean())
    }

    /// `rate * T * E ||xi(z)||^2_{H^{-2 alpha, 4}}`, exact since `xi` is linear in `z`.
    pub fn noise_second_moment(&self, horizon: f64) -> f64 {
        let unit = self
            .profile(1.0)
            .sobolev_norm(SobolevOrder::negative_l4(self.params.alpha))
            .expect("profile is mean-zero");
        self.params.rate * horizon * self.params.marks.second_moment() * unit * unit
    }
}

fn profile_shape(grid: Grid, gamma: f64, phase_seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(phase_seed);
    let mut f = SpectralField::zeros(grid);
    let (c1, c2) = f.components_mut();
    for idx in 1..grid.len() {
        let (k1, k2) = grid.wavevector(idx);
        let upper = k1 > 0 || (k1 == 0 && k2 > 0);
        if !upper || !grid.is_retained(idx) {
            continue;
        }
        let kk = grid.k_squared(idx);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = Complex64::from_polar(kk.powf(-0.5 * gamma) / kk.sqrt(), theta);
        c1[idx] = amp * -(k2 as f64);
        c2[idx] = amp * k1 as f64;
        let m = grid.mirror(idx);
        c1[m] = c1[idx].conj();
        c2[m] = c2[idx].conj();
    }
    f.leray_project_in_place();
    f
}

/// One realization of the Poisson random measure on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub seed: u64,
    pub rate: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub marks: Vec<f64>,
}

impl JumpRecord {
    pub fn empty(rate: f64, horizon: f64, seed: u64) -> Self {
        Self {
            seed,
            rate,
            horizon,
            times: Vec::new(),
            marks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Format(format!("horizon {} is not positive", self.horizon)));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::Format(format!("rate {} is invalid", self.rate)));
        }
        if self.times.len() != self.marks.len() {
            return Err(Error::Format(format!(
                "{} jump times but {} marks",
                self.times.len(),
                self.marks.len()
            )));
        }
        if self.marks.iter().any(|z| !z.is_finite()) {
            return Err(Error::Format("non-finite mark".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.times {
            if !(t >= 0.0 && t <= self.horizon) {
                return Err(Error::Format(format!(
                    "jump time {t} outside [0, {}]",
                    self.horizon
                )));
            }
            if t <= prev {
                return Err(Error::Format("jump times are not strictly increasing".into()));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }
}

/// Jump times are the order statistics of `Poisson(rate * horizon)` uniform
/// points; marks are i.i.d. Deterministic in `seed`.
pub fn sample_jumps(model: &JumpNoiseModel, horizon: f64, seed: u64) -> Result<JumpRecord> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be positive"
        )));
    }
    let rate = model.rate();
    let mut record = JumpRecord::empty(rate, horizon, seed);
    if rate == 0.0 {
        return Ok(record);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(rate * horizon)
        .map_err(|e| Error::InvalidParameter(format!("Poisson intensity: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;
    let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * horizon).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let marks = (0..times.len())
        .map(|_| model.params.marks.sample(&mut rng))
        .collect();
    record.times = times;
    record.marks = marks;
    Ok(record)
}

/// Scalar weights `s_k(t)` with `Z(t)_k = xi(1)_k s_k(t)`; they depend on `k`
/// only through `|k|^2`.
struct ModeGroups {
    /// distinct `|k|^2` values of the retained, nonzero modes
    levels: Vec<f64>,
    /// level index of each flat mode index, `usize::MAX` when unused
    group_of: Vec<usize>,
}

impl ModeGroups {
    fn new(grid: Grid) -> Self {
        let mut map = BTreeMap::new();
        let mut group_of = vec![usize::MAX; grid.len()];
        for (idx, slot) in group_of.iter_mut().enumerate().skip(1) {
            if grid.is_retained(idx) {
                let kk = grid.k_squared(idx) as u64;
                let next = map.len();
                *slot = *map.entry(kk).or_insert(next);
            }
        }
        let mut levels = vec![0.0; map.len()];
        for (kk, &g) in &map {
            levels[g] = *kk as f64;
        }
        Self { levels, group_of }
    }

    fn assemble(&self, shape: &SpectralField, weights: &[f64]) -> SpectralField {
        let mut out = shape.clone();
        let (c1, c2) = out.components_mut();
        for idx in 0..c1.len() {
            let g = self.group_of[idx];
            let w = if g == usize::MAX { 0.0 } else { weights[g] };
            c1[idx] *= w;
            c2[idx] *= w;
        }
        out
    }
}

fn check_out_times(out_times: &[f64], horizon: f64) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for &t in out_times {
        if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { time: t, horizon });
        }
        if t < prev {
            return Err(Error::InvalidParameter(
                "output times must be non-decreasing".into(),
            ));
        }
        prev = t;
    }
    Ok(())
}

/// `Z(t)` at each of the sorted `out_times`, jumps at times `<= t` included.
pub fn stochastic_convolution(
    model: &JumpNoiseModel,
    record: &JumpRecord,
    out_times: &[f64],
) -> Result<Vec<SpectralField>> {
    check_out_times(out_times, record.horizon)?;
    let groups = ModeGroups::new(model.grid);
    let shape = model.profile(1.0);
    let comp = model.rate() * model.params.marks.mean();
    let levels = &groups.levels;
    let mut jumps = vec![0.0; levels.len()];
    let mut t_prev = 0.0;
    let mut next_jump = 0;
    let mut out = Vec::with_capacity(out_times.len());
    for &t in out_times {
        for (s, &kk) in jumps.iter_mut().zip(levels) {
            *s *= (-kk * (t - t_prev)).exp();
        }
        while next_jump < record.times.len() && record.times[next_jump] <= t {
            let (tj, z) = (record.times[next_jump], record.marks[next_jump]);
            for (s, &kk) in jumps.iter_mut().zip(levels) {
                *s += z * (-kk * (t - tj)).exp();
            }
            next_jump += 1;
        }
        t_prev = t;
        let weights: Vec<f64> = jumps
            .iter()
            .zip(levels)
            .map(|(s, &kk)| s - comp * (1.0 - (-kk * t).exp()) / kk)
            .collect();
        out.push(groups.assemble(&shape, &weights));
    }
    Ok(out)
}

/// `Z` at the nodes of a uniform time grid.
pub fn convolution_path(
    model: &JumpNoiseModel,
    record: &JumpRecord,
    time: PathGrid,
) -> Result<FieldPath> {
    let nodes = stochastic_convolution(model, record, &time.times())?;
    FieldPath::new(time, nodes)
}

/// Discrete `||Z||_{L^4(0, T; L^4)}`.
pub fn convolution_l4l4_norm(z: &FieldPath) -> f64 {
    z.l4l4_norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurkholderEstimate {
    pub n_paths: usize,
    /// Monte-Carlo mean of `||Z||^2_{L^4 L^4}`
    pub lhs: f64,
    pub lhs_std_err: f64,
    /// `rate T E ||xi||^2_{H^{-2 alpha, 4}}`
    pub rhs: f64,
    pub ratio: f64,
    pub ratio_std_err: f64,
    /// per-path `||Z||^2_{L^4 L^4}` in path order
    pub samples: Vec<f64>,
}

impl BurkholderEstimate {
    pub fn from_samples(samples: Vec<f64>, rhs: f64) -> Self {
        let n = samples.len();
        let (mean, se) = mean_and_std_err(&samples);
        let (ratio, ratio_std_err) = if rhs > 0.0 {
            (mean / rhs, se / rhs)
        } else {
            (0.0, 0.0)
        };
        Self {
            n_paths: n,
            lhs: mean,
            lhs_std_err: se,
            rhs,
            ratio,
            ratio_std_err,
            samples,
        }
    }

    /// Distance between two ratio estimates in pooled standard errors.
    pub fn pooled_distance(&self, other: &BurkholderEstimate) -> f64 {
        let pooled = self.ratio_std_err.hypot(other.ratio_std_err);
        let d = (self.ratio - other.ratio).abs();
        if pooled == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / pooled
        }
    }
}

pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Monte-Carlo comparison of `E ||Z||^2_{L^4 L^4}` with the noise second
/// moment `E int int ||xi||^2_{H^{-2 alpha, 4}} nu(dz) ds`.
pub fn burkholder_check(
    model: &JumpNoiseModel,
    n_paths: usize,
    time: PathGrid,
    seed: u64,
) -> Result<BurkholderEstimate> {
    if n_paths < 100 {
        return Err(Error::InvalidParameter(format!(
            "burkholder_check needs at least 100 paths, got {n_paths}"
        )));
    }
    let horizon = time.t1;
    let samples = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let record = sample_jumps(model, horizon, path_seed(seed, i))?;
            let z = convolution_path(model, &record, time)?;
            Ok(convolution_l4l4_norm(&z).powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BurkholderEstimate::from_samples(
        samples,
        model.noise_second_moment(horizon),
    ))
}

/// `int_0^T ||e^{-tA} x||_{L^4}^4 dt` on a graded grid resolving the fast
/// initial decay of high modes.
pub fn semigroup_l4_pow4_integral(x: &SpectralField, horizon: f64) -> f64 {
    let kmax2 = (0..x.grid().len())
        .filter(|&i| x.grid().is_retained(i))
        .map(|i| x.grid().k_squared(i))
        .fold(1.0, f64::max);
    let t_min = (1e-3 / kmax2).min(horizon * 1e-3);
    let per_decade = 40;
    let decades = (horizon / t_min).log10().ceil().max(1.0) as usize;
    let mut ts = vec![0.0];
    for j in 0..=decades * per_decade {
        let t = t_min * 10f64.powf(j as f64 / per_decade as f64);
        if t >= horizon {
            break;
        }
        ts.push(t);
    }
    ts.push(horizon);
    let vals: Vec<f64> = ts
        .par_iter()
        .map(|&t| x.semigroup(t).expect("t >= 0").l4_norm().powi(4))
        .collect();
    ts.windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}
