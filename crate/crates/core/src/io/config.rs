//! Run configuration in a flat `key = value [unit]` text format.
//!
//! One assignment per line; `#` starts a comment. Keys with a physical
//! dimension take an optional unit after the value (`s` for times, `1/s`
//! for the jump rate); when present it must match. Unknown and repeated
//! keys are errors. The canonical text written by [`SolverConfig::to_text`]
//! lists every key with its unit, and its SHA-256 is the configuration hash.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{SobolevOrder, SpectralField};
use crate::grid::Grid;
use crate::mild::{PicardSettings, SubintervalPolicy, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::noise::{check_integrability, MarkLaw, NoiseParams, DEFAULT_PHASE_SEED};
use crate::path::PathGrid;

/// Initial velocity presets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDatum {
    Zero,
    /// Taylor-Green vortex with `||u0||_2 = amplitude * pi * sqrt(2)`
    TaylorGreen { amplitude: f64 },
    /// Random field with `||u0||_{H^{-2 alpha, 4}} = amplitude`
    Random { seed: u64, amplitude: f64 },
}

impl InitialDatum {
    pub fn build(&self, grid: Grid, alpha: f64) -> Result<SpectralField> {
        Ok(match *self {
            InitialDatum::Zero => SpectralField::zeros(grid),
            InitialDatum::TaylorGreen { amplitude } => crate::random::taylor_green(grid, amplitude),
            InitialDatum::Random { seed, amplitude } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut f = crate::random::random_field(grid, &mut rng, 1.0);
                let norm = f.sobolev_norm(SobolevOrder::negative_l4(alpha))?;
                if norm > 0.0 {
                    f.scale(amplitude / norm);
                }
                f
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub marks: MarkLaw,
    pub phase_seed: u64,
    pub u0: InitialDatum,
    pub tol: f64,
    pub max_iter: usize,
    pub policy: SubintervalPolicy,
    pub n_paths: usize,
    pub seed: u64,
    /// snapshot stride in steps, `0` for none
    pub stride: usize,
    pub output: PathBuf,
    /// frozen constants file; calibrated on the fly when absent
    pub constants: Option<PathBuf>,
    pub calibration_seed: u64,
    pub calibration_samples: usize,
}

impl Default for SolverConfig {
    /// The reference configuration.
    fn default() -> Self {
        Self {
            n: 64,
            horizon: 1.0,
            dt: 1e-3,
            alpha: 0.1,
            gamma: 1.5,
            sigma: 0.5,
            lambda: 10.0,
            marks: MarkLaw::SymmetricTwoPoint { amplitude: 1.0 },
            phase_seed: DEFAULT_PHASE_SEED,
            u0: InitialDatum::Zero,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            policy: SubintervalPolicy::Contraction,
            n_paths: 200,
            seed: 1,
            stride: 0,
            output: PathBuf::from("out"),
            constants: None,
            calibration_seed: 1,
            calibration_samples: crate::verify::calibrate::MIN_SAMPLES,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Unit {
    None,
    Seconds,
    PerSecond,
}

impl Unit {
    fn symbol(self) -> &'static str {
        match self {
            Unit::None => "",
            Unit::Seconds => "s",
            Unit::PerSecond => "1/s",
        }
    }
}

/// Keys in canonical order with their units.
const KEYS: &[(&str, Unit)] = &[
    ("n", Unit::None),
    ("horizon", Unit::Seconds),
    ("dt", Unit::Seconds),
    ("alpha", Unit::None),
    ("gamma", Unit::None),
    ("sigma", Unit::None),
    ("lambda", Unit::PerSecond),
    ("marks", Unit::None),
    ("mark_amplitude", Unit::None),
    ("mark_low", Unit::None),
    ("mark_high", Unit::None),
    ("mark_p_high", Unit::None),
    ("mark_mean", Unit::None),
    ("mark_std_dev", Unit::None),
    ("mark_bound", Unit::None),
    ("phase_seed", Unit::None),
    ("u0", Unit::None),
    ("u0_amplitude", Unit::None),
    ("u0_seed", Unit::None),
    ("tol", Unit::None),
    ("max_iter", Unit::None),
    ("policy", Unit::None),
    ("n_paths", Unit::None),
    ("seed", Unit::None),
    ("stride", Unit::None),
    ("output", Unit::None),
    ("constants", Unit::None),
    ("calibration_seed", Unit::None),
    ("calibration_samples", Unit::None),
];

/// Configuration keys in canonical order.
pub fn keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

fn unit_of(key: &str) -> Option<Unit> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, u)| *u)
}

fn config_err(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(format!("{key} = {v:?} is not a valid number")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, v)?;
    if !x.is_finite() {
        return Err(config_err(format!("{key} = {v} must be finite")));
    }
    Ok(x)
}

/// Mark-law parameters as read, assembled once all keys are known.
#[derive(Default)]
struct MarkParts {
    law: Option<String>,
    amplitude: Option<f64>,
    low: Option<f64>,
    high: Option<f64>,
    p_high: Option<f64>,
    mean: Option<f64>,
    std_dev: Option<f64>,
    bound: Option<f64>,
}

#[derive(Default)]
struct DatumParts {
    kind: Option<String>,
    amplitude: Option<f64>,
    seed: Option<u64>,
}

impl SolverConfig {
    /// Parses a configuration; keys not given keep their reference values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once('=').ok_or_else(|| {
                config_err(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let mut words = rest.split_whitespace();
            let value = words
                .next()
                .ok_or_else(|| config_err(format!("line {}: {key} has no value", lineno + 1)))?;
            let unit = words.next();
            if let Some(extra) = words.next() {
                return Err(config_err(format!(
                    "line {}: unexpected {extra:?} after {key}",
                    lineno + 1
                )));
            }
            let expected = unit_of(key)
                .ok_or_else(|| config_err(format!("line {}: unknown key {key:?}", lineno + 1)))?;
            if let Some(u) = unit {
                if expected == Unit::None || u != expected.symbol() {
                    return Err(config_err(format!(
                        "line {}: {key} takes {}, not {u:?}",
                        lineno + 1,
                        if expected == Unit::None {
                            "no unit".to_string()
                        } else {
                            format!("unit {:?}", expected.symbol())
                        }
                    )));
                }
            }
            if pairs.iter().any(|(k, _): &(String, String)| k == key) {
                return Err(config_err(format!("line {}: {key} is set twice", lineno + 1)));
            }
            pairs.push((key.to_string(), value.to_string()));
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    /// Applies `key = value` overrides, for instance from command-line
    /// flags, then validates.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut marks = MarkParts::default();
        let mut datum = DatumParts::default();
        for (key, v) in pairs {
            let key = key.as_str();
            let v = v.as_str();
            match key {
                "n" => self.n = parse_num(key, v)?,
                "horizon" => self.horizon = parse_f64(key, v)?,
                "dt" => self.dt = parse_f64(key, v)?,
                "alpha" => self.alpha = parse_f64(key, v)?,
                "gamma" => self.gamma = parse_f64(key, v)?,
                "sigma" => self.sigma = parse_f64(key, v)?,
                "lambda" => self.lambda = parse_f64(key, v)?,
                "marks" => marks.law = Some(v.to_string()),
                "mark_amplitude" => marks.amplitude = Some(parse_f64(key, v)?),
                "mark_low" => marks.low = Some(parse_f64(key, v)?),
                "mark_high" => marks.high = Some(parse_f64(key, v)?),
                "mark_p_high" => marks.p_high = Some(parse_f64(key, v)?),
                "mark_mean" => marks.mean = Some(parse_f64(key, v)?),
                "mark_std_dev" => marks.std_dev = Some(parse_f64(key, v)?),
                "mark_bound" => marks.bound = Some(parse_f64(key, v)?),
                "phase_seed" => self.phase_seed = parse_num(key, v)?,
                "u0" => datum.kind = Some(v.to_string()),
                "u0_amplitude" => datum.amplitude = Some(parse_f64(key, v)?),
                "u0_seed" => datum.seed = Some(parse_num(key, v)?),
                "tol" => self.tol = parse_f64(key, v)?,
                "max_iter" => self.max_iter = parse_num(key, v)?,
                "policy" => self.policy = v.parse()?,
                "n_paths" => self.n_paths = parse_num(key, v)?,
                "seed" => self.seed = parse_num(key, v)?,
                "stride" => self.stride = parse_num(key, v)?,
                "output" => self.output = PathBuf::from(v),
                "constants" => {
                    self.constants = if v == "none" { None } else { Some(PathBuf::from(v)) }
                }
                "calibration_seed" => self.calibration_seed = parse_num(key, v)?,
                "calibration_samples" => self.calibration_samples = parse_num(key, v)?,
                other => return Err(config_err(format!("unknown key {other:?}"))),
            }
        }
        self.marks = merge_marks(self.marks, marks)?;
        self.u0 = merge_datum(self.u0, datum)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n).map_err(|e| config_err(e.to_string()))?;
        if !(self.horizon > 0.0) {
            return Err(config_err(format!("horizon = {} s must be positive", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt <= 0.5 * self.horizon) {
            return Err(config_err(format!(
                "dt = {} s must be positive and at most half the horizon",
                self.dt
            )));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(config_err(format!(
                "horizon = {} s is not a whole number of steps dt = {} s",
                self.horizon, self.dt
            )));
        }
        check_integrability(self.alpha, self.gamma)?;
        self.noise_params().marks.validate()?;
        if !(self.sigma >= 0.0) || !(self.lambda >= 0.0) {
            return Err(config_err(format!(
                "sigma = {} and lambda = {} 1/s must be non-negative",
                self.sigma, self.lambda
            )));
        }
        match self.u0 {
            InitialDatum::TaylorGreen { amplitude } | InitialDatum::Random { amplitude, .. }
                if !(amplitude >= 0.0) =>
            {
                return Err(config_err(format!("u0_amplitude = {amplitude} must be non-negative")));
            }
            _ => {}
        }
        self.picard_settings(1.0).validate()?;
        if self.n_paths == 0 {
            return Err(config_err("n_paths must be positive".into()));
        }
        if self.calibration_samples < crate::verify::calibrate::MIN_SAMPLES {
            return Err(config_err(format!(
                "calibration_samples = {} is below the minimum {}",
                self.calibration_samples,
                crate::verify::calibrate::MIN_SAMPLES
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n)
    }

    pub fn time_grid(&self) -> Result<PathGrid> {
        PathGrid::with_step(self.horizon, self.dt)
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams {
            rate: self.lambda,
            marks: self.marks,
            sigma: self.sigma,
            gamma: self.gamma,
            alpha: self.alpha,
            phase_seed: self.phase_seed,
        }
    }

    pub fn picard_settings(&self, c_prime: f64) -> PicardSettings {
        PicardSettings {
            tol: self.tol,
            max_iter: self.max_iter,
            c_prime,
            policy: self.policy,
        }
    }

    fn value_of(&self, key: &str) -> Option<String> {
        let f = |x: f64| format!("{x:e}");
        Some(match key {
            "n" => self.n.to_string(),
            "horizon" => f(self.horizon),
            "dt" => f(self.dt),
            "alpha" => f(self.alpha),
            "gamma" => f(self.gamma),
            "sigma" => f(self.sigma),
            "lambda" => f(self.lambda),
            "marks" => mark_name(&self.marks).to_string(),
            "phase_seed" => self.phase_seed.to_string(),
            "u0" => match self.u0 {
                InitialDatum::Zero => "zero",
                InitialDatum::TaylorGreen { .. } => "taylor-green",
                InitialDatum::Random { .. } => "random",
            }
            .to_string(),
            "u0_amplitude" => match self.u0 {
                InitialDatum::TaylorGreen { amplitude } | InitialDatum::Random { amplitude, .. } => {
                    f(amplitude)
                }
                InitialDatum::Zero => return None,
            },
            "u0_seed" => match self.u0 {
                InitialDatum::Random { seed, .. } => seed.to_string(),
                _ => return None,
            },
            "tol" => f(self.tol),
            "max_iter" => self.max_iter.to_string(),
            "policy" => self.policy.to_string(),
            "n_paths" => self.n_paths.to_string(),
            "seed" => self.seed.to_string(),
            "stride" => self.stride.to_string(),
            "output" => self.output.display().to_string(),
            "constants" => match &self.constants {
                Some(p) => p.display().to_string(),
                None => "none".to_string(),
            },
            "calibration_seed" => self.calibration_seed.to_string(),
            "calibration_samples" => self.calibration_samples.to_string(),
            _ => return mark_value(&self.marks, key).map(f),
        })
    }

    /// Canonical text: every applicable key in fixed order, with units.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, unit) in KEYS {
            if let Some(v) = self.value_of(key) {
                out.push_str(key);
                out.push_str(" = ");
                out.push_str(&v);
                if *unit != Unit::None {
                    out.push(' ');
                    out.push_str(unit.symbol());
                }
                out.push('\n');
            }
        }
        out
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn mark_name(m: &MarkLaw) -> &'static str {
    match m {
        MarkLaw::SymmetricTwoPoint { .. } => "symmetric-two-point",
        MarkLaw::TwoPoint { .. } => "two-point",
        MarkLaw::Uniform { .. } => "uniform",
        MarkLaw::TruncatedGaussian { .. } => "truncated-gaussian",
    }
}

fn mark_value(m: &MarkLaw, key: &str) -> Option<f64> {
    match (*m, key) {
        (MarkLaw::SymmetricTwoPoint { amplitude }, "mark_amplitude") => Some(amplitude),
        (MarkLaw::TwoPoint { low, .. }, "mark_low") | (MarkLaw::Uniform { low, .. }, "mark_low") => {
            Some(low)
        }
        (MarkLaw::TwoPoint { high, .. }, "mark_high")
        | (MarkLaw::Uniform { high, .. }, "mark_high") => Some(high),
        (MarkLaw::TwoPoint { p_high, .. }, "mark_p_high") => Some(p_high),
        (MarkLaw::TruncatedGaussian { mean, .. }, "mark_mean") => Some(mean),
        (MarkLaw::TruncatedGaussian { std_dev, .. }, "mark_std_dev") => Some(std_dev),
        (MarkLaw::TruncatedGaussian { bound, .. }, "mark_bound") => Some(bound),
        _ => None,
    }
}

fn merge_marks(current: MarkLaw, parts: MarkParts) -> Result<MarkLaw> {
    let name = parts.law.as_deref().unwrap_or(mark_name(&current));
    let keep = |key: &str| {
        if name == mark_name(&current) {
            mark_value(&current, key)
        } else {
            None
        }
    };
    let need = |given: Option<f64>, key: &str| -> Result<f64> {
        given
            .or_else(|| keep(key))
            .ok_or_else(|| config_err(format!("marks = {name} needs {key}")))
    };
    let stray = |given: Option<f64>, key: &str| -> Result<()> {
        match given {
            Some(_) => Err(config_err(format!("{key} does not apply to marks = {name}"))),
            None => Ok(()),
        }
    };
    let law = match name {
        "symmetric-two-point" => {
            stray(parts.low, "mark_low")?;
            stray(parts.high, "mark_high")?;
            stray(parts.p_high, "mark_p_high")?;
            stray(parts.mean, "mark_mean")?;
            stray(parts.std_dev, "mark_std_dev")?;
            stray(parts.bound, "mark_bound")?;
            MarkLaw::SymmetricTwoPoint {
                amplitude: need(parts.amplitude, "mark_amplitude")?,
            }
        }
        "two-point" => {
            stray(parts.amplitude, "mark_amplitude")?;
            stray(parts.mean, "mark_mean")?;
            stray(parts.std_dev, "mark_std_dev")?;
            stray(parts.bound, "mark_bound")?;
            MarkLaw::TwoPoint {
                low: need(parts.low, "mark_low")?,
                high: need(parts.high, "mark_high")?,
                p_high: need(parts.p_high, "mark_p_high")?,
            }
        }
        "uniform" => {
            stray(parts.amplitude, "mark_amplitude")?;
            stray(parts.p_high, "mark_p_high")?;
            stray(parts.mean, "mark_mean")?;
            stray(parts.std_dev, "mark_std_dev")?;
            stray(parts.bound, "mark_bound")?;
            MarkLaw::Uniform {
                low: need(parts.low, "mark_low")?,
                high: need(parts.high, "mark_high")?,
            }
        }
        "truncated-gaussian" => {
            stray(parts.amplitude, "mark_amplitude")?;
            stray(parts.low, "mark_low")?;
            stray(parts.high, "mark_high")?;
            stray(parts.p_high, "mark_p_high")?;
            MarkLaw::TruncatedGaussian {
                mean: need(parts.mean, "mark_mean")?,
                std_dev: need(parts.std_dev, "mark_std_dev")?,
                bound: need(parts.bound, "mark_bound")?,
            }
        }
        other => {
            return Err(config_err(format!(
                "unknown mark law {other:?} (expected symmetric-two-point, two-point, uniform or truncated-gaussian)"
            )))
        }
    };
    Ok(law)
}

fn merge_datum(current: InitialDatum, parts: DatumParts) -> Result<InitialDatum> {
    let (cur_amp, cur_seed) = match current {
        InitialDatum::Zero => (None, None),
        InitialDatum::TaylorGreen { amplitude } => (Some(amplitude), None),
        InitialDatum::Random { seed, amplitude } => (Some(amplitude), Some(seed)),
    };
    let kind = parts.kind.as_deref().unwrap_or(match current {
        InitialDatum::Zero => "zero",
        InitialDatum::TaylorGreen { .. } => "taylor-green",
        InitialDatum::Random { .. } => "random",
    });
    Ok(match kind {
        "zero" => {
            if parts.amplitude.is_some() || parts.seed.is_some() {
                return Err(config_err("u0 = zero takes no u0_amplitude or u0_seed".into()));
            }
            InitialDatum::Zero
        }
        "taylor-green" => {
            if parts.seed.is_some() {
                return Err(config_err("u0 = taylor-green takes no u0_seed".into()));
            }
            InitialDatum::TaylorGreen {
                amplitude: parts.amplitude.or(cur_amp).unwrap_or(1.0),
            }
        }
        "random" => InitialDatum::Random {
            seed: parts.seed.or(cur_seed).unwrap_or(0),
            amplitude: parts.amplitude.or(cur_amp).unwrap_or(1.0),
        },
        other => {
            return Err(config_err(format!(
                "unknown u0 preset {other:?} (expected zero, taylor-green or random)"
            )))
        }
    })
}
