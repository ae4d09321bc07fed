//! Solenoidal velocity fields on the torus, stored as truncated Fourier
//! coefficients, together with the Leray projection, the Stokes operator,
//! its semigroup and fractional powers, and the norms built from them.
//!
//! A field is `u(x) = sum_k c_k e^{i k.x}` with one complex 2-vector `c_k`
//! per stored wavevector. All Stokes-type operators are exact Fourier
//! multipliers in this basis.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{Grid, VOLUME};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Lebesgue exponent together with a smoothness order `s`; the associated
/// norm is `||A^{s/2} u||_{L^p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevOrder {
    pub s: f64,
    pub p: f64,
}

impl SobolevOrder {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(Self { s, p })
    }

    /// The order `(-2 alpha, 4)` in which noise and initial data live.
    pub fn negative_l4(alpha: f64) -> Self {
        Self {
            s: -2.0 * alpha,
            p: 4.0,
        }
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p == 2.0 || p == 4.0 {
        Ok(())
    } else {
        Err(Error::UnsupportedExponent(p))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    c1: Vec<Complex64>,
    c2: Vec<Complex64>,
}

/// Point values of a real vector field on the `n x n` physical grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    grid: Grid,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            c1: vec![ZERO; grid.len()],
            c2: vec![ZERO; grid.len()],
        }
    }

    pub fn from_components(grid: Grid, c1: Vec<Complex64>, c2: Vec<Complex64>) -> Result<Self> {
        if c1.len() != grid.len() || c2.len() != grid.len() {
            return Err(Error::Format(format!(
                "expected {} coefficients per component, got {} and {}",
                grid.len(),
                c1.len(),
                c2.len()
            )));
        }
        Ok(Self { grid, c1, c2 })
    }

    /// Samples a vector function on the physical grid and transforms it.
    pub fn from_physical_fn(grid: Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let n = grid.n();
        let h = crate::grid::SIDE / n as f64;
        let mut v1 = vec![0.0; grid.len()];
        let mut v2 = vec![0.0; grid.len()];
        for j1 in 0..n {
            for j2 in 0..n {
                let [a, b] = f(j1 as f64 * h, j2 as f64 * h);
                v1[j1 * n + j2] = a;
                v2[j1 * n + j2] = b;
            }
        }
        PhysicalField { grid, v1, v2 }.to_spectral()
    }

    /// Sets the coefficient at `k` and its conjugate at `-k`.
    ///
    /// Panics if `k` is not stored on the grid or is a Nyquist mode.
    pub fn set_mode(&mut self, k1: i64, k2: i64, c: [Complex64; 2]) {
        let half = (self.grid.n() / 2) as i64;
        assert!(
            k1.abs() < half && k2.abs() < half,
            "wavevector ({k1}, {k2}) is not a resolved mode"
        );
        let idx = self.grid.index_of(k1, k2).expect("stored mode");
        let m = self.grid.mirror(idx);
        self.c1[idx] = c[0];
        self.c2[idx] = c[1];
        if m != idx {
            self.c1[m] = c[0].conj();
            self.c2[m] = c[1].conj();
        }
    }

    pub fn coeff(&self, k1: i64, k2: i64) -> Option<[Complex64; 2]> {
        let idx = self.grid.index_of(k1, k2)?;
        Some([self.c1[idx], self.c2[idx]])
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn components(&self) -> (&[Complex64], &[Complex64]) {
        (&self.c1, &self.c2)
    }

    #[inline]
    pub fn components_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.c1, &mut self.c2)
    }

    pub fn check_same_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n(),
                right: other.grid.n(),
            });
        }
        Ok(())
    }

    /// Multiplies every coefficient by the real multiplier `m(|k|^2)`.
    pub fn map_multiplier(&self, m: impl Fn(f64) -> f64) -> Self {
        let t = self.grid.tables();
        let mut out = self.clone();
        out.apply_multiplier_table_with(|idx| m(t.kk[idx]));
        out
    }

    pub(crate) fn apply_multiplier_table(&mut self, table: &[f64]) {
        for ((a, b), &m) in self.c1.iter_mut().zip(self.c2.iter_mut()).zip(table) {
            *a *= m;
            *b *= m;
        }
    }

    /// `decay * prev + weight * f` mode by mode, in one pass.
    pub(crate) fn exponential_step(
        prev: &SpectralField,
        decay: &[f64],
        weight: &[f64],
        f: &SpectralField,
    ) -> SpectralField {
        assert_eq!(prev.grid, f.grid, "grid mismatch");
        let step = |p: &[Complex64], x: &[Complex64]| -> Vec<Complex64> {
            p.iter()
                .zip(x)
                .zip(decay.iter().zip(weight))
                .map(|((p, x), (&d, &w))| p * d + x * w)
                .collect()
        };
        SpectralField {
            grid: prev.grid,
            c1: step(&prev.c1, &f.c1),
            c2: step(&prev.c2, &f.c2),
        }
    }

    fn apply_multiplier_table_with(&mut self, m: impl Fn(usize) -> f64) {
        for idx in 0..self.grid.len() {
            let f = m(idx);
            self.c1[idx] *= f;
            self.c2[idx] *= f;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.c1.iter_mut().chain(self.c2.iter_mut()) {
            *v *= a;
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        for (x, y) in self.c1.iter_mut().zip(&other.c1) {
            *x += y * a;
        }
        for (x, y) in self.c2.iter_mut().zip(&other.c2) {
            *x += y * a;
        }
    }

    pub fn mean(&self) -> [Complex64; 2] {
        [self.c1[0], self.c2[0]]
    }

    pub fn is_mean_zero(&self) -> bool {
        self.c1[0] == ZERO && self.c2[0] == ZERO
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.grid.len() {
            let m = self.grid.mirror(idx);
            worst = worst
                .max((self.c1[idx] - self.c1[m].conj()).norm())
                .max((self.c2[idx] - self.c2[m].conj()).norm());
        }
        worst
    }

    /// Replaces the coefficients by their Hermitian-symmetric part.
    pub fn enforce_reality(&mut self) {
        for idx in 0..self.grid.len() {
            let m = self.grid.mirror(idx);
            if m < idx {
                continue;
            }
            let a = (self.c1[idx] + self.c1[m].conj()) * 0.5;
            let b = (self.c2[idx] + self.c2[m].conj()) * 0.5;
            self.c1[idx] = a;
            self.c2[idx] = b;
            self.c1[m] = a.conj();
            self.c2[m] = b.conj();
        }
    }

    /// `max_k |k . c(k)|`, zero for a divergence-free field.
    pub fn divergence_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|idx| {
                let (k1, k2) = self.grid.wavevector(idx);
                (self.c1[idx] * k1 as f64 + self.c2[idx] * k2 as f64).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_solenoidal(&self, tol: f64) -> bool {
        self.divergence_defect() <= tol
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.c1
            .iter()
            .chain(&self.c2)
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Zeroes every mode above the two-thirds cutoff.
    pub fn dealias(&mut self) {
        let t = self.grid.tables();
        for (idx, &keep) in t.retained_mask.iter().enumerate() {
            if !keep {
                self.c1[idx] = ZERO;
                self.c2[idx] = ZERO;
            }
        }
    }

    pub fn dealiased(&self) -> Self {
        let mut out = self.clone();
        out.dealias();
        out
    }

    pub fn is_dealiased(&self) -> bool {
        (0..self.grid.len())
            .all(|idx| self.grid.is_retained(idx) || (self.c1[idx] == ZERO && self.c2[idx] == ZERO))
    }

    pub fn is_finite(&self) -> bool {
        self.c1
            .iter()
            .chain(&self.c2)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Leray projection `c(k) <- (I - k k^T / |k|^2) c(k)`.
    pub fn leray_project(&self) -> Self {
        let mut out = self.clone();
        out.leray_project_in_place();
        out
    }

    pub fn leray_project_in_place(&mut self) {
        let t = self.grid.tables();
        for idx in 1..self.grid.len() {
            let (k1, k2, kk) = (t.k1[idx], t.k2[idx], t.kk[idx]);
            let dot = (self.c1[idx] * k1 + self.c2[idx] * k2) / kk;
            self.c1[idx] -= dot * k1;
            self.c2[idx] -= dot * k2;
        }
    }

    /// Stokes operator `A = -Pi Delta`, the multiplier `|k|^2`.
    pub fn stokes(&self) -> Self {
        self.map_multiplier(|kk| kk)
    }

    /// Heat semigroup `e^{-tA}`, the multiplier `e^{-|k|^2 t}`.
    pub fn semigroup(&self, t: f64) -> Result<Self> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.map_multiplier(|kk| (-kk * t).exp()))
    }

    /// `A^{s/2}`, the multiplier `|k|^s`; the mean mode is sent to zero for
    /// `s > 0` and must already vanish for `s < 0`.
    pub fn fractional_power(&self, s: f64) -> Result<Self> {
        if s == 0.0 {
            return Ok(self.clone());
        }
        if s < 0.0 && !self.is_mean_zero() {
            return Err(Error::NonzeroMean(s / 2.0));
        }
        Ok(self.map_multiplier(|kk| if kk == 0.0 { 0.0 } else { kk.powf(0.5 * s) }))
    }

    /// `L^2` norm from the coefficients by Parseval.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.c1.iter().chain(&self.c2).map(|c| c.norm_sqr()).sum();
        (VOLUME * sum).sqrt()
    }

    /// `(u, v)_{L^2}` computed from the coefficients.
    pub fn l2_inner(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let s1: f64 = self
            .c1
            .iter()
            .zip(&other.c1)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let s2: f64 = self
            .c2
            .iter()
            .zip(&other.c2)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        VOLUME * (s1 + s2)
    }

    /// `||grad u||_{L^2}`, the norm of `V`.
    pub fn grad_l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for idx in 0..self.grid.len() {
            sum += self.grid.k_squared(idx) * (self.c1[idx].norm_sqr() + self.c2[idx].norm_sqr());
        }
        (VOLUME * sum).sqrt()
    }

    /// `||A^{-1/2} u||_{L^2}`, the dual norm of `V'` on mean-zero fields.
    pub fn inv_grad_l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for idx in 1..self.grid.len() {
            sum += (self.c1[idx].norm_sqr() + self.c2[idx].norm_sqr()) / self.grid.k_squared(idx);
        }
        (VOLUME * sum).sqrt()
    }

    pub fn to_physical(&self) -> PhysicalField {
        let plan = fft::plan(self.grid.n());
        let (v1, v2) = plan.synthesize_pair(&self.c1, &self.c2);
        PhysicalField {
            grid: self.grid,
            v1,
            v2,
        }
    }

    /// `L^p` norm by trapezoidal quadrature on the physical grid, `p` in {2, 4}.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        Ok(self.to_physical().lp_norm_unchecked(p))
    }

    #[inline]
    pub fn l4_norm(&self) -> f64 {
        self.to_physical().lp_norm_unchecked(4.0)
    }

    /// `||A^{s/2} u||_{L^p}`.
    pub fn sobolev_norm(&self, ord: SobolevOrder) -> Result<f64> {
        check_exponent(ord.p)?;
        self.fractional_power(ord.s)?.lp_norm(ord.p)
    }
}

impl PhysicalField {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn to_spectral(&self) -> SpectralField {
        let plan = fft::plan(self.grid.n());
        let (c1, c2) = plan.analyze_pair(&self.v1, &self.v2);
        SpectralField {
            grid: self.grid,
            c1,
            c2,
        }
    }

    fn lp_norm_unchecked(&self, p: f64) -> f64 {
        let w = self.grid.cell_area();
        let sum: f64 = if p == 4.0 {
            self.v1
                .iter()
                .zip(&self.v2)
                .map(|(a, b)| {
                    let m = a * a + b * b;
                    m * m
                })
                .sum()
        } else {
            self.v1
                .iter()
                .zip(&self.v2)
                .map(|(a, b)| (a * a + b * b).powf(0.5 * p))
                .sum()
        };
        (w * sum).powf(1.0 / p)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        Ok(self.lp_norm_unchecked(p))
    }
}

impl<'a> Add<&'a SpectralField> for &'a SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &'a SpectralField) -> SpectralField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<'a> Sub<&'a SpectralField> for &'a SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &'a SpectralField) -> SpectralField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(a);
        out
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;

    fn neg(self) -> SpectralField {
        self * -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn grid() -> Grid {
        Grid::new(16).unwrap()
    }

    fn single_mode(k1: i64, k2: i64, v: [Complex64; 2]) -> SpectralField {
        let mut f = SpectralField::zeros(grid());
        f.set_mode(k1, k2, v);
        f
    }

    #[test]
    fn leray_matrix_at_unit_wavevector() {
        let f = single_mode(1, 0, [c(1.0), c(1.0)]);
        let p = f.leray_project();
        let [a, b] = p.coeff(1, 0).unwrap();
        assert!(a.norm() < 1e-15);
        assert!((b - c(1.0)).norm() < 1e-15);
        assert!(p.reality_defect() < 1e-15);
    }

    #[test]
    fn leray_annihilates_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = random_field(grid(), &mut rng, 1.0);
        // gradient of the scalar phi-hat = first component of phi
        let (p1, _) = phi.components();
        let g = grid();
        let mut c1 = vec![ZERO; g.len()];
        let mut c2 = vec![ZERO; g.len()];
        for idx in 0..g.len() {
            let (k1, k2) = g.wavevector(idx);
            if k1.abs() == 8 || k2.abs() == 8 {
                continue;
            }
            c1[idx] = I * k1 as f64 * p1[idx];
            c2[idx] = I * k2 as f64 * p1[idx];
        }
        let grad = SpectralField::from_components(g, c1, c2).unwrap();
        assert!(grad.l2_norm() > 1.0);
        assert!(grad.leray_project().max_abs_coeff() < 1e-12);
    }

    #[test]
    fn leray_is_idempotent_on_solenoidal_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(grid(), &mut rng, 0.5);
        assert!(f.is_solenoidal(1e-12));
        let p = f.leray_project();
        assert!((&p - &f).max_abs_coeff() < 1e-14);
    }

    #[test]
    fn stokes_multiplies_by_k_squared() {
        let f = single_mode(1, 1, [c(1.0), c(-1.0)]);
        let a = f.stokes();
        assert_eq!(a.coeff(1, 1).unwrap(), [c(2.0), c(-2.0)]);
        let f = single_mode(3, 4, [c(4.0), c(-3.0)]);
        let a = f.stokes();
        assert_eq!(a.coeff(3, 4).unwrap(), [c(100.0), c(-75.0)]);
        let z = SpectralField::zeros(grid());
        assert_eq!(z.stokes(), z);
    }

    #[test]
    fn semigroup_basics() {
        let f = single_mode(1, 0, [ZERO, c(1.0)]);
        assert_eq!(f.semigroup(0.0).unwrap(), f);
        let g = f.semigroup(1.0).unwrap();
        assert!((g.coeff(1, 0).unwrap()[1].re - (-1.0f64).exp()).abs() < 1e-15);
        assert!(matches!(f.semigroup(-0.1), Err(Error::NegativeTime(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(grid(), &mut rng, 1.0);
        let two = u.semigroup(0.3).unwrap().semigroup(0.7).unwrap();
        let one = u.semigroup(1.0).unwrap();
        assert!((&two - &one).max_abs_coeff() < 1e-15);
    }

    #[test]
    fn fractional_powers() {
        let f = single_mode(2, 0, [ZERO, c(1.0)]);
        assert_eq!(f.fractional_power(0.0).unwrap(), f);
        let h = f.fractional_power(-1.0).unwrap();
        assert!((h.coeff(2, 0).unwrap()[1].re - 0.5).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_field(grid(), &mut rng, 1.0);
        let back = u
            .fractional_power(1.0)
            .unwrap()
            .fractional_power(-1.0)
            .unwrap();
        assert!((&back - &u).l2_norm() <= 1e-12 * u.l2_norm());

        let mut m = u.clone();
        m.components_mut().0[0] = c(1.0);
        assert!(matches!(m.fractional_power(-0.2), Err(Error::NonzeroMean(_))));
    }

    #[test]
    fn fractional_power_matches_gamma_integral_on_eigenfunctions() {
        // A^{-a} = Gamma(a)^{-1} int_0^inf t^{a-1} e^{-tA} dt; on an
        // eigenfunction with eigenvalue lam this is lam^{-a}.
        let a: f64 = 0.35;
        for (k1, k2) in [(1, 0), (1, 2), (3, 3)] {
            let lam = (k1 * k1 + k2 * k2) as f64;
            // substitute t = x^{1/a}: int_0^inf e^{-lam x^{1/a}} dx / a
            let n = 200_000;
            let xmax = (40.0 / lam).powf(a);
            let h = xmax / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let x = (i as f64 + 0.5) * h;
                s += (-lam * x.powf(1.0 / a)).exp();
            }
            let integral = s * h / a;
            let gamma_a = 2.546_146_527_664_755; // Gamma(0.35)
            let quad = integral / gamma_a;
            let f = single_mode(k1, k2, [c(-(k2 as f64)), c(k1 as f64)]);
            let g = f.fractional_power(-2.0 * a).unwrap();
            let ratio = g.coeff(k1, k2).unwrap()[1].re / k1 as f64;
            assert!((ratio - quad).abs() < 1e-6 * quad, "{ratio} vs {quad}");
        }
    }

    #[test]
    fn lp_norms_of_sine() {
        let g = grid();
        let u = SpectralField::from_physical_fn(g, |x1, _| [x1.sin(), 0.0]);
        assert_eq!(SpectralField::zeros(g).lp_norm(2.0).unwrap(), 0.0);
        let l2 = u.lp_norm(2.0).unwrap();
        assert!((l2 - PI * 2f64.sqrt()).abs() < 1e-12 * l2);
        let l4 = u.lp_norm(4.0).unwrap();
        let exact = (0.375 * 4.0 * PI * PI).powf(0.25);
        assert!((l4 - exact).abs() < 1e-12 * exact);
        assert!((u.l2_norm() - l2).abs() < 1e-12 * l2);
        assert!(matches!(u.lp_norm(3.0), Err(Error::UnsupportedExponent(_))));
    }

    #[test]
    fn sobolev_norm_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_field(grid(), &mut rng, 1.0);
        let a = u.sobolev_norm(SobolevOrder::new(0.0, 4.0).unwrap()).unwrap();
        assert!((a - u.l4_norm()).abs() < 1e-14 * a);

        let f = single_mode(1, 0, [ZERO, c(1.0)]);
        let s = f.sobolev_norm(SobolevOrder::negative_l4(0.1)).unwrap();
        assert!((s - f.l4_norm()).abs() < 1e-14 * s);

        let f = single_mode(2, 0, [ZERO, c(1.0)]);
        let s = f.sobolev_norm(SobolevOrder::new(-0.5, 2.0).unwrap()).unwrap();
        let l2 = f.lp_norm(2.0).unwrap();
        assert!((s - l2 * 2f64.powf(-0.5)).abs() < 1e-13 * l2);
        assert!(SobolevOrder::new(0.0, 3.0).is_err());
    }

    #[test]
    fn grad_norm_cases() {
        let g = grid();
        assert_eq!(SpectralField::zeros(g).grad_l2_norm(), 0.0);
        let f = single_mode(1, 1, [c(1.0), c(-1.0)]);
        assert!((f.grad_l2_norm() - 2f64.sqrt() * f.l2_norm()).abs() < 1e-13);
        let u = SpectralField::from_physical_fn(g, |_, x2| [x2.sin(), 0.0]);
        assert!((u.grad_l2_norm() - u.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn packed_transform_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_field(Grid::new(32).unwrap(), &mut rng, 1.0);
        let back = u.to_physical().to_spectral();
        assert!((&back - &u).max_abs_coeff() < 1e-14);
    }
}
