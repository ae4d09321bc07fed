//! Random band-limited solenoidal fields used by calibration sweeps,
//! property tests and random initial data.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::field::SpectralField;
use crate::grid::Grid;

/// Mean-zero, dealiased, divergence-free field with Gaussian coefficients of
/// spectral slope `|k|^{-slope}`.
pub fn random_field<R: Rng + ?Sized>(grid: Grid, rng: &mut R, slope: f64) -> SpectralField {
    random_band_field(grid, rng, slope, grid.cutoff())
}

/// As [`random_field`], restricted to `max(|k1|, |k2|) <= kmax`.
pub fn random_band_field<R: Rng + ?Sized>(
    grid: Grid,
    rng: &mut R,
    slope: f64,
    kmax: usize,
) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    let (c1, c2) = f.components_mut();
    for idx in 1..grid.len() {
        let (k1, k2) = grid.wavevector(idx);
        if k1.unsigned_abs().max(k2.unsigned_abs()) as usize > kmax || !grid.is_retained(idx) {
            continue;
        }
        let amp = grid.k_squared(idx).powf(-0.5 * slope);
        let mut draw = || {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * amp
        };
        c1[idx] = draw();
        c2[idx] = draw();
    }
    f.enforce_reality();
    f.leray_project_in_place();
    f
}

/// Random field with a randomly drawn slope and band, spanning smooth
/// large-scale fields through rough, nearly white ones.
pub fn random_mixed_field<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> SpectralField {
    let slope = rng.random_range(0.0..3.0);
    let kmax = rng.random_range(1..=grid.cutoff());
    let mut f = random_band_field(grid, rng, slope, kmax);
    if f.l2_norm() == 0.0 {
        f = random_field(grid, rng, slope);
    }
    let s = rng.random_range(0.1..10.0);
    f.scale(s / f.l2_norm());
    f
}

/// Divergence-free vortex blob `grad^perp exp(-|x - x0|^2 / (2 w^2))`,
/// periodized and dealiased.
pub fn vortex_blob(grid: Grid, center: (f64, f64), width: f64) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    let (c1, c2) = f.components_mut();
    let i = Complex64::new(0.0, 1.0);
    let w2 = width * width;
    for idx in 1..grid.len() {
        if !grid.is_retained(idx) {
            continue;
        }
        let (k1, k2) = grid.wavevector(idx);
        let (k1, k2) = (k1 as f64, k2 as f64);
        // Fourier coefficient of the periodized Gaussian
        let psi = w2 / (2.0 * std::f64::consts::PI) * (-0.5 * w2 * (k1 * k1 + k2 * k2)).exp()
            * Complex64::from_polar(1.0, -(k1 * center.0 + k2 * center.1));
        // u = (d2 psi, -d1 psi)
        c1[idx] = i * k2 * psi;
        c2[idx] = -i * k1 * psi;
    }
    f
}

/// `e^{i k.x}` shear-type eigenfunction `(-k2, k1) cos(k.x + phase)`.
pub fn eigen_mode(grid: Grid, k1: i64, k2: i64, phase: f64) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    let e = Complex64::from_polar(0.5, phase);
    f.set_mode(k1, k2, [e * -(k2 as f64), e * k1 as f64]);
    f
}

/// Taylor-Green vortex `amplitude * (sin x1 cos x2, -cos x1 sin x2)`, set
/// mode by mode so that the mean is exactly zero.
pub fn taylor_green(grid: Grid, amplitude: f64) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    let q = Complex64::new(0.0, 0.25 * amplitude);
    f.set_mode(1, 1, [-q, q]);
    f.set_mode(1, -1, [-q, -q]);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn taylor_green_matches_physical_formula() {
        let g = Grid::new(16).unwrap();
        let tg = taylor_green(g, 2.0);
        let p = tg.to_physical();
        let h = std::f64::consts::TAU / 16.0;
        for i in 0..16 {
            for j in 0..16 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                assert!((p.v1[i * 16 + j] - 2.0 * x.sin() * y.cos()).abs() < 1e-14);
                assert!((p.v2[i * 16 + j] + 2.0 * x.cos() * y.sin()).abs() < 1e-14);
            }
        }
        assert!(tg.is_mean_zero() && tg.is_solenoidal(0.0));
    }

    #[test]
    fn generated_fields_satisfy_invariants() {
        let g = Grid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let f = random_mixed_field(g, &mut rng);
            assert!(f.is_mean_zero());
            assert!(f.is_dealiased());
            assert!(f.reality_defect() < 1e-15);
            assert!(f.is_solenoidal(1e-12 * f.max_abs_coeff()));
        }
        let b = vortex_blob(g, (1.0, 2.0), 0.5);
        assert!(b.is_solenoidal(1e-14));
        assert!(b.reality_defect() < 1e-14);
        let phys = b.to_physical();
        assert!(phys.v1.iter().chain(&phys.v2).any(|v| v.abs() > 1e-3));
    }
}
