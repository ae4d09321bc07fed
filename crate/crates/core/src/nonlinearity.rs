//! Convective trilinear form `b(u, v, w) = sum_ij int u^i D_i v^j w^j` and the
//! projected bilinear term `B(u, v) = Pi((u . grad) v)`.
//!
//! Sign convention: the drift of the projected equation is `-A u - B(u, u)`.
//! Products are formed on the physical grid; inputs are expected to be
//! dealiased, which makes every quadrature below exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::SpectralField;
use crate::path::FieldPath;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Two-thirds truncation rule of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DealiasRule {
    pub cutoff: usize,
}

impl DealiasRule {
    pub fn for_grid(grid: crate::grid::Grid) -> Self {
        Self {
            cutoff: grid.cutoff(),
        }
    }

    pub fn keeps(&self, k1: i64, k2: i64) -> bool {
        k1.unsigned_abs().max(k2.unsigned_abs()) as usize <= self.cutoff
    }
}

/// `(D_1 v^j, D_2 v^j)` coefficients for component `j`.
fn gradient_of(v: &[Complex64], grid: crate::grid::Grid) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut d1 = Vec::with_capacity(v.len());
    let mut d2 = Vec::with_capacity(v.len());
    for (idx, c) in v.iter().enumerate() {
        let (k1, k2) = grid.wavevector(idx);
        d1.push(I * k1 as f64 * c);
        d2.push(I * k2 as f64 * c);
    }
    (d1, d2)
}

/// Physical values of `(u . grad) v`, component by component.
fn advection_physical(u: &SpectralField, v: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    let grid = u.grid();
    let plan = fft::plan(grid.n());
    let (uc1, uc2) = u.components();
    let (vc1, vc2) = v.components();
    let (u1, u2) = plan.synthesize_pair(uc1, uc2);
    let (a, b) = gradient_of(vc1, grid);
    let (d1v1, d2v1) = plan.synthesize_pair(&a, &b);
    let (a, b) = gradient_of(vc2, grid);
    let (d1v2, d2v2) = plan.synthesize_pair(&a, &b);
    let mut p1 = vec![0.0; grid.len()];
    let mut p2 = vec![0.0; grid.len()];
    for x in 0..grid.len() {
        p1[x] = u1[x] * d1v1[x] + u2[x] * d2v1[x];
        p2[x] = u1[x] * d1v2[x] + u2[x] * d2v2[x];
    }
    (p1, p2)
}

/// `b(u, v, w)` by quadrature on the physical grid.
pub fn trilinear(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    u.check_same_grid(v)?;
    u.check_same_grid(w)?;
    let grid = u.grid();
    let (p1, p2) = advection_physical(u, v);
    let (wc1, wc2) = w.components();
    let (w1, w2) = fft::plan(grid.n()).synthesize_pair(wc1, wc2);
    let mut s = 0.0;
    for x in 0..grid.len() {
        s += p1[x] * w1[x] + p2[x] * w2[x];
    }
    Ok(s * grid.cell_area())
}

/// `B(u, v) = Pi((u . grad) v)`, dealiased.
pub fn bilinear(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.check_same_grid(v)?;
    Ok(bilinear_unchecked(u, v))
}

/// Divergence form `Pi div(u (x) v)`, equal to `Pi((u . grad) v)` for
/// solenoidal `u`; the four products are transformed in two packed FFTs.
pub(crate) fn bilinear_unchecked(u: &SpectralField, v: &SpectralField) -> SpectralField {
    let grid = u.grid();
    let plan = fft::plan(grid.n());
    let (uc1, uc2) = u.components();
    let (vc1, vc2) = v.components();
    let (u1, u2) = plan.synthesize_pair(uc1, uc2);
    let (v1, v2) = plan.synthesize_pair(vc1, vc2);
    let len = grid.len();
    let (mut p11, mut p21, mut p12, mut p22) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for x in 0..len {
        p11[x] = u1[x] * v1[x];
        p21[x] = u2[x] * v1[x];
        p12[x] = u1[x] * v2[x];
        p22[x] = u2[x] * v2[x];
    }
    // packed transforms: (u1 v1 + i u2 v1) and (u1 v2 + i u2 v2)
    let first = plan.analyze_packed(&p11, &p21);
    let second = plan.analyze_packed(&p12, &p22);
    let t = grid.tables();
    let mut out = SpectralField::zeros(grid);
    let (o1, o2) = out.components_mut();
    for &idx in &t.retained {
        let m = t.mirror[idx];
        let (a11, a21) = fft::split_packed(&first, idx, m);
        let (a12, a22) = fft::split_packed(&second, idx, m);
        let (k1, k2) = (t.k1[idx], t.k2[idx]);
        o1[idx] = I * (a11 * k1 + a21 * k2);
        o2[idx] = I * (a12 * k1 + a22 * k2);
    }
    out.leray_project_in_place();
    out
}

/// `B(u, u)` from the physical values of a solenoidal `u`.
///
/// Since `div(u (x) u) = div S + grad(|u|^2 / 2)` with the traceless
/// `S = [[a, b], [b, -a]]`, `a = (u1^2 - u2^2) / 2`, `b = u1 u2`, and the
/// projection removes gradients, `B(u, u) = Pi div S` needs one packed FFT.
pub(crate) fn quadratic_from_physical(grid: crate::grid::Grid, u1: &[f64], u2: &[f64]) -> SpectralField {
    let plan = fft::plan(grid.n());
    let len = grid.len();
    let (mut a, mut b) = (vec![0.0; len], vec![0.0; len]);
    for x in 0..len {
        a[x] = 0.5 * (u1[x] * u1[x] - u2[x] * u2[x]);
        b[x] = u1[x] * u2[x];
    }
    let packed = plan.analyze_packed(&a, &b);
    let t = grid.tables();
    let mut out = SpectralField::zeros(grid);
    let (o1, o2) = out.components_mut();
    for &idx in &t.retained {
        let (sa, sb) = fft::split_packed(&packed, idx, t.mirror[idx]);
        let (k1, k2) = (t.k1[idx], t.k2[idx]);
        let n1 = I * (sa * k1 + sb * k2);
        let n2 = I * (sb * k1 - sa * k2);
        let dot = (n1 * k1 + n2 * k2) / t.kk[idx];
        o1[idx] = n1 - dot * k1;
        o2[idx] = n2 - dot * k2;
    }
    out
}

/// `B(u) = B(u, u)`.
pub fn quadratic(u: &SpectralField) -> SpectralField {
    let (c1, c2) = u.components();
    let (u1, u2) = fft::plan(u.grid().n()).synthesize_pair(c1, c2);
    quadratic_from_physical(u.grid(), &u1, &u2)
}

/// `<B, w>` computed from coefficients.
pub fn pairing(b: &SpectralField, w: &SpectralField) -> f64 {
    b.l2_inner(w)
}

/// `||B(u, u)||_{V'} = ||A^{-1/2} B(u, u)||_{L^2}`.
pub fn vprime_norm_of_b(u: &SpectralField) -> f64 {
    quadratic(u).inv_grad_l2_norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzGap {
    /// `||B(u) - B(v)||_{L^2(V')}`
    pub lhs: f64,
    /// `C_b (||u||_{L^4 L^4} + ||v||_{L^4 L^4}) ||u - v||_{L^4 L^4}`
    pub rhs: f64,
}

impl LipschitzGap {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Discrete Lipschitz estimate of `B` from `L^4(L^4)` into `L^2(V')`.
pub fn lipschitz_gap(u: &FieldPath, v: &FieldPath, holder_constant: f64) -> Result<LipschitzGap> {
    u.check_compatible(v)?;
    if !(holder_constant > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Hoelder constant {holder_constant} must be positive"
        )));
    }
    let diff_b = u.zip_with(v, |a, b| &quadratic(a) - &quadratic(b))?;
    let lhs = diff_b.l2_vprime_norm();
    let du = u.sub(v)?;
    let rhs = holder_constant * (u.l4l4_norm() + v.l4l4_norm()) * du.l4l4_norm();
    Ok(LipschitzGap { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::path::PathGrid;
    use crate::random::{random_field, random_mixed_field};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(32).unwrap()
    }

    fn taylor_green(grid: Grid) -> SpectralField {
        SpectralField::from_physical_fn(grid, |x1, x2| {
            [x1.sin() * x2.cos(), -x1.cos() * x2.sin()]
        })
    }

    #[test]
    fn cancellation_and_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_mixed_field(grid(), &mut rng);
            let v = random_mixed_field(grid(), &mut rng);
            let w = random_mixed_field(grid(), &mut rng);
            let scale = u.l4_norm() * v.l4_norm() * w.grad_l2_norm()
                + u.l4_norm() * w.l4_norm() * v.grad_l2_norm();
            let bvv = trilinear(&u, &v, &v).unwrap();
            assert!(bvv.abs() <= 1e-12 * scale, "{bvv} vs {scale}");
            let s = trilinear(&u, &v, &w).unwrap() + trilinear(&u, &w, &v).unwrap();
            assert!(s.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_inputs() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = random_field(g, &mut rng, 1.0);
        let z = SpectralField::zeros(g);
        assert_eq!(trilinear(&z, &v, &v).unwrap(), 0.0);
        assert_eq!(trilinear(&v, &z, &v).unwrap(), 0.0);
        assert_eq!(bilinear(&z, &v).unwrap().max_abs_coeff(), 0.0);
        assert_eq!(vprime_norm_of_b(&z), 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = SpectralField::zeros(Grid::new(16).unwrap());
        let b = SpectralField::zeros(Grid::new(32).unwrap());
        assert!(matches!(trilinear(&a, &b, &a), Err(Error::GridMismatch { .. })));
        assert!(matches!(bilinear(&a, &b), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn taylor_green_nonlinearity_is_a_gradient() {
        let g = grid();
        let u = taylor_green(g);
        // brute force: (u . grad) u evaluated pointwise from the closed form
        // equals grad(-(cos 2x1 + cos 2x2) / 4).
        let h = crate::grid::SIDE / g.n() as f64;
        for j1 in 0..g.n() {
            for j2 in 0..g.n() {
                let (x1, x2) = (j1 as f64 * h, j2 as f64 * h);
                let (u1, u2) = (x1.sin() * x2.cos(), -x1.cos() * x2.sin());
                let a1 = u1 * x1.cos() * x2.cos() + u2 * (-x1.sin() * x2.sin());
                let a2 = u1 * (x1.sin() * x2.sin()) + u2 * (-x1.cos() * x2.cos());
                assert!((a1 - 0.5 * (2.0 * x1).sin()).abs() < 1e-14);
                assert!((a2 - 0.5 * (2.0 * x2).sin()).abs() < 1e-14);
            }
        }
        let b = bilinear(&u, &u).unwrap();
        assert!(b.l2_norm() < 1e-10);
    }

    #[test]
    fn pairing_matches_trilinear_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let u = random_mixed_field(grid(), &mut rng);
            let v = random_mixed_field(grid(), &mut rng);
            let w = random_mixed_field(grid(), &mut rng);
            let b = bilinear(&u, &v).unwrap();
            let lhs = pairing(&b, &w);
            let rhs = trilinear(&u, &v, &w).unwrap();
            let scale = u.l4_norm() * v.l4_norm() * w.grad_l2_norm();
            assert!((lhs - rhs).abs() <= 1e-10 * scale.max(rhs.abs()));
        }
    }

    #[test]
    fn bilinearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let u = random_field(grid(), &mut rng, 1.0);
        let v = random_field(grid(), &mut rng, 1.5);
        let b = bilinear(&u, &v).unwrap();
        let scaled = bilinear(&(&u * 2.0), &(&v * -3.0)).unwrap();
        assert!((&scaled - &(&b * -6.0)).max_abs_coeff() <= 1e-13 * b.max_abs_coeff());
        let q = vprime_norm_of_b(&u);
        assert!((vprime_norm_of_b(&(&u * 2.0)) - 4.0 * q).abs() < 1e-12 * q);
        assert!(b.is_solenoidal(1e-12 * b.max_abs_coeff()));
        assert!(b.is_dealiased());
    }

    #[test]
    fn lipschitz_gap_cases() {
        let g = Grid::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let time = PathGrid::new(0.0, 0.5, 8).unwrap();
        let u = FieldPath::new(time, (0..9).map(|_| random_field(g, &mut rng, 1.0)).collect())
            .unwrap();
        let same = lipschitz_gap(&u, &u, 1.0).unwrap();
        assert_eq!(same.lhs, 0.0);
        let zero = FieldPath::zeros(time, g);
        let single = lipschitz_gap(&u, &zero, 1.0).unwrap();
        let direct = u.map(quadratic).l2_vprime_norm();
        assert!((single.lhs - direct).abs() < 1e-12 * direct);
        assert!((single.rhs - u.l4l4_norm().powi(2)).abs() < 1e-12 * single.rhs);
        assert!(single.holds());
        let short = PathGrid::new(0.0, 0.5, 4).unwrap();
        let other = FieldPath::zeros(short, g);
        assert!(lipschitz_gap(&u, &other, 1.0).is_err());
    }
}
