//! Cached 2D FFT plans and packed real-pair transforms.
//!
//! Two real fields `a`, `b` on the grid are transformed with a single complex
//! FFT of `a + i b`; the halves are separated with the conjugate symmetry of
//! real signals. Plans are immutable and shared between threads; scratch
//! space is kept per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();

pub(crate) fn plan(n: usize) -> Arc<Fft2> {
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Fft2 {
                n,
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Square in-place transpose in cache-sized tiles.
fn transpose_in_place(buf: &mut [Complex64], n: usize) {
    const TILE: usize = 16;
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + TILE).min(n) {
                    buf.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

impl Fft2 {
    /// Row transforms, transpose, row transforms, transpose. Rows that are
    /// entirely zero, common for dealiased input, are skipped in the first
    /// pass.
    fn run(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n * n);
        SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            let need = fft.get_inplace_scratch_len();
            if scratch.len() < need {
                scratch.resize(need, Complex64::new(0.0, 0.0));
            }
            let scratch = &mut scratch[..need];
            for row in buf.chunks_exact_mut(n) {
                if row.iter().any(|c| c.re != 0.0 || c.im != 0.0) {
                    fft.process_with_scratch(row, scratch);
                }
            }
            transpose_in_place(buf, n);
            fft.process_with_scratch(buf, scratch);
            transpose_in_place(buf, n);
        });
    }

    /// Unnormalized synthesis `sum_k c_k e^{+i k.x}` evaluated on the grid.
    pub(crate) fn synthesize(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.inverse);
    }

    /// Analysis `n^{-2} sum_x f(x) e^{-i k.x}`.
    pub(crate) fn analyze(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.forward);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Physical values of two real fields given their Fourier coefficients.
    pub(crate) fn synthesize_pair(
        &self,
        a: &[Complex64],
        b: &[Complex64],
    ) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + i * y).collect();
        self.synthesize(&mut buf);
        buf.iter().map(|c| (c.re, c.im)).unzip()
    }

    /// Normalized transform of `a + i b`; see [`split_packed`].
    pub(crate) fn analyze_packed(&self, a: &[f64], b: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.analyze(&mut buf);
        buf
    }

    /// Fourier coefficients of two real fields given on the grid.
    pub(crate) fn analyze_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n;
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.analyze(&mut buf);
        let mut ahat = vec![Complex64::new(0.0, 0.0); n * n];
        let mut bhat = vec![Complex64::new(0.0, 0.0); n * n];
        for i1 in 0..n {
            let m1 = (n - i1) % n;
            for i2 in 0..n {
                let m2 = (n - i2) % n;
                let c = buf[i1 * n + i2];
                let cm = buf[m1 * n + m2].conj();
                ahat[i1 * n + i2] = (c + cm) * 0.5;
                bhat[i1 * n + i2] = Complex64::new(0.0, -0.5) * (c - cm);
            }
        }
        (ahat, bhat)
    }
}

/// Coefficients of `a` and `b` at flat index `idx` from the transform of
/// `a + i b`; `mirror` is the index of `-k`.
#[inline]
pub(crate) fn split_packed(buf: &[Complex64], idx: usize, mirror: usize) -> (Complex64, Complex64) {
    let c = buf[idx];
    let cm = buf[mirror].conj();
    ((c + cm) * 0.5, Complex64::new(0.0, -0.5) * (c - cm))
}
