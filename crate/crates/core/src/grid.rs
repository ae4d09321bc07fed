use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the periodic box.
pub const SIDE: f64 = 2.0 * std::f64::consts::PI;

/// Area of the periodic box, `(2 pi)^2`.
pub const VOLUME: f64 = SIDE * SIDE;

/// Uniform `n x n` Fourier grid on the `2 pi`-periodic torus.
///
/// Coefficients are stored row-major with the first index running over the
/// first wavenumber component. Array index `i` maps to wavenumber `i` for
/// `i <= n/2` and `i - n` otherwise, so the stored wavenumbers are
/// `-n/2 + 1 ..= n/2` along each axis.
/// Smallest and largest supported modes per axis.
pub const MIN_N: usize = 8;
pub const MAX_N: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Grid {
    n: usize,
    cutoff: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if !(MIN_N..=MAX_N).contains(&n) || n % 2 != 0 {
            return Err(Error::InvalidGrid(n));
        }
        // 3 * cutoff < n keeps every triple product alias-free.
        let cutoff = (n - 1) / 3;
        Ok(Self { n, cutoff })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest retained wavenumber component under the two-thirds rule.
    #[inline]
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of stored modes per component.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one physical grid cell.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = SIDE / self.n as f64;
        h * h
    }

    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavevector stored at flat index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        (self.wavenumber(idx / self.n), self.wavenumber(idx % self.n))
    }

    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        let (k1, k2) = self.wavevector(idx);
        (k1 * k1 + k2 * k2) as f64
    }

    /// Flat index of the wavevector `(k1, k2)`, if it is stored.
    pub fn index_of(&self, k1: i64, k2: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let to_index = |k: i64| -> Option<usize> {
            if k > half || k <= -half {
                None
            } else if k >= 0 {
                Some(k as usize)
            } else {
                Some((k + self.n as i64) as usize)
            }
        };
        Some(to_index(k1)? * self.n + to_index(k2)?)
    }

    /// Flat index holding the wavevector `-k` (modulo the grid).
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        let n = self.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    /// Whether the mode survives dealiasing: `max(|k1|, |k2|) <= cutoff`.
    #[inline]
    pub fn is_retained(&self, idx: usize) -> bool {
        let (k1, k2) = self.wavevector(idx);
        k1.unsigned_abs().max(k2.unsigned_abs()) as usize <= self.cutoff
    }

    /// `|k|^2` for every stored mode.
    pub fn k_squared_table(&self) -> Vec<f64> {
        self.tables().kk.clone()
    }

    /// Shared per-mode lookup tables of this grid.
    pub(crate) fn tables(&self) -> Arc<ModeTables> {
        static TABLES: OnceLock<Mutex<HashMap<usize, Arc<ModeTables>>>> = OnceLock::new();
        let cache = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(self.n)
            .or_insert_with(|| Arc::new(ModeTables::new(*self)))
            .clone()
    }
}

/// Wavevectors, `|k|^2`, mirror indices and the retained modes of a grid.
pub(crate) struct ModeTables {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub kk: Vec<f64>,
    pub mirror: Vec<usize>,
    /// flat indices of the retained nonzero modes
    pub retained: Vec<usize>,
    pub retained_mask: Vec<bool>,
}

impl ModeTables {
    fn new(grid: Grid) -> Self {
        let len = grid.len();
        let mut t = Self {
            k1: Vec::with_capacity(len),
            k2: Vec::with_capacity(len),
            kk: Vec::with_capacity(len),
            mirror: Vec::with_capacity(len),
            retained: Vec::new(),
            retained_mask: Vec::with_capacity(len),
        };
        for idx in 0..len {
            let (k1, k2) = grid.wavevector(idx);
            t.k1.push(k1 as f64);
            t.k2.push(k2 as f64);
            t.kk.push((k1 * k1 + k2 * k2) as f64);
            t.mirror.push(grid.mirror(idx));
            let keep = grid.is_retained(idx);
            t.retained_mask.push(keep);
            if keep && idx != 0 {
                t.retained.push(idx);
            }
        }
        t
    }
}

impl TryFrom<usize> for Grid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Grid::new(n)
    }
}

impl From<Grid> for usize {
    fn from(g: Grid) -> usize {
        g.n
    }
}
