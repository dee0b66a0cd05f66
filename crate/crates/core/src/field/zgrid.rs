use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic grid on `[-l_z/2, l_z/2)` standing in for the real line in `z`.
///
/// Coefficients use the unitary convention
/// `F(z) = l_z^{-1/2} Σ_k c_k e^{iζ_k z}`, `ζ_k = 2πk/l_z`, `k ∈ [-n_z/2, n_z/2)`,
/// stored in ascending `k`. Under it `‖F‖²_{L²} = Σ |c_k|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZGrid {
    n_z: usize,
    l_z: f64,
}

impl ZGrid {
    pub fn new(n_z: usize, l_z: f64) -> Result<Self> {
        if n_z < 2 || !n_z.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("n_z must be a power of two >= 2, got {n_z}")));
        }
        if !(l_z.is_finite() && l_z > 0.0) {
            return Err(Error::InvalidParameter(format!("l_z must be positive, got {l_z}")));
        }
        Ok(ZGrid { n_z, l_z })
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn l_z(&self) -> f64 {
        self.l_z
    }

    pub fn dz(&self) -> f64 {
        self.l_z / self.n_z as f64
    }

    /// Signed wavenumber of storage index `idx`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        idx as i64 - (self.n_z / 2) as i64
    }

    pub fn zeta(&self, idx: usize) -> f64 {
        2.0 * PI * self.wavenumber(idx) as f64 / self.l_z
    }

    pub fn zetas(&self) -> Vec<f64> {
        (0..self.n_z).map(|i| self.zeta(i)).collect()
    }

    /// Storage index of the zero frequency.
    pub fn zero_index(&self) -> usize {
        self.n_z / 2
    }

    /// Grid points of a (possibly refined) grid with `count` points on the same box.
    pub fn points(&self, count: usize) -> Vec<f64> {
        let h = self.l_z / count as f64;
        (0..count).map(|j| -0.5 * self.l_z + j as f64 * h).collect()
    }
}

type PlanPair = (usize, Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// FFT plans for the native and the dealiased sizes.
pub(crate) struct ZTransforms {
    grid: ZGrid,
    sizes: Vec<PlanPair>,
}

impl fmt::Debug for ZTransforms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZTransforms").field("sizes", &self.sizes.iter().map(|s| s.0).collect::<Vec<_>>()).finish()
    }
}

impl ZTransforms {
    pub(crate) fn new(grid: ZGrid, sizes: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let sizes = sizes.iter().map(|&p| (p, planner.plan_fft_forward(p), planner.plan_fft_inverse(p))).collect();
        ZTransforms { grid, sizes }
    }

    fn plans(&self, p: usize) -> (&Arc<dyn Fft<f64>>, &Arc<dyn Fft<f64>>) {
        let (_, f, i) = self.sizes.iter().find(|s| s.0 == p).expect("no FFT plan for requested z size");
        (f, i)
    }

    /// Rows of `n_z` coefficients to rows of `p` grid values.
    pub(crate) fn synthesize_rows(&self, coeffs: &[Complex64], p: usize) -> Vec<Complex64> {
        let n = self.grid.n_z;
        let rows = coeffs.len() / n;
        let (_, inv) = self.plans(p);
        let scale = 1.0 / self.grid.l_z.sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); rows * p];
        out.par_chunks_mut(p).zip(coeffs.par_chunks(n)).for_each(|(dst, src)| {
            for (idx, &c) in src.iter().enumerate() {
                let k = idx as i64 - (n / 2) as i64;
                let sign = if k.rem_euclid(2) == 0 { scale } else { -scale };
                dst[k.rem_euclid(p as i64) as usize] = c * sign;
            }
            inv.process(dst);
        });
        out
    }

    /// Rows of `p` grid values to rows of `n_z` coefficients (band truncation).
    pub(crate) fn analyze_rows(&self, values: &[Complex64], p: usize) -> Vec<Complex64> {
        let n = self.grid.n_z;
        let rows = values.len() / p;
        let (fwd, _) = self.plans(p);
        let scale = self.grid.l_z.sqrt() / p as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); rows * n];
        out.par_chunks_mut(n).zip(values.par_chunks(p)).for_each(|(dst, src)| {
            let mut buf = src.to_vec();
            fwd.process(&mut buf);
            for (idx, d) in dst.iter_mut().enumerate() {
                let k = idx as i64 - (n / 2) as i64;
                let sign = if k.rem_euclid(2) == 0 { scale } else { -scale };
                *d = buf[k.rem_euclid(p as i64) as usize] * sign;
            }
        });
        out
    }
}
