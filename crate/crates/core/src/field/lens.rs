//! Independent oracle for `e^{itH0}`: the lens transform maps oscillator
//! evolution to free evolution, which is computed with FFTs on a Cartesian
//! grid.
//!
//! With `Ω = ½` and `ũ(σ) = e^{iσΔ/2} f`,
//!
//! ```text
//! (e^{itH0} f)(x) = (cos Ωt)^{-1} e^{+i(Ω/2)|x|² tan Ωt} ũ(−tan(Ωt)/Ω, x / cos Ωt).
//! ```
//!
//! The comparison points are `x = cos(Ωt)·y` for `y` on the FFT grid, so no
//! interpolation is involved.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{propagate, Flow, SpectralField};
use crate::error::{Error, Result};

const OMEGA: f64 = 0.5;

/// Auxiliary Cartesian grid `[-half_width, half_width)²` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensGrid {
    pub half_width: f64,
    pub n: usize,
}

impl Default for LensGrid {
    fn default() -> Self {
        LensGrid { half_width: 16.0, n: 128 }
    }
}

/// `L²` distance between `propagate(F, t, H0)` and its lens-transform image,
/// summed over all z-frequencies.
pub fn lens_transform_check(f: &SpectralField, t: f64) -> Result<f64> {
    lens_transform_check_on(f, t, LensGrid::default())
}

pub fn lens_transform_check_on(f: &SpectralField, t: f64, grid: LensGrid) -> Result<f64> {
    let half_period = PI / OMEGA;
    // singular where cos(Ωt) = 0, i.e. t an odd multiple of π
    let nearest = ((t / half_period - 0.5).round() + 0.5) * half_period;
    if !t.is_finite() || (t - nearest).abs() < 1e-3 {
        return Err(Error::LensSingular { t });
    }
    if grid.n < 8 || !grid.n.is_power_of_two() || grid.half_width.is_nan() || grid.half_width <= 0.0 {
        return Err(Error::InvalidParameter(format!("bad lens grid {grid:?}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }

    let space = f.space();
    let basis = space.basis();
    let n = grid.n;
    let h = 2.0 * grid.half_width / n as f64;
    let axis: Vec<f64> = (0..n).map(|j| -grid.half_width + j as f64 * h).collect();
    let c = (OMEGA * t).cos();
    let tn = (OMEGA * t).tan();
    let sigma = -tn / OMEGA;

    let y_points: Vec<[f64; 2]> = axis.iter().flat_map(|&a| axis.iter().map(move |&b| [a, b])).collect();
    let x_points: Vec<[f64; 2]> = y_points.iter().map(|p| [c * p[0], c * p[1]]).collect();
    let y_table: Vec<Vec<Complex64>> = y_points.iter().map(|&p| basis.mode_values_at(p)).collect();
    let x_table: Vec<Vec<Complex64>> = x_points.iter().map(|&p| basis.mode_values_at(p)).collect();

    let kx: Vec<f64> = (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            2.0 * PI * m as f64 / (2.0 * grid.half_width)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let evolved = propagate(f, t, Flow::H0)?;
    let n_z = space.n_z();
    let n_modes = space.n_modes();
    let mut err2 = 0.0;
    for idx in 0..n_z {
        let row0 = f.slice(idx);
        if row0.iter().all(|v| v.norm() == 0.0) {
            continue;
        }
        let row_t = evolved.slice(idx);
        let eval = |table: &[Vec<Complex64>], row: &[Complex64]| -> Vec<Complex64> {
            table.iter().map(|hv| (0..n_modes).map(|a| hv[a] * row[a]).sum()).collect()
        };

        // free evolution of the initial slice on the y-grid
        let mut u = eval(&y_table, &row0);
        fft2(&mut u, n, |b| fwd.process(b));
        for (i, kxi) in kx.iter().enumerate() {
            for (j, kyj) in kx.iter().enumerate() {
                u[i * n + j] *= Complex64::from_polar(1.0 / (n * n) as f64, -0.5 * sigma * (kxi * kxi + kyj * kyj));
            }
        }
        fft2(&mut u, n, |b| inv.process(b));

        let direct = eval(&x_table, &row_t);
        for ((d, ut), x) in direct.iter().zip(&u).zip(&x_points) {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let lens = ut * Complex64::from_polar(1.0 / c, 0.5 * OMEGA * r2 * tn);
            err2 += (d - lens).norm_sqr();
        }
    }
    Ok((err2 * h * h * c * c).sqrt())
}

fn fft2(data: &mut [Complex64], n: usize, mut line: impl FnMut(&mut [Complex64])) {
    for row in data.chunks_mut(n) {
        line(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        line(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Mode;
    use crate::field::Space;

    #[test]
    fn zero_time_is_exact() {
        let sp = Space::new(2, 6, 16, 20.0).unwrap();
        let f = SpectralField::random(&sp, 5);
        assert_eq!(lens_transform_check(&f, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_focal_times() {
        let sp = Space::new(1, 4, 16, 20.0).unwrap();
        let f = SpectralField::random(&sp, 5);
        assert!(matches!(lens_transform_check(&f, PI + 5e-4), Err(Error::LensSingular { .. })));
        assert!(matches!(lens_transform_check(&f, -3.0 * PI), Err(Error::LensSingular { .. })));
        assert!(lens_transform_check(&f, PI - 0.1).is_ok());
    }

    #[test]
    fn ground_state_matches_closed_form() {
        let sp = Space::new(0, 2, 2, 10.0).unwrap();
        let f = SpectralField::atom(&sp, Mode::new(0, 0), 0, Complex64::new(1.0, 0.0)).unwrap();
        for t in [0.1, 0.5, 1.7, -1.0] {
            let e = lens_transform_check(&f, t).unwrap();
            assert!(e < 1e-8, "t = {t}: {e}");
        }
    }
}
