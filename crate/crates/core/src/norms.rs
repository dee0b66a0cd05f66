//! Weighted norms on coefficients and the time-weighted diagnostics built
//! from them.
//!
//! `Σ₀ˢ` uses the smooth multiplier `(1 + 2λ_n + ζ²)^{s/2}`, which is
//! equivalent to (not equal to) a dyadic Littlewood–Paley definition.

use num_complex::Complex64;

use crate::basis::{BasisWorkspace, Operator};
use crate::error::{Error, Result};
use crate::field::{apply_z_bessel, margins, multiply_z, Margins, SpectralField};

/// `λ_n = (n + 1)/2`, the `H0` eigenvalue of level `n`.
pub fn level_eigenvalue(n: usize) -> f64 {
    0.5 * (n as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig {
    /// Regularity exponent of `Σ₀ˢ` inside the `S` norm.
    pub s_sigma: f64,
    /// Time-weight exponent of the `X_T`-style diagnostics.
    pub delta: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { s_sigma: 7.0, delta: 5e-5 }
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_sigma >= 0.0 && self.s_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("s_sigma must be >= 0, got {}", self.s_sigma)));
        }
        if !(self.delta > 0.0 && self.delta < 1e-4) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1e-4), got {}", self.delta)));
        }
        Ok(())
    }
}

/// `(Σ_n λ_nˢ ‖u_n‖²)^{1/2}` for one slice of mode coefficients.
pub fn sigma_x_norm(basis: &BasisWorkspace, slice: &[Complex64], s: f64) -> Result<f64> {
    if slice.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: slice.len() });
    }
    let sum: f64 = (0..=basis.n_max())
        .map(|n| level_eigenvalue(n).powf(s) * slice[basis.level_range(n)].iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum();
    Ok(sum.sqrt())
}

/// `(Σ (1 + 2λ_n + ζ²)ˢ |c|²)^{1/2}`.
pub fn sigma0_norm(f: &SpectralField, s: f64) -> f64 {
    let space = f.space();
    let zetas = space.zgrid().zetas();
    let n_z = space.n_z();
    let mut sum = 0.0;
    for (row, mode) in f.coeffs().chunks(n_z).zip(space.basis().modes()) {
        let base = 1.0 + 2.0 * level_eigenvalue(mode.level());
        for (c, z) in row.iter().zip(&zetas) {
            sum += (base + z * z).powf(s) * c.norm_sqr();
        }
    }
    sum.sqrt()
}

/// `[max_ζ (1+ζ²)² Σ_p (1+p) ‖F_p(·,ζ)‖²]^{1/2}`.
pub fn z_norm(f: &SpectralField) -> f64 {
    let space = f.space();
    let zetas = space.zgrid().zetas();
    let n_z = space.n_z();
    let mut per_slice = vec![0.0; n_z];
    for (row, mode) in f.coeffs().chunks(n_z).zip(space.basis().modes()) {
        let w = 1.0 + mode.level() as f64;
        for (acc, c) in per_slice.iter_mut().zip(row) {
            *acc += w * c.norm_sqr();
        }
    }
    per_slice.iter().zip(&zetas).map(|(m, z)| (1.0 + z * z).powi(2) * m).fold(0.0, f64::max).sqrt()
}

/// `‖F‖_{Σ₀ᴺ} + ‖zF‖_{L²}` with `N = s_sigma`.
pub fn s_norm(f: &SpectralField, cfg: &NormConfig) -> f64 {
    sigma0_norm(f, cfg.s_sigma) + multiply_z(f).norm()
}

/// `‖F‖_S + ‖(1−∂_z²)⁴F‖_S + ‖zF‖_S`.
pub fn s_plus_norm(f: &SpectralField, cfg: &NormConfig) -> f64 {
    s_norm(f, cfg) + s_norm(&apply_z_bessel(f, 4), cfg) + s_norm(&multiply_z(f), cfg)
}

/// [`s_norm`] with the margin report that qualifies its `zF` term.
pub fn s_norm_checked(f: &SpectralField, cfg: &NormConfig) -> (f64, Margins) {
    (s_norm(f, cfg), margins(f))
}

/// Smooth bump: 1 on `[0, 1]`, 0 from 2 on, `C^∞` in between.
pub fn smooth_cutoff(x: f64) -> f64 {
    let x = x.abs();
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (bump(2.0 - x), bump(x - 1.0));
    a / (a + b)
}

/// Frequency filter `φ(ζ/N)` applied in `z`.
pub fn frequency_cutoff(f: &SpectralField, n: f64) -> Result<SpectralField> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParameter(format!("cutoff scale must be positive, got {n}")));
    }
    let zetas = f.space().zgrid().zetas();
    let mut out = f.clone();
    for row in out.coeffs_mut().chunks_mut(zetas.len()) {
        for (c, z) in row.iter_mut().zip(&zetas) {
            *c *= smooth_cutoff(z / n);
        }
    }
    Ok(out)
}

/// `Σ_n λ_n ‖Π_n F‖²`.
pub fn level_energy(f: &SpectralField) -> f64 {
    f.level_masses().iter().enumerate().map(|(n, m)| level_eigenvalue(n) * m).sum()
}

/// `⟨LF, F⟩`.
pub fn angular_momentum(f: &SpectralField) -> f64 {
    let n_z = f.space().n_z();
    f.coeffs()
        .chunks(n_z)
        .zip(f.space().basis().modes())
        .map(|(row, mode)| mode.eig(Operator::L) * row.iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum()
}

/// Which time window a time-weighted sup runs over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeWindow {
    /// `0 ≤ t ≤ T` (`X_T`-style).
    UpTo(f64),
    /// `t ≥ T` (`Y_T`-style).
    From(f64),
}

/// Samples needed by [`time_weighted_sup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSample {
    pub t: f64,
    pub z: f64,
    pub s: f64,
    /// `‖∂_t F‖_S`, typically a central-difference surrogate.
    pub dt_s: f64,
}

/// `Z + (1+t)^{−δ} S + (1+t)^{1−3δ} ‖∂_t F‖_S` at one time.
pub fn weighted_value(sample: &WeightSample, delta: f64) -> f64 {
    let w = 1.0 + sample.t.abs();
    sample.z + w.powf(-delta) * sample.s + w.powf(1.0 - 3.0 * delta) * sample.dt_s
}

/// Sup of [`weighted_value`] over the recorded times inside `window`.
pub fn time_weighted_sup(samples: &[WeightSample], window: TimeWindow, delta: f64) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::TooFewSnapshots(samples.len()));
    }
    let inside = |t: f64| match window {
        TimeWindow::UpTo(end) => (0.0..=end).contains(&t),
        TimeWindow::From(start) => t >= start,
    };
    Ok(samples.iter().filter(|s| inside(s.t)).map(|s| weighted_value(s, delta)).fold(0.0, f64::max))
}

/// `‖∂_t F‖` at every snapshot by central differences (one-sided at the
/// ends); zeros when there is a single snapshot.
pub fn difference_norms(times: &[f64], fields: &[SpectralField], norm: impl Fn(&SpectralField) -> f64) -> Vec<f64> {
    let n = fields.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            let d = &fields[b] - &fields[a];
            norm(&d) / (times[b] - times[a])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Mode;
    use crate::field::{propagate, Flow, Space};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(smooth_cutoff(0.0), 1.0);
        assert_eq!(smooth_cutoff(-1.0), 1.0);
        assert_eq!(smooth_cutoff(2.0), 0.0);
        assert_eq!(smooth_cutoff(3.5), 0.0);
        assert!((smooth_cutoff(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = smooth_cutoff(1.0 + i as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn cutoff_filters_high_frequencies_only() {
        let sp = space();
        let f = SpectralField::random(&sp, 2);
        let g = frequency_cutoff(&f, 1.0).unwrap();
        for (idx, z) in sp.zgrid().zetas().iter().enumerate() {
            let (a, b) = (f.slice(idx), g.slice(idx));
            if z.abs() <= 1.0 {
                assert_eq!(a, b);
            } else if z.abs() >= 2.0 {
                assert!(b.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
            }
        }
        assert!(frequency_cutoff(&f, 0.0).is_err());
    }

    fn space() -> Arc<Space> {
        Space::new(3, 8, 32, 24.0).unwrap()
    }

    #[test]
    fn sigma_x_examples() {
        let sp = space();
        let b = sp.basis();
        let mut unit00 = vec![c(0.0, 0.0); b.n_modes()];
        unit00[b.mode_index(Mode::new(0, 0)).unwrap()] = c(1.0, 0.0);
        assert!((sigma_x_norm(b, &unit00, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let mut unit10 = vec![c(0.0, 0.0); b.n_modes()];
        unit10[b.mode_index(Mode::new(1, 0)).unwrap()] = c(1.0, 0.0);
        assert!((sigma_x_norm(b, &unit10, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let f = SpectralField::random(&sp, 3);
        let slice = f.slice(16);
        let l2: f64 = slice.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((sigma_x_norm(b, &slice, 0.0).unwrap() - l2).abs() < 1e-15);
        assert!(sigma_x_norm(b, &slice[1..], 0.0).is_err());
    }

    #[test]
    fn sigma0_examples() {
        let sp = Space::new(2, 6, 16, 2.0 * std::f64::consts::PI).unwrap();
        // ζ_k = k on a box of length 2π
        let atom = SpectralField::atom(&sp, Mode::new(1, 0), 2, c(1.0, 0.0)).unwrap();
        assert!((sigma0_norm(&atom, 2.0) - 7.0).abs() < 1e-12);
        let f = SpectralField::random(&sp, 4);
        assert!((sigma0_norm(&f, 0.0) - f.norm()).abs() < 1e-15);
        let mut prev = 0.0;
        for s in [0.0, 0.5, 1.0, 2.0, 7.0] {
            let v = sigma0_norm(&f, s);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn z_norm_examples() {
        let sp = Space::new(2, 6, 16, 2.0 * std::f64::consts::PI).unwrap();
        let amp = c(0.6, -0.8);
        let a = SpectralField::atom(&sp, Mode::new(1, 1), 3, amp).unwrap();
        let want = (1.0 + 9.0) * 3f64.sqrt() * amp.norm();
        assert!((z_norm(&a) - want).abs() < 1e-13);
        let b = SpectralField::atom(&sp, Mode::new(0, 0), -1, c(2.0, 0.0)).unwrap();
        let sum = &a + &b;
        assert!((z_norm(&sum) - z_norm(&a).max(z_norm(&b))).abs() < 1e-13);
    }

    #[test]
    fn zf_of_gaussian_matches_closed_form() {
        // ‖z e^{-z²/2}‖² = √π/2 for a unit-norm x factor
        let sp = Space::new(1, 4, 128, 32.0).unwrap();
        let f = SpectralField::separable(&sp, &[(Mode::new(0, 0), c(1.0, 0.0))], |z| c((-z * z / 2.0).exp(), 0.0)).unwrap();
        let zf = multiply_z(&f).norm();
        assert!((zf - (std::f64::consts::PI.sqrt() / 2.0).sqrt()).abs() < 1e-8);
        let cfg = NormConfig::default();
        assert!(s_plus_norm(&f, &cfg) >= s_norm(&f, &cfg));
        let (_, m) = s_norm_checked(&f, &cfg);
        assert!(m.ok());
    }

    #[test]
    fn zero_frequency_bessel_term() {
        let sp = space();
        let flat = SpectralField::random(&sp, 8).slice_field(16);
        let cfg = NormConfig { s_sigma: 2.0, ..Default::default() };
        let s = s_norm(&flat, &cfg);
        let zs = s_norm(&multiply_z(&flat), &cfg);
        // the multiplier is 1 on ζ = 0, so S⁺ = 2S + ‖zF‖_S
        assert!((s_plus_norm(&flat, &cfg) - (2.0 * s + zs)).abs() < 1e-12 * s);
    }

    #[test]
    fn time_weighted_sup_examples() {
        let delta = 5e-5;
        let flat: Vec<WeightSample> = (0..5).map(|i| WeightSample { t: i as f64, z: 1.0, s: 2.0, dt_s: 0.1 }).collect();
        let sup = time_weighted_sup(&flat, TimeWindow::UpTo(4.0), delta).unwrap();
        assert_eq!(sup, weighted_value(&flat[4], delta));
        let still: Vec<WeightSample> = flat.iter().map(|s| WeightSample { dt_s: 0.0, ..*s }).collect();
        assert_eq!(time_weighted_sup(&still, TimeWindow::UpTo(4.0), 0.0).unwrap(), 3.0);
        let grow: Vec<WeightSample> =
            (0..6).map(|i| WeightSample { t: i as f64, z: 0.0, s: (1.0 + i as f64).powf(delta), dt_s: 0.0 }).collect();
        let sup = time_weighted_sup(&grow, TimeWindow::From(2.0), delta).unwrap();
        assert!((sup - 1.0).abs() < 1e-15);
        assert!(matches!(time_weighted_sup(&grow[..2], TimeWindow::UpTo(1.0), delta), Err(Error::TooFewSnapshots(2))));
        assert!(NormConfig { delta: 1e-4, ..Default::default() }.validate().is_err());
        assert!(NormConfig::default().validate().is_ok());
    }

    #[test]
    fn central_differences_of_linear_path() {
        let sp = space();
        let a = SpectralField::random(&sp, 1);
        let v = SpectralField::random(&sp, 2);
        let times = [0.0, 0.5, 1.5, 2.0];
        let fields: Vec<SpectralField> = times.iter().map(|&t| &a + &(&v * t)).collect();
        for d in difference_norms(&times, &fields, |f| f.norm()) {
            assert!((d - 1.0).abs() < 1e-13);
        }
        assert_eq!(difference_norms(&times[..1], &fields[..1], |f| f.norm()), vec![0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn norms_are_seminorms(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let sp = space();
            let f = SpectralField::random(&sp, seed);
            let g = SpectralField::random(&sp, seed ^ 0x5555);
            let a = c(re, im);
            let cfg = NormConfig { s_sigma: 2.0, ..Default::default() };
            let norms: [&dyn Fn(&SpectralField) -> f64; 4] =
                [&|u| sigma0_norm(u, 2.0), &z_norm, &|u| s_norm(u, &cfg), &|u| s_plus_norm(u, &cfg)];
            for n in norms {
                let (nf, ng) = (n(&f), n(&g));
                prop_assert!((n(&f.scaled(a)) - a.norm() * nf).abs() <= 1e-12 * (1.0 + a.norm() * nf));
                prop_assert!(n(&(&f + &g)) <= (nf + ng) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn norms_invariant_under_diagonal_flows(seed in any::<u64>(), tau in -4.0f64..4.0) {
            let sp = space();
            let f = SpectralField::random(&sp, seed);
            for flow in [Flow::HOverEps2 { eps: 0.2 }, Flow::FreeZ] {
                let g = propagate(&f, tau, flow).unwrap();
                prop_assert!((sigma0_norm(&g, 7.0) - sigma0_norm(&f, 7.0)).abs() <= 1e-13 * sigma0_norm(&f, 7.0));
                prop_assert!((z_norm(&g) - z_norm(&f)).abs() <= 1e-13 * z_norm(&f));
            }
        }

        #[test]
        fn embedding_ratios_are_bounded(seed in any::<u64>()) {
            let sp = space();
            let f = SpectralField::random(&sp, seed);
            let cfg = NormConfig::default();
            let (s1, z, s) = (sigma0_norm(&f, 1.0), z_norm(&f), s_norm(&f, &cfg));
            // generous uniform bounds over the random family
            prop_assert!(s1 / z < 10.0);
            prop_assert!(z / s < 1.0);
        }
    }
}
