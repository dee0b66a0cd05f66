//! Time integration of the three flows.
//!
//! * ε-NLS `i∂_tψ = Dψ + λ|ψ|²ψ`, by Strang splitting on `ψ` or by RK4 on
//!   the profile `U = e^{itD}ψ`, which solves `i∂_tU = λ𝒩ᵗ[U,U,U]`.
//! * The averaged limit in profile form, `i∂_tW = λ𝒩₀ᵗ[W,W,W]`.
//! * The full resonant system `i∂_tG = λℛ[G,G,G]`.
//!
//! Trajectories always store profiles, so snapshots of different models can
//! be compared directly.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::diagnostics::DiagnosticsSeries;
use crate::error::{Error, Result};
use crate::field::{phase_table, propagate, Flow, Space, SpectralField, XRule};
use crate::nonlinear::{fr_rhs_with, full_nonlinearity, partial_resonant_with, required_theta_k, ThetaRule};
use crate::norms::NormConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    EpsNls,
    LimitNls,
    FullResonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Strang,
    ProfileRk4,
}

/// Largest step accepted for the slow (averaged) flows.
pub const SLOW_DT_MAX: f64 = 0.1;

/// Strang stiffness bound `ε²/4`.
pub fn strang_dt_max(eps: f64) -> f64 {
    eps * eps / 4.0
}

/// Oscillation-resolution bound `2πε² / (8(2n_max+1))` for profile RK4.
pub fn profile_dt_max(eps: f64, n_max: usize) -> f64 {
    2.0 * PI * eps * eps / (8.0 * (2 * n_max + 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub eps: f64,
    pub lambda: f64,
    pub n_max: usize,
    pub m_quad: usize,
    pub n_z: usize,
    pub l_z: f64,
    pub dealias: usize,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub model: Model,
    pub theta_k: usize,
    pub stride: usize,
    pub seed: u64,
    pub norms: NormConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            eps: 0.2,
            lambda: 1.0,
            n_max: 2,
            m_quad: 6,
            n_z: 64,
            l_z: 32.0,
            dealias: 2,
            dt: 0.005,
            t_end: 1.0,
            integrator: Integrator::Strang,
            model: Model::EpsNls,
            theta_k: 5,
            stride: 10,
            seed: 0,
            norms: NormConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps must lie in (0, 1], got {}", self.eps));
        }
        if ![-1.0, 0.0, 1.0].contains(&self.lambda) {
            return bad(format!("lambda must be -1, 0 or 1, got {}", self.lambda));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.theta_k < required_theta_k(self.n_max) {
            return Err(Error::ThetaRuleTooSmall { k: self.theta_k, required: required_theta_k(self.n_max) });
        }
        self.norms.validate()?;
        let (bound, reason) = match (self.model, self.integrator) {
            (Model::EpsNls, Integrator::Strang) => (strang_dt_max(self.eps), "strang stiffness bound eps^2/4"),
            (Model::EpsNls, Integrator::ProfileRk4) => {
                (profile_dt_max(self.eps, self.n_max), "profile oscillation bound 2*pi*eps^2/(8(2n_max+1))")
            }
            _ => (SLOW_DT_MAX, "slow-flow bound 0.1"),
        };
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt: self.dt, bound, reason });
        }
        Ok(())
    }

    pub fn build_space(&self) -> Result<Arc<Space>> {
        Space::with_dealias(self.n_max, self.m_quad, self.n_z, self.l_z, self.dealias)
    }

    pub fn theta_rule(&self) -> Result<ThetaRule> {
        ThetaRule::new(self.n_max, self.theta_k, crate::basis::Operator::H)
    }

    /// Number of steps, tolerant to `t_end/dt` landing a hair below an integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn n_snapshots(&self) -> usize {
        1 + self.n_steps() / self.stride
    }

    fn matches(&self, space: &Space) -> bool {
        space.basis().n_max() == self.n_max
            && space.basis().m_quad() == self.m_quad
            && space.n_z() == self.n_z
            && space.zgrid().l_z() == self.l_z
            && space.dealias() == self.dealias
    }
}

fn check_dt(dt: f64, bound: f64, reason: &'static str) -> Result<()> {
    if dt > bound * (1.0 + 1e-12) || dt.is_nan() || dt <= 0.0 {
        return Err(Error::StepTooLarge { dt, bound, reason });
    }
    Ok(())
}

/// Classical four-stage Runge–Kutta step for `u' = rhs(u, t)`.
pub fn rk4_step(u: &SpectralField, t: f64, dt: f64, rhs: impl Fn(&SpectralField, f64) -> Result<SpectralField>) -> Result<SpectralField> {
    let one = Complex64::new(1.0, 0.0);
    let k1 = rhs(u, t)?;
    let mut s = u.clone();
    s.axpy(one * (dt / 2.0), &k1);
    let k2 = rhs(&s, t + dt / 2.0)?;
    let mut s = u.clone();
    s.axpy(one * (dt / 2.0), &k2);
    let k3 = rhs(&s, t + dt / 2.0)?;
    let mut s = u.clone();
    s.axpy(one * dt, &k3);
    let k4 = rhs(&s, t + dt)?;
    let mut out = u.clone();
    out.axpy(one * (dt / 6.0), &k1);
    out.axpy(one * (dt / 3.0), &k2);
    out.axpy(one * (dt / 3.0), &k3);
    out.axpy(one * (dt / 6.0), &k4);
    Ok(out)
}

/// `e^{−iλ dt |ψ|²}` applied pointwise on the dealiased grid; the increment
/// is projected with the Galerkin rule.
fn nonlinear_phase(psi: &SpectralField, dt: f64, lambda: f64) -> SpectralField {
    let space = psi.space();
    let p = space.padded_n_z();
    let mut grid = space.x_synthesize(&psi.z_rows(p), p);
    for v in grid.iter_mut() {
        let rot = Complex64::from_polar(1.0, -lambda * dt * v.norm_sqr());
        *v *= rot - 1.0;
    }
    let rows = space.x_analyze(&grid, p, XRule::Galerkin);
    let inc = SpectralField::from_coeffs(space, space.z_analyze(&rows, p)).expect("shape fixed by space");
    psi + &inc
}

/// One Strang step of `i∂_tψ = Dψ + λ|ψ|²ψ`: half linear, full nonlinear, half linear.
pub fn step_strang_eps(psi: &SpectralField, dt: f64, eps: f64, lambda: f64) -> Result<SpectralField> {
    Flow::D { eps }.validate()?;
    check_dt(dt, strang_dt_max(eps), "strang stiffness bound eps^2/4")?;
    let half = phase_table(psi.space(), -dt / 2.0, Flow::D { eps })?;
    let a = psi.apply_table(&half, false);
    let b = if lambda == 0.0 { a } else { nonlinear_phase(&a, dt, lambda) };
    Ok(b.apply_table(&half, false))
}

/// One RK4 step of `i∂_tU = λ𝒩ᵗ[U,U,U]`.
pub fn step_profile_rk4(u: &SpectralField, t: f64, dt: f64, eps: f64, lambda: f64) -> Result<SpectralField> {
    Flow::D { eps }.validate()?;
    check_dt(dt, profile_dt_max(eps, u.space().basis().n_max()), "profile oscillation bound 2*pi*eps^2/(8(2n_max+1))")?;
    if lambda == 0.0 {
        return Ok(u.clone());
    }
    let coef = Complex64::new(0.0, -lambda);
    rk4_step(u, t, dt, |v, s| Ok(full_nonlinearity(v, v, v, s, eps)?.scaled(coef)))
}

/// One RK4 step of `i∂_tW = λ𝒩₀ᵗ[W,W,W]`. Negative `dt` integrates backwards.
pub fn step_limit(w: &SpectralField, t: f64, dt: f64, lambda: f64) -> Result<SpectralField> {
    step_limit_with(w, t, dt, lambda, &ThetaRule::exact(w.space().basis().n_max()))
}

pub fn step_limit_with(w: &SpectralField, t: f64, dt: f64, lambda: f64, rule: &ThetaRule) -> Result<SpectralField> {
    check_dt(dt.abs(), SLOW_DT_MAX, "slow-flow bound 0.1")?;
    if lambda == 0.0 {
        return Ok(w.clone());
    }
    let coef = Complex64::new(0.0, -lambda);
    rk4_step(w, t, dt, |v, s| Ok(partial_resonant_with(v, v, v, s, rule)?.scaled(coef)))
}

/// One RK4 step of `i∂_tG = λℛ[G,G,G]`.
pub fn step_fr(g: &SpectralField, dt: f64, lambda: f64) -> Result<SpectralField> {
    step_fr_with(g, dt, lambda, &ThetaRule::exact(g.space().basis().n_max()))
}

pub fn step_fr_with(g: &SpectralField, dt: f64, lambda: f64, rule: &ThetaRule) -> Result<SpectralField> {
    check_dt(dt.abs(), SLOW_DT_MAX, "slow-flow bound 0.1")?;
    if lambda == 0.0 {
        return Ok(g.clone());
    }
    let coef = Complex64::new(0.0, -lambda);
    rk4_step(g, 0.0, dt, |v, _| Ok(fr_rhs_with(v, rule)?.scaled(coef)))
}

/// Snapshots of the profile plus the diagnostics computed from them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
    pub diagnostics: DiagnosticsSeries,
}

impl Trajectory {
    pub fn last(&self) -> &SpectralField {
        self.snapshots.last().expect("trajectory is never empty")
    }
}

/// Integrates `config.model` from `initial` (a profile at `t = 0`, which
/// coincides with the physical field there).
pub fn run(config: &SimConfig, initial: &SpectralField) -> Result<Trajectory> {
    run_with_progress(config, initial, |_, _| {})
}

pub fn run_with_progress(config: &SimConfig, initial: &SpectralField, mut progress: impl FnMut(usize, usize)) -> Result<Trajectory> {
    config.validate()?;
    if !config.matches(initial.space()) {
        return Err(Error::SpaceMismatch);
    }
    let rule = config.theta_rule()?;
    let n_steps = config.n_steps();
    let mut times = vec![0.0];
    let mut snapshots = vec![initial.clone()];
    let mut state = initial.clone();
    for step in 0..n_steps {
        let t = step as f64 * config.dt;
        state = match (config.model, config.integrator) {
            (Model::EpsNls, Integrator::Strang) => step_strang_eps(&state, config.dt, config.eps, config.lambda)?,
            (Model::EpsNls, Integrator::ProfileRk4) => step_profile_rk4(&state, t, config.dt, config.eps, config.lambda)?,
            (Model::LimitNls, _) => step_limit_with(&state, t, config.dt, config.lambda, &rule)?,
            (Model::FullResonant, _) => step_fr_with(&state, config.dt, config.lambda, &rule)?,
        };
        if !state.is_finite() {
            return Err(Error::NumericalBlowup { step: step + 1 });
        }
        if (step + 1) % config.stride == 0 {
            let t_new = (step + 1) as f64 * config.dt;
            let profile = match (config.model, config.integrator) {
                (Model::EpsNls, Integrator::Strang) => propagate(&state, t_new, Flow::D { eps: config.eps })?,
                _ => state.clone(),
            };
            times.push(t_new);
            snapshots.push(profile);
        }
        progress(step + 1, n_steps);
    }
    let diagnostics = DiagnosticsSeries::from_snapshots(&times, &snapshots, &config.norms);
    Ok(Trajectory { times, snapshots, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Mode;
    use crate::field::project_level;
    use crate::norms::level_energy;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_space() -> Arc<Space> {
        Space::new(2, 6, 16, 20.0).unwrap()
    }

    #[test]
    fn config_bounds() {
        let mut cfg = SimConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dt = 0.011;
        assert!(matches!(cfg.validate(), Err(Error::StepTooLarge { .. })));
        cfg.integrator = Integrator::ProfileRk4;
        cfg.dt = profile_dt_max(0.2, 2) * 1.01;
        assert!(matches!(cfg.validate(), Err(Error::StepTooLarge { .. })));
        cfg.model = Model::LimitNls;
        cfg.dt = 0.1;
        assert!(cfg.validate().is_ok());
        cfg.dt = 0.2;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.05;
        cfg.theta_k = 4;
        assert!(matches!(cfg.validate(), Err(Error::ThetaRuleTooSmall { .. })));
        cfg.theta_k = 5;
        cfg.lambda = 2.0;
        assert!(cfg.validate().is_err());
        cfg.lambda = -1.0;
        cfg.eps = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn snapshot_count() {
        let cfg = SimConfig { t_end: 1.0, dt: 0.1, stride: 3, model: Model::FullResonant, ..Default::default() };
        assert_eq!(cfg.n_steps(), 10);
        assert_eq!(cfg.n_snapshots(), 4);
        let sp = cfg.build_space().unwrap();
        let traj = run(&cfg, &SpectralField::random(&sp, 1)).unwrap();
        assert_eq!(traj.snapshots.len(), 4);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        let zero = SimConfig { t_end: 0.0, ..cfg };
        let u = SpectralField::random(&sp, 2);
        let traj = run(&zero, &u).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.last().coeffs(), u.coeffs());
    }

    #[test]
    fn run_rejects_foreign_space() {
        let cfg = SimConfig::default();
        let u = SpectralField::zeros(&small_space());
        assert!(matches!(run(&cfg, &u), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn linear_flows_are_exact() {
        let sp = small_space();
        let u = SpectralField::random(&sp, 3);
        let eps = 0.3;
        let dt = strang_dt_max(eps);
        let mut psi = u.clone();
        for _ in 0..40 {
            psi = step_strang_eps(&psi, dt, eps, 0.0).unwrap();
        }
        let exact = propagate(&u, -40.0 * dt, Flow::D { eps }).unwrap();
        assert!(psi.max_abs_diff(&exact).unwrap() < 1e-12);
        assert_eq!(step_profile_rk4(&u, 0.3, 1e-3, eps, 0.0).unwrap().coeffs(), u.coeffs());
        assert_eq!(step_limit(&u, 0.3, 0.1, 0.0).unwrap().coeffs(), u.coeffs());
        assert_eq!(step_fr(&u, 0.1, 0.0).unwrap().coeffs(), u.coeffs());
    }

    #[test]
    fn strang_rejects_stiff_steps() {
        let sp = small_space();
        let u = SpectralField::random(&sp, 3);
        assert!(matches!(step_strang_eps(&u, 0.011, 0.2, 1.0), Err(Error::StepTooLarge { .. })));
        assert!(matches!(step_profile_rk4(&u, 0.0, 0.01, 0.2, 1.0), Err(Error::StepTooLarge { .. })));
        assert!(step_limit(&u, 0.0, 0.11, 1.0).is_err());
    }

    #[test]
    fn single_atom_mass_is_kept() {
        // |ψ| is invariant pointwise; coefficient moduli are not, since
        // |h00|² varies in x and couples the atom to other radial modes.
        // Truncating those modes loses mass at order (dt|ψ|²)² per step.
        let sp = small_space();
        let u = SpectralField::atom(&sp, Mode::new(0, 0), 0, c(0.1, 0.0)).unwrap();
        let eps = 0.25;
        let mut psi = u.clone();
        for _ in 0..20 {
            psi = step_strang_eps(&psi, strang_dt_max(eps), eps, 1.0).unwrap();
        }
        let drift = (psi.norm_sqr() - u.norm_sqr()).abs() / u.norm_sqr();
        assert!(drift < 1e-12, "{drift}");
        for (i, m) in psi.slice_masses().iter().enumerate() {
            if i != psi.k_index(0).unwrap() {
                assert!(*m < 1e-30);
            }
        }
    }

    #[test]
    fn limit_single_level_flat_data_is_phase_only() {
        let sp = small_space();
        let u = &project_level(&SpectralField::random(&sp, 4), 0).slice_field(8) * 5.0;
        let mut w = u.clone();
        for i in 0..20 {
            w = step_limit(&w, i as f64 * 0.05, 0.05, 1.0).unwrap();
        }
        let a = w.get(Mode::new(0, 0), 0).unwrap();
        let a0 = u.get(Mode::new(0, 0), 0).unwrap();
        assert!((a.norm() - a0.norm()).abs() < 1e-12);
        // i ċ = μ|c|²c with μ = 1/(4π l_z) for a constant-in-z ground mode
        let mu = 1.0 / (4.0 * PI * 20.0);
        let want = a0 * Complex64::from_polar(1.0, -mu * a0.norm_sqr() * 1.0);
        assert!((a - want).norm() < 1e-10 * a0.norm(), "{a} vs {want}");
    }

    #[test]
    fn fr_whole_field_equals_per_slice() {
        let sp = small_space();
        let u = &SpectralField::random(&sp, 5) * 4.0;
        let mut whole = u.clone();
        let mut parts: Vec<SpectralField> = (0..sp.n_z()).map(|i| u.slice_field(i)).collect();
        for _ in 0..10 {
            whole = step_fr(&whole, 0.1, 1.0).unwrap();
            for p in parts.iter_mut() {
                *p = step_fr(p, 0.1, 1.0).unwrap();
            }
        }
        for (i, p) in parts.iter().enumerate() {
            assert_eq!(whole.slice(i), p.slice(i));
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let sp = small_space();
        let u = &SpectralField::random(&sp, 6) * 3.0;
        let eps = 0.5;
        let h = profile_dt_max(eps, 2);
        let mut one = u.clone();
        let mut two = u.clone();
        let mut fine = u.clone();
        for i in 0..4 {
            one = step_profile_rk4(&one, i as f64 * h, h, eps, 1.0).unwrap();
        }
        for i in 0..8 {
            two = step_profile_rk4(&two, i as f64 * h / 2.0, h / 2.0, eps, 1.0).unwrap();
        }
        for i in 0..32 {
            fine = step_profile_rk4(&fine, i as f64 * h / 8.0, h / 8.0, eps, 1.0).unwrap();
        }
        let ratio = (&one - &fine).norm() / (&two - &fine).norm();
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn strang_mass_drift_over_many_steps() {
        let sp = small_space();
        // relative drift scales like α⁴ (truncated modes of the phase
        // increment); 2.5e-10 at α = 0.1
        let u = &SpectralField::random(&sp, 17) * 0.05;
        let eps = 0.2;
        let mut psi = u.clone();
        for _ in 0..10_000 {
            psi = step_strang_eps(&psi, eps * eps / 8.0, eps, 1.0).unwrap();
        }
        let drift = (psi.norm_sqr() - u.norm_sqr()).abs() / u.norm_sqr();
        assert!(drift < 1e-10, "{drift}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn resonant_flows_conserve(seed in any::<u64>()) {
            let sp = small_space();
            let u = &SpectralField::random(&sp, seed) * 3.0;
            let (m0, e0) = (u.norm_sqr(), level_energy(&u));
            let mut w = u.clone();
            let mut g = u.clone();
            for i in 0..20 {
                w = step_limit(&w, i as f64 * 0.1, 0.1, 1.0).unwrap();
                g = step_fr(&g, 0.1, 1.0).unwrap();
            }
            for f in [&w, &g] {
                prop_assert!((f.norm_sqr() - m0).abs() < 1e-8 * m0);
                prop_assert!((level_energy(f) - e0).abs() < 1e-8 * e0);
            }
        }

        #[test]
        fn gauge_covariance(seed in any::<u64>(), phi in 0.0f64..std::f64::consts::TAU) {
            let sp = small_space();
            let u = &SpectralField::random(&sp, seed) * 3.0;
            let ph = Complex64::from_polar(1.0, phi);
            let a = step_limit(&u.scaled(ph), 0.2, 0.1, 1.0).unwrap();
            let b = step_limit(&u, 0.2, 0.1, 1.0).unwrap().scaled(ph);
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-13);
            let a = step_strang_eps(&u.scaled(ph), 0.01, 0.3, -1.0).unwrap();
            let b = step_strang_eps(&u, 0.01, 0.3, -1.0).unwrap().scaled(ph);
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-13);
        }
    }
}
