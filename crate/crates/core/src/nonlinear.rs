//! Trilinear forms built on the cubic product `F·conj(G)·H`.
//!
//! Every form here reduces to the same kernel: sample the three arguments on
//! the node × dealiased-z grid, multiply pointwise and project back with the
//! quartic-exact Galerkin weights. The θ-average `F_av` wraps that kernel in
//! exact mode phases; because z-synthesis commutes with mode phases, the z
//! transforms are done once per argument, outside the θ loop.
//!
//! On a nonvanishing quadruple the angular selection rule forces
//! `p − q + r − s` to be even, and the `H`-phase of the quadruple is
//! `e^{iθ(p−q+r−s)/2}`. The same holds for `H0`, so both generators give the
//! same average and the equispaced rule is exact once `K > n_max`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::Operator;
use crate::dense::zeros;
use crate::error::{Error, Result};
use crate::field::{phase_table, project_level, Flow, Space, SpectralField, XRule};

/// Level quadruples `(p, q, r, s)` grouped by `ω = p − q + r − s`.
#[derive(Debug, Clone)]
pub struct ResonantSet {
    n_max: usize,
    by_omega: BTreeMap<i64, Vec<[usize; 4]>>,
}

impl ResonantSet {
    pub fn new(n_max: usize) -> Self {
        let mut by_omega: BTreeMap<i64, Vec<[usize; 4]>> = BTreeMap::new();
        for p in 0..=n_max {
            for q in 0..=n_max {
                for r in 0..=n_max {
                    for s in 0..=n_max {
                        let omega = p as i64 - q as i64 + r as i64 - s as i64;
                        by_omega.entry(omega).or_default().push([p, q, r, s]);
                    }
                }
            }
        }
        ResonantSet { n_max, by_omega }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `Γ_ω`, in lexicographic order.
    pub fn gamma(&self, omega: i64) -> &[[usize; 4]] {
        self.by_omega.get(&omega).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn gamma0(&self) -> &[[usize; 4]] {
        self.gamma(0)
    }

    pub fn omegas(&self) -> impl Iterator<Item = i64> + '_ {
        self.by_omega.keys().copied()
    }
}

/// Equispaced θ-rule `θ_m = 2πm/K` with weights `1/K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaRule {
    k: usize,
    generator: Operator,
    checked: bool,
}

/// Smallest `K` accepted by checked rules.
pub fn required_theta_k(n_max: usize) -> usize {
    2 * n_max + 1
}

impl ThetaRule {
    /// `K = 2n_max + 1` with generator `H`.
    pub fn exact(n_max: usize) -> Self {
        ThetaRule { k: required_theta_k(n_max), generator: Operator::H, checked: true }
    }

    pub fn new(n_max: usize, k: usize, generator: Operator) -> Result<Self> {
        let rule = ThetaRule { k, generator, checked: true };
        rule.validate(n_max)?;
        Ok(rule)
    }

    /// Rule that skips the threshold check, for threshold experiments.
    pub fn unchecked(k: usize, generator: Operator) -> Self {
        ThetaRule { k: k.max(1), generator, checked: false }
    }

    pub fn with_generator(mut self, generator: Operator) -> Self {
        self.generator = generator;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn generator(&self) -> Operator {
        self.generator
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.k).map(|m| 2.0 * PI * m as f64 / self.k as f64).collect()
    }

    fn validate(&self, n_max: usize) -> Result<()> {
        if self.generator == Operator::L {
            return Err(Error::InvalidParameter("θ-average generator must be H or H0".into()));
        }
        let required = required_theta_k(n_max);
        if self.checked && self.k < required {
            return Err(Error::ThetaRuleTooSmall { k: self.k, required });
        }
        Ok(())
    }
}

fn check3(f: &SpectralField, g: &SpectralField, h: &SpectralField) -> Result<()> {
    f.check_space(g)?;
    f.check_space(h)
}

/// Galerkin projection of the pointwise product of three column blocks
/// (`n_modes × cols` each) sampled in `x`.
fn cubic_columns(space: &Space, f: &[Complex64], g: &[Complex64], h: &[Complex64], cols: usize) -> Vec<Complex64> {
    let fx = space.x_synthesize(f, cols);
    let gx = if std::ptr::eq(g, f) { fx.clone() } else { space.x_synthesize(g, cols) };
    let hx = if std::ptr::eq(h, f) {
        fx.clone()
    } else if std::ptr::eq(h, g) {
        gx.clone()
    } else {
        space.x_synthesize(h, cols)
    };
    let prod: Vec<Complex64> = fx.iter().zip(&gx).zip(&hx).map(|((a, b), c)| a * b.conj() * c).collect();
    space.x_analyze(&prod, cols, XRule::Galerkin)
}

fn rotate_rows(rows: &[Complex64], phases: &[Complex64], cols: usize) -> Vec<Complex64> {
    let mut out = rows.to_vec();
    for (row, ph) in out.chunks_mut(cols).zip(phases) {
        row.iter_mut().for_each(|v| *v *= ph);
    }
    out
}

/// `(1/K) Σ_m e^{iθ_m A} cubic(e^{-iθ_m A}·)` on column blocks; reduction in `m` order.
fn theta_average_columns(
    space: &Space,
    f: &[Complex64],
    g: &[Complex64],
    h: &[Complex64],
    cols: usize,
    rule: &ThetaRule,
    conj_slot_sign: f64,
) -> Vec<Complex64> {
    let twice: Vec<i64> = space.basis().modes().iter().map(|m| m.twice_eig(rule.generator)).collect();
    let same_gh = std::ptr::eq(g, h);
    let same_fg = std::ptr::eq(f, g);
    let terms: Vec<Vec<Complex64>> = rule
        .angles()
        .into_par_iter()
        .map(|theta| {
            let back: Vec<Complex64> = twice.iter().map(|&t| Complex64::from_polar(1.0, -0.5 * theta * t as f64)).collect();
            let fr = rotate_rows(f, &back, cols);
            let out = if conj_slot_sign > 0.0 && same_fg && same_gh {
                cubic_columns(space, &fr, &fr, &fr, cols)
            } else {
                let gphase: Vec<Complex64> = if conj_slot_sign > 0.0 { back.clone() } else { back.iter().map(|p| p.conj()).collect() };
                let gr = rotate_rows(g, &gphase, cols);
                let hr = rotate_rows(h, &back, cols);
                cubic_columns(space, &fr, &gr, &hr, cols)
            };
            let fwd: Vec<Complex64> = back.iter().map(|p| p.conj()).collect();
            rotate_rows(&out, &fwd, cols)
        })
        .collect();
    let mut acc = zeros(twice.len() * cols);
    for t in &terms {
        acc.iter_mut().zip(t).for_each(|(a, v)| *a += v);
    }
    let w = 1.0 / rule.k as f64;
    acc.iter_mut().for_each(|a| *a *= w);
    acc
}

fn padded_rows(f: &SpectralField) -> Vec<Complex64> {
    f.z_rows(f.space().padded_n_z())
}

fn from_padded(space: &std::sync::Arc<Space>, rows: &[Complex64]) -> SpectralField {
    let coeffs = space.z_analyze(rows, space.padded_n_z());
    SpectralField::from_coeffs(space, coeffs).expect("shape fixed by space")
}

/// `F·conj(G)·H`, alias-free in `z` (zero padding) and Galerkin-exact in `x`,
/// truncated to the retained levels and z-band.
pub fn cubic_pointwise(f: &SpectralField, g: &SpectralField, h: &SpectralField) -> Result<SpectralField> {
    check3(f, g, h)?;
    let space = f.space();
    let p = space.padded_n_z();
    let fr = padded_rows(f);
    let gr = if std::ptr::eq(g, f) { fr.clone() } else { padded_rows(g) };
    let hr = if std::ptr::eq(h, f) { fr.clone() } else { padded_rows(h) };
    let out = if std::ptr::eq(g, f) && std::ptr::eq(h, f) {
        cubic_columns(space, &fr, &fr, &fr, p)
    } else {
        cubic_columns(space, &fr, &gr, &hr, p)
    };
    Ok(from_padded(space, &out))
}

/// `𝒩^{t,ε}[F,G,H] = e^{itD}(e^{−itD}F · conj(e^{−itD}G) · e^{−itD}H)`.
pub fn full_nonlinearity(f: &SpectralField, g: &SpectralField, h: &SpectralField, t: f64, eps: f64) -> Result<SpectralField> {
    full_nonlinearity_with(f, g, h, t, Flow::D { eps })
}

/// [`full_nonlinearity`] with an arbitrary diagonal flow in place of `D`.
pub fn full_nonlinearity_with(f: &SpectralField, g: &SpectralField, h: &SpectralField, t: f64, flow: Flow) -> Result<SpectralField> {
    check3(f, g, h)?;
    let table = phase_table(f.space(), -t, flow)?;
    let fb = f.apply_table(&table, false);
    let out = if std::ptr::eq(f, g) && std::ptr::eq(f, h) {
        cubic_pointwise(&fb, &fb, &fb)?
    } else {
        cubic_pointwise(&fb, &g.apply_table(&table, false), &h.apply_table(&table, false))?
    };
    Ok(out.apply_table(&table, true))
}

/// `F_av(F, G, H)` with the minimal checked rule.
pub fn f_av(f: &SpectralField, g: &SpectralField, h: &SpectralField) -> Result<SpectralField> {
    f_av_with(f, g, h, &ThetaRule::exact(f.space().basis().n_max()))
}

pub fn f_av_with(f: &SpectralField, g: &SpectralField, h: &SpectralField, rule: &ThetaRule) -> Result<SpectralField> {
    f_av_signed(f, g, h, rule, 1.0)
}

fn f_av_signed(f: &SpectralField, g: &SpectralField, h: &SpectralField, rule: &ThetaRule, sign: f64) -> Result<SpectralField> {
    check3(f, g, h)?;
    let space = f.space();
    rule.validate(space.basis().n_max())?;
    let p = space.padded_n_z();
    let fr = padded_rows(f);
    let out = if std::ptr::eq(f, g) && std::ptr::eq(f, h) {
        theta_average_columns(space, &fr, &fr, &fr, p, rule, sign)
    } else {
        let gr = padded_rows(g);
        let hr = padded_rows(h);
        theta_average_columns(space, &fr, &gr, &hr, p, rule, sign)
    };
    Ok(from_padded(space, &out))
}

/// Deliberately broken variants used to show that the invariant checks bite.
pub mod fixtures {
    use super::*;

    /// `F_av` with the conjugate slot rotated the wrong way.
    pub fn f_av_conj_sign_flipped(f: &SpectralField, g: &SpectralField, h: &SpectralField) -> Result<SpectralField> {
        f_av_signed(f, g, h, &ThetaRule::exact(f.space().basis().n_max()), -1.0)
    }
}

/// Largest `n_max` the oracle accepts without an explicit override.
pub const ORACLE_MAX_N: usize = 8;

/// `Σ_{Γ0} Π_p cubic(Π_q F, Π_r G, Π_s H)` by brute force.
pub fn resonant_sum_oracle(f: &SpectralField, g: &SpectralField, h: &SpectralField) -> Result<SpectralField> {
    resonant_sum_oracle_with(f, g, h, false)
}

pub fn resonant_sum_oracle_with(f: &SpectralField, g: &SpectralField, h: &SpectralField, allow_large: bool) -> Result<SpectralField> {
    check3(f, g, h)?;
    let space = f.space();
    let n_max = space.basis().n_max();
    if n_max > ORACLE_MAX_N && !allow_large {
        return Err(Error::OracleTooLarge { n_max });
    }
    let p = space.padded_n_z();
    let grids = |u: &SpectralField| -> Vec<Vec<Complex64>> {
        (0..=n_max).map(|n| space.x_synthesize(&padded_rows(&project_level(u, n)), p)).collect()
    };
    let (fx, gx, hx) = (grids(f), grids(g), grids(h));
    let mut out = zeros(space.n_modes() * p);
    for &[lp, q, r, s] in ResonantSet::new(n_max).gamma0() {
        let prod: Vec<Complex64> = fx[q].iter().zip(&gx[r]).zip(&hx[s]).map(|((a, b), c)| a * b.conj() * c).collect();
        let proj = space.x_analyze(&prod, p, XRule::Galerkin);
        let range = space.basis().level_range(lp);
        out[range.start * p..range.end * p].iter_mut().zip(&proj[range.start * p..range.end * p]).for_each(|(o, v)| *o += v);
    }
    Ok(from_padded(space, &out))
}

/// `𝒩₀ᵗ[F,G,H] = e^{−it∂²/2} F_av(e^{it∂²/2}F, e^{it∂²/2}G, e^{it∂²/2}H)`.
pub fn partial_resonant(f: &SpectralField, g: &SpectralField, h: &SpectralField, t: f64) -> Result<SpectralField> {
    partial_resonant_with(f, g, h, t, &ThetaRule::exact(f.space().basis().n_max()))
}

pub fn partial_resonant_with(f: &SpectralField, g: &SpectralField, h: &SpectralField, t: f64, rule: &ThetaRule) -> Result<SpectralField> {
    check3(f, g, h)?;
    // propagate(·, t, FreeZ) is e^{it∂²/2}
    let table = phase_table(f.space(), t, Flow::FreeZ)?;
    let ff = f.apply_table(&table, false);
    let out = if std::ptr::eq(f, g) && std::ptr::eq(f, h) {
        f_av_with(&ff, &ff, &ff, rule)?
    } else {
        f_av_with(&ff, &g.apply_table(&table, false), &h.apply_table(&table, false), rule)?
    };
    Ok(out.apply_table(&table, true))
}

/// `ℛ[G,G,G]`: the θ-average applied to every z-frequency slice on its own.
pub fn fr_rhs(g: &SpectralField) -> SpectralField {
    fr_rhs_with(g, &ThetaRule::exact(g.space().basis().n_max())).expect("exact rule is valid")
}

pub fn fr_rhs_with(g: &SpectralField, rule: &ThetaRule) -> Result<SpectralField> {
    let space = g.space();
    rule.validate(space.basis().n_max())?;
    let n_z = space.n_z();
    let c = g.coeffs();
    let out = theta_average_columns(space, c, c, c, n_z, rule, 1.0);
    SpectralField::from_coeffs(space, out)
}

/// Two-dimensional `F_av(u,u,u)` for a single slice of mode coefficients.
pub fn f_av_slice(space: &Space, slice: &[Complex64]) -> Result<Vec<Complex64>> {
    if slice.len() != space.n_modes() {
        return Err(Error::DimensionMismatch { expected: space.n_modes(), got: slice.len() });
    }
    let rule = ThetaRule::exact(space.basis().n_max());
    Ok(theta_average_columns(space, slice, slice, slice, 1, &rule, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Mode;
    use crate::field::{propagate, Space};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small(n_max: usize) -> Arc<Space> {
        Space::new(n_max, 2 * n_max + 2, 16, 20.0).unwrap()
    }

    #[test]
    fn gamma0_matches_brute_force() {
        for n in 0..=5 {
            let set = ResonantSet::new(n);
            let mut brute = Vec::new();
            for p in 0..=n {
                for q in 0..=n {
                    for r in 0..=n {
                        for s in 0..=n {
                            if p + r == q + s {
                                brute.push([p, q, r, s]);
                            }
                        }
                    }
                }
            }
            assert_eq!(set.gamma0(), brute.as_slice());
            let total: usize = set.omegas().map(|w| set.gamma(w).len()).sum();
            assert_eq!(total, (n + 1).pow(4));
        }
        assert_eq!(ResonantSet::new(0).gamma0(), &[[0, 0, 0, 0]]);
    }

    #[test]
    fn theta_rule_threshold() {
        assert!(ThetaRule::new(3, 7, Operator::H).is_ok());
        assert!(matches!(ThetaRule::new(3, 6, Operator::H), Err(Error::ThetaRuleTooSmall { k: 6, required: 7 })));
        assert!(ThetaRule::new(3, 9, Operator::L).is_err());
        let sp = small(2);
        let u = SpectralField::random(&sp, 1);
        assert!(f_av_with(&u, &u, &u, &ThetaRule::exact(1)).is_err());
        assert!(f_av_with(&u, &u, &u, &ThetaRule::unchecked(3, Operator::H)).is_ok());
    }

    #[test]
    fn cubic_of_positive_ground_state_is_positive() {
        let sp = small(2);
        let g = |z: f64| c((-z * z / 2.0).exp(), 0.0);
        let u = SpectralField::separable(&sp, &[(Mode::new(0, 0), c(0.8, 0.0))], g).unwrap();
        let out = cubic_pointwise(&u, &u, &u).unwrap();
        // value at z = 0 of the (0,0) coefficient row
        let row: Vec<Complex64> = out.coeffs()[..16].to_vec();
        let at0: Complex64 = row.iter().sum::<Complex64>() / 20f64.sqrt();
        assert!(at0.re > 0.0 && at0.im.abs() < 1e-14);
        let zero = SpectralField::zeros(&sp);
        assert_eq!(cubic_pointwise(&u, &zero, &u).unwrap().norm(), 0.0);
    }

    #[test]
    fn cubic_frequency_bookkeeping() {
        let sp = small(1);
        let m = Mode::new(0, 0);
        let a = SpectralField::atom(&sp, m, 3, c(1.0, 0.0)).unwrap();
        let b = SpectralField::atom(&sp, m, -2, c(1.0, 0.0)).unwrap();
        let d = SpectralField::atom(&sp, m, 1, c(1.0, 0.0)).unwrap();
        let out = cubic_pointwise(&a, &b, &d).unwrap();
        let masses = out.slice_masses();
        let target = out.k_index(3 + 2 + 1).unwrap();
        for (i, mass) in masses.iter().enumerate() {
            if i == target {
                assert!(*mass > 1e-6);
            } else {
                assert!(*mass < 1e-28, "leak at {i}: {mass}");
            }
        }
    }

    #[test]
    fn ground_state_average_is_quarter_over_pi() {
        let sp = Space::new(2, 6, 128, 32.0).unwrap();
        let amp = c(0.3, 0.4);
        let g = |z: f64| c((-z * z / 2.0).exp(), 0.0);
        let u = SpectralField::separable(&sp, &[(Mode::new(0, 0), amp)], g).unwrap();
        let out = f_av(&u, &u, &u).unwrap();
        let coeff = amp.norm_sqr() * amp / (4.0 * PI);
        let want = SpectralField::separable(&sp, &[(Mode::new(0, 0), coeff)], |z| g(z).powi(3)).unwrap();
        let err = out.max_abs_diff(&want).unwrap();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn single_level_input_stays_on_level() {
        let sp = small(3);
        let u = project_level(&SpectralField::random(&sp, 4), 2);
        let u = &u * (1.0 / u.norm());
        let out = f_av(&u, &u, &u).unwrap();
        let masses = out.level_masses();
        assert!(masses[2] > 1e-8, "{masses:?}");
        for n in [0, 1, 3] {
            assert!(masses[n] < 1e-26 * masses[2], "level {n}: {}", masses[n]);
        }
    }

    #[test]
    fn oracle_limits_and_level_arithmetic() {
        let sp = Space::new(9, 20, 2, 10.0).unwrap();
        let u = SpectralField::zeros(&sp);
        assert!(matches!(resonant_sum_oracle(&u, &u, &u), Err(Error::OracleTooLarge { n_max: 9 })));
        assert!(resonant_sum_oracle_with(&u, &u, &u, true).is_ok());

        let sp = small(3);
        let base = SpectralField::random(&sp, 9);
        let (f, g, h) = (project_level(&base, 2), project_level(&base, 0), project_level(&base, 1));
        let out = resonant_sum_oracle(&f, &g, &h).unwrap();
        let masses = out.level_masses();
        assert!(masses[3] > 0.0);
        assert_eq!(masses[0] + masses[1] + masses[2], 0.0);

        let sp0 = small(0);
        let u = SpectralField::random(&sp0, 2);
        let a = resonant_sum_oracle(&u, &u, &u).unwrap();
        let b = project_level(&cubic_pointwise(&u, &u, &u).unwrap(), 0);
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
    }

    #[test]
    fn full_nonlinearity_basics() {
        let sp = small(2);
        let u = SpectralField::random(&sp, 5);
        let v = SpectralField::random(&sp, 6);
        let w = SpectralField::random(&sp, 7);
        let a = full_nonlinearity(&u, &v, &w, 0.0, 0.3).unwrap();
        let b = cubic_pointwise(&u, &v, &w).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
        assert!(matches!(full_nonlinearity(&u, &v, &w, 1.0, 0.0), Err(Error::NonPositiveEps(_))));

        let atom = SpectralField::atom(&sp, Mode::new(1, 1), 2, c(0.5, 0.1)).unwrap();
        let n0 = full_nonlinearity(&atom, &atom, &atom, 0.0, 0.2).unwrap().norm();
        for t in [0.3, 1.7, 12.0] {
            let nt = full_nonlinearity(&atom, &atom, &atom, t, 0.2).unwrap().norm();
            assert!((nt - n0).abs() < 1e-14 * n0);
        }
    }

    #[test]
    fn mutation_breaks_oracle_agreement() {
        let sp = small(2);
        let u = SpectralField::random(&sp, 12);
        let v = SpectralField::random(&sp, 13);
        let good = f_av(&u, &v, &u).unwrap();
        let bad = fixtures::f_av_conj_sign_flipped(&u, &v, &u).unwrap();
        let oracle = resonant_sum_oracle(&u, &v, &u).unwrap();
        assert!(good.rel_diff(&oracle).unwrap() < 1e-12);
        assert!(bad.rel_diff(&oracle).unwrap() > 1e-3);
    }

    #[test]
    fn partial_resonant_basics() {
        let sp = small(2);
        let u = SpectralField::random(&sp, 21);
        let a = partial_resonant(&u, &u, &u, 0.0).unwrap();
        assert!(a.max_abs_diff(&f_av(&u, &u, &u).unwrap()).unwrap() < 1e-15);
        let flat = u.slice_field(u.k_index(0).unwrap());
        let p0 = partial_resonant(&flat, &flat, &flat, 0.0).unwrap();
        let p1 = partial_resonant(&flat, &flat, &flat, 3.3).unwrap();
        assert!(p0.max_abs_diff(&p1).unwrap() < 1e-15);
    }

    #[test]
    fn fr_rhs_is_slice_local() {
        let sp = small(2);
        let u = SpectralField::random(&sp, 31);
        let idx = 9;
        let one = u.slice_field(idx);
        let out = fr_rhs(&one);
        for (i, m) in out.slice_masses().iter().enumerate() {
            if i != idx {
                assert_eq!(*m, 0.0);
            }
        }
        let whole = fr_rhs(&u);
        assert_eq!(whole.slice(idx), out.slice(idx));
        assert_eq!(f_av_slice(&sp, &u.slice(idx)).unwrap(), whole.slice(idx));
    }

    fn random_triplet(sp: &Arc<Space>, seed: u64) -> (SpectralField, SpectralField, SpectralField) {
        (SpectralField::random(sp, seed), SpectralField::random(sp, seed.wrapping_add(1)), SpectralField::random(sp, seed.wrapping_add(2)))
    }

    #[test]
    fn late_time_partial_form_tends_to_logarithmic_fr() {
        // Stationary phase: t·𝒩₀ᵗ[W] → κ·ℛ[W] with κ = L_z/(2π).
        let sp = Space::new(1, 4, 256, 256.0).unwrap();
        let w = SpectralField::separable(&sp, &[(Mode::new(0, 0), c(1.0, 0.0)), (Mode::new(1, 0), c(0.3, 0.2))], |z| {
            c((-z * z / 8.0).exp(), 0.0) * Complex64::from_polar(1.0, 0.3 * z)
        })
        .unwrap();
        let kappa = sp.zgrid().l_z() / (2.0 * PI);
        let target = fr_rhs(&w).scaled(c(kappa, 0.0));
        let errs: Vec<f64> = [12.5, 25.0, 50.0]
            .iter()
            .map(|&t| partial_resonant(&w, &w, &w, t).unwrap().scaled(c(t, 0.0)).rel_diff(&target).unwrap())
            .collect();
        // error decays like 1/t
        assert!(errs[0] < 0.4, "{errs:?}");
        assert!(errs[1] < 0.6 * errs[0] && errs[2] < 0.6 * errs[1], "{errs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn average_equals_oracle(seed in any::<u64>(), n in 0usize..=4) {
            let sp = small(n);
            let (f, g, h) = random_triplet(&sp, seed);
            let a = f_av(&f, &g, &h).unwrap();
            let b = resonant_sum_oracle(&f, &g, &h).unwrap();
            prop_assert!(a.rel_diff(&b).unwrap() < 1e-12);
        }

        #[test]
        fn generators_h_and_h0_agree(seed in any::<u64>()) {
            let sp = small(3);
            let (f, g, h) = random_triplet(&sp, seed);
            let a = f_av_with(&f, &g, &h, &ThetaRule::exact(3)).unwrap();
            let b = f_av_with(&f, &g, &h, &ThetaRule::exact(3).with_generator(Operator::H0)).unwrap();
            prop_assert!(a.rel_diff(&b).unwrap() < 1e-12);
        }

        #[test]
        fn average_symmetries(seed in any::<u64>(), theta in -7.0f64..7.0) {
            let sp = small(3);
            let u = SpectralField::random(&sp, seed);
            let fu = f_av(&u, &u, &u).unwrap();
            // mass and level energy brackets
            prop_assert!(fu.inner(&u).unwrap().im.abs() < 1e-14);
            let mut bracket = 0.0;
            for n in 0..=3 {
                let lam = 0.5 * (n as f64 + 1.0);
                bracket += lam * 2.0 * project_level(&fu, n).inner(&project_level(&u, n)).unwrap().im;
            }
            prop_assert!(bracket.abs() < 1e-14);
            // H- and L-equivariance
            for flow in [Flow::H, Flow::L] {
                let ru = propagate(&u, theta, flow).unwrap();
                let lhs = f_av(&ru, &ru, &ru).unwrap();
                let rhs = propagate(&fu, theta, flow).unwrap();
                prop_assert!(lhs.rel_diff(&rhs).unwrap() < 1e-10);
            }
        }

        #[test]
        fn d_and_d0_give_the_same_nonlinearity(seed in any::<u64>(), t in -2.0f64..2.0) {
            let sp = small(3);
            let (f, g, h) = random_triplet(&sp, seed);
            let eps = 0.3;
            let a = full_nonlinearity_with(&f, &g, &h, t, Flow::D { eps }).unwrap();
            let b = full_nonlinearity_with(&f, &g, &h, t, Flow::D0 { eps }).unwrap();
            prop_assert!(a.rel_diff(&b).unwrap() < 1e-10);
        }

        #[test]
        fn resonant_part_of_full_form_is_partial_form(seed in any::<u64>(), t in -2.0f64..2.0) {
            let sp = small(2);
            let (f, g, h) = random_triplet(&sp, seed);
            let eps = 0.35;
            let mut filtered = SpectralField::zeros(&sp);
            for &[p, q, r, s] in ResonantSet::new(2).gamma0() {
                let term = full_nonlinearity(&project_level(&f, q), &project_level(&g, r), &project_level(&h, s), t, eps).unwrap();
                filtered.axpy(c(1.0, 0.0), &project_level(&term, p));
            }
            let partial = partial_resonant(&f, &g, &h, t).unwrap();
            prop_assert!(filtered.rel_diff(&partial).unwrap() < 1e-10);
        }

        #[test]
        fn fr_rhs_conserves_mass_per_slice(seed in any::<u64>()) {
            let sp = small(2);
            let u = SpectralField::random(&sp, seed);
            let r = fr_rhs(&u);
            for idx in 0..sp.n_z() {
                let s: Complex64 = r.slice(idx).iter().zip(u.slice(idx)).map(|(a, b)| a * b.conj()).sum();
                prop_assert!(s.im.abs() < 1e-14);
            }
        }
    }
}
