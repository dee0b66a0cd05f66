//! Mixed representation: Landau modes in `x`, Fourier modes in `z`.
//!
//! A [`SpectralField`] stores `c[a][k]`, the coefficient of `h_a(x)·e_k(z)`
//! with `e_k = l_z^{-1/2} e^{iζ_k z}`. Both families are orthonormal, so the
//! squared coefficient norm is the `L²(ℝ²×box)` mass. All diagonal flows act
//! by exact phases on these coefficients.

mod lens;
mod snapshot;
mod zgrid;

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisWorkspace, Mode, Operator};
use crate::dense::{mat_mul, zeros};
use crate::error::{Error, Result};

pub use lens::{lens_transform_check, LensGrid};
pub use snapshot::{load_snapshot, read_snapshot, read_snapshot_into, save_snapshot, write_snapshot, SNAPSHOT_MAGIC};
pub use zgrid::ZGrid;
pub(crate) use zgrid::ZTransforms;

/// Shared discretization: basis tables, z-grid and FFT plans.
pub struct Space {
    basis: BasisWorkspace,
    zgrid: ZGrid,
    dealias: usize,
    transforms: ZTransforms,
    synthesis_t: Vec<Complex64>,
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Space")
            .field("n_max", &self.basis.n_max())
            .field("m_quad", &self.basis.m_quad())
            .field("n_z", &self.zgrid.n_z())
            .field("l_z", &self.zgrid.l_z())
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl Space {
    /// Space with the default 2x zero padding in `z`.
    pub fn new(n_max: usize, m_quad: usize, n_z: usize, l_z: f64) -> Result<Arc<Space>> {
        Self::with_dealias(n_max, m_quad, n_z, l_z, 2)
    }

    pub fn with_dealias(n_max: usize, m_quad: usize, n_z: usize, l_z: f64, dealias: usize) -> Result<Arc<Space>> {
        if dealias == 0 || !dealias.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("dealias factor must be a power of two, got {dealias}")));
        }
        let basis = BasisWorkspace::new(n_max, m_quad)?;
        let zgrid = ZGrid::new(n_z, l_z)?;
        let mut sizes = vec![n_z];
        if dealias > 1 {
            sizes.push(n_z * dealias);
        }
        let transforms = ZTransforms::new(zgrid, &sizes);
        let (nm, nn) = (basis.n_modes(), basis.n_nodes());
        let s = basis.synthesis_matrix();
        let mut synthesis_t = zeros(nm * nn);
        for a in 0..nm {
            for j in 0..nn {
                synthesis_t[j * nm + a] = s[a * nn + j];
            }
        }
        Ok(Arc::new(Space { basis, zgrid, dealias, transforms, synthesis_t }))
    }

    pub fn basis(&self) -> &BasisWorkspace {
        &self.basis
    }

    pub fn zgrid(&self) -> &ZGrid {
        &self.zgrid
    }

    pub fn dealias(&self) -> usize {
        self.dealias
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn n_z(&self) -> usize {
        self.zgrid.n_z()
    }

    /// Number of z samples on the dealiased grid.
    pub fn padded_n_z(&self) -> usize {
        self.zgrid.n_z() * self.dealias
    }

    /// Two spaces are interchangeable when they are rebuilt from the same parameters.
    pub fn same_as(&self, other: &Space) -> bool {
        std::ptr::eq(self, other)
            || (self.basis.n_max() == other.basis.n_max()
                && self.basis.m_quad() == other.basis.m_quad()
                && self.zgrid == other.zgrid
                && self.dealias == other.dealias)
    }

    /// Mode rows (`n_modes × n_z` coefficients) to mode rows sampled at `p` z-points.
    pub(crate) fn z_synthesize(&self, coeffs: &[Complex64], p: usize) -> Vec<Complex64> {
        self.transforms.synthesize_rows(coeffs, p)
    }

    pub(crate) fn z_analyze(&self, values: &[Complex64], p: usize) -> Vec<Complex64> {
        self.transforms.analyze_rows(values, p)
    }

    /// `(n_modes × p)` to `(n_nodes × p)`.
    pub(crate) fn x_synthesize(&self, rows: &[Complex64], p: usize) -> Vec<Complex64> {
        mat_mul(&self.synthesis_t, self.basis.n_nodes(), self.n_modes(), rows, p)
    }

    pub(crate) fn x_analyze(&self, values: &[Complex64], p: usize, rule: XRule) -> Vec<Complex64> {
        let table = match rule {
            XRule::Linear => self.basis.analysis_linear(),
            XRule::Galerkin => self.basis.analysis_galerkin(),
        };
        mat_mul(table, self.n_modes(), self.basis.n_nodes(), values, p)
    }
}

/// Which node weights to use when returning from the x-grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum XRule {
    /// Exact inverse of synthesis on the span.
    Linear,
    /// Exact projection of cubic products of span functions.
    Galerkin,
}

/// Coefficients `c[a][k]`, row-major in (mode, z-frequency).
#[derive(Clone)]
pub struct SpectralField {
    space: Arc<Space>,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField").field("space", &self.space).field("norm", &self.norm()).finish()
    }
}

impl SpectralField {
    pub fn zeros(space: &Arc<Space>) -> Self {
        SpectralField { space: space.clone(), coeffs: zeros(space.n_modes() * space.n_z()) }
    }

    pub fn from_coeffs(space: &Arc<Space>, coeffs: Vec<Complex64>) -> Result<Self> {
        let expected = space.n_modes() * space.n_z();
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: coeffs.len() });
        }
        Ok(SpectralField { space: space.clone(), coeffs })
    }

    /// One mode times one plane wave; `k` is the signed wavenumber.
    pub fn atom(space: &Arc<Space>, mode: Mode, k: i64, amplitude: Complex64) -> Result<Self> {
        let mut f = Self::zeros(space);
        let idx = f.k_index(k)?;
        let a = space.basis.mode_index(mode).ok_or(Error::UnknownMode { n1: mode.n1, n2: mode.n2 })?;
        f.coeffs[a * space.n_z() + idx] = amplitude;
        Ok(f)
    }

    /// `Σ c_a h_a(x) · g(z)` with `g` sampled on the z-grid and band-truncated.
    pub fn separable(space: &Arc<Space>, x_part: &[(Mode, Complex64)], g: impl Fn(f64) -> Complex64) -> Result<Self> {
        let n_z = space.n_z();
        let samples: Vec<Complex64> = space.zgrid.points(n_z).into_iter().map(g).collect();
        let row = space.z_analyze(&samples, n_z);
        let mut f = Self::zeros(space);
        for &(mode, c) in x_part {
            let a = space.basis.mode_index(mode).ok_or(Error::UnknownMode { n1: mode.n1, n2: mode.n2 })?;
            for (dst, r) in f.coeffs[a * n_z..(a + 1) * n_z].iter_mut().zip(&row) {
                *dst += c * r;
            }
        }
        Ok(f)
    }

    /// Seeded smooth random field of unit mass: on every mode a Gaussian
    /// packet of unit width with random center in `[-1, 1]`, random drift in
    /// `[-1, 1]` and random amplitude damped by `0.6^level`. The box must be
    /// long enough to hold the packets (`l_z ≥ 16` keeps edge mass below 1e-12).
    pub fn random(space: &Arc<Space>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_z = space.n_z();
        let zg = space.zgrid;
        let pref = (2.0 * std::f64::consts::PI / zg.l_z()).sqrt();
        let mut f = Self::zeros(space);
        for (a, mode) in space.basis.modes().iter().enumerate() {
            let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.6f64.powi(mode.level() as i32);
            let center: f64 = rng.gen_range(-1.0..1.0);
            let drift: f64 = rng.gen_range(-1.0..1.0);
            for idx in 0..n_z {
                let zeta = zg.zeta(idx);
                let d = zeta - drift;
                f.coeffs[a * n_z + idx] = amp * pref * (-0.5 * d * d).exp() * Complex64::from_polar(1.0, -d * center);
            }
        }
        let norm = f.norm();
        if norm > 0.0 {
            f.scale_in_place(Complex64::new(1.0 / norm, 0.0));
        }
        f
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Storage index of signed wavenumber `k`.
    pub fn k_index(&self, k: i64) -> Result<usize> {
        let half = (self.space.n_z() / 2) as i64;
        if k < -half || k >= half {
            return Err(Error::InvalidParameter(format!("wavenumber {k} outside [-{half}, {half})")));
        }
        Ok((k + half) as usize)
    }

    pub fn get(&self, mode: Mode, k: i64) -> Result<Complex64> {
        let a = self.space.basis.mode_index(mode).ok_or(Error::UnknownMode { n1: mode.n1, n2: mode.n2 })?;
        Ok(self.coeffs[a * self.space.n_z() + self.k_index(k)?])
    }

    /// Two-dimensional coefficients (one per mode) at storage index `idx`.
    pub fn slice(&self, idx: usize) -> Vec<Complex64> {
        let n_z = self.space.n_z();
        (0..self.space.n_modes()).map(|a| self.coeffs[a * n_z + idx]).collect()
    }

    pub fn set_slice(&mut self, idx: usize, values: &[Complex64]) -> Result<()> {
        let n_modes = self.space.n_modes();
        if values.len() != n_modes {
            return Err(Error::DimensionMismatch { expected: n_modes, got: values.len() });
        }
        let n_z = self.space.n_z();
        for (a, v) in values.iter().enumerate() {
            self.coeffs[a * n_z + idx] = *v;
        }
        Ok(())
    }

    /// Field restricted to one z-frequency.
    pub fn slice_field(&self, idx: usize) -> Self {
        let mut out = Self::zeros(&self.space);
        out.set_slice(idx, &self.slice(idx)).expect("same space");
        out
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩ = ∫ self · conj(other)`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_space(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum())
    }

    /// Mass carried by each `H0` level.
    pub fn level_masses(&self) -> Vec<f64> {
        let basis = self.space.basis();
        let n_z = self.space.n_z();
        (0..=basis.n_max())
            .map(|n| {
                let r = basis.level_range(n);
                self.coeffs[r.start * n_z..r.end * n_z].iter().map(|c| c.norm_sqr()).sum()
            })
            .collect()
    }

    /// Mass carried by each z-frequency.
    pub fn slice_masses(&self) -> Vec<f64> {
        let n_z = self.space.n_z();
        let mut out = vec![0.0; n_z];
        for row in self.coeffs.chunks(n_z) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c.norm_sqr();
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_space(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// `‖self - other‖ / max(‖other‖, tiny)`.
    pub fn rel_diff(&self, other: &Self) -> Result<f64> {
        self.check_space(other)?;
        let num: f64 = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok(num.sqrt() / other.norm().max(f64::MIN_POSITIVE))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale_in_place(&mut self, a: Complex64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(a);
        out
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: Complex64, x: &Self) {
        assert!(self.space.same_as(&x.space), "fields live on different discretizations");
        self.coeffs.iter_mut().zip(&x.coeffs).for_each(|(s, v)| *s += a * v);
    }

    pub fn check_space(&self, other: &Self) -> Result<()> {
        if self.space.same_as(&other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Multiplies every coefficient by the matching entry of a phase table.
    pub(crate) fn apply_table(&self, table: &[Complex64], conjugate: bool) -> Self {
        let coeffs = if conjugate {
            self.coeffs.iter().zip(table).map(|(c, p)| c * p.conj()).collect()
        } else {
            self.coeffs.iter().zip(table).map(|(c, p)| c * p).collect()
        };
        SpectralField { space: self.space.clone(), coeffs }
    }

    /// Samples on the quadrature-node × z-grid, `p = n_z`.
    pub fn to_grid(&self) -> GridField {
        self.to_grid_sized(self.space.n_z())
    }

    /// Samples on the dealiased z-grid.
    pub fn to_grid_padded(&self) -> GridField {
        self.to_grid_sized(self.space.padded_n_z())
    }

    fn to_grid_sized(&self, p: usize) -> GridField {
        let rows = self.space.z_synthesize(&self.coeffs, p);
        GridField { space: self.space.clone(), p, values: self.space.x_synthesize(&rows, p) }
    }

    /// `(n_modes × n_z)` values of `Σ_k c_{a,k} e_k(z_j)` on a grid of `p` points.
    pub(crate) fn z_rows(&self, p: usize) -> Vec<Complex64> {
        self.space.z_synthesize(&self.coeffs, p)
    }
}

impl<'a> Add for &'a SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &'a SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), rhs);
        out
    }
}

impl<'a> Sub for &'a SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &'a SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), rhs);
        out
    }
}

impl Mul<Complex64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: Complex64) -> SpectralField {
        self.scaled(rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(Complex64::new(rhs, 0.0))
    }
}

/// Samples `v[node][j]` on the tensor nodes times `p` equispaced z-points.
#[derive(Clone)]
pub struct GridField {
    space: Arc<Space>,
    p: usize,
    values: Vec<Complex64>,
}

impl fmt::Debug for GridField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridField").field("space", &self.space).field("n_z_points", &self.p).finish()
    }
}

impl GridField {
    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn n_z_points(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Back to coefficients; exact inverse of [`SpectralField::to_grid`] on the
    /// span, band truncation in `z` otherwise.
    pub fn to_spectral(&self) -> SpectralField {
        self.project(XRule::Linear)
    }

    pub(crate) fn project(&self, rule: XRule) -> SpectralField {
        let rows = self.space.x_analyze(&self.values, self.p, rule);
        SpectralField { space: self.space.clone(), coeffs: self.space.z_analyze(&rows, self.p) }
    }

    /// `∫|v|²` by the Gram-exact x rule and the trapezoidal z rule.
    pub fn mass(&self) -> f64 {
        let w = self.space.basis.linear_weights();
        let dz = self.space.zgrid.l_z() / self.p as f64;
        self.values.chunks(self.p).zip(w).map(|(row, wj)| wj * row.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum::<f64>() * dz
    }
}

pub fn to_grid(f: &SpectralField) -> GridField {
    f.to_grid()
}

pub fn to_spectral(g: &GridField) -> SpectralField {
    g.to_spectral()
}

/// Diagonal generators; [`propagate`] applies `e^{iτ·op}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    /// `H/ε² − ½∂_z²`, symbol `(n1+½)/ε² + ζ²/2`.
    D {
        eps: f64,
    },
    /// `H0/ε² − ½∂_z²`.
    D0 {
        eps: f64,
    },
    HOverEps2 {
        eps: f64,
    },
    H0OverEps2 {
        eps: f64,
    },
    /// `½∂_z²`, symbol `−ζ²/2`, so that `propagate(·, τ, FreeZ) = e^{iτ∂_z²/2}`.
    FreeZ,
    H,
    H0,
    L,
}

impl Flow {
    fn eps(&self) -> Option<f64> {
        match *self {
            Flow::D { eps } | Flow::D0 { eps } | Flow::HOverEps2 { eps } | Flow::H0OverEps2 { eps } => Some(eps),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.eps() {
            Some(e) if !(e > 0.0 && e.is_finite()) => Err(Error::NonPositiveEps(e)),
            _ => Ok(()),
        }
    }

    /// Real symbol on mode `mode` at frequency `zeta`.
    pub fn symbol(&self, mode: Mode, zeta: f64) -> f64 {
        let half_z2 = 0.5 * zeta * zeta;
        match *self {
            Flow::D { eps } => mode.eig_h() / (eps * eps) + half_z2,
            Flow::D0 { eps } => mode.eig_h0() / (eps * eps) + half_z2,
            Flow::HOverEps2 { eps } => mode.eig_h() / (eps * eps),
            Flow::H0OverEps2 { eps } => mode.eig_h0() / (eps * eps),
            Flow::FreeZ => -half_z2,
            Flow::H => mode.eig(Operator::H),
            Flow::H0 => mode.eig(Operator::H0),
            Flow::L => mode.eig(Operator::L),
        }
    }
}

/// Table of `e^{iτ·symbol}` in coefficient layout.
pub(crate) fn phase_table(space: &Space, tau: f64, flow: Flow) -> Result<Vec<Complex64>> {
    flow.validate()?;
    let zetas = space.zgrid.zetas();
    let mut out = Vec::with_capacity(space.n_modes() * zetas.len());
    for &mode in space.basis.modes() {
        for &zeta in &zetas {
            out.push(Complex64::from_polar(1.0, tau * flow.symbol(mode, zeta)));
        }
    }
    Ok(out)
}

/// `e^{iτ·op} F`.
pub fn propagate(f: &SpectralField, tau: f64, flow: Flow) -> Result<SpectralField> {
    Ok(f.apply_table(&phase_table(&f.space, tau, flow)?, false))
}

/// `Π_n F`; zero when `n > n_max`.
pub fn project_level(f: &SpectralField, n: usize) -> SpectralField {
    let n_z = f.space.n_z();
    let r = f.space.basis.level_range(n);
    let mut out = SpectralField::zeros(&f.space);
    out.coeffs[r.start * n_z..r.end * n_z].copy_from_slice(&f.coeffs[r.start * n_z..r.end * n_z]);
    out
}

/// `zF`, computed on the dealiased z-grid and band-truncated.
pub fn multiply_z(f: &SpectralField) -> SpectralField {
    let p = f.space.padded_n_z();
    let mut rows = f.z_rows(p);
    let zs = f.space.zgrid.points(p);
    for row in rows.chunks_mut(p) {
        row.iter_mut().zip(&zs).for_each(|(v, z)| *v *= z);
    }
    SpectralField { space: f.space.clone(), coeffs: f.space.z_analyze(&rows, p) }
}

/// [`multiply_z`] together with the margin diagnostics that bound its error.
pub fn multiply_z_checked(f: &SpectralField) -> (SpectralField, Margins) {
    (multiply_z(f), margins(f))
}

/// `(1 − ∂_z²)^order F`, the Fourier multiplier `(1+ζ²)^order`.
pub fn apply_z_bessel(f: &SpectralField, order: u32) -> SpectralField {
    let n_z = f.space.n_z();
    let mult: Vec<f64> = f.space.zgrid.zetas().iter().map(|z| (1.0 + z * z).powi(order as i32)).collect();
    let mut out = f.clone();
    for row in out.coeffs.chunks_mut(n_z) {
        row.iter_mut().zip(&mult).for_each(|(c, m)| *c *= m);
    }
    out
}

/// Fractions of mass near the edges of the z-band and of the z-box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    /// Mass fraction with `|k| ≥ 3n_z/8`.
    pub band_edge: f64,
    /// Mass fraction with `|z| ≥ 3l_z/8`.
    pub box_edge: f64,
}

impl Margins {
    /// Default tolerance for trusting `z`-multiplication.
    pub const THRESHOLD: f64 = 1e-6;

    pub fn ok(&self) -> bool {
        self.band_edge <= Self::THRESHOLD && self.box_edge <= Self::THRESHOLD
    }
}

pub fn margins(f: &SpectralField) -> Margins {
    let total = f.norm_sqr();
    if total == 0.0 {
        return Margins { band_edge: 0.0, box_edge: 0.0 };
    }
    let zg = f.space.zgrid;
    let n_z = zg.n_z();
    let cut = (3 * n_z / 8) as i64;
    let band: f64 = f.slice_masses().iter().enumerate().filter(|(i, _)| zg.wavenumber(*i).abs() >= cut).map(|(_, m)| m).sum();
    let rows = f.z_rows(n_z);
    let zs = zg.points(n_z);
    let mut edge = 0.0;
    for row in rows.chunks(n_z) {
        for (v, z) in row.iter().zip(&zs) {
            if z.abs() >= 0.375 * zg.l_z() {
                edge += v.norm_sqr();
            }
        }
    }
    Margins { band_edge: band / total, box_edge: edge * zg.dz() / total }
}
