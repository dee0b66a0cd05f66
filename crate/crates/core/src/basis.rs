//! Joint eigenbasis of the Landau Hamiltonian `H = H0 + L` on the plane.
//!
//! `H0 = -Δ/2 + |x|²/8` is an isotropic oscillator of frequency `1/2` and
//! `L = -(i/2) x^⊥·∇` is half the angular derivative. With the complex
//! coordinate `w = (x1 + i x2)/√2` the joint eigenfunctions are the
//! Laguerre–Gauss (complex Hermite) modes
//!
//! ```text
//! h_{n1,n2}(x) = c_{n1,n2} · H_{n1,n2}(w, w̄) · e^{-|x|²/4},
//! ```
//!
//! with angular dependence `e^{i(n1-n2)φ}`, `H0`-eigenvalue `(n1+n2+1)/2`,
//! `L`-eigenvalue `(n1-n2)/2` and `H`-eigenvalue `n1 + 1/2`. The ground state is
//! positive and the raising recurrences carry no extra phase.
//!
//! All length scales follow from the oscillator frequency `1/2`: basis
//! functions decay like `e^{-r²/4}`, so Gram integrands carry `e^{-r²/2}` and
//! products of four basis functions carry `e^{-r²}`. The tensor nodes are the
//! plain Gauss–Hermite nodes for weight `e^{-x²}` (quartic-exact Galerkin
//! rule); a second, interpolatory weight set on the same nodes is exact for
//! the Gram integrands. Normalization constants are fixed by the Gram
//! quadrature, not by the closed form.

use num_complex::Complex64;

use crate::dense::{mat_mul, zeros};
use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;

/// Landau index pair `(n1, n2)`; `n1 + n2` is the `H0` level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub n1: usize,
    pub n2: usize,
}

impl Mode {
    pub const fn new(n1: usize, n2: usize) -> Self {
        Mode { n1, n2 }
    }

    pub fn level(self) -> usize {
        self.n1 + self.n2
    }

    /// Twice the eigenvalue of `op`; always an integer.
    pub fn twice_eig(self, op: Operator) -> i64 {
        let (n1, n2) = (self.n1 as i64, self.n2 as i64);
        match op {
            Operator::H => 2 * n1 + 1,
            Operator::H0 => n1 + n2 + 1,
            Operator::L => n1 - n2,
        }
    }

    pub fn eig(self, op: Operator) -> f64 {
        self.twice_eig(op) as f64 / 2.0
    }

    pub fn eig_h(self) -> f64 {
        self.eig(Operator::H)
    }

    pub fn eig_h0(self) -> f64 {
        self.eig(Operator::H0)
    }

    pub fn eig_l(self) -> f64 {
        self.eig(Operator::L)
    }
}

/// Diagonal operators of the Landau basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    H,
    H0,
    L,
}

/// Immutable tables for one `(n_max, m_quad)` truncation.
#[derive(Debug)]
pub struct BasisWorkspace {
    n_max: usize,
    m_quad: usize,
    rule: GaussHermite,
    nodes: Vec<[f64; 2]>,
    quad_weights: Vec<f64>,
    linear_weights: Vec<f64>,
    modes: Vec<Mode>,
    level_start: Vec<usize>,
    norm_scale: Vec<f64>,
    synthesis: Vec<Complex64>,
    analysis_linear: Vec<Complex64>,
    analysis_galerkin: Vec<Complex64>,
}

/// Smallest node count per axis accepted for a given truncation.
pub fn min_quadrature_nodes(n_max: usize) -> usize {
    2 * n_max + 2
}

pub fn build_basis(n_max: usize, m_quad: usize) -> Result<BasisWorkspace> {
    BasisWorkspace::new(n_max, m_quad)
}

impl BasisWorkspace {
    pub fn new(n_max: usize, m_quad: usize) -> Result<Self> {
        let required = min_quadrature_nodes(n_max);
        if m_quad < required {
            return Err(Error::QuadratureTooCoarse { n_max, m_quad, required });
        }
        let rule = GaussHermite::new(m_quad);

        let mut nodes = Vec::with_capacity(m_quad * m_quad);
        let mut quad_weights = Vec::with_capacity(m_quad * m_quad);
        let mut linear_weights = Vec::with_capacity(m_quad * m_quad);
        for i in 0..m_quad {
            for j in 0..m_quad {
                nodes.push([rule.nodes[i], rule.nodes[j]]);
                quad_weights.push(rule.galerkin[i] * rule.galerkin[j]);
                linear_weights.push(rule.linear[i] * rule.linear[j]);
            }
        }

        let mut modes = Vec::new();
        let mut level_start = Vec::with_capacity(n_max + 2);
        for n in 0..=n_max {
            level_start.push(modes.len());
            for n1 in 0..=n {
                modes.push(Mode::new(n1, n - n1));
            }
        }
        level_start.push(modes.len());

        let n_modes = modes.len();
        let n_nodes = nodes.len();
        let mut synthesis = zeros(n_modes * n_nodes);
        for (j, x) in nodes.iter().enumerate() {
            let vals = raw_mode_values(n_max, *x);
            for a in 0..n_modes {
                synthesis[a * n_nodes + j] = vals[a];
            }
        }

        let mut norm_scale = Vec::with_capacity(n_modes);
        for a in 0..n_modes {
            let row = &mut synthesis[a * n_nodes..(a + 1) * n_nodes];
            let norm2: f64 = row.iter().zip(&linear_weights).map(|(h, w)| w * h.norm_sqr()).sum();
            let scale = 1.0 / norm2.sqrt();
            row.iter_mut().for_each(|h| *h *= scale);
            norm_scale.push(scale);
        }

        let weighted = |weights: &[f64]| {
            let mut out = zeros(n_modes * n_nodes);
            for a in 0..n_modes {
                for j in 0..n_nodes {
                    out[a * n_nodes + j] = synthesis[a * n_nodes + j].conj() * weights[j];
                }
            }
            out
        };
        let analysis_linear = weighted(&linear_weights);
        let analysis_galerkin = weighted(&quad_weights);

        Ok(BasisWorkspace {
            n_max,
            m_quad,
            rule,
            nodes,
            quad_weights,
            linear_weights,
            modes,
            level_start,
            norm_scale,
            synthesis,
            analysis_linear,
            analysis_galerkin,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn m_quad(&self) -> usize {
        self.m_quad
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// One-dimensional node coordinates.
    pub fn axis_nodes(&self) -> &[f64] {
        &self.rule.nodes
    }

    /// Quartic-exact weights (Gaussian factored in): `∫ f ≈ Σ w_j f(x_j)`
    /// exactly for `f = p·e^{-|x|²}`.
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Gram-exact weights: exact for `f = p·e^{-|x|²/2}`.
    pub fn linear_weights(&self) -> &[f64] {
        &self.linear_weights
    }

    /// Row-major `#modes × #nodes` table of `h_a(x_j)`.
    pub fn synthesis_matrix(&self) -> &[Complex64] {
        &self.synthesis
    }

    pub(crate) fn analysis_linear(&self) -> &[Complex64] {
        &self.analysis_linear
    }

    pub(crate) fn analysis_galerkin(&self) -> &[Complex64] {
        &self.analysis_galerkin
    }

    pub fn mode_index(&self, mode: Mode) -> Option<usize> {
        (mode.level() <= self.n_max).then(|| self.level_start[mode.level()] + mode.n1)
    }

    /// Index range of the modes on level `n` (empty when `n > n_max`).
    pub fn level_range(&self, n: usize) -> std::ops::Range<usize> {
        if n > self.n_max {
            return 0..0;
        }
        self.level_start[n]..self.level_start[n + 1]
    }

    /// `e^{iθ·eig}` for the requested operator.
    pub fn eigen_phase(&self, mode: Mode, theta: f64, op: Operator) -> Result<Complex64> {
        if self.mode_index(mode).is_none() {
            return Err(Error::UnknownMode { n1: mode.n1, n2: mode.n2 });
        }
        Ok(Complex64::from_polar(1.0, theta * mode.eig(op)))
    }

    /// Largest `|⟨h_a, h_b⟩ - δ_ab|` under the Gram-exact rule.
    pub fn gram_deviation(&self) -> f64 {
        let n_nodes = self.n_nodes();
        let n_modes = self.n_modes();
        let mut worst: f64 = 0.0;
        for a in 0..n_modes {
            let ra = &self.analysis_linear[a * n_nodes..(a + 1) * n_nodes];
            for b in a..n_modes {
                let rb = &self.synthesis[b * n_nodes..(b + 1) * n_nodes];
                let g: Complex64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }

    pub fn synthesize_x(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.n_modes(), coeffs.len())?;
        let n_nodes = self.n_nodes();
        let mut out = zeros(n_nodes);
        for (a, &c) in coeffs.iter().enumerate() {
            let row = &self.synthesis[a * n_nodes..(a + 1) * n_nodes];
            for (o, h) in out.iter_mut().zip(row) {
                *o += c * h;
            }
        }
        Ok(out)
    }

    /// Inverse of [`synthesize_x`](Self::synthesize_x) on the truncated span.
    pub fn analyze_x(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.n_nodes(), values.len())?;
        Ok(mat_mul(&self.analysis_linear, self.n_modes(), self.n_nodes(), values, 1))
    }

    /// L² projection of a product of three span functions (exact), used for
    /// the Galerkin closure of cubic terms.
    pub fn galerkin_project_x(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.n_nodes(), values.len())?;
        Ok(mat_mul(&self.analysis_galerkin, self.n_modes(), self.n_nodes(), values, 1))
    }

    /// Basis values `h_a(x)` at an arbitrary point, consistent with the
    /// normalization of the synthesis table.
    pub fn mode_values_at(&self, x: [f64; 2]) -> Vec<Complex64> {
        let mut vals = raw_mode_values(self.n_max, x);
        vals.iter_mut().zip(&self.norm_scale).for_each(|(v, s)| *v *= s);
        vals
    }

    /// Evaluates the expansion with coefficients `coeffs` at arbitrary points.
    pub fn synthesize_at(&self, coeffs: &[Complex64], points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        check_len(self.n_modes(), coeffs.len())?;
        Ok(points.iter().map(|&p| self.mode_values_at(p).iter().zip(coeffs).map(|(h, c)| h * c).sum()).collect())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Closed-form mode values (before numerical normalization) in mode order.
fn raw_mode_values(n_max: usize, x: [f64; 2]) -> Vec<Complex64> {
    let w = Complex64::new(x[0], x[1]) / std::f64::consts::SQRT_2;
    let wbar = w.conj();
    let dim = n_max + 1;
    // table[p * dim + q] = H_{p,q}(w, w̄)/sqrt(p! q!)
    let mut table = zeros(dim * dim);
    table[0] = Complex64::new(1.0, 0.0);
    for p in 1..=n_max {
        table[p * dim] = w * table[(p - 1) * dim] / (p as f64).sqrt();
    }
    for q in 0..n_max {
        for p in 0..=(n_max - q - 1) {
            let mut v = wbar * table[p * dim + q];
            if p > 0 {
                v -= (p as f64).sqrt() * table[(p - 1) * dim + q];
            }
            table[p * dim + q + 1] = v / ((q + 1) as f64).sqrt();
        }
    }
    let envelope = (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut out = Vec::with_capacity((n_max + 1) * (n_max + 2) / 2);
    for n in 0..=n_max {
        for n1 in 0..=n {
            out.push(table[n1 * dim + (n - n1)] * envelope);
        }
    }
    out
}
