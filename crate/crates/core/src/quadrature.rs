//! One-dimensional Gauss–Hermite rules with the Gaussian factored into the weights.
//!
//! Nodes are the roots of the degree-`m` Hermite polynomial (weight `e^{-x^2}`).
//! Two weight sets are built on the same nodes:
//!
//! * `galerkin`: `sum_j w_j f(x_j) = ∫ f` exactly when `f = p·e^{-x^2}` with `deg p ≤ 2m-1`.
//! * `linear`: `sum_j w_j f(x_j) = ∫ f` exactly when `f = p·e^{-x^2/2}` with `deg p ≤ m-1`.
//!
//! Both are computed from normalized Hermite functions, so nothing overflows
//! for the node counts used here.

use nalgebra::{DMatrix, SymmetricEigen};

const PI_QUARTER_INV: f64 = 0.751_125_544_464_942_5; // π^{-1/4}

#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub galerkin: Vec<f64>,
    pub linear: Vec<f64>,
}

/// Values `ψ_0(x), …, ψ_{len-1}(x)` of the normalized Hermite functions.
pub fn hermite_functions(x: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    out.push(PI_QUARTER_INV * (-0.5 * x * x).exp());
    if len > 1 {
        out.push(std::f64::consts::SQRT_2 * x * out[0]);
    }
    for k in 1..len.saturating_sub(1) {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

impl GaussHermite {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss–Hermite rule needs at least one node");
        let mut jacobi = DMatrix::<f64>::zeros(m, m);
        for k in 1..m {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // Newton polish on ψ_m, whose derivative at a root is sqrt(2m)·ψ_{m-1}.
        for x in nodes.iter_mut() {
            for _ in 0..4 {
                let psi = hermite_functions(*x, m + 1);
                let deriv = (2.0 * m as f64).sqrt() * psi[m - 1] - *x * psi[m];
                if deriv == 0.0 {
                    break;
                }
                let step = psi[m] / deriv;
                *x -= step;
                if step.abs() < 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        // exact symmetry
        for i in 0..m / 2 {
            let a = 0.5 * (nodes[m - 1 - i] - nodes[i]);
            nodes[i] = -a;
            nodes[m - 1 - i] = a;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }

        let moments = hermite_function_integrals(m);
        let mut galerkin = Vec::with_capacity(m);
        let mut linear = Vec::with_capacity(m);
        for &x in &nodes {
            let psi = hermite_functions(x, m);
            let christoffel = 1.0 / psi.iter().map(|v| v * v).sum::<f64>();
            let proj: f64 = psi.iter().zip(&moments).map(|(p, i)| p * i).sum();
            galerkin.push(christoffel);
            linear.push(christoffel * proj);
        }
        GaussHermite { nodes, galerkin, linear }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `∫ ψ_k(x) dx` for `k < len`.
fn hermite_function_integrals(len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    out[0] = std::f64::consts::SQRT_2 * std::f64::consts::PI.powf(0.25);
    let mut k = 1;
    while k + 1 < len {
        out[k + 1] = (k as f64 / (k as f64 + 1.0)).sqrt() * out[k - 1];
        k += 2;
    }
    out
}
