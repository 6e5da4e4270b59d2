//! The Bessel heat kernel W_t^λ(x,y), its derivatives, the product kernel
//! on (0,∞)^n and the classical Gaussian kernel.
//!
//! With ν = λ − 1/2, z = xy/2t and G(z) = e^{-z} z^{-ν} I_ν(z),
//!
//! W_t^λ(x,y) = (2t)^{-λ-1/2} G(z) e^{-(x−y)²/4t},
//!
//! so no factor e^{+z} is ever formed. Every quantity is produced as a
//! [`Scaled`] pair so that callers comparing magnitudes can work with
//! logarithms when the Gaussian factor underflows.

use crate::error::{contract, domain, Result};
use crate::special_fn::PreparedOrder;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A Bessel index λ > −1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselIndex(f64);

impl BesselIndex {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > -0.5 && lambda.is_finite() {
            Ok(BesselIndex(lambda))
        } else {
            Err(domain(format!("Bessel index must satisfy lambda > -1/2, got {lambda}")))
        }
    }
    pub fn value(self) -> f64 {
        self.0
    }
}

/// (λ_1, …, λ_n), every entry > −1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexVector(Vec<f64>);

impl IndexVector {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(contract("index vector must have at least one entry"));
        }
        for &l in &lambdas {
            BesselIndex::new(l)?;
        }
        Ok(IndexVector(lambdas))
    }
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    /// Σ_j (λ_j + 1/2)
    pub fn homogeneity(&self) -> f64 {
        self.0.iter().map(|l| l + 0.5).sum()
    }
}

/// value = m · e^{ln}
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub ln: f64,
    pub m: f64,
}

impl Scaled {
    #[inline]
    pub fn value(self) -> f64 {
        if self.m == 0.0 {
            0.0
        } else {
            self.m * self.ln.exp()
        }
    }
    /// ln |value|, −∞ for an exact zero.
    #[inline]
    pub fn ln_abs(self) -> f64 {
        self.ln + self.m.abs().ln()
    }
}

/// One-dimensional kernel for a fixed λ with the Gamma values cached.
#[derive(Debug, Clone, Copy)]
pub struct Kernel1d {
    lambda: f64,
    a: f64,
    ord: PreparedOrder,
}

impl Kernel1d {
    /// λ must already be validated.
    pub fn new(lambda: f64) -> Self {
        Kernel1d { lambda, a: lambda + 0.5, ord: PreparedOrder::new(lambda - 0.5) }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    fn pieces(&self, t: f64, x: f64, y: f64) -> (f64, f64, f64) {
        let d = x - y;
        let q = d * d / (4.0 * t);
        (-self.a * (2.0 * t).ln() - q, x * y / (2.0 * t), q)
    }

    #[inline]
    pub fn scaled(&self, t: f64, x: f64, y: f64) -> Scaled {
        let (ln, z, _) = self.pieces(t, x, y);
        Scaled { ln, m: self.ord.g(z) }
    }

    #[inline]
    pub fn w(&self, t: f64, x: f64, y: f64) -> f64 {
        self.scaled(t, x, y).value()
    }

    /// ∂_t W from the three product-rule terms.
    #[inline]
    pub fn dt_scaled(&self, t: f64, x: f64, y: f64) -> Scaled {
        let (ln, z, q) = self.pieces(t, x, y);
        let (g, dg) = self.ord.g_dg(z);
        Scaled { ln, m: (g * (q - self.a) - z * dg) / t }
    }

    #[inline]
    pub fn dt(&self, t: f64, x: f64, y: f64) -> f64 {
        self.dt_scaled(t, x, y).value()
    }

    /// (W, ∂_t W) sharing one Bessel evaluation.
    #[inline]
    pub fn w_dt(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let (ln, z, q) = self.pieces(t, x, y);
        let (g, dg) = self.ord.g_dg(z);
        let p = ln.exp();
        (p * g, p * (g * (q - self.a) - z * dg) / t)
    }

    /// ∂_x W.
    #[inline]
    pub fn dx_scaled(&self, t: f64, x: f64, y: f64) -> Scaled {
        let (ln, z, _) = self.pieces(t, x, y);
        let (g, dg) = self.ord.g_dg(z);
        Scaled { ln, m: (dg * y - g * (x - y)) / (2.0 * t) }
    }

    #[inline]
    pub fn dx(&self, t: f64, x: f64, y: f64) -> f64 {
        self.dx_scaled(t, x, y).value()
    }

    /// (W, ∂_x W).
    #[inline]
    pub fn w_dx(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let (ln, z, _) = self.pieces(t, x, y);
        let (g, dg) = self.ord.g_dg(z);
        let p = ln.exp();
        (p * g, p * (dg * y - g * (x - y)) / (2.0 * t))
    }

    /// W − (xy)^{-λ} 𝕎_t.
    #[inline]
    pub fn gap_scaled(&self, t: f64, x: f64, y: f64) -> Scaled {
        let (ln, z, _) = self.pieces(t, x, y);
        Scaled { ln, m: self.ord.gap(z) }
    }

    /// W_t(x,y)/W_t(0,0) − 1 without cancellation for large t.
    ///
    /// W/W(0,0) = e^{-u} ₀F₁(;λ+1/2; z²/4) with u = (x²+y²)/4t.
    pub fn origin_excess(&self, t: f64, x: f64, y: f64) -> f64 {
        let u = (x * x + y * y) / (4.0 * t);
        let z = x * y / (2.0 * t);
        if z > 2.0 {
            let w = self.scaled(t, x, y);
            let c = kernel_origin_value(self.lambda, t).ln();
            return (w.ln_abs() - c).exp_m1();
        }
        let q = z * z / 4.0;
        let (mut term, mut s, mut k) = (1.0, 0.0, 0.0);
        loop {
            k += 1.0;
            term *= q / (k * (self.a - 1.0 + k));
            s += term;
            if term < 1e-17 * s || term == 0.0 {
                break;
            }
        }
        (-u).exp_m1() + (-u).exp() * s
    }

    /// ∂_t W − (xy)^{-λ} ∂_t 𝕎_t.
    pub fn dt_gap_scaled(&self, t: f64, x: f64, y: f64) -> Scaled {
        let (ln, z, q) = self.pieces(t, x, y);
        let gm = self.ord.gap(z);
        let dgm = self.ord.gap_deriv(z);
        Scaled { ln, m: (gm * (q - self.a) - z * dgm) / t }
    }
}

fn check_point(t: f64, x: f64, y: f64) -> Result<()> {
    if !(t > 0.0) || !(x > 0.0) || !(y > 0.0) {
        return Err(domain(format!("kernel needs t, x, y > 0, got t={t}, x={x}, y={y}")));
    }
    Ok(())
}

fn checked(lambda: f64, t: f64, x: f64, y: f64) -> Result<Kernel1d> {
    BesselIndex::new(lambda)?;
    check_point(t, x, y)?;
    Ok(Kernel1d::new(lambda))
}

/// W_t^λ(x,y).
pub fn heat_kernel_1d(lambda: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(checked(lambda, t, x, y)?.w(t, x, y))
}

/// ∂_t W_t^λ(x,y).
pub fn heat_kernel_dt(lambda: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(checked(lambda, t, x, y)?.dt(t, x, y))
}

/// ∂_x W_t^λ(x,y).
pub fn heat_kernel_dx(lambda: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(checked(lambda, t, x, y)?.dx(t, x, y))
}

/// W_t^λ(x,y) − (xy)^{-λ} 𝕎_t(x,y).
pub fn kernel_gaussian_gap(lambda: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(checked(lambda, t, x, y)?.gap_scaled(t, x, y).value())
}

/// Classical one-dimensional heat kernel e^{-(x−y)²/4t}/(2√(πt)).
#[inline]
pub fn gauss_1d(t: f64, d: f64) -> f64 {
    (-d * d / (4.0 * t)).exp() / (2.0 * (PI * t).sqrt())
}

fn check_nd(lambda: &IndexVector, t: f64, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != lambda.dim() || y.len() != lambda.dim() {
        return Err(contract(format!(
            "point dimension ({}, {}) does not match index vector ({})",
            x.len(),
            y.len(),
            lambda.dim()
        )));
    }
    for (&xj, &yj) in x.iter().zip(y) {
        check_point(t, xj, yj)?;
    }
    Ok(())
}

/// Product kernel ∏_j W_t^{λ_j}(x_j, y_j).
pub fn heat_kernel_nd(lambda: &IndexVector, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_nd(lambda, t, x, y)?;
    let mut ln = 0.0;
    let mut m = 1.0;
    for ((&l, &xj), &yj) in lambda.as_slice().iter().zip(x).zip(y) {
        let s = Kernel1d::new(l).scaled(t, xj, yj);
        ln += s.ln;
        m *= s.m;
    }
    Ok(Scaled { ln, m }.value())
}

/// ∂_{x_i} of the product kernel.
pub fn heat_kernel_nd_dx(lambda: &IndexVector, i: usize, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_nd(lambda, t, x, y)?;
    if i >= lambda.dim() {
        return Err(contract(format!("axis {i} out of range")));
    }
    let mut ln = 0.0;
    let mut m = 1.0;
    for (j, ((&l, &xj), &yj)) in lambda.as_slice().iter().zip(x).zip(y).enumerate() {
        let k = Kernel1d::new(l);
        let s = if j == i { k.dx_scaled(t, xj, yj) } else { k.scaled(t, xj, yj) };
        ln += s.ln;
        m *= s.m;
    }
    Ok(Scaled { ln, m }.value())
}

/// Tensorised classical kernel ∏_j e^{-(x_j−y_j)²/4t}/(2√(πt)).
pub fn classical_kernel_nd(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("classical kernel needs t > 0, got {t}")));
    }
    if x.len() != y.len() {
        return Err(contract("x and y must have the same dimension"));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = x.len() as f64;
    Ok((-d2 / (4.0 * t)).exp() * (2.0 * (PI * t).sqrt()).powf(-n))
}

/// Limit of W_t^λ(x,y) as x, y → 0: t^{-λ-1/2}/(2^{2λ} Γ(λ+1/2)).
pub fn kernel_origin_value(lambda: f64, t: f64) -> f64 {
    let lg = crate::special_fn::ln_gamma_pos(lambda + 0.5);
    (-(lambda + 0.5) * t.ln() - 2.0 * lambda * std::f64::consts::LN_2 - lg).exp()
}
