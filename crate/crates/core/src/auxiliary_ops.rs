//! Hardy-type and local auxiliary operators on (0,∞)^k.
//!
//! All of them act on a [`Source`]. Separable sources are integrated axis by
//! axis with adaptive quadrature; grid sources use the grid's nodes with
//! Lebesgue weights recovered from the stored measure weights.

use crate::error::{contract, domain, Result};
use crate::operators::{contract_tensor, maximize_over_t, MaximalValue, Profile1d, QuadratureSpec, Source};
use crate::quadrature::{integrate_breaks, integrate_weighted_from_zero, pairwise_sum, Tol};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Exponents α_j of the weights y_j^{2α_j}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(domain("alpha vector must be non-empty"));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(domain(format!("alpha entries must be finite, got {alphas:?}")));
        }
        Ok(AlphaVector(alphas))
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    fn require_integrable(&self) -> Result<()> {
        if let Some(a) = self.0.iter().find(|a| **a <= -0.5) {
            return Err(domain(format!("this operator needs every alpha > -1/2, got {a}")));
        }
        Ok(())
    }
}

/// Denominator of ℋ_{l,k}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HlkDenominator {
    /// Σ_j (x_j − y_j)² over all axes
    Displayed,
    /// Σ_{j≤l} x_j² + Σ_{j>l} (x_j − y_j)²
    LowerUsesX,
}

fn check_args(alpha: &AlphaVector, g: &Source, x: &[f64]) -> Result<()> {
    if x.len() != alpha.dim() || g.dim() != alpha.dim() {
        return Err(contract(format!(
            "dimension mismatch: alpha {}, source {}, point {}",
            alpha.dim(),
            g.dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(domain(format!("points must lie in (0,∞)^k, got {x:?}")));
    }
    Ok(())
}

const REL: f64 = 1e-13;

/// ∫_{(lo,hi)} p(y) k(y) y^{pow} dy restricted to the support of p.
fn axis_int<K: Fn(f64) -> f64>(p: &Profile1d, lo: f64, hi: f64, pow: f64, k: K, extra: &[f64]) -> Result<f64> {
    let (slo, shi) = p.support();
    let a = lo.max(slo).max(0.0);
    let b = hi.min(shi);
    if !(b > a) {
        return Ok(0.0);
    }
    if !b.is_finite() {
        return Err(domain("source is not integrable against this operator (unbounded support)"));
    }
    let mut br = p.breaks();
    br.extend_from_slice(extra);
    br.retain(|&v| v > a && v < b);
    br.sort_by(f64::total_cmp);
    br.dedup();
    let tol = Tol { abs: 1e-300, rel: REL, max_intervals: 2000 };
    if a == 0.0 && pow != 0.0 {
        if pow <= -1.0 {
            return Err(domain("weight is not integrable at the origin"));
        }
        return Ok(integrate_weighted_from_zero(|y| p.value(y) * k(y), 0.5 * pow, b, &br, tol).value);
    }
    let mut pts = vec![a];
    pts.extend(br);
    pts.push(b);
    Ok(if pow == 0.0 {
        integrate_breaks(|y| p.value(y) * k(y), &pts, tol).value
    } else {
        integrate_breaks(|y| p.value(y) * k(y) * y.powf(pow), &pts, tol).value
    })
}

/// Per-axis specification of a separable operator: interval, power of y,
/// extra kernel factor and its break points.
struct AxisSpec<K> {
    lo: f64,
    hi: f64,
    pow: f64,
    kern: K,
    breaks: Vec<f64>,
}

/// ∫ g(y) ∏_j k_j(y_j) y_j^{pow_j} dy over ∏ (lo_j, hi_j).
fn tensor_apply<K: Fn(f64) -> f64>(g: &Source, axes: &[AxisSpec<K>]) -> Result<f64> {
    match g {
        Source::Separable(s) => {
            if s.scale == 0.0 {
                return Ok(0.0);
            }
            let mut v = s.scale;
            for (p, ax) in s.factors.iter().zip(axes) {
                v *= axis_int(p, ax.lo, ax.hi, ax.pow, &ax.kern, &ax.breaks)?;
                if v == 0.0 {
                    break;
                }
            }
            Ok(v)
        }
        Source::Grid(f) => {
            let grid = f.grid();
            let vecs: Vec<Vec<f64>> = grid
                .axes()
                .iter()
                .zip(axes)
                .map(|(a, ax)| {
                    let l2 = 2.0 * a.lambda();
                    a.nodes()
                        .iter()
                        .zip(a.weights())
                        .map(|(&y, &w)| {
                            if y > ax.lo && y < ax.hi {
                                w * y.powf(ax.pow - l2) * (ax.kern)(y)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            Ok(contract_tensor(f.values(), &vecs))
        }
    }
}

fn one(_: f64) -> f64 {
    1.0
}

/// H_∞^k g(x) = ∫_{x_1}^∞⋯∫_{x_k}^∞ g(y) / ∏ y_j dy.
pub fn hardy_infinity(alpha: &AlphaVector, g: &Source, x: &[f64]) -> Result<f64> {
    alpha.require_integrable()?;
    check_args(alpha, g, x)?;
    let axes: Vec<_> =
        x.iter().map(|&xj| AxisSpec { lo: xj, hi: f64::INFINITY, pow: -1.0, kern: one, breaks: vec![] }).collect();
    tensor_apply(g, &axes)
}

/// L g(x) = (Σ x_j)^{−2Σ(α_j+1/2)} ∫_0^{x_1}⋯∫_0^{x_k} g(y) ∏ y_j^{2α_j} dy.
pub fn l_operator(alpha: &AlphaVector, g: &Source, x: &[f64]) -> Result<f64> {
    alpha.require_integrable()?;
    check_args(alpha, g, x)?;
    let axes: Vec<_> = x
        .iter()
        .zip(alpha.as_slice())
        .map(|(&xj, &a)| AxisSpec { lo: 0.0, hi: xj, pow: 2.0 * a, kern: one, breaks: vec![] })
        .collect();
    let e: f64 = 2.0 * alpha.as_slice().iter().map(|a| a + 0.5).sum::<f64>();
    let s: f64 = x.iter().sum();
    Ok(s.powf(-e) * tensor_apply(g, &axes)?)
}

/// H_loc g(x) = ∏ x_j^{−2α_j−1} ∫ over ∏(x_j/2, 2x_j) of g(y) ∏ y_j^{2α_j} dy.
/// Any real α is allowed.
pub fn hardy_local(alpha: &AlphaVector, g: &Source, x: &[f64]) -> Result<f64> {
    check_args(alpha, g, x)?;
    let axes: Vec<_> = x
        .iter()
        .zip(alpha.as_slice())
        .map(|(&xj, &a)| AxisSpec { lo: 0.5 * xj, hi: 2.0 * xj, pow: 2.0 * a, kern: one, breaks: vec![xj] })
        .collect();
    let pre: f64 = x.iter().zip(alpha.as_slice()).map(|(&xj, &a)| xj.powf(-2.0 * a - 1.0)).product();
    Ok(pre * tensor_apply(g, &axes)?)
}

/// ∫ over the local box of ∏ (x_j y_j)^{−α_j} 𝕎_t(x_j, y_j) g(y) ∏ y_j^{2α_j} dy,
/// with 𝕎_t the Euclidean heat kernel.
pub fn local_gaussian_at(alpha: &AlphaVector, g: &Source, x: &[f64], t: f64) -> Result<f64> {
    alpha.require_integrable()?;
    check_args(alpha, g, x)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("time must be positive and finite, got {t}")));
    }
    let rt = t.sqrt();
    let c = 1.0 / (2.0 * (PI * t).sqrt());
    let axes: Vec<_> = x
        .iter()
        .zip(alpha.as_slice())
        .map(|(&xj, &a)| {
            let kern = move |y: f64| c * xj.powf(-a) * (-(xj - y) * (xj - y) / (4.0 * t)).exp();
            AxisSpec {
                lo: (0.5 * xj).max(xj - 40.0 * rt),
                hi: (2.0 * xj).min(xj + 40.0 * rt),
                pow: a,
                kern,
                breaks: [0.0, 1.0, -1.0, 3.0, -3.0, 8.0, -8.0].iter().map(|m| xj + m * rt).collect(),
            }
        })
        .collect();
    tensor_apply(g, &axes)
}

/// 𝕎_{*,loc} g(x): sup over t of |local_gaussian_at| on the span of `tspec`.
pub fn local_gaussian_maximal(alpha: &AlphaVector, g: &Source, x: &[f64], tspec: &QuadratureSpec) -> Result<MaximalValue> {
    alpha.require_integrable()?;
    check_args(alpha, g, x)?;
    tspec.validate()?;
    maximize_over_t(|t| local_gaussian_at(alpha, g, x, t), tspec)
}

/// ℋ_{l,k} g(x): y_j over (0, x_j/2) for j ≤ l and over (x_j/2, 2x_j) for
/// j > l, with weights y^{2α} and (x_j y_j)^{−α_j} y_j^{2α_j} respectively,
/// against D(x,y)^{−ε}, ε = Σ_{j≤l}(α_j+1/2) + (k−l)/2.
pub fn h_lk(alpha: &AlphaVector, l: usize, k: usize, g: &Source, x: &[f64], denom: HlkDenominator) -> Result<f64> {
    alpha.require_integrable()?;
    if l < 1 || l > k || k != alpha.dim() {
        return Err(contract(format!("need 1 <= l <= k = dim, got l={l} k={k} dim={}", alpha.dim())));
    }
    check_args(alpha, g, x)?;
    let al = alpha.as_slice();
    let eps: f64 = al[..l].iter().map(|a| a + 0.5).sum::<f64>() + (k - l) as f64 / 2.0;
    let fixed: f64 = match denom {
        HlkDenominator::Displayed => 0.0,
        HlkDenominator::LowerUsesX => x[..l].iter().map(|v| v * v).sum(),
    };
    // squared distance on axis j as it enters the denominator
    let term = |j: usize, y: f64| -> f64 {
        if j < l && denom == HlkDenominator::LowerUsesX {
            0.0
        } else {
            (x[j] - y) * (x[j] - y)
        }
    };
    let interval = |j: usize| if j < l { (0.0, 0.5 * x[j]) } else { (0.5 * x[j], 2.0 * x[j]) };
    let weight = |j: usize, y: f64| if j < l { y.powf(2.0 * al[j]) } else { x[j].powf(-al[j]) * y.powf(al[j]) };
    match g {
        Source::Grid(f) => {
            let grid = f.grid();
            let n = grid.dim();
            let terms: Vec<f64> = crate::par::map_range(grid.len(), |idx| {
                let v = f.values()[idx];
                if v == 0.0 {
                    return 0.0;
                }
                let mut y = vec![0.0; n];
                grid.point(idx, &mut y);
                let mut d = fixed;
                let mut w = grid.weight(idx);
                for j in 0..n {
                    let (lo, hi) = interval(j);
                    if !(y[j] > lo && y[j] < hi) {
                        return 0.0;
                    }
                    d += term(j, y[j]);
                    w *= weight(j, y[j]) * y[j].powf(-2.0 * grid.axes()[j].lambda());
                }
                v * w * d.powf(-eps)
            });
            Ok(pairwise_sum(&terms))
        }
        Source::Separable(s) => {
            if s.scale == 0.0 {
                return Ok(0.0);
            }
            // nested adaptive quadrature, innermost axis last
            fn nest(
                j: usize,
                d: f64,
                s: &crate::operators::Separable,
                x: &[f64],
                eps: f64,
                ctx: &dyn Fn(usize) -> ((f64, f64), f64),
                term: &dyn Fn(usize, f64) -> f64,
            ) -> Result<f64> {
                if j == x.len() {
                    return Ok(d.powf(-eps));
                }
                let ((lo, hi), pow) = ctx(j);
                let p = &s.factors[j];
                let inner = |y: f64| nest(j + 1, d + term(j, y), s, x, eps, ctx, term).unwrap_or(f64::NAN);
                let v = axis_int(p, lo, hi, pow, inner, &[x[j]])?;
                if v.is_nan() {
                    return Err(domain("nested quadrature failed"));
                }
                Ok(v)
            }
            let ctx = |j: usize| -> ((f64, f64), f64) { (interval(j), if j < l { 2.0 * al[j] } else { al[j] }) };
            let pre: f64 = (l..k).map(|j| x[j].powf(-al[j])).product();
            Ok(s.scale * pre * nest(0, fixed, s, x, eps, &ctx, &term)?)
        }
    }
}
