//! Operators built on the heat kernel: semigroup application, the maximal
//! operator, the g-function, Riesz kernels and truncated transforms,
//! fractional kernels and region-restricted application.
//!
//! Sources are either sampled ([`GridFunction`]) or analytic tensor products
//! of one-dimensional profiles ([`Separable`]). For the latter every spatial
//! integral factorises into one-dimensional adaptive integrals.

use crate::bessel_kernel::{kernel_origin_value, IndexVector, Kernel1d};
use crate::error::{contract, domain, Error, Result};
use crate::measure_grid::GridFunction;
use crate::par;
use crate::quadrature::{gauss_legendre, integrate_breaks, integrate_weighted_from_zero, pairwise_sum, Tol};
use crate::special_fn::{gamma_fn, ln_gamma};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_10, PI};
use std::sync::Arc;

// ---------------------------------------------------------------------------
// specs

/// Discretisation policy for t-integrals and t-suprema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_decade: usize,
    /// golden-section stopping width in ln t
    pub refine_tol: f64,
    pub max_refinements: usize,
    /// relative tolerance of the spatial integrals
    pub spatial_rel: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            t_min: 1e-6,
            t_max: 1e6,
            points_per_decade: 13,
            refine_tol: 1e-8,
            max_refinements: 200,
            spatial_rel: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.t_max.is_finite()) {
            return Err(domain(format!("need 0 < t_min < t_max < inf, got [{}, {}]", self.t_min, self.t_max)));
        }
        if self.points_per_decade == 0 {
            return Err(domain("points_per_decade must be positive"));
        }
        if !(self.refine_tol > 0.0) || !(self.spatial_rel > 0.0) {
            return Err(domain("tolerances must be positive"));
        }
        Ok(())
    }

    /// Log-spaced t grid including both ends.
    pub fn log_grid(&self) -> Vec<f64> {
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        let n = (((b - a) / LN_10) * self.points_per_decade as f64).ceil().max(1.0) as usize;
        (0..=n).map(|k| if k == n { self.t_max } else { (a + (b - a) * k as f64 / n as f64).exp() }).collect()
    }

    /// Gauss–Legendre rule in s = ln t, one panel per decade with
    /// `points_per_decade` nodes. Returns (t, weight in ds).
    pub fn log_rule(&self) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        let panels = ((b - a) / LN_10).ceil().max(1.0) as usize;
        let (gx, gw) = gauss_legendre(self.points_per_decade.max(2));
        let mut ts = Vec::with_capacity(panels * gx.len());
        let mut ws = Vec::with_capacity(ts.capacity());
        for p in 0..panels {
            let lo = a + (b - a) * p as f64 / panels as f64;
            let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
            let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (x, w) in gx.iter().zip(gw) {
                ts.push((c + h * x).exp());
                ws.push(h * w);
            }
        }
        (ts, ws)
    }
}

/// Exponent β of Δ^{-β}, checked against the form in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalOrder {
    beta: f64,
    form: FractionalForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FractionalForm {
    /// ∫ W_t t^{β-1} dt / Γ(β), needs β < Σ(λ_j+1/2)
    Plain,
    /// large-t behaviour subtracted on (1, ∞), needs β < Σ(λ_j+1/2) + 1
    Subtracted,
}

impl FractionalOrder {
    pub fn new(beta: f64, lambda: &IndexVector, form: FractionalForm) -> Result<Self> {
        let s = lambda.homogeneity();
        let cap = match form {
            FractionalForm::Plain => s,
            FractionalForm::Subtracted => s + 1.0,
        };
        if !(beta > 0.0 && beta < cap) {
            return Err(domain(format!("fractional order must satisfy 0 < beta < {cap} for the {form:?} form, got {beta}")));
        }
        Ok(FractionalOrder { beta, form })
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn form(&self) -> FractionalForm {
        self.form
    }
}

/// Per-axis restriction of the y-integration relative to x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// (0, x/2)
    Lower,
    /// (x/2, 2x)
    Local,
    /// (2x, ∞)
    Upper,
    /// (0, ∞)
    Whole,
}

impl Region {
    pub fn interval(self, x: f64) -> (f64, f64) {
        match self {
            Region::Lower => (0.0, 0.5 * x),
            Region::Local => (0.5 * x, 2.0 * x),
            Region::Upper => (2.0 * x, f64::INFINITY),
            Region::Whole => (0.0, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSelector(Vec<Region>);

impl RegionSelector {
    pub fn new(tags: Vec<Region>) -> Self {
        RegionSelector(tags)
    }
    pub fn all_local(n: usize) -> Self {
        RegionSelector(vec![Region::Local; n])
    }
    pub fn unrestricted(n: usize) -> Self {
        RegionSelector(vec![Region::Whole; n])
    }
    pub fn tags(&self) -> &[Region] {
        &self.0
    }
    fn boxes(&self, x: &[f64]) -> Vec<(f64, f64)> {
        self.0.iter().zip(x).map(|(r, &xj)| r.interval(xj)).collect()
    }
}

// ---------------------------------------------------------------------------
// sources

/// A one-dimensional factor of a separable source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile1d {
    /// exp(−1/(1−s²)) with s = (y − center)/width, zero for |s| ≥ 1
    Bump { center: f64, width: f64 },
    /// χ_{(lo,hi)}
    Indicator { lo: f64, hi: f64 },
    /// cos(freq·y)
    Cos { freq: f64 },
    /// 1
    Const,
}

impl Profile1d {
    pub fn value(&self, y: f64) -> f64 {
        match *self {
            Profile1d::Bump { center, width } => {
                let s = (y - center) / width;
                if s.abs() < 1.0 {
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            Profile1d::Indicator { lo, hi } => {
                if y > lo && y < hi {
                    1.0
                } else {
                    0.0
                }
            }
            Profile1d::Cos { freq } => (freq * y).cos(),
            Profile1d::Const => 1.0,
        }
    }

    /// Derivative where the profile is smooth (zero at indicator edges).
    pub fn deriv(&self, y: f64) -> f64 {
        match *self {
            Profile1d::Bump { center, width } => {
                let s = (y - center) / width;
                if s.abs() < 1.0 {
                    let d = 1.0 - s * s;
                    (-1.0 / d).exp() * (-2.0 * s / (d * d)) / width
                } else {
                    0.0
                }
            }
            Profile1d::Cos { freq } => -freq * (freq * y).sin(),
            _ => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Profile1d::Bump { .. } => (-1.0f64).exp(),
            _ => 1.0,
        }
    }

    /// Closed support in (0, ∞].
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Profile1d::Bump { center, width } => ((center - width).max(0.0), center + width),
            Profile1d::Indicator { lo, hi } => (lo.max(0.0), hi),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub(crate) fn breaks(&self) -> Vec<f64> {
        match *self {
            Profile1d::Bump { center, width } => vec![center - width, center - 0.5 * width, center, center + 0.5 * width, center + width],
            Profile1d::Indicator { lo, hi } => vec![lo, hi],
            _ => vec![],
        }
    }

    /// Length over which the profile varies near y, and the distance from
    /// y to the nearest jump.
    fn scales(&self, y: f64) -> (f64, f64) {
        match *self {
            Profile1d::Bump { width, .. } => {
                let (a, b) = self.support();
                let out = if y <= a { a - y } else if y >= b { y - b } else { f64::INFINITY };
                (width, out)
            }
            Profile1d::Indicator { lo, hi } => (f64::INFINITY, (y - lo).abs().min((y - hi).abs())),
            Profile1d::Cos { freq } => (1.0 / freq.abs().max(1e-300), f64::INFINITY),
            Profile1d::Const => (f64::INFINITY, f64::INFINITY),
        }
    }
}

/// scale · ∏_j p_j(y_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separable {
    pub factors: Vec<Profile1d>,
    pub scale: f64,
}

impl Separable {
    pub fn new(factors: Vec<Profile1d>, scale: f64) -> Self {
        Separable { factors, scale }
    }

    /// Tensor bump of half-width h at `center`, normalised in L¹(m_λ).
    pub fn spike(lambda: &IndexVector, center: &[f64], h: f64) -> Result<Self> {
        if center.len() != lambda.dim() {
            return Err(contract("spike centre dimension does not match lambda"));
        }
        if !(h > 0.0) || center.iter().any(|c| !(*c > 0.0)) {
            return Err(domain("spike needs h > 0 and a centre in (0,∞)^n"));
        }
        let factors: Vec<Profile1d> = center.iter().map(|&c| Profile1d::Bump { center: c, width: h }).collect();
        let mass: f64 = factors.iter().zip(lambda.as_slice()).map(|(p, &l)| profile_mass(p, l)).product();
        Ok(Separable { factors, scale: 1.0 / mass })
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.scale * self.factors.iter().zip(y).map(|(p, &v)| p.value(v)).product::<f64>()
    }

    pub fn partial(&self, i: usize, y: &[f64]) -> f64 {
        let mut v = self.scale;
        for (j, (p, &yj)) in self.factors.iter().zip(y).enumerate() {
            v *= if j == i { p.deriv(yj) } else { p.value(yj) };
        }
        v
    }

    pub fn support_box(&self) -> Vec<(f64, f64)> {
        self.factors.iter().map(Profile1d::support).collect()
    }
}

/// ∫ p(y) y^{2λ} dy over the support of p (compact profiles only).
pub fn profile_mass(p: &Profile1d, lambda: f64) -> f64 {
    let (a, b) = p.support();
    let mut br = p.breaks();
    br.retain(|&v| v > a && v < b);
    let tol = Tol { rel: 1e-13, ..Default::default() };
    if a <= 0.0 {
        integrate_weighted_from_zero(|y| p.value(y), lambda, b, &br, tol).value
    } else {
        let mut pts = vec![a];
        pts.extend(br);
        pts.push(b);
        integrate_breaks(|y| p.value(y) * y.powf(2.0 * lambda), &pts, tol).value
    }
}

/// The function an operator is applied to.
#[derive(Debug, Clone)]
pub enum Source {
    Grid(Arc<GridFunction>),
    Separable(Separable),
}

impl Source {
    pub fn grid(f: GridFunction) -> Self {
        Source::Grid(Arc::new(f))
    }
    pub fn separable(s: Separable) -> Self {
        Source::Separable(s)
    }

    /// Point value; grid sources use the nearest node on each axis.
    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            Source::Separable(s) => s.value(y),
            Source::Grid(g) => {
                let mut idx = 0;
                for (ax, &v) in g.grid().axes().iter().zip(y) {
                    let n = ax.nodes();
                    let k = match n.binary_search_by(|p| p.total_cmp(&v)) {
                        Ok(k) => k,
                        Err(0) => 0,
                        Err(k) if k >= n.len() => n.len() - 1,
                        Err(k) => {
                            if v - n[k - 1] < n[k] - v {
                                k - 1
                            } else {
                                k
                            }
                        }
                    };
                    idx = idx * n.len() + k;
                }
                g.values()[idx]
            }
        }
    }

    fn check(&self, lambda: &IndexVector) -> Result<()> {
        match self {
            Source::Grid(g) => g.grid().check_lambda(lambda),
            Source::Separable(s) => {
                if s.factors.len() != lambda.dim() {
                    return Err(contract(format!(
                        "source has {} factors, lambda has dimension {}",
                        s.factors.len(),
                        lambda.dim()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Source::Grid(g) => g.grid().dim(),
            Source::Separable(s) => s.factors.len(),
        }
    }

    pub(crate) fn is_zero(&self) -> bool {
        match self {
            Source::Separable(s) => s.scale == 0.0,
            Source::Grid(g) => g.values().iter().all(|v| *v == 0.0),
        }
    }
}

fn check_x(lambda: &IndexVector, x: &[f64]) -> Result<()> {
    if x.len() != lambda.dim() {
        return Err(contract(format!("point has dimension {}, lambda {}", x.len(), lambda.dim())));
    }
    if x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(domain(format!("points must lie in (0,∞)^n, got {x:?}")));
    }
    Ok(())
}

pub(crate) fn kernels(lambda: &IndexVector) -> Vec<Kernel1d> {
    lambda.as_slice().iter().map(|&l| Kernel1d::new(l)).collect()
}

// ---------------------------------------------------------------------------
// spatial integration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AxisOp {
    W,
    Dt,
    Dx,
}

#[inline]
fn axis_value(k: &Kernel1d, op: AxisOp, t: f64, x: f64, y: f64) -> f64 {
    match op {
        AxisOp::W => k.w(t, x, y),
        AxisOp::Dt => k.dt(t, x, y),
        AxisOp::Dx => k.dx(t, x, y),
    }
}

/// ∫_{lo}^{hi} K(t; x, y) p(y) y^{2λ} dy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn axis_integral(k: &Kernel1d, op: AxisOp, t: f64, x: f64, p: &Profile1d, lo: f64, hi: f64, rel: f64) -> f64 {
    let (slo, shi) = p.support();
    let rt = t.sqrt();
    let reach = 40.0 * rt;
    let a = lo.max(slo).max(x - reach).max(0.0);
    let b = hi.min(shi).min(x + reach);
    if !(b > a) {
        return 0.0;
    }
    let mut br: Vec<f64> = [0.0, 1.0, -1.0, 3.0, -3.0, 8.0, -8.0].iter().map(|m| x + m * rt).collect();
    br.extend(p.breaks());
    br.retain(|&v| v > a && v < b);
    br.sort_by(f64::total_cmp);
    br.dedup();
    let unit = match op {
        AxisOp::W => 1.0,
        AxisOp::Dt => 1.0 / t,
        AxisOp::Dx => 1.0 / rt + 1.0 / x,
    };
    let tol = Tol { abs: 1e-3 * rel * p.max_abs() * unit, rel, max_intervals: 2000 };
    let l = k.lambda();
    if a == 0.0 {
        integrate_weighted_from_zero(|y| axis_value(k, op, t, x, y) * p.value(y), l, b, &br, tol).value
    } else {
        let mut pts = Vec::with_capacity(br.len() + 2);
        pts.push(a);
        pts.extend(br);
        pts.push(b);
        if l == 0.0 {
            integrate_breaks(|y| axis_value(k, op, t, x, y) * p.value(y), &pts, tol).value
        } else {
            integrate_breaks(|y| axis_value(k, op, t, x, y) * p.value(y) * y.powf(2.0 * l), &pts, tol).value
        }
    }
}

/// Σ_idx f[idx] ∏_j v_j[idx_j], contracting the last axis first.
pub(crate) fn contract_tensor(values: &[f64], vecs: &[Vec<f64>]) -> f64 {
    let mut cur: Vec<f64> = Vec::new();
    let mut src: &[f64] = values;
    for v in vecs.iter().rev() {
        let n = v.len();
        let next: Vec<f64> = src.chunks_exact(n).map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        cur = next;
        src = &cur;
    }
    if vecs.is_empty() {
        return values.iter().sum();
    }
    cur[0]
}

enum AxisVal {
    Num(f64),
    Vec(Vec<f64>),
}

/// Everything needed to evaluate W_t f(x) and its derivatives at one point.
struct PointEval<'a> {
    src: &'a Source,
    ks: Vec<Kernel1d>,
    x: &'a [f64],
    boxes: Vec<(f64, f64)>,
    rel: f64,
}

impl<'a> PointEval<'a> {
    fn new(lambda: &IndexVector, src: &'a Source, x: &'a [f64], boxes: Vec<(f64, f64)>, rel: f64) -> Result<Self> {
        check_x(lambda, x)?;
        src.check(lambda)?;
        Ok(PointEval { src, ks: kernels(lambda), x, boxes, rel })
    }

    fn axis(&self, j: usize, op: AxisOp, t: f64) -> AxisVal {
        let k = &self.ks[j];
        let (lo, hi) = self.boxes[j];
        let x = self.x[j];
        match self.src {
            Source::Separable(s) => AxisVal::Num(axis_integral(k, op, t, x, &s.factors[j], lo, hi, self.rel)),
            Source::Grid(g) => {
                let ax = &g.grid().axes()[j];
                AxisVal::Vec(
                    ax.nodes()
                        .iter()
                        .zip(ax.weights())
                        .map(|(&y, &w)| if y > lo && y < hi { axis_value(k, op, t, x, y) * w } else { 0.0 })
                        .collect(),
                )
            }
        }
    }

    /// Σ over `terms` of the tensor integral with the listed per-axis ops.
    fn eval(&self, t: f64, terms: &[Vec<AxisOp>]) -> f64 {
        let n = self.ks.len();
        let mut cache: Vec<[Option<AxisVal>; 3]> = (0..n).map(|_| [None, None, None]).collect();
        let slot = |op: AxisOp| match op {
            AxisOp::W => 0,
            AxisOp::Dt => 1,
            AxisOp::Dx => 2,
        };
        for term in terms {
            for (j, &op) in term.iter().enumerate() {
                if cache[j][slot(op)].is_none() {
                    cache[j][slot(op)] = Some(self.axis(j, op, t));
                }
            }
        }
        let mut out = Vec::with_capacity(terms.len());
        for term in terms {
            match self.src {
                Source::Separable(s) => {
                    let mut v = s.scale;
                    for (j, &op) in term.iter().enumerate() {
                        if let Some(AxisVal::Num(a)) = &cache[j][slot(op)] {
                            v *= a;
                        }
                    }
                    out.push(v);
                }
                Source::Grid(g) => {
                    let vecs: Vec<Vec<f64>> = term
                        .iter()
                        .enumerate()
                        .map(|(j, &op)| match &cache[j][slot(op)] {
                            Some(AxisVal::Vec(v)) => v.clone(),
                            _ => unreachable!(),
                        })
                        .collect();
                    out.push(contract_tensor(g.values(), &vecs));
                }
            }
        }
        out.iter().sum()
    }

    fn heat(&self, t: f64) -> f64 {
        self.eval(t, &[vec![AxisOp::W; self.ks.len()]])
    }

    fn heat_dt(&self, t: f64) -> f64 {
        let n = self.ks.len();
        let terms: Vec<Vec<AxisOp>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { AxisOp::Dt } else { AxisOp::W }).collect())
            .collect();
        self.eval(t, &terms)
    }

    fn heat_dx(&self, t: f64, i: usize) -> f64 {
        let n = self.ks.len();
        self.eval(t, &[(0..n).map(|j| if i == j { AxisOp::Dx } else { AxisOp::W }).collect()])
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

const SPATIAL_REL: f64 = 1e-10;

/// W_t^Λ f(x).
pub fn apply_semigroup(lambda: &IndexVector, t: f64, f: &Source, x: &[f64]) -> Result<f64> {
    check_t(t)?;
    let pe = PointEval::new(lambda, f, x, RegionSelector::unrestricted(lambda.dim()).boxes(x), SPATIAL_REL)?;
    Ok(pe.heat(t))
}

/// ∂_t W_t^Λ f(x), with the analytic kernel derivative inside the integral.
pub fn apply_semigroup_dt(lambda: &IndexVector, t: f64, f: &Source, x: &[f64]) -> Result<f64> {
    check_t(t)?;
    let pe = PointEval::new(lambda, f, x, RegionSelector::unrestricted(lambda.dim()).boxes(x), SPATIAL_REL)?;
    Ok(pe.heat_dt(t))
}

// ---------------------------------------------------------------------------
// maximal operator and g-function

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximalValue {
    pub value: f64,
    /// maximising time
    pub t: f64,
}

/// sup_t |f(t)| over the log grid of `spec`, refined by golden section in
/// ln t around the best grid point.
pub fn maximize_over_t<F: Fn(f64) -> Result<f64>>(f: F, spec: &QuadratureSpec) -> Result<MaximalValue> {
    spec.validate()?;
    let ts = spec.log_grid();
    let mut vals = Vec::with_capacity(ts.len());
    for &t in &ts {
        vals.push(f(t)?.abs());
    }
    let mut k = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[k] {
            k = i;
        }
    }
    let mut best = MaximalValue { value: vals[k], t: ts[k] };
    if best.value == 0.0 {
        return Ok(best);
    }
    let mut a = ts[k.saturating_sub(1)].ln();
    let mut b = ts[(k + 1).min(ts.len() - 1)].ln();
    let g = |u: f64| -> Result<f64> { Ok(f(u.exp())?.abs()) };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (g(c)?, g(d)?);
    let mut it = 0;
    while b - a > spec.refine_tol && it < spec.max_refinements {
        it += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d)?;
        }
        for (u, v) in [(c, fc), (d, fd)] {
            if v > best.value {
                best = MaximalValue { value: v, t: u.exp() };
            }
        }
    }
    Ok(best)
}

/// W_* f(x) = sup_t |W_t f(x)| over the span of `tspec`.
pub fn maximal_op(lambda: &IndexVector, f: &Source, x: &[f64], tspec: &QuadratureSpec) -> Result<MaximalValue> {
    let pe = PointEval::new(lambda, f, x, RegionSelector::unrestricted(lambda.dim()).boxes(x), tspec.spatial_rel)?;
    if f.is_zero() {
        tspec.validate()?;
        return Ok(MaximalValue { value: 0.0, t: tspec.t_min });
    }
    maximize_over_t(|t| Ok(pe.heat(t)), tspec)
}

/// g(f)(x) = (∫ |t ∂_t W_t f(x)|² dt/t)^{1/2} over the span of `tspec`.
pub fn g_function(lambda: &IndexVector, f: &Source, x: &[f64], tspec: &QuadratureSpec) -> Result<f64> {
    tspec.validate()?;
    let pe = PointEval::new(lambda, f, x, RegionSelector::unrestricted(lambda.dim()).boxes(x), tspec.spatial_rel)?;
    if f.is_zero() {
        return Ok(0.0);
    }
    let (ts, ws) = tspec.log_rule();
    let terms: Vec<f64> = ts
        .iter()
        .zip(&ws)
        .map(|(&t, &w)| {
            let d = t * pe.heat_dt(t);
            w * d * d
        })
        .collect();
    Ok(pairwise_sum(&terms).sqrt())
}

// ---------------------------------------------------------------------------
// Riesz kernels

fn check_pair(lambda: &IndexVector, x: &[f64], y: &[f64]) -> Result<()> {
    check_x(lambda, x)?;
    check_x(lambda, y)?;
    if x == y {
        return Err(domain("kernel is singular at x = y"));
    }
    Ok(())
}

fn check_axis(lambda: &IndexVector, i: usize) -> Result<()> {
    if i >= lambda.dim() {
        return Err(contract(format!("axis {i} out of range for dimension {}", lambda.dim())));
    }
    Ok(())
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// t^{1/2} ∂_{x_i} ∏_j W_t(x_j, y_j), formed in log scale.
#[inline]
fn riesz_integrand(ks: &[Kernel1d], i: usize, t: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut ln = 0.5 * t.ln();
    let mut m = 1.0;
    for (j, k) in ks.iter().enumerate() {
        let s = if j == i { k.dx_scaled(t, x[j], y[j]) } else { k.scaled(t, x[j], y[j]) };
        ln += s.ln;
        m *= s.m;
    }
    if m == 0.0 {
        0.0
    } else {
        m * ln.exp()
    }
}

fn riesz_kernel_rel(ks: &[Kernel1d], i: usize, x: &[f64], y: &[f64], rel: f64) -> f64 {
    let d2 = dist2(x, y);
    let big = x.iter().chain(y).fold(d2, |m, v| m.max(v * v));
    let mut small_xy = f64::INFINITY;
    let mut large_xy: f64 = 0.0;
    for (a, b) in x.iter().zip(y) {
        small_xy = small_xy.min(a * b / 2.0);
        large_xy = large_xy.max(a * b / 2.0);
    }
    let s_lo = (d2 / 2800.0).ln();
    let s_hi = (1e4 * big).ln();
    let mut pts = vec![s_lo];
    for v in [d2 / 4.0, small_xy, large_xy, big] {
        let s = v.ln();
        if s > s_lo && s < s_hi {
            pts.push(s);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.push(s_hi);
    let f = |s: f64| riesz_integrand(ks, i, s.exp(), x, y);
    let tol = Tol { abs: 1e-300, rel, max_intervals: 1000 };
    let body = integrate_breaks(f, &pts, tol).value;
    // power-law tail t^{-q} in dt
    let q: f64 = ks.iter().map(|k| k.lambda() + 0.5).sum::<f64>() + 1.5;
    let tail = f(s_hi) / (q - 1.0);
    (body + tail) / PI.sqrt()
}

/// R_i(x,y) = π^{-1/2} ∫_0^∞ ∂_{x_i} W_t(x,y) t^{-1/2} dt.
pub fn riesz_kernel(lambda: &IndexVector, i: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    check_axis(lambda, i)?;
    check_pair(lambda, x, y)?;
    Ok(riesz_kernel_rel(&kernels(lambda), i, x, y, 1e-11))
}

/// Comparison kernel ∂_{x_i}[ c_n |x−y|^{1−n} ∏(x_j y_j)^{-λ_j} ] with
/// c_n = Γ((n−1)/2) 4^{(n−1)/2} / (2^n π^{(n+1)/2}), n ≥ 2.
pub fn classical_riesz_comparison(lambda: &IndexVector, i: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    check_axis(lambda, i)?;
    check_pair(lambda, x, y)?;
    let n = lambda.dim();
    if n < 2 {
        return Err(contract("comparison kernel is defined for n >= 2"));
    }
    let nf = n as f64;
    let a = dist2(x, y) / 4.0;
    let c = gamma_fn((nf - 1.0) / 2.0)? / (2f64.powf(nf) * PI.powf((nf + 1.0) / 2.0));
    let p: f64 = lambda.as_slice().iter().zip(x.iter().zip(y)).map(|(&l, (a, b))| (a * b).powf(-l)).product();
    let li = lambda.as_slice()[i];
    let da = -(nf - 1.0) / 2.0 * a.powf(-(nf + 1.0) / 2.0) * (x[i] - y[i]) / 2.0;
    let dp = -li / x[i];
    Ok(c * p * (da + dp * a.powf(-(nf - 1.0) / 2.0)))
}

// ---------------------------------------------------------------------------
// truncated Riesz transforms

/// Relative tolerance of each kernel evaluation inside truncated transforms.
const RIESZ_REL: f64 = 1e-10;

/// Full (principal value) transform of a separable source by the t-integral
/// π^{-1/2} ∫ t^{-1/2} ∂_{x_i} W_t f(x) dt, with y restricted to `boxes`.
fn riesz_separable_full(lambda: &IndexVector, i: usize, s: &Separable, x: &[f64], boxes: &[(f64, f64)], rel: f64) -> Result<f64> {
    let src = Source::Separable(s.clone());
    let pe = PointEval::new(lambda, &src, x, boxes.to_vec(), rel * 1e-1)?;
    if s.scale == 0.0 {
        return Ok(0.0);
    }
    // smallest scales seen from x: profile variation, jumps and box edges
    let mut feature = f64::INFINITY;
    let mut jump = f64::INFINITY;
    let mut big: f64 = 0.0;
    let mut inside = true;
    for (j, p) in s.factors.iter().enumerate() {
        let (w, d) = p.scales(x[j]);
        feature = feature.min(w);
        jump = jump.min(d);
        let (lo, hi) = boxes[j];
        if !(x[j] > lo && x[j] < hi) {
            inside = false;
        }
        jump = jump.min((x[j] - lo).abs());
        if hi.is_finite() {
            jump = jump.min((hi - x[j]).abs());
        }
        let (a, b) = p.support();
        if !(x[j] > a && x[j] < b) && matches!(p, Profile1d::Bump { .. } | Profile1d::Indicator { .. }) {
            inside = false;
        }
        big = big.max(x[j] * x[j]);
        if b.is_finite() {
            big = big.max(b * b);
        }
        if w.is_finite() {
            big = big.max(w * w);
        }
    }
    let t_lo = (1e-8 * feature * feature).min(jump * jump / 2800.0).max(1e-300);
    let t_hi = 1e4 * big.max(1e-300);
    let (s_lo, s_hi) = (t_lo.ln(), t_hi.ln());
    let mut pts = vec![s_lo];
    for v in [feature * feature, jump * jump / 4.0, big] {
        if v.is_finite() && v > 0.0 {
            let u = v.ln();
            if u > s_lo && u < s_hi {
                pts.push(u);
            }
        }
    }
    for &xj in x {
        let u = (xj * xj).ln();
        if u > s_lo && u < s_hi {
            pts.push(u);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.push(s_hi);
    let g = |u: f64| {
        let t = u.exp();
        t.sqrt() * pe.heat_dx(t, i)
    };
    let tol = Tol { abs: 1e-300, rel, max_intervals: 600 };
    let body = integrate_breaks(g, &pts, tol).value;
    let q = lambda.homogeneity() + 1.5;
    let tail = g(s_hi) / (q - 1.0);
    // ∫_0^{t_lo}: ∂_{x_i} W_t f(x) → ∂_i f(x) for smooth f
    let head = if inside && jump > 0.0 { 2.0 * t_lo.sqrt() * s.partial(i, x) } else { 0.0 };
    Ok((body + tail + head) / PI.sqrt())
}

/// Nearest and farthest distance from x to the support box.
pub(crate) fn support_distances(s: &Separable, x: &[f64]) -> (f64, f64) {
    let mut dmin2 = 0.0;
    let mut dmax2 = 0.0;
    for (j, (a, b)) in s.support_box().into_iter().enumerate() {
        let near = if x[j] < a { a - x[j] } else if x[j] > b { x[j] - b } else { 0.0 };
        let far = (x[j] - a).abs().max((b - x[j]).abs());
        dmin2 += near * near;
        dmax2 += far * far;
    }
    (dmin2.sqrt(), dmax2.sqrt())
}

/// Node counts for the polar shell quadrature.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShellRule {
    pub r_nodes: usize,
    pub inner_panels: usize,
    pub th_nodes: usize,
    pub th_panels: usize,
    pub kernel_rel: f64,
}

impl ShellRule {
    pub(crate) const ACCURATE: ShellRule =
        ShellRule { r_nodes: 8, inner_panels: 4, th_nodes: 12, th_panels: 4, kernel_rel: RIESZ_REL };
}

/// Integral of R_i(x,·) f m_λ over the shell ε_a < |x−y| < ε_b, in polar
/// coordinates about x (n ≤ 3). Antipodal directions are paired so the odd
/// leading singularity cancels before quadrature.
pub(crate) fn riesz_shell(
    ks: &[Kernel1d],
    i: usize,
    s: &Separable,
    x: &[f64],
    ea: f64,
    eb: f64,
    rule: &ShellRule,
) -> Result<f64> {
    let n = x.len();
    let sup = s.support_box();
    let (dmin, dmax) = support_distances(s, x);
    if !dmax.is_finite() {
        return Err(contract("truncated transforms need a compactly supported source"));
    }
    let (ra, rb) = (ea.max(dmin), eb.min(dmax));
    if !(rb > ra) || s.scale == 0.0 {
        return Ok(0.0);
    }
    let lams: Vec<f64> = ks.iter().map(|k| k.lambda()).collect();
    let dens = |y: &[f64]| -> f64 {
        if y.iter().any(|v| !(*v > 0.0)) {
            return 0.0;
        }
        let f = s.value(y);
        if f == 0.0 {
            return 0.0;
        }
        let m: f64 = lams.iter().zip(y).map(|(l, v)| v.powf(2.0 * l)).product();
        f * m * riesz_kernel_rel(ks, i, x, y, rule.kernel_rel)
    };
    // r panels: geometric towards the inner radius when it is 0
    let mut redges = vec![ra];
    if ra == 0.0 {
        let mut r = rb;
        let mut inner = vec![];
        for _ in 0..rule.inner_panels {
            r /= 4.0;
            inner.push(r);
        }
        inner.reverse();
        redges.extend(inner);
    } else {
        let k = ((rb / ra).ln() / 4f64.ln()).ceil().clamp(1.0, 8.0) as usize;
        for m in 1..k {
            redges.push(ra * (rb / ra).powf(m as f64 / k as f64));
        }
    }
    redges.push(rb);
    let (gx, gw) = gauss_legendre(rule.r_nodes);
    let mut terms = Vec::new();
    for e in redges.windows(2) {
        let (c, h) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
        for (u, wu) in gx.iter().zip(gw) {
            let r = c + h * u;
            let wr = h * wu;
            let ang = match n {
                1 => dens(&[x[0] + r]) + dens(&[x[0] - r]),
                2 => angular_2d(&dens, x, r, dmin > 0.0, &sup, rule),
                3 => angular_3d(&dens, x, r, rule),
                _ => return Err(contract("analytic truncation supports dimensions 1 to 3")),
            };
            terms.push(wr * r.powi(n as i32 - 1) * ang);
        }
    }
    Ok(pairwise_sum(&terms))
}

fn angular_2d<F: Fn(&[f64]) -> f64>(
    dens: &F,
    x: &[f64],
    r: f64,
    outside: bool,
    sup: &[(f64, f64)],
    rule: &ShellRule,
) -> f64 {
    let (gx, gw) = gauss_legendre(rule.th_nodes);
    let panels = rule.th_panels;
    let mut acc = 0.0;
    if outside {
        // the support box subtends less than π from an exterior point
        let cx = 0.5 * (sup[0].0 + sup[0].1) - x[0];
        let cy = 0.5 * (sup[1].0 + sup[1].1) - x[1];
        let base = cy.atan2(cx);
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for a in [sup[0].0, sup[0].1] {
            for b in [sup[1].0, sup[1].1] {
                let mut d = (b - x[1]).atan2(a - x[0]) - base;
                while d > PI {
                    d -= 2.0 * PI;
                }
                while d < -PI {
                    d += 2.0 * PI;
                }
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        for p in 0..panels {
            let a = base + lo + (hi - lo) * p as f64 / panels as f64;
            let b = base + lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (u, w) in gx.iter().zip(gw) {
                let th = c + h * u;
                acc += h * w * dens(&[x[0] + r * th.cos(), x[1] + r * th.sin()]);
            }
        }
    } else {
        for p in 0..panels {
            let a = PI * p as f64 / panels as f64;
            let b = PI * (p + 1) as f64 / panels as f64;
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (u, w) in gx.iter().zip(gw) {
                let th = c + h * u;
                let (co, si) = (th.cos(), th.sin());
                acc += h * w * (dens(&[x[0] + r * co, x[1] + r * si]) + dens(&[x[0] - r * co, x[1] - r * si]));
            }
        }
    }
    acc
}

fn angular_3d<F: Fn(&[f64]) -> f64>(dens: &F, x: &[f64], r: f64, rule: &ShellRule) -> f64 {
    // upper hemisphere paired with its antipode
    let (gx, gw) = gauss_legendre(rule.th_nodes.saturating_sub(2).max(2));
    let mut acc = 0.0;
    for (u, wu) in gx.iter().zip(gw) {
        let ct = 0.5 + 0.5 * u;
        let st = (1.0 - ct * ct).sqrt();
        for p in 0..4 {
            let a = 0.5 * PI * p as f64;
            let (c, h) = (a + 0.25 * PI, 0.25 * PI);
            for (v, wv) in gx.iter().zip(gw) {
                let ph = c + h * v;
                let d = [st * ph.cos(), st * ph.sin(), ct];
                let up = dens(&[x[0] + r * d[0], x[1] + r * d[1], x[2] + r * d[2]]);
                let dn = dens(&[x[0] - r * d[0], x[1] - r * d[1], x[2] - r * d[2]]);
                acc += 0.5 * wu * h * wv * (up + dn);
            }
        }
    }
    acc
}

/// Truncated transforms at every ε in `eps` (any order).
pub fn riesz_truncated_many(lambda: &IndexVector, i: usize, f: &Source, x: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    check_axis(lambda, i)?;
    check_x(lambda, x)?;
    f.check(lambda)?;
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(domain("truncation radii must be positive"));
    }
    if f.is_zero() {
        return Ok(vec![0.0; eps.len()]);
    }
    let ks = kernels(lambda);
    match f {
        Source::Grid(g) => {
            let grid = g.grid();
            let n = grid.dim();
            let contrib: Vec<(f64, f64)> = par::map_range(grid.len(), |k| {
                let v = g.values()[k];
                let mut y = vec![0.0; n];
                grid.point(k, &mut y);
                let d = dist2(x, &y).sqrt();
                if v == 0.0 || d == 0.0 {
                    return (d, 0.0);
                }
                (d, v * grid.weight(k) * riesz_kernel_rel(&ks, i, x, &y, RIESZ_REL))
            });
            Ok(eps
                .iter()
                .map(|&e| {
                    let kept: Vec<f64> = contrib.iter().map(|&(d, c)| if d > e { c } else { 0.0 }).collect();
                    pairwise_sum(&kept)
                })
                .collect())
        }
        Source::Separable(s) => {
            let full = riesz_separable_full(lambda, i, s, x, &RegionSelector::unrestricted(x.len()).boxes(x), 1e-10)?;
            let mut order: Vec<usize> = (0..eps.len()).collect();
            order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
            let mut out = vec![0.0; eps.len()];
            let mut inner = 0.0;
            let mut prev = 0.0;
            let reach = support_distances(s, x).1;
            for &k in &order {
                if eps[k] >= reach {
                    break;
                }
                inner += riesz_shell(&ks, i, s, x, prev, eps[k], &ShellRule::ACCURATE)?;
                prev = eps[k];
                out[k] = full - inner;
            }
            Ok(out)
        }
    }
}

/// ∫_{|x−y|>ε} R_i(x,y) f(y) dm_λ(y).
pub fn riesz_truncated(lambda: &IndexVector, i: usize, f: &Source, x: &[f64], eps: f64) -> Result<f64> {
    Ok(riesz_truncated_many(lambda, i, f, x, &[eps])?[0])
}

/// max over `eps` of the truncated transforms' absolute values.
pub fn riesz_maximal(lambda: &IndexVector, i: usize, f: &Source, x: &[f64], eps: &[f64]) -> Result<f64> {
    if eps.is_empty() {
        return Err(contract("riesz_maximal needs at least one radius"));
    }
    Ok(riesz_truncated_many(lambda, i, f, x, eps)?.into_iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Principal-value iteration: ε_k = eps0·2^{-k}, stop when successive values
/// differ by less than `tol`·(1 + |value|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvSpec {
    pub eps0: f64,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for PvSpec {
    fn default() -> Self {
        PvSpec { eps0: 0.1, tol: 1e-7, max_steps: 60 }
    }
}

pub fn riesz_pv(lambda: &IndexVector, i: usize, f: &Source, x: &[f64]) -> Result<f64> {
    riesz_pv_with(lambda, i, f, x, PvSpec::default())
}

pub fn riesz_pv_with(lambda: &IndexVector, i: usize, f: &Source, x: &[f64], spec: PvSpec) -> Result<f64> {
    check_axis(lambda, i)?;
    check_x(lambda, x)?;
    f.check(lambda)?;
    if !(spec.eps0 > 0.0) || !(spec.tol > 0.0) {
        return Err(domain("pv iteration needs eps0 > 0 and tol > 0"));
    }
    if f.is_zero() {
        return Ok(0.0);
    }
    let ks = kernels(lambda);
    let accept = |a: f64, b: f64| (a - b).abs() < spec.tol * (1.0 + b.abs());
    match f {
        Source::Grid(_) => {
            let eps: Vec<f64> = (0..=spec.max_steps).map(|k| spec.eps0 * 0.5f64.powi(k as i32)).collect();
            let v = riesz_truncated_many(lambda, i, f, x, &eps)?;
            for k in 1..v.len() {
                if accept(v[k - 1], v[k]) {
                    return Ok(v[k]);
                }
            }
            Err(Error::NoConvergence {
                msg: "principal value did not stabilise".into(),
                prev: v[v.len() - 2],
                last: v[v.len() - 1],
            })
        }
        Source::Separable(s) => {
            let full = riesz_separable_full(lambda, i, s, x, &RegionSelector::unrestricted(x.len()).boxes(x), 1e-10)?;
            // value at ε_k = full − inner(ε_k); successive values differ by one shell
            let mut inner = riesz_shell(&ks, i, s, x, 0.0, spec.eps0, &ShellRule::ACCURATE)?;
            let mut eps = spec.eps0;
            let mut prev = full - inner;
            for _ in 0..spec.max_steps {
                let next_eps = 0.5 * eps;
                inner -= riesz_shell(&ks, i, s, x, next_eps, eps, &ShellRule::ACCURATE)?;
                eps = next_eps;
                let v = full - inner;
                if accept(prev, v) {
                    return Ok(v);
                }
                prev = v;
            }
            Err(Error::NoConvergence { msg: "principal value did not stabilise".into(), prev, last: full - inner })
        }
    }
}

// ---------------------------------------------------------------------------
// fractional kernels

/// Γ(n/2 − β)/(π^{n/2} 4^β Γ(β)), the Euclidean Riesz-potential constant.
pub fn classical_fractional_coefficient(n: usize, beta: f64) -> Result<f64> {
    let h = n as f64 / 2.0;
    if !(beta > 0.0 && beta < h) {
        return Err(domain(format!("classical coefficient needs 0 < beta < n/2, got {beta}")));
    }
    Ok((ln_gamma(h - beta)? - ln_gamma(beta)? - h * PI.ln() - beta * 4f64.ln()).exp())
}

/// K_β(x,y) = Γ(β)^{-1} ∫_0^∞ (∏ W_t(x_j,y_j) − subtraction) t^{β−1} dt.
pub fn fractional_kernel(lambda: &IndexVector, order: FractionalOrder, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(lambda, x, y)?;
    let order = FractionalOrder::new(order.beta, lambda, order.form)?;
    let ks = kernels(lambda);
    let beta = order.beta;
    let sum = lambda.homogeneity();
    let sub = order.form == FractionalForm::Subtracted;
    let d2 = dist2(x, y);
    let big = x.iter().chain(y).fold(1.0f64, |m, v| m.max(v * v)).max(d2);
    let mut s_lo = (d2 / 2800.0).ln();
    if sub {
        s_lo = s_lo.min(-1.0);
    }
    let s_hi = (1e10 * big).ln();
    let mut pts = vec![s_lo];
    let mut cand = vec![d2 / 4.0, big];
    for (a, b) in x.iter().zip(y) {
        cand.push(a * b / 2.0);
    }
    if sub {
        cand.push(1.0);
    }
    for v in cand {
        let u = v.ln();
        if u > s_lo && u < s_hi {
            pts.push(u);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.push(s_hi);
    let g = |u: f64| -> f64 {
        let t = u.exp();
        if sub && t > 1.0 {
            let c: f64 = ks.iter().map(|k| kernel_origin_value(k.lambda(), t)).product();
            let l1p: f64 = ks.iter().zip(x.iter().zip(y)).map(|(k, (&a, &b))| k.origin_excess(t, a, b).ln_1p()).sum();
            c * l1p.exp_m1() * t.powf(beta)
        } else {
            let mut ln = beta * u;
            let mut m = 1.0;
            for (k, (&a, &b)) in ks.iter().zip(x.iter().zip(y)) {
                let s = k.scaled(t, a, b);
                ln += s.ln;
                m *= s.m;
            }
            m * ln.exp()
        }
    };
    let tol = Tol { abs: 1e-300, rel: 1e-12, max_intervals: 1000 };
    let body = integrate_breaks(g, &pts, tol).value;
    let p = if sub { sum + 2.0 - beta } else { sum + 1.0 - beta };
    let tail = g(s_hi) / (p - 1.0);
    Ok((body + tail) / gamma_fn(beta)?)
}

// ---------------------------------------------------------------------------
// region-restricted application

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Heat,
    HeatDt,
    HeatDx(usize),
    Riesz(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeArg {
    At(f64),
    Spec(QuadratureSpec),
}

/// The operator of `kind` with each y_j restricted to the selected region.
pub fn region_apply(
    lambda: &IndexVector,
    regions: &RegionSelector,
    kind: KernelKind,
    f: &Source,
    x: &[f64],
    time: TimeArg,
) -> Result<f64> {
    if regions.0.len() != lambda.dim() {
        return Err(contract(format!(
            "region selector has {} entries, lambda has dimension {}",
            regions.0.len(),
            lambda.dim()
        )));
    }
    check_x(lambda, x)?;
    let boxes = regions.boxes(x);
    match kind {
        KernelKind::Heat | KernelKind::HeatDt | KernelKind::HeatDx(_) => {
            let (t, rel) = match time {
                TimeArg::At(t) => (t, SPATIAL_REL),
                TimeArg::Spec(_) => return Err(contract("heat kernels need a single time")),
            };
            check_t(t)?;
            let pe = PointEval::new(lambda, f, x, boxes, rel)?;
            Ok(match kind {
                KernelKind::Heat => pe.heat(t),
                KernelKind::HeatDt => pe.heat_dt(t),
                KernelKind::HeatDx(i) => {
                    check_axis(lambda, i)?;
                    pe.heat_dx(t, i)
                }
                KernelKind::Riesz(_) => unreachable!(),
            })
        }
        KernelKind::Riesz(i) => {
            check_axis(lambda, i)?;
            f.check(lambda)?;
            let rel = match &time {
                TimeArg::Spec(s) => s.spatial_rel.max(1e-12),
                TimeArg::At(_) => return Err(contract("the Riesz transform integrates over all t")),
            };
            match f {
                Source::Separable(s) => riesz_separable_full(lambda, i, s, x, &boxes, rel),
                Source::Grid(g) => {
                    let ks = kernels(lambda);
                    let grid = g.grid();
                    let n = grid.dim();
                    let terms: Vec<f64> = par::map_range(grid.len(), |k| {
                        let mut y = vec![0.0; n];
                        grid.point(k, &mut y);
                        let v = g.values()[k];
                        let inside = y.iter().zip(&boxes).all(|(v, (lo, hi))| v > lo && v < hi);
                        if v == 0.0 || !inside || y == x {
                            0.0
                        } else {
                            v * grid.weight(k) * riesz_kernel_rel(&ks, i, x, &y, RIESZ_REL)
                        }
                    });
                    Ok(pairwise_sum(&terms))
                }
            }
        }
    }
}
