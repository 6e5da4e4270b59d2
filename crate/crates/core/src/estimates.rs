//! Kernel inequalities checked on sample grids, and the weak-type,
//! strong-type and pointwise-convergence experiments.
//!
//! An inequality LHS ≤ C·RHS is "verified" when the sup of LHS/RHS over a
//! log-spaced sample grid is finite and moves by less than a few percent
//! when the grid density doubles.

use crate::auxiliary_ops::{h_lk, l_operator, AlphaVector, HlkDenominator};
use crate::bessel_kernel::{BesselIndex, IndexVector, Kernel1d};
use crate::error::{contract, domain, Error, Result};
use crate::measure_grid::{geometric_edges, profile_from_samples, weak_sup, Axis, DistributionProfile};
use crate::operators::{
    apply_semigroup, axis_integral, kernels, riesz_shell, support_distances, AxisOp, Profile1d, Separable, ShellRule,
    Source,
};
use crate::par;
use crate::quadrature::{integrate_breaks, pairwise_sum, Tol};
use crate::special_fn::ln_gamma_pos;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

// ---------------------------------------------------------------------------
// catalogue

/// Identifier of a kernel inequality.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimateId {
    A0,
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    B3_5,
    B8,
    B9,
    B10,
    B11,
    B12,
    B13,
    B14,
    B15,
    Z,
    X1,
    X2,
    C14,
    C15,
    #[serde(rename = "LEMMA5_LOWER")]
    Lemma5Lower,
    #[serde(rename = "LEMMA5_UPPER")]
    Lemma5Upper,
}

use EstimateId::*;

impl EstimateId {
    pub const ALL: [EstimateId; 23] = [
        A0,
        A1,
        A2,
        A3,
        A4,
        A5,
        A6,
        B3_5,
        B8,
        B9,
        B10,
        B11,
        B12,
        B13,
        B14,
        B15,
        Z,
        X1,
        X2,
        C14,
        C15,
        Lemma5Lower,
        Lemma5Upper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            A0 => "A0",
            A1 => "A1",
            A2 => "A2",
            A3 => "A3",
            A4 => "A4",
            A5 => "A5",
            A6 => "A6",
            B3_5 => "B3_5",
            B8 => "B8",
            B9 => "B9",
            B10 => "B10",
            B11 => "B11",
            B12 => "B12",
            B13 => "B13",
            B14 => "B14",
            B15 => "B15",
            Z => "Z",
            X1 => "X1",
            X2 => "X2",
            C14 => "C14",
            C15 => "C15",
            Lemma5Lower => "LEMMA5_LOWER",
            Lemma5Upper => "LEMMA5_UPPER",
        }
    }

    /// Names of the sampled variables, in the order points are given.
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            B13 | Lemma5Lower | Lemma5Upper => &["x", "y"],
            X1 | X2 | C14 | C15 => &["t", "u", "v"],
            _ => &["t", "x", "y"],
        }
    }

    /// Whether the point lies in the region where the inequality is claimed.
    pub fn in_domain(self, p: &[f64]) -> bool {
        if p.len() != self.variables().len() {
            return false;
        }
        if p.len() == 2 {
            let (x, y) = (p[0], p[1]);
            return match self {
                B13 => 0.5 * x < y && y < 2.0 * x,
                Lemma5Lower => y < 0.5 * x,
                _ => y > 2.0 * x,
            };
        }
        let (t, x, y) = (p[0], p[1], p[2]);
        let r = x * y / t;
        match self {
            A0 => 2.0 * x < y,
            A1 => y < 0.5 * x && r >= 1.0,
            A2 | A5 | B14 | X1 => r <= 1.0,
            A3 | B10 | C14 => y < 0.5 * x,
            A4 | B11 | X2 => r >= 1.0,
            A6 | B3_5 | Z => true,
            B8 => y < 0.5 * x && r > 1.0,
            B9 => y < 0.5 * x && r <= 1.0,
            B12 => r < 1.0,
            B15 => r > 1.0,
            C15 => 2.0 * x < y,
            B13 | Lemma5Lower | Lemma5Upper => false,
        }
    }
}

impl fmt::Display for EstimateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimateId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let u = s.trim().to_ascii_uppercase();
        EstimateId::ALL
            .into_iter()
            .find(|id| id.name() == u)
            .ok_or_else(|| domain(format!("unknown estimate id '{s}'")))
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln of the displayed right-hand side (without the constant).
fn ln_rhs(id: EstimateId, l: f64, p: &[f64]) -> f64 {
    if p.len() == 2 {
        let (x, y) = (p[0], p[1]);
        return match id {
            Lemma5Upper => x.ln() - (2.0 * l + 2.0) * y.ln(),
            _ => -(2.0 * l + 1.0) * x.ln(),
        };
    }
    let (t, x, y) = (p[0], p[1], p[2]);
    let lt = t.ln();
    let lxy = (x * y).ln();
    let d = x - y;
    match id {
        A0 => -(2.0 * l + 1.0) * y.ln(),
        A1 | A3 => -x * x / (20.0 * t) - (l + 0.5) * lt,
        A2 => -(l + 0.5) * lt - x * x / (4.0 * t),
        A4 => -l * lxy - 0.5 * lt - d * d / (4.0 * t),
        A5 => -(2.0 * l + 1.0) * x.ln(),
        A6 => log_add(-l * lxy - 0.5 * lt - d * d / (4.0 * t), -(2.0 * l + 1.0) * x.ln()),
        B3_5 => -d * d / (8.0 * t) - 1.5 * lt,
        B8 => -l * lxy + 2.0 * x.ln() - 2.5 * lt - x * x / (16.0 * t),
        B9 => -(l + 1.5) * lt - (x * x + y * y) / (8.0 * t),
        B10 => -(l + 1.5) * lt - x * x / (20.0 * t),
        B11 => -(l + 1.0) * lxy - 0.5 * lt - d * d / (8.0 * t),
        B12 => -d * d / (8.0 * t) - (l + 1.5) * lt,
        B14 => log_add(-(l + 0.5) * lt, -l * lxy - 0.5 * lt) - (x * x + y * y) / (4.0 * t),
        B15 => -(l + 1.0) * lxy + 0.5 * lt - d * d / (4.0 * t),
        Z => (x * x + y * y).ln() - (l + 1.5) * lt + (x * y / t).ln_1p(),
        X1 => (x + y).ln() - (l + 1.5) * lt - (x * x + y * y) / (4.0 * t),
        X2 => -l * lxy - d * d / (8.0 * t) - lt,
        C14 => -x * x / (40.0 * t) - (l + 1.0) * lt,
        C15 => -y * y / (40.0 * t) - (l + 1.0) * lt,
        B13 | Lemma5Lower | Lemma5Upper => unreachable!(),
    }
}

/// Breaks every ~3 units of s = ln t plus the natural scales.
fn s_breaks(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let n = ((hi - lo) / 3.0).ceil().max(1.0) as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    v.extend(extra.iter().copied().filter(|s| *s > lo && *s < hi));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

const T_INTEGRAL: Tol = Tol { abs: 1e-300, rel: 1e-10, max_intervals: 4000 };

/// ln {∫_0^∞ t |∂_t W − (xy)^{−λ}∂_t𝕎|² dt}^{1/2}; `m` rescales the integrand.
fn b13_ln_lhs(k: &Kernel1d, x: f64, y: f64, m: f64) -> f64 {
    let f = |s: f64| {
        let g = k.dt_gap_scaled(s.exp(), x, y).ln_abs();
        if g == f64::NEG_INFINITY {
            0.0
        } else {
            (2.0 * (g + s - m)).exp()
        }
    };
    let big = x.max(y);
    let (lo, hi) = ((1e-12 * x * y).ln(), (1e12 * big * big).ln());
    let d = x - y;
    let mut nat = vec![(0.5 * x * y).ln(), (x * x).ln(), (y * y).ln()];
    if d != 0.0 {
        nat.push((0.25 * d * d).ln());
    }
    let v = integrate_breaks(f, &s_breaks(lo, hi, &nat), T_INTEGRAL).value;
    m + 0.5 * v.ln()
}

/// ln ∫_0^∞ |∂_x W| t^{−1/2} dt.
fn lemma5_ln_lhs(k: &Kernel1d, x: f64, y: f64, m: f64) -> f64 {
    let f = |s: f64| {
        let g = k.dx_scaled(s.exp(), x, y).ln_abs();
        if g == f64::NEG_INFINITY {
            0.0
        } else {
            (g + 0.5 * s - m).exp()
        }
    };
    let big = x.max(y);
    let d = x - y;
    let (lo, hi) = ((d * d / 2800.0).ln(), (1e8 * big * big).ln());
    let nat = [(0.5 * x * y).ln(), (x * x).ln(), (y * y).ln(), (0.25 * d * d).ln()];
    let body = integrate_breaks(f, &s_breaks(lo, hi, &nat), T_INTEGRAL).value;
    // |∂_x W| √t decays like t^{−λ−1}
    let tail = f(hi) / (k.lambda() + 1.0);
    m + (body + tail).ln()
}

/// (ln LHS, ln RHS) of an inequality at one point. Points are (t, x, y),
/// (t, u, v) or (x, y) according to [`EstimateId::variables`].
pub fn estimate_sides(id: EstimateId, lambda: f64, p: &[f64]) -> Result<(f64, f64)> {
    BesselIndex::new(lambda)?;
    let nv = id.variables().len();
    if p.len() != nv {
        return Err(contract(format!("{id} takes {nv} variables {:?}, got {}", id.variables(), p.len())));
    }
    if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(domain(format!("sample coordinates must be positive and finite, got {p:?}")));
    }
    if !id.in_domain(p) {
        return Err(contract(format!("{p:?} lies outside the domain of {id}")));
    }
    Ok(sides_unchecked(id, &Kernel1d::new(lambda), p))
}

fn sides_unchecked(id: EstimateId, k: &Kernel1d, p: &[f64]) -> (f64, f64) {
    let l = k.lambda();
    match id {
        B13 => {
            let r = ln_rhs(id, l, p);
            (b13_ln_lhs(k, p[0], p[1], r), r)
        }
        Lemma5Lower | Lemma5Upper => {
            let r = ln_rhs(id, l, p);
            (lemma5_ln_lhs(k, p[0], p[1], r), r)
        }
        _ => {
            let (t, x, y) = (p[0], p[1], p[2]);
            let lhs = match id {
                A0 | A1 | A2 | A3 | A4 | A5 | A6 => k.scaled(t, x, y).ln_abs(),
                B3_5 => {
                    let q = (x - y) * (x - y) / (4.0 * t);
                    -q - 1.5 * t.ln() + (q - 0.5).abs().ln()
                }
                B8 | B9 | B10 | B12 => k.dt_scaled(t, x, y).ln_abs(),
                B11 => k.dt_gap_scaled(t, x, y).ln_abs(),
                B14 | B15 => k.gap_scaled(t, x, y).ln_abs(),
                Z => {
                    let ln_origin = -(l + 0.5) * t.ln() - 2.0 * l * LN_2 - ln_gamma_pos(l + 0.5);
                    ln_origin + k.origin_excess(t, x, y).abs().ln()
                }
                _ => k.dx_scaled(t, x, y).ln_abs(),
            };
            (lhs, ln_rhs(id, l, p))
        }
    }
}

/// Log-spaced sample grid. Each variable gets `per_decade` points per decade
/// at the base density; the report is computed at twice that density and
/// the drift compares with the even-index subgrid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub per_decade: usize,
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { per_decade: 16, t_range: (1e-3, 1e3), x_range: (1e-3, 1e3), y_range: (1e-3, 1e3) }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_decade == 0 {
            return Err(domain("per_decade must be at least 1"));
        }
        for (name, (a, b)) in [("t", self.t_range), ("x", self.x_range), ("y", self.y_range)] {
            if !(a > 0.0) || !(b > a) || !b.is_finite() {
                return Err(domain(format!("{name} range must satisfy 0 < lo < hi < ∞, got ({a}, {b})")));
            }
        }
        Ok(())
    }

    fn nodes(&self, (a, b): (f64, f64)) -> Vec<f64> {
        let n = 2 * ((self.per_decade as f64 * (b / a).log10()).round() as usize).max(1);
        let r = (b / a).ln();
        let mut v: Vec<f64> = (0..=n).map(|k| a * (r * k as f64 / n as f64).exp()).collect();
        v[n] = b;
        v
    }
}

/// Outcome of [`verify_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub id: EstimateId,
    pub lambda: f64,
    /// samples inside the domain at the refined density
    pub samples: usize,
    pub sup_ratio: f64,
    pub argmax: Vec<f64>,
    /// (sup at refined density − sup at base density) / sup at refined density
    pub drift: f64,
}

#[derive(Default)]
struct Scan {
    fine: Option<(f64, Vec<usize>)>,
    coarse: Option<f64>,
    count: usize,
    bad: Option<Vec<usize>>,
}

impl Scan {
    fn push(&mut self, r: f64, idx: &[usize]) {
        self.count += 1;
        if r.is_nan() || r == f64::INFINITY {
            if self.bad.is_none() {
                self.bad = Some(idx.to_vec());
            }
            return;
        }
        if self.fine.as_ref().is_none_or(|(b, _)| r > *b) {
            self.fine = Some((r, idx.to_vec()));
        }
        if idx.iter().all(|i| i % 2 == 0) && self.coarse.is_none_or(|b| r > b) {
            self.coarse = Some(r);
        }
    }

    fn merge(mut self, o: Scan) -> Scan {
        self.count += o.count;
        if self.bad.is_none() {
            self.bad = o.bad;
        }
        if let Some((r, i)) = o.fine {
            if self.fine.as_ref().is_none_or(|(b, _)| r > *b) {
                self.fine = Some((r, i));
            }
        }
        if let Some(r) = o.coarse {
            if self.coarse.is_none_or(|b| r > b) {
                self.coarse = Some(r);
            }
        }
        self
    }
}

/// Open interval of y/x to which the domain of `id` is confined, if any.
fn ratio_band(id: EstimateId) -> Option<(f64, f64)> {
    match id {
        A0 | C15 | Lemma5Upper => Some((2.0, f64::INFINITY)),
        A1 | A3 | B8 | B9 | B10 | C14 | Lemma5Lower => Some((0.0, 0.5)),
        B13 => Some((0.5, 2.0)),
        _ => None,
    }
}

/// Log-spaced y/x nodes starting at the band edges, so that every density
/// samples the same distance from the boundary.
fn ratio_nodes(spec: &SampleSpec, (lo, hi): (f64, f64)) -> Vec<f64> {
    const IN: f64 = 1e-12;
    let step = std::f64::consts::LN_10 / (2 * spec.per_decade) as f64;
    let r_min = spec.y_range.0 / spec.x_range.1;
    let r_max = spec.y_range.1 / spec.x_range.0;
    if lo > 0.0 && hi.is_finite() {
        let (a, b) = (lo * (1.0 + IN), hi * (1.0 - IN));
        let n = 2 * ((spec.per_decade as f64 * (b / a).log10()).round() as usize).max(1);
        return (0..=n).map(|k| a * ((b / a).ln() * k as f64 / n as f64).exp()).collect();
    }
    let mut v = Vec::new();
    if hi.is_finite() {
        let a = hi * (1.0 - IN);
        let mut k = 0;
        while a * (-step * k as f64).exp() >= r_min {
            v.push(a * (-step * k as f64).exp());
            k += 1;
        }
    } else {
        let a = lo * (1.0 + IN);
        let mut k = 0;
        while a * (step * k as f64).exp() <= r_max {
            v.push(a * (step * k as f64).exp());
            k += 1;
        }
    }
    v
}

/// Sup of LHS/RHS over the sample grid intersected with the domain of `id`.
///
/// Domains that are bands in y/x are sampled in (…, x, y/x) with the ratio
/// grid anchored at the band edges; samples whose y leaves `y_range` are
/// dropped.
pub fn verify_estimate(id: EstimateId, lambda: f64, spec: &SampleSpec) -> Result<EstimateReport> {
    BesselIndex::new(lambda)?;
    spec.validate()?;
    let k = Kernel1d::new(lambda);
    let band = ratio_band(id);
    let third = match band {
        Some(b) => ratio_nodes(spec, b),
        None => spec.nodes(spec.y_range),
    };
    let axes: Vec<Vec<f64>> = if id.variables().len() == 2 {
        vec![spec.nodes(spec.x_range), third]
    } else {
        vec![spec.nodes(spec.t_range), spec.nodes(spec.x_range), third]
    };
    if axes.iter().any(Vec::is_empty) {
        return Err(contract(format!("the sample grid has no point in the domain of {id}")));
    }
    let (ylo, yhi) = spec.y_range;
    let last = axes.len() - 1;
    let point = |idx: &[usize]| -> Vec<f64> {
        let mut p: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        if band.is_some() {
            p[last] *= p[last - 1];
        }
        p
    };
    let inner: usize = axes[1..].iter().map(Vec::len).product();
    let rows = par::map_range(axes[0].len(), |i0| {
        let mut sc = Scan::default();
        let mut idx = vec![0; axes.len()];
        idx[0] = i0;
        for flat in 0..inner {
            let mut rem = flat;
            for a in (1..axes.len()).rev() {
                idx[a] = rem % axes[a].len();
                rem /= axes[a].len();
            }
            let p = point(&idx);
            if band.is_some() && !(p[last] >= ylo && p[last] <= yhi) {
                continue;
            }
            if !id.in_domain(&p) {
                continue;
            }
            let (l, r) = sides_unchecked(id, &k, &p);
            sc.push(l - r, &idx);
        }
        sc
    });
    let sc = rows.into_iter().fold(Scan::default(), Scan::merge);
    if let Some(b) = sc.bad {
        return Err(Error::NonFinite { msg: format!("{id} ratio at λ={lambda}"), at: point(&b) });
    }
    if sc.count == 0 {
        return Err(contract(format!("the sample grid has no point in the domain of {id}")));
    }
    let (ln_fine, arg) = sc.fine.expect("finite samples exist");
    let drift = match sc.coarse {
        Some(c) if ln_fine > f64::NEG_INFINITY && c < ln_fine => -(c - ln_fine).exp_m1(),
        Some(_) => 0.0,
        None => 1.0,
    };
    Ok(EstimateReport { id, lambda, samples: sc.count, sup_ratio: ln_fine.exp(), argmax: point(&arg), drift })
}

// ---------------------------------------------------------------------------
// sampling grids for experiments

/// Spatial and temporal resolution of an experiment. Each axis has
/// geometric panels over `x_range` plus panels clustered around the
/// features of the source: offsets scale·2^{k/cluster_per_octave} from
/// scale/8 to the larger of 32·scale and the unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentGrid {
    pub x_range: (f64, f64),
    pub per_decade: usize,
    pub cluster_per_octave: usize,
    pub t_per_decade: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid { x_range: (1e-5, 1e2), per_decade: 6, cluster_per_octave: 2, t_per_decade: 24 }
    }
}

impl ExperimentGrid {
    fn validate(&self) -> Result<()> {
        let (a, b) = self.x_range;
        if !(a > 0.0) || !(b > a) || !b.is_finite() {
            return Err(domain(format!("x range must satisfy 0 < lo < hi < ∞, got ({a}, {b})")));
        }
        if self.per_decade == 0 || self.cluster_per_octave == 0 || self.t_per_decade == 0 {
            return Err(domain("grid densities must be at least 1"));
        }
        Ok(())
    }
}

/// Operator parameters shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorOptions {
    /// axis i of R_i
    pub riesz_axis: usize,
    /// truncation radii as multiples of the source feature size
    pub eps_factors: Vec<f64>,
    /// l of ℋ_{l,k}; k is the dimension
    pub hlk_l: usize,
    pub hlk_denominator: HlkDenominator,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            riesz_axis: 0,
            eps_factors: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            hlk_l: 1,
            hlk_denominator: HlkDenominator::Displayed,
        }
    }
}

fn anchors(p: &Profile1d) -> Vec<(f64, f64)> {
    match *p {
        Profile1d::Bump { center, width } => vec![(center, width)],
        Profile1d::Indicator { lo, hi } => {
            let mut v = vec![(hi, hi - lo)];
            if lo > 0.0 {
                v.push((lo, hi - lo));
            }
            v
        }
        _ => vec![],
    }
}

fn feature_size(s: &Separable) -> f64 {
    s.factors.iter().flat_map(anchors).map(|a| a.1).fold(f64::INFINITY, f64::min).min(1.0)
}

fn axis_edges(p: &Profile1d, g: &ExperimentGrid) -> Vec<f64> {
    let (lo, hi) = g.x_range;
    let panels = ((g.per_decade as f64 * (hi / lo).log10()).round() as usize).max(1);
    let mut e = geometric_edges(lo, hi, panels);
    let c = g.cluster_per_octave as i32;
    for (a, sc) in anchors(p) {
        e.push(a);
        // out to 32 feature sizes, and on to the unit scale
        let reach = (32.0 * sc).max(2.0 * a.max(1.0));
        let top = (c as f64 * (reach / sc).log2()).ceil() as i32;
        for k in -3 * c..=top {
            let off = sc * 2f64.powf(k as f64 / c as f64);
            e.push(a - off);
            e.push(a + off);
        }
    }
    let (slo, shi) = p.support();
    e.extend([slo, shi]);
    e.retain(|v| *v >= lo && *v <= hi);
    e.sort_by(f64::total_cmp);
    e.dedup_by(|b, a| *b - *a <= 1e-9 * *a);
    e
}

/// One sample per panel at its midpoint, weighted by the exact m_λ measure.
fn midpoint_axis(lambda: f64, edges: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let q = 2.0 * lambda + 1.0;
    edges.windows(2).map(|w| (0.5 * (w[0] + w[1]), (w[1].powf(q) - w[0].powf(q)) / q)).unzip()
}

struct Samples {
    axes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Samples {
    fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.0.len()).collect()
    }
    fn len(&self) -> usize {
        self.shape().iter().product()
    }
    fn index(&self, mut flat: usize, idx: &mut [usize]) {
        for a in (0..self.axes.len()).rev() {
            let n = self.axes[a].0.len();
            idx[a] = flat % n;
            flat /= n;
        }
    }
    fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(&i, a)| a.0[i]).collect()
    }
    fn weights(&self) -> Vec<f64> {
        let mut idx = vec![0; self.axes.len()];
        (0..self.len())
            .map(|f| {
                self.index(f, &mut idx);
                idx.iter().zip(&self.axes).map(|(&i, a)| a.1[i]).product()
            })
            .collect()
    }
}

fn midpoint_samples(lambda: &IndexVector, s: &Separable, g: &ExperimentGrid) -> Samples {
    let axes = s.factors.iter().zip(lambda.as_slice()).map(|(p, &l)| midpoint_axis(l, &axis_edges(p, g))).collect();
    Samples { axes }
}

fn gl_samples(lambda: &IndexVector, s: &Separable, g: &ExperimentGrid) -> Result<Samples> {
    let mut axes = Vec::new();
    for (p, &l) in s.factors.iter().zip(lambda.as_slice()) {
        let a = Axis::new(l, &axis_edges(p, g), 4)?;
        axes.push((a.nodes().to_vec(), a.weights().to_vec()));
    }
    Ok(Samples { axes })
}

/// ln-uniform times with trapezoid weights in ln t.
fn time_rule(t_min: f64, t_max: f64, per_decade: usize) -> (Vec<f64>, Vec<f64>) {
    let n = ((t_max / t_min).log10() * per_decade as f64).ceil().max(1.0) as usize;
    let h = (t_max / t_min).ln() / n as f64;
    let ts: Vec<f64> = (0..=n).map(|k| t_min * (h * k as f64).exp()).collect();
    let mut ws = vec![h; n + 1];
    ws[0] *= 0.5;
    ws[n] *= 0.5;
    (ts, ws)
}

const TABLE_REL: f64 = 1e-8;

/// Per-axis spatial integrals ∫K(t; x_i, y) p(y) y^{2λ} dy, indexed [i·nt + k].
struct AxisTable {
    w: Vec<f64>,
    d: Vec<f64>,
}

fn axis_table(k: &Kernel1d, p: &Profile1d, nodes: &[f64], ts: &[f64], dop: Option<AxisOp>) -> AxisTable {
    let rows = par::map_slice(nodes, |&x| {
        let w: Vec<f64> = ts.iter().map(|&t| axis_integral(k, AxisOp::W, t, x, p, 0.0, f64::INFINITY, TABLE_REL)).collect();
        let d: Vec<f64> = match dop {
            Some(op) => ts.iter().map(|&t| axis_integral(k, op, t, x, p, 0.0, f64::INFINITY, TABLE_REL)).collect(),
            None => vec![],
        };
        (w, d)
    });
    let (w, d): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    AxisTable { w: w.concat(), d: d.concat() }
}

/// Experimental operators built from the heat kernel tables.
#[derive(Debug, Clone, Copy)]
enum TableOp {
    Semigroup,
    Maximal,
    GFunction,
    Riesz,
}

/// Values of a semigroup-based operator at every sample point.
fn table_values(
    op: TableOp,
    lambda: &IndexVector,
    s: &Separable,
    smp: &Samples,
    ts: &[f64],
    ws: &[f64],
    axis: usize,
) -> Vec<f64> {
    let ks = kernels(lambda);
    let n = lambda.dim();
    let tables: Vec<AxisTable> = (0..n)
        .map(|j| {
            let dop = match op {
                TableOp::GFunction => Some(AxisOp::Dt),
                TableOp::Riesz if j == axis => Some(AxisOp::Dx),
                _ => None,
            };
            axis_table(&ks[j], &s.factors[j], &smp.axes[j].0, ts, dop)
        })
        .collect();
    let nt = ts.len();
    let t_min = ts[0];
    par::map_range(smp.len(), |f| {
        let mut idx = vec![0; n];
        smp.index(f, &mut idx);
        let w = |j: usize, k: usize| tables[j].w[idx[j] * nt + k];
        let d = |j: usize, k: usize| tables[j].d[idx[j] * nt + k];
        let prod = |k: usize| (0..n).map(|j| w(j, k)).product::<f64>();
        match op {
            TableOp::Semigroup => s.scale * prod(0),
            TableOp::Maximal => {
                let v: Vec<f64> = (0..nt).map(|k| prod(k).abs()).collect();
                let (km, &b) = v.iter().enumerate().fold((0, &v[0]), |m, c| if c.1 > m.1 { c } else { m });
                let mut best = b;
                if km > 0 && km + 1 < nt {
                    // vertex of the parabola through the three samples in ln t
                    let (a, c) = (v[km - 1], v[km + 1]);
                    let den = a - 2.0 * b + c;
                    if den < 0.0 {
                        best = b - (c - a) * (c - a) / (8.0 * den);
                    }
                }
                s.scale.abs() * best
            }
            TableOp::GFunction => {
                let terms: Vec<f64> = (0..nt)
                    .map(|k| {
                        let mut dt = 0.0;
                        for j in 0..n {
                            let mut term = d(j, k);
                            for l in (0..n).filter(|&l| l != j) {
                                term *= w(l, k);
                            }
                            dt += term;
                        }
                        ws[k] * (ts[k] * dt).powi(2)
                    })
                    .collect();
                s.scale.abs() * pairwise_sum(&terms).sqrt()
            }
            TableOp::Riesz => {
                let terms: Vec<f64> = (0..nt)
                    .map(|k| {
                        let mut v = d(axis, k);
                        for l in (0..n).filter(|&l| l != axis) {
                            v *= w(l, k);
                        }
                        ws[k] * ts[k].sqrt() * v
                    })
                    .collect();
                // below t_min, ∂_i W_t f(x) ≈ ∂_i f(x)
                let x = smp.point(&idx);
                let head = 2.0 * t_min.sqrt() * s.partial(axis, &x);
                (s.scale * pairwise_sum(&terms) + head) / PI.sqrt()
            }
        }
    })
}

const SHELL: ShellRule = ShellRule { r_nodes: 6, inner_panels: 3, th_nodes: 6, th_panels: 4, kernel_rel: 1e-7 };

/// (R_ε f) at each ε of `eps` (ascending) from the full transform.
fn riesz_truncations(lambda: &IndexVector, axis: usize, s: &Separable, smp: &Samples, full: &[f64], eps: &[f64]) -> Result<Vec<Vec<f64>>> {
    let ks = kernels(lambda);
    let n = lambda.dim();
    let e_max = eps.last().copied().unwrap_or(0.0);
    let rows: Vec<Result<Vec<f64>>> = par::map_range(smp.len(), |f| {
        let mut idx = vec![0; n];
        smp.index(f, &mut idx);
        let x = smp.point(&idx);
        let mut out = vec![full[f]; eps.len()];
        if support_distances(s, &x).0 >= e_max {
            return Ok(out);
        }
        let (mut inner, mut prev) = (0.0, 0.0);
        for (k, &e) in eps.iter().enumerate() {
            inner += riesz_shell(&ks, axis, s, &x, prev, e, &SHELL)?;
            prev = e;
            out[k] = full[f] - inner;
        }
        Ok(out)
    });
    rows.into_iter().collect()
}

// ---------------------------------------------------------------------------
// weak type

/// Operators of the weak-type experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakOperator {
    Maximal,
    GFunction,
    RieszMaximal,
    LOperator,
    /// ℋ_{l,k}
    #[serde(rename = "h_lk")]
    Hlk,
}

impl FromStr for WeakOperator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
            .map_err(|_| domain(format!("unknown operator '{s}' (maximal, g_function, riesz_maximal, l_operator, h_lk)")))
    }
}

fn sample_operator(
    op: WeakOperator,
    lambda: &IndexVector,
    s: &Separable,
    smp: &Samples,
    g: &ExperimentGrid,
    opts: &OperatorOptions,
) -> Result<Vec<f64>> {
    let n = lambda.dim();
    if s.factors.len() != n {
        return Err(contract("source dimension does not match lambda"));
    }
    let fs = feature_size(s);
    let t_min = 1e-3 * (fs / 8.0).powi(2);
    let t_max = 1e2 * g.x_range.1 * g.x_range.1;
    let (ts, ws) = time_rule(t_min, t_max, g.t_per_decade);
    match op {
        WeakOperator::Maximal => Ok(table_values(TableOp::Maximal, lambda, s, smp, &ts, &ws, 0)),
        WeakOperator::GFunction => Ok(table_values(TableOp::GFunction, lambda, s, smp, &ts, &ws, 0)),
        WeakOperator::RieszMaximal => {
            if opts.riesz_axis >= n {
                return Err(contract(format!("Riesz axis {} out of range for dimension {n}", opts.riesz_axis)));
            }
            let full = table_values(TableOp::Riesz, lambda, s, smp, &ts, &ws, opts.riesz_axis);
            let mut eps: Vec<f64> = opts.eps_factors.iter().map(|f| f * fs).collect();
            if eps.iter().any(|e| !(*e > 0.0)) {
                return Err(domain("truncation factors must be positive"));
            }
            eps.sort_by(f64::total_cmp);
            let tr = riesz_truncations(lambda, opts.riesz_axis, s, smp, &full, &eps)?;
            Ok(full.iter().zip(&tr).map(|(v, r)| r.iter().fold(v.abs(), |m, x| m.max(x.abs()))).collect())
        }
        WeakOperator::LOperator | WeakOperator::Hlk => {
            let alpha = AlphaVector::new(lambda.as_slice().to_vec())?;
            let src = Source::separable(s.clone());
            let vals: Vec<Result<f64>> = par::map_range(smp.len(), |f| {
                let mut idx = vec![0; n];
                smp.index(f, &mut idx);
                let x = smp.point(&idx);
                match op {
                    WeakOperator::LOperator => l_operator(&alpha, &src, &x),
                    _ => h_lk(&alpha, opts.hlk_l, n, &src, &x, opts.hlk_denominator),
                }
            });
            vals.into_iter().collect()
        }
    }
}

fn auto_gammas(v: &[f64], per_decade: usize) -> Vec<f64> {
    let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return vec![1.0];
    }
    let n = 8 * per_decade.max(1);
    (0..=n).map(|k| top * 10f64.powf(-(k as f64) / per_decade.max(1) as f64)).collect()
}

/// Distribution profile of |T g| at `gammas` (automatic levels when empty)
/// and the exact weak-L¹ quasinorm of the sampled values.
pub fn weak_profile(
    op: WeakOperator,
    lambda: &IndexVector,
    g: &Separable,
    grid: &ExperimentGrid,
    opts: &OperatorOptions,
    gammas: &[f64],
) -> Result<(DistributionProfile, f64)> {
    grid.validate()?;
    let smp = midpoint_samples(lambda, g, grid);
    let v = sample_operator(op, lambda, g, &smp, grid, opts)?;
    let w = smp.weights();
    let levels = if gammas.is_empty() { auto_gammas(&v, 4) } else { gammas.to_vec() };
    Ok((profile_from_samples(&v, &w, &levels)?, weak_sup(&v, &w)))
}

/// Placement of the spike centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeCenter {
    /// (1, …, 1)
    Interior,
    /// (h, 1, …, 1): the bump touches the first coordinate hyperplane
    NearAxis,
}

impl SpikeCenter {
    pub fn point(self, n: usize, h: f64) -> Vec<f64> {
        let mut c = vec![1.0; n];
        if self == SpikeCenter::NearAxis {
            c[0] = h;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeakTypeSpec {
    pub widths: Vec<f64>,
    pub centers: Vec<SpikeCenter>,
    pub grid: ExperimentGrid,
    pub options: OperatorOptions,
    pub gammas_per_decade: usize,
}

impl Default for WeakTypeSpec {
    fn default() -> Self {
        WeakTypeSpec {
            widths: vec![1e-1, 1e-2, 1e-3],
            centers: vec![SpikeCenter::Interior, SpikeCenter::NearAxis],
            grid: ExperimentGrid::default(),
            options: OperatorOptions::default(),
            gammas_per_decade: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakTypeRow {
    pub center: SpikeCenter,
    pub center_point: Vec<f64>,
    pub h: f64,
    pub points: usize,
    /// sup_γ γ·m_λ{|T f_h| > γ} / ‖f_h‖₁
    pub quasinorm: f64,
    pub profile: DistributionProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakTypeReport {
    pub operator: WeakOperator,
    pub lambda: Vec<f64>,
    pub rows: Vec<WeakTypeRow>,
    pub family_max: f64,
    /// largest max/min quasinorm ratio across widths, over centres
    pub growth_ratio: f64,
}

/// Weak-L¹ quasinorms of T applied to L¹-normalised spikes of each width.
pub fn weak_type_experiment(op: WeakOperator, lambda: &IndexVector, spec: &WeakTypeSpec) -> Result<WeakTypeReport> {
    spec.grid.validate()?;
    if spec.widths.is_empty() || spec.centers.is_empty() {
        return Err(contract("the spike family needs at least one width and one centre"));
    }
    let n = lambda.dim();
    let mut rows = Vec::new();
    for &center in &spec.centers {
        for &h in &spec.widths {
            let c = center.point(n, h);
            let s = Separable::spike(lambda, &c, h)?;
            let smp = midpoint_samples(lambda, &s, &spec.grid);
            let v = sample_operator(op, lambda, &s, &smp, &spec.grid, &spec.options)?;
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                let mut idx = vec![0; n];
                smp.index(i, &mut idx);
                return Err(Error::NonFinite { msg: format!("{op:?} of the spike h={h}"), at: smp.point(&idx) });
            }
            let w = smp.weights();
            let profile = profile_from_samples(&v, &w, &auto_gammas(&v, spec.gammas_per_decade))?;
            rows.push(WeakTypeRow { center, center_point: c, h, points: v.len(), quasinorm: weak_sup(&v, &w), profile });
        }
    }
    let family_max = rows.iter().map(|r| r.quasinorm).fold(0.0, f64::max);
    let growth_ratio = spec
        .centers
        .iter()
        .map(|&c| {
            let q: Vec<f64> = rows.iter().filter(|r| r.center == c).map(|r| r.quasinorm).collect();
            q.iter().fold(0.0f64, |m, v| m.max(*v)) / q.iter().fold(f64::INFINITY, |m, v| m.min(*v))
        })
        .fold(1.0, f64::max);
    Ok(WeakTypeReport { operator: op, lambda: lambda.as_slice().to_vec(), rows, family_max, growth_ratio })
}

/// All profiles of a report as CSV, rows in report order.
pub fn write_weak_profiles_csv<W: Write>(rep: &WeakTypeReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wr.write_record(["h", "gamma", "measure", "gamma_times_measure"]).map_err(io)?;
    for r in &rep.rows {
        for (g, m) in r.profile.gammas.iter().zip(&r.profile.measures) {
            wr.write_record([r.h.to_string(), g.to_string(), m.to_string(), (g * m).to_string()]).map_err(io)?;
        }
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

// ---------------------------------------------------------------------------
// strong type

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrongOperator {
    Semigroup { t: f64 },
    Maximal,
    GFunction,
    RieszTruncated { eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrongTypeSpec {
    pub p: f64,
    pub widths: Vec<f64>,
    /// defaults to (1, …, 1)
    pub center: Option<Vec<f64>>,
    pub grid: ExperimentGrid,
    pub options: OperatorOptions,
}

impl Default for StrongTypeSpec {
    fn default() -> Self {
        StrongTypeSpec {
            p: 2.0,
            widths: vec![0.2, 0.1, 0.05],
            center: None,
            grid: ExperimentGrid::default(),
            options: OperatorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongTypeRow {
    pub h: f64,
    pub norm_f: f64,
    pub norm_tf: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongTypeReport {
    pub operator: StrongOperator,
    pub p: f64,
    pub lambda: Vec<f64>,
    pub rows: Vec<StrongTypeRow>,
    /// max/min − 1 over the family
    pub growth: f64,
    /// growth above 10%
    pub flagged: bool,
}

fn profile_lp(p: &Profile1d, lambda: f64, q: f64) -> f64 {
    let (a, b) = p.support();
    let mut pts = vec![a];
    pts.extend(p.breaks().into_iter().filter(|v| *v > a && *v < b));
    pts.push(b);
    integrate_breaks(|y| p.value(y).abs().powf(q) * y.powf(2.0 * lambda), &pts, Tol::rel(1e-12)).value
}

/// ‖T f_h‖_p / ‖f_h‖_p over a family of spikes.
pub fn strong_type_experiment(op: StrongOperator, lambda: &IndexVector, spec: &StrongTypeSpec) -> Result<StrongTypeReport> {
    let p = spec.p;
    if !(p > 1.0) || !p.is_finite() {
        return Err(domain(format!("strong-type exponent must lie in (1, ∞), got {p}")));
    }
    spec.grid.validate()?;
    if spec.widths.is_empty() {
        return Err(contract("the family needs at least one width"));
    }
    let n = lambda.dim();
    let center = spec.center.clone().unwrap_or_else(|| vec![1.0; n]);
    let mut rows = Vec::new();
    for &h in &spec.widths {
        let s = Separable::spike(lambda, &center, h)?;
        let smp = gl_samples(lambda, &s, &spec.grid)?;
        let fs = feature_size(&s);
        let t_max = 1e2 * spec.grid.x_range.1 * spec.grid.x_range.1;
        let (ts, ws) = time_rule(1e-3 * (fs / 8.0).powi(2), t_max, spec.grid.t_per_decade);
        let v = match op {
            StrongOperator::Semigroup { t } => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(domain(format!("time must be positive and finite, got {t}")));
                }
                table_values(TableOp::Semigroup, lambda, &s, &smp, &[t], &[1.0], 0)
            }
            StrongOperator::Maximal => table_values(TableOp::Maximal, lambda, &s, &smp, &ts, &ws, 0),
            StrongOperator::GFunction => table_values(TableOp::GFunction, lambda, &s, &smp, &ts, &ws, 0),
            StrongOperator::RieszTruncated { eps } => {
                if !(eps > 0.0) {
                    return Err(domain("truncation radius must be positive"));
                }
                let axis = spec.options.riesz_axis;
                if axis >= n {
                    return Err(contract(format!("Riesz axis {axis} out of range for dimension {n}")));
                }
                let full = table_values(TableOp::Riesz, lambda, &s, &smp, &ts, &ws, axis);
                riesz_truncations(lambda, axis, &s, &smp, &full, &[eps])?.into_iter().map(|r| r[0]).collect()
            }
        };
        let w = smp.weights();
        let terms: Vec<f64> = v.iter().zip(&w).map(|(v, w)| w * v.abs().powf(p)).collect();
        let norm_tf = pairwise_sum(&terms).powf(1.0 / p);
        let norm_f = s.scale.abs()
            * s.factors.iter().zip(lambda.as_slice()).map(|(f, &l)| profile_lp(f, l, p)).product::<f64>().powf(1.0 / p);
        rows.push(StrongTypeRow { h, norm_f, norm_tf, ratio: norm_tf / norm_f });
    }
    let hi = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let growth = hi / lo - 1.0;
    Ok(StrongTypeReport { operator: op, p, lambda: lambda.as_slice().to_vec(), rows, growth, flagged: growth > 0.1 })
}

// ---------------------------------------------------------------------------
// pointwise convergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub x: Vec<f64>,
    /// |W_t f(x) − f(x)| for each t of the report
    pub errors: Vec<f64>,
    pub tail_decreasing: bool,
    /// least-squares slope of ln error against ln t over the last three times
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub lambda: Vec<f64>,
    /// times in decreasing order
    pub t: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// |W_t f(x) − f(x)| along a decreasing sequence of times.
pub fn pointwise_convergence_experiment(
    lambda: &IndexVector,
    f: &Separable,
    xs: &[Vec<f64>],
    ts: &[f64],
) -> Result<ConvergenceReport> {
    if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(domain("times must be positive and finite"));
    }
    let mut t = ts.to_vec();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    let src = Source::separable(f.clone());
    let mut rows = Vec::new();
    for x in xs {
        let fx = f.value(x);
        let errs: Vec<Result<f64>> = par::map_slice(&t, |&tk| Ok((apply_semigroup(lambda, tk, &src, x)? - fx).abs()));
        let errors: Vec<f64> = errs.into_iter().collect::<Result<_>>()?;
        let tail = errors.len().saturating_sub(3);
        let tail_decreasing = errors[tail..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
        let (lx, ly): (Vec<f64>, Vec<f64>) =
            t[tail..].iter().zip(&errors[tail..]).filter(|(_, e)| **e > 0.0).map(|(t, e)| (t.ln(), e.ln())).unzip();
        let rate = if lx.len() >= 2 { Some(fit_slope(&lx, &ly)) } else { None };
        rows.push(ConvergenceRow { x: x.clone(), errors, tail_decreasing, rate });
    }
    Ok(ConvergenceReport { lambda: lambda.as_slice().to_vec(), t, rows })
}
