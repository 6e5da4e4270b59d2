//! One-dimensional quadrature: Gauss–Legendre rules and a global adaptive
//! Gauss–Kronrod (7/15) integrator with breakpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

const MAX_GL: usize = 128;

/// Gauss–Legendre nodes and weights on [−1, 1], ascending nodes.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Vec<OnceLock<(Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    assert!((1..=MAX_GL).contains(&n), "Gauss-Legendre order {n} out of range");
    let cache = CACHE.get_or_init(|| (0..=MAX_GL).map(|_| OnceLock::new()).collect());
    cache[n].get_or_init(|| compute_gauss_legendre(n))
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tol {
    fn default() -> Self {
        Tol { abs: 1e-300, rel: 1e-12, max_intervals: 4000 }
    }
}

impl Tol {
    pub fn rel(rel: f64) -> Self {
        Tol { rel, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let resasc = resasc * h.abs();
    let resk = resk * h;
    let mut err = (resk - resg * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let round = 50.0 * f64::EPSILON * resk.abs();
    (resk, err.max(round))
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err).then(o.a.total_cmp(&self.a))
    }
}

/// ∫_a^b f by global adaptive Gauss–Kronrod.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tol) -> QuadResult {
    integrate_breaks(f, &[a, b], tol)
}

/// ∫ f over [p_0, p_last] with the interior points used as initial breaks.
/// `points` must be nondecreasing; empty pieces are dropped.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tol) -> QuadResult {
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, err) = gk15(&f, w[0], w[1]);
            evals += 15;
            heap.push(Piece { a: w[0], b: w[1], value, err });
        }
    }
    let totals = |h: &BinaryHeap<Piece>| {
        let mut v: Vec<(f64, f64, f64)> = h.iter().map(|p| (p.a, p.value, p.err)).collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        let value: f64 = v.iter().map(|p| p.1).sum();
        let err: f64 = v.iter().map(|p| p.2).sum();
        (value, err)
    };
    // running sums steer the loop; the ordered sum confirms convergence
    let (mut run_v, mut run_e) = totals(&heap);
    let mut converged = false;
    loop {
        if run_e <= tol.abs.max(tol.rel * run_v.abs()) {
            let (value, err) = totals(&heap);
            if err <= tol.abs.max(tol.rel * value.abs()) {
                converged = true;
                break;
            }
            run_v = value;
            run_e = err;
        }
        if heap.len() >= tol.max_intervals {
            break;
        }
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            // interval exhausted at machine resolution
            run_e -= p.err;
            heap.push(Piece { err: 0.0, ..p });
            continue;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evals += 30;
        run_v += v1 + v2 - p.value;
        run_e += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
    }
    let (value, error) = totals(&heap);
    QuadResult { value, error, evals, converged }
}

/// ∫_0^{hi} g(y) y^{2λ} dy for λ > −1/2.
///
/// The first piece [0, b_1] is mapped by y = u^{1/(2λ+1)}, which absorbs the
/// weight exactly; the rest is integrated with the weight folded in.
/// `breaks` are interior points in (0, hi), sorted.
pub fn integrate_weighted_from_zero<F: Fn(f64) -> f64>(
    g: F,
    lambda: f64,
    hi: f64,
    breaks: &[f64],
    tol: Tol,
) -> QuadResult {
    let p = 2.0 * lambda + 1.0;
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < hi).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let b1 = pts.first().copied().unwrap_or(hi);
    let inv_p = 1.0 / p;
    let near = integrate(|u: f64| g(u.powf(inv_p)) * inv_p, 0.0, b1.powf(p), tol);
    let mut all = vec![b1];
    all.extend(pts.iter().copied().filter(|&b| b > b1));
    all.push(hi);
    let rest = if lambda == 0.0 {
        integrate_breaks(&g, &all, tol)
    } else {
        integrate_breaks(|y: f64| g(y) * y.powf(2.0 * lambda), &all, tol)
    };
    QuadResult {
        value: near.value + rest.value,
        error: near.error + rest.error,
        evals: near.evals + rest.evals,
        converged: near.converged && rest.converged,
    }
}

/// Composite Gauss–Legendre rule on [a, b] split at `breaks` (sorted,
/// inside (a,b)), `order` nodes per piece. Returns (nodes, weights).
pub fn composite_rule(a: f64, b: f64, breaks: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut edges = vec![a];
    edges.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    edges.push(b);
    let mut xs = Vec::with_capacity((edges.len() - 1) * order);
    let mut ws = Vec::with_capacity(xs.capacity());
    for e in edges.windows(2) {
        let c = 0.5 * (e[0] + e[1]);
        let h = 0.5 * (e[1] - e[0]);
        for (x, w) in gx.iter().zip(gw) {
            xs.push(c + h * x);
            ws.push(h * w);
        }
    }
    (xs, ws)
}

/// Pairwise summation in a fixed order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
}
