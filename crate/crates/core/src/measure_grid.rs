//! Tensor quadrature grids on (0,∞)^n for the measure ∏ x_j^{2λ_j} dx,
//! sampled functions on them and the norms built from those.

use crate::bessel_kernel::IndexVector;
use crate::error::{contract, domain, Error, Result};
use crate::par;
use crate::quadrature::{composite_rule, pairwise_sum};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

/// One axis: composite Gauss–Legendre nodes with x^{2λ} folded into the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    edges: Vec<f64>,
    lambda: f64,
}

impl Axis {
    /// Panels between consecutive `edges`, `order` nodes each.
    pub fn new(lambda: f64, edges: &[f64], order: usize) -> Result<Self> {
        if !(4..=16).contains(&order) {
            return Err(domain(format!("rule order must lie in 4..=16, got {order}")));
        }
        if edges.len() < 2 {
            return Err(domain("an axis needs at least one panel"));
        }
        if !(edges[0] > 0.0) {
            return Err(domain(format!("axis must start at a > 0, got {}", edges[0])));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || !edges.iter().all(|e| e.is_finite()) {
            return Err(domain("panel edges must be finite and strictly increasing"));
        }
        let n = edges.len();
        let (nodes, mut weights) = composite_rule(edges[0], edges[n - 1], &edges[1..n - 1], order);
        if lambda != 0.0 {
            for (w, x) in weights.iter_mut().zip(&nodes) {
                *w *= x.powf(2.0 * lambda);
            }
        }
        Ok(Axis { nodes, weights, edges: edges.to_vec(), lambda })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    /// Weights of ∫ · x^{2λ} dx.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Product of one [`Axis`] per coordinate. Points are enumerated row-major
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    axes: Vec<Axis>,
    lambda: IndexVector,
}

/// Geometric edges a·(b/a)^{k/panels}, k = 0..=panels.
pub fn geometric_edges(a: f64, b: f64, panels: usize) -> Vec<f64> {
    let r = (b / a).ln();
    let mut e: Vec<f64> = (0..=panels).map(|k| a * (r * k as f64 / panels as f64).exp()).collect();
    e[0] = a;
    e[panels] = b;
    e
}

/// n identical axes with `panels` geometric panels on [a, b].
pub fn make_grid(n: usize, span: (f64, f64), panels: usize, order: usize, lambda: &IndexVector) -> Result<TensorGrid> {
    let (a, b) = span;
    if !(a > 0.0) {
        return Err(domain(format!("grid span must start at a > 0, got {a}")));
    }
    if !(b > a) || !b.is_finite() {
        return Err(domain(format!("grid span needs a < b < ∞, got [{a}, {b}]")));
    }
    if panels == 0 {
        return Err(domain("panels must be at least 1"));
    }
    if n != lambda.dim() {
        return Err(contract(format!("grid dimension {n} does not match index vector ({})", lambda.dim())));
    }
    let e = geometric_edges(a, b, panels);
    TensorGrid::from_breaks(lambda, vec![e; n], order)
}

impl TensorGrid {
    /// Composite rule of `order` between consecutive breakpoints on each axis.
    pub fn from_breaks(lambda: &IndexVector, edges: Vec<Vec<f64>>, order: usize) -> Result<Self> {
        if edges.len() != lambda.dim() {
            return Err(contract(format!(
                "{} axes given for index vector of dimension {}",
                edges.len(),
                lambda.dim()
            )));
        }
        let axes = edges
            .iter()
            .zip(lambda.as_slice())
            .map(|(e, &l)| Axis::new(l, e, order))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorGrid { axes, lambda: lambda.clone() })
    }

    pub fn from_axes(lambda: &IndexVector, axes: Vec<Axis>) -> Result<Self> {
        if axes.len() != lambda.dim() || axes.iter().zip(lambda.as_slice()).any(|(a, &l)| a.lambda != l) {
            return Err(contract("axes do not match the index vector"));
        }
        Ok(TensorGrid { axes, lambda: lambda.clone() })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }
    pub fn dim(&self) -> usize {
        self.axes.len()
    }
    pub fn lambda(&self) -> &IndexVector {
        &self.lambda
    }
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }
    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of flat index `idx` written into `out`.
    pub fn point(&self, mut idx: usize, out: &mut [f64]) {
        for (j, ax) in self.axes.iter().enumerate().rev() {
            let n = ax.len();
            out[j] = ax.nodes[idx % n];
            idx /= n;
        }
    }

    /// Product weight of flat index `idx`.
    pub fn weight(&self, mut idx: usize) -> f64 {
        let mut w = 1.0;
        for ax in self.axes.iter().rev() {
            let n = ax.len();
            w *= ax.weights[idx % n];
            idx /= n;
        }
        w
    }

    /// All product weights in row-major order.
    pub fn all_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0];
        for ax in &self.axes {
            let mut next = Vec::with_capacity(w.len() * ax.len());
            for &a in &w {
                next.extend(ax.weights.iter().map(|b| a * b));
            }
            w = next;
        }
        w
    }

    pub fn check_lambda(&self, lambda: &IndexVector) -> Result<()> {
        if *lambda != self.lambda {
            return Err(contract(format!(
                "grid built for lambda {:?}, used with {:?}",
                self.lambda.as_slice(),
                lambda.as_slice()
            )));
        }
        Ok(())
    }
}

/// Values on a [`TensorGrid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<TensorGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Arc<TensorGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(contract(format!("{} values for a grid of {} points", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("grid function values must be finite, found {v}")));
        }
        Ok(GridFunction { grid, values })
    }

    /// Sample `f` at every node (in parallel when enabled).
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync + Send>(grid: Arc<TensorGrid>, f: F) -> Self {
        let n = grid.dim();
        let values = par::map_range(grid.len(), |i| {
            let mut p = vec![0.0; n];
            grid.point(i, &mut p);
            f(&p)
        });
        GridFunction { grid, values }
    }

    pub fn zeros(grid: Arc<TensorGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<TensorGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// CSV with header `axis0,…,axis{n-1},value`, one row per node.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.grid.dim();
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..n).map(|j| format!("axis{j}")).collect();
        header.push("value".into());
        wr.write_record(&header).map_err(io_err)?;
        let mut p = vec![0.0; n];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.point(i, &mut p);
            let mut row: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
            row.push(format!("{v:e}"));
            wr.write_record(&row).map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Inverse of [`write_csv`](Self::write_csv); coordinates must match `grid`.
    pub fn read_csv<R: Read>(grid: Arc<TensorGrid>, r: R) -> Result<Self> {
        let n = grid.dim();
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(io_err)?.clone();
        let want: Vec<String> = (0..n).map(|j| format!("axis{j}")).chain(["value".to_string()]).collect();
        if header.iter().ne(want.iter().map(String::as_str)) {
            return Err(contract(format!("unexpected CSV header {header:?}")));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut p = vec![0.0; n];
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(io_err)?;
            if i >= grid.len() || rec.len() != n + 1 {
                return Err(contract("CSV shape does not match the grid"));
            }
            grid.point(i, &mut p);
            for j in 0..n {
                let x: f64 = parse(&rec[j])?;
                if (x - p[j]).abs() > 1e-14 * p[j] {
                    return Err(contract(format!("row {i}: coordinate {x} is not grid node {}", p[j])));
                }
            }
            values.push(parse(&rec[n])?);
        }
        GridFunction::from_values(grid, values)
    }
}

fn parse(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| contract(format!("not a number: {s:?}")))
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// ∫ f ∏ y_j^{2λ_j} dy by the tensor rule.
pub fn weighted_integral(f: &GridFunction, lambda: &IndexVector) -> Result<f64> {
    f.grid.check_lambda(lambda)?;
    let w = f.grid.all_weights();
    let terms: Vec<f64> = f.values.iter().zip(&w).map(|(v, w)| v * w).collect();
    Ok(pairwise_sum(&terms))
}

/// ‖f‖_{L^p(m_λ)}, 1 ≤ p < ∞.
pub fn lp_norm(f: &GridFunction, p: f64, lambda: &IndexVector) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(domain(format!("L^p norm needs 1 <= p < inf, got {p}")));
    }
    f.grid.check_lambda(lambda)?;
    let w = f.grid.all_weights();
    let terms: Vec<f64> = f.values.iter().zip(&w).map(|(v, w)| v.abs().powf(p) * w).collect();
    Ok(pairwise_sum(&terms).powf(1.0 / p))
}

/// m_λ{|f| > γ}, the sampled indicator integrated with the grid weights.
pub fn distribution_measure(f: &GridFunction, gamma: f64, lambda: &IndexVector) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(domain(format!("level must be positive, got {gamma}")));
    }
    f.grid.check_lambda(lambda)?;
    let w = f.grid.all_weights();
    Ok(level_measure(&f.values, &w, gamma))
}

fn level_measure(v: &[f64], w: &[f64], gamma: f64) -> f64 {
    let terms: Vec<f64> = v.iter().zip(w).map(|(v, w)| if v.abs() > gamma { *w } else { 0.0 }).collect();
    pairwise_sum(&terms)
}

/// γ ↦ m_λ{|f| > γ} on a decreasing list of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionProfile {
    pub gammas: Vec<f64>,
    pub measures: Vec<f64>,
}

impl DistributionProfile {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }
    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }
    pub fn gamma_times_measure(&self) -> Vec<f64> {
        self.gammas.iter().zip(&self.measures).map(|(g, m)| g * m).collect()
    }
    /// max_γ γ·m over the listed levels.
    pub fn sup(&self) -> f64 {
        self.gamma_times_measure().into_iter().fold(0.0, f64::max)
    }
}

/// Profile of values `v` with cell weights `w` at `gammas` (sorted decreasing
/// on output).
pub fn profile_from_samples(v: &[f64], w: &[f64], gammas: &[f64]) -> Result<DistributionProfile> {
    if gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(domain("levels must be positive"));
    }
    let mut gammas = gammas.to_vec();
    gammas.sort_by(|a, b| b.total_cmp(a));
    gammas.dedup();
    let measures = gammas.iter().map(|&g| level_measure(v, w, g)).collect();
    Ok(DistributionProfile { gammas, measures })
}

/// sup_{γ>0} γ·Σ{w_i : |v_i| > γ}. The sup is approached as γ ↑ |v_k|, so it
/// equals max_k |v_k|·Σ{w_i : |v_i| ≥ |v_k|}.
pub fn weak_sup(v: &[f64], w: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut best = 0.0f64;
    let mut acc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let level = v[order[i]].abs();
        if level == 0.0 {
            break;
        }
        while i < order.len() && v[order[i]].abs() == level {
            acc += w[order[i]];
            i += 1;
        }
        best = best.max(level * acc);
    }
    best
}

/// Distribution profile on `gammas` together with the exact weak-L¹ quasinorm
/// of the sampled function.
pub fn weak_l1(f: &GridFunction, lambda: &IndexVector, gammas: &[f64]) -> Result<(DistributionProfile, f64)> {
    f.grid.check_lambda(lambda)?;
    let w = f.grid.all_weights();
    let p = profile_from_samples(&f.values, &w, gammas)?;
    Ok((p, weak_sup(&f.values, &w)))
}
