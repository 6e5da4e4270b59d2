use bessel_harmonics::bessel_kernel::IndexVector;
use bessel_harmonics::measure_grid::{make_grid, GridFunction};
use bessel_harmonics::operators::*;
use bessel_harmonics::quadrature::gauss_legendre;
use bessel_harmonics::special_fn::gamma_fn;
use bessel_harmonics::Error;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn lam(v: &[f64]) -> IndexVector {
    IndexVector::new(v.to_vec()).unwrap()
}

fn cosine(z: &[f64]) -> Source {
    Source::separable(Separable::new(z.iter().map(|&z| Profile1d::Cos { freq: z }).collect(), 1.0))
}

fn bump2(c: [f64; 2], w: f64) -> Source {
    Source::separable(Separable::new(
        vec![Profile1d::Bump { center: c[0], width: w }, Profile1d::Bump { center: c[1], width: w }],
        1.0,
    ))
}

fn zero(n: usize) -> Source {
    Source::separable(Separable::new(vec![Profile1d::Const; n], 0.0))
}

// ---------- semigroup ----------

#[test]
fn cosine_is_an_eigenfunction_at_lambda_zero() {
    let l = lam(&[0.0]);
    for &z in &[0.5, 1.0, 3.0] {
        for &t in &[1e-3, 0.1, 1.0, 4.0] {
            for &x in &[0.05, 0.7, 2.0, 9.0] {
                let v = apply_semigroup(&l, t, &cosine(&[z]), &[x]).unwrap();
                let want = (-t * z * z).exp() * (z * x).cos();
                assert!((v - want).abs() < 1e-9, "z={z} t={t} x={x}: {v} {want}");
            }
        }
    }
    let l2 = lam(&[0.0, 0.0]);
    let v = apply_semigroup(&l2, 0.3, &cosine(&[1.0, 2.0]), &[0.4, 1.3]).unwrap();
    let want = (-0.3f64 * 5.0).exp() * 0.4f64.cos() * 2.6f64.cos();
    assert!((v - want).abs() < 1e-9);
}

#[test]
fn constants_are_preserved() {
    for &l in &[-0.3, 0.7, 2.5] {
        for &t in &[0.01, 1.0, 50.0] {
            let v = apply_semigroup(&lam(&[l]), t, &Source::separable(Separable::new(vec![Profile1d::Const], 1.0)), &[1.3])
                .unwrap();
            assert!((v - 1.0).abs() < 1e-9, "l={l} t={t}: {v}");
        }
    }
}

#[test]
fn small_time_limit_by_extrapolation() {
    // W_t f(x) = f(x) + a t + O(t²): the Richardson combination removes the linear term
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.2], 0.5);
    let x = [1.1, 1.05];
    let fx = f.value(&x);
    let v: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&t| apply_semigroup(&l, t, &f, &x).unwrap()).collect();
    let r1 = (10.0 * v[1] - v[0]) / 9.0;
    let r2 = (10.0 * v[2] - v[1]) / 9.0;
    assert!((v[2] - fx).abs() < (v[1] - fx).abs());
    assert!((r2 - fx).abs() < 1e-5, "{r2} {fx}");
    assert!((r2 - fx).abs() < 0.1 * (r1 - fx).abs());
}

#[test]
fn contraction_on_bounded_functions() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([0.8, 1.5], 0.4);
    let fmax = (-1.0f64).exp();
    for &t in &[1e-3, 0.05, 1.0] {
        for i in 0..6 {
            for j in 0..6 {
                let x = [0.5 + 0.1 * i as f64, 1.2 + 0.1 * j as f64];
                assert!(apply_semigroup(&l, t, &f, &x).unwrap() <= fmax * (1.0 + 1e-6));
            }
        }
    }
}

#[test]
fn semigroup_law_through_a_grid() {
    let l = lam(&[0.7]);
    let f = Source::separable(Separable::new(vec![Profile1d::Bump { center: 1.0, width: 0.6 }], 1.0));
    let (s, t) = (0.05, 0.08);
    let g = Arc::new(make_grid(1, (1e-6, 6.0), 60, 12, &l).unwrap());
    let ws = GridFunction::from_fn(g, |y| apply_semigroup(&l, s, &f, y).unwrap());
    let ws = Source::grid(ws);
    for &x in &[0.3, 0.9, 1.4, 2.0] {
        let lhs = apply_semigroup(&l, t, &ws, &[x]).unwrap();
        let rhs = apply_semigroup(&l, t + s, &f, &[x]).unwrap();
        assert!((lhs - rhs).abs() < 1e-5, "x={x}: {lhs} {rhs}");
    }
}

#[test]
fn grid_and_separable_sources_agree() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.5);
    let g = Arc::new(make_grid(2, (0.5, 1.5), 16, 8, &l).unwrap());
    let gf = Source::grid(GridFunction::from_fn(g, |y| f.value(y)));
    for &t in &[0.01, 0.3] {
        let x = [0.9, 1.2];
        let a = apply_semigroup(&l, t, &f, &x).unwrap();
        let b = apply_semigroup(&l, t, &gf, &x).unwrap();
        assert!((a - b).abs() < 1e-7, "{a} {b}");
    }
}

#[test]
fn grid_lambda_must_match() {
    let g = Arc::new(make_grid(1, (0.5, 1.5), 4, 4, &lam(&[0.3])).unwrap());
    let gf = Source::grid(GridFunction::zeros(g));
    assert!(matches!(apply_semigroup(&lam(&[0.4]), 1.0, &gf, &[1.0]), Err(Error::Contract(_))));
    assert!(apply_semigroup(&lam(&[0.3]), 0.0, &gf, &[1.0]).is_err());
}

// ---------- maximal operator ----------

#[test]
fn maximal_dominates_members_and_is_bounded() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.3);
    let fmax = (-1.0f64).exp();
    let spec = QuadratureSpec::default();
    for &x in &[[1.0, 1.0], [1.2, 0.9], [3.0, 0.2], [0.05, 0.05]] {
        let m = maximal_op(&l, &f, &x, &spec).unwrap();
        let one = apply_semigroup(&l, 1.0, &f, &x).unwrap();
        assert!(m.value >= one.abs());
        assert!(m.value <= fmax * (1.0 + 1e-6));
        assert!(m.t >= spec.t_min && m.t <= spec.t_max);
    }
    let z = maximal_op(&l, &zero(2), &[1.0, 1.0], &spec).unwrap();
    assert_eq!(z.value, 0.0);
}

#[test]
fn maximal_finds_interior_peak() {
    // one-dimensional λ=0 cosine: |W_t f(x)| = e^{-tz²}|cos zx| peaks as t → 0
    let l = lam(&[0.0]);
    let spec = QuadratureSpec { t_min: 1e-4, t_max: 1e2, ..Default::default() };
    let m = maximal_op(&l, &cosine(&[1.0]), &[0.5], &spec).unwrap();
    let want = (-1e-4f64).exp() * 0.5f64.cos();
    assert!((m.value - want).abs() < 1e-9);
    // a bump seen from far away: the sup sits at an interior t
    let f = Source::separable(Separable::new(vec![Profile1d::Bump { center: 1.0, width: 0.2 }], 1.0));
    let m = maximal_op(&l, &f, &[3.0], &QuadratureSpec::default()).unwrap();
    let near = |s: f64| apply_semigroup(&l, m.t * s, &f, &[3.0]).unwrap();
    assert!(m.value >= near(1.01) && m.value >= near(0.99));
    assert!(m.t > 0.1 && m.t < 10.0);
}

// ---------- g-function ----------

#[test]
fn g_function_on_cosines() {
    let l = lam(&[0.0]);
    let spec = QuadratureSpec { t_min: 1e-9, t_max: 1e2, points_per_decade: 10, ..Default::default() };
    for &z in &[1.0, 3.0] {
        for k in 0..20 {
            let x = 0.05 + 0.37 * k as f64;
            let c = (z * x).cos();
            if c.abs() < 1e-2 {
                continue;
            }
            let g = g_function(&l, &cosine(&[z]), &[x], &spec).unwrap();
            assert!((g - c.abs() / 2.0).abs() < 1e-6 * c.abs() / 2.0, "z={z} x={x}: {g}");
        }
    }
}

#[test]
fn g_function_refinement_and_zero() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.5);
    let a = QuadratureSpec { t_min: 1e-8, t_max: 1e4, points_per_decade: 8, ..Default::default() };
    let b = QuadratureSpec { points_per_decade: 16, ..a.clone() };
    let x = [1.3, 0.8];
    let ga = g_function(&l, &f, &x, &a).unwrap();
    let gb = g_function(&l, &f, &x, &b).unwrap();
    assert!((ga - gb).abs() < 1e-6 * gb, "{ga} {gb}");
    assert_eq!(g_function(&l, &zero(2), &x, &a).unwrap(), 0.0);
}

// ---------- Riesz kernels ----------

fn reflected_riesz_2d(x: [f64; 2], y: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            let d = [x[0] - s1 * y[0], x[1] - s2 * y[1]];
            let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
            s += d[0] / (r * r * r);
        }
    }
    -s / (2.0 * PI)
}

#[test]
fn riesz_kernel_one_dimensional_lambda_zero() {
    let l = lam(&[0.0]);
    for &(x, y) in &[(1.0, 2.0), (0.3, 0.29), (5.0, 0.1), (0.02, 7.0)] {
        let r = riesz_kernel(&l, 0, &[x], &[y]).unwrap();
        let want = -(1.0 / (x - y) + 1.0 / (x + y)) / PI;
        assert!((r - want).abs() < 1e-9 * want.abs(), "{x} {y}: {r} {want}");
    }
}

#[test]
fn riesz_kernel_two_dimensional_lambda_zero() {
    let l = lam(&[0.0, 0.0]);
    for &(x, y) in &[([1.0, 1.0], [1.5, 0.7]), ([0.2, 3.0], [0.21, 2.99]), ([4.0, 0.5], [0.3, 6.0])] {
        let r = riesz_kernel(&l, 0, &x, &y).unwrap();
        let want = reflected_riesz_2d(x, y);
        assert!((r - want).abs() < 1e-8 * want.abs(), "{x:?} {y:?}: {r} {want}");
    }
}

#[test]
fn riesz_kernel_rejects_diagonal_and_decays() {
    let l = lam(&[0.3, 0.7]);
    assert!(riesz_kernel(&l, 0, &[1.0, 1.0], &[1.0, 1.0]).is_err());
    assert!(riesz_kernel(&l, 2, &[1.0, 1.0], &[1.0, 2.0]).is_err());
    let x = [0.5, 0.5];
    let mut prev = f64::INFINITY;
    for k in 0..6 {
        let s = 2.0 * 4f64.powi(k);
        let r = riesz_kernel(&l, 0, &x, &[s * x[0], s * x[1]]).unwrap().abs();
        assert!(r < prev);
        prev = r;
    }
    assert!(prev < 1e-6);
}

#[test]
fn comparison_kernel_lambda_zero() {
    for n in 2..=4usize {
        let l = lam(&vec![0.0; n]);
        let x: Vec<f64> = (0..n).map(|j| 1.0 + 0.3 * j as f64).collect();
        let y: Vec<f64> = (0..n).map(|j| 0.6 + 0.5 * j as f64).collect();
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let c = gamma_fn((n as f64 + 1.0) / 2.0).unwrap() / PI.powf((n as f64 + 1.0) / 2.0);
        let want = -c * (x[0] - y[0]) / d2.powf((n as f64 + 1.0) / 2.0);
        let got = classical_riesz_comparison(&l, 0, &x, &y).unwrap();
        assert!((got - want).abs() < 1e-13 * want.abs());
        // antisymmetric in x_i - y_i for λ = 0
        let back = classical_riesz_comparison(&l, 0, &y, &x).unwrap();
        assert!((back + got).abs() < 1e-13 * got.abs());
    }
    assert!(classical_riesz_comparison(&lam(&[0.0]), 0, &[1.0], &[2.0]).is_err());
}

#[test]
fn comparison_kernel_homogeneity() {
    let l = lam(&[0.3, 0.7]);
    let (x, y) = ([1.0, 0.4], [0.7, 1.1]);
    let a = classical_riesz_comparison(&l, 1, &x, &y).unwrap();
    let b = classical_riesz_comparison(&l, 1, &[2.0, 0.8], &[1.4, 2.2]).unwrap();
    // degree −(n + 2Σλ) = −4
    assert!((b - a / 16.0).abs() < 1e-13 * a.abs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn riesz_kernel_homogeneity(x0 in 0.2f64..3.0, x1 in 0.2f64..3.0, y0 in 0.2f64..3.0, y1 in 0.2f64..3.0, c in 0.3f64..3.0) {
        prop_assume!((x0 - y0).hypot(x1 - y1) > 0.05);
        let l = lam(&[0.3, 0.7]);
        let a = riesz_kernel(&l, 0, &[x0, x1], &[y0, y1]).unwrap();
        let b = riesz_kernel(&l, 0, &[c * x0, c * x1], &[c * y0, c * y1]).unwrap();
        let want = a * c.powf(-4.0);
        prop_assert!((b - want).abs() < 1e-8 * want.abs().max(1e-3 * c.powf(-4.0)), "{} {}", b, want);
    }
}

// ---------- truncated Riesz transforms ----------

#[test]
fn truncated_riesz_of_zero() {
    let l = lam(&[0.3, 0.7]);
    for &e in &[1e-3, 0.1, 1.0] {
        assert_eq!(riesz_truncated(&l, 0, &zero(2), &[1.0, 1.0], e).unwrap(), 0.0);
    }
}

#[test]
fn truncated_riesz_far_from_support_is_plain_integral() {
    // for ε below the distance to the support nothing is cut away
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.2);
    let x = [2.0, 1.3];
    let a = riesz_truncated(&l, 0, &f, &x, 1e-3).unwrap();
    let b = riesz_truncated(&l, 0, &f, &x, 0.5).unwrap();
    // brute force tensor quadrature of the (smooth) kernel against f
    // (16 panels per axis: the bump is flat to all orders at its edges)
    let (gx, gw) = gauss_legendre(12);
    let mut nodes = vec![];
    for p in 0..16 {
        let c = 0.8 + 0.025 * (p as f64 + 0.5);
        for (u, w) in gx.iter().zip(gw) {
            nodes.push((c + 0.0125 * u, 0.0125 * w));
        }
    }
    let mut want = 0.0;
    for &(y0, w0) in &nodes {
        for &(y1, w1) in &nodes {
            let y = [y0, y1];
            let m = y[0].powf(0.6) * y[1].powf(1.4);
            want += w0 * w1 * riesz_kernel(&l, 0, &x, &y).unwrap() * f.value(&y) * m;
        }
    }
    assert!((a - want).abs() < 1e-8 * want.abs(), "{a} {want}");
    assert!((a - b).abs() < 1e-10 * want.abs());
    // past the far side everything is cut away
    assert_eq!(riesz_truncated(&l, 0, &f, &x, 2.0).unwrap(), 0.0);
}

#[test]
fn maximal_riesz_dominates_truncations() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.3);
    let x = [1.1, 0.95];
    let eps = [0.01, 0.05, 0.1, 0.2, 0.4];
    let m = riesz_maximal(&l, 0, &f, &x, &eps).unwrap();
    for &e in &eps {
        let v = riesz_truncated(&l, 0, &f, &x, e).unwrap();
        assert!(m >= v.abs() * (1.0 - 1e-12), "{m} {v}");
    }
}

#[test]
fn pv_of_locally_even_function_is_the_reflection_part() {
    // Λ = 0: the kernel is the odd classical piece plus reflected terms.
    // f is even about x in y_1, so only the reflected terms survive.
    let l = lam(&[0.0, 0.0]);
    let x = [1.5, 1.2];
    let f = bump2(x, 0.4);
    let pv = riesz_pv(&l, 0, &f, &x).unwrap();
    let reflected = |y: [f64; 2]| reflected_riesz_2d(x, y) + {
        let d = [x[0] - y[0], x[1] - y[1]];
        let r = d[0].hypot(d[1]);
        d[0] / (2.0 * PI * r * r * r)
    };
    let (gx, gw) = gauss_legendre(32);
    let mut want = 0.0;
    for (u, wu) in gx.iter().zip(gw) {
        for (v, wv) in gx.iter().zip(gw) {
            let y = [x[0] + 0.4 * u, x[1] + 0.4 * v];
            want += wu * wv * 0.16 * reflected(y) * f.value(&y);
        }
    }
    assert!((pv - want).abs() < 1e-6, "{pv} {want}");
}

#[test]
fn truncations_form_a_cauchy_sequence() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.5);
    let x = [1.1, 0.9];
    let e = 4e-6;
    let v: Vec<f64> = [e, e / 2.0, e / 4.0].iter().map(|&e| riesz_truncated(&l, 1, &f, &x, e).unwrap()).collect();
    assert!((v[2] - v[1]).abs() < 1e-6, "{v:?}");
    assert!((v[2] - v[1]).abs() <= (v[1] - v[0]).abs() * 0.75 + 1e-12, "{v:?}");
}

#[test]
fn grid_source_truncation_masks_nodes() {
    let l = lam(&[0.3, 0.7]);
    let g = Arc::new(make_grid(2, (0.5, 1.5), 4, 4, &l).unwrap());
    let f = GridFunction::from_fn(g.clone(), |y| (y[0] - 1.0).powi(2) + y[1]);
    let x = [1.02, 0.97];
    let eps = 0.2;
    let mut want = 0.0;
    let mut p = [0.0; 2];
    for k in 0..g.len() {
        g.point(k, &mut p);
        if (p[0] - x[0]).hypot(p[1] - x[1]) > eps {
            want += riesz_kernel(&l, 0, &x, &p).unwrap() * f.values()[k] * g.weight(k);
        }
    }
    let got = riesz_truncated(&l, 0, &Source::grid(f), &x, eps).unwrap();
    assert!((got - want).abs() < 1e-12 * want.abs());
}

// ---------- fractional kernels ----------

fn reflected_potential(x: [f64; 2], y: [f64; 2], p: f64) -> f64 {
    let mut s = 0.0;
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            s += (x[0] - s1 * y[0]).hypot(x[1] - s2 * y[1]).powf(p);
        }
    }
    s
}

#[test]
fn fractional_kernel_classical_reduction() {
    let l = lam(&[0.0, 0.0]);
    for &beta in &[0.25, 0.5, 0.75] {
        let b = FractionalOrder::new(beta, &l, FractionalForm::Plain).unwrap();
        let c = classical_fractional_coefficient(2, beta).unwrap();
        for &(x, y) in &[([1.0, 1.0], [2.0, 0.5]), ([0.1, 3.0], [0.12, 2.9]), ([5.0, 5.0], [0.2, 0.3])] {
            let k = fractional_kernel(&l, b, &x, &y).unwrap();
            let want = c * reflected_potential(x, y, 2.0 * beta - 2.0);
            assert!((k - want).abs() < 1e-7 * want, "beta={beta} {x:?} {y:?}: {k} {want}");
        }
    }
}

#[test]
fn classical_coefficient_values() {
    // Γ(1 − β)/(π 4^β Γ(β)) in closed form for n = 2
    let g14 = 3.625_609_908_221_908;
    let g34 = 1.225_416_702_465_177_6;
    assert!((classical_fractional_coefficient(2, 0.5).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
    let want14 = g34 / (PI * 2f64.sqrt() * g14);
    let want34 = g14 / (PI * 8f64.sqrt() * g34);
    assert!((classical_fractional_coefficient(2, 0.25).unwrap() - want14).abs() < 1e-12 * want14);
    assert!((classical_fractional_coefficient(2, 0.75).unwrap() - want34).abs() < 1e-12 * want34);
    assert!(classical_fractional_coefficient(2, 1.0).is_err());
}

#[test]
fn fractional_forms_differ_by_the_explicit_constant() {
    let l = lam(&[0.3, 0.7]);
    let beta = 1.2;
    let s = l.homogeneity();
    let plain = FractionalOrder::new(beta, &l, FractionalForm::Plain).unwrap();
    let sub = FractionalOrder::new(beta, &l, FractionalForm::Subtracted).unwrap();
    let c: f64 = l.as_slice().iter().map(|&l| 1.0 / (4f64.powf(l) * gamma_fn(l + 0.5).unwrap())).product();
    let shift = c / ((s - beta) * gamma_fn(beta).unwrap());
    for &(x, y) in &[([1.0, 1.0], [2.0, 0.5]), ([0.3, 2.0], [0.35, 2.2])] {
        let a = fractional_kernel(&l, plain, &x, &y).unwrap();
        let b = fractional_kernel(&l, sub, &x, &y).unwrap();
        assert!((b - (a - shift)).abs() < 1e-8 * a.abs(), "{a} {b} {shift}");
    }
}

#[test]
fn fractional_kernel_is_symmetric_and_checked() {
    let l = lam(&[0.3, 0.7]);
    let b = FractionalOrder::new(1.9, &l, FractionalForm::Subtracted).unwrap();
    let k1 = fractional_kernel(&l, b, &[1.0, 0.4], &[0.3, 1.7]).unwrap();
    let k2 = fractional_kernel(&l, b, &[0.3, 1.7], &[1.0, 0.4]).unwrap();
    assert!((k1 - k2).abs() < 1e-9 * k1.abs());
    assert!(matches!(FractionalOrder::new(2.0, &l, FractionalForm::Plain), Err(Error::Domain(_))));
    assert!(matches!(FractionalOrder::new(3.0, &l, FractionalForm::Subtracted), Err(Error::Domain(_))));
    assert!(FractionalOrder::new(0.0, &l, FractionalForm::Subtracted).is_err());
    assert!(fractional_kernel(&l, b, &[1.0, 1.0], &[1.0, 1.0]).is_err());
}

// ---------- region restriction ----------

fn all_selectors(n: usize) -> Vec<RegionSelector> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for s in &out {
            for r in [Region::Lower, Region::Local, Region::Upper] {
                let mut s2: Vec<Region> = s.clone();
                s2.push(r);
                next.push(s2);
            }
        }
        out = next;
    }
    out.into_iter().map(RegionSelector::new).collect()
}

#[test]
fn regions_partition_the_heat_operator() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.9);
    let x = [0.8, 1.1];
    for kind in [KernelKind::Heat, KernelKind::HeatDt, KernelKind::HeatDx(1)] {
        let full = region_apply(&l, &RegionSelector::unrestricted(2), kind, &f, &x, TimeArg::At(0.4)).unwrap();
        let sum: f64 = all_selectors(2)
            .iter()
            .map(|r| region_apply(&l, r, kind, &f, &x, TimeArg::At(0.4)).unwrap())
            .sum();
        assert!((sum - full).abs() < 1e-10 * full.abs().max(1e-3), "{kind:?}: {sum} {full}");
    }
    let direct = apply_semigroup(&l, 0.4, &f, &x).unwrap();
    let full = region_apply(&l, &RegionSelector::unrestricted(2), KernelKind::Heat, &f, &x, TimeArg::At(0.4)).unwrap();
    assert!((direct - full).abs() < 1e-12);
}

#[test]
fn local_region_with_local_support() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.3);
    let x = [1.0, 0.9];
    let local = region_apply(&l, &RegionSelector::all_local(2), KernelKind::Heat, &f, &x, TimeArg::At(0.2)).unwrap();
    let plain = apply_semigroup(&l, 0.2, &f, &x).unwrap();
    assert!((local - plain).abs() < 1e-13);
    let up = RegionSelector::new(vec![Region::Upper, Region::Upper]);
    assert_eq!(region_apply(&l, &up, KernelKind::Heat, &f, &x, TimeArg::At(0.2)).unwrap(), 0.0);
    assert!(region_apply(&l, &RegionSelector::new(vec![Region::Local]), KernelKind::Heat, &f, &x, TimeArg::At(0.2)).is_err());
}

#[test]
fn regions_partition_the_riesz_transform() {
    let l = lam(&[0.3, 0.7]);
    let f = bump2([1.0, 1.0], 0.9);
    let x = [0.8, 1.1];
    let spec = TimeArg::Spec(QuadratureSpec::default());
    let full = region_apply(&l, &RegionSelector::unrestricted(2), KernelKind::Riesz(0), &f, &x, spec.clone()).unwrap();
    let sum: f64 = all_selectors(2)
        .iter()
        .map(|r| region_apply(&l, r, KernelKind::Riesz(0), &f, &x, spec.clone()).unwrap())
        .sum();
    assert!((sum - full).abs() < 1e-8 * full.abs(), "{sum} {full}");
    let pv = riesz_pv(&l, 0, &f, &x).unwrap();
    assert!((pv - full).abs() < 1e-6 * (1.0 + full.abs()), "{pv} {full}");
}

// ---------- Riesz vs comparison kernel ----------

fn local_difference(l: &IndexVector, x: [f64; 2], rad: f64, panels: usize, nodes: usize) -> f64 {
    // ∫ over the disc |y − x| < rad of |R − ℛ| dm_λ, polar about x
    let mut rs = vec![0.0];
    rs.extend((0..=panels).map(|k| rad * 2f64.powi(k as i32 - panels as i32)));
    let (gx, gw) = gauss_legendre(nodes);
    let arcs = 2 * panels;
    let mut total = 0.0;
    for w in rs.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (u, wu) in gx.iter().zip(gw) {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * u;
            for k in 0..arcs {
                let h = PI / arcs as f64;
                let c = (2 * k + 1) as f64 * h;
                for (v, wv) in gx.iter().zip(gw) {
                    let th = c + h * v;
                    let y = [x[0] + r * th.cos(), x[1] + r * th.sin()];
                    let d = riesz_kernel(l, 0, &x, &y).unwrap() - classical_riesz_comparison(l, 0, &x, &y).unwrap();
                    let m = y[0].powf(2.0 * l.as_slice()[0]) * y[1].powf(2.0 * l.as_slice()[1]);
                    total += 0.5 * (b - a) * wu * h * wv * r * d.abs() * m;
                }
            }
        }
    }
    total
}

#[test]
fn riesz_minus_comparison_is_locally_integrable() {
    // |R − ℛ| = O(|x−y|^{1−n}): the disc integral is finite and shrinks like the radius
    let l = lam(&[0.3, 0.7]);
    let x = [1.0, 1.2];
    let rad = 0.25;
    let a = local_difference(&l, x, rad, 10, 8);
    let b = local_difference(&l, x, rad, 16, 12);
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() < 1e-3 * b, "{a} {b}");
    let half = local_difference(&l, x, rad / 2.0, 16, 12);
    let ratio = half / b;
    assert!(ratio < 0.6, "{ratio}");
}

#[test]
fn default_spec_is_valid_and_checked() {
    let s = QuadratureSpec::default();
    assert!(s.validate().is_ok());
    assert!(QuadratureSpec { t_min: 2.0, t_max: 1.0, ..s.clone() }.validate().is_err());
    assert!(QuadratureSpec { refine_tol: 0.0, ..s }.validate().is_err());
}
