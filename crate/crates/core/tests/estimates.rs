mod common;

use bessel_harmonics::auxiliary_ops::AlphaVector;
use bessel_harmonics::bessel_kernel::IndexVector;
use bessel_harmonics::estimates::*;
use bessel_harmonics::operators::{Profile1d, Separable};
use bessel_harmonics::Error;
use common::w_lambda0;
use proptest::prelude::*;
use std::f64::consts::PI;

fn small_spec(per_decade: usize) -> SampleSpec {
    SampleSpec { per_decade, ..SampleSpec::default() }
}

#[test]
fn ids_round_trip_through_names() {
    assert_eq!(EstimateId::ALL.len(), 23);
    for id in EstimateId::ALL {
        let name = id.to_string();
        assert_eq!(name.parse::<EstimateId>().unwrap(), id);
        let js = serde_json::to_string(&id).unwrap();
        assert_eq!(js, format!("\"{name}\""));
    }
    assert_eq!(EstimateId::B3_5.to_string(), "B3_5");
    assert_eq!(EstimateId::Lemma5Lower.to_string(), "LEMMA5_LOWER");
    assert!("A7".parse::<EstimateId>().is_err());
}

#[test]
fn a0_matches_brute_force_sup_at_lambda0() {
    // the same grid evaluated with the λ=0 closed form: t and x log-spaced,
    // y = ρx with ρ log-spaced upward from the band edge 2
    let spec = small_spec(4);
    let rep = verify_estimate(EstimateId::A0, 0.0, &spec).unwrap();
    let pts: Vec<f64> = (0..=48).map(|k| 10f64.powf(-3.0 + k as f64 / 8.0)).collect();
    let rho: Vec<f64> = (0..).map(|k| 2.0 * (1.0 + 1e-12) * 10f64.powf(k as f64 / 8.0)).take_while(|r| *r <= 1e6).collect();
    let mut best = 0.0f64;
    let mut count = 0;
    for &t in &pts {
        for &x in &pts {
            for &r in &rho {
                let y = r * x;
                if y <= 1e3 {
                    count += 1;
                    best = best.max(w_lambda0(t, x, y) * y);
                }
            }
        }
    }
    assert_eq!(rep.samples, count);
    assert!((rep.sup_ratio - best).abs() <= 1e-10 * best, "{} vs {best}", rep.sup_ratio);
    let a = &rep.argmax;
    assert_eq!(a.len(), 3);
    assert!(a[2] > 2.0 * a[1]);
    assert!(((w_lambda0(a[0], a[1], a[2]) * a[2]) - best).abs() <= 1e-10 * best);
}

#[test]
fn a0_half_is_finite_with_small_drift() {
    let rep = verify_estimate(EstimateId::A0, 0.5, &small_spec(8)).unwrap();
    assert!(rep.sup_ratio.is_finite() && rep.sup_ratio > 0.0);
    assert!(rep.drift >= 0.0 && rep.drift < 0.05, "drift {}", rep.drift);
    let js = serde_json::to_value(&rep).unwrap();
    for k in ["id", "lambda", "samples", "sup_ratio", "argmax", "drift"] {
        assert!(js.get(k).is_some(), "missing {k}");
    }
    assert_eq!(js["id"], "A0");
}

#[test]
fn b13_square_integral_matches_reflection_term_at_lambda0() {
    // λ=0: the gap is the reflected Gaussian 𝕎_t(x+y), and
    // ∫ t |∂_t 𝕎_t(d)|² dt = 1/(8π d²)
    for &(x, y) in &[(1.0, 0.7), (0.01, 0.015), (50.0, 80.0), (3.0, 3.0)] {
        let (ll, lr) = estimate_sides(EstimateId::B13, 0.0, &[x, y]).unwrap();
        let want = 1.0 / ((x + y) * (8.0 * PI).sqrt());
        assert!((ll.exp() - want).abs() < 1e-6 * want, "{x},{y}: {} vs {want}", ll.exp());
        assert!((lr - (-x.ln())).abs() < 1e-14);
    }
    let rep = verify_estimate(EstimateId::B13, 0.0, &small_spec(4)).unwrap();
    let bound = 1.0 / (1.5 * (8.0 * PI).sqrt());
    assert!(rep.sup_ratio <= bound * (1.0 + 1e-6), "{} > {bound}", rep.sup_ratio);
    assert!(rep.sup_ratio >= 0.9 * bound);
}

#[test]
fn z_lhs_vanishes_at_the_origin() {
    let t = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..6 {
        let x = 10f64.powi(-k);
        let (ll, lr) = estimate_sides(EstimateId::Z, 1.0, &[t, x, 0.5 * x]).unwrap();
        assert!((ll - lr).is_finite());
        assert!(ll < prev);
        prev = ll;
    }
    assert!(prev.exp() < 1e-9);
}

#[test]
fn a3_is_dominated_by_a1_and_a2() {
    let spec = small_spec(4);
    let a1 = verify_estimate(EstimateId::A1, 0.7, &spec).unwrap();
    let a2 = verify_estimate(EstimateId::A2, 0.7, &spec).unwrap();
    let a3 = verify_estimate(EstimateId::A3, 0.7, &spec).unwrap();
    assert!(a3.sup_ratio <= a1.sup_ratio.max(a2.sup_ratio) * (1.0 + 1e-12));
}

#[test]
fn sides_reject_points_outside_the_domain() {
    assert!(matches!(estimate_sides(EstimateId::A0, 0.5, &[1.0, 1.0, 1.5]), Err(Error::Contract(_))));
    assert!(matches!(estimate_sides(EstimateId::B11, 0.5, &[10.0, 1.0, 2.0]), Err(Error::Contract(_))));
    assert!(matches!(estimate_sides(EstimateId::B13, 0.5, &[1.0, 1.0, 1.0]), Err(Error::Contract(_))));
    assert!(estimate_sides(EstimateId::A0, -0.6, &[1.0, 1.0, 3.0]).is_err());
}

#[test]
fn empty_sample_domain_is_a_contract_error() {
    let spec = SampleSpec { per_decade: 4, x_range: (1e-3, 1e-2), y_range: (10.0, 100.0), ..SampleSpec::default() };
    // y < x/2 never holds
    assert!(matches!(verify_estimate(EstimateId::A3, 0.5, &spec), Err(Error::Contract(_))));
}

#[test]
fn lemma5_ratios_are_finite() {
    let spec = small_spec(2);
    for id in [EstimateId::Lemma5Lower, EstimateId::Lemma5Upper] {
        for l in [-0.3, 0.0, 1.5] {
            let r = verify_estimate(id, l, &spec).unwrap();
            assert!(r.sup_ratio.is_finite() && r.sup_ratio > 0.0, "{id} {l}");
        }
    }
}

#[test]
fn lemma5_lower_at_lambda0_matches_direct_integral() {
    // λ=0: ∂_x W = ∂_x[𝕎(x−y) + 𝕎(x+y)]; integrate in t by a fine rule
    let (x, y) = (2.0f64, 0.5f64);
    let f = |t: f64| {
        let g = |d: f64| -d / (2.0 * t) * (-d * d / (4.0 * t)).exp() / (2.0 * (PI * t).sqrt());
        (g(x - y) + g(x + y)).abs() / t.sqrt()
    };
    // substitute t = e^s on a wide window
    let (a, b, n) = (-12.0f64, 30.0f64, 200_000);
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let s = a + (k as f64 + 0.5) * h;
        acc += f(s.exp()) * s.exp() * h;
    }
    let (ll, _) = estimate_sides(EstimateId::Lemma5Lower, 0.0, &[x, y]).unwrap();
    assert!((ll.exp() - acc).abs() < 1e-6 * acc, "{} vs {acc}", ll.exp());
}

// ---------------------------------------------------------------------------
// experiments

#[test]
fn l_operator_profile_matches_closed_form() {
    // L χ(0,1) = min(x,1)/x, so m{Lg > γ} = 1/γ for γ < 1: γ·m ≡ 1
    let grid = ExperimentGrid { x_range: (1e-4, 1e3), per_decade: 40, ..ExperimentGrid::default() };
    let g = Separable::new(vec![Profile1d::Indicator { lo: 0.0, hi: 1.0 }], 1.0);
    let lam = IndexVector::new(vec![0.0]).unwrap();
    let gammas = [0.5, 0.1, 0.01];
    let (prof, sup) = weak_profile(WeakOperator::LOperator, &lam, &g, &grid, &OperatorOptions::default(), &gammas).unwrap();
    for (gm, m) in prof.gammas.iter().zip(&prof.measures) {
        let want = (1.0 / gm).min(1e3);
        assert!((m - want).abs() < 0.06 * want, "γ={gm}: {m} vs {want}");
    }
    assert!((sup - 1.0).abs() < 0.06, "{sup}");
}

#[test]
fn single_cell_indicator_sup_dominates_a_level() {
    let lam = IndexVector::new(vec![0.4]).unwrap();
    let g = Separable::new(vec![Profile1d::Indicator { lo: 1.0, hi: 1.2 }], 3.0);
    let grid = ExperimentGrid { per_decade: 8, ..ExperimentGrid::default() };
    let (prof, sup) = weak_profile(WeakOperator::LOperator, &lam, &g, &grid, &OperatorOptions::default(), &[0.05]).unwrap();
    assert!(sup >= prof.gammas[0] * prof.measures[0]);
    assert!(sup >= prof.sup());
}

#[test]
fn weak_maximal_is_stable_across_widths() {
    let lam = IndexVector::new(vec![0.3, 0.7]).unwrap();
    let spec = WeakTypeSpec { widths: vec![1e-1, 1e-2], ..WeakTypeSpec::default() };
    let rep = weak_type_experiment(WeakOperator::Maximal, &lam, &spec).unwrap();
    assert_eq!(rep.rows.len(), 4);
    for r in &rep.rows {
        assert!(r.quasinorm.is_finite() && r.quasinorm > 0.0);
        assert!(r.quasinorm >= r.profile.sup() * (1.0 - 1e-12));
    }
    assert!(rep.growth_ratio < 2.0, "{}", rep.growth_ratio);
    let mut buf = Vec::new();
    write_weak_profiles_csv(&rep, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("h,gamma,measure,gamma_times_measure\n"));
}

#[test]
fn weak_l_and_h_lk_are_stable_across_widths() {
    let lam = IndexVector::new(vec![0.3, 0.7]).unwrap();
    let grid = ExperimentGrid { per_decade: 4, cluster_per_octave: 1, ..ExperimentGrid::default() };
    let spec = WeakTypeSpec { widths: vec![1e-1, 1e-2, 1e-3], centers: vec![SpikeCenter::Interior], grid, ..WeakTypeSpec::default() };
    for op in [WeakOperator::LOperator, WeakOperator::Hlk] {
        let rep = weak_type_experiment(op, &lam, &spec).unwrap();
        assert!(rep.growth_ratio < 2.0, "{op:?}: {}", rep.growth_ratio);
    }
}

#[test]
fn strong_identity_ratio_is_one() {
    let lam = IndexVector::new(vec![0.3, 0.7]).unwrap();
    let spec = StrongTypeSpec { p: 2.0, widths: vec![0.2, 0.1], ..StrongTypeSpec::default() };
    let rep = strong_type_experiment(StrongOperator::Semigroup { t: 1e-6 }, &lam, &spec).unwrap();
    for r in &rep.rows {
        assert!((r.ratio - 1.0).abs() < 1e-3, "h={} ratio {}", r.h, r.ratio);
    }
    assert!(!rep.flagged);
}

#[test]
fn strong_maximal_is_stable_under_grid_doubling() {
    let lam = IndexVector::new(vec![0.3, 0.7]).unwrap();
    let coarse = StrongTypeSpec { p: 2.0, widths: vec![0.2], ..StrongTypeSpec::default() };
    let mut fine = coarse.clone();
    fine.grid.per_decade *= 2;
    fine.grid.cluster_per_octave *= 2;
    let a = strong_type_experiment(StrongOperator::Maximal, &lam, &coarse).unwrap().rows[0].ratio;
    let b = strong_type_experiment(StrongOperator::Maximal, &lam, &fine).unwrap().rows[0].ratio;
    assert!(a.is_finite() && a >= 1.0 - 1e-3);
    assert!((a - b).abs() < 0.02 * b, "{a} vs {b}");
}

#[test]
fn strong_type_rejects_bad_exponent() {
    let lam = IndexVector::new(vec![0.0]).unwrap();
    for p in [1.0, 0.5, f64::INFINITY] {
        let spec = StrongTypeSpec { p, ..StrongTypeSpec::default() };
        assert!(strong_type_experiment(StrongOperator::Maximal, &lam, &spec).is_err());
    }
}

#[test]
fn convergence_cos_mode_matches_eigen_oracle() {
    let lam = IndexVector::new(vec![0.0]).unwrap();
    let z = 2.0;
    let f = Separable::new(vec![Profile1d::Cos { freq: z }], 1.0);
    let xs = vec![vec![0.3], vec![1.1]];
    let ts = [1e-1, 5e-2, 2.5e-2];
    let rep = pointwise_convergence_experiment(&lam, &f, &xs, &ts).unwrap();
    for row in &rep.rows {
        for (e, t) in row.errors.iter().zip(&rep.t) {
            let want = (-t * z * z).exp_m1().abs() * (z * row.x[0]).cos().abs();
            assert!((e - want).abs() < 1e-8 * want.max(1e-12), "{e} vs {want}");
        }
        assert!(row.tail_decreasing);
    }
}

#[test]
fn convergence_of_zero_is_zero() {
    let lam = IndexVector::new(vec![0.5, 0.2]).unwrap();
    let f = Separable::new(vec![Profile1d::Bump { center: 1.0, width: 0.5 }; 2], 0.0);
    let rep = pointwise_convergence_experiment(&lam, &f, &[vec![1.0, 1.0]], &[1e-2, 1e-3]).unwrap();
    assert!(rep.rows[0].errors.iter().all(|e| *e == 0.0));
    assert!(rep.rows[0].rate.is_none());
}

#[test]
fn convergence_rate_is_linear_in_t() {
    let lam = IndexVector::new(vec![0.3, 0.7]).unwrap();
    let f = Separable::new(vec![Profile1d::Bump { center: 1.0, width: 0.5 }; 2], 1.0);
    let ts = [4e-4, 2e-4, 1e-4];
    let rep = pointwise_convergence_experiment(&lam, &f, &[vec![1.1, 0.9]], &ts).unwrap();
    let e = &rep.rows[0].errors;
    for w in e.windows(2) {
        let r = w[0] / w[1];
        assert!((r - 2.0).abs() < 0.05, "ratio {r}");
    }
    assert!((rep.rows[0].rate.unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn alpha_vector_is_shared_with_auxiliary_operators() {
    // experiments use Λ as the α of the auxiliary operators
    assert!(AlphaVector::new(vec![0.3, 0.7]).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sides_are_finite_inside_domains(l in -0.45f64..3.0, lt in -3.0f64..3.0, lx in -3.0f64..3.0, q in 0.05f64..0.45) {
        let t = 10f64.powf(lt);
        let x = 10f64.powf(lx);
        let pt = [t, x, q * x];
        for id in [EstimateId::A0, EstimateId::A3, EstimateId::B10, EstimateId::C14, EstimateId::A6, EstimateId::Z] {
            let p = if id == EstimateId::A0 { [t, q * x, x] } else { pt };
            let (ll, lr) = estimate_sides(id, l, &p).unwrap();
            prop_assert!(lr.is_finite());
            prop_assert!(!(ll - lr).is_nan() && ll - lr < f64::INFINITY);
        }
    }

    #[test]
    fn a6_rhs_dominates_a4_and_a5_rhs(l in -0.45f64..3.0, lt in -3.0f64..3.0, lx in -3.0f64..3.0, ly in -3.0f64..3.0) {
        let p = [10f64.powf(lt), 10f64.powf(lx), 10f64.powf(ly)];
        let (_, r6) = estimate_sides(EstimateId::A6, l, &p).unwrap();
        let (_, r5) = estimate_sides(EstimateId::A5, l, &[p[0], p[1], p[2]]).map_or((0.0, f64::NEG_INFINITY), |v| v);
        let (_, r4) = estimate_sides(EstimateId::A4, l, &p).map_or((0.0, f64::NEG_INFINITY), |v| v);
        prop_assert!(r6 >= r4.max(r5) - 1e-12);
    }
}
