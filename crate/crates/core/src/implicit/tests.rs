use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::formula::OffGridPolicy;
use crate::metric::{GridSpace, SpaceRef};
use crate::setvalued::BiMultiMap;

fn line(start: f64, stop: f64, step: f64) -> SpaceRef {
    Arc::new(GridSpace::line("g", start, stop, step).unwrap())
}

fn h_formula(x: &SpaceRef, p: &SpaceRef, y: &SpaceRef, expr: &str) -> ParamMultiMap {
    ParamMultiMap::from_formula(x, p, y, &[expr], OffGridPolicy::Reject).unwrap()
}

/// H(x, p) = 2x − p with X step 0.05, P and Y step 0.1.
fn two_x_minus_p() -> ParamMultiMap {
    h_formula(&line(-1.0, 1.0, 0.05), &line(-1.0, 1.0, 0.1), &line(-3.0, 3.0, 0.1), "2*x - p")
}

fn cfg() -> NeighborhoodConfig {
    NeighborhoodConfig::new(0.5, 1.0, 0.2, vec![0.05, 0.1, 0.15, 0.2]).unwrap().with_radius_w(0.6).unwrap()
}

fn close(a: ExtReal, b: f64) -> bool {
    (a.value() - b).abs() < 1e-12
}

#[test]
fn solution_map_of_shifted_identity() {
    let x = line(-1.0, 1.0, 0.1);
    let h = h_formula(&x, &x, &line(-2.0, 2.0, 0.1), "x - p");
    let s = implicit_map(&h).unwrap();
    assert_eq!(s, MultiMap::identity(&x));
}

#[test]
fn solution_map_halves_the_parameter() {
    let h = two_x_minus_p();
    let s = implicit_map(&h).unwrap();
    for (pi, p) in h.params().points().iter().enumerate() {
        let want = h.source().require(&[p[0] / 2.0]).unwrap();
        assert_eq!(s.row(pi), &[want]);
    }
}

#[test]
fn parameters_without_zero_have_empty_solutions() {
    let h = h_formula(&line(-1.0, 1.0, 0.1), &line(-2.0, 2.0, 0.1), &line(-3.0, 3.0, 0.1), "x - p");
    let s = implicit_map(&h).unwrap();
    let pi = h.params().require(&[1.5]).unwrap();
    assert!(s.row(pi).is_empty());
    let pi = h.params().require(&[0.5]).unwrap();
    assert_eq!(s.row(pi).len(), 1);
}

#[test]
fn zero_off_the_target_grid_is_rejected() {
    let x = line(-1.0, 1.0, 0.1);
    let h = h_formula(&x, &x, &line(0.05, 2.05, 0.1), "1.05");
    assert!(matches!(implicit_map(&h), Err(Error::Precondition(_))));
}

#[test]
fn solution_estimate_is_tight_for_the_affine_map() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap().with_radii(0.5, 0.6, 1.0).unwrap();
    let e = inst.verify_estimate(Side::Solution, &[0.0], &[0.5]).unwrap();
    assert!(close(e.lhs, 0.25), "{:?}", e.lhs);
    assert!(close(e.rhs, 0.25), "{:?}", e.rhs);
    assert!((e.ratio.unwrap() - 1.0).abs() < 1e-9);
    assert!(e.holds);
    assert!(e.hypothesis.unwrap().passed);
}

#[test]
fn solution_estimate_holds_across_the_region() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap().with_radii(0.5, 0.6, 1.0).unwrap();
    let sweep = inst.sweep_estimate(Side::Solution).unwrap();
    assert!(sweep.violations.is_empty(), "{:?}", sweep.violations.first());
    assert_eq!(sweep.checked, 19 * 11);
    assert!((sweep.max_ratio.unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn points_on_the_solution_set_have_zero_lhs() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap();
    let e = inst.verify_estimate(Side::Solution, &[0.2], &[0.4]).unwrap();
    assert_eq!(e.lhs, ExtReal::ZERO);
    assert_eq!(e.rhs, ExtReal::ZERO);
}

#[test]
fn residual_outside_the_gamma_ball_is_vacuous() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap().with_radii(0.5, 0.6, 0.3).unwrap();
    let e = inst.verify_estimate(Side::Solution, &[0.0], &[0.5]).unwrap();
    assert_eq!(e.rhs, ExtReal::Infinite);
    assert!(e.holds && e.ratio.is_none());
}

#[test]
fn estimate_outside_the_region_is_rejected() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap();
    assert!(matches!(inst.verify_estimate(Side::Solution, &[0.5], &[0.0]), Err(Error::Precondition(_))));
}

#[test]
fn overstated_rate_is_refuted_with_its_report() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 3.0, cfg()).unwrap();
    match inst.verify_estimate(Side::Solution, &[0.0], &[0.5]) {
        Err(Error::Refuted { name, report, .. }) => {
            assert_eq!(name, "h_open_in_x");
            assert!(report.contains(2.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn lipschitz_bound_matches_the_swept_solution_map() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap();
    let b = inst.bound_lip(1.0).unwrap();
    assert_eq!(b.bound, 0.5);
    assert!(b.consistent);
    assert!((b.swept.hi().value() - 0.5).abs() <= 2e-6, "{:?}", b.swept.bracket);
    assert!(b.hypotheses.iter().all(|h| h.passed));
}

#[test]
fn understated_parameter_constant_is_refuted() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap();
    assert!(matches!(inst.bound_lip(0.5), Err(Error::Refuted { .. })));
}

#[test]
fn parameter_free_map_has_zero_lipschitz_bound() {
    let x = line(-1.0, 1.0, 0.1);
    let h = h_formula(&x, &x, &line(-1.0, 1.0, 0.1), "x");
    let c = NeighborhoodConfig::new(0.5, 0.5, 0.2, vec![0.1, 0.2]).unwrap();
    let b = ImplicitInstance::new(h, &[0.0], &[0.0], 1.0, c).unwrap().bound_lip(0.0).unwrap();
    assert_eq!(b.bound, 0.0);
    assert_eq!(b.swept.hi(), ExtReal::ZERO);
    assert!(b.consistent);
}

#[test]
fn tripled_parameter_gives_bound_three() {
    let h = h_formula(&line(-3.0, 3.0, 0.1), &line(-0.5, 0.5, 0.1), &line(-5.0, 5.0, 0.1), "x - 3*p");
    let c = NeighborhoodConfig::new(0.5, 1.0, 0.2, vec![0.1, 0.2]).unwrap().with_radius_w(0.3).unwrap();
    let inst = ImplicitInstance::new(h, &[0.0], &[0.0], 1.0, c).unwrap().with_radii(1.0, 0.3, 1.0).unwrap();
    let b = inst.bound_lip(3.0).unwrap();
    assert_eq!(b.bound, 3.0);
    assert!(b.swept.contains(3.0) || (b.swept.hi().value() - 3.0).abs() <= 2e-6, "{:?}", b.swept.bracket);
    assert!(b.consistent);
}

#[test]
fn parameter_estimate_is_exact_for_the_shift() {
    let x = line(-1.0, 1.0, 0.1);
    let h = h_formula(&x, &x, &line(-2.0, 2.0, 0.1), "x - p");
    let c = NeighborhoodConfig::new(0.5, 1.0, 0.2, vec![0.1, 0.2]).unwrap();
    let inst = ImplicitInstance::new(h, &[0.0], &[0.0], 1.0, c).unwrap().with_radii(0.5, 0.5, 1.0).unwrap();
    let sweep = inst.sweep_estimate(Side::Parameter).unwrap();
    assert!(sweep.violations.is_empty());
    assert!((sweep.max_ratio.unwrap() - 1.0).abs() < 1e-9);
    let e = inst.verify_estimate(Side::Parameter, &[0.3], &[-0.1]).unwrap();
    assert!(close(e.lhs, 0.4) && close(e.rhs, 0.4));
}

#[test]
fn regularity_bound_matches_the_swept_solution_map() {
    let inst = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 1.0, cfg()).unwrap().with_radii(0.4, 0.6, 1.0).unwrap();
    assert!(inst.sweep_estimate(Side::Parameter).unwrap().violations.is_empty());
    let b = inst.bound_reg(2.0).unwrap();
    assert_eq!(b.bound, 2.0);
    assert!(b.consistent);
    assert!((b.swept.hi().value() - 2.0).abs() <= 2e-6, "{:?}", b.swept.bracket);
}

#[test]
fn source_free_map_has_zero_regularity_bound() {
    let x = line(-1.0, 1.0, 0.1);
    let h = h_formula(&x, &x, &x, "p");
    let c = NeighborhoodConfig::new(0.5, 0.5, 0.2, vec![0.1, 0.2]).unwrap();
    let b = ImplicitInstance::new(h, &[0.0], &[0.0], 1.0, c).unwrap().bound_reg(0.0).unwrap();
    assert_eq!(b.bound, 0.0);
    assert_eq!(b.swept.hi(), ExtReal::ZERO);
}

fn sum_map(ystep: f64, c: f64) -> (BiMultiMap, f64) {
    let y = line(-1.0, 1.0, ystep);
    let z = line(-1.0, 1.0, 0.1);
    let w = line(-3.0, 3.0, 0.1);
    let expr = format!("{c}*y + z");
    (BiMultiMap::from_formula(&y, &z, &w, &[expr.as_str()], ["y", "z"], OffGridPolicy::Drop).unwrap(), c)
}

fn gamma_cfg(rho: &[f64]) -> NeighborhoodConfig {
    NeighborhoodConfig::new(0.3, 0.3, 0.2, rho.to_vec()).unwrap()
}

#[test]
fn gamma_map_solves_for_the_left_variable() {
    let (g, _) = sum_map(0.1, 1.0);
    let set = gamma_map(&g, &[0.3], &[0.5]).unwrap();
    assert_eq!(set.to_points(), vec![vec![0.2]]);
    assert!(gamma_map(&g, &[0.0], &[2.5]).unwrap().is_empty());

    let y = line(-1.0, 1.0, 0.1);
    let ignore_z = BiMultiMap::from_formula(&y, &y, &y, &["y"], ["y", "z"], OffGridPolicy::Reject).unwrap();
    for z in [-0.4, 0.0, 0.7] {
        assert_eq!(gamma_map(&ignore_z, &[z], &[0.3]).unwrap().to_points(), vec![vec![0.3]]);
    }
}

#[test]
fn gamma_inclusion_has_zero_defect_for_sums() {
    for (ystep, c) in [(0.1, 1.0), (0.05, 2.0)] {
        for delta in [0.01, 0.5] {
            let (g, c) = sum_map(ystep, c);
            let rho = if c == 1.0 { vec![0.1, 0.2] } else { vec![0.05, 0.1, 0.15] };
            let inst = GammaInstance::new(g, [&[0.0], &[0.0], &[0.0]], c, 1.0, gamma_cfg(&rho)).unwrap().with_delta(delta).unwrap();
            let s = inst.sweep().unwrap();
            assert_eq!(s.max_defect, ExtReal::ZERO, "C = {c}, δ = {delta}: {:?}", s.worst);
            assert_eq!(s.checked, 49 * 49);
            assert!(s.parameter_lipschitz.holds, "{:?}", s.parameter_lipschitz.witness);
        }
    }
}

#[test]
fn gamma_radius_is_tight_for_the_doubled_sum() {
    let (g, c) = sum_map(0.05, 2.0);
    let inst = GammaInstance::new(g, [&[0.0], &[0.0], &[0.0]], c, 1.0, gamma_cfg(&[0.05, 0.1, 0.15])).unwrap();
    let chk = inst.verify((&[0.0], &[0.0]), (&[0.0], &[0.2])).unwrap();
    assert_eq!(chk.defect, ExtReal::ZERO);
    // Γ(0, 0) = {0} and Γ(0, 0.2) = {0.1}: the distance is exactly r/(1 + δ).
    assert!((chk.radius / (1.0 + inst.delta) - 0.1).abs() < 1e-12);
}

#[test]
fn gamma_with_identical_parameters_is_trivial() {
    let (g, c) = sum_map(0.1, 1.0);
    let inst = GammaInstance::new(g, [&[0.0], &[0.0], &[0.0]], c, 1.0, gamma_cfg(&[0.1, 0.2])).unwrap();
    let chk = inst.verify((&[0.1], &[-0.2]), (&[0.1], &[-0.2])).unwrap();
    assert_eq!((chk.radius, chk.defect), (0.0, ExtReal::ZERO));
}

#[test]
fn gamma_rejects_overstated_rate_and_far_parameters() {
    let (g, _) = sum_map(0.1, 1.0);
    let inst = GammaInstance::new(g.clone(), [&[0.0], &[0.0], &[0.0]], 3.0, 1.0, gamma_cfg(&[0.1, 0.2])).unwrap();
    assert!(matches!(inst.sweep(), Err(Error::Refuted { .. })));
    let inst = GammaInstance::new(g, [&[0.0], &[0.0], &[0.0]], 1.0, 1.0, gamma_cfg(&[0.1, 0.2])).unwrap();
    assert!(matches!(inst.verify((&[0.5], &[0.0]), (&[0.0], &[0.0])), Err(Error::Precondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solution_graph_is_the_zero_slice(triples in prop::collection::vec((0usize..6, 0usize..5, 0usize..5), 0..40)) {
        let x = line(0.0, 0.5, 0.1);
        let p = line(0.0, 0.4, 0.1);
        let y = line(-0.2, 0.2, 0.1);
        let h = ParamMultiMap::from_index_triples(&x, &p, &y, triples).unwrap();
        let s = implicit_map(&h).unwrap();
        let zero = y.index_of_zero().unwrap();
        for xi in 0..x.len() {
            for pi in 0..p.len() {
                prop_assert_eq!(s.contains_pair(pi, xi), h.contains_triple(xi, pi, zero));
            }
        }
    }

    #[test]
    fn rhs_is_nonincreasing_in_gamma(g1 in 0.05f64..2.0, g2 in 0.05f64..2.0, xi in 0usize..19, pi in 0usize..11) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let base = ImplicitInstance::new(two_x_minus_p(), &[0.0], &[0.0], 2.0, cfg()).unwrap();
        let x = -0.45 + 0.05 * xi as f64;
        let p = -0.5 + 0.1 * pi as f64;
        let a = base.clone().with_radii(0.5, 0.6, lo).unwrap().verify_estimate(Side::Solution, &[x], &[p]).unwrap();
        let b = base.with_radii(0.5, 0.6, hi).unwrap().verify_estimate(Side::Solution, &[x], &[p]).unwrap();
        prop_assert!(b.rhs <= a.rhs);
        prop_assert!(a.holds && b.holds);
    }
}
