use std::f64::consts::PI;

use nejunction_core::analytic::{rate_constant, CellParams};
use nejunction_core::geometry::{Cone, EffectiveGeometry, JunctionGeometry, Profile, Reporter};
use proptest::prelude::*;

/// Composite 5-point Gauss–Legendre rule, independent of the library's
/// closed forms and adaptive Simpson.
fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            X.iter()
                .zip(W)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// Gauss–Legendre on panels graded geometrically toward both ends of
/// `[a, b]`, where a steep `1/A` concentrates.
fn graded(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let mut cuts = vec![a, mid, b];
    for j in 1..=14 {
        let frac = 0.5 * 10f64.powi(-j);
        cuts.push(a + (b - a) * frac);
        cuts.push(b - (b - a) * frac);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .map(|w| gauss_legendre(f, w[0], w[1], 20))
        .sum()
}

fn oracle_harmonic_area(radius: f64, angle: f64, length: f64) -> f64 {
    let inv = graded(
        &|z| 1.0 / (PI * (radius + z * angle.tan()).powi(2)),
        0.0,
        length,
    );
    length / inv
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn reference_cone_against_oracle() {
    let g = JunctionGeometry::Cone(Cone::from_degrees(9.25e-3, 25.0, 0.01).unwrap());
    let oracle = oracle_harmonic_area(9.25e-3, 25f64.to_radians(), 0.01);
    assert!(rel(g.harmonic_mean_area(), oracle) < 1e-6);
    assert!(rel(oracle, 4.0432e-4) < 1e-4);
}

proptest! {
    #[test]
    fn cone_closed_form_matches_quadrature(
        log_r in -3.0f64..-1.0,
        angle_deg in 0.0f64..60.0,
        log_l in -3.0f64..0.0,
    ) {
        let (r, l) = (10f64.powf(log_r), 10f64.powf(log_l));
        let a = angle_deg.to_radians();
        let g = JunctionGeometry::cone(r, a, l).unwrap();
        prop_assert!(rel(g.harmonic_mean_area(), oracle_harmonic_area(r, a, l)) < 1e-6);
        prop_assert!(rel(g.harmonic_mean_area_quadrature(1e-10), g.harmonic_mean_area()) < 1e-6);
    }

    #[test]
    fn harmonic_mean_below_arithmetic_mean(
        radii in prop::collection::vec(1e-3f64..2e-2, 2..12),
        length in 1e-3f64..0.1,
    ) {
        let n = radii.len();
        let z: Vec<f64> = (0..n).map(|i| length * i as f64 / (n - 1) as f64).collect();
        let g = JunctionGeometry::Tabulated(Profile::new(z, radii.clone()).unwrap());
        let hm = g.harmonic_mean_area();
        let am = g.mean_area();
        prop_assert!(hm <= am * (1.0 + 1e-12));
        let constant = radii.iter().all(|&r| r == radii[0]);
        if !constant {
            prop_assert!(hm < am);
        }
        let inv_area = |s: f64| 1.0 / g.area_at(s.min(length)).unwrap();
        let pts = (0..n).map(|i| length * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
        let oracle = length / pts.windows(2).map(|w| graded(&inv_area, w[0], w[1])).sum::<f64>();
        prop_assert!(rel(hm, oracle) < 1e-6);
    }

    #[test]
    fn harmonic_area_monotone_in_radius_and_angle(
        r in 1e-3f64..5e-2,
        dr in 1e-5f64..1e-2,
        angle_deg in 0.0f64..60.0,
        dangle in 0.1f64..20.0,
        l in 1e-3f64..1.0,
    ) {
        let a = angle_deg.to_radians();
        let base = JunctionGeometry::cone(r, a, l).unwrap().harmonic_mean_area();
        prop_assert!(JunctionGeometry::cone(r + dr, a, l).unwrap().harmonic_mean_area() >= base);
        let wider = (angle_deg + dangle).min(80.0).to_radians();
        prop_assert!(JunctionGeometry::cone(r, wider, l).unwrap().harmonic_mean_area() >= base);
    }

    #[test]
    fn conductance_per_length_decreases_to_limit(
        r in 1e-3f64..5e-2,
        angle_deg in 1.0f64..60.0,
        l in 1e-3f64..1.0,
        factor in 1.01f64..10.0,
    ) {
        let a = angle_deg.to_radians();
        let short = JunctionGeometry::cone(r, a, l).unwrap().harmonic_mean_area() / l;
        let long = JunctionGeometry::cone(r, a, l * factor).unwrap().harmonic_mean_area() / (l * factor);
        let limit = nejunction_core::geometry::asymptotic_conductance_limit(r, a).unwrap();
        prop_assert!(long < short);
        prop_assert!(long > limit);
        let far = JunctionGeometry::cone(r, a, 1e6).unwrap().harmonic_mean_area() / 1e6;
        prop_assert!(rel(far, limit) < 1e-4);
    }

    #[test]
    fn kappa_monotone_in_each_parameter(
        d in 0.1f64..5.0,
        k in 1u32..100,
        v_ne in 5.0f64..50.0,
        angle_deg in 1.0f64..60.0,
        l in 2e-3f64..5e-2,
    ) {
        let cell = CellParams::new(k, 200.0, v_ne).unwrap();
        let rep = Reporter::new("x", d, 0.0).unwrap();
        let geom = |r: f64, deg: f64, len: f64| EffectiveGeometry::from_geometry(JunctionGeometry::Cone(Cone::from_degrees(r, deg, len).unwrap()));
        let base = rate_constant(&cell, &geom(9e-3, angle_deg, l), &rep).kappa;
        let bigger_d = rate_constant(&cell, &geom(9e-3, angle_deg, l), &Reporter::new("x", d * 1.1, 0.0).unwrap()).kappa;
        let more_k = rate_constant(&CellParams::new(k + 1, 200.0, v_ne).unwrap(), &geom(9e-3, angle_deg, l), &rep).kappa;
        let bigger_ne = rate_constant(&CellParams::new(k, 200.0, v_ne * 1.1).unwrap(), &geom(9e-3, angle_deg, l), &rep).kappa;
        let wider = rate_constant(&cell, &geom(9e-3, angle_deg + 1.0, l), &rep).kappa;
        let fatter = rate_constant(&cell, &geom(9.5e-3, angle_deg, l), &rep).kappa;
        let longer = rate_constant(&cell, &geom(9e-3, angle_deg, l * 1.5), &rep).kappa;
        prop_assert!(bigger_d > base);
        prop_assert!(more_k > base);
        prop_assert!(bigger_ne < base);
        prop_assert!(wider > base);
        prop_assert!(fatter > base);
        prop_assert!(longer < base);
    }
}
