//! Property tests for the structural invariants of each module.

use std::sync::Arc;

use proptest::prelude::*;

use fracperim::curvature::{mean_curvature, CurvatureOpts};
use fracperim::domains::{make_dumbbell, Region};
use fracperim::halfspace::{
    blob_corpus, corpus_window, exact_sum, pav_nonincreasing, rearrange_decreasing, rearrange_radial, GraphProfile,
    GridSet, Polygon,
};
use fracperim::perimeter::{perimeter_chord, perimeter_grid, perimeter_rel, ChordSpec, GridSpec};
use fracperim::potential::potential;
use fracperim::specfun::{d_const, eigenvalue, harmonic_dim};
use fracperim::{Domain, FracParams, HarmonicBasis, StarSurface};

fn dim_s() -> impl Strategy<Value = (usize, f64)> {
    (2usize..=3, 0.01f64..0.49)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_increase_strictly((n, s) in dim_s()) {
        let p = FracParams::new(n, s).unwrap();
        prop_assert_eq!(eigenvalue(p, 0), 0.0);
        for k in 0..=8 {
            prop_assert!(eigenvalue(p, k) < eigenvalue(p, k + 1), "k = {}", k);
        }
        prop_assert!(d_const(p) > 0.0);
        prop_assert_eq!(harmonic_dim(n, 0), 1);
        prop_assert_eq!(harmonic_dim(n, 1), n);
    }

    #[test]
    fn order_outside_the_interval_is_rejected(s in prop_oneof![-1.0f64..=0.0, 0.5f64..2.0], n in 2usize..=3) {
        let err = FracParams::new(n, s).unwrap_err();
        prop_assert!(err.to_string().contains("(0, 1/2)"));
    }

    #[test]
    fn dilation_scales_volume(r in 0.1f64..3.0, f in 0.2f64..5.0, n in 2usize..=3) {
        let b = Domain::ball(&vec![0.0; n], r).unwrap();
        let v0 = b.exact_volume().unwrap();
        let v1 = b.dilate(f).unwrap().exact_volume().unwrap();
        prop_assert!((v1 / (v0 * f.powi(n as i32)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn potential_scales_and_translates(
        lam in 0.3f64..4.0,
        shift in prop::array::uniform2(-5.0f64..5.0),
        x in prop::array::uniform2(-0.6f64..0.6),
        s in 0.05f64..0.45,
    ) {
        let p = FracParams::new(2, s).unwrap();
        let om = Domain::cube(&[-1.0, -0.8], &[1.2, 0.9]).unwrap();
        let v = potential(&om, &x, p).unwrap();
        let big = om.dilate(lam).unwrap();
        let vl = potential(&big, &[lam * x[0], lam * x[1]], p).unwrap();
        prop_assert!((vl / (lam.powf(-2.0 * s) * v) - 1.0).abs() < 1e-8, "{} vs {}", vl, v);
        // translate and quarter-turn: (x, y) -> (-y, x) + b
        let moved = Domain::cube(&[-0.9 + shift[0], -1.0 + shift[1]], &[0.8 + shift[0], 1.2 + shift[1]]).unwrap();
        let vm = potential(&moved, &[-x[1] + shift[0], x[0] + shift[1]], p).unwrap();
        prop_assert!((vm / v - 1.0).abs() < 1e-8, "{} vs {}", vm, v);
    }

    #[test]
    fn ball_potential_is_radial(r in 0.0f64..0.9, a in 0.0f64..6.283, s in 0.05f64..0.45) {
        let p = FracParams::new(2, s).unwrap();
        let b = Domain::unit_ball(2);
        let v = potential(&b, &[r * a.cos(), r * a.sin()], p).unwrap();
        let v0 = potential(&b, &[r, 0.0], p).unwrap();
        prop_assert!((v / v0 - 1.0).abs() < 1e-8);
        let outer = potential(&b, &[r + 0.05, 0.0], p).unwrap();
        prop_assert!(outer > v0);
    }

    #[test]
    fn pav_output_is_monotone_and_mass_preserving(y in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let z = pav_nonincreasing(&y);
        prop_assert!(z.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let (a, b): (f64, f64) = (y.iter().sum(), z.iter().sum());
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn exact_sum_is_order_independent(mut v in prop::collection::vec(-1e6f64..1e6, 0..60)) {
        let a = exact_sum(v.iter().copied());
        v.reverse();
        prop_assert_eq!(a.to_bits(), exact_sum(v.iter().copied()).to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chord_perimeter_is_homogeneous(w in 0.3f64..2.0, h in 0.3f64..2.0, s in 0.05f64..0.45) {
        let p = FracParams::new(2, s).unwrap();
        let spec = ChordSpec::default();
        let e = Domain::cube(&[0.0, 0.0], &[w, h]).unwrap();
        let base = perimeter_chord(&e, p, &spec).unwrap();
        prop_assert!(base.value >= 0.0 && base.error_bound >= 0.0);
        for lam in [0.5, 2.0] {
            let scaled = perimeter_chord(&e.dilate(lam).unwrap(), p, &spec).unwrap();
            let expect = lam.powf(2.0 - 2.0 * s) * base.value;
            let tol = scaled.error_bound + lam.powf(2.0 - 2.0 * s) * base.error_bound + 1e-9 * expect;
            prop_assert!((scaled.value - expect).abs() <= tol, "{} vs {}", scaled.value, expect);
        }
    }

    #[test]
    fn disk_beats_equal_area_rectangles(aspect in 1.05f64..4.0, s in 0.05f64..0.45) {
        let p = FracParams::new(2, s).unwrap();
        let spec = ChordSpec::default();
        let a = (std::f64::consts::PI * aspect).sqrt();
        let rect = Domain::cube(&[0.0, 0.0], &[a, std::f64::consts::PI / a]).unwrap();
        let d = perimeter_chord(&Domain::unit_ball(2), p, &spec).unwrap();
        let r = perimeter_chord(&rect, p, &spec).unwrap();
        prop_assert!(d.value + d.error_bound < r.value - r.error_bound);
    }

    #[test]
    fn star_membership_agrees_with_surface_points(c in prop::collection::vec(-0.05f64..0.05, 9), j in 0usize..256) {
        let p = FracParams::new(2, 0.25).unwrap();
        let b = Arc::new(HarmonicBasis::new(p, 4).unwrap());
        let surf = StarSurface::new(&[0.3, -0.2], c, b.clone()).unwrap();
        let th = b.node(j).to_vec();
        let x = surf.surface_point(&th).unwrap();
        let inner: Vec<f64> = x.iter().zip(&surf.center).map(|(a, o)| o + 0.999 * (a - o)).collect();
        let outer: Vec<f64> = x.iter().zip(&surf.center).map(|(a, o)| o + 1.001 * (a - o)).collect();
        prop_assert!(surf.star_membership(&inner));
        prop_assert!(!surf.star_membership(&outer));
    }

    #[test]
    fn curvature_is_translation_invariant(c in prop::collection::vec(-0.05f64..0.05, 9), t in prop::array::uniform2(-4.0f64..4.0)) {
        let p = FracParams::new(2, 0.3).unwrap();
        let b = Arc::new(HarmonicBasis::new(p, 4).unwrap());
        let s0 = StarSurface::new(&[0.0, 0.0], c, b.clone()).unwrap();
        let s1 = s0.translated(&t);
        let th = b.node(5).to_vec();
        let h0 = mean_curvature(&s0, None, p, &th, &CurvatureOpts::default()).unwrap().value;
        let h1 = mean_curvature(&s1, None, p, &th, &CurvatureOpts::default()).unwrap().value;
        prop_assert_eq!(h0.to_bits(), h1.to_bits());
    }

    #[test]
    fn horizontal_shift_leaves_the_halfplane_perimeter_unchanged(dx in -3.0f64..3.0, s in 0.1f64..0.4) {
        let p = FracParams::new(2, s).unwrap();
        let prof = GraphProfile::half_ball(2, 1.0, 12).unwrap();
        let poly = prof.polygon();
        let moved = Polygon::new(poly.vertices.iter().map(|v| [v[0] + dx, v[1]]).collect()).unwrap();
        let a = poly.perimeter_halfplane(p);
        let b = moved.perimeter_halfplane(p);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs(), "{} vs {}", a, b);
    }

    #[test]
    fn half_ball_profiles_carry_their_volume(m in 0.2f64..5.0, n in 2usize..=3, k in 4usize..40) {
        let prof = GraphProfile::half_ball(n, m, k).unwrap();
        prop_assert!((prof.volume / m - 1.0).abs() < 1e-10);
        prop_assert!(prof.heights.windows(2).all(|w| w[1] <= w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rearrangements_preserve_mass_and_are_idempotent(seed in 0u64..1000) {
        let (lo, hi) = corpus_window(2);
        for blob in blob_corpus(2, 3, seed) {
            let g = GridSet::from_region(&blob, &lo, &hi, 0.08, 2).unwrap();
            let r = rearrange_radial(&g).unwrap();
            let d = rearrange_decreasing(&g).unwrap();
            let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
            prop_assert_eq!(bits(g.slice_sums()), bits(r.slice_sums()));
            prop_assert_eq!(bits(g.column_sums()), bits(d.column_sums()));
            prop_assert_eq!(rearrange_radial(&r).unwrap(), r);
            prop_assert_eq!(rearrange_decreasing(&d).unwrap(), d);
        }
    }
}

#[test]
fn basis_is_discretely_orthonormal() {
    for n in [2, 3] {
        let p = FracParams::new(n, 0.25).unwrap();
        let b = HarmonicBasis::new(p, 6).unwrap();
        let g = b.gram();
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-10, "N={n} ({i},{j}) {v}");
            }
        }
    }
}

#[test]
fn relative_perimeter_grows_with_the_ambient_domain() {
    let p = FracParams::new(2, 0.25).unwrap();
    let g = GridSpec::new(0.02);
    let e = Domain::ball(&[0.0, 0.0], 0.5).unwrap();
    let mut last: Option<fracperim::perimeter::PerimeterEstimate> = None;
    for r in [1.0, 2.0, 8.0] {
        let est = perimeter_rel(&e, &Domain::ball(&[0.0, 0.0], r).unwrap(), p, &g).unwrap();
        if let Some(prev) = &last {
            assert!(prev.value <= est.value + prev.error_bound + est.error_bound);
        }
        last = Some(est);
    }
}

#[test]
fn grid_estimates_are_homogeneous() {
    let p = FracParams::new(2, 0.25).unwrap();
    let sq = Domain::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let base = perimeter_grid(&sq, p, &GridSpec::new(0.02)).unwrap();
    for lam in [0.5, 2.0] {
        let e = perimeter_grid(&sq.dilate(lam).unwrap(), p, &GridSpec::new(0.02 * lam)).unwrap();
        let f = lam.powf(1.5);
        assert!((e.value - f * base.value).abs() <= e.error_bound + f * base.error_bound + 1e-9 * e.value);
    }
}

#[test]
fn dumbbell_critical_points_are_mirror_symmetric() {
    use fracperim::potential::{find_critical_points, CriticalSearch};
    let p = FracParams::new(2, 0.25).unwrap();
    let dom = make_dumbbell(2, 1.0, 4.0, 0.3).unwrap();
    let search = CriticalSearch {
        multistart: 16,
        ..CriticalSearch::default()
    };
    let crit = find_critical_points(&dom, p, &search).unwrap();
    for c in &crit {
        let mirror = [4.0 - c.location[0], c.location[1]];
        assert!(
            crit.iter().any(|d| (d.location[0] - mirror[0]).hypot(d.location[1] - mirror[1]) < search.merge_radius * 10.0),
            "no mirror image of {:?}",
            c.location
        );
    }
}
