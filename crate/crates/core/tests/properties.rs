use diststeer::cf::{gil_pelaez_cdf, invert_pdf, CfTable, LinComboCF, QuadratureSpec, ScalarDist};
use diststeer::constraints::{state_cc_margin, ConstraintKind, HalfspaceConstraint};
use diststeer::lift::{input_map, lift, state_map, Controller, LtvSystem};
use diststeer::matching::cf_l1_distance;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn dist() -> impl Strategy<Value = ScalarDist> {
    prop_oneof![
        (-3.0..3.0f64, 0.05..4.0f64).prop_map(|(m, v)| ScalarDist::gaussian(m, v).unwrap()),
        (-3.0..3.0f64, 0.1..2.0f64).prop_map(|(m, b)| ScalarDist::laplace(m, b).unwrap()),
        (
            0.1..0.9f64,
            -2.0..2.0f64,
            -2.0..2.0f64,
            0.1..2.0f64,
            0.1..2.0f64
        )
            .prop_map(|(w, m1, m2, v1, v2)| {
                ScalarDist::mixture(vec![w, 1.0 - w], vec![m1, m2], vec![v1, v2]).unwrap()
            }),
    ]
}

fn single(d: &ScalarDist) -> LinComboCF<'_> {
    LinComboCF::new(vec![1.0], std::slice::from_ref(d), 0.0).unwrap()
}

fn unit_disk() -> impl Strategy<Value = Complex64> {
    (0.0..=1.0f64, -std::f64::consts::PI..std::f64::consts::PI)
        .prop_map(|(r, a)| Complex64::from_polar(r, a))
}

fn coarse() -> QuadratureSpec {
    QuadratureSpec {
        nodes_per_unit: 32,
        ..QuadratureSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn hermitian_symmetry(d in dist(), t in -50.0..50.0f64) {
        let (a, b) = (d.cf(-t), d.cf(t).conj());
        prop_assert!((a - b).norm() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn cdf_is_monotone_with_limits(d in dist()) {
        let lc = single(&d);
        let table = CfTable::new(&lc, &coarse()).unwrap();
        let (m, s) = (d.mean(), d.std_dev());
        let mut last = 0.0;
        for k in 0..=80 {
            let y = m - 6.0 * s + k as f64 * 12.0 * s / 80.0;
            let f = table.cdf(y);
            prop_assert!(f >= last - 1e-8, "cdf drops at {}: {} < {}", y, f, last);
            last = f;
        }
        prop_assert!(table.cdf(m - 10.0 * s) < 1e-3);
        prop_assert!(table.cdf(m + 10.0 * s) > 1.0 - 1e-3);
    }

    #[test]
    fn pointwise_pdf_gap_is_bounded_by_distance(a in dist(), b in dist(), u in 0.0..1.0f64) {
        let (la, lb) = (single(&a), single(&b));
        let q = coarse();
        let d = cf_l1_distance(&la, &lb, &q).unwrap();
        let lo = a.mean().min(b.mean()) - 3.0 * a.std_dev().max(b.std_dev());
        let hi = a.mean().max(b.mean()) + 3.0 * a.std_dev().max(b.std_dev());
        let z = lo + u * (hi - lo);
        let gap = (invert_pdf(&la, z, &q).unwrap() - invert_pdf(&lb, z, &q).unwrap()).abs();
        prop_assert!(gap <= d + 1e-6, "gap {} > D {}", gap, d);
    }

    #[test]
    fn distance_is_symmetric_and_vanishes_on_the_diagonal(a in dist(), b in dist()) {
        let (la, lb) = (single(&a), single(&b));
        let q = coarse();
        prop_assert!(cf_l1_distance(&la, &la, &q).unwrap().abs() < 1e-14);
        let (ab, ba) = (cf_l1_distance(&la, &lb, &q).unwrap(), cf_l1_distance(&lb, &la, &q).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn margin_is_monotone_in_the_bound(d in dist(), beta in -2.0..2.0f64, step in 0.01..2.0f64) {
        let sys = LtvSystem::time_invariant(
            DMatrix::identity(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1,
        ).unwrap();
        let lf = lift(&sys);
        let comps = [d, ScalarDist::gaussian(0.0, 0.2).unwrap()];
        let ctrl = Controller::zeros(&lf);
        let q = coarse();
        let margin = |b: f64| {
            let hc = HalfspaceConstraint::new(ConstraintKind::State, vec![1.0], b, 1).unwrap();
            state_cc_margin(&hc, &lf, &ctrl, &comps, 0.05, &q).unwrap()
        };
        prop_assert!(margin(beta + step) >= margin(beta) - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn product_of_unit_disk_numbers(
        pairs in prop::collection::vec((unit_disk(), unit_disk()), 1..8)
    ) {
        let pa: Complex64 = pairs.iter().map(|p| p.0).product();
        let pb: Complex64 = pairs.iter().map(|p| p.1).product();
        let rhs: f64 = pairs.iter().map(|(a, b)| (a - b).norm()).sum();
        prop_assert!((pa - pb).norm() <= rhs + 1e-15);
    }
}

fn random_system(seed: &[f64], n: usize, m: usize, p: usize, horizon: usize) -> LtvSystem {
    let mut it = seed.iter().cycle().copied();
    let mut mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| it.next().unwrap());
    let (a, b, d): (Vec<_>, Vec<_>, Vec<_>) = (0..horizon)
        .map(|_| (mat(n, n), mat(n, m), mat(n, p)))
        .fold((vec![], vec![], vec![]), |mut acc, x| {
            acc.0.push(x.0);
            acc.1.push(x.1);
            acc.2.push(x.2);
            acc
        });
    LtvSystem::new(a, b, d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_feedback_round_trips(
        n in 1usize..3, m in 1usize..3, p in 1usize..3, horizon in 1usize..4,
        entries in prop::collection::vec(-1.0..1.0f64, 64),
    ) {
        let lf = lift(&random_system(&entries, n, m, p, horizon));
        let mut l = DMatrix::from_fn(lf.input_len(), lf.state_len(), |i, j| entries[(7 * i + 3 * j) % 64]);
        lf.mask_gain(&mut l);
        let g = DVector::from_fn(lf.input_len(), |i, _| entries[(5 * i + 1) % 64]);
        let ctrl = Controller::from_state_feedback(&lf, &l, &g).unwrap();
        let (l2, g2) = ctrl.to_state_feedback(&lf);
        prop_assert!((l2 - &l).amax() < 1e-10);
        prop_assert!((g2 - &g).amax() < 1e-10);
    }

    #[test]
    fn inputs_never_see_future_disturbances(
        n in 1usize..3, m in 1usize..3, p in 1usize..3, horizon in 2usize..4,
        entries in prop::collection::vec(-1.0..1.0f64, 64),
    ) {
        let lf = lift(&random_system(&entries, n, m, p, horizon));
        let params: Vec<f64> = (0..lf.controller_parameters()).map(|i| entries[(11 * i + 2) % 64]).collect();
        let ctrl = Controller::from_params(&lf, &params).unwrap();
        let um = input_map(&lf, &ctrl).unwrap();
        let sm = state_map(&lf, &ctrl).unwrap();
        // column j·p.. of 𝒟W is w_j; u_k may depend on it only for k > j
        for j in 0..horizon {
            for k in 0..=j {
                for r in 0..m {
                    for c in 0..p {
                        prop_assert_eq!(um.w[(k * m + r, j * p + c)], 0.0);
                    }
                }
                for r in 0..n {
                    for c in 0..p {
                        prop_assert_eq!(sm.w[(k * n + r, j * p + c)], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn gil_pelaez_matches_closed_forms_on_a_grid() {
    let q = QuadratureSpec::default();
    for d in [
        ScalarDist::gaussian(0.7, 2.0).unwrap(),
        ScalarDist::laplace(-0.3, 0.8).unwrap(),
    ] {
        let s = d.std_dev();
        for k in 0..21 {
            let y = d.mean() - 4.0 * s + k as f64 * 0.4 * s;
            let f = gil_pelaez_cdf(&single(&d), y, &q).unwrap();
            assert!(
                (f - d.cdf(y)).abs() < 1e-6,
                "{d:?} at {y}: {f} vs {}",
                d.cdf(y)
            );
        }
    }
}
