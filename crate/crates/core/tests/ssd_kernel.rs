mod common;

use common::{max_abs_diff, naive_ssd, naive_ssd_quadratic};
use gfssm_core::{build_l_plain, ssd_matrix_form, ssd_scan_recurrent, Error, HiddenState, SeededRng, SsdInstance64};
use proptest::prelude::*;

fn instance(seed: u64, t: usize, n: usize, p: usize) -> SsdInstance64 {
    SsdInstance64::random(&mut SeededRng::new(seed), t, n, p, 0.0, 1.0)
}

fn scan(inst: &SsdInstance64) -> Vec<Vec<f64>> {
    ssd_scan_recurrent(inst, &HiddenState::zeros(inst.state_dim(), inst.channels()))
        .unwrap()
        .0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scan_and_matrix_match_brute_force(seed in any::<u64>(), t in 1usize..=64, n in 1usize..=8, p in 1usize..=4) {
        let inst = instance(seed, t, n, p);
        let y_scan = scan(&inst);
        let y_mat = ssd_matrix_form(&inst).unwrap();
        prop_assert!(max_abs_diff(&y_scan, &y_mat) <= 1e-12);
        prop_assert!(max_abs_diff(&y_scan, &naive_ssd(&inst)) <= 1e-12);
        prop_assert!(max_abs_diff(&y_mat, &naive_ssd_quadratic(&inst)) <= 1e-12);
    }

    #[test]
    fn plain_mask_minors_vanish(seed in any::<u64>(), t in 3usize..=24) {
        // Every submatrix inside the lower triangle has rank at most one.
        let a = SsdInstance64::random(&mut SeededRng::new(seed), t, 1, 1, 0.5, 1.0).a;
        let l = build_l_plain(&a).unwrap();
        for t1 in 0..t {
            for t2 in t1 + 1..t {
                for s1 in 0..=t1 {
                    for s2 in s1 + 1..=t1 {
                        let minor = l[(t1, s1)] * l[(t2, s2)] - l[(t1, s2)] * l[(t2, s1)];
                        let scale = (l[(t1, s1)] * l[(t2, s2)]).abs().max(f64::MIN_POSITIVE);
                        prop_assert!(minor.abs() / scale < 1e-12, "minor ({t1},{t2})x({s1},{s2}) = {minor}");
                    }
                }
            }
        }
    }

    #[test]
    fn recurrence_is_linear_in_input(seed in any::<u64>(), t in 1usize..=32, alpha in -3.0f64..3.0) {
        let inst = instance(seed, t, 3, 2);
        let mut scaled = inst.clone();
        for row in &mut scaled.x {
            for v in row.iter_mut() {
                *v *= alpha;
            }
        }
        let y = scan(&inst);
        let ys = scan(&scaled);
        for (r, rs) in y.iter().zip(&ys) {
            for (u, v) in r.iter().zip(rs) {
                prop_assert!((alpha * u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }
}

#[test]
fn hundred_seeded_instances_agree() {
    let mut rng = SeededRng::new(2024);
    for _ in 0..100 {
        let t = 1 + rng.below(64);
        let n = 1 + rng.below(8);
        let p = 1 + rng.below(4);
        let inst = SsdInstance64::random(&mut rng, t, n, p, 0.0, 1.0);
        assert!(max_abs_diff(&scan(&inst), &ssd_matrix_form(&inst).unwrap()) <= 1e-12);
    }
}

#[test]
fn zero_decay_keeps_only_the_diagonal() {
    let mut inst = instance(5, 10, 3, 2);
    inst.a.iter_mut().for_each(|a| *a = 0.0);
    let y = scan(&inst);
    for t in 0..10 {
        let cb: f64 = inst.c[t].iter().zip(&inst.b[t]).map(|(c, b)| c * b).sum();
        for j in 0..2 {
            assert!((y[t][j] - cb * inst.x[t][j]).abs() < 1e-15);
        }
    }
    let l = build_l_plain(&inst.a).unwrap();
    for t in 0..10 {
        for s in 0..10 {
            assert_eq!(l[(t, s)], if s == t { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn unit_decay_is_a_running_sum() {
    let mut inst = instance(6, 12, 2, 2);
    inst.a.iter_mut().for_each(|a| *a = 1.0);
    let l = build_l_plain(&inst.a).unwrap();
    for t in 0..12 {
        for s in 0..12 {
            assert_eq!(l[(t, s)], if s <= t { 1.0 } else { 0.0 });
        }
    }
    assert!(max_abs_diff(&scan(&inst), &naive_ssd_quadratic(&inst)) < 1e-12);
}

#[test]
fn decay_one_step_after_a_zero_cuts_history() {
    let mut inst = instance(7, 8, 2, 2);
    inst.a[4] = 0.0;
    let l = build_l_plain(&inst.a).unwrap();
    for t in 4..8 {
        for s in 0..4 {
            assert_eq!(l[(t, s)], 0.0);
        }
    }
}

#[test]
fn non_finite_inputs_are_rejected() {
    let mut inst = instance(8, 6, 2, 2);
    inst.x[3][1] = f64::NAN;
    assert!(matches!(
        ssd_scan_recurrent(&inst, &HiddenState::zeros(2, 2)),
        Err(Error::NonFinite { .. })
    ));
}

#[test]
fn exploding_state_reports_step() {
    let mut inst = SsdInstance64::random(&mut SeededRng::new(9), 200, 2, 2, 0.0, 1.0);
    inst.a.iter_mut().for_each(|a| *a = 1e10);
    match ssd_scan_recurrent(&inst, &HiddenState::zeros(2, 2)) {
        Err(Error::NonFiniteState { step }) => assert!(step > 0 && step < 200),
        other => panic!("expected overflow, got {other:?}"),
    }
}
