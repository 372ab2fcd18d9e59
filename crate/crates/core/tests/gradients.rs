mod common;

use common::naive_prompted;
use gfssm_core::{
    finite_diff_grad, gfssm_backward, max_gradient_error, GfssmInstance64, GroupConfig, ParamBlock, PromptBank,
    SeededRng,
};
use proptest::prelude::*;

type Setup = (GfssmInstance64, PromptBank<f64>, Vec<Vec<f64>>);

fn setup(seed: u64, t: usize, q: usize, order: usize) -> Setup {
    let mut rng = SeededRng::new(seed);
    let cfg = GroupConfig::new(q, order).unwrap();
    let inst = GfssmInstance64::random(&mut rng, t, 3, 2, cfg, (0.0, 1.0));
    let bank = PromptBank::random(&mut rng, q, 3, 2, 1.0);
    let up = (0..t).map(|_| rng.vec(2, -1.0, 1.0)).collect();
    (inst, bank, up)
}

/// Objective evaluated through the brute-force prompted recurrence.
fn objective(inst: &GfssmInstance64, bank: &PromptBank<f64>, up: &[Vec<f64>]) -> f64 {
    naive_prompted(bank, inst)
        .iter()
        .zip(up)
        .map(|(y, g)| y.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

type Coords = for<'a> fn(&'a mut GfssmInstance64, &'a mut PromptBank<f64>) -> Vec<&'a mut f64>;

fn decays<'a>(i: &'a mut GfssmInstance64, _: &'a mut PromptBank<f64>) -> Vec<&'a mut f64> {
    i.base.a.iter_mut().collect()
}

fn taps<'a>(i: &'a mut GfssmInstance64, _: &'a mut PromptBank<f64>) -> Vec<&'a mut f64> {
    i.fir.k.iter_mut().collect()
}

fn input_b<'a>(i: &'a mut GfssmInstance64, _: &'a mut PromptBank<f64>) -> Vec<&'a mut f64> {
    i.base.b.iter_mut().flatten().collect()
}

fn prompt_b<'a>(_: &'a mut GfssmInstance64, b: &'a mut PromptBank<f64>) -> Vec<&'a mut f64> {
    b.prompt_b.iter_mut().flatten().collect()
}

/// Central differences of the brute-force objective, one coordinate at a time.
fn oracle_grad((inst, bank, up): &Setup, eps: f64, coords: Coords) -> Vec<f64> {
    let count = coords(&mut inst.clone(), &mut bank.clone()).len();
    (0..count)
        .map(|i| {
            let eval = |delta: f64| {
                let (mut pi, mut pb) = (inst.clone(), bank.clone());
                *coords(&mut pi, &mut pb)[i] += delta;
                objective(&pi, &pb, up)
            };
            (eval(eps) - eval(-eps)) / (2.0 * eps)
        })
        .collect()
}

#[test]
fn analytic_gradients_match_brute_force_differences() {
    for seed in 0..20u64 {
        let (q, order) = ([1, 2, 4, 3][seed as usize % 4], [1, 2, 4][seed as usize % 3]);
        let s = setup(seed, 6 + seed as usize % 7, q, order);
        let grads = gfssm_backward(&s.0, &s.1, &s.2).unwrap();
        let checks = [
            (ParamBlock::A, decays as Coords),
            (ParamBlock::K, taps),
            (ParamBlock::B, input_b),
            (ParamBlock::PromptB, prompt_b),
        ];
        for (block, coords) in checks {
            let err = max_gradient_error(&grads.block(block), &oracle_grad(&s, 1e-5, coords), 1e-6);
            assert!(err < 1e-5, "seed {seed}, block {}: {err}", block.name());
        }
    }
}

#[test]
fn every_block_passes_the_library_checker() {
    for seed in 100..120u64 {
        let (inst, bank, up) = setup(seed, 9, 4, 4);
        let grads = gfssm_backward(&inst, &bank, &up).unwrap();
        for block in ParamBlock::ALL {
            let numeric = finite_diff_grad(block, &inst, &bank, &up, 1e-5).unwrap();
            let err = max_gradient_error(&grads.block(block), &numeric, 1e-6);
            assert!(err < 1e-5, "seed {seed}, block {}: {err}", block.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_upstream_gives_exact_zeros(seed in any::<u64>(), t in 1usize..=16, q in 1usize..=4, order in 1usize..=4) {
        let (inst, bank, up) = setup(seed, t, q, order);
        let zeros: Vec<Vec<f64>> = up.iter().map(|g| vec![0.0; g.len()]).collect();
        let grads = gfssm_backward(&inst, &bank, &zeros).unwrap();
        for block in ParamBlock::ALL {
            prop_assert!(grads.block(block).iter().all(|&v| v == 0.0), "block {}", block.name());
        }
    }

    #[test]
    fn zero_input_leaves_only_input_gradients(seed in any::<u64>(), t in 1usize..=16, q in 1usize..=4, order in 1usize..=4) {
        // With no input and no prompts the state is identically zero, so
        // only the input-side gradients can be nonzero.
        let (mut inst, _, up) = setup(seed, t, q, order);
        inst.base.x.iter_mut().flatten().for_each(|v| *v = 0.0);
        let bank = PromptBank::zeros(q, 3, 2);
        let grads = gfssm_backward(&inst, &bank, &up).unwrap();
        for block in [ParamBlock::A, ParamBlock::B, ParamBlock::C, ParamBlock::K, ParamBlock::PromptB] {
            prop_assert!(grads.block(block).iter().all(|&v| v == 0.0), "block {}", block.name());
        }
    }

    #[test]
    fn objective_is_linear_in_taps(seed in any::<u64>(), t in 1usize..=16, q in 1usize..=4, order in 1usize..=4) {
        // f(k) is linear, so f(k + e_j) − f(k) equals the j-th tap gradient.
        let s = setup(seed, t, q, order);
        let grads = gfssm_backward(&s.0, &s.1, &s.2).unwrap();
        let base = objective(&s.0, &s.1, &s.2);
        for j in 0..order {
            let mut bumped = s.0.clone();
            bumped.fir.k[j] += 1.0;
            let diff = objective(&bumped, &s.1, &s.2) - base;
            prop_assert!((diff - grads.grad_k[j]).abs() <= 1e-10 * (1.0 + diff.abs()));
        }
    }
}
