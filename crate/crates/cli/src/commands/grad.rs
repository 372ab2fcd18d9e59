use anyhow::{bail, Result};
use gfssm_core::{
    finite_diff_grad, gfssm_backward, max_gradient_error, GfssmInstance, LayerGradients, ParamBlock, PromptBank, Scalar,
    SeededRng,
};

use super::{group_config, instance_seeds, par_map, Outcome};
use crate::args::{GradArgs, Precision};
use crate::output::{csv_writer, sci, write_row};

pub const HEADER: [&str; 5] = ["run", "seed", "block", "max_rel_err", "pass"];

/// Gradients below this magnitude are compared absolutely.
const ABS_FLOOR: f64 = 1e-6;

type Setup = (GfssmInstance<f64>, PromptBank<f64>, Vec<Vec<f64>>);

fn setup(seed: u64, args: &GradArgs) -> Result<Setup> {
    let cfg = group_config(args.q, args.n)?;
    let (t, n, p) = (args.t as usize, args.state_dim as usize, args.channels as usize);
    let mut rng = SeededRng::new(seed);
    let inst = GfssmInstance::random(&mut rng, t, n, p, cfg, (0.0, 1.0));
    let bank = PromptBank::random(&mut rng, cfg.groups, n, p, 1.0);
    let up = (0..t).map(|_| rng.vec(p, -1.0, 1.0)).collect();
    Ok((inst, bank, up))
}

fn analytic<S: Scalar>((inst, bank, up): &Setup) -> Result<LayerGradients<f64>> {
    let up: Vec<Vec<S>> = up.iter().map(|g| g.iter().map(|&v| S::of(v)).collect()).collect();
    let g = gfssm_backward(&inst.cast::<S>(), &bank.cast::<S>(), &up)?;
    let wide = |m: &[Vec<S>]| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect() };
    Ok(LayerGradients {
        grad_a: g.grad_a.iter().map(|v| v.as_f64()).collect(),
        grad_b: wide(&g.grad_b),
        grad_c: wide(&g.grad_c),
        grad_x: wide(&g.grad_x),
        grad_k: g.grad_k.iter().map(|v| v.as_f64()).collect(),
        grad_prompts: wide(&g.grad_prompts),
        grad_prompt_b: wide(&g.grad_prompt_b),
    })
}

fn block_errors(s: &Setup, args: &GradArgs) -> Result<Vec<(ParamBlock, f64)>> {
    let grads = match args.precision {
        Precision::Double => analytic::<f64>(s)?,
        Precision::Single => analytic::<f32>(s)?,
    };
    ParamBlock::ALL
        .iter()
        .map(|&block| {
            let numeric = finite_diff_grad(block, &s.0, &s.1, &s.2, args.eps)?;
            Ok((block, max_gradient_error(&grads.block(block), &numeric, ABS_FLOOR)))
        })
        .collect()
}

/// Largest magnitude among blocks that must vanish exactly.
fn degenerate_residual(seed: u64, args: &GradArgs) -> Result<(f64, f64)> {
    let (inst, bank, up) = setup(seed, args)?;
    let zero_up: Vec<Vec<f64>> = up.iter().map(|g| vec![0.0; g.len()]).collect();
    let g = gfssm_backward(&inst, &bank, &zero_up)?;
    let zero_upstream = ParamBlock::ALL
        .iter()
        .flat_map(|&b| g.block(b))
        .fold(0.0f64, |m, v| m.max(v.abs()));

    // No input and no prompts: the state is identically zero.
    let mut silent = inst.clone();
    silent.base.x.iter_mut().flatten().for_each(|v| *v = 0.0);
    let quiet = PromptBank::zeros(bank.groups(), inst.base.state_dim(), inst.base.channels());
    let g = gfssm_backward(&silent, &quiet, &up)?;
    let zero_input = [ParamBlock::A, ParamBlock::B, ParamBlock::C, ParamBlock::K, ParamBlock::PromptB]
        .iter()
        .flat_map(|&b| g.block(b))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((zero_upstream, zero_input))
}

pub fn grad_check(args: &GradArgs) -> Result<Outcome> {
    if !(args.eps > 0.0 && args.eps.is_finite()) {
        bail!("--eps must be positive (got {})", args.eps);
    }
    let tol = args.tol.unwrap_or(match args.precision {
        Precision::Double => 1e-5,
        Precision::Single => 1e-2,
    });
    let seeds = instance_seeds(args.common.seed, args.runs as usize);
    let results = par_map(args.common.jobs, &seeds, |&seed| block_errors(&setup(seed, args)?, args))?;

    let mut out = csv_writer(args.common.out.as_deref())?;
    out.write_record(HEADER)?;
    let (mut worst, mut pass) = (0.0f64, true);
    for (run, (seed, errs)) in seeds.iter().zip(results).enumerate() {
        for (block, err) in errs? {
            let ok = err < tol;
            pass &= ok;
            worst = worst.max(err);
            write_row(
                &mut out,
                &[run.to_string(), seed.to_string(), block.name().into(), sci(err), ok.to_string()],
            )?;
        }
    }
    let (zero_upstream, zero_input) = degenerate_residual(args.common.seed, args)?;
    for (name, residual) in [("zero-upstream", zero_upstream), ("zero-input", zero_input)] {
        let ok = residual == 0.0;
        pass &= ok;
        write_row(
            &mut out,
            &[name.into(), args.common.seed.to_string(), "all".into(), sci(residual), ok.to_string()],
        )?;
    }
    out.flush()?;
    eprintln!(
        "grad-check: max relative error {} over {} runs (tolerance {}); degenerate residuals {} / {}",
        sci(worst),
        seeds.len(),
        sci(tol),
        sci(zero_upstream),
        sci(zero_input)
    );
    Ok(Outcome::from_pass(pass))
}
