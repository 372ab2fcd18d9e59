use anyhow::Result;
use gfssm_core::{
    gfssm_matrix_form, grouped_scan, ssd_matrix_form, ssd_scan_recurrent, FirCoefficients, GfssmInstance, GroupedHiddenState,
    HiddenState, Scalar, SeededRng,
};

use super::{group_config, instance_seeds, par_map, Outcome};
use crate::args::{EquivArgs, Precision};
use crate::output::{csv_writer, sci, write_row};

pub const HEADER: [&str; 12] = [
    "run", "seed", "T", "Q", "n", "N", "P", "precision", "ssd_err", "gfssm_err", "reduction_err", "pass",
];

struct Errors {
    ssd: f64,
    gfssm: f64,
    reduction: Option<f64>,
}

fn max_diff<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max)
}

fn check<S: Scalar>(inst: &GfssmInstance<f64>) -> Result<Errors> {
    let inst = inst.cast::<S>();
    let (n, p, q) = (inst.base.state_dim(), inst.base.channels(), inst.cfg.groups);
    let plain = ssd_scan_recurrent(&inst.base, &HiddenState::zeros(n, p))?.0;
    let ssd = max_diff(&plain, &ssd_matrix_form(&inst.base)?);
    let grouped = grouped_scan(&inst, &GroupedHiddenState::zeros(q, n, p))?.0;
    let gfssm = max_diff(&grouped, &gfssm_matrix_form(&inst)?);
    let reduction = if inst.cfg.groups == 1 && inst.cfg.order == 1 {
        let mut unit = inst.clone();
        unit.fir = FirCoefficients::unit(1);
        let reduced = grouped_scan(&unit, &GroupedHiddenState::zeros(1, n, p))?.0;
        Some(max_diff(&reduced, &plain))
    } else {
        None
    };
    Ok(Errors { ssd, gfssm, reduction })
}

pub fn equiv_check(args: &EquivArgs) -> Result<Outcome> {
    let s = &args.shape;
    let cfg = group_config(s.q, s.n)?;
    let tol = args.tol.unwrap_or(match args.precision {
        Precision::Double => 1e-12,
        Precision::Single => 1e-4,
    });
    let seeds = instance_seeds(args.common.seed, args.runs as usize);
    let results = par_map(args.common.jobs, &seeds, |&seed| {
        let inst = GfssmInstance::<f64>::random(
            &mut SeededRng::new(seed),
            s.t as usize,
            s.state_dim as usize,
            s.channels as usize,
            cfg,
            args.a_range,
        );
        match args.precision {
            Precision::Double => check::<f64>(&inst),
            Precision::Single => check::<f32>(&inst),
        }
    })?;

    let mut out = csv_writer(args.common.out.as_deref())?;
    out.write_record(HEADER)?;
    let (mut failures, mut worst) = (0usize, 0.0f64);
    for (run, (seed, errs)) in seeds.iter().zip(results).enumerate() {
        let errs = errs?;
        let max = errs.ssd.max(errs.gfssm).max(errs.reduction.unwrap_or(0.0));
        let pass = max <= tol;
        failures += usize::from(!pass);
        worst = worst.max(max);
        write_row(
            &mut out,
            &[
                run.to_string(),
                seed.to_string(),
                s.t.to_string(),
                s.q.to_string(),
                s.n.to_string(),
                s.state_dim.to_string(),
                s.channels.to_string(),
                args.precision.name().to_string(),
                sci(errs.ssd),
                sci(errs.gfssm),
                errs.reduction.map(sci).unwrap_or_default(),
                pass.to_string(),
            ],
        )?;
    }
    out.flush()?;
    eprintln!(
        "equiv-check: {}/{} runs within {} (max error {})",
        seeds.len() - failures,
        seeds.len(),
        sci(tol),
        sci(worst)
    );
    Ok(Outcome::from_pass(failures == 0))
}
