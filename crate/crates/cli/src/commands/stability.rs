use anyhow::{bail, Result};
use gfssm_core::{precision_divergence, product_profile, FirCoefficients, GfssmInstance, GroupConfig, SeededRng};

use super::{instance_seeds, par_map, Outcome};
use crate::args::{Precision, StabilityArgs};
use crate::output::{csv_writer, sci, write_row};
use crate::sweep::ASpec;

pub const HEADER: [&str; 11] = [
    "T",
    "Q",
    "n",
    "a_spec",
    "variant",
    "precision",
    "min_nonzero",
    "max_entry",
    "log10_range",
    "max_abs_div",
    "max_rel_div",
];

struct Point {
    t: usize,
    q: usize,
    n: usize,
    a: ASpec,
    seed: u64,
}

fn decays(spec: ASpec, len: usize, rng: &mut SeededRng) -> Vec<f64> {
    match spec {
        ASpec::Constant(a) => vec![a; len],
        ASpec::Range(lo, hi) => (0..len).map(|_| hi - (hi - lo) * rng.uniform()).collect(),
    }
}

fn run_point(pt: &Point, args: &StabilityArgs) -> Result<Vec<String>> {
    let mut rng = SeededRng::new(pt.seed);
    let cfg = GroupConfig::new(pt.q, pt.n)?;
    let mut inst = GfssmInstance::<f64>::random(
        &mut rng,
        pt.t,
        args.state_dim as usize,
        args.channels as usize,
        cfg,
        (0.0, 1.0),
    );
    inst.base.a = decays(pt.a, pt.t, &mut rng);
    inst.fir = FirCoefficients::uniform(pt.n);

    // A single group is the plain recurrence, so those rows report it.
    let plain = pt.q == 1;
    let profile = product_profile(&inst.base.a, pt.q)?;
    let stats = if plain { profile.plain } else { profile.grouped };
    let (max_abs, max_rel) = match args.precision {
        Precision::Double => (0.0, 0.0),
        Precision::Single => {
            let rep = precision_divergence(&inst)?;
            let d = if plain { rep.plain } else { rep.grouped };
            (d.max_abs, d.max_rel)
        }
    };
    Ok(vec![
        pt.t.to_string(),
        pt.q.to_string(),
        pt.n.to_string(),
        pt.a.to_string(),
        if plain { "plain" } else { "grouped" }.to_string(),
        args.precision.name().to_string(),
        sci(stats.min_nonzero_entry),
        sci(stats.max_entry),
        sci(stats.log10_dynamic_range),
        sci(max_abs),
        sci(max_rel),
    ])
}

pub fn stability(args: &StabilityArgs) -> Result<Outcome> {
    if let Some(bad) = args.a.0.iter().find(|a| a.max() > 1.0) {
        if !args.unconstrained {
            bail!("decay spec `{bad}` exceeds 1; pass --unconstrained to sweep growing states");
        }
    }
    if let Some(&t) = args.t.0.iter().find(|&&t| t < 2) {
        bail!("stability needs T >= 2 (got {t})");
    }
    let mut points = Vec::new();
    for &t in &args.t.0 {
        for &q in &args.q.0 {
            for &n in &args.n.0 {
                for &a in &args.a.0 {
                    points.push(Point { t, q, n, a, seed: 0 });
                }
            }
        }
    }
    let seeds = instance_seeds(args.common.seed, points.len());
    for (pt, seed) in points.iter_mut().zip(seeds) {
        pt.seed = seed;
    }
    let rows = par_map(args.common.jobs, &points, |pt| run_point(pt, args))?;
    let mut out = csv_writer(args.common.out.as_deref())?;
    out.write_record(HEADER)?;
    for row in rows {
        write_row(&mut out, &row?)?;
    }
    out.flush()?;
    Ok(Outcome::Pass)
}
