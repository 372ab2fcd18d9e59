use std::fs::File;

use anyhow::{Context, Result};
use gfssm_core::{continue_chunk, init_fresh, stream, ChunkCache, GfssmInstance, PromptBank, Scalar, SeededRng};

use super::{group_config, par_map, Outcome};
use crate::args::{Precision, StreamArgs};
use crate::output::{csv_writer, sci, write_row};

pub const HEADER: [&str; 7] = ["chunk", "chunks", "precision", "max_abs_err", "tol", "cache_exact", "pass"];

struct ChunkResult {
    max_abs: f64,
    cache_exact: bool,
}

fn slice<S: Scalar>(full: &GfssmInstance<S>, range: std::ops::Range<usize>) -> Result<GfssmInstance<S>> {
    Ok(GfssmInstance::new(full.base.slice(range), full.cfg, full.fir.clone())?)
}

/// Save the cache after the first chunk, read it back, and check the rest
/// of the sequence continues bit-identically from the reloaded copy.
fn cache_round_trip<S: Scalar>(
    inst: &GfssmInstance<S>,
    bank: &PromptBank<S>,
    chunk: usize,
    args: &StreamArgs,
) -> Result<bool> {
    let t = inst.len();
    let cut = if chunk < t { chunk } else { t / 2 };
    if cut == 0 {
        return Ok(true);
    }
    let (_, cache) = init_fresh(bank, &slice(inst, 0..cut)?)?;
    let reloaded = match &args.cache_file {
        Some(path) => {
            // One file per chunk size when several run, so jobs never share a path.
            let path = if args.chunk.0.len() > 1 {
                path.with_extension(format!("chunk{chunk}.bin"))
            } else {
                path.clone()
            };
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            cache.write_to(file)?;
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            ChunkCache::<S>::read_from(file)?
        }
        None => ChunkCache::<S>::from_bytes(&cache.to_bytes())?,
    };
    let rest = slice(inst, cut..t)?;
    let (y_mem, next_mem) = continue_chunk(&cache, &rest)?;
    let (y_disk, next_disk) = continue_chunk(&reloaded, &rest)?;
    Ok(reloaded == cache && y_mem == y_disk && next_mem == next_disk)
}

fn check<S: Scalar>(
    inst: &GfssmInstance<f64>,
    bank: &PromptBank<f64>,
    reference: &[Vec<f64>],
    chunk: usize,
    args: &StreamArgs,
) -> Result<ChunkResult> {
    let (inst, bank) = (inst.cast::<S>(), bank.cast::<S>());
    let (y, _) = stream(&inst, &bank, chunk)?;
    let max_abs = y
        .iter()
        .flatten()
        .zip(reference.iter().flatten())
        .map(|(a, b)| (a.as_f64() - b).abs())
        .fold(0.0, f64::max);
    Ok(ChunkResult {
        max_abs,
        cache_exact: cache_round_trip(&inst, &bank, chunk, args)?,
    })
}

pub fn stream_check(args: &StreamArgs) -> Result<Outcome> {
    let cfg = group_config(args.q, args.n)?;
    let (t, n, p) = (args.t as usize, args.state_dim as usize, args.channels as usize);
    let mut rng = SeededRng::new(args.common.seed);
    let inst = GfssmInstance::<f64>::random(&mut rng, t, n, p, cfg, (0.0, 1.0));
    let bank = PromptBank::random(&mut rng, cfg.groups, n, p, args.prompt_scale);
    let (reference, _) = init_fresh(&bank, &inst)?;
    let tol = args.tol.unwrap_or(match args.precision {
        Precision::Double => 1e-12,
        Precision::Single => 1e-4,
    });

    let results = par_map(args.common.jobs, &args.chunk.0, |&chunk| match args.precision {
        Precision::Double => check::<f64>(&inst, &bank, &reference, chunk, args),
        Precision::Single => check::<f32>(&inst, &bank, &reference, chunk, args),
    })?;
    let mut out = csv_writer(args.common.out.as_deref())?;
    out.write_record(HEADER)?;
    let (mut pass, mut worst) = (true, 0.0f64);
    for (&chunk, res) in args.chunk.0.iter().zip(results) {
        let res = res?;
        let ok = res.max_abs <= tol && res.cache_exact;
        pass &= ok;
        worst = worst.max(res.max_abs);
        write_row(
            &mut out,
            &[
                chunk.to_string(),
                t.div_ceil(chunk).to_string(),
                args.precision.name().into(),
                sci(res.max_abs),
                sci(tol),
                res.cache_exact.to_string(),
                ok.to_string(),
            ],
        )?;
    }
    out.flush()?;
    eprintln!("stream-check: max divergence {} against the monolithic pass (tolerance {})", sci(worst), sci(tol));
    Ok(Outcome::from_pass(pass))
}
