use std::hint::black_box;
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use gfssm_core::{gfssm_matrix_form, grouped_scan, GfssmInstance, GroupedHiddenState, Scalar, SeededRng};

use super::{group_config, Outcome};
use crate::args::{BenchArgs, Precision};
use crate::output::{csv_writer, sci, write_row};

pub const HEADER: [&str; 6] = ["T", "path", "reps", "calls", "min_seconds", "median_seconds"];

/// Accepted bands for the fitted exponents under `--check`.
pub const SCAN_BAND: (f64, f64) = (0.8, 1.3);
pub const MATRIX_BAND: (f64, f64) = (1.7, 2.3);

struct Timing {
    calls: u64,
    min: f64,
    median: f64,
}

/// Time `f` in `reps` batches of at least `min_batch` each; per-call seconds.
fn time(reps: u64, min_batch: Duration, mut f: impl FnMut()) -> Timing {
    // Calibrate the batch size once so every batch does the same work.
    let mut calls = 1u64;
    loop {
        let start = Instant::now();
        for _ in 0..calls {
            f();
        }
        if start.elapsed() >= min_batch || calls >= 1 << 30 {
            break;
        }
        calls *= 2;
    }
    let mut per_call: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..calls {
                f();
            }
            start.elapsed().as_secs_f64() / calls as f64
        })
        .collect();
    per_call.sort_by(f64::total_cmp);
    Timing {
        calls,
        min: per_call[0],
        median: per_call[per_call.len() / 2],
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn measure<S: Scalar>(inst: &GfssmInstance<f64>, args: &BenchArgs) -> Result<(Timing, Timing)> {
    let inst = inst.cast::<S>();
    let (n, p, q) = (inst.base.state_dim(), inst.base.channels(), inst.cfg.groups);
    let zeros = GroupedHiddenState::zeros(q, n, p);
    // Surface errors once before timing.
    grouped_scan(&inst, &zeros)?;
    gfssm_matrix_form(&inst)?;
    let min_batch = Duration::from_millis(args.min_ms);
    let scan = time(args.reps, min_batch, || {
        black_box(grouped_scan(black_box(&inst), &zeros).ok());
    });
    let matrix = time(args.reps, min_batch, || {
        black_box(gfssm_matrix_form(black_box(&inst)).ok());
    });
    Ok((scan, matrix))
}

/// Fitted time-vs-length exponents of one bench run.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Exponents {
    pub scan: f64,
    pub matrix: f64,
}

impl Exponents {
    pub fn within_bands(&self) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        within(self.scan, SCAN_BAND) && within(self.matrix, MATRIX_BAND)
    }
}

/// Time both paths at every length, write the timing CSV, and fit exponents.
pub fn run_bench(args: &BenchArgs) -> Result<Exponents> {
    let lens = &args.t.0;
    let mut distinct = lens.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        bail!("bench needs at least two distinct lengths to fit an exponent");
    }
    let cfg = group_config(args.q, args.n)?;
    let mut out = csv_writer(args.out.as_deref())?;
    out.write_record(HEADER)?;
    let (mut scan_times, mut matrix_times) = (Vec::new(), Vec::new());
    for &t in lens {
        let inst = GfssmInstance::<f64>::random(
            &mut SeededRng::new(args.seed),
            t,
            args.state_dim as usize,
            args.channels as usize,
            cfg,
            (0.0, 1.0),
        );
        let (scan, matrix) = match args.precision {
            Precision::Double => measure::<f64>(&inst, args)?,
            Precision::Single => measure::<f32>(&inst, args)?,
        };
        for (path, timing) in [("scan", &scan), ("matrix", &matrix)] {
            write_row(
                &mut out,
                &[
                    t.to_string(),
                    path.into(),
                    args.reps.to_string(),
                    timing.calls.to_string(),
                    sci(timing.min),
                    sci(timing.median),
                ],
            )?;
        }
        scan_times.push(scan.min);
        matrix_times.push(matrix.min);
    }
    out.flush()?;
    let xs: Vec<f64> = lens.iter().map(|&t| t as f64).collect();
    Ok(Exponents {
        scan: fit_exponent(&xs, &scan_times),
        matrix: fit_exponent(&xs, &matrix_times),
    })
}

pub fn bench(args: &BenchArgs) -> Result<Outcome> {
    let exp = run_bench(args)?;
    eprintln!(
        "bench: scan exponent {:.3} (band {:?}), matrix exponent {:.3} (band {:?})",
        exp.scan, SCAN_BAND, exp.matrix, MATRIX_BAND
    );
    Ok(Outcome::from_pass(!args.check || exp.within_bands()))
}
