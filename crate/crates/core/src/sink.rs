//! Prompt-initialized grouped scan and exact chunked continuation.
//!
//! A fresh sequence is prefixed with Q learnable prompt tokens at global
//! positions `-Q..-1` and scanned from all-zero group states. Because each
//! group updates exactly once over the prompt window, the decays at prompt
//! positions never matter. Prompt outputs are computed and discarded.
//!
//! Continuing a sequence needs two things from the previous chunk: the Q
//! group states and the last `n-1` products `B_τ x_τᵀ` that the FIR taps of
//! the new chunk reach back to. [`ChunkCache`] holds both together with the
//! global step index, so the schedule `t mod Q` is unaffected by where the
//! sequence is cut.
//!
//! Cache file layout (all little-endian):
//!
//! ```text
//!   u64 Q, u64 N, u64 P, u64 n, u64 t_offset
//!   f64 × Q·N·P        h_cached[0..Q], each N×P row-major
//!   f64 × (n-1)·N·P    tap_cache[0..n-1], each N×P row-major,
//!                      tap_cache[m-1] = B x ᵀ at step t_offset - m
//! ```

use std::io::{Read, Write};

use crate::error::{check_len, Error, Result};
use crate::gfssm::{group_path, grouped_scan_from, FirCoefficients, GfssmInstance, GroupConfig, GroupedHiddenState};
use crate::matrix::Mat;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::ssd::{apply_masked, SsdInstance, DEFAULT_MATERIALIZE_CAP};

const HEADER_WORDS: usize = 5;

/// Q learnable prompt tokens and the B vectors used at their positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptBank<S> {
    pub prompts: Vec<Vec<S>>,
    pub prompt_b: Vec<Vec<S>>,
}

impl<S: Scalar> PromptBank<S> {
    pub fn zeros(groups: usize, state_dim: usize, channels: usize) -> Self {
        Self {
            prompts: vec![vec![S::zero(); channels]; groups],
            prompt_b: vec![vec![S::zero(); state_dim]; groups],
        }
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random(rng: &mut SeededRng, groups: usize, state_dim: usize, channels: usize, scale: f64) -> Self {
        let mut rows = |count: usize, width: usize| -> Vec<Vec<S>> {
            (0..count)
                .map(|_| (0..width).map(|_| S::of(rng.range(-scale, scale))).collect())
                .collect()
        };
        let prompts = rows(groups, channels);
        let prompt_b = rows(groups, state_dim);
        Self { prompts, prompt_b }
    }

    pub fn groups(&self) -> usize {
        self.prompts.len()
    }

    pub fn cast<U: Scalar>(&self) -> PromptBank<U> {
        let rows = |m: &[Vec<S>]| m.iter().map(|r| crate::scalar::cast_vec(r)).collect();
        PromptBank {
            prompts: rows(&self.prompts),
            prompt_b: rows(&self.prompt_b),
        }
    }

    pub(crate) fn check_against(&self, cfg: GroupConfig, state_dim: usize, channels: usize) -> Result<()> {
        if self.prompts.len() != cfg.groups || self.prompt_b.len() != cfg.groups {
            return Err(Error::Schedule(format!(
                "prompt bank holds {} prompts / {} B vectors but Q = {}",
                self.prompts.len(),
                self.prompt_b.len(),
                cfg.groups
            )));
        }
        for (x, b) in self.prompts.iter().zip(&self.prompt_b) {
            check_len("prompts", channels, x.len())?;
            check_len("prompt_b", state_dim, b.len())?;
        }
        Ok(())
    }
}

/// Everything needed to continue a sequence exactly after a cut.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkCache<S> {
    pub h_cached: GroupedHiddenState<S>,
    pub tap_cache: Vec<Mat<S>>,
    pub t_offset: usize,
}

impl<S: Scalar> ChunkCache<S> {
    /// Zero states and taps at global step 0.
    pub fn zeros(cfg: GroupConfig, state_dim: usize, channels: usize) -> Self {
        Self {
            h_cached: GroupedHiddenState::zeros(cfg.groups, state_dim, channels),
            tap_cache: vec![Mat::zeros(state_dim, channels); cfg.order - 1],
            t_offset: 0,
        }
    }

    pub fn groups(&self) -> usize {
        self.h_cached.groups()
    }

    /// FIR order this cache was produced for.
    pub fn order(&self) -> usize {
        self.tap_cache.len() + 1
    }

    pub fn state_shape(&self) -> (usize, usize) {
        self.h_cached.h[0].shape()
    }

    pub fn cast<U: Scalar>(&self) -> ChunkCache<U> {
        ChunkCache {
            h_cached: self.h_cached.cast(),
            tap_cache: self.tap_cache.iter().map(Mat::cast).collect(),
            t_offset: self.t_offset,
        }
    }

    fn check_against(&self, chunk: &GfssmInstance<S>) -> Result<()> {
        if self.groups() != chunk.cfg.groups {
            return Err(Error::Schedule(format!(
                "cache has {} groups, chunk expects Q = {}",
                self.groups(),
                chunk.cfg.groups
            )));
        }
        if self.order() != chunk.cfg.order {
            return Err(Error::Schedule(format!(
                "cache carries {} taps, chunk FIR order {} needs {}",
                self.tap_cache.len(),
                chunk.cfg.order,
                chunk.cfg.order - 1
            )));
        }
        let shape = (chunk.base.state_dim(), chunk.base.channels());
        let mats = self.h_cached.h.iter().chain(&self.tap_cache);
        if mats.clone().any(|m| m.shape() != shape) {
            return Err(Error::Schedule(format!(
                "cached state shape does not match chunk N×P = {}×{}",
                shape.0, shape.1
            )));
        }
        if mats.clone().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                field: "cache",
                index: 0,
            });
        }
        if chunk.prompt_taps.iter().any(|tap| !tap.is_zero()) {
            return Err(Error::Invalid(
                "chunk carries its own prompt taps; the cache supplies them".into(),
            ));
        }
        Ok(())
    }

    /// Serialize to the little-endian layout described in the module docs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, p) = self.state_shape();
        let header = [self.groups(), n, p, self.order(), self.t_offset];
        let mut out = Vec::with_capacity(8 * (HEADER_WORDS + (self.groups() + self.tap_cache.len()) * n * p));
        for word in header {
            out.extend_from_slice(&(word as u64).to_le_bytes());
        }
        for m in self.h_cached.h.iter().chain(&self.tap_cache) {
            for v in m.as_slice() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<u64> {
            bytes
                .get(8 * i..8 * i + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::CacheFormat(format!("truncated header ({} bytes)", bytes.len())))
        };
        let to_usize =
            |v: u64| usize::try_from(v).map_err(|_| Error::CacheFormat(format!("header value {v} out of range")));
        let groups = to_usize(word(0)?)?;
        let n = to_usize(word(1)?)?;
        let p = to_usize(word(2)?)?;
        let order = to_usize(word(3)?)?;
        let t_offset = to_usize(word(4)?)?;
        if groups == 0 || n == 0 || p == 0 || order == 0 {
            return Err(Error::CacheFormat(format!(
                "zero dimension in header (Q={groups}, N={n}, P={p}, n={order})"
            )));
        }
        let payload_words = (groups + order - 1)
            .checked_mul(n)
            .and_then(|v| v.checked_mul(p))
            .ok_or_else(|| Error::CacheFormat("payload size overflows".into()))?;
        let expected = (HEADER_WORDS + payload_words)
            .checked_mul(8)
            .ok_or_else(|| Error::CacheFormat("payload size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::CacheFormat(format!(
                "expected {expected} bytes for Q={groups}, N={n}, P={p}, n={order}; found {}",
                bytes.len()
            )));
        }
        let mut values = bytes[8 * HEADER_WORDS..]
            .chunks_exact(8)
            .map(|b| S::of(f64::from_le_bytes(b.try_into().unwrap())));
        let mut next_mat = || Mat::from_fn(n, p, |_, _| values.next().unwrap());
        let h = (0..groups).map(|_| next_mat()).collect();
        let tap_cache = (0..order - 1).map(|_| next_mat()).collect();
        Ok(Self {
            h_cached: GroupedHiddenState { h },
            tap_cache,
            t_offset,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// `P[t][i]`: factor applied to cached group `i` at chunk step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationMatrix<S> {
    pub p: Mat<S>,
}

/// `P[t][i] = Π { a_τ : τ ≤ t, (τ + t_offset) ≡ i (mod Q) }`.
pub fn build_p<S: Scalar>(a: &[S], groups: usize, t_offset: usize) -> Result<PropagationMatrix<S>> {
    if a.is_empty() {
        return Err(Error::Invalid("decay sequence is empty".into()));
    }
    if groups == 0 {
        return Err(Error::Invalid("group count must be positive".into()));
    }
    crate::ssd::check_finite("a", a)?;
    let mut running = vec![S::one(); groups];
    let mut p = Mat::zeros(a.len(), groups);
    for (t, &at) in a.iter().enumerate() {
        running[(t + t_offset) % groups] *= at;
        for (i, &r) in running.iter().enumerate() {
            p[(t, i)] = r;
        }
    }
    Ok(PropagationMatrix { p })
}

/// Trailing `n-1` products after appending `products` to a history whose
/// most recent entries are `previous` (most recent first).
fn trailing_taps<S: Scalar>(products: &[Mat<S>], previous: &[Mat<S>], count: usize) -> Vec<Mat<S>> {
    let len = products.len();
    (1..=count)
        .map(|m| {
            if m <= len {
                products[len - m].clone()
            } else {
                previous[m - len - 1].clone()
            }
        })
        .collect()
}

/// `[prompts; inst]` as one instance. Prompt positions use `a = 1` (never
/// observed) and `C = prompt_b` (outputs discarded).
pub(crate) fn prompt_extended<S: Scalar>(bank: &PromptBank<S>, inst: &GfssmInstance<S>) -> Result<GfssmInstance<S>> {
    inst.validate()?;
    bank.check_against(inst.cfg, inst.base.state_dim(), inst.base.channels())?;
    if inst.prompt_taps.iter().any(|tap| !tap.is_zero()) {
        return Err(Error::Invalid(
            "a fresh sequence starts from the prompt bank; prompt taps must be zero".into(),
        ));
    }
    let q = inst.cfg.groups;
    let cat = |head: &[Vec<S>], tail: &[Vec<S>]| -> Vec<Vec<S>> { head.iter().chain(tail).cloned().collect() };
    let mut a = vec![S::one(); q];
    a.extend_from_slice(&inst.base.a);
    let base = SsdInstance::new(
        a,
        cat(&bank.prompt_b, &inst.base.b),
        cat(&bank.prompt_b, &inst.base.c),
        cat(&bank.prompts, &inst.base.x),
    )?;
    GfssmInstance::new(base, inst.cfg, inst.fir.clone())
}

/// Scan `[prompts; x]` from zero states; returns outputs for the real
/// positions and the cache at the end of the sequence.
pub fn init_fresh<S: Scalar>(bank: &PromptBank<S>, inst: &GfssmInstance<S>) -> Result<(Vec<Vec<S>>, ChunkCache<S>)> {
    let ext = prompt_extended(bank, inst)?;
    let q = inst.cfg.groups;
    let (n, p) = (inst.base.state_dim(), inst.base.channels());
    // Global position -Q is a multiple of Q, so offset 0 keeps the schedule.
    let (mut y, h_final) = grouped_scan_from(&ext, &GroupedHiddenState::zeros(q, n, p), 0)?;
    let products = ext.base.input_products();
    let cache = ChunkCache {
        h_cached: h_final,
        tap_cache: trailing_taps(&products, &vec![Mat::zeros(n, p); inst.cfg.order], inst.cfg.order - 1),
        t_offset: inst.len(),
    };
    y.drain(..q);
    Ok((y, cache))
}

/// Cache after the prompt window alone, positioned at global step 0.
pub fn prime<S: Scalar>(
    bank: &PromptBank<S>,
    cfg: GroupConfig,
    fir: &FirCoefficients<S>,
    state_dim: usize,
    channels: usize,
) -> Result<ChunkCache<S>> {
    cfg.validate()?;
    bank.check_against(cfg, state_dim, channels)?;
    let base = SsdInstance::new(
        vec![S::one(); cfg.groups],
        bank.prompt_b.clone(),
        bank.prompt_b.clone(),
        bank.prompts.clone(),
    )?;
    let prompts = GfssmInstance::new(base, cfg, fir.clone())?;
    let (_, h_final) = grouped_scan_from(&prompts, &GroupedHiddenState::zeros(cfg.groups, state_dim, channels), 0)?;
    Ok(ChunkCache {
        h_cached: h_final,
        tap_cache: trailing_taps(
            &prompts.base.input_products(),
            &vec![Mat::zeros(state_dim, channels); cfg.order],
            cfg.order - 1,
        ),
        t_offset: 0,
    })
}

/// Continue from `cache` over `chunk` by seeding the grouped scan with the
/// cached states and taps.
pub fn continue_chunk<S: Scalar>(
    cache: &ChunkCache<S>,
    chunk: &GfssmInstance<S>,
) -> Result<(Vec<Vec<S>>, ChunkCache<S>)> {
    chunk.validate()?;
    cache.check_against(chunk)?;
    let seeded = chunk.clone().with_prompt_taps(cache.tap_cache.clone())?;
    let (y, h_final) = grouped_scan_from(&seeded, &cache.h_cached, cache.t_offset)?;
    let next = ChunkCache {
        h_cached: h_final,
        tap_cache: trailing_taps(&chunk.base.input_products(), &cache.tap_cache, cache.tap_cache.len()),
        t_offset: cache.t_offset + chunk.len(),
    };
    Ok((y, next))
}

/// Materialized continuation:
/// `y_t = C_tᵀ (Σ_i P[t][i] h^i + Σ_m W[t][m] tap_m) + ((L ∘ C Bᵀ) x)_t`,
/// where `W[t][m]` collects every FIR tap that reads cached product `-m`.
pub fn continue_chunk_matrix<S: Scalar>(cache: &ChunkCache<S>, chunk: &GfssmInstance<S>) -> Result<Vec<Vec<S>>> {
    chunk.validate()?;
    cache.check_against(chunk)?;
    let t_len = chunk.len();
    if t_len > DEFAULT_MATERIALIZE_CAP {
        return Err(Error::SizeLimit {
            len: t_len,
            cap: DEFAULT_MATERIALIZE_CAP,
        });
    }
    let (q, order) = (chunk.cfg.groups, chunk.cfg.order);
    let a = &chunk.base.a;
    let prop = build_p(a, q, cache.t_offset)?;
    let l = crate::gfssm::build_l_gfssm(a, chunk.cfg, &chunk.fir)?;
    let mut y = apply_masked(&l, &chunk.base);

    let (n, p) = cache.state_shape();
    for (t, yt) in y.iter_mut().enumerate() {
        let mut carried = Mat::zeros(n, p);
        for (i, h) in cache.h_cached.h.iter().enumerate() {
            carried.add_scaled(prop.p[(t, i)], h);
        }
        for m in 1..order {
            let mut w = S::zero();
            for j in m..order {
                let entry = j - m;
                if entry <= t {
                    w += chunk.fir.k[j] * group_path(a, q, entry, t);
                }
            }
            carried.add_scaled(w, &cache.tap_cache[m - 1]);
        }
        for (yi, ci) in yt.iter_mut().zip(carried.left_contract(&chunk.base.c[t])) {
            *yi += ci;
        }
    }
    Ok(y)
}

/// Process `full` prompt-first in chunks of `chunk_size`.
pub fn stream<S: Scalar>(
    full: &GfssmInstance<S>,
    bank: &PromptBank<S>,
    chunk_size: usize,
) -> Result<(Vec<Vec<S>>, ChunkCache<S>)> {
    if chunk_size == 0 {
        return Err(Error::Invalid("chunk size must be at least 1".into()));
    }
    full.validate()?;
    let t_len = full.len();
    let chunk_at = |start: usize| -> Result<GfssmInstance<S>> {
        let end = (start + chunk_size).min(t_len);
        GfssmInstance::new(full.base.slice(start..end), full.cfg, full.fir.clone())
    };
    let (mut y, mut cache) = init_fresh(bank, &chunk_at(0)?)?;
    let mut start = chunk_size;
    while start < t_len {
        let (y_chunk, next) = continue_chunk(&cache, &chunk_at(start)?)?;
        y.extend(y_chunk);
        cache = next;
        start += chunk_size;
    }
    Ok((y, cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfssm::grouped_scan;

    fn setup(seed: u64, len: usize, q: usize, order: usize) -> (GfssmInstance<f64>, PromptBank<f64>) {
        let mut rng = SeededRng::new(seed);
        let inst = GfssmInstance::random(&mut rng, len, 3, 2, GroupConfig::new(q, order).unwrap(), (0.0, 1.0));
        let bank = PromptBank::random(&mut rng, q, 3, 2, 1.0);
        (inst, bank)
    }

    fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn p_matrix_rows_from_the_written_pattern() {
        let a: Vec<f64> = (0..13).map(|t| t as f64 + 2.0).collect();
        let p = build_p(&a, 4, 0).unwrap().p;
        assert_eq!(p.row(0), &[a[0], 1.0, 1.0, 1.0]);
        assert_eq!(p.row(4), &[a[4] * a[0], a[1], a[2], a[3]]);
        assert_eq!(
            p.row(12),
            &[a[12] * a[8] * a[4] * a[0], a[9] * a[5] * a[1], a[10] * a[6] * a[2], a[11] * a[7] * a[3]]
        );
        assert!(build_p(&[1.0; 9], 3, 2).unwrap().p.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn p_matrix_offset_shifts_columns() {
        let a = [2.0, 3.0, 5.0];
        let p = build_p(&a, 4, 2).unwrap().p;
        assert_eq!(p.row(2), &[5.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_bank_matches_bare_kernel() {
        let (inst, _) = setup(1, 10, 4, 4);
        let (y, cache) = init_fresh(&PromptBank::zeros(4, 3, 2), &inst).unwrap();
        let (y_ref, h_ref) = grouped_scan(&inst, &GroupedHiddenState::zeros(4, 3, 2)).unwrap();
        assert_eq!(y, y_ref);
        assert_eq!(cache.h_cached, h_ref);
        assert_eq!(cache.t_offset, 10);
    }

    #[test]
    fn prime_then_continue_equals_fresh() {
        let (inst, bank) = setup(2, 11, 4, 3);
        let cache = prime(&bank, inst.cfg, &inst.fir, 3, 2).unwrap();
        let (y, end) = continue_chunk(&cache, &inst).unwrap();
        let (y_ref, end_ref) = init_fresh(&bank, &inst).unwrap();
        assert_eq!(y, y_ref);
        assert_eq!(end, end_ref);
    }

    #[test]
    fn zero_cache_continue_equals_zero_prompt_fresh() {
        let (inst, _) = setup(3, 9, 2, 4);
        let (y, _) = continue_chunk(&ChunkCache::zeros(inst.cfg, 3, 2), &inst).unwrap();
        let (y_ref, _) = init_fresh(&PromptBank::zeros(2, 3, 2), &inst).unwrap();
        assert_eq!(y, y_ref);
    }

    #[test]
    fn matrix_path_agrees_with_seeded_scan() {
        for (seed, q, order) in [(4, 4, 4), (5, 3, 2), (6, 1, 3), (7, 2, 5)] {
            let (inst, bank) = setup(seed, 20, q, order);
            let first = GfssmInstance::new(inst.base.slice(0..7), inst.cfg, inst.fir.clone()).unwrap();
            let rest = GfssmInstance::new(inst.base.slice(7..20), inst.cfg, inst.fir.clone()).unwrap();
            let (_, cache) = init_fresh(&bank, &first).unwrap();
            let (y_scan, _) = continue_chunk(&cache, &rest).unwrap();
            let y_mat = continue_chunk_matrix(&cache, &rest).unwrap();
            assert!(max_diff(&y_scan, &y_mat) < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn streaming_matches_monolithic() {
        let (inst, bank) = setup(8, 30, 4, 4);
        let (mono, mono_cache) = init_fresh(&bank, &inst).unwrap();
        for chunk in [1, 2, 3, 4, 9, 29, 30, 31] {
            let (y, cache) = stream(&inst, &bank, chunk).unwrap();
            assert!(max_diff(&y, &mono) < 1e-12, "chunk {chunk}");
            assert_eq!(cache.t_offset, mono_cache.t_offset);
        }
    }

    #[test]
    fn short_chunks_keep_older_taps() {
        let (inst, bank) = setup(9, 12, 2, 5);
        let (mono, _) = init_fresh(&bank, &inst).unwrap();
        let (y, _) = stream(&inst, &bank, 1).unwrap();
        assert!(max_diff(&y, &mono) < 1e-12);
    }

    #[test]
    fn cache_bytes_round_trip_exactly() {
        let (inst, bank) = setup(10, 7, 4, 4);
        let (_, cache) = init_fresh(&bank, &inst).unwrap();
        let bytes = cache.to_bytes();
        assert_eq!(bytes.len(), 8 * (5 + 7 * 3 * 2));
        assert_eq!(&bytes[..8], &4u64.to_le_bytes());
        assert_eq!(&bytes[32..40], &7u64.to_le_bytes());
        assert_eq!(ChunkCache::<f64>::from_bytes(&bytes).unwrap(), cache);

        assert!(matches!(
            ChunkCache::<f64>::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::CacheFormat(_))
        ));
        assert!(matches!(ChunkCache::<f64>::from_bytes(&bytes[..10]), Err(Error::CacheFormat(_))));
    }

    #[test]
    fn mismatched_cache_rejected() {
        let (inst, bank) = setup(11, 6, 4, 4);
        let (_, cache) = init_fresh(&bank, &inst).unwrap();
        let (other, _) = setup(12, 6, 2, 4);
        assert!(matches!(continue_chunk(&cache, &other), Err(Error::Schedule(_))));
        let (other, _) = setup(13, 6, 4, 2);
        assert!(matches!(continue_chunk(&cache, &other), Err(Error::Schedule(_))));
        assert!(matches!(
            init_fresh(&PromptBank::zeros(3, 3, 2), &inst),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(stream(&inst, &bank, 0), Err(Error::Invalid(_))));
    }
}
