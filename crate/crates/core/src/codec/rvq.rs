//! Residual vector quantization.
//!
//! Stage 0 quantizes the latent token, every later stage quantizes what the
//! previous stages left over. Reconstruction is the running sum of the chosen
//! codewords, so any prefix of stages is a valid (coarser) description.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::transform::Latent;
use crate::error::{Error, Result};

/// Relative objective improvement below which Lloyd iterations stop.
const LLOYD_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    words: Vec<f64>,
}

impl Codebook {
    pub fn from_vec(dim: usize, words: Vec<f64>) -> Result<Self> {
        if dim == 0 || words.is_empty() || !words.len().is_multiple_of(dim) {
            return Err(Error::input(
                "codebook must hold at least one codeword of the stated dim",
            ));
        }
        Ok(Self { dim, words })
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn word(&self, k: usize) -> &[f64] {
        &self.words[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.words
    }

    /// Nearest codeword by squared Euclidean distance; ties go to the lowest
    /// index. Returns `(index, distance)`.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for k in 0..self.len() {
            let w = self.word(k);
            let mut dist = 0.0;
            let mut pruned = false;
            for (a, b) in x.iter().zip(w) {
                let diff = a - b;
                dist += diff * diff;
                if dist >= best_dist {
                    pruned = true;
                    break;
                }
            }
            if !pruned {
                best = k;
                best_dist = dist;
            }
        }
        (best, best_dist)
    }
}

/// `L` residual stages with a fingerprint over every codeword byte.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookStack {
    dim: usize,
    stages: Vec<Codebook>,
    /// Sizes asked for at training time; a stage may hold fewer codewords when
    /// the training data had fewer distinct residuals.
    requested_sizes: Vec<usize>,
    fingerprint: u64,
}

impl CodebookStack {
    pub fn new(stages: Vec<Codebook>, requested_sizes: Vec<usize>) -> Result<Self> {
        let dim = stages
            .first()
            .ok_or_else(|| Error::input("codebook stack has no stages"))?
            .dim();
        if stages.iter().any(|s| s.dim() != dim) {
            return Err(Error::input("codebook stages have different dims"));
        }
        if stages.len() > u8::MAX as usize {
            return Err(Error::input("at most 255 stages are supported"));
        }
        if requested_sizes.len() != stages.len() {
            return Err(Error::input("requested sizes do not match the stage count"));
        }
        let fingerprint = fingerprint(dim, &stages);
        Ok(Self {
            dim,
            stages,
            requested_sizes,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, l: usize) -> &Codebook {
        &self.stages[l]
    }

    pub fn stages(&self) -> &[Codebook] {
        &self.stages
    }

    pub fn stage_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(Codebook::len).collect()
    }

    pub fn requested_sizes(&self) -> &[usize] {
        &self.requested_sizes
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

fn fingerprint(dim: usize, stages: &[Codebook]) -> u64 {
    let mut h = Sha256::new();
    h.update((dim as u32).to_le_bytes());
    h.update((stages.len() as u32).to_le_bytes());
    for s in stages {
        h.update((s.len() as u32).to_le_bytes());
        for w in s.as_slice() {
            h.update(w.to_le_bytes());
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Per-stage codeword indices for a sequence of tokens. Only a prefix of the
/// stack's stages is ever present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStream {
    num_tokens: usize,
    stages: Vec<Vec<u32>>,
}

impl IndexStream {
    pub fn new(num_tokens: usize, stages: Vec<Vec<u32>>) -> Result<Self> {
        if stages.iter().any(|s| s.len() != num_tokens) {
            return Err(Error::input("every stage must hold one index per token"));
        }
        Ok(Self { num_tokens, stages })
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, l: usize) -> &[u32] {
        &self.stages[l]
    }

    pub fn stages(&self) -> &[Vec<u32>] {
        &self.stages
    }

    /// The first `n` stages.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            num_tokens: self.num_tokens,
            stages: self.stages[..n.min(self.stages.len())].to_vec(),
        }
    }
}

/// Output of [`quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub indices: IndexStream,
    /// `z_hat`, the sum of the selected codewords.
    pub reconstruction: Latent,
    /// What is left after the last active stage.
    pub residual: Latent,
}

/// Quantizes every token through the first `active_stages` stages. Zero
/// stages leave `z_hat = 0` and `r = z`.
pub fn quantize(z: &Latent, stack: &CodebookStack, active_stages: usize) -> Result<Quantized> {
    if z.dim() != stack.dim() {
        return Err(Error::input(format!(
            "latent dim {} does not match codebook dim {}",
            z.dim(),
            stack.dim()
        )));
    }
    if active_stages > stack.num_stages() {
        return Err(Error::input(format!(
            "active stages {active_stages} outside 0..={}",
            stack.num_stages()
        )));
    }
    let t = z.num_tokens();
    let d = z.dim();
    let per_token: Vec<(Vec<u32>, Vec<f64>, Vec<f64>)> = (0..t)
        .into_par_iter()
        .map(|i| {
            let mut residual = z.token(i).to_vec();
            let mut recon = vec![0.0; d];
            let mut idx = Vec::with_capacity(active_stages);
            for cb in &stack.stages()[..active_stages] {
                let (k, _) = cb.nearest(&residual);
                for ((r, zh), e) in residual.iter_mut().zip(recon.iter_mut()).zip(cb.word(k)) {
                    *r -= e;
                    *zh += e;
                }
                idx.push(k as u32);
            }
            (idx, recon, residual)
        })
        .collect();

    let mut stages = vec![Vec::with_capacity(t); active_stages];
    let mut reconstruction = Latent::zeros(t, d);
    let mut residual = Latent::zeros(t, d);
    for (i, (idx, rec, res)) in per_token.into_iter().enumerate() {
        for (l, k) in idx.into_iter().enumerate() {
            stages[l].push(k);
        }
        reconstruction.token_mut(i).copy_from_slice(&rec);
        residual.token_mut(i).copy_from_slice(&res);
    }
    Ok(Quantized {
        indices: IndexStream::new(t, stages)?,
        reconstruction,
        residual,
    })
}

/// Sums the indexed codewords of every active stage. Bit-identical to the
/// reconstruction returned by [`quantize`].
pub fn dequantize(indices: &IndexStream, stack: &CodebookStack) -> Result<Latent> {
    if indices.num_stages() > stack.num_stages() {
        return Err(Error::corrupt(format!(
            "stream has {} stages, codebooks have {}",
            indices.num_stages(),
            stack.num_stages()
        )));
    }
    let mut z = Latent::zeros(indices.num_tokens(), stack.dim());
    for i in 0..indices.num_tokens() {
        let out = z.token_mut(i);
        for (l, stage) in indices.stages().iter().enumerate() {
            let cb = stack.stage(l);
            let k = stage[i] as usize;
            if k >= cb.len() {
                return Err(Error::corrupt(format!(
                    "index {k} out of range for stage {l} with {} codewords",
                    cb.len()
                )));
            }
            for (o, e) in out.iter_mut().zip(cb.word(k)) {
                *o += e;
            }
        }
    }
    Ok(z)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &[f64], dim: usize) -> usize {
    points
        .chunks_exact(dim)
        .map(|p| p.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// k-means++ seeding: first center uniform, the rest by squared-distance
/// sampling.
fn seed_centers(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centers = point(first).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    while centers.len() < k * dim {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &w) in d2.iter().enumerate() {
            acc += w;
            if w > 0.0 && acc >= target {
                chosen = Some(i);
                break;
            }
        }
        // Rounding can leave `acc` just short of `target`; take the last
        // candidate with positive weight.
        let chosen = chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap());
        let c = point(chosen).to_vec();
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(point(i), &c));
        }
        centers.extend(c);
    }
    centers
}

/// Result of one k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Mean squared quantization error of the training points under the final
    /// codebook.
    pub objective: f64,
    pub iterations: usize,
}

/// LBG / Lloyd k-means with k-means++ seeding.
///
/// Every iteration assigns points to their nearest center, re-seeds empty
/// clusters with the farthest points, and moves centers to their cluster means.
/// The loop always ends on a mean update, so the final mean error is at most
/// the mean squared norm of the points. Exact duplicate centers are dropped.
pub fn kmeans(points: &[f64], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeansFit> {
    if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
        return Err(Error::input("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(Error::config("codebook_sizes", "codebook sizes must be at least 1"));
    }
    if max_iters == 0 {
        return Err(Error::config("lbg_iters", "must be at least 1"));
    }
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let k = k.min(distinct_count(points, dim));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, dim, k, &mut rng);
    let k = centers.len() / dim;

    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let cb = Codebook::from_vec(dim, centers.clone())?;
        let assign: Vec<(usize, f64)> = (0..n).into_par_iter().map(|i| cb.nearest(point(i))).collect();
        let objective: f64 = assign.iter().map(|a| a.1).sum::<f64>() / n as f64;

        let mut labels: Vec<usize> = assign.iter().map(|a| a.0).collect();
        let mut dists: Vec<f64> = assign.iter().map(|a| a.1).collect();
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for empty in 0..k {
            if counts[empty] != 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = donor {
                counts[labels[i]] -= 1;
                labels[i] = empty;
                counts[empty] = 1;
                dists[i] = 0.0;
            }
        }

        let mut sums = vec![0.0; k * dim];
        for (i, &l) in labels.iter().enumerate() {
            for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(point(i)) {
                *s += x;
            }
        }
        for l in 0..k {
            if counts[l] > 0 {
                let c = counts[l] as f64;
                for (dst, s) in centers[l * dim..(l + 1) * dim]
                    .iter_mut()
                    .zip(&sums[l * dim..(l + 1) * dim])
                {
                    *dst = s / c;
                }
            }
        }

        let converged = prev.is_finite() && prev - objective <= LLOYD_REL_TOL * prev;
        prev = objective;
        if converged || iterations >= max_iters {
            break;
        }
    }

    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(centers.len());
    for c in centers.chunks_exact(dim) {
        let key: Vec<u64> = c.iter().map(|x| (x + 0.0).to_bits()).collect();
        if seen.insert(key) {
            words.extend_from_slice(c);
        }
    }
    let codebook = Codebook::from_vec(dim, words)?;
    let objective = (0..n).map(|i| codebook.nearest(point(i)).1).sum::<f64>() / n as f64;
    Ok(KMeansFit {
        codebook,
        objective,
        iterations,
    })
}

fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains one codebook per requested size, each on the residuals of the
/// stages before it.
pub fn train_codebooks(latents: &[Latent], sizes: &[usize], lbg_iters: usize, seed: u64) -> Result<CodebookStack> {
    if sizes.is_empty() {
        return Err(Error::config("codebook_sizes", "at least one stage is required"));
    }
    if let Some(bad) = sizes.iter().position(|&k| k == 0) {
        return Err(Error::config("codebook_sizes", format!("stage {bad} has size 0")));
    }
    let dim = latents
        .first()
        .map(Latent::dim)
        .ok_or_else(|| Error::config("training", "no training latents"))?;
    if latents.iter().any(|z| z.dim() != dim) {
        return Err(Error::input("training latents have different dims"));
    }
    let mut residual: Vec<f64> = latents.iter().flat_map(|z| z.as_slice().iter().copied()).collect();
    if residual.is_empty() {
        return Err(Error::config("training", "no training tokens"));
    }
    let mut stages = Vec::with_capacity(sizes.len());
    for (l, &k) in sizes.iter().enumerate() {
        let fit = kmeans(&residual, dim, k, lbg_iters, stage_seed(seed, l))?;
        if fit.codebook.len() < k {
            log::warn!(
                "stage {l}: only {} distinct codewords available, requested {k}",
                fit.codebook.len()
            );
        }
        residual.par_chunks_mut(dim).for_each(|r| {
            let (idx, _) = fit.codebook.nearest(r);
            for (x, e) in r.iter_mut().zip(fit.codebook.word(idx)) {
                *x -= e;
            }
        });
        stages.push(fit.codebook);
    }
    CodebookStack::new(stages, sizes.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn random_latent(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Latent {
        Latent::from_vec(t, d, (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn brute_nearest(cb: &Codebook, x: &[f64]) -> usize {
        let dists: Vec<f64> = (0..cb.len())
            .map(|k| x.iter().zip(cb.word(k)).map(|(a, b)| (a - b).powi(2)).sum())
            .collect();
        let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        dists.iter().position(|&d| d == min).unwrap()
    }

    #[test]
    fn single_codeword_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_latent(&mut rng, 50, 3);
        let stack = train_codebooks(std::slice::from_ref(&z), &[1], 10, 0).unwrap();
        let mut mean = [0.0; 3];
        for t in z.tokens() {
            for (m, x) in mean.iter_mut().zip(t) {
                *m += x / 50.0;
            }
        }
        for (a, b) in stack.stage(0).word(0).iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_clustering_of_repeated_points() {
        let pts = [[1.0, 0.0], [0.0, 5.0], [-3.0, 2.0], [4.0, 4.0]];
        let data: Vec<f64> = (0..40).flat_map(|i| pts[i % 4]).collect();
        let z = Latent::from_vec(40, 2, data).unwrap();
        let stack = train_codebooks(std::slice::from_ref(&z), &[4], 20, 3).unwrap();
        let q = quantize(&z, &stack, 1).unwrap();
        assert!(q.residual.as_slice().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn codebook_shrinks_to_distinct_count() {
        let data: Vec<f64> = (0..30).flat_map(|i| [(i % 3) as f64, 0.0]).collect();
        let z = Latent::from_vec(30, 2, data).unwrap();
        let stack = train_codebooks(std::slice::from_ref(&z), &[8, 4], 10, 1).unwrap();
        assert_eq!(stack.stage(0).len(), 3);
        assert_eq!(stack.requested_sizes(), &[8, 4]);
        // Residuals after stage 0 are all zero.
        assert_eq!(stack.stage(1).len(), 1);
    }

    #[test]
    fn no_duplicate_codewords() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_latent(&mut rng, 200, 4);
        let stack = train_codebooks(std::slice::from_ref(&z), &[16, 16, 8], 15, 9).unwrap();
        for cb in stack.stages() {
            let keys: HashSet<Vec<u64>> = (0..cb.len())
                .map(|k| cb.word(k).iter().map(|x| x.to_bits()).collect())
                .collect();
            assert_eq!(keys.len(), cb.len());
        }
    }

    #[test]
    fn kmeans_beats_random_codebooks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_latent(&mut rng, 400, 3);
        let fit = kmeans(z.as_slice(), 3, 8, 50, 11).unwrap();
        for _ in 0..20 {
            let words: Vec<f64> = (0..8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cb = Codebook::from_vec(3, words).unwrap();
            let obj: f64 = z.tokens().map(|t| cb.nearest(t).1).sum::<f64>() / 400.0;
            assert!(fit.objective <= obj);
        }
    }

    #[test]
    fn exact_hit_and_tie_break() {
        let words = vec![0.0, 0.0, 1.0, 1.0, -1.0, 0.0, 2.0, 2.0, 0.0, 1.0, 1.0, 0.0];
        let cb = Codebook::from_vec(2, words).unwrap();
        let stack = CodebookStack::new(vec![cb.clone()], vec![6]).unwrap();
        let z = Latent::from_vec(1, 2, vec![2.0, 2.0]).unwrap();
        let q = quantize(&z, &stack, 1).unwrap();
        assert_eq!(q.indices.stage(0), &[3]);
        assert!(q.residual.as_slice().iter().all(|&r| r == 0.0));
        // (0.5, 0.5) is equidistant from codewords 0, 1, 4 and 5.
        assert_eq!(cb.nearest(&[0.5, 0.5]).0, 0);
        // (0.5, 1.0) is equidistant from codewords 1 and 4.
        assert_eq!(cb.nearest(&[0.5, 1.0]).0, 1);
    }

    #[test]
    fn tie_prefers_lowest_index_among_later_codewords() {
        // Codewords 2 and 5 equidistant, every other codeword farther.
        let mut words = vec![10.0, 10.0, -10.0, 10.0, 1.0, 0.0, 9.0, -9.0, -9.0, -9.0, -1.0, 0.0];
        let cb = Codebook::from_vec(2, words.clone()).unwrap();
        assert_eq!(cb.nearest(&[0.0, 0.0]).0, 2);
        words.swap(4, 10);
        let cb = Codebook::from_vec(2, words).unwrap();
        assert_eq!(cb.nearest(&[0.0, 0.0]).0, 2);
    }

    #[test]
    fn dequantize_edge_cases() {
        let cb = Codebook::from_vec(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let stack = CodebookStack::new(vec![cb], vec![2]).unwrap();
        let empty = IndexStream::new(3, vec![]).unwrap();
        assert!(dequantize(&empty, &stack).unwrap().as_slice().iter().all(|&x| x == 0.0));
        let one = IndexStream::new(1, vec![vec![1]]).unwrap();
        assert_eq!(dequantize(&one, &stack).unwrap().as_slice(), &[3.0, 4.0]);
        let bad = IndexStream::new(1, vec![vec![2]]).unwrap();
        assert!(matches!(dequantize(&bad, &stack), Err(Error::Corrupt(_))));
    }

    #[test]
    fn quantize_input_errors() {
        let cb = Codebook::from_vec(2, vec![1.0, 2.0]).unwrap();
        let stack = CodebookStack::new(vec![cb], vec![1]).unwrap();
        let z = Latent::zeros(2, 3);
        assert!(matches!(quantize(&z, &stack, 1), Err(Error::Input(_))));
        let z = Latent::from_vec(1, 2, vec![0.5, -1.0]).unwrap();
        let q = quantize(&z, &stack, 0).unwrap();
        assert_eq!(q.indices.num_stages(), 0);
        assert_eq!(q.residual, z);
        assert_eq!(q.reconstruction, Latent::zeros(1, 2));
        assert!(matches!(quantize(&z, &stack, 2), Err(Error::Input(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_latent(&mut rng, 300, 4);
        let a = train_codebooks(std::slice::from_ref(&z), &[8, 8], 10, 42).unwrap();
        let b = train_codebooks(std::slice::from_ref(&z), &[8, 8], 10, 42).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = train_codebooks(std::slice::from_ref(&z), &[8, 8], 10, 43).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn indices_match_exhaustive_search(seed in any::<u64>(), t in 1usize..=32, k0 in 1usize..=16, k1 in 1usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3;
            let z = random_latent(&mut rng, t, d);
            let stages = [k0, k1]
                .iter()
                .map(|&k| Codebook::from_vec(d, (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
                .collect();
            let stack = CodebookStack::new(stages, vec![k0, k1]).unwrap();
            let q = quantize(&z, &stack, 2).unwrap();
            for i in 0..t {
                let mut r = z.token(i).to_vec();
                for l in 0..2 {
                    let k = brute_nearest(stack.stage(l), &r);
                    prop_assert_eq!(q.indices.stage(l)[i] as usize, k);
                    for (x, e) in r.iter_mut().zip(stack.stage(l).word(k)) {
                        *x -= e;
                    }
                }
            }
            prop_assert_eq!(dequantize(&q.indices, &stack).unwrap(), q.reconstruction.clone());
            for i in 0..t {
                for c in 0..d {
                    let dev = z.token(i)[c] - (q.reconstruction.token(i)[c] + q.residual.token(i)[c]);
                    prop_assert!(dev.abs() <= 1e-10);
                }
            }
        }
    }
}
