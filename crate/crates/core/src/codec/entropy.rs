//! Static context models over codeword indices and their arithmetic coding.
//!
//! Each stage has its own model: symbol counts (order 0) or counts conditioned
//! on the previous index of the same stage (order 1), smoothed by adding one to
//! every symbol. An order-1 context never seen in training, and the first
//! token of a stage, use the order-0 table. The coder consumes exactly these
//! integer frequencies, so [`entropy_estimate`] is the ideal length of what
//! [`encode_stage`] writes.

use super::rangecoder::{RangeDecoder, RangeEncoder, MAX_TOTAL};
use super::rvq::IndexStream;
use crate::error::{Error, Result};

/// Symbol counts for one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageModel {
    alphabet: usize,
    order0: Vec<u64>,
    /// `alphabet x alphabet` counts, row = previous symbol. Empty for order 0.
    order1: Vec<u64>,
}

/// Cumulative frequency table over `alphabet` symbols.
#[derive(Debug, Clone, PartialEq)]
struct Cdf {
    cum: Vec<u64>,
}

impl Cdf {
    fn from_counts(counts: &[u64]) -> Self {
        let mut cum = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0;
        cum.push(0);
        for c in counts {
            acc += c + 1;
            cum.push(acc);
        }
        Self { cum }
    }

    fn total(&self) -> u64 {
        *self.cum.last().unwrap()
    }

    fn range(&self, s: usize) -> (u64, u64) {
        (self.cum[s], self.cum[s + 1] - self.cum[s])
    }

    fn lookup(&self, target: u64) -> usize {
        self.cum.partition_point(|&c| c <= target) - 1
    }
}

impl StageModel {
    pub fn new(alphabet: usize, order0: Vec<u64>, order1: Vec<u64>) -> Result<Self> {
        if alphabet == 0 || order0.len() != alphabet {
            return Err(Error::input("order-0 table does not match alphabet"));
        }
        if !order1.is_empty() && order1.len() != alphabet * alphabet {
            return Err(Error::input("order-1 table does not match alphabet"));
        }
        let m = Self {
            alphabet,
            order0,
            order1,
        };
        if m.max_total() > MAX_TOTAL {
            return Err(Error::input("model counts exceed the coder's frequency range"));
        }
        Ok(m)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn order0_counts(&self) -> &[u64] {
        &self.order0
    }

    pub fn order1_counts(&self) -> &[u64] {
        &self.order1
    }

    fn max_total(&self) -> u64 {
        let k = self.alphabet as u64;
        let o0 = self.order0.iter().sum::<u64>() + k;
        let o1 = self
            .order1
            .chunks_exact(self.alphabet.max(1))
            .map(|row| row.iter().sum::<u64>() + k)
            .max()
            .unwrap_or(0);
        o0.max(o1)
    }

    /// Halves counts (rounding up nonzero ones) until every table fits the
    /// coder's frequency range.
    fn rescale(&mut self) {
        while self.max_total() > MAX_TOTAL {
            for c in self.order0.iter_mut().chain(self.order1.iter_mut()) {
                *c = c.div_ceil(2);
            }
        }
    }

    fn tables(&self) -> StageTables {
        let order0 = Cdf::from_counts(&self.order0);
        let contexts = self
            .order1
            .chunks_exact(self.alphabet)
            .map(|row| (row.iter().any(|&c| c > 0)).then(|| Cdf::from_counts(row)))
            .collect();
        StageTables { order0, contexts }
    }

    /// Modeled probability of `symbol` given the previous symbol of the stage.
    pub fn probability(&self, prev: Option<u32>, symbol: u32) -> f64 {
        let row = match prev {
            Some(p) if !self.order1.is_empty() => {
                let row = &self.order1[p as usize * self.alphabet..(p as usize + 1) * self.alphabet];
                row.iter().any(|&c| c > 0).then_some(row)
            }
            _ => None,
        };
        let counts = row.unwrap_or(&self.order0);
        let total: u64 = counts.iter().sum::<u64>() + self.alphabet as u64;
        (counts[symbol as usize] + 1) as f64 / total as f64
    }
}

struct StageTables {
    order0: Cdf,
    contexts: Vec<Option<Cdf>>,
}

impl StageTables {
    fn cdf(&self, prev: Option<u32>) -> &Cdf {
        prev.and_then(|p| self.contexts.get(p as usize).and_then(Option::as_ref))
            .unwrap_or(&self.order0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntropyModel {
    order: u8,
    stages: Vec<StageModel>,
}

impl EntropyModel {
    pub fn new(order: u8, stages: Vec<StageModel>) -> Result<Self> {
        if order > 1 {
            return Err(Error::config("entropy_order", "must be 0 or 1"));
        }
        if stages.iter().any(|s| s.order1.is_empty() == (order == 1)) {
            return Err(Error::input("stage tables do not match the model order"));
        }
        Ok(Self { order, stages })
    }

    /// Equiprobable order-0 model over the given alphabets.
    pub fn uniform(alphabets: &[usize]) -> Result<Self> {
        let stages = alphabets
            .iter()
            .map(|&k| StageModel::new(k, vec![0; k], Vec::new()))
            .collect::<Result<_>>()?;
        Self::new(0, stages)
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, l: usize) -> &StageModel {
        &self.stages[l]
    }

    pub fn alphabets(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.alphabet).collect()
    }

    fn check_stream(&self, stream: &IndexStream) -> Result<()> {
        if stream.num_stages() > self.stages.len() {
            return Err(Error::input(format!(
                "stream has {} stages, model has {}",
                stream.num_stages(),
                self.stages.len()
            )));
        }
        for (l, idx) in stream.stages().iter().enumerate() {
            let k = self.stages[l].alphabet;
            if let Some(bad) = idx.iter().find(|&&s| s as usize >= k) {
                return Err(Error::input(format!(
                    "stage {l}: symbol {bad} outside alphabet of size {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Counts symbols (order 0) or previous/current pairs (order 1) per stage over
/// all streams. `alphabets[l]` is the codebook size of stage `l`.
pub fn fit_entropy_model(streams: &[IndexStream], alphabets: &[usize], order: u8) -> Result<EntropyModel> {
    if order > 1 {
        return Err(Error::config("entropy_order", "must be 0 or 1"));
    }
    if streams.is_empty() {
        return Err(Error::input("no index streams to fit"));
    }
    let mut stages = Vec::with_capacity(alphabets.len());
    for (l, &k) in alphabets.iter().enumerate() {
        if k == 0 {
            return Err(Error::input(format!("stage {l} has an empty alphabet")));
        }
        let mut order0 = vec![0u64; k];
        let mut order1 = if order == 1 { vec![0u64; k * k] } else { Vec::new() };
        for s in streams.iter().filter(|s| s.num_stages() > l) {
            let idx = s.stage(l);
            for (i, &c) in idx.iter().enumerate() {
                let c = c as usize;
                if c >= k {
                    return Err(Error::input(format!(
                        "stage {l}: symbol {c} outside alphabet of size {k}"
                    )));
                }
                if order == 1 && i > 0 {
                    order1[idx[i - 1] as usize * k + c] += 1;
                } else {
                    order0[c] += 1;
                }
            }
        }
        // Order-1 streams only feed the order-0 table with their first
        // symbol; fold the pair counts in so it reflects the marginal too.
        if order == 1 {
            for row in order1.chunks_exact(k) {
                for (o, c) in order0.iter_mut().zip(row) {
                    *o += c;
                }
            }
        }
        let mut m = StageModel {
            alphabet: k,
            order0,
            order1,
        };
        m.rescale();
        stages.push(m);
    }
    EntropyModel::new(order, stages)
}

/// Ideal code length in bits, `-sum log2 p(c_i | ctx_i)`, for every stage
/// present in `stream`.
pub fn entropy_estimate(model: &EntropyModel, stream: &IndexStream) -> Result<Vec<f64>> {
    model.check_stream(stream)?;
    Ok(stream
        .stages()
        .iter()
        .enumerate()
        .map(|(l, idx)| {
            let m = &model.stages[l];
            let prev = |i: usize| {
                if model.order == 1 && i > 0 {
                    Some(idx[i - 1])
                } else {
                    None
                }
            };
            idx.iter()
                .enumerate()
                .map(|(i, &s)| -m.probability(prev(i), s).log2())
                .sum()
        })
        .collect())
}

/// Arithmetic-codes one stage of indices.
pub fn encode_stage(model: &EntropyModel, stage: usize, symbols: &[u32]) -> Result<Vec<u8>> {
    let m = model
        .stages
        .get(stage)
        .ok_or_else(|| Error::input(format!("model has no stage {stage}")))?;
    let tables = m.tables();
    let mut enc = RangeEncoder::new();
    let mut prev = None;
    for &s in symbols {
        if s as usize >= m.alphabet {
            return Err(Error::input(format!(
                "symbol {s} outside alphabet of size {}",
                m.alphabet
            )));
        }
        let cdf = tables.cdf(prev);
        let (cum, freq) = cdf.range(s as usize);
        enc.encode(cum, freq, cdf.total());
        if model.order == 1 {
            prev = Some(s);
        }
    }
    Ok(enc.finish())
}

/// Decodes `count` indices of one stage.
pub fn decode_stage(model: &EntropyModel, stage: usize, payload: &[u8], count: usize) -> Result<Vec<u32>> {
    let m = model
        .stages
        .get(stage)
        .ok_or_else(|| Error::corrupt(format!("model has no stage {stage}")))?;
    let tables = m.tables();
    let mut dec = RangeDecoder::new(payload);
    let mut out = Vec::with_capacity(count);
    let mut prev = None;
    for _ in 0..count {
        let cdf = tables.cdf(prev);
        let total = cdf.total();
        let s = cdf.lookup(dec.target(total)?);
        let (cum, freq) = cdf.range(s);
        dec.consume(cum, freq, total);
        out.push(s as u32);
        if model.order == 1 {
            prev = Some(s as u32);
        }
    }
    // A well-formed payload is fully consumed by the time the last symbol is
    // decoded; reading far past it means the payload was cut short.
    if dec.overrun() > 8 {
        return Err(Error::corrupt("stage payload is shorter than its symbols require"));
    }
    Ok(out)
}

/// Encodes every stage of `stream`.
pub fn encode(model: &EntropyModel, stream: &IndexStream) -> Result<Vec<Vec<u8>>> {
    model.check_stream(stream)?;
    stream
        .stages()
        .iter()
        .enumerate()
        .map(|(l, idx)| encode_stage(model, l, idx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream(stages: Vec<Vec<u32>>) -> IndexStream {
        let t = stages.first().map_or(0, |s| s.len());
        IndexStream::new(t, stages).unwrap()
    }

    #[test]
    fn add_one_smoothing() {
        let n = 37u64;
        let s = stream(vec![vec![2; n as usize]]);
        let m = fit_entropy_model(&[s], &[4], 0).unwrap();
        let p = m.stage(0).probability(None, 2);
        assert!((p - (n + 1) as f64 / (n + 4) as f64).abs() < 1e-15);
        let total: f64 = (0..4).map(|c| m.stage(0).probability(None, c)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_source_fits_within_multinomial_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (k, n) = (8usize, 40_000usize);
        let s = stream(vec![(0..n).map(|_| rng.random_range(0..k as u32)).collect()]);
        let m = fit_entropy_model(&[s], &[k], 0).unwrap();
        let p = 1.0 / k as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        for c in 0..k as u32 {
            assert!((m.stage(0).probability(None, c) - p).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn unseen_context_falls_back_to_order0() {
        let s = stream(vec![vec![0, 1, 0, 1, 0, 1, 1]]);
        let m = fit_entropy_model(&[s], &[3], 1).unwrap();
        let st = m.stage(0);
        // Symbol 2 never appears as a previous symbol.
        for c in 0..3 {
            assert_eq!(st.probability(Some(2), c), st.probability(None, c));
        }
        assert_ne!(st.probability(Some(0), 1), st.probability(None, 1));
        for ctx in [None, Some(0), Some(1), Some(2)] {
            let sum: f64 = (0..3).map(|c| st.probability(ctx, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_model_costs_four_bits_per_symbol() {
        let m = EntropyModel::uniform(&[16]).unwrap();
        let s = stream(vec![(0..1000).map(|i| i % 16).collect()]);
        assert_eq!(entropy_estimate(&m, &s).unwrap(), vec![4000.0]);
    }

    #[test]
    fn near_certain_model_closed_form() {
        let (n, k) = (500usize, 16usize);
        let s = stream(vec![vec![5; n]]);
        let m = fit_entropy_model(std::slice::from_ref(&s), &[k], 0).unwrap();
        let bits = entropy_estimate(&m, &s).unwrap()[0];
        let expected = n as f64 * ((n + k) as f64 / (n + 1) as f64).log2();
        assert!((bits - expected).abs() < 1e-9);
    }

    #[test]
    fn estimate_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 12usize;
        let train = stream(vec![(0..3000)
            .map(|_| rng.random_range(0..k as u32).min(rng.random_range(0..k as u32)))
            .collect()]);
        let test = stream(vec![(0..800).map(|_| rng.random_range(0..k as u32)).collect()]);
        for order in [0u8, 1] {
            let m = fit_entropy_model(std::slice::from_ref(&train), &[k], order).unwrap();
            // Recount from scratch.
            let t = train.stage(0);
            let mut c0 = vec![0f64; k];
            let mut c1 = vec![vec![0f64; k]; k];
            for i in 0..t.len() {
                c0[t[i] as usize] += 1.0;
                if i > 0 {
                    c1[t[i - 1] as usize][t[i] as usize] += 1.0;
                }
            }
            let mut bits = 0.0;
            let x = test.stage(0);
            for i in 0..x.len() {
                let row = if order == 1 && i > 0 && c1[x[i - 1] as usize].iter().sum::<f64>() > 0.0 {
                    &c1[x[i - 1] as usize]
                } else {
                    &c0
                };
                let tot: f64 = row.iter().sum::<f64>() + k as f64;
                bits -= ((row[x[i] as usize] + 1.0) / tot).log2();
            }
            let got = entropy_estimate(&m, &test).unwrap()[0];
            assert!((got - bits).abs() <= 1e-9 * bits, "order {order}: {got} vs {bits}");
        }
    }

    #[test]
    fn alphabet_mismatch_is_input_error() {
        let m = EntropyModel::uniform(&[4]).unwrap();
        let s = stream(vec![vec![4]]);
        assert!(matches!(entropy_estimate(&m, &s), Err(Error::Input(_))));
        let s2 = stream(vec![vec![0], vec![0]]);
        assert!(matches!(entropy_estimate(&m, &s2), Err(Error::Input(_))));
    }

    #[test]
    fn round_trip_both_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 40;
        let train = stream(vec![(0..2000).map(|_| rng.random_range(0..k as u32 / 2)).collect()]);
        let x: Vec<u32> = (0..3000).map(|_| rng.random_range(0..k as u32)).collect();
        for order in [0, 1] {
            let m = fit_entropy_model(std::slice::from_ref(&train), &[k], order).unwrap();
            let bytes = encode_stage(&m, 0, &x).unwrap();
            assert_eq!(decode_stage(&m, 0, &bytes, x.len()).unwrap(), x);
            let est = entropy_estimate(&m, &stream(vec![x.clone()])).unwrap()[0];
            assert!((bytes.len() * 8) as f64 <= est + 64.0);
            assert!((bytes.len() * 8) as f64 >= est);
        }
    }

    #[test]
    fn truncated_payload_detected() {
        let m = EntropyModel::uniform(&[256]).unwrap();
        let x: Vec<u32> = (0..400).map(|i| (i * 37 % 256) as u32).collect();
        let bytes = encode_stage(&m, 0, &x).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(decode_stage(&m, 0, cut, x.len()), Err(Error::Corrupt(_))));
    }
}
