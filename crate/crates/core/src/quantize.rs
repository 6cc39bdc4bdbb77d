//! Parameter quantizers and the quantized / empirical AEM approximations.

use serde::{Deserialize, Serialize};

use crate::aem::{solve_aem, AemResult, ExpectationEvaluator, DEFAULT_MAX_ITER};
use crate::distribution::ParameterDistribution;
use crate::error::{ensure_finite, MfgError, Result};
use crate::game::GameSpec;

/// Partition of the real line into `k` right-closed cells
/// `(b_{j-1}, b_j]` with one representative per cell. Values at or below
/// `b_0` fall in the first cell and values above `b_k` in the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    boundaries: Vec<f64>,
    representatives: Vec<f64>,
}

impl Quantizer {
    /// `k` equal-width cells on `[lo, hi]` with midpoint representatives.
    pub fn uniform(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(MfgError::Size("quantizer needs at least one cell".into()));
        }
        ensure_finite("lo", lo)?;
        ensure_finite("hi", hi)?;
        if lo >= hi {
            return Err(MfgError::Domain(format!("quantizer range needs lo < hi, got [{lo}, {hi}]")));
        }
        let width = (hi - lo) / k as f64;
        let boundaries: Vec<f64> = (0..=k)
            .map(|j| if j == k { hi } else { lo + j as f64 * width })
            .collect();
        let representatives = boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            boundaries,
            representatives,
        })
    }

    /// Arbitrary cells; `representatives[j]` must lie in
    /// `(boundaries[j], boundaries[j + 1]]`.
    pub fn new(boundaries: Vec<f64>, representatives: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 || representatives.len() + 1 != boundaries.len() {
            return Err(MfgError::Size(format!(
                "{} boundaries do not describe {} cells",
                boundaries.len(),
                representatives.len()
            )));
        }
        if boundaries.iter().chain(&representatives).any(|v| !v.is_finite()) {
            return Err(MfgError::Domain("quantizer has non-finite entries".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfgError::Domain("quantizer boundaries must increase strictly".into()));
        }
        for (j, &r) in representatives.iter().enumerate() {
            if !(r > boundaries[j] && r <= boundaries[j + 1]) {
                return Err(MfgError::Domain(format!(
                    "representative {r} is not in cell ({}, {}]",
                    boundaries[j],
                    boundaries[j + 1]
                )));
            }
        }
        Ok(Self {
            boundaries,
            representatives,
        })
    }

    pub fn k(&self) -> usize {
        self.representatives.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn representatives(&self) -> &[f64] {
        &self.representatives
    }

    /// Zero-based cell index of `alpha` and that cell's representative.
    pub fn quantize_value(&self, alpha: f64) -> Result<(usize, f64)> {
        ensure_finite("alpha", alpha)?;
        let j = self.cell_of(alpha);
        Ok((j, self.representatives[j]))
    }

    pub(crate) fn cell_of(&self, alpha: f64) -> usize {
        self.boundaries[1..]
            .partition_point(|&b| b < alpha)
            .min(self.k() - 1)
    }
}

/// Probability of each cell under `dist`, with the mass outside
/// `[b_0, b_k]` folded into the end cells.
pub fn cell_probabilities(q: &Quantizer, dist: &ParameterDistribution) -> Vec<f64> {
    let k = q.k();
    let b = q.boundaries();
    (0..k)
        .map(|j| {
            let upper = if j == k - 1 { 1.0 } else { dist.cdf(b[j + 1]) };
            let lower = if j == 0 { 0.0 } else { dist.cdf(b[j]) };
            (upper - lower).max(0.0)
        })
        .collect()
}

/// Number of parameters falling in each cell of a quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedHistogram {
    pub quantizer: Quantizer,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl QuantizedHistogram {
    /// Counts after saturation. Non-finite values are not counted.
    pub fn build(q: &Quantizer, params: &[f64]) -> Self {
        let mut counts = vec![0u64; q.k()];
        for &a in params.iter().filter(|a| a.is_finite()) {
            counts[q.cell_of(a)] += 1;
        }
        let n = counts.iter().sum();
        Self {
            quantizer: q.clone(),
            counts,
            n,
        }
    }

    /// Bits per count in the canonical encoding: `ceil(log2(n + 1))`.
    pub fn count_width(&self) -> u32 {
        u64::BITS - self.n.leading_zeros()
    }

    /// Size of the packed counts section in bits.
    pub fn count_payload_bits(&self) -> u64 {
        self.counts.len() as u64 * self.count_width() as u64
    }

    /// Canonical binary encoding (big-endian): `k` as `u16`, then the `k`
    /// representatives as `f64`, then the `k` counts packed MSB-first at
    /// [`count_width`](Self::count_width) bits each, zero-padded to a byte.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let k = u16::try_from(self.counts.len())
            .map_err(|_| MfgError::Size(format!("{} cells do not fit the u16 header", self.counts.len())))?;
        let mut out = Vec::with_capacity(2 + 8 * k as usize + (self.count_payload_bits() as usize).div_ceil(8));
        out.extend_from_slice(&k.to_be_bytes());
        for r in self.quantizer.representatives() {
            out.extend_from_slice(&r.to_be_bytes());
        }
        let width = self.count_width();
        let mut writer = BitWriter::default();
        for &c in &self.counts {
            writer.push(c, width);
        }
        out.extend(writer.finish());
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode); `n` fixes the count width.
    /// Returns the representatives and counts.
    pub fn decode(bytes: &[u8], n: u64) -> Result<(Vec<f64>, Vec<u64>)> {
        let bad = |msg: &str| MfgError::Numeric(format!("malformed histogram encoding: {msg}"));
        if bytes.len() < 2 {
            return Err(bad("missing header"));
        }
        let k = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        let reps_end = 2 + 8 * k;
        if bytes.len() < reps_end {
            return Err(bad("truncated representatives"));
        }
        let reps = bytes[2..reps_end]
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let width = u64::BITS - n.leading_zeros();
        let payload = &bytes[reps_end..];
        if payload.len() != (k * width as usize).div_ceil(8) {
            return Err(bad("count section has the wrong length"));
        }
        let mut reader = BitReader { bytes: payload, pos: 0 };
        let counts: Vec<u64> = (0..k).map(|_| reader.take(width)).collect();
        if counts.iter().sum::<u64>() != n {
            return Err(bad("counts do not sum to n"));
        }
        Ok((reps, counts))
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: u32) {
        for bit in (0..width).rev() {
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> bit) & 1 == 1 {
                let last = self.bytes.last_mut().expect("byte pushed above");
                *last |= 0x80 >> (self.used % 8);
            }
            self.used += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        v
    }
}

/// AEM with the parameter law replaced by its quantized version: fixed
/// point of `z = sum_m Br(z, q_m) P(B_m)`.
pub fn quantized_dist_aem(
    q: &Quantizer,
    dist: &ParameterDistribution,
    game: &GameSpec,
    tol: f64,
) -> Result<AemResult> {
    let ev = ExpectationEvaluator::QuantizedDistribution {
        quantizer: q.clone(),
        dist: dist.clone(),
    };
    solve_aem(&ev, game, tol, DEFAULT_MAX_ITER)
}

/// AEM under the empirical law of `params`: fixed point of
/// `z = (1/n) sum_i Br(z, alpha_i)`.
pub fn empirical_aem(params: &[f64], game: &GameSpec, tol: f64) -> Result<AemResult> {
    solve_aem(&ExpectationEvaluator::Empirical(params.to_vec()), game, tol, DEFAULT_MAX_ITER)
}

/// AEM from quantized parameters: fixed point of
/// `z = sum_j Br(z, c_j) counts_j / n`.
pub fn alpha_quantized_aem(hist: &QuantizedHistogram, game: &GameSpec, tol: f64) -> Result<AemResult> {
    solve_aem(&ExpectationEvaluator::QuantizedParams(hist.clone()), game, tol, DEFAULT_MAX_ITER)
}
