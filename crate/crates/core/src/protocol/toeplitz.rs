//! Binary Toeplitz hashing over GF(2).
//!
//! An `m × n` Toeplitz matrix is fixed by `m + n − 1` bits `t`, with
//! `T[i][j] = t[i − j + n − 1]`. Small products are computed bit-packed;
//! large ones as an integer convolution through the FFT, reduced mod 2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// RNG stream reserved for hash seeds.
pub const HASH_STREAM: u64 = 3;

/// Above this many matrix entries the FFT path is used.
const DIRECT_LIMIT: u64 = 1 << 26;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzHasher {
    input_len: usize,
    output_len: usize,
    /// Diagonal bits `t`, length `m + n − 1` (empty when `m = 0`).
    bits: Vec<u8>,
}

impl ToeplitzHasher {
    pub fn from_bits(input_len: usize, output_len: usize, bits: Vec<u8>) -> Result<Self> {
        check_lengths(input_len, output_len)?;
        let need = if output_len == 0 { 0 } else { output_len + input_len - 1 };
        if bits.len() != need {
            return Err(Error::Shape(format!("Toeplitz matrix needs {need} seed bits, got {}", bits.len())));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Parameter("seed bits must be 0 or 1".into()));
        }
        Ok(ToeplitzHasher { input_len, output_len, bits })
    }

    /// Expands `seed` into the diagonal bits.
    pub fn from_seed(input_len: usize, output_len: usize, seed: u64) -> Result<Self> {
        check_lengths(input_len, output_len)?;
        let need = if output_len == 0 { 0 } else { output_len + input_len - 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(HASH_STREAM);
        let mut bits = Vec::with_capacity(need);
        while bits.len() < need {
            let word: u64 = rng.random();
            bits.extend((0..64).map(|k| ((word >> k) & 1) as u8).take(need - bits.len()));
        }
        Ok(ToeplitzHasher { input_len, output_len, bits })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn hash(&self, input: &[u8]) -> Result<Vec<u8>> {
        if input.len() != self.input_len {
            return Err(Error::Shape(format!("hash input has {} bits, expected {}", input.len(), self.input_len)));
        }
        if input.iter().any(|&b| b > 1) {
            return Err(Error::Parameter("input bits must be 0 or 1".into()));
        }
        if self.output_len == 0 {
            return Ok(Vec::new());
        }
        if (self.output_len as u64) * (self.input_len as u64) <= DIRECT_LIMIT {
            Ok(self.hash_direct(input))
        } else {
            self.hash_fft(input)
        }
    }

    /// Bit-packed product, row by row.
    pub fn hash_direct(&self, input: &[u8]) -> Vec<u8> {
        let (n, m) = (self.input_len, self.output_len);
        if m == 0 {
            return Vec::new();
        }
        // r[k] = t[m + n − 2 − k], so row i is the window r[m − 1 − i ..][..n]
        let len = m + n - 1;
        let r = pack((0..len).map(|k| self.bits[len - 1 - k]), len);
        let x = pack(input.iter().copied(), n);
        (0..m)
            .map(|i| {
                let start = m - 1 - i;
                let mut acc = 0u64;
                for (w, &xw) in x.iter().enumerate() {
                    acc ^= window(&r, start + 64 * w) & xw;
                }
                (acc.count_ones() & 1) as u8
            })
            .collect()
    }

    /// `y_i = (t * x)[i + n − 1] mod 2` via FFT convolution.
    pub fn hash_fft(&self, input: &[u8]) -> Result<Vec<u8>> {
        let (n, m) = (self.input_len, self.output_len);
        let full = self.bits.len() + n - 1;
        let size = full.next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut a: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); size];
        let mut b = a.clone();
        for (slot, &t) in a.iter_mut().zip(&self.bits) {
            slot.re = t as f64;
        }
        for (slot, &v) in b.iter_mut().zip(input) {
            slot.re = v as f64;
        }
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (p, q) in a.iter_mut().zip(&b) {
            *p *= q;
        }
        inv.process(&mut a);
        let scale = 1.0 / size as f64;
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let v = a[i + n - 1].re * scale;
            let k = v.round();
            if (v - k).abs() > 0.25 {
                return Err(Error::Numerical(format!("FFT rounding error {:.3} in Toeplitz product", (v - k).abs())));
            }
            out.push((k as u64 & 1) as u8);
        }
        Ok(out)
    }
}

fn check_lengths(input_len: usize, output_len: usize) -> Result<()> {
    if output_len > input_len {
        return Err(Error::Parameter(format!("output length {output_len} exceeds input length {input_len}")));
    }
    Ok(())
}

fn pack(bits: impl Iterator<Item = u8>, len: usize) -> Vec<u64> {
    let mut words = vec![0u64; len.div_ceil(64) + 1];
    for (k, b) in bits.enumerate() {
        words[k / 64] |= (b as u64) << (k % 64);
    }
    words
}

/// 64 bits of `words` starting at bit `pos`; bits past the end read as 0.
fn window(words: &[u64], pos: usize) -> u64 {
    let (q, off) = (pos / 64, pos % 64);
    let lo = words.get(q).copied().unwrap_or(0);
    if off == 0 {
        lo
    } else {
        let hi = words.get(q + 1).copied().unwrap_or(0);
        (lo >> off) | (hi << (64 - off))
    }
}

/// Hashes `input` to `out_len` bits with the matrix expanded from `seed`.
pub fn toeplitz_hash(input: &[u8], out_len: usize, seed: u64) -> Result<Vec<u8>> {
    ToeplitzHasher::from_seed(input.len(), out_len, seed)?.hash(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(bits: &[u8], input: &[u8], m: usize) -> Vec<u8> {
        let n = input.len();
        (0..m).map(|i| (0..n).fold(0u8, |acc, j| acc ^ (bits[i + n - 1 - j] & input[j]))).collect()
    }

    #[test]
    fn zero_seed_gives_zero_output() {
        let h = ToeplitzHasher::from_bits(10, 4, vec![0; 13]).unwrap();
        assert_eq!(h.hash(&[1; 10]).unwrap(), vec![0; 4]);
    }

    #[test]
    fn empty_output() {
        assert!(toeplitz_hash(&[1, 0, 1], 0, 7).unwrap().is_empty());
        assert!(toeplitz_hash(&[1, 0, 1], 4, 7).is_err());
    }

    #[test]
    fn direct_and_fft_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, m) in [(1, 1), (5, 3), (64, 64), (130, 7), (300, 200)] {
            let h = ToeplitzHasher::from_seed(n, m, rng.random()).unwrap();
            let x: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let want = naive(&h.bits, &x, m);
            assert_eq!(h.hash_direct(&x), want, "direct n={n} m={m}");
            assert_eq!(h.hash_fft(&x).unwrap(), want, "fft n={n} m={m}");
        }
    }

    #[test]
    fn explicit_matrix() {
        // t = [t0..t3], n = 3, m = 2: rows [t2 t1 t0], [t3 t2 t1]
        let h = ToeplitzHasher::from_bits(3, 2, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(h.hash(&[1, 0, 0]).unwrap(), vec![1, 1]);
        assert_eq!(h.hash(&[0, 1, 0]).unwrap(), vec![0, 1]);
        assert_eq!(h.hash(&[0, 0, 1]).unwrap(), vec![1, 0]);
    }

    #[test]
    fn rejects_bad_bits() {
        assert!(ToeplitzHasher::from_bits(3, 2, vec![1, 0, 2, 1]).is_err());
        assert!(ToeplitzHasher::from_bits(3, 2, vec![1, 0]).is_err());
        let h = ToeplitzHasher::from_seed(3, 2, 1).unwrap();
        assert!(h.hash(&[1, 2, 0]).is_err());
        assert!(h.hash(&[1, 0]).is_err());
    }
}
