//! Batched amplitude storage.
//!
//! A [`BatchedState`] holds `batch` samples of `2^n` complex amplitudes each,
//! samples contiguous, every amplitude stored as an interleaved
//! `(re, im)` pair. Qubit `t` corresponds to bit `t` of the amplitude index.

use std::io::{Read, Write};

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{invalid, mismatch, Result, SimError};
use crate::precision::{Precision, Real};
use crate::rng::SplitMix64;

/// Default allocation limit for a single batched buffer or ledger: 8 GiB.
pub const DEFAULT_ALLOC_LIMIT: u64 = 8 << 30;

/// Largest register the index arithmetic supports.
pub const MAX_QUBITS: usize = 40;

/// Bytes needed for `batch` samples of `n` qubits at precision `p`.
pub fn state_bytes(n_qubits: usize, batch: usize, precision: Precision) -> u128 {
    ((batch as u128) << n_qubits.min(100)) * precision.amplitude_bytes() as u128
}

pub fn check_capacity(what: &'static str, requested: u128, limit: u64) -> Result<()> {
    if requested > limit as u128 {
        return Err(SimError::Capacity {
            what,
            requested,
            limit,
        });
    }
    Ok(())
}

fn check_shape(n_qubits: usize, batch: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(invalid("a state needs at least one qubit"));
    }
    if n_qubits > MAX_QUBITS {
        return Err(invalid(format!("{n_qubits} qubits exceeds the supported maximum of {MAX_QUBITS}")));
    }
    if batch == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    Ok(())
}

/// Zero-filled amplitude buffer. Allocated as a flat component vector so the
/// allocator can hand out zeroed pages directly.
pub(crate) fn zeroed_amplitudes<F: Real>(len: usize) -> Vec<Complex<F>> {
    let flat: Vec<F> = vec![F::zero(); 2 * len];
    let mut flat = std::mem::ManuallyDrop::new(flat);
    let (ptr, flat_len, cap) = (flat.as_mut_ptr(), flat.len(), flat.capacity());
    debug_assert_eq!(flat_len % 2, 0);
    // SAFETY: `Complex<F>` is `#[repr(C)]` with two `F` fields, so it has the
    // alignment of `F` and twice its size. The allocation was made for
    // `2 * len` values of `F`; when `cap` is even it is exactly the layout of
    // `cap / 2` complex values, and `vec!` never over-allocates here.
    unsafe {
        debug_assert_eq!(cap % 2, 0);
        Vec::from_raw_parts(ptr as *mut Complex<F>, flat_len / 2, cap / 2)
    }
}

#[derive(Clone, PartialEq)]
pub struct BatchedState<F: Real> {
    n_qubits: usize,
    batch: usize,
    amps: Vec<Complex<F>>,
}

impl<F: Real> std::fmt::Debug for BatchedState<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchedState")
            .field("n_qubits", &self.n_qubits)
            .field("batch", &self.batch)
            .field("precision", &F::PRECISION)
            .finish_non_exhaustive()
    }
}

impl<F: Real> BatchedState<F> {
    /// All-zero buffer (not a valid state; used as kernel output).
    pub fn zeros(n_qubits: usize, batch: usize) -> Result<Self> {
        Self::zeros_with_limit(n_qubits, batch, DEFAULT_ALLOC_LIMIT)
    }

    pub fn zeros_with_limit(n_qubits: usize, batch: usize, limit: u64) -> Result<Self> {
        check_shape(n_qubits, batch)?;
        check_capacity("batched state", state_bytes(n_qubits, batch, F::PRECISION), limit)?;
        Ok(Self {
            n_qubits,
            batch,
            amps: zeroed_amplitudes(batch << n_qubits),
        })
    }

    /// `|0…0⟩` in every sample.
    pub fn basis(n_qubits: usize, batch: usize) -> Result<Self> {
        Self::basis_with_limit(n_qubits, batch, DEFAULT_ALLOC_LIMIT)
    }

    pub fn basis_with_limit(n_qubits: usize, batch: usize, limit: u64) -> Result<Self> {
        let mut s = Self::zeros_with_limit(n_qubits, batch, limit)?;
        let dim = s.dim();
        for sample in s.amps.chunks_mut(dim) {
            sample[0] = Complex::new(F::one(), F::zero());
        }
        Ok(s)
    }

    /// Random normalized samples.
    ///
    /// Components are generated in storage order (sample, index, re then
    /// im) from one SplitMix64 stream, each `(re, im)` pair being one
    /// Box–Muller draw. Normalization happens in `f64` before rounding to
    /// the compute precision.
    pub fn random(n_qubits: usize, batch: usize, seed: u64) -> Result<Self> {
        Self::random_with_limit(n_qubits, batch, seed, DEFAULT_ALLOC_LIMIT)
    }

    pub fn random_with_limit(n_qubits: usize, batch: usize, seed: u64, limit: u64) -> Result<Self> {
        let mut s = Self::zeros_with_limit(n_qubits, batch, limit)?;
        let dim = s.dim();
        let mut rng = SplitMix64::new(seed);
        let mut buf = vec![(0.0f64, 0.0f64); dim];
        for sample in s.amps.chunks_mut(dim) {
            let mut norm2 = 0.0;
            for z in buf.iter_mut() {
                *z = rng.next_normal_pair();
                norm2 += z.0 * z.0 + z.1 * z.1;
            }
            let inv = 1.0 / norm2.sqrt();
            for (a, z) in sample.iter_mut().zip(&buf) {
                *a = Complex::new(F::of(z.0 * inv), F::of(z.1 * inv));
            }
        }
        Ok(s)
    }

    pub fn from_amplitudes(n_qubits: usize, batch: usize, amps: Vec<Complex<F>>) -> Result<Self> {
        check_shape(n_qubits, batch)?;
        if amps.len() != batch << n_qubits {
            return Err(mismatch(batch << n_qubits, amps.len()));
        }
        Ok(Self {
            n_qubits,
            batch,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Amplitudes per sample.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn precision(&self) -> Precision {
        F::PRECISION
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        (self.amps.len() * F::PRECISION.amplitude_bytes()) as u64
    }

    pub fn amplitudes(&self) -> &[Complex<F>] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex<F>] {
        &mut self.amps
    }

    pub fn sample(&self, s: usize) -> &[Complex<F>] {
        let dim = self.dim();
        &self.amps[s * dim..(s + 1) * dim]
    }

    pub fn sample_mut(&mut self, s: usize) -> &mut [Complex<F>] {
        let dim = self.dim();
        &mut self.amps[s * dim..(s + 1) * dim]
    }

    pub fn amp(&self, s: usize, x: usize) -> Complex<F> {
        self.amps[s * self.dim() + x]
    }

    pub fn set_amp(&mut self, s: usize, x: usize, value: Complex<F>) {
        let dim = self.dim();
        self.amps[s * dim + x] = value;
    }

    /// Per-sample Euclidean norms, accumulated in `f64`.
    pub fn norms(&self) -> Vec<f64> {
        self.amps
            .chunks(self.dim())
            .map(|s| {
                s.iter()
                    .map(|a| a.re.f64() * a.re.f64() + a.im.f64() * a.im.f64())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_qubits == other.n_qubits && self.batch == other.batch
    }

    pub(crate) fn expect_shape(&self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(mismatch(
                format!("{} qubits x {} samples", self.n_qubits, self.batch),
                format!("{} qubits x {} samples", other.n_qubits, other.batch),
            ));
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        self.amps.iter_mut().for_each(|a| a.set_zero());
    }

    /// Largest componentwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| {
                let d = a - b;
                (d.re.f64().powi(2) + d.im.f64().powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn narrow(&self) -> NarrowedState<F> {
        let mut out = NarrowedState::zeros(self.n_qubits, self.batch);
        for (dst, a) in out.data.chunks_exact_mut(2).zip(&self.amps) {
            dst[0] = a.re.narrow();
            dst[1] = a.im.narrow();
        }
        out
    }

    /// Converts every component to `f64`.
    pub fn to_f64(&self) -> BatchedState<f64> {
        BatchedState {
            n_qubits: self.n_qubits,
            batch: self.batch,
            amps: self
                .amps
                .iter()
                .map(|a| Complex::new(a.re.f64(), a.im.f64()))
                .collect(),
        }
    }

    /// Converts from `f64` with round-to-nearest.
    pub fn from_f64(state: &BatchedState<f64>) -> Self {
        Self {
            n_qubits: state.n_qubits,
            batch: state.batch,
            amps: state
                .amps
                .iter()
                .map(|a| Complex::new(F::of(a.re), F::of(a.im)))
                .collect(),
        }
    }

    /// Raw dump: `u32` qubit count, `u64` batch, `u8` precision code,
    /// `u8` endianness tag (`b'L'`), then every component little-endian in
    /// storage order. All header integers are little-endian.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(14 + self.amps.len() * 2 * std::mem::size_of::<F>());
        buf.extend_from_slice(&(self.n_qubits as u32).to_le_bytes());
        buf.extend_from_slice(&(self.batch as u64).to_le_bytes());
        buf.push(F::PRECISION.code());
        buf.push(b'L');
        for a in &self.amps {
            a.re.le_bytes(&mut buf);
            a.im.le_bytes(&mut buf);
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| SimError::Parse {
            line: 0,
            message: m.to_string(),
        };
        let mut header = [0u8; 14];
        r.read_exact(&mut header)?;
        let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let batch = u64::from_le_bytes(header[4..12].try_into().unwrap()) as usize;
        let precision = Precision::from_code(header[12]).ok_or_else(|| bad("unknown precision code"))?;
        if header[13] != b'L' {
            return Err(bad("unsupported endianness tag"));
        }
        if precision != F::PRECISION {
            return Err(mismatch(F::PRECISION, precision));
        }
        let mut s = Self::zeros(n, batch)?;
        let width = std::mem::size_of::<F>();
        let mut body = vec![0u8; s.amps.len() * 2 * width];
        r.read_exact(&mut body)?;
        for (a, c) in s.amps.iter_mut().zip(body.chunks_exact(2 * width)) {
            *a = Complex::new(F::from_le_slice(&c[..width]), F::from_le_slice(&c[width..]));
        }
        Ok(s)
    }
}

/// A batched state whose components are stored in the narrow format of `F`.
#[derive(Clone, PartialEq)]
pub struct NarrowedState<F: Real> {
    n_qubits: usize,
    batch: usize,
    /// Interleaved `(re, im)` components.
    data: Vec<F::Narrow>,
}

impl<F: Real> std::fmt::Debug for NarrowedState<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NarrowedState")
            .field("n_qubits", &self.n_qubits)
            .field("batch", &self.batch)
            .finish_non_exhaustive()
    }
}

impl<F: Real> NarrowedState<F> {
    pub fn zeros(n_qubits: usize, batch: usize) -> Self {
        Self {
            n_qubits,
            batch,
            data: vec![F::Narrow::default(); 2 * (batch << n_qubits)],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn components(&self) -> &[F::Narrow] {
        &self.data
    }

    pub(crate) fn components_mut(&mut self) -> &mut [F::Narrow] {
        &mut self.data
    }

    pub fn bytes(&self) -> u64 {
        (self.data.len() * std::mem::size_of::<F::Narrow>()) as u64
    }

    pub fn widen(&self) -> BatchedState<F> {
        let mut out = BatchedState::zeros(self.n_qubits, self.batch).expect("shape already validated");
        self.widen_into(&mut out);
        out
    }

    /// Widens into an existing buffer of the same shape.
    pub fn widen_into(&self, out: &mut BatchedState<F>) {
        debug_assert_eq!(out.len() * 2, self.data.len());
        for (a, c) in out.amps.iter_mut().zip(self.data.chunks_exact(2)) {
            *a = Complex::new(F::widen(c[0]), F::widen(c[1]));
        }
    }
}

/// All `2^(n-1)` index pairs differing only in bit `t`, lower index first.
pub fn pair_indices(n_qubits: usize, t: usize) -> Result<impl Iterator<Item = (usize, usize)>> {
    if t >= n_qubits {
        return Err(SimError::QubitOutOfRange {
            qubit: t,
            n_qubits,
        });
    }
    let bit = 1usize << t;
    let low = bit - 1;
    Ok((0..1usize << (n_qubits - 1)).map(move |k| {
        let i0 = ((k & !low) << 1) | (k & low);
        (i0, i0 | bit)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_single_qubit() {
        let s = BatchedState::<f64>::basis(1, 1).unwrap();
        assert_eq!(s.amplitudes(), &[Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]);
    }

    #[test]
    fn basis_two_samples() {
        let s = BatchedState::<f32>::basis(2, 2).unwrap();
        for b in 0..2 {
            assert_eq!(s.amp(b, 0), Complex::new(1.0, 0.0));
            for x in 1..4 {
                assert_eq!(s.amp(b, x), Complex::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn zero_qubits_rejected() {
        assert!(matches!(BatchedState::<f64>::basis(0, 1), Err(SimError::InvalidArgument(_))));
        assert!(BatchedState::<f64>::basis(1, 0).is_err());
    }

    #[test]
    fn capacity_limit() {
        let err = BatchedState::<f64>::basis_with_limit(10, 4, 1024).unwrap_err();
        assert!(matches!(err, SimError::Capacity { .. }));
        assert!(BatchedState::<f64>::basis_with_limit(6, 1, 1024).is_ok());
    }

    #[test]
    fn random_is_deterministic_and_normalized() {
        let a = BatchedState::<f64>::random(5, 3, 42).unwrap();
        let b = BatchedState::<f64>::random(5, 3, 42).unwrap();
        assert_eq!(a, b);
        for n in a.norms() {
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_seeds_differ() {
        let a = BatchedState::<f64>::random(4, 2, 1).unwrap();
        let b = BatchedState::<f64>::random(4, 2, 2).unwrap();
        assert!(a.amplitudes().iter().zip(b.amplitudes()).any(|(x, y)| x != y));
    }

    #[test]
    fn single_precision_random_matches_rounded_double() {
        let d = BatchedState::<f64>::random(4, 2, 11).unwrap();
        let s = BatchedState::<f32>::random(4, 2, 11).unwrap();
        assert_eq!(BatchedState::<f32>::from_f64(&d), s);
    }

    #[test]
    fn narrow_widen_keeps_norm_close() {
        let s = BatchedState::<f32>::random(10, 1, 3).unwrap();
        let back = s.narrow().widen();
        assert!((back.norms()[0] - 1.0).abs() <= 1e-2);
        let d = BatchedState::<f64>::random(10, 1, 3).unwrap();
        let back = d.narrow().widen();
        assert!((back.norms()[0] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn pair_indices_examples() {
        let p: Vec<_> = pair_indices(2, 0).unwrap().collect();
        assert_eq!(p, vec![(0, 1), (2, 3)]);
        let p: Vec<_> = pair_indices(2, 1).unwrap().collect();
        assert_eq!(p, vec![(0, 2), (1, 3)]);
        let p: Vec<_> = pair_indices(3, 1).unwrap().collect();
        assert_eq!(p, vec![(0, 2), (1, 3), (4, 6), (5, 7)]);
        assert!(pair_indices(3, 3).is_err());
    }

    #[test]
    fn raw_dump_round_trip() {
        let s = BatchedState::<f32>::random(3, 2, 5).unwrap();
        let mut buf = Vec::new();
        s.write_raw(&mut buf).unwrap();
        assert_eq!(buf.len(), 14 + 2 * 8 * 8);
        assert_eq!(&buf[0..4], &3u32.to_le_bytes());
        assert_eq!(buf[12], 1);
        assert_eq!(buf[13], b'L');
        let back = BatchedState::<f32>::read_raw(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(BatchedState::<f64>::read_raw(&buf[..]).is_err());
    }

    #[test]
    fn interleaved_accessors_round_trip() {
        let mut s = BatchedState::<f64>::zeros(3, 2).unwrap();
        s.set_amp(1, 5, Complex::new(0.25, -0.5));
        assert_eq!(s.amp(1, 5), Complex::new(0.25, -0.5));
        assert_eq!(s.amplitudes()[8 + 5], Complex::new(0.25, -0.5));
    }
}
