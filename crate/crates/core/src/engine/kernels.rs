//! Traversal kernels over flat amplitude slices.
//!
//! Every function here reads and writes the batched amplitude array exactly
//! once. Samples are `dim = 2^n` amplitudes long and chunks never straddle a
//! sample boundary.

use num_complex::Complex;

use crate::circuit::Axis;
use crate::exec::{chunk_len, for_each_chunk_mut, map_ranges, zip3_chunks_mut, zip_chunks_mut, zip_chunks_mut_map};
use crate::precision::Real;

type C<F> = Complex<F>;

/// A rotation with its half-angle cosine and sine, ready for the hot loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rot<F> {
    pub axis: Axis,
    /// Bit position inside the tuple (or the qubit, for per-gate kernels).
    pub bit: usize,
    pub cos: F,
    pub sin: F,
}

impl<F: Real> Rot<F> {
    pub fn new(axis: Axis, bit: usize, theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self {
            axis,
            bit,
            cos: F::of(c),
            sin: F::of(s),
        }
    }

    /// Applies `R(θ)` (or `R(−θ) = R(θ)†` when `adjoint`) to a pair.
    #[inline(always)]
    pub fn apply(&self, a: &mut C<F>, b: &mut C<F>, adjoint: bool) {
        let c = self.cos;
        let s = if adjoint { -self.sin } else { self.sin };
        let (x, y) = (*a, *b);
        match self.axis {
            // [[c, -is], [-is, c]]
            Axis::X => {
                *a = C::new(c * x.re + s * y.im, c * x.im - s * y.re);
                *b = C::new(c * y.re + s * x.im, c * y.im - s * x.re);
            }
            // [[c, -s], [s, c]]
            Axis::Y => {
                *a = C::new(c * x.re - s * y.re, c * x.im - s * y.im);
                *b = C::new(s * x.re + c * y.re, s * x.im + c * y.im);
            }
            // diag(c - is, c + is)
            Axis::Z => {
                *a = C::new(c * x.re + s * x.im, c * x.im - s * x.re);
                *b = C::new(c * y.re - s * y.im, c * y.im + s * y.re);
            }
        }
    }

    /// `Re[(l0, l1)† · ∂R/∂θ · (p0, p1)]` for one pair, using
    /// `∂R/∂θ = −½ sin(θ/2) I − (i/2) cos(θ/2) P`.
    #[inline(always)]
    pub fn grad_term(&self, l0: C<F>, l1: C<F>, p0: C<F>, p1: C<F>) -> F {
        let half = F::of(0.5);
        let re_dot = |l: C<F>, p: C<F>| l.re * p.re + l.im * p.im;
        let im_dot = |l: C<F>, p: C<F>| l.re * p.im - l.im * p.re;
        let overlap = re_dot(l0, p0) + re_dot(l1, p1);
        // Im⟨l|P p⟩
        let im_p = match self.axis {
            Axis::X => im_dot(l0, p1) + im_dot(l1, p0),
            Axis::Y => re_dot(l1, p0) - re_dot(l0, p1),
            Axis::Z => im_dot(l0, p0) - im_dot(l1, p1),
        };
        half * (self.cos * im_p - self.sin * overlap)
    }
}

#[inline(always)]
fn tuple_span(first_qubit: usize, width: usize) -> (usize, usize) {
    let stride = 1usize << first_qubit;
    (stride, stride << width)
}

/// Calls `f(base)` for every tuple base inside an aligned chunk.
#[inline(always)]
fn for_each_base(len: usize, stride: usize, span: usize, mut f: impl FnMut(usize)) {
    let mut hi = 0;
    while hi < len {
        for lo in 0..stride {
            f(hi + lo);
        }
        hi += span;
    }
}

/// Tuples processed together. Each tuple still runs its own constituent
/// loop; the lanes only let that loop vectorize.
const LANES: usize = 16;

/// Split re/im scratch for `LANES` tuples of `D` amplitudes.
struct Strip<F, const D: usize> {
    re: [[F; LANES]; D],
    im: [[F; LANES]; D],
}

impl<F: Real, const D: usize> Strip<F, D> {
    #[inline(always)]
    fn zero() -> Self {
        Self {
            re: [[F::zero(); LANES]; D],
            im: [[F::zero(); LANES]; D],
        }
    }

    /// When a full strip covers consecutive bases (tuple stride at least
    /// `LANES`), every row is a contiguous run and loads vectorize.
    #[inline(always)]
    fn contiguous(bases: &[usize]) -> bool {
        bases.len() == LANES && bases[LANES - 1] == bases[0] + LANES - 1
    }

    #[inline(always)]
    fn load(&mut self, src: &[C<F>], bases: &[usize], stride: usize) {
        if Self::contiguous(bases) {
            for j in 0..D {
                let row: &[C<F>; LANES] = src[bases[0] + j * stride..][..LANES].try_into().unwrap();
                for (q, z) in row.iter().enumerate() {
                    self.re[j][q] = z.re;
                    self.im[j][q] = z.im;
                }
            }
            return;
        }
        for (lane, &base) in bases.iter().enumerate() {
            for j in 0..D {
                let z = src[base + j * stride];
                self.re[j][lane] = z.re;
                self.im[j][lane] = z.im;
            }
        }
        for lane in bases.len()..LANES {
            for j in 0..D {
                self.re[j][lane] = F::zero();
                self.im[j][lane] = F::zero();
            }
        }
    }

    #[inline(always)]
    fn store(&self, dst: &mut [C<F>], bases: &[usize], stride: usize) {
        if Self::contiguous(bases) {
            for j in 0..D {
                let row: &mut [C<F>; LANES] = (&mut dst[bases[0] + j * stride..][..LANES]).try_into().unwrap();
                for (q, z) in row.iter_mut().enumerate() {
                    *z = C::new(self.re[j][q], self.im[j][q]);
                }
            }
            return;
        }
        for (lane, &base) in bases.iter().enumerate() {
            for j in 0..D {
                dst[base + j * stride] = C::new(self.re[j][lane], self.im[j][lane]);
            }
        }
    }
}

#[inline(always)]
fn pair_rows<T>(rows: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    let (lo, hi) = rows.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

/// Collects tuple bases of a chunk `LANES` at a time.
#[inline(always)]
fn for_each_strip(len: usize, stride: usize, span: usize, mut f: impl FnMut(&[usize])) {
    let mut bases = [0usize; LANES];
    let mut count = 0;
    for_each_base(len, stride, span, |base| {
        bases[count] = base;
        count += 1;
        if count == LANES {
            f(&bases);
            count = 0;
        }
    });
    if count > 0 {
        f(&bases[..count]);
    }
}

fn unitary_chunk<F: Real, const D: usize>(
    out: &mut [C<F>],
    narrow: Option<&mut [F::Narrow]>,
    input: &[C<F>],
    m: &[C<F>],
    stride: usize,
    span: usize,
) {
    let mut narrow = narrow;
    let mut mre = [[F::zero(); D]; D];
    let mut mim = [[F::zero(); D]; D];
    for r in 0..D {
        for k in 0..D {
            mre[r][k] = m[r * D + k].re;
            mim[r][k] = m[r * D + k].im;
        }
    }
    let mut t = Strip::<F, D>::zero();
    let mut o = Strip::<F, D>::zero();
    for_each_strip(input.len(), stride, span, |bases| {
        t.load(input, bases, stride);
        for r in 0..D {
            let mut acc_re = [F::zero(); LANES];
            let mut acc_im = [F::zero(); LANES];
            for k in 0..D {
                let (a, b) = (mre[r][k], mim[r][k]);
                let (xr, xi) = (&t.re[k], &t.im[k]);
                for l in 0..LANES {
                    acc_re[l] = acc_re[l] + a * xr[l] - b * xi[l];
                    acc_im[l] = acc_im[l] + a * xi[l] + b * xr[l];
                }
            }
            o.re[r] = acc_re;
            o.im[r] = acc_im;
        }
        o.store(out, bases, stride);
        if let Some(nw) = narrow.as_deref_mut() {
            for (lane, &base) in bases.iter().enumerate() {
                for j in 0..D {
                    let i = 2 * (base + j * stride);
                    nw[i] = o.re[j][lane].narrow();
                    nw[i + 1] = o.im[j][lane].narrow();
                }
            }
        }
    });
}

/// `out = U · input` where `U` is a dense `2^w × 2^w` row-major matrix on
/// qubits `first_qubit .. first_qubit + w`. When `narrow` is given the
/// output is also written in the narrow format in the same pass.
pub(crate) fn apply_unitary<F: Real>(
    input: &[C<F>],
    out: &mut [C<F>],
    narrow: Option<&mut [F::Narrow]>,
    n_qubits: usize,
    first_qubit: usize,
    width: usize,
    matrix: &[C<F>],
) {
    let (stride, span) = tuple_span(first_qubit, width);
    let chunk = chunk_len(n_qubits, span);
    macro_rules! run {
        ($d:literal) => {
            match narrow {
                None => zip_chunks_mut(out, input, chunk, |_, o, x| {
                    unitary_chunk::<F, $d>(o, None, x, matrix, stride, span)
                }),
                Some(nw) => zip3_chunks_mut(out, chunk, nw, 2 * chunk, input, chunk, |_, o, w, x| {
                    unitary_chunk::<F, $d>(o, Some(w), x, matrix, stride, span)
                }),
            }
        };
    }
    match width {
        1 => run!(2),
        2 => run!(4),
        3 => run!(8),
        _ => unreachable!("block width checked at construction"),
    }
}

/// Per-axis arithmetic of the backward step, resolved once per constituent.
trait AxisKernel {
    /// `R(θ)` with `s` already negated for the adjoint.
    fn rotate<F: Real>(c: F, s: F, xr: F, xi: F, yr: F, yi: F) -> (F, F, F, F);
    /// `Im⟨l|P p⟩` on one pair.
    #[allow(clippy::too_many_arguments)]
    fn im_pauli<F: Real>(l0r: F, l0i: F, l1r: F, l1i: F, p0r: F, p0i: F, p1r: F, p1i: F) -> F;
}

struct AxisX;
struct AxisY;
struct AxisZ;

impl AxisKernel for AxisX {
    #[inline(always)]
    fn rotate<F: Real>(c: F, s: F, xr: F, xi: F, yr: F, yi: F) -> (F, F, F, F) {
        (c * xr + s * yi, c * xi - s * yr, c * yr + s * xi, c * yi - s * xr)
    }
    #[inline(always)]
    fn im_pauli<F: Real>(l0r: F, l0i: F, l1r: F, l1i: F, p0r: F, p0i: F, p1r: F, p1i: F) -> F {
        (l0r * p1i - l0i * p1r) + (l1r * p0i - l1i * p0r)
    }
}

impl AxisKernel for AxisY {
    #[inline(always)]
    fn rotate<F: Real>(c: F, s: F, xr: F, xi: F, yr: F, yi: F) -> (F, F, F, F) {
        (c * xr - s * yr, c * xi - s * yi, s * xr + c * yr, s * xi + c * yi)
    }
    #[inline(always)]
    fn im_pauli<F: Real>(l0r: F, l0i: F, l1r: F, l1i: F, p0r: F, p0i: F, p1r: F, p1i: F) -> F {
        (l1r * p0r + l1i * p0i) - (l0r * p1r + l0i * p1i)
    }
}

impl AxisKernel for AxisZ {
    #[inline(always)]
    fn rotate<F: Real>(c: F, s: F, xr: F, xi: F, yr: F, yi: F) -> (F, F, F, F) {
        (c * xr + s * xi, c * xi - s * xr, c * yr - s * yi, c * yi + s * yr)
    }
    #[inline(always)]
    fn im_pauli<F: Real>(l0r: F, l0i: F, l1r: F, l1i: F, p0r: F, p0i: F, p1r: F, p1i: F) -> F {
        (l0r * p0i - l0i * p0r) - (l1r * p1i - l1i * p1r)
    }
}

/// One constituent on a strip, pair by pair: (1) recompute the input
/// `ψ ← R(−θ)ψ`, (2) accumulate `Re⟨λ|∂R|ψ⟩ = ½(cos·Im⟨λ|Pψ⟩ − sin·Re⟨λ|ψ⟩)`,
/// (3) pull back `λ ← R(−θ)λ`. Returns the strip's gradient sum.
#[inline(always)]
fn constituent_step<F: Real, const D: usize, A: AxisKernel>(p: &mut Strip<F, D>, l: &mut Strip<F, D>, rot: &Rot<F>) -> f64 {
    let bit = 1usize << rot.bit;
    let (c, s) = (rot.cos, -rot.sin);
    let mut overlap = [F::zero(); LANES];
    let mut im_p = [F::zero(); LANES];
    for j0 in 0..D {
        if j0 & bit != 0 {
            continue;
        }
        let j1 = j0 | bit;
        let (p0r, p1r) = pair_rows(&mut p.re, j0, j1);
        let (p0i, p1i) = pair_rows(&mut p.im, j0, j1);
        let (l0r, l1r) = pair_rows(&mut l.re, j0, j1);
        let (l0i, l1i) = pair_rows(&mut l.im, j0, j1);
        for q in 0..LANES {
            let (ar, ai, br, bi) = A::rotate(c, s, p0r[q], p0i[q], p1r[q], p1i[q]);
            p0r[q] = ar;
            p0i[q] = ai;
            p1r[q] = br;
            p1i[q] = bi;
            let (xr, xi, yr, yi) = (l0r[q], l0i[q], l1r[q], l1i[q]);
            overlap[q] = overlap[q] + xr * ar + xi * ai + yr * br + yi * bi;
            im_p[q] = im_p[q] + A::im_pauli(xr, xi, yr, yi, ar, ai, br, bi);
            let (ur, ui, vr, vi) = A::rotate(c, s, xr, xi, yr, yi);
            l0r[q] = ur;
            l0i[q] = ui;
            l1r[q] = vr;
            l1i[q] = vi;
        }
    }
    let half = F::of(0.5);
    let mut g = 0.0f64;
    for q in 0..LANES {
        g += (half * (rot.cos * im_p[q] - rot.sin * overlap[q])).f64();
    }
    g
}

fn backward_chunk<F: Real, const D: usize>(
    lambda: &mut [C<F>],
    psi: &[C<F>],
    rots: &[Rot<F>],
    stride: usize,
    span: usize,
) -> Vec<f64> {
    let mut grads = vec![0.0f64; rots.len()];
    let mut p = Strip::<F, D>::zero();
    let mut l = Strip::<F, D>::zero();
    for_each_strip(psi.len(), stride, span, |bases| {
        p.load(psi, bases, stride);
        l.load(lambda, bases, stride);
        for (k, rot) in rots.iter().enumerate().rev() {
            grads[k] += match rot.axis {
                Axis::X => constituent_step::<F, D, AxisX>(&mut p, &mut l, rot),
                Axis::Y => constituent_step::<F, D, AxisY>(&mut p, &mut l, rot),
                Axis::Z => constituent_step::<F, D, AxisZ>(&mut p, &mut l, rot),
            };
        }
        l.store(lambda, bases, stride);
    });
    grads
}

#[inline(always)]
fn split_pair<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

/// Fused backward over one block. `lambda` holds the adjoint at the block
/// output and is overwritten with the adjoint at the block input; `psi` is
/// the stored block output. Returns per-constituent gradient partials, one
/// vector per chunk in ascending chunk order.
pub(crate) fn backward_unitary<F: Real>(
    psi: &[C<F>],
    lambda: &mut [C<F>],
    n_qubits: usize,
    first_qubit: usize,
    width: usize,
    rots: &[Rot<F>],
) -> Vec<Vec<f64>> {
    let (stride, span) = tuple_span(first_qubit, width);
    let chunk = chunk_len(n_qubits, span);
    macro_rules! run {
        ($d:literal) => {
            zip_chunks_mut_map(lambda, psi, chunk, |_, l, p| backward_chunk::<F, $d>(l, p, rots, stride, span))
        };
    }
    match width {
        1 => run!(2),
        2 => run!(4),
        3 => run!(8),
        _ => unreachable!("block width checked at construction"),
    }
}

/// Single rotation, out of place.
pub(crate) fn apply_rotation<F: Real>(input: &[C<F>], out: &mut [C<F>], n_qubits: usize, rot: Rot<F>) {
    let (stride, span) = tuple_span(rot.bit, 1);
    let chunk = chunk_len(n_qubits, span);
    zip_chunks_mut(out, input, chunk, |_, o, x| {
        for_each_base(x.len(), stride, span, |i0| {
            let (mut a, mut b) = (x[i0], x[i0 + stride]);
            rot.apply(&mut a, &mut b, false);
            o[i0] = a;
            o[i0 + stride] = b;
        });
    });
}

/// Per-gate adjoint step: given the gate input `psi` and the adjoint after
/// the gate, accumulates `Re⟨λ|∂U|ψ⟩` and updates `λ ← U†λ` in place.
/// Returns one partial per chunk.
pub(crate) fn backward_rotation<F: Real>(psi: &[C<F>], lambda: &mut [C<F>], n_qubits: usize, rot: Rot<F>) -> Vec<f64> {
    let (stride, span) = tuple_span(rot.bit, 1);
    let chunk = chunk_len(n_qubits, span);
    zip_chunks_mut_map(lambda, psi, chunk, |_, l, p| {
        let mut acc = 0.0f64;
        for_each_base(p.len(), stride, span, |i0| {
            let i1 = i0 + stride;
            acc += rot.grad_term(l[i0], l[i1], p[i0], p[i1]).f64();
            let (a, b) = split_pair(l, i0, i1);
            rot.apply(a, b, true);
        });
        acc
    })
}

#[inline(always)]
fn cz_parity(x: usize, masks: &[usize]) -> bool {
    masks.iter().fold(false, |p, &m| p ^ ((m & x) == m))
}

/// Low index bits whose CZ parity comes from a lookup table.
const CZ_TABLE_BITS: usize = 10;

/// Fused CZ: negate every amplitude whose XOR-accumulated mask parity is 1.
/// Masks inside the low bits are tabulated, masks inside the high bits are
/// constant over a run of `2^CZ_TABLE_BITS` indices, and only masks spanning
/// both are evaluated per amplitude.
pub(crate) fn apply_cz<F: Real>(input: &[C<F>], out: &mut [C<F>], n_qubits: usize, masks: &[usize]) {
    let dim = 1usize << n_qubits;
    let run = 1usize << n_qubits.min(CZ_TABLE_BITS);
    let low = run - 1;
    let (low_masks, rest): (Vec<usize>, Vec<usize>) = masks.iter().partition(|&&m| m & !low == 0);
    let (high_masks, cross): (Vec<usize>, Vec<usize>) = rest.iter().partition(|&&m| m & low == 0);
    let table: Vec<bool> = (0..run).map(|x| cz_parity(x, &low_masks)).collect();
    let chunk = chunk_len(n_qubits, run);
    let signs = [F::one(), -F::one()];
    zip_chunks_mut(out, input, chunk, |ci, o, x| {
        let offset = (ci * chunk) & (dim - 1);
        for (r, (o_run, x_run)) in o.chunks_mut(run).zip(x.chunks(run)).enumerate() {
            let hi = offset + r * run;
            let hi_parity = cz_parity(hi, &high_masks);
            for (i, (dst, src)) in o_run.iter_mut().zip(x_run).enumerate() {
                let odd = hi_parity ^ table[i] ^ cz_parity(hi | i, &cross);
                // Multiplying by ±1 avoids a data-dependent branch.
                *dst = src.scale(signs[odd as usize]);
            }
        }
    });
}

/// Destination of basis index `x` after the CNOT sequence.
#[inline(always)]
pub(crate) fn cnot_trace(x: usize, gates: impl Iterator<Item = (usize, usize)>) -> usize {
    gates.fold(x, |x, (c, t)| if x & c == c { x ^ t } else { x })
}

/// Fused CNOT, out of place, written as a gather: `out[y] = in[src(y)]`
/// with `src` the trace through the gates in `source_order`.
pub(crate) fn gather_cnot<F: Real>(input: &[C<F>], out: &mut [C<F>], n_qubits: usize, source_order: &[(usize, usize)]) {
    let dim = 1usize << n_qubits;
    let chunk = chunk_len(n_qubits, 1);
    for_each_chunk_mut(out, chunk, |ci, o| {
        let start = ci * chunk;
        let sample_base = start & !(dim - 1);
        let offset = start & (dim - 1);
        for (i, dst) in o.iter_mut().enumerate() {
            let src = cnot_trace(offset + i, source_order.iter().copied());
            *dst = input[sample_base + src];
        }
    });
}

/// `Re(i^k · w)`.
#[inline(always)]
fn re_times_i_pow<F: Real>(w: C<F>, k: u32) -> F {
    match k & 3 {
        0 => w.re,
        1 => -w.im,
        2 => -w.re,
        _ => w.im,
    }
}

#[inline(always)]
fn times_i_pow<F: Real>(w: C<F>, k: u32) -> C<F> {
    match k & 3 {
        0 => w,
        1 => C::new(-w.im, w.re),
        2 => -w,
        _ => C::new(w.im, -w.re),
    }
}

/// Per-sample `⟨ψ|O|ψ⟩` for the Pauli string given by its masks, reduced
/// in ascending chunk order.
pub(crate) fn expectation<F: Real>(amps: &[C<F>], n_qubits: usize, x_mask: usize, z_mask: usize, y_count: u32) -> Vec<f64> {
    let dim = 1usize << n_qubits;
    let chunk = chunk_len(n_qubits, 1);
    let partials = map_ranges(amps.len(), chunk, |start, len| {
        let sample = &amps[start & !(dim - 1)..][..dim];
        let offset = start & (dim - 1);
        let mut acc = 0.0f64;
        for x in offset..offset + len {
            let partner = x ^ x_mask;
            let w = sample[x].conj() * sample[partner];
            let v = re_times_i_pow(w, y_count).f64();
            acc += if (partner & z_mask).count_ones() & 1 == 1 { -v } else { v };
        }
        acc
    });
    let per_sample = (dim / chunk).max(1);
    partials
        .chunks(per_sample)
        .map(|p| p.iter().fold(0.0, |a, b| a + b))
        .collect()
}

/// `out = 2 O ψ`.
pub(crate) fn seed_adjoint<F: Real>(
    amps: &[C<F>],
    out: &mut [C<F>],
    n_qubits: usize,
    x_mask: usize,
    z_mask: usize,
    y_count: u32,
) {
    let dim = 1usize << n_qubits;
    let chunk = chunk_len(n_qubits, 1);
    let two = F::of(2.0);
    for_each_chunk_mut(out, chunk, |ci, o| {
        let start = ci * chunk;
        let sample = &amps[start & !(dim - 1)..][..dim];
        let offset = start & (dim - 1);
        for (i, dst) in o.iter_mut().enumerate() {
            let partner = (offset + i) ^ x_mask;
            let v = times_i_pow(sample[partner], y_count).scale(two);
            *dst = if (partner & z_mask).count_ones() & 1 == 1 { -v } else { v };
        }
    });
}
