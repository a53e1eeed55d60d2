//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line on a normal `cargo test`; exits non-zero if any fails.
//! Tolerances are fixed here and must not be loosened.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use qfuse::checkpoint::{count_checkpointed, count_checkpointed_naive, divisors, nearest_divisor};
use qfuse::fusion::{FusedCnotBlock, FusedCzBlock};
use qfuse::oracle::{self, DenseOperator};
use qfuse::rng::SplitMix64;
use qfuse::*;

const GRAD_SHIFT_REL: f64 = 1e-10;
const GRAD_FD_REL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const FUSED_NAIVE_ABS: f64 = 1e-12;
const KERNEL_ABS: f64 = 1e-12;
const KERNEL_TRIALS: usize = 100;
const SCALING_TOL: f64 = 0.05;
const CHECKPOINT_ABS: f64 = 1e-12;
const THROUGHPUT_RATIO: f64 = 2.0;
const THROUGHPUT_REPS: usize = 5;
/// Calibrated against parameter-shift gradients on HEA n=10, d=10, batch 2,
/// fifteen seeds: worst observed 2.3e-3 (single, bf16 ledger) and 3.2e-8
/// (double, f32 ledger); bounds leave roughly 2x headroom.
const MEM_SAVE_REL_SINGLE: f64 = 5e-3;
const MEM_SAVE_REL_DOUBLE: f64 = 1e-7;
const THREAD_REL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = fn() -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("gradient correctness vs parameter shift and finite differences", gradient_correctness),
        ("fused and per-gate executors agree", fused_matches_naive),
        ("CZ, CNOT, expectation and seed kernels match dense operators", kernel_equivalence),
        ("checkpoint peak equals the stored-vector model for every divisor", memory_model_exactness),
        ("optimal block size formula", optimal_block_formula),
        ("peak storage grows as sqrt(d)", sqrt_scaling),
        ("traversal accounting", traversal_accounting),
        ("checkpointed gradients equal plain gradients", checkpointed_equality),
        ("fused throughput at least twice per-gate throughput", throughput),
        ("memory-saving ledger fidelity", mem_save_fidelity),
        ("determinism across runs and thread counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f().unwrap_or_else(|e| check(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2}: {tag} {name} [{}] ({secs:.1}s)", i + 1, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn to_c64<F: Real>(s: &BatchedState<F>) -> Vec<Complex64> {
    s.amplitudes().iter().map(|z| Complex64::new(z.re.f64(), z.im.f64())).collect()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The 20 randomized instances shared by criteria 1 and 2.
fn instances() -> Vec<(Circuit, BatchedState<f64>, PauliString)> {
    let mut rng = SplitMix64::new(0xacce);
    (0..20)
        .map(|i| {
            let n = [4, 6, 8, 10][i % 4];
            let d = [1, 2, 4][(i / 4) % 3];
            let batch = 1 + (rng.next_u64() % 8) as usize;
            let c = build_hea(n, d, rng.next_u64()).unwrap();
            let s = BatchedState::random(n, batch, rng.next_u64()).unwrap();
            (c, s, PauliString::repeating_ixyz(n).unwrap())
        })
        .collect()
}

fn gradient_correctness() -> Result<Outcome> {
    let mut e = Engine::new();
    let (mut worst_shift, mut worst_fd) = (0.0f64, 0.0f64);
    for (c, s, p) in instances() {
        let f = fuse_circuit(&c, FusionPolicy::default())?;
        let g = e.gradient(&f, &s, c.theta(), &p, LedgerMode::Full)?;
        let (shift, runs) = oracle::parameter_shift_gradient(&c, &s, c.theta(), &p);
        assert_eq!(runs, 2 * c.n_params());
        let fd = oracle::fd_gradient(&c, &s, c.theta(), &p, FD_STEP);
        worst_shift = worst_shift.max(oracle::max_rel_diff(&g.gradient, &shift));
        worst_fd = worst_fd.max(oracle::max_rel_diff(&g.gradient, &fd));
    }
    Ok(check(
        worst_shift <= GRAD_SHIFT_REL && worst_fd <= GRAD_FD_REL,
        format!("shift rel {worst_shift:.2e} <= {GRAD_SHIFT_REL:.0e}, fd rel {worst_fd:.2e} <= {GRAD_FD_REL:.0e}"),
    ))
}

fn fused_matches_naive() -> Result<Outcome> {
    let mut e = Engine::new();
    let (mut state_diff, mut grad_diff) = (0.0f64, 0.0f64);
    for (c, s, p) in instances() {
        let f = fuse_circuit(&c, FusionPolicy::default())?;
        let (fused_out, _) = e.forward(&f, &s, c.theta(), LedgerMode::Full)?;
        let naive_out = e.naive_forward(&c, &s, c.theta())?;
        state_diff = state_diff.max(fused_out.max_abs_diff(&naive_out));
        let fg = e.gradient(&f, &s, c.theta(), &p, LedgerMode::Full)?;
        let ng = e.naive_gradient(&c, &s, c.theta(), &p)?;
        grad_diff = grad_diff.max(max_abs(&fg.gradient, &ng.gradient));
    }
    Ok(check(
        state_diff <= FUSED_NAIVE_ABS && grad_diff <= FUSED_NAIVE_ABS,
        format!("state {state_diff:.2e}, gradient {grad_diff:.2e} <= {FUSED_NAIVE_ABS:.0e}"),
    ))
}

fn random_pairs(rng: &mut SplitMix64, n: usize, count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| {
            let c = (rng.next_u64() % n as u64) as usize;
            let t = (c + 1 + (rng.next_u64() % (n as u64 - 1)) as usize) % n;
            (c, t)
        })
        .collect()
}

fn random_label(rng: &mut SplitMix64, n: usize) -> String {
    (0..n).map(|_| ['I', 'X', 'Y', 'Z'][(rng.next_u64() % 4) as usize]).collect()
}

fn kernel_equivalence() -> Result<Outcome> {
    let mut rng = SplitMix64::new(0xb10c);
    let mut e = Engine::new();
    let mut worst = [0.0f64; 4];
    for trial in 0..KERNEL_TRIALS {
        let n = 2 + trial % 5;
        let batch = 1 + trial % 3;
        let s = BatchedState::<f64>::random(n, batch, rng.next_u64())?;
        let psi = to_c64(&s);
        let dim = 1 << n;
        let count = 1 + (rng.next_u64() % (2 * n as u64)) as usize;

        let cz = random_pairs(&mut rng, n, count);
        let gates: Vec<Gate> = cz.iter().map(|&(c, t)| Gate::cz(c, t)).collect();
        let dense = DenseOperator::gates(n, &gates, &[])?;
        let out = to_c64(&e.apply_fused_cz(&s, &FusedCzBlock::new(cz))?);
        let cnot = random_pairs(&mut rng, n, count);
        let gates: Vec<Gate> = cnot.iter().map(|&(c, t)| Gate::cnot(c, t)).collect();
        let dense_cnot = DenseOperator::gates(n, &gates, &[])?;
        let out_cnot = to_c64(&e.apply_fused_cnot(&s, &FusedCnotBlock::new(cnot))?);

        let p = PauliString::parse(&random_label(&mut rng, n))?;
        let dense_p = DenseOperator::pauli(&p)?;
        let ev = e.expectation(&s, &p)?;
        let seed = to_c64(&e.seed_adjoint(&s, &p)?);

        for (b, &value) in ev.iter().enumerate() {
            let r = b * dim..(b + 1) * dim;
            let sample = &psi[r.clone()];
            worst[0] = worst[0].max(max_diff(&out[r.clone()], &dense.apply(sample)));
            worst[1] = worst[1].max(max_diff(&out_cnot[r.clone()], &dense_cnot.apply(sample)));
            let op = dense_p.apply(sample);
            let dense_ev: f64 = sample.iter().zip(&op).map(|(a, b)| (a.conj() * b).re).sum();
            worst[2] = worst[2].max((value - dense_ev).abs());
            let doubled: Vec<Complex64> = op.iter().map(|z| z * 2.0).collect();
            worst[3] = worst[3].max(max_diff(&seed[r], &doubled));
        }
    }
    Ok(check(
        worst.iter().all(|&w| w <= KERNEL_ABS),
        format!(
            "cz {:.1e}, cnot {:.1e}, expectation {:.1e}, seed {:.1e} <= {KERNEL_ABS:.0e} over {KERNEL_TRIALS} trials",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn argmin(values: &[(usize, f64)]) -> (usize, f64) {
    values.iter().copied().fold((0, f64::INFINITY), |best, v| if v.1 < best.1 { v } else { best })
}

fn memory_model_exactness() -> Result<Outcome> {
    let d = 100;
    let mut mismatches = Vec::new();

    // Real checkpointed runs at n=8: three fused blocks per layer.
    let n = 8;
    let c = build_hea(n, d, 1)?;
    let f = fuse_circuit(&c, FusionPolicy::default())?;
    let s = BatchedState::<f32>::random(n, 1, 2)?;
    let p = PauliString::repeating_ixyz(n)?;
    let mut e = Engine::new();
    for b in divisors(d) {
        for mode in [LedgerMode::Full, LedgerMode::MemSave] {
            let r = run_checkpointed(&mut e, &f, &s, c.theta(), &p, b, mode)?;
            let model = model_fused(b, 3 * n, 9, mode, d)?;
            if r.peak_units() != model {
                mismatches.push(format!("n=8 {mode:?} b={b}: {} vs {model}", r.peak_units()));
            }
        }
        let r = run_checkpointed_naive(&mut e, &c, &s, c.theta(), &p, b)?;
        let model = model_native(b, 3 * n, n, d)?;
        if r.peak_units() != model {
            mismatches.push(format!("n=8 naive b={b}: {} vs {model}", r.peak_units()));
        }
    }

    // Twenty-qubit layer shape (60 rotations, 20 CZ, 7 fused blocks) via the
    // same schedule without amplitudes.
    let c20 = build_hea(20, d, 1)?;
    let f20 = fuse_circuit(&c20, FusionPolicy::default())?;
    let mut full = Vec::new();
    let mut half = Vec::new();
    let mut native = Vec::new();
    for b in divisors(d) {
        let pf = count_checkpointed(&f20, b, LedgerMode::Full)?.peak_units();
        let ph = count_checkpointed(&f20, b, LedgerMode::MemSave)?.peak_units();
        let pn = count_checkpointed_naive(&c20, b)?.peak_units();
        for (got, want, what) in [
            (pf, model_fused(b, 60, 9, LedgerMode::Full, d)?, "full"),
            (ph, model_fused(b, 60, 9, LedgerMode::MemSave, d)?, "mem_save"),
            (pn, model_native(b, 60, 20, d)?, "naive"),
        ] {
            if got != want {
                mismatches.push(format!("n=20 {what} b={b}: {got} vs {want}"));
            }
        }
        full.push((b, pf));
        half.push((b, ph));
        native.push((b, pn));
    }
    let (bf, pf) = argmin(&full);
    let (bh, ph) = argmin(&half);
    let (bn, _) = argmin(&native);
    let pass = mismatches.is_empty() && (bf, pf) == (4, 53.0) && (bh, ph) == (5, 37.5) && bn == 1;
    let mut detail = format!("argmin full b={bf} ({pf}), mem_save b={bh} ({ph}), naive b={bn}");
    if !mismatches.is_empty() {
        detail += &format!("; mismatches: {}", mismatches.join(", "));
    }
    Ok(check(pass, detail))
}

fn optimal_block_formula() -> Result<Outcome> {
    let full = optimal_block(7.0, 1000);
    let half = optimal_block(3.5, 1000);
    let r2 = |x: f64| (x * 100.0).round() / 100.0;
    let pass = r2(full) == 11.95 && r2(half) == 16.90 && full.round() == 12.0 && half.round() == 17.0;
    Ok(check(pass, format!("b*={full:.2} (7 units/layer), b*={half:.2} (3.5 units/layer)")))
}

fn sqrt_scaling() -> Result<Outcome> {
    let n = 6;
    let f_of = |d: usize| -> Result<(usize, f64)> {
        let c = build_hea(n, d, d as u64)?;
        let f = fuse_circuit(&c, FusionPolicy::default())?;
        let s = BatchedState::<f32>::basis(n, 1)?;
        let p = PauliString::repeating_ixyz(n)?;
        let per_layer = (3 * n).div_ceil(9) as f64;
        let b = nearest_divisor(d, optimal_block(per_layer, d));
        let r = run_checkpointed(&mut Engine::new(), &f, &s, c.theta(), &p, b, LedgerMode::Full)?;
        Ok((b, r.peak_units()))
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for d in [16, 64, 256] {
        let (b1, p1) = f_of(d)?;
        let (b4, p4) = f_of(4 * d)?;
        let ratio = p4 / p1;
        pass &= (ratio - 2.0).abs() <= 2.0 * SCALING_TOL;
        parts.push(format!("d={d}: {p1}@b={b1} -> {p4}@b={b4} ratio {ratio:.3}"));
    }
    Ok(check(pass, parts.join("; ")))
}

fn traversal_accounting() -> Result<Outcome> {
    let n = 20;
    let c = build_hea(n, 1, 7)?;
    let f = fuse_circuit(&c, FusionPolicy::default())?;
    let s = BatchedState::<f32>::basis(n, 1)?;
    let mut e = Engine::new();
    let (_, ledger) = e.forward(&f, &s, c.theta(), LedgerMode::Full)?;
    let fused_fwd = e.traversals().forward;
    e.reset_traversals();
    e.naive_forward(&c, &s, c.theta())?;
    let naive_fwd = e.traversals().forward;

    // One recompute forward per checkpoint block on top of the plain run.
    let d = 4;
    let c4 = build_hea(n, d, 7)?;
    let f4 = fuse_circuit(&c4, FusionPolicy::default())?;
    let p = PauliString::repeating_ixyz(n)?;
    let ops = f4.ops().len() as u64;
    let mut recompute_ok = true;
    for b in divisors(d) {
        e.reset_traversals();
        let r = run_checkpointed(&mut e, &f4, &s, c4.theta(), &p, b, LedgerMode::Full)?;
        recompute_ok &= r.traversals.forward == 2 * ops && r.traversals.backward == ops && r.traversals.observable == 2;
    }
    let pass = fused_fwd == 8 && ledger.len() == 7 && naive_fwd == 80 && recompute_ok;
    Ok(check(
        pass,
        format!(
            "fused {fused_fwd} ({} variational), naive {naive_fwd}, checkpoint forward = 2 x {ops} ops for every b: {recompute_ok}",
            ledger.len()
        ),
    ))
}

fn checkpointed_equality() -> Result<Outcome> {
    let c = build_hea(6, 8, 31)?;
    let f = fuse_circuit(&c, FusionPolicy::default())?;
    let s = BatchedState::<f64>::random(6, 4, 32)?;
    let p = PauliString::repeating_ixyz(6)?;
    let mut e = Engine::new();
    let plain = e.gradient(&f, &s, c.theta(), &p, LedgerMode::Full)?;
    let mut worst = 0.0f64;
    for b in [1, 2, 4, 8] {
        let r = run_checkpointed(&mut e, &f, &s, c.theta(), &p, b, LedgerMode::Full)?;
        worst = worst.max(max_abs(&r.gradient, &plain.gradient));
    }
    Ok(check(worst <= CHECKPOINT_ABS, format!("max abs {worst:.2e} <= {CHECKPOINT_ABS:.0e}")))
}

/// Median seconds per run of each closure. Reps alternate between the two so
/// background load on a shared machine hits both sides alike.
fn interleaved_medians(mut a: impl FnMut() -> Result<()>, mut b: impl FnMut() -> Result<()>) -> Result<(f64, f64)> {
    a()?;
    b()?;
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    for _ in 0..THROUGHPUT_REPS {
        let start = Instant::now();
        a()?;
        ta.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        b()?;
        tb.push(start.elapsed().as_secs_f64());
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    Ok((median(ta), median(tb)))
}

fn throughput() -> Result<Outcome> {
    let batch = 16;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [16, 18] {
        let c = build_hea(n, 1, 5)?;
        let f = fuse_circuit(&c, FusionPolicy::default())?;
        let s = BatchedState::<f32>::random(n, batch, 6)?;
        let p = PauliString::repeating_ixyz(n)?;
        let mut e = Engine::new();
        let (mut fused_fwd, mut naive_fwd) = (0, 0);
        let mut e2 = Engine::new();
        let (fused_secs, naive_secs) = interleaved_medians(
            || {
                let r = e.gradient(&f, &s, c.theta(), &p, LedgerMode::Full)?;
                fused_fwd = r.traversals.forward;
                Ok(())
            },
            || {
                let r = e2.naive_gradient(&c, &s, c.theta(), &p)?;
                naive_fwd = r.traversals.forward;
                Ok(())
            },
        )?;
        let (fused, naive) = (batch as f64 / fused_secs, batch as f64 / naive_secs);
        let ratio = fused / naive;
        pass &= ratio >= THROUGHPUT_RATIO;
        parts.push(format!(
            "n={n}: {fused:.1} vs {naive:.1} samples/s = {ratio:.2}x, forward traversals {}/{} = {:.1}x",
            naive_fwd,
            fused_fwd,
            naive_fwd as f64 / fused_fwd as f64
        ));
    }
    parts.push(format!("{} threads", Engine::new().threads()));
    Ok(check(pass, parts.join("; ")))
}

fn mem_save_rel<F: Real>(c: &Circuit, f: &FusedCircuit, s64: &BatchedState<f64>, p: &PauliString, reference: &[f64]) -> Result<(f64, bool)> {
    let s = BatchedState::<F>::from_f64(s64);
    let mut e = Engine::new();
    let full = e.gradient(f, &s, c.theta(), p, LedgerMode::Full)?;
    let half = e.gradient(f, &s, c.theta(), p, LedgerMode::MemSave)?;
    let halved = half.ledger_half_units * 2 == full.ledger_half_units && half.ledger_entries == full.ledger_entries;
    Ok((oracle::max_rel_diff(&half.gradient, reference), halved))
}

fn mem_save_fidelity() -> Result<Outcome> {
    let mut worst = (0.0f64, 0.0f64);
    let mut halved = true;
    for seed in 0..3 {
        let c = build_hea(10, 10, 100 + seed)?;
        let f = fuse_circuit(&c, FusionPolicy::default())?;
        let s = BatchedState::<f64>::random(10, 2, 200 + seed)?;
        let p = PauliString::repeating_ixyz(10)?;
        let (reference, _) = oracle::parameter_shift_gradient(&c, &s, c.theta(), &p);
        let (r32, h32) = mem_save_rel::<f32>(&c, &f, &s, &p, &reference)?;
        let (r64, h64) = mem_save_rel::<f64>(&c, &f, &s, &p, &reference)?;
        worst = (worst.0.max(r32), worst.1.max(r64));
        halved &= h32 && h64;
    }
    Ok(check(
        worst.0 <= MEM_SAVE_REL_SINGLE && worst.1 <= MEM_SAVE_REL_DOUBLE && halved,
        format!(
            "single/bf16 rel {:.2e} <= {MEM_SAVE_REL_SINGLE:.0e}, double/f32 rel {:.2e} <= {MEM_SAVE_REL_DOUBLE:.0e}, units halved: {halved}",
            worst.0, worst.1
        ),
    ))
}

fn determinism() -> Result<Outcome> {
    let c = build_hea(14, 3, 41)?;
    let f = fuse_circuit(&c, FusionPolicy::default())?;
    let s = BatchedState::<f64>::random(14, 4, 42)?;
    let p = PauliString::repeating_ixyz(14)?;
    let run = |threads: usize| Engine::with_threads(Some(threads)).gradient(&f, &s, c.theta(), &p, LedgerMode::Full);
    let a = run(4)?;
    let b = run(4)?;
    let same = a.gradient == b.gradient && a.traversals == b.traversals && a.per_sample == b.per_sample;
    let one = run(1)?;
    let rel = oracle::max_rel_diff(&one.gradient, &a.gradient);
    let a_ck = run_checkpointed(&mut Engine::with_threads(Some(4)), &f, &s, c.theta(), &p, 3, LedgerMode::MemSave)?;
    let b_ck = run_checkpointed(&mut Engine::with_threads(Some(4)), &f, &s, c.theta(), &p, 3, LedgerMode::MemSave)?;
    let same_ck = a_ck == b_ck;
    Ok(check(
        same && same_ck && rel <= THREAD_REL,
        format!("repeat bit-identical: {}, 1 vs 4 threads rel {rel:.2e} <= {THREAD_REL:.0e}", same && same_ck),
    ))
}
