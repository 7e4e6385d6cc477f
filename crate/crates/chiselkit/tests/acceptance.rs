//! Release acceptance suite: one test per shipping criterion, each ending in
//! a single `criterion NN PASS — …` line carrying the measured quantities, so
//! `cargo test --test acceptance -- --nocapture` doubles as a release report.
//!
//! Every tolerance is pinned locally rather than imported from the library:
//! a change to a library default cannot silently weaken this gate.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chiselkit::chisel::Chisel;
use chiselkit::derivation::{
    exact_nullspace, exact_nullspace_with, residual, scalar_subspace, solve_derivation,
    universal_rescale, DerivationTuple, SolveOptions, Solution, SystemOperator, Verdict,
};
use chiselkit::multiarray::MultiArray;
use chiselkit::pattern::{
    conformance, delta_pattern, exhibited_pattern, patterns_equivalent, DeltaSpec,
};
use chiselkit::spectral::{decompose, order_blocks, AxisDecomposition};
use chiselkit::synthesis::{
    add_noise, build_tensor, curve, diagonal_blocks, face_blocks, sample_delta, scramble,
    DeltaRule, Fill, GroundTruth, PatternSource, SynthesisSpec,
};
use chiselkit::C64;

/// Verdict margin demanded on exact scrambled instances: the non-scalar null
/// direction sits at working precision, two orders below the library's
/// default verdict threshold.
const EXACT_SV_RATIO: f64 = 1e-10;
/// Block-mass threshold for exhibiting/conformance on exact instances.
const EXACT_BLOCK_EPS: f64 = 1e-8;
/// Pattern-membership tolerance on exact instances.
const EXACT_PATTERN_TOL: f64 = 1e-6;
/// Eigenvalue clustering tolerance for noise-free candidates.
const EIG_TOL: f64 = 1e-6;
/// Conditioning cap for the hiding bases used by every scrambled instance.
const SCRAMBLE_CAP: f64 = 1e4;
/// Clustering and membership tolerances for noisy candidates: wide enough
/// that 1e-6 and 1e-4 noise cannot split a true block, tight enough that
/// 1e-2 noise visibly degrades the recovery. Held fixed across all noise
/// levels so the leakage trend reflects the data, not the knobs.
const NOISY_EIG_TOL: f64 = 1e-3;
const NOISY_PATTERN_TOL: f64 = 1e-3;
/// Conformance block threshold at the noisy levels.
const NOISY_BLOCK_EPS: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Shared instance builders
// ---------------------------------------------------------------------------

/// Build one hidden instance: fill the spec with `seed`, then scramble every
/// axis with an independent stream under the standard conditioning cap.
fn scrambled_instance(mut spec: SynthesisSpec, seed: u64) -> (MultiArray, GroundTruth) {
    spec.seed = seed;
    let (plain, truth) = build_tensor(&spec).expect("synthesis");
    let (hidden, _bases) = scramble(&plain, seed ^ 0x5c4a_317b, SCRAMBLE_CAP).expect("scramble");
    (hidden, truth)
}

/// Build one noisy hidden instance: perturb the structured tensor before the
/// hiding bases are applied — a continuous deformation of the instance
/// itself, which is what the fidelity metric measures. Noise injected after
/// scrambling would instead be amplified by the skew block projections of
/// the recovery frame, so the leakage would score the scramble's
/// conditioning rather than the method's degradation.
fn deformed_instance(mut spec: SynthesisSpec, seed: u64, level: f64, noise_seed: u64) -> MultiArray {
    spec.seed = seed;
    let (plain, _truth) = build_tensor(&spec).expect("synthesis");
    let deformed = if level > 0.0 {
        add_noise(&plain, level, noise_seed).expect("noise")
    } else {
        plain
    };
    let (hidden, _bases) = scramble(&deformed, seed ^ 0x5c4a_317b, SCRAMBLE_CAP).expect("scramble");
    hidden
}

/// Solve → decompose → order: the recovery pipeline every roundtrip
/// criterion exercises.
fn recover(
    t: &MultiArray,
    c: &Chisel,
    opts: &SolveOptions,
    eig_tol: f64,
) -> (Solution, AxisDecomposition, DeltaSpec) {
    let sol = solve_derivation(t, c, opts).expect("solve");
    let (dec, delta) = decompose(sol.tuple.matrices(), eig_tol).expect("decompose");
    let (dec, delta) = order_blocks(dec, delta).expect("order");
    (sol, dec, delta)
}

fn engaged_flags(c: &Chisel) -> Vec<bool> {
    let mut flags = vec![false; c.ncols()];
    for a in c.engaged_axes() {
        flags[a] = true;
    }
    flags
}

/// A randomized carved instance together with the operator tuple its
/// labeling induces.
struct CarvedInstance {
    tensor: MultiArray,
    chisel: Chisel,
    block_tuple: DerivationTuple,
}

/// Carve a random instance for a fixed chisel: small random dims and parts,
/// lattice labeling. Returns `None` when the seed draws an infeasible
/// labeling, or one that is zero on every engaged axis (which would make the
/// induced tuple vanish and its residual undefined).
fn carved_with(chisel: Chisel, seed: u64) -> Option<CarvedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1ce);
    let dims: Vec<usize> = (0..3).map(|_| rng.gen_range(4..=6)).collect();
    let parts: Vec<usize> = (0..3).map(|_| rng.gen_range(2..=3)).collect();
    let delta = sample_delta(&chisel, &parts, &DeltaRule::RandomLattice, seed).ok()?;
    let spec = SynthesisSpec {
        dims,
        parts,
        block_sizes: None,
        source: PatternSource::Carved {
            chisel: chisel.clone(),
            rule: DeltaRule::Explicit(delta),
        },
        fill: Fill::Uniform,
        seed,
    };
    let (tensor, truth) = build_tensor(&spec).expect("synthesis");
    let block_tuple = DerivationTuple::block_eigenvalue(
        truth.delta.as_ref().expect("carved truth carries its labeling"),
        &truth.block_sizes,
        &engaged_flags(&chisel),
    )
    .ok()?;
    if block_tuple.norm() == 0.0 {
        return None;
    }
    Some(CarvedInstance { tensor, chisel, block_tuple })
}

/// One instance per attempt, cycling through the four chisel families.
fn carved_instance(kind: usize, seed: u64) -> Option<CarvedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc415e1);
    let chisel = match kind % 4 {
        0 => Chisel::universal(3).expect("chisel"),
        1 => {
            let pairs = [(0, 1), (0, 2), (1, 2)];
            let (a, b) = pairs[rng.gen_range(0..pairs.len())];
            Chisel::adjoint(3, a, b).expect("chisel")
        }
        2 => Chisel::centroid3(),
        _ => {
            let subsets: [&[usize]; 7] =
                [&[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];
            Chisel::tucker(subsets[rng.gen_range(0..subsets.len())], 3).expect("chisel")
        }
    };
    carved_with(chisel, seed)
}

/// Fifty feasible carved instances spanning the four chisel families.
fn carved_suite() -> Vec<CarvedInstance> {
    let mut suite = Vec::new();
    let mut attempt = 0u64;
    while suite.len() < 50 {
        assert!(attempt < 500, "could not draw 50 feasible carved instances");
        if let Some(inst) = carved_instance((attempt % 4) as usize, 6000 + attempt) {
            suite.push(inst);
        }
        attempt += 1;
    }
    suite
}

/// Relative mass of a tuple outside the scalar-derivation subspace, measured
/// in the stacked coordinate domain.
fn nonscalar_component(
    op: &SystemOperator<'_>,
    scalars: &DMatrix<f64>,
    tuple: &DerivationTuple,
) -> f64 {
    let v = DVector::from_vec(op.pack(tuple).expect("pack"));
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return 0.0;
    }
    let mut rest = v.clone();
    for k in 0..scalars.ncols() {
        let col = scalars.column(k);
        let coeff: C64 = v.iter().zip(col.iter()).map(|(z, &s)| z * s).sum();
        for (r, &s) in col.iter().enumerate() {
            rest[r] -= coeff * s;
        }
    }
    rest.norm() / vnorm
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

/// Criterion 1: the sum-rule worked example enumerates exactly its five
/// block tuples, and does so in under a millisecond.
#[test]
fn criterion_01_worked_example_pattern_is_exact_and_instant() {
    let c = Chisel::from_rows(vec![vec![1.0, 1.0, -1.0]]).expect("chisel");
    let delta = DeltaSpec::from_real(vec![
        vec![0.5, 1.0],
        vec![0.5, 1.0, 2.0],
        vec![1.0, 1.5, 2.0, 2.5],
    ])
    .expect("labeling");
    let expected: BTreeSet<Vec<usize>> = [
        vec![0, 0, 0],
        vec![0, 1, 1],
        vec![0, 2, 3],
        vec![1, 0, 1],
        vec![1, 1, 2],
    ]
    .into_iter()
    .collect();
    // Warm once so the timed call measures the enumeration, not first-touch
    // allocation.
    let _ = delta_pattern(&c, &delta, EXACT_PATTERN_TOL).expect("pattern");
    let started = Instant::now();
    let p = delta_pattern(&c, &delta, EXACT_PATTERN_TOL).expect("pattern");
    let elapsed = started.elapsed();
    let got: BTreeSet<Vec<usize>> = p.tuples().cloned().collect();
    assert_eq!(p.k(), &[2, 3, 4][..]);
    assert_eq!(got, expected, "enumerated pattern differs from the worked example");
    assert!(elapsed.as_micros() < 1000, "enumeration took {elapsed:?}, budget is 1 ms");
    println!(
        "criterion 01 PASS — worked example enumerates exactly \
         {{(1,1,1),(1,2,2),(1,3,4),(2,1,2),(2,2,3)}} (1-based) in {elapsed:?}"
    );
}

/// Criterion 2: scrambled diagonal-block instances round-trip under the
/// centroid chisel — candidate verdict with a deep null, conforming
/// decomposition, leakage at working precision, and the hidden diagonal
/// recovered up to block relabeling — within a minute for ten seeds.
#[test]
fn criterion_02_scrambled_diagonal_blocks_round_trip() {
    let started = Instant::now();
    let c = Chisel::centroid3();
    let mut worst_ratio = 0.0f64;
    let mut worst_leakage = 0.0f64;
    for seed in 0..10u64 {
        let spec = diagonal_blocks(&[10, 12, 14], &[3, 3, 3]).expect("preset");
        let (hidden, truth) = scrambled_instance(spec, 200 + seed);
        let (sol, dec, delta) = recover(&hidden, &c, &SolveOptions::default(), EIG_TOL);
        assert_eq!(sol.verdict, Verdict::PatternCandidate, "seed {seed}: no candidate");
        let ratio = sol.report.sigma_e_plus_1() / sol.report.sigma_max;
        assert!(ratio <= EXACT_SV_RATIO, "seed {seed}: sigma ratio {ratio:.3e}");
        let conf = conformance(&hidden, &dec, &c, &delta, EXACT_BLOCK_EPS, EXACT_PATTERN_TOL)
            .expect("conformance");
        assert!(conf.conforms, "seed {seed}: recovered decomposition does not conform");
        assert!(conf.leakage <= 1e-8, "seed {seed}: leakage {:.3e}", conf.leakage);
        let shown = exhibited_pattern(&hidden, &dec, EXACT_BLOCK_EPS).expect("exhibited");
        let relabeling = patterns_equivalent(&truth.pattern, &shown).expect("comparable");
        assert!(relabeling.is_some(), "seed {seed}: recovered pattern is not the hidden diagonal");
        worst_ratio = worst_ratio.max(ratio);
        worst_leakage = worst_leakage.max(conf.leakage);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "roundtrip took {elapsed:.1}s, budget is 60s");
    println!(
        "criterion 02 PASS — 10 scrambled diagonal instances recovered; worst sigma ratio \
         {worst_ratio:.3e} ≤ 1e-10, worst leakage {worst_leakage:.3e} ≤ 1e-8, total {elapsed:.1}s ≤ 60s"
    );
}

/// Criterion 3: scrambled face-block instances round-trip under the adjoint
/// chisel with the same margins, and the disengaged third axis comes back as
/// a single block.
#[test]
fn criterion_03_scrambled_face_blocks_round_trip() {
    let c = Chisel::adjoint(3, 0, 1).expect("chisel");
    let mut worst_ratio = 0.0f64;
    let mut worst_leakage = 0.0f64;
    for seed in 0..10u64 {
        let spec = face_blocks(&[10, 12, 14], 3, 0, 1).expect("preset");
        let (hidden, truth) = scrambled_instance(spec, 300 + seed);
        let (sol, dec, delta) = recover(&hidden, &c, &SolveOptions::default(), EIG_TOL);
        assert_eq!(sol.verdict, Verdict::PatternCandidate, "seed {seed}: no candidate");
        let ratio = sol.report.sigma_e_plus_1() / sol.report.sigma_max;
        assert!(ratio <= EXACT_SV_RATIO, "seed {seed}: sigma ratio {ratio:.3e}");
        assert_eq!(
            dec.axes()[2].block_count(),
            1,
            "seed {seed}: disengaged axis must stay a single block"
        );
        let conf = conformance(&hidden, &dec, &c, &delta, EXACT_BLOCK_EPS, EXACT_PATTERN_TOL)
            .expect("conformance");
        assert!(conf.conforms, "seed {seed}: recovered decomposition does not conform");
        assert!(conf.leakage <= 1e-8, "seed {seed}: leakage {:.3e}", conf.leakage);
        let shown = exhibited_pattern(&hidden, &dec, EXACT_BLOCK_EPS).expect("exhibited");
        let relabeling = patterns_equivalent(&truth.pattern, &shown).expect("comparable");
        assert!(relabeling.is_some(), "seed {seed}: recovered pattern is not the hidden face set");
        worst_ratio = worst_ratio.max(ratio);
        worst_leakage = worst_leakage.max(conf.leakage);
    }
    println!(
        "criterion 03 PASS — 10 scrambled face instances recovered with a single block on the \
         disengaged axis; worst sigma ratio {worst_ratio:.3e} ≤ 1e-10, worst leakage \
         {worst_leakage:.3e} ≤ 1e-8"
    );
}

/// Criterion 4: the sum-rule curve with near-1-dimensional blocks survives
/// scrambling — the universal solve pins the sheet with leakage ≤ 1e-6.
#[test]
fn criterion_04_scrambled_curve_round_trips_with_tiny_leakage() {
    let c = Chisel::universal(3).expect("chisel");
    let dims = [8usize, 10, 12];
    let mut worst_leakage = 0.0f64;
    for seed in 0..10u64 {
        let spec = curve(&dims, &dims).expect("preset");
        let (hidden, _truth) = scrambled_instance(spec, 400 + seed);
        let (sol, dec, delta) = recover(&hidden, &c, &SolveOptions::default(), EIG_TOL);
        assert_eq!(sol.verdict, Verdict::PatternCandidate, "seed {seed}: no candidate");
        assert_eq!(dec.k(), dims.to_vec(), "seed {seed}: blocks are not near-1-dimensional");
        let conf = conformance(&hidden, &dec, &c, &delta, EXACT_BLOCK_EPS, EXACT_PATTERN_TOL)
            .expect("conformance");
        assert!(conf.leakage <= 1e-6, "seed {seed}: leakage {:.3e}", conf.leakage);
        worst_leakage = worst_leakage.max(conf.leakage);
    }
    println!(
        "criterion 04 PASS — 10 scrambled curve instances at 1-dimensional blocks; worst \
         leakage {worst_leakage:.3e} ≤ 1e-6"
    );
}

/// Criterion 5: generic dense tensors are rejected — no-pattern verdict and
/// a derivation space that is exactly the two scalar directions.
#[test]
fn criterion_05_generic_tensors_are_rejected_with_scalars_only() {
    let c = Chisel::universal(3).expect("chisel");
    let mut smallest_ratio = f64::INFINITY;
    for run in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + run);
        let values: Vec<f64> = (0..216).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = MultiArray::from_real(vec![6, 6, 6], values).expect("tensor");
        let sol = solve_derivation(&t, &c, &SolveOptions::default()).expect("solve");
        assert_eq!(sol.verdict, Verdict::NoPattern, "run {run}: generic tensor flagged");
        smallest_ratio = smallest_ratio.min(sol.report.sigma_e_plus_1() / sol.report.sigma_max);
        let basis = exact_nullspace_with(&t, &c, 1e-10).expect("nullspace");
        assert_eq!(basis.len(), 2, "run {run}: derivation dimension {} ≠ 2", basis.len());
    }
    println!(
        "criterion 05 PASS — 20 generic 6×6×6 tensors rejected; derivation space is the two \
         scalars at tolerance 1e-10, smallest sigma ratio seen {smallest_ratio:.3e}"
    );
}

/// Criterion 6: across 50 randomized carved instances spanning the four
/// chisel families, the operator tuple induced by the labeling is a
/// derivation to 1e-12.
#[test]
fn criterion_06_block_eigenvalue_tuples_are_derivations() {
    let suite = carved_suite();
    let mut worst = 0.0f64;
    for inst in &suite {
        let r = residual(&inst.tensor, &inst.chisel, &inst.block_tuple).expect("residual");
        assert!(r <= 1e-12, "induced tuple residual {r:.3e} exceeds 1e-12");
        worst = worst.max(r);
    }
    println!(
        "criterion 06 PASS — {} carved instances; worst induced-tuple residual {worst:.3e} ≤ 1e-12",
        suite.len()
    );
}

/// Criterion 7: on the same instances, decomposing a genuinely non-scalar
/// nullspace element exhibits only blocks inside the pattern carved by the
/// decomposition's own labeling. Resonant instances admit nilpotent
/// derivations with no eigenbasis, which `decompose` rightly refuses, so
/// each instance uses its most non-scalar element that decomposes, falling
/// back to the labeling-induced tuple — itself an exact nullspace element —
/// when every basis vector is defective.
#[test]
fn criterion_07_nullspace_elements_decompose_inside_the_carved_pattern() {
    let suite = carved_suite();
    let mut smallest_nonscalar = f64::INFINITY;
    let mut fallbacks = 0usize;
    for inst in &suite {
        let op = SystemOperator::new(&inst.tensor, &inst.chisel).expect("operator");
        let scalars = scalar_subspace(&inst.chisel, inst.tensor.dims()).expect("scalar basis");
        let basis = exact_nullspace(&inst.tensor, &inst.chisel).expect("nullspace");
        let mut ranked: Vec<(f64, &DerivationTuple)> = basis
            .iter()
            .map(|el| (nonscalar_component(&op, &scalars, el), el))
            .filter(|(ns, _)| *ns >= 1e-6)
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        assert!(!ranked.is_empty(), "no nullspace element clears the non-scalar floor");
        let mut pick = None;
        for (ns, el) in &ranked {
            if let Ok(pair) = decompose(el.matrices(), EIG_TOL) {
                pick = Some((*ns, pair));
                break;
            }
        }
        let (nonscalar, (dec, delta)) = match pick {
            Some(found) => found,
            None => {
                let r =
                    residual(&inst.tensor, &inst.chisel, &inst.block_tuple).expect("residual");
                assert!(r <= 1e-10, "fallback tuple is outside the nullspace: residual {r:.3e}");
                let ns = nonscalar_component(&op, &scalars, &inst.block_tuple);
                assert!(ns >= 1e-6, "fallback tuple is scalar ({ns:.3e})");
                fallbacks += 1;
                (ns, decompose(inst.block_tuple.matrices(), EIG_TOL).expect("decompose"))
            }
        };
        smallest_nonscalar = smallest_nonscalar.min(nonscalar);
        let (dec, delta) = order_blocks(dec, delta).expect("order");
        let shown = exhibited_pattern(&inst.tensor, &dec, EXACT_BLOCK_EPS).expect("exhibited");
        let target = delta_pattern(&inst.chisel, &delta, EXACT_PATTERN_TOL).expect("carved");
        for tuple in shown.tuples() {
            assert!(target.contains(tuple), "exhibited block {tuple:?} escapes the carved pattern");
        }
    }
    println!(
        "criterion 07 PASS — {} decomposed nullspace elements stay inside their carved \
         patterns ({} defective instances used the induced tuple; smallest non-scalar \
         component used {smallest_nonscalar:.3e})",
        suite.len(),
        fallbacks
    );
}

/// Criterion 8: derivations of the two-row centroid-form chisel rescale to
/// derivations of the universal chisel with residual ≤ 1e-10.
#[test]
fn criterion_08_centroid_form_derivations_rescale_to_universal() {
    let c_pair =
        Chisel::from_rows(vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).expect("chisel");
    let c_uni = Chisel::universal(3).expect("chisel");
    let mut produced = 0usize;
    let mut worst = 0.0f64;
    let mut seed = 8000u64;
    while produced < 20 {
        assert!(seed < 8400, "could not draw 20 feasible instances");
        let Some(inst) = carved_with(c_pair.clone(), seed) else {
            seed += 1;
            continue;
        };
        seed += 1;
        let rescaled = universal_rescale(&c_pair, &inst.block_tuple).expect("rescale");
        let r = residual(&inst.tensor, &c_uni, &rescaled).expect("residual");
        assert!(r <= 1e-10, "rescaled tuple has universal residual {r:.3e}");
        worst = worst.max(r);
        produced += 1;
    }
    println!(
        "criterion 08 PASS — 20 rescaled derivations; worst universal residual {worst:.3e} ≤ 1e-10"
    );
}

/// Criterion 9: classification of nonzero 3-column chisels is total, and
/// invariant under row mixing, column scaling, and column permutation.
#[test]
fn criterion_09_classification_is_total_and_dressing_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scales = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..1000 {
        let c = loop {
            let m = rng.gen_range(1..=3);
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..3).map(|_| rng.gen_range(-3i32..=3) as f64).collect())
                .collect();
            if let Ok(c) = Chisel::from_rows(rows) {
                break c;
            }
        };
        let kind = c.classify3().expect("classification is total").kind;
        *counts.entry(format!("{kind:?}")).or_default() += 1;
        for _ in 0..10 {
            // Invertible integer row mix; small entries keep the arithmetic
            // exact so the dressed chisel is equivalent, not just close.
            let mix = loop {
                let m = DMatrix::<f64>::from_fn(c.nrows(), c.nrows(), |_, _| {
                    rng.gen_range(-2i32..=2) as f64
                });
                if m.clone().lu().determinant().abs() > 0.5 {
                    break m;
                }
            };
            let mixed = &mix * c.matrix();
            let perm = perms[rng.gen_range(0..perms.len())];
            let scale: Vec<f64> =
                (0..3).map(|_| scales[rng.gen_range(0..scales.len())]).collect();
            let rows: Vec<Vec<f64>> = (0..mixed.nrows())
                .map(|i| (0..3).map(|p| scale[p] * mixed[(i, perm[p])]).collect())
                .collect();
            let dressed = Chisel::from_rows(rows).expect("dressed chisel");
            let dressed_kind = dressed.classify3().expect("classification is total").kind;
            assert_eq!(dressed_kind, kind, "class changed under re-dressing");
        }
    }
    let spread: Vec<String> = counts.iter().map(|(k, n)| format!("{k}×{n}")).collect();
    println!(
        "criterion 09 PASS — 1000 chisels classified, each stable under 10 re-dressings; \
         classes seen: {}",
        spread.join(", ")
    );
}

/// Criterion 10: on two-part diagonal instances the derivation space is
/// exactly one dimension beyond the scalars, so the candidate is unique and
/// the ordered decomposition is identical across solver seeds. A three-part
/// control shows why the hypothesis matters: its derivation space has one
/// scalar per block and outgrows the uniqueness bound.
#[test]
fn criterion_10_nondegenerate_orderings_are_seed_independent() {
    let c = Chisel::centroid3();
    let e = c.scalar_nullspace().1;
    assert_eq!(e, 1);
    for seed in 0..10u64 {
        let spec = diagonal_blocks(&[10, 12, 14], &[2, 2, 2]).expect("preset");
        let (hidden, _truth) = scrambled_instance(spec, 1000 + seed);
        let basis = exact_nullspace(&hidden, &c).expect("nullspace");
        assert_eq!(
            basis.len(),
            e + 1,
            "seed {seed}: uniqueness needs derivation dimension e+1"
        );
        let runs: Vec<(AxisDecomposition, BTreeSet<Vec<usize>>)> = [0u64, 42]
            .iter()
            .map(|&solver_seed| {
                let opts = SolveOptions { seed: solver_seed, ..SolveOptions::default() };
                let (sol, dec, _delta) = recover(&hidden, &c, &opts, EIG_TOL);
                assert_eq!(sol.verdict, Verdict::PatternCandidate, "seed {seed}: no candidate");
                let shown = exhibited_pattern(&hidden, &dec, EXACT_BLOCK_EPS).expect("exhibited");
                (dec, shown.tuples().cloned().collect())
            })
            .collect();
        let (dec_a, tuples_a) = &runs[0];
        let (dec_b, tuples_b) = &runs[1];
        for (axis_a, axis_b) in dec_a.axes().iter().zip(dec_b.axes()) {
            assert_eq!(axis_a.block_sizes(), axis_b.block_sizes(), "seed {seed}: sizes differ");
            for (ra, rb) in axis_a.representatives().iter().zip(axis_b.representatives()) {
                assert!(
                    (ra - rb).norm() <= 1e-12 * (1.0 + ra.norm()),
                    "seed {seed}: orderings disagree across solver seeds"
                );
            }
        }
        assert_eq!(tuples_a, tuples_b, "seed {seed}: exhibited tuples differ");
    }
    // Three parts per axis: one scalar per diagonal block, so the derivation
    // space has dimension 3 > e+1 and uniqueness genuinely needs the
    // hypothesis above.
    let spec = diagonal_blocks(&[10, 12, 14], &[3, 3, 3]).expect("preset");
    let (hidden, _) = scrambled_instance(spec, 77);
    let control_dim = exact_nullspace(&hidden, &c).expect("nullspace").len();
    assert_eq!(control_dim, 3);
    println!(
        "criterion 10 PASS — 10 two-part instances with derivation dimension e+1 = 2: ordered \
         blocks and exhibited tuples identical across solver seeds 0 and 42 (three-part \
         control has dimension {control_dim}, outside the uniqueness hypothesis)"
    );
}

/// Criterion 11: commutators of nullspace elements stay in the nullspace —
/// the derivation space closes as a Lie algebra, to 1e-10 after scaling by
/// the factors' norms.
#[test]
fn criterion_11_nullspace_commutators_stay_in_the_nullspace() {
    let c = Chisel::universal(3).expect("chisel");
    let mut produced = 0usize;
    let mut pairs_checked = 0usize;
    let mut worst = 0.0f64;
    let mut seed = 11_000u64;
    while produced < 10 {
        assert!(seed < 11_400, "could not draw 10 feasible universal instances");
        let Some(inst) = carved_with(c.clone(), seed) else {
            seed += 1;
            continue;
        };
        seed += 1;
        let op = SystemOperator::new(&inst.tensor, &c).expect("operator");
        let tnorm = inst.tensor.frobenius_norm();
        let basis = exact_nullspace(&inst.tensor, &c).expect("nullspace");
        for i in 0..basis.len() {
            for j in (i + 1)..basis.len() {
                let bracket = basis[i].commutator(&basis[j]).expect("commutator");
                if bracket.norm() == 0.0 {
                    continue;
                }
                let image = op.apply(&op.pack(&bracket).expect("pack")).expect("apply");
                let rnorm = image.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let scaled = rnorm / (basis[i].norm() * basis[j].norm() * tnorm);
                assert!(scaled <= 1e-10, "commutator residual {scaled:.3e} exceeds 1e-10");
                worst = worst.max(scaled);
                pairs_checked += 1;
            }
        }
        produced += 1;
    }
    println!(
        "criterion 11 PASS — {pairs_checked} commutator pairs across 10 instances; worst \
         scaled residual {worst:.3e} ≤ 1e-10"
    );
}

/// Criterion 12: noise degrades the recovery gracefully — at 1e-6 the
/// decomposition still conforms with leakage ≤ 1e-4, at 1e-2 the pipeline
/// still completes, and the median leakage never decreases as noise grows.
#[test]
fn criterion_12_noise_degrades_leakage_monotonically() {
    let c = Chisel::centroid3();
    let levels = [0.0, 1e-6, 1e-4, 1e-2];
    let mut medians = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let mut leakages = Vec::with_capacity(10);
        for seed in 0..10u64 {
            let spec = diagonal_blocks(&[10, 12, 14], &[3, 3, 3]).expect("preset");
            let noisy =
                deformed_instance(spec, 1200 + seed, level, 7000 + 100 * li as u64 + seed);
            let (_sol, dec, delta) = recover(&noisy, &c, &SolveOptions::default(), NOISY_EIG_TOL);
            let conf = conformance(&noisy, &dec, &c, &delta, NOISY_BLOCK_EPS, NOISY_PATTERN_TOL)
                .expect("conformance");
            if level == 1e-6 {
                assert!(conf.conforms, "seed {seed}: conformance lost at 1e-6 noise");
                assert!(
                    conf.leakage <= 1e-4,
                    "seed {seed}: leakage {:.3e} at 1e-6 noise",
                    conf.leakage
                );
            }
            leakages.push(conf.leakage);
        }
        medians.push(median(leakages));
    }
    for pair in medians.windows(2) {
        assert!(pair[1] >= pair[0], "median leakage decreased across levels: {medians:?}");
    }
    println!(
        "criterion 12 PASS — median leakage across noise levels {{0, 1e-6, 1e-4, 1e-2}}: \
         {:.3e}, {:.3e}, {:.3e}, {:.3e} (nondecreasing; every 1e-6 run conforms with leakage ≤ 1e-4)",
        medians[0], medians[1], medians[2], medians[3]
    );
}
