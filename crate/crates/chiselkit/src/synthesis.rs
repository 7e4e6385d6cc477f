//! Synthetic benchmark generation: carve a null pattern out of a chisel and
//! an eigenvalue labeling, fill the on-pattern blocks with seeded random
//! data, scramble the result with random basis changes, and optionally add
//! noise — the full synthesize → scramble → recover loop used to validate
//! the detector end-to-end.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chisel::Chisel;
use crate::error::{Error, Result};
use crate::multiarray::{Field, MultiArray};
use crate::pattern::{delta_pattern, DeltaSpec, NullPattern};
use crate::{jsonfmt, C64};

/// Default conditioning cap for scrambling matrices.
pub const DEFAULT_SCRAMBLE_CAP: f64 = 1e4;

/// Membership tolerance used when carving Δ(C, δ) from sampled deltas.
const CARVE_TOL: f64 = 1e-9;

/// A filled block is resampled when its norm falls below this fraction of
/// the expected norm, so every on-pattern block is genuinely nonzero.
const BLOCK_NORM_MIN_REL: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Spec types
// ---------------------------------------------------------------------------

/// Distribution for on-pattern entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// i.i.d. uniform on (−1, 1).
    Uniform,
    /// i.i.d. standard gaussian.
    Gaussian,
}

/// How the eigenvalue labeling δ is produced.
#[derive(Debug, Clone)]
pub enum DeltaRule {
    /// δₐ(i) = i/2 on every axis (0-based block index). Always feasible:
    /// the all-zeros tuple satisfies every chisel row.
    Ramp,
    /// Distinct small random integers per axis, resampled until Δ(C, δ) is
    /// nonempty.
    RandomLattice,
    /// A caller-supplied labeling.
    Explicit(DeltaSpec),
}

/// Where the pattern comes from: carved out of a chisel, or given directly.
#[derive(Debug, Clone)]
pub enum PatternSource {
    /// Δ(C, δ) with δ produced by the rule.
    Carved { chisel: Chisel, rule: DeltaRule },
    /// An explicit tuple set.
    Explicit(NullPattern),
}

/// Everything needed to build one benchmark tensor.
#[derive(Debug, Clone)]
pub struct SynthesisSpec {
    /// Axis dimensions (d₁, …, d_ℓ).
    pub dims: Vec<usize>,
    /// Part counts (k₁, …, k_ℓ).
    pub parts: Vec<usize>,
    /// Block sizes per axis; `None` means near-equal split of each dₐ.
    pub block_sizes: Option<Vec<Vec<usize>>>,
    /// Pattern source.
    pub source: PatternSource,
    /// Entry distribution.
    pub fill: Fill,
    /// RNG seed; identical spec+seed reproduces the tensor bit-for-bit
    /// within one build of this library.
    pub seed: u64,
}

/// What [`build_tensor`] promises about its output.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// The carved pattern (with chisel/delta provenance when available).
    pub pattern: NullPattern,
    /// The labeling that carved it, when one exists.
    pub delta: Option<DeltaSpec>,
    /// Block sizes per axis.
    pub block_sizes: Vec<Vec<usize>>,
}

/// Near-equal split of a dimension into k parts (first parts get the
/// remainder).
pub fn near_equal_split(d: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > d {
        return Err(Error::Spec(format!("cannot split dimension {d} into {k} nonempty parts")));
    }
    let base = d / k;
    let extra = d % k;
    Ok((0..k).map(|b| base + usize::from(b < extra)).collect())
}

// ---------------------------------------------------------------------------
// Delta sampling
// ---------------------------------------------------------------------------

/// Produce an eigenvalue labeling for the chisel under the given rule; the
/// returned δ always yields a nonempty Δ(C, δ).
pub fn sample_delta(c: &Chisel, k: &[usize], rule: &DeltaRule, seed: u64) -> Result<DeltaSpec> {
    if k.len() != c.ncols() {
        return Err(Error::arg(format!(
            "part counts cover {} axes but the chisel acts on {}",
            k.len(),
            c.ncols()
        )));
    }
    if k.contains(&0) {
        return Err(Error::arg("every axis needs at least one part"));
    }
    match rule {
        DeltaRule::Ramp => {
            let delta = DeltaSpec::from_real(
                k.iter().map(|&ka| (0..ka).map(|i| i as f64 / 2.0).collect()).collect(),
            )?;
            // δₐ(0) = 0 everywhere, so the zero tuple is always a member.
            debug_assert!(!delta_pattern(c, &delta, CARVE_TOL)?.is_empty());
            Ok(delta)
        }
        DeltaRule::RandomLattice => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let axes: Vec<Vec<f64>> = k
                    .iter()
                    .map(|&ka| {
                        let m = ka.max(3) as i64;
                        let mut pool: Vec<f64> = (-m..=m).map(|v| v as f64).collect();
                        pool.shuffle(&mut rng);
                        pool.truncate(ka);
                        pool
                    })
                    .collect();
                let delta = DeltaSpec::from_real(axes)?;
                if !delta_pattern(c, &delta, CARVE_TOL)?.is_empty() {
                    return Ok(delta);
                }
            }
            Err(Error::InfeasibleDelta(
                "50 lattice samples produced an empty pattern for this chisel".into(),
            ))
        }
        DeltaRule::Explicit(delta) => {
            if delta.axis_count() != c.ncols() {
                return Err(Error::arg("explicit delta and chisel axis counts differ"));
            }
            if delta.k() != k {
                return Err(Error::arg("explicit delta part counts disagree with the spec"));
            }
            if delta_pattern(c, delta, CARVE_TOL)?.is_empty() {
                return Err(Error::InfeasibleDelta("explicit delta carves an empty pattern".into()));
            }
            Ok(delta.clone())
        }
    }
}

// ---------------------------------------------------------------------------
// Tensor construction
// ---------------------------------------------------------------------------

fn resolve_blocks(spec: &SynthesisSpec) -> Result<Vec<Vec<usize>>> {
    if spec.dims.len() < 2 {
        return Err(Error::Spec("synthesis needs at least 2 axes".into()));
    }
    if spec.parts.len() != spec.dims.len() {
        return Err(Error::Spec("parts and dims cover different axis counts".into()));
    }
    match &spec.block_sizes {
        Some(blocks) => {
            if blocks.len() != spec.dims.len() {
                return Err(Error::Spec("block sizes cover the wrong number of axes".into()));
            }
            for (a, sizes) in blocks.iter().enumerate() {
                if sizes.len() != spec.parts[a] {
                    return Err(Error::Spec(format!(
                        "axis {} has {} parts but {} block sizes",
                        a + 1,
                        spec.parts[a],
                        sizes.len()
                    )));
                }
                if sizes.contains(&0) {
                    return Err(Error::Spec(format!("axis {} has a zero-size block", a + 1)));
                }
                if sizes.iter().sum::<usize>() != spec.dims[a] {
                    return Err(Error::Spec(format!(
                        "axis {} block sizes sum to {}, dimension is {}",
                        a + 1,
                        sizes.iter().sum::<usize>(),
                        spec.dims[a]
                    )));
                }
            }
            Ok(blocks.clone())
        }
        None => spec
            .dims
            .iter()
            .zip(&spec.parts)
            .map(|(&d, &k)| near_equal_split(d, k))
            .collect(),
    }
}

/// Build the benchmark tensor: blocks indexed by the pattern are filled
/// i.i.d. from the spec's distribution, everything else is exactly zero,
/// and every on-pattern block is guaranteed nonzero.
pub fn build_tensor(spec: &SynthesisSpec) -> Result<(MultiArray, GroundTruth)> {
    let blocks = resolve_blocks(spec)?;
    let (pattern, delta) = match &spec.source {
        PatternSource::Carved { chisel, rule } => {
            let delta = sample_delta(chisel, &spec.parts, rule, spec.seed)?;
            let pattern = delta_pattern(chisel, &delta, CARVE_TOL)?;
            (pattern, Some(delta))
        }
        PatternSource::Explicit(p) => {
            if p.k() != spec.parts.as_slice() {
                return Err(Error::Spec("explicit pattern part counts disagree with the spec".into()));
            }
            (p.clone(), p.delta().cloned())
        }
    };
    if pattern.is_empty() {
        return Err(Error::Spec("the pattern is empty; nothing to fill".into()));
    }

    // Cumulative block offsets per axis.
    let offsets: Vec<Vec<usize>> = blocks
        .iter()
        .map(|sizes| {
            let mut acc = 0;
            let mut offs = Vec::with_capacity(sizes.len());
            for &s in sizes {
                offs.push(acc);
                acc += s;
            }
            offs
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total: usize = spec.dims.iter().product();
    let mut values = vec![C64::new(0.0, 0.0); total];
    let mut strides = vec![1usize; spec.dims.len()];
    for a in (0..spec.dims.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * spec.dims[a + 1];
    }

    for tuple in pattern.tuples() {
        // Linear indices of the block's cells, in row-major order.
        let ranges: Vec<(usize, usize)> = tuple
            .iter()
            .enumerate()
            .map(|(a, &b)| (offsets[a][b], blocks[a][b]))
            .collect();
        let cells: usize = ranges.iter().map(|&(_, len)| len).product();
        let expected_sq = match spec.fill {
            Fill::Uniform => cells as f64 / 3.0,
            Fill::Gaussian => cells as f64,
        };
        let threshold = BLOCK_NORM_MIN_REL * expected_sq.sqrt();
        let mut draws = 0;
        let block_values = loop {
            let drawn: Vec<f64> = (0..cells)
                .map(|_| match spec.fill {
                    Fill::Uniform => rng.gen_range(-1.0..1.0),
                    Fill::Gaussian => rng.sample(StandardNormal),
                })
                .collect();
            let norm = drawn.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm >= threshold {
                break drawn;
            }
            draws += 1;
            if draws > 64 {
                return Err(Error::Numerical("could not draw a nonzero block".into()));
            }
        };
        let mut cursor = vec![0usize; ranges.len()];
        for v in block_values {
            let flat: usize = cursor
                .iter()
                .zip(&ranges)
                .zip(&strides)
                .map(|((&c, &(off, _)), &s)| (off + c) * s)
                .sum();
            values[flat] = C64::new(v, 0.0);
            // Advance the in-block cursor, row-major.
            for a in (0..cursor.len()).rev() {
                cursor[a] += 1;
                if cursor[a] < ranges[a].1 {
                    break;
                }
                cursor[a] = 0;
            }
        }
    }

    let tensor = MultiArray::new(spec.dims.clone(), Field::Real64, values)?;
    let chisel = match &spec.source {
        PatternSource::Carved { chisel, .. } => Some(chisel.clone()),
        PatternSource::Explicit(p) => p.chisel().cloned(),
    };
    let pattern = pattern.with_provenance(chisel, delta.clone());
    Ok((tensor, GroundTruth { pattern, delta, block_sizes: blocks }))
}

// ---------------------------------------------------------------------------
// Scramble and noise
// ---------------------------------------------------------------------------

/// Distribution of the scrambling matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScrambleKind {
    /// i.i.d. gaussian entries, resampled until the condition estimate
    /// clears the cap.
    Gaussian,
    /// The orthogonal factor of a gaussian matrix (condition 1).
    Orthogonal,
}

/// Scramble with gaussian bases. See [`scramble_with`].
pub fn scramble(t: &MultiArray, seed: u64, conditioning_cap: f64) -> Result<(MultiArray, Vec<DMatrix<C64>>)> {
    scramble_with(t, seed, conditioning_cap, ScrambleKind::Gaussian)
}

/// Apply a random basis change on every axis: t′ = t^X with each Xₐ drawn
/// from the chosen distribution and held to the conditioning cap. Returns
/// the bases for oracle checks.
pub fn scramble_with(
    t: &MultiArray,
    seed: u64,
    conditioning_cap: f64,
    kind: ScrambleKind,
) -> Result<(MultiArray, Vec<DMatrix<C64>>)> {
    if conditioning_cap.is_nan() || conditioning_cap < 1.0 {
        return Err(Error::arg("conditioning cap must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bases = Vec::with_capacity(t.order());
    for &d in t.dims() {
        let x = match kind {
            ScrambleKind::Gaussian => {
                let mut accepted = None;
                for _ in 0..20 {
                    let g = DMatrix::<C64>::from_fn(d, d, |_, _| {
                        C64::new(rng.sample(StandardNormal), 0.0)
                    });
                    if crate::linalg::condition_estimate(&g) <= conditioning_cap {
                        accepted = Some(g);
                        break;
                    }
                }
                accepted.ok_or_else(|| {
                    Error::Conditioning(format!(
                        "20 gaussian draws exceeded the conditioning cap {conditioning_cap:.3e}"
                    ))
                })?
            }
            ScrambleKind::Orthogonal => {
                let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
                let q = g.qr().q();
                DMatrix::from_fn(d, d, |r, c| C64::new(q[(r, c)], 0.0))
            }
        };
        bases.push(x);
    }
    let scrambled = t.transform(&bases)?;
    Ok((scrambled, bases))
}

/// Add seeded gaussian noise scaled so the expected noise norm is
/// level·‖t‖: t + level·‖t‖/√(∏dₐ)·G. Complex tensors get complex noise
/// with the same expected magnitude.
pub fn add_noise(t: &MultiArray, level: f64, seed: u64) -> Result<MultiArray> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::arg("noise level must be finite and nonnegative"));
    }
    if level == 0.0 {
        return Ok(t.clone());
    }
    let scale = level * t.frobenius_norm() / (t.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complex = t.field() == Field::Complex128;
    let values: Vec<C64> = t
        .values()
        .iter()
        .map(|&v| {
            let noise = if complex {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im) / C64::new((2.0f64).sqrt(), 0.0)
            } else {
                C64::new(rng.sample(StandardNormal), 0.0)
            };
            v + noise * C64::new(scale, 0.0)
        })
        .collect();
    MultiArray::new(t.dims().to_vec(), t.field(), values)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Part counts must fit inside the dimensions they split.
fn check_parts(dims: &[usize], parts: &[usize]) -> Result<()> {
    for (a, (&d, &k)) in dims.iter().zip(parts).enumerate() {
        if k == 0 || k > d {
            return Err(Error::Spec(format!(
                "axis {} cannot split dimension {d} into {k} nonempty parts",
                a + 1
            )));
        }
    }
    Ok(())
}

/// Diagonal blocks: the 3-axis centroid chisel with δₐ(i) = i on every
/// axis, so Δ = {(b, b, b)}.
pub fn diagonal_blocks(dims: &[usize], parts: &[usize]) -> Result<SynthesisSpec> {
    if dims.len() != 3 || parts.len() != 3 {
        return Err(Error::Spec("the diagonal preset is 3-axis".into()));
    }
    if parts.iter().any(|&k| k != parts[0]) {
        return Err(Error::Spec("the diagonal preset needs equal part counts".into()));
    }
    check_parts(dims, parts)?;
    let delta = DeltaSpec::from_real(
        parts.iter().map(|&k| (0..k).map(|i| i as f64).collect()).collect(),
    )?;
    Ok(SynthesisSpec {
        dims: dims.to_vec(),
        parts: parts.to_vec(),
        block_sizes: None,
        source: PatternSource::Carved {
            chisel: Chisel::centroid3(),
            rule: DeltaRule::Explicit(delta),
        },
        fill: Fill::Uniform,
        seed: 0,
    })
}

/// Face blocks: the adjoint chisel on axes (a, b) (0-based) with matching
/// labels δ_a(i) = δ_b(i) = i, so Δ couples those two axes and ignores the
/// rest (single block each).
pub fn face_blocks(dims: &[usize], k: usize, a: usize, b: usize) -> Result<SynthesisSpec> {
    let l = dims.len();
    if a >= l || b >= l || a == b {
        return Err(Error::Spec("face preset needs two distinct in-range axes".into()));
    }
    let parts: Vec<usize> = (0..l).map(|ax| if ax == a || ax == b { k } else { 1 }).collect();
    check_parts(dims, &parts)?;
    let delta = DeltaSpec::from_real(
        (0..l)
            .map(|ax| {
                if ax == a || ax == b {
                    (0..k).map(|i| i as f64).collect()
                } else {
                    vec![0.0]
                }
            })
            .collect(),
    )?;
    Ok(SynthesisSpec {
        dims: dims.to_vec(),
        parts,
        block_sizes: None,
        source: PatternSource::Carved {
            chisel: Chisel::adjoint(l, a, b)?,
            rule: DeltaRule::Explicit(delta),
        },
        fill: Fill::Uniform,
        seed: 0,
    })
}

/// The sum-rule chisel [1, 1, −1] shared by the curve and surface presets.
fn sum_rule_chisel() -> Chisel {
    Chisel::from_rows(vec![vec![1.0, 1.0, -1.0]]).expect("static chisel")
}

/// Curve: the single-row chisel [1, 1, −1] with δₐ(i) = i, so
/// Δ = {(i, j, l) : i + j = l}. With parts ≈ dims the blocks are
/// near-1-dimensional and the support traces the sheet at index
/// resolution.
pub fn curve(dims: &[usize], parts: &[usize]) -> Result<SynthesisSpec> {
    if dims.len() != 3 || parts.len() != 3 {
        return Err(Error::Spec("the curve preset is 3-axis".into()));
    }
    check_parts(dims, parts)?;
    let delta = DeltaSpec::from_real(
        parts.iter().map(|&k| (0..k).map(|i| i as f64).collect()).collect(),
    )?;
    Ok(SynthesisSpec {
        dims: dims.to_vec(),
        parts: parts.to_vec(),
        block_sizes: None,
        source: PatternSource::Carved {
            chisel: sum_rule_chisel(),
            rule: DeltaRule::Explicit(delta),
        },
        fill: Fill::Uniform,
        seed: 0,
    })
}

/// Surface: the same sum-rule chisel with the ramp labeling over coarse
/// parts, thickening the sheet into blocks.
pub fn surface(dims: &[usize], parts: &[usize]) -> Result<SynthesisSpec> {
    if dims.len() != 3 || parts.len() != 3 {
        return Err(Error::Spec("the surface preset is 3-axis".into()));
    }
    check_parts(dims, parts)?;
    Ok(SynthesisSpec {
        dims: dims.to_vec(),
        parts: parts.to_vec(),
        block_sizes: None,
        source: PatternSource::Carved { chisel: sum_rule_chisel(), rule: DeltaRule::Ramp },
        fill: Fill::Uniform,
        seed: 0,
    })
}

// ---------------------------------------------------------------------------
// Spec JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
enum DeltaJson {
    Ramp,
    RandomLattice,
    Explicit { axes: Vec<Vec<f64>> },
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    dims: Vec<usize>,
    parts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    block_sizes: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chisel: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<DeltaJson>,
    /// Explicit pattern tuples, 1-based, used when no chisel is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    tuples: Option<Vec<Vec<usize>>>,
    fill: Fill,
    seed: u64,
}

impl SynthesisSpec {
    /// Encode as spec JSON. Explicit deltas must be real to round-trip
    /// through this format.
    pub fn to_json(&self) -> Result<String> {
        let (chisel, delta, tuples) = match &self.source {
            PatternSource::Carved { chisel, rule } => {
                let rows = (0..chisel.nrows())
                    .map(|j| (0..chisel.ncols()).map(|a| chisel.entry(j, a)).collect())
                    .collect();
                let delta = match rule {
                    DeltaRule::Ramp => DeltaJson::Ramp,
                    DeltaRule::RandomLattice => DeltaJson::RandomLattice,
                    DeltaRule::Explicit(d) => {
                        if !d.is_real() {
                            return Err(Error::arg("spec JSON holds real deltas only"));
                        }
                        DeltaJson::Explicit {
                            axes: (0..d.axis_count())
                                .map(|a| d.axis(a).iter().map(|z| z.re).collect())
                                .collect(),
                        }
                    }
                };
                (Some(rows), Some(delta), None)
            }
            PatternSource::Explicit(p) => {
                let tuples = p.tuples().map(|t| t.iter().map(|&i| i + 1).collect()).collect();
                (None, None, Some(tuples))
            }
        };
        jsonfmt::to_string(&SpecJson {
            dims: self.dims.clone(),
            parts: self.parts.clone(),
            block_sizes: self.block_sizes.clone(),
            chisel,
            delta,
            tuples,
            fill: self.fill,
            seed: self.seed,
        })
    }

    /// Decode spec JSON.
    pub fn from_json(text: &str) -> Result<SynthesisSpec> {
        let raw: SpecJson = jsonfmt::from_str(text)?;
        let source = match (raw.chisel, raw.tuples) {
            (Some(rows), None) => {
                let chisel = Chisel::from_rows(rows)?;
                let rule = match raw.delta {
                    Some(DeltaJson::Ramp) | None => DeltaRule::Ramp,
                    Some(DeltaJson::RandomLattice) => DeltaRule::RandomLattice,
                    Some(DeltaJson::Explicit { axes }) => {
                        DeltaRule::Explicit(DeltaSpec::from_real(axes)?)
                    }
                };
                PatternSource::Carved { chisel, rule }
            }
            (None, Some(tuples)) => {
                let mut zero_based = Vec::with_capacity(tuples.len());
                for t in tuples {
                    if t.contains(&0) {
                        return Err(Error::arg("pattern tuples are 1-based; found index 0"));
                    }
                    zero_based.push(t.iter().map(|&i| i - 1).collect::<Vec<_>>());
                }
                PatternSource::Explicit(NullPattern::new(raw.parts.clone(), zero_based)?)
            }
            (Some(_), Some(_)) => {
                return Err(Error::arg("give either a chisel or explicit tuples, not both"))
            }
            (None, None) => return Err(Error::arg("spec needs a chisel or explicit tuples")),
        };
        Ok(SynthesisSpec {
            dims: raw.dims,
            parts: raw.parts,
            block_sizes: raw.block_sizes,
            source,
            fill: raw.fill,
            seed: raw.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::exhibited_pattern;
    use crate::spectral::AxisDecomposition;

    fn worked_example() -> (Chisel, DeltaSpec) {
        let c = Chisel::from_rows(vec![vec![1.0, 1.0, -1.0]]).unwrap();
        let delta = DeltaSpec::from_real(vec![
            vec![0.5, 1.0],
            vec![0.5, 1.0, 2.0],
            vec![1.0, 1.5, 2.0, 2.5],
        ])
        .unwrap();
        (c, delta)
    }

    #[test]
    fn ramp_reproduces_the_six_tuple_pattern() {
        let c = Chisel::from_rows(vec![vec![1.0, 1.0, -1.0]]).unwrap();
        let delta = sample_delta(&c, &[2, 3, 4], &DeltaRule::Ramp, 0).unwrap();
        for (a, &k) in [2usize, 3, 4].iter().enumerate() {
            for i in 0..k {
                assert_eq!(delta.value(a, i), C64::new(i as f64 / 2.0, 0.0));
            }
        }
        let p = delta_pattern(&c, &delta, 1e-9).unwrap();
        let expected = [
            vec![0, 0, 0],
            vec![0, 1, 1],
            vec![0, 2, 2],
            vec![1, 0, 1],
            vec![1, 1, 2],
            vec![1, 2, 3],
        ];
        assert_eq!(p.len(), 6);
        for t in &expected {
            assert!(p.contains(t), "missing {t:?}");
        }
    }

    #[test]
    fn explicit_worked_example_has_five_tuples() {
        let (c, delta) = worked_example();
        let sampled =
            sample_delta(&c, &[2, 3, 4], &DeltaRule::Explicit(delta.clone()), 0).unwrap();
        let p = delta_pattern(&c, &sampled, 1e-9).unwrap();
        assert_eq!(p.len(), 5);
    }

    #[test]
    fn tucker_ramp_pins_the_zero_tuple() {
        let c = Chisel::tucker(&[0, 1, 2], 3).unwrap();
        let delta = sample_delta(&c, &[2, 2, 2], &DeltaRule::Ramp, 0).unwrap();
        let p = delta_pattern(&c, &delta, 1e-9).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.contains(&[0, 0, 0]), "identity rows force δₐ(iₐ) = 0");
    }

    #[test]
    fn random_lattice_is_feasible_and_distinct() {
        let c = Chisel::universal(3).unwrap();
        for seed in 0..5 {
            let delta = sample_delta(&c, &[3, 3, 3], &DeltaRule::RandomLattice, seed).unwrap();
            assert!(!delta_pattern(&c, &delta, 1e-9).unwrap().is_empty());
            for a in 0..3 {
                let vals = delta.axis(a);
                for v in vals {
                    assert_eq!(v.re.fract(), 0.0, "lattice values are integers");
                }
                for i in 0..vals.len() {
                    for j in (i + 1)..vals.len() {
                        assert_ne!(vals[i], vals[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_explicit_delta_errors() {
        // Universal row with strictly positive labels: no tuple can sum to
        // zero.
        let c = Chisel::universal(3).unwrap();
        let delta = DeltaSpec::from_real(vec![vec![1.0, 2.0]; 3]).unwrap();
        let err = sample_delta(&c, &[2, 2, 2], &DeltaRule::Explicit(delta), 0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDelta(_)), "got {err:?}");
    }

    #[test]
    fn diag_two_by_two_matrix_build() {
        let pattern = NullPattern::new(vec![2, 2], [vec![0, 0], vec![1, 1]]).unwrap();
        let spec = SynthesisSpec {
            dims: vec![2, 2],
            parts: vec![2, 2],
            block_sizes: None,
            source: PatternSource::Explicit(pattern),
            fill: Fill::Uniform,
            seed: 11,
        };
        let (t, truth) = build_tensor(&spec).unwrap();
        assert_eq!(truth.block_sizes, vec![vec![1, 1], vec![1, 1]]);
        assert_ne!(t.get(&[0, 0]), C64::new(0.0, 0.0));
        assert_ne!(t.get(&[1, 1]), C64::new(0.0, 0.0));
        assert_eq!(t.get(&[0, 1]), C64::new(0.0, 0.0));
        assert_eq!(t.get(&[1, 0]), C64::new(0.0, 0.0));
    }

    #[test]
    fn worked_example_fills_forty_cells() {
        let (c, delta) = worked_example();
        let spec = SynthesisSpec {
            dims: vec![4, 6, 8],
            parts: vec![2, 3, 4],
            block_sizes: None,
            source: PatternSource::Carved { chisel: c, rule: DeltaRule::Explicit(delta) },
            fill: Fill::Uniform,
            seed: 3,
        };
        let (t, truth) = build_tensor(&spec).unwrap();
        assert_eq!(truth.pattern.len(), 5);
        let nonzero = t.values().iter().filter(|z| z.re != 0.0 || z.im != 0.0).count();
        assert_eq!(nonzero, 5 * 2 * 2 * 2, "five 2×2×2 blocks");
    }

    #[test]
    fn full_grid_pattern_is_dense() {
        let mut tuples = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                tuples.push(vec![i, j]);
            }
        }
        let pattern = NullPattern::new(vec![2, 2], tuples).unwrap();
        let spec = SynthesisSpec {
            dims: vec![4, 4],
            parts: vec![2, 2],
            block_sizes: None,
            source: PatternSource::Explicit(pattern),
            fill: Fill::Gaussian,
            seed: 5,
        };
        let (t, _) = build_tensor(&spec).unwrap();
        assert!(t.values().iter().all(|z| z.re != 0.0));
    }

    #[test]
    fn ground_truth_conformance_is_exact() {
        let spec = diagonal_blocks(&[9, 9, 9], &[3, 3, 3]).unwrap();
        let (t, truth) = build_tensor(&spec).unwrap();
        let dec = AxisDecomposition::coordinate(&truth.block_sizes).unwrap();
        let exhibited = exhibited_pattern(&t, &dec, 0.0).unwrap();
        assert_eq!(exhibited, truth.pattern);
    }

    #[test]
    fn builds_are_deterministic_per_seed() {
        let mut spec = diagonal_blocks(&[6, 6, 6], &[2, 2, 2]).unwrap();
        spec.seed = 42;
        let (a, _) = build_tensor(&spec).unwrap();
        let (b, _) = build_tensor(&spec).unwrap();
        assert_eq!(a.values(), b.values());
        spec.seed = 43;
        let (c, _) = build_tensor(&spec).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn zero_size_blocks_are_rejected() {
        let err = diagonal_blocks(&[2, 2, 2], &[3, 3, 3]).unwrap_err();
        assert!(matches!(err, Error::Spec(_)), "got {err:?}");
    }

    #[test]
    fn scramble_round_trips_through_the_inverse() {
        let spec = diagonal_blocks(&[6, 7, 8], &[2, 2, 2]).unwrap();
        let (t, _) = build_tensor(&spec).unwrap();
        let (scrambled, bases) = scramble(&t, 9, DEFAULT_SCRAMBLE_CAP).unwrap();
        assert_eq!(scrambled.field(), Field::Real64, "real bases keep the tensor real");
        let inverses: Vec<_> = bases
            .iter()
            .map(|x| x.clone().try_inverse().expect("well-conditioned"))
            .collect();
        let back = scrambled.transform(&inverses).unwrap();
        let diff = MultiArray::from_fn(t.dims().to_vec(), Field::Complex128, |idx| {
            back.get(idx) - t.get(idx)
        })
        .unwrap();
        assert!(diff.frobenius_norm() <= 1e-8 * t.frobenius_norm());
    }

    #[test]
    fn scramble_is_seed_deterministic() {
        let spec = diagonal_blocks(&[5, 5, 5], &[2, 2, 2]).unwrap();
        let (t, _) = build_tensor(&spec).unwrap();
        let (a, _) = scramble(&t, 1, DEFAULT_SCRAMBLE_CAP).unwrap();
        let (b, _) = scramble(&t, 1, DEFAULT_SCRAMBLE_CAP).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn orthogonal_scramble_passes_cap_one() {
        let spec = diagonal_blocks(&[5, 5, 5], &[2, 2, 2]).unwrap();
        let (t, _) = build_tensor(&spec).unwrap();
        let (_, bases) = scramble_with(&t, 2, 1.0, ScrambleKind::Orthogonal).unwrap();
        for x in &bases {
            let gram = x.adjoint() * x;
            let eye = DMatrix::<C64>::identity(x.nrows(), x.ncols());
            assert!((gram - eye).iter().all(|z| z.norm() <= 1e-12));
        }
    }

    #[test]
    fn scramble_preserves_the_abstract_pattern() {
        use crate::spectral::{block_norms, AxisBasis};
        let spec = diagonal_blocks(&[6, 6, 6], &[2, 2, 2]).unwrap();
        let (t, truth) = build_tensor(&spec).unwrap();
        let (scrambled, bases) = scramble(&t, 4, DEFAULT_SCRAMBLE_CAP).unwrap();
        // The decomposition with bases Xₐ⁻¹ (coordinate blocks pulled back
        // through the scramble) exhibits the ground-truth pattern on t′.
        let axes: Vec<AxisBasis> = bases
            .iter()
            .zip(&truth.block_sizes)
            .map(|(x, sizes)| {
                let inv = x.clone().try_inverse().expect("well-conditioned");
                let reps = (0..sizes.len()).map(|b| C64::new(b as f64, 0.0)).collect();
                AxisBasis::new(inv, sizes.clone(), reps, 1e12).unwrap()
            })
            .collect();
        let dec = AxisDecomposition::new(axes).unwrap();
        let norms = block_norms(&scrambled, &dec).unwrap();
        let total: f64 = norms.values().iter().map(|z| z.re * z.re).sum::<f64>();
        let off: f64 = {
            let mut acc = 0.0;
            let k = truth.pattern.k().to_vec();
            let mut idx = vec![0usize; k.len()];
            loop {
                if !truth.pattern.contains(&idx) {
                    let v = norms.get(&idx).re;
                    acc += v * v;
                }
                if !crate::multiarray::increment_index(&mut idx, &k) {
                    break;
                }
            }
            acc
        };
        assert!(off.sqrt() <= 1e-10 * total.sqrt(), "off-pattern leakage");
    }

    #[test]
    fn noise_level_zero_is_identity_and_zero_tensor_stays_zero() {
        let spec = diagonal_blocks(&[5, 5, 5], &[2, 2, 2]).unwrap();
        let (t, _) = build_tensor(&spec).unwrap();
        let same = add_noise(&t, 0.0, 7).unwrap();
        assert_eq!(t.values(), same.values());
        let zero = MultiArray::zeros(vec![3, 3], Field::Real64).unwrap();
        let noisy = add_noise(&zero, 0.5, 7).unwrap();
        assert!(noisy.values().iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn noise_norm_tracks_the_level() {
        let spec = diagonal_blocks(&[6, 6, 6], &[2, 2, 2]).unwrap();
        let (t, _) = build_tensor(&spec).unwrap();
        let level = 1e-2;
        let mut norms = Vec::new();
        for seed in 0..20 {
            let noisy = add_noise(&t, level, seed).unwrap();
            let diff = MultiArray::from_fn(t.dims().to_vec(), Field::Complex128, |idx| {
                noisy.get(idx) - t.get(idx)
            })
            .unwrap();
            norms.push(diff.frobenius_norm());
        }
        let mean: f64 = norms.iter().sum::<f64>() / norms.len() as f64;
        let target = level * t.frobenius_norm();
        assert!(
            (mean - target).abs() <= 0.2 * target,
            "mean noise norm {mean:.3e} vs target {target:.3e}"
        );
    }

    #[test]
    fn diagonal_preset_carves_the_diagonal() {
        let spec = diagonal_blocks(&[9, 9, 9], &[3, 3, 3]).unwrap();
        let (_, truth) = build_tensor(&spec).unwrap();
        assert_eq!(truth.pattern.len(), 3);
        for b in 0..3 {
            assert!(truth.pattern.contains(&[b, b, b]));
        }
    }

    #[test]
    fn face_preset_ignores_the_off_axes() {
        let spec = face_blocks(&[10, 12, 14], 3, 1, 2).unwrap();
        let (_, truth) = build_tensor(&spec).unwrap();
        assert_eq!(truth.pattern.k(), &[1, 3, 3]);
        assert_eq!(truth.pattern.len(), 3);
        for b in 0..3 {
            assert!(truth.pattern.contains(&[0, b, b]), "axis 1 is a single block");
        }
    }

    #[test]
    fn curve_preset_traces_the_sum_sheet() {
        let spec = curve(&[12, 12, 12], &[12, 12, 12]).unwrap();
        let (_, truth) = build_tensor(&spec).unwrap();
        let mut expected = 0;
        for i in 0..12usize {
            for j in 0..12usize {
                let l = i + j;
                if l < 12 {
                    expected += 1;
                    assert!(truth.pattern.contains(&[i, j, l]));
                }
            }
        }
        assert_eq!(truth.pattern.len(), expected);
        assert_eq!(expected, 78);
    }

    #[test]
    fn surface_preset_thickens_the_sheet() {
        let spec = surface(&[8, 10, 12], &[4, 5, 6]).unwrap();
        let (_, truth) = build_tensor(&spec).unwrap();
        for t in truth.pattern.tuples() {
            assert_eq!(t[0] + t[1], t[2], "ramp labels satisfy the sum rule");
        }
        assert!(truth.pattern.len() > 4, "a sheet, not a point");
    }

    #[test]
    fn block_eigenvalue_tuples_are_exact_derivations() {
        use crate::derivation::{residual, DerivationTuple};
        let cases = [
            diagonal_blocks(&[6, 7, 8], &[2, 2, 2]).unwrap(),
            face_blocks(&[6, 7, 8], 2, 0, 1).unwrap(),
            curve(&[5, 5, 5], &[5, 5, 5]).unwrap(),
        ];
        for spec in cases {
            let (t, truth) = build_tensor(&spec).unwrap();
            let chisel = truth.pattern.chisel().expect("carved specs carry the chisel").clone();
            let delta = truth.delta.expect("carved specs carry a delta");
            let engaged = {
                let set = chisel.engaged_axes();
                (0..t.order()).map(|a| set.contains(&a)).collect::<Vec<_>>()
            };
            let tuple =
                DerivationTuple::block_eigenvalue(&delta, &truth.block_sizes, &engaged).unwrap();
            let r = residual(&t, &chisel, &tuple).unwrap();
            assert!(r <= 1e-12, "residual {r:.3e}");
        }
    }

    #[test]
    fn spec_json_round_trips() {
        let (c, delta) = worked_example();
        let spec = SynthesisSpec {
            dims: vec![4, 6, 8],
            parts: vec![2, 3, 4],
            block_sizes: None,
            source: PatternSource::Carved { chisel: c, rule: DeltaRule::Explicit(delta) },
            fill: Fill::Uniform,
            seed: 7,
        };
        let json = spec.to_json().unwrap();
        let back = SynthesisSpec::from_json(&json).unwrap();
        let (t1, truth1) = build_tensor(&spec).unwrap();
        let (t2, truth2) = build_tensor(&back).unwrap();
        assert_eq!(t1.values(), t2.values());
        assert_eq!(truth1.pattern, truth2.pattern);
        assert_eq!(truth1.pattern.len(), 5, "worked-example truth tuples");
        // Byte-determinism of the encoding itself.
        assert_eq!(spec.to_json().unwrap(), json);
    }

    #[test]
    fn explicit_tuples_spec_json() {
        let json = r#"{"dims":[4,4],"parts":[2,2],"tuples":[[1,1],[2,2]],"fill":"gaussian","seed":3}
"#;
        let spec = SynthesisSpec::from_json(json).unwrap();
        let (t, truth) = build_tensor(&spec).unwrap();
        assert_eq!(truth.pattern.len(), 2);
        assert!(truth.pattern.contains(&[0, 0]) && truth.pattern.contains(&[1, 1]));
        // Off-diagonal blocks are exactly zero.
        assert_eq!(t.get(&[0, 3]), C64::new(0.0, 0.0));
    }
}
