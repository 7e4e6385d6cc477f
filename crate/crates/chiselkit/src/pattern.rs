//! Null patterns: the admissible index tuples Δ(C, δ) carved by a chisel
//! and per-axis eigenvalue lists, pattern equivalence up to per-axis
//! relabeling, and conformance checks of decomposed tensors against a
//! pattern.
//!
//! Tuples are stored 0-based internally; the JSON interchange format and all
//! displayed forms are 1-based.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chisel::Chisel;
use crate::error::{Error, Result};
use crate::multiarray::MultiArray;
use crate::spectral::AxisDecomposition;
use crate::{jsonfmt, C64};

/// Labels within each axis must stay separated by more than this relative
/// tolerance, otherwise clustering could not tell the parts apart.
const DISTINCT_REL_TOL: f64 = 1e-9;

/// Pattern-equivalence search supports at most this many parts per axis.
pub const EQUIVALENCE_MAX_PARTS: usize = 12;

// ---------------------------------------------------------------------------
// DeltaSpec
// ---------------------------------------------------------------------------

/// Per-axis eigenvalue lists δ = (δ₁, …, δ_ℓ); axis a carries kₐ pairwise
/// distinct scalars, one per part.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSpec {
    axes: Vec<Vec<C64>>,
}

impl DeltaSpec {
    /// Build from complex per-axis lists. Each axis needs at least one
    /// value; values must be finite and pairwise distinct beyond a relative
    /// tolerance.
    pub fn new(axes: Vec<Vec<C64>>) -> Result<DeltaSpec> {
        if axes.is_empty() {
            return Err(Error::arg("delta needs at least one axis"));
        }
        for (a, vals) in axes.iter().enumerate() {
            if vals.is_empty() {
                return Err(Error::arg(format!("axis {} has an empty value list", a + 1)));
            }
            if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::arg("delta values must be finite"));
            }
            let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.norm()));
            for i in 0..vals.len() {
                for j in (i + 1)..vals.len() {
                    if (vals[i] - vals[j]).norm() <= DISTINCT_REL_TOL * scale {
                        return Err(Error::arg(format!(
                            "axis {} values {} and {} coincide; parts would merge",
                            a + 1,
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(DeltaSpec { axes })
    }

    /// Build from real per-axis lists.
    pub fn from_real(axes: Vec<Vec<f64>>) -> Result<DeltaSpec> {
        DeltaSpec::new(
            axes.into_iter()
                .map(|vals| vals.into_iter().map(|x| C64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    /// Number of axes ℓ.
    pub fn axis_count(&self) -> usize {
        self.axes.len()
    }

    /// Part counts (k₁, …, k_ℓ).
    pub fn k(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Values of axis `a` (0-based axis).
    pub fn axis(&self, a: usize) -> &[C64] {
        &self.axes[a]
    }

    /// δₐ(i), 0-based in both arguments.
    pub fn value(&self, a: usize, i: usize) -> C64 {
        self.axes[a][i]
    }

    /// True when every value has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.axes.iter().flatten().all(|v| v.im == 0.0)
    }
}

// ---------------------------------------------------------------------------
// NullPattern
// ---------------------------------------------------------------------------

/// A set of admissible part tuples over the grid ∏[kₐ], optionally carrying
/// the (C, δ) pair it was derived from.
#[derive(Debug, Clone)]
pub struct NullPattern {
    k: Vec<usize>,
    tuples: BTreeSet<Vec<usize>>,
    delta: Option<DeltaSpec>,
    chisel: Option<Chisel>,
}

impl NullPattern {
    /// Build from part counts and tuples (0-based); duplicates collapse,
    /// out-of-range components are rejected.
    pub fn new(k: Vec<usize>, tuples: impl IntoIterator<Item = Vec<usize>>) -> Result<NullPattern> {
        if k.len() < 2 {
            return Err(Error::arg("patterns need at least 2 axes"));
        }
        if k.contains(&0) {
            return Err(Error::arg("part counts must be positive"));
        }
        let mut set = BTreeSet::new();
        for t in tuples {
            if t.len() != k.len() {
                return Err(Error::arg(format!(
                    "tuple {:?} has {} components, expected {}",
                    t,
                    t.len(),
                    k.len()
                )));
            }
            if t.iter().zip(&k).any(|(&i, &ka)| i >= ka) {
                return Err(Error::arg(format!("tuple {t:?} exceeds part counts {k:?}")));
            }
            set.insert(t);
        }
        Ok(NullPattern { k, tuples: set, delta: None, chisel: None })
    }

    /// Attach the generating (C, δ) pair.
    pub fn with_provenance(mut self, chisel: Option<Chisel>, delta: Option<DeltaSpec>) -> NullPattern {
        self.chisel = chisel;
        self.delta = delta;
        self
    }

    /// Part counts per axis.
    pub fn k(&self) -> &[usize] {
        &self.k
    }

    /// Number of axes.
    pub fn axis_count(&self) -> usize {
        self.k.len()
    }

    /// Tuples in sorted (lexicographic) order, 0-based.
    pub fn tuples(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.tuples.iter()
    }

    /// Number of tuples.
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    /// True when no tuple is admissible.
    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Membership test (0-based tuple).
    pub fn contains(&self, tuple: &[usize]) -> bool {
        self.tuples.contains(tuple)
    }

    /// The generating eigenvalue lists, when known.
    pub fn delta(&self) -> Option<&DeltaSpec> {
        self.delta.as_ref()
    }

    /// The generating chisel, when known.
    pub fn chisel(&self) -> Option<&Chisel> {
        self.chisel.as_ref()
    }
}

impl PartialEq for NullPattern {
    /// Equality compares the combinatorial content (k and tuples), not the
    /// provenance.
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.tuples == other.tuples
    }
}

impl fmt::Display for NullPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, t) in self.tuples.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "(")?;
            for (m, i) in t.iter().enumerate() {
                if m > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, ")")?;
        }
        write!(f, "}}")
    }
}

// ---------------------------------------------------------------------------
// Pattern construction
// ---------------------------------------------------------------------------

/// The scale against which pattern membership sums are measured:
/// max_j Σₐ |C_{ja}|·maxᵢ|δₐ(i)|, the largest magnitude any row sum could
/// reach.
fn membership_scale(c: &Chisel, delta: &DeltaSpec) -> f64 {
    let axis_max: Vec<f64> = (0..delta.axis_count())
        .map(|a| delta.axis(a).iter().fold(0.0f64, |m, v| m.max(v.norm())))
        .collect();
    (0..c.nrows())
        .map(|j| (0..c.ncols()).map(|a| c.entry(j, a).abs() * axis_max[a]).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// All part tuples (i₁, …, i_ℓ) with max_j |Σₐ C_{ja}·δₐ(iₐ)| ≤ tol·scale.
/// With tol = 0 membership is exact vanishing of every row sum.
pub fn delta_pattern(c: &Chisel, delta: &DeltaSpec, tol: f64) -> Result<NullPattern> {
    if delta.axis_count() != c.ncols() {
        return Err(Error::arg(format!(
            "delta has {} axes but the chisel acts on {}",
            delta.axis_count(),
            c.ncols()
        )));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::arg("tolerance must be finite and nonnegative"));
    }
    let k = delta.k();
    let threshold = tol * membership_scale(c, delta);
    let mut tuples = Vec::new();
    let mut idx = vec![0usize; k.len()];
    loop {
        let worst = (0..c.nrows())
            .map(|j| {
                (0..c.ncols())
                    .map(|a| delta.value(a, idx[a]) * C64::new(c.entry(j, a), 0.0))
                    .sum::<C64>()
                    .norm()
            })
            .fold(0.0f64, f64::max);
        if worst <= threshold {
            tuples.push(idx.clone());
        }
        if !crate::multiarray::increment_index(&mut idx, &k) {
            break;
        }
    }
    Ok(NullPattern::new(k, tuples)?.with_provenance(Some(c.clone()), Some(delta.clone())))
}

// ---------------------------------------------------------------------------
// Pattern equivalence
// ---------------------------------------------------------------------------

/// Decide whether per-axis relabelings σₐ carry `a` onto `b`; on success
/// returns the witnessing permutations (σₐ[i] = image of part i of `a`).
/// Backtracking search with per-axis usage-count pruning; part counts are
/// capped at [`EQUIVALENCE_MAX_PARTS`].
pub fn patterns_equivalent(a: &NullPattern, b: &NullPattern) -> Result<Option<Vec<Vec<usize>>>> {
    if a.axis_count() != b.axis_count() {
        return Err(Error::arg(format!(
            "patterns have different axis counts: {} vs {}",
            a.axis_count(),
            b.axis_count()
        )));
    }
    if a.k().iter().chain(b.k()).any(|&ka| ka > EQUIVALENCE_MAX_PARTS) {
        return Err(Error::Size(format!(
            "pattern equivalence supports at most {EQUIVALENCE_MAX_PARTS} parts per axis"
        )));
    }
    if a.k() != b.k() || a.len() != b.len() {
        return Ok(None);
    }
    let l = a.axis_count();
    let k = a.k().to_vec();

    // Usage counts: how many tuples engage part i on axis ax. A relabeling
    // must preserve these, which prunes most of the search.
    let count = |p: &NullPattern| -> Vec<Vec<usize>> {
        let mut c: Vec<Vec<usize>> = k.iter().map(|&ka| vec![0; ka]).collect();
        for t in p.tuples() {
            for (ax, &i) in t.iter().enumerate() {
                c[ax][i] += 1;
            }
        }
        c
    };
    let ca = count(a);
    let cb = count(b);
    for ax in 0..l {
        let mut sa = ca[ax].clone();
        let mut sb = cb[ax].clone();
        sa.sort_unstable();
        sb.sort_unstable();
        if sa != sb {
            return Ok(None);
        }
    }

    let tuples_a: Vec<&Vec<usize>> = a.tuples().collect();
    // σ[ax][i] = assigned image, or usize::MAX while free.
    let mut sigma: Vec<Vec<usize>> = k.iter().map(|&ka| vec![usize::MAX; ka]).collect();
    let mut used: Vec<Vec<bool>> = k.iter().map(|&ka| vec![false; ka]).collect();

    // A tuple whose parts are all assigned must land inside b.
    fn consistent(
        tuples_a: &[&Vec<usize>],
        sigma: &[Vec<usize>],
        b: &NullPattern,
        scratch: &mut Vec<usize>,
    ) -> bool {
        'tuple: for t in tuples_a {
            scratch.clear();
            for (ax, &i) in t.iter().enumerate() {
                let img = sigma[ax][i];
                if img == usize::MAX {
                    continue 'tuple;
                }
                scratch.push(img);
            }
            if !b.contains(scratch) {
                return false;
            }
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        slot: usize,
        slots: &[(usize, usize)],
        k: &[usize],
        ca: &[Vec<usize>],
        cb: &[Vec<usize>],
        tuples_a: &[&Vec<usize>],
        b: &NullPattern,
        sigma: &mut Vec<Vec<usize>>,
        used: &mut Vec<Vec<bool>>,
        scratch: &mut Vec<usize>,
    ) -> bool {
        if slot == slots.len() {
            return true;
        }
        let (ax, i) = slots[slot];
        for img in 0..k[ax] {
            if used[ax][img] || ca[ax][i] != cb[ax][img] {
                continue;
            }
            sigma[ax][i] = img;
            used[ax][img] = true;
            if consistent(tuples_a, sigma, b, scratch)
                && search(slot + 1, slots, k, ca, cb, tuples_a, b, sigma, used, scratch)
            {
                return true;
            }
            sigma[ax][i] = usize::MAX;
            used[ax][img] = false;
        }
        false
    }

    let slots: Vec<(usize, usize)> =
        (0..l).flat_map(|ax| (0..k[ax]).map(move |i| (ax, i))).collect();
    let mut scratch = Vec::with_capacity(l);
    if search(0, &slots, &k, &ca, &cb, &tuples_a, b, &mut sigma, &mut used, &mut scratch) {
        Ok(Some(sigma))
    } else {
        Ok(None)
    }
}

// ---------------------------------------------------------------------------
// Exhibited patterns and conformance
// ---------------------------------------------------------------------------

/// The tuples whose coordinate block of `t` under `dec` has Frobenius norm
/// strictly above ε·‖t‖. With ε = 0 this is the minimal exhibited pattern.
pub fn exhibited_pattern(t: &MultiArray, dec: &AxisDecomposition, eps: f64) -> Result<NullPattern> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::arg("threshold must be finite and nonnegative"));
    }
    let norms = crate::spectral::block_norms(t, dec)?;
    let k = norms.dims().to_vec();
    let threshold = eps * t.frobenius_norm();
    let mut tuples = Vec::new();
    let mut idx = vec![0usize; k.len()];
    loop {
        if norms.get(&idx).re > threshold {
            tuples.push(idx.clone());
        }
        if !crate::multiarray::increment_index(&mut idx, &k) {
            break;
        }
    }
    NullPattern::new(k, tuples)
}

/// Outcome of checking a decomposition against a (C, δ) pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceReport {
    /// Every exhibited block lies inside Δ(C, δ, tol).
    pub conforms: bool,
    /// Largest scaled row-sum magnitude among exhibited off-pattern blocks
    /// (0 when conforming): how badly the worst offender misses the pattern.
    pub worst_violation: f64,
    /// Square root of the off-pattern share of the squared block mass,
    /// relative to ‖t‖².
    pub leakage: f64,
}

/// Check that every block of `t` under `dec` with norm above ε·‖t‖ lies in
/// Δ(C, δ, tol), and measure how much mass leaks outside the pattern.
pub fn conformance(
    t: &MultiArray,
    dec: &AxisDecomposition,
    c: &Chisel,
    delta: &DeltaSpec,
    eps: f64,
    tol: f64,
) -> Result<ConformanceReport> {
    let target = delta_pattern(c, delta, tol)?;
    let norms = crate::spectral::block_norms(t, dec)?;
    if norms.dims() != target.k() {
        return Err(Error::arg(format!(
            "decomposition has part counts {:?} but delta implies {:?}",
            norms.dims(),
            target.k()
        )));
    }
    let tnorm = t.frobenius_norm();
    let threshold = eps * tnorm;
    let scale = membership_scale(c, delta);
    let mut conforms = true;
    let mut worst = 0.0f64;
    let mut off_mass = 0.0f64;
    let mut idx = vec![0usize; target.k().len()];
    loop {
        let norm = norms.get(&idx).re;
        if !target.contains(&idx) {
            off_mass += norm * norm;
            if norm > threshold {
                conforms = false;
                let violation = (0..c.nrows())
                    .map(|j| {
                        (0..c.ncols())
                            .map(|a| delta.value(a, idx[a]) * C64::new(c.entry(j, a), 0.0))
                            .sum::<C64>()
                            .norm()
                    })
                    .fold(0.0f64, f64::max);
                worst = worst.max(if scale > 0.0 { violation / scale } else { violation });
            }
        }
        if !crate::multiarray::increment_index(&mut idx, target.k()) {
            break;
        }
    }
    let leakage = if tnorm > 0.0 { off_mass.sqrt() / tnorm } else { 0.0 };
    Ok(ConformanceReport { conforms, worst_violation: worst, leakage })
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

/// A scalar in pattern JSON: plain number when real, `[re, im]` otherwise.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonScalar {
    Real(f64),
    Complex([f64; 2]),
}

impl From<C64> for JsonScalar {
    fn from(z: C64) -> JsonScalar {
        if z.im == 0.0 {
            JsonScalar::Real(z.re)
        } else {
            JsonScalar::Complex([z.re, z.im])
        }
    }
}

impl From<&JsonScalar> for C64 {
    fn from(s: &JsonScalar) -> C64 {
        match s {
            JsonScalar::Real(x) => C64::new(*x, 0.0),
            JsonScalar::Complex([re, im]) => C64::new(*re, *im),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PatternJson {
    k: Vec<usize>,
    tuples: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<Vec<Vec<JsonScalar>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chisel: Option<Vec<Vec<f64>>>,
}

/// Encode a pattern as JSON (1-based tuples, sorted; provenance included
/// when present).
pub fn write_pattern(p: &NullPattern) -> Result<String> {
    let doc = PatternJson {
        k: p.k().to_vec(),
        tuples: p.tuples().map(|t| t.iter().map(|&i| i + 1).collect()).collect(),
        delta: p.delta().map(|d| {
            (0..d.axis_count())
                .map(|a| d.axis(a).iter().map(|&z| JsonScalar::from(z)).collect())
                .collect()
        }),
        chisel: p.chisel().map(|c| {
            (0..c.nrows())
                .map(|j| (0..c.ncols()).map(|a| c.entry(j, a)).collect())
                .collect()
        }),
    };
    jsonfmt::to_string(&doc)
}

/// Decode pattern JSON (1-based tuples on disk).
pub fn read_pattern(text: &str) -> Result<NullPattern> {
    let doc: PatternJson = jsonfmt::from_str(text)?;
    let tuples: Vec<Vec<usize>> = doc
        .tuples
        .iter()
        .map(|t| {
            t.iter()
                .map(|&i| {
                    if i == 0 {
                        Err(Error::arg("pattern tuples are 1-based; found index 0"))
                    } else {
                        Ok(i - 1)
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let delta = doc
        .delta
        .map(|axes| DeltaSpec::new(axes.iter().map(|ax| ax.iter().map(C64::from).collect()).collect()))
        .transpose()?;
    let chisel = doc.chisel.map(Chisel::from_rows).transpose()?;
    Ok(NullPattern::new(doc.k, tuples)?.with_provenance(chisel, delta))
}
