//! From derivation operators to axis decompositions: cluster each
//! operator's eigenvalues, extract the generalized eigenspaces as grouped
//! column blocks of an invertible basis, order the blocks canonically, and
//! change tensor coordinates.
//!
//! Generalized eigenspaces are computed by unitary triangularization with
//! eigenvalue reordering followed by Sylvester block decoupling — never via
//! a Jordan form, which would be numerically meaningless on floating-point
//! input.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::multiarray::{Field, MultiArray};
use crate::pattern::DeltaSpec;
use crate::{jsonfmt, C64};

/// Default single-linkage clustering tolerance, relative to the spectral
/// spread of each operator.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;

/// Largest acceptable basis condition estimate.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Imaginary content below this threshold (relative) is rounded away so
/// real inputs yield real decompositions.
const REALIFY_REL_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// One axis of a decomposition: an invertible basis whose consecutive
/// column blocks span the invariant subspaces, with one representative
/// eigenvalue per block.
#[derive(Debug, Clone)]
pub struct AxisBasis {
    basis: DMatrix<C64>,
    block_sizes: Vec<usize>,
    representatives: Vec<C64>,
    condition: f64,
}

impl AxisBasis {
    /// Validate and build an axis basis; the condition estimate is computed
    /// here and must stay below `cap`.
    pub fn new(
        basis: DMatrix<C64>,
        block_sizes: Vec<usize>,
        representatives: Vec<C64>,
        cap: f64,
    ) -> Result<AxisBasis> {
        if basis.nrows() != basis.ncols() {
            return Err(Error::arg("axis basis must be square"));
        }
        if block_sizes.iter().sum::<usize>() != basis.nrows() {
            return Err(Error::arg("block sizes must sum to the axis dimension"));
        }
        if block_sizes.contains(&0) {
            return Err(Error::arg("block sizes must be positive"));
        }
        if block_sizes.len() != representatives.len() {
            return Err(Error::arg("one representative per block required"));
        }
        let condition = linalg::condition_estimate(&basis);
        if condition.is_nan() || condition > cap {
            return Err(Error::DegenerateBasis(format!(
                "axis basis condition estimate {condition:.3e} exceeds cap {cap:.3e}"
            )));
        }
        Ok(AxisBasis { basis, block_sizes, representatives, condition })
    }

    /// The identity decomposition of a dₐ-dimensional axis with the given
    /// block sizes; representatives are the block indices.
    pub fn coordinate(block_sizes: Vec<usize>) -> Result<AxisBasis> {
        let d: usize = block_sizes.iter().sum();
        let reps = (0..block_sizes.len()).map(|b| C64::new(b as f64, 0.0)).collect();
        AxisBasis::new(DMatrix::identity(d, d), block_sizes, reps, DEFAULT_CONDITION_CAP)
    }

    /// Axis dimension dₐ.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// The basis matrix (columns grouped into blocks).
    pub fn basis(&self) -> &DMatrix<C64> {
        &self.basis
    }

    /// Column-block sizes (k entries summing to dₐ).
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// Number of blocks kₐ.
    pub fn block_count(&self) -> usize {
        self.block_sizes.len()
    }

    /// Representative eigenvalue per block.
    pub fn representatives(&self) -> &[C64] {
        &self.representatives
    }

    /// 2-norm condition estimate of the basis.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Column range of block `b`.
    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        let start: usize = self.block_sizes[..b].iter().sum();
        start..start + self.block_sizes[b]
    }

    /// True when the basis or a representative has nonzero imaginary part.
    pub fn is_complex(&self) -> bool {
        self.basis.iter().any(|z| z.im != 0.0) || self.representatives.iter().any(|z| z.im != 0.0)
    }
}

/// Per-axis bases, block structure and representatives for a full tensor
/// decomposition.
#[derive(Debug, Clone)]
pub struct AxisDecomposition {
    axes: Vec<AxisBasis>,
}

impl AxisDecomposition {
    /// Assemble from per-axis bases (at least two axes).
    pub fn new(axes: Vec<AxisBasis>) -> Result<AxisDecomposition> {
        if axes.len() < 2 {
            return Err(Error::arg("decompositions need at least 2 axes"));
        }
        Ok(AxisDecomposition { axes })
    }

    /// Identity bases with the given per-axis block sizes.
    pub fn coordinate(blocks: &[Vec<usize>]) -> Result<AxisDecomposition> {
        AxisDecomposition::new(
            blocks.iter().map(|b| AxisBasis::coordinate(b.clone())).collect::<Result<_>>()?,
        )
    }

    /// Identity bases, one whole-axis block per axis.
    pub fn single_block(dims: &[usize]) -> Result<AxisDecomposition> {
        AxisDecomposition::coordinate(&dims.iter().map(|&d| vec![d]).collect::<Vec<_>>())
    }

    /// The per-axis bases.
    pub fn axes(&self) -> &[AxisBasis] {
        &self.axes
    }

    /// Part counts (k₁, …, k_ℓ).
    pub fn k(&self) -> Vec<usize> {
        self.axes.iter().map(AxisBasis::block_count).collect()
    }

    /// Axis dimensions.
    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(AxisBasis::dim).collect()
    }

    /// True when any axis carries imaginary content.
    pub fn is_complex(&self) -> bool {
        self.axes.iter().any(AxisBasis::is_complex)
    }

    /// The representatives per axis, as an eigenvalue-list tuple.
    pub fn delta(&self) -> Result<DeltaSpec> {
        DeltaSpec::new(self.axes.iter().map(|a| a.representatives.clone()).collect())
    }
}

// ---------------------------------------------------------------------------
// Eigenvalue clustering
// ---------------------------------------------------------------------------

/// A group of mutually close eigenvalues and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    /// Arithmetic mean of the members.
    pub representative: C64,
    /// Member eigenvalues, in the order the eigensolver produced them.
    pub members: Vec<C64>,
}

/// Single-linkage clusters of positions: indices i, j link when
/// |v_i − v_j| ≤ tol_rel·spread, spread = max pairwise distance (zero spread
/// puts everything in one cluster). Clusters are ordered by first member.
fn cluster_positions(values: &[C64], tol_rel: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut spread = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            spread = spread.max((values[i] - values[j]).norm());
        }
    }
    let link = tol_rel * spread;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if spread == 0.0 || (values[i] - values[j]).norm() <= link {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_slot[r] {
            Some(s) => clusters[s].push(i),
            None => {
                root_slot[r] = Some(clusters.len());
                clusters.push(vec![i]);
            }
        }
    }
    clusters
}

/// Eigenvalues of `d` (complex arithmetic), grouped by single-linkage
/// clustering at `tol_rel` times the spectral spread.
pub fn eigen_cluster(d: &DMatrix<C64>, tol_rel: f64) -> Result<Vec<EigenCluster>> {
    if d.nrows() != d.ncols() {
        return Err(Error::arg("eigenvalue clustering needs a square matrix"));
    }
    if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::arg("operator entries must be finite"));
    }
    let (_, t) = linalg::complex_schur(d)?;
    let values: Vec<C64> = (0..d.nrows()).map(|i| t[(i, i)]).collect();
    Ok(clusters_from_positions(&values, &cluster_positions(&values, tol_rel)))
}

fn clusters_from_positions(values: &[C64], positions: &[Vec<usize>]) -> Vec<EigenCluster> {
    positions
        .iter()
        .map(|members| {
            let vals: Vec<C64> = members.iter().map(|&i| values[i]).collect();
            let mean = vals.iter().sum::<C64>() / C64::new(vals.len() as f64, 0.0);
            EigenCluster { representative: mean, members: vals }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Invariant subspaces
// ---------------------------------------------------------------------------

/// Basis of the generalized eigenspaces for the given clusters: X⁻¹·D·X is
/// block diagonal with one block per cluster, blocks in cluster order.
/// Returns the basis and the block sizes.
pub fn invariant_subspaces(
    d: &DMatrix<C64>,
    clusters: &[EigenCluster],
) -> Result<(DMatrix<C64>, Vec<usize>)> {
    let (mut q, mut t) = linalg::complex_schur(d)?;
    let n = d.nrows();
    // Assign each Schur eigenvalue to the nearest cluster representative and
    // check the counts agree — guards against clusters from a different
    // operator.
    let scale = clusters
        .iter()
        .flat_map(|cl| cl.members.iter())
        .chain((0..n).map(|i| &t[(i, i)]))
        .fold(1.0f64, |m, z| m.max(z.norm()));
    let mut labels = Vec::with_capacity(n);
    let mut counts = vec![0usize; clusters.len()];
    for i in 0..n {
        let v = t[(i, i)];
        let (best, dist) = clusters
            .iter()
            .enumerate()
            .map(|(c, cl)| (c, (cl.representative - v).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::arg("at least one cluster required"))?;
        let diameter = clusters[best]
            .members
            .iter()
            .fold(0.0f64, |m, z| m.max((z - clusters[best].representative).norm()));
        if dist > diameter + 1e-8 * scale {
            return Err(Error::Numerical(
                "clusters do not partition the operator's spectrum".into(),
            ));
        }
        labels.push(best);
        counts[best] += 1;
    }
    if counts.iter().zip(clusters).any(|(&got, cl)| got != cl.members.len()) {
        return Err(Error::Numerical(
            "clusters do not partition the operator's spectrum".into(),
        ));
    }
    linalg::reorder_schur(&mut q, &mut t, &labels)?;
    let sizes: Vec<usize> = clusters.iter().map(|c| c.members.len()).collect();
    let y = linalg::block_diagonalize(&t, &sizes)?;
    Ok((q * y, sizes))
}

// ---------------------------------------------------------------------------
// Decompose
// ---------------------------------------------------------------------------

/// Decompose each axis of a derivation tuple: cluster the operator's
/// eigenvalues, extract invariant-subspace bases, and collect block
/// representatives. Identically-zero operators mark disengaged axes and get
/// the single-block identity decomposition with representative 0. Uses the
/// default condition cap.
pub fn decompose(ops: &[DMatrix<C64>], tol_rel: f64) -> Result<(AxisDecomposition, DeltaSpec)> {
    decompose_with(ops, tol_rel, DEFAULT_CONDITION_CAP)
}

/// [`decompose`] with an explicit basis condition cap.
pub fn decompose_with(
    ops: &[DMatrix<C64>],
    tol_rel: f64,
    condition_cap: f64,
) -> Result<(AxisDecomposition, DeltaSpec)> {
    if ops.len() < 2 {
        return Err(Error::arg("derivation tuples act on at least 2 axes"));
    }
    if !(tol_rel > 0.0 && tol_rel.is_finite()) {
        return Err(Error::arg("clustering tolerance must be positive and finite"));
    }
    let mut axes = Vec::with_capacity(ops.len());
    for d in ops {
        if d.nrows() != d.ncols() {
            return Err(Error::arg("derivation operators must be square"));
        }
        if d.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            // Disengaged axis: no constraint, one block spanning everything.
            axes.push(AxisBasis::coordinate(vec![d.nrows()])?);
            continue;
        }
        let (mut q, mut t) = linalg::complex_schur(d)?;
        let values: Vec<C64> = (0..d.nrows()).map(|i| t[(i, i)]).collect();
        let positions = cluster_positions(&values, tol_rel);
        let clusters = clusters_from_positions(&values, &positions);
        let mut labels = vec![0usize; d.nrows()];
        for (c, members) in positions.iter().enumerate() {
            for &i in members {
                labels[i] = c;
            }
        }
        linalg::reorder_schur(&mut q, &mut t, &labels)?;
        let sizes: Vec<usize> = positions.iter().map(Vec::len).collect();
        let y = linalg::block_diagonalize(&t, &sizes)?;
        let mut basis = q * y;
        let mut reps: Vec<C64> = clusters.iter().map(|c| c.representative).collect();
        realify(&mut basis, &mut reps);
        axes.push(AxisBasis::new(basis, sizes, reps, condition_cap)?);
    }
    let dec = AxisDecomposition::new(axes)?;
    let delta = dec.delta()?;
    Ok((dec, delta))
}

/// Round away imaginary parts when both the basis and the representatives
/// are real to within [`REALIFY_REL_TOL`], so real problems keep real
/// results.
fn realify(basis: &mut DMatrix<C64>, reps: &mut [C64]) {
    let norm = basis.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let imag = basis.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let rep_scale = reps.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let rep_imag = reps.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if imag <= REALIFY_REL_TOL * norm && rep_imag <= REALIFY_REL_TOL * rep_scale {
        for z in basis.iter_mut() {
            z.im = 0.0;
        }
        for z in reps.iter_mut() {
            z.im = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical block order
// ---------------------------------------------------------------------------

/// Reorder each axis's blocks canonically: center the representatives by
/// their mean (which absorbs any scalar-derivation shift), then sort by
/// (real part, imaginary part, block size) ascending. The eigenvalue lists
/// are permuted in step.
pub fn order_blocks(
    dec: AxisDecomposition,
    delta: DeltaSpec,
) -> Result<(AxisDecomposition, DeltaSpec)> {
    if dec.k() != delta.k() {
        return Err(Error::arg("decomposition and delta have different part counts"));
    }
    let mut axes = Vec::with_capacity(dec.axes.len());
    let mut delta_axes = Vec::with_capacity(dec.axes.len());
    for (axis, dvals) in dec.axes.into_iter().zip((0..delta.axis_count()).map(|a| delta.axis(a).to_vec())) {
        let kb = axis.block_count();
        let mean = axis.representatives.iter().sum::<C64>() / C64::new(kb as f64, 0.0);
        let mut order: Vec<usize> = (0..kb).collect();
        order.sort_by(|&p, &q| {
            let cp = axis.representatives[p] - mean;
            let cq = axis.representatives[q] - mean;
            cp.re
                .total_cmp(&cq.re)
                .then(cp.im.total_cmp(&cq.im))
                .then(axis.block_sizes[p].cmp(&axis.block_sizes[q]))
        });
        let d = axis.dim();
        let mut basis = DMatrix::<C64>::zeros(d, d);
        let mut col = 0;
        for &b in &order {
            let range = axis.block_range(b);
            for c in range {
                basis.set_column(col, &axis.basis.column(c));
                col += 1;
            }
        }
        let block_sizes: Vec<usize> = order.iter().map(|&b| axis.block_sizes[b]).collect();
        let representatives: Vec<C64> = order.iter().map(|&b| axis.representatives[b]).collect();
        delta_axes.push(order.iter().map(|&b| dvals[b]).collect::<Vec<C64>>());
        axes.push(AxisBasis {
            basis,
            block_sizes,
            representatives,
            condition: axis.condition,
        });
    }
    Ok((AxisDecomposition { axes }, DeltaSpec::new(delta_axes)?))
}

// ---------------------------------------------------------------------------
// Coordinate changes
// ---------------------------------------------------------------------------

/// Frobenius norm of each coordinate block of `t` under `dec`, as a
/// k₁×…×k_ℓ real array: entry (c₁,…,c_ℓ) is the norm of the block slice of
/// the transformed tensor.
pub fn block_norms(t: &MultiArray, dec: &AxisDecomposition) -> Result<MultiArray> {
    if dec.dims() != t.dims() {
        return Err(Error::arg(format!(
            "decomposition dims {:?} do not match tensor dims {:?}",
            dec.dims(),
            t.dims()
        )));
    }
    let bases: Vec<DMatrix<C64>> = dec.axes.iter().map(|a| a.basis.clone()).collect();
    let s = t.transform(&bases)?;
    let k = dec.k();
    // Map each axis index to its block id.
    let block_of: Vec<Vec<usize>> = dec
        .axes
        .iter()
        .map(|a| {
            let mut map = Vec::with_capacity(a.dim());
            for (b, &size) in a.block_sizes.iter().enumerate() {
                map.extend(std::iter::repeat_n(b, size));
            }
            map
        })
        .collect();
    let mut sums = vec![0.0f64; k.iter().product()];
    let dims = s.dims().to_vec();
    let mut idx = vec![0usize; dims.len()];
    let values = s.values();
    let mut flat = 0usize;
    loop {
        let mut bpos = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            bpos = bpos * k[a] + block_of[a][i];
        }
        sums[bpos] += values[flat].norm_sqr();
        flat += 1;
        if !crate::multiarray::increment_index(&mut idx, &dims) {
            break;
        }
    }
    MultiArray::from_real(k, sums.into_iter().map(f64::sqrt).collect())
}

/// Change `t` into the decomposition's coordinates; for a decomposition
/// recovered from a scrambled tensor this undoes the scramble up to
/// within-block mixing, making the null pattern visible again.
pub fn unscramble(t: &MultiArray, dec: &AxisDecomposition) -> Result<MultiArray> {
    if dec.dims() != t.dims() {
        return Err(Error::arg(format!(
            "decomposition dims {:?} do not match tensor dims {:?}",
            dec.dims(),
            t.dims()
        )));
    }
    let bases: Vec<DMatrix<C64>> = dec.axes.iter().map(|a| a.basis.clone()).collect();
    t.transform(&bases)
}

// ---------------------------------------------------------------------------
// Decomposition files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct AxisJson {
    dim: usize,
    block_sizes: Vec<usize>,
    representatives: Vec<[f64; 2]>,
    condition: f64,
    basis_file: String,
}

#[derive(Serialize, Deserialize)]
struct DecompositionJson {
    axes: Vec<AxisJson>,
}

/// Write `{stem}.json` plus one order-2 tensor file per axis basis
/// (`{stem}.basis{a}.tnsr`, 1-based) into `dir`; returns the JSON path.
pub fn write_decomposition(dec: &AxisDecomposition, dir: &Path, stem: &str) -> Result<PathBuf> {
    let mut axes = Vec::with_capacity(dec.axes.len());
    for (a, axis) in dec.axes.iter().enumerate() {
        let basis_file = format!("{stem}.basis{}.tnsr", a + 1);
        let d = axis.dim();
        let field =
            if axis.basis.iter().all(|z| z.im == 0.0) { Field::Real64 } else { Field::Complex128 };
        let arr = MultiArray::from_fn(vec![d, d], field, |idx| axis.basis[(idx[0], idx[1])])?;
        crate::multiarray::write_tensor(&arr, dir.join(&basis_file))?;
        axes.push(AxisJson {
            dim: d,
            block_sizes: axis.block_sizes.clone(),
            representatives: axis.representatives.iter().map(|z| [z.re, z.im]).collect(),
            condition: axis.condition,
            basis_file,
        });
    }
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, jsonfmt::to_string(&DecompositionJson { axes })?)?;
    Ok(json_path)
}

/// Read a decomposition written by [`write_decomposition`]; basis files are
/// resolved relative to the JSON file's directory.
pub fn read_decomposition(path: &Path) -> Result<AxisDecomposition> {
    let text = fs::read_to_string(path)?;
    let doc: DecompositionJson = jsonfmt::from_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut axes = Vec::with_capacity(doc.axes.len());
    for axis in doc.axes {
        let arr = crate::multiarray::read_tensor(dir.join(&axis.basis_file))?;
        if arr.order() != 2 || arr.dims() != [axis.dim, axis.dim] {
            return Err(Error::arg(format!(
                "basis file {} is not a {}×{} matrix",
                axis.basis_file, axis.dim, axis.dim
            )));
        }
        let basis =
            DMatrix::from_fn(axis.dim, axis.dim, |r, c| arr.get(&[r, c]));
        let reps = axis.representatives.iter().map(|&[re, im]| C64::new(re, im)).collect();
        // Written files already passed their producer's cap; only reject
        // outright singular bases here.
        axes.push(AxisBasis::new(basis, axis.block_sizes, reps, f64::INFINITY).and_then(|b| {
            if b.condition.is_finite() {
                Ok(b)
            } else {
                Err(Error::DegenerateBasis("stored axis basis is singular".into()))
            }
        })?);
    }
    AxisDecomposition::new(axes)
}
