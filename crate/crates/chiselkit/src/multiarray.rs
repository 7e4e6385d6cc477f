//! Dense multiway arrays: storage, multilinear evaluation, contractions,
//! axis transforms, and the `TNSR v1` text format.
//!
//! A [`MultiArray`] is an order-ℓ array (ℓ ≥ 2) over `real64` or `complex128`
//! scalars, stored row-major (last axis fastest). Real arrays are kept in the
//! same complex buffer with exactly-zero imaginary parts; arithmetic on such
//! data cannot create a nonzero imaginary part, so the `field` tag stays
//! truthful through every operation in this module.
//!
//! Axes are 0-based throughout the library API. External formats (files,
//! JSON, CLI) are 1-based; conversion happens at those boundaries only.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

// ---------------------------------------------------------------------------
// Field tag
// ---------------------------------------------------------------------------

/// Scalar field of a [`MultiArray`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    /// IEEE-754 binary64 reals.
    Real64,
    /// Pairs of binary64 reals interpreted as complex numbers.
    Complex128,
}

impl Field {
    /// Tag used in the `TNSR v1` header.
    pub fn tag(self) -> &'static str {
        match self {
            Field::Real64 => "real64",
            Field::Complex128 => "complex128",
        }
    }

    /// Parse a header tag.
    pub fn from_tag(tag: &str) -> Option<Field> {
        match tag {
            "real64" => Some(Field::Real64),
            "complex128" => Some(Field::Complex128),
            _ => None,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

// ---------------------------------------------------------------------------
// MultiArray
// ---------------------------------------------------------------------------

/// Dense order-ℓ array with dims `(d₁, …, d_ℓ)`, row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiArray {
    dims: Vec<usize>,
    field: Field,
    values: Vec<C64>,
}

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl MultiArray {
    /// Build an array from complex values. Validates the order ≥ 2 invariant,
    /// positive dims, the value count, and finiteness. For `Field::Real64`
    /// every imaginary part must be exactly zero.
    pub fn new(dims: Vec<usize>, field: Field, values: Vec<C64>) -> Result<MultiArray> {
        if dims.len() < 2 {
            return Err(Error::arg(format!(
                "multiarray order must be at least 2, got {}",
                dims.len()
            )));
        }
        Self::from_parts(dims, field, values)
    }

    /// Same validation as [`MultiArray::new`] but permits order 1; used for
    /// contraction results, which may legitimately drop to a single axis.
    pub(crate) fn from_parts(dims: Vec<usize>, field: Field, values: Vec<C64>) -> Result<MultiArray> {
        if dims.is_empty() {
            return Err(Error::arg("multiarray needs at least one axis"));
        }
        if dims.contains(&0) {
            return Err(Error::arg(format!("dims must be positive, got {dims:?}")));
        }
        let expect = product(&dims);
        if values.len() != expect {
            return Err(Error::arg(format!(
                "value count {} does not match dims product {}",
                values.len(),
                expect
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::arg("non-finite scalar rejected"));
        }
        if field == Field::Real64 && values.iter().any(|z| z.im != 0.0) {
            return Err(Error::arg("real64 array with nonzero imaginary part"));
        }
        Ok(MultiArray { dims, field, values })
    }

    /// Build a real array from `f64` values.
    pub fn from_real(dims: Vec<usize>, values: Vec<f64>) -> Result<MultiArray> {
        let values = values.into_iter().map(|x| C64::new(x, 0.0)).collect();
        Self::new(dims, Field::Real64, values)
    }

    /// All-zero array.
    pub fn zeros(dims: Vec<usize>, field: Field) -> Result<MultiArray> {
        let n = product(&dims);
        Self::new(dims, field, vec![C64::new(0.0, 0.0); n])
    }

    /// Build by evaluating `f` on every (0-based) multi-index.
    pub fn from_fn(
        dims: Vec<usize>,
        field: Field,
        mut f: impl FnMut(&[usize]) -> C64,
    ) -> Result<MultiArray> {
        let n = product(&dims);
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f(&idx));
            increment_index(&mut idx, &dims);
        }
        Self::new(dims, field, values)
    }

    /// Number of axes ℓ.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Axis dimensions `(d₁, …, d_ℓ)`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Scalar field tag.
    pub fn field(&self) -> Field {
        self.field
    }

    /// Flat row-major values.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the array has no entries (never for a valid array).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major linear index of a 0-based multi-index.
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0usize;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            lin = lin * d + i;
        }
        lin
    }

    /// Entry at a 0-based multi-index.
    pub fn get(&self, idx: &[usize]) -> C64 {
        self.values[self.linear_index(idx)]
    }

    /// Frobenius norm √(Σ |tᵢ|²).
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Reinterpret as complex128 (no-op on complex input).
    pub fn to_complex(&self) -> MultiArray {
        MultiArray {
            dims: self.dims.clone(),
            field: Field::Complex128,
            values: self.values.clone(),
        }
    }

    // -----------------------------------------------------------------------
    // Multilinear evaluation and contraction
    // -----------------------------------------------------------------------

    /// Full multilinear evaluation Σᵢ t(i)·∏ₐ uₐ(iₐ).
    pub fn evaluate(&self, u: &VectorTuple) -> Result<C64> {
        u.check_against(self)?;
        if u.axes().len() != self.order() {
            return Err(Error::arg(format!(
                "evaluate needs a vector for every axis: got {} of {}",
                u.axes().len(),
                self.order()
            )));
        }
        let mut dims = self.dims.clone();
        let mut values = self.values.clone();
        // Contract the highest axis first so earlier strides stay valid.
        for (axis, vec) in u.entries().iter().rev() {
            let (nd, nv) = contract_axis(&dims, &values, *axis, vec);
            dims = nd;
            values = nv;
        }
        debug_assert_eq!(values.len(), 1);
        Ok(values[0])
    }

    /// Partial evaluation over a proper nonempty subset of axes. The result
    /// keeps the remaining axes in their original order.
    pub fn contract(&self, u: &VectorTuple) -> Result<MultiArray> {
        u.check_against(self)?;
        let na = u.axes().len();
        if na == 0 {
            return Err(Error::arg("contract needs at least one axis"));
        }
        if na >= self.order() {
            return Err(Error::arg(
                "contract must leave at least one axis (use evaluate for full contraction)",
            ));
        }
        let mut dims = self.dims.clone();
        let mut values = self.values.clone();
        let mut real = self.field == Field::Real64;
        for (axis, vec) in u.entries().iter().rev() {
            real = real && vec.iter().all(|z| z.im == 0.0);
            let (nd, nv) = contract_axis(&dims, &values, *axis, vec);
            dims = nd;
            values = nv;
        }
        let field = if real { Field::Real64 } else { Field::Complex128 };
        MultiArray::from_parts(dims, field, values)
    }

    /// Mode product along `axis`: result(…, j, …) = Σ_{iₐ} t(…, iₐ, …)·M(iₐ, j).
    /// The axis dimension changes from `dₐ` to `M.ncols()`.
    pub fn mode_product(&self, axis: usize, m: &DMatrix<C64>) -> Result<MultiArray> {
        if axis >= self.order() {
            return Err(Error::arg(format!(
                "axis {axis} out of range for order {}",
                self.order()
            )));
        }
        if m.nrows() != self.dims[axis] {
            return Err(Error::arg(format!(
                "mode_product matrix has {} rows, axis {axis} has dimension {}",
                m.nrows(),
                self.dims[axis]
            )));
        }
        if m.ncols() == 0 {
            return Err(Error::arg("mode_product matrix needs at least one column"));
        }
        let (dims, values) = mode_product_raw(&self.dims, &self.values, axis, m);
        let real = self.field == Field::Real64 && m.iter().all(|z| z.im == 0.0);
        let field = if real { Field::Real64 } else { Field::Complex128 };
        MultiArray::from_parts(dims, field, values)
    }

    /// Axis transform t^X: successive mode products by square matrices
    /// X₁, …, X_ℓ. Satisfies evaluate(t^X, u) = evaluate(t, (Xₐuₐ)).
    pub fn transform(&self, bases: &[DMatrix<C64>]) -> Result<MultiArray> {
        if bases.len() != self.order() {
            return Err(Error::arg(format!(
                "transform needs {} matrices, got {}",
                self.order(),
                bases.len()
            )));
        }
        for (a, x) in bases.iter().enumerate() {
            if x.nrows() != self.dims[a] || x.ncols() != self.dims[a] {
                return Err(Error::arg(format!(
                    "transform matrix for axis {a} must be {d}x{d}, got {}x{}",
                    x.nrows(),
                    x.ncols(),
                    d = self.dims[a]
                )));
            }
        }
        let mut out = self.clone();
        for (a, x) in bases.iter().enumerate() {
            out = out.mode_product(a, x)?;
        }
        Ok(out)
    }
}

/// Advance a row-major multi-index; returns false (with the index wrapped
/// back to all zeros) once the grid is exhausted.
pub(crate) fn increment_index(idx: &mut [usize], dims: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < dims[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// Single-axis contraction on raw row-major storage.
fn contract_axis(dims: &[usize], values: &[C64], axis: usize, u: &[C64]) -> (Vec<usize>, Vec<C64>) {
    let d = dims[axis];
    let suffix: usize = dims[axis + 1..].iter().product();
    let prefix: usize = dims[..axis].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); prefix * suffix];
    for p in 0..prefix {
        let in_base = p * d * suffix;
        let out_base = p * suffix;
        for (i, &ui) in u.iter().enumerate() {
            let row = in_base + i * suffix;
            for s in 0..suffix {
                out[out_base + s] += values[row + s] * ui;
            }
        }
    }
    let mut nd = dims.to_vec();
    nd.remove(axis);
    (nd, out)
}

/// Mode product on raw row-major storage.
fn mode_product_raw(
    dims: &[usize],
    values: &[C64],
    axis: usize,
    m: &DMatrix<C64>,
) -> (Vec<usize>, Vec<C64>) {
    let d = dims[axis];
    let dp = m.ncols();
    let suffix: usize = dims[axis + 1..].iter().product();
    let prefix: usize = dims[..axis].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); prefix * dp * suffix];
    for p in 0..prefix {
        for i in 0..d {
            let in_row = (p * d + i) * suffix;
            for j in 0..dp {
                let mij = m[(i, j)];
                if mij == C64::new(0.0, 0.0) {
                    continue;
                }
                let out_row = (p * dp + j) * suffix;
                for s in 0..suffix {
                    out[out_row + s] += values[in_row + s] * mij;
                }
            }
        }
    }
    let mut nd = dims.to_vec();
    nd[axis] = dp;
    (nd, out)
}

// ---------------------------------------------------------------------------
// VectorTuple
// ---------------------------------------------------------------------------

/// Per-axis vectors uₐ for a subset of axes, used by [`MultiArray::evaluate`]
/// and [`MultiArray::contract`]. Axes are 0-based and kept sorted.
#[derive(Debug, Clone)]
pub struct VectorTuple {
    entries: Vec<(usize, Vec<C64>)>,
}

impl VectorTuple {
    /// Build from (axis, vector) pairs. Axes must be distinct.
    pub fn new(mut entries: Vec<(usize, Vec<C64>)>) -> Result<VectorTuple> {
        entries.sort_by_key(|(a, _)| *a);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::arg("duplicate axis in vector tuple"));
        }
        Ok(VectorTuple { entries })
    }

    /// Build a full tuple covering axes 0, 1, … in order.
    pub fn full(vectors: Vec<Vec<C64>>) -> VectorTuple {
        VectorTuple {
            entries: vectors.into_iter().enumerate().collect(),
        }
    }

    /// Build a full tuple from real vectors.
    pub fn full_real(vectors: Vec<Vec<f64>>) -> VectorTuple {
        VectorTuple::full(
            vectors
                .into_iter()
                .map(|v| v.into_iter().map(|x| C64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    /// Covered axes, ascending.
    pub fn axes(&self) -> Vec<usize> {
        self.entries.iter().map(|(a, _)| *a).collect()
    }

    /// The (axis, vector) pairs, ascending by axis.
    pub fn entries(&self) -> &[(usize, Vec<C64>)] {
        &self.entries
    }

    fn check_against(&self, t: &MultiArray) -> Result<()> {
        for (axis, vec) in &self.entries {
            if *axis >= t.order() {
                return Err(Error::arg(format!(
                    "axis {axis} out of range for order {}",
                    t.order()
                )));
            }
            if vec.len() != t.dims()[*axis] {
                return Err(Error::arg(format!(
                    "vector for axis {axis} has length {}, expected {}",
                    vec.len(),
                    t.dims()[*axis]
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// TNSR v1 text format
// ---------------------------------------------------------------------------

/// Read a tensor from the `TNSR v1` text format.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<MultiArray> {
    let file = std::fs::File::open(path.as_ref())?;
    read_tensor_from(BufReader::new(file))
}

/// Read a tensor from any buffered reader (see [`read_tensor`]).
pub fn read_tensor_from(reader: impl BufRead) -> Result<MultiArray> {
    let mut lines = reader.lines();
    let mut line_no = 0usize;
    let next_line = |lines: &mut std::io::Lines<_>, line_no: &mut usize| -> Result<String> {
        *line_no += 1;
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::Io(e)),
            None => Err(Error::format(*line_no, "unexpected end of file")),
        }
    };

    let magic = next_line(&mut lines, &mut line_no)
        .map_err(|_| Error::format(1, "empty file: expected `TNSR 1` header"))?;
    if magic.split_whitespace().collect::<Vec<_>>() != ["TNSR", "1"] {
        return Err(Error::format(line_no, format!("expected `TNSR 1`, got `{magic}`")));
    }

    let field_line = next_line(&mut lines, &mut line_no)?;
    let toks: Vec<&str> = field_line.split_whitespace().collect();
    let field = match toks.as_slice() {
        ["field", tag] => Field::from_tag(tag)
            .ok_or_else(|| Error::format(line_no, format!("unknown field tag `{tag}`")))?,
        _ => return Err(Error::format(line_no, "expected `field real64|complex128`")),
    };

    let order_line = next_line(&mut lines, &mut line_no)?;
    let toks: Vec<&str> = order_line.split_whitespace().collect();
    let order: usize = match toks.as_slice() {
        ["order", n] => n
            .parse()
            .map_err(|_| Error::format(line_no, format!("bad order `{n}`")))?,
        _ => return Err(Error::format(line_no, "expected `order L`")),
    };
    if order < 2 {
        return Err(Error::format(line_no, format!("order must be at least 2, got {order}")));
    }

    let dims_line = next_line(&mut lines, &mut line_no)?;
    let toks: Vec<&str> = dims_line.split_whitespace().collect();
    if toks.first() != Some(&"dims") {
        return Err(Error::format(line_no, "expected `dims d1 ... dL`"));
    }
    if toks.len() != order + 1 {
        return Err(Error::format(
            line_no,
            format!("expected {} dims, got {}", order, toks.len() - 1),
        ));
    }
    let mut dims = Vec::with_capacity(order);
    for tok in &toks[1..] {
        let d: usize = tok
            .parse()
            .map_err(|_| Error::format(line_no, format!("bad dimension `{tok}`")))?;
        if d == 0 {
            return Err(Error::format(line_no, "dimensions must be positive"));
        }
        dims.push(d);
    }

    let data_line = next_line(&mut lines, &mut line_no)?;
    if data_line.trim() != "data" {
        return Err(Error::format(line_no, "expected `data`"));
    }

    // Entries are a whitespace-separated number stream; lines may wrap freely.
    let count = product(&dims);
    let numbers_needed = if field == Field::Complex128 { 2 * count } else { count };
    let mut numbers = Vec::with_capacity(numbers_needed);
    for line in lines {
        line_no += 1;
        let line = line.map_err(Error::Io)?;
        for tok in line.split_whitespace() {
            if numbers.len() == numbers_needed {
                return Err(Error::format(
                    line_no,
                    format!("extra data after {count} entries"),
                ));
            }
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::format(line_no, format!("bad number `{tok}`")))?;
            if !x.is_finite() {
                return Err(Error::format(line_no, format!("non-finite value `{tok}`")));
            }
            numbers.push(x);
        }
    }
    if numbers.len() != numbers_needed {
        return Err(Error::format(
            line_no,
            format!(
                "entry count mismatch: dims product {count} needs {numbers_needed} numbers, found {}",
                numbers.len()
            ),
        ));
    }
    let values: Vec<C64> = match field {
        Field::Real64 => numbers.into_iter().map(|x| C64::new(x, 0.0)).collect(),
        Field::Complex128 => numbers.chunks(2).map(|p| C64::new(p[0], p[1])).collect(),
    };
    MultiArray::new(dims, field, values)
}

/// Write a tensor in the `TNSR v1` text format (17 significant digits).
pub fn write_tensor(t: &MultiArray, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    write_tensor_to(t, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Write a tensor to any writer (see [`write_tensor`]).
pub fn write_tensor_to(t: &MultiArray, w: &mut impl Write) -> Result<()> {
    writeln!(w, "TNSR 1")?;
    writeln!(w, "field {}", t.field().tag())?;
    writeln!(w, "order {}", t.order())?;
    let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "dims {}", dims.join(" "))?;
    writeln!(w, "data")?;
    match t.field() {
        Field::Real64 => {
            for z in t.values() {
                writeln!(w, "{:.16e}", z.re)?;
            }
        }
        Field::Complex128 => {
            for z in t.values() {
                writeln!(w, "{:.16e} {:.16e}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// diag(1, -1) as a 2x2 array.
    fn diag_pm() -> MultiArray {
        MultiArray::from_real(vec![2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    fn random_real(dims: &[usize], seed: u64) -> MultiArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        MultiArray::from_real(dims.to_vec(), values).unwrap()
    }

    #[test]
    fn evaluate_unit_vectors_read_entries() {
        let t = diag_pm();
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let off = t
            .evaluate(&VectorTuple::full_real(vec![e1.clone(), e2.clone()]))
            .unwrap();
        assert_eq!(off, c(0.0), "off-diagonal entry of diag(1,-1)");
        let bottom = t
            .evaluate(&VectorTuple::full_real(vec![e2.clone(), e2]))
            .unwrap();
        assert_eq!(bottom, c(-1.0), "(2,2) entry of diag(1,-1)");
    }

    #[test]
    fn evaluate_zero_vector_kills_everything() {
        let t = random_real(&[3, 4, 5], 1);
        let u = VectorTuple::full_real(vec![vec![0.0; 3], vec![1.0; 4], vec![1.0; 5]]);
        assert_eq!(t.evaluate(&u).unwrap(), c(0.0));
    }

    #[test]
    fn evaluate_matches_direct_triple_sum() {
        let t = random_real(&[3, 4, 5], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u1: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u3: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Independent oracle: explicit triple sum.
        let mut direct = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    direct += t.get(&[i, j, k]).re * u1[i] * u2[j] * u3[k];
                }
            }
        }
        let got = t
            .evaluate(&VectorTuple::full_real(vec![u1, u2, u3]))
            .unwrap();
        assert!(
            (got.re - direct).abs() <= 1e-12 * direct.abs().max(1.0),
            "evaluate {} vs direct {}",
            got.re,
            direct
        );
    }

    #[test]
    fn evaluate_requires_full_cover() {
        let t = random_real(&[3, 4, 5], 4);
        let u = VectorTuple::new(vec![(0, vec![c(1.0); 3]), (2, vec![c(1.0); 5])]).unwrap();
        assert!(t.evaluate(&u).is_err());
    }

    #[test]
    fn contract_axis_slice() {
        // All-ones 2x2x2 contracted on axis 3 with (1,0) is the all-ones 2x2.
        let t = MultiArray::from_real(vec![2, 2, 2], vec![1.0; 8]).unwrap();
        let u = VectorTuple::new(vec![(2, vec![c(1.0), c(0.0)])]).unwrap();
        let s = t.contract(&u).unwrap();
        assert_eq!(s.dims(), &[2, 2]);
        assert!(s.values().iter().all(|&z| z == c(1.0)));
    }

    #[test]
    fn contract_matrix_row() {
        // diag(1,-1) contracted on axis 1 with e1 is the first row (1, 0).
        let t = diag_pm();
        let u = VectorTuple::new(vec![(0, vec![c(1.0), c(0.0)])]).unwrap();
        let row = t.contract(&u).unwrap();
        assert_eq!(row.order(), 1);
        assert_eq!(row.values(), &[c(1.0), c(0.0)]);
    }

    #[test]
    fn contract_then_evaluate_agrees_with_full_evaluate() {
        let t = random_real(&[3, 4, 5], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u1: Vec<C64> = (0..3).map(|_| c(rng.gen_range(-1.0..1.0))).collect();
        let u2: Vec<C64> = (0..4).map(|_| c(rng.gen_range(-1.0..1.0))).collect();
        let u3: Vec<C64> = (0..5).map(|_| c(rng.gen_range(-1.0..1.0))).collect();
        let partial = t
            .contract(&VectorTuple::new(vec![(1, u2.clone()), (2, u3.clone())]).unwrap())
            .unwrap();
        let finish: C64 = partial
            .values()
            .iter()
            .zip(&u1)
            .map(|(t_i, u_i)| t_i * u_i)
            .sum();
        let full = t
            .evaluate(&VectorTuple::new(vec![(0, u1), (1, u2), (2, u3)]).unwrap())
            .unwrap();
        assert!(
            (finish - full).norm() <= 1e-12 * full.norm().max(1.0),
            "two-stage {} vs one-shot {}",
            finish,
            full
        );
    }

    #[test]
    fn contract_rejects_empty_and_full_subsets() {
        let t = random_real(&[3, 4], 7);
        assert!(t.contract(&VectorTuple::new(vec![]).unwrap()).is_err());
        let full = VectorTuple::full_real(vec![vec![1.0; 3], vec![1.0; 4]]);
        assert!(t.contract(&full).is_err());
    }

    #[test]
    fn contraction_order_is_immaterial() {
        let t = random_real(&[3, 4, 5], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u2: Vec<C64> = (0..4).map(|_| c(rng.gen_range(-1.0..1.0))).collect();
        let u3: Vec<C64> = (0..5).map(|_| c(rng.gen_range(-1.0..1.0))).collect();
        let both = t
            .contract(&VectorTuple::new(vec![(1, u2.clone()), (2, u3.clone())]).unwrap())
            .unwrap();
        let stepwise = t
            .contract(&VectorTuple::new(vec![(2, u3)]).unwrap())
            .unwrap()
            .contract(&VectorTuple::new(vec![(1, u2)]).unwrap())
            .unwrap();
        for (a, b) in both.values().iter().zip(stepwise.values()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn mode_product_identity_is_noop() {
        let t = random_real(&[3, 4], 10);
        let id = DMatrix::<C64>::identity(3, 3);
        let s = t.mode_product(0, &id).unwrap();
        assert_eq!(s.values(), t.values());
        assert_eq!(s.field(), Field::Real64, "identity keeps the field tag");
    }

    #[test]
    fn mode_product_matches_matrix_oracle() {
        // Oracle: 2x2 matrix product computed by hand.
        // diag(1,-1) hit along axis 1 by the swap matrix gives [[0,-1],[1,0]].
        let t = diag_pm();
        let swap = DMatrix::<C64>::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let s = t.mode_product(0, &swap).unwrap();
        assert_eq!(
            s.values(),
            &[c(0.0), c(-1.0), c(1.0), c(0.0)],
            "swap rows of diag(1,-1) against the column index"
        );
    }

    #[test]
    fn mode_products_on_distinct_axes_commute() {
        let t = random_real(&[3, 4, 5], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::<C64>::from_fn(3, 2, |_, _| c(rng.gen_range(-1.0..1.0)));
        let b = DMatrix::<C64>::from_fn(5, 3, |_, _| c(rng.gen_range(-1.0..1.0)));
        let ab = t.mode_product(0, &a).unwrap().mode_product(2, &b).unwrap();
        let ba = t.mode_product(2, &b).unwrap().mode_product(0, &a).unwrap();
        assert_eq!(ab.dims(), &[2, 4, 3]);
        for (x, y) in ab.values().iter().zip(ba.values()) {
            assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0));
        }
    }

    #[test]
    fn transform_identity_and_round_trip() {
        let t = random_real(&[3, 4, 5], 13);
        let ids: Vec<DMatrix<C64>> = t
            .dims()
            .iter()
            .map(|&d| DMatrix::<C64>::identity(d, d))
            .collect();
        assert_eq!(t.transform(&ids).unwrap().values(), t.values());

        // Round-trip through a well-conditioned basis and its inverse.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let xs: Vec<DMatrix<C64>> = t
            .dims()
            .iter()
            .map(|&d| {
                DMatrix::<C64>::from_fn(d, d, |i, j| {
                    c(rng.gen_range(-1.0..1.0)) + if i == j { c(3.0) } else { c(0.0) }
                })
            })
            .collect();
        let inv: Vec<DMatrix<C64>> = xs.iter().map(|x| x.clone().try_inverse().unwrap()).collect();
        let back = t.transform(&xs).unwrap().transform(&inv).unwrap();
        let err: f64 = back
            .values()
            .iter()
            .zip(t.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(
            err <= 1e-10 * t.frobenius_norm(),
            "round-trip error {err} too large"
        );
    }

    #[test]
    fn transform_agrees_with_dual_evaluation() {
        let t = random_real(&[3, 4, 2], 15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let xs: Vec<DMatrix<C64>> = t
            .dims()
            .iter()
            .map(|&d| DMatrix::<C64>::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0))))
            .collect();
        let us: Vec<Vec<C64>> = t
            .dims()
            .iter()
            .map(|&d| (0..d).map(|_| c(rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let lhs = t
            .transform(&xs)
            .unwrap()
            .evaluate(&VectorTuple::full(us.clone()))
            .unwrap();
        let xu: Vec<Vec<C64>> = xs
            .iter()
            .zip(&us)
            .map(|(x, u)| {
                let uv = nalgebra::DVector::from_column_slice(u);
                (x * uv).iter().copied().collect()
            })
            .collect();
        let rhs = t.evaluate(&VectorTuple::full(xu)).unwrap();
        assert!(
            (lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1.0),
            "transform-then-evaluate {lhs} vs evaluate-on-mapped {rhs}"
        );
    }

    #[test]
    fn multilinearity_in_each_slot() {
        let t = random_real(&[3, 4, 2], 17);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for axis in 0..3 {
            let base: Vec<Vec<C64>> = t
                .dims()
                .iter()
                .map(|&d| (0..d).map(|_| c(rng.gen_range(-1.0..1.0))).collect())
                .collect();
            let v: Vec<C64> = (0..t.dims()[axis])
                .map(|_| c(rng.gen_range(-1.0..1.0)))
                .collect();
            let lambda = c(rng.gen_range(-2.0..2.0));

            let mut with_sum = base.clone();
            for (w, x) in with_sum[axis].iter_mut().zip(&v) {
                *w += lambda * x;
            }
            let mut with_v = base.clone();
            with_v[axis] = v;

            let lhs = t.evaluate(&VectorTuple::full(with_sum)).unwrap();
            let rhs = t.evaluate(&VectorTuple::full(base)).unwrap()
                + lambda * t.evaluate(&VectorTuple::full(with_v)).unwrap();
            assert!(
                (lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1.0),
                "axis {axis}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn constructors_enforce_invariants() {
        assert!(MultiArray::from_real(vec![4], vec![0.0; 4]).is_err(), "order 1");
        assert!(MultiArray::from_real(vec![2, 0], vec![]).is_err(), "zero dim");
        assert!(MultiArray::from_real(vec![2, 2], vec![0.0; 3]).is_err(), "count");
        assert!(
            MultiArray::from_real(vec![2, 2], vec![0.0, 1.0, f64::NAN, 0.0]).is_err(),
            "NaN"
        );
        assert!(
            MultiArray::new(
                vec![2, 2],
                Field::Real64,
                vec![C64::new(0.0, 1.0), c(0.0), c(0.0), c(0.0)]
            )
            .is_err(),
            "imaginary part in a real64 array"
        );
    }

    #[test]
    fn tnsr_round_trip_real() {
        let t = random_real(&[3, 4, 5], 19);
        let mut buf = Vec::new();
        write_tensor_to(&t, &mut buf).unwrap();
        let back = read_tensor_from(buf.as_slice()).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert_eq!(back.field(), Field::Real64);
        assert_eq!(back.values(), t.values(), "17-digit round-trip is exact for f64");
    }

    #[test]
    fn tnsr_round_trip_complex() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let t = MultiArray::from_fn(vec![2, 3], Field::Complex128, |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&t, &mut buf).unwrap();
        let back = read_tensor_from(buf.as_slice()).unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!(back.field(), Field::Complex128);
    }

    #[test]
    fn tnsr_malformed_inputs() {
        let empty = read_tensor_from(&b""[..]);
        assert!(matches!(empty, Err(Error::Format { line: 1, .. })), "empty file");

        let bad_count = "TNSR 1\nfield real64\norder 2\ndims 2 2\ndata\n1 2 3\n";
        let err = read_tensor_from(bad_count.as_bytes()).unwrap_err();
        assert!(
            matches!(err, Error::Format { .. }),
            "count mismatch reports a format error, got {err:?}"
        );

        let bad_header = "TNSR 2\nfield real64\norder 2\ndims 2 2\ndata\n1 2 3 4\n";
        assert!(matches!(
            read_tensor_from(bad_header.as_bytes()),
            Err(Error::Format { line: 1, .. })
        ));

        let bad_number = "TNSR 1\nfield real64\norder 2\ndims 2 2\ndata\n1 2 x 4\n";
        let err = read_tensor_from(bad_number.as_bytes()).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 6, "error points at the data line"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn tnsr_wrapped_data_lines_are_fine() {
        let wrapped = "TNSR 1\nfield real64\norder 2\ndims 2 3\ndata\n1 2\n3\n4 5 6\n";
        let t = read_tensor_from(wrapped.as_bytes()).unwrap();
        assert_eq!(
            t.values(),
            &[c(1.0), c(2.0), c(3.0), c(4.0), c(5.0), c(6.0)]
        );
    }
}
