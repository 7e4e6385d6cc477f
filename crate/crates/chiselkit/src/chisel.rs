//! Chisels: the m×ℓ coefficient matrices that parameterize derivation
//! systems and null-pattern families.
//!
//! Two chisels are *equivalent* when one is `M·C·D` up to a column
//! permutation, with `M` invertible and `D` diagonal invertible; equivalent
//! chisels carve the same patterns and have the same derivation spaces.
//! [`Chisel::normalize`] computes a canonical representative of the
//! `(M, D)`-orbit for a fixed column order; [`Chisel::equivalent`] adds the
//! brute-force permutation search; [`Chisel::classify3`] names the seven
//! equivalence classes of nonzero 3-chisels.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance used to decide that a float entry is "zero" during
/// row reduction and classification, scaled by the largest entry in play.
const ZERO_REL_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Chisel
// ---------------------------------------------------------------------------

/// An m×ℓ real coefficient matrix with no all-zero rows, ℓ ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Chisel {
    entries: DMatrix<f64>,
}

impl Chisel {
    /// Build from rows; all-zero rows are stripped. Errors when no nonzero
    /// row remains, when rows are ragged, or when ℓ < 2.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Chisel> {
        if rows.is_empty() {
            return Err(Error::arg("chisel needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::arg("chisel rows have inconsistent lengths"));
        }
        if cols < 2 {
            return Err(Error::arg(format!("chisel needs at least 2 columns, got {cols}")));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::arg("chisel entries must be finite"));
        }
        let kept: Vec<Vec<f64>> = rows
            .into_iter()
            .filter(|r| r.iter().any(|&x| x != 0.0))
            .collect();
        if kept.is_empty() {
            return Err(Error::arg("chisel has no nonzero rows"));
        }
        let m = kept.len();
        let entries = DMatrix::from_fn(m, cols, |i, j| kept[i][j]);
        Ok(Chisel { entries })
    }

    /// The universal chisel `[1 1 … 1]` on ℓ axes.
    pub fn universal(l: usize) -> Result<Chisel> {
        Chisel::from_rows(vec![vec![1.0; l]])
    }

    /// The adjoint chisel: one row with +1 at axis `a`, −1 at axis `b`
    /// (0-based), zero elsewhere.
    pub fn adjoint(l: usize, a: usize, b: usize) -> Result<Chisel> {
        if a == b {
            return Err(Error::arg("adjoint chisel needs two distinct axes"));
        }
        if a >= l || b >= l {
            return Err(Error::arg(format!("adjoint axes ({a},{b}) out of range for l={l}")));
        }
        let mut row = vec![0.0; l];
        row[a] = 1.0;
        row[b] = -1.0;
        Chisel::from_rows(vec![row])
    }

    /// The 3-axis centroid chisel `[[1,−1,0],[0,1,−1]]`.
    pub fn centroid3() -> Chisel {
        Chisel::from_rows(vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]]).unwrap()
    }

    /// The Tucker chisel: identity rows e_s for each s in `axes` (0-based).
    pub fn tucker(axes: &[usize], l: usize) -> Result<Chisel> {
        if axes.is_empty() {
            return Err(Error::arg("tucker chisel needs at least one axis"));
        }
        let set: BTreeSet<usize> = axes.iter().copied().collect();
        if set.len() != axes.len() {
            return Err(Error::arg("tucker axes must be distinct"));
        }
        if set.iter().any(|&a| a >= l) {
            return Err(Error::arg(format!("tucker axis out of range for l={l}")));
        }
        let rows = set
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; l];
                row[a] = 1.0;
                row
            })
            .collect();
        Chisel::from_rows(rows)
    }

    /// Number of rows m.
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of columns ℓ (one per tensor axis).
    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Entry C[j, a].
    pub fn entry(&self, j: usize, a: usize) -> f64 {
        self.entries[(j, a)]
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Axes whose column is not identically zero (0-based, ascending).
    pub fn engaged_axes(&self) -> Vec<usize> {
        (0..self.ncols())
            .filter(|&a| self.entries.column(a).iter().any(|&x| x != 0.0))
            .collect()
    }

    /// Apply a column permutation: result column `j` is `self` column
    /// `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Chisel> {
        if perm.len() != self.ncols() {
            return Err(Error::arg("permutation length mismatch"));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::arg("not a permutation"));
            }
            seen[p] = true;
        }
        let entries = DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| self.entries[(i, perm[j])]);
        Ok(Chisel { entries })
    }

    // -----------------------------------------------------------------------
    // Normal form
    // -----------------------------------------------------------------------

    /// Canonical representative of the (row-operation, column-scaling) orbit
    /// for the *fixed* column order, with zero columns stably moved leftmost.
    ///
    /// Procedure: reduced row echelon form (zero rows stripped), zero columns
    /// permuted leftmost, then as many entries as possible scaled to 1. The
    /// scaling pass walks non-pivot columns left to right and rows top to
    /// bottom (rows are in leftmost-pivot order after RREF): an entry is set
    /// to 1 — via the column's scale if the column is still free, else via
    /// the entry's row scale (compensated through that row's pivot column) —
    /// whenever doing so does not disturb an entry already normalized.
    /// Entries that cannot be set to 1 are the genuine invariants of the
    /// orbit. The transcript records the row transform, column scales and
    /// column permutation realizing the form.
    pub fn normalize(&self) -> (Chisel, NormalizeTranscript) {
        let m = self.nrows();
        let l = self.ncols();
        let scale = self
            .entries
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()));
        let tol = ZERO_REL_TOL * scale.max(1.0) * (m.max(l) as f64);

        // --- RREF with row-transform tracking -------------------------------
        let mut w = self.entries.clone();
        let mut e = DMatrix::<f64>::identity(m, m);
        let mut pivot_cols: Vec<usize> = Vec::new();
        let mut row = 0usize;
        for col in 0..l {
            if row == m {
                break;
            }
            // Partial pivot: largest entry in this column at or below `row`.
            let (best, best_abs) = (row..m)
                .map(|r| (r, w[(r, col)].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if best_abs <= tol {
                continue;
            }
            w.swap_rows(row, best);
            e.swap_rows(row, best);
            let p = w[(row, col)];
            for c in 0..l {
                w[(row, c)] /= p;
            }
            for c in 0..m {
                e[(row, c)] /= p;
            }
            w[(row, col)] = 1.0;
            for r in 0..m {
                if r != row {
                    let f = w[(r, col)];
                    if f != 0.0 {
                        for c in 0..l {
                            w[(r, c)] -= f * w[(row, c)];
                        }
                        for c in 0..m {
                            e[(r, c)] -= f * e[(row, c)];
                        }
                        w[(r, col)] = 0.0;
                    }
                }
            }
            pivot_cols.push(col);
            row += 1;
        }
        let rank = row;

        // Snap to exact zeros below tolerance so the form is clean.
        for x in w.iter_mut() {
            if x.abs() <= tol {
                *x = 0.0;
            }
        }

        // --- Zero columns leftmost (stable) ----------------------------------
        let zero_cols: Vec<usize> = (0..l)
            .filter(|&c| (0..rank).all(|r| w[(r, c)] == 0.0))
            .collect();
        let nonzero_cols: Vec<usize> = (0..l).filter(|c| !zero_cols.contains(c)).collect();
        let perm: Vec<usize> = zero_cols.iter().chain(nonzero_cols.iter()).copied().collect();
        let mut n = DMatrix::<f64>::from_fn(rank, l, |i, j| w[(i, perm[j])]);
        let pivot_of_row: Vec<usize> = pivot_cols
            .iter()
            .map(|pc| perm.iter().position(|&p| p == *pc).unwrap())
            .collect();

        // --- Gauge pass: spanning-forest scaling ------------------------------
        // Nodes: rows (0..rank) and columns (rank..rank+l). Pivot entries are
        // pre-existing tree edges (they must remain 1).
        let mut uf = UnionFind::new(rank + l);
        #[derive(Clone, Copy)]
        struct Edge {
            row: usize,
            col: usize,
            value: f64,
        }
        let mut edges: Vec<Edge> = Vec::new();
        for (r, &pc) in pivot_of_row.iter().enumerate() {
            uf.union(r, rank + pc);
            edges.push(Edge { row: r, col: pc, value: 1.0 });
        }
        let is_pivot_col = {
            let mut v = vec![false; l];
            for &pc in &pivot_of_row {
                v[pc] = true;
            }
            v
        };
        for c in 0..l {
            if is_pivot_col[c] {
                continue;
            }
            for r in 0..rank {
                let v = n[(r, c)];
                if v == 0.0 {
                    continue;
                }
                if uf.union(r, rank + c) {
                    edges.push(Edge { row: r, col: c, value: v });
                }
            }
        }
        // Solve r_row · value · s_col = 1 along tree edges, roots get scale 1.
        let mut row_scale = vec![f64::NAN; rank];
        let mut col_scale = vec![f64::NAN; l];
        // Iterate to propagation fixpoint (forests are tiny).
        for (c, scale) in col_scale.iter_mut().enumerate() {
            // Columns not touched by any edge keep scale 1 (incl. zero cols).
            if !edges.iter().any(|e| e.col == c) {
                *scale = 1.0;
            }
        }
        loop {
            let mut progressed = false;
            for e in &edges {
                match (row_scale[e.row].is_nan(), col_scale[e.col].is_nan()) {
                    (true, true) => {}
                    (true, false) => {
                        row_scale[e.row] = 1.0 / (e.value * col_scale[e.col]);
                        progressed = true;
                    }
                    (false, true) => {
                        col_scale[e.col] = 1.0 / (e.value * row_scale[e.row]);
                        progressed = true;
                    }
                    (false, false) => {}
                }
            }
            if !progressed {
                // Seed one unresolved tree with a unit row scale.
                if let Some(r) = row_scale.iter().position(|x| x.is_nan()) {
                    row_scale[r] = 1.0;
                } else {
                    break;
                }
            }
        }
        for s in col_scale.iter_mut() {
            if s.is_nan() {
                *s = 1.0;
            }
        }

        for r in 0..rank {
            for c in 0..l {
                n[(r, c)] *= row_scale[r] * col_scale[c];
            }
        }
        // Snap gauge-fixed entries exactly.
        for x in n.iter_mut() {
            if (*x - 1.0).abs() <= tol {
                *x = 1.0;
            } else if x.abs() <= tol {
                *x = 0.0;
            }
        }

        // Fold row scales into the row transform (rows beyond rank untouched).
        for (r, &s) in row_scale.iter().enumerate() {
            for c in 0..m {
                e[(r, c)] *= s;
            }
        }

        let normal = Chisel { entries: n };
        let transcript = NormalizeTranscript {
            row_transform: e,
            col_scale,
            col_perm: perm,
            rank,
        };
        (normal, transcript)
    }

    // -----------------------------------------------------------------------
    // Classification and equivalence
    // -----------------------------------------------------------------------

    /// Classify a nonzero 3-chisel into one of the seven equivalence classes,
    /// returning the class and the column permutation realizing its normal
    /// form. Total over all valid 3-chisels.
    pub fn classify3(&self) -> Result<ChiselClass3> {
        if self.ncols() != 3 {
            return Err(Error::arg(format!(
                "classification needs 3 columns, got {}",
                self.ncols()
            )));
        }
        for perm in permutations(3) {
            let permuted = self.permute_columns(&perm)?;
            let (nf, _) = permuted.normalize();
            for kind in ChiselClassKind::ALL {
                if matrices_match(nf.matrix(), &kind.normal_form()) {
                    return Ok(ChiselClass3 { kind, perm });
                }
            }
        }
        Err(Error::Numerical(
            "3-chisel matched none of the seven normal forms".into(),
        ))
    }

    /// True when `self` and `other` are equivalent (row operations, column
    /// scaling, column permutation). Brute-force search over all ℓ!
    /// permutations; ℓ ≤ 8.
    pub fn equivalent(&self, other: &Chisel) -> Result<bool> {
        if self.ncols() != other.ncols() {
            return Err(Error::arg(format!(
                "chisels have different axis counts: {} vs {}",
                self.ncols(),
                other.ncols()
            )));
        }
        let l = self.ncols();
        if l > 8 {
            return Err(Error::Size(format!(
                "equivalence search supports at most 8 axes, got {l}"
            )));
        }
        let (nf, _) = self.normalize();
        for perm in permutations(l) {
            let (nf_other, _) = other.permute_columns(&perm)?.normalize();
            if nf.nrows() == nf_other.nrows() && matrices_match(nf.matrix(), nf_other.matrix()) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    // -----------------------------------------------------------------------
    // Scalar derivations
    // -----------------------------------------------------------------------

    /// Orthonormal basis of the scalar-derivation directions: vectors
    /// δ ∈ K^ℓ with C·δᵀ = 0 and δₐ = 0 on every disengaged axis (the zero
    /// operator is the only admissible choice there). Returns the basis
    /// (each vector length ℓ) and its dimension e.
    ///
    /// For everywhere-engaged chisels this is the plain right nullspace and
    /// e = ℓ − rank(C); disengaged axes reduce e by one each relative to
    /// that formula.
    pub fn scalar_nullspace(&self) -> (Vec<Vec<f64>>, usize) {
        let engaged = self.engaged_axes();
        let l = self.ncols();
        if engaged.is_empty() {
            return (Vec::new(), 0);
        }
        // Pad with zero rows so the SVD returns a complete set of right
        // singular vectors (the economy SVD of a wide matrix truncates v_t).
        let rows = self.nrows().max(engaged.len());
        let sub = DMatrix::<f64>::from_fn(rows, engaged.len(), |i, j| {
            if i < self.nrows() { self.entries[(i, engaged[j])] } else { 0.0 }
        });
        let svd = sub.svd(false, true);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
        let tol = (self.nrows().max(l) as f64) * smax * f64::EPSILON;
        let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
        let mut basis = Vec::new();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                basis.push(embed_row(v_t.row(i).iter().copied(), &engaged, l));
            }
        }
        // Deterministic sign: first nonzero component positive.
        for v in basis.iter_mut() {
            if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-12) {
                if lead < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
        }
        let e = basis.len();
        (basis, e)
    }

    /// Numerical rank via SVD with tolerance max(m, ℓ)·σ_max·ε.
    pub fn rank(&self) -> usize {
        let engaged = self.engaged_axes();
        engaged.len() - self.scalar_nullspace().1
    }

    // -----------------------------------------------------------------------
    // Text format
    // -----------------------------------------------------------------------

    /// Parse the chisel text format: one row per line, whitespace-separated
    /// scalars; blank lines ignored.
    pub fn parse_text(text: &str) -> Result<Chisel> {
        let mut rows = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for tok in trimmed.split_whitespace() {
                let x: f64 = tok
                    .parse()
                    .map_err(|_| Error::format(no + 1, format!("bad chisel entry `{tok}`")))?;
                row.push(x);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::format(1, "empty chisel file"));
        }
        Chisel::from_rows(rows)
    }

    /// Render in the chisel text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.nrows() {
            let row: Vec<String> = (0..self.ncols())
                .map(|j| format!("{}", self.entries[(i, j)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn embed_row(values: impl Iterator<Item = f64>, engaged: &[usize], l: usize) -> Vec<f64> {
    let mut full = vec![0.0; l];
    for (slot, v) in engaged.iter().zip(values) {
        full[*slot] = v;
    }
    full
}

fn matrices_match(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let scale = a.iter().chain(b.iter()).fold(1.0f64, |acc, x| acc.max(x.abs()));
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-7 * scale)
}

/// All permutations of 0..n in lexicographic order (n ≤ 8 in practice).
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    fn rec(n: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, pos: usize, out: &mut Vec<Vec<usize>>) {
        if pos == n {
            out.push(cur.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur[pos] = v;
                rec(n, cur, used, pos + 1, out);
                used[v] = false;
            }
        }
    }
    rec(n, &mut cur, &mut used, 0, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Transcript, classes
// ---------------------------------------------------------------------------

/// Record of the transformations applied by [`Chisel::normalize`]:
/// `diag-scaled row transform · C`, columns permuted by `col_perm` then
/// scaled by `col_scale`, equals the normal form padded with zero rows.
#[derive(Debug, Clone)]
pub struct NormalizeTranscript {
    /// Invertible m×m row transform (RREF operations with the gauge row
    /// scales folded in).
    pub row_transform: DMatrix<f64>,
    /// Per-output-column scale factors.
    pub col_scale: Vec<f64>,
    /// Output column `j` comes from input column `col_perm[j]`.
    pub col_perm: Vec<usize>,
    /// Numerical rank (row count of the normal form).
    pub rank: usize,
}

impl NormalizeTranscript {
    /// Reconstruct the normal form (with trailing zero rows) from the
    /// original chisel; used to validate the transcript.
    pub fn apply(&self, c: &Chisel) -> DMatrix<f64> {
        let reduced = &self.row_transform * c.matrix();
        DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
            reduced[(i, self.col_perm[j])] * self.col_scale[j]
        })
    }
}

/// The seven equivalence classes of nonzero 3-chisels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChiselClassKind {
    ThirdTucker,
    SecondTucker,
    FirstTucker,
    Centroid,
    Adjoint,
    Universal,
    FirstTuckerPlusAdjoint,
}

impl ChiselClassKind {
    /// All classes, in the order they are probed.
    pub const ALL: [ChiselClassKind; 7] = [
        ChiselClassKind::ThirdTucker,
        ChiselClassKind::SecondTucker,
        ChiselClassKind::FirstTucker,
        ChiselClassKind::Centroid,
        ChiselClassKind::Adjoint,
        ChiselClassKind::Universal,
        ChiselClassKind::FirstTuckerPlusAdjoint,
    ];

    /// The class's normal-form matrix (zero columns leftmost).
    pub fn normal_form(self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = match self {
            ChiselClassKind::ThirdTucker => vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            ChiselClassKind::SecondTucker => {
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
            }
            ChiselClassKind::FirstTucker => vec![vec![0.0, 0.0, 1.0]],
            ChiselClassKind::Centroid => vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
            ChiselClassKind::Adjoint => vec![vec![0.0, 1.0, 1.0]],
            ChiselClassKind::Universal => vec![vec![1.0, 1.0, 1.0]],
            ChiselClassKind::FirstTuckerPlusAdjoint => {
                vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]
            }
        };
        DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j])
    }
}

impl fmt::Display for ChiselClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ChiselClassKind::ThirdTucker => "ThirdTucker",
            ChiselClassKind::SecondTucker => "SecondTucker",
            ChiselClassKind::FirstTucker => "FirstTucker",
            ChiselClassKind::Centroid => "Centroid",
            ChiselClassKind::Adjoint => "Adjoint",
            ChiselClassKind::Universal => "Universal",
            ChiselClassKind::FirstTuckerPlusAdjoint => "FirstTucker+Adjoint",
        };
        f.write_str(name)
    }
}

/// Classification result: the class plus the column permutation under which
/// the chisel reaches the class normal form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChiselClass3 {
    /// Which of the seven classes.
    pub kind: ChiselClassKind,
    /// Column permutation realizing the normal form (0-based).
    pub perm: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Union-find for the gauge pass
// ---------------------------------------------------------------------------

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Union two nodes; returns true when they were in different components.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            false
        } else {
            self.parent[ra] = rb;
            true
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
