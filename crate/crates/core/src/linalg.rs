//! Dense complex linear algebra over composite Hilbert spaces.
//!
//! All composite indices follow the row-major Kronecker convention: the
//! left-most factor of a [`SpaceLayout`] is the most significant digit of the
//! flat index.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex matrix used for every operator in the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Largest tolerated entry of `m - m†` before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues below this are treated as zero by pseudo-inverses and entropies.
pub const SUPPORT_CUTOFF: f64 = 1e-12;
/// Most negative eigenvalue accepted (and clipped) for a PSD operator.
pub const PSD_TOL: f64 = 1e-10;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One named tensor factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of named tensor factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    factors: Vec<Factor>,
}

impl SpaceLayout {
    pub fn new<I, S>(factors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let factors: Vec<Factor> = factors
            .into_iter()
            .map(|(label, dim)| Factor {
                label: label.into(),
                dim,
            })
            .collect();
        Self::from_factors(factors)
    }

    pub fn from_factors(factors: Vec<Factor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &factors {
            if f.label.is_empty() {
                return Err(Error::InvalidLayout("empty factor label".into()));
            }
            if f.dim == 0 {
                return Err(Error::InvalidLayout(format!(
                    "factor `{}` has dimension 0",
                    f.label
                )));
            }
            if !seen.insert(f.label.clone()) {
                return Err(Error::DuplicateLabel(f.label.clone()));
            }
        }
        Ok(Self { factors })
    }

    /// Layout without any factor (total dimension 1).
    pub fn trivial() -> Self {
        Self {
            factors: Vec::new(),
        }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.label.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.position(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.index_of(label)?].dim)
    }

    /// Sub-layout holding `labels`, kept in this layout's order.
    pub fn select(&self, labels: &[&str]) -> Result<SpaceLayout> {
        for l in labels {
            self.index_of(l)?;
        }
        Ok(Self {
            factors: self
                .factors
                .iter()
                .filter(|f| labels.contains(&f.label.as_str()))
                .cloned()
                .collect(),
        })
    }

    /// Sub-layout with `labels` removed.
    pub fn without(&self, labels: &[&str]) -> Result<SpaceLayout> {
        for l in labels {
            self.index_of(l)?;
        }
        Ok(Self {
            factors: self
                .factors
                .iter()
                .filter(|f| !labels.contains(&f.label.as_str()))
                .cloned()
                .collect(),
        })
    }

    /// The same factors in `order`, which must be a permutation of the labels.
    pub fn reorder(&self, order: &[&str]) -> Result<SpaceLayout> {
        if order.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "order {order:?} is not a permutation of {self}"
            )));
        }
        let mut factors = Vec::with_capacity(order.len());
        let mut seen = HashSet::new();
        for l in order {
            if !seen.insert(*l) {
                return Err(Error::InvalidArgument(format!(
                    "order {order:?} repeats `{l}`"
                )));
            }
            factors.push(self.factors[self.index_of(l)?].clone());
        }
        Ok(Self { factors })
    }

    pub fn concat(&self, other: &SpaceLayout) -> Result<SpaceLayout> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Self::from_factors(factors)
    }

    /// Replaces the factors `old` by the factors of `new`, inserted where the
    /// first of `old` sat.
    pub fn replace(&self, old: &[&str], new: &SpaceLayout) -> Result<SpaceLayout> {
        let first = old
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .min();
        let mut factors = Vec::new();
        for (i, f) in self.factors.iter().enumerate() {
            if Some(i) == first {
                factors.extend(new.factors.iter().cloned());
            }
            if !old.contains(&f.label.as_str()) {
                factors.push(f.clone());
            }
        }
        if first.is_none() {
            factors.extend(new.factors.iter().cloned());
        }
        Self::from_factors(factors)
    }

    /// Collapses all factors into a single one called `label`.
    pub fn merged(&self, label: &str) -> SpaceLayout {
        Self {
            factors: vec![Factor {
                label: label.to_string(),
                dim: self.total_dim(),
            }],
        }
    }

    /// Same dimensions under new labels.
    pub fn relabel(&self, labels: &[&str]) -> Result<SpaceLayout> {
        if labels.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels given for {} factors",
                labels.len(),
                self.len()
            )));
        }
        Self::new(labels.iter().zip(self.dims()).map(|(l, d)| (*l, d)))
    }

    fn strides(&self) -> Vec<usize> {
        let dims = self.dims();
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        strides
    }

    /// Flat-index offsets of every multi-index over the factors at `positions`.
    fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let dims = self.dims();
        let strides = self.strides();
        let mut out = vec![0usize];
        for &p in positions {
            let mut next = Vec::with_capacity(out.len() * dims[p]);
            for &o in &out {
                for k in 0..dims[p] {
                    next.push(o + k * strides[p]);
                }
            }
            out = next;
        }
        out
    }
}

impl fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "()");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| format!("{}({})", x.label, x.dim))
            .collect();
        write!(f, "{}", parts.join("⊗"))
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Column vector |i⟩ in dimension `d`.
pub fn ket(d: usize, i: usize) -> CMatrix {
    let mut k = CMatrix::zeros(d, 1);
    k[(i, 0)] = ONE;
    k
}

/// |i⟩⟨j| in dimension `d`.
pub fn unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

pub fn real_diag(values: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = Complex64::new(*v, 0.0);
    }
    m
}

pub fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entry of `m - m†`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Kronecker product with `a`'s indices major.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn tensor_all<'a, I>(ms: I) -> CMatrix
where
    I: IntoIterator<Item = &'a CMatrix>,
{
    ms.into_iter()
        .fold(identity(1), |acc, m| acc.kronecker(m))
}

/// Block-diagonal matrix built from square blocks.
pub fn direct_sum(blocks: &[CMatrix]) -> Result<CMatrix> {
    let mut n = 0;
    for b in blocks {
        if !b.is_square() {
            return Err(Error::NotSquare {
                rows: b.nrows(),
                cols: b.ncols(),
            });
        }
        n += b.nrows();
    }
    let mut out = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let d = b.nrows();
        out.view_mut((off, off), (d, d)).copy_from(b);
        off += d;
    }
    Ok(out)
}

fn check_square_layout(m: &CMatrix, layout: &SpaceLayout) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() != layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has dimension {} but layout {} has {}",
            m.nrows(),
            layout,
            layout.total_dim()
        )));
    }
    Ok(())
}

/// Traces out every factor not in `keep`; the result lives on the kept
/// factors in layout order.
pub fn partial_trace(
    m: &CMatrix,
    layout: &SpaceLayout,
    keep: &[&str],
) -> Result<(CMatrix, SpaceLayout)> {
    check_square_layout(m, layout)?;
    let kept = layout.select(keep)?;
    let kept_pos: Vec<usize> = (0..layout.len())
        .filter(|&i| keep.contains(&layout.factors[i].label.as_str()))
        .collect();
    let traced_pos: Vec<usize> = (0..layout.len())
        .filter(|i| !kept_pos.contains(i))
        .collect();
    let ko = layout.offsets(&kept_pos);
    let to = layout.offsets(&traced_pos);
    let n = ko.len();
    let out = CMatrix::from_fn(n, n, |r, c| {
        to.iter()
            .map(|t| m[(ko[r] + t, ko[c] + t)])
            .sum::<Complex64>()
    });
    Ok((out, kept))
}

/// `perm[new_flat] = old_flat` for reordering `layout` into `new_order`.
pub fn permutation_indices(layout: &SpaceLayout, new_order: &[&str]) -> Result<Vec<usize>> {
    let reordered = layout.reorder(new_order)?;
    let positions: Vec<usize> = reordered
        .labels()
        .iter()
        .map(|l| layout.index_of(l))
        .collect::<Result<_>>()?;
    Ok(layout.offsets(&positions))
}

/// Conjugates `m` by the index permutation taking `layout` to `new_order`.
pub fn permute_subsystems(
    m: &CMatrix,
    layout: &SpaceLayout,
    new_order: &[&str],
) -> Result<(CMatrix, SpaceLayout)> {
    check_square_layout(m, layout)?;
    let perm = permutation_indices(layout, new_order)?;
    let n = perm.len();
    let out = CMatrix::from_fn(n, n, |i, j| m[(perm[i], perm[j])]);
    Ok((out, layout.reorder(new_order)?))
}

/// Permutes the row index of a rectangular operator.
pub fn permute_rows(m: &CMatrix, layout: &SpaceLayout, new_order: &[&str]) -> Result<CMatrix> {
    if m.nrows() != layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows against layout {}",
            m.nrows(),
            layout
        )));
    }
    let perm = permutation_indices(layout, new_order)?;
    Ok(CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(perm[i], j)]))
}

/// Permutes the column index of a rectangular operator.
pub fn permute_cols(m: &CMatrix, layout: &SpaceLayout, new_order: &[&str]) -> Result<CMatrix> {
    if m.ncols() != layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns against layout {}",
            m.ncols(),
            layout
        )));
    }
    let perm = permutation_indices(layout, new_order)?;
    Ok(CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, perm[j])]))
}

/// Lifts `op: op_in → op_out` to `I_spectators ⊗ op` on `full`.
///
/// Spectators are the factors of `full` outside `op_in`. The output layout
/// is `full` with the `op_in` factors replaced by `op_out`, inserted where
/// the first acted-on factor sat.
pub fn embed_operator(
    op: &CMatrix,
    op_in: &SpaceLayout,
    op_out: &SpaceLayout,
    full: &SpaceLayout,
) -> Result<(CMatrix, SpaceLayout)> {
    if op.nrows() != op_out.total_dim() || op.ncols() != op_in.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but maps {} to {}",
            op.nrows(),
            op.ncols(),
            op_in,
            op_out
        )));
    }
    let acted = op_in.labels();
    for f in op_in.factors() {
        if full.dim_of(&f.label)? != f.dim {
            return Err(Error::DimensionMismatch(format!(
                "factor `{}` has dimension {} in {} but {} in {}",
                f.label,
                f.dim,
                op_in,
                full.dim_of(&f.label)?,
                full
            )));
        }
    }
    let spectators = full.without(&acted)?;
    let out_layout = full.replace(&acted, op_out)?;
    let big = tensor(&identity(spectators.total_dim()), op);

    let in_ordered = spectators.concat(op_in)?;
    let in_perm = permutation_indices(full, &in_ordered.labels())?;
    let mut col_of = vec![0; in_perm.len()];
    for (new, &old) in in_perm.iter().enumerate() {
        col_of[old] = new;
    }
    let out_ordered = spectators.concat(op_out)?;
    let row_of = permutation_indices(&out_ordered, &out_layout.labels())?;

    let lifted = CMatrix::from_fn(out_layout.total_dim(), full.total_dim(), |i, j| {
        big[(row_of[i], col_of[j])]
    });
    Ok((lifted, out_layout))
}

/// Keeps the rows of `op` whose `label` index equals `k`, i.e. `(⟨k| ⊗ I) op`
/// with the factor removed from the output layout.
pub fn project_output(
    op: &CMatrix,
    out_layout: &SpaceLayout,
    label: &str,
    k: usize,
) -> Result<(CMatrix, SpaceLayout)> {
    if op.nrows() != out_layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows against layout {}",
            op.nrows(),
            out_layout
        )));
    }
    let pos = out_layout.index_of(label)?;
    let d = out_layout.factors()[pos].dim;
    if k >= d {
        return Err(Error::InvalidArgument(format!(
            "index {k} out of range for factor `{label}` of dimension {d}"
        )));
    }
    let rest_pos: Vec<usize> = (0..out_layout.len()).filter(|&i| i != pos).collect();
    let rows = out_layout.offsets(&rest_pos);
    let shift = k * out_layout.strides()[pos];
    let rest = out_layout.without(&[label])?;
    let m = CMatrix::from_fn(rows.len(), op.ncols(), |i, j| op[(rows[i] + shift, j)]);
    Ok((m, rest))
}

/// Isometry `|s⟩ ↦ |s⟩ ⊗ |index⟩` from `sub` into `full`, where `full`
/// adds the factors of `extra` (placed in `full`'s order) and `index` is a
/// flat index into `extra`.
pub fn ket_embedding(full: &SpaceLayout, extra: &[&str], index: usize) -> Result<CMatrix> {
    let extra_layout = full.select(extra)?;
    if index >= extra_layout.total_dim() {
        return Err(Error::InvalidArgument(format!(
            "index {index} out of range for {extra_layout}"
        )));
    }
    let sub = full.without(extra)?;
    let ket_op = ket(extra_layout.total_dim(), index);
    let (m, _) = embed_operator(
        &ket_op,
        &SpaceLayout::trivial(),
        &extra_layout,
        &sub,
    )?;
    // embed_operator puts the extra factors at the end; reorder rows to `full`.
    let appended = sub.concat(&extra_layout)?;
    permute_rows(&m, &appended, &full.labels())
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: CMatrix,
}

impl Eigh {
    /// Rebuilds `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = Complex64::new(f(self.values[j]), 0.0);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Eigenvectors whose eigenvalue exceeds `cutoff`, as columns.
    pub fn support(&self, cutoff: f64) -> CMatrix {
        let cols: Vec<usize> = (0..self.values.len())
            .filter(|&j| self.values[j] > cutoff)
            .collect();
        self.vectors.select_columns(&cols)
    }

    pub fn kernel(&self, cutoff: f64) -> CMatrix {
        let cols: Vec<usize> = (0..self.values.len())
            .filter(|&j| self.values[j] <= cutoff)
            .collect();
        self.vectors.select_columns(&cols)
    }
}

/// Eigendecomposition of `(m + m†)/2` without a Hermiticity check.
pub fn eigh_symmetrized(m: &CMatrix) -> Eigh {
    let h = (m + m.adjoint()).scale(0.5);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    Eigh { values, vectors }
}

/// Hermitian eigendecomposition; rejects matrices whose asymmetry exceeds
/// [`HERMITIAN_TOL`].
pub fn eigh(m: &CMatrix) -> Result<Eigh> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    check_finite(m)?;
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::NonHermitian(defect));
    }
    Ok(eigh_symmetrized(m))
}

fn psd_eigh(m: &CMatrix) -> Result<Eigh> {
    let e = eigh(m)?;
    if let Some(&min) = e.values.last() {
        if min < -PSD_TOL {
            return Err(Error::NotPsd(min));
        }
    }
    Ok(e)
}

pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    Ok(psd_eigh(m)?.map(|x| x.max(0.0).sqrt()))
}

/// Square root of the pseudo-inverse; eigenvalues at or below
/// [`SUPPORT_CUTOFF`] map to zero.
pub fn psd_pinv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    Ok(psd_eigh(m)?.map(|x| if x > SUPPORT_CUTOFF { 1.0 / x.sqrt() } else { 0.0 }))
}

/// Projector onto the eigenvectors of `m` with eigenvalue above [`SUPPORT_CUTOFF`].
pub fn support_projector(m: &CMatrix) -> Result<CMatrix> {
    Ok(psd_eigh(m)?.map(|x| if x > SUPPORT_CUTOFF { 1.0 } else { 0.0 }))
}

/// ½‖a − b‖₁ for Hermitian operators.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let e = eigh(&(a - b))?;
    Ok(0.5 * e.values.iter().map(|x| x.abs()).sum::<f64>())
}

/// exp(2πi k/d), exact on quarter turns.
fn root_of_unity(k: usize, d: usize) -> Complex64 {
    let k = k % d;
    if (4 * k).is_multiple_of(d) {
        return match 4 * k / d {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / d as f64)
}

/// Trace-orthogonal basis of unitaries for d×d operators.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    pub dim: usize,
    pub elements: Vec<CMatrix>,
}

impl OperatorBasis {
    /// `Tr(A_m† M)` for every element.
    pub fn coefficients(&self, m: &CMatrix) -> Vec<Complex64> {
        self.elements
            .iter()
            .map(|a| trace(&(a.adjoint() * m)))
            .collect()
    }

    /// `(1/d) Σ_m c_m A_m`.
    pub fn reconstruct(&self, coefficients: &[Complex64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (c, a) in coefficients.iter().zip(&self.elements) {
            out += a * *c;
        }
        out / Complex64::new(self.dim as f64, 0.0)
    }
}

/// Weyl–Heisenberg basis `X^a Z^b`, where `X|m⟩ = |m+1⟩` and
/// `Z|m⟩ = ω^m|m⟩`. Element `b·d + a` is `X^a Z^b`, so the identity is
/// first and for d = 2 the order is I, X, Z, XZ.
pub fn weyl_basis(d: usize) -> Result<OperatorBasis> {
    if d == 0 {
        return Err(Error::InvalidArgument("basis dimension must be positive".into()));
    }
    let mut elements = Vec::with_capacity(d * d);
    for b in 0..d {
        for a in 0..d {
            let mut u = CMatrix::zeros(d, d);
            for m in 0..d {
                u[((m + a) % d, m)] = root_of_unity(b * m, d);
            }
            elements.push(u);
        }
    }
    Ok(OperatorBasis { dim: d, elements })
}
