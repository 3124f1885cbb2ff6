//! Density matrices and entropic quantities.
//!
//! Entropies are reported in bits.

use std::collections::{BTreeMap, HashSet};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    self, check_finite, eigh_symmetrized, hermitian_defect, partial_trace, permute_subsystems,
    trace, CMatrix, SpaceLayout, HERMITIAN_TOL, PSD_TOL, SUPPORT_CUTOFF,
};

/// Tolerance used when normalizing states produced by internal arithmetic
/// (channel outputs, projections, assembled decompositions).
pub const COMPUTED_STATE_TOL: f64 = 1e-8;

/// Hermitian, positive semidefinite, unit-trace operator on a [`SpaceLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    layout: SpaceLayout,
}

impl DensityMatrix {
    /// Validates `m` as a state on `layout`.
    ///
    /// Eigenvalues in `[-1e-10, 0)` are clipped and trace drift up to 1e-10
    /// is renormalized.
    pub fn new(m: CMatrix, layout: SpaceLayout) -> Result<Self> {
        Self::validated(m, layout, HERMITIAN_TOL, PSD_TOL, 1e-10)
    }

    /// Same as [`DensityMatrix::new`] with the looser [`COMPUTED_STATE_TOL`]
    /// budget, for states that come out of a numerical pipeline.
    pub fn from_computed(m: CMatrix, layout: SpaceLayout) -> Result<Self> {
        Self::validated(
            m,
            layout,
            COMPUTED_STATE_TOL,
            COMPUTED_STATE_TOL,
            COMPUTED_STATE_TOL,
        )
    }

    fn validated(
        m: CMatrix,
        layout: SpaceLayout,
        herm_tol: f64,
        psd_tol: f64,
        trace_tol: f64,
    ) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() != layout.total_dim() {
            return Err(Error::LayoutMismatch(format!(
                "matrix dimension {} does not match layout {} (dimension {})",
                m.nrows(),
                layout,
                layout.total_dim()
            )));
        }
        check_finite(&m)?;
        let defect = hermitian_defect(&m);
        if defect > herm_tol {
            return Err(Error::NonHermitian(defect));
        }
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::TraceNotOne(tr));
        }
        let mut h = (&m + m.adjoint()).scale(0.5);
        let eig = eigh_symmetrized(&h);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -psd_tol {
            return Err(Error::NotPsd(min));
        }
        if min < 0.0 {
            h = eig.map(|x| x.max(0.0));
        }
        let tr = trace(&h).re;
        h /= Complex64::new(tr, 0.0);
        Ok(Self { matrix: h, layout })
    }

    /// |ψ⟩⟨ψ| for a column vector, normalized.
    pub fn pure(psi: &CMatrix, layout: SpaceLayout) -> Result<Self> {
        if psi.ncols() != 1 {
            return Err(Error::InvalidArgument("state vector must be a column".into()));
        }
        let n = psi.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let v = psi / Complex64::new(n, 0.0);
        Self::new(&v * v.adjoint(), layout)
    }

    pub fn maximally_mixed(layout: SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self {
            matrix: linalg::identity(d) / Complex64::new(d as f64, 0.0),
            layout,
        }
    }

    /// Computational basis projector |i⟩⟨i|.
    pub fn basis_state(layout: SpaceLayout, index: usize) -> Result<Self> {
        let d = layout.total_dim();
        if index >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {d}"
            )));
        }
        Ok(Self {
            matrix: linalg::unit(d, index, index),
            layout,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_parts(self) -> (CMatrix, SpaceLayout) {
        (self.matrix, self.layout)
    }

    pub fn marginal(&self, keep: &[&str]) -> Result<DensityMatrix> {
        let (m, layout) = partial_trace(&self.matrix, &self.layout, keep)?;
        Ok(Self { matrix: m, layout })
    }

    pub fn permuted(&self, order: &[&str]) -> Result<DensityMatrix> {
        let (m, layout) = permute_subsystems(&self.matrix, &self.layout, order)?;
        Ok(Self { matrix: m, layout })
    }

    pub fn relabeled(&self, labels: &[&str]) -> Result<DensityMatrix> {
        Ok(Self {
            matrix: self.matrix.clone(),
            layout: self.layout.relabel(labels)?,
        })
    }

    /// Reinterprets the state on a layout with the same total dimension.
    pub fn with_layout(&self, layout: SpaceLayout) -> Result<DensityMatrix> {
        if layout.total_dim() != self.dim() {
            return Err(Error::LayoutMismatch(format!(
                "cannot view a {}-dimensional state on {}",
                self.dim(),
                layout
            )));
        }
        Ok(Self {
            matrix: self.matrix.clone(),
            layout,
        })
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(Self {
            matrix: linalg::tensor(&self.matrix, &other.matrix),
            layout: self.layout.concat(&other.layout)?,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh_symmetrized(&self.matrix).values
    }

    pub fn entropy(&self) -> f64 {
        entropy_of_spectrum(&self.eigenvalues())
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        linalg::trace_distance(&self.matrix, &other.matrix)
    }
}

/// Validates a matrix as a density operator on `layout`.
pub fn validate_density(m: CMatrix, layout: SpaceLayout) -> Result<DensityMatrix> {
    DensityMatrix::new(m, layout)
}

fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&x| x > SUPPORT_CUTOFF)
        .map(|&x| -x * x.log2())
        .sum()
}

/// S(ρ) = −Tr ρ log₂ ρ.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.entropy()
}

fn entropy_of(rho: &DensityMatrix, labels: &[&str]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    Ok(rho.marginal(labels)?.entropy())
}

fn check_partition(layout: &SpaceLayout, parts: &[&[&str]], require_cover: bool) -> Result<()> {
    let mut seen = HashSet::new();
    for part in parts {
        if part.is_empty() {
            return Err(Error::InvalidPartition("empty part".into()));
        }
        for l in *part {
            layout.index_of(l)?;
            if !seen.insert(*l) {
                return Err(Error::InvalidPartition(format!(
                    "label `{l}` appears in more than one part"
                )));
            }
        }
    }
    if require_cover && seen.len() != layout.len() {
        let missing: Vec<&str> = layout
            .labels()
            .into_iter()
            .filter(|l| !seen.contains(l))
            .collect();
        return Err(Error::InvalidPartition(format!(
            "labels {missing:?} are not covered"
        )));
    }
    Ok(())
}

/// I(1:2) = S(ρ₁) + S(ρ₂) − S(ρ₁₂); the two parts must partition the layout.
pub fn mutual_information(rho: &DensityMatrix, part1: &[&str], part2: &[&str]) -> Result<f64> {
    check_partition(rho.layout(), &[part1, part2], true)?;
    Ok(entropy_of(rho, part1)? + entropy_of(rho, part2)? - rho.entropy())
}

/// I(A:E|B) = S(AB) + S(BE) − S(B) − S(ABE); the three parts must
/// partition the layout.
pub fn conditional_mutual_information(
    rho: &DensityMatrix,
    a: &[&str],
    e: &[&str],
    b: &[&str],
) -> Result<f64> {
    check_partition(rho.layout(), &[a, e, b], true)?;
    let ab: Vec<&str> = a.iter().chain(b).copied().collect();
    let be: Vec<&str> = b.iter().chain(e).copied().collect();
    Ok(entropy_of(rho, &ab)? + entropy_of(rho, &be)? - entropy_of(rho, b)? - rho.entropy())
}

/// Entropies and correlation measures of one state.
#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    /// Keyed by the comma-joined labels of the marginal.
    pub entropies: BTreeMap<String, f64>,
    pub mutual_information: f64,
    pub conditional_mutual_information: Option<f64>,
}

impl EntropyReport {
    /// Entropies of both parts and their union, plus I(1:2).
    pub fn bipartite(rho: &DensityMatrix, part1: &[&str], part2: &[&str]) -> Result<Self> {
        check_partition(rho.layout(), &[part1, part2], true)?;
        let mut entropies = BTreeMap::new();
        let s1 = entropy_of(rho, part1)?;
        let s2 = entropy_of(rho, part2)?;
        let s12 = rho.entropy();
        entropies.insert(part1.join(","), s1);
        entropies.insert(part2.join(","), s2);
        entropies.insert(rho.layout().labels().join(","), s12);
        Ok(Self {
            entropies,
            mutual_information: s1 + s2 - s12,
            conditional_mutual_information: None,
        })
    }

    /// Entropies of every marginal of a tripartite state, I(A:B) of the
    /// system marginal and I(A:E|B).
    pub fn tripartite(rho: &DensityMatrix, a: &[&str], b: &[&str], e: &[&str]) -> Result<Self> {
        check_partition(rho.layout(), &[a, b, e], true)?;
        let ab: Vec<&str> = a.iter().chain(b).copied().collect();
        let be: Vec<&str> = b.iter().chain(e).copied().collect();
        let mut entropies = BTreeMap::new();
        for part in [a, b, e, &ab[..], &be[..]] {
            entropies.insert(part.join(","), entropy_of(rho, part)?);
        }
        let s_abe = rho.entropy();
        entropies.insert(rho.layout().labels().join(","), s_abe);
        let mi = entropies[&a.join(",")] + entropies[&b.join(",")] - entropies[&ab.join(",")];
        let cmi = entropies[&ab.join(",")] + entropies[&be.join(",")]
            - entropies[&b.join(",")]
            - s_abe;
        Ok(Self {
            entropies,
            mutual_information: mi,
            conditional_mutual_information: Some(cmi),
        })
    }
}
