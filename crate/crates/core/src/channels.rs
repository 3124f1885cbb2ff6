//! Completely positive trace-preserving maps in Kraus form.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{embed_operator, identity, ket_embedding, CMatrix, SpaceLayout};
use crate::states::DensityMatrix;

/// Completeness tolerance for freshly validated channels.
pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Completeness tolerance after composition.
pub const COMPOSED_COMPLETENESS_TOL: f64 = 1e-9;

/// `ρ ↦ Σ_j K_j ρ K_j†` with `Σ_j K_j† K_j = I`.
#[derive(Clone, Debug)]
pub struct KrausChannel {
    kraus: Vec<CMatrix>,
    in_layout: SpaceLayout,
    out_layout: SpaceLayout,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>, in_layout: SpaceLayout, out_layout: SpaceLayout) -> Result<Self> {
        Self::with_tolerance(kraus, in_layout, out_layout, COMPLETENESS_TOL)
    }

    pub fn with_tolerance(
        kraus: Vec<CMatrix>,
        in_layout: SpaceLayout,
        out_layout: SpaceLayout,
        tolerance: f64,
    ) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::ShapeMismatch("no Kraus operators".into()));
        }
        let (d_out, d_in) = (out_layout.total_dim(), in_layout.total_dim());
        for (j, k) in kraus.iter().enumerate() {
            if k.shape() != (d_out, d_in) {
                return Err(Error::ShapeMismatch(format!(
                    "operator {j} is {}x{} but {} → {} needs {}x{}",
                    k.nrows(),
                    k.ncols(),
                    in_layout,
                    out_layout,
                    d_out,
                    d_in
                )));
            }
            crate::linalg::check_finite(k)?;
        }
        let ch = Self {
            kraus,
            in_layout,
            out_layout,
        };
        let residual = ch.completeness_residual();
        if residual > tolerance {
            return Err(Error::NotTracePreserving(residual));
        }
        Ok(ch)
    }

    /// Identity channel on `layout`.
    pub fn identity(layout: SpaceLayout) -> Self {
        Self {
            kraus: vec![identity(layout.total_dim())],
            in_layout: layout.clone(),
            out_layout: layout,
        }
    }

    pub fn unitary(u: CMatrix, layout: SpaceLayout) -> Result<Self> {
        Self::new(vec![u], layout.clone(), layout)
    }

    /// Trace over `traced` as a channel, with Kraus operators `⟨k| ⊗ I`.
    pub fn partial_trace(layout: &SpaceLayout, traced: &[&str]) -> Result<Self> {
        let traced_dim = layout.select(traced)?.total_dim();
        let kraus = (0..traced_dim)
            .map(|k| ket_embedding(layout, traced, k).map(|m| m.adjoint()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kraus, layout.clone(), layout.without(traced)?)
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn in_layout(&self) -> &SpaceLayout {
        &self.in_layout
    }

    pub fn out_layout(&self) -> &SpaceLayout {
        &self.out_layout
    }

    /// Frobenius norm of `Σ K†K − I`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.in_layout.total_dim();
        let sum = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        (sum - identity(d)).norm()
    }

    /// Applies the Kraus sum to an arbitrary operator on the input space.
    pub fn apply_operator(&self, m: &CMatrix) -> CMatrix {
        let d = self.out_layout.total_dim();
        self.kraus
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k * m * k.adjoint())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.layout() != &self.in_layout {
            return Err(Error::LayoutMismatch(format!(
                "channel expects {} but the state lives on {}",
                self.in_layout,
                rho.layout()
            )));
        }
        DensityMatrix::from_computed(self.apply_operator(rho.matrix()), self.out_layout.clone())
    }

    /// Lifts the channel to `full`, acting as the identity on every factor
    /// outside its input layout. The acted-on factors are replaced in place
    /// by the output factors.
    pub fn lift_localized(&self, full: &SpaceLayout) -> Result<KrausChannel> {
        let mut out_layout = None;
        let mut kraus = Vec::with_capacity(self.kraus.len());
        for k in &self.kraus {
            let (m, l) = embed_operator(k, &self.in_layout, &self.out_layout, full)?;
            out_layout = Some(l);
            kraus.push(m);
        }
        Ok(Self {
            kraus,
            in_layout: full.clone(),
            out_layout: out_layout.expect("channel has at least one Kraus operator"),
        })
    }

    /// Parallel composition on the concatenated layouts.
    pub fn tensor(&self, other: &KrausChannel) -> Result<KrausChannel> {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(a.kronecker(b));
            }
        }
        Self::with_tolerance(
            kraus,
            self.in_layout.concat(&other.in_layout)?,
            self.out_layout.concat(&other.out_layout)?,
            COMPOSED_COMPLETENESS_TOL,
        )
    }

    /// Same operators viewed on relabelled layouts of equal dimensions.
    pub fn relabeled(&self, in_layout: SpaceLayout, out_layout: SpaceLayout) -> Result<KrausChannel> {
        if in_layout.total_dim() != self.in_layout.total_dim()
            || out_layout.total_dim() != self.out_layout.total_dim()
        {
            return Err(Error::LayoutMismatch(format!(
                "cannot view {} → {} as {} → {}",
                self.in_layout, self.out_layout, in_layout, out_layout
            )));
        }
        Ok(Self {
            kraus: self.kraus.clone(),
            in_layout,
            out_layout,
        })
    }
}

/// Validates a Kraus family.
pub fn validate_channel(
    kraus: Vec<CMatrix>,
    in_layout: SpaceLayout,
    out_layout: SpaceLayout,
) -> Result<KrausChannel> {
    KrausChannel::new(kraus, in_layout, out_layout)
}

/// `second ∘ first`, with Kraus set `{g_i f_j}`.
pub fn compose(second: &KrausChannel, first: &KrausChannel) -> Result<KrausChannel> {
    if first.out_layout != second.in_layout {
        return Err(Error::LayoutMismatch(format!(
            "first channel outputs {} but second expects {}",
            first.out_layout, second.in_layout
        )));
    }
    let mut kraus = Vec::with_capacity(first.kraus.len() * second.kraus.len());
    for g in &second.kraus {
        for f in &first.kraus {
            kraus.push(g * f);
        }
    }
    KrausChannel::with_tolerance(
        kraus,
        first.in_layout.clone(),
        second.out_layout.clone(),
        COMPOSED_COMPLETENESS_TOL,
    )
}

/// Unitary swapping two factors of equal dimension `d`.
pub fn swap_unitary(d: usize) -> CMatrix {
    let mut u = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            u[(j * d + i, i * d + j)] = Complex64::new(1.0, 0.0);
        }
    }
    u
}

/// Result of projecting an operator onto `{I_A ⊗ Y}`.
#[derive(Clone, Debug)]
pub struct IdentityFactorization {
    /// `(1/d_A) Tr_A(x)`, the Frobenius-closest `Y`.
    pub candidate: CMatrix,
    /// `‖x − I_A ⊗ candidate‖_F`.
    pub residual: f64,
}

impl IdentityFactorization {
    pub fn within(&self, tolerance: f64) -> Option<&CMatrix> {
        (self.residual <= tolerance).then_some(&self.candidate)
    }
}

/// Tests whether `x = I_A ⊗ Y` for some `Y`, where A is the leading factor
/// of both the row and the column index.
pub fn factor_out_identity(x: &CMatrix, d_a: usize) -> Result<IdentityFactorization> {
    if d_a == 0 || !x.nrows().is_multiple_of(d_a) || !x.ncols().is_multiple_of(d_a) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator is not divisible by d_A = {d_a}",
            x.nrows(),
            x.ncols()
        )));
    }
    let (r, c) = (x.nrows() / d_a, x.ncols() / d_a);
    let mut candidate = CMatrix::zeros(r, c);
    for a in 0..d_a {
        candidate += x.view((a * r, a * c), (r, c));
    }
    candidate /= Complex64::new(d_a as f64, 0.0);
    let residual = (x - identity(d_a).kronecker(&candidate)).norm();
    Ok(IdentityFactorization {
        candidate,
        residual,
    })
}
