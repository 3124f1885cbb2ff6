//! Assignment maps `ρ_AB ↦ ρ_ABE` and the direct-reduction analysis of
//! localized dynamics.

use num_complex::Complex64;

use crate::channels::{factor_out_identity, KrausChannel};
use crate::error::{Error, Result};
use crate::linalg::{
    eigh_symmetrized, embed_operator, identity, ket_embedding, permute_cols, permute_rows,
    project_output, psd_pinv_sqrt, psd_sqrt, trace, weyl_basis, CMatrix, SpaceLayout,
};
use crate::markov::MarkovDecomposition;
use crate::states::DensityMatrix;

/// Tolerance on the consistency and compatibility of an assignment map.
pub const ASSIGNMENT_TOL: f64 = 1e-8;
/// Default verdict tolerance for [`direct_reduction`].
pub const DIRECT_REDUCTION_TOL: f64 = 1e-8;

/// A channel together with the marginal it is fed and the state it produces.
#[derive(Clone, Debug)]
pub struct AssignmentMap {
    pub channel: KrausChannel,
    pub source: DensityMatrix,
    pub target: DensityMatrix,
}

impl AssignmentMap {
    pub fn new(channel: KrausChannel, source: DensityMatrix, target: DensityMatrix) -> Result<Self> {
        if channel.in_layout() != source.layout() || channel.out_layout() != target.layout() {
            return Err(Error::LayoutMismatch(format!(
                "channel {} → {} does not connect {} to {}",
                channel.in_layout(),
                channel.out_layout(),
                source.layout(),
                target.layout()
            )));
        }
        let produced = channel.apply(&source)?;
        let consistency = produced.trace_distance(&target)?;
        if consistency > ASSIGNMENT_TOL {
            return Err(Error::InvalidArgument(format!(
                "assignment output is {consistency:e} away from its target"
            )));
        }
        let labels = source.layout().labels();
        let compatibility = target.marginal(&labels)?.trace_distance(&source)?;
        if compatibility > ASSIGNMENT_TOL {
            return Err(Error::InvalidArgument(format!(
                "target marginal is {compatibility:e} away from the source"
            )));
        }
        Ok(Self {
            channel,
            source,
            target,
        })
    }

    pub fn kraus(&self) -> &[CMatrix] {
        self.channel.kraus()
    }

    /// Labels added by the map.
    pub fn env_labels(&self) -> Vec<&str> {
        let src = self.source.layout();
        self.target
            .layout()
            .labels()
            .into_iter()
            .filter(|l| !src.contains(l))
            .collect()
    }

    /// Applies the map after checking that `rho` lives on the support of the
    /// source state.
    pub fn apply_checked(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let proj = support_projector_of(self.source.matrix());
        let outside = 1.0 - trace(&(&proj * rho.matrix())).re;
        if outside > ASSIGNMENT_TOL {
            return Err(Error::SupportMismatch(outside));
        }
        self.channel.apply(rho)
    }
}

fn support_projector_of(m: &CMatrix) -> CMatrix {
    eigh_symmetrized(m).map(|x| if x > crate::linalg::SUPPORT_CUTOFF { 1.0 } else { 0.0 })
}

/// `ρ_AB ↦ ρ_AB ⊗ |i⟩⟨i|_E`.
pub fn xi_embed(rho: &DensityMatrix, env_label: &str, env_dim: usize, index: usize) -> Result<AssignmentMap> {
    if index >= env_dim {
        return Err(Error::InvalidArgument(format!(
            "environment index {index} out of range for dimension {env_dim}"
        )));
    }
    let env = SpaceLayout::new([(env_label, env_dim)])?;
    let out = rho.layout().concat(&env)?;
    let r = ket_embedding(&out, &[env_label], index)?;
    let channel = KrausChannel::new(vec![r], rho.layout().clone(), out)?;
    let target = rho.tensor(&DensityMatrix::basis_state(env, index)?)?;
    AssignmentMap::new(channel, rho.clone(), target)
}

/// Kraus operators of the Petz map `ρ_S ↦ ρ` for `S` = all factors of `rho`
/// outside `env`, completed on the kernel of `ρ_S` by `X ↦ X ⊗ |0⟩⟨0|`.
pub(crate) fn petz_kraus(rho: &DensityMatrix, env: &[&str]) -> Result<Vec<CMatrix>> {
    let layout = rho.layout();
    let env_dim = layout.select(env)?.total_dim();
    let sys = layout.without(env)?;
    let sqrt_rho = psd_sqrt(rho.matrix())?;
    let lifts: Vec<CMatrix> = (0..env_dim)
        .map(|i| ket_embedding(layout, env, i))
        .collect::<Result<_>>()?;
    let pieces: Vec<CMatrix> = lifts.iter().map(|l| &sqrt_rho * l).collect();
    let d = sys.total_dim();
    let rho_s = pieces
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, p| acc + p.adjoint() * p);
    let inv = psd_pinv_sqrt(&rho_s)?;
    let mut kraus: Vec<CMatrix> = pieces.iter().map(|p| p * &inv).collect();

    // Polish Σ K†K onto an exact projector, then complete on its kernel.
    let sum = kraus
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
    let eig = eigh_symmetrized(&sum);
    let fix = eig.map(|x| if x > 0.5 { 1.0 / x.sqrt() } else { 0.0 });
    for k in &mut kraus {
        *k = &*k * &fix;
    }
    let kernel = eig.map(|x| if x > 0.5 { 0.0 } else { 1.0 });
    if kernel.norm() > 0.5 {
        kraus.push(&lifts[0] * kernel);
    }
    Ok(kraus)
}

/// Petz recovery `ρ_S ↦ ρ` acting on the factors of `rho` outside `env`.
pub fn petz_assignment(rho: &DensityMatrix, env: &[&str]) -> Result<AssignmentMap> {
    let kraus = petz_kraus(rho, env)?;
    let sys = rho.layout().without(env)?;
    let source = rho.marginal(&sys.labels())?;
    // Kraus outputs follow `rho`'s layout; the map's output keeps it.
    let channel = KrausChannel::new(kraus, sys, rho.layout().clone())?;
    AssignmentMap::new(channel, source, rho.clone())
}

/// Which factor of a block `l ⊗ r` the environment is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Left,
    Right,
}

/// One block of a block-diagonal assignment: `l ⊗ r` with a Petz map on one
/// factor built from `state` (attached factor first, environment second).
/// `None` marks a block the source never populates.
pub(crate) struct BlockSpec<'a> {
    pub left_dim: usize,
    pub right_dim: usize,
    pub state: Option<&'a DensityMatrix>,
}

/// Kraus operators `H → H ⊗ H_env` of `⊕_b (Petz_b on one factor ⊗ id)`,
/// where `embedding` maps `⊕_b l_b ⊗ r_b` onto `H`.
pub(crate) fn block_assignment_kraus(
    embedding: &CMatrix,
    blocks: &[BlockSpec<'_>],
    side: Side,
    env_dim: usize,
) -> Result<Vec<CMatrix>> {
    let d = embedding.nrows();
    let env_id = identity(env_dim);
    let mut kraus: Vec<CMatrix> = Vec::new();
    let mut offset = 0;
    for b in blocks {
        let width = b.left_dim * b.right_dim;
        let v = embedding.columns(offset, width).into_owned();
        offset += width;
        let (attached, attached_dim) = match side {
            Side::Left => ("l", b.left_dim),
            Side::Right => ("r", b.right_dim),
        };
        let local = SpaceLayout::new([(attached, attached_dim), ("env", env_dim)])?;
        let petz = match b.state {
            Some(s) => petz_kraus(&s.with_layout(local.clone())?, &["env"])?,
            None => vec![ket_embedding(&local, &["env"], 0)?],
        };
        let block = SpaceLayout::new([("l", b.left_dim), ("r", b.right_dim)])?;
        let op_in = local.select(&[attached])?;
        for (i, p) in petz.iter().enumerate() {
            let (m, out) = embed_operator(p, &op_in, &local, &block)?;
            let m = permute_rows(&m, &out, &["l", "r", "env"])?;
            let lifted = tensor_env(&v, &env_id) * m * v.adjoint();
            if i < kraus.len() {
                kraus[i] += lifted;
            } else {
                kraus.push(lifted);
            }
        }
    }
    if offset != d {
        return Err(Error::DimensionMismatch(format!(
            "blocks cover dimension {offset} but the embedding has {d} rows"
        )));
    }
    Ok(kraus)
}

fn tensor_env(v: &CMatrix, env_id: &CMatrix) -> CMatrix {
    v.kronecker(env_id)
}

/// `id_A ⊗ Λ_B` with `Λ_B = ⊕_k id_{b^L_k} ⊗ Petz_{b^R_k → b^R_k E}`.
pub fn localized_assignment_from_markov(decomp: &MarkovDecomposition) -> Result<AssignmentMap> {
    let lambda = decomp.conditioning_assignment()?;
    let source_layout = decomp.a_layout().concat(decomp.b_layout())?;
    let channel = lambda.lift_localized(&source_layout)?;
    let target = decomp.assemble()?;
    let source = target.marginal(&source_layout.labels())?;
    AssignmentMap::new(channel, source, target)
}

/// One contracted operator `X_jkl = ⟨k_E'| (I_A ⊗ f_j) R_l`.
#[derive(Clone, Debug)]
pub struct XOperator {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    /// Acts from the source layout to the channel output without `E'`,
    /// with the A factor moved first on both sides.
    pub matrix: CMatrix,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct DirectReductionReport {
    pub x_operators: Vec<XOperator>,
    pub max_residual: f64,
    pub verdict: bool,
    pub tolerance: f64,
    /// `Ē_jkl`, present when the verdict holds.
    pub extracted_kraus: Option<Vec<CMatrix>>,
    /// `B_lm` with `R_l = Σ_m A_m ⊗ B_lm` over the Weyl basis on A.
    pub basis_coefficients: Vec<Vec<CMatrix>>,
    /// `Σ_{m≥1} ‖B_lm‖_F` per assignment Kraus operator.
    pub off_identity_mass: Vec<f64>,
    /// `‖Σ X†X − I‖_F`.
    pub completeness_residual: f64,
    /// `max_l ‖Σ_m A_m ⊗ B_lm − R_l‖_F`.
    pub reconstruction_residual: f64,
}

impl DirectReductionReport {
    pub fn max_off_identity_mass(&self) -> f64 {
        self.off_identity_mass.iter().copied().fold(0.0, f64::max)
    }
}

fn a_first<'a>(layout: &'a SpaceLayout, a: &'a str) -> Vec<&'a str> {
    std::iter::once(a)
        .chain(layout.labels().into_iter().filter(move |l| *l != a))
        .collect()
}

/// Decides whether every `X_jkl` factorizes as `I_A ⊗ Ē_jkl`.
///
/// `channel` acts on the assignment's output; if it is given on a sublayout
/// it is lifted with the identity on the remaining factors. `env_out` names
/// the environment factor of the channel output.
pub fn direct_reduction(
    assign: &AssignmentMap,
    channel: &KrausChannel,
    a_label: &str,
    env_out: &str,
    tolerance: f64,
) -> Result<DirectReductionReport> {
    let full = assign.target.layout();
    let ch = if channel.in_layout() == full {
        channel.clone()
    } else {
        if channel.in_layout().contains(a_label) {
            return Err(Error::LayoutMismatch(format!(
                "channel on {} touches `{a_label}`",
                channel.in_layout()
            )));
        }
        channel.lift_localized(full)?
    };
    let src = assign.source.layout();
    let d_a = src.dim_of(a_label)?;
    let out = ch.out_layout();
    let env_dim = out.dim_of(env_out)?;
    let sys_out = out.without(&[env_out])?;
    let src_order = a_first(src, a_label);
    let out_order = a_first(&sys_out, a_label);

    let mut x_operators = Vec::new();
    for (l, r) in assign.kraus().iter().enumerate() {
        for (j, f) in ch.kraus().iter().enumerate() {
            let n = f * r;
            for k in 0..env_dim {
                let (x, _) = project_output(&n, out, env_out, k)?;
                let x = permute_rows(&x, &sys_out, &out_order)?;
                let x = permute_cols(&x, src, &src_order)?;
                let fac = factor_out_identity(&x, d_a)?;
                x_operators.push(XOperator {
                    j,
                    k,
                    l,
                    matrix: x,
                    residual: fac.residual,
                });
            }
        }
    }
    let d_src = src.total_dim();
    let gram = x_operators
        .iter()
        .fold(CMatrix::zeros(d_src, d_src), |acc, x| acc + x.matrix.adjoint() * &x.matrix);
    let completeness_residual = (gram - identity(d_src)).norm();
    let max_residual = x_operators.iter().map(|x| x.residual).fold(0.0, f64::max);
    let verdict = max_residual <= tolerance;
    let extracted_kraus = if verdict {
        Some(
            x_operators
                .iter()
                .map(|x| factor_out_identity(&x.matrix, d_a).map(|f| f.candidate))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let basis = weyl_basis(d_a)?;
    let tgt_order = a_first(full, a_label);
    let mut basis_coefficients = Vec::new();
    let mut off_identity_mass = Vec::new();
    let mut reconstruction_residual: f64 = 0.0;
    for r in assign.kraus() {
        let r = permute_rows(r, full, &tgt_order)?;
        let r = permute_cols(&r, src, &src_order)?;
        let (rows, cols) = (r.nrows() / d_a, r.ncols() / d_a);
        let coeffs: Vec<CMatrix> = basis
            .elements
            .iter()
            .map(|a_m| {
                let mut b = CMatrix::zeros(rows, cols);
                for c in 0..d_a {
                    for a in 0..d_a {
                        let w = a_m[(c, a)].conj();
                        if w != Complex64::new(0.0, 0.0) {
                            b += r.view((c * rows, a * cols), (rows, cols)) * w;
                        }
                    }
                }
                b / Complex64::new(d_a as f64, 0.0)
            })
            .collect();
        let rebuilt = basis
            .elements
            .iter()
            .zip(&coeffs)
            .fold(CMatrix::zeros(r.nrows(), r.ncols()), |acc, (a_m, b)| acc + a_m.kronecker(b));
        reconstruction_residual = reconstruction_residual.max((rebuilt - &r).norm());
        off_identity_mass.push(coeffs.iter().skip(1).map(|b| b.norm()).sum());
        basis_coefficients.push(coeffs);
    }

    Ok(DirectReductionReport {
        x_operators,
        max_residual,
        verdict,
        tolerance,
        extracted_kraus,
        basis_coefficients,
        off_identity_mass,
        completeness_residual,
        reconstruction_residual,
    })
}

/// Identity channel plus the `d_E²` conjugations by Weyl unitaries on the
/// environment factor, all on `layout`.
pub fn tomographic_channel_family(layout: &SpaceLayout, env_label: &str) -> Result<Vec<KrausChannel>> {
    let env = layout.select(&[env_label])?;
    let basis = weyl_basis(env.total_dim())?;
    let mut family = vec![KrausChannel::identity(layout.clone())];
    for w in basis.elements.iter() {
        let (u, _) = embed_operator(w, &env, &env, layout)?;
        family.push(KrausChannel::unitary(u, layout.clone())?);
    }
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::swap_unitary;
    use crate::linalg::{max_abs_diff, permute_subsystems, real_diag, tensor, ONE};
    use crate::random::{random_cptp, random_density, rng_from_seed};

    fn layout(spec: &[(&str, usize)]) -> SpaceLayout {
        SpaceLayout::new(spec.iter().copied()).unwrap()
    }

    fn bell(l: SpaceLayout) -> DensityMatrix {
        let mut psi = CMatrix::zeros(4, 1);
        psi[(0, 0)] = ONE;
        psi[(3, 0)] = ONE;
        DensityMatrix::pure(&psi, l).unwrap()
    }

    #[test]
    fn xi_embed_examples() {
        let phi = bell(layout(&[("A", 2), ("B", 2)]));
        let xi = xi_embed(&phi, "E", 2, 0).unwrap();
        let expected = tensor(phi.matrix(), &real_diag(&[1.0, 0.0]));
        assert!(max_abs_diff(xi.target.matrix(), &expected) < 1e-15);
        let r = &xi.kraus()[0];
        assert_eq!(r.adjoint() * r, identity(4));
        assert!(max_abs_diff(xi.target.marginal(&["A", "B"]).unwrap().matrix(), phi.matrix()) < 1e-15);
        assert!(xi_embed(&phi, "E", 2, 2).is_err());
    }

    #[test]
    fn petz_on_product_appends_environment() {
        let mut rng = rng_from_seed(21);
        let rb = random_density(&layout(&[("B", 2)]), 2, &mut rng).unwrap();
        let we = random_density(&layout(&[("E", 3)]), 2, &mut rng).unwrap();
        let rho = rb.tensor(&we).unwrap();
        let petz = petz_assignment(&rho, &["E"]).unwrap();
        let x = random_density(&layout(&[("B", 2)]), 1, &mut rng).unwrap();
        let out = petz.apply_checked(&x).unwrap();
        assert!(max_abs_diff(out.matrix(), &tensor(x.matrix(), we.matrix())) < 1e-9);
    }

    #[test]
    fn petz_reproduces_random_states() {
        let mut rng = rng_from_seed(22);
        let l = layout(&[("B", 2), ("E", 2)]);
        for _ in 0..100 {
            let rho = random_density(&l, 3, &mut rng).unwrap();
            let petz = petz_assignment(&rho, &["E"]).unwrap();
            assert!(petz.channel.completeness_residual() < 1e-10);
            let out = petz.channel.apply(&petz.source).unwrap();
            assert!(out.trace_distance(&rho).unwrap() < 1e-9);
        }
    }

    #[test]
    fn petz_pure_product() {
        let l = layout(&[("B", 2), ("E", 2)]);
        let rho = DensityMatrix::basis_state(l, 0).unwrap();
        let petz = petz_assignment(&rho, &["E"]).unwrap();
        assert!(petz.channel.apply(&petz.source).unwrap().trace_distance(&rho).unwrap() < 1e-14);
        let one = DensityMatrix::basis_state(layout(&[("B", 2)]), 1).unwrap();
        assert!(matches!(petz.apply_checked(&one), Err(Error::SupportMismatch(w)) if (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn petz_env_in_the_middle() {
        let mut rng = rng_from_seed(23);
        let l = layout(&[("A", 2), ("E", 2), ("B", 2)]);
        let rho = random_density(&l, 8, &mut rng).unwrap();
        let petz = petz_assignment(&rho, &["E"]).unwrap();
        assert_eq!(petz.source.layout().labels(), vec!["A", "B"]);
        assert!(petz.channel.apply(&petz.source).unwrap().trace_distance(&rho).unwrap() < 1e-9);
    }

    #[test]
    fn identity_factor_assignment_always_reduces() {
        let mut rng = rng_from_seed(24);
        let ab = layout(&[("A", 2), ("B", 2)]);
        let rho = random_density(&ab, 4, &mut rng).unwrap();
        let xi = xi_embed(&rho, "E", 2, 1).unwrap();
        let be = layout(&[("B", 2), ("E", 2)]);
        let out = layout(&[("B", 2), ("E'", 3)]);
        for _ in 0..5 {
            let f = random_cptp(&be, &out, 3, &mut rng).unwrap();
            let rep = direct_reduction(&xi, &f, "A", "E'", DIRECT_REDUCTION_TOL).unwrap();
            assert!(rep.verdict, "residual {}", rep.max_residual);
            assert!(rep.completeness_residual < 1e-9);
            assert!(rep.reconstruction_residual < 1e-10);
            assert!(rep.max_off_identity_mass() < 1e-12);
            assert_eq!(rep.extracted_kraus.as_ref().unwrap().len(), rep.x_operators.len());
        }
    }

    #[test]
    fn entangled_environment_fails_direct_reduction() {
        // ρ_B ⊗ Φ⁺_AE, arranged on (A, B, E).
        let phi = bell(layout(&[("A", 2), ("E", 2)]));
        let rb = DensityMatrix::maximally_mixed(layout(&[("B", 2)]));
        let rho = phi.tensor(&rb).unwrap().permuted(&["A", "B", "E"]).unwrap();
        let assign = petz_assignment(&rho, &["E"]).unwrap();
        let be = layout(&[("B", 2), ("E", 2)]);
        let swap = KrausChannel::unitary(swap_unitary(2), be.clone()).unwrap();
        let rep = direct_reduction(&assign, &swap, "A", "E", DIRECT_REDUCTION_TOL).unwrap();
        assert!(!rep.verdict);
        assert!(rep.max_off_identity_mass() > 1e-3);
        let family = tomographic_channel_family(&be, "E").unwrap();
        assert_eq!(family.len(), 5);
        let any_false = family
            .iter()
            .any(|ch| !direct_reduction(&assign, ch, "A", "E", DIRECT_REDUCTION_TOL).unwrap().verdict);
        assert!(any_false);
    }

    #[test]
    fn direct_reduction_rejects_channel_on_a() {
        let rho = DensityMatrix::maximally_mixed(layout(&[("A", 2), ("B", 2)]));
        let xi = xi_embed(&rho, "E", 2, 0).unwrap();
        let ae = layout(&[("A", 2), ("E", 2)]);
        let ch = KrausChannel::identity(ae);
        assert!(matches!(
            direct_reduction(&xi, &ch, "A", "E", 1e-8),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn block_assignment_both_sides() {
        let mut rng = rng_from_seed(25);
        let s = random_density(&layout(&[("f", 2), ("env", 2)]), 4, &mut rng).unwrap();
        let v = identity(4);
        for side in [Side::Left, Side::Right] {
            let spec = [BlockSpec {
                left_dim: 2,
                right_dim: 2,
                state: Some(&s),
            }];
            let kraus = block_assignment_kraus(&v, &spec, side, 2).unwrap();
            let sum = kraus.iter().fold(CMatrix::zeros(4, 4), |acc, k| acc + k.adjoint() * k);
            assert!(max_abs_diff(&sum, &identity(4)) < 1e-10);
            // Apply to ω_l ⊗ ω_r with the attached factor matching s's marginal.
            let sm = s.marginal(&["f"]).unwrap();
            let other = real_diag(&[0.7, 0.3]);
            let input = match side {
                Side::Left => tensor(sm.matrix(), &other),
                Side::Right => tensor(&other, sm.matrix()),
            };
            let out = kraus.iter().fold(CMatrix::zeros(8, 8), |acc, k| acc + k * &input * k.adjoint());
            let expected = match side {
                Side::Left => {
                    let m = tensor(s.matrix(), &other);
                    permute_subsystems(&m, &layout(&[("l", 2), ("env", 2), ("r", 2)]), &["l", "r", "env"])
                        .unwrap()
                        .0
                }
                Side::Right => tensor(&other, s.matrix()),
            };
            assert!(max_abs_diff(&out, &expected) < 1e-9, "{side:?}");
        }
    }
}
