//! Markov states `ρ_ABE = ⊕_k q_k ρ_{A b^L_k} ⊗ ρ_{b^R_k E}`: construction,
//! detection, structure recovery and the reduced channels they induce.

mod local_env;
mod structure;
mod two_sided;

pub use local_env::{
    build_local_env, check_local_env, local_reduced_product, random_local_env, LocalEnvBlock,
    LocalEnvDecomposition, LocalReduction,
};
pub use structure::recover_structure;
pub use two_sided::{
    build_two_sided, check_two_sided, random_two_sided, TwoSidedBlock, TwoSidedDecomposition,
};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::assignment::{block_assignment_kraus, petz_kraus, BlockSpec, Side};
use crate::channels::{compose, KrausChannel};
use crate::error::{Error, Result};
use crate::linalg::{identity, CMatrix, Factor, SpaceLayout};
use crate::random::{random_density, random_haar_unitary, random_probabilities};
use crate::states::{conditional_mutual_information, DensityMatrix};

/// Default CMI tolerance in bits.
pub const CMI_TOL: f64 = 1e-9;
/// Trace-distance budget for reconstructions from recovered structure.
pub const RECONSTRUCTION_TOL: f64 = 1e-7;
/// Trace-distance budget for reassembled decompositions.
pub const REASSEMBLY_TOL: f64 = 1e-8;
/// Blocks lighter than this are treated as empty.
pub const ZERO_WEIGHT: f64 = 1e-12;

pub(crate) const LEFT: &str = "bL";
pub(crate) const RIGHT: &str = "bR";

/// One summand `q_k ρ_{A b^L_k} ⊗ ρ_{b^R_k E}`.
#[derive(Clone, Debug)]
pub struct MarkovBlock {
    pub weight: f64,
    pub left_dim: usize,
    pub right_dim: usize,
    /// State on `A ⊗ b^L`.
    pub left_state: DensityMatrix,
    /// State on `b^R ⊗ E`.
    pub right_state: DensityMatrix,
    /// Set when the block carries no weight and its states are arbitrary.
    pub placeholder: bool,
}

/// Block data plus the unitary taking `⊕_k b^L_k ⊗ b^R_k` onto `H_B`.
///
/// The A, B and E groups may each span several factors; the assembled state
/// lives on their concatenation.
#[derive(Clone, Debug)]
pub struct MarkovDecomposition {
    a: SpaceLayout,
    b: SpaceLayout,
    e: SpaceLayout,
    blocks: Vec<MarkovBlock>,
    embedding: CMatrix,
}

pub(crate) fn sub_layout(layout: &SpaceLayout, labels: &[&str]) -> Result<SpaceLayout> {
    let factors = labels
        .iter()
        .map(|l| {
            Ok(Factor {
                label: l.to_string(),
                dim: layout.dim_of(l)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceLayout::from_factors(factors)
}

fn block_layout(label: &str, dim: usize) -> Result<SpaceLayout> {
    SpaceLayout::new([(label, dim)])
}

/// Checks that `m` has orthonormal columns within `tol`.
pub(crate) fn check_unitary(m: &CMatrix, tol: f64) -> Result<()> {
    let defect = (m.adjoint() * m - identity(m.ncols())).norm();
    if !m.is_square() || defect > tol {
        return Err(Error::InvalidArgument(format!(
            "embedding is not unitary (defect {defect:e})"
        )));
    }
    Ok(())
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("block weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "block weights sum to {total:.17} instead of 1"
        )));
    }
    Ok(())
}

/// `Σ_k W_k X_k W_k†` with `W_k = I_pre ⊗ V_k ⊗ I_post`.
pub(crate) fn embed_blocks(
    pre: usize,
    post: usize,
    pieces: impl IntoIterator<Item = (CMatrix, CMatrix)>,
    total: usize,
) -> CMatrix {
    let mut out = CMatrix::zeros(total, total);
    let (ip, iq) = (identity(pre), identity(post));
    for (v, x) in pieces {
        let w = ip.kronecker(&v).kronecker(&iq);
        out += &w * x * w.adjoint();
    }
    out
}

impl MarkovDecomposition {
    pub fn new(
        a: SpaceLayout,
        b: SpaceLayout,
        e: SpaceLayout,
        blocks: Vec<MarkovBlock>,
        embedding: CMatrix,
    ) -> Result<Self> {
        a.concat(&b)?.concat(&e)?;
        let weights: Vec<f64> = blocks.iter().map(|k| k.weight).collect();
        check_weights(&weights)?;
        let covered: usize = blocks.iter().map(|k| k.left_dim * k.right_dim).sum();
        if covered != b.total_dim() || embedding.nrows() != b.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "blocks cover dimension {covered} but B has {}",
                b.total_dim()
            )));
        }
        check_unitary(&embedding, 1e-10)?;
        let mut fixed = Vec::with_capacity(blocks.len());
        for k in blocks {
            let left = a.concat(&block_layout(LEFT, k.left_dim)?)?;
            let right = block_layout(RIGHT, k.right_dim)?.concat(&e)?;
            fixed.push(MarkovBlock {
                left_state: k.left_state.with_layout(left)?,
                right_state: k.right_state.with_layout(right)?,
                ..k
            });
        }
        Ok(Self {
            a,
            b,
            e,
            blocks: fixed,
            embedding,
        })
    }

    pub fn a_layout(&self) -> &SpaceLayout {
        &self.a
    }

    pub fn b_layout(&self) -> &SpaceLayout {
        &self.b
    }

    pub fn e_layout(&self) -> &SpaceLayout {
        &self.e
    }

    pub fn d_a(&self) -> usize {
        self.a.total_dim()
    }

    pub fn d_e(&self) -> usize {
        self.e.total_dim()
    }

    pub fn blocks(&self) -> &[MarkovBlock] {
        &self.blocks
    }

    pub fn embedding(&self) -> &CMatrix {
        &self.embedding
    }

    /// `A ⊗ B ⊗ E` in group order.
    pub fn layout(&self) -> SpaceLayout {
        self.a
            .concat(&self.b)
            .and_then(|l| l.concat(&self.e))
            .expect("labels were checked on construction")
    }

    /// Columns of the embedding spanning block `k`.
    pub fn block_isometry(&self, k: usize) -> CMatrix {
        let offset: usize = self.blocks[..k]
            .iter()
            .map(|b| b.left_dim * b.right_dim)
            .sum();
        let width = self.blocks[k].left_dim * self.blocks[k].right_dim;
        self.embedding.columns(offset, width).into_owned()
    }

    pub fn assemble(&self) -> Result<DensityMatrix> {
        let layout = self.layout();
        let pieces = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, k)| k.weight > 0.0)
            .map(|(i, k)| {
                let x = k.left_state.matrix().kronecker(k.right_state.matrix())
                    * Complex64::new(k.weight, 0.0);
                (self.block_isometry(i), x)
            });
        let m = embed_blocks(self.d_a(), self.d_e(), pieces, layout.total_dim());
        DensityMatrix::from_computed(m, layout)
    }

    /// `Λ_B = ⊕_k id_{b^L_k} ⊗ Petz_{b^R_k → b^R_k E}` as a channel from B to
    /// `B ⊗ E`.
    pub fn conditioning_assignment(&self) -> Result<KrausChannel> {
        let specs: Vec<BlockSpec<'_>> = self
            .blocks
            .iter()
            .map(|k| BlockSpec {
                left_dim: k.left_dim,
                right_dim: k.right_dim,
                state: (k.weight > ZERO_WEIGHT && !k.placeholder).then_some(&k.right_state),
            })
            .collect();
        let kraus = block_assignment_kraus(&self.embedding, &specs, Side::Right, self.d_e())?;
        KrausChannel::with_tolerance(
            kraus,
            self.b.clone(),
            self.b.concat(&self.e)?,
            crate::channels::COMPOSED_COMPLETENESS_TOL,
        )
    }
}

/// Samples a decomposition with Haar embedding, Dirichlet weights and
/// full-rank block states.
pub fn random_markov_decomposition<R: Rng + ?Sized>(
    a: &SpaceLayout,
    b_label: &str,
    e: &SpaceLayout,
    block_dims: &[(usize, usize)],
    rng: &mut R,
) -> Result<MarkovDecomposition> {
    if block_dims.is_empty() || block_dims.iter().any(|&(l, r)| l == 0 || r == 0) {
        return Err(Error::InvalidArgument("block dimensions must be positive".into()));
    }
    let d_b: usize = block_dims.iter().map(|&(l, r)| l * r).sum();
    let b = SpaceLayout::new([(b_label, d_b)])?;
    let weights = random_probabilities(block_dims.len(), rng);
    let mut blocks = Vec::with_capacity(block_dims.len());
    for (&(l, r), w) in block_dims.iter().zip(weights) {
        let left = a.concat(&block_layout(LEFT, l)?)?;
        let right = block_layout(RIGHT, r)?.concat(e)?;
        blocks.push(MarkovBlock {
            weight: w,
            left_dim: l,
            right_dim: r,
            left_state: random_density(&left, left.total_dim(), rng)?,
            right_state: random_density(&right, right.total_dim(), rng)?,
            placeholder: false,
        });
    }
    let embedding = random_haar_unitary(d_b, rng)?;
    MarkovDecomposition::new(a.clone(), b, e.clone(), blocks, embedding)
}

/// Random block shape: one or two blocks with factor dimensions in 1..=max.
pub fn random_block_dims<R: Rng + ?Sized>(max_blocks: usize, max_factor: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = rng.random_range(1..=max_blocks.max(1));
    (0..n)
        .map(|_| (rng.random_range(1..=max_factor), rng.random_range(1..=max_factor)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarkovVerdict {
    pub markov: bool,
    pub cmi: f64,
    pub petz_distance: f64,
}

/// Markov test by CMI and by Petz reconstruction of `ρ` from `ρ_AB`.
///
/// `markov` requires `cmi ≤ tol` and a Petz distance of at most `√tol`.
pub fn is_markov(rho: &DensityMatrix, a: &[&str], b: &[&str], e: &[&str], tol: f64) -> Result<MarkovVerdict> {
    let cmi = conditional_mutual_information(rho, a, e, b)?;
    let petz_distance = petz_reconstruction_distance(rho, a, b, e)?;
    Ok(MarkovVerdict {
        markov: cmi <= tol && petz_distance <= tol.sqrt(),
        cmi,
        petz_distance,
    })
}

/// Trace distance between `ρ` and `(id_A ⊗ Petz_{B→BE})(ρ_AB)`.
pub fn petz_reconstruction_distance(rho: &DensityMatrix, a: &[&str], b: &[&str], e: &[&str]) -> Result<f64> {
    let layout = rho.layout();
    let be: Vec<&str> = layout
        .labels()
        .into_iter()
        .filter(|l| b.contains(l) || e.contains(l))
        .collect();
    let ab: Vec<&str> = layout
        .labels()
        .into_iter()
        .filter(|l| a.contains(l) || b.contains(l))
        .collect();
    let rho_be = rho.marginal(&be)?;
    let kraus = petz_kraus(&rho_be, e)?;
    let petz = KrausChannel::new(kraus, rho_be.layout().without(e)?, rho_be.layout().clone())?;
    let rho_ab = rho.marginal(&ab)?;
    let lifted = petz.lift_localized(rho_ab.layout())?;
    let rebuilt = lifted.apply(&rho_ab)?.permuted(&layout.labels())?;
    rebuilt.trace_distance(rho)
}

/// `ε̄_B = Tr_{E'} ∘ F_BE ∘ Λ_B` together with the trace distance between
/// the true reduced output and `(id_A ⊗ ε̄_B)(ρ_AB)`.
///
/// `channel` acts on `B ⊗ E` in the decomposition's group order; `env_out`
/// lists its environment output factors.
pub fn markov_reduced_channel(
    decomp: &MarkovDecomposition,
    channel: &KrausChannel,
    env_out: &[&str],
) -> Result<(KrausChannel, f64)> {
    let be = decomp.b_layout().concat(decomp.e_layout())?;
    if channel.in_layout() != &be {
        return Err(Error::DimensionMismatch(format!(
            "channel acts on {} but the decomposition has {}",
            channel.in_layout(),
            be
        )));
    }
    let lambda = decomp.conditioning_assignment()?;
    let trace_env = KrausChannel::partial_trace(channel.out_layout(), env_out)?;
    let eps = compose(&trace_env, &compose(channel, &lambda)?)?;

    let rho = decomp.assemble()?;
    let evolved = channel.lift_localized(rho.layout())?.apply(&rho)?;
    let keep: Vec<&str> = evolved
        .layout()
        .labels()
        .into_iter()
        .filter(|l| !env_out.contains(l))
        .collect();
    let truth = evolved.marginal(&keep)?;
    let ab: Vec<String> = decomp
        .a_layout()
        .concat(decomp.b_layout())?
        .labels()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let ab: Vec<&str> = ab.iter().map(|s| s.as_str()).collect();
    let rho_ab = rho.marginal(&ab)?;
    let reduced = eps.lift_localized(rho_ab.layout())?.apply(&rho_ab)?;
    let check = reduced.trace_distance(&truth)?;
    Ok((eps, check))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::swap_unitary;
    use crate::linalg::{max_abs_diff, tensor};
    use crate::random::{random_cptp, random_unitary_channel, rng_from_seed};
    use crate::states::mutual_information;

    fn layout(spec: &[(&str, usize)]) -> SpaceLayout {
        SpaceLayout::new(spec.iter().copied()).unwrap()
    }

    #[test]
    fn single_block_trivial_right_is_product_with_environment() {
        let mut rng = rng_from_seed(31);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        let d = random_markov_decomposition(&a, "B", &e, &[(2, 1)], &mut rng).unwrap();
        let rho = d.assemble().unwrap();
        let k = &d.blocks()[0];
        let v = d.embedding();
        let rho_ab = embed_blocks(2, 1, [(v.clone(), k.left_state.matrix().clone())], 4);
        let expected = tensor(&rho_ab, k.right_state.matrix());
        assert!(max_abs_diff(rho.matrix(), &expected) < 1e-14);
    }

    #[test]
    fn product_blocks_give_product_state() {
        let mut rng = rng_from_seed(32);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        let ra = random_density(&a, 2, &mut rng).unwrap();
        let rb = random_density(&layout(&[("bR", 3)]), 3, &mut rng).unwrap();
        let re = random_density(&e, 2, &mut rng).unwrap();
        let block = MarkovBlock {
            weight: 1.0,
            left_dim: 1,
            right_dim: 3,
            left_state: ra.clone(),
            right_state: rb.tensor(&re).unwrap(),
            placeholder: false,
        };
        let d = MarkovDecomposition::new(a, layout(&[("B", 3)]), e, vec![block], identity(3)).unwrap();
        let rho = d.assemble().unwrap();
        let expected = tensor(&tensor(ra.matrix(), rb.matrix()), re.matrix());
        assert!(max_abs_diff(rho.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn assembled_states_are_markov() {
        let mut rng = rng_from_seed(33);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        for _ in 0..20 {
            let dims = random_block_dims(2, 2, &mut rng);
            let d = random_markov_decomposition(&a, "B", &e, &dims, &mut rng).unwrap();
            let rho = d.assemble().unwrap();
            let v = is_markov(&rho, &["A"], &["B"], &["E"], CMI_TOL).unwrap();
            assert!(v.markov && v.cmi <= 1e-9 && v.petz_distance <= 1e-7, "{v:?}");
        }
    }

    #[test]
    fn entangled_environment_is_not_markov() {
        let mut psi = CMatrix::zeros(4, 1);
        psi[(0, 0)] = Complex64::new(1.0, 0.0);
        psi[(3, 0)] = Complex64::new(1.0, 0.0);
        let phi = DensityMatrix::pure(&psi, layout(&[("A", 2), ("E", 2)])).unwrap();
        let rb = DensityMatrix::maximally_mixed(layout(&[("B", 2)]));
        let rho = phi.tensor(&rb).unwrap().permuted(&["A", "B", "E"]).unwrap();
        let v = is_markov(&rho, &["A"], &["B"], &["E"], CMI_TOL).unwrap();
        assert!(!v.markov);
        assert!((v.cmi - 2.0).abs() < 1e-9);

        let mut rng = rng_from_seed(34);
        let prod = random_density(&layout(&[("A", 2)]), 2, &mut rng)
            .unwrap()
            .tensor(&rb)
            .unwrap()
            .tensor(&random_density(&layout(&[("E", 3)]), 3, &mut rng).unwrap())
            .unwrap();
        let v = is_markov(&prod, &["A"], &["B"], &["E"], CMI_TOL).unwrap();
        assert!(v.markov && v.cmi <= 1e-12);
    }

    #[test]
    fn reduced_channel_examples() {
        let mut rng = rng_from_seed(35);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        let d = random_markov_decomposition(&a, "B", &e, &[(1, 2), (2, 1)], &mut rng).unwrap();
        let be = layout(&[("B", 4), ("E", 2)]);
        let (eps, check) = markov_reduced_channel(&d, &KrausChannel::identity(be.clone()), &["E"]).unwrap();
        assert!(check <= 1e-9);
        let rho_b = d.assemble().unwrap().marginal(&["B"]).unwrap();
        assert!(eps.apply(&rho_b).unwrap().trace_distance(&rho_b).unwrap() < 1e-9);

        for _ in 0..5 {
            let u = random_unitary_channel(&be, &mut rng).unwrap();
            let (_, check) = markov_reduced_channel(&d, &u, &["E"]).unwrap();
            assert!(check <= 1e-8, "{check}");
            let out = layout(&[("B'", 8), ("F", 3)]);
            let f = random_cptp(&be, &out, 2, &mut rng).unwrap();
            let (eps, check) = markov_reduced_channel(&d, &f, &["F"]).unwrap();
            assert!(check <= 1e-8, "{check}");
            assert_eq!(eps.out_layout().labels(), vec!["B'"]);
        }
    }

    #[test]
    fn swap_on_factorized_state_gives_constant_map() {
        let mut rng = rng_from_seed(36);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        let d = random_markov_decomposition(&a, "B", &e, &[(2, 1)], &mut rng).unwrap();
        let be = layout(&[("B", 2), ("E", 2)]);
        let swap = KrausChannel::unitary(swap_unitary(2), be).unwrap();
        let (eps, check) = markov_reduced_channel(&d, &swap, &["E"]).unwrap();
        assert!(check <= 1e-8);
        let omega = d.blocks()[0].right_state.matrix().clone();
        let rho = d.assemble().unwrap();
        let rho_b = rho.marginal(&["B"]).unwrap();
        assert!(max_abs_diff(eps.apply(&rho_b).unwrap().matrix(), &omega) < 1e-9);
        let before = mutual_information(&rho.marginal(&["A", "B"]).unwrap(), &["A"], &["B"]).unwrap();
        assert!(before >= 0.0);
    }

    #[test]
    fn rejects_bad_decompositions() {
        let a = layout(&[("A", 1)]);
        let e = layout(&[("E", 1)]);
        let s = DensityMatrix::maximally_mixed(layout(&[("x", 2)]));
        let block = |w| MarkovBlock {
            weight: w,
            left_dim: 2,
            right_dim: 1,
            left_state: s.clone(),
            right_state: DensityMatrix::maximally_mixed(layout(&[("y", 1)])),
            placeholder: false,
        };
        let b = layout(&[("B", 2)]);
        assert!(MarkovDecomposition::new(a.clone(), b.clone(), e.clone(), vec![block(0.9)], identity(2)).is_err());
        assert!(MarkovDecomposition::new(a.clone(), b.clone(), e.clone(), vec![block(1.0)], identity(2) * Complex64::new(2.0, 0.0)).is_err());
        assert!(MarkovDecomposition::new(a, layout(&[("B", 3)]), e, vec![block(1.0)], identity(3)).is_err());
    }
}
