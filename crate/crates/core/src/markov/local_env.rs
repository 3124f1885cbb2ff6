//! Markov states with a local environment on each side,
//! `ρ = ⊕_{jk} q_jk ρ_{a^L_j E_A} ⊗ ρ_{a^R_j b^L_k} ⊗ ρ_{b^R_k E_B}`.

use num_complex::Complex64;
use rand::Rng;

use super::{check_weights, is_markov, recover_structure, sub_layout, MarkovDecomposition, CMI_TOL, ZERO_WEIGHT};
use crate::assignment::{block_assignment_kraus, BlockSpec, Side};
use crate::channels::{compose, KrausChannel, COMPOSED_COMPLETENESS_TOL};
use crate::error::{Error, Result};
use crate::linalg::{identity, partial_trace, permute_subsystems, CMatrix, SpaceLayout};
use crate::random::{random_density, random_haar_unitary, random_probabilities};
use crate::states::DensityMatrix;

const LOCAL: [&str; 6] = ["aL", "aR", "ea", "bL", "bR", "eb"];

#[derive(Clone, Debug)]
pub struct LocalEnvBlock {
    pub j: usize,
    pub k: usize,
    pub weight: f64,
    /// State on `(a^L_j, E_A)`.
    pub a_env_state: DensityMatrix,
    /// State on `(a^R_j, b^L_k)`.
    pub middle_state: DensityMatrix,
    /// State on `(b^R_k, E_B)`.
    pub b_env_state: DensityMatrix,
    /// Zero-weight pair whose states are arbitrary.
    pub placeholder: bool,
}

#[derive(Clone, Debug)]
pub struct LocalEnvDecomposition {
    /// `(A, E_A, B, E_B)`.
    pub layout: SpaceLayout,
    /// `(dim a^L_j, dim a^R_j)` in embedding order.
    pub a_dims: Vec<(usize, usize)>,
    pub b_dims: Vec<(usize, usize)>,
    pub a_embedding: CMatrix,
    pub b_embedding: CMatrix,
    pub blocks: Vec<LocalEnvBlock>,
}

/// Effective channels `ε̄_A ⊗ ε̄_B` and the trace distance between
/// `(ε̄_A ⊗ ε̄_B)(ρ_AB)` and the true reduced output.
#[derive(Clone, Debug)]
pub struct LocalReduction {
    pub eps_a: KrausChannel,
    pub eps_b: KrausChannel,
    pub check: f64,
}

fn columns(m: &CMatrix, dims: &[(usize, usize)], i: usize) -> CMatrix {
    let offset: usize = dims[..i].iter().map(|&(l, r)| l * r).sum();
    m.columns(offset, dims[i].0 * dims[i].1).into_owned()
}

fn local_layout(dims: [usize; 6]) -> Result<SpaceLayout> {
    SpaceLayout::new(LOCAL.iter().copied().zip(dims))
}

fn two(l1: &str, d1: usize, l2: &str, d2: usize) -> Result<SpaceLayout> {
    SpaceLayout::new([(l1, d1), (l2, d2)])
}

impl LocalEnvDecomposition {
    fn dims4(&self) -> [usize; 4] {
        let d = self.layout.dims();
        [d[0], d[1], d[2], d[3]]
    }

    fn labels(&self) -> [&str; 4] {
        let l = self.layout.labels();
        [l[0], l[1], l[2], l[3]]
    }

    pub fn a_isometry(&self, j: usize) -> CMatrix {
        columns(&self.a_embedding, &self.a_dims, j)
    }

    pub fn b_isometry(&self, k: usize) -> CMatrix {
        columns(&self.b_embedding, &self.b_dims, k)
    }

    /// `I_A ⊗ I_{E_A} ⊗ I_B ⊗ I_{E_B}` restricted to block `(j, k)`, with
    /// columns ordered `(a^L, a^R, E_A, b^L, b^R, E_B)`.
    fn pair_isometry(&self, j: usize, k: usize) -> CMatrix {
        let [_, ea, _, eb] = self.dims4();
        let va = self.a_isometry(j);
        let vb = self.b_isometry(k);
        va.kronecker(&identity(ea)).kronecker(&vb).kronecker(&identity(eb))
    }

    pub fn assemble(&self) -> Result<DensityMatrix> {
        build_local_env(self)
    }

    /// `Tr_{E_A E_B} ρ = ⊕_{jk} q_jk ρ_{a^L_j} ⊗ ρ_{a^R_j b^L_k} ⊗ ρ_{b^R_k}`,
    /// built from the block data.
    pub fn system_marginal(&self) -> Result<DensityMatrix> {
        let [da, _, db, _] = self.dims4();
        let [la, _, lb, _] = self.labels();
        let mut m = CMatrix::zeros(da * db, da * db);
        for blk in self.blocks.iter().filter(|b| b.weight > 0.0) {
            let (al, ar) = self.a_dims[blk.j];
            let (bl, br) = self.b_dims[blk.k];
            let r_al = partial_trace(blk.a_env_state.matrix(), blk.a_env_state.layout(), &["aL"])?.0;
            let r_br = partial_trace(blk.b_env_state.matrix(), blk.b_env_state.layout(), &["bR"])?.0;
            let x = r_al.kronecker(blk.middle_state.matrix()).kronecker(&r_br);
            debug_assert_eq!(x.nrows(), al * ar * bl * br);
            let w = self.a_isometry(blk.j).kronecker(&self.b_isometry(blk.k));
            m += (&w * x * w.adjoint()) * Complex64::new(blk.weight, 0.0);
        }
        DensityMatrix::from_computed(m, two(la, da, lb, db)?)
    }
}

/// Assembles `Σ_{jk} q_jk W_jk (ρ_{a^L E_A} ⊗ ρ_{a^R b^L} ⊗ ρ_{b^R E_B}) W_jk†`
/// on `(A, E_A, B, E_B)`.
pub fn build_local_env(decomp: &LocalEnvDecomposition) -> Result<DensityMatrix> {
    let n = decomp.layout.total_dim();
    check_weights(&decomp.blocks.iter().map(|b| b.weight).collect::<Vec<_>>())?;
    let [_, ea, _, eb] = decomp.dims4();
    let mut m = CMatrix::zeros(n, n);
    for blk in decomp.blocks.iter().filter(|b| b.weight > 0.0) {
        let (al, ar) = decomp.a_dims[blk.j];
        let (bl, br) = decomp.b_dims[blk.k];
        let x = blk
            .a_env_state
            .matrix()
            .kronecker(blk.middle_state.matrix())
            .kronecker(blk.b_env_state.matrix());
        let written = SpaceLayout::new([
            ("aL", al),
            ("ea", ea),
            ("aR", ar),
            ("bL", bl),
            ("bR", br),
            ("eb", eb),
        ])?;
        let (x, _) = permute_subsystems(&x, &written, &LOCAL)?;
        let w = decomp.pair_isometry(blk.j, blk.k);
        m += (&w * x * w.adjoint()) * Complex64::new(blk.weight, 0.0);
    }
    DensityMatrix::from_computed(m, decomp.layout.clone())
}

/// Random decomposition with Haar embeddings, one environment state per
/// A-block and per B-block, and independent middle states.
pub fn random_local_env<R: Rng + ?Sized>(
    layout: &SpaceLayout,
    a_dims: &[(usize, usize)],
    b_dims: &[(usize, usize)],
    rng: &mut R,
) -> Result<LocalEnvDecomposition> {
    let d = layout.dims();
    let cover = |dims: &[(usize, usize)]| dims.iter().map(|&(l, r)| l * r).sum::<usize>();
    if layout.len() != 4 || cover(a_dims) != d[0] || cover(b_dims) != d[2] {
        return Err(Error::DimensionMismatch(format!("block dimensions do not cover {layout}")));
    }
    let a_env: Vec<DensityMatrix> = a_dims
        .iter()
        .map(|&(l, _)| {
            let s = two("aL", l, "ea", d[1])?;
            random_density(&s, s.total_dim(), rng)
        })
        .collect::<Result<_>>()?;
    let b_env: Vec<DensityMatrix> = b_dims
        .iter()
        .map(|&(_, r)| {
            let s = two("bR", r, "eb", d[3])?;
            random_density(&s, s.total_dim(), rng)
        })
        .collect::<Result<_>>()?;
    let weights = random_probabilities(a_dims.len() * b_dims.len(), rng);
    let mut blocks = Vec::new();
    for (j, &(_, ar)) in a_dims.iter().enumerate() {
        for (k, &(bl, _)) in b_dims.iter().enumerate() {
            let s = two("aR", ar, "bL", bl)?;
            blocks.push(LocalEnvBlock {
                j,
                k,
                weight: weights[j * b_dims.len() + k],
                a_env_state: a_env[j].clone(),
                middle_state: random_density(&s, s.total_dim(), rng)?,
                b_env_state: b_env[k].clone(),
                placeholder: false,
            });
        }
    }
    Ok(LocalEnvDecomposition {
        layout: layout.clone(),
        a_dims: a_dims.to_vec(),
        b_dims: b_dims.to_vec(),
        a_embedding: random_haar_unitary(d[0], rng)?,
        b_embedding: random_haar_unitary(d[2], rng)?,
        blocks,
    })
}

fn usable(d: &MarkovDecomposition, i: usize) -> bool {
    let b = &d.blocks()[i];
    !b.placeholder && b.weight > ZERO_WEIGHT
}

/// Recovers the local-environment structure of `rho` on the factors
/// `(a, e_a, b, e_b)` and verifies the reassembly within `tol`.
pub fn check_local_env(
    rho: &DensityMatrix,
    a: &str,
    e_a: &str,
    b: &str,
    e_b: &str,
    tol: f64,
) -> Result<LocalEnvDecomposition> {
    let fail = |msg: String| Error::NotLocalEnvMarkov(msg);
    let vb = is_markov(rho, &[a, e_a], &[b], &[e_b], CMI_TOL)?;
    if !vb.markov {
        return Err(fail(format!("I({a}{e_a}:{e_b}|{b}) = {:e}", vb.cmi)));
    }
    let va = is_markov(rho, &[b, e_b], &[a], &[e_a], CMI_TOL)?;
    if !va.markov {
        return Err(fail(format!("I({b}{e_b}:{e_a}|{a}) = {:e}", va.cmi)));
    }
    let side_b = recover_structure(rho, &[a, e_a], &[b], &[e_b]).map_err(|x| fail(x.to_string()))?;
    let side_a = recover_structure(rho, &[e_a], &[a], &[b, e_b]).map_err(|x| fail(x.to_string()))?;
    let sigma = rho.permuted(&[a, e_a, b, e_b])?;
    let layout = sigma.layout().clone();
    let d = layout.dims();

    let a_dims: Vec<(usize, usize)> = side_a.blocks().iter().map(|x| (x.left_dim, x.right_dim)).collect();
    let b_dims: Vec<(usize, usize)> = side_b.blocks().iter().map(|x| (x.left_dim, x.right_dim)).collect();
    let mut decomp = LocalEnvDecomposition {
        layout,
        a_dims,
        b_dims,
        a_embedding: side_a.embedding().clone(),
        b_embedding: side_b.embedding().clone(),
        blocks: Vec::new(),
    };

    let mut total = 0.0;
    for j in 0..decomp.a_dims.len() {
        let (al, ar) = decomp.a_dims[j];
        // left_state of the A side lives on (E_A, a^L).
        let a_env = if usable(&side_a, j) {
            let s = side_a.blocks()[j].left_state.relabeled(&["ea", "aL"])?;
            s.permuted(&["aL", "ea"])?
        } else {
            DensityMatrix::maximally_mixed(two("aL", al, "ea", d[1])?)
        };
        for k in 0..decomp.b_dims.len() {
            let (bl, br) = decomp.b_dims[k];
            let b_env = if usable(&side_b, k) {
                side_b.blocks()[k].right_state.relabeled(&["bR", "eb"])?
            } else {
                DensityMatrix::maximally_mixed(two("bR", br, "eb", d[3])?)
            };
            let w = decomp.pair_isometry(j, k);
            let p = w.adjoint() * sigma.matrix() * &w;
            let q = p.trace().re;
            let mid_layout = two("aR", ar, "bL", bl)?;
            let live = q > ZERO_WEIGHT && usable(&side_a, j) && usable(&side_b, k);
            let middle = if live {
                let local = local_layout([al, ar, d[1], bl, br, d[3]])?;
                let (m, _) = partial_trace(&p, &local, &["aR", "bL"])?;
                DensityMatrix::from_computed(m / Complex64::new(q, 0.0), mid_layout)?
            } else {
                DensityMatrix::maximally_mixed(mid_layout)
            };
            let weight = if live { q } else { 0.0 };
            total += weight;
            decomp.blocks.push(LocalEnvBlock {
                j,
                k,
                weight,
                a_env_state: a_env.clone(),
                middle_state: middle,
                b_env_state: b_env,
                placeholder: !live,
            });
        }
    }
    if total <= 0.0 {
        return Err(fail("no block carries weight".into()));
    }
    for blk in &mut decomp.blocks {
        blk.weight /= total;
    }
    let dist = decomp.assemble()?.trace_distance(&sigma)?;
    if dist > tol {
        return Err(fail(format!("reassembly distance {dist:e} exceeds {tol:e}")));
    }
    Ok(decomp)
}

fn one_sided_assignment(
    embedding: &CMatrix,
    dims: &[(usize, usize)],
    states: &[Option<DensityMatrix>],
    side: Side,
    system: SpaceLayout,
    env: SpaceLayout,
) -> Result<KrausChannel> {
    let specs: Vec<BlockSpec<'_>> = dims
        .iter()
        .zip(states)
        .map(|(&(l, r), s)| BlockSpec {
            left_dim: l,
            right_dim: r,
            state: s.as_ref(),
        })
        .collect();
    let kraus = block_assignment_kraus(embedding, &specs, side, env.total_dim())?;
    let out = system.concat(&env)?;
    KrausChannel::with_tolerance(kraus, system, out, COMPOSED_COMPLETENESS_TOL)
}

/// `ε̄_A = Tr_{env_a_out} ∘ F_A ∘ Λ_A` and `ε̄_B = Tr_{env_b_out} ∘ F_B ∘ Λ_B`,
/// where `ch_a` acts on `(A, E_A)` and `ch_b` on `(B, E_B)`.
pub fn local_reduced_product(
    decomp: &LocalEnvDecomposition,
    ch_a: &KrausChannel,
    ch_b: &KrausChannel,
    env_a_out: &[&str],
    env_b_out: &[&str],
) -> Result<LocalReduction> {
    let [la, lea, lb, leb] = decomp.labels();
    let side_a_layout = sub_layout(&decomp.layout, &[la, lea])?;
    let side_b_layout = sub_layout(&decomp.layout, &[lb, leb])?;
    if ch_a.in_layout() != &side_a_layout || ch_b.in_layout() != &side_b_layout {
        return Err(Error::LayoutMismatch(format!(
            "channels must act on {side_a_layout} and {side_b_layout}"
        )));
    }
    let pick = |n: usize, state: &dyn Fn(&LocalEnvBlock) -> &DensityMatrix, idx: &dyn Fn(&LocalEnvBlock) -> usize| {
        (0..n)
            .map(|i| {
                decomp
                    .blocks
                    .iter()
                    .find(|b| idx(b) == i && !b.placeholder && b.weight > ZERO_WEIGHT)
                    .map(|b| state(b).clone())
            })
            .collect::<Vec<_>>()
    };
    let a_states = pick(decomp.a_dims.len(), &|b| &b.a_env_state, &|b| b.j);
    let b_states = pick(decomp.b_dims.len(), &|b| &b.b_env_state, &|b| b.k);

    let lambda_a = one_sided_assignment(
        &decomp.a_embedding,
        &decomp.a_dims,
        &a_states,
        Side::Left,
        sub_layout(&decomp.layout, &[la])?,
        sub_layout(&decomp.layout, &[lea])?,
    )?;
    let lambda_b = one_sided_assignment(
        &decomp.b_embedding,
        &decomp.b_dims,
        &b_states,
        Side::Right,
        sub_layout(&decomp.layout, &[lb])?,
        sub_layout(&decomp.layout, &[leb])?,
    )?;
    let eps_a = compose(
        &KrausChannel::partial_trace(ch_a.out_layout(), env_a_out)?,
        &compose(ch_a, &lambda_a)?,
    )?;
    let eps_b = compose(
        &KrausChannel::partial_trace(ch_b.out_layout(), env_b_out)?,
        &compose(ch_b, &lambda_b)?,
    )?;

    let rho = decomp.assemble()?;
    let mid = ch_a.lift_localized(rho.layout())?.apply(&rho)?;
    let out = ch_b.lift_localized(mid.layout())?.apply(&mid)?;
    let keep: Vec<&str> = out
        .layout()
        .labels()
        .into_iter()
        .filter(|l| !env_a_out.contains(l) && !env_b_out.contains(l))
        .collect();
    let truth = out.marginal(&keep)?;
    let rho_ab = rho.marginal(&[la, lb])?;
    let x = eps_a.lift_localized(rho_ab.layout())?.apply(&rho_ab)?;
    let reduced = eps_b.lift_localized(x.layout())?.apply(&x)?;
    let check = reduced.permuted(&truth.layout().labels())?.trace_distance(&truth)?;
    Ok(LocalReduction { eps_a, eps_b, check })
}
