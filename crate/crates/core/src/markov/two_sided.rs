//! States that are Markov with respect to both system parties at once.

use num_complex::Complex64;
use rand::Rng;

use super::{check_weights, is_markov, recover_structure, MarkovDecomposition, CMI_TOL, ZERO_WEIGHT};
use crate::error::{Error, Result};
use crate::linalg::{identity, partial_trace, CMatrix, SpaceLayout};
use crate::random::{random_density, random_haar_unitary, random_probabilities};
use crate::states::DensityMatrix;

/// Weight below which a joint projection `Π_jk ρ Π_jk` counts as empty.
const OVERLAP_TOL: f64 = 1e-10;

/// `w (V_A ⊗ V_B) ρ_sys (V_A ⊗ V_B)† ⊗ ρ_E`, where `V_A` and `V_B` are
/// isometries into the system factors.
#[derive(Clone, Debug)]
pub struct TwoSidedBlock {
    pub weight: f64,
    pub a_iso: CMatrix,
    pub b_iso: CMatrix,
    /// State on `(a, b)` with dimensions given by the isometry widths.
    pub system_state: DensityMatrix,
    pub env_state: DensityMatrix,
}

/// Both one-sided forms of a two-sided Markov state.
#[derive(Clone, Debug)]
pub struct TwoSidedDecomposition {
    pub layout: SpaceLayout,
    /// `⊕_j p_j ρ_{A_j B} ⊗ ρ_E^{(j)}`.
    pub a_form: Vec<TwoSidedBlock>,
    /// `⊕_k q_k ρ̂_{A B_k} ⊗ ρ̂_E^{(k)}`.
    pub b_form: Vec<TwoSidedBlock>,
    pub a_embedding: CMatrix,
    pub b_embedding: CMatrix,
    /// Some A-block overlaps every B-block, forcing `ρ = ρ_AB ⊗ ρ_E`.
    pub factorized: bool,
    /// `‖ρ − ρ_AB ⊗ ρ_E‖` in trace distance.
    pub factorization_distance: f64,
    /// Largest defect of the environment factorizations across overlapping blocks.
    pub factorization_defect: f64,
}

impl TwoSidedDecomposition {
    pub fn assemble_a_form(&self) -> Result<DensityMatrix> {
        build_two_sided(&self.layout, &self.a_form)
    }

    pub fn assemble_b_form(&self) -> Result<DensityMatrix> {
        build_two_sided(&self.layout, &self.b_form)
    }
}

/// Sums the blocks on a three-factor layout `(A, B, E)`.
pub fn build_two_sided(layout: &SpaceLayout, blocks: &[TwoSidedBlock]) -> Result<DensityMatrix> {
    if layout.len() != 3 {
        return Err(Error::InvalidLayout(format!("{layout} must have exactly three factors")));
    }
    let dims = layout.dims();
    check_weights(&blocks.iter().map(|b| b.weight).collect::<Vec<_>>())?;
    let mut m = CMatrix::zeros(layout.total_dim(), layout.total_dim());
    for b in blocks.iter().filter(|b| b.weight > 0.0) {
        if b.a_iso.nrows() != dims[0] || b.b_iso.nrows() != dims[1] || b.env_state.dim() != dims[2] {
            return Err(Error::DimensionMismatch(format!("block does not fit {layout}")));
        }
        let w = b.a_iso.kronecker(&b.b_iso).kronecker(&identity(dims[2]));
        let x = b.system_state.matrix().kronecker(b.env_state.matrix());
        m += (&w * x * w.adjoint()) * Complex64::new(b.weight, 0.0);
    }
    DensityMatrix::from_computed(m, layout.clone())
}

/// Random state `⊕_c p_c ρ_{A_c B_c} ⊗ ρ_E^{(c)}` with the block label shared
/// by orthogonal subspaces of A and of B. With `shared_env` every block uses
/// the same environment state.
pub fn random_two_sided<R: Rng + ?Sized>(
    layout: &SpaceLayout,
    block_dims: &[(usize, usize)],
    shared_env: bool,
    rng: &mut R,
) -> Result<(DensityMatrix, Vec<TwoSidedBlock>)> {
    let dims = layout.dims();
    let (sa, sb): (usize, usize) = block_dims.iter().fold((0, 0), |(x, y), &(a, b)| (x + a, y + b));
    if layout.len() != 3 || sa != dims[0] || sb != dims[1] {
        return Err(Error::DimensionMismatch(format!(
            "blocks cover ({sa}, {sb}) but the layout is {layout}"
        )));
    }
    let ua = random_haar_unitary(dims[0], rng)?;
    let ub = random_haar_unitary(dims[1], rng)?;
    let env = SpaceLayout::new([("e", dims[2])])?;
    let common = random_density(&env, dims[2], rng)?;
    let weights = random_probabilities(block_dims.len(), rng);
    let (mut oa, mut ob) = (0, 0);
    let mut blocks = Vec::new();
    for (&(da, db), w) in block_dims.iter().zip(weights) {
        let sys = SpaceLayout::new([("a", da), ("b", db)])?;
        blocks.push(TwoSidedBlock {
            weight: w,
            a_iso: ua.columns(oa, da).into_owned(),
            b_iso: ub.columns(ob, db).into_owned(),
            system_state: random_density(&sys, da * db, rng)?,
            env_state: if shared_env {
                common.clone()
            } else {
                random_density(&env, dims[2], rng)?
            },
        });
        oa += da;
        ob += db;
    }
    Ok((build_two_sided(layout, &blocks)?, blocks))
}

fn live(d: &MarkovDecomposition) -> Vec<usize> {
    (0..d.blocks().len())
        .filter(|&i| !d.blocks()[i].placeholder && d.blocks()[i].weight > ZERO_WEIGHT)
        .collect()
}

fn reduce(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let names = ["0", "1", "2", "3"];
    let layout = SpaceLayout::new(dims.iter().enumerate().map(|(i, &d)| (names[i], d)))?;
    let keep: Vec<&str> = keep.iter().map(|&i| names[i]).collect();
    Ok(partial_trace(m, &layout, &keep)?.0)
}

fn distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    crate::linalg::trace_distance(a, b)
}

/// Recovers both one-sided structures of `rho` on `(a, b, e)` and returns
/// the forms `⊕_j p_j ρ_{A_j B} ⊗ ρ_E^{(j)}` and `⊕_k q_k ρ̂_{A B_k} ⊗ ρ̂_E^{(k)}`,
/// each verified to reassemble `rho` within `tol`.
pub fn check_two_sided(rho: &DensityMatrix, a: &str, b: &str, e: &str, tol: f64) -> Result<TwoSidedDecomposition> {
    let fail = |msg: String| Error::NotTwoSidedMarkov(msg);
    let vb = is_markov(rho, &[a], &[b], &[e], CMI_TOL)?;
    if !vb.markov {
        return Err(fail(format!("I({a}:{e}|{b}) = {:e}", vb.cmi)));
    }
    let va = is_markov(rho, &[b], &[a], &[e], CMI_TOL)?;
    if !va.markov {
        return Err(fail(format!("I({b}:{e}|{a}) = {:e}", va.cmi)));
    }
    let side_b = recover_structure(rho, &[a], &[b], &[e]).map_err(|x| fail(x.to_string()))?;
    let side_a = recover_structure(rho, &[b], &[a], &[e]).map_err(|x| fail(x.to_string()))?;
    let sigma = rho.permuted(&[a, b, e])?;
    let layout = sigma.layout().clone();
    let (d_a, d_b, d_e) = (layout.dims()[0], layout.dims()[1], layout.dims()[2]);

    let js = live(&side_a);
    let ks = live(&side_b);
    let proj = |v: CMatrix| &v * v.adjoint();
    let mut overlaps = vec![vec![false; ks.len()]; js.len()];
    let mut defect: f64 = 0.0;
    for (x, &j) in js.iter().enumerate() {
        let pa = proj(side_a.block_isometry(j));
        let ja = &side_a.blocks()[j];
        let ra = reduce(ja.right_state.matrix(), &[ja.right_dim, d_e], &[0])?;
        let ea = reduce(ja.right_state.matrix(), &[ja.right_dim, d_e], &[1])?;
        for (y, &k) in ks.iter().enumerate() {
            let pb = proj(side_b.block_isometry(k));
            let pi = pa.kronecker(&pb).kronecker(&identity(d_e));
            let w = (&pi * sigma.matrix()).trace().re;
            if w <= OVERLAP_TOL {
                continue;
            }
            overlaps[x][y] = true;
            let kb = &side_b.blocks()[k];
            let rb = reduce(kb.right_state.matrix(), &[kb.right_dim, d_e], &[0])?;
            let eb = reduce(kb.right_state.matrix(), &[kb.right_dim, d_e], &[1])?;
            defect = defect
                .max(distance(ja.right_state.matrix(), &ra.kronecker(&eb))?)
                .max(distance(kb.right_state.matrix(), &rb.kronecker(&ea))?);
        }
        if !overlaps[x].iter().any(|&o| o) {
            return Err(fail(format!("A-block {j} overlaps no B-block")));
        }
    }
    if defect > tol {
        return Err(fail(format!("environment does not factorize (defect {defect:e})")));
    }

    let renorm = |d: &MarkovDecomposition, idx: &[usize]| -> Vec<f64> {
        let t: f64 = idx.iter().map(|&i| d.blocks()[i].weight).sum();
        idx.iter().map(|&i| d.blocks()[i].weight / t).collect()
    };
    let pj = renorm(&side_a, &js);
    let qk = renorm(&side_b, &ks);

    let mut a_form = Vec::new();
    for (x, &j) in js.iter().enumerate() {
        let blk = &side_a.blocks()[j];
        let y = overlaps[x].iter().position(|&o| o).expect("checked above");
        let kb = &side_b.blocks()[ks[y]];
        let env = reduce(kb.right_state.matrix(), &[kb.right_dim, d_e], &[1])?;
        let r_ar = reduce(blk.right_state.matrix(), &[blk.right_dim, d_e], &[0])?;
        // left_state lives on (B, a^L); reorder ρ_{B a^L} ⊗ ρ_{a^R} to (a^L, a^R, B).
        let m = blk.left_state.matrix().kronecker(&r_ar);
        let l = SpaceLayout::new([("b", d_b), ("l", blk.left_dim), ("r", blk.right_dim)])?;
        let (m, _) = crate::linalg::permute_subsystems(&m, &l, &["l", "r", "b"])?;
        let sys = SpaceLayout::new([("a", blk.left_dim * blk.right_dim), ("b", d_b)])?;
        a_form.push(TwoSidedBlock {
            weight: pj[x],
            a_iso: side_a.block_isometry(j),
            b_iso: identity(d_b),
            system_state: DensityMatrix::from_computed(m, sys)?,
            env_state: DensityMatrix::from_computed(env, SpaceLayout::new([("e", d_e)])?)?,
        });
    }
    let mut b_form = Vec::new();
    for (y, &k) in ks.iter().enumerate() {
        let blk = &side_b.blocks()[k];
        let x = (0..js.len()).find(|&x| overlaps[x][y]);
        let Some(x) = x else {
            return Err(fail(format!("B-block {k} overlaps no A-block")));
        };
        let ja = &side_a.blocks()[js[x]];
        let env = reduce(ja.right_state.matrix(), &[ja.right_dim, d_e], &[1])?;
        let r_br = reduce(blk.right_state.matrix(), &[blk.right_dim, d_e], &[0])?;
        let m = blk.left_state.matrix().kronecker(&r_br);
        let sys = SpaceLayout::new([("a", d_a), ("b", blk.left_dim * blk.right_dim)])?;
        b_form.push(TwoSidedBlock {
            weight: qk[y],
            a_iso: identity(d_a),
            b_iso: side_b.block_isometry(k),
            system_state: DensityMatrix::from_computed(m, sys)?,
            env_state: DensityMatrix::from_computed(env, SpaceLayout::new([("e", d_e)])?)?,
        });
    }

    let factorized = overlaps.iter().any(|row| row.iter().all(|&o| o));
    let rho_ab = reduce(sigma.matrix(), &[d_a, d_b, d_e], &[0, 1])?;
    let rho_e = reduce(sigma.matrix(), &[d_a, d_b, d_e], &[2])?;
    let factorization_distance = distance(sigma.matrix(), &rho_ab.kronecker(&rho_e))?;

    let decomp = TwoSidedDecomposition {
        layout,
        a_form,
        b_form,
        a_embedding: side_a.embedding().clone(),
        b_embedding: side_b.embedding().clone(),
        factorized,
        factorization_distance,
        factorization_defect: defect,
    };
    let da = decomp.assemble_a_form()?.trace_distance(&sigma)?;
    let db = decomp.assemble_b_form()?.trace_distance(&sigma)?;
    if da.max(db) > tol {
        return Err(fail(format!("reassembly distances {da:e} and {db:e} exceed {tol:e}")));
    }
    Ok(decomp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;

    fn layout(spec: &[(&str, usize)]) -> SpaceLayout {
        SpaceLayout::new(spec.iter().copied()).unwrap()
    }

    #[test]
    fn product_with_environment_is_factorized() {
        let mut rng = rng_from_seed(51);
        let rab = random_density(&layout(&[("A", 2), ("B", 2)]), 4, &mut rng).unwrap();
        let re = random_density(&layout(&[("E", 2)]), 2, &mut rng).unwrap();
        let rho = rab.tensor(&re).unwrap();
        let d = check_two_sided(&rho, "A", "B", "E", 1e-8).unwrap();
        assert_eq!(d.a_form.len(), 1);
        assert!(d.factorized);
        assert!(d.factorization_distance < 1e-10);
    }

    #[test]
    fn two_blocks_with_distinct_environments() {
        let mut rng = rng_from_seed(52);
        let l = layout(&[("A", 3), ("B", 3), ("E", 2)]);
        let (rho, _) = random_two_sided(&l, &[(1, 2), (2, 1)], false, &mut rng).unwrap();
        let d = check_two_sided(&rho, "A", "B", "E", 1e-8).unwrap();
        assert!(!d.factorized);
        assert!(d.factorization_distance > 1e-3);
        assert!(d.assemble_a_form().unwrap().trace_distance(&rho).unwrap() < 1e-8);
        assert!(d.assemble_b_form().unwrap().trace_distance(&rho).unwrap() < 1e-8);
    }

    #[test]
    fn one_sided_state_is_rejected() {
        // B-side Markov (ρ_A ⊗ Φ⁺_BE) but A carries nothing while B is entangled with E.
        let mut psi = CMatrix::zeros(4, 1);
        psi[(0, 0)] = Complex64::new(1.0, 0.0);
        psi[(3, 0)] = Complex64::new(1.0, 0.0);
        let phi = DensityMatrix::pure(&psi, layout(&[("B", 2), ("E", 2)])).unwrap();
        let mut rng = rng_from_seed(53);
        let ra = random_density(&layout(&[("A", 2)]), 2, &mut rng).unwrap();
        let rho = ra.tensor(&phi).unwrap();
        assert!(is_markov(&rho, &["A"], &["B"], &["E"], CMI_TOL).unwrap().markov);
        assert!(is_markov(&rho, &["B"], &["A"], &["E"], CMI_TOL).unwrap().cmi > 1e-3);
        assert!(matches!(
            check_two_sided(&rho, "A", "B", "E", 1e-8),
            Err(Error::NotTwoSidedMarkov(_))
        ));
    }
}
