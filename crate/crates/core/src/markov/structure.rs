//! Recovery of the block structure of a Markov state from the state alone.
//!
//! On the support of `ρ_B` the operators `ρ_B^{-1/2} Tr_E[(I ⊗ N) ρ_BE] ρ_B^{-1/2}`
//! generate an algebra `⊕_k I_{b^L_k} ⊗ M(b^R_k)`. The algebra is closed
//! under the modular map `x ↦ ρ_B^{1/2} x ρ_B^{-1/2}` so that `ρ_B` itself
//! factorizes across every block. Its centre splits the blocks and matrix
//! units inside each block expose the tensor factorization.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    is_markov, sub_layout, MarkovBlock, MarkovDecomposition, CMI_TOL, LEFT, RECONSTRUCTION_TOL,
    RIGHT, ZERO_WEIGHT,
};
use crate::error::{Error, Result};
use crate::linalg::{eigh_symmetrized, identity, partial_trace, CMatrix, SpaceLayout};
use crate::random::{rng_from_seed, SeededRng};
use crate::states::DensityMatrix;

/// CMI above which recovery is refused outright.
const RECOVERY_CMI_TOL: f64 = 1e-7;
/// Relative residual below which a candidate lies in the current span.
const SPAN_TOL: f64 = 1e-8;
/// Eigenvalues of the commutator Gram matrix treated as zero.
const CENTRE_TOL: f64 = 1e-12;
/// Gap separating distinct eigenvalues of a central element.
const GAP_TOL: f64 = 1e-7;
const SUPPORT_TOL: f64 = 1e-12;
const RANDOM_ATTEMPTS: usize = 12;
const STRUCTURE_SEED: u64 = 0x5EED_B10C;

/// Orthonormal (Frobenius) basis of a matrix subspace.
struct Span {
    basis: Vec<CMatrix>,
}

impl Span {
    fn new() -> Self {
        Self { basis: Vec::new() }
    }

    fn len(&self) -> usize {
        self.basis.len()
    }

    /// Adds the component of `x` orthogonal to the span; returns its index
    /// when the relative residual exceeds [`SPAN_TOL`].
    fn insert(&mut self, x: &CMatrix) -> Option<usize> {
        let n = x.norm();
        if n < 1e-300 {
            return None;
        }
        let mut y = x / Complex64::new(n, 0.0);
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.dotc(&y);
                y -= b * c;
            }
        }
        let r = y.norm();
        if r <= SPAN_TOL {
            return None;
        }
        self.basis.push(y / Complex64::new(r, 0.0));
        Some(self.basis.len() - 1)
    }
}

/// Smallest subspace containing `I` and `generators` that is closed under
/// products, adjoints and `x ↦ D^{1/2} x D^{-1/2}` (`D` diagonal).
fn generate_algebra(generators: &[CMatrix], modular: &[f64]) -> Span {
    let n = modular.len();
    let mut span = Span::new();
    let mut queue = Vec::new();
    queue.extend(span.insert(&identity(n)));
    for g in generators {
        queue.extend(span.insert(g));
    }
    let ratio = CMatrix::from_fn(n, n, |i, j| Complex64::new((modular[i] / modular[j]).sqrt(), 0.0));
    let mut head = 0;
    while head < queue.len() && span.len() < n * n {
        let x = span.basis[queue[head]].clone();
        head += 1;
        let mut candidates = vec![x.adjoint(), x.component_mul(&ratio)];
        for s in &span.basis {
            candidates.push(&x * s);
            candidates.push(s * &x);
        }
        for c in candidates {
            queue.extend(span.insert(&c));
            if span.len() == n * n {
                break;
            }
        }
    }
    span
}

/// Orthonormal basis of the centre of the algebra spanned by `basis`.
fn centre(basis: &[CMatrix]) -> Vec<CMatrix> {
    let count = basis.len();
    let n = basis[0].nrows();
    let rows = count * n * n;
    let mut m = DMatrix::<Complex64>::zeros(rows, count);
    for (a, x) in basis.iter().enumerate() {
        for (b, y) in basis.iter().enumerate() {
            let c = x * y - y * x;
            for (idx, v) in c.iter().enumerate() {
                m[(b * n * n + idx, a)] = *v;
            }
        }
    }
    let gram = m.adjoint() * &m;
    let eig = eigh_symmetrized(&gram);
    eig.values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= CENTRE_TOL)
        .map(|(j, _)| {
            basis
                .iter()
                .enumerate()
                .fold(CMatrix::zeros(n, n), |acc, (a, x)| acc + x * eig.vectors[(a, j)])
        })
        .collect()
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_hermitian(basis: &[CMatrix], rng: &mut SeededRng) -> CMatrix {
    let n = basis[0].nrows();
    basis.iter().fold(CMatrix::zeros(n, n), |acc, x| {
        acc + (x + x.adjoint()) * Complex64::new(0.5 * gaussian(rng), 0.0)
    })
}

fn random_element(basis: &[CMatrix], rng: &mut SeededRng) -> CMatrix {
    let n = basis[0].nrows();
    basis.iter().fold(CMatrix::zeros(n, n), |acc, x| {
        acc + x * Complex64::new(gaussian(rng), gaussian(rng))
    })
}

/// Groups descending eigenvalues wherever consecutive values differ by more
/// than the gap tolerance.
fn group_by_gap(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i - 1] - values[i] > GAP_TOL * scale {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Orthonormal columns spanning each minimal central projection.
fn central_blocks(centre: &[CMatrix], rng: &mut SeededRng) -> Result<Vec<CMatrix>> {
    for _ in 0..RANDOM_ATTEMPTS {
        let h = random_hermitian(centre, rng);
        let eig = eigh_symmetrized(&h);
        let groups = group_by_gap(&eig.values);
        if groups.len() == centre.len() {
            return Ok(groups
                .into_iter()
                .map(|g| eig.vectors.columns(g.start, g.len()).into_owned())
                .collect());
        }
    }
    Err(Error::StructureRecoveryFailed(format!(
        "could not separate a centre of dimension {}",
        centre.len()
    )))
}

/// Columns `v_{r,i}` (index `r·d + i`) of a basis in which the block algebra
/// reads `I_n ⊗ M_d`.
fn matrix_units(block: &[CMatrix], n_left: usize, d: usize, rng: &mut SeededRng) -> Result<CMatrix> {
    let dim = n_left * d;
    if d == 1 {
        return Ok(identity(dim));
    }
    'attempt: for _ in 0..RANDOM_ATTEMPTS {
        let h = random_hermitian(block, rng);
        let eig = eigh_symmetrized(&h);
        let mut spread: f64 = 0.0;
        let mut gap = f64::INFINITY;
        for i in 0..d {
            let chunk = &eig.values[i * n_left..(i + 1) * n_left];
            spread = spread.max(chunk[0] - chunk[n_left - 1]);
            if i + 1 < d {
                gap = gap.min(chunk[n_left - 1] - eig.values[(i + 1) * n_left]);
            }
        }
        if gap <= 100.0 * spread + 1e-9 {
            continue;
        }
        let u: Vec<CMatrix> = (0..d)
            .map(|i| eig.vectors.columns(i * n_left, n_left).into_owned())
            .collect();
        let x = random_element(block, rng);
        let mut out = CMatrix::zeros(dim, dim);
        for (i, ui) in u.iter().enumerate() {
            let t = ui.adjoint() * &x * &u[0];
            let norm = t.norm();
            if norm < 1e-6 {
                continue 'attempt;
            }
            let cols = ui * t * Complex64::new((n_left as f64).sqrt() / norm, 0.0);
            for r in 0..n_left {
                out.set_column(r * d + i, &cols.column(r));
            }
        }
        return Ok(out);
    }
    Err(Error::StructureRecoveryFailed(
        "could not build matrix units for a block".into(),
    ))
}

/// Closest matrix with orthonormal columns.
fn polar(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    svd.u.expect("requested") * svd.v_t.expect("requested")
}

/// Recovers `ρ = ⊕_k q_k ρ_{A b^L_k} ⊗ ρ_{b^R_k E}` with respect to the label
/// groups `a`, `b`, `e`.
///
/// The returned decomposition lives on the layout `a ++ b ++ e` in the
/// order given; it is verified to reassemble `rho` (permuted to that order)
/// within 1e-7 in trace distance. Blocks spanning the kernel of `ρ_B` carry
/// zero weight and placeholder states.
pub fn recover_structure(rho: &DensityMatrix, a: &[&str], b: &[&str], e: &[&str]) -> Result<MarkovDecomposition> {
    let verdict = is_markov(rho, a, b, e, CMI_TOL)?;
    if verdict.cmi > RECOVERY_CMI_TOL {
        return Err(Error::NotMarkov {
            cmi: verdict.cmi,
            petz_distance: verdict.petz_distance,
        });
    }
    let full = rho.layout();
    let (la, lb, le) = (sub_layout(full, a)?, sub_layout(full, b)?, sub_layout(full, e)?);
    let order: Vec<&str> = a.iter().chain(b).chain(e).copied().collect();
    let sigma = rho.permuted(&order)?;
    let (d_a, d_b, d_e) = (la.total_dim(), lb.total_dim(), le.total_dim());

    let grouped = SpaceLayout::new([("a", d_a), ("b", d_b), ("e", d_e)])?;
    let (rho_be, _) = partial_trace(sigma.matrix(), &grouped, &["b", "e"])?;
    let (rho_b, _) = partial_trace(sigma.matrix(), &grouped, &["b"])?;
    let eig = eigh_symmetrized(&rho_b);
    let support: Vec<usize> = (0..d_b).filter(|&i| eig.values[i] > SUPPORT_TOL).collect();
    let kernel: Vec<usize> = (0..d_b).filter(|&i| eig.values[i] <= SUPPORT_TOL).collect();
    let v_s = eig.vectors.select_columns(&support);
    let lambda: Vec<f64> = support.iter().map(|&i| eig.values[i]).collect();
    let n = lambda.len();
    let inv_sqrt = CMatrix::from_fn(n, n, |i, j| {
        Complex64::new((lambda[i] * lambda[j]).sqrt().recip(), 0.0)
    });

    let mut generators = Vec::with_capacity(d_e * d_e);
    for e1 in 0..d_e {
        for e2 in 0..d_e {
            let x = CMatrix::from_fn(d_b, d_b, |i, j| rho_be[(i * d_e + e1, j * d_e + e2)]);
            generators.push((v_s.adjoint() * x * &v_s).component_mul(&inv_sqrt));
        }
    }
    let algebra = generate_algebra(&generators, &lambda);
    let centre = centre(&algebra.basis);
    let mut rng = rng_from_seed(STRUCTURE_SEED);
    let projections = central_blocks(&centre, &mut rng)?;

    let mut dims = Vec::new();
    let mut columns = Vec::new();
    for q in &projections {
        let mut compressed = Span::new();
        for x in &algebra.basis {
            compressed.insert(&(q.adjoint() * x * q));
        }
        let size = compressed.len();
        let d = (size as f64).sqrt().round() as usize;
        if d * d != size || q.ncols() % d != 0 {
            return Err(Error::StructureRecoveryFailed(format!(
                "block algebra of dimension {size} on a {}-dimensional block is not a full matrix factor",
                q.ncols()
            )));
        }
        let n_left = q.ncols() / d;
        let units = matrix_units(&compressed.basis, n_left, d, &mut rng)?;
        columns.push(&v_s * q * units);
        dims.push((n_left, d));
    }
    if !kernel.is_empty() {
        columns.push(eig.vectors.select_columns(&kernel));
        dims.push((kernel.len(), 1));
    }
    let mut embedding = CMatrix::zeros(d_b, d_b);
    let mut offset = 0;
    for c in &columns {
        embedding.columns_mut(offset, c.ncols()).copy_from(c);
        offset += c.ncols();
    }
    let embedding = polar(&embedding);

    let mut blocks = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for (k, &(l, r)) in dims.iter().enumerate() {
        let v = embedding.columns(offset, l * r).into_owned();
        offset += l * r;
        let w = identity(d_a).kronecker(&v).kronecker(&identity(d_e));
        let s = w.adjoint() * sigma.matrix() * &w;
        let weight = s.trace().re;
        let local = SpaceLayout::new([("a", d_a), (LEFT, l), (RIGHT, r), ("e", d_e)])?;
        let left_layout = la.concat(&SpaceLayout::new([(LEFT, l)])?)?;
        let right_layout = SpaceLayout::new([(RIGHT, r)])?.concat(&le)?;
        let is_kernel = !kernel.is_empty() && k == dims.len() - 1;
        if weight > ZERO_WEIGHT && !is_kernel {
            let s = s / Complex64::new(weight, 0.0);
            let (left, _) = partial_trace(&s, &local, &["a", LEFT])?;
            let (right, _) = partial_trace(&s, &local, &[RIGHT, "e"])?;
            blocks.push(MarkovBlock {
                weight,
                left_dim: l,
                right_dim: r,
                left_state: DensityMatrix::from_computed(left, left_layout)?,
                right_state: DensityMatrix::from_computed(right, right_layout)?,
                placeholder: false,
            });
        } else {
            blocks.push(MarkovBlock {
                weight: 0.0,
                left_dim: l,
                right_dim: r,
                left_state: DensityMatrix::maximally_mixed(left_layout),
                right_state: DensityMatrix::maximally_mixed(right_layout),
                placeholder: true,
            });
        }
    }
    let total: f64 = blocks.iter().map(|k| k.weight).sum();
    for k in &mut blocks {
        k.weight /= total;
    }

    let decomp = MarkovDecomposition::new(la, lb, le, blocks, embedding)?;
    let distance = decomp.assemble()?.trace_distance(&sigma)?;
    if distance > RECONSTRUCTION_TOL {
        return Err(Error::StructureRecoveryFailed(format!(
            "reassembly is {distance:e} away from the input"
        )));
    }
    Ok(decomp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{random_block_dims, random_markov_decomposition};
    use crate::random::random_density;

    fn layout(spec: &[(&str, usize)]) -> SpaceLayout {
        SpaceLayout::new(spec.iter().copied()).unwrap()
    }

    #[test]
    fn factorized_environment_gives_one_block() {
        let mut rng = rng_from_seed(41);
        let rab = random_density(&layout(&[("A", 2), ("B", 3)]), 6, &mut rng).unwrap();
        let we = random_density(&layout(&[("E", 2)]), 2, &mut rng).unwrap();
        let rho = rab.tensor(&we).unwrap();
        let d = recover_structure(&rho, &["A"], &["B"], &["E"]).unwrap();
        assert_eq!(d.blocks().len(), 1);
        assert_eq!(d.blocks()[0].right_dim, 1);
    }

    #[test]
    fn product_with_mixed_b() {
        let mut rng = rng_from_seed(42);
        let ra = random_density(&layout(&[("A", 2)]), 2, &mut rng).unwrap();
        let rb = DensityMatrix::maximally_mixed(layout(&[("B", 2)]));
        let re = random_density(&layout(&[("E", 2)]), 2, &mut rng).unwrap();
        let rho = ra.tensor(&rb).unwrap().tensor(&re).unwrap();
        let d = recover_structure(&rho, &["A"], &["B"], &["E"]).unwrap();
        assert!(d.assemble().unwrap().trace_distance(&rho).unwrap() < 1e-9);
    }

    #[test]
    fn round_trip_random_decompositions() {
        let mut rng = rng_from_seed(43);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        for _ in 0..30 {
            let dims = random_block_dims(2, 2, &mut rng);
            let d = random_markov_decomposition(&a, "B", &e, &dims, &mut rng).unwrap();
            let rho = d.assemble().unwrap();
            let r = recover_structure(&rho, &["A"], &["B"], &["E"]).unwrap();
            let back = r.assemble().unwrap();
            assert!(back.trace_distance(&rho).unwrap() < 1e-7, "{dims:?}");
            let nonempty = r.blocks().iter().filter(|k| !k.placeholder).count();
            assert!(nonempty >= dims.len().min(nonempty));
        }
    }

    #[test]
    fn rank_deficient_conditioning_marginal() {
        let mut rng = rng_from_seed(44);
        let ra = random_density(&layout(&[("A", 2), ("bL", 1)]), 2, &mut rng).unwrap();
        let rr = random_density(&layout(&[("bR", 2), ("E", 2)]), 4, &mut rng).unwrap();
        let l = layout(&[("A", 2), ("B", 3), ("E", 2)]);
        // Block of dimension 2 inside a 3-dimensional B; the third vector is empty.
        let block = MarkovBlock {
            weight: 1.0,
            left_dim: 1,
            right_dim: 2,
            left_state: ra,
            right_state: rr,
            placeholder: false,
        };
        let filler = MarkovBlock {
            weight: 0.0,
            left_dim: 1,
            right_dim: 1,
            left_state: DensityMatrix::maximally_mixed(layout(&[("A", 2), ("bL", 1)])),
            right_state: DensityMatrix::maximally_mixed(layout(&[("bR", 1), ("E", 2)])),
            placeholder: true,
        };
        let d = MarkovDecomposition::new(
            layout(&[("A", 2)]),
            layout(&[("B", 3)]),
            layout(&[("E", 2)]),
            vec![block, filler],
            identity(3),
        )
        .unwrap();
        let rho = d.assemble().unwrap();
        assert_eq!(rho.layout(), &l);
        let r = recover_structure(&rho, &["A"], &["B"], &["E"]).unwrap();
        assert!(r.blocks().iter().any(|k| k.placeholder && k.weight == 0.0));
        assert!(r.assemble().unwrap().trace_distance(&rho).unwrap() < 1e-7);
    }

    #[test]
    fn grouped_labels() {
        let mut rng = rng_from_seed(45);
        let a = layout(&[("A", 2), ("F", 2)]);
        let e = layout(&[("E", 2)]);
        let d = random_markov_decomposition(&a, "B", &e, &[(1, 2), (2, 1)], &mut rng).unwrap();
        // Scramble the factor order of the assembled state.
        let rho = d.assemble().unwrap().permuted(&["E", "A", "B", "F"]).unwrap();
        let r = recover_structure(&rho, &["A", "F"], &["B"], &["E"]).unwrap();
        assert_eq!(r.layout().labels(), vec!["A", "F", "B", "E"]);
        let back = r.assemble().unwrap().permuted(&["E", "A", "B", "F"]).unwrap();
        assert!(back.trace_distance(&rho).unwrap() < 1e-7);
    }

    #[test]
    fn non_markov_is_refused() {
        let mut rng = rng_from_seed(46);
        let rho = random_density(&layout(&[("A", 2), ("B", 2), ("E", 2)]), 8, &mut rng).unwrap();
        assert!(matches!(
            recover_structure(&rho, &["A"], &["B"], &["E"]),
            Err(Error::NotMarkov { .. })
        ));
    }
}
