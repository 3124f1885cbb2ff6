//! Worked examples and randomized sweeps, each producing a [`ScenarioReport`].

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use crate::channels::{swap_unitary, KrausChannel};
use crate::error::{Error, Result};
use crate::linalg::{identity, permute_subsystems, CMatrix, SpaceLayout};
use crate::markov::{
    is_markov, markov_reduced_channel, random_block_dims, random_markov_decomposition, recover_structure,
    MarkovBlock, MarkovDecomposition, CMI_TOL,
};
use crate::random::{derive_seed, random_cptp, random_density, random_haar_unitary, random_probabilities, rng_from_seed};
use crate::states::{conditional_mutual_information, mutual_information, DensityMatrix};

/// Reduction checks must agree within this trace distance.
pub const REDUCTION_TOL: f64 = 1e-8;
/// A mutual-information increase above this certifies a witness.
pub const WITNESS_TOL: f64 = 1e-6;
/// Allowed mutual-information increase on Markov states.
pub const MONOTONICITY_TOL: f64 = 1e-9;
/// The swap must reproduce the initial `AE` state within this trace distance.
pub const SWAP_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, Value>,
    pub quantities: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, bool>,
    /// Verdicts whose failure means the implementation, not the input, is wrong.
    #[serde(skip)]
    pub invariants: BTreeSet<String>,
}

impl ScenarioReport {
    pub fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            seed,
            ..Self::default()
        }
    }

    pub fn input(&mut self, key: &str, value: impl Into<Value>) {
        self.inputs.insert(key.to_string(), value.into());
    }

    pub fn quantity(&mut self, key: &str, value: f64) {
        self.quantities.insert(key.to_string(), value);
    }

    pub fn verdict(&mut self, key: &str, value: bool) {
        self.verdicts.insert(key.to_string(), value);
    }

    /// Records a verdict that must hold whatever the input.
    pub fn invariant(&mut self, key: &str, value: bool) {
        self.verdict(key, value);
        self.invariants.insert(key.to_string());
    }

    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|k| self.verdicts.get(k) == Some(&true))
    }

    pub fn violated_invariants(&self) -> Vec<&str> {
        self.invariants
            .iter()
            .filter(|k| self.verdicts.get(*k) != Some(&true))
            .map(|k| k.as_str())
            .collect()
    }
}

fn layout_value(l: &SpaceLayout) -> Value {
    Value::String(l.to_string())
}

fn labels3(rho: &DensityMatrix) -> Result<[String; 3]> {
    let l = rho.layout().labels();
    if l.len() != 3 {
        return Err(Error::InvalidPartition(format!(
            "expected three factors (A, B, E), got {}",
            rho.layout()
        )));
    }
    Ok([l[0].to_string(), l[1].to_string(), l[2].to_string()])
}

/// Random channel on `(b, e)`. With `grow` the output is `(b', F)` with
/// `dim b' = 2 dim b`; otherwise it keeps the input layout. Returns the
/// channel and its environment output labels.
pub fn random_localized_channel<R: Rng + ?Sized>(
    be: &SpaceLayout,
    grow: bool,
    rng: &mut R,
) -> Result<(KrausChannel, Vec<String>)> {
    let [b, e] = [&be.factors()[0], &be.factors()[1]];
    let kraus = rng.random_range(1..=3);
    if grow {
        let out = SpaceLayout::new([(format!("{}'", b.label), 2 * b.dim), ("F".to_string(), e.dim)])?;
        Ok((random_cptp(be, &out, kraus, rng)?, vec!["F".into()]))
    } else {
        Ok((random_cptp(be, be, kraus, rng)?, vec![e.label.clone()]))
    }
}

/// Fewest Kraus operators that can be trace preserving from `input` to `output`.
fn min_kraus(input: &SpaceLayout, output: &SpaceLayout) -> usize {
    input.total_dim().div_ceil(output.total_dim())
}

/// `I(A:B')` after `id_A ⊗ F_BE` minus `I(A:B)` before, for `rho` on `(A, B, E)`.
pub fn mi_change(rho: &DensityMatrix, channel: &KrausChannel, env_out: &[&str]) -> Result<f64> {
    let [a, b, _] = labels3(rho)?;
    let before = mutual_information(&rho.marginal(&[&a, &b])?, &[&a], &[&b])?;
    let out = channel.lift_localized(rho.layout())?.apply(rho)?;
    let rest: Vec<String> = out
        .layout()
        .labels()
        .into_iter()
        .filter(|l| *l != a && !env_out.contains(l))
        .map(str::to_string)
        .collect();
    let rest: Vec<&str> = rest.iter().map(String::as_str).collect();
    let mut keep = vec![a.as_str()];
    keep.extend(&rest);
    let after = mutual_information(&out.marginal(&keep)?, &[&a], &rest)?;
    Ok(after - before)
}

fn one_block(rho_ab: &DensityMatrix, omega: &DensityMatrix) -> Result<MarkovDecomposition> {
    let l = rho_ab.layout();
    if l.len() != 2 || omega.layout().len() != 1 {
        return Err(Error::InvalidPartition("expected ρ on (A, B) and ω on E".into()));
    }
    let a = l.select(&[l.labels()[0]])?;
    let b = l.select(&[l.labels()[1]])?;
    let d_b = b.total_dim();
    let block = MarkovBlock {
        weight: 1.0,
        left_dim: d_b,
        right_dim: 1,
        left_state: rho_ab.clone(),
        right_state: omega.clone(),
        placeholder: false,
    };
    MarkovDecomposition::new(a, b, omega.layout().clone(), vec![block], identity(d_b))
}

/// Factorized initial state `ρ_AB ⊗ ω_E` evolved by `ch_be` and by 20 random
/// localized channels.
pub fn example1_factorized(
    rho_ab: &DensityMatrix,
    omega_e: &DensityMatrix,
    ch_be: &KrausChannel,
    env_out: &[&str],
    seed: u64,
) -> Result<ScenarioReport> {
    let mut r = ScenarioReport::new("example1", seed);
    r.input("rhoAB", layout_value(rho_ab.layout()));
    r.input("omegaE", layout_value(omega_e.layout()));
    r.input("channel", format!("{} -> {}", ch_be.in_layout(), ch_be.out_layout()));
    let decomp = one_block(rho_ab, omega_e)?;
    let rho = decomp.assemble()?;
    let [a, b, e] = labels3(&rho)?;
    let v = is_markov(&rho, &[&a], &[&b], &[&e], CMI_TOL)?;
    r.quantity("cmi", v.cmi);
    r.quantity("petzDistance", v.petz_distance);
    r.invariant("markov", v.markov);

    let (_, check) = markov_reduced_channel(&decomp, ch_be, env_out)?;
    r.quantity("reductionCheck", check);
    r.quantity("deltaMi", mi_change(&rho, ch_be, env_out)?);

    let be = rho.layout().select(&[&b, &e])?;
    let mut rng = rng_from_seed(seed);
    let (mut worst, mut worst_dmi) = (0.0f64, f64::NEG_INFINITY);
    for t in 0..20 {
        let (ch, env) = random_localized_channel(&be, t % 4 == 3, &mut rng)?;
        let env: Vec<&str> = env.iter().map(String::as_str).collect();
        let (_, c) = markov_reduced_channel(&decomp, &ch, &env)?;
        worst = worst.max(c);
        worst_dmi = worst_dmi.max(mi_change(&rho, &ch, &env)?);
    }
    r.quantity("sweepMaxReductionCheck", worst);
    r.quantity("sweepMaxDeltaMi", worst_dmi);
    r.invariant("localizedReduction", check.max(worst) <= REDUCTION_TOL);
    r.invariant("miNonIncreasing", worst_dmi <= MONOTONICITY_TOL);
    Ok(r)
}

fn schmidt_tail(psi: &CMatrix, d_a: usize, d_b: usize) -> f64 {
    let m = CMatrix::from_fn(d_a, d_b, |i, j| psi[(i * d_b + j, 0)]);
    let s = m.singular_values();
    let top = s.iter().copied().fold(0.0, f64::max);
    1.0 - top * top
}

/// Classical-quantum construction `Σ_i p_i |ĩ_AB⟩⟨ĩ_AB| ⊗ ω_i`.
pub fn example2_cq(
    p: &[f64],
    basis_states: &[CMatrix],
    ab_layout: &SpaceLayout,
    omegas: &[DensityMatrix],
) -> Result<ScenarioReport> {
    if p.len() != basis_states.len() || p.len() != omegas.len() || p.is_empty() {
        return Err(Error::InvalidArgument("p, basis states and omegas must have equal nonzero length".into()));
    }
    if ab_layout.len() != 2 {
        return Err(Error::InvalidPartition(format!("{ab_layout} must have two factors")));
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("p must be a probability distribution".into()));
    }
    let d = ab_layout.total_dim();
    let mut gram_defect: f64 = 0.0;
    for (i, x) in basis_states.iter().enumerate() {
        if x.shape() != (d, 1) {
            return Err(Error::DimensionMismatch(format!("basis state {i} is not a vector on {ab_layout}")));
        }
        for (j, y) in basis_states.iter().enumerate() {
            let g = (x.adjoint() * y)[(0, 0)];
            let target = if i == j { 1.0 } else { 0.0 };
            gram_defect = gram_defect.max((g - Complex64::new(target, 0.0)).norm());
        }
    }
    if gram_defect > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "basis states are not orthonormal (defect {gram_defect:e})"
        )));
    }
    let e_layout = omegas[0].layout().clone();
    if omegas.iter().any(|o| o.layout() != &e_layout) || e_layout.len() != 1 {
        return Err(Error::LayoutMismatch("omegas must share a single-factor layout".into()));
    }
    let mut overlap: f64 = 0.0;
    for (i, x) in omegas.iter().enumerate() {
        for y in &omegas[i + 1..] {
            overlap = overlap.max((x.matrix() * y.matrix()).trace().norm());
        }
    }
    let layout = ab_layout.concat(&e_layout)?;
    let mut m = CMatrix::zeros(layout.total_dim(), layout.total_dim());
    for ((&w, psi), om) in p.iter().zip(basis_states).zip(omegas) {
        m += (psi * psi.adjoint()).kronecker(om.matrix()) * Complex64::new(w, 0.0);
    }
    let rho = DensityMatrix::from_computed(m, layout)?;
    let [a, b, e] = labels3(&rho)?;
    let dims = ab_layout.dims();
    let tail = p
        .iter()
        .zip(basis_states)
        .filter(|(&w, _)| w > 0.0)
        .map(|(_, psi)| schmidt_tail(psi, dims[0], dims[1]))
        .fold(0.0, f64::max);

    let mut r = ScenarioReport::new("example2", 0);
    r.input("p", p.to_vec());
    r.input("layout", layout_value(rho.layout()));
    r.quantity("gramDefect", gram_defect);
    r.quantity("maxOmegaOverlap", overlap);
    r.quantity("maxSchmidtTail", tail);
    let v = is_markov(&rho, &[&a], &[&b], &[&e], CMI_TOL)?;
    r.quantity("cmi", v.cmi);
    r.quantity("petzDistance", v.petz_distance);
    r.verdict("orthogonalSupports", overlap <= 1e-10);
    r.verdict("anyEntangled", tail > 1e-8);
    r.verdict("markov", v.markov);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example3Variant {
    /// `⊕_i p_i ρ_{A b^L_i} ⊗ ω_{b^R_i E}`.
    Eq28,
    /// `⊕_ij p_ij ρ_{a^L_i b^L_j} ⊗ ω^{(j)}_{a^R_i} ⊗ ω_{b^R_j E}`.
    Eq29Factorized,
    /// `⊕_ij p_ij ρ_{a^L_i b^L_j} ⊗ ω_{a^R_i b^R_j E}` with `ω` correlated.
    Eq29Unfactorized,
}

impl FromStr for Example3Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "eq28" => Ok(Self::Eq28),
            "eq29_factorized" => Ok(Self::Eq29Factorized),
            "eq29_unfactorized" => Ok(Self::Eq29Unfactorized),
            _ => Err(Error::InvalidArgument(format!("unknown variant `{s}`"))),
        }
    }
}

impl Example3Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eq28 => "eq28",
            Self::Eq29Factorized => "eq29_factorized",
            Self::Eq29Unfactorized => "eq29_unfactorized",
        }
    }
}

/// Block shapes for [`example3_build`]: `(dim x^L, dim x^R)` per block.
#[derive(Clone, Debug)]
pub struct Example3Shape {
    pub a_blocks: Vec<(usize, usize)>,
    pub b_blocks: Vec<(usize, usize)>,
    pub d_e: usize,
}

impl Default for Example3Shape {
    fn default() -> Self {
        Self {
            a_blocks: vec![(1, 2), (1, 1)],
            b_blocks: vec![(1, 2), (2, 1)],
            d_e: 2,
        }
    }
}

fn random_state<R: Rng + ?Sized>(spec: &[(&str, usize)], rng: &mut R) -> Result<DensityMatrix> {
    let l = SpaceLayout::new(spec.iter().copied())?;
    random_density(&l, l.total_dim(), rng)
}

fn build_eq29<R: Rng + ?Sized>(shape: &Example3Shape, factorized: bool, rng: &mut R) -> Result<DensityMatrix> {
    let cover = |b: &[(usize, usize)]| b.iter().map(|&(l, r)| l * r).sum::<usize>();
    let (d_a, d_b, d_e) = (cover(&shape.a_blocks), cover(&shape.b_blocks), shape.d_e);
    let layout = SpaceLayout::new([("A", d_a), ("B", d_b), ("E", d_e)])?;
    let ua = random_haar_unitary(d_a, rng)?;
    let ub = random_haar_unitary(d_b, rng)?;
    let n = shape.a_blocks.len() * shape.b_blocks.len();
    let weights = random_probabilities(n, rng);
    let b_env: Vec<DensityMatrix> = shape
        .b_blocks
        .iter()
        .map(|&(_, r)| random_state(&[("bR", r), ("E", d_e)], rng))
        .collect::<Result<_>>()?;
    let mut m = CMatrix::zeros(layout.total_dim(), layout.total_dim());
    let mut oa = 0;
    for &(al, ar) in &shape.a_blocks {
        let va = ua.columns(oa, al * ar).into_owned();
        oa += al * ar;
        let mut ob = 0;
        for (j, &(bl, br)) in shape.b_blocks.iter().enumerate() {
            let vb = ub.columns(ob, bl * br).into_owned();
            ob += bl * br;
            let w = weights[(oa_index(&shape.a_blocks, oa)) * shape.b_blocks.len() + j];
            let left = random_state(&[("aL", al), ("bL", bl)], rng)?;
            let omega = if factorized {
                random_state(&[("aR", ar)], rng)?.tensor(&b_env[j])?
            } else {
                random_state(&[("aR", ar), ("bR", br), ("E", d_e)], rng)?
            };
            let x = left.matrix().kronecker(omega.matrix());
            let written = SpaceLayout::new([("aL", al), ("bL", bl), ("aR", ar), ("bR", br), ("E", d_e)])?;
            let (x, _) = permute_subsystems(&x, &written, &["aL", "aR", "bL", "bR", "E"])?;
            let iso = va.kronecker(&vb).kronecker(&identity(d_e));
            m += (&iso * x * iso.adjoint()) * Complex64::new(w, 0.0);
        }
    }
    DensityMatrix::from_computed(m, layout)
}

/// Index of the A-block that ends at offset `end`.
fn oa_index(blocks: &[(usize, usize)], end: usize) -> usize {
    let mut acc = 0;
    for (i, &(l, r)) in blocks.iter().enumerate() {
        acc += l * r;
        if acc == end {
            return i;
        }
    }
    unreachable!("offset {end} is not a block boundary")
}

/// Builds a random member of one of the block-structured families and tests
/// whether it is Markov.
pub fn example3_build(variant: Example3Variant, shape: &Example3Shape, seed: u64) -> Result<ScenarioReport> {
    if shape.d_e == 0
        || shape.a_blocks.is_empty()
        || shape.b_blocks.is_empty()
        || shape.a_blocks.iter().chain(&shape.b_blocks).any(|&(l, r)| l == 0 || r == 0)
    {
        return Err(Error::InvalidArgument("block dimensions must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let rho = match variant {
        Example3Variant::Eq28 => {
            let d_a: usize = shape.a_blocks.iter().map(|&(l, r)| l * r).sum();
            let a = SpaceLayout::new([("A", d_a)])?;
            let e = SpaceLayout::new([("E", shape.d_e)])?;
            random_markov_decomposition(&a, "B", &e, &shape.b_blocks, &mut rng)?.assemble()?
        }
        Example3Variant::Eq29Factorized => build_eq29(shape, true, &mut rng)?,
        Example3Variant::Eq29Unfactorized => build_eq29(shape, false, &mut rng)?,
    };
    let expected = variant != Example3Variant::Eq29Unfactorized;
    let v = is_markov(&rho, &["A"], &["B"], &["E"], CMI_TOL)?;
    let mut r = ScenarioReport::new("example3", seed);
    r.input("variant", variant.name());
    r.input("aBlocks", format!("{:?}", shape.a_blocks));
    r.input("bBlocks", format!("{:?}", shape.b_blocks));
    r.input("dE", shape.d_e);
    r.quantity("cmi", v.cmi);
    r.quantity("petzDistance", v.petz_distance);
    r.verdict("markov", v.markov);
    r.verdict("expectedMarkov", expected);
    if expected {
        r.invariant("markovAsExpected", v.markov);
    } else {
        r.verdict("markovAsExpected", !v.markov);
    }
    Ok(r)
}

/// `ρ_B ⊗ ρ_AE` evolved by the swap of B and E.
pub fn example4_swap(rho_b: &DensityMatrix, rho_ae: &DensityMatrix) -> Result<ScenarioReport> {
    let (lb, lae) = (rho_b.layout(), rho_ae.layout());
    if lb.len() != 1 || lae.len() != 2 {
        return Err(Error::InvalidPartition("expected ρ_B on one factor and ρ_AE on two".into()));
    }
    let (a, e) = (lae.labels()[0].to_string(), lae.labels()[1].to_string());
    let b = lb.labels()[0].to_string();
    let (d_b, d_e) = (lb.total_dim(), lae.dims()[1]);
    if d_b != d_e {
        return Err(Error::DimensionMismatch(format!("swap needs dim B = dim E, got {d_b} and {d_e}")));
    }
    let rho = rho_b.tensor(rho_ae)?.permuted(&[&a, &b, &e])?;
    let be = rho.layout().select(&[&b, &e])?;
    let swap = KrausChannel::unitary(swap_unitary(d_b), be)?;
    let out = swap.lift_localized(rho.layout())?.apply(&rho)?;
    let ab_after = out.marginal(&[&a, &b])?;
    let target = rho_ae.with_layout(ab_after.layout().clone())?;
    let rho_a = rho_ae.marginal(&[&a])?;
    let omega = rho_ae.marginal(&[&e])?;
    let product = rho_a.tensor(&omega.with_layout(SpaceLayout::new([(b.as_str(), d_b)])?)?)?;

    let mi_before = mutual_information(&rho.marginal(&[&a, &b])?, &[&a], &[&b])?;
    let mi_after = mutual_information(&ab_after, &[&a], &[&b])?;
    let swap_dev = ab_after.trace_distance(&target)?;
    let product_dist = ab_after.trace_distance(&product)?;
    let v = is_markov(&rho, &[&a], &[&b], &[&e], CMI_TOL)?;

    let mut r = ScenarioReport::new("example4", 0);
    r.input("rhoB", layout_value(lb));
    r.input("rhoAE", layout_value(lae));
    r.quantity("miBefore", mi_before);
    r.quantity("miAfter", mi_after);
    r.quantity("deltaMi", mi_after - mi_before);
    r.quantity("cmi", v.cmi);
    r.quantity("petzDistance", v.petz_distance);
    r.quantity("swapDeviation", swap_dev);
    r.quantity("productDistance", product_dist);
    r.invariant("swapReproducesAE", swap_dev <= SWAP_TOL);
    r.verdict("localizedReduction", product_dist <= REDUCTION_TOL);
    r.verdict("markov", v.markov);
    Ok(r)
}

/// Searches for a localized channel that increases `I(A:B)`.
///
/// Each trial draws a random CPTP map on `B ⊗ E` from `derive_seed(seed, t)`;
/// unless `equal_dims_only`, the output system dimension ranges up to
/// `2 dim B`. The swap is tried as well when `dim B = dim E`. A positive
/// result certifies that no localized subdynamics exists; a negative one is
/// only inconclusive.
pub fn witness_search(rho: &DensityMatrix, trials: usize, seed: u64, equal_dims_only: bool) -> Result<ScenarioReport> {
    let [_, b, e] = labels3(rho)?;
    let be = rho.layout().select(&[&b, &e])?;
    let (d_b, d_e) = (be.dims()[0], be.dims()[1]);
    let mut best = (f64::NEG_INFINITY, -1.0);
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let d_out = if equal_dims_only { d_b } else { rng.random_range(1..=2 * d_b) };
        let d_f = rng.random_range(1..=d_e.max(2));
        let out = SpaceLayout::new([(format!("{b}'"), d_out), ("F".to_string(), d_f)])?;
        let kraus = rng.random_range(1..=4).max(min_kraus(&be, &out));
        let ch = random_cptp(&be, &out, kraus, &mut rng)?;
        let dmi = mi_change(rho, &ch, &["F"])?;
        if dmi > best.0 {
            best = (dmi, t as f64);
        }
    }
    let mut r = ScenarioReport::new("witness", seed);
    r.input("trials", trials);
    r.input("equalDimsOnly", equal_dims_only);
    r.input("layout", layout_value(rho.layout()));
    if d_b == d_e {
        let swap = KrausChannel::unitary(swap_unitary(d_b), be)?;
        let dmi = mi_change(rho, &swap, &[&e])?;
        r.quantity("swapDeltaMi", dmi);
        if dmi > best.0 {
            best = (dmi, -1.0);
        }
    }
    let [a, b, _] = labels3(rho)?;
    r.quantity("miBefore", mutual_information(&rho.marginal(&[&a, &b])?, &[&a], &[&b])?);
    r.quantity("maxDeltaMi", best.0);
    r.quantity("bestTrial", best.1);
    let found = best.0 > WITNESS_TOL;
    r.verdict("witnessFound", found);
    r.verdict("inconclusive", !found);
    Ok(r)
}

/// Random Markov states (`d_A = d_E = 2`, up to two blocks with factors up
/// to 2): CMI, Petz distance and structure-recovery round trip.
pub fn sweep_markov_roundtrip(trials: usize, seed: u64, d_a: usize, d_e: usize) -> Result<ScenarioReport> {
    let a = SpaceLayout::new([("A", d_a)])?;
    let e = SpaceLayout::new([("E", d_e)])?;
    let (mut cmi, mut petz, mut trip) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0usize;
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let dims = random_block_dims(2, 2, &mut rng);
        let rho = random_markov_decomposition(&a, "B", &e, &dims, &mut rng)?.assemble()?;
        let v = is_markov(&rho, &["A"], &["B"], &["E"], CMI_TOL)?;
        cmi = cmi.max(v.cmi);
        petz = petz.max(v.petz_distance);
        match recover_structure(&rho, &["A"], &["B"], &["E"]).and_then(|d| d.assemble()) {
            Ok(back) => trip = trip.max(back.trace_distance(&rho)?),
            Err(_) => failures += 1,
        }
    }
    let mut r = ScenarioReport::new("markov-roundtrip", seed);
    r.input("trials", trials);
    r.input("dA", d_a);
    r.input("dE", d_e);
    r.quantity("maxCmi", cmi);
    r.quantity("maxPetzDistance", petz);
    r.quantity("maxRoundTripDistance", trip);
    r.quantity("recoveryFailures", failures as f64);
    r.invariant("allMarkov", cmi <= CMI_TOL && petz <= CMI_TOL.sqrt());
    r.invariant("roundTrip", failures == 0 && trip <= crate::markov::RECONSTRUCTION_TOL);
    Ok(r)
}

/// Random Markov states with 20 localized channels each (every fourth one
/// doubling `dim B`): reduction check and mutual-information change.
pub fn sweep_forward_reduction(trials: usize, seed: u64, d_a: usize, d_e: usize) -> Result<ScenarioReport> {
    let a = SpaceLayout::new([("A", d_a)])?;
    let e = SpaceLayout::new([("E", d_e)])?;
    let (mut check, mut dmi) = (0.0f64, f64::NEG_INFINITY);
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let dims = random_block_dims(2, 2, &mut rng);
        let decomp = random_markov_decomposition(&a, "B", &e, &dims, &mut rng)?;
        let rho = decomp.assemble()?;
        let be = decomp.b_layout().concat(decomp.e_layout())?;
        for c in 0..20 {
            let (ch, env) = random_localized_channel(&be, c % 4 == 3, &mut rng)?;
            let env: Vec<&str> = env.iter().map(String::as_str).collect();
            check = check.max(markov_reduced_channel(&decomp, &ch, &env)?.1);
            dmi = dmi.max(mi_change(&rho, &ch, &env)?);
        }
    }
    let mut r = ScenarioReport::new("forward-reduction", seed);
    r.input("trials", trials);
    r.input("channelsPerState", 20);
    r.quantity("maxReductionCheck", check);
    r.quantity("maxDeltaMi", dmi);
    r.invariant("localizedReduction", check <= REDUCTION_TOL);
    r.invariant("miNonIncreasing", dmi <= MONOTONICITY_TOL);
    Ok(r)
}

/// Random `(ρ_AB, channel on B)` pairs: `I(A:B') − I(A:B)`.
pub fn sweep_mi_monotonicity(trials: usize, seed: u64, d_a: usize, d_b: usize) -> Result<ScenarioReport> {
    let ab = SpaceLayout::new([("A", d_a), ("B", d_b)])?;
    let b = SpaceLayout::new([("B", d_b)])?;
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let rank = rng.random_range(1..=ab.total_dim());
        let rho = random_density(&ab, rank, &mut rng)?;
        let d_out = rng.random_range(1..=2 * d_b);
        let out = SpaceLayout::new([("B'", d_out)])?;
        let kraus = rng.random_range(1..=4).max(min_kraus(&b, &out));
        let ch = random_cptp(&b, &out, kraus, &mut rng)?;
        let after = ch.lift_localized(&ab)?.apply(&rho)?;
        let dmi = mutual_information(&after, &["A"], &["B'"])? - mutual_information(&rho, &["A"], &["B"])?;
        worst = worst.max(dmi);
    }
    let mut r = ScenarioReport::new("mi-monotonicity", seed);
    r.input("trials", trials);
    r.quantity("maxDeltaMi", worst);
    r.invariant("miNonIncreasing", worst <= MONOTONICITY_TOL);
    Ok(r)
}

/// `I(A:E|B)` of a state on `(A, B, E)`.
pub fn tripartite_cmi(rho: &DensityMatrix) -> Result<f64> {
    let [a, b, e] = labels3(rho)?;
    conditional_mutual_information(rho, &[&a], &[&e], &[&b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::random::random_unitary_channel;

    fn layout(spec: &[(&str, usize)]) -> SpaceLayout {
        SpaceLayout::new(spec.iter().copied()).unwrap()
    }

    fn ket(d: usize, entries: &[(usize, f64)]) -> CMatrix {
        let mut v = CMatrix::zeros(d, 1);
        for &(i, x) in entries {
            v[(i, 0)] = Complex64::new(x, 0.0);
        }
        v
    }

    fn bell_ae() -> DensityMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::pure(&ket(4, &[(0, h), (3, h)]), layout(&[("A", 2), ("E", 2)])).unwrap()
    }

    #[test]
    fn example1_bell_with_pure_environment() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi = DensityMatrix::pure(&ket(4, &[(0, h), (3, h)]), layout(&[("A", 2), ("B", 2)])).unwrap();
        let omega = DensityMatrix::basis_state(layout(&[("E", 2)]), 0).unwrap();
        let mut rng = rng_from_seed(71);
        let u = random_unitary_channel(&layout(&[("B", 2), ("E", 2)]), &mut rng).unwrap();
        let r = example1_factorized(&phi, &omega, &u, &["E"], 71).unwrap();
        assert!(r.verdicts["markov"] && r.verdicts["localizedReduction"]);
        assert!(r.quantities["reductionCheck"] <= 1e-8);
        assert!(r.quantities["cmi"] <= 1e-9);
        assert!(r.invariants_hold());
    }

    #[test]
    fn example1_identity_on_product() {
        let mut rng = rng_from_seed(72);
        let rab = random_density(&layout(&[("A", 2)]), 2, &mut rng)
            .unwrap()
            .tensor(&random_density(&layout(&[("B", 2)]), 2, &mut rng).unwrap())
            .unwrap();
        let omega = random_density(&layout(&[("E", 2)]), 2, &mut rng).unwrap();
        let id = KrausChannel::identity(layout(&[("B", 2), ("E", 2)]));
        let r = example1_factorized(&rab, &omega, &id, &["E"], 1).unwrap();
        assert!(r.quantities["reductionCheck"] < 1e-12);
        assert!(r.quantities["deltaMi"].abs() < 1e-12);
        assert!(r.quantities["cmi"] < 1e-12);
    }

    #[test]
    fn example2_product_and_bell_bases() {
        let ab = layout(&[("A", 2), ("B", 2)]);
        let omegas: Vec<DensityMatrix> = (0..4)
            .map(|i| DensityMatrix::basis_state(layout(&[("E", 4)]), i).unwrap())
            .collect();
        let p = [0.4, 0.3, 0.2, 0.1];
        let product: Vec<CMatrix> = (0..4).map(|i| ket(4, &[(i, 1.0)])).collect();
        // E reveals both labels, so I(A:E|B) = H(A|B) of the classical distribution.
        let r = example2_cq(&p, &product, &ab, &omegas).unwrap();
        let h = |xs: &[f64]| -xs.iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>();
        let h_a_given_b = h(&p) - h(&[p[0] + p[2], p[1] + p[3]]);
        assert!((r.quantities["cmi"] - h_a_given_b).abs() < 1e-9);
        assert!(!r.verdicts["markov"] && !r.verdicts["anyEntangled"]);
        // With A fixed in every branch the state is |0⟩⟨0|_A ⊗ Σ_j p_j |j⟩⟨j|_B ⊗ ω_j.
        let fixed_a = vec![ket(4, &[(0, 1.0)]), ket(4, &[(1, 1.0)])];
        let r = example2_cq(&[0.7, 0.3], &fixed_a, &ab, &omegas[..2]).unwrap();
        assert!(r.verdicts["markov"] && r.quantities["cmi"] < 1e-12);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = vec![
            ket(4, &[(0, h), (3, h)]),
            ket(4, &[(0, h), (3, -h)]),
            ket(4, &[(1, h), (2, h)]),
            ket(4, &[(1, h), (2, -h)]),
        ];
        let r = example2_cq(&p, &bell, &ab, &omegas).unwrap();
        assert!(!r.verdicts["markov"] && r.verdicts["anyEntangled"] && r.verdicts["orthogonalSupports"]);
        assert!(r.quantities["cmi"] > 0.9);

        let r = example2_cq(&[1.0], &bell[..1], &ab, &omegas[..1]).unwrap();
        assert!(r.verdicts["markov"]);

        let bad = vec![ket(4, &[(0, 1.0)]), ket(4, &[(0, h), (1, h)])];
        assert!(example2_cq(&[0.5, 0.5], &bad, &ab, &omegas[..2]).is_err());
        let _ = ONE;
    }

    #[test]
    fn example3_variants() {
        let shape = Example3Shape::default();
        for (v, markov) in [
            (Example3Variant::Eq28, true),
            (Example3Variant::Eq29Factorized, true),
            (Example3Variant::Eq29Unfactorized, false),
        ] {
            let r = example3_build(v, &shape, 73).unwrap();
            assert_eq!(r.verdicts["markov"], markov, "{v:?}");
            if !markov {
                assert!(r.quantities["cmi"] > 1e-3);
            } else {
                assert!(r.quantities["cmi"] <= 1e-9);
            }
        }
        assert!("eq30".parse::<Example3Variant>().is_err());
        assert_eq!("eq29-factorized".parse::<Example3Variant>().unwrap(), Example3Variant::Eq29Factorized);
    }

    #[test]
    fn example4_bell_classical_and_product() {
        let rb = DensityMatrix::maximally_mixed(layout(&[("B", 2)]));
        let r = example4_swap(&rb, &bell_ae()).unwrap();
        assert!(r.quantities["miBefore"].abs() < 1e-12);
        assert!((r.quantities["miAfter"] - 2.0).abs() < 1e-9);
        assert!((r.quantities["deltaMi"] - 2.0).abs() < 1e-9);
        assert!((r.quantities["cmi"] - 2.0).abs() < 1e-9);
        assert!(r.quantities["swapDeviation"] < 1e-10);
        assert!(!r.verdicts["localizedReduction"] && !r.verdicts["markov"]);

        let cc = DensityMatrix::new(
            crate::linalg::real_diag(&[0.5, 0.0, 0.0, 0.5]),
            layout(&[("A", 2), ("E", 2)]),
        )
        .unwrap();
        let r = example4_swap(&rb, &cc).unwrap();
        assert!((r.quantities["deltaMi"] - 1.0).abs() < 1e-9);
        assert!(!r.verdicts["localizedReduction"]);

        let mut rng = rng_from_seed(74);
        let prod = random_density(&layout(&[("A", 2)]), 2, &mut rng)
            .unwrap()
            .tensor(&random_density(&layout(&[("E", 2)]), 2, &mut rng).unwrap())
            .unwrap();
        let r = example4_swap(&rb, &prod).unwrap();
        assert!(r.verdicts["localizedReduction"] && r.verdicts["markov"]);

        let r3 = DensityMatrix::maximally_mixed(layout(&[("B", 3)]));
        assert!(matches!(example4_swap(&r3, &bell_ae()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn witness_search_examples() {
        let rb = DensityMatrix::maximally_mixed(layout(&[("B", 2)]));
        let bell = rb.tensor(&bell_ae()).unwrap().permuted(&["A", "B", "E"]).unwrap();
        let r = witness_search(&bell, 10, 5, false).unwrap();
        assert!(r.verdicts["witnessFound"]);
        assert!(r.quantities["maxDeltaMi"] >= 2.0 - 1e-9);

        let mut rng = rng_from_seed(75);
        let prod = random_density(&layout(&[("A", 2)]), 2, &mut rng)
            .unwrap()
            .tensor(&random_density(&layout(&[("B", 2), ("E", 2)]), 4, &mut rng).unwrap())
            .unwrap();
        let r = witness_search(&prod, 20, 5, false).unwrap();
        assert!(!r.verdicts["witnessFound"] && r.verdicts["inconclusive"]);

        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        let m = random_markov_decomposition(&a, "B", &e, &[(1, 2)], &mut rng).unwrap();
        let r = witness_search(&m.assemble().unwrap(), 20, 6, true).unwrap();
        assert!(r.quantities["maxDeltaMi"] <= 1e-9);
    }

    #[test]
    fn reports_are_reproducible() {
        let a = example3_build(Example3Variant::Eq29Factorized, &Example3Shape::default(), 9).unwrap();
        let b = example3_build(Example3Variant::Eq29Factorized, &Example3Shape::default(), 9).unwrap();
        assert_eq!(a, b);
        let r = sweep_markov_roundtrip(5, 3, 2, 2).unwrap();
        assert!(r.invariants_hold(), "{:?}", r.violated_invariants());
    }
}
