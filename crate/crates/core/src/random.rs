//! Seeded random states, unitaries and channels.
//!
//! Every generator takes the RNG by `&mut`; callers own the stream. The
//! crate-wide generator is [`SeededRng`] (ChaCha20 seeded from a `u64`), so a
//! given seed reproduces bit-identical outputs on every platform.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::linalg::{trace, CMatrix, SpaceLayout};
use crate::states::DensityMatrix;

pub type SeededRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives an independent per-trial seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Ginibre-induced state `G G† / Tr(G G†)` with `G` of shape dim × rank.
pub fn random_density<R: Rng + ?Sized>(
    layout: &SpaceLayout,
    rank: usize,
    rng: &mut R,
) -> Result<DensityMatrix> {
    let d = layout.total_dim();
    if rank == 0 || rank > d {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} is not in 1..={d}"
        )));
    }
    let g = ginibre(d, rank, rng);
    let m = &g * g.adjoint();
    let tr = trace(&m);
    DensityMatrix::from_computed(m / tr, layout.clone())
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of R's
/// diagonal moved into Q.
pub fn random_haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<CMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("unitary dimension must be positive".into()));
    }
    let qr = ginibre(d, d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// Haar-random isometry from dimension `d_in` into `d_out ≥ d_in`.
pub fn random_isometry<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Result<CMatrix> {
    if d_in == 0 || d_out < d_in {
        return Err(Error::InvalidArgument(format!(
            "no isometry from dimension {d_in} into {d_out}"
        )));
    }
    let u = random_haar_unitary(d_out, rng)?;
    Ok(u.columns(0, d_in).into_owned())
}

/// Random CPTP map with `kraus_count` Kraus operators, obtained by slicing a
/// Haar isometry `H_in → H_anc ⊗ H_out` along the ancilla basis.
pub fn random_cptp<R: Rng + ?Sized>(
    in_layout: &SpaceLayout,
    out_layout: &SpaceLayout,
    kraus_count: usize,
    rng: &mut R,
) -> Result<KrausChannel> {
    let d_in = in_layout.total_dim();
    let d_out = out_layout.total_dim();
    if kraus_count == 0 {
        return Err(Error::InvalidArgument("kraus_count must be at least 1".into()));
    }
    if d_out * kraus_count < d_in {
        return Err(Error::InvalidArgument(format!(
            "{kraus_count} Kraus operators of shape {d_out}x{d_in} cannot be trace preserving"
        )));
    }
    let v = random_isometry(d_in, d_out * kraus_count, rng)?;
    let kraus = (0..kraus_count)
        .map(|k| v.rows(k * d_out, d_out).into_owned())
        .collect();
    KrausChannel::new(kraus, in_layout.clone(), out_layout.clone())
}

pub fn random_unitary_channel<R: Rng + ?Sized>(
    layout: &SpaceLayout,
    rng: &mut R,
) -> Result<KrausChannel> {
    let u = random_haar_unitary(layout.total_dim(), rng)?;
    KrausChannel::unitary(u, layout.clone())
}

/// Random probability vector of length `n` (flat Dirichlet).
pub fn random_probabilities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}
