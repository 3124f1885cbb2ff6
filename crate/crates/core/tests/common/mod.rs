//! Reference computations written directly against nalgebra, sharing no
//! code with the library's own partial traces, entropies or lifts.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type M = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn digits(mut x: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for i in (0..dims.len()).rev() {
        out[i] = x % dims[i];
        x /= dims[i];
    }
    out
}

fn number(ds: &[usize], dims: &[usize]) -> usize {
    ds.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Partial trace keeping the factor positions in `keep` (ascending).
pub fn ptrace(m: &M, dims: &[usize], keep: &[usize]) -> M {
    let kd: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
    let n: usize = kd.iter().product();
    let mut out = M::zeros(n, n);
    let total = m.nrows();
    for r in 0..total {
        let dr = digits(r, dims);
        for col in 0..total {
            let dc = digits(col, dims);
            let traced_equal = (0..dims.len()).filter(|i| !keep.contains(i)).all(|i| dr[i] == dc[i]);
            if traced_equal {
                let kr: Vec<usize> = keep.iter().map(|&i| dr[i]).collect();
                let kc: Vec<usize> = keep.iter().map(|&i| dc[i]).collect();
                out[(number(&kr, &kd), number(&kc, &kd))] += m[(r, col)];
            }
        }
    }
    out
}

pub fn eigenvalues(m: &M) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    h.symmetric_eigen().eigenvalues.iter().copied().collect()
}

pub fn entropy(m: &M) -> f64 {
    eigenvalues(m)
        .into_iter()
        .filter(|&x| x > 1e-15)
        .map(|x| -x * x.log2())
        .sum()
}

pub fn mi(m: &M, dims: &[usize], p1: &[usize], p2: &[usize]) -> f64 {
    let mut both: Vec<usize> = p1.iter().chain(p2).copied().collect();
    both.sort();
    entropy(&ptrace(m, dims, p1)) + entropy(&ptrace(m, dims, p2)) - entropy(&ptrace(m, dims, &both))
}

/// `I(a:e|b)` on a three-factor state `(a, b, e)`.
pub fn cmi3(m: &M, dims: &[usize]) -> f64 {
    entropy(&ptrace(m, dims, &[0, 1])) + entropy(&ptrace(m, dims, &[1, 2]))
        - entropy(&ptrace(m, dims, &[1]))
        - entropy(m)
}

pub fn trace_distance(a: &M, b: &M) -> f64 {
    0.5 * eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

pub fn apply(kraus: &[M], m: &M) -> M {
    kraus.iter().fold(M::zeros(kraus[0].nrows(), kraus[0].nrows()), |acc, k| {
        acc + k * m * k.adjoint()
    })
}

pub fn kron_id_left(d: usize, kraus: &[M]) -> Vec<M> {
    kraus.iter().map(|k| M::identity(d, d).kronecker(k)).collect()
}

pub fn kron_id_right(kraus: &[M], d: usize) -> Vec<M> {
    kraus.iter().map(|k| k.kronecker(&M::identity(d, d))).collect()
}

pub fn swap(d: usize) -> M {
    let mut s = M::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(j * d + i, i * d + j)] = c(1.0, 0.0);
        }
    }
    s
}

pub fn bell(d: usize) -> M {
    let mut psi = M::zeros(d * d, 1);
    for i in 0..d {
        psi[(i * d + i, 0)] = c(1.0 / (d as f64).sqrt(), 0.0);
    }
    &psi * psi.adjoint()
}

pub fn paulis() -> [M; 4] {
    let m = |v: [Complex64; 4]| M::from_row_slice(2, 2, &v);
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    [m([l, o, o, l]), m([o, l, l, o]), m([o, -i, i, o]), m([l, o, o, -l])]
}
