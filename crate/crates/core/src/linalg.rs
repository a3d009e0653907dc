//! Dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &CMat) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => m[(0, 0)].norm(),
        _ => m.singular_values().max(),
    }
}

/// Largest and smallest singular values.
pub fn singular_extremes(m: &CMat) -> (f64, f64) {
    if m.nrows() == 1 && m.ncols() == 1 {
        let v = m[(0, 0)].norm();
        return (v, v);
    }
    let sv = m.singular_values();
    (sv.max(), sv.min())
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    singular_extremes(m).1
}

pub fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let scale = one_norm(m).max(f64::MIN_POSITIVE);
    let schur = Schur::try_new(m.clone(), 1e-15 * scale, 50 * n * n.max(30))
        .ok_or(Error::LinearAlgebra("Schur iteration did not converge"))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(m: &CMat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &CMat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Distance of the spectrum of `m` to the vertical line `Re z = alpha`.
pub fn spectrum_distance_to_line(m: &CMat, alpha: f64) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|z| (z.re - alpha).abs())
        .fold(f64::INFINITY, f64::min))
}

pub fn commutator_norm(a: &CMat, b: &CMat) -> f64 {
    spectral_norm(&(a * b - b * a))
}

/// Solves `a x = rhs`, failing on an exactly singular pivot.
pub fn solve(a: &CMat, rhs: &CMat) -> Option<CMat> {
    a.clone().lu().solve(rhs)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().lu().try_inverse()
}

// Padé(13,13) numerator coefficients for exp.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return a.clone();
    }
    if n == 1 {
        return CMat::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * c(2f64.powi(-s));
    let b = &PADE13;
    let eye = identity(n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]))
        + &a6 * c(b[7])
        + &a4 * c(b[5])
        + &a2 * c(b[3])
        + &eye * c(b[1]);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]))
        + &a6 * c(b[6])
        + &a4 * c(b[4])
        + &a2 * c(b[2])
        + &eye * c(b[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `A^k` norms for `k = 0..=max_power`, computed by repeated multiplication.
pub(crate) fn power_norms(a: &CMat, max_power: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_power + 1);
    out.push(1.0);
    let mut p = a.clone();
    for k in 1..=max_power {
        if k > 1 {
            p = &p * a;
        }
        let nrm = spectral_norm(&p);
        out.push(nrm);
        if nrm == 0.0 {
            out.resize(max_power + 1, 0.0);
            break;
        }
    }
    out
}
