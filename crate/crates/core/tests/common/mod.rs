#![allow(dead_code)]

use delaymargin::linalg::CMat;
use delaymargin::model::{ComplexMatrix, DelayOperatorSpec, KernelTerm, PointTerm, SystemSpec};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Point delays are multiples of this, so every battery spec can be simulated.
pub const DELAY_QUANTUM: f64 = 0.05;

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64, complex: bool) -> CMat {
    CMat::from_fn(n, n, |_, _| {
        let re = rng.gen_range(-1.0..1.0) * scale;
        let im = if complex { rng.gen_range(-1.0..1.0) * scale } else { 0.0 };
        Complex64::new(re, im)
    })
}

fn smooth_kernel(rng: &mut ChaCha8Rng, n: usize, scale: f64, complex: bool) -> KernelTerm {
    let a = -rng.gen_range(0.3..1.0f64);
    let b = a + rng.gen_range(0.1..(-a));
    let k0 = random_matrix(rng, n, scale, complex);
    let k1 = random_matrix(rng, n, scale, complex);
    KernelTerm::from_fn(a, b, 8, |s| &k0 + &k1 * Complex64::new((3.0 * s).cos(), 0.0)).expect("kernel")
}

/// `n ≤ 4`, at most three delay terms (point delays on the quantum grid or a
/// smooth kernel), entries bounded.
pub fn random_spec(rng: &mut ChaCha8Rng) -> SystemSpec {
    let n = rng.gen_range(1..=4usize);
    let complex = rng.gen_bool(0.3);
    let shift = if rng.gen_bool(0.8) { rng.gen_range(0.2..2.0) } else { -rng.gen_range(0.2..0.8) };
    let b = random_matrix(rng, n, 0.6 / (n as f64).sqrt(), complex) - CMat::identity(n, n) * Complex64::new(shift, 0.0);
    let terms = rng.gen_range(0..=3usize);
    let mut points = Vec::new();
    let mut kernels = Vec::new();
    for _ in 0..terms {
        let scale = rng.gen_range(0.05..0.6) / n as f64;
        if rng.gen_bool(0.75) {
            let h = -(rng.gen_range(1..=20usize) as f64) * DELAY_QUANTUM;
            points.push(PointTerm { h, matrix: ComplexMatrix::new(random_matrix(rng, n, scale, complex)).unwrap() });
        } else {
            kernels.push(smooth_kernel(rng, n, scale, complex));
        }
    }
    let phi = DelayOperatorSpec::new(n, 1.0, points, kernels).unwrap();
    SystemSpec::general(ComplexMatrix::new(b).unwrap(), phi).unwrap()
}

/// Point-delay-only variant of `random_spec` with stable `B`.
pub fn random_point_spec(rng: &mut ChaCha8Rng) -> SystemSpec {
    let n = rng.gen_range(1..=3usize);
    let shift = rng.gen_range(0.3..1.5);
    let b = random_matrix(rng, n, 0.5 / (n as f64).sqrt(), false) - CMat::identity(n, n) * Complex64::new(shift, 0.0);
    let terms = rng.gen_range(1..=3usize);
    let points = (0..terms)
        .map(|_| {
            let h = -(rng.gen_range(1..=20usize) as f64) * DELAY_QUANTUM;
            let scale = rng.gen_range(0.05..0.4) / n as f64;
            PointTerm { h, matrix: ComplexMatrix::new(random_matrix(rng, n, scale, false)).unwrap() }
        })
        .collect();
    let phi = DelayOperatorSpec::new(n, 1.0, points, vec![]).unwrap();
    SystemSpec::general(ComplexMatrix::new(b).unwrap(), phi).unwrap()
}

/// `(B, C)` with `B + C` stable, `n ≤ 3`.
pub fn random_stable_pair(rng: &mut ChaCha8Rng) -> (ComplexMatrix, ComplexMatrix) {
    loop {
        let n = rng.gen_range(1..=3usize);
        let complex = rng.gen_bool(0.3);
        let b = random_matrix(rng, n, 1.0, complex) - CMat::identity(n, n) * Complex64::new(rng.gen_range(-0.5..1.0), 0.0);
        let c = random_matrix(rng, n, 0.5, complex) - CMat::identity(n, n) * Complex64::new(rng.gen_range(0.2..1.5), 0.0);
        let bc = &b + &c;
        if delaymargin::linalg::spectral_abscissa(&bc).unwrap() < -0.1 {
            return (ComplexMatrix::new(b).unwrap(), ComplexMatrix::new(c).unwrap());
        }
    }
}
