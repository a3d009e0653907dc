//! Argument-principle root counting for `det Δ(λ)` on rectangles and circles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

// Kronrod 15-point nodes on [0, 1] half of [-1, 1] (symmetric), with the
// embedded Gauss 7-point weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Failure while integrating the logarithmic derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) enum ContourFailure {
    /// Integrand undefined on the path.
    Singular,
    /// Adaptive refinement exhausted without meeting the tolerance.
    Unresolved,
}

fn gk15(
    g: &(dyn Fn(Complex64) -> Option<Complex64> + Sync),
    a: Complex64,
    b: Complex64,
) -> Option<(Complex64, f64)> {
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let fc = g(mid)?;
    let mut k = fc * WGK[7];
    let mut gs = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = g(mid - dx)?;
        let f2 = g(mid + dx)?;
        k += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gs += (f1 + f2) * WG[j / 2];
        }
    }
    let k = k * half;
    let gs = gs * half;
    Some((k, (k - gs).norm()))
}

fn adaptive_segment(
    g: &(dyn Fn(Complex64) -> Option<Complex64> + Sync),
    a: Complex64,
    b: Complex64,
    tol: f64,
    max_depth: usize,
) -> Result<Complex64, ContourFailure> {
    let mut stack = vec![(a, b, tol, 0usize)];
    let mut total = Complex64::new(0.0, 0.0);
    while let Some((a, b, tol, depth)) = stack.pop() {
        let (v, err) = gk15(g, a, b).ok_or(ContourFailure::Singular)?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(ContourFailure::Singular);
        }
        if err <= tol || err <= 1e-13 * v.norm() {
            total += v;
        } else if depth >= max_depth {
            return Err(ContourFailure::Unresolved);
        } else {
            let m = (a + b) * 0.5;
            stack.push((m, b, 0.5 * tol, depth + 1));
            stack.push((a, m, 0.5 * tol, depth + 1));
        }
    }
    Ok(total)
}

/// `(1/2πi) ∮ g` over a closed polygon, where `g` is the logarithmic
/// derivative of the function whose zeros are counted. `panel` caps the
/// initial panel length; `tol` is the absolute tolerance on the count.
pub(crate) fn winding_polygon(
    g: &(dyn Fn(Complex64) -> Option<Complex64> + Sync),
    vertices: &[Complex64],
    panel: f64,
    tol: f64,
) -> Result<f64, ContourFailure> {
    let mut panels = Vec::new();
    let perimeter: f64 = (0..vertices.len())
        .map(|i| (vertices[(i + 1) % vertices.len()] - vertices[i]).norm())
        .sum();
    for i in 0..vertices.len() {
        let a = vertices[i];
        let b = vertices[(i + 1) % vertices.len()];
        let k = ((b - a).norm() / panel).ceil().max(1.0) as usize;
        for j in 0..k {
            let t0 = j as f64 / k as f64;
            let t1 = (j + 1) as f64 / k as f64;
            panels.push((a + (b - a) * t0, a + (b - a) * t1));
        }
    }
    let abs_tol = tol * 2.0 * PI;
    let parts: Vec<Result<Complex64, ContourFailure>> = panels
        .par_iter()
        .map(|&(a, b)| adaptive_segment(g, a, b, abs_tol * (b - a).norm() / perimeter, 40))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for p in parts {
        total += p?;
    }
    let w = total / Complex64::new(0.0, 2.0 * PI);
    Ok(w.re)
}

/// Zero count inside the circle `|λ − center| = radius` by the trapezoid rule.
pub(crate) fn winding_circle(
    g: &(dyn Fn(Complex64) -> Option<Complex64> + Sync),
    center: Complex64,
    radius: f64,
    points: usize,
) -> Option<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let e = Complex64::from_polar(radius, 2.0 * PI * k as f64 / points as f64);
        acc += g(center + e)? * e;
    }
    Some(acc.re / points as f64)
}
