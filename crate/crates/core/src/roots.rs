//! Characteristic roots: pseudospectral discretization of the generator,
//! Newton refinement on `det Δ`, certified root sets and critical delays.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::chebyshev::{CollocationGrid, DEFAULT_DEGREE};
use crate::contour::{winding_circle, winding_polygon, ContourFailure};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, CMat};
use crate::model::{ComplexMatrix, SystemSpec};
use crate::resolvent::{char_matrix, delta_derivative, delta_matrix};

pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_STEP_TOL: f64 = 1e-13;
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let ok = [re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) && re_min < re_max && im_min < im_max;
        if !ok {
            return Err(Error::Config(format!("empty window {re_min}:{re_max}:{im_min}:{im_max}")));
        }
        Ok(Self { re_min, re_max, im_min, im_max })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    fn expanded(&self, m: f64) -> Window {
        Window { re_min: self.re_min - m, re_max: self.re_max + m, im_min: self.im_min - m, im_max: self.im_max + m }
    }

    fn vertices(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }
}

/// Collocation matrix of the generator on `n·(degree+1)` unknowns, the node
/// values on the grid with the last block at `s = 0`.
#[derive(Debug, Clone)]
pub struct DiscretizedGenerator {
    grid: CollocationGrid,
    n: usize,
    matrix: CMat,
}

impl DiscretizedGenerator {
    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.grid.degree()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.matrix)
    }

    /// `(λI − A_N) v` for a stacked node vector `v`.
    pub fn shifted_apply(&self, lambda: Complex64, v: &crate::linalg::CVec) -> crate::linalg::CVec {
        v * lambda - &self.matrix * v
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }
}

pub fn discretize_generator(spec: &SystemSpec, degree: usize) -> Result<DiscretizedGenerator> {
    if degree < 4 {
        return Err(Error::Config(format!("discretization needs at least 4 intervals, got {degree}")));
    }
    let n = spec.n();
    let grid = CollocationGrid::new(spec.max_delay(), degree)?;
    let m = grid.len();
    let d = grid.diff_matrix();
    let mut a = CMat::zeros(n * m, n * m);
    for i in 0..m - 1 {
        for j in 0..m {
            let v = Complex64::new(d[(i, j)], 0.0);
            if v != Complex64::new(0.0, 0.0) {
                for k in 0..n {
                    a[(i * n + k, j * n + k)] = v;
                }
            }
        }
    }
    let w = spec.phi().grid_functional(&grid);
    let last = (m - 1) * n;
    for (j, wj) in w.iter().enumerate() {
        let mut blk = wj.clone();
        if j == m - 1 {
            blk += spec.b().as_mat();
        }
        a.view_mut((last, j * n), (n, n)).copy_from(&blk);
    }
    Ok(DiscretizedGenerator { grid, n, matrix: a })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedRoot {
    #[serde(serialize_with = "ser_complex")]
    pub lambda: Complex64,
    /// Smallest singular value of `Δ(λ)`.
    pub residual: f64,
    pub iterations: usize,
}

pub(crate) fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

/// Newton's method on `det Δ` with step `1 / tr(Δ⁻¹ Δ')`.
pub fn refine_root(spec: &SystemSpec, seed: Complex64) -> Result<RefinedRoot> {
    refine_with_multiplicity(spec, seed, 0)
}

/// `multiplicity = 0` lets the iteration estimate it from the step ratios.
pub(crate) fn refine_with_multiplicity(spec: &SystemSpec, seed: Complex64, multiplicity: usize) -> Result<RefinedRoot> {
    let bound = 10.0 * (seed.norm() + spec.root_modulus_bound(seed.re.min(0.0) - 1.0) + 1.0);
    let mut lam = seed;
    let mut mult = multiplicity.max(1) as f64;
    let auto = multiplicity == 0;
    let mut prev_step = f64::NAN;
    let mut prev_ratio = f64::NAN;
    let mut best: Option<(Complex64, f64)> = None;
    for it in 0..NEWTON_MAX_ITER {
        let delta = delta_matrix(spec, lam);
        let lu = delta.clone().lu();
        let Some(x) = lu.solve(&delta_derivative(spec, lam)) else {
            return Ok(finish(spec, lam, it));
        };
        let t = x.trace();
        if t.norm() == 0.0 || !(t.re.is_finite() && t.im.is_finite()) {
            break;
        }
        let sig = char_matrix(spec, lam).sigma_min;
        if best.is_none_or(|(_, s)| sig < s) {
            best = Some((lam, sig));
        }
        let step = mult / t;
        lam -= step;
        let s = step.norm();
        if s < NEWTON_STEP_TOL * lam.norm().max(1.0) {
            return Ok(finish(spec, lam, it + 1));
        }
        if lam.norm() > bound || !(lam.re.is_finite() && lam.im.is_finite()) {
            return Err(Error::NoConvergence { seed, iterations: it + 1 });
        }
        if auto && it >= 2 && prev_step.is_finite() {
            // linear convergence at rate (m-1)/m signals a multiple root
            let ratio = s / prev_step;
            if (0.3..0.95).contains(&ratio) && (ratio - prev_ratio).abs() < 0.05 {
                let m = (1.0 / (1.0 - ratio)).round();
                if m >= 2.0 && m != mult {
                    mult = m;
                }
            }
            prev_ratio = ratio;
        }
        prev_step = s;
    }
    // Multiple roots stall at the rounding floor; accept a numerically
    // singular iterate.
    if let Some((lam, sig)) = best {
        let scale = spec.b().norm() + spec.phi().norm_bound(lam.re.min(0.0)) + lam.norm() + 1.0;
        if sig < 1e-11 * scale {
            return Ok(finish(spec, lam, NEWTON_MAX_ITER));
        }
    }
    Err(Error::NoConvergence { seed, iterations: NEWTON_MAX_ITER })
}

fn finish(spec: &SystemSpec, lam: Complex64, iterations: usize) -> RefinedRoot {
    RefinedRoot { lambda: lam, residual: char_matrix(spec, lam).sigma_min, iterations }
}

/// `tr(Δ(λ)⁻¹ Δ'(λ))`.
fn log_derivative(spec: &SystemSpec, lam: Complex64) -> Option<Complex64> {
    let lu = delta_matrix(spec, lam).lu();
    let x = lu.solve(&delta_derivative(spec, lam))?;
    let t = x.trace();
    (t.re.is_finite() && t.im.is_finite()).then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    #[serde(serialize_with = "ser_complex")]
    pub lambda: Complex64,
    pub residual: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RootSet {
    /// Sorted by decreasing real part, then increasing imaginary part.
    pub roots: Vec<Root>,
    pub window: Window,
    /// Largest real part in the window, `None` when the window holds no root.
    pub abscissa: Option<f64>,
    /// Argument-principle count over the window boundary.
    pub winding: Option<f64>,
    /// The count matches the refined roots (with multiplicity) and, when
    /// requested, the rightmost root survived grid doubling.
    pub certified: bool,
    pub degree: usize,
}

impl RootSet {
    pub fn rightmost(&self) -> Option<&Root> {
        self.roots.first()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    pub fn unstable_count(&self) -> usize {
        self.roots.iter().filter(|r| r.lambda.re > 0.0).map(|r| r.multiplicity).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,residual,multiplicity\n");
        for r in &self.roots {
            s.push_str(&format!("{:.15e},{:.15e},{:.6e},{}\n", r.lambda.re, r.lambda.im, r.residual, r.multiplicity));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootOptions {
    pub degree: usize,
    /// Search window; derived from modulus bounds and the rightmost
    /// discretization root when absent.
    pub window: Option<Window>,
    pub count_check: bool,
    pub self_check: bool,
    /// Largest discretization size tried when the count disagrees.
    pub max_dim: usize,
    /// Distance of the default left edge from the rightmost root.
    pub left_margin: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { degree: DEFAULT_DEGREE, window: None, count_check: true, self_check: true, max_dim: 600, left_margin: 0.25 }
    }
}

impl RootOptions {
    /// Rightmost root only, without counting or grid doubling.
    pub fn fast() -> Self {
        Self { count_check: false, self_check: false, ..Self::default() }
    }
}

/// Upper bound on `|Im λ|` for roots with `Re λ ≥ re_min`.
fn imag_bound(spec: &SystemSpec, re_min: f64) -> f64 {
    spec.b().norm() + spec.phi().norm_bound(re_min.min(0.0)) + 1.0
}

fn plausible(spec: &SystemSpec, z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite() && z.norm() <= spec.b().norm() + spec.phi().norm_bound(z.re.min(0.0)) + 1.0 + 0.1 * z.norm()
}

fn refine_seeds(spec: &SystemSpec, seeds: &[Complex64]) -> Vec<RefinedRoot> {
    seeds.par_iter().filter_map(|&s| refine_root(spec, s).ok()).collect()
}

fn default_window(spec: &SystemSpec, eigs: &[Complex64], left_margin: f64) -> Result<Window> {
    let mut cand: Vec<Complex64> = eigs.iter().copied().filter(|&z| plausible(spec, z)).collect();
    cand.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    cand.truncate(2 * spec.n() + 6);
    let refined = refine_seeds(spec, &cand);
    let a = refined
        .iter()
        .filter(|r| r.residual < RESIDUAL_TOL)
        .map(|r| r.lambda.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !a.is_finite() {
        return Err(Error::NoConvergence { seed: cand.first().copied().unwrap_or_default(), iterations: NEWTON_MAX_ITER });
    }
    let re_max = spec.b().norm() + spec.phi().norm_bound(0.0) + 1.0;
    let re_min = a - left_margin;
    let im = imag_bound(spec, re_min);
    Window::new(re_min, re_max.max(a + 1.0), -im, im)
}

fn sort_roots(roots: &mut [Root]) {
    roots.sort_by(|a, b| b.lambda.re.total_cmp(&a.lambda.re).then(a.lambda.im.total_cmp(&b.lambda.im)));
}

/// Merges refined roots closer than `1e-6·max(1, |λ|)`; keeps the smaller residual.
fn dedupe(mut found: Vec<RefinedRoot>) -> Vec<RefinedRoot> {
    found.sort_by(|a, b| a.lambda.re.total_cmp(&b.lambda.re).then(a.lambda.im.total_cmp(&b.lambda.im)));
    let mut out: Vec<RefinedRoot> = Vec::new();
    for r in found {
        let tol = 1e-6 * r.lambda.norm().max(1.0);
        if let Some(q) = out.iter_mut().find(|q| (q.lambda - r.lambda).norm() < tol) {
            if r.residual < q.residual {
                *q = r;
            }
        } else {
            out.push(r);
        }
    }
    out
}

fn with_multiplicities(spec: &SystemSpec, found: &[RefinedRoot]) -> Vec<Root> {
    let g = |z: Complex64| log_derivative(spec, z);
    found
        .iter()
        .map(|r| {
            let nn = found
                .iter()
                .filter(|q| q.lambda != r.lambda)
                .map(|q| (q.lambda - r.lambda).norm())
                .fold(f64::INFINITY, f64::min);
            let rho = (1e-2 * r.lambda.norm().max(1.0)).min(0.4 * nn);
            let m = winding_circle(&g, r.lambda, rho, 64).map(|w| w.round().max(1.0) as usize).unwrap_or(1);
            let mut root = Root { lambda: r.lambda, residual: r.residual, multiplicity: m };
            if m > 1 {
                if let Ok(better) = refine_with_multiplicity(spec, r.lambda, m) {
                    if (better.lambda - r.lambda).norm() < rho {
                        root.lambda = better.lambda;
                        root.residual = better.residual;
                    }
                }
            }
            root
        })
        .collect()
}

fn count_in_window(spec: &SystemSpec, window: &Window) -> std::result::Result<f64, ContourFailure> {
    let g = |z: Complex64| log_derivative(spec, z);
    let panel = 0.5 * (1.0f64).min(1.0 / spec.max_delay());
    winding_polygon(&g, &window.vertices(), panel, 1e-6)
}

/// All characteristic roots in a window, with the rightmost real part.
pub fn spectral_abscissa(spec: &SystemSpec, opts: &RootOptions) -> Result<RootSet> {
    let n = spec.n();
    let mut degree = opts.degree;
    let mut window = opts.window;
    let mut found: Vec<RefinedRoot> = Vec::new();
    let mut winding = None;
    let mut certified = false;
    loop {
        let dg = discretize_generator(spec, degree)?;
        let eigs = dg.eigenvalues()?;
        let w = match window {
            Some(w) => w,
            None => {
                let w = default_window(spec, &eigs, opts.left_margin)?;
                window = Some(w);
                w
            }
        };
        let search = w.expanded(1.0 + 0.1 * (w.re_max - w.re_min));
        let seeds: Vec<Complex64> = eigs.iter().copied().filter(|&z| search.contains(z) && plausible(spec, z)).collect();
        let mut all = found.clone();
        all.extend(refine_seeds(spec, &seeds).into_iter().filter(|r| r.residual < RESIDUAL_TOL));
        found = dedupe(all);
        if !opts.count_check {
            break;
        }
        let inside: Vec<RefinedRoot> = found.iter().copied().filter(|r| w.contains(r.lambda)).collect();
        let total: usize = with_multiplicities(spec, &inside).iter().map(|r| r.multiplicity).sum();
        let mut wcount = None;
        let mut wnd = w;
        for attempt in 0..4 {
            match count_in_window(spec, &wnd) {
                Ok(c) if (c - c.round()).abs() <= 0.01 => {
                    wcount = Some(c);
                    break;
                }
                Ok(c) if attempt == 3 => return Err(Error::ContourThroughRoot { winding: c }),
                Err(_) if attempt == 3 => return Err(Error::ContourThroughRoot { winding: f64::NAN }),
                _ => {
                    let k = (attempt + 1) as f64;
                    let dx = 0.0137 * k * (1.0 + 0.01 * (w.re_max - w.re_min));
                    let dy = 0.0191 * k * (1.0 + 0.01 * (w.im_max - w.im_min));
                    wnd = Window { re_min: w.re_min - dx, re_max: w.re_max + dx, im_min: w.im_min - dy, im_max: w.im_max + dy };
                }
            }
        }
        if wnd != w {
            window = Some(wnd);
            let inside: Vec<RefinedRoot> = found.iter().copied().filter(|r| wnd.contains(r.lambda)).collect();
            let t2: usize = with_multiplicities(spec, &inside).iter().map(|r| r.multiplicity).sum();
            winding = wcount;
            if wcount.map(|c| c.round() as usize) == Some(t2) {
                certified = true;
                break;
            }
        } else {
            winding = wcount;
            if wcount.map(|c| c.round() as usize) == Some(total) {
                certified = true;
                break;
            }
        }
        if n * (2 * degree + 1) > opts.max_dim {
            break;
        }
        degree *= 2;
    }
    let w = window.expect("window fixed after first pass");
    let inside: Vec<RefinedRoot> = found.into_iter().filter(|r| w.contains(r.lambda)).collect();
    let mut roots = if opts.count_check {
        with_multiplicities(spec, &inside)
    } else {
        inside.iter().map(|r| Root { lambda: r.lambda, residual: r.residual, multiplicity: 1 }).collect()
    };
    sort_roots(&mut roots);
    let abscissa = roots.first().map(|r| r.lambda.re);
    if certified && opts.self_check {
        certified = self_converged(spec, degree, &w, roots.first());
    }
    Ok(RootSet { roots, window: w, abscissa, winding, certified, degree })
}

/// The rightmost root seeded from the doubled grid agrees with `rightmost`.
fn self_converged(spec: &SystemSpec, degree: usize, w: &Window, rightmost: Option<&Root>) -> bool {
    let Some(r) = rightmost else { return true };
    if spec.n() * (2 * degree + 1) > 2 * 600 {
        return true;
    }
    let Ok(dg) = discretize_generator(spec, 2 * degree) else { return false };
    let Ok(eigs) = dg.eigenvalues() else { return false };
    let seed = eigs
        .into_iter()
        .filter(|&z| w.contains(z))
        .min_by(|a, b| (a - r.lambda).norm().total_cmp(&(b - r.lambda).norm()));
    match seed.map(|s| refine_with_multiplicity(spec, s, r.multiplicity)) {
        Some(Ok(q)) => (q.lambda.re - r.lambda.re).abs() < 1e-8 * r.lambda.norm().max(1.0),
        _ => false,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalDelay {
    pub tau: f64,
    /// Root on the imaginary axis at the crossing.
    #[serde(serialize_with = "ser_complex")]
    pub root: Complex64,
    /// `true` when stability is lost as `tau` increases through the crossing.
    pub destabilizing: bool,
    pub abscissa_before: f64,
    pub abscissa_after: f64,
}

fn abscissa_at(b: &ComplexMatrix, c: &ComplexMatrix, tau: f64, degree: usize) -> Result<(f64, Complex64)> {
    let spec = SystemSpec::feedback(b.clone(), c.clone(), tau)?;
    let rs = spectral_abscissa(&spec, &RootOptions { degree, ..RootOptions::fast() })?;
    let r = rs.rightmost().ok_or(Error::NoConvergence { seed: Complex64::new(0.0, 0.0), iterations: 0 })?;
    Ok((r.lambda.re, r.lambda))
}

/// First delay in `[lo, hi]` at which the rightmost characteristic root of
/// `u' = Bu + Cu(t − τ)` crosses the imaginary axis, to `1e-9` in `τ`.
pub fn critical_delay(b: &ComplexMatrix, c: &ComplexMatrix, lo: f64, hi: f64) -> Result<CriticalDelay> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("delay range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let degree = DEFAULT_DEGREE;
    let scan = 16;
    let taus: Vec<f64> = (0..=scan).map(|k| lo + (hi - lo) * k as f64 / scan as f64).collect();
    let vals: Vec<f64> = taus
        .par_iter()
        .map(|&t| abscissa_at(b, c, t, degree).map(|v| v.0))
        .collect::<Result<Vec<_>>>()?;
    let k = (0..scan)
        .find(|&k| (vals[k] < 0.0) != (vals[k + 1] < 0.0))
        .ok_or(Error::NoCrossingInRange { lo, hi })?;
    let (mut a, mut bb) = (taus[k], taus[k + 1]);
    let sa = vals[k] < 0.0;
    while bb - a > 1e-9 * bb.max(1.0) {
        let m = 0.5 * (a + bb);
        let (v, _) = abscissa_at(b, c, m, degree)?;
        if (v < 0.0) == sa {
            a = m;
        } else {
            bb = m;
        }
    }
    let tau = 0.5 * (a + bb);
    let (va, _) = abscissa_at(b, c, a, degree)?;
    let (vb, _) = abscissa_at(b, c, bb, degree)?;
    let (_, root) = abscissa_at(b, c, tau, degree)?;
    Ok(CriticalDelay { tau, root, destabilizing: sa, abscissa_before: va, abscissa_after: vb })
}
