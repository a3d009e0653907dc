//! Small-delay analysis of `u'(t) = B u(t) + C u(t − τ)`: destabilizing
//! delay sequences, the rewriting around `B + C`, and certified margins `κ`
//! such that stability (or hyperbolicity) of `B + C` persists for `τ < κ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::chebyshev::composite_gauss;
use crate::criteria::{line_sup_resolvent, EIGEN_LINE_TOL};
use crate::error::{Error, Result};
use crate::linalg::{c, commutator_norm, eigenvalues, expm, identity, inverse, singular_extremes, spectral_abscissa, spectral_norm, CMat};
use crate::model::{ComplexMatrix, DelayOperatorSpec, KernelTerm, PointTerm, SystemSpec};
use crate::roots::ser_complex;

pub const MAX_MARCH_STEPS: usize = 4000;
/// Cells of the ω grid satisfy `δ·‖R‖ ≤` this value.
const CELL_SLACK: f64 = 5e-3;
const MAX_OMEGA_CELLS: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceEntry {
    pub mu: f64,
    pub tau: f64,
    #[serde(serialize_with = "ser_complex")]
    pub root: Complex64,
    /// `|λ − iμ − d e^{−λτ}|`
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DestabilizingSequence {
    pub d: f64,
    pub entries: Vec<SequenceEntry>,
}

/// Delays `τ_k` at which `λ = i(μ_k + d)` solves `λ = iμ_k + d e^{−λτ_k}`.
pub fn destabilizing_sequence(mus: &[f64], d: f64) -> Result<DestabilizingSequence> {
    if !(d < 0.0) {
        return Err(Error::HypothesisViolated(format!("feedback gain d = {d} must be negative")));
    }
    let entries = mus
        .iter()
        .map(|&mu| {
            let s = mu + d;
            if s == 0.0 {
                return Err(Error::MuEqualsMinusD { mu });
            }
            let tau = if s > 0.0 { 3.0 * PI / (2.0 * s) } else { -PI / (2.0 * s) };
            let lam = Complex64::new(0.0, s);
            let residual = (lam - Complex64::new(0.0, mu) - d * (-lam * tau).exp()).norm();
            Ok(SequenceEntry { mu, tau, root: lam, residual })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DestabilizingSequence { d, entries })
}

/// `B = i·diag(μ)`, `C = d·I` with delay `τ`.
pub fn skew_feedback_spec(mus: &[f64], d: f64, tau: f64) -> Result<SystemSpec> {
    let diag: Vec<Complex64> = mus.iter().map(|&m| Complex64::new(0.0, m)).collect();
    SystemSpec::feedback(ComplexMatrix::diagonal(&diag), ComplexMatrix::scaled_identity(mus.len(), c(d)), tau)
}

/// Positive solution of `ε = μ e^{−ετ} + ρ`.
pub fn shifted_unstable_root(rho: f64, mu: f64, tau: f64) -> Result<f64> {
    if !(mu > 0.0 && mu > -rho && tau > 0.0) || !(rho.is_finite() && mu.is_finite() && tau.is_finite()) {
        return Err(Error::HypothesisViolated(format!("need mu > 0, mu > -rho, tau > 0 (rho = {rho}, mu = {mu}, tau = {tau})")));
    }
    let f = |e: f64| mu * (-e * tau).exp() + rho - e;
    let (mut lo, mut hi) = (0.0, mu + rho.max(0.0) + 1.0);
    while hi - lo > 1e-12 * hi.max(1.0) {
        let m = 0.5 * (lo + hi);
        if f(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let mut e = 0.5 * (lo + hi);
    for _ in 0..3 {
        let df = -mu * tau * (-e * tau).exp() - 1.0;
        e -= f(e) / df;
    }
    Ok(e)
}

/// Scalar system with `ρ + iπ/τ` an eigenvalue of `B` and `C = −μ`; its
/// characteristic root is `ε + iπ/τ`.
pub fn shifted_example_spec(rho: f64, mu: f64, tau: f64) -> Result<SystemSpec> {
    SystemSpec::feedback(ComplexMatrix::scalar(Complex64::new(rho, PI / tau)), ComplexMatrix::scalar(c(-mu)), tau)
}

fn kernel_degree(b_norm: f64, tau: f64) -> usize {
    ((b_norm * tau * std::f64::consts::E).ceil() as usize + 16).min(128)
}

/// Delay operator of the rewriting `u' = (B + C) u + Φ u_t`:
/// a point term `−C (S(τ) − I)` at `−τ` and the density `−C S(−σ − τ) C`
/// on `[−2τ, −τ]`, with `S(t) = e^{tB}`.
pub fn transformed_phi(b: &ComplexMatrix, cm: &ComplexMatrix, tau: f64) -> Result<DelayOperatorSpec> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidSpec(format!("delay must be positive, got {tau}")));
    }
    let n = b.dim();
    let bm = b.as_mat();
    let cmat = cm.as_mat();
    let s_tau = expm(&(bm * c(tau)));
    let point = -(cmat * (s_tau - identity(n)));
    let degree = kernel_degree(b.norm(), tau);
    let kernel = KernelTerm::from_fn(-2.0 * tau, -tau, degree, |sig| -(cmat * expm(&(bm * c(-sig - tau))) * cmat))?;
    DelayOperatorSpec::new(n, 2.0 * tau, vec![PointTerm { h: -tau, matrix: ComplexMatrix::new(point)? }], vec![kernel])
}

/// The rewritten system `(B + C, Φ)` for a feedback spec.
pub fn rewritten_system(spec: &SystemSpec) -> Result<SystemSpec> {
    let fb = spec.feedback_data().ok_or_else(|| Error::InvalidSpec("rewriting needs a feedback system".into()))?;
    let bc = ComplexMatrix::new(spec.b().as_mat() + fb.c.as_mat())?;
    SystemSpec::general(bc, transformed_phi(spec.b(), &fb.c, fb.tau)?)
}

/// Extra factor `λ − B − C + S(τ) C e^{−λτ}` of the rewritten characteristic
/// matrix: `Δ_rewritten(λ)(λ − B) = E(λ) Δ(λ)` up to ordering for commuting data.
pub fn rewriting_factor(spec: &SystemSpec, lambda: Complex64) -> Result<CMat> {
    let fb = spec.feedback_data().ok_or_else(|| Error::InvalidSpec("rewriting needs a feedback system".into()))?;
    let n = spec.n();
    let b = spec.b().as_mat();
    let s_tau = expm(&(b * c(fb.tau)));
    Ok(identity(n) * lambda - b - fb.c.as_mat() + s_tau * fb.c.as_mat() * (-lambda * fb.tau).exp())
}

fn resolvent_at(g: &CMat, omega: f64) -> Result<CMat> {
    let n = g.nrows();
    let shifted = identity(n) * Complex64::new(0.0, omega) - g;
    let (smax, smin) = singular_extremes(&shifted);
    if smin <= 1e-14 * smax.max(1.0) {
        return Err(Error::ResonantOmega { omega });
    }
    inverse(&shifted).ok_or(Error::ResonantOmega { omega })
}

/// `C (S(τ) − I) e^{−iωτ} R(iω, B + C)`.
pub fn i1_matrix(b: &CMat, cm: &CMat, tau: f64, omega: f64) -> Result<CMat> {
    let n = b.nrows();
    let r = resolvent_at(&(b + cm), omega)?;
    let s = expm(&(b * c(tau)));
    Ok(cm * (s - identity(n)) * r * Complex64::new(0.0, -omega * tau).exp())
}

/// `(S(τ) − I) e^{−iωτ} R(iω, B + C) C`, equal to `i1_matrix` when `BC = CB`.
pub fn i1_commuted_matrix(b: &CMat, cm: &CMat, tau: f64, omega: f64) -> Result<CMat> {
    let n = b.nrows();
    let r = resolvent_at(&(b + cm), omega)?;
    let s = expm(&(b * c(tau)));
    Ok((s - identity(n)) * r * cm * Complex64::new(0.0, -omega * tau).exp())
}

/// `∫_{−τ}^0 C S(−s) C e^{−iω(s−τ)} ds · R(iω, B + C)`.
pub fn i2_matrix(b: &CMat, cm: &CMat, tau: f64, omega: f64) -> Result<CMat> {
    let r = resolvent_at(&(b + cm), omega)?;
    if tau == 0.0 {
        return Ok(CMat::zeros(b.nrows(), b.ncols()));
    }
    let integral = |panels: usize| {
        let (pts, wts) = composite_gauss(-tau, 0.0, panels, 16);
        let mut acc = CMat::zeros(b.nrows(), b.ncols());
        for (s, w) in pts.into_iter().zip(wts) {
            acc += cm * expm(&(b * c(-s))) * cm * (Complex64::new(0.0, -omega * (s - tau)).exp() * w);
        }
        acc
    };
    let mut panels = 1 + ((omega.abs() + spectral_norm(b)) * tau / 2.0).ceil() as usize;
    let mut prev = integral(panels);
    loop {
        panels *= 2;
        let next = integral(panels);
        let diff = spectral_norm(&(&next - &prev));
        prev = next;
        if diff <= 1e-13 * spectral_norm(&prev).max(1e-300) || panels > 4096 {
            break;
        }
    }
    Ok(prev * r)
}

/// Spectral norms of the two terms of `Φ_{iω} R(iω, B + C)` for the rewritten system.
pub fn i1_i2_norms(b: &CMat, cm: &CMat, tau: f64, omega: f64) -> Result<(f64, f64)> {
    Ok((spectral_norm(&i1_matrix(b, cm, tau, omega)?), spectral_norm(&i2_matrix(b, cm, tau, omega)?)))
}

/// `sup_{0 ≤ t ≤ 1} ‖e^{tB}‖`: the sampled maximum times `e^{h·max(μ(B), 0)}`
/// with `μ` the logarithmic norm, which bounds the growth between samples.
pub fn semigroup_bound(b: &CMat) -> f64 {
    let samples = 1000;
    let h = 1.0 / samples as f64;
    let sampled = (0..=samples)
        .into_par_iter()
        .map(|i| spectral_norm(&expm(&(b * c(i as f64 * h)))))
        .reduce(|| 1.0, f64::max);
    let herm = (b + b.adjoint()) * c(0.5);
    let lognorm = eigenvalues(&herm).map(|e| e.into_iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)).unwrap_or(spectral_norm(b));
    sampled * (h * lognorm.max(0.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginMode {
    Stable,
    Hyperbolic,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginCertificate {
    /// Delays visited by the march towards `kappa1` (subsampled).
    pub tau_grid: Vec<f64>,
    /// Certified `max_{|ω|≤L} ‖I₁^ω(τ)‖` on `tau_grid`.
    pub i1_sup: Vec<f64>,
    pub omega_cells: usize,
    pub march_steps: usize,
    /// `sup_ω ‖C² R(iω, B + C)‖` when the commuting form is used.
    pub c2r_sup: Option<f64>,
}

fn ser_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessMargin {
    pub mode: MarginMode,
    pub commuting: bool,
    #[serde(serialize_with = "ser_inf")]
    pub kappa1: f64,
    #[serde(serialize_with = "ser_inf")]
    pub kappa2: f64,
    #[serde(serialize_with = "ser_inf")]
    pub kappa: f64,
    /// `C = 0`: every delay is admissible.
    pub unconditional: bool,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "M_BC")]
    pub m_bc: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub norm_c: f64,
    /// The certified I₁ bound was nondecreasing along the march.
    pub monotone_in_tau: bool,
    pub certificate: MarginCertificate,
}

/// ω cells on `[−L, L]` with resolvents of `B + C` precomputed.
struct OmegaGrid {
    centers: Vec<f64>,
    halves: Vec<f64>,
    r: Vec<CMat>,
    m: Vec<f64>,
}

impl OmegaGrid {
    fn build(g: &CMat, l: f64) -> Result<Self> {
        let h0 = 0.01 * (1.0 + spectral_norm(g));
        let count = ((2.0 * l / h0).ceil() as usize).clamp(3, 20_001);
        let w = 2.0 * l / count as f64;
        let mut cells: Vec<(f64, f64)> = (0..count).map(|i| (-l + (i as f64 + 0.5) * w, 0.5 * w)).collect();
        let eval = |om: f64| -> Result<(CMat, f64)> {
            let r = resolvent_at(g, om)?;
            let m = spectral_norm(&r);
            Ok((r, m))
        };
        let mut data: Vec<(CMat, f64)> = cells.par_iter().map(|&(om, _)| eval(om)).collect::<Result<Vec<_>>>()?;
        loop {
            let loose: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].1 * data[i].1 > CELL_SLACK).collect();
            if loose.is_empty() || cells.len() + 2 * loose.len() > MAX_OMEGA_CELLS {
                break;
            }
            let mut fresh = Vec::with_capacity(2 * loose.len());
            for &i in &loose {
                let (om, half) = cells[i];
                let nh = half / 3.0;
                cells[i].1 = nh;
                fresh.push((om - 2.0 * nh, nh));
                fresh.push((om + 2.0 * nh, nh));
            }
            let fd: Vec<(CMat, f64)> = fresh.par_iter().map(|&(om, _)| eval(om)).collect::<Result<Vec<_>>>()?;
            cells.extend(fresh);
            data.extend(fd);
        }
        let (r, m): (Vec<CMat>, Vec<f64>) = data.into_iter().unzip();
        let (centers, halves) = cells.into_iter().unzip();
        Ok(Self { centers, halves, r, m })
    }

    /// Certified `sup ‖Q R(iω)‖` over the cells.
    fn sup_of(&self, q: &CMat) -> f64 {
        let qn = spectral_norm(q);
        (0..self.centers.len())
            .into_par_iter()
            .map(|i| {
                let d = self.halves[i] * self.m[i];
                if d >= 1.0 {
                    return f64::INFINITY;
                }
                let mbar = self.m[i] / (1.0 - d);
                spectral_norm(&(q * &self.r[i])) + qn * self.halves[i] * self.m[i] * mbar
            })
            .reduce(|| 0.0, f64::max)
    }

    fn len(&self) -> usize {
        self.centers.len()
    }
}

fn check_bc(bc: &CMat, mode: MarginMode) -> Result<()> {
    match mode {
        MarginMode::Stable => {
            let a = spectral_abscissa(bc)?;
            if a >= 0.0 {
                return Err(Error::BCNotStable { abscissa: a });
            }
        }
        MarginMode::Hyperbolic => {
            let d = eigenvalues(bc)?.into_iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
            if d < EIGEN_LINE_TOL {
                return Err(Error::BCNotHyperbolic { distance: d });
            }
        }
    }
    Ok(())
}

fn margin_impl(b: &ComplexMatrix, cm: &ComplexMatrix, mode: MarginMode, commuting: bool) -> Result<RobustnessMargin> {
    if b.dim() != cm.dim() || !b.is_square() || !cm.is_square() {
        return Err(Error::DimensionMismatch { expected: b.dim(), found: cm.dim(), context: "feedback matrix C" });
    }
    let bm = b.as_mat();
    let cmat = cm.as_mat();
    let bc = bm + cmat;
    check_bc(&bc, mode)?;
    let norm_c = spectral_norm(cmat);
    let k = semigroup_bound(bm);
    let m_bc = line_sup_resolvent(&bc, 0.0)?.sup_norm;
    let l = spectral_norm(&bc) + 2.0 * norm_c * (k + 1.0);
    if norm_c == 0.0 {
        return Ok(RobustnessMargin {
            mode,
            commuting,
            kappa1: f64::INFINITY,
            kappa2: f64::INFINITY,
            kappa: f64::INFINITY,
            unconditional: true,
            k,
            m_bc,
            l,
            norm_c,
            monotone_in_tau: true,
            certificate: MarginCertificate { tau_grid: vec![], i1_sup: vec![], omega_cells: 0, march_steps: 0, c2r_sup: None },
        });
    }
    let grid = OmegaGrid::build(&bc, l)?;
    let n = b.dim();
    let q_of = |tau: f64| -> CMat {
        if commuting {
            // (S(τ) − I) R C = C (S(τ) − I) R; the grid carries R only
            expm(&(bm * c(tau))) - identity(n)
        } else {
            cmat * (expm(&(bm * c(tau))) - identity(n))
        }
    };
    let i1_sup = |tau: f64| -> f64 {
        let q = q_of(tau);
        if commuting {
            let qn = spectral_norm(&q);
            let cn = norm_c;
            (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let d = grid.halves[i] * grid.m[i];
                    if d >= 1.0 {
                        return f64::INFINITY;
                    }
                    let mbar = grid.m[i] / (1.0 - d);
                    spectral_norm(&(&q * &grid.r[i] * cmat)) + qn * cn * grid.halves[i] * grid.m[i] * mbar
                })
                .reduce(|| 0.0, f64::max)
        } else {
            grid.sup_of(&q)
        }
    };
    let mut kappa2 = 1.0 / (2.0 * norm_c * norm_c * k * m_bc);
    let mut c2r_sup = None;
    if commuting {
        let c2 = cmat * cmat;
        let inner = grid.sup_of(&c2);
        // beyond L, ‖R‖ < 1/(2‖C‖(K+1))
        let tail = spectral_norm(&c2) / (2.0 * norm_c * (k + 1.0));
        let s = inner.max(tail);
        c2r_sup = Some(s);
        if s == 0.0 {
            kappa2 = f64::INFINITY;
        } else {
            kappa2 = kappa2.max(1.0 / (2.0 * k * s));
        }
    }
    // τ ↦ sup_ω ‖I₁‖ is Lipschitz with this constant on [0, 1]
    let lipschitz = if commuting { spectral_norm(bm) * norm_c } else { spectral_norm(&(cmat * bm)) } * k * m_bc;
    let (kappa1, marched, iterations) = march_kappa1(&i1_sup, lipschitz);
    let monotone = marched.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12));
    let keep = marched.len().div_ceil(64).max(1);
    let last = marched.len().saturating_sub(1);
    let (tau_grid, sup_grid): (Vec<f64>, Vec<f64>) =
        marched.iter().enumerate().filter(|(i, _)| i % keep == 0 || *i == last).map(|(_, &p)| p).unzip();
    let kappa = kappa1.min(kappa2);
    Ok(RobustnessMargin {
        mode,
        commuting,
        kappa1,
        kappa2,
        kappa,
        unconditional: false,
        k,
        m_bc,
        l,
        norm_c,
        monotone_in_tau: monotone,
        certificate: MarginCertificate { tau_grid, i1_sup: sup_grid, omega_cells: grid.len(), march_steps: iterations, c2r_sup },
    })
}

/// Marches `τ` from 0 while `g(τ) < ½`: from `τ` every delay below
/// `τ + (½ − g(τ))/Λ` keeps `g < ½`. Stops when the step stalls relative to `τ`.
fn march_kappa1(g: &(dyn Fn(f64) -> f64 + Sync), lipschitz: f64) -> (f64, Vec<(f64, f64)>, usize) {
    if lipschitz == 0.0 {
        let v = g(1.0);
        return (if v < 0.5 { 1.0 } else { 0.0 }, vec![(1.0, v)], 1);
    }
    let mut tau = 0.0;
    let mut val = 0.0;
    let mut trace = vec![(0.0, 0.0)];
    let mut steps = 0;
    while steps < MAX_MARCH_STEPS {
        let step = 0.999 * (0.5 - val) / lipschitz;
        let next = (tau + step).min(1.0);
        steps += 1;
        let v = g(next);
        if v >= 0.5 {
            return (next, trace, steps);
        }
        tau = next;
        val = v;
        trace.push((tau, val));
        if tau >= 1.0 || step < 1e-6 * tau {
            break;
        }
    }
    ((tau + 0.999 * (0.5 - val) / lipschitz).min(1.0), trace, steps)
}

/// Certified `κ` for `u' = Bu + Cu(t − τ)`.
pub fn robustness_margin(b: &ComplexMatrix, cm: &ComplexMatrix, mode: MarginMode) -> Result<RobustnessMargin> {
    margin_impl(b, cm, mode, false)
}

/// `κ` for `C` commuting with `B`, using the `C`-on-the-right form of I₁ and
/// `‖I₂‖ ≤ τ K ‖C² R‖`.
pub fn compact_commuting_margin(b: &ComplexMatrix, cm: &ComplexMatrix, mode: MarginMode) -> Result<RobustnessMargin> {
    let defect = commutator_norm(b.as_mat(), cm.as_mat());
    if defect > 1e-10 * (b.norm() * cm.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::NotCommuting { defect });
    }
    margin_impl(b, cm, mode, true)
}

/// `π / (2|d|)`: the delay at which `λ = d e^{−λτ}` first has a root on `iℝ`.
pub fn scalar_exact_boundary(d: f64) -> Result<f64> {
    if !(d < 0.0) {
        return Err(Error::HypothesisViolated(format!("d = {d} must be negative")));
    }
    Ok(PI / (2.0 * d.abs()))
}
