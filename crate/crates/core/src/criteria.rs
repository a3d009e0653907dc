//! Resolvent-based sufficient conditions for hyperbolicity and exponential
//! stability, with certified suprema over vertical lines.
//!
//! Along `Re λ = α` the characteristic matrix factors as
//! `Δ(λ) = (I − F(λ))(λ − B)` with `F(λ) = Φ_λ R(λ, B)`. Summable power norms
//! `a_n = sup_ω ‖F(α + iω)ⁿ‖` give `sup ‖Δ⁻¹‖ ≤ M·a`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{commutator_norm, eigenvalues, identity, inverse, power_norms, spectral_abscissa, spectral_norm, spectral_radius, CMat};
use crate::model::{DelayOperatorSpec, SystemSpec};

pub const EIGEN_LINE_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_POWER: usize = 50;
pub const COMMUTE_RTOL: f64 = 1e-10;

/// Limits of the adaptive ω sampling.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SamplerConfig {
    /// Relative slack accepted between certified and sampled maxima.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_samples: usize,
    pub max_initial: usize,
    pub max_rounds: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-3, abs_tol: 1e-9, max_samples: 200_000, max_initial: 4001, max_rounds: 60 }
    }
}

#[derive(Debug, Clone)]
struct Sample {
    omega: f64,
    /// `‖R(λ, B)‖`
    m: f64,
    /// `‖Φ_λ‖`
    phi: f64,
    /// `‖F(λ)^j‖` for `j = 1..=powers`
    p: Vec<f64>,
}

struct LineSampler<'a> {
    alpha: f64,
    b: &'a CMat,
    phi: Option<&'a DelayOperatorSpec>,
    powers: usize,
    /// Bound on `‖dΦ_λ/dλ‖` along the line.
    dphi: f64,
}

impl LineSampler<'_> {
    fn eval(&self, omega: f64) -> Sample {
        let lam = Complex64::new(self.alpha, omega);
        let n = self.b.nrows();
        let shifted = identity(n) * lam - self.b;
        let Some(r) = inverse(&shifted) else {
            return Sample { omega, m: f64::INFINITY, phi: 0.0, p: vec![f64::INFINITY; self.powers] };
        };
        let m = spectral_norm(&r);
        let mut p = Vec::with_capacity(self.powers);
        let mut phi_norm = 0.0;
        if let Some(phi) = self.phi {
            let sym = phi.symbol(lam);
            phi_norm = spectral_norm(&sym);
            let f = sym * &r;
            let mut pw = f.clone();
            for j in 0..self.powers {
                if j > 0 {
                    pw = &pw * &f;
                }
                let v = spectral_norm(&pw);
                p.push(v);
                if v == 0.0 {
                    p.resize(self.powers, 0.0);
                    break;
                }
            }
        }
        Sample { omega, m, phi: phi_norm, p }
    }

    /// Certified bounds on the cell `|ω − s.omega| ≤ delta`: index 0 is the
    /// resolvent norm, index `j` the norm of `F^j`.
    fn cell_upper(&self, s: &Sample, delta: f64) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.powers + 1];
        if !s.m.is_finite() || delta * s.m >= 1.0 {
            return out;
        }
        let mbar = s.m / (1.0 - delta * s.m);
        out[0] = mbar;
        if self.powers == 0 {
            return out;
        }
        let e = delta * mbar * (self.dphi + s.phi * s.m);
        // U_j ≤ p_j + e Σ_{i<j} U_i p_{j-1-i}
        let mut u = vec![1.0; self.powers + 1];
        let p = |j: usize| if j == 0 { 1.0 } else { s.p[j - 1] };
        for j in 1..=self.powers {
            let mut acc = 0.0;
            for i in 0..j {
                acc += u[i] * p(j - 1 - i);
            }
            u[j] = p(j) + e * acc;
            out[j] = u[j];
        }
        out
    }

    fn values(&self, s: &Sample) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.powers + 1);
        v.push(s.m);
        v.extend_from_slice(&s.p);
        v
    }
}

#[derive(Debug, Clone)]
struct SupOutcome {
    omega_cap: f64,
    grid_step: f64,
    samples: usize,
    /// Largest sampled values, per index.
    est: Vec<f64>,
    argmax: Vec<f64>,
    /// Certified suprema over the whole line, per index.
    upper: Vec<f64>,
    tail: Vec<f64>,
}

#[derive(Clone)]
struct Cell {
    sample: usize,
    half: f64,
}

/// Certified sup over ω ∈ ℝ. `track` lists the indices whose cells drive
/// refinement.
fn certified_sup(sampler: &LineSampler<'_>, track: &[usize], cfg: &SamplerConfig, b_shift_norm: f64, tail_scale: f64, b_norm: f64) -> SupOutcome {
    let idx_lead = track[0];
    let omega0 = b_shift_norm + 1.0 + tail_scale;
    let cap = 1e3 * omega0;
    let mut omega_cap = omega0;
    let h0 = 0.01 * (1.0 + b_norm);
    let tail_at = |om: f64| -> Vec<f64> {
        let gap = om - b_shift_norm;
        let mut t = vec![1.0 / gap];
        for j in 1..=sampler.powers {
            t.push((tail_scale / gap).powi(j as i32));
        }
        t
    };
    loop {
        let count = ((2.0 * omega_cap / h0).ceil() as usize + 1).clamp(3, cfg.max_initial);
        let width = 2.0 * omega_cap / count as f64;
        let mut samples: Vec<Sample> = (0..count)
            .into_par_iter()
            .map(|i| sampler.eval(-omega_cap + (i as f64 + 0.5) * width))
            .collect();
        let mut cells: Vec<Cell> = (0..count).map(|i| Cell { sample: i, half: 0.5 * width }).collect();
        let k = sampler.powers + 1;
        let mut est = vec![0.0f64; k];
        let mut argmax = vec![0.0f64; k];
        let update = |est: &mut Vec<f64>, argmax: &mut Vec<f64>, s: &Sample| {
            for (j, v) in sampler.values(s).into_iter().enumerate() {
                if v > est[j] {
                    est[j] = v;
                    argmax[j] = s.omega;
                }
            }
        };
        for s in &samples {
            update(&mut est, &mut argmax, s);
        }
        let mut uppers: Vec<Vec<f64>> = cells.par_iter().map(|c| sampler.cell_upper(&samples[c.sample], c.half)).collect();
        for _ in 0..cfg.max_rounds {
            let loose: Vec<usize> = (0..cells.len())
                .filter(|&i| track.iter().any(|&j| uppers[i][j] > est[j] * (1.0 + cfg.rel_tol) + cfg.abs_tol))
                .collect();
            if loose.is_empty() || samples.len() + 2 * loose.len() > cfg.max_samples {
                break;
            }
            let mut new_pts = Vec::with_capacity(2 * loose.len());
            for &i in &loose {
                let c = &samples[cells[i].sample].omega;
                let w = 2.0 * cells[i].half / 3.0;
                new_pts.push(c - w);
                new_pts.push(c + w);
            }
            let fresh: Vec<Sample> = new_pts.par_iter().map(|&om| sampler.eval(om)).collect();
            let base = samples.len();
            for s in &fresh {
                update(&mut est, &mut argmax, s);
            }
            samples.extend(fresh);
            for (q, &i) in loose.iter().enumerate() {
                let half = cells[i].half / 3.0;
                cells[i].half = half;
                cells.push(Cell { sample: base + 2 * q, half });
                cells.push(Cell { sample: base + 2 * q + 1, half });
            }
            uppers = cells.par_iter().map(|c| sampler.cell_upper(&samples[c.sample], c.half)).collect();
        }
        let tail = tail_at(omega_cap);
        let lead_est = est[idx_lead];
        if tail[idx_lead] > lead_est && omega_cap < cap && lead_est > 0.0 {
            let scale = if idx_lead == 0 { 1.0 } else { tail_scale };
            let want = b_shift_norm + scale / lead_est * (1.0 + 1e-3);
            let next = want.min(cap);
            if next > omega_cap * (1.0 + 1e-9) {
                omega_cap = next;
                continue;
            }
        }
        let mut upper = tail.clone();
        for u in &uppers {
            for j in 0..k {
                upper[j] = upper[j].max(u[j]);
            }
        }
        for j in 0..k {
            upper[j] = upper[j].max(est[j]);
        }
        return SupOutcome { omega_cap, grid_step: width, samples: samples.len(), est, argmax, upper, tail };
    }
}

fn check_line(b: &CMat, alpha: f64) -> Result<()> {
    let dist = eigenvalues(b)?.into_iter().map(|z| (z.re - alpha).abs()).fold(f64::INFINITY, f64::min);
    if dist < EIGEN_LINE_TOL {
        return Err(Error::EigenvalueOnLine { alpha, distance: dist });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct LineSupEstimate {
    pub alpha: f64,
    /// Certified upper bound on `sup_ω ‖R(α + iω, B)‖`.
    pub sup_norm: f64,
    /// Largest value actually evaluated.
    pub sampled_max: f64,
    pub argmax_omega: f64,
    pub omega_cap: f64,
    pub tail_bound: f64,
    pub grid_step: f64,
    pub samples: usize,
}

pub fn line_sup_resolvent(b: &CMat, alpha: f64) -> Result<LineSupEstimate> {
    line_sup_resolvent_with(b, alpha, &SamplerConfig::default())
}

pub fn line_sup_resolvent_with(b: &CMat, alpha: f64, cfg: &SamplerConfig) -> Result<LineSupEstimate> {
    check_line(b, alpha)?;
    let n = b.nrows();
    let b_shift = spectral_norm(&(b - identity(n) * Complex64::new(alpha, 0.0)));
    let sampler = LineSampler { alpha, b, phi: None, powers: 0, dphi: 0.0 };
    let out = certified_sup(&sampler, &[0], cfg, b_shift, 0.0, spectral_norm(b));
    // golden-section polish of the best sample
    let w = out.grid_step;
    let f = |om: f64| sampler.eval(om).m;
    let (om, val) = golden_max(&f, out.argmax[0] - w, out.argmax[0] + w, 60);
    let (sampled_max, argmax) = if val > out.est[0] { (val, om) } else { (out.est[0], out.argmax[0]) };
    Ok(LineSupEstimate {
        alpha,
        sup_norm: out.upper[0].max(sampled_max),
        sampled_max,
        argmax_omega: argmax,
        omega_cap: out.omega_cap,
        tail_bound: out.tail[0],
        grid_step: out.grid_step,
        samples: out.samples + 60,
    })
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters.saturating_sub(2) {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesTestResult {
    pub alpha: f64,
    /// Certified upper bounds on `a_n`, `n = 0..=N_max`.
    pub a_n: Vec<f64>,
    /// Largest sampled values of `‖F(α + iω)ⁿ‖`.
    pub a_n_sampled: Vec<f64>,
    /// Bound on `Σ a_n`; `None` when not established.
    pub a: Option<f64>,
    pub diverged: bool,
    /// Power whose bound below 1 closes the series.
    pub n_star: Option<usize>,
    pub verdict: SeriesVerdict,
    pub omega_cap: f64,
    pub samples: usize,
}

pub fn a_n_sequence(spec: &SystemSpec, alpha: f64, n_max: usize) -> Result<SeriesTestResult> {
    a_n_sequence_with(spec, alpha, n_max, &SamplerConfig::default())
}

pub fn a_n_sequence_with(spec: &SystemSpec, alpha: f64, n_max: usize, cfg: &SamplerConfig) -> Result<SeriesTestResult> {
    let b = spec.b().as_mat();
    check_line(b, alpha)?;
    let n_max = n_max.max(1);
    let n = spec.n();
    let b_shift = spectral_norm(&(b - identity(n) * Complex64::new(alpha, 0.0)));
    let phi = spec.phi();
    let sampler = LineSampler { alpha, b, phi: Some(phi), powers: n_max, dphi: phi.derivative_bound(alpha) };
    let track: Vec<usize> = (1..=n_max).collect();
    let out = certified_sup(&sampler, &track, cfg, b_shift, phi.norm_bound(alpha), spectral_norm(b));
    let mut a_n = vec![1.0];
    a_n.extend_from_slice(&out.upper[1..]);
    let mut a_n_sampled = vec![1.0];
    a_n_sampled.extend_from_slice(&out.est[1..]);
    Ok(close_series(alpha, a_n, a_n_sampled, out.omega_cap, out.samples))
}

fn close_series(alpha: f64, a_n: Vec<f64>, a_n_sampled: Vec<f64>, omega_cap: f64, samples: usize) -> SeriesTestResult {
    let mut best: Option<(usize, f64)> = None;
    let mut partial = 0.0;
    for k in 1..a_n.len() {
        partial += a_n[k - 1];
        if a_n[k] < 1.0 {
            let bound = partial / (1.0 - a_n[k]);
            if best.is_none_or(|(_, b)| bound < b) {
                best = Some((k, bound));
            }
        }
    }
    let total: f64 = a_n.iter().sum();
    let tail_big = a_n_sampled.iter().rev().take(3).all(|&v| v >= 1.0);
    match best {
        Some((k, bound)) => SeriesTestResult {
            alpha,
            a: Some(bound.max(total)),
            a_n,
            a_n_sampled,
            diverged: false,
            n_star: Some(k),
            verdict: SeriesVerdict::Pass,
            omega_cap,
            samples,
        },
        None => SeriesTestResult {
            alpha,
            a_n,
            a_n_sampled,
            a: None,
            diverged: tail_big,
            n_star: None,
            verdict: if tail_big { SeriesVerdict::Fail } else { SeriesVerdict::Inconclusive },
            omega_cap,
            samples,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Hyperbolic,
    Inconclusive,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// `sup ‖Φ_λ‖ · sup ‖R(λ, B)‖ < 1`
    ProductBound,
    /// `sup ‖Φ_λ R(λ, B)‖ < 1`
    FirstPower,
    /// Summable `a_n`.
    Series,
    /// `r(C) · sup ‖R(iω, B)‖ < 1` for commuting `C`.
    SpectralRadius,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Constants {
    /// Certified `sup ‖R(α + iω, B)‖`.
    #[serde(rename = "M")]
    pub m: f64,
    pub phi_bound: f64,
    pub a_n: Vec<f64>,
    pub a_n_sampled: Vec<f64>,
    pub a: Option<f64>,
    pub n_star: Option<usize>,
    pub alpha: f64,
    #[serde(rename = "Omega")]
    pub omega_cap: f64,
    /// Strip `|Re λ − α| < margin` certified free of roots.
    pub margin: Option<f64>,
    pub spectral_radius_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub abscissa: Option<f64>,
    pub rightmost: Option<[f64; 2]>,
    pub roots_certified: bool,
    pub root_count: usize,
    /// No root violates the region certified by the criterion.
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub test: String,
    pub verdict: Verdict,
    pub criterion: Option<Criterion>,
    pub constants: Constants,
    pub cross_check: Option<CrossCheck>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Stable | Verdict::Hyperbolic)
    }
}

/// `1 + sup ‖dΦ_λ/dλ‖` over `α − 1 ≤ Re λ ≤ α + 1`.
fn derivative_budget(phi: &DelayOperatorSpec, alpha: f64) -> f64 {
    1.0 + phi.derivative_bound(alpha - 1.0)
}

fn run_line_tests(spec: &SystemSpec, alpha: f64, n_max: usize, cfg: &SamplerConfig, pass: Verdict, name: &str) -> Result<StabilityReport> {
    let b = spec.b().as_mat();
    let ls = line_sup_resolvent_with(b, alpha, cfg)?;
    let phi_bound = spec.phi().norm_bound(alpha);
    let m = ls.sup_norm;
    let margin = |a: f64| (1.0f64).min(1.0 / (m * a * derivative_budget(spec.phi(), alpha)));
    let mut constants = Constants { m, phi_bound, alpha, omega_cap: ls.omega_cap, ..Constants::default() };
    let report = |criterion, constants| StabilityReport {
        test: name.to_string(),
        verdict: pass,
        criterion: Some(criterion),
        constants,
        cross_check: None,
    };
    if phi_bound * m < 1.0 {
        let a = 1.0 / (1.0 - phi_bound * m);
        constants.a = Some(a);
        constants.a_n = vec![1.0, phi_bound * m];
        constants.margin = Some(margin(a));
        return Ok(report(Criterion::ProductBound, constants));
    }
    let first = a_n_sequence_with(spec, alpha, 1, cfg)?;
    constants.omega_cap = constants.omega_cap.max(first.omega_cap);
    if first.a_n[1] < 1.0 {
        let a = 1.0 / (1.0 - first.a_n[1]);
        constants.a = Some(a);
        constants.a_n = first.a_n;
        constants.a_n_sampled = first.a_n_sampled;
        constants.n_star = Some(1);
        constants.margin = Some(margin(a));
        return Ok(report(Criterion::FirstPower, constants));
    }
    let series = a_n_sequence_with(spec, alpha, n_max, cfg)?;
    constants.omega_cap = constants.omega_cap.max(series.omega_cap);
    constants.a_n = series.a_n;
    constants.a_n_sampled = series.a_n_sampled;
    constants.n_star = series.n_star;
    constants.a = series.a;
    if let (SeriesVerdict::Pass, Some(a)) = (series.verdict, series.a) {
        constants.margin = Some(margin(a));
        return Ok(report(Criterion::Series, constants));
    }
    Ok(StabilityReport { test: name.to_string(), verdict: Verdict::Inconclusive, criterion: None, constants, cross_check: None })
}

/// Hyperbolicity from the imaginary axis: a pass certifies that no root lies
/// in `|Re λ| < margin`.
pub fn hyperbolicity_test(spec: &SystemSpec) -> Result<StabilityReport> {
    hyperbolicity_test_with(spec, DEFAULT_MAX_POWER, &SamplerConfig::default())
}

pub fn hyperbolicity_test_with(spec: &SystemSpec, n_max: usize, cfg: &SamplerConfig) -> Result<StabilityReport> {
    run_line_tests(spec, 0.0, n_max, cfg, Verdict::Hyperbolic, "hyperbolicity")
}

/// Exponential stability with rate below `alpha`: a pass certifies every
/// root satisfies `Re λ < alpha`.
pub fn stability_test(spec: &SystemSpec, alpha: f64) -> Result<StabilityReport> {
    stability_test_with(spec, alpha, DEFAULT_MAX_POWER, &SamplerConfig::default())
}

pub fn stability_test_with(spec: &SystemSpec, alpha: f64, n_max: usize, cfg: &SamplerConfig) -> Result<StabilityReport> {
    let abscissa = spectral_abscissa(spec.b().as_mat())?;
    if !(alpha > abscissa && alpha <= 0.0) {
        return Err(Error::AlphaOutOfRange { alpha, abscissa });
    }
    run_line_tests(spec, alpha, n_max, cfg, Verdict::Stable, "stability")
}

/// Stability for `Φ = C δ_{-τ}` with `BC = CB` from the spectral radius of `C`.
pub fn commuting_radius_test(spec: &SystemSpec) -> Result<StabilityReport> {
    let pts = spec.phi().points();
    if pts.len() != 1 || !spec.phi().kernels().is_empty() {
        return Err(Error::InvalidSpec("commuting test needs a single point delay".into()));
    }
    let b = spec.b().as_mat();
    let c = pts[0].matrix.as_mat();
    let defect = commutator_norm(b, c);
    if defect > COMMUTE_RTOL * spectral_norm(b) * spectral_norm(c) {
        return Err(Error::NotCommuting { defect });
    }
    let abscissa = spectral_abscissa(b)?;
    if abscissa >= 0.0 {
        return Err(Error::BNotStable { abscissa });
    }
    let ls = line_sup_resolvent(b, 0.0)?;
    let m = ls.sup_norm;
    let rc = spectral_radius(c)?;
    let mut constants = Constants {
        m,
        phi_bound: spectral_norm(c),
        alpha: 0.0,
        omega_cap: ls.omega_cap,
        spectral_radius_c: Some(rc),
        ..Constants::default()
    };
    if rc * m >= 1.0 {
        return Ok(StabilityReport {
            test: "commuting-radius".into(),
            verdict: Verdict::Inconclusive,
            criterion: None,
            constants,
            cross_check: None,
        });
    }
    // a_n ≤ ‖Cⁿ‖ Mⁿ; close the series at the first power below 1
    let norms = power_norms(c, 200);
    let mut terms = vec![1.0];
    let mut a = None;
    for (k, nrm) in norms.iter().enumerate().skip(1) {
        let t = nrm * m.powi(k as i32);
        terms.push(t);
        if t < 1.0 {
            let partial: f64 = terms[..k].iter().sum();
            a = Some(partial / (1.0 - t));
            constants.n_star = Some(k);
            break;
        }
    }
    constants.a_n = terms;
    constants.a = a;
    constants.margin = a.map(|a| (1.0f64).min(1.0 / (m * a * derivative_budget(spec.phi(), 0.0))));
    Ok(StabilityReport {
        test: "commuting-radius".into(),
        verdict: Verdict::Stable,
        criterion: Some(Criterion::SpectralRadius),
        constants,
        cross_check: None,
    })
}
