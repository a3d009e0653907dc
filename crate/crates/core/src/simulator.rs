//! Time-domain integration of `u'(t) = B u(t) + Φ u_t` by classical RK4 on a
//! step that divides every point delay, and empirical decay rates.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chebyshev::CollocationGrid;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::model::{HistoryGrid, SystemSpec};

pub const BLOW_UP_NORM: f64 = 1e12;
pub const MIN_FIT_SAMPLES: usize = 100;
pub const STEP_HALVING_TOL: f64 = 1e-3;
const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Trajectory {
    n: usize,
    h: f64,
    times: Vec<f64>,
    data: Vec<Complex64>,
    history: HistoryGrid,
    diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> CVec {
        CVec::from_column_slice(&self.data[i * self.n..(i + 1) * self.n])
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.data[i * self.n..(i + 1) * self.n].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn history(&self) -> &HistoryGrid {
        &self.history
    }

    /// Integration stopped early because `‖u‖` exceeded the blow-up threshold.
    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Rows `t, re(u₁), im(u₁), …, norm`, keeping every `stride`-th sample.
    pub fn to_csv(&self, stride: usize) -> String {
        let stride = stride.max(1);
        let mut out = String::from("t");
        for k in 1..=self.n {
            out.push_str(&format!(",re_u{k},im_u{k}"));
        }
        out.push_str(",norm\n");
        let last = self.len().saturating_sub(1);
        for i in (0..self.len()).filter(|&i| i % stride == 0 || i == last) {
            out.push_str(&format!("{:.12e}", self.times[i]));
            for z in &self.data[i * self.n..(i + 1) * self.n] {
                out.push_str(&format!(",{:.12e},{:.12e}", z.re, z.im));
            }
            out.push_str(&format!(",{:.12e}\n", self.norm(i)));
        }
        out
    }
}

struct Stepper<'a> {
    spec: &'a SystemSpec,
    history: &'a HistoryGrid,
    n: usize,
    h: f64,
    states: Vec<Complex64>,
    derivs: Vec<Complex64>,
    kernels: Vec<(Vec<f64>, Vec<f64>, Vec<CMat>)>,
}

impl<'a> Stepper<'a> {
    fn stored(&self, buf: &[Complex64], i: usize) -> CVec {
        CVec::from_column_slice(&buf[i * self.n..(i + 1) * self.n])
    }

    /// `u(q)` for `q` up to the current stage time; `stage` is `(t_n, t_stage, U_stage)`.
    fn value(&self, q: f64, stage: (usize, f64, &CVec)) -> CVec {
        let (cur, t_stage, u_stage) = stage;
        if q <= 0.0 {
            return self.history.value_at(q.max(-self.history.r()));
        }
        let t_cur = cur as f64 * self.h;
        if q > t_cur + 1e-9 * self.h {
            let span = t_stage - t_cur;
            if span <= 0.0 {
                return self.stored(&self.states, cur);
            }
            let w = ((q - t_cur) / span).clamp(0.0, 1.0);
            return self.stored(&self.states, cur) * Complex64::new(1.0 - w, 0.0) + u_stage * Complex64::new(w, 0.0);
        }
        let x = q / self.h;
        let i = x.round();
        if (x - i).abs() < 1e-9 {
            return self.stored(&self.states, (i as usize).min(cur));
        }
        let i0 = (x.floor() as usize).min(cur.saturating_sub(1));
        let th = x - i0 as f64;
        if self.derivs.len() < (i0 + 2) * self.n {
            let (u0, u1) = (self.stored(&self.states, i0), self.stored(&self.states, i0 + 1));
            let d0 = self.stored(&self.derivs, i0) * Complex64::new(self.h, 0.0);
            return &u0 + &d0 * Complex64::new(th, 0.0) + (u1 - &u0 - d0) * Complex64::new(th * th, 0.0);
        }
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th),
            th * (1.0 - th) * (1.0 - th),
            th * th * (3.0 - 2.0 * th),
            th * th * (th - 1.0),
        );
        self.stored(&self.states, i0) * Complex64::new(h00, 0.0)
            + self.stored(&self.derivs, i0) * Complex64::new(h10 * self.h, 0.0)
            + self.stored(&self.states, i0 + 1) * Complex64::new(h01, 0.0)
            + self.stored(&self.derivs, i0 + 1) * Complex64::new(h11 * self.h, 0.0)
    }

    fn rhs(&self, cur: usize, t: f64, u: &CVec) -> CVec {
        let stage = (cur, t, u);
        let mut out = self.spec.b().as_mat() * u;
        for term in self.spec.phi().points() {
            if term.h == 0.0 {
                out += term.matrix.as_mat() * u;
            } else {
                out += term.matrix.as_mat() * self.value(t + term.h, stage);
            }
        }
        for (sig, w, k) in &self.kernels {
            for j in 0..sig.len() {
                out += &k[j] * self.value(t + sig[j], stage) * Complex64::new(w[j], 0.0);
            }
        }
        out
    }
}

fn check_alignment(spec: &SystemSpec, h: f64) -> Result<()> {
    for term in spec.phi().points() {
        let d = term.h.abs();
        if d == 0.0 {
            continue;
        }
        let m = (d / h).round();
        if m < 1.0 || (d - m * h).abs() > ALIGN_TOL * d.max(1.0) * (1.0 + m) {
            let suggested = d / (d / h).ceil().max(1.0);
            return Err(Error::MisalignedDelay { delay: term.h, step: h, suggested });
        }
    }
    Ok(())
}

/// Largest step `≤ target` dividing every nonzero point delay,
/// checked against every other delay.
pub fn aligned_step(spec: &SystemSpec, target: f64) -> Result<f64> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {target}")));
    }
    let r = spec.max_delay();
    let target = target.min(r / 4.0);
    let delays: Vec<f64> = spec.phi().points().iter().map(|p| p.h.abs()).filter(|&d| d > 0.0).collect();
    let base = common_divisor(&delays).unwrap_or(r);
    let h = base / (base / target).ceil();
    check_alignment(spec, h)?;
    Ok(h)
}

/// Largest `d_min / k`, `k ≤ 1024`, of which every delay is an integer multiple.
fn common_divisor(delays: &[f64]) -> Option<f64> {
    let d_min = delays.iter().copied().fold(f64::INFINITY, f64::min);
    if !d_min.is_finite() {
        return None;
    }
    (1..=1024).map(|k| d_min / k as f64).find(|&q| {
        delays.iter().all(|&d| {
            let m = d / q;
            (m - m.round()).abs() <= 1e-9 * m.max(1.0)
        })
    })
}

/// A step resolving the fastest scale of the system, aligned to its delays.
pub fn default_step(spec: &SystemSpec) -> Result<f64> {
    let scale = spec.b().norm() + spec.phi().norm_bound(0.0) + 1.0;
    aligned_step(spec, 0.05 / scale)
}

/// `20/|rate|` clamped to `[10, 200]`.
pub fn default_horizon(expected_rate: Option<f64>) -> f64 {
    match expected_rate {
        Some(a) if a != 0.0 && a.is_finite() => (20.0 / a.abs()).clamp(10.0, 200.0),
        Some(_) => 200.0,
        None => 50.0,
    }
}

/// RK4 on `[0, T]` from `history`, with delayed values read from stored states.
pub fn integrate(spec: &SystemSpec, history: &HistoryGrid, t_final: f64, h: f64) -> Result<Trajectory> {
    let n = spec.n();
    if history.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: history.dim(), context: "initial history" });
    }
    let r = spec.max_delay();
    if (history.r() - r).abs() > 1e-12 * r.max(1.0) {
        return Err(Error::GridMismatch(format!("history covers [-{}, 0] but the system needs [-{r}, 0]", history.r())));
    }
    if !(h.is_finite() && h > 0.0 && t_final.is_finite() && t_final > 0.0) {
        return Err(Error::Config(format!("need positive step and horizon (h = {h}, T = {t_final})")));
    }
    if h > r / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!("step {h} exceeds a quarter of the history length {r}")));
    }
    check_alignment(spec, h)?;
    let kernels = spec
        .phi()
        .kernels()
        .iter()
        .map(|k| {
            let (a, b) = k.support();
            let m = (((b - a) / h).ceil() as usize).max(1);
            let hs = (b - a) / m as f64;
            let sig: Vec<f64> = (0..=m).map(|j| a + j as f64 * hs).collect();
            let w: Vec<f64> = (0..=m).map(|j| if j == 0 || j == m { 0.5 * hs } else { hs }).collect();
            let mats = sig.iter().map(|&s| k.eval(s)).collect();
            (sig, w, mats)
        })
        .collect();
    let steps = (t_final / h - 1e-9).ceil().max(1.0) as usize;
    let mut st = Stepper {
        spec,
        history,
        n,
        h,
        states: Vec::with_capacity((steps + 1) * n),
        derivs: Vec::with_capacity((steps + 1) * n),
        kernels,
    };
    st.states.extend(history.head().iter().copied());
    let mut times = vec![0.0];
    let mut diverged = false;
    let half = Complex64::new(0.5 * h, 0.0);
    let full = Complex64::new(h, 0.0);
    let sixth = Complex64::new(h / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    for i in 0..steps {
        let t = i as f64 * h;
        let u = st.stored(&st.states, i);
        let k1 = st.rhs(i, t, &u);
        st.derivs.extend(k1.iter().copied());
        let u2 = &u + &k1 * half;
        let k2 = st.rhs(i, t + 0.5 * h, &u2);
        let u3 = &u + &k2 * half;
        let k3 = st.rhs(i, t + 0.5 * h, &u3);
        let u4 = &u + &k3 * full;
        let k4 = st.rhs(i, t + h, &u4);
        let next: DVector<Complex64> = &u + (k1 + &k2 * two + &k3 * two + k4) * sixth;
        let norm = next.norm();
        st.states.extend(next.iter().copied());
        times.push((i + 1) as f64 * h);
        if !norm.is_finite() || norm > BLOW_UP_NORM {
            diverged = true;
            break;
        }
    }
    Ok(Trajectory { n, h, times, data: st.states, history: history.clone(), diverged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares slope of `log‖u(t)‖` over `[T/2, T]`.
pub fn decay_rate(traj: &Trajectory) -> Result<DecayEstimate> {
    if traj.len() < MIN_FIT_SAMPLES {
        return Err(Error::Config(format!("trajectory has {} samples; at least {MIN_FIT_SAMPLES} are needed", traj.len())));
    }
    let t_end = traj.final_time();
    let lo = 0.5 * t_end;
    let pts: Vec<(f64, f64)> = (0..traj.len())
        .filter(|&i| traj.times[i] >= lo)
        .filter_map(|i| {
            let v = traj.norm(i);
            (v > 0.0).then(|| (traj.times[i], v.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateTrajectory);
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ym).powi(2)).sum();
    let rate = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayEstimate { rate, r_squared, window: (lo, t_end), samples: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergedDecay {
    pub estimate: DecayEstimate,
    /// Rate from the run at half the final step.
    pub rate_half_step: f64,
    pub step: f64,
    pub converged: bool,
    pub diverged: bool,
}

/// Decay rate accepted once runs at `h` and `h/2` agree to `STEP_HALVING_TOL`,
/// halving up to four times.
pub fn estimate_decay(spec: &SystemSpec, history: &HistoryGrid, t_final: f64, h: f64) -> Result<ConvergedDecay> {
    let mut h = h;
    let run = |h: f64| -> Result<(DecayEstimate, bool)> {
        let tr = integrate(spec, history, t_final, h)?;
        Ok((decay_rate(&tr)?, tr.diverged()))
    };
    let mut coarse = run(h)?;
    for _ in 0..4 {
        let fine = run(0.5 * h)?;
        let converged = (fine.0.rate - coarse.0.rate).abs() < STEP_HALVING_TOL;
        if converged || fine.1 || coarse.1 {
            return Ok(ConvergedDecay {
                estimate: coarse.0,
                rate_half_step: fine.0.rate,
                step: h,
                converged,
                diverged: coarse.1 || fine.1,
            });
        }
        h *= 0.5;
        coarse = fine;
    }
    let fine = run(0.5 * h)?;
    Ok(ConvergedDecay {
        estimate: coarse.0,
        rate_half_step: fine.0.rate,
        step: h,
        converged: (fine.0.rate - coarse.0.rate).abs() < STEP_HALVING_TOL,
        diverged: coarse.1 || fine.1,
    })
}

/// Smooth complex history: random Chebyshev series of degree 4 per component.
pub fn random_history(r: f64, n: usize, seed: u64) -> Result<HistoryGrid> {
    let grid = CollocationGrid::new(r, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Vec<Complex64>> = (0..n)
        .map(|_| (0..5).map(|k| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (1.0 + k as f64)).collect())
        .collect();
    HistoryGrid::from_fn(grid, |s| {
        let x = 2.0 * s / r + 1.0;
        CVec::from_iterator(
            n,
            coeffs.iter().map(|cs| {
                let (mut t0, mut t1) = (1.0, x);
                let mut acc = cs[0] * t0 + cs[1] * t1;
                for ck in &cs[2..] {
                    let t2 = 2.0 * x * t1 - t0;
                    acc += ck * t2;
                    t0 = t1;
                    t1 = t2;
                }
                acc
            }),
        )
    })
}
