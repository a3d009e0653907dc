//! Problem instances: matrices, delay operators, systems and sampled histories.
//!
//! A delay operator is a finite sum of point evaluations `Σ B_k f(h_k)` plus
//! optional matrix-valued densities `∫ K(s) f(s) ds`, all supported in
//! `[-r, 0]` where `r` is the maximal delay. Its symbol is
//! `Φ_λ = Σ e^{λ h_k} B_k + ∫ e^{λ s} K(s) ds`.

use std::ops::Deref;
use std::path::Path;

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chebyshev::{barycentric_basis, barycentric_weights, composite_gauss, CollocationGrid};
use crate::error::{Error, Result};
use crate::linalg::{c, spectral_norm, CMat, CVec, ZERO};

/// Dense square-or-rectangular complex matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(CMat);

impl ComplexMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidSpec("empty matrix".into()));
        }
        if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(Error::InvalidSpec("ragged matrix rows".into()));
        }
        Self::new(CMat::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    /// Real matrix from row slices.
    pub fn real(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().map(|&x| c(x)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn scalar(z: Complex64) -> Self {
        Self(CMat::from_element(1, 1, z))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMat::zeros(n, n))
    }

    pub fn scaled_identity(n: usize, z: Complex64) -> Self {
        Self(CMat::identity(n, n) * z)
    }

    pub fn diagonal(d: &[Complex64]) -> Self {
        let n = d.len();
        Self(CMat::from_fn(n, n, |i, j| if i == j { d[i] } else { ZERO }))
    }

    pub fn as_mat(&self) -> &CMat {
        &self.0
    }

    pub fn into_mat(self) -> CMat {
        self.0
    }

    pub fn is_square(&self) -> bool {
        self.0.nrows() == self.0.ncols()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        spectral_norm(&self.0)
    }

    fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }
}

impl Deref for ComplexMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.0.nrows())
            .map(|i| (0..self.0.ncols()).map(|j| [self.0[(i, j)].re, self.0[(i, j)].im]).collect())
            .collect();
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(de)?;
        let rows: Vec<Vec<Complex64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
            .collect();
        ComplexMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Atomic part of the delay measure: `B_k f(h_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointTerm {
    pub h: f64,
    pub matrix: ComplexMatrix,
}

/// Absolutely continuous part: `∫ K(s) f(s) ds` with `K` given by samples on
/// `nodes` and interpolated by the barycentric formula between them.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerm {
    nodes: Vec<f64>,
    samples: Vec<ComplexMatrix>,
    bary: Vec<f64>,
}

impl KernelTerm {
    pub fn new(nodes: Vec<f64>, samples: Vec<ComplexMatrix>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidSpec("kernel needs at least two nodes".into()));
        }
        if nodes.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: samples.len(),
                context: "kernel samples per node",
            });
        }
        if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("kernel nodes must be finite and strictly increasing".into()));
        }
        let n = samples[0].dim();
        if samples.iter().any(|m| !m.is_square() || m.dim() != n) {
            return Err(Error::InvalidSpec("kernel samples must be square of equal size".into()));
        }
        let bary = barycentric_weights(&nodes);
        Ok(Self { nodes, samples, bary })
    }

    /// Kernel sampled at Chebyshev–Lobatto points of `[a, b]`.
    pub fn from_fn(a: f64, b: f64, degree: usize, f: impl Fn(f64) -> CMat) -> Result<Self> {
        let g = CollocationGrid::new(b - a, degree)?;
        let nodes: Vec<f64> = g.nodes().iter().map(|s| b + s).collect();
        let samples = nodes.iter().map(|&s| ComplexMatrix::new(f(s))).collect::<Result<Vec<_>>>()?;
        Self::new(nodes, samples)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn samples(&self) -> &[ComplexMatrix] {
        &self.samples
    }

    fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn eval(&self, s: f64) -> CMat {
        let l = barycentric_basis(&self.nodes, &self.bary, s);
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (w, k) in l.iter().zip(&self.samples) {
            if *w != 0.0 {
                out += k.as_mat() * c(*w);
            }
        }
        out
    }

    /// Gauss rule on the support with `K` evaluated at its points. With
    /// `oscillation = |λ|` the panel count tracks the exponential factor.
    fn rule(&self, extra_degree: usize, oscillation: f64) -> Vec<(f64, f64, CMat)> {
        let (a, b) = self.support();
        let q = ((self.nodes.len() + extra_degree) / 2 + 2).max(16);
        let panels = 1 + (oscillation * (b - a) / 2.0).ceil() as usize;
        let (pts, wts) = composite_gauss(a, b, panels, q);
        pts.into_iter().zip(wts).map(|(s, w)| (s, w, self.eval(s))).collect()
    }

    fn weighted_norm_integral(&self, weight: impl Fn(f64) -> f64) -> f64 {
        self.rule(0, 0.0)
            .into_iter()
            .map(|(s, w, k)| w * weight(s) * spectral_norm(&k))
            .sum()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    nodes: Vec<f64>,
    samples: Vec<ComplexMatrix>,
}

impl Serialize for KernelTerm {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        KernelDoc { nodes: self.nodes.clone(), samples: self.samples.clone() }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for KernelTerm {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let doc = KernelDoc::deserialize(de)?;
        KernelTerm::new(doc.nodes, doc.samples).map_err(D::Error::custom)
    }
}

/// Delay operator `Φ` on histories over `[-r, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayOperatorSpec {
    n: usize,
    max_delay: f64,
    points: Vec<PointTerm>,
    kernels: Vec<KernelTerm>,
}

impl DelayOperatorSpec {
    pub fn new(n: usize, max_delay: f64, points: Vec<PointTerm>, kernels: Vec<KernelTerm>) -> Result<Self> {
        if !(max_delay.is_finite() && max_delay > 0.0) {
            return Err(Error::InvalidSpec(format!("max delay must be positive, got {max_delay}")));
        }
        let snap = 1e-12 * max_delay;
        let mut points = points;
        for p in &mut points {
            if !p.h.is_finite() || p.h > snap || p.h < -max_delay - snap {
                return Err(Error::DelayOutOfRange { h: p.h, max_delay });
            }
            p.h = p.h.clamp(-max_delay, 0.0);
            if !p.matrix.is_square() || p.matrix.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: p.matrix.dim(), context: "delay matrix" });
            }
        }
        for k in &kernels {
            let (a, b) = k.support();
            if a < -max_delay - snap || b > snap {
                return Err(Error::DelayOutOfRange { h: if b > snap { b } else { a }, max_delay });
            }
            if k.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: k.dim(), context: "kernel sample" });
            }
        }
        Ok(Self { n, max_delay, points, kernels })
    }

    /// The explicitly zero operator.
    pub fn zero(n: usize, max_delay: f64) -> Result<Self> {
        Self::new(n, max_delay, Vec::new(), Vec::new())
    }

    /// `C δ_{-τ}` with maximal delay `τ`.
    pub fn point_delay(matrix: ComplexMatrix, tau: f64) -> Result<Self> {
        let n = matrix.dim();
        Self::new(n, tau, vec![PointTerm { h: -tau, matrix }], Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_delay(&self) -> f64 {
        self.max_delay
    }

    pub fn points(&self) -> &[PointTerm] {
        &self.points
    }

    pub fn kernels(&self) -> &[KernelTerm] {
        &self.kernels
    }

    pub fn is_zero(&self) -> bool {
        self.points.iter().all(|p| p.matrix.iter().all(|z| *z == ZERO))
            && self.kernels.iter().all(|k| k.samples.iter().all(|m| m.iter().all(|z| *z == ZERO)))
    }

    pub fn is_real(&self) -> bool {
        self.points.iter().all(|p| p.matrix.is_real()) && self.kernels.iter().all(|k| k.samples.iter().all(ComplexMatrix::is_real))
    }

    /// Sum of two operators acting on the same state space.
    pub fn combined(&self, other: &DelayOperatorSpec) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        let mut kernels = self.kernels.clone();
        kernels.extend(other.kernels.iter().cloned());
        Self::new(self.n, self.max_delay.max(other.max_delay), points, kernels)
    }

    /// `Φ_λ = Φ(e^{λ·} x)` as a matrix.
    pub fn symbol(&self, lambda: Complex64) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for p in &self.points {
            out += p.matrix.as_mat() * (lambda * p.h).exp();
        }
        for k in &self.kernels {
            for (s, w, ks) in k.rule(0, lambda.norm()) {
                out += ks * ((lambda * s).exp() * w);
            }
        }
        out
    }

    /// `dΦ_λ/dλ = Σ h_k e^{λ h_k} B_k + ∫ s e^{λ s} K(s) ds`.
    pub fn symbol_derivative(&self, lambda: Complex64) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for p in &self.points {
            out += p.matrix.as_mat() * ((lambda * p.h).exp() * p.h);
        }
        for k in &self.kernels {
            for (s, w, ks) in k.rule(1, lambda.norm()) {
                out += ks * ((lambda * s).exp() * (w * s));
            }
        }
        out
    }

    /// Uniform bound on `‖Φ_{α+iω}‖` over `ω ∈ ℝ`.
    pub fn norm_bound(&self, alpha: f64) -> f64 {
        let pts: f64 = self.points.iter().map(|p| (alpha * p.h).exp() * p.matrix.norm()).sum();
        let ker: f64 = self.kernels.iter().map(|k| k.weighted_norm_integral(|s| (alpha * s).exp())).sum();
        pts + ker
    }

    /// Uniform bound on `‖dΦ_λ/dλ‖` along `Re λ = α`.
    pub fn derivative_bound(&self, alpha: f64) -> f64 {
        let pts: f64 = self.points.iter().map(|p| p.h.abs() * (alpha * p.h).exp() * p.matrix.norm()).sum();
        let ker: f64 = self
            .kernels
            .iter()
            .map(|k| k.weighted_norm_integral(|s| s.abs() * (alpha * s).exp()))
            .sum();
        pts + ker
    }

    /// Matrix weights `W_j` with `Φ f = Σ_j W_j f(s_j)` for the polynomial
    /// interpolant of `f` on `grid`.
    pub fn grid_functional(&self, grid: &CollocationGrid) -> Vec<CMat> {
        let mut w = vec![CMat::zeros(self.n, self.n); grid.len()];
        for p in &self.points {
            for (j, l) in grid.basis_at(p.h).into_iter().enumerate() {
                if l != 0.0 {
                    w[j] += p.matrix.as_mat() * c(l);
                }
            }
        }
        for k in &self.kernels {
            for (s, ws, ks) in k.rule(grid.degree(), 0.0) {
                for (j, l) in grid.basis_at(s).into_iter().enumerate() {
                    w[j] += &ks * c(ws * l);
                }
            }
        }
        w
    }

    /// `Φ f` for a history sampled on the canonical grid of this operator.
    pub fn apply(&self, f: &HistoryGrid) -> Result<CVec> {
        if (f.grid.r() - self.max_delay).abs() > 1e-12 * self.max_delay {
            return Err(Error::GridMismatch(format!(
                "history covers [-{}, 0], operator needs [-{}, 0]",
                f.grid.r(),
                self.max_delay
            )));
        }
        if f.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: f.dim(), context: "history values" });
        }
        let weights = self.grid_functional(&f.grid);
        let mut out = CVec::zeros(self.n);
        for (w, v) in weights.iter().zip(&f.values) {
            out += w * v;
        }
        Ok(out)
    }
}

/// Feedback data for `u'(t) = B u(t) + C u(t - τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    #[serde(rename = "C")]
    pub c: ComplexMatrix,
    pub tau: f64,
}

/// A linear delay system `u' = B u + Φ u_t`, optionally in feedback form.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    b: ComplexMatrix,
    phi: DelayOperatorSpec,
    feedback: Option<Feedback>,
}

impl SystemSpec {
    pub fn general(b: ComplexMatrix, phi: DelayOperatorSpec) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::InvalidSpec("B must be square".into()));
        }
        if phi.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: b.dim(), found: phi.dim(), context: "delay operator" });
        }
        Ok(Self { b, phi, feedback: None })
    }

    /// `u'(t) = B u(t) + C u(t - τ)`; the delay operator is `C δ_{-τ}`.
    pub fn feedback(b: ComplexMatrix, c: ComplexMatrix, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidSpec(format!("feedback delay must be positive, got {tau}")));
        }
        if !b.is_square() || !c.is_square() || b.dim() != c.dim() {
            return Err(Error::DimensionMismatch { expected: b.dim(), found: c.dim(), context: "feedback matrix C" });
        }
        let phi = DelayOperatorSpec::point_delay(c.clone(), tau)?;
        Ok(Self { b, phi, feedback: Some(Feedback { c, tau }) })
    }

    /// Same feedback pair with a different delay.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        match &self.feedback {
            Some(fb) => Self::feedback(self.b.clone(), fb.c.clone(), tau),
            None => Err(Error::InvalidSpec("not a feedback system".into())),
        }
    }

    pub fn n(&self) -> usize {
        self.b.dim()
    }

    pub fn b(&self) -> &ComplexMatrix {
        &self.b
    }

    pub fn phi(&self) -> &DelayOperatorSpec {
        &self.phi
    }

    pub fn feedback_data(&self) -> Option<&Feedback> {
        self.feedback.as_ref()
    }

    pub fn max_delay(&self) -> f64 {
        self.phi.max_delay()
    }

    /// True when all data are real, so the root set is conjugation invariant.
    pub fn is_real(&self) -> bool {
        self.b.is_real() && self.phi.is_real()
    }

    /// Bound on `|λ|` for characteristic roots with `Re λ ≥ alpha`.
    pub fn root_modulus_bound(&self, alpha: f64) -> f64 {
        self.b.norm() + self.phi.norm_bound(alpha)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: SpecDocument = serde_json::from_str(s)?;
        doc.into_spec()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }

    pub fn to_document(&self) -> SpecDocument {
        match &self.feedback {
            Some(fb) => SpecDocument {
                n: self.n(),
                b: self.b.clone(),
                delay_ops: Vec::new(),
                kernel: None,
                max_delay: None,
                feedback: Some(fb.clone()),
            },
            None => SpecDocument {
                n: self.n(),
                b: self.b.clone(),
                delay_ops: self.phi.points.clone(),
                kernel: if self.phi.kernels.is_empty() { None } else { Some(self.phi.kernels.clone()) },
                max_delay: Some(self.phi.max_delay),
                feedback: None,
            },
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("spec serialization")
    }
}

/// JSON document for a system. Complex numbers are `[re, im]` pairs and
/// matrices are arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub n: usize,
    #[serde(rename = "B")]
    pub b: ComplexMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delay_ops: Vec<PointTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<KernelTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
}

impl SpecDocument {
    pub fn into_spec(self) -> Result<SystemSpec> {
        if self.b.dim() != self.n || !self.b.is_square() {
            return Err(Error::DimensionMismatch { expected: self.n, found: self.b.dim(), context: "B" });
        }
        let kernels = self.kernel.unwrap_or_default();
        if let Some(fb) = self.feedback {
            if !self.delay_ops.is_empty() || !kernels.is_empty() || self.max_delay.is_some() {
                return Err(Error::InvalidSpec(
                    "feedback systems derive their delay operator; drop delay_ops/kernel/max_delay".into(),
                ));
            }
            return SystemSpec::feedback(self.b, fb.c, fb.tau);
        }
        let natural = self
            .delay_ops
            .iter()
            .map(|p| -p.h)
            .chain(kernels.iter().map(|k| -k.support().0))
            .fold(0.0, f64::max);
        let r = match self.max_delay {
            Some(r) => r,
            None if natural > 0.0 => natural,
            None => 1.0,
        };
        let phi = DelayOperatorSpec::new(self.n, r, self.delay_ops, kernels)?;
        SystemSpec::general(self.b, phi)
    }
}

/// A history `f: [-r, 0] → ℂⁿ` sampled on the collocation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryGrid {
    grid: CollocationGrid,
    values: Vec<CVec>,
}

impl HistoryGrid {
    pub fn new(grid: CollocationGrid, values: Vec<CVec>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len(), context: "history nodes" });
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidSpec("history values must share one dimension".into()));
        }
        if values.iter().any(|v| v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))) {
            return Err(Error::NonFinite("history"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: CollocationGrid, f: impl Fn(f64) -> CVec) -> Result<Self> {
        let values = grid.nodes().iter().map(|&s| f(s)).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: CollocationGrid, x: &CVec) -> Self {
        let values = vec![x.clone(); grid.len()];
        Self { grid, values }
    }

    pub fn zeros(grid: CollocationGrid, n: usize) -> Self {
        Self::constant(grid, &CVec::zeros(n))
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn values(&self) -> &[CVec] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn r(&self) -> f64 {
        self.grid.r()
    }

    /// Value at `s = 0`.
    pub fn head(&self) -> &CVec {
        self.values.last().unwrap()
    }

    /// Polynomial interpolant evaluated at `s ∈ [-r, 0]`.
    pub fn value_at(&self, s: f64) -> CVec {
        let l = self.grid.basis_at(s);
        let mut out = CVec::zeros(self.dim());
        for (w, v) in l.iter().zip(&self.values) {
            if *w != 0.0 {
                out += v * c(*w);
            }
        }
        out
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64, &CVec) -> CVec) -> Self {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&s, v)| f(s, v)).collect();
        Self { grid: self.grid.clone(), values }
    }

    /// `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: Complex64, other: &HistoryGrid, b: Complex64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) || self.dim() != other.dim() {
            return Err(Error::GridMismatch("histories live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x * a + y * b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Node values as an `(N+1) × n` matrix.
    pub(crate) fn as_node_matrix(&self) -> CMat {
        CMat::from_fn(self.values.len(), self.dim(), |i, j| self.values[i][j])
    }

    pub(crate) fn from_node_matrix(grid: CollocationGrid, m: &CMat) -> Self {
        let values = (0..m.nrows()).map(|i| m.row(i).transpose()).collect();
        Self { grid, values }
    }
}

/// The exponential history `s ↦ e^{λ s} x` on `grid`.
pub fn eval_epsilon_lambda(lambda: Complex64, x: &CVec, grid: &CollocationGrid) -> HistoryGrid {
    HistoryGrid {
        grid: grid.clone(),
        values: grid.nodes().iter().map(|&s| x * (lambda * s).exp()).collect(),
    }
}
