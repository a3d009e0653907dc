//! Chebyshev–Gauss–Lobatto collocation on `[-r, 0]`: nodes, barycentric
//! interpolation, the first-derivative matrix and Clenshaw–Curtis weights.
//! Also Gauss–Legendre rules used for kernel integrals.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 32;

/// Collocation grid of `degree + 1` Chebyshev–Lobatto points on `[-r, 0]`,
/// stored in increasing order so that `nodes[0] = -r` and `nodes[degree] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    r: f64,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl CollocationGrid {
    pub fn new(r: f64, degree: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidSpec(format!("max delay must be positive, got {r}")));
        }
        if degree < 1 {
            return Err(Error::Config("collocation degree must be at least 1".into()));
        }
        let n = degree as f64;
        let mut nodes: Vec<f64> = (0..=degree)
            .map(|i| {
                // sin form keeps the points exactly symmetric
                let x = (PI * (2.0 * i as f64 - n) / (2.0 * n)).sin();
                0.5 * r * (x - 1.0)
            })
            .collect();
        nodes[0] = -r;
        nodes[degree] = 0.0;
        let bary = (0..=degree)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                if i == 0 || i == degree {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { r, nodes, bary })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn same_as(&self, other: &CollocationGrid) -> bool {
        self.nodes.len() == other.nodes.len()
            && (self.r - other.r).abs() <= 1e-12 * self.r.max(other.r)
    }

    /// Lagrange basis values `l_j(s)` for all nodes `j`.
    pub fn basis_at(&self, s: f64) -> Vec<f64> {
        barycentric_basis(&self.nodes, &self.bary, s)
    }

    /// Barycentric derivative matrix on the grid (acts on node values).
    pub fn diff_matrix(&self) -> DMatrix<f64> {
        diff_matrix(&self.nodes, &self.bary)
    }

    /// Clenshaw–Curtis weights for `∫_{-r}^0`.
    pub fn clenshaw_curtis(&self) -> Vec<f64> {
        clenshaw_curtis(self.degree())
            .into_iter()
            .map(|w| 0.5 * self.r * w)
            .collect()
    }
}

/// Barycentric weights for arbitrary distinct nodes, normalized to unit max.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let a = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let b = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (b - a).max(f64::MIN_POSITIVE);
    let mid = 0.5 * (a + b);
    let x: Vec<f64> = nodes.iter().map(|&s| (s - mid) / half).collect();
    let mut w: Vec<f64> = (0..x.len())
        .map(|j| {
            let mut p = 1.0;
            for k in 0..x.len() {
                if k != j {
                    p *= x[j] - x[k];
                }
            }
            1.0 / p
        })
        .collect();
    let m = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if m > 0.0 {
        w.iter_mut().for_each(|v| *v /= m);
    }
    w
}

pub(crate) fn barycentric_basis(nodes: &[f64], bary: &[f64], s: f64) -> Vec<f64> {
    let mut out = vec![0.0; nodes.len()];
    if let Some(j) = nodes.iter().position(|&x| x == s) {
        out[j] = 1.0;
        return out;
    }
    let mut denom = 0.0;
    for j in 0..nodes.len() {
        let t = bary[j] / (s - nodes[j]);
        out[j] = t;
        denom += t;
    }
    out.iter_mut().for_each(|v| *v /= denom);
    out
}

pub(crate) fn diff_matrix(nodes: &[f64], bary: &[f64]) -> DMatrix<f64> {
    let m = nodes.len();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the `degree + 1` Lobatto points.
pub fn clenshaw_curtis(degree: usize) -> Vec<f64> {
    let n = degree;
    let mut w = vec![0.0; n + 1];
    if n == 1 {
        return vec![1.0, 1.0];
    }
    let nf = n as f64;
    for (k, wk) in w.iter_mut().enumerate() {
        let theta = k as f64 * PI / nf;
        let mut v = 1.0;
        let half = n / 2;
        for j in 1..=half {
            let b = if 2 * j == n { 1.0 } else { 2.0 };
            v -= b * (2.0 * j as f64 * theta).cos() / (4.0 * (j * j) as f64 - 1.0);
        }
        let ck = if k == 0 || k == n { 1.0 } else { 2.0 };
        *wk = ck * v / nf;
    }
    w
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    let qf = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = qf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[q - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]` as (points, weights).
pub fn composite_gauss(a: f64, b: f64, panels: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(q);
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut pts = Vec::with_capacity(panels * q);
    let mut wts = Vec::with_capacity(panels * q);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for k in 0..q {
            pts.push(lo + 0.5 * h * (x[k] + 1.0));
            wts.push(0.5 * h * w[k]);
        }
    }
    (pts, wts)
}
