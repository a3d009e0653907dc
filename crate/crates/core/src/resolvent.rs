//! Characteristic matrix `Δ(λ) = λI − B − Φ_λ` and the block resolvent of the
//! delay generator acting on pairs `(x, f) ∈ ℂⁿ × histories`.

use num_complex::Complex64;
use serde::Serialize;

use crate::chebyshev::CollocationGrid;
use crate::error::{Error, Result};
use crate::linalg::{identity, inverse, singular_extremes, solve, spectral_norm, CMat, CVec};
use crate::model::{eval_epsilon_lambda, DelayOperatorSpec, HistoryGrid, SystemSpec};

/// Relative rank threshold on `σ_min(Δ)` against the size of its summands.
pub const SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CharMatrix {
    pub lambda: Complex64,
    pub delta: CMat,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `|λ| + ‖B‖ + ‖Φ_λ‖`, the magnitude against which rank is judged.
    pub scale: f64,
}

impl CharMatrix {
    pub fn condition(&self) -> f64 {
        if self.sigma_min == 0.0 {
            f64::INFINITY
        } else {
            self.sigma_max / self.sigma_min
        }
    }

    pub fn is_singular(&self) -> bool {
        self.sigma_min < SINGULAR_RTOL * self.scale.max(self.sigma_max).max(f64::MIN_POSITIVE)
    }
}

pub fn delta_matrix(spec: &SystemSpec, lambda: Complex64) -> CMat {
    identity(spec.n()) * lambda - spec.b().as_mat() - spec.phi().symbol(lambda)
}

/// `Δ'(λ) = I − dΦ_λ/dλ`.
pub fn delta_derivative(spec: &SystemSpec, lambda: Complex64) -> CMat {
    identity(spec.n()) - spec.phi().symbol_derivative(lambda)
}

pub fn char_matrix(spec: &SystemSpec, lambda: Complex64) -> CharMatrix {
    let sym = spec.phi().symbol(lambda);
    let delta = identity(spec.n()) * lambda - spec.b().as_mat() - &sym;
    let (sigma_max, sigma_min) = singular_extremes(&delta);
    let scale = lambda.norm() + spec.b().norm() + spectral_norm(&sym);
    CharMatrix { lambda, delta, sigma_max, sigma_min, scale }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub in_resolvent_set: bool,
    /// Smallest singular value of `Δ(λ)`.
    pub margin: f64,
}

pub fn in_resolvent_set(spec: &SystemSpec, lambda: Complex64) -> Membership {
    let cm = char_matrix(spec, lambda);
    Membership { in_resolvent_set: !cm.is_singular(), margin: cm.sigma_min }
}

/// Resolvent of the shift generator with zero boundary value: solves
/// `λg − g' = f`, `g(0) = 0` by collocation on the grid of `f`.
pub fn resolvent_a0(lambda: Complex64, f: &HistoryGrid) -> HistoryGrid {
    let grid = f.grid().clone();
    let m = grid.len();
    let d = grid.diff_matrix();
    // unknowns g_0..g_{m-2}; g_{m-1} = 0
    let k = m - 1;
    let a = CMat::from_fn(k, k, |i, j| {
        let v = Complex64::new(-d[(i, j)], 0.0);
        if i == j {
            v + lambda
        } else {
            v
        }
    });
    let fm = f.as_node_matrix();
    let rhs = fm.rows(0, k).into_owned();
    let sol = solve(&a, &rhs).expect("shift resolvent system is nonsingular for collocation grids");
    let mut g = CMat::zeros(m, f.dim());
    g.rows_mut(0, k).copy_from(&sol);
    HistoryGrid::from_node_matrix(grid, &g)
}

/// Block resolvent at a point of the resolvent set.
#[derive(Debug, Clone)]
pub struct ResolventBlocks {
    lambda: Complex64,
    r11: CMat,
    phi: DelayOperatorSpec,
}

pub fn resolvent_blocks(spec: &SystemSpec, lambda: Complex64) -> Result<ResolventBlocks> {
    let cm = char_matrix(spec, lambda);
    if cm.is_singular() {
        return Err(Error::SingularCharacteristicMatrix { lambda, sigma_min: cm.sigma_min });
    }
    let r11 = inverse(&cm.delta).ok_or(Error::SingularCharacteristicMatrix { lambda, sigma_min: 0.0 })?;
    Ok(ResolventBlocks { lambda, r11, phi: spec.phi().clone() })
}

impl ResolventBlocks {
    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// `Δ(λ)⁻¹`.
    pub fn r11(&self) -> &CMat {
        &self.r11
    }

    /// `Δ⁻¹ Φ R(λ, A₀) f`.
    pub fn r12(&self, f: &HistoryGrid) -> Result<CVec> {
        let g = resolvent_a0(self.lambda, f);
        Ok(&self.r11 * self.phi.apply(&g)?)
    }

    /// `s ↦ e^{λs} Δ⁻¹ x` on `grid`.
    pub fn r21(&self, x: &CVec, grid: &CollocationGrid) -> HistoryGrid {
        eval_epsilon_lambda(self.lambda, &(&self.r11 * x), grid)
    }

    /// `e^{λ·} Δ⁻¹ Φ R(λ, A₀) f + R(λ, A₀) f`.
    pub fn r22(&self, f: &HistoryGrid) -> Result<HistoryGrid> {
        let g = resolvent_a0(self.lambda, f);
        let y = &self.r11 * self.phi.apply(&g)?;
        eval_epsilon_lambda(self.lambda, &y, f.grid()).combine(Complex64::new(1.0, 0.0), &g, Complex64::new(1.0, 0.0))
    }

    /// Full action on `(x, f)`.
    pub fn apply(&self, x: &CVec, f: &HistoryGrid) -> Result<(CVec, HistoryGrid)> {
        let g = resolvent_a0(self.lambda, f);
        let y = &self.r11 * (x + self.phi.apply(&g)?);
        let hist = eval_epsilon_lambda(self.lambda, &y, f.grid()).combine(Complex64::new(1.0, 0.0), &g, Complex64::new(1.0, 0.0))?;
        Ok((y, hist))
    }
}
