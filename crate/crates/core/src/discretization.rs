//! Uniform grids, quadrature weights, finite differences and mollifier kernels.
//!
//! Every other module works on a single [`Grid1D`] and its N-fold tensor
//! power. Quadrature weights are carried by the grid so that all discrete
//! integrals in the crate share one rule.

use std::ops::{Mul, Sub};

use crate::error::{invalid, Result};

/// Gregory end-correction coefficients (1/12, 1/24, 19/720, ...).
const GREGORY: [f64; 6] = [
    1.0 / 12.0,
    1.0 / 24.0,
    19.0 / 720.0,
    3.0 / 160.0,
    863.0 / 60480.0,
    275.0 / 24192.0,
];

/// Quadrature rule attached to a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    /// Composite trapezoid rule: weight `h`, endpoints `h/2`.
    #[default]
    Trapezoid,
    /// Trapezoid rule with six Gregory end corrections. Exact for
    /// polynomials up to degree six; all weights stay positive.
    Gregory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    rule: QuadratureRule,
    weights: Vec<f64>,
}

impl Grid1D {
    /// Uniform trapezoid grid with `n` nodes on `[a, b]`.
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::with_rule(a, b, n, QuadratureRule::Trapezoid)
    }

    pub fn with_rule(a: f64, b: f64, n: usize, rule: QuadratureRule) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("grid needs at least 2 nodes, got {n}")));
        }
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(invalid(format!("grid interval must satisfy a < b, got [{a}, {b}]")));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        if rule == QuadratureRule::Gregory {
            let order = GREGORY.len();
            if n < 2 * (order + 1) {
                return Err(invalid(format!(
                    "Gregory quadrature needs at least {} nodes, got {n}",
                    2 * (order + 1)
                )));
            }
            for j in 0..=order {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let corr: f64 = (j.max(1)..=order)
                    .map(|k| GREGORY[k - 1] * binomial(k, j) as f64)
                    .sum();
                weights[j] -= h * sign * corr;
                weights[n - 1 - j] -= h * sign * corr;
            }
        }
        Ok(Self { a, b, n, h, rule, weights })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn left(&self) -> f64 {
        self.a
    }

    pub fn right(&self) -> f64 {
        self.b
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Quadrature of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.n == other.n
            && self.rule == other.rule
            && (self.a - other.a).abs() <= 1e-14 * (1.0 + self.a.abs())
            && (self.b - other.b).abs() <= 1e-14 * (1.0 + self.b.abs())
    }
}

/// Shorthand for [`Grid1D::new`].
pub fn make_grid(a: f64, b: f64, n: usize) -> Result<Grid1D> {
    Grid1D::new(a, b, n)
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Centered differences in the interior, one-sided at the two ends.
pub fn gradient_fd(grid: &Grid1D, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != grid.len() {
        return Err(invalid(format!(
            "gradient_fd: {} values on a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    let mut out = vec![0.0; values.len()];
    difference_into(values, grid.spacing(), &mut out);
    Ok(out)
}

/// Same stencil as [`gradient_fd`] for any vector-space-like element type.
pub(crate) fn difference_into<T>(values: &[T], h: f64, out: &mut [T])
where
    T: Copy + Sub<Output = T> + Mul<f64, Output = T>,
{
    let n = values.len();
    debug_assert!(n >= 2 && out.len() == n);
    out[0] = (values[1] - values[0]) * (1.0 / h);
    out[n - 1] = (values[n - 1] - values[n - 2]) * (1.0 / h);
    let inv = 0.5 / h;
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) * inv;
    }
}

/// Discrete Gaussian approximate identity of width `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    epsilon: f64,
    h: f64,
    /// Weights for offsets `-radius..=radius`.
    weights: Vec<f64>,
}

impl MollifierKernel {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn radius(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at signed node offset `k`; zero outside the support.
    pub fn weight_at(&self, k: isize) -> f64 {
        let r = self.radius() as isize;
        if k.abs() > r {
            0.0
        } else {
            self.weights[(k + r) as usize]
        }
    }

    /// Column-stochastic smoothing matrix on `grid`: entry `[i][j]` is the
    /// share of node `j`'s mass sent to node `i`. Columns are renormalized
    /// so that truncation at the grid boundary loses no mass.
    pub fn smoothing_matrix(&self, grid: &Grid1D) -> Vec<Vec<f64>> {
        let n = grid.len();
        let mut s = vec![vec![0.0; n]; n];
        for j in 0..n {
            let total: f64 = (0..n).map(|i| self.weight_at(i as isize - j as isize)).sum();
            for (i, row) in s.iter_mut().enumerate() {
                row[j] = self.weight_at(i as isize - j as isize) / total;
            }
        }
        s
    }
}

/// Gaussian `exp(-(x/eps)^2)` sampled at multiples of the grid spacing,
/// truncated at `6 eps` and renormalized to unit sum.
pub fn gaussian_mollifier(epsilon: f64, grid: &Grid1D) -> Result<MollifierKernel> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("mollifier width must be positive, got {epsilon}")));
    }
    let h = grid.spacing();
    let cutoff = 6.0 * epsilon;
    let radius = ((cutoff / h) * (1.0 + 1e-12)).floor() as usize;
    let radius = radius.min(grid.len() - 1);
    let raw: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|k| {
            let x = k as f64 * h / epsilon;
            (-x * x).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    Ok(MollifierKernel { epsilon, h, weights })
}
