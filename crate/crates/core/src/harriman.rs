//! Explicit orthonormal orbitals with a prescribed density.
//!
//! The standard monotone map `T = F^{-1}`, `F(y) = ∫_a^y v`, pushes Lebesgue
//! measure on `[0, 1]` to `v`. Composition with `F` followed by
//! multiplication with `sqrt(v)` (the lift `L`) is unitary from `L^2(0, 1)`
//! to `L^2(v)`-weighted functions, so the Fourier modes on `[0, 1]` lift to
//! orthonormal orbitals whose squared moduli all equal `v`.
//!
//! Orbitals are evaluated through `F` directly. `T` is only needed when a
//! caller wants to go back from `[0, 1]` to the physical grid.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{gradient_fd, Grid1D};
use crate::error::{invalid, LabError, Result};
use crate::plan::MarginalDensity;

/// Cumulative distribution `F` of a density on the grid, with its
/// generalized inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap {
    grid: Grid1D,
    cumulative: Vec<f64>,
}

impl MonotoneMap {
    /// `F` from nodal values of a nonnegative function, rescaled so that
    /// `F(b) = 1`. Cumulative trapezoid, hence exact for piecewise linear `v`.
    pub fn from_density_values(grid: &Grid1D, v: &[f64]) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(invalid("density length does not match grid"));
        }
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("density values must be finite and nonnegative"));
        }
        let h = grid.spacing();
        let mut cumulative = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for pair in v.windows(2) {
            acc += 0.5 * h * (pair[0] + pair[1]);
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(LabError::DegenerateInput("density has zero mass".into()));
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        *cumulative.last_mut().expect("grid has nodes") = 1.0;
        Ok(Self { grid: grid.clone(), cumulative })
    }

    /// The map of the uniform density; `F` is the affine rescaling onto `[0, 1]`.
    pub fn identity(grid: &Grid1D) -> Self {
        let n = grid.len();
        let cumulative = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self { grid: grid.clone(), cumulative }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `F` at the grid nodes.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `F(y)` by linear interpolation, clamped outside the grid.
    pub fn forward(&self, y: f64) -> f64 {
        let (a, b, h) = (self.grid.left(), self.grid.right(), self.grid.spacing());
        if y <= a {
            return 0.0;
        }
        if y >= b {
            return 1.0;
        }
        let t = (y - a) / h;
        let i = (t.floor() as usize).min(self.cumulative.len() - 2);
        let frac = t - i as f64;
        self.cumulative[i] + frac * (self.cumulative[i + 1] - self.cumulative[i])
    }

    /// Left-continuous generalized inverse `T(x) = inf { y : F(y) >= x }`.
    /// Flat stretches of `F` (gaps in the support) map to their left end.
    pub fn inverse(&self, x: f64) -> f64 {
        let f = &self.cumulative;
        let i = f.partition_point(|&v| v < x);
        if i == 0 {
            return self.grid.left();
        }
        if i >= f.len() {
            return self.grid.right();
        }
        let (lo, hi) = (f[i - 1], f[i]);
        let frac = (x - lo) / (hi - lo);
        self.grid.node(i - 1) + frac * self.grid.spacing()
    }

    /// Largest `|T(F(y)) - y|` over nodes where `F` strictly increases.
    pub fn round_trip_error(&self) -> f64 {
        let f = &self.cumulative;
        let n = f.len();
        (0..n)
            .filter(|&i| {
                let left = i == 0 || f[i] > f[i - 1];
                let right = i + 1 == n || f[i + 1] > f[i];
                left && right
            })
            .map(|i| (self.inverse(f[i]) - self.grid.node(i)).abs())
            .fold(0.0, f64::max)
    }
}

/// Monotone map of `v`, which must have unit mass.
pub fn standard_map(v: &MarginalDensity) -> Result<MonotoneMap> {
    MonotoneMap::from_density_values(v.grid(), v.values())
}

/// `T_# f = f ∘ F` on the grid nodes.
pub fn pushforward<F>(f: F, map: &MonotoneMap) -> Vec<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    map.cumulative.iter().map(|&x| f(x)).collect()
}

/// `L f = sqrt(v) · f ∘ F`.
pub fn lift<F>(f: F, v: &MarginalDensity) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> Complex64,
{
    let map = standard_map(v)?;
    Ok(pushforward(f, &map)
        .into_iter()
        .zip(v.values())
        .map(|(z, &d)| z * d.sqrt())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitalKind {
    Complex,
    Real,
}

/// Base function on `[0, 1]` that gets lifted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mode {
    /// `e^{2 pi i k t}`.
    Exp(u32),
    /// `sqrt(2) sin(2 pi k t)`.
    Sin(u32),
    /// `sqrt(2) cos(2 pi k t)`.
    Cos(u32),
    Constant,
}

impl Mode {
    pub fn value(self, t: f64) -> Complex64 {
        match self {
            Mode::Exp(k) => Complex64::from_polar(1.0, 2.0 * PI * k as f64 * t),
            Mode::Sin(k) => Complex64::new(SQRT_2 * (2.0 * PI * k as f64 * t).sin(), 0.0),
            Mode::Cos(k) => Complex64::new(SQRT_2 * (2.0 * PI * k as f64 * t).cos(), 0.0),
            Mode::Constant => Complex64::new(1.0, 0.0),
        }
    }

    pub fn derivative(self, t: f64) -> Complex64 {
        match self {
            Mode::Exp(k) => {
                let w = 2.0 * PI * k as f64;
                Complex64::new(0.0, w) * Complex64::from_polar(1.0, w * t)
            }
            Mode::Sin(k) => {
                let w = 2.0 * PI * k as f64;
                Complex64::new(SQRT_2 * w * (w * t).cos(), 0.0)
            }
            Mode::Cos(k) => {
                let w = 2.0 * PI * k as f64;
                Complex64::new(-SQRT_2 * w * (w * t).sin(), 0.0)
            }
            Mode::Constant => Complex64::new(0.0, 0.0),
        }
    }
}

fn modes_for(count: usize, kind: OrbitalKind) -> Vec<Mode> {
    match kind {
        OrbitalKind::Complex => (1..=count as u32).map(Mode::Exp).collect(),
        OrbitalKind::Real => {
            let mut modes = Vec::with_capacity(count);
            for k in 1..=(count / 2) as u32 {
                modes.push(Mode::Sin(k));
                modes.push(Mode::Cos(k));
            }
            if count % 2 == 1 {
                modes.push(Mode::Constant);
            }
            modes
        }
    }
}

/// Lifted orbitals together with the density `v` they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalSet {
    density: MarginalDensity,
    map: MonotoneMap,
    kind: OrbitalKind,
    modes: Vec<Mode>,
    orbitals: Vec<Vec<Complex64>>,
}

/// `N` orthonormal orbitals with `sum_k |phi_k|^2 = N v`, where `v` is the
/// unit-mass density (so `rho = N v`).
pub fn harriman_orbitals(v: &MarginalDensity, count: usize, kind: OrbitalKind) -> Result<OrbitalSet> {
    if count == 0 {
        return Err(invalid("need at least one orbital"));
    }
    let map = standard_map(v)?;
    let modes = modes_for(count, kind);
    let orbitals = modes
        .iter()
        .map(|&m| {
            map.cumulative
                .iter()
                .zip(v.values())
                .map(|(&t, &d)| m.value(t) * d.sqrt())
                .collect()
        })
        .collect();
    Ok(OrbitalSet { density: v.clone(), map, kind, modes, orbitals })
}

impl OrbitalSet {
    pub fn grid(&self) -> &Grid1D {
        self.density.grid()
    }

    pub fn density(&self) -> &MarginalDensity {
        &self.density
    }

    pub fn map(&self) -> &MonotoneMap {
        &self.map
    }

    pub fn kind(&self) -> OrbitalKind {
        self.kind
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn orbitals(&self) -> &[Vec<Complex64>] {
        &self.orbitals
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    /// Quadrature Gram matrix `<phi_k, phi_l>`.
    pub fn gram(&self) -> Vec<Vec<Complex64>> {
        gram_matrix(self.grid(), &self.orbitals)
    }

    /// `max_{k,l} |<phi_k, phi_l> - delta_kl|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_defect(&self.gram())
    }

    /// `max_x |sum_k |phi_k(x)|^2 - N v(x)|`.
    pub fn density_error(&self) -> f64 {
        let count = self.len() as f64;
        self.density
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let s: f64 = self.orbitals.iter().map(|o| o[i].norm_sqr()).sum();
                (s - count * v).abs()
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `node, re_1, im_1, re_2, im_2, ...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for k in 1..=self.len() {
            let _ = write!(out, ",re_{k},im_{k}");
        }
        out.push('\n');
        for (i, x) in self.grid().nodes().iter().enumerate() {
            let _ = write!(out, "{x:.17e}");
            for o in &self.orbitals {
                let _ = write!(out, ",{:.17e},{:.17e}", o[i].re, o[i].im);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn gram_matrix(grid: &Grid1D, orbitals: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let w = grid.weights();
    orbitals
        .iter()
        .map(|a| {
            orbitals
                .iter()
                .map(|b| a.iter().zip(b).zip(w).map(|((x, y), w)| x * y.conj() * *w).sum())
                .collect()
        })
        .collect()
}

pub(crate) fn orthonormality_defect(gram: &[Vec<Complex64>]) -> f64 {
    let mut worst = 0.0f64;
    for (k, row) in gram.iter().enumerate() {
        for (l, z) in row.iter().enumerate() {
            let target = if k == l { 1.0 } else { 0.0 };
            worst = worst.max((z - target).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    /// Interior max of `|D(L phi) - (D sqrt(v) phi(F) + sqrt(v) phi'(F) v)|`.
    pub gradient_formula_error: f64,
    /// `sup v`, the bound on the derivative of `F`.
    pub m1v_bound: f64,
    /// Discrete `∫ |D L phi_k|^2` per orbital.
    pub gradient_norms: Vec<f64>,
}

impl RegularityReport {
    pub fn gradients_finite(&self) -> bool {
        self.m1v_bound.is_finite() && self.gradient_norms.iter().all(|g| g.is_finite())
    }
}

/// Compares the chain-rule gradient of each lifted orbital with finite
/// differences of its nodal values.
pub fn regularity_check(set: &OrbitalSet) -> Result<RegularityReport> {
    let grid = set.grid();
    let v = set.density.values();
    let root: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
    let d_root = gradient_fd(grid, &root)?;
    let f = set.map.cumulative();
    let n = grid.len();

    let mut worst = 0.0f64;
    let mut gradient_norms = Vec::with_capacity(set.len());
    for (mode, orbital) in set.modes.iter().zip(&set.orbitals) {
        let re: Vec<f64> = orbital.iter().map(|z| z.re).collect();
        let im: Vec<f64> = orbital.iter().map(|z| z.im).collect();
        let d_re = gradient_fd(grid, &re)?;
        let d_im = gradient_fd(grid, &im)?;
        for i in 1..n - 1 {
            let formula = mode.value(f[i]) * d_root[i] + mode.derivative(f[i]) * (root[i] * v[i]);
            let fd = Complex64::new(d_re[i], d_im[i]);
            worst = worst.max((fd - formula).norm());
        }
        let energy = d_re
            .iter()
            .zip(&d_im)
            .zip(grid.weights())
            .map(|((a, b), w)| (a * a + b * b) * w)
            .sum();
        gradient_norms.push(energy);
    }
    let m1v_bound = v.iter().copied().fold(0.0, f64::max);
    Ok(RegularityReport { gradient_formula_error: worst, m1v_bound, gradient_norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{make_grid, QuadratureRule};

    fn fine_grid(n: usize) -> Grid1D {
        Grid1D::with_rule(0.0, 1.0, n, QuadratureRule::Gregory).unwrap()
    }

    fn linear_density(grid: &Grid1D) -> MarginalDensity {
        MarginalDensity::normalized(grid.clone(), grid.nodes().iter().map(|y| 2.0 * y).collect(), 1)
            .unwrap()
    }

    #[test]
    fn uniform_density_gives_identity_map() {
        let grid = make_grid(0.0, 1.0, 11).unwrap();
        let v = MarginalDensity::new(grid.clone(), vec![1.0; 11], 1).unwrap();
        let map = standard_map(&v).unwrap();
        for (f, x) in map.cumulative().iter().zip(grid.nodes()) {
            assert!((f - x).abs() < 1e-15);
        }
        assert!(map.round_trip_error() < 1e-14);
    }

    #[test]
    fn linear_density_gives_square() {
        let grid = make_grid(0.0, 1.0, 101).unwrap();
        let map = standard_map(&linear_density(&grid)).unwrap();
        for (f, y) in map.cumulative().iter().zip(grid.nodes()) {
            assert!((f - y * y).abs() < 1e-6);
        }
        // T(x) = sqrt(x) up to interpolation error.
        assert!((map.inverse(0.25) - 0.5).abs() < 1e-4);
        assert!(map.round_trip_error() < 1e-8);
    }

    #[test]
    fn gap_in_support_maps_to_left_end() {
        let grid = make_grid(0.0, 1.0, 11).unwrap();
        let mut v = vec![0.0; 11];
        for i in [1, 2, 8, 9] {
            v[i] = 1.0;
        }
        let map = MonotoneMap::from_density_values(&grid, &v).unwrap();
        let f = map.cumulative();
        assert_eq!(f[3], f[7]);
        // The flat stretch [x_3, x_7] collapses to x_3; T jumps across it.
        assert!((map.inverse(f[3]) - grid.node(3)).abs() < 1e-12);
        assert!(map.inverse(f[3] + 1e-9) > grid.node(7));
        assert!(map.round_trip_error() < 1e-12);
    }

    #[test]
    fn pushforward_of_constant_is_constant() {
        let grid = make_grid(0.0, 1.0, 21).unwrap();
        let map = standard_map(&linear_density(&grid)).unwrap();
        let out = pushforward(|_| Complex64::new(1.0, 0.0), &map);
        assert!(out.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn pushforward_is_unitary_for_linear_density() {
        let grid = fine_grid(401);
        let v = linear_density(&grid);
        let map = standard_map(&v).unwrap();
        let f = |t: f64| Complex64::new(t.cos(), t * t);
        let g = |t: f64| Complex64::new(1.0 + t, (3.0 * t).sin());
        // ∫_0^1 f conj(g) dt, by the same quadrature on [0, 1].
        let lhs: Complex64 = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&t, &w)| f(t) * g(t).conj() * w)
            .sum();
        let pf = pushforward(f, &map);
        let pg = pushforward(g, &map);
        let rhs: Complex64 = (0..grid.len())
            .map(|i| pf[i] * pg[i].conj() * v.values()[i] * grid.weight(i))
            .sum();
        assert!((lhs - rhs).norm() < 1e-6, "{lhs} vs {rhs}");
    }

    #[test]
    fn lift_examples() {
        let grid = fine_grid(401);
        let v = linear_density(&grid);
        let one = lift(|_| Complex64::new(1.0, 0.0), &v).unwrap();
        for (z, d) in one.iter().zip(v.values()) {
            assert!((z.re - d.sqrt()).abs() < 1e-15 && z.im == 0.0);
        }
        let wave = lift(|t| Complex64::from_polar(1.0, 2.0 * PI * t), &v).unwrap();
        let norm: f64 = wave.iter().zip(grid.weights()).map(|(z, w)| z.norm_sqr() * w).sum();
        assert!((norm - 1.0).abs() < 1e-6);
        let y = grid.node(200);
        let expected = (2.0 * y).sqrt() * Complex64::from_polar(1.0, 2.0 * PI * y * y);
        assert!((wave[200] - expected).norm() < 1e-6);
    }

    #[test]
    fn orbital_invariants_for_both_kinds() {
        let grid = fine_grid(401);
        let uniform = MarginalDensity::new(grid.clone(), vec![1.0; 401], 1).unwrap();
        for v in [uniform, linear_density(&grid)] {
            for count in 1..=5 {
                for kind in [OrbitalKind::Complex, OrbitalKind::Real] {
                    let set = harriman_orbitals(&v, count, kind).unwrap();
                    assert!(set.orthonormality_error() < 1e-8, "{count} {kind:?}");
                    assert!(set.density_error() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn real_kind_mode_layout() {
        let grid = make_grid(0.0, 1.0, 11).unwrap();
        let v = MarginalDensity::new(grid, vec![1.0; 11], 3).unwrap();
        let set = harriman_orbitals(&v, 3, OrbitalKind::Real).unwrap();
        assert_eq!(set.modes(), &[Mode::Sin(1), Mode::Cos(1), Mode::Constant]);
        assert!(set.orbitals().iter().flatten().all(|z| z.im == 0.0));
    }

    #[test]
    fn regularity_uniform_and_linear() {
        let grid = make_grid(0.0, 1.0, 401).unwrap();
        let uniform = MarginalDensity::new(grid.clone(), vec![1.0; 401], 1).unwrap();
        let set = harriman_orbitals(&uniform, 1, OrbitalKind::Complex).unwrap();
        let report = regularity_check(&set).unwrap();
        assert!(report.gradient_formula_error < 1e-3, "{}", report.gradient_formula_error);
        assert!(report.gradients_finite());

        let set = harriman_orbitals(&linear_density(&grid), 1, OrbitalKind::Complex).unwrap();
        let report = regularity_check(&set).unwrap();
        assert!(report.gradient_formula_error < 1e-2, "{}", report.gradient_formula_error);
        assert!((report.m1v_bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let grid = make_grid(0.0, 1.0, 3).unwrap();
        let v = MarginalDensity::new(grid, vec![1.0; 3], 2).unwrap();
        let csv = harriman_orbitals(&v, 2, OrbitalKind::Complex).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node,re_1,im_1,re_2,im_2");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 5);
    }
}
