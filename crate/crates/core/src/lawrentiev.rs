//! The Mania functional `J[u] = ∫ (x - u^3)^2 u'^6` and its perturbation
//! `J + eps^2 T`, `T[u] = ∫ u'^2`, on paths with `u(0) = 0`, `u(1) = 1`.
//!
//! Cauchy-Schwarz gives `u(x) <= sqrt(x T[u])`, so a path with finite `T`
//! starts below `x^(1/3) / 2` and crosses it at some `x_*`. Below `x_*` the
//! integrand of `J` dominates `(7/8)^2 x^2 u'^6`, whose minimum is explicit.
//! That chain is evaluated here on discrete paths.
//!
//! Discretization: piecewise linear paths, slopes and values taken at cell
//! midpoints.

use serde::Serialize;

use crate::discretization::Grid1D;
use crate::error::{invalid, LabError, Result};

/// `½ (7/8)^2 (3/10)^5`.
pub fn gap_constant() -> f64 {
    0.5 * (7.0f64 / 8.0).powi(2) * 0.3f64.powi(5)
}

/// `(7/8)^2 (3/10)^6 (5/3) / x_*`, the minimum of `G` with `u(x_*) = x_*^(1/3) / 2`.
pub fn certificate_bound(x_star: f64) -> f64 {
    (7.0f64 / 8.0).powi(2) * 0.3f64.powi(6) * (5.0 / 3.0) / x_star
}

const BOUNDARY_TOL: f64 = 1e-12;

/// Nodal values of a path on a grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl PathFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if grid.left() != 0.0 || grid.right() != 1.0 {
            return Err(invalid("paths live on [0, 1]"));
        }
        if values.len() != grid.len() {
            return Err(invalid("path length does not match grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("path values must be finite"));
        }
        let (first, last) = (values[0], values[values.len() - 1]);
        if first.abs() > BOUNDARY_TOL || (last - 1.0).abs() > BOUNDARY_TOL {
            return Err(invalid(format!("boundary conditions violated: u(0) = {first}, u(1) = {last}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `n` nodes and pins the endpoints to 0 and 1.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = Grid1D::new(0.0, 1.0, n)?;
        let mut values: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        values[0] = 0.0;
        values[n - 1] = 1.0;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell slopes `(u_{i+1} - u_i) / h`.
    pub fn slopes(&self) -> Vec<f64> {
        let h = self.grid.spacing();
        self.values.windows(2).map(|p| (p[1] - p[0]) / h).collect()
    }
}

fn cells(u: &[f64], h: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    u.windows(2).enumerate().map(move |(i, p)| {
        let xm = (i as f64 + 0.5) * h;
        (xm, 0.5 * (p[0] + p[1]), (p[1] - p[0]) / h)
    })
}

fn j_of(u: &[f64], h: f64) -> f64 {
    cells(u, h).map(|(xm, um, s)| h * (xm - um.powi(3)).powi(2) * s.powi(6)).sum()
}

fn t_of(u: &[f64], h: f64) -> f64 {
    cells(u, h).map(|(_, _, s)| h * s * s).sum()
}

pub fn mania_j(u: &PathFunction) -> f64 {
    j_of(&u.values, u.grid.spacing())
}

pub fn kinetic_t(u: &PathFunction) -> f64 {
    t_of(&u.values, u.grid.spacing())
}

/// `J[u] + eps^2 T[u]`.
pub fn perturbed_energy(u: &PathFunction, epsilon: f64) -> f64 {
    mania_j(u) + epsilon * epsilon * kinetic_t(u)
}

/// Energy and gradient with respect to all nodal values.
fn energy_and_gradient(u: &[f64], h: f64, eps2: f64, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for (i, (xm, um, s)) in cells(u, h).enumerate() {
        let d = xm - um * um * um;
        let s5 = s.powi(5);
        total += h * (d * d * s5 * s + eps2 * s * s);
        let d_um = -6.0 * h * d * um * um * s5 * s;
        let d_s = h * (6.0 * d * d * s5 + 2.0 * eps2 * s);
        grad[i] += 0.5 * d_um - d_s / h;
        grad[i + 1] += 0.5 * d_um + d_s / h;
    }
    total
}

/// Initial profiles for the descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartProfile {
    Ramp,
    ThreeFifths,
    SquareRoot,
    CubeRoot,
}

impl StartProfile {
    pub const MULTI_START: [StartProfile; 3] =
        [StartProfile::Ramp, StartProfile::ThreeFifths, StartProfile::SquareRoot];

    pub fn path(self, n: usize) -> Result<PathFunction> {
        let p = match self {
            StartProfile::Ramp => 1.0,
            StartProfile::ThreeFifths => 0.6,
            StartProfile::SquareRoot => 0.5,
            StartProfile::CubeRoot => 1.0 / 3.0,
        };
        PathFunction::from_fn(n, |x| x.powf(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentSettings {
    pub max_iterations: usize,
    /// Stop when the sup norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    /// L-BFGS memory.
    pub memory: usize,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self { max_iterations: 20_000, gradient_tolerance: 1e-10, memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedMinimum {
    pub u: PathFunction,
    pub value: f64,
    pub j: f64,
    pub t: f64,
    pub start: StartProfile,
    pub iterations: usize,
    pub converged: bool,
}

/// Limited-memory BFGS on the interior nodes, with Armijo backtracking.
pub fn minimize_from(
    start: &PathFunction,
    epsilon: f64,
    settings: &DescentSettings,
) -> (PathFunction, usize, bool) {
    let h = start.grid.spacing();
    let eps2 = epsilon * epsilon;
    let n = start.values.len();
    let mut u = start.values.clone();
    let mut grad = vec![0.0; n];
    let mut f = energy_and_gradient(&u, h, eps2, &mut grad);
    pin(&mut grad);

    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut stalls = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        if sup_norm(&grad) <= settings.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = two_loop(&grad, &history);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            // Curvature pairs went stale; restart from steepest descent.
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let mut step = if history.is_empty() { 1.0 / sup_norm(&grad).max(1.0) } else { 1.0 };
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, x), d) in trial.iter_mut().zip(&u).zip(&dir) {
                *t = x + step * d;
            }
            let ft = energy_and_gradient(&trial, h, eps2, &mut trial_grad);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = true;
                pin(&mut trial_grad);
                let s: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    if history.len() == settings.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                let decrease = f - ft;
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                stalls = if decrease <= 1e-15 * f.abs() { stalls + 1 } else { 0 };
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = history.is_empty();
            if converged {
                break;
            }
            history.clear();
            continue;
        }
        if stalls >= 20 {
            converged = true;
            break;
        }
    }
    let path = PathFunction { grid: start.grid.clone(), values: u };
    (path, iterations, converged)
}

fn pin(grad: &mut [f64]) {
    let n = grad.len();
    grad[0] = 0.0;
    grad[n - 1] = 0.0;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn two_loop(grad: &[f64], history: &std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Best local minimum of `J + eps^2 T` over the ramp, `x^(3/5)` and
/// `x^(1/2)` starts.
pub fn minimize_perturbed(epsilon: f64, n: usize, settings: &DescentSettings) -> Result<PerturbedMinimum> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut best: Option<PerturbedMinimum> = None;
    for start in StartProfile::MULTI_START {
        let candidate = descend(start, epsilon, n, settings)?;
        if best.as_ref().is_none_or(|b| candidate.value < b.value) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Single descent from one profile; `epsilon = 0` minimizes `J` alone.
pub fn descend(
    start: StartProfile,
    epsilon: f64,
    n: usize,
    settings: &DescentSettings,
) -> Result<PerturbedMinimum> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let (u, iterations, converged) = minimize_from(&start.path(n)?, epsilon, settings);
    let j = mania_j(&u);
    let t = kinetic_t(&u);
    Ok(PerturbedMinimum { value: j + epsilon * epsilon * t, u, j, t, start, iterations, converged })
}

/// `max_i (u(x_i) - sqrt(x_i T[u]))`; nonpositive up to rounding.
pub fn csi_bound_check(u: &PathFunction) -> f64 {
    let t = kinetic_t(u);
    u.grid
        .nodes()
        .iter()
        .zip(&u.values)
        .map(|(x, v)| v - (x * t).sqrt())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCertificate {
    pub x_star: f64,
    pub j_value: f64,
    pub g_value: f64,
    pub bound: f64,
}

impl GapCertificate {
    /// `J >= G >= bound (1 - tol)`.
    pub fn holds(&self, tol: f64) -> bool {
        self.j_value >= self.g_value && self.g_value >= self.bound * (1.0 - tol)
    }
}

/// Evaluates `x_*`, `G[u] = (7/8)^2 ∫_0^{x_*} x^2 u'^6` and the explicit
/// bound for a discrete path.
pub fn gap_certificate(u: &PathFunction) -> Result<GapCertificate> {
    let nodes = u.grid.nodes();
    let h = u.grid.spacing();
    let star = (1..nodes.len())
        .find(|&i| u.values[i] >= 0.5 * nodes[i].cbrt() - 1e-12)
        .ok_or_else(|| LabError::DegenerateInput("path never reaches x^(1/3) / 2".into()))?;
    let x_star = nodes[star];
    let g: f64 = cells(&u.values, h)
        .take(star)
        .map(|(xm, _, s)| h * xm * xm * s.powi(6))
        .sum();
    Ok(GapCertificate {
        x_star,
        j_value: mania_j(u),
        g_value: (7.0f64 / 8.0).powi(2) * g,
        bound: certificate_bound(x_star),
    })
}

/// The minimizer `u_0(x) = ½ x^(3/5) x_*^(-4/15)` of `G` on `[0, x_*]`,
/// continued linearly to `u(1) = 1`.
pub fn reference_path(n: usize, x_star: f64) -> Result<PathFunction> {
    if !(x_star > 0.0 && x_star < 1.0) {
        return Err(invalid("x_* must lie in (0, 1)"));
    }
    let at_star = 0.5 * x_star.cbrt();
    PathFunction::from_fn(n, |x| {
        if x <= x_star {
            0.5 * x.powf(0.6) * x_star.powf(-4.0 / 15.0)
        } else {
            at_star + (x - x_star) * (1.0 - at_star) / (1.0 - x_star)
        }
    })
}

/// The seven components of the quadratic reformulation at cell midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintChain {
    pub midpoints: Vec<f64>,
    /// `psi[k][c]` is component `k + 1` on cell `c`.
    pub psi: [Vec<f64>; 7],
    /// `psi_1'` on each cell.
    pub slope: Vec<f64>,
    pub h: f64,
}

pub fn constraint_chain(u: &PathFunction) -> ConstraintChain {
    let h = u.grid.spacing();
    let mut midpoints = Vec::new();
    let mut slope = Vec::new();
    let mut psi: [Vec<f64>; 7] = Default::default();
    for (xm, um, s) in cells(&u.values, h) {
        midpoints.push(xm);
        slope.push(s);
        let p2 = um * um;
        let p3 = um * p2;
        let p4 = s * s;
        let p5 = s * p4;
        let values = [um, p2, p3, p4, p5, p5 * p5, (xm - p3) * (xm - p3)];
        for (k, v) in values.into_iter().enumerate() {
            psi[k].push(v);
        }
    }
    ConstraintChain { midpoints, psi, slope, h }
}

impl ConstraintChain {
    /// `I[psi] = ∫ psi_6 psi_7`.
    pub fn functional(&self) -> f64 {
        self.psi[5].iter().zip(&self.psi[6]).map(|(a, b)| self.h * a * b).sum()
    }

    /// Largest violation of the six quadratic constraints.
    pub fn constraint_residual(&self) -> f64 {
        let p = &self.psi;
        let mut worst = 0.0f64;
        for c in 0..self.midpoints.len() {
            let s = self.slope[c];
            let id = self.midpoints[c];
            let residuals = [
                p[1][c] - p[0][c] * p[0][c],
                p[2][c] - p[0][c] * p[1][c],
                p[3][c] - s * s,
                p[4][c] - s * p[3][c],
                p[5][c] - p[4][c] * p[4][c],
                p[6][c] - (id - p[2][c]) * (id - p[2][c]),
            ];
            for r in residuals {
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawrentievRow {
    pub epsilon: f64,
    pub n: usize,
    pub best_value: f64,
    pub x_star: f64,
    pub g_value: f64,
    pub bound: f64,
}

/// CSV with columns `epsilon,n,best_value,x_star,G_value,bound`.
pub fn lawrentiev_csv(rows: &[LawrentievRow]) -> String {
    let mut out = String::from("epsilon,n,best_value,x_star,G_value,bound\n");
    for r in rows {
        out.push_str(&format!(
            "{:e},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.epsilon, r.n, r.best_value, r.x_star, r.g_value, r.bound
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((gap_constant() - 11907.0 / 12_800_000.0).abs() < 1e-15);
        assert!((certificate_bound(1.0) - gap_constant()).abs() < 1e-15);
    }

    #[test]
    fn linear_path_values() {
        let u = PathFunction::from_fn(1001, |x| x).unwrap();
        assert!((mania_j(&u) - 8.0 / 105.0).abs() < 1e-4);
        assert!((kinetic_t(&u) - 1.0).abs() < 1e-12);
        assert!(csi_bound_check(&u) <= 1e-12);
    }

    #[test]
    fn boundary_conditions_enforced() {
        let grid = Grid1D::new(0.0, 1.0, 3).unwrap();
        assert!(PathFunction::new(grid.clone(), vec![0.0, 0.5, 0.9]).is_err());
        assert!(PathFunction::new(grid, vec![0.1, 0.5, 1.0]).is_err());
    }

    #[test]
    fn flat_stretch_contributes_nothing_to_j() {
        let grid = Grid1D::new(0.0, 1.0, 5).unwrap();
        let u = PathFunction::new(grid, vec![0.0, 0.5, 0.5, 0.5, 1.0]).unwrap();
        let chain = constraint_chain(&u);
        assert_eq!(chain.psi[5][1], 0.0);
        assert_eq!(chain.psi[5][2], 0.0);
    }

    #[test]
    fn single_step_kinetic_energy() {
        for n in [11, 101, 1001] {
            let grid = Grid1D::new(0.0, 1.0, n).unwrap();
            let mut values = vec![0.0; n];
            values[n - 1] = 1.0;
            let u = PathFunction::new(grid.clone(), values).unwrap();
            assert!((kinetic_t(&u) - 1.0 / grid.spacing()).abs() < 1e-9 * n as f64);
        }
    }

    #[test]
    fn cube_root_kinetic_energy_diverges() {
        let ts: Vec<f64> = [101, 1001, 10_001]
            .iter()
            .map(|&n| kinetic_t(&StartProfile::CubeRoot.path(n).unwrap()))
            .collect();
        assert!(ts[0] < ts[1] && ts[1] < ts[2], "{ts:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let u = PathFunction::from_fn(21, |x| x.powf(0.7)).unwrap();
        let h = u.grid.spacing();
        let mut grad = vec![0.0; 21];
        energy_and_gradient(&u.values, h, 0.01, &mut grad);
        for i in [1, 7, 19] {
            let mut up = u.values.clone();
            let mut down = u.values.clone();
            up[i] += 1e-6;
            down[i] -= 1e-6;
            let mut scratch = vec![0.0; 21];
            let fd = (energy_and_gradient(&up, h, 0.01, &mut scratch)
                - energy_and_gradient(&down, h, 0.01, &mut scratch))
                / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-5 * (1.0 + grad[i].abs()), "{fd} {}", grad[i]);
        }
    }

    #[test]
    fn csi_holds_for_random_paths() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = 64;
            let mut incs: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = incs.iter().sum();
            incs.iter_mut().for_each(|v| *v /= total);
            let mut values = vec![0.0];
            for d in &incs {
                values.push(values.last().unwrap() + d);
            }
            values[n - 1] = 1.0;
            let u = PathFunction::new(Grid1D::new(0.0, 1.0, n).unwrap(), values).unwrap();
            assert!(csi_bound_check(&u) <= 1e-12);
        }
        let root = PathFunction::from_fn(1001, f64::sqrt).unwrap();
        assert!(csi_bound_check(&root) <= 1e-12);
    }

    #[test]
    fn reference_path_reproduces_closed_form() {
        let x_star = 0.8;
        // The first cell carries an O(h^(3/5)) error from the x^(-2/5) singularity.
        let u = reference_path(20_001, x_star).unwrap();
        let cert = gap_certificate(&u).unwrap();
        assert!((cert.x_star - x_star).abs() < 1e-12);
        assert!((cert.g_value / cert.bound - 1.0).abs() < 0.01, "{cert:?}");
    }

    #[test]
    fn constraint_chain_reproduces_j() {
        let u = PathFunction::from_fn(257, |x| x.powf(0.45)).unwrap();
        let chain = constraint_chain(&u);
        assert!(chain.constraint_residual() < 1e-12);
        let j = mania_j(&u);
        assert!((chain.functional() - j).abs() <= 1e-10 * j.max(1.0));
    }

    #[test]
    fn perturbed_minimum_respects_gap() {
        let settings = DescentSettings::default();
        let m = minimize_perturbed(1e-2, 401, &settings).unwrap();
        assert!(m.value > gap_constant());
        let cert = gap_certificate(&m.u).unwrap();
        assert!(cert.holds(0.05), "{cert:?}");
        assert!(csi_bound_check(&m.u) <= 1e-12);
    }
}
