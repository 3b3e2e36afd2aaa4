//! Marginal-reinstating projection of transport plans.
//!
//! Given a plan `gamma_A` with one-body marginal `mu_A` and a target `mu_B`,
//! the two-body coupling
//!
//! `gamma_BA(x, x') = f(x) delta_x(x') + f_B(x) f_A(x') / ∫f_B`
//!
//! with `f = min(mu_A, mu_B)`, `f_A = mu_A - f`, `f_B = mu_B - f` has column
//! marginal `mu_A` and row marginal `mu_B`. Applying the normalized kernel
//! `gamma_BA(x, x') / mu_A(x')` to every coordinate moves each marginal of
//! `gamma_A` from `mu_A` to `mu_B` while keeping the correlations.
//!
//! On the grid the point mass `delta_x` is the node indicator divided by the
//! node weight, which keeps both marginal identities exact for any weights.

use ndarray::{ArrayD, IxDyn};

use crate::discretization::{gaussian_mollifier, Grid1D, MollifierKernel};
use crate::error::{invalid, LabError, Result};
use crate::plan::{
    coulomb_energy, l1_l3_distance, l1_norm, BoundCheck, CostMatrix, MarginalDensity,
    TransportPlan,
};
use crate::tensor::{apply_along_axis, integrate_axis, tuple_weights};

/// `6 (8 pi / 3)^(1/3)`.
pub fn c_star() -> f64 {
    6.0 * (8.0 * std::f64::consts::PI / 3.0).cbrt()
}

/// `2^(N-1) + (N-1)/2`.
pub fn l1_stability_constant(bodies: usize) -> f64 {
    2f64.powi(bodies as i32 - 1) + (bodies as f64 - 1.0) / 2.0
}

pub(crate) fn pair_count(bodies: usize) -> f64 {
    (bodies * bodies.saturating_sub(1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingKernel {
    grid: Grid1D,
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    f: Vec<f64>,
    f_a: Vec<f64>,
    f_b: Vec<f64>,
    mass_fb: f64,
}

pub fn build_coupling(mu_a: &MarginalDensity, mu_b: &MarginalDensity) -> Result<CouplingKernel> {
    if !mu_a.grid().same_as(mu_b.grid()) {
        return Err(invalid("coupling marginals live on different grids"));
    }
    Ok(CouplingKernel::from_values(mu_a.grid(), mu_a.values(), mu_b.values()))
}

impl CouplingKernel {
    fn from_values(grid: &Grid1D, mu_a: &[f64], mu_b: &[f64]) -> Self {
        let f: Vec<f64> = mu_a.iter().zip(mu_b).map(|(a, b)| a.min(*b)).collect();
        let f_a: Vec<f64> = mu_a.iter().zip(&f).map(|(a, m)| a - m).collect();
        let f_b: Vec<f64> = mu_b.iter().zip(&f).map(|(b, m)| b - m).collect();
        let mass_fb = grid.integrate(&f_b);
        Self {
            grid: grid.clone(),
            mu_a: mu_a.to_vec(),
            mu_b: mu_b.to_vec(),
            f,
            f_a,
            f_b,
            mass_fb,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn f_a(&self) -> &[f64] {
        &self.f_a
    }

    pub fn f_b(&self) -> &[f64] {
        &self.f_b
    }

    pub fn mass_fb(&self) -> f64 {
        self.mass_fb
    }

    /// Whether the rank-one part is present.
    fn has_transfer(&self) -> bool {
        self.mass_fb > 0.0
    }

    /// Two-body density `gamma_BA(x, x')`, row index `x`.
    pub fn density(&self) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        let w = self.grid.weights();
        (0..n)
            .map(|x| {
                (0..n)
                    .map(|xp| {
                        let diag = if x == xp { self.f[x] / w[x] } else { 0.0 };
                        let rank_one = if self.has_transfer() {
                            self.f_b[x] * self.f_a[xp] / self.mass_fb
                        } else {
                            0.0
                        };
                        diag + rank_one
                    })
                    .collect()
            })
            .collect()
    }

    /// Masses `w(x) w(x') gamma_BA(x, x')`.
    pub fn mass_matrix(&self) -> Vec<Vec<f64>> {
        let w = self.grid.weights();
        self.density()
            .into_iter()
            .enumerate()
            .map(|(x, row)| row.into_iter().enumerate().map(|(xp, v)| v * w[x] * w[xp]).collect())
            .collect()
    }

    /// Diagonal part of the one-axis transfer operator, `f(x) / mu_A(x)`.
    fn diagonal_factor(&self, x: usize) -> f64 {
        if self.mu_a[x] > 0.0 {
            self.f[x] / self.mu_a[x]
        } else {
            0.0
        }
    }

    /// Input-side factor of the rank-one part, `f_A(x') w(x') / mu_A(x')`.
    fn source_factor(&self, xp: usize) -> f64 {
        if self.mu_a[xp] > 0.0 {
            self.f_a[xp] * self.grid.weight(xp) / self.mu_a[xp]
        } else {
            0.0
        }
    }

    /// Output-side factor of the rank-one part, `f_B(x) / ∫f_B`.
    fn target_factor(&self, x: usize) -> f64 {
        if self.has_transfer() {
            self.f_b[x] / self.mass_fb
        } else {
            0.0
        }
    }

    /// `G(x, x') = w(x') gamma_BA(x, x') / mu_A(x')`, zero where `mu_A`
    /// vanishes.
    pub fn transfer_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        (0..n)
            .map(|x| {
                (0..n)
                    .map(|xp| {
                        let diag = if x == xp { self.diagonal_factor(x) } else { 0.0 };
                        diag + self.target_factor(x) * self.source_factor(xp)
                    })
                    .collect()
            })
            .collect()
    }
}

/// The operator `P` for fixed `mu_A`, `mu_B`.
#[derive(Debug, Clone)]
pub struct Projection {
    kernel: CouplingKernel,
    transfer: Vec<Vec<f64>>,
}

impl Projection {
    pub fn new(mu_a: &MarginalDensity, mu_b: &MarginalDensity) -> Result<Self> {
        let kernel = build_coupling(mu_a, mu_b)?;
        let transfer = kernel.transfer_matrix();
        Ok(Self { kernel, transfer })
    }

    pub fn kernel(&self) -> &CouplingKernel {
        &self.kernel
    }

    fn check_support(&self, density: &ArrayD<f64>) -> Result<()> {
        let w = self.kernel.grid.weights();
        for axis in 0..density.ndim() {
            let m = crate::tensor::axis_marginal(density, axis, w);
            if let Some(node) = (0..m.len()).find(|&x| m[x] > 0.0 && self.kernel.mu_a[x] <= 0.0) {
                return Err(LabError::ZeroSupport { node });
            }
        }
        Ok(())
    }

    /// Applies the transfer operator along every axis of an arbitrary
    /// k-body density.
    pub fn apply_density(&self, density: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        if density.shape().iter().any(|&s| s != self.kernel.grid.len()) {
            return Err(invalid("density shape does not match the projection grid"));
        }
        self.check_support(density)?;
        let mut out = density.clone();
        if self.kernel.has_transfer() {
            for axis in 0..out.ndim() {
                out = apply_along_axis(&out, axis, &self.transfer);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, plan: &TransportPlan) -> Result<TransportPlan> {
        if !plan.grid().same_as(&self.kernel.grid) {
            return Err(invalid("plan and projection live on different grids"));
        }
        let values = self.apply_density(plan.values())?;
        Ok(TransportPlan::from_parts(plan.grid().clone(), values, plan.is_symmetric()))
    }
}

/// Common one-body marginal of a plan whose marginals all agree.
fn common_marginal(plan: &TransportPlan) -> Result<MarginalDensity> {
    let marginals = plan.one_body_marginals();
    let scale = marginals[0].iter().fold(0.0f64, |m, v| m.max(*v));
    for (axis, m) in marginals.iter().enumerate().skip(1) {
        let gap = m.iter().zip(&marginals[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-9 * scale.max(1.0) {
            return Err(invalid(format!(
                "plan marginals differ between axis 0 and axis {axis} by {gap:.3e}"
            )));
        }
    }
    plan.marginal_density()
}

/// `P gamma_A`: every one-body marginal becomes `mu_B`.
pub fn project(plan_a: &TransportPlan, mu_b: &MarginalDensity) -> Result<TransportPlan> {
    let mu_a = common_marginal(plan_a)?;
    Projection::new(&mu_a, mu_b)?.apply(plan_a)
}

/// `P gamma_A` as the sum over subsets `I` of the coordinates, where the
/// coordinates in `I` are moved by the rank-one part of the kernel and the
/// others by its diagonal part. Evaluated tuple by tuple.
pub fn project_via_expansion(plan_a: &TransportPlan, mu_b: &MarginalDensity) -> Result<TransportPlan> {
    let mu_a = common_marginal(plan_a)?;
    let projection = Projection::new(&mu_a, mu_b)?;
    projection.check_support(plan_a.values())?;
    let k = projection.kernel();
    let n = plan_a.grid().len();
    let bodies = plan_a.n_bodies();
    let src = plan_a.values();

    let mut out = ArrayD::<f64>::zeros(src.raw_dim());
    let mut source = vec![0usize; bodies];
    for (idx, slot) in out.indexed_iter_mut() {
        let x: Vec<usize> = (0..bodies).map(|i| idx[i]).collect();
        let mut total = 0.0;
        for subset in 0u32..(1 << bodies) {
            let moved: Vec<usize> = (0..bodies).filter(|i| subset >> i & 1 == 1).collect();
            let mut prefactor = 1.0;
            for i in 0..bodies {
                prefactor *= if subset >> i & 1 == 1 {
                    k.target_factor(x[i])
                } else {
                    k.diagonal_factor(x[i])
                };
            }
            if prefactor == 0.0 {
                continue;
            }
            let combos = n.pow(moved.len() as u32);
            let mut inner = 0.0;
            for c in 0..combos {
                source.copy_from_slice(&x);
                let mut rest = c;
                let mut factor = 1.0;
                for &i in &moved {
                    source[i] = rest % n;
                    rest /= n;
                    factor *= k.source_factor(source[i]);
                }
                inner += factor * src[IxDyn(&source)];
            }
            total += prefactor * inner;
        }
        *slot = total;
    }
    Ok(TransportPlan::from_parts(plan_a.grid().clone(), out, plan_a.is_symmetric()))
}

/// `||gamma_A - P gamma_A||_1` against `(2^(N-1) + (N-1)/2) ||mu_A - mu_B||_1`.
pub fn l1_stability_check(plan_a: &TransportPlan, mu_b: &MarginalDensity) -> Result<BoundCheck> {
    let projected = project(plan_a, mu_b)?;
    let mu_a = plan_a.marginal_density()?;
    let w = tuple_weights(plan_a.grid(), plan_a.n_bodies());
    let lhs = ndarray::Zip::from(plan_a.values())
        .and(projected.values())
        .and(&w)
        .fold(0.0, |acc, a, b, w| acc + (a - b).abs() * w);
    let diff: Vec<f64> = mu_a.values().iter().zip(mu_b.values()).map(|(a, b)| a - b).collect();
    let rhs = l1_stability_constant(plan_a.n_bodies()) * l1_norm(plan_a.grid(), &diff);
    Ok(BoundCheck { lhs, rhs })
}

/// Node masses moved by the column-stochastic smoothing matrix.
fn smoothing_in_mass_units(grid: &Grid1D, kernel: &MollifierKernel) -> Vec<Vec<f64>> {
    // Density form: out(x) = sum_x' S[x][x'] w(x') in(x') / w(x).
    let s = kernel.smoothing_matrix(grid);
    let w = grid.weights();
    s.into_iter()
        .enumerate()
        .map(|(x, row)| row.into_iter().enumerate().map(|(xp, v)| v * w[xp] / w[x]).collect())
        .collect()
}

/// Tensor-product mollification of a plan.
pub fn smooth(plan: &TransportPlan, kernel: &MollifierKernel) -> TransportPlan {
    let m = smoothing_in_mass_units(plan.grid(), kernel);
    let mut values = plan.values().clone();
    for axis in 0..values.ndim() {
        values = apply_along_axis(&values, axis, &m);
    }
    TransportPlan::from_parts(plan.grid().clone(), values, plan.is_symmetric())
}

/// One-dimensional mollification of a density, consistent with [`smooth`].
pub fn smooth_density(mu: &MarginalDensity, kernel: &MollifierKernel) -> Result<MarginalDensity> {
    let m = smoothing_in_mass_units(mu.grid(), kernel);
    let values = m
        .iter()
        .map(|row| row.iter().zip(mu.values()).map(|(a, b)| a * b).sum())
        .collect();
    MarginalDensity::normalized(mu.grid().clone(), values, mu.particle_count())
}

/// `(1 - beta) gamma + (beta / N) sum_i mu(x_i) M_{N-1} gamma(x̂_i)`.
pub fn strong_positivize(plan: &TransportPlan, beta: f64) -> Result<TransportPlan> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("mixing parameter must lie in (0, 1), got {beta}")));
    }
    let bodies = plan.n_bodies();
    if bodies < 2 {
        return Err(invalid("strong positivization needs at least two particles"));
    }
    let src = plan.values();
    let w = plan.grid().weights();
    let mut out = src.mapv(|v| (1.0 - beta) * v);
    for axis in 0..bodies {
        let mu = plan.one_body(axis);
        let rest = integrate_axis(src, axis, w);
        let scale = beta / bodies as f64;
        for (idx, slot) in out.indexed_iter_mut() {
            let others: Vec<usize> = (0..bodies).filter(|&k| k != axis).map(|k| idx[k]).collect();
            *slot += scale * mu[idx[axis]] * rest[IxDyn(&others)];
        }
    }
    Ok(TransportPlan::from_parts(plan.grid().clone(), out, plan.is_symmetric()))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StrongPositivity {
    pub holds: bool,
    pub best_beta: f64,
}

/// Largest `beta` with `gamma >= beta M_1 gamma(x_i) M_{N-1} gamma(x̂_i)`
/// for every `i`.
pub fn is_strongly_positive(plan: &TransportPlan) -> StrongPositivity {
    let bodies = plan.n_bodies();
    let src = plan.values();
    let w = plan.grid().weights();
    let mut best = f64::INFINITY;
    for axis in 0..bodies {
        let mu = plan.one_body(axis);
        let rest = integrate_axis(src, axis, w);
        for (idx, &v) in src.indexed_iter() {
            let others: Vec<usize> = (0..bodies).filter(|&k| k != axis).map(|k| idx[k]).collect();
            let denom = mu[idx[axis]] * rest[IxDyn(&others)];
            if denom > 0.0 {
                best = best.min(v / denom);
            }
        }
    }
    let best_beta = if best.is_finite() { best } else { 0.0 };
    StrongPositivity { holds: best_beta > 0.0, best_beta }
}

/// `V(P gamma_A)` against `V(gamma_A) + c_* C(N,2) ||mu_A - mu_B||_{L1∩L3}`.
pub fn coulomb_stability_check(
    plan_a: &TransportPlan,
    mu_b: &MarginalDensity,
    cost: &CostMatrix,
) -> Result<BoundCheck> {
    let projected = project(plan_a, mu_b)?;
    let mu_a = plan_a.marginal_density()?;
    let lhs = coulomb_energy(&projected, cost);
    let rhs = coulomb_energy(plan_a, cost)
        + c_star() * pair_count(plan_a.n_bodies()) * l1_l3_distance(&mu_a, mu_b);
    Ok(BoundCheck { lhs, rhs })
}

/// Smooth, then strongly positivize, then project back onto `mu_target`.
pub fn recovery_plan(
    gamma: &TransportPlan,
    mu_target: &MarginalDensity,
    epsilon: f64,
    beta: f64,
) -> Result<TransportPlan> {
    let kernel = gaussian_mollifier(epsilon, gamma.grid())?;
    let smoothed = smooth(gamma, &kernel);
    let positive = strong_positivize(&smoothed, beta)?;
    project(&positive, mu_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::make_grid;
    use crate::plan::symmetrize;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn two_node() -> Grid1D {
        make_grid(0.0, 1.0, 2).unwrap()
    }

    fn masses(plan: &TransportPlan, axis: usize) -> Vec<f64> {
        plan.one_body(axis).iter().zip(plan.grid().weights()).map(|(v, w)| v * w).collect()
    }

    #[test]
    fn coupling_two_node_example() {
        let g = two_node();
        let a = MarginalDensity::from_masses(g.clone(), &[0.6, 0.4], 2).unwrap();
        let b = MarginalDensity::from_masses(g.clone(), &[0.4, 0.6], 2).unwrap();
        let k = build_coupling(&a, &b).unwrap();
        let m = k.mass_matrix();
        let expected = [[0.4, 0.0], [0.2, 0.4]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(m[i][j], expected[i][j], epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(m[0][0] + m[0][1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1][0] + m[1][1], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0][0] + m[1][0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0][1] + m[1][1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(k.mass_fb(), 0.5 * crate::plan::l1_norm(&g, &[0.4, -0.4]), epsilon = 1e-15);
    }

    #[test]
    fn coupling_limits() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let a = MarginalDensity::from_masses(g.clone(), &[0.1, 0.2, 0.3, 0.4], 2).unwrap();
        let k = build_coupling(&a, &a).unwrap();
        assert!(k.f_a().iter().chain(k.f_b()).all(|&v| v == 0.0));
        let d = k.density();
        assert!((0..4).all(|i| (0..4).all(|j| i == j || d[i][j] == 0.0)));

        let a = MarginalDensity::from_masses(g.clone(), &[0.5, 0.5, 0.0, 0.0], 2).unwrap();
        let b = MarginalDensity::from_masses(g.clone(), &[0.0, 0.0, 0.25, 0.75], 2).unwrap();
        let k = build_coupling(&a, &b).unwrap();
        assert!(k.f().iter().all(|&v| v == 0.0));
        let d = k.density();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(d[i][j], b.values()[i] * a.values()[j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn projection_of_product_is_product() {
        let g = make_grid(0.0, 1.0, 5).unwrap();
        let a = MarginalDensity::normalized(g.clone(), vec![1.0, 2.0, 0.5, 3.0, 1.0], 2).unwrap();
        let b = MarginalDensity::normalized(g.clone(), vec![2.0, 0.1, 1.0, 1.0, 4.0], 2).unwrap();
        let pa = TransportPlan::product(&a, 2).unwrap();
        let pb = TransportPlan::product(&b, 2).unwrap();
        let p = project(&pa, &b).unwrap();
        for (x, y) in p.values().iter().zip(pb.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn projection_identity_when_marginals_agree() {
        let g = two_node();
        let plan = TransportPlan::from_masses(g.clone(), arr2(&[[0.4, 0.2], [0.2, 0.2]]).into_dyn(), true)
            .unwrap();
        let mu = plan.marginal_density().unwrap();
        let p = project(&plan, &mu).unwrap();
        for (x, y) in p.values().iter().zip(plan.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn projection_two_node_brute_force() {
        let g = two_node();
        let plan = TransportPlan::from_masses(g.clone(), arr2(&[[0.4, 0.2], [0.2, 0.2]]).into_dyn(), true)
            .unwrap();
        let b = MarginalDensity::from_masses(g.clone(), &[0.4, 0.6], 2).unwrap();
        let p = project(&plan, &b).unwrap();
        for axis in 0..2 {
            let m = masses(&p, axis);
            assert_abs_diff_eq!(m[0], 0.4, epsilon = 1e-15);
            assert_abs_diff_eq!(m[1], 0.6, epsilon = 1e-15);
        }
        // Independent evaluation of the kernel formula with explicit masses.
        let kmass = [[0.4, 0.0], [0.2, 0.4]];
        let mu_a = [0.6, 0.4];
        let gm = [[0.4, 0.2], [0.2, 0.2]];
        let pm = p.masses();
        for x1 in 0..2 {
            for x2 in 0..2 {
                let mut v = 0.0;
                for y1 in 0..2 {
                    for y2 in 0..2 {
                        v += kmass[x1][y1] / mu_a[y1] * kmass[x2][y2] / mu_a[y2] * gm[y1][y2];
                    }
                }
                assert_abs_diff_eq!(pm[[x1, x2]], v, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_support_is_rejected() {
        let g = make_grid(0.0, 1.0, 3).unwrap();
        let a = MarginalDensity::from_masses(g.clone(), &[0.5, 0.5, 0.0], 2).unwrap();
        let b = MarginalDensity::uniform_masses(g.clone(), 2).unwrap();
        let plan = TransportPlan::product(&b, 2).unwrap();
        let err = Projection::new(&a, &b).unwrap().apply(&plan).unwrap_err();
        assert_eq!(err, LabError::ZeroSupport { node: 2 });
    }

    #[test]
    fn zero_mass_nodes_are_skipped() {
        let g = make_grid(0.0, 1.0, 3).unwrap();
        let a = MarginalDensity::from_masses(g.clone(), &[0.5, 0.5, 0.0], 2).unwrap();
        let b = MarginalDensity::from_masses(g.clone(), &[0.2, 0.3, 0.5], 2).unwrap();
        let plan = TransportPlan::product(&a, 2).unwrap();
        let p = project(&plan, &b).unwrap();
        assert!(p.marginal_error(b.values()) < 1e-12);
    }

    #[test]
    fn expansion_matches_direct() {
        let g = make_grid(0.0, 1.0, 2).unwrap();
        let gm = ArrayD::from_shape_vec(IxDyn(&[2, 2, 2]), vec![0.2, 0.1, 0.05, 0.15, 0.1, 0.1, 0.2, 0.1])
            .unwrap();
        let plan = symmetrize(&TransportPlan::from_masses(g.clone(), gm, false).unwrap());
        let b = MarginalDensity::from_masses(g, &[0.3, 0.7], 3).unwrap();
        let p = project(&plan, &b).unwrap();
        let q = project_via_expansion(&plan, &b).unwrap();
        for (x, y) in p.values().iter().zip(q.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let same = project_via_expansion(&plan, &plan.marginal_density().unwrap()).unwrap();
        for (x, y) in same.values().iter().zip(plan.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn constants() {
        assert_abs_diff_eq!(c_star(), 12.1868, epsilon = 1e-3);
        assert_eq!(l1_stability_constant(2), 2.5);
        assert_eq!(l1_stability_constant(3), 5.0);
    }

    #[test]
    fn smoothing_examples() {
        let g = make_grid(0.0, 1.0, 11).unwrap();
        let mu = MarginalDensity::normalized(g.clone(), (0..11).map(|i| 1.0 + (i % 3) as f64).collect(), 2)
            .unwrap();
        let plan = symmetrize(&project(&TransportPlan::product(&mu, 2).unwrap(), &mu).unwrap());
        let identity = gaussian_mollifier(1e-5, &g).unwrap();
        let same = smooth(&plan, &identity);
        for (x, y) in same.values().iter().zip(plan.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let k = gaussian_mollifier(0.15, &g).unwrap();
        let sm = smooth(&plan, &k);
        assert_abs_diff_eq!(sm.total_mass(), 1.0, epsilon = 1e-13);
        assert!(sm.is_symmetric_within(1e-13));
        let expected = smooth_density(&mu, &k).unwrap();
        for (x, y) in sm.one_body(0).iter().zip(expected.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn strong_positivity_examples() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let mu = MarginalDensity::from_masses(g.clone(), &[0.1, 0.2, 0.3, 0.4], 2).unwrap();
        let prod = TransportPlan::product(&mu, 2).unwrap();
        let sp = is_strongly_positive(&prod);
        assert!(sp.holds);
        assert_abs_diff_eq!(sp.best_beta, 1.0, epsilon = 1e-12);

        let swap = TransportPlan::point_masses(
            make_grid(0.0, 1.0, 2).unwrap(),
            2,
            &[(vec![0, 1], 0.5), (vec![1, 0], 0.5)],
        )
        .unwrap();
        assert!(!is_strongly_positive(&swap).holds);

        let mixed = strong_positivize(&swap, 0.1).unwrap();
        assert!(is_strongly_positive(&mixed).best_beta >= 0.09);
        let m = mixed.masses();
        assert_abs_diff_eq!(m[[0, 0]], 0.1 * 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[0, 1]], 0.9 * 0.5 + 0.1 * 0.25, epsilon = 1e-15);
        assert!(strong_positivize(&swap, 0.0).is_err());
        assert!(strong_positivize(&swap, 1.0).is_err());
    }
}
