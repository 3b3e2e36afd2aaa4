//! The bosonic functional `alpha T + V_ee` under a marginal constraint and
//! the `alpha -> 0` sweep towards the optimal transport value.
//!
//! Upper bounds for the constrained infimum come from two trial families:
//! minimizers of the discrete bosonic problem, and square roots of
//! recovery plans built from an exact LP minimizer. Every trial state is
//! stored as its pair `(T, V)`, so the upper bound at a given `alpha` is the
//! lower envelope `min (alpha T + V)` over the whole pool. That envelope is
//! nondecreasing in `alpha` by construction.

use ndarray::{ArrayD, Axis, Zip};
use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{difference_into, gaussian_mollifier, Grid1D};
use crate::error::{invalid, Result};
use crate::plan::{
    coulomb_energy, interaction_energy, kinetic_energy, l1_l3_distance, symmetrize, BoundCheck,
    CostMatrix, MarginalDensity, TransportPlan, Wavefunction,
};
use crate::reinstate::{c_star, pair_count, project, recovery_plan, smooth_density};
use crate::sce::{solve_mmot, MmotProblem, SolveStatus};
use crate::tensor::tuple_weights;

/// `alpha T[psi] + V_ee[|psi|^2]`.
pub fn bosonic_energy(psi: &Wavefunction, alpha: f64, cost: &CostMatrix) -> f64 {
    alpha * kinetic_energy(psi) + interaction_energy(psi.grid(), &psi.density(), cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Initial gradient step; adapted by backtracking.
    pub step_size: f64,
    /// Relative energy decrease below which an iteration counts as stalled.
    pub tolerance: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { max_iterations: 3000, step_size: 1e-2, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct BosonicMinimum {
    pub psi: Wavefunction,
    pub value: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Pair costs `sum_{i<j} c(x_i, x_j)` on every grid tuple.
fn tuple_costs(grid: &Grid1D, bodies: usize, cost: &CostMatrix) -> ArrayD<f64> {
    ArrayD::from_shape_fn(crate::tensor::cube_shape(grid.len(), bodies), |idx| {
        let v: Vec<usize> = (0..bodies).map(|k| idx[k]).collect();
        cost.tuple_cost(&v)
    })
}

/// `(1/W) dT/dpsi` for a real amplitude.
fn kinetic_gradient(psi: &ArrayD<f64>, grid: &Grid1D) -> ArrayD<f64> {
    let h = grid.spacing();
    let w = grid.weights();
    let n = grid.len();
    let mut total = ArrayD::zeros(psi.raw_dim());
    let mut lane = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut back = vec![0.0; n];
    for axis in 0..psi.ndim() {
        Zip::from(total.lanes_mut(Axis(axis)))
            .and(psi.lanes(Axis(axis)))
            .for_each(|mut out, u| {
                for (l, v) in lane.iter_mut().zip(u.iter()) {
                    *l = *v;
                }
                difference_into(&lane, h, &mut d);
                for (e, wi) in d.iter_mut().zip(w) {
                    *e *= wi;
                }
                // Transpose of the difference stencil.
                back.iter_mut().for_each(|b| *b = 0.0);
                back[0] -= d[0] / h;
                back[1] += d[0] / h;
                back[n - 2] -= d[n - 1] / h;
                back[n - 1] += d[n - 1] / h;
                for i in 1..n - 1 {
                    back[i - 1] -= d[i] / (2.0 * h);
                    back[i + 1] += d[i] / (2.0 * h);
                }
                for ((o, b), wi) in out.iter_mut().zip(&back).zip(w) {
                    *o += 2.0 * b / wi;
                }
            });
    }
    total
}

struct BosonicProblem<'a> {
    mu: &'a MarginalDensity,
    alpha: f64,
    pair_costs: ArrayD<f64>,
    weights: ArrayD<f64>,
    bodies: usize,
}

impl BosonicProblem<'_> {
    fn kinetic(&self, psi: &ArrayD<f64>) -> f64 {
        let grid = self.mu.grid();
        let mut t = 0.0;
        for axis in 0..self.bodies {
            let d = crate::plan::axis_derivative(psi, axis, grid.spacing());
            t += Zip::from(&d).and(&self.weights).fold(0.0, |acc, d, w| acc + d * d * w);
        }
        t
    }

    fn interaction(&self, psi: &ArrayD<f64>) -> f64 {
        Zip::from(psi)
            .and(&self.pair_costs)
            .and(&self.weights)
            .fold(0.0, |acc, p, c, w| if *p == 0.0 { acc } else { acc + p * p * c * w })
    }

    fn energy(&self, psi: &ArrayD<f64>) -> (f64, f64, f64) {
        let t = self.kinetic(psi);
        let v = self.interaction(psi);
        (self.alpha * t + v, t, v)
    }

    fn gradient(&self, psi: &ArrayD<f64>) -> ArrayD<f64> {
        let mut g = kinetic_gradient(psi, self.mu.grid());
        g.mapv_inplace(|v| v * self.alpha);
        Zip::from(&mut g).and(psi).and(&self.pair_costs).for_each(|g, p, c| *g += 2.0 * c * p);
        g
    }

    /// Removes from `g` its component normal to the marginal constraint at
    /// `psi`. The normal space is spanned by `psi(x) sum_i b(x_i)`; the
    /// multipliers `b` solve
    /// `mu(x) b(x) + (N-1) sum_y w(y) M_2(x, y) b(y) = ∫ psi g dx̂`.
    fn tangent(&self, psi: &ArrayD<f64>, g: &ArrayD<f64>) -> ArrayD<f64> {
        let grid = self.mu.grid();
        let w = grid.weights();
        let n = grid.len();
        let prod = Zip::from(psi).and(g).map_collect(|p, g| p * g);
        let rhs = crate::tensor::axis_marginal(&prod, 0, w);
        let density = psi.mapv(|p| p * p);
        let mu = crate::tensor::axis_marginal(&density, 0, w);
        let mut m2 = density;
        while m2.ndim() > 2 {
            let last = m2.ndim() - 1;
            m2 = crate::tensor::integrate_axis(&m2, last, w);
        }
        let support: Vec<usize> = (0..n).filter(|&x| mu[x] > 0.0).collect();
        let scale = mu.iter().fold(0.0f64, |m, v| m.max(*v));
        let others = (self.bodies - 1) as f64;
        let a: Vec<Vec<f64>> = support
            .iter()
            .map(|&x| {
                support
                    .iter()
                    .map(|&y| {
                        let diag = if x == y { mu[x] + 1e-12 * scale } else { 0.0 };
                        diag + others * w[y] * m2[[x, y]]
                    })
                    .collect()
            })
            .collect();
        let r: Vec<f64> = support.iter().map(|&x| rhs[x]).collect();
        let mut b = vec![0.0; n];
        if let Some(sol) = crate::linalg::solve(&a, &r, 1e-300) {
            for (&x, v) in support.iter().zip(sol) {
                b[x] = v;
            }
        }
        let mut d = g.clone();
        for (idx, slot) in d.indexed_iter_mut() {
            let s: f64 = (0..self.bodies).map(|k| b[idx[k]]).sum();
            *slot -= psi[&idx] * s;
        }
        d
    }

    /// Normalize, symmetrize, project onto the marginal and take the root.
    fn restore(&self, candidate: &ArrayD<f64>) -> Option<ArrayD<f64>> {
        let density = candidate.mapv(|v| v * v);
        let mass = Zip::from(&density).and(&self.weights).fold(0.0, |acc, d, w| acc + d * w);
        if !(mass > 0.0) || !mass.is_finite() {
            return None;
        }
        let plan = TransportPlan::from_parts(self.mu.grid().clone(), density / mass, false);
        let plan = symmetrize(&plan);
        let projected = project(&plan, self.mu).ok()?;
        Some(projected.into_values().mapv(|v| v.max(0.0).sqrt()))
    }
}

fn real_wavefunction(grid: &Grid1D, values: &ArrayD<f64>) -> Wavefunction {
    let bodies = values.ndim();
    let c = values.mapv(|v| Complex64::new(v, 0.0));
    Wavefunction::from_amplitudes(grid.clone(), bodies, vec![c], false)
        .expect("amplitude shape matches grid")
}

/// Projected gradient descent on `psi >= 0` starting from the product
/// state, with the marginal restored after every step.
pub fn minimize_bosonic(
    mu: &MarginalDensity,
    alpha: f64,
    cost: &CostMatrix,
    settings: &OptimizerSettings,
) -> Result<BosonicMinimum> {
    let start = TransportPlan::product(mu, mu.particle_count())?;
    minimize_bosonic_from(mu, alpha, cost, settings, &start)
}

/// As [`minimize_bosonic`] from a given feasible plan.
pub fn minimize_bosonic_from(
    mu: &MarginalDensity,
    alpha: f64,
    cost: &CostMatrix,
    settings: &OptimizerSettings,
    start: &TransportPlan,
) -> Result<BosonicMinimum> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !mu.grid().same_as(cost.grid()) || !mu.grid().same_as(start.grid()) {
        return Err(invalid("density, cost and start plan live on different grids"));
    }
    if cost.is_strict() {
        return Err(invalid("bosonic minimization needs a capped diagonal"));
    }
    let bodies = start.n_bodies();
    let grid = mu.grid();
    let problem = BosonicProblem {
        mu,
        alpha,
        pair_costs: tuple_costs(grid, bodies, cost),
        weights: tuple_weights(grid, bodies),
        bodies,
    };

    let mut psi = start.values().mapv(|v| v.max(0.0).sqrt());
    let (mut energy, mut t, mut v) = problem.energy(&psi);
    let mut step = settings.step_size;
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        let g = problem.gradient(&psi);
        let g = if bodies >= 2 { problem.tangent(&psi, &g) } else { g };
        let mut accepted = None;
        for _ in 0..40 {
            let trial = Zip::from(&psi).and(&g).map_collect(|p, g| (p - step * g).max(0.0));
            if let Some(candidate) = problem.restore(&trial) {
                let (e, ct, cv) = problem.energy(&candidate);
                if e < energy {
                    accepted = Some((candidate, e, ct, cv));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, e, ct, cv)) = accepted else {
            converged = true;
            break;
        };
        let decrease = energy - e;
        psi = candidate;
        energy = e;
        t = ct;
        v = cv;
        step *= 1.5;
        if decrease <= settings.tolerance * energy.abs().max(1.0) {
            stalled += 1;
            if stalled >= 10 {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(BosonicMinimum {
        psi: real_wavefunction(grid, &psi),
        value: energy,
        kinetic: t,
        interaction: v,
        iterations,
        converged,
    })
}

/// Trial state from the recovery construction.
#[derive(Debug, Clone)]
pub struct RecoveryCandidate {
    pub epsilon: f64,
    pub beta: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub plan: TransportPlan,
}

pub fn recovery_candidate(
    gamma_opt: &TransportPlan,
    mu: &MarginalDensity,
    epsilon: f64,
    beta: f64,
    cost: &CostMatrix,
) -> Result<RecoveryCandidate> {
    let plan = recovery_plan(gamma_opt, mu, epsilon, beta)?;
    let psi = Wavefunction::from_plan(&plan);
    Ok(RecoveryCandidate {
        epsilon,
        beta,
        kinetic: kinetic_energy(&psi),
        interaction: coulomb_energy(&plan, cost),
        plan,
    })
}

/// Bosonic energy of `sqrt(recovery_plan(gamma_opt, mu, epsilon, beta))`.
pub fn recovery_upper_bound(
    gamma_opt: &TransportPlan,
    mu: &MarginalDensity,
    alpha: f64,
    epsilon: f64,
    beta: f64,
    cost: &CostMatrix,
) -> Result<f64> {
    let c = recovery_candidate(gamma_opt, mu, epsilon, beta, cost)?;
    Ok(alpha * c.kinetic + c.interaction)
}

/// `V(P gamma_{eps,beta})` against
/// `(1 - 2 beta/N) V[gamma] + beta (N-1) V_2[mu ⊗ mu] + c_* C(N,2) ||mu_eps - mu||`.
pub fn recovery_chain_check(
    gamma: &TransportPlan,
    mu: &MarginalDensity,
    epsilon: f64,
    beta: f64,
    cost: &CostMatrix,
) -> Result<BoundCheck> {
    let bodies = gamma.n_bodies() as f64;
    let lhs = coulomb_energy(&recovery_plan(gamma, mu, epsilon, beta)?, cost);
    let kernel = gaussian_mollifier(epsilon, gamma.grid())?;
    let mu_eps = smooth_density(mu, &kernel)?;
    let pair_product = coulomb_energy(&TransportPlan::product(mu, 2)?, cost);
    let rhs = (1.0 - 2.0 * beta / bodies) * coulomb_energy(gamma, cost)
        + beta * (bodies - 1.0) * pair_product
        + c_star() * pair_count(gamma.n_bodies()) * l1_l3_distance(&mu_eps, mu);
    Ok(BoundCheck { lhs, rhs })
}

/// Bounded continuous test functions used to compare N-body densities.
pub const MOMENT_NAMES: [&str; 5] = ["one", "mean", "mean_sq", "exp_neg_mean", "min_dist12"];

/// `∫ f dgamma` for the fixed test-function panel.
pub fn testfn_moments(grid: &Grid1D, density: &ArrayD<f64>) -> [f64; 5] {
    let x = grid.nodes();
    let w = grid.weights();
    let bodies = density.ndim();
    let mut m = [0.0; 5];
    for (idx, &g) in density.indexed_iter() {
        if g == 0.0 {
            continue;
        }
        let weight: f64 = (0..bodies).map(|k| w[idx[k]]).product::<f64>() * g;
        let mean = (0..bodies).map(|k| x[idx[k]]).sum::<f64>() / bodies as f64;
        let d12 = if bodies >= 2 { (x[idx[0]] - x[idx[1]]).abs().min(1.0) } else { 0.0 };
        m[0] += weight;
        m[1] += weight * mean;
        m[2] += weight * mean * mean;
        m[3] += weight * (-mean).exp();
        m[4] += weight * d12;
    }
    m
}

/// Largest relative deviation between two moment vectors.
pub fn moment_mismatch(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-12))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    /// Strictly decreasing.
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(skip)]
    pub mu: MarginalDensity,
    pub n_bodies: usize,
    pub optimizer: OptimizerSettings,
    /// Relative moment deviation tolerated before reporting a mismatch.
    pub moment_tolerance: f64,
}

impl SweepConfig {
    /// The default schedule for a density: `alpha = 1, 0.1, .., 1e-4` and
    /// recovery widths from two grid spacings down to a twentieth of one.
    pub fn standard(mu: MarginalDensity, n_bodies: usize) -> Self {
        let h = mu.grid().spacing();
        Self {
            alphas: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4],
            epsilons: vec![2.0 * h, h, 0.5 * h, 0.2 * h, 0.05 * h],
            betas: vec![0.1, 0.03, 0.01, 1e-3, 1e-4],
            mu,
            n_bodies,
            optimizer: OptimizerSettings::default(),
            moment_tolerance: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(invalid("sweep needs at least one alpha"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("alphas must be positive"));
        }
        if self.alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("alphas must be strictly decreasing"));
        }
        let (ne, nb) = (self.epsilons.len(), self.betas.len());
        if ne == 0 || nb == 0 || (ne != nb && ne != 1 && nb != 1) {
            return Err(invalid("epsilon and beta schedules must match or be broadcastable"));
        }
        if self.epsilons.iter().chain(&self.betas).any(|v| !(*v > 0.0)) {
            return Err(invalid("schedules must be positive"));
        }
        Ok(())
    }

    fn schedule(&self) -> Vec<(f64, f64)> {
        let len = self.epsilons.len().max(self.betas.len());
        (0..len)
            .map(|i| {
                let e = self.epsilons[i.min(self.epsilons.len() - 1)];
                let b = self.betas[i.min(self.betas.len() - 1)];
                (e, b)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub v_sce: f64,
    pub f_alpha_upper: f64,
    pub gap: f64,
    pub testfn_moments: [f64; 5],
    /// Value reached by the bosonic minimizer at this alpha alone.
    pub bosonic_value: f64,
    pub bosonic_converged: bool,
    /// Trial state attaining the upper bound.
    pub source: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub lp_moments: [f64; 5],
    /// Relative moment deviation at the smallest alpha.
    pub final_moment_deviation: f64,
    pub minimizer_mismatch: bool,
}

struct Trial {
    kinetic: f64,
    interaction: f64,
    label: String,
    moments: [f64; 5],
}

/// Runs the alpha sweep: exact `V_sce`, upper bounds from the trial pool,
/// gaps and test-function moments.
pub fn semiclassical_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let mu = config.mu.with_particle_count(config.n_bodies)?;
    let grid = mu.grid().clone();
    let strict = MmotProblem::strict(mu.clone(), config.n_bodies)?;
    let lp = solve_mmot(&strict)?;
    if lp.status() != SolveStatus::Optimal {
        return Err(invalid("marginal admits no plan avoiding coincident particles"));
    }
    let v_sce = lp.value();
    let gamma_opt = lp.plan().expect("optimal solution has a plan").clone();
    let lp_moments = testfn_moments(&grid, lp.canonical_plan().expect("plan").values());
    let cost = CostMatrix::coulomb(&grid);

    let mut pool: Vec<Trial> = Vec::new();
    for (e, b) in config.schedule() {
        let c = recovery_candidate(&gamma_opt, &mu, e, b, &cost)?;
        pool.push(Trial {
            kinetic: c.kinetic,
            interaction: c.interaction,
            label: format!("recovery(eps={e:.3e},beta={b:.3e})"),
            moments: testfn_moments(&grid, c.plan.values()),
        });
    }
    let mut bosonic = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let m = minimize_bosonic(&mu, alpha, &cost, &config.optimizer)?;
        pool.push(Trial {
            kinetic: m.kinetic,
            interaction: m.interaction,
            label: format!("bosonic(alpha={alpha:.3e})"),
            moments: testfn_moments(&grid, &m.psi.density()),
        });
        bosonic.push((m.value, m.converged));
    }

    let records: Vec<SweepRecord> = config
        .alphas
        .iter()
        .zip(&bosonic)
        .map(|(&alpha, &(bosonic_value, bosonic_converged))| {
            let best = pool
                .iter()
                .min_by(|a, b| {
                    (alpha * a.kinetic + a.interaction).total_cmp(&(alpha * b.kinetic + b.interaction))
                })
                .expect("pool is not empty");
            let f = alpha * best.kinetic + best.interaction;
            SweepRecord {
                alpha,
                v_sce,
                f_alpha_upper: f,
                gap: f - v_sce,
                testfn_moments: best.moments,
                bosonic_value,
                bosonic_converged,
                source: best.label.clone(),
            }
        })
        .collect();
    let last = records.last().expect("at least one alpha");
    let final_moment_deviation = moment_mismatch(&last.testfn_moments, &lp_moments);
    Ok(SweepOutcome {
        minimizer_mismatch: final_moment_deviation > config.moment_tolerance,
        final_moment_deviation,
        lp_moments,
        records,
    })
}

/// CSV with columns `alpha,V_sce,F_alpha_upper,gap,moment_1..moment_5`.
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("alpha,V_sce,F_alpha_upper,gap,moment_1,moment_2,moment_3,moment_4,moment_5\n");
    for r in records {
        out.push_str(&format!("{:e},{:.12},{:.12},{:.12e}", r.alpha, r.v_sce, r.f_alpha_upper, r.gap));
        for m in &r.testfn_moments {
            out.push_str(&format!(",{m:.12}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::make_grid;
    use approx::assert_abs_diff_eq;

    fn uniform8() -> MarginalDensity {
        MarginalDensity::uniform_masses(make_grid(0.0, 1.0, 8).unwrap(), 2).unwrap()
    }

    #[test]
    fn kinetic_gradient_matches_finite_differences() {
        let g = make_grid(0.0, 1.0, 5).unwrap();
        let psi = ArrayD::from_shape_fn(ndarray::IxDyn(&[5, 5]), |i| {
            1.0 + 0.3 * i[0] as f64 - 0.1 * (i[1] * i[1]) as f64
        });
        let w = tuple_weights(&g, 2);
        let t = |p: &ArrayD<f64>| {
            let f = real_wavefunction(&g, p);
            kinetic_energy(&f)
        };
        let grad = kinetic_gradient(&psi, &g);
        for (idx, _) in psi.indexed_iter() {
            let mut up = psi.clone();
            let mut dn = psi.clone();
            up[&idx] += 1e-6;
            dn[&idx] -= 1e-6;
            let fd = (t(&up) - t(&dn)) / 2e-6 / w[&idx];
            assert!((fd - grad[&idx]).abs() < 1e-5 * fd.abs().max(1.0), "{fd} vs {}", grad[&idx]);
        }
    }

    #[test]
    fn bosonic_energy_examples() {
        let mu = uniform8();
        let g = mu.grid().clone();
        let cost = CostMatrix::coulomb(&g);
        let plan = TransportPlan::product(&mu, 2).unwrap();
        let psi = Wavefunction::from_plan(&plan);
        assert_abs_diff_eq!(bosonic_energy(&psi, 0.0, &cost), coulomb_energy(&plan, &cost), epsilon = 1e-14);
        let t = kinetic_energy(&psi);
        let e1 = bosonic_energy(&psi, 0.3, &cost);
        let e2 = bosonic_energy(&psi, 0.6, &cost);
        assert_abs_diff_eq!(e2 - e1, 0.3 * t, epsilon = 1e-12);
    }

    #[test]
    fn minimizer_is_feasible_and_below_start() {
        let mu = uniform8();
        let cost = CostMatrix::coulomb(mu.grid());
        let m = minimize_bosonic(&mu, 0.1, &cost, &OptimizerSettings::default()).unwrap();
        let plan = m.psi.to_plan().unwrap();
        assert!(plan.marginal_error(mu.values()) < 1e-10);
        let start = Wavefunction::from_plan(&TransportPlan::product(&mu, 2).unwrap());
        assert!(m.value < bosonic_energy(&start, 0.1, &cost));
        assert_abs_diff_eq!(m.value, bosonic_energy(&m.psi, 0.1, &cost), epsilon = 1e-9);
    }

    #[test]
    fn small_alpha_approaches_transport_value() {
        let mu = uniform8();
        let cost = CostMatrix::coulomb(mu.grid());
        let v_sce = solve_mmot(&MmotProblem::strict(mu.clone(), 2).unwrap()).unwrap().value();
        assert_abs_diff_eq!(v_sce, 1.75, epsilon = 1e-9);
        let m = minimize_bosonic(&mu, 1e-4, &cost, &OptimizerSettings::default()).unwrap();
        assert!(m.value >= v_sce - 1e-9);
        assert!(m.value <= 1.05 * v_sce, "{}", m.value);
    }
}
