//! Exact solution of the discrete multi-marginal Coulomb transport problem.
//!
//! The unknowns are the masses of the admissible grid tuples: tuples that
//! touch a node without marginal mass are dropped, and under a strict
//! diagonal so are tuples with two coincident particles. The constraints fix
//! every node mass of every one-body marginal. The resulting LP is solved by
//! a two-phase revised simplex method whose columns are generated on the
//! fly from the tuple list, so memory stays proportional to the number of
//! tuples plus the square of the number of constraints.

use ndarray::{ArrayD, IxDyn};
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::linalg;
use crate::plan::{check_size, symmetrize, CostMatrix, MarginalDensity, TransportPlan};
use crate::tensor::{cube_shape, permutations, unravel};

/// Size guard for the simplex solver.
pub const MAX_LP_VARIABLES: usize = 1_000_000;
/// Size guard for vertex enumeration.
pub const MAX_BRUTE_FORCE_TUPLES: usize = 4096;
/// Vertex enumeration refuses problems with more candidate bases than this.
pub const MAX_BRUTE_FORCE_BASES: u128 = 5_000_000;

#[derive(Debug, Clone)]
pub struct MmotProblem {
    mu: MarginalDensity,
    n_bodies: usize,
    cost: CostMatrix,
}

impl MmotProblem {
    pub fn new(mu: MarginalDensity, n_bodies: usize, cost: CostMatrix) -> Result<Self> {
        if n_bodies < 2 {
            return Err(invalid(format!("transport problem needs N >= 2, got {n_bodies}")));
        }
        if !mu.grid().same_as(cost.grid()) {
            return Err(invalid("marginal and cost live on different grids"));
        }
        check_size(mu.grid().len(), n_bodies)?;
        if mu.grid().len().pow(n_bodies as u32) > MAX_LP_VARIABLES {
            return Err(invalid("too many LP variables"));
        }
        Ok(Self { mu, n_bodies, cost })
    }

    /// Strict-diagonal problem, the default for the SCE functional.
    pub fn strict(mu: MarginalDensity, n_bodies: usize) -> Result<Self> {
        let cost = CostMatrix::strict(mu.grid());
        Self::new(mu, n_bodies, cost)
    }

    pub fn mu(&self) -> &MarginalDensity {
        &self.mu
    }

    pub fn n_bodies(&self) -> usize {
        self.n_bodies
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MmotSolution {
    plan: Option<TransportPlan>,
    value: f64,
    status: SolveStatus,
    iterations: usize,
}

impl MmotSolution {
    fn infeasible(iterations: usize) -> Self {
        Self { plan: None, value: f64::INFINITY, status: SolveStatus::Infeasible, iterations }
    }

    /// The optimal vertex found by the solver.
    pub fn plan(&self) -> Option<&TransportPlan> {
        self.plan.as_ref()
    }

    /// The symmetrized optimal plan, used wherever a single representative
    /// of the minimizers is needed.
    pub fn canonical_plan(&self) -> Option<TransportPlan> {
        self.plan.as_ref().map(symmetrize)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn status(&self) -> SolveStatus {
        self.status
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `{value, n, N, plan, status}` with the plan as a flat row-major
    /// array of densities.
    pub fn to_json(&self, n: usize, bodies: usize) -> serde_json::Value {
        let plan: Option<Vec<f64>> = self.plan.as_ref().map(|p| p.values().iter().copied().collect());
        serde_json::json!({
            "value": if self.value.is_finite() { Some(self.value) } else { None },
            "n": n,
            "N": bodies,
            "plan": plan,
            "status": self.status,
        })
    }
}

/// Admissible tuples and the marginal constraints they enter.
struct TupleLp {
    bodies: usize,
    n: usize,
    /// Tuples stored contiguously, `bodies` node indices each.
    tuples: Vec<u32>,
    /// Constraint row of each tuple entry.
    rows: Vec<u32>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
}

impl TupleLp {
    fn build(problem: &MmotProblem) -> Self {
        let n = problem.mu.grid().len();
        let bodies = problem.n_bodies;
        let masses = problem.mu.masses();
        let support: Vec<usize> = (0..n).filter(|&x| masses[x] > 0.0).collect();
        let mut position = vec![usize::MAX; n];
        for (p, &x) in support.iter().enumerate() {
            position[x] = p;
        }
        let s = support.len();
        let mut rhs = Vec::with_capacity(bodies * s);
        for _ in 0..bodies {
            rhs.extend(support.iter().map(|&x| masses[x]));
        }

        let mut tuples = Vec::new();
        let mut rows = Vec::new();
        let mut cost = Vec::new();
        let total = s.pow(bodies as u32);
        for flat in 0..total {
            let local = unravel(flat, s, bodies);
            let idx: Vec<usize> = local.iter().map(|&p| support[p]).collect();
            let c = problem.cost.tuple_cost(&idx);
            if !c.is_finite() {
                continue;
            }
            for (k, &x) in idx.iter().enumerate() {
                tuples.push(x as u32);
                rows.push((k * s + position[x]) as u32);
            }
            cost.push(c);
        }
        Self { bodies, n, tuples, rows, cost, rhs }
    }

    fn n_struct(&self) -> usize {
        self.cost.len()
    }

    fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    fn column_rows(&self, j: usize) -> &[u32] {
        &self.rows[j * self.bodies..(j + 1) * self.bodies]
    }

    fn tuple(&self, j: usize) -> &[u32] {
        &self.tuples[j * self.bodies..(j + 1) * self.bodies]
    }

    fn dense_row_matrix(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_struct()]; self.n_rows()];
        for j in 0..self.n_struct() {
            for &r in self.column_rows(j) {
                a[r as usize][j] += 1.0;
            }
        }
        a
    }

    fn plan_from_masses(&self, problem: &MmotProblem, x: &[f64]) -> Result<TransportPlan> {
        let mut masses = ArrayD::zeros(cube_shape(self.n, self.bodies));
        for (j, &m) in x.iter().enumerate() {
            if m > 0.0 {
                let idx: Vec<usize> = self.tuple(j).iter().map(|&v| v as usize).collect();
                masses[IxDyn(&idx)] += m;
            }
        }
        let total: f64 = masses.sum();
        TransportPlan::from_masses(problem.mu.grid().clone(), masses / total, false)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.cost).map(|(m, c)| m * c).sum()
    }
}

/// Revised simplex state. Variables `0..n_struct` are tuples, the rest are
/// one artificial per constraint row.
struct Simplex<'a> {
    lp: &'a TupleLp,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const STALL_LIMIT: usize = 50;

impl<'a> Simplex<'a> {
    fn new(lp: &'a TupleLp) -> Self {
        let m = lp.n_rows();
        let ns = lp.n_struct();
        let basis: Vec<usize> = (0..m).map(|r| ns + r).collect();
        let mut in_basis = vec![false; ns + m];
        for &b in &basis {
            in_basis[b] = true;
        }
        let binv = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self { lp, basis, in_basis, binv, xb: lp.rhs.clone(), iterations: 0 }
    }

    fn is_artificial(&self, var: usize) -> bool {
        var >= self.lp.n_struct()
    }

    /// `B^-1 A_j`.
    fn direction(&self, var: usize) -> Vec<f64> {
        let m = self.lp.n_rows();
        if self.is_artificial(var) {
            let r = var - self.lp.n_struct();
            (0..m).map(|i| self.binv[i][r]).collect()
        } else {
            let rows = self.lp.column_rows(var);
            (0..m)
                .map(|i| rows.iter().map(|&r| self.binv[i][r as usize]).sum())
                .collect()
        }
    }

    fn pivot(&mut self, row: usize, var: usize, d: &[f64]) {
        let m = self.lp.n_rows();
        let inv = 1.0 / d[row];
        for v in &mut self.binv[row] {
            *v *= inv;
        }
        self.xb[row] *= inv;
        let pivot_row = self.binv[row].clone();
        let xr = self.xb[row];
        for i in 0..m {
            if i != row && d[i] != 0.0 {
                let f = d[i];
                for (v, p) in self.binv[i].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.xb[i] -= f * xr;
            }
        }
        let leaving = self.basis[row];
        self.in_basis[leaving] = false;
        self.in_basis[var] = true;
        self.basis[row] = var;
        self.iterations += 1;
        if self.iterations % REFACTOR_EVERY == 0 {
            self.refactor();
        }
    }

    fn refactor(&mut self) {
        let m = self.lp.n_rows();
        let ns = self.lp.n_struct();
        let mut b = vec![vec![0.0; m]; m];
        for (col, &var) in self.basis.iter().enumerate() {
            if var >= ns {
                b[var - ns][col] = 1.0;
            } else {
                for &r in self.lp.column_rows(var) {
                    b[r as usize][col] += 1.0;
                }
            }
        }
        if let Some(inv) = linalg::invert(&b, 1e-13) {
            self.xb = (0..m)
                .map(|i| inv[i].iter().zip(&self.lp.rhs).map(|(a, r)| a * r).sum::<f64>())
                .collect();
            for x in &mut self.xb {
                if *x < 0.0 && *x > -1e-13 {
                    *x = 0.0;
                }
            }
            self.binv = inv;
        }
    }

    /// Minimizes `cost(var)` over the current feasible basis. Artificial
    /// variables may leave but never re-enter.
    fn optimize(&mut self, cost: &dyn Fn(usize) -> f64, tol: f64) -> Result<()> {
        let m = self.lp.n_rows();
        let ns = self.lp.n_struct();
        let limit = 100_000 + 200 * (m + ns);
        let mut stalled = 0usize;
        loop {
            if self.iterations > limit {
                return Err(LabError::DegenerateInput("simplex iteration limit reached".into()));
            }
            let cb: Vec<f64> = self.basis.iter().map(|&v| cost(v)).collect();
            let y: Vec<f64> = (0..m)
                .map(|c| (0..m).map(|i| cb[i] * self.binv[i][c]).sum())
                .collect();
            let bland = stalled > STALL_LIMIT;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..ns {
                if self.in_basis[j] {
                    continue;
                }
                let rc = cost(j) - self.lp.column_rows(j).iter().map(|&r| y[r as usize]).sum::<f64>();
                if rc < -tol {
                    if bland {
                        entering = Some((j, rc));
                        break;
                    }
                    if entering.map_or(true, |(_, best)| rc < best) {
                        entering = Some((j, rc));
                    }
                }
            }
            let Some((var, _)) = entering else {
                return Ok(());
            };
            let d = self.direction(var);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if d[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / d[i];
                    let better = match leave {
                        None => true,
                        Some((r, best)) => {
                            ratio < best - 1e-14
                                || (ratio <= best + 1e-14 && self.basis[i] < self.basis[r])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, step)) = leave else {
                return Err(LabError::DegenerateInput("transport LP is unbounded".into()));
            };
            if step <= 1e-14 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            self.pivot(row, var, &d);
        }
    }

    /// Replaces zero-level artificials by structural columns where possible;
    /// the remaining ones sit on redundant rows.
    fn drive_out_artificials(&mut self) {
        let m = self.lp.n_rows();
        let ns = self.lp.n_struct();
        for row in 0..m {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let rho = self.binv[row].clone();
            let mut pick: Option<usize> = None;
            for j in 0..ns {
                if self.in_basis[j] {
                    continue;
                }
                let v: f64 = self.lp.column_rows(j).iter().map(|&r| rho[r as usize]).sum();
                if v.abs() > 1e-7 {
                    pick = Some(j);
                    break;
                }
            }
            if let Some(j) = pick {
                let d = self.direction(j);
                self.pivot(row, j, &d);
            }
        }
    }

    fn structural_solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.n_struct()];
        for (i, &v) in self.basis.iter().enumerate() {
            if !self.is_artificial(v) {
                x[v] = self.xb[i].max(0.0);
            }
        }
        x
    }
}

/// Exact minimizer of `sum c gamma` over plans with all marginals `mu`.
pub fn solve_mmot(problem: &MmotProblem) -> Result<MmotSolution> {
    let lp = TupleLp::build(problem);
    if lp.n_struct() == 0 {
        return Ok(MmotSolution::infeasible(0));
    }
    let mut simplex = Simplex::new(&lp);
    let ns = lp.n_struct();
    simplex.optimize(&|v| if v >= ns { 1.0 } else { 0.0 }, 1e-12)?;
    simplex.refactor();
    let infeasibility: f64 = simplex
        .basis
        .iter()
        .zip(&simplex.xb)
        .filter(|(v, _)| **v >= ns)
        .map(|(_, x)| x.max(0.0))
        .sum();
    if infeasibility > 1e-9 {
        return Ok(MmotSolution::infeasible(simplex.iterations));
    }
    simplex.drive_out_artificials();
    let scale = lp.cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let cost = |v: usize| if v >= ns { 0.0 } else { lp.cost[v] };
    simplex.optimize(&cost, 1e-11 * scale)?;
    simplex.refactor();
    let x = simplex.structural_solution();
    let plan = lp.plan_from_masses(problem, &x)?;
    let value = crate::plan::coulomb_energy(&plan, &problem.cost);
    debug_assert!((value - lp.objective(&x)).abs() < 1e-8 * scale);
    Ok(MmotSolution {
        plan: Some(plan),
        value,
        status: SolveStatus::Optimal,
        iterations: simplex.iterations,
    })
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return acc;
        }
    }
    acc
}

/// Exhaustive search over the vertices of the feasible polytope. Every
/// basis (set of `rank` tuples) is tried; used as an oracle for
/// [`solve_mmot`] on small instances.
pub fn brute_force_mmot(problem: &MmotProblem) -> Result<MmotSolution> {
    let n = problem.mu.grid().len();
    if n.pow(problem.n_bodies as u32) > MAX_BRUTE_FORCE_TUPLES {
        return Err(invalid(format!(
            "vertex enumeration limited to n^N <= {MAX_BRUTE_FORCE_TUPLES}"
        )));
    }
    let lp = TupleLp::build(problem);
    let ns = lp.n_struct();
    if ns == 0 {
        return Ok(MmotSolution::infeasible(0));
    }
    let a = lp.dense_row_matrix();
    let rows = linalg::independent_rows(&a, 1e-9);
    let rank = rows.len();
    let bases = binomial_u128(ns, rank);
    if bases > MAX_BRUTE_FORCE_BASES {
        return Err(invalid(format!(
            "vertex enumeration would try {bases} bases (limit {MAX_BRUTE_FORCE_BASES})"
        )));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut combo: Vec<usize> = (0..rank).collect();
    let mut tried = 0usize;
    loop {
        tried += 1;
        let square: Vec<Vec<f64>> = rows.iter().map(|&r| combo.iter().map(|&j| a[r][j]).collect()).collect();
        let reduced_rhs: Vec<f64> = rows.iter().map(|&r| lp.rhs[r]).collect();
        if let Some(sol) = linalg::solve(&square, &reduced_rhs, 1e-10) {
            if sol.iter().all(|&v| v >= -1e-12) {
                let mut x = vec![0.0; ns];
                for (&j, &v) in combo.iter().zip(&sol) {
                    x[j] = v.max(0.0);
                }
                let residual = (0..lp.n_rows())
                    .map(|r| {
                        let lhs: f64 = (0..ns).map(|j| a[r][j] * x[j]).sum();
                        (lhs - lp.rhs[r]).abs()
                    })
                    .fold(0.0, f64::max);
                if residual < 1e-9 {
                    let value = lp.objective(&x);
                    if best.as_ref().map_or(true, |(b, _)| value < *b - 1e-12) {
                        best = Some((value, x));
                    }
                }
            }
        }
        // Next combination in lexicographic order.
        let mut advanced = false;
        let mut i = rank;
        while i > 0 {
            i -= 1;
            if combo[i] < ns - rank + i {
                combo[i] += 1;
                for k in i + 1..rank {
                    combo[k] = combo[k - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    match best {
        None => Ok(MmotSolution::infeasible(tried)),
        Some((_, x)) => {
            let plan = lp.plan_from_masses(problem, &x)?;
            let value = crate::plan::coulomb_energy(&plan, &problem.cost);
            Ok(MmotSolution { plan: Some(plan), value, status: SolveStatus::Optimal, iterations: tried })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MongeReport {
    /// Every conditional law of the first coordinate puts at least 99% of
    /// its mass on one tuple.
    pub is_monge_like: bool,
    /// `maps[k][x]` is `T_{k+2}(x)` when Monge-like; `None` for zero-mass
    /// nodes.
    pub maps: Option<Vec<Vec<Option<usize>>>>,
    /// The plan is the symmetrization of a plan supported on a graph.
    pub monge_up_to_symmetrization: bool,
}

const MONGE_SHARE: f64 = 0.99;
const MAP_SEARCH_LIMIT: usize = 100_000;

/// Structure of an optimal plan: graph of maps, or symmetrization of one.
pub fn monge_diagnostic(solution: &MmotSolution) -> MongeReport {
    let Some(plan) = solution.plan() else {
        return MongeReport { is_monge_like: false, maps: None, monge_up_to_symmetrization: false };
    };
    monge_diagnostic_plan(plan)
}

pub fn monge_diagnostic_plan(plan: &TransportPlan) -> MongeReport {
    let n = plan.grid().len();
    let bodies = plan.n_bodies();
    let masses = plan.masses();
    let rest_count = n.pow(bodies as u32 - 1);

    // Conditional masses of the remaining coordinates given x_1.
    let mut supports: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut row_mass = vec![0.0; n];
    for x in 0..n {
        let mut row = Vec::new();
        for r in 0..rest_count {
            let mut idx = vec![x];
            idx.extend(unravel(r, n, bodies - 1));
            let m = masses[IxDyn(&idx)];
            if m > 0.0 {
                row.push((r, m));
                row_mass[x] += m;
            }
        }
        supports.push(row);
    }
    let total: f64 = row_mass.iter().sum();

    let mut is_monge = true;
    let mut maps = vec![vec![None; n]; bodies - 1];
    for x in 0..n {
        if row_mass[x] <= 1e-14 * total {
            continue;
        }
        let (r, m) = supports[x]
            .iter()
            .copied()
            .fold((0, -1.0), |acc, (r, m)| if m > acc.1 { (r, m) } else { acc });
        if m < MONGE_SHARE * row_mass[x] {
            is_monge = false;
        }
        for (k, &t) in unravel(r, n, bodies - 1).iter().enumerate() {
            maps[k][x] = Some(t);
        }
    }

    let up_to_sym = is_monge || symmetrized_graph_search(plan, &supports, &row_mass);
    MongeReport {
        is_monge_like: is_monge,
        maps: if is_monge { Some(maps) } else { None },
        monge_up_to_symmetrization: up_to_sym,
    }
}

/// Searches maps `x_1 -> (x_2, .., x_N)` drawn from the support of the plan
/// whose graph plan symmetrizes to the symmetrized input.
fn symmetrized_graph_search(plan: &TransportPlan, supports: &[Vec<(usize, f64)>], row_mass: &[f64]) -> bool {
    let n = plan.grid().len();
    let bodies = plan.n_bodies();
    let active: Vec<usize> = (0..n).filter(|&x| row_mass[x] > 0.0).collect();
    let mut count: usize = 1;
    for &x in &active {
        count = count.saturating_mul(supports[x].len());
        if count > MAP_SEARCH_LIMIT {
            return false;
        }
    }
    let target = symmetrize(plan).masses();
    let perms = permutations(bodies);
    let mut choice = vec![0usize; active.len()];
    loop {
        let mut graph = ArrayD::<f64>::zeros(target.raw_dim());
        for (slot, &x) in active.iter().enumerate() {
            let (r, _) = supports[x][choice[slot]];
            let mut idx = vec![x];
            idx.extend(unravel(r, n, bodies - 1));
            let share = row_mass[x] / perms.len() as f64;
            let mut probe = vec![0; bodies];
            for (p, _) in &perms {
                for k in 0..bodies {
                    probe[p[k]] = idx[k];
                }
                graph[IxDyn(&probe)] += share;
            }
        }
        let gap = graph.iter().zip(target.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap < 1e-9 {
            return true;
        }
        let mut k = 0;
        loop {
            if k == active.len() {
                return false;
            }
            choice[k] += 1;
            if choice[k] < supports[active[k]].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}
