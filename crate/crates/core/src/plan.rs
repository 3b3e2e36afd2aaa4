//! Marginal densities, N-body transport plans and wavefunctions on the
//! tensor grid, together with the Coulomb and kinetic energies.
//!
//! Plans and marginals store *densities*: the mass carried by the tuple
//! `(x_1, .., x_N)` is the density value times the product of the node
//! weights. With trapezoid weights the endpoint nodes carry half weight, so
//! a density that is constant on the grid integrates to `b - a` exactly.

use ndarray::{ArrayD, Axis, Dimension, IxDyn, Zip};
use num_complex::Complex64;

use crate::discretization::{difference_into, Grid1D};
use crate::error::{invalid, LabError, Result};
use crate::tensor::{axis_marginal, cube_shape, integrate_axis, permutations, tuple_weights};

/// Largest particle number supported by the dense representation.
pub const MAX_BODIES: usize = 3;
/// Largest number of grid tuples `n^N` supported by the dense representation.
pub const MAX_TUPLES: usize = 1_000_000;

const MASS_TOL: f64 = 1e-10;

pub(crate) fn check_size(n: usize, bodies: usize) -> Result<()> {
    if bodies == 0 || bodies > MAX_BODIES {
        return Err(invalid(format!("particle number must be in 1..={MAX_BODIES}, got {bodies}")));
    }
    let tuples = (n as u128).pow(bodies as u32);
    if tuples > MAX_TUPLES as u128 {
        return Err(invalid(format!(
            "{n}^{bodies} grid tuples exceed the dense limit of {MAX_TUPLES}"
        )));
    }
    Ok(())
}

fn check_finite_nonnegative<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(invalid(format!("{what} must be finite and nonnegative, found {v}")));
        }
    }
    Ok(())
}

/// One-body probability density `mu` on a grid; `rho = N mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDensity {
    grid: Grid1D,
    values: Vec<f64>,
    particle_count: usize,
}

impl MarginalDensity {
    pub fn new(grid: Grid1D, values: Vec<f64>, particle_count: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "density has {} values on a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if particle_count == 0 {
            return Err(invalid("particle count must be positive"));
        }
        check_finite_nonnegative(&values, "density values")?;
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("density must have unit mass, got {mass}")));
        }
        Ok(Self { grid, values, particle_count })
    }

    /// Rescales nonnegative values to unit mass.
    pub fn normalized(grid: Grid1D, values: Vec<f64>, particle_count: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid("density length does not match grid"));
        }
        check_finite_nonnegative(&values, "density values")?;
        let mass = grid.integrate(&values);
        if mass <= 0.0 {
            return Err(LabError::DegenerateInput("density has zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Self::new(grid, values, particle_count)
    }

    /// Density whose node masses `w_i mu_i` are the given numbers.
    pub fn from_masses(grid: Grid1D, masses: &[f64], particle_count: usize) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(invalid("mass vector length does not match grid"));
        }
        let values = masses.iter().zip(grid.weights()).map(|(m, w)| m / w).collect();
        Self::new(grid, values, particle_count)
    }

    /// Equal mass `1/n` on every node.
    pub fn uniform_masses(grid: Grid1D, particle_count: usize) -> Result<Self> {
        let n = grid.len();
        Self::from_masses(grid, &vec![1.0 / n as f64; n], particle_count)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.weights()).map(|(v, w)| v * w).collect()
    }

    /// `rho = N mu`.
    pub fn rho(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.particle_count as f64).collect()
    }

    pub fn with_particle_count(&self, particle_count: usize) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.clone(), particle_count)
    }
}

/// Nonnegative N-body density of unit mass on the tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    grid: Grid1D,
    n_bodies: usize,
    values: ArrayD<f64>,
    symmetric: bool,
}

impl TransportPlan {
    /// Validates shape, sign and mass. A plan flagged `symmetric` must be
    /// permutation invariant up to rounding.
    pub fn new(grid: Grid1D, values: ArrayD<f64>, symmetric: bool) -> Result<Self> {
        let bodies = values.ndim();
        check_size(grid.len(), bodies)?;
        if values.shape().iter().any(|&s| s != grid.len()) {
            return Err(invalid(format!(
                "plan shape {:?} is not a cube over {} nodes",
                values.shape(),
                grid.len()
            )));
        }
        check_finite_nonnegative(values.iter(), "plan values")?;
        let plan = Self { grid, n_bodies: bodies, values, symmetric };
        let mass = plan.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("plan must have unit mass, got {mass}")));
        }
        if symmetric && !plan.is_symmetric_within(1e-12) {
            return Err(invalid("plan flagged symmetric is not permutation invariant"));
        }
        Ok(plan)
    }

    pub(crate) fn from_parts(grid: Grid1D, values: ArrayD<f64>, symmetric: bool) -> Self {
        let n_bodies = values.ndim();
        Self { grid, n_bodies, values, symmetric }
    }

    /// Plan whose tuple masses are given directly.
    pub fn from_masses(grid: Grid1D, masses: ArrayD<f64>, symmetric: bool) -> Result<Self> {
        let bodies = masses.ndim();
        check_size(grid.len(), bodies)?;
        if masses.shape().iter().any(|&s| s != grid.len()) {
            return Err(invalid("mass array is not a cube over the grid"));
        }
        let w = tuple_weights(&grid, bodies);
        let values = &masses / &w;
        Self::new(grid, values, symmetric)
    }

    /// Point masses at the listed tuples.
    pub fn point_masses(grid: Grid1D, bodies: usize, atoms: &[(Vec<usize>, f64)]) -> Result<Self> {
        check_size(grid.len(), bodies)?;
        let mut masses = ArrayD::zeros(cube_shape(grid.len(), bodies));
        for (idx, m) in atoms {
            if idx.len() != bodies || idx.iter().any(|&i| i >= grid.len()) {
                return Err(invalid(format!("tuple {idx:?} is not a grid tuple")));
            }
            masses[IxDyn(idx)] += *m;
        }
        let plan = Self::from_masses(grid, masses, false)?;
        let symmetric = plan.is_symmetric_within(0.0);
        Ok(Self { symmetric, ..plan })
    }

    /// Independent coupling `mu ⊗ .. ⊗ mu`.
    pub fn product(mu: &MarginalDensity, bodies: usize) -> Result<Self> {
        let grid = mu.grid().clone();
        check_size(grid.len(), bodies)?;
        let v = mu.values();
        let values = ArrayD::from_shape_fn(cube_shape(grid.len(), bodies), |idx| {
            (0..bodies).map(|k| v[idx[k]]).product()
        });
        Ok(Self::from_parts(grid, values, true))
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn n_bodies(&self) -> usize {
        self.n_bodies
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn into_values(self) -> ArrayD<f64> {
        self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Tuple masses `W(x) gamma(x)`.
    pub fn masses(&self) -> ArrayD<f64> {
        &self.values * &tuple_weights(&self.grid, self.n_bodies)
    }

    pub fn total_mass(&self) -> f64 {
        let w = tuple_weights(&self.grid, self.n_bodies);
        Zip::from(&self.values).and(&w).fold(0.0, |acc, v, w| acc + v * w)
    }

    /// Largest deviation between the plan and any coordinate permutation of
    /// it, relative to the largest entry, is at most `tol`.
    pub fn is_symmetric_within(&self, tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        permutations(self.n_bodies).iter().skip(1).all(|(p, _)| {
            let permuted = self.values.view().permuted_axes(IxDyn(p));
            Zip::from(&self.values)
                .and(&permuted)
                .all(|a, b| (a - b).abs() <= tol * scale)
        })
    }

    /// Density of the first `k` coordinates.
    pub fn marginal_k(&self, k: usize) -> Result<ArrayD<f64>> {
        if k == 0 || k >= self.n_bodies {
            return Err(invalid(format!(
                "marginal order must be in 1..{}, got {k}",
                self.n_bodies
            )));
        }
        let mut out = self.values.clone();
        while out.ndim() > k {
            let last = out.ndim() - 1;
            out = integrate_axis(&out, last, self.grid.weights());
        }
        Ok(out)
    }

    /// The `k`-body marginal as a plan in its own right.
    pub fn marginal_plan(&self, k: usize) -> Result<TransportPlan> {
        let values = self.marginal_k(k)?;
        Ok(Self::from_parts(self.grid.clone(), values, self.symmetric))
    }

    /// One-body marginal density along a single coordinate.
    pub fn one_body(&self, axis: usize) -> Vec<f64> {
        axis_marginal(&self.values, axis, self.grid.weights())
    }

    pub fn one_body_marginals(&self) -> Vec<Vec<f64>> {
        (0..self.n_bodies).map(|i| self.one_body(i)).collect()
    }

    /// Largest deviation of any one-body marginal from `mu`, in density units.
    pub fn marginal_error(&self, mu: &[f64]) -> f64 {
        self.one_body_marginals()
            .iter()
            .flat_map(|m| m.iter().zip(mu).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// First-coordinate marginal packaged as a density for `N` particles.
    pub fn marginal_density(&self) -> Result<MarginalDensity> {
        let mut values = self.one_body(0);
        for v in &mut values {
            *v = v.max(0.0);
        }
        MarginalDensity::new(self.grid.clone(), values, self.n_bodies)
    }
}

/// Pairwise Coulomb cost `1/|x - y|` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    grid: Grid1D,
    values: Vec<Vec<f64>>,
    diagonal: DiagonalMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagonalMode {
    /// `c(x, x)` equals the given finite value.
    Capped(f64),
    /// `c(x, x) = +inf`; plans with mass on coincident pairs are infeasible.
    Strict,
}

impl CostMatrix {
    /// Coulomb cost with the default diagonal cap `10/h`.
    pub fn coulomb(grid: &Grid1D) -> Self {
        Self::with_diagonal(grid, DiagonalMode::Capped(10.0 / grid.spacing()))
    }

    pub fn strict(grid: &Grid1D) -> Self {
        Self::with_diagonal(grid, DiagonalMode::Strict)
    }

    pub fn capped(grid: &Grid1D, cap: f64) -> Result<Self> {
        if !(cap >= 0.0) || !cap.is_finite() {
            return Err(invalid(format!("diagonal cap must be finite and nonnegative, got {cap}")));
        }
        Ok(Self::with_diagonal(grid, DiagonalMode::Capped(cap)))
    }

    fn with_diagonal(grid: &Grid1D, diagonal: DiagonalMode) -> Self {
        let x = grid.nodes();
        let diag = match diagonal {
            DiagonalMode::Capped(c) => c,
            DiagonalMode::Strict => f64::INFINITY,
        };
        let values = (0..x.len())
            .map(|i| {
                (0..x.len())
                    .map(|j| if i == j { diag } else { 1.0 / (x[i] - x[j]).abs() })
                    .collect()
            })
            .collect();
        Self { grid: grid.clone(), values, diagonal }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn diagonal(&self) -> DiagonalMode {
        self.diagonal
    }

    pub fn is_strict(&self) -> bool {
        self.diagonal == DiagonalMode::Strict
    }

    /// `sum_{i<j} c(x_i, x_j)` for a grid tuple.
    pub fn tuple_cost(&self, idx: &[usize]) -> f64 {
        let mut total = 0.0;
        for i in 0..idx.len() {
            for j in i + 1..idx.len() {
                total += self.values[idx[i]][idx[j]];
            }
        }
        total
    }
}

/// Interaction energy of an arbitrary nonnegative N-body density (not
/// necessarily normalized). Mass on an infinite-cost tuple gives `+inf`.
pub fn interaction_energy(grid: &Grid1D, density: &ArrayD<f64>, cost: &CostMatrix) -> f64 {
    let w = grid.weights();
    let mut total = 0.0;
    for (idx, &v) in density.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let slice = idx.slice();
        let weight: f64 = slice.iter().map(|&i| w[i]).product();
        let c = cost.tuple_cost(slice);
        if c.is_infinite() {
            return f64::INFINITY;
        }
        total += weight * v * c;
    }
    total
}

/// `V_ee[gamma] = ∫ sum_{i<j} c(x_i, x_j) dgamma`.
pub fn coulomb_energy(plan: &TransportPlan, cost: &CostMatrix) -> f64 {
    interaction_energy(plan.grid(), plan.values(), cost)
}

/// Discrete partial derivative along one axis, same stencil as
/// [`crate::discretization::gradient_fd`].
pub(crate) fn axis_derivative<T>(a: &ArrayD<T>, axis: usize, h: f64) -> ArrayD<T>
where
    T: Copy + Default + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let mut out = ArrayD::from_elem(a.raw_dim(), T::default());
    let mut buf_in = Vec::new();
    let mut buf_out = Vec::new();
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(a.lanes(Axis(axis)))
        .for_each(|mut o, i| {
            buf_in.clear();
            buf_in.extend(i.iter().copied());
            buf_out.clear();
            buf_out.resize(buf_in.len(), T::default());
            difference_into(&buf_in, h, &mut buf_out);
            for (dst, src) in o.iter_mut().zip(&buf_out) {
                *dst = *src;
            }
        });
    out
}

/// Amplitude on the tensor grid. Spinful wavefunctions hold one spatial
/// component per spin configuration; bit `i` of the component index is the
/// spin of particle `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    grid: Grid1D,
    n_bodies: usize,
    components: Vec<ArrayD<Complex64>>,
    spinful: bool,
}

impl Wavefunction {
    /// Arbitrary amplitudes; only shape and finiteness are checked.
    pub fn from_amplitudes(
        grid: Grid1D,
        n_bodies: usize,
        components: Vec<ArrayD<Complex64>>,
        spinful: bool,
    ) -> Result<Self> {
        check_size(grid.len(), n_bodies)?;
        let expected = if spinful { 1usize << n_bodies } else { 1 };
        if components.len() != expected {
            return Err(invalid(format!(
                "expected {expected} spin components, got {}",
                components.len()
            )));
        }
        let shape = vec![grid.len(); n_bodies];
        for c in &components {
            if c.shape() != shape.as_slice() {
                return Err(invalid(format!("component shape {:?} != {shape:?}", c.shape())));
            }
            if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(invalid("amplitudes must be finite"));
            }
        }
        Ok(Self { grid, n_bodies, components, spinful })
    }

    fn require_normalized(self) -> Result<Self> {
        let norm = self.norm_sq();
        if (norm - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("wavefunction must be normalized, |psi|^2 = {norm}")));
        }
        Ok(self)
    }

    pub fn from_real(grid: Grid1D, values: ArrayD<f64>) -> Result<Self> {
        let n_bodies = values.ndim();
        let c = values.mapv(|v| Complex64::new(v, 0.0));
        Self::from_amplitudes(grid, n_bodies, vec![c], false)?.require_normalized()
    }

    pub fn from_complex(grid: Grid1D, values: ArrayD<Complex64>) -> Result<Self> {
        let n_bodies = values.ndim();
        Self::from_amplitudes(grid, n_bodies, vec![values], false)?.require_normalized()
    }

    pub fn spinful(grid: Grid1D, n_bodies: usize, components: Vec<ArrayD<Complex64>>) -> Result<Self> {
        Self::from_amplitudes(grid, n_bodies, components, true)?.require_normalized()
    }

    /// `psi = sqrt(gamma)`.
    pub fn from_plan(plan: &TransportPlan) -> Self {
        let c = plan.values().mapv(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
        Self {
            grid: plan.grid().clone(),
            n_bodies: plan.n_bodies(),
            components: vec![c],
            spinful: false,
        }
    }

    /// Scales to unit norm.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm_sq();
        if !(norm > 0.0) {
            return Err(LabError::DegenerateInput("wavefunction vanishes identically".into()));
        }
        let s = 1.0 / norm.sqrt();
        for c in &mut self.components {
            c.mapv_inplace(|z| z * s);
        }
        Ok(self)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn n_bodies(&self) -> usize {
        self.n_bodies
    }

    pub fn is_spinful(&self) -> bool {
        self.spinful
    }

    pub fn components(&self) -> &[ArrayD<Complex64>] {
        &self.components
    }

    pub fn component(&self, spin: usize) -> &ArrayD<Complex64> {
        &self.components[spin]
    }

    /// Position density `sum_s |psi_s|^2`.
    pub fn density(&self) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(self.components[0].raw_dim());
        for c in &self.components {
            Zip::from(&mut out).and(c).for_each(|o, z| *o += z.norm_sqr());
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        let w = tuple_weights(&self.grid, self.n_bodies);
        Zip::from(&self.density()).and(&w).fold(0.0, |acc, d, w| acc + d * w)
    }

    pub fn is_real(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|z| z.im == 0.0))
    }

    /// Real parts of the components.
    pub fn real_components(&self) -> Vec<ArrayD<f64>> {
        self.components.iter().map(|c| c.mapv(|z| z.re)).collect()
    }

    /// `|psi|^2` as a transport plan; requires unit norm.
    pub fn to_plan(&self) -> Result<TransportPlan> {
        TransportPlan::new(self.grid.clone(), self.density(), false)
    }

    /// One-body marginal of the position density along `axis`.
    pub fn one_body(&self, axis: usize) -> Vec<f64> {
        axis_marginal(&self.density(), axis, self.grid.weights())
    }

    /// The wavefunction with particles relabelled by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let components = (0..self.components.len())
            .map(|t| {
                let source = if self.spinful {
                    perm.iter()
                        .enumerate()
                        .map(|(k, &pk)| ((t >> k) & 1) << pk)
                        .sum()
                } else {
                    0
                };
                self.components[source].view().permuted_axes(IxDyn(perm)).to_owned()
            })
            .collect();
        Self { components, ..self.clone() }
    }
}

/// `T[psi] = sum_i ∫ |∂_{x_i} psi|^2`, summed over spin components.
pub fn kinetic_energy(psi: &Wavefunction) -> f64 {
    let grid = psi.grid();
    let w = tuple_weights(grid, psi.n_bodies());
    let mut total = 0.0;
    for c in psi.components() {
        for axis in 0..psi.n_bodies() {
            let d = axis_derivative(c, axis, grid.spacing());
            total += Zip::from(&d).and(&w).fold(0.0, |acc, z, w| acc + z.norm_sqr() * w);
        }
    }
    total
}

/// Left and right sides of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    /// `lhs <= rhs (1 + rel_tol) + abs_tol`.
    pub fn holds(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.lhs <= self.rhs + rel_tol * self.rhs.abs() + abs_tol
    }
}

/// `∫ |∇ sqrt(mu)|^2` for the first-coordinate marginal against the
/// first-coordinate kinetic energy of `psi`.
pub fn hoffmann_ostenhof_check(psi: &Wavefunction) -> BoundCheck {
    let grid = psi.grid();
    let mu = psi.one_body(0);
    let root: Vec<f64> = mu.iter().map(|m| m.max(0.0).sqrt()).collect();
    let mut d = vec![0.0; root.len()];
    difference_into(&root, grid.spacing(), &mut d);
    let lhs = d.iter().zip(grid.weights()).map(|(g, w)| g * g * w).sum();

    let w = tuple_weights(grid, psi.n_bodies());
    let rhs = psi
        .components()
        .iter()
        .map(|c| {
            let d = axis_derivative(c, 0, grid.spacing());
            Zip::from(&d).and(&w).fold(0.0, |acc, z, w| acc + z.norm_sqr() * w)
        })
        .sum();
    BoundCheck { lhs, rhs }
}

pub fn l1_norm(grid: &Grid1D, values: &[f64]) -> f64 {
    values.iter().zip(grid.weights()).map(|(v, w)| v.abs() * w).sum()
}

pub fn l3_norm(grid: &Grid1D, values: &[f64]) -> f64 {
    let s: f64 = values.iter().zip(grid.weights()).map(|(v, w)| v.abs().powi(3) * w).sum();
    s.cbrt()
}

/// `max(||f||_1, ||f||_3)`.
pub fn l1_l3_norm(grid: &Grid1D, values: &[f64]) -> f64 {
    l1_norm(grid, values).max(l3_norm(grid, values))
}

pub fn l1_l3_distance(a: &MarginalDensity, b: &MarginalDensity) -> f64 {
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    l1_l3_norm(a.grid(), &diff)
}

/// Average over all coordinate permutations. Entries belonging to the same
/// orbit are computed once, so the result is exactly symmetric.
pub fn symmetrize(plan: &TransportPlan) -> TransportPlan {
    let bodies = plan.n_bodies();
    let perms = permutations(bodies);
    let inv = 1.0 / perms.len() as f64;
    let src = plan.values();
    let mut probe = vec![0usize; bodies];
    let values = ArrayD::from_shape_fn(src.raw_dim(), |idx| {
        let mut sorted: Vec<usize> = idx.slice().to_vec();
        sorted.sort_unstable();
        let mut acc = 0.0;
        for (p, _) in &perms {
            for k in 0..bodies {
                probe[p[k]] = sorted[k];
            }
            acc += src[IxDyn(&probe)];
        }
        acc * inv
    });
    TransportPlan::from_parts(plan.grid().clone(), values, true)
}

fn signed_average(psi: &Wavefunction, antisymmetric: bool) -> Result<Wavefunction> {
    let perms = permutations(psi.n_bodies());
    let inv = 1.0 / perms.len() as f64;
    let mut acc: Vec<ArrayD<Complex64>> = psi
        .components()
        .iter()
        .map(|c| ArrayD::zeros(c.raw_dim()))
        .collect();
    for (p, sign) in &perms {
        let s = if antisymmetric { *sign } else { 1.0 };
        let moved = psi.permuted(p);
        for (a, c) in acc.iter_mut().zip(moved.components()) {
            a.scaled_add(Complex64::new(s * inv, 0.0), c);
        }
    }
    let out = Wavefunction { components: acc, ..psi.clone() };
    let norm = out.norm_sq();
    if norm <= 1e-28 * psi.norm_sq().max(f64::MIN_POSITIVE) {
        return Err(LabError::DegenerateInput(if antisymmetric {
            "antisymmetrization annihilates the wavefunction".into()
        } else {
            "symmetrization annihilates the wavefunction".into()
        }));
    }
    out.normalized()
}

/// Symmetric part of `psi`, renormalized.
pub fn symmetrize_wavefunction(psi: &Wavefunction) -> Result<Wavefunction> {
    signed_average(psi, false)
}

/// Antisymmetric part of `psi` (positions and spins permuted together),
/// renormalized.
pub fn antisymmetrize(psi: &Wavefunction) -> Result<Wavefunction> {
    signed_average(psi, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::make_grid;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn two_node() -> Grid1D {
        make_grid(0.0, 1.0, 2).unwrap()
    }

    #[test]
    fn density_from_masses_roundtrip() {
        let mu = MarginalDensity::from_masses(two_node(), &[0.6, 0.4], 2).unwrap();
        assert_eq!(mu.values(), &[1.2, 0.8]);
        assert_eq!(mu.masses(), vec![0.6, 0.4]);
        assert!(MarginalDensity::from_masses(two_node(), &[0.6, 0.6], 2).is_err());
        assert!(MarginalDensity::new(two_node(), vec![-1.0, 3.0], 2).is_err());
    }

    #[test]
    fn diagonal_plan_marginal() {
        let plan =
            TransportPlan::point_masses(two_node(), 2, &[(vec![0, 0], 0.5), (vec![1, 1], 0.5)])
                .unwrap();
        let m1 = plan.marginal_k(1).unwrap();
        let masses: Vec<f64> = m1.iter().zip(two_node().weights()).map(|(v, w)| v * w).collect();
        assert_eq!(masses, vec![0.5, 0.5]);
        assert!(plan.marginal_k(0).is_err());
        assert!(plan.marginal_k(2).is_err());
    }

    #[test]
    fn product_marginal_is_factor() {
        let g = make_grid(0.0, 1.0, 5).unwrap();
        let mu = MarginalDensity::normalized(g, vec![1.0, 2.0, 3.0, 1.0, 0.5], 3).unwrap();
        let plan = TransportPlan::product(&mu, 3).unwrap();
        for axis in 0..3 {
            for (a, b) in plan.one_body(axis).iter().zip(mu.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn three_body_marginals_by_enumeration() {
        let g = two_node();
        let masses = ArrayD::from_shape_vec(
            IxDyn(&[2, 2, 2]),
            vec![0.1, 0.05, 0.2, 0.15, 0.12, 0.08, 0.22, 0.08],
        )
        .unwrap();
        let plan = symmetrize(&TransportPlan::from_masses(g.clone(), masses, false).unwrap());
        let m2 = plan.marginal_k(2).unwrap();
        let w = g.weights();
        for i in 0..2 {
            for j in 0..2 {
                let brute: f64 = (0..2).map(|k| plan.values()[[i, j, k]] * w[k]).sum();
                assert_abs_diff_eq!(m2[[i, j]], brute, epsilon = 1e-15);
                assert_abs_diff_eq!(m2[[i, j]], m2[[j, i]], epsilon = 1e-15);
            }
        }
        let from_m2: Vec<f64> = (0..2).map(|i| (0..2).map(|j| m2[[i, j]] * w[j]).sum()).collect();
        let m1 = plan.one_body(0);
        for i in 0..2 {
            assert_abs_diff_eq!(from_m2[i], m1[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn coulomb_examples() {
        let g = two_node();
        let cost = CostMatrix::coulomb(&g);
        let plan =
            TransportPlan::point_masses(g.clone(), 2, &[(vec![0, 1], 0.5), (vec![1, 0], 0.5)])
                .unwrap();
        assert_abs_diff_eq!(coulomb_energy(&plan, &cost), 1.0, epsilon = 1e-15);

        let g5 = make_grid(0.0, 1.0, 5).unwrap();
        let point = TransportPlan::point_masses(g5.clone(), 2, &[(vec![1, 4], 1.0)]).unwrap();
        assert_abs_diff_eq!(coulomb_energy(&point, &CostMatrix::coulomb(&g5)), 1.0 / 0.75, epsilon = 1e-12);

        let diag = TransportPlan::point_masses(g.clone(), 2, &[(vec![0, 0], 1.0)]).unwrap();
        assert_eq!(coulomb_energy(&diag, &CostMatrix::strict(&g)), f64::INFINITY);
        assert_abs_diff_eq!(coulomb_energy(&diag, &cost), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn pair_reduction_three_bodies() {
        let g = make_grid(0.0, 2.0, 4).unwrap();
        let masses = ArrayD::from_shape_fn(IxDyn(&[4, 4, 4]), |i| {
            1.0 + (i[0] * 7 + i[1] * 3 + i[2] * 5) as f64 % 4.0
        });
        let total = masses.sum();
        let plan = symmetrize(&TransportPlan::from_masses(g.clone(), masses / total, false).unwrap());
        let cost = CostMatrix::coulomb(&g);
        let full = coulomb_energy(&plan, &cost);
        let pair = coulomb_energy(&plan.marginal_plan(2).unwrap(), &cost);
        assert_abs_diff_eq!(full, 3.0 * pair, epsilon = 1e-12 * full);
    }

    #[test]
    fn kinetic_of_sine_mode() {
        let g = make_grid(0.0, 1.0, 201).unwrap();
        let vals = ArrayD::from_shape_fn(IxDyn(&[201]), |i| {
            2f64.sqrt() * (std::f64::consts::PI * g.node(i[0])).sin()
        });
        let norm: f64 = g.integrate(vals.as_slice().unwrap().iter().map(|v| v * v).collect::<Vec<_>>().as_slice());
        let psi = Wavefunction::from_real(g.clone(), vals / norm.sqrt()).unwrap();
        let t = kinetic_energy(&psi);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((t - pi2).abs() < 0.01 * pi2, "{t}");
    }

    #[test]
    fn kinetic_of_constant_is_zero() {
        let g = make_grid(0.0, 1.0, 9).unwrap();
        let psi = Wavefunction::from_real(g, ArrayD::from_elem(IxDyn(&[9, 9]), 1.0)).unwrap();
        assert!(kinetic_energy(&psi).abs() < 1e-24);
    }

    #[test]
    fn kinetic_is_tensor_additive() {
        let g = make_grid(0.0, 1.0, 31).unwrap();
        let mu = MarginalDensity::normalized(
            g.clone(),
            g.nodes().iter().map(|x| 0.2 + x * (1.0 - x)).collect(),
            2,
        )
        .unwrap();
        let psi = Wavefunction::from_plan(&TransportPlan::product(&mu, 2).unwrap());
        let root: Vec<f64> = mu.values().iter().map(|v| v.sqrt()).collect();
        let d = crate::discretization::gradient_fd(&g, &root).unwrap();
        let one: f64 = d.iter().zip(g.weights()).map(|(d, w)| d * d * w).sum();
        assert_abs_diff_eq!(kinetic_energy(&psi), 2.0 * one, epsilon = 1e-10);
    }

    #[test]
    fn hoffmann_ostenhof_cases() {
        let g = make_grid(0.0, 1.0, 201).unwrap();
        let x = g.nodes();
        let prod = ArrayD::from_shape_fn(IxDyn(&[201, 201]), |i| {
            (1.0 + x[i[0]]) * (2.0 - x[i[1]] * x[i[1]])
        });
        let psi = Wavefunction::from_amplitudes(
            g.clone(),
            2,
            vec![prod.mapv(|v| Complex64::new(v, 0.0))],
            false,
        )
        .unwrap()
        .normalized()
        .unwrap();
        let c = hoffmann_ostenhof_check(&psi);
        assert_abs_diff_eq!(c.lhs, c.rhs, epsilon = 1e-6);

        let mixed = ArrayD::from_shape_fn(IxDyn(&[201, 201]), |i| {
            (1.0 + x[i[0]]) * (0.5 - x[i[1]]) + x[i[0]] * x[i[0]] * 0.3
        });
        let psi = Wavefunction::from_amplitudes(
            g,
            2,
            vec![mixed.mapv(|v| Complex64::new(v, 0.0))],
            false,
        )
        .unwrap()
        .normalized()
        .unwrap();
        let c = hoffmann_ostenhof_check(&psi);
        assert!(c.lhs < c.rhs * (1.0 - 1e-6), "{c:?}");
    }

    #[test]
    fn norm_examples() {
        let g = two_node();
        assert_eq!(l1_l3_norm(&g, &[0.0, 0.0]), 0.0);
        let h = [0.2, -0.2];
        assert_abs_diff_eq!(l1_norm(&g, &h), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(l3_norm(&g, &h), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(l1_l3_norm(&g, &h), 0.2, epsilon = 1e-15);
        let g = make_grid(0.0, 1.0, 11).unwrap();
        assert_abs_diff_eq!(l1_l3_norm(&g, &[1.0; 11]), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetrize_examples() {
        let g = two_node();
        let p = TransportPlan::point_masses(g.clone(), 2, &[(vec![0, 1], 1.0)]).unwrap();
        let s = symmetrize(&p);
        let m = s.masses();
        assert_abs_diff_eq!(m[[0, 1]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[1, 0]], 0.5, epsilon = 1e-15);
        assert_eq!(symmetrize(&s).values(), s.values());

        let u = ndarray::Array1::from(vec![1.0, 2.0]);
        let prod = arr2(&[[u[0] * u[0], u[0] * u[1]], [u[1] * u[0], u[1] * u[1]]]).into_dyn();
        let psi = Wavefunction::from_amplitudes(g, 2, vec![prod.mapv(|v| Complex64::new(v, 0.0))], false)
            .unwrap();
        assert!(matches!(antisymmetrize(&psi), Err(LabError::DegenerateInput(_))));
    }

    #[test]
    fn spin_permutation_moves_bits() {
        let g = two_node();
        let mut comps = vec![ArrayD::zeros(IxDyn(&[2, 2])); 4];
        comps[1][[0, 1]] = Complex64::new(1.0, 0.0);
        let psi = Wavefunction::from_amplitudes(g, 2, comps, true).unwrap();
        let swapped = psi.permuted(&[1, 0]);
        assert_eq!(swapped.component(2)[[1, 0]], Complex64::new(1.0, 0.0));
        assert_eq!(swapped.component(1)[[0, 1]], Complex64::new(0.0, 0.0));
    }
}
