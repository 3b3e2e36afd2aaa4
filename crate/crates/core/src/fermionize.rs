//! From symmetric to antisymmetric trial states at almost the same
//! interaction energy.
//!
//! A symmetric `Phi` is multiplied by an antisymmetric factor `A_delta`
//! that equals `±1` once all particles are `delta` apart. The density lost
//! near coincidences is `|B_delta Phi|^2` with `A^2 + B^2 = 1`; it is
//! represented by a real Slater determinant `Psi'` and added back as the
//! imaginary part, `Psi~ = Psi_delta + i Psi'`, which has no interference
//! term because both parts are real.

use ndarray::{ArrayD, Axis, IxDyn, Zip};
use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{binomial, Grid1D};
use crate::error::{invalid, Result};
use crate::harriman::{gram_matrix, harriman_orbitals, orthonormality_defect, OrbitalKind};
use crate::plan::{
    check_size, interaction_energy, kinetic_energy, l1_l3_norm, l1_norm, BoundCheck, CostMatrix,
    MarginalDensity, Wavefunction,
};
use crate::tensor::{axis_marginal, cube_shape, permutations};

/// `2 (8 pi / 3)^(1/3)`.
pub fn c0() -> f64 {
    2.0 * (8.0 * std::f64::consts::PI / 3.0).cbrt()
}

/// The antisymmetric node factor `A_delta` and its complement `B_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeFunctions {
    delta: f64,
}

pub fn make_node_functions(delta: f64) -> Result<NodeFunctions> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("node width must be positive, got {delta}")));
    }
    Ok(NodeFunctions { delta })
}

impl NodeFunctions {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Odd, Lipschitz, `s^2 = 1` outside `[-1, 1]`.
    pub fn s(z: f64) -> f64 {
        if z.abs() < 1.0 {
            (std::f64::consts::FRAC_PI_2 * z).sin()
        } else {
            z.signum()
        }
    }

    /// Companion of [`Self::s`] with `c^2 + s^2 = 1`.
    pub fn c(z: f64) -> f64 {
        if z.abs() < 1.0 {
            (std::f64::consts::FRAC_PI_2 * z).cos()
        } else {
            0.0
        }
    }

    /// `A_delta(x) = prod_{i<j} s((x_i - x_j) / delta)`.
    ///
    /// The modulus is taken over sorted coordinates and the sign from the
    /// ordering, so `A` is exactly antisymmetric in floating point.
    pub fn a(&self, x: &[f64]) -> f64 {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut modulus = 1.0;
        for i in 0..sorted.len() {
            for j in i + 1..sorted.len() {
                modulus *= Self::s((sorted[j] - sorted[i]) / self.delta);
            }
        }
        let mut sign = 1.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                if x[i] == x[j] {
                    return 0.0;
                }
                if x[i] < x[j] {
                    sign = -sign;
                }
            }
        }
        sign * modulus
    }

    /// `B_delta = sqrt(1 - A_delta^2)`, exactly symmetric.
    pub fn b(&self, x: &[f64]) -> f64 {
        let a = self.a(x);
        (1.0 - a * a).max(0.0).sqrt()
    }

    pub fn a_on_grid(&self, grid: &Grid1D, bodies: usize) -> ArrayD<f64> {
        self.on_grid(grid, bodies, |x| self.a(x))
    }

    pub fn b_on_grid(&self, grid: &Grid1D, bodies: usize) -> ArrayD<f64> {
        self.on_grid(grid, bodies, |x| self.b(x))
    }

    fn on_grid(&self, grid: &Grid1D, bodies: usize, f: impl Fn(&[f64]) -> f64) -> ArrayD<f64> {
        let nodes = grid.nodes();
        let mut x = vec![0.0; bodies];
        ArrayD::from_shape_fn(cube_shape(grid.len(), bodies), |idx| {
            for (k, slot) in x.iter_mut().enumerate() {
                *slot = nodes[idx[k]];
            }
            f(&x)
        })
    }

    /// Gradient bound for `B_delta` obtained by summing over nonempty pair
    /// subsets: `(2^M - 1) M sqrt(2) pi / (2 delta)`, `M = C(N, 2)`.
    pub fn lipschitz_bound(&self, bodies: usize) -> f64 {
        let m = binomial(bodies, 2) as f64;
        let subsets = 2f64.powf(m) - 1.0;
        // |∇ c((x_i - x_j)/delta)| and |∇ s(..)| are at most sqrt(2) (pi/2) / delta.
        let per_factor = std::f64::consts::SQRT_2 * std::f64::consts::FRAC_PI_2 / self.delta;
        subsets * m * per_factor
    }
}

/// Largest one-sided difference quotient of a tensor along any axis.
pub fn max_fd_slope(values: &ArrayD<f64>, h: f64) -> f64 {
    let mut worst = 0.0f64;
    for axis in 0..values.ndim() {
        for lane in values.lanes(Axis(axis)) {
            for pair in lane.windows(2) {
                worst = worst.max((pair[1] - pair[0]).abs() / h);
            }
        }
    }
    worst
}

/// Discrete slope of `B_delta` against the analytic bound times `1.1`.
pub fn lipschitz_check(nf: &NodeFunctions, grid: &Grid1D, bodies: usize) -> BoundCheck {
    let b = nf.b_on_grid(grid, bodies);
    BoundCheck {
        lhs: max_fd_slope(&b, grid.spacing()),
        rhs: 1.1 * nf.lipschitz_bound(bodies),
    }
}

/// Index of the all-up spin configuration (bit `i` set means particle `i`
/// has spin down).
pub const ALL_UP: usize = 0;

fn require_spinless(phi: &Wavefunction) -> Result<()> {
    if phi.is_spinful() {
        return Err(invalid("expected a spinless symmetric wavefunction"));
    }
    Ok(())
}

fn spinful_from(grid: &Grid1D, bodies: usize, up: ArrayD<Complex64>) -> Result<Wavefunction> {
    let mut components = vec![ArrayD::zeros(up.raw_dim()); 1 << bodies];
    components[ALL_UP] = up;
    Wavefunction::from_amplitudes(grid.clone(), bodies, components, true)
}

#[derive(Debug, Clone)]
pub struct NodeInsertion {
    /// `A_delta Phi chi` with `chi` the all-up spin state; not normalized.
    pub psi_delta: Wavefunction,
    /// Position density `A_delta^2 |Phi|^2`.
    pub rho_n: ArrayD<f64>,
}

pub fn insert_node(phi: &Wavefunction, nf: &NodeFunctions) -> Result<NodeInsertion> {
    require_spinless(phi)?;
    let (grid, bodies) = (phi.grid(), phi.n_bodies());
    let a = nf.a_on_grid(grid, bodies);
    let mut up = phi.component(0).clone();
    Zip::from(&mut up).and(&a).for_each(|z, &a| *z *= a);
    let psi_delta = spinful_from(grid, bodies, up)?;
    let rho_n = psi_delta.density();
    Ok(NodeInsertion { psi_delta, rho_n })
}

#[derive(Debug, Clone)]
pub struct ExcessDensity {
    /// One-body marginal of `|B_delta Phi|^2`, i.e. the per-particle
    /// excess `(rho - rho_{Psi_delta}) / N`.
    pub rho_prime: Vec<f64>,
    /// `B_delta Phi`.
    pub phi_prime: Wavefunction,
}

pub fn excess_density(phi: &Wavefunction, nf: &NodeFunctions) -> Result<ExcessDensity> {
    require_spinless(phi)?;
    let (grid, bodies) = (phi.grid(), phi.n_bodies());
    let b = nf.b_on_grid(grid, bodies);
    let mut values = phi.component(0).clone();
    Zip::from(&mut values).and(&b).for_each(|z, &b| *z *= b);
    let phi_prime = Wavefunction::from_amplitudes(grid.clone(), bodies, vec![values], false)?;
    let rho_prime = phi_prime.one_body(0);
    Ok(ExcessDensity { rho_prime, phi_prime })
}

/// `Psi + i Psi'` for two real wavefunctions of the same layout.
pub fn match_wavefunctions(psi: &Wavefunction, psi_prime: &Wavefunction) -> Result<Wavefunction> {
    if !psi.is_real() || !psi_prime.is_real() {
        return Err(invalid("wavefunction matching needs real-valued inputs"));
    }
    if psi.n_bodies() != psi_prime.n_bodies()
        || psi.is_spinful() != psi_prime.is_spinful()
        || !psi.grid().same_as(psi_prime.grid())
    {
        return Err(invalid("wavefunctions differ in grid, particle number or spin layout"));
    }
    let components = psi
        .components()
        .iter()
        .zip(psi_prime.components())
        .map(|(a, b)| {
            let mut out = a.clone();
            Zip::from(&mut out).and(b).for_each(|z, w| *z += Complex64::new(0.0, w.re));
            out
        })
        .collect();
    Wavefunction::from_amplitudes(psi.grid().clone(), psi.n_bodies(), components, psi.is_spinful())
}

/// `max |Psi(.., x_j, .., x_i, ..) + Psi(.., x_i, .., x_j, ..)|` over
/// transpositions, with spins moved along.
pub fn antisymmetry_defect(psi: &Wavefunction) -> f64 {
    let bodies = psi.n_bodies();
    let mut worst = 0.0f64;
    for i in 0..bodies {
        for j in i + 1..bodies {
            let mut perm: Vec<usize> = (0..bodies).collect();
            perm.swap(i, j);
            let moved = psi.permuted(&perm);
            for (a, b) in psi.components().iter().zip(moved.components()) {
                Zip::from(a).and(b).for_each(|x, y| worst = worst.max((x + y).norm()));
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinOrbital {
    pub values: Vec<Complex64>,
    pub spin: Spin,
}

fn check_orthonormal(grid: &Grid1D, orbitals: &[SpinOrbital], tol: f64) -> Result<()> {
    for spin in [Spin::Up, Spin::Down] {
        let same: Vec<Vec<Complex64>> =
            orbitals.iter().filter(|o| o.spin == spin).map(|o| o.values.clone()).collect();
        if same.iter().any(|o| o.len() != grid.len()) {
            return Err(invalid("orbital length does not match grid"));
        }
        let defect = orthonormality_defect(&gram_matrix(grid, &same));
        if defect > tol {
            return Err(invalid(format!("orbitals are not orthonormal (defect {defect:.3e})")));
        }
    }
    Ok(())
}

/// Normalized Slater determinant `det[phi_k(x_i, s_i)] / sqrt(N!)` as a
/// spinful wavefunction.
pub fn slater_determinant(grid: &Grid1D, orbitals: &[SpinOrbital]) -> Result<Wavefunction> {
    let bodies = orbitals.len();
    check_size(grid.len(), bodies)?;
    if orbitals.iter().any(|o| o.values.len() != grid.len()) {
        return Err(invalid("orbital length does not match grid"));
    }
    let perms = permutations(bodies);
    let norm = 1.0 / (perms.len() as f64).sqrt();
    let components = (0..1usize << bodies)
        .map(|config| {
            let spin_of = |i: usize| if (config >> i) & 1 == 0 { Spin::Up } else { Spin::Down };
            ArrayD::from_shape_fn(cube_shape(grid.len(), bodies), |idx: IxDyn| {
                let mut total = Complex64::new(0.0, 0.0);
                for (p, sign) in &perms {
                    let mut term = Complex64::new(*sign, 0.0);
                    for i in 0..bodies {
                        let orb = &orbitals[p[i]];
                        if orb.spin != spin_of(i) {
                            term = Complex64::new(0.0, 0.0);
                            break;
                        }
                        term *= orb.values[idx[i]];
                    }
                    total += term;
                }
                total * norm
            })
        })
        .collect();
    Wavefunction::from_amplitudes(grid.clone(), bodies, components, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlaterVee {
    /// `½ ∬ c (rho rho' - sum_s |gamma_s|^2)`.
    pub direct_minus_exchange: f64,
    /// `½ ∬ c rho rho'`.
    pub direct_only: f64,
}

/// Interaction energy of a Slater determinant from its one-body density
/// matrix, together with the Hartree upper bound.
pub fn slater_vee(grid: &Grid1D, orbitals: &[SpinOrbital], cost: &CostMatrix) -> Result<SlaterVee> {
    check_orthonormal(grid, orbitals, 1e-8)?;
    let n = grid.len();
    let w = grid.weights();
    let rho: Vec<f64> = (0..n).map(|x| orbitals.iter().map(|o| o.values[x].norm_sqr()).sum()).collect();
    let mut direct = 0.0;
    let mut exchange = 0.0;
    for x in 0..n {
        for y in 0..n {
            let c = cost.get(x, y);
            let ww = w[x] * w[y];
            direct += ww * c * rho[x] * rho[y];
            let mut ex = 0.0;
            for spin in [Spin::Up, Spin::Down] {
                let gamma: Complex64 = orbitals
                    .iter()
                    .filter(|o| o.spin == spin)
                    .map(|o| o.values[x] * o.values[y].conj())
                    .sum();
                ex += gamma.norm_sqr();
            }
            exchange += ww * c * ex;
        }
    }
    Ok(SlaterVee {
        direct_minus_exchange: 0.5 * (direct - exchange),
        direct_only: 0.5 * direct,
    })
}

#[derive(Debug, Clone)]
pub struct DensityRepresentation {
    /// Real antisymmetric all-up state with one-body marginal `rho_prime`
    /// (zero if `rho_prime` has no mass).
    pub psi: Wavefunction,
    pub mass: f64,
    /// `max |marginal(psi) - rho_prime|`.
    pub density_error: f64,
}

/// Real Slater determinant of Harriman orbitals for the per-particle
/// density `rho_prime`, scaled by the square root of its mass.
pub fn represent_density(grid: &Grid1D, rho_prime: &[f64], bodies: usize) -> Result<DensityRepresentation> {
    check_size(grid.len(), bodies)?;
    if rho_prime.len() != grid.len() {
        return Err(invalid("density length does not match grid"));
    }
    let clipped: Vec<f64> = rho_prime.iter().map(|v| v.max(0.0)).collect();
    let mass = grid.integrate(&clipped);
    if !(mass > 0.0) {
        let zero = ArrayD::zeros(cube_shape(grid.len(), bodies));
        let psi = spinful_from(grid, bodies, zero)?;
        let density_error = rho_prime.iter().map(|v| v.abs()).fold(0.0, f64::max);
        return Ok(DensityRepresentation { psi, mass: 0.0, density_error });
    }
    let v = MarginalDensity::normalized(grid.clone(), clipped, bodies)?;
    let set = harriman_orbitals(&v, bodies, OrbitalKind::Real)?;
    // Each orbital carries mass^(1/2N), so the determinant carries sqrt(mass).
    let scale = mass.powf(0.5 / bodies as f64);
    let orbitals: Vec<SpinOrbital> = set
        .orbitals()
        .iter()
        .map(|o| SpinOrbital {
            values: o.iter().map(|z| Complex64::new(z.re * scale, 0.0)).collect(),
            spin: Spin::Up,
        })
        .collect();
    let psi = slater_determinant(grid, &orbitals)?;
    let marginal = psi.one_body(0);
    let density_error = marginal
        .iter()
        .zip(rho_prime)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DensityRepresentation { psi, mass, density_error })
}

/// `V_ee` of the position density of `psi`.
pub fn wavefunction_vee(psi: &Wavefunction, cost: &CostMatrix) -> f64 {
    interaction_energy(psi.grid(), &psi.density(), cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BosonFermionRelation {
    pub t_bos: f64,
    pub t_fer: f64,
    pub vee_bos: f64,
    pub vee_fer: f64,
    pub vee_equal: bool,
}

/// Compares `psi` with its bosonic shadow `Phi = (sum_s |psi_s|^2)^(1/2)`.
pub fn bosonic_fermionic_relation(psi: &Wavefunction, cost: &CostMatrix) -> Result<BosonFermionRelation> {
    let phi = bosonic_shadow(psi)?;
    let vee_bos = wavefunction_vee(&phi, cost);
    let vee_fer = wavefunction_vee(psi, cost);
    Ok(BosonFermionRelation {
        t_bos: kinetic_energy(&phi),
        t_fer: kinetic_energy(psi),
        vee_bos,
        vee_fer,
        vee_equal: (vee_bos - vee_fer).abs() <= 1e-10 * (1.0 + vee_fer.abs()),
    })
}

/// `(sum_s |psi_s|^2)^(1/2)` as a spinless wavefunction.
pub fn bosonic_shadow(psi: &Wavefunction) -> Result<Wavefunction> {
    let amp = psi.density().mapv(|d| Complex64::new(d.sqrt(), 0.0));
    Wavefunction::from_amplitudes(psi.grid().clone(), psi.n_bodies(), vec![amp], false)
}

/// Two-particle state `Phi(x_1, x_2) (up down - down up) / sqrt(2)`.
pub fn singlet(phi: &Wavefunction) -> Result<Wavefunction> {
    require_spinless(phi)?;
    if phi.n_bodies() != 2 {
        return Err(invalid("the singlet construction needs exactly two particles"));
    }
    let base = phi.component(0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut components = vec![ArrayD::zeros(base.raw_dim()); 4];
    // Bit i is the spin of particle i: 0b10 = (up, down), 0b01 = (down, up).
    components[0b10] = base.mapv(|z| z * s);
    components[0b01] = base.mapv(|z| -z * s);
    Wavefunction::from_amplitudes(phi.grid().clone(), 2, components, true)
}

/// `|∬ f(x) g(y) c(x, y)|` against `c0 ||f||_1 ||g||_{L1∩L3}`.
pub fn c0_check(grid: &Grid1D, f: &[f64], g: &[f64], cost: &CostMatrix) -> Result<BoundCheck> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(invalid("test functions do not match the grid"));
    }
    let w = grid.weights();
    let mut lhs = 0.0;
    for x in 0..grid.len() {
        for y in 0..grid.len() {
            lhs += w[x] * w[y] * f[x] * g[y] * cost.get(x, y);
        }
    }
    Ok(BoundCheck { lhs: lhs.abs(), rhs: c0() * l1_norm(grid, f) * l1_l3_norm(grid, g) })
}

/// Everything the node-insertion argument predicts, evaluated for one `delta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FermionizationReport {
    pub delta: f64,
    /// `max |A^2 + B^2 - 1|`.
    pub partition_error: f64,
    /// `max |(|Phi'|^2 + rho_N) - |Phi|^2|`.
    pub density_split_error: f64,
    /// `max |rho' - (rho_Phi - rho_{Psi_delta})|` in per-particle units.
    pub excess_marginal_error: f64,
    pub excess_min: f64,
    pub excess_l1: f64,
    pub antisymmetry_defect: f64,
    pub vee_phi: f64,
    pub vee_psi_delta: f64,
    pub vee_psi_prime: f64,
    pub vee_tilde: f64,
    /// `|V(Psi~) - V(Psi_delta) - V(Psi')|`.
    pub vee_additivity_error: f64,
    /// Marginal error of the Slater representative of the excess.
    pub representation_error: f64,
    /// `max |marginal(Psi~) - marginal(Phi)|`.
    pub total_density_error: f64,
    pub lipschitz: BoundCheck,
}

pub fn fermionize(phi: &Wavefunction, delta: f64, cost: &CostMatrix) -> Result<FermionizationReport> {
    let nf = make_node_functions(delta)?;
    let (grid, bodies) = (phi.grid(), phi.n_bodies());
    let a = nf.a_on_grid(grid, bodies);
    let b = nf.b_on_grid(grid, bodies);
    let partition_error =
        Zip::from(&a).and(&b).fold(0.0f64, |acc, a, b| acc.max((a * a + b * b - 1.0).abs()));

    let inserted = insert_node(phi, &nf)?;
    let excess = excess_density(phi, &nf)?;
    let full = phi.density();
    let split = excess.phi_prime.density();
    let density_split_error = Zip::from(&full)
        .and(&split)
        .and(&inserted.rho_n)
        .fold(0.0f64, |acc, f, s, r| acc.max((s + r - f).abs()));

    let w = grid.weights();
    let rho_phi = axis_marginal(&full, 0, w);
    let rho_delta = axis_marginal(&inserted.rho_n, 0, w);
    let excess_marginal_error = excess
        .rho_prime
        .iter()
        .zip(rho_phi.iter().zip(&rho_delta))
        .map(|(e, (p, d))| (e - (p - d)).abs())
        .fold(0.0, f64::max);
    let excess_min = excess.rho_prime.iter().copied().fold(f64::INFINITY, f64::min);
    let excess_l1 = l1_norm(grid, &excess.rho_prime);

    let rep = represent_density(grid, &excess.rho_prime, bodies)?;
    let tilde = match_wavefunctions(&inserted.psi_delta, &rep.psi)?;
    let vee_psi_delta = wavefunction_vee(&inserted.psi_delta, cost);
    let vee_psi_prime = wavefunction_vee(&rep.psi, cost);
    let vee_tilde = wavefunction_vee(&tilde, cost);
    let total_density_error = tilde
        .one_body(0)
        .iter()
        .zip(&rho_phi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(FermionizationReport {
        delta,
        partition_error,
        density_split_error,
        excess_marginal_error,
        excess_min,
        excess_l1,
        antisymmetry_defect: antisymmetry_defect(&tilde),
        vee_phi: wavefunction_vee(phi, cost),
        vee_psi_delta,
        vee_psi_prime,
        vee_tilde,
        vee_additivity_error: (vee_tilde - vee_psi_delta - vee_psi_prime).abs(),
        representation_error: rep.density_error,
        total_density_error,
        lipschitz: lipschitz_check(&nf, grid, bodies),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::make_grid;
    use crate::plan::TransportPlan;

    fn bump_state(n: usize, bodies: usize) -> Wavefunction {
        let grid = make_grid(0.0, 1.0, n).unwrap();
        let values = grid.nodes().iter().map(|x| 1.0 + (std::f64::consts::PI * x).sin()).collect();
        let mu = MarginalDensity::normalized(grid, values, bodies).unwrap();
        Wavefunction::from_plan(&TransportPlan::product(&mu, bodies).unwrap())
    }

    #[test]
    fn node_function_values() {
        assert_eq!(NodeFunctions::s(0.0), 0.0);
        assert_eq!(NodeFunctions::c(0.0), 1.0);
        assert!((NodeFunctions::s(1.0 - 1e-15) - 1.0).abs() < 1e-12);
        assert!(NodeFunctions::c(1.0 - 1e-15).abs() < 1e-12);
        assert_eq!(NodeFunctions::s(1.0), 1.0);
        assert_eq!(NodeFunctions::s(-1.0), -1.0);
        assert_eq!(NodeFunctions::c(-1.0), 0.0);
        for k in -300..=300 {
            let z = k as f64 / 100.0;
            let (s, c) = (NodeFunctions::s(z), NodeFunctions::c(z));
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
            assert_eq!(NodeFunctions::s(-z), -s);
        }
        assert!(make_node_functions(0.0).is_err());
    }

    #[test]
    fn separated_pair_has_unit_modulus() {
        let nf = make_node_functions(0.1).unwrap();
        assert_eq!(nf.a(&[0.5, 0.2]), 1.0);
        assert_eq!(nf.a(&[0.2, 0.5]), -1.0);
        assert_eq!(nf.b(&[0.2, 0.5]), 0.0);
        assert_eq!(nf.a(&[0.3, 0.3]), 0.0);
        assert_eq!(nf.b(&[0.3, 0.3]), 1.0);
    }

    #[test]
    fn a_antisymmetric_b_symmetric_exactly() {
        let grid = make_grid(0.0, 1.0, 9).unwrap();
        let nf = make_node_functions(0.3).unwrap();
        let a = nf.a_on_grid(&grid, 3);
        let b = nf.b_on_grid(&grid, 3);
        for (idx, &v) in a.indexed_iter() {
            let swapped = [idx[1], idx[0], idx[2]];
            assert_eq!(a[IxDyn(&swapped)], -v);
            assert_eq!(b[IxDyn(&swapped)], b[&idx]);
            assert!((v * v + b[&idx] * b[&idx] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_bound_holds_under_refinement() {
        for n in [17, 33, 65] {
            let grid = make_grid(0.0, 1.0, n).unwrap();
            let nf = make_node_functions(0.25).unwrap();
            for bodies in [2, 3] {
                let check = lipschitz_check(&nf, &grid, bodies);
                assert!(check.holds(0.0, 0.0), "n={n} N={bodies}: {check:?}");
            }
        }
    }

    #[test]
    fn tiny_delta_keeps_off_diagonal_density() {
        let phi = bump_state(8, 2);
        let grid = phi.grid().clone();
        let nf = make_node_functions(0.5 * grid.spacing()).unwrap();
        let ins = insert_node(&phi, &nf).unwrap();
        let full = phi.density();
        for (idx, &r) in ins.rho_n.indexed_iter() {
            if idx[0] == idx[1] {
                assert_eq!(r, 0.0);
            } else {
                assert!((r - full[&idx]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn node_insertion_is_antisymmetric_and_squeezed() {
        let phi = bump_state(8, 3);
        let nf = make_node_functions(0.3).unwrap();
        let ins = insert_node(&phi, &nf).unwrap();
        assert!(antisymmetry_defect(&ins.psi_delta) < 1e-14);
        let full = phi.density();
        Zip::from(&ins.rho_n).and(&full).for_each(|r, f| assert!(*r >= 0.0 && *r <= *f));
    }

    #[test]
    fn excess_density_identities() {
        let phi = bump_state(10, 2);
        let h = phi.grid().spacing();
        let mut previous = f64::INFINITY;
        for k in [4.0, 2.0, 1.0, 0.25] {
            let nf = make_node_functions(k * h).unwrap();
            let ex = excess_density(&phi, &nf).unwrap();
            assert!(ex.rho_prime.iter().all(|v| *v >= 0.0));
            let l1 = l1_norm(phi.grid(), &ex.rho_prime);
            // Below the grid spacing only the diagonal is left, so the
            // excess stops shrinking.
            if k >= 1.0 {
                assert!(l1 < previous);
            } else {
                assert!(l1 <= previous && l1 > 0.0);
            }
            previous = l1;
        }
    }

    #[test]
    fn representation_carries_the_excess_mass() {
        for bodies in [2, 3] {
            let grid = make_grid(0.0, 1.0, 65).unwrap();
            let rho: Vec<f64> =
                grid.nodes().iter().map(|x| 0.3 * (1.0 + (std::f64::consts::PI * x).sin())).collect();
            let rep = represent_density(&grid, &rho, bodies).unwrap();
            assert!((rep.psi.norm_sq() - rep.mass).abs() < 1e-3 * rep.mass);
            // Trapezoid orthonormality limits the match to O(h^2).
            assert!(rep.density_error < 2e-3, "{}", rep.density_error);
        }
    }

    #[test]
    fn matching_adds_densities() {
        let grid = make_grid(0.0, 1.0, 6).unwrap();
        let phi = bump_state(6, 2);
        let nf = make_node_functions(0.4).unwrap();
        let psi = insert_node(&phi, &nf).unwrap().psi_delta;
        let zero = spinful_from(&grid, 2, ArrayD::zeros(cube_shape(6, 2))).unwrap();
        let same = match_wavefunctions(&psi, &zero).unwrap();
        assert_eq!(same.density(), psi.density());

        let rep = represent_density(&grid, &vec![0.5; 6], 2).unwrap();
        let tilde = match_wavefunctions(&psi, &rep.psi).unwrap();
        let expected = &psi.density() + &rep.psi.density();
        Zip::from(&tilde.density()).and(&expected).for_each(|a, b| assert!((a - b).abs() < 1e-12));

        // A plain sum picks up an interference term.
        let mut plain = psi.components().to_vec();
        plain[ALL_UP] = &plain[ALL_UP] + rep.psi.component(ALL_UP);
        let plain = Wavefunction::from_amplitudes(grid, 2, plain, true).unwrap();
        let gap = Zip::from(&plain.density()).and(&expected).fold(0.0f64, |m, a, b| m.max((a - b).abs()));
        assert!(gap > 1e-3);

        assert!(match_wavefunctions(&tilde, &psi).is_err());
    }

    fn uniform_orbitals(n: usize, count: usize, kind: OrbitalKind) -> (Grid1D, Vec<Vec<Complex64>>) {
        let grid = make_grid(0.0, 1.0, n).unwrap();
        let v = MarginalDensity::new(grid.clone(), vec![1.0; n], count).unwrap();
        let set = harriman_orbitals(&v, count, kind).unwrap();
        (grid, set.orbitals().to_vec())
    }

    #[test]
    fn slater_vee_single_orbital_is_zero() {
        let (grid, orbs) = uniform_orbitals(32, 1, OrbitalKind::Complex);
        let cost = CostMatrix::coulomb(&grid);
        let o = vec![SpinOrbital { values: orbs[0].clone(), spin: Spin::Up }];
        let v = slater_vee(&grid, &o, &cost).unwrap();
        assert!(v.direct_minus_exchange.abs() < 1e-12);
    }

    #[test]
    fn slater_vee_disjoint_supports() {
        let grid = make_grid(0.0, 1.0, 8).unwrap();
        let w = grid.weights();
        let mut a = vec![Complex64::new(0.0, 0.0); 8];
        let mut b = a.clone();
        a[1] = Complex64::new(1.0 / w[1].sqrt(), 0.0);
        b[5] = Complex64::new(1.0 / w[5].sqrt(), 0.0);
        let cross = w[1] * w[5] * a[1].norm_sqr() * b[5].norm_sqr();
        let orbs = vec![
            SpinOrbital { values: a, spin: Spin::Up },
            SpinOrbital { values: b, spin: Spin::Up },
        ];
        let cost = CostMatrix::coulomb(&grid);
        let v = slater_vee(&grid, &orbs, &cost).unwrap();
        // Exchange only removes the self-interaction; the pair term is pure Hartree.
        assert!((v.direct_minus_exchange - cross * cost.get(1, 5)).abs() < 1e-12);
        let det = slater_determinant(&grid, &orbs).unwrap();
        assert!((wavefunction_vee(&det, &cost) - v.direct_minus_exchange).abs() < 1e-12);
    }

    #[test]
    fn slater_vee_matches_brute_force_determinant() {
        let (grid, orbs) = uniform_orbitals(32, 2, OrbitalKind::Complex);
        let cost = CostMatrix::coulomb(&grid);
        for spins in [[Spin::Up, Spin::Up], [Spin::Up, Spin::Down]] {
            let o: Vec<SpinOrbital> = orbs
                .iter()
                .zip(spins)
                .map(|(v, spin)| SpinOrbital { values: v.clone(), spin })
                .collect();
            let identity = slater_vee(&grid, &o, &cost).unwrap();
            let det = slater_determinant(&grid, &o).unwrap();
            assert!((det.norm_sq() - 1.0).abs() < 1e-12);
            let brute = wavefunction_vee(&det, &cost);
            assert!((identity.direct_minus_exchange - brute).abs() < 1e-8);
            assert!(identity.direct_minus_exchange <= identity.direct_only + 1e-10);
        }
    }

    #[test]
    fn slater_vee_rejects_non_orthonormal() {
        let (grid, orbs) = uniform_orbitals(16, 1, OrbitalKind::Complex);
        let o = vec![
            SpinOrbital { values: orbs[0].clone(), spin: Spin::Up },
            SpinOrbital { values: orbs[0].clone(), spin: Spin::Up },
        ];
        assert!(slater_vee(&grid, &o, &CostMatrix::coulomb(&grid)).is_err());
    }

    #[test]
    fn singlet_has_equal_kinetic_energy() {
        let phi = bump_state(10, 2);
        let psi = singlet(&phi).unwrap();
        assert!(antisymmetry_defect(&psi) < 1e-15);
        let rel = bosonic_fermionic_relation(&psi, &CostMatrix::coulomb(phi.grid())).unwrap();
        assert!((rel.t_bos - rel.t_fer).abs() <= 1e-10 * rel.t_fer);
        assert!(rel.vee_equal);
    }

    #[test]
    fn generic_fermion_has_larger_kinetic_energy() {
        let phi = bump_state(10, 3);
        let report_state = insert_node(&phi, &make_node_functions(0.2).unwrap()).unwrap();
        let psi = report_state.psi_delta.normalized().unwrap();
        let rel = bosonic_fermionic_relation(&psi, &CostMatrix::coulomb(phi.grid())).unwrap();
        assert!(rel.t_bos <= rel.t_fer * (1.0 + 1e-3));
        assert!(rel.vee_equal);
    }

    #[test]
    fn fermionization_report_identities() {
        let phi = bump_state(12, 2);
        let cost = CostMatrix::coulomb(phi.grid());
        let h = phi.grid().spacing();
        let mut last_gap = f64::INFINITY;
        for k in [4.0, 2.0, 1.0] {
            let r = fermionize(&phi, k * h, &cost).unwrap();
            assert!(r.partition_error < 1e-12);
            assert!(r.density_split_error < 1e-12);
            assert!(r.excess_marginal_error < 1e-12);
            assert!(r.vee_additivity_error < 1e-10);
            assert!(r.antisymmetry_defect < 1e-12);
            let gap = (r.vee_phi - r.vee_psi_delta).abs();
            assert!(gap < last_gap);
            last_gap = gap;
        }
    }

    #[test]
    fn c0_constant() {
        assert!((c0() - 4.0624).abs() < 1e-3);
        let grid = make_grid(0.0, 1.0, 16).unwrap();
        let f = vec![1.0; 16];
        let check = c0_check(&grid, &f, &f, &CostMatrix::coulomb(&grid)).unwrap();
        assert!(check.lhs > 0.0 && check.rhs > 0.0);
    }
}
