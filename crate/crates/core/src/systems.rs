//! Shipped benchmark systems: the stochastic rigid body with energy-shaped
//! noise, and a constant-structure linear system with a closed-form solution.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::poisson::{HamiltonianSpec, PoissonSystemDef, State, StructureMatrix};
use crate::solver::{srk_step, StepContext};
use crate::tableau::SrkTableau;
use crate::transform::{rigid_body_chart, CoordinateChart};

/// Moments of inertia and noise intensity for the stochastic rigid body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyParams {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// Noise Hamiltonian is c times the kinetic energy.
    pub c: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        RigidBodyParams {
            i1: 2f64.sqrt() + (2.0f64 / 1.51).sqrt(),
            i2: 2f64.sqrt() - 0.51 * (2.0f64 / 1.51).sqrt(),
            i3: 1.0,
            c: 0.2,
        }
    }
}

impl RigidBodyParams {
    pub fn validate(&self) -> Result<()> {
        let finite =
            self.i1.is_finite() && self.i2.is_finite() && self.i3.is_finite() && self.c.is_finite();
        if !finite || self.i1 <= 0.0 || self.i2 <= 0.0 || self.i3 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "moments of inertia must be positive and finite, got ({}, {}, {})",
                self.i1, self.i2, self.i3
            )));
        }
        if self.c == 0.0 {
            return Err(Error::InvalidConfig("noise intensity c must be nonzero".into()));
        }
        Ok(())
    }
}

fn cross_matrix(y: &State) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -y[2], y[1], y[2], 0.0, -y[0], -y[1], y[0], 0.0])
}

/// Free rigid body driven by one Stratonovich noise whose Hamiltonian is a
/// multiple of the energy. Structure matrix is the cross-product map, with
/// ½‖y‖² as Casimir.
pub fn rigid_body_system(p: &RigidBodyParams) -> PoissonSystemDef {
    p.validate().expect("rigid body parameters");
    let inv_inertia = [1.0 / p.i1, 1.0 / p.i2, 1.0 / p.i3];
    let c = p.c;

    let structure = StructureMatrix::state_dependent(3, cross_matrix).with_partials(|_y, s| {
        let mut e = State::zeros(3);
        e[s] = 1.0;
        cross_matrix(&e)
    });

    let energy = move |y: &State| {
        0.5 * (y[0] * y[0] * inv_inertia[0]
            + y[1] * y[1] * inv_inertia[1]
            + y[2] * y[2] * inv_inertia[2])
    };
    let energy_grad = move |y: &State| {
        State::from_vec(vec![
            y[0] * inv_inertia[0],
            y[1] * inv_inertia[1],
            y[2] * inv_inertia[2],
        ])
    };

    let h0 = HamiltonianSpec::new("H", energy, energy_grad);
    let h1 = HamiltonianSpec::new(
        "cH",
        move |y: &State| c * energy(y),
        move |y: &State| energy_grad(y) * c,
    );

    // ∂/∂y [y × Dy] = skew(y)·D − skew(Dy), with D the inverse inertia tensor.
    let field_jac = move |l: usize, y: &State| {
        let d = DMatrix::from_diagonal(&State::from_row_slice(&inv_inertia));
        let dy = &d * y;
        let scale = if l == 0 { 1.0 } else { c };
        (cross_matrix(y) * d - cross_matrix(&dy)) * scale
    };

    PoissonSystemDef::new("rigid", 1, structure, vec![h0, h1])
        .expect("rigid body definition is well formed")
        .with_casimir(HamiltonianSpec::new(
            "C",
            |y: &State| 0.5 * y.norm_squared(),
            |y: &State| y.clone(),
        ))
        .with_field_jacobian(field_jac)
}

/// Constant matrices of the linear system: skew structure `b`, symmetric
/// `s1`, `s2` with Hamiltonians ½yᵀS₁y and ½yᵀS₂y, and the generators
/// A₀ = B·S₁, A₁ = B·S₂.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpsDef {
    pub b: DMatrix<f64>,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
}

impl LinearSpsDef {
    pub fn new() -> Self {
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 3.0, 1.0, -3.0, 0.0]);
        let s1 = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        // Second Hamiltonian is ⅛yᵀMy with integer M; stored as S₂ = M/4.
        let m = DMatrix::from_row_slice(3, 3, &[11.0, 4.0, 4.0, 4.0, 2.0, 1.0, 4.0, 1.0, 2.0]);
        let s2 = &m / 4.0;
        let a0 = &b * &s1;
        let a1 = &b * &s2;
        LinearSpsDef { b, s1, s2, a0, a1 }
    }
}

impl Default for LinearSpsDef {
    fn default() -> Self {
        LinearSpsDef::new()
    }
}

/// Three-dimensional linear system with one noise, Casimir 3y₁+y₂+y₃, both
/// Hamiltonians conserved, and the exact solution exp(tA₀ + W(t)A₁)y₀.
pub fn linear_sps_system() -> PoissonSystemDef {
    let def = LinearSpsDef::new();

    let quad = |s: DMatrix<f64>| {
        let grad_s = s.clone();
        (
            move |y: &State| 0.5 * y.dot(&(&s * y)),
            move |y: &State| &grad_s * y,
        )
    };
    let (h1_val, h1_grad) = quad(def.s1.clone());
    let (h2_val, h2_grad) = quad(def.s2.clone());

    let a0 = def.a0.clone();
    let a1 = def.a1.clone();
    let exact = move |t: f64, w: &[f64], y0: &State| linear_flow(&a0, &a1, t, w[0], y0);

    let ja0 = def.a0.clone();
    let ja1 = def.a1.clone();
    let field_jac = move |l: usize, _y: &State| if l == 0 { ja0.clone() } else { ja1.clone() };

    PoissonSystemDef::new(
        "linear",
        1,
        StructureMatrix::constant(def.b.clone()),
        vec![
            HamiltonianSpec::new("H1", h1_val.clone(), h1_grad.clone()),
            HamiltonianSpec::new("H2", h2_val.clone(), h2_grad.clone()),
        ],
    )
    .expect("linear system definition is well formed")
    .with_casimir(HamiltonianSpec::new(
        "C",
        |y: &State| 3.0 * y[0] + y[1] + y[2],
        |_y: &State| State::from_vec(vec![3.0, 1.0, 1.0]),
    ))
    .with_invariant(HamiltonianSpec::new("H1", h1_val, h1_grad))
    .with_invariant(HamiltonianSpec::new("H2", h2_val, h2_grad))
    .with_exact_solution(exact)
    .with_field_jacobian(field_jac)
}

fn linear_flow(a0: &DMatrix<f64>, a1: &DMatrix<f64>, t: f64, w: f64, y0: &State) -> State {
    let generator = a0 * t + a1 * w;
    expm(&generator).expect("3x3 exponential of a finite matrix") * y0
}

/// Closed-form solution of the linear system started at t₀ = 0.
pub fn linear_exact_solution(t: f64, w_t: f64, y0: &State) -> State {
    let def = LinearSpsDef::new();
    linear_flow(&def.a0, &def.a1, t, w_t, y0)
}

/// One implicit-midpoint step: the s=1 member of the diagonal implicit
/// family, provided under its own name for reference solutions.
pub fn midpoint_reference_step(
    system: &PoissonSystemDef,
    y_k: &State,
    h: f64,
    j_k: &[f64],
) -> Result<State> {
    let weights = vec![vec![1.0]; system.noise_count() + 1];
    let tableau = SrkTableau::dirk(&weights)?;
    srk_step(system, &tableau, y_k, &StepContext::new(h), j_k).map(|o| o.state)
}

/// Catalog entry: how to build a system, where to start it, and whether a
/// canonical chart is available for it.
pub struct SystemEntry {
    name: &'static str,
    summary: &'static str,
    build: fn() -> PoissonSystemDef,
    default_y0: fn() -> State,
    chart: Option<fn() -> CoordinateChart>,
}

impl SystemEntry {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn summary(&self) -> &'static str {
        self.summary
    }

    pub fn system(&self) -> PoissonSystemDef {
        (self.build)()
    }

    pub fn default_y0(&self) -> State {
        (self.default_y0)()
    }

    pub fn chart(&self) -> Option<CoordinateChart> {
        self.chart.map(|f| f())
    }

    pub fn has_chart(&self) -> bool {
        self.chart.is_some()
    }
}

/// Named catalog of the shipped systems.
pub struct SystemRegistry {
    entries: Vec<SystemEntry>,
}

impl SystemRegistry {
    pub fn builtin() -> Self {
        SystemRegistry {
            entries: vec![
                SystemEntry {
                    name: "rigid",
                    summary: "stochastic free rigid body, noise proportional to the energy",
                    build: || rigid_body_system(&RigidBodyParams::default()),
                    default_y0: || {
                        State::from_vec(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0])
                    },
                    chart: Some(|| rigid_body_chart(&RigidBodyParams::default())),
                },
                SystemEntry {
                    name: "linear",
                    summary: "linear system with constant structure and exact solution",
                    build: linear_sps_system,
                    default_y0: || State::from_vec(vec![1.0, 0.0, -1.0]),
                    chart: None,
                },
            ],
        }
    }

    pub fn get(&self, name: &str) -> Result<&SystemEntry> {
        self.entries.iter().find(|e| e.name == name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown system '{name}', available: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn entries(&self) -> &[SystemEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::{check_jacobi_identity, check_skew_symmetry, drift_diffusion_field};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_state(rng: &mut impl Rng, lo: f64, hi: f64) -> State {
        State::from_fn(3, |_, _| rng.gen_range(lo..hi))
    }

    #[test]
    fn rigid_energy_at_reference_start() {
        let p = RigidBodyParams::default();
        let sys = rigid_body_system(&p);
        let y0 = State::from_vec(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0]);
        let h = sys.hamiltonian(0).value(&y0);
        assert_abs_diff_eq!(h, 0.25 * (1.0 / p.i1 + 1.0 / p.i2), epsilon = 1e-15);
        assert_abs_diff_eq!(h, 0.3996616606892207, epsilon = 1e-14);
    }

    #[test]
    fn rigid_structure_annihilates_state() {
        let sys = rigid_body_system(&RigidBodyParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..50 {
            let y = random_state(&mut rng, -5.0, 5.0);
            let by = sys.structure().evaluate(&y) * &y;
            assert!(by.amax() <= f64::EPSILON * y.norm_squared());
        }
    }

    #[test]
    fn rigid_drift_orthogonal_to_state() {
        let sys = rigid_body_system(&RigidBodyParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let y = random_state(&mut rng, -2.0, 2.0);
            let f = drift_diffusion_field(&sys, 0, &y).unwrap();
            assert!(f.dot(&y).abs() <= 1e-13);
        }
    }

    #[test]
    fn rigid_structure_is_valid_poisson() {
        let sys = rigid_body_system(&RigidBodyParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y = random_state(&mut rng, -3.0, 3.0);
            let (skew_ok, _) = check_skew_symmetry(sys.structure(), &y, 1e-14);
            assert!(skew_ok);
            let (jacobi_ok, res) = check_jacobi_identity(sys.structure(), &y, 1e-10).unwrap();
            assert!(jacobi_ok, "Jacobi residual {res}");
        }
    }

    #[test]
    fn rigid_field_jacobian_matches_finite_differences() {
        let sys = rigid_body_system(&RigidBodyParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for l in 0..=1 {
            for _ in 0..10 {
                let y = random_state(&mut rng, -2.0, 2.0);
                let analytic = sys.field_jacobian(l, &y).unwrap();
                let mut fd = DMatrix::zeros(3, 3);
                for col in 0..3 {
                    let step = 1e-6 * y[col].abs().max(1.0);
                    let mut p = y.clone();
                    let mut m = y.clone();
                    p[col] += step;
                    m[col] -= step;
                    let diff = (drift_diffusion_field(&sys, l, &p).unwrap()
                        - drift_diffusion_field(&sys, l, &m).unwrap())
                        / (2.0 * step);
                    fd.set_column(col, &diff);
                }
                assert!((analytic - fd).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn rigid_rejects_bad_params() {
        assert!(RigidBodyParams { i1: -1.0, ..Default::default() }.validate().is_err());
        assert!(RigidBodyParams { c: 0.0, ..Default::default() }.validate().is_err());
        assert!(RigidBodyParams::default().validate().is_ok());
    }

    #[test]
    fn linear_hamiltonian_and_casimir_values() {
        let sys = linear_sps_system();
        let ones = State::from_vec(vec![1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(sys.hamiltonian(0).value(&ones), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.hamiltonian(1).value(&ones), 4.125, epsilon = 1e-15);
        let y = State::from_vec(vec![1.0, 1.0, 2.0]);
        assert_abs_diff_eq!(sys.casimirs()[0].value(&y), 6.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_generators() {
        let def = LinearSpsDef::new();
        let expected_a0 =
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, 1.0, -1.0, 2.0, -1.0, -2.0, 1.0]);
        assert_eq!(def.a0, expected_a0);
        // B·M has columns of M − 4S₁ proportional to (3,1,1) ∈ ker B, so
        // A₁ = A₀/4 holds exactly.
        assert_eq!(def.a1, expected_a0 / 4.0);
        assert_eq!(def.s1, def.s1.transpose());
        assert_eq!(def.s2, def.s2.transpose());
        assert_eq!(def.b, -def.b.transpose());
    }

    #[test]
    fn linear_hamiltonians_in_involution() {
        let sys = linear_sps_system();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let y = random_state(&mut rng, -4.0, 4.0);
            let bracket = crate::poisson::poisson_bracket(
                sys.hamiltonian(0),
                sys.hamiltonian(1),
                sys.structure(),
                &y,
            )
            .unwrap();
            assert!(bracket.abs() <= 1e-12 * y.norm_squared().max(1.0));
        }
    }

    #[test]
    fn exact_solution_at_origin_of_time() {
        let y0 = State::from_vec(vec![1.0, 0.0, -1.0]);
        let y = linear_exact_solution(0.0, 0.0, &y0);
        assert_eq!(y, y0);
    }

    #[test]
    fn exact_solution_conserves_all_invariants() {
        let sys = linear_sps_system();
        let y0 = State::from_vec(vec![1.0, 0.0, -1.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..20 {
            let t = rng.gen_range(0.1..10.0);
            let w = rng.gen_range(-3.0..3.0);
            let y = linear_exact_solution(t, w, &y0);
            for c in sys.casimirs() {
                assert!((c.value(&y) - c.value(&y0)).abs() <= 1e-10);
            }
            for f in sys.invariants() {
                assert!((f.value(&y) - f.value(&y0)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn exact_solution_first_order_in_time() {
        let def = LinearSpsDef::new();
        let y0 = State::from_vec(vec![1.0, 0.0, -1.0]);
        for t in [1e-3, 1e-4] {
            let taylor = &y0 + t * (&def.a0 * &y0);
            let err = (linear_exact_solution(t, 0.0, &y0) - taylor).norm();
            // ‖exp(tA)−I−tA‖ ≤ ‖A‖²t²e^{‖A‖t}/2 ≈ 6t² on this generator.
            assert!(err <= 10.0 * t * t, "t={t}: residual {err}");
        }
    }

    #[test]
    fn exact_solution_through_system_hook() {
        let sys = linear_sps_system();
        let y0 = State::from_vec(vec![1.0, 0.0, -1.0]);
        let via_hook = sys.exact_solution(1.5, &[0.7], &y0).unwrap();
        let direct = linear_exact_solution(1.5, 0.7, &y0);
        assert_eq!(via_hook, direct);
    }

    #[test]
    fn midpoint_alias_matches_generic_stepper() {
        let sys = rigid_body_system(&RigidBodyParams::default());
        let tableau = SrkTableau::dirk(&[vec![1.0], vec![1.0]]).unwrap();
        let y = State::from_vec(vec![0.7, -0.1, 0.6]);
        let via_alias = midpoint_reference_step(&sys, &y, 0.01, &[0.05]).unwrap();
        let via_srk = srk_step(&sys, &tableau, &y, &StepContext::new(0.01), &[0.05])
            .unwrap()
            .state;
        assert_eq!(via_alias, via_srk);
    }

    #[test]
    fn midpoint_conserves_quadratics_per_step() {
        let sys = rigid_body_system(&RigidBodyParams::default());
        let y = State::from_vec(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0]);
        let next = midpoint_reference_step(&sys, &y, 1e-3, &[0.0]).unwrap();
        let dh = (sys.hamiltonian(0).value(&next) - sys.hamiltonian(0).value(&y)).abs();
        let dc = (0.5 * next.norm_squared() - 0.5 * y.norm_squared()).abs();
        assert!(dh <= 1e-8, "energy drift {dh}");
        assert!(dc <= 1e-10, "Casimir drift {dc}");
    }

    #[test]
    fn registry_lookup() {
        let reg = SystemRegistry::builtin();
        assert_eq!(reg.names(), vec!["rigid", "linear"]);
        assert!(reg.get("rigid").unwrap().has_chart());
        assert!(!reg.get("linear").unwrap().has_chart());
        assert!(reg.get("lotka").is_err());
        let y0 = reg.get("linear").unwrap().default_y0();
        assert_eq!(y0, State::from_vec(vec![1.0, 0.0, -1.0]));
    }
}
