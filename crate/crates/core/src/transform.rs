//! Stepping in canonical coordinates: a chart maps the state to variables
//! (P, Q, 𝒞) in which the structure matrix is the constant canonical block
//! extended by zeros, one step runs there, and the inverse map brings the
//! result back. The 𝒞 components have zero dynamics, so Casimirs are carried
//! exactly.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poisson::{HamiltonianSpec, PoissonSystemDef, State, StructureMatrix};
use crate::solver::{srk_step, StepContext, StepOutcome};
use crate::systems::RigidBodyParams;
use crate::tableau::SrkTableau;

/// Lower bound on 2𝒞 − P² below which the chart is rejected: the inverse
/// square root must stay real and well-conditioned.
pub const EPS_DOMAIN: f64 = 1e-10;

type MapFn = Box<dyn Fn(&State) -> Result<State> + Send + Sync>;
type GuardFn = Box<dyn Fn(&State) -> bool + Send + Sync>;

/// Invertible change of coordinates y ↔ z = (P₁..P_n, Q₁..Q_n, 𝒞₁..𝒞_l)
/// together with the transformed Hamiltonians K_l expressed in z.
pub struct CoordinateChart {
    name: String,
    dim: usize,
    pairs: usize,
    forward: MapFn,
    inverse: MapFn,
    k_specs: Vec<HamiltonianSpec>,
    guard: GuardFn,
}

impl CoordinateChart {
    pub fn new<F, I, G>(
        name: impl Into<String>,
        dim: usize,
        pairs: usize,
        forward: F,
        inverse: I,
        k_specs: Vec<HamiltonianSpec>,
        guard: G,
    ) -> Result<Self>
    where
        F: Fn(&State) -> Result<State> + Send + Sync + 'static,
        I: Fn(&State) -> Result<State> + Send + Sync + 'static,
        G: Fn(&State) -> bool + Send + Sync + 'static,
    {
        if pairs == 0 || dim < 2 * pairs {
            return Err(Error::InvalidConfig(format!(
                "chart needs dim ≥ 2·pairs ≥ 2, got dim {dim}, pairs {pairs}"
            )));
        }
        if k_specs.len() < 2 {
            return Err(Error::InvalidConfig(
                "chart needs a drift Hamiltonian plus at least one noise Hamiltonian".into(),
            ));
        }
        Ok(CoordinateChart {
            name: name.into(),
            dim,
            pairs,
            forward: Box::new(forward),
            inverse: Box::new(inverse),
            k_specs,
            guard: Box::new(guard),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn casimir_count(&self) -> usize {
        self.dim - 2 * self.pairs
    }

    pub fn hamiltonian_count(&self) -> usize {
        self.k_specs.len()
    }

    pub fn forward(&self, y: &State) -> Result<State> {
        (self.forward)(y)
    }

    pub fn inverse(&self, z: &State) -> Result<State> {
        (self.inverse)(z)
    }

    pub fn in_domain(&self, z: &State) -> bool {
        (self.guard)(z)
    }

    pub fn k_name(&self, l: usize) -> &str {
        self.k_specs[l].name()
    }

    pub fn k_value(&self, l: usize, z: &State) -> f64 {
        self.k_specs[l].value(z)
    }

    /// Full gradient of K_l in z, including the 𝒞 components. Only the
    /// first 2n entries drive the canonical field; the rest make the
    /// gradient consistent with finite differences of [`Self::k_value`].
    pub fn k_gradient(&self, l: usize, z: &State) -> State {
        self.k_specs[l].gradient(z)
    }

    /// Constant structure matrix of the transformed system:
    /// [[0, −I_n, 0], [I_n, 0, 0], [0, 0, 0]].
    pub fn canonical_structure(&self) -> DMatrix<f64> {
        let n = self.pairs;
        let mut b = DMatrix::zeros(self.dim, self.dim);
        for i in 0..n {
            b[(i, n + i)] = -1.0;
            b[(n + i, i)] = 1.0;
        }
        b
    }
}

impl std::fmt::Debug for CoordinateChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoordinateChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("pairs", &self.pairs)
            .field("hamiltonians", &self.k_specs.len())
            .finish()
    }
}

/// The chart's image as a Poisson system: constant canonical structure,
/// Hamiltonians K_l, and one Casimir per frozen coordinate.
pub fn canonical_system(chart: &Arc<CoordinateChart>) -> PoissonSystemDef {
    let m = chart.hamiltonian_count() - 1;
    let hams = (0..=m)
        .map(|l| {
            let cv = Arc::clone(chart);
            let cg = Arc::clone(chart);
            HamiltonianSpec::new(
                chart.k_name(l).to_string(),
                move |z: &State| cv.k_value(l, z),
                move |z: &State| cg.k_gradient(l, z),
            )
        })
        .collect();
    let mut def = PoissonSystemDef::new(
        format!("{}-canonical", chart.name()),
        m,
        StructureMatrix::constant(chart.canonical_structure()),
        hams,
    )
    .expect("canonical image of a validated chart");
    let n = chart.pairs();
    for j in 0..chart.casimir_count() {
        let idx = 2 * n + j;
        let d = chart.dimension();
        def = def.with_casimir(HamiltonianSpec::new(
            format!("C{}", j + 1),
            move |z: &State| z[idx],
            move |_z: &State| {
                let mut e = State::zeros(d);
                e[idx] = 1.0;
                e
            },
        ));
    }
    def
}

/// One transformed step: forward through the chart, one stochastic
/// Runge-Kutta step on the canonical system, back through the inverse.
/// Fails if either endpoint leaves the chart's domain.
pub fn transformed_srk_step(
    chart: &Arc<CoordinateChart>,
    tableau: &SrkTableau,
    y_k: &State,
    ctx: &StepContext,
    j_k: &[f64],
) -> Result<StepOutcome> {
    let canonical = canonical_system(chart);
    let z = chart.forward(y_k)?;
    let out = srk_step(&canonical, tableau, &z, ctx, j_k)?;
    let state = chart.inverse(&out.state)?;
    Ok(StepOutcome {
        state,
        newton_iters: out.newton_iters,
    })
}

/// Angle chart for the free rigid body: (y₁,y₂,y₃) ↦ (P,Q,𝒞) =
/// (y₂, atan2(y₃,y₁), ½‖y‖²), inverse (√(2𝒞−P²)cos Q, P, √(2𝒞−P²)sin Q).
/// atan2 keeps the inverse consistent on y₁ < 0; the chart degenerates
/// where 2𝒞 − P² = y₁² + y₃² vanishes.
pub fn rigid_body_chart(p: &RigidBodyParams) -> CoordinateChart {
    p.validate().expect("rigid body parameters");
    let (i1, i2, i3, c) = (p.i1, p.i2, p.i3, p.c);

    let forward = move |y: &State| -> Result<State> {
        let r2 = y[0] * y[0] + y[2] * y[2];
        if r2 <= EPS_DOMAIN {
            return Err(Error::ChartDomain(format!(
                "y₁² + y₃² = {r2:.3e} at the angle singularity"
            )));
        }
        Ok(State::from_vec(vec![
            y[1],
            y[2].atan2(y[0]),
            0.5 * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]),
        ]))
    };
    let inverse = move |z: &State| -> Result<State> {
        let r2 = 2.0 * z[2] - z[0] * z[0];
        if r2 <= EPS_DOMAIN {
            return Err(Error::ChartDomain(format!(
                "2𝒞 − P² = {r2:.3e} at the angle singularity"
            )));
        }
        let r = r2.sqrt();
        let (sin_q, cos_q) = z[1].sin_cos();
        Ok(State::from_vec(vec![r * cos_q, z[0], r * sin_q]))
    };
    let guard = move |z: &State| 2.0 * z[2] - z[0] * z[0] > EPS_DOMAIN;

    let alpha = 0.5 / i3 - 0.5 / i1;
    // K(P,Q,𝒞) = (2𝒞−P²)cos²Q/(2I₁) + P²/(2I₂) + (2𝒞−P²)sin²Q/(2I₃),
    // the energy rewritten in chart coordinates.
    let k_value = move |z: &State| {
        let r2 = 2.0 * z[2] - z[0] * z[0];
        let (sin_q, cos_q) = z[1].sin_cos();
        r2 * cos_q * cos_q / (2.0 * i1) + z[0] * z[0] / (2.0 * i2) + r2 * sin_q * sin_q / (2.0 * i3)
    };
    // Canonical field (dP, dQ) = (f, g): f = −∂K/∂Q, g = ∂K/∂P.
    let k_grad = move |z: &State| {
        let r2 = 2.0 * z[2] - z[0] * z[0];
        let (sin_q, cos_q) = z[1].sin_cos();
        let sin_2q = 2.0 * sin_q * cos_q;
        let f = -alpha * r2 * sin_2q;
        let g = z[0] * (1.0 / i2 - cos_q * cos_q / i1 - sin_q * sin_q / i3);
        State::from_vec(vec![g, -f, cos_q * cos_q / i1 + sin_q * sin_q / i3])
    };

    let k_specs = vec![
        HamiltonianSpec::new("K0", k_value, k_grad),
        HamiltonianSpec::new(
            "K1",
            move |z: &State| c * k_value(z),
            move |z: &State| k_grad(z) * c,
        ),
    ];

    CoordinateChart::new("rigid-angle", 3, 1, forward, inverse, k_specs, guard)
        .expect("rigid body chart is well formed")
}
