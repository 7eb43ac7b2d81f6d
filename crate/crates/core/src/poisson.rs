//! Stochastic Poisson systems: skew-symmetric structure matrices, Poisson
//! brackets, Casimir functions, and the validity checks that go with them.
//!
//! A system is written as
//!
//! ```text
//! dy = B(y) ( ∇H₀(y) dt + Σ_r ∇H_r(y) ∘ dW_r )
//! ```
//!
//! with B(y) skew-symmetric and satisfying the Jacobi identity. The vector
//! fields advanced by the solvers are `f_l(y) = B(y) ∇H_l(y)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State vector y ∈ ℝᵈ.
pub type State = DVector<f64>;

type MatrixFn = Box<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;
/// Partial derivative hook: (y, s) ↦ ∂B/∂y_s evaluated at y.
type MatrixPartialFn = Box<dyn Fn(&State, usize) -> DMatrix<f64> + Send + Sync>;
type ScalarFn = Box<dyn Fn(&State) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&State) -> State + Send + Sync>;
type ExactSolutionFn = Box<dyn Fn(f64, &[f64], &State) -> State + Send + Sync>;
type FieldJacobianFn = Box<dyn Fn(usize, &State) -> DMatrix<f64> + Send + Sync>;

/// The structure matrix B(y) of a Poisson system.
pub struct StructureMatrix {
    d: usize,
    eval: MatrixFn,
    constant: Option<DMatrix<f64>>,
    partial: Option<MatrixPartialFn>,
}

impl StructureMatrix {
    /// Constant structure matrix (linear Poisson systems).
    pub fn constant(b: DMatrix<f64>) -> Self {
        assert_eq!(b.nrows(), b.ncols(), "structure matrix must be square");
        let d = b.nrows();
        let stored = b.clone();
        StructureMatrix {
            d,
            eval: Box::new(move |_| stored.clone()),
            constant: Some(b),
            partial: None,
        }
    }

    pub fn state_dependent<F>(d: usize, eval: F) -> Self
    where
        F: Fn(&State) -> DMatrix<f64> + Send + Sync + 'static,
    {
        StructureMatrix {
            d,
            eval: Box::new(eval),
            constant: None,
            partial: None,
        }
    }

    /// Attach analytic partials ∂B/∂y_s, used by the Jacobi check instead of
    /// finite differences when present.
    pub fn with_partials<F>(mut self, partial: F) -> Self
    where
        F: Fn(&State, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.partial = Some(Box::new(partial));
        self
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn constant_value(&self) -> Option<&DMatrix<f64>> {
        self.constant.as_ref()
    }

    pub fn evaluate(&self, y: &State) -> DMatrix<f64> {
        (self.eval)(y)
    }

    pub fn has_partials(&self) -> bool {
        self.partial.is_some()
    }

    /// ∂B/∂y_s at y: analytic if supplied, otherwise central differences with
    /// step √ε·max(1, |y_s|).
    pub fn partial(&self, y: &State, s: usize) -> DMatrix<f64> {
        if self.constant.is_some() {
            return DMatrix::zeros(self.d, self.d);
        }
        if let Some(p) = &self.partial {
            return p(y, s);
        }
        let step = f64::EPSILON.sqrt() * y[s].abs().max(1.0);
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[s] += step;
        minus[s] -= step;
        ((self.eval)(&plus) - (self.eval)(&minus)) / (2.0 * step)
    }
}

/// A Hamiltonian with its closed-form gradient.
pub struct HamiltonianSpec {
    name: String,
    value: ScalarFn,
    gradient: GradientFn,
}

impl HamiltonianSpec {
    pub fn new<V, G>(name: impl Into<String>, value: V, gradient: G) -> Self
    where
        V: Fn(&State) -> f64 + Send + Sync + 'static,
        G: Fn(&State) -> State + Send + Sync + 'static,
    {
        HamiltonianSpec {
            name: name.into(),
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, y: &State) -> f64 {
        (self.value)(y)
    }

    pub fn gradient(&self, y: &State) -> State {
        (self.gradient)(y)
    }

    /// Central-difference gradient of the stored value, for cross-checks.
    pub fn fd_gradient(&self, y: &State) -> State {
        let d = y.len();
        let mut g = State::zeros(d);
        for s in 0..d {
            let step = f64::EPSILON.sqrt() * y[s].abs().max(1.0);
            let mut plus = y.clone();
            let mut minus = y.clone();
            plus[s] += step;
            minus[s] -= step;
            g[s] = ((self.value)(&plus) - (self.value)(&minus)) / (2.0 * step);
        }
        g
    }
}

/// Full definition of a stochastic Poisson system with m driving noises.
///
/// `hamiltonians` holds H₀ (drift) followed by H₁..H_m (one per noise).
pub struct PoissonSystemDef {
    name: String,
    d: usize,
    m: usize,
    structure: StructureMatrix,
    hamiltonians: Vec<HamiltonianSpec>,
    casimirs: Vec<HamiltonianSpec>,
    invariants: Vec<HamiltonianSpec>,
    exact_solution: Option<ExactSolutionFn>,
    field_jacobian: Option<FieldJacobianFn>,
}

impl PoissonSystemDef {
    pub fn new(
        name: impl Into<String>,
        m: usize,
        structure: StructureMatrix,
        hamiltonians: Vec<HamiltonianSpec>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("noise count m must be ≥ 1".into()));
        }
        if hamiltonians.len() != m + 1 {
            return Err(Error::Dimension(format!(
                "expected {} Hamiltonians (drift plus one per noise), got {}",
                m + 1,
                hamiltonians.len()
            )));
        }
        Ok(PoissonSystemDef {
            name: name.into(),
            d: structure.dimension(),
            m,
            structure,
            hamiltonians,
            casimirs: Vec::new(),
            invariants: Vec::new(),
            exact_solution: None,
            field_jacobian: None,
        })
    }

    pub fn with_casimir(mut self, c: HamiltonianSpec) -> Self {
        self.casimirs.push(c);
        self
    }

    pub fn with_invariant(mut self, f: HamiltonianSpec) -> Self {
        self.invariants.push(f);
        self
    }

    /// Exact solution hook (t, W(t), y₀) ↦ y(t), when the system has one.
    pub fn with_exact_solution<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &State) -> State + Send + Sync + 'static,
    {
        self.exact_solution = Some(Box::new(f));
        self
    }

    /// Analytic Jacobian ∂f_l/∂y hook. Newton falls back to finite
    /// differences when absent.
    pub fn with_field_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(usize, &State) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.field_jacobian = Some(Box::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn noise_count(&self) -> usize {
        self.m
    }

    pub fn structure(&self) -> &StructureMatrix {
        &self.structure
    }

    pub fn hamiltonian(&self, l: usize) -> &HamiltonianSpec {
        &self.hamiltonians[l]
    }

    pub fn casimirs(&self) -> &[HamiltonianSpec] {
        &self.casimirs
    }

    pub fn invariants(&self) -> &[HamiltonianSpec] {
        &self.invariants
    }

    pub fn exact_solution(&self, t: f64, w_t: &[f64], y0: &State) -> Option<State> {
        self.exact_solution.as_ref().map(|f| f(t, w_t, y0))
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact_solution.is_some()
    }

    pub fn field_jacobian(&self, l: usize, y: &State) -> Option<DMatrix<f64>> {
        self.field_jacobian.as_ref().map(|f| f(l, y))
    }
}

/// f_l(y) = B(y) ∇H_l(y), the drift (l = 0) or diffusion (l ≥ 1) field.
pub fn drift_diffusion_field(system: &PoissonSystemDef, l: usize, y: &State) -> Result<State> {
    if l > system.m {
        return Err(Error::Dimension(format!(
            "field index {l} out of range (m = {})",
            system.m
        )));
    }
    let field = system.structure.evaluate(y) * system.hamiltonians[l].gradient(y);
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "field {l} of system '{}' at y = {:?}",
            system.name,
            y.as_slice()
        )));
    }
    Ok(field)
}

/// Poisson bracket {F, G}(y) = ∇F(y)ᵀ B(y) ∇G(y).
pub fn poisson_bracket(
    f: &HamiltonianSpec,
    g: &HamiltonianSpec,
    b: &StructureMatrix,
    y: &State,
) -> Result<f64> {
    let gf = f.gradient(y);
    let gg = g.gradient(y);
    if gf.len() != b.dimension() || gg.len() != b.dimension() {
        return Err(Error::Dimension(format!(
            "bracket gradients ({}, {}) incompatible with structure dimension {}",
            gf.len(),
            gg.len(),
            b.dimension()
        )));
    }
    Ok((gf.transpose() * b.evaluate(y) * gg)[(0, 0)])
}

/// Skew-symmetry check: residual = max |b_ij + b_ji|.
pub fn check_skew_symmetry(b: &StructureMatrix, y: &State, tol: f64) -> (bool, f64) {
    let mat = b.evaluate(y);
    let d = mat.nrows();
    let mut residual = 0.0f64;
    for i in 0..d {
        for j in i..d {
            residual = residual.max((mat[(i, j)] + mat[(j, i)]).abs());
        }
    }
    (residual <= tol, residual)
}

/// Jacobi identity check: for every index triple the cyclic sum
///
/// ```text
/// Σ_s ( ∂b_ij/∂y_s b_sk + ∂b_jk/∂y_s b_si + ∂b_ki/∂y_s b_sj )
/// ```
///
/// must vanish. Derivatives come from the analytic hook when available,
/// otherwise central finite differences.
pub fn check_jacobi_identity(b: &StructureMatrix, y: &State, tol: f64) -> Result<(bool, f64)> {
    let d = b.dimension();
    let mat = b.evaluate(y);
    let partials: Vec<DMatrix<f64>> = (0..d).map(|s| b.partial(y, s)).collect();
    for p in &partials {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("structure matrix derivative".into()));
        }
    }
    let mut residual = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            for k in (j + 1)..d {
                let mut sum = 0.0;
                for s in 0..d {
                    sum += partials[s][(i, j)] * mat[(s, k)]
                        + partials[s][(j, k)] * mat[(s, i)]
                        + partials[s][(k, i)] * mat[(s, j)];
                }
                residual = residual.max(sum.abs());
            }
        }
    }
    Ok((residual <= tol, residual))
}

/// ‖∇C(y)ᵀ B(y)‖∞; zero for a Casimir.
pub fn casimir_residual(c: &HamiltonianSpec, system: &PoissonSystemDef, y: &State) -> f64 {
    let row = c.gradient(y).transpose() * system.structure.evaluate(y);
    row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}
