//! Integration methods behind a common trait, selectable by name at runtime.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::poisson::{PoissonSystemDef, State};
use crate::solver::{
    run_grid, run_terminal, srk_step, validate_span, StepContext, StepOutcome, Trajectory,
};
use crate::systems::SystemEntry;
use crate::tableau::{check_symplectic_conditions, SrkTableau};
use crate::transform::{canonical_system, CoordinateChart};
use crate::wiener::WienerPath;

/// A one-step method bound to a system. Whole-path driving has default
/// implementations; implementors may override them when stepping in other
/// coordinates pays off.
pub trait Integrator: Send + Sync {
    fn name(&self) -> &str;

    fn system(&self) -> &PoissonSystemDef;

    fn tableau(&self) -> &SrkTableau;

    fn step_outcome(&self, y: &State, ctx: &StepContext, j_k: &[f64]) -> Result<StepOutcome>;

    fn step(&self, y: &State, ctx: &StepContext, j_k: &[f64]) -> Result<State> {
        self.step_outcome(y, ctx, j_k).map(|o| o.state)
    }

    fn integrate(
        &self,
        y0: &State,
        t0: f64,
        t_end: f64,
        ctx: &StepContext,
        path: &WienerPath,
    ) -> Result<Trajectory> {
        validate_span(path, t0, t_end)?;
        run_grid(self.name(), y0, t0, ctx, path, |y, c, j| {
            self.step_outcome(y, c, j)
        })
    }

    fn terminal_state(&self, y0: &State, ctx: &StepContext, path: &WienerPath) -> Result<State> {
        run_terminal(y0, ctx, path, |y, c, j| self.step_outcome(y, c, j))
    }
}

/// Stochastic Runge-Kutta stepping directly on the system.
pub struct SrkIntegrator {
    name: String,
    system: Arc<PoissonSystemDef>,
    tableau: SrkTableau,
}

impl SrkIntegrator {
    pub fn new(
        name: impl Into<String>,
        system: Arc<PoissonSystemDef>,
        tableau: SrkTableau,
    ) -> Result<Self> {
        if tableau.noise_count() != system.noise_count() {
            return Err(Error::Dimension(format!(
                "tableau handles {} noises, system has {}",
                tableau.noise_count(),
                system.noise_count()
            )));
        }
        Ok(SrkIntegrator {
            name: name.into(),
            system,
            tableau,
        })
    }
}

impl Integrator for SrkIntegrator {
    fn name(&self) -> &str {
        &self.name
    }

    fn system(&self) -> &PoissonSystemDef {
        &self.system
    }

    fn tableau(&self) -> &SrkTableau {
        &self.tableau
    }

    fn step_outcome(&self, y: &State, ctx: &StepContext, j_k: &[f64]) -> Result<StepOutcome> {
        srk_step(&self.system, &self.tableau, y, ctx, j_k)
    }
}

/// Stepping through a coordinate chart: each path runs entirely in chart
/// coordinates with the frozen components carried exactly, and states map
/// back only where they are reported.
pub struct TransformedIntegrator {
    name: String,
    system: Arc<PoissonSystemDef>,
    chart: Arc<CoordinateChart>,
    canonical: PoissonSystemDef,
    tableau: SrkTableau,
}

impl TransformedIntegrator {
    pub fn new(
        name: impl Into<String>,
        system: Arc<PoissonSystemDef>,
        chart: Arc<CoordinateChart>,
        tableau: SrkTableau,
    ) -> Result<Self> {
        if chart.dimension() != system.dimension() {
            return Err(Error::Dimension(format!(
                "chart dimension {} vs system dimension {}",
                chart.dimension(),
                system.dimension()
            )));
        }
        if chart.hamiltonian_count() != system.noise_count() + 1 {
            return Err(Error::Dimension(format!(
                "chart carries {} Hamiltonians, system needs {}",
                chart.hamiltonian_count(),
                system.noise_count() + 1
            )));
        }
        if tableau.noise_count() != system.noise_count() {
            return Err(Error::Dimension(format!(
                "tableau handles {} noises, system has {}",
                tableau.noise_count(),
                system.noise_count()
            )));
        }
        let report = check_symplectic_conditions(&tableau, 1e-12);
        if !report.passes {
            return Err(Error::InvalidTableau(format!(
                "transformed stepping requires a symplectic tableau; worst residual {:.3e}",
                report.max_residual()
            )));
        }
        let canonical = canonical_system(&chart);
        Ok(TransformedIntegrator {
            name: name.into(),
            system,
            chart,
            canonical,
            tableau,
        })
    }

    pub fn chart(&self) -> &Arc<CoordinateChart> {
        &self.chart
    }

    pub fn canonical(&self) -> &PoissonSystemDef {
        &self.canonical
    }
}

impl Integrator for TransformedIntegrator {
    fn name(&self) -> &str {
        &self.name
    }

    fn system(&self) -> &PoissonSystemDef {
        &self.system
    }

    fn tableau(&self) -> &SrkTableau {
        &self.tableau
    }

    fn step_outcome(&self, y: &State, ctx: &StepContext, j_k: &[f64]) -> Result<StepOutcome> {
        let z = self.chart.forward(y)?;
        let out = srk_step(&self.canonical, &self.tableau, &z, ctx, j_k)?;
        let state = self.chart.inverse(&out.state)?;
        Ok(StepOutcome {
            state,
            newton_iters: out.newton_iters,
        })
    }

    fn integrate(
        &self,
        y0: &State,
        t0: f64,
        t_end: f64,
        ctx: &StepContext,
        path: &WienerPath,
    ) -> Result<Trajectory> {
        validate_span(path, t0, t_end)?;
        let z0 = self.chart.forward(y0)?;
        let z_traj = run_grid(self.name(), &z0, t0, ctx, path, |z, c, j| {
            srk_step(&self.canonical, &self.tableau, z, c, j)
        })?;
        let mut traj = Trajectory::new(self.name(), t0, y0.clone());
        for n in 1..z_traj.len() {
            let y = self.chart.inverse(&z_traj.states()[n]).map_err(|e| Error::StepFailed {
                index: n - 1,
                source: Box::new(e),
            })?;
            traj.push(z_traj.times()[n], y, z_traj.newton_iters()[n - 1]);
        }
        Ok(traj)
    }

    fn terminal_state(&self, y0: &State, ctx: &StepContext, path: &WienerPath) -> Result<State> {
        let z0 = self.chart.forward(y0)?;
        let z_end = run_terminal(&z0, ctx, path, |z, c, j| {
            srk_step(&self.canonical, &self.tableau, z, c, j)
        })?;
        self.chart.inverse(&z_end)
    }
}

/// Default stage weights: the two-stage pair (b⁰, bʳ) = ((1/4, 3/4),
/// (1/2, 1/2)), otherwise uniform weights at every level.
pub fn default_weights(s: usize, m: usize) -> Result<Vec<Vec<f64>>> {
    if s == 0 {
        return Err(Error::InvalidConfig("stage count must be ≥ 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("noise count must be ≥ 1".into()));
    }
    let weights = if s == 2 {
        let mut w = vec![vec![0.25, 0.75]];
        w.extend(std::iter::repeat_n(vec![0.5, 0.5], m));
        w
    } else {
        vec![vec![1.0 / s as f64; s]; m + 1]
    };
    Ok(weights)
}

pub fn default_tableau(s: usize, m: usize) -> Result<SrkTableau> {
    SrkTableau::dirk(&default_weights(s, m)?)
}

/// Named catalog of the shipped methods.
pub struct MethodRegistry {
    entries: Vec<MethodEntry>,
}

struct MethodEntry {
    name: &'static str,
    summary: &'static str,
}

impl MethodRegistry {
    pub fn builtin() -> Self {
        MethodRegistry {
            entries: vec![
                MethodEntry {
                    name: "dirk",
                    summary: "diagonal implicit stochastic Runge-Kutta, stages solved in order",
                },
                MethodEntry {
                    name: "transformed",
                    summary: "Runge-Kutta step in canonical chart coordinates, mapped back",
                },
                MethodEntry {
                    name: "midpoint",
                    summary: "implicit midpoint rule, the one-stage member of the family",
                },
            ],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn summary(&self, name: &str) -> Option<&'static str> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.summary)
    }

    /// Bind a method to a system. `tableau` overrides the method's default
    /// coefficients; "midpoint" only accepts one-stage tableaus and
    /// "transformed" needs a system with a registered chart.
    pub fn build(
        &self,
        name: &str,
        entry: &SystemEntry,
        tableau: Option<SrkTableau>,
    ) -> Result<Box<dyn Integrator>> {
        if !self.entries.iter().any(|e| e.name == name) {
            return Err(Error::InvalidConfig(format!(
                "unknown method '{name}', available: {}",
                self.names().join(", ")
            )));
        }
        let system = Arc::new(entry.system());
        let m = system.noise_count();
        match name {
            "dirk" => {
                let tableau = match tableau {
                    Some(t) => t,
                    None => default_tableau(2, m)?,
                };
                Ok(Box::new(SrkIntegrator::new("dirk", system, tableau)?))
            }
            "midpoint" => {
                let tableau = match tableau {
                    Some(t) if t.stages() == 1 => t,
                    Some(t) => {
                        return Err(Error::InvalidConfig(format!(
                            "midpoint is the one-stage method, got {} stages",
                            t.stages()
                        )))
                    }
                    None => default_tableau(1, m)?,
                };
                Ok(Box::new(SrkIntegrator::new("midpoint", system, tableau)?))
            }
            "transformed" => {
                let chart = entry.chart().ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "system '{}' has no canonical chart; transformed stepping unavailable",
                        entry.name()
                    ))
                })?;
                let tableau = match tableau {
                    Some(t) => t,
                    None => default_tableau(2, m)?,
                };
                Ok(Box::new(TransformedIntegrator::new(
                    "transformed",
                    system,
                    Arc::new(chart),
                    tableau,
                )?))
            }
            _ => unreachable!("membership checked above"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::integrate_path;
    use crate::systems::SystemRegistry;

    fn registry() -> (SystemRegistry, MethodRegistry) {
        (SystemRegistry::builtin(), MethodRegistry::builtin())
    }

    #[test]
    fn builtin_method_names() {
        let (_, methods) = registry();
        assert_eq!(methods.names(), vec!["dirk", "transformed", "midpoint"]);
        assert!(methods.summary("dirk").is_some());
        assert!(methods.summary("rk45").is_none());
    }

    #[test]
    fn default_weight_shapes() {
        assert_eq!(default_weights(1, 1).unwrap(), vec![vec![1.0], vec![1.0]]);
        assert_eq!(
            default_weights(2, 1).unwrap(),
            vec![vec![0.25, 0.75], vec![0.5, 0.5]]
        );
        assert_eq!(
            default_weights(3, 2).unwrap(),
            vec![vec![1.0 / 3.0; 3]; 3]
        );
        assert!(default_weights(0, 1).is_err());
    }

    #[test]
    fn build_rules() {
        let (systems, methods) = registry();
        let rigid = systems.get("rigid").unwrap();
        let linear = systems.get("linear").unwrap();
        assert!(methods.build("dirk", linear, None).is_ok());
        assert!(methods.build("midpoint", rigid, None).is_ok());
        assert!(methods.build("transformed", rigid, None).is_ok());
        assert!(methods.build("transformed", linear, None).is_err());
        assert!(methods.build("leapfrog", linear, None).is_err());
        let two_stage = default_tableau(2, 1).unwrap();
        assert!(methods.build("midpoint", rigid, Some(two_stage)).is_err());
    }

    #[test]
    fn transformed_rejects_nonsymplectic_tableau() {
        let (systems, methods) = registry();
        let rigid = systems.get("rigid").unwrap();
        let euler = SrkTableau::explicit_euler(1);
        assert!(matches!(
            methods.build("transformed", rigid, Some(euler)),
            Err(Error::InvalidTableau(_))
        ));
    }

    #[test]
    fn dirk_trait_object_matches_direct_integration() {
        let (systems, methods) = registry();
        let entry = systems.get("linear").unwrap();
        let integrator = methods.build("dirk", entry, None).unwrap();
        let y0 = entry.default_y0();
        let ctx = StepContext::new(0.02);
        let path = WienerPath::sample(1, 50, 0.02, 21).unwrap();
        let via_trait = integrator.integrate(&y0, 0.0, 1.0, &ctx, &path).unwrap();
        let system = entry.system();
        let tableau = default_tableau(2, 1).unwrap();
        let direct = integrate_path(&system, &tableau, &y0, 0.0, 1.0, &ctx, &path).unwrap();
        assert_eq!(via_trait.len(), direct.len());
        for (a, b) in via_trait.states().iter().zip(direct.states()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn terminal_state_matches_trajectory_end() {
        let (systems, methods) = registry();
        for (sys_name, method_name) in [("linear", "dirk"), ("rigid", "transformed")] {
            let entry = systems.get(sys_name).unwrap();
            let integrator = methods.build(method_name, entry, None).unwrap();
            let y0 = entry.default_y0();
            let ctx = StepContext::new(0.01);
            let path = WienerPath::sample(1, 100, 0.01, 22).unwrap();
            let traj = integrator.integrate(&y0, 0.0, 1.0, &ctx, &path).unwrap();
            let terminal = integrator.terminal_state(&y0, &ctx, &path).unwrap();
            assert_eq!(traj.terminal(), &terminal, "{sys_name}/{method_name}");
        }
    }

    #[test]
    fn transformed_casimir_is_flat_along_trajectory() {
        let (systems, methods) = registry();
        let entry = systems.get("rigid").unwrap();
        let integrator = methods.build("transformed", entry, None).unwrap();
        let y0 = entry.default_y0();
        let ctx = StepContext::new(0.01);
        let path = WienerPath::sample(1, 1000, 0.01, 23).unwrap();
        let traj = integrator.integrate(&y0, 0.0, 10.0, &ctx, &path).unwrap();
        let c0 = 0.5 * y0.norm_squared();
        let drift = traj
            .states()
            .iter()
            .map(|y| (0.5 * y.norm_squared() - c0).abs())
            .fold(0.0f64, f64::max);
        assert!(drift <= 1e-13, "Casimir drift {drift}");
    }

    #[test]
    fn step_matches_step_outcome() {
        let (systems, methods) = registry();
        let entry = systems.get("rigid").unwrap();
        let integrator = methods.build("transformed", entry, None).unwrap();
        let y0 = entry.default_y0();
        let ctx = StepContext::new(0.01);
        let a = integrator.step(&y0, &ctx, &[0.04]).unwrap();
        let b = integrator.step_outcome(&y0, &ctx, &[0.04]).unwrap().state;
        assert_eq!(a, b);
    }
}
