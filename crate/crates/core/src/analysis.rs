//! Numerical audits: step-map Jacobians, Poisson-structure residuals,
//! invariant drift along trajectories, and mean-square order estimation
//! against coupled references.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::method::Integrator;
use crate::poisson::{HamiltonianSpec, State};
use crate::solver::{run_terminal, srk_step, truncated_increment, StepContext, Trajectory};
use crate::tableau::SrkTableau;
use crate::wiener::WienerPath;

/// ∂y_{k+1}/∂y_k of the full step map by central differences, column j from
/// ±ε e_j with ε = eps^{1/3}·max(1, |y_j|). Every perturbed step reuses the
/// same increments, so the derivative is taken along a fixed noise draw.
pub fn step_jacobian(
    integrator: &dyn Integrator,
    y_k: &State,
    ctx: &StepContext,
    j_k: &[f64],
) -> Result<DMatrix<f64>> {
    let d = y_k.len();
    let mut jac = DMatrix::zeros(d, d);
    let eps = f64::EPSILON.powf(1.0 / 3.0);
    for col in 0..d {
        let step = eps * y_k[col].abs().max(1.0);
        let mut plus = y_k.clone();
        let mut minus = y_k.clone();
        plus[col] += step;
        minus[col] -= step;
        let fp = integrator.step(&plus, ctx, j_k)?;
        let fm = integrator.step(&minus, ctx, j_k)?;
        jac.set_column(col, &((fp - fm) / (2.0 * step)));
    }
    Ok(jac)
}

/// One structure probe: residual of the Poisson-map criterion at a single
/// state and increment draw.
#[derive(Debug, Clone, Copy)]
pub struct StructureProbe {
    pub residual: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Evaluates ‖Jₛ B(y_k) Jₛᵀ − B(y_{k+1})‖∞ with Jₛ the step Jacobian; a
/// Poisson integrator drives this to zero up to finite-difference error.
pub fn check_poisson_structure(
    integrator: &dyn Integrator,
    y_k: &State,
    ctx: &StepContext,
    j_k: &[f64],
    tol: f64,
) -> Result<StructureProbe> {
    if tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tolerance {tol} must be positive")));
    }
    let js = step_jacobian(integrator, y_k, ctx, j_k)?;
    let y_next = integrator.step(y_k, ctx, j_k)?;
    let b = integrator.system().structure();
    let residual = (&js * b.evaluate(y_k) * js.transpose() - b.evaluate(&y_next))
        .abs()
        .max();
    Ok(StructureProbe {
        residual,
        tolerance: tol,
        passes: residual <= tol,
    })
}

/// max_n |f(y_n) − f(y₀)| along a trajectory.
pub fn invariant_drift(traj: &Trajectory, f: &HamiltonianSpec) -> f64 {
    let f0 = f.value(&traj.states()[0]);
    traj.states()
        .iter()
        .map(|y| (f.value(y) - f0).abs())
        .fold(0.0f64, f64::max)
}

#[derive(Debug, Clone)]
pub struct DriftEntry {
    pub name: String,
    pub drift: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Tolerances for [`verify_structure`].
#[derive(Debug, Clone, Copy)]
pub struct StructureTolerances {
    pub poisson: f64,
    pub casimir: f64,
    pub invariant: f64,
}

impl Default for StructureTolerances {
    fn default() -> Self {
        StructureTolerances {
            poisson: 1e-6,
            casimir: 1e-10,
            invariant: 1e-10,
        }
    }
}

/// Aggregated audit of one method on one system.
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub system: String,
    pub method: String,
    pub poisson_residual: f64,
    pub poisson_tolerance: f64,
    pub probes: usize,
    pub casimir_drifts: Vec<DriftEntry>,
    pub invariant_drifts: Vec<DriftEntry>,
}

impl StructureReport {
    pub fn passes(&self) -> bool {
        self.poisson_residual <= self.poisson_tolerance
            && self.casimir_drifts.iter().all(|e| e.passes)
            && self.invariant_drifts.iter().all(|e| e.passes)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let flag = |ok: bool| if ok { "pass" } else { "fail" };
        out.push_str(&format!("system: {}\n", self.system));
        out.push_str(&format!("method: {}\n", self.method));
        out.push_str(&format!(
            "poisson_residual: {:.16e} (tol {:.16e}, {} probes) {}\n",
            self.poisson_residual,
            self.poisson_tolerance,
            self.probes,
            flag(self.poisson_residual <= self.poisson_tolerance)
        ));
        for e in &self.casimir_drifts {
            out.push_str(&format!(
                "casimir {}: drift {:.16e} (tol {:.16e}) {}\n",
                e.name,
                e.drift,
                e.tolerance,
                flag(e.passes)
            ));
        }
        for e in &self.invariant_drifts {
            out.push_str(&format!(
                "invariant {}: drift {:.16e} (tol {:.16e}) {}\n",
                e.name,
                e.drift,
                e.tolerance,
                flag(e.passes)
            ));
        }
        out.push_str(&format!("overall: {}\n", flag(self.passes())));
        out
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "metric,name,value,tolerance,pass")?;
        writeln!(
            out,
            "poisson_residual,,{:.16e},{:.16e},{}",
            self.poisson_residual,
            self.poisson_tolerance,
            self.poisson_residual <= self.poisson_tolerance
        )?;
        for e in &self.casimir_drifts {
            writeln!(
                out,
                "casimir_drift,{},{:.16e},{:.16e},{}",
                e.name, e.drift, e.tolerance, e.passes
            )?;
        }
        for e in &self.invariant_drifts {
            writeln!(
                out,
                "invariant_drift,{},{:.16e},{:.16e},{}",
                e.name, e.drift, e.tolerance, e.passes
            )?;
        }
        Ok(())
    }
}

/// Runs the full audit: Poisson-structure residuals at `probes` perturbed
/// states with seeded increments, then one trajectory over [0, t_end] with
/// drift of every registered Casimir and invariant.
pub fn verify_structure(
    integrator: &dyn Integrator,
    y0: &State,
    t_end: f64,
    ctx: &StepContext,
    seed: u64,
    probes: usize,
    tol: &StructureTolerances,
) -> Result<StructureReport> {
    let system = integrator.system();
    let m = system.noise_count();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let y = State::from_fn(y0.len(), |i, _| y0[i] + rng.gen_range(-0.25..0.25));
        let mut j = Vec::with_capacity(m);
        for _ in 0..m {
            let xi: f64 = rng.sample(StandardNormal);
            j.push(truncated_increment(
                ctx.h.sqrt() * xi,
                ctx.h,
                ctx.truncation_k,
            )?);
        }
        let probe = check_poisson_structure(integrator, &y, ctx, &j, tol.poisson)?;
        worst = worst.max(probe.residual);
    }

    let n_steps = (t_end / ctx.h).round() as usize;
    if ((n_steps as f64) * ctx.h - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(Error::Grid(format!(
            "step size {} does not divide horizon {t_end}",
            ctx.h
        )));
    }
    let path = WienerPath::sample(m, n_steps, ctx.h, seed)?;
    let traj = integrator.integrate(y0, 0.0, t_end, ctx, &path)?;

    let casimir_drifts = system
        .casimirs()
        .iter()
        .map(|c| {
            let drift = invariant_drift(&traj, c);
            DriftEntry {
                name: c.name().to_string(),
                drift,
                tolerance: tol.casimir,
                passes: drift <= tol.casimir,
            }
        })
        .collect();
    let invariant_drifts = system
        .invariants()
        .iter()
        .map(|f| {
            let drift = invariant_drift(&traj, f);
            DriftEntry {
                name: f.name().to_string(),
                drift,
                tolerance: tol.invariant,
                passes: drift <= tol.invariant,
            }
        })
        .collect();

    Ok(StructureReport {
        system: system.name().to_string(),
        method: integrator.name().to_string(),
        poisson_residual: worst,
        poisson_tolerance: tol.poisson,
        probes,
        casimir_drifts,
        invariant_drifts,
    })
}

/// Reference solution for strong-error estimation, always driven by the
/// same underlying Brownian path as the method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Closed-form solution evaluated at the terminal Brownian value.
    Exact,
    /// Same method on a grid `factor` times finer than min(h_list).
    SelfFine { factor: usize },
    /// One-stage midpoint method on a grid `factor` times finer.
    MidpointFine { factor: usize },
}

impl Reference {
    fn factor(&self) -> usize {
        match self {
            Reference::Exact => 1,
            Reference::SelfFine { factor } | Reference::MidpointFine { factor } => *factor,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderStudyConfig {
    /// Strictly increasing step sizes, each dividing `t_end`.
    pub h_list: Vec<f64>,
    pub samples: usize,
    pub t_end: f64,
    pub seed: u64,
    pub reference: Reference,
    /// Replace all increments by zero: deterministic-order mode.
    pub zero_noise: bool,
    pub parallel: bool,
    /// Truncation and Newton settings; the `h` field is ignored.
    pub context: StepContext,
}

impl OrderStudyConfig {
    pub fn new(h_list: Vec<f64>, samples: usize, t_end: f64, seed: u64, reference: Reference) -> Self {
        OrderStudyConfig {
            h_list,
            samples,
            t_end,
            seed,
            reference,
            zero_noise: false,
            parallel: true,
            context: StepContext::new(0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderEstimate {
    pub h_list: Vec<f64>,
    /// e(h) = √(mean ‖y_T^h − y_T^ref‖²) over samples.
    pub errors: Vec<f64>,
    /// Standard error of e(h), from the sample variance of squared errors.
    pub stderrs: Vec<f64>,
    /// Least-squares slope of log e against log h.
    pub slope: f64,
    pub samples: usize,
    pub seed: u64,
}

impl OrderEstimate {
    /// CSV rows `h,rms_error,stderr`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "h,rms_error,stderr")?;
        for i in 0..self.h_list.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.h_list[i], self.errors[i], self.stderrs[i]
            )?;
        }
        Ok(())
    }
}

struct OrderGrid {
    h_ref: f64,
    n_ref: usize,
    coarsen_factors: Vec<usize>,
}

fn order_grid(config: &OrderStudyConfig) -> Result<OrderGrid> {
    if config.h_list.len() < 2 {
        return Err(Error::InvalidConfig(
            "order estimation needs at least two step sizes; slope undefined".into(),
        ));
    }
    if config.h_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "step sizes must be strictly increasing".into(),
        ));
    }
    if !config.zero_noise && config.samples < 100 {
        return Err(Error::InvalidConfig(format!(
            "mean-square estimation needs at least 100 samples, got {}",
            config.samples
        )));
    }
    if config.samples == 0 {
        return Err(Error::InvalidConfig("sample count must be ≥ 1".into()));
    }
    let h_min = config.h_list[0];
    let t = config.t_end;
    if h_min <= 0.0 || t <= 0.0 {
        return Err(Error::Grid(format!(
            "need positive step sizes and horizon, got h_min {h_min}, T {t}"
        )));
    }
    let n_min = (t / h_min).round() as usize;
    if n_min == 0 || (n_min as f64 * h_min - t).abs() > 1e-9 * t {
        return Err(Error::Grid(format!("h = {h_min} does not divide T = {t}")));
    }
    let factor = config.reference.factor();
    if factor == 0 {
        return Err(Error::InvalidConfig("refinement factor must be ≥ 1".into()));
    }
    let h_ref = h_min / factor as f64;
    let n_ref = n_min * factor;
    let mut coarsen_factors = Vec::with_capacity(config.h_list.len());
    for &h in &config.h_list {
        let q = (h / h_ref).round() as usize;
        if q == 0 || (q as f64 * h_ref - h).abs() > 1e-9 * h {
            return Err(Error::Grid(format!(
                "h = {h} is not an integer multiple of the reference grid {h_ref}"
            )));
        }
        let n_h = (t / h).round() as usize;
        if n_h == 0 || (n_h as f64 * h - t).abs() > 1e-9 * t {
            return Err(Error::Grid(format!("h = {h} does not divide T = {t}")));
        }
        coarsen_factors.push(q);
    }
    Ok(OrderGrid {
        h_ref,
        n_ref,
        coarsen_factors,
    })
}

/// Strong-error estimation: one fine Brownian path per sample, coarsened to
/// every h, terminal states compared against the coupled reference. The
/// per-sample squared errors reduce sequentially in sample order, so the
/// parallel and sequential modes produce identical results.
pub fn mean_square_order(
    integrator: &dyn Integrator,
    y0: &State,
    config: &OrderStudyConfig,
) -> Result<OrderEstimate> {
    let grid = order_grid(config)?;
    let system = integrator.system();
    let m = system.noise_count();
    if config.reference == Reference::Exact && !system.has_exact_solution() {
        return Err(Error::InvalidConfig(format!(
            "system '{}' has no closed-form solution; use a fine-grid reference",
            system.name()
        )));
    }
    let midpoint_tableau = SrkTableau::dirk(&vec![vec![1.0]; m + 1])?;

    let one_sample = |i: usize| -> Result<Vec<f64>> {
        let fine = WienerPath::sample_stream(
            m,
            grid.n_ref,
            grid.h_ref,
            config.seed,
            config.seed.wrapping_add(i as u64),
        )?;
        let fine = if config.zero_noise { fine.zeroed() } else { fine };
        let y_ref = match config.reference {
            Reference::Exact => {
                let w = fine.terminal();
                system
                    .exact_solution(config.t_end, &w, y0)
                    .expect("checked above")
            }
            Reference::SelfFine { .. } => integrator.terminal_state(y0, &config.context, &fine)?,
            Reference::MidpointFine { .. } => {
                run_terminal(y0, &config.context, &fine, |y, c, j| {
                    srk_step(system, &midpoint_tableau, y, c, j)
                })?
            }
        };
        let mut sq = Vec::with_capacity(config.h_list.len());
        for &q in &grid.coarsen_factors {
            let coarse = fine.coarsen(q)?;
            let y_h = integrator.terminal_state(y0, &config.context, &coarse)?;
            sq.push((y_h - &y_ref).norm_squared());
        }
        Ok(sq)
    };

    let per_sample: Vec<Vec<f64>> = if config.parallel {
        (0..config.samples)
            .into_par_iter()
            .map(one_sample)
            .collect::<Result<_>>()?
    } else {
        (0..config.samples).map(one_sample).collect::<Result<_>>()?
    };

    let n_h = config.h_list.len();
    let m_samples = config.samples as f64;
    let mut errors = Vec::with_capacity(n_h);
    let mut stderrs = Vec::with_capacity(n_h);
    for k in 0..n_h {
        let mean_sq = per_sample.iter().map(|s| s[k]).sum::<f64>() / m_samples;
        let e = mean_sq.sqrt();
        if e <= 0.0 || e.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "zero error at h = {}; slope undefined",
                config.h_list[k]
            )));
        }
        let se = if config.samples > 1 {
            let var_sq = per_sample
                .iter()
                .map(|s| (s[k] - mean_sq).powi(2))
                .sum::<f64>()
                / (m_samples - 1.0);
            var_sq.sqrt() / (2.0 * e * m_samples.sqrt())
        } else {
            0.0
        };
        errors.push(e);
        stderrs.push(se);
    }

    let xs: Vec<f64> = config.h_list.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(OrderEstimate {
        h_list: config.h_list.clone(),
        errors,
        stderrs,
        slope: ols_slope(&xs, &ys),
        samples: config.samples,
        seed: config.seed,
    })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let num: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let den: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    num / den
}
