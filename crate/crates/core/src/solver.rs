//! One-step and whole-path integration of stochastic Runge-Kutta methods.
//!
//! Stage equations are solved with damped Newton iteration. Lower-triangular
//! tableaus (the diagonally implicit family) get sequential d-dimensional
//! stage solves; general tableaus fall back to one coupled solve over all
//! s·d stage unknowns.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poisson::{PoissonSystemDef, State};
use crate::tableau::SrkTableau;
use crate::wiener::WienerPath;

pub const DEFAULT_TRUNCATION_K: f64 = 4.0;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;

/// Per-step solver settings. `h` is the step size; the rest control
/// increment truncation and the implicit stage solves.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub h: f64,
    pub truncation_k: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl StepContext {
    pub fn new(h: f64) -> Self {
        StepContext {
            h,
            truncation_k: DEFAULT_TRUNCATION_K,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
        }
    }

    pub fn with_h(self, h: f64) -> Self {
        StepContext { h, ..self }
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    /// Newton iterations summed over stages.
    pub newton_iters: usize,
}

/// Clamp a raw increment ΔW = √h·ξ to ±√h·A_h with A_h = √(2k|ln h|).
///
/// The bound keeps the implicit stage equations solvable; it widens as
/// h → 0, so the clamp is exponentially rarely active.
pub fn truncated_increment(raw: f64, h: f64, k: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::StepSizeRange { h });
    }
    if k < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "truncation parameter k = {k} must be ≥ 1"
        )));
    }
    let bound = h.sqrt() * (2.0 * k * h.ln().abs()).sqrt();
    Ok(raw.clamp(-bound, bound))
}

/// One step of the stochastic Runge-Kutta method defined by `tableau`:
///
/// ```text
/// Y_i    = y + h Σ_j a⁰_ij f₀(Y_j) + Σ_r Σ_j aʳ_ij f_r(Y_j) Jʳ
/// y_next = y + h Σ_i b⁰_i f₀(Y_i) + Σ_r Σ_i bʳ_i f_r(Y_i) Jʳ
/// ```
///
/// `j_k` holds the (already truncated) increments Jʳ.
pub fn srk_step(
    system: &PoissonSystemDef,
    tableau: &SrkTableau,
    y_k: &State,
    ctx: &StepContext,
    j_k: &[f64],
) -> Result<StepOutcome> {
    let d = system.dimension();
    let m = system.noise_count();
    if tableau.noise_count() != m || j_k.len() != m {
        return Err(Error::Dimension(format!(
            "noise counts disagree: system {m}, tableau {}, increments {}",
            tableau.noise_count(),
            j_k.len()
        )));
    }
    if y_k.len() != d {
        return Err(Error::Dimension(format!(
            "state length {} vs system dimension {d}",
            y_k.len()
        )));
    }
    if y_k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("step input state".into()));
    }

    let (stage_fields, newton_iters) = if tableau.is_lower_triangular() {
        solve_stages_sequential(system, tableau, y_k, ctx, j_k)?
    } else {
        solve_stages_simultaneous(system, tableau, y_k, ctx, j_k)?
    };

    let mut y_next = y_k.clone();
    for (i, fields) in stage_fields.iter().enumerate() {
        y_next += ctx.h * tableau.b0()[i] * &fields[0];
        for (r, &jr) in j_k.iter().enumerate() {
            y_next += tableau.br(r)[i] * jr * &fields[r + 1];
        }
    }
    if y_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("step output state".into()));
    }
    Ok(StepOutcome {
        state: y_next,
        newton_iters,
    })
}

/// Per-stage combined field B(y)·(Σ_l c_l ∇H_l)(y) with its coefficients.
fn combined_field(system: &PoissonSystemDef, coefs: &[f64], y: &State) -> State {
    let mut u = system.hamiltonian(0).gradient(y) * coefs[0];
    for (l, c) in coefs.iter().enumerate().skip(1) {
        if *c != 0.0 {
            u += system.hamiltonian(l).gradient(y) * *c;
        }
    }
    system.structure().evaluate(y) * u
}

fn combined_field_jacobian(
    system: &PoissonSystemDef,
    coefs: &[f64],
    y: &State,
) -> DMatrix<f64> {
    let d = system.dimension();
    if system.field_jacobian(0, y).is_some() {
        let mut jac = DMatrix::zeros(d, d);
        for (l, c) in coefs.iter().enumerate() {
            if *c != 0.0 {
                jac += system.field_jacobian(l, y).expect("hook present") * *c;
            }
        }
        return jac;
    }
    // Central differences of the combined field, step √ε·max(1, |y_j|).
    let mut jac = DMatrix::zeros(d, d);
    for col in 0..d {
        let step = f64::EPSILON.sqrt() * y[col].abs().max(1.0);
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[col] += step;
        minus[col] -= step;
        let diff = (combined_field(system, coefs, &plus)
            - combined_field(system, coefs, &minus))
            / (2.0 * step);
        jac.set_column(col, &diff);
    }
    jac
}

/// All m+1 fields f_l at a solved stage value.
fn fields_at(system: &PoissonSystemDef, y: &State) -> Vec<State> {
    let b = system.structure().evaluate(y);
    (0..=system.noise_count())
        .map(|l| &b * system.hamiltonian(l).gradient(y))
        .collect()
}

/// Damped Newton on R(Y) = Y − base − B(Y)(Σ_l c_l ∇H_l)(Y).
fn newton_solve_stage(
    system: &PoissonSystemDef,
    base: &State,
    coefs: &[f64],
    guess: &State,
    ctx: &StepContext,
    stage: usize,
) -> Result<(State, usize)> {
    if coefs.iter().all(|c| *c == 0.0) {
        return Ok((base.clone(), 0));
    }
    let d = base.len();
    let identity = DMatrix::<f64>::identity(d, d);
    let mut y = guess.clone();
    let mut residual = &y - base - combined_field(system, coefs, &y);
    let mut res_norm = residual.amax();
    for iter in 1..=ctx.newton_max_iter {
        if res_norm <= ctx.newton_tol {
            return Ok((y, iter - 1));
        }
        let jac = &identity - combined_field_jacobian(system, coefs, &y);
        let delta = jac
            .lu()
            .solve(&residual)
            .ok_or(Error::SingularNewtonMatrix { stage })?;
        let mut lambda = 1.0;
        loop {
            let trial = &y - lambda * &delta;
            let trial_res = &trial - base - combined_field(system, coefs, &trial);
            let trial_norm = trial_res.amax();
            if trial_norm < res_norm || lambda <= 1.0 / 64.0 {
                y = trial;
                residual = trial_res;
                res_norm = trial_norm;
                break;
            }
            lambda *= 0.5;
        }
        if !res_norm.is_finite() {
            return Err(Error::NonFinite(format!("stage {stage} Newton residual")));
        }
    }
    if res_norm <= ctx.newton_tol {
        Ok((y, ctx.newton_max_iter))
    } else {
        Err(Error::NewtonDivergence {
            stage,
            iters: ctx.newton_max_iter,
            residual: res_norm,
        })
    }
}

type StageFields = Vec<Vec<State>>;

fn solve_stages_sequential(
    system: &PoissonSystemDef,
    tableau: &SrkTableau,
    y_k: &State,
    ctx: &StepContext,
    j_k: &[f64],
) -> Result<(StageFields, usize)> {
    let s = tableau.stages();
    let m = system.noise_count();
    let mut stage_fields: StageFields = Vec::with_capacity(s);
    let mut total_iters = 0;
    for i in 0..s {
        let mut base = y_k.clone();
        for (p, fields) in stage_fields.iter().enumerate() {
            base += ctx.h * tableau.a0()[(i, p)] * &fields[0];
            for (r, &jr) in j_k.iter().enumerate() {
                base += tableau.ar(r)[(i, p)] * jr * &fields[r + 1];
            }
        }
        let mut coefs = Vec::with_capacity(m + 1);
        coefs.push(ctx.h * tableau.a0()[(i, i)]);
        for (r, &jr) in j_k.iter().enumerate() {
            coefs.push(tableau.ar(r)[(i, i)] * jr);
        }
        let (stage_value, iters) = newton_solve_stage(system, &base, &coefs, y_k, ctx, i)?;
        total_iters += iters;
        stage_fields.push(fields_at(system, &stage_value));
    }
    Ok((stage_fields, total_iters))
}

fn solve_stages_simultaneous(
    system: &PoissonSystemDef,
    tableau: &SrkTableau,
    y_k: &State,
    ctx: &StepContext,
    j_k: &[f64],
) -> Result<(StageFields, usize)> {
    let s = tableau.stages();
    let m = system.noise_count();
    let d = system.dimension();
    let n = s * d;

    // Coefficient of f_l(Y_j) in the stage-i equation.
    let coef = |i: usize, j: usize, l: usize| -> f64 {
        if l == 0 {
            ctx.h * tableau.a0()[(i, j)]
        } else {
            tableau.ar(l - 1)[(i, j)] * j_k[l - 1]
        }
    };

    let stage_of = |u: &DVector<f64>, j: usize| State::from_column_slice(&u.as_slice()[j * d..(j + 1) * d]);

    let residual_of = |u: &DVector<f64>| -> DVector<f64> {
        let per_stage_fields: Vec<Vec<State>> =
            (0..s).map(|j| fields_at(system, &stage_of(u, j))).collect();
        let mut res = DVector::zeros(n);
        for i in 0..s {
            let mut r_i = stage_of(u, i) - y_k;
            for (j, fields) in per_stage_fields.iter().enumerate() {
                for (l, field) in fields.iter().enumerate() {
                    let c = coef(i, j, l);
                    if c != 0.0 {
                        r_i -= c * field;
                    }
                }
            }
            res.rows_mut(i * d, d).copy_from(&r_i);
        }
        res
    };

    let mut u = DVector::from_fn(n, |idx, _| y_k[idx % d]);
    let mut residual = residual_of(&u);
    let mut res_norm = residual.amax();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut total_iters = 0;

    for _ in 1..=ctx.newton_max_iter {
        if res_norm <= ctx.newton_tol {
            break;
        }
        total_iters += 1;
        // Assemble block Jacobian: block (i, j) is −Σ_l coef(i,j,l)·∂f_l/∂Y_j.
        let mut jac = identity.clone();
        for j in 0..s {
            let y_j = stage_of(&u, j);
            for i in 0..s {
                let coefs: Vec<f64> = (0..=m).map(|l| coef(i, j, l)).collect();
                if coefs.iter().all(|c| *c == 0.0) {
                    continue;
                }
                let block = combined_field_jacobian(system, &coefs, &y_j);
                let mut view = jac.view_mut((i * d, j * d), (d, d));
                view -= block;
            }
        }
        let delta = jac
            .lu()
            .solve(&residual)
            .ok_or(Error::SingularNewtonMatrix { stage: 0 })?;
        let mut lambda = 1.0;
        loop {
            let trial = &u - lambda * &delta;
            let trial_res = residual_of(&trial);
            let trial_norm = trial_res.amax();
            if trial_norm < res_norm || lambda <= 1.0 / 64.0 {
                u = trial;
                residual = trial_res;
                res_norm = trial_norm;
                break;
            }
            lambda *= 0.5;
        }
        if !res_norm.is_finite() {
            return Err(Error::NonFinite("coupled stage Newton residual".into()));
        }
    }
    if res_norm > ctx.newton_tol {
        return Err(Error::NewtonDivergence {
            stage: 0,
            iters: total_iters,
            residual: res_norm,
        });
    }
    let stage_fields = (0..s).map(|j| fields_at(system, &stage_of(&u, j))).collect();
    Ok((stage_fields, total_iters))
}

/// Time grid plus recorded states for one integrated path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<State>,
    method: String,
    newton_iters: Vec<usize>,
}

impl Trajectory {
    pub fn new(method: impl Into<String>, t0: f64, y0: State) -> Self {
        Trajectory {
            times: vec![t0],
            states: vec![y0],
            method: method.into(),
            newton_iters: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: State, newton_iters: usize) {
        self.times.push(t);
        self.states.push(state);
        self.newton_iters.push(newton_iters);
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn newton_iters(&self) -> &[usize] {
        &self.newton_iters
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &State {
        self.states.last().expect("trajectory holds at least y0")
    }

    pub fn dimension(&self) -> usize {
        self.states[0].len()
    }

    /// CSV rows `t,y1,...,yd` at full double precision.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let d = self.dimension();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("y{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, y) in self.times.iter().zip(&self.states) {
            let mut row = Vec::with_capacity(d + 1);
            row.push(format!("{t:.16e}"));
            row.extend(y.iter().map(|v| format!("{v:.16e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Companion CSV `t,C1..,H1..` with every registered Casimir and
    /// invariant evaluated along the path.
    pub fn write_invariants_csv<W: Write>(
        &self,
        system: &PoissonSystemDef,
        out: &mut W,
    ) -> std::io::Result<()> {
        let n_c = system.casimirs().len();
        let n_h = system.invariants().len();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n_c).map(|i| format!("C{i}")))
            .chain((1..=n_h).map(|i| format!("H{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, y) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(system.casimirs().iter().map(|c| format!("{:.16e}", c.value(y))));
            row.extend(system.invariants().iter().map(|f| format!("{:.16e}", f.value(y))));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Drive a one-step map over a whole increment path, truncating each raw
/// increment at the path's own step size.
pub fn run_grid<F>(
    method: &str,
    y0: &State,
    t0: f64,
    ctx: &StepContext,
    path: &WienerPath,
    mut step: F,
) -> Result<Trajectory>
where
    F: FnMut(&State, &StepContext, &[f64]) -> Result<StepOutcome>,
{
    let ctx = ctx.with_h(path.h());
    let mut traj = Trajectory::new(method, t0, y0.clone());
    let mut j = vec![0.0; path.noise_count()];
    for n in 0..path.len() {
        let raw = path.step_increments(n);
        for (r, out) in j.iter_mut().enumerate() {
            *out = truncated_increment(raw[r], ctx.h, ctx.truncation_k)
                .map_err(|e| Error::StepFailed {
                    index: n,
                    source: Box::new(e),
                })?;
        }
        let outcome = step(traj.terminal(), &ctx, &j).map_err(|e| Error::StepFailed {
            index: n,
            source: Box::new(e),
        })?;
        traj.push(t0 + (n + 1) as f64 * ctx.h, outcome.state, outcome.newton_iters);
    }
    Ok(traj)
}

/// Like [`run_grid`] but keeps only the terminal state.
pub fn run_terminal<F>(
    y0: &State,
    ctx: &StepContext,
    path: &WienerPath,
    mut step: F,
) -> Result<State>
where
    F: FnMut(&State, &StepContext, &[f64]) -> Result<StepOutcome>,
{
    let ctx = ctx.with_h(path.h());
    let mut y = y0.clone();
    let mut j = vec![0.0; path.noise_count()];
    for n in 0..path.len() {
        let raw = path.step_increments(n);
        for (r, out) in j.iter_mut().enumerate() {
            *out = truncated_increment(raw[r], ctx.h, ctx.truncation_k)
                .map_err(|e| Error::StepFailed {
                    index: n,
                    source: Box::new(e),
                })?;
        }
        y = step(&y, &ctx, &j)
            .map_err(|e| Error::StepFailed {
                index: n,
                source: Box::new(e),
            })?
            .state;
    }
    Ok(y)
}

/// The path's steps must tile [t0, t_end] exactly.
pub fn validate_span(path: &WienerPath, t0: f64, t_end: f64) -> Result<()> {
    let span = t_end - t0;
    let covered = path.h() * path.len() as f64;
    if (covered - span).abs() > 1e-12 * span.abs().max(1.0) {
        return Err(Error::Grid(format!(
            "path covers {covered}, requested span {span}"
        )));
    }
    Ok(())
}

/// Integrate a system with a fixed tableau over a sampled path.
pub fn integrate_path(
    system: &PoissonSystemDef,
    tableau: &SrkTableau,
    y0: &State,
    t0: f64,
    t_end: f64,
    ctx: &StepContext,
    path: &WienerPath,
) -> Result<Trajectory> {
    if path.noise_count() != system.noise_count() {
        return Err(Error::Dimension(format!(
            "path noise count {} vs system {}",
            path.noise_count(),
            system.noise_count()
        )));
    }
    validate_span(path, t0, t_end)?;
    run_grid(system.name(), y0, t0, ctx, path, |y, c, j| {
        srk_step(system, tableau, y, c, j)
    })
}
