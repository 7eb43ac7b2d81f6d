//! The four subcommands. Each returns Ok(exit_code) once flag resolution
//! succeeds; setup problems surface as Err and map to a usage failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sps_core::analysis::{
    mean_square_order, verify_structure, OrderStudyConfig, StructureTolerances,
};
use sps_core::tableau::check_symplectic_conditions;
use sps_core::wiener::WienerPath;

use crate::config::{order_defaults, parse_reference, resolve, CommonArgs, FileConfig, OrderArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

fn report_failure(err: anyhow::Error) -> i32 {
    eprintln!("error: {err:#}");
    EXIT_NUMERICAL
}

/// Grid length for horizon t_end at step h; t_end must sit on the grid.
fn step_count(t_end: f64, h: f64) -> Result<usize> {
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        bail!("horizon T = {t_end} is not an integer multiple of h = {h}");
    }
    Ok(n as usize)
}

fn invariants_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".to_string());
    out.with_file_name(format!("{stem}_invariants.csv"))
}

/// Writes through a closure taking the buffered file handle, flushing on success.
fn write_file<F>(path: &Path, emit: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    emit(&mut writer).with_context(|| format!("writing {}", path.display()))?;
    writer
        .flush()
        .with_context(|| format!("flushing {}", path.display()))?;
    Ok(())
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<i32> {
    let resolved = resolve(args, 10.0)?;
    let Some(out) = resolved.out.clone() else {
        bail!("simulate requires --out");
    };
    let n_steps = step_count(resolved.t_end, resolved.h)?;

    let run = || -> Result<()> {
        let system = resolved.integrator.system();
        let path = WienerPath::sample(system.noise_count(), n_steps, resolved.h, resolved.seed)?;
        let traj = resolved
            .integrator
            .integrate(&resolved.y0, 0.0, resolved.t_end, &resolved.ctx, &path)?;
        write_file(&out, |w| traj.write_csv(w))?;
        let inv_path = invariants_path(&out);
        write_file(&inv_path, |w| traj.write_invariants_csv(system, w))?;

        println!(
            "system={} method={} h={:.16e} T={:.16e} seed={}",
            resolved.system_name, resolved.method_name, resolved.h, resolved.t_end, resolved.seed
        );
        println!("rows={}", traj.len());
        let fields: Vec<String> = traj.terminal().iter().map(|v| format!("{v:.16e}")).collect();
        println!("terminal={}", fields.join(","));
        println!("trajectory={}", out.display());
        println!("invariants={}", inv_path.display());
        Ok(())
    };

    match run() {
        Ok(()) => Ok(EXIT_OK),
        Err(err) => Ok(report_failure(err)),
    }
}

pub fn cmd_verify(args: &CommonArgs) -> Result<i32> {
    let resolved = resolve(args, 10.0)?;
    step_count(resolved.t_end, resolved.h)?;

    let symplectic = check_symplectic_conditions(resolved.integrator.tableau(), 1e-12);
    println!("tableau stages={}", resolved.integrator.tableau().stages());
    println!("symplectic_drift_residual={:.16e}", symplectic.residual_drift);
    println!("symplectic_mixed_residual={:.16e}", symplectic.residual_mixed);
    println!(
        "symplectic_diffusion_residual={:.16e}",
        symplectic.residual_diffusion
    );
    println!(
        "symplectic_conditions={}",
        if symplectic.passes { "pass" } else { "fail" }
    );

    // The exact-coordinate method pins conserved coordinates to round-off,
    // so it is held to a tighter Casimir budget.
    let tolerances = StructureTolerances {
        casimir: if resolved.method_name == "transformed" {
            1e-12
        } else {
            1e-10
        },
        ..StructureTolerances::default()
    };

    let report = verify_structure(
        resolved.integrator.as_ref(),
        &resolved.y0,
        resolved.t_end,
        &resolved.ctx,
        resolved.seed,
        20,
        &tolerances,
    );
    match report {
        Ok(report) => {
            print!("{}", report.render_text());
            if let Some(out) = &resolved.out {
                write_file(out, |w| report.write_csv(w))?;
                println!("report={}", out.display());
            }
            if symplectic.passes && report.passes() {
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_VERIFY)
            }
        }
        Err(err) => Ok(report_failure(err.into())),
    }
}

pub fn cmd_order(args: &OrderArgs) -> Result<i32> {
    let resolved = resolve(&args.common, 1.0)?;
    let file = FileConfig::load(args.common.config.as_deref())?;
    let defaults = order_defaults(&resolved.system_name);

    let h_list = args
        .h_list
        .clone()
        .or(file.f64_list("h-list")?)
        .unwrap_or(defaults.h_list);
    if h_list.len() < 2 {
        bail!("--h-list needs at least two step sizes to fit a slope");
    }
    let samples = args
        .samples
        .or(file.usize("samples")?)
        .unwrap_or(defaults.samples);
    let sequential = args.sequential || file.bool("sequential")?.unwrap_or(false);

    let reference = match args.reference.clone().or_else(|| file.string("reference")) {
        Some(s) => parse_reference(&s)?,
        None => {
            if resolved.integrator.system().has_exact_solution() {
                sps_core::analysis::Reference::Exact
            } else {
                sps_core::analysis::Reference::SelfFine { factor: 16 }
            }
        }
    };

    let mut config = OrderStudyConfig::new(
        h_list,
        samples,
        resolved.t_end,
        resolved.seed,
        reference,
    );
    config.parallel = !sequential;
    config.context = resolved.ctx;

    println!(
        "system={} method={} T={:.16e} samples={} seed={}",
        resolved.system_name, resolved.method_name, resolved.t_end, samples, resolved.seed
    );

    match mean_square_order(resolved.integrator.as_ref(), &resolved.y0, &config) {
        Ok(estimate) => {
            for ((h, err), se) in estimate
                .h_list
                .iter()
                .zip(&estimate.errors)
                .zip(&estimate.stderrs)
            {
                println!("h={h:.16e} rms_error={err:.16e} stderr={se:.16e}");
            }
            println!("slope={:.16e}", estimate.slope);
            if let Some(out) = &resolved.out {
                write_file(out, |w| estimate.write_csv(w))?;
                println!("errors={}", out.display());
            }
            Ok(EXIT_OK)
        }
        Err(err) => Ok(report_failure(err.into())),
    }
}

pub fn cmd_tableau_check(args: &CommonArgs) -> Result<i32> {
    let resolved = crate::config::resolve_tableau_only(args)?;
    let tableau = &resolved.tableau;

    if !resolved.explicit {
        println!(
            "checking built-in tableau of method '{}'",
            resolved.method_name
        );
    }
    print!("{}", tableau.to_text());
    println!(
        "lower_triangular={}",
        if tableau.is_lower_triangular() {
            "yes"
        } else {
            "no"
        }
    );
    for warning in tableau.weight_warnings() {
        println!("warning: {warning}");
    }

    let report = check_symplectic_conditions(tableau, 1e-12);
    println!("drift_residual={:.16e}", report.residual_drift);
    println!("mixed_residual={:.16e}", report.residual_mixed);
    println!("diffusion_residual={:.16e}", report.residual_diffusion);
    println!("tolerance={:.16e}", report.tolerance);
    println!(
        "symplectic_conditions={}",
        if report.passes { "pass" } else { "fail" }
    );

    Ok(if report.passes { EXIT_OK } else { EXIT_VERIFY })
}
