//! Run orchestration: configuration to solver objects, the solve itself, and
//! result export.

use crate::config::{DensitySpec, ModeName, OutputFormat, RunConfig, SolverName};
use crate::density::{gaussian_density, read_voxel_density};
use crate::error::{Error, Result};
use crate::fields::{DGField, TerminalField};
use crate::mesh::{build_mesh, MeshSpec, SpaceTimeMesh};
use crate::model::ModelParams;
use crate::pdhg::{LinearSolver, Mode, PdhgConfig, Problem, Solver, SolverState};
use crate::report::write_convergence_csv;
use crate::vtk::write_vtk_snapshot;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIterReached,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: RunStatus,
    pub iterations: usize,
    pub final_err: f64,
    pub objective: f64,
    /// Distance estimate (geodesic mode, zero interaction weight).
    pub distance: Option<f64>,
    pub wall_seconds: f64,
    pub out_dir: PathBuf,
}

fn build_density(spec: &DensitySpec, mesh: &SpaceTimeMesh, rho_min: f64) -> Result<TerminalField> {
    match (&spec.gaussian, &spec.voxel) {
        (Some(g), None) => gaussian_density(&g.center, g.sharpness, g.amplitude, mesh, rho_min),
        (None, Some(v)) => read_voxel_density(&v.path, mesh, v.normalize, rho_min),
        _ => Err(Error::Config(
            "density spec must set exactly one of gaussian/voxel".into(),
        )),
    }
}

/// Builds the solver for a validated configuration.
pub fn build_solver(config: &RunConfig) -> Result<Solver> {
    config.validate()?;
    let mesh = build_mesh(&MeshSpec {
        dim: config.mesh.dim,
        n_cells: config.mesh.cells.clone(),
        lengths: config.mesh.resolved_lengths(),
        n_t: config.mesh.time_cells,
        t_final: config.mesh.final_time,
        degree: config.mesh.degree,
    })?;
    let n = config.n_species();
    let mut params = if n == 1 {
        ModelParams::single_species(config.model.alpha, config.resolved_beta()[0])?
    } else {
        ModelParams::cyclic(n, config.model.alpha, config.resolved_beta())?
    };
    params.rho_min = config.model.rho_min;
    params.rho_max = config.model.rho_max;
    params.sigma_u = config.pdhg.sigma_u;
    params.prox_sweeps = config.pdhg.prox_sweeps;

    let rho0 = config
        .densities
        .iter()
        .map(|d| build_density(d, &mesh, params.rho_min))
        .collect::<Result<Vec<_>>>()?;
    let targets = if config.model.mode == ModeName::Geodesic {
        Some(
            config
                .targets
                .iter()
                .map(|d| build_density(d, &mesh, params.rho_min))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let pdhg = PdhgConfig {
        sigma_phi: config.pdhg.sigma_phi,
        tol: config.pdhg.tol,
        max_iter: config.pdhg.max_iter,
        diag_every: config.pdhg.diag_every,
        mode: match config.model.mode {
            ModeName::Barycenter => Mode::Barycenter,
            ModeName::Geodesic => Mode::Geodesic,
        },
        clamp_varrho: config.pdhg.clamp_varrho,
        linear_solver: match config.pdhg.linear_solver {
            SolverName::Tensor => LinearSolver::Tensor,
            SolverName::Jacobi => LinearSolver::Jacobi,
        },
        lin_tol: config.pdhg.lin_tol,
        lin_max_iter: config.pdhg.lin_max_iter,
    };
    Solver::new(
        Problem {
            mesh,
            params,
            rho0,
            targets,
        },
        pdhg,
    )
}

fn export(config: &RunConfig, solver: &Solver, state: &SolverState) -> Result<()> {
    let out_dir = PathBuf::from(&config.output.dir);
    std::fs::create_dir_all(&out_dir)?;
    let formats = &config.output.formats;
    if formats.contains(&OutputFormat::Csv) && !state.history.is_empty() {
        write_convergence_csv(&state.history, out_dir.join("convergence.csv"))?;
    }
    if formats.contains(&OutputFormat::Vtk) && !config.output.snapshots.is_empty() {
        let mesh = solver.mesh();
        let n = solver.problem.params.n_species;
        let names: Vec<String> = (1..=n).map(|i| format!("rho_{i}")).collect();
        let fields: Vec<DGField> = (0..n)
            .map(|i| DGField {
                values: state.species_density(i, n),
            })
            .collect();
        let varrho = (!state.varrho.is_empty()).then(|| TerminalField {
            values: state.varrho.clone(),
        });
        for &t in &config.output.snapshots {
            let species: Vec<(&str, &DGField)> = names
                .iter()
                .map(|s| s.as_str())
                .zip(fields.iter())
                .collect();
            write_vtk_snapshot(
                out_dir.join(format!("snapshot_{t:.4}.vtk")),
                mesh,
                t,
                &species,
                varrho.as_ref(),
            )?;
        }
    }
    Ok(())
}

/// Full run: build, solve, export, one-line summary on stdout.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let solver = build_solver(config)?;
    let mut state = solver.initialize();
    solver.iterate(&mut state)?;
    export(config, &solver, &state)?;

    let diag = match state.last_diagnostics() {
        Some(d) => d,
        None => solver.diagnostics(&state)?,
    };
    let distance = solver.distance_estimate(&state)?;
    let report = RunReport {
        status: if state.converged {
            RunStatus::Converged
        } else {
            RunStatus::MaxIterReached
        },
        iterations: state.iter,
        final_err: state.final_err().unwrap_or(f64::NAN),
        objective: diag.objective,
        distance,
        wall_seconds: start.elapsed().as_secs_f64(),
        out_dir: PathBuf::from(&config.output.dir),
    };
    let status = match report.status {
        RunStatus::Converged => "converged",
        RunStatus::MaxIterReached => "max-iter",
    };
    let dist = report
        .distance
        .map(|d| format!(" distance={d:.6e}"))
        .unwrap_or_default();
    println!(
        "{status}: iterations={} err={:.6e} objective={:.6e}{dist} wall={:.2}s",
        report.iterations, report.final_err, report.objective, report.wall_seconds
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn tiny_config(dir: &std::path::Path, extra: &str) -> RunConfig {
        let text = format!(
            r#"
[mesh]
dim = 1
cells = [8]
time_cells = 2
degree = 1

[[density]]
gaussian = {{ center = [0.5], sharpness = 30.0 }}

[[density]]
gaussian = {{ center = [0.5], sharpness = 30.0 }}

[output]
dir = "{}"
snapshots = [0.0, 1.0]
{extra}
"#,
            dir.display()
        );
        parse_config_str(&text).unwrap()
    }

    #[test]
    fn identical_inputs_converge_and_export() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path(), "");
        let report = run(&config).unwrap();
        assert_eq!(report.status, RunStatus::Converged);
        assert!(dir.path().join("convergence.csv").exists());
        assert!(dir.path().join("snapshot_0.0000.vtk").exists());
        assert!(dir.path().join("snapshot_1.0000.vtk").exists());
        let text = std::fs::read_to_string(dir.path().join("snapshot_1.0000.vtk")).unwrap();
        assert!(text.contains("SCALARS rho_1 double 1"));
        assert!(text.contains("SCALARS rho_2 double 1"));
        assert!(text.contains("SCALARS varrho double 1"));
    }

    #[test]
    fn max_iter_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path(), "");
        config.pdhg.max_iter = 1;
        config.pdhg.tol = 1e-30;
        // Different centers so the run cannot converge in one iteration.
        config.densities[1].gaussian.as_mut().unwrap().center = vec![0.3];
        let report = run(&config).unwrap();
        assert_eq!(report.status, RunStatus::MaxIterReached);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn missing_voxel_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path(), "");
        config.densities[0].gaussian = None;
        config.densities[0].voxel = Some(crate::config::VoxelSpec {
            path: "/nonexistent/definitely-missing.vox".into(),
            normalize: false,
        });
        assert!(run(&config).is_err());
    }
}
