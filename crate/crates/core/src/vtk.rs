//! Legacy ASCII VTK volume snapshots (STRUCTURED_POINTS).
//!
//! Fields are resampled from the quadrature lattice onto the uniform vertex
//! grid of the spatial mesh by per-cell polynomial evaluation, and printed
//! with 9 significant digits so identical runs produce byte-identical files.

use crate::error::Result;
use crate::fields::{DGField, DgSampler, TerminalField};
use crate::mesh::SpaceTimeMesh;
use std::io::Write;
use std::path::Path;

/// Formats with 9 significant digits: fixed notation for moderate exponents,
/// scientific otherwise. Trailing zeros are kept.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000".into();
    }
    let e = v.abs().log10().floor() as i32;
    if (-4..=8).contains(&e) {
        format!("{:.*}", (8 - e).max(0) as usize, v)
    } else {
        format!("{v:.8e}")
    }
}

/// Vertex grid dimensions padded to three axes.
fn vertex_dims(mesh: &SpaceTimeMesh) -> [usize; 3] {
    let mut dims = [1usize; 3];
    for a in 0..mesh.dim() {
        dims[a] = mesh.spec.n_cells[a] + 1;
    }
    dims
}

fn vertex_spacing(mesh: &SpaceTimeMesh) -> [f64; 3] {
    let mut sp = [1.0; 3];
    for a in 0..mesh.dim() {
        sp[a] = mesh.spec.lengths[a] / mesh.spec.n_cells[a] as f64;
    }
    sp
}

/// Samples a space-time field at time `t` on the vertex grid (x fastest).
pub fn sample_on_vertices(
    mesh: &SpaceTimeMesh,
    sampler: &DgSampler<'_>,
    field: &DGField,
    t: f64,
) -> Vec<f64> {
    let dims = vertex_dims(mesh);
    let sp = vertex_spacing(mesh);
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for iz in 0..dims[2] {
        for iy in 0..dims[1] {
            for ix in 0..dims[0] {
                let p = [ix as f64 * sp[0], iy as f64 * sp[1], iz as f64 * sp[2]];
                out.push(sampler.eval(field, t, p));
            }
        }
    }
    out
}

fn sample_terminal_on_vertices(
    mesh: &SpaceTimeMesh,
    sampler: &DgSampler<'_>,
    field: &TerminalField,
) -> Vec<f64> {
    let dims = vertex_dims(mesh);
    let sp = vertex_spacing(mesh);
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for iz in 0..dims[2] {
        for iy in 0..dims[1] {
            for ix in 0..dims[0] {
                let p = [ix as f64 * sp[0], iy as f64 * sp[1], iz as f64 * sp[2]];
                out.push(sampler.eval_terminal(field, p));
            }
        }
    }
    out
}

/// Writes one snapshot: a SCALARS block per species plus `varrho` when a
/// terminal density is supplied.
pub fn write_vtk_snapshot(
    path: impl AsRef<Path>,
    mesh: &SpaceTimeMesh,
    t: f64,
    species: &[(&str, &DGField)],
    varrho: Option<&TerminalField>,
) -> Result<()> {
    let sampler = DgSampler::new(mesh)?;
    let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, field) in species {
        blocks.push((
            (*name).to_string(),
            sample_on_vertices(mesh, &sampler, field, t),
        ));
    }
    if let Some(v) = varrho {
        blocks.push(("varrho".into(), sample_terminal_on_vertices(mesh, &sampler, v)));
    }
    write_structured_points(path, mesh, t, &blocks)
}

fn write_structured_points(
    path: impl AsRef<Path>,
    mesh: &SpaceTimeMesh,
    t: f64,
    blocks: &[(String, Vec<f64>)],
) -> Result<()> {
    let dims = vertex_dims(mesh);
    let sp = vertex_spacing(mesh);
    let n_points = dims[0] * dims[1] * dims[2];
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "density snapshot t={}", fmt_sig9(t))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(
        w,
        "ORIGIN {} {} {}",
        fmt_sig9(0.0),
        fmt_sig9(0.0),
        fmt_sig9(0.0)
    )?;
    writeln!(
        w,
        "SPACING {} {} {}",
        fmt_sig9(sp[0]),
        fmt_sig9(sp[1]),
        fmt_sig9(sp[2])
    )?;
    writeln!(w, "POINT_DATA {n_points}")?;
    for (name, values) in blocks {
        debug_assert_eq!(values.len(), n_points);
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(w, "{}", fmt_sig9(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshSpec};

    fn mesh_3d(n: usize) -> SpaceTimeMesh {
        build_mesh(&MeshSpec {
            dim: 3,
            n_cells: vec![n; 3],
            lengths: vec![1.0; 3],
            n_t: 1,
            t_final: 1.0,
            degree: 1,
        })
        .unwrap()
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(1.0), "1.00000000");
        assert_eq!(fmt_sig9(0.0), "0.00000000");
        assert_eq!(fmt_sig9(0.5), "0.500000000");
        assert_eq!(fmt_sig9(17.25), "17.2500000");
        assert_eq!(fmt_sig9(-0.25), "-0.250000000");
        assert_eq!(fmt_sig9(1e-6), "1.00000000e-6");
    }

    #[test]
    fn unit_field_writes_expected_values() {
        let mesh = mesh_3d(1);
        let ones = DGField::from_fn(&mesh, |_, _| 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.vtk");
        write_vtk_snapshot(&path, &mesh, 0.5, &[("rho_1", &ones)], None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET STRUCTURED_POINTS"));
        assert!(text.contains("DIMENSIONS 2 2 2"));
        assert!(text.contains("POINT_DATA 8"));
        let count = text.lines().filter(|l| *l == "1.00000000").count();
        assert_eq!(count, 8);
    }

    #[test]
    fn dimensions_line_for_paper_grid() {
        let mesh = mesh_3d(16);
        let ones = DGField::from_fn(&mesh, |_, _| 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.vtk");
        write_vtk_snapshot(&path, &mesh, 0.0, &[("rho_1", &ones)], None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DIMENSIONS 17 17 17"));
        assert!(text.contains("POINT_DATA 4913"));
    }

    #[test]
    fn values_round_trip_to_nine_digits() {
        let mesh = mesh_3d(2);
        let f = DGField::from_fn(&mesh, |_, p| 0.3 + p[0] * 1.7 + p[1] * p[2]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.vtk");
        write_vtk_snapshot(&path, &mesh, 0.5, &[("rho_1", &f)], None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let sampler = DgSampler::new(&mesh).unwrap();
        let expect = sample_on_vertices(&mesh, &sampler, &f, 0.5);
        let values: Vec<f64> = text
            .lines()
            .skip_while(|l| *l != "LOOKUP_TABLE default")
            .skip(1)
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(values.len(), expect.len());
        for (a, b) in values.iter().zip(&expect) {
            let scale = b.abs().max(1e-300);
            assert!((a - b).abs() / scale <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn varrho_block_present_when_supplied() {
        let mesh = mesh_3d(2);
        let rho = DGField::from_fn(&mesh, |_, _| 1.0);
        let varrho = crate::fields::TerminalField::constant(&mesh, 2.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.vtk");
        write_vtk_snapshot(&path, &mesh, 1.0, &[("rho_1", &rho)], Some(&varrho)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("SCALARS rho_1 double 1"));
        assert!(text.contains("SCALARS varrho double 1"));
    }

    #[test]
    fn byte_identical_across_runs() {
        let mesh = mesh_3d(2);
        let f = DGField::from_fn(&mesh, |t, p| (1.0 + t) * p[0] + p[1] * p[2]);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.vtk");
        let p2 = dir.path().join("b.vtk");
        write_vtk_snapshot(&p1, &mesh, 0.25, &[("rho_1", &f)], None).unwrap();
        write_vtk_snapshot(&p2, &mesh, 0.25, &[("rho_1", &f)], None).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
