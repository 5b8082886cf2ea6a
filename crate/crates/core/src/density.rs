//! Initial-density construction: analytic Gaussian bumps and plain-text voxel
//! grids sampled onto the spatial quadrature lattice.

use crate::error::{Error, Result};
use crate::fields::TerminalField;
use crate::mesh::SpaceTimeMesh;

/// `amplitude * exp(-sharpness * |x - center|^2)` sampled at every spatial
/// quadrature point and clipped below at `rho_min`.
pub fn gaussian_density(
    center: &[f64],
    sharpness: f64,
    amplitude: f64,
    mesh: &SpaceTimeMesh,
    rho_min: f64,
) -> Result<TerminalField> {
    if center.len() != mesh.dim() {
        return Err(Error::InvalidArgument(format!(
            "gaussian center has {} coordinates for a {}-d mesh",
            center.len(),
            mesh.dim()
        )));
    }
    if !(sharpness > 0.0) {
        return Err(Error::InvalidArgument("sharpness must be positive".into()));
    }
    Ok(TerminalField::from_fn(mesh, |p| {
        let mut r2 = 0.0;
        for (a, &c) in center.iter().enumerate() {
            let d = p[a] - c;
            r2 += d * d;
        }
        (amplitude * (-sharpness * r2).exp()).max(rho_min)
    }))
}

/// Reads the plain voxel format: an ASCII header `VOXEL nx ny nz` followed by
/// `nx * ny * nz` whitespace-separated reals in x-fastest order, the grid
/// covering the mesh box. Sampling is nearest-voxel. Values are clipped below
/// at `rho_min` before the optional normalization, so a normalized field has
/// quadrature integral exactly 1.
pub fn read_voxel_density(
    path: impl AsRef<std::path::Path>,
    mesh: &SpaceTimeMesh,
    normalize: bool,
    rho_min: f64,
) -> Result<TerminalField> {
    let text = std::fs::read_to_string(path.as_ref())?;
    voxel_density_from_str(&text, mesh, normalize, rho_min)
}

pub fn voxel_density_from_str(
    text: &str,
    mesh: &SpaceTimeMesh,
    normalize: bool,
    rho_min: f64,
) -> Result<TerminalField> {
    let mut tokens = text.split_ascii_whitespace();
    let magic = tokens
        .next()
        .ok_or_else(|| Error::Parse("empty voxel file".into()))?;
    if magic != "VOXEL" {
        return Err(Error::Parse(format!(
            "voxel header must start with VOXEL, got {magic:?}"
        )));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Parse("voxel header needs three grid sizes".into()))?;
        *d = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad voxel grid size {tok:?}")))?;
        if *d == 0 {
            return Err(Error::Parse("voxel grid sizes must be >= 1".into()));
        }
    }
    let expected = dims[0] * dims[1] * dims[2];
    let mut data = Vec::with_capacity(expected);
    for tok in tokens {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad voxel value {tok:?}")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite voxel value {v}")));
        }
        data.push(v);
    }
    if data.len() != expected {
        return Err(Error::Parse(format!(
            "voxel payload has {} values, header promises {expected}",
            data.len()
        )));
    }
    for a in mesh.dim()..3 {
        if dims[a] != 1 {
            return Err(Error::Parse(format!(
                "voxel grid extends along axis {a} but the mesh is {}-dimensional",
                mesh.dim()
            )));
        }
    }

    let mut field = TerminalField::from_fn(mesh, |p| {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for a in 0..3 {
            let v = if a < mesh.dim() {
                let frac = p[a] / mesh.spec.lengths[a];
                ((frac * dims[a] as f64).floor() as usize).min(dims[a] - 1)
            } else {
                0
            };
            idx += v * stride;
            stride *= dims[a];
        }
        data[idx].max(rho_min)
    });

    if normalize {
        let integral: f64 = field
            .values
            .iter()
            .zip(&mesh.spatial_weights)
            .map(|(&v, &w)| v * w)
            .sum();
        if !(integral > 0.0) {
            return Err(Error::Numerical(
                "voxel density has nonpositive mass".into(),
            ));
        }
        for v in &mut field.values {
            *v /= integral;
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshSpec};
    use approx::assert_abs_diff_eq;

    fn mesh_3d(n: usize, k: usize) -> SpaceTimeMesh {
        build_mesh(&MeshSpec {
            dim: 3,
            n_cells: vec![n; 3],
            lengths: vec![1.0; 3],
            n_t: 1,
            t_final: 1.0,
            degree: k,
        })
        .unwrap()
    }

    #[test]
    fn gaussian_hits_one_at_its_center() {
        let mesh = mesh_3d(2, 2);
        // Center placed exactly on a quadrature point.
        let center = mesh.spatial_point(7);
        let f = gaussian_density(&center, 50.0, 1.0, &mesh, 1e-6).unwrap();
        assert_abs_diff_eq!(f.values[7], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_reference_profile_pointwise() {
        let mesh = mesh_3d(4, 2);
        let f = gaussian_density(&[0.8, 0.5, 0.5], 50.0, 1.0, &mesh, 0.0).unwrap();
        for j in (0..f.values.len()).step_by(97) {
            let p = mesh.spatial_point(j);
            let expect = (-50.0
                * ((p[0] - 0.8).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)))
            .exp();
            assert_abs_diff_eq!(f.values[j], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn far_field_clips_to_floor() {
        let mesh = build_mesh(&MeshSpec {
            dim: 1,
            n_cells: vec![32],
            lengths: vec![1.0],
            n_t: 1,
            t_final: 1.0,
            degree: 2,
        })
        .unwrap();
        let f = gaussian_density(&[0.1], 5000.0, 1.0, &mesh, 1e-6).unwrap();
        assert_eq!(*f.values.last().unwrap(), 1e-6);
    }

    #[test]
    fn voxel_all_ones_normalized_is_identity() {
        let mesh = mesh_3d(2, 2);
        let text = format!("VOXEL 2 2 2\n{}", vec!["1.0"; 8].join(" "));
        let f = voxel_density_from_str(&text, &mesh, true, 1e-6).unwrap();
        for v in &f.values {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let mesh = mesh_3d(2, 1);
        let text = "VOXEL 2 2 2\n1 1 1 1 1 1 1";
        let err = voxel_density_from_str(text, &mesh, false, 1e-6).unwrap_err();
        assert!(err.to_string().contains("7"), "{err}");
        assert!(voxel_density_from_str("VOXEl 1 1 1\n1", &mesh, false, 1e-6).is_err());
        assert!(voxel_density_from_str("VOXEL 1 1 1\nxyz", &mesh, false, 1e-6).is_err());
        assert!(voxel_density_from_str("VOXEL 1 1 1\ninf", &mesh, false, 1e-6).is_err());
    }

    #[test]
    fn half_cube_indicator_normalizes_to_unit_mass() {
        let mesh = mesh_3d(4, 2);
        // Indicator of x < 0.5 on an 8x1x1 voxel grid.
        let text = format!("VOXEL 8 1 1\n{}", "1 1 1 1 0 0 0 0");
        let f = voxel_density_from_str(&text, &mesh, true, 1e-6).unwrap();
        let integral: f64 = f
            .values
            .iter()
            .zip(&mesh.spatial_weights)
            .map(|(&v, &w)| v * w)
            .sum();
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-10);
        // Roughly 2 inside; outside the floor is scaled along with the rest
        // (clipping happens before normalization so the integral is exact).
        let inside = f.values[0];
        let outside = *f.values.last().unwrap();
        assert_abs_diff_eq!(inside, 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(outside, 2e-6, epsilon = 1e-8);
    }

    #[test]
    fn mismatched_trailing_dims_rejected_for_low_dim_meshes() {
        let mesh = build_mesh(&MeshSpec {
            dim: 1,
            n_cells: vec![4],
            lengths: vec![1.0],
            n_t: 1,
            t_final: 1.0,
            degree: 1,
        })
        .unwrap();
        assert!(voxel_density_from_str("VOXEL 2 2 1\n1 1 1 1", &mesh, false, 1e-6).is_err());
        assert!(voxel_density_from_str("VOXEL 4 1 1\n1 2 3 4", &mesh, false, 1e-6).is_ok());
    }
}
