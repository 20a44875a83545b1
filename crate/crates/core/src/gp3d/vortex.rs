//! Phase-winding vortex detection on 2D slices.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::CartesianGrid3D;
use crate::error::{Error, Result};

use super::space::CylindricalSpace;

/// Corners below this fraction of the slice's peak amplitude are not trusted.
pub const DEFAULT_AMPLITUDE_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vortex {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub winding: i32,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VortexReport {
    pub vortices: Vec<Vortex>,
    /// Plaquettes skipped because a corner amplitude was below the floor.
    pub skipped: usize,
}

impl VortexReport {
    pub fn total_winding(&self) -> i32 {
        self.vortices.iter().map(|v| v.winding).sum()
    }
}

#[inline]
fn wrapped(d: f64) -> f64 {
    let mut x = d % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Integer winding of the phase along a closed loop of values.
pub fn loop_winding(values: &[Complex64]) -> i32 {
    let n = values.len();
    let mut total = 0.0;
    for k in 0..n {
        let a = values[k].arg();
        let b = values[(k + 1) % n].arg();
        total += wrapped(b - a);
    }
    (total / (2.0 * PI)).round() as i32
}

/// Windings of all `(x, y)` plaquettes of a Cartesian slice at `z_index`.
pub fn detect_vortices_cartesian(
    grid: &CartesianGrid3D,
    psi: &[Complex64],
    z_index: usize,
    amplitude_floor: f64,
) -> Result<VortexReport> {
    let [nx, ny, nz] = grid.n;
    if z_index >= nz {
        return Err(Error::domain(format!("z index {z_index} outside 0..{nz}")));
    }
    if psi.len() != grid.len() {
        return Err(Error::shape("field length does not match grid"));
    }
    let slice = &psi[z_index * nx * ny..(z_index + 1) * nx * ny];
    let peak = slice.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let floor = amplitude_floor * peak;
    let (xs, ys) = (grid.coords(0), grid.coords(1));
    let z = grid.coords(2)[z_index];
    let mut report = VortexReport::default();
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let corners = [
                slice[iy * nx + ix],
                slice[iy * nx + ix + 1],
                slice[(iy + 1) * nx + ix + 1],
                slice[(iy + 1) * nx + ix],
            ];
            if corners.iter().any(|c| c.norm() <= floor) {
                report.skipped += 1;
                continue;
            }
            let w = loop_winding(&corners);
            if w != 0 {
                report.vortices.push(Vortex {
                    x: 0.5 * (xs[ix] + xs[ix + 1]),
                    y: 0.5 * (ys[iy] + ys[iy + 1]),
                    z,
                    winding: w,
                });
            }
        }
    }
    Ok(report)
}

/// Windings on the polar mesh of a cylindrical slice, including the loop
/// around the axis through the innermost ring of nodes.
pub fn detect_vortices_cylindrical(
    space: &CylindricalSpace,
    nodes: &[Complex64],
    z_index: usize,
    amplitude_floor: f64,
) -> Result<VortexReport> {
    let grid = &space.grid;
    let (nr, np) = (grid.nr, space.n_phi);
    if z_index >= grid.nz {
        return Err(Error::domain(format!("z index {z_index} outside 0..{}", grid.nz)));
    }
    let at = |i: usize, k: usize| nodes[(z_index * nr + i) * np + k % np];
    let mut peak = 0.0f64;
    for i in 0..nr {
        for k in 0..np {
            peak = peak.max(at(i, k).norm());
        }
    }
    let floor = amplitude_floor * peak;
    let z = grid.z_nodes()[z_index];
    let r = grid.r_nodes();
    let mut report = VortexReport::default();
    let ring: Vec<Complex64> = (0..np).map(|k| at(0, k)).collect();
    if ring.iter().any(|c| c.norm() <= floor) {
        report.skipped += 1;
    } else {
        let w = loop_winding(&ring);
        if w != 0 {
            report.vortices.push(Vortex { x: 0.0, y: 0.0, z, winding: w });
        }
    }
    for i in 0..nr - 1 {
        for k in 0..np {
            let corners = [at(i, k), at(i + 1, k), at(i + 1, k + 1), at(i, k + 1)];
            if corners.iter().any(|c| c.norm() <= floor) {
                report.skipped += 1;
                continue;
            }
            let w = loop_winding(&corners);
            if w != 0 {
                let rm = 0.5 * (r[i] + r[i + 1]);
                let pm = space.phi(k) + PI / np as f64;
                report.vortices.push(Vortex {
                    x: rm * pm.cos(),
                    y: rm * pm.sin(),
                    z,
                    winding: w,
                });
            }
        }
    }
    Ok(report)
}
