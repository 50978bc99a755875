//! Cell-centered two-point flux approximation of `div(kappa grad p) = 0`.

use serde::{Deserialize, Serialize};

use super::{BoundaryConditions, FlowBc, MaterialParams, PRESSURE_UNITS};
use crate::error::{Error, Result};
use crate::fields::LOG_PERMEABILITY_UNITS;
use crate::grid::{GridSpec, ScalarField};
use crate::linsolve::{solve_spd, CsrMatrix, SolverOptions};

/// Assembled TPFA system `A p = b`.
#[derive(Debug, Clone)]
pub struct FlowSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Net inflow through each side, m^2/s per unit depth. Positive means into the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFluxes {
    pub bottom: f64,
    pub top: f64,
    pub left: f64,
    pub right: f64,
}

impl BoundaryFluxes {
    pub fn net(&self) -> f64 {
        self.bottom + self.top + self.left + self.right
    }

    /// Sum of absolute side fluxes.
    pub fn magnitude(&self) -> f64 {
        self.bottom.abs() + self.top.abs() + self.left.abs() + self.right.abs()
    }
}

fn mobility(log_k: &ScalarField, mat: &MaterialParams) -> Result<Vec<f64>> {
    if log_k.units != LOG_PERMEABILITY_UNITS {
        return Err(Error::InvalidInput(format!(
            "pressure solve expects log-permeability in {LOG_PERMEABILITY_UNITS}, got {}",
            log_k.units
        )));
    }
    let kappa: Vec<f64> = log_k
        .values
        .iter()
        .map(|&v| 10f64.powf(v) / mat.viscosity)
        .collect();
    if let Some(bad) = kappa.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "mobility must be finite and positive, got {bad}"
        )));
    }
    Ok(kappa)
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Boundary face of a cell: half-cell transmissibility.
struct BoundaryFace {
    cell: usize,
    transmissibility: f64,
    length: f64,
}

fn side_faces(grid: &GridSpec, kappa: &[f64]) -> [(FaceSide, Vec<BoundaryFace>); 4] {
    let (dx, dy) = (grid.dx(), grid.dy());
    let horizontal = |j: usize| -> Vec<BoundaryFace> {
        (0..grid.nx)
            .map(|i| {
                let cell = grid.index(i, j);
                BoundaryFace {
                    cell,
                    transmissibility: dx * kappa[cell] / (0.5 * dy),
                    length: dx,
                }
            })
            .collect()
    };
    let vertical = |i: usize| -> Vec<BoundaryFace> {
        (0..grid.ny)
            .map(|j| {
                let cell = grid.index(i, j);
                BoundaryFace {
                    cell,
                    transmissibility: dy * kappa[cell] / (0.5 * dx),
                    length: dy,
                }
            })
            .collect()
    };
    [
        (FaceSide::Bottom, horizontal(0)),
        (FaceSide::Top, horizontal(grid.ny - 1)),
        (FaceSide::Left, vertical(0)),
        (FaceSide::Right, vertical(grid.nx - 1)),
    ]
}

#[derive(Debug, Clone, Copy)]
enum FaceSide {
    Bottom,
    Top,
    Left,
    Right,
}

impl FaceSide {
    fn bc(self, bc: &BoundaryConditions) -> FlowBc {
        match self {
            FaceSide::Bottom => bc.flow.bottom,
            FaceSide::Top => bc.flow.top,
            FaceSide::Left => bc.flow.left,
            FaceSide::Right => bc.flow.right,
        }
    }
}

pub fn assemble_flow(
    log_k: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<FlowSystem> {
    mat.validate()?;
    if bc.dirichlet_pressure_range().is_none() {
        return Err(Error::Config(
            "pressure problem with no Dirichlet boundary is singular".into(),
        ));
    }
    let grid = log_k.grid;
    let kappa = mobility(log_k, mat)?;
    let (dx, dy) = (grid.dx(), grid.dy());
    let n = grid.cells();
    let mut triplets = Vec::with_capacity(5 * n);
    let mut rhs = vec![0.0; n];
    let connect = |a: usize, b: usize, t: f64, triplets: &mut Vec<(usize, usize, f64)>| {
        triplets.push((a, a, t));
        triplets.push((b, b, t));
        triplets.push((a, b, -t));
        triplets.push((b, a, -t));
    };
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = grid.index(i, j);
            if i + 1 < grid.nx {
                let e = grid.index(i + 1, j);
                connect(c, e, dy * harmonic(kappa[c], kappa[e]) / dx, &mut triplets);
            }
            if j + 1 < grid.ny {
                let nb = grid.index(i, j + 1);
                connect(c, nb, dx * harmonic(kappa[c], kappa[nb]) / dy, &mut triplets);
            }
        }
    }
    for (side, faces) in side_faces(&grid, &kappa) {
        match side.bc(bc) {
            FlowBc::Dirichlet(p_d) => {
                for f in faces {
                    triplets.push((f.cell, f.cell, f.transmissibility));
                    rhs[f.cell] += f.transmissibility * p_d;
                }
            }
            FlowBc::Flux(q) => {
                for f in faces {
                    rhs[f.cell] += q * f.length;
                }
            }
        }
    }
    Ok(FlowSystem {
        matrix: CsrMatrix::from_triplets(n, triplets),
        rhs,
    })
}

/// Cell-centered steady pressure for the given log-permeability.
pub fn solve_pressure(
    log_k: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<ScalarField> {
    Ok(solve_pressure_with(log_k, mat, bc, &SolverOptions::default())?.0)
}

pub(crate) fn solve_pressure_with(
    log_k: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
    opts: &SolverOptions,
) -> Result<(ScalarField, f64)> {
    let system = assemble_flow(log_k, mat, bc)?;
    let sol = solve_spd(&system.matrix, &system.rhs, opts)?;
    let p = ScalarField::new(log_k.grid, sol.x, PRESSURE_UNITS)?;
    Ok((p, sol.relative_residual))
}

/// Inflow through each side implied by a pressure solution.
pub fn boundary_fluxes(
    log_k: &ScalarField,
    p: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<BoundaryFluxes> {
    if !log_k.same_shape(p) {
        return Err(Error::ShapeMismatch("pressure and permeability grids differ".into()));
    }
    let kappa = mobility(log_k, mat)?;
    let mut out = BoundaryFluxes {
        bottom: 0.0,
        top: 0.0,
        left: 0.0,
        right: 0.0,
    };
    for (side, faces) in side_faces(&log_k.grid, &kappa) {
        let total: f64 = match side.bc(bc) {
            FlowBc::Dirichlet(p_d) => faces
                .iter()
                .map(|f| f.transmissibility * (p_d - p.values[f.cell]))
                .sum(),
            FlowBc::Flux(q) => faces.iter().map(|f| q * f.length).sum(),
        };
        match side {
            FaceSide::Bottom => out.bottom = total,
            FaceSide::Top => out.top = total,
            FaceSide::Left => out.left = total,
            FaceSide::Right => out.right = total,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::Sides;

    fn homogeneous(n: usize) -> ScalarField {
        ScalarField::constant(GridSpec::unit_square(n).unwrap(), -12.0, LOG_PERMEABILITY_UNITS)
            .unwrap()
    }

    #[test]
    fn homogeneous_pressure_is_linear() {
        let log_k = homogeneous(16);
        let p = solve_pressure(&log_k, &MaterialParams::default(), &BoundaryConditions::default())
            .unwrap();
        for j in 0..16 {
            for i in 0..16 {
                let (_, y) = log_k.grid.cell_center(i, j);
                assert!((p.at(i, j) - 1000.0 * (1.0 - y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn all_neumann_is_a_configuration_error() {
        let mut bc = BoundaryConditions::default();
        bc.flow = Sides {
            bottom: FlowBc::Flux(1.0),
            top: FlowBc::Flux(-1.0),
            left: FlowBc::Flux(0.0),
            right: FlowBc::Flux(0.0),
        };
        let err = solve_pressure(&homogeneous(4), &MaterialParams::default(), &bc).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn wrong_units_rejected() {
        let f = ScalarField::constant(GridSpec::unit_square(4).unwrap(), 1e-12, "m^2").unwrap();
        assert!(
            solve_pressure(&f, &MaterialParams::default(), &BoundaryConditions::default()).is_err()
        );
    }

    #[test]
    fn system_is_symmetric() {
        let log_k = ScalarField::from_fn(
            GridSpec::unit_square(6).unwrap(),
            LOG_PERMEABILITY_UNITS,
            |x, y| -12.0 + x - 2.0 * y,
        )
        .unwrap();
        let s = assemble_flow(&log_k, &MaterialParams::default(), &BoundaryConditions::default())
            .unwrap();
        assert!(s.matrix.asymmetry() < 1e-14);
    }
}
