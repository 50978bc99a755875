//! Plane-strain linear elasticity with bilinear quadrilaterals.
//!
//! Nodes sit at cell corners, so every grid cell is one element and carries a
//! piecewise-constant pressure. Weak form:
//! `int sigma'(u) : eps(v) = int alpha p div v + int_{Gamma_t} t . v`.

use super::{BoundaryConditions, MaterialParams, MechanicsBc, DISPLACEMENT_UNITS, PRESSURE_UNITS};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::linsolve::{solve_spd, CsrMatrix, SolverOptions};

/// Node displacements on the `(nx + 1) x (ny + 1)` corner lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalDisplacement {
    pub grid: GridSpec,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl NodalDisplacement {
    #[inline]
    pub fn node(grid: &GridSpec, i: usize, j: usize) -> usize {
        j * (grid.nx + 1) + i
    }

    /// Node coordinates.
    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.grid.dx(), j as f64 * self.grid.dy())
    }

    pub fn ux_at(&self, i: usize, j: usize) -> f64 {
        self.ux[Self::node(&self.grid, i, j)]
    }

    pub fn uy_at(&self, i: usize, j: usize) -> f64 {
        self.uy[Self::node(&self.grid, i, j)]
    }

    /// Mean of the four corner values of each cell.
    pub fn to_cells(&self) -> Result<(ScalarField, ScalarField)> {
        let g = self.grid;
        let avg = |u: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(g.cells());
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let s = u[Self::node(&g, i, j)]
                        + u[Self::node(&g, i + 1, j)]
                        + u[Self::node(&g, i, j + 1)]
                        + u[Self::node(&g, i + 1, j + 1)];
                    out.push(0.25 * s);
                }
            }
            out
        };
        Ok((
            ScalarField::new(g, avg(&self.ux), DISPLACEMENT_UNITS)?,
            ScalarField::new(g, avg(&self.uy), DISPLACEMENT_UNITS)?,
        ))
    }
}

/// Reduced stiffness system after eliminating roller constraints.
#[derive(Debug, Clone)]
pub struct MechanicsSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global dof (`2 * node + component`) of each reduced unknown.
    pub free_dofs: Vec<usize>,
    pub total_dofs: usize,
}

/// Local node order: (0,0), (1,0), (1,1), (0,1) in reference coordinates.
const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Shape-function gradients at reference point `(xi, eta)` for an `hx x hy` cell.
fn gradients(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    let mut g = [[0.0; 2]; 4];
    for a in 0..4 {
        g[a][0] = 0.25 * XI[a] * (1.0 + ETA[a] * eta) * 2.0 / hx;
        g[a][1] = 0.25 * ETA[a] * (1.0 + XI[a] * xi) * 2.0 / hy;
    }
    g
}

fn gauss_points() -> [(f64, f64); 4] {
    let q = 1.0 / 3f64.sqrt();
    [(-q, -q), (q, -q), (q, q), (-q, q)]
}

/// 8x8 element stiffness, dof order (ux0, uy0, ux1, uy1, ...).
fn element_stiffness(hx: f64, hy: f64, lambda: f64, mu: f64) -> [[f64; 8]; 8] {
    let det = 0.25 * hx * hy;
    let mut k = [[0.0; 8]; 8];
    for (xi, eta) in gauss_points() {
        let g = gradients(xi, eta, hx, hy);
        for a in 0..4 {
            let (ax, ay) = (g[a][0], g[a][1]);
            for b in 0..4 {
                let (bx, by) = (g[b][0], g[b][1]);
                // B_a^T D B_b for plane strain
                k[2 * a][2 * b] += det * ((lambda + 2.0 * mu) * ax * bx + mu * ay * by);
                k[2 * a][2 * b + 1] += det * (lambda * ax * by + mu * ay * bx);
                k[2 * a + 1][2 * b] += det * (lambda * ay * bx + mu * ax * by);
                k[2 * a + 1][2 * b + 1] += det * ((lambda + 2.0 * mu) * ay * by + mu * ax * bx);
            }
        }
    }
    k
}

/// `int div N_a dOmega` split into x and y components, per local node.
fn divergence_weights(hx: f64, hy: f64) -> [[f64; 2]; 4] {
    let det = 0.25 * hx * hy;
    let mut w = [[0.0; 2]; 4];
    for (xi, eta) in gauss_points() {
        let g = gradients(xi, eta, hx, hy);
        for a in 0..4 {
            w[a][0] += det * g[a][0];
            w[a][1] += det * g[a][1];
        }
    }
    w
}

fn check_rigid_modes(bc: &BoundaryConditions) -> Result<()> {
    let m = &bc.mechanics;
    let roller = |b: MechanicsBc| matches!(b, MechanicsBc::Roller);
    if !(roller(m.left) || roller(m.right)) {
        return Err(Error::Config(
            "no roller on the left or right side: horizontal rigid motion is unconstrained".into(),
        ));
    }
    if !(roller(m.bottom) || roller(m.top)) {
        return Err(Error::Config(
            "no roller on the top or bottom side: vertical rigid motion is unconstrained".into(),
        ));
    }
    Ok(())
}

pub fn assemble_mechanics(
    p: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<MechanicsSystem> {
    mat.validate()?;
    check_rigid_modes(bc)?;
    if p.units != PRESSURE_UNITS {
        return Err(Error::InvalidInput(format!(
            "mechanics expects pressure in {PRESSURE_UNITS}, got {}",
            p.units
        )));
    }
    let g = p.grid;
    let (nxn, nyn) = (g.nx + 1, g.ny + 1);
    let total_dofs = 2 * nxn * nyn;
    let node = |i: usize, j: usize| NodalDisplacement::node(&g, i, j);

    let mut fixed = vec![false; total_dofs];
    let m = &bc.mechanics;
    if let MechanicsBc::Roller = m.left {
        (0..nyn).for_each(|j| fixed[2 * node(0, j)] = true);
    }
    if let MechanicsBc::Roller = m.right {
        (0..nyn).for_each(|j| fixed[2 * node(g.nx, j)] = true);
    }
    if let MechanicsBc::Roller = m.bottom {
        (0..nxn).for_each(|i| fixed[2 * node(i, 0) + 1] = true);
    }
    if let MechanicsBc::Roller = m.top {
        (0..nxn).for_each(|i| fixed[2 * node(i, g.ny) + 1] = true);
    }
    let mut reduced = vec![usize::MAX; total_dofs];
    let mut free_dofs = Vec::with_capacity(total_dofs);
    for (d, &is_fixed) in fixed.iter().enumerate() {
        if !is_fixed {
            reduced[d] = free_dofs.len();
            free_dofs.push(d);
        }
    }

    let (hx, hy) = (g.dx(), g.dy());
    let ke = element_stiffness(hx, hy, mat.lame_lambda(), mat.lame_mu());
    let dw = divergence_weights(hx, hy);
    let alpha = mat.biot_coefficient();
    let mut global_rhs = vec![0.0; total_dofs];
    let mut triplets = Vec::with_capacity(64 * g.cells());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let nodes = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)];
            let dofs: [usize; 8] =
                std::array::from_fn(|k| 2 * nodes[k / 2] + (k % 2));
            for (a, &ra) in dofs.iter().enumerate() {
                let r = reduced[ra];
                if r == usize::MAX {
                    continue;
                }
                for (b, &cb) in dofs.iter().enumerate() {
                    let c = reduced[cb];
                    if c != usize::MAX {
                        triplets.push((r, c, ke[a][b]));
                    }
                }
            }
            let pe = alpha * p.at(i, j);
            for (a, &n) in nodes.iter().enumerate() {
                global_rhs[2 * n] += pe * dw[a][0];
                global_rhs[2 * n + 1] += pe * dw[a][1];
            }
        }
    }

    let mut add_edge_traction = |edge_nodes: Vec<(usize, usize)>, t: [f64; 2], len: f64| {
        for (n0, n1) in edge_nodes {
            for n in [n0, n1] {
                global_rhs[2 * n] += 0.5 * len * t[0];
                global_rhs[2 * n + 1] += 0.5 * len * t[1];
            }
        }
    };
    if let MechanicsBc::Traction(t) = m.top {
        add_edge_traction((0..g.nx).map(|i| (node(i, g.ny), node(i + 1, g.ny))).collect(), t, hx);
    }
    if let MechanicsBc::Traction(t) = m.bottom {
        add_edge_traction((0..g.nx).map(|i| (node(i, 0), node(i + 1, 0))).collect(), t, hx);
    }
    if let MechanicsBc::Traction(t) = m.left {
        add_edge_traction((0..g.ny).map(|j| (node(0, j), node(0, j + 1))).collect(), t, hy);
    }
    if let MechanicsBc::Traction(t) = m.right {
        add_edge_traction((0..g.ny).map(|j| (node(g.nx, j), node(g.nx, j + 1))).collect(), t, hy);
    }

    let rhs = free_dofs.iter().map(|&d| global_rhs[d]).collect();
    Ok(MechanicsSystem {
        matrix: CsrMatrix::from_triplets(free_dofs.len(), triplets),
        rhs,
        free_dofs,
        total_dofs,
    })
}

pub(crate) fn solve_nodal_with(
    p: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
    opts: &SolverOptions,
) -> Result<(NodalDisplacement, f64)> {
    let system = assemble_mechanics(p, mat, bc)?;
    let sol = solve_spd(&system.matrix, &system.rhs, opts)?;
    let mut u = vec![0.0; system.total_dofs];
    for (k, &d) in system.free_dofs.iter().enumerate() {
        u[d] = sol.x[k];
    }
    let ux = u.iter().step_by(2).copied().collect();
    let uy = u.iter().skip(1).step_by(2).copied().collect();
    Ok((
        NodalDisplacement {
            grid: p.grid,
            ux,
            uy,
        },
        sol.relative_residual,
    ))
}

pub fn solve_mechanics_nodal(
    p: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<NodalDisplacement> {
    Ok(solve_nodal_with(p, mat, bc, &SolverOptions::default())?.0)
}

/// Cell-centered `(ux, uy)` for the given pressure.
pub fn solve_mechanics(
    p: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<(ScalarField, ScalarField)> {
    solve_mechanics_nodal(p, mat, bc)?.to_cells()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_stiffness_is_symmetric_with_rigid_null_space() {
        let k = element_stiffness(0.5, 0.25, 6e5, 6e5);
        for a in 0..8 {
            for b in 0..8 {
                assert!((k[a][b] - k[b][a]).abs() < 1e-6);
            }
        }
        // translations and the infinitesimal rotation produce no force
        let coords = [(0.0, 0.0), (0.5, 0.0), (0.5, 0.25), (0.0, 0.25)];
        let modes: [[f64; 8]; 3] = [
            std::array::from_fn(|d| if d % 2 == 0 { 1.0 } else { 0.0 }),
            std::array::from_fn(|d| if d % 2 == 1 { 1.0 } else { 0.0 }),
            std::array::from_fn(|d| {
                let (x, y) = coords[d / 2];
                if d % 2 == 0 { -y } else { x }
            }),
        ];
        for m in modes {
            for row in k.iter() {
                let f: f64 = row.iter().zip(m.iter()).map(|(a, b)| a * b).sum();
                assert!(f.abs() < 1e-6, "{f}");
            }
        }
    }

    #[test]
    fn missing_rollers_is_a_configuration_error() {
        let p = ScalarField::constant(GridSpec::unit_square(4).unwrap(), 0.0, "Pa").unwrap();
        let mut bc = BoundaryConditions::default();
        bc.mechanics.left = MechanicsBc::Traction([0.0, 0.0]);
        bc.mechanics.right = MechanicsBc::Traction([0.0, 0.0]);
        let err = solve_mechanics(&p, &MaterialParams::default(), &bc).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let p = ScalarField::constant(GridSpec::unit_square(8).unwrap(), 0.0, "Pa").unwrap();
        let bc = BoundaryConditions::default().with_traction([0.0, 0.0]);
        let (ux, uy) = solve_mechanics(&p, &MaterialParams::default(), &bc).unwrap();
        assert!(ux.values.iter().chain(&uy.values).all(|&v| v == 0.0));
    }
}
