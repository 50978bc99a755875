//! Full-order steady-state model.
//!
//! With steady flow and homogeneous elastic moduli the hydro-mechanical problem
//! is one-way coupled: pressure solves `div(kappa grad p) = 0` on its own and
//! then loads the elasticity problem through the Biot term `alpha p I`.

mod flow;
mod mechanics;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linsolve::SolverOptions;

pub use flow::{assemble_flow, boundary_fluxes, solve_pressure, BoundaryFluxes, FlowSystem};
pub use mechanics::{
    assemble_mechanics, solve_mechanics, solve_mechanics_nodal, MechanicsSystem, NodalDisplacement,
};

pub const PRESSURE_UNITS: &str = "Pa";
pub const DISPLACEMENT_UNITS: &str = "m";

/// Poroelastic material constants. Elastic moduli are homogeneous; only the
/// permeability varies in space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Drained bulk modulus, Pa.
    pub bulk_modulus: f64,
    /// Solid-grain bulk modulus, Pa. `f64::INFINITY` gives `alpha = 1`.
    #[serde(with = "infinite_as_null")]
    pub grain_bulk_modulus: f64,
    pub poisson_ratio: f64,
    /// Fluid compressibility, 1/Pa.
    pub fluid_compressibility: f64,
    pub porosity: f64,
    /// Fluid viscosity, Pa s.
    pub viscosity: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            bulk_modulus: 1e6,
            grain_bulk_modulus: f64::INFINITY,
            poisson_ratio: 0.25,
            fluid_compressibility: 1e-10,
            porosity: 0.2,
            viscosity: 1e-3,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::InvalidInput(format!(
                "Poisson ratio must lie in (0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.bulk_modulus > 0.0 && self.bulk_modulus.is_finite()) {
            return Err(Error::InvalidInput("bulk modulus must be positive".into()));
        }
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(Error::InvalidInput("viscosity must be positive".into()));
        }
        let alpha = self.biot_coefficient();
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "Biot coefficient must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(())
    }

    /// `alpha = 1 - K / K_s`
    pub fn biot_coefficient(&self) -> f64 {
        1.0 - self.bulk_modulus / self.grain_bulk_modulus
    }

    /// `lambda = 3 K nu / (1 + nu)`
    pub fn lame_lambda(&self) -> f64 {
        3.0 * self.bulk_modulus * self.poisson_ratio / (1.0 + self.poisson_ratio)
    }

    /// `mu = 3 K (1 - 2 nu) / (2 (1 + nu))`
    pub fn lame_mu(&self) -> f64 {
        3.0 * self.bulk_modulus * (1.0 - 2.0 * self.poisson_ratio)
            / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// Constrained (oedometric) modulus `lambda + 2 mu`.
    pub fn oedometric_modulus(&self) -> f64 {
        self.lame_lambda() + 2.0 * self.lame_mu()
    }

    /// `1/M = phi c_f + (alpha - phi) / K_s`
    pub fn biot_modulus(&self) -> f64 {
        let inv = self.porosity * self.fluid_compressibility
            + (self.biot_coefficient() - self.porosity) / self.grain_bulk_modulus;
        1.0 / inv
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum FlowBc {
    /// Prescribed pressure, Pa.
    Dirichlet(f64),
    /// Prescribed inward normal flux; zero is a no-flux wall.
    Flux(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MechanicsBc {
    /// Zero normal displacement, free tangential slip.
    Roller,
    /// Prescribed traction vector `(t_x, t_y)`, Pa.
    Traction([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sides<T> {
    pub bottom: T,
    pub top: T,
    pub left: T,
    pub right: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConditions {
    pub flow: Sides<FlowBc>,
    pub mechanics: Sides<MechanicsBc>,
}

impl Default for BoundaryConditions {
    /// 1000 Pa at the bottom, 0 Pa at the top, no-flux sides; rollers on the
    /// left, right and bottom, `(0, -1000)` Pa traction on top.
    fn default() -> Self {
        Self {
            flow: Sides {
                bottom: FlowBc::Dirichlet(1000.0),
                top: FlowBc::Dirichlet(0.0),
                left: FlowBc::Flux(0.0),
                right: FlowBc::Flux(0.0),
            },
            mechanics: Sides {
                bottom: MechanicsBc::Roller,
                top: MechanicsBc::Traction([0.0, -1000.0]),
                left: MechanicsBc::Roller,
                right: MechanicsBc::Roller,
            },
        }
    }
}

impl BoundaryConditions {
    pub fn with_traction(mut self, traction: [f64; 2]) -> Self {
        self.mechanics.top = MechanicsBc::Traction(traction);
        self
    }

    pub fn dirichlet_pressure_range(&self) -> Option<(f64, f64)> {
        let s = &self.flow;
        [s.bottom, s.top, s.left, s.right]
            .iter()
            .filter_map(|bc| match bc {
                FlowBc::Dirichlet(p) => Some(*p),
                FlowBc::Flux(_) => None,
            })
            .fold(None, |acc, p| match acc {
                None => Some((p, p)),
                Some((lo, hi)) => Some((f64::min(lo, p), f64::max(hi, p))),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SolverMeta {
    pub flow_residual: f64,
    pub mechanics_residual: f64,
    /// Wall time of the full solve, seconds.
    pub wall_time: f64,
}

/// One paired example: permeability with the pressure and displacement it induces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub log_k: ScalarField,
    pub p: ScalarField,
    pub ux: ScalarField,
    pub uy: ScalarField,
    pub meta: SolverMeta,
}

impl Snapshot {
    pub fn same_fields(&self, other: &Snapshot) -> bool {
        self.log_k == other.log_k && self.p == other.p && self.ux == other.ux && self.uy == other.uy
    }
}

/// Flow solve followed by the mechanics solve it drives.
pub fn solve_steady_hm(
    log_k: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
) -> Result<Snapshot> {
    solve_steady_hm_with(log_k, mat, bc, &SolverOptions::default())
}

pub fn solve_steady_hm_with(
    log_k: &ScalarField,
    mat: &MaterialParams,
    bc: &BoundaryConditions,
    opts: &SolverOptions,
) -> Result<Snapshot> {
    let start = Instant::now();
    let (p, flow_residual) = flow::solve_pressure_with(log_k, mat, bc, opts)?;
    let (nodal, mechanics_residual) = mechanics::solve_nodal_with(&p, mat, bc, opts)?;
    let (ux, uy) = nodal.to_cells()?;
    Ok(Snapshot {
        log_k: log_k.clone(),
        p,
        ux,
        uy,
        meta: SolverMeta {
            flow_residual,
            mechanics_residual,
            wall_time: start.elapsed().as_secs_f64(),
        },
    })
}
