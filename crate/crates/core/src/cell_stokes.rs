//! Periodic cell Stokes problems on the voxelized fluid part of `Y`.
//!
//! For `i = 1, 2` find `(w, π)` with
//!
//! ```text
//!   -ν Δ w + ∇π = e_i   in Y_f,    div w = 0   in Y_f,
//!   w = 0 in T,   w and π Y-periodic,   π of zero mean.
//! ```
//!
//! Without an obstacle the problem has no solution: testing with the
//! constant `e_i` gives `0 = |Y|`.

use crate::error::{Error, Result};
use crate::geometry::{CellMask, VoxelMask};
use crate::mac::StaggeredGrid;
use crate::stokes::solve_stokes;

pub use crate::mac::{BoundaryMode, FaceLayout, MacField};
pub use crate::stokes::SolverConfig;

/// Horizontal unit forcing of a cell problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Forcing {
    E1,
    E2,
}

impl Forcing {
    /// Zero-based axis of the forcing direction.
    pub fn axis(self) -> usize {
        match self {
            Forcing::E1 => 0,
            Forcing::E2 => 1,
        }
    }

    /// One-based index `i` of `e_i`.
    pub fn index(self) -> usize {
        self.axis() + 1
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub mask: CellMask,
    pub forcing: Forcing,
    /// `w` on faces and `π` at voxel centers.
    pub field: MacField,
    pub nu: f64,
    pub momentum_residual: f64,
    pub div_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub history: Vec<f64>,
}

impl CellSolution {
    pub fn velocity(&self) -> &[f64] {
        &self.field.velocity
    }

    pub fn pressure(&self) -> &[f64] {
        &self.field.pressure
    }
}

/// Unit force `e_i` on every free face of component `i`.
pub fn forcing_vector(grid: &StaggeredGrid, forcing: Forcing) -> Vec<f64> {
    let layout = grid.layout();
    let mut f = vec![0.0; layout.velocity_len()];
    let off = layout.offset(forcing.axis());
    for (idx, v) in f.iter_mut().enumerate().skip(off).take(layout.component_len(forcing.axis())) {
        if grid.free()[idx] {
            *v = 1.0;
        }
    }
    f
}

pub fn solve_cell_problem(mask: &CellMask, forcing: Forcing, cfg: &SolverConfig) -> Result<CellSolution> {
    if mask.solid_count() == 0 {
        return Err(Error::EmptyObstacle);
    }
    let grid = StaggeredGrid::periodic(mask);
    let f = forcing_vector(&grid, forcing);
    let solve = solve_stokes(&grid, &f, cfg)?;
    log::info!(
        "cell problem e{}: n = {}, {} outer / {} inner iterations, momentum {:e}, divergence {:e}",
        forcing.index(),
        mask.n(),
        solve.outer_iterations,
        solve.inner_iterations,
        solve.momentum_residual,
        solve.div_residual
    );
    Ok(CellSolution {
        mask: mask.clone(),
        forcing,
        field: solve.field,
        nu: cfg.nu,
        momentum_residual: solve.momentum_residual,
        div_residual: solve.div_residual,
        outer_iterations: solve.outer_iterations,
        inner_iterations: solve.inner_iterations,
        history: solve.history,
    })
}

/// Solves both horizontal cell problems; they share the read-only mask and
/// run concurrently.
pub fn solve_both(mask: &CellMask, cfg: &SolverConfig) -> Result<(CellSolution, CellSolution)> {
    let (a, b) = rayon::join(
        || solve_cell_problem(mask, Forcing::E1, cfg),
        || solve_cell_problem(mask, Forcing::E2, cfg),
    );
    Ok((a?, b?))
}

/// Midpoint-rule approximation of `∫_{Y_f} w_j dy` for `j = 1, 2, 3`, with
/// `w` extended by zero into the obstacle.
pub fn solution_mean_velocity(sol: &CellSolution) -> [f64; 3] {
    let h3 = sol.field.h.powi(3);
    let mut out = [0.0; 3];
    for (d, o) in out.iter_mut().enumerate() {
        *o = h3 * sol.field.component(d).iter().sum::<f64>();
    }
    out
}

/// `ν ∫ Dw : Dw` with the discrete Dirichlet form of the staggered stencil.
pub fn dissipation(sol: &CellSolution) -> f64 {
    let grid = StaggeredGrid::periodic(&sol.mask);
    sol.nu * grid.dirichlet_form(sol.velocity(), sol.velocity())
}
