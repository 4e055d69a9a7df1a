//! Schur-complement conjugate-gradient solver for the discrete Stokes system
//!
//! ```text
//!   nu (-Δ_h) w + ∇_h π = f     on free faces
//!            div_h w   = 0     on fluid cells
//! ```
//!
//! Eliminating `w = A⁻¹ (f - ∇_h π)` gives `S π = -div_h A⁻¹ f` with
//! `S = div_h A⁻¹ div_hᵀ`, which is symmetric positive definite on
//! zero-mean pressures. The outer iteration runs CG on `S`; every product
//! with `S` costs one inner CG solve with the velocity block `A`.
//! Convergence is declared on the residuals of the original system only.

use log::debug;

use crate::error::{Error, Result};
use crate::krylov::conjugate_gradient;
use crate::mac::{dot, max_abs, norm2, MacField, StaggeredGrid};

/// Tolerances and iteration caps of the Stokes solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative momentum residual target.
    pub tol_mom: f64,
    /// Absolute max-norm divergence target.
    pub tol_div: f64,
    /// Cap on outer (pressure) iterations.
    pub max_outer: usize,
    /// Cap on inner (velocity) iterations per solve.
    pub max_inner: usize,
    /// Viscosity.
    pub nu: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_mom: 1e-8,
            tol_div: 1e-8,
            max_outer: 500,
            max_inner: 2000,
            nu: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Error::Validation {
            key: format!("solver.{key}"),
            message,
        };
        if !(self.tol_mom.is_finite() && self.tol_mom > 0.0) {
            return Err(bad("tol_mom", format!("must be positive, got {}", self.tol_mom)));
        }
        if !(self.tol_div.is_finite() && self.tol_div > 0.0) {
            return Err(bad("tol_div", format!("must be positive, got {}", self.tol_div)));
        }
        if self.max_outer == 0 {
            return Err(bad("max_outer", "must be at least 1".into()));
        }
        if self.max_inner == 0 {
            return Err(bad("max_inner", "must be at least 1".into()));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(bad("nu", format!("must be positive, got {}", self.nu)));
        }
        Ok(())
    }

    fn inner_tolerance(&self) -> f64 {
        (1e-2 * self.tol_mom).clamp(1e-14, 1e-6)
    }
}

/// Result of a saddle-point solve.
#[derive(Debug, Clone)]
pub struct StokesSolve {
    pub field: MacField,
    /// `|f - A w - ∇π| / |f|` over free faces.
    pub momentum_residual: f64,
    /// `max |div w|` over fluid cells.
    pub div_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Divergence residual after every outer iteration.
    pub history: Vec<f64>,
}

struct Inner<'a> {
    grid: &'a StaggeredGrid,
    nu: f64,
    max_inner: usize,
    iterations: usize,
}

impl Inner<'_> {
    /// Solves `A x = b` starting from `x`.
    fn solve(&mut self, b: &[f64], x: &mut [f64], rel_tol: f64) -> Result<()> {
        let grid = self.grid;
        let nu = self.nu;
        let out = conjugate_gradient(
            |v: &[f64], y: &mut [f64]| grid.apply_velocity_block(nu, v, y),
            b,
            x,
            rel_tol,
            0.0,
            self.max_inner,
            |_| {},
        );
        self.iterations += out.iterations;
        if !out.converged && out.residual > 1e3 * rel_tol * norm2(b) {
            return Err(Error::NotConverged {
                stage: "velocity solve",
                iterations: out.iterations,
                residual: out.residual / norm2(b).max(f64::MIN_POSITIVE),
                history: vec![],
            });
        }
        Ok(())
    }
}

/// Momentum residual `f + div_hᵀ π - A w` (note `∇_h = -div_hᵀ`).
fn momentum_residual(grid: &StaggeredGrid, nu: f64, force: &[f64], w: &[f64], p: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut aw = vec![0.0; n];
    let mut gp = vec![0.0; n];
    grid.apply_velocity_block(nu, w, &mut aw);
    grid.apply_gradient(p, &mut gp);
    let mut r = vec![0.0; n];
    for i in 0..n {
        r[i] = force[i] - aw[i] - gp[i];
    }
    grid.restrict_to_free(&mut r);
    r
}

/// Solves the discrete Stokes problem with face forcing `force`.
pub fn solve_stokes(grid: &StaggeredGrid, force: &[f64], cfg: &SolverConfig) -> Result<StokesSolve> {
    cfg.validate()?;
    let layout = grid.layout();
    let nvel = layout.velocity_len();
    let ncell = layout.cell_count();
    let mut f = force.to_vec();
    grid.restrict_to_free(&mut f);
    let f_norm = norm2(&f);

    let mut field = grid.zero_field();
    if grid.free_face_count() == 0 || f_norm == 0.0 {
        return Ok(StokesSolve {
            field,
            momentum_residual: 0.0,
            div_residual: 0.0,
            outer_iterations: 0,
            inner_iterations: 0,
            history: vec![],
        });
    }

    let tau = cfg.inner_tolerance();
    let mut inner = Inner {
        grid,
        nu: cfg.nu,
        max_inner: cfg.max_inner,
        iterations: 0,
    };
    let mut p = vec![0.0; ncell];
    let mut w = vec![0.0; nvel];
    let mut history = Vec::new();
    let mut outer = 0usize;

    let mut rhs = vec![0.0; nvel];
    let mut z = vec![0.0; nvel];
    let mut sd = vec![0.0; ncell];
    let mut gd = vec![0.0; nvel];
    let mut r = vec![0.0; ncell];

    loop {
        // Restart: w = A⁻¹ (f - ∇π) and r = -div w with the true residual.
        let mut gp = vec![0.0; nvel];
        grid.apply_gradient(&p, &mut gp);
        for i in 0..nvel {
            rhs[i] = f[i] - gp[i];
        }
        inner.solve(&rhs, &mut w, tau)?;
        grid.apply_divergence(&w, &mut r);
        r.iter_mut().for_each(|v| *v = -*v);
        grid.project_zero_mean(&mut r);

        let mom = norm2(&momentum_residual(grid, cfg.nu, &f, &w, &p)) / f_norm;
        let div = max_abs(&r);
        debug!("stokes restart: outer {outer}, momentum {mom:e}, divergence {div:e}");
        if div <= cfg.tol_div && mom <= cfg.tol_mom {
            grid.project_zero_mean(&mut p);
            field.velocity = w;
            field.pressure = p;
            return Ok(StokesSolve {
                field,
                momentum_residual: mom,
                div_residual: div,
                outer_iterations: outer,
                inner_iterations: inner.iterations,
                history,
            });
        }
        if outer >= cfg.max_outer {
            return Err(Error::NotConverged {
                stage: "stokes",
                iterations: outer,
                residual: div.max(mom),
                history,
            });
        }

        let mut d = r.clone();
        let mut rr = dot(&r, &r);
        let mut progressed = false;
        while outer < cfg.max_outer {
            outer += 1;
            // S d = div A⁻¹ div_hᵀ d = -div A⁻¹ ∇d
            grid.apply_gradient(&d, &mut gd);
            gd.iter_mut().for_each(|v| *v = -*v);
            z.iter_mut().for_each(|v| *v = 0.0);
            inner.solve(&gd, &mut z, tau)?;
            grid.apply_divergence(&z, &mut sd);
            grid.project_zero_mean(&mut sd);
            let dsd = dot(&d, &sd);
            if dsd <= 0.0 {
                break;
            }
            let alpha = rr / dsd;
            for i in 0..ncell {
                p[i] += alpha * d[i];
                r[i] -= alpha * sd[i];
            }
            for i in 0..nvel {
                w[i] += alpha * z[i];
            }
            grid.project_zero_mean(&mut r);
            let div = max_abs(&r);
            history.push(div);
            progressed = true;
            if div <= 0.5 * cfg.tol_div {
                break;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..ncell {
                d[i] = r[i] + beta * d[i];
            }
        }
        if !progressed && outer < cfg.max_outer {
            return Err(Error::NotConverged {
                stage: "stokes",
                iterations: outer,
                residual: max_abs(&r),
                history,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{voxelize_cell, ObstacleShape};

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let cfg = SolverConfig {
            nu: 0.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Validation { .. })));
        let cfg = SolverConfig {
            max_inner: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let mask = voxelize_cell(&ObstacleShape::sphere(0.25), 8).unwrap();
        let grid = StaggeredGrid::periodic(&mask);
        let l = grid.layout();
        let mut f = vec![0.0; l.velocity_len()];
        for v in &mut f[..l.component_len(0)] {
            *v = 1.0;
        }
        let cfg = SolverConfig {
            max_outer: 1,
            ..Default::default()
        };
        match solve_stokes(&grid, &f, &cfg) {
            Err(Error::NotConverged { stage, .. }) => assert_eq!(stage, "stokes"),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
