//! Direct Stokes simulation of the thin perforated domain
//!
//! ```text
//!   -ν Δu + ∇p = (f'(x'), 0)   in Ω_ε,     div u = 0   in Ω_ε,
//!   u = 0 on ∂T_ε ∪ ∂Q_ε,
//! ```
//!
//! solved unscaled on the voxel box `Q_ε` with the same staggered operators
//! as the cell problems. Norms of the dilated field (`z_3 = x_3 / ε`) are
//! computed afterwards. The dilatation only rescales them by `ε^{-1/2}`,
//! because `D_ε ũ(x', z_3) = Du(x', ε z_3)`.

use crate::darcy2d::{BodyForce2D, DarcySolution};
use crate::error::{Error, Result};
use crate::geometry::{PerforatedMask3D, ThinDomainSpec};
use crate::mac::{norm2, MacField, StaggeredGrid};
use crate::stokes::{solve_stokes, SolverConfig};

/// Default cap on velocity plus pressure unknowns.
pub const DEFAULT_GRID_CAP: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct DnsSolution {
    pub mask: PerforatedMask3D,
    /// `u_ε` on faces (zero on every constrained face, so this already is the
    /// extension by zero) and `p_ε` at voxel centers.
    pub field: MacField,
    pub nu: f64,
    pub momentum_residual: f64,
    pub div_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub history: Vec<f64>,
}

impl DnsSolution {
    pub fn a_eps(&self) -> f64 {
        self.mask.spec.a_eps
    }

    pub fn epsilon(&self) -> f64 {
        self.mask.spec.epsilon
    }
}

/// Face forcing `(f'(x'), 0)` evaluated at face centers.
pub fn face_force(grid: &StaggeredGrid, f: &BodyForce2D) -> Vec<f64> {
    let layout = grid.layout();
    let h = grid.h();
    let mut out = vec![0.0; layout.velocity_len()];
    for d in 0..2 {
        let fd = layout.face_dims(d);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let idx = layout.face_index(d, [i, j, k]);
                    if !grid.free()[idx] {
                        continue;
                    }
                    let mut x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                    x[d] = [i, j][d] as f64 * h;
                    out[idx] = f.value_at(x)[d];
                }
            }
        }
    }
    out
}

/// Solves the thin-domain Stokes system. `grid_cap = None` disables the
/// unknown-count guard.
pub fn solve_dns(mask: &PerforatedMask3D, f: &BodyForce2D, cfg: &SolverConfig, grid_cap: Option<usize>) -> Result<DnsSolution> {
    cfg.validate()?;
    let spec = mask.spec;
    if (f.lx - spec.lx).abs() > 1e-12 * spec.lx || (f.ly - spec.ly).abs() > 1e-12 * spec.ly {
        return Err(Error::GridMismatch(format!(
            "force given on {} x {}, domain is {} x {}",
            f.lx, f.ly, spec.lx, spec.ly
        )));
    }
    let grid = StaggeredGrid::walled(mask);
    let unknowns = grid.layout().velocity_len() + grid.layout().cell_count();
    if let Some(cap) = grid_cap {
        if unknowns > cap {
            return Err(Error::GridTooLarge { unknowns, cap });
        }
    }
    let force = face_force(&grid, f);
    let solve = solve_stokes(&grid, &force, cfg)?;
    log::info!(
        "dns a_eps = {}, eps = {}: {:?} voxels, {} outer / {} inner iterations, momentum {:e}, divergence {:e}",
        spec.a_eps,
        spec.epsilon,
        mask.dims(),
        solve.outer_iterations,
        solve.inner_iterations,
        solve.momentum_residual,
        solve.div_residual
    );
    Ok(DnsSolution {
        mask: mask.clone(),
        field: solve.field,
        nu: cfg.nu,
        momentum_residual: solve.momentum_residual,
        div_residual: solve.div_residual,
        outer_iterations: solve.outer_iterations,
        inner_iterations: solve.inner_iterations,
        history: solve.history,
    })
}

/// Column averages of the zero-extended velocity over `a_ε × a_ε × ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedVelocity {
    /// Columns per horizontal axis.
    pub gx: usize,
    pub gy: usize,
    /// `Ū` per column, `I + gx * J` order, all three components.
    pub mean: Vec<[f64; 3]>,
    /// `a_ε⁻² Ū`.
    pub scaled: Vec<[f64; 3]>,
    /// `(Σ |Ū'|² a_ε²)^{1/2}`, the L² norm of the horizontal average on ω.
    pub norm: f64,
}

pub fn average_velocity(sol: &DnsSolution) -> AveragedVelocity {
    let mask = &sol.mask;
    let layout = sol.field.layout;
    let nc = mask.n_c();
    let [gx, gy, _] = mask.spec.cells;
    let nz = mask.dims()[2];
    let mut sums = vec![[0.0; 3]; gx * gy];
    // Lower faces of the voxels in a column; the outermost upper wall face
    // carries no velocity.
    for d in 0..3 {
        let comp = sol.field.component(d);
        let base = layout.offset(d);
        for k in 0..nz {
            for j in 0..mask.dims()[1] {
                for i in 0..mask.dims()[0] {
                    let idx = layout.face_index(d, [i, j, k]) - base;
                    sums[i / nc + gx * (j / nc)][d] += comp[idx];
                }
            }
        }
    }
    let count = (nc * nc * nz) as f64;
    let a = mask.spec.a_eps;
    let mean: Vec<[f64; 3]> = sums.iter().map(|s| [s[0] / count, s[1] / count, s[2] / count]).collect();
    let scaled = mean.iter().map(|m| [m[0] / (a * a), m[1] / (a * a), m[2] / (a * a)]).collect();
    let norm = (mean.iter().map(|m| m[0] * m[0] + m[1] * m[1]).sum::<f64>() * a * a).sqrt();
    AveragedVelocity {
        gx,
        gy,
        mean,
        scaled,
        norm,
    }
}

/// `‖ũ_ε‖_{L²(Ω̃_ε)}` and `‖D_ε ũ_ε‖_{L²(Ω̃_ε)}`.
pub fn dilated_norms(sol: &DnsSolution) -> (f64, f64) {
    let h = sol.field.h;
    let eps = sol.epsilon();
    let u = norm2(&sol.field.velocity) * (h * h * h / eps).sqrt();
    let grid = StaggeredGrid::walled(&sol.mask);
    let du = (grid.dirichlet_form(&sol.field.velocity, &sol.field.velocity) / eps).sqrt();
    (u, du)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub a_eps: f64,
    pub epsilon: f64,
    /// `‖ũ_ε‖ / a_ε²`.
    pub ratio_u: f64,
    /// `‖D_ε ũ_ε‖ / a_ε`.
    pub ratio_du: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingAudit {
    /// Rows ordered by decreasing `a_ε`.
    pub rows: Vec<ScalingRow>,
    /// Whether every ratio stays within a factor 2 between consecutive runs.
    pub passed: bool,
}

pub fn scaling_row(sol: &DnsSolution) -> ScalingRow {
    let (u, du) = dilated_norms(sol);
    let a = sol.a_eps();
    ScalingRow {
        a_eps: a,
        epsilon: sol.epsilon(),
        ratio_u: u / (a * a),
        ratio_du: du / a,
    }
}

fn within_factor_two(prev: f64, next: f64) -> bool {
    if prev == 0.0 && next == 0.0 {
        return true;
    }
    let (lo, hi) = if prev < next { (prev, next) } else { (next, prev) };
    hi < 2.0 * lo
}

/// Compares the a priori ratios across runs that differ only in `a_ε`.
pub fn scaling_audit(runs: &[DnsSolution]) -> Result<ScalingAudit> {
    if runs.len() < 2 {
        return Err(Error::InconsistentRuns(format!("need at least two runs, got {}", runs.len())));
    }
    let first = &runs[0].mask;
    for r in &runs[1..] {
        let s = &r.mask.spec;
        let same = (s.lx - first.spec.lx).abs() <= 1e-12
            && (s.ly - first.spec.ly).abs() <= 1e-12
            && (s.epsilon - first.spec.epsilon).abs() <= 1e-12
            && r.mask.n_c() == first.n_c()
            && (r.nu - runs[0].nu).abs() == 0.0;
        if !same {
            return Err(Error::InconsistentRuns(
                "runs must share omega, epsilon, voxels per cell and viscosity".into(),
            ));
        }
        let nc = first.n_c();
        for k in 0..nc {
            for j in 0..nc {
                for i in 0..nc {
                    if r.mask.is_fluid(i, j, k) != first.is_fluid(i, j, k) {
                        return Err(Error::InconsistentRuns("runs use different obstacles".into()));
                    }
                }
            }
        }
    }
    Ok(audit_rows(runs.iter().map(scaling_row).collect()))
}

/// Orders rows by decreasing `a_ε` and checks the factor-2 bound.
pub fn audit_rows(mut rows: Vec<ScalingRow>) -> ScalingAudit {
    rows.sort_by(|a, b| b.a_eps.total_cmp(&a.a_eps));
    let passed = rows
        .windows(2)
        .all(|w| within_factor_two(w[0].ratio_u, w[1].ratio_u) && within_factor_two(w[0].ratio_du, w[1].ratio_du));
    ScalingAudit { rows, passed }
}

/// DNS against Darcy on the interior columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub a_eps: f64,
    pub epsilon: f64,
    pub ratio_u: f64,
    pub ratio_du: f64,
    /// `‖a_ε⁻² Ū' - U'‖ / ‖U'‖`; falls back to the absolute value when
    /// `U' = 0`.
    pub rel_err_velocity: f64,
    pub abs_err_velocity: f64,
    /// Column-averaged DNS pressure against `p`, both with their interior
    /// mean removed; absolute when `p = 0`.
    pub rel_err_pressure: f64,
    /// `‖Ū_3‖ / ‖Ū'‖`.
    pub u3_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparison {
    Report(ComparisonReport),
    /// No obstacles: the homogenized limit does not apply.
    NotApplicable,
}

/// Everything the Darcy comparison needs from a DNS run, one entry per
/// microcell column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub spec: ThinDomainSpec,
    pub n_c: usize,
    pub nu: f64,
    pub has_obstacles: bool,
    pub ratio_u: f64,
    pub ratio_du: f64,
    /// `Ū` per column, `I + gx * J` order.
    pub mean: Vec<[f64; 3]>,
    /// Mean pressure over the fluid voxels of each column.
    pub pressure: Vec<f64>,
}

impl ColumnSummary {
    pub fn from_solution(sol: &DnsSolution) -> Self {
        let row = scaling_row(sol);
        Self {
            spec: sol.mask.spec,
            n_c: sol.mask.n_c(),
            nu: sol.nu,
            has_obstacles: sol.mask.has_obstacles(),
            ratio_u: row.ratio_u,
            ratio_du: row.ratio_du,
            mean: average_velocity(sol).mean,
            pressure: column_pressure(sol),
        }
    }

    pub fn scaling_row(&self) -> ScalingRow {
        ScalingRow {
            a_eps: self.spec.a_eps,
            epsilon: self.spec.epsilon,
            ratio_u: self.ratio_u,
            ratio_du: self.ratio_du,
        }
    }
}

fn relative(err: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        err / reference
    } else {
        err
    }
}

/// Compares `a_ε⁻² Ū'` with the Darcy velocity and the fluid-averaged DNS
/// pressure with the Darcy pressure, skipping the outermost ring of columns.
pub fn darcy_comparison(sol: &DnsSolution, darcy: &DarcySolution) -> Result<Comparison> {
    compare_columns(&ColumnSummary::from_solution(sol), darcy)
}

pub fn compare_columns(summary: &ColumnSummary, darcy: &DarcySolution) -> Result<Comparison> {
    let spec = summary.spec;
    let [gx, gy, _] = spec.cells;
    if darcy.gx != gx || darcy.gy != gy {
        return Err(Error::GridMismatch(format!(
            "darcy grid {} x {} does not match the {gx} x {gy} microcell columns",
            darcy.gx, darcy.gy
        )));
    }
    if (darcy.lx - spec.lx).abs() > 1e-12 * spec.lx || (darcy.ly - spec.ly).abs() > 1e-12 * spec.ly {
        return Err(Error::GridMismatch("darcy and dns domains differ".into()));
    }
    if !summary.has_obstacles {
        return Ok(Comparison::NotApplicable);
    }
    if gx < 3 || gy < 3 {
        return Err(Error::GridMismatch("need at least 3 x 3 columns to drop the rim".into()));
    }
    let a2 = spec.a_eps * spec.a_eps;
    let interior: Vec<usize> = (1..gy - 1).flat_map(|j| (1..gx - 1).map(move |i| i + gx * j)).collect();

    let mut du = 0.0;
    let mut uu = 0.0;
    let mut u3 = 0.0;
    let mut uh = 0.0;
    for &c in &interior {
        let m = summary.mean[c];
        let d = darcy.u[c];
        du += (m[0] / a2 - d[0]).powi(2) + (m[1] / a2 - d[1]).powi(2);
        uu += d[0] * d[0] + d[1] * d[1];
        u3 += m[2] * m[2];
        uh += m[0] * m[0] + m[1] * m[1];
    }
    let count = interior.len() as f64;
    let pm = interior.iter().map(|&c| summary.pressure[c]).sum::<f64>() / count;
    let dm = interior.iter().map(|&c| darcy.p[c]).sum::<f64>() / count;
    let mut dp = 0.0;
    let mut pp = 0.0;
    for &c in &interior {
        dp += ((summary.pressure[c] - pm) - (darcy.p[c] - dm)).powi(2);
        pp += (darcy.p[c] - dm).powi(2);
    }
    Ok(Comparison::Report(ComparisonReport {
        a_eps: spec.a_eps,
        epsilon: spec.epsilon,
        ratio_u: summary.ratio_u,
        ratio_du: summary.ratio_du,
        rel_err_velocity: relative(du.sqrt(), uu.sqrt()),
        abs_err_velocity: (du * a2).sqrt(),
        rel_err_pressure: relative(dp.sqrt(), pp.sqrt()),
        u3_ratio: relative(u3.sqrt(), uh.sqrt()),
    }))
}

/// Mean DNS pressure over the fluid voxels of every column.
pub fn column_pressure(sol: &DnsSolution) -> Vec<f64> {
    let mask = &sol.mask;
    let nc = mask.n_c();
    let [gx, gy, _] = mask.spec.cells;
    let [nx, ny, nz] = mask.dims();
    let mut sum = vec![0.0; gx * gy];
    let mut count = vec![0usize; gx * gy];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if mask.is_fluid(i, j, k) {
                    let c = i / nc + gx * (j / nc);
                    sum[c] += sol.field.pressure[mask.index(i, j, k)];
                    count[c] += 1;
                }
            }
        }
    }
    sum.iter().zip(&count).map(|(s, n)| if *n > 0 { s / *n as f64 } else { 0.0 }).collect()
}
