//! The homogenized Darcy problem on a rectangle `ω = (0, Lx) × (0, Ly)`:
//!
//! ```text
//!   div K (f' - ∇p) = 0  in ω,     K (f' - ∇p) · n = 0  on ∂ω,
//!   U' = K (f' - ∇p),    U_3 = 0.
//! ```
//!
//! Cell-centered finite volumes on a `gx × gy` grid. The flux through a face
//! combines the two-point normal difference with a cross derivative averaged
//! over the four diagonal neighbours (a nine-point stencil). Cross
//! derivatives that would need a cell outside `ω` reuse the nearest interior
//! row, i.e. a mirror ghost. The resulting operator is symmetric and its
//! kernel is the constants, so CG runs on zero-mean vectors.
//!
//! When the force comes with a closed-form descriptor, its gradient part is
//! differenced with the same stencil as the pressure. A conservative force
//! `f' = ∇φ` is then absorbed exactly: `p = φ - mean φ` and `U = 0`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::krylov::conjugate_gradient;
use crate::permeability::{certify, Matrix2, PermeabilityTensor};

/// Closed-form horizontal forces. Each is split into a potential `φ` and a
/// remainder `g`, so `f' = ∇φ + g`. The manufactured force is kept whole
/// (`φ = 0`) so that it exercises the generic discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceDescriptor {
    /// `f' = c`.
    Constant([f64; 2]),
    /// `f' = ∇(A cos(π x_1 / Lx))`.
    GradientCosine { amplitude: f64 },
    /// `f' = ∇p* + K⁻¹ U*` with `p* = cos(π x_1/Lx) cos(π x_2/Ly)` and
    /// `U* = curl ψ`, `ψ = sin²(π x_1/Lx) sin²(π x_2/Ly)`.
    Manufactured { k: Matrix2 },
    /// Divergence-free and tangential to `∂ω`:
    /// `f_1 = A sin(m_1 π x_1/Lx) cos(m_2 π x_2/Ly)`,
    /// `f_2 = -A (m_1 Ly / (m_2 Lx)) cos(m_1 π x_1/Lx) sin(m_2 π x_2/Ly)`.
    Solenoidal { amplitude: f64, modes: [u32; 2] },
    /// Sum of a `GradientCosine` and a `Solenoidal` force.
    Combined {
        gradient: f64,
        solenoidal: f64,
        modes: [u32; 2],
    },
}

impl ForceDescriptor {
    /// The potential `φ` at `x`.
    pub fn potential(&self, x: [f64; 2], lx: f64, _ly: f64) -> f64 {
        match *self {
            ForceDescriptor::Constant(c) => c[0] * x[0] + c[1] * x[1],
            ForceDescriptor::GradientCosine { amplitude } => amplitude * (PI * x[0] / lx).cos(),
            ForceDescriptor::Manufactured { .. } | ForceDescriptor::Solenoidal { .. } => 0.0,
            ForceDescriptor::Combined { gradient, .. } => gradient * (PI * x[0] / lx).cos(),
        }
    }

    /// The remainder `g = f' - ∇φ` at `x`.
    pub fn remainder(&self, x: [f64; 2], lx: f64, ly: f64) -> [f64; 2] {
        match *self {
            ForceDescriptor::Constant(_) | ForceDescriptor::GradientCosine { .. } => [0.0; 2],
            ForceDescriptor::Manufactured { k } => {
                let u = solve2(&k, manufactured_velocity(x, lx, ly));
                let (s1, c1) = (PI * x[0] / lx).sin_cos();
                let (s2, c2) = (PI * x[1] / ly).sin_cos();
                [u[0] - PI / lx * s1 * c2, u[1] - PI / ly * c1 * s2]
            }
            ForceDescriptor::Solenoidal { amplitude, modes } => solenoidal(amplitude, modes, x, lx, ly),
            ForceDescriptor::Combined { solenoidal: a, modes, .. } => solenoidal(a, modes, x, lx, ly),
        }
    }

    /// `f'(x)` in closed form.
    pub fn value(&self, x: [f64; 2], lx: f64, ly: f64) -> [f64; 2] {
        let g = self.remainder(x, lx, ly);
        let grad = match *self {
            ForceDescriptor::Constant(c) => c,
            ForceDescriptor::GradientCosine { amplitude } | ForceDescriptor::Combined { gradient: amplitude, .. } => {
                [-amplitude * PI / lx * (PI * x[0] / lx).sin(), 0.0]
            }
            ForceDescriptor::Manufactured { .. } | ForceDescriptor::Solenoidal { .. } => [0.0; 2],
        };
        [grad[0] + g[0], grad[1] + g[1]]
    }
}

fn solenoidal(a: f64, modes: [u32; 2], x: [f64; 2], lx: f64, ly: f64) -> [f64; 2] {
    let (m1, m2) = (modes[0] as f64, modes[1] as f64);
    let (s1, c1) = (m1 * PI * x[0] / lx).sin_cos();
    let (s2, c2) = (m2 * PI * x[1] / ly).sin_cos();
    [a * s1 * c2, -a * (m1 * ly / (m2 * lx)) * c1 * s2]
}

fn solve2(k: &Matrix2, x: [f64; 2]) -> [f64; 2] {
    PermeabilityTensor::from_matrix(*k).solve(x)
}

/// `p*` of the manufactured Darcy solution.
pub fn manufactured_pressure(x: [f64; 2], lx: f64, ly: f64) -> f64 {
    (PI * x[0] / lx).cos() * (PI * x[1] / ly).cos()
}

/// `U* = (∂_2 ψ, -∂_1 ψ)` of the manufactured Darcy solution.
pub fn manufactured_velocity(x: [f64; 2], lx: f64, ly: f64) -> [f64; 2] {
    let (s1, c1) = (PI * x[0] / lx).sin_cos();
    let (s2, c2) = (PI * x[1] / ly).sin_cos();
    [s1 * s1 * 2.0 * s2 * c2 * PI / ly, -2.0 * s1 * c1 * PI / lx * s2 * s2]
}

/// Horizontal body force sampled at the cell centers of a `gx × gy` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyForce2D {
    pub lx: f64,
    pub ly: f64,
    pub gx: usize,
    pub gy: usize,
    /// `f'` at cell centers, `i + gx * j` order.
    pub samples: Vec<[f64; 2]>,
    pub descriptor: Option<ForceDescriptor>,
}

impl BodyForce2D {
    pub fn from_descriptor(descriptor: ForceDescriptor, lx: f64, ly: f64, gx: usize, gy: usize) -> Result<Self> {
        let mut samples = Vec::with_capacity(gx * gy);
        for j in 0..gy {
            for i in 0..gx {
                samples.push(descriptor.value(center(lx, ly, gx, gy, i, j), lx, ly));
            }
        }
        Self::checked(lx, ly, gx, gy, samples, Some(descriptor))
    }

    pub fn from_samples(lx: f64, ly: f64, gx: usize, gy: usize, samples: Vec<[f64; 2]>) -> Result<Self> {
        Self::checked(lx, ly, gx, gy, samples, None)
    }

    fn checked(
        lx: f64,
        ly: f64,
        gx: usize,
        gy: usize,
        samples: Vec<[f64; 2]>,
        descriptor: Option<ForceDescriptor>,
    ) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidDomain(format!("omega must have positive extents, got {lx} x {ly}")));
        }
        if samples.len() != gx * gy {
            return Err(Error::GridMismatch(format!(
                "{} force samples for a {gx} x {gy} grid",
                samples.len()
            )));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                key: "force".into(),
                message: "force samples must be finite".into(),
            });
        }
        Ok(Self {
            lx,
            ly,
            gx,
            gy,
            samples,
            descriptor,
        })
    }

    /// The same force on another grid. Needs a descriptor.
    pub fn resampled(&self, gx: usize, gy: usize) -> Result<Self> {
        match &self.descriptor {
            Some(d) => Self::from_descriptor(d.clone(), self.lx, self.ly, gx, gy),
            None => Err(Error::GridMismatch(
                "a sampled force cannot be moved to another grid".into(),
            )),
        }
    }

    /// `f'` at an arbitrary point; piecewise constant for sampled forces.
    pub fn value_at(&self, x: [f64; 2]) -> [f64; 2] {
        match &self.descriptor {
            Some(d) => d.value(x, self.lx, self.ly),
            None => {
                let i = ((x[0] / self.lx * self.gx as f64) as usize).min(self.gx - 1);
                let j = ((x[1] / self.ly * self.gy as f64) as usize).min(self.gy - 1);
                self.samples[i + self.gx * j]
            }
        }
    }
}

fn center(lx: f64, ly: f64, gx: usize, gy: usize, i: usize, j: usize) -> [f64; 2] {
    [
        (i as f64 + 0.5) * lx / gx as f64,
        (j as f64 + 0.5) * ly / gy as f64,
    ]
}

/// Solution of the Darcy problem on the cell-centered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DarcySolution {
    pub gx: usize,
    pub gy: usize,
    pub lx: f64,
    pub ly: f64,
    pub k: Matrix2,
    /// Pressure with zero mean, `i + gx * j` order.
    pub p: Vec<f64>,
    /// `U' = K (f' - ∇p)` at cell centers. `U_3` is identically zero.
    pub u: Vec<[f64; 2]>,
    /// Max over cells of the discrete divergence of `K (f' - ∇p)`.
    pub flux_residual: f64,
    pub iterations: usize,
}

impl DarcySolution {
    pub fn spacing(&self) -> [f64; 2] {
        [self.lx / self.gx as f64, self.ly / self.gy as f64]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        center(self.lx, self.ly, self.gx, self.gy, i, j)
    }
}

/// Nine-point stencil of `-div K ∇` on the grid, scaled by cell area.
struct Stencil {
    gx: usize,
    gy: usize,
    dx: f64,
    dy: f64,
    k: Matrix2,
}

impl Stencil {
    #[inline]
    fn at(&self, v: &[f64], i: usize, j: usize) -> f64 {
        v[i + self.gx * j]
    }

    /// Gradient of `v` on the x-face between `(i, j)` and `(i + 1, j)`.
    fn x_face_gradient(&self, v: &[f64], i: usize, j: usize) -> [f64; 2] {
        let jl = j.saturating_sub(1);
        let jh = (j + 1).min(self.gy - 1);
        let normal = (self.at(v, i + 1, j) - self.at(v, i, j)) / self.dx;
        let cross = (self.at(v, i, jh) + self.at(v, i + 1, jh) - self.at(v, i, jl) - self.at(v, i + 1, jl)) / (4.0 * self.dy);
        [normal, cross]
    }

    /// Gradient of `v` on the y-face between `(i, j)` and `(i, j + 1)`.
    fn y_face_gradient(&self, v: &[f64], i: usize, j: usize) -> [f64; 2] {
        let il = i.saturating_sub(1);
        let ih = (i + 1).min(self.gx - 1);
        let normal = (self.at(v, i, j + 1) - self.at(v, i, j)) / self.dy;
        let cross = (self.at(v, ih, j) + self.at(v, ih, j + 1) - self.at(v, il, j) - self.at(v, il, j + 1)) / (4.0 * self.dx);
        [cross, normal]
    }

    /// Scatters `-Σ_out flux · length` for face fluxes produced by `flux`,
    /// which receives the face gradient of `v` and the face center.
    fn scatter<F>(&self, v: &[f64], out: &mut [f64], mut flux: F)
    where
        F: FnMut([f64; 2], [f64; 2]) -> [f64; 2],
    {
        let (gx, gy, dx, dy) = (self.gx, self.gy, self.dx, self.dy);
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..gy {
            for i in 0..gx.saturating_sub(1) {
                let g = self.x_face_gradient(v, i, j);
                let x = [(i + 1) as f64 * dx, (j as f64 + 0.5) * dy];
                let q = flux(g, x)[0] * dy;
                out[i + gx * j] -= q;
                out[i + 1 + gx * j] += q;
            }
        }
        for j in 0..gy.saturating_sub(1) {
            for i in 0..gx {
                let g = self.y_face_gradient(v, i, j);
                let x = [(i as f64 + 0.5) * dx, (j + 1) as f64 * dy];
                let q = flux(g, x)[1] * dx;
                out[i + gx * j] -= q;
                out[i + gx * (j + 1)] += q;
            }
        }
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let k = self.k;
        self.scatter(p, out, |g, _| mat_vec(&k, g));
    }

    /// Centered gradient at cell `(i, j)`; second-order one-sided at the
    /// boundary rows and columns.
    fn center_gradient(&self, v: &[f64], i: usize, j: usize) -> [f64; 2] {
        let d = |a: f64, b: f64, c: f64, h: f64, pos: usize, n: usize| -> f64 {
            // a, b, c are the values at pos-1, pos, pos+1 (or the one-sided
            // triple at the ends).
            if pos == 0 {
                (-3.0 * a + 4.0 * b - c) / (2.0 * h)
            } else if pos == n - 1 {
                (3.0 * c - 4.0 * b + a) / (2.0 * h)
            } else {
                (c - a) / (2.0 * h)
            }
        };
        let triple_x = if i == 0 {
            [self.at(v, 0, j), self.at(v, 1, j), self.at(v, 2, j)]
        } else if i == self.gx - 1 {
            [self.at(v, i - 2, j), self.at(v, i - 1, j), self.at(v, i, j)]
        } else {
            [self.at(v, i - 1, j), self.at(v, i, j), self.at(v, i + 1, j)]
        };
        let triple_y = if j == 0 {
            [self.at(v, i, 0), self.at(v, i, 1), self.at(v, i, 2)]
        } else if j == self.gy - 1 {
            [self.at(v, i, j - 2), self.at(v, i, j - 1), self.at(v, i, j)]
        } else {
            [self.at(v, i, j - 1), self.at(v, i, j), self.at(v, i, j + 1)]
        };
        [
            d(triple_x[0], triple_x[1], triple_x[2], self.dx, i, self.gx),
            d(triple_y[0], triple_y[1], triple_y[2], self.dy, j, self.gy),
        ]
    }
}

fn mat_vec(k: &Matrix2, x: [f64; 2]) -> [f64; 2] {
    [k[0][0] * x[0] + k[0][1] * x[1], k[1][0] * x[0] + k[1][1] * x[1]]
}

fn project_zero_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn check_grid(f: &BodyForce2D, gx: usize, gy: usize) -> Result<()> {
    if gx < 4 || gy < 4 {
        return Err(Error::Validation {
            key: "darcy.gx".into(),
            message: format!("grid must be at least 4 x 4, got {gx} x {gy}"),
        });
    }
    if f.gx != gx || f.gy != gy {
        return Err(Error::GridMismatch(format!(
            "force sampled on {} x {}, solve requested on {gx} x {gy}",
            f.gx, f.gy
        )));
    }
    Ok(())
}

fn potential_samples(f: &BodyForce2D) -> Option<Vec<f64>> {
    f.descriptor.as_ref().map(|d| {
        let mut phi = Vec::with_capacity(f.gx * f.gy);
        for j in 0..f.gy {
            for i in 0..f.gx {
                phi.push(d.potential(center(f.lx, f.ly, f.gx, f.gy, i, j), f.lx, f.ly));
            }
        }
        phi
    })
}

/// `-Σ_out K f' · n |face|` per cell.
fn right_hand_side(st: &Stencil, f: &BodyForce2D) -> Vec<f64> {
    let n = st.gx * st.gy;
    let k = st.k;
    let mut b = vec![0.0; n];
    match (&f.descriptor, potential_samples(f)) {
        (Some(d), Some(phi)) => {
            let (lx, ly) = (f.lx, f.ly);
            st.scatter(&phi, &mut b, |g, x| {
                let r = d.remainder(x, lx, ly);
                mat_vec(&k, [g[0] + r[0], g[1] + r[1]])
            });
        }
        _ => {
            // Face values are the means of the two adjacent samples.
            let (gx, gy) = (st.gx, st.gy);
            for j in 0..gy {
                for i in 0..gx - 1 {
                    let (a, c) = (f.samples[i + gx * j], f.samples[i + 1 + gx * j]);
                    let q = mat_vec(&k, [0.5 * (a[0] + c[0]), 0.5 * (a[1] + c[1])])[0] * st.dy;
                    b[i + gx * j] -= q;
                    b[i + 1 + gx * j] += q;
                }
            }
            for j in 0..gy - 1 {
                for i in 0..gx {
                    let (a, c) = (f.samples[i + gx * j], f.samples[i + gx * (j + 1)]);
                    let q = mat_vec(&k, [0.5 * (a[0] + c[0]), 0.5 * (a[1] + c[1])])[1] * st.dx;
                    b[i + gx * j] -= q;
                    b[i + gx * (j + 1)] += q;
                }
            }
        }
    }
    b
}

fn max_kf(k: &Matrix2, f: &BodyForce2D) -> f64 {
    f.samples
        .iter()
        .map(|s| {
            let v = mat_vec(k, *s);
            v[0].hypot(v[1])
        })
        .fold(0.0, f64::max)
}

/// Solves the Darcy problem from a zero initial guess.
pub fn solve_darcy(k: &PermeabilityTensor, f: &BodyForce2D, gx: usize, gy: usize) -> Result<DarcySolution> {
    solve_darcy_from(k, f, gx, gy, None)
}

/// Solves the Darcy problem starting CG from `initial` (any vector; its
/// mean is removed).
pub fn solve_darcy_from(
    k: &PermeabilityTensor,
    f: &BodyForce2D,
    gx: usize,
    gy: usize,
    initial: Option<&[f64]>,
) -> Result<DarcySolution> {
    certify(k)?;
    check_grid(f, gx, gy)?;
    let st = Stencil {
        gx,
        gy,
        dx: f.lx / gx as f64,
        dy: f.ly / gy as f64,
        k: k.k,
    };
    let n = gx * gy;
    let mut b = right_hand_side(&st, f);
    project_zero_mean(&mut b);
    let mut p = match initial {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => {
            return Err(Error::GridMismatch(format!("initial guess has {} entries, grid has {n}", v.len())));
        }
        None => vec![0.0; n],
    };
    project_zero_mean(&mut p);

    let scale = max_kf(&k.k, f);
    let area = st.dx * st.dy;
    let mut iterations = 0;
    if scale > 0.0 {
        let target = 0.5e-8 * scale * area;
        let out = conjugate_gradient(
            |v: &[f64], y: &mut [f64]| st.apply(v, y),
            &b,
            &mut p,
            0.0,
            target,
            20 * n,
            project_zero_mean,
        );
        iterations = out.iterations;
        if !out.converged {
            return Err(Error::NotConverged {
                stage: "darcy",
                iterations: out.iterations,
                residual: out.residual / (scale * area),
                history: vec![],
            });
        }
    } else {
        p.iter_mut().for_each(|v| *v = 0.0);
    }
    project_zero_mean(&mut p);

    let mut ap = vec![0.0; n];
    st.apply(&p, &mut ap);
    let flux_residual = ap.iter().zip(&b).map(|(a, c)| (a - c).abs() / area).fold(0.0, f64::max);
    let u = reconstruct_velocity(k, f, &p)?;
    log::info!("darcy {gx} x {gy}: {iterations} CG iterations, flux residual {flux_residual:e}");
    Ok(DarcySolution {
        gx,
        gy,
        lx: f.lx,
        ly: f.ly,
        k: k.k,
        p,
        u,
        flux_residual,
        iterations,
    })
}

/// `U' = K (f' - ∇p)` at cell centers with centered differences.
pub fn reconstruct_velocity(k: &PermeabilityTensor, f: &BodyForce2D, p: &[f64]) -> Result<Vec<[f64; 2]>> {
    let (gx, gy) = (f.gx, f.gy);
    check_grid(f, gx, gy)?;
    if p.len() != gx * gy {
        return Err(Error::GridMismatch(format!("{} pressures for a {gx} x {gy} grid", p.len())));
    }
    let st = Stencil {
        gx,
        gy,
        dx: f.lx / gx as f64,
        dy: f.ly / gy as f64,
        k: k.k,
    };
    let phi = potential_samples(f);
    let mut u = Vec::with_capacity(gx * gy);
    for j in 0..gy {
        for i in 0..gx {
            let force = match (&f.descriptor, &phi) {
                (Some(d), Some(phi)) => {
                    let g = st.center_gradient(phi, i, j);
                    let r = d.remainder(center(f.lx, f.ly, gx, gy, i, j), f.lx, f.ly);
                    [g[0] + r[0], g[1] + r[1]]
                }
                _ => f.samples[i + gx * j],
            };
            let gp = st.center_gradient(p, i, j);
            u.push(mat_vec(&k.k, [force[0] - gp[0], force[1] - gp[1]]));
        }
    }
    Ok(u)
}
