//! The 2x2 permeability tensor assembled from the two cell solutions.
//!
//! Two formulas are computed:
//!
//! * the energy form `K_ij = ν ∫_{Y_f} Dw^i : Dw^j`, the canonical value used
//!   by the Darcy solver, symmetric by construction;
//! * the mean-velocity form `K_ij = ∫_{Y_f} w^i_j`, obtained by testing the
//!   cell problem with `w^j`, which serves as an accuracy audit.
//!
//! The energy integral uses midpoint quadrature over the fluid voxels: every
//! difference quotient of the staggered velocity is weighted by the fluid
//! fraction of its dual box (the voxel between two normal faces, or the
//! four voxels around an edge for tangential differences). The two formulas
//! agree in the continuum; on the grid they differ by O(h) through the
//! voxels that straddle the obstacle surface.

use crate::cell_stokes::{solution_mean_velocity, CellSolution, Forcing};
use crate::error::{Error, Result};

pub type Matrix2 = [[f64; 2]; 2];

/// Permeability tensor with assembly metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermeabilityTensor {
    /// Energy form, symmetrized.
    pub k: Matrix2,
    /// Mean-velocity form.
    pub k_alt: Matrix2,
    pub nu: f64,
    /// Voxels per axis of the cell grid.
    pub n: usize,
    /// `max |K - K_alt|` entrywise.
    pub consistency_gap: f64,
    /// `|K_12 - K_21|` of the energy form before symmetrization.
    pub asymmetry: f64,
}

impl PermeabilityTensor {
    /// Wraps a given matrix (no cell data); both forms are set to `k`.
    pub fn from_matrix(k: Matrix2) -> Self {
        Self {
            k,
            k_alt: k,
            nu: 1.0,
            n: 0,
            consistency_gap: 0.0,
            asymmetry: (k[0][1] - k[1][0]).abs(),
        }
    }

    /// Frobenius norm of `K`.
    pub fn norm(&self) -> f64 {
        frobenius(&self.k)
    }

    /// `K x`.
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.k[0][0] * x[0] + self.k[0][1] * x[1],
            self.k[1][0] * x[0] + self.k[1][1] * x[1],
        ]
    }

    /// `K⁻¹ x`.
    pub fn solve(&self, x: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.k;
        let det = a * d - b * c;
        [(d * x[0] - b * x[1]) / det, (a * x[1] - c * x[0]) / det]
    }
}

fn frobenius(m: &Matrix2) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix2) -> [f64; 2] {
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [mean - radius, mean + radius]
}

fn check_pair(sol1: &CellSolution, sol2: &CellSolution) -> Result<()> {
    if sol1.mask != sol2.mask || sol1.nu != sol2.nu || sol1.forcing != Forcing::E1 || sol2.forcing != Forcing::E2 {
        return Err(Error::MaskMismatch);
    }
    Ok(())
}

/// Energy form `ν ∫_{Y_f} Dw^i : Dw^j` before symmetrization.
pub fn assemble_k_energy(sol1: &CellSolution, sol2: &CellSolution) -> Result<Matrix2> {
    check_pair(sol1, sol2)?;
    let mask = &sol1.mask;
    let n = mask.n();
    let h = sol1.field.h;
    let layout = sol1.field.layout;
    let w = [sol1.velocity(), sol2.velocity()];
    let fluid = |c: [usize; 3]| mask.is_fluid(c[0], c[1], c[2]) as u8 as f64;
    let wrap_down = |v: usize| (v + n - 1) % n;

    let mut sum = [[0.0; 2]; 2];
    // Lexicographic order over components, faces, then directions.
    for d in 0..3 {
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let f = [i, j, k];
                    let fi = layout.face_index(d, f);
                    for e in 0..3 {
                        let mut g = f;
                        g[e] = (g[e] + 1) % n;
                        let gi = layout.face_index(d, g);
                        let weight = if e == d {
                            fluid(f)
                        } else {
                            let mut f_lo = f;
                            f_lo[d] = wrap_down(f_lo[d]);
                            let mut g_lo = g;
                            g_lo[d] = wrap_down(g_lo[d]);
                            0.25 * (fluid(f) + fluid(f_lo) + fluid(g) + fluid(g_lo))
                        };
                        if weight == 0.0 {
                            continue;
                        }
                        let diff = [(w[0][gi] - w[0][fi]) / h, (w[1][gi] - w[1][fi]) / h];
                        for a in 0..2 {
                            for b in 0..2 {
                                sum[a][b] += weight * (diff[a] * diff[b]);
                            }
                        }
                    }
                }
            }
        }
    }
    let scale = sol1.nu * h * h * h;
    Ok([
        [scale * sum[0][0], scale * sum[0][1]],
        [scale * sum[1][0], scale * sum[1][1]],
    ])
}

/// Mean-velocity form: row `i` holds the horizontal components of
/// `∫_{Y_f} w^i`.
pub fn assemble_k_mean(sol1: &CellSolution, sol2: &CellSolution) -> Result<Matrix2> {
    check_pair(sol1, sol2)?;
    let m1 = solution_mean_velocity(sol1);
    let m2 = solution_mean_velocity(sol2);
    Ok([[m1[0], m1[1]], [m2[0], m2[1]]])
}

/// Assembles both forms and records their consistency gap.
pub fn assemble(sol1: &CellSolution, sol2: &CellSolution) -> Result<PermeabilityTensor> {
    let raw = assemble_k_energy(sol1, sol2)?;
    let k_alt = assemble_k_mean(sol1, sol2)?;
    let off = 0.5 * (raw[0][1] + raw[1][0]);
    let k = [[raw[0][0], off], [off, raw[1][1]]];
    let gap = (0..2)
        .flat_map(|a| (0..2).map(move |b| (a, b)))
        .map(|(a, b)| (k[a][b] - k_alt[a][b]).abs())
        .fold(0.0, f64::max);
    Ok(PermeabilityTensor {
        k,
        k_alt,
        nu: sol1.nu,
        n: sol1.mask.n(),
        consistency_gap: gap,
        asymmetry: (raw[0][1] - raw[1][0]).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// Ascending eigenvalues of `K`.
    pub eigenvalues: [f64; 2],
    /// `|K_12 - K_21| / |K|`.
    pub symmetry_defect: f64,
    pub consistency_gap: f64,
}

/// Checks positive definiteness; fails with `SpdViolation` otherwise.
pub fn certify(k: &PermeabilityTensor) -> Result<Certificate> {
    let eigenvalues = symmetric_eigenvalues(&k.k);
    let norm = k.norm();
    let symmetry_defect = if norm > 0.0 {
        (k.k[0][1] - k.k[1][0]).abs() / norm
    } else {
        0.0
    };
    if !(eigenvalues[0] > 0.0) {
        return Err(Error::SpdViolation {
            min_eigenvalue: eigenvalues[0],
        });
    }
    Ok(Certificate {
        eigenvalues,
        symmetry_defect,
        consistency_gap: k.consistency_gap,
    })
}
