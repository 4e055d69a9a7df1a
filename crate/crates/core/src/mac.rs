//! Marker-and-cell (staggered) grid operators.
//!
//! Pressures live at voxel centers and velocity component `d` lives on the
//! voxel faces normal to axis `d`. Face `(i, j, k)` of component `d` is the
//! lower face of voxel `(i, j, k)` along `d`. A periodic grid has `n_d` faces
//! along `d` (the wrap-around face is stored once); a walled grid has
//! `n_d + 1`, the two outermost faces lying on the walls.
//!
//! A face is *free* iff both voxels it separates exist and are fluid. All
//! other faces carry a homogeneous Dirichlet value and are eliminated from
//! the stencils. Tangential velocities next to a wall use the mirror ghost
//! value `-u`, which places the no-slip condition exactly on the wall.

use rayon::prelude::*;

use crate::geometry::{CellMask, PerforatedMask3D};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Periodic,
    NoSlipWalls,
}

/// Index bookkeeping for the face-centered velocity components and the
/// cell-centered pressure of a box of voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceLayout {
    pub dims: [usize; 3],
    pub mode: BoundaryMode,
}

impl FaceLayout {
    pub fn new(dims: [usize; 3], mode: BoundaryMode) -> Self {
        Self { dims, mode }
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Face counts per axis for velocity component `d`.
    pub fn face_dims(&self, d: usize) -> [usize; 3] {
        let mut fd = self.dims;
        if self.mode == BoundaryMode::NoSlipWalls {
            fd[d] += 1;
        }
        fd
    }

    pub fn component_len(&self, d: usize) -> usize {
        let fd = self.face_dims(d);
        fd[0] * fd[1] * fd[2]
    }

    /// Start of component `d` in the flat velocity vector.
    pub fn offset(&self, d: usize) -> usize {
        (0..d).map(|c| self.component_len(c)).sum()
    }

    pub fn velocity_len(&self) -> usize {
        (0..3).map(|d| self.component_len(d)).sum()
    }

    #[inline]
    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Flat index of face `f` of component `d`.
    #[inline]
    pub fn face_index(&self, d: usize, f: [usize; 3]) -> usize {
        let fd = self.face_dims(d);
        self.offset(d) + f[0] + fd[0] * (f[1] + fd[1] * f[2])
    }

    /// The two voxels separated by face `f` of component `d` (lower, upper);
    /// `None` outside a walled box.
    pub fn adjacent_cells(&self, d: usize, f: [usize; 3]) -> (Option<[usize; 3]>, Option<[usize; 3]>) {
        let n = self.dims[d];
        let mut lo = f;
        let mut hi = f;
        match self.mode {
            BoundaryMode::Periodic => {
                lo[d] = (f[d] + n - 1) % n;
                (Some(lo), Some(hi))
            }
            BoundaryMode::NoSlipWalls => {
                let lo = if f[d] == 0 {
                    None
                } else {
                    lo[d] = f[d] - 1;
                    Some(lo)
                };
                let hi = if f[d] == n {
                    None
                } else {
                    hi[d] = f[d];
                    Some(hi)
                };
                (lo, hi)
            }
        }
    }
}

/// A staggered velocity/pressure pair on a voxel box.
#[derive(Debug, Clone, PartialEq)]
pub struct MacField {
    pub layout: FaceLayout,
    pub h: f64,
    /// All three components, concatenated (see [`FaceLayout::offset`]).
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl MacField {
    pub fn zeros(layout: FaceLayout, h: f64) -> Self {
        Self {
            layout,
            h,
            velocity: vec![0.0; layout.velocity_len()],
            pressure: vec![0.0; layout.cell_count()],
        }
    }

    pub fn component(&self, d: usize) -> &[f64] {
        let start = self.layout.offset(d);
        &self.velocity[start..start + self.layout.component_len(d)]
    }

    pub fn component_mut(&mut self, d: usize) -> &mut [f64] {
        let start = self.layout.offset(d);
        let len = self.layout.component_len(d);
        &mut self.velocity[start..start + len]
    }

    /// Velocity interpolated to voxel centers (average of the two faces).
    pub fn cell_centered_velocity(&self) -> Vec<[f64; 3]> {
        let l = self.layout;
        let [nx, ny, nz] = l.dims;
        let mut out = vec![[0.0; 3]; l.cell_count()];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = [i, j, k];
                    let mut v = [0.0; 3];
                    for (d, vd) in v.iter_mut().enumerate() {
                        let lo = self.velocity[l.face_index(d, c)];
                        let mut up = c;
                        up[d] += 1;
                        if l.mode == BoundaryMode::Periodic {
                            up[d] %= l.dims[d];
                        }
                        let hi = self.velocity[l.face_index(d, up)];
                        *vd = 0.5 * (lo + hi);
                    }
                    out[l.cell_index(c)] = v;
                }
            }
        }
        out
    }
}

/// Stencil data for the Stokes operators on a masked voxel box.
#[derive(Debug, Clone)]
pub struct StaggeredGrid {
    layout: FaceLayout,
    h: f64,
    fluid: Vec<bool>,
    free: Vec<bool>,
    /// Free faces in increasing flat order.
    free_faces: Vec<u32>,
    /// Free neighbors of each free face (six stencil slots).
    neighbors: Vec<[u32; 6]>,
    /// Diagonal stencil weight (times h^2) of each free face.
    diagonal: Vec<f64>,
    /// For each face: (lower cell, upper cell) when free.
    face_cells: Vec<[u32; 2]>,
    /// For each cell: free faces (lower, upper) per axis.
    cell_faces: Vec<[u32; 6]>,
}

impl StaggeredGrid {
    /// Periodic grid on the reference cell.
    pub fn periodic(mask: &CellMask) -> Self {
        let n = mask.n();
        let layout = FaceLayout::new([n; 3], BoundaryMode::Periodic);
        let fluid = crate::geometry::VoxelMask::fluid_labels(mask).to_vec();
        Self::build(layout, mask.h(), fluid)
    }

    /// Grid of the thin domain with no-slip walls on its boundary.
    pub fn walled(mask: &PerforatedMask3D) -> Self {
        let layout = FaceLayout::new(mask.dims(), BoundaryMode::NoSlipWalls);
        let fluid = crate::geometry::VoxelMask::fluid_labels(mask).to_vec();
        Self::build(layout, mask.h(), fluid)
    }

    pub fn from_labels(layout: FaceLayout, h: f64, fluid: Vec<bool>) -> Self {
        assert_eq!(fluid.len(), layout.cell_count());
        Self::build(layout, h, fluid)
    }

    fn build(layout: FaceLayout, h: f64, fluid: Vec<bool>) -> Self {
        let nvel = layout.velocity_len();
        let mut free = vec![false; nvel];
        let mut face_cells = vec![[NONE; 2]; nvel];
        for d in 0..3 {
            let fd = layout.face_dims(d);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let f = [i, j, k];
                        let (lo, hi) = layout.adjacent_cells(d, f);
                        if let (Some(lo), Some(hi)) = (lo, hi) {
                            let (lo, hi) = (layout.cell_index(lo), layout.cell_index(hi));
                            if fluid[lo] && fluid[hi] {
                                let idx = layout.face_index(d, f);
                                free[idx] = true;
                                face_cells[idx] = [lo as u32, hi as u32];
                            }
                        }
                    }
                }
            }
        }

        let mut free_faces = Vec::new();
        let mut neighbors = Vec::new();
        let mut diagonal = Vec::new();
        for d in 0..3 {
            let fd = layout.face_dims(d);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let f = [i, j, k];
                        let idx = layout.face_index(d, f);
                        if !free[idx] {
                            continue;
                        }
                        let mut nb = [NONE; 6];
                        let mut diag = 6.0;
                        for e in 0..3 {
                            for (s, step) in [(0usize, -1i64), (1, 1)] {
                                let pos = f[e] as i64 + step;
                                let size = fd[e] as i64;
                                let target = if pos < 0 || pos >= size {
                                    match layout.mode {
                                        BoundaryMode::Periodic => Some(pos.rem_euclid(size) as usize),
                                        // Only tangential directions can leave
                                        // the box from a free face.
                                        BoundaryMode::NoSlipWalls => None,
                                    }
                                } else {
                                    Some(pos as usize)
                                };
                                match target {
                                    Some(t) => {
                                        let mut g = f;
                                        g[e] = t;
                                        let gi = layout.face_index(d, g);
                                        if free[gi] {
                                            nb[2 * e + s] = gi as u32;
                                        }
                                    }
                                    None => diag += 1.0,
                                }
                            }
                        }
                        free_faces.push(idx as u32);
                        neighbors.push(nb);
                        diagonal.push(diag);
                    }
                }
            }
        }

        let mut cell_faces = vec![[NONE; 6]; layout.cell_count()];
        let [nx, ny, nz] = layout.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = [i, j, k];
                    let ci = layout.cell_index(c);
                    if !fluid[ci] {
                        continue;
                    }
                    for d in 0..3 {
                        let lo = layout.face_index(d, c);
                        let mut up = c;
                        up[d] += 1;
                        if layout.mode == BoundaryMode::Periodic {
                            up[d] %= layout.dims[d];
                        }
                        let hi = layout.face_index(d, up);
                        if free[lo] {
                            cell_faces[ci][2 * d] = lo as u32;
                        }
                        if free[hi] {
                            cell_faces[ci][2 * d + 1] = hi as u32;
                        }
                    }
                }
            }
        }

        Self {
            layout,
            h,
            fluid,
            free,
            free_faces,
            neighbors,
            diagonal,
            face_cells,
            cell_faces,
        }
    }

    pub fn layout(&self) -> FaceLayout {
        self.layout
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn fluid(&self) -> &[bool] {
        &self.fluid
    }

    /// Whether each face carries an unknown.
    pub fn free(&self) -> &[bool] {
        &self.free
    }

    pub fn free_face_count(&self) -> usize {
        self.free_faces.len()
    }

    pub fn fluid_cell_count(&self) -> usize {
        self.fluid.iter().filter(|&&f| f).count()
    }

    /// Velocity plus pressure unknowns.
    pub fn unknowns(&self) -> usize {
        self.free_face_count() + self.fluid_cell_count()
    }

    pub fn zero_field(&self) -> MacField {
        MacField::zeros(self.layout, self.h)
    }

    /// Negative discrete Laplacian `-Δ_h u` of every velocity component.
    ///
    /// Free faces get the 7-point stencil with eliminated Dirichlet
    /// neighbors; constrained faces return `(6 / h^2) u` (identity rows).
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (self.h * self.h);
        for (o, (&v, &free)) in out.iter_mut().zip(u.iter().zip(self.free.iter())) {
            if !free {
                *o = 6.0 * inv_h2 * v;
            }
        }
        let rows: Vec<f64> = self
            .free_faces
            .par_iter()
            .zip(self.neighbors.par_iter())
            .zip(self.diagonal.par_iter())
            .with_min_len(4096)
            .map(|((&f, nb), &diag)| {
                let mut acc = diag * u[f as usize];
                for &g in nb {
                    if g != NONE {
                        acc -= u[g as usize];
                    }
                }
                acc * inv_h2
            })
            .collect();
        for (&f, r) in self.free_faces.iter().zip(rows) {
            out[f as usize] = r;
        }
    }

    /// Like [`apply_laplacian`](Self::apply_laplacian) but zero on constrained
    /// faces; the operator of the velocity block restricted to free faces.
    pub fn apply_velocity_block(&self, nu: f64, u: &[f64], out: &mut [f64]) {
        let inv_h2 = nu / (self.h * self.h);
        let free_faces = &self.free_faces;
        let neighbors = &self.neighbors;
        let diagonal = &self.diagonal;
        let rows: Vec<f64> = (0..free_faces.len())
            .into_par_iter()
            .with_min_len(4096)
            .map(|r| {
                let mut acc = diagonal[r] * u[free_faces[r] as usize];
                for &g in &neighbors[r] {
                    if g != NONE {
                        acc -= u[g as usize];
                    }
                }
                acc * inv_h2
            })
            .collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&f, r) in free_faces.iter().zip(rows) {
            out[f as usize] = r;
        }
    }

    /// Staggered gradient of a cell-centered field onto the free faces.
    pub fn apply_gradient(&self, p: &[f64], out: &mut [f64]) {
        let inv_h = 1.0 / self.h;
        for (o, cells) in out.iter_mut().zip(self.face_cells.iter()) {
            *o = if cells[0] == NONE {
                0.0
            } else {
                (p[cells[1] as usize] - p[cells[0] as usize]) * inv_h
            };
        }
    }

    /// Staggered divergence on fluid cells; only free faces contribute.
    pub fn apply_divergence(&self, u: &[f64], out: &mut [f64]) {
        let inv_h = 1.0 / self.h;
        for (o, faces) in out.iter_mut().zip(self.cell_faces.iter()) {
            let mut acc = 0.0;
            for d in 0..3 {
                let lo = faces[2 * d];
                let hi = faces[2 * d + 1];
                if hi != NONE {
                    acc += u[hi as usize];
                }
                if lo != NONE {
                    acc -= u[lo as usize];
                }
            }
            *o = acc * inv_h;
        }
    }

    /// `h^3 * v . (-Δ_h u)` over free faces: the discrete Dirichlet form
    /// `∫ Du : Dv` of fields vanishing on constrained faces.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut lu = vec![0.0; u.len()];
        self.apply_velocity_block(1.0, u, &mut lu);
        self.h.powi(3) * dot(&lu, v)
    }

    /// Zeroes velocity entries on constrained faces.
    pub fn restrict_to_free(&self, u: &mut [f64]) {
        for (v, &free) in u.iter_mut().zip(self.free.iter()) {
            if !free {
                *v = 0.0;
            }
        }
    }

    /// Removes the fluid-cell mean of a pressure field and zeroes solid cells.
    pub fn project_zero_mean(&self, p: &mut [f64]) {
        let count = self.fluid_cell_count();
        if count == 0 {
            return;
        }
        let sum: f64 = p
            .iter()
            .zip(self.fluid.iter())
            .filter(|(_, &f)| f)
            .map(|(v, _)| *v)
            .sum();
        let mean = sum / count as f64;
        for (v, &f) in p.iter_mut().zip(self.fluid.iter()) {
            *v = if f { *v - mean } else { 0.0 };
        }
    }
}

/// Sequential dot product (fixed summation order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
