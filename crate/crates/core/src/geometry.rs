//! Reference cell, obstacle voxelization and the tiled thin domain.
//!
//! The reference cell is the unit cube `Y = (-1/2, 1/2)^3`. An obstacle `T`
//! is voxelized by center sampling: voxel `(i, j, k)` with center
//! `y = -1/2 + (i + 1/2) h` is solid iff `y` lies inside `T`.
//!
//! Thin domains `Q = (0, Lx) x (0, Ly) x (0, eps)` are tiled exactly by
//! microcells of size `a_eps`; microcell `k` occupies `a_eps * k + (0, a_eps)^3`,
//! which is the scaled cell `a_eps * k + a_eps * Y` shifted by half a cell so
//! that the lattice starts at the corner of `Q`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Tolerance used when checking that domain extents are integer multiples of
/// the microcell size.
pub const TILING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    AxisBox { half_extents: [f64; 3] },
    /// `sum_d |(y_d - c_d) / a_d|^p < 1`.
    Superellipsoid { semi_axes: [f64; 3], exponent: f64 },
}

/// A parametric obstacle in reference-cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleShape {
    pub kind: ShapeKind,
    pub center: [f64; 3],
}

impl ObstacleShape {
    pub fn sphere(radius: f64) -> Self {
        Self {
            kind: ShapeKind::Sphere { radius },
            center: [0.0; 3],
        }
    }

    pub fn axis_box(half_extents: [f64; 3]) -> Self {
        Self {
            kind: ShapeKind::AxisBox { half_extents },
            center: [0.0; 3],
        }
    }

    pub fn superellipsoid(semi_axes: [f64; 3], exponent: f64) -> Self {
        Self {
            kind: ShapeKind::Superellipsoid {
                semi_axes,
                exponent,
            },
            center: [0.0; 3],
        }
    }

    pub fn with_center(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    /// Half-extent of the shape along `axis`.
    pub fn extent(&self, axis: usize) -> f64 {
        match self.kind {
            ShapeKind::Sphere { radius } => radius,
            ShapeKind::AxisBox { half_extents } => half_extents[axis],
            ShapeKind::Superellipsoid { semi_axes, .. } => semi_axes[axis],
        }
    }

    /// Checks positivity of the size parameters and that the closed obstacle
    /// lies strictly inside `Y`.
    pub fn validate(&self) -> Result<()> {
        let sizes: Vec<f64> = match self.kind {
            ShapeKind::Sphere { radius } => vec![radius],
            ShapeKind::AxisBox { half_extents } => half_extents.to_vec(),
            ShapeKind::Superellipsoid {
                semi_axes,
                exponent,
            } => {
                if !(exponent.is_finite() && exponent > 0.0) {
                    return Err(Error::InvalidShape(format!(
                        "superellipsoid exponent must be positive, got {exponent}"
                    )));
                }
                semi_axes.to_vec()
            }
        };
        if sizes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidShape(format!(
                "size parameters must be positive, got {sizes:?}"
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidShape("center must be finite".into()));
        }
        for axis in 0..3 {
            if self.center[axis].abs() + self.extent(axis) >= 0.5 {
                return Err(Error::ObstacleTouchesBoundary);
            }
        }
        Ok(())
    }

    /// Whether the point `y` (reference-cell coordinates) lies inside the
    /// open obstacle.
    pub fn contains(&self, y: [f64; 3]) -> bool {
        let d = [
            y[0] - self.center[0],
            y[1] - self.center[1],
            y[2] - self.center[2],
        ];
        match self.kind {
            ShapeKind::Sphere { radius } => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < radius * radius,
            ShapeKind::AxisBox { half_extents } => {
                (0..3).all(|a| d[a].abs() < half_extents[a])
            }
            ShapeKind::Superellipsoid {
                semi_axes,
                exponent,
            } => {
                let s: f64 = (0..3)
                    .map(|a| (d[a] / semi_axes[a]).abs().powf(exponent))
                    .sum();
                s < 1.0
            }
        }
    }
}

/// Common queries on voxel masks.
pub trait VoxelMask {
    /// Fluid labels in lexicographic order (first axis fastest).
    fn fluid_labels(&self) -> &[bool];

    fn fluid_count(&self) -> usize {
        self.fluid_labels().iter().filter(|&&f| f).count()
    }

    fn solid_count(&self) -> usize {
        self.fluid_labels().len() - self.fluid_count()
    }

    /// Fluid voxel count over total voxel count.
    fn porosity(&self) -> f64 {
        self.fluid_count() as f64 / self.fluid_labels().len() as f64
    }
}

/// Voxelized reference cell: `true` marks a fluid voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    n: usize,
    fluid: Vec<bool>,
}

impl CellMask {
    /// Wraps raw labels without checking the connectivity or boundary-layer
    /// invariants; see [`CellMask::validate`].
    pub fn from_labels(n: usize, fluid: Vec<bool>) -> Result<Self> {
        if n == 0 || fluid.len() != n * n * n {
            return Err(Error::Validation {
                key: "cell.n".into(),
                message: format!("expected {} labels for n = {n}, got {}", n * n * n, fluid.len()),
            });
        }
        Ok(Self { n, fluid })
    }

    pub fn all_fluid(n: usize) -> Self {
        Self {
            n,
            fluid: vec![true; n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn is_fluid(&self, i: usize, j: usize, k: usize) -> bool {
        self.fluid[self.index(i, j, k)]
    }

    /// Center of voxel `(i, j, k)` in `Y` coordinates.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.h();
        [
            -0.5 + (i as f64 + 0.5) * h,
            -0.5 + (j as f64 + 0.5) * h,
            -0.5 + (k as f64 + 0.5) * h,
        ]
    }

    /// Checks that the six boundary layers are fluid and that the fluid
    /// voxels form one face-connected component under periodic wrap.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let on_boundary = [i, j, k].iter().any(|&c| c == 0 || c == n - 1);
                    if on_boundary && !self.is_fluid(i, j, k) {
                        return Err(Error::ObstacleTouchesBoundary);
                    }
                }
            }
        }
        let components = periodic_components(n, &self.fluid);
        if components != 1 {
            return Err(Error::DisconnectedFluid { components });
        }
        Ok(())
    }

    /// Returns the mask reflected along `axis` (index `i -> n - 1 - i`).
    pub fn reflected(&self, axis: usize) -> Self {
        let n = self.n;
        let mut fluid = vec![false; self.fluid.len()];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut src = [i, j, k];
                    src[axis] = n - 1 - src[axis];
                    fluid[self.index(i, j, k)] = self.is_fluid(src[0], src[1], src[2]);
                }
            }
        }
        Self { n, fluid }
    }

    /// Returns the mask with the first two axes exchanged.
    pub fn swapped_xy(&self) -> Self {
        let n = self.n;
        let mut fluid = vec![false; self.fluid.len()];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    fluid[self.index(i, j, k)] = self.is_fluid(j, i, k);
                }
            }
        }
        Self { n, fluid }
    }

    /// Returns the mask shifted periodically by `shift` voxels.
    pub fn shifted(&self, shift: [usize; 3]) -> Self {
        let n = self.n;
        let mut fluid = vec![false; self.fluid.len()];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let dst = self.index((i + shift[0]) % n, (j + shift[1]) % n, (k + shift[2]) % n);
                    fluid[dst] = self.is_fluid(i, j, k);
                }
            }
        }
        Self { n, fluid }
    }
}

impl VoxelMask for CellMask {
    fn fluid_labels(&self) -> &[bool] {
        &self.fluid
    }
}

/// Number of face-connected fluid components of an `n^3` periodic grid.
fn periodic_components(n: usize, fluid: &[bool]) -> usize {
    let idx = |i: usize, j: usize, k: usize| i + n * (j + n * k);
    let mut seen = vec![false; fluid.len()];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..fluid.len() {
        if !fluid[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            let (i, j, k) = (c % n, (c / n) % n, c / (n * n));
            let neighbors = [
                idx((i + 1) % n, j, k),
                idx((i + n - 1) % n, j, k),
                idx(i, (j + 1) % n, k),
                idx(i, (j + n - 1) % n, k),
                idx(i, j, (k + 1) % n),
                idx(i, j, (k + n - 1) % n),
            ];
            for nb in neighbors {
                if fluid[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    components
}

/// Voxelizes `shape` on an `n^3` grid over `Y` by center sampling.
pub fn voxelize_cell(shape: &ObstacleShape, n: usize) -> Result<CellMask> {
    if n < 4 {
        return Err(Error::Validation {
            key: "cell.n".into(),
            message: format!("need at least 4 voxels per axis, got {n}"),
        });
    }
    shape.validate()?;
    let mut mask = CellMask::all_fluid(n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let y = mask.voxel_center(i, j, k);
                let idx = mask.index(i, j, k);
                mask.fluid[idx] = !shape.contains(y);
            }
        }
    }
    mask.validate()?;
    Ok(mask)
}

/// Parameters of the thin domain: horizontal extents of `omega`, plate
/// distance `epsilon` and microcell size `a_eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinDomainSpec {
    pub lx: f64,
    pub ly: f64,
    pub epsilon: f64,
    pub a_eps: f64,
    /// Microcell counts along each axis.
    pub cells: [usize; 3],
}

fn integer_ratio(axis: &'static str, length: f64, a_eps: f64) -> Result<usize> {
    let ratio = length / a_eps;
    let rounded = ratio.round();
    if !ratio.is_finite() || rounded < 1.0 || (ratio - rounded).abs() > TILING_TOLERANCE * ratio.max(1.0) {
        return Err(Error::NonIntegerTiling { axis, ratio });
    }
    Ok(rounded as usize)
}

impl ThinDomainSpec {
    pub fn new(lx: f64, ly: f64, epsilon: f64, a_eps: f64) -> Result<Self> {
        for (name, v) in [("Lx", lx), ("Ly", ly), ("epsilon", epsilon), ("a_eps", a_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDomain(format!("{name} must be positive, got {v}")));
            }
        }
        let cells = [
            integer_ratio("Lx", lx, a_eps)?,
            integer_ratio("Ly", ly, a_eps)?,
            integer_ratio("epsilon", epsilon, a_eps)?,
        ];
        if a_eps >= epsilon {
            return Err(Error::InvalidDomain(format!(
                "a_eps = {a_eps} must be smaller than epsilon = {epsilon}"
            )));
        }
        Ok(Self {
            lx,
            ly,
            epsilon,
            a_eps,
            cells,
        })
    }
}

/// The thin domain `Q_eps` voxelized with `n_c` voxels per microcell and axis,
/// with the obstacle copied into every microcell.
#[derive(Debug, Clone, PartialEq)]
pub struct PerforatedMask3D {
    pub spec: ThinDomainSpec,
    n_c: usize,
    dims: [usize; 3],
    fluid: Vec<bool>,
}

impl PerforatedMask3D {
    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// Voxel counts per axis.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Voxel edge length `a_eps / n_c`.
    pub fn h(&self) -> f64 {
        self.spec.a_eps / self.n_c as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn is_fluid(&self, i: usize, j: usize, k: usize) -> bool {
        self.fluid[self.index(i, j, k)]
    }

    /// Physical center of voxel `(i, j, k)` in `Q_eps`.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.h();
        [
            (i as f64 + 0.5) * h,
            (j as f64 + 0.5) * h,
            (k as f64 + 0.5) * h,
        ]
    }

    /// Microcell containing voxel `(i, j, k)` and the voxel's local index in
    /// the reference cell.
    pub fn microcell_of(&self, i: usize, j: usize, k: usize) -> ([usize; 3], [usize; 3]) {
        let nc = self.n_c;
        ([i / nc, j / nc, k / nc], [i % nc, j % nc, k % nc])
    }

    /// Maps a reference-cell point `y` of microcell `cell` to physical
    /// coordinates: `x = a_eps * (cell + 1/2) + a_eps * y`.
    pub fn physical_point(&self, cell: [usize; 3], y: [f64; 3]) -> [f64; 3] {
        let a = self.spec.a_eps;
        [
            a * (cell[0] as f64 + 0.5) + a * y[0],
            a * (cell[1] as f64 + 0.5) + a * y[1],
            a * (cell[2] as f64 + 0.5) + a * y[2],
        ]
    }

    /// Whether any voxel is solid.
    pub fn has_obstacles(&self) -> bool {
        self.fluid.iter().any(|f| !f)
    }
}

impl VoxelMask for PerforatedMask3D {
    fn fluid_labels(&self) -> &[bool] {
        &self.fluid
    }
}

/// Tiles `cell` over the microcell lattice of `spec`.
pub fn build_thin_domain(spec: &ThinDomainSpec, cell: &CellMask) -> Result<PerforatedMask3D> {
    let spec = ThinDomainSpec::new(spec.lx, spec.ly, spec.epsilon, spec.a_eps)?;
    let nc = cell.n();
    let dims = [spec.cells[0] * nc, spec.cells[1] * nc, spec.cells[2] * nc];
    let mut fluid = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                fluid.push(cell.is_fluid(i % nc, j % nc, k % nc));
            }
        }
    }
    let mask = PerforatedMask3D {
        spec,
        n_c: nc,
        dims,
        fluid,
    };
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let outer = i == 0 || j == 0 || k == 0 || i == dims[0] - 1 || j == dims[1] - 1 || k == dims[2] - 1;
                if outer && !mask.is_fluid(i, j, k) {
                    return Err(Error::ObstacleTouchesBoundary);
                }
            }
        }
    }
    Ok(mask)
}
