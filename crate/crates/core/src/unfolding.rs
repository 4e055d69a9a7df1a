//! Dilatation and unfolding of fields on the thin domain.
//!
//! The dilatation `z_3 = x_3 / ε` maps `Q_ε` onto `ω × (0, 1)`; a microcell
//! becomes a box of size `a_ε × a_ε × a_ε/ε`. On a grid aligned with the
//! microcells every box is an `n_c³` block of voxels, so the unfolding
//! operator is a block copy: the block of cell `k` becomes the field on the
//! reference cell `Y` indexed by `k`.
//!
//! Microcell `k` occupies `a_ε k + (0, a_ε)³` in physical coordinates, i.e.
//! it is `Y_{k, a_ε}` shifted by `a_ε/2` along every axis. [`kappa`] works in
//! the unshifted lattice and [`DilatedField::lattice_point`] applies the
//! shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PerforatedMask3D, ThinDomainSpec, VoxelMask};

/// Distance to a cell face below which [`kappa`] refuses to decide.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// The index `k` with `x ∈ Y_{k, a_ε} = a_ε (k + Y)`, `Y = (-1/2, 1/2)³`.
pub fn kappa(point: [f64; 3], a_eps: f64) -> Result<[i64; 3]> {
    let mut k = [0i64; 3];
    for d in 0..3 {
        let t = point[d] / a_eps;
        let r = t.round();
        if a_eps * ((t - r).abs() - 0.5).abs() <= BOUNDARY_TOLERANCE {
            return Err(Error::OnCellBoundary { coordinate: point[d] });
        }
        k[d] = r as i64;
    }
    Ok(k)
}

/// [`kappa`] on dilated coordinates: `κ(x'/a_ε, ε z_3/a_ε)`.
pub fn kappa_dilated(point: [f64; 3], a_eps: f64, eps: f64) -> Result<[i64; 3]> {
    kappa([point[0], point[1], eps * point[2]], a_eps)
}

/// Samples on the voxel grid of `Ω̃_ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedField {
    pub spec: ThinDomainSpec,
    pub n_c: usize,
    /// 1 for scalars, 3 for vectors.
    pub components: usize,
    /// `components` values per voxel, voxels in `i + nx (j + ny k)` order.
    pub values: Vec<f64>,
    pub fluid: Vec<bool>,
    /// Set once solid values have been replaced by zero.
    pub extended_by_zero: bool,
}

impl DilatedField {
    pub fn new(spec: ThinDomainSpec, n_c: usize, components: usize, values: Vec<f64>, fluid: Vec<bool>) -> Result<Self> {
        if n_c == 0 || components == 0 {
            return Err(Error::MisalignedGrid("n_c and the component count must be positive".into()));
        }
        let voxels = spec.cells.iter().map(|c| c * n_c).product::<usize>();
        if fluid.len() != voxels || values.len() != voxels * components {
            return Err(Error::MisalignedGrid(format!(
                "expected {voxels} voxels of {components} components for {:?} cells of {n_c}^3, got {} values and {} labels",
                spec.cells,
                values.len(),
                fluid.len()
            )));
        }
        Ok(Self {
            spec,
            n_c,
            components,
            values,
            fluid,
            extended_by_zero: false,
        })
    }

    /// A field on the voxels of a perforated mask.
    pub fn on_mask(mask: &PerforatedMask3D, components: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(mask.spec, mask.n_c(), components, values, mask.fluid_labels().to_vec())
    }

    pub fn dims(&self) -> [usize; 3] {
        let c = self.spec.cells;
        [c[0] * self.n_c, c[1] * self.n_c, c[2] * self.n_c]
    }

    /// Horizontal and vertical voxel sizes: `a_ε/n_c` and `(a_ε/ε)/n_c`.
    pub fn spacing(&self) -> [f64; 3] {
        let h = self.spec.a_eps / self.n_c as f64;
        [h, h, h / self.spec.epsilon]
    }

    #[inline]
    pub fn voxel_index(&self, v: [usize; 3]) -> usize {
        let d = self.dims();
        v[0] + d[0] * (v[1] + d[1] * v[2])
    }

    /// Center of voxel `v` in dilated coordinates `(x', z_3)`.
    pub fn voxel_center(&self, v: [usize; 3]) -> [f64; 3] {
        let h = self.spacing();
        [
            (v[0] as f64 + 0.5) * h[0],
            (v[1] as f64 + 0.5) * h[1],
            (v[2] as f64 + 0.5) * h[2],
        ]
    }

    /// Dilated point moved into the lattice of [`kappa`].
    pub fn lattice_point(&self, x: [f64; 3]) -> [f64; 3] {
        let a = self.spec.a_eps;
        [x[0] - 0.5 * a, x[1] - 0.5 * a, x[2] - 0.5 * a / self.spec.epsilon]
    }

    /// Zeroes every solid voxel.
    pub fn extend_by_zero(mut self) -> Self {
        let c = self.components;
        for (v, fluid) in self.fluid.iter().enumerate() {
            if !fluid {
                self.values[v * c..(v + 1) * c].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        self.extended_by_zero = true;
        self
    }

    fn check_aligned(&self) -> Result<()> {
        let voxels = self.dims().iter().product::<usize>();
        if self.values.len() != voxels * self.components || self.fluid.len() != voxels {
            return Err(Error::MisalignedGrid("field storage does not match the cell tiling".into()));
        }
        Ok(())
    }
}

/// Samples indexed by microcell `k` and reference-cell voxel `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedField {
    pub spec: ThinDomainSpec,
    pub n_c: usize,
    pub components: usize,
    /// Block of cell `k` at `cell_index(k) * n_c³`, voxels of `Y` inside a
    /// block in `i + n_c (j + n_c k)` order.
    pub values: Vec<f64>,
    pub fluid: Vec<bool>,
    pub extended_by_zero: bool,
}

impl UnfoldedField {
    #[inline]
    pub fn cell_index(&self, k: [usize; 3]) -> usize {
        let c = self.spec.cells;
        k[0] + c[0] * (k[1] + c[1] * k[2])
    }

    /// Values of cell `k` at reference voxel `y`.
    pub fn at(&self, k: [usize; 3], y: [usize; 3]) -> &[f64] {
        let n = self.n_c;
        let v = self.cell_index(k) * n * n * n + y[0] + n * (y[1] + n * y[2]);
        &self.values[v * self.components..(v + 1) * self.components]
    }

    pub fn cell_count(&self) -> usize {
        self.spec.cells.iter().product()
    }
}

/// Pairs `(dilated voxel, unfolded slot)` of the block copy.
fn block_map(spec: &ThinDomainSpec, n_c: usize) -> impl Iterator<Item = (usize, usize)> {
    let cells = spec.cells;
    let dims = [cells[0] * n_c, cells[1] * n_c, cells[2] * n_c];
    let n3 = n_c * n_c * n_c;
    (0..dims[2]).flat_map(move |k| {
        (0..dims[1]).flat_map(move |j| {
            (0..dims[0]).map(move |i| {
                let cell = [i / n_c, j / n_c, k / n_c];
                let local = [i % n_c, j % n_c, k % n_c];
                let c = cell[0] + cells[0] * (cell[1] + cells[1] * cell[2]);
                let slot = c * n3 + local[0] + n_c * (local[1] + n_c * local[2]);
                (i + dims[0] * (j + dims[1] * k), slot)
            })
        })
    })
}

pub fn unfold(field: &DilatedField) -> Result<UnfoldedField> {
    field.check_aligned()?;
    let c = field.components;
    let mut values = vec![0.0; field.values.len()];
    let mut fluid = vec![false; field.fluid.len()];
    for (v, s) in block_map(&field.spec, field.n_c) {
        values[s * c..(s + 1) * c].copy_from_slice(&field.values[v * c..(v + 1) * c]);
        fluid[s] = field.fluid[v];
    }
    Ok(UnfoldedField {
        spec: field.spec,
        n_c: field.n_c,
        components: c,
        values,
        fluid,
        extended_by_zero: field.extended_by_zero,
    })
}

/// Inverse of [`unfold`].
pub fn fold(field: &UnfoldedField) -> Result<DilatedField> {
    let c = field.components;
    let slots = field.cell_count() * field.n_c.pow(3);
    if field.values.len() != slots * c || field.fluid.len() != slots {
        return Err(Error::MisalignedGrid("unfolded storage does not match the cell tiling".into()));
    }
    let mut values = vec![0.0; field.values.len()];
    let mut fluid = vec![false; field.fluid.len()];
    for (v, s) in block_map(&field.spec, field.n_c) {
        values[v * c..(v + 1) * c].copy_from_slice(&field.values[s * c..(s + 1) * c]);
        fluid[v] = field.fluid[s];
    }
    let mut out = DilatedField::new(field.spec, field.n_c, c, values, fluid)?;
    out.extended_by_zero = field.extended_by_zero;
    Ok(out)
}

/// Both sides of the three norm identities and their relative defects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormIdentityReport {
    /// `‖φ̂‖` and `‖φ̃‖`.
    pub norm: [f64; 2],
    /// `‖D_{y'} φ̂‖` and `a_ε ‖D_{x'} φ̃‖`.
    pub horizontal: [f64; 2],
    /// `‖∂_{y_3} φ̂‖` and `(a_ε/ε) ‖∂_{z_3} φ̃‖`.
    pub vertical: [f64; 2],
    pub identity_a_defect: f64,
    pub identity_b_defect: f64,
    pub identity_c_defect: f64,
}

impl NormIdentityReport {
    pub fn max_defect(&self) -> f64 {
        self.identity_a_defect.max(self.identity_b_defect).max(self.identity_c_defect)
    }
}

fn defect(pair: [f64; 2]) -> f64 {
    let scale = pair[0].abs().max(pair[1].abs());
    if scale == 0.0 {
        0.0
    } else {
        (pair[0] - pair[1]).abs() / scale
    }
}

/// Sum of squared forward differences along `axis` of the dilated field,
/// over pairs inside one microcell, divided by `step²`.
fn dilated_difference_sum(field: &DilatedField, axis: usize, step: f64) -> f64 {
    let dims = field.dims();
    let c = field.components;
    let n = field.n_c;
    let mut sum = 0.0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = [i, j, k];
                if v[axis] % n == n - 1 {
                    continue;
                }
                let mut w = v;
                w[axis] += 1;
                let (a, b) = (field.voxel_index(v), field.voxel_index(w));
                for comp in 0..c {
                    let d = (field.values[b * c + comp] - field.values[a * c + comp]) / step;
                    sum += d * d;
                }
            }
        }
    }
    sum
}

/// The same sum for the unfolded field, differencing in `y` inside blocks.
fn unfolded_difference_sum(field: &UnfoldedField, axis: usize) -> f64 {
    let n = field.n_c;
    let c = field.components;
    let step = 1.0 / n as f64;
    let cells = field.spec.cells;
    let mut sum = 0.0;
    for kz in 0..cells[2] {
        for ky in 0..cells[1] {
            for kx in 0..cells[0] {
                let k = [kx, ky, kz];
                for z in 0..n {
                    for y in 0..n {
                        for x in 0..n {
                            let a = [x, y, z];
                            if a[axis] == n - 1 {
                                continue;
                            }
                            let mut b = a;
                            b[axis] += 1;
                            let (va, vb) = (field.at(k, a), field.at(k, b));
                            for comp in 0..c {
                                let d = (vb[comp] - va[comp]) / step;
                                sum += d * d;
                            }
                        }
                    }
                }
            }
        }
    }
    sum
}

/// Checks the three unfolding identities with midpoint quadrature: every
/// voxel of `Ω̃_ε` and every `(k, y)` slot carries the weight
/// `a_ε³ / (ε n_c³)`.
pub fn verify_norm_identities(field: &DilatedField) -> Result<NormIdentityReport> {
    field.check_aligned()?;
    let unfolded = unfold(field)?;
    let a = field.spec.a_eps;
    let eps = field.spec.epsilon;
    let weight = a * a * a / (eps * field.n_c.pow(3) as f64);
    let h = field.spacing();

    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let norm = [(weight * sq(&unfolded.values)).sqrt(), (weight * sq(&field.values)).sqrt()];

    let hy = unfolded_difference_sum(&unfolded, 0) + unfolded_difference_sum(&unfolded, 1);
    let hx = dilated_difference_sum(field, 0, h[0]) + dilated_difference_sum(field, 1, h[1]);
    let horizontal = [(weight * hy).sqrt(), a * (weight * hx).sqrt()];

    let vy = unfolded_difference_sum(&unfolded, 2);
    let vz = dilated_difference_sum(field, 2, h[2]);
    let vertical = [(weight * vy).sqrt(), (a / eps) * (weight * vz).sqrt()];

    Ok(NormIdentityReport {
        norm,
        horizontal,
        vertical,
        identity_a_defect: defect(norm),
        identity_b_defect: defect(horizontal),
        identity_c_defect: defect(vertical),
    })
}

/// Worst defects over a batch of random fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub identity_a_defect: f64,
    pub identity_b_defect: f64,
    pub identity_c_defect: f64,
    pub trials: usize,
    pub max_defect: f64,
    /// Whether `fold(unfold(f)) == f` held bit for bit in every trial.
    pub round_trip_exact: bool,
}

/// Uniform random vector field on `[-1, 1]`, extended by zero on `mask`'s
/// solid voxels.
pub fn random_field(mask: &PerforatedMask3D, rng: &mut impl Rng) -> Result<DilatedField> {
    let voxels = mask.dims().iter().product::<usize>();
    let values = (0..3 * voxels).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Ok(DilatedField::on_mask(mask, 3, values)?.extend_by_zero())
}

/// Runs the identity checks on `trials` random fields from a seeded
/// generator.
pub fn random_trials(mask: &PerforatedMask3D, trials: usize, seed: u64) -> Result<TrialSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TrialSummary {
        identity_a_defect: 0.0,
        identity_b_defect: 0.0,
        identity_c_defect: 0.0,
        trials,
        max_defect: 0.0,
        round_trip_exact: true,
    };
    for _ in 0..trials {
        let field = random_field(mask, &mut rng)?;
        let r = verify_norm_identities(&field)?;
        out.identity_a_defect = out.identity_a_defect.max(r.identity_a_defect);
        out.identity_b_defect = out.identity_b_defect.max(r.identity_b_defect);
        out.identity_c_defect = out.identity_c_defect.max(r.identity_c_defect);
        out.round_trip_exact &= fold(&unfold(&field)?)? == field;
    }
    out.max_defect = out.identity_a_defect.max(out.identity_b_defect).max(out.identity_c_defect);
    Ok(out)
}
