//! Dense reference solver for the staggered Stokes system, assembled entry by
//! entry from the voxel labels and factorized with LU.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Walls {
    Periodic,
    NoSlip,
}

pub struct DenseSolution {
    /// Face velocities, components concatenated, zero on constrained faces.
    pub velocity: Vec<f64>,
    /// Cell pressures with zero mean over fluid cells, zero in solid.
    pub pressure: Vec<f64>,
}

fn face_dims(dims: [usize; 3], walls: Walls, d: usize) -> [usize; 3] {
    let mut fd = dims;
    if walls == Walls::NoSlip {
        fd[d] += 1;
    }
    fd
}

/// `-ν Δ_h u + ∇_h p = f`, `div_h u = 0`, `Σ p = 0` on the fluid cells.
/// `fluid` is in `i + nx (j + ny k)` order; `force` has one entry per face.
pub fn dense_stokes(dims: [usize; 3], walls: Walls, h: f64, nu: f64, fluid: &[bool], force: &[f64]) -> DenseSolution {
    let [nx, ny, _] = dims;
    let cell = |c: [usize; 3]| c[0] + nx * (c[1] + ny * c[2]);
    let mut offsets = [0usize; 3];
    let mut total = 0;
    for (d, off) in offsets.iter_mut().enumerate() {
        *off = total;
        let fd = face_dims(dims, walls, d);
        total += fd[0] * fd[1] * fd[2];
    }
    assert_eq!(force.len(), total);
    let face = |d: usize, f: [usize; 3]| {
        let fd = face_dims(dims, walls, d);
        offsets[d] + f[0] + fd[0] * (f[1] + fd[1] * f[2])
    };
    // Cells on either side of a face; `None` past a wall.
    let sides = |d: usize, f: [usize; 3]| -> (Option<[usize; 3]>, Option<[usize; 3]>) {
        let n = dims[d];
        let mut lo = f;
        match walls {
            Walls::Periodic => {
                lo[d] = (f[d] + n - 1) % n;
                (Some(lo), Some(f))
            }
            Walls::NoSlip => {
                let l = (f[d] > 0).then(|| {
                    lo[d] = f[d] - 1;
                    lo
                });
                let u = (f[d] < n).then_some(f);
                (l, u)
            }
        }
    };
    let is_free = |d: usize, f: [usize; 3]| match sides(d, f) {
        (Some(a), Some(b)) => fluid[cell(a)] && fluid[cell(b)],
        _ => false,
    };

    let mut vel_id = vec![usize::MAX; total];
    let mut faces = Vec::new();
    for d in 0..3 {
        let fd = face_dims(dims, walls, d);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if is_free(d, [i, j, k]) {
                        vel_id[face(d, [i, j, k])] = faces.len();
                        faces.push((d, [i, j, k]));
                    }
                }
            }
        }
    }
    let ncell = fluid.len();
    let mut p_id = vec![usize::MAX; ncell];
    let mut cells = Vec::new();
    for (c, &fl) in fluid.iter().enumerate() {
        if fl {
            p_id[c] = faces.len() + cells.len();
            cells.push(c);
        }
    }
    let m = faces.len() + cells.len() + 1;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let inv_h2 = nu / (h * h);
    for (r, &(d, f)) in faces.iter().enumerate() {
        b[r] = force[face(d, f)];
        a[(r, r)] += 6.0 * inv_h2;
        for e in 0..3 {
            let fd = face_dims(dims, walls, d);
            for step in [-1i64, 1] {
                let pos = f[e] as i64 + step;
                let inside = pos >= 0 && pos < fd[e] as i64;
                let target = if inside {
                    Some(pos as usize)
                } else if walls == Walls::Periodic {
                    Some(pos.rem_euclid(fd[e] as i64) as usize)
                } else {
                    None
                };
                match target {
                    Some(t) => {
                        let mut g = f;
                        g[e] = t;
                        let id = vel_id[face(d, g)];
                        if id != usize::MAX {
                            a[(r, id)] -= inv_h2;
                        }
                    }
                    // Mirror ghost across the wall: u_ghost = -u.
                    None => a[(r, r)] += inv_h2,
                }
            }
        }
        let (lo, hi) = sides(d, f);
        a[(r, p_id[cell(hi.unwrap())])] += 1.0 / h;
        a[(r, p_id[cell(lo.unwrap())])] -= 1.0 / h;
    }
    for (q, &c) in cells.iter().enumerate() {
        let row = faces.len() + q;
        let ci = [c % nx, (c / nx) % ny, c / (nx * ny)];
        for d in 0..3 {
            let mut up = ci;
            up[d] += 1;
            if walls == Walls::Periodic {
                up[d] %= dims[d];
            }
            for (f, sign) in [(ci, -1.0), (up, 1.0)] {
                let id = vel_id[face(d, f)];
                if id != usize::MAX {
                    a[(row, id)] += sign / h;
                }
            }
        }
        a[(row, m - 1)] = 1.0;
        a[(m - 1, row)] = 1.0;
    }
    let x = a.lu().solve(&b).expect("saddle-point system is nonsingular");
    let mut velocity = vec![0.0; total];
    for (idx, &id) in vel_id.iter().enumerate() {
        if id != usize::MAX {
            velocity[idx] = x[id];
        }
    }
    let mut pressure = vec![0.0; ncell];
    for (c, &id) in p_id.iter().enumerate() {
        if id != usize::MAX {
            pressure[c] = x[id];
        }
    }
    DenseSolution { velocity, pressure }
}

/// Subtracts the fluid-cell mean.
pub fn centered(p: &[f64], fluid: &[bool]) -> Vec<f64> {
    let (s, n) = p
        .iter()
        .zip(fluid)
        .filter(|(_, &f)| f)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    let mean = s / n as f64;
    p.iter().zip(fluid).map(|(v, &f)| if f { v - mean } else { 0.0 }).collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
