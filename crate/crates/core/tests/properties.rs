use permahom::cell_stokes::{dissipation, solution_mean_velocity, solve_cell_problem, Forcing};
use permahom::darcy2d::{solve_darcy_from, BodyForce2D};
use permahom::geometry::{build_thin_domain, voxelize_cell, CellMask, ObstacleShape, ThinDomainSpec, VoxelMask};
use permahom::mac::{dot, StaggeredGrid};
use permahom::permeability::{assemble, symmetric_eigenvalues, PermeabilityTensor};
use permahom::stokes::SolverConfig;
use permahom::unfolding::{fold, unfold, DilatedField};
use proptest::prelude::*;

fn cfg(tol: f64, nu: f64) -> SolverConfig {
    SolverConfig {
        tol_mom: tol,
        tol_div: tol,
        max_outer: 2000,
        max_inner: 5000,
        nu,
    }
}

fn shape() -> impl Strategy<Value = ObstacleShape> {
    prop_oneof![
        (0.1..0.4f64).prop_map(ObstacleShape::sphere),
        (0.1..0.35f64, 0.1..0.35f64, 0.1..0.35f64).prop_map(|(a, b, c)| ObstacleShape::axis_box([a, b, c])),
        (0.15..0.4f64, 0.15..0.4f64, 0.15..0.4f64, 1.5..4.0f64)
            .prop_map(|(a, b, c, p)| ObstacleShape::superellipsoid([a, b, c], p)),
    ]
}

fn cell(shape: &ObstacleShape, n: usize) -> Option<CellMask> {
    voxelize_cell(shape, n).ok().filter(|m| m.solid_count() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tiling_is_periodic(s in shape(), nc in 4usize..7, cx in 2usize..4, cy in 2usize..4) {
        let Some(c) = cell(&s, nc) else { return Ok(()) };
        let a = 0.125;
        let spec = ThinDomainSpec::new(cx as f64 * a, cy as f64 * a, 2.0 * a, a).unwrap();
        let m = build_thin_domain(&spec, &c).unwrap();
        let [nx, ny, nz] = m.dims();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    prop_assert_eq!(m.is_fluid(i, j, k), c.is_fluid(i % nc, j % nc, k % nc));
                    if i + nc < nx {
                        prop_assert_eq!(m.is_fluid(i, j, k), m.is_fluid(i + nc, j, k));
                    }
                }
            }
        }
    }

    #[test]
    fn centered_shapes_are_mirror_symmetric(s in shape(), n in 4usize..12) {
        let Some(c) = cell(&s, n) else { return Ok(()) };
        for axis in 0..3 {
            prop_assert_eq!(&c.reflected(axis), &c);
        }
    }

    #[test]
    fn gradient_is_minus_divergence_transpose(s in shape(), n in 4usize..9, seed in any::<u64>(), walled in any::<bool>()) {
        let Some(c) = cell(&s, n) else { return Ok(()) };
        let grid = if walled {
            let spec = ThinDomainSpec::new(0.25, 0.25, 0.25, 0.125).unwrap();
            StaggeredGrid::walled(&build_thin_domain(&spec, &c).unwrap())
        } else {
            StaggeredGrid::periodic(&c)
        };
        let layout = grid.layout();
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut u: Vec<f64> = (0..layout.velocity_len()).map(|_| next()).collect();
        grid.restrict_to_free(&mut u);
        let p: Vec<f64> = (0..layout.cell_count())
            .map(|c| if grid.fluid()[c] { next() } else { 0.0 })
            .collect();
        let mut gp = vec![0.0; u.len()];
        let mut bu = vec![0.0; p.len()];
        grid.apply_gradient(&p, &mut gp);
        grid.apply_divergence(&u, &mut bu);
        let lhs = dot(&gp, &u);
        let rhs = -dot(&p, &bu);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()) * layout.cell_count() as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn energy_identity_and_viscosity_scaling(r in 0.15..0.4f64, axis in 0usize..2) {
        let mask = voxelize_cell(&ObstacleShape::sphere(r), 8).unwrap();
        let forcing = if axis == 0 { Forcing::E1 } else { Forcing::E2 };
        let tol = 1e-10;
        let s1 = solve_cell_problem(&mask, forcing, &cfg(tol, 1.0)).unwrap();
        let mean = solution_mean_velocity(&s1)[axis];
        let energy = dissipation(&s1);
        prop_assert!((energy - mean).abs() <= 10.0 * tol * mean.abs().max(1.0));

        let s2 = solve_cell_problem(&mask, forcing, &cfg(tol, 2.0)).unwrap();
        let wmax = s1.velocity().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pmax = s1.pressure().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in s1.velocity().iter().zip(s2.velocity()) {
            prop_assert!((0.5 * a - b).abs() <= 1e-8 * wmax);
        }
        for (a, b) in s1.pressure().iter().zip(s2.pressure()) {
            prop_assert!((a - b).abs() <= 1e-8 * pmax);
        }
    }

    #[test]
    fn shifting_the_obstacle_shifts_the_solution(r in 0.15..0.4f64, sx in 0usize..8, sy in 0usize..8, sz in 0usize..8) {
        let n = 8;
        let base = voxelize_cell(&ObstacleShape::sphere(r), n).unwrap();
        let shift = [sx, sy, sz];
        let moved = base.shifted(shift);
        let c = cfg(1e-11, 1.0);
        let a = solve_cell_problem(&base, Forcing::E1, &c).unwrap();
        let b = solve_cell_problem(&moved, Forcing::E1, &c).unwrap();
        let layout = StaggeredGrid::periodic(&base).layout();
        let wmax = a.velocity().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for d in 0..3 {
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let to = [(i + sx) % n, (j + sy) % n, (k + sz) % n];
                        let va = a.velocity()[layout.face_index(d, [i, j, k])];
                        let vb = b.velocity()[layout.face_index(d, to)];
                        prop_assert!((va - vb).abs() <= 1e-9 * wmax);
                    }
                }
            }
        }
    }

    #[test]
    fn energy_tensor_is_symmetric(s in shape(), n in 6usize..10) {
        let Some(mask) = cell(&s, n) else { return Ok(()) };
        let c = cfg(1e-8, 1.0);
        let a = solve_cell_problem(&mask, Forcing::E1, &c).unwrap();
        let b = solve_cell_problem(&mask, Forcing::E2, &c).unwrap();
        let k = assemble(&a, &b).unwrap();
        let norm = k.k.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((k.k[0][1] - k.k[1][0]).abs() <= 1e-12 * norm);
    }

    #[test]
    fn darcy_pressure_is_unique_up_to_a_constant(
        k11 in 0.2..2.0f64, k22 in 0.2..2.0f64, t in -0.9..0.9f64,
        g in 6usize..20, seed in any::<u64>(),
    ) {
        let k12 = t * (k11 * k22).sqrt();
        let k = PermeabilityTensor::from_matrix([[k11, k12], [k12, k22]]);
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let samples: Vec<[f64; 2]> = (0..g * g).map(|_| [next(), next()]).collect();
        let guess: Vec<f64> = (0..g * g).map(|_| 10.0 * next()).collect();
        let f = BodyForce2D::from_samples(1.0, 1.3, g, g, samples).unwrap();
        let a = solve_darcy_from(&k, &f, g, g, None).unwrap();
        let b = solve_darcy_from(&k, &f, g, g, Some(&guess)).unwrap();
        let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
        let (ma, mb) = (mean(&a.p), mean(&b.p));
        for (x, y) in a.p.iter().zip(&b.p) {
            prop_assert!(((x - ma) - (y - mb)).abs() <= 1e-8);
        }
    }

    #[test]
    fn unfolding_is_linear_and_invertible(
        s in shape(), alpha in -3.0..3.0f64, beta in -3.0..3.0f64, seed in any::<u64>(),
    ) {
        let Some(c) = cell(&s, 4) else { return Ok(()) };
        let spec = ThinDomainSpec::new(0.5, 0.375, 0.25, 0.125).unwrap();
        let mask = build_thin_domain(&spec, &c).unwrap();
        let voxels: usize = mask.dims().iter().product();
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let f: Vec<f64> = (0..3 * voxels).map(|_| next()).collect();
        let g: Vec<f64> = (0..3 * voxels).map(|_| next()).collect();
        let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| alpha * x + beta * y).collect();
        let field = |v: Vec<f64>| DilatedField::on_mask(&mask, 3, v).unwrap();
        let (uf, ug, uc) = (
            unfold(&field(f.clone())).unwrap(),
            unfold(&field(g)).unwrap(),
            unfold(&field(comb)).unwrap(),
        );
        for ((a, b), c) in uf.values.iter().zip(&ug.values).zip(&uc.values) {
            prop_assert_eq!(alpha * a + beta * b, *c);
        }
        prop_assert_eq!(fold(&uf).unwrap(), field(f));
        prop_assert_eq!(&unfold(&fold(&uf).unwrap()).unwrap(), &uf);
    }

    #[test]
    fn periodic_fields_unfold_to_equal_blocks(seed in any::<u64>(), nc in 2usize..5) {
        let spec = ThinDomainSpec::new(0.5, 0.375, 0.25, 0.125).unwrap();
        let mask = build_thin_domain(&spec, &CellMask::all_fluid(nc)).unwrap();
        let [nx, ny, nz] = mask.dims();
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        // One value per (local x, local y, global z).
        let pattern: Vec<f64> = (0..nc * nc * nz).map(|_| next()).collect();
        let mut values = vec![0.0; nx * ny * nz];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values[i + nx * (j + ny * k)] = pattern[i % nc + nc * (j % nc + nc * k)];
                }
            }
        }
        let u = unfold(&DilatedField::on_mask(&mask, 1, values).unwrap()).unwrap();
        let cells = spec.cells;
        for kz in 0..cells[2] {
            for ky in 0..cells[1] {
                for kx in 0..cells[0] {
                    for z in 0..nc {
                        for y in 0..nc {
                            for x in 0..nc {
                                prop_assert_eq!(u.at([kx, ky, kz], [x, y, z]), u.at([0, 0, kz], [x, y, z]));
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn growing_the_obstacle_lowers_both_eigenvalues() {
    let c = cfg(1e-9, 1.0);
    let eig = |r: f64| {
        let mask = voxelize_cell(&ObstacleShape::sphere(r), 16).unwrap();
        let a = solve_cell_problem(&mask, Forcing::E1, &c).unwrap();
        let b = solve_cell_problem(&mask, Forcing::E2, &c).unwrap();
        symmetric_eigenvalues(&assemble(&a, &b).unwrap().k)
    };
    let (small, large) = (eig(0.2), eig(0.3));
    assert!(large[0] < small[0] && large[1] < small[1], "{small:?} -> {large:?}");
}
