//! Stage orchestration with file handoff and the run manifest.
//!
//! Every stage writes into its own directory under the output root and reads
//! only files produced by earlier stages (plus the configuration).
//!
//! | stage           | reads                    | writes                                   |
//! |-----------------|--------------------------|------------------------------------------|
//! | `cell`          | config                   | `cell/cell_e{1,2}.csv`, report, VTK      |
//! | `k`             | `cell/`                  | `k/K.csv`                                |
//! | `darcy`         | `k/K.csv`                | `darcy/{p,U}.csv`, `darcy/run_<i>/`      |
//! | `dns`           | config (`k/` if needed)  | `dns/run_<i>/{columns,summary}.csv`, VTK |
//! | `compare`       | `dns/`, `darcy/run_<i>/` | `compare/report.csv`, `compare/scaling.csv` |
//! | `verify-unfold` | config                   | `verify-unfold/unfold_report.csv`        |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell_stokes::{solution_mean_velocity, solve_both, CellSolution, Forcing};
use crate::config::{RunConfig, Stage};
use crate::darcy2d::{solve_darcy, BodyForce2D, DarcySolution};
use crate::dns_thin::{audit_rows, compare_columns, solve_dns, ColumnSummary, Comparison, DnsSolution};
use crate::error::{Error, Result};
use crate::geometry::{build_thin_domain, voxelize_cell, CellMask, ThinDomainSpec};
use crate::io::{fmt_f64, read_csv, write_atomic, write_csv, write_vtk, CellData, Table};
use crate::mac::{MacField, StaggeredGrid};
use crate::permeability::{assemble, certify, Matrix2, PermeabilityTensor};
use crate::unfolding::random_trials;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Largest tolerated unfolding identity defect.
pub const UNFOLD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// `ok` or `failed`.
    pub status: String,
    pub seconds: f64,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_stage: Option<String>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `cfg.stages` in order.
pub fn run_pipeline(cfg: &RunConfig, config_bytes: &[u8], out: &Path) -> Result<RunManifest> {
    run_stages(cfg, config_bytes, out, &cfg.stages)
}

/// Runs the given stages in canonical order and updates the manifest in
/// `out`. On failure the manifest records the failing stage, earlier outputs
/// stay on disk, and the stage error is returned.
pub fn run_stages(cfg: &RunConfig, config_bytes: &[u8], out: &Path, stages: &[Stage]) -> Result<RunManifest> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    for &st in &stages {
        crate::config::require(cfg, st)?;
    }
    fs::create_dir_all(out)?;
    let config_hash = sha256_hex(config_bytes);
    let mut manifest = match RunManifest::load(out) {
        Ok(m) if m.config_hash == config_hash => m,
        _ => RunManifest {
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            stages: Vec::new(),
            failed_stage: None,
            files: Vec::new(),
        },
    };
    manifest.failed_stage = None;

    let mut failure = None;
    for st in stages {
        info!("stage {} started", st.name());
        let start = Instant::now();
        let result = run_stage(cfg, out, st);
        let seconds = start.elapsed().as_secs_f64();
        let record = match &result {
            Ok(residuals) => StageRecord {
                name: st.name().into(),
                status: "ok".into(),
                seconds,
                residuals: residuals.clone(),
                error: None,
            },
            Err(e) => StageRecord {
                name: st.name().into(),
                status: "failed".into(),
                seconds,
                residuals: BTreeMap::new(),
                error: Some(e.to_string()),
            },
        };
        manifest.stages.retain(|s| s.name != record.name);
        manifest.stages.push(record);
        manifest
            .stages
            .sort_by_key(|s| Stage::parse(&s.name).map(|x| x as usize).unwrap_or(usize::MAX));
        if let Err(e) = result {
            info!("stage {} failed: {e}", st.name());
            manifest.failed_stage = Some(st.name().into());
            failure = Some(e);
            break;
        }
        info!("stage {} finished in {seconds:.2} s", st.name());
    }

    manifest.files = inventory(out)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join(MANIFEST_FILE), json.as_bytes())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn inventory(out: &Path) -> Result<Vec<FileEntry>> {
    let mut files = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(out).expect("inside out").to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE || rel.ends_with(".tmp") {
                continue;
            }
            let bytes = fs::read(&path)?;
            files.push(FileEntry {
                path: rel,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

type Residuals = BTreeMap<String, f64>;

fn run_stage(cfg: &RunConfig, out: &Path, st: Stage) -> Result<Residuals> {
    let dir = out.join(st.name());
    fs::create_dir_all(&dir)?;
    match st {
        Stage::Cell => stage_cell(cfg, &dir),
        Stage::K => stage_k(cfg, out, &dir),
        Stage::Darcy => stage_darcy(cfg, out, &dir),
        Stage::Dns => stage_dns(cfg, out, &dir),
        Stage::Compare => stage_compare(out, &dir),
        Stage::VerifyUnfold => stage_unfold(cfg, &dir),
    }
}

fn cell_mask(cfg: &RunConfig, n: usize) -> Result<CellMask> {
    let shape = cfg.shape.as_ref().ok_or_else(|| Error::Validation {
        key: "shape.kind".into(),
        message: "no obstacle configured".into(),
    })?;
    voxelize_cell(shape, n)
}

fn run_dirs(cfg: &RunConfig) -> Result<Vec<(String, ThinDomainSpec)>> {
    let domain = cfg.domain.as_ref().ok_or_else(|| Error::Validation {
        key: "domain.a_eps".into(),
        message: "no domain configured".into(),
    })?;
    Ok(domain
        .specs()?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("run_{i}"), s))
        .collect())
}

fn missing(path: &Path, stage: &str) -> Error {
    Error::Validation {
        key: format!("stage.{stage}"),
        message: format!("{} not found; run stage `{stage}` first", path.display()),
    }
}

fn read_upstream(path: &Path, stage: &str) -> Result<Table> {
    if !path.exists() {
        return Err(missing(path, stage));
    }
    read_csv(path)
}

// ---- cell -------------------------------------------------------------

const CELL_HEADER: [&str; 9] = [
    "i",
    "n",
    "outer_iterations",
    "inner_iterations",
    "momentum_residual",
    "div_residual",
    "mean_velocity_x",
    "mean_velocity_y",
    "mean_velocity_z",
];

fn stage_cell(cfg: &RunConfig, dir: &Path) -> Result<Residuals> {
    let mask = cell_mask(cfg, cfg.cell_n)?;
    let (s1, s2) = solve_both(&mask, &cfg.solver)?;
    let mut report = Vec::new();
    let mut res = Residuals::new();
    for sol in [&s1, &s2] {
        let i = sol.forcing.index();
        let m = solution_mean_velocity(sol);
        report.push(vec![
            i.to_string(),
            cfg.cell_n.to_string(),
            sol.outer_iterations.to_string(),
            sol.inner_iterations.to_string(),
            fmt_f64(sol.momentum_residual),
            fmt_f64(sol.div_residual),
            fmt_f64(m[0]),
            fmt_f64(m[1]),
            fmt_f64(m[2]),
        ]);
        res.insert(format!("e{i}.momentum_residual"), sol.momentum_residual);
        res.insert(format!("e{i}.div_residual"), sol.div_residual);
        write_cell_solution(&dir.join(format!("cell_e{i}.csv")), sol)?;
        let n = mask.n();
        write_vtk(
            &dir.join(format!("cell_e{i}.vtk")),
            &format!("cell problem e{i}"),
            [n; 3],
            [-0.5; 3],
            [mask.h(); 3],
            &[
                CellData::Scalar("fluid", &fluid_indicator(&mask)),
                CellData::Vector("w", &sol.field.cell_centered_velocity()),
                CellData::Scalar("pi", sol.pressure()),
            ],
        )?;
    }
    write_csv(&dir.join("cell_report.csv"), &CELL_HEADER, &report)?;
    Ok(res)
}

fn fluid_indicator(mask: &CellMask) -> Vec<f64> {
    let n = mask.n();
    let mut v = vec![0.0; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if mask.is_fluid(i, j, k) {
                    v[mask.index(i, j, k)] = 1.0;
                }
            }
        }
    }
    v
}

fn write_cell_solution(path: &Path, sol: &CellSolution) -> Result<()> {
    let mut rows = Vec::with_capacity(sol.field.velocity.len() + sol.field.pressure.len());
    for (name, values) in [("w", &sol.field.velocity), ("pi", &sol.field.pressure)] {
        for (idx, v) in values.iter().enumerate() {
            rows.push(vec![name.to_string(), idx.to_string(), fmt_f64(*v)]);
        }
    }
    write_csv(path, &["array", "index", "value"], &rows)
}

/// Rebuilds a cell solution from `cell_e<i>.csv` and `cell_report.csv`.
pub fn read_cell_solution(cell_dir: &Path, mask: &CellMask, forcing: Forcing, nu: f64) -> Result<CellSolution> {
    let report = read_upstream(&cell_dir.join("cell_report.csv"), "cell")?;
    let i = forcing.index();
    let row = (0..report.rows.len())
        .find(|&r| report.usize_at(r, "i").ok() == Some(i))
        .ok_or_else(|| missing(&cell_dir.join("cell_report.csv"), "cell"))?;
    let n = report.usize_at(row, "n")?;
    if n != mask.n() {
        return Err(Error::GridMismatch(format!(
            "cell outputs are for n = {n}, configuration asks for n = {}",
            mask.n()
        )));
    }
    let grid = StaggeredGrid::periodic(mask);
    let mut field = MacField::zeros(grid.layout(), grid.h());
    let table = read_upstream(&cell_dir.join(format!("cell_e{i}.csv")), "cell")?;
    let (ca, ci) = (table.column("array")?, table.column("index")?);
    let mut seen = 0usize;
    for (r, row_vals) in table.rows.iter().enumerate() {
        let idx = table.usize_at(r, "index")?;
        let value = table.f64_at(r, "value")?;
        let target = match row_vals[ca].as_str() {
            "w" => &mut field.velocity,
            "pi" => &mut field.pressure,
            other => {
                return Err(Error::Parse {
                    path: table.path.display().to_string(),
                    line: r + 2,
                    message: format!("unknown array `{other}`"),
                })
            }
        };
        let slot = target.get_mut(idx).ok_or_else(|| Error::Parse {
            path: table.path.display().to_string(),
            line: r + 2,
            message: format!("index {} out of range", row_vals[ci]),
        })?;
        *slot = value;
        seen += 1;
    }
    if seen != field.velocity.len() + field.pressure.len() {
        return Err(Error::GridMismatch(format!(
            "{} holds {seen} values, expected {}",
            table.path.display(),
            field.velocity.len() + field.pressure.len()
        )));
    }
    Ok(CellSolution {
        mask: mask.clone(),
        forcing,
        field,
        nu,
        momentum_residual: report.f64_at(row, "momentum_residual")?,
        div_residual: report.f64_at(row, "div_residual")?,
        outer_iterations: report.usize_at(row, "outer_iterations")?,
        inner_iterations: report.usize_at(row, "inner_iterations")?,
        history: Vec::new(),
    })
}

// ---- k ----------------------------------------------------------------

const K_HEADER: [&str; 16] = [
    "n",
    "nu",
    "K11",
    "K12",
    "K21",
    "K22",
    "K_alt11",
    "K_alt12",
    "K_alt21",
    "K_alt22",
    "lambda_min",
    "lambda_max",
    "consistency_gap",
    "asymmetry",
    "symmetry_defect",
    "certified",
];

fn stage_k(cfg: &RunConfig, out: &Path, dir: &Path) -> Result<Residuals> {
    let mask = cell_mask(cfg, cfg.cell_n)?;
    let cell_dir = out.join(Stage::Cell.name());
    let s1 = read_cell_solution(&cell_dir, &mask, Forcing::E1, cfg.solver.nu)?;
    let s2 = read_cell_solution(&cell_dir, &mask, Forcing::E2, cfg.solver.nu)?;
    let k = assemble(&s1, &s2)?;
    let cert = certify(&k)?;
    let row = vec![
        k.n.to_string(),
        fmt_f64(k.nu),
        fmt_f64(k.k[0][0]),
        fmt_f64(k.k[0][1]),
        fmt_f64(k.k[1][0]),
        fmt_f64(k.k[1][1]),
        fmt_f64(k.k_alt[0][0]),
        fmt_f64(k.k_alt[0][1]),
        fmt_f64(k.k_alt[1][0]),
        fmt_f64(k.k_alt[1][1]),
        fmt_f64(cert.eigenvalues[0]),
        fmt_f64(cert.eigenvalues[1]),
        fmt_f64(k.consistency_gap),
        fmt_f64(k.asymmetry),
        fmt_f64(cert.symmetry_defect),
        "true".to_string(),
    ];
    write_csv(&dir.join("K.csv"), &K_HEADER, &[row])?;
    let mut res = Residuals::new();
    res.insert("consistency_gap".into(), k.consistency_gap);
    res.insert("lambda_min".into(), cert.eigenvalues[0]);
    Ok(res)
}

/// Reads `K.csv` written by the `k` stage.
pub fn read_k(path: &Path) -> Result<PermeabilityTensor> {
    let t = read_upstream(path, "k")?;
    let m = |a: &str, b: &str, c: &str, d: &str| -> Result<Matrix2> {
        Ok([[t.f64_at(0, a)?, t.f64_at(0, b)?], [t.f64_at(0, c)?, t.f64_at(0, d)?]])
    };
    Ok(PermeabilityTensor {
        k: m("K11", "K12", "K21", "K22")?,
        k_alt: m("K_alt11", "K_alt12", "K_alt21", "K_alt22")?,
        nu: t.f64_at(0, "nu")?,
        n: t.usize_at(0, "n")?,
        consistency_gap: t.f64_at(0, "consistency_gap")?,
        asymmetry: t.f64_at(0, "asymmetry")?,
    })
}

// ---- darcy ------------------------------------------------------------

fn darcy_extent(cfg: &RunConfig) -> (f64, f64) {
    cfg.domain.as_ref().map(|d| (d.lx, d.ly)).unwrap_or((1.0, 1.0))
}

fn stage_darcy(cfg: &RunConfig, out: &Path, dir: &Path) -> Result<Residuals> {
    let k = read_k(&out.join(Stage::K.name()).join("K.csv"))?;
    let descriptor = cfg.force.descriptor(&k.k);
    let (lx, ly) = darcy_extent(cfg);
    let [gx, gy] = cfg.darcy_grid;
    let f = BodyForce2D::from_descriptor(descriptor.clone(), lx, ly, gx, gy)?;
    let sol = solve_darcy(&k, &f, gx, gy)?;
    write_darcy(dir, &sol)?;
    let mut res = Residuals::new();
    res.insert("flux_residual".into(), sol.flux_residual);

    if cfg.domain.is_some() {
        for (name, spec) in run_dirs(cfg)? {
            let [cx, cy, _] = spec.cells;
            let f = BodyForce2D::from_descriptor(descriptor.clone(), spec.lx, spec.ly, cx, cy)?;
            let sol = solve_darcy(&k, &f, cx, cy)?;
            let run = dir.join(&name);
            fs::create_dir_all(&run)?;
            write_darcy(&run, &sol)?;
            res.insert(format!("{name}.flux_residual"), sol.flux_residual);
        }
    }
    Ok(res)
}

fn write_darcy(dir: &Path, sol: &DarcySolution) -> Result<()> {
    let mut p_rows = Vec::new();
    let mut u_rows = Vec::new();
    for j in 0..sol.gy {
        for i in 0..sol.gx {
            let c = i + sol.gx * j;
            let [x, y] = sol.cell_center(i, j);
            let base = [i.to_string(), j.to_string(), fmt_f64(x), fmt_f64(y)];
            let mut p = base.to_vec();
            p.push(fmt_f64(sol.p[c]));
            p_rows.push(p);
            let mut u = base.to_vec();
            u.extend([fmt_f64(sol.u[c][0]), fmt_f64(sol.u[c][1]), fmt_f64(0.0)]);
            u_rows.push(u);
        }
    }
    write_csv(&dir.join("p.csv"), &["i", "j", "x", "y", "p"], &p_rows)?;
    write_csv(&dir.join("U.csv"), &["i", "j", "x", "y", "U1", "U2", "U3"], &u_rows)?;
    let k = sol.k;
    write_csv(
        &dir.join("darcy_summary.csv"),
        &["gx", "gy", "Lx", "Ly", "K11", "K12", "K21", "K22", "flux_residual", "iterations"],
        &[vec![
            sol.gx.to_string(),
            sol.gy.to_string(),
            fmt_f64(sol.lx),
            fmt_f64(sol.ly),
            fmt_f64(k[0][0]),
            fmt_f64(k[0][1]),
            fmt_f64(k[1][0]),
            fmt_f64(k[1][1]),
            fmt_f64(sol.flux_residual),
            sol.iterations.to_string(),
        ]],
    )?;
    let [dx, dy] = sol.spacing();
    let u3: Vec<[f64; 3]> = sol.u.iter().map(|u| [u[0], u[1], 0.0]).collect();
    write_vtk(
        &dir.join("darcy.vtk"),
        "darcy",
        [sol.gx, sol.gy, 1],
        [0.0; 3],
        [dx, dy, dx.min(dy)],
        &[CellData::Scalar("p", &sol.p), CellData::Vector("U", &u3)],
    )
}

/// Reads a Darcy solution written by the `darcy` stage.
pub fn read_darcy(dir: &Path) -> Result<DarcySolution> {
    let s = read_upstream(&dir.join("darcy_summary.csv"), "darcy")?;
    let gx = s.usize_at(0, "gx")?;
    let gy = s.usize_at(0, "gy")?;
    let p_t = read_upstream(&dir.join("p.csv"), "darcy")?;
    let u_t = read_upstream(&dir.join("U.csv"), "darcy")?;
    let cells = gx * gy;
    if p_t.rows.len() != cells || u_t.rows.len() != cells {
        return Err(Error::GridMismatch(format!(
            "{} does not hold {gx} x {gy} cells",
            dir.display()
        )));
    }
    let mut p = vec![0.0; cells];
    let mut u = vec![[0.0; 2]; cells];
    for r in 0..cells {
        let c = p_t.usize_at(r, "i")? + gx * p_t.usize_at(r, "j")?;
        p[c] = p_t.f64_at(r, "p")?;
        let c = u_t.usize_at(r, "i")? + gx * u_t.usize_at(r, "j")?;
        u[c] = [u_t.f64_at(r, "U1")?, u_t.f64_at(r, "U2")?];
    }
    Ok(DarcySolution {
        gx,
        gy,
        lx: s.f64_at(0, "Lx")?,
        ly: s.f64_at(0, "Ly")?,
        k: [
            [s.f64_at(0, "K11")?, s.f64_at(0, "K12")?],
            [s.f64_at(0, "K21")?, s.f64_at(0, "K22")?],
        ],
        p,
        u,
        flux_residual: s.f64_at(0, "flux_residual")?,
        iterations: s.usize_at(0, "iterations")?,
    })
}

// ---- dns --------------------------------------------------------------

const SUMMARY_HEADER: [&str; 14] = [
    "a_eps",
    "epsilon",
    "Lx",
    "Ly",
    "n_c",
    "nu",
    "has_obstacles",
    "ratio_u",
    "ratio_Du",
    "momentum_residual",
    "div_residual",
    "outer_iterations",
    "inner_iterations",
    "unknowns",
];

fn stage_dns(cfg: &RunConfig, out: &Path, dir: &Path) -> Result<Residuals> {
    let domain = cfg.domain.as_ref().expect("checked by require");
    let cell = cell_mask(cfg, domain.n_c)?;
    let k = match cfg.force {
        crate::config::ForceKind::Manufactured => read_k(&out.join(Stage::K.name()).join("K.csv"))?.k,
        _ => [[1.0, 0.0], [0.0, 1.0]],
    };
    let descriptor = cfg.force.descriptor(&k);
    let mut res = Residuals::new();
    for (name, spec) in run_dirs(cfg)? {
        let mask = build_thin_domain(&spec, &cell)?;
        let [cx, cy, _] = spec.cells;
        let f = BodyForce2D::from_descriptor(descriptor.clone(), spec.lx, spec.ly, cx, cy)?;
        info!("dns {name}: a_eps = {}, grid {:?}", spec.a_eps, mask.dims());
        let sol = solve_dns(&mask, &f, &cfg.solver, cfg.grid_cap)?;
        let run = dir.join(&name);
        fs::create_dir_all(&run)?;
        write_dns(&run, &sol)?;
        res.insert(format!("{name}.momentum_residual"), sol.momentum_residual);
        res.insert(format!("{name}.div_residual"), sol.div_residual);
    }
    Ok(res)
}

fn write_dns(dir: &Path, sol: &DnsSolution) -> Result<()> {
    let summary = ColumnSummary::from_solution(sol);
    let spec = summary.spec;
    let [gx, gy, _] = spec.cells;
    let mut rows = Vec::with_capacity(gx * gy);
    for j in 0..gy {
        for i in 0..gx {
            let c = i + gx * j;
            let m = summary.mean[c];
            rows.push(vec![
                i.to_string(),
                j.to_string(),
                fmt_f64((i as f64 + 0.5) * spec.a_eps),
                fmt_f64((j as f64 + 0.5) * spec.a_eps),
                fmt_f64(m[0]),
                fmt_f64(m[1]),
                fmt_f64(m[2]),
                fmt_f64(summary.pressure[c]),
            ]);
        }
    }
    write_csv(
        &dir.join("columns.csv"),
        &["I", "J", "x", "y", "Ubar1", "Ubar2", "Ubar3", "p"],
        &rows,
    )?;
    let grid = StaggeredGrid::walled(&sol.mask);
    write_csv(
        &dir.join("summary.csv"),
        &SUMMARY_HEADER,
        &[vec![
            fmt_f64(spec.a_eps),
            fmt_f64(spec.epsilon),
            fmt_f64(spec.lx),
            fmt_f64(spec.ly),
            summary.n_c.to_string(),
            fmt_f64(summary.nu),
            summary.has_obstacles.to_string(),
            fmt_f64(summary.ratio_u),
            fmt_f64(summary.ratio_du),
            fmt_f64(sol.momentum_residual),
            fmt_f64(sol.div_residual),
            sol.outer_iterations.to_string(),
            sol.inner_iterations.to_string(),
            grid.unknowns().to_string(),
        ]],
    )?;
    let dims = sol.mask.dims();
    let h = sol.mask.h();
    write_vtk(
        &dir.join("dns.vtk"),
        "dns",
        dims,
        [0.0; 3],
        [h; 3],
        &[
            CellData::Vector("u", &sol.field.cell_centered_velocity()),
            CellData::Scalar("p", &sol.field.pressure),
        ],
    )
}

/// Reads the column summary of one DNS run directory.
pub fn read_dns_run(dir: &Path) -> Result<ColumnSummary> {
    let s = read_upstream(&dir.join("summary.csv"), "dns")?;
    let spec = ThinDomainSpec::new(
        s.f64_at(0, "Lx")?,
        s.f64_at(0, "Ly")?,
        s.f64_at(0, "epsilon")?,
        s.f64_at(0, "a_eps")?,
    )?;
    let has_obstacles = match s.str_at(0, "has_obstacles")? {
        "true" => true,
        "false" => false,
        other => {
            return Err(Error::Parse {
                path: s.path.display().to_string(),
                line: 2,
                message: format!("has_obstacles = `{other}`"),
            })
        }
    };
    let c = read_upstream(&dir.join("columns.csv"), "dns")?;
    let [gx, gy, _] = spec.cells;
    if c.rows.len() != gx * gy {
        return Err(Error::GridMismatch(format!(
            "{} has {} columns, expected {gx} x {gy}",
            c.path.display(),
            c.rows.len()
        )));
    }
    let mut mean = vec![[0.0; 3]; gx * gy];
    let mut pressure = vec![0.0; gx * gy];
    for r in 0..c.rows.len() {
        let idx = c.usize_at(r, "I")? + gx * c.usize_at(r, "J")?;
        mean[idx] = [c.f64_at(r, "Ubar1")?, c.f64_at(r, "Ubar2")?, c.f64_at(r, "Ubar3")?];
        pressure[idx] = c.f64_at(r, "p")?;
    }
    Ok(ColumnSummary {
        spec,
        n_c: s.usize_at(0, "n_c")?,
        nu: s.f64_at(0, "nu")?,
        has_obstacles,
        ratio_u: s.f64_at(0, "ratio_u")?,
        ratio_du: s.f64_at(0, "ratio_Du")?,
        mean,
        pressure,
    })
}

// ---- compare ----------------------------------------------------------

pub const REPORT_HEADER: [&str; 8] = [
    "a_eps",
    "eps",
    "ratio_u",
    "ratio_Du",
    "rel_err_velocity",
    "abs_err_velocity",
    "rel_err_pressure",
    "u3_ratio",
];

/// Run directories below `dir`: its `run_*` children in index order, or
/// `dir` itself when it has none but holds a run.
pub fn run_subdirs(dir: &Path, marker: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(missing(dir, "dns"));
    }
    let mut runs: Vec<(usize, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(marker).exists())
        .filter_map(|p| {
            let index = p.file_name()?.to_str()?.strip_prefix("run_")?.parse().ok()?;
            Some((index, p))
        })
        .collect();
    runs.sort();
    if runs.is_empty() && dir.join(marker).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    Ok(runs.into_iter().map(|(_, p)| p).collect())
}

/// Result of comparing DNS runs against Darcy solutions read from disk.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub comparisons: Vec<Comparison>,
    pub rows: Vec<crate::dns_thin::ScalingRow>,
    /// `None` when fewer than two runs were compared.
    pub audit_passed: Option<bool>,
}

/// Compares each DNS run in `dns_dir` with the Darcy run of the same name in
/// `darcy_dir` and writes `report` (and `scaling.csv` next to it).
pub fn compare_dirs(dns_dir: &Path, darcy_dir: &Path, report: &Path) -> Result<CompareOutcome> {
    let dns_runs = run_subdirs(dns_dir, "summary.csv")?;
    if dns_runs.is_empty() {
        return Err(missing(dns_dir, "dns"));
    }
    let darcy_runs = run_subdirs(darcy_dir, "darcy_summary.csv")?;
    let single = dns_runs.len() == 1 && darcy_runs.len() == 1;
    let mut out_rows = Vec::new();
    let mut comparisons = Vec::new();
    let mut scaling = Vec::new();
    for run in &dns_runs {
        let summary = read_dns_run(run)?;
        let darcy_run = if single {
            darcy_runs[0].clone()
        } else {
            let name = run.file_name().expect("run directory");
            darcy_runs
                .iter()
                .find(|d| d.file_name() == Some(name))
                .cloned()
                .ok_or_else(|| missing(&darcy_dir.join(name), "darcy"))?
        };
        let darcy = read_darcy(&darcy_run)?;
        let cmp = compare_columns(&summary, &darcy)?;
        let row = summary.scaling_row();
        let na = fmt_f64(f64::NAN);
        out_rows.push(match cmp {
            Comparison::Report(r) => vec![
                fmt_f64(r.a_eps),
                fmt_f64(r.epsilon),
                fmt_f64(r.ratio_u),
                fmt_f64(r.ratio_du),
                fmt_f64(r.rel_err_velocity),
                fmt_f64(r.abs_err_velocity),
                fmt_f64(r.rel_err_pressure),
                fmt_f64(r.u3_ratio),
            ],
            Comparison::NotApplicable => vec![
                fmt_f64(row.a_eps),
                fmt_f64(row.epsilon),
                fmt_f64(row.ratio_u),
                fmt_f64(row.ratio_du),
                na.clone(),
                na.clone(),
                na.clone(),
                na,
            ],
        });
        comparisons.push(cmp);
        scaling.push(row);
    }
    if let Some(parent) = report.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    write_csv(report, &REPORT_HEADER, &out_rows)?;

    let (rows, audit_passed) = if scaling.len() >= 2 {
        let audit = audit_rows(scaling);
        (audit.rows, Some(audit.passed))
    } else {
        (scaling, None)
    };
    let passed = audit_passed.map(|p| p.to_string()).unwrap_or_else(|| "n/a".into());
    let scaling_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.a_eps),
                fmt_f64(r.epsilon),
                fmt_f64(r.ratio_u),
                fmt_f64(r.ratio_du),
                passed.clone(),
            ]
        })
        .collect();
    let scaling_path = report.with_file_name("scaling.csv");
    write_csv(&scaling_path, &["a_eps", "eps", "ratio_u", "ratio_Du", "audit_passed"], &scaling_rows)?;
    Ok(CompareOutcome {
        comparisons,
        rows,
        audit_passed,
    })
}

fn stage_compare(out: &Path, dir: &Path) -> Result<Residuals> {
    let outcome = compare_dirs(
        &out.join(Stage::Dns.name()),
        &out.join(Stage::Darcy.name()),
        &dir.join("report.csv"),
    )?;
    let mut res = Residuals::new();
    for (i, c) in outcome.comparisons.iter().enumerate() {
        if let Comparison::Report(r) = c {
            res.insert(format!("run_{i}.rel_err_velocity"), r.rel_err_velocity);
            res.insert(format!("run_{i}.u3_ratio"), r.u3_ratio);
        }
    }
    if outcome.audit_passed == Some(false) {
        return Err(Error::CheckFailed {
            check: "scaling_audit".into(),
            message: "scaled norms change by a factor of two or more between runs (see scaling.csv)".into(),
        });
    }
    Ok(res)
}

// ---- verify-unfold ----------------------------------------------------

fn stage_unfold(cfg: &RunConfig, dir: &Path) -> Result<Residuals> {
    let domain = cfg.domain.as_ref().expect("checked by require");
    let cell = match &cfg.shape {
        Some(shape) => voxelize_cell(shape, domain.n_c)?,
        None => CellMask::all_fluid(domain.n_c),
    };
    let mut rows = Vec::new();
    let mut res = Residuals::new();
    let mut worst = 0.0f64;
    let mut exact = true;
    for (name, spec) in run_dirs(cfg)? {
        let mask = build_thin_domain(&spec, &cell)?;
        let t = random_trials(&mask, cfg.unfold_trials, cfg.unfold_seed)?;
        rows.push(vec![
            name.clone(),
            fmt_f64(spec.a_eps),
            fmt_f64(spec.epsilon),
            domain.n_c.to_string(),
            fmt_f64(t.identity_a_defect),
            fmt_f64(t.identity_b_defect),
            fmt_f64(t.identity_c_defect),
            t.trials.to_string(),
            fmt_f64(t.max_defect),
            t.round_trip_exact.to_string(),
        ]);
        res.insert(format!("{name}.max_defect"), t.max_defect);
        worst = worst.max(t.max_defect);
        exact &= t.round_trip_exact;
    }
    write_csv(
        &dir.join("unfold_report.csv"),
        &[
            "run",
            "a_eps",
            "eps",
            "n_c",
            "identity_a_defect",
            "identity_b_defect",
            "identity_c_defect",
            "trials",
            "max_defect",
            "round_trip_exact",
        ],
        &rows,
    )?;
    if !(worst <= UNFOLD_TOLERANCE) || !exact {
        return Err(Error::CheckFailed {
            check: "unfolding_identities".into(),
            message: format!("max identity defect {worst:e}, round trip exact: {exact}"),
        });
    }
    Ok(res)
}
