//! Run configuration: a flat `key = value` file.
//!
//! ```text
//! # obstacle
//! shape.kind = sphere
//! shape.radius = 0.25
//! cell.n = 16
//!
//! domain.Lx = 1
//! domain.Ly = 1
//! domain.epsilon = 0.25
//! domain.a_eps = 0.125 0.0625
//! domain.n_c = 8
//!
//! pipeline.stages = cell, k, darcy, dns, compare, verify-unfold
//! ```
//!
//! Lists are separated by spaces or commas. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use crate::darcy2d::ForceDescriptor;
use crate::dns_thin::DEFAULT_GRID_CAP;
use crate::error::{Error, Result};
use crate::geometry::{ObstacleShape, ThinDomainSpec};
use crate::permeability::Matrix2;
use crate::stokes::SolverConfig;

const KEYS: &[&str] = &[
    "shape.kind",
    "shape.radius",
    "shape.half_extents",
    "shape.semi_axes",
    "shape.exponent",
    "shape.center",
    "cell.n",
    "domain.Lx",
    "domain.Ly",
    "domain.epsilon",
    "domain.a_eps",
    "domain.n_c",
    "solver.tol_mom",
    "solver.tol_div",
    "solver.max_outer",
    "solver.max_inner",
    "solver.nu",
    "darcy.gx",
    "darcy.gy",
    "force.kind",
    "force.params",
    "dns.grid_cap",
    "unfold.trials",
    "unfold.seed",
    "pipeline.stages",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Cell,
    K,
    Darcy,
    Dns,
    Compare,
    VerifyUnfold,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Cell,
        Stage::K,
        Stage::Darcy,
        Stage::Dns,
        Stage::Compare,
        Stage::VerifyUnfold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Cell => "cell",
            Stage::K => "k",
            Stage::Darcy => "darcy",
            Stage::Dns => "dns",
            Stage::Compare => "compare",
            Stage::VerifyUnfold => "verify-unfold",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

/// Force as configured; the manufactured case needs `K` to be resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceKind {
    Constant([f64; 2]),
    Cosine(f64),
    Solenoidal { amplitude: f64, modes: [u32; 2] },
    Combined { gradient: f64, solenoidal: f64, modes: [u32; 2] },
    Manufactured,
}

impl ForceKind {
    pub fn descriptor(&self, k: &Matrix2) -> ForceDescriptor {
        match *self {
            ForceKind::Constant(c) => ForceDescriptor::Constant(c),
            ForceKind::Cosine(amplitude) => ForceDescriptor::GradientCosine { amplitude },
            ForceKind::Solenoidal { amplitude, modes } => ForceDescriptor::Solenoidal { amplitude, modes },
            ForceKind::Combined {
                gradient,
                solenoidal,
                modes,
            } => ForceDescriptor::Combined {
                gradient,
                solenoidal,
                modes,
            },
            ForceKind::Manufactured => ForceDescriptor::Manufactured { k: *k },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub lx: f64,
    pub ly: f64,
    pub epsilon: f64,
    /// One DNS run per value.
    pub a_eps: Vec<f64>,
    pub n_c: usize,
}

impl DomainConfig {
    pub fn specs(&self) -> Result<Vec<ThinDomainSpec>> {
        self.a_eps
            .iter()
            .map(|&a| ThinDomainSpec::new(self.lx, self.ly, self.epsilon, a))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub shape: Option<ObstacleShape>,
    pub cell_n: usize,
    pub domain: Option<DomainConfig>,
    pub solver: SolverConfig,
    pub darcy_grid: [usize; 2],
    pub force: ForceKind,
    /// `None` disables the guard.
    pub grid_cap: Option<usize>,
    pub unfold_trials: usize,
    pub unfold_seed: u64,
    /// Requested stages in execution order.
    pub stages: Vec<Stage>,
}

struct Entry {
    line: usize,
    value: String,
}

fn validation(key: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        key: key.to_string(),
        message: message.into(),
    }
}

fn items(value: &str) -> Vec<&str> {
    value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect()
}

struct Reader {
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let x: f64 = v.trim().parse().map_err(|_| validation(key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(validation(key, "must be finite"));
                }
                Ok(Some(x))
            }
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| validation(key, format!("`{v}` is not a non-negative integer"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for item in items(v) {
                    let x: f64 = item.parse().map_err(|_| validation(key, format!("`{item}` is not a number")))?;
                    if !x.is_finite() {
                        return Err(validation(key, "values must be finite"));
                    }
                    out.push(x);
                }
                Ok(Some(out))
            }
        }
    }

    fn vec3(&self, key: &str) -> Result<Option<[f64; 3]>> {
        match self.f64_list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
            Some(v) => Err(validation(key, format!("expected 3 values, got {}", v.len()))),
        }
    }
}

/// Parses configuration text; `path` is used in error messages.
pub fn parse_config_str(text: &str, path: &str) -> Result<RunConfig> {
    let mut entries = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "empty key".into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(validation(key, "unknown key"));
        }
        if let Some(prev) = entries.get(key) {
            let prev: &Entry = prev;
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("`{key}` already set on line {}", prev.line),
            });
        }
        entries.insert(
            key.to_string(),
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    build(&Reader { entries })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let bytes = std::fs::read(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_config_str(&text, &path.display().to_string())
}

fn build(r: &Reader) -> Result<RunConfig> {
    let shape = parse_shape(r)?;
    let cell_n = r.usize("cell.n")?.unwrap_or(16);
    if cell_n < 4 {
        return Err(validation("cell.n", format!("must be at least 4, got {cell_n}")));
    }

    let domain = parse_domain(r)?;

    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        tol_mom: r.f64("solver.tol_mom")?.unwrap_or(defaults.tol_mom),
        tol_div: r.f64("solver.tol_div")?.unwrap_or(defaults.tol_div),
        max_outer: r.usize("solver.max_outer")?.unwrap_or(defaults.max_outer),
        max_inner: r.usize("solver.max_inner")?.unwrap_or(defaults.max_inner),
        nu: r.f64("solver.nu")?.unwrap_or(defaults.nu),
    };
    solver.validate()?;

    let gx = r.usize("darcy.gx")?.unwrap_or(64);
    let gy = r.usize("darcy.gy")?.unwrap_or(gx);
    for (key, g) in [("darcy.gx", gx), ("darcy.gy", gy)] {
        if g < 4 {
            return Err(validation(key, format!("must be at least 4, got {g}")));
        }
    }

    let force = parse_force(r)?;
    let grid_cap = match r.usize("dns.grid_cap")? {
        None => Some(DEFAULT_GRID_CAP),
        Some(0) => None,
        Some(c) => Some(c),
    };
    let unfold_trials = r.usize("unfold.trials")?.unwrap_or(100);
    let unfold_seed = r.usize("unfold.seed")?.unwrap_or(0) as u64;

    let stages = match r.raw("pipeline.stages") {
        None => Stage::ALL.to_vec(),
        Some(v) => {
            let mut out = Vec::new();
            for item in items(v) {
                let st = Stage::parse(item).ok_or_else(|| validation("pipeline.stages", format!("unknown stage `{item}`")))?;
                if !out.contains(&st) {
                    out.push(st);
                }
            }
            out.sort();
            out
        }
    };

    let cfg = RunConfig {
        shape,
        cell_n,
        domain,
        solver,
        darcy_grid: [gx, gy],
        force,
        grid_cap,
        unfold_trials,
        unfold_seed,
        stages,
    };
    check_stage_requirements(&cfg)?;
    Ok(cfg)
}

fn parse_shape(r: &Reader) -> Result<Option<ObstacleShape>> {
    let Some(kind) = r.raw("shape.kind") else {
        for key in ["shape.radius", "shape.half_extents", "shape.semi_axes", "shape.exponent", "shape.center"] {
            if r.raw(key).is_some() {
                return Err(validation(key, "set without shape.kind"));
            }
        }
        return Ok(None);
    };
    let need = |key: &str| validation(key, format!("required for shape.kind = {kind}"));
    let mut shape = match kind {
        "sphere" => ObstacleShape::sphere(r.f64("shape.radius")?.ok_or_else(|| need("shape.radius"))?),
        "box" => ObstacleShape::axis_box(r.vec3("shape.half_extents")?.ok_or_else(|| need("shape.half_extents"))?),
        "superellipsoid" => ObstacleShape::superellipsoid(
            r.vec3("shape.semi_axes")?.ok_or_else(|| need("shape.semi_axes"))?,
            r.f64("shape.exponent")?.ok_or_else(|| need("shape.exponent"))?,
        ),
        other => {
            return Err(validation(
                "shape.kind",
                format!("`{other}` is not one of sphere, box, superellipsoid"),
            ))
        }
    };
    if let Some(c) = r.vec3("shape.center")? {
        shape = shape.with_center(c);
    }
    shape.validate().map_err(|e| validation("shape", e.to_string()))?;
    Ok(Some(shape))
}

fn parse_domain(r: &Reader) -> Result<Option<DomainConfig>> {
    let keys = ["domain.Lx", "domain.Ly", "domain.epsilon", "domain.a_eps", "domain.n_c"];
    if keys.iter().all(|k| r.raw(k).is_none()) {
        return Ok(None);
    }
    let need = |key: &str| validation(key, "required when a domain is configured");
    let lx = r.f64("domain.Lx")?.ok_or_else(|| need("domain.Lx"))?;
    let ly = r.f64("domain.Ly")?.unwrap_or(lx);
    let epsilon = r.f64("domain.epsilon")?.ok_or_else(|| need("domain.epsilon"))?;
    let a_eps = r.f64_list("domain.a_eps")?.ok_or_else(|| need("domain.a_eps"))?;
    if a_eps.is_empty() {
        return Err(need("domain.a_eps"));
    }
    let n_c = r.usize("domain.n_c")?.unwrap_or(4);
    if n_c < 4 {
        return Err(validation("domain.n_c", format!("must be at least 4, got {n_c}")));
    }
    let domain = DomainConfig {
        lx,
        ly,
        epsilon,
        a_eps,
        n_c,
    };
    domain.specs().map_err(|e| match e {
        Error::NonIntegerTiling { axis, ratio } => {
            let key = match axis {
                "Lx" => "domain.Lx",
                "Ly" => "domain.Ly",
                _ => "domain.epsilon",
            };
            validation(key, format!("{axis} / a_eps = {ratio} is not an integer"))
        }
        Error::InvalidDomain(m) => {
            let key = ["Lx", "Ly", "epsilon", "a_eps"]
                .into_iter()
                .find(|k| m.starts_with(k))
                .map_or("domain".to_string(), |k| format!("domain.{k}"));
            validation(&key, m)
        }
        other => other,
    })?;
    Ok(Some(domain))
}

fn parse_force(r: &Reader) -> Result<ForceKind> {
    let kind = r.raw("force.kind").unwrap_or("combined");
    let params = r.f64_list("force.params")?;
    let count = |n: usize, default: &[f64]| -> Result<Vec<f64>> {
        match &params {
            None => Ok(default.to_vec()),
            Some(p) if p.len() == n => Ok(p.clone()),
            Some(p) => Err(validation(
                "force.params",
                format!("force.kind = {kind} takes {n} values, got {}", p.len()),
            )),
        }
    };
    let mode = |x: f64| -> Result<u32> {
        if x >= 1.0 && x.fract() == 0.0 && x <= 1e6 {
            Ok(x as u32)
        } else {
            Err(validation("force.params", format!("mode numbers must be positive integers, got {x}")))
        }
    };
    Ok(match kind {
        "constant" => {
            let p = count(2, &[1.0, 0.0])?;
            ForceKind::Constant([p[0], p[1]])
        }
        "cosine" => ForceKind::Cosine(count(1, &[1.0])?[0]),
        "solenoidal" => {
            let p = count(3, &[-1.0, 1.0, 2.0])?;
            ForceKind::Solenoidal {
                amplitude: p[0],
                modes: [mode(p[1])?, mode(p[2])?],
            }
        }
        "combined" => {
            let p = count(4, &[1.0, 1.0, 1.0, 1.0])?;
            ForceKind::Combined {
                gradient: p[0],
                solenoidal: p[1],
                modes: [mode(p[2])?, mode(p[3])?],
            }
        }
        "manufactured" => {
            count(0, &[])?;
            ForceKind::Manufactured
        }
        other => {
            return Err(validation(
                "force.kind",
                format!("`{other}` is not one of constant, cosine, solenoidal, combined, manufactured"),
            ))
        }
    })
}

fn check_stage_requirements(cfg: &RunConfig) -> Result<()> {
    cfg.stages.iter().try_for_each(|&st| require(cfg, st))
}

/// Checks that the sections stage `st` reads are present.
pub fn require(cfg: &RunConfig, st: Stage) -> Result<()> {
    let needs_domain = matches!(st, Stage::Dns | Stage::Compare | Stage::VerifyUnfold);
    if needs_domain && cfg.domain.is_none() {
        return Err(validation("domain.a_eps", format!("required by stage `{}`", st.name())));
    }
    if st != Stage::VerifyUnfold && cfg.shape.is_none() {
        return Err(validation("shape.kind", format!("required by stage `{}`", st.name())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_sphere_config_gets_defaults() {
        let cfg = parse_config_str("shape.kind = sphere\nshape.radius = 0.25\npipeline.stages = cell, k\n", "t").unwrap();
        assert_eq!(cfg.shape, Some(ObstacleShape::sphere(0.25)));
        assert_eq!(cfg.cell_n, 16);
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.stages, vec![Stage::Cell, Stage::K]);
        assert_eq!(cfg.grid_cap, Some(DEFAULT_GRID_CAP));
        assert!(cfg.domain.is_none());
    }

    #[test]
    fn non_integer_tiling_names_the_key() {
        let text = "shape.kind = sphere\nshape.radius = 0.25\ndomain.Lx = 1\ndomain.epsilon = 0.3\ndomain.a_eps = 0.125\n";
        match parse_config_str(text, "t") {
            Err(Error::Validation { key, message }) => {
                assert_eq!(key, "domain.epsilon");
                assert!(message.contains("2.4"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        match parse_config_str("shape.kind = sphere\nshape.colour = red\n", "t") {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "shape.colour"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse_config_str("# comment\n\nshape.kind sphere\n", "f.cfg") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "f.cfg");
            }
            other => panic!("{other:?}"),
        }
        match parse_config_str("cell.n = 8\ncell.n = 9\n", "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stages_need_their_sections() {
        let err = parse_config_str("pipeline.stages = dns\nshape.kind = sphere\nshape.radius = 0.2\n", "t").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "domain.a_eps"));
        let err = parse_config_str("pipeline.stages = cell\n", "t").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "shape.kind"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn lists_and_forces() {
        let text = "shape.kind = box\nshape.half_extents = 0.2, 0.1 0.1\nshape.center = 0 0 0.1\n\
                    domain.Lx = 1\ndomain.epsilon = 0.25\ndomain.a_eps = 0.125, 0.0625\ndomain.n_c = 8\n\
                    force.kind = solenoidal\nforce.params = -1 1 2\ndns.grid_cap = 0\n";
        let cfg = parse_config_str(text, "t").unwrap();
        let d = cfg.domain.unwrap();
        assert_eq!(d.a_eps, vec![0.125, 0.0625]);
        assert_eq!(d.ly, 1.0);
        assert_eq!(cfg.grid_cap, None);
        assert_eq!(
            cfg.force,
            ForceKind::Solenoidal {
                amplitude: -1.0,
                modes: [1, 2]
            }
        );
        assert!(parse_config_str("force.kind = solenoidal\nforce.params = 1 0.5 2\npipeline.stages = \n", "t").is_err());
        assert!(parse_config_str("solver.tol_mom = -1\npipeline.stages = \n", "t").is_err());
    }
}
