//! Key-value experiment configuration: `key = value` lines, `#` comments,
//! unknown keys rejected.

use std::collections::BTreeMap;
use std::path::Path;

use lpmd::error::{Error, Result};
use lpmd::fields::BoundaryTrace;
use lpmd::grid::{DiskGrid, DomainKind};
use lpmd::optimizer::SolverConfig;
use lpmd::radial::Branch;
use num_complex::Complex64;

pub struct ConfigMap {
    entries: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl ConfigMap {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(ConfigMap { entries, consumed: Default::default() })
    }

    pub fn empty() -> Self {
        ConfigMap { entries: BTreeMap::new(), consumed: Default::default() }
    }

    pub fn override_entry(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: `{s}` is not a number"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: `{s}` is not an integer"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: `{s}` is not an integer"))),
        }
    }

    /// Every key must have been consumed by the active subcommand.
    pub fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> =
            self.entries.keys().filter(|k| !consumed.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown config key(s): {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }

    /// The raw entries, echoed into every output bundle.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }
}

pub fn grid_from(cfg: &ConfigMap) -> Result<DiskGrid> {
    let domain = cfg.get("domain").unwrap_or("disk").to_string();
    let kind = match domain.as_str() {
        "disk" => DomainKind::Disk,
        "annulus" => {
            let rho = cfg.f64_or("rho_inner", 0.5)?;
            DomainKind::Annulus { rho_inner: rho }
        }
        other => return Err(Error::Config(format!("domain `{other}` (disk|annulus)"))),
    };
    if kind == DomainKind::Disk {
        // Consume rho_inner if present to keep key checking strict but kind.
        let _ = cfg.get("rho_inner");
    }
    let n_r = cfg.usize_or("n_r", 64)?;
    let n_theta = cfg.usize_or("n_theta", 128)?;
    DiskGrid::build(kind, n_r, n_theta)
}

pub fn solver_from(cfg: &ConfigMap) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    Ok(SolverConfig {
        max_iters: cfg.usize_or("max_iters", d.max_iters)?,
        grad_tol: cfg.f64_or("grad_tol", d.grad_tol)?,
        step_init: cfg.f64_or("step_init", d.step_init)?,
        armijo_c: cfg.f64_or("armijo_c", d.armijo_c)?,
        j_floor: cfg.f64_or("j_floor", d.j_floor)?,
        seed: cfg.u64_or("seed", d.seed)?,
        panel_size: cfg.usize_or("panel_size", d.panel_size)?,
    })
}

/// Named boundary presets: identity, rotation(c), sinusoidal(eps),
/// fourier(n:re:im;...), radial_oracle.
pub enum BoundaryPreset {
    Trace(BoundaryTrace),
    RadialOracle { alpha: f64, branch: Branch },
}

pub fn boundary_from(cfg: &ConfigMap) -> Result<BoundaryPreset> {
    let spec = cfg.get("boundary").unwrap_or("identity").to_string();
    let (name, arg) = match spec.find('(') {
        Some(i) if spec.ends_with(')') => (&spec[..i], &spec[i + 1..spec.len() - 1]),
        _ => (spec.as_str(), ""),
    };
    match name {
        "identity" => Ok(BoundaryPreset::Trace(BoundaryTrace::identity())),
        "rotation" => {
            let c: f64 = arg
                .parse()
                .map_err(|_| Error::Config(format!("rotation angle `{arg}`")))?;
            Ok(BoundaryPreset::Trace(BoundaryTrace::rotation(c)))
        }
        "sinusoidal" => {
            let eps: f64 = arg
                .parse()
                .map_err(|_| Error::Config(format!("sinusoidal amplitude `{arg}`")))?;
            Ok(BoundaryPreset::Trace(BoundaryTrace::sinusoidal(eps)))
        }
        "fourier" => {
            let mut coeffs = Vec::new();
            for part in arg.split(';') {
                let fields: Vec<&str> = part.split(':').collect();
                if fields.len() != 3 {
                    return Err(Error::Config(format!(
                        "fourier term `{part}` (want n:re:im)"
                    )));
                }
                let n: i64 = fields[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("fourier mode `{}`", fields[0])))?;
                let re: f64 = fields[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("fourier re `{}`", fields[1])))?;
                let im: f64 = fields[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("fourier im `{}`", fields[2])))?;
                coeffs.push((n, Complex64::new(re, im)));
            }
            Ok(BoundaryPreset::Trace(BoundaryTrace::from_coeffs(coeffs)))
        }
        "radial_oracle" => {
            let alpha = cfg.f64_or("alpha", 15.0 / 8.0)?;
            let branch = branch_from(cfg)?;
            Ok(BoundaryPreset::RadialOracle { alpha, branch })
        }
        other => Err(Error::Config(format!(
            "boundary preset `{other}` (identity|rotation|sinusoidal|fourier|radial_oracle)"
        ))),
    }
}

pub fn branch_from(cfg: &ConfigMap) -> Result<Branch> {
    match cfg.get("branch").unwrap_or("above_1") {
        "above_1" => Ok(Branch::AboveOne),
        "below_1" => Ok(Branch::BelowOne),
        other => Err(Error::Config(format!("branch `{other}` (above_1|below_1)"))),
    }
}

pub fn schedule_from(cfg: &ConfigMap) -> Result<Vec<f64>> {
    let Some(raw) = cfg.get("p_schedule") else {
        return Err(Error::Config("sweep needs p_schedule = p1,p2,...".into()));
    };
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("schedule entry `{s}`")))
        })
        .collect()
}
