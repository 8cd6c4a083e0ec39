//! JSON run configuration. Physical numbers are decimal strings so that range
//! checks see exactly what was written.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use inls_core::criteria::DatumKind;
use inls_core::evolution::{EvolveControls, Integrator};
use inls_core::problem::parse_decimal;
use inls_core::{validate_spec, Nonlinearity, ProblemSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A decimal literal kept verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dec(pub String);

impl Dec {
    pub fn value(&self, field: &str) -> Result<f64> {
        if parse_decimal(&self.0).is_none() {
            bail!("{field}: `{}` is not a decimal literal", self.0);
        }
        let v: f64 = self.0.trim().parse().with_context(|| format!("{field}: `{}`", self.0))?;
        if !v.is_finite() {
            bail!("{field}: `{}` is not finite", self.0);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Choquard { alpha: Dec, p: Dec },
    Local { q: Dec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub s: u32,
    pub n: u32,
    pub lambda: Dec,
    pub tau: Dec,
    pub nonlinearity: NonlinearityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    pub r_max: Dec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt0: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_c: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_blowup_factor: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservation_tol: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatumConfig {
    ScaledGroundState { c: Dec },
    NehariRescaled { seed: u64 },
    Custom { path: PathBuf },
}

impl Default for DatumConfig {
    fn default() -> Self {
        DatumConfig::ScaledGroundState { c: Dec("1".into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec: SpecConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub controls: ControlsConfig,
    #[serde(default)]
    pub datum: DatumConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// Parsed and validated view of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ProblemSpec,
    pub m: usize,
    pub r_max: f64,
    pub controls: EvolveControls,
    pub datum: DatumKind,
    pub seed: u64,
}

impl SpecConfig {
    pub fn resolve(&self) -> Result<ProblemSpec> {
        let nonlinearity = match &self.nonlinearity {
            NonlinearityConfig::Choquard { alpha, p } => {
                Nonlinearity::Choquard { alpha: alpha.value("spec.alpha")?, p: p.value("spec.p")? }
            }
            NonlinearityConfig::Local { q } => Nonlinearity::Local { q: q.value("spec.q")? },
        };
        let raw = ProblemSpec {
            s: self.s,
            n: self.n,
            lambda: self.lambda.value("spec.lambda")?,
            tau: self.tau.value("spec.tau")?,
            nonlinearity,
        };
        Ok(validate_spec(raw)?)
    }
}

impl ControlsConfig {
    pub fn resolve(&self) -> Result<EvolveControls> {
        let mut c = EvolveControls::default();
        let set = |slot: &mut f64, v: &Option<Dec>, name: &str| -> Result<()> {
            if let Some(d) = v {
                *slot = d.value(name)?;
            }
            Ok(())
        };
        set(&mut c.t_end, &self.t_end, "controls.t_end")?;
        set(&mut c.dt0, &self.dt0, "controls.dt0")?;
        set(&mut c.dt_min, &self.dt_min, "controls.dt_min")?;
        set(&mut c.cfl_c, &self.cfl_c, "controls.cfl_c")?;
        set(&mut c.grad_blowup_factor, &self.grad_blowup_factor, "controls.grad_blowup_factor")?;
        set(&mut c.conservation_tol, &self.conservation_tol, "controls.conservation_tol")?;
        if let Some(r) = &self.radius {
            c.radius = Some(r.value("controls.radius")?);
        }
        if let Some(k) = self.snapshot_stride {
            c.snapshot_stride = k;
        }
        if let Some(k) = self.max_steps {
            c.max_steps = k;
        }
        if let Some(i) = self.integrator {
            c.integrator = i;
        }
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| anyhow!("config: {e}"))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let spec = self.spec.resolve()?;
        let r_max = self.grid.r_max.value("grid.r_max")?;
        let datum = match &self.datum {
            DatumConfig::ScaledGroundState { c } => DatumKind::ScaledGroundState { c: c.value("datum.c")? },
            DatumConfig::NehariRescaled { seed } => DatumKind::NehariRescaled { seed: *seed },
            DatumConfig::Custom { path } => {
                if !path.is_file() {
                    bail!("datum.path: {} does not exist", path.display());
                }
                DatumKind::Custom { path: path.clone() }
            }
        };
        Ok(Resolved {
            spec,
            m: self.grid.m,
            r_max,
            controls: self.controls.resolve()?,
            datum,
            seed: self.seed,
        })
    }

    /// Canonical JSON (sorted keys, no output location) hashed into the run id.
    pub fn canonical(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("outputs");
        }
        v
    }
}

/// Replaces the value at a dotted path (`datum.c`, `spec.nonlinearity.p`).
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| anyhow!("{path}: `{key}` is not inside an object"))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    bail!("empty parameter path")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub base: RunConfig,
    pub axes: Vec<Axis>,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
}

fn default_parallel() -> usize {
    1
}

pub const MAX_SWEEP_POINTS: usize = 100_000;

impl SweepManifest {
    pub fn parse(text: &str) -> Result<SweepManifest> {
        let m: SweepManifest = serde_json::from_str(text).map_err(|e| anyhow!("sweep manifest: {e}"))?;
        if m.max_parallel == 0 {
            bail!("max_parallel must be positive");
        }
        let size = m.axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()));
        match size {
            Some(n) if n <= MAX_SWEEP_POINTS => Ok(m),
            _ => bail!("sweep has more than {MAX_SWEEP_POINTS} points"),
        }
    }

    /// Every point of the cartesian product, with its axis values.
    pub fn points(&self) -> Result<Vec<(Vec<Value>, RunConfig)>> {
        let mut out = vec![(Vec::new(), self.base.canonical())];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(out.len() * axis.values.len());
            for (vals, cfg) in &out {
                for v in &axis.values {
                    let mut c = cfg.clone();
                    set_path(&mut c, &axis.path, v.clone())?;
                    let mut vs = vals.clone();
                    vs.push(v.clone());
                    next.push((vs, c));
                }
            }
            out = next;
        }
        out.into_iter()
            .map(|(vals, v)| {
                let mut cfg: RunConfig = serde_json::from_value(v).map_err(|e| anyhow!("sweep point: {e}"))?;
                cfg.outputs = self.base.outputs.clone();
                Ok((vals, cfg))
            })
            .collect()
    }
}
