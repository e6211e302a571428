//! JSON run configuration. Unknown keys are rejected at every level.

use std::io::Read;
use std::path::{Path, PathBuf};

use expomodes::cplx;
use expomodes::{Complex64, ModelParameters, Param, Tolerances};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub parameters: Option<ModelParameters>,
    pub modes: Option<ModesConfig>,
    pub verify: Option<VerifyConfig>,
    pub sweep: Option<SweepConfig>,
    pub equilibrium: Option<EquilibriumConfig>,
    pub tolerances: Option<ToleranceConfig>,
    /// Directory for the output artifacts; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

/// Mode selection for `build` and `verify`. Root indices refer to the
/// spectrum order (descending real part).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    pub roots: Vec<usize>,
    /// Free amplitudes `a4` per mode; all ones when omitted.
    #[serde(default, with = "opt_seq")]
    pub amplitudes: Option<Vec<Complex64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub horizon: Option<f64>,
    pub samples: Option<usize>,
    /// Negative control: multiplies one amplitude component by
    /// `1 + relative` before integrating.
    pub perturb: Option<Perturbation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub mode: usize,
    pub component: usize,
    pub relative: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub free: Param,
    pub range: [f64; 2],
    pub grid_n: usize,
    pub roots: Vec<usize>,
    #[serde(default)]
    pub log_spacing: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    #[serde(default = "one", with = "cplx")]
    pub x4bar: Complex64,
    /// Replace `kD` by the spectrum root with this index before solving.
    pub pin_kd_to_root: Option<usize>,
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub root: Option<f64>,
    pub constraint: Option<f64>,
    pub deviation: Option<f64>,
    pub drift: Option<f64>,
}

mod opt_seq {
    use super::*;
    use serde::Deserializer;

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<Vec<Complex64>>, D::Error> {
        let v: Option<Vec<cplx::Json>> = Option::deserialize(d)?;
        Ok(v.map(|v| v.into_iter().map(|j| j.0).collect()))
    }
}

impl RunConfig {
    /// Reads a config from a file, or from stdin when `path` is `-`.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = if path.as_os_str() == "-" {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::Invalid(format!("reading stdin: {e}")))?;
            s
        } else {
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Invalid(format!("reading {}: {e}", path.display())))?
        };
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))
    }

    pub fn parameters(&self) -> Result<ModelParameters, CliError> {
        self.parameters
            .ok_or_else(|| CliError::Invalid("config has no `parameters`".into()))
    }

    pub fn modes(&self) -> Result<&ModesConfig, CliError> {
        self.modes
            .as_ref()
            .ok_or_else(|| CliError::Invalid("config has no `modes`".into()))
    }
}

/// Tolerances from defaults, then the config, then command-line flags.
pub fn tolerances(cfg: &RunConfig, flags: &ToleranceConfig) -> Result<Tolerances, CliError> {
    let mut t = Tolerances::default();
    for src in [cfg.tolerances.clone().unwrap_or_default(), flags.clone()] {
        t.root = src.root.unwrap_or(t.root);
        t.constraint = src.constraint.unwrap_or(t.constraint);
        t.deviation = src.deviation.unwrap_or(t.deviation);
        t.drift = src.drift.unwrap_or(t.drift);
    }
    for (name, v) in [
        ("root", t.root),
        ("constraint", t.constraint),
        ("deviation", t.deviation),
        ("drift", t.drift),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Invalid(format!(
                "tolerance `{name}` must be positive, got {v}"
            )));
        }
    }
    Ok(t)
}
