//! Turns a config into a scale and a coefficient.

use crate::config::ExperimentConfig;
use crate::CliError;
use tsdyn::num::Cplx;
use tsdyn::presets::{preset, PresetParams};
use tsdyn::{CMat, CoefficientMap, TimeScale};

pub struct System {
    /// Preset name, if the system came from one.
    pub preset: Option<&'static str>,
    pub scale: TimeScale,
    pub coefficient: Option<CoefficientMap>,
}

impl System {
    pub fn coefficient(&self) -> Result<&CoefficientMap, CliError> {
        self.coefficient
            .as_ref()
            .ok_or_else(|| CliError::Parse("no coefficient: give a preset, `matrix` or `piecewise`".into()))
    }

    pub fn constant(&self) -> Option<&CMat> {
        self.coefficient.as_ref().and_then(|c| c.as_constant())
    }

    pub fn dim(&self) -> Option<usize> {
        self.coefficient.as_ref().map(|c| c.dim())
    }

    pub fn is_preset(&self, name: &str) -> bool {
        self.preset == Some(name)
    }
}

/// Preset data first, then an explicit scale and coefficient on top.
pub fn resolve(cfg: &ExperimentConfig) -> Result<System, CliError> {
    let (mut name, mut scale, mut coefficient) = (None, None, None);
    if let Some(p) = &cfg.preset {
        let params = PresetParams { p: cfg.p.unwrap_or(1), q: cfg.q.unwrap_or(3) };
        let pr = preset::<f64>(p, params)?;
        name = Some(pr.name);
        scale = Some(pr.scale);
        coefficient = Some(pr.coefficient);
    } else if cfg.p.is_some() || cfg.q.is_some() {
        return Err(CliError::Parse("`p` and `q` only apply to a preset".into()));
    }
    if let Some(text) = &cfg.scale {
        scale = Some(text.parse::<TimeScale>()?);
    }
    if let Some(path) = &cfg.scale_file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        scale = Some(text.parse::<TimeScale>().map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?);
    }
    if let Some(m) = &cfg.matrix {
        coefficient = Some(CoefficientMap::constant(matrix(m, cfg.matrix_imag.as_deref())));
    }
    if let Some(pieces) = &cfg.piecewise {
        let pieces = pieces.iter().map(|p| (p.from, matrix(&p.matrix, p.matrix_imag.as_deref()))).collect();
        coefficient = Some(CoefficientMap::piecewise(pieces)?);
    }
    let scale = scale.ok_or_else(|| CliError::Parse("no time scale: give a preset, `scale` or `scale-file`".into()))?;
    Ok(System { preset: name, scale, coefficient })
}

fn matrix(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> CMat {
    let n = re.len();
    CMat::from_fn(n, n, |i, j| Cplx::new(re[i][j], im.map_or(0.0, |m| m[i][j])))
}
