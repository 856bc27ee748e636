//! Experiment configuration: a TOML document, every field optional.
//! Command-line flags override the file; presets fill in the rest.

use crate::CliError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Scale,
    Exponents,
    Classify,
    Destabilize,
    Simulate,
}

/// `rotation` runs the rotation algorithm on the embedded ODE with angle
/// bound `δ`; `pipeline` embeds, rotates and projects back so that the
/// perturbation on the scale stays within `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DestabilizeMode {
    Pipeline,
    Rotation,
}

impl FromStr for DestabilizeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pipeline" => Ok(Self::Pipeline),
            "rotation" => Ok(Self::Rotation),
            other => Err(format!("unknown mode `{other}` (expected pipeline or rotation)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    None,
    /// `c·|x|·x`.
    Quadratic,
    /// The tube map built from destabilized linear systems.
    Tube,
}

impl FromStr for Nonlinearity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "quadratic" => Ok(Self::Quadratic),
            "tube" => Ok(Self::Tube),
            other => Err(format!("unknown nonlinearity `{other}` (expected none, quadratic or tube)")),
        }
    }
}

/// Block lengths `start, start + step, …, ≤ end`, written `start:end:step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Sweep {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let v = self.start + self.step * k as f64;
            if v > self.end * (1.0 + 1e-12) {
                break;
            }
            out.push(v);
            k += 1;
        }
        out
    }
}

impl FromStr for Sweep {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:end:step, found `{s}`"));
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
        let (start, end, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(start > 0.0 && end >= start && step > 0.0) || !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(format!("sweep `{s}` needs 0 < start ≤ end and step > 0"));
        }
        if (end - start) / step > 1e4 {
            return Err(format!("sweep `{s}` has more than 10⁴ values"));
        }
        Ok(Self { start, end, step })
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}

impl TryFrom<String> for Sweep {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Sweep> for String {
    fn from(s: Sweep) -> String {
        s.to_string()
    }
}

/// Budgets halve per tube, so more terms than this only add underflow.
pub const MAX_TUBE_TERMS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Piece {
    pub from: f64,
    pub matrix: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_imag: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    /// Inline scale description.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    /// Scale description file, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_file: Option<PathBuf>,
    /// Constant coefficient, real part row by row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Imaginary part of `matrix`, zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_imag: Option<Vec<Vec<f64>>>,
    /// Piecewise-constant coefficient; piece `k` holds from its `from` time
    /// until the next piece starts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub piecewise: Option<Vec<Piece>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_sweep: Option<Sweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Central exponents with `|χ|` below this take the identity-shift branch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<DestabilizeMode>,
    /// Fixed rotation segment length `T₀`; blocks are `m·T₀` for `m` in
    /// `block-multiples`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_multiples: Option<Vec<u32>>,
    /// Size blocks from `ε` and `δ` as the rotation algorithm prescribes
    /// instead of `block-t0`/`block-multiples`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verbatim_blocks: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<Nonlinearity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadratic_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tube_terms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_radius: Option<f64>,
    /// Decay is flagged when `|x(T)| ≤ decay_ratio·|x(0)|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
                format!(" at line {line}, column {column}")
            });
            CliError::Parse(format!("config{}: {}", at.unwrap_or_default(), e.message()))
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(format!("config cannot be written as TOML: {e}")))
    }

    /// Reads a config file; a relative `scale-file` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(f) = &cfg.scale_file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.scale_file = Some(dir.join(f));
                }
            }
        }
        Ok(cfg)
    }

    /// Fields of `other` that are set replace those of `self`.
    pub fn overlay(&mut self, other: ExperimentConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            preset, p, q, scale, scale_file, matrix, matrix_imag, piecewise, analysis, horizon, t_sweep, delta, eps, seed, zero_tolerance, mode,
            block_t0, block_multiples, verbatim_blocks, x0, nonlinearity, quadratic_c, tube_terms, escape_radius, decay_ratio, out
        );
    }

    /// Range checks on the numeric fields and existence of referenced files.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Parse(m));
        let positive = |name: &str, v: Option<f64>| -> Result<(), CliError> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Parse(format!("{name} must be positive and finite, got {x}"))),
                _ => Ok(()),
            }
        };
        positive("horizon", self.horizon)?;
        positive("delta", self.delta)?;
        positive("eps", self.eps)?;
        positive("block-t0", self.block_t0)?;
        positive("quadratic-c", self.quadratic_c)?;
        positive("escape-radius", self.escape_radius)?;
        positive("decay-ratio", self.decay_ratio)?;
        if let Some(d) = self.delta {
            if d > 1.0 {
                return bad(format!("delta must be at most 1, got {d}"));
            }
        }
        if let Some(z) = self.zero_tolerance {
            if !(z >= 0.0 && z.is_finite()) {
                return bad(format!("zero-tolerance must be nonnegative, got {z}"));
            }
        }
        if self.scale.is_some() && self.scale_file.is_some() {
            return bad("give either scale or scale-file, not both".into());
        }
        if let Some(f) = &self.scale_file {
            if !f.is_file() {
                return bad(format!("scale file {} does not exist", f.display()));
            }
        }
        if self.matrix.is_some() && self.piecewise.is_some() {
            return bad("give either matrix or piecewise, not both".into());
        }
        if self.matrix_imag.is_some() && self.matrix.is_none() {
            return bad("matrix-imag needs matrix".into());
        }
        if let Some(m) = &self.matrix {
            check_matrix("matrix", m, self.matrix_imag.as_deref())?;
        }
        if let Some(pieces) = &self.piecewise {
            if pieces.is_empty() {
                return bad("piecewise needs at least one piece".into());
            }
            let n = pieces[0].matrix.len();
            for (k, piece) in pieces.iter().enumerate() {
                check_matrix(&format!("piece {}", k + 1), &piece.matrix, piece.matrix_imag.as_deref())?;
                if piece.matrix.len() != n {
                    return bad(format!("piece {} has dimension {}, expected {n}", k + 1, piece.matrix.len()));
                }
                if !piece.from.is_finite() || (k > 0 && piece.from <= pieces[k - 1].from) {
                    return bad("piece start times must be finite and increasing".into());
                }
            }
        }
        if let Some(x) = &self.x0 {
            if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
                return bad("x0 must be a nonempty list of finite numbers".into());
            }
        }
        if let Some(v) = &self.block_multiples {
            if v.is_empty() || v.contains(&0) {
                return bad("block-multiples must be a nonempty list of positive integers".into());
            }
        }
        if let Some(k) = self.tube_terms {
            if !(1..=MAX_TUBE_TERMS).contains(&k) {
                return bad(format!("tube-terms must be between 1 and {MAX_TUBE_TERMS}, got {k}"));
            }
        }
        if self.seed.is_some_and(|s| s > i64::MAX as u64) {
            return bad("seed must fit a TOML integer (at most 2^63 - 1)".into());
        }
        if let (Some(p), Some(q)) = (self.p, self.q) {
            if p == 0 || p >= q {
                return bad(format!("need 0 < p < q, got p = {p}, q = {q}"));
            }
        }
        Ok(())
    }
}

fn check_matrix(name: &str, re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<(), CliError> {
    let n = re.len();
    let square = |m: &[Vec<f64>]| m.len() == n && m.iter().all(|r| r.len() == n);
    if n == 0 || !square(re) || im.is_some_and(|m| !square(m)) {
        return Err(CliError::Parse(format!("{name} must be square and nonempty, with matching imaginary part")));
    }
    if re.iter().chain(im.unwrap_or_default()).flatten().any(|x| !x.is_finite()) {
        return Err(CliError::Parse(format!("{name} entries must be finite")));
    }
    Ok(())
}
