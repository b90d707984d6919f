//! Run-configuration schema.
//!
//! A run is described by one TOML document with up to six sections:
//! `[surface]`, `[drive]`, `[dressing]`, `[solve]`, `[propagate]` and
//! `[output]`. Physical numbers are unit-tagged strings (`"2.0 bohr"`,
//! `"-0.02 hartree"`, `"0.05 au"`) converted to Hartree atomic units on
//! load; bare numbers are reserved for counts and dimensionless knobs.
//! Unknown keys anywhere are errors, as are missing sections that a
//! subcommand needs.

use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use khsurf::dressing::DressingConfig;
use khsurf::drive::{DriveSpec, Envelope};
use khsurf::geometry::{SurfaceKind, SurfaceSpec};
use khsurf::shift::FlowPolicy;
use khsurf::spectra::AxisBc;
use khsurf::units;
use khsurf::Grid2;

/// Configuration-level failure: bad schema, bad units, inconsistent
/// sections. Always maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// A number tagged with a unit, stored converted to atomic units.
///
/// Accepted tags: `bohr`, `nm` (lengths); `hartree`/`ha`, `ev`, `mev`
/// (energies); `fs` (times); `rad` (angles) and `au` (anything already
/// atomic).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(try_from = "String")]
pub struct Quantity(pub f64);

impl TryFrom<String> for Quantity {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let mut parts = s.split_whitespace();
        let (value, unit) = match (parts.next(), parts.next(), parts.next()) {
            (Some(v), Some(u), None) => (v, u),
            _ => {
                return Err(format!(
                    "quantity {s:?} must be \"<value> <unit>\" (e.g. \"2.0 bohr\")"
                ))
            }
        };
        let value: f64 = value
            .parse()
            .map_err(|_| format!("quantity {s:?} has a malformed numeric part"))?;
        let factor = match unit.to_ascii_lowercase().as_str() {
            "bohr" | "hartree" | "ha" | "rad" | "au" => 1.0,
            "nm" => units::nm_to_bohr(1.0),
            "ev" => units::ev_to_hartree(1.0),
            "mev" => units::mev_to_hartree(1.0),
            "fs" => units::fs_to_au(1.0),
            other => return Err(format!("unknown unit {other:?} in quantity {s:?}")),
        };
        Ok(Quantity(value * factor))
    }
}

/// Top-level document. Every section is optional at parse time; each
/// subcommand states which ones it needs.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: Option<SurfaceSection>,
    pub drive: Option<DriveSection>,
    pub dressing: Option<DressingSection>,
    pub solve: Option<SolveSection>,
    pub propagate: Option<PropagateSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.output.validate()?;
        Ok(cfg)
    }

    pub fn surface(&self) -> Result<&SurfaceSection> {
        self.surface.as_ref().ok_or_else(|| ConfigError("missing [surface] section".into()))
    }

    pub fn drive(&self) -> Result<&DriveSection> {
        self.drive.as_ref().ok_or_else(|| ConfigError("missing [drive] section".into()))
    }

    pub fn dressing(&self) -> Result<&DressingSection> {
        self.dressing.as_ref().ok_or_else(|| ConfigError("missing [dressing] section".into()))
    }

    pub fn solve(&self) -> Result<&SolveSection> {
        self.solve.as_ref().ok_or_else(|| ConfigError("missing [solve] section".into()))
    }

    pub fn propagate(&self) -> Result<&PropagateSection> {
        self.propagate.as_ref().ok_or_else(|| ConfigError("missing [propagate] section".into()))
    }

    /// Boundary conditions: the `[solve]` section wins; otherwise periodic
    /// drive axes wrap and everything else truncates.
    pub fn boundary(&self) -> Result<[AxisBc; 2]> {
        if let Some(solve) = &self.solve {
            return solve.boundary();
        }
        let periodic = self.drive.as_ref().map(|d| d.periodic).unwrap_or([false, false]);
        Ok(periodic.map(|p| if p { AxisBc::Periodic } else { AxisBc::Dirichlet }))
    }

    /// Particle mass in electron masses (from the drive section; bare scenes
    /// default to the electron).
    pub fn mass(&self) -> f64 {
        self.drive.as_ref().map(|d| d.mass).unwrap_or(1.0)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n1: usize,
    pub n2: usize,
    pub q1_min: Quantity,
    pub q1_max: Quantity,
    pub q2_min: Quantity,
    pub q2_max: Quantity,
}

impl GridSection {
    pub fn build(&self) -> Result<Grid2> {
        Grid2::new(self.n1, self.n2, self.q1_min.0, self.q1_max.0, self.q2_min.0, self.q2_max.0)
            .map_err(|e| ConfigError(format!("surface.grid: {e}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    /// One of `plane`, `cylinder`, `sphere_patch`, `gaussian_bump`,
    /// `height_samples`.
    pub kind: String,
    pub radius: Option<Quantity>,
    pub amplitude: Option<Quantity>,
    pub sigma: Option<Quantity>,
    /// CSV of `n1` rows with `n2` height values each (for `height_samples`).
    pub file: Option<String>,
    pub grid: GridSection,
}

impl SurfaceSection {
    pub fn build(&self) -> Result<SurfaceSpec> {
        let grid = self.grid.build()?;
        let forbid = |field: &str, present: bool| -> Result<()> {
            if present {
                return err(format!("surface.{field} does not apply to kind {:?}", self.kind));
            }
            Ok(())
        };
        let kind = match self.kind.as_str() {
            "plane" => {
                forbid("radius", self.radius.is_some())?;
                forbid("amplitude", self.amplitude.is_some())?;
                forbid("sigma", self.sigma.is_some())?;
                forbid("file", self.file.is_some())?;
                SurfaceKind::Plane
            }
            "cylinder" | "sphere_patch" => {
                forbid("amplitude", self.amplitude.is_some())?;
                forbid("sigma", self.sigma.is_some())?;
                forbid("file", self.file.is_some())?;
                let radius = self
                    .radius
                    .ok_or_else(|| ConfigError(format!("surface.radius is required for {}", self.kind)))?
                    .0;
                if self.kind == "cylinder" {
                    SurfaceKind::Cylinder { radius }
                } else {
                    SurfaceKind::SpherePatch { radius }
                }
            }
            "gaussian_bump" => {
                forbid("radius", self.radius.is_some())?;
                forbid("file", self.file.is_some())?;
                let amplitude = self
                    .amplitude
                    .ok_or_else(|| ConfigError("surface.amplitude is required for gaussian_bump".into()))?
                    .0;
                let sigma = self
                    .sigma
                    .ok_or_else(|| ConfigError("surface.sigma is required for gaussian_bump".into()))?
                    .0;
                SurfaceKind::GaussianBump { amplitude, sigma }
            }
            "height_samples" => {
                forbid("radius", self.radius.is_some())?;
                forbid("amplitude", self.amplitude.is_some())?;
                forbid("sigma", self.sigma.is_some())?;
                let file = self
                    .file
                    .as_ref()
                    .ok_or_else(|| ConfigError("surface.file is required for height_samples".into()))?;
                let heights = read_height_samples(Path::new(file), grid.shape())?;
                SurfaceKind::Monge { heights }
            }
            other => return err(format!("unknown surface kind {other:?}")),
        };
        Ok(SurfaceSpec { kind, grid })
    }
}

/// Parse a plain CSV matrix of heights (comma- or whitespace-separated, `#`
/// comments allowed) and check it against the grid shape.
fn read_height_samples(path: &Path, shape: (usize, usize)) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse::<f64>)
            .collect();
        match row {
            Ok(r) => rows.push(r),
            Err(_) => {
                return err(format!(
                    "{}:{}: malformed height row",
                    path.display(),
                    lineno + 1
                ))
            }
        }
    }
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return err(format!(
            "{}: height samples must form a {} x {} matrix",
            path.display(),
            shape.0,
            shape.1
        ));
    }
    let mut heights = Array2::zeros(shape);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            heights[[i, j]] = *v;
        }
    }
    Ok(heights)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    /// Vector-potential amplitude in the embedding frame, atomic units.
    pub amplitude: [Quantity; 3],
    pub omega: Quantity,
    /// Particle charge in units of the elementary charge.
    #[serde(default = "default_charge")]
    pub charge: f64,
    /// Particle mass in electron masses.
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub envelope: Option<EnvelopeSection>,
    /// Which chart axes wrap periodically.
    #[serde(default)]
    pub periodic: [bool; 2],
}

fn default_charge() -> f64 {
    -1.0
}

fn default_mass() -> f64 {
    1.0
}

impl DriveSection {
    pub fn build(&self) -> Result<DriveSpec> {
        let envelope = match &self.envelope {
            None => Envelope::Homogeneous,
            Some(e) => e.build()?,
        };
        let spec = DriveSpec {
            amplitude: [self.amplitude[0].0, self.amplitude[1].0, self.amplitude[2].0],
            omega: self.omega.0,
            charge: self.charge,
            mass: self.mass,
            envelope,
            periodic: self.periodic,
        };
        spec.validate().map_err(|e| ConfigError(format!("drive: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    /// Only `gaussian` is defined.
    pub kind: String,
    pub center: Option<[Quantity; 3]>,
    pub sigma: Option<Quantity>,
}

impl EnvelopeSection {
    fn build(&self) -> Result<Envelope> {
        if self.kind != "gaussian" {
            return err(format!("unknown envelope kind {:?}", self.kind));
        }
        let center = self
            .center
            .ok_or_else(|| ConfigError("drive.envelope.center is required".into()))?;
        let sigma = self
            .sigma
            .ok_or_else(|| ConfigError("drive.envelope.sigma is required".into()))?;
        Ok(Envelope::Gaussian {
            center: [center[0].0, center[1].0, center[2].0],
            sigma: sigma.0,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DressingSection {
    /// Quiver amplitudes to run (lengths). Omit to derive the single value
    /// carried by the drive.
    pub alpha0: Option<Vec<Quantity>>,
    pub n_max: usize,
    pub n_theta: usize,
    /// `strict` (default) fails when an oscillation leaves the chart;
    /// `clamp` extends fields by their edge values and masks the nodes.
    pub policy: Option<String>,
}

impl DressingSection {
    pub fn build(&self) -> Result<DressingConfig> {
        let policy = match self.policy.as_deref() {
            None | Some("strict") => FlowPolicy::Strict,
            Some("clamp") => FlowPolicy::ClampMask,
            Some(other) => return err(format!("unknown dressing policy {other:?}")),
        };
        let cfg = DressingConfig { n_max: self.n_max, n_theta: self.n_theta, policy };
        cfg.validate().map_err(|e| ConfigError(format!("dressing: {e}")))?;
        Ok(cfg)
    }

    /// Amplitude list for sweeps; `fallback` is the drive-derived value.
    pub fn amplitudes(&self, fallback: f64) -> Vec<f64> {
        match &self.alpha0 {
            Some(list) if !list.is_empty() => list.iter().map(|q| q.0).collect(),
            _ => vec![fallback],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    /// Number of eigenpairs.
    pub k: usize,
    /// Shift-invert target energy.
    pub shift: Quantity,
    /// Per-axis boundary: `dirichlet` or `periodic`.
    pub boundary: [String; 2],
}

impl SolveSection {
    pub fn boundary(&self) -> Result<[AxisBc; 2]> {
        let mut bc = [AxisBc::Dirichlet; 2];
        for (axis, name) in self.boundary.iter().enumerate() {
            bc[axis] = match name.as_str() {
                "dirichlet" => AxisBc::Dirichlet,
                "periodic" => AxisBc::Periodic,
                other => return err(format!("unknown boundary {other:?} on axis {axis}")),
            };
        }
        Ok(bc)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateSection {
    pub dt: Quantity,
    pub n_steps: usize,
    /// Snapshot stride in steps (0: endpoint only).
    #[serde(default)]
    pub sample_every: usize,
    /// Harmonic terms kept in the stepped operator (0: all retained).
    #[serde(default)]
    pub n_harmonics_used: usize,
    pub initial: InitialSection,
    /// Also propagate in the laboratory frame and report the gap.
    #[serde(default)]
    pub crosscheck: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// `ground` (needs `[solve]` for the shift) or `gaussian`.
    pub kind: String,
    pub width: Option<Quantity>,
    pub center: Option<[Quantity; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    /// Only `csv` is defined.
    pub format: Option<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: None, format: None }
    }
}

impl OutputSection {
    fn validate(&self) -> Result<()> {
        match self.format.as_deref() {
            None | Some("csv") => Ok(()),
            Some(other) => err(format!("unknown output format {other:?}")),
        }
    }

    pub fn directory(&self) -> &str {
        self.directory.as_deref().unwrap_or("out")
    }
}
