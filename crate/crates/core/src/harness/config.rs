//! Versioned JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::Variant;
use crate::classical::Placement;
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::quantum::{GuardPolicy, Ladder};
use crate::scaling::ScaledParams;
use crate::wigner::{fft_friendly_len, MomentumDerivative};

/// Version of the configuration and report layouts.
pub const SCHEMA_VERSION: u32 = 1;

/// Dynamical formulation driven by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Classical,
    QuantumC,
    QuantumRho,
    Wigner,
    Vlasov,
    TwoLevel,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Classical,
        ModelKind::QuantumC,
        ModelKind::QuantumRho,
        ModelKind::Wigner,
        ModelKind::Vlasov,
        ModelKind::TwoLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Classical => "classical",
            ModelKind::QuantumC => "quantum-c",
            ModelKind::QuantumRho => "quantum-rho",
            ModelKind::Wigner => "wigner",
            ModelKind::Vlasov => "vlasov",
            ModelKind::TwoLevel => "two-level",
        }
    }

    fn uses_ladder(self) -> bool {
        !matches!(self, ModelKind::Classical | ModelKind::TwoLevel)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "model", name: s.to_string() })
    }
}

/// Initial matter state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    /// Occupied momentum level of the quantum models (upper level of the
    /// two-level model).
    pub n0: i64,
    /// Classical particle count.
    pub particles: usize,
    pub placement: Placement,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { n0: 0, particles: 10_000, placement: Placement::Equispaced }
    }
}

/// Discretization of the quantum and phase-space models.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// `[n_min, n_max]`; defaults to [`Ladder::default_for`].
    pub ladder: Option<[i64; 2]>,
    /// Angle points of the phase-space grid; defaults to 4(n_max − n_min) + 1.
    pub theta_points: Option<usize>,
    pub momentum_derivative: MomentumDerivative,
    pub guard: GuardPolicy,
}

/// Where and what to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub time_series: bool,
    pub snapshots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, time_series: true, snapshots: true }
    }
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelKind,
    pub rho_bar: f64,
    pub delta: f64,
    /// Field seed A(0) as `[re, im]`.
    #[serde(default = "default_seed")]
    pub a0: Complex64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub grid: GridSpec,
    pub tau_end: f64,
    /// Stop once this many intensity peaks are confirmed.
    #[serde(default)]
    pub stop_after_peaks: Option<u32>,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn default_seed() -> Complex64 {
    Complex64::new(1e-4, 0.0)
}

/// Adaptive settings used unless a config says otherwise.
pub fn default_integrator(sample_dt: f64) -> IntegratorConfig {
    IntegratorConfig::rk45(1e-11, 1e-13, sample_dt)
}

impl RunConfig {
    /// Cold start with seed 10⁻⁴, run to the second peak or `tau_end`.
    pub fn new(model: ModelKind, rho_bar: f64, delta: f64, tau_end: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model,
            rho_bar,
            delta,
            a0: default_seed(),
            initial: InitialSpec::default(),
            grid: GridSpec::default(),
            tau_end,
            stop_after_peaks: Some(2),
            integrator: default_integrator(0.01),
            variant: Variant::default(),
            outputs: OutputSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn params(&self) -> Result<ScaledParams> {
        ScaledParams::new(self.rho_bar, self.delta)
    }

    pub fn ladder(&self) -> Result<Ladder> {
        match self.grid.ladder {
            Some([lo, hi]) => Ladder::new(lo, hi),
            None => Ok(Ladder::default_for(self.initial.n0, self.rho_bar)),
        }
    }

    pub fn theta_points(&self) -> Result<usize> {
        let ladder = self.ladder()?;
        Ok(self.grid.theta_points.unwrap_or(fft_friendly_len(4 * ladder.span() + 1)))
    }

    /// Checks field ranges and model/initial-state consistency.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.params()?;
        if !(self.a0.re.is_finite() && self.a0.im.is_finite()) {
            return Err(Error::Config("a0 must be finite".into()));
        }
        if !(self.tau_end.is_finite() && self.tau_end >= 0.0) {
            return Err(Error::Config(format!("tau_end {} must be finite and >= 0", self.tau_end)));
        }
        self.integrator.validate()?;
        if self.stop_after_peaks == Some(0) {
            return Err(Error::Config("stop_after_peaks must be at least 1".into()));
        }
        match self.model {
            ModelKind::Classical if self.initial.particles == 0 => {
                return Err(Error::Config("classical runs need at least one particle".into()));
            }
            m if m.uses_ladder() => {
                let ladder = self.ladder()?;
                if !ladder.contains(self.initial.n0) {
                    return Err(Error::Config(format!(
                        "start level {} outside ladder [{}, {}]",
                        self.initial.n0,
                        ladder.n_min(),
                        ladder.n_max()
                    )));
                }
                if matches!(m, ModelKind::Wigner | ModelKind::Vlasov) {
                    let required = 4 * ladder.span() + 1;
                    let given = self.theta_points()?;
                    if given < required {
                        return Err(Error::GridTooSmall { required, given });
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::new(ModelKind::Vlasov, 10.0, 1.0, 40.0);
        cfg.grid.ladder = Some([-60, 30]);
        cfg.initial.placement = Placement::SeededRandom { seed: 3 };
        let text = cfg.to_json().unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let text = r#"{
            "schema_version": 1, "model": "quantum-c", "rho_bar": 1.0, "delta": 1.0,
            "tau_end": 30.0,
            "integrator": {"method": "rk4-fixed", "dt": 0.01, "max_steps": 100000}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.a0, Complex64::new(1e-4, 0.0));
        assert_eq!(cfg.ladder().unwrap(), Ladder::new(-12, 8).unwrap());
        assert_eq!(cfg.integrator.output_stride, 1);
        assert_eq!(cfg.variant, Variant::ConsistentReduction);
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let base = RunConfig::new(ModelKind::Wigner, 1.0, 1.0, 10.0);
        let mut c = base.clone();
        c.schema_version = 99;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.grid.theta_points = Some(10);
        assert!(matches!(c.validate(), Err(Error::GridTooSmall { .. })));
        let mut c = base.clone();
        c.grid.ladder = Some([-12, 8]);
        c.initial.n0 = 40;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.rho_bar = -1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::new(ModelKind::Classical, 1.0, 0.0, 10.0);
        c.initial.particles = 0;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"schema_version":1,"bogus":1}"#).is_err());
    }

    #[test]
    fn model_names() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("quantum".parse::<ModelKind>().is_err());
    }
}
