//! Model builders: the driven double-well (Duffing) oscillator, two-mode
//! second-harmonic generation, and small validation systems.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::Quadrature;
use crate::operator::{OpenSystemModel, OperatorExpr, TimeCoefficient};

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn require_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {x}")))
    }
}

/// Damped, periodically driven particle in the potential `x^4/4 - x^2/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingParams {
    /// Forcing amplitude.
    pub g: f64,
    /// Damping rate.
    pub gamma: f64,
    /// Phase-space scale factor `s`; the effective Planck constant is `1/s^2`.
    pub scale: f64,
    #[serde(default = "unit")]
    pub drive_frequency: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self { g: 0.3, gamma: 0.125, scale: 100.0, drive_frequency: 1.0 }
    }
}

impl DuffingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("g", self.g), ("gamma", self.gamma), ("scale", self.scale), ("drive_frequency", self.drive_frequency)] {
            require_finite(name, x)?;
        }
        if self.scale < 1.0 {
            return Err(invalid(format!("scale must be >= 1, got {}", self.scale)));
        }
        if self.gamma < 0.0 {
            return Err(invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Coefficients of `H = c_pp P^2 + c_x4 X^4 + c_x2 X^2 + c_drive cos(w t) X + c_xp (XP + PX)`
    /// and of `L = c_l a`, in scaled units.
    pub fn coefficient_table(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("P^2", 0.5),
            ("X^4", 0.25 / (self.scale * self.scale)),
            ("X^2", -0.5),
            ("cos(w t) X", -self.g * self.scale),
            ("w", self.drive_frequency),
            ("XP + PX", 0.5 * self.gamma),
            ("L = c a", (2.0 * self.gamma).sqrt()),
        ]
    }
}

/// Single-mode model in scaled coordinates `X = s x`, `P = s p`, `[X, P] = i`:
///
/// ```text
/// H = P^2/2 + X^4/(4 s^2) - X^2/2 - g s cos(w t) X + (Gamma/2)(XP + PX),   L = sqrt(2 Gamma) a
/// ```
///
/// The Lindblad operator damps both quadratures at rate `Gamma`; the `XP + PX`
/// term removes it from `x` and doubles it on `p`, so the centroid follows
/// `x'' = -x^3 + x - 2 Gamma x' + g cos(w t)`.
pub fn build_duffing(params: &DuffingParams) -> Result<OpenSystemModel> {
    params.validate()?;
    let q = || OperatorExpr::quadrature(0, Quadrature::Q);
    let p = || OperatorExpr::quadrature(0, Quadrature::P);
    let s = params.scale;
    let kinetic = p().times(p()).scale(0.5);
    let quartic = OperatorExpr::Product(vec![q(), q(), q(), q()]).scale(0.25 / (s * s));
    let quadratic = q().times(q()).scale(-0.5);
    let drive = q().scale_t(TimeCoefficient::cosine(-params.g * s, params.drive_frequency, 0.0));
    let friction = q().times(p()).plus(p().times(q())).scale(0.5 * params.gamma);
    let h = OperatorExpr::Sum(vec![kinetic, quartic, quadratic, drive, friction]);
    let lindblads = if params.gamma > 0.0 { vec![OperatorExpr::a(0).scale((2.0 * params.gamma).sqrt())] } else { vec![] };
    OpenSystemModel::new(1.0, h, lindblads, 1)
}

/// Two-mode cavity with a driven fundamental and its second harmonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShgParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub chi: f64,
    pub f: f64,
}

impl ShgParams {
    /// Chaotic regime: `kappa2 = kappa1/4`, `delta = -kappa1`, `chi = kappa1/2`, `f = 62 kappa1`.
    pub fn chaotic() -> Self {
        Self { kappa1: 1.0, kappa2: 0.25, delta1: -1.0, delta2: -1.0, chi: 0.5, f: 62.0 }
    }

    /// Same ratios at drive `f = 5 kappa1`, small enough for a dense oracle.
    pub fn desk_scale() -> Self {
        Self { f: 5.0, ..Self::chaotic() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("chi", self.chi),
            ("f", self.f),
        ] {
            require_finite(name, x)?;
        }
        if !(self.kappa1 > 0.0 && self.kappa2 > 0.0) {
            return Err(invalid(format!("kappa1 and kappa2 must be positive, got {} and {}", self.kappa1, self.kappa2)));
        }
        Ok(())
    }

    pub fn coefficient_table(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("a1^+ a1", self.delta1),
            ("a2^+ a2", self.delta2),
            ("i (a1^+ - a1)", self.f),
            ("i (a1^+2 a2 - a1^2 a2^+)", 0.5 * self.chi),
            ("L1 = c a1", (2.0 * self.kappa1).sqrt()),
            ("L2 = c a2", (2.0 * self.kappa2).sqrt()),
        ]
    }
}

/// `H = delta1 a1^+ a1 + delta2 a2^+ a2 + i f (a1^+ - a1) + i (chi/2)(a1^+2 a2 - a1^2 a2^+)`,
/// `L1 = sqrt(2 kappa1) a1`, `L2 = sqrt(2 kappa2) a2`, with `hbar = 1`.
pub fn build_shg(params: &ShgParams) -> Result<OpenSystemModel> {
    params.validate()?;
    let i = C64::new(0.0, 1.0);
    let (a1, a1d, a2, a2d) = (OperatorExpr::a(0), OperatorExpr::ad(0), OperatorExpr::a(1), OperatorExpr::ad(1));
    let drive = a1d.clone().plus(a1.clone().scale(-1.0)).scale_c(i * params.f);
    let up = OperatorExpr::Product(vec![a1d.clone(), a1d, a2]);
    let down = OperatorExpr::Product(vec![a1.clone(), a1.clone(), a2d]).scale(-1.0);
    let coupling = up.plus(down).scale_c(i * (0.5 * params.chi));
    let h = OperatorExpr::Sum(vec![
        OperatorExpr::number(0).scale(params.delta1),
        OperatorExpr::number(1).scale(params.delta2),
        drive,
        coupling,
    ]);
    let lindblads = vec![a1.scale((2.0 * params.kappa1).sqrt()), OperatorExpr::a(1).scale((2.0 * params.kappa2).sqrt())];
    OpenSystemModel::new(1.0, h, lindblads, 2)
}

/// Damped, resonantly driven harmonic oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub omega: f64,
    pub kappa: f64,
    #[serde(default)]
    pub f: f64,
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("omega", self.omega), ("kappa", self.kappa), ("f", self.f)] {
            require_finite(name, x)?;
        }
        if self.kappa < 0.0 {
            return Err(invalid(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// `H = omega a^+ a + i f (a^+ - a)`, `L = sqrt(2 kappa) a`.
pub fn build_damped_oscillator(params: &OscillatorParams) -> Result<OpenSystemModel> {
    params.validate()?;
    let drive = OperatorExpr::ad(0).plus(OperatorExpr::a(0).scale(-1.0)).scale_c(C64::new(0.0, params.f));
    let h = OperatorExpr::number(0).scale(params.omega).plus(drive);
    OpenSystemModel::new(1.0, h, vec![OperatorExpr::a(0).scale((2.0 * params.kappa).sqrt())], 1)
}

/// Pure energy decay, `H = 0`, `L = sqrt(gamma) a`.
pub fn build_decay(gamma: f64) -> Result<OpenSystemModel> {
    require_finite("gamma", gamma)?;
    if gamma < 0.0 {
        return Err(invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    OpenSystemModel::new(1.0, OperatorExpr::Identity.scale(0.0), vec![OperatorExpr::a(0).scale(gamma.sqrt())], 1)
}

/// Environment-dominated limit: `H = 0`, a single Lindblad `L = sqrt(rate) Q`.
pub fn build_wide_open(rate: f64) -> Result<OpenSystemModel> {
    require_finite("rate", rate)?;
    if rate <= 0.0 {
        return Err(invalid(format!("rate must be positive, got {rate}")));
    }
    let l = OperatorExpr::quadrature(0, Quadrature::Q).scale(rate.sqrt());
    OpenSystemModel::new(1.0, OperatorExpr::Identity.scale(0.0), vec![l], 1)
}

/// Model selector for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Duffing(DuffingParams),
    Shg(ShgParams),
    Oscillator(OscillatorParams),
    Decay { gamma: f64 },
    WideOpen { rate: f64 },
}

impl ModelConfig {
    pub fn build(&self) -> Result<OpenSystemModel> {
        match self {
            ModelConfig::Duffing(p) => build_duffing(p),
            ModelConfig::Shg(p) => build_shg(p),
            ModelConfig::Oscillator(p) => build_damped_oscillator(p),
            ModelConfig::Decay { gamma } => build_decay(*gamma),
            ModelConfig::WideOpen { rate } => build_wide_open(*rate),
        }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            ModelConfig::Shg(_) => 2,
            _ => 1,
        }
    }

    /// Phase-space unit of the model's classical picture: the Duffing scale, otherwise 1.
    pub fn phase_space_scale(&self) -> f64 {
        match self {
            ModelConfig::Duffing(p) => p.scale,
            _ => 1.0,
        }
    }

    /// Human-readable coefficient table followed by the expanded operator terms.
    pub fn describe(&self) -> Result<String> {
        let model = self.build()?;
        let table = match self {
            ModelConfig::Duffing(p) => p.coefficient_table(),
            ModelConfig::Shg(p) => p.coefficient_table(),
            ModelConfig::Oscillator(p) => vec![
                ("a^+ a", p.omega),
                ("i (a^+ - a)", p.f),
                ("L = c a", (2.0 * p.kappa).sqrt()),
            ],
            ModelConfig::Decay { gamma } => vec![("L = c a", gamma.sqrt())],
            ModelConfig::WideOpen { rate } => vec![("L = c Q", rate.sqrt())],
        };
        let mut out = String::from("coefficients:\n");
        for (name, value) in table {
            out.push_str(&format!("  {name:<28} {value}\n"));
        }
        out.push_str(&model.describe());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockState;
    use crate::integrator::CompiledModel;
    use crate::noise::NoiseIncrement;

    #[test]
    fn builders_produce_self_adjoint_hamiltonians() {
        let configs = [
            ModelConfig::Duffing(DuffingParams::default()),
            ModelConfig::Shg(ShgParams::chaotic()),
            ModelConfig::Oscillator(OscillatorParams { omega: 1.0, kappa: 0.3, f: 0.7 }),
            ModelConfig::Decay { gamma: 1.0 },
            ModelConfig::WideOpen { rate: 1.0 },
        ];
        for config in configs {
            let model = config.build().unwrap();
            assert!(model.hamiltonian_asymmetry() <= 1e-12, "{config:?}");
            assert_eq!(model.n_modes, config.n_modes());
            assert!(config.describe().unwrap().contains("coefficients:"));
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(build_duffing(&DuffingParams { scale: 0.5, ..Default::default() }).is_err());
        assert!(build_duffing(&DuffingParams { gamma: -0.1, ..Default::default() }).is_err());
        assert!(build_shg(&ShgParams { kappa2: 0.0, ..ShgParams::desk_scale() }).is_err());
        assert!(build_shg(&ShgParams { f: f64::NAN, ..ShgParams::desk_scale() }).is_err());
        assert!(build_wide_open(0.0).is_err());
    }

    #[test]
    fn shg_vacuum_is_stationary_without_drive() {
        let model = build_shg(&ShgParams { f: 0.0, ..ShgParams::desk_scale() }).unwrap();
        let compiled = CompiledModel::new(&model);
        let mut psi = FockState::vacuum(&[4, 3]).unwrap();
        for k in 0..100 {
            psi = compiled.step_with_noise(&psi, k as f64 * 0.01, &NoiseIncrement { increments: vec![C64::new(0.03, -0.01); 2], dt: 0.01 }, true).unwrap().0;
        }
        assert_eq!(psi, FockState::vacuum(&[4, 3]).unwrap());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = ModelConfig::Shg(ShgParams::desk_scale());
        let text = toml::to_string(&config).unwrap();
        assert!(text.contains("kind = \"shg\""));
        assert_eq!(toml::from_str::<ModelConfig>(&text).unwrap(), config);
        let duffing: ModelConfig = toml::from_str("kind = \"duffing\"\ng = 0.3\ngamma = 0.125\nscale = 100.0\n").unwrap();
        assert_eq!(duffing, ModelConfig::Duffing(DuffingParams::default()));
        assert!(toml::from_str::<ModelConfig>("kind = \"duffing\"\ng = 0.3\ngamma = 0.1\nscale = 1.0\ntypo = 1\n").is_err());
    }
}
