//! Single-trajectory integration of the quantum state diffusion equation
//!
//! ```text
//! |dpsi> = -(i/hbar) H |psi> dt
//!        + sum_m ( <L_m^+> L_m - L_m^+ L_m / 2 - <L_m^+><L_m> / 2 ) |psi> dt
//!        + sum_m ( L_m - <L_m> ) |psi> dxi_m
//! ```
//!
//! The drift is advanced with classical RK4 (noise held at zero) and the
//! fluctuation is added with one Euler-Maruyama step evaluated at the start
//! of the step. The expectations `<L_m>` are frozen at the step-start state
//! for every RK stage, which keeps the stochastic term Ito-consistent.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::compiled::{CompiledOperator, Scratch};
use crate::error::{Error, Result};
use crate::fock::{dot, norm_sqr, FockState};
use crate::noise::{sample_noise, NoiseIncrement, TrajectoryRng};
use crate::operator::OpenSystemModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// RK4 on the drift plus an Euler step on the fluctuation.
    #[default]
    Rk4Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_true")]
    pub renormalize_every_step: bool,
}

fn default_true() -> bool {
    true
}

impl IntegratorConfig {
    pub fn new(dt: f64, rng_seed: u64) -> Self {
        Self { dt, scheme: Scheme::Rk4Euler, rng_seed, renormalize_every_step: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.dt.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("dt must be positive and finite, got {}", self.dt)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    pub pre_normalization_norm: f64,
    /// Probability lost to basis truncation during this step (recentering and
    /// capacity shrinking; ladder action at the boundary is not counted).
    pub dropped_probability: f64,
    /// `<L_m>` at the start of the step.
    pub lindblad_expectations: Vec<C64>,
}

/// An [`OpenSystemModel`] expanded into polynomial form, ready for repeated
/// application.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    pub hbar: f64,
    pub n_modes: usize,
    pub(crate) hamiltonian: CompiledOperator,
    pub(crate) lindblads: Vec<CompiledOperator>,
    pub(crate) lindblad_products: Vec<CompiledOperator>,
    /// `-(i/hbar) H - (1/2) sum_m L_m^+ L_m`
    pub(crate) generator: CompiledOperator,
    /// c-number energy removed from `H`; only contributes a global phase.
    pub(crate) energy_offset: CompiledOperator,
}

impl CompiledModel {
    pub fn new(model: &OpenSystemModel) -> Self {
        let hamiltonian = model.hamiltonian.compile();
        let lindblads: Vec<_> = model.lindblads.iter().map(|l| l.compile()).collect();
        let lindblad_products = lindblads.iter().map(|l| l.adjoint().mul(l)).collect();
        Self::assemble(model.hbar, model.n_modes, hamiltonian, lindblads, lindblad_products, CompiledOperator::zero())
    }

    fn assemble(
        hbar: f64,
        n_modes: usize,
        hamiltonian: CompiledOperator,
        lindblads: Vec<CompiledOperator>,
        lindblad_products: Vec<CompiledOperator>,
        energy_offset: CompiledOperator,
    ) -> Self {
        let mut generator = hamiltonian.scaled(C64::new(0.0, -1.0 / hbar));
        for p in &lindblad_products {
            generator = generator.add(&p.scaled(C64::new(-0.5, 0.0)));
        }
        Self { hbar, n_modes, hamiltonian, lindblads, lindblad_products, generator, energy_offset }
    }

    /// The same model written in local operators about a displaced origin,
    /// `a_k = a_k(local) + shift_k`. The c-number part of the displaced
    /// Hamiltonian is moved to `energy_offset`.
    pub fn displaced(&self, shifts: &[C64]) -> Self {
        let (offset, hamiltonian) = self.hamiltonian.substitute(shifts).split_identity();
        let lindblads = self.lindblads.iter().map(|l| l.substitute(shifts)).collect();
        let products = self.lindblad_products.iter().map(|p| p.substitute(shifts)).collect();
        Self::assemble(self.hbar, self.n_modes, hamiltonian, lindblads, products, offset)
    }

    pub fn n_lindblads(&self) -> usize {
        self.lindblads.len()
    }

    pub fn hamiltonian(&self) -> &CompiledOperator {
        &self.hamiltonian
    }

    pub fn lindblads(&self) -> &[CompiledOperator] {
        &self.lindblads
    }

    /// Global phase picked up over `[t, t + dt]` from the removed c-number
    /// energy, `-(1/hbar) * integral`, by Simpson's rule.
    pub fn offset_phase(&self, t: f64, dt: f64) -> f64 {
        if self.energy_offset.terms().is_empty() {
            return 0.0;
        }
        let e = |s: f64| self.energy_offset.identity_coefficient(s).re;
        -(dt / 6.0) * (e(t) + 4.0 * e(t + 0.5 * dt) + e(t + dt)) / self.hbar
    }

    fn check_state(&self, state: &FockState) -> Result<()> {
        if state.n_modes() == self.n_modes {
            Ok(())
        } else {
            Err(Error::ModeMismatch(format!(
                "model has {} mode(s), state has {}",
                self.n_modes,
                state.n_modes()
            )))
        }
    }

    fn check_noise(&self, noise: &NoiseIncrement) -> Result<()> {
        if noise.increments.len() == self.lindblads.len() {
            Ok(())
        } else {
            Err(Error::NoiseCount { expected: self.lindblads.len(), got: noise.increments.len() })
        }
    }

    /// `<L_m>` for every Lindblad operator, plus the vectors `L_m |psi>`.
    fn lindblad_action(&self, caps: &[usize], t: f64, psi: &[C64], scratch: &mut Scratch) -> (Vec<Vec<C64>>, Vec<C64>) {
        let mut actions = Vec::with_capacity(self.lindblads.len());
        let mut expectations = Vec::with_capacity(self.lindblads.len());
        for l in &self.lindblads {
            let mut out = vec![C64::new(0.0, 0.0); psi.len()];
            l.apply_add(caps, t, psi, &mut out, scratch);
            expectations.push(dot(psi, &out));
            actions.push(out);
        }
        (actions, expectations)
    }

    /// Drift with the expectations frozen: `out = G(t) psi + sum_m conj(e_m) L_m(t) psi - c psi`,
    /// `c = sum_m |e_m|^2 / 2`.
    fn frozen_drift(&self, caps: &[usize], t: f64, expectations: &[C64], psi: &[C64], out: &mut [C64], scratch: &mut Scratch) {
        out.fill(C64::new(0.0, 0.0));
        self.generator.apply_add(caps, t, psi, out, scratch);
        let mut constant = 0.0;
        for (l, e) in self.lindblads.iter().zip(expectations) {
            l.apply_add_scaled(caps, t, e.conj(), psi, out, scratch);
            constant += 0.5 * e.norm_sqr();
        }
        for (o, p) in out.iter_mut().zip(psi) {
            *o -= p * constant;
        }
    }

    /// Drift vector evaluated with expectations taken from `state` itself.
    pub fn drift_vector(&self, state: &FockState, t: f64) -> Result<FockState> {
        self.check_state(state)?;
        let caps = state.capacities();
        let mut scratch = Scratch::default();
        let (_, expectations) = self.lindblad_action(&caps, t, state.amplitudes(), &mut scratch);
        let mut out = vec![C64::new(0.0, 0.0); state.dim()];
        self.frozen_drift(&caps, t, &expectations, state.amplitudes(), &mut out, &mut scratch);
        FockState::from_amplitudes(&caps, out)
    }

    /// `sum_m (L_m - <L_m>) |psi> dxi_m`.
    pub fn fluctuation_vector(&self, state: &FockState, noise: &NoiseIncrement, t: f64) -> Result<FockState> {
        self.check_state(state)?;
        self.check_noise(noise)?;
        let caps = state.capacities();
        let mut scratch = Scratch::default();
        let psi = state.amplitudes();
        let (actions, expectations) = self.lindblad_action(&caps, t, psi, &mut scratch);
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        add_fluctuation(&mut out, psi, &actions, &expectations, &noise.increments);
        FockState::from_amplitudes(&caps, out)
    }

    /// One RK4 + Euler-Maruyama step with an explicit noise increment.
    pub fn step_with_noise(
        &self,
        state: &FockState,
        t: f64,
        noise: &NoiseIncrement,
        renormalize: bool,
    ) -> Result<(FockState, StepDiagnostics)> {
        self.check_state(state)?;
        self.check_noise(noise)?;
        let dt = noise.dt;
        let caps = state.capacities();
        let psi = state.amplitudes();
        let n = psi.len();
        let mut scratch = Scratch::default();
        let (actions, expectations) = self.lindblad_action(&caps, t, psi, &mut scratch);

        let mut k = vec![C64::new(0.0, 0.0); n];
        let mut acc = psi.to_vec();
        let mut stage = vec![C64::new(0.0, 0.0); n];
        let weights = [1.0, 2.0, 2.0, 1.0];
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let ts = t + offsets[s] * dt;
            if s == 0 {
                self.frozen_drift(&caps, ts, &expectations, psi, &mut k, &mut scratch);
            } else {
                let h = offsets[s] * dt;
                for ((st, p), kk) in stage.iter_mut().zip(psi).zip(&k) {
                    *st = p + kk * h;
                }
                self.frozen_drift(&caps, ts, &expectations, &stage, &mut k, &mut scratch);
            }
            let w = weights[s] * dt / 6.0;
            for (a, kk) in acc.iter_mut().zip(&k) {
                *a += kk * w;
            }
        }
        add_fluctuation(&mut acc, psi, &actions, &expectations, &noise.increments);

        if acc.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::NonFinite { t });
        }
        let norm = norm_sqr(&acc).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if renormalize {
            acc.iter_mut().for_each(|a| *a /= norm);
        }
        let diagnostics = StepDiagnostics {
            pre_normalization_norm: norm,
            dropped_probability: 0.0,
            lindblad_expectations: expectations,
        };
        Ok((FockState::from_amplitudes(&caps, acc)?, diagnostics))
    }

    /// One step drawing the noise from `rng`.
    pub fn step(
        &self,
        state: &FockState,
        t: f64,
        config: &IntegratorConfig,
        rng: &mut TrajectoryRng,
    ) -> Result<(FockState, StepDiagnostics)> {
        let noise = sample_noise(rng, self.n_lindblads(), config.dt);
        self.step_with_noise(state, t, &noise, config.renormalize_every_step)
    }

    /// `<psi| G |psi>` for a compiled operator in this model's frame.
    pub fn expectation(op: &CompiledOperator, state: &FockState, t: f64) -> C64 {
        let g = op.apply(state, t);
        dot(state.amplitudes(), g.amplitudes())
    }
}

fn add_fluctuation(out: &mut [C64], psi: &[C64], actions: &[Vec<C64>], expectations: &[C64], dxi: &[C64]) {
    for ((action, e), d) in actions.iter().zip(expectations).zip(dxi) {
        if *d == C64::new(0.0, 0.0) {
            continue;
        }
        for ((o, l), p) in out.iter_mut().zip(action).zip(psi) {
            *o += (l - e * p) * d;
        }
    }
}

/// Drift vector of the QSD equation for `state` at `t`.
pub fn drift_vector(model: &OpenSystemModel, state: &FockState, t: f64) -> Result<FockState> {
    CompiledModel::new(model).drift_vector(state, t)
}

/// Fluctuation term `sum_m (L_m - <L_m>)|psi> dxi_m`.
pub fn fluctuation_vector(model: &OpenSystemModel, state: &FockState, noise: &NoiseIncrement, t: f64) -> Result<FockState> {
    CompiledModel::new(model).fluctuation_vector(state, noise, t)
}
