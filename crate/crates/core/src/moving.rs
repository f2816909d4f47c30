//! Moving excited-coherent-state basis.
//!
//! A state is held as a classical phase-space origin `(q_k, p_k)` per mode,
//! a global phase `phi`, and a local state `|psi_loc>` whose amplitudes are
//! taken on the displaced Fock states `D(q, p)|n>`:
//!
//! ```text
//! |psi> = exp(i phi) * prod_k D_k(q_k, p_k) |psi_loc>,   D(q, p) = exp(i (p Q - q P))
//! ```
//!
//! Quadratures are dimensionless (`[Q, P] = i`), so `D(q, p) = D(alpha)` with
//! `alpha = (q + i p)/sqrt 2`. Products of displacements follow
//!
//! ```text
//! D(q', p') D(q, p) = D(q + q', p + p') exp(i (q p' - p q') / 2)
//! ```
//!
//! and the phase is folded into `phi` whenever the origin moves.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::compiled::CompiledOperator;
use crate::error::{Error, Result};
use crate::fock::{dot, FockState};
use crate::integrator::{CompiledModel, IntegratorConfig, StepDiagnostics};
use crate::noise::{sample_noise, NoiseIncrement, TrajectoryRng};
use crate::operator::OperatorExpr;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Complex displacement amplitude for a phase-space shift.
pub fn alpha_of(q: f64, p: f64) -> C64 {
    C64::new(q, p) / SQRT_2
}

/// Row-major `rows x cols` block of `<m|D(alpha)|n>`.
///
/// Uses the closed form on each band `|m - n| = k`,
///
/// ```text
/// <n+k|D|n> = sqrt(n!/(n+k)!) alpha^k          exp(-|alpha|^2/2) L_n^(k)(|alpha|^2)
/// <n|D|n+k> = sqrt(n!/(n+k)!) (-conj alpha)^k exp(-|alpha|^2/2) L_n^(k)(|alpha|^2)
/// ```
///
/// with the Laguerre polynomials from their three-term recurrence in degree
/// and the prefactor in log form. The elements are those of the untruncated
/// operator; truncation only shows up as a column-norm deficit.
pub fn displacement_block(alpha: C64, rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); rows * cols];
    if alpha == C64::new(0.0, 0.0) {
        for i in 0..rows.min(cols) {
            out[i * cols + i] = C64::new(1.0, 0.0);
        }
        return out;
    }
    let x = alpha.norm_sqr();
    let log_r = alpha.norm().ln();
    let n_max = rows.max(cols);
    let mut log_fact = vec![0.0; n_max + 1];
    for j in 1..=n_max {
        log_fact[j] = log_fact[j - 1] + (j as f64).ln();
    }
    let lower_phase = alpha.arg();
    let upper_phase = (-alpha.conj()).arg();
    for k in 0..n_max {
        let lower_len = cols.min(rows.saturating_sub(k));
        let upper_len = if k == 0 { 0 } else { rows.min(cols.saturating_sub(k)) };
        let kf = k as f64;
        let (mut prev, mut cur) = (0.0, 1.0);
        for j in 0..lower_len.max(upper_len) {
            if j == 1 {
                prev = cur;
                cur = 1.0 + kf - x;
            } else if j > 1 {
                let jf = j as f64;
                let next = ((2.0 * jf - 1.0 + kf - x) * cur - (jf - 1.0 + kf) * prev) / jf;
                prev = cur;
                cur = next;
            }
            let magnitude = (0.5 * (log_fact[j] - log_fact[j + k]) + kf * log_r - 0.5 * x).exp() * cur;
            if j < lower_len {
                out[(j + k) * cols + j] = C64::from_polar(1.0, kf * lower_phase) * magnitude;
            }
            if j < upper_len {
                out[j * cols + j + k] = C64::from_polar(1.0, kf * upper_phase) * magnitude;
            }
        }
    }
    out
}

/// Square displacement matrix together with its worst column-norm deficit.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMatrix {
    pub capacity: usize,
    /// Row-major `capacity x capacity` elements `<m|D|n>`.
    pub elements: Vec<C64>,
    /// `1 - min_n sum_m |<m|D|n>|^2`.
    pub column_deficit: f64,
}

impl DisplacementMatrix {
    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.elements[m * self.capacity + n]
    }

    /// Norm deficit of a single column.
    pub fn deficit_of_column(&self, n: usize) -> f64 {
        1.0 - (0..self.capacity).map(|m| self.get(m, n).norm_sqr()).sum::<f64>()
    }
}

pub fn displacement_matrix(alpha: C64, capacity: usize) -> Result<DisplacementMatrix> {
    if capacity == 0 {
        return Err(Error::InvalidCapacity(0));
    }
    let elements = displacement_block(alpha, capacity, capacity);
    let mut m = DisplacementMatrix { capacity, elements, column_deficit: 0.0 };
    m.column_deficit = (0..capacity).map(|n| m.deficit_of_column(n)).fold(0.0, f64::max);
    Ok(m)
}

/// Combined shift and phase for applying `D(q2, p2)` after `D(q1, p1)`:
/// `D(q2, p2) D(q1, p1) = D(q1 + q2, p1 + p2) exp(i * phase)`.
pub fn compose_displacements(q1: f64, p1: f64, q2: f64, p2: f64) -> (f64, f64, f64) {
    (q1 + q2, p1 + p2, 0.5 * (q1 * p2 - p1 * q2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingFrame {
    /// Per-mode origin `(q, p)`.
    pub origins: Vec<(f64, f64)>,
    /// Global phase collected from displacement products and removed c-number energies.
    pub phase: f64,
}

impl MovingFrame {
    pub fn at_origin(n_modes: usize) -> Self {
        Self { origins: vec![(0.0, 0.0); n_modes], phase: 0.0 }
    }

    pub fn shifts(&self) -> Vec<C64> {
        self.origins.iter().map(|&(q, p)| alpha_of(q, p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Cutoff probability: the pad levels may hold at most this much.
    pub epsilon: f64,
    /// Number of top levels checked.
    pub pad_size: usize,
    pub min_capacity: usize,
    pub max_capacity: usize,
    /// Steps between recentering.
    #[serde(default = "default_interval")]
    pub check_interval: u64,
    #[serde(default = "default_recenter_tolerance")]
    pub recenter_tolerance: f64,
    /// Extra empty levels per mode during a step, so that ladder operators
    /// applied by the Runge-Kutta stages are not cut at the capacity.
    #[serde(default)]
    pub step_headroom: usize,
}

fn default_interval() -> u64 {
    1
}

fn default_recenter_tolerance() -> f64 {
    1e-8
}

impl TruncationPolicy {
    pub fn new(epsilon: f64, pad_size: usize, min_capacity: usize, max_capacity: usize) -> Self {
        Self {
            epsilon,
            pad_size,
            min_capacity,
            max_capacity,
            check_interval: 1,
            recenter_tolerance: default_recenter_tolerance(),
            step_headroom: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.pad_size < 1 {
            return bad("pad_size must be at least 1".into());
        }
        if self.min_capacity < 2 || self.min_capacity > self.max_capacity {
            return bad(format!(
                "need 2 <= min_capacity <= max_capacity, got {} and {}",
                self.min_capacity, self.max_capacity
            ));
        }
        if self.check_interval < 1 {
            return bad("check_interval must be at least 1".into());
        }
        Ok(())
    }

    /// Levels `[lo, capacity)` treated as padding when checking `width` top
    /// levels. The ground level never counts as padding.
    fn pad_window(capacity: usize, width: usize) -> std::ops::Range<usize> {
        capacity.saturating_sub(width).max(1).min(capacity)..capacity
    }

    /// Probability held by the top `pad_size` levels (excluding level 0) of
    /// one mode's occupation distribution.
    pub fn pad_probability(&self, populations: &[f64]) -> f64 {
        populations[Self::pad_window(populations.len(), self.pad_size)].iter().sum()
    }
}

/// State in the moving basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MqsdState {
    pub frame: MovingFrame,
    pub local: FockState,
    /// Steps taken, used for the recentering interval.
    pub steps: u64,
}

impl MqsdState {
    pub fn new(frame: MovingFrame, local: FockState) -> Result<Self> {
        if frame.origins.len() != local.n_modes() {
            return Err(Error::ModeMismatch(format!(
                "{} frame origins for {} modes",
                frame.origins.len(),
                local.n_modes()
            )));
        }
        if frame.origins.iter().any(|(q, p)| !(q.is_finite() && p.is_finite())) || !frame.phase.is_finite() {
            return Err(Error::InvalidParameter("frame origin must be finite".into()));
        }
        Ok(Self { frame, local, steps: 0 })
    }

    /// The coherent state `D(q, p)|0>` in each mode.
    pub fn coherent(origins: &[(f64, f64)], capacities: &[usize]) -> Result<Self> {
        let frame = MovingFrame { origins: origins.to_vec(), phase: 0.0 };
        Self::new(frame, FockState::vacuum(capacities)?)
    }

    pub fn n_modes(&self) -> usize {
        self.local.n_modes()
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.local.capacities()
    }

    /// `(<Q_k(q,p)>, <P_k(q,p)>)` of the local state, per mode.
    pub fn local_centroids(&self) -> Vec<(f64, f64)> {
        (0..self.n_modes())
            .map(|k| {
                let lowered = self.local.apply_annihilation(k).expect("mode in range");
                let a = dot(self.local.amplitudes(), lowered.amplitudes());
                (SQRT_2 * a.re, SQRT_2 * a.im)
            })
            .collect()
    }

    /// Global phase-space centroid `(q + <Q_loc>, p + <P_loc>)`.
    pub fn centroids(&self) -> Vec<(f64, f64)> {
        self.local_centroids()
            .into_iter()
            .zip(&self.frame.origins)
            .map(|((dq, dp), (q, p))| (q + dq, p + dp))
            .collect()
    }

    /// Expectation of a global operator, rewritten in local operators.
    pub fn expectation(&self, op: &CompiledOperator, t: f64) -> C64 {
        let local = op.substitute(&self.frame.shifts());
        CompiledModel::expectation(&local, &self.local, t)
    }

    pub fn expectation_expr(&self, op: &OperatorExpr, t: f64) -> C64 {
        self.expectation(&op.compile(), t)
    }

    /// Moves the origin onto the local centroid and shifts the local state
    /// back by the same amount. Capacity grows (by the pad size) whenever the
    /// shift would push more than `epsilon` off the top. Returns the new state
    /// and the probability lost to truncation.
    pub fn recenter(&self, tolerance: f64, policy: &TruncationPolicy) -> Result<(Self, f64)> {
        let mut state = self.clone();
        let norm = self.local.norm();
        let mut dropped_total = 0.0;
        for _ in 0..3 {
            let centroids = state.local_centroids();
            if centroids.iter().all(|(dq, dp)| dq.abs() <= tolerance && dp.abs() <= tolerance) {
                break;
            }
            for (k, &(dq, dp)) in centroids.iter().enumerate() {
                if dq == 0.0 && dp == 0.0 {
                    continue;
                }
                let (local, dropped) = shift_mode(&state.local, k, -dq, -dp, policy)?;
                dropped_total += dropped;
                let (q, p) = state.frame.origins[k];
                let (nq, np, phase) = compose_displacements(dq, dp, q, p);
                state.frame.origins[k] = (nq, np);
                state.frame.phase += phase;
                state.local = local;
            }
            state.local = with_norm(&state.local, norm)?;
        }
        Ok((state, dropped_total))
    }

    /// Ordinary Fock-basis representation with the given capacities.
    pub fn to_fixed_basis(&self, capacities: &[usize]) -> Result<FockState> {
        if capacities.len() != self.n_modes() {
            return Err(Error::ModeMismatch(format!(
                "{} capacities for {} modes",
                capacities.len(),
                self.n_modes()
            )));
        }
        let mut state = self.local.clone();
        for (k, (&rows, &(q, p))) in capacities.iter().zip(&self.frame.origins).enumerate() {
            let cols = state.capacities()[k];
            let block = displacement_block(alpha_of(q, p), rows, cols);
            state = state.apply_mode_matrix(k, &block, rows)?;
        }
        let kept = state.norm().powi(2) / self.local.norm().powi(2);
        let dropped = 1.0 - kept;
        if dropped > 1e-8 {
            return Err(Error::InsufficientCapacity { dropped });
        }
        Ok(state.scaled(C64::from_polar(1.0, self.frame.phase)))
    }

    /// Moving-basis representation of a fixed-basis state: start at the
    /// origin and recenter until the frame sits on the centroid.
    pub fn from_fixed(state: &FockState, policy: &TruncationPolicy) -> Result<Self> {
        let mut mq = Self::new(MovingFrame::at_origin(state.n_modes()), state.normalize()?.0)?;
        let mut unbounded = policy.clone();
        unbounded.max_capacity = unbounded.max_capacity.max(state.capacities().into_iter().max().unwrap_or(0));
        for _ in 0..5 {
            mq = mq.recenter(policy.recenter_tolerance, &unbounded)?.0;
        }
        Ok(mq)
    }

    /// Grows or shrinks each mode so that the top `pad_size` levels hold at
    /// most `epsilon`. Shrinking needs the top `2 * pad_size` levels to hold
    /// at most `epsilon`, which prevents grow/shrink oscillation. Returns the
    /// probability discarded by shrinking.
    pub fn adapt_capacity(&self, policy: &TruncationPolicy) -> Result<(Self, f64)> {
        let mut local = self.local.clone();
        let norm = local.norm();
        let mut dropped_total = 0.0;
        for k in 0..self.n_modes() {
            let pops = local.mode_populations(k)?;
            let cap = pops.len();
            if policy.pad_probability(&pops) > policy.epsilon {
                let grown = cap + policy.pad_size;
                if grown > policy.max_capacity {
                    return Err(Error::CapacityExhausted { mode: k, max: policy.max_capacity });
                }
                local = local.resize_mode(k, grown)?.0;
                continue;
            }
            let target = cap.saturating_sub(policy.pad_size).max(policy.min_capacity);
            if target >= cap {
                continue;
            }
            let wide: f64 = pops[TruncationPolicy::pad_window(cap, 2 * policy.pad_size)].iter().sum();
            if wide <= policy.epsilon {
                let (shrunk, dropped) = local.resize_mode(k, target)?;
                dropped_total += dropped;
                local = with_norm(&shrunk, norm)?;
            }
        }
        Ok((Self { frame: self.frame.clone(), local, steps: self.steps }, dropped_total))
    }
}

/// Rescales `state` to norm `norm`; truncation never changes the norm the integrator left.
fn with_norm(state: &FockState, norm: f64) -> Result<FockState> {
    Ok(state.normalize()?.0.scaled(C64::new(norm, 0.0)))
}

/// Applies `D(dq, dp)` to one mode of a local state, growing that mode while
/// more than `epsilon` would be lost.
fn shift_mode(local: &FockState, mode: usize, dq: f64, dp: f64, policy: &TruncationPolicy) -> Result<(FockState, f64)> {
    let alpha = alpha_of(dq, dp);
    let total = local.norm().powi(2);
    let mut cap = local.capacities()[mode];
    loop {
        // pad_size extra rows measure the spill directly instead of by norm difference
        let cols = local.capacities()[mode];
        let rows = cap + policy.pad_size;
        let shifted = local.apply_mode_matrix(mode, &displacement_block(alpha, rows, cols), rows)?;
        let (kept, tail) = shifted.resize_mode(mode, cap)?;
        let dropped = tail / total;
        if dropped <= policy.epsilon {
            return Ok((kept, dropped));
        }
        cap += policy.pad_size;
        if cap > policy.max_capacity {
            return Err(Error::CapacityExhausted { mode, max: policy.max_capacity });
        }
    }
}

/// One moving-basis step: a QSD step in local operators, then recentering
/// (every `check_interval` steps) and capacity adaptation.
pub fn mqsd_step_with_noise(
    model: &CompiledModel,
    state: &MqsdState,
    t: f64,
    noise: &NoiseIncrement,
    renormalize: bool,
    policy: &TruncationPolicy,
) -> Result<(MqsdState, StepDiagnostics)> {
    let local_model = model.displaced(&state.frame.shifts());
    let phase = local_model.offset_phase(t, noise.dt);
    // the fluctuation is counter-rotated so that only the drift carries the c-number phase,
    // as it does in a fixed basis
    // adapt_capacity takes the headroom back once it stays empty
    let mut padded = state.local.clone();
    if policy.step_headroom > 0 {
        for (k, cap) in state.capacities().into_iter().enumerate() {
            padded = padded.resize_mode(k, (cap + policy.step_headroom).min(policy.max_capacity.max(cap)))?.0;
        }
    }
    let (local, mut diagnostics) = local_model.step_with_noise(&padded, t, &noise.rotated(-phase), renormalize)?;
    let mut next = MqsdState {
        frame: MovingFrame { origins: state.frame.origins.clone(), phase: state.frame.phase + phase },
        local,
        steps: state.steps + 1,
    };
    if next.steps % policy.check_interval == 0 {
        let (recentered, dropped) = next.recenter(policy.recenter_tolerance, policy)?;
        diagnostics.dropped_probability += dropped;
        next = recentered;
    }
    let (adapted, dropped) = next.adapt_capacity(policy)?;
    diagnostics.dropped_probability += dropped;
    Ok((adapted, diagnostics))
}

pub fn mqsd_step(
    model: &CompiledModel,
    state: &MqsdState,
    t: f64,
    config: &IntegratorConfig,
    policy: &TruncationPolicy,
    rng: &mut TrajectoryRng,
) -> Result<(MqsdState, StepDiagnostics)> {
    let noise = sample_noise(rng, model.n_lindblads(), config.dt);
    mqsd_step_with_noise(model, state, t, &noise, config.renormalize_every_step, policy)
}
