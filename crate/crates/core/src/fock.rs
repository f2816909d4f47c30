//! Truncated multimode Fock space.
//!
//! Amplitudes are stored row-major over occupation numbers with mode 0 the
//! slowest-varying index, so a state over capacities `[c0, c1]` stores the
//! amplitude of `|n0, n1>` at `n0 * c1 + n1`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operator::OperatorExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSpec {
    pub index: usize,
    /// Number of retained levels, `|0>` through `|capacity - 1>`.
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Q,
    P,
}

/// Expectation and variance of an operator in a pure state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableValue {
    pub expectation: C64,
    /// `||G psi||^2 - |<G>|^2`, which is the usual variance for self-adjoint `G`.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    modes: Vec<ModeSpec>,
    amplitudes: Vec<C64>,
}

pub(crate) fn stride_of(capacities: &[usize], mode: usize) -> usize {
    capacities[mode + 1..].iter().product()
}

/// `out = a_mode * src` over the given layout.
pub(crate) fn lower_into(capacities: &[usize], mode: usize, src: &[C64], out: &mut [C64]) {
    let cap = capacities[mode];
    let stride = stride_of(capacities, mode);
    let block = cap * stride;
    for base in (0..src.len()).step_by(block) {
        for n in 1..cap {
            let f = (n as f64).sqrt();
            let from = base + n * stride;
            let to = base + (n - 1) * stride;
            for i in 0..stride {
                out[to + i] = src[from + i] * f;
            }
        }
        let top = base + (cap - 1) * stride;
        out[top..top + stride].fill(C64::new(0.0, 0.0));
    }
}

/// `out = a_mode^dagger * src`; returns the probability held by the top level
/// of `src`, which the truncation discards.
pub(crate) fn raise_into(capacities: &[usize], mode: usize, src: &[C64], out: &mut [C64]) -> f64 {
    let cap = capacities[mode];
    let stride = stride_of(capacities, mode);
    let block = cap * stride;
    let mut dropped = 0.0;
    for base in (0..src.len()).step_by(block) {
        let top = base + (cap - 1) * stride;
        dropped += src[top..top + stride].iter().map(|c| c.norm_sqr()).sum::<f64>();
        for n in (0..cap - 1).rev() {
            let f = ((n + 1) as f64).sqrt();
            let from = base + n * stride;
            let to = base + (n + 1) * stride;
            for i in 0..stride {
                out[to + i] = src[from + i] * f;
            }
        }
        out[base..base + stride].fill(C64::new(0.0, 0.0));
    }
    dropped
}

pub(crate) fn dot(bra: &[C64], ket: &[C64]) -> C64 {
    bra.iter().zip(ket).map(|(b, k)| b.conj() * k).sum()
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

impl FockState {
    pub fn vacuum(capacities: &[usize]) -> Result<Self> {
        Self::basis(capacities, &vec![0; capacities.len()])
    }

    /// The product Fock state `|n_0, n_1, ...>`.
    pub fn basis(capacities: &[usize], occupations: &[usize]) -> Result<Self> {
        let mut state = Self::zeros(capacities)?;
        if occupations.len() != capacities.len() {
            return Err(Error::ModeMismatch(format!(
                "{} occupation numbers for {} modes",
                occupations.len(),
                capacities.len()
            )));
        }
        let mut idx = 0;
        for (k, (&n, &cap)) in occupations.iter().zip(capacities).enumerate() {
            if n >= cap {
                return Err(Error::InvalidParameter(format!(
                    "occupation {n} of mode {k} exceeds capacity {cap}"
                )));
            }
            idx = idx * cap + n;
        }
        state.amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(state)
    }

    pub fn zeros(capacities: &[usize]) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::ModeMismatch("a state needs at least one mode".into()));
        }
        if let Some(&c) = capacities.iter().find(|&&c| c == 0) {
            return Err(Error::InvalidCapacity(c));
        }
        let modes = capacities
            .iter()
            .enumerate()
            .map(|(index, &capacity)| ModeSpec { index, capacity })
            .collect();
        let dim = capacities.iter().product();
        Ok(Self { modes, amplitudes: vec![C64::new(0.0, 0.0); dim] })
    }

    pub fn from_amplitudes(capacities: &[usize], amplitudes: Vec<C64>) -> Result<Self> {
        let mut state = Self::zeros(capacities)?;
        if amplitudes.len() != state.amplitudes.len() {
            return Err(Error::AmplitudeLength { expected: state.amplitudes.len(), got: amplitudes.len() });
        }
        state.amplitudes = amplitudes;
        Ok(state)
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.capacity).collect()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub(crate) fn with_amplitudes(&self, amplitudes: Vec<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), self.amplitudes.len());
        Self { modes: self.modes.clone(), amplitudes }
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.modes.len() {
            Ok(())
        } else {
            Err(Error::InvalidMode { mode, n_modes: self.modes.len() })
        }
    }

    pub fn check_same_structure(&self, other: &Self) -> Result<()> {
        if self.modes == other.modes {
            Ok(())
        } else {
            Err(Error::ModeMismatch(format!(
                "capacities {:?} vs {:?}",
                self.capacities(),
                other.capacities()
            )))
        }
    }

    pub fn apply_annihilation(&self, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        lower_into(&self.capacities(), mode, &self.amplitudes, &mut out);
        Ok(self.with_amplitudes(out))
    }

    /// Applies `a^dagger` in `mode`; the returned probability is what the
    /// truncation dropped off the top level.
    pub fn apply_creation(&self, mode: usize) -> Result<(Self, f64)> {
        self.check_mode(mode)?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        let dropped = raise_into(&self.capacities(), mode, &self.amplitudes, &mut out);
        Ok((self.with_amplitudes(out), dropped))
    }

    /// `Q = (a + a^dagger)/sqrt 2` or `P = -i(a - a^dagger)/sqrt 2`.
    pub fn apply_quadrature(&self, mode: usize, which: Quadrature) -> Result<Self> {
        let lowered = self.apply_annihilation(mode)?;
        let (raised, _) = self.apply_creation(mode)?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amps = lowered
            .amplitudes
            .iter()
            .zip(&raised.amplitudes)
            .map(|(l, r)| match which {
                Quadrature::Q => (l + r) * s,
                Quadrature::P => (l - r) * C64::new(0.0, -s),
            })
            .collect();
        Ok(self.with_amplitudes(amps))
    }

    /// `<self|ket>`, conjugating `self`.
    pub fn inner_product(&self, ket: &Self) -> Result<C64> {
        self.check_same_structure(ket)?;
        Ok(dot(&self.amplitudes, &ket.amplitudes))
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    /// Returns the unit-norm state together with the norm it had before.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let amps = self.amplitudes.iter().map(|c| c / norm).collect();
        Ok((self.with_amplitudes(amps), norm))
    }

    pub fn expectation_and_variance(&self, op: &OperatorExpr, t: f64) -> Result<ObservableValue> {
        let g_psi = op.apply(self, t)?;
        let expectation = dot(&self.amplitudes, g_psi.amplitudes());
        let variance = norm_sqr(g_psi.amplitudes()) - expectation.norm_sqr();
        Ok(ObservableValue { expectation, variance })
    }

    /// Occupation-number distribution of one mode, summed over the others.
    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        self.check_mode(mode)?;
        let caps = self.capacities();
        let cap = caps[mode];
        let stride = stride_of(&caps, mode);
        let mut pops = vec![0.0; cap];
        for (idx, a) in self.amplitudes.iter().enumerate() {
            pops[(idx / stride) % cap] += a.norm_sqr();
        }
        Ok(pops)
    }

    /// Changes the capacity of one mode, zero-padding on growth and
    /// discarding the top levels on shrink. Returns the discarded probability.
    pub fn resize_mode(&self, mode: usize, capacity: usize) -> Result<(Self, f64)> {
        self.check_mode(mode)?;
        if capacity == 0 {
            return Err(Error::InvalidCapacity(capacity));
        }
        let old_caps = self.capacities();
        let mut new_caps = old_caps.clone();
        new_caps[mode] = capacity;
        let mut out = Self::zeros(&new_caps)?;
        let stride = stride_of(&old_caps, mode);
        let old_cap = old_caps[mode];
        let keep = old_cap.min(capacity);
        let mut dropped = 0.0;
        for outer in 0..self.dim() / (old_cap * stride) {
            for n in 0..old_cap {
                let from = (outer * old_cap + n) * stride;
                if n < keep {
                    let to = (outer * capacity + n) * stride;
                    out.amplitudes[to..to + stride].copy_from_slice(&self.amplitudes[from..from + stride]);
                } else {
                    dropped += norm_sqr(&self.amplitudes[from..from + stride]);
                }
            }
        }
        Ok((out, dropped))
    }

    /// Applies a `rows x cols` row-major matrix along one mode, where `cols`
    /// is the current capacity of that mode and `rows` becomes the new one.
    pub fn apply_mode_matrix(&self, mode: usize, matrix: &[C64], rows: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let old_caps = self.capacities();
        let cols = old_caps[mode];
        if matrix.len() != rows * cols {
            return Err(Error::AmplitudeLength { expected: rows * cols, got: matrix.len() });
        }
        let mut new_caps = old_caps.clone();
        new_caps[mode] = rows;
        let mut out = Self::zeros(&new_caps)?;
        let stride = stride_of(&old_caps, mode);
        for outer in 0..self.dim() / (cols * stride) {
            for m in 0..rows {
                let to = (outer * rows + m) * stride;
                for n in 0..cols {
                    let elem = matrix[m * cols + n];
                    if elem == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let from = (outer * cols + n) * stride;
                    for i in 0..stride {
                        out.amplitudes[to + i] += elem * self.amplitudes[from + i];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        self.with_amplitudes(self.amplitudes.iter().map(|a| a * factor).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}
