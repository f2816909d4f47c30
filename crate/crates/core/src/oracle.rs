//! Dense reference computations for small systems.
//!
//! Operators here are assembled column by column from the expression tree
//! walk ([`OperatorExpr::apply`]), never from the compiled polynomial form the
//! trajectory engine uses, so the two paths check each other.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeSpec};
use crate::operator::{OpenSystemModel, OperatorExpr};

pub const DEFAULT_ORACLE_LIMIT: usize = 256;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Sparse operator matrix as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn from_expr(expr: &OperatorExpr, capacities: &[usize], t: f64) -> Result<Self> {
        let probe = FockState::zeros(capacities)?;
        let dim = probe.dim();
        let mut entries = Vec::new();
        let mut basis = probe;
        for col in 0..dim {
            basis.amplitudes_mut()[col] = C64::new(1.0, 0.0);
            let image = expr.apply(&basis, t)?;
            basis.amplitudes_mut()[col] = ZERO;
            for (row, v) in image.amplitudes().iter().enumerate() {
                if *v != ZERO {
                    entries.push((row, col, *v));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn adjoint(&self) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect() }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * factor)).collect() }
    }

    /// Sum of two operators of equal dimension; duplicates are kept.
    pub fn plus(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self { dim: self.dim, entries }
    }

    pub fn product(&self, right: &Self) -> Self {
        let mut by_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); self.dim];
        for &(r, c, v) in &right.entries {
            by_row[r].push((c, v));
        }
        let mut dense = std::collections::BTreeMap::new();
        for &(r, k, v) in &self.entries {
            for &(c, w) in &by_row[k] {
                *dense.entry((r, c)).or_insert(ZERO) += v * w;
            }
        }
        Self { dim: self.dim, entries: dense.into_iter().map(|((r, c), v)| (r, c, v)).collect() }
    }

    /// `out += self * m` for a row-major dense `m`.
    fn mul_dense_add(&self, m: &[C64], out: &mut [C64]) {
        let n = self.dim;
        for &(r, c, v) in &self.entries {
            let src = &m[c * n..(c + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
    }
}

fn adjoint_dense(m: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = m[i * n + j].conj();
        }
    }
    out
}

/// Density operator over a product Fock basis (same layout as [`FockState`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    modes: Vec<ModeSpec>,
    dim: usize,
    /// Row-major `dim x dim`.
    elements: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_pure(state: &FockState) -> Self {
        let psi = state.amplitudes();
        let dim = psi.len();
        let mut elements = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                elements[i * dim + j] = psi[i] * psi[j].conj();
            }
        }
        Self { modes: state.modes().to_vec(), dim, elements }
    }

    pub fn from_elements(capacities: &[usize], elements: Vec<C64>) -> Result<Self> {
        let probe = FockState::zeros(capacities)?;
        let dim = probe.dim();
        if elements.len() != dim * dim {
            return Err(Error::AmplitudeLength { expected: dim * dim, got: elements.len() });
        }
        Ok(Self { modes: probe.modes().to_vec(), dim, elements })
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.capacity).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.elements[row * self.dim + col]
    }

    pub fn elements(&self) -> &[C64] {
        &self.elements
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr rho^2 = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho
        (0..self.dim)
            .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
            .map(|(i, j)| (self.get(i, j) * self.get(j, i)).re)
            .sum()
    }

    /// `max |rho - rho^dagger|` over elements.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()));
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `Tr(rho G)`.
    pub fn expectation(&self, op: &OperatorExpr, t: f64) -> Result<C64> {
        let g = SparseOperator::from_expr(op, &self.capacities(), t)?;
        Ok(g.entries.iter().map(|&(r, c, v)| v * self.get(c, r)).sum())
    }

    /// Reduced occupation distribution of one mode.
    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        let mut diag = FockState::zeros(&self.capacities())?;
        for i in 0..self.dim {
            diag.amplitudes_mut()[i] = C64::new(self.get(i, i).re.max(0.0).sqrt(), 0.0);
        }
        diag.mode_populations(mode)
    }
}

/// Operators of the master equation assembled at one time:
/// `d rho/dt = K rho + rho K^dagger + sum_m L_m rho L_m^dagger`,
/// `K = -(i/hbar) H - (1/2) sum_m L_m^dagger L_m`.
#[derive(Clone)]
struct DenseGenerator {
    k: SparseOperator,
    lindblads: Vec<SparseOperator>,
}

impl DenseGenerator {
    fn new(model: &OpenSystemModel, capacities: &[usize], t: f64) -> Result<Self> {
        let h = SparseOperator::from_expr(&model.hamiltonian, capacities, t)?;
        let mut k = h.scaled(C64::new(0.0, -1.0 / model.hbar));
        let mut lindblads = Vec::with_capacity(model.lindblads.len());
        for l in &model.lindblads {
            let ls = SparseOperator::from_expr(l, capacities, t)?;
            k = k.plus(&ls.adjoint().product(&ls).scaled(C64::new(-0.5, 0.0)));
            lindblads.push(ls);
        }
        Ok(Self { k, lindblads })
    }

    fn rhs(&self, rho: &[C64], n: usize) -> Vec<C64> {
        let rho_dag = adjoint_dense(rho, n);
        // rho K^dagger = (K rho^dagger)^dagger
        let mut k_rho = vec![ZERO; n * n];
        self.k.mul_dense_add(rho, &mut k_rho);
        let mut k_rho_dag = vec![ZERO; n * n];
        self.k.mul_dense_add(&rho_dag, &mut k_rho_dag);
        let mut out = k_rho;
        for (o, x) in out.iter_mut().zip(adjoint_dense(&k_rho_dag, n)) {
            *o += x;
        }
        // L rho L^dagger = L (L rho^dagger)^dagger
        for l in &self.lindblads {
            let mut l_rho_dag = vec![ZERO; n * n];
            l.mul_dense_add(&rho_dag, &mut l_rho_dag);
            l.mul_dense_add(&adjoint_dense(&l_rho_dag, n), &mut out);
        }
        out
    }
}

/// RK4 integration of the Lindblad master equation, returning the density
/// operator at each requested time (ascending, starting from `t = 0`).
pub fn master_equation_samples(
    model: &OpenSystemModel,
    rho0: &DensityMatrix,
    times: &[f64],
    dt: f64,
    dimension_limit: usize,
) -> Result<Vec<DensityMatrix>> {
    let n = rho0.dim;
    if n > dimension_limit {
        return Err(Error::OracleTooLarge { dim: n, limit: dimension_limit });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("sample times must be ascending and non-negative".into()));
    }
    let caps = rho0.capacities();
    let time_dependent = model.hamiltonian.is_time_dependent() || model.lindblads.iter().any(|l| l.is_time_dependent());
    let fixed = if time_dependent { None } else { Some(DenseGenerator::new(model, &caps, 0.0)?) };
    let generator_at = |t: f64| -> Result<std::borrow::Cow<'_, DenseGenerator>> {
        match &fixed {
            Some(g) => Ok(std::borrow::Cow::Borrowed(g)),
            None => Ok(std::borrow::Cow::Owned(DenseGenerator::new(model, &caps, t)?)),
        }
    };

    let mut rho = rho0.elements.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        let steps = (span / dt).ceil() as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for s in 0..steps {
            let t0 = t + s as f64 * h;
            let g0 = generator_at(t0)?;
            let gm = generator_at(t0 + 0.5 * h)?;
            let g1 = generator_at(t0 + h)?;
            let k1 = g0.rhs(&rho, n);
            let k2 = gm.rhs(&axpy(&rho, &k1, 0.5 * h), n);
            let k3 = gm.rhs(&axpy(&rho, &k2, 0.5 * h), n);
            let k4 = g1.rhs(&axpy(&rho, &k3, h), n);
            for i in 0..rho.len() {
                rho[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
        }
        if rho.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::NonFinite { t: target });
        }
        t = target;
        out.push(DensityMatrix { modes: rho0.modes.clone(), dim: n, elements: rho.clone() });
    }
    Ok(out)
}

fn axpy(x: &[C64], y: &[C64], a: f64) -> Vec<C64> {
    x.iter().zip(y).map(|(x, y)| x + y * a).collect()
}

pub fn master_equation_evolve(model: &OpenSystemModel, rho0: &DensityMatrix, t_final: f64, dt: f64) -> Result<DensityMatrix> {
    master_equation_evolve_with_limit(model, rho0, t_final, dt, DEFAULT_ORACLE_LIMIT)
}

pub fn master_equation_evolve_with_limit(
    model: &OpenSystemModel,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    dimension_limit: usize,
) -> Result<DensityMatrix> {
    Ok(master_equation_samples(model, rho0, &[t_final], dt, dimension_limit)?.remove(0))
}

fn check_ensemble(states: &[FockState]) -> Result<()> {
    let first = states.first().ok_or(Error::EmptyEnsemble)?;
    states.iter().skip(1).try_for_each(|s| first.check_same_structure(s))
}

/// Mean of the projectors `|psi><psi|`.
pub fn ensemble_density(states: &[FockState]) -> Result<DensityMatrix> {
    Ok(ensemble_density_with_errors(states)?.mean)
}

/// Ensemble density with per-element standard errors of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDensity {
    pub mean: DensityMatrix,
    /// Row-major standard errors of the real and imaginary parts.
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
}

pub fn ensemble_density_with_errors(states: &[FockState]) -> Result<EnsembleDensity> {
    check_ensemble(states)?;
    let dim = states[0].dim();
    let count = states.len() as f64;
    let mut sum = vec![ZERO; dim * dim];
    let mut sq_re = vec![0.0; dim * dim];
    let mut sq_im = vec![0.0; dim * dim];
    for s in states {
        let psi = s.amplitudes();
        for i in 0..dim {
            for j in 0..dim {
                let x = psi[i] * psi[j].conj();
                let idx = i * dim + j;
                sum[idx] += x;
                sq_re[idx] += x.re * x.re;
                sq_im[idx] += x.im * x.im;
            }
        }
    }
    let mean: Vec<C64> = sum.iter().map(|x| x / count).collect();
    let stderr = |sq: &[f64], part: fn(&C64) -> f64| -> Vec<f64> {
        sq.iter()
            .zip(&mean)
            .map(|(s2, m)| {
                if states.len() < 2 {
                    return 0.0;
                }
                let var = ((s2 - count * part(m).powi(2)) / (count - 1.0)).max(0.0);
                (var / count).sqrt()
            })
            .collect()
    };
    let stderr_re = stderr(&sq_re, |c| c.re);
    let stderr_im = stderr(&sq_im, |c| c.im);
    Ok(EnsembleDensity {
        mean: DensityMatrix { modes: states[0].modes().to_vec(), dim, elements: mean },
        stderr_re,
        stderr_im,
    })
}

/// Localization `1 / mean(variance of G)` over an ensemble.
pub fn localization(states: &[FockState], op: &OperatorExpr) -> Result<f64> {
    Ok(localization_with_error(states, op)?.0)
}

/// Localization and its standard error (delta method on the mean variance).
pub fn localization_with_error(states: &[FockState], op: &OperatorExpr) -> Result<(f64, f64)> {
    check_ensemble(states)?;
    let variances = states
        .iter()
        .map(|s| s.expectation_and_variance(op, 0.0).map(|v| v.variance.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    let n = variances.len() as f64;
    let mean = variances.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let se_mean = if variances.len() > 1 {
        (variances.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok((1.0 / mean, se_mean / (mean * mean)))
}

/// Mean of per-state expectations `<psi|G|psi>`.
pub fn mean_expectation(states: &[FockState], op: &OperatorExpr, t: f64) -> Result<C64> {
    check_ensemble(states)?;
    let mut sum = ZERO;
    for s in states {
        sum += s.expectation_and_variance(op, t)?.expectation;
    }
    Ok(sum / states.len() as f64)
}

/// Closed-form coherent amplitude of the damped driven oscillator
/// `H = omega a^dagger a + i f (a^dagger - a)`, `L = sqrt(2 kappa) a`.
pub fn damped_oscillator_amplitude(alpha0: C64, omega: f64, kappa: f64, f: f64, t: f64) -> C64 {
    let rate = C64::new(kappa, omega);
    let steady = C64::new(f, 0.0) / rate;
    steady + (alpha0 - steady) * (-rate * t).exp()
}

/// Coherent state amplitudes in a truncated single-mode basis (not renormalized).
pub fn coherent_amplitudes(alpha: C64, capacity: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(capacity);
    let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..capacity {
        if n > 0 {
            term = term * alpha / (n as f64).sqrt();
        }
        out.push(term);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_photon_decay() {
        let model = OpenSystemModel::new(1.0, OperatorExpr::Identity.scale(0.0), vec![OperatorExpr::a(0)], 1).unwrap();
        let rho0 = DensityMatrix::from_pure(&FockState::basis(&[2], &[1]).unwrap());
        let rho = master_equation_evolve(&model, &rho0, 1.0, 1e-3).unwrap();
        assert!((rho.get(1, 1).re - (-1.0f64).exp()).abs() < 1e-6);
        assert!((rho.trace() - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn eigenstate_is_stationary() {
        let model = OpenSystemModel::new(1.0, OperatorExpr::number(0).scale(1.3), vec![], 1).unwrap();
        let rho0 = DensityMatrix::from_pure(&FockState::basis(&[4], &[1]).unwrap());
        let rho = master_equation_evolve(&model, &rho0, 2.0, 1e-2).unwrap();
        for i in 0..4 {
            assert!((rho.get(i, i) - rho0.get(i, i)).norm() < 1e-12);
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_amplitude_decays() {
        let kappa: f64 = 0.5;
        let alpha0 = c(1.0, 0.5);
        let cap = 14;
        let model = OpenSystemModel::new(1.0, OperatorExpr::Identity.scale(0.0), vec![OperatorExpr::a(0).scale((2.0 * kappa).sqrt())], 1).unwrap();
        let psi = FockState::from_amplitudes(&[cap], coherent_amplitudes(alpha0, cap)).unwrap().normalize().unwrap().0;
        let rho = master_equation_evolve(&model, &DensityMatrix::from_pure(&psi), 1.0, 1e-3).unwrap();
        let a = rho.expectation(&OperatorExpr::a(0), 0.0).unwrap();
        assert!((a - alpha0 * (-kappa).exp()).norm() < 1e-6);
    }

    #[test]
    fn dimension_limit() {
        let model = OpenSystemModel::new(1.0, OperatorExpr::number(0), vec![], 1).unwrap();
        let rho0 = DensityMatrix::from_pure(&FockState::vacuum(&[300]).unwrap());
        assert_eq!(master_equation_evolve(&model, &rho0, 0.1, 0.01), Err(Error::OracleTooLarge { dim: 300, limit: 256 }));
    }

    #[test]
    fn ensemble_density_cases() {
        let one = FockState::from_amplitudes(&[2], vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let rho = ensemble_density(std::slice::from_ref(&one)).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);

        let states = [FockState::basis(&[2], &[0]).unwrap(), FockState::basis(&[2], &[1]).unwrap()];
        let rho = ensemble_density(&states).unwrap();
        assert_eq!(rho.elements(), &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);

        assert_eq!(ensemble_density(&[]), Err(Error::EmptyEnsemble));
        let mixed = [FockState::vacuum(&[2]).unwrap(), FockState::vacuum(&[3]).unwrap()];
        assert!(ensemble_density(&mixed).is_err());
    }

    #[test]
    fn localization_cases() {
        let vac = [FockState::vacuum(&[3]).unwrap(), FockState::vacuum(&[3]).unwrap()];
        assert_eq!(localization(&vac, &OperatorExpr::number(0)), Err(Error::ZeroVariance));
        let h = 0.5f64.sqrt();
        let cat = FockState::from_amplitudes(&[3], vec![c(h, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap();
        assert!((localization(&[cat], &OperatorExpr::number(0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_expectation_matches_mean() {
        let states: Vec<FockState> = (0..5)
            .map(|k| {
                let amps = (0..4).map(|n| c((k + n) as f64 * 0.3 - 0.5, (k * n) as f64 * 0.1)).collect();
                FockState::from_amplitudes(&[4], amps).unwrap().normalize().unwrap().0
            })
            .collect();
        let rho = ensemble_density(&states).unwrap();
        for op in [OperatorExpr::number(0), OperatorExpr::a(0), OperatorExpr::a(0).times(OperatorExpr::a(0))] {
            let lhs = rho.expectation(&op, 0.0).unwrap();
            let rhs = mean_expectation(&states, &op, 0.0).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert!(rho.purity() <= 1.0 + 1e-10);
        assert!(rho.min_eigenvalue() >= -1e-12);
        assert!(rho.hermiticity_error() < 1e-15);
    }
}
