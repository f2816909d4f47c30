//! Operator expression trees and the open-system container.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::compiled::CompiledOperator;
use crate::error::{Error, Result};
use crate::fock::{lower_into, raise_into, FockState, Quadrature};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeKind {
    Constant,
    Cosine,
}

/// A real time-dependent coefficient, `amplitude` or `amplitude * cos(w t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeCoefficient {
    pub kind: TimeKind,
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub phase: f64,
}

impl TimeCoefficient {
    pub fn cosine(amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        Self { kind: TimeKind::Cosine, amplitude, angular_frequency, phase }
    }

    pub fn constant(amplitude: f64) -> Self {
        Self { kind: TimeKind::Constant, amplitude, angular_frequency: 0.0, phase: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            TimeKind::Constant => self.amplitude,
            TimeKind::Cosine => self.amplitude * (self.angular_frequency * t + self.phase).cos(),
        }
    }

    /// Bitwise identity, used to merge terms sharing the same profile.
    pub(crate) fn key(&self) -> (u8, u64, u64, u64) {
        let kind = match self.kind {
            TimeKind::Constant => 0,
            TimeKind::Cosine => 1,
        };
        (kind, self.amplitude.to_bits(), self.angular_frequency.to_bits(), self.phase.to_bits())
    }
}

impl fmt::Display for TimeCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TimeKind::Constant => write!(f, "{}", self.amplitude),
            TimeKind::Cosine => write!(
                f,
                "{}*cos({}*t + {})",
                self.amplitude, self.angular_frequency, self.phase
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Constant(C64),
    Time(TimeCoefficient),
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> C64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Time(tc) => C64::new(tc.eval(t), 0.0),
        }
    }

    fn conj(&self) -> Self {
        match self {
            Coefficient::Constant(c) => Coefficient::Constant(c.conj()),
            Coefficient::Time(tc) => Coefficient::Time(*tc),
        }
    }
}

/// Symbolic operator over bosonic modes. `Product` children are applied
/// right-to-left, i.e. `Product([A, B])` is `A * B`.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorExpr {
    Annihilation(usize),
    Creation(usize),
    Identity,
    Scale(Coefficient, Box<OperatorExpr>),
    Sum(Vec<OperatorExpr>),
    Product(Vec<OperatorExpr>),
}

impl OperatorExpr {
    pub fn a(mode: usize) -> Self {
        OperatorExpr::Annihilation(mode)
    }

    pub fn ad(mode: usize) -> Self {
        OperatorExpr::Creation(mode)
    }

    pub fn number(mode: usize) -> Self {
        OperatorExpr::Product(vec![Self::ad(mode), Self::a(mode)])
    }

    pub fn quadrature(mode: usize, which: Quadrature) -> Self {
        match which {
            Quadrature::Q => Self::Sum(vec![Self::a(mode), Self::ad(mode)]).scale(SQRT_HALF),
            Quadrature::P => Self::Sum(vec![Self::a(mode), Self::ad(mode).scale(-1.0)])
                .scale_c(C64::new(0.0, -SQRT_HALF)),
        }
    }

    pub fn scale(self, factor: f64) -> Self {
        self.scale_c(C64::new(factor, 0.0))
    }

    pub fn scale_c(self, factor: C64) -> Self {
        OperatorExpr::Scale(Coefficient::Constant(factor), Box::new(self))
    }

    pub fn scale_t(self, coefficient: TimeCoefficient) -> Self {
        OperatorExpr::Scale(Coefficient::Time(coefficient), Box::new(self))
    }

    pub fn times(self, right: OperatorExpr) -> Self {
        OperatorExpr::Product(vec![self, right])
    }

    pub fn plus(self, other: OperatorExpr) -> Self {
        OperatorExpr::Sum(vec![self, other])
    }

    /// Largest mode index referenced, if any.
    pub fn max_mode(&self) -> Option<usize> {
        match self {
            OperatorExpr::Annihilation(m) | OperatorExpr::Creation(m) => Some(*m),
            OperatorExpr::Identity => None,
            OperatorExpr::Scale(_, child) => child.max_mode(),
            OperatorExpr::Sum(children) | OperatorExpr::Product(children) => {
                children.iter().filter_map(|c| c.max_mode()).max()
            }
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        match self {
            OperatorExpr::Scale(Coefficient::Time(tc), _) if tc.kind == TimeKind::Cosine => true,
            OperatorExpr::Scale(_, child) => child.is_time_dependent(),
            OperatorExpr::Sum(children) | OperatorExpr::Product(children) => {
                children.iter().any(|c| c.is_time_dependent())
            }
            _ => false,
        }
    }

    /// Structural adjoint: swaps ladder operators, conjugates constants and
    /// reverses products.
    pub fn adjoint(&self) -> Self {
        match self {
            OperatorExpr::Annihilation(m) => OperatorExpr::Creation(*m),
            OperatorExpr::Creation(m) => OperatorExpr::Annihilation(*m),
            OperatorExpr::Identity => OperatorExpr::Identity,
            OperatorExpr::Scale(c, child) => OperatorExpr::Scale(c.conj(), Box::new(child.adjoint())),
            OperatorExpr::Sum(children) => OperatorExpr::Sum(children.iter().map(|c| c.adjoint()).collect()),
            OperatorExpr::Product(children) => {
                OperatorExpr::Product(children.iter().rev().map(|c| c.adjoint()).collect())
            }
        }
    }

    /// Flattens nested sums and products, drops identity factors and folds
    /// constant scales.
    pub fn simplify(&self) -> Self {
        match self {
            OperatorExpr::Annihilation(_) | OperatorExpr::Creation(_) | OperatorExpr::Identity => self.clone(),
            OperatorExpr::Scale(coef, child) => {
                let child = child.simplify();
                match (coef, child) {
                    (Coefficient::Constant(c), child) if *c == C64::new(1.0, 0.0) => child,
                    (Coefficient::Constant(c), OperatorExpr::Scale(Coefficient::Constant(c2), inner)) => {
                        Self::scale_c(*inner, c * c2).simplify()
                    }
                    // constants float above time coefficients
                    (Coefficient::Time(tc), OperatorExpr::Scale(Coefficient::Constant(c2), inner)) => {
                        Self::scale_c(inner.scale_t(*tc), c2).simplify()
                    }
                    (coef, child) => OperatorExpr::Scale(*coef, Box::new(child)),
                }
            }
            OperatorExpr::Sum(children) => {
                let mut flat = Vec::new();
                for child in children.iter().map(|c| c.simplify()) {
                    match child {
                        OperatorExpr::Sum(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                match flat.len() {
                    0 => OperatorExpr::Identity.scale(0.0),
                    1 => flat.pop().unwrap(),
                    _ => OperatorExpr::Sum(flat),
                }
            }
            OperatorExpr::Product(children) => {
                let mut factor = C64::new(1.0, 0.0);
                let mut flat = Vec::new();
                for child in children.iter().map(|c| c.simplify()) {
                    let child = match child {
                        OperatorExpr::Scale(Coefficient::Constant(c), inner) => {
                            factor *= c;
                            *inner
                        }
                        other => other,
                    };
                    match child {
                        OperatorExpr::Product(inner) => flat.extend(inner),
                        OperatorExpr::Identity => {}
                        other => flat.push(other),
                    }
                }
                let body = match flat.len() {
                    0 => OperatorExpr::Identity,
                    1 => flat.pop().unwrap(),
                    _ => OperatorExpr::Product(flat),
                };
                if factor == C64::new(1.0, 0.0) {
                    body
                } else {
                    body.scale_c(factor)
                }
            }
        }
    }

    /// Linear action on a state at time `t`.
    pub fn apply(&self, state: &FockState, t: f64) -> Result<FockState> {
        if let Some(m) = self.max_mode() {
            state.check_mode(m)?;
        }
        let caps = state.capacities();
        let amps = self.apply_raw(&caps, state.amplitudes(), t);
        FockState::from_amplitudes(&caps, amps)
    }

    fn apply_raw(&self, caps: &[usize], src: &[C64], t: f64) -> Vec<C64> {
        match self {
            OperatorExpr::Annihilation(m) => {
                let mut out = vec![C64::new(0.0, 0.0); src.len()];
                lower_into(caps, *m, src, &mut out);
                out
            }
            OperatorExpr::Creation(m) => {
                let mut out = vec![C64::new(0.0, 0.0); src.len()];
                raise_into(caps, *m, src, &mut out);
                out
            }
            OperatorExpr::Identity => src.to_vec(),
            OperatorExpr::Scale(c, child) => {
                let c = c.eval(t);
                let mut out = child.apply_raw(caps, src, t);
                out.iter_mut().for_each(|x| *x *= c);
                out
            }
            OperatorExpr::Sum(children) => {
                let mut out = vec![C64::new(0.0, 0.0); src.len()];
                for child in children {
                    for (o, v) in out.iter_mut().zip(child.apply_raw(caps, src, t)) {
                        *o += v;
                    }
                }
                out
            }
            OperatorExpr::Product(children) => {
                let mut cur = src.to_vec();
                for child in children.iter().rev() {
                    cur = child.apply_raw(caps, &cur, t);
                }
                cur
            }
        }
    }

    pub fn compile(&self) -> CompiledOperator {
        CompiledOperator::from_expr(self)
    }
}

impl fmt::Display for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorExpr::Annihilation(m) => write!(f, "a{m}"),
            OperatorExpr::Creation(m) => write!(f, "a{m}^+"),
            OperatorExpr::Identity => write!(f, "I"),
            OperatorExpr::Scale(Coefficient::Constant(c), child) => {
                write!(f, "({}{:+}i)*{}", c.re, c.im, child)
            }
            OperatorExpr::Scale(Coefficient::Time(tc), child) => write!(f, "[{tc}]*{child}"),
            OperatorExpr::Sum(children) => {
                write!(f, "(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            OperatorExpr::Product(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

/// Hamiltonian plus Lindblad operators; fully determines both the master
/// equation and its diffusion unravelling.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystemModel {
    pub hbar: f64,
    pub hamiltonian: OperatorExpr,
    pub lindblads: Vec<OperatorExpr>,
    pub n_modes: usize,
}

impl OpenSystemModel {
    pub fn new(hbar: f64, hamiltonian: OperatorExpr, lindblads: Vec<OperatorExpr>, n_modes: usize) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        let used = std::iter::once(&hamiltonian).chain(&lindblads).filter_map(|e| e.max_mode()).max();
        if let Some(m) = used {
            if m >= n_modes {
                return Err(Error::InvalidMode { mode: m, n_modes });
            }
        }
        let model = Self { hbar, hamiltonian, lindblads, n_modes };
        let asym = model.hamiltonian_asymmetry();
        if asym > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "Hamiltonian is not self-adjoint (coefficient mismatch {asym:e})"
            )));
        }
        Ok(model)
    }

    /// Largest coefficient difference between `H` and `H^dagger` in canonical
    /// expanded form, checked at a few times.
    pub fn hamiltonian_asymmetry(&self) -> f64 {
        let h = self.hamiltonian.compile();
        let hd = h.adjoint();
        [0.0, 0.37, 1.9, 4.2]
            .iter()
            .map(|&t| h.at_time(t).max_difference(&hd.at_time(t)))
            .fold(0.0, f64::max)
    }

    pub fn describe(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("modes = {}\nhbar = {}\n", self.n_modes, self.hbar));
        out.push_str(&format!("H = {}\n", self.hamiltonian.simplify()));
        out.push_str("H terms (expanded, t-dependent factors in brackets):\n");
        out.push_str(&self.hamiltonian.compile().describe());
        for (m, l) in self.lindblads.iter().enumerate() {
            out.push_str(&format!("L{} = {}\n", m, l.simplify()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: &FockState, b: &FockState, tol: f64) -> bool {
        a.amplitudes().iter().zip(b.amplitudes()).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn identity_and_number() {
        let psi = FockState::from_amplitudes(&[3], vec![c(0.1, 0.2), c(0.3, -0.4), c(0.5, 0.0)]).unwrap();
        assert_eq!(OperatorExpr::Identity.apply(&psi, 0.0).unwrap(), psi);
        let two = FockState::basis(&[4], &[2]).unwrap();
        let out = OperatorExpr::number(0).apply(&two, 0.0).unwrap();
        assert!(close(&out, &two.scaled(c(2.0, 0.0)), 1e-14));
    }

    #[test]
    fn cosine_scale_at_zero() {
        let q = OperatorExpr::quadrature(0, Quadrature::Q);
        let driven = q.clone().scale_t(TimeCoefficient::cosine(0.3, 1.0, 0.0));
        let vac = FockState::vacuum(&[3]).unwrap();
        let out = driven.apply(&vac, 0.0).unwrap();
        let expected = q.apply(&vac, 0.0).unwrap().scaled(c(0.3, 0.0));
        assert!(close(&out, &expected, 1e-15));
    }

    #[test]
    fn adjoint_rules() {
        assert_eq!(OperatorExpr::a(0).adjoint(), OperatorExpr::ad(0));
        assert_eq!(
            OperatorExpr::a(0).scale_c(c(0.0, 1.0)).adjoint(),
            OperatorExpr::ad(0).scale_c(c(0.0, -1.0))
        );
        assert_eq!(
            OperatorExpr::a(0).times(OperatorExpr::a(1)).adjoint(),
            OperatorExpr::ad(1).times(OperatorExpr::ad(0))
        );
    }

    #[test]
    fn simplify_flattens_and_folds() {
        let e = OperatorExpr::Product(vec![
            OperatorExpr::a(0).scale(2.0),
            OperatorExpr::Identity,
            OperatorExpr::Product(vec![OperatorExpr::ad(0), OperatorExpr::a(1)]),
        ])
        .scale(0.5);
        assert_eq!(
            e.simplify(),
            OperatorExpr::Product(vec![OperatorExpr::a(0), OperatorExpr::ad(0), OperatorExpr::a(1)])
        );
        let s = OperatorExpr::Sum(vec![OperatorExpr::Sum(vec![OperatorExpr::a(0)]), OperatorExpr::ad(0)]);
        assert_eq!(s.simplify(), OperatorExpr::Sum(vec![OperatorExpr::a(0), OperatorExpr::ad(0)]));
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let h = OperatorExpr::a(0);
        assert!(OpenSystemModel::new(1.0, h, vec![], 1).is_err());
        let h = OperatorExpr::ad(0).plus(OperatorExpr::a(0)).scale_c(c(0.0, 1.0));
        assert!(OpenSystemModel::new(1.0, h, vec![], 1).is_err());
        let h = OperatorExpr::ad(0).plus(OperatorExpr::a(0).scale(-1.0)).scale_c(c(0.0, 1.0));
        assert!(OpenSystemModel::new(1.0, h, vec![], 1).is_ok());
    }

    #[test]
    fn rejects_out_of_range_modes() {
        assert!(matches!(
            OpenSystemModel::new(1.0, OperatorExpr::number(1), vec![], 1),
            Err(Error::InvalidMode { .. })
        ));
        let vac = FockState::vacuum(&[3]).unwrap();
        assert!(OperatorExpr::a(2).apply(&vac, 0.0).is_err());
    }

    fn arb_leaf(modes: usize) -> impl Strategy<Value = OperatorExpr> {
        prop_oneof![
            (0..modes).prop_map(OperatorExpr::Annihilation),
            (0..modes).prop_map(OperatorExpr::Creation),
            Just(OperatorExpr::Identity),
        ]
    }

    fn arb_expr(modes: usize) -> impl Strategy<Value = OperatorExpr> {
        arb_leaf(modes).prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                ((-2.0f64..2.0, -2.0f64..2.0), inner.clone()).prop_map(|((r, i), e)| e.scale_c(C64::new(r, i))),
                (0.1f64..1.0, inner.clone())
                    .prop_map(|(a, e)| e.scale_t(TimeCoefficient::cosine(a, 1.3, 0.2))),
                prop::collection::vec(inner.clone(), 1..3).prop_map(OperatorExpr::Sum),
                prop::collection::vec(inner, 1..3).prop_map(OperatorExpr::Product),
            ]
        })
    }

    fn arb_state(caps: Vec<usize>) -> impl Strategy<Value = FockState> {
        let dim: usize = caps.iter().product();
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_map(move |v| {
            FockState::from_amplitudes(&caps, v.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn adjoint_is_involutive(e in arb_expr(2)) {
            prop_assert_eq!(e.adjoint().adjoint().simplify(), e.simplify());
        }

        #[test]
        fn adjoint_matches_inner_product(e in arb_expr(2), x in arb_state(vec![4, 3]),
                                         y in arb_state(vec![4, 3]), t in 0.0f64..5.0) {
            let lhs = x.inner_product(&e.apply(&y, t).unwrap()).unwrap();
            let rhs = e.adjoint().apply(&x, t).unwrap().inner_product(&y).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
        }

        #[test]
        fn apply_is_linear(e in arb_expr(2), x in arb_state(vec![3, 3]), y in arb_state(vec![3, 3]),
                           al in (-1.0f64..1.0, -1.0f64..1.0), be in (-1.0f64..1.0, -1.0f64..1.0)) {
            let (al, be) = (C64::new(al.0, al.1), C64::new(be.0, be.1));
            let combo = FockState::from_amplitudes(&[3, 3], x.amplitudes().iter().zip(y.amplitudes())
                .map(|(a, b)| al * a + be * b).collect()).unwrap();
            let lhs = e.apply(&combo, 0.4).unwrap();
            let ex = e.apply(&x, 0.4).unwrap();
            let ey = e.apply(&y, 0.4).unwrap();
            let scale = 1.0 + lhs.norm();
            for ((l, a), b) in lhs.amplitudes().iter().zip(ex.amplitudes()).zip(ey.amplitudes()) {
                prop_assert!((l - (al * a + be * b)).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn compiled_matches_tree(e in arb_expr(2), x in arb_state(vec![4, 3]), t in 0.0f64..5.0) {
            let tree = e.apply(&x, t).unwrap();
            let compiled = e.compile().apply(&x, t);
            let scale = 1.0 + tree.norm();
            for (a, b) in tree.amplitudes().iter().zip(compiled.amplitudes()) {
                prop_assert!((a - b).norm() <= 1e-12 * scale);
            }
        }
    }
}
