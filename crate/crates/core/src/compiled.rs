//! Expanded polynomial form of an operator expression: a sum of
//! `coefficient * profiles(t) * word` terms, where a word is an ordered
//! string of ladder operators. Used by the integrators, which apply the same
//! operator thousands of times, and by the moving basis, which substitutes
//! `a -> a + alpha` into every word.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::fock::{lower_into, raise_into, FockState};
use crate::operator::{Coefficient, OperatorExpr, TimeCoefficient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ladder {
    Lower(usize),
    Raise(usize),
}

impl Ladder {
    pub fn mode(&self) -> usize {
        match *self {
            Ladder::Lower(m) | Ladder::Raise(m) => m,
        }
    }

    fn adjoint(&self) -> Self {
        match *self {
            Ladder::Lower(m) => Ladder::Raise(m),
            Ladder::Raise(m) => Ladder::Lower(m),
        }
    }
}

/// `coeff * prod(profiles(t)) * word`; the word is applied right-to-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: C64,
    pub profiles: Vec<TimeCoefficient>,
    pub word: Vec<Ladder>,
}

impl Term {
    pub fn coefficient_at(&self, t: f64) -> C64 {
        self.profiles.iter().fold(self.coeff, |c, p| c * p.eval(t))
    }
}

type TermKey = (Vec<(u8, u64, u64, u64)>, Vec<Ladder>);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompiledOperator {
    terms: Vec<Term>,
}

impl CompiledOperator {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity(coeff: C64) -> Self {
        Self::from_terms(vec![Term { coeff, profiles: vec![], word: vec![] }])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Merges like terms. Ladder operators of different modes commute, so
    /// words are stably sorted by mode; order within a mode is kept.
    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut merged: BTreeMap<TermKey, Term> = BTreeMap::new();
        for mut term in terms {
            term.word.sort_by_key(|l| l.mode());
            term.profiles.sort_by_key(|p| p.key());
            let key = (term.profiles.iter().map(|p| p.key()).collect(), term.word.clone());
            merged.entry(key).and_modify(|t| t.coeff += term.coeff).or_insert(term);
        }
        let terms = merged.into_values().filter(|t| t.coeff != C64::new(0.0, 0.0)).collect();
        Self { terms }
    }

    pub fn from_expr(expr: &OperatorExpr) -> Self {
        match expr {
            OperatorExpr::Annihilation(m) => Self::word(vec![Ladder::Lower(*m)]),
            OperatorExpr::Creation(m) => Self::word(vec![Ladder::Raise(*m)]),
            OperatorExpr::Identity => Self::identity(C64::new(1.0, 0.0)),
            OperatorExpr::Scale(Coefficient::Constant(c), child) => Self::from_expr(child).scaled(*c),
            OperatorExpr::Scale(Coefficient::Time(tc), child) => {
                let mut inner = Self::from_expr(child);
                inner.terms.iter_mut().for_each(|t| t.profiles.push(*tc));
                Self::from_terms(inner.terms)
            }
            OperatorExpr::Sum(children) => {
                Self::from_terms(children.iter().flat_map(|c| Self::from_expr(c).terms).collect())
            }
            OperatorExpr::Product(children) => children
                .iter()
                .map(Self::from_expr)
                .reduce(|acc, next| acc.mul(&next))
                .unwrap_or_else(|| Self::identity(C64::new(1.0, 0.0))),
        }
    }

    fn word(word: Vec<Ladder>) -> Self {
        Self { terms: vec![Term { coeff: C64::new(1.0, 0.0), profiles: vec![], word }] }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::from_terms(
            self.terms.iter().map(|t| Term { coeff: t.coeff * factor, ..t.clone() }).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(&other.terms).cloned().collect())
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for l in &self.terms {
            for r in &other.terms {
                let mut word = l.word.clone();
                word.extend_from_slice(&r.word);
                let mut profiles = l.profiles.clone();
                profiles.extend_from_slice(&r.profiles);
                out.push(Term { coeff: l.coeff * r.coeff, profiles, word });
            }
        }
        Self::from_terms(out)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff.conj(),
                    profiles: t.profiles.clone(),
                    word: t.word.iter().rev().map(Ladder::adjoint).collect(),
                })
                .collect(),
        )
    }

    /// Freezes all time profiles at `t`.
    pub fn at_time(&self, t: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|term| Term { coeff: term.coefficient_at(t), profiles: vec![], word: term.word.clone() })
                .collect(),
        )
    }

    /// Substitutes `a_k -> a_k + shift_k` and `a_k^dagger -> a_k^dagger + conj(shift_k)`
    /// for every mode; modes beyond `shifts` are left untouched.
    pub fn substitute(&self, shifts: &[C64]) -> Self {
        let mut out = Vec::new();
        for term in &self.terms {
            // expand the word letter by letter: each letter is either kept or
            // replaced by its c-number shift
            let mut partial: Vec<(C64, Vec<Ladder>)> = vec![(term.coeff, Vec::with_capacity(term.word.len()))];
            for &letter in &term.word {
                let shift = shifts.get(letter.mode()).copied().unwrap_or_default();
                let shift = match letter {
                    Ladder::Lower(_) => shift,
                    Ladder::Raise(_) => shift.conj(),
                };
                let mut next = Vec::with_capacity(partial.len() * 2);
                for (c, w) in partial {
                    if shift != C64::new(0.0, 0.0) {
                        next.push((c * shift, w.clone()));
                    }
                    let mut w = w;
                    w.push(letter);
                    next.push((c, w));
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|(coeff, word)| Term { coeff, profiles: term.profiles.clone(), word }));
        }
        Self::from_terms(out)
    }

    /// Splits off the c-number (empty-word) part: `(identity, remainder)`.
    pub fn split_identity(&self) -> (Self, Self) {
        let (id, rest): (Vec<Term>, Vec<Term>) = self.terms.iter().cloned().partition(|t| t.word.is_empty());
        (Self { terms: id }, Self { terms: rest })
    }

    /// Value of the c-number part at `t`.
    pub fn identity_coefficient(&self, t: f64) -> C64 {
        self.terms.iter().filter(|t| t.word.is_empty()).map(|term| term.coefficient_at(t)).sum()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.terms.iter().any(|t| !t.profiles.is_empty())
    }

    pub fn max_mode(&self) -> Option<usize> {
        self.terms.iter().flat_map(|t| t.word.iter().map(|l| l.mode())).max()
    }

    /// Largest coefficient difference between two time-independent operators.
    pub fn max_difference(&self, other: &Self) -> f64 {
        self.add(&other.scaled(C64::new(-1.0, 0.0))).terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)
    }

    /// `out += self(t) * src`, using `scratch` (two buffers of `src.len()`).
    pub fn apply_add(&self, capacities: &[usize], t: f64, src: &[C64], out: &mut [C64], scratch: &mut Scratch) {
        self.apply_add_scaled(capacities, t, C64::new(1.0, 0.0), src, out, scratch);
    }

    /// `out += factor * self(t) * src`.
    pub fn apply_add_scaled(
        &self,
        capacities: &[usize],
        t: f64,
        factor: C64,
        src: &[C64],
        out: &mut [C64],
        scratch: &mut Scratch,
    ) {
        scratch.ensure(src.len());
        for term in &self.terms {
            let c = term.coefficient_at(t) * factor;
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            if term.word.is_empty() {
                for (o, s) in out.iter_mut().zip(src) {
                    *o += c * s;
                }
                continue;
            }
            let result = scratch.apply_word(capacities, &term.word, src);
            for (o, r) in out.iter_mut().zip(result) {
                *o += c * r;
            }
        }
    }

    pub fn apply(&self, state: &FockState, t: f64) -> FockState {
        let caps = state.capacities();
        let mut out = vec![C64::new(0.0, 0.0); state.dim()];
        let mut scratch = Scratch::default();
        self.apply_add(&caps, t, state.amplitudes(), &mut out, &mut scratch);
        FockState::from_amplitudes(&caps, out).expect("layout preserved")
    }

    pub fn describe(&self) -> String {
        let mut out = String::new();
        for term in &self.terms {
            out.push_str(&format!("  {:+.6e}{:+.6e}i", term.coeff.re, term.coeff.im));
            for p in &term.profiles {
                out.push_str(&format!(" [{p}]"));
            }
            if term.word.is_empty() {
                out.push_str(" I");
            }
            for l in &term.word {
                match l {
                    Ladder::Lower(m) => out.push_str(&format!(" a{m}")),
                    Ladder::Raise(m) => out.push_str(&format!(" a{m}^+")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Reusable work buffers for word application.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    a: Vec<C64>,
    b: Vec<C64>,
}

impl Scratch {
    fn ensure(&mut self, len: usize) {
        if self.a.len() != len {
            self.a = vec![C64::new(0.0, 0.0); len];
            self.b = vec![C64::new(0.0, 0.0); len];
        }
    }

    fn apply_word(&mut self, capacities: &[usize], word: &[Ladder], src: &[C64]) -> &[C64] {
        let mut first = true;
        for letter in word.iter().rev() {
            let (from, to): (&[C64], &mut [C64]) = if first { (src, &mut self.a) } else { (&self.a, &mut self.b) };
            match *letter {
                Ladder::Lower(m) => lower_into(capacities, m, from, to),
                Ladder::Raise(m) => {
                    raise_into(capacities, m, from, to);
                }
            }
            if !first {
                std::mem::swap(&mut self.a, &mut self.b);
            }
            first = false;
        }
        &self.a
    }
}
