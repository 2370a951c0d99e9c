//! Noncommutative polynomials in Alice's and Bob's measurement operators.
//!
//! Letters are either dichotomic observables `A_x`, `B_y` (with `A_x² = 1`) or
//! projectors `A(a|x)`, `B(b|y)` (idempotent, mutually orthogonal within an
//! input). Alice's letters commute with Bob's. Words are kept in normal form:
//! Alice block first, then Bob block, each fully reduced.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;

use crate::bell::{BellInequality, CorrelationTable};
use crate::npa::LinearBound;
use crate::quantum::{kron, CMatrix, MeasurementSet};
use crate::{Error, Result};

/// Longest word a polynomial may hold.
pub const DEGREE_CAP: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flavor {
    Dichotomic,
    Projector(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Generator {
    pub party: Party,
    pub input: usize,
    pub flavor: Flavor,
}

impl Generator {
    pub fn a(x: usize) -> Self {
        Generator { party: Party::Alice, input: x, flavor: Flavor::Dichotomic }
    }

    pub fn b(y: usize) -> Self {
        Generator { party: Party::Bob, input: y, flavor: Flavor::Dichotomic }
    }

    pub fn pa(a: usize, x: usize) -> Self {
        Generator { party: Party::Alice, input: x, flavor: Flavor::Projector(a) }
    }

    pub fn pb(b: usize, y: usize) -> Self {
        Generator { party: Party::Bob, input: y, flavor: Flavor::Projector(b) }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.party {
            Party::Alice => 'A',
            Party::Bob => 'B',
        };
        match self.flavor {
            Flavor::Dichotomic => write!(f, "{p}{}", self.input),
            Flavor::Projector(o) => write!(f, "{p}({o}|{})", self.input),
        }
    }
}

/// Outcome of multiplying two adjacent letters.
enum Pair {
    Cancel,
    Merge,
    Zero,
    Keep,
}

fn pair(l: Generator, r: Generator) -> Pair {
    if l.party != r.party || l.input != r.input {
        return Pair::Keep;
    }
    match (l.flavor, r.flavor) {
        (Flavor::Dichotomic, Flavor::Dichotomic) => Pair::Cancel,
        (Flavor::Projector(a), Flavor::Projector(b)) if a == b => Pair::Merge,
        (Flavor::Projector(_), Flavor::Projector(_)) => Pair::Zero,
        _ => Pair::Keep,
    }
}

/// A monomial. Ordered by length first so that shorter words sort earlier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<Generator>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letters(&self) -> &[Generator] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// Normal form of an arbitrary letter sequence; `None` if it vanishes.
    pub fn reduce(letters: &[Generator]) -> Option<Word> {
        let mut out = Vec::with_capacity(letters.len());
        for party in [Party::Alice, Party::Bob] {
            let start = out.len();
            for &l in letters.iter().filter(|l| l.party == party) {
                match out[start..].last() {
                    Some(&top) => match pair(top, l) {
                        Pair::Cancel => {
                            out.pop();
                        }
                        Pair::Merge => {}
                        Pair::Zero => return None,
                        Pair::Keep => out.push(l),
                    },
                    None => out.push(l),
                }
            }
        }
        Some(Word(out))
    }

    /// Concatenation followed by reduction.
    pub fn mul(&self, rhs: &Word) -> Option<Word> {
        let mut v = self.0.clone();
        v.extend_from_slice(&rhs.0);
        Word::reduce(&v)
    }

    /// Reverses each party block; all letters are self-adjoint.
    pub fn adjoint(&self) -> Word {
        let split = self.0.iter().position(|l| l.party == Party::Bob).unwrap_or(self.0.len());
        let mut v: Vec<Generator> = self.0[..split].iter().rev().copied().collect();
        v.extend(self.0[split..].iter().rev());
        Word(v)
    }

    /// Operator on the joint space `H_A ⊗ H_B`.
    pub fn matrix(letters: &[Generator], alice: &MeasurementSet, bob: &MeasurementSet) -> Result<CMatrix> {
        let n = alice.dim() * bob.dim();
        let mut m = CMatrix::identity(n, n);
        for l in letters {
            m *= letter_matrix(*l, alice, bob)?;
        }
        Ok(m)
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// One applicable rewrite inside a raw letter sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rewrite {
    /// Bob letter at `i` followed by Alice letter: swap them.
    Commute(usize),
    /// `L L = 1` at `i, i+1`.
    Cancel(usize),
    /// `P P = P` at `i, i+1`.
    Merge(usize),
    /// `P(a) P(a') = 0` at `i, i+1`.
    Annihilate(usize),
}

/// Every rewrite applicable to `letters`.
pub fn rewrite_sites(letters: &[Generator]) -> Vec<Rewrite> {
    let mut out = Vec::new();
    for i in 0..letters.len().saturating_sub(1) {
        let (l, r) = (letters[i], letters[i + 1]);
        if l.party == Party::Bob && r.party == Party::Alice {
            out.push(Rewrite::Commute(i));
            continue;
        }
        match pair(l, r) {
            Pair::Cancel => out.push(Rewrite::Cancel(i)),
            Pair::Merge => out.push(Rewrite::Merge(i)),
            Pair::Zero => out.push(Rewrite::Annihilate(i)),
            Pair::Keep => {}
        }
    }
    out
}

/// Reduces by applying one rewrite at a time, `pick(k)` choosing among the `k`
/// sites available at each step. Any choice sequence reaches [`Word::reduce`].
pub fn reduce_by(letters: &[Generator], mut pick: impl FnMut(usize) -> usize) -> Option<Word> {
    let mut w = letters.to_vec();
    loop {
        let sites = rewrite_sites(&w);
        if sites.is_empty() {
            return Some(Word(w));
        }
        match sites[pick(sites.len()) % sites.len()] {
            Rewrite::Commute(i) => w.swap(i, i + 1),
            Rewrite::Cancel(i) => {
                w.drain(i..i + 2);
            }
            Rewrite::Merge(i) => {
                w.remove(i + 1);
            }
            Rewrite::Annihilate(_) => return None,
        }
    }
}

fn letter_matrix(l: Generator, alice: &MeasurementSet, bob: &MeasurementSet) -> Result<CMatrix> {
    let (set, other_dim) = match l.party {
        Party::Alice => (alice, bob.dim()),
        Party::Bob => (bob, alice.dim()),
    };
    if l.input >= set.inputs() {
        return Err(Error::Shape(format!("letter {l} outside measurement set")));
    }
    let local = match l.flavor {
        Flavor::Dichotomic => set.dichotomic(l.input)?,
        Flavor::Projector(a) if a < set.outputs() => set.operator(a, l.input).clone(),
        Flavor::Projector(_) => return Err(Error::Shape(format!("letter {l} outside measurement set"))),
    };
    let id = CMatrix::identity(other_dim, other_dim);
    Ok(match l.party {
        Party::Alice => kron(&local, &id),
        Party::Bob => kron(&id, &local),
    })
}

/// Real linear combination of normal-form words.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NCPolynomial {
    terms: BTreeMap<Word, f64>,
}

impl NCPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(Word::identity(), c)
    }

    pub fn letter(g: Generator) -> Self {
        Self::monomial(Word(vec![g]), 1.0)
    }

    pub fn monomial(w: Word, c: f64) -> Self {
        let mut p = Self::zero();
        p.add_raw(w.letters(), c);
        p
    }

    /// Builds a polynomial from arbitrary letter sequences, reducing each.
    pub fn from_raw(terms: &[(Vec<Generator>, f64)]) -> Self {
        let mut p = Self::zero();
        for (w, c) in terms {
            p.add_raw(w, *c);
        }
        p
    }

    fn add_raw(&mut self, letters: &[Generator], c: f64) {
        if let Some(w) = Word::reduce(letters) {
            self.add_term(w, c);
        }
    }

    fn add_term(&mut self, w: Word, c: f64) {
        use std::collections::btree_map::Entry;
        if c == 0.0 {
            return;
        }
        match self.terms.entry(w) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.terms.iter().map(|(w, &c)| (w, c))
    }

    pub fn coefficient(&self, w: &Word) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero();
        for (w, c) in self.terms() {
            p.add_term(w.clone(), c * s);
        }
        p
    }

    /// Product, failing if any resulting word exceeds [`DEGREE_CAP`].
    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        let mut p = Self::zero();
        for (u, cu) in self.terms() {
            for (v, cv) in rhs.terms() {
                if let Some(w) = u.mul(v) {
                    if w.degree() > DEGREE_CAP {
                        return Err(Error::DegreeCap { degree: w.degree(), cap: DEGREE_CAP });
                    }
                    p.add_term(w, cu * cv);
                }
            }
        }
        Ok(p)
    }

    pub fn adjoint(&self) -> Self {
        let mut p = Self::zero();
        for (w, c) in self.terms() {
            p.add_term(w.adjoint(), c);
        }
        p
    }

    /// Rewrites every dichotomic letter as `2 P(0) - 1`.
    pub fn to_projector_form(&self) -> Result<Self> {
        let mut out = Self::zero();
        for (w, c) in self.terms() {
            let mut acc = Self::constant(c);
            for &l in w.letters() {
                let factor = match l.flavor {
                    Flavor::Dichotomic => {
                        let p0 = Generator { flavor: Flavor::Projector(0), ..l };
                        Self::letter(p0).scale(2.0) - Self::constant(1.0)
                    }
                    Flavor::Projector(_) => Self::letter(l),
                };
                acc = acc.try_mul(&factor)?;
            }
            out = out + acc;
        }
        Ok(out)
    }

    /// Substitutes `P(last|x) = 1 − Σ_{a<last} P(a|x)` for both parties.
    pub fn eliminate_last_outcome(&self, outputs_a: usize, outputs_b: usize) -> Result<Self> {
        let mut out = Self::zero();
        for (w, c) in self.terms() {
            let mut acc = Self::constant(c);
            for &l in w.letters() {
                let last = match l.party {
                    Party::Alice => outputs_a,
                    Party::Bob => outputs_b,
                } - 1;
                let factor = match l.flavor {
                    Flavor::Projector(a) if a == last => {
                        let mut f = Self::constant(1.0);
                        for o in 0..last {
                            f = f - Self::letter(Generator { flavor: Flavor::Projector(o), ..l });
                        }
                        f
                    }
                    _ => Self::letter(l),
                };
                acc = acc.try_mul(&factor)?;
            }
            out = out + acc;
        }
        Ok(out)
    }

    /// Operator on `H_A ⊗ H_B`.
    pub fn matrix(&self, alice: &MeasurementSet, bob: &MeasurementSet) -> Result<CMatrix> {
        let n = alice.dim() * bob.dim();
        let mut m = CMatrix::zeros(n, n);
        for (w, c) in self.terms() {
            m += Word::matrix(w.letters(), alice, bob)? * Complex64::new(c, 0.0);
        }
        Ok(m)
    }
}

/// Reduces every word; a no-op on polynomials built through this module.
pub fn normal_form(p: &NCPolynomial) -> NCPolynomial {
    let mut out = NCPolynomial::zero();
    for (w, c) in p.terms() {
        out.add_raw(w.letters(), c);
    }
    out
}

impl Add for NCPolynomial {
    type Output = NCPolynomial;
    fn add(mut self, rhs: NCPolynomial) -> NCPolynomial {
        for (w, c) in rhs.terms {
            self.add_term(w, c);
        }
        self
    }
}

impl Sub for NCPolynomial {
    type Output = NCPolynomial;
    fn sub(self, rhs: NCPolynomial) -> NCPolynomial {
        self + rhs.scale(-1.0)
    }
}

impl Neg for NCPolynomial {
    type Output = NCPolynomial;
    fn neg(self) -> NCPolynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for NCPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
                write!(f, "{}*{w}", c.abs())?;
            } else {
                write!(f, "{c}*{w}")?;
            }
        }
        Ok(())
    }
}

/// Bell operator `Σ g_abxy A(a|x) B(b|y)` in projector letters.
pub fn bell_operator(ineq: &BellInequality) -> NCPolynomial {
    let mut p = NCPolynomial::zero();
    for (a, b, x, y, c) in ineq.terms() {
        p.add_raw(&[Generator::pa(a, x), Generator::pb(b, y)], c);
    }
    p
}

/// CHSH operator `A0B0 + A0B1 + A1B0 − A1B1` in dichotomic letters.
pub fn chsh_operator() -> NCPolynomial {
    use Generator as G;
    NCPolynomial::from_raw(&[
        (vec![G::a(0), G::b(0)], 1.0),
        (vec![G::a(0), G::b(1)], 1.0),
        (vec![G::a(1), G::b(0)], 1.0),
        (vec![G::a(1), G::b(1)], -1.0),
    ])
}

/// Sum-of-squares certificate for `A(0|0) ⪯ μ + ν G` on CHSH.
#[derive(Clone, Debug)]
pub struct SosCertificate {
    pub g0: f64,
    pub alpha: f64,
    pub gammas: [f64; 5],
    pub sos_terms: Vec<NCPolynomial>,
    /// `μ(g0) + ν(g0) G − A(0|0)`, written with `A(0|0) = (1 + A0)/2`.
    pub target: NCPolynomial,
}

const G_MAX: f64 = 2.0 * std::f64::consts::SQRT_2;

impl SosCertificate {
    /// The four squares for linearization point `g0 ∈ [2, 2√2)`.
    pub fn chsh(g0: f64) -> Result<Self> {
        let (alpha, gammas) = chsh_gammas(g0)?;
        Self::with_gammas(g0, alpha, gammas)
    }

    /// Same construction with caller-supplied coefficients.
    pub fn with_gammas(g0: f64, alpha: f64, gammas: [f64; 5]) -> Result<Self> {
        use Generator as G;
        let [g1, g2, g3, g4, g5] = gammas;
        let a = |x| vec![G::a(x)];
        let b = |y| vec![G::b(y)];
        let ab = |x, y| vec![G::a(x), G::b(y)];
        let one = Vec::new();
        let o1 = NCPolynomial::from_raw(&[(a(1), -2.0 * g1), (b(0), -g2), (b(1), g2), (ab(1, 0), g3), (ab(1, 1), g3)]);
        let o2 = NCPolynomial::from_raw(&[
            (one.clone(), -2.0 * g2),
            (a(0), -2.0 * g3),
            (b(0), g4),
            (b(1), g4),
            (ab(0, 0), -g1),
            (ab(0, 1), -g1),
            (ab(1, 0), g5),
            (ab(1, 1), -g5),
        ]);
        let o3 = NCPolynomial::from_raw(&[
            (b(0), -g4),
            (b(1), g4),
            (ab(0, 0), g1),
            (ab(0, 1), -g1),
            (ab(1, 0), -g5),
            (ab(1, 1), -g5),
        ]);
        let o4 = NCPolynomial::from_raw(&[
            (one, 2.0 * g4),
            (a(0), -2.0 * g5),
            (b(0), g2),
            (b(1), g2),
            (ab(1, 0), -g3),
            (ab(1, 1), g3),
        ]);
        let bound = chsh_linear_bound(g0.min(G_MAX - 1e-15))?;
        let target = NCPolynomial::constant(bound.mu - 0.5) - NCPolynomial::letter(G::a(0)).scale(0.5)
            + chsh_operator().scale(bound.nu);
        Ok(SosCertificate { g0, alpha, gammas, sos_terms: vec![o1, o2, o3, o4], target })
    }

    pub fn sum_of_squares(&self) -> Result<NCPolynomial> {
        let mut acc = NCPolynomial::zero();
        for o in &self.sos_terms {
            acc = acc + o.adjoint().try_mul(o)?;
        }
        Ok(acc)
    }

    /// `Σ Oᵢ†Oᵢ − target` in normal form.
    pub fn residual(&self) -> Result<NCPolynomial> {
        Ok(normal_form(&(self.sum_of_squares()? - self.target.clone())))
    }
}

/// `α = 1/√(8 − g0²)` and `γ₁…γ₅`.
pub fn chsh_gammas(g0: f64) -> Result<(f64, [f64; 5])> {
    if !(2.0..G_MAX).contains(&g0) {
        return Err(Error::Parameter(format!("linearization point {g0} outside [2, 2 sqrt 2)")));
    }
    let alpha = 1.0 / (8.0 - g0 * g0).sqrt();
    let sa = alpha.sqrt();
    Ok((alpha, [sa / 4.0, -g0 * sa / 8.0, g0 / (16.0 * sa), 1.0 / (8.0 * sa), (1.0 - g0 * g0 / 4.0) * sa / 4.0]))
}

/// Tangent of `1/2 + 1/2 √(2 − g²/4)` at `g0`.
pub(crate) fn chsh_linear_bound(g0: f64) -> Result<LinearBound> {
    if !(2.0..G_MAX).contains(&g0) {
        return Err(Error::Parameter(format!("linearization point {g0} outside [2, 2 sqrt 2)")));
    }
    let r = (2.0 - g0 * g0 / 4.0).sqrt();
    let f = 0.5 + 0.5 * r;
    let nu = -g0 / (8.0 * r);
    Ok(LinearBound { g0, mu: f - nu * g0, nu })
}

/// Residual of the CHSH sum-of-squares identity at `g0`.
pub fn verify_chsh_sos(g0: f64) -> Result<NCPolynomial> {
    SosCertificate::chsh(g0)?.residual()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableViolation {
    pub index: usize,
    pub g: f64,
    pub max_prob: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorCheckReport {
    pub checked: usize,
    /// Smallest `μ + ν g − max_a P(a|x_raw)` seen.
    pub min_slack: f64,
    pub violations: Vec<TableViolation>,
}

impl OperatorCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `max_a P(a|x_raw) ≤ μ + ν g + 1e-9` on each table, the expectation-value
/// consequence of `A(a|x_raw) ⪯ μ + ν G`.
///
/// `P(a|x_raw)` is read from the `(x_raw, 0)` block; tables must be no-signalling.
pub fn check_operator_inequality(
    bound: &LinearBound,
    ineq: &BellInequality,
    tables: &[CorrelationTable],
    x_raw: usize,
) -> Result<OperatorCheckReport> {
    let s = ineq.scenario;
    if x_raw >= s.inputs_a {
        return Err(Error::Shape(format!("x_raw {x_raw} outside {} inputs", s.inputs_a)));
    }
    let mut report = OperatorCheckReport { checked: 0, min_slack: f64::INFINITY, violations: Vec::new() };
    for (index, t) in tables.iter().enumerate() {
        let g = crate::bell::bell_value(ineq, t)?;
        let max_prob = (0..s.outputs_a).map(|a| t.marginal_a(a, x_raw, 0)).fold(0.0, f64::max);
        let value = bound.eval(g);
        let slack = value - max_prob;
        report.checked += 1;
        report.min_slack = report.min_slack.min(slack);
        if slack < -1e-9 {
            report.violations.push(TableViolation { index, g, max_prob, bound: value });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Generator as G;

    #[test]
    fn involution_and_commutation() {
        let p = NCPolynomial::from_raw(&[(vec![G::a(0), G::a(0)], 3.0)]);
        assert_eq!(p, NCPolynomial::constant(3.0));
        let q = NCPolynomial::from_raw(&[(vec![G::b(0), G::a(1)], 1.0)]);
        assert_eq!(q.terms().next().unwrap().0.letters(), &[G::a(1), G::b(0)]);
        let r = NCPolynomial::from_raw(&[(vec![G::a(0), G::a(1), G::a(0)], 1.0)]);
        assert_eq!(r.degree(), 3);
    }

    #[test]
    fn projector_relations() {
        assert_eq!(Word::reduce(&[G::pa(0, 0), G::pa(0, 0)]).unwrap().letters(), &[G::pa(0, 0)]);
        assert!(Word::reduce(&[G::pa(0, 0), G::pb(1, 1), G::pa(1, 0)]).is_none());
        assert_eq!(Word::reduce(&[G::pa(0, 0), G::pa(0, 1)]).unwrap().degree(), 2);
    }

    #[test]
    fn adjoint_examples() {
        let ab = NCPolynomial::from_raw(&[(vec![G::a(0), G::b(1)], 1.0)]);
        assert_eq!(ab.adjoint(), ab);
        let aa = NCPolynomial::from_raw(&[(vec![G::a(0), G::a(1)], 1.0)]);
        assert_eq!(aa.adjoint(), NCPolynomial::from_raw(&[(vec![G::a(1), G::a(0)], 1.0)]));
    }

    #[test]
    fn degree_cap_is_enforced() {
        let w: Vec<Generator> = (0..4).map(|i| G::a(i % 2)).collect();
        let p = NCPolynomial::from_raw(&[(w, 1.0)]);
        assert!(matches!(p.try_mul(&p), Err(Error::DegreeCap { degree: 8, cap: 6 })));
    }

    #[test]
    fn projector_conversion() {
        let p = NCPolynomial::letter(G::a(0)).to_projector_form().unwrap();
        let expect = NCPolynomial::letter(G::pa(0, 0)).scale(2.0) - NCPolynomial::constant(1.0);
        assert_eq!(p, expect);
    }

    #[test]
    fn sos_identity_holds() {
        for g0 in [2.0, 2.5, 2.8, 2.82] {
            let r = verify_chsh_sos(g0).unwrap();
            assert!(r.max_abs_coefficient() < 1e-12, "g0={g0}: {r}");
        }
        assert!(verify_chsh_sos(G_MAX).is_err());
        assert!(verify_chsh_sos(1.9).is_err());
    }

    #[test]
    fn perturbed_gamma_is_detected() {
        let (alpha, mut gammas) = chsh_gammas(2.5).unwrap();
        gammas[0] += 1e-3;
        let cert = SosCertificate::with_gammas(2.5, alpha, gammas).unwrap();
        assert!(cert.residual().unwrap().max_abs_coefficient() > 1e-4);
    }

    #[test]
    fn tangent_at_local_bound() {
        let b = chsh_linear_bound(2.0).unwrap();
        assert!((b.nu + 0.25).abs() < 1e-15);
        assert!((b.mu - 1.5).abs() < 1e-15);
    }

    #[test]
    fn bell_operator_matches_chsh() {
        let chsh = crate::bell::build_chsh();
        let proj = bell_operator(&chsh).eliminate_last_outcome(2, 2).unwrap();
        let dich = chsh_operator().to_projector_form().unwrap();
        assert!(normal_form(&(proj - dich)).max_abs_coefficient() < 1e-15);
    }
}
