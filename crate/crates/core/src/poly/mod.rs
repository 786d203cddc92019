//! Sparse polynomial Hamiltonians in the modes `(psi, conj psi)`.
//!
//! A term is `coeff * psi^j * conj(psi)^l` for a pair of finitely supported
//! exponent vectors. Coefficients live in a `BTreeMap` keyed by the exponent
//! pair, so iteration order (and hence every derived quantity and the JSON
//! encoding) is canonical regardless of construction order.
//!
//! Convention for the symplectic structure: the flow of a generator `chi` is
//! `d psi / dt = i grad_{conj psi} chi`, and the bracket is fixed so that
//! `{chi, g}` is the derivative of `g` along that flow:
//!
//! ```text
//! {f, g} = i sum_a ( df/d(conj psi_a) dg/d(psi_a) - df/d(psi_a) dg/d(conj psi_a) )
//! ```
//!
//! With this choice `{H_0, chi}` acts on a monomial as multiplication by
//! `i omega . (j - l)`, which is what the homological equation solver in
//! [`crate::normal_form`] inverts.

pub mod tame;

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::de::{Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{ModeState, PotentialSpec};

/// Finitely supported exponent vector over modes `1..=J`, kept sorted by
/// mode with all exponents positive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exponents(Vec<(u16, u8)>);

impl Exponents {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds from `(mode, exponent)` pairs; zero exponents are dropped and
    /// repeated modes accumulated.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map: BTreeMap<u16, u32> = BTreeMap::new();
        for (m, e) in pairs {
            if e > 0 {
                *map.entry(m as u16).or_default() += e;
            }
        }
        Self(map.into_iter().map(|(m, e)| (m, e as u8)).collect())
    }

    pub fn single(mode: usize, exp: u32) -> Self {
        Self::from_pairs([(mode, exp)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().map(|&(m, e)| (m as usize, e as u32))
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&(_, e)| e as usize).sum()
    }

    pub fn get(&self, mode: usize) -> u32 {
        self.0
            .binary_search_by_key(&(mode as u16), |&(m, _)| m)
            .map(|i| self.0[i].1 as u32)
            .unwrap_or(0)
    }

    pub fn max_mode(&self) -> usize {
        self.0.last().map(|&(m, _)| m as usize).unwrap_or(0)
    }

    /// Total exponent carried by modes strictly above `n`.
    pub fn degree_above(&self, n: usize) -> usize {
        self.0.iter().filter(|&&(m, _)| m as usize > n).map(|&(_, e)| e as usize).sum()
    }

    /// Product of two exponent vectors (exponents add).
    pub fn mul(&self, other: &Self) -> Self {
        let mut map: BTreeMap<u16, u32> = BTreeMap::new();
        for &(m, e) in self.0.iter().chain(other.0.iter()) {
            *map.entry(m).or_default() += e as u32;
        }
        Self(map.into_iter().map(|(m, e)| (m, e as u8)).collect())
    }

    /// Removes one power of `mode`; `None` if absent.
    pub fn decrement(&self, mode: usize) -> Option<Self> {
        let i = self.0.binary_search_by_key(&(mode as u16), |&(m, _)| m).ok()?;
        let mut v = self.0.clone();
        if v[i].1 == 1 {
            v.remove(i);
        } else {
            v[i].1 -= 1;
        }
        Some(Self(v))
    }

    /// Expands the multiset into a flat factor list, ascending by mode.
    pub fn factor_list(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.degree());
        for &(m, e) in &self.0 {
            for _ in 0..e {
                out.push(m as usize);
            }
        }
        out
    }
}

/// Exponent pair of one monomial `psi^j conj(psi)^l`: `psi` holds `j`,
/// `bar` holds `l`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExponentPair {
    pub psi: Exponents,
    pub bar: Exponents,
}

impl ExponentPair {
    pub fn new(psi: Exponents, bar: Exponents) -> Self {
        Self { psi, bar }
    }

    pub fn degree(&self) -> usize {
        self.psi.degree() + self.bar.degree()
    }

    pub fn max_mode(&self) -> usize {
        self.psi.max_mode().max(self.bar.max_mode())
    }

    /// Total exponent on modes strictly above `n`, `psi` and `bar` combined.
    pub fn degree_above(&self, n: usize) -> usize {
        self.psi.degree_above(n) + self.bar.degree_above(n)
    }

    /// Action monomials have identical `psi` and `bar` exponents.
    pub fn is_action(&self) -> bool {
        self.psi == self.bar
    }

    /// Key of the complex-conjugate monomial.
    pub fn conjugate(&self) -> Self {
        Self { psi: self.bar.clone(), bar: self.psi.clone() }
    }

    /// Signed exponent differences `(j_a - l_a)` over the support.
    pub fn signed_diffs(&self) -> Vec<(usize, i64)> {
        let mut map: BTreeMap<usize, i64> = BTreeMap::new();
        for (m, e) in self.psi.iter() {
            *map.entry(m).or_default() += e as i64;
        }
        for (m, e) in self.bar.iter() {
            *map.entry(m).or_default() -= e as i64;
        }
        map.into_iter().filter(|&(_, w)| w != 0).collect()
    }
}

/// Per-degree ledger of coefficient mass discarded by degree caps.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Spill<T> {
    by_degree: BTreeMap<usize, T>,
}

impl<T: Real> Spill<T> {
    pub fn new() -> Self {
        Self { by_degree: BTreeMap::new() }
    }

    pub fn record(&mut self, degree: usize, mass: T) {
        if mass > T::zero() {
            *self.by_degree.entry(degree).or_insert_with(T::zero) += mass;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (&d, &m) in &other.by_degree {
            self.record(d, m);
        }
    }

    pub fn total(&self) -> T {
        self.by_degree.values().fold(T::zero(), |a, &b| a + b)
    }

    pub fn is_empty(&self) -> bool {
        self.by_degree.is_empty()
    }

    pub fn by_degree(&self) -> &BTreeMap<usize, T> {
        &self.by_degree
    }

    /// Certified bound on the `H^s` vector-field norm of the discarded terms
    /// on the ball of radius `rho`: each degree-`d` monomial of unit
    /// coefficient satisfies `|X(psi)|_s <= d J^s rho^{d-1}` there.
    pub fn field_bound(&self, modes: usize, s: T, rho: T) -> T {
        let js = T::from_count(modes).powf(s);
        self.by_degree
            .iter()
            .map(|(&d, &m)| m * T::from_count(d) * js * rho.powi(d as i32 - 1))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Sparse polynomial Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyHamiltonian<T> {
    terms: BTreeMap<ExponentPair, Complex<T>>,
    mode_cutoff: usize,
    degree_cap: usize,
}

impl<T: Real> PolyHamiltonian<T> {
    pub fn zero(mode_cutoff: usize, degree_cap: usize) -> Self {
        Self { terms: BTreeMap::new(), mode_cutoff, degree_cap }
    }

    /// Builds from terms, validating supports, the degree cap and the
    /// minimum total degree 2. Zero coefficients are dropped.
    pub fn from_terms(
        mode_cutoff: usize,
        degree_cap: usize,
        terms: impl IntoIterator<Item = (ExponentPair, Complex<T>)>,
    ) -> Result<Self> {
        let mut poly = Self::zero(mode_cutoff, degree_cap);
        for (key, coeff) in terms {
            let deg = key.degree();
            if deg < 2 {
                return Err(Error::Degree(format!("term of degree {deg} < 2")));
            }
            if deg > degree_cap {
                return Err(Error::Degree(format!("term of degree {deg} above cap {degree_cap}")));
            }
            if key.max_mode() > mode_cutoff {
                return Err(Error::IndexRange(format!(
                    "mode {} above cutoff {}",
                    key.max_mode(),
                    mode_cutoff
                )));
            }
            poly.accumulate(key, coeff);
        }
        Ok(poly)
    }

    pub fn mode_cutoff(&self) -> usize {
        self.mode_cutoff
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ExponentPair, &Complex<T>)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, key: &ExponentPair) -> Complex<T> {
        self.terms.get(key).copied().unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    pub(crate) fn accumulate(&mut self, key: ExponentPair, coeff: Complex<T>) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(e) => {
                if coeff.re != T::zero() || coeff.im != T::zero() {
                    e.insert(coeff);
                }
            }
            Entry::Occupied(mut e) => {
                let v = *e.get() + coeff;
                if v.re == T::zero() && v.im == T::zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    /// Adds `factor * other`, spilling terms above this polynomial's cap.
    pub fn add_scaled(&mut self, other: &Self, factor: Complex<T>, spill: &mut Spill<T>) {
        for (key, coeff) in &other.terms {
            let c = coeff * factor;
            if key.degree() > self.degree_cap {
                spill.record(key.degree(), c.norm());
            } else {
                self.accumulate(key.clone(), c);
            }
        }
    }

    pub fn scaled(&self, factor: Complex<T>) -> Self {
        let mut out = Self::zero(self.mode_cutoff, self.degree_cap);
        for (key, coeff) in &self.terms {
            out.accumulate(key.clone(), coeff * factor);
        }
        out
    }

    /// Drops terms whose coefficient magnitude is at most `tol`.
    pub fn pruned(&self, tol: T) -> Self {
        let mut out = Self::zero(self.mode_cutoff, self.degree_cap);
        for (key, coeff) in &self.terms {
            if coeff.norm() > tol {
                out.accumulate(key.clone(), *coeff);
            }
        }
        out
    }

    /// Smallest and largest total degree present, if nonzero.
    pub fn degree_range(&self) -> Option<(usize, usize)> {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for key in self.terms.keys() {
            lo = lo.min(key.degree());
            hi = hi.max(key.degree());
        }
        if hi == 0 {
            None
        } else {
            Some((lo, hi))
        }
    }

    /// Degree if homogeneous, `None` otherwise (or if zero).
    pub fn homogeneous_degree(&self) -> Option<usize> {
        match self.degree_range() {
            Some((lo, hi)) if lo == hi => Some(lo),
            _ => None,
        }
    }

    /// Component of the given total degree.
    pub fn homogeneous_component(&self, degree: usize) -> Self {
        let mut out = Self::zero(self.mode_cutoff, self.degree_cap);
        for (key, coeff) in &self.terms {
            if key.degree() == degree {
                out.accumulate(key.clone(), *coeff);
            }
        }
        out
    }

    /// Coefficient-wise absolute value.
    pub fn modulus(&self) -> Self {
        let mut out = Self::zero(self.mode_cutoff, self.degree_cap);
        for (key, coeff) in &self.terms {
            out.accumulate(key.clone(), Complex::new(coeff.norm(), T::zero()));
        }
        out
    }

    /// Maximum coefficient magnitude.
    pub fn max_coeff(&self) -> T {
        self.terms.values().map(|c| c.norm()).fold(T::zero(), T::max)
    }

    /// Sum of coefficient magnitudes.
    pub fn coeff_mass(&self) -> T {
        self.terms.values().map(|c| c.norm()).fold(T::zero(), |a, b| a + b)
    }

    /// Checks the reality condition `coeff(j, l) = conj(coeff(l, j))`.
    pub fn is_real_symmetric(&self, tol: T) -> bool {
        self.terms.iter().all(|(key, coeff)| {
            let partner = self.coefficient(&key.conjugate());
            (partner.conj() - coeff).norm() <= tol
        })
    }

    /// Value at a state with the conjugate variable implicit
    /// (`conj psi` substituted for the `bar` factors).
    pub fn evaluate(&self, state: &ModeState<T>) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (key, coeff) in &self.terms {
            let mut term = *coeff;
            for (m, e) in key.psi.iter() {
                term = term * state.amp(m).powi(e as i32);
            }
            for (m, e) in key.bar.iter() {
                term = term * state.amp(m).conj().powi(e as i32);
            }
            acc += term;
        }
        acc
    }
}

impl<T: Real> Serialize for PolyHamiltonian<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term {
            j: Vec<[u32; 2]>,
            l: Vec<[u32; 2]>,
            re: f64,
            im: f64,
        }
        let mut seq = serializer.serialize_seq(Some(self.terms.len()))?;
        for (key, coeff) in &self.terms {
            seq.serialize_element(&Term {
                j: key.psi.iter().map(|(m, e)| [m as u32, e]).collect(),
                l: key.bar.iter().map(|(m, e)| [m as u32, e]).collect(),
                re: coeff.re.to_f64().unwrap_or(f64::NAN),
                im: coeff.im.to_f64().unwrap_or(f64::NAN),
            })?;
        }
        seq.end()
    }
}

impl<'de, T: Real> Deserialize<'de> for PolyHamiltonian<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Term {
            j: Vec<[u32; 2]>,
            l: Vec<[u32; 2]>,
            re: f64,
            im: f64,
        }
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: Real> Visitor<'de> for V<T> {
            type Value = PolyHamiltonian<T>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a sequence of monomial terms")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
                let mut terms: Vec<(ExponentPair, Complex<T>)> = Vec::new();
                while let Some(t) = seq.next_element::<Term>()? {
                    let psi = Exponents::from_pairs(t.j.iter().map(|&[m, e]| (m as usize, e)));
                    let bar = Exponents::from_pairs(t.l.iter().map(|&[m, e]| (m as usize, e)));
                    terms.push((ExponentPair::new(psi, bar), Complex::new(T::lit(t.re), T::lit(t.im))));
                }
                // Cutoff and cap are inferred from the term list.
                let cutoff = terms.iter().map(|(k, _)| k.max_mode()).max().unwrap_or(1).max(1);
                let cap = terms.iter().map(|(k, _)| k.degree()).max().unwrap_or(2).max(2);
                PolyHamiltonian::from_terms(cutoff, cap, terms).map_err(serde::de::Error::custom)
            }
        }
        deserializer.deserialize_seq(V(std::marker::PhantomData))
    }
}

/// Coefficient-wise absolute value (operation surface for
/// [`PolyHamiltonian::modulus`]).
pub fn modulus<T: Real>(f: &PolyHamiltonian<T>) -> PolyHamiltonian<T> {
    f.modulus()
}

/// Poisson bracket
/// `{f, g} = i sum_a ( df/d(conj psi_a) dg/d(psi_a) - df/d(psi_a) dg/d(conj psi_a) )`.
///
/// The result degree of each term pair is `deg f + deg g - 2`; terms pushed
/// above the (smaller) degree cap are accumulated in the returned spill.
pub fn poisson_bracket<T: Real>(
    f: &PolyHamiltonian<T>,
    g: &PolyHamiltonian<T>,
) -> Result<(PolyHamiltonian<T>, Spill<T>)> {
    if f.mode_cutoff != g.mode_cutoff {
        return Err(Error::CutoffMismatch(f.mode_cutoff, g.mode_cutoff));
    }
    let cap = f.degree_cap.min(g.degree_cap);
    let mut out = PolyHamiltonian::zero(f.mode_cutoff, cap);
    let mut spill = Spill::new();
    let i_unit = Complex::new(T::zero(), T::one());

    for (kf, cf) in &f.terms {
        for (kg, cg) in &g.terms {
            // Modes where either pairing of derivatives is nonzero.
            let mut modes: Vec<usize> = kf
                .bar
                .iter()
                .filter(|&(m, _)| kg.psi.get(m) > 0)
                .map(|(m, _)| m)
                .chain(kf.psi.iter().filter(|&(m, _)| kg.bar.get(m) > 0).map(|(m, _)| m))
                .collect();
            modes.sort_unstable();
            modes.dedup();
            for a in modes {
                let w = kf.bar.get(a) as i64 * kg.psi.get(a) as i64
                    - kf.psi.get(a) as i64 * kg.bar.get(a) as i64;
                if w == 0 {
                    continue;
                }
                let psi = kf.psi.mul(&kg.psi).decrement(a).expect("psi factor present");
                let bar = kf.bar.mul(&kg.bar).decrement(a).expect("bar factor present");
                let key = ExponentPair::new(psi, bar);
                let coeff = i_unit * cf * cg * T::lit(w as f64);
                if key.degree() > cap {
                    spill.record(key.degree(), coeff.norm());
                } else {
                    out.accumulate(key, coeff);
                }
            }
        }
    }
    Ok((out, spill))
}

/// Splits a state into modes `1..=n` and `n+1..=J`; the two parts sum back
/// to the input exactly.
pub fn project_split<T: Real>(state: &ModeState<T>, n: usize) -> Result<(ModeState<T>, ModeState<T>)> {
    if n < 1 || n > state.len() {
        return Err(Error::IndexRange(format!("split index {n} outside 1..={}", state.len())));
    }
    let mut low = ModeState::zeros(state.len());
    let mut high = ModeState::zeros(state.len());
    for j in 1..=state.len() {
        if j <= n {
            *low.amp_mut(j) = state.amp(j);
        } else {
            *high.amp_mut(j) = state.amp(j);
        }
    }
    Ok((low, high))
}

/// Splits `f` by total exponent carried by modes above `n`: `kept` holds the
/// terms with high-mode degree at most `max_high_degree`, `discarded` the
/// rest; `kept + discarded = f`.
pub fn high_degree_filter<T: Real>(
    f: &PolyHamiltonian<T>,
    n: usize,
    max_high_degree: usize,
) -> (PolyHamiltonian<T>, PolyHamiltonian<T>) {
    let mut kept = PolyHamiltonian::zero(f.mode_cutoff, f.degree_cap);
    let mut discarded = PolyHamiltonian::zero(f.mode_cutoff, f.degree_cap);
    for (key, coeff) in &f.terms {
        if key.degree_above(n) <= max_high_degree {
            kept.accumulate(key.clone(), *coeff);
        } else {
            discarded.accumulate(key.clone(), *coeff);
        }
    }
    (kept, discarded)
}

/// Hamiltonian vector field `X_f(psi) = i grad_{conj psi} f` at a state with
/// the conjugate variable implicit.
pub fn vector_field_eval<T: Real>(f: &PolyHamiltonian<T>, state: &ModeState<T>) -> ModeState<T> {
    let mut out = ModeState::zeros(state.len());
    let i_unit = Complex::new(T::zero(), T::one());
    for (key, coeff) in &f.terms {
        // psi factors evaluate once per term.
        let mut psi_part = Complex::new(T::one(), T::zero());
        for (m, e) in key.psi.iter() {
            psi_part = psi_part * state.amp(m).powi(e as i32);
        }
        for (k, e) in key.bar.iter() {
            let reduced = key.bar.decrement(k).expect("exponent present");
            let mut bar_part = Complex::new(T::one(), T::zero());
            for (m, eb) in reduced.iter() {
                bar_part = bar_part * state.amp(m).conj().powi(eb as i32);
            }
            let grad = coeff * T::from_count(e as usize) * psi_part * bar_part;
            *out.amp_mut(k) += i_unit * grad;
        }
    }
    out
}

/// Split Taylor expansion of the nonlinearity: the polynomial part of
/// `int f(Lambda (psi + conj psi) / sqrt 2) dx` with `f(u) = sum_p a_p u^p`,
/// retaining powers `p <= degree_cap`; higher powers are listed in `tail`.
#[derive(Debug, Clone)]
pub struct TaylorSplit<T> {
    pub poly: PolyHamiltonian<T>,
    /// Unexpanded powers `(p, a_p)` with `p > degree_cap`.
    pub tail: Vec<(usize, T)>,
}

/// Exact trigonometric value of
/// `(2/pi)^{p/2} int_0^pi prod_i sin(j_i x) dx`
/// via the signed Kronecker selection rule over `{+1, -1}^p`.
fn sine_product_integral(modes: &[usize]) -> f64 {
    let p = modes.len();
    // (1 / (2i)^p) sum_eps (prod eps) E(sum eps_i j_i), with
    // E(0) = pi, E(K) = ((-1)^K - 1) / (iK).
    let mut acc_re = 0.0f64;
    let mut acc_im = 0.0f64;
    for mask in 0u32..(1u32 << p) {
        let mut k: i64 = 0;
        let mut sign = 1.0f64;
        for (i, &m) in modes.iter().enumerate() {
            if mask & (1 << i) == 0 {
                k += m as i64;
            } else {
                k -= m as i64;
                sign = -sign;
            }
        }
        if k == 0 {
            acc_re += sign * std::f64::consts::PI;
        } else if k % 2 != 0 {
            // E(K) = 2i / K for odd K.
            acc_im += sign * 2.0 / k as f64;
        }
    }
    // Divide by (2i)^p.
    let (re, im) = (acc_re, acc_im);
    let half_pow = 0.5f64.powi(p as i32);
    let rotated = match p % 4 {
        0 => (re, im),
        1 => (im, -re),  // divide by i
        2 => (-re, -im), // divide by i^2
        _ => (-im, re),  // divide by i^3
    };
    let val = (rotated.0 * half_pow, rotated.1 * half_pow);
    debug_assert!(val.1.abs() < 1e-12, "sine product integral must be real");
    val.0 * (2.0 / std::f64::consts::PI).powf(p as f64 / 2.0)
}

fn multisets(modes: usize, len: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(modes: usize, start: usize, left: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if left == 0 {
            f(cur);
            return;
        }
        for m in start..=modes {
            cur.push(m);
            rec(modes, m, left - 1, cur, f);
            cur.pop();
        }
    }
    rec(modes, 1, len, &mut Vec::new(), f);
}

/// Expands `int f(Lambda (psi + conj psi) / sqrt 2) dx` in the monomial
/// basis by the exact sine selection rules (`Lambda` is the smoothing
/// multiplier). Powers above `degree_cap` are not expanded and returned in
/// the tail list.
pub fn taylor_nonlinearity<T: Real>(
    nl_spec: &[(usize, T)],
    pot: &PotentialSpec<T>,
    c: T,
    modes: usize,
    degree_cap: usize,
) -> Result<TaylorSplit<T>> {
    if nl_spec.is_empty() {
        return Err(Error::InvalidParameter("empty nonlinearity spec".into()));
    }
    for &(p, a) in nl_spec {
        if p < 4 {
            return Err(Error::InvalidParameter(format!(
                "nonlinearity power {p} < 4: f must have a zero of order four at the origin"
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParameter(format!("coefficient a_{p} not finite")));
        }
    }
    if modes < 1 {
        return Err(Error::InvalidParameter("at least one mode required".into()));
    }

    let mult = crate::spectral::smoothing_multipliers(pot, c, modes);
    let inv_sqrt2 = T::lit(0.5).sqrt();
    let mut poly = PolyHamiltonian::zero(modes, degree_cap);
    let mut tail = Vec::new();

    // log-factorials for ordered-tuple counts.
    let max_p = nl_spec.iter().map(|&(p, _)| p).max().unwrap();
    let mut fact = vec![1.0f64; max_p + 1];
    for i in 1..=max_p {
        fact[i] = fact[i - 1] * i as f64;
    }

    for &(p, a) in nl_spec {
        if a == T::zero() {
            continue;
        }
        if p > degree_cap {
            tail.push((p, a));
            continue;
        }
        multisets(modes, p, &mut |tuple: &[usize]| {
            let integral = sine_product_integral(tuple);
            if integral.abs() < 1e-12 {
                return;
            }
            // Count of ordered tuples realizing this multiset.
            let mut perms = fact[p];
            let mut run = 1usize;
            for i in 1..tuple.len() {
                if tuple[i] == tuple[i - 1] {
                    run += 1;
                } else {
                    run = 1;
                }
                if run > 1 {
                    perms /= run as f64;
                }
            }
            let mut base = a * T::lit(integral) * T::lit(perms);
            // Multiplicity per mode, then the smoothing and 1/sqrt2 factors.
            let mut mults: Vec<(usize, usize)> = Vec::new();
            for &m in tuple {
                match mults.last_mut() {
                    Some((lm, e)) if *lm == m => *e += 1,
                    _ => mults.push((m, 1)),
                }
            }
            for &m in tuple {
                base = base * mult[m - 1] * inv_sqrt2;
            }
            // Distribute psi / conj psi over each mode's multiplicity.
            distribute(&mults, 0, Exponents::empty(), Exponents::empty(), T::one(), &mut |psi, bar, binom| {
                poly.accumulate(
                    ExponentPair::new(psi, bar),
                    Complex::new(base * binom, T::zero()),
                );
            });
        });
    }

    Ok(TaylorSplit { poly: poly.pruned(T::zero()), tail })
}

fn distribute<T: Real>(
    mults: &[(usize, usize)],
    idx: usize,
    psi: Exponents,
    bar: Exponents,
    binom: T,
    emit: &mut impl FnMut(Exponents, Exponents, T),
) {
    if idx == mults.len() {
        emit(psi, bar, binom);
        return;
    }
    let (mode, m) = mults[idx];
    let mut choose = 1.0f64;
    for k in 0..=m {
        if k > 0 {
            choose = choose * (m - k + 1) as f64 / k as f64;
        }
        let mut psi_k = psi.clone();
        if k > 0 {
            psi_k = psi_k.mul(&Exponents::single(mode, k as u32));
        }
        let mut bar_k = bar.clone();
        if m - k > 0 {
            bar_k = bar_k.mul(&Exponents::single(mode, (m - k) as u32));
        }
        distribute(mults, idx + 1, psi_k, bar_k, binom * T::lit(choose), emit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spectral::FrequencySet;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn c64(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn action(j: usize) -> ExponentPair {
        ExponentPair::new(Exponents::single(j, 1), Exponents::single(j, 1))
    }

    fn random_poly(modes: usize, degree: usize, terms: usize, cap: usize, seed: u64) -> PolyHamiltonian<f64> {
        let mut rng = rng::stream(seed, "poly-random");
        let mut out = PolyHamiltonian::zero(modes, cap);
        for _ in 0..terms {
            let mut psi = Exponents::empty();
            let mut bar = Exponents::empty();
            for _ in 0..degree {
                let m = rng.gen_range(1..=modes);
                if rng.gen::<bool>() {
                    psi = psi.mul(&Exponents::single(m, 1));
                } else {
                    bar = bar.mul(&Exponents::single(m, 1));
                }
            }
            let coeff = c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let key = ExponentPair::new(psi, bar);
            // Insert with the conjugate partner so reality holds.
            out.accumulate(key.conjugate(), coeff.conj());
            out.accumulate(key, coeff);
        }
        out
    }

    fn random_real_state(modes: usize, seed: u64) -> ModeState<f64> {
        let mut rng = rng::stream(seed, "poly-state");
        ModeState::new(
            (0..modes)
                .map(|_| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect(),
        )
    }

    #[test]
    fn bracket_action_with_h0_vanishes() {
        // H0 = sum omega_j I_j, I_k = psi_k conj(psi_k).
        let omegas = [1.3, 2.7, 3.1];
        let h0 = PolyHamiltonian::from_terms(
            3,
            8,
            omegas.iter().enumerate().map(|(i, &w)| (action(i + 1), c64(w, 0.0))),
        )
        .unwrap();
        let i2 = PolyHamiltonian::from_terms(3, 8, [(action(2), c64(1.0, 0.0))]).unwrap();
        let (b, spill) = poisson_bracket(&i2, &h0).unwrap();
        assert!(b.is_zero());
        assert!(spill.is_empty());
    }

    #[test]
    fn bracket_h0_with_offdiagonal_monomial() {
        // {H0, psi_k conj(psi_m)} = i (omega_k - omega_m) psi_k conj(psi_m).
        let omegas = [1.3, 2.7];
        let h0 = PolyHamiltonian::from_terms(
            2,
            8,
            omegas.iter().enumerate().map(|(i, &w)| (action(i + 1), c64(w, 0.0))),
        )
        .unwrap();
        let key = ExponentPair::new(Exponents::single(1, 1), Exponents::single(2, 1));
        let mono = PolyHamiltonian::from_terms(2, 8, [(key.clone(), c64(1.0, 0.0))]).unwrap();
        let (b, _) = poisson_bracket(&h0, &mono).unwrap();
        assert_eq!(b.num_terms(), 1);
        let got = b.coefficient(&key);
        assert_relative_eq!(got.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(got.im, omegas[0] - omegas[1], max_relative = 1e-15);
    }

    #[test]
    fn bracket_antisymmetry_and_bilinearity() {
        let f = random_poly(3, 3, 4, 10, 11);
        let g = random_poly(3, 4, 4, 10, 12);
        let (fg, _) = poisson_bracket(&f, &g).unwrap();
        let (gf, _) = poisson_bracket(&g, &f).unwrap();
        let mut sum = fg.clone();
        let mut spill = Spill::new();
        sum.add_scaled(&gf, c64(1.0, 0.0), &mut spill);
        assert!(sum.max_coeff() < 1e-14, "antisymmetry residual {}", sum.max_coeff());

        // Bilinearity: {2f, g} = 2{f, g}.
        let (f2g, _) = poisson_bracket(&f.scaled(c64(2.0, 0.0)), &g).unwrap();
        let mut diff = f2g;
        diff.add_scaled(&fg, c64(-2.0, 0.0), &mut spill);
        assert!(diff.max_coeff() < 1e-14);
    }

    #[test]
    fn jacobi_identity_on_random_triples() {
        for seed in 0..6 {
            let f = random_poly(4, 3, 3, 16, 100 + seed);
            let g = random_poly(4, 4, 3, 16, 200 + seed);
            let h = random_poly(4, 2, 3, 16, 300 + seed);
            let term = |a: &PolyHamiltonian<f64>, b: &PolyHamiltonian<f64>, c: &PolyHamiltonian<f64>| {
                let (inner, _) = poisson_bracket(b, c).unwrap();
                poisson_bracket(a, &inner).unwrap().0
            };
            let mut acc = term(&f, &g, &h);
            let mut spill = Spill::new();
            acc.add_scaled(&term(&g, &h, &f), c64(1.0, 0.0), &mut spill);
            acc.add_scaled(&term(&h, &f, &g), c64(1.0, 0.0), &mut spill);
            assert!(acc.max_coeff() < 1e-10, "jacobi residual {}", acc.max_coeff());
            assert!(spill.is_empty());
        }
    }

    #[test]
    fn bracket_preserves_reality() {
        let f = random_poly(3, 3, 5, 10, 21);
        let g = random_poly(3, 4, 5, 10, 22);
        assert!(f.is_real_symmetric(1e-14));
        let (b, _) = poisson_bracket(&f, &g).unwrap();
        assert!(b.is_real_symmetric(1e-13));
    }

    #[test]
    fn bracket_rejects_cutoff_mismatch() {
        let f = random_poly(3, 3, 2, 10, 1);
        let g = random_poly(4, 3, 2, 10, 2);
        assert!(poisson_bracket(&f, &g).is_err());
    }

    #[test]
    fn bracket_spills_above_cap() {
        let f = random_poly(2, 4, 3, 4, 31);
        let g = random_poly(2, 4, 3, 4, 32);
        let (b, spill) = poisson_bracket(&f, &g).unwrap();
        // Degree 4 + 4 - 2 = 6 exceeds the cap 4 entirely.
        assert!(b.is_zero());
        assert!(!spill.is_empty());
        assert!(spill.by_degree().keys().all(|&d| d == 6));
    }

    #[test]
    fn modulus_examples() {
        let key1 = ExponentPair::new(Exponents::single(1, 2), Exponents::empty());
        let key2 = ExponentPair::new(Exponents::empty(), Exponents::single(2, 2));
        let f = PolyHamiltonian::from_terms(2, 4, [(key1.clone(), c64(2.0, 0.0)), (key2.clone(), c64(0.0, -3.0))])
            .unwrap();
        let m = modulus(&f);
        assert_eq!(m.coefficient(&key1), c64(2.0, 0.0));
        assert_eq!(m.coefficient(&key2), c64(3.0, 0.0));
        assert_eq!(modulus(&m), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn modulus_triangle_inequality(seed_f in 0u64..500, seed_g in 500u64..1000) {
            let f = random_poly(3, 3, 4, 8, seed_f);
            let g = random_poly(3, 3, 4, 8, seed_g);
            let mut sum = f.clone();
            let mut spill = Spill::new();
            sum.add_scaled(&g, c64(1.0, 0.0), &mut spill);
            let lhs = sum.modulus();
            for (key, coeff) in lhs.iter() {
                let bound = f.coefficient(key).norm() + g.coefficient(key).norm();
                prop_assert!(coeff.re <= bound + 1e-14);
            }
        }

        #[test]
        fn project_split_is_direct_sum(seed in 0u64..1000, n in 1usize..6) {
            let state = random_real_state(6, seed);
            let (low, high) = project_split(&state, n).unwrap();
            let sum = low.add(&high);
            for j in 1..=6 {
                prop_assert_eq!(sum.amp(j), state.amp(j));
                if j <= n {
                    prop_assert_eq!(high.amp(j), c64(0.0, 0.0));
                } else {
                    prop_assert_eq!(low.amp(j), c64(0.0, 0.0));
                }
            }
            let s = 2.5;
            let total = state.sobolev_norm(s).powi(2);
            let parts = low.sobolev_norm(s).powi(2) + high.sobolev_norm(s).powi(2);
            prop_assert!((total - parts).abs() <= 1e-12 * total.max(1e-12));
        }
    }

    #[test]
    fn project_split_edges() {
        let state = random_real_state(3, 7);
        let (low, high) = project_split(&state, 3).unwrap();
        assert_eq!(low, state);
        assert!(high.sobolev_norm(0.0) == 0.0);
        assert!(project_split(&state, 0).is_err());
        assert!(project_split(&state, 4).is_err());

        let st = ModeState::new(vec![c64(1.0, 0.0), c64(2.0, 0.0), c64(3.0, 0.0)]);
        let (low, high) = project_split(&st, 1).unwrap();
        assert_eq!(low.amps(), &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        assert_eq!(high.amps(), &[c64(0.0, 0.0), c64(2.0, 0.0), c64(3.0, 0.0)]);
    }

    #[test]
    fn high_degree_filter_examples() {
        let low_key = ExponentPair::new(Exponents::single(1, 2), Exponents::single(2, 1));
        let f = PolyHamiltonian::from_terms(4, 6, [(low_key, c64(1.0, 0.0))]).unwrap();
        let (kept, discarded) = high_degree_filter(&f, 2, 2);
        assert_eq!(kept, f);
        assert!(discarded.is_zero());

        let cubic_high = ExponentPair::new(Exponents::single(4, 3), Exponents::empty());
        let f = PolyHamiltonian::from_terms(4, 6, [(cubic_high.clone(), c64(1.0, 0.0))]).unwrap();
        let (kept, discarded) = high_degree_filter(&f, 3, 2);
        assert!(kept.is_zero());
        assert_eq!(discarded.coefficient(&cubic_high), c64(1.0, 0.0));
    }

    #[test]
    fn vector_field_matches_h0_rotation() {
        let omegas = [1.5, 2.5];
        let h0 = PolyHamiltonian::from_terms(
            2,
            4,
            omegas.iter().enumerate().map(|(i, &w)| (action(i + 1), c64(w, 0.0))),
        )
        .unwrap();
        let state = random_real_state(2, 3);
        let field = vector_field_eval(&h0, &state);
        for j in 1..=2 {
            let expected = Complex::new(0.0, omegas[j - 1]) * state.amp(j);
            assert!((field.amp(j) - expected).norm() < 1e-15);
        }
        let zero = PolyHamiltonian::zero(2, 4);
        let f0 = vector_field_eval(&zero, &state);
        assert!(f0.sobolev_norm(0.0) == 0.0);
    }

    #[test]
    fn vector_field_gradient_check() {
        // Finite difference of f along the flow direction at conjugate
        // pairs: d/dt f(psi + t X_f(psi)) ~ <grad, X> structure. Instead test
        // the gradient directly: for real h, f(psi + eps e_k dir) - f(psi))
        // against the derivative implied by the field.
        let f = random_poly(3, 4, 6, 8, 77);
        let state = random_real_state(3, 78);
        let field = vector_field_eval(&f, &state);
        // The Hamiltonian flow of a real-symmetric f preserves f; check that
        // the directional derivative of f along X_f is ~0 via central
        // differences (oracle: the chain rule).
        let eps = 1e-6;
        let plus = ModeState::new(
            state.amps().iter().zip(field.amps()).map(|(a, v)| a + v * eps).collect(),
        );
        let minus = ModeState::new(
            state.amps().iter().zip(field.amps()).map(|(a, v)| a - v * eps).collect(),
        );
        let d = (f.evaluate(&plus).re - f.evaluate(&minus).re) / (2.0 * eps);
        assert!(d.abs() < 1e-6, "directional derivative along own field {d}");

        // Gradient check against finite differences in a random direction.
        let dir = random_real_state(3, 79);
        let plus = ModeState::new(state.amps().iter().zip(dir.amps()).map(|(a, v)| a + v * eps).collect());
        let minus = ModeState::new(state.amps().iter().zip(dir.amps()).map(|(a, v)| a - v * eps).collect());
        let fd = (f.evaluate(&plus).re - f.evaluate(&minus).re) / (2.0 * eps);
        // d f = 2 Re sum_k dir_k * df/dpsi_k; df/dpsi_k = conj(-i X_k)... use
        // X_k = i df/d(conj psi_k) => df/d(conj psi_k) = -i X_k, and
        // df/dpsi_k = conj(df/d(conj psi_k)) for real f.
        let mut analytic = 0.0;
        for j in 1..=3 {
            let d_dbar = Complex::new(0.0, -1.0) * field.amp(j);
            analytic += 2.0 * (d_dbar * dir.amp(j).conj()).re;
        }
        assert_relative_eq!(fd, analytic, max_relative = 1e-6, epsilon = 1e-9);
    }

    #[test]
    fn taylor_nonlinearity_validation() {
        let pot = PotentialSpec::zero(2.0, 2);
        assert!(taylor_nonlinearity::<f64>(&[], &pot, 1.0, 2, 4).is_err());
        assert!(taylor_nonlinearity(&[(3, 1.0)], &pot, 1.0, 2, 4).is_err());
        let zero = taylor_nonlinearity(&[(4, 0.0)], &pot, 1.0, 2, 4).unwrap();
        assert!(zero.poly.is_zero());
        assert!(zero.tail.is_empty());
    }

    #[test]
    fn taylor_nonlinearity_tail_split() {
        let pot = PotentialSpec::zero(2.0, 2);
        let split = taylor_nonlinearity(&[(4, 1.0), (6, 0.5)], &pot, 1.0, 2, 4).unwrap();
        assert!(!split.poly.is_zero());
        assert_eq!(split.tail, vec![(6, 0.5)]);
    }

    #[test]
    fn taylor_nonlinearity_reality_and_quadrature() {
        let pot = PotentialSpec::new(2.0, 0.5, vec![0.3, -0.2, 0.1]).unwrap();
        let c = 1.5;
        let split = taylor_nonlinearity(&[(4, 0.8), (5, 0.3)], &pot, c, 3, 5).unwrap();
        assert!(split.poly.is_real_symmetric(1e-12));

        // Oracle: high-resolution quadrature of int f(Lambda(psi+conj psi)/sqrt2) dx.
        let mult = crate::spectral::smoothing_multipliers(&pot, c, 3);
        let state = random_real_state(3, 5).scaled(0.7);
        let n_grid = 4001usize;
        let h = std::f64::consts::PI / n_grid as f64;
        let mut quad = 0.0;
        for i in 0..n_grid {
            let x = (i as f64 + 0.5) * h;
            let mut u = 0.0;
            for j in 1..=3 {
                let w = mult[j - 1] * (state.amp(j) + state.amp(j).conj()).re / 2.0_f64.sqrt();
                u += w * (2.0 / std::f64::consts::PI).sqrt() * (j as f64 * x).sin();
            }
            quad += (0.8 * u.powi(4) + 0.3 * u.powi(5)) * h;
        }
        let val = split.poly.evaluate(&state);
        assert!(val.im.abs() < 1e-12);
        assert_relative_eq!(val.re, quad, max_relative = 1e-6);
    }

    #[test]
    fn sine_product_integral_known_values() {
        // (2/pi) int sin^2 = 1 (orthonormality).
        assert_relative_eq!(sine_product_integral(&[1, 1]), 1.0, max_relative = 1e-14);
        assert_relative_eq!(sine_product_integral(&[2, 2]), 1.0, max_relative = 1e-14);
        assert_relative_eq!(sine_product_integral(&[1, 2]), 0.0, epsilon = 1e-14);
        // (2/pi)^2 int_0^pi sin^4 = (4/pi^2)(3 pi / 8) = 3/(2 pi).
        assert_relative_eq!(
            sine_product_integral(&[1, 1, 1, 1]),
            3.0 / (2.0 * std::f64::consts::PI),
            max_relative = 1e-14
        );
        // Odd-parity total index: int sin(x) sin(x) sin(2x) = 0.
        assert_relative_eq!(sine_product_integral(&[1, 1, 2]), 0.0, epsilon = 1e-14);
        // Mixed-parity nonzero case: (2/pi)^{3/2} int sin^3 = (2/pi)^{3/2} * 4/3.
        assert_relative_eq!(
            sine_product_integral(&[1, 1, 1]),
            (2.0 / std::f64::consts::PI).powf(1.5) * 4.0 / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn poly_serde_round_trip() {
        let f = random_poly(3, 4, 5, 6, 90);
        let js = serde_json::to_string(&f).unwrap();
        assert!(js.starts_with("[{\"j\":"));
        let back: PolyHamiltonian<f64> = serde_json::from_str(&js).unwrap();
        for (key, coeff) in f.iter() {
            assert_eq!(back.coefficient(key), *coeff);
        }
        assert_eq!(back.num_terms(), f.num_terms());
    }

    #[test]
    fn evaluate_against_frequency_energy() {
        let pot = PotentialSpec::zero(2.0, 2);
        let freqs = FrequencySet::from_potential(&pot, 1.0).unwrap();
        let h0 = PolyHamiltonian::from_terms(
            2,
            4,
            (1..=2).map(|j| (action(j), c64(freqs.omega(j), 0.0))),
        )
        .unwrap();
        let state = random_real_state(2, 44);
        let direct = crate::spectral::h0_energy(&freqs, &state);
        assert_relative_eq!(h0.evaluate(&state).re, direct, max_relative = 1e-14);
    }
}
