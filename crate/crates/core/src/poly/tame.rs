//! Tame norms of polynomial vector fields.
//!
//! For a homogeneous Hamiltonian `f` of degree `d` the associated field has
//! degree `r = d - 1`, and its tame `s`-norm is the best constant in
//!
//! ```text
//! | Xsym_{|f|}(phi^(1), ..., phi^(r)) |_s  <=  K |phi|_{s,1}
//! ```
//!
//! over multivectors `phi`, where `|phi|_{s,1}` puts the `H^s` weight on one
//! slot and `H^1` weights on the rest, averaged over the choice of slot, and
//! `Xsym` is the symmetrized multilinear form of the modulus field.
//!
//! The exact norm is a sup over an infinite family, so this module provides
//! two computable companions: a certified upper bound (the spectral norm of
//! a nonnegative transfer matrix obtained by giving the `H^s` weight to the
//! largest-mode factor of every monomial and `H^1` weights to the rest) and
//! a seeded sampled lower bound. The upper bound is exact for diagonal
//! quadratic Hamiltonians, which the sampled bound reproduces as well.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;
use crate::spectral::ModeState;

use super::PolyHamiltonian;

/// One multivector slot: a free pair `(psi, conj-psi)` of mode vectors. The
/// two components are independent; conjugate-diagonal pairs arise from
/// [`PairState::conjugate_pair`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairState<T> {
    pub plus: ModeState<T>,
    pub minus: ModeState<T>,
}

impl<T: Real> PairState<T> {
    pub fn new(plus: ModeState<T>, minus: ModeState<T>) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(Error::InvalidParameter(format!(
                "pair components of lengths {} and {}",
                plus.len(),
                minus.len()
            )));
        }
        Ok(Self { plus, minus })
    }

    pub fn zeros(modes: usize) -> Self {
        Self { plus: ModeState::zeros(modes), minus: ModeState::zeros(modes) }
    }

    /// Diagonal pair `(psi, conj psi)`.
    pub fn conjugate_pair(state: &ModeState<T>) -> Self {
        Self { plus: state.clone(), minus: state.conj() }
    }

    pub fn modes(&self) -> usize {
        self.plus.len()
    }

    /// `H^sigma` norm of the pair.
    pub fn norm_h(&self, sigma: T) -> T {
        let a = self.plus.sobolev_norm(sigma);
        let b = self.minus.sobolev_norm(sigma);
        (a * a + b * b).sqrt()
    }

    fn coord(&self, mode: usize, bar: bool) -> Complex<T> {
        if bar {
            self.minus.amp(mode)
        } else {
            self.plus.amp(mode)
        }
    }
}

/// Ordered list of `r >= 1` slots, all with the same mode cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector<T> {
    slots: Vec<PairState<T>>,
}

impl<T: Real> MultiVector<T> {
    pub fn new(slots: Vec<PairState<T>>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidParameter("multivector needs at least one slot".into()));
        }
        let modes = slots[0].modes();
        if slots.iter().any(|s| s.modes() != modes) {
            return Err(Error::CutoffMismatch(modes, slots.iter().map(|s| s.modes()).max().unwrap()));
        }
        Ok(Self { slots })
    }

    /// Conjugate-diagonal multivector from plain states.
    pub fn from_states(states: &[ModeState<T>]) -> Result<Self> {
        Self::new(states.iter().map(PairState::conjugate_pair).collect())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[PairState<T>] {
        &self.slots
    }

    /// The mixed norm: `(1/r) sum_l |phi^(l)|_s prod_{i != l} |phi^(i)|_1`.
    pub fn norm_s1(&self, s: T) -> T {
        let r = self.slots.len();
        let h1: Vec<T> = self.slots.iter().map(|p| p.norm_h(T::one())).collect();
        let hs: Vec<T> = self.slots.iter().map(|p| p.norm_h(s)).collect();
        let mut acc = T::zero();
        for l in 0..r {
            let mut prod = hs[l];
            for (i, h) in h1.iter().enumerate() {
                if i != l {
                    prod = prod * *h;
                }
            }
            acc += prod;
        }
        acc / T::from_count(r)
    }
}

/// Evaluates the symmetrized multilinear form of the modulus vector field of
/// a homogeneous `f` on a multivector with `deg f - 1` slots.
pub fn sym_field_eval<T: Real>(f: &PolyHamiltonian<T>, phi: &MultiVector<T>) -> Result<PairState<T>> {
    let deg = f
        .homogeneous_degree()
        .ok_or_else(|| Error::Degree("symmetrized field needs a homogeneous polynomial".into()))?;
    let r = deg - 1;
    if phi.len() != r {
        return Err(Error::InvalidParameter(format!(
            "multivector has {} slots, field of degree {deg} needs {r}",
            phi.len()
        )));
    }
    let modes = phi.slots()[0].modes();
    if f.mode_cutoff() > modes {
        return Err(Error::CutoffMismatch(f.mode_cutoff(), modes));
    }

    let mut out = PairState::zeros(modes);
    // factors: (mode, is_bar) with multiplicity; perm holds slot indices.
    let mut factors: Vec<(usize, bool)> = Vec::with_capacity(r);
    let mut perm: Vec<usize> = (0..r).collect();
    let inv_rfact = T::one() / T::lit((1..=r).map(|k| k as f64).product::<f64>().max(1.0));

    for (key, coeff) in f.iter() {
        let amp = coeff.norm();
        // plus component: derivative in the bar variables; minus component:
        // derivative in the psi variables.
        for out_bar in [false, true] {
            let (diff_side, keep_side) = if out_bar { (&key.psi, &key.bar) } else { (&key.bar, &key.psi) };
            for (k, e) in diff_side.iter() {
                factors.clear();
                for (m, em) in keep_side.iter() {
                    for _ in 0..em {
                        factors.push((m, !out_bar));
                    }
                }
                let reduced = diff_side.decrement(k).expect("exponent present");
                for (m, em) in reduced.iter() {
                    for _ in 0..em {
                        factors.push((m, out_bar));
                    }
                }
                debug_assert_eq!(factors.len(), r);
                let scale = amp * T::from_count(e as usize) * inv_rfact;
                let mut acc = Complex::new(T::zero(), T::zero());
                permutations(&mut perm, &mut |p: &[usize]| {
                    let mut prod = Complex::new(T::one(), T::zero());
                    for (i, &(m, bar)) in factors.iter().enumerate() {
                        prod = prod * phi.slots()[p[i]].coord(m, bar);
                    }
                    acc += prod;
                });
                let target = if out_bar { &mut out.minus } else { &mut out.plus };
                *target.amp_mut(k) += acc * scale;
            }
        }
    }
    Ok(out)
}

fn permutations(items: &mut [usize], f: &mut impl FnMut(&[usize])) {
    let n = items.len();
    if n <= 1 {
        f(items);
        return;
    }
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Certified upper bound on the tame `s`-norm of a homogeneous `f`.
///
/// Returns `+inf` when the degree exceeds the polynomial's cap, and an error
/// for non-homogeneous input. Scaling is exact: the bound is positively
/// homogeneous in the coefficients.
pub fn tame_norm_upper<T: Real>(f: &PolyHamiltonian<T>, s: T) -> Result<T> {
    if f.is_zero() {
        return Ok(T::zero());
    }
    let deg = f
        .homogeneous_degree()
        .ok_or_else(|| Error::Degree("tame norm needs a homogeneous polynomial".into()))?;
    if deg > f.degree_cap() {
        return Ok(T::infinity());
    }
    let modes = f.mode_cutoff();
    let dim = 2 * modes;
    let idx = |mode: usize, bar: bool| -> usize { (mode - 1) * 2 + usize::from(bar) };

    // Transfer matrix: rows are output components, columns the factor slot
    // that carries the H^s weight (the largest-mode factor of the monomial).
    let mut mat = vec![vec![T::zero(); dim]; dim];
    let mut factors: Vec<(usize, bool)> = Vec::new();
    for (key, coeff) in f.iter() {
        let amp = coeff.norm();
        for out_bar in [false, true] {
            let (diff_side, keep_side) = if out_bar { (&key.psi, &key.bar) } else { (&key.bar, &key.psi) };
            for (k, e) in diff_side.iter() {
                factors.clear();
                for (m, em) in keep_side.iter() {
                    for _ in 0..em {
                        factors.push((m, !out_bar));
                    }
                }
                let reduced = diff_side.decrement(k).expect("exponent present");
                for (m, em) in reduced.iter() {
                    for _ in 0..em {
                        factors.push((m, out_bar));
                    }
                }
                let special = factors
                    .iter()
                    .enumerate()
                    .max_by_key(|&(i, &(m, _))| (m, usize::MAX - i))
                    .map(|(i, _)| i)
                    .expect("at least one factor");
                let (sm, sbar) = factors[special];
                let mut inv_modes = T::one();
                for (i, &(m, _)) in factors.iter().enumerate() {
                    if i != special {
                        inv_modes = inv_modes / T::from_count(m);
                    }
                }
                let weight = T::from_count(k).powf(s) / T::from_count(sm).powf(s);
                mat[idx(k, out_bar)][idx(sm, sbar)] +=
                    amp * T::from_count(e as usize) * weight * inv_modes;
            }
        }
    }
    // (1 + 1e-12) guard keeps the sampled lower bound below the upper bound
    // even when the two coincide exactly up to rounding.
    Ok(spectral_norm_upper(&mat) * (T::one() + T::lit(1e-12)))
}

/// Rigorous upper bound on the spectral norm of a nonnegative matrix via the
/// Collatz-Wielandt bound on `B = M^T M`: for any positive `x`,
/// `rho(B) <= max_i (Bx)_i / x_i`. Power iteration tightens `x`.
fn spectral_norm_upper<T: Real>(mat: &[Vec<T>]) -> T {
    let rows = mat.len();
    if rows == 0 {
        return T::zero();
    }
    let cols = mat[0].len();
    let active: Vec<usize> = (0..cols)
        .filter(|&jj| (0..rows).any(|ii| mat[ii][jj] > T::zero()))
        .collect();
    if active.is_empty() {
        return T::zero();
    }
    let n = active.len();
    // B = M^T M restricted to active columns.
    let mut b = vec![vec![T::zero(); n]; n];
    for (ai, &ci) in active.iter().enumerate() {
        for (aj, &cj) in active.iter().enumerate() {
            let mut acc = T::zero();
            for row in mat.iter() {
                acc += row[ci] * row[cj];
            }
            b[ai][aj] = acc;
        }
    }
    let mut x = vec![T::one(); n];
    let mut best = T::infinity();
    for _ in 0..200 {
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += b[i][j] * x[j];
            }
            y[i] = acc;
        }
        let mut hi = T::zero();
        let mut lo = T::infinity();
        for i in 0..n {
            let ratio = y[i] / x[i];
            hi = hi.max(ratio);
            lo = lo.min(ratio);
        }
        best = best.min(hi);
        if hi - lo <= hi * T::lit(1e-13) {
            break;
        }
        // Normalize and keep strictly positive for Collatz-Wielandt.
        let norm = y.iter().fold(T::zero(), |a, &v| a.max(v));
        if norm <= T::zero() {
            break;
        }
        let floor = norm * T::lit(1e-300);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = (*yi / norm).max(floor);
        }
    }
    best.sqrt()
}

/// Sampled lower bound on the tame `s`-norm: the maximum of
/// `|Xsym_{|f|}(phi)|_s / |phi|_{s,1}` over seeded random multivectors.
/// The sampler mixes dense Gaussian slots with slots concentrated on a few
/// coordinates, which attain the sup for diagonal quadratic Hamiltonians.
pub fn tame_norm_lower<T: Real>(f: &PolyHamiltonian<T>, s: T, samples: usize, seed: u64) -> Result<T> {
    if samples < 1 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    if f.is_zero() {
        return Ok(T::zero());
    }
    let deg = f
        .homogeneous_degree()
        .ok_or_else(|| Error::Degree("tame norm needs a homogeneous polynomial".into()))?;
    let r = deg - 1;
    let modes = f.mode_cutoff();
    let f_mod = f.modulus();
    let mut rng = rng::stream(seed, "tame-norm-lower");
    let mut best = T::zero();
    for sample in 0..samples {
        let mut slots = Vec::with_capacity(r);
        for _ in 0..r {
            slots.push(sample_slot(&mut rng, modes, sample % 4));
        }
        let phi = MultiVector::new(slots)?;
        let denom = phi.norm_s1(s);
        if denom <= T::lit(1e-300) {
            continue;
        }
        let num = sym_field_eval(&f_mod, &phi)?.norm_h(s);
        best = best.max(num / denom);
    }
    Ok(best)
}

fn sample_slot<T: Real>(rng: &mut rand_chacha::ChaCha8Rng, modes: usize, kind: usize) -> PairState<T> {
    let mut gauss = || {
        // Box-Muller from two uniforms.
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        T::lit((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
    };
    match kind {
        // Concentrated on a single coordinate of a single component.
        2 => {
            let mut slot = PairState::zeros(modes);
            let m = rng.gen_range(1..=modes);
            let bar = rng.gen::<bool>();
            let target = if bar { &mut slot.minus } else { &mut slot.plus };
            *target.amp_mut(m) = Complex::new(T::one(), T::zero());
            slot
        }
        // Two active coordinates with random magnitudes.
        3 => {
            let mut slot = PairState::zeros(modes);
            for _ in 0..2 {
                let m = rng.gen_range(1..=modes);
                let bar = rng.gen::<bool>();
                let target = if bar { &mut slot.minus } else { &mut slot.plus };
                *target.amp_mut(m) = Complex::new(T::lit(rng.gen::<f64>()), T::zero());
            }
            slot
        }
        // Dense complex Gaussian.
        _ => {
            let plus = ModeState::new((0..modes).map(|_| Complex::new(gauss(), gauss())).collect());
            let minus = ModeState::new((0..modes).map(|_| Complex::new(gauss(), gauss())).collect());
            PairState { plus, minus }
        }
    }
}

/// Weighted norm of a (possibly non-homogeneous) polynomial at radius `R`:
/// the sum over homogeneous components of `|f_m|_s^{upper} R^{m-1}`.
/// Dominates the vector-field sup of `f` on the ball of radius `R`.
pub fn weighted_norm<T: Real>(f: &PolyHamiltonian<T>, s: T, radius: T) -> Result<T> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let Some((lo, hi)) = f.degree_range() else {
        return Ok(T::zero());
    };
    let mut acc = T::zero();
    for deg in lo..=hi {
        let comp = f.homogeneous_component(deg);
        if comp.is_zero() {
            continue;
        }
        acc += tame_norm_upper(&comp, s)? * radius.powi(deg as i32 - 1);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{poisson_bracket, ExponentPair, Exponents};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn c64(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn diagonal_quadratic(diag: &[f64]) -> PolyHamiltonian<f64> {
        PolyHamiltonian::from_terms(
            diag.len(),
            6,
            diag.iter().enumerate().map(|(i, &d)| {
                (
                    ExponentPair::new(Exponents::single(i + 1, 1), Exponents::single(i + 1, 1)),
                    c64(d, 0.0),
                )
            }),
        )
        .unwrap()
    }

    fn random_homogeneous(modes: usize, degree: usize, terms: usize, seed: u64) -> PolyHamiltonian<f64> {
        let mut rng = crate::rng::stream(seed, "tame-test-poly");
        let mut out = PolyHamiltonian::zero(modes, 8);
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
            out.accumulate(key.conjugate(), coeff.conj());
            out.accumulate(key, coeff);
        }
        out
    }

    #[test]
    fn single_action_monomial_has_unit_norm() {
        let f = diagonal_quadratic(&[1.0]);
        let upper = tame_norm_upper(&f, 1.0).unwrap();
        assert_relative_eq!(upper, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn zero_polynomial_norms() {
        let f = PolyHamiltonian::<f64>::zero(3, 6);
        assert_eq!(tame_norm_upper(&f, 2.0).unwrap(), 0.0);
        assert_eq!(tame_norm_lower(&f, 2.0, 10, 1).unwrap(), 0.0);
        assert_eq!(weighted_norm(&f, 2.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn upper_bound_scales_linearly() {
        let f = random_homogeneous(3, 3, 4, 5);
        let a = 3.5;
        let u1 = tame_norm_upper(&f, 2.0).unwrap();
        let u2 = tame_norm_upper(&f.scaled(c64(a, 0.0)), 2.0).unwrap();
        assert_relative_eq!(u2, a * u1, max_relative = 1e-10);
    }

    #[test]
    fn non_homogeneous_rejected_and_cap_gives_infinity() {
        let mut f = diagonal_quadratic(&[1.0, 2.0]);
        f.accumulate(
            ExponentPair::new(Exponents::single(1, 3), Exponents::single(1, 1)),
            c64(1.0, 0.0),
        );
        assert!(tame_norm_upper(&f, 1.0).is_err());

        let quartic = random_homogeneous(2, 4, 2, 9);
        let mut capped = PolyHamiltonian::zero(2, 3);
        // Rebuild with a cap below the degree: from_terms would reject, so
        // emulate a polynomial whose cap was outgrown by accumulate.
        for (k, c) in quartic.iter() {
            capped.accumulate(k.clone(), *c);
        }
        assert!(tame_norm_upper(&capped, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn lower_bound_below_upper_bound() {
        for seed in 0..10u64 {
            let deg = 2 + (seed % 3) as usize;
            let f = random_homogeneous(3, deg, 3, 40 + seed);
            if f.is_zero() {
                continue;
            }
            let s = 2.0;
            let lower = tame_norm_lower(&f, s, 300, seed).unwrap();
            let upper = tame_norm_upper(&f, s).unwrap();
            assert!(
                lower <= upper,
                "seed {seed}: lower {lower} > upper {upper}"
            );
            assert!(lower > 0.0);
        }
    }

    #[test]
    fn diagonal_quadratic_lower_converges_to_upper() {
        let f = diagonal_quadratic(&[0.9, 0.3, 1.7, 0.5]);
        let s = 2.0;
        let upper = tame_norm_upper(&f, s).unwrap();
        assert_relative_eq!(upper, 1.7, max_relative = 1e-9);
        let lower = tame_norm_lower(&f, s, 10_000, 7).unwrap();
        assert!(lower <= upper);
        assert!(
            lower >= 0.95 * upper,
            "sampled lower {lower} not within 5% of upper {upper}"
        );
    }

    #[test]
    fn weighted_norm_examples() {
        let f = random_homogeneous(3, 3, 3, 51);
        let u = tame_norm_upper(&f, 2.0).unwrap();
        let r = 0.25;
        assert_relative_eq!(weighted_norm(&f, 2.0, r).unwrap(), u * r * r, max_relative = 1e-12);
        // Monotone in R.
        let mut mixed = f.clone();
        for (k, c) in random_homogeneous(3, 4, 3, 52).iter() {
            mixed.accumulate(k.clone(), *c);
        }
        let lo = weighted_norm(&mixed, 2.0, 0.1).unwrap();
        let hi = weighted_norm(&mixed, 2.0, 0.2).unwrap();
        assert!(lo <= hi);
        assert!(weighted_norm(&mixed, 2.0, -1.0).is_err());
    }

    #[test]
    fn weighted_norm_dominates_field_on_ball() {
        // sup_{|psi|_s <= R} |X_f(psi)|_s <= <|f|>_{s,R} on sampled states.
        let f = random_homogeneous(3, 4, 4, 61);
        let s = 2.0;
        let radius = 0.3;
        let bound = weighted_norm(&f, s, radius).unwrap();
        let mut rng = crate::rng::stream(99, "weighted-norm-ball");
        for _ in 0..200 {
            let raw = ModeState::new(
                (0..3).map(|_| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect(),
            );
            let scale = radius * rng.gen::<f64>() / raw.sobolev_norm(s);
            let state = raw.scaled(scale);
            let field = crate::poly::vector_field_eval(&f, &state);
            assert!(field.sobolev_norm(s) <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn sampled_bracket_inequality() {
        // |Xsym_{|{f,g}|}(phi)|_s <= (n+m) |f|_upper |g|_upper |phi|_{s,1}.
        let s = 2.0;
        let mut rng = crate::rng::stream(5, "bracket-tame");
        for seed in 0..20u64 {
            let nf = 1 + (seed % 3) as usize; // f degree nf+1
            let mg = 1 + (seed / 3 % 3) as usize;
            let f = random_homogeneous(4, nf + 1, 3, 700 + seed);
            let g = random_homogeneous(4, mg + 1, 3, 900 + seed);
            let (br, _) = poisson_bracket(&f, &g).unwrap();
            let Some(deg) = br.homogeneous_degree() else { continue };
            let bound = (nf + mg) as f64
                * tame_norm_upper(&f, s).unwrap()
                * tame_norm_upper(&g, s).unwrap();
            let br_mod = br.modulus();
            for _ in 0..20 {
                let slots: Vec<PairState<f64>> =
                    (0..deg - 1).map(|k| sample_slot(&mut rng, 4, k % 4)).collect();
                let phi = MultiVector::new(slots).unwrap();
                let denom = phi.norm_s1(s);
                if denom < 1e-12 {
                    continue;
                }
                let num = sym_field_eval(&br_mod, &phi).unwrap().norm_h(s);
                assert!(
                    num <= bound * denom * (1.0 + 1e-9),
                    "violation: {num} > {} (seed {seed})",
                    bound * denom
                );
            }
        }
    }

    #[test]
    fn sym_field_matches_plain_field_on_diagonal_input() {
        // At equal slots (psi, conj psi) the symmetrized modulus field of a
        // monomial reduces to the modulus field evaluated at the state.
        let f = random_homogeneous(3, 3, 2, 71).modulus();
        let state = ModeState::new(vec![c64(0.3, 0.0), c64(0.2, 0.0), c64(0.45, 0.0)]);
        let phi = MultiVector::from_states(&vec![state.clone(); 2]).unwrap();
        let sym = sym_field_eval(&f, &phi).unwrap();
        let field = crate::poly::vector_field_eval(&f, &state);
        for j in 1..=3 {
            // plain field's psi component is i * d/d(conj psi); the
            // symmetrized evaluation drops the i.
            let expected = field.amp(j) * c64(0.0, -1.0);
            assert!((sym.plus.amp(j) - expected).norm() < 1e-12);
        }
    }
}
