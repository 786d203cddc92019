//! Dirichlet sine-basis spectral representation.
//!
//! Basis: `e_j(x) = sqrt(2/pi) sin(j x)` on `[0, pi]`, `j >= 1`, orthonormal
//! in `L^2`. The convolution potential acts diagonally on this basis with
//! multiplier `v_j`, so the linear operator `c^2 - Laplacian + V*` has
//! eigenvalues `c^2 + lambda_j` with `lambda_j = j^2 + v_j`.

use num_complex::Complex;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Random convolution potential `V(x) = sum_j v_j cos(jx)` described by the
/// decay exponent `s`, the amplitude `M` and normalized coefficients
/// `v'_j in [-1/2, 1/2]`, so that `v_j = M j^{-s} v'_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec<T> {
    decay: T,
    amplitude: T,
    vprime: Vec<T>,
}

impl<T: Real> PotentialSpec<T> {
    /// Validates `s > 0`, `0 < M < 1` (which forces `lambda_j > 0`), at least
    /// one mode and every `v'_j in [-1/2, 1/2]`.
    pub fn new(decay: T, amplitude: T, vprime: Vec<T>) -> Result<Self> {
        if !(decay > T::zero()) || !decay.is_finite() {
            return Err(Error::InvalidPotential(format!("decay exponent s must be positive, got {decay}")));
        }
        if !(amplitude > T::zero()) || !(amplitude < T::one()) {
            return Err(Error::InvalidPotential(format!(
                "amplitude M must lie in (0, 1) so that all lambda_j stay positive, got {amplitude}"
            )));
        }
        if vprime.is_empty() {
            return Err(Error::InvalidPotential("at least one mode required".into()));
        }
        let half = T::lit(0.5);
        for (i, v) in vprime.iter().enumerate() {
            if !v.is_finite() || *v < -half || *v > half {
                return Err(Error::InvalidPotential(format!(
                    "v'_{} = {} outside [-1/2, 1/2]",
                    i + 1,
                    v
                )));
            }
        }
        Ok(Self { decay, amplitude, vprime })
    }

    /// Zero potential with `modes` modes (`v'_j = 0`, `lambda_j = j^2`).
    pub fn zero(decay: T, modes: usize) -> Self {
        Self::new(decay, T::lit(0.5), vec![T::zero(); modes]).expect("valid zero potential")
    }

    pub fn decay(&self) -> T {
        self.decay
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn vprime(&self) -> &[T] {
        &self.vprime
    }

    /// Number of explicitly carried modes.
    pub fn modes(&self) -> usize {
        self.vprime.len()
    }

    /// `v_j = M j^{-s} v'_j`; zero beyond the carried modes (1-based `j`).
    pub fn coefficient(&self, j: usize) -> T {
        debug_assert!(j >= 1);
        match self.vprime.get(j - 1) {
            Some(vp) => self.amplitude * T::from_count(j).powf(-self.decay) * *vp,
            None => T::zero(),
        }
    }

    /// `lambda_j = j^2 + v_j` (1-based `j`).
    pub fn eigenvalue(&self, j: usize) -> T {
        T::from_count(j * j) + self.coefficient(j)
    }

    /// Eigenvalues for `j = 1..=jmax`; entries beyond the carried modes use
    /// `v_j = 0`.
    pub fn eigenvalues_to(&self, jmax: usize) -> Vec<T> {
        (1..=jmax).map(|j| self.eigenvalue(j)).collect()
    }
}

/// Eigenvalues `lambda_j = j^2 + M j^{-s} v'_j` for the carried modes.
pub fn eigenvalues<T: Real>(pot: &PotentialSpec<T>) -> Vec<T> {
    pot.eigenvalues_to(pot.modes())
}

impl<T: Real> Serialize for PotentialSpec<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("PotentialSpec", 3)?;
        st.serialize_field("s", &self.decay.to_f64())?;
        st.serialize_field("M", &self.amplitude.to_f64())?;
        let vp: Vec<f64> = self.vprime.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        st.serialize_field("vprime", &vp)?;
        st.end()
    }
}

impl<'de, T: Real> Deserialize<'de> for PotentialSpec<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            s: f64,
            #[serde(rename = "M")]
            m: f64,
            vprime: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let vp = raw.vprime.into_iter().map(T::lit).collect();
        PotentialSpec::new(T::lit(raw.s), T::lit(raw.m), vp).map_err(de::Error::custom)
    }
}

/// Linear frequencies `omega_j = c sqrt(c^2 + lambda_j)` together with the
/// shifts `omega_j - c^2`, kept separately so that combinations whose `c^2`
/// parts cancel can be evaluated without catastrophic cancellation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencySet<T> {
    c: T,
    c2: T,
    omega: Vec<T>,
    shift: Vec<T>,
    lambda: Vec<T>,
}

impl<T: Real> FrequencySet<T> {
    /// Computes the frequencies through the rationalized form
    /// `omega_j = c^2 + lambda_j / (1 + sqrt(1 + lambda_j / c^2))`,
    /// which agrees algebraically with `c sqrt(c^2 + lambda_j)` but avoids
    /// cancellation at large `c`. Rejects `c < 1` and nonpositive eigenvalues.
    pub fn new(lambda: Vec<T>, c: T) -> Result<Self> {
        if !(c >= T::one()) {
            return Err(Error::InvalidParameter(format!("c must satisfy c >= 1, got {c}")));
        }
        if lambda.is_empty() {
            return Err(Error::InvalidParameter("empty eigenvalue list".into()));
        }
        let c2 = c * c;
        let mut omega = Vec::with_capacity(lambda.len());
        let mut shift = Vec::with_capacity(lambda.len());
        let mut prev = T::neg_infinity();
        for (i, &lam) in lambda.iter().enumerate() {
            if !(lam > T::zero()) {
                return Err(Error::InvalidParameter(format!("lambda_{} = {} not positive", i + 1, lam)));
            }
            let sh = lam / (T::one() + (T::one() + lam / c2).sqrt());
            let om = c2 + sh;
            if om <= prev {
                return Err(Error::InvalidParameter(format!("frequencies not strictly increasing at j = {}", i + 1)));
            }
            prev = om;
            omega.push(om);
            shift.push(sh);
        }
        Ok(Self { c, c2, omega, shift, lambda })
    }

    pub fn from_potential(pot: &PotentialSpec<T>, c: T) -> Result<Self> {
        Self::new(eigenvalues(pot), c)
    }

    /// Frequencies for modes `1..=jmax`, padding the potential with zero
    /// coefficients beyond its carried modes.
    pub fn extended(pot: &PotentialSpec<T>, c: T, jmax: usize) -> Result<Self> {
        Self::new(pot.eigenvalues_to(jmax), c)
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn c_squared(&self) -> T {
        self.c2
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `omega_j` (1-based `j`).
    pub fn omega(&self, j: usize) -> T {
        self.omega[j - 1]
    }

    /// `omega_j - c^2` (1-based `j`), computed without cancellation.
    pub fn shift(&self, j: usize) -> T {
        self.shift[j - 1]
    }

    pub fn omegas(&self) -> &[T] {
        &self.omega
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambda
    }

    /// Stable value of `sum_j w_j omega_j` for an integer-weighted
    /// combination: the `c^2` parts are summed exactly as
    /// `(sum_j w_j) * c^2` and only the shifts enter the floating sum.
    pub fn signed_combination<I>(&self, weights: I) -> T
    where
        I: IntoIterator<Item = (usize, i64)>,
    {
        let mut alpha: i64 = 0;
        let mut acc = T::zero();
        for (j, w) in weights {
            if w == 0 {
                continue;
            }
            alpha += w;
            acc += T::lit(w as f64) * self.shift(j);
        }
        T::lit(alpha as f64) * self.c2 + acc
    }
}

/// Frequencies from raw eigenvalues (operation surface mirroring
/// [`FrequencySet::new`]).
pub fn frequencies<T: Real>(lambda: Vec<T>, c: T) -> Result<FrequencySet<T>> {
    FrequencySet::new(lambda, c)
}

/// Complex sine-mode coefficient vector for `psi`; the conjugate variable is
/// implicit (`z_{-l} = conj(z_l)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState<T> {
    amps: Vec<Complex<T>>,
}

impl<T: Real> ModeState<T> {
    pub fn new(amps: Vec<Complex<T>>) -> Self {
        Self { amps }
    }

    pub fn zeros(modes: usize) -> Self {
        Self { amps: vec![Complex::new(T::zero(), T::zero()); modes] }
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// Amplitude of mode `j` (1-based).
    pub fn amp(&self, j: usize) -> Complex<T> {
        self.amps[j - 1]
    }

    pub fn amp_mut(&mut self, j: usize) -> &mut Complex<T> {
        &mut self.amps[j - 1]
    }

    pub fn amps(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.amps
    }

    pub fn conj(&self) -> Self {
        Self { amps: self.amps.iter().map(|a| a.conj()).collect() }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { amps: self.amps.iter().map(|a| a * factor).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self { amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self { amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a - b).collect() }
    }

    /// Weighted `H^s` norm `(sum_j j^{2s} |psi_j|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: T) -> T {
        let mut acc = T::zero();
        for (i, a) in self.amps.iter().enumerate() {
            let w = T::from_count(i + 1).powf(s + s);
            acc += w * a.norm_sqr();
        }
        acc.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// `H^s` norm of a state (operation surface for [`ModeState::sobolev_norm`]).
pub fn sobolev_norm<T: Real>(state: &ModeState<T>, s: T) -> T {
    state.sobolev_norm(s)
}

impl<T: Real> Serialize for ModeState<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.amps.len()))?;
        for a in &self.amps {
            seq.serialize_element(&[a.re.to_f64().unwrap_or(f64::NAN), a.im.to_f64().unwrap_or(f64::NAN)])?;
        }
        seq.end()
    }
}

impl<'de, T: Real> Deserialize<'de> for ModeState<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: Real> Visitor<'de> for V<T> {
            type Value = ModeState<T>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a sequence of [re, im] pairs")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
                let mut amps = Vec::new();
                while let Some([re, im]) = seq.next_element::<[f64; 2]>()? {
                    amps.push(Complex::new(T::lit(re), T::lit(im)));
                }
                Ok(ModeState::new(amps))
            }
        }
        deserializer.deserialize_seq(V(std::marker::PhantomData))
    }
}

/// Real sine-mode coefficients of `u` and `u_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealState<T> {
    pub u: Vec<T>,
    pub ut: Vec<T>,
}

impl<T: Real> RealState<T> {
    pub fn new(u: Vec<T>, ut: Vec<T>) -> Result<Self> {
        if u.len() != ut.len() {
            return Err(Error::InvalidParameter(format!("u has {} modes but u_t has {}", u.len(), ut.len())));
        }
        Ok(Self { u, ut })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Supported powers for the diagonal operator `(c^2 - Laplacian + V*)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpPower {
    NegHalf,
    NegQuarter,
    Quarter,
    Half,
    One,
}

impl OpPower {
    pub fn exponent(self) -> f64 {
        match self {
            OpPower::NegHalf => -0.5,
            OpPower::NegQuarter => -0.25,
            OpPower::Quarter => 0.25,
            OpPower::Half => 0.5,
            OpPower::One => 1.0,
        }
    }

    /// Only the listed exponents are supported.
    pub fn try_from_exponent(p: f64) -> Result<Self> {
        match p {
            x if x == -0.5 => Ok(OpPower::NegHalf),
            x if x == -0.25 => Ok(OpPower::NegQuarter),
            x if x == 0.25 => Ok(OpPower::Quarter),
            x if x == 0.5 => Ok(OpPower::Half),
            x if x == 1.0 => Ok(OpPower::One),
            other => Err(Error::InvalidParameter(format!("unsupported operator power {other}"))),
        }
    }
}

/// Mode-wise application of `(c^2 + lambda_j)^p`.
pub fn apply_linear_op<T: Real>(
    state: &ModeState<T>,
    pot: &PotentialSpec<T>,
    c: T,
    power: OpPower,
) -> Result<ModeState<T>> {
    if !(c >= T::one()) {
        return Err(Error::InvalidParameter(format!("c must satisfy c >= 1, got {c}")));
    }
    let p = T::lit(power.exponent());
    let c2 = c * c;
    let amps = state
        .amps()
        .iter()
        .enumerate()
        .map(|(i, a)| a * (c2 + pot.eigenvalue(i + 1)).powf(p))
        .collect();
    Ok(ModeState::new(amps))
}

/// Multipliers of the smoothing operator `(c / (c^2 - Laplacian + V*)^{1/2})^{1/2}`,
/// i.e. `(c / sqrt(c^2 + lambda_j))^{1/2} <= 1` for every mode.
pub fn smoothing_multipliers<T: Real>(pot: &PotentialSpec<T>, c: T, jmax: usize) -> Vec<T> {
    let c2 = c * c;
    (1..=jmax).map(|j| (c / (c2 + pot.eigenvalue(j)).sqrt()).sqrt()).collect()
}

/// Applies the smoothing operator mode-wise; a contraction in every `H^s`,
/// uniformly in `c >= 1`.
pub fn smoothing<T: Real>(state: &ModeState<T>, pot: &PotentialSpec<T>, c: T) -> Result<ModeState<T>> {
    if !(c >= T::one()) {
        return Err(Error::InvalidParameter(format!("c must satisfy c >= 1, got {c}")));
    }
    let mults = smoothing_multipliers(pot, c, state.len());
    let amps = state.amps().iter().zip(mults).map(|(a, m)| a * m).collect();
    Ok(ModeState::new(amps))
}

/// Coordinate change `(u, u_t) -> psi` with
/// `psi_j = (1/sqrt 2) [ (sqrt(c^2+lambda_j)/c)^{1/2} u_j - i (c/sqrt(c^2+lambda_j))^{1/2} (u_t)_j ]`.
pub fn to_psi<T: Real>(rs: &RealState<T>, pot: &PotentialSpec<T>, c: T) -> Result<ModeState<T>> {
    if !(c >= T::one()) {
        return Err(Error::InvalidParameter(format!("c must satisfy c >= 1, got {c}")));
    }
    let inv_sqrt2 = T::lit(0.5).sqrt();
    let c2 = c * c;
    let amps = (0..rs.len())
        .map(|i| {
            let root = (c2 + pot.eigenvalue(i + 1)).sqrt();
            let a = (root / c).sqrt();
            let b = (c / root).sqrt();
            Complex::new(a * rs.u[i] * inv_sqrt2, -(b * rs.ut[i] * inv_sqrt2))
        })
        .collect();
    Ok(ModeState::new(amps))
}

/// Exact mode-wise inverse of [`to_psi`]:
/// `u_j = sqrt 2 (c/sqrt(c^2+lambda_j))^{1/2} Re psi_j`,
/// `(u_t)_j = -sqrt 2 (sqrt(c^2+lambda_j)/c)^{1/2} Im psi_j`.
pub fn from_psi<T: Real>(state: &ModeState<T>, pot: &PotentialSpec<T>, c: T) -> Result<RealState<T>> {
    if !(c >= T::one()) {
        return Err(Error::InvalidParameter(format!("c must satisfy c >= 1, got {c}")));
    }
    let sqrt2 = T::lit(2.0).sqrt();
    let c2 = c * c;
    let mut u = Vec::with_capacity(state.len());
    let mut ut = Vec::with_capacity(state.len());
    for (i, a) in state.amps().iter().enumerate() {
        let root = (c2 + pot.eigenvalue(i + 1)).sqrt();
        u.push(sqrt2 * (c / root).sqrt() * a.re);
        ut.push(-(sqrt2 * (root / c).sqrt() * a.im));
    }
    RealState::new(u, ut)
}

/// Quadratic energy `H_0 = sum_j omega_j |psi_j|^2`.
pub fn h0_energy<T: Real>(freqs: &FrequencySet<T>, state: &ModeState<T>) -> T {
    state
        .amps()
        .iter()
        .enumerate()
        .map(|(i, a)| freqs.omega(i + 1) * a.norm_sqr())
        .fold(T::zero(), |acc, x| acc + x)
}
