//! Fixed-size probability algebra on the two-point state space.
//!
//! States are labeled 1 and 2 in every report and stored at indices 0 and 1.
//! Transition matrices are column-stochastic: the column is the earlier
//! state, the row the later one, so `m.apply(p_earlier) == p_later`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL_EXACT: f64 = 1e-12;
pub const DEFAULT_TOL_SOLVER: f64 = 1e-9;
pub const DEFAULT_TOL_STAT: f64 = 4.0;

/// One of the two states. Serialized by its label (1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum State {
    One,
    Two,
}

impl State {
    pub const ALL: [State; 2] = [State::One, State::Two];

    pub fn index(self) -> usize {
        match self {
            State::One => 0,
            State::Two => 1,
        }
    }

    pub fn from_index(i: usize) -> State {
        if i == 0 {
            State::One
        } else {
            State::Two
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    /// ±1 encoding used for correlations: state 1 ↦ +1, state 2 ↦ −1.
    pub fn sign(self) -> f64 {
        match self {
            State::One => 1.0,
            State::Two => -1.0,
        }
    }
}

impl TryFrom<u8> for State {
    type Error = Error;
    fn try_from(v: u8) -> Result<State> {
        match v {
            1 => Ok(State::One),
            2 => Ok(State::Two),
            _ => Err(Error::Validation(format!(
                "state label must be 1 or 2, got {v}"
            ))),
        }
    }
}

impl From<State> for u8 {
    fn from(s: State) -> u8 {
        s.label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Absolute tolerance for algebraic identities.
    pub tol_exact: f64,
    /// Tolerance for linear solves.
    pub tol_solver: f64,
    /// z-score bound for statistical tests.
    pub tol_stat: f64,
}

impl ToleranceConfig {
    pub fn new(tol_exact: f64, tol_solver: f64, tol_stat: f64) -> Result<Self> {
        let all_positive = [tol_exact, tol_solver, tol_stat]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(Error::Validation(
                "tolerances must be finite and strictly positive".into(),
            ));
        }
        if tol_exact > tol_solver {
            return Err(Error::Validation(format!(
                "tol_exact ({tol_exact}) must not exceed tol_solver ({tol_solver})"
            )));
        }
        Ok(Self {
            tol_exact,
            tol_solver,
            tol_stat,
        })
    }
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            tol_exact: DEFAULT_TOL_EXACT,
            tol_solver: DEFAULT_TOL_SOLVER,
            tol_stat: DEFAULT_TOL_STAT,
        }
    }
}

fn check_probability(name: &str, v: f64, tol: f64) -> Result<f64> {
    if !v.is_finite() || v < -tol || v > 1.0 + tol {
        return Err(Error::Validation(format!(
            "{name} = {v} is not a probability"
        )));
    }
    Ok(v.clamp(0.0, 1.0))
}

/// A point of the 1-simplex: `(p1, p2)` with `p1 + p2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector")]
pub struct ProbabilityVector {
    p1: f64,
    p2: f64,
}

#[derive(Deserialize)]
struct RawVector {
    p1: f64,
    p2: f64,
}

impl TryFrom<RawVector> for ProbabilityVector {
    type Error = Error;
    fn try_from(raw: RawVector) -> Result<Self> {
        ProbabilityVector::new(raw.p1, raw.p2)
    }
}

impl ProbabilityVector {
    /// Validates with the default exact tolerance. Entries within tolerance
    /// of the boundary are clamped into `[0, 1]`.
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        Self::with_tolerance(p1, p2, DEFAULT_TOL_EXACT)
    }

    pub fn with_tolerance(p1: f64, p2: f64, tol: f64) -> Result<Self> {
        let p1 = check_probability("p1", p1, tol)?;
        let p2 = check_probability("p2", p2, tol)?;
        if (p1 + p2 - 1.0).abs() > tol {
            return Err(Error::Validation(format!(
                "probability vector ({p1}, {p2}) does not sum to 1"
            )));
        }
        Ok(Self { p1, p2 })
    }

    /// The vector `(a, 1 − a)`.
    pub fn from_first(a: f64) -> Result<Self> {
        let a = check_probability("a", a, DEFAULT_TOL_EXACT)?;
        Ok(Self { p1: a, p2: 1.0 - a })
    }

    pub fn uniform() -> Self {
        Self { p1: 0.5, p2: 0.5 }
    }

    pub fn point(state: State) -> Self {
        match state {
            State::One => Self { p1: 1.0, p2: 0.0 },
            State::Two => Self { p1: 0.0, p2: 1.0 },
        }
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn get(&self, state: State) -> f64 {
        match state {
            State::One => self.p1,
            State::Two => self.p2,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.p1, self.p2]
    }

    /// `p1 − p2`; zero exactly at the uniform vector.
    pub fn difference(&self) -> f64 {
        self.p1 - self.p2
    }

    pub fn max_abs_diff(&self, other: &ProbabilityVector) -> f64 {
        (self.p1 - other.p1).abs().max((self.p2 - other.p2).abs())
    }
}

/// A 2×2 column-stochastic matrix, `m[i][j] = P(i at later | j at earlier)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct StochasticMatrix {
    m11: f64,
    m12: f64,
    m21: f64,
    m22: f64,
}

#[derive(Deserialize)]
struct RawMatrix {
    m11: f64,
    m12: f64,
    m21: f64,
    m22: f64,
}

impl TryFrom<RawMatrix> for StochasticMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        StochasticMatrix::new(raw.m11, raw.m12, raw.m21, raw.m22)
    }
}

impl StochasticMatrix {
    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Result<Self> {
        Self::with_tolerance(m11, m12, m21, m22, DEFAULT_TOL_EXACT)
    }

    pub fn with_tolerance(m11: f64, m12: f64, m21: f64, m22: f64, tol: f64) -> Result<Self> {
        let m11 = check_probability("m11", m11, tol)?;
        let m12 = check_probability("m12", m12, tol)?;
        let m21 = check_probability("m21", m21, tol)?;
        let m22 = check_probability("m22", m22, tol)?;
        if (m11 + m21 - 1.0).abs() > tol || (m12 + m22 - 1.0).abs() > tol {
            return Err(Error::Validation(format!(
                "matrix [[{m11}, {m12}], [{m21}, {m22}]] is not column-stochastic"
            )));
        }
        Ok(Self { m11, m12, m21, m22 })
    }

    /// Builds a matrix from its two columns, the conditional distributions
    /// given earlier state 1 and earlier state 2.
    pub fn from_columns(given_one: ProbabilityVector, given_two: ProbabilityVector) -> Self {
        Self {
            m11: given_one.p1,
            m21: given_one.p2,
            m12: given_two.p1,
            m22: given_two.p2,
        }
    }

    /// The symmetric matrix with diagonal `stay` and off-diagonal `1 − stay`.
    pub fn symmetric(stay: f64) -> Result<Self> {
        let stay = check_probability("diagonal", stay, DEFAULT_TOL_EXACT)?;
        Ok(Self {
            m11: stay,
            m12: 1.0 - stay,
            m21: 1.0 - stay,
            m22: stay,
        })
    }

    pub fn identity() -> Self {
        Self {
            m11: 1.0,
            m12: 0.0,
            m21: 0.0,
            m22: 1.0,
        }
    }

    /// Every column equal to `(½, ½)`.
    pub fn uniform() -> Self {
        Self {
            m11: 0.5,
            m12: 0.5,
            m21: 0.5,
            m22: 0.5,
        }
    }

    pub fn m11(&self) -> f64 {
        self.m11
    }
    pub fn m12(&self) -> f64 {
        self.m12
    }
    pub fn m21(&self) -> f64 {
        self.m21
    }
    pub fn m22(&self) -> f64 {
        self.m22
    }

    /// `P(later | earlier)`.
    pub fn entry(&self, later: State, earlier: State) -> f64 {
        match (later, earlier) {
            (State::One, State::One) => self.m11,
            (State::One, State::Two) => self.m12,
            (State::Two, State::One) => self.m21,
            (State::Two, State::Two) => self.m22,
        }
    }

    pub fn column(&self, earlier: State) -> ProbabilityVector {
        match earlier {
            State::One => ProbabilityVector {
                p1: self.m11,
                p2: self.m21,
            },
            State::Two => ProbabilityVector {
                p1: self.m12,
                p2: self.m22,
            },
        }
    }

    pub fn as_rows(&self) -> [[f64; 2]; 2] {
        [[self.m11, self.m12], [self.m21, self.m22]]
    }

    pub fn apply(&self, p: &ProbabilityVector) -> ProbabilityVector {
        ProbabilityVector {
            p1: self.m11 * p.p1 + self.m12 * p.p2,
            p2: self.m21 * p.p1 + self.m22 * p.p2,
        }
    }

    /// `self · earlier`: first `earlier`, then `self`.
    pub fn compose(&self, earlier: &StochasticMatrix) -> StochasticMatrix {
        let a = self;
        let b = earlier;
        StochasticMatrix {
            m11: a.m11 * b.m11 + a.m12 * b.m21,
            m12: a.m11 * b.m12 + a.m12 * b.m22,
            m21: a.m21 * b.m11 + a.m22 * b.m21,
            m22: a.m21 * b.m12 + a.m22 * b.m22,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.m12 - self.m21).abs() <= tol
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        (self.m11 + self.m12 - 1.0).abs() <= tol && (self.m21 + self.m22 - 1.0).abs() <= tol
    }

    /// Second eigenvalue `m11 + m22 − 1`, the factor by which `p1 − p2`
    /// shrinks when a doubly stochastic matrix is applied. Equals
    /// `m11 − m21` for symmetric matrices.
    pub fn contraction(&self) -> f64 {
        self.m11 + self.m22 - 1.0
    }

    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> f64 {
        let a = self.as_rows();
        let b = other.as_rows();
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((a[i][j] - b[i][j]).abs());
            }
        }
        worst
    }
}

/// `m · p`, the later-time vector reached from `p`.
pub fn matrix_apply(m: &StochasticMatrix, p: &ProbabilityVector) -> ProbabilityVector {
    m.apply(p)
}

/// `later · earlier`.
pub fn matrix_compose(later: &StochasticMatrix, earlier: &StochasticMatrix) -> StochasticMatrix {
    later.compose(earlier)
}

/// A strictly increasing set of instants inside `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    horizon: f64,
}

impl TimeGrid {
    /// A grid whose horizon is its last instant.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::with_horizon(times, horizon)
    }

    pub fn with_horizon(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Validation(
                "time grid needs at least one point".into(),
            ));
        }
        if !horizon.is_finite() {
            return Err(Error::Validation("grid horizon must be finite".into()));
        }
        for (k, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t > horizon {
                return Err(Error::Validation(format!(
                    "grid time {t} at index {k} outside [0, {horizon}]"
                )));
            }
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "grid times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { times, horizon })
    }

    /// `n` equally spaced points from `start` to `end` inclusive.
    pub fn linspace(start: f64, end: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("linspace needs n >= 1".into()));
        }
        if n == 1 {
            return Self::with_horizon(vec![start], end.max(start));
        }
        let step = (end - start) / (n - 1) as f64;
        let mut times: Vec<f64> = (0..n).map(|k| start + step * k as f64).collect();
        times[n - 1] = end;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn time(&self, index: usize) -> Result<f64> {
        self.times
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.times.len(),
            })
    }

    /// Largest spacing between consecutive instants; zero for one point.
    pub fn resolution(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// A two-parameter family of transition matrices `p(t, s)`, `s ≤ t`.
///
/// `eval(s, t)` must return the identity when `s == t` on valid sources and
/// report invalid entries as [`Error::Positivity`] rather than clamping them.
pub trait TransitionFamily: Send + Sync {
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix>;

    /// Whether `s` may be used as a source time.
    fn is_valid_source(&self, _s: f64) -> bool {
        true
    }

    fn name(&self) -> String;
}

impl<F: TransitionFamily + ?Sized> TransitionFamily for &F {
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix> {
        (**self).eval(s, t)
    }
    fn is_valid_source(&self, s: f64) -> bool {
        (**self).is_valid_source(s)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<F: TransitionFamily + ?Sized> TransitionFamily for Box<F> {
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix> {
        (**self).eval(s, t)
    }
    fn is_valid_source(&self, s: f64) -> bool {
        (**self).is_valid_source(s)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

pub(crate) fn check_ordered(s: f64, t: f64) -> Result<()> {
    if !(s.is_finite() && t.is_finite()) || s > t {
        return Err(Error::Validation(format!(
            "transition requested for s={s} > t={t}"
        )));
    }
    Ok(())
}

/// Nothing ever moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFamily;

impl TransitionFamily for IdentityFamily {
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix> {
        check_ordered(s, t)?;
        Ok(StochasticMatrix::identity())
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// A family given by a closure over `(s, t)`.
pub struct FnFamily<F> {
    name: String,
    f: F,
}

impl<F> FnFamily<F>
where
    F: Fn(f64, f64) -> Result<StochasticMatrix> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> TransitionFamily for FnFamily<F>
where
    F: Fn(f64, f64) -> Result<StochasticMatrix> + Send + Sync,
{
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix> {
        check_ordered(s, t)?;
        (self.f)(s, t)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}
