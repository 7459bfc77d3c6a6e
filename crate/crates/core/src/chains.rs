//! Propagation, Chapman-Kolmogorov checks, and the symmetric interpolation
//! of a prescribed trajectory.
//!
//! Every residual here is a max-entry absolute difference.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{
    check_ordered, ProbabilityVector, StochasticMatrix, TimeGrid, ToleranceConfig,
    TransitionFamily, DEFAULT_TOL_EXACT,
};
use crate::quantum::{quantum_trajectory, QuantumTrajectoryConfig};

type Evaluator = dyn Fn(f64) -> Result<ProbabilityVector> + Send + Sync;

/// A time-dependent single-time distribution `t ↦ p(t)`.
#[derive(Clone)]
pub struct Trajectory {
    description: String,
    evaluator: Arc<Evaluator>,
}

impl Trajectory {
    pub fn new<F>(description: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> Result<ProbabilityVector> + Send + Sync + 'static,
    {
        Self {
            description: description.into(),
            evaluator: Arc::new(f),
        }
    }

    /// The time-independent trajectory `(a, 1 − a)`.
    pub fn constant(p: ProbabilityVector) -> Self {
        Self::new(format!("constant({}, {})", p.p1(), p.p2()), move |_| Ok(p))
    }

    pub fn at(&self, t: f64) -> Result<ProbabilityVector> {
        (self.evaluator)(t)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

/// `family(s, t) · p`.
pub fn propagate_from<F: TransitionFamily + ?Sized>(
    family: &F,
    p: &ProbabilityVector,
    s: f64,
    t: f64,
) -> Result<ProbabilityVector> {
    Ok(family.eval(s, t)?.apply(p))
}

/// `family(0, t) · p0`.
pub fn propagate<F: TransitionFamily + ?Sized>(
    family: &F,
    p0: &ProbabilityVector,
    t: f64,
) -> Result<ProbabilityVector> {
    propagate_from(family, p0, 0.0, t)
}

fn path_residual_from<F: TransitionFamily + ?Sized>(
    family: &F,
    p0: &ProbabilityVector,
    start: f64,
    s: f64,
    t: f64,
) -> Result<f64> {
    let direct = propagate_from(family, p0, start, t)?;
    let mid = propagate_from(family, p0, start, s)?;
    let via = propagate_from(family, &mid, s, t)?;
    Ok(direct.max_abs_diff(&via))
}

/// Mismatch between going `0 → t` directly and `0 → s → t`.
pub fn path_consistency_residual<F: TransitionFamily + ?Sized>(
    family: &F,
    p0: &ProbabilityVector,
    s: f64,
    t: f64,
) -> Result<f64> {
    if !(0.0 < s && s < t) {
        return Err(Error::Precondition(format!(
            "path residual needs 0 < s < t, got s={s}, t={t}"
        )));
    }
    path_residual_from(family, p0, 0.0, s, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibleKind {
    UniquePoint,
    AllOfSimplex,
    Empty,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibleInitialResult {
    pub kind: AdmissibleKind,
    /// The initial parameter `a` of `p0 = (a, 1 − a)`, for a unique point.
    pub value: Option<f64>,
    /// Admissible band `[lo, hi]` inside `[0, 1]`, when nonempty.
    pub band: Option<[f64; 2]>,
    /// Worst propagation mismatch over the probe pairs at `value`, or at the
    /// band endpoints when there is no unique point.
    pub residual: f64,
    pub constraints: usize,
}

/// Solves for the initial vectors `(a, 1 − a)` that propagate consistently
/// along every pair of grid instants.
///
/// The grid's first instant is the initial time. Each constraint is affine
/// in `a`; the solution set is the intersection of the `tol_solver` bands of
/// all constraints with `[0, 1]`.
pub fn admissible_initial<F: TransitionFamily + ?Sized>(
    family: &F,
    grid: &TimeGrid,
    tol: &ToleranceConfig,
) -> Result<AdmissibleInitialResult> {
    if grid.len() < 3 {
        return Err(Error::Precondition(format!(
            "admissible_initial needs >= 3 grid points, got {}",
            grid.len()
        )));
    }
    let times = grid.times();
    let start = times[0];
    let e1 = ProbabilityVector::from_first(1.0)?;
    let e2 = ProbabilityVector::from_first(0.0)?;

    // (c0, c1) per constraint row: residual component = c0 + c1·a
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (k, &s) in times.iter().enumerate().skip(1) {
        for &t in &times[k + 1..] {
            let direct = family.eval(start, t)?;
            let to_mid = family.eval(start, s)?;
            let from_mid = family.eval(s, t)?;
            let via = from_mid.compose(&to_mid);
            let r1 = direct.apply(&e1).p1() - via.apply(&e1).p1();
            let r2 = direct.apply(&e2).p1() - via.apply(&e2).p1();
            rows.push((r2, r1 - r2));
        }
    }

    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut empty = false;
    for &(c0, c1) in &rows {
        if c1.abs() <= tol.tol_exact {
            if c0.abs() > tol.tol_solver {
                empty = true;
            }
            continue;
        }
        let a = (-c0 - tol.tol_solver) / c1;
        let b = (-c0 + tol.tol_solver) / c1;
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    if lo > hi {
        empty = true;
    }

    let residual_at = |a: f64| -> f64 {
        rows.iter()
            .map(|&(c0, c1)| (c0 + c1 * a).abs())
            .fold(0.0, f64::max)
    };

    if empty {
        let (cn, cd) = rows
            .iter()
            .fold((0.0, 0.0), |(n, d), &(c0, c1)| (n - c0 * c1, d + c1 * c1));
        let best = if cd > 0.0 {
            (cn / cd).clamp(0.0, 1.0)
        } else {
            0.5
        };
        return Ok(AdmissibleInitialResult {
            kind: AdmissibleKind::Empty,
            value: None,
            band: None,
            residual: residual_at(best),
            constraints: rows.len(),
        });
    }

    let width = hi - lo;
    if width >= 1.0 - tol.tol_exact {
        return Ok(AdmissibleInitialResult {
            kind: AdmissibleKind::AllOfSimplex,
            value: None,
            band: Some([lo, hi]),
            residual: residual_at(0.0).max(residual_at(1.0)),
            constraints: rows.len(),
        });
    }
    if width <= tol.tol_solver.sqrt() {
        // least squares over the pinning rows, kept inside the band
        let (num, den) = rows
            .iter()
            .filter(|(_, c1)| c1.abs() > tol.tol_exact)
            .fold((0.0, 0.0), |(n, d), &(c0, c1)| (n - c0 * c1, d + c1 * c1));
        let a = (num / den).clamp(lo, hi);
        return Ok(AdmissibleInitialResult {
            kind: AdmissibleKind::UniquePoint,
            value: Some(a),
            band: Some([lo, hi]),
            residual: residual_at(a),
            constraints: rows.len(),
        });
    }
    Ok(AdmissibleInitialResult {
        kind: AdmissibleKind::Interval,
        value: None,
        band: Some([lo, hi]),
        residual: residual_at(lo).max(residual_at(hi)),
        constraints: rows.len(),
    })
}

/// `‖family(t, u) · family(s, t) − family(s, u)‖` for `s ≤ t ≤ u`.
pub fn ck_residual<F: TransitionFamily + ?Sized>(
    family: &F,
    s: f64,
    t: f64,
    u: f64,
) -> Result<f64> {
    check_ordered(s, t)?;
    check_ordered(t, u)?;
    let composed = family.eval(t, u)?.compose(&family.eval(s, t)?);
    Ok(composed.max_abs_diff(&family.eval(s, u)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CkReport {
    pub passed: bool,
    /// True when the grid has fewer than three points.
    pub vacuous: bool,
    pub worst_residual: f64,
    pub worst_triple: Option<[f64; 3]>,
    pub worst_indices: Option<[usize; 3]>,
    pub triples_checked: usize,
    pub threshold: f64,
}

/// All grid pairs `(i < j)` evaluated once, row-major.
fn pair_table<F: TransitionFamily + ?Sized>(
    family: &F,
    times: &[f64],
) -> Result<Vec<Vec<StochasticMatrix>>> {
    let rows: Vec<Result<Vec<StochasticMatrix>>> = (0..times.len())
        .into_par_iter()
        .map(|i| {
            times[i + 1..]
                .iter()
                .map(|&t| family.eval(times[i], t))
                .collect()
        })
        .collect();
    rows.into_iter().collect()
}

/// Checks the Chapman-Kolmogorov composition law on every ordered triple of
/// grid instants. Passes when the worst residual is within `tol_exact`.
pub fn ck_certify<F: TransitionFamily + ?Sized>(
    family: &F,
    grid: &TimeGrid,
    tol: &ToleranceConfig,
) -> Result<CkReport> {
    let times = grid.times();
    let n = times.len();
    if n < 3 {
        return Ok(CkReport {
            passed: true,
            vacuous: true,
            worst_residual: 0.0,
            worst_triple: None,
            worst_indices: None,
            triples_checked: 0,
            threshold: tol.tol_exact,
        });
    }
    let table = pair_table(family, times)?;
    let pair = |i: usize, j: usize| &table[i][j - i - 1];

    let per_source: Vec<(f64, Option<[usize; 3]>, usize)> = (0..n - 2)
        .into_par_iter()
        .map(|i| {
            let mut worst = -1.0f64;
            let mut at = None;
            let mut count = 0usize;
            for j in i + 1..n - 1 {
                for k in j + 1..n {
                    let r = pair(j, k).compose(pair(i, j)).max_abs_diff(pair(i, k));
                    count += 1;
                    if r > worst {
                        worst = r;
                        at = Some([i, j, k]);
                    }
                }
            }
            (worst, at, count)
        })
        .collect();

    let mut worst = 0.0f64;
    let mut worst_indices = None;
    let mut triples = 0usize;
    for (w, at, count) in per_source {
        triples += count;
        if at.is_some() && (worst_indices.is_none() || w > worst) {
            worst = w;
            worst_indices = at;
        }
    }
    Ok(CkReport {
        passed: worst <= tol.tol_exact,
        vacuous: false,
        worst_residual: worst,
        worst_triple: worst_indices.map(|[i, j, k]| [times[i], times[j], times[k]]),
        worst_indices,
        triples_checked: triples,
        threshold: tol.tol_exact,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreezeReport {
    pub t0: f64,
    pub max_deviation: f64,
    pub points_checked: usize,
    pub passed: bool,
}

/// Propagates `p` from `t0` to every later grid instant and reports the
/// largest departure from `p`.
pub fn propagation_deviation<F: TransitionFamily + ?Sized>(
    family: &F,
    t0: f64,
    p: &ProbabilityVector,
    grid: &TimeGrid,
    tol: &ToleranceConfig,
) -> Result<FreezeReport> {
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for &t in grid.times().iter().filter(|&&t| t >= t0) {
        let q = propagate_from(family, p, t0, t)?;
        worst = worst.max(q.max_abs_diff(p));
        count += 1;
    }
    Ok(FreezeReport {
        t0,
        max_deviation: worst,
        points_checked: count,
        passed: worst <= tol.tol_exact,
    })
}

/// Symmetric transitions leave the uniform measure where it is: checks it.
///
/// Every matrix between `t0` and the later grid instants, and between any
/// two later grid instants, must be symmetric.
pub fn symmetric_freeze_check<F: TransitionFamily + ?Sized>(
    family: &F,
    t0: f64,
    grid: &TimeGrid,
    tol: &ToleranceConfig,
) -> Result<FreezeReport> {
    let mut sources = vec![t0];
    sources.extend(grid.times().iter().copied().filter(|&t| t > t0));
    for (k, &s) in sources.iter().enumerate() {
        for &t in &sources[k + 1..] {
            let m = family.eval(s, t)?;
            if !m.is_symmetric(tol.tol_exact) {
                return Err(Error::Precondition(format!(
                    "family matrix at (s={s}, t={t}) is not symmetric"
                )));
            }
        }
    }
    propagation_deviation(family, t0, &ProbabilityVector::uniform(), grid, tol)
}

/// The unique symmetric stochastic matrix carrying `from` to `to`.
pub fn symmetric_interpolation_between(
    from: &ProbabilityVector,
    to: &ProbabilityVector,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<StochasticMatrix> {
    check_ordered(s, t)?;
    if s == t {
        return Ok(StochasticMatrix::identity());
    }
    let denom = from.difference();
    if denom.abs() <= tol {
        return Err(Error::DegenerateSource { s, t });
    }
    let stay = (to.p1() - from.p2()) / denom;
    if !(-tol..=1.0 + tol).contains(&stay) {
        return Err(Error::Positivity { s, t, value: stay });
    }
    StochasticMatrix::symmetric(stay.clamp(0.0, 1.0))
}

/// `m11 = m22 = (p1(t) − p2(s)) / (p1(s) − p2(s))`, off-diagonals `1 − m11`.
pub fn symmetric_interpolation(traj: &Trajectory, s: f64, t: f64) -> Result<StochasticMatrix> {
    check_ordered(s, t)?;
    if s == t {
        return Ok(StochasticMatrix::identity());
    }
    symmetric_interpolation_between(&traj.at(s)?, &traj.at(t)?, s, t, DEFAULT_TOL_EXACT)
}

/// Transition family `(s, t) ↦ symmetric_interpolation(traj, s, t)`.
#[derive(Debug, Clone)]
pub struct InterpolationFamily {
    traj: Trajectory,
    source_bound: Option<f64>,
    tol: f64,
}

impl InterpolationFamily {
    pub fn new(traj: Trajectory) -> Self {
        Self {
            traj,
            source_bound: None,
            tol: DEFAULT_TOL_EXACT,
        }
    }

    /// The interpolation of the quantum trajectory. Sources are restricted to
    /// `s < π/(4ω)` unless [`extended_domain`](Self::extended_domain) is set.
    pub fn quantum(cfg: &QuantumTrajectoryConfig) -> Self {
        Self {
            source_bound: Some(cfg.uniform_time()),
            ..Self::new(quantum_trajectory(cfg))
        }
    }

    /// Allows every source on which the formula is defined. No validity
    /// claim is made beyond the first uniform instant.
    pub fn extended_domain(mut self) -> Self {
        self.source_bound = None;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn source_bound(&self) -> Option<f64> {
        self.source_bound
    }
}

impl TransitionFamily for InterpolationFamily {
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix> {
        check_ordered(s, t)?;
        if s == t {
            return Ok(StochasticMatrix::identity());
        }
        if let Some(bound) = self.source_bound {
            if s >= bound {
                return Err(Error::OutsideDomain { s, t });
            }
        }
        symmetric_interpolation_between(&self.traj.at(s)?, &self.traj.at(t)?, s, t, self.tol)
    }

    fn is_valid_source(&self, s: f64) -> bool {
        if self.source_bound.is_some_and(|b| s >= b) {
            return false;
        }
        self.traj
            .at(s)
            .map(|p| p.difference().abs() > self.tol)
            .unwrap_or(false)
    }

    fn name(&self) -> String {
        format!("interpolation[{}]", self.traj.description())
    }
}

pub fn interpolation_family(traj: Trajectory) -> InterpolationFamily {
    InterpolationFamily::new(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// A diagonal entry left `[0, 1]` with the imbalance growing in the same direction.
    Positivity,
    /// The source measure is uniform, so no unique symmetric matrix exists.
    DegenerateSource,
    /// The target crossed the uniform measure and overshot the source imbalance.
    SignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalReport {
    pub t_star: f64,
    pub grid_step: f64,
    pub horizon: f64,
    pub failure_witness: Option<(f64, f64)>,
    pub failure_mode: Option<FailureMode>,
}

/// Longest prefix `[0, T]` of the scan grid on which the symmetric
/// interpolation is a valid stochastic matrix for every pair `s < t`.
///
/// The symmetric matrix between `p(s)` and `p(t)` is valid iff
/// `|p1(t) − p2(t)| ≤ |p1(s) − p2(s)|`, so for each new target only the
/// source with the smallest imbalance so far needs checking.
pub fn maximal_markov_interval(
    traj: &Trajectory,
    scan_grid: &TimeGrid,
    tol: &ToleranceConfig,
) -> Result<IntervalReport> {
    let times = scan_grid.times();
    let values: Vec<ProbabilityVector> =
        times.iter().map(|&t| traj.at(t)).collect::<Result<_>>()?;

    let mut tightest = 0usize;
    let mut failure = None;
    for k in 1..times.len() {
        let b = tightest;
        match symmetric_interpolation_between(
            &values[b],
            &values[k],
            times[b],
            times[k],
            tol.tol_exact,
        ) {
            Ok(_) => {}
            Err(Error::DegenerateSource { s, t }) => {
                failure = Some((k, (s, t), FailureMode::DegenerateSource));
                break;
            }
            Err(Error::Positivity { s, t, .. }) => {
                let mode = if values[b].difference() * values[k].difference() < 0.0 {
                    FailureMode::SignFlip
                } else {
                    FailureMode::Positivity
                };
                failure = Some((k, (s, t), mode));
                break;
            }
            Err(e) => return Err(e),
        }
        if values[k].difference().abs() < values[b].difference().abs() {
            tightest = k;
        }
    }

    let (t_star, witness, mode) = match failure {
        Some((k, pair, mode)) => (times[k - 1], Some(pair), Some(mode)),
        None => (times[times.len() - 1], None, None),
    };
    Ok(IntervalReport {
        t_star,
        grid_step: scan_grid.resolution(),
        horizon: scan_grid.horizon(),
        failure_witness: witness,
        failure_mode: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::IdentityFamily;
    use crate::quantum::GillespieFamily;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn relaxing() -> Trajectory {
        Trajectory::new("relax", |t: f64| {
            let p1 = 0.5 * (1.0 + (-t).exp());
            ProbabilityVector::new(p1, 1.0 - p1)
        })
    }

    fn quantum_interp() -> InterpolationFamily {
        InterpolationFamily::quantum(&QuantumTrajectoryConfig::default())
    }

    #[test]
    fn propagate_examples() {
        let g = GillespieFamily::default();
        let u = ProbabilityVector::uniform();
        assert!(propagate(&g, &u, 1.234).unwrap().max_abs_diff(&u) < 1e-15);
        let p = ProbabilityVector::new(0.3, 0.7).unwrap();
        let q = propagate(&g, &p, PI / 8.0).unwrap();
        assert!((q.p1() - 0.358_578_6).abs() < 1e-7);
        assert_eq!(propagate(&g, &p, 0.0).unwrap(), p);
        assert_eq!(propagate(&quantum_interp(), &p, 0.0).unwrap(), p);
    }

    #[test]
    fn path_residual_matches_closed_form() {
        let g = GillespieFamily::default();
        let one = ProbabilityVector::from_first(1.0).unwrap();
        let r = path_consistency_residual(&g, &one, PI / 8.0, PI / 4.0).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        let u = ProbabilityVector::uniform();
        assert!(path_consistency_residual(&g, &u, 0.3, 1.1).unwrap() < 1e-15);
        assert!(path_consistency_residual(&g, &u, 0.0, 1.1).is_err());
        for &(a, s, t) in &[(0.1, 0.2, 0.9), (0.8, 0.5, 0.6), (0.0, 1.0, 2.5)] {
            let p = ProbabilityVector::from_first(a).unwrap();
            let r = path_consistency_residual(&g, &p, s, t).unwrap();
            let closed = ((a - 0.5) * (2.0 * (t - s)).sin() * (2.0 * s).sin()).abs();
            assert!((r - closed).abs() < 1e-14, "{r} vs {closed}");
        }
    }

    #[test]
    fn admissible_initial_gillespie() {
        let grid = TimeGrid::new(vec![0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0]).unwrap();
        let res = admissible_initial(&GillespieFamily::default(), &grid, &tol()).unwrap();
        assert_eq!(res.kind, AdmissibleKind::UniquePoint);
        assert!((res.value.unwrap() - 0.5).abs() < 1e-9);
        assert!(res.residual < 1e-12);
    }

    #[test]
    fn admissible_initial_ck_families() {
        let grid = TimeGrid::linspace(0.0, PI / 4.0, 9).unwrap();
        let res = admissible_initial(&quantum_interp(), &grid, &tol()).unwrap();
        assert_eq!(res.kind, AdmissibleKind::AllOfSimplex);
        let res = admissible_initial(&IdentityFamily, &grid, &tol()).unwrap();
        assert_eq!(res.kind, AdmissibleKind::AllOfSimplex);
        assert_eq!(res.residual, 0.0);
        assert!(admissible_initial(
            &IdentityFamily,
            &TimeGrid::new(vec![0.0, 1.0]).unwrap(),
            &tol()
        )
        .is_err());
    }

    #[test]
    fn ck_residual_examples() {
        let g = GillespieFamily::default();
        let r = ck_residual(&g, 0.0, PI / 8.0, PI / 4.0).unwrap();
        assert!((r - 0.25).abs() < 1e-12);
        assert_eq!(ck_residual(&g, 0.3, 0.3, 0.9).unwrap(), 0.0);
        let f = quantum_interp();
        assert!(ck_residual(&f, 0.1, 0.4, PI / 4.0).unwrap() < 1e-14);
        assert!(ck_residual(&g, 0.5, 0.3, 0.9).is_err());
    }

    #[test]
    fn ck_certify_examples() {
        let g = GillespieFamily::default();
        let grid = TimeGrid::new(vec![0.0, PI / 8.0, PI / 4.0]).unwrap();
        let rep = ck_certify(&g, &grid, &tol()).unwrap();
        assert!(!rep.passed);
        assert!((rep.worst_residual - 0.25).abs() < 1e-12);
        assert_eq!(rep.worst_indices, Some([0, 1, 2]));

        let two = TimeGrid::new(vec![0.0, 0.5]).unwrap();
        let rep = ck_certify(&g, &two, &tol()).unwrap();
        assert!(rep.passed && rep.vacuous && rep.triples_checked == 0);
    }

    #[test]
    fn ck_certify_reports_positivity_beyond_quarter_period() {
        let f = quantum_interp();
        let grid = TimeGrid::linspace(0.0, PI / 2.0, 20).unwrap();
        let err = ck_certify(&f, &grid, &tol()).unwrap_err();
        assert!(matches!(err, Error::Positivity { .. }), "{err:?}");
        let (s, t) = err.witness().unwrap();
        assert!(s < t && t > PI / 4.0);
    }

    #[test]
    fn freeze_examples() {
        let grid = TimeGrid::linspace(0.0, 3.0, 31).unwrap();
        let rep = symmetric_freeze_check(&GillespieFamily::default(), 0.0, &grid, &tol()).unwrap();
        assert!(rep.passed && rep.max_deviation < 1e-15);
        let inner = TimeGrid::linspace(0.0, PI / 4.0, 20).unwrap();
        let rep = symmetric_freeze_check(&quantum_interp(), 0.0, &inner, &tol()).unwrap();
        assert!(rep.passed);
        let p = ProbabilityVector::new(0.9, 0.1).unwrap();
        let rep = propagation_deviation(&IdentityFamily, 0.0, &p, &grid, &tol()).unwrap();
        assert_eq!(rep.max_deviation, 0.0);

        let skew = crate::prob::FnFamily::new("skew", |s: f64, t: f64| {
            if s == t {
                Ok(StochasticMatrix::identity())
            } else {
                StochasticMatrix::new(0.9, 0.2, 0.1, 0.8)
            }
        });
        let err = symmetric_freeze_check(&skew, 0.0, &grid, &tol()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn interpolation_examples() {
        let q = quantum_trajectory(&QuantumTrajectoryConfig::default());
        let g = GillespieFamily::default();
        for &t in &[0.1, 0.5, PI / 4.0] {
            let m = symmetric_interpolation(&q, 0.0, t).unwrap();
            assert!(m.max_abs_diff(&g.eval(0.0, t).unwrap()) < 1e-15);
        }
        let m = symmetric_interpolation(&q, PI / 8.0, PI / 4.0).unwrap();
        assert!(m.max_abs_diff(&StochasticMatrix::uniform()) < 1e-15);
        assert_eq!(
            symmetric_interpolation(&q, 0.4, 0.4).unwrap(),
            StochasticMatrix::identity()
        );
        assert_eq!(
            symmetric_interpolation(&q, PI / 4.0, PI / 4.0).unwrap(),
            StochasticMatrix::identity()
        );
    }

    #[test]
    fn interpolation_errors() {
        let q = quantum_trajectory(&QuantumTrajectoryConfig::default());
        let err = symmetric_interpolation(&q, PI / 4.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSource { .. }));
        let err = symmetric_interpolation(&q, 0.7, 1.0).unwrap_err();
        match err {
            Error::Positivity { value, .. } => assert!(value < 0.0),
            other => panic!("unexpected {other:?}"),
        }
        let f = quantum_interp();
        assert!(matches!(f.eval(0.9, 1.0), Err(Error::OutsideDomain { .. })));
        assert!(!f.is_valid_source(PI / 4.0));
        assert!(f.is_valid_source(0.3));
        // extended domain: the formula again yields stochastic matrices in the
        // third quarter period, where the imbalance shrinks back toward uniform
        let ext = quantum_interp().extended_domain();
        assert!(ext.eval(1.7, 2.0).is_ok());
        assert!(ext.eval(0.9, 1.0).is_err());
    }

    #[test]
    fn interpolation_of_constant_and_relaxing() {
        let c = interpolation_family(Trajectory::constant(
            ProbabilityVector::new(0.8, 0.2).unwrap(),
        ));
        assert_eq!(c.eval(0.1, 5.0).unwrap(), StochasticMatrix::identity());
        let r = interpolation_family(relaxing());
        let grid = TimeGrid::linspace(0.0, 5.0, 200).unwrap();
        for (k, &s) in grid.times().iter().enumerate() {
            for &t in &grid.times()[k..] {
                let m = r.eval(s, t).unwrap();
                let expected = 0.5 * (1.0 + (-(t - s)).exp());
                assert!((m.m11() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maximal_interval_examples() {
        let q = quantum_trajectory(&QuantumTrajectoryConfig::default());
        let grid = TimeGrid::linspace(0.0, PI / 2.0, 1001).unwrap();
        let rep = maximal_markov_interval(&q, &grid, &tol()).unwrap();
        let h = rep.grid_step;
        assert!((rep.t_star - PI / 4.0).abs() <= 2.0 * h);
        let (s, t) = rep.failure_witness.unwrap();
        assert!(s < t && t > rep.t_star - h);
        assert!(rep.failure_mode.is_some());

        let c = Trajectory::constant(ProbabilityVector::new(0.8, 0.2).unwrap());
        let rep = maximal_markov_interval(&c, &grid, &tol()).unwrap();
        assert_eq!(rep.t_star, grid.horizon());
        assert!(rep.failure_witness.is_none());

        let long = TimeGrid::linspace(0.0, 20.0, 2000).unwrap();
        let rep = maximal_markov_interval(&relaxing(), &long, &tol()).unwrap();
        assert_eq!(rep.t_star, 20.0);
    }

    #[test]
    fn maximal_interval_failure_modes() {
        // grid straddling π/4 without hitting it: overshoot through uniform
        let q = quantum_trajectory(&QuantumTrajectoryConfig::default());
        let grid = TimeGrid::new(vec![0.0, 0.7, 0.78, 0.80, 0.9]).unwrap();
        let rep = maximal_markov_interval(&q, &grid, &tol()).unwrap();
        assert_eq!(rep.failure_mode, Some(FailureMode::SignFlip));
        assert_eq!(rep.t_star, 0.78);
        assert_eq!(rep.failure_witness, Some((0.78, 0.80)));

        // π/4 on the grid: the uniform instant becomes a degenerate source
        let grid = TimeGrid::new(vec![0.0, 0.5, PI / 4.0, 1.0]).unwrap();
        let rep = maximal_markov_interval(&q, &grid, &tol()).unwrap();
        assert_eq!(rep.failure_mode, Some(FailureMode::DegenerateSource));
        assert_eq!(rep.t_star, PI / 4.0);

        // imbalance grows without crossing uniform
        let grow = Trajectory::new("grow", |t: f64| {
            let p1 = (0.5 + t).min(1.0);
            ProbabilityVector::new(p1, 1.0 - p1)
        });
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.2]).unwrap();
        let rep = maximal_markov_interval(&grow, &grid, &tol()).unwrap();
        assert_eq!(rep.failure_mode, Some(FailureMode::DegenerateSource));
        let grid = TimeGrid::new(vec![0.1, 0.2]).unwrap();
        let rep = maximal_markov_interval(&grow, &grid, &tol()).unwrap();
        assert_eq!(rep.failure_mode, Some(FailureMode::Positivity));
        assert_eq!(rep.t_star, 0.1);
    }

    #[test]
    fn reconciliation_at_measurement_time() {
        let g = GillespieFamily::default();
        let f = quantum_interp();
        for k in 1..=50 {
            let t = PI / 4.0 * k as f64 / 50.0;
            assert!(
                g.eval(0.0, t)
                    .unwrap()
                    .max_abs_diff(&f.eval(0.0, t).unwrap())
                    < 1e-12
            );
        }
    }

    #[test]
    fn identity_limit() {
        let f = quantum_interp();
        for &s in &[0.0, PI / 16.0, PI / 8.0] {
            let eps = 1e-6;
            let d = f
                .eval(s, s + eps)
                .unwrap()
                .max_abs_diff(&StochasticMatrix::identity());
            assert!(d <= 3.0 * eps, "s={s}: {d}");
            assert!(d <= 2.0 * eps * (2.0 * s).tan() + 1e-11);
        }
    }

    proptest! {
        #[test]
        fn gillespie_residual_vanishes_only_at_uniform(a in 0.0f64..1.0, s in 0.05f64..0.7, dt in 0.05f64..0.7) {
            let g = GillespieFamily::default();
            let p = ProbabilityVector::from_first(a).unwrap();
            let r = path_consistency_residual(&g, &p, s, s + dt).unwrap();
            let closed = ((a - 0.5) * (2.0 * dt).sin() * (2.0 * s).sin()).abs();
            prop_assert!((r - closed).abs() < 1e-13);
        }

        #[test]
        fn interpolation_reproduces_target(x in 0.0f64..1.0, y in 0.0f64..1.0, w in 0.0f64..1.0) {
            // monotone imbalance d(s) ≥ d(t): the matrix is valid and carries p(s) to p(t)
            let ds = 0.05 + 0.95 * x;
            let dt = ds * (2.0 * y - 1.0);
            let from = ProbabilityVector::new((1.0 + ds) / 2.0, (1.0 - ds) / 2.0).unwrap();
            let to = ProbabilityVector::new((1.0 + dt) / 2.0, (1.0 - dt) / 2.0).unwrap();
            let m = symmetric_interpolation_between(&from, &to, w, w + 1.0, DEFAULT_TOL_EXACT).unwrap();
            prop_assert!(m.apply(&from).max_abs_diff(&to) <= DEFAULT_TOL_EXACT);
            prop_assert!(m.is_symmetric(0.0));
        }

        #[test]
        fn monotone_trajectories_pass_ck(rate in 0.01f64..3.0, d0 in 0.1f64..1.0, sign in prop::bool::ANY) {
            let sgn = if sign { 1.0 } else { -1.0 };
            let traj = Trajectory::new("decay", move |t: f64| {
                let d = sgn * d0 * (-rate * t).exp();
                ProbabilityVector::new((1.0 + d) / 2.0, (1.0 - d) / 2.0)
            });
            let grid = TimeGrid::linspace(0.0, 2.0, 12).unwrap();
            let rep = ck_certify(&interpolation_family(traj), &grid, &ToleranceConfig::default()).unwrap();
            prop_assert!(rep.passed, "worst {}", rep.worst_residual);
        }
    }
}
