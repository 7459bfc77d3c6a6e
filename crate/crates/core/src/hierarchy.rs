//! Finite-grid path measures and the consistency hierarchy.
//!
//! A path over an `n`-point grid is a state at each instant. Paths are
//! indexed lexicographically: the first instant is the most significant
//! position and state 1 sorts before state 2, so index 0 is `1 1 … 1`.
//!
//! Triple-time conditionals are always derived from a [`PathMeasure`]; no
//! type stores them independently.

#![allow(clippy::needless_range_loop)]

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lp;
use crate::prob::{
    ProbabilityVector, State, StochasticMatrix, TimeGrid, ToleranceConfig, TransitionFamily,
    DEFAULT_TOL_EXACT,
};

pub const DEFAULT_N_MAX: usize = 12;

/// State of `path` at grid position `k` on an `n`-point grid.
pub fn state_at(path: usize, k: usize, n: usize) -> State {
    State::from_index((path >> (n - 1 - k)) & 1)
}

/// Label string such as `"121"` for a path index.
pub fn path_label(path: usize, n: usize) -> String {
    (0..n)
        .map(|k| char::from(b'0' + state_at(path, k, n).label()))
        .collect()
}

/// Joint distribution over all `2ⁿ` paths on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    grid: TimeGrid,
    weights: Vec<f64>,
}

impl PathMeasure {
    pub fn new(grid: TimeGrid, weights: Vec<f64>) -> Result<Self> {
        Self::with_capacity(grid, weights, DEFAULT_N_MAX, DEFAULT_TOL_EXACT)
    }

    /// Validates against an explicit size cap and tolerance. Weights within
    /// `tol` below zero are clamped to zero.
    pub fn with_capacity(
        grid: TimeGrid,
        weights: Vec<f64>,
        n_max: usize,
        tol: f64,
    ) -> Result<Self> {
        let n = grid.len();
        if n > n_max {
            return Err(Error::Capacity { n, n_max });
        }
        if weights.len() != 1 << n {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} grid points (expected {})",
                weights.len(),
                n,
                1usize << n
            )));
        }
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < -tol)
        {
            return Err(Error::Validation(format!(
                "weight {w} of path {k} is negative"
            )));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::Validation(format!(
                "path weights sum to {total}, not 1"
            )));
        }
        Ok(Self { grid, weights })
    }

    /// Independent draws from the given per-time marginals.
    pub fn product(grid: TimeGrid, marginals: &[ProbabilityVector]) -> Result<Self> {
        let n = grid.len();
        if marginals.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} marginals for {} grid points",
                marginals.len(),
                n
            )));
        }
        if n > DEFAULT_N_MAX {
            return Err(Error::Capacity {
                n,
                n_max: DEFAULT_N_MAX,
            });
        }
        let weights = (0..1usize << n)
            .map(|path| {
                (0..n)
                    .map(|k| marginals[k].get(state_at(path, k, n)))
                    .product()
            })
            .collect();
        Self::new(grid, weights)
    }

    /// All mass on one path.
    pub fn point_mass(grid: TimeGrid, path: &[State]) -> Result<Self> {
        let n = grid.len();
        if path.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "path of length {} for {} grid points",
                path.len(),
                n
            )));
        }
        if n > DEFAULT_N_MAX {
            return Err(Error::Capacity {
                n,
                n_max: DEFAULT_N_MAX,
            });
        }
        let index = path.iter().fold(0usize, |acc, s| (acc << 1) | s.index());
        let mut weights = vec![0.0; 1 << n];
        weights[index] = 1.0;
        Self::new(grid, weights)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// `joint[a][b] = P(state a at index i, state b at index j)`.
    pub fn joint2(&self, i: usize, j: usize) -> Result<[[f64; 2]; 2]> {
        self.check_index(i)?;
        self.check_index(j)?;
        let n = self.len();
        let mut out = [[0.0; 2]; 2];
        for (path, &w) in self.weights.iter().enumerate() {
            out[state_at(path, i, n).index()][state_at(path, j, n).index()] += w;
        }
        Ok(out)
    }

    /// `joint[a][b][c] = P(a at i, b at j, c at k)`.
    pub fn joint3(&self, i: usize, j: usize, k: usize) -> Result<[[[f64; 2]; 2]; 2]> {
        self.check_index(i)?;
        self.check_index(j)?;
        self.check_index(k)?;
        let n = self.len();
        let mut out = [[[0.0; 2]; 2]; 2];
        for (path, &w) in self.weights.iter().enumerate() {
            out[state_at(path, i, n).index()][state_at(path, j, n).index()]
                [state_at(path, k, n).index()] += w;
        }
        Ok(out)
    }
}

impl Serialize for PathMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.len();
        let paths: Vec<String> = (0..self.weights.len()).map(|p| path_label(p, n)).collect();
        let mut st = serializer.serialize_struct("PathMeasure", 3)?;
        st.serialize_field("times", self.grid.times())?;
        st.serialize_field("paths", &paths)?;
        st.serialize_field("weights", &self.weights)?;
        st.end()
    }
}

pub fn marginal(measure: &PathMeasure, time_index: usize) -> Result<ProbabilityVector> {
    measure.check_index(time_index)?;
    let n = measure.len();
    let mut p = [0.0; 2];
    for (path, &w) in measure.weights.iter().enumerate() {
        p[state_at(path, time_index, n).index()] += w;
    }
    ProbabilityVector::with_tolerance(p[0], p[1], 1e-9)
}

/// Conditional law of the state at index `i` given the state at the earlier
/// index `j`, as a column-stochastic matrix.
pub fn pairwise_transition(measure: &PathMeasure, i: usize, j: usize) -> Result<StochasticMatrix> {
    if i <= j {
        return Err(Error::Precondition(format!(
            "pairwise transition needs later index i > earlier index j, got i={i}, j={j}"
        )));
    }
    let joint = measure.joint2(i, j)?;
    let mut columns = [ProbabilityVector::uniform(); 2];
    for cond in State::ALL {
        let c = cond.index();
        let mass = joint[0][c] + joint[1][c];
        if mass <= DEFAULT_TOL_EXACT {
            return Err(Error::UndefinedConditional {
                state: cond.label(),
                index: j,
            });
        }
        columns[c] =
            ProbabilityVector::with_tolerance(joint[0][c] / mass, joint[1][c] / mass, 1e-9)?;
    }
    Ok(StochasticMatrix::from_columns(columns[0], columns[1]))
}

/// `max |p(σ₁,tᵢ | σ₂,tⱼ, σ₃,tₖ) − p(σ₁,tᵢ | σ₂,tⱼ)|` for `i > j > k`.
///
/// Conditioning cells of zero mass carry no constraint and are skipped.
pub fn markov_closure_residual(measure: &PathMeasure, i: usize, j: usize, k: usize) -> Result<f64> {
    if !(i > j && j > k) {
        return Err(Error::Precondition(format!(
            "closure residual needs i > j > k, got ({i}, {j}, {k})"
        )));
    }
    let triple = measure.joint3(i, j, k)?;
    let pair = measure.joint2(i, j)?;
    let mut worst = 0.0f64;
    let mut defined = false;
    for b in 0..2 {
        let mass_j = pair[0][b] + pair[1][b];
        for c in 0..2 {
            let mass_jk = triple[0][b][c] + triple[1][b][c];
            if mass_jk <= DEFAULT_TOL_EXACT {
                continue;
            }
            defined = true;
            for a in 0..2 {
                let full = triple[a][b][c] / mass_jk;
                let reduced = pair[a][b] / mass_j;
                worst = worst.max((full - reduced).abs());
            }
        }
    }
    if !defined {
        return Err(Error::UndefinedConditional { state: 1, index: j });
    }
    Ok(worst)
}

/// Index of the pair `(later, earlier)` in the flattened transition list.
fn pair_index(later: usize, earlier: usize) -> usize {
    later * (later - 1) / 2 + earlier
}

/// One entry of a serialized spec: the transition from grid index `from`
/// to the later grid index `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTransition {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub matrix: StochasticMatrix,
}

/// Marginals at each grid instant and a transition matrix for every ordered
/// pair of instants: the first two levels of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSpec {
    grid: TimeGrid,
    marginals: Vec<ProbabilityVector>,
    transitions: Vec<StochasticMatrix>,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    times: Vec<f64>,
    marginals: Vec<ProbabilityVector>,
    transitions: Vec<PairTransition>,
}

impl PairwiseSpec {
    pub fn new(
        grid: TimeGrid,
        marginals: Vec<ProbabilityVector>,
        transitions: &[PairTransition],
    ) -> Result<Self> {
        let n = grid.len();
        if marginals.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} marginals for {} grid points",
                marginals.len(),
                n
            )));
        }
        let pairs = n * (n - 1) / 2;
        let mut slots: Vec<Option<StochasticMatrix>> = vec![None; pairs];
        for tr in transitions {
            if tr.from >= tr.to || tr.to >= n {
                return Err(Error::ShapeMismatch(format!(
                    "transition {} -> {} is not an ordered pair of grid indices",
                    tr.from, tr.to
                )));
            }
            let slot = &mut slots[pair_index(tr.to, tr.from)];
            if slot.is_some() {
                return Err(Error::ShapeMismatch(format!(
                    "transition {} -> {} given twice",
                    tr.from, tr.to
                )));
            }
            *slot = Some(tr.matrix);
        }
        let transitions = slots
            .into_iter()
            .enumerate()
            .map(|(idx, m)| {
                m.ok_or_else(|| Error::ShapeMismatch(format!("missing transition for pair #{idx}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            grid,
            marginals,
            transitions,
        })
    }

    /// Family matrices on every pair with the supplied marginals.
    pub fn from_family_with_marginals<F: TransitionFamily + ?Sized>(
        family: &F,
        grid: TimeGrid,
        marginals: Vec<ProbabilityVector>,
    ) -> Result<Self> {
        let times = grid.times().to_vec();
        let mut transitions = Vec::new();
        for to in 1..times.len() {
            for from in 0..to {
                transitions.push(PairTransition {
                    from,
                    to,
                    matrix: family.eval(times[from], times[to])?,
                });
            }
        }
        Self::new(grid, marginals, &transitions)
    }

    /// Family matrices on every pair; marginals propagated from `p0` at the
    /// grid's first instant.
    pub fn from_family<F: TransitionFamily + ?Sized>(
        family: &F,
        p0: &ProbabilityVector,
        grid: TimeGrid,
    ) -> Result<Self> {
        let t0 = grid.times()[0];
        let marginals = grid
            .times()
            .iter()
            .map(|&t| Ok(family.eval(t0, t)?.apply(p0)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_family_with_marginals(family, grid, marginals)
    }

    /// The first two hierarchy levels of a measure. A conditioning state of
    /// zero mass gets the later marginal as its column; no joint constraint
    /// depends on it.
    pub fn from_measure(measure: &PathMeasure) -> Result<Self> {
        let n = measure.len();
        let marginals = (0..n)
            .map(|k| marginal(measure, k))
            .collect::<Result<Vec<_>>>()?;
        let mut transitions = Vec::new();
        for to in 1..n {
            for from in 0..to {
                let matrix = match pairwise_transition(measure, to, from) {
                    Ok(m) => m,
                    Err(Error::UndefinedConditional { state, .. }) => {
                        let joint = measure.joint2(to, from)?;
                        let live = 2 - state as usize;
                        let mass = joint[0][live] + joint[1][live];
                        let column = ProbabilityVector::with_tolerance(
                            joint[0][live] / mass,
                            joint[1][live] / mass,
                            1e-9,
                        )?;
                        let fallback = marginals[to];
                        if live == 0 {
                            StochasticMatrix::from_columns(column, fallback)
                        } else {
                            StochasticMatrix::from_columns(fallback, column)
                        }
                    }
                    Err(e) => return Err(e),
                };
                transitions.push(PairTransition { from, to, matrix });
            }
        }
        Self::new(measure.grid.clone(), marginals, &transitions)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("invalid spec JSON: {e}")))?;
        Self::new(
            TimeGrid::new(file.times)?,
            file.marginals,
            &file.transitions,
        )
    }

    pub fn to_json(&self) -> String {
        let file = SpecFile {
            times: self.grid.times().to_vec(),
            marginals: self.marginals.clone(),
            transitions: self.pair_transitions(),
        };
        serde_json::to_string_pretty(&file).expect("spec serializes")
    }

    pub fn pair_transitions(&self) -> Vec<PairTransition> {
        let n = self.grid.len();
        let mut out = Vec::new();
        for to in 1..n {
            for from in 0..to {
                out.push(PairTransition {
                    from,
                    to,
                    matrix: self.transitions[pair_index(to, from)],
                });
            }
        }
        out
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn marginals(&self) -> &[ProbabilityVector] {
        &self.marginals
    }

    pub fn marginal(&self, k: usize) -> Result<ProbabilityVector> {
        self.marginals
            .get(k)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: k,
                len: self.marginals.len(),
            })
    }

    /// Transition from index `earlier` to index `later`.
    pub fn transition(&self, later: usize, earlier: usize) -> Result<StochasticMatrix> {
        let n = self.grid.len();
        if earlier >= later || later >= n {
            return Err(Error::IndexOutOfRange {
                index: later,
                len: n,
            });
        }
        Ok(self.transitions[pair_index(later, earlier)])
    }

    /// `joint[a][b] = T(later, earlier)[a | b] · p_earlier(b)`.
    pub fn joint(&self, later: usize, earlier: usize) -> Result<[[f64; 2]; 2]> {
        let m = self.transition(later, earlier)?;
        let p = self.marginals[earlier];
        let mut out = [[0.0; 2]; 2];
        for a in State::ALL {
            for b in State::ALL {
                out[a.index()][b.index()] = m.entry(a, b) * p.get(b);
            }
        }
        Ok(out)
    }

    /// Largest difference in marginals or pairwise joints. Transition columns
    /// of zero-mass states are not identifiable and do not count.
    pub fn max_deviation(&self, other: &PairwiseSpec) -> Result<f64> {
        let n = self.grid.len();
        if other.grid.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "specs over {} and {} grid points",
                n,
                other.grid.len()
            )));
        }
        let mut worst = 0.0f64;
        for k in 0..n {
            worst = worst.max(self.marginals[k].max_abs_diff(&other.marginals[k]));
        }
        for i in 1..n {
            for j in 0..i {
                let a = self.joint(i, j)?;
                let b = other.joint(i, j)?;
                for r in 0..2 {
                    for c in 0..2 {
                        worst = worst.max((a[r][c] - b[r][c]).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    /// Worst `|Σσ p(σ, t) − 1|`.
    pub normalization: f64,
    /// Worst `|Σσ₁ p(σ₁, t₁ | σ₂, t₂) − 1|`.
    pub transition_normalization: f64,
    /// Worst `|Σσ₂ p(σ₁, t₁ | σ₂, t₂) p(σ₂, t₂) − p(σ₁, t₁)|`.
    pub propagation: f64,
    pub worst_propagation_pair: Option<(usize, usize)>,
    pub threshold: f64,
    pub passed: bool,
}

/// Conditions (i) and (ii) internal to a spec, at `tol_solver`.
pub fn check_consistency(spec: &PairwiseSpec, tol: &ToleranceConfig) -> ConsistencyReport {
    let n = spec.len();
    let normalization = spec
        .marginals
        .iter()
        .map(|p| (p.p1() + p.p2() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut transition_normalization = 0.0f64;
    let mut propagation = 0.0f64;
    let mut worst_pair = None;
    for i in 1..n {
        for j in 0..i {
            let m = spec.transitions[pair_index(i, j)];
            transition_normalization = transition_normalization
                .max((m.m11() + m.m21() - 1.0).abs())
                .max((m.m12() + m.m22() - 1.0).abs());
            let d = m.apply(&spec.marginals[j]).max_abs_diff(&spec.marginals[i]);
            if d > propagation {
                propagation = d;
                worst_pair = Some((j, i));
            }
        }
    }
    let threshold = tol.tol_solver;
    ConsistencyReport {
        normalization,
        transition_normalization,
        propagation,
        worst_propagation_pair: worst_pair,
        threshold,
        passed: normalization <= threshold
            && transition_normalization <= threshold
            && propagation <= threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    /// Measure marginals against spec marginals.
    pub marginals: f64,
    /// Measure pairwise joints against spec transition × spec marginal.
    pub pairwise: f64,
    /// `Σσ₁ p(σ₁|σ₂,σ₃) = 1`.
    pub triple_normalization: f64,
    /// `Σσ₂ p(σ₁|σ₂,σ₃) p(σ₂|σ₃) = p(σ₁|σ₃)` against the spec's `p(σ₁|σ₃)`.
    pub triple_chapman: f64,
    /// `Σσ₃ p(σ₁|σ₂,σ₃) p(σ₂|σ₃) p(σ₃) = p(σ₁|σ₂) p(σ₂)` against the spec.
    pub triple_marginalization: f64,
    pub triples_checked: usize,
    /// Conditioning cells whose mass was at or below `tol_solver`.
    pub cells_skipped: usize,
    pub threshold: f64,
    pub passed: bool,
}

/// Checks that a measure reproduces a spec and that its derived triple-time
/// conditionals satisfy every level-three identity, at `tol_solver`.
pub fn check_hierarchy(
    measure: &PathMeasure,
    spec: &PairwiseSpec,
    tol: &ToleranceConfig,
) -> Result<HierarchyReport> {
    let n = measure.len();
    if spec.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "measure over {} points, spec over {}",
            n,
            spec.len()
        )));
    }
    let threshold = tol.tol_solver;
    let mut marginals = 0.0f64;
    for k in 0..n {
        marginals = marginals.max(marginal(measure, k)?.max_abs_diff(&spec.marginals[k]));
    }
    let mut pairwise = 0.0f64;
    for i in 1..n {
        for j in 0..i {
            let mj = measure.joint2(i, j)?;
            let sj = spec.joint(i, j)?;
            for a in 0..2 {
                for b in 0..2 {
                    pairwise = pairwise.max((mj[a][b] - sj[a][b]).abs());
                }
            }
        }
    }

    let mut norm = 0.0f64;
    let mut chapman = 0.0f64;
    let mut marg = 0.0f64;
    let mut triples = 0usize;
    let mut skipped = 0usize;
    for k in 0..n {
        let mk = marginal(measure, k)?;
        for j in k + 1..n {
            let jk = measure.joint2(j, k)?;
            for i in j + 1..n {
                triples += 1;
                let tri = measure.joint3(i, j, k)?;
                let spec_ik = spec.transition(i, k)?;
                let spec_ij = spec.transition(i, j)?;
                let spec_pj = spec.marginals[j];
                for c in 0..2 {
                    for b in 0..2 {
                        if jk[b][c] > threshold {
                            let total: f64 = (0..2).map(|a| tri[a][b][c] / jk[b][c]).sum();
                            norm = norm.max((total - 1.0).abs());
                        } else {
                            skipped += 1;
                        }
                    }
                    let pc = mk.as_array()[c];
                    if pc > threshold {
                        for a in 0..2 {
                            // p(a|b,c)·p(b|c) = J(a,b,c)/p(c); zero-mass (b,c) cells contribute 0
                            let lhs: f64 = (0..2).map(|b| tri[a][b][c] / pc).sum();
                            let rhs = spec_ik.entry(State::from_index(a), State::from_index(c));
                            chapman = chapman.max((lhs - rhs).abs());
                        }
                    } else {
                        skipped += 1;
                    }
                }
                for a in 0..2 {
                    for b in 0..2 {
                        let lhs: f64 = (0..2).map(|c| tri[a][b][c]).sum();
                        let rhs = spec_ij.entry(State::from_index(a), State::from_index(b))
                            * spec_pj.as_array()[b];
                        marg = marg.max((lhs - rhs).abs());
                    }
                }
            }
        }
    }

    let passed = [marginals, pairwise, norm, chapman, marg]
        .iter()
        .all(|&v| v <= threshold);
    Ok(HierarchyReport {
        marginals,
        pairwise,
        triple_normalization: norm,
        triple_chapman: chapman,
        triple_marginalization: marg,
        triples_checked: triples,
        cells_skipped: skipped,
        threshold,
        passed,
    })
}

/// The Markov chain measure: `p0` at the first instant, then the family's
/// matrices between consecutive instants.
pub fn markov_joint<F: TransitionFamily + ?Sized>(
    family: &F,
    p0: &ProbabilityVector,
    grid: &TimeGrid,
) -> Result<PathMeasure> {
    let times = grid.times();
    let steps = times
        .windows(2)
        .map(|w| family.eval(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    chain_measure(grid, p0, &steps)
}

fn chain_measure(
    grid: &TimeGrid,
    p0: &ProbabilityVector,
    steps: &[StochasticMatrix],
) -> Result<PathMeasure> {
    let n = grid.len();
    if n > DEFAULT_N_MAX {
        return Err(Error::Capacity {
            n,
            n_max: DEFAULT_N_MAX,
        });
    }
    let weights = (0..1usize << n)
        .map(|path| {
            let mut w = p0.get(state_at(path, 0, n));
            for (k, m) in steps.iter().enumerate() {
                w *= m.entry(state_at(path, k + 1, n), state_at(path, k, n));
            }
            w
        })
        .collect();
    PathMeasure::with_capacity(grid.clone(), weights, DEFAULT_N_MAX, 1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityOptions {
    pub n_max: usize,
    pub tol: ToleranceConfig,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            tol: ToleranceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// The chain built from the first marginal and consecutive transitions.
    MarkovChain,
    /// A basic feasible solution from the simplex.
    SimplexVertex,
}

/// One row of the feasibility system with its dual multiplier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multiplier {
    pub constraint: String,
    pub value: f64,
}

/// A nonnegative combination of the constraints whose left side is `≤ 0` on
/// every nonnegative measure while its right side equals `margin > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub inequality: String,
    pub multipliers: Vec<Multiplier>,
    /// `Σ y·b`, strictly positive for a valid certificate.
    pub margin: f64,
    /// `max over paths of (Aᵀy)`, at most zero for a valid certificate.
    pub max_path_coefficient: f64,
}

/// The four three-time correlation facets for ±1-valued variables,
/// `1 + s₀₁E₀₁ + s₁₂E₁₂ + s₀₂E₀₂ ≥ 0` with `s₀₁s₁₂s₀₂ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCheck {
    pub e01: f64,
    pub e12: f64,
    pub e02: f64,
    /// `|E₀₁ + E₁₂|`.
    pub lhs: f64,
    /// `1 + E₀₂`.
    pub rhs: f64,
    /// Smallest facet value; negative means no measure exists.
    pub worst_facet: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub witness: Option<PathMeasure>,
    pub witness_kind: Option<WitnessKind>,
    pub certificate: Option<Certificate>,
    pub correlation: Option<CorrelationCheck>,
    pub phase_one_objective: f64,
    pub pivots: usize,
}

/// `E = P(same) − P(different)` between two grid indices.
fn correlation(joint: &[[f64; 2]; 2]) -> f64 {
    joint[0][0] + joint[1][1] - joint[0][1] - joint[1][0]
}

/// Three-time pair-correlation check on a three-point spec.
pub fn correlation_check(spec: &PairwiseSpec) -> Result<CorrelationCheck> {
    if spec.len() != 3 {
        return Err(Error::Precondition(format!(
            "correlation check needs 3 grid points, got {}",
            spec.len()
        )));
    }
    let e01 = correlation(&spec.joint(1, 0)?);
    let e12 = correlation(&spec.joint(2, 1)?);
    let e02 = correlation(&spec.joint(2, 0)?);
    let facets = [
        1.0 + e01 + e12 + e02,
        1.0 - e01 - e12 + e02,
        1.0 - e01 + e12 - e02,
        1.0 + e01 - e12 - e02,
    ];
    let worst = facets.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CorrelationCheck {
        e01,
        e12,
        e02,
        lhs: (e01 + e12).abs(),
        rhs: 1.0 + e02,
        worst_facet: worst,
        violated: worst < 0.0,
    })
}

/// Rows: total mass, `P(state 1 at k)` for each instant, and
/// `P(state 1 at i, state 1 at j)` for each pair. Together with nonnegativity
/// these fix every marginal and pairwise joint.
/// Constraint matrix, right-hand side and row labels.
type LinearSystem = (Vec<Vec<f64>>, Vec<f64>, Vec<String>);

fn feasibility_system(spec: &PairwiseSpec) -> Result<LinearSystem> {
    let n = spec.len();
    let paths = 1usize << n;
    let times = spec.grid.times();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut labels = Vec::new();

    a.push(vec![1.0; paths]);
    b.push(1.0);
    labels.push("total mass".to_string());

    for k in 0..n {
        a.push(
            (0..paths)
                .map(|p| f64::from(u8::from(state_at(p, k, n) == State::One)))
                .collect(),
        );
        b.push(spec.marginals[k].p1());
        labels.push(format!("P(1 at t={})", times[k]));
    }
    for i in 1..n {
        for j in 0..i {
            a.push(
                (0..paths)
                    .map(|p| {
                        let both =
                            state_at(p, i, n) == State::One && state_at(p, j, n) == State::One;
                        f64::from(u8::from(both))
                    })
                    .collect(),
            );
            b.push(spec.joint(i, j)?[0][0]);
            labels.push(format!("P(1 at t={}, 1 at t={})", times[j], times[i]));
        }
    }
    Ok((a, b, labels))
}

/// Decides whether any path measure on the spec's grid reproduces its
/// marginals and pairwise joints.
pub fn feasibility_solve(spec: &PairwiseSpec) -> Result<FeasibilityResult> {
    feasibility_solve_with(spec, &FeasibilityOptions::default())
}

pub fn feasibility_solve_with(
    spec: &PairwiseSpec,
    opts: &FeasibilityOptions,
) -> Result<FeasibilityResult> {
    let n = spec.len();
    if n > opts.n_max {
        return Err(Error::Capacity {
            n,
            n_max: opts.n_max,
        });
    }
    let consistency = check_consistency(spec, &opts.tol);
    if !consistency.passed {
        return Err(Error::Precondition(format!(
            "spec violates the consistency conditions (propagation residual {:e}, normalization {:e})",
            consistency.propagation,
            consistency.normalization.max(consistency.transition_normalization)
        )));
    }
    let tol = opts.tol.tol_solver;
    let (a, b, labels) = feasibility_system(spec)?;
    let outcome = lp::phase_one(&a, &b, tol)?;
    let correlation = if n == 3 {
        Some(correlation_check(spec)?)
    } else {
        None
    };

    if !outcome.feasible {
        let paths = 1usize << n;
        let max_path_coefficient = (0..paths)
            .map(|p| {
                a.iter()
                    .zip(&outcome.duals)
                    .map(|(row, y)| row[p] * y)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let margin: f64 = b.iter().zip(&outcome.duals).map(|(bi, y)| bi * y).sum();
        let multipliers: Vec<Multiplier> = labels
            .iter()
            .zip(&outcome.duals)
            .filter(|(_, y)| y.abs() > opts.tol.tol_exact)
            .map(|(label, &y)| Multiplier {
                constraint: label.clone(),
                value: y,
            })
            .collect();
        let inequality = format!(
            "sum_paths (A^T y)_path * w_path <= {max_path_coefficient:.3e} for every w >= 0, \
             but the constraints force it to equal {margin:.6}"
        );
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::Infeasible,
            witness: None,
            witness_kind: None,
            certificate: Some(Certificate {
                inequality,
                multipliers,
                margin,
                max_path_coefficient,
            }),
            correlation,
            phase_one_objective: outcome.infeasibility,
            pivots: outcome.pivots,
        });
    }

    let (witness, kind) = match markov_candidate(spec, tol)? {
        Some(m) => (m, WitnessKind::MarkovChain),
        None => {
            let total: f64 = outcome.x.iter().sum();
            let weights = outcome.x.iter().map(|w| w / total).collect();
            let m = PathMeasure::with_capacity(spec.grid.clone(), weights, opts.n_max, tol)?;
            (m, WitnessKind::SimplexVertex)
        }
    };
    Ok(FeasibilityResult {
        status: FeasibilityStatus::Feasible,
        witness: Some(witness),
        witness_kind: Some(kind),
        certificate: None,
        correlation,
        phase_one_objective: outcome.infeasibility,
        pivots: outcome.pivots,
    })
}

/// The Markov chain through the spec's consecutive transitions, if it
/// reproduces every pairwise joint.
fn markov_candidate(spec: &PairwiseSpec, tol: f64) -> Result<Option<PathMeasure>> {
    let n = spec.len();
    let steps = (1..n)
        .map(|k| spec.transition(k, k - 1))
        .collect::<Result<Vec<_>>>()?;
    let measure = chain_measure(&spec.grid, &spec.marginals[0], &steps)?;
    let induced = PairwiseSpec::from_measure(&measure)?;
    if induced.max_deviation(spec)? <= tol {
        Ok(Some(measure))
    } else {
        Ok(None)
    }
}
