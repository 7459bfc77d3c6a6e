//! Ensembles of sample paths drawn from a transition family used as a
//! Markov chain over consecutive grid steps.
//!
//! Path `k` draws from its own ChaCha stream `k` under the ensemble seed, so
//! results do not depend on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::prob::{ProbabilityVector, State, StochasticMatrix, TimeGrid, TransitionFamily};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplePath {
    states: Vec<State>,
}

impl SamplePath {
    pub fn new(states: Vec<State>) -> Self {
        Self { states }
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<State> {
        self.states.get(k).copied()
    }
}

impl Serialize for SamplePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let labels: Vec<u8> = self.states.iter().map(|s| s.label()).collect();
        labels.serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub grid: TimeGrid,
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, seed: u64, grid: TimeGrid) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::Validation("ensemble needs at least one path".into()));
        }
        Ok(Self {
            n_paths,
            seed,
            grid,
        })
    }
}

fn draw(rng: &mut ChaCha8Rng, p: &ProbabilityVector) -> State {
    if rng.random::<f64>() < p.p1() {
        State::One
    } else {
        State::Two
    }
}

pub fn sample_paths<F: TransitionFamily + ?Sized>(
    family: &F,
    p0: &ProbabilityVector,
    cfg: &EnsembleConfig,
) -> Result<Vec<SamplePath>> {
    if cfg.n_paths == 0 {
        return Err(Error::Validation("ensemble needs at least one path".into()));
    }
    let steps = cfg
        .grid
        .times()
        .windows(2)
        .map(|w| family.eval(w[0], w[1]))
        .collect::<Result<Vec<StochasticMatrix>>>()?;
    let seed = cfg.seed;
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut states = Vec::with_capacity(steps.len() + 1);
            let mut current = draw(&mut rng, p0);
            states.push(current);
            for m in &steps {
                current = draw(&mut rng, &m.column(current));
                states.push(current);
            }
            SamplePath { states }
        })
        .collect();
    Ok(paths)
}

fn check_paths(paths: &[SamplePath]) -> Result<usize> {
    let first = paths
        .first()
        .ok_or_else(|| Error::Validation("empty path collection".into()))?;
    let n = first.len();
    if paths.iter().any(|p| p.len() != n) {
        return Err(Error::ShapeMismatch("paths of different lengths".into()));
    }
    Ok(n)
}

pub fn empirical_marginals(paths: &[SamplePath]) -> Result<Vec<ProbabilityVector>> {
    let n = check_paths(paths)?;
    let total = paths.len() as f64;
    (0..n)
        .map(|k| {
            let ones = paths.iter().filter(|p| p.states[k] == State::One).count() as f64;
            ProbabilityVector::from_first(ones / total)
        })
        .collect()
}

/// Occupancy counts of each state at index `k`.
pub fn occupancy(paths: &[SamplePath], k: usize) -> Result<[usize; 2]> {
    let n = check_paths(paths)?;
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, len: n });
    }
    let mut counts = [0usize; 2];
    for p in paths {
        counts[p.states[k].index()] += 1;
    }
    Ok(counts)
}

/// `counts[a][b]`: paths in state `a` at index `i` and state `b` at index `j`.
pub fn transition_counts(paths: &[SamplePath], i: usize, j: usize) -> Result<[[usize; 2]; 2]> {
    let n = check_paths(paths)?;
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange {
            index: i.max(j),
            len: n,
        });
    }
    let mut counts = [[0usize; 2]; 2];
    for p in paths {
        counts[p.states[i].index()][p.states[j].index()] += 1;
    }
    Ok(counts)
}

/// Conditional frequency of the state at index `i` given the state at the
/// earlier index `j`, column-normalized.
pub fn empirical_transition(paths: &[SamplePath], i: usize, j: usize) -> Result<StochasticMatrix> {
    let n = check_paths(paths)?;
    if i <= j {
        return Err(Error::Precondition(format!(
            "empirical transition needs later index i > earlier index j, got i={i}, j={j}"
        )));
    }
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let counts = transition_counts(paths, i, j)?;
    let occupancy = [counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]];
    let mut columns = [ProbabilityVector::uniform(); 2];
    for cond in State::ALL {
        let c = cond.index();
        if occupancy[c] == 0 {
            return Err(Error::EmptyCell {
                state: cond.label(),
                index: j,
                counts: occupancy,
            });
        }
        columns[c] = ProbabilityVector::from_first(counts[0][c] as f64 / occupancy[c] as f64)?;
    }
    Ok(StochasticMatrix::from_columns(columns[0], columns[1]))
}

/// `(p̂ − p) / √(p(1 − p)/n)`. When `p ∈ {0, 1}` the score is 0 if `p̂ = p`
/// and infinite otherwise.
pub fn z_score(empirical: f64, analytic: f64, n: usize) -> f64 {
    let var = analytic * (1.0 - analytic);
    if var <= 0.0 || n == 0 {
        return if empirical == analytic {
            0.0
        } else {
            f64::INFINITY
        };
    }
    (empirical - analytic) / (var / n as f64).sqrt()
}

/// Scores for per-time marginals, state 1 then state 2 at each instant.
pub fn marginal_z_scores(
    empirical: &[ProbabilityVector],
    analytic: &[ProbabilityVector],
    n_paths: usize,
) -> Result<Vec<[f64; 2]>> {
    if empirical.len() != analytic.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} empirical marginals vs {} analytic",
            empirical.len(),
            analytic.len()
        )));
    }
    Ok(empirical
        .iter()
        .zip(analytic)
        .map(|(e, a)| {
            [
                z_score(e.p1(), a.p1(), n_paths),
                z_score(e.p2(), a.p2(), n_paths),
            ]
        })
        .collect())
}

/// Row-major scores for a transition matrix where column `c` was estimated
/// from `column_counts[c]` paths.
pub fn transition_z_scores(
    empirical: &StochasticMatrix,
    analytic: &StochasticMatrix,
    column_counts: [usize; 2],
) -> [[f64; 2]; 2] {
    let e = empirical.as_rows();
    let a = analytic.as_rows();
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = z_score(e[r][c], a[r][c], column_counts[c]);
        }
    }
    out
}

/// One row per path, one column per grid time, states as 1/2 labels.
pub fn paths_to_csv(paths: &[SamplePath], grid: &TimeGrid) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("path".to_string())
        .chain(grid.times().iter().map(|t| format!("t={t}")))
        .collect();
    let io = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    for (k, p) in paths.iter().enumerate() {
        if p.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "path {k} has {} states for {} grid times",
                p.len(),
                grid.len()
            )));
        }
        let row: Vec<String> = std::iter::once(k.to_string())
            .chain(p.states.iter().map(|s| s.label().to_string()))
            .collect();
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
