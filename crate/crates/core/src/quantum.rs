//! The two-level Schrödinger evolution, its Born-rule trajectory, and the
//! "measurement probability" transition family built from it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chains::Trajectory;
use crate::error::{Error, Result};
use crate::prob::{check_ordered, ProbabilityVector, StochasticMatrix, TransitionFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumTrajectoryConfig {
    pub omega: f64,
    pub phase_c: f64,
}

impl QuantumTrajectoryConfig {
    pub fn new(omega: f64, phase_c: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Validation(format!("omega must be > 0, got {omega}")));
        }
        if !phase_c.is_finite() {
            return Err(Error::Validation("phase constant must be finite".into()));
        }
        Ok(Self { omega, phase_c })
    }

    /// Time at which the Born marginals first become uniform, `π / (4ω)`.
    pub fn uniform_time(&self) -> f64 {
        std::f64::consts::FRAC_PI_4 / self.omega
    }
}

impl Default for QuantumTrajectoryConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            phase_c: 0.0,
        }
    }
}

/// Amplitudes on the basis `|1⟩, |2⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState {
    amp1: Complex64,
    amp2: Complex64,
}

impl TwoLevelState {
    pub fn new(amp1: Complex64, amp2: Complex64, tol: f64) -> Result<Self> {
        let norm = amp1.norm_sqr() + amp2.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(Error::Validation(format!(
                "state is not normalized: |a1|^2 + |a2|^2 = {norm}"
            )));
        }
        Ok(Self { amp1, amp2 })
    }

    pub fn amp1(&self) -> Complex64 {
        self.amp1
    }

    pub fn amp2(&self) -> Complex64 {
        self.amp2
    }
}

/// `ψ(t) = e^{−ict} cos ωt |1⟩ − i e^{−ict} sin ωt |2⟩`.
pub fn evolve_state(t: f64, cfg: &QuantumTrajectoryConfig) -> Result<TwoLevelState> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Validation(format!("time must be >= 0, got {t}")));
    }
    let phase = Complex64::from_polar(1.0, -cfg.phase_c * t);
    let (sin, cos) = (cfg.omega * t).sin_cos();
    Ok(TwoLevelState {
        amp1: phase * cos,
        amp2: -Complex64::i() * phase * sin,
    })
}

pub fn born_marginals(state: &TwoLevelState) -> Result<ProbabilityVector> {
    ProbabilityVector::new(state.amp1.norm_sqr(), state.amp2.norm_sqr())
}

/// `t ↦ (cos²ωt, sin²ωt)`; the phase constant never enters.
pub fn quantum_trajectory(cfg: &QuantumTrajectoryConfig) -> Trajectory {
    let omega = cfg.omega;
    Trajectory::new(format!("quantum(omega={omega})"), move |t| {
        let c = (omega * t).cos();
        let s = (omega * t).sin();
        ProbabilityVector::new(c * c, s * s)
    })
}

/// `p^G(t, s)` with diagonal `cos²ω(t − s)` and off-diagonal `sin²ω(t − s)`.
#[derive(Debug, Clone, Copy)]
pub struct GillespieFamily {
    omega: f64,
}

impl GillespieFamily {
    pub fn new(cfg: &QuantumTrajectoryConfig) -> Self {
        Self { omega: cfg.omega }
    }
}

impl Default for GillespieFamily {
    fn default() -> Self {
        Self { omega: 1.0 }
    }
}

impl TransitionFamily for GillespieFamily {
    fn eval(&self, s: f64, t: f64) -> Result<StochasticMatrix> {
        check_ordered(s, t)?;
        let x = self.omega * (t - s);
        let (sin, cos) = x.sin_cos();
        let stay = cos * cos;
        let flip = sin * sin;
        StochasticMatrix::new(stay, flip, flip, stay)
    }

    fn name(&self) -> String {
        "gillespie".into()
    }
}

pub fn gillespie_family(cfg: &QuantumTrajectoryConfig) -> GillespieFamily {
    GillespieFamily::new(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::DEFAULT_TOL_EXACT;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn evolve_known_points() {
        let cfg = QuantumTrajectoryConfig::default();
        let s0 = evolve_state(0.0, &cfg).unwrap();
        assert_eq!(s0.amp1(), Complex64::new(1.0, 0.0));
        assert_eq!(s0.amp2().norm(), 0.0);

        let s = evolve_state(PI / 2.0, &cfg).unwrap();
        assert!(s.amp1().norm() < 1e-15);
        assert!((s.amp2() - Complex64::new(0.0, -1.0)).norm() < 1e-15);

        assert!(evolve_state(-1.0, &cfg).is_err());
    }

    #[test]
    fn born_known_points() {
        let cfg = QuantumTrajectoryConfig::default();
        let at = |t: f64| born_marginals(&evolve_state(t, &cfg).unwrap()).unwrap();
        assert_eq!(at(0.0).as_array(), [1.0, 0.0]);
        assert!(at(PI / 4.0).max_abs_diff(&ProbabilityVector::uniform()) < 1e-15);
        let third = at(PI / 3.0);
        assert!((third.p1() - 0.25).abs() < 1e-15);
        assert!((third.p2() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn trajectory_rescaling_and_phase() {
        let fast = QuantumTrajectoryConfig::new(2.0, 0.0).unwrap();
        let p = quantum_trajectory(&fast).at(PI / 8.0).unwrap();
        assert!(p.max_abs_diff(&ProbabilityVector::uniform()) < 1e-15);

        let a = quantum_trajectory(&QuantumTrajectoryConfig::new(1.0, 0.0).unwrap());
        let b = quantum_trajectory(&QuantumTrajectoryConfig::new(1.0, 5.0).unwrap());
        for k in 0..20 {
            let t = 0.1 * k as f64;
            assert_eq!(a.at(t).unwrap(), b.at(t).unwrap());
        }
        assert!(QuantumTrajectoryConfig::new(0.0, 0.0).is_err());
    }

    #[test]
    fn gillespie_known_points() {
        let g = GillespieFamily::default();
        assert_eq!(g.eval(0.3, 0.3).unwrap(), StochasticMatrix::identity());
        assert!(
            g.eval(0.0, PI / 4.0)
                .unwrap()
                .max_abs_diff(&StochasticMatrix::uniform())
                < 1e-15
        );
        let swap = StochasticMatrix::new(0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(g.eval(0.0, PI / 2.0).unwrap().max_abs_diff(&swap) < 1e-15);
        assert!(g.eval(1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn born_matches_trajectory(t in 0.0f64..20.0, c in -10.0f64..10.0, omega in 0.1f64..5.0) {
            let cfg = QuantumTrajectoryConfig::new(omega, c).unwrap();
            let direct = born_marginals(&evolve_state(t, &cfg).unwrap()).unwrap();
            let traj = quantum_trajectory(&cfg).at(t).unwrap();
            prop_assert!(direct.max_abs_diff(&traj) <= DEFAULT_TOL_EXACT);
            let st = evolve_state(t, &cfg).unwrap();
            prop_assert!((st.amp1().norm_sqr() + st.amp2().norm_sqr() - 1.0).abs() <= DEFAULT_TOL_EXACT);
        }

        #[test]
        fn gillespie_is_homogeneous_and_symmetric(s in 0.0f64..10.0, dt in 0.0f64..10.0) {
            let g = GillespieFamily::default();
            let m = g.eval(s, s + dt).unwrap();
            let m0 = g.eval(0.0, dt).unwrap();
            prop_assert!(m.max_abs_diff(&m0) <= DEFAULT_TOL_EXACT);
            prop_assert!(m.is_symmetric(DEFAULT_TOL_EXACT));
            prop_assert!(m.is_doubly_stochastic(DEFAULT_TOL_EXACT));
        }

        #[test]
        fn trajectory_is_periodic(t in 0.0f64..10.0, omega in 0.5f64..3.0) {
            let cfg = QuantumTrajectoryConfig::new(omega, 0.0).unwrap();
            let traj = quantum_trajectory(&cfg);
            let a = traj.at(t).unwrap();
            let b = traj.at(t + PI / omega).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= DEFAULT_TOL_EXACT);
        }
    }
}
