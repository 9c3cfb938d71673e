//! The two-qubit NOT Connection.
//!
//! A Connection between qubits `r` and `s` keeps the joint state inside
//! `span{|0⟩_r|1⟩_s, |1⟩_r|0⟩_s}`. Rotating `r` by φ under that constraint
//! moves the state along `cos(θ+φ)|01⟩ + sin(θ+φ)|10⟩`; this module holds the
//! closed forms used as ground truth for the evolver.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::evolver::{MarginalSchedule, SolverConfig};
use crate::hilbert::{BasisLabel, Operator, Projector, StateVector};
use crate::C64;

/// The qubit pair joined by a NOT Connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionSpec {
    r: String,
    s: String,
}

impl ConnectionSpec {
    pub fn new(r: impl Into<String>, s: impl Into<String>) -> Result<Self> {
        let (r, s) = (r.into(), s.into());
        if r == s {
            return Err(Error::InvalidNetwork(format!(
                "a Connection needs two distinct qubits, got `{r}` twice"
            )));
        }
        Ok(Self { r, s })
    }

    pub fn r(&self) -> &str {
        &self.r
    }

    pub fn s(&self) -> &str {
        &self.s
    }

    /// The two-qubit basis `H[r ⊗ s]`.
    pub fn basis(&self) -> Arc<BasisLabel> {
        Arc::new(BasisLabel::qubits(&[&self.r, &self.s]).expect("names are distinct"))
    }
}

impl Default for ConnectionSpec {
    fn default() -> Self {
        Self::new("r", "s").expect("distinct")
    }
}

/// Rotation drive: initial angle θ, rate ω, final angle φ_F, step count N.
/// `φ_F = 0` is the zero-length drive that holds the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSchedule {
    pub theta: f64,
    pub omega: f64,
    pub phi_final: f64,
    pub steps: usize,
}

impl RotationSchedule {
    pub fn new(theta: f64, omega: f64, phi_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSchedule("step count must be at least 1".into()));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidSchedule(format!("rate ω must be positive, got {omega}")));
        }
        if !(phi_final.is_finite() && phi_final >= 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "final angle must be nonnegative, got {phi_final}"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidSchedule("θ must be finite".into()));
        }
        Ok(Self {
            theta,
            omega,
            phi_final,
            steps,
        })
    }

    /// Unit-rate schedule, the usual case.
    pub fn unit_rate(theta: f64, phi_final: f64, steps: usize) -> Result<Self> {
        Self::new(theta, 1.0, phi_final, steps)
    }

    /// `Δt = φ_F / (N ω)`.
    pub fn dt(&self) -> f64 {
        self.phi_final / (self.steps as f64 * self.omega)
    }

    /// Angle increment per step, `ω Δt`.
    pub fn dphi(&self) -> f64 {
        self.phi_final / self.steps as f64
    }

    pub fn phi(&self, step: usize) -> f64 {
        step as f64 * self.dphi()
    }

    /// `(cos²(θ+φₙ), sin²(θ+φₙ))` for n = 0..=N.
    pub fn rotated_diagonals(&self, offset: f64) -> Vec<Vec<f64>> {
        (0..=self.steps)
            .map(|n| {
                let a = self.theta + offset + self.phi(n);
                vec![a.cos().powi(2), a.sin().powi(2)]
            })
            .collect()
    }
}

/// `A_rs`: identity on the `r ≠ s` components, zero on `r = s`, identity on
/// every other subsystem. `r` and `s` may be nodes inside larger subsystems.
pub fn ars_projector(spec: &ConnectionSpec, basis: Arc<BasisLabel>) -> Result<Projector> {
    let r = basis.node_values(spec.r())?;
    let s = basis.node_values(spec.s())?;
    let keep = (0..basis.dim()).filter(|&i| r[i] != s[i]);
    Projector::from_basis_states(basis, keep)
}

/// `cos(θ+φ)|0⟩_r|1⟩_s + sin(θ+φ)|1⟩_r|0⟩_s` on the default `r, s` basis.
pub fn closed_form_state(theta: f64, phi: f64) -> StateVector {
    closed_form_state_on(&ConnectionSpec::default(), theta, phi)
}

pub fn closed_form_state_on(spec: &ConnectionSpec, theta: f64, phi: f64) -> StateVector {
    let a = theta + phi;
    StateVector::from_real(spec.basis(), &[0.0, a.cos(), a.sin(), 0.0]).expect("dimension 4")
}

/// Unitary that rotates by φ inside `span{|01⟩, |10⟩}` and inside
/// `span{|00⟩, |11⟩}`, in the lexicographic basis `|00⟩, |01⟩, |10⟩, |11⟩`.
/// Block-diagonal with respect to `A_rs`, so the two commute.
pub fn q_propagator(phi: f64) -> Operator {
    let (c, s) = (phi.cos(), phi.sin());
    let rows: [[f64; 4]; 4] = [[c, 0.0, 0.0, -s], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [s, 0.0, 0.0, c]];
    let matrix = DMatrix::from_fn(4, 4, |i, j| C64::new(rows[i][j], 0.0));
    Operator::new(ConnectionSpec::default().basis(), matrix).expect("4x4 on a 4-dim basis")
}

/// `cos φ|0⟩⟨0| − sin φ|0⟩⟨1| + sin φ|1⟩⟨0| + cos φ|1⟩⟨1|` on one qubit.
pub fn single_qubit_rotation(phi: f64, qubit: &str) -> Operator {
    let (c, s) = (phi.cos(), phi.sin());
    let basis = Arc::new(BasisLabel::qubits(&[qubit]).expect("single name"));
    Operator::from_real(basis, &[&[c, -s], &[s, c]]).expect("2x2 on a qubit")
}

/// Driven marginal on `r` that follows the rotation: `diag ρ_r = (cos², sin²)(θ+φₙ)`.
pub fn r_rotation_marginal(
    spec: &ConnectionSpec,
    basis: &BasisLabel,
    schedule: &RotationSchedule,
) -> Result<MarginalSchedule> {
    MarginalSchedule::driven(basis, spec.r(), schedule.rotated_diagonals(0.0))
}

/// Builds the single-Connection constraint system driven on `r`.
pub fn connection_system(
    schedule: &RotationSchedule,
    config: SolverConfig,
) -> Result<crate::evolver::ConstraintSystem> {
    let spec = ConnectionSpec::default();
    let basis = spec.basis();
    let projector = ars_projector(&spec, basis.clone())?;
    let marginal = r_rotation_marginal(&spec, &basis, schedule)?;
    crate::evolver::ConstraintSystem::new(
        vec![projector],
        vec![marginal],
        closed_form_state(schedule.theta, 0.0),
        schedule.steps,
        schedule.dphi(),
        config,
    )
}
