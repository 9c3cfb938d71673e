//! Discrete-time constrained evolution.
//!
//! At every step the engine looks for the normalized state that
//!
//! 1. lies in the range of the (intersected) projector `P`,
//! 2. reproduces every prescribed marginal diagonal, and
//! 3. is as close as possible to the previous state.
//!
//! The marginal labels split the basis into *cells* (one cell per joint label
//! tuple). `P` must commute with the cell projectors, so `range(P)` splits into
//! per-cell blocks and the constraint only fixes how much weight each block
//! carries. Weights are found by alternating projection: every marginal
//! sector is rescaled to its prescribed mass in turn, until all agree.
//! A sector that has to carry weight but is empty receives a uniform injection
//! from `range(P)`. If rescaling is slow to settle, a small linear program
//! decides feasibility of the weights exactly and removes cells that every
//! solution must leave empty. The remaining freedom is one phase per cell,
//! fixed in closed form by aligning the cell block with a reference state.
//!
//! The reference is the previous state, except that from the second step on
//! the engine uses the tangent continuation `2ψₙ − ψₙ₋₁`. The two agree on
//! every cell whose amplitude stays away from zero; they differ only when a
//! cell amplitude passes through zero within a step, where the continuation
//! keeps the trajectory smooth (`cos(θ+φ)` changes sign) instead of reflecting
//! it (`|cos(θ+φ)|`). Such steps are flagged as degenerate in the trajectory.

use std::sync::Arc;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{BasisLabel, Projector, StateVector, NULL_TOL};
use crate::C64;

/// Tolerance on each prescribed probability vector summing to one.
pub const DISTRIBUTION_TOL: f64 = 1e-12;
/// Pairwise commutator bound for projectors entering one system.
pub const COMMUTATOR_TOL: f64 = 1e-10;
/// Sector weight below which a sector counts as empty.
const EMPTY_SECTOR: f64 = NULL_TOL * NULL_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalKind {
    /// Time-varying, e.g. a rotating output qubit.
    Driven,
    /// Held constant, e.g. a constrained input.
    Pinned,
}

#[derive(Debug, Clone, PartialEq)]
enum Targets {
    Constant(Vec<f64>),
    PerStep(Vec<Vec<f64>>),
}

/// A prescribed diagonal of a reduced density matrix, step by step.
///
/// `labels[i]` is the outcome of the constrained observable in basis state `i`.
/// `None` marks states where the observable is undefined; they must carry no
/// weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSchedule {
    name: String,
    labels: Vec<Option<usize>>,
    outcomes: usize,
    kind: MarginalKind,
    targets: Targets,
}

fn check_distribution(name: &str, p: &[f64], outcomes: usize) -> Result<()> {
    let bad = |reason: String| Error::InvalidDistribution {
        name: name.to_string(),
        reason,
    };
    if p.len() != outcomes {
        return Err(bad(format!("expected {outcomes} entries, got {}", p.len())));
    }
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(bad(format!("entry {x} is not a nonnegative number")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(bad(format!("entries sum to {sum}")));
    }
    Ok(())
}

impl MarginalSchedule {
    /// Generic constructor over explicit labels.
    pub fn with_labels(
        name: impl Into<String>,
        labels: Vec<Option<usize>>,
        outcomes: usize,
        kind: MarginalKind,
        per_step: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if let Some(l) = labels.iter().flatten().find(|&&l| l >= outcomes) {
            return Err(Error::InvalidDistribution {
                name,
                reason: format!("label {l} out of range for {outcomes} outcomes"),
            });
        }
        if per_step.is_empty() {
            return Err(Error::InvalidSchedule(format!("`{name}` has no targets")));
        }
        for p in &per_step {
            check_distribution(&name, p, outcomes)?;
        }
        let targets = match kind {
            MarginalKind::Pinned if per_step.len() == 1 => {
                Targets::Constant(per_step.into_iter().next().expect("one entry"))
            }
            _ => Targets::PerStep(per_step),
        };
        Ok(Self {
            name,
            labels,
            outcomes,
            kind,
            targets,
        })
    }

    fn node_labels(basis: &BasisLabel, node: &str) -> Result<Vec<Option<usize>>> {
        Ok(basis.node_values(node)?.into_iter().map(|v| Some(v as usize)).collect())
    }

    /// Time-varying diagonal of a Boolean node; `per_step[n]` applies at step n.
    pub fn driven(basis: &BasisLabel, node: &str, per_step: Vec<Vec<f64>>) -> Result<Self> {
        let labels = Self::node_labels(basis, node)?;
        Self::with_labels(node, labels, 2, MarginalKind::Driven, per_step)
    }

    /// Constant diagonal of a Boolean node.
    pub fn pinned(basis: &BasisLabel, node: &str, probabilities: Vec<f64>) -> Result<Self> {
        let labels = Self::node_labels(basis, node)?;
        Self::with_labels(node, labels, 2, MarginalKind::Pinned, vec![probabilities])
    }

    /// Node held at a definite bit, `ρ = |bit⟩⟨bit|`.
    pub fn pinned_bit(basis: &BasisLabel, node: &str, bit: u8) -> Result<Self> {
        let p = if bit == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
        Self::pinned(basis, node, p)
    }

    /// Node rotated from `from` to its complement: weight `cos²φₙ` stays on
    /// `from`, `sin²φₙ` moves to the other value, `φₙ = n·dphi`.
    pub fn flip(basis: &BasisLabel, node: &str, from: u8, steps: usize, dphi: f64) -> Result<Self> {
        let per_step = (0..=steps)
            .map(|n| {
                let phi = n as f64 * dphi;
                let (stay, moved) = (phi.cos().powi(2), phi.sin().powi(2));
                if from == 0 {
                    vec![stay, moved]
                } else {
                    vec![moved, stay]
                }
            })
            .collect();
        Self::driven(basis, node, per_step)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Number of step targets held (`None` for constant schedules).
    pub fn target_count(&self) -> Option<usize> {
        match &self.targets {
            Targets::Constant(_) => None,
            Targets::PerStep(v) => Some(v.len()),
        }
    }

    /// Prescribed distribution at `step`. Per-step schedules hold their last
    /// entry past the end.
    pub fn target(&self, step: usize) -> &[f64] {
        match &self.targets {
            Targets::Constant(p) => p,
            Targets::PerStep(v) => &v[step.min(v.len() - 1)],
        }
    }

    /// Actual diagonal of `state` over the labeled outcomes.
    pub fn marginal_of(&self, state: &StateVector) -> Vec<f64> {
        self.marginal_of_vector(state.amplitudes())
    }

    fn marginal_of_vector(&self, v: &DVector<C64>) -> Vec<f64> {
        let mut out = vec![0.0; self.outcomes];
        for (a, l) in v.iter().zip(&self.labels) {
            if let Some(l) = l {
                out[*l] += a.norm_sqr();
            }
        }
        out
    }

    /// `max_k |mass_k − target_k|` plus any weight on unlabeled states.
    pub fn residual(&self, state: &StateVector, step: usize) -> f64 {
        self.residual_of_vector(state.amplitudes(), step)
    }

    fn residual_of_vector(&self, v: &DVector<C64>, step: usize) -> f64 {
        let masses = self.marginal_of_vector(v);
        let target = self.target(step);
        let worst = masses
            .iter()
            .zip(target)
            .map(|(m, t)| (m - t).abs())
            .fold(0.0, f64::max);
        let unlabeled: f64 = v
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.is_none())
            .map(|(a, _)| a.norm_sqr())
            .sum();
        worst + unlabeled
    }
}

/// Tolerances of the per-step solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub convergence_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            convergence_tol: 1e-12,
            max_iterations: 10_000,
        }
    }
}

/// Projector product `Π Aᵢ` of pairwise commuting projectors.
pub fn intersect_projectors(projectors: &[Projector]) -> Result<Projector> {
    let first = projectors
        .first()
        .ok_or_else(|| Error::InvalidSystem("no projectors to intersect".into()))?;
    if projectors.len() == 1 {
        return Ok(first.clone());
    }
    let basis = first.basis().clone();
    for (i, a) in projectors.iter().enumerate() {
        for b in &projectors[i + 1..] {
            if a.basis().as_ref() != b.basis().as_ref() {
                return Err(Error::BasisMismatch);
            }
            if a.support().is_some() && b.support().is_some() {
                continue;
            }
            let c = a.commutator_norm(b)?;
            if c > COMMUTATOR_TOL {
                return Err(Error::NonCommuting(c));
            }
        }
    }
    if projectors.iter().all(|p| p.support().is_some()) {
        let keep = (0..basis.dim()).filter(|&i| projectors.iter().all(|p| p.support().expect("checked diagonal")[i]));
        return Projector::from_basis_states(basis, keep);
    }
    let mut product = first.operator().clone();
    for p in &projectors[1..] {
        product = product.compose(p.operator())?;
    }
    Projector::from_operator(product)
}

/// Projectors, marginal schedules and an initial state.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    projector: Projector,
    marginals: Vec<MarginalSchedule>,
    initial: StateVector,
    steps: usize,
    phi_step: f64,
    config: SolverConfig,
    anchor: Option<StateVector>,
}

impl ConstraintSystem {
    /// Validates and assembles a system. An empty projector list means no
    /// symmetry constraint. `phi_step` is the drive angle per step, used only to
    /// label trajectory records.
    pub fn new(
        projectors: Vec<Projector>,
        marginals: Vec<MarginalSchedule>,
        initial: StateVector,
        steps: usize,
        phi_step: f64,
        config: SolverConfig,
    ) -> Result<Self> {
        let basis = initial.basis().clone();
        let projector = if projectors.is_empty() {
            Projector::identity(basis.clone())
        } else {
            intersect_projectors(&projectors)?
        };
        if projector.basis().as_ref() != basis.as_ref() {
            return Err(Error::BasisMismatch);
        }
        for m in &marginals {
            if m.labels.len() != basis.dim() {
                return Err(Error::DimensionMismatch {
                    expected: basis.dim(),
                    got: m.labels.len(),
                });
            }
            if let Some(len) = m.target_count() {
                if len < steps + 1 {
                    return Err(Error::InvalidSchedule(format!(
                        "`{}` covers {len} steps, system needs {}",
                        m.name,
                        steps + 1
                    )));
                }
            }
        }
        if projector.support().is_none() {
            let m = projector.operator().matrix();
            for mar in &marginals {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if mar.labels[i] != mar.labels[j] && m[(i, j)].norm() > COMMUTATOR_TOL {
                            return Err(Error::InvalidSystem(format!(
                                "projector does not commute with the sectors of `{}`",
                                mar.name
                            )));
                        }
                    }
                }
            }
        }
        let tol = config.feasibility_tol;
        if !initial.is_normalized(tol) {
            return Err(Error::InvalidSystem(format!(
                "initial state has norm {}",
                initial.norm()
            )));
        }
        let r = projector.residual(&initial)?;
        if r > tol {
            return Err(Error::InvalidSystem(format!(
                "initial state violates the projector (residual {r:e})"
            )));
        }
        for m in &marginals {
            let r = m.residual(&initial, 0);
            if r > tol {
                return Err(Error::InvalidSystem(format!(
                    "initial state violates the step-0 marginal of `{}` (residual {r:e})",
                    m.name
                )));
            }
        }
        Ok(Self {
            projector,
            marginals,
            initial,
            steps,
            phi_step,
            config,
            anchor: None,
        })
    }

    /// Sets the frame in which "phase 0" is meant when mass is injected into an
    /// empty cell: the injected block is turned so its overlap with `anchor`
    /// is real positive. Without an anchor the block takes the phase of the
    /// previous state's largest component.
    pub fn with_phase_anchor(mut self, anchor: StateVector) -> Result<Self> {
        if anchor.basis().as_ref() != self.basis().as_ref() {
            return Err(Error::BasisMismatch);
        }
        self.anchor = Some(anchor);
        Ok(self)
    }

    pub fn phase_anchor(&self) -> Option<&StateVector> {
        self.anchor.as_ref()
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn marginals(&self) -> &[MarginalSchedule] {
        &self.marginals
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn phi_step(&self) -> f64 {
        self.phi_step
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn basis(&self) -> &Arc<BasisLabel> {
        self.initial.basis()
    }
}

/// One solved step.
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub state: StateVector,
    /// Projector residual followed by one residual per marginal.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// The argmax was not unique (a cell with no overlap to fix its phase) or
    /// the tangent continuation overrode the plain overlap choice.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Solved(StepSolution),
    Infeasible { residual: f64, iterations: usize },
}

struct Cell {
    indices: Vec<usize>,
    /// One outcome per marginal; `None` if any marginal leaves the cell unlabeled.
    labels: Option<Vec<usize>>,
    /// `rank(Π_c P Π_c)`; zero means the cell cannot carry weight.
    rank: f64,
    /// Unit vector in `range(P)` supported on the cell, used when the previous
    /// state has no weight there.
    injection: Option<DVector<C64>>,
    /// The injection phase was fixed by the anchor.
    anchored: bool,
}

struct StepSolver<'a> {
    projector: &'a Projector,
    marginals: &'a [MarginalSchedule],
    config: SolverConfig,
    cells: Vec<Cell>,
}

/// Iterations of plain rescaling before the exact support analysis kicks in.
const LP_TRIGGER: usize = 40;

impl<'a> StepSolver<'a> {
    fn new(
        projector: &'a Projector,
        marginals: &'a [MarginalSchedule],
        config: SolverConfig,
        anchor: Option<&StateVector>,
    ) -> Self {
        let n = projector.basis().dim();
        let mut groups: std::collections::BTreeMap<Vec<Option<usize>>, Vec<usize>> = Default::default();
        for i in 0..n {
            let key: Vec<_> = marginals.iter().map(|m| m.labels[i]).collect();
            groups.entry(key).or_default().push(i);
        }
        let diag = projector.operator().matrix().diagonal();
        let cells = groups
            .into_iter()
            .map(|(key, indices)| {
                let labels: Option<Vec<usize>> = key.into_iter().collect();
                let rank = match projector.support() {
                    Some(s) => indices.iter().filter(|&&i| s[i]).count() as f64,
                    None => indices.iter().map(|&i| diag[i].re).sum::<f64>().round(),
                };
                let mut injection = if labels.is_some() && rank > 0.5 {
                    Self::injection(projector, &indices)
                } else {
                    None
                };
                let mut anchored = false;
                if let (Some(d), Some(a)) = (injection.as_mut(), anchor) {
                    let z: C64 = indices.iter().map(|&i| a.amplitude(i).conj() * d[i]).sum();
                    if z.norm() > NULL_TOL {
                        *d *= z.conj() / z.norm();
                        anchored = true;
                    }
                }
                Cell {
                    indices,
                    labels,
                    rank: if injection.is_some() { rank } else { 0.0 },
                    injection,
                    anchored,
                }
            })
            .collect();
        Self {
            projector,
            marginals,
            config,
            cells,
        }
    }

    /// Sum of the span vectors restricted to the cell, each turned so its
    /// largest entry is real positive.
    fn injection(projector: &Projector, cell: &[usize]) -> Option<DVector<C64>> {
        let n = projector.basis().dim();
        let mut acc = DVector::from_element(n, C64::new(0.0, 0.0));
        let mut first: Option<DVector<C64>> = None;
        for e in projector.span() {
            let mut piece = DVector::from_element(n, C64::new(0.0, 0.0));
            for &i in cell {
                piece[i] = e.amplitude(i);
            }
            let norm = piece.norm();
            if norm < NULL_TOL {
                continue;
            }
            let lead = piece
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .expect("non-empty");
            piece *= lead.conj() / (lead.norm() * norm);
            if first.is_none() {
                first = Some(piece.clone());
            }
            acc += piece;
        }
        let dir = if acc.norm() > NULL_TOL { acc } else { first? };
        Some(dir.unscale(dir.norm()))
    }

    fn residuals(&self, v: &DVector<C64>, step: usize) -> Vec<f64> {
        let pv = self.projector.apply_vector(v);
        let mut out = vec![(pv - v).norm()];
        out.extend(self.marginals.iter().map(|m| m.residual_of_vector(v, step)));
        out
    }

    fn weight_residual(&self, w: &[f64], step: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, m) in self.marginals.iter().enumerate() {
            let mut mass = vec![0.0; m.outcomes];
            for (c, cell) in self.cells.iter().enumerate() {
                if let Some(l) = &cell.labels {
                    mass[l[k]] += w[c];
                }
            }
            for (a, b) in mass.iter().zip(m.target(step)) {
                worst = worst.max((a - b).abs());
            }
        }
        if self.marginals.is_empty() {
            worst = (w.iter().sum::<f64>() - 1.0).abs();
        }
        worst
    }

    /// One rescaling sweep over every marginal sector.
    fn sweep(&self, w: &mut [f64], allowed: &[bool], step: usize) {
        let tol = self.config.feasibility_tol;
        for (k, m) in self.marginals.iter().enumerate() {
            let target = m.target(step);
            let mut mass = vec![0.0; m.outcomes];
            let mut rank = vec![0.0; m.outcomes];
            for (c, cell) in self.cells.iter().enumerate() {
                if let (Some(l), true) = (&cell.labels, allowed[c]) {
                    mass[l[k]] += w[c];
                    rank[l[k]] += cell.rank;
                }
            }
            for (c, cell) in self.cells.iter().enumerate() {
                let Some(l) = &cell.labels else { continue };
                let o = l[k];
                if mass[o] > EMPTY_SECTOR {
                    w[c] *= target[o] / mass[o];
                } else if target[o] > tol && allowed[c] && rank[o] > 0.0 {
                    w[c] = target[o] * cell.rank / rank[o];
                }
            }
        }
        if self.marginals.is_empty() {
            let total: f64 = w.iter().sum();
            if total > EMPTY_SECTOR {
                w.iter_mut().for_each(|x| *x /= total);
            } else {
                let rank: f64 = self.cells.iter().map(|c| c.rank).sum();
                for (x, cell) in w.iter_mut().zip(&self.cells) {
                    *x = cell.rank / rank.max(1.0);
                }
            }
        }
    }

    /// Exact feasibility and maximal support of the weight polytope
    /// `{w ≥ 0 : sector sums = targets}` via one homogenized LP:
    /// maximize `Σ z_c` with `z_c ≤ w_c`, `z_c ≤ 1`, sector sums `= λ·targets`,
    /// `λ ≥ 1`. Cells that can be positive in some solution get `z_c = 1`.
    fn support(&self, step: usize) -> Option<Vec<bool>> {
        use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let lambda = lp.add_var(0.0, (1.0, 1e6));
        let mut ws = Vec::new();
        let mut zs = Vec::new();
        for cell in &self.cells {
            if cell.labels.is_some() && cell.rank > 0.0 {
                let w = lp.add_var(0.0, (0.0, f64::INFINITY));
                let z = lp.add_var(1.0, (0.0, 1.0));
                lp.add_constraint([(z, 1.0), (w, -1.0)], ComparisonOp::Le, 0.0);
                ws.push(Some(w));
                zs.push(Some(z));
            } else {
                ws.push(None);
                zs.push(None);
            }
        }
        for (k, m) in self.marginals.iter().enumerate() {
            for (o, &t) in m.target(step).iter().enumerate() {
                let mut expr = LinearExpr::empty();
                expr.add(lambda, -t);
                for (c, cell) in self.cells.iter().enumerate() {
                    if let (Some(l), Some(w)) = (&cell.labels, ws[c]) {
                        if l[k] == o {
                            expr.add(w, 1.0);
                        }
                    }
                }
                lp.add_constraint(expr, ComparisonOp::Eq, 0.0);
            }
        }
        let solution = match lp.solve() {
            Ok(outcome) => outcome.into_solution().ok()?,
            Err(e) => {
                debug!("step {step}: support analysis: {e}");
                return None;
            }
        };
        Some(
            zs.iter()
                .map(|z| z.is_some_and(|z| solution.var_value(z) > 0.5))
                .collect(),
        )
    }

    /// Aligns each cell block with the reference; returns whether any cell had
    /// to fall back or was overridden by the continuation.
    fn align(&self, v: &mut DVector<C64>, prev: &DVector<C64>, reference: Option<&DVector<C64>>) -> bool {
        let mut degenerate = false;
        for cell in &self.cells {
            let cell = &cell.indices;
            let mass: f64 = cell.iter().map(|&i| v[i].norm_sqr()).sum();
            if mass <= self.config.feasibility_tol * self.config.feasibility_tol {
                continue;
            }
            let dot = |r: &DVector<C64>| -> C64 { cell.iter().map(|&i| r[i].conj() * v[i]).sum() };
            let to_prev = dot(prev);
            let z = match reference.map(dot) {
                Some(z) if z.norm() > NULL_TOL * mass.sqrt() => {
                    if to_prev.norm() > NULL_TOL && (z * to_prev.conj()).re < 0.0 {
                        degenerate = true;
                    }
                    z
                }
                _ => to_prev,
            };
            if z.norm() > NULL_TOL * mass.sqrt() {
                let rot = z.conj() / z.norm();
                for &i in cell {
                    v[i] *= rot;
                }
            } else {
                degenerate = true;
            }
        }
        degenerate
    }

    fn solve(&self, prev: &StateVector, reference: Option<&DVector<C64>>, step: usize) -> StepOutcome {
        let cfg = self.config;
        let prev_v = prev.amplitudes();
        let projected = self.projector.apply_vector(prev_v);
        let zero_overlap = projected.norm() < NULL_TOL;
        if zero_overlap {
            warn!("step {step}: previous state has no weight in the constraint subspace");
        }
        let lead = prev_v
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(C64::new(1.0, 0.0));
        let phase = if lead.norm() > NULL_TOL {
            lead / lead.norm()
        } else {
            C64::new(1.0, 0.0)
        };

        // Per-cell direction and starting weight.
        let mut dirs: Vec<Option<DVector<C64>>> = Vec::with_capacity(self.cells.len());
        let mut w = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let mass: f64 = cell.indices.iter().map(|&i| projected[i].norm_sqr()).sum();
            if cell.rank > 0.0 && mass > EMPTY_SECTOR && !zero_overlap {
                let mut d = DVector::from_element(projected.len(), C64::new(0.0, 0.0));
                for &i in &cell.indices {
                    d[i] = projected[i];
                }
                dirs.push(Some(d.unscale(mass.sqrt())));
                w.push(mass);
            } else {
                let turn = if cell.anchored { C64::new(1.0, 0.0) } else { phase };
                dirs.push(cell.injection.as_ref().map(|d| d * turn));
                w.push(0.0);
            }
        }
        let mut allowed: Vec<bool> = self.cells.iter().map(|c| c.rank > 0.0).collect();

        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        let mut analysed = false;
        while iterations < cfg.max_iterations {
            iterations += 1;
            let last = residual;
            self.sweep(&mut w, &allowed, step);
            residual = self.weight_residual(&w, step);
            if residual <= cfg.convergence_tol
                || (residual <= cfg.feasibility_tol && (last - residual).abs() <= cfg.convergence_tol)
            {
                break;
            }
            if iterations >= LP_TRIGGER && !analysed {
                analysed = true;
                match self.support(step) {
                    None => return StepOutcome::Infeasible { residual, iterations },
                    Some(support) => {
                        for (c, keep) in support.iter().enumerate() {
                            if !keep {
                                allowed[c] = false;
                                w[c] = 0.0;
                            }
                        }
                    }
                }
            }
        }
        if residual > cfg.feasibility_tol {
            return StepOutcome::Infeasible { residual, iterations };
        }

        let mut v = DVector::from_element(prev_v.len(), C64::new(0.0, 0.0));
        for (d, &x) in dirs.iter().zip(&w) {
            if let (Some(d), true) = (d, x > 0.0) {
                v += d * C64::new(x.sqrt(), 0.0);
            }
        }
        let norm = v.norm();
        if norm < NULL_TOL {
            return StepOutcome::Infeasible {
                residual: 1.0,
                iterations,
            };
        }
        v = v.unscale(norm);

        let mut degenerate = self.align(&mut v, prev_v, reference);
        if zero_overlap {
            degenerate = true;
            if let Some(first) = v.iter().copied().find(|a| a.norm() > NULL_TOL) {
                v *= first.conj() / first.norm();
            }
        }
        let residuals = self.residuals(&v, step);
        let state = StateVector::from_vector(prev.basis().clone(), v).expect("same dimension");
        StepOutcome::Solved(StepSolution {
            state,
            residuals,
            iterations,
            degenerate,
        })
    }
}

/// Solves one step from `prev` against the step-`step` marginal targets, using
/// `prev` itself as the phase reference.
pub fn step(
    prev: &StateVector,
    projector: &Projector,
    marginals: &[MarginalSchedule],
    step: usize,
    config: &SolverConfig,
) -> Result<StepOutcome> {
    if prev.basis().as_ref() != projector.basis().as_ref() {
        return Err(Error::BasisMismatch);
    }
    if marginals.iter().any(|m| m.labels.len() != prev.dim()) {
        return Err(Error::DimensionMismatch {
            expected: prev.dim(),
            got: marginals
                .iter()
                .map(|m| m.labels.len())
                .find(|&l| l != prev.dim())
                .unwrap_or(0),
        });
    }
    let solver = StepSolver::new(projector, marginals, *config, None);
    Ok(solver.solve(prev, None, step))
}

/// One trajectory point.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub phi: f64,
    pub state: StateVector,
    pub residuals: Vec<f64>,
    /// `|⟨ψₙ₋₁|ψₙ⟩|`, 1 for the initial record.
    pub overlap: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &StateVector> {
        self.records.iter().map(|r| &r.state)
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum EvolutionStatus {
    Feasible,
    Infeasible { step: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub status: EvolutionStatus,
    pub trajectory: Trajectory,
    /// Last feasible state.
    pub final_state: StateVector,
}

impl EvolutionOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == EvolutionStatus::Feasible
    }
}

/// Runs steps 1..=N in order, stopping at the first infeasible step.
pub fn evolve(system: &ConstraintSystem) -> EvolutionOutcome {
    let solver = StepSolver::new(
        &system.projector,
        &system.marginals,
        system.config,
        system.anchor.as_ref(),
    );
    let initial = system.initial.clone();
    let mut trajectory = Trajectory {
        records: vec![StepRecord {
            step: 0,
            phi: 0.0,
            residuals: solver.residuals(initial.amplitudes(), 0),
            state: initial.clone(),
            overlap: 1.0,
            degenerate: false,
        }],
    };
    let mut prev = initial;
    let mut before: Option<StateVector> = None;
    for n in 1..=system.steps {
        let reference = before
            .as_ref()
            .map(|b| prev.amplitudes() * C64::new(2.0, 0.0) - b.amplitudes());
        match solver.solve(&prev, reference.as_ref(), n) {
            StepOutcome::Solved(sol) => {
                let overlap = prev.overlap(&sol.state).expect("same basis");
                if sol.degenerate {
                    debug!("step {n}: degenerate overlap maximum");
                }
                trajectory.records.push(StepRecord {
                    step: n,
                    phi: n as f64 * system.phi_step,
                    state: sol.state.clone(),
                    residuals: sol.residuals,
                    overlap,
                    degenerate: sol.degenerate,
                });
                before = Some(std::mem::replace(&mut prev, sol.state));
            }
            StepOutcome::Infeasible { residual, .. } => {
                debug!("step {n}: infeasible, residual {residual:e}");
                return EvolutionOutcome {
                    status: EvolutionStatus::Infeasible { step: n, residual },
                    trajectory,
                    final_state: prev,
                };
            }
        }
    }
    EvolutionOutcome {
        status: EvolutionStatus::Feasible,
        trajectory,
        final_state: prev,
    }
}

/// Numerical unitarity evidence for a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitarityReport {
    pub max_norm_deviation: f64,
    pub min_overlap: f64,
    pub min_overlap_step: usize,
    /// Dimension of the span of all trajectory states.
    pub span_rank: usize,
    /// `max |(MU)†(MU) − 1|` for the least-squares step map `M` on the range `U`
    /// of the pre-step states.
    pub isometry_defect: f64,
    /// `max |M ψₙ − ψₙ₊₁|` over the trajectory.
    pub fit_residual: f64,
    pub degenerate_steps: usize,
}

const RANK_TOL: f64 = 1e-9;

pub fn unitarity_report(trajectory: &Trajectory) -> UnitarityReport {
    let states: Vec<&StateVector> = trajectory.states().collect();
    let max_norm_deviation = states.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max);
    let (min_overlap_step, min_overlap) = trajectory
        .records
        .iter()
        .skip(1)
        .map(|r| (r.step, r.overlap))
        .fold((0, 1.0), |acc, x| if x.1 < acc.1 { x } else { acc });
    let degenerate_steps = trajectory.records.iter().filter(|r| r.degenerate).count();

    let mut report = UnitarityReport {
        max_norm_deviation,
        min_overlap,
        min_overlap_step,
        span_rank: 0,
        isometry_defect: 0.0,
        fit_residual: 0.0,
        degenerate_steps,
    };
    if states.is_empty() {
        return report;
    }

    // Orthonormal frame of the span of every state.
    let mut frame: Vec<DVector<C64>> = Vec::new();
    for s in &states {
        let mut w = s.amplitudes().clone();
        for _ in 0..2 {
            for e in &frame {
                let c = e.dotc(&w);
                w -= e * c;
            }
        }
        let r = w.norm();
        if r > RANK_TOL {
            frame.push(w.unscale(r));
        }
    }
    report.span_rank = frame.len();
    if states.len() < 2 || frame.is_empty() {
        return report;
    }
    let r = frame.len();
    let t = states.len() - 1;
    let coords = |s: &StateVector| DVector::from_iterator(r, frame.iter().map(|e| e.dotc(s.amplitudes())));
    let mut before = DMatrix::from_element(r, t, C64::new(0.0, 0.0));
    let mut after = DMatrix::from_element(r, t, C64::new(0.0, 0.0));
    for k in 0..t {
        before.set_column(k, &coords(states[k]));
        after.set_column(k, &coords(states[k + 1]));
    }
    let svd = before.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > RANK_TOL * smax.max(1.0))
        .collect();
    // M = after · before⁺
    let mut pinv = DMatrix::from_element(t, r, C64::new(0.0, 0.0));
    for &k in &keep {
        let s = svd.singular_values[k];
        pinv += vt.row(k).adjoint() * u.column(k).adjoint() * C64::new(1.0 / s, 0.0);
    }
    let map = &after * pinv;
    let fit = &map * &before - &after;
    report.fit_residual = fit.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut range = DMatrix::from_element(r, keep.len(), C64::new(0.0, 0.0));
    for (j, &k) in keep.iter().enumerate() {
        range.set_column(j, &u.column(k));
    }
    let image = &map * &range;
    let gram = image.adjoint() * &image - DMatrix::<C64>::identity(keep.len(), keep.len());
    report.isometry_defect = gram.iter().map(|z| z.norm()).fold(0.0, f64::max);
    report
}
