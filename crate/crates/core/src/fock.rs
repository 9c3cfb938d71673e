//! Two identical fermions on two sites with spin: the Connection as a
//! consequence of antisymmetry plus a zero-energy restriction.
//!
//! Two representations are used side by side.
//!
//! * Fock space: occupation numbers of the modes `0r, 1r, 0s, 1s` (spin, site),
//!   16 states, mode `0r` most significant. Creation operators carry the
//!   Jordan–Wigner sign `(−1)^(Σ_{k<j} n_k)`, so `a†ᵢ a†ⱼ|0⟩ = +|eᵢ + eⱼ⟩` for
//!   `i < j`.
//! * First quantization: `|χ₁⟩|χ₂⟩|λ₁⟩|λ₂⟩`, spin then site of each particle,
//!   16 states. A two-particle Fock state `a†ᵢ a†ⱼ|0⟩` corresponds to
//!   `(|i⟩₁|j⟩₂ − |j⟩₁|i⟩₂)/√2`.
//!
//! Qubit notation `|χ_r χ_s⟩_rs` means `a†_{χ_r r} a†_{χ_s s}|0⟩`: one particle
//! per site, carrying the qubit value as its spin.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::connection::RotationSchedule;
use crate::error::{Error, Result};
use crate::evolver::{evolve, ConstraintSystem, EvolutionOutcome, MarginalSchedule, SolverConfig};
use crate::hilbert::{antisymmetrizer, exchange_operator, BasisLabel, Operator, Projector, StateVector, Subsystem};
use crate::C64;

/// Bound on the dual constructions (named states, the two forms of `H_rs`).
pub const CONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Site {
    R,
    S,
}

impl Site {
    fn bit(self) -> usize {
        match self {
            Site::R => 0,
            Site::S => 1,
        }
    }
}

/// A single-particle mode: spin χ (0 = down, 1 = up) and site λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mode {
    pub spin: u8,
    pub site: Site,
}

/// Fixed mode order `0r < 1r < 0s < 1s`.
pub const MODES: [Mode; 4] = [
    Mode { spin: 0, site: Site::R },
    Mode { spin: 1, site: Site::R },
    Mode { spin: 0, site: Site::S },
    Mode { spin: 1, site: Site::S },
];

pub fn mode_index(spin: u8, site: Site) -> usize {
    2 * site.bit() + spin as usize
}

fn occupation_bit(mode: usize) -> usize {
    1 << (3 - mode)
}

pub fn fock_basis() -> Arc<BasisLabel> {
    Arc::new(BasisLabel::qubits(&["0r", "1r", "0s", "1s"]).expect("distinct names"))
}

pub fn first_quantized_basis() -> Arc<BasisLabel> {
    Arc::new(
        BasisLabel::new(vec![
            Subsystem::labeled("chi1", &["0", "1"]),
            Subsystem::labeled("chi2", &["0", "1"]),
            Subsystem::labeled("lambda1", &["r", "s"]),
            Subsystem::labeled("lambda2", &["r", "s"]),
        ])
        .expect("distinct names"),
    )
}

/// Index of `|χ₁⟩|χ₂⟩|λ₁⟩|λ₂⟩` (λ: 0 = r, 1 = s).
fn fq_index(chi1: usize, chi2: usize, l1: usize, l2: usize) -> usize {
    (chi1 << 3) | (chi2 << 2) | (l1 << 1) | l2
}

fn fq_parts(index: usize) -> (usize, usize, usize, usize) {
    ((index >> 3) & 1, (index >> 2) & 1, (index >> 1) & 1, index & 1)
}

/// `(χ_r, χ_s)` when exactly one particle sits on each site.
pub fn qubit_notation(fq_index: usize) -> Option<(u8, u8)> {
    let (c1, c2, l1, l2) = fq_parts(fq_index);
    match (l1, l2) {
        (0, 1) => Some((c1 as u8, c2 as u8)),
        (1, 0) => Some((c2 as u8, c1 as u8)),
        _ => None,
    }
}

/// Spin of the particle on site r when exactly one particle is there.
pub fn r_spin(fq_index: usize) -> Option<usize> {
    let (c1, c2, l1, l2) = fq_parts(fq_index);
    match (l1 == 0, l2 == 0) {
        (true, false) => Some(c1),
        (false, true) => Some(c2),
        _ => None,
    }
}

/// Creation and annihilation operators on the 16-state Fock space.
#[derive(Debug, Clone)]
pub struct CarOperators {
    basis: Arc<BasisLabel>,
    creation: Vec<Operator>,
    annihilation: Vec<Operator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarReport {
    pub identities: usize,
    pub max_defect: f64,
}

pub fn car_operators() -> CarOperators {
    let basis = fock_basis();
    let creation: Vec<Operator> = (0..4)
        .map(|j| {
            let mut m = DMatrix::from_element(16, 16, C64::new(0.0, 0.0));
            for occ in 0..16usize {
                if occ & occupation_bit(j) != 0 {
                    continue;
                }
                let before = (0..j).filter(|&k| occ & occupation_bit(k) != 0).count();
                let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
                m[(occ | occupation_bit(j), occ)] = C64::new(sign, 0.0);
            }
            Operator::new(basis.clone(), m).expect("16x16")
        })
        .collect();
    let annihilation = creation.iter().map(Operator::adjoint).collect();
    CarOperators {
        basis,
        creation,
        annihilation,
    }
}

impl CarOperators {
    pub fn basis(&self) -> &Arc<BasisLabel> {
        &self.basis
    }

    pub fn create(&self, spin: u8, site: Site) -> &Operator {
        &self.creation[mode_index(spin, site)]
    }

    pub fn annihilate(&self, spin: u8, site: Site) -> &Operator {
        &self.annihilation[mode_index(spin, site)]
    }

    pub fn creation(&self) -> &[Operator] {
        &self.creation
    }

    pub fn annihilation(&self) -> &[Operator] {
        &self.annihilation
    }

    pub fn vacuum(&self) -> StateVector {
        StateVector::basis_state(self.basis.clone(), 0).expect("non-empty")
    }

    /// `a†ᵢ a†ⱼ |0⟩`.
    pub fn pair(&self, i: Mode, j: Mode) -> StateVector {
        let v = self.create(j.spin, j.site).apply(&self.vacuum()).expect("same basis");
        self.create(i.spin, i.site).apply(&v).expect("same basis")
    }

    /// `{a†ᵢ, a†ⱼ} = {aᵢ, aⱼ} = 0` and `{aᵢ, a†ⱼ} = {a†ᵢ, aⱼ} = δᵢⱼ` over all mode pairs.
    pub fn check(&self) -> CarReport {
        let anti = |x: &Operator, y: &Operator| -> DMatrix<C64> { x.matrix() * y.matrix() + y.matrix() * x.matrix() };
        let id = DMatrix::<C64>::identity(16, 16);
        let zero = DMatrix::<C64>::zeros(16, 16);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for i in 0..4 {
            for j in 0..4 {
                let delta = if i == j { &id } else { &zero };
                let cases = [
                    (anti(&self.creation[i], &self.creation[j]), &zero),
                    (anti(&self.annihilation[i], &self.annihilation[j]), &zero),
                    (anti(&self.creation[i], &self.annihilation[j]), delta),
                    (anti(&self.annihilation[i], &self.creation[j]), delta),
                ];
                for (got, want) in cases {
                    count += 1;
                    let d = (got - want).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    worst = worst.max(d);
                }
            }
        }
        CarReport {
            identities: count,
            max_defect: worst,
        }
    }
}

/// Maps Fock amplitudes on two-particle states to the antisymmetric
/// first-quantized vector; other components are dropped.
pub fn to_first_quantized(state: &StateVector) -> Result<StateVector> {
    if state.dim() != 16 {
        return Err(Error::DimensionMismatch {
            expected: 16,
            got: state.dim(),
        });
    }
    let mut out = DVector::from_element(16, C64::new(0.0, 0.0));
    for (i, mi) in MODES.iter().enumerate() {
        for (j, mj) in MODES.iter().enumerate().skip(i + 1) {
            let occ = occupation_bit(i) | occupation_bit(j);
            let a = state.amplitude(occ);
            let ij = fq_index(mi.spin as usize, mj.spin as usize, mi.site.bit(), mj.site.bit());
            let ji = fq_index(mj.spin as usize, mi.spin as usize, mj.site.bit(), mi.site.bit());
            out[ij] += a * FRAC_1_SQRT_2;
            out[ji] -= a * FRAC_1_SQRT_2;
        }
    }
    StateVector::from_vector(first_quantized_basis(), out)
}

/// `|χ_r χ_s⟩_rs` in Fock space.
pub fn qubit_state(car: &CarOperators, chi_r: u8, chi_s: u8) -> StateVector {
    car.pair(
        Mode {
            spin: chi_r,
            site: Site::R,
        },
        Mode {
            spin: chi_s,
            site: Site::S,
        },
    )
}

/// `|χ_r χ_s⟩_rs` in first quantization: `(|χ_r χ_s r s⟩ − |χ_s χ_r s r⟩)/√2`.
pub fn qubit_state_first_quantized(chi_r: u8, chi_s: u8) -> StateVector {
    let (r, s) = (chi_r as usize, chi_s as usize);
    fq_state(&[(FRAC_1_SQRT_2, [r, s, 0, 1]), (-FRAC_1_SQRT_2, [s, r, 1, 0])])
}

fn fq_state(terms: &[(f64, [usize; 4])]) -> StateVector {
    let mut v = vec![0.0; 16];
    for (c, [a, b, l1, l2]) in terms {
        v[fq_index(*a, *b, *l1, *l2)] += c;
    }
    StateVector::from_real(first_quantized_basis(), &v).expect("16 entries")
}

/// One of the six statistics-respecting states `|a⟩ … |f⟩`.
#[derive(Debug, Clone)]
pub struct NamedState {
    pub name: char,
    pub fock: StateVector,
    pub first_quantized: StateVector,
    /// Qubit notation, where one particle sits on each site.
    pub qubit: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct NamedStates {
    pub states: Vec<NamedState>,
    /// Largest distance between the two constructions of any state.
    pub deviation: f64,
}

impl NamedStates {
    pub fn get(&self, name: char) -> &NamedState {
        self.states.iter().find(|s| s.name == name).expect("names a–f")
    }

    /// `max |⟨x|y⟩ − δ|` over the Fock vectors.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, x) in self.states.iter().enumerate() {
            for (j, y) in self.states.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = x.fock.inner(&y.fock).expect("same basis");
                worst = worst.max((got - want).norm());
            }
        }
        worst
    }
}

/// Builds each named state from creation operators and from its explicit
/// first-quantized expression, and checks that they coincide.
pub fn named_states(car: &CarOperators) -> Result<NamedStates> {
    let h = FRAC_1_SQRT_2;
    let m = |spin, site| Mode { spin, site };
    let (r0, r1, s0, s1) = (m(0, Site::R), m(1, Site::R), m(0, Site::S), m(1, Site::S));
    let combine = |x: StateVector, y: StateVector, sign: f64| -> StateVector {
        let v = (x.amplitudes() + y.amplitudes() * C64::new(sign, 0.0)) * C64::new(h, 0.0);
        StateVector::from_vector(car.basis().clone(), v).expect("same basis")
    };
    let fock = [
        ('a', car.pair(r0, r1)),
        ('b', car.pair(s0, s1)),
        ('c', car.pair(r0, s0)),
        ('d', car.pair(r1, s1)),
        ('e', combine(car.pair(r0, s1), car.pair(r1, s0), 1.0)),
        ('f', combine(car.pair(r0, s1), car.pair(r1, s0), -1.0)),
    ];
    let first = [
        fq_state(&[(h, [0, 1, 0, 0]), (-h, [1, 0, 0, 0])]),
        fq_state(&[(h, [0, 1, 1, 1]), (-h, [1, 0, 1, 1])]),
        fq_state(&[(h, [0, 0, 0, 1]), (-h, [0, 0, 1, 0])]),
        fq_state(&[(h, [1, 1, 0, 1]), (-h, [1, 1, 1, 0])]),
        fq_state(&[
            (0.5, [0, 1, 0, 1]),
            (-0.5, [0, 1, 1, 0]),
            (0.5, [1, 0, 0, 1]),
            (-0.5, [1, 0, 1, 0]),
        ]),
        fq_state(&[
            (0.5, [0, 1, 0, 1]),
            (0.5, [0, 1, 1, 0]),
            (-0.5, [1, 0, 0, 1]),
            (-0.5, [1, 0, 1, 0]),
        ]),
    ];
    let qubit: [Option<&'static str>; 6] = [
        None,
        None,
        Some("|0⟩_r|0⟩_s"),
        Some("|1⟩_r|1⟩_s"),
        Some("(|0⟩_r|1⟩_s + |1⟩_r|0⟩_s)/√2"),
        Some("(|0⟩_r|1⟩_s − |1⟩_r|0⟩_s)/√2"),
    ];
    let q = |a, b| qubit_state(car, a, b);
    let qubit_fock: [Option<StateVector>; 6] = [
        None,
        None,
        Some(q(0, 0)),
        Some(q(1, 1)),
        Some(combine(q(0, 1), q(1, 0), 1.0)),
        Some(combine(q(0, 1), q(1, 0), -1.0)),
    ];
    let mut deviation: f64 = 0.0;
    let mut states = Vec::new();
    for (k, (name, f)) in fock.into_iter().enumerate() {
        deviation = deviation.max(to_first_quantized(&f)?.distance(&first[k])?);
        if let Some(qf) = &qubit_fock[k] {
            deviation = deviation.max(qf.distance(&f)?);
        }
        states.push(NamedState {
            name,
            fock: f,
            first_quantized: first[k].clone(),
            qubit: qubit[k],
        });
    }
    if deviation > CONSTRUCTION_TOL {
        return Err(Error::ConstructionMismatch {
            what: "named states".into(),
            deviation,
        });
    }
    Ok(NamedStates { states, deviation })
}

/// Energies of the four excited states; `|e⟩, |f⟩` sit at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FockHamiltonian {
    pub ea: f64,
    pub eb: f64,
    pub ec: f64,
    pub ed: f64,
}

impl Default for FockHamiltonian {
    fn default() -> Self {
        Self {
            ea: 3.0,
            eb: 3.0,
            ec: 1.0,
            ed: 1.0,
        }
    }
}

impl FockHamiltonian {
    /// Requires `E_a, E_b > E_c, E_d > 0`.
    pub fn new(ea: f64, eb: f64, ec: f64, ed: f64) -> Result<Self> {
        if ![ea, eb, ec, ed].iter().all(|e| e.is_finite()) {
            return Err(Error::InvalidEnergies("energies must be finite".into()));
        }
        if ec.min(ed) <= 0.0 {
            return Err(Error::InvalidEnergies(format!(
                "E_c = {ec}, E_d = {ed} must be positive"
            )));
        }
        if ea.min(eb) <= ec.max(ed) {
            return Err(Error::InvalidEnergies(format!(
                "E_a = {ea}, E_b = {eb} must exceed E_c = {ec}, E_d = {ed}"
            )));
        }
        Ok(Self { ea, eb, ec, ed })
    }

    pub fn max(&self) -> f64 {
        self.ea.max(self.eb).max(self.ec).max(self.ed)
    }

    fn energies(&self) -> [f64; 4] {
        [self.ea, self.eb, self.ec, self.ed]
    }
}

/// Both constructions of `H_rs` on the Fock space.
#[derive(Debug, Clone)]
pub struct Hrs {
    /// `Σ E_x |x⟩⟨x|` over `x = a, b, c, d`.
    pub eigen_form: Operator,
    /// `−(E_a a†₀ᵣa†₁ᵣa₀ᵣa₁ᵣ + E_b a†₀ₛa†₁ₛa₀ₛa₁ₛ + E_c a†₀ᵣa†₀ₛa₀ᵣa₀ₛ + E_d a†₁ᵣa†₁ₛa₁ᵣa₁ₛ)`.
    pub second_quantized: Operator,
    /// Largest entry of their difference on the two-particle sector.
    pub sector_deviation: f64,
    /// Ascending eigenvalues on the two-particle sector.
    pub sector_spectrum: Vec<f64>,
    frame: Vec<StateVector>,
}

/// The six two-particle occupation states in basis order.
pub fn two_particle_frame() -> Vec<StateVector> {
    let basis = fock_basis();
    (0..16usize)
        .filter(|i| i.count_ones() == 2)
        .map(|i| StateVector::basis_state(basis.clone(), i).expect("in range"))
        .collect()
}

fn hermitian_spectrum(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn build_hrs(car: &CarOperators, named: &NamedStates, h: &FockHamiltonian) -> Result<Hrs> {
    let basis = car.basis().clone();
    let e = h.energies();
    let terms: Vec<(f64, &StateVector)> = ['a', 'b', 'c', 'd']
        .iter()
        .zip(e)
        .map(|(n, en)| (en, &named.get(*n).fock))
        .collect();
    let eigen_form = Operator::spectral_sum(basis.clone(), &terms)?;

    let quartic = |(s1, l1): (u8, Site), (s2, l2): (u8, Site)| -> Result<Operator> {
        car.create(s1, l1)
            .compose(car.create(s2, l2))?
            .compose(car.annihilate(s1, l1))?
            .compose(car.annihilate(s2, l2))
    };
    let pairs = [
        ((0, Site::R), (1, Site::R)),
        ((0, Site::S), (1, Site::S)),
        ((0, Site::R), (0, Site::S)),
        ((1, Site::R), (1, Site::S)),
    ];
    let mut m = DMatrix::from_element(16, 16, C64::new(0.0, 0.0));
    for (en, (x, y)) in e.iter().zip(pairs) {
        m -= quartic(x, y)?.matrix() * C64::new(*en, 0.0);
    }
    let second_quantized = Operator::new(basis, m)?;

    let frame = two_particle_frame();
    let a = eigen_form.compress(&frame)?;
    let b = second_quantized.compress(&frame)?;
    let sector_deviation = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if sector_deviation > CONSTRUCTION_TOL {
        return Err(Error::ConstructionMismatch {
            what: "H_rs forms".into(),
            deviation: sector_deviation,
        });
    }
    let (sector_spectrum, _) = hermitian_spectrum(&b);
    Ok(Hrs {
        eigen_form,
        second_quantized,
        sector_deviation,
        sector_spectrum,
        frame,
    })
}

impl Hrs {
    /// Orthonormal Fock vectors spanning the two-particle null space of the
    /// second-quantized form, eigenvalues below `tol`.
    pub fn null_space(&self, tol: f64) -> Result<Vec<StateVector>> {
        let m = self.second_quantized.compress(&self.frame)?;
        let (values, vectors) = hermitian_spectrum(&m);
        let basis = self.second_quantized.basis().clone();
        Ok(values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() <= tol)
            .map(|(k, _)| {
                let mut v = DVector::from_element(16, C64::new(0.0, 0.0));
                for (j, f) in self.frame.iter().enumerate() {
                    v += f.amplitudes() * vectors[(j, k)];
                }
                StateVector::from_vector(basis.clone(), v).expect("16 entries")
            })
            .collect())
    }
}

/// Largest distance from `x` to the span of the orthonormal `frame`.
fn span_residual(frame: &[StateVector], x: &StateVector) -> f64 {
    let mut v = x.amplitudes().clone();
    for e in frame {
        let c = e.amplitudes().dotc(&v);
        v -= e.amplitudes() * c;
    }
    v.norm()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AntisymmetrizerReport {
    /// `max ‖A₁₂x − x‖` over the six named states.
    pub named_defect: f64,
    /// Same over `|00⟩_rs, |01⟩_rs, |10⟩_rs, |11⟩_rs`.
    pub qubit_defect: f64,
    /// `max ‖P₁₂x − x‖` over the symmetric `|00⟩, |11⟩` of one particle per site.
    pub symmetric_defect: f64,
    /// The symmetric states carry the same qubit notation as `|c⟩` and `|d⟩`.
    pub symmetric_share_notation: bool,
    /// Overlaps `⟨x|A₁₂|0⟩₁|1⟩₂|r⟩₁|s⟩₂` with each named state `x`.
    pub product_overlaps: Vec<(char, f64)>,
}

impl AntisymmetrizerReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.named_defect <= tol
            && self.qubit_defect <= tol
            && self.symmetric_defect <= tol
            && self.symmetric_share_notation
    }
}

fn particle_exchange_pairs() -> [(&'static str, &'static str); 2] {
    [("chi1", "chi2"), ("lambda1", "lambda2")]
}

pub fn antisymmetrizer_check(named: &NamedStates) -> Result<AntisymmetrizerReport> {
    let basis = first_quantized_basis();
    let a12 = antisymmetrizer(basis.clone(), &particle_exchange_pairs())?;
    let p12 = exchange_operator(basis, &particle_exchange_pairs())?;
    let fixes = |x: &StateVector| -> Result<f64> { a12.apply(x)?.distance(x) };
    let mut named_defect: f64 = 0.0;
    for s in &named.states {
        named_defect = named_defect.max(fixes(&s.first_quantized)?);
    }
    let mut qubit_defect: f64 = 0.0;
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        qubit_defect = qubit_defect.max(fixes(&qubit_state_first_quantized(a, b))?);
    }
    let h = FRAC_1_SQRT_2;
    let sym = [
        (fq_state(&[(h, [0, 0, 0, 1]), (h, [0, 0, 1, 0])]), 'c'),
        (fq_state(&[(h, [1, 1, 0, 1]), (h, [1, 1, 1, 0])]), 'd'),
    ];
    let mut symmetric_defect: f64 = 0.0;
    let mut share = true;
    let notation = |x: &StateVector| -> Vec<Option<(u8, u8)>> {
        (0..16)
            .filter(|&i| x.amplitude(i).norm() > 1e-12)
            .map(qubit_notation)
            .collect()
    };
    for (s, partner) in &sym {
        symmetric_defect = symmetric_defect.max(p12.apply(s)?.distance(s)?);
        let mine = notation(s);
        let theirs = notation(&named.get(*partner).first_quantized);
        share &= mine.iter().all(|n| n.is_some() && Some(n) == theirs.first());
        share &= theirs.iter().all(|n| Some(n) == mine.first());
    }
    let product = fq_state(&[(1.0, [0, 1, 0, 1])]);
    let projected = a12.apply(&product)?;
    let product_overlaps = named
        .states
        .iter()
        .map(|s| Ok((s.name, s.first_quantized.inner(&projected)?.re)))
        .collect::<Result<_>>()?;
    Ok(AntisymmetrizerReport {
        named_defect,
        qubit_defect,
        symmetric_defect,
        symmetric_share_notation: share,
        product_overlaps,
    })
}

/// Result of driving site r under antisymmetry and zero Connection energy.
#[derive(Debug, Clone)]
pub struct InducedEvolution {
    pub outcome: EvolutionOutcome,
    /// `⟨ξ⟩ = ⟨Ψ|H_rs|Ψ⟩` per step.
    pub energies: Vec<f64>,
    /// Per-step distance to `cos(θ+φ)|01⟩_rs + sin(θ+φ)|10⟩_rs`.
    pub deviations: Vec<f64>,
    /// Dimension of the antisymmetric zero-energy subspace.
    pub ground_rank: usize,
}

impl InducedEvolution {
    pub fn max_energy(&self) -> f64 {
        self.energies.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// `cos(θ+φ)|01⟩_rs + sin(θ+φ)|10⟩_rs` in first quantization.
pub fn embedded_connection_state(theta: f64, phi: f64) -> StateVector {
    let a = theta + phi;
    let v = qubit_state_first_quantized(0, 1).amplitudes() * C64::new(a.cos(), 0.0)
        + qubit_state_first_quantized(1, 0).amplitudes() * C64::new(a.sin(), 0.0);
    StateVector::from_vector(first_quantized_basis(), v).expect("16 entries")
}

/// `Σ |χ_r χ_s⟩_rs`: amplitudes are real nonnegative in qubit notation.
fn qubit_frame_anchor() -> StateVector {
    let mut v = DVector::from_element(16, C64::new(0.0, 0.0));
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        v += qubit_state_first_quantized(a, b).amplitudes();
    }
    StateVector::from_vector(first_quantized_basis(), v).expect("16 entries")
}

/// `H_rs` in first quantization, from the named states.
pub fn hrs_first_quantized(named: &NamedStates, h: &FockHamiltonian) -> Result<Operator> {
    let terms: Vec<(f64, &StateVector)> = ['a', 'b', 'c', 'd']
        .iter()
        .zip(h.energies())
        .map(|(n, e)| (e, &named.get(*n).first_quantized))
        .collect();
    Operator::spectral_sum(first_quantized_basis(), &terms)
}

/// Evolves `cos θ|01⟩_rs + sin θ|10⟩_rs` with `A₁₂` enforced, the r-spin
/// diagonal driven to `(cos², sin²)(θ+φ)`, and `⟨ξ⟩` minimized by restricting
/// to the zero-energy subspace of `H_rs` inside the antisymmetric space.
pub fn induced_connection_evolution(schedule: &RotationSchedule, h: &FockHamiltonian) -> Result<InducedEvolution> {
    let car = car_operators();
    let named = named_states(&car)?;
    let basis = first_quantized_basis();
    let a12 = antisymmetrizer(basis.clone(), &particle_exchange_pairs())?;
    let hfq = hrs_first_quantized(&named, h)?;

    let frame = a12.span().to_vec();
    let compressed = hfq.compress(&frame)?;
    let (values, vectors) = hermitian_spectrum(&compressed);
    let tol = 1e-12 * h.max();
    let ground: Vec<StateVector> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= tol)
        .map(|(k, _)| {
            let mut v = DVector::from_element(16, C64::new(0.0, 0.0));
            for (j, f) in frame.iter().enumerate() {
                v += f.amplitudes() * vectors[(j, k)];
            }
            StateVector::from_vector(basis.clone(), v).expect("16 entries")
        })
        .collect();
    let ground_rank = ground.len();
    let ground_projector = Projector::from_span(&ground)?;

    let labels = (0..16).map(r_spin).collect();
    let marginal = MarginalSchedule::with_labels(
        "r",
        labels,
        2,
        crate::evolver::MarginalKind::Driven,
        schedule.rotated_diagonals(0.0),
    )?;
    let initial = embedded_connection_state(schedule.theta, 0.0);
    let system = ConstraintSystem::new(
        vec![a12, ground_projector],
        vec![marginal],
        initial,
        schedule.steps,
        schedule.dphi(),
        SolverConfig::default(),
    )?
    .with_phase_anchor(qubit_frame_anchor())?;
    let outcome = evolve(&system);
    let mut energies = Vec::new();
    let mut deviations = Vec::new();
    for rec in &outcome.trajectory.records {
        energies.push(hfq.expectation(&rec.state)?.re);
        deviations.push(
            rec.state
                .distance(&embedded_connection_state(schedule.theta, rec.phi))?,
        );
    }
    Ok(InducedEvolution {
        outcome,
        energies,
        deviations,
        ground_rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Character {
    /// Symmetric spatial part.
    Singlet,
    /// Antisymmetric spatial part.
    Triplet,
}

/// `|e^{ik_A x₁} e^{ik_B x₂} ± e^{ik_A x₂} e^{ik_B x₁}|²`, unnormalized.
pub fn spatial_statistics_density(k_a: f64, k_b: f64, x1: f64, x2: f64, character: Character) -> f64 {
    let w = |p: f64| Complex64::from_polar(1.0, p);
    let direct = w(k_a * x1) * w(k_b * x2);
    let swapped = w(k_a * x2) * w(k_b * x1);
    match character {
        Character::Singlet => (direct + swapped).norm_sqr(),
        Character::Triplet => (direct - swapped).norm_sqr(),
    }
}

/// `4cos²(kx/2)` or `4sin²(kx/2)` with `k = k_A − k_B`, `x = x₁ − x₂`.
pub fn reduced_density(k: f64, x: f64, character: Character) -> f64 {
    let half = 0.5 * k * x;
    match character {
        Character::Singlet => 4.0 * half.cos().powi(2),
        Character::Triplet => 4.0 * half.sin().powi(2),
    }
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Every invariant of the two-fermion model plus the induced evolution under
/// `schedule`. Construction mismatches are reported as failed checks.
pub fn verification_suite(h: &FockHamiltonian, schedule: &RotationSchedule) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let car = car_operators();
    let report = car.check();
    checks.push(Check::at_most("car_identities", report.max_defect, 1e-14));

    let named = match named_states(&car) {
        Ok(n) => n,
        Err(Error::ConstructionMismatch { deviation, .. }) => {
            checks.push(Check::at_most(
                "named_states_dual_construction",
                deviation,
                CONSTRUCTION_TOL,
            ));
            return Ok(checks);
        }
        Err(e) => return Err(e),
    };
    checks.push(Check::at_most(
        "named_states_dual_construction",
        named.deviation,
        CONSTRUCTION_TOL,
    ));
    checks.push(Check::at_most(
        "named_states_orthonormal",
        named.orthonormality_defect(),
        CONSTRUCTION_TOL,
    ));

    let hrs = match build_hrs(&car, &named, h) {
        Ok(x) => x,
        Err(Error::ConstructionMismatch { deviation, .. }) => {
            checks.push(Check::at_most("hrs_forms_agree", deviation, CONSTRUCTION_TOL));
            return Ok(checks);
        }
        Err(e) => return Err(e),
    };
    checks.push(Check::at_most(
        "hrs_forms_agree",
        hrs.sector_deviation,
        CONSTRUCTION_TOL,
    ));
    let mut expected = vec![h.ea, h.eb, h.ec, h.ed, 0.0, 0.0];
    expected.sort_by(f64::total_cmp);
    let spectrum_err = hrs
        .sector_spectrum
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("hrs_two_particle_spectrum", spectrum_err, 1e-10));
    let null = hrs.null_space(1e-12 * h.max())?;
    checks.push(Check::at_most(
        "hrs_null_space_dimension",
        (null.len() as f64 - 2.0).abs(),
        0.0,
    ));
    let mut inside: f64 = 0.0;
    for x in [
        &named.get('e').fock,
        &named.get('f').fock,
        &qubit_state(&car, 0, 1),
        &qubit_state(&car, 1, 0),
    ] {
        inside = inside.max(span_residual(&null, x));
    }
    checks.push(Check::at_most("hrs_null_space_is_span_e_f", inside, 1e-12));

    let anti = antisymmetrizer_check(&named)?;
    checks.push(Check::at_most(
        "antisymmetrizer_fixes_named_states",
        anti.named_defect.max(anti.qubit_defect),
        1e-12,
    ));
    checks.push(Check::at_most(
        "symmetric_states_are_exchange_even",
        anti.symmetric_defect,
        1e-12,
    ));
    checks.push(Check::at_most(
        "symmetric_states_share_notation",
        if anti.symmetric_share_notation { 0.0 } else { 1.0 },
        0.0,
    ));

    let induced = induced_connection_evolution(schedule, h)?;
    checks.push(Check::at_most(
        "induced_evolution_feasible",
        if induced.outcome.is_feasible() { 0.0 } else { 1.0 },
        0.0,
    ));
    checks.push(Check::at_most(
        "induced_evolution_ground_rank",
        (induced.ground_rank as f64 - 2.0).abs(),
        0.0,
    ));
    checks.push(Check::at_most(
        "induced_vs_connection_deviation",
        induced.max_deviation(),
        1e-6,
    ));
    checks.push(Check::at_most(
        "induced_connection_energy",
        induced.max_energy(),
        1e-12 * h.max(),
    ));

    let (ka, kb) = (1.3, 0.4);
    checks.push(Check::at_most(
        "triplet_density_zero_at_coincidence",
        spatial_statistics_density(ka, kb, 0.7, 0.7, Character::Triplet),
        1e-12,
    ));
    let mut spread: f64 = 0.0;
    for k in 0..1000 {
        let x = -10.0 + 20.0 * k as f64 / 999.0;
        let total = spatial_statistics_density(ka, kb, x, 0.0, Character::Singlet)
            + spatial_statistics_density(ka, kb, x, 0.0, Character::Triplet);
        spread = spread.max((total - 4.0).abs());
    }
    checks.push(Check::at_most("singlet_plus_triplet_constant", spread, 1e-12));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn setup() -> (CarOperators, NamedStates) {
        let car = car_operators();
        let named = named_states(&car).unwrap();
        (car, named)
    }

    #[test]
    fn car_examples() {
        let car = car_operators();
        let a = car.create(0, Site::R);
        let n = a.matrix() * car.annihilate(0, Site::R).matrix() + car.annihilate(0, Site::R).matrix() * a.matrix();
        assert_eq!(n, DMatrix::identity(16, 16));
        let twice = a.apply(&a.apply(&car.vacuum()).unwrap()).unwrap();
        assert_eq!(twice.norm(), 0.0);
        let report = car.check();
        assert_eq!(report.identities, 64);
        assert!(report.max_defect <= 1e-14);
    }

    #[test]
    fn pair_creation_ordering() {
        let car = car_operators();
        let (r0, s0) = (MODES[0], MODES[2]);
        let c = car.pair(r0, s0);
        // |1010⟩ in occupation order 0r 1r 0s 1s.
        assert_eq!(c.amplitude(0b1010), C64::new(1.0, 0.0));
        let swapped = car.pair(s0, r0);
        assert_eq!(swapped.amplitude(0b1010), C64::new(-1.0, 0.0));
    }

    #[test]
    fn named_state_examples() {
        let (car, named) = setup();
        assert!(named.deviation <= 1e-12);
        assert!(named.orthonormality_defect() <= 1e-12);
        let e = &named.get('e').fock;
        let expect = (qubit_state(&car, 0, 1).amplitudes() + qubit_state(&car, 1, 0).amplitudes())
            * C64::new(FRAC_1_SQRT_2, 0.0);
        assert!((e.amplitudes() - expect).norm() < 1e-15);
        assert!(named.get('c').fock.distance(&qubit_state(&car, 0, 0)).unwrap() < 1e-15);
        assert_eq!(named.get('c').qubit, Some("|0⟩_r|0⟩_s"));
        assert_eq!(named.get('a').qubit, None);
    }

    #[test]
    fn hrs_examples() {
        let (car, named) = setup();
        let hrs = build_hrs(&car, &named, &FockHamiltonian::default()).unwrap();
        let expect = [0.0, 0.0, 1.0, 1.0, 3.0, 3.0];
        for (a, b) in hrs.sector_spectrum.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10);
        }
        for x in ['e', 'f'] {
            let v = hrs.second_quantized.apply(&named.get(x).fock).unwrap();
            assert!(v.norm() < 1e-14);
        }
        let c = &named.get('c').fock;
        assert!((hrs.second_quantized.expectation(c).unwrap().re - 1.0).abs() < 1e-14);
        let null = hrs.null_space(1e-12).unwrap();
        assert_eq!(null.len(), 2);
        assert!(span_residual(&null, &qubit_state(&car, 0, 1)) < 1e-12);
    }

    #[test]
    fn hrs_forms_track_energies() {
        let (car, named) = setup();
        let h = FockHamiltonian::new(5.0, 4.0, 2.0, 1.5).unwrap();
        let hrs = build_hrs(&car, &named, &h).unwrap();
        let expect = [0.0, 0.0, 1.5, 2.0, 4.0, 5.0];
        for (a, b) in hrs.sector_spectrum.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_validation() {
        assert!(FockHamiltonian::new(1.0, 3.0, 2.0, 1.0).is_err());
        assert!(FockHamiltonian::new(3.0, 3.0, 1.0, 0.0).is_err());
        assert!(FockHamiltonian::new(3.0, 3.0, 3.0, 1.0).is_err());
        assert!(FockHamiltonian::new(f64::NAN, 3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn antisymmetrizer_examples() {
        let (_, named) = setup();
        let rep = antisymmetrizer_check(&named).unwrap();
        assert!(rep.passes(1e-12), "{rep:?}");
        // A₁₂|0⟩₁|1⟩₂|r⟩₁|s⟩₂ = ½|01rs⟩ − ½|10sr⟩ = |01⟩_rs/√2, which lies
        // evenly on |e⟩ and |f⟩.
        for (name, overlap) in &rep.product_overlaps {
            let want = if matches!(name, 'e' | 'f') { 0.5 } else { 0.0 };
            assert!((overlap - want).abs() < 1e-15, "{name}: {overlap}");
        }
    }

    #[test]
    fn induced_evolution_theta_zero() {
        let sched = RotationSchedule::unit_rate(0.0, FRAC_PI_2, 200).unwrap();
        let out = induced_connection_evolution(&sched, &FockHamiltonian::default()).unwrap();
        assert!(out.outcome.is_feasible());
        assert_eq!(out.ground_rank, 2);
        assert!(out.max_deviation() < 1e-9);
        assert!(out.max_energy() <= 3e-12);
        let last = &out.outcome.final_state;
        assert!(last.distance(&qubit_state_first_quantized(1, 0)).unwrap() < 1e-9);
    }

    #[test]
    fn zero_length_schedule_returns_initial_state() {
        let sched = RotationSchedule::unit_rate(0.4, 0.0, 5).unwrap();
        let out = induced_connection_evolution(&sched, &FockHamiltonian::default()).unwrap();
        let init = embedded_connection_state(0.4, 0.0);
        for rec in &out.outcome.trajectory.records {
            assert!(rec.state.distance(&init).unwrap() < 1e-14);
        }
    }

    #[test]
    fn density_examples() {
        let s = spatial_statistics_density(1.0, 0.2, 0.5, 0.5, Character::Singlet);
        let t = spatial_statistics_density(1.0, 0.2, 0.5, 0.5, Character::Triplet);
        assert!((s - 4.0).abs() < 1e-14 && t.abs() < 1e-14);
        for x in [-3.0, 0.1, 2.5] {
            assert!((spatial_statistics_density(0.7, 0.7, x, 0.0, Character::Singlet) - 4.0).abs() < 1e-13);
            assert!(spatial_statistics_density(0.7, 0.7, x, 0.0, Character::Triplet).abs() < 1e-13);
            for c in [Character::Singlet, Character::Triplet] {
                let d = spatial_statistics_density(1.1, 0.3, x, 0.4, c);
                assert!((d - reduced_density(0.8, x - 0.4, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn suite_passes_with_defaults() {
        let sched = RotationSchedule::unit_rate(0.0, FRAC_PI_2, 100).unwrap();
        let checks = verification_suite(&FockHamiltonian::default(), &sched).unwrap();
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
