//! Dense linear algebra over labeled tensor-product spaces.
//!
//! A [`BasisLabel`] is an ordered list of [`Subsystem`]s. Basis states are
//! ordered lexicographically: the first subsystem is the most significant digit
//! and each subsystem's levels keep their declaration order. That ordering is
//! fixed, so amplitude vectors written to disk are reproducible.
//!
//! A subsystem may carry *nodes*: named Boolean values decoded from each level.
//! A qubit `r` is a subsystem with the single node `r`; a gate subspace is a
//! subsystem whose levels are the admissible rows of the gate table, each row
//! assigning a bit to every gate node.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

/// Tolerance on unit norm after [`StateVector::normalize`].
pub const NORM_TOL: f64 = 1e-12;
/// Below this norm a projected state counts as annihilated.
pub const NULL_TOL: f64 = 1e-12;
/// Gram–Schmidt residuals below this are treated as linearly dependent.
pub const DROP_TOL: f64 = 1e-10;
/// Tolerance for the Hermitian flag and projector identities.
pub const OPERATOR_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// One tensor factor of a [`BasisLabel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    name: String,
    levels: Vec<String>,
    nodes: Vec<String>,
    node_values: Vec<Vec<u8>>,
}

impl Subsystem {
    /// A qubit whose single node shares the subsystem name.
    pub fn qubit(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            levels: vec!["0".into(), "1".into()],
            nodes: vec![name.clone()],
            node_values: vec![vec![0], vec![1]],
            name,
        }
    }

    /// A subsystem with named levels and no Boolean nodes (e.g. a site label).
    pub fn labeled(name: impl Into<String>, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
            nodes: Vec::new(),
            node_values: vec![Vec::new(); levels.len()],
        }
    }

    /// A subsystem whose levels are rows of node bits, as used for gate subspaces.
    /// Level names are the concatenated bits of each row.
    pub fn with_nodes(name: impl Into<String>, nodes: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        for row in &rows {
            if row.len() != nodes.len() {
                return Err(Error::DimensionMismatch {
                    expected: nodes.len(),
                    got: row.len(),
                });
            }
        }
        let levels = rows
            .iter()
            .map(|row| row.iter().map(|b| char::from(b'0' + b)).collect())
            .collect();
        Ok(Self {
            name: name.into(),
            levels,
            nodes,
            node_values: rows,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Bits of every node at `level`.
    pub fn row(&self, level: usize) -> &[u8] {
        &self.node_values[level]
    }
}

/// Ordered tensor-product basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisLabel {
    subsystems: Vec<Subsystem>,
    strides: Vec<usize>,
    dim: usize,
    node_index: BTreeMap<String, (usize, usize)>,
}

impl BasisLabel {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        let mut names = std::collections::BTreeSet::new();
        let mut node_index = BTreeMap::new();
        for (k, sys) in subsystems.iter().enumerate() {
            if sys.dim() == 0 {
                return Err(Error::DimensionMismatch { expected: 1, got: 0 });
            }
            if !names.insert(sys.name.clone()) {
                return Err(Error::DuplicateSubsystem(sys.name.clone()));
            }
            for (pos, node) in sys.nodes.iter().enumerate() {
                if node_index.insert(node.clone(), (k, pos)).is_some() {
                    return Err(Error::DuplicateNode(node.clone()));
                }
            }
        }
        let mut strides = vec![1; subsystems.len()];
        let mut dim = 1usize;
        for k in (0..subsystems.len()).rev() {
            strides[k] = dim;
            dim *= subsystems[k].dim();
        }
        Ok(Self {
            subsystems,
            strides,
            dim,
            node_index,
        })
    }

    /// Qubits named in order.
    pub fn qubits(names: &[&str]) -> Result<Self> {
        Self::new(names.iter().map(|n| Subsystem::qubit(*n)).collect())
    }

    /// The one-dimensional basis of an empty tensor product.
    pub fn trivial() -> Self {
        Self::new(Vec::new()).expect("empty basis is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn subsystem_index(&self, name: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSubsystem(name.to_string()))
    }

    pub fn has_node(&self, node: &str) -> bool {
        self.node_index.contains_key(node)
    }

    /// All node names, sorted.
    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.node_index.keys().map(String::as_str)
    }

    /// Level of subsystem `sys` in basis state `index`.
    pub fn level(&self, index: usize, sys: usize) -> usize {
        (index / self.strides[sys]) % self.subsystems[sys].dim()
    }

    pub fn levels(&self, index: usize) -> Vec<usize> {
        (0..self.subsystems.len()).map(|k| self.level(index, k)).collect()
    }

    pub fn index_of(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.subsystems.len() {
            return Err(Error::DimensionMismatch {
                expected: self.subsystems.len(),
                got: levels.len(),
            });
        }
        let mut index = 0;
        for (k, &l) in levels.iter().enumerate() {
            if l >= self.subsystems[k].dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.subsystems[k].dim(),
                    got: l,
                });
            }
            index += l * self.strides[k];
        }
        Ok(index)
    }

    /// Value of Boolean node `node` in basis state `index`.
    pub fn node_value(&self, index: usize, node: &str) -> Result<u8> {
        let &(sys, pos) = self
            .node_index
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        Ok(self.subsystems[sys].node_values[self.level(index, sys)][pos])
    }

    /// Node value for every basis state, in basis order.
    pub fn node_values(&self, node: &str) -> Result<Vec<u8>> {
        (0..self.dim).map(|i| self.node_value(i, node)).collect()
    }

    /// Ket notation such as `|0⟩_r|1⟩_s`.
    pub fn ket_label(&self, index: usize) -> String {
        self.subsystems
            .iter()
            .enumerate()
            .map(|(k, s)| format!("|{}⟩_{}", s.levels[self.level(index, k)], s.name))
            .collect()
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &BasisLabel) -> Result<BasisLabel> {
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        BasisLabel::new(subsystems)
    }

    fn select(&self, keep: &[usize]) -> BasisLabel {
        BasisLabel::new(keep.iter().map(|&k| self.subsystems[k].clone()).collect())
            .expect("subset of a valid basis is valid")
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.subsystems.iter().map(|s| s.name.as_str()).collect();
        write!(f, "H[{}] (dim {})", names.join(" ⊗ "), self.dim)
    }
}

fn same_basis(a: &Arc<BasisLabel>, b: &Arc<BasisLabel>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::BasisMismatch)
    }
}

/// Complex amplitude vector over a [`BasisLabel`].
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<BasisLabel>,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(basis: Arc<BasisLabel>, amplitudes: Vec<C64>) -> Result<Self> {
        Self::from_vector(basis, DVector::from_vec(amplitudes))
    }

    pub fn from_vector(basis: Arc<BasisLabel>, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn from_real(basis: Arc<BasisLabel>, amplitudes: &[f64]) -> Result<Self> {
        Self::new(basis, amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn zeros(basis: Arc<BasisLabel>) -> Self {
        let dim = basis.dim();
        Self {
            basis,
            amplitudes: DVector::from_element(dim, ZERO),
        }
    }

    pub fn basis_state(basis: Arc<BasisLabel>, index: usize) -> Result<Self> {
        if index >= basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: index,
            });
        }
        let mut state = Self::zeros(basis);
        state.amplitudes[index] = ONE;
        Ok(state)
    }

    pub fn basis(&self) -> &Arc<BasisLabel> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amplitudes[index]
    }

    pub fn into_vector(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// Returns `ψ / ‖ψ‖`; the factor applied is the renormalization constant k.
    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < NULL_TOL {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            basis: self.basis.clone(),
            amplitudes: self.amplitudes.unscale(norm),
        })
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        same_basis(&self.basis, &other.basis)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩|`.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        same_basis(&self.basis, &other.basis)?;
        Ok((&self.amplitudes - &other.amplitudes).norm())
    }

    /// `self ⊗ other` with the concatenated basis.
    pub fn tensor_product(&self, other: &StateVector) -> Result<StateVector> {
        let basis = Arc::new(self.basis.concat(&other.basis)?);
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        Ok(Self { basis, amplitudes })
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> Operator {
        let matrix = &self.amplitudes * self.amplitudes.adjoint();
        Operator {
            basis: self.basis.clone(),
            matrix,
            hermitian: true,
        }
    }

    /// Reduced density matrix on the subsystems named in `keep`. The kept
    /// subsystems appear in their original basis order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Operator> {
        let mut kept: Vec<usize> = keep
            .iter()
            .map(|name| self.basis.subsystem_index(name))
            .collect::<Result<_>>()?;
        kept.sort_unstable();
        kept.dedup();
        let traced: Vec<usize> = (0..self.basis.subsystems().len())
            .filter(|k| !kept.contains(k))
            .collect();
        let reduced = Arc::new(self.basis.select(&kept));
        let traced_basis = self.basis.select(&traced);

        let dk = reduced.dim();
        let dt = traced_basis.dim();
        // Column j of `block` holds the amplitudes with kept index j.
        let mut block = DMatrix::from_element(dt, dk, ZERO);
        for i in 0..self.dim() {
            let levels = self.basis.levels(i);
            let kj: Vec<usize> = kept.iter().map(|&k| levels[k]).collect();
            let tj: Vec<usize> = traced.iter().map(|&k| levels[k]).collect();
            let kr = reduced.index_of(&kj)?;
            let tr = traced_basis.index_of(&tj)?;
            block[(tr, kr)] = self.amplitudes[i];
        }
        // ρ[a, b] = Σ_t ψ(a, t) ψ*(b, t)
        let matrix = block.transpose() * block.map(|z| z.conj());
        Ok(Operator {
            basis: reduced,
            matrix,
            hermitian: true,
        })
    }

    /// Diagonal of the reduced density matrix of a Boolean node: `[P(0), P(1)]`.
    pub fn node_marginal(&self, node: &str) -> Result<[f64; 2]> {
        let values = self.basis.node_values(node)?;
        let mut out = [0.0; 2];
        for (a, v) in self.amplitudes.iter().zip(values) {
            out[v as usize] += a.norm_sqr();
        }
        Ok(out)
    }
}

/// Dense square operator over a [`BasisLabel`].
#[derive(Debug, Clone)]
pub struct Operator {
    basis: Arc<BasisLabel>,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl Operator {
    /// Wraps `matrix`; the Hermitian flag is set when `max|M − M†| ≤ 1e-12`.
    pub fn new(basis: Arc<BasisLabel>, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.nrows() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: matrix.nrows(),
            });
        }
        let hermitian = max_abs(&(&matrix - matrix.adjoint())) <= OPERATOR_TOL;
        Ok(Self {
            basis,
            matrix,
            hermitian,
        })
    }

    pub fn from_real(basis: Arc<BasisLabel>, rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut matrix = DMatrix::from_element(n, n, ZERO);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                matrix[(i, j)] = C64::new(x, 0.0);
            }
        }
        Self::new(basis, matrix)
    }

    pub fn identity(basis: Arc<BasisLabel>) -> Self {
        let n = basis.dim();
        Self {
            basis,
            matrix: DMatrix::identity(n, n),
            hermitian: true,
        }
    }

    pub fn zero(basis: Arc<BasisLabel>) -> Self {
        let n = basis.dim();
        Self {
            basis,
            matrix: DMatrix::from_element(n, n, ZERO),
            hermitian: true,
        }
    }

    pub fn from_diagonal(basis: Arc<BasisLabel>, diagonal: &[f64]) -> Result<Self> {
        if diagonal.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: diagonal.len(),
            });
        }
        let d = DVector::from_iterator(diagonal.len(), diagonal.iter().map(|&x| C64::new(x, 0.0)));
        Ok(Self {
            basis,
            matrix: DMatrix::from_diagonal(&d),
            hermitian: true,
        })
    }

    /// `Σ cᵢ |vᵢ⟩⟨vᵢ|`.
    pub fn spectral_sum(basis: Arc<BasisLabel>, terms: &[(f64, &StateVector)]) -> Result<Self> {
        let n = basis.dim();
        let mut matrix = DMatrix::from_element(n, n, ZERO);
        for (c, v) in terms {
            same_basis(&basis, v.basis())?;
            matrix += v.amplitudes() * v.amplitudes().adjoint() * C64::new(*c, 0.0);
        }
        Self::new(basis, matrix)
    }

    pub fn basis(&self) -> &Arc<BasisLabel> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Unnormalized `M|ψ⟩`.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        same_basis(&self.basis, state.basis())?;
        Ok(StateVector {
            basis: self.basis.clone(),
            amplitudes: &self.matrix * state.amplitudes(),
        })
    }

    /// `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        same_basis(&self.basis, &other.basis)?;
        Operator::new(self.basis.clone(), &self.matrix * &other.matrix)
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            basis: self.basis.clone(),
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, unitary: &Operator) -> Result<Operator> {
        same_basis(&self.basis, &unitary.basis)?;
        Operator::new(
            self.basis.clone(),
            &unitary.matrix * &self.matrix * unitary.matrix.adjoint(),
        )
    }

    pub fn kron(&self, other: &Operator) -> Result<Operator> {
        let basis = Arc::new(self.basis.concat(&other.basis)?);
        Operator::new(basis, self.matrix.kronecker(&other.matrix))
    }

    /// `max |[self, other]|` entrywise.
    pub fn commutator_norm(&self, other: &Operator) -> Result<f64> {
        same_basis(&self.basis, &other.basis)?;
        let ab = &self.matrix * &other.matrix;
        let ba = &other.matrix * &self.matrix;
        Ok(max_abs(&(ab - ba)))
    }

    pub fn max_abs_diff(&self, other: &Operator) -> Result<f64> {
        same_basis(&self.basis, &other.basis)?;
        Ok(max_abs(&(&self.matrix - &other.matrix)))
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// `⟨ψ|M|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> Result<C64> {
        same_basis(&self.basis, state.basis())?;
        Ok(state.amplitudes().dotc(&(&self.matrix * state.amplitudes())))
    }

    /// `max |M†M − 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n)))
    }

    /// Eigen-decomposition of the Hermitian part, eigenvalues ascending.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, Vec<StateVector>) {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = order
            .iter()
            .map(|&k| StateVector {
                basis: self.basis.clone(),
                amplitudes: eig.eigenvectors.column(k).into_owned(),
            })
            .collect();
        (values, vectors)
    }

    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        self.hermitian_eigen().0
    }

    /// Restriction `V† M V` to the span of the given orthonormal vectors.
    pub fn compress(&self, frame: &[StateVector]) -> Result<DMatrix<C64>> {
        let k = frame.len();
        let mut out = DMatrix::from_element(k, k, ZERO);
        for (j, vj) in frame.iter().enumerate() {
            let mv = self.apply(vj)?;
            for (i, vi) in frame.iter().enumerate() {
                out[(i, j)] = vi.inner(&mv)?;
            }
        }
        Ok(out)
    }

    /// Embeds a one-subsystem operator on `target` into `full`, identity elsewhere.
    pub fn embed(&self, full: Arc<BasisLabel>, target: &str) -> Result<Operator> {
        if self.basis.subsystems().len() != 1 {
            return Err(Error::InvalidSystem(
                "only single-subsystem operators can be embedded".into(),
            ));
        }
        let k = full.subsystem_index(target)?;
        if full.subsystems()[k].dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: full.subsystems()[k].dim(),
                got: self.dim(),
            });
        }
        let n = full.dim();
        let mut matrix = DMatrix::from_element(n, n, ZERO);
        for col in 0..n {
            let mut levels = full.levels(col);
            let from = levels[k];
            for to in 0..self.dim() {
                let c = self.matrix[(to, from)];
                if c != ZERO {
                    levels[k] = to;
                    let row = full.index_of(&levels)?;
                    matrix[(row, col)] += c;
                }
            }
        }
        Operator::new(full, matrix)
    }
}

/// Hermitian idempotent operator together with an orthonormal spanning set.
#[derive(Debug, Clone)]
pub struct Projector {
    op: Operator,
    span: Vec<StateVector>,
    /// Set when the projector is diagonal in the basis; `true` marks kept states.
    support: Option<Vec<bool>>,
}

impl Projector {
    /// Orthogonal projector onto the span of `vectors`, orthonormalized by
    /// modified Gram–Schmidt with drop tolerance [`DROP_TOL`].
    pub fn from_span(vectors: &[StateVector]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::ZeroVector)?;
        let basis = first.basis().clone();
        let mut frame: Vec<DVector<C64>> = Vec::new();
        for v in vectors {
            if v.dim() != basis.dim() {
                return Err(Error::DimensionMismatch {
                    expected: basis.dim(),
                    got: v.dim(),
                });
            }
            same_basis(&basis, v.basis())?;
            let norm = v.norm();
            if norm < NULL_TOL {
                return Err(Error::ZeroVector);
            }
            let mut w = v.amplitudes().unscale(norm);
            for e in &frame {
                let c = e.dotc(&w);
                w -= e * c;
            }
            let r = w.norm();
            if r > DROP_TOL {
                frame.push(w.unscale(r));
            }
        }
        let span: Vec<StateVector> = frame
            .into_iter()
            .map(|amplitudes| StateVector {
                basis: basis.clone(),
                amplitudes,
            })
            .collect();
        Ok(Self::from_orthonormal(basis, span))
    }

    /// Projector onto basis states `indices`; diagonal by construction.
    pub fn from_basis_states(basis: Arc<BasisLabel>, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = basis.dim();
        let mut support = vec![false; n];
        for i in indices {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i });
            }
            support[i] = true;
        }
        let span = support
            .iter()
            .enumerate()
            .filter(|(_, &keep)| keep)
            .map(|(i, _)| StateVector::basis_state(basis.clone(), i))
            .collect::<Result<Vec<_>>>()?;
        let diagonal: Vec<f64> = support.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        Ok(Self {
            op: Operator::from_diagonal(basis, &diagonal)?,
            span,
            support: Some(support),
        })
    }

    pub fn identity(basis: Arc<BasisLabel>) -> Self {
        let n = basis.dim();
        Self::from_basis_states(basis, 0..n).expect("all indices are in range")
    }

    /// Wraps an operator already known to be an orthogonal projector.
    pub fn from_operator(op: Operator) -> Result<Self> {
        let sq = op.compose(&op)?;
        let idem = sq.max_abs_diff(&op)?;
        let herm = max_abs(&(op.matrix() - op.matrix().adjoint()));
        if idem > 1e-10 || herm > 1e-10 {
            return Err(Error::InvalidSystem(format!(
                "operator is not a projector (|P²−P| = {idem:e}, |P−P†| = {herm:e})"
            )));
        }
        let (values, vectors) = op.hermitian_eigen();
        let span: Vec<StateVector> = values
            .into_iter()
            .zip(vectors)
            .filter(|(v, _)| *v > 0.5)
            .map(|(_, s)| s)
            .collect();
        let support = diagonal_support(op.matrix());
        Ok(Self { op, span, support })
    }

    fn from_orthonormal(basis: Arc<BasisLabel>, span: Vec<StateVector>) -> Self {
        let n = basis.dim();
        let mut matrix = DMatrix::from_element(n, n, ZERO);
        for e in &span {
            matrix += e.amplitudes() * e.amplitudes().adjoint();
        }
        let support = diagonal_support(&matrix);
        Self {
            op: Operator {
                basis,
                matrix,
                hermitian: true,
            },
            span,
            support,
        }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn basis(&self) -> &Arc<BasisLabel> {
        self.op.basis()
    }

    pub fn span(&self) -> &[StateVector] {
        &self.span
    }

    pub fn rank(&self) -> usize {
        self.span.len()
    }

    pub fn support(&self) -> Option<&[bool]> {
        self.support.as_deref()
    }

    /// `P·v` on a raw amplitude vector.
    pub fn apply_vector(&self, v: &DVector<C64>) -> DVector<C64> {
        match &self.support {
            Some(mask) => DVector::from_iterator(v.len(), v.iter().zip(mask).map(|(&a, &k)| if k { a } else { ZERO })),
            None => self.op.matrix() * v,
        }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        same_basis(self.basis(), state.basis())?;
        Ok(StateVector {
            basis: state.basis().clone(),
            amplitudes: self.apply_vector(state.amplitudes()),
        })
    }

    /// `Pψ / ‖Pψ‖`, or `None` when `‖Pψ‖ < 1e-12`.
    pub fn apply_and_renormalize(&self, state: &StateVector) -> Result<Option<StateVector>> {
        let projected = self.apply(state)?;
        if projected.norm() < NULL_TOL {
            Ok(None)
        } else {
            projected.normalize().map(Some)
        }
    }

    /// `‖Pψ − ψ‖`.
    pub fn residual(&self, state: &StateVector) -> Result<f64> {
        self.apply(state)?.distance(state)
    }

    pub fn idempotency_defect(&self) -> f64 {
        let m = self.op.matrix();
        max_abs(&(m * m - m))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.op.matrix();
        max_abs(&(m - m.adjoint()))
    }

    pub fn commutator_norm(&self, other: &Projector) -> Result<f64> {
        self.op.commutator_norm(&other.op)
    }
}

fn diagonal_support(m: &DMatrix<C64>) -> Option<Vec<bool>> {
    let n = m.nrows();
    let mut support = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)].norm() > 1e-14 {
                return None;
            }
        }
        let d = m[(i, i)];
        if (d - ONE).norm() <= OPERATOR_TOL {
            support.push(true);
        } else if d.norm() <= OPERATOR_TOL {
            support.push(false);
        } else {
            return None;
        }
    }
    Some(support)
}

/// Operator exchanging the levels of equally sized subsystems, pair by pair.
/// With `pairs = [(χ1, χ2), (λ1, λ2)]` this is the particle transposition P₁₂.
pub fn exchange_operator(basis: Arc<BasisLabel>, pairs: &[(&str, &str)]) -> Result<Operator> {
    let idx: Vec<(usize, usize)> = pairs
        .iter()
        .map(|(a, b)| Ok((basis.subsystem_index(a)?, basis.subsystem_index(b)?)))
        .collect::<Result<_>>()?;
    for &(a, b) in &idx {
        let (da, db) = (basis.subsystems()[a].dim(), basis.subsystems()[b].dim());
        if da != db {
            return Err(Error::DimensionMismatch { expected: da, got: db });
        }
    }
    let n = basis.dim();
    let mut matrix = DMatrix::from_element(n, n, ZERO);
    for col in 0..n {
        let mut levels = basis.levels(col);
        for &(a, b) in &idx {
            levels.swap(a, b);
        }
        matrix[(basis.index_of(&levels)?, col)] = ONE;
    }
    Operator::new(basis, matrix)
}

/// `½(1 + P₁₂)`, the bosonic symmetrizer.
pub fn symmetrizer(basis: Arc<BasisLabel>, pairs: &[(&str, &str)]) -> Result<Projector> {
    half_sum(basis, pairs, 1.0)
}

/// `½(1 − P₁₂)`, the fermionic antisymmetrizer.
pub fn antisymmetrizer(basis: Arc<BasisLabel>, pairs: &[(&str, &str)]) -> Result<Projector> {
    half_sum(basis, pairs, -1.0)
}

fn half_sum(basis: Arc<BasisLabel>, pairs: &[(&str, &str)], sign: f64) -> Result<Projector> {
    let p = exchange_operator(basis.clone(), pairs)?;
    let n = basis.dim();
    let matrix = (DMatrix::<C64>::identity(n, n) + p.matrix() * C64::new(sign, 0.0)) * C64::new(0.5, 0.0);
    Projector::from_operator(Operator::new(basis, matrix)?)
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
