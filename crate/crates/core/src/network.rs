//! Reversible Boolean networks laid out in space.
//!
//! Every gate contributes one subsystem whose basis states are the admissible
//! rows of its truth table, so any state of the network space satisfies the
//! gates by construction. Wires are Connections (`A_rs` projectors) between
//! two nodes. Satisfiability is decided by preparing a classically consistent
//! basis state and rotating every mismatched output constraint into place
//! while the wires and the pinned inputs are held.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use log::{debug, info};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::connection::{ars_projector, ConnectionSpec};
use crate::error::{Error, Result};
use crate::evolver::{evolve, ConstraintSystem, EvolutionStatus, MarginalSchedule, SolverConfig, Trajectory};
use crate::hilbert::{BasisLabel, Projector, StateVector, Subsystem};

/// Free-input cap of the exhaustive oracle.
pub const ORACLE_MAX_FREE: usize = 24;
/// A final state with a basis component of at least this weight reads out as
/// that basis state.
pub const READOUT_TOL: f64 = 1e-6;

/// A reversible gate: a bijection between input and output bit tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    name: String,
    kind: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    /// Full rows `inputs ++ outputs`, sorted by input tuple.
    rows: Vec<Vec<u8>>,
}

fn bits(value: usize, width: usize) -> Vec<u8> {
    (0..width).rev().map(|k| ((value >> k) & 1) as u8).collect()
}

impl Gate {
    /// Validates a truth table given as full rows (`inputs ++ outputs`).
    pub fn new(
        name: impl Into<String>,
        kind: impl Into<String>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        rows: Vec<Vec<u8>>,
    ) -> Result<Self> {
        let name = name.into();
        let bad = |reason: String| Error::NotReversible {
            gate: name.clone(),
            reason,
        };
        let mut seen = BTreeSet::new();
        for n in inputs.iter().chain(&outputs) {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateNode(n.clone()));
            }
        }
        if inputs.len() != outputs.len() {
            return Err(bad(format!("{} inputs but {} outputs", inputs.len(), outputs.len())));
        }
        let k = inputs.len();
        let width = 2 * k;
        let mut by_input = BTreeMap::new();
        let mut images = BTreeSet::new();
        for row in rows {
            if row.len() != width {
                return Err(bad(format!("row of length {} (expected {width})", row.len())));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(bad("row entries must be bits".into()));
            }
            let (i, o) = row.split_at(k);
            if !images.insert(o.to_vec()) {
                return Err(bad(format!("output tuple {} appears twice", bitstring(o))));
            }
            if by_input.insert(i.to_vec(), row.clone()).is_some() {
                return Err(bad(format!("input tuple {} appears twice", bitstring(i))));
            }
        }
        if by_input.len() != 1 << k {
            return Err(bad(format!(
                "table covers {} of {} input tuples",
                by_input.len(),
                1 << k
            )));
        }
        Ok(Self {
            name,
            kind: kind.into(),
            inputs,
            outputs,
            rows: by_input.into_values().collect(),
        })
    }

    fn from_fn(
        name: &str,
        kind: &str,
        inputs: &[&str],
        outputs: &[&str],
        f: impl Fn(&[u8]) -> Vec<u8>,
    ) -> Result<Self> {
        let k = inputs.len();
        let rows = (0..1usize << k)
            .map(|v| {
                let mut row = bits(v, k);
                let out = f(&row);
                row.extend(out);
                row
            })
            .collect();
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self::new(name, kind, own(inputs), own(outputs), rows)
    }

    /// `(t, u) -> (t, t ⊕ u)`, table `{0000, 0101, 1011, 1110}` over `(t, u, v, r)`.
    pub fn cnot(name: &str, control: &str, target: &str, out_control: &str, out_target: &str) -> Result<Self> {
        Self::from_fn(name, "cnot", &[control, target], &[out_control, out_target], |i| {
            vec![i[0], i[0] ^ i[1]]
        })
    }

    pub fn not(name: &str, input: &str, output: &str) -> Result<Self> {
        Self::from_fn(name, "not", &[input], &[output], |i| vec![1 - i[0]])
    }

    /// `(a, b, c) -> (a, b, c ⊕ ab)`.
    pub fn toffoli(name: &str, inputs: [&str; 3], outputs: [&str; 3]) -> Result<Self> {
        Self::from_fn(name, "toffoli", &inputs, &outputs, |i| {
            vec![i[0], i[1], i[2] ^ (i[0] & i[1])]
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    /// Inputs followed by outputs.
    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.inputs.iter().chain(&self.outputs)
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn admits(&self, row: &[u8]) -> bool {
        self.rows.iter().any(|r| r == row)
    }

    fn row_with(&self, part: &[u8], outputs: bool) -> &[u8] {
        let k = self.inputs.len();
        self.rows
            .iter()
            .find(|r| if outputs { &r[k..] == part } else { &r[..k] == part })
            .expect("tables are bijective and total")
    }

    fn subsystem(&self) -> Result<Subsystem> {
        Subsystem::with_nodes(self.name.clone(), self.nodes().cloned().collect(), self.rows.clone())
    }
}

fn bitstring(b: &[u8]) -> String {
    b.iter().map(|&x| char::from(b'0' + x)).collect()
}

/// A NOT Connection between two nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Wire {
    pub r: String,
    pub s: String,
}

/// Node → bit map, total or partial.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Assignment(BTreeMap<String, u8>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: &str) -> Option<u8> {
        self.0.get(node).copied()
    }

    pub fn insert(&mut self, node: impl Into<String>, bit: u8) -> Option<u8> {
        self.0.insert(node.into(), bit)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u8)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn contains(&self, node: &str) -> bool {
        self.0.contains_key(node)
    }
}

impl<S: Into<String>> FromIterator<(S, u8)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, u8)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    gates: Vec<Gate>,
    wires: Vec<Wire>,
    dangling: Vec<String>,
    inputs: Vec<(String, u8)>,
    outputs: Vec<(String, u8)>,
}

impl Network {
    /// Wire endpoints that belong to no gate become dangling qubits.
    pub fn new(
        gates: Vec<Gate>,
        wires: Vec<Wire>,
        inputs: Vec<(String, u8)>,
        outputs: Vec<(String, u8)>,
    ) -> Result<Self> {
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        let mut gate_names = BTreeSet::new();
        for (g, gate) in gates.iter().enumerate() {
            if !gate_names.insert(gate.name()) {
                return Err(Error::DuplicateSubsystem(gate.name.clone()));
            }
            for n in gate.nodes() {
                if owner.insert(n, g).is_some() {
                    return Err(Error::DuplicateNode(n.clone()));
                }
            }
        }
        let mut dangling: Vec<String> = Vec::new();
        let mut wired = BTreeSet::new();
        for w in &wires {
            if w.r == w.s {
                return Err(Error::InvalidNetwork(format!("wire `{}`–`{}` is a loop", w.r, w.s)));
            }
            for n in [&w.r, &w.s] {
                if !wired.insert(n.as_str()) {
                    return Err(Error::InvalidNetwork(format!("node `{n}` is touched by two wires")));
                }
                if !owner.contains_key(n.as_str()) {
                    if gate_names.contains(n.as_str()) {
                        return Err(Error::DuplicateNode(n.clone()));
                    }
                    dangling.push(n.clone());
                }
            }
            if let (Some(a), Some(b)) = (owner.get(w.r.as_str()), owner.get(w.s.as_str())) {
                if a == b {
                    return Err(Error::InvalidNetwork(format!(
                        "wire `{}`–`{}` joins two nodes of gate `{}`",
                        w.r, w.s, gates[*a].name
                    )));
                }
            }
        }
        let mut constrained = BTreeSet::new();
        for (n, b) in inputs.iter().chain(&outputs) {
            if !owner.contains_key(n.as_str()) && !dangling.contains(n) {
                return Err(Error::UnknownNode(n.clone()));
            }
            if *b > 1 {
                return Err(Error::InvalidNetwork(format!("constraint on `{n}` is not a bit")));
            }
            if !constrained.insert(n.as_str()) {
                return Err(Error::InvalidNetwork(format!("node `{n}` is constrained twice")));
            }
        }
        Ok(Self {
            gates,
            wires,
            dangling,
            inputs,
            outputs,
        })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    pub fn dangling(&self) -> &[String] {
        &self.dangling
    }

    pub fn input_constraints(&self) -> &[(String, u8)] {
        &self.inputs
    }

    pub fn output_constraints(&self) -> &[(String, u8)] {
        &self.outputs
    }

    /// Gate nodes in declaration order, then dangling nodes.
    pub fn nodes(&self) -> Vec<&str> {
        self.gates
            .iter()
            .flat_map(|g| g.nodes())
            .chain(&self.dangling)
            .map(String::as_str)
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.gates.iter().map(|g| 2 * g.inputs.len()).sum::<usize>() + self.dangling.len()
    }

    fn has_node(&self, node: &str) -> bool {
        self.gates.iter().any(|g| g.nodes().any(|n| n == node)) || self.dangling.iter().any(|n| n == node)
    }

    /// Gate inputs and dangling nodes: the places where a value can be chosen.
    fn branch_nodes(&self) -> Vec<&str> {
        self.gates
            .iter()
            .flat_map(|g| g.inputs.iter())
            .chain(&self.dangling)
            .map(String::as_str)
            .collect()
    }

    fn gate_outputs(&self) -> BTreeSet<&str> {
        self.gates
            .iter()
            .flat_map(|g| g.outputs.iter().map(String::as_str))
            .collect()
    }

    fn partner(&self, node: &str) -> Option<&str> {
        self.wires.iter().find_map(|w| {
            if w.r == node {
                Some(w.s.as_str())
            } else if w.s == node {
                Some(w.r.as_str())
            } else {
                None
            }
        })
    }

    /// Inputs that are neither constrained nor fed by a wire from a gate output:
    /// one per independent choice in a feed-forward network.
    pub fn free_inputs(&self) -> Vec<&str> {
        let outputs = self.gate_outputs();
        let constrained: BTreeSet<&str> = self.inputs.iter().map(|(n, _)| n.as_str()).collect();
        let mut seen = BTreeSet::new();
        let mut free = Vec::new();
        for n in self.branch_nodes() {
            let partner = self.partner(n);
            if !seen.insert(n) {
                continue;
            }
            if let Some(p) = partner {
                seen.insert(p);
                if outputs.contains(p) || constrained.contains(p) {
                    continue;
                }
            }
            if !constrained.contains(n) {
                free.push(n);
            }
        }
        free
    }
}

/// Parses the line-oriented netlist format.
///
/// ```text
/// # comment
/// gate cnot t u -> v r
/// gate not a -> b
/// gate toffoli a b c -> x y z
/// gate table swap p q -> p2 q2 { 0000 0110 1001 1111 }
/// wire r s
/// in u = 1
/// out s = 1
/// ```
pub fn parse_netlist(text: &str) -> Result<Network> {
    let mut gates = Vec::new();
    let mut wires = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let lines: Vec<(usize, Vec<String>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("");
            let l = l
                .replace('{', " { ")
                .replace('}', " } ")
                .replace('=', " = ")
                .replace(',', " ");
            (i + 1, l.split_whitespace().map(str::to_string).collect())
        })
        .collect();
    let err = |line: usize, message: String| Error::Parse { line, message };
    let mut k = 0;
    while k < lines.len() {
        let (line, toks) = &lines[k];
        let line = *line;
        k += 1;
        let Some(head) = toks.first() else { continue };
        match head.as_str() {
            "gate" => {
                let kind = toks.get(1).ok_or_else(|| err(line, "missing gate kind".into()))?;
                let auto = format!("{kind}{}", gates.len());
                let (name, rest) = if kind == "table" {
                    let name = toks.get(2).ok_or_else(|| err(line, "missing table name".into()))?;
                    (name.clone(), &toks[3..])
                } else {
                    (auto, &toks[2..])
                };
                let mut rest: Vec<String> = rest.to_vec();
                let mut tuples = Vec::new();
                if kind == "table" {
                    let open = rest
                        .iter()
                        .position(|t| t == "{")
                        .ok_or_else(|| err(line, "table needs `{ ... }`".into()))?;
                    let mut body: Vec<String> = rest.split_off(open);
                    body.remove(0);
                    loop {
                        if let Some(close) = body.iter().position(|t| t == "}") {
                            if close + 1 != body.len() {
                                return Err(err(line, "text after `}`".into()));
                            }
                            body.truncate(close);
                            break;
                        }
                        if k >= lines.len() {
                            return Err(err(line, "unterminated table".into()));
                        }
                        body.extend(lines[k].1.iter().cloned());
                        k += 1;
                    }
                    tuples = body;
                }
                let arrow = rest
                    .iter()
                    .position(|t| t == "->")
                    .ok_or_else(|| err(line, "missing `->`".into()))?;
                let ins: Vec<&str> = rest[..arrow].iter().map(String::as_str).collect();
                let outs: Vec<&str> = rest[arrow + 1..].iter().map(String::as_str).collect();
                let arity = |n: usize, m: usize| {
                    if ins.len() != n || outs.len() != m {
                        Err(err(line, format!("`{kind}` takes {n} inputs and {m} outputs")))
                    } else {
                        Ok(())
                    }
                };
                let gate = match kind.as_str() {
                    "cnot" => {
                        arity(2, 2)?;
                        Gate::cnot(&name, ins[0], ins[1], outs[0], outs[1])?
                    }
                    "not" => {
                        arity(1, 1)?;
                        Gate::not(&name, ins[0], outs[0])?
                    }
                    "toffoli" => {
                        arity(3, 3)?;
                        Gate::toffoli(&name, [ins[0], ins[1], ins[2]], [outs[0], outs[1], outs[2]])?
                    }
                    "table" => {
                        let rows = tuples
                            .iter()
                            .map(|t| {
                                t.chars()
                                    .map(|c| match c {
                                        '0' => Ok(0),
                                        '1' => Ok(1),
                                        _ => Err(err(line, format!("bad tuple `{t}`"))),
                                    })
                                    .collect::<Result<Vec<u8>>>()
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
                        Gate::new(name, "table", own(&ins), own(&outs), rows)?
                    }
                    other => return Err(err(line, format!("unknown gate kind `{other}`"))),
                };
                gates.push(gate);
            }
            "wire" => {
                if toks.len() != 3 {
                    return Err(err(line, "expected `wire <r> <s>`".into()));
                }
                wires.push(Wire {
                    r: toks[1].clone(),
                    s: toks[2].clone(),
                });
            }
            "in" | "out" => {
                if toks.len() != 4 || toks[2] != "=" {
                    return Err(err(line, format!("expected `{head} <node> = <bit>`")));
                }
                let bit = match toks[3].as_str() {
                    "0" => 0,
                    "1" => 1,
                    b => return Err(err(line, format!("`{b}` is not a bit"))),
                };
                let target = if head == "in" { &mut inputs } else { &mut outputs };
                target.push((toks[1].clone(), bit));
            }
            other => return Err(err(line, format!("unknown statement `{other}`"))),
        }
    }
    Network::new(gates, wires, inputs, outputs)
}

/// Forward/backward gate application and wire NOT until nothing changes.
fn propagate(network: &Network, values: &mut BTreeMap<String, u8>) -> Result<()> {
    fn set(values: &mut BTreeMap<String, u8>, node: &str, bit: u8, changed: &mut bool) -> Result<()> {
        match values.get(node) {
            Some(&b) if b != bit => Err(Error::Inconsistent(node.to_string())),
            Some(_) => Ok(()),
            None => {
                values.insert(node.to_string(), bit);
                *changed = true;
                Ok(())
            }
        }
    }
    loop {
        let mut changed = false;
        for w in &network.wires {
            match (values.get(&w.r).copied(), values.get(&w.s).copied()) {
                (Some(a), Some(b)) if a == b => return Err(Error::Inconsistent(w.s.clone())),
                (Some(a), None) => set(values, &w.s, 1 - a, &mut changed)?,
                (None, Some(b)) => set(values, &w.r, 1 - b, &mut changed)?,
                _ => {}
            }
        }
        for g in &network.gates {
            let known = |values: &BTreeMap<String, u8>, ns: &[String]| -> Option<Vec<u8>> {
                ns.iter().map(|n| values.get(n).copied()).collect()
            };
            let k = g.inputs.len();
            if let Some(i) = known(values, &g.inputs) {
                let row = g.row_with(&i, false).to_vec();
                for (n, b) in g.outputs.iter().zip(&row[k..]) {
                    set(values, n, *b, &mut changed)?;
                }
            }
            if let Some(o) = known(values, &g.outputs) {
                let row = g.row_with(&o, true).to_vec();
                for (n, b) in g.inputs.iter().zip(&row[..k]) {
                    set(values, n, *b, &mut changed)?;
                }
            }
        }
        if !changed {
            return Ok(());
        }
    }
}

fn seed_values(network: &Network, given: &Assignment) -> Result<BTreeMap<String, u8>> {
    let mut values = BTreeMap::new();
    for (n, b) in given.iter() {
        if !network.has_node(n) {
            return Err(Error::UnknownNode(n.to_string()));
        }
        if b > 1 {
            return Err(Error::InvalidNetwork(format!("value of `{n}` is not a bit")));
        }
        values.insert(n.to_string(), b);
    }
    Ok(values)
}

/// Completes `given` by propagating gate tables and wire NOTs.
pub fn classical_propagate(network: &Network, given: &Assignment) -> Result<Assignment> {
    let mut values = seed_values(network, given)?;
    propagate(network, &mut values)?;
    if let Some(n) = network.nodes().into_iter().find(|n| !values.contains_key(*n)) {
        return Err(Error::Underdetermined(n.to_string()));
    }
    Ok(Assignment(values))
}

fn next_branch<'a>(network: &'a Network, values: &BTreeMap<String, u8>) -> Option<&'a str> {
    let pick = |ns: Vec<&'a str>| ns.into_iter().find(|n| !values.contains_key(*n));
    pick(network.branch_nodes()).or_else(|| pick(network.nodes()))
}

/// Input constraints plus `fill`, completed by propagation; any node still
/// open is chosen from `fill` or set to 0, in node order.
pub fn prepare_assignment(network: &Network, fill: &Assignment) -> Result<Assignment> {
    let mut given: Assignment = network.inputs.iter().map(|(n, b)| (n.clone(), *b)).collect();
    for (n, b) in fill.iter() {
        if let Some(c) = given.get(n) {
            if c != b {
                return Err(Error::Inconsistent(n.to_string()));
            }
        }
        given.insert(n, b);
    }
    let mut values = seed_values(network, &given)?;
    propagate(network, &mut values)?;
    while let Some(n) = next_branch(network, &values) {
        values.insert(n.to_string(), 0);
        propagate(network, &mut values)?;
    }
    Ok(Assignment(values))
}

/// Depth-first over open nodes (0 before 1), collecting every total
/// assignment consistent with `values`; stops after `limit` hits.
fn enumerate_consistent(network: &Network, values: BTreeMap<String, u8>, limit: usize, out: &mut Vec<Assignment>) {
    if out.len() >= limit {
        return;
    }
    match next_branch(network, &values) {
        None => out.push(Assignment(values)),
        Some(n) => {
            for bit in [0, 1] {
                let mut v = values.clone();
                v.insert(n.to_string(), bit);
                if propagate(network, &mut v).is_ok() {
                    enumerate_consistent(network, v, limit, out);
                }
            }
        }
    }
}

/// Network space: gate subsystems in declaration order, then dangling qubits.
#[derive(Debug, Clone)]
pub struct NetworkSpace {
    pub basis: Arc<BasisLabel>,
    /// One `A_rs` projector per wire, in wire order.
    pub wire_projectors: Vec<Projector>,
}

impl NetworkSpace {
    pub fn decode(&self, index: usize) -> Assignment {
        let mut a = Assignment::new();
        for (k, sys) in self.basis.subsystems().iter().enumerate() {
            let level = self.basis.level(index, k);
            for (n, b) in sys.nodes().iter().zip(sys.row(level)) {
                a.insert(n.clone(), *b);
            }
        }
        a
    }

    pub fn index_of(&self, a: &Assignment) -> Result<usize> {
        let mut levels = Vec::new();
        for sys in self.basis.subsystems() {
            let row: Vec<u8> = sys
                .nodes()
                .iter()
                .map(|n| a.get(n).ok_or_else(|| Error::Underdetermined(n.clone())))
                .collect::<Result<_>>()?;
            let level = (0..sys.dim())
                .find(|&l| sys.row(l) == row.as_slice())
                .ok_or_else(|| Error::Inconsistent(sys.name().to_string()))?;
            levels.push(level);
        }
        self.basis.index_of(&levels)
    }

    pub fn state_of(&self, a: &Assignment) -> Result<StateVector> {
        StateVector::basis_state(self.basis.clone(), self.index_of(a)?)
    }
}

pub fn build_network_space(network: &Network) -> Result<NetworkSpace> {
    let mut subsystems = network.gates.iter().map(Gate::subsystem).collect::<Result<Vec<_>>>()?;
    subsystems.extend(network.dangling.iter().map(|n| Subsystem::qubit(n.clone())));
    let basis = Arc::new(BasisLabel::new(subsystems)?);
    let wire_projectors = network
        .wires
        .iter()
        .map(|w| ars_projector(&ConnectionSpec::new(w.r.clone(), w.s.clone())?, basis.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkSpace { basis, wire_projectors })
}

/// Basis state of [`prepare_assignment`].
pub fn prepare_initial_state(network: &Network, fill: &Assignment) -> Result<StateVector> {
    let space = build_network_space(network)?;
    space.state_of(&prepare_assignment(network, fill)?)
}

/// True iff every gate row is admissible, every wire carries different bits
/// and every constraint holds. Partial assignments are an error.
pub fn check_assignment(network: &Network, a: &Assignment) -> Result<bool> {
    let nodes = network.nodes();
    if let Some(n) = nodes.iter().find(|n| !a.contains(n)) {
        return Err(Error::Underdetermined(n.to_string()));
    }
    for g in &network.gates {
        let row: Vec<u8> = g.nodes().map(|n| a.get(n).expect("checked")).collect();
        if !g.admits(&row) {
            return Ok(false);
        }
    }
    if network.wires.iter().any(|w| a.get(&w.r) == a.get(&w.s)) {
        return Ok(false);
    }
    Ok(network
        .inputs
        .iter()
        .chain(&network.outputs)
        .all(|(n, b)| a.get(n) == Some(*b)))
}

/// Every satisfying total assignment, found by exhaustive branching.
pub fn brute_force_oracle(network: &Network) -> Result<Vec<Assignment>> {
    let free = network.free_inputs().len();
    if free > ORACLE_MAX_FREE {
        return Err(Error::OracleLimit {
            free,
            max: ORACLE_MAX_FREE,
        });
    }
    let given: Assignment = network.inputs.iter().map(|(n, b)| (n.clone(), *b)).collect();
    let mut values = seed_values(network, &given)?;
    if propagate(network, &mut values).is_err() {
        return Ok(Vec::new());
    }
    let mut all = Vec::new();
    enumerate_consistent(network, values, usize::MAX, &mut all);
    let mut out = Vec::new();
    for a in all {
        if check_assignment(network, &a)? {
            out.push(a);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnsatEvidence {
    /// No assignment satisfies the gates, wires and input constraints, so no
    /// initial state exists.
    NoConsistentPreparation,
    /// The constrained evolution has no feasible state at this step.
    InfeasibleStep { step: usize, phi: f64, residual: f64 },
    /// The read-out assignment violates the network.
    FailedCheck { assignment: Assignment },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatStatus {
    Solution(Assignment),
    Multi {
        sampled: Assignment,
        /// Basis components of the final state, by decreasing weight.
        components: Vec<(Assignment, f64)>,
    },
    Unsat(UnsatEvidence),
}

impl SatStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SatStatus::Solution(_) => "SOLUTION",
            SatStatus::Multi { .. } => "MULTI",
            SatStatus::Unsat(_) => "UNSAT",
        }
    }

    /// The reported assignment, if any.
    pub fn assignment(&self) -> Option<&Assignment> {
        match self {
            SatStatus::Solution(a) | SatStatus::Multi { sampled: a, .. } => Some(a),
            SatStatus::Unsat(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub steps: usize,
    pub seed: u64,
    /// Explicit values for otherwise open nodes; the rest default to 0.
    pub fill: Assignment,
    pub config: SolverConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            seed: 0,
            fill: Assignment::new(),
            config: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SatOutcome {
    pub status: SatStatus,
    pub space: NetworkSpace,
    /// Classical preparation; `None` when none exists.
    pub prepared: Option<Assignment>,
    /// The default fill led to a contradiction and a consistent preparation
    /// had to be searched for.
    pub prepare_searched: bool,
    pub driven: Vec<String>,
    pub pinned: Vec<String>,
    pub trajectory: Trajectory,
    pub final_state: Option<StateVector>,
}

/// Prepares, drives every mismatched output constraint through
/// `cos²φ / sin²φ` over `φ ∈ [0, π/2]` with inputs and matched outputs pinned,
/// and reads out the final state.
pub fn solve_satisfiability(network: &Network, options: &SolveOptions) -> Result<SatOutcome> {
    let space = build_network_space(network)?;
    let mut outcome = SatOutcome {
        status: SatStatus::Unsat(UnsatEvidence::NoConsistentPreparation),
        space: space.clone(),
        prepared: None,
        prepare_searched: false,
        driven: Vec::new(),
        pinned: Vec::new(),
        trajectory: Trajectory::default(),
        final_state: None,
    };

    let prepared = match prepare_assignment(network, &options.fill) {
        Ok(a) => a,
        Err(Error::Inconsistent(node)) => {
            debug!("default preparation contradicts at `{node}`; searching");
            outcome.prepare_searched = true;
            let mut given: Assignment = network.inputs.iter().map(|(n, b)| (n.clone(), *b)).collect();
            for (n, b) in options.fill.iter() {
                given.insert(n, b);
            }
            let mut values = seed_values(network, &given)?;
            let mut found = Vec::new();
            if propagate(network, &mut values).is_ok() {
                enumerate_consistent(network, values, 1, &mut found);
            }
            match found.pop() {
                Some(a) => a,
                None => return Ok(outcome),
            }
        }
        Err(e) => return Err(e),
    };
    let initial = space.state_of(&prepared)?;
    outcome.prepared = Some(prepared.clone());

    let basis = &space.basis;
    let dphi = FRAC_PI_2 / options.steps as f64;
    let mut marginals = Vec::new();
    for (n, b) in &network.inputs {
        marginals.push(MarginalSchedule::pinned_bit(basis, n, *b)?);
        outcome.pinned.push(n.clone());
    }
    for (n, b) in &network.outputs {
        let now = prepared.get(n).expect("total");
        if now == *b {
            marginals.push(MarginalSchedule::pinned_bit(basis, n, *b)?);
            outcome.pinned.push(n.clone());
        } else {
            marginals.push(MarginalSchedule::flip(basis, n, now, options.steps, dphi)?);
            outcome.driven.push(n.clone());
        }
    }

    if outcome.driven.is_empty() {
        info!("prepared state already meets every output constraint");
        outcome.final_state = Some(initial);
        outcome.status = if check_assignment(network, &prepared)? {
            SatStatus::Solution(prepared)
        } else {
            SatStatus::Unsat(UnsatEvidence::FailedCheck { assignment: prepared })
        };
        return Ok(outcome);
    }

    let system = ConstraintSystem::new(
        space.wire_projectors.clone(),
        marginals,
        initial,
        options.steps,
        dphi,
        options.config,
    )?;
    let evolution = evolve(&system);
    outcome.trajectory = evolution.trajectory;
    outcome.final_state = Some(evolution.final_state.clone());
    if let EvolutionStatus::Infeasible { step, residual } = evolution.status {
        outcome.status = SatStatus::Unsat(UnsatEvidence::InfeasibleStep {
            step,
            phi: step as f64 * dphi,
            residual,
        });
        return Ok(outcome);
    }

    let probs = evolution.final_state.probabilities();
    let (best, &pmax) = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty basis");
    let (candidate, multi) = if pmax >= 1.0 - READOUT_TOL {
        (space.decode(best), None)
    } else {
        let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidSystem(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let drawn = dist.sample(&mut rng);
        let mut components: Vec<(usize, f64)> = probs
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| *p > READOUT_TOL)
            .collect();
        components.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let components = components.into_iter().map(|(i, p)| (space.decode(i), p)).collect();
        (space.decode(drawn), Some(components))
    };
    outcome.status = if !check_assignment(network, &candidate)? {
        SatStatus::Unsat(UnsatEvidence::FailedCheck { assignment: candidate })
    } else if let Some(components) = multi {
        SatStatus::Multi {
            sampled: candidate,
            components,
        }
    } else {
        SatStatus::Solution(candidate)
    };
    Ok(outcome)
}

/// Every network of at most `max_gates` gates drawn from {c-NOT, NOT}: each
/// gate output is left open, wired to a dangling terminal, or wired to an
/// unused input of a different gate; on top of each topology, at most one
/// input constraint on an unwired gate input and at most one output
/// constraint on an open output or terminal, each with either bit value.
pub fn small_corpus(max_gates: usize) -> Vec<Network> {
    let mut kinds: Vec<Vec<&str>> = Vec::new();
    for n in 1..=max_gates {
        // Multisets: c-NOTs first.
        for cnots in (0..=n).rev() {
            let mut v = vec!["cnot"; cnots];
            v.extend(std::iter::repeat_n("not", n - cnots));
            kinds.push(v);
        }
    }
    let mut out = Vec::new();
    for kind in kinds {
        let gates: Vec<Gate> = kind
            .iter()
            .enumerate()
            .map(|(g, k)| {
                let name = format!("g{g}");
                match *k {
                    "cnot" => Gate::cnot(
                        &name,
                        &format!("a{g}"),
                        &format!("b{g}"),
                        &format!("c{g}"),
                        &format!("d{g}"),
                    ),
                    _ => Gate::not(&name, &format!("a{g}"), &format!("c{g}")),
                }
                .expect("valid builtin")
            })
            .collect();
        let outs: Vec<(usize, String)> = gates
            .iter()
            .enumerate()
            .flat_map(|(g, gate)| gate.outputs.iter().map(move |o| (g, o.clone())))
            .collect();
        let ins: Vec<(usize, String)> = gates
            .iter()
            .enumerate()
            .flat_map(|(g, gate)| gate.inputs.iter().map(move |i| (g, i.clone())))
            .collect();
        let mut topologies: Vec<Vec<Wire>> = Vec::new();
        fn wire_up(
            k: usize,
            outs: &[(usize, String)],
            ins: &[(usize, String)],
            used: &mut Vec<bool>,
            acc: &mut Vec<Wire>,
            all: &mut Vec<Vec<Wire>>,
        ) {
            if k == outs.len() {
                all.push(acc.clone());
                return;
            }
            let (g, o) = &outs[k];
            wire_up(k + 1, outs, ins, used, acc, all);
            acc.push(Wire {
                r: o.clone(),
                s: format!("t{k}"),
            });
            wire_up(k + 1, outs, ins, used, acc, all);
            acc.pop();
            for (j, (h, i)) in ins.iter().enumerate() {
                if h != g && !used[j] {
                    used[j] = true;
                    acc.push(Wire {
                        r: o.clone(),
                        s: i.clone(),
                    });
                    wire_up(k + 1, outs, ins, used, acc, all);
                    acc.pop();
                    used[j] = false;
                }
            }
        }
        wire_up(
            0,
            &outs,
            &ins,
            &mut vec![false; ins.len()],
            &mut Vec::new(),
            &mut topologies,
        );
        for wires in topologies {
            let wired: BTreeSet<&str> = wires.iter().flat_map(|w| [w.r.as_str(), w.s.as_str()]).collect();
            let open_in: Vec<&str> = ins
                .iter()
                .map(|(_, n)| n.as_str())
                .filter(|n| !wired.contains(n))
                .collect();
            let mut open_out: Vec<String> = outs
                .iter()
                .map(|(_, n)| n.clone())
                .filter(|n| !wired.contains(n.as_str()))
                .collect();
            open_out.extend(wires.iter().filter(|w| w.s.starts_with('t')).map(|w| w.s.clone()));
            let mut in_choices: Vec<Vec<(String, u8)>> = vec![Vec::new()];
            for n in &open_in {
                for b in [0, 1] {
                    in_choices.push(vec![(n.to_string(), b)]);
                }
            }
            let mut out_choices: Vec<Vec<(String, u8)>> = vec![Vec::new()];
            for n in &open_out {
                for b in [0, 1] {
                    out_choices.push(vec![(n.clone(), b)]);
                }
            }
            for i in &in_choices {
                for o in &out_choices {
                    if let Ok(net) = Network::new(gates.clone(), wires.clone(), i.clone(), o.clone()) {
                        out.push(net);
                    }
                }
            }
        }
    }
    out
}

/// Renders a network back into netlist text.
pub fn to_netlist(network: &Network) -> String {
    let mut s = String::new();
    for g in &network.gates {
        match g.kind() {
            "table" => {
                let rows: Vec<String> = g.rows.iter().map(|r| bitstring(r)).collect();
                s += &format!(
                    "gate table {} {} -> {} {{ {} }}\n",
                    g.name,
                    g.inputs.join(" "),
                    g.outputs.join(" "),
                    rows.join(" ")
                );
            }
            k => s += &format!("gate {k} {} -> {}\n", g.inputs.join(" "), g.outputs.join(" ")),
        }
    }
    for w in &network.wires {
        s += &format!("wire {} {}\n", w.r, w.s);
    }
    for (n, b) in &network.inputs {
        s += &format!("in {n} = {b}\n");
    }
    for (n, b) in &network.outputs {
        s += &format!("out {n} = {b}\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const CNOT_WIRE: &str = "gate cnot t u -> v r\nwire r s\nin u = 1\nout s = 1\n";

    fn cnot_wire() -> Network {
        parse_netlist(CNOT_WIRE).unwrap()
    }

    fn assign(pairs: &[(&str, u8)]) -> Assignment {
        pairs.iter().map(|(n, b)| (*n, *b)).collect()
    }

    #[test]
    fn cnot_table() {
        let g = Gate::cnot("g", "t", "u", "v", "r").unwrap();
        let rows: Vec<String> = g.rows().iter().map(|r| bitstring(r)).collect();
        assert_eq!(rows, ["0000", "0101", "1011", "1110"]);
    }

    #[test]
    fn parse_cnot_wire() {
        let n = cnot_wire();
        assert_eq!(n.node_count(), 5);
        assert_eq!(n.nodes(), ["t", "u", "v", "r", "s"]);
        assert_eq!(n.dangling(), ["s"]);
        assert_eq!(n.gates()[0].name(), "cnot0");
    }

    #[test]
    fn parse_wire_only() {
        let n = parse_netlist("wire r s\nin r = 0\n").unwrap();
        assert_eq!(n.node_count(), 2);
        assert!(n.gates().is_empty());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let e = parse_netlist("wire r s\n\ngate frob a -> b\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_netlist("in x = 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_netlist("gate table g a -> b { 00 11\n").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        let e = parse_netlist("gate cnot a b -> c\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn parse_rejects_irreversible_table_and_duplicates() {
        let e = parse_netlist("gate table and2 a b -> c d { 0000 0100 1000 1111 }").unwrap_err();
        assert!(matches!(e, Error::NotReversible { .. }), "{e:?}");
        let e = parse_netlist("gate not a -> b\ngate not b -> c\n").unwrap_err();
        assert!(matches!(e, Error::DuplicateNode(_)));
    }

    #[test]
    fn table_may_span_lines() {
        let n = parse_netlist("gate table sw p q -> x y {\n 0000 0110\n 1001 1111 }\n").unwrap();
        assert_eq!(n.gates()[0].rows().len(), 4);
        let again = parse_netlist(&to_netlist(&n)).unwrap();
        assert_eq!(again, n);
    }

    #[test]
    fn propagation_examples() {
        let n = cnot_wire();
        let a = classical_propagate(&n, &assign(&[("t", 0), ("u", 1)])).unwrap();
        assert_eq!(a, assign(&[("t", 0), ("u", 1), ("v", 0), ("r", 1), ("s", 0)]));
        let a = classical_propagate(&n, &assign(&[("t", 1), ("u", 1)])).unwrap();
        assert_eq!(a, assign(&[("t", 1), ("u", 1), ("v", 1), ("r", 0), ("s", 1)]));
        let w = parse_netlist("wire r s\n").unwrap();
        assert_eq!(classical_propagate(&w, &assign(&[("r", 0)])).unwrap().get("s"), Some(1));
        assert!(matches!(
            classical_propagate(&n, &assign(&[("t", 0)])),
            Err(Error::Underdetermined(_))
        ));
        assert!(matches!(
            classical_propagate(&n, &assign(&[("t", 0), ("u", 1), ("s", 1)])),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn network_space_of_cnot_wire() {
        let space = build_network_space(&cnot_wire()).unwrap();
        assert_eq!(space.basis.dim(), 8);
        assert_eq!(space.wire_projectors.len(), 1);
        assert_eq!(space.wire_projectors[0].rank(), 4);
        let none = build_network_space(&parse_netlist("gate not a -> b\n").unwrap()).unwrap();
        assert!(none.wire_projectors.is_empty());
    }

    #[test]
    fn disjoint_wires_commute() {
        let n = parse_netlist("wire a b\nwire c d\n").unwrap();
        let space = build_network_space(&n).unwrap();
        let c = space.wire_projectors[0]
            .commutator_norm(&space.wire_projectors[1])
            .unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn every_basis_state_satisfies_the_gates() {
        let n = parse_netlist("gate cnot a b -> c d\ngate toffoli e f g -> h i j\nwire d e\n").unwrap();
        let space = build_network_space(&n).unwrap();
        for i in 0..space.basis.dim() {
            let a = space.decode(i);
            for g in n.gates() {
                let row: Vec<u8> = g.nodes().map(|x| a.get(x).unwrap()).collect();
                assert!(g.admits(&row));
            }
        }
    }

    #[test]
    fn cnot_wire_preparation() {
        let n = cnot_wire();
        let a = prepare_assignment(&n, &Assignment::new()).unwrap();
        assert_eq!(a, assign(&[("t", 0), ("u", 1), ("v", 0), ("r", 1), ("s", 0)]));
        let space = build_network_space(&n).unwrap();
        let psi = prepare_initial_state(&n, &Assignment::new()).unwrap();
        assert_eq!(space.basis.ket_label(space.index_of(&a).unwrap()), "|0101⟩_cnot0|0⟩_s");
        assert!(space.wire_projectors[0].residual(&psi).unwrap() == 0.0);
        let solved = prepare_assignment(&n, &assign(&[("t", 1)])).unwrap();
        assert!(check_assignment(&n, &solved).unwrap());
    }

    #[test]
    fn check_examples() {
        let n = cnot_wire();
        assert!(check_assignment(&n, &assign(&[("t", 1), ("u", 1), ("v", 1), ("r", 0), ("s", 1)])).unwrap());
        assert!(!check_assignment(&n, &assign(&[("t", 0), ("u", 1), ("v", 0), ("r", 1), ("s", 0)])).unwrap());
        let w = parse_netlist("wire r s\n").unwrap();
        assert!(!check_assignment(&w, &assign(&[("r", 0), ("s", 0)])).unwrap());
        assert!(check_assignment(&w, &assign(&[("r", 0)])).is_err());
    }

    #[test]
    fn oracle_examples() {
        let sols = brute_force_oracle(&cnot_wire()).unwrap();
        assert_eq!(sols, vec![assign(&[("t", 1), ("u", 1), ("v", 1), ("r", 0), ("s", 1)])]);
        let open = parse_netlist("gate cnot t u -> v r\nwire r s\nin u = 1\n").unwrap();
        assert_eq!(brute_force_oracle(&open).unwrap().len(), 2);
        let unsat = parse_netlist(&format!("{CNOT_WIRE}in t = 0\n")).unwrap();
        assert!(brute_force_oracle(&unsat).unwrap().is_empty());
    }

    #[test]
    fn oracle_cap() {
        let mut text = String::new();
        for k in 0..25 {
            text += &format!("gate not a{k} -> b{k}\n");
        }
        let n = parse_netlist(&text).unwrap();
        assert_eq!(n.free_inputs().len(), 25);
        assert!(matches!(
            brute_force_oracle(&n),
            Err(Error::OracleLimit { free: 25, .. })
        ));
    }

    #[test]
    fn cnot_wire_solution() {
        let out = solve_satisfiability(&cnot_wire(), &SolveOptions::default()).unwrap();
        let SatStatus::Solution(a) = &out.status else {
            panic!("{:?}", out.status)
        };
        assert_eq!(*a, assign(&[("t", 1), ("u", 1), ("v", 1), ("r", 0), ("s", 1)]));
        assert_eq!(out.driven, ["s"]);
        assert_eq!(out.pinned, ["u"]);
    }

    #[test]
    fn cnot_wire_with_t_pinned_is_unsat() {
        let n = parse_netlist(&format!("{CNOT_WIRE}in t = 0\n")).unwrap();
        let out = solve_satisfiability(&n, &SolveOptions::default()).unwrap();
        assert!(
            matches!(out.status, SatStatus::Unsat(UnsatEvidence::InfeasibleStep { .. })),
            "{:?}",
            out.status
        );
    }

    #[test]
    fn two_solutions_give_multi() {
        // Prepared with s = 1; both (t, u) = (0, 1) and (1, 0) give s = 0.
        let n = parse_netlist("gate cnot t u -> v r\nwire r s\nout s = 0\n").unwrap();
        let sols = brute_force_oracle(&n).unwrap();
        assert_eq!(sols.len(), 2);
        let out = solve_satisfiability(&n, &SolveOptions::default()).unwrap();
        let SatStatus::Multi { sampled, components } = &out.status else {
            panic!("{:?}", out.status)
        };
        assert!(sols.contains(sampled));
        assert_eq!(components.len(), 2);
        for (a, _) in components {
            assert!(sols.contains(a));
        }
        let again = solve_satisfiability(&n, &SolveOptions::default()).unwrap();
        assert_eq!(again.status, out.status);
    }

    #[test]
    fn already_solved_needs_no_drive() {
        let n = parse_netlist("gate not a -> b\nin a = 0\nout b = 1\n").unwrap();
        let out = solve_satisfiability(&n, &SolveOptions::default()).unwrap();
        assert!(out.driven.is_empty());
        assert_eq!(out.status, SatStatus::Solution(assign(&[("a", 0), ("b", 1)])));
    }

    #[test]
    fn feedback_loop_preparation_is_searched() {
        // u = ¬b = a = ¬r = ¬(t ⊕ u) forces t = 1.
        let n = parse_netlist("gate cnot t u -> v r\ngate not a -> b\nwire r a\nwire b u\n").unwrap();
        assert!(prepare_assignment(&n, &Assignment::new()).is_err());
        let out = solve_satisfiability(&n, &SolveOptions::default()).unwrap();
        assert!(out.prepare_searched);
        let a = out.status.assignment().unwrap();
        assert_eq!(a.get("t"), Some(1));
    }

    #[test]
    fn corpus_is_nontrivial() {
        let c = small_corpus(2);
        assert!(c.len() > 300, "{}", c.len());
    }
}
