//! Acceptance criteria 1–10. Each prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_8, PI};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use diakoptic::connection::{ars_projector, connection_system, q_propagator, ConnectionSpec, RotationSchedule};
use diakoptic::evolver::{evolve, ConstraintSystem, MarginalSchedule, SolverConfig};
use diakoptic::fock::{
    build_hrs, car_operators, induced_connection_evolution, named_states, qubit_state, spatial_statistics_density,
    to_first_quantized, Character, FockHamiltonian,
};
use diakoptic::hilbert::{Projector, StateVector};
use diakoptic::network::{
    brute_force_oracle, check_assignment, parse_netlist, small_corpus, solve_satisfiability, Assignment, SatStatus,
    SolveOptions, UnsatEvidence,
};
use diakoptic::C64;
use diakoptic_cli::fmt_f64;

const THETAS: [f64; 4] = [0.0, FRAC_PI_8, FRAC_PI_4, FRAC_PI_3];

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn cnot_wire_text() -> String {
    std::fs::read_to_string(data("cnot_wire.net")).expect("cnot_wire netlist")
}

fn assign(pairs: &[(&str, u8)]) -> Assignment {
    pairs.iter().map(|(n, b)| (n.to_string(), *b)).collect()
}

/// `cos a |01⟩ + sin a |10⟩` over `|r s⟩`, written out by hand.
fn expected_connection(a: f64) -> [f64; 4] {
    [0.0, a.cos(), a.sin(), 0.0]
}

fn distance_to(state: &StateVector, want: &[f64]) -> f64 {
    state
        .amplitudes()
        .iter()
        .zip(want)
        .map(|(z, w)| (z - C64::new(*w, 0.0)).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn criterion_1() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    let mut feasible = true;
    for theta in THETAS {
        let start = Instant::now();
        let sched = RotationSchedule::unit_rate(theta, FRAC_PI_2, 1000).unwrap();
        let out = evolve(&connection_system(&sched, SolverConfig::default()).unwrap());
        slowest = slowest.max(start.elapsed());
        feasible &= out.is_feasible() && out.trajectory.len() == 1001;
        for rec in &out.trajectory.records {
            worst = worst.max(distance_to(&rec.state, &expected_connection(theta + rec.phi)));
        }
    }
    verdict(
        feasible && worst <= 1e-6 && slowest < Duration::from_secs(1),
        format!("max deviation {worst:.3e} (tol 1e-6), slowest run {slowest:.2?} (limit 1 s)"),
    )
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    for theta in THETAS {
        let sched = RotationSchedule::unit_rate(theta, FRAC_PI_2, 1000).unwrap();
        let out = evolve(&connection_system(&sched, SolverConfig::default()).unwrap());
        for rec in &out.trajectory.records {
            // ρ_s diagonal from the amplitudes over |r s⟩: s = 0 at indices 0, 2.
            let p = rec.state.probabilities();
            let rho_s = [p[0] + p[2], p[1] + p[3]];
            let a = theta + rec.phi;
            worst = worst
                .max((rho_s[0] - a.sin().powi(2)).abs())
                .max((rho_s[1] - a.cos().powi(2)).abs());
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max |diag ρ_s − (sin², cos²)| {worst:.3e} (tol 1e-6)"),
    )
}

fn criterion_3() -> Verdict {
    let theta = 0.4;
    let sched = RotationSchedule::unit_rate(theta, PI, 100).unwrap();
    let out = evolve(&connection_system(&sched, SolverConfig::default()).unwrap());
    let spec = ConnectionSpec::default();
    let ars = ars_projector(&spec, spec.basis()).unwrap();
    let psi0 = &out.trajectory.records[0].state;
    let (mut prop_err, mut comm): (f64, f64) = (0.0, 0.0);
    for rec in &out.trajectory.records[1..] {
        let q = q_propagator(rec.phi);
        prop_err = prop_err.max(q.apply(psi0).unwrap().distance(&rec.state).unwrap());
        let c = ars.operator().matrix() * q.matrix() - q.matrix() * ars.operator().matrix();
        comm = comm.max(c.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let samples = out.trajectory.len() - 1;
    verdict(
        samples == 100 && prop_err <= 1e-9 && comm <= 1e-12,
        format!(
            "{samples} samples, max ‖Qψ(0) − ψ(φ)‖ {prop_err:.3e} (tol 1e-9), max ‖[A_rs, Q]‖ {comm:.3e} (tol 1e-12)"
        ),
    )
}

fn criterion_4() -> Verdict {
    let net = parse_netlist(&cnot_wire_text()).unwrap();
    let start = Instant::now();
    let out = solve_satisfiability(&net, &SolveOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let prepared = out.prepared.clone().unwrap_or_default();
    // |0⟩_t|1⟩_u|1⟩_r|0⟩_s
    let pattern_ok = ["t", "u", "r", "s"].map(|n| prepared.get(n)) == [Some(0), Some(1), Some(1), Some(0)];
    let solution = assign(&[("t", 1), ("u", 1), ("v", 1), ("r", 0), ("s", 1)]);
    let fidelity = out
        .final_state
        .as_ref()
        .map(|f| f.amplitude(out.space.index_of(&solution).unwrap()).norm_sqr())
        .unwrap_or(0.0);
    // Every step against cos φ |0110⟩ + sin φ |1101⟩ (v = t carried along).
    let start_state = out
        .space
        .state_of(&assign(&[("t", 0), ("u", 1), ("v", 0), ("r", 1), ("s", 0)]))
        .unwrap();
    let end_state = out.space.state_of(&solution).unwrap();
    let mut eq6: f64 = 0.0;
    for rec in &out.trajectory.records {
        let want = start_state.amplitudes() * C64::new(rec.phi.cos(), 0.0)
            + end_state.amplitudes() * C64::new(rec.phi.sin(), 0.0);
        eq6 = eq6.max((rec.state.amplitudes() - want).norm());
    }
    let status_ok = out.status == SatStatus::Solution(solution);
    verdict(
        pattern_ok && status_ok && fidelity >= 1.0 - 1e-6 && eq6 <= 1e-6 && elapsed < Duration::from_secs(1),
        format!(
            "prepared {prepared}, status {}, fidelity {}, trajectory deviation {eq6:.3e}, runtime {elapsed:.2?}",
            out.status.label(),
            fmt_f64(fidelity)
        ),
    )
}

fn criterion_5() -> Verdict {
    let (theta, phi_final, steps, offset) = (FRAC_PI_4, FRAC_PI_2, 1000usize, 0.3);
    let sched = RotationSchedule::unit_rate(theta, phi_final, steps).unwrap();
    let spec = ConnectionSpec::default();
    let basis = spec.basis();
    let r = MarginalSchedule::driven(&basis, "r", sched.rotated_diagonals(0.0)).unwrap();
    // s rotated at a rate that ends Δφ = 0.3 ahead of r.
    let rate = (phi_final + offset) / phi_final;
    let s_targets: Vec<Vec<f64>> = (0..=steps)
        .map(|n| {
            let a = theta + rate * sched.phi(n);
            vec![a.sin().powi(2), a.cos().powi(2)]
        })
        .collect();
    let s = MarginalSchedule::driven(&basis, "s", s_targets).unwrap();
    let system = ConstraintSystem::new(
        vec![ars_projector(&spec, basis.clone()).unwrap()],
        vec![r, s],
        diakoptic::connection::closed_form_state(theta, 0.0),
        steps,
        sched.dphi(),
        SolverConfig::default(),
    )
    .unwrap();
    let out = evolve(&system);
    match out.status {
        diakoptic::evolver::EvolutionStatus::Infeasible { step, residual } => verdict(
            step <= steps / 20,
            format!(
                "INFEASIBLE at step {step} of {steps} (limit {}), residual {residual:.3e}",
                steps / 20
            ),
        ),
        _ => verdict(false, "trajectory reported feasible"),
    }
}

fn criterion_6() -> Verdict {
    let text = std::fs::read_to_string(data("cnot_wire_unsat.net")).unwrap();
    let net = parse_netlist(&text).unwrap();
    let out = solve_satisfiability(&net, &SolveOptions::default()).unwrap();
    let oracle = brute_force_oracle(&net).unwrap();
    // By hand: v = t, r = t ⊕ u, s = ¬r; u = 1, t = 0 forces s = 0.
    let by_hand = (0..4u8)
        .filter(|k| {
            let (t, u) = (k >> 1, k & 1);
            let s = 1 - (t ^ u);
            u == 1 && t == 0 && s == 1
        })
        .count();
    let unsat = matches!(out.status, SatStatus::Unsat(UnsatEvidence::InfeasibleStep { .. }));
    verdict(
        out.status.label() == "UNSAT" && oracle.is_empty() && by_hand == 0,
        format!(
            "status {} ({}), oracle solutions {}, hand count {by_hand}",
            out.status.label(),
            if unsat {
                "infeasible-step evidence"
            } else {
                "other evidence"
            },
            oracle.len()
        ),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let corpus = small_corpus(2);
    let options = SolveOptions {
        steps: 100,
        ..SolveOptions::default()
    };
    let (mut agree, mut checked, mut sat) = (0usize, 0usize, 0usize);
    let mut first_bad = None;
    for (i, net) in corpus.iter().enumerate() {
        let oracle = brute_force_oracle(net).unwrap();
        let out = solve_satisfiability(net, &options).unwrap();
        let reported = out.status.assignment();
        let ok_status = reported.is_some() != oracle.is_empty();
        let ok_assignment = match reported {
            Some(a) => check_assignment(net, a).unwrap() && oracle.contains(a),
            None => true,
        };
        if reported.is_some() {
            sat += 1;
            checked += ok_assignment as usize;
        }
        if ok_status && ok_assignment {
            agree += 1;
        } else if first_bad.is_none() {
            first_bad = Some(i);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        agree == corpus.len() && checked == sat && corpus.len() >= 300 && elapsed < Duration::from_secs(300),
        format!(
            "{agree}/{} agree, {checked}/{sat} assignments pass check_assignment, runtime {elapsed:.1?}{}",
            corpus.len(),
            first_bad
                .map(|i| format!(", first disagreement #{i}"))
                .unwrap_or_default()
        ),
    )
}

fn criterion_8() -> Verdict {
    let h = FockHamiltonian::default();
    let car = car_operators();
    let car_defect = car.check();
    let named = named_states(&car).unwrap();
    let hrs = build_hrs(&car, &named, &h).unwrap();
    let want = [0.0, 0.0, h.ec, h.ed, h.ea, h.eb];
    let mut want_sorted = want.to_vec();
    want_sorted.sort_by(f64::total_cmp);
    let spectrum = hrs
        .sector_spectrum
        .iter()
        .zip(&want_sorted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // Rank test: null space, span{|01⟩_rs, |10⟩_rs} and their union all have rank 2.
    let null = hrs.null_space(1e-12 * h.max()).unwrap();
    let qubits = [qubit_state(&car, 0, 1), qubit_state(&car, 1, 0)];
    let mut union = null.clone();
    union.extend(qubits.iter().cloned());
    let ranks = [
        Projector::from_span(&null).unwrap().rank(),
        Projector::from_span(&qubits).unwrap().rank(),
        Projector::from_span(&union).unwrap().rank(),
    ];

    // Induced trajectory against the abstract Connection trajectory, mapped
    // into first quantization through qubit notation.
    let (mut dev, mut energy): (f64, f64) = (0.0, 0.0);
    let mut feasible = true;
    let mut abstract_ok = true;
    for theta in THETAS {
        let sched = RotationSchedule::unit_rate(theta, FRAC_PI_2, 1000).unwrap();
        let induced = induced_connection_evolution(&sched, &h).unwrap();
        let abstract_run = evolve(&connection_system(&sched, SolverConfig::default()).unwrap());
        feasible &= induced.outcome.is_feasible();
        abstract_ok &= abstract_run.is_feasible();
        for (a, b) in induced
            .outcome
            .trajectory
            .records
            .iter()
            .zip(&abstract_run.trajectory.records)
        {
            let mut fock = StateVector::zeros(car.basis().clone()).into_vector();
            for (k, (cr, cs)) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                fock += qubit_state(&car, cr, cs).amplitudes() * b.state.amplitude(k);
            }
            let fock = StateVector::from_vector(car.basis().clone(), fock).unwrap();
            let embedded = to_first_quantized(&fock).unwrap();
            dev = dev.max(a.state.distance(&embedded).unwrap());
            energy = energy.max(hrs.second_quantized.expectation(&fock).unwrap().re.abs());
        }
        energy = energy.max(induced.max_energy());
    }
    let pass = car_defect.identities == 64
        && car_defect.max_defect <= 1e-14
        && spectrum <= 1e-10
        && ranks == [2, 2, 2]
        && feasible
        && abstract_ok
        && dev <= 1e-6
        && energy <= 1e-12 * h.max();
    verdict(
        pass,
        format!(
            "CAR {} identities max defect {:.1e}; spectrum error {spectrum:.1e}; ranks {ranks:?}; induced vs abstract {dev:.3e}; max ⟨ξ⟩ {energy:.1e}",
            car_defect.identities, car_defect.max_defect
        ),
    )
}

fn criterion_9() -> Verdict {
    let (ka, kb) = (1.7, 0.5);
    let singlet0 = spatial_statistics_density(ka, kb, 0.0, 0.0, Character::Singlet);
    let triplet0 = spatial_statistics_density(ka, kb, 0.0, 0.0, Character::Triplet);
    let mut spread: f64 = 0.0;
    let mut max_singlet: f64 = 0.0;
    let mut first: Option<f64> = None;
    for k in 0..1000 {
        let x = -15.0 + 30.0 * k as f64 / 999.0;
        let s = spatial_statistics_density(ka, kb, x, 0.0, Character::Singlet);
        let t = spatial_statistics_density(ka, kb, x, 0.0, Character::Triplet);
        max_singlet = max_singlet.max(s);
        let f = *first.get_or_insert(s + t);
        spread = spread.max((s + t - f).abs());
    }
    verdict(
        singlet0 >= max_singlet && triplet0.abs() <= 1e-12 && spread <= 1e-12,
        format!("singlet(0) {singlet0}, max sampled singlet {max_singlet:.15}, triplet(0) {triplet0:.1e}, sum spread {spread:.1e}"),
    )
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> (Option<i32>, Vec<u8>) {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_diakoptic"))
            .arg("solve")
            .arg(data("cnot_wire.net"))
            .args(["--steps", "1000", "--seed", "0", "--format", "json", "--out"])
            .arg(&path)
            .stderr(Stdio::null())
            .status()
            .expect("binary runs");
        (status.code(), std::fs::read(&path).unwrap_or_default())
    };
    let (c1, a) = run("a.json");
    let (c2, b) = run("b.json");
    verdict(
        c1 == Some(0) && c2 == Some(0) && !a.is_empty() && a == b,
        format!(
            "exit codes {c1:?}/{c2:?}, {} and {} bytes, identical {}",
            a.len(),
            b.len(),
            a == b
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        ("connection closed form", criterion_1),
        ("NOT transmission", criterion_2),
        ("propagator consistency", criterion_3),
        ("two-gate network solution", criterion_4),
        ("rigid Connection infeasibility", criterion_5),
        ("UNSAT detection", criterion_6),
        ("oracle equivalence", criterion_7),
        ("fock suite", criterion_8),
        ("singlet and triplet densities", criterion_9),
        ("deterministic JSON", criterion_10),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        failures += (!v.passed) as usize;
        println!(
            "{} criterion {:>2} {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            k + 1,
            v.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
