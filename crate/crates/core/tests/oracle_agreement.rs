use std::time::Instant;

use diakoptic::network::{
    brute_force_oracle, check_assignment, small_corpus, solve_satisfiability, to_netlist, SatStatus, SolveOptions,
};

#[test]
fn solver_agrees_with_oracle_on_sampled_corpus() {
    // Every single-gate network plus every seventh two-gate one; the full
    // two-gate sweep runs in the acceptance suite.
    let corpus: Vec<_> = small_corpus(2)
        .into_iter()
        .enumerate()
        .filter(|(i, n)| n.gates().len() == 1 || i % 7 == 0)
        .map(|(_, n)| n)
        .collect();
    assert!(corpus.len() > 1000);
    let options = SolveOptions {
        steps: 100,
        ..SolveOptions::default()
    };
    let start = Instant::now();
    let mut disagreements = Vec::new();
    let (mut sat, mut multi) = (0, 0);
    for net in &corpus {
        let oracle = brute_force_oracle(net).unwrap();
        let out = solve_satisfiability(net, &options).unwrap();
        if let Some(a) = out.status.assignment() {
            assert!(check_assignment(net, a).unwrap(), "{}", to_netlist(net));
            assert!(oracle.contains(a));
            sat += 1;
        }
        if matches!(out.status, SatStatus::Multi { .. }) {
            multi += 1;
        }
        if out.status.assignment().is_some() == oracle.is_empty() {
            disagreements.push(format!("{}=> {:?}\noracle {:?}", to_netlist(net), out.status, oracle));
        }
    }
    eprintln!(
        "{} networks, {sat} satisfiable, {multi} multi, {:?}",
        corpus.len(),
        start.elapsed()
    );
    assert!(disagreements.is_empty(), "{}", disagreements.join("\n---\n"));
}
