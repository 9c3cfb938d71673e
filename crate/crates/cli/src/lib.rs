//! Batch runner for the three experiment families: the single Connection,
//! network satisfiability and the two-fermion verification suite.
//!
//! Every command writes one data document (JSON or CSV) to `--out` or
//! standard output and a short human summary to standard error.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use diakoptic::connection::{closed_form_state, connection_system, RotationSchedule};
use diakoptic::evolver::{evolve, unitarity_report, EvolutionStatus, SolverConfig, UnitarityReport};
use diakoptic::fock::{verification_suite, Check, FockHamiltonian};
use diakoptic::hilbert::StateVector;
use diakoptic::network::{
    brute_force_oracle, check_assignment, parse_netlist, solve_satisfiability, Assignment, SatStatus, SolveOptions,
    UnsatEvidence, ORACLE_MAX_FREE,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    /// UNSAT, an infeasible drive or a failed verification check.
    pub const NEGATIVE: i32 = 2;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Core(#[from] diakoptic::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "diakoptic", version, about = "Diakoptic quantum computation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct OutputArgs {
    /// Data file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drive one end of a single Connection and compare with the closed form.
    ConnectionDemo {
        #[arg(long, default_value_t = FRAC_PI_4)]
        theta: f64,
        #[arg(long = "phi-final", default_value_t = FRAC_PI_2)]
        phi_final: f64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Decide satisfiability of a reversible network given as a netlist.
    Solve {
        netlist: PathBuf,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Values for open nodes, `node=bit[,node=bit…]`.
        #[arg(long, value_parser = parse_fill)]
        fill: Option<Assignment>,
        /// Cross-check against exhaustive enumeration; on by default up to
        /// 24 free inputs.
        #[arg(long, value_enum)]
        oracle: Option<Toggle>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the two-fermion invariant suite and the induced evolution.
    FockVerify {
        /// `Ea,Eb,Ec,Ed`.
        #[arg(long, value_parser = parse_energies)]
        energies: Option<FockHamiltonian>,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long = "phi-final", default_value_t = FRAC_PI_2)]
        phi_final: f64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

pub fn parse_fill(s: &str) -> std::result::Result<Assignment, String> {
    let mut a = Assignment::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (node, bit) = part
            .split_once('=')
            .ok_or_else(|| format!("`{part}`: expected node=bit"))?;
        let bit = match bit.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("`{other}`: bit must be 0 or 1")),
        };
        if a.insert(node.trim(), bit).is_some() {
            return Err(format!("`{}` given twice", node.trim()));
        }
    }
    Ok(a)
}

pub fn parse_energies(s: &str) -> std::result::Result<FockHamiltonian, String> {
    let e: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|err| format!("`{x}`: {err}")))
        .collect::<std::result::Result<_, _>>()?;
    let [ea, eb, ec, ed] = e[..] else {
        return Err(format!("expected four energies, got {}", e.len()));
    };
    FockHamiltonian::new(ea, eb, ec, ed).map_err(|err| err.to_string())
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn open_sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        })?),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(out: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<stdout>")),
        source,
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, doc: &T) -> Result<()> {
    let mut sink = open_sink(out)?;
    serde_json::to_writer_pretty(&mut sink, doc)?;
    writeln!(sink).map_err(io_err(out))?;
    sink.flush().map_err(io_err(out))
}

fn write_csv(out: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(open_sink(out)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(out))
}

#[derive(Debug, Serialize)]
struct Document<'a, C: Serialize, S: Serialize, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    config: C,
    summary: S,
    trajectory: T,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Amplitude {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionRow {
    pub step: usize,
    pub phi: f64,
    /// `|00⟩, |01⟩, |10⟩, |11⟩` over `(r, s)`.
    pub amplitudes: Vec<Amplitude>,
    pub rho_r: [f64; 2],
    pub rho_s: [f64; 2],
    pub overlap: f64,
    pub residuals: Vec<f64>,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionSummary {
    pub status: EvolutionStatus,
    pub max_deviation: f64,
    /// `max |diag ρ_s − (sin², cos²)(θ+φ)|`.
    pub max_transmission_error: f64,
    pub min_overlap: f64,
    pub unitarity: UnitarityReport,
}

#[derive(Debug, Clone, Serialize)]
struct ConnectionConfig {
    theta: f64,
    phi_final: f64,
    steps: usize,
}

pub struct ConnectionRun {
    pub rows: Vec<ConnectionRow>,
    pub summary: ConnectionSummary,
}

pub fn run_connection(theta: f64, phi_final: f64, steps: usize) -> Result<ConnectionRun> {
    let schedule = RotationSchedule::unit_rate(theta, phi_final, steps)?;
    let system = connection_system(&schedule, SolverConfig::default())?;
    let outcome = evolve(&system);
    let mut rows = Vec::with_capacity(outcome.trajectory.len());
    let (mut dev, mut trans, mut min_overlap) = (0.0f64, 0.0f64, 1.0f64);
    for rec in &outcome.trajectory.records {
        let deviation = rec.state.distance(&closed_form_state(theta, rec.phi))?;
        let rho_r = rec.state.node_marginal("r")?;
        let rho_s = rec.state.node_marginal("s")?;
        let a = theta + rec.phi;
        let want = [a.sin().powi(2), a.cos().powi(2)];
        trans = trans.max((rho_s[0] - want[0]).abs()).max((rho_s[1] - want[1]).abs());
        dev = dev.max(deviation);
        min_overlap = min_overlap.min(rec.overlap);
        rows.push(ConnectionRow {
            step: rec.step,
            phi: rec.phi,
            amplitudes: amplitudes(&rec.state),
            rho_r,
            rho_s,
            overlap: rec.overlap,
            residuals: rec.residuals.clone(),
            deviation,
        });
    }
    Ok(ConnectionRun {
        rows,
        summary: ConnectionSummary {
            status: outcome.status,
            max_deviation: dev,
            max_transmission_error: trans,
            min_overlap,
            unitarity: unitarity_report(&outcome.trajectory),
        },
    })
}

fn amplitudes(state: &StateVector) -> Vec<Amplitude> {
    state
        .amplitudes()
        .iter()
        .map(|z| Amplitude { re: z.re, im: z.im })
        .collect()
}

pub fn cmd_connection_demo(theta: f64, phi_final: f64, steps: usize, output: &OutputArgs) -> Result<i32> {
    let run = run_connection(theta, phi_final, steps)?;
    let out = output.out.as_deref();
    match output.format {
        Format::Json => write_json(
            out,
            &Document {
                schema_version: SCHEMA_VERSION,
                command: "connection-demo",
                config: ConnectionConfig {
                    theta,
                    phi_final,
                    steps,
                },
                summary: &run.summary,
                trajectory: &run.rows,
            },
        )?,
        Format::Csv => {
            let mut header: Vec<String> = vec!["step".into(), "phi".into()];
            for k in ["00", "01", "10", "11"] {
                header.push(format!("re_{k}"));
                header.push(format!("im_{k}"));
            }
            for c in [
                "rho_r_0",
                "rho_r_1",
                "rho_s_0",
                "rho_s_1",
                "overlap",
                "residual_projector",
                "residual_r",
                "deviation",
            ] {
                header.push(c.into());
            }
            let rows: Vec<Vec<String>> = run
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.step.to_string(), fmt_f64(r.phi)];
                    for a in &r.amplitudes {
                        row.push(fmt_f64(a.re));
                        row.push(fmt_f64(a.im));
                    }
                    let tail = [r.rho_r[0], r.rho_r[1], r.rho_s[0], r.rho_s[1], r.overlap];
                    row.extend(tail.iter().map(|&x| fmt_f64(x)));
                    row.extend(r.residuals.iter().map(|&x| fmt_f64(x)));
                    row.push(fmt_f64(r.deviation));
                    row
                })
                .collect();
            write_csv(out, &header, &rows)?;
        }
    }
    let s = &run.summary;
    eprintln!(
        "connection-demo: {} steps, max deviation from closed form {:.3e}, max transmission error {:.3e}, min overlap {:.12}",
        steps, s.max_deviation, s.max_transmission_error, s.min_overlap
    );
    Ok(match s.status {
        EvolutionStatus::Feasible => exit::OK,
        EvolutionStatus::Infeasible { step, residual } => {
            eprintln!("connection-demo: infeasible at step {step} (residual {residual:.3e})");
            exit::NEGATIVE
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleAgreement {
    pub solutions: usize,
    pub agrees: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub status: &'static str,
    pub assignment: Option<Assignment>,
    /// Probability of the reported assignment in the final state.
    pub fidelity: Option<f64>,
    pub components: Vec<(Assignment, f64)>,
    pub evidence: Option<UnsatEvidence>,
    pub prepared: Option<Assignment>,
    pub prepare_searched: bool,
    pub driven: Vec<String>,
    pub pinned: Vec<String>,
    pub oracle_agreement: Option<OracleAgreement>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRow {
    pub step: usize,
    pub phi: f64,
    pub overlap: f64,
    pub residuals: Vec<f64>,
    /// `P(node = 1)` for every node, in network order.
    pub p_one: Vec<(String, f64)>,
    /// Nonzero amplitudes keyed by basis ket.
    pub amplitudes: Vec<(String, Amplitude)>,
}

#[derive(Debug, Clone, Serialize)]
struct SolveConfig {
    netlist: String,
    steps: usize,
    seed: u64,
    fill: Assignment,
    oracle: bool,
}

pub struct SolveRun {
    pub result: SolveResult,
    pub rows: Vec<SolveRow>,
}

pub fn run_solve(text: &str, steps: usize, seed: u64, fill: Assignment, oracle: Option<Toggle>) -> Result<SolveRun> {
    let network = parse_netlist(text)?;
    for (n, _) in fill.iter() {
        if !network.nodes().contains(&n) {
            return Err(CliError::Config(format!("fill names unknown node `{n}`")));
        }
    }
    let free = network.free_inputs().len();
    let use_oracle = match oracle {
        Some(Toggle::On) => true,
        Some(Toggle::Off) => false,
        None => free <= ORACLE_MAX_FREE,
    };
    let options = SolveOptions {
        steps,
        seed,
        fill,
        config: SolverConfig::default(),
    };
    let out = solve_satisfiability(&network, &options)?;
    let nodes: Vec<String> = network.nodes().into_iter().map(String::from).collect();
    let mut rows = Vec::with_capacity(out.trajectory.len());
    for rec in &out.trajectory.records {
        let p_one = nodes
            .iter()
            .map(|n| Ok((n.clone(), rec.state.node_marginal(n)?[1])))
            .collect::<Result<_>>()?;
        let amplitudes = rec
            .state
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 1e-15)
            .map(|(i, z)| (out.space.basis.ket_label(i), Amplitude { re: z.re, im: z.im }))
            .collect();
        rows.push(SolveRow {
            step: rec.step,
            phi: rec.phi,
            overlap: rec.overlap,
            residuals: rec.residuals.clone(),
            p_one,
            amplitudes,
        });
    }
    let assignment = out.status.assignment().cloned();
    let fidelity = match (&assignment, &out.final_state) {
        (Some(a), Some(f)) => Some(f.amplitude(out.space.index_of(a)?).norm_sqr()),
        _ => None,
    };
    if let Some(a) = &assignment {
        if !check_assignment(&network, a)? {
            warn!("reported assignment {a} fails the network check");
        }
    }
    let oracle_agreement = if use_oracle {
        let sols = brute_force_oracle(&network)?;
        let agrees = match &assignment {
            Some(a) => sols.contains(a),
            None => sols.is_empty(),
        };
        if !agrees {
            warn!(
                "solver status {} disagrees with the oracle ({} solutions)",
                out.status.label(),
                sols.len()
            );
        }
        Some(OracleAgreement {
            solutions: sols.len(),
            agrees,
        })
    } else {
        info!("oracle disabled ({free} free inputs)");
        None
    };
    let (components, evidence) = match &out.status {
        SatStatus::Multi { components, .. } => (components.clone(), None),
        SatStatus::Unsat(e) => (Vec::new(), Some(e.clone())),
        SatStatus::Solution(_) => (Vec::new(), None),
    };
    Ok(SolveRun {
        result: SolveResult {
            status: out.status.label(),
            assignment,
            fidelity,
            components,
            evidence,
            prepared: out.prepared.clone(),
            prepare_searched: out.prepare_searched,
            driven: out.driven.clone(),
            pinned: out.pinned.clone(),
            oracle_agreement,
        },
        rows,
    })
}

pub fn cmd_solve(
    netlist: &Path,
    steps: usize,
    seed: u64,
    fill: Assignment,
    oracle: Option<Toggle>,
    output: &OutputArgs,
) -> Result<i32> {
    let text = std::fs::read_to_string(netlist).map_err(|source| CliError::Io {
        path: netlist.to_path_buf(),
        source,
    })?;
    let run = run_solve(&text, steps, seed, fill.clone(), oracle)?;
    let out = output.out.as_deref();
    match output.format {
        Format::Json => write_json(
            out,
            &Document {
                schema_version: SCHEMA_VERSION,
                command: "solve",
                config: SolveConfig {
                    netlist: netlist.display().to_string(),
                    steps,
                    seed,
                    fill,
                    oracle: run.result.oracle_agreement.is_some(),
                },
                summary: &run.result,
                trajectory: &run.rows,
            },
        )?,
        Format::Csv => {
            let mut header: Vec<String> = vec!["step".into(), "phi".into(), "overlap".into(), "max_residual".into()];
            if let Some(first) = run.rows.first() {
                header.extend(first.p_one.iter().map(|(n, _)| format!("p1_{n}")));
            }
            let rows: Vec<Vec<String>> = run
                .rows
                .iter()
                .map(|r| {
                    let worst = r.residuals.iter().copied().fold(0.0, f64::max);
                    let mut row = vec![r.step.to_string(), fmt_f64(r.phi), fmt_f64(r.overlap), fmt_f64(worst)];
                    row.extend(r.p_one.iter().map(|(_, p)| fmt_f64(*p)));
                    row
                })
                .collect();
            write_csv(out, &header, &rows)?;
        }
    }
    let r = &run.result;
    let assignment = r
        .assignment
        .as_ref()
        .map(|a| a.to_string())
        .unwrap_or_else(|| "-".into());
    eprintln!("solve: {} {assignment}", r.status);
    if let Some(e) = &r.evidence {
        eprintln!("solve: evidence {}", serde_json::to_string(e)?);
    }
    if let Some(o) = &r.oracle_agreement {
        eprintln!(
            "solve: oracle finds {} solution(s), agreement {}",
            o.solutions, o.agrees
        );
    }
    Ok(if r.status == "UNSAT" { exit::NEGATIVE } else { exit::OK })
}

#[derive(Debug, Clone, Serialize)]
struct FockConfig {
    energies: FockHamiltonian,
    theta: f64,
    phi_final: f64,
    steps: usize,
}

#[derive(Debug, Clone, Serialize)]
struct FockSummary {
    passed: bool,
    failed: Vec<String>,
}

pub fn run_fock(h: &FockHamiltonian, theta: f64, phi_final: f64, steps: usize) -> Result<Vec<Check>> {
    let schedule = RotationSchedule::unit_rate(theta, phi_final, steps)?;
    Ok(verification_suite(h, &schedule)?)
}

pub fn cmd_fock_verify(
    h: FockHamiltonian,
    theta: f64,
    phi_final: f64,
    steps: usize,
    output: &OutputArgs,
) -> Result<i32> {
    let checks = run_fock(&h, theta, phi_final, steps)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let out = output.out.as_deref();
    match output.format {
        Format::Json => write_json(
            out,
            &Document {
                schema_version: SCHEMA_VERSION,
                command: "fock-verify",
                config: FockConfig {
                    energies: h,
                    theta,
                    phi_final,
                    steps,
                },
                summary: FockSummary {
                    passed: failed.is_empty(),
                    failed: failed.clone(),
                },
                trajectory: &checks,
            },
        )?,
        Format::Csv => {
            let header: Vec<String> = ["check", "value", "tolerance", "passed"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.clone(),
                        fmt_f64(c.value),
                        fmt_f64(c.tolerance),
                        c.passed.to_string(),
                    ]
                })
                .collect();
            write_csv(out, &header, &rows)?;
        }
    }
    for c in &checks {
        eprintln!(
            "{} {:<40} {:.3e} (tol {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    Ok(if failed.is_empty() { exit::OK } else { exit::NEGATIVE })
}

/// Runs a parsed command line; errors are reported on standard error.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::ConnectionDemo {
            theta,
            phi_final,
            steps,
            output,
        } => cmd_connection_demo(theta, phi_final, steps as usize, &output),
        Command::Solve {
            netlist,
            steps,
            seed,
            fill,
            oracle,
            output,
        } => cmd_solve(
            &netlist,
            steps as usize,
            seed,
            fill.unwrap_or_default(),
            oracle,
            &output,
        ),
        Command::FockVerify {
            energies,
            theta,
            phi_final,
            steps,
            output,
        } => cmd_fock_verify(energies.unwrap_or_default(), theta, phi_final, steps as usize, &output),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit::ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_parsing() {
        let a = parse_fill("t=1, x=0").unwrap();
        assert_eq!(a.get("t"), Some(1));
        assert_eq!(a.get("x"), Some(0));
        assert!(parse_fill("").unwrap().is_empty());
        assert!(parse_fill("t=2").is_err());
        assert!(parse_fill("t").is_err());
        assert!(parse_fill("t=1,t=0").is_err());
    }

    #[test]
    fn energy_parsing() {
        let h = parse_energies("4, 3, 2, 1").unwrap();
        assert_eq!((h.ea, h.eb, h.ec, h.ed), (4.0, 3.0, 2.0, 1.0));
        assert!(parse_energies("1,3,2,1").is_err());
        assert!(parse_energies("3,3,1").is_err());
        assert!(parse_energies("3,3,x,1").is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn connection_demo_summary() {
        let run = run_connection(FRAC_PI_4, FRAC_PI_2, 1000).unwrap();
        assert!(run.summary.max_deviation <= 1e-6);
        assert_eq!(run.rows.len(), 1001);
        assert_eq!(run_connection(FRAC_PI_4, FRAC_PI_2, 1).unwrap().rows.len(), 2);
    }

    #[test]
    fn solve_rejects_unknown_fill_node() {
        let text = "gate cnot t u -> v r\nwire r s\n";
        let e = run_solve(text, 10, 0, parse_fill("zz=1").unwrap(), None);
        assert!(matches!(e, Err(CliError::Config(_))));
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "diakoptic",
            "solve",
            "n.net",
            "--fill",
            "t=1",
            "--oracle",
            "off",
            "--format",
            "csv",
        ])
        .unwrap();
        match cli.command {
            Command::Solve {
                fill,
                oracle,
                output,
                steps,
                ..
            } => {
                assert_eq!(fill.unwrap().get("t"), Some(1));
                assert_eq!(oracle, Some(Toggle::Off));
                assert_eq!(output.format, Format::Csv);
                assert_eq!(steps, 1000);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["diakoptic", "connection-demo", "--steps", "0"]).is_err());
    }
}
