//! Command-line front end: network files in, reports out.

pub mod dcgrid;
pub mod file;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::decompose::DecompositionConfig;
use crate::error::{Error, Result};
use crate::linalg::{SymMat, Tolerance};
use crate::lmi::{dissipativity_residual, find_additive_lyapunov, SolverOptions, Status};
use crate::model::{NetworkGraph, QuadraticSupply, StorageCertificate, SystemId};
use crate::netgraph::{condense, decompose_acyclic, is_acyclic, Grouping};
use crate::robustness::{edge_removal_certificate, system_removal_certificate, RobustnessCertificate, Subject};

pub use file::NetworkFile;
pub use report::{Outcome, Report};

#[derive(Debug, Parser)]
#[command(name = "neutral-supply", version, about = "Additive Lyapunov certificates and neutral link supplies for LTI networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Relative eigenvalue gate for definiteness decisions.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol_def: f64,
    /// Relative singular-value gate for rank decisions.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol_rank: f64,
    /// Print the machine-readable report instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Also write the machine-readable report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertificateSource {
    /// Use the storage blocks stored in the file.
    #[arg(long, conflicts_with = "solve_cert")]
    pub use_cert: bool,
    /// Search a fresh additive Lyapunov certificate.
    #[arg(long)]
    pub solve_cert: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search an additive quadratic Lyapunov function.
    Lyapunov {
        /// Network file, or a report that embeds one.
        file: PathBuf,
    },
    /// Construct neutral supplies on every link of an acyclic network.
    Decompose {
        /// Network file, or a report that embeds one.
        file: PathBuf,
        /// Blend in (0, 1) between the two sides' storage rates.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[command(flatten)]
        cert: CertificateSource,
        /// Condense groups first, e.g. "1,2,3|4|5,6".
        #[arg(long)]
        group: Option<String>,
    },
    /// Check neutrality and local dissipation of the supplies in a file.
    Verify {
        /// Network file, or a report that embeds one.
        file: PathBuf,
    },
    /// Certificates for removing links or systems.
    Robustness {
        /// Network file, or a report that embeds one.
        file: PathBuf,
        /// Link "i,j"; may be repeated.
        #[arg(long)]
        edge: Vec<String>,
        /// System id; may be repeated.
        #[arg(long)]
        system: Vec<u32>,
        /// Every link and every system.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        cert: CertificateSource,
        #[arg(long)]
        group: Option<String>,
    },
    /// Built-in example networks.
    Example {
        #[command(subcommand)]
        which: Example,
    },
}

#[derive(Debug, Subcommand)]
pub enum Example {
    /// The three-converter DC grid with its published storage.
    Dcgrid {
        /// Write the network file here instead of standard output.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return Outcome::Usage.exit_code();
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e == Error::NotAcyclic {
                let _ = writeln!(err, "hint: condense cycles with --group, e.g. --group \"1,2,3|4\"");
            }
            return Outcome::of_error(&e).exit_code();
        }
    };
    if let Some(path) = &cli.report {
        let text = serde_json::to_string_pretty(&report.machine()).expect("reports serialise");
        if let Err(e) = std::fs::write(path, text) {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return Outcome::Usage.exit_code();
        }
    }
    let _ = if cli.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report.machine()).expect("reports serialise"))
    } else {
        write!(out, "{}", report.text())
    };
    report.outcome.exit_code()
}

fn tolerance(cli: &Cli) -> Result<Tolerance> {
    Tolerance::new(cli.tol_def, cli.tol_rank)
}

/// Reads a network file, or the network embedded in a report.
pub fn load(path: &Path) -> Result<NetworkFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    match value.get("network") {
        Some(inner) => NetworkFile::from_json(&inner.to_string()),
        None => NetworkFile::from_json(&text),
    }
}

pub fn parse_groups(spec: &str) -> Result<Vec<Vec<SystemId>>> {
    spec.split('|')
        .map(|g| {
            g.split(',')
                .map(|s| s.trim().parse::<u32>().map(SystemId).map_err(|_| Error::InvalidInput(format!("bad group member {s:?}"))))
                .collect()
        })
        .collect()
}

fn parse_edge(spec: &str) -> Result<(SystemId, SystemId)> {
    let ids: Vec<u32> = spec
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::InvalidInput(format!("bad edge {spec:?}; expected \"i,j\""))))
        .collect::<Result<_>>()?;
    match ids[..] {
        [i, j] => Ok((SystemId(i), SystemId(j))),
        _ => Err(Error::InvalidInput(format!("bad edge {spec:?}; expected \"i,j\""))),
    }
}

fn block_lines(report: &mut Report, blocks: &BTreeMap<SystemId, SymMat>) {
    for (id, p) in blocks {
        report.line(format!("  P_{id} = {}", report::matrix(p.as_mat())));
    }
}

fn certificate(
    file: &NetworkFile,
    net: &NetworkGraph,
    source: &CertificateSource,
    tol: &Tolerance,
    report: &mut Report,
) -> Result<StorageCertificate> {
    let stored = file.storage(tol)?;
    let blocks = match (&stored, source.solve_cert) {
        (Some(blocks), false) => {
            report.line("storage: taken from the file");
            blocks.clone()
        }
        (None, false) if source.use_cert => return Err(Error::InvalidInput("--use-cert needs a certificate in the file".into())),
        _ => {
            let search = find_additive_lyapunov(net, tol, &SolverOptions::default())?;
            match search.status {
                Status::Feasible => {
                    report.line("storage: solved for an additive Lyapunov function");
                    search.certificate.expect("feasible searches carry a certificate").blocks
                }
                Status::Infeasible => return Err(Error::hypothesis("additive Lyapunov function exists", search.result.worst_margin)),
                Status::Undecided => return Err(Error::Undecided("additive Lyapunov search did not converge".into())),
            }
        }
    };
    let cert = net.certify(blocks, tol)?;
    report.set("certificate_margin", cert.margin);
    Ok(cert)
}

/// Condenses the network and storage when a grouping is given.
fn grouped(
    net: NetworkGraph,
    cert: StorageCertificate,
    group: Option<&str>,
    tol: &Tolerance,
    report: &mut Report,
) -> Result<(NetworkGraph, StorageCertificate)> {
    let Some(spec) = group else { return Ok((net, cert)) };
    let grouping = Grouping::new(&net, &parse_groups(spec)?)?;
    let condensed = condense(&net, &grouping, tol)?;
    let blocks = grouping.condense_storage(&cert)?;
    let cert = condensed.certify(blocks, tol)?;
    let names: Vec<String> = condensed
        .ids()
        .iter()
        .map(|g| format!("{g} = {{{}}}", grouping.members(*g).iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")))
        .collect();
    report.line(format!("groups: {}", names.join("; ")));
    report.set("groups", condensed.ids().iter().map(|g| grouping.members(*g).iter().map(|m| m.0).collect::<Vec<_>>()).collect::<Vec<_>>());
    Ok((condensed, cert))
}

fn execute(cli: &Cli) -> Result<Report> {
    let tol = tolerance(cli)?;
    match &cli.command {
        Command::Lyapunov { file } => lyapunov(file, &tol),
        Command::Decompose { file, alpha, cert, group } => decompose(file, *alpha, cert, group.as_deref(), &tol),
        Command::Verify { file } => verify(file, &tol),
        Command::Robustness { file, edge, system, all, cert, group } => robustness(file, edge, system, *all, cert, group.as_deref(), &tol),
        Command::Example { which: Example::Dcgrid { emit } } => example(emit.as_deref()),
    }
}

fn lyapunov(path: &Path, tol: &Tolerance) -> Result<Report> {
    let file = load(path)?;
    let net = file.network()?;
    let mut report = Report::new(format!("lyapunov {}", path.display()));
    let search = find_additive_lyapunov(&net, tol, &SolverOptions::default())?;
    report.set("status", search.status);
    report.set("iterations", search.result.iterations);
    report.set("worst_margin", search.result.worst_margin);
    report.line(format!("status: {:?} after {} iterations", search.status, search.result.iterations).to_lowercase());
    match (&search.status, &search.certificate) {
        (Status::Feasible, Some(cert)) => {
            report.line(format!(
                "Lyapunov margin {} (min block eigenvalue {})",
                report::number(cert.margin),
                report::number(cert.min_eigenvalue)
            ));
            block_lines(&mut report, &cert.blocks);
            report.line("note: certificates are not unique; any positive multiple is equally valid");
            if let Some(stored) = file.storage(tol)? {
                let first = *cert.blocks.keys().next().expect("networks are nonempty");
                if let Some(p) = stored.get(&first) {
                    let ratio = p.as_mat().norm() / cert.blocks[&first].as_mat().norm();
                    report.line(format!("  rescaled by {} to compare with the file", report::number(ratio)));
                    let rescaled: BTreeMap<SystemId, SymMat> = cert.blocks.iter().map(|(&i, b)| (i, b.scaled(ratio))).collect();
                    block_lines(&mut report, &rescaled);
                }
            }
            report.set("certificate_margin", cert.margin);
            report.set("network", NetworkFile::from_network(&net).with_storage(&cert.blocks));
        }
        (Status::Infeasible, _) => report.downgrade(Outcome::Hypothesis),
        _ => report.downgrade(Outcome::Undecided),
    }
    Ok(report)
}

fn decompose(path: &Path, alpha: f64, source: &CertificateSource, group: Option<&str>, tol: &Tolerance) -> Result<Report> {
    let cfg = DecompositionConfig::new(alpha, 2.0, *tol)?;
    let file = load(path)?;
    let net = file.network()?;
    let mut report = Report::new(format!("decompose {} --alpha {alpha}", path.display()));
    let cert = certificate(&file, &net, source, tol, &mut report)?;
    let (net, cert) = grouped(net, cert, group, tol, &mut report)?;
    if !is_acyclic(&net) {
        return Err(Error::NotAcyclic);
    }
    let dec = decompose_acyclic(&net, &cert, &cfg)?;
    let mut supplies = BTreeMap::new();
    let mut pairs = Vec::new();
    for (&(i, j), pair) in &dec.pairs {
        for (a, b, s) in [(i, j, &pair.forward), (j, i, &pair.backward)] {
            report.line(format!(
                "s_{a}{b}: q = {}, s = {}, r = {}",
                report::matrix(s.q.as_mat()),
                report::matrix(&s.s),
                report::matrix(s.r.as_mat())
            ));
            supplies.insert((a, b), s.clone());
        }
        let v = &pair.verification;
        report.line(format!(
            "  link ({i}, {j}): neutrality residual {}, local margins {} / {}",
            report::number(v.neutrality_residual),
            report::number(v.first.margin),
            report::number(v.second.margin)
        ));
        if let Some(g) = &pair.gamma {
            report.line(format!("  rank extension gamma: input {}, output {}", report::number(g.input), report::number(g.output)));
        }
        pairs.push(json!({
            "link": [i.0, j.0],
            "neutrality_residual": v.neutrality_residual,
            "first_margin": v.first.margin,
            "second_margin": v.second.margin,
            "gamma": pair.gamma.as_ref().map(|g| [g.input, g.output]),
        }));
    }
    let mut local = Vec::new();
    for (id, d) in &dec.local {
        report.line(format!("system {id}: dissipation margin {}", report::number(d.margin)));
        local.push(json!({"system": id.0, "margin": d.margin, "holds": d.holds}));
    }
    if !dec.holds() {
        report.downgrade(Outcome::Hypothesis);
    }
    report.set("alpha", alpha);
    report.set("pairs", pairs);
    report.set("local", local);
    report.set("network", NetworkFile::from_network(&net).with_storage(&cert.blocks).with_supplies(&supplies));
    Ok(report)
}

fn verify(path: &Path, tol: &Tolerance) -> Result<Report> {
    let file = load(path)?;
    let net = file.network()?.without_exogenous();
    let mut report = Report::new(format!("verify {}", path.display()));
    let blocks = file.storage(tol)?.ok_or_else(|| Error::InvalidInput("file has no certificate".into()))?;
    let supplies = file.supply_map(tol)?;
    if supplies.is_empty() {
        return Err(Error::InvalidInput("file has no supplies".into()));
    }
    let missing = |i: SystemId, j: SystemId| Error::InvalidInput(format!("no supply on the port of {i} facing {j}"));
    let mut links = Vec::new();
    for (i, j) in net.undirected_edges() {
        let s_ij = supplies.get(&(i, j)).ok_or_else(|| missing(i, j))?;
        let s_ji = supplies.get(&(j, i)).ok_or_else(|| missing(j, i))?;
        let residual = s_ij.neutrality_residual(s_ji);
        let neutral = residual <= tol.rank_eps;
        report.line(format!("link ({i}, {j}): neutrality residual {} -> {}", report::number(residual), pass(neutral)));
        if !neutral {
            report.downgrade(Outcome::Hypothesis);
        }
        links.push(json!({"link": [i.0, j.0], "neutrality_residual": residual, "neutral": neutral}));
    }
    let mut local = Vec::new();
    for (&id, sys) in net.systems() {
        let parts: Vec<&QuadraticSupply> =
            sys.ports().keys().map(|&j| supplies.get(&(id, j)).ok_or_else(|| missing(id, j))).collect::<Result<_>>()?;
        let p = blocks.get(&id).ok_or(Error::UnknownSystem(id))?;
        let r = dissipativity_residual(&sys.plant().interconnection(), &QuadraticSupply::direct_sum(&parts), p, tol)?;
        report.line(format!("system {id}: dissipation margin {} -> {}", report::number(r.margin), pass(r.holds)));
        if !r.holds {
            report.downgrade(Outcome::Hypothesis);
        }
        local.push(json!({"system": id.0, "margin": r.margin, "holds": r.holds}));
    }
    report.set("links", links);
    report.set("local", local);
    Ok(report)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn certificate_json(c: &RobustnessCertificate) -> serde_json::Value {
    let subject = match c.subject {
        Subject::Edge(i, j) => json!({"edge": [i.0, j.0]}),
        Subject::System(i) => json!({"system": i.0}),
    };
    json!({
        "subject": subject,
        "conclusion": c.conclusion,
        "neutrality_residual": c.neutrality_residual,
        "first_sign_margin": c.first_sign.margin,
        "second_sign_margin": c.second_sign.margin,
        "storage_margin": c.storage.margin,
        "dissipation_margin": c.dissipation.margin,
        "hurwitz": c.samples.iter().map(|(a, s)| json!([a, s])).collect::<Vec<_>>(),
        "discrepancy": c.discrepancy,
    })
}

fn robustness(
    path: &Path,
    edges: &[String],
    systems: &[u32],
    all: bool,
    source: &CertificateSource,
    group: Option<&str>,
    tol: &Tolerance,
) -> Result<Report> {
    if !all && edges.is_empty() && systems.is_empty() {
        return Err(Error::InvalidInput("choose --edge, --system or --all".into()));
    }
    let cfg = DecompositionConfig::new(0.5, 2.0, *tol)?;
    let file = load(path)?;
    let net = file.network()?;
    let mut report = Report::new(format!("robustness {}", path.display()));
    let cert = certificate(&file, &net, source, tol, &mut report)?;
    let (net, cert) = grouped(net, cert, group, tol, &mut report)?;
    let mut subjects: Vec<Subject> = Vec::new();
    for e in edges {
        let (i, j) = parse_edge(e)?;
        net.system(i)?;
        net.system(j)?;
        subjects.push(Subject::Edge(i, j));
    }
    for &s in systems {
        net.system(SystemId(s))?;
        subjects.push(Subject::System(SystemId(s)));
    }
    if all {
        if is_acyclic(&net) {
            subjects.extend(net.undirected_edges().into_iter().map(|(i, j)| Subject::Edge(i, j)));
        } else {
            report.line("links skipped: the network has cycles");
        }
        subjects.extend(net.ids().into_iter().map(Subject::System));
    }
    let mut out = Vec::new();
    for subject in subjects {
        let c = match subject {
            Subject::Edge(i, j) => edge_removal_certificate(&net, &cert, (i, j), &cfg)?,
            Subject::System(i) => system_removal_certificate(&net, &cert, i, &cfg)?,
        };
        let name = match subject {
            Subject::Edge(i, j) => format!("link ({i}, {j})"),
            Subject::System(i) => format!("system {i}"),
        };
        let stable = c.samples.iter().filter(|(_, s)| *s).count();
        report.line(format!(
            "{name}: {} (neutrality {}, sign margins {} / {}, dissipation {}, Hurwitz at {stable}/{} samples)",
            if c.conclusion { "certified" } else { "not certified" },
            report::number(c.neutrality_residual),
            report::number(c.first_sign.margin),
            report::number(c.second_sign.margin),
            report::number(c.dissipation.margin),
            c.samples.len()
        ));
        if let Some(d) = &c.discrepancy {
            report.line(format!("  warning: {d}"));
        }
        if !c.conclusion {
            report.downgrade(Outcome::Hypothesis);
        }
        out.push(certificate_json(&c));
    }
    report.set("certificates", out);
    Ok(report)
}

fn example(emit: Option<&Path>) -> Result<Report> {
    let net = dcgrid::dcgrid_network(&dcgrid::DcGridParameters::default())?;
    let file = NetworkFile::from_network(&net).with_storage(&dcgrid::published_storage());
    let mut report = Report::new("example dcgrid");
    match emit {
        Some(path) => {
            std::fs::write(path, file.to_json()).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
            report.line(format!("wrote {}", path.display()));
        }
        None => report.line(file.to_json()),
    }
    report.set("network", file);
    Ok(report)
}
