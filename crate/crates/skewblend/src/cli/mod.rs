//! Command-line front end. Exit codes: 0 valid certificate, 1 verification
//! failure, 2 input error.

pub mod certificate;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::blending::{
    build_translation_family, verify_conley_moser, verify_covering_with, BlenderSpec, CoveringCertificate, CoveringOptions, Mode,
};
use crate::cones::{verify_stable_cone, verify_unstable_cone};
use crate::cycles_tangencies::cycle::{build_cycle_scenario_with, CycleCertificate};
use crate::cycles_tangencies::probe::{robustness_probe, ProbeTarget};
use crate::cycles_tangencies::scenario::{
    build_tangency_scenario_with, tight_system, verify_tangency_scenario, ScenarioParams, TangencyCertificate,
};
use crate::cycles_tangencies::tangent::{detect_tangent_directions, TangentDirectionReport};
use crate::cycles_tangencies::transition::{find_transition, TransitionSearch, TransitionSource, TransitionWitness};
use crate::cycles_tangencies::verify_cycle;
use crate::error::{Error, Result};
use crate::grassmann::{lift_system, lifted_lipschitz_empirical};
use crate::intersect::{refine_intersection, verify_lambda_u};
use crate::skewproduct::Inequality;
use certificate::{CertificateFile, StageRecord, REPLAY_STAGE};
use config::{load_config, LoadedConfig};

/// Env var fixing the worker thread count.
pub const THREADS_ENV: &str = "SKEWBLEND_THREADS";
/// Replayed slacks must agree to this tolerance.
pub const REPLAY_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(
    name = "skewblend",
    version,
    about = "Certificates for blenders, robust cycles and tangencies in symbolic skew-products"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Finest grid spacing of covering checks.
    #[arg(long, global = true)]
    pub grid: Option<f64>,
    /// Refinement steps, search depth or orbit depth.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Horizon N of tangent-direction checks.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Perturbation size of robustness probes.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Certificate output path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML config with the system and the inputs of the subcommand.
    #[arg(long, global = true, alias = "system", alias = "disc")]
    pub config: Option<PathBuf>,
    /// Existing certificate file to replay or refine.
    #[arg(long, global = true)]
    pub certificate: Option<PathBuf>,
    /// Suppress the summary on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    Tangency,
    Cycle,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Covering criterion on a configured system, or replay of a covering certificate.
    VerifyBlender,
    /// Translation family around a fixed point, self-checked by the covering criterion.
    BuildBlender,
    /// Structural block conditions on `d_cs × d_cu`.
    VerifyConleyMoser,
    /// Nested refinement of a disc against a covering certificate.
    FindIntersection,
    /// Grassmannian lift constants and their empirical check.
    Lift,
    /// Unstable (or stable) cone field certificate.
    VerifyCone,
    /// Shortest transition word from a source to a target region.
    FindTransition,
    /// Replays a cycle certificate.
    VerifyCycle,
    /// Tangent directions at a point; also writes the decay CSV.
    DetectTangency {
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Builds and verifies a tangency or cycle scenario, or replays one.
    BuildScenario {
        #[arg(long)]
        c: Option<usize>,
        #[arg(long)]
        i1: Option<usize>,
        #[arg(long)]
        i2: Option<usize>,
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = ScenarioKind::Tangency)]
        kind: ScenarioKind,
        /// Tangency on a cycle: adds the return transition.
        #[arg(long)]
        on_cycle: bool,
    },
    /// Random perturbations of a cycle or tangency certificate.
    Probe,
}

pub struct Outcome {
    pub file: CertificateFile,
    pub summary: String,
    pub csv: Option<(PathBuf, String)>,
}

/// Runs the CLI and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match execute(&cli) {
        Ok(out) => finish(&cli.global, out),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::Precondition(_) | Error::Construction(_) => 2,
        _ => 1,
    }
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn finish(g: &Global, out: Outcome) -> i32 {
    let written = match &g.out {
        Some(p) => out.file.write(p),
        None => std::io::stdout()
            .write_all(out.file.to_json().as_bytes())
            .map_err(|e| Error::Input(e.to_string())),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    if let Some((path, text)) = &out.csv {
        if let Err(e) = std::fs::write(path, text) {
            eprintln!("error: {}: {e}", path.display());
            return 2;
        }
    }
    if !g.quiet {
        eprintln!("{}", out.summary);
    }
    if out.file.valid {
        0
    } else {
        for s in out.file.stages.iter().filter(|s| !s.valid) {
            eprintln!("FAILED stage {}: {}", s.name, s.detail.as_deref().unwrap_or("inequality violated"));
        }
        1
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::VerifyBlender => verify_blender(g),
        Command::BuildBlender => build_blender(g),
        Command::VerifyConleyMoser => verify_cm(g),
        Command::FindIntersection => find_intersection(g),
        Command::Lift => lift(g),
        Command::VerifyCone => verify_cone(g),
        Command::FindTransition => transition(g),
        Command::VerifyCycle => cycle(g),
        Command::DetectTangency { csv } => detect_tangency(g, csv.as_deref()),
        Command::BuildScenario {
            c,
            i1,
            i2,
            ell,
            eps,
            kind,
            on_cycle,
        } => build_scenario(g, (*c, *i1, *i2, *ell), *eps, *kind, *on_cycle),
        Command::Probe => probe(g),
    }
}

fn config(g: &Global) -> Result<LoadedConfig> {
    let p = g.config.as_ref().ok_or_else(|| Error::Input("--config is required".into()))?;
    Ok(load_config(p)?)
}

fn certificate(g: &Global) -> Result<CertificateFile> {
    let p = g
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Input("--certificate is required".into()))?;
    CertificateFile::read(p)
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Input(format!("--{name} must be positive, got {x}"))),
        _ => Ok(v),
    }
}

fn covering_stage(cert: &CoveringCertificate, name: &str) -> StageRecord {
    StageRecord::new(name, cert.valid, cert.inequalities.clone()).with_detail(cert.failure.as_ref().map(|f| match &f.witness {
        Some(w) => format!("{} at {w:?}", f.reason),
        None => f.reason.clone(),
    }))
}

fn covering_summary(cert: &CoveringCertificate) -> String {
    format!(
        "covering {}: margin {:.6}, Lebesgue number {:.6}, delta_max {:.6}, {} cells",
        if cert.valid { "valid" } else { "INVALID" },
        cert.covering_margin,
        cert.lebesgue_lower,
        cert.delta_max,
        cert.cells_checked
    )
}

fn verify_blender(g: &Global) -> Result<Outcome> {
    if g.certificate.is_some() {
        let file = certificate(g)?;
        file.expect_kind(&["covering"])?;
        let old: CoveringCertificate = file.payload()?;
        let opts = CoveringOptions {
            branches: Some(old.branches.clone()),
            h: Some(positive("grid", g.grid)?.unwrap_or(old.h)),
            ..CoveringOptions::default()
        };
        let cert = verify_covering_with(&old.system, old.mode, &old.b, &old.d, &opts)?;
        let drift = (cert.slack() - old.slack()).abs();
        let mut stages = vec![covering_stage(&cert, "covering")];
        if g.grid.is_none() {
            stages.push(
                StageRecord::new(
                    REPLAY_STAGE,
                    drift <= REPLAY_TOL,
                    vec![Inequality::new("replayed slack drift", drift, REPLAY_TOL)],
                )
                .with_detail((drift > REPLAY_TOL).then(|| format!("slack {} recorded as {}", cert.slack(), old.slack()))),
            );
        }
        let summary = covering_summary(&cert);
        let file = CertificateFile::new("verify-blender", "covering", g.seed, Some(&cert.system), stages, &cert)?;
        return Ok(Outcome { file, summary, csv: None });
    }
    let cfg = config(g)?;
    let sys = cfg.system()?;
    let c = &cfg.config;
    let mode = c.mode.unwrap_or(Mode::Cs);
    let symbols = match &c.symbols {
        Some(_) => cfg.symbol_list("symbols", &c.symbols)?,
        None => (1..=sys.alphabet()).map(|i| crate::shift_space::Symbol(i as u16)).collect(),
    };
    let b = cfg.region("B", &c.b)?;
    let d = cfg.region("D", &c.d)?;
    let h = positive("grid", g.grid.or(c.grid))?;
    let opts = CoveringOptions {
        branches: Some(symbols.iter().map(|s| vec![*s]).collect()),
        h,
        ..CoveringOptions::default()
    };
    let cert = verify_covering_with(&sys, mode, &b, &d, &opts)?;
    let summary = covering_summary(&cert);
    let stages = vec![covering_stage(&cert, "covering")];
    let file = CertificateFile::new("verify-blender", "covering", g.seed, Some(&sys), stages, &cert)?;
    Ok(Outcome { file, summary, csv: None })
}

fn build_blender(g: &Global) -> Result<Outcome> {
    let cfg = config(g)?;
    let c = &cfg.config;
    let phi = cfg
        .require("phi", &c.phi)?
        .to_fiber()
        .map_err(|e| cfg.field_error("phi", e.to_string()))?;
    let point = cfg.require("point", &c.point)?;
    let eps = *cfg.require("eps", &c.eps)?;
    let fam = build_translation_family(&phi, point, eps, c.cs.as_deref())?;
    let nu = *cfg.require("nu", &c.nu)?;
    let sys = tight_system(fam.maps.clone(), nu, c.alpha.unwrap_or(1.0))?;
    let symbols: Vec<_> = (1..=sys.alphabet()).map(|i| crate::shift_space::Symbol(i as u16)).collect();
    let opts = CoveringOptions {
        branches: Some(symbols.iter().map(|s| vec![*s]).collect()),
        h: positive("grid", g.grid.or(c.grid))?,
        ..CoveringOptions::default()
    };
    let cert = verify_covering_with(&sys, Mode::Cs, &fam.b, &fam.d, &opts)?;
    let summary = format!("{} maps, delta {:.6}; {}", fam.k, fam.delta, covering_summary(&cert));
    let stages = vec![covering_stage(&cert, "covering")];
    let file = CertificateFile::new("build-blender", "covering", g.seed, Some(&sys), stages, &cert)?;
    Ok(Outcome { file, summary, csv: None })
}

fn verify_cm(g: &Global) -> Result<Outcome> {
    let cfg = config(g)?;
    let sys = cfg.system()?;
    let c = &cfg.config;
    let symbols = cfg.symbol_list("symbols", &c.symbols)?;
    let d_cs = cfg.region("d_cs", &c.d_cs)?;
    let d_cu = cfg.region("d_cu", &c.d_cu)?;
    let cert = verify_conley_moser(&sys, &symbols, &d_cs, &d_cu)?;
    let summary = format!(
        "structural blocks {}: cs-index {}, slack {:.6}",
        if cert.valid { "valid" } else { "INVALID" },
        cert.cs_index,
        cert.slack()
    );
    let stages = vec![StageRecord::new("conley_moser", cert.valid, cert.inequalities.clone()).with_detail(cert.failure.clone())];
    let file = CertificateFile::new("verify-conley-moser", "conley-moser", g.seed, Some(&sys), stages, &cert)?;
    Ok(Outcome { file, summary, csv: None })
}

#[derive(Serialize, Deserialize)]
struct IntersectionPayload {
    trace: crate::intersect::RefinementTrace,
    lambda_u: crate::intersect::LambdaUReport,
}

fn find_intersection(g: &Global) -> Result<Outcome> {
    let file = certificate(g)?;
    file.expect_kind(&["covering"])?;
    let cov: CoveringCertificate = file.payload()?;
    let cfg = config(g)?;
    let disc = cfg.disc(cov.system.nu(), cov.system.alpha())?;
    let n = g.depth.unwrap_or(12);
    let trace = refine_intersection(&cov, &disc, n)?;
    let mut lens = trace.block_lengths();
    lens.sort_unstable();
    lens.dedup();
    let depth = trace.cumulative().last().copied().unwrap_or(0);
    let lu = verify_lambda_u(&cov.system, (&trace.point, &trace.x), &cov.b, depth, &lens)?;
    let mut ineq = Vec::new();
    for s in &trace.steps {
        ineq.push(Inequality::new(format!("step {} diam V", s.n), s.v_diam, s.v_bound + f64::EPSILON));
        ineq.push(Inequality::new(
            format!("step {} diam A below Lebesgue", s.n),
            0.0,
            s.lebesgue_slack,
        ));
        ineq.push(Inequality::new(format!("step {} backward margin", s.n), 0.0, s.backward_margin));
    }
    let valid = ineq.iter().all(|i| i.holds());
    let stages = vec![
        StageRecord::new("refinement", valid, ineq),
        StageRecord::new(
            "lambda_u",
            lu.member,
            vec![Inequality::new("backward block margin", 0.0, lu.margin)],
        )
        .with_detail(lu.witness.as_ref().map(|w| format!("leaves B at step {}", w.0))),
    ];
    let summary = format!(
        "word {:?}, x = {:?}, error radius {:.3e}",
        trace.word.ids(),
        trace.x,
        trace.error_radius
    );
    let payload = IntersectionPayload { trace, lambda_u: lu };
    let file = CertificateFile::new("find-intersection", "refinement", g.seed, Some(&cov.system), stages, &payload)?;
    Ok(Outcome { file, summary, csv: None })
}

#[derive(Serialize, Deserialize)]
struct LiftPayload {
    lift: crate::grassmann::LiftedSystem,
    empirical: f64,
    samples: usize,
}

fn lift(g: &Global) -> Result<Outcome> {
    let cfg = config(g)?;
    let sys = cfg.system()?;
    let ell = *cfg.require("ell", &cfg.config.ell)?;
    let samples = cfg.config.samples.unwrap_or(1000);
    let lift = lift_system(&sys, ell)?;
    let empirical = lifted_lipschitz_empirical(&lift, samples, g.seed)?;
    let stages = vec![
        StageRecord::new("lift", lift.slack() > 0.0, lift.inequalities.clone()),
        StageRecord::new(
            "empirical",
            empirical <= lift.lifted_bound + 1e-6,
            vec![Inequality::new("empirical lifted Lipschitz", empirical, lift.lifted_bound + 1e-6)],
        ),
    ];
    let summary = format!("lifted bound {:.6}, empirical {:.6}", lift.lifted_bound, empirical);
    let payload = LiftPayload { lift, empirical, samples };
    let file = CertificateFile::new("lift", "lift", g.seed, Some(&sys), stages, &payload)?;
    Ok(Outcome { file, summary, csv: None })
}

fn verify_cone(g: &Global) -> Result<Outcome> {
    let cfg = config(g)?;
    let sys = cfg.system()?;
    let c = &cfg.config;
    let cone = cfg.require("cone", &c.cone)?;
    let region = cfg.region("region", &c.region)?;
    let lambda = *cfg.require("lambda", &c.lambda)?;
    let samples = c.samples.unwrap_or(256);
    let cert = match c.direction.as_deref().unwrap_or("unstable") {
        "unstable" => verify_unstable_cone(&sys, cone, &region, lambda, samples, g.seed)?,
        "stable" => verify_stable_cone(&sys, cone, &region, lambda, samples, g.seed)?,
        other => {
            return Err(cfg
                .field_error("direction", format!("`{other}` is neither unstable nor stable"))
                .into())
        }
    };
    let summary = format!(
        "cone {}: margin {:.6}, expansion {:.6}",
        if cert.valid { "valid" } else { "INVALID" },
        cert.min_margin,
        cert.min_expansion
    );
    let stages = vec![StageRecord::new("cone", cert.valid, cert.inequalities.clone())
        .with_detail(cert.witness.as_ref().map(|w| format!("symbol {} vector {:?}", w.symbol, w.v)))];
    let file = CertificateFile::new("verify-cone", "cone", g.seed, Some(&sys), stages, &cert)?;
    Ok(Outcome { file, summary, csv: None })
}

fn transition(g: &Global) -> Result<Outcome> {
    let cfg = config(g)?;
    let sys = cfg.system()?;
    let c = &cfg.config;
    let source = match (&c.source_points, &c.source) {
        (Some(p), _) => TransitionSource::Points(p.clone()),
        (None, _) => TransitionSource::Region(cfg.region("source", &c.source)?),
    };
    let target = cfg.region("target", &c.target)?;
    let depth = g.depth.or(c.depth).unwrap_or(3);
    let search = find_transition(&sys, &source, &target, depth)?;
    let (stage, summary) = match &search {
        TransitionSearch::Found(w) => (
            StageRecord::new("transition", true, vec![Inequality::new("target margin", 0.0, w.margin)]),
            format!(
                "word {:?}, margin {:.6}",
                w.word.iter().map(|s| s.id()).collect::<Vec<_>>(),
                w.margin
            ),
        ),
        TransitionSearch::NotFound { max_depth, near_miss, .. } => (
            StageRecord::new("transition", false, vec![])
                .with_detail(Some(format!("no word up to length {max_depth}; near miss {near_miss:e}"))),
            format!("no transition up to length {max_depth}"),
        ),
    };
    let file = CertificateFile::new("find-transition", "transition", g.seed, Some(&sys), vec![stage], &search)?;
    Ok(Outcome { file, summary, csv: None })
}

/// Accepts a full cycle certificate or just its blenders and transitions.
#[derive(Deserialize)]
struct CycleInput {
    cs: BlenderSpec,
    cu: BlenderSpec,
    #[serde(default)]
    t12: Option<TransitionWitness>,
    #[serde(default)]
    t21: Option<TransitionWitness>,
}

fn cycle_stages(cert: &CycleCertificate) -> Vec<StageRecord> {
    vec![
        covering_stage(&cert.cs.certificate, "cover_cs"),
        covering_stage(&cert.cu.certificate, "cover_cu"),
        StageRecord::new("cycle", cert.valid, cert.inequalities.clone()),
    ]
}

fn cycle(g: &Global) -> Result<Outcome> {
    let file = certificate(g)?;
    file.expect_kind(&["cycle", "cycle-input"])?;
    let input: CycleInput = file.payload()?;
    let cert = verify_cycle(&input.cs, &input.cu, input.t12.as_ref(), input.t21.as_ref())?;
    let mut stages = cycle_stages(&cert);
    if let Ok(old) = file.payload::<CycleCertificate>() {
        let drift = (old.slack - cert.slack).abs();
        stages.push(StageRecord::new(
            REPLAY_STAGE,
            drift <= REPLAY_TOL,
            vec![Inequality::new("replayed slack drift", drift, REPLAY_TOL)],
        ));
    }
    let summary = format!(
        "cycle {}: co-index {}, slack {:.6}",
        if cert.valid { "valid" } else { "INVALID" },
        cert.co_index,
        cert.slack
    );
    let file = CertificateFile::new("verify-cycle", "cycle", g.seed, Some(cert.system()), stages, &cert)?;
    Ok(Outcome { file, summary, csv: None })
}

/// Rows `n, vector, norm, bound` with `n` ascending, then vector id.
pub fn decay_csv(report: &TangentDirectionReport) -> Result<String> {
    if report.vectors.is_empty() {
        return Err(Error::Input("report has no vectors".into()));
    }
    let n = report.horizon as i64;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Input(e.to_string());
    w.write_record(["n", "vector", "norm", "bound"]).map_err(io)?;
    for k in -n..=n {
        let bound = report.c_bound * report.lambda.powi(k.unsigned_abs() as i32);
        for (id, v) in report.vectors.iter().enumerate() {
            let norm = v.norms[(k + n) as usize];
            w.write_record(&[k.to_string(), id.to_string(), format!("{norm:e}"), format!("{bound:e}")])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

pub fn emit_decay_csv(report: &TangentDirectionReport, path: &Path) -> Result<()> {
    let text = decay_csv(report)?;
    std::fs::write(path, text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn detect_tangency(g: &Global, csv: Option<&Path>) -> Result<Outcome> {
    let (sys, xi, x, candidates, lambda, c_bound, horizon, want) = if g.certificate.is_some() {
        let file = certificate(g)?;
        file.expect_kind(&["tangency"])?;
        let cert: TangencyCertificate = file.payload()?;
        let rep = cert
            .tangent
            .as_ref()
            .ok_or_else(|| Error::Input("tangency certificate carries no tangent report".into()))?;
        let cands = rep.vectors.iter().map(|v| v.v.clone()).collect();
        (
            cert.system.clone(),
            rep.point.clone(),
            rep.x.clone(),
            cands,
            rep.lambda,
            rep.c_bound,
            g.horizon.unwrap_or(rep.horizon),
            Some(cert.layout.ell),
        )
    } else {
        let cfg = config(g)?;
        let c = &cfg.config;
        let sys = cfg.system()?;
        (
            sys,
            cfg.sequence()?,
            cfg.require("x", &c.x)?.clone(),
            cfg.require("candidates", &c.candidates)?.clone(),
            *cfg.require("lambda", &c.lambda)?,
            c.c_bound.unwrap_or(1.0),
            g.horizon.or(c.horizon).unwrap_or(20),
            c.ell,
        )
    };
    let rep = detect_tangent_directions(&sys, (&xi, &x), &candidates, horizon, lambda, c_bound)?;
    let valid = match want {
        Some(l) => rep.d_t == l,
        None => rep.d_t > 0,
    };
    let mut ineq: Vec<Inequality> = rep
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| Inequality::new(format!("vector {i} max ratio"), v.max_ratio, c_bound))
        .collect();
    ineq.sort_by(|a, b| a.name.cmp(&b.name));
    let detail = format!("d_T = {}, rates {:?}/{:?}", rep.d_t, rep.forward_rate, rep.backward_rate);
    let stages = vec![StageRecord::new("tangent_directions", valid, ineq).with_detail(Some(detail.clone()))];
    let csv_path = csv
        .map(Path::to_path_buf)
        .or_else(|| g.out.as_ref().map(|p| p.with_extension("csv")));
    let csv = match csv_path {
        Some(p) => Some((p, decay_csv(&rep)?)),
        None => None,
    };
    let file = CertificateFile::new("detect-tangency", "tangent-directions", g.seed, Some(&sys), stages, &rep)?;
    Ok(Outcome {
        file,
        summary: detail,
        csv,
    })
}

fn tangency_stages(cert: &TangencyCertificate) -> Vec<StageRecord> {
    cert.stages
        .iter()
        .map(|s| {
            let ineq = match s.name.as_str() {
                "constants" => cert.constants.as_ref().map(|r| r.inequalities.clone()),
                "cover_cs" => cert.cover_cs.as_ref().map(|r| r.inequalities.clone()),
                "cover_cu" => cert.cover_cu.as_ref().map(|r| r.inequalities.clone()),
                "conley_moser_cs" => cert.conley_moser_cs.as_ref().map(|r| r.inequalities.clone()),
                "conley_moser_cu" => cert.conley_moser_cu.as_ref().map(|r| r.inequalities.clone()),
                "cone_unstable" => cert.cone_unstable.as_ref().map(|r| r.inequalities.clone()),
                "cone_stable" => cert.cone_stable.as_ref().map(|r| r.inequalities.clone()),
                "lift" => cert.lift.as_ref().map(|r| r.inequalities.clone()),
                "lifted_cover_cs" => cert.lifted_cs.as_ref().map(|r| r.inequalities.clone()),
                "lifted_cover_cu" => cert.lifted_cu.as_ref().map(|r| r.inequalities.clone()),
                _ => None,
            };
            let ineq = ineq.unwrap_or_else(|| {
                s.slack
                    .map(|v| vec![Inequality::new(format!("{} margin", s.name), 0.0, v)])
                    .unwrap_or_default()
            });
            StageRecord::new(s.name.clone(), s.valid, ineq).with_detail(s.detail.clone())
        })
        .collect()
}

fn tangency_summary(cert: &TangencyCertificate) -> String {
    format!(
        "tangency {}: alphabet {}, d_T {:?}, c_T {}, rates {:?}/{:?}, slack {:.6}{}",
        if cert.valid { "valid" } else { "INVALID" },
        cert.alphabet,
        cert.d_t,
        cert.c_t,
        cert.forward_rate,
        cert.backward_rate,
        cert.slack,
        cert.failed_stage.as_ref().map(|s| format!(", failed at {s}")).unwrap_or_default()
    )
}

fn build_scenario(
    g: &Global,
    dims: (Option<usize>, Option<usize>, Option<usize>, Option<usize>),
    eps: f64,
    kind: ScenarioKind,
    on_cycle: bool,
) -> Result<Outcome> {
    if g.certificate.is_some() {
        // replay from the embedded system and layout
        let file = certificate(g)?;
        file.expect_kind(&["tangency"])?;
        let old: TangencyCertificate = file.payload()?;
        let cert = verify_tangency_scenario(&old.system, &old.layout)?;
        let drift = (cert.slack - old.slack).abs();
        let mut stages = tangency_stages(&cert);
        stages.push(StageRecord::new(
            REPLAY_STAGE,
            drift <= REPLAY_TOL,
            vec![Inequality::new("replayed slack drift", drift, REPLAY_TOL)],
        ));
        let summary = tangency_summary(&cert);
        let file = CertificateFile::new("build-scenario", "tangency", g.seed, Some(&cert.system), stages, &cert)?;
        return Ok(Outcome { file, summary, csv: None });
    }
    let need = |v: Option<usize>, n: &str| v.ok_or_else(|| Error::Input(format!("--{n} is required")));
    let c = need(dims.0, "c")?;
    let i1 = need(dims.1, "i1")?;
    let i2 = need(dims.2, "i2")?;
    let mut params = ScenarioParams {
        seed: g.seed,
        cycle: on_cycle,
        ..ScenarioParams::default()
    };
    if let Some(h) = g.horizon {
        params.horizon = h;
    }
    if let Some(d) = g.depth {
        params.refine_steps = d;
    }
    match kind {
        ScenarioKind::Tangency => {
            let ell = need(dims.3, "ell")?;
            let (sys, cert) = build_tangency_scenario_with(c, i1, i2, ell, eps, &params)?;
            let summary = tangency_summary(&cert);
            let file = CertificateFile::new("build-scenario", "tangency", g.seed, Some(&sys), tangency_stages(&cert), &cert)?;
            Ok(Outcome { file, summary, csv: None })
        }
        ScenarioKind::Cycle => {
            let (sys, cert) = build_cycle_scenario_with(c, i1, i2, eps, &params)?;
            let summary = format!(
                "cycle {}: co-index {}, slack {:.6}",
                if cert.valid { "valid" } else { "INVALID" },
                cert.co_index,
                cert.slack
            );
            let file = CertificateFile::new("build-scenario", "cycle", g.seed, Some(&sys), cycle_stages(&cert), &cert)?;
            Ok(Outcome { file, summary, csv: None })
        }
    }
}

fn probe(g: &Global) -> Result<Outcome> {
    let file = certificate(g)?;
    file.expect_kind(&["tangency", "cycle"])?;
    let eta = g.eta.ok_or_else(|| Error::Input("--eta is required".into()))?;
    let trials = g.trials.unwrap_or(100);
    let (report, sys) = if file.kind == "tangency" {
        let cert: TangencyCertificate = file.payload()?;
        (
            robustness_probe(ProbeTarget::Tangency(&cert), eta, trials, g.seed)?,
            cert.system.clone(),
        )
    } else {
        let cert: CycleCertificate = file.payload()?;
        (
            robustness_probe(ProbeTarget::Cycle(&cert), eta, trials, g.seed)?,
            cert.system().clone(),
        )
    };
    let mut stages = vec![StageRecord::new(
        "probe",
        report.all_passed(),
        vec![Inequality::new("min slack over trials", 0.0, report.min_slack)],
    )];
    let mut names: Vec<&str> = report.failures.iter().map(|f| f.stage.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    for n in names {
        let first = report.failures.iter().find(|f| f.stage == n).expect("name taken from failures");
        let count = report.failures.iter().filter(|f| f.stage == n).count();
        stages.push(
            StageRecord::new(n, false, vec![])
                .with_detail(Some(format!("{count} trial(s), first trial {}: {}", first.trial, first.detail))),
        );
    }
    let summary = format!(
        "probe eta {eta:e}: {}/{} passed, min slack {:.6} (base {:.6})",
        report.passed, report.trials, report.min_slack, report.base_slack
    );
    let file = CertificateFile::new("probe", "probe", g.seed, Some(&sys), stages, &report)?;
    Ok(Outcome { file, summary, csv: None })
}
