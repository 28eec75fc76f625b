//! Command-line front end for proplab.
//!
//! Every subcommand writes its outputs to `--out` and returns exit code 0 when
//! its checks pass, 1 when a check fails or a run errors, 2 on usage errors.

pub mod report;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

use proplab::acceptance::{self, summary_line, CRITERIA};
use proplab::config::{named_chart, ExperimentConfig};
use proplab::dirac::{beta_form, build_clifford, dirac_positivity_suite, discrete_adjoint_gaps, metric_diag, DiracTestSet};
use proplab::geometry::{flow_bicharacteristic, linspace_params, null_completion, FlowOptions, GeometryError, MetricChart, PhasePoint};
use proplab::linalg::{max_abs, CMat};
use proplab::minkowski_qft::*;
use proplab::model_space::positivity_sweep;
use proplab::symbols::{corpus, subprincipal, verify_identity, weitzenbock_assemble, IdentityKind};
use proplab::transport::{parallel_transport, transport_symbol, BasePath, TransportProblem};
use proplab::wf_probe::{decay_exponents, default_scales, singular_directions, uniform_directions, SampledField, DIRECTION_COUNT, R2_MIN};

use report::{config_hash, emit_report, format_float, write_json, write_text, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "proplab", version, about = "Propagator and wavefront checks at desk scale")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a bicharacteristic and tabulate the drift of p.
    Flow(FlowArgs),
    /// Check the symbol identities on a seeded corpus.
    Symbols(SeedArgs),
    /// Compare transported symbols with parallel transport.
    Transport(TransportArgs),
    /// Positivity sweep of the model-space forms.
    Model(ModelArgs),
    /// Compute a Klein–Gordon kernel on the lattice.
    Qft(QftArgs),
    /// Clifford, β-form and Pauli–Jordan checks for the Dirac operator.
    #[command(subcommand)]
    Dirac(DiracCommand),
    /// Wavefront probes of sampled fields.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Run a check suite and write report.json.
    #[command(subcommand)]
    Suite(SuiteCommand),
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// `minkowski` or `frw:a=<expr>`; ignored when --config is given.
    #[arg(long, default_value = "minkowski")]
    pub chart: String,
    /// Covector ξ at the seed point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi: Option<Vec<f64>>,
    /// Seed point (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long)]
    pub smax: Option<f64>,
    /// Number of output samples after the seed.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Instances per identity.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[arg(long, default_value = "frw:a=exp(0.1*x0)")]
    pub chart: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub segments: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KernelChoice {
    Ret,
    Adv,
    Causal,
    Feynman,
    Wightman,
}

#[derive(Debug, Args)]
pub struct QftArgs {
    #[arg(long, value_enum, default_value = "ret")]
    pub kernel: KernelChoice,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// Half-width L of the periodic space interval.
    #[arg(long, default_value_t = 8.0)]
    pub l: f64,
    #[arg(long, default_value_t = 512)]
    pub nx: usize,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    /// Feynman regulator before extrapolation.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
}

#[derive(Debug, Subcommand)]
pub enum DiracCommand {
    /// Build the Clifford representation and check its relations.
    Clifford {
        #[arg(long)]
        n: usize,
    },
    /// Eigenvalues of the β-form for a vector N.
    Beta {
        #[arg(long = "N", value_delimiter = ',', allow_hyphen_values = true)]
        n_vec: Vec<f64>,
    },
    /// Positivity suite for the 1+1 Dirac propagators.
    Suite {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Windowed-Fourier wavefront probe of a sampled field.
    Wf {
        /// CSV with columns t,x,re,im on a full grid.
        #[arg(long)]
        input: PathBuf,
        /// Probe point `t,x`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
        /// Window width in cells.
        #[arg(long, default_value_t = 8.0)]
        sigma: f64,
        #[arg(long, default_value_t = 2.0)]
        threshold: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum SuiteCommand {
    /// All ten acceptance criteria.
    Acceptance {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// Parse `argv` and run; returns the process exit code.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `PROPLAB_THREADS` caps the worker pool.
fn configure_threads() {
    if let Some(n) = std::env::var("PROPLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A pool that is already built keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, CliError> {
    cli.config.as_deref().map(|p| ExperimentConfig::from_path(p).map_err(usage)).transpose()
}

fn config_text(cli: &Cli) -> Result<Option<String>, CliError> {
    cli.config
        .as_deref()
        .map(|p| {
            std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })
        })
        .transpose()
}

pub fn run(cli: &Cli) -> Result<bool, CliError> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Flow(a) => flow(a, load_config(cli)?, out),
        Command::Symbols(a) => symbols(a, out),
        Command::Transport(a) => transport(a, load_config(cli)?, out),
        Command::Model(a) => model(a, out),
        Command::Qft(a) => qft(a, out),
        Command::Dirac(d) => dirac(d, out),
        Command::Probe(ProbeCommand::Wf {
            input,
            point,
            sigma,
            threshold,
        }) => probe_wf(input, point, *sigma, *threshold, out),
        Command::Suite(SuiteCommand::Acceptance { seed }) => suite(*seed, config_text(cli)?, out),
    }
}

#[derive(Debug, Default, Deserialize)]
struct FlowSection {
    xi: Option<Vec<f64>>,
    x: Option<Vec<f64>>,
    smax: Option<f64>,
}

fn flow(a: &FlowArgs, cfg: Option<ExperimentConfig>, out: &Path) -> Result<bool, CliError> {
    let section: FlowSection = match &cfg {
        Some(c) => c.section("flow").map_err(usage)?.unwrap_or_default(),
        None => FlowSection::default(),
    };
    let xi = a.xi.clone().or(section.xi).ok_or_else(|| usage("--xi is required"))?;
    let chart = match &cfg {
        Some(c) => c.chart().map_err(usage)?,
        None => named_chart(&a.chart, xi.len()).map_err(usage)?,
    };
    if xi.len() != chart.dim() {
        return Err(usage(format!("ξ has {} components, chart dimension is {}", xi.len(), chart.dim())));
    }
    let x = a.x.clone().or(section.x).unwrap_or_else(|| vec![0.0; chart.dim()]);
    if x.len() != chart.dim() {
        return Err(usage("--x must match the chart dimension"));
    }
    let smax = a.smax.or(section.smax).unwrap_or(10.0);
    let seed = PhasePoint::new(x, xi);
    let (bic, exited) = match flow_bicharacteristic(&chart, &seed, &linspace_params(smax, a.samples.max(1)), &FlowOptions::default()) {
        Ok(b) => (b, false),
        Err(GeometryError::ChartExit(partial)) => (*partial, true),
        Err(e) => return Err(usage(e)),
    };
    let p0 = bic.samples[0].p;
    let n = chart.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["s".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("xi{i}")));
    header.extend(["p".into(), "p_drift".into()]);
    w.write_record(&header).map_err(compute)?;
    let mut worst: f64 = 0.0;
    for smp in &bic.samples {
        let nrm2: f64 = smp.xi.iter().map(|v| v * v).sum();
        let drift = (smp.p - p0).abs() / nrm2;
        worst = worst.max(drift);
        let mut row = vec![format_float(smp.s)];
        row.extend(smp.x.iter().chain(&smp.xi).map(|v| format_float(*v)));
        row.extend([format_float(smp.p), format_float(drift)]);
        w.write_record(&row).map_err(compute)?;
    }
    let bytes = w.into_inner().map_err(compute)?;
    write_text(&out.join("flow.csv"), &String::from_utf8(bytes).map_err(compute)?)?;
    let pass = worst <= 1e-9 && !exited;
    println!("flow {}: max p_drift {:.3e}{}", chart.name(), worst, if exited { " (left the chart)" } else { "" });
    Ok(pass)
}

fn symbols(a: &SeedArgs, out: &Path) -> Result<bool, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "instance", "residual"]).map_err(compute)?;
    let mut worst: f64 = 0.0;
    for kind in IdentityKind::ALL {
        for k in 0..a.count {
            let case = corpus::identity_case(&mut rng, kind, 2, 2);
            let pts = corpus::phase_cloud(&mut rng, 2, 20);
            let r = verify_identity(&case, &pts).map_err(compute)?;
            worst = worst.max(r);
            w.write_record([kind.name().to_string(), k.to_string(), format_float(r)]).map_err(compute)?;
        }
    }
    let bytes = w.into_inner().map_err(compute)?;
    write_text(&out.join("symbols.csv"), &String::from_utf8(bytes).map_err(compute)?)?;
    println!("symbols: max residual {worst:.3e}");
    Ok(worst <= 1e-6)
}

fn random_a0(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    use rand::Rng;
    CMat::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn transport(a: &TransportArgs, cfg: Option<ExperimentConfig>, out: &Path) -> Result<bool, CliError> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (chart, conn, pot): (MetricChart, _, _) = match &cfg {
        Some(c) => (c.chart().map_err(usage)?, c.connection().map_err(usage)?, c.potential().map_err(usage)?),
        None => {
            let chart = named_chart(&a.chart, 2).map_err(usage)?;
            (chart, corpus::connection(&mut rng, 2, 2), corpus::potential(&mut rng, 2, 2))
        }
    };
    if chart.dim() != 2 {
        return Err(usage("transport runs on 1+1 charts"));
    }
    let op = weitzenbock_assemble(&chart, &conn, &pot).map_err(compute)?;
    let sub = subprincipal(&op, &chart).map_err(compute)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment", "max_gap"]).map_err(compute)?;
    let mut worst: f64 = 0.0;
    for k in 0..a.segments {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let s = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let pt = null_completion(&chart, &x, &[s], true).map_err(compute)?;
        let bic = flow_bicharacteristic(&chart, &pt, &linspace_params(1.0, 200), &FlowOptions::default()).map_err(compute)?;
        let a0 = random_a0(&mut rng, conn.rank);
        let sym = transport_symbol(&TransportProblem::along(&bic, &sub, a0.clone())).map_err(compute)?;
        let path = BasePath::from_bicharacteristic(&chart, &bic).map_err(compute)?;
        let pt_sol = parallel_transport(&conn, &path, &a0).map_err(compute)?;
        let gap = sym.iter().zip(&pt_sol).map(|(p, q)| max_abs(&(p - q))).fold(0.0, f64::max);
        worst = worst.max(gap);
        w.write_record([k.to_string(), format_float(gap)]).map_err(compute)?;
    }
    let bytes = w.into_inner().map_err(compute)?;
    write_text(&out.join("transport.csv"), &String::from_utf8(bytes).map_err(compute)?)?;
    println!("transport: max gap {worst:.3e}");
    Ok(worst <= 1e-8)
}

fn model(a: &ModelArgs, out: &Path) -> Result<bool, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let s = positivity_sweep(&mut rng, a.count);
    let pass = s.min_form_rel >= -1e-14 && s.max_bilinear_gap <= 1e-12 && s.min_feynman_ratio >= -1e-10;
    let v = json!({
        "seed": a.seed,
        "sections": s.sections,
        "min_form": s.min_form,
        "min_form_rel": s.min_form_rel,
        "max_bilinear_gap": s.max_bilinear_gap,
        "min_feynman_ratio": s.min_feynman_ratio,
        "max_feynman_excess": s.max_feynman_excess,
        "pass": pass,
    });
    write_json(&out.join("model.json"), &v)?;
    println!("model: {} sections, min form/‖u‖² {:.3e}", s.sections, s.min_form_rel);
    Ok(pass)
}

fn kernel_csv(k: &KernelField) -> Result<String, CliError> {
    let g = &k.grid;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "re", "im"]).map_err(compute)?;
    for n in 0..g.nt {
        for j in 0..g.nx {
            let v = k.get(n, j);
            w.write_record([format_float(g.t(n)), format_float(g.x(j)), format_float(v.re), format_float(v.im)])
                .map_err(compute)?;
        }
    }
    String::from_utf8(w.into_inner().map_err(compute)?).map_err(compute)
}

fn qft(a: &QftArgs, out: &Path) -> Result<bool, CliError> {
    let g = SpacetimeGrid::with_cfl(a.l, a.nx, a.cfl, a.nx / 2).map_err(usage)?;
    let k = match a.kernel {
        KernelChoice::Ret => kg_green(GreenKind::Ret, a.mass, &g),
        KernelChoice::Adv => kg_green(GreenKind::Adv, a.mass, &g),
        KernelChoice::Causal => kg_causal(a.mass, &g),
        KernelChoice::Feynman => kg_feynman_extrapolated(a.mass, a.eps, &g),
        KernelChoice::Wightman => kg_wightman(a.mass, &g),
    }
    .map_err(usage)?;
    write_text(&out.join("kernel.csv"), &kernel_csv(&k)?)?;
    let (residual, pass) = match a.kernel {
        KernelChoice::Wightman | KernelChoice::Causal => {
            let r = bisolution_residual(&k, a.mass);
            (json!({"bisolution": r}), r <= 1e-3)
        }
        _ => {
            let r = kg_residual(&k, a.mass);
            (json!({"source_ratio": r.source_ratio, "off_source": r.off_source}), r.off_source <= 1e-3)
        }
    };
    let v = json!({
        "kernel": k.kind.name(),
        "mass": a.mass,
        "grid": {"nt": g.nt, "nx": g.nx, "dt": g.dt, "dx": g.dx},
        "residual": residual,
        "pass": pass,
    });
    write_json(&out.join("qft.json"), &v)?;
    println!("qft {}: {}", k.kind.name(), v["residual"]);
    Ok(pass)
}

fn complex_json(z: Complex64) -> Value {
    json!({"re": z.re, "im": z.im})
}

fn dirac(cmd: &DiracCommand, out: &Path) -> Result<bool, CliError> {
    let (name, v, pass) = match cmd {
        DiracCommand::Clifford { n } => {
            let rep = build_clifford(*n).map_err(usage)?;
            let gaps = discrete_adjoint_gaps(&rep, 0);
            let defect = rep.clifford_defect();
            let pass = defect == 0.0 && gaps.skew <= 1e-10;
            let v = json!({
                "n": n,
                "spinor_size": rep.size(),
                "clifford_defect": defect,
                "skew_adjoint_gap": gaps.skew,
                "selfadjoint_gap": gaps.selfadjoint,
                "pass": pass,
            });
            ("clifford", v, pass)
        }
        DiracCommand::Beta { n_vec } => {
            let rep = build_clifford(n_vec.len()).map_err(usage)?;
            let b = beta_form(&rep, n_vec).map_err(usage)?;
            let q: f64 = n_vec.iter().enumerate().map(|(mu, v)| metric_diag(mu) * v * v).sum();
            let class = if q < 0.0 && n_vec[0] > 0.0 {
                "future_timelike"
            } else if q < 0.0 {
                "past_timelike"
            } else if q > 0.0 {
                "spacelike"
            } else {
                "null"
            };
            // Future timelike ⇒ definite, spacelike ⇒ indefinite.
            let pass = match class {
                "future_timelike" => b.positive_definite,
                "spacelike" => b.indefinite(),
                _ => true,
            };
            let v = json!({
                "N": n_vec,
                "class": class,
                "eigenvalues": b.eigenvalues,
                "positive_definite": b.positive_definite,
                "indefinite": b.indefinite(),
                "pass": pass,
            });
            ("beta", v, pass)
        }
        DiracCommand::Suite { seed } => {
            let rep = build_clifford(2).map_err(compute)?;
            let g = SpacetimeGrid::desk();
            let r = dirac_positivity_suite(&rep, &g, &DiracTestSet::random(&g, 20, *seed)).map_err(compute)?;
            let v = json!({
                "seed": seed,
                "calibration": {
                    "sigma": complex_json(r.sigma),
                    "omega_phase": complex_json(r.omega_phase),
                    "reference_q": complex_json(r.reference_q),
                    "reference_minus": r.reference_minus,
                },
                "q": r.q,
                "max_imag": r.max_imag,
                "min_eig": r.min_eig,
                "split_gap": r.split_gap,
                "plus_min_eig": r.plus_min_eig,
                "minus_min_eig": r.minus_min_eig,
                "d_residual_plus": r.d_residual_plus,
                "d_residual_minus": r.d_residual_minus,
                "omega_min_eig": r.omega_min_eig,
                "euclid_imag": r.euclid_imag,
                "verdicts": {
                    "reality": r.reality_ok(),
                    "split": r.split_ok(),
                    "omega": r.omega_ok(),
                    "control": r.control_ok(),
                },
                "pass": r.passes(),
            });
            ("dirac_suite", v, r.passes())
        }
    };
    write_json(&out.join(format!("{name}.json")), &v)?;
    println!("{}", report::canonical_json(&v).trim_end());
    Ok(pass)
}

#[derive(Debug, Deserialize)]
struct Sample {
    t: f64,
    x: f64,
    re: f64,
    im: f64,
}

/// Read a full-grid `t,x,re,im` CSV in row-major (t outer) order.
pub fn read_field(path: &Path) -> Result<SampledField, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let rows: Vec<Sample> = r
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if rows.len() < 4 {
        return Err(usage(format!("{}: too few samples", path.display())));
    }
    let nx = rows.iter().take_while(|s| s.t == rows[0].t).count();
    if nx < 2 || rows.len() % nx != 0 {
        return Err(usage(format!("{}: not a full rectangular grid", path.display())));
    }
    let nt = rows.len() / nx;
    let (dt, dx) = (rows[nx].t - rows[0].t, rows[1].x - rows[0].x);
    let values = rows.iter().map(|s| Complex64::new(s.re, s.im)).collect();
    SampledField::new(nt, nx, dt, dx, (rows[0].t, rows[0].x), values).map_err(usage)
}

fn probe_wf(input: &Path, point: &[f64], sigma_cells: f64, threshold: f64, out: &Path) -> Result<bool, CliError> {
    if point.len() != 2 {
        return Err(usage("--point expects t,x"));
    }
    let f = read_field(input)?;
    let h = f.h();
    let dirs = uniform_directions(DIRECTION_COUNT, 0.0);
    let p = f.snap(point[0], point[1]);
    let prof = decay_exponents(&f, p, sigma_cells * h, &dirs, &default_scales(h)).map_err(usage)?;
    let flags: Vec<usize> = singular_directions(&prof, threshold).iter().map(|d| d.index).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta", "alpha", "r2", "flagged"]).map_err(compute)?;
    for (j, fit) in prof.fits.iter().enumerate() {
        let theta = fit.theta[1].atan2(fit.theta[0]);
        w.write_record([format_float(theta), format_float(fit.alpha), format_float(fit.r2), flags.contains(&j).to_string()])
            .map_err(compute)?;
    }
    write_text(&out.join("probe.csv"), &String::from_utf8(w.into_inner().map_err(compute)?).map_err(compute)?)?;
    let low = prof.fits.iter().enumerate().filter(|(j, f)| flags.contains(j) && f.r2 < R2_MIN).count();
    println!("probe at ({:.4}, {:.4}): {} flagged, {} low confidence", p.0, p.1, flags.len(), low);
    Ok(true)
}

#[derive(Serialize)]
struct HashInput<'a> {
    suite: &'a str,
    criteria: Vec<(&'a str, Option<f64>)>,
    config: Option<String>,
}

fn suite(seed: u64, config: Option<String>, out: &Path) -> Result<bool, CliError> {
    let input = HashInput {
        suite: "acceptance",
        criteria: CRITERIA.to_vec(),
        config,
    };
    let hash = config_hash(&serde_json::to_value(&input).map_err(compute)?);
    let records = acceptance::run_all(seed);
    for r in &records {
        println!("{}", summary_line(r));
    }
    let report = RunReport::new(hash, seed, records);
    emit_report(&report, out)?;
    println!("overall: {}", if report.pass { "PASS" } else { "FAIL" });
    Ok(report.pass)
}
