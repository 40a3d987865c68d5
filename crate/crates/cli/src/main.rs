use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carlfel::bloch::Variant;
use carlfel::classical::Placement;
use carlfel::harness::output::{write_report, write_run};
use carlfel::harness::presets::{conservation_checks, run_preset, Preset, PresetOptions};
use carlfel::harness::{compare_results, run_model, Check, ModelKind, Report, RunConfig};
use carlfel::integrate::IntegratorConfig;
use carlfel::scaling::{carl_scaling, fel_scaling, CarlPhysicalParams, FelPhysicalParams, PhysicalConstants};
use carlfel::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

/// Overrides the output directory of every subcommand unless --out is given.
const OUT_DIR_ENV: &str = "CARLFEL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "carlfel-out";

#[derive(Parser)]
#[command(
    name = "carlfel",
    version,
    about = "Recoil-lasing models: classical, quantum, phase-space and two-level"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one model from a config file and/or flags.
    Run(RunArgs),
    /// Run a named experiment and write its report.
    Preset(PresetArgs),
    /// Compare two runs sharing rho_bar, delta and seed.
    Compare(CompareArgs),
    /// Map laboratory parameters onto (rho_bar, delta).
    Scaling(ScalingArgs),
    /// Run the conservation suite on short runs of every model.
    Validate(ValidateArgs),
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Collective parameter rho_bar.
    #[arg(long = "rho", allow_hyphen_values = true)]
    rho_bar: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Seed field, "re" or "re,im".
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    a0: Option<Complex64>,
    #[arg(long)]
    tau_end: Option<f64>,
    /// Fixed-step RK4 with this step.
    #[arg(long, conflicts_with = "rtol")]
    dt: Option<f64>,
    /// Adaptive RK45 with this relative tolerance (atol = rtol / 100).
    #[arg(long)]
    rtol: Option<f64>,
    /// Random particle placement with this seed (classical model).
    #[arg(long)]
    seed: Option<u64>,
    /// Two-level coupling variant.
    #[arg(long)]
    variant: Option<Variant>,
    /// Stop after this many intensity peaks (0 runs to tau_end).
    #[arg(long)]
    peaks: Option<u32>,
    /// Particles in classical runs.
    #[arg(long)]
    particles: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model when no config is given.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name; omit with --list.
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    /// List presets and exit.
    #[arg(long)]
    list: bool,
    /// Particles in classical runs.
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Config of the compared run.
    model: PathBuf,
    /// Config of the reference run; its first peak ends the window.
    reference: PathBuf,
    /// Pass threshold on the relative L-infinity distance of |A|^2.
    #[arg(long)]
    limit: Option<f64>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[command(subcommand)]
    system: ScalingSystem,
}

#[derive(Subcommand)]
enum ScalingSystem {
    /// Free-electron laser (electron constants, SI units).
    Fel {
        #[arg(long)]
        lambda_w: f64,
        #[arg(long)]
        a_w: f64,
        #[arg(long)]
        gamma0: f64,
        /// Electron density (m^-3).
        #[arg(long)]
        density: f64,
        #[arg(long)]
        lambda_r: f64,
    },
    /// Collective atomic recoil laser (SI units).
    Carl {
        #[arg(long)]
        rabi_omega: f64,
        #[arg(long, allow_hyphen_values = true)]
        detuning_pump: f64,
        #[arg(long)]
        gamma_decay: f64,
        #[arg(long)]
        dipole_d: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        omega_p: f64,
        /// Atomic density (m^-3).
        #[arg(long)]
        density: f64,
        #[arg(long, value_enum, default_value_t = Species::Rb87)]
        species: Species,
        /// Atomic mass in kg; overrides --species.
        #[arg(long)]
        mass: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Species {
    Rb87,
}

#[derive(Args)]
struct ValidateArgs {
    /// Also run every preset.
    #[arg(long)]
    full: bool,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let mut parts = s.split(',').map(|p| p.trim().parse::<f64>());
    let re = parts.next().ok_or("empty value")?.map_err(|e| e.to_string())?;
    let im = parts.next().transpose().map_err(|e| e.to_string())?.unwrap_or(0.0);
    if parts.next().is_some() {
        return Err("expected \"re\" or \"re,im\"".into());
    }
    Ok(Complex64::new(re, im))
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Outcome of a subcommand that completed without an error.
enum Verdict {
    Passed,
    Failed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integration(_) | Error::Invariant(_) | Error::LadderGuard { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<&Path>) -> PathBuf {
    flag.or_else(|| config.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn apply(cfg: &mut RunConfig, o: &Overrides) -> Result<(), Error> {
    if let Some(v) = o.rho_bar {
        cfg.rho_bar = v;
    }
    if let Some(v) = o.delta {
        cfg.delta = v;
    }
    if let Some(v) = o.a0 {
        cfg.a0 = v;
    }
    if let Some(v) = o.tau_end {
        cfg.tau_end = v;
    }
    if let Some(dt) = o.dt {
        cfg.integrator =
            IntegratorConfig { max_steps: cfg.integrator.max_steps, ..IntegratorConfig::rk4(dt, 1) };
    }
    if let Some(rtol) = o.rtol {
        let sample = cfg.integrator.sample_interval();
        cfg.integrator = IntegratorConfig {
            max_steps: cfg.integrator.max_steps,
            ..IntegratorConfig::rk45(rtol, rtol * 1e-2, sample)
        };
    }
    if let Some(seed) = o.seed {
        cfg.initial.placement = Placement::SeededRandom { seed };
    }
    if let Some(v) = o.variant {
        cfg.variant = v;
    }
    if let Some(n) = o.peaks {
        cfg.stop_after_peaks = (n > 0).then_some(n);
    }
    if let Some(n) = o.particles {
        cfg.initial.particles = n;
    }
    cfg.validate()
}

fn print_checks(report: &Report) {
    for c in &report.checks {
        println!("{}", c.line());
    }
}

fn verdict(report: &Report) -> Verdict {
    if report.passed {
        Verdict::Passed
    } else {
        Verdict::Failed
    }
}

fn cmd_run(args: RunArgs) -> Result<Verdict, Error> {
    let mut cfg = match (&args.config, args.model) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(model)) => RunConfig::new(model, 1.0, 1.0, 400.0),
        (None, None) => return Err(Error::Config("give --config or --model".into())),
    };
    if let (Some(_), Some(model)) = (&args.config, args.model) {
        cfg.model = model;
    }
    apply(&mut cfg, &args.overrides)?;
    let dir = out_dir(args.out, cfg.outputs.dir.as_deref());
    let result = run_model(&cfg)?;
    let label = cfg.model.name();
    let mut report = Report::new("run", label);
    if let Some(p) = result.first_peak() {
        report.metric("first_peak_tau", p.tau);
        report.metric("first_peak_abs_A2", p.value);
    }
    if let Some(s) = &result.snapshot {
        report.metric("mean_p_at_first_peak", s.mean_p);
        report.metric("density_contrast_at_first_peak", s.density_contrast());
    }
    conservation_checks(&mut report, label, &result);
    report.add_run(label, &result);
    for f in write_run(&dir, label, &result)? {
        log::info!("wrote {}", f.display());
    }
    write_report(&dir.join(format!("{label}_report.json")), &report)?;
    std::fs::write(dir.join(format!("{label}_config.json")), cfg.to_json()? + "\n")?;
    print_checks(&report);
    Ok(verdict(&report))
}

fn cmd_preset(args: PresetArgs) -> Result<Verdict, Error> {
    if args.list {
        for p in Preset::ALL {
            println!("{:<18} {}", p.name(), p.description());
        }
        return Ok(Verdict::Passed);
    }
    let preset: Preset = args.name.as_deref().unwrap_or_default().parse()?;
    let mut opts = PresetOptions::default();
    if let Some(n) = args.particles {
        opts.particles = n;
    }
    let outcome = run_preset(preset, &opts)?;
    let dir = out_dir(args.out, None).join(preset.name());
    outcome.write(&dir)?;
    print_checks(&outcome.report);
    Ok(verdict(&outcome.report))
}

fn cmd_compare(args: CompareArgs) -> Result<Verdict, Error> {
    let (a, b) = (RunConfig::load(&args.model)?, RunConfig::load(&args.reference)?);
    // same validation as the library entry point, but keep both results
    carlfel::harness::compare::check_pairing(&a, &b)?;
    let (ra, rb) = (run_model(&a)?, run_model(&b)?);
    let c = compare_results(&ra, &rb)?;
    let mut report = Report::new("compare", format!("{}-vs-{}", c.model, c.reference));
    report.metric("tau_start", c.tau_start);
    report.metric("tau_end", c.tau_end);
    for row in &c.table {
        report.metric(&format!("{}/linf", row.observable), row.linf);
        report.metric(&format!("{}/l2", row.observable), row.l2);
        println!("{:<22} linf {:.6e}  l2 {:.6e}", row.observable, row.linf, row.l2);
    }
    if let Some(limit) = args.limit {
        report.check(Check::below("abs_A2_linf", c.linf, limit));
    }
    report.add_run("model", &ra);
    report.add_run("reference", &rb);
    let dir = out_dir(args.out, None);
    write_report(&dir.join("compare_report.json"), &report)?;
    print_checks(&report);
    Ok(verdict(&report))
}

fn cmd_scaling(args: ScalingArgs) -> Result<Verdict, Error> {
    let text = match args.system {
        ScalingSystem::Fel { lambda_w, a_w, gamma0, density, lambda_r } => {
            let p = FelPhysicalParams { lambda_w, a_w, gamma0, density_n: density, lambda_r };
            serde_json::to_string_pretty(&fel_scaling(&p, &PhysicalConstants::electron())?)?
        }
        ScalingSystem::Carl {
            rabi_omega,
            detuning_pump,
            gamma_decay,
            dipole_d,
            omega,
            omega_p,
            density,
            species,
            mass,
        } => {
            let k = match (mass, species) {
                (Some(m), _) => PhysicalConstants::si_with_mass(m)?,
                (None, Species::Rb87) => PhysicalConstants::rubidium87(),
            };
            let p = CarlPhysicalParams {
                rabi_omega,
                detuning_pump,
                gamma_decay,
                dipole_d,
                omega,
                omega_p,
                density_n: density,
            };
            serde_json::to_string_pretty(&carl_scaling(&p, &k)?)?
        }
    };
    println!("{text}");
    Ok(Verdict::Passed)
}

/// Short runs of every model at rho_bar = 1 and 0.2.
fn validation_suite() -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();
    for rho in [1.0, 0.2] {
        for model in ModelKind::ALL {
            let mut cfg = RunConfig::new(model, rho, 1.0, 400.0);
            cfg.stop_after_peaks = Some(1);
            cfg.initial.particles = 1000;
            out.push((format!("{model}-rho{rho}"), cfg));
        }
    }
    out
}

fn cmd_validate(args: ValidateArgs) -> Result<Verdict, Error> {
    let mut report = Report::new("validate", "conservation");
    let runs = carlfel::harness::presets::run_batch(validation_suite())?;
    for (label, r) in &runs {
        conservation_checks(&mut report, label, r);
        if let Some(rho) = r.snapshot.as_ref().and_then(|s| s.density_matrix.as_ref()) {
            report.pin(Check::above(format!("{label}/min_eigenvalue"), rho.min_eigenvalue(), -1e-10));
        }
        report.add_run(label, r);
    }
    if args.full {
        for p in Preset::ALL {
            let outcome = run_preset(p, &PresetOptions::default())?;
            report.absorb(p.name(), outcome.report);
        }
    }
    let dir = out_dir(args.out, None);
    write_report(&dir.join("validate_report.json"), &report)?;
    print_checks(&report);
    Ok(verdict(&report))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Preset(a) => cmd_preset(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Scaling(a) => cmd_scaling(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(Verdict::Passed) => ExitCode::SUCCESS,
        Ok(Verdict::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
