//! Named experiments with their acceptance checks.

use std::fmt;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;

use num_complex::Complex64;
use serde::Serialize;

use super::compare::compare_results;
use super::config::{ModelKind, RunConfig};
use super::output::{write_report, write_run};
use super::report::{Check, Report};
use super::run::{fitted_ladder, run_model, RunResult};
use crate::bloch::{
    evolve_bloch, leakage, pendulum_residual, separatrix_fit_error, two_pi_pulse_metrics, BlochState, Variant,
};
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::quantum::{self, init_momentum_state, MomentumWavefunction};
use crate::series::{fit_exponential_rate, relative_linf, resample};
use crate::wigner::{evolve_wigner, wigner_from_state, PhaseSpaceDynamics};

/// Drift bound for norm, trace and |A|² + ⟨p̄⟩.
pub const DRIFT_LIMIT: f64 = 1e-8;
/// Occupation of levels outside the resonant pair below which a run counts
/// as two-level.
pub const LEAKAGE_LIMIT: f64 = 1e-3;
/// Seed field of the two-level timescale experiment, A′(0) = √0.05 · 10⁻⁴.
pub const TIMESCALE_SEED_APRIME: f64 = 2.236_067_977_499_79e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Fig1Row1,
    Fig1Row2,
    Fig1Row3,
    ClassicalGrowth,
    TwoLevelPulses,
    LimitComparison,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig1Row1,
        Preset::Fig1Row2,
        Preset::Fig1Row3,
        Preset::ClassicalGrowth,
        Preset::TwoLevelPulses,
        Preset::LimitComparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1Row1 => "fig1-row1",
            Preset::Fig1Row2 => "fig1-row2",
            Preset::Fig1Row3 => "fig1-row3",
            Preset::ClassicalGrowth => "classical-growth",
            Preset::TwoLevelPulses => "two-level-pulses",
            Preset::LimitComparison => "limit-comparison",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Fig1Row1 => "quantum model at rho_bar = 10: classical-like recoil and density spikes",
            Preset::Fig1Row2 => "quantum and phase-space models at rho_bar = 1",
            Preset::Fig1Row3 => "quantum model at rho_bar = 0.2: two-level dynamics",
            Preset::ClassicalGrowth => {
                "classical N-particle run at delta = 0: growth rate, universality, RK4 order"
            }
            Preset::TwoLevelPulses => "Bloch reduction: 2-pi pulses, pendulum limit, timescale scaling",
            Preset::LimitComparison => {
                "classical limit at rho_bar = 10 and regime separation at rho_bar = 0.2"
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "preset", name: s.into() })
    }
}

/// Knobs shared by all presets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetOptions {
    /// Particles in classical runs.
    pub particles: usize,
    /// Upper bound on τ; runs normally stop at their second peak.
    pub tau_cap: f64,
    pub integrator: IntegratorConfig,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self { particles: 10_000, tau_cap: 400.0, integrator: super::config::default_integrator(0.01) }
    }
}

impl PresetOptions {
    /// Configuration with the shared setup: δ = 1, A(0) = 10⁻⁴, cₙ(0) = δₙ₀.
    pub fn config(&self, model: ModelKind, rho_bar: f64) -> RunConfig {
        let mut cfg = RunConfig::new(model, rho_bar, 1.0, self.tau_cap);
        cfg.initial.particles = self.particles;
        cfg.integrator = self.integrator;
        cfg
    }
}

/// Report plus every run it is based on, labelled.
#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub preset: Preset,
    pub report: Report,
    pub runs: Vec<(String, RunResult)>,
}

impl PresetOutcome {
    pub fn run(&self, label: &str) -> Option<&RunResult> {
        self.runs.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    /// Writes `<dir>/<label>_*.csv` for every run and `<dir>/report.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for (label, r) in &self.runs {
            files.extend(write_run(dir, label, r)?);
        }
        let report = dir.join("report.json");
        write_report(&report, &self.report)?;
        files.push(report);
        Ok(files)
    }
}

/// Runs independent configurations concurrently; results keep input order.
pub fn run_batch(cfgs: Vec<(String, RunConfig)>) -> Result<Vec<(String, RunResult)>> {
    thread::scope(|scope| {
        let handles: Vec<_> =
            cfgs.iter().map(|(label, cfg)| (label.clone(), scope.spawn(move || run_model(cfg)))).collect();
        handles
            .into_iter()
            .map(|(label, h)| {
                let r = h.join().expect("run thread panicked")?;
                Ok((label, r))
            })
            .collect()
    })
}

pub fn run_preset(preset: Preset, opts: &PresetOptions) -> Result<PresetOutcome> {
    let mut report = Report::new("preset", preset.name());
    let runs = match preset {
        Preset::Fig1Row1 => fig1_row1(opts, &mut report)?,
        Preset::Fig1Row2 => fig1_row2(opts, &mut report)?,
        Preset::Fig1Row3 => fig1_row3(opts, &mut report)?,
        Preset::ClassicalGrowth => classical_growth(opts, &mut report)?,
        Preset::TwoLevelPulses => two_level_pulses(opts, &mut report)?,
        Preset::LimitComparison => limit_comparison(opts, &mut report)?,
    };
    for (label, r) in &runs {
        report.add_run(label, r);
    }
    Ok(PresetOutcome { preset, report, runs })
}

/// Drift checks for one run. Vlasov runs lose probability through the grid
/// edges, so only their values are recorded.
pub fn conservation_checks(report: &mut Report, label: &str, r: &RunResult) {
    let (inv, norm) = (r.series.invariant_drift(), r.series.norm_drift());
    if r.config.model == ModelKind::Vlasov {
        report.metric(&format!("{label}/invariant_drift"), inv);
        report.metric(&format!("{label}/norm_drift"), norm);
        return;
    }
    report.pin(Check::below(format!("{label}/invariant_drift"), inv, DRIFT_LIMIT));
    if r.config.model != ModelKind::Classical {
        report.pin(Check::below(format!("{label}/norm_drift"), norm, DRIFT_LIMIT));
    }
}

fn first_peak_metrics(report: &mut Report, label: &str, r: &RunResult) -> Result<()> {
    let p = r.first_peak_or_err()?;
    report.metric(&format!("{label}/first_peak_tau"), p.tau);
    report.metric(&format!("{label}/first_peak_abs_A2"), p.value);
    Ok(())
}

fn snapshot_of(r: &RunResult) -> Result<&super::run::Snapshot> {
    r.snapshot
        .as_ref()
        .ok_or_else(|| Error::TooShort(format!("{} run has no first-peak snapshot", r.config.model)))
}

/// max |ϱ − c c†| between the first-peak snapshots of a wavefunction run and
/// a density-matrix run on the same sampling grid.
pub fn density_equivalence_error(psi_run: &RunResult, rho_run: &RunResult) -> Result<f64> {
    let (a, b) = (snapshot_of(psi_run)?, snapshot_of(rho_run)?);
    let (psi, rho) = match (&a.wavefunction, &b.density_matrix) {
        (Some(p), Some(r)) => (p, r),
        _ => return Err(Error::InvalidState("snapshots lack ladder states".into())),
    };
    if (psi.tau - rho.tau).abs() > 1e-9 || psi.ladder != rho.ladder {
        return Err(Error::InvalidState(format!(
            "snapshots differ in time or ladder: tau {} vs {}",
            psi.tau, rho.tau
        )));
    }
    let outer = psi.to_density();
    Ok(outer.rho.iter().zip(rho.rho.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}

fn fig1_row1(opts: &PresetOptions, report: &mut Report) -> Result<Vec<(String, RunResult)>> {
    let rho_bar = 10.0;
    let runs = run_batch(vec![
        ("quantum-c".into(), opts.config(ModelKind::QuantumC, rho_bar)),
        ("quantum-rho".into(), opts.config(ModelKind::QuantumRho, rho_bar)),
    ])?;
    let (psi, rho) = (&runs[0].1, &runs[1].1);
    first_peak_metrics(report, "quantum-c", psi)?;
    let snap = snapshot_of(psi)?;
    report.pin(Check::within("mean_p_over_rho_bar", snap.mean_p / rho_bar, -1.5, -0.5));
    report.pin(Check::above("density_contrast", snap.density_contrast(), 3.0));
    report.pin(Check::above("density_peaks_above_3x", snap.density_peaks_above(3.0) as f64, 0.5));
    report.metric("spread_p", snap.spread_p);
    report.pin(Check::below("density_matrix_equivalence", density_equivalence_error(psi, rho)?, 1e-6));
    for (label, r) in &runs {
        conservation_checks(report, label, r);
    }
    Ok(runs)
}

fn fig1_row2(opts: &PresetOptions, report: &mut Report) -> Result<Vec<(String, RunResult)>> {
    let rho_bar = 1.0;
    let probe = opts.config(ModelKind::QuantumC, rho_bar);
    let ladder = fitted_ladder(&probe, &probe.params()?)?;
    let on_ladder = |model| {
        let mut c = opts.config(model, rho_bar);
        c.grid.ladder = Some([ladder.n_min(), ladder.n_max()]);
        c
    };
    let runs = run_batch(vec![
        ("quantum-c".into(), on_ladder(ModelKind::QuantumC)),
        ("quantum-rho".into(), on_ladder(ModelKind::QuantumRho)),
        ("wigner".into(), on_ladder(ModelKind::Wigner)),
    ])?;
    let (psi, rho, wig) = (&runs[0].1, &runs[1].1, &runs[2].1);
    first_peak_metrics(report, "quantum-c", psi)?;
    let snap = snapshot_of(psi)?;
    report.pin(Check::above("P0_plus_Pm1", snap.population(0) + snap.population(-1), 0.9));
    report.metric("mean_p", snap.mean_p);
    report.pin(Check::below("density_matrix_equivalence", density_equivalence_error(psi, rho)?, 1e-6));
    let grid_gap = match (&snap.wigner, &snapshot_of(wig)?.wigner) {
        (Some(a), Some(b)) if a.n_rows() == b.n_rows() && a.n_theta() == b.n_theta() => {
            a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        }
        _ => return Err(Error::InvalidState("first-peak Wigner grids do not match".into())),
    };
    report.pin(Check::below("wigner_grid_at_first_peak", grid_gap, 1e-6));
    let mut span = on_ladder(ModelKind::Wigner);
    span.tau_end = psi.outcome.t_final;
    report.pin(Check::below("wigner_trajectory", wigner_equivalence_error(&span)?, 1e-6));
    for (label, r) in &runs {
        conservation_checks(report, label, r);
    }
    Ok(runs)
}

/// Largest |W − W[ψ]| over every sample of a run, where W is evolved by the
/// finite-difference equation and W[ψ] is built from the evolved
/// wavefunction, up to `cfg.tau_end` (peak stopping is ignored). `cfg` must
/// fix the ladder so both live on one grid.
pub fn wigner_equivalence_error(cfg: &RunConfig) -> Result<f64> {
    cfg.validate()?;
    let params = cfg.params()?;
    let m = cfg.theta_points()?;
    let init = init_momentum_state(cfg.initial.n0, cfg.ladder()?, cfg.a0)?;
    let mut guard = cfg.grid.guard;
    guard.widen = false;
    let mut states: Vec<MomentumWavefunction> = Vec::new();
    quantum::evolve(&init, &params, &cfg.integrator, cfg.tau_end, &guard, |s| {
        states.push(s.clone());
        ControlFlow::Continue(())
    })?;
    let grid = wigner_from_state(&init, &params, m)?;
    let mut worst = 0.0f64;
    let mut index = 0;
    let mut failure = None;
    evolve_wigner(&grid, &params, PhaseSpaceDynamics::FiniteDifference, &cfg.integrator, cfg.tau_end, |w| {
        let Some(s) = states.get(index) else { return ControlFlow::Break(()) };
        index += 1;
        if (s.tau - w.tau).abs() > 1e-9 {
            failure = Some(format!("sample times diverge: {} vs {}", s.tau, w.tau));
            return ControlFlow::Break(());
        }
        match wigner_from_state(s, &params, m) {
            Ok(exact) => {
                let gap = exact.values().iter().zip(w.values()).map(|(x, y)| (x - y).abs());
                worst = gap.fold(worst, f64::max);
                ControlFlow::Continue(())
            }
            Err(e) => {
                failure = Some(e.to_string());
                ControlFlow::Break(())
            }
        }
    })?;
    match failure {
        Some(msg) => Err(Error::InvalidState(msg)),
        None if index != states.len() => {
            Err(Error::InvalidState(format!("compared {index} of {} samples", states.len())))
        }
        None => Ok(worst),
    }
}

fn fig1_row3(opts: &PresetOptions, report: &mut Report) -> Result<Vec<(String, RunResult)>> {
    let rho_bar = 0.2;
    let runs = run_batch(vec![
        ("quantum-c".into(), opts.config(ModelKind::QuantumC, rho_bar)),
        ("quantum-rho".into(), opts.config(ModelKind::QuantumRho, rho_bar)),
    ])?;
    let (psi, rho) = (&runs[0].1, &runs[1].1);
    first_peak_metrics(report, "quantum-c", psi)?;
    let snap = snapshot_of(psi)?;
    report.metric("P0_plus_Pm1", snap.population(0) + snap.population(-1));
    report.metric("mean_p", snap.mean_p);
    report.pin(Check::below("two_level_leakage", first_peak_leakage(rho)?, LEAKAGE_LIMIT));
    report.pin(Check::below("density_matrix_equivalence", density_equivalence_error(psi, rho)?, 1e-6));
    for (label, r) in &runs {
        conservation_checks(report, label, r);
    }
    Ok(runs)
}

/// Occupation outside levels 0 and −1 at the first peak of a density run.
pub fn first_peak_leakage(rho_run: &RunResult) -> Result<f64> {
    let snap = snapshot_of(rho_run)?;
    let rho = snap
        .density_matrix
        .as_ref()
        .ok_or_else(|| Error::InvalidState("snapshot lacks a density matrix".into()))?;
    Ok(leakage(rho, rho_run.config.initial.n0))
}

/// Window of the growth fit on |A|²: past the start-up transient, before
/// saturation.
const GROWTH_FIT_WINDOW: (f64, f64) = (1e-6, 1e-2);
/// RK4 step sizes of the order check and the τ they run to.
const ORDER_STEPS: [f64; 3] = [0.1, 0.05, 0.025];
const ORDER_TAU_END: f64 = 12.0;

fn classical_growth(opts: &PresetOptions, report: &mut Report) -> Result<Vec<(String, RunResult)>> {
    let classical = |rho_bar: f64| {
        let mut c = opts.config(ModelKind::Classical, rho_bar);
        c.delta = 0.0;
        c
    };
    let mut cfgs: Vec<(String, RunConfig)> =
        [0.5, 1.0, 10.0].iter().map(|&r| (format!("classical-rho{r}"), classical(r))).collect();
    let mut doubled = classical(1.0);
    doubled.initial.particles *= 2;
    cfgs.push(("classical-rho1-doubled-n".into(), doubled));
    for dt in ORDER_STEPS {
        let mut c = classical(1.0);
        c.tau_end = ORDER_TAU_END;
        c.stop_after_peaks = None;
        c.integrator = IntegratorConfig::rk4(dt, 1);
        c.outputs.snapshots = false;
        cfgs.push((format!("rk4-dt{dt}"), c));
    }
    let runs = run_batch(cfgs)?;
    let base = &runs[1].1;
    first_peak_metrics(report, "classical-rho1", base)?;
    let rate = fit_exponential_rate(
        &base.series.taus(),
        &base.series.intensities(),
        GROWTH_FIT_WINDOW.0,
        GROWTH_FIT_WINDOW.1,
    )?;
    let expected = 2.0 * crate::classical::max_growth_rate(0.0);
    report.metric("growth_rate_expected", expected);
    report.pin(Check::below("growth_rate_relative_error", (rate / expected - 1.0).abs(), 0.02));
    report.metric("growth_rate", rate);
    let identical = runs[..3].iter().all(|(_, r)| r.series.intensities() == base.series.intensities());
    report.pin(Check::above("universality_bitwise", if identical { 1.0 } else { 0.0 }, 0.5));
    let doubling = compare_results(&runs[3].1, base)?;
    report.pin(Check::below("particle_doubling_linf", doubling.linf, 0.01));
    let finals: Vec<Complex64> = runs[4..]
        .iter()
        .map(|(_, r)| {
            let last = r.series.records.last().expect("non-empty series");
            Complex64::new(last.re_a, last.im_a)
        })
        .collect();
    let (e1, e2) = ((finals[0] - finals[1]).norm(), (finals[1] - finals[2]).norm());
    report.metric("rk4_difference_coarse", e1);
    report.metric("rk4_difference_fine", e2);
    report.pin(Check::within("rk4_error_ratio", e1 / e2, 16.0 * 0.8, 16.0 * 1.2));
    for (label, r) in &runs[..4] {
        conservation_checks(report, label, r);
    }
    Ok(runs)
}

fn bloch_trajectory(
    variant: Variant,
    start: BlochState,
    cfg: &IntegratorConfig,
    tau_prime_end: f64,
) -> Result<Vec<BlochState>> {
    let mut traj = Vec::new();
    evolve_bloch(&start, variant, cfg, tau_prime_end, |b| {
        traj.push(*b);
        ControlFlow::Continue(())
    })?;
    Ok(traj)
}

fn two_level_pulses(opts: &PresetOptions, report: &mut Report) -> Result<Vec<(String, RunResult)>> {
    let bloch_cfg = IntegratorConfig::rk45(1e-12, 1e-14, 0.01);
    let r = |x: f64| Complex64::new(x, 0.0);

    // pulse train of the consistent reduction from the unstable state
    let v = Variant::ConsistentReduction;
    let traj = bloch_trajectory(v, BlochState::from_angle(0, 0.0, r(1e-4)), &bloch_cfg, 60.0)?;
    let m = two_pi_pulse_metrics(&traj, v)?;
    report.pin(Check::within("pulse_gain", m.first_pulse_gain, 2.0 - 1e-6, 2.0 + 1e-6));
    let first = m.peak_intensities[0];
    let spread = m.peak_intensities.iter().map(|p| (p / first - 1.0).abs()).fold(0.0, f64::max);
    report.metric("pulse_count", m.peak_intensities.len() as f64);
    report.pin(Check::above("pulse_count_at_least_2", m.peak_intensities.len() as f64, 1.5));
    report.pin(Check::below("pulse_height_spread", spread, 0.01));
    if let Some(period) = m.pulse_period {
        report.metric("pulse_period_tau_prime", period);
    }

    // literal variant on the separatrix: pendulum with κ = 1, sech pulse
    let lit = Variant::PaperLiteral;
    let traj = bloch_trajectory(lit, BlochState::from_angle(0, 1e-4, r(2e-4)), &bloch_cfg, 40.0)?;
    report.pin(Check::below("literal_pendulum_residual", pendulum_residual(&traj, 1.0)?, 1e-6));
    report.pin(Check::below("literal_sech_fit_error", separatrix_fit_error(&traj, 1.0, 6.0)?, 0.01));

    // reduction against the full model in the deep quantum regime
    let rho_bar = 0.05;
    let mut full = opts.config(ModelKind::QuantumRho, rho_bar);
    full.tau_end = 60.0;
    full.stop_after_peaks = None;
    full.grid.ladder = Some([-3, 2]);
    full.grid.guard.edge_limit = 1.0;
    full.integrator = IntegratorConfig::rk45(1e-11, 1e-14, 0.05);
    let mut reduced = full.clone();
    reduced.model = ModelKind::TwoLevel;
    reduced.variant = v;

    // first-peak timescale at fixed A′(0)
    let timescale = |rho_bar: f64, a0: f64| {
        let mut c = opts.config(ModelKind::QuantumC, rho_bar);
        c.a0 = r(a0);
        c.stop_after_peaks = Some(1);
        c.tau_end = 4000.0;
        c.integrator = IntegratorConfig::rk45(1e-10, 1e-13, 0.05);
        c
    };
    let fixed_aprime = |rho: f64| TIMESCALE_SEED_APRIME / rho.sqrt();
    let runs = run_batch(vec![
        ("full-rho0.05".into(), full),
        ("two-level-rho0.05".into(), reduced),
        ("timescale-rho0.05".into(), timescale(0.05, fixed_aprime(0.05))),
        ("timescale-rho0.0125".into(), timescale(0.0125, fixed_aprime(0.0125))),
        ("timescale-fixed-A-rho0.0125".into(), timescale(0.0125, 1e-4)),
    ])?;
    let (f, t) = (&runs[0].1, &runs[1].1);
    let abs_a = |r: &RunResult| -> Vec<f64> { r.series.records.iter().map(|x| x.abs_a2.sqrt()).collect() };
    let on_full = resample(&t.series.taus(), &abs_a(t), &f.series.taus())?;
    report.pin(Check::below("reduction_vs_full_linf", relative_linf(&on_full, &abs_a(f)), 0.02));

    let tau_of = |i: usize| runs[i].1.first_peak_or_err().map(|p| p.tau);
    let (t_a, t_b, t_fixed_a) = (tau_of(2)?, tau_of(3)?, tau_of(4)?);
    report.metric("first_peak_tau_rho0.05", t_a);
    report.metric("first_peak_tau_rho0.0125", t_b);
    report.pin(Check::within("timescale_ratio", t_b / t_a, 2.0 * 0.95, 2.0 * 1.05));
    report.metric("timescale_ratio_fixed_A0", t_fixed_a / t_a);
    for (label, r) in &runs[..2] {
        conservation_checks(report, label, r);
    }
    Ok(runs)
}

fn limit_comparison(opts: &PresetOptions, report: &mut Report) -> Result<Vec<(String, RunResult)>> {
    let high = 10.0;
    let probe = opts.config(ModelKind::QuantumC, high);
    let ladder = fitted_ladder(&probe, &probe.params()?)?;
    let phase = |model| {
        let mut c = opts.config(model, high);
        c.grid.ladder = Some([ladder.n_min(), ladder.n_max()]);
        c
    };
    let runs = run_batch(vec![
        ("rho10-quantum-c".into(), opts.config(ModelKind::QuantumC, high)),
        ("rho10-classical".into(), opts.config(ModelKind::Classical, high)),
        ("rho10-wigner".into(), phase(ModelKind::Wigner)),
        ("rho10-vlasov".into(), phase(ModelKind::Vlasov)),
        ("rho10-quantum-rho".into(), opts.config(ModelKind::QuantumRho, high)),
        ("rho0.2-quantum-c".into(), opts.config(ModelKind::QuantumC, 0.2)),
        ("rho0.2-vlasov".into(), opts.config(ModelKind::Vlasov, 0.2)),
        ("rho0.2-quantum-rho".into(), opts.config(ModelKind::QuantumRho, 0.2)),
    ])?;
    let get = |i: usize| &runs[i].1;
    let qc = compare_results(get(0), get(1))?;
    report.metric("quantum_vs_classical_l2", qc.l2);
    report.pin(qc.check("quantum_vs_classical_linf", 0.10));
    let vw = compare_results(get(3), get(2))?;
    report.metric("vlasov_vs_wigner_l2", vw.l2);
    report.pin(vw.check("vlasov_vs_wigner_linf", 0.05));
    let low = compare_results(get(6), get(5))?;
    report.metric("rho0.2_vlasov_vs_quantum_l2", low.l2);
    report.pin(Check::above("rho0.2_vlasov_vs_quantum_linf", low.linf, 0.5));
    report.pin(Check::above("rho10_two_level_leakage", first_peak_leakage(get(4))?, LEAKAGE_LIMIT));
    report.pin(Check::below("rho0.2_two_level_leakage", first_peak_leakage(get(7))?, LEAKAGE_LIMIT));
    for (label, r) in &runs {
        conservation_checks(report, label, r);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("fig2".parse::<Preset>(), Err(Error::Unknown { kind: "preset", .. })));
    }

    #[test]
    fn batch_keeps_order_and_matches_serial_runs() {
        let opts = PresetOptions::default();
        let cfgs: Vec<_> = [1.0, 0.5]
            .iter()
            .map(|&r| {
                let mut c = opts.config(ModelKind::QuantumC, r);
                c.tau_end = 5.0;
                (format!("r{r}"), c)
            })
            .collect();
        let out = run_batch(cfgs.clone()).unwrap();
        for ((label, cfg), (l, r)) in cfgs.iter().zip(&out) {
            assert_eq!(label, l);
            assert_eq!(r.series, run_model(cfg).unwrap().series);
        }
    }
}
