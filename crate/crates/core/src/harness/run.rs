//! Executes a [`RunConfig`] for any model and records a uniform time series.

use std::f64::consts::TAU;
use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::Serialize;

use super::config::{ModelKind, RunConfig};
use crate::bloch::{bloch_invariant, evolve_bloch, transition_detuning, BlochState};
use crate::classical::{self, evolve_classical, init_cold_beam, ClassicalState};
use crate::error::{Error, Result};
use crate::integrate::{IntegratorConfig, Method, Outcome};
use crate::quantum::{
    self, init_momentum_state, lab_field, observables, psi_density_lab, quantum_invariant,
    DensityMatrixState, Ladder, LadderState, MomentumWavefunction,
};
use crate::scaling::{photons_per_particle, ScaledParams};
use crate::series::{Peak, PeakTracker, Series, TimeSeriesRecord};
use crate::wigner::{evolve_wigner, fft_friendly_len, wigner_from_state, PhaseSpaceDynamics, WignerGrid};

/// Occupation of one momentum level (p in recoil units, half-integer for
/// phase-space interference rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelWeight {
    pub p: f64,
    pub weight: f64,
}

/// State summary at the sample nearest the first intensity peak.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub tau: f64,
    pub field_a: Complex64,
    pub momentum_distribution: Vec<LevelWeight>,
    /// ⟨p⟩ in recoil units.
    pub mean_p: f64,
    pub spread_p: f64,
    /// Lab-frame θ-density on `theta_density.len()` equispaced angles.
    pub theta_density: Vec<f64>,
    #[serde(skip)]
    pub wigner: Option<WignerGrid>,
    #[serde(skip)]
    pub wavefunction: Option<MomentumWavefunction>,
    #[serde(skip)]
    pub density_matrix: Option<DensityMatrixState>,
}

impl Snapshot {
    /// Weight on integer level n.
    pub fn population(&self, n: i64) -> f64 {
        self.momentum_distribution.iter().find(|w| w.p == n as f64).map_or(0.0, |w| w.weight)
    }

    /// 2π max θ-density: peak height relative to a uniform beam.
    pub fn density_contrast(&self) -> f64 {
        self.theta_density.iter().copied().fold(f64::NEG_INFINITY, f64::max) * TAU
    }

    /// Local maxima of the θ-density exceeding `factor` times the uniform level.
    pub fn density_peaks_above(&self, factor: f64) -> usize {
        let d = &self.theta_density;
        let m = d.len();
        let level = factor / TAU;
        (0..m)
            .filter(|&j| {
                let (prev, next) = (d[(j + m - 1) % m], d[(j + 1) % m]);
                d[j] > level && d[j] >= prev && d[j] > next
            })
            .count()
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub params: ScaledParams,
    pub series: Series,
    pub peaks: Vec<Peak>,
    pub snapshot: Option<Snapshot>,
    pub outcome: Outcome,
    /// Ladder actually used (after any widening).
    pub ladder: Option<Ladder>,
    pub widenings: u32,
}

impl RunResult {
    pub fn first_peak(&self) -> Option<Peak> {
        self.peaks.first().copied()
    }

    pub fn first_peak_or_err(&self) -> Result<Peak> {
        self.first_peak().ok_or_else(|| {
            Error::TooShort(format!(
                "{} run ended at tau = {} before the first intensity peak",
                self.config.model, self.outcome.t_final
            ))
        })
    }
}

struct Recorder<S> {
    series: Series,
    tracker: PeakTracker,
    peaks: Vec<Peak>,
    stop_after: Option<u32>,
    prev: Option<S>,
    candidate: Option<(usize, S)>,
    first_peak_state: Option<S>,
}

impl<S: Clone> Recorder<S> {
    fn new(stop_after: Option<u32>) -> Self {
        Self {
            series: Series::default(),
            tracker: PeakTracker::default(),
            peaks: Vec::new(),
            stop_after,
            prev: None,
            candidate: None,
            first_peak_state: None,
        }
    }

    fn push(&mut self, state: &S, record: TimeSeriesRecord, rate: f64) -> ControlFlow<()> {
        if let Some(last) = self.series.records.last() {
            if record.tau <= last.tau {
                // restarted on a wider ladder
                *self = Self::new(self.stop_after);
            }
        }
        let index = self.series.len();
        self.series.push(record, rate);
        let confirmed = self.tracker.push(record.tau, record.abs_a2, Some(rate));
        if let Some(c) = self.tracker.candidate() {
            if index > 0 && c.index == index - 1 && self.candidate.as_ref().map(|x| x.0) != Some(c.index) {
                if let Some(p) = &self.prev {
                    self.candidate = Some((c.index, p.clone()));
                }
            }
        }
        if let Some(p) = confirmed {
            if self.peaks.is_empty() {
                self.first_peak_state = self.candidate.take().filter(|(i, _)| *i == p.index).map(|(_, s)| s);
            }
            self.peaks.push(p);
        }
        self.prev = Some(state.clone());
        match self.stop_after {
            Some(n) if self.peaks.len() >= n as usize => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    }
}

fn record(
    tau: f64,
    a: Complex64,
    params: &ScaledParams,
    mean_pbar: f64,
    norm: f64,
    inv: f64,
) -> TimeSeriesRecord {
    TimeSeriesRecord {
        tau,
        re_a: a.re,
        im_a: a.im,
        abs_a2: a.norm_sqr(),
        photons_per_particle: photons_per_particle(a, params),
        mean_pbar,
        norm,
        invariant_value: inv,
    }
}

/// Runs `cfg` after validating it.
pub fn run_model(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let params = cfg.params()?;
    match cfg.model {
        ModelKind::Classical => run_classical(cfg, params),
        ModelKind::QuantumC => {
            let s = init_momentum_state(cfg.initial.n0, cfg.ladder()?, cfg.a0)?;
            run_ladder(cfg, params, s)
        }
        ModelKind::QuantumRho => {
            let s = init_momentum_state(cfg.initial.n0, cfg.ladder()?, cfg.a0)?.to_density();
            run_ladder(cfg, params, s)
        }
        ModelKind::Wigner => run_phase_space(cfg, params, PhaseSpaceDynamics::FiniteDifference),
        ModelKind::Vlasov => run_phase_space(
            cfg,
            params,
            PhaseSpaceDynamics::Vlasov { derivative: cfg.grid.momentum_derivative },
        ),
        ModelKind::TwoLevel => run_two_level(cfg, params),
    }
}

fn run_classical(cfg: &RunConfig, params: ScaledParams) -> Result<RunResult> {
    let init = init_cold_beam(cfg.initial.particles, cfg.a0, cfg.initial.placement)?;
    let mut rec = Recorder::<ClassicalState>::new(cfg.stop_after_peaks);
    let (_, outcome) = evolve_classical(&init, &params, &cfg.integrator, cfg.tau_end, |s| {
        let mean = s.mean_pbar();
        let inv = s.field_a.norm_sqr() + mean;
        rec.push(s, record(s.tau, s.field_a, &params, mean, 1.0, inv), classical::intensity_rate(s))
    })?;
    let snapshot = rec.first_peak_state.as_ref().map(|s| classical_snapshot(s, &params, 256));
    Ok(RunResult {
        config: cfg.clone(),
        params,
        series: rec.series,
        peaks: rec.peaks,
        snapshot,
        outcome,
        ladder: None,
        widenings: 0,
    })
}

fn classical_snapshot(s: &ClassicalState, params: &ScaledParams, bins: usize) -> Snapshot {
    let n = s.len() as f64;
    let mut hist = vec![0.0; bins];
    for t in s.wrapped_theta() {
        let b = ((t / TAU * bins as f64) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let width = TAU / bins as f64;
    let theta_density = hist.iter().map(|c| c / (n * width)).collect();
    let p: Vec<f64> = s.pbar.iter().map(|pb| 0.5 * params.rho_bar * pb).collect();
    let mean_p = p.iter().sum::<f64>() / n;
    let var = p.iter().map(|x| (x - mean_p).powi(2)).sum::<f64>() / n;
    Snapshot {
        tau: s.tau,
        field_a: s.field_a,
        momentum_distribution: Vec::new(),
        mean_p,
        spread_p: var.sqrt(),
        theta_density,
        wigner: None,
        wavefunction: None,
        density_matrix: None,
    }
}

/// Ladder states that can be turned into a snapshot.
trait SnapshotSource: LadderState {
    fn fill(&self, snap: &mut Snapshot, params: &ScaledParams) -> Result<()>;
}

impl SnapshotSource for MomentumWavefunction {
    fn fill(&self, snap: &mut Snapshot, params: &ScaledParams) -> Result<()> {
        let m = fft_friendly_len(4 * self.ladder.span() + 1);
        snap.theta_density = psi_density_lab(self, params, m)?;
        snap.wigner = Some(wigner_from_state(self, params, m)?);
        snap.wavefunction = Some(self.clone());
        Ok(())
    }
}

impl SnapshotSource for DensityMatrixState {
    fn fill(&self, snap: &mut Snapshot, params: &ScaledParams) -> Result<()> {
        // |ψ(θ)|² = (1/2π) Σ ϱₘₙ e^{i(n−m)(θ + δτ/ρ̄)}
        let l = self.ladder.len();
        let m = 4 * self.ladder.span() + 1;
        let shift = params.detuning_rate() * self.tau;
        let mut diag = vec![Complex64::default(); 2 * l - 1];
        for a in 0..l {
            for b in 0..l {
                diag[b + l - 1 - a] += self.rho[(a, b)];
            }
        }
        snap.theta_density = (0..m)
            .map(|j| {
                let th = TAU * j as f64 / m as f64 + shift;
                let v: Complex64 = diag
                    .iter()
                    .enumerate()
                    .map(|(k, z)| z * Complex64::from_polar(1.0, (k as f64 - (l - 1) as f64) * th))
                    .sum();
                v.re / TAU
            })
            .collect();
        snap.density_matrix = Some(self.clone());
        Ok(())
    }
}

fn ladder_snapshot<S: SnapshotSource>(s: &S, params: &ScaledParams) -> Result<Snapshot> {
    let o = observables(s, params);
    let ladder = s.ladder();
    let mut snap = Snapshot {
        tau: s.tau(),
        field_a: lab_field(s.field_abar(), s.tau(), params),
        momentum_distribution: o
            .populations
            .iter()
            .enumerate()
            .map(|(i, w)| LevelWeight { p: ladder.level(i) as f64, weight: *w })
            .collect(),
        mean_p: o.mean_p,
        spread_p: o.spread_p,
        theta_density: Vec::new(),
        wigner: None,
        wavefunction: None,
        density_matrix: None,
    };
    s.fill(&mut snap, params)?;
    Ok(snap)
}

fn run_ladder<S: SnapshotSource>(cfg: &RunConfig, params: ScaledParams, init: S) -> Result<RunResult> {
    let mut rec = Recorder::<S>::new(cfg.stop_after_peaks);
    let run = quantum::evolve(&init, &params, &cfg.integrator, cfg.tau_end, &cfg.grid.guard, |s| {
        let o = observables(s, &params);
        let a = lab_field(s.field_abar(), s.tau(), &params);
        let rate = 2.0 * (s.field_abar().conj() * s.field_source()).re;
        let inv = quantum_invariant(s, &params);
        rec.push(s, record(s.tau(), a, &params, o.mean_pbar, o.norm, inv), rate)
    })?;
    let snapshot = match &rec.first_peak_state {
        Some(s) => Some(ladder_snapshot(s, &params)?),
        None => None,
    };
    Ok(RunResult {
        config: cfg.clone(),
        params,
        series: rec.series,
        peaks: rec.peaks,
        snapshot,
        outcome: run.outcome,
        ladder: Some(run.ladder),
        widenings: run.widenings,
    })
}

fn run_phase_space(cfg: &RunConfig, params: ScaledParams, dynamics: PhaseSpaceDynamics) -> Result<RunResult> {
    let ladder = match cfg.grid.ladder {
        Some(_) => cfg.ladder()?,
        None => fitted_ladder(cfg, &params)?,
    };
    let psi = init_momentum_state(cfg.initial.n0, ladder, cfg.a0)?;
    let m = cfg.grid.theta_points.unwrap_or(fft_friendly_len(4 * ladder.span() + 1));
    let grid = wigner_from_state(&psi, &params, m)?;
    let mut rec = Recorder::<WignerGrid>::new(cfg.stop_after_peaks);
    let (last, outcome) = evolve_wigner(&grid, &params, dynamics, &cfg.integrator, cfg.tau_end, |w| {
        let rate = 2.0 * (w.field_a.conj() * w.field_source()).re;
        rec.push(w, record(w.tau, w.field_a, &params, w.mean_pbar(), w.norm(), w.invariant()), rate)
    })?;
    let dist = last.marginals().momentum_distribution;
    let edge = dist[0].abs() + dist[dist.len() - 1].abs();
    if edge > cfg.grid.guard.edge_limit {
        log::warn!("phase-space edge rows carry {edge:.3e}; the ladder may be too narrow");
    }
    let snapshot = rec.first_peak_state.as_ref().map(grid_snapshot);
    Ok(RunResult {
        config: cfg.clone(),
        params,
        series: rec.series,
        peaks: rec.peaks,
        snapshot,
        outcome,
        ladder: Some(ladder),
        widenings: 0,
    })
}

/// Smallest ladder holding every level whose occupation ever exceeds the
/// guard's edge limit in a guarded quantum run of the same setup, plus one
/// spare level per side. Phase-space grids cost O(span²) per step, so the
/// generous default ladder is trimmed here.
pub fn fitted_ladder(cfg: &RunConfig, params: &ScaledParams) -> Result<Ladder> {
    let init = init_momentum_state(cfg.initial.n0, cfg.ladder()?, cfg.a0)?;
    let mut peak_pop: Vec<f64> = Vec::new();
    let mut tracker = PeakTracker::default();
    let mut peaks = 0;
    let mut last_tau = f64::NEG_INFINITY;
    let run = quantum::evolve(&init, params, &cfg.integrator, cfg.tau_end, &cfg.grid.guard, |s| {
        if s.tau() <= last_tau {
            peak_pop.clear();
            tracker = PeakTracker::default();
            peaks = 0;
        }
        last_tau = s.tau();
        let pops = s.populations();
        peak_pop.resize(pops.len(), 0.0);
        for (m, p) in peak_pop.iter_mut().zip(&pops) {
            *m = m.max(*p);
        }
        let rate = 2.0 * (s.field_abar().conj() * s.field_source()).re;
        if tracker.push(s.tau(), s.field_abar().norm_sqr(), Some(rate)).is_some() {
            peaks += 1;
        }
        match cfg.stop_after_peaks {
            Some(n) if peaks >= n => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    })?;
    let limit = cfg.grid.guard.edge_limit;
    let occupied: Vec<i64> =
        peak_pop.iter().enumerate().filter(|(_, p)| **p > limit).map(|(i, _)| run.ladder.level(i)).collect();
    let lo = (occupied[0] - 1).max(run.ladder.n_min());
    let hi = (occupied[occupied.len() - 1] + 1).min(run.ladder.n_max());
    Ladder::new(lo.min(cfg.initial.n0 - 1), hi.max(cfg.initial.n0 + 1))
}

fn grid_snapshot(w: &WignerGrid) -> Snapshot {
    let mg = w.marginals();
    let weights: Vec<LevelWeight> = mg
        .momentum_distribution
        .iter()
        .enumerate()
        .map(|(r, v)| LevelWeight { p: w.s_level(r), weight: *v })
        .collect();
    let norm: f64 = weights.iter().map(|x| x.weight).sum();
    let mean_p = weights.iter().map(|x| x.p * x.weight).sum::<f64>() / norm;
    let second = weights.iter().map(|x| x.p * x.p * x.weight).sum::<f64>() / norm;
    Snapshot {
        tau: w.tau,
        field_a: w.field_a,
        momentum_distribution: weights,
        mean_p,
        spread_p: (second - mean_p * mean_p).max(0.0).sqrt(),
        theta_density: mg.theta_density,
        wigner: Some(w.clone()),
        wavefunction: None,
        density_matrix: None,
    }
}

/// Integrator settings for τ′ = √ρ̄ τ.
fn rescale_time(cfg: &IntegratorConfig, factor: f64) -> IntegratorConfig {
    let method = match cfg.method {
        Method::Rk4Fixed { dt } => Method::Rk4Fixed { dt: dt * factor },
        Method::Rk45Adaptive { rtol, atol, sample_dt } => {
            Method::Rk45Adaptive { rtol, atol, sample_dt: sample_dt * factor }
        }
    };
    IntegratorConfig { method, ..*cfg }
}

fn run_two_level(cfg: &RunConfig, params: ScaledParams) -> Result<RunResult> {
    let root = params.rho_bar.sqrt();
    let n = cfg.initial.n0;
    let init = BlochState {
        n,
        s: Complex64::default(),
        d: 1.0,
        field_aprime: root * cfg.a0,
        tau_prime: 0.0,
        delta_n: transition_detuning(n, &params),
    };
    let variant = cfg.variant;
    let icfg = rescale_time(&cfg.integrator, root);
    let mut rec = Recorder::<BlochState>::new(cfg.stop_after_peaks);
    let (_, outcome) = evolve_bloch(&init, variant, &icfg, root * cfg.tau_end, |b| {
        let tau = b.tau(&params);
        let abar = b.field_abar(&params);
        let mean_p = n as f64 - 0.5 * (1.0 - b.d);
        let rate = 2.0 * (b.field_aprime.conj() * variant.coupling() * b.s).re / root;
        let rec_ = record(
            tau,
            lab_field(abar, tau, &params),
            &params,
            2.0 * mean_p / params.rho_bar,
            1.0,
            bloch_invariant(b, variant),
        );
        rec.push(b, rec_, rate)
    })?;
    let snapshot = rec.first_peak_state.as_ref().map(|b| bloch_snapshot(b, &params));
    Ok(RunResult {
        config: cfg.clone(),
        params,
        series: rec.series,
        peaks: rec.peaks,
        snapshot,
        outcome: Outcome { t_final: outcome.t_final / root, ..outcome },
        ladder: None,
        widenings: 0,
    })
}

fn bloch_snapshot(b: &BlochState, params: &ScaledParams) -> Snapshot {
    let tau = b.tau(params);
    let upper = 0.5 * (1.0 + b.d);
    let lower = 0.5 * (1.0 - b.d);
    let mean_p = b.n as f64 * upper + (b.n - 1) as f64 * lower;
    let second = (b.n as f64).powi(2) * upper + ((b.n - 1) as f64).powi(2) * lower;
    let m = 64;
    let shift = params.detuning_rate() * tau;
    let theta_density = (0..m)
        .map(|j| {
            let th = TAU * j as f64 / m as f64 + shift;
            (1.0 + (b.s * Complex64::from_polar(1.0, th)).re) / TAU
        })
        .collect();
    Snapshot {
        tau,
        field_a: lab_field(b.field_abar(params), tau, params),
        momentum_distribution: vec![
            LevelWeight { p: (b.n - 1) as f64, weight: lower },
            LevelWeight { p: b.n as f64, weight: upper },
        ],
        mean_p,
        spread_p: (second - mean_p * mean_p).max(0.0).sqrt(),
        theta_density,
        wigner: None,
        wavefunction: None,
        density_matrix: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_length_runs_record_the_initial_state() {
        for m in ModelKind::ALL {
            let mut cfg = RunConfig::new(m, 1.0, 1.0, 0.0);
            cfg.initial.particles = 64;
            let r = run_model(&cfg).unwrap();
            assert_eq!(r.series.len(), 1, "{m}");
            assert_relative_eq!(r.series.records[0].abs_a2, 1e-8, max_relative = 1e-12);
            assert!(r.snapshot.is_none());
        }
    }

    #[test]
    fn quantum_run_finds_first_peak_and_snapshot() {
        let mut cfg = RunConfig::new(ModelKind::QuantumC, 0.2, 1.0, 80.0);
        cfg.stop_after_peaks = Some(1);
        cfg.integrator = IntegratorConfig::rk45(1e-10, 1e-12, 0.05);
        let r = run_model(&cfg).unwrap();
        let p = r.first_peak_or_err().unwrap();
        assert!(p.tau > 30.0 && p.tau < 45.0, "{p:?}");
        assert_relative_eq!(p.value, 10.0, max_relative = 0.01);
        let snap = r.snapshot.unwrap();
        assert!((snap.tau - p.tau).abs() <= 0.05);
        assert!(snap.population(-1) > 0.99);
        let integral: f64 = snap.theta_density.iter().sum::<f64>() * TAU / snap.theta_density.len() as f64;
        assert_relative_eq!(integral, 1.0, epsilon = 1e-10);
        assert!(r.series.records.last().unwrap().abs_a2 < 0.8 * p.value);
    }

    #[test]
    fn density_snapshot_matches_wavefunction_snapshot() {
        let mut a = RunConfig::new(ModelKind::QuantumC, 1.0, 1.0, 40.0);
        a.stop_after_peaks = Some(1);
        let mut b = a.clone();
        b.model = ModelKind::QuantumRho;
        let ra = run_model(&a).unwrap();
        let rb = run_model(&b).unwrap();
        let (sa, sb) = (ra.snapshot.unwrap(), rb.snapshot.unwrap());
        assert_eq!(sa.theta_density.len(), sb.theta_density.len());
        for (x, y) in sa.theta_density.iter().zip(&sb.theta_density) {
            assert!((x - y).abs() < 1e-7);
        }
    }
}
