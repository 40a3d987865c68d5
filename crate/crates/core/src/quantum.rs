//! Self-consistent quantum model on a truncated momentum ladder.
//!
//! The wavefunction is expanded as ψ(θ,τ) = (2π)^{−1/2} Σₙ cₙ(τ) e^{in(θ + δτ/ρ̄)}
//! with integer momentum n. In the rotating frame Ā = A e^{−iδτ/ρ̄}:
//!
//! ```text
//! dcₙ/dτ = −(i/ρ̄) n(n+δ) cₙ − (ρ̄/2)(Ā c_{n−1} − Ā* c_{n+1})
//! dĀ/dτ  = Σₙ c*_{n−1} cₙ
//! ```
//!
//! The equivalent density-matrix form evolves ϱₘₙ = c*ₘ cₙ. Amplitudes
//! outside the ladder are zero; an edge-occupation guard decides whether the
//! ladder was wide enough.

use std::f64::consts::{PI, TAU};
use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, OdeSystem, Outcome};
use crate::scaling::ScaledParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Inclusive integer momentum range `[n_min, n_max]` with at least two levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ladder {
    n_min: i64,
    n_max: i64,
}

impl Ladder {
    pub fn new(n_min: i64, n_max: i64) -> Result<Self> {
        if n_max <= n_min {
            return Err(Error::InvalidParameter(format!(
                "ladder [{n_min}, {n_max}] needs at least two levels"
            )));
        }
        Ok(Self { n_min, n_max })
    }

    /// `[n0 − ⌈4ρ̄⌉ − 8, n0 + 8]`: recoil goes mostly downward, spread ~ρ̄.
    pub fn default_for(n0: i64, rho_bar: f64) -> Self {
        let down = (4.0 * rho_bar).ceil() as i64 + 8;
        Self { n_min: n0 - down, n_max: n0 + 8 }
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// n_max − n_min.
    pub fn span(&self) -> usize {
        (self.n_max - self.n_min) as usize
    }

    pub fn contains(&self, n: i64) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    pub fn index(&self, n: i64) -> Option<usize> {
        self.contains(n).then(|| (n - self.n_min) as usize)
    }

    pub fn level(&self, index: usize) -> i64 {
        self.n_min + index as i64
    }

    pub fn levels(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max
    }

    /// Extends the requested sides by `⌈ρ̄⌉ + 8` levels.
    pub fn widened(&self, lower: bool, upper: bool, rho_bar: f64) -> Self {
        let step = rho_bar.ceil() as i64 + 8;
        Self {
            n_min: self.n_min - if lower { step } else { 0 },
            n_max: self.n_max + if upper { step } else { 0 },
        }
    }
}

/// Amplitudes cₙ on a ladder plus the rotating-frame field Ā.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumWavefunction {
    pub ladder: Ladder,
    pub c: Vec<Complex64>,
    pub tau: f64,
    pub field_abar: Complex64,
}

/// Density matrix ϱₘₙ = ⟨c*ₘ cₙ⟩ (row m, column n, both offset by `n_min`).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrixState {
    pub ladder: Ladder,
    pub rho: DMatrix<Complex64>,
    pub tau: f64,
    pub field_abar: Complex64,
}

/// Time derivative of a [`MomentumWavefunction`].
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionDerivative {
    pub dc: Vec<Complex64>,
    pub dfield: Complex64,
}

/// Time derivative of a [`DensityMatrixState`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDerivative {
    pub drho: DMatrix<Complex64>,
    pub dfield: Complex64,
}

/// Level occupations and moments of a ladder state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observables {
    pub populations: Vec<f64>,
    pub mean_p: f64,
    pub mean_pbar: f64,
    /// Standard deviation of n under the occupations.
    pub spread_p: f64,
    pub norm: f64,
    /// |Ā|² (equal to the lab-frame |A|²).
    pub intensity: f64,
}

/// c_{n0} = 1 on `ladder`, field Ā = `field_abar`, τ = 0.
pub fn init_momentum_state(n0: i64, ladder: Ladder, field_abar: Complex64) -> Result<MomentumWavefunction> {
    let i0 = ladder.index(n0).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "start level {n0} outside ladder [{}, {}]",
            ladder.n_min, ladder.n_max
        ))
    })?;
    let mut c = vec![Complex64::default(); ladder.len()];
    c[i0] = Complex64::new(1.0, 0.0);
    Ok(MomentumWavefunction { ladder, c, tau: 0.0, field_abar })
}

/// Lab-frame field A = Ā e^{iδτ/ρ̄}.
pub fn lab_field(abar: Complex64, tau: f64, params: &ScaledParams) -> Complex64 {
    abar * Complex64::from_polar(1.0, params.detuning_rate() * tau)
}

fn check_finite(values: impl IntoIterator<Item = Complex64>, what: &str) -> Result<()> {
    if values.into_iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("non-finite {what}")))
    }
}

impl MomentumWavefunction {
    pub fn validate(&self) -> Result<()> {
        if self.c.len() != self.ladder.len() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for a ladder of {} levels",
                self.c.len(),
                self.ladder.len()
            )));
        }
        check_finite(self.c.iter().copied().chain([self.field_abar]), "amplitude")
    }

    /// Amplitude of level n (zero off the ladder).
    pub fn amplitude(&self, n: i64) -> Complex64 {
        self.ladder.index(n).map_or(Complex64::default(), |i| self.c[i])
    }

    /// Lab-frame amplitudes c̃ₙ = cₙ e^{inδτ/ρ̄}, for which
    /// ψ(θ) = (2π)^{−1/2} Σ c̃ₙ e^{inθ}.
    pub fn lab_amplitudes(&self, params: &ScaledParams) -> Vec<Complex64> {
        let w = params.detuning_rate() * self.tau;
        self.c
            .iter()
            .enumerate()
            .map(|(i, c)| c * Complex64::from_polar(1.0, self.ladder.level(i) as f64 * w))
            .collect()
    }

    pub fn to_density(&self) -> DensityMatrixState {
        let l = self.ladder.len();
        let rho = DMatrix::from_fn(l, l, |m, n| self.c[m].conj() * self.c[n]);
        DensityMatrixState { ladder: self.ladder, rho, tau: self.tau, field_abar: self.field_abar }
    }
}

impl DensityMatrixState {
    pub fn validate(&self) -> Result<()> {
        let l = self.ladder.len();
        if self.rho.shape() != (l, l) {
            return Err(Error::InvalidState(format!(
                "density matrix {:?} for a ladder of {l} levels",
                self.rho.shape()
            )));
        }
        check_finite(self.rho.iter().copied().chain([self.field_abar]), "matrix element")
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// max |ϱₘₙ − ϱ*ₙₘ|.
    pub fn hermiticity_error(&self) -> f64 {
        let l = self.ladder.len();
        let mut worst: f64 = 0.0;
        for m in 0..l {
            for n in m..l {
                worst = worst.max((self.rho[(m, n)] - self.rho[(n, m)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part of ϱ.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Hermiticity, unit trace and positivity within `tol` (eigenvalues ≥ −1e−10).
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        self.validate()?;
        let h = self.hermiticity_error();
        if h > tol {
            return Err(Error::Invariant(format!("density matrix not Hermitian ({h:.3e})")));
        }
        let t = self.trace();
        if (t - 1.0).abs() > tol {
            return Err(Error::Invariant(format!("trace {t} differs from 1")));
        }
        let e = self.min_eigenvalue();
        if e < -1e-10 {
            return Err(Error::Invariant(format!("negative eigenvalue {e:.3e}")));
        }
        Ok(())
    }
}

/// Evaluates the amplitude equations.
pub fn rhs_cn(s: &MomentumWavefunction, params: &ScaledParams) -> Result<WavefunctionDerivative> {
    s.validate()?;
    let l = s.ladder.len();
    let mut dc = vec![Complex64::default(); l];
    let dfield = amplitude_rhs(s.ladder, params, &s.c, s.field_abar, &mut dc);
    Ok(WavefunctionDerivative { dc, dfield })
}

fn amplitude_rhs(
    ladder: Ladder,
    params: &ScaledParams,
    c: &[Complex64],
    abar: Complex64,
    dc: &mut [Complex64],
) -> Complex64 {
    let (rho, delta) = (params.rho_bar, params.delta);
    let l = c.len();
    let half = 0.5 * rho;
    let zero = Complex64::default();
    for i in 0..l {
        let n = ladder.level(i) as f64;
        let below = if i > 0 { c[i - 1] } else { zero };
        let above = if i + 1 < l { c[i + 1] } else { zero };
        dc[i] = -I * (n * (n + delta) / rho) * c[i] - half * (abar * below - abar.conj() * above);
    }
    c.windows(2).map(|w| w[0].conj() * w[1]).sum()
}

/// Evaluates the density-matrix equations.
pub fn rhs_density(s: &DensityMatrixState, params: &ScaledParams) -> Result<DensityDerivative> {
    s.validate()?;
    let l = s.ladder.len();
    let flat: Vec<Complex64> = (0..l * l).map(|k| s.rho[(k / l, k % l)]).collect();
    let mut d = vec![Complex64::default(); l * l];
    let dfield = density_rhs(s.ladder, params, &flat, s.field_abar, &mut d);
    Ok(DensityDerivative { drho: DMatrix::from_fn(l, l, |m, n| d[m * l + n]), dfield })
}

/// `rho` and `d` are row-major `l × l`.
fn density_rhs(
    ladder: Ladder,
    params: &ScaledParams,
    rho: &[Complex64],
    abar: Complex64,
    d: &mut [Complex64],
) -> Complex64 {
    let (rb, delta) = (params.rho_bar, params.delta);
    let l = ladder.len();
    let half = 0.5 * rb;
    let at = |m: usize, n: usize| rho[m * l + n];
    let zero = Complex64::default();
    for m in 0..l {
        let mm = ladder.level(m) as f64;
        for n in 0..l {
            let nn = ladder.level(n) as f64;
            let up_m = if m + 1 < l { at(m + 1, n) } else { zero };
            let down_n = if n > 0 { at(m, n - 1) } else { zero };
            let up_n = if n + 1 < l { at(m, n + 1) } else { zero };
            let down_m = if m > 0 { at(m - 1, n) } else { zero };
            d[m * l + n] = I * ((mm - nn) * (delta + mm + nn) / rb) * at(m, n)
                + half * (abar * (up_m - down_n) + abar.conj() * (up_n - down_m));
        }
    }
    (1..l).map(|n| at(n - 1, n)).sum()
}

/// Operations shared by the two ladder representations.
pub trait LadderState: Clone + sealed::Flat {
    fn ladder(&self) -> Ladder;
    fn tau(&self) -> f64;
    fn field_abar(&self) -> Complex64;
    /// Occupation Pₙ of each level, lowest first.
    fn populations(&self) -> Vec<f64>;
    /// Copy of the state on a ladder that contains the current one.
    fn on_ladder(&self, ladder: Ladder) -> Result<Self>;
    /// Matter term of the field equation, Σ ϱ_{n−1,n}.
    fn field_source(&self) -> Complex64;
}

impl LadderState for MomentumWavefunction {
    fn ladder(&self) -> Ladder {
        self.ladder
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn field_abar(&self) -> Complex64 {
        self.field_abar
    }
    fn populations(&self) -> Vec<f64> {
        self.c.iter().map(|c| c.norm_sqr()).collect()
    }
    fn on_ladder(&self, ladder: Ladder) -> Result<Self> {
        let off = embed_offset(self.ladder, ladder)?;
        let mut c = vec![Complex64::default(); ladder.len()];
        c[off..off + self.c.len()].copy_from_slice(&self.c);
        Ok(Self { ladder, c, ..self.clone() })
    }
    fn field_source(&self) -> Complex64 {
        self.c.windows(2).map(|w| w[0].conj() * w[1]).sum()
    }
}

impl LadderState for DensityMatrixState {
    fn ladder(&self) -> Ladder {
        self.ladder
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn field_abar(&self) -> Complex64 {
        self.field_abar
    }
    fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }
    fn on_ladder(&self, ladder: Ladder) -> Result<Self> {
        let off = embed_offset(self.ladder, ladder)?;
        let l = self.ladder.len();
        let mut rho = DMatrix::zeros(ladder.len(), ladder.len());
        rho.view_mut((off, off), (l, l)).copy_from(&self.rho);
        Ok(Self { ladder, rho, ..self.clone() })
    }
    fn field_source(&self) -> Complex64 {
        (1..self.ladder.len()).map(|n| self.rho[(n - 1, n)]).sum()
    }
}

fn embed_offset(from: Ladder, to: Ladder) -> Result<usize> {
    if to.n_min > from.n_min || to.n_max < from.n_max {
        return Err(Error::InvalidParameter(format!(
            "ladder [{}, {}] does not contain [{}, {}]",
            to.n_min, to.n_max, from.n_min, from.n_max
        )));
    }
    Ok((from.n_min - to.n_min) as usize)
}

/// Occupations and momentum moments; mean_pbar = (2/ρ̄) mean_p.
pub fn observables<S: LadderState>(s: &S, params: &ScaledParams) -> Observables {
    let populations = s.populations();
    let ladder = s.ladder();
    let norm: f64 = populations.iter().sum();
    let mean_p: f64 = populations.iter().enumerate().map(|(i, p)| ladder.level(i) as f64 * p).sum();
    let second: f64 = populations.iter().enumerate().map(|(i, p)| (ladder.level(i) as f64).powi(2) * p).sum();
    let centred = mean_p / norm;
    Observables {
        spread_p: (second / norm - centred * centred).max(0.0).sqrt(),
        mean_pbar: 2.0 * mean_p / params.rho_bar,
        mean_p,
        norm,
        intensity: s.field_abar().norm_sqr(),
        populations,
    }
}

/// |Ā|² + (2/ρ̄) Σ n Pₙ.
pub fn quantum_invariant<S: LadderState>(s: &S, params: &ScaledParams) -> f64 {
    let o = observables(s, params);
    o.intensity + o.mean_pbar
}

/// P_{n_min} + P_{n_max}.
pub fn edge_occupation<S: LadderState>(s: &S) -> f64 {
    let p = s.populations();
    p[0] + p[p.len() - 1]
}

fn unit_roots(m: usize) -> Vec<Complex64> {
    (0..m).map(|k| Complex64::from_polar(1.0, TAU * k as f64 / m as f64)).collect()
}

/// |Σ aₙ e^{inθⱼ}|²/2π on θⱼ = 2πj/M.
fn synthesize_density(ladder: Ladder, amps: &[Complex64], m: usize) -> Vec<f64> {
    let roots = unit_roots(m);
    (0..m)
        .map(|j| {
            let psi: Complex64 = amps
                .iter()
                .enumerate()
                .map(|(i, a)| a * roots[(ladder.level(i) * j as i64).rem_euclid(m as i64) as usize])
                .sum();
            psi.norm_sqr() / (2.0 * PI)
        })
        .collect()
}

fn check_synthesis_grid(ladder: Ladder, m: usize) -> Result<()> {
    let required = 2 * ladder.span() + 1;
    if m < required {
        return Err(Error::GridTooSmall { required, given: m });
    }
    Ok(())
}

/// |ψ(θ′)|² on M equispaced points of the co-moving angle θ′ = θ + δτ/ρ̄.
/// Requires M ≥ 2(n_max − n_min) + 1.
pub fn psi_density(s: &MomentumWavefunction, m: usize) -> Result<Vec<f64>> {
    s.validate()?;
    check_synthesis_grid(s.ladder, m)?;
    Ok(synthesize_density(s.ladder, &s.c, m))
}

/// |ψ(θ)|² on M equispaced points of the lab-frame angle θ.
pub fn psi_density_lab(s: &MomentumWavefunction, params: &ScaledParams, m: usize) -> Result<Vec<f64>> {
    s.validate()?;
    check_synthesis_grid(s.ladder, m)?;
    Ok(synthesize_density(s.ladder, &s.lab_amplitudes(params), m))
}

pub(crate) mod sealed {
    use super::*;

    /// Flat real-vector layout used by the integrators.
    pub trait Flat: Sized {
        fn pack(&self) -> Vec<f64>;
        fn unpack(ladder: Ladder, tau: f64, y: &[f64]) -> Self;
        fn rhs_flat(ladder: Ladder, params: &ScaledParams, y: &[f64], d: &mut [f64]);
        fn flat_dim(ladder: Ladder) -> usize;
    }

    fn split(y: &[f64]) -> (&[Complex64], Complex64) {
        let z: &[Complex64] = bytemuck::cast_slice(y);
        let (body, field) = z.split_at(z.len() - 1);
        (body, field[0])
    }

    impl Flat for MomentumWavefunction {
        fn pack(&self) -> Vec<f64> {
            let mut z = self.c.clone();
            z.push(self.field_abar);
            bytemuck::cast_slice(&z).to_vec()
        }
        fn unpack(ladder: Ladder, tau: f64, y: &[f64]) -> Self {
            let (c, field_abar) = split(y);
            Self { ladder, c: c.to_vec(), tau, field_abar }
        }
        fn rhs_flat(ladder: Ladder, params: &ScaledParams, y: &[f64], d: &mut [f64]) {
            let (c, abar) = split(y);
            let dz: &mut [Complex64] = bytemuck::cast_slice_mut(d);
            let (dc, df) = dz.split_at_mut(c.len());
            df[0] = amplitude_rhs(ladder, params, c, abar, dc);
        }
        fn flat_dim(ladder: Ladder) -> usize {
            2 * (ladder.len() + 1)
        }
    }

    impl Flat for DensityMatrixState {
        fn pack(&self) -> Vec<f64> {
            let l = self.ladder.len();
            let mut z: Vec<Complex64> = (0..l * l).map(|k| self.rho[(k / l, k % l)]).collect();
            z.push(self.field_abar);
            bytemuck::cast_slice(&z).to_vec()
        }
        fn unpack(ladder: Ladder, tau: f64, y: &[f64]) -> Self {
            let (r, field_abar) = split(y);
            let l = ladder.len();
            Self { ladder, rho: DMatrix::from_fn(l, l, |m, n| r[m * l + n]), tau, field_abar }
        }
        fn rhs_flat(ladder: Ladder, params: &ScaledParams, y: &[f64], d: &mut [f64]) {
            let (r, abar) = split(y);
            let dz: &mut [Complex64] = bytemuck::cast_slice_mut(d);
            let (dr, df) = dz.split_at_mut(r.len());
            df[0] = density_rhs(ladder, params, r, abar, dr);
        }
        fn flat_dim(ladder: Ladder) -> usize {
            let l = ladder.len();
            2 * (l * l + 1)
        }
    }
}

struct LadderSystem<S> {
    ladder: Ladder,
    params: ScaledParams,
    _state: std::marker::PhantomData<fn() -> S>,
}

impl<S: sealed::Flat> OdeSystem for LadderSystem<S> {
    fn dim(&self) -> usize {
        S::flat_dim(self.ladder)
    }
    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
        S::rhs_flat(self.ladder, &self.params, y, d);
    }
}

/// Per-sample checks applied during [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardPolicy {
    /// Largest allowed P_{n_min} + P_{n_max}.
    pub edge_limit: f64,
    /// Largest allowed |norm − 1|.
    pub norm_tol: f64,
    /// Widen and re-run when the edge guard trips, instead of failing.
    pub widen: bool,
    pub max_widenings: u32,
}

impl Default for GuardPolicy {
    fn default() -> Self {
        Self { edge_limit: 1e-10, norm_tol: 1e-8, widen: true, max_widenings: 8 }
    }
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct QuantumRun<S> {
    pub state: S,
    pub outcome: Outcome,
    /// Ladder the accepted run used (wider than the input after widenings).
    pub ladder: Ladder,
    pub widenings: u32,
}

/// Integrates either ladder representation from `state` to `tau_end`.
///
/// Every sample is checked against `guard`. When the edge occupation trips
/// and widening is enabled, the offending side(s) are extended and the whole
/// run restarts from `state` on the wider ladder; `observer` then sees the
/// samples again from the initial τ. With widening disabled (or exhausted)
/// the trip is returned as [`Error::LadderGuard`].
pub fn evolve<S, O>(
    state: &S,
    params: &ScaledParams,
    cfg: &IntegratorConfig,
    tau_end: f64,
    guard: &GuardPolicy,
    mut observer: O,
) -> Result<QuantumRun<S>>
where
    S: LadderState,
    O: FnMut(&S) -> ControlFlow<()>,
{
    let mut start = state.clone();
    let mut widenings = 0;
    loop {
        let mut edges = (0.0, 0.0);
        match evolve_once(&start, params, cfg, tau_end, guard, &mut edges, &mut observer) {
            Err(Error::LadderGuard { .. }) if guard.widen && widenings < guard.max_widenings => {
                let half = 0.5 * guard.edge_limit;
                let (lower, upper) = (edges.0 > half, edges.1 > half);
                let wider = start.ladder().widened(lower || !upper, upper, params.rho_bar);
                log::info!(
                    "edge guard tripped on [{}, {}]; re-running on [{}, {}]",
                    start.ladder().n_min,
                    start.ladder().n_max,
                    wider.n_min,
                    wider.n_max
                );
                start = start.on_ladder(wider)?;
                widenings += 1;
            }
            Err(e) => return Err(e),
            Ok((s, outcome)) => {
                return Ok(QuantumRun { ladder: s.ladder(), state: s, outcome, widenings });
            }
        }
    }
}

fn evolve_once<S, O>(
    state: &S,
    params: &ScaledParams,
    cfg: &IntegratorConfig,
    tau_end: f64,
    guard: &GuardPolicy,
    edges: &mut (f64, f64),
    observer: &mut O,
) -> Result<(S, Outcome)>
where
    S: LadderState,
    O: FnMut(&S) -> ControlFlow<()>,
{
    let ladder = state.ladder();
    let sys = LadderSystem::<S> { ladder, params: *params, _state: Default::default() };
    let mut y = state.pack();
    let mut violation = None;
    let outcome = integrate(&sys, state.tau(), &mut y, tau_end, cfg, |t, y| {
        let s = S::unpack(ladder, t, y);
        let pops = s.populations();
        let norm: f64 = pops.iter().sum();
        *edges = (pops[0], pops[pops.len() - 1]);
        let edge = edges.0 + edges.1;
        if (norm - 1.0).abs() > guard.norm_tol {
            violation = Some(Error::Invariant(format!("norm {norm} at tau = {t}")));
        } else if edge > guard.edge_limit {
            violation = Some(Error::LadderGuard {
                tau: t,
                occupation: edge,
                limit: guard.edge_limit,
                n_min: ladder.n_min,
                n_max: ladder.n_max,
            });
        }
        if violation.is_some() {
            return ControlFlow::Break(());
        }
        observer(&s)
    })?;
    if let Some(e) = violation {
        return Err(e);
    }
    Ok((S::unpack(ladder, outcome.t_final, &y), outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn params(rho: f64, delta: f64) -> ScaledParams {
        ScaledParams::new(rho, delta).unwrap()
    }

    fn superposition(ladder: Ladder, levels: &[(i64, Complex64)]) -> MomentumWavefunction {
        let mut s = init_momentum_state(levels[0].0, ladder, Complex64::default()).unwrap();
        s.c.iter_mut().for_each(|c| *c = Complex64::default());
        for (n, a) in levels {
            s.c[ladder.index(*n).unwrap()] = *a;
        }
        s
    }

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn ladder_construction() {
        let l = Ladder::new(-8, 8).unwrap();
        assert_eq!(l.len(), 17);
        assert_eq!(l.index(-8), Some(0));
        assert_eq!(l.index(9), None);
        assert!(Ladder::new(0, 0).is_err());
        assert_eq!(Ladder::default_for(0, 10.0), Ladder::new(-48, 8).unwrap());
        assert_eq!(Ladder::default_for(2, 0.2), Ladder::new(-7, 10).unwrap());
        assert_eq!(l.widened(false, true, 10.0), Ladder::new(-8, 26).unwrap());
    }

    #[test]
    fn initial_states() {
        let s = init_momentum_state(0, Ladder::new(-8, 8).unwrap(), r(1e-4)).unwrap();
        let p = params(1.0, 1.0);
        let o = observables(&s, &p);
        assert_eq!(o.populations[8], 1.0);
        assert_eq!(o.mean_p, 0.0);
        assert_eq!(o.norm, 1.0);

        let s = init_momentum_state(3, Ladder::new(-2, 5).unwrap(), r(0.0)).unwrap();
        assert_eq!(observables(&s, &p).populations[5], 1.0);
        assert!(init_momentum_state(6, Ladder::new(-2, 5).unwrap(), r(0.0)).is_err());
    }

    #[test]
    fn free_evolution_only_rotates_phase() {
        let mut s = init_momentum_state(2, Ladder::new(-3, 3).unwrap(), r(0.0)).unwrap();
        s.c[5] = Complex64::new(0.6, 0.8);
        let d = rhs_cn(&s, &params(2.0, 1.0)).unwrap();
        // −(i/ρ̄) n(n+δ) c = −i·3 c
        assert_relative_eq!((d.dc[5] - (-I * 3.0 * s.c[5])).norm(), 0.0, epsilon = 1e-15);
        for (i, c) in d.dc.iter().enumerate() {
            if i != 5 {
                assert_eq!(*c, Complex64::default());
            }
        }
        assert_eq!(d.dfield, Complex64::default());
    }

    #[test]
    fn single_level_emits_nothing() {
        let s = init_momentum_state(0, Ladder::new(-2, 2).unwrap(), Complex64::new(0.3, -0.2)).unwrap();
        assert_eq!(rhs_cn(&s, &params(1.0, 1.0)).unwrap().dfield, Complex64::default());
    }

    #[test]
    fn equal_superposition_drives_field() {
        let ladder = Ladder::new(-3, 3).unwrap();
        let s = superposition(ladder, &[(0, r(FRAC_1_SQRT_2)), (-1, r(FRAC_1_SQRT_2))]);
        let d = rhs_cn(&s, &params(1.0, 1.0)).unwrap();
        assert_relative_eq!(d.dfield.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(d.dfield.im, 0.0);
        let p = params(4.0, 0.0);
        let o = observables(&s, &p);
        assert_relative_eq!(o.mean_p, -0.5, epsilon = 1e-15);
        assert_relative_eq!(o.mean_pbar, -0.25, epsilon = 1e-15);
    }

    #[test]
    fn stationary_density_and_trace_conservation() {
        let ladder = Ladder::new(-2, 2).unwrap();
        let p = params(0.7, 1.3);
        let s = init_momentum_state(1, ladder, r(0.0)).unwrap().to_density();
        let d = rhs_density(&s, &p).unwrap();
        assert!(d.drho.iter().all(|z| z.norm() == 0.0));

        let mut s = s;
        s.rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            r(0.1),
            r(0.2),
            r(0.3),
            r(0.25),
            r(0.15),
        ]));
        s.field_abar = r(0.4);
        let d = rhs_density(&s, &p).unwrap();
        let tr: Complex64 = d.drho.diagonal().iter().sum();
        assert!(tr.norm() < 1e-15);
    }

    fn random_state(ladder: Ladder, seed: u64) -> MomentumWavefunction {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c: Vec<Complex64> = (0..ladder.len())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        c.iter_mut().for_each(|z| *z /= norm);
        MomentumWavefunction { ladder, c, tau: 0.3, field_abar: Complex64::new(0.2, -0.7) }
    }

    #[test]
    fn density_rhs_is_product_rule_of_amplitude_rhs() {
        let ladder = Ladder::new(-4, 3).unwrap();
        let p = params(1.7, 0.6);
        let s = random_state(ladder, 11);
        let dc = rhs_cn(&s, &p).unwrap();
        let dr = rhs_density(&s.to_density(), &p).unwrap();
        let l = ladder.len();
        for m in 0..l {
            for n in 0..l {
                let expect = dc.dc[m].conj() * s.c[n] + s.c[m].conj() * dc.dc[n];
                assert!((dr.drho[(m, n)] - expect).norm() < 1e-12, "({m}, {n})");
            }
        }
        assert!((dr.dfield - dc.dfield).norm() < 1e-12);
    }

    #[test]
    fn density_rhs_is_hermitian() {
        let ladder = Ladder::new(-3, 3).unwrap();
        let s = random_state(ladder, 5).to_density();
        let d = rhs_density(&s, &params(0.9, -0.4)).unwrap();
        let l = ladder.len();
        for m in 0..l {
            for n in 0..l {
                assert!((d.drho[(m, n)] - d.drho[(n, m)].conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn psi_density_examples() {
        let ladder = Ladder::new(-2, 2).unwrap();
        let s = init_momentum_state(0, ladder, r(0.0)).unwrap();
        let d = psi_density(&s, 9).unwrap();
        assert!(d.iter().all(|v| (v - 1.0 / TAU).abs() < 1e-15));
        assert!(matches!(psi_density(&s, 8), Err(Error::GridTooSmall { required: 9, given: 8 })));

        let s = superposition(ladder, &[(0, r(FRAC_1_SQRT_2)), (1, r(FRAC_1_SQRT_2))]);
        let m = 64;
        let d = psi_density(&s, m).unwrap();
        for (j, v) in d.iter().enumerate() {
            let th = TAU * j as f64 / m as f64;
            assert_relative_eq!(*v, (1.0 + th.cos()) / TAU, epsilon = 1e-14);
        }
    }

    #[test]
    fn psi_density_is_normalized() {
        let ladder = Ladder::new(-6, 5).unwrap();
        let s = random_state(ladder, 3);
        let m = 2 * ladder.span() + 1;
        let p = params(2.0, 1.0);
        for d in [psi_density(&s, m).unwrap(), psi_density_lab(&s, &p, 4 * m).unwrap()] {
            let integral: f64 = d.iter().sum::<f64>() * TAU / d.len() as f64;
            assert_relative_eq!(integral, 1.0, epsilon = 1e-12);
            assert!(d.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn density_checks() {
        let s = random_state(Ladder::new(-3, 2).unwrap(), 9).to_density();
        s.check_physical(1e-12).unwrap();
        assert!(s.min_eigenvalue() > -1e-12);
        let mut bad = s.clone();
        bad.rho[(0, 1)] += r(0.1);
        assert!(bad.check_physical(1e-8).is_err());
    }

    #[test]
    fn widening_embeds_state() {
        let s = random_state(Ladder::new(-2, 2).unwrap(), 1);
        let w = s.on_ladder(Ladder::new(-5, 4).unwrap()).unwrap();
        assert_eq!(w.amplitude(1), s.amplitude(1));
        assert_eq!(w.amplitude(-4), Complex64::default());
        assert!(s.on_ladder(Ladder::new(-1, 4).unwrap()).is_err());
        let d = s.to_density().on_ladder(Ladder::new(-5, 4).unwrap()).unwrap();
        assert_eq!(d.rho[(3, 4)], s.c[0].conj() * s.c[1]);
    }

    #[test]
    fn zero_length_run_is_identity() {
        let s = init_momentum_state(0, Ladder::new(-3, 3).unwrap(), r(1e-4)).unwrap();
        let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 0.1);
        let run =
            evolve(&s, &params(1.0, 1.0), &cfg, 0.0, &GuardPolicy::default(), |_| ControlFlow::Continue(()))
                .unwrap();
        assert_eq!(run.state, s);
    }

    #[test]
    fn amplitude_and_density_runs_agree_and_conserve() {
        let p = params(1.0, 1.0);
        let s = init_momentum_state(0, Ladder::new(-6, 3).unwrap(), r(1e-2)).unwrap();
        let cfg = IntegratorConfig::rk45(1e-11, 1e-13, 0.5);
        let guard = GuardPolicy { edge_limit: 1.0, ..Default::default() };
        let inv0 = quantum_invariant(&s, &p);
        let mut drift: f64 = 0.0;
        let a = evolve(&s, &p, &cfg, 8.0, &guard, |x| {
            drift = drift.max((quantum_invariant(x, &p) - inv0).abs());
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(drift < 1e-9, "{drift}");
        let b = evolve(&s.to_density(), &p, &cfg, 8.0, &guard, |_| ControlFlow::Continue(())).unwrap();
        let formed = a.state.to_density();
        let worst = (&formed.rho - &b.state.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        b.state.check_physical(1e-8).unwrap();
    }

    #[test]
    fn guard_trip_without_widening_is_reported() {
        let p = params(3.0, 1.0);
        let s = init_momentum_state(0, Ladder::new(-2, 2).unwrap(), r(0.1)).unwrap();
        let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 0.1);
        let guard = GuardPolicy { widen: false, ..Default::default() };
        let err = evolve(&s, &p, &cfg, 10.0, &guard, |_| ControlFlow::Continue(())).unwrap_err();
        assert!(matches!(err, Error::LadderGuard { n_min: -2, n_max: 2, .. }));
    }

    #[test]
    fn guard_trip_widens_and_reruns() {
        let p = params(1.0, 1.0);
        let s = init_momentum_state(0, Ladder::new(-2, 2).unwrap(), r(1e-2)).unwrap();
        let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 0.1);
        let mut restarts = 0;
        let run = evolve(&s, &p, &cfg, 6.0, &GuardPolicy::default(), |x| {
            if x.tau == 0.0 {
                restarts += 1;
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(run.widenings >= 1);
        assert_eq!(restarts, run.widenings + 1);
        assert!(run.ladder.n_min() < -2);
        assert!(edge_occupation(&run.state) < 1e-10);
    }
}
