//! Two-level reduction of the density-matrix model.
//!
//! When only levels n and n−1 are occupied, the polarization S = 2ϱ_{n−1,n},
//! the inversion D = ϱ_{n,n} − ϱ_{n−1,n−1} and the scaled field A′ = √ρ̄ Ā
//! obey, in τ′ = √ρ̄ τ,
//!
//! ```text
//! dS/dτ′  = −iΔₙ S + A′ D
//! dD/dτ′  = −(A′ S* + A′* S)/2
//! dA′/dτ′ = g S                 g = 1/2 (consistent) or 1 (literal)
//! ```
//!
//! with Δₙ = (δ − 1 + 2n)/ρ̄^{3/2}. Substituting S = 2ϱ_{n−1,n} into the full
//! field equation gives g = 1/2; the literal variant keeps g = 1.
//! At resonance with real S, S = sin φ and D = cos φ, and φ obeys the pendulum
//! equation φ″ = g sin φ with φ′ = A′.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, OdeSystem, Outcome};
use crate::quantum::DensityMatrixState;
use crate::scaling::ScaledParams;
use crate::series::PeakTracker;

/// Variables of one two-level transition n → n−1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    /// Upper level index.
    pub n: i64,
    pub s: Complex64,
    pub d: f64,
    pub field_aprime: Complex64,
    pub tau_prime: f64,
    pub delta_n: f64,
}

/// Coupling of the field equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// dA′/dτ′ = S.
    PaperLiteral,
    /// dA′/dτ′ = S/2, the exact image of the full field equation.
    #[default]
    ConsistentReduction,
}

impl Variant {
    /// g in dA′/dτ′ = g S; also the pendulum constant.
    pub fn coupling(self) -> f64 {
        match self {
            Variant::PaperLiteral => 1.0,
            Variant::ConsistentReduction => 0.5,
        }
    }

    /// Weight w in the conserved |A′|² + w D.
    pub fn inversion_weight(self) -> f64 {
        2.0 * self.coupling()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::PaperLiteral => "paper-literal",
            Variant::ConsistentReduction => "consistent-reduction",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(Variant::PaperLiteral),
            "consistent-reduction" => Ok(Variant::ConsistentReduction),
            other => Err(Error::Unknown { kind: "variant", name: other.to_string() }),
        }
    }
}

/// Δₙ = (δ − 1 + 2n)/ρ̄^{3/2}.
pub fn transition_detuning(n: i64, params: &ScaledParams) -> f64 {
    (params.delta - 1.0 + 2.0 * n as f64) / params.rho_bar.powf(1.5)
}

/// Time derivative of a [`BlochState`] in τ′.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochDerivative {
    pub ds: Complex64,
    pub dd: f64,
    pub dfield: Complex64,
}

impl BlochState {
    /// Pure resonant state with Bloch angle φ (S = sin φ, D = cos φ).
    pub fn from_angle(n: i64, phi: f64, field_aprime: Complex64) -> Self {
        Self {
            n,
            s: Complex64::new(phi.sin(), 0.0),
            d: phi.cos(),
            field_aprime,
            tau_prime: 0.0,
            delta_n: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.s.re, self.s.im, self.d, self.field_aprime.re, self.field_aprime.im]
            .iter()
            .all(|v| v.is_finite())
            && self.tau_prime.is_finite()
            && self.delta_n.is_finite();
        if !finite {
            return Err(Error::InvalidState("non-finite Bloch variable".into()));
        }
        let len2 = self.s.norm_sqr() + self.d * self.d;
        if len2 > 1.0 + 1e-8 {
            return Err(Error::InvalidState(format!("|S|² + D² = {len2} exceeds 1")));
        }
        Ok(())
    }

    /// Unscaled time τ = τ′/√ρ̄.
    pub fn tau(&self, params: &ScaledParams) -> f64 {
        self.tau_prime / params.rho_bar.sqrt()
    }

    /// Rotating-frame field Ā = A′/√ρ̄.
    pub fn field_abar(&self, params: &ScaledParams) -> Complex64 {
        self.field_aprime / params.rho_bar.sqrt()
    }

    fn pack(&self) -> [f64; 5] {
        [self.s.re, self.s.im, self.d, self.field_aprime.re, self.field_aprime.im]
    }

    fn with_flat(&self, tau_prime: f64, y: &[f64]) -> Self {
        Self {
            s: Complex64::new(y[0], y[1]),
            d: y[2],
            field_aprime: Complex64::new(y[3], y[4]),
            tau_prime,
            ..*self
        }
    }
}

/// Collapses ϱ onto levels {n−1, n}. Fails with [`Error::NotTwoLevel`] when
/// more than `threshold` of the population sits on other levels.
pub fn reduce_to_two_level(
    rho: &DensityMatrixState,
    n: i64,
    params: &ScaledParams,
    threshold: f64,
) -> Result<BlochState> {
    rho.validate()?;
    let ladder = rho.ladder;
    let (lo, hi) = match (ladder.index(n - 1), ladder.index(n)) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "levels {} and {n} are not both on ladder [{}, {}]",
                n - 1,
                ladder.n_min(),
                ladder.n_max()
            )))
        }
    };
    let leaked: f64 = (0..ladder.len()).filter(|&i| i != lo && i != hi).map(|i| rho.rho[(i, i)].re).sum();
    if leaked > threshold {
        return Err(Error::NotTwoLevel { upper: n, lower: n - 1, leaked });
    }
    let root = params.rho_bar.sqrt();
    Ok(BlochState {
        n,
        s: 2.0 * rho.rho[(lo, hi)],
        d: rho.rho[(hi, hi)].re - rho.rho[(lo, lo)].re,
        field_aprime: root * rho.field_abar,
        tau_prime: root * rho.tau,
        delta_n: transition_detuning(n, params),
    })
}

/// Population outside levels {n−1, n}.
pub fn leakage(rho: &DensityMatrixState, n: i64) -> f64 {
    let ladder = rho.ladder;
    ladder.levels().enumerate().filter(|(_, k)| *k != n && *k != n - 1).map(|(i, _)| rho.rho[(i, i)].re).sum()
}

/// Evaluates the Bloch equations for `variant`.
pub fn rhs_bloch(b: &BlochState, variant: Variant) -> Result<BlochDerivative> {
    b.validate()?;
    let mut d = [0.0; 5];
    BlochSystem { delta_n: b.delta_n, variant }.rhs(b.tau_prime, &b.pack(), &mut d);
    Ok(BlochDerivative { ds: Complex64::new(d[0], d[1]), dd: d[2], dfield: Complex64::new(d[3], d[4]) })
}

/// |A′|² + D (consistent) or |A′|² + 2D (literal).
pub fn bloch_invariant(b: &BlochState, variant: Variant) -> f64 {
    b.field_aprime.norm_sqr() + variant.inversion_weight() * b.d
}

struct BlochSystem {
    delta_n: f64,
    variant: Variant,
}

impl OdeSystem for BlochSystem {
    fn dim(&self) -> usize {
        5
    }

    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
        let s = Complex64::new(y[0], y[1]);
        let inv = y[2];
        let a = Complex64::new(y[3], y[4]);
        let ds = Complex64::new(0.0, -self.delta_n) * s + a * inv;
        let dd = -(a * s.conj()).re;
        let da = self.variant.coupling() * s;
        d.copy_from_slice(&[ds.re, ds.im, dd, da.re, da.im]);
    }
}

/// Integrates `b` to τ′ = `tau_prime_end`.
pub fn evolve_bloch<O>(
    b: &BlochState,
    variant: Variant,
    cfg: &IntegratorConfig,
    tau_prime_end: f64,
    mut observer: O,
) -> Result<(BlochState, Outcome)>
where
    O: FnMut(&BlochState) -> ControlFlow<()>,
{
    b.validate()?;
    let sys = BlochSystem { delta_n: b.delta_n, variant };
    let mut y = b.pack();
    let out = integrate(&sys, b.tau_prime, &mut y, tau_prime_end, cfg, |t, y| observer(&b.with_flat(t, y)))?;
    Ok((b.with_flat(out.t_final, &y), out))
}

const RESONANCE_TOL: f64 = 1e-12;
const REAL_TOL: f64 = 1e-9;

/// Bloch angle φ = atan2(S, D) of a resonant state with real S.
pub fn bloch_angle(b: &BlochState) -> Result<f64> {
    if b.delta_n.abs() > RESONANCE_TOL {
        return Err(Error::OffResonance(format!("detuning {}", b.delta_n)));
    }
    if b.s.im.abs() > REAL_TOL {
        return Err(Error::OffResonance(format!("Im S = {:.3e}", b.s.im)));
    }
    Ok(b.s.re.atan2(b.d))
}

/// φ along a trajectory, unwrapped to be continuous.
pub fn unwrapped_angles(traj: &[BlochState]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(traj.len());
    for b in traj {
        let raw = bloch_angle(b)?;
        let phi = match out.last() {
            None => raw,
            Some(prev) => raw + TAU * ((prev - raw) / TAU).round(),
        };
        out.push(phi);
    }
    Ok(out)
}

fn uniform_step(traj: &[BlochState]) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::TooShort(format!("{} samples", traj.len())));
    }
    let h = traj[1].tau_prime - traj[0].tau_prime;
    let uniform =
        traj.windows(2).all(|w| ((w[1].tau_prime - w[0].tau_prime) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    if !(h > 0.0 && uniform) {
        return Err(Error::InvalidParameter("samples are not uniformly spaced".into()));
    }
    Ok(h)
}

/// max |φ″ − κ sin φ| over the interior of a uniformly sampled resonant
/// trajectory, with φ″ from the five-point second difference.
pub fn pendulum_residual(traj: &[BlochState], kappa: f64) -> Result<f64> {
    if traj.len() < 5 {
        return Err(Error::TooShort(format!("{} samples, need 5", traj.len())));
    }
    let h = uniform_step(traj)?;
    let phi = unwrapped_angles(traj)?;
    let mut worst: f64 = 0.0;
    for i in 2..phi.len() - 2 {
        let d2 = (-phi[i - 2] + 16.0 * phi[i - 1] - 30.0 * phi[i] + 16.0 * phi[i + 1] - phi[i + 2])
            / (12.0 * h * h);
        worst = worst.max((d2 - kappa * phi[i].sin()).abs());
    }
    Ok(worst)
}

/// Pulse-train summary of a two-level trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseMetrics {
    /// |A′|² at each detected peak.
    pub peak_intensities: Vec<f64>,
    /// τ′ of each peak.
    pub peak_times: Vec<f64>,
    /// First peak |A′|² minus the initial |A′|².
    pub first_pulse_gain: f64,
    /// Mean spacing of successive peaks, if there are at least two.
    pub pulse_period: Option<f64>,
    /// Completed 2π advances of φ (zero when φ is undefined off resonance).
    pub revolutions: u32,
}

/// Detects |A′|² peaks (refined with the exact slope 2 Re(A′* dA′/dτ′)).
pub fn two_pi_pulse_metrics(traj: &[BlochState], variant: Variant) -> Result<PulseMetrics> {
    let mut tracker = PeakTracker::default();
    let mut peaks = Vec::new();
    for b in traj {
        let rate = 2.0 * (b.field_aprime.conj() * variant.coupling() * b.s).re;
        if let Some(p) = tracker.push(b.tau_prime, b.field_aprime.norm_sqr(), Some(rate)) {
            peaks.push(p);
        }
    }
    if peaks.is_empty() {
        return Err(Error::TooShort("no intensity peak in the trajectory".into()));
    }
    let revolutions = match unwrapped_angles(traj) {
        Ok(phi) => ((phi[phi.len() - 1] - phi[0]).abs() / TAU).floor() as u32,
        Err(_) => 0,
    };
    let pulse_period =
        (peaks.len() >= 2).then(|| (peaks[peaks.len() - 1].tau - peaks[0].tau) / (peaks.len() - 1) as f64);
    Ok(PulseMetrics {
        first_pulse_gain: peaks[0].value - traj[0].field_aprime.norm_sqr(),
        peak_intensities: peaks.iter().map(|p| p.value).collect(),
        peak_times: peaks.iter().map(|p| p.tau).collect(),
        pulse_period,
        revolutions,
    })
}

/// Relative deviation of |A′| from the separatrix pulse 2√κ sech(√κ(τ′ − τ′₀))
/// centred on the first peak, over `half_width` on either side of it.
pub fn separatrix_fit_error(traj: &[BlochState], kappa: f64, half_width: f64) -> Result<f64> {
    let metrics = two_pi_pulse_metrics(traj, Variant::PaperLiteral)?;
    let t0 = metrics.peak_times[0];
    let amp = 2.0 * kappa.sqrt();
    let worst = traj
        .iter()
        .filter(|b| (b.tau_prime - t0).abs() <= half_width)
        .map(|b| {
            let model = amp / (kappa.sqrt() * (b.tau_prime - t0)).cosh();
            (b.field_aprime.norm() - model).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst / amp)
}
