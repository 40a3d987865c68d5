//! Classical N-particle model.
//!
//! Each particle carries a phase θⱼ and a scaled momentum p̄ⱼ; all of them
//! couple to one complex field mode A:
//!
//! ```text
//! dθⱼ/dτ = p̄ⱼ
//! dp̄ⱼ/dτ = −(A e^{iθⱼ} + c.c.)
//! dA/dτ  = (1/N) Σⱼ e^{−iθⱼ} + i(δ/ρ̄) A
//! ```
//!
//! ρ̄ only enters through δ/ρ̄, so at resonance the trajectories are
//! universal. |A|² + ⟨p̄⟩ is conserved.

use std::f64::consts::TAU;
use std::ops::ControlFlow;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, OdeSystem, Outcome};
use crate::scaling::ScaledParams;

/// Phases, momenta and field at time `tau`. Phases are kept unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    pub tau: f64,
    pub theta: Vec<f64>,
    pub pbar: Vec<f64>,
    pub field_a: Complex64,
}

/// Initial phase placement of a cold beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Placement {
    /// θⱼ = 2πj/N; the bunching vanishes exactly for N ≥ 2.
    Equispaced,
    /// Uniform pseudo-random phases (shot noise), reproducible from `seed`.
    SeededRandom { seed: u64 },
}

/// Time derivative of a [`ClassicalState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalDerivative {
    pub dtheta: Vec<f64>,
    pub dpbar: Vec<f64>,
    pub dfield: Complex64,
}

impl ClassicalState {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::InvalidState("no particles".into()));
        }
        if self.theta.len() != self.pbar.len() {
            return Err(Error::InvalidState(format!(
                "{} phases but {} momenta",
                self.theta.len(),
                self.pbar.len()
            )));
        }
        let finite = self.theta.iter().chain(&self.pbar).all(|v| v.is_finite())
            && self.field_a.re.is_finite()
            && self.field_a.im.is_finite()
            && self.tau.is_finite();
        if !finite {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        Ok(())
    }

    /// Phases reduced to [0, 2π) for reporting.
    pub fn wrapped_theta(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.rem_euclid(TAU)).collect()
    }

    pub fn mean_pbar(&self) -> f64 {
        pairwise_sum(&self.pbar) / self.len() as f64
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.len() + 2);
        y.extend_from_slice(&self.theta);
        y.extend_from_slice(&self.pbar);
        y.push(self.field_a.re);
        y.push(self.field_a.im);
        y
    }

    fn unpack(tau: f64, y: &[f64]) -> Self {
        let n = (y.len() - 2) / 2;
        Self {
            tau,
            theta: y[..n].to_vec(),
            pbar: y[n..2 * n].to_vec(),
            field_a: Complex64::new(y[2 * n], y[2 * n + 1]),
        }
    }
}

/// Builds an unbunched cold beam (all p̄ⱼ = 0) with field seed `a0`.
pub fn init_cold_beam(n_particles: usize, a0: Complex64, placement: Placement) -> Result<ClassicalState> {
    if n_particles == 0 {
        return Err(Error::InvalidParameter("n_particles must be at least 1".into()));
    }
    let theta = match placement {
        Placement::Equispaced => (0..n_particles).map(|j| TAU * j as f64 / n_particles as f64).collect(),
        Placement::SeededRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_particles).map(|_| rng.random::<f64>() * TAU).collect()
        }
    };
    Ok(ClassicalState { tau: 0.0, theta, pbar: vec![0.0; n_particles], field_a: a0 })
}

/// Pairwise (tree) summation. The reduction order depends only on the
/// length, so results do not depend on how the work is scheduled.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// Bunching factor b = (1/N) Σⱼ e^{−iθⱼ}.
pub fn bunching(theta: &[f64]) -> Result<Complex64> {
    if theta.is_empty() {
        return Err(Error::InvalidParameter("bunching of an empty beam".into()));
    }
    let (cos, sin): (Vec<f64>, Vec<f64>) = theta
        .iter()
        .map(|t| {
            let (s, c) = t.sin_cos();
            (c, s)
        })
        .unzip();
    Ok(bunching_from(&cos, &sin))
}

fn bunching_from(cos: &[f64], sin: &[f64]) -> Complex64 {
    let n = cos.len() as f64;
    Complex64::new(pairwise_sum(cos) / n, -pairwise_sum(sin) / n)
}

/// Evaluates the classical equations of motion.
pub fn rhs_classical(s: &ClassicalState, params: &ScaledParams) -> Result<ClassicalDerivative> {
    s.validate()?;
    let sys = ClassicalSystem::new(*params, s.len());
    let y = s.pack();
    let mut d = vec![0.0; y.len()];
    sys.rhs(s.tau, &y, &mut d);
    let n = s.len();
    Ok(ClassicalDerivative {
        dtheta: d[..n].to_vec(),
        dpbar: d[n..2 * n].to_vec(),
        dfield: Complex64::new(d[2 * n], d[2 * n + 1]),
    })
}

/// |A|² + (1/N) Σⱼ p̄ⱼ.
pub fn classical_invariant(s: &ClassicalState) -> f64 {
    s.field_a.norm_sqr() + s.mean_pbar()
}

/// Roots s of the cold-beam dispersion relation s²(s − iκ) = i, where
/// κ = δ/ρ̄ is the detuning rate of the field equation. A perturbation of the
/// field grows as e^{sτ}; the largest real part is the amplitude growth rate.
///
/// Obtained by linearizing about the unbunched cold beam with the collective
/// variables b = ⟨e^{−iθ}⟩ and P = ⟨p̄ e^{−iθ}⟩:
/// dA/dτ = b + iκA, db/dτ = −iP, dP/dτ = −A.
pub fn linear_growth_rate(detuning_rate: f64) -> [Complex64; 3] {
    // s³ − iκ s² + 0·s − i = 0
    let coeffs = [Complex64::new(0.0, -detuning_rate), Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)];
    let mut roots = cubic_roots(coeffs);
    roots.sort_by(|a, b| b.re.total_cmp(&a.re));
    roots
}

/// Largest real part among [`linear_growth_rate`] roots.
pub fn max_growth_rate(detuning_rate: f64) -> f64 {
    linear_growth_rate(detuning_rate)[0].re
}

/// Roots of the monic cubic z³ + c[0] z² + c[1] z + c[2] (Durand-Kerner
/// iteration followed by Newton polishing).
fn cubic_roots(c: [Complex64; 3]) -> [Complex64; 3] {
    let p = |z: Complex64| ((z + c[0]) * z + c[1]) * z + c[2];
    let dp = |z: Complex64| (3.0 * z + 2.0 * c[0]) * z + c[1];
    let seed = Complex64::new(0.4, 0.9);
    let mut r = [seed, seed * seed, seed * seed * seed];
    for _ in 0..500 {
        let prev = r;
        for i in 0..3 {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    den *= r[i] - r[j];
                }
            }
            r[i] -= p(r[i]) / den;
        }
        let change = (0..3).map(|i| (r[i] - prev[i]).norm()).fold(0.0, f64::max);
        if change < 1e-15 {
            break;
        }
    }
    for z in &mut r {
        for _ in 0..3 {
            let d = dp(*z);
            if d.norm() > 0.0 {
                *z -= p(*z) / d;
            }
        }
    }
    r
}

/// Flat-vector form of the classical equations for the integrators.
/// Layout: `[θ₀..θ_{N−1}, p̄₀..p̄_{N−1}, Re A, Im A]`.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalSystem {
    params: ScaledParams,
    n: usize,
}

impl ClassicalSystem {
    pub fn new(params: ScaledParams, n: usize) -> Self {
        Self { params, n }
    }
}

impl OdeSystem for ClassicalSystem {
    fn dim(&self) -> usize {
        2 * self.n + 2
    }

    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
        let n = self.n;
        let a = Complex64::new(y[2 * n], y[2 * n + 1]);
        let mut cos = vec![0.0; n];
        let mut sin = vec![0.0; n];
        for j in 0..n {
            let (s, c) = y[j].sin_cos();
            cos[j] = c;
            sin[j] = s;
            d[j] = y[n + j];
            // −(A e^{iθ} + c.c.) = −2 Re(A e^{iθ})
            d[n + j] = -2.0 * (a.re * c - a.im * s);
        }
        let b = bunching_from(&cos, &sin);
        let da = b + Complex64::new(0.0, self.params.detuning_rate()) * a;
        d[2 * n] = da.re;
        d[2 * n + 1] = da.im;
    }
}

/// Integrates the classical model from `state` to `tau_end`; `observer` sees
/// every sample and may stop the run. Returns the final state.
pub fn evolve_classical<O>(
    state: &ClassicalState,
    params: &ScaledParams,
    cfg: &IntegratorConfig,
    tau_end: f64,
    mut observer: O,
) -> Result<(ClassicalState, Outcome)>
where
    O: FnMut(&ClassicalState) -> ControlFlow<()>,
{
    state.validate()?;
    let sys = ClassicalSystem::new(*params, state.len());
    let mut y = state.pack();
    let out =
        integrate(&sys, state.tau, &mut y, tau_end, cfg, |t, y| observer(&ClassicalState::unpack(t, y)))?;
    Ok((ClassicalState::unpack(out.t_final, &y), out))
}

/// d|A|²/dτ = 2 Re(A* b).
pub fn intensity_rate(s: &ClassicalState) -> f64 {
    let b = bunching(&s.theta).unwrap_or_default();
    2.0 * (s.field_a.conj() * b).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn params(rho: f64, delta: f64) -> ScaledParams {
        ScaledParams::new(rho, delta).unwrap()
    }

    #[test]
    fn cold_beam_layouts() {
        let s = init_cold_beam(4, Complex64::default(), Placement::Equispaced).unwrap();
        for (t, e) in s.theta.iter().zip([0.0, PI / 2.0, PI, 3.0 * PI / 2.0]) {
            assert_relative_eq!(*t, e, epsilon = 1e-15);
        }
        assert!(bunching(&s.theta).unwrap().norm() < 1e-15);

        let s = init_cold_beam(1, Complex64::new(1e-4, 0.0), Placement::Equispaced).unwrap();
        assert_eq!(s.theta, vec![0.0]);
        assert_relative_eq!(bunching(&s.theta).unwrap().norm(), 1.0);

        let s = init_cold_beam(10_000, Complex64::new(1e-4, 0.0), Placement::Equispaced).unwrap();
        assert!(bunching(&s.theta).unwrap().norm() < 1e-12);
        assert_eq!(s.mean_pbar(), 0.0);

        assert!(init_cold_beam(0, Complex64::default(), Placement::Equispaced).is_err());
    }

    #[test]
    fn seeded_placement_is_reproducible() {
        let a = init_cold_beam(100, Complex64::default(), Placement::SeededRandom { seed: 7 }).unwrap();
        let b = init_cold_beam(100, Complex64::default(), Placement::SeededRandom { seed: 7 }).unwrap();
        let c = init_cold_beam(100, Complex64::default(), Placement::SeededRandom { seed: 8 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.theta.iter().all(|t| (0.0..TAU).contains(t)));
    }

    #[test]
    fn bunching_examples() {
        let b = bunching(&[0.3; 5]).unwrap();
        assert_relative_eq!(b.re, 0.3f64.cos(), epsilon = 1e-15);
        assert_relative_eq!(b.im, -0.3f64.sin(), epsilon = 1e-15);
        // θ = {0, π/2}: (1 + e^{−iπ/2})/2 = (1 − i)/2
        let b = bunching(&[0.0, PI / 2.0]).unwrap();
        assert_relative_eq!(b.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(b.im, -0.5, epsilon = 1e-15);
        assert_relative_eq!(b.norm(), FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(bunching(&[]).is_err());
    }

    #[test]
    fn rhs_without_field_is_free_streaming() {
        let s = ClassicalState {
            tau: 0.0,
            theta: vec![0.1, 2.0, 4.0],
            pbar: vec![0.5, -1.0, 0.25],
            field_a: Complex64::default(),
        };
        let d = rhs_classical(&s, &params(3.0, 1.0)).unwrap();
        assert_eq!(d.dtheta, s.pbar);
        assert!(d.dpbar.iter().all(|v| *v == 0.0));
        let b = bunching(&s.theta).unwrap();
        assert_relative_eq!(d.dfield.re, b.re, epsilon = 1e-15);
        assert_relative_eq!(d.dfield.im, b.im, epsilon = 1e-15);
    }

    #[test]
    fn rhs_single_particle() {
        let a = 0.3;
        let s =
            ClassicalState { tau: 0.0, theta: vec![0.0], pbar: vec![0.0], field_a: Complex64::new(a, 0.0) };
        let p = params(2.0, 0.7);
        let d = rhs_classical(&s, &p).unwrap();
        assert_relative_eq!(d.dpbar[0], -2.0 * a);
        // dA/dτ = 1 + iδA/ρ̄
        assert_relative_eq!(d.dfield.re, 1.0);
        assert_relative_eq!(d.dfield.im, 0.7 * a / 2.0);
    }

    #[test]
    fn rhs_equispaced_beam_force_is_cosine() {
        let s = init_cold_beam(64, Complex64::new(1e-4, 0.0), Placement::Equispaced).unwrap();
        let d = rhs_classical(&s, &params(1.0, 0.0)).unwrap();
        for (t, f) in s.theta.iter().zip(&d.dpbar) {
            assert_relative_eq!(*f, -2e-4 * t.cos(), epsilon = 1e-18);
        }
        assert!(d.dfield.norm() < 1e-16);
    }

    #[test]
    fn resonant_cubic_roots() {
        let r = linear_growth_rate(0.0);
        for z in r {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-14);
            assert!((z * z * z - Complex64::i()).norm() < 1e-14);
        }
        assert_relative_eq!(r[0].re, 3f64.sqrt() / 2.0, epsilon = 1e-14);
        assert_relative_eq!(r[0].im, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn growth_vanishes_far_from_resonance() {
        let near = max_growth_rate(0.0);
        for k in [10.0, 100.0, -100.0, 1e4] {
            let g = max_growth_rate(k);
            assert!(g < near, "kappa {k}: {g}");
        }
        assert!(max_growth_rate(1e4) < 1e-6);
        assert!(max_growth_rate(-1e4) < 0.02);
    }

    #[test]
    fn invariant_of_cold_beam_is_seed_intensity() {
        let s = init_cold_beam(16, Complex64::new(3e-3, -4e-3), Placement::Equispaced).unwrap();
        assert_relative_eq!(classical_invariant(&s), 2.5e-5, max_relative = 1e-12);
    }

    #[test]
    fn invariant_is_conserved_with_and_without_detuning() {
        for delta in [0.0, 2.0] {
            let s = init_cold_beam(256, Complex64::new(1e-2, 0.0), Placement::Equispaced).unwrap();
            let p = params(1.0, delta);
            let cfg = IntegratorConfig::rk45(1e-11, 1e-13, 0.5);
            let c0 = classical_invariant(&s);
            let mut worst: f64 = 0.0;
            evolve_classical(&s, &p, &cfg, 12.0, |st| {
                worst = worst.max((classical_invariant(st) - c0).abs());
                ControlFlow::Continue(())
            })
            .unwrap();
            assert!(worst < 1e-9, "delta {delta}: drift {worst}");
        }
    }
}
