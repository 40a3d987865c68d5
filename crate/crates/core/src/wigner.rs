//! Wigner quasi-probability on a periodic angle grid × half-integer momentum
//! ladder.
//!
//! For a periodic wavefunction with integer momenta, the Wigner function
//! lives on half-integer momentum levels s (p̄ = 2s/ρ̄):
//!
//! ```text
//! W_s(θ) = (1/2π) Σ_{m+n=2s} c̃*ₘ c̃ₙ e^{i(n−m)θ}
//! ```
//!
//! Each row holds the density in θ of one momentum cell, so Σ_s W_s = |ψ|²
//! and Σ_s Σ_j W_s(θⱼ) 2π/M = 1. The exact evolution shifts rows by ±1/2:
//!
//! ```text
//! ∂W_s/∂τ = −p̄_s ∂W_s/∂θ + (ρ̄/2) F(θ) [W_{s+½} − W_{s−½}],   F = A e^{iθ} + c.c.
//! dA/dτ   = Σ_s ∫ W_s e^{−iθ} dθ + i(δ/ρ̄) A
//! ```
//!
//! Replacing the bracket by (2/ρ̄) ∂W/∂p̄ gives the Vlasov equation.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::ops::ControlFlow;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, OdeSystem, Outcome};
use crate::quantum::{lab_field, MomentumWavefunction};
use crate::scaling::ScaledParams;

/// W(θⱼ, s) stored row-major: one row per half-integer level s, `n_theta`
/// columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    n_theta: usize,
    /// 2s of the first row.
    twice_s_min: i64,
    values: Vec<f64>,
    /// Spacing of adjacent rows in p̄ (1/ρ̄ for the run that built it).
    pub pbar_spacing: f64,
    pub tau: f64,
    /// Lab-frame field A.
    pub field_a: Complex64,
}

/// θ-density and per-row momentum weights of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginals {
    /// Σ_s W_s(θⱼ), one entry per grid angle.
    pub theta_density: Vec<f64>,
    /// Σⱼ W_s(θⱼ) 2π/M, one entry per row.
    pub momentum_distribution: Vec<f64>,
}

/// Momentum-derivative stencil of the Vlasov equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumDerivative {
    /// Fourth-order centred differences; rows beyond the grid read 0.
    #[default]
    Centered4,
    /// FFT along the zero-padded momentum axis.
    Spectral,
}

/// Which phase-space equation drives the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "dynamics", rename_all = "kebab-case")]
pub enum PhaseSpaceDynamics {
    /// Exact row-shift equation.
    FiniteDifference,
    /// Classical limit with a continuous momentum derivative.
    Vlasov { derivative: MomentumDerivative },
}

/// Time derivative of a [`WignerGrid`], same layout as its values.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerDerivative {
    pub dvalues: Vec<f64>,
    pub dfield: Complex64,
}

impl WignerGrid {
    /// Grid of `n_rows` levels starting at 2s = `twice_s_min`, all zero.
    pub fn zeros(
        twice_s_min: i64,
        n_rows: usize,
        n_theta: usize,
        pbar_spacing: f64,
        field_a: Complex64,
    ) -> Result<Self> {
        if n_rows == 0 || n_theta == 0 {
            return Err(Error::InvalidParameter("empty Wigner grid".into()));
        }
        if !(pbar_spacing.is_finite() && pbar_spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("momentum spacing {pbar_spacing}")));
        }
        Ok(Self {
            n_theta,
            twice_s_min,
            values: vec![0.0; n_rows * n_theta],
            pbar_spacing,
            tau: 0.0,
            field_a,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_theta
    }

    pub fn twice_s_min(&self) -> i64 {
        self.twice_s_min
    }

    /// Momentum level s of `row` (a multiple of 1/2).
    pub fn s_level(&self, row: usize) -> f64 {
        0.5 * (self.twice_s_min + row as i64) as f64
    }

    /// p̄ of `row`.
    pub fn pbar(&self, row: usize) -> f64 {
        (self.twice_s_min + row as i64) as f64 * self.pbar_spacing
    }

    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_theta..(row + 1) * self.n_theta]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let m = self.n_theta;
        &mut self.values[row * m..(row + 1) * m]
    }

    pub fn value(&self, row: usize, j: usize) -> f64 {
        self.values[row * self.n_theta + j]
    }

    fn cell(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || !self.values.len().is_multiple_of(self.n_theta) {
            return Err(Error::InvalidState("grid values do not fill whole rows".into()));
        }
        let finite = self.values.iter().all(|v| v.is_finite())
            && self.field_a.re.is_finite()
            && self.field_a.im.is_finite();
        if !finite {
            return Err(Error::InvalidState("non-finite Wigner value".into()));
        }
        Ok(())
    }

    pub fn marginals(&self) -> Marginals {
        let m = self.n_theta;
        let mut theta_density = vec![0.0; m];
        let mut momentum_distribution = Vec::with_capacity(self.n_rows());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            for (acc, v) in theta_density.iter_mut().zip(row) {
                *acc += v;
            }
            momentum_distribution.push(row.iter().sum::<f64>() * self.cell());
        }
        Marginals { theta_density, momentum_distribution }
    }

    /// Σ W · 2π/M.
    pub fn norm(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    /// ⟨p̄⟩ under the momentum marginal.
    pub fn mean_pbar(&self) -> f64 {
        self.marginals().momentum_distribution.iter().enumerate().map(|(r, w)| self.pbar(r) * w).sum()
    }

    /// Σ_s Σⱼ W_s(θⱼ) e^{−iθⱼ} 2π/M, the matter term of the field equation.
    pub fn field_source(&self) -> Complex64 {
        let m = self.n_theta;
        let mut acc = Complex64::default();
        for r in 0..self.n_rows() {
            let row = self.row(r);
            acc += (0..m).map(|j| row[j] * Complex64::from_polar(1.0, -self.theta(j))).sum::<Complex64>();
        }
        acc * self.cell()
    }

    /// |A|² + ⟨p̄⟩.
    pub fn invariant(&self) -> f64 {
        self.field_a.norm_sqr() + self.mean_pbar()
    }

    /// Number of rows whose θ-integral exceeds `threshold` in magnitude.
    pub fn support_rows(&self, threshold: f64) -> usize {
        self.marginals().momentum_distribution.iter().filter(|w| w.abs() > threshold).count()
    }
}

/// Marginals of `w`.
pub fn marginals(w: &WignerGrid) -> Marginals {
    w.marginals()
}

fn unit_roots(m: usize) -> Vec<Complex64> {
    (0..m).map(|k| Complex64::from_polar(1.0, TAU * k as f64 / m as f64)).collect()
}

/// Smallest M ≥ `min` whose only prime factors are 2, 3 and 5; FFTs of such
/// lengths are several times faster than of nearby primes.
pub fn fft_friendly_len(min: usize) -> usize {
    (min.max(1)..)
        .find(|&n| {
            let mut k = n;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .unwrap()
}

/// Builds the Wigner grid of `s` in the lab frame on M angles.
/// Requires M ≥ 4(n_max − n_min) + 1.
pub fn wigner_from_state(s: &MomentumWavefunction, params: &ScaledParams, m: usize) -> Result<WignerGrid> {
    s.validate()?;
    let ladder = s.ladder;
    let required = 4 * ladder.span() + 1;
    if m < required {
        return Err(Error::GridTooSmall { required, given: m });
    }
    let amps = s.lab_amplitudes(params);
    let mut grid = WignerGrid::zeros(
        2 * ladder.n_min(),
        2 * amps.len() - 1,
        m,
        1.0 / params.rho_bar,
        lab_field(s.field_abar, s.tau, params),
    )?;
    grid.tau = s.tau;
    let raw = bilinear_rows(&amps, &amps, m);
    let imag_residue = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    log::debug!("wigner construction imaginary residue {imag_residue:.3e}");
    for (out, z) in grid.values.iter_mut().zip(&raw) {
        *out = z.re;
    }
    Ok(grid)
}

/// (1/2π) Σ_{a+b=r} x*_a y_b e^{i(b−a)θⱼ} for every row r = 0..2L−2, row-major.
fn bilinear_rows(x: &[Complex64], y: &[Complex64], m: usize) -> Vec<Complex64> {
    let l = x.len();
    let roots = unit_roots(m);
    let mut out = Vec::with_capacity((2 * l - 1) * m);
    for r in 0..2 * l - 1 {
        let lo = r.saturating_sub(l - 1);
        let hi = r.min(l - 1);
        let pairs: Vec<(Complex64, i64)> =
            (lo..=hi).map(|a| (x[a].conj() * y[r - a], (r - a) as i64 - a as i64)).collect();
        for j in 0..m {
            let w: Complex64 = pairs
                .iter()
                .map(|(coef, k)| coef * roots[(k * j as i64).rem_euclid(m as i64) as usize])
                .sum();
            out.push(w / (2.0 * PI));
        }
    }
    out
}

fn check_spacing(w: &WignerGrid, params: &ScaledParams) -> Result<()> {
    let expected = 1.0 / params.rho_bar;
    if (w.pbar_spacing - expected).abs() > 1e-12 * expected {
        return Err(Error::SpacingMismatch { grid: w.pbar_spacing, expected });
    }
    Ok(())
}

/// Evaluates the exact finite-difference phase-space equation.
pub fn rhs_wigner(w: &WignerGrid, params: &ScaledParams) -> Result<WignerDerivative> {
    rhs_with(w, params, PhaseSpaceDynamics::FiniteDifference)
}

/// Evaluates the Vlasov equation with the given momentum derivative.
pub fn rhs_vlasov(
    w: &WignerGrid,
    params: &ScaledParams,
    derivative: MomentumDerivative,
) -> Result<WignerDerivative> {
    rhs_with(w, params, PhaseSpaceDynamics::Vlasov { derivative })
}

fn rhs_with(w: &WignerGrid, params: &ScaledParams, dynamics: PhaseSpaceDynamics) -> Result<WignerDerivative> {
    w.validate()?;
    let sys = WignerSystem::new(w, params, dynamics)?;
    let y = sys.pack(w);
    let mut d = vec![0.0; y.len()];
    sys.rhs(w.tau, &y, &mut d);
    let n = w.values.len();
    Ok(WignerDerivative { dvalues: d[..n].to_vec(), dfield: Complex64::new(d[n], d[n + 1]) })
}

/// (ρ̄/2)[W_{s+½} − W_{s−½}]: the momentum-shift bracket of the exact
/// equation scaled to approximate ∂W/∂p̄ (rows beyond the grid read 0).
pub fn shift_difference(w: &WignerGrid) -> Vec<f64> {
    let (rows, m) = (w.n_rows(), w.n_theta);
    let scale = 0.5 / w.pbar_spacing;
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        for j in 0..m {
            let up = if r + 1 < rows { w.value(r + 1, j) } else { 0.0 };
            let down = if r > 0 { w.value(r - 1, j) } else { 0.0 };
            out[r * m + j] = scale * (up - down);
        }
    }
    out
}

/// ∂W/∂p̄ by the chosen stencil, row-major like the grid values.
pub fn momentum_derivative(w: &WignerGrid, kind: MomentumDerivative) -> Result<Vec<f64>> {
    let mut out = vec![0.0; w.values.len()];
    let ops = MomentumOps::new(w.n_rows(), w.n_theta, w.pbar_spacing, kind)?;
    ops.apply(&w.values, &mut out);
    Ok(out)
}

struct MomentumOps {
    rows: usize,
    m: usize,
    h: f64,
    kind: MomentumDerivative,
    padded: usize,
    fwd: Option<Arc<dyn Fft<f64>>>,
    inv: Option<Arc<dyn Fft<f64>>>,
}

impl MomentumOps {
    fn new(rows: usize, m: usize, h: f64, kind: MomentumDerivative) -> Result<Self> {
        let (padded, fwd, inv) = match kind {
            MomentumDerivative::Centered4 => {
                if rows < 5 {
                    return Err(Error::InvalidParameter(format!(
                        "fourth-order momentum stencil needs 5 rows, grid has {rows}"
                    )));
                }
                (0, None, None)
            }
            MomentumDerivative::Spectral => {
                let p = 2 * rows;
                let mut planner = FftPlanner::new();
                (p, Some(planner.plan_fft_forward(p)), Some(planner.plan_fft_inverse(p)))
            }
        };
        Ok(Self { rows, m, h, kind, padded, fwd, inv })
    }

    fn apply(&self, w: &[f64], out: &mut [f64]) {
        let (rows, m) = (self.rows, self.m);
        match self.kind {
            MomentumDerivative::Centered4 => {
                // rows beyond the grid read 0, which keeps the operator
                // skew-symmetric; one-sided closures excite growing edge modes
                let c = 1.0 / (12.0 * self.h);
                let f = |r: usize, k: isize| {
                    let i = r as isize + k;
                    if (0..rows as isize).contains(&i) {
                        &w[i as usize * m..(i as usize + 1) * m]
                    } else {
                        &[][..]
                    }
                };
                for r in 0..rows {
                    let out_row = &mut out[r * m..(r + 1) * m];
                    out_row.fill(0.0);
                    for (k, weight) in [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)] {
                        for (o, v) in out_row.iter_mut().zip(f(r, k)) {
                            *o += c * weight * v;
                        }
                    }
                }
            }
            MomentumDerivative::Spectral => {
                let p = self.padded;
                let (fwd, inv) = (self.fwd.as_ref().unwrap(), self.inv.as_ref().unwrap());
                let mut buf = vec![Complex64::default(); p * m];
                for j in 0..m {
                    for r in 0..rows {
                        buf[j * p + r] = Complex64::new(w[r * m + j], 0.0);
                    }
                }
                fwd.process(&mut buf);
                let dk = TAU / (p as f64 * self.h);
                for col in buf.chunks_mut(p) {
                    for (i, z) in col.iter_mut().enumerate() {
                        let k = wavenumber(i, p);
                        *z *= Complex64::new(0.0, k * dk);
                    }
                    // no derivative for the unpaired Nyquist mode
                    col[p / 2] = Complex64::default();
                }
                inv.process(&mut buf);
                let norm = 1.0 / p as f64;
                for j in 0..m {
                    for r in 0..rows {
                        out[r * m + j] = buf[j * p + r].re * norm;
                    }
                }
            }
        }
    }
}

fn wavenumber(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Flat-vector form for the integrators. Layout: grid values row-major,
/// then Re A, Im A.
pub struct WignerSystem {
    rows: usize,
    m: usize,
    twice_s_min: i64,
    pbar_spacing: f64,
    params: ScaledParams,
    dynamics: PhaseSpaceDynamics,
    cos: Vec<f64>,
    sin: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    momentum: Option<MomentumOps>,
    scratch: RefCell<(Vec<Complex64>, Vec<f64>)>,
}

impl WignerSystem {
    pub fn new(w: &WignerGrid, params: &ScaledParams, dynamics: PhaseSpaceDynamics) -> Result<Self> {
        w.validate()?;
        check_spacing(w, params)?;
        let (rows, m) = (w.n_rows(), w.n_theta);
        let momentum = match dynamics {
            PhaseSpaceDynamics::FiniteDifference => None,
            PhaseSpaceDynamics::Vlasov { derivative } => {
                let support = w.support_rows(1e-12);
                if support < 8 {
                    log::warn!(
                        "Vlasov momentum derivative on a distribution spanning {support} rows; \
                         expect large stencil error"
                    );
                }
                Some(MomentumOps::new(rows, m, w.pbar_spacing, derivative)?)
            }
        };
        let mut planner = FftPlanner::new();
        let (sin, cos) = (0..m).map(|j| w.theta(j).sin_cos()).unzip();
        Ok(Self {
            rows,
            m,
            twice_s_min: w.twice_s_min,
            pbar_spacing: w.pbar_spacing,
            params: *params,
            dynamics,
            cos,
            sin,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
            momentum,
            scratch: RefCell::new((vec![Complex64::default(); rows * m], vec![0.0; rows * m])),
        })
    }

    fn pack(&self, w: &WignerGrid) -> Vec<f64> {
        let mut y = Vec::with_capacity(w.values.len() + 2);
        y.extend_from_slice(&w.values);
        y.push(w.field_a.re);
        y.push(w.field_a.im);
        y
    }

    fn unpack(&self, tau: f64, y: &[f64]) -> WignerGrid {
        let n = self.rows * self.m;
        WignerGrid {
            n_theta: self.m,
            twice_s_min: self.twice_s_min,
            values: y[..n].to_vec(),
            pbar_spacing: self.pbar_spacing,
            tau,
            field_a: Complex64::new(y[n], y[n + 1]),
        }
    }
}

impl OdeSystem for WignerSystem {
    fn dim(&self) -> usize {
        self.rows * self.m + 2
    }

    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
        let (rows, m) = (self.rows, self.m);
        let n = rows * m;
        let w = &y[..n];
        let a = Complex64::new(y[n], y[n + 1]);
        let mut scratch = self.scratch.borrow_mut();
        let (spec, dp) = &mut *scratch;

        // free streaming: −p̄ ∂W/∂θ, spectral in θ. The derivative maps real
        // rows to real rows, so rows 2q and 2q+1 share one complex transform.
        let pairs = rows.div_ceil(2);
        for q in 0..pairs {
            let lo = &w[2 * q * m..(2 * q + 1) * m];
            let hi = if 2 * q + 1 < rows { Some(&w[(2 * q + 1) * m..(2 * q + 2) * m]) } else { None };
            for (j, z) in spec[q * m..(q + 1) * m].iter_mut().enumerate() {
                *z = Complex64::new(lo[j], hi.map_or(0.0, |h| h[j]));
            }
        }
        let spec = &mut spec[..pairs * m];
        self.fwd.process(spec);
        for row in spec.chunks_mut(m) {
            for (i, z) in row.iter_mut().enumerate() {
                *z *= Complex64::new(0.0, wavenumber(i, m));
            }
            if m % 2 == 0 {
                row[m / 2] = Complex64::default();
            }
        }
        self.inv.process(spec);
        let inv_m = 1.0 / m as f64;
        for r in 0..rows {
            let pbar = (self.twice_s_min + r as i64) as f64 * self.pbar_spacing;
            let packed = &spec[(r / 2) * m..(r / 2 + 1) * m];
            for j in 0..m {
                let v = if r % 2 == 0 { packed[j].re } else { packed[j].im };
                d[r * m + j] = -pbar * v * inv_m;
            }
        }

        // momentum kick
        let force: Vec<f64> = (0..m).map(|j| 2.0 * (a.re * self.cos[j] - a.im * self.sin[j])).collect();
        match &self.momentum {
            None => {
                let half = 0.5 * self.params.rho_bar;
                for r in 0..rows {
                    for j in 0..m {
                        let up = if r + 1 < rows { w[(r + 1) * m + j] } else { 0.0 };
                        let down = if r > 0 { w[(r - 1) * m + j] } else { 0.0 };
                        d[r * m + j] += half * force[j] * (up - down);
                    }
                }
            }
            Some(ops) => {
                ops.apply(w, dp);
                for r in 0..rows {
                    for j in 0..m {
                        d[r * m + j] += force[j] * dp[r * m + j];
                    }
                }
            }
        }

        // field: Σ_s Σ_j W e^{−iθ} 2π/M, rows summed in fixed order
        let mut re = 0.0;
        let mut im = 0.0;
        for r in 0..rows {
            let row = &w[r * m..(r + 1) * m];
            let (mut rr, mut ri) = (0.0, 0.0);
            for ((w, c), s) in row.iter().zip(&self.cos).zip(&self.sin) {
                rr += w * c;
                ri -= w * s;
            }
            re += rr;
            im += ri;
        }
        let cell = TAU / m as f64;
        let da = Complex64::new(re * cell, im * cell) + Complex64::new(0.0, self.params.detuning_rate()) * a;
        d[n] = da.re;
        d[n + 1] = da.im;
    }
}

impl WignerSystem {
    pub fn dynamics(&self) -> PhaseSpaceDynamics {
        self.dynamics
    }
}

/// Integrates a grid from `w` to `tau_end`; `observer` sees every sample.
pub fn evolve_wigner<O>(
    w: &WignerGrid,
    params: &ScaledParams,
    dynamics: PhaseSpaceDynamics,
    cfg: &IntegratorConfig,
    tau_end: f64,
    mut observer: O,
) -> Result<(WignerGrid, Outcome)>
where
    O: FnMut(&WignerGrid) -> ControlFlow<()>,
{
    let sys = WignerSystem::new(w, params, dynamics)?;
    let mut y = sys.pack(w);
    let out = integrate(&sys, w.tau, &mut y, tau_end, cfg, |t, y| observer(&sys.unpack(t, y)))?;
    Ok((sys.unpack(out.t_final, &y), out))
}
