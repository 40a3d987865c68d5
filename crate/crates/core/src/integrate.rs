//! Explicit Runge-Kutta integrators over flat real state vectors.
//!
//! Every model packs its state (complex amplitudes included) into a `[f64]`
//! buffer, so one fixed-step RK4 and one adaptive Dormand-Prince 5(4) driver
//! serve all of them. The adaptive driver controls the max-norm of the scaled
//! local error over the *whole* vector, field amplitude included, and emits
//! samples on a uniform time grid through its continuous extension.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest step the adaptive driver accepts before giving up.
pub const DT_MIN: f64 = 1e-12;

/// Right-hand side of an autonomous or time-dependent ODE `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

#[derive(Debug, Clone, Error)]
pub enum IntegrationError {
    #[error("step size underflow ({h:.3e} < {DT_MIN:.0e}) at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    /// The last accepted state is kept for post-mortem inspection.
    #[error("non-finite state encountered after t = {t}")]
    NonFinite { t: f64, last_good: Vec<f64> },
    #[error("maximum number of steps ({max_steps}) reached at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("invalid integrator configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with constant step.
    Rk4Fixed { dt: f64 },
    /// Dormand-Prince 5(4) with embedded error control. Samples are emitted
    /// every `sample_dt` via dense output.
    Rk45Adaptive { rtol: f64, atol: f64, sample_dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    pub max_steps: usize,
    /// Fixed-step only: emit a sample every `output_stride` steps.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, output_stride: usize) -> Self {
        Self { method: Method::Rk4Fixed { dt }, max_steps: 50_000_000, output_stride }
    }

    pub fn rk45(rtol: f64, atol: f64, sample_dt: f64) -> Self {
        Self {
            method: Method::Rk45Adaptive { rtol, atol, sample_dt },
            max_steps: 50_000_000,
            output_stride: 1,
        }
    }

    /// Spacing between emitted samples.
    pub fn sample_interval(&self) -> f64 {
        match self.method {
            Method::Rk4Fixed { dt } => dt * self.output_stride as f64,
            Method::Rk45Adaptive { sample_dt, .. } => sample_dt,
        }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |m: &str| Err(IntegrationError::Config(m.to_string()));
        match self.method {
            Method::Rk4Fixed { dt } => {
                if !(dt.is_finite() && dt > 0.0) {
                    return bad("dt must be positive");
                }
                if self.output_stride == 0 {
                    return bad("output_stride must be at least 1");
                }
            }
            Method::Rk45Adaptive { rtol, atol, sample_dt } => {
                if !(rtol > 0.0 && atol > 0.0 && rtol.is_finite() && atol.is_finite()) {
                    return bad("tolerances must be positive");
                }
                if !(sample_dt.is_finite() && sample_dt > 0.0) {
                    return bad("sample_dt must be positive");
                }
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }
}

/// Summary of a finished integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub t_final: f64,
    pub steps: usize,
    pub rejected: usize,
    /// The observer asked to stop before `t_end`.
    pub stopped: bool,
}

/// Advances `y` by one classical RK4 step of size `dt`.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &mut [f64], dt: f64) {
    let mut ws = Rk4Workspace::new(y.len());
    ws.step(sys, t, y, dt);
}

struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &mut [f64], dt: f64) {
        let h2 = 0.5 * dt;
        sys.rhs(t, y, &mut self.k1);
        for ((t_, y_), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *t_ = y_ + h2 * k;
        }
        sys.rhs(t + h2, &self.tmp, &mut self.k2);
        for ((t_, y_), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *t_ = y_ + h2 * k;
        }
        sys.rhs(t + h2, &self.tmp, &mut self.k3);
        for ((t_, y_), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *t_ = y_ + dt * k;
        }
        sys.rhs(t + dt, &self.tmp, &mut self.k4);
        let h6 = dt / 6.0;
        for (i, y_) in y.iter_mut().enumerate() {
            *y_ += h6 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// Integrates from `t0` to `t_end`, calling `observer` at `t0`, at every
/// sample time and at `t_end`. The observer may stop the run early by
/// returning [`ControlFlow::Break`].
///
/// `y` holds the initial state on entry and the final state on return.
pub fn integrate<S, O>(
    sys: &S,
    t0: f64,
    y: &mut [f64],
    t_end: f64,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<Outcome, IntegrationError>
where
    S: OdeSystem + ?Sized,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    cfg.validate()?;
    if y.len() != sys.dim() {
        return Err(IntegrationError::Config(format!(
            "state has {} components, system expects {}",
            y.len(),
            sys.dim()
        )));
    }
    // also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(t_end >= t0) {
        return Err(IntegrationError::Config(format!("t_end ({t_end}) precedes t0 ({t0})")));
    }
    if observer(t0, y).is_break() || t_end == t0 {
        return Ok(Outcome { t_final: t0, steps: 0, rejected: 0, stopped: t_end != t0 });
    }
    match cfg.method {
        Method::Rk4Fixed { dt } => fixed(sys, t0, y, t_end, dt, cfg, &mut observer),
        Method::Rk45Adaptive { rtol, atol, sample_dt } => {
            adaptive(sys, t0, y, t_end, rtol, atol, sample_dt, cfg.max_steps, &mut observer)
        }
    }
}

fn all_finite(y: &[f64]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn fixed<S, O>(
    sys: &S,
    t0: f64,
    y: &mut [f64],
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
    observer: &mut O,
) -> Result<Outcome, IntegrationError>
where
    S: OdeSystem + ?Sized,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    let mut ws = Rk4Workspace::new(y.len());
    let span = t_end - t0;
    // Land exactly on t_end; a trailing sliver shorter than 1e-9 dt is absorbed.
    let full = (span / dt * (1.0 + 1e-12)).floor() as usize;
    let remainder = span - full as f64 * dt;
    let n_steps = if remainder > 1e-9 * dt { full + 1 } else { full };
    if n_steps > cfg.max_steps {
        return Err(IntegrationError::MaxSteps { t: t0, max_steps: cfg.max_steps });
    }
    let mut last_good = y.to_vec();
    for i in 0..n_steps {
        // Times are computed from the index so that sample times do not
        // accumulate rounding error.
        let t = t0 + i as f64 * dt;
        let is_last = i + 1 == n_steps;
        let h = if is_last { t_end - t } else { dt };
        ws.step(sys, t, y, h);
        let t_new = if is_last { t_end } else { t0 + (i + 1) as f64 * dt };
        if !all_finite(y) {
            return Err(IntegrationError::NonFinite { t, last_good });
        }
        last_good.copy_from_slice(y);
        if (is_last || (i + 1) % cfg.output_stride == 0) && observer(t_new, y).is_break() {
            return Ok(Outcome { t_final: t_new, steps: i + 1, rejected: 0, stopped: !is_last });
        }
    }
    Ok(Outcome { t_final: t_end, steps: n_steps, rejected: 0, stopped: false })
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer, Nørsett & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[allow(clippy::too_many_arguments)]
fn adaptive<S, O>(
    sys: &S,
    t0: f64,
    y: &mut [f64],
    t_end: f64,
    rtol: f64,
    atol: f64,
    sample_dt: f64,
    max_steps: usize,
    observer: &mut O,
) -> Result<Outcome, IntegrationError>
where
    S: OdeSystem + ?Sized,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    let n = y.len();
    let mut k = [(); 7].map(|_| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut cont = [(); 5].map(|_| vec![0.0; n]);
    let mut dense = vec![0.0; n];

    let mut t = t0;
    sys.rhs(t, y, &mut k[0]);
    let mut h = initial_step(y, &k[0], rtol, atol, t_end - t0).min(sample_dt);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut next_sample = 1usize;
    let sample_time = |i: usize| (t0 + i as f64 * sample_dt).min(t_end);

    while t < t_end {
        if steps + rejected >= max_steps {
            return Err(IntegrationError::MaxSteps { t, max_steps });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h < DT_MIN && t + h < t_end {
            return Err(IntegrationError::StepUnderflow { t, h });
        }

        let stage = |tmp: &mut Vec<f64>, coeffs: &[(f64, usize)], k: &[Vec<f64>; 7], y: &[f64]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(a, j) in coeffs {
                    acc += h * a * k[j][i];
                }
                tmp[i] = acc;
            }
        };
        stage(&mut tmp, &[(A21, 0)], &k, y);
        sys.rhs(t + C2 * h, &tmp, &mut k[1]);
        stage(&mut tmp, &[(A31, 0), (A32, 1)], &k, y);
        sys.rhs(t + C3 * h, &tmp, &mut k[2]);
        stage(&mut tmp, &[(A41, 0), (A42, 1), (A43, 2)], &k, y);
        sys.rhs(t + C4 * h, &tmp, &mut k[3]);
        stage(&mut tmp, &[(A51, 0), (A52, 1), (A53, 2), (A54, 3)], &k, y);
        sys.rhs(t + C5 * h, &tmp, &mut k[4]);
        stage(&mut tmp, &[(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)], &k, y);
        sys.rhs(t + h, &tmp, &mut k[5]);
        stage(&mut y_new, &[(A71, 0), (A73, 2), (A74, 3), (A75, 4), (A76, 5)], &k, y);
        sys.rhs(t + h, &y_new, &mut k[6]);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max(e.abs() / sc);
        }
        if !err.is_finite() || !all_finite(&y_new) {
            // Treat as a rejection with a hard cut; a genuinely divergent
            // system ends in underflow or NonFinite below.
            if h < 1e3 * DT_MIN {
                return Err(IntegrationError::NonFinite { t, last_good: y.to_vec() });
            }
            h *= 0.1;
            rejected += 1;
            continue;
        }

        if err <= 1.0 {
            for i in 0..n {
                let dy = y_new[i] - y[i];
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = h * k[0][i] - dy;
                cont[3][i] = dy - h * k[6][i] - cont[2][i];
                cont[4][i] = h
                    * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let t_old = t;
            t = if t + h >= t_end { t_end } else { t + h };
            steps += 1;

            loop {
                let ts = sample_time(next_sample);
                if ts >= t_end || ts > t + 1e-12 * sample_dt {
                    break;
                }
                let th = (ts - t_old) / h;
                let th1 = 1.0 - th;
                for i in 0..n {
                    dense[i] = cont[0][i]
                        + th * (cont[1][i] + th1 * (cont[2][i] + th * (cont[3][i] + th1 * cont[4][i])));
                }
                next_sample += 1;
                if observer(ts, &dense).is_break() {
                    y.copy_from_slice(&dense);
                    return Ok(Outcome { t_final: ts, steps, rejected, stopped: true });
                }
            }

            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            if t >= t_end {
                break;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }

    let _ = observer(t_end, y);
    Ok(Outcome { t_final: t_end, steps, rejected, stopped: false })
}

fn initial_step(y: &[f64], f0: &[f64], rtol: f64, atol: f64, span: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let sc = atol + rtol * yi.abs();
        d0 = d0.max(yi.abs() / sc);
        d1 = d1.max(fi.abs() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).max(DT_MIN * 10.0)
}
