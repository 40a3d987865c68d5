//! Sampled time series, intensity-peak detection and trajectory comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of an exported time series. Column order is fixed; see
/// [`TimeSeriesRecord::CSV_HEADER`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub tau: f64,
    /// Laboratory-frame field A.
    pub re_a: f64,
    pub im_a: f64,
    pub abs_a2: f64,
    pub photons_per_particle: f64,
    pub mean_pbar: f64,
    pub norm: f64,
    /// |A|² + ⟨p̄⟩ (or the variant-specific two-level equivalent).
    pub invariant_value: f64,
}

impl TimeSeriesRecord {
    pub const CSV_HEADER: &'static str =
        "tau,re_A,im_A,abs_A2,photons_per_particle,mean_pbar,norm,invariant_value";

    /// One CSV line, 17 significant digits per value, no trailing newline.
    pub fn csv_line(&self) -> String {
        [
            self.tau,
            self.re_a,
            self.im_a,
            self.abs_a2,
            self.photons_per_particle,
            self.mean_pbar,
            self.norm,
            self.invariant_value,
        ]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn is_finite(&self) -> bool {
        [
            self.tau,
            self.re_a,
            self.im_a,
            self.abs_a2,
            self.photons_per_particle,
            self.mean_pbar,
            self.norm,
            self.invariant_value,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Records of a run together with d|A|²/dτ at each sample, which lets peak
/// positions be refined beyond the sampling resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub records: Vec<TimeSeriesRecord>,
    pub intensity_rate: Vec<f64>,
}

impl Series {
    pub fn push(&mut self, record: TimeSeriesRecord, intensity_rate: f64) {
        self.records.push(record);
        self.intensity_rate.push(intensity_rate);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tau).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.abs_a2).collect()
    }

    /// Confirmed intensity peaks, see [`PeakTracker`].
    pub fn peaks(&self) -> Vec<Peak> {
        let mut tracker = PeakTracker::default();
        self.records
            .iter()
            .zip(&self.intensity_rate)
            .filter_map(|(r, d)| tracker.push(r.tau, r.abs_a2, Some(*d)))
            .collect()
    }

    pub fn first_peak(&self) -> Option<Peak> {
        self.peaks().into_iter().next()
    }

    /// Largest change of the invariant column relative to its first value.
    pub fn invariant_drift(&self) -> f64 {
        drift(self.records.iter().map(|r| r.invariant_value))
    }

    /// Largest change of the norm column relative to its first value.
    pub fn norm_drift(&self) -> f64 {
        drift(self.records.iter().map(|r| r.norm))
    }
}

fn drift(mut it: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = it.next() else { return 0.0 };
    it.fold(0.0, |m, v| m.max((v - first).abs()))
}

/// A located maximum of a sampled signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Index of the largest sample belonging to the peak.
    pub index: usize,
    /// Refined position.
    pub tau: f64,
    /// Refined value.
    pub value: f64,
}

/// Online detector for pulse maxima.
///
/// A local maximum counts as a peak once the signal falls below
/// `(1 - min_drop)` times its value before rising above it again, and only if
/// it exceeds `floor`. Slow ripples on an exponentially growing signal are
/// therefore ignored.
#[derive(Debug, Clone)]
pub struct PeakTracker {
    pub min_drop: f64,
    pub floor: f64,
    window: Vec<Sample>,
    index: usize,
    candidate: Option<Peak>,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    v: f64,
    rate: Option<f64>,
}

impl Default for PeakTracker {
    fn default() -> Self {
        Self::new(0.2, 0.0)
    }
}

impl PeakTracker {
    pub fn new(min_drop: f64, floor: f64) -> Self {
        Self { min_drop, floor, window: Vec::with_capacity(3), index: 0, candidate: None }
    }

    /// Unconfirmed maximum currently being tracked.
    pub fn candidate(&self) -> Option<Peak> {
        self.candidate
    }

    /// Feeds one sample; returns a peak when one is confirmed.
    pub fn push(&mut self, t: f64, v: f64, rate: Option<f64>) -> Option<Peak> {
        let idx = self.index;
        self.index += 1;
        if self.window.len() == 3 {
            self.window.remove(0);
        }
        self.window.push(Sample { t, v, rate });

        if let Some(c) = self.candidate {
            if v > c.value {
                self.candidate = None;
            }
        }
        if let [a, b, c] = self.window[..] {
            if b.v >= a.v && b.v > c.v && b.v >= self.floor {
                let (tau, value) = refine(a, b, c);
                if self.candidate.is_none_or(|p| value > p.value) {
                    self.candidate = Some(Peak { index: idx - 1, tau, value });
                }
            }
        }
        match self.candidate {
            Some(p) if v < (1.0 - self.min_drop) * p.value => {
                self.candidate = None;
                Some(p)
            }
            _ => None,
        }
    }
}

/// Refines the maximum around sample `b`. With derivatives available the
/// stationary point of the cubic Hermite interpolant is used; otherwise a
/// parabola through the three samples.
fn refine(a: Sample, b: Sample, c: Sample) -> (f64, f64) {
    if let (Some(da), Some(db), Some(dc)) = (a.rate, b.rate, c.rate) {
        let (l, r, dl, dr) = if db >= 0.0 { (b, c, db, dc) } else { (a, b, da, db) };
        if let Some(s) = hermite_stationary(l.v, r.v, dl, dr, r.t - l.t) {
            let h = r.t - l.t;
            return (l.t + s * h, hermite_eval(l.v, r.v, dl, dr, h, s));
        }
    }
    let (h1, h2) = (b.t - a.t, c.t - b.t);
    if h1 > 0.0 && h2 > 0.0 {
        // Parabola through (a, b, c) in local coordinate x = t - b.t.
        let s1 = (b.v - a.v) / h1;
        let s2 = (c.v - b.v) / h2;
        let curv = (s2 - s1) / (h1 + h2);
        let slope = s1 + curv * h1;
        if curv < 0.0 {
            let x = -slope / (2.0 * curv);
            if x.abs() <= h1.max(h2) {
                return (b.t + x, b.v + slope * x + curv * x * x);
            }
        }
    }
    (b.t, b.v)
}

fn hermite_eval(va: f64, vb: f64, da: f64, db: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * va
        + (s3 - 2.0 * s2 + s) * h * da
        + (-2.0 * s3 + 3.0 * s2) * vb
        + (s3 - s2) * h * db
}

/// Root in [0, 1] of the derivative of the cubic Hermite interpolant where it
/// changes from positive to negative.
fn hermite_stationary(va: f64, vb: f64, da: f64, db: f64, h: f64) -> Option<f64> {
    let a = 6.0 * va + 3.0 * h * da - 6.0 * vb + 3.0 * h * db;
    let b = -6.0 * va - 4.0 * h * da + 6.0 * vb - 2.0 * h * db;
    let c = h * da;
    let deriv = |s: f64| (a * s + b) * s + c;
    let roots: Vec<f64> = if a.abs() < 1e-300 {
        if b == 0.0 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            let sq = disc.sqrt();
            // Numerically stable pair.
            let q = -0.5 * (b + b.signum() * sq);
            let mut r = vec![q / a];
            if q != 0.0 {
                r.push(c / q);
            }
            r
        }
    };
    roots
        .into_iter()
        .filter(|s| (-1e-12..=1.0 + 1e-12).contains(s))
        .find(|&s| deriv((s - 1e-6).max(0.0)) >= 0.0 && deriv((s + 1e-6).min(1.0)) <= 0.0)
        .map(|s| s.clamp(0.0, 1.0))
}

/// Relative L∞ distance ‖a − b‖∞ / ‖b‖∞.
pub fn relative_linf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    num / den
}

/// Relative L2 distance ‖a − b‖₂ / ‖b‖₂.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Interpolates `(tau, values)` onto `targets` with 4-point Lagrange
/// polynomials. `tau` must be strictly increasing and every target must lie
/// within its range.
pub fn resample(tau: &[f64], values: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    if tau.len() != values.len() || tau.len() < 2 {
        return Err(Error::InvalidState("resample needs at least two matched samples".into()));
    }
    let (lo, hi) = (tau[0], tau[tau.len() - 1]);
    let slack = 1e-9 * (hi - lo).abs().max(1.0);
    targets
        .iter()
        .map(|&x| {
            if x < lo - slack || x > hi + slack {
                return Err(Error::InvalidState(format!("resample target {x} outside [{lo}, {hi}]")));
            }
            let j = tau.partition_point(|&t| t <= x).clamp(1, tau.len() - 1);
            let start = j.saturating_sub(2).min(tau.len().saturating_sub(4));
            let end = (start + 4).min(tau.len());
            let mut acc = 0.0;
            for i in start..end {
                let mut w = 1.0;
                for k in start..end {
                    if k != i {
                        w *= (x - tau[k]) / (tau[i] - tau[k]);
                    }
                }
                acc += w * values[i];
            }
            Ok(acc)
        })
        .collect()
}

/// Least-squares slope of ln(value) against tau over samples whose value lies
/// strictly between `lo` and `hi`.
pub fn fit_exponential_rate(tau: &[f64], value: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        tau.iter().zip(value).filter(|(_, v)| **v > lo && **v < hi).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::TooShort(format!(
            "only {} samples inside the fit window ({lo:e}, {hi:e})",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}
