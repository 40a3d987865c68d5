//! Divergence between two runs of the same physical setup.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::Check;
use super::run::{run_model, RunResult};
use crate::classical::Placement;
use crate::error::{Error, Result};
use crate::series::{relative_l2, relative_linf, resample, TimeSeriesRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDistance {
    pub observable: String,
    pub linf: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub reference: String,
    /// Window [tau_start, tau_end] on which both runs were compared.
    pub tau_start: f64,
    pub tau_end: f64,
    pub samples: usize,
    /// Relative distances of |A|²; the headline numbers.
    pub linf: f64,
    pub l2: f64,
    pub table: Vec<ObservableDistance>,
}

impl Comparison {
    pub fn check(&self, name: &str, limit: f64) -> Check {
        Check::below(name, self.linf, limit)
    }
}

fn seed(cfg: &RunConfig) -> Option<u64> {
    match cfg.initial.placement {
        Placement::SeededRandom { seed } => Some(seed),
        Placement::Equispaced => None,
    }
}

/// Both runs must describe the same physical setup: equal (ρ̄, δ) and, when
/// both place particles randomly, the same seed.
pub fn check_pairing(model: &RunConfig, reference: &RunConfig) -> Result<()> {
    if model.rho_bar != reference.rho_bar || model.delta != reference.delta {
        return Err(Error::Config(format!(
            "compared runs differ in (rho_bar, delta): ({}, {}) vs ({}, {})",
            model.rho_bar, model.delta, reference.rho_bar, reference.delta
        )));
    }
    if let (Some(a), Some(b)) = (seed(model), seed(reference)) {
        if a != b {
            return Err(Error::Config(format!("compared runs use seeds {a} and {b}")));
        }
    }
    Ok(())
}

/// Runs both configurations and compares them; `reference` sets the window.
pub fn compare_models(model: &RunConfig, reference: &RunConfig) -> Result<Comparison> {
    check_pairing(model, reference)?;
    compare_results(&run_model(model)?, &run_model(reference)?)
}

/// Distances of `model` from `reference` over the reference run up to its
/// first intensity peak (or its end), resampling `model` onto the
/// reference sample times.
pub fn compare_results(model: &RunResult, reference: &RunResult) -> Result<Comparison> {
    let (a, b) = (&model.series.records, &reference.series.records);
    let span = |r: &[TimeSeriesRecord]| r.first().zip(r.last()).map(|(x, y)| (x.tau, y.tau));
    let ((a0, a1), (b0, b1)) = match (span(a), span(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::InvalidState("cannot compare an empty run".into())),
    };
    let stop = reference.first_peak().map_or(b1, |p| b[p.index].tau);
    let (lo, hi) = (a0.max(b0), a1.min(stop));
    if lo > hi {
        return Err(Error::InvalidState(format!(
            "runs cover disjoint ranges [{a0}, {a1}] and [{b0}, {stop}]"
        )));
    }
    let window: Vec<&TimeSeriesRecord> = b.iter().filter(|r| r.tau >= lo && r.tau <= hi).collect();
    let targets: Vec<f64> = window.iter().map(|r| r.tau).collect();
    let taus = model.series.taus();
    type Column = (&'static str, fn(&TimeSeriesRecord) -> f64);
    let columns: [Column; 3] = [
        ("abs_A2", |r| r.abs_a2),
        ("photons_per_particle", |r| r.photons_per_particle),
        ("mean_pbar", |r| r.mean_pbar),
    ];
    let mut table = Vec::new();
    for (name, get) in columns {
        let own: Vec<f64> = a.iter().map(get).collect();
        let ours =
            if taus.len() == 1 { vec![own[0]; targets.len()] } else { resample(&taus, &own, &targets)? };
        let theirs: Vec<f64> = window.iter().map(|r| get(r)).collect();
        table.push(ObservableDistance {
            observable: name.into(),
            linf: relative_linf(&ours, &theirs),
            l2: relative_l2(&ours, &theirs),
        });
    }
    Ok(Comparison {
        model: model.config.model.to_string(),
        reference: reference.config.model.to_string(),
        tau_start: lo,
        tau_end: hi,
        samples: targets.len(),
        linf: table[0].linf,
        l2: table[0].l2,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ModelKind;

    #[test]
    fn identical_runs_have_zero_distance() {
        let mut cfg = RunConfig::new(ModelKind::QuantumC, 1.0, 1.0, 40.0);
        cfg.stop_after_peaks = Some(1);
        let c = compare_models(&cfg, &cfg).unwrap();
        assert_eq!(c.linf, 0.0);
        assert_eq!(c.l2, 0.0);
        assert_eq!(c.table.len(), 3);
        assert!(c.tau_end > 10.0);
    }

    #[test]
    fn wavefunction_and_density_runs_agree() {
        let mut a = RunConfig::new(ModelKind::QuantumC, 1.0, 1.0, 40.0);
        a.stop_after_peaks = Some(1);
        let mut b = a.clone();
        b.model = ModelKind::QuantumRho;
        let c = compare_models(&b, &a).unwrap();
        assert!(c.linf < 1e-6, "{}", c.linf);
    }

    #[test]
    fn mismatched_setups_are_rejected() {
        let a = RunConfig::new(ModelKind::QuantumC, 1.0, 1.0, 1.0);
        let b = RunConfig::new(ModelKind::QuantumC, 2.0, 1.0, 1.0);
        assert!(matches!(compare_models(&a, &b), Err(Error::Config(_))));
        let mut c = RunConfig::new(ModelKind::Classical, 1.0, 1.0, 1.0);
        let mut d = c.clone();
        c.initial.placement = Placement::SeededRandom { seed: 1 };
        d.initial.placement = Placement::SeededRandom { seed: 2 };
        assert!(compare_models(&c, &d).is_err());
    }

    #[test]
    fn disjoint_ranges_are_an_error() {
        let cfg = RunConfig::new(ModelKind::QuantumC, 1.0, 1.0, 1.0);
        let a = run_model(&cfg).unwrap();
        let mut b = a.clone();
        for r in &mut b.series.records {
            r.tau += 10.0;
        }
        assert!(compare_results(&a, &b).is_err());
    }
}
