//! Fidelity, success probability, information gain and the trade-off bound.

mod haar;
mod oracles;

pub use haar::{exact_info_gain, exact_success_probability, exact_unitary_fidelity};
pub use oracles::{
    closed_form_oracle, fr_damping_abar, fr_damping_b, fr_dephasing, fr_depolarizing, fu_damping,
    fu_dephasing, fu_depolarizing, fu_depolarizing_printed, integrate_unit, ORACLE_NAMES,
    ORACLE_NODES,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::reversal::ReversalPlan;
use crate::states::{EnsembleKind, InputEnsemble};
use crate::tensor::{hermitian_eigen, ComplexMatrix, C64, ZERO};

/// Outcomes whose success probability falls below this contribute nothing.
pub const ZERO_SUCCESS: f64 = 1e-14;

/// Ensemble average, with a standard error for Monte Carlo ensembles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: Option<f64>,
}

impl Estimate {
    fn from_samples(ens: &InputEnsemble, samples: &[f64]) -> Self {
        let value: f64 = samples.iter().zip(ens.weights()).map(|(s, w)| s * w).sum();
        let stderr = (ens.kind() == EnsembleKind::HaarMc && samples.len() > 1).then(|| {
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { value, stderr }
    }
}

/// `⟨ψ|A|ψ⟩` without allocation.
fn quad(a: &ComplexMatrix, psi: &[C64]) -> C64 {
    let d = psi.len();
    let data = a.as_slice();
    let mut acc = ZERO;
    for (r, pr) in psi.iter().enumerate() {
        let row = &data[r * d..(r + 1) * d];
        let mut s = ZERO;
        for (x, p) in row.iter().zip(psi) {
            s += x * p;
        }
        acc += pr.conj() * s;
    }
    acc
}

struct OutcomeTerms {
    /// `Σ_k M_k†M_k`
    effect: ComplexMatrix,
    /// `Σ_k (R M_k)†(R M_k)`
    success_effect: ComplexMatrix,
    /// `R M_k` per hidden index
    corrected: Vec<ComplexMatrix>,
}

/// Precomputed per-outcome operators for a measurement and a plan.
struct Evaluator {
    terms: Vec<OutcomeTerms>,
}

impl Evaluator {
    fn new(ms: &MeasurementSet, plan: &ReversalPlan) -> Result<Self> {
        if ms.len() != plan.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} outcomes but {} instruments",
                ms.len(),
                plan.len()
            )));
        }
        let terms = ms
            .groups()
            .iter()
            .zip(plan.outcomes())
            .map(|(g, r)| {
                if r.success.cols() != ms.output_dim() {
                    return Err(Error::DimensionMismatch(
                        "reversing operator does not act on the output space".into(),
                    ));
                }
                let corrected: Vec<ComplexMatrix> =
                    g.operators.iter().map(|m| &r.success * m).collect();
                let d = ms.input_dim();
                let success_effect = corrected.iter().fold(ComplexMatrix::zeros(d, d), |acc, c| {
                    &acc + &(&c.dagger() * c)
                });
                Ok(OutcomeTerms {
                    effect: g.effect(),
                    success_effect,
                    corrected,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if ms.input_dim() != ms.output_dim() {
            return Err(Error::DimensionMismatch(
                "fidelity needs equal input and output dimensions".into(),
            ));
        }
        Ok(Self { terms })
    }

    /// `(p^i, p^i_1, Σ_k |⟨ψ|R M_k|ψ⟩|²)` for one outcome.
    fn outcome(&self, i: usize, psi: &[C64]) -> (f64, f64, f64) {
        let t = &self.terms[i];
        let p = quad(&t.effect, psi).re;
        let p1 = quad(&t.success_effect, psi).re;
        let overlap = t.corrected.iter().map(|c| quad(c, psi).norm_sqr()).sum();
        (p, p1, overlap)
    }

    /// Outcome-probability-weighted fidelity of the success branch.
    fn fidelity(&self, psi: &[C64]) -> f64 {
        (0..self.terms.len())
            .map(|i| {
                let (p, p1, overlap) = self.outcome(i, psi);
                if p1 < ZERO_SUCCESS {
                    0.0
                } else {
                    p * overlap / p1
                }
            })
            .sum()
    }

    fn postselected(&self, psi: &[C64], selected: &[usize]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in selected {
            let (p, p1, overlap) = self.outcome(i, psi);
            den += p;
            if p1 >= ZERO_SUCCESS {
                num += p * overlap / p1;
            }
        }
        if den < ZERO_SUCCESS {
            0.0
        } else {
            num / den
        }
    }

    fn success(&self, psi: &[C64]) -> f64 {
        self.terms
            .iter()
            .map(|t| quad(&t.success_effect, psi).re)
            .sum()
    }
}

fn check_ensemble(ms: &MeasurementSet, ens: &InputEnsemble) -> Result<()> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if ens.dim() != ms.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "ensemble of dimension {} for input dimension {}",
            ens.dim(),
            ms.input_dim()
        )));
    }
    Ok(())
}

/// Average fidelity of the success branch, each outcome weighted by its
/// measurement probability.
pub fn teleport_fidelity(
    ms: &MeasurementSet,
    plan: &ReversalPlan,
    ens: &InputEnsemble,
) -> Result<Estimate> {
    check_ensemble(ms, ens)?;
    let ev = Evaluator::new(ms, plan)?;
    let samples: Vec<f64> = ens.iter().map(|(psi, _)| ev.fidelity(psi)).collect();
    Ok(Estimate::from_samples(ens, &samples))
}

/// Fidelity conditioned on the visible outcome lying in `selected`
/// (zero-based outcome indices), renormalized per input state.
pub fn teleport_fidelity_postselected(
    ms: &MeasurementSet,
    plan: &ReversalPlan,
    ens: &InputEnsemble,
    selected: &[usize],
) -> Result<Estimate> {
    check_ensemble(ms, ens)?;
    if selected.is_empty() || selected.iter().any(|&i| i >= ms.len()) {
        return Err(Error::Invalid(format!(
            "invalid outcome selection {selected:?}"
        )));
    }
    let ev = Evaluator::new(ms, plan)?;
    let samples: Vec<f64> = ens
        .iter()
        .map(|(psi, _)| ev.postselected(psi, selected))
        .collect();
    Ok(Estimate::from_samples(ens, &samples))
}

/// Average probability that the reversing instrument reports success.
pub fn success_probability(
    ms: &MeasurementSet,
    plan: &ReversalPlan,
    ens: &InputEnsemble,
) -> Result<Estimate> {
    check_ensemble(ms, ens)?;
    let ev = Evaluator::new(ms, plan)?;
    let samples: Vec<f64> = ens.iter().map(|(psi, _)| ev.success(psi)).collect();
    Ok(Estimate::from_samples(ens, &samples))
}

/// Sender's best guess per outcome: principal eigenvector of `Σ_k M†M`.
pub fn estimators(ms: &MeasurementSet) -> Vec<Vec<C64>> {
    ms.groups()
        .iter()
        .map(|g| {
            let (_, vecs) = hermitian_eigen(&g.effect());
            vecs.into_iter().last().expect("nonempty spectrum")
        })
        .collect()
}

/// Average overlap between the input and the sender's estimate.
pub fn info_gain(ms: &MeasurementSet, ens: &InputEnsemble) -> Result<Estimate> {
    check_ensemble(ms, ens)?;
    let est = estimators(ms);
    let effects: Vec<ComplexMatrix> = ms.groups().iter().map(|g| g.effect()).collect();
    let samples: Vec<f64> = ens
        .iter()
        .map(|(psi, _)| {
            effects
                .iter()
                .zip(&est)
                .map(|(e, v)| {
                    let ov: C64 = v.iter().zip(psi).map(|(a, b)| a.conj() * b).sum();
                    quad(e, psi).re * ov.norm_sqr()
                })
                .sum()
        })
        .collect();
    Ok(Estimate::from_samples(ens, &samples))
}

/// `Σ_i p^i(ψ)` for one input; 1 for a complete measurement.
pub fn probability_sum(ms: &MeasurementSet, psi: &[C64]) -> f64 {
    ms.outcome_probabilities(psi).iter().sum()
}

/// `(d + Σ λ_max²) / (d(d+1))`.
pub fn gmax_closed(lambda_max: &[f64], d: usize) -> f64 {
    let d = d as f64;
    (d + lambda_max.iter().map(|l| l * l).sum::<f64>()) / (d * (d + 1.0))
}

/// `Σ λ_min²`; a sum above one signals a non-normalized measurement.
pub fn pmax_closed(lambda_min: &[f64]) -> Result<f64> {
    let p: f64 = lambda_min.iter().map(|l| l * l).sum();
    if p > 1.0 + 1e-9 {
        return Err(Error::Invalid(format!(
            "sum of squared smallest singular values is {p} > 1"
        )));
    }
    Ok(p)
}

/// Outcome of `d(d+1)G + (d−1)P ≤ 2d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeOff {
    pub lhs: f64,
    pub satisfied: bool,
    pub slack: f64,
}

pub fn tradeoff_check(g: f64, p: f64, d: usize) -> TradeOff {
    let df = d as f64;
    let lhs = df * (df + 1.0) * g + (df - 1.0) * p;
    TradeOff {
        lhs,
        satisfied: lhs <= 2.0 * df + 1e-9,
        slack: 2.0 * df - lhs,
    }
}

/// Classical measure-and-prepare limit `2/(d+1)`.
pub fn classical_limit(d: usize) -> f64 {
    2.0 / (d as f64 + 1.0)
}

/// Summary of one protocol evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub f_tele: f64,
    pub f_unitary: Option<f64>,
    pub f_reversal: Option<f64>,
    pub p_success: f64,
    pub gain: f64,
    pub tradeoff_lhs: f64,
    pub tradeoff_satisfied: bool,
    pub d: usize,
    pub method: String,
    pub samples: usize,
    pub seed: Option<u64>,
    pub stderr: Option<f64>,
}

impl PerformanceReport {
    /// `f_tele = max(f_unitary, f_reversal)` over whichever were computed.
    pub fn new(
        f_unitary: Option<f64>,
        f_reversal: Option<f64>,
        p_success: f64,
        gain: f64,
        tradeoff_p: f64,
        d: usize,
        ens: &InputEnsemble,
        stderr: Option<f64>,
    ) -> Self {
        let f_tele = match (f_unitary, f_reversal) {
            (Some(u), Some(r)) => u.max(r),
            (Some(u), None) => u,
            (None, Some(r)) => r,
            (None, None) => f64::NAN,
        };
        let t = tradeoff_check(gain, tradeoff_p, d);
        Self {
            f_tele,
            f_unitary,
            f_reversal,
            p_success,
            gain,
            tradeoff_lhs: t.lhs,
            tradeoff_satisfied: t.satisfied,
            d,
            method: ensemble_label(ens),
            samples: ens.len(),
            seed: ens.seed(),
            stderr,
        }
    }
}

pub fn ensemble_label(ens: &InputEnsemble) -> String {
    match ens.kind() {
        EnsembleKind::HaarMc => "mc".into(),
        EnsembleKind::BlochQuadrature => "quad".into(),
        EnsembleKind::FixedList => "fixed".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{bell_basis, build_measurement, tilted_joint_basis};
    use crate::reversal::{
        coarse_optimal_reversal, optimal_reversal, unitary_reversal, RecombinationStrategy,
    };
    use crate::states::{default_qubit_quadrature, kraus_damping, kraus_depolarizing, tilted_pair};
    use crate::tensor::pauli;
    use std::f64::consts::PI;

    fn noiseless(theta: f64) -> MeasurementSet {
        build_measurement(&tilted_pair(theta).unwrap(), bell_basis(), &[]).unwrap()
    }

    #[test]
    fn noiseless_fidelity_and_probability() {
        let q = default_qubit_quadrature();
        for theta in [PI / 3.0, PI / 7.0, PI / 2.0] {
            let ms = noiseless(theta);
            let plan = optimal_reversal(&ms).unwrap();
            let f = teleport_fidelity(&ms, &plan, &q).unwrap();
            assert!((f.value - 1.0).abs() < 1e-10);
            assert!(f.stderr.is_none());
            let p = success_probability(&ms, &plan, &q).unwrap().value;
            assert!((p - 2.0 * (theta / 2.0).sin().powi(2)).abs() < 1e-10);
            let g = info_gain(&ms, &q).unwrap().value;
            assert!((g - (1.0 + (theta / 2.0).cos().powi(2)) / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tilted_basis_probability() {
        let q = default_qubit_quadrature();
        let (theta, phi): (f64, f64) = (PI / 4.0, PI / 8.0);
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            tilted_joint_basis(phi).unwrap(),
            &[],
        )
        .unwrap();
        let p = success_probability(&ms, &optimal_reversal(&ms).unwrap(), &q)
            .unwrap()
            .value;
        assert!((p - 2.0 * (PI / 16.0).sin().powi(2)).abs() < 1e-10);
        assert!((p - 0.07612046748871326).abs() < 1e-10);
    }

    #[test]
    fn product_channel_gain_is_classical() {
        let q = default_qubit_quadrature();
        let g = info_gain(&noiseless(0.0), &q).unwrap().value;
        assert!((g - 2.0 / 3.0).abs() < 1e-10);
        assert!((info_gain(&noiseless(PI / 2.0), &q).unwrap().value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn depolarizing_reversal_fidelity() {
        let q = default_qubit_quadrature();
        let ms = build_measurement(
            &tilted_pair(PI / 2.0).unwrap(),
            bell_basis(),
            &[kraus_depolarizing(0.4).unwrap()],
        )
        .unwrap();
        let plan = coarse_optimal_reversal(&ms, &RecombinationStrategy::canonical()).unwrap();
        assert!((teleport_fidelity(&ms, &plan, &q).unwrap().value - 0.8).abs() < 1e-10);
    }

    #[test]
    fn damping_zero_noise_is_faithful() {
        let q = default_qubit_quadrature();
        for theta in [0.3, 1.0, PI / 2.0] {
            let ms = build_measurement(
                &tilted_pair(theta).unwrap(),
                bell_basis(),
                &[kraus_damping(0.0).unwrap()],
            )
            .unwrap();
            let plan = coarse_optimal_reversal(&ms, &RecombinationStrategy::canonical()).unwrap();
            assert!((teleport_fidelity(&ms, &plan, &q).unwrap().value - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn unitary_fidelity_noiseless() {
        let q = default_qubit_quadrature();
        let theta: f64 = 1.0;
        let ms = noiseless(theta);
        let plan = unitary_reversal(&ms, &pauli::frame()).unwrap();
        let f = teleport_fidelity(&ms, &plan, &q).unwrap().value;
        assert!((f - (2.0 + theta.sin()) / 3.0).abs() < 1e-10);
        assert!((exact_unitary_fidelity(&ms, &plan).unwrap() - f).abs() < 1e-12);
    }

    #[test]
    fn mc_stderr_present() {
        let ens = InputEnsemble::haar_mc(2, 2000, 7).unwrap();
        let ms = noiseless(1.0);
        let plan = unitary_reversal(&ms, &pauli::frame()).unwrap();
        let f = teleport_fidelity(&ms, &plan, &ens).unwrap();
        let s = f.stderr.unwrap();
        assert!(s > 0.0 && (f.value - (2.0 + 1f64.sin()) / 3.0).abs() < 5.0 * s);
    }

    #[test]
    fn closed_forms() {
        let theta: f64 = PI / 2.0;
        let lmax = vec![(theta / 2.0).cos() / 2f64.sqrt(); 4];
        assert!((gmax_closed(&lmax, 2) - 0.5).abs() < 1e-15);
        assert!(pmax_closed(&[0.5f64.sqrt(); 4]).is_err());
        assert_eq!(pmax_closed(&[0.0; 4]).unwrap(), 0.0);
        for theta in [0.0, 0.4, 1.0, PI / 2.0] {
            let g = (1.0 + (theta / 2.0 as f64).cos().powi(2)) / 3.0;
            let p = 2.0 * (theta / 2.0 as f64).sin().powi(2);
            let t = tradeoff_check(g, p, 2);
            assert!((t.lhs - 4.0).abs() < 1e-12 && t.satisfied);
        }
        assert!((tradeoff_check(2.0 / 3.0, 0.0, 2).lhs - 4.0).abs() < 1e-12);
        let t = tradeoff_check(1.0 / 3.0, 1.0, 2);
        assert!((t.lhs - 3.0).abs() < 1e-12 && (t.slack - 1.0).abs() < 1e-12);
        assert!(!tradeoff_check(0.7, 0.5, 2).satisfied);
    }

    #[test]
    fn errors() {
        let ms = noiseless(1.0);
        let plan = optimal_reversal(&ms).unwrap();
        let q4 = InputEnsemble::haar_mc(4, 10, 1).unwrap();
        assert!(teleport_fidelity(&ms, &plan, &q4).is_err());
        assert!(
            teleport_fidelity_postselected(&ms, &plan, &default_qubit_quadrature(), &[7]).is_err()
        );
    }
}
