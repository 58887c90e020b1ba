//! Exact Haar averages for metrics that are polynomial in `|ψ⟩⟨ψ|`:
//! `∫⟨ψ|A|ψ⟩ = tr A / d` and
//! `∫⟨ψ|A|ψ⟩⟨ψ|B|ψ⟩ = (tr A · tr B + tr(AB)) / (d(d+1))`.

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::reversal::{unitary_score, ReversalKind, ReversalPlan};
use crate::tensor::ComplexMatrix;

use super::estimators;

/// Average success probability `tr(Σ_{i,k} M†R†RM) / d`.
pub fn exact_success_probability(ms: &MeasurementSet, plan: &ReversalPlan) -> Result<f64> {
    if ms.len() != plan.len() {
        return Err(Error::DimensionMismatch(
            "plan and measurement differ in outcomes".into(),
        ));
    }
    let d = ms.input_dim() as f64;
    let mut total = 0.0;
    for (g, r) in ms.groups().iter().zip(plan.outcomes()) {
        let rr = &r.success.dagger() * &r.success;
        for m in &g.operators {
            total += (&(&m.dagger() * &rr) * m).trace().re;
        }
    }
    Ok(total / d)
}

/// Information gain with the principal-eigenvector estimator.
pub fn exact_info_gain(ms: &MeasurementSet) -> f64 {
    let d = ms.input_dim() as f64;
    estimators(ms)
        .iter()
        .zip(ms.groups())
        .map(|(v, g)| {
            let a = g.effect();
            let b = ComplexMatrix::outer(v, v);
            (a.trace().re * b.trace().re + (&a * &b).trace().re) / (d * (d + 1.0))
        })
        .sum()
}

/// Fidelity of a deterministic unitary-correction plan.
pub fn exact_unitary_fidelity(ms: &MeasurementSet, plan: &ReversalPlan) -> Result<f64> {
    if plan.kind() != ReversalKind::Unitary {
        return Err(Error::Invalid("exact fidelity needs a unitary plan".into()));
    }
    if ms.len() != plan.len() {
        return Err(Error::DimensionMismatch(
            "plan and measurement differ in outcomes".into(),
        ));
    }
    Ok(ms
        .groups()
        .iter()
        .zip(plan.outcomes())
        .map(|(g, r)| unitary_score(&r.success, &g.operators))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{bell_basis, build_measurement};
    use crate::metrics::{info_gain, success_probability};
    use crate::reversal::optimal_reversal;
    use crate::states::{default_qubit_quadrature, kraus_damping, tilted_pair};

    #[test]
    fn exact_matches_quadrature() {
        let q = default_qubit_quadrature();
        let ms = build_measurement(&tilted_pair(0.8).unwrap(), bell_basis(), &[]).unwrap();
        let plan = optimal_reversal(&ms).unwrap();
        let p = success_probability(&ms, &plan, &q).unwrap().value;
        assert!((exact_success_probability(&ms, &plan).unwrap() - p).abs() < 1e-12);
        let noisy = build_measurement(
            &tilted_pair(0.8).unwrap(),
            bell_basis(),
            &[kraus_damping(0.4).unwrap()],
        )
        .unwrap();
        let g = info_gain(&noisy, &q).unwrap().value;
        assert!((exact_info_gain(&noisy) - g).abs() < 1e-12);
        assert!(exact_unitary_fidelity(&ms, &plan).is_err());
    }
}
