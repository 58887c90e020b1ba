//! Receiver-side corrections: SVD-optimal reversing operators, coarse-grained
//! reversal over hidden Kraus indices, and conditional unitary correction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::states::UnitaryRecombination;
use crate::tensor::{
    is_unitary, op_norm, pauli, sqrt_psd, svd_vdu, ComplexMatrix, RECON_TOL, SINGULAR_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReversalKind {
    SvdOptimal,
    Unitary,
    Custom,
}

/// Success/failure instrument for one visible outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeReversal {
    pub success: ComplexMatrix,
    pub failure: ComplexMatrix,
    pub lambda_star: f64,
    /// Operator the success branch inverts (after any recombination).
    pub reference: Option<ComplexMatrix>,
    /// Index of the hidden operator chosen, within the recombined group.
    pub hidden_index: Option<usize>,
    pub recombination: Option<ComplexMatrix>,
}

impl OutcomeReversal {
    /// Completes `success` with `√(I − R†R)`.
    pub fn from_success(success: ComplexMatrix, lambda_star: f64) -> Result<Self> {
        if !success.is_square() {
            return Err(Error::NotSquare {
                rows: success.rows(),
                cols: success.cols(),
            });
        }
        if op_norm(&success) > 1.0 + RECON_TOL {
            return Err(Error::Invalid(format!(
                "reversing operator has norm {} > 1",
                op_norm(&success)
            )));
        }
        let d = success.rows();
        let failure = sqrt_psd(&(&ComplexMatrix::identity(d) - &(&success.dagger() * &success)));
        Ok(Self {
            success,
            failure,
            lambda_star,
            reference: None,
            hidden_index: None,
            recombination: None,
        })
    }

    /// `‖R_s†R_s + R_f†R_f − I‖`.
    pub fn instrument_residual(&self) -> f64 {
        let d = self.success.rows();
        let sum =
            &(&self.success.dagger() * &self.success) + &(&self.failure.dagger() * &self.failure);
        op_norm(&(&sum - &ComplexMatrix::identity(d)))
    }
}

/// Per-outcome reversing instruments.
#[derive(Clone, Debug, PartialEq)]
pub struct ReversalPlan {
    kind: ReversalKind,
    per_outcome: Vec<OutcomeReversal>,
}

impl ReversalPlan {
    pub fn new(kind: ReversalKind, per_outcome: Vec<OutcomeReversal>) -> Self {
        Self { kind, per_outcome }
    }

    /// Plan from explicit success operators, completed with `√(I − R†R)`.
    pub fn custom(successes: Vec<ComplexMatrix>) -> Result<Self> {
        let per_outcome = successes
            .into_iter()
            .map(|r| OutcomeReversal::from_success(r, f64::NAN))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(ReversalKind::Custom, per_outcome))
    }

    pub fn kind(&self) -> ReversalKind {
        self.kind
    }

    pub fn outcomes(&self) -> &[OutcomeReversal] {
        &self.per_outcome
    }

    pub fn outcome(&self, i: usize) -> &OutcomeReversal {
        &self.per_outcome[i]
    }

    pub fn len(&self) -> usize {
        self.per_outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_outcome.is_empty()
    }

    pub fn lambda_stars(&self) -> Vec<f64> {
        self.per_outcome.iter().map(|o| o.lambda_star).collect()
    }

    /// Largest instrument-completeness residual over outcomes.
    pub fn instrument_residual(&self) -> f64 {
        self.per_outcome
            .iter()
            .map(OutcomeReversal::instrument_residual)
            .fold(0.0, f64::max)
    }

    /// Swaps two outcomes' instruments; for exercising [`verify_reversal`].
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.per_outcome.swap(i, j);
        out
    }
}

/// `R = λ_min · U† · D⁻¹ · V†` for `M = V·D·U`. When `λ_min` vanishes the
/// success branch projects onto the kernel of `M` instead, `R = U†·P₀·V†`,
/// which is the `λ → 0` limit of the normalized reversing operator.
fn reversal_for(m: &ComplexMatrix) -> Result<OutcomeReversal> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let svd = svd_vdu(m)?;
    let lambda = svd.lambda_min();
    let d = m.rows();
    let middle = if lambda < SINGULAR_TOL {
        ComplexMatrix::diag_real(
            &svd.singular_values
                .iter()
                .map(|s| if *s < SINGULAR_TOL { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
        )
    } else {
        ComplexMatrix::diag_real(
            &svd.singular_values
                .iter()
                .map(|s| lambda / s)
                .collect::<Vec<_>>(),
        )
    };
    let success = &(&svd.u.dagger() * &middle) * &svd.v.dagger();
    debug_assert_eq!(success.rows(), d);
    let lambda_star = if lambda < SINGULAR_TOL { 0.0 } else { lambda };
    let mut out = OutcomeReversal::from_success(success, lambda_star)?;
    out.reference = Some(m.clone());
    Ok(out)
}

/// SVD-optimal reversal for a measurement with one operator per outcome.
pub fn optimal_reversal(ms: &MeasurementSet) -> Result<ReversalPlan> {
    let per_outcome = ms
        .groups()
        .iter()
        .map(|g| {
            if g.operators.len() != 1 {
                return Err(Error::Invalid(format!(
                    "outcome {:?} has {} hidden operators; use coarse_optimal_reversal",
                    g.label,
                    g.operators.len()
                )));
            }
            let mut r = reversal_for(&g.operators[0])?;
            r.hidden_index = Some(0);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReversalPlan::new(ReversalKind::SvdOptimal, per_outcome))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecombinationMode {
    Canonical,
    GridSearch,
    Refine,
}

/// How the hidden-index recombinations are searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecombinationStrategy {
    pub mode: RecombinationMode,
    pub grid_points: usize,
    pub refine_iterations: usize,
}

impl RecombinationStrategy {
    pub fn canonical() -> Self {
        Self {
            mode: RecombinationMode::Canonical,
            grid_points: 1,
            refine_iterations: 0,
        }
    }

    pub fn grid_search(grid_points: usize) -> Self {
        Self {
            mode: RecombinationMode::GridSearch,
            grid_points,
            refine_iterations: 0,
        }
    }

    pub fn refine(grid_points: usize, refine_iterations: usize) -> Self {
        Self {
            mode: RecombinationMode::Refine,
            grid_points,
            refine_iterations,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_points == 0 {
            return Err(Error::Invalid("grid_points must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for RecombinationStrategy {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Smallest singular value; closed form for 2x2.
pub fn lambda_min(m: &ComplexMatrix) -> f64 {
    if m.rows() == 2 && m.cols() == 2 {
        let f = m.frobenius_sq();
        let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
        let disc = (f * f - 4.0 * det * det).max(0.0).sqrt();
        // avoid cancellation: σ_min² = 2|det|² / (f + disc)
        if f + disc == 0.0 {
            0.0
        } else {
            (2.0 * det * det / (f + disc)).sqrt()
        }
    } else {
        svd_vdu(m).map(|s| s.lambda_min()).unwrap_or(0.0)
    }
}

/// 2x2 mixing that only touches hidden indices `p` and `q` of `n`.
fn pair_mixing(n: usize, p: usize, q: usize, gamma: f64, delta: f64) -> ComplexMatrix {
    let u = UnitaryRecombination::su2(0.0, 0.0, gamma, delta);
    let mut m = ComplexMatrix::identity(n);
    let (a, b) = (u.mixing(), [p, q]);
    for (x, &i) in b.iter().enumerate() {
        for (y, &j) in b.iter().enumerate() {
            m[(i, j)] = a[(x, y)];
        }
    }
    m
}

/// Best `(λ, k)` over the recombined family.
fn best_of(ops: &[ComplexMatrix]) -> (f64, usize) {
    let mut best = (-1.0, 0);
    for (k, m) in ops.iter().enumerate() {
        let l = lambda_min(m);
        if l > best.0 {
            best = (l, k);
        }
    }
    best
}

fn recombined(ops: &[ComplexMatrix], mix: &ComplexMatrix) -> Vec<ComplexMatrix> {
    UnitaryRecombination::new(mix.clone())
        .and_then(|u| u.mix(ops))
        .expect("pair mixings are unitary")
}

/// Search over recombinations; returns the mixing with the largest `λ_min`
/// among its outputs. The identity is always a candidate and wins ties.
fn search_recombination(ops: &[ComplexMatrix], strategy: &RecombinationStrategy) -> ComplexMatrix {
    let n = ops.len();
    let identity = ComplexMatrix::identity(n);
    if n < 2 || strategy.mode == RecombinationMode::Canonical {
        return identity;
    }
    let g = strategy.grid_points;
    // global phases of the mixed pair leave singular values unchanged, so the
    // search runs over the mixing angle γ and relative phase δ
    let gammas: Vec<f64> = if g == 1 {
        vec![0.0]
    } else {
        (0..g)
            .map(|j| PI / 2.0 * j as f64 / (g - 1) as f64)
            .collect()
    };
    let deltas: Vec<f64> = (0..g).map(|j| 2.0 * PI * j as f64 / g as f64).collect();
    let eval = |mix: &ComplexMatrix| best_of(&recombined(ops, mix)).0;

    let mut best_mix = identity.clone();
    let mut best_val = eval(&identity);
    let mut best_params: Option<(usize, usize, f64, f64)> = None;
    for p in 0..n {
        for q in p + 1..n {
            for &gamma in &gammas {
                for &delta in &deltas {
                    let mix = pair_mixing(n, p, q, gamma, delta);
                    let v = eval(&mix);
                    if v > best_val + 1e-15 {
                        best_val = v;
                        best_mix = mix;
                        best_params = Some((p, q, gamma, delta));
                    }
                }
            }
        }
    }
    if strategy.mode == RecombinationMode::Refine {
        let (p, q, mut gamma, mut delta) = best_params.unwrap_or((0, 1, 0.0, 0.0));
        let mut step = if g > 1 {
            PI / 2.0 / (g - 1) as f64
        } else {
            PI / 8.0
        };
        for _ in 0..strategy.refine_iterations {
            let mut improved = false;
            for (dg, dd) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let mix = pair_mixing(n, p, q, gamma + dg, delta + dd);
                let v = eval(&mix);
                if v > best_val + 1e-15 {
                    best_val = v;
                    best_mix = mix;
                    gamma += dg;
                    delta += dd;
                    improved = true;
                    break;
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
    }
    best_mix
}

/// Coarse-grained optimal reversal: per outcome, pick the hidden operator
/// (after the best recombination found) with the largest smallest singular
/// value and invert it. The first hidden index wins ties.
pub fn coarse_optimal_reversal(
    ms: &MeasurementSet,
    strategy: &RecombinationStrategy,
) -> Result<ReversalPlan> {
    strategy.validate()?;
    let per_outcome = ms
        .groups()
        .iter()
        .map(|g| {
            let mix = search_recombination(&g.operators, strategy);
            let ops = if g.operators.len() > 1 {
                recombined(&g.operators, &mix)
            } else {
                g.operators.clone()
            };
            let (_, k) = best_of(&ops);
            let mut r = reversal_for(&ops[k])?;
            r.hidden_index = Some(k);
            if g.operators.len() > 1 {
                r.recombination = Some(mix);
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReversalPlan::new(ReversalKind::SvdOptimal, per_outcome))
}

/// `∫dψ Σ_k |⟨ψ|U M_k|ψ⟩|²` under the Haar measure, exactly:
/// `Σ_k (|tr(U M_k)|² + tr(M_k†M_k)) / (d(d+1))`.
pub fn unitary_score(u: &ComplexMatrix, ops: &[ComplexMatrix]) -> f64 {
    let d = u.rows() as f64;
    ops.iter()
        .map(|m| {
            let um = u * m;
            um.trace().norm_sqr() + m.frobenius_sq()
        })
        .sum::<f64>()
        / (d * (d + 1.0))
}

/// Default correction candidates: the Pauli frame on each output qubit.
pub fn default_unitary_candidates(output_dim: usize) -> Result<Vec<ComplexMatrix>> {
    if !output_dim.is_power_of_two() || output_dim < 2 {
        return Err(Error::Invalid(format!(
            "no default unitary frame for output dimension {output_dim}"
        )));
    }
    Ok(pauli::frame_products(output_dim.trailing_zeros() as usize))
}

/// Conditional unitary correction: per outcome, the candidate with the largest
/// Haar-averaged fidelity contribution. Deterministic (no failure branch).
pub fn unitary_reversal(ms: &MeasurementSet, candidates: &[ComplexMatrix]) -> Result<ReversalPlan> {
    if candidates.is_empty() {
        return Err(Error::Invalid("empty unitary candidate list".into()));
    }
    if ms.input_dim() != ms.output_dim() {
        return Err(Error::DimensionMismatch(
            "unitary correction needs equal input and output dimensions".into(),
        ));
    }
    for u in candidates {
        if u.rows() != ms.output_dim() || !is_unitary(u, RECON_TOL) {
            return Err(Error::Invalid(
                "candidate is not a unitary on the output space".into(),
            ));
        }
    }
    let per_outcome = ms
        .groups()
        .iter()
        .map(|g| {
            let mut best = (f64::NEG_INFINITY, 0);
            for (c, u) in candidates.iter().enumerate() {
                let s = unitary_score(u, &g.operators);
                if s > best.0 + 1e-15 {
                    best = (s, c);
                }
            }
            let mut r = OutcomeReversal::from_success(candidates[best.1].clone(), 1.0)?;
            r.lambda_star = f64::NAN;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReversalPlan::new(ReversalKind::Unitary, per_outcome))
}

/// `max_i ‖R^i M_i − λ^i I‖` over outcomes, using the operator each
/// instrument was built from when an outcome has several hidden operators.
pub fn verify_reversal(ms: &MeasurementSet, plan: &ReversalPlan) -> Result<f64> {
    if ms.len() != plan.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes but {} instruments",
            ms.len(),
            plan.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (g, r) in ms.groups().iter().zip(plan.outcomes()) {
        let m = if g.operators.len() == 1 {
            &g.operators[0]
        } else {
            r.reference
                .as_ref()
                .ok_or_else(|| Error::Invalid("plan carries no reference operator".into()))?
        };
        let lambda = if r.lambda_star.is_nan() {
            0.0
        } else {
            r.lambda_star
        };
        let d = m.cols();
        let resid = op_norm(&(&(&r.success * m) - &ComplexMatrix::identity(d).scale_real(lambda)));
        worst = worst.max(resid);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{bell_basis, build_measurement, tilted_joint_basis};
    use crate::states::{kraus_damping, kraus_dephasing, kraus_depolarizing, tilted_pair};
    use crate::tensor::phase_aligned_distance;

    fn noiseless(theta: f64) -> MeasurementSet {
        build_measurement(&tilted_pair(theta).unwrap(), bell_basis(), &[]).unwrap()
    }

    #[test]
    fn bell_outcome_reversal_matches_closed_form() {
        let theta: f64 = 1.0;
        let plan = optimal_reversal(&noiseless(theta)).unwrap();
        let expected = ComplexMatrix::diag_real(&[(theta / 2.0).tan(), 1.0]);
        assert!(phase_aligned_distance(&plan.outcome(0).success, &expected) < 1e-12);
        for (i, u) in pauli::frame().iter().enumerate() {
            let e = &u.dagger() * &expected;
            assert!(
                phase_aligned_distance(&plan.outcome(i).success, &e) < 1e-12,
                "outcome {i}"
            );
        }
        assert!(plan.instrument_residual() < 1e-10);
    }

    #[test]
    fn maximal_entanglement_is_deterministic() {
        let ms = noiseless(PI / 2.0);
        let plan = optimal_reversal(&ms).unwrap();
        for (i, o) in plan.outcomes().iter().enumerate() {
            assert!(is_unitary(&o.success, 1e-12));
            assert!(op_norm(&o.failure) < 1e-7, "outcome {i}");
            assert!((o.lambda_star - 0.5).abs() < 1e-12);
        }
        assert!(verify_reversal(&ms, &plan).unwrap() < 1e-12);
    }

    #[test]
    fn tilted_basis_case_split() {
        for &(theta, phi) in &[(1.2, 0.5), (0.5, 1.2), (0.9, 0.9)] {
            let (ct, st) = ((theta / 2.0 as f64).cos(), (theta / 2.0 as f64).sin());
            let (cp, sp) = ((phi / 2.0 as f64).cos(), (phi / 2.0 as f64).sin());
            let ms = build_measurement(
                &tilted_pair(theta).unwrap(),
                tilted_joint_basis(phi).unwrap(),
                &[],
            )
            .unwrap();
            let plan = optimal_reversal(&ms).unwrap();
            assert!(verify_reversal(&ms, &plan).unwrap() < 1e-10);
            let l: Vec<f64> = plan.lambda_stars();
            let expected = [
                (cp * ct).min(sp * st),
                (sp * ct).min(cp * st),
                (sp * ct).min(cp * st),
                (cp * ct).min(sp * st),
            ];
            for (a, b) in l.iter().zip(expected) {
                assert!((a - b).abs() < 1e-12);
            }
            let total: f64 = l.iter().map(|x| x * x).sum();
            let m = theta.min(phi);
            assert!((total - 2.0 * (m / 2.0).sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn verify_detects_swapped_plan() {
        let ms = noiseless(1.0);
        let plan = optimal_reversal(&ms).unwrap();
        assert!(verify_reversal(&ms, &plan).unwrap() < 1e-12);
        assert!(verify_reversal(&ms, &plan.swapped(0, 2)).unwrap() > 0.1);
    }

    #[test]
    fn zero_lambda_projects_on_kernel() {
        let ms = noiseless(0.0);
        let plan = optimal_reversal(&ms).unwrap();
        for o in plan.outcomes() {
            assert_eq!(o.lambda_star, 0.0);
            assert!(plan.instrument_residual() < 1e-10);
        }
        assert!(verify_reversal(&ms, &plan).unwrap() < 1e-12);
    }

    #[test]
    fn coarse_damping_matches_closed_form() {
        let (theta, d): (f64, f64) = (1.1, 0.3);
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            bell_basis(),
            &[kraus_damping(d).unwrap()],
        )
        .unwrap();
        let plan = coarse_optimal_reversal(&ms, &RecombinationStrategy::canonical()).unwrap();
        let core = ComplexMatrix::diag_real(&[(1.0 - d).sqrt() * (theta / 2.0).tan(), 1.0]);
        for (i, u) in pauli::frame().iter().enumerate() {
            let e = &u.dagger() * &core;
            assert!(phase_aligned_distance(&plan.outcome(i).success, &e) < 1e-12);
            assert_eq!(plan.outcome(i).hidden_index, Some(0));
        }
        assert!(plan.instrument_residual() < 1e-10);
    }

    #[test]
    fn coarse_depolarizing_matches_closed_form() {
        let (theta, d): (f64, f64) = (0.8, 0.6);
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            bell_basis(),
            &[kraus_depolarizing(d).unwrap()],
        )
        .unwrap();
        let plan = coarse_optimal_reversal(&ms, &RecombinationStrategy::canonical()).unwrap();
        let core = ComplexMatrix::diag_real(&[(theta / 2.0).tan(), 1.0]);
        for (i, u) in pauli::frame().iter().enumerate() {
            let e = &u.dagger() * &core;
            assert!(phase_aligned_distance(&plan.outcome(i).success, &e) < 1e-12);
        }
    }

    #[test]
    fn coarse_degenerates_without_noise() {
        let theta = 0.9;
        let plain = optimal_reversal(&noiseless(theta)).unwrap();
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            bell_basis(),
            &[kraus_damping(0.0).unwrap()],
        )
        .unwrap();
        let coarse = coarse_optimal_reversal(&ms, &RecombinationStrategy::canonical()).unwrap();
        for (a, b) in plain.outcomes().iter().zip(coarse.outcomes()) {
            assert!(op_norm(&(&a.success - &b.success)) < 1e-12);
            assert!((a.lambda_star - b.lambda_star).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_search_never_loses_to_canonical() {
        for ch in [
            kraus_damping(0.5),
            kraus_dephasing(0.7),
            kraus_depolarizing(0.9),
        ] {
            let ms = build_measurement(&tilted_pair(1.0).unwrap(), bell_basis(), &[ch.unwrap()])
                .unwrap();
            let can = coarse_optimal_reversal(&ms, &RecombinationStrategy::canonical()).unwrap();
            let grid =
                coarse_optimal_reversal(&ms, &RecombinationStrategy::grid_search(8)).unwrap();
            let refined =
                coarse_optimal_reversal(&ms, &RecombinationStrategy::refine(8, 20)).unwrap();
            for i in 0..4 {
                let (c, g, r) = (
                    can.outcome(i).lambda_star,
                    grid.outcome(i).lambda_star,
                    refined.outcome(i).lambda_star,
                );
                assert!(g >= c - 1e-12 && r >= g - 1e-12, "{c} {g} {r}");
            }
            assert!(grid.instrument_residual() < 1e-10);
        }
        assert!(
            coarse_optimal_reversal(&noiseless(1.0), &RecombinationStrategy::grid_search(0))
                .is_err()
        );
    }

    #[test]
    fn lambda_min_closed_form_agrees_with_svd() {
        let m = ComplexMatrix::from_rows(&[
            [crate::tensor::c(0.3, 0.1), crate::tensor::c(-0.2, 0.4)],
            [crate::tensor::c(0.05, 0.0), crate::tensor::c(0.7, -0.3)],
        ]);
        assert!((lambda_min(&m) - svd_vdu(&m).unwrap().lambda_min()).abs() < 1e-14);
        assert_eq!(lambda_min(&ComplexMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn unitary_reversal_picks_pauli_inverse() {
        let ms = noiseless(1.0);
        let plan = unitary_reversal(&ms, &pauli::frame()).unwrap();
        for (i, u) in pauli::frame().iter().enumerate() {
            assert!(phase_aligned_distance(&plan.outcome(i).success, &u.dagger()) < 1e-12);
            assert!(op_norm(&plan.outcome(i).failure) < 1e-7);
        }
        assert!(unitary_reversal(&ms, &[]).is_err());
        assert!(unitary_reversal(&ms, &[ComplexMatrix::diag_real(&[1.0, 0.5])]).is_err());
    }

    #[test]
    fn custom_plan_rejects_expansions() {
        assert!(ReversalPlan::custom(vec![ComplexMatrix::diag_real(&[1.5, 1.0])]).is_err());
        let p = ReversalPlan::custom(vec![ComplexMatrix::diag_real(&[0.25, 1.0])]).unwrap();
        assert!(p.instrument_residual() < 1e-12);
    }
}
