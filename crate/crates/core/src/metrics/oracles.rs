//! Closed-form fidelities for the tilted pair under single-mode noise.
//!
//! Haar-averaged integrands of a qubit depend only on `u = |⟨0|ψ⟩|²`, which is
//! uniform on `[0, 1]`; the integrals use Gauss–Legendre in `u`.

use std::f64::consts::PI;

use crate::error::{check_range, Error, Result};
use crate::states::gauss_legendre_unit;

pub const ORACLE_NODES: usize = 64;

pub const ORACLE_NAMES: [&str; 8] = [
    "fu_damping",
    "fr_damping_b",
    "fr_damping_abar",
    "fu_dephasing",
    "fr_dephasing",
    "fu_depolarizing",
    "fu_depolarizing_printed",
    "fr_depolarizing",
];

/// `∫₀¹ f(u) du` with the oracle rule.
pub fn integrate_unit(f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre_unit(ORACLE_NODES);
    x.iter().zip(&w).map(|(u, w)| w * f(*u)).sum()
}

fn halves(theta: f64) -> (f64, f64, f64) {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    (c * c, s * s, (s / c).powi(2))
}

/// Conditional-unitary fidelity under amplitude damping (either mode).
pub fn fu_damping(theta: f64, d: f64) -> f64 {
    (4.0 - d + theta.cos() - (1.0 - d) * theta.cos() + 2.0 * (1.0 - d).sqrt() * theta.sin()) / 6.0
}

pub fn fu_dephasing(theta: f64, d: f64) -> f64 {
    (2.0 + (1.0 - d).sqrt() * theta.sin()) / 3.0
}

/// `(1−D)·(2 + sin θ)/3 + D/2`: the Pauli-corrected output shrinks by `1−D`.
pub fn fu_depolarizing(theta: f64, d: f64) -> f64 {
    (4.0 - d + 2.0 * (1.0 - d) * theta.sin()) / 6.0
}

/// The commonly quoted variant with `√(1−D)`; kept for comparison only,
/// it does not follow from the depolarizing Kraus set.
pub fn fu_depolarizing_printed(theta: f64, d: f64) -> f64 {
    (4.0 - d + 2.0 * (1.0 - d).sqrt() * theta.sin()) / 6.0
}

/// Reversal fidelity, damping on the receiver's qubit.
pub fn fr_damping_b(theta: f64, d: f64) -> f64 {
    let (c2, s2, t2) = halves(theta);
    integrate_unit(|u| {
        let v = 1.0 - u;
        let num = 1.0 + d * u * v * t2;
        num / (1.0 + d * v * t2) * (u * c2 + v * s2) + num / (1.0 + d * u * t2) * (u * s2 + v * c2)
    })
}

/// Reversal fidelity, damping on the sender's half with the adapted basis,
/// conditioned on the two outcomes that are kept.
pub fn fr_damping_abar(theta: f64, d: f64) -> f64 {
    let (c2, s2, _) = halves(theta);
    integrate_unit(|u| {
        let v = 1.0 - u;
        let a1 = u * c2 + v * s2 + d * u * s2;
        let a3 = v * c2 + u * s2 + d * v * s2;
        let f1 = (1.0 + d * u * v) / (1.0 + d * u);
        let f3 = (1.0 + d * u * v) / (1.0 + d * v);
        if a1 + a3 == 0.0 {
            0.0
        } else {
            (a1 * f1 + a3 * f3) / (a1 + a3)
        }
    })
}

pub fn fr_dephasing(theta: f64, d: f64) -> f64 {
    let (c2, s2, _) = halves(theta);
    integrate_unit(|u| {
        let v = 1.0 - u;
        (1.0 - d + d * v * v) / (1.0 - d + d * v) * (u * c2 + v * s2)
            + (1.0 - d + d * u * u) / (1.0 - d + d * u) * (u * s2 + v * c2)
    })
}

/// Depolarizing noise on the sender's half of the pair.
pub fn fr_depolarizing(_theta: f64, d: f64) -> f64 {
    1.0 - d / 2.0
}

/// Evaluates an oracle by name.
pub fn closed_form_oracle(name: &str, theta: f64, d: f64) -> Result<f64> {
    let f: fn(f64, f64) -> f64 = match name {
        "fu_damping" => fu_damping,
        "fr_damping_b" => fr_damping_b,
        "fr_damping_abar" => fr_damping_abar,
        "fu_dephasing" => fu_dephasing,
        "fr_dephasing" => fr_dephasing,
        "fu_depolarizing" => fu_depolarizing,
        "fu_depolarizing_printed" => fu_depolarizing_printed,
        "fr_depolarizing" => fr_depolarizing,
        other => return Err(Error::UnknownOracle(other.to_string())),
    };
    check_range("theta", theta, 0.0, PI / 2.0, "[0, pi/2]")?;
    check_range("D", d, 0.0, 1.0, "[0, 1]")?;
    Ok(f(theta, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let v = closed_form_oracle("fu_damping", PI / 2.0, 0.5).unwrap();
        assert!((v - (3.5 + 2.0 * 0.5f64.sqrt()) / 6.0).abs() < 1e-15);
        assert!((v - 0.81904).abs() < 1e-5);
        assert!((closed_form_oracle("fu_damping", PI / 2.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((closed_form_oracle("fr_depolarizing", 0.3, 0.3).unwrap() - 0.85).abs() < 1e-15);
        assert!(matches!(
            closed_form_oracle("nope", 0.1, 0.1),
            Err(Error::UnknownOracle(_))
        ));
        assert!(closed_form_oracle("fu_damping", 2.0, 0.1).is_err());
    }

    #[test]
    fn noiseless_limits() {
        for theta in [0.2, 0.9, PI / 2.0] {
            assert!((fr_damping_b(theta, 0.0) - 1.0).abs() < 1e-14);
            assert!((fr_dephasing(theta, 0.0) - 1.0).abs() < 1e-14);
            assert!((fr_damping_abar(theta, 0.0) - 1.0).abs() < 1e-14);
            let fu = (2.0 + f64::sin(theta)) / 3.0;
            for f in [fu_damping, fu_dephasing, fu_depolarizing] {
                assert!((f(theta, 0.0) - fu).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn depolarizing_unitary_forms() {
        // maximal entanglement: shrink factor 1-D on all three Bloch axes
        assert!((fu_depolarizing(PI / 2.0, 0.4) - 0.8).abs() < 1e-15);
        assert!((fu_depolarizing_printed(PI / 2.0, 0.4) - 0.8).abs() > 0.05);
        assert!((fu_depolarizing_printed(0.7, 0.0) - fu_depolarizing(0.7, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn dephasing_endpoint() {
        assert!((fr_dephasing(PI / 2.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((fu_dephasing(PI / 2.0, 1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn beyond_classical_cell() {
        let (theta, d) = (PI / 4.0, 0.99);
        assert!((fu_damping(theta, d) - 0.6419095116019986).abs() < 1e-14);
        assert!((fu_damping(theta, d) - 0.64189).abs() < 5e-5);
        assert!(fu_damping(theta, d) < 2.0 / 3.0);
        assert!(fr_damping_b(theta, d) > 2.0 / 3.0);
    }

    #[test]
    fn rule_is_converged() {
        // 64 nodes agree with a much finer rule on a hard cell
        let (x, w) = gauss_legendre_unit(200);
        let (c2, s2, _) = halves(1.2);
        let d = 0.99;
        let fine: f64 = x
            .iter()
            .zip(&w)
            .map(|(u, w)| {
                let v = 1.0 - u;
                w * ((1.0 - d + d * v * v) / (1.0 - d + d * v) * (u * c2 + v * s2)
                    + (1.0 - d + d * u * u) / (1.0 - d + d * u) * (u * s2 + v * c2))
            })
            .sum();
        assert!((fine - fr_dephasing(1.2, d)).abs() < 1e-10);
    }
}
