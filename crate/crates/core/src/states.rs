//! Channel states, Kraus noise models and input-state ensembles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::tensor::{
    c, hermitian_eigen, is_unitary, kron, kron_vec, op_norm, pauli, r, ComplexMatrix, ModeShape,
    C64, ONE, RECON_TOL, ZERO,
};

const NORM_TOL: f64 = 1e-12;

/// Normalized state vector over a composite space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    amplitudes: Vec<C64>,
    shape: ModeShape,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>, shape: ModeShape) -> Result<Self> {
        if amplitudes.len() != shape.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for shape {:?}",
                amplitudes.len(),
                shape.dims()
            )));
        }
        let n2 = norm_sqr(&amplitudes);
        if !n2.is_finite() || (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n2));
        }
        Ok(Self { amplitudes, shape })
    }

    /// Normalizes `amplitudes` before validating.
    pub fn normalized(amplitudes: Vec<C64>, shape: ModeShape) -> Result<Self> {
        let n = norm_sqr(&amplitudes).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized(n * n));
        }
        Self::new(amplitudes.into_iter().map(|z| z / n).collect(), shape)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(shape: ModeShape, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; shape.total_dim()];
        *amps
            .get_mut(index)
            .ok_or_else(|| Error::Invalid(format!("basis index {index} out of range")))? = ONE;
        Self::new(amps, shape)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn shape(&self) -> &ModeShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Result<Self> {
        self.shape = ModeShape::new(self.shape.dims().to_vec(), labels.to_vec())?;
        Ok(self)
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        PureState::new(
            kron_vec(&self.amplitudes, &other.amplitudes),
            self.shape.concat(&other.shape)?,
        )
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
            shape: self.shape.clone(),
        }
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Positive unit-trace operator over a composite space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    shape: ModeShape,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix, shape: ModeShape) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() != shape.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for shape {:?}",
                matrix.rows(),
                matrix.cols(),
                shape.dims()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite);
        }
        if op_norm(&(&matrix - &matrix.dagger())) > RECON_TOL {
            return Err(Error::Invalid("density matrix is not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > RECON_TOL || tr.im.abs() > RECON_TOL {
            return Err(Error::Invalid(format!("density matrix trace {tr}")));
        }
        let (vals, _) = hermitian_eigen(&matrix);
        if vals[0] < -RECON_TOL {
            return Err(Error::Invalid(format!(
                "density matrix has negative eigenvalue {}",
                vals[0]
            )));
        }
        Ok(Self { matrix, shape })
    }

    pub fn maximally_mixed(shape: ModeShape) -> Self {
        let n = shape.total_dim();
        Self {
            matrix: ComplexMatrix::identity(n).scale_real(1.0 / n as f64),
            shape,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn shape(&self) -> &ModeShape {
        &self.shape
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix {
            matrix: kron(&self.matrix, &other.matrix),
            shape: self.shape.concat(&other.shape)?,
        })
    }

    /// Spectral ensemble `{(p_k, |Ψ_k⟩)}` with `p_k > tol`, largest weight first.
    pub fn spectral_ensemble(&self, tol: f64) -> Vec<(f64, PureState)> {
        let (vals, vecs) = hermitian_eigen(&self.matrix);
        vals.into_iter()
            .zip(vecs)
            .rev()
            .filter(|(p, _)| *p > tol)
            .map(|(p, v)| {
                let state = PureState::normalized(v, self.shape.clone())
                    .expect("eigenvectors are normalized");
                (p, state)
            })
            .collect()
    }

    /// Traces out every mode not listed in `keep`; kept modes retain their
    /// original relative order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<ComplexMatrix> {
        partial_trace_raw(&self.matrix, &self.shape, keep)
    }
}

/// Partial trace of any operator on `shape`, keeping the listed modes in their
/// original relative order.
pub fn partial_trace_raw(
    matrix: &ComplexMatrix,
    shape: &ModeShape,
    keep: &[&str],
) -> Result<ComplexMatrix> {
    let dims = shape.dims();
    let mut kept = Vec::new();
    for label in keep {
        kept.push(
            shape
                .position(label)
                .ok_or_else(|| Error::Mode(format!("unknown mode `{label}`")))?,
        );
    }
    kept.sort_unstable();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let kd: usize = kept.iter().map(|&i| dims[i]).product();
    let td: usize = traced.iter().map(|&i| dims[i]).product();
    let strides = strides(dims);
    let flat = |kidx: usize, tidx: usize| -> usize {
        let mut idx = 0;
        let mut k = kidx;
        for &m in kept.iter().rev() {
            idx += (k % dims[m]) * strides[m];
            k /= dims[m];
        }
        let mut t = tidx;
        for &m in traced.iter().rev() {
            idx += (t % dims[m]) * strides[m];
            t /= dims[m];
        }
        idx
    };
    Ok(ComplexMatrix::from_fn(kd, kd, |i, j| {
        (0..td).map(|t| matrix[(flat(i, t), flat(j, t))]).sum()
    }))
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` on mode `position`.
pub fn embed_on_mode(op: &ComplexMatrix, shape: &ModeShape, position: usize) -> ComplexMatrix {
    let dims = shape.dims();
    let before: usize = dims[..position].iter().product();
    let after: usize = dims[position + 1..].iter().product();
    kron(
        &kron(&ComplexMatrix::identity(before), op),
        &ComplexMatrix::identity(after),
    )
}

/// Which textbook noise model a channel came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Damping,
    Dephasing,
    Depolarizing,
    Custom,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "damping" => Ok(Self::Damping),
            "dephasing" => Ok(Self::Dephasing),
            "depolarizing" => Ok(Self::Depolarizing),
            other => Err(Error::Invalid(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Completeness-satisfying Kraus set acting on one named mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausChannel {
    operators: Vec<ComplexMatrix>,
    target_mode: String,
    strength: f64,
    kind: NoiseKind,
}

impl KrausChannel {
    pub fn new(
        operators: Vec<ComplexMatrix>,
        target_mode: impl Into<String>,
        strength: f64,
    ) -> Result<Self> {
        let ch = Self {
            operators,
            target_mode: target_mode.into(),
            strength,
            kind: NoiseKind::Custom,
        };
        ch.validate()?;
        Ok(ch)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .operators
            .first()
            .ok_or_else(|| Error::Invalid("Kraus channel without operators".into()))?;
        let d = first.rows();
        if self
            .operators
            .iter()
            .any(|e| e.rows() != d || e.cols() != d)
        {
            return Err(Error::DimensionMismatch(
                "Kraus operators differ in shape".into(),
            ));
        }
        let residual = self.completeness_residual();
        if residual > RECON_TOL {
            return Err(Error::Incomplete {
                residual,
                threshold: RECON_TOL,
            });
        }
        Ok(())
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn target_mode(&self) -> &str {
        &self.target_mode
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.operators[0].rows()
    }

    /// Same operators retargeted to another mode.
    pub fn on(mut self, mode: impl Into<String>) -> Self {
        self.target_mode = mode.into();
        self
    }

    /// `‖Σ_k E_k†E_k − I‖`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.operators[0].rows();
        let sum = self
            .operators
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, e| {
                &acc + &(&e.dagger() * e)
            });
        op_norm(&(&sum - &ComplexMatrix::identity(d)))
    }
}

/// Amplitude damping: `E₁ = |0⟩⟨0| + √(1−D)|1⟩⟨1|`, `E₂ = √D|0⟩⟨1|`.
pub fn kraus_damping(strength: f64) -> Result<KrausChannel> {
    check_range("D", strength, 0.0, 1.0, "[0, 1]")?;
    let e1 = ComplexMatrix::diag_real(&[1.0, (1.0 - strength).sqrt()]);
    let e2 = ComplexMatrix::from_real_rows(&[[0.0, strength.sqrt()], [0.0, 0.0]]);
    Ok(KrausChannel {
        operators: vec![e1, e2],
        target_mode: "b".into(),
        strength,
        kind: NoiseKind::Damping,
    })
}

/// Dephasing: `E₁ = |0⟩⟨0| + √(1−D)|1⟩⟨1|`, `E₂ = √D|1⟩⟨1|`.
pub fn kraus_dephasing(strength: f64) -> Result<KrausChannel> {
    check_range("D", strength, 0.0, 1.0, "[0, 1]")?;
    let e1 = ComplexMatrix::diag_real(&[1.0, (1.0 - strength).sqrt()]);
    let e2 = ComplexMatrix::diag_real(&[0.0, strength.sqrt()]);
    Ok(KrausChannel {
        operators: vec![e1, e2],
        target_mode: "b".into(),
        strength,
        kind: NoiseKind::Dephasing,
    })
}

/// Depolarizing: `√(1−3D/4)·I, √(D/4)·σx, √(D/4)·σy, √(D/4)·σz`.
pub fn kraus_depolarizing(strength: f64) -> Result<KrausChannel> {
    check_range("D", strength, 0.0, 1.0, "[0, 1]")?;
    let a = (1.0 - 0.75 * strength).sqrt();
    let b = (strength / 4.0).sqrt();
    Ok(KrausChannel {
        operators: vec![
            pauli::id().scale_real(a),
            pauli::x().scale_real(b),
            pauli::y().scale_real(b),
            pauli::z().scale_real(b),
        ],
        target_mode: "b".into(),
        strength,
        kind: NoiseKind::Depolarizing,
    })
}

pub fn kraus(kind: NoiseKind, strength: f64) -> Result<KrausChannel> {
    match kind {
        NoiseKind::Damping => kraus_damping(strength),
        NoiseKind::Dephasing => kraus_dephasing(strength),
        NoiseKind::Depolarizing => kraus_depolarizing(strength),
        NoiseKind::Custom => Err(Error::Invalid(
            "custom channels need explicit operators".into(),
        )),
    }
}

/// Unitary mixing matrix over Kraus indices.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryRecombination {
    mixing: ComplexMatrix,
}

impl UnitaryRecombination {
    pub fn new(mixing: ComplexMatrix) -> Result<Self> {
        if !is_unitary(&mixing, RECON_TOL) {
            return Err(Error::Invalid("recombination matrix is not unitary".into()));
        }
        Ok(Self { mixing })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mixing: ComplexMatrix::identity(n),
        }
    }

    /// General U(2) element from four angles.
    pub fn su2(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        let g = C64::from_polar(1.0, alpha);
        let (cg, sg) = (gamma.cos(), gamma.sin());
        let m = ComplexMatrix::from_rows(&[
            [
                g * C64::from_polar(cg, beta),
                g * C64::from_polar(sg, delta),
            ],
            [
                -g * C64::from_polar(sg, -delta),
                g * C64::from_polar(cg, -beta),
            ],
        ]);
        Self { mixing: m }
    }

    pub fn mixing(&self) -> &ComplexMatrix {
        &self.mixing
    }

    pub fn dim(&self) -> usize {
        self.mixing.rows()
    }

    /// Applies the mixing to any indexed family: `out_j = Σ_k mix[j,k] · in_k`.
    pub fn mix(&self, items: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
        if items.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} recombination applied to {} operators",
                self.dim(),
                self.dim(),
                items.len()
            )));
        }
        let (rr, cc) = (items[0].rows(), items[0].cols());
        Ok((0..self.dim())
            .map(|j| {
                items
                    .iter()
                    .enumerate()
                    .fold(ComplexMatrix::zeros(rr, cc), |acc, (k, e)| {
                        &acc + &e.scale(self.mixing[(j, k)])
                    })
            })
            .collect())
    }
}

/// `E'_j = Σ_k mix[j,k] E_k`; represents the same channel.
pub fn recombine(channel: &KrausChannel, mix: &UnitaryRecombination) -> Result<KrausChannel> {
    let operators = mix.mix(&channel.operators)?;
    let out = KrausChannel {
        operators,
        target_mode: channel.target_mode.clone(),
        strength: channel.strength,
        kind: channel.kind,
    };
    out.validate()?;
    Ok(out)
}

/// `Σ_k (I ⊗ E_k ⊗ I) ρ (I ⊗ E_k ⊗ I)†` with `E_k` embedded on the target mode.
pub fn apply_channel(state: &DensityMatrix, channel: &KrausChannel) -> Result<DensityMatrix> {
    let pos = state.shape.position(&channel.target_mode).ok_or_else(|| {
        Error::Mode(format!(
            "target mode `{}` not in {:?}",
            channel.target_mode,
            state.shape.labels()
        ))
    })?;
    if state.shape.dims()[pos] != channel.dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel of dimension {} on mode of dimension {}",
            channel.dim(),
            state.shape.dims()[pos]
        )));
    }
    let n = state.matrix.rows();
    let out = channel
        .operators
        .iter()
        .fold(ComplexMatrix::zeros(n, n), |acc, e| {
            let big = embed_on_mode(e, &state.shape, pos);
            &acc + &(&(&big * &state.matrix) * &big.dagger())
        });
    Ok(DensityMatrix {
        matrix: out,
        shape: state.shape.clone(),
    })
}

/// `cos(θ/2)|00⟩ + sin(θ/2)|11⟩` on modes `(abar, b)`, `θ ∈ [0, π/2]`.
pub fn tilted_pair(theta: f64) -> Result<PureState> {
    check_range("theta", theta, 0.0, PI / 2.0, "[0, pi/2]")?;
    let (h_cos, h_sin) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    PureState::new(
        vec![r(h_cos), ZERO, ZERO, r(h_sin)],
        ModeShape::qubits(&["abar", "b"]),
    )
}

/// `cos(θ/2)|000⟩ + sin(θ/2)|111⟩` on modes `(abar, b, c)`.
pub fn ghz_tilted(theta: f64) -> Result<PureState> {
    check_range("theta", theta, 0.0, PI / 2.0, "[0, pi/2]")?;
    let mut amps = vec![ZERO; 8];
    amps[0] = r((theta / 2.0).cos());
    amps[7] = r((theta / 2.0).sin());
    PureState::new(amps, ModeShape::qubits(&["abar", "b", "c"]))
}

/// Entanglement degree `E = sin(θ/2)` of the tilted pair.
pub fn entanglement_degree(theta: f64) -> f64 {
    (theta / 2.0).sin()
}

/// Haar-random pure state of dimension `dim` on a single mode `a`.
pub fn haar_sample<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<PureState> {
    if dim < 2 {
        return Err(Error::Invalid(format!(
            "Haar sampling needs dim >= 2, got {dim}"
        )));
    }
    let shape = ModeShape::new(vec![dim], vec!["a"])?;
    PureState::new(haar_amplitudes(dim, rng), shape)
}

pub(crate) fn haar_amplitudes<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim)
            .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n = norm_sqr(&v).sqrt();
        if n > 1e-300 {
            return v.into_iter().map(|z| z / n).collect();
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    HaarMc,
    BlochQuadrature,
    FixedList,
}

/// Weighted list of input states standing in for the Haar integral.
#[derive(Clone, Debug)]
pub struct InputEnsemble {
    kind: EnsembleKind,
    dim: usize,
    amplitudes: Vec<C64>,
    weights: Vec<f64>,
    seed: Option<u64>,
}

impl InputEnsemble {
    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state(&self, i: usize) -> &[C64] {
        &self.amplitudes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[C64], f64)> + '_ {
        self.amplitudes
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// Explicit list; weights are normalized to sum to one.
    pub fn fixed(states: &[PureState], weights: &[f64]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if states.len() != weights.len() || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Invalid(
                "ensemble weights must be finite and nonnegative".into(),
            ));
        }
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch(
                "ensemble states differ in dimension".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("ensemble weights sum to zero".into()));
        }
        Ok(Self {
            kind: EnsembleKind::FixedList,
            dim,
            amplitudes: states
                .iter()
                .flat_map(|s| s.amplitudes().iter().copied())
                .collect(),
            weights: weights.iter().map(|w| w / total).collect(),
            seed: None,
        })
    }

    /// `samples` Haar-random states of dimension `dim`, equal weights.
    pub fn haar_mc(dim: usize, samples: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid(format!(
                "Haar ensemble needs dim >= 2, got {dim}"
            )));
        }
        if samples == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let mut rng = rng_from_seed(seed);
        let mut amplitudes = Vec::with_capacity(samples * dim);
        for _ in 0..samples {
            amplitudes.extend(haar_amplitudes(dim, &mut rng));
        }
        Ok(Self {
            kind: EnsembleKind::HaarMc,
            dim,
            amplitudes,
            weights: vec![1.0 / samples as f64; samples],
            seed: Some(seed),
        })
    }
}

/// Qubit states `cos(χ/2)|0⟩ + e^{iφ} sin(χ/2)|1⟩` on a Gauss–Legendre grid in
/// `cos χ` times a uniform azimuthal grid.
pub fn bloch_quadrature(n_polar: usize, n_azimuth: usize) -> Result<InputEnsemble> {
    if n_polar < 2 {
        return Err(Error::Invalid(format!("n_polar = {n_polar} < 2")));
    }
    if n_azimuth < 4 {
        return Err(Error::Invalid(format!("n_azimuth = {n_azimuth} < 4")));
    }
    let (nodes, gl_weights) = gauss_legendre(n_polar);
    let mut amplitudes = Vec::with_capacity(2 * n_polar * n_azimuth);
    let mut weights = Vec::with_capacity(n_polar * n_azimuth);
    for (u, w) in nodes.iter().zip(&gl_weights) {
        let (a0, a1) = (((1.0 + u) / 2.0).sqrt(), ((1.0 - u) / 2.0).sqrt());
        for q in 0..n_azimuth {
            let phi = 2.0 * PI * q as f64 / n_azimuth as f64;
            amplitudes.push(r(a0));
            amplitudes.push(C64::from_polar(a1, phi));
            weights.push(w / 2.0 / n_azimuth as f64);
        }
    }
    Ok(InputEnsemble {
        kind: EnsembleKind::BlochQuadrature,
        dim: 2,
        amplitudes,
        weights,
        seed: None,
    })
}

/// Polar nodes used by the default qubit quadrature; matches the 1-D rule
/// used by the closed-form fidelity integrals.
pub const DEFAULT_POLAR_NODES: usize = 64;
pub const DEFAULT_AZIMUTH_NODES: usize = 6;

pub fn default_qubit_quadrature() -> InputEnsemble {
    bloch_quadrature(DEFAULT_POLAR_NODES, DEFAULT_AZIMUTH_NODES).expect("valid default grid")
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream seed for a grid cell: `hash(base, i, j, ...)`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
