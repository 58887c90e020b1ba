//! Joint-measurement bases and the nonlocal measurement operators they induce
//! on a (possibly noisy, possibly mixed) entangled channel.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{check_range, Error, Result};
use crate::states::{strides, DensityMatrix, KrausChannel, PureState};
use crate::tensor::{op_norm, r, svd_vdu, ComplexMatrix, ModeShape, C64, RECON_TOL, ZERO};

/// Threshold above which a constructed set is rejected as incomplete.
pub const COMPLETENESS_FAIL: f64 = 1e-8;

/// Orthonormal basis over a set of labelled modes.
#[derive(Clone, Debug, PartialEq)]
pub struct JointBasis {
    name: String,
    vectors: Vec<PureState>,
}

impl JointBasis {
    /// Validates orthonormality (1e-10) and completeness of the list.
    pub fn new(name: impl Into<String>, vectors: Vec<PureState>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Invalid("empty basis".into()))?;
        let shape = first.shape().clone();
        if vectors.iter().any(|v| v.shape() != &shape) {
            return Err(Error::Mode("basis vectors live on different modes".into()));
        }
        if vectors.len() != shape.total_dim() {
            return Err(Error::Invalid(format!(
                "{} vectors cannot span a {}-dimensional space",
                vectors.len(),
                shape.total_dim()
            )));
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (a.inner(b) - r(expected)).norm() > RECON_TOL {
                    return Err(Error::Invalid(format!(
                        "basis vectors {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            vectors,
        })
    }

    fn from_rows(name: &str, labels: &[&str], rows: &[[C64; 4]]) -> Self {
        let shape = ModeShape::qubits(labels);
        let vectors = rows
            .iter()
            .map(|row| PureState::normalized(row.to_vec(), shape.clone()).expect("nonzero row"))
            .collect();
        Self::new(name, vectors).expect("orthonormal by construction")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vectors(&self) -> &[PureState] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn shape(&self) -> &ModeShape {
        self.vectors[0].shape()
    }

    /// Same vectors assigned to different mode labels.
    pub fn on(self, labels: &[&str]) -> Result<Self> {
        let vectors = self
            .vectors
            .into_iter()
            .map(|v| v.with_labels(labels))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: self.name,
            vectors,
        })
    }

    /// `Gram[i][j] = ⟨v_i|v_j⟩`.
    pub fn gram(&self) -> ComplexMatrix {
        let n = self.len();
        ComplexMatrix::from_fn(n, n, |i, j| self.vectors[i].inner(&self.vectors[j]))
    }
}

/// `Φ⁺, Φ⁻, Ψ⁺, Ψ⁻` on modes `(a, abar)`, with `Ψ⁻ = (|01⟩ − |10⟩)/√2`.
pub fn bell_basis() -> JointBasis {
    let h = r(0.5f64.sqrt());
    JointBasis::from_rows(
        "bell",
        &["a", "abar"],
        &[
            [h, ZERO, ZERO, h],
            [h, ZERO, ZERO, -h],
            [ZERO, h, h, ZERO],
            [ZERO, h, -h, ZERO],
        ],
    )
}

/// Tilted basis on `(a, abar)`; equals [`bell_basis`] at `φ = π/2`.
pub fn tilted_joint_basis(phi: f64) -> Result<JointBasis> {
    check_range("phi", phi, 0.0, PI / 2.0, "[0, pi/2]")?;
    let (cp, sp) = (r((phi / 2.0).cos()), r((phi / 2.0).sin()));
    Ok(JointBasis::from_rows(
        "tilted",
        &["a", "abar"],
        &[
            [cp, ZERO, ZERO, sp],
            [sp, ZERO, ZERO, -cp],
            [ZERO, cp, sp, ZERO],
            [ZERO, sp, -cp, ZERO],
        ],
    ))
}

/// Basis matched to amplitude damping on the sender's half of the channel.
pub fn damping_adapted_basis(strength: f64) -> Result<JointBasis> {
    check_range("D", strength, 0.0, 1.0, "[0, 1]")?;
    let n = (2.0 - strength).sqrt();
    let q = r((1.0 - strength).sqrt() / n);
    let o = r(1.0 / n);
    Ok(JointBasis::from_rows(
        "damping_adapted",
        &["a", "abar"],
        &[
            [q, ZERO, ZERO, o],
            [o, ZERO, ZERO, -q],
            [ZERO, o, q, ZERO],
            [ZERO, q, -o, ZERO],
        ],
    ))
}

/// Basis of the probabilistic protocol matched to `(|00⟩ + n|11⟩)/√(1+|n|²)`.
pub fn agrawal_basis(n: C64) -> Result<JointBasis> {
    if !n.is_finite() || n.norm() > 1.0 + 1e-12 {
        return Err(Error::OutOfRange {
            name: "|n|",
            value: n.norm(),
            range: "[0, 1]",
        });
    }
    let one = r(1.0);
    Ok(JointBasis::from_rows(
        "agrawal",
        &["a", "abar"],
        &[
            [one, ZERO, ZERO, n],
            [n.conj(), ZERO, ZERO, -one],
            [ZERO, n, one, ZERO],
            [ZERO, one, -n.conj(), ZERO],
        ],
    ))
}

/// Single-qubit basis `cos(φ/2)|0⟩ + sin(φ/2)|1⟩, −sin(φ/2)|0⟩ + cos(φ/2)|1⟩`
/// on a mode named `label`.
pub fn rotated_qubit_basis(phi: f64, label: &str) -> Result<JointBasis> {
    check_range("phi", phi, 0.0, PI / 2.0, "[0, pi/2]")?;
    let (cp, sp) = ((phi / 2.0).cos(), (phi / 2.0).sin());
    let shape = ModeShape::qubits(&[label]);
    JointBasis::new(
        "rotated",
        vec![
            PureState::new(vec![r(cp), r(sp)], shape.clone())?,
            PureState::new(vec![r(-sp), r(cp)], shape)?,
        ],
    )
}

/// Arbitrary measurement `{Π^i}` with `Σ Π†Π = I` on labelled modes.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralJointMeasurement {
    operators: Vec<ComplexMatrix>,
    shape: ModeShape,
}

impl GeneralJointMeasurement {
    pub fn new(operators: Vec<ComplexMatrix>, shape: ModeShape) -> Result<Self> {
        let d = shape.total_dim();
        if operators.is_empty() {
            return Err(Error::Invalid("measurement without operators".into()));
        }
        if operators.iter().any(|p| p.rows() != d || p.cols() != d) {
            return Err(Error::DimensionMismatch(format!(
                "measurement operators must be {d}x{d}"
            )));
        }
        let residual = residual_of(operators.iter(), d);
        if residual > RECON_TOL {
            return Err(Error::Incomplete {
                residual,
                threshold: RECON_TOL,
            });
        }
        Ok(Self { operators, shape })
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn shape(&self) -> &ModeShape {
        &self.shape
    }

    /// `Π^i = Σ_l δ_l |v_l⟩⟨w_l|`; returns `(δ_l, w_l)` for `δ_l > 0`.
    fn weighted_bras(&self, i: usize) -> Vec<(f64, Vec<C64>)> {
        let svd = svd_vdu(&self.operators[i]).expect("finite square operator");
        let d = self.shape.total_dim();
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > 1e-15)
            .map(|(l, s)| (*s, (0..d).map(|col| svd.u[(l, col)].conj()).collect()))
            .collect()
    }
}

impl From<&JointBasis> for GeneralJointMeasurement {
    fn from(basis: &JointBasis) -> Self {
        Self {
            operators: basis
                .vectors
                .iter()
                .map(|v| ComplexMatrix::outer(v.amplitudes(), v.amplitudes()))
                .collect(),
            shape: basis.shape().clone(),
        }
    }
}

/// Either a rank-one basis or a general measurement.
#[derive(Clone, Debug)]
pub enum JointMeasurement {
    Basis(JointBasis),
    General(GeneralJointMeasurement),
}

impl JointMeasurement {
    pub fn shape(&self) -> &ModeShape {
        match self {
            Self::Basis(b) => b.shape(),
            Self::General(g) => g.shape(),
        }
    }

    pub fn outcomes(&self) -> usize {
        match self {
            Self::Basis(b) => b.len(),
            Self::General(g) => g.operators.len(),
        }
    }

    fn weighted_bras(&self, i: usize) -> Vec<(f64, Vec<C64>)> {
        match self {
            Self::Basis(b) => vec![(1.0, b.vectors[i].amplitudes().to_vec())],
            Self::General(g) => g.weighted_bras(i),
        }
    }

    pub fn projector(&self, i: usize) -> ComplexMatrix {
        match self {
            Self::Basis(b) => {
                let v = b.vectors[i].amplitudes();
                ComplexMatrix::outer(v, v)
            }
            Self::General(g) => g.operators[i].clone(),
        }
    }
}

impl From<JointBasis> for JointMeasurement {
    fn from(b: JointBasis) -> Self {
        Self::Basis(b)
    }
}

impl From<&JointBasis> for JointMeasurement {
    fn from(b: &JointBasis) -> Self {
        Self::Basis(b.clone())
    }
}

impl From<GeneralJointMeasurement> for JointMeasurement {
    fn from(g: GeneralJointMeasurement) -> Self {
        Self::General(g)
    }
}

/// Channel resource: pure, an explicit ensemble, or a density matrix.
#[derive(Clone, Debug)]
pub enum ChannelState {
    Pure(PureState),
    Ensemble(Vec<(f64, PureState)>),
    Mixed(DensityMatrix),
}

impl ChannelState {
    fn components(&self) -> Result<Vec<(f64, PureState)>> {
        let comps = match self {
            Self::Pure(p) => vec![(1.0, p.clone())],
            Self::Ensemble(list) => list.clone(),
            Self::Mixed(rho) => rho.spectral_ensemble(1e-14),
        };
        if comps.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let shape = comps[0].1.shape().clone();
        if comps.iter().any(|(_, s)| s.shape() != &shape) {
            return Err(Error::Mode(
                "ensemble members live on different modes".into(),
            ));
        }
        if comps.iter().any(|(p, _)| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Invalid(
                "ensemble weights must be nonnegative".into(),
            ));
        }
        let total: f64 = comps.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > RECON_TOL {
            return Err(Error::Invalid(format!("ensemble weights sum to {total}")));
        }
        Ok(comps)
    }

    pub fn shape(&self) -> &ModeShape {
        match self {
            Self::Pure(p) => p.shape(),
            Self::Ensemble(list) => list[0].1.shape(),
            Self::Mixed(rho) => rho.shape(),
        }
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        Ok(match self {
            Self::Mixed(rho) => rho.clone(),
            _ => {
                let comps = self.components()?;
                let n = comps[0].1.dim();
                let m = comps
                    .iter()
                    .fold(ComplexMatrix::zeros(n, n), |acc, (p, s)| {
                        &acc + &ComplexMatrix::outer(s.amplitudes(), s.amplitudes()).scale_real(*p)
                    });
                DensityMatrix::new(m, comps[0].1.shape().clone())?
            }
        })
    }
}

impl From<PureState> for ChannelState {
    fn from(p: PureState) -> Self {
        Self::Pure(p)
    }
}

impl From<&PureState> for ChannelState {
    fn from(p: &PureState) -> Self {
        Self::Pure(p.clone())
    }
}

impl From<DensityMatrix> for ChannelState {
    fn from(rho: DensityMatrix) -> Self {
        Self::Mixed(rho)
    }
}

/// Hidden refinement of a visible outcome: channel-ensemble member, Kraus
/// index per noise channel, and rank index of a non-projective Π.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct HiddenLabel {
    pub ensemble: usize,
    pub noise: Vec<usize>,
    pub rank: usize,
}

/// Operators sharing one visible outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeGroup {
    /// Zero-based outcome index per measuring party.
    pub label: Vec<usize>,
    pub operators: Vec<ComplexMatrix>,
    pub hidden: Vec<HiddenLabel>,
}

impl OutcomeGroup {
    pub fn single(label: Vec<usize>, operator: ComplexMatrix) -> Self {
        Self {
            label,
            operators: vec![operator],
            hidden: vec![HiddenLabel::default()],
        }
    }

    /// `Σ_k M_k† M_k`.
    pub fn effect(&self) -> ComplexMatrix {
        let d = self.operators[0].cols();
        self.operators
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, m| {
                &acc + &(&m.dagger() * m)
            })
    }

    /// Outcome probability `Σ_k ‖M_k ψ‖²`.
    pub fn probability(&self, psi: &[C64]) -> f64 {
        self.operators
            .iter()
            .map(|m| crate::states::norm_sqr(&m.apply(psi)))
            .sum()
    }
}

/// Nonlocal measurement operators grouped by visible outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    groups: Vec<OutcomeGroup>,
    input_shape: ModeShape,
    output_shape: ModeShape,
}

impl MeasurementSet {
    /// Validates shapes, finiteness and completeness (fails above 1e-8).
    pub fn new(
        groups: Vec<OutcomeGroup>,
        input_shape: ModeShape,
        output_shape: ModeShape,
    ) -> Result<Self> {
        let ms = Self::new_unchecked(groups, input_shape, output_shape)?;
        let residual = ms.completeness_residual();
        if residual > COMPLETENESS_FAIL {
            return Err(Error::Incomplete {
                residual,
                threshold: COMPLETENESS_FAIL,
            });
        }
        Ok(ms)
    }

    /// Shape and finiteness checks only; used for sub-normalized sets.
    pub fn new_unchecked(
        groups: Vec<OutcomeGroup>,
        input_shape: ModeShape,
        output_shape: ModeShape,
    ) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(|g| g.operators.is_empty()) {
            return Err(Error::Invalid("measurement set has an empty group".into()));
        }
        let (din, dout) = (input_shape.total_dim(), output_shape.total_dim());
        for g in &groups {
            if g.hidden.len() != g.operators.len() {
                return Err(Error::Invalid(
                    "hidden labels do not match operators".into(),
                ));
            }
            for m in &g.operators {
                if m.rows() != dout || m.cols() != din {
                    return Err(Error::DimensionMismatch(format!(
                        "operator is {}x{}, expected {dout}x{din}",
                        m.rows(),
                        m.cols()
                    )));
                }
                if !m.is_finite() {
                    return Err(Error::NonFinite);
                }
            }
        }
        Ok(Self {
            groups,
            input_shape,
            output_shape,
        })
    }

    pub fn groups(&self) -> &[OutcomeGroup] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &OutcomeGroup {
        &self.groups[i]
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.total_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_shape.total_dim()
    }

    pub fn input_shape(&self) -> &ModeShape {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &ModeShape {
        &self.output_shape
    }

    /// Operator for a visible outcome label, if it has exactly one operator.
    pub fn operator(&self, label: &[usize]) -> Option<&ComplexMatrix> {
        self.groups
            .iter()
            .find(|g| g.label == label)
            .filter(|g| g.operators.len() == 1)
            .map(|g| &g.operators[0])
    }

    /// `‖Σ_{i,k} M†M − I‖`.
    pub fn completeness_residual(&self) -> f64 {
        residual_of(
            self.groups.iter().flat_map(|g| g.operators.iter()),
            self.input_dim(),
        )
    }

    pub fn outcome_probabilities(&self, psi: &[C64]) -> Vec<f64> {
        self.groups.iter().map(|g| g.probability(psi)).collect()
    }

    /// Unnormalized post-measurement state `Σ_k M_k ρ M_k†` for outcome `i`.
    pub fn reduced_state(&self, i: usize, rho: &ComplexMatrix) -> ComplexMatrix {
        let d = self.output_dim();
        self.groups[i]
            .operators
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, m| {
                &acc + &(&(m * rho) * &m.dagger())
            })
    }

    /// Same set with one operator removed; for exercising the residual check.
    pub fn without_operator(&self, i: usize, k: usize) -> Self {
        let mut out = self.clone();
        out.groups[i].operators.remove(k);
        out.groups[i].hidden.remove(k);
        out.groups.retain(|g| !g.operators.is_empty());
        out
    }
}

fn residual_of<'a>(ops: impl Iterator<Item = &'a ComplexMatrix>, d: usize) -> f64 {
    let sum = ops.fold(ComplexMatrix::zeros(d, d), |acc, m| {
        &acc + &(&m.dagger() * m)
    });
    op_norm(&(&sum - &ComplexMatrix::identity(d)))
}

/// `op_norm(Σ M†M − I)`.
pub fn completeness_residual(ms: &MeasurementSet) -> f64 {
    ms.completeness_residual()
}

/// Mode bookkeeping for contracting measurement bras against a channel.
struct Layout {
    input: ModeShape,
    output: ModeShape,
    /// dims of all modes: inputs first, then channel modes
    dims: Vec<usize>,
    n_input: usize,
    /// for each measured party, combined positions of its modes
    party_positions: Vec<Vec<usize>>,
    /// combined positions of channel modes that are measured
    measured_channel: Vec<usize>,
    /// combined positions of output modes
    output_positions: Vec<usize>,
}

impl Layout {
    fn new(channel: &ModeShape, parties: &[&ModeShape]) -> Result<Self> {
        let mut input_labels: Vec<String> = Vec::new();
        let mut input_dims = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for party in parties {
            for (label, &dim) in party.labels().iter().zip(party.dims()) {
                if seen.contains(label) {
                    return Err(Error::Mode(format!("mode `{label}` is measured twice")));
                }
                seen.push(label.clone());
                match channel.position(label) {
                    Some(p) if channel.dims()[p] != dim => {
                        return Err(Error::DimensionMismatch(format!(
                            "mode `{label}` has dimension {} in the channel, {dim} in the measurement",
                            channel.dims()[p]
                        )))
                    }
                    Some(_) => {}
                    None => {
                        input_labels.push(label.clone());
                        input_dims.push(dim);
                    }
                }
            }
        }
        if input_labels.is_empty() {
            return Err(Error::Mode("no input mode among the measured modes".into()));
        }
        let n_input = input_labels.len();
        let mut dims = input_dims.clone();
        dims.extend_from_slice(channel.dims());
        let combined_pos = |label: &str| -> usize {
            input_labels
                .iter()
                .position(|l| l == label)
                .unwrap_or_else(|| n_input + channel.position(label).expect("channel mode"))
        };
        let party_positions: Vec<Vec<usize>> = parties
            .iter()
            .map(|p| p.labels().iter().map(|l| combined_pos(l)).collect())
            .collect();
        let mut measured_channel = Vec::new();
        let mut output_positions = Vec::new();
        let mut out_labels = Vec::new();
        let mut out_dims = Vec::new();
        for (j, label) in channel.labels().iter().enumerate() {
            if seen.contains(label) {
                measured_channel.push(n_input + j);
            } else {
                output_positions.push(n_input + j);
                out_labels.push(label.clone());
                out_dims.push(channel.dims()[j]);
            }
        }
        if out_labels.is_empty() {
            return Err(Error::Mode(
                "every channel mode is measured; no receiver".into(),
            ));
        }
        Ok(Self {
            input: ModeShape::new(input_dims, input_labels)?,
            output: ModeShape::new(out_dims, out_labels)?,
            dims,
            n_input,
            party_positions,
            measured_channel,
            output_positions,
        })
    }

    /// `M[out, in] = Σ_{measured} Π_p conj(bra_p[...]) · Ψ[...]`.
    fn contract(&self, channel: &[C64], bras: &[&[C64]]) -> ComplexMatrix {
        let din = self.input.total_dim();
        let dout = self.output.total_dim();
        let chan_dims = &self.dims[self.n_input..];
        let chan_strides = strides(chan_dims);
        let meas_dims: Vec<usize> = self
            .measured_channel
            .iter()
            .map(|&p| self.dims[p])
            .collect();
        let n_meas: usize = meas_dims.iter().product();
        let party_strides: Vec<Vec<usize>> = self
            .party_positions
            .iter()
            .map(|pos| strides(&pos.iter().map(|&p| self.dims[p]).collect::<Vec<_>>()))
            .collect();
        let mut digits = vec![0usize; self.dims.len()];
        ComplexMatrix::from_fn(dout, din, |out, inp| {
            set_digits(
                &mut digits,
                &(0..self.n_input).collect::<Vec<_>>(),
                inp,
                &self.dims,
            );
            set_digits(&mut digits, &self.output_positions, out, &self.dims);
            let mut acc = ZERO;
            for m in 0..n_meas {
                set_digits(&mut digits, &self.measured_channel, m, &self.dims);
                let ci: usize = (0..chan_dims.len())
                    .map(|j| digits[self.n_input + j] * chan_strides[j])
                    .sum();
                let amp = channel[ci];
                if amp == ZERO {
                    continue;
                }
                let mut term = amp;
                for (p, pos) in self.party_positions.iter().enumerate() {
                    let bi: usize = pos
                        .iter()
                        .zip(&party_strides[p])
                        .map(|(&q, s)| digits[q] * s)
                        .sum();
                    term *= bras[p][bi].conj();
                }
                acc += term;
            }
            acc
        })
    }
}

/// Writes the mixed-radix digits of `index` into `digits[positions]`, first
/// position most significant.
fn set_digits(digits: &mut [usize], positions: &[usize], mut index: usize, dims: &[usize]) {
    for &p in positions.iter().rev() {
        digits[p] = index % dims[p];
        index /= dims[p];
    }
}

/// Applies each noise channel (as the chosen Kraus operator) to a channel ket.
fn noisy_kets(channel: &PureState, noise: &[KrausChannel]) -> Result<Vec<(Vec<usize>, Vec<C64>)>> {
    let shape = channel.shape();
    let mut kets = vec![(Vec::new(), channel.amplitudes().to_vec())];
    for ch in noise {
        let pos = shape.position(ch.target_mode()).ok_or_else(|| {
            Error::Mode(format!(
                "noise targets `{}`, channel modes are {:?}",
                ch.target_mode(),
                shape.labels()
            ))
        })?;
        if shape.dims()[pos] != ch.dim() {
            return Err(Error::DimensionMismatch(format!(
                "noise of dimension {} on mode of dimension {}",
                ch.dim(),
                shape.dims()[pos]
            )));
        }
        let embedded: Vec<ComplexMatrix> = ch
            .operators()
            .iter()
            .map(|e| crate::states::embed_on_mode(e, shape, pos))
            .collect();
        kets = kets
            .into_iter()
            .flat_map(|(label, ket)| {
                embedded.iter().enumerate().map(move |(k, e)| {
                    let mut l = label.clone();
                    l.push(k);
                    (l, e.apply(&ket))
                })
            })
            .collect();
    }
    Ok(kets)
}

/// Nonlocal measurement induced by `joint` on `channel` with Kraus noise on
/// channel modes. The joint measurement's modes that are not channel modes
/// are the input; unmeasured channel modes are the output.
pub fn build_measurement(
    channel: impl Into<ChannelState>,
    joint: impl Into<JointMeasurement>,
    noise: &[KrausChannel],
) -> Result<MeasurementSet> {
    let channel = channel.into();
    let joint = joint.into();
    let comps = channel.components()?;
    let layout = Layout::new(comps[0].1.shape(), &[joint.shape()])?;
    let mut groups = Vec::with_capacity(joint.outcomes());
    for i in 0..joint.outcomes() {
        let bras = joint.weighted_bras(i);
        let mut operators = Vec::new();
        let mut hidden = Vec::new();
        for (e, (p, state)) in comps.iter().enumerate() {
            for (noise_label, ket) in noisy_kets(state, noise)? {
                for (l, (delta, bra)) in bras.iter().enumerate() {
                    let m = layout.contract(&ket, &[bra]).scale_real(p.sqrt() * delta);
                    operators.push(m);
                    hidden.push(HiddenLabel {
                        ensemble: e,
                        noise: noise_label.clone(),
                        rank: l,
                    });
                }
            }
        }
        groups.push(OutcomeGroup {
            label: vec![i],
            operators,
            hidden,
        });
    }
    MeasurementSet::new(groups, layout.input, layout.output)
}

/// One operator per outcome tuple, senders' outcomes first, tuples in
/// lexicographic order. Each basis names the modes it measures.
pub fn build_multiparty_measurement(
    channel: &PureState,
    sender_bases: &[JointBasis],
    intermediator_bases: &[JointBasis],
) -> Result<MeasurementSet> {
    let bases: Vec<&JointBasis> = sender_bases.iter().chain(intermediator_bases).collect();
    if bases.is_empty() {
        return Err(Error::Mode("no measuring party".into()));
    }
    let shapes: Vec<&ModeShape> = bases.iter().map(|b| b.shape()).collect();
    let layout = Layout::new(channel.shape(), &shapes)?;
    for b in intermediator_bases {
        if b.shape()
            .labels()
            .iter()
            .any(|l| channel.shape().position(l).is_none())
        {
            return Err(Error::Mode(format!(
                "intermediator basis `{}` touches a non-channel mode",
                b.name()
            )));
        }
    }
    let counts: Vec<usize> = bases.iter().map(|b| b.len()).collect();
    let total: usize = counts.iter().product();
    let mut groups = Vec::with_capacity(total);
    for t in 0..total {
        let mut label = vec![0; counts.len()];
        let mut rest = t;
        for p in (0..counts.len()).rev() {
            label[p] = rest % counts[p];
            rest /= counts[p];
        }
        let bras: Vec<&[C64]> = bases
            .iter()
            .zip(&label)
            .map(|(b, &i)| b.vectors()[i].amplitudes())
            .collect();
        groups.push(OutcomeGroup::single(
            label,
            layout.contract(channel.amplitudes(), &bras),
        ));
    }
    let ms = MeasurementSet::new(groups, layout.input, layout.output)?;
    let residual = ms.completeness_residual();
    if residual > RECON_TOL {
        return Err(Error::Incomplete {
            residual,
            threshold: RECON_TOL,
        });
    }
    Ok(ms)
}

/// Lifts `op` acting on `positions` of a composite space to the full space.
pub fn embed_on_modes(op: &ComplexMatrix, dims: &[usize], positions: &[usize]) -> ComplexMatrix {
    let n: usize = dims.iter().product();
    let all_strides = strides(dims);
    let rest: Vec<usize> = (0..dims.len()).filter(|p| !positions.contains(p)).collect();
    let sub_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
    let sub_strides = strides(&sub_dims);
    let decompose = |idx: usize| -> (usize, Vec<usize>) {
        let digit = |p: usize| (idx / all_strides[p]) % dims[p];
        let sub = positions
            .iter()
            .zip(&sub_strides)
            .map(|(&p, s)| digit(p) * s)
            .sum();
        (sub, rest.iter().map(|&p| digit(p)).collect())
    };
    let parts: Vec<(usize, Vec<usize>)> = (0..n).map(decompose).collect();
    ComplexMatrix::from_fn(n, n, |i, j| {
        if parts[i].1 == parts[j].1 {
            op[(parts[i].0, parts[j].0)]
        } else {
            ZERO
        }
    })
}

/// Reduced receiver states `tr_measured[(⊗Π)(ρ ⊗ Ψ)(⊗Π)†]`, computed directly
/// on the full space, one per outcome tuple in lexicographic order.
pub fn reduced_states_direct(
    rho: &DensityMatrix,
    channel: &DensityMatrix,
    parties: &[JointMeasurement],
) -> Result<Vec<ComplexMatrix>> {
    let joint = rho.tensor(channel)?;
    let shape = joint.shape().clone();
    let mut measured = Vec::new();
    let mut embedded: Vec<Vec<ComplexMatrix>> = Vec::new();
    for party in parties {
        let positions = party
            .shape()
            .labels()
            .iter()
            .map(|l| {
                shape
                    .position(l)
                    .ok_or_else(|| Error::Mode(format!("unknown mode `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        measured.extend(party.shape().labels().iter().cloned());
        embedded.push(
            (0..party.outcomes())
                .map(|i| embed_on_modes(&party.projector(i), shape.dims(), &positions))
                .collect(),
        );
    }
    let keep: Vec<&str> = shape
        .labels()
        .iter()
        .filter(|l| !measured.contains(l))
        .map(|s| s.as_str())
        .collect();
    let counts: Vec<usize> = embedded.iter().map(|e| e.len()).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    for t in 0..total {
        let mut m = joint.matrix().clone();
        let mut rest = t;
        for p in (0..counts.len()).rev() {
            let pi = &embedded[p][rest % counts[p]];
            rest /= counts[p];
            m = &(pi * &m) * &pi.dagger();
        }
        out.push(crate::states::partial_trace_raw(&m, &shape, &keep)?);
    }
    Ok(out)
}

/// Random mixed state of the given rank.
pub fn random_density<R: rand::Rng + ?Sized>(
    shape: ModeShape,
    rank: usize,
    rng: &mut R,
) -> DensityMatrix {
    let n = shape.total_dim();
    let mut m = ComplexMatrix::zeros(n, n);
    let mut weights: Vec<f64> = (0..rank).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    for w in weights {
        let v = crate::states::haar_amplitudes(n, rng);
        m = &m + &ComplexMatrix::outer(&v, &v).scale_real(w);
    }
    let m = (&m + &m.dagger()).scale_real(0.5);
    DensityMatrix::new(m, shape).expect("valid mixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{
        ghz_tilted, kraus_damping, kraus_dephasing, kraus_depolarizing, rng_from_seed, tilted_pair,
    };
    use crate::tensor::{c, kron, pauli, phase_aligned_distance};

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        op_norm(&(a - b)) < tol
    }

    fn gram_is_identity(b: &JointBasis) -> bool {
        close(&b.gram(), &ComplexMatrix::identity(b.len()), 1e-12)
    }

    fn diag2(a: f64, b: f64) -> ComplexMatrix {
        ComplexMatrix::diag_real(&[a, b])
    }

    #[test]
    fn bell_basis_properties() {
        let b = bell_basis();
        assert_eq!(b.len(), 4);
        assert!(gram_is_identity(&b));
        assert!((b.vectors()[0].amplitudes()[0].re - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tilted_basis_cases() {
        let t = tilted_joint_basis(PI / 2.0).unwrap();
        for (v, w) in t.vectors().iter().zip(bell_basis().vectors()) {
            assert!((v.inner(w) - r(1.0)).norm() < 1e-12);
        }
        assert!(gram_is_identity(&tilted_joint_basis(PI / 5.0).unwrap()));
        let t0 = tilted_joint_basis(0.0).unwrap();
        let amps: Vec<Vec<C64>> = t0
            .vectors()
            .iter()
            .map(|v| v.amplitudes().to_vec())
            .collect();
        assert_eq!(amps[0], vec![r(1.0), ZERO, ZERO, ZERO]);
        assert_eq!(amps[1], vec![ZERO, ZERO, ZERO, r(-1.0)]);
        assert_eq!(amps[2], vec![ZERO, r(1.0), ZERO, ZERO]);
        assert_eq!(amps[3], vec![ZERO, ZERO, r(-1.0), ZERO]);
        assert!(tilted_joint_basis(2.0).is_err());
    }

    #[test]
    fn damping_and_agrawal_bases() {
        let d0 = damping_adapted_basis(0.0).unwrap();
        for (v, w) in d0.vectors().iter().zip(bell_basis().vectors()) {
            assert!((v.inner(w).norm() - 1.0).abs() < 1e-12);
        }
        assert!(gram_is_identity(&damping_adapted_basis(0.5).unwrap()));
        assert!(gram_is_identity(&damping_adapted_basis(1.0).unwrap()));
        assert!(damping_adapted_basis(1.2).is_err());

        let a1 = agrawal_basis(r(1.0)).unwrap();
        for (v, w) in a1.vectors().iter().zip(bell_basis().vectors()) {
            assert!((v.inner(w).norm() - 1.0).abs() < 1e-12);
        }
        assert!(gram_is_identity(&agrawal_basis(r(0.5)).unwrap()));
        assert!(gram_is_identity(&agrawal_basis(c(0.3, 0.4)).unwrap()));
        let a0 = agrawal_basis(ZERO).unwrap();
        assert!(a0.vectors().iter().all(|v| v
            .amplitudes()
            .iter()
            .filter(|z| z.norm() > 0.0)
            .count()
            == 1));
        assert!(agrawal_basis(r(1.5)).is_err());
    }

    #[test]
    fn noiseless_bell_operators() {
        let theta: f64 = 1.1;
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let ms = build_measurement(&tilted_pair(theta).unwrap(), bell_basis(), &[]).unwrap();
        assert!(ms.completeness_residual() < 1e-12);
        let dg = diag2(ct, st);
        for (i, u) in pauli::frame().iter().enumerate() {
            let expected = (&dg * u).scale_real(0.5f64.sqrt());
            assert!(
                close(ms.operator(&[i]).unwrap(), &expected, 1e-14),
                "outcome {i}"
            );
        }
        assert_eq!(ms.input_shape().labels(), &["a".to_string()]);
        assert_eq!(ms.output_shape().labels(), &["b".to_string()]);
    }

    #[test]
    fn tilted_basis_operators() {
        // ⟨W_i|Ψ⟩ for the tilted pair and tilted basis
        let (theta, phi): (f64, f64) = (1.2, 0.7);
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let (cp, sp) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            tilted_joint_basis(phi).unwrap(),
            &[],
        )
        .unwrap();
        let x = pauli::x();
        let expected = [
            diag2(cp * ct, sp * st),
            diag2(sp * ct, -cp * st),
            &diag2(sp * ct, cp * st) * &x,
            &diag2(-cp * ct, sp * st) * &x,
        ];
        for (i, e) in expected.iter().enumerate() {
            assert!(close(ms.operator(&[i]).unwrap(), e, 1e-14), "outcome {i}");
        }
    }

    #[test]
    fn damping_on_receiver_operators() {
        let (theta, d): (f64, f64) = (0.9, 0.35);
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            bell_basis(),
            &[kraus_damping(d).unwrap()],
        )
        .unwrap();
        let h = 0.5f64.sqrt();
        let e1 = diag2(1.0, (1.0 - d).sqrt());
        let e2 = ComplexMatrix::from_real_rows(&[[0.0, d.sqrt()], [0.0, 0.0]]);
        for (i, u) in pauli::frame().iter().enumerate() {
            let base = (&diag2(ct, st) * u).scale_real(h);
            let g = ms.group(i);
            assert_eq!(g.operators.len(), 2);
            assert!(close(&g.operators[0], &(&e1 * &base), 1e-14));
            assert!(close(&g.operators[1], &(&e2 * &base), 1e-14));
            assert_eq!(g.hidden[1].noise, vec![1]);
        }
        assert!(ms.completeness_residual() < 1e-12);
    }

    #[test]
    fn damping_on_sender_adapted_operators() {
        let (theta, d): (f64, f64) = (1.3, 0.4);
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let ms = build_measurement(
            &tilted_pair(theta).unwrap(),
            damping_adapted_basis(d).unwrap(),
            &[kraus_damping(d).unwrap().on("abar")],
        )
        .unwrap();
        let n = 2.0 - d;
        let q = ((1.0 - d) / n).sqrt();
        let o = 1.0 / n.sqrt();
        let k10 = ComplexMatrix::from_real_rows(&[[0.0, 0.0], [1.0, 0.0]]); // |1⟩⟨0|
        let k01 = ComplexMatrix::from_real_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        let k11 = diag2(0.0, 1.0);
        let expected = [
            [
                diag2(q * ct, q * st),
                k10.scale_real((d * (1.0 - d) / n).sqrt() * st),
            ],
            [
                diag2(o * ct, -o * (1.0 - d) * st),
                k10.scale_real((d / n).sqrt() * st),
            ],
            [
                (&k01.scale_real(ct) + &k10.scale_real(st)).scale_real(q),
                k11.scale_real((d * (1.0 - d) / n).sqrt() * st),
            ],
            [
                (&k01.scale_real(ct) - &k10.scale_real((1.0 - d) * st)).scale_real(-o),
                k11.scale_real((d / n).sqrt() * st),
            ],
        ];
        // the listed fourth-outcome noise operator carries the opposite global sign
        for (i, pair) in expected.iter().enumerate() {
            for (k, e) in pair.iter().enumerate() {
                let got = &ms.group(i).operators[k];
                assert!(phase_aligned_distance(got, e) < 1e-14, "i={i} k={k}");
            }
        }
    }

    #[test]
    fn completeness_on_grid_and_detection() {
        for a in 0..=4 {
            let theta = a as f64 * PI / 8.0;
            for b in 0..=4 {
                let d = b as f64 / 4.0;
                for ch in [kraus_damping(d), kraus_dephasing(d), kraus_depolarizing(d)] {
                    let ch = ch.unwrap();
                    let ms = build_measurement(
                        &tilted_pair(theta).unwrap(),
                        bell_basis(),
                        &[ch.clone()],
                    )
                    .unwrap();
                    assert!(ms.completeness_residual() < 1e-10);
                    let both = [ch.clone(), ch.on("abar")];
                    let ms = build_measurement(&tilted_pair(theta).unwrap(), bell_basis(), &both)
                        .unwrap();
                    assert!(ms.completeness_residual() < 1e-10);
                }
            }
        }
        let ms = build_measurement(
            &tilted_pair(1.0).unwrap(),
            bell_basis(),
            &[kraus_damping(0.7).unwrap()],
        )
        .unwrap();
        assert!(ms.completeness_residual() < 1e-12);
        assert!(ms.without_operator(0, 0).completeness_residual() > 0.1);
    }

    #[test]
    fn mode_errors() {
        let bad = kraus_damping(0.1).unwrap().on("zz");
        assert!(matches!(
            build_measurement(&tilted_pair(1.0).unwrap(), bell_basis(), &[bad]),
            Err(Error::Mode(_))
        ));
        let b = bell_basis().on(&["a", "q"]).unwrap();
        assert!(
            build_multiparty_measurement(&tilted_pair(1.0).unwrap(), &[bell_basis(), b], &[])
                .is_err()
        );
    }

    #[test]
    fn mixed_channel_is_union_of_pure_constructions() {
        let comps = vec![
            (0.7, tilted_pair(1.2).unwrap()),
            (0.3, tilted_pair(0.4).unwrap()),
        ];
        let ms =
            build_measurement(ChannelState::Ensemble(comps.clone()), bell_basis(), &[]).unwrap();
        for (k, (p, s)) in comps.iter().enumerate() {
            let pure = build_measurement(s, bell_basis(), &[]).unwrap();
            for i in 0..4 {
                let expected = pure.group(i).operators[0].scale_real(p.sqrt());
                assert!(close(&ms.group(i).operators[k], &expected, 1e-12));
                assert_eq!(ms.group(i).hidden[k].ensemble, k);
            }
        }
        let rho = ChannelState::Ensemble(comps).to_density().unwrap();
        let ms2 = build_measurement(rho, bell_basis(), &[]).unwrap();
        assert!(ms2.completeness_residual() < 1e-10);
    }

    #[test]
    fn general_measurement_matches_direct_reduction() {
        let mut rng = rng_from_seed(5);
        // rank-two measurement: projectors onto pairs of Bell states, rotated
        let bell = bell_basis();
        let proj = |i: usize, j: usize| {
            let a = bell.vectors()[i].amplitudes();
            let b = bell.vectors()[j].amplitudes();
            &ComplexMatrix::outer(a, a) + &ComplexMatrix::outer(b, b)
        };
        let u = kron(&pauli::x(), &pauli::id());
        let general = GeneralJointMeasurement::new(
            vec![&u * &proj(0, 1), &u * &proj(2, 3)],
            bell.shape().clone(),
        )
        .unwrap();
        let channel = tilted_pair(1.0).unwrap();
        let ms = build_measurement(&channel, general.clone(), &[]).unwrap();
        assert!(ms.completeness_residual() < 1e-10);
        assert_eq!(ms.group(0).operators.len(), 2);
        let rho = random_density(ModeShape::qubits(&["a"]), 2, &mut rng);
        let direct = reduced_states_direct(
            &rho,
            &channel.to_density(),
            &[JointMeasurement::General(general)],
        )
        .unwrap();
        for (i, d) in direct.iter().enumerate() {
            assert!(close(&ms.reduced_state(i, rho.matrix()), d, 1e-10));
        }
    }

    #[test]
    fn noisy_reduction_matches_direct() {
        let mut rng = rng_from_seed(9);
        let channel = tilted_pair(0.8).unwrap();
        let noise = kraus_depolarizing(0.3).unwrap();
        let ms = build_measurement(&channel, bell_basis(), &[noise.clone()]).unwrap();
        let noisy = crate::states::apply_channel(&channel.to_density(), &noise).unwrap();
        for _ in 0..5 {
            let rho = random_density(ModeShape::qubits(&["a"]), 2, &mut rng);
            let direct = reduced_states_direct(&rho, &noisy, &[bell_basis().into()]).unwrap();
            for (i, d) in direct.iter().enumerate() {
                assert!(close(&ms.reduced_state(i, rho.matrix()), d, 1e-10));
            }
        }
    }

    #[test]
    fn tripartite_operators() {
        let (theta, phi): (f64, f64) = (1.3, 0.6);
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let (cp, sp) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        let ms = build_multiparty_measurement(
            &ghz_tilted(theta).unwrap(),
            &[bell_basis()],
            &[rotated_qubit_basis(phi, "b").unwrap()],
        )
        .unwrap();
        assert_eq!(ms.len(), 8);
        let h = 0.5f64.sqrt();
        let (x, z) = (pauli::x(), pauli::z());
        let xz = &x * &z;
        let a = diag2(ct * cp, st * sp);
        let b = diag2(st * cp, ct * sp);
        let expected = [
            ([0, 0], a.clone()),
            ([0, 1], &(&xz * &b) * &x),
            ([1, 0], &z * &a),
            ([1, 1], &(&x * &b) * &x),
            ([2, 0], &a * &x),
            ([2, 1], &xz * &b),
            ([3, 0], &a * &xz),
            ([3, 1], &x * &b),
        ];
        for (label, e) in expected {
            let got = ms.operator(&label).unwrap();
            // outcome (2,2) as listed differs by a global sign
            assert!(
                phase_aligned_distance(got, &e.scale_real(h)) < 1e-12,
                "{label:?}: {got:?}"
            );
            if label != [1, 1] {
                assert!(close(got, &e.scale_real(h), 1e-12), "{label:?}");
            }
        }
        assert_eq!(ms.output_shape().labels(), &["c".to_string()]);

        let mut rng = rng_from_seed(3);
        let rho = random_density(ModeShape::qubits(&["a"]), 2, &mut rng);
        let direct = reduced_states_direct(
            &rho,
            &ghz_tilted(theta).unwrap().to_density(),
            &[
                bell_basis().into(),
                rotated_qubit_basis(phi, "b").unwrap().into(),
            ],
        )
        .unwrap();
        for (i, d) in direct.iter().enumerate() {
            assert!(close(&ms.reduced_state(i, rho.matrix()), d, 1e-10));
        }
    }

    fn bell_pair(labels: &[&str]) -> PureState {
        tilted_pair(PI / 2.0).unwrap().with_labels(labels).unwrap()
    }

    #[test]
    fn repeater_operator() {
        let (theta, phi): (f64, f64) = (PI / 3.0, PI / 4.0);
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let (cp, sp) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        let channel = tilted_pair(theta)
            .unwrap()
            .tensor(&bell_pair(&["c", "d"]))
            .unwrap();
        let ms = build_multiparty_measurement(
            &channel,
            &[bell_basis()],
            &[tilted_joint_basis(phi).unwrap().on(&["b", "c"]).unwrap()],
        )
        .unwrap();
        assert_eq!(ms.len(), 16);
        let expected = diag2(ct * cp, -st * sp).scale_real(0.5);
        assert!(close(ms.operator(&[1, 0]).unwrap(), &expected, 1e-12));
        assert!(ms.completeness_residual() < 1e-12);
    }

    #[test]
    fn entanglement_transmission_operator() {
        let (theta, phi): (f64, f64) = (1.1, 0.5);
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let (cp, sp) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        let channel = tilted_pair(theta)
            .unwrap()
            .tensor(&bell_pair(&["cbar", "d"]))
            .unwrap();
        let ms = build_multiparty_measurement(
            &channel,
            &[
                bell_basis(),
                tilted_joint_basis(phi).unwrap().on(&["c", "cbar"]).unwrap(),
            ],
            &[],
        )
        .unwrap();
        assert_eq!(ms.input_dim(), 4);
        assert_eq!(
            ms.input_shape().labels(),
            &["a".to_string(), "c".to_string()]
        );
        let expected = kron(&diag2(ct, st), &diag2(sp, -cp)).scale_real(0.5);
        assert!(close(ms.operator(&[0, 1]).unwrap(), &expected, 1e-12));

        let mut rng = rng_from_seed(11);
        let rho = random_density(ModeShape::qubits(&["a", "c"]), 3, &mut rng);
        let direct = reduced_states_direct(
            &rho,
            &channel.to_density(),
            &[
                bell_basis().into(),
                tilted_joint_basis(phi)
                    .unwrap()
                    .on(&["c", "cbar"])
                    .unwrap()
                    .into(),
            ],
        )
        .unwrap();
        for (i, d) in direct.iter().enumerate() {
            assert!(close(&ms.reduced_state(i, rho.matrix()), d, 1e-10));
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = rng_from_seed(17);
        let ms = build_measurement(
            &tilted_pair(0.7).unwrap(),
            bell_basis(),
            &[
                kraus_damping(0.6).unwrap(),
                kraus_dephasing(0.2).unwrap().on("abar"),
            ],
        )
        .unwrap();
        for _ in 0..100 {
            let psi = crate::states::haar_amplitudes(2, &mut rng);
            let p = ms.outcome_probabilities(&psi);
            assert!(p.iter().all(|x| *x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
