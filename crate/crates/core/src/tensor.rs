//! Dense complex linear algebra for the small composite spaces used here.
//!
//! Everything is row-major and at most 16x16, so no sparsity or blocking.
//! The SVD and Hermitian eigensolvers are delegated to `nalgebra`; this
//! module fixes the conventions on top (ordering, phases, the `M = V D U`
//! layout used by the reversal formulas).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::PureState;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Reconstruction / unitarity tolerance.
pub const RECON_TOL: f64 = 1e-10;
/// Singular values at or below this are treated as zero.
pub const SINGULAR_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(m)
    }

    /// Convenience constructor for literal matrices in tests and tables.
    pub fn from_rows<const N: usize>(rows: &[[C64; N]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            rows: rows.len(),
            cols: N,
            data,
        }
    }

    pub fn from_real_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self {
            rows: rows.len(),
            cols: N,
            data,
        }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        let v: Vec<C64> = entries.iter().map(|&x| r(x)).collect();
        Self::diag(&v)
    }

    /// `|ket><bra|` for two amplitude vectors.
    pub fn outer(ket: &[C64], bra: &[C64]) -> Self {
        Self::from_fn(ket.len(), bra.len(), |i, j| ket[i] * bra[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn dagger(&self) -> Self {
        dagger(self)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(r(s))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `<v|A|v>` without allocating.
    pub fn quad_form(&self, v: &[C64]) -> C64 {
        debug_assert!(self.is_square() && v.len() == self.cols);
        let mut acc = ZERO;
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let av: C64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += v[i].conj() * av;
        }
        acc
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].norm() <= tol))
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>9.5}{:+.5}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Ordered subsystem dimensions with mode labels (`a`, `abar`, `b`, ...).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeShape {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl ModeShape {
    pub fn new<S: Into<String>>(dims: Vec<usize>, labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if dims.is_empty() || dims.len() != labels.len() {
            return Err(Error::Mode(format!(
                "{} dims for {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::Mode(format!("subsystem dimension {d} < 2")));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Mode(format!("duplicate mode label `{l}`")));
            }
        }
        Ok(Self { dims, labels })
    }

    /// All-qubit shape.
    pub fn qubits(labels: &[&str]) -> Self {
        Self::new(vec![2; labels.len()], labels.to_vec()).expect("qubit labels must be distinct")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &ModeShape) -> Result<ModeShape> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        ModeShape::new(dims, labels)
    }
}

/// `M = V · D · U` with the second unitary on the right, unadjointed.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub v: ComplexMatrix,
    pub d: ComplexMatrix,
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
}

impl SvdTriple {
    pub fn lambda_min(&self) -> f64 {
        *self.singular_values.last().expect("non-empty SVD")
    }

    pub fn lambda_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        &(&self.v * &self.d) * &self.u
    }
}

/// Kronecker product, A-major index order.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.rows, a.cols, b.rows, b.cols);
    ComplexMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

pub fn kron_all(ms: &[ComplexMatrix]) -> ComplexMatrix {
    ms.iter()
        .skip(1)
        .fold(ms[0].clone(), |acc, m| kron(&acc, m))
}

pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.cols, a.rows, |i, j| a[(j, i)].conj())
}

/// Singular value decomposition in the `M = V D U` layout.
///
/// Singular values are sorted descending (ties keep the solver's column
/// order), and each column of `V` is rephased so its first non-negligible
/// entry is real positive, with the compensating phase moved onto `U`.
pub fn svd_vdu(m: &ComplexMatrix) -> Result<SvdTriple> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = m.rows;
    let svd = m.to_nalgebra().svd(true, true);
    let left = svd.u.expect("requested U");
    let right_h = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));

    let mut v = ComplexMatrix::zeros(n, n);
    let mut u = ComplexMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (new, &old) in order.iter().enumerate() {
        let col: Vec<C64> = (0..n).map(|i| left[(i, old)]).collect();
        let pivot = col.iter().find(|z| z.norm() > 1e-9).copied().unwrap_or(ONE);
        let phase = pivot.conj() / pivot.norm();
        for i in 0..n {
            v[(i, new)] = col[i] * phase;
            u[(new, i)] = right_h[(old, i)] * phase.conj();
        }
        singular_values.push(sv[old].max(0.0));
    }
    let d = ComplexMatrix::diag_real(&singular_values);
    Ok(SvdTriple {
        v,
        d,
        u,
        singular_values,
    })
}

/// Pseudo-inverse of a diagonal matrix: `1/λ` above `tol`, zero otherwise.
pub fn pinv_diag(d: &ComplexMatrix, tol: f64) -> ComplexMatrix {
    let n = d.rows.min(d.cols);
    let mut out = ComplexMatrix::zeros(d.cols, d.rows);
    for i in 0..n {
        let x = d[(i, i)];
        if x.norm() > tol {
            out[(i, i)] = ONE / x;
        }
    }
    out
}

/// Operator norm (largest singular value).
pub fn op_norm(a: &ComplexMatrix) -> f64 {
    if a.data.iter().all(|z| *z == ZERO) {
        return 0.0;
    }
    a.to_nalgebra()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Raw form of [`contract_bra`]: `bra` lives on `(x, y)` with dims
/// `(dx, dy)`, `ket` on `(y, z)`; the result maps x-space to z-space:
/// `M[β, α] = Σ_μ conj(bra[α, μ]) · ket[μ, β]`.
pub fn contract_bra_raw(
    bra: &[C64],
    dx: usize,
    dy: usize,
    ket: &[C64],
    dz: usize,
) -> Result<ComplexMatrix> {
    if bra.len() != dx * dy || ket.len() != dy * dz {
        return Err(Error::DimensionMismatch(format!(
            "bra has {} amplitudes for {dx}x{dy}, ket has {} for {dy}x{dz}",
            bra.len(),
            ket.len()
        )));
    }
    Ok(ComplexMatrix::from_fn(dz, dx, |beta, alpha| {
        (0..dy)
            .map(|mu| bra[alpha * dy + mu].conj() * ket[mu * dz + beta])
            .sum()
    }))
}

/// Contracts a two-mode bra over `(x, y)` with a two-mode state over `(y, z)`,
/// yielding the nonlocal operator from mode x to mode z.
pub fn contract_bra(bra: &PureState, channel: &PureState) -> Result<ComplexMatrix> {
    let (bd, cd) = (bra.shape().dims(), channel.shape().dims());
    if bd.len() != 2 || cd.len() != 2 {
        return Err(Error::Mode(
            "contract_bra expects two-mode bra and channel".into(),
        ));
    }
    if bd[1] != cd[0] {
        return Err(Error::DimensionMismatch(format!(
            "shared mode has dimension {} in the bra and {} in the channel",
            bd[1], cd[0]
        )));
    }
    contract_bra_raw(bra.amplitudes(), bd[0], bd[1], channel.amplitudes(), cd[1])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, Vec<Vec<C64>>) {
    let n = h.rows;
    // symmetrize so round-off never leaks into the solver
    let sym = ComplexMatrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let eig = nalgebra::SymmetricEigen::new(sym.to_nalgebra());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let values = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = idx
        .iter()
        .map(|&k| (0..n).map(|i| eig.eigenvectors[(i, k)]).collect())
        .collect();
    (values, vectors)
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Negative round-off eigenvalues are clipped to zero.
pub fn sqrt_psd(h: &ComplexMatrix) -> ComplexMatrix {
    let (vals, vecs) = hermitian_eigen(h);
    let n = h.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for (lam, v) in vals.iter().zip(&vecs) {
        let s = lam.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += v[i] * v[j].conj() * s;
            }
        }
    }
    out
}

pub fn is_unitary(u: &ComplexMatrix, tol: f64) -> bool {
    u.is_square() && op_norm(&(&(&u.dagger() * u) - &ComplexMatrix::identity(u.rows))) <= tol
}

/// Minimises `‖a − e^{iφ} b‖_F` over the global phase and returns the residual
/// operator norm.
pub fn phase_aligned_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let overlap: C64 = a.data.iter().zip(&b.data).map(|(x, y)| y.conj() * x).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    op_norm(&(a - &b.scale(phase)))
}

/// Pauli matrices and the single-qubit frame used for conditional corrections.
pub mod pauli {
    use super::*;

    pub fn id() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[[ZERO, -I], [I, ZERO]])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]])
    }

    /// `{I, σz, σx, σxσz}` in outcome order of the Bell basis.
    pub fn frame() -> Vec<ComplexMatrix> {
        vec![id(), z(), x(), &x() * &z()]
    }

    /// Tensor products of the single-qubit frame over `n` qubits, first
    /// factor most significant.
    pub fn frame_products(n: usize) -> Vec<ComplexMatrix> {
        let base = frame();
        let mut out = vec![ComplexMatrix::identity(1)];
        for _ in 0..n {
            out = out
                .iter()
                .flat_map(|acc| base.iter().map(move |p| kron(acc, p)))
                .collect();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn kron_identity_and_entries() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));

        let p0 = ComplexMatrix::diag_real(&[1.0, 0.0]);
        let k = kron(&pauli::x(), &p0);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i, j) == (2, 0) || (i, j) == (0, 2) {
                    ONE
                } else {
                    ZERO
                };
                assert_eq!(k[(i, j)], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn kron_associative_and_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b, cc, d) = (
            random_matrix(&mut rng, 2),
            random_matrix(&mut rng, 2),
            random_matrix(&mut rng, 2),
            random_matrix(&mut rng, 2),
        );
        let lhs = kron(&a, &kron(&b, &cc));
        let rhs = kron(&kron(&a, &b), &cc);
        assert!((&lhs - &rhs).max_abs() < 1e-14);

        let mixed = &kron(&a, &b) * &kron(&cc, &d);
        let split = kron(&(&a * &cc), &(&b * &d));
        assert!(op_norm(&(&mixed - &split)) < 1e-12);
    }

    #[test]
    fn dagger_cases() {
        assert_eq!(
            dagger(&ComplexMatrix::identity(3)),
            ComplexMatrix::identity(3)
        );
        assert_eq!(dagger(&pauli::y()), pauli::y());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3);
        assert_eq!(dagger(&dagger(&a)), a);
    }

    #[test]
    fn svd_of_diagonal_tilted_operator() {
        let theta = std::f64::consts::FRAC_PI_3;
        let s2 = 2f64.sqrt();
        let m = ComplexMatrix::diag_real(&[(theta / 2.0).cos() / s2, (theta / 2.0).sin() / s2]);
        let svd = svd_vdu(&m).unwrap();
        assert!((svd.singular_values[0] - 0.6123724356957945).abs() < 1e-12);
        assert!((svd.singular_values[1] - 0.3535533905932738).abs() < 1e-12);
        assert!(op_norm(&(&svd.reconstruct() - &m)) < 1e-12);
    }

    #[test]
    fn svd_identity_and_scaled_pauli() {
        let svd = svd_vdu(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(svd.singular_values.len(), 2);
        assert!(svd.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(op_norm(&(&svd.reconstruct() - &ComplexMatrix::identity(2))) < 1e-12);

        let svd = svd_vdu(&pauli::x().scale_real(0.5)).unwrap();
        assert!(svd.singular_values.iter().all(|s| (s - 0.5).abs() < 1e-12));
    }

    #[test]
    fn svd_rejects_bad_input() {
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(svd_vdu(&rect), Err(Error::NotSquare { .. })));
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert_eq!(svd_vdu(&m).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn svd_phase_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_matrix(&mut rng, 4);
        let svd = svd_vdu(&m).unwrap();
        for j in 0..4 {
            let first = (0..4)
                .map(|i| svd.v[(i, j)])
                .find(|z| z.norm() > 1e-9)
                .unwrap();
            assert!(first.im.abs() < 1e-12 && first.re > 0.0);
        }
        assert!(svd.d.is_diagonal(0.0));
        for (k, s) in svd.singular_values.iter().enumerate() {
            assert_eq!(svd.d[(k, k)].re, *s);
        }
    }

    #[test]
    fn pinv_diag_cases() {
        let p = pinv_diag(&ComplexMatrix::diag_real(&[2.0, 4.0]), 1e-12);
        assert_eq!(p, ComplexMatrix::diag_real(&[0.5, 0.25]));
        let p = pinv_diag(&ComplexMatrix::diag_real(&[1.0, 0.0]), 1e-12);
        assert_eq!(p, ComplexMatrix::diag_real(&[1.0, 0.0]));
        let p = pinv_diag(&ComplexMatrix::diag_real(&[1e-13, 1.0]), 1e-12);
        assert_eq!(p, ComplexMatrix::diag_real(&[0.0, 1.0]));
    }

    #[test]
    fn op_norm_cases() {
        assert!((op_norm(&ComplexMatrix::identity(3)) - 1.0).abs() < 1e-14);
        assert_eq!(op_norm(&ComplexMatrix::zeros(2, 2)), 0.0);
        let m = ComplexMatrix::diag(&[r(3.0), c(0.0, 4.0)]);
        assert!((op_norm(&m) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 3);
        let h = &a.dagger() * &a;
        let s = sqrt_psd(&h);
        assert!(op_norm(&(&(&s * &s) - &h)) < 1e-10);
        assert!(op_norm(&(&s - &s.dagger())) < 1e-12);
    }

    #[test]
    fn frame_products_count() {
        let f = pauli::frame_products(2);
        assert_eq!(f.len(), 16);
        assert!(f.iter().all(|u| is_unitary(u, 1e-12)));
    }

    #[test]
    fn phase_alignment_ignores_global_phase() {
        let a = pauli::y();
        let b = a.scale(c(0.0, -1.0));
        assert!(phase_aligned_distance(&a, &b) < 1e-14);
        assert!(phase_aligned_distance(&a, &pauli::x()) > 0.5);
    }
}
