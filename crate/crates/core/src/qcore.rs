//! Dense complex linear algebra for small spin systems.
//!
//! Operators are stored as dense `dim × dim` complex matrices. Dimensions
//! here never exceed a few hundred, so Hermitian problems are solved by full
//! eigendecomposition and propagators are built from the spectrum rather than
//! from series expansions.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

/// Relative tolerance on `‖H − H†‖ / ‖H‖` accepted by the Hermitian routines.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Pauli axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidInput(format!("unknown axis '{other}'"))),
        }
    }
}

/// Square complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{}) {}", self.dim(), self.dim(), self.0)
    }
}

impl ComplexMatrix {
    /// Wraps a square matrix, rejecting non-square or non-finite input.
    pub fn new(inner: DMatrix<C64>) -> Result<Self> {
        if inner.nrows() != inner.ncols() {
            return Err(Error::DimensionMismatch {
                expected: inner.nrows(),
                got: inner.ncols(),
            });
        }
        if inner.nrows() == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if inner.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(inner))
    }

    /// Builds from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| c64(x, 0.0)));
        Self(DMatrix::from_diagonal(&d))
    }

    pub fn pauli(axis: Axis) -> Self {
        let (o, l, i) = (c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 1.0));
        let entries = match axis {
            Axis::X => [o, l, l, o],
            Axis::Y => [o, -i, i, o],
            Axis::Z => [l, o, o, -l],
        };
        Self(DMatrix::from_row_slice(2, 2, &entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖H − H†‖_F / ‖H‖_F`, zero for the zero matrix.
    pub fn hermitian_defect(&self) -> f64 {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let diff = &self.0 - self.0.adjoint();
        diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / norm
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|r| (0..n).all(|c| r == c || self.0[(r, c)].norm() <= tol))
    }

    /// Real parts of the diagonal.
    pub fn real_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.0[(k, k)].re).collect()
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = ComplexMatrix(self.0.adjoint() * &self.0);
        prod.max_abs_diff(&ComplexMatrix::identity(self.dim()))
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        StateVector(&self.0 * &psi.0)
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

impl std::iter::Sum for ComplexMatrix {
    fn sum<I: Iterator<Item = ComplexMatrix>>(mut iter: I) -> ComplexMatrix {
        let first = iter.next().expect("sum of an empty operator list");
        iter.fold(first, |acc, m| &acc + &m)
    }
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    /// Normalizes the given amplitudes; rejects zero or non-finite vectors.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("empty state".into()));
        }
        if amplitudes
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite);
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::InvalidInput("zero state".into()));
        }
        Ok(Self(v / c64(norm, 0.0)))
    }

    /// Computational basis state `|index⟩`; bit `N−1−j` of `index` is spin `j`
    /// (spin 0 is the most significant factor of the tensor product), with
    /// bit 0 meaning spin up.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = c64(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn as_inner(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn renormalized(mut self) -> Self {
        let n = self.0.norm();
        self.0 /= c64(n, 0.0);
        self
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Real part of `⟨ψ|O|ψ⟩`.
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        self.0.dotc(&(&op.0 * &self.0)).re
    }
}

/// Eigenvalues ascending with orthonormal eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> StateVector {
        StateVector(self.vectors.0.column(k).into_owned())
    }

    pub fn ground_state(&self) -> StateVector {
        self.vector(0)
    }

    /// `ε₁ − ε₀`, or infinity for a one-dimensional space.
    pub fn gap(&self) -> f64 {
        if self.values.len() < 2 {
            f64::INFINITY
        } else {
            self.values[1] - self.values[0]
        }
    }
}

/// Tensor product with the standard block layout: `(a⊗b)[i·db + k, j·db + l] = a[i,j]·b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(a.0.kronecker(&b.0))
}

/// `op` acting on `site` of an `n_sites` register of qubits, identity elsewhere.
pub fn site_operator(op: &ComplexMatrix, site: usize, n_sites: usize) -> ComplexMatrix {
    assert!(
        site < n_sites,
        "site {site} out of range for {n_sites} sites"
    );
    let left = 1usize << site;
    let right = 1usize << (n_sites - site - 1);
    let tmp = kron(&ComplexMatrix::identity(left), op);
    kron(&tmp, &ComplexMatrix::identity(right))
}

/// `Σ_j σ^axis_j` over all sites.
pub fn collective_pauli(axis: Axis, n_sites: usize) -> ComplexMatrix {
    let p = ComplexMatrix::pauli(axis);
    (0..n_sites).map(|j| site_operator(&p, j, n_sites)).sum()
}

fn check_hermitian(h: &ComplexMatrix) -> Result<DMatrix<C64>> {
    let asymmetry = h.hermitian_defect();
    if asymmetry > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry });
    }
    Ok((&h.0 + h.0.adjoint()) * c64(0.5, 0.0))
}

/// Hermitian eigendecomposition.
///
/// The input is symmetrized before solving. Eigenpairs are sorted by
/// ascending value and each eigenvector's phase is fixed so its
/// largest-magnitude component (first one on ties) is real and positive.
pub fn eigh(h: &ComplexMatrix) -> Result<EigenSystem> {
    let sym = check_hermitian(h)?;
    let dim = sym.nrows();
    let decomposition = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[a]
            .partial_cmp(&decomposition.eigenvalues[b])
            .expect("finite eigenvalues")
    });

    let values = order
        .iter()
        .map(|&k| decomposition.eigenvalues[k])
        .collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = decomposition.eigenvectors.column(src).into_owned();
        let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = col
            .iter()
            .position(|z| z.norm() >= max * (1.0 - 1e-10))
            .expect("nonzero eigenvector");
        let phase = col[pivot].conj() / col[pivot].norm();
        col *= phase;
        vectors.set_column(dst, &col);
    }
    Ok(EigenSystem {
        values,
        vectors: ComplexMatrix(vectors),
    })
}

/// Rebuilds `V·diag(f(ε))·V†` from an eigensystem.
pub fn spectral_map(eig: &EigenSystem, f: impl Fn(f64) -> C64) -> ComplexMatrix {
    let v = &eig.vectors.0;
    let mut scaled = v.clone();
    for (k, &e) in eig.values.iter().enumerate() {
        let s = f(e);
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= s);
    }
    ComplexMatrix(scaled * v.adjoint())
}

/// Unitary propagator `e^{−iHt}` of a Hermitian `H`.
pub fn expm_i(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = eigh(h)?;
    Ok(spectral_map(&eig, |e| C64::from_polar(1.0, -e * t)))
}

/// `e^{−i·angle·σ^axis/2}` applied to every listed site.
pub fn rotation(axis: Axis, angle: f64, sites: &[usize], n_sites: usize) -> ComplexMatrix {
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let single = match axis {
        Axis::X => {
            ComplexMatrix::from_rows(2, &[c64(c, 0.0), c64(0.0, -s), c64(0.0, -s), c64(c, 0.0)])
        }
        Axis::Y => {
            ComplexMatrix::from_rows(2, &[c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0)])
        }
        Axis::Z => {
            ComplexMatrix::from_rows(2, &[c64(c, -s), c64(0.0, 0.0), c64(0.0, 0.0), c64(c, s)])
        }
    }
    .expect("2x2 rotation");
    sites
        .iter()
        .fold(ComplexMatrix::identity(1 << n_sites), |acc, &j| {
            &site_operator(&single, j, n_sites) * &acc
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kron_sigma_z_identity_is_diag() {
        let m = kron(&ComplexMatrix::pauli(Axis::Z), &ComplexMatrix::identity(2));
        assert_eq!(
            m,
            ComplexMatrix::from_real_diagonal(&[1.0, 1.0, -1.0, -1.0])
        );
    }

    #[test]
    fn kron_identities() {
        let m = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2));
        assert_eq!(m, ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_xx_flips_both_spins() {
        let xx = kron(
            &ComplexMatrix::pauli(Axis::X),
            &ComplexMatrix::pauli(Axis::X),
        );
        let out = xx.apply(&StateVector::basis(4, 0));
        assert_eq!(out, StateVector::basis(4, 3));
    }

    #[test]
    fn eigh_sigma_z() {
        let e = eigh(&ComplexMatrix::pauli(Axis::Z)).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0]);
        assert_eq!(e.vector(0), StateVector::basis(2, 1));
        assert_eq!(e.vector(1), StateVector::basis(2, 0));
    }

    #[test]
    fn eigh_sigma_x_with_fixed_phase() {
        let e = eigh(&ComplexMatrix::pauli(Axis::X)).unwrap();
        assert!(close(e.values[0], -1.0, 1e-14) && close(e.values[1], 1.0, 1e-14));
        let v0 = e.vector(0);
        let v1 = e.vector(1);
        // phase rule: first largest component real positive
        assert!(close(v0.amplitudes()[0].re, FRAC_1_SQRT_2, 1e-12));
        assert!(close(v0.amplitudes()[1].re, -FRAC_1_SQRT_2, 1e-12));
        assert!(close(v1.amplitudes()[0].re, FRAC_1_SQRT_2, 1e-12));
        assert!(close(v1.amplitudes()[1].re, FRAC_1_SQRT_2, 1e-12));
        assert!(v0.amplitudes().iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn eigh_identity() {
        let e = eigh(&ComplexMatrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| close(v, 1.0, 1e-14)));
        assert!(e.vectors.unitarity_defect() < 1e-12);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(
            2,
            &[c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)],
        )
        .unwrap();
        assert!(matches!(eigh(&m), Err(Error::NotHermitian { .. })));
        assert!(matches!(expm_i(&m, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigh_absorbs_roundoff_asymmetry() {
        let mut m = ComplexMatrix::pauli(Axis::Y).into_inner();
        m[(0, 1)] += c64(1e-13, 0.0);
        let e = eigh(&ComplexMatrix::new(m).unwrap()).unwrap();
        assert!(close(e.values[0], -1.0, 1e-12));
    }

    #[test]
    fn non_finite_rejected() {
        let m = DMatrix::from_element(2, 2, c64(f64::NAN, 0.0));
        assert!(matches!(ComplexMatrix::new(m), Err(Error::NonFinite)));
    }

    #[test]
    fn expm_i_sigma_z_quarter_turn() {
        let u = expm_i(&ComplexMatrix::pauli(Axis::Z), FRAC_PI_2).unwrap();
        let want = ComplexMatrix::from_rows(
            2,
            &[c64(0.0, -1.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 1.0)],
        )
        .unwrap();
        assert!(u.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn expm_i_at_zero_time_is_identity() {
        let h = collective_pauli(Axis::X, 3);
        let u = expm_i(&h, 0.0).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-13);
    }

    #[test]
    fn rotation_matches_exponential() {
        for axis in Axis::ALL {
            let r = rotation(axis, 0.7, &[0, 2], 3);
            let gen = &site_operator(&ComplexMatrix::pauli(axis), 0, 3)
                + &site_operator(&ComplexMatrix::pauli(axis), 2, 3);
            let u = expm_i(&gen, 0.35).unwrap();
            assert!(r.max_abs_diff(&u) < 1e-13, "axis {axis}");
        }
    }

    #[test]
    fn state_normalization_and_errors() {
        let s = StateVector::new(vec![c64(3.0, 0.0), c64(0.0, 4.0)]).unwrap();
        assert!(close(s.norm(), 1.0, 1e-15));
        assert!(StateVector::new(vec![c64(0.0, 0.0)]).is_err());
        assert!(StateVector::new(vec![]).is_err());
    }
}
