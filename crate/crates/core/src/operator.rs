//! Dense complex linear algebra shared by every other module: adjoints,
//! commutators, numerical kernels, general eigensystems, biorthogonal
//! partners, positivity tests and generalized factorials.
//!
//! Every finite truncation of an operator is a [`ComplexMatrix`]; vectors are
//! column vectors and the inner product is antilinear in its first slot,
//! `<f, g> = f^H g`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Default relative threshold for the numerical null space.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-10;
/// Default absolute eigenvalue gap below which two eigenvalues are treated
/// as a multiplet.
pub const DEFAULT_MULTIPLICITY_TOL: f64 = 1e-8;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `<f, g>` with the first argument conjugated.
#[inline]
pub fn inner(f: &ComplexVector, g: &ComplexVector) -> C64 {
    f.dotc(g)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Conjugate transpose.
pub fn adjoint(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint()
}

/// `AB - BA`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || !b.is_square() || a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "commutator needs two square matrices of equal size, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value divided by the largest; zero for a zero matrix.
pub fn inverse_condition(m: &ComplexMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

/// Rotate `v` so that its largest-magnitude component is real and positive.
/// Near-ties (within a relative 1e-8) resolve to the lowest index, which
/// keeps the choice stable under rounding noise.
pub fn fix_phase(v: &mut ComplexVector) {
    let max = v.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-8))
        .expect("a component attains the maximum");
    let phase = v[pivot] / v[pivot].norm();
    v.iter_mut().for_each(|z| *z /= phase);
}

/// Orthonormal basis of the numerical null space of `m`, i.e. right singular
/// vectors with `sigma <= tol * sigma_max`. Empty when the kernel is trivial.
pub fn kernel_basis(m: &ComplexMatrix, tol: f64) -> Vec<ComplexVector> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Vec::new();
    }
    // Pad wide matrices with zero rows so the SVD returns a full V.
    let work = if rows < cols {
        let mut padded = ComplexMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = SVD::new(work, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0_f64, f64::max);
    let mut basis: Vec<(f64, ComplexVector)> = sigma
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol * sigma_max)
        .map(|(i, &s)| (s, v_t.row(i).adjoint()))
        .collect();
    basis.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vectors: Vec<ComplexVector> = basis.into_iter().map(|(_, v)| v).collect();
    if vectors.len() == 1 {
        fix_phase(&mut vectors[0]);
    }
    vectors
}

/// Eigenvalues and unit eigenvectors of a general complex square matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eigensystem {
    pub values: Vec<C64>,
    pub vectors: Vec<ComplexVector>,
    pub multiplicity_tolerance: f64,
    pub simple_spectrum: bool,
    /// `max_n ||M v_n - e_n v_n||` at construction time.
    pub max_residual: f64,
}

impl Eigensystem {
    /// Wrap externally known eigendata (for instance closed-form eigenvectors of a
    /// fixture). Vectors are kept as given, not normalized.
    pub fn from_parts(
        values: Vec<C64>,
        vectors: Vec<ComplexVector>,
        multiplicity_tolerance: f64,
    ) -> Result<Self> {
        if values.len() != vectors.len() {
            return Err(Error::Dimension(format!(
                "{} eigenvalues but {} eigenvectors",
                values.len(),
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| v.norm() == 0.0) {
            return Err(Error::Degenerate("zero eigenvector".into()));
        }
        let simple_spectrum = has_simple_spectrum(&values, multiplicity_tolerance);
        Ok(Self {
            values,
            vectors,
            multiplicity_tolerance,
            simple_spectrum,
            max_residual: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Column matrix of the eigenvectors.
    pub fn vector_matrix(&self) -> ComplexMatrix {
        columns(&self.vectors)
    }

    /// `||M v_n - e_n v_n||` for every pair.
    pub fn residuals(&self, m: &ComplexMatrix) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.vectors)
            .map(|(&e, v)| (m * v - v * e).norm())
            .collect()
    }
}

fn has_simple_spectrum(values: &[C64], tol: f64) -> bool {
    values
        .iter()
        .enumerate()
        .all(|(i, a)| values[i + 1..].iter().all(|b| (a - b).norm() > tol))
}

/// Full eigendecomposition through a complex Schur form `M = Q T Q^H`; the
/// eigenvectors of the triangular factor come from back substitution.
/// Output is sorted by (real, imaginary) part.
pub fn eig(m: &ComplexMatrix, multiplicity_tolerance: f64) -> Result<Eigensystem> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::Dimension(format!(
            "eig needs a non-empty square matrix, got {:?}",
            m.shape()
        )));
    }
    if !is_finite(m) {
        return Err(Error::Parse("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    let scale = m.norm();
    if scale == 0.0 {
        let vectors = (0..n).map(|i| ComplexVector::from_fn(n, |r, _| real((r == i) as u8 as f64))).collect();
        return Ok(Eigensystem {
            values: vec![C64::default(); n],
            vectors,
            multiplicity_tolerance,
            simple_spectrum: n == 1,
            max_residual: 0.0,
        });
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000 * n).ok_or_else(|| Error::Numerical {
        message: "Schur iteration did not converge".into(),
        residual: f64::NAN,
    })?;
    let (q, t) = schur.unpack();
    let small = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);

    let mut pairs: Vec<(C64, ComplexVector)> = (0..n)
        .map(|k| {
            let lambda = t[(k, k)];
            let mut y = ComplexVector::zeros(n);
            y[k] = real(1.0);
            for i in (0..k).rev() {
                let mut s = C64::default();
                for j in i + 1..=k {
                    s += t[(i, j)] * y[j];
                }
                let mut d = t[(i, i)] - lambda;
                if d.norm() < small {
                    d = real(small);
                }
                y[i] = -s / d;
            }
            let mut v = &q * y;
            let norm = v.norm();
            v /= real(norm);
            fix_phase(&mut v);
            (lambda, v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));

    let (values, vectors): (Vec<C64>, Vec<ComplexVector>) = pairs.into_iter().unzip();
    let max_residual = values
        .iter()
        .zip(&vectors)
        .map(|(&e, v)| (m * v - v * e).norm())
        .fold(0.0_f64, f64::max);
    if !(max_residual <= 1e-6 * scale) {
        return Err(Error::Numerical {
            message: "eigenvector residual too large".into(),
            residual: max_residual,
        });
    }
    Ok(Eigensystem {
        simple_spectrum: has_simple_spectrum(&values, multiplicity_tolerance),
        values,
        vectors,
        multiplicity_tolerance,
        max_residual,
    })
}

/// Stack vectors as the columns of a matrix.
pub fn columns(vectors: &[ComplexVector]) -> ComplexMatrix {
    let rows = vectors.first().map_or(0, |v| v.len());
    ComplexMatrix::from_fn(rows, vectors.len(), |i, j| vectors[j][i])
}

pub fn split_columns(m: &ComplexMatrix) -> Vec<ComplexVector> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// The unique family `psi` with `<phi_k, psi_n> = delta_kn`: the columns of
/// `(Phi^{-1})^H` where `Phi` has the `phi` vectors as columns.
pub fn biorthogonal_partner(phi: &[ComplexVector]) -> Result<Vec<ComplexVector>> {
    let m = columns(phi);
    if !m.is_square() || m.is_empty() {
        return Err(Error::Dimension(format!(
            "a biorthogonal partner needs a spanning square family, got {} vectors of length {}",
            phi.len(),
            m.nrows()
        )));
    }
    let rcond = inverse_condition(&m);
    if rcond <= 1e-13 {
        return Err(Error::Singular(format!(
            "vector family is numerically rank deficient (1/cond = {rcond:.3e})"
        )));
    }
    let inv = m
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("vector family matrix is singular".into()))?;
    Ok(split_columns(&inv.adjoint()))
}

/// Smallest eigenvalue of the Hermitian part `(M + M^H) / 2`.
pub fn min_hermitian_eigenvalue(m: &ComplexMatrix) -> f64 {
    let h = (m + m.adjoint()) * real(0.5);
    SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Self-adjoint within `tol * ||M||` and every eigenvalue above `tol * ||M||`.
pub fn is_strictly_positive(m: &ComplexMatrix, tol: f64) -> bool {
    if !m.is_square() || m.is_empty() {
        return false;
    }
    let scale = op_norm(m);
    if scale == 0.0 {
        return false;
    }
    let asym = (m - m.adjoint()).norm();
    asym <= tol * scale && min_hermitian_eigenvalue(m) > tol * scale
}

pub fn is_self_adjoint(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).norm() <= tol * op_norm(m).max(1.0)
}

/// Truncated sequence `0 <= e_0, e_1, ..., e_{N-1}` used as generalized
/// factorial base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSequence {
    values: Vec<f64>,
}

impl EpsilonSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("empty epsilon sequence".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::Parameter(format!(
                "epsilon_{i} = {v} is not a finite nonnegative number"
            )));
        }
        Ok(Self { values })
    }

    /// `e_k = slope * k` for `k < len`.
    pub fn linear(slope: f64, len: usize) -> Result<Self> {
        Self::new((0..len).map(|k| slope * k as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, n: usize) -> f64 {
        self.values[n]
    }

    /// `0 = e_0 < e_1 < e_2 < ...`
    pub fn strictly_increasing(&self) -> bool {
        self.values[0] == 0.0 && self.values.windows(2).all(|w| w[1] > w[0])
    }

    /// `e_n! = e_1 e_2 ... e_n`, with `e_0! = 1`.
    pub fn factorial(&self, n: usize) -> f64 {
        generalized_factorial(self, n)
    }

    /// Natural log of `e_n!`; `-inf` when a factor vanishes.
    pub fn ln_factorial(&self, n: usize) -> f64 {
        assert!(n < self.values.len(), "index {n} beyond truncation {}", self.values.len());
        self.values[1..=n].iter().map(|e| e.ln()).sum()
    }

    pub fn truncated(&self, len: usize) -> Self {
        Self {
            values: self.values[..len.min(self.values.len())].to_vec(),
        }
    }
}

/// Generalized factorial `e_1 e_2 ... e_n`; the empty product gives 1 at n = 0.
///
/// Panics when `n` lies beyond the stored truncation.
pub fn generalized_factorial(eps: &EpsilonSequence, n: usize) -> f64 {
    assert!(n < eps.len(), "index {n} beyond truncation {}", eps.len());
    eps.values[1..=n].iter().product()
}

/// Paired families with `<phi_k, psi_n> = c_n delta_kn`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiorthogonalSystem {
    pub phi: Vec<ComplexVector>,
    pub psi: Vec<ComplexVector>,
    pub values: Vec<C64>,
    pub pairing: Vec<f64>,
}

impl BiorthogonalSystem {
    pub fn new(
        phi: Vec<ComplexVector>,
        psi: Vec<ComplexVector>,
        values: Vec<C64>,
        pairing: Vec<f64>,
    ) -> Result<Self> {
        let n = phi.len();
        if psi.len() != n || values.len() != n || pairing.len() != n {
            return Err(Error::Dimension(format!(
                "system lengths disagree: phi {}, psi {}, values {}, pairing {}",
                n,
                psi.len(),
                values.len(),
                pairing.len()
            )));
        }
        let dim = phi.first().map_or(0, |v| v.len());
        if phi.iter().chain(&psi).any(|v| v.len() != dim) {
            return Err(Error::Dimension("vectors of unequal length".into()));
        }
        Ok(Self { phi, psi, values, pairing })
    }

    /// Level-1 system: partner family from [`biorthogonal_partner`], unit pairing.
    pub fn from_family(phi: Vec<ComplexVector>, values: Vec<C64>) -> Result<Self> {
        let psi = biorthogonal_partner(&phi)?;
        let pairing = vec![1.0; phi.len()];
        Self::new(phi, psi, values, pairing)
    }

    /// Orthonormal standard basis of `C^dim` with real eigenvalues `eps`.
    pub fn standard(eps: &EpsilonSequence) -> Self {
        let dim = eps.len();
        let phi: Vec<ComplexVector> = (0..dim).map(|k| unit_vector(dim, k)).collect();
        Self {
            psi: phi.clone(),
            phi,
            values: eps.values().iter().map(|&e| real(e)).collect(),
            pairing: vec![1.0; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Ambient dimension of the vectors.
    pub fn dim(&self) -> usize {
        self.phi.first().map_or(0, |v| v.len())
    }

    /// `max_{k,n} |<phi_k, psi_n> - c_n delta_kn|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (k, f) in self.phi.iter().enumerate() {
            for (n, g) in self.psi.iter().enumerate() {
                let target = if k == n { self.pairing[n] } else { 0.0 };
                worst = worst.max((inner(f, g) - target).norm());
            }
        }
        worst
    }
}

pub fn unit_vector(dim: usize, k: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(dim);
    v[k] = real(1.0);
    v
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn diagonal(values: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&ComplexVector::from_column_slice(values))
}

/// Restrict to the leading `k x k` block (or `k`-row, `k`-column corner of a
/// rectangular matrix).
pub fn leading_block(m: &ComplexMatrix, rows: usize, cols: usize) -> ComplexMatrix {
    let r = rows.min(m.nrows());
    let c = cols.min(m.ncols());
    m.view((0, 0), (r, c)).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, entries: &[(f64, f64)]) -> ComplexMatrix {
        ComplexMatrix::from_row_iterator(rows, cols, entries.iter().map(|&(r, i)| c64(r, i)))
    }

    fn x_two_level() -> ComplexMatrix {
        let h = 3f64.sqrt() / 2.0;
        mat(3, 2, &[(0.0, 0.0), (1.0, 0.0), (-h, 0.0), (-0.5, 0.0), (h, 0.0), (-0.5, 0.0)])
    }

    #[test]
    fn adjoint_of_identity_and_scalar() {
        assert_eq!(adjoint(&identity(2)), identity(2));
        let m = mat(1, 1, &[(0.0, 1.0)]);
        assert_eq!(adjoint(&m)[(0, 0)], c64(0.0, -1.0));
    }

    #[test]
    fn adjoint_of_rectangular_intertwiner() {
        let xd = adjoint(&x_two_level());
        assert_eq!(xd.shape(), (2, 3));
        let h = 3f64.sqrt() / 2.0;
        assert_eq!(xd.row(0).iter().map(|z| z.re).collect::<Vec<_>>(), vec![0.0, -h, h]);
    }

    #[test]
    fn commutator_examples() {
        let any = mat(2, 2, &[(1.0, 2.0), (3.0, 0.0), (0.0, -1.0), (4.0, 4.0)]);
        assert_eq!(commutator(&identity(2), &any).unwrap().norm(), 0.0);

        let a = diagonal(&[real(1.0), real(2.0)]);
        let b = mat(2, 2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let expected = mat(2, 2, &[(0.0, 0.0), (-1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(commutator(&a, &b).unwrap(), expected);

        assert!(matches!(commutator(&identity(2), &identity(3)), Err(Error::Dimension(_))));
        assert!(matches!(commutator(&x_two_level(), &identity(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn kernel_of_rectangular_adjoint() {
        let xd = adjoint(&x_two_level());
        let k = kernel_basis(&xd, DEFAULT_KERNEL_TOL);
        assert_eq!(k.len(), 1);
        let s = 1.0 / 3f64.sqrt();
        for i in 0..3 {
            assert!((k[0][i] - real(s)).norm() < 1e-12);
        }
    }

    #[test]
    fn invertible_matrix_has_trivial_kernel() {
        let m = mat(2, 2, &[(1.0, 0.0), (2.0, 0.0), (3.0, 1.0), (4.0, 0.0)]);
        assert!(kernel_basis(&m, DEFAULT_KERNEL_TOL).is_empty());
    }

    #[test]
    fn kernel_of_zero_matrix_is_everything() {
        assert_eq!(kernel_basis(&ComplexMatrix::zeros(2, 3), 1e-10).len(), 3);
    }

    #[test]
    fn eig_of_diagonal() {
        let es = eig(&diagonal(&[real(3.0), real(1.0), real(2.0)]), DEFAULT_MULTIPLICITY_TOL).unwrap();
        let vals: Vec<f64> = es.values.iter().map(|z| z.re).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert!((es.vectors[0][1] - real(1.0)).norm() < 1e-14);
        assert!((es.vectors[1][2] - real(1.0)).norm() < 1e-14);
        assert!((es.vectors[2][0] - real(1.0)).norm() < 1e-14);
        assert!(es.simple_spectrum);
    }

    #[test]
    fn eig_of_symmetric_block() {
        let (a, b) = (c64(1.0, 0.0), c64(0.0, 0.7));
        let m = ComplexMatrix::from_row_slice(2, 2, &[a, b, b, a]);
        let es = eig(&m, DEFAULT_MULTIPLICITY_TOL).unwrap();
        let s = 0.5f64.sqrt();
        // sorted by imaginary part: a - b first
        assert!((es.values[0] - (a - b)).norm() < 1e-12);
        assert!((es.values[1] - (a + b)).norm() < 1e-12);
        assert!((es.vectors[0][0] - real(s)).norm() < 1e-12);
        assert!((es.vectors[0][1] - real(-s)).norm() < 1e-12);
        assert!((es.vectors[1][1] - real(s)).norm() < 1e-12);
    }

    #[test]
    fn eig_flags_degenerate_spectrum() {
        let es = eig(&identity(3), DEFAULT_MULTIPLICITY_TOL).unwrap();
        assert!(!es.simple_spectrum);
        let es = eig(&diagonal(&[real(1.0), real(1.0 + 1e-9)]), DEFAULT_MULTIPLICITY_TOL).unwrap();
        assert!(!es.simple_spectrum);
    }

    #[test]
    fn partner_of_orthonormal_family_is_itself() {
        let s = 0.5f64.sqrt();
        let phi = vec![
            ComplexVector::from_vec(vec![real(s), real(s)]),
            ComplexVector::from_vec(vec![c64(0.0, s), c64(0.0, -s)]),
        ];
        let psi = biorthogonal_partner(&phi).unwrap();
        for (a, b) in phi.iter().zip(&psi) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn partner_rejects_rank_deficient_family() {
        let v = ComplexVector::from_vec(vec![real(1.0), real(2.0)]);
        assert!(matches!(biorthogonal_partner(&[v.clone(), v * real(2.0)]), Err(Error::Singular(_))));
    }

    #[test]
    fn positivity() {
        assert!(is_strictly_positive(&(identity(2) * real(1.5)), 1e-9));
        assert!(!is_strictly_positive(&ComplexMatrix::zeros(2, 2), 1e-9));
        let x = x_two_level();
        assert!(!is_strictly_positive(&(&x * x.adjoint()), 1e-9));
        let non_hermitian = mat(2, 2, &[(2.0, 0.0), (1.0, 0.0), (0.0, 0.0), (2.0, 0.0)]);
        assert!(!is_strictly_positive(&non_hermitian, 1e-9));
    }

    #[test]
    fn factorials() {
        let k = EpsilonSequence::linear(1.0, 6).unwrap();
        assert_eq!(generalized_factorial(&k, 4), 24.0);
        assert_eq!(generalized_factorial(&k, 0), 1.0);
        let hat = EpsilonSequence::linear(2.0, 5).unwrap();
        assert_eq!(generalized_factorial(&hat, 3), 48.0);
        assert!((k.ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
        assert!(k.strictly_increasing());
        assert!(EpsilonSequence::new(vec![0.0, -1.0]).is_err());
    }
}
