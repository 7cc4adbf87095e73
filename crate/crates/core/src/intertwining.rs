//! Construction of a second operator `Theta2` out of a seed `Theta1` and an
//! intertwiner `X : H2 -> H1` such that `X Theta2 = Theta1 X`, under three
//! regimes:
//!
//! * [`Case::Invertible`]: `Theta2 = X^{-1} Theta1 X`;
//! * [`Case::InvertibleCommuting`]: as above, with `[X X^H, Theta1] = 0`;
//! * [`Case::NonInvertible`]: `X` has no inverse but `N2 = X^H X > 0` and
//!   `[N1, Theta1] = 0`, where `Theta2 = N2^{-1} X^H Theta1 X`.
//!
//! Eigenvectors travel through `X^H`; the indices whose eigenvector lands in
//! `ker X^H` form the kernel set and drop out of the spectrum of `Theta2`.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    biorthogonal_partner, c64, commutator, diagonal, eig, identity, inner, inverse_condition,
    is_self_adjoint, is_strictly_positive, op_norm, real, BiorthogonalSystem, ComplexMatrix,
    ComplexVector, Eigensystem, C64, DEFAULT_KERNEL_TOL, DEFAULT_MULTIPLICITY_TOL,
};
use crate::report::{argmax, RelationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Invertible,
    InvertibleCommuting,
    NonInvertible,
}

impl Case {
    pub fn is_invertible(self) -> bool {
        matches!(self, Case::Invertible | Case::InvertibleCommuting)
    }

    /// Regimes where `[N1, Theta1] = 0` and `N2` is invertible.
    pub fn is_commuting(self) -> bool {
        matches!(self, Case::InvertibleCommuting | Case::NonInvertible)
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::Invertible => "invertible",
            Case::InvertibleCommuting => "invertible_commuting",
            Case::NonInvertible => "non_invertible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value threshold for kernels and invertibility.
    pub kernel: f64,
    /// Relative tolerance for commutation / positivity preconditions and
    /// for relation checks.
    pub relation: f64,
    /// Absolute eigenvalue gap for the simple-spectrum test.
    pub multiplicity: f64,
    /// Gap below which two pairing constants are reported as degenerate.
    pub degeneracy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kernel: DEFAULT_KERNEL_TOL,
            relation: 1e-9,
            multiplicity: DEFAULT_MULTIPLICITY_TOL,
            degeneracy: 1e-8,
        }
    }
}

fn check_shapes(theta1: &ComplexMatrix, x: &ComplexMatrix) -> Result<()> {
    if !theta1.is_square() || theta1.is_empty() {
        return Err(Error::Dimension(format!("Theta1 must be square, got {:?}", theta1.shape())));
    }
    if x.nrows() != theta1.nrows() || x.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "X must map H2 into H1 (have {} rows to match Theta1), got {:?}",
            theta1.nrows(),
            x.shape()
        )));
    }
    Ok(())
}

/// `||[N1, Theta1]||` relative to `||N1|| ||Theta1||`.
fn relative_commutator(n1: &ComplexMatrix, theta1: &ComplexMatrix) -> f64 {
    let c = commutator(n1, theta1).expect("shapes checked").norm();
    let scale = op_norm(n1) * op_norm(theta1);
    if scale == 0.0 {
        c
    } else {
        c / scale
    }
}

/// Decide which of the three regimes applies to `(Theta1, X)`.
pub fn classify(theta1: &ComplexMatrix, x: &ComplexMatrix, tol: f64) -> Result<Case> {
    check_shapes(theta1, x)?;
    let n1 = x * x.adjoint();
    let commuting = relative_commutator(&n1, theta1) <= tol;
    if x.is_square() && inverse_condition(x) > tol {
        return Ok(if commuting {
            Case::InvertibleCommuting
        } else {
            Case::Invertible
        });
    }
    if x.is_square() {
        return Err(Error::Unsupported(
            "square X is singular; then det(X^H X) = 0, so no square non-invertible X can have \
             N2 = X^H X strictly positive (finite-dimensional no-go)"
                .into(),
        ));
    }
    let n2 = x.adjoint() * x;
    if !is_strictly_positive(&n2, tol) {
        return Err(Error::Unsupported(
            "X is not invertible and N2 = X^H X is not strictly positive".into(),
        ));
    }
    if !commuting {
        return Err(Error::Unsupported(
            "X is not invertible and [X X^H, Theta1] does not vanish".into(),
        ));
    }
    Ok(Case::NonInvertible)
}

/// `Theta2 = X^{-1} Theta1 X`.
pub fn build_case1(theta1: &ComplexMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_shapes(theta1, x)?;
    if !x.is_square() || inverse_condition(x) <= 1e-13 {
        return Err(Error::Singular("X is not invertible".into()));
    }
    x.clone()
        .lu()
        .solve(&(theta1 * x))
        .ok_or_else(|| Error::Singular("X is not invertible".into()))
}

/// Eigenvectors `X^{-1} phi_n` of the case-1 operator.
pub fn case1_eigenvectors(x: &ComplexMatrix, phi: &[ComplexVector]) -> Result<Vec<ComplexVector>> {
    let lu = x.clone().lu();
    phi.iter()
        .map(|v| lu.solve(v).ok_or_else(|| Error::Singular("X is not invertible".into())))
        .collect()
}

/// `Theta2 = N2^{-1} (X^H Theta1 X)` once `N2 > 0` and `[N1, Theta1] = 0`
/// have been verified.
pub fn build_case3(theta1: &ComplexMatrix, x: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    check_shapes(theta1, x)?;
    let xd = x.adjoint();
    let n2 = &xd * x;
    if !is_strictly_positive(&n2, tol) {
        let hint = if x.is_square() {
            " (a square non-invertible X never qualifies)"
        } else {
            ""
        };
        return Err(Error::Regime(format!("N2 = X^H X is not strictly positive{hint}")));
    }
    let n1 = x * &xd;
    let rel = relative_commutator(&n1, theta1);
    if rel > tol {
        return Err(Error::Regime(format!(
            "[N1, Theta1] does not vanish (relative residual {rel:.3e} > {tol:.1e})"
        )));
    }
    let chol = Cholesky::new(n2).ok_or_else(|| Error::Regime("N2 has no Cholesky factor".into()))?;
    Ok(chol.solve(&(&xd * theta1 * x)))
}

/// Image of an eigensystem of `Theta1` under `X^H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappedEigensystem {
    pub phi2: Vec<ComplexVector>,
    /// Indices `n` with `X^H phi_n = 0`.
    pub kernel_set: Vec<usize>,
    /// `(||phi2_n|| / ||phi1_n||)^2`, `None` on the kernel set.
    pub tilde_k: Vec<Option<f64>>,
    pub n1_residuals: Vec<Option<f64>>,
    pub n2_residuals: Vec<Option<f64>>,
    /// Groups of non-kernel indices sharing a pairing constant.
    pub degeneracy_classes: Vec<Vec<usize>>,
    /// True when every class is a singleton, in which case the surviving
    /// `phi1` are forced to be mutually orthogonal.
    pub orthogonality_forced: bool,
}

pub fn map_eigensystem(x: &ComplexMatrix, es: &Eigensystem, tol: f64) -> Result<MappedEigensystem> {
    map_eigensystem_with(x, es, tol, Tolerances::default().degeneracy)
}

fn map_eigensystem_with(
    x: &ComplexMatrix,
    es: &Eigensystem,
    tol: f64,
    degeneracy_tol: f64,
) -> Result<MappedEigensystem> {
    if es.vectors.iter().any(|v| v.len() != x.nrows()) {
        return Err(Error::Dimension("eigenvectors do not live in the range space of X".into()));
    }
    let xd = x.adjoint();
    let n1 = x * &xd;
    let n2 = &xd * x;
    if !es.simple_spectrum {
        // Degenerate eigenvalues are fine only if the supplied vectors already
        // diagonalize N1; a simple spectrum would force it.
        let scale = op_norm(&n1).max(1.0);
        let aligned = es.vectors.iter().all(|v| {
            let rayleigh = inner(v, &(&n1 * v)) / real(v.norm_squared());
            (&n1 * v - v * rayleigh).norm() <= 1e-8 * scale * v.norm()
        });
        if !aligned {
            return Err(Error::Multiplicity(
                "repeated eigenvalues and the eigenvectors do not diagonalize X X^H".into(),
            ));
        }
    }
    let x_scale = op_norm(x).max(1.0);

    let mut mapped = MappedEigensystem {
        phi2: Vec::with_capacity(es.len()),
        kernel_set: Vec::new(),
        tilde_k: Vec::with_capacity(es.len()),
        n1_residuals: Vec::with_capacity(es.len()),
        n2_residuals: Vec::with_capacity(es.len()),
        degeneracy_classes: Vec::new(),
        orthogonality_forced: true,
    };
    for (n, phi1) in es.vectors.iter().enumerate() {
        let phi2 = &xd * phi1;
        let (norm1, norm2) = (phi1.norm(), phi2.norm());
        if norm2 <= tol * x_scale * norm1 {
            mapped.kernel_set.push(n);
            mapped.tilde_k.push(None);
            mapped.n1_residuals.push(None);
            mapped.n2_residuals.push(None);
        } else {
            let k = (norm2 / norm1).powi(2);
            mapped.n1_residuals.push(Some((&n1 * phi1 - phi1 * real(k)).norm()));
            mapped.n2_residuals.push(Some((&n2 * &phi2 - &phi2 * real(k)).norm()));
            mapped.tilde_k.push(Some(k));
        }
        mapped.phi2.push(phi2);
    }

    let mut survivors: Vec<(usize, f64)> = mapped
        .tilde_k
        .iter()
        .enumerate()
        .filter_map(|(n, k)| k.map(|k| (n, k)))
        .collect();
    survivors.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (n, k) in survivors {
        if k - last <= degeneracy_tol * k.max(1.0) {
            classes.last_mut().expect("class exists").push(n);
        } else {
            classes.push(vec![n]);
        }
        last = k;
    }
    classes.iter_mut().for_each(|c| c.sort_unstable());
    classes.sort();
    mapped.orthogonality_forced = classes.iter().all(|c| c.len() == 1);
    mapped.degeneracy_classes = classes;
    Ok(mapped)
}

/// `phi1_n = X phi2_n / k_n`, the inverse of `phi2_n = X^H phi1_n`.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub phi1: Vec<ComplexVector>,
    /// `||reconstructed - original||` when the originals were supplied.
    pub residuals: Option<Vec<f64>>,
}

pub fn inverse_map(
    x: &ComplexMatrix,
    phi2: &[ComplexVector],
    tilde_k: &[f64],
    original: Option<&[ComplexVector]>,
) -> Result<Reconstruction> {
    if phi2.len() != tilde_k.len() {
        return Err(Error::Dimension("one pairing constant per vector required".into()));
    }
    let phi1 = phi2
        .iter()
        .zip(tilde_k)
        .enumerate()
        .map(|(index, (v, &k))| {
            if k > 0.0 && k.is_finite() {
                Ok(x * v / real(k))
            } else {
                Err(Error::Kernel { index })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let residuals = original.map(|orig| phi1.iter().zip(orig).map(|(a, b)| (a - b).norm()).collect());
    Ok(Reconstruction { phi1, residuals })
}

/// The full tuple produced by the construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntertwiningModel {
    pub theta1: ComplexMatrix,
    pub x: ComplexMatrix,
    pub theta2: ComplexMatrix,
    pub n1: ComplexMatrix,
    pub n2: ComplexMatrix,
    pub case: Case,
    pub eigenvalues: Vec<C64>,
    pub phi1: Vec<ComplexVector>,
    pub psi1: Vec<ComplexVector>,
    /// `X^H phi1` (cases 2 and 3) or `X^{-1} phi1` (case 1).
    pub phi2: Vec<ComplexVector>,
    pub psi2: Vec<ComplexVector>,
    pub kernel_set: Vec<usize>,
    pub tilde_k: Vec<Option<f64>>,
    pub degeneracy_classes: Vec<Vec<usize>>,
    pub orthogonality_forced: bool,
    pub tolerances: Tolerances,
}

impl IntertwiningModel {
    /// Classify, build `Theta2`, diagonalize `Theta1` and map everything.
    pub fn build(theta1: ComplexMatrix, x: ComplexMatrix, tol: Tolerances) -> Result<Self> {
        let es = eig(&theta1, tol.multiplicity)?;
        Self::with_eigensystem(theta1, x, es, tol)
    }

    /// Same as [`build`](Self::build) with externally supplied eigendata.
    pub fn with_eigensystem(
        theta1: ComplexMatrix,
        x: ComplexMatrix,
        es: Eigensystem,
        tol: Tolerances,
    ) -> Result<Self> {
        let case = classify(&theta1, &x, tol.relation)?;
        let theta2 = match case {
            Case::Invertible | Case::InvertibleCommuting => build_case1(&theta1, &x)?,
            Case::NonInvertible => build_case3(&theta1, &x, tol.relation)?,
        };
        let psi1 = biorthogonal_partner(&es.vectors)?;
        let xd = x.adjoint();
        let psi2: Vec<ComplexVector> = psi1.iter().map(|v| &xd * v).collect();
        let (phi2, kernel_set, tilde_k, degeneracy_classes, orthogonality_forced) = if case.is_commuting() {
            let mapped = map_eigensystem_with(&x, &es, tol.kernel, tol.degeneracy)?;
            (
                mapped.phi2,
                mapped.kernel_set,
                mapped.tilde_k,
                mapped.degeneracy_classes,
                mapped.orthogonality_forced,
            )
        } else {
            let phi2 = case1_eigenvectors(&x, &es.vectors)?;
            (phi2, Vec::new(), vec![None; es.len()], Vec::new(), false)
        };
        Ok(Self {
            n1: &x * &xd,
            n2: &xd * &x,
            theta1,
            x,
            theta2,
            case,
            eigenvalues: es.values,
            phi1: es.vectors,
            psi1,
            phi2,
            psi2,
            kernel_set,
            tilde_k,
            degeneracy_classes,
            orthogonality_forced,
            tolerances: tol,
        })
    }

    pub fn dim1(&self) -> usize {
        self.theta1.nrows()
    }

    pub fn dim2(&self) -> usize {
        self.theta2.nrows()
    }

    pub fn in_kernel(&self, n: usize) -> bool {
        self.kernel_set.contains(&n)
    }

    /// Pairing constant of the level-2 family at index `n` (zero on the
    /// kernel set, one in case 1).
    pub fn pairing2(&self, n: usize) -> f64 {
        if self.case.is_commuting() {
            self.tilde_k[n].unwrap_or(0.0)
        } else {
            1.0
        }
    }

    pub fn level1_system(&self) -> BiorthogonalSystem {
        BiorthogonalSystem {
            phi: self.phi1.clone(),
            psi: self.psi1.clone(),
            values: self.eigenvalues.clone(),
            pairing: vec![1.0; self.phi1.len()],
        }
    }

    /// Level-2 family including kernel entries (zero vectors, zero pairing).
    pub fn level2_system(&self) -> BiorthogonalSystem {
        BiorthogonalSystem {
            phi: self.phi2.clone(),
            psi: self.psi2.clone(),
            values: self.eigenvalues.clone(),
            pairing: (0..self.phi2.len()).map(|n| self.pairing2(n)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub tolerance: f64,
    /// Restrict residual matrices to the leading block (and eigen-residuals
    /// to the leading indices) of this size.
    pub interior: Option<usize>,
}

impl VerifyOptions {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance, interior: None }
    }
}

fn restricted_norm(m: &ComplexMatrix, interior: Option<usize>) -> f64 {
    match interior {
        Some(k) => crate::operator::leading_block(m, k, k).norm(),
        None => m.norm(),
    }
}

fn max_over<'a>(
    items: impl Iterator<Item = (usize, &'a ComplexVector)>,
    residual: impl Fn(usize, &ComplexVector) -> f64,
) -> (f64, Option<usize>) {
    let mut worst = (0.0, None);
    for (n, v) in items {
        let r = residual(n, v);
        if !(r <= worst.0) {
            worst = (r, Some(n));
        }
    }
    worst
}

/// Greedy nearest matching of `found` against `targets`; returns the largest
/// distance.
fn match_spectrum(found: &[C64], targets: &[C64]) -> f64 {
    let mut pool: Vec<C64> = targets.to_vec();
    let mut worst = 0.0_f64;
    for f in found {
        let Some((j, d)) = pool
            .iter()
            .enumerate()
            .map(|(j, t)| (j, (f - t).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return f64::INFINITY;
        };
        worst = worst.max(d);
        // keep targets available for inclusion checks when counts differ
        if found.len() <= targets.len() {
            pool.swap_remove(j);
        }
    }
    worst
}

pub fn verify_relations(model: &IntertwiningModel) -> RelationReport {
    verify_relations_with(model, &VerifyOptions::new(model.tolerances.relation))
}

pub fn verify_relations_with(model: &IntertwiningModel, opts: &VerifyOptions) -> RelationReport {
    let m = model;
    let mut report = RelationReport::new(opts.tolerance);
    let interior = opts.interior;
    let in_block = |n: usize| interior.is_none_or(|k| n < k);
    let xd = m.x.adjoint();
    let (t1n, t2n, xn) = (op_norm(&m.theta1), op_norm(&m.theta2), op_norm(&m.x));

    report.check(
        "intertwining",
        restricted_norm(&(&m.x * &m.theta2 - &m.theta1 * &m.x), interior),
        t1n * xn,
    );
    let (mut p1, mut p2) = (m.theta1.clone(), m.theta2.clone());
    for power in 2..=4 {
        p1 = &p1 * &m.theta1;
        p2 = &p2 * &m.theta2;
        report.check(
            &format!("intertwining_power_{power}"),
            restricted_norm(&(&m.x * &p2 - &p1 * &m.x), interior),
            t1n.powi(power) * xn,
        );
    }
    report.check(
        "number_intertwining",
        restricted_norm(&(&m.x * &m.n2 - &m.n1 * &m.x), interior),
        xn.powi(3),
    );

    if m.case.is_commuting() {
        report.check(
            "adjoint_intertwining",
            restricted_norm(&(&m.theta2 * &xd - &xd * &m.theta1), interior),
            t1n * xn,
        );
        report.check(
            "adjoint_side_intertwining",
            restricted_norm(&(&m.x * m.theta2.adjoint() - m.theta1.adjoint() * &m.x), interior),
            t1n * xn,
        );
        report.check(
            "n1_theta1_commutator",
            restricted_norm(&(&m.n1 * &m.theta1 - &m.theta1 * &m.n1), interior),
            op_norm(&m.n1) * t1n,
        );
        report.check(
            "n2_theta2_commutator",
            restricted_norm(&(&m.n2 * &m.theta2 - &m.theta2 * &m.n2), interior),
            op_norm(&m.n2) * t2n,
        );
    } else {
        for name in [
            "adjoint_intertwining",
            "adjoint_side_intertwining",
            "n1_theta1_commutator",
            "n2_theta2_commutator",
        ] {
            report.not_applicable(name, "requires [N1, Theta1] = 0");
        }
    }

    let phi_scale = m.phi1.iter().chain(&m.psi1).map(|v| v.norm()).fold(0.0, f64::max);
    let eval = |n: usize| m.eigenvalues[n];
    let (r, at) = max_over(m.phi1.iter().enumerate().filter(|(n, _)| in_block(*n)), |n, v| {
        (&m.theta1 * v - v * eval(n)).norm()
    });
    report.check_at("theta1_eigen", r, t1n * phi_scale, at);
    let (r, at) = max_over(m.psi1.iter().enumerate().filter(|(n, _)| in_block(*n)), |n, v| {
        (m.theta1.adjoint() * v - v * eval(n).conj()).norm()
    });
    report.check_at("theta1_adjoint_eigen", r, t1n * phi_scale, at);

    let survives = |n: usize| !m.in_kernel(n) && in_block(n);
    let phi2_scale = m.phi2.iter().chain(&m.psi2).map(|v| v.norm()).fold(0.0, f64::max);
    let (r, at) = max_over(m.phi2.iter().enumerate().filter(|(n, _)| survives(*n)), |n, v| {
        (&m.theta2 * v - v * eval(n)).norm()
    });
    report.check_at("theta2_eigen", r, t2n * phi2_scale, at);
    let (r, at) = max_over(m.psi2.iter().enumerate().filter(|(n, _)| survives(*n)), |n, v| {
        (m.theta2.adjoint() * v - v * eval(n).conj()).norm()
    });
    report.check_at("theta2_adjoint_eigen", r, t2n * phi2_scale, at);

    let pairing1 = argmax(m.phi1.iter().enumerate().filter(|(k, _)| in_block(*k)).flat_map(|(k, f)| {
        m.psi1
            .iter()
            .enumerate()
            .map(move |(n, g)| (inner(f, g) - real((k == n) as u8 as f64)).norm())
    }));
    report.check("pairing_level1", pairing1.map_or(0.0, |p| p.1), 1.0);

    let mut worst2 = (0.0_f64, None);
    for (k, f) in m.phi2.iter().enumerate().filter(|(k, _)| in_block(*k)) {
        for (n, g) in m.psi2.iter().enumerate().filter(|(n, _)| in_block(*n)) {
            let target = if k == n { m.pairing2(n) } else { 0.0 };
            let r = (inner(f, g) - real(target)).norm();
            if !(r <= worst2.0) {
                worst2 = (r, Some(n));
            }
        }
    }
    report.check_at("pairing_level2", worst2.0, phi2_scale * phi2_scale, worst2.1);

    if m.case.is_commuting() {
        let n1_scale = op_norm(&m.n1);
        let (r, at) = max_over(m.phi1.iter().enumerate().filter(|(n, _)| survives(*n)), |n, v| {
            (&m.n1 * v - v * real(m.pairing2(n))).norm()
        });
        report.check_at("n1_eigen", r, n1_scale * phi_scale, at);
        let (r, at) = max_over(m.phi2.iter().enumerate().filter(|(n, _)| survives(*n)), |n, v| {
            (&m.n2 * v - v * real(m.pairing2(n))).norm()
        });
        report.check_at("n2_eigen", r, n1_scale * phi2_scale, at);

        let (r, at) = max_over(m.phi2.iter().enumerate().filter(|(n, _)| survives(*n)), |n, v| {
            (&m.x * v / real(m.pairing2(n)) - &m.phi1[n]).norm()
        });
        report.check_at("inverse_map", r, phi_scale, at);

        let (r, at) = max_over(
            m.phi2.iter().enumerate().filter(|(n, _)| m.in_kernel(*n) && in_block(*n)),
            |n, v| v.norm() + m.psi2[n].norm() + (&m.n1 * &m.phi1[n]).norm(),
        );
        report.check_at("kernel_vanishing", r, phi_scale * xn.max(1.0), at);

        if m.case == Case::InvertibleCommuting {
            let tilde = case1_eigenvectors(&m.x, &m.phi1);
            match tilde {
                Ok(tilde) => {
                    // case-2 proportionality phi~_n = k_n phi2_n with k_n = 1 / k~_n
                    let (r, at) = max_over(tilde.iter().enumerate().filter(|(n, _)| survives(*n)), |n, v| {
                        (v - &m.phi2[n] / real(m.pairing2(n))).norm()
                    });
                    report.check_at("case2_proportionality", r, phi_scale, at);
                }
                Err(e) => report.fail("case2_proportionality", e.to_string()),
            }
        }
    } else {
        for name in ["n1_eigen", "n2_eigen", "inverse_map", "kernel_vanishing"] {
            report.not_applicable(name, "requires [N1, Theta1] = 0");
        }
    }

    if interior.is_none() {
        match eig(&m.theta2, 0.0) {
            Ok(es2) => {
                let targets: Vec<C64> = (0..m.eigenvalues.len())
                    .filter(|&n| !m.in_kernel(n))
                    .map(eval)
                    .collect();
                let d = match_spectrum(&es2.values, &targets);
                let scale = targets.iter().map(|z| z.norm()).fold(1.0, f64::max);
                let entry = report.check("spectrum_inclusion", d, scale);
                if es2.values.len() != targets.len() {
                    entry.note = Some(format!(
                        "Theta2 has {} eigenvalues, {} survive the kernel filter",
                        es2.values.len(),
                        targets.len()
                    ));
                }
            }
            Err(e) => report.fail("spectrum_inclusion", e.to_string()),
        }
    } else {
        report.not_applicable("spectrum_inclusion", "not meaningful on a truncated block");
    }
    report
}

/// Numerical form of the self-adjointness transfer statements between the
/// two operators.
pub fn adjointness_transfer_check(model: &IntertwiningModel, tol: f64) -> RelationReport {
    let m = model;
    let mut report = RelationReport::new(tol);
    if !m.case.is_commuting() {
        for name in [
            "n2_theta2_commutator",
            "theta2_self_adjoint",
            "theta1_self_adjoint",
            "x_n2_inverse",
            "theta1_reconstruction",
        ] {
            report.not_applicable(name, "requires [N1, Theta1] = 0 and N2 > 0");
        }
        return report;
    }
    let (t1n, t2n) = (op_norm(&m.theta1), op_norm(&m.theta2));
    report.check(
        "n2_theta2_commutator",
        (&m.n2 * &m.theta2 - &m.theta2 * &m.n2).norm(),
        op_norm(&m.n2) * t2n,
    );

    if is_self_adjoint(&m.theta1, tol) {
        report.check("theta2_self_adjoint", (&m.theta2 - m.theta2.adjoint()).norm(), t2n);
    } else {
        report.not_applicable("theta2_self_adjoint", "Theta1 is not self-adjoint");
    }

    let n1_positive = is_strictly_positive(&m.n1, tol);
    if !n1_positive {
        report.not_applicable("theta1_self_adjoint", "N1 is not strictly positive");
    } else if !is_self_adjoint(&m.theta2, tol) {
        report.not_applicable("theta1_self_adjoint", "Theta2 is not self-adjoint");
    } else {
        report.check("theta1_self_adjoint", (&m.theta1 - m.theta1.adjoint()).norm(), t1n);
    }

    if n1_positive {
        let n1_chol = Cholesky::new(m.n1.clone()).expect("positive N1");
        let n2_chol = Cholesky::new(m.n2.clone()).expect("positive N2");
        let lhs = n2_chol.solve(&m.x.adjoint()).adjoint(); // X N2^{-1}
        let rhs = n1_chol.solve(&m.x); // N1^{-1} X
        report.check("x_n2_inverse", (lhs - rhs).norm(), op_norm(&m.x));
        let rebuilt = n1_chol.solve(&(&m.x * &m.theta2 * m.x.adjoint()));
        report.check("theta1_reconstruction", (rebuilt - &m.theta1).norm(), t1n);
    } else {
        report.not_applicable("x_n2_inverse", "N1 is not invertible");
        report.not_applicable("theta1_reconstruction", "N1 is not invertible");
    }
    report
}

#[derive(Debug, Clone)]
pub struct AdjointDescent {
    /// `N2^{-1} (X^H Theta1^H X)`.
    pub descended_adjoint: ComplexMatrix,
    /// `Theta2^H`.
    pub theta2_adjoint: ComplexMatrix,
    pub difference: f64,
}

/// Compare building the second operator from `Theta1^H` with taking the
/// adjoint of `Theta2`.
pub fn adjoint_descent(model: &IntertwiningModel) -> Result<AdjointDescent> {
    if !model.case.is_commuting() {
        return Err(Error::Regime(
            "adjoint descent needs [N1, Theta1] = 0 and N2 > 0".into(),
        ));
    }
    let chol = Cholesky::new(model.n2.clone())
        .ok_or_else(|| Error::Regime("N2 is not strictly positive".into()))?;
    let descended_adjoint = chol.solve(&(model.x.adjoint() * model.theta1.adjoint() * &model.x));
    let theta2_adjoint = model.theta2.adjoint();
    let difference = (&descended_adjoint - &theta2_adjoint).norm();
    Ok(AdjointDescent {
        descended_adjoint,
        theta2_adjoint,
        difference,
    })
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
    gaussian_matrix(rng, dim, dim).qr().q()
}

/// Positive singular values in runs of 1 to 3 equal entries, so that
/// `X X^H` has degenerate eigenspaces.
fn grouped_singular_values(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    loop {
        let mut groups: Vec<Vec<f64>> = Vec::new();
        let mut used = 0;
        while used < count {
            let size = rng.random_range(1..=3).min(count - used);
            let value: f64 = rng.random_range(0.5..2.0);
            groups.push(vec![value; size]);
            used += size;
        }
        let mut squares: Vec<f64> = groups.iter().map(|g| g[0] * g[0]).collect();
        squares.sort_by(f64::total_cmp);
        if squares.windows(2).all(|w| w[1] - w[0] > 0.05) {
            return groups;
        }
    }
}

fn random_block(rng: &mut ChaCha8Rng, size: usize, hermitian: bool) -> ComplexMatrix {
    let g = gaussian_matrix(rng, size, size);
    if hermitian {
        (&g + g.adjoint()) * real(0.5)
    } else {
        g
    }
}

/// `Theta1 = W B W^H` with `B` block-diagonal over the given block sizes;
/// resampled until the spectrum is simple and well separated.
fn commuting_theta(
    rng: &mut ChaCha8Rng,
    w: &ComplexMatrix,
    block_sizes: &[usize],
    hermitian: bool,
) -> ComplexMatrix {
    let dim = w.nrows();
    for _ in 0..1000 {
        let mut b = ComplexMatrix::zeros(dim, dim);
        let mut offset = 0;
        for &size in block_sizes {
            b.view_mut((offset, offset), (size, size))
                .copy_from(&random_block(rng, size, hermitian));
            offset += size;
        }
        let theta = w * b * w.adjoint();
        if let Ok(es) = eig(&theta, 1e-2) {
            if es.simple_spectrum && inverse_condition(&es.vector_matrix()) > 1e-4 {
                return theta;
            }
        }
    }
    unreachable!("random blocks keep producing degenerate spectra")
}

fn generate_pair(dim1: usize, dim2: usize, seed: u64, hermitian: bool) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if dim2 == 0 || dim2 > dim1 {
        return Err(Error::Dimension(format!(
            "need dim1 > dim2 >= 1, got dim1 = {dim1}, dim2 = {dim2}"
        )));
    }
    if dim2 == dim1 {
        return Err(Error::Dimension(
            "dim2 = dim1 would need a square non-invertible X with N2 > 0, which cannot exist".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_unitary(&mut rng, dim1);
    let v = random_unitary(&mut rng, dim2);
    let groups = grouped_singular_values(&mut rng, dim2);
    let sigma: Vec<C64> = groups.iter().flatten().map(|&s| real(s)).collect();
    let mut s = ComplexMatrix::zeros(dim1, dim2);
    s.view_mut((0, 0), (dim2, dim2)).copy_from(&diagonal(&sigma));
    let x = &w * s * v.adjoint();

    let mut blocks: Vec<usize> = groups.iter().map(Vec::len).collect();
    blocks.push(dim1 - dim2);
    let theta1 = commuting_theta(&mut rng, &w, &blocks, hermitian);
    Ok((theta1, x))
}

/// Random `(Theta1, X)` with `X : C^dim2 -> C^dim1` of full column rank and
/// `[X X^H, Theta1] = 0`. `X X^H` has degenerate eigenspaces so the
/// eigenvectors of `Theta1` are not orthogonal in general.
pub fn make_commuting_pair(dim1: usize, dim2: usize, seed: u64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    generate_pair(dim1, dim2, seed, false)
}

/// [`make_commuting_pair`] with a self-adjoint `Theta1`.
pub fn make_hermitian_commuting_pair(
    dim1: usize,
    dim2: usize,
    seed: u64,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    generate_pair(dim1, dim2, seed, true)
}

/// Square invertible `X` with `[X X^H, Theta1] = 0`.
pub fn make_invertible_commuting_pair(
    dim: usize,
    seed: u64,
    hermitian: bool,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if dim == 0 {
        return Err(Error::Dimension("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_unitary(&mut rng, dim);
    let v = random_unitary(&mut rng, dim);
    let groups = grouped_singular_values(&mut rng, dim);
    let sigma: Vec<C64> = groups.iter().flatten().map(|&s| real(s)).collect();
    let x = &w * diagonal(&sigma) * v.adjoint();
    let blocks: Vec<usize> = groups.iter().map(Vec::len).collect();
    let theta1 = commuting_theta(&mut rng, &w, &blocks, hermitian);
    Ok((theta1, x))
}

/// `X` with a single entry shifted, for fault injection.
pub fn perturb_entry(x: &ComplexMatrix, row: usize, col: usize, delta: f64) -> ComplexMatrix {
    let mut y = x.clone();
    y[(row, col)] += real(delta);
    y
}

/// `count` pairs of complex Gaussian vectors in `C^dim` supported on the
/// first `support` coordinates.
pub fn random_vector_pairs(
    dim: usize,
    support: usize,
    count: usize,
    seed: u64,
) -> Vec<(ComplexVector, ComplexVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = support.min(dim);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut v = ComplexVector::zeros(dim);
        for k in 0..support {
            v[k] = c64(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        v
    };
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

/// Convenience: identity intertwiner on `C^dim`.
pub fn identity_intertwiner(dim: usize) -> ComplexMatrix {
    identity(dim)
}
