//! Worked examples as parametric fixtures, plus the pseudo-fermion and
//! lowering-pair (NLPB) verifiers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::intertwining::{
    adjointness_transfer_check, verify_relations_with, IntertwiningModel, Tolerances, VerifyOptions,
};
use crate::operator::{
    c64, columns, diagonal, eig, identity, inner, inverse_condition, op_norm, real, unit_vector, ComplexMatrix,
    ComplexVector, Eigensystem, EpsilonSequence, C64,
};
use crate::report::RelationReport;
use crate::{Error, Result};

pub type Params = BTreeMap<String, C64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureId {
    Ex2x2,
    Ex3x3,
    Shift,
    Block,
    CoherentDemo,
}

impl FixtureId {
    pub const ALL: [FixtureId; 5] = [
        FixtureId::Ex2x2,
        FixtureId::Ex3x3,
        FixtureId::Shift,
        FixtureId::Block,
        FixtureId::CoherentDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureId::Ex2x2 => "ex2x2",
            FixtureId::Ex3x3 => "ex3x3",
            FixtureId::Shift => "shift",
            FixtureId::Block => "block",
            FixtureId::CoherentDemo => "coherent_demo",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FixtureId::Ex2x2 => "invertible 2x2 X = [[x11, x12], [-conj x12, conj x11]] with N1 = N2 = |x11|^2 + |x12|^2",
            FixtureId::Ex3x3 => "3x3 Theta1 with eigenvalues E1, E2, E3 and a 3x2 X; E3 drops out of Theta2",
            FixtureId::Shift => "diagonal Theta1 = eps_n e^{i theta n} with X a raising map, eps_n = s n",
            FixtureId::Block => "2x2 blocks [[alpha j, beta], [beta, alpha j]] with the tight-frame X",
            FixtureId::CoherentDemo => "block fixture with alpha_k = (4k-3) alpha1, beta_k = alpha1 (eps_n = 2 n alpha1)",
        }
    }

    /// Default parameters; truncation-type entries are real counts.
    pub fn default_params(self) -> Params {
        let pairs: &[(&str, C64)] = match self {
            FixtureId::Ex2x2 => &[("x11", C64::new(1.0, 0.0)), ("x12", C64::new(0.0, 1.0))],
            FixtureId::Ex3x3 => &[
                ("E1", C64::new(1.0, 0.0)),
                ("E2", C64::new(2.0, 0.0)),
                ("E3", C64::new(3.0, 0.0)),
            ],
            FixtureId::Shift => &[("s", C64::new(1.0, 0.0)), ("theta", C64::new(0.5, 0.0))],
            FixtureId::Block => &[("alpha", C64::new(1.0, 0.0)), ("beta", C64::new(0.0, 0.5))],
            FixtureId::CoherentDemo => &[("alpha1", C64::new(1.0, 0.0))],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    pub fn default_truncation(self) -> Option<usize> {
        match self {
            FixtureId::Ex2x2 | FixtureId::Ex3x3 => None,
            _ => Some(40),
        }
    }

    /// Build from named parameters; unknown names are rejected, missing ones
    /// take their defaults.
    pub fn build(self, params: &Params, truncation: Option<usize>) -> Result<Fixture> {
        let mut p = self.default_params();
        for (k, v) in params {
            if !p.contains_key(k) {
                let known: Vec<&String> = p.keys().collect();
                return Err(Error::Parameter(format!(
                    "fixture {} has no parameter {k:?} (known: {known:?})",
                    self.name()
                )));
            }
            p.insert(k.clone(), *v);
        }
        let n = truncation.or(self.default_truncation());
        match self {
            FixtureId::Ex2x2 => fixture_2x2(p["x11"], p["x12"]),
            FixtureId::Ex3x3 => fixture_3x3(
                real_param(&p, "E1")?,
                real_param(&p, "E2")?,
                real_param(&p, "E3")?,
            ),
            FixtureId::Shift => {
                let n = n.unwrap_or(40);
                let eps = EpsilonSequence::linear(real_param(&p, "s")?, n)?;
                let theta = real_param(&p, "theta")?;
                let thetas: Vec<f64> = (0..n).map(|k| theta * k as f64).collect();
                fixture_shift(&eps, &thetas)
            }
            FixtureId::Block => {
                let n = n.unwrap_or(40);
                let alpha: Vec<C64> = (1..=n).map(|j| p["alpha"] * j as f64).collect();
                let beta = vec![p["beta"]; n];
                fixture_block(&alpha, &beta)
            }
            FixtureId::CoherentDemo => coherent_demo(real_param(&p, "alpha1")?, n.unwrap_or(40)),
        }
        .map(|mut f| {
            f.params = p;
            f
        })
    }
}

impl fmt::Display for FixtureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown fixture {s:?}")))
    }
}

fn real_param(p: &Params, name: &str) -> Result<f64> {
    let v = p[name];
    if v.im != 0.0 {
        return Err(Error::Parameter(format!("{name} must be real, got {v}")));
    }
    Ok(v.re)
}

/// A stated value next to the computed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub name: String,
    pub expected: C64,
    pub actual: C64,
}

impl Expectation {
    pub fn error(&self) -> f64 {
        (self.expected - self.actual).norm()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub id: FixtureId,
    pub params: Params,
    pub truncation: Option<usize>,
    pub model: IntertwiningModel,
    pub expectations: Vec<Expectation>,
    /// Real increasing level-1 spectrum, when the fixture has one.
    pub eps: Option<EpsilonSequence>,
}

impl Fixture {
    fn new(id: FixtureId, truncation: Option<usize>, model: IntertwiningModel) -> Self {
        Self {
            id,
            params: Params::new(),
            truncation,
            model,
            expectations: Vec::new(),
            eps: None,
        }
    }

    fn expect(&mut self, name: impl Into<String>, expected: C64, actual: C64) {
        self.expectations.push(Expectation {
            name: name.into(),
            expected,
            actual,
        });
    }

    /// Residual-type expectation: the stated value is zero.
    fn expect_zero(&mut self, name: impl Into<String>, residual: f64) {
        self.expect(name, C64::new(0.0, 0.0), C64::new(residual, 0.0));
    }

    fn expect_vector(&mut self, name: &str, expected: &ComplexVector, actual: &ComplexVector) {
        for (i, (e, a)) in expected.iter().zip(actual.iter()).enumerate() {
            self.expect(format!("{name}[{i}]"), *e, *a);
        }
    }

    fn expect_matrix(&mut self, name: &str, expected: &ComplexMatrix, actual: &ComplexMatrix) {
        for i in 0..expected.nrows() {
            for j in 0..expected.ncols() {
                self.expect(format!("{name}[{i},{j}]"), expected[(i, j)], actual[(i, j)]);
            }
        }
    }

    pub fn expectation(&self, name: &str) -> Option<&Expectation> {
        self.expectations.iter().find(|e| e.name == name)
    }

    /// All relations of the model plus every stated value, at `tol`.
    pub fn report(&self, tol: f64) -> RelationReport {
        let mut report = verify_relations_with(&self.model, &VerifyOptions::new(tol));
        for e in &self.expectations {
            report.check(&format!("expected {}", e.name), e.error(), e.expected.norm());
        }
        report
    }
}

fn fixture_tolerances() -> Tolerances {
    Tolerances::default()
}

fn residual_max<'a>(pairs: impl Iterator<Item = (&'a ComplexVector, ComplexVector)>) -> f64 {
    pairs.map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

pub fn fixture_2x2(x11: C64, x12: C64) -> Result<Fixture> {
    fixture_2x2_with(x11, x12, default_2x2_theta1())
}

fn default_2x2_theta1() -> ComplexMatrix {
    DMatrix::from_row_slice(2, 2, &[real(1.0), c64(1.0, 0.5), real(0.0), real(2.0)])
}

/// Any `theta1` works here since `N1` is a multiple of the identity.
pub fn fixture_2x2_with(x11: C64, x12: C64, theta1: ComplexMatrix) -> Result<Fixture> {
    if x11.norm() == 0.0 && x12.norm() == 0.0 {
        return Err(Error::Degenerate("X vanishes for x11 = x12 = 0".into()));
    }
    let x = DMatrix::from_row_slice(2, 2, &[x11, x12, -x12.conj(), x11.conj()]);
    let xt = x11.norm_sqr() + x12.norm_sqr();
    let model = IntertwiningModel::build(theta1, x.clone(), fixture_tolerances())?;
    let mut f = Fixture::new(FixtureId::Ex2x2, None, model);
    let m = &f.model;
    let scaled_id = identity(2) * real(xt);
    let n1 = (&m.n1 - &scaled_id).norm();
    let n2 = (&m.n2 - &scaled_id).norm();
    let inv = x.clone().try_inverse().ok_or_else(|| Error::Singular("X".into()))?;
    let inv_res = (&inv - x.adjoint() / real(xt)).norm();
    let det = x.determinant();
    // X^{-1} phi_n = phi2_n / xtilde with phi2 = X^H phi
    let mapped = residual_max(
        m.phi2
            .iter()
            .zip(&m.phi1)
            .map(|(p2, p1)| (p2, &inv * p1 * real(xt))),
    );
    f.expect("xtilde", real(xt), real(xt));
    f.expect("det X", real(xt), det);
    f.expect_zero("N1 - xtilde 1", n1);
    f.expect_zero("N2 - xtilde 1", n2);
    f.expect_zero("X^-1 - X^H / xtilde", inv_res);
    f.expect_zero("X^-1 phi - X^H phi / xtilde", mapped);
    Ok(f)
}

struct Surds {
    r2: f64,
    r3: f64,
    r6: f64,
}

const S: fn() -> Surds = || Surds {
    r2: 2f64.sqrt(),
    r3: 3f64.sqrt(),
    r6: 6f64.sqrt(),
};

fn vec_r(v: &[f64]) -> ComplexVector {
    ComplexVector::from_iterator(v.len(), v.iter().map(|&x| real(x)))
}

fn mat_r(rows: usize, cols: usize, v: &[f64]) -> ComplexMatrix {
    DMatrix::from_row_iterator(rows, cols, v.iter().map(|&x| real(x)))
}

/// Stated eigenvectors of the 3x3 `Theta1` (columns in eigenvalue order).
pub fn ex3x3_phi1() -> Vec<ComplexVector> {
    let Surds { r2, r3, r6 } = S();
    let t = (2.0f64 / 3.0).sqrt();
    vec![
        vec_r(&[-1.0 / r2 - 1.0 / r6, t, 1.0 / r2 - 1.0 / r6]),
        vec_r(&[-t - 1.0 / r2, 2.0 * t, -t + 1.0 / r2]),
        vec_r(&[1.0 / r3, 1.0 / r3, 1.0 / r3]),
    ]
}

pub fn ex3x3_psi1() -> Vec<ComplexVector> {
    let Surds { r2, r3, r6 } = S();
    let t = (2.0f64 / 3.0).sqrt();
    vec![
        vec_r(&[-r2 + 1.0 / r6, -t, r2 + 1.0 / r6]),
        vec_r(&[1.0 / r2 - 1.0 / r6, t, -(2.0 / 3.0 + 1.0 / r3).sqrt()]),
        vec_r(&[1.0 / r3, 1.0 / r3, 1.0 / r3]),
    ]
}

pub fn ex3x3_x() -> ComplexMatrix {
    let r3 = 3f64.sqrt();
    mat_r(3, 2, &[0.0, 1.0, -r3 / 2.0, -0.5, r3 / 2.0, -0.5])
}

pub fn ex3x3_phi2() -> Vec<ComplexVector> {
    let Surds { r2, r3, .. } = S();
    vec![
        vec_r(&[(-3.0 + r3) / (2.0 * r2), -0.5 * (3.0 * (2.0 + r3)).sqrt()]),
        vec_r(&[(-6.0 + r3) / (2.0 * r2), -(3.0 + 2.0 * r3) / (2.0 * r2)]),
    ]
}

pub fn ex3x3_psi2() -> Vec<ComplexVector> {
    let Surds { r2, r3, .. } = S();
    vec![
        vec_r(&[1.5f64.sqrt() + 3.0 / (2.0 * r2), (-6.0 + r3) / (2.0 * r2)]),
        vec_r(&[-0.5 * (3.0 * (2.0 + r3)).sqrt(), 0.5 * (3.0 * (2.0 - r3)).sqrt()]),
    ]
}

/// Closed form of the 3x3 `Theta1` in terms of its eigenvalues.
pub fn ex3x3_theta1(e1: f64, e2: f64, e3: f64) -> ComplexMatrix {
    let r3 = 3f64.sqrt();
    mat_r(
        3,
        3,
        &[
            ((5.0 + r3) * e1 - (1.0 + r3) * e2 + 2.0 * e3) / 6.0,
            ((1.0 + r3) * e1 - (2.0 + r3) * e2 + e3) / 3.0,
            ((-7.0 - 3.0 * r3) * e1 + (5.0 + 3.0 * r3) * e2 + 2.0 * e3) / 6.0,
            ((1.0 - 2.0 * r3) * e1 + 2.0 * (-1.0 + r3) * e2 + e3) / 3.0,
            (-2.0 * e1 + 4.0 * e2 + e3) / 3.0,
            ((1.0 + 2.0 * r3) * e1 - 2.0 * (1.0 + r3) * e2 + e3) / 3.0,
            ((-7.0 + 3.0 * r3) * e1 + (5.0 - 3.0 * r3) * e2 + 2.0 * e3) / 6.0,
            ((1.0 - r3) * e1 + (-2.0 + r3) * e2 + e3) / 3.0,
            ((5.0 - r3) * e1 + (-1.0 + r3) * e2 + 2.0 * e3) / 6.0,
        ],
    )
}

/// Closed form of the induced `Theta2`; `E3` does not enter.
pub fn ex3x3_theta2(e1: f64, e2: f64) -> ComplexMatrix {
    let r3 = 3f64.sqrt();
    let d = e1 - e2;
    mat_r(
        2,
        2,
        &[
            (-(1.0 + r3) * e1 + (5.0 + r3) * e2) / 4.0,
            (7.0 - 3.0 * r3) * d / 4.0,
            -(5.0 + 3.0 * r3) * d / 4.0,
            ((5.0 + r3) * e1 - (1.0 + r3) * e2) / 4.0,
        ],
    )
}

fn distinct3(e1: f64, e2: f64, e3: f64) -> Result<()> {
    if e1 == e2 || e1 == e3 || e2 == e3 {
        return Err(Error::Multiplicity(format!(
            "eigenvalues must be pairwise distinct, got ({e1}, {e2}, {e3})"
        )));
    }
    Ok(())
}

pub fn fixture_3x3(e1: f64, e2: f64, e3: f64) -> Result<Fixture> {
    distinct3(e1, e2, e3)?;
    let phi = ex3x3_phi1();
    let evals = vec![real(e1), real(e2), real(e3)];
    let vmat = columns(&phi);
    let vinv = vmat.clone().try_inverse().ok_or_else(|| Error::Singular("eigenvector matrix".into()))?;
    let theta1 = &vmat * diagonal(&evals) * vinv;
    let es = Eigensystem::from_parts(evals, phi, Tolerances::default().multiplicity)?;
    let model = IntertwiningModel::with_eigensystem(theta1, ex3x3_x(), es, fixture_tolerances())?;
    let mut f = Fixture::new(FixtureId::Ex3x3, None, model);
    let m = f.model.clone();
    f.expect_matrix("Theta1", &ex3x3_theta1(e1, e2, e3), &m.theta1);
    f.expect_matrix("Theta2", &ex3x3_theta2(e1, e2), &m.theta2);
    f.expect("kernel set size", real(1.0), real(m.kernel_set.len() as f64));
    f.expect(
        "kernel index",
        real(2.0),
        real(m.kernel_set.first().map_or(f64::NAN, |&k| k as f64)),
    );
    for n in 0..2 {
        f.expect(format!("tilde_k[{n}]"), real(1.5), real(m.tilde_k[n].unwrap_or(f64::NAN)));
        f.expect_vector(&format!("phi2[{n}]"), &ex3x3_phi2()[n], &m.phi2[n]);
        f.expect_vector(&format!("psi2[{n}]"), &ex3x3_psi2()[n], &m.psi2[n]);
    }
    for n in 0..3 {
        f.expect_vector(&format!("psi1[{n}]"), &ex3x3_psi1()[n], &m.psi1[n]);
    }
    f.expect_zero("phi2[2]", m.phi2[2].norm());
    f.expect_zero("psi2[2]", m.psi2[2].norm());
    f.expect_zero("N2 - 3/2", (&m.n2 - identity(2) * real(1.5)).norm());
    let mut pairing = 0.0_f64;
    for n in 0..2 {
        for k in 0..2 {
            let want = if n == k { 1.5 } else { 0.0 };
            pairing = pairing.max((inner(&m.psi2[k], &m.phi2[n]) - want).norm());
        }
    }
    f.expect_zero("pairing2 - 3/2 delta", pairing);
    let pf = ex3x3_pseudo_fermion(e1, e2)?;
    f.expect_zero("pseudo-fermion H - Theta2", (&pf.hamiltonian - &m.theta2).norm());
    Ok(f)
}

/// Self-adjoint variant of the 3x3 example: the first two eigenvectors are
/// orthonormalized (both are already orthogonal to the third).
pub fn ex3x3_symmetrized(e1: f64, e2: f64, e3: f64) -> Result<IntertwiningModel> {
    distinct3(e1, e2, e3)?;
    let phi = ex3x3_phi1();
    let v0 = &phi[0] / real(phi[0].norm());
    let w = &phi[1] - &v0 * inner(&v0, &phi[1]);
    let v1 = &w / real(w.norm());
    let v2 = phi[2].clone();
    let vs = vec![v0, v1, v2];
    let evals = vec![real(e1), real(e2), real(e3)];
    let vmat = columns(&vs);
    let theta1 = &vmat * diagonal(&evals) * vmat.adjoint();
    let es = Eigensystem::from_parts(evals, vs, Tolerances::default().multiplicity)?;
    IntertwiningModel::with_eigensystem(theta1, ex3x3_x(), es, fixture_tolerances())
}

/// Raising-map fixture on `eps.len()` modes: `Theta1 e_n = eps_n e^{i theta_n} e_n`
/// and `X e_n = sqrt(eps_{n+1}) e_{n+1}` from `C^{N-1}` into `C^N`. The
/// truncation is exact, so every relation holds on the whole space.
pub fn fixture_shift(eps: &EpsilonSequence, theta: &[f64]) -> Result<Fixture> {
    let n = eps.len();
    if n < 2 || theta.len() != n {
        return Err(Error::Dimension(format!(
            "shift fixture needs at least 2 modes and one angle per mode, got {n} and {}",
            theta.len()
        )));
    }
    if eps.get(0) < 0.0 || !eps.strictly_increasing() {
        return Err(Error::Parameter("eps must increase strictly from a non-negative start".into()));
    }
    let values: Vec<C64> = (0..n).map(|k| C64::from_polar(eps.get(k), theta[k])).collect();
    let theta1 = diagonal(&values);
    let mut x = ComplexMatrix::zeros(n, n - 1);
    for k in 0..n - 1 {
        x[(k + 1, k)] = real(eps.get(k + 1).sqrt());
    }
    let vectors: Vec<ComplexVector> = (0..n).map(|k| unit_vector(n, k)).collect();
    let es = Eigensystem::from_parts(values.clone(), vectors, Tolerances::default().multiplicity)?;
    let model = IntertwiningModel::with_eigensystem(theta1, x.clone(), es, fixture_tolerances())?;
    let mut f = Fixture::new(FixtureId::Shift, Some(n), model);
    f.eps = Some(eps.clone());
    let m = f.model.clone();
    let xd = x.adjoint();
    let lowering = (1..n)
        .map(|k| (&xd * unit_vector(n, k) - unit_vector(n - 1, k - 1) * real(eps.get(k).sqrt())).norm())
        .fold(0.0, f64::max);
    f.expect_zero("X^H e_0", (&xd * unit_vector(n, 0)).norm());
    f.expect_zero("X^H e_n - sqrt(eps_n) e_(n-1)", lowering);
    let upper: Vec<C64> = (1..n).map(|k| real(eps.get(k))).collect();
    let mut n1_diag: Vec<C64> = (0..n).map(|k| real(eps.get(k))).collect();
    n1_diag[0] = real(0.0);
    f.expect_zero("N2 - diag(eps_1..)", (&m.n2 - diagonal(&upper)).norm());
    f.expect_zero("N1 - diag(0, eps_1..)", (&m.n1 - diagonal(&n1_diag)).norm());
    for k in 1..n {
        f.expect(format!("Theta2[{},{}]", k - 1, k - 1), values[k], m.theta2[(k - 1, k - 1)]);
        f.expect(format!("tilde_k[{k}]"), real(eps.get(k)), real(m.tilde_k[k].unwrap_or(f64::NAN)));
    }
    let off = offdiagonal_max(&m.theta2);
    f.expect_zero("Theta2 off-diagonal", off);
    f.expect("kernel set", real(0.0), real(m.kernel_set.first().map_or(f64::NAN, |&k| k as f64)));
    f.expect("kernel set size", real(1.0), real(m.kernel_set.len() as f64));
    let normal = &m.theta2 * m.theta2.adjoint() - m.theta2.adjoint() * &m.theta2;
    f.expect_zero("[Theta2, Theta2^H]", normal.norm());
    Ok(f)
}

fn offdiagonal_max(m: &ComplexMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// Tight-frame map from `C^N` into `C^{2N}`: rows `2j` and `2j+1` are both
/// `e_j / sqrt 2`.
pub fn tight_frame(blocks: usize) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(2 * blocks, blocks);
    let h = real(0.5f64.sqrt());
    for j in 0..blocks {
        x[(2 * j, j)] = h;
        x[(2 * j + 1, j)] = h;
    }
    x
}

/// Block-diagonal `Theta1` with blocks `[[alpha_j, beta_j], [beta_j, alpha_j]]`.
/// Eigenvectors are supplied in closed form: index `2j` carries
/// `(e_2j - e_2j+1)/sqrt 2` with value `alpha_j - beta_j`, index `2j+1` the
/// symmetric combination with `alpha_j + beta_j`.
pub fn fixture_block(alpha: &[C64], beta: &[C64]) -> Result<Fixture> {
    let nb = alpha.len();
    if nb == 0 || beta.len() != nb {
        return Err(Error::Dimension(format!(
            "need one beta per alpha, got {} and {}",
            nb,
            beta.len()
        )));
    }
    let dim = 2 * nb;
    let mut theta1 = ComplexMatrix::zeros(dim, dim);
    let mut values = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    let h = real(0.5f64.sqrt());
    for j in 0..nb {
        let (a, b) = (alpha[j], beta[j]);
        theta1[(2 * j, 2 * j)] = a;
        theta1[(2 * j + 1, 2 * j + 1)] = a;
        theta1[(2 * j, 2 * j + 1)] = b;
        theta1[(2 * j + 1, 2 * j)] = b;
        values.push(a - b);
        values.push(a + b);
        vectors.push((unit_vector(dim, 2 * j) - unit_vector(dim, 2 * j + 1)) * h);
        vectors.push((unit_vector(dim, 2 * j) + unit_vector(dim, 2 * j + 1)) * h);
    }
    let x = tight_frame(nb);
    let es = Eigensystem::from_parts(values.clone(), vectors, Tolerances::default().multiplicity)?;
    let model = IntertwiningModel::with_eigensystem(theta1, x, es, fixture_tolerances())?;
    let mut f = Fixture::new(FixtureId::Block, Some(nb), model);
    let m = f.model.clone();

    let mut swap = ComplexMatrix::zeros(dim, dim);
    for j in 0..nb {
        swap[(2 * j, 2 * j + 1)] = real(1.0);
        swap[(2 * j + 1, 2 * j)] = real(1.0);
    }
    f.expect_zero("N2 - 1", (&m.n2 - identity(nb)).norm());
    f.expect_zero("N1 - (1 + P)/2", (&m.n1 - (identity(dim) + swap) * real(0.5)).norm());
    for k in 0..nb {
        f.expect(format!("Theta2[{k},{k}]"), alpha[k] + beta[k], m.theta2[(k, k)]);
    }
    f.expect_zero("Theta2 off-diagonal", offdiagonal_max(&m.theta2));
    let antisym: Vec<usize> = (0..nb).map(|j| 2 * j).collect();
    f.expect("kernel set size", real(nb as f64), real(m.kernel_set.len() as f64));
    f.expect_zero(
        "kernel set mismatch",
        if m.kernel_set == antisym { 0.0 } else { 1.0 },
    );
    let images = (0..nb)
        .map(|j| (&m.phi2[2 * j + 1] - unit_vector(nb, j)).norm())
        .fold(0.0, f64::max);
    f.expect_zero("phi2[2j+1] - e_j", images);
    let tk = (0..nb)
        .map(|j| (m.tilde_k[2 * j + 1].unwrap_or(f64::NAN) - 1.0).abs())
        .fold(0.0, f64::max);
    f.expect_zero("tilde_k - 1", tk);

    if alpha.iter().all(|a| a.im == 0.0) && beta.iter().all(|b| b.re == 0.0) {
        let pairing = (0..nb)
            .map(|j| (values[2 * j] - values[2 * j + 1].conj()).norm())
            .fold(0.0, f64::max);
        f.expect_zero("eps_2j - conj eps_2j+1", pairing);
    }
    let filtering = alpha
        .iter()
        .zip(beta)
        .all(|(a, b)| a.im == 0.0 && b.im == 0.0 && b.re > a.re && a.re > 0.0);
    if filtering {
        // every negative eigenvalue of Theta1 sits on the kernel set
        let spec2 = eig(&m.theta2, 0.0)?;
        let min2 = spec2.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        let negatives = values.iter().filter(|v| v.re < 0.0).count();
        f.expect("negative Theta1 eigenvalues", real(nb as f64), real(negatives as f64));
        f.expect_zero("non-positive Theta2 eigenvalues", (-min2).max(0.0));
    }
    Ok(f)
}

/// Block fixture with `alpha_k = (4k - 3) alpha1`, `beta_k = alpha1` (1-based
/// `k`). In model order the level-1 eigenvalues are `eps_n = 2 n alpha1`.
pub fn coherent_demo(alpha1: f64, blocks: usize) -> Result<Fixture> {
    if !(alpha1 > 0.0) || !alpha1.is_finite() {
        return Err(Error::Parameter(format!("alpha1 must be positive, got {alpha1}")));
    }
    let alpha: Vec<C64> = (1..=blocks).map(|k| real((4 * k - 3) as f64 * alpha1)).collect();
    let beta = vec![real(alpha1); blocks];
    let mut f = fixture_block(&alpha, &beta)?;
    f.id = FixtureId::CoherentDemo;
    let eps = EpsilonSequence::linear(2.0 * alpha1, 2 * blocks)?;
    let spread = f
        .model
        .eigenvalues
        .iter()
        .zip(eps.values())
        .map(|(v, e)| (v - real(*e)).norm())
        .fold(0.0, f64::max);
    f.expect_zero("eigenvalues - 2 n alpha1", spread);
    f.eps = Some(eps);
    Ok(f)
}

/// `a = alpha12 [[alpha, 1], [-alpha^2, -alpha]]`, `b` likewise with `beta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoFermionPair {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub alpha: C64,
    pub beta: C64,
    pub alpha12: C64,
    pub beta12: C64,
    /// `-alpha12 beta12`.
    pub gamma_sq: C64,
}

const PSEUDO_FERMION_TOL: f64 = 1e-10;

pub fn pseudo_fermion(alpha: C64, beta: C64, alpha12: C64, beta12: C64) -> Result<PseudoFermionPair> {
    let gamma_sq = -alpha12 * beta12;
    let lhs = (alpha - beta) * (alpha - beta) * gamma_sq;
    if (lhs - 1.0).norm() > PSEUDO_FERMION_TOL {
        return Err(Error::Parameter(format!(
            "(alpha - beta)^2 gamma^2 = {lhs}, must equal 1"
        )));
    }
    let one = real(1.0);
    let a = DMatrix::from_row_slice(2, 2, &[alpha, one, -alpha * alpha, -alpha]) * alpha12;
    let b = DMatrix::from_row_slice(2, 2, &[beta, one, -beta * beta, -beta]) * beta12;
    Ok(PseudoFermionPair {
        a,
        b,
        alpha,
        beta,
        alpha12,
        beta12,
        gamma_sq,
    })
}

impl PseudoFermionPair {
    /// The square root of `gamma^2` that makes `ba` come out as
    /// `gamma [[alpha, 1], [-alpha beta, -beta]]`, namely `1/(alpha - beta)`.
    pub fn gamma(&self) -> C64 {
        1.0 / (self.alpha - self.beta)
    }

    pub fn anticommutator_residual(&self) -> f64 {
        (&self.a * &self.b + &self.b * &self.a - identity(2)).norm()
    }

    pub fn nilpotency_residuals(&self) -> (f64, f64) {
        ((&self.a * &self.a).norm(), (&self.b * &self.b).norm())
    }

    pub fn hamiltonian(&self, omega: C64, rho: C64) -> ComplexMatrix {
        &self.b * &self.a * omega + identity(2) * rho
    }

    pub fn closed_form(&self, omega: C64, rho: C64) -> ComplexMatrix {
        let og = omega * self.gamma();
        let (al, be) = (self.alpha, self.beta);
        DMatrix::from_row_slice(2, 2, &[og * al + rho, og, -og * al * be, -og * be + rho])
    }
}

/// Parameter set for a pseudo-fermion Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoFermionParams {
    pub omega: C64,
    pub rho: C64,
    pub alpha: C64,
    pub beta: C64,
    pub alpha12: C64,
    pub beta12: C64,
}

impl PseudoFermionParams {
    pub fn pair(&self) -> Result<PseudoFermionPair> {
        pseudo_fermion(self.alpha, self.beta, self.alpha12, self.beta12)
    }
}

/// Parameters that turn `omega b a + rho` into the block
/// `[[alpha_j, beta_j], [beta_j, alpha_j]]`.
pub fn block_pseudo_fermion_params(alpha_j: C64, beta_j: C64) -> PseudoFermionParams {
    PseudoFermionParams {
        omega: beta_j * 2.0,
        rho: alpha_j - beta_j,
        alpha: real(1.0),
        beta: real(-1.0),
        alpha12: real(0.5),
        beta12: real(-0.5),
    }
}

pub struct Ex3x3PseudoFermion {
    pub params: PseudoFermionParams,
    pub pair: PseudoFermionPair,
    pub hamiltonian: ComplexMatrix,
}

/// The pseudo-fermion parameter set that writes the 3x3 example's `Theta2`
/// as `omega b a + rho`.
pub fn ex3x3_pseudo_fermion(e1: f64, e2: f64) -> Result<Ex3x3PseudoFermion> {
    let r3 = 3f64.sqrt();
    let alpha = real(-2.0 - r3);
    let beta = real((r3 + 1.0) / (3.0 * r3 - 7.0));
    let a12 = ((38.0 - 21.0 * r3) / 8.0).sqrt();
    let omega_gamma = real((7.0 - 3.0 * r3) * (e1 - e2) / 4.0);
    let omega = omega_gamma * (alpha - beta);
    let params = PseudoFermionParams {
        omega,
        rho: real(e1),
        alpha,
        beta,
        alpha12: real(a12),
        beta12: real(-a12),
    };
    let pair = params.pair()?;
    let hamiltonian = pair.hamiltonian(params.omega, params.rho);
    Ok(Ex3x3PseudoFermion {
        params,
        pair,
        hamiltonian,
    })
}

/// Truncated annihilation operator on `dim` modes.
pub fn annihilation(dim: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = real((n as f64).sqrt());
    }
    a
}

pub const NLPB_TOL: f64 = 1e-10;

pub fn nlpb_verify(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    eps: &EpsilonSequence,
    phi0: &ComplexVector,
    eta0: &ComplexVector,
    n: usize,
) -> Result<RelationReport> {
    nlpb_verify_with(a, b, eps, phi0, eta0, n, NLPB_TOL)
}

/// Lowering-pair checks: `Phi_n = b^n Phi_0 / sqrt(eps_n!)` and
/// `eta_n = (a^H)^n eta_0 / sqrt(eps_n!)` for `n < count`.
pub fn nlpb_verify_with(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    eps: &EpsilonSequence,
    phi0: &ComplexVector,
    eta0: &ComplexVector,
    count: usize,
    tol: f64,
) -> Result<RelationReport> {
    let dim = phi0.len();
    if a.shape() != (dim, dim) || b.shape() != (dim, dim) || eta0.len() != dim {
        return Err(Error::Dimension("a, b, Phi0 and eta0 must share one dimension".into()));
    }
    if count == 0 || count > eps.len() {
        return Err(Error::Dimension(format!(
            "need 1 <= count <= len(eps) = {}, got {count}",
            eps.len()
        )));
    }
    if phi0.norm() == 0.0 || eta0.norm() == 0.0 {
        return Err(Error::SeedVector("Phi0 and eta0 must be non-zero".into()));
    }
    let ad = a.adjoint();
    let bd = b.adjoint();
    let (na, nb) = (op_norm(a).max(1.0), op_norm(b).max(1.0));
    let p1 = (a * phi0).norm();
    if p1 > tol * na * phi0.norm() {
        return Err(Error::SeedVector(format!("||a Phi0|| = {p1:.3e} is not zero")));
    }
    let p2 = (&bd * eta0).norm();
    if p2 > tol * nb * eta0.norm() {
        return Err(Error::SeedVector(format!("||b^H eta0|| = {p2:.3e} is not zero")));
    }
    let overlap = inner(eta0, phi0);
    if overlap.norm() <= tol * phi0.norm() * eta0.norm() {
        return Err(Error::SeedVector("eta0 is orthogonal to Phi0".into()));
    }
    let eta0 = eta0 / overlap.conj();

    let mut phi = vec![phi0.clone()];
    let mut eta = vec![eta0];
    for k in 1..count {
        let s = real(eps.get(k).sqrt());
        let next_phi = b * &phi[k - 1] / s;
        let next_eta = &ad * &eta[k - 1] / s;
        phi.push(next_phi);
        eta.push(next_eta);
    }

    let mut report = RelationReport::new(tol);
    report.check("p1 a Phi0", p1, na * phi0.norm());
    report.check("p2 b^H eta0", p2, nb * eta[0].norm());
    let scale_phi = phi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale_eta = eta.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lowering = |op: &ComplexMatrix, fam: &[ComplexVector]| -> Vec<f64> {
        (0..count)
            .map(|k| {
                let mut r = op * &fam[k];
                if k > 0 {
                    r -= &fam[k - 1] * real(eps.get(k).sqrt());
                }
                r.norm()
            })
            .collect()
    };
    push_worst(&mut report, "p3 a Phi_n - sqrt(eps_n) Phi_n-1", &lowering(a, &phi), na * scale_phi);
    push_worst(&mut report, "p3 b^H eta_n - sqrt(eps_n) eta_n-1", &lowering(&bd, &eta), nb * scale_eta);

    let m = b * a;
    let md = m.adjoint();
    let eigen = |op: &ComplexMatrix, fam: &[ComplexVector]| -> Vec<f64> {
        (0..count)
            .map(|k| (op * &fam[k] - &fam[k] * real(eps.get(k))).norm())
            .collect()
    };
    let nm = op_norm(&m).max(1.0);
    push_worst(&mut report, "M Phi_n - eps_n Phi_n", &eigen(&m, &phi), nm * scale_phi);
    push_worst(&mut report, "M^H eta_n - eps_n eta_n", &eigen(&md, &eta), nm * scale_eta);

    let mut bio = vec![0.0_f64; count];
    for (k, e) in eta.iter().enumerate() {
        for (j, p) in phi.iter().enumerate() {
            let want = if j == k { 1.0 } else { 0.0 };
            let d = (inner(e, p) - want).norm();
            bio[j.max(k)] = bio[j.max(k)].max(d);
        }
    }
    push_worst(&mut report, "biorthogonality", &bio, 1.0);

    // Shifted eigenvectors of a b: a Phi_n for n >= 1.
    let ab = a * b;
    let shifted: Vec<f64> = (0..count)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let v = a * &phi[k];
            (&ab * &v - &v * real(eps.get(k))).norm()
        })
        .collect();
    push_worst(&mut report, "a b (a Phi_n) - eps_n a Phi_n", &shifted, nm * na * scale_phi);
    let shifted_dual: Vec<f64> = (0..count)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let v = &bd * &eta[k];
            (ab.adjoint() * &v - &v * real(eps.get(k))).norm()
        })
        .collect();
    push_worst(&mut report, "(a b)^H (b^H eta_n) - eps_n b^H eta_n", &shifted_dual, nm * nb * scale_eta);

    if count == dim {
        let cond = 1.0 / inverse_condition(&columns(&phi));
        report.info(
            "p4 condition number of Phi",
            cond,
            "basis property is only decidable at truncation",
        );
    } else {
        report.info(
            "p4 condition number of Phi",
            f64::NAN,
            "fewer vectors than dimensions; no square basis matrix",
        );
    }
    Ok(report)
}

fn push_worst(report: &mut RelationReport, name: &str, residuals: &[f64], scale: f64) {
    let (idx, worst) = crate::report::argmax(residuals.iter().copied()).unwrap_or((0, 0.0));
    report.check_at(name, worst, scale, Some(idx));
}

/// Self-adjointness transfer checks on a fixture model.
pub fn fixture_adjointness_checks(model: &IntertwiningModel, tol: f64) -> RelationReport {
    adjointness_transfer_check(model, tol)
}
