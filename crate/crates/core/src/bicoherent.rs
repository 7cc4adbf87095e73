//! Ladder operators and bicoherent states built on a biorthogonal system
//! `(phi_n, psi_n)` with `<phi_k, psi_n> = c_n delta_kn` and eigenvalues
//! `0 = e_0 < e_1 < ...`.
//!
//! Series are evaluated in log space, so `e_n!` never has to be formed
//! explicitly for large `n`.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    inner, real, BiorthogonalSystem, ComplexMatrix, ComplexVector, EpsilonSequence, C64,
};

/// Step of the exponent grid in [`fit_norm_growth`].
pub const ALPHA_GRID_STEP: f64 = 0.01;
/// Number of trailing terms used for tail decisions and limit extrapolation.
pub const TAIL_WINDOW: usize = 8;
/// Largest accepted ratio between consecutive terms of the normalization series.
pub const TAIL_RATIO_LIMIT: f64 = 0.9;
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

const PAIRING_TOL: f64 = 1e-9;

/// Lowering/raising pair with `Theta phi_n = B A phi_n = e_n phi_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderPair {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub level: u8,
    /// `A phi_k = lowering[k] phi_{k-1}` (`lowering[0] = 0`).
    pub lowering: Vec<f64>,
    /// Eigenvalues reproduced by `B A`.
    pub values: Vec<f64>,
}

impl LadderPair {
    /// `max_n ||B A phi_n - e_n phi_n||` and `max_n ||A^H B^H psi_n - e_n psi_n||`.
    pub fn factorization_residuals(&self, system: &BiorthogonalSystem) -> (f64, f64) {
        let ba = &self.b * &self.a;
        let ab_dag = self.a.adjoint() * self.b.adjoint();
        let mut worst = (0.0_f64, 0.0_f64);
        for (n, &e) in self.values.iter().enumerate() {
            let phi = &system.phi[n];
            let psi = &system.psi[n];
            worst.0 = worst.0.max((&ba * phi - phi * real(e)).norm());
            worst.1 = worst.1.max((&ab_dag * psi - psi * real(e)).norm());
        }
        worst
    }
}

/// `A = sum_k s_k |phi_{k-1}><psi_k| / c_k`, `B = sum_k t_k |phi_{k+1}><psi_k| / c_k`
/// with `s_k = sqrt(e_k c_k / c_{k-1})` and `t_k = sqrt(e_{k+1} c_k / c_{k+1})`.
fn ladders(phi: &[ComplexVector], psi: &[ComplexVector], pairing: &[f64], steps: &[f64], level: u8) -> LadderPair {
    let dim = phi[0].len();
    let len = phi.len();
    let mut a = ComplexMatrix::zeros(dim, dim);
    let mut b = ComplexMatrix::zeros(dim, dim);
    let mut lowering = vec![0.0; len];
    for k in 1..len {
        let s = (steps[k] * pairing[k] / pairing[k - 1]).sqrt();
        lowering[k] = s;
        a += &phi[k - 1] * psi[k].adjoint() * real(s / pairing[k]);
    }
    for k in 0..len.saturating_sub(1) {
        let t = (steps[k + 1] * pairing[k] / pairing[k + 1]).sqrt();
        b += &phi[k + 1] * psi[k].adjoint() * real(t / pairing[k]);
    }
    let mut values = steps[..len].to_vec();
    values[0] = 0.0;
    LadderPair { a, b, level, lowering, values }
}

fn check_sizes(system: &BiorthogonalSystem, eps: &EpsilonSequence) -> Result<()> {
    if system.is_empty() {
        return Err(Error::Dimension("empty biorthogonal system".into()));
    }
    if eps.len() < system.len() {
        return Err(Error::Dimension(format!(
            "epsilon sequence has {} terms, the system {} vectors",
            eps.len(),
            system.len()
        )));
    }
    if !eps.truncated(system.len()).strictly_increasing() {
        return Err(Error::Parameter("epsilon must satisfy 0 = e_0 < e_1 < e_2 < ...".into()));
    }
    Ok(())
}

fn check_level1(system: &BiorthogonalSystem) -> Result<()> {
    if system.pairing.iter().any(|c| (c - 1.0).abs() > PAIRING_TOL) {
        return Err(Error::LevelMismatch { expected: 1 });
    }
    Ok(())
}

fn check_positive_pairing(pairing: &[f64]) -> Result<()> {
    match pairing.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
        Some(index) => Err(Error::Kernel { index }),
        None => Ok(()),
    }
}

/// Level-1 ladders: `A phi_k = sqrt(e_k) phi_{k-1}`, `B phi_k = sqrt(e_{k+1}) phi_{k+1}`.
pub fn build_ladders(system: &BiorthogonalSystem, eps: &EpsilonSequence) -> Result<LadderPair> {
    check_sizes(system, eps)?;
    check_level1(system)?;
    Ok(ladders(&system.phi, &system.psi, &system.pairing, eps.values(), 1))
}

/// Level-2 ladders for a family with pairing `c_k = k~_k > 0`.
pub fn build_ladders_level2(
    system2: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    tilde_k: &[f64],
) -> Result<LadderPair> {
    check_sizes(system2, eps)?;
    if tilde_k.len() < system2.len() {
        return Err(Error::Dimension("one k~ per vector required".into()));
    }
    let tilde_k = &tilde_k[..system2.len()];
    check_positive_pairing(tilde_k)?;
    Ok(ladders(&system2.phi, &system2.psi, tilde_k, eps.values(), 2))
}

/// Growth constants `||phi_n|| <= r^n (e_n!)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub r_phi: f64,
    pub alpha_phi: f64,
    pub r_psi: f64,
    pub alpha_psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceData {
    pub r_phi: f64,
    pub r_psi: f64,
    pub alpha_phi: f64,
    pub alpha_psi: f64,
    pub rho_phi: f64,
    pub rho_psi: f64,
    pub rho_hat: f64,
    pub rho: f64,
}

impl ConvergenceData {
    pub fn contains(&self, z: C64) -> bool {
        z.norm() < self.rho
    }
}

fn ln_factorials(eps: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(eps.len());
    let mut acc = 0.0;
    for (k, e) in eps.iter().enumerate() {
        if k > 0 {
            acc += e.ln();
        }
        out.push(acc);
    }
    out
}

/// Fit on `ln ||v_n||` against `ln f_n - ln f_0`. Zero norms impose nothing.
fn fit_growth(ln_norms: &[f64], ln_fact: &[f64]) -> Result<(f64, f64)> {
    if ln_norms.is_empty() {
        return Err(Error::Dimension("empty family".into()));
    }
    if ln_norms[0] > 1e-12 {
        return Err(Error::Growth(format!(
            "||v_0|| = {:.6} exceeds the n = 0 bound 1",
            ln_norms[0].exp()
        )));
    }
    let steps = (0.5 / ALPHA_GRID_STEP).round() as usize;
    for i in 0..=steps {
        let alpha = i as f64 * ALPHA_GRID_STEP;
        let ln_r: Vec<f64> = (1..ln_norms.len())
            .filter(|&n| ln_norms[n].is_finite())
            .map(|n| (ln_norms[n] - alpha * (ln_fact[n] - ln_fact[0])) / n as f64)
            .collect();
        let tail = &ln_r[ln_r.len().saturating_sub(TAIL_WINDOW)..];
        let settled = tail.windows(2).all(|w| w[1] <= w[0] + 1e-9);
        if settled {
            let r = ln_r.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
            return Ok((r.max(1e-12), alpha));
        }
    }
    Err(Error::Growth(
        "the required radius keeps growing at alpha = 1/2".into(),
    ))
}

/// Smallest grid exponent `alpha` (step [`ALPHA_GRID_STEP`]) whose required
/// radius `r_n = (||phi_n|| / (e_n!)^alpha)^(1/n)` stops increasing over the
/// last [`TAIL_WINDOW`] terms, followed by the smallest `r >= 1e-12` meeting
/// the bound at every stored `n`.
pub fn fit_norm_growth(family: &[ComplexVector], eps: &EpsilonSequence) -> Result<(f64, f64)> {
    if family.len() > eps.len() {
        return Err(Error::Dimension("fewer eigenvalues than vectors".into()));
    }
    let ln_norms: Vec<f64> = family.iter().map(|v| v.norm().ln()).collect();
    fit_growth(&ln_norms, &ln_factorials(eps.values()))
}

/// Limit of a nondecreasing sequence estimated from its last
/// [`TAIL_WINDOW`] increments: geometric decay of the increments (ratio
/// below 0.9) or power-law decay faster than `k^-1.05` give a finite
/// extrapolated limit, anything else is reported as infinite.
pub fn extrapolate_limit(seq: &[f64]) -> f64 {
    let start = seq.len().saturating_sub(TAIL_WINDOW + 1);
    let tail = &seq[start..];
    if tail.len() < 3 {
        return f64::INFINITY;
    }
    let last = *tail.last().expect("nonempty");
    let d: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    if d.iter().any(|&x| x < 0.0) {
        return tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let d_last = *d.last().expect("nonempty");
    if d_last == 0.0 {
        return last;
    }
    if d.iter().all(|&x| x > 0.0) {
        let ratios: Vec<f64> = d.windows(2).map(|w| w[1] / w[0]).collect();
        if ratios.iter().all(|&q| q < TAIL_RATIO_LIMIT) {
            let q = (ratios.iter().map(|q| q.ln()).sum::<f64>() / ratios.len() as f64).exp();
            return last + d_last * q / (1.0 - q);
        }
        // log-log slope of the increments against their index
        let pts: Vec<(f64, f64)> = d
            .iter()
            .enumerate()
            .map(|(i, &x)| (((start + i + 1) as f64).ln(), x.ln()))
            .collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / m, sy / m);
        let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let p = -cov / var;
        if p > 1.05 {
            let k_last = (start + d.len()) as f64;
            return last + d_last * k_last / (p - 1.0);
        }
    }
    f64::INFINITY
}

fn limit_power(limit: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        limit.powf(exponent)
    }
}

fn radius_from_steps(fit: &GrowthFit, steps: &[f64]) -> ConvergenceData {
    let rho_hat = extrapolate_limit(&steps[1.min(steps.len())..]);
    let rho_phi = limit_power(rho_hat, 0.5 - fit.alpha_phi) / fit.r_phi;
    let rho_psi = limit_power(rho_hat, 0.5 - fit.alpha_psi) / fit.r_psi;
    ConvergenceData {
        r_phi: fit.r_phi,
        r_psi: fit.r_psi,
        alpha_phi: fit.alpha_phi,
        alpha_psi: fit.alpha_psi,
        rho_phi,
        rho_psi,
        rho_hat,
        rho: rho_phi.min(rho_psi).min(rho_hat.sqrt()),
    }
}

/// `rho = min(rho_phi, rho_psi, sqrt(rho_hat))` with the limits of `e_k`
/// taken by [`extrapolate_limit`].
pub fn radius(fit: &GrowthFit, eps: &EpsilonSequence) -> ConvergenceData {
    radius_from_steps(fit, eps.values())
}

fn convergence_from(
    phi: &[ComplexVector],
    psi: &[ComplexVector],
    pairing: &[f64],
    ln_fact: &[f64],
) -> Result<ConvergenceData> {
    let scaled = |v: &[ComplexVector]| -> Vec<f64> {
        v.iter()
            .zip(pairing)
            .map(|(v, c)| (v.norm() / c.sqrt()).ln())
            .collect()
    };
    let (r_phi, alpha_phi) = fit_growth(&scaled(phi), ln_fact)?;
    let (r_psi, alpha_psi) = fit_growth(&scaled(psi), ln_fact)?;
    let steps: Vec<f64> = std::iter::once(0.0)
        .chain(ln_fact.windows(2).map(|w| (w[1] - w[0]).exp()))
        .collect();
    Ok(radius_from_steps(
        &GrowthFit { r_phi, alpha_phi, r_psi, alpha_psi },
        &steps,
    ))
}

/// Growth fit plus radius for a level-1 or level-2 system (norms are
/// divided by `sqrt(c_n)`, matching the series coefficients).
pub fn convergence(system: &BiorthogonalSystem, eps: &EpsilonSequence) -> Result<ConvergenceData> {
    check_sizes(system, eps)?;
    check_positive_pairing(&system.pairing)?;
    let ln_fact = ln_factorials(&eps.values()[..system.len()]);
    convergence_from(&system.phi, &system.psi, &system.pairing, &ln_fact)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLevel {
    One,
    Two,
    Filtered,
}

/// Truncated `phi(z) = N(|z|) sum_k z^k / sqrt(f_k c_k) phi_k` and its
/// partner built with the same coefficients on `psi_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicoherentState {
    pub z: C64,
    pub order: usize,
    pub level: StateLevel,
    /// Indices of the source family used for each series term.
    pub indices: Vec<usize>,
    pub normalization: f64,
    pub coefficients: Vec<C64>,
    pub phi: ComplexVector,
    pub psi: ComplexVector,
    /// `|z| |c_{order-1}| max(||phi_{order-1}||, ||psi_{order-1}||)` plus a
    /// rounding floor; bounds both the eigen-equation defect of the
    /// truncated series and the overlap defect.
    pub tail_bound: f64,
    /// Ratio of the last two terms of the normalization series.
    pub tail_ratio: f64,
    pub radius: f64,
}

impl BicoherentState {
    pub fn overlap(&self) -> C64 {
        inner(&self.phi, &self.psi)
    }

    pub fn overlap_defect(&self) -> f64 {
        (self.overlap() - real(1.0)).norm()
    }

    /// `||A phi(z) - z phi(z)||`.
    pub fn eigen_residual(&self, ladder: &LadderPair) -> f64 {
        (&ladder.a * &self.phi - &self.phi * self.z).norm()
    }

    /// `||B^H psi(z) - z psi(z)||`.
    pub fn dual_eigen_residual(&self, ladder: &LadderPair) -> f64 {
        (ladder.b.adjoint() * &self.psi - &self.psi * self.z).norm()
    }
}

/// How the series of a [`BicoherentState`] is truncated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub order: usize,
    pub ratio_limit: f64,
    /// The system spans a genuinely finite space: no radius or tail checks.
    pub finite: bool,
}

impl SeriesConfig {
    pub fn new(order: usize) -> Self {
        Self { order, ratio_limit: TAIL_RATIO_LIMIT, finite: false }
    }

    pub fn finite(order: usize) -> Self {
        Self { order, ratio_limit: TAIL_RATIO_LIMIT, finite: true }
    }
}

struct SeriesInput<'a> {
    phi: &'a [ComplexVector],
    psi: &'a [ComplexVector],
    pairing: &'a [f64],
    ln_fact: &'a [f64],
    indices: Vec<usize>,
    level: StateLevel,
    biorthogonality: f64,
}

fn assemble(input: SeriesInput<'_>, z: C64, cfg: &SeriesConfig) -> Result<BicoherentState> {
    let order = cfg.order;
    if order == 0 || order > input.phi.len() {
        return Err(Error::Parameter(format!(
            "order must lie in 1..={}, got {order}",
            input.phi.len()
        )));
    }
    let modulus = z.norm();
    let mut radius = f64::INFINITY;
    let mut tail_ratio = 0.0;
    if !cfg.finite {
        let conv = convergence_from(
            &input.phi[..order],
            &input.psi[..order],
            &input.pairing[..order],
            &input.ln_fact[..order],
        )?;
        radius = conv.rho;
        if modulus >= radius {
            return Err(Error::Divergence { modulus, radius });
        }
        if order > 1 {
            tail_ratio = (2.0 * modulus.ln() - (input.ln_fact[order - 1] - input.ln_fact[order - 2])).exp();
            if tail_ratio > cfg.ratio_limit {
                return Err(Error::TailNotConverged { ratio: tail_ratio, limit: cfg.ratio_limit });
            }
        }
    }

    // ln of |z|^{2k} / f_k, the terms of N^{-2}
    let ln_terms: Vec<f64> = (0..order)
        .map(|k| {
            if k == 0 {
                -input.ln_fact[0]
            } else if modulus == 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * k as f64 * modulus.ln() - input.ln_fact[k]
            }
        })
        .collect();
    let peak = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_sum = peak + ln_terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
    let normalization = (-0.5 * ln_sum).exp();

    let arg = z.arg();
    let coefficients: Vec<C64> = (0..order)
        .map(|k| {
            let ln_mag = 0.5 * (ln_terms[k] - ln_sum) - 0.5 * input.pairing[k].ln();
            C64::from_polar(ln_mag.exp(), k as f64 * arg)
        })
        .collect();
    let dim = input.phi[0].len();
    let mut phi = ComplexVector::zeros(dim);
    let mut psi = ComplexVector::zeros(dim);
    for k in 0..order {
        phi.axpy(coefficients[k], &input.phi[k], real(1.0));
        psi.axpy(coefficients[k], &input.psi[k], real(1.0));
    }

    let max_norm = input.phi[..order]
        .iter()
        .chain(&input.psi[..order])
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let last = order - 1;
    let last_term = modulus
        * coefficients[last].norm()
        * input.phi[last].norm().max(input.psi[last].norm());
    let coef_sum: f64 = coefficients.iter().map(|c| c.norm()).sum();
    let floor = (64.0 * f64::EPSILON + input.biorthogonality) * (1.0 + modulus) * coef_sum * max_norm.max(1.0);

    Ok(BicoherentState {
        z,
        order,
        level: input.level,
        indices: input.indices,
        normalization,
        coefficients,
        phi,
        psi,
        tail_bound: last_term + floor,
        tail_ratio,
        radius,
    })
}

fn leading_biorthogonality(system: &BiorthogonalSystem, order: usize) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..order {
        for n in 0..order {
            let target = if k == n { system.pairing[n] } else { 0.0 };
            worst = worst.max((inner(&system.phi[k], &system.psi[n]) - target).norm());
        }
    }
    worst
}

/// Level-1 bicoherent pair truncated at `order` terms.
pub fn coherent_pair(
    system: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    z: C64,
    order: usize,
) -> Result<BicoherentState> {
    coherent_pair_with(system, eps, z, &SeriesConfig::new(order))
}

pub fn coherent_pair_with(
    system: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    z: C64,
    cfg: &SeriesConfig,
) -> Result<BicoherentState> {
    check_sizes(system, eps)?;
    check_level1(system)?;
    let ln_fact = ln_factorials(&eps.values()[..system.len()]);
    let order = cfg.order.min(system.len());
    assemble(
        SeriesInput {
            phi: &system.phi,
            psi: &system.psi,
            pairing: &system.pairing,
            ln_fact: &ln_fact,
            indices: (0..order).collect(),
            level: StateLevel::One,
            biorthogonality: leading_biorthogonality(system, order),
        },
        z,
        cfg,
    )
}

/// Level-2 pair with coefficients `z^k / sqrt(e_k! k~_k)`. Every `k~_k` up
/// to `order` must be positive; use [`filter_and_build`] otherwise.
pub fn coherent_pair_level2(
    system2: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    tilde_k: &[f64],
    z: C64,
    order: usize,
) -> Result<BicoherentState> {
    coherent_pair_level2_with(system2, eps, tilde_k, z, &SeriesConfig::new(order))
}

pub fn coherent_pair_level2_with(
    system2: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    tilde_k: &[f64],
    z: C64,
    cfg: &SeriesConfig,
) -> Result<BicoherentState> {
    check_sizes(system2, eps)?;
    let order = cfg.order;
    if order == 0 || order > system2.len() || tilde_k.len() < order {
        return Err(Error::Parameter(format!(
            "order must lie in 1..={}, got {order}",
            system2.len().min(tilde_k.len())
        )));
    }
    check_positive_pairing(&tilde_k[..order])?;
    let ln_fact = ln_factorials(&eps.values()[..order]);
    let system = BiorthogonalSystem {
        pairing: tilde_k[..order].to_vec(),
        ..system2.clone()
    };
    assemble(
        SeriesInput {
            phi: &system2.phi[..order],
            psi: &system2.psi[..order],
            pairing: &tilde_k[..order],
            ln_fact: &ln_fact,
            indices: (0..order).collect(),
            level: StateLevel::Two,
            biorthogonality: leading_biorthogonality(&system, order),
        },
        z,
        cfg,
    )
}

/// How `e~_l!` is formed after dropping the kernel indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorialConvention {
    /// `e~_l! = e_{n_l}!`, the factorial of the original sequence.
    #[default]
    OriginalSequence,
    /// `e~_l! = e_{n_1} e_{n_2} ... e_{n_l}`, the generalized factorial of
    /// the relabeled sequence.
    Relabeled,
}

impl FromStr for FactorialConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" | "original_sequence" => Ok(Self::OriginalSequence),
            "relabeled" => Ok(Self::Relabeled),
            other => Err(Error::Parse(format!(
                "unknown factorial convention '{other}' (expected 'original' or 'relabeled')"
            ))),
        }
    }
}

/// Level-2 family restricted to the indices outside the kernel set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilteredSystem {
    /// Surviving original indices `n_0 < n_1 < ...`.
    pub indices: Vec<usize>,
    pub system: BiorthogonalSystem,
    pub ln_factorials: Vec<f64>,
    pub convention: FactorialConvention,
    pub biorthogonality_residual: f64,
}

impl FilteredSystem {
    /// Ratios `e~_l! / e~_{l-1}!`, the eigenvalues the ladders factorize.
    pub fn effective_steps(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.ln_factorials.windows(2).map(|w| (w[1] - w[0]).exp()))
            .collect()
    }

    pub fn ladders(&self) -> LadderPair {
        ladders(
            &self.system.phi,
            &self.system.psi,
            &self.system.pairing,
            &self.effective_steps(),
            2,
        )
    }

    pub fn convergence(&self) -> Result<ConvergenceData> {
        convergence_from(
            &self.system.phi,
            &self.system.psi,
            &self.system.pairing,
            &self.ln_factorials,
        )
    }

    pub fn state(&self, z: C64, cfg: &SeriesConfig) -> Result<BicoherentState> {
        let order = cfg.order.min(self.indices.len());
        assemble(
            SeriesInput {
                phi: &self.system.phi,
                psi: &self.system.psi,
                pairing: &self.system.pairing,
                ln_fact: &self.ln_factorials,
                indices: self.indices[..order].to_vec(),
                level: StateLevel::Filtered,
                biorthogonality: self.biorthogonality_residual,
            },
            z,
            &SeriesConfig { order, ..*cfg },
        )
    }
}

/// Drop the kernel indices of a level-2 family and relabel the survivors.
pub fn filter_system(
    system2: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    kernel_set: &[usize],
    convention: FactorialConvention,
) -> Result<FilteredSystem> {
    check_sizes(system2, eps)?;
    let indices: Vec<usize> = (0..system2.len()).filter(|n| !kernel_set.contains(n)).collect();
    if indices.is_empty() {
        return Err(Error::Degenerate("every index lies in the kernel set".into()));
    }
    let pick = |v: &[ComplexVector]| indices.iter().map(|&n| v[n].clone()).collect::<Vec<_>>();
    let pairing: Vec<f64> = indices.iter().map(|&n| system2.pairing[n]).collect();
    if let Some(l) = pairing.iter().position(|&c| !(c > 0.0)) {
        return Err(Error::Kernel { index: indices[l] });
    }
    let system = BiorthogonalSystem::new(
        pick(&system2.phi),
        pick(&system2.psi),
        indices.iter().map(|&n| system2.values[n]).collect(),
        pairing,
    )?;
    let residual = system.biorthogonality_residual();
    let scale = system.pairing.iter().copied().fold(1.0, f64::max);
    if residual > 1e-8 * scale {
        return Err(Error::Numerical {
            message: "relabeled family is not biorthogonal".into(),
            residual,
        });
    }
    let full = ln_factorials(eps.values());
    let ln_fact: Vec<f64> = match convention {
        FactorialConvention::OriginalSequence => indices.iter().map(|&n| full[n]).collect(),
        FactorialConvention::Relabeled => {
            let mut acc = 0.0;
            indices
                .iter()
                .enumerate()
                .map(|(l, &n)| {
                    if l > 0 {
                        acc += eps.get(n).ln();
                    }
                    acc
                })
                .collect()
        }
    };
    Ok(FilteredSystem {
        indices,
        system,
        ln_factorials: ln_fact,
        convention,
        biorthogonality_residual: residual,
    })
}

/// Kernel-filtered bicoherent pair `phi~_2(z), psi~_2(z)`.
pub fn filter_and_build(
    system2: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    kernel_set: &[usize],
    z: C64,
    order: usize,
    convention: FactorialConvention,
) -> Result<BicoherentState> {
    filter_system(system2, eps, kernel_set, convention)?.state(z, &SeriesConfig::new(order))
}

/// Gauss-Laguerre nodes and weights for `int_0^inf e^-t p(t) dt`.
///
/// Golub-Welsch start, Newton polish on `L_n`, weights from
/// `t / ((n+1)^2 L_{n+1}(t)^2)`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            (2 * i + 1) as f64
        } else if i.abs_diff(j) == 1 {
            i.max(j) as f64
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let laguerre = |m: usize, t: f64| -> (f64, f64) {
        // (L_m(t), L_{m-1}(t))
        let (mut prev, mut cur) = (1.0, 1.0 - t);
        if m == 0 {
            return (1.0, 0.0);
        }
        for k in 1..m {
            let next = ((2 * k + 1) as f64 - t) * cur / (k + 1) as f64 - k as f64 * prev / (k + 1) as f64;
            prev = cur;
            cur = next;
        }
        (cur, prev)
    };
    for t in nodes.iter_mut() {
        for _ in 0..4 {
            let (ln, lm) = laguerre(n, *t);
            let deriv = n as f64 * (ln - lm) / *t;
            let step = ln / deriv;
            *t -= step;
            if step.abs() <= 4.0 * f64::EPSILON * t.abs() {
                break;
            }
        }
    }
    let weights = nodes
        .iter()
        .map(|&t| {
            let (l_next, _) = laguerre(n + 1, t);
            t / (((n + 1) as f64).powi(2) * l_next * l_next)
        })
        .collect();
    (nodes, weights)
}

/// `d lambda(r) = c r^a exp(-b r^p) dr` on `[0, support_radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialMeasure {
    pub family: String,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    /// Slope `s` of `e_k = s k`.
    pub slope: f64,
    pub support_radius: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `|m_k - e_k!/(2 pi)| / (e_k!/(2 pi))` for `k = 0..=order`.
    pub moment_residuals: Vec<f64>,
}

impl RadialMeasure {
    pub fn density(&self, r: f64) -> f64 {
        self.c * r.powf(self.a) * (-self.b * r.powf(self.p)).exp()
    }

    /// Quadrature value of `int d lambda(r) r^{2k}`.
    pub fn moment(&self, k: usize) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * r.powi(2 * k as i32))
            .sum()
    }

    /// Same measure multiplied by `factor` (density and weights).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c: self.c * factor,
            weights: self.weights.iter().map(|w| w * factor).collect(),
            ..self.clone()
        }
    }

    pub fn max_moment_residual(&self) -> f64 {
        self.moment_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Reads a level-1 spectrum as `0 = e_0 < e_1 < ...`. Imaginary parts and
/// the first value must vanish relative to `tol * max |e|`.
pub fn eps_from_spectrum(values: &[C64], tol: f64) -> Result<EpsilonSequence> {
    let scale = values.iter().map(|v| v.norm()).fold(1.0, f64::max);
    if let Some((n, v)) = values.iter().enumerate().find(|(_, v)| v.im.abs() > tol * scale) {
        return Err(Error::Regime(format!("eigenvalue {n} = {v} is not real")));
    }
    let mut eps: Vec<f64> = values.iter().map(|v| v.re).collect();
    match eps.first_mut() {
        Some(e0) if e0.abs() <= tol * scale => *e0 = 0.0,
        Some(e0) => return Err(Error::Regime(format!("lowest eigenvalue {e0} is not zero"))),
        None => return Err(Error::Parameter("empty spectrum".into())),
    }
    if let Some(n) = eps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Regime(format!(
            "eigenvalues are not strictly increasing at index {}",
            n + 1
        )));
    }
    EpsilonSequence::new(eps)
}

/// Slope `s` when `e_k = s k` for every stored `k`.
pub fn linear_slope(eps: &EpsilonSequence) -> Option<f64> {
    if eps.len() < 2 || eps.get(1) <= 0.0 {
        return None;
    }
    let s = eps.get(1);
    eps.values()
        .iter()
        .enumerate()
        .all(|(k, &e)| (e - s * k as f64).abs() <= 1e-10 * s * (k.max(1) as f64))
        .then_some(s)
}

/// Radial measure with moments `e_k!/(2 pi)` for `e_k = s k`:
/// `d lambda(r) = r exp(-r^2/s) / (pi s) dr`, integrated by Gauss-Laguerre on
/// `t = r^2 / s`.
pub fn solve_moment_measure(eps: &EpsilonSequence, order: usize) -> Result<RadialMeasure> {
    solve_moment_measure_with(eps, order, DEFAULT_QUADRATURE_NODES)
}

pub fn solve_moment_measure_with(eps: &EpsilonSequence, order: usize, nodes: usize) -> Result<RadialMeasure> {
    let s = linear_slope(eps).ok_or_else(|| {
        Error::NoClosedForm("only e_k = s k (s > 0) has a closed-form measure".into())
    })?;
    if nodes == 0 || order > 2 * nodes - 1 {
        return Err(Error::Parameter(format!(
            "{nodes} quadrature nodes integrate moments only up to k = {}",
            (2 * nodes).saturating_sub(1)
        )));
    }
    let (t, w) = gauss_laguerre(nodes);
    let mut measure = RadialMeasure {
        family: "gamma".into(),
        c: 1.0 / (PI * s),
        a: 1.0,
        b: 1.0 / s,
        p: 2.0,
        slope: s,
        support_radius: f64::INFINITY,
        nodes: t.iter().map(|t| (s * t).sqrt()).collect(),
        weights: w.iter().map(|w| w / (2.0 * PI)).collect(),
        moment_residuals: Vec::new(),
    };
    let mut target = 1.0 / (2.0 * PI);
    for k in 0..=order {
        if k > 0 {
            target *= s * k as f64;
        }
        measure.moment_residuals.push((measure.moment(k) - target).abs() / target);
    }
    Ok(measure)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCheck {
    /// Quadrature value of `int d nu N^-2 <f, phi(z)> <psi(z), g>`.
    pub lhs: C64,
    pub inner: C64,
    /// `sum_k <f, phi_k> <psi_k, g> / c_k`, times `c_k` when the measure
    /// solves the level-2 moment problem.
    pub projector_sum: C64,
    pub residual: f64,
    pub projector_residual: f64,
}

/// Radial quadrature with the angular integral done exactly (only diagonal
/// `k = l` terms survive).
pub fn resolution_check(
    system: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    measure: &RadialMeasure,
    f: &ComplexVector,
    g: &ComplexVector,
    order: usize,
) -> Result<ResolutionCheck> {
    check_sizes(system, eps)?;
    if order == 0 || order > system.len() {
        return Err(Error::Parameter(format!("order must lie in 1..={}", system.len())));
    }
    if f.len() != system.dim() || g.len() != system.dim() {
        return Err(Error::Dimension("f and g must live in the system's space".into()));
    }
    let ln_fact = ln_factorials(&eps.values()[..order]);
    let mut lhs = C64::new(0.0, 0.0);
    let mut projector_sum = C64::new(0.0, 0.0);
    for k in 0..order {
        let product = inner(f, &system.phi[k]) * inner(&system.psi[k], g);
        let c = system.pairing[k];
        let weight = 2.0 * PI * (measure.moment(k).ln() - ln_fact[k]).exp() / c;
        lhs += product * weight;
        projector_sum += product;
    }
    let inner_fg = inner(f, g);
    Ok(ResolutionCheck {
        lhs,
        inner: inner_fg,
        projector_sum,
        residual: (lhs - inner_fg).norm(),
        projector_residual: (lhs - projector_sum).norm(),
    })
}

/// `sum_k <f, phi_k> <psi_k, g> / c_k` against `<f, g>`: the identity the
/// resolution reduces to, usable without a moment measure.
pub fn sum_form_check(
    system: &BiorthogonalSystem,
    f: &ComplexVector,
    g: &ComplexVector,
    order: usize,
) -> (C64, f64) {
    let sum: C64 = (0..order.min(system.len()))
        .map(|k| inner(f, &system.phi[k]) * inner(&system.psi[k], g) / system.pairing[k])
        .sum();
    (sum, (sum - inner(f, g)).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    Z,
    ZBar,
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" => Ok(Symbol::Z),
            "zbar" => Ok(Symbol::ZBar),
            other => Err(Error::Parse(format!("unsupported symbol '{other}' (expected z or zbar)"))),
        }
    }
}

impl std::fmt::Display for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Symbol::Z => "z",
            Symbol::ZBar => "zbar",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quantized {
    pub symbol: Symbol,
    pub order: usize,
    /// Operator on the ambient space.
    pub ambient: ComplexMatrix,
    /// `<psi_m, Op phi_n>` for `m, n < order`.
    pub basis: ComplexMatrix,
}

/// Operator `int d nu N^-2 sym(z) |phi(z)><psi(z)|` assembled from the
/// quadrature moments of `measure`.
pub fn quantize(
    symbol: Symbol,
    system: &BiorthogonalSystem,
    eps: &EpsilonSequence,
    measure: &RadialMeasure,
    order: usize,
) -> Result<Quantized> {
    check_sizes(system, eps)?;
    check_level1(system)?;
    if order < 2 || order > system.len() {
        return Err(Error::Parameter(format!("order must lie in 2..={}", system.len())));
    }
    let ln_fact = ln_factorials(&eps.values()[..order]);
    let dim = system.dim();
    let mut ambient = ComplexMatrix::zeros(dim, dim);
    for k in 0..order - 1 {
        // int d nu z^{k+1} zbar^{k+1} = 2 pi m_{k+1}
        let coef = 2.0 * PI * (measure.moment(k + 1).ln() - 0.5 * (ln_fact[k] + ln_fact[k + 1])).exp();
        let term = match symbol {
            Symbol::Z => &system.phi[k] * system.psi[k + 1].adjoint(),
            Symbol::ZBar => &system.phi[k + 1] * system.psi[k].adjoint(),
        };
        ambient += term * real(coef);
    }
    let basis = ComplexMatrix::from_fn(order, order, |m, n| inner(&system.psi[m], &(&ambient * &system.phi[n])));
    Ok(Quantized { symbol, order, ambient, basis })
}

/// `n_r x n_theta` polar grid with radii `max * i / (n_r - 1)`.
pub fn polar_grid(max_radius: f64, radial: usize, angular: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(radial * angular);
    for i in 0..radial {
        let r = if radial > 1 { max_radius * i as f64 / (radial - 1) as f64 } else { max_radius };
        for j in 0..angular {
            out.push(C64::from_polar(r, 2.0 * PI * j as f64 / angular.max(1) as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{c64, unit_vector};

    fn boson(len: usize) -> (BiorthogonalSystem, EpsilonSequence) {
        let eps = EpsilonSequence::linear(1.0, len).unwrap();
        (BiorthogonalSystem::standard(&eps), eps)
    }

    #[test]
    fn gauss_laguerre_two_nodes() {
        let (t, w) = gauss_laguerre(2);
        let s = 2f64.sqrt();
        assert!((t[0] - (2.0 - s)).abs() < 1e-14 && (t[1] - (2.0 + s)).abs() < 1e-14);
        assert!((w[0] - (2.0 + s) / 4.0).abs() < 1e-14 && (w[1] - (2.0 - s) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_laguerre_integrates_factorials() {
        let (t, w) = gauss_laguerre(64);
        let mut fact = 1.0;
        for k in 0..40 {
            if k > 0 {
                fact *= k as f64;
            }
            let q: f64 = t.iter().zip(&w).map(|(t, w)| w * t.powi(k)).sum();
            assert!((q - fact).abs() / fact < 1e-12, "k = {k}: {q} vs {fact}");
        }
    }

    #[test]
    fn boson_ladders_are_standard() {
        let (sys, eps) = boson(6);
        let l = build_ladders(&sys, &eps).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if j == i + 1 { (j as f64).sqrt() } else { 0.0 };
                assert!((l.a[(i, j)].re - want).abs() < 1e-15 && l.a[(i, j)].im == 0.0);
            }
        }
        assert!((&l.b - l.a.adjoint()).norm() < 1e-15);
        let (r1, r2) = l.factorization_residuals(&sys);
        assert!(r1 < 1e-12 && r2 < 1e-12);
    }

    #[test]
    fn level_one_rejects_scaled_pairing() {
        let (mut sys, eps) = boson(4);
        sys.pairing[2] = 1.5;
        assert!(matches!(build_ladders(&sys, &eps), Err(Error::LevelMismatch { expected: 1 })));
    }

    #[test]
    fn level_two_with_unit_pairing_matches_level_one() {
        let (sys, eps) = boson(5);
        let l1 = build_ladders(&sys, &eps).unwrap();
        let l2 = build_ladders_level2(&sys, &eps, &[1.0; 5]).unwrap();
        assert!((&l1.a - &l2.a).norm() < 1e-15 && (&l1.b - &l2.b).norm() < 1e-15);
        let mut zero = vec![1.0; 5];
        zero[3] = 0.0;
        assert!(matches!(build_ladders_level2(&sys, &eps, &zero), Err(Error::Kernel { index: 3 })));
    }

    #[test]
    fn level_two_factorizes_with_nonuniform_pairing() {
        let eps = EpsilonSequence::linear(0.7, 5).unwrap();
        let k = [2.0_f64, 0.5, 3.0, 1.25, 0.8];
        let phi: Vec<ComplexVector> = (0..5).map(|n| unit_vector(5, n) * real(k[n].sqrt())).collect();
        let sys = BiorthogonalSystem::new(phi.clone(), phi, vec![real(0.0); 5], k.to_vec()).unwrap();
        let l = build_ladders_level2(&sys, &eps, &k).unwrap();
        let (r1, r2) = l.factorization_residuals(&sys);
        assert!(r1 < 1e-12 && r2 < 1e-12, "{r1} {r2}");
        // A phi_k = sqrt(e_k k_k / k_{k-1}) phi_{k-1}
        let lowered = &l.a * &sys.phi[2];
        let want = &sys.phi[1] * real((1.4_f64 * 3.0 / 0.5).sqrt());
        assert!((lowered - want).norm() < 1e-12);
    }

    #[test]
    fn growth_fits() {
        let eps = EpsilonSequence::linear(1.0, 20).unwrap();
        let unit: Vec<ComplexVector> = (0..20).map(|n| unit_vector(20, n)).collect();
        assert_eq!(fit_norm_growth(&unit, &eps).unwrap(), (1.0, 0.0));

        let geometric: Vec<ComplexVector> = (0..20).map(|n| unit_vector(20, n) * real(2f64.powi(n as i32))).collect();
        let (r, a) = fit_norm_growth(&geometric, &eps).unwrap();
        assert!((r - 2.0).abs() < 1e-12 && a == 0.0);

        let factorial: Vec<ComplexVector> = (0..20)
            .map(|n| unit_vector(20, n) * real(eps.factorial(n).sqrt()))
            .collect();
        let (r, a) = fit_norm_growth(&factorial, &eps).unwrap();
        assert!((r - 1.0).abs() < 1e-9 && (a - 0.5).abs() < 1e-12, "{r} {a}");

        let too_fast: Vec<ComplexVector> = (0..20)
            .map(|n| unit_vector(20, n) * real(eps.factorial(n)))
            .collect();
        assert!(matches!(fit_norm_growth(&too_fast, &eps), Err(Error::Growth(_))));
    }

    #[test]
    fn radius_cases() {
        let fit = GrowthFit { r_phi: 1.0, alpha_phi: 0.0, r_psi: 1.0, alpha_psi: 0.0 };
        let linear = EpsilonSequence::linear(1.0, 30).unwrap();
        assert!(radius(&fit, &linear).rho.is_infinite());

        let bounded = EpsilonSequence::new((0..30).map(|k| 4.0 * (1.0 - 0.5f64.powi(k))).collect()).unwrap();
        let conv = radius(&fit, &bounded);
        assert!((conv.rho_hat - 4.0).abs() < 1e-12, "{}", conv.rho_hat);
        assert!((conv.rho - 2.0).abs() < 1e-12);

        let half = GrowthFit { r_phi: 3.0, alpha_phi: 0.5, r_psi: 1.0, alpha_psi: 0.0 };
        let conv = radius(&half, &linear);
        assert!((conv.rho_phi - 1.0 / 3.0).abs() < 1e-15);
        assert!((conv.rho - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn power_law_increments_have_finite_limit() {
        let seq: Vec<f64> = (1..60).map(|k| 3.0 - 1.0 / (k as f64).powi(2)).collect();
        let lim = extrapolate_limit(&seq);
        assert!((lim - 3.0).abs() < 1e-3, "{lim}");
        let slow: Vec<f64> = (1..60).map(|k| (k as f64).ln()).collect();
        assert!(extrapolate_limit(&slow).is_infinite());
    }

    #[test]
    fn coherent_state_at_origin() {
        let (sys, eps) = boson(10);
        let s = coherent_pair(&sys, &eps, C64::new(0.0, 0.0), 10).unwrap();
        assert_eq!(s.normalization, 1.0);
        assert!((&s.phi - &sys.phi[0]).norm() < 1e-15);
    }

    #[test]
    fn boson_coherent_state_matches_gaussian() {
        let (sys, eps) = boson(50);
        let ladder = build_ladders(&sys, &eps).unwrap();
        let z = c64(0.8, -1.1);
        let s = coherent_pair(&sys, &eps, z, 50).unwrap();
        assert!((s.normalization - (-z.norm_sqr() / 2.0).exp()).abs() < 1e-14);
        assert!(s.overlap_defect() < 1e-13);
        assert!(s.eigen_residual(&ladder) <= 10.0 * s.tail_bound);
        assert!(s.dual_eigen_residual(&ladder) <= 10.0 * s.tail_bound);
    }

    #[test]
    fn large_argument_trips_the_ratio_test() {
        let (sys, eps) = boson(10);
        let err = coherent_pair(&sys, &eps, c64(3.0, 0.0), 10).unwrap_err();
        assert!(matches!(err, Error::TailNotConverged { .. }), "{err}");
    }

    #[test]
    fn bounded_spectrum_diverges_outside_radius() {
        let eps = EpsilonSequence::new((0..30).map(|k| 4.0 * (1.0 - 0.5f64.powi(k))).collect()).unwrap();
        let sys = BiorthogonalSystem::standard(&eps);
        let err = coherent_pair(&sys, &eps, c64(2.5, 0.0), 30).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn empty_kernel_filter_equals_level_two() {
        let (sys, eps) = boson(30);
        let z = c64(0.3, 0.9);
        let a = coherent_pair_level2(&sys, &eps, &[1.0; 30], z, 30).unwrap();
        for convention in [FactorialConvention::OriginalSequence, FactorialConvention::Relabeled] {
            let b = filter_and_build(&sys, &eps, &[], z, 30, convention).unwrap();
            assert!((&a.phi - &b.phi).norm() < 1e-15);
        }
    }

    #[test]
    fn filtered_ladders_lower_the_filtered_state() {
        let eps = EpsilonSequence::linear(1.0, 40).unwrap();
        let mut sys = BiorthogonalSystem::standard(&eps);
        let kernel: Vec<usize> = (0..40).filter(|n| n % 3 == 1).collect();
        for &n in &kernel {
            sys.phi[n].fill(real(0.0));
            sys.psi[n].fill(real(0.0));
            sys.pairing[n] = 0.0;
        }
        for convention in [FactorialConvention::OriginalSequence, FactorialConvention::Relabeled] {
            let filtered = filter_system(&sys, &eps, &kernel, convention).unwrap();
            let ladder = filtered.ladders();
            let (r1, r2) = ladder.factorization_residuals(&filtered.system);
            assert!(r1 < 1e-9 && r2 < 1e-9);
            let s = filtered.state(c64(0.5, 0.5), &SeriesConfig::new(20)).unwrap();
            assert!(s.overlap_defect() < 1e-13);
            assert!(s.eigen_residual(&ladder) <= 10.0 * s.tail_bound);
        }
        assert!(matches!(
            filter_system(&sys, &eps, &(0..40).collect::<Vec<_>>(), FactorialConvention::Relabeled),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn moment_measure_linear() {
        let eps = EpsilonSequence::linear(1.0, 10).unwrap();
        let m = solve_moment_measure(&eps, 20).unwrap();
        assert!((m.moment(3) - 6.0 / (2.0 * PI)).abs() < 1e-13);
        assert!((m.moment(0) * 2.0 * PI - 1.0).abs() < 1e-12);
        assert!(m.max_moment_residual() < 1e-12);
        assert!((m.density(1.0) - (-1.0f64).exp() / PI).abs() < 1e-15);

        let not_linear = EpsilonSequence::new(vec![0.0, 1.0, 3.0]).unwrap();
        assert!(matches!(solve_moment_measure(&not_linear, 2), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn quantization_reproduces_ladders_and_is_linear_in_the_measure() {
        let (sys, eps) = boson(12);
        let ladder = build_ladders(&sys, &eps).unwrap();
        let m = solve_moment_measure(&eps, 12).unwrap();
        let qa = quantize(Symbol::Z, &sys, &eps, &m, 12).unwrap();
        let qb = quantize(Symbol::ZBar, &sys, &eps, &m, 12).unwrap();
        assert!((&qa.ambient - &ladder.a).norm() < 1e-10);
        assert!((&qb.ambient - &ladder.b).norm() < 1e-10);
        let doubled = quantize(Symbol::Z, &sys, &eps, &m.scaled(2.0), 12).unwrap();
        assert!((&doubled.ambient - &qa.ambient * real(2.0)).norm() < 1e-10);
        assert!("w".parse::<Symbol>().is_err());
    }

    #[test]
    fn resolution_on_ground_state() {
        let (sys, eps) = boson(10);
        let m = solve_moment_measure(&eps, 10).unwrap();
        let r = resolution_check(&sys, &eps, &m, &sys.phi[0], &sys.phi[0], 10).unwrap();
        assert!((r.inner - real(1.0)).norm() < 1e-15);
        assert!(r.residual < 1e-12);
    }
}
