//! One PASS/FAIL line per acceptance criterion. Values are compared against
//! oracles computed here, not against the library's own expectation tables.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isospec::bicoherent::{
    build_ladders, coherent_pair_with, polar_grid, quantize, resolution_check, solve_moment_measure, SeriesConfig,
    Symbol,
};
use isospec::intertwining::{
    make_commuting_pair, make_hermitian_commuting_pair, adjointness_transfer_check, random_vector_pairs,
    verify_relations_with, IntertwiningModel, Tolerances, VerifyOptions,
};
use isospec::operator::{
    c64, eig, inner, real, unit_vector, BiorthogonalSystem, ComplexMatrix, ComplexVector, EpsilonSequence, C64,
};
use isospec::report::Status;
use isospec::zoo::{
    annihilation, block_pseudo_fermion_params, coherent_demo, ex3x3_pseudo_fermion, fixture_3x3, fixture_block,
    nlpb_verify_with,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Closed form of the 3x3 example's second operator, entries times 4.
fn closed_form_theta2(e1: f64, e2: f64) -> ComplexMatrix {
    let r3 = 3f64.sqrt();
    let entries = [
        -(1.0 + r3) * e1 + (5.0 + r3) * e2,
        (7.0 - 3.0 * r3) * (e1 - e2),
        -(5.0 + 3.0 * r3) * (e1 - e2),
        (5.0 + r3) * e1 - (1.0 + r3) * e2,
    ];
    ComplexMatrix::from_row_slice(2, 2, &entries.map(|v| real(v / 4.0)))
}

fn criterion1() -> Outcome {
    let f = fixture_3x3(1.0, 2.0, 3.0).map_err(|e| e.to_string())?;
    let m = &f.model;
    let closed = closed_form_theta2(1.0, 2.0);
    let d = max_abs(&(&m.theta2 - &closed));
    ensure(d < 1e-9, || format!("Theta2 differs from the closed form by {d:.3e}"))?;
    ensure(m.kernel_set == vec![2], || format!("kernel set {:?}, want [2] (0-based)", m.kernel_set))?;
    for n in 0..2 {
        let k = m.tilde_k[n].unwrap_or(f64::NAN);
        ensure((k - 1.5).abs() < 1e-10, || format!("tilde_k[{n}] = {k}"))?;
    }
    let report = verify_relations_with(m, &VerifyOptions::new(1e-10));
    let worst = report
        .entries
        .iter()
        .filter(|e| e.name.contains("intertwining") && e.status != Status::NotApplicable)
        .map(|e| e.residual / e.scale.max(1.0))
        .fold(0.0, f64::max);
    ensure(report.all_pass() && worst < 1e-10, || {
        format!("relations: worst intertwining {worst:.3e}, failures {:?}", names(&report))
    })?;
    Ok(format!("|dTheta2| = {d:.1e}, worst intertwining residual {worst:.1e}"))
}

fn names(r: &isospec::report::RelationReport) -> Vec<String> {
    r.failures().map(|e| e.name.clone()).collect()
}

fn criterion2() -> Outcome {
    let n = 40;
    let alpha: Vec<C64> = (1..=n).map(|j| real(j as f64)).collect();
    let beta: Vec<C64> = (1..=n).map(|j| c64(0.0, 0.25 + 0.1 * j as f64)).collect();
    let f = fixture_block(&alpha, &beta).map_err(|e| e.to_string())?;
    let m = &f.model;
    let mut want = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        want[(j, j)] = alpha[j] + beta[j];
    }
    let d = max_abs(&(&m.theta2 - &want));
    ensure(d < 1e-10, || format!("Theta2 differs from diag(alpha+beta) by {d:.3e}"))?;
    // antisymmetric combination of each block, 0-based even indices
    let even: Vec<usize> = (0..n).map(|j| 2 * j).collect();
    ensure(m.kernel_set == even, || format!("kernel set {:?}", m.kernel_set))?;
    let xh = m.x.adjoint();
    for &k in &even {
        let r = (&xh * &m.phi1[k]).norm();
        ensure(r < 1e-12, || format!("X^H phi1[{k}] = {r:.3e}"))?;
    }
    let mut pair = 0.0_f64;
    for j in 0..n {
        pair = pair.max((m.eigenvalues[2 * j] - m.eigenvalues[2 * j + 1].conj()).norm());
    }
    ensure(pair < 1e-10, || format!("conjugate pairing off by {pair:.3e}"))?;
    let report = verify_relations_with(m, &VerifyOptions::new(1e-9));
    ensure(report.all_pass(), || format!("relations: {:?}", names(&report)))?;
    Ok(format!("|dTheta2| = {d:.1e}, pairing {pair:.1e}, {n} kernel vectors"))
}

fn criterion3() -> Outcome {
    let mut worst = (0.0_f64, 0.0_f64);
    for alpha1 in [0.5, 1.0, 2.0] {
        let f = coherent_demo(alpha1, 40).map_err(|e| e.to_string())?;
        let eps = EpsilonSequence::new((0..80).map(|n| 2.0 * alpha1 * n as f64).collect()).unwrap();
        let system = f.model.level1_system();
        let ladder = build_ladders(&system, &eps).map_err(|e| e.to_string())?;
        let cfg = SeriesConfig::new(60);
        for z in polar_grid(2.0 * alpha1.sqrt(), 20, 16) {
            let s = coherent_pair_with(&system, &eps, z, &cfg).map_err(|e| e.to_string())?;
            let want = (-z.norm_sqr() / (4.0 * alpha1)).exp();
            let dn = (s.normalization - want).abs();
            let dov = (s.overlap() - 1.0).norm();
            let er = s.eigen_residual(&ladder);
            worst = (worst.0.max(dn), worst.1.max(dov));
            ensure(dn < 1e-9, || format!("alpha1 = {alpha1}, z = {z}: N = {}, want {want}", s.normalization))?;
            ensure(dov < 1e-9, || format!("alpha1 = {alpha1}, z = {z}: overlap {}", s.overlap()))?;
            ensure(er <= 10.0 * s.tail_bound, || {
                format!("alpha1 = {alpha1}, z = {z}: eigen residual {er:.3e}, tail bound {:.3e}", s.tail_bound)
            })?;
        }
    }
    Ok(format!("|dN| <= {:.1e}, |overlap - 1| <= {:.1e}", worst.0, worst.1))
}

/// `phi_k = S e_k` with `S = 1 + 0.3 (superdiagonal)`.
fn skewed_system(eps: &EpsilonSequence) -> BiorthogonalSystem {
    let dim = eps.len();
    let mut s = ComplexMatrix::identity(dim, dim);
    for i in 0..dim - 1 {
        s[(i, i + 1)] = real(0.3);
    }
    let phi: Vec<ComplexVector> = (0..dim).map(|k| &s * unit_vector(dim, k)).collect();
    BiorthogonalSystem::from_family(phi, eps.values().iter().map(|&e| real(e)).collect()).unwrap()
}

fn criterion4() -> Outcome {
    let mut worst = (0.0_f64, 0.0_f64);
    for s in [1.0, 2.0] {
        let eps = EpsilonSequence::new((0..40).map(|k| s * k as f64).collect()).unwrap();
        let measure = solve_moment_measure(&eps, 20).map_err(|e| e.to_string())?;
        let mut target = 1.0 / (2.0 * PI);
        for k in 0..=20 {
            if k > 0 {
                target *= s * k as f64;
            }
            let rel = (measure.moment(k) - target).abs() / target;
            worst.0 = worst.0.max(rel);
            ensure(rel < 1e-10, || format!("s = {s}: moment {k} relative error {rel:.3e}"))?;
        }
        let system = skewed_system(&eps);
        for (i, (f, g)) in random_vector_pairs(40, 10, 50, 2024 + s as u64).iter().enumerate() {
            let c = resolution_check(&system, &eps, &measure, f, g, 20).map_err(|e| e.to_string())?;
            let d = (c.lhs - inner(f, g)).norm();
            worst.1 = worst.1.max(d);
            ensure(d < 1e-7, || format!("s = {s}, pair {i}: resolution off by {d:.3e}"))?;
        }
    }
    Ok(format!("moments {:.1e}, resolution {:.1e}", worst.0, worst.1))
}

fn criterion5() -> Outcome {
    let eps = EpsilonSequence::new((0..40).map(|k| k as f64).collect()).unwrap();
    let system = skewed_system(&eps);
    let measure = solve_moment_measure(&eps, 20).map_err(|e| e.to_string())?;
    let ladder = build_ladders(&system, &eps).map_err(|e| e.to_string())?;
    let order = 20;
    let mut worst = 0.0_f64;
    for (symbol, op) in [(Symbol::Z, &ladder.a), (Symbol::ZBar, &ladder.b)] {
        let q = quantize(symbol, &system, &eps, &measure, order).map_err(|e| e.to_string())?;
        for m in 0..order - 2 {
            for n in 0..order - 2 {
                let want = inner(&system.psi[m], &(op * &system.phi[n]));
                let d = (q.basis[(m, n)] - want).norm();
                worst = worst.max(d);
                ensure(d < 1e-8, || format!("{symbol}: entry ({m},{n}) off by {d:.3e}"))?;
            }
        }
    }
    Ok(format!("largest entry deviation {worst:.1e}"))
}

fn criterion6() -> Outcome {
    let f = fixture_3x3(1.0, 2.0, 3.0).map_err(|e| e.to_string())?;
    let pf = ex3x3_pseudo_fermion(1.0, 2.0).map_err(|e| e.to_string())?;
    let d = max_abs(&(&pf.hamiltonian - &f.model.theta2));
    ensure(d < 1e-9, || format!("3x3 parameters miss Theta2 by {d:.3e}"))?;
    let d_print = max_abs(&(&pf.hamiltonian - closed_form_theta2(1.0, 2.0)));
    ensure(d_print < 1e-9, || format!("3x3 parameters miss the closed form by {d_print:.3e}"))?;
    let a = &pf.pair.a;
    let b = &pf.pair.b;
    let anti = max_abs(&(a * b + b * a - ComplexMatrix::identity(2, 2)));
    let (a2, b2) = (max_abs(&(a * a)), max_abs(&(b * b)));
    ensure(anti < 1e-12 && a2 < 1e-12 && b2 < 1e-12, || {
        format!("{{a,b}} - 1 = {anti:.3e}, a^2 = {a2:.3e}, b^2 = {b2:.3e}")
    })?;
    let mut block = 0.0_f64;
    for j in 1..=40 {
        for (al, be) in [(real(j as f64), c64(0.0, 0.5)), (c64(j as f64, 0.3), real(0.7 * j as f64))] {
            let p = block_pseudo_fermion_params(al, be);
            let pair = p.pair().map_err(|e| e.to_string())?;
            let h = &pair.b * &pair.a * p.omega + ComplexMatrix::identity(2, 2) * p.rho;
            let want = ComplexMatrix::from_row_slice(2, 2, &[al, be, be, al]);
            block = block.max(max_abs(&(h - want)));
        }
    }
    ensure(block < 1e-12, || format!("block parameters miss by {block:.3e}"))?;
    Ok(format!("3x3 {d:.1e}, anticommutator {anti:.1e}, blocks {block:.1e}"))
}

fn criterion7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 1e-8;
    let mut prop1_applied = 0;
    for i in 0..200 {
        let dim1 = rng.random_range(2..=12);
        let dim2 = rng.random_range(1..dim1.min(9));
        let seed = rng.random::<u64>();
        let hermitian = i % 2 == 1;
        let (t, x) = if hermitian {
            make_hermitian_commuting_pair(dim1, dim2, seed)
        } else {
            make_commuting_pair(dim1, dim2, seed)
        }
        .map_err(|e| format!("instance {i}: {e}"))?;
        let m = IntertwiningModel::build(t, x, Tolerances::default()).map_err(|e| format!("instance {i}: {e}"))?;
        let report = verify_relations_with(&m, &VerifyOptions::new(tol));
        ensure(report.all_pass(), || format!("instance {i} ({dim1}x{dim2}): {:?}", names(&report)))?;

        // every eigenvalue of Theta2 is an eigenvalue of Theta1
        let t1n = m.theta1.norm().max(1.0);
        let es2 = eig(&m.theta2, 1e-8).map_err(|e| format!("instance {i}: {e}"))?;
        for v in &es2.values {
            let d = m.eigenvalues.iter().map(|w| (v - w).norm()).fold(f64::INFINITY, f64::min);
            ensure(d < tol * t1n, || format!("instance {i}: Theta2 eigenvalue {v} is {d:.3e} from the spectrum"))?;
        }
        // k~ > 0 off the kernel, and <X^H psi, X^H phi> = k~
        let xh = m.x.adjoint();
        for n in 0..dim1 {
            let phi2 = &xh * &m.phi1[n];
            let psi2 = &xh * &m.psi1[n];
            let scale = m.phi1[n].norm() * m.psi1[n].norm() * (&m.x * &xh).norm().max(1.0);
            if m.kernel_set.contains(&n) {
                ensure(phi2.norm() <= tol * scale, || format!("instance {i}: kernel vector {n} not annihilated"))?;
                continue;
            }
            let k = m.tilde_k[n].ok_or_else(|| format!("instance {i}: no tilde_k for {n}"))?;
            ensure(k > 0.0, || format!("instance {i}: tilde_k[{n}] = {k}"))?;
            let pairing = inner(&psi2, &phi2);
            ensure((pairing - k).norm() <= tol * scale, || {
                format!("instance {i}: pairing {pairing} vs tilde_k {k}")
            })?;
        }
        let p1 = adjointness_transfer_check(&m, tol);
        ensure(p1.all_pass(), || format!("instance {i}: {:?}", names(&p1)))?;
        if p1.entries.iter().any(|e| e.name == "theta2_self_adjoint" && e.status == Status::Pass) {
            prop1_applied += 1;
        }
    }
    ensure(prop1_applied > 0, || "self-adjointness transfer never applicable".into())?;
    Ok(format!("200 instances, self-adjoint transfer exercised on {prop1_applied}"))
}

fn criterion8() -> Outcome {
    let dim = 16;
    let a = annihilation(dim);
    let b = a.adjoint();
    let eps = EpsilonSequence::new((0..dim).map(|k| k as f64).collect()).unwrap();
    let e0 = unit_vector(dim, 0);
    let report = nlpb_verify_with(&a, &b, &eps, &e0, &e0, dim, 1e-10).map_err(|e| e.to_string())?;
    ensure(report.all_pass(), || format!("boson pair: {:?}", names(&report)))?;
    for name in ["p1 a Phi0", "p2 b^H eta0", "p3 a Phi_n - sqrt(eps_n) Phi_n-1", "biorthogonality"] {
        ensure(report.get(name).is_some_and(|e| e.status == Status::Pass), || format!("{name} missing"))?;
    }
    let mut broken = b.clone();
    broken[(9, 8)] += real(0.05);
    let bad = nlpb_verify_with(&a, &broken, &eps, &e0, &e0, dim, 1e-10).map_err(|e| e.to_string())?;
    let p3 = bad
        .get("p3 a Phi_n - sqrt(eps_n) Phi_n-1")
        .ok_or_else(|| "p3 entry missing".to_string())?;
    ensure(p3.status == Status::Fail && p3.residual > 1e-3, || format!("fault not detected: {p3:?}"))?;
    ensure(p3.worst_index == Some(9), || format!("fault localized at {:?}, injected at 9", p3.worst_index))?;
    Ok(format!("fault residual {:.1e} at index 9", p3.residual))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("3x3 reproduction", criterion1, Duration::from_secs(1)),
        ("block reproduction, N = 40", criterion2, Duration::from_secs(1)),
        ("bicoherent normalization", criterion3, Duration::from_secs(10)),
        ("resolution of the identity", criterion4, Duration::from_secs(10)),
        ("quantization", criterion5, Duration::from_secs(5)),
        ("pseudo-fermion closure", criterion6, Duration::from_secs(1)),
        ("property suite", criterion7, Duration::from_secs(30)),
        ("lowering-pair verifier", criterion8, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > *budget => Err(format!("{msg}; took {took:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {}: PASS {name} ({took:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({took:.2?}): {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
