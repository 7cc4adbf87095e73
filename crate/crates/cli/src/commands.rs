use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use isospec::bicoherent::{
    build_ladders, build_ladders_level2, coherent_pair_level2_with, coherent_pair_with, convergence,
    eps_from_spectrum, filter_system, linear_slope, polar_grid, quantize as quantize_symbol, resolution_check,
    solve_moment_measure_with, sum_form_check, BicoherentState, ConvergenceData, FactorialConvention,
    LadderPair, RadialMeasure, SeriesConfig, Symbol, DEFAULT_QUADRATURE_NODES, TAIL_RATIO_LIMIT,
};
use isospec::intertwining::{
    adjoint_descent, make_commuting_pair, make_hermitian_commuting_pair, adjointness_transfer_check, random_vector_pairs,
    verify_relations_with, IntertwiningModel, Tolerances, VerifyOptions,
};
use isospec::io::{matrix_to_csv, to_json, CsvTable, MatrixJson, ModelFile, CSV_HEADER};
use isospec::operator::{inner, op_norm, BiorthogonalSystem, ComplexMatrix, EpsilonSequence, C64};
use isospec::report::RelationReport;
use isospec::zoo::{Fixture, FixtureId, Params};

use crate::config::RunConfig;
use crate::{
    BuildArgs, CoherentArgs, Failure, FixtureBuildArgs, GenerateArgs, QuantizeArgs, SourceArgs, TolArgs,
    VerifyArgs,
};

const MIN_TRUNCATION: usize = 4;
const RESOLUTION_TOL: f64 = 1e-7;
const QUANTIZATION_TOL: f64 = 1e-8;
const MOMENT_TOL: f64 = 1e-10;
const RESOLUTION_SUPPORT: usize = 10;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| input(format!("cannot create {}: {e}", dir.display())))?;
            }
            std::fs::write(p, text).map_err(|e| input(format!("cannot write {}: {e}", p.display())))
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(input(format!("{name} must be a positive number, got {v}")))
    }
}

fn tolerances(args: &TolArgs, cfg: &RunConfig) -> Result<Tolerances, Failure> {
    let mut tol = Tolerances::default();
    if let Some(k) = args.kernel_tol.or(cfg.tolerances.kernel) {
        tol.kernel = positive("kernel tolerance", k)?;
    }
    if let Some(r) = args.relation_tol.or(cfg.tolerances.relation) {
        tol.relation = positive("relation tolerance", r)?;
    }
    Ok(tol)
}

/// Flag, then `ISOSPEC_SEED`, then the config file, then 0.
fn seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("ISOSPEC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| input(format!("ISOSPEC_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(cfg.seed.unwrap_or(0)),
    }
}

pub fn parse_complex(text: &str) -> Result<C64, Failure> {
    let t = text.trim();
    let parsed = match t {
        "i" | "+i" => Ok(C64::new(0.0, 1.0)),
        "-i" => Ok(C64::new(0.0, -1.0)),
        _ => C64::from_str(t),
    };
    match parsed {
        Ok(z) if z.re.is_finite() && z.im.is_finite() => Ok(z),
        _ => Err(input(format!("cannot read {t:?} as a number (examples: 2, -0.5, 1+2i, 0.5i)"))),
    }
}

fn parse_params(pairs: impl IntoIterator<Item = (String, String)>, into: &mut Params) -> Result<(), Failure> {
    for (k, v) in pairs {
        into.insert(k.trim().to_string(), parse_complex(&v)?);
    }
    Ok(())
}

fn split_flag_params(flags: &[String]) -> Result<Vec<(String, String)>, Failure> {
    flags
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| input(format!("parameter {s:?} is not of the form name=value")))
        })
        .collect()
}

fn truncation(flag: Option<usize>, cfg: &RunConfig) -> Result<Option<usize>, Failure> {
    match flag.or(cfg.truncation) {
        Some(n) if n < MIN_TRUNCATION => Err(input(format!("truncation must be at least {MIN_TRUNCATION}, got {n}"))),
        t => Ok(t),
    }
}

fn build_fixture(id: &str, flags: &[String], trunc: Option<usize>, cfg: &RunConfig) -> Result<Fixture, Failure> {
    let id = FixtureId::from_str(id)?;
    let mut params = Params::new();
    parse_params(cfg.param_strings()?, &mut params)?;
    parse_params(split_flag_params(flags)?, &mut params)?;
    Ok(id.build(&params, trunc)?)
}

pub struct Loaded {
    pub model: IntertwiningModel,
    pub fixture: Option<Fixture>,
    pub file: Option<ModelFile>,
}

fn load_source(src: &SourceArgs, cfg: &RunConfig, tol: Tolerances) -> Result<Loaded, Failure> {
    let from_flags = src.model.is_some() || src.theta1.is_some() || src.x.is_some() || src.fixture.is_some();
    let pick = |flag: &Option<PathBuf>, conf: &Option<PathBuf>| if from_flags { flag.clone() } else { conf.clone() };
    let model_path = pick(&src.model, &cfg.model);
    let theta1 = pick(&src.theta1, &cfg.theta1);
    let x = pick(&src.x, &cfg.x);
    let fixture = if from_flags { src.fixture.clone() } else { cfg.fixture.clone() };
    let kinds = [model_path.is_some(), theta1.is_some() || x.is_some(), fixture.is_some()];
    if kinds.iter().filter(|&&k| k).count() != 1 {
        return Err(input("give exactly one of --model, --theta1 with --x, or --fixture"));
    }
    let trunc = truncation(src.truncation, cfg)?;
    if let Some(path) = model_path {
        let file = ModelFile::read(&path)?;
        let model = file.to_model(tol)?;
        let fixture = match &file.fixture {
            Some(info) => Some(info.id.build(&info.params, info.truncation)?),
            None => None,
        };
        return Ok(Loaded {
            model,
            fixture,
            file: Some(file),
        });
    }
    if let Some(id) = fixture {
        let f = build_fixture(&id, &src.params, trunc, cfg)?;
        return Ok(Loaded {
            model: f.model.clone(),
            fixture: Some(f),
            file: None,
        });
    }
    let (Some(t), Some(x)) = (theta1, x) else {
        return Err(input("--theta1 and --x must be given together"));
    };
    let t = isospec::io::read_matrix(&t)?;
    let x = isospec::io::read_matrix(&x)?;
    Ok(Loaded {
        model: IntertwiningModel::build(t, x, tol)?,
        fixture: None,
        file: None,
    })
}

fn model_document(loaded: &Loaded, tol: &Tolerances) -> Result<String, Failure> {
    let residuals = verify_relations_with(&loaded.model, &VerifyOptions::new(tol.relation));
    let file = match &loaded.fixture {
        Some(f) => ModelFile::from_fixture(f, residuals),
        None => ModelFile::new(&loaded.model, residuals),
    };
    Ok(to_json(&file)?)
}

pub fn build(args: &BuildArgs, cfg: &RunConfig) -> Result<(), Failure> {
    cfg.check_command("build")?;
    let tol = tolerances(&args.tol, cfg)?;
    let loaded = load_source(&args.source, cfg, tol)?;
    let m = &loaded.model;
    write_text(args.out.as_deref().or(cfg.out.as_deref()), &model_document(&loaded, &tol)?)?;
    eprintln!(
        "built {} model: dim H1 = {}, dim H2 = {}, kernel set {:?}",
        m.case,
        m.dim1(),
        m.dim2(),
        m.kernel_set
    );
    Ok(())
}

pub fn fixture_build(args: &FixtureBuildArgs, cfg: &RunConfig) -> Result<(), Failure> {
    cfg.check_command("fixture")?;
    let tol = tolerances(&args.tol, cfg)?;
    let trunc = truncation(args.truncation, cfg)?;
    let f = build_fixture(&args.id, &args.params, trunc, cfg)?;
    let loaded = Loaded {
        model: f.model.clone(),
        fixture: Some(f),
        file: None,
    };
    write_text(args.out.as_deref().or(cfg.out.as_deref()), &model_document(&loaded, &tol)?)?;
    Ok(())
}

pub fn fixture_list() -> Result<(), Failure> {
    let mut out = String::new();
    for id in FixtureId::ALL {
        let params: Vec<String> = id
            .default_params()
            .iter()
            .map(|(k, v)| if v.im == 0.0 { format!("{k}={}", v.re) } else { format!("{k}={v}") })
            .collect();
        out.push_str(&format!("{}\t{}\t{}\n", id, params.join(","), id.description()));
    }
    write_text(None, &out)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    schema: &'static str,
    case: String,
    all_pass: bool,
    failures: Vec<&'a str>,
    report: &'a RelationReport,
}

fn summarize(report: &RelationReport) -> String {
    let failed: Vec<String> = report
        .failures()
        .map(|e| match e.worst_index {
            Some(i) => format!("{} (residual {:.3e} at index {i})", e.name, e.residual),
            None => format!("{} (residual {:.3e})", e.name, e.residual),
        })
        .collect();
    format!(
        "{} checks, {} failed{}{}",
        report.entries.len(),
        failed.len(),
        if failed.is_empty() { "" } else { ": " },
        failed.join("; ")
    )
}

pub fn verify(args: &VerifyArgs, cfg: &RunConfig) -> Result<(), Failure> {
    cfg.check_command("verify")?;
    let tol = tolerances(&args.tol, cfg)?;
    let loaded = load_source(&args.source, cfg, tol)?;
    let m = &loaded.model;
    let opts = VerifyOptions {
        tolerance: tol.relation,
        interior: args.interior.or(cfg.interior),
    };
    let mut report = verify_relations_with(m, &opts);
    report.extend(adjointness_transfer_check(m, tol.relation));
    match adjoint_descent(m) {
        Ok(d) => {
            report.check("adjoint_descent", d.difference, op_norm(&d.theta2_adjoint));
        }
        Err(_) => report.not_applicable("adjoint_descent", "Theta2 comes from X^{-1}; nothing to descend"),
    }
    if let Some(file) = &loaded.file {
        match file.metadata_mismatch(m) {
            Some(why) => report.fail("stored_metadata", why),
            None => {
                report.check("stored_metadata", 0.0, 1.0);
            }
        }
    }
    if let Some(f) = &loaded.fixture {
        if loaded.file.is_some() {
            let d = (&f.model.theta1 - &m.theta1).norm().max(if f.model.x.shape() == m.x.shape() {
                (&f.model.x - &m.x).norm()
            } else {
                f64::INFINITY
            });
            let d2 = if f.model.theta2.shape() == m.theta2.shape() {
                (&f.model.theta2 - &m.theta2).norm()
            } else {
                f64::INFINITY
            };
            report.check("fixture_consistency", d.max(d2), op_norm(&m.theta1));
        }
        for e in &f.expectations {
            report.check(&format!("expected {}", e.name), e.error(), e.expected.norm());
        }
    }
    let out = VerifyOutput {
        schema: "isospec-report-v1",
        case: m.case.to_string(),
        all_pass: report.all_pass(),
        failures: report.failures().map(|e| e.name.as_str()).collect(),
        report: &report,
    };
    write_text(args.out.as_deref().or(cfg.out.as_deref()), &to_json(&out)?)?;
    let summary = summarize(&report);
    if report.all_pass() {
        eprintln!("verify: {summary}");
        Ok(())
    } else {
        Err(Failure::Verification(summary))
    }
}

/// Real increasing spectrum of the level-1 family.
fn level1_eps(loaded: &Loaded, tol: f64) -> Result<EpsilonSequence, Failure> {
    if let Some(eps) = loaded.fixture.as_ref().and_then(|f| f.eps.clone()) {
        return Ok(eps);
    }
    Ok(eps_from_spectrum(&loaded.model.eigenvalues, tol)?)
}

enum Level {
    One,
    Two,
    Filtered(FactorialConvention),
}

struct Family {
    level: Level,
    system: BiorthogonalSystem,
    ladder: LadderPair,
    conv: ConvergenceData,
    filtered: Option<isospec::bicoherent::FilteredSystem>,
    len: usize,
}

fn family(model: &IntertwiningModel, eps: &EpsilonSequence, level: Level) -> Result<Family, Failure> {
    let fam = match level {
        Level::One => {
            let system = model.level1_system();
            let ladder = build_ladders(&system, eps)?;
            let conv = convergence(&system, eps)?;
            let len = system.len();
            Family { level, system, ladder, conv, filtered: None, len }
        }
        Level::Two => {
            let system = model.level2_system();
            let ladder = build_ladders_level2(&system, eps, &system.pairing)?;
            let conv = convergence(&system, eps)?;
            let len = system.len();
            Family { level, system, ladder, conv, filtered: None, len }
        }
        Level::Filtered(conv_kind) => {
            let fs = filter_system(&model.level2_system(), eps, &model.kernel_set, conv_kind)?;
            let ladder = fs.ladders();
            let conv = fs.convergence()?;
            let len = fs.indices.len();
            Family {
                level,
                system: fs.system.clone(),
                ladder,
                conv,
                filtered: Some(fs),
                len,
            }
        }
    };
    Ok(fam)
}

impl Family {
    fn state(&self, eps: &EpsilonSequence, z: C64, cfg: &SeriesConfig) -> Result<BicoherentState, Failure> {
        let s = match (&self.level, &self.filtered) {
            (Level::Filtered(_), Some(fs)) => fs.state(z, cfg)?,
            (Level::Two, _) => coherent_pair_level2_with(&self.system, eps, &self.system.pairing, z, cfg)?,
            _ => coherent_pair_with(&self.system, eps, z, cfg)?,
        };
        Ok(s)
    }
}

#[derive(Serialize)]
struct MeasureSummary {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_moment_residual: Option<f64>,
}

impl MeasureSummary {
    fn from(m: &Result<RadialMeasure, String>) -> Self {
        match m {
            Ok(m) => Self {
                status: "solved",
                reason: None,
                family: Some(m.family.clone()),
                slope: Some(m.slope),
                density: Some([m.c, m.a, m.b, m.p]),
                nodes: Some(m.nodes.len()),
                max_moment_residual: Some(m.max_moment_residual()),
            },
            Err(why) => Self {
                status: "unavailable",
                reason: Some(why.clone()),
                family: None,
                slope: None,
                density: None,
                nodes: None,
                max_moment_residual: None,
            },
        }
    }
}

#[derive(Serialize)]
struct GridSummary {
    radial: usize,
    angular: usize,
    max_radius: f64,
}

#[derive(Serialize)]
struct CoherentOutput<'a> {
    schema: &'static str,
    level: &'static str,
    order: usize,
    eps_len: usize,
    eps_slope: Option<f64>,
    convergence: &'a ConvergenceData,
    grid: GridSummary,
    measure: MeasureSummary,
    resolution_pairs: usize,
    files: Vec<&'static str>,
    all_pass: bool,
    report: &'a RelationReport,
}

fn basis_matrix(op: &ComplexMatrix, system: &BiorthogonalSystem, size: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(size, size, |m, n| {
        inner(&system.psi[m], &(op * &system.phi[n])) / system.pairing[m]
    })
}

pub fn coherent(args: &CoherentArgs, cfg: &RunConfig) -> Result<(), Failure> {
    cfg.check_command("coherent")?;
    let tol = tolerances(&args.tol, cfg)?;
    let loaded = load_source(&args.source, cfg, tol)?;
    let eps = level1_eps(&loaded, tol.relation)?;
    let level_name = args.level.clone().or(cfg.level.clone()).unwrap_or_else(|| "1".into());
    let convention: FactorialConvention = match args.convention.as_ref().or(cfg.convention.as_ref()) {
        Some(c) => c.parse()?,
        None => FactorialConvention::default(),
    };
    let (level, level_tag) = match level_name.as_str() {
        "1" => (Level::One, "1"),
        "2" => (Level::Two, "2"),
        "filtered" => (Level::Filtered(convention), "filtered"),
        other => return Err(input(format!("level must be 1, 2 or filtered, got {other:?}"))),
    };
    let fam = family(&loaded.model, &eps, level)?;
    let order = args.order.or(cfg.order).unwrap_or(60.min(fam.len));
    if order == 0 || order > fam.len {
        return Err(input(format!("order must lie in 1..={}, got {order}", fam.len)));
    }
    let ratio_limit = positive(
        "series tail ratio",
        args.series_tail.or(cfg.tolerances.series_tail).unwrap_or(TAIL_RATIO_LIMIT),
    )?;
    let series = SeriesConfig {
        order,
        ratio_limit,
        finite: false,
    };
    let radial = args.radial.or(cfg.grid.radial).unwrap_or(20);
    let angular = args.angular.or(cfg.grid.angular).unwrap_or(16);
    if radial == 0 || angular == 0 {
        return Err(input("grid needs at least one radial and one angular point"));
    }
    let rho = fam.conv.rho;
    let max_radius = match args.max_radius.or(cfg.grid.max_radius) {
        Some(r) if r.is_finite() && r >= 0.0 => r,
        Some(r) => return Err(input(format!("max radius must be a finite non-negative number, got {r}"))),
        None => {
            let natural = if eps.len() > 1 { (2.0 * eps.get(1)).sqrt() } else { 1.0 };
            if rho.is_finite() { natural.min(0.9 * rho) } else { natural }
        }
    };
    if max_radius >= rho {
        return Err(Failure::Domain(format!(
            "grid radius {max_radius} reaches the convergence radius {rho}"
        )));
    }

    let mut report = RelationReport::new(tol.relation);
    let mut states = CsvTable::new(&[
        "z_re",
        "z_im",
        "abs_z",
        "normalization",
        "overlap_re",
        "overlap_im",
        "overlap_defect",
        "eigen_residual",
        "dual_eigen_residual",
        "tail_bound",
        "tail_ratio",
    ]);
    let (mut overlap, mut eig_excess, mut dual_excess) = (0.0_f64, 0.0_f64, 0.0_f64);
    for z in polar_grid(max_radius, radial, angular) {
        let s = fam.state(&eps, z, &series)?;
        let ov = s.overlap();
        let er = s.eigen_residual(&fam.ladder);
        let dr = s.dual_eigen_residual(&fam.ladder);
        overlap = overlap.max(s.overlap_defect());
        eig_excess = eig_excess.max(er - 10.0 * s.tail_bound);
        dual_excess = dual_excess.max(dr - 10.0 * s.tail_bound);
        states.push(&[
            z.re,
            z.im,
            z.norm(),
            s.normalization,
            ov.re,
            ov.im,
            s.overlap_defect(),
            er,
            dr,
            s.tail_bound,
            s.tail_ratio,
        ]);
    }
    report.check("overlap", overlap, 1.0);
    report.check("eigen_residual_beyond_10_tail_bounds", eig_excess.max(0.0), 1.0);
    report.check("dual_eigen_residual_beyond_10_tail_bounds", dual_excess.max(0.0), 1.0);

    let out_dir = args
        .out_dir
        .clone()
        .or(cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("isospec-out"));
    let mut files = vec!["states.csv"];
    write_text(Some(&out_dir.join("states.csv")), &states.render())?;

    let nodes = args.nodes.or(cfg.quadrature_nodes).unwrap_or(DEFAULT_QUADRATURE_NODES);
    let pairs = args.pairs.or(cfg.pairs).unwrap_or(50);
    let measure: Result<RadialMeasure, String> = match fam.level {
        Level::One => solve_moment_measure_with(&eps, order, nodes).map_err(|e| match e {
            e if e.is_domain() => e.to_string(),
            e => format!("{e}"),
        }),
        _ => Err("the moment measure is only solved for the level-1 family".into()),
    };
    if let Ok(m) = &measure {
        let mut r = RelationReport::new(MOMENT_TOL);
        r.check("moment_relative_residual", m.max_moment_residual(), 1.0);
        report.extend(r);
    }

    let dim = fam.system.dim();
    let seed = seed(args.seed, cfg)?;
    let mut resolution = CsvTable::new(&[
        "pair",
        "lhs_re",
        "lhs_im",
        "inner_re",
        "inner_im",
        "residual",
        "sum_form_residual",
    ]);
    let (mut res_max, mut sum_max, mut scale) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (i, (f, g)) in random_vector_pairs(dim, RESOLUTION_SUPPORT, pairs, seed).iter().enumerate() {
        let (_, sum_res) = sum_form_check(&fam.system, f, g, fam.len);
        sum_max = sum_max.max(sum_res);
        scale = scale.max(f.norm() * g.norm());
        let (lhs, inner_fg, residual) = match &measure {
            Ok(m) => {
                let c = resolution_check(&fam.system, &eps, m, f, g, order)?;
                res_max = res_max.max(c.residual);
                (c.lhs, c.inner, c.residual)
            }
            Err(_) => (C64::new(f64::NAN, f64::NAN), inner(f, g), f64::NAN),
        };
        resolution.push(&[i as f64, lhs.re, lhs.im, inner_fg.re, inner_fg.im, residual, sum_res]);
    }
    files.push("resolution.csv");
    write_text(Some(&out_dir.join("resolution.csv")), &resolution.render())?;
    let mut r = RelationReport::new(RESOLUTION_TOL);
    if pairs > 0 {
        r.check("sum_form", sum_max, scale);
        match &measure {
            Ok(_) => {
                r.check("resolution", res_max, scale);
            }
            Err(why) => r.not_applicable("resolution", why),
        }
    }
    report.extend(r);

    if let (Ok(m), Level::One) = (&measure, &fam.level) {
        if order >= 3 {
            let mut r = RelationReport::new(QUANTIZATION_TOL);
            let block = order - 2;
            for (symbol, ladder_op, name, file) in [
                (Symbol::Z, &fam.ladder.a, "quantization_z", "quantize_z.csv"),
                (Symbol::ZBar, &fam.ladder.b, "quantization_zbar", "quantize_zbar.csv"),
            ] {
                let q = quantize_symbol(symbol, &fam.system, &eps, m, order)?;
                let want = basis_matrix(ladder_op, &fam.system, block);
                let got = q.basis.view((0, 0), (block, block)).into_owned();
                let diff = (&got - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
                r.check(name, diff, want.iter().map(|z| z.norm()).fold(0.0, f64::max));
                let text = format!("{CSV_HEADER}\n# <psi_m, Op phi_n>, symbol {symbol}, order {order}\n{}", matrix_to_csv(&q.basis));
                write_text(Some(&out_dir.join(file)), &text)?;
                files.push(file);
            }
            report.extend(r);
        }
    }

    let out = CoherentOutput {
        schema: "isospec-coherent-v1",
        level: level_tag,
        order,
        eps_len: eps.len(),
        eps_slope: linear_slope(&eps),
        convergence: &fam.conv,
        grid: GridSummary {
            radial,
            angular,
            max_radius,
        },
        measure: MeasureSummary::from(&measure),
        resolution_pairs: pairs,
        files: {
            files.push("coherent.json");
            files.clone()
        },
        all_pass: report.all_pass(),
        report: &report,
    };
    write_text(Some(&out_dir.join("coherent.json")), &to_json(&out)?)?;
    let measure_note = match &measure {
        Ok(m) => format!("moment measure solved ({} family, slope {})", m.family, m.slope),
        Err(why) => format!("moment measure unavailable: {why}"),
    };
    let summary = format!("rho = {rho}; {measure_note}; {}", summarize(&report));
    if report.all_pass() {
        eprintln!("coherent: {summary}");
        Ok(())
    } else {
        Err(Failure::Verification(summary))
    }
}

pub fn quantize(args: &QuantizeArgs, cfg: &RunConfig) -> Result<(), Failure> {
    cfg.check_command("quantize")?;
    let tol = tolerances(&args.tol, cfg)?;
    let loaded = load_source(&args.source, cfg, tol)?;
    let eps = level1_eps(&loaded, tol.relation)?;
    let symbol: Symbol = args
        .symbol
        .as_deref()
        .or(cfg.symbol.as_deref())
        .unwrap_or("z")
        .parse()?;
    let system = loaded.model.level1_system();
    let order = args.order.or(cfg.order).unwrap_or(20.min(system.len()));
    let nodes = args.nodes.or(cfg.quadrature_nodes).unwrap_or(DEFAULT_QUADRATURE_NODES);
    let measure = solve_moment_measure_with(&eps, order, nodes)?;
    let q = quantize_symbol(symbol, &system, &eps, &measure, order)?;
    let ladder = build_ladders(&system, &eps)?;
    let op = match symbol {
        Symbol::Z => &ladder.a,
        Symbol::ZBar => &ladder.b,
    };
    let block = order.saturating_sub(2);
    let want = basis_matrix(op, &system, block);
    let got = q.basis.view((0, 0), (block, block)).into_owned();
    let diff = (&got - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let text = if args.json {
        to_json(&MatrixJson::from_matrix(&q.basis))?
    } else {
        format!(
            "{CSV_HEADER}\n# <psi_m, Op phi_n>, symbol {symbol}, order {order}\n{}",
            matrix_to_csv(&q.basis)
        )
    };
    write_text(args.out.as_deref().or(cfg.out.as_deref()), &text)?;
    eprintln!("quantize: symbol {symbol}, order {order}, largest deviation from the ladder on the leading {block}x{block} block {diff:.3e}");
    if diff <= QUANTIZATION_TOL * want.iter().map(|z| z.norm()).fold(1.0, f64::max) {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "quantized {symbol} deviates from the ladder operator by {diff:.3e}"
        )))
    }
}

pub fn generate(args: &GenerateArgs, cfg: &RunConfig) -> Result<(), Failure> {
    cfg.check_command("generate")?;
    let dim1 = args.dim1.or(cfg.dim1).ok_or_else(|| input("--dim1 is required"))?;
    let dim2 = args.dim2.or(cfg.dim2).ok_or_else(|| input("--dim2 is required"))?;
    let seed = seed(args.seed, cfg)?;
    let hermitian = args.hermitian || cfg.hermitian.unwrap_or(false);
    let (theta1, x) = if hermitian {
        make_hermitian_commuting_pair(dim1, dim2, seed)?
    } else {
        make_commuting_pair(dim1, dim2, seed)?
    };
    let dir = args.out_dir.clone().or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    write_text(Some(&dir.join("theta1.json")), &to_json(&MatrixJson::from_matrix(&theta1))?)?;
    write_text(Some(&dir.join("x.json")), &to_json(&MatrixJson::from_matrix(&x))?)?;
    eprintln!("generated {dim1}x{dim1} Theta1 and {dim1}x{dim2} X with seed {seed}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_values() {
        assert_eq!(parse_complex("2").unwrap(), C64::new(2.0, 0.0));
        assert_eq!(parse_complex(" 1+2i ").unwrap(), C64::new(1.0, 2.0));
        assert_eq!(parse_complex("0.5i").unwrap(), C64::new(0.0, 0.5));
        assert_eq!(parse_complex("i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert!(parse_complex("two").is_err());
        assert!(parse_complex("inf").is_err());
    }

    #[test]
    fn flag_params() {
        let p = split_flag_params(&["E1=1".into(), "E2=2.5".into()]).unwrap();
        assert_eq!(p[1], ("E2".to_string(), "2.5".to_string()));
        assert!(split_flag_params(&["E1".into()]).is_err());
    }
}
