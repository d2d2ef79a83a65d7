use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use sparse_sphere::geom::{gauss_legendre_grid, SphereGrid};
use sparse_sphere::harmonic::{analyze, map_bispectrum_estimate, power_spectrum, synthesize};
use sparse_sphere::io::{coefficients_json, mono_trace_json, poly_trace_json, sparse_field_json, write_grid};
use sparse_sphere::model::{
    fnl_coefficient_variance, gen_fnl_weights, gen_iid_weights, mc_reduced_bispectrum, reduced_bispectrum_formula,
    reduced_bispectrum_oracle, WeightDistribution, MAX_ORACLE_LMAX,
};
use sparse_sphere::reconstruct::{empirical_spectrum_of_mono_output, greedy_mono, greedy_poly, SearchConfig};
use sparse_sphere::rng::stream;
use sparse_sphere::spectra::SpectrumModel;
use sparse_sphere::stats::MeanEstimate;
use sparse_sphere::{GridField, HarmonicCoefficients, PowerSpectrum, SparseField};

use crate::args::*;
use crate::error::{config_err, CliError, CliResult};
use crate::output::{config_path_for, ensure_dir, sibling, write_atomic, FieldInput};
use crate::render::encode_png;

/// Seed modifier for the map-based bispectrum realizations, so they never
/// share streams with the weight-level Monte Carlo.
pub const MAP_SEED_KEY: u64 = 0x8000_0000_0000_0000;

/// Agreement threshold in standard errors.
pub const AGREEMENT_SE: f64 = 5.0;

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct ConfigEcho<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    arguments: &'a A,
    derived: Value,
}

fn write_config<A: Serialize>(path: &Path, subcommand: &'static str, args: &A, derived: Value) -> CliResult<()> {
    let echo = ConfigEcho {
        tool: "sparse-sphere",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        arguments: args,
        derived,
    };
    let mut text = serde_json::to_string_pretty(&echo).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// The spectrum and, for parametric choices, its model.
pub fn load_spectrum(a: &SpectrumArgs, lmax: usize) -> CliResult<(PowerSpectrum, Option<SpectrumModel>)> {
    if let Some(p) = &a.spectrum_csv {
        let file = fs::File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let s = PowerSpectrum::read_csv(BufReader::new(file))?;
        if s.lmax() < lmax {
            return Err(config_err(format!("spectrum file stops at ell = {} below lmax = {lmax}", s.lmax())));
        }
        return Ok((s.truncate(lmax), None));
    }
    let model = match a.model {
        ModelArg::WhittleMatern => SpectrumModel::WhittleMatern { beta: a.beta },
        ModelArg::WhittleMaternExact => SpectrumModel::WhittleMaternExact { beta: a.beta },
    };
    Ok((model.build(lmax)?, Some(model)))
}

/// One field draw. Directions come first, then weights by ascending ℓ, then k.
pub fn generate<R: Rng + ?Sized>(
    s: &PowerSpectrum,
    model: Option<SpectrumModel>,
    k: usize,
    weights: WeightsArg,
    fnl: f64,
    seed: u64,
    rng: &mut R,
) -> CliResult<SparseField> {
    let mut field = match weights {
        WeightsArg::Gaussian => gen_iid_weights(s, k, WeightDistribution::Gaussian, rng)?,
        WeightsArg::Rademacher => gen_iid_weights(s, k, WeightDistribution::Rademacher, rng)?,
        WeightsArg::Fnl => {
            if k != 1 {
                return Err(config_err("the f_NL generator uses a single direction; pass -k 1"));
            }
            gen_fnl_weights(s, fnl, rng)?
        }
    };
    let mut p = field.provenance().clone();
    p.spectrum_model = model;
    p.seed = Some(seed);
    field.set_provenance(p);
    Ok(field)
}

fn check_weights_args(weights: WeightsArg, fnl: f64) -> CliResult<()> {
    if !fnl.is_finite() {
        return Err(config_err("f_NL must be finite"));
    }
    if weights != WeightsArg::Fnl && fnl != 0.0 {
        return Err(config_err("--fnl requires --weights fnl"));
    }
    Ok(())
}

fn counts(field: &SparseField) -> Value {
    json!({
        "weights": field.weight_count(),
        "direction_slots": field.direction_count(),
        "parameters": field.parameter_count(),
        "dense_coefficients": field.dense_count(),
    })
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    check_weights_args(a.weights, a.fnl)?;
    if a.k == 0 {
        return Err(config_err("K must be at least 1"));
    }
    let grid_lmax = a.grid_lmax.unwrap_or(a.lmax);
    let grid = match a.nphi {
        Some(n) => SphereGrid::new(grid_lmax, n)?,
        None => gauss_legendre_grid(grid_lmax),
    };
    let (s, model) = load_spectrum(&a.spectrum, a.lmax)?;
    let field = generate(&s, model, a.k, a.weights, a.fnl, a.seed, &mut stream(a.seed, 0))?;
    let grid_field = if a.no_grid { None } else { Some(field.synthesize_grid(&grid)?) };

    ensure_dir(&a.out)?;
    let field_path = sibling(&a.out, &a.prefix, "json");
    write_atomic(&field_path, sparse_field_json(&field).render(2).as_bytes())?;
    let mut derived = json!({
        "counts": counts(&field),
        "grid": { "lmax": grid.l_grid(), "ntheta": grid.n_theta(), "nphi": grid.n_phi() },
        "outputs": { "field": field_path.display().to_string() },
    });
    if let Some(g) = &grid_field {
        let grid_path = sibling(&a.out, &a.prefix, "sgf");
        let mut buf = Vec::new();
        write_grid(g, &mut buf)?;
        write_atomic(&grid_path, &buf)?;
        derived["outputs"]["grid"] = json!(grid_path.display().to_string());
    }
    write_config(&sibling(&a.out, &a.prefix, "config.json"), "simulate", a, derived)?;
    println!(
        "simulated lmax={} K={} ({}): {} parameters vs {} dense coefficients",
        a.lmax,
        a.k,
        field.provenance().generator,
        field.parameter_count(),
        field.dense_count()
    );
    Ok(())
}

fn spectrum_csv(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn analyze_cmd(a: &AnalyzeArgs) -> CliResult<()> {
    match (&a.input, a.mc) {
        (Some(_), Some(_)) => Err(config_err("pass either an input file or --mc, not both")),
        (None, None) => Err(config_err("an input file or --mc is required")),
        (Some(p), None) => analyze_file(a, p),
        (None, Some(m)) => analyze_mc(a, m),
    }
}

fn analyze_file(a: &AnalyzeArgs, path: &Path) -> CliResult<()> {
    let input = FieldInput::read(path)?;
    let csv = match &input {
        FieldInput::Sparse(field) => {
            let quad = power_spectrum(&analyze(&field.synthesize_grid(&gauss_legendre_grid(field.lmax()))?));
            let exact = field.exact_empirical_spectrum();
            spectrum_csv(
                "ell,C_hat,C_exact,difference",
                quad.iter()
                    .zip(&exact)
                    .enumerate()
                    .map(|(l, (q, e))| vec![l.to_string(), f(*q), f(*e), f(q - e)]),
            )
        }
        other => {
            let c = power_spectrum(&other.coefficients());
            spectrum_csv("ell,C_hat", c.iter().enumerate().map(|(l, v)| vec![l.to_string(), f(*v)]))
        }
    };
    write_atomic(&a.out, csv.as_bytes())?;
    write_config(&config_path_for(&a.out), "analyze", a, json!({ "input_kind": input.kind() }))?;
    println!("wrote spectrum of {} ({}) to {}", path.display(), input.kind(), a.out.display());
    Ok(())
}

fn analyze_mc(a: &AnalyzeArgs, m: usize) -> CliResult<()> {
    check_weights_args(a.weights, a.fnl)?;
    if m < 2 {
        return Err(config_err("--mc needs at least 2 replicas"));
    }
    if a.k == 0 {
        return Err(config_err("K must be at least 1"));
    }
    let (s, model) = load_spectrum(&a.spectrum, a.lmax)?;
    let spectra: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|r| {
            let field = generate(&s, model, a.k, a.weights, a.fnl, a.seed, &mut stream(a.seed, r))?;
            Ok(field.exact_empirical_spectrum())
        })
        .collect::<CliResult<_>>()?;
    let mut within = 0;
    let rows: Vec<Vec<String>> = (0..=a.lmax)
        .map(|l| {
            let xs: Vec<f64> = spectra.iter().map(|c| c[l]).collect();
            let est = MeanEstimate::from_samples(&xs);
            let expected = match a.weights {
                WeightsArg::Fnl => fnl_coefficient_variance(&s, a.fnl, l),
                _ => s.get(l),
            };
            let z = est.z_score(expected);
            let ok = est.within(expected, AGREEMENT_SE);
            within += ok as usize;
            vec![l.to_string(), f(expected), f(est.mean), f(est.std_error), f(z), ok.to_string()]
        })
        .collect();
    let csv = spectrum_csv("ell,expected,mean_C_hat,std_error,z_score,within_5se", rows.into_iter());
    write_atomic(&a.out, csv.as_bytes())?;
    write_config(
        &config_path_for(&a.out),
        "analyze",
        a,
        json!({ "replicas": m, "multipoles_within_5se": within, "multipoles": a.lmax + 1 }),
    )?;
    println!("Monte Carlo over {m} fields: {within}/{} multipoles within 5 SE", a.lmax + 1);
    Ok(())
}

/// Ordered triples `ℓ1 ≤ ℓ2 ≤ ℓ3 ≤ lmax` with an even sum and the triangle inequality.
pub fn valid_triples(lmax: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for l1 in 0..=lmax {
        for l2 in l1..=lmax {
            for l3 in l2..=lmax.min(l1 + l2) {
                if (l1 + l2 + l3) % 2 == 0 {
                    out.push([l1, l2, l3]);
                }
            }
        }
    }
    out
}

fn selection_note(l: [usize; 3]) -> Option<&'static str> {
    let [a, b, c] = l;
    if c > a + b || a > b + c || b > a + c {
        Some("triangle inequality violated; Gaunt coefficients vanish")
    } else if (a + b + c) % 2 == 1 {
        Some("odd ell sum; Gaunt coefficients vanish")
    } else {
        None
    }
}

pub fn bispectrum(a: &BispectrumArgs) -> CliResult<()> {
    if !a.fnl.is_finite() {
        return Err(config_err("f_NL must be finite"));
    }
    if a.mc == 1 || a.map == 1 {
        return Err(config_err("Monte Carlo sizes must be 0 (disabled) or at least 2"));
    }
    let triples = if a.triples.is_empty() { valid_triples(a.lmax) } else { a.triples.clone() };
    if let Some(t) = triples.iter().find(|t| t.iter().any(|&l| l > a.lmax)) {
        return Err(config_err(format!("triple {t:?} exceeds lmax = {}", a.lmax)));
    }
    let (s, _) = load_spectrum(&a.spectrum, a.lmax)?;
    let samples: Vec<HarmonicCoefficients> = (0..a.map as u64)
        .into_par_iter()
        .map(|r| Ok(gen_fnl_weights(&s, a.fnl, &mut stream(a.seed ^ MAP_SEED_KEY, r))?.harmonic_coeffs()))
        .collect::<CliResult<_>>()?;

    let mut csv = String::from(
        "l1,l2,l3,mc_estimate,mc_std_error,formula_first_order,formula,oracle,mc_agrees,map_estimate,map_std_error,map_agrees,note\n",
    );
    let (mut checked, mut agreed) = (0, 0);
    for &l in &triples {
        let formula = reduced_bispectrum_formula(&s, a.fnl, l);
        let oracle = if a.lmax <= MAX_ORACLE_LMAX { Some(reduced_bispectrum_oracle(&s, a.fnl, l)?) } else { None };
        let reference = oracle.unwrap_or(formula.value());
        let mut row = vec![l[0].to_string(), l[1].to_string(), l[2].to_string()];
        if a.mc >= 2 {
            let e = mc_reduced_bispectrum(&s, a.fnl, l, a.mc, a.seed)?;
            let ok = e.within(reference, AGREEMENT_SE);
            checked += 1;
            agreed += ok as usize;
            row.extend([f(e.mean), f(e.std_error)]);
            row.extend([f(formula.first_order), f(formula.value()), oracle.map(f).unwrap_or_default(), ok.to_string()]);
        } else {
            row.extend([String::new(), String::new()]);
            row.extend([f(formula.first_order), f(formula.value()), oracle.map(f).unwrap_or_default(), String::new()]);
        }
        let mut note = selection_note(l).map(str::to_string);
        if a.map >= 2 {
            let e = map_bispectrum_estimate(&samples, l)?;
            let ok = if e.note.is_some() {
                e.estimate == 0.0
            } else {
                (e.estimate - reference).abs() <= AGREEMENT_SE * e.std_error
            };
            checked += 1;
            agreed += ok as usize;
            row.extend([f(e.estimate), f(e.std_error), ok.to_string()]);
            note = e.note.or(note);
        } else {
            row.extend([String::new(), String::new(), String::new()]);
        }
        row.push(note.map(|n| format!("\"{n}\"")).unwrap_or_default());
        let _ = writeln!(csv, "{}", row.join(","));
    }
    write_atomic(&a.out, csv.as_bytes())?;
    write_config(
        &config_path_for(&a.out),
        "bispectrum",
        a,
        json!({ "triples": triples, "checks": checked, "agreeing": agreed, "oracle_available": a.lmax <= MAX_ORACLE_LMAX }),
    )?;
    println!("bispectrum: {agreed}/{checked} estimates within {AGREEMENT_SE} SE of the reference");
    Ok(())
}

fn write_json_and_grid(dir: &Path, prefix: &str, coeffs: &HarmonicCoefficients) -> CliResult<GridField> {
    write_atomic(&sibling(dir, prefix, "coeffs.json"), coefficients_json(coeffs).render(1).as_bytes())?;
    let g = synthesize(coeffs, &gauss_legendre_grid(coeffs.lmax()))?;
    let mut buf = Vec::new();
    write_grid(&g, &mut buf)?;
    write_atomic(&sibling(dir, prefix, "sgf"), &buf)?;
    Ok(g)
}

pub fn reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    if a.refine_steps > 64 {
        return Err(config_err("--refine-steps above 64 has no effect on double precision"));
    }
    if a.m_coarse == Some(0) {
        return Err(config_err("--m-coarse must be at least 1"));
    }
    let config = SearchConfig { m_coarse: a.m_coarse, refine_steps: a.refine_steps, ..SearchConfig::default() };
    let input = FieldInput::read(&a.input)?;
    let t = input.coefficients();
    if !(t.norm_sqr() > 0.0) {
        return Err(CliError::Degenerate("input field has zero energy".into()));
    }
    ensure_dir(&a.out)?;
    let derived = match a.mode {
        ModeArg::Mono => {
            let ell = a.ell.ok_or_else(|| config_err("mono mode needs --ell"))?;
            if ell > t.lmax() {
                return Err(config_err(format!("--ell {ell} above the input band limit {}", t.lmax())));
            }
            let a_ell = t.degree(ell);
            if !(a_ell.iter().map(|z| z.norm_sqr()).sum::<f64>() > 0.0) {
                return Err(CliError::Degenerate(format!("multipole {ell} has zero energy")));
            }
            let k = a.k.unwrap_or(2 * ell + 1);
            if k > 2 * ell + 1 {
                let msg = format!("K = {k} exceeds 2ell+1 = {}", 2 * ell + 1);
                if a.strict {
                    return Err(config_err(msg));
                }
                eprintln!("warning: {msg}");
            }
            let r = greedy_mono(a_ell, k, &config)?;
            let report = empirical_spectrum_of_mono_output(&r.trace);
            write_atomic(&sibling(&a.out, &a.prefix, "trace.json"), mono_trace_json(&r.trace).render(2).as_bytes())?;
            write_atomic(&sibling(&a.out, &a.prefix, "json"), sparse_field_json(&r.field).render(2).as_bytes())?;
            write_json_and_grid(&a.out, &a.prefix, &r.field.harmonic_coeffs())?;
            let max_defect = r.trace.steps.iter().map(|s| s.defect).fold(0.0, f64::max);
            println!(
                "mono ell={ell}: {} steps, stop {:?}, final relative residual {:.3e}, max defect {:.3e}",
                r.trace.steps.len(),
                r.trace.stop,
                r.trace.final_relative_residual(),
                max_defect
            );
            json!({
                "input_kind": input.kind(),
                "ell": ell,
                "K": k,
                "lattice_size": r.trace.lattice_size,
                "steps": r.trace.steps.len(),
                "final_relative_residual": r.trace.final_relative_residual(),
                "max_defect": max_defect,
                "spectrum_from_weights": report.from_weights,
                "spectrum_from_coefficients": report.from_coefficients,
                "defect_bound": report.defect_bound,
                "spectrum_flagged": report.flagged,
            })
        }
        ModeArg::Poly => {
            let k = a.k.unwrap_or(16);
            let r = greedy_poly(&t, a.epsilon, k, &config)?;
            write_atomic(&sibling(&a.out, &a.prefix, "trace.json"), poly_trace_json(&r.trace).render(2).as_bytes())?;
            write_json_and_grid(&a.out, &a.prefix, &r.output)?;
            let mut diff = t.clone();
            diff.add_scaled(&r.output, -1.0);
            let rel = (diff.norm_sqr() / t.norm_sqr()).sqrt();
            let last_index = r.trace.steps.last().map_or(0.0, |s| s.index);
            println!(
                "poly: {} components, stop {:?}, last index {:.6}, relative residual {:.3e}",
                r.trace.steps.len(),
                r.trace.stop,
                last_index,
                rel
            );
            json!({
                "input_kind": input.kind(),
                "K_max": k,
                "lattice_size": r.trace.lattice_size,
                "components": r.trace.steps.len(),
                "last_index": last_index,
                "relative_residual": rel,
            })
        }
    };
    write_config(&sibling(&a.out, &a.prefix, "config.json"), "reconstruct", a, derived)
}

pub fn render(a: &RenderArgs) -> CliResult<()> {
    let field = match FieldInput::read(&a.input)? {
        FieldInput::Grid(g) => g,
        other => return Err(CliError::Io(format!("render needs an SGF1 grid file, got {}", other.kind()))),
    };
    let png = encode_png(&field, a.width, a.symmetric, a.palette)?;
    write_atomic(&a.out, &png)?;
    write_config(
        &config_path_for(&a.out),
        "render",
        a,
        json!({ "width": a.width, "height": a.width / 2 }),
    )?;
    println!("rendered {}x{} image to {}", a.width, a.width / 2, a.out.display());
    Ok(())
}
