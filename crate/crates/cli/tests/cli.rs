use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparse_sphere::geom::{gauss_legendre_grid, UnitVector};
use sparse_sphere::harmonic::{synthesize, GridField};
use sparse_sphere::io::{read_sparse_field, write_coefficients, write_grid, write_sparse_field};
use sparse_sphere::model::{Provenance, SparseField};
use sparse_sphere::rng::stream;
use sparse_sphere::spectra::whittle_matern;
use sparse_sphere::HarmonicCoefficients;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-sphere"));
    c.env_remove("SPARSESPHERE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(x: &str) -> f64 {
    x.parse().unwrap()
}

fn config(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn save_field(dir: &Path, name: &str, f: &SparseField) -> PathBuf {
    let p = dir.join(name);
    write_sparse_field(f, fs::File::create(&p).unwrap()).unwrap();
    p
}

fn save_grid(dir: &Path, name: &str, g: &GridField) -> PathBuf {
    let p = dir.join(name);
    write_grid(g, fs::File::create(&p).unwrap()).unwrap();
    p
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.to_path_buf()
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let t = TempDir::new().unwrap();
    let (a, c) = (t.path().join("a"), t.path().join("c"));
    let common = ["--beta", "1.5", "--lmax", "128", "-k", "24", "--weights", "gaussian", "--seed", "42"];
    let names = ["field.json", "field.sgf", "field.config.json"];
    simulate(&a, &common);
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(a.join(n)).unwrap()).collect();
    simulate(&a, &common);
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(bytes, &fs::read(a.join(n)).unwrap(), "{n}");
    }
    let o = bin()
        .args(["simulate", "--out", s(&c)])
        .args(common)
        .env("SPARSESPHERE_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    for (n, bytes) in names[..2].iter().zip(&first) {
        assert_eq!(bytes, &fs::read(c.join(n)).unwrap(), "{n} across thread counts");
    }
}

#[test]
fn simulate_records_parameter_counts() {
    let t = TempDir::new().unwrap();
    let d = simulate(t.path(), &["--beta", "1.01", "--lmax", "128", "-k", "4", "--no-grid"]);
    let c = config(&d.join("field.config.json"));
    assert_eq!(c["derived"]["counts"]["parameters"], 520);
    assert_eq!(c["derived"]["counts"]["weights"], 516);
    assert_eq!(c["derived"]["counts"]["dense_coefficients"], 16641);
    assert_eq!(c["arguments"]["seed"], 0);
    let f = read_sparse_field(fs::File::open(d.join("field.json")).unwrap()).unwrap();
    assert_eq!(f.k(0), 4);
    assert_eq!(f.provenance().seed, Some(0));
}

#[test]
fn simulate_and_analyze_compose_through_files() {
    let t = TempDir::new().unwrap();
    let d = simulate(t.path(), &["--lmax", "24", "-k", "5", "--seed", "7"]);
    let from_sparse = t.path().join("sparse.csv");
    let from_grid = t.path().join("grid.csv");
    ok(&["analyze", s(&d.join("field.json")), "--out", s(&from_sparse)]);
    ok(&["analyze", s(&d.join("field.sgf")), "--out", s(&from_grid)]);
    let a = csv(&from_sparse);
    let g = csv(&from_grid);
    assert_eq!(a.len(), 25);
    for (row, grow) in a.iter().zip(&g) {
        let exact = num(&row[2]);
        assert!((num(&row[1]) - exact).abs() <= 1e-8 * exact.max(1e-300) + 1e-15);
        assert!((num(&grow[1]) - exact).abs() <= 1e-8 * exact.max(1e-300) + 1e-15);
    }
}

#[test]
fn analyze_single_wave_matches_squared_weight() {
    let t = TempDir::new().unwrap();
    let xi = UnitVector::new(0.3, -0.2, 0.9).unwrap();
    let w: Vec<Vec<f64>> = (0..=10).map(|l| vec![0.7 - 0.13 * l as f64]).collect();
    let f = SparseField::shared(vec![xi], w.clone(), Provenance::default()).unwrap();
    let p = save_field(t.path(), "one.json", &f);
    let out = t.path().join("one.csv");
    ok(&["analyze", s(&p), "--out", s(&out)]);
    for (l, row) in csv(&out).iter().enumerate() {
        let target = w[l][0] * w[l][0] / (4.0 * PI);
        assert!((num(&row[1]) - target).abs() < 1e-10, "quadrature ell={l}");
        assert!((num(&row[2]) - target).abs() < 1e-10, "exact ell={l}");
    }
}

#[test]
fn analyze_zero_field_gives_zero_table() {
    let t = TempDir::new().unwrap();
    let c = HarmonicCoefficients::zeros(6);
    let p = t.path().join("zero.coeffs.json");
    write_coefficients(&c, fs::File::create(&p).unwrap()).unwrap();
    let out = t.path().join("zero.csv");
    ok(&["analyze", s(&p), "--out", s(&out)]);
    let rows = csv(&out);
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| num(&r[1]) == 0.0));
}

#[test]
fn analyze_monte_carlo_matches_spectrum() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("mc.csv");
    ok(&["analyze", "--mc", "2000", "-k", "4", "--beta", "1.5", "--lmax", "32", "--seed", "3", "--out", s(&out)]);
    let rows = csv(&out);
    assert_eq!(rows.len(), 33);
    for r in &rows {
        assert_eq!(r[5], "true", "ell {}: z = {}", r[0], r[4]);
    }
}

#[test]
fn corrupt_and_missing_inputs_exit_3() {
    let t = TempDir::new().unwrap();
    let d = simulate(t.path(), &["--lmax", "8", "-k", "2"]);
    let bytes = fs::read(d.join("field.sgf")).unwrap();
    let cut = t.path().join("cut.sgf");
    fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let mut bad = bytes.clone();
    bad[1] = b'X';
    let magic = t.path().join("magic.sgf");
    fs::write(&magic, &bad).unwrap();
    let out = t.path().join("x.csv");
    assert_eq!(code(&["analyze", s(&cut), "--out", s(&out)]), 3);
    assert_eq!(code(&["analyze", s(&magic), "--out", s(&out)]), 3);
    assert_eq!(code(&["analyze", s(&t.path().join("none.json")), "--out", s(&out)]), 3);
    assert_eq!(code(&["render", s(&cut), "--out", s(&t.path().join("x.png"))]), 3);
}

#[test]
fn config_errors_exit_2() {
    let t = TempDir::new().unwrap();
    let o = s(t.path());
    assert_eq!(code(&["simulate", "--out", o, "--beta", "0.4"]), 2);
    assert_eq!(code(&["simulate", "--out", o, "-k", "0"]), 2);
    assert_eq!(code(&["simulate", "--out", o, "--fnl", "0.1"]), 2);
    assert_eq!(code(&["simulate", "--out", o, "--weights", "fnl", "-k", "3"]), 2);
    assert_eq!(code(&["simulate", "--out", o, "--lmax", "-3"]), 2);
    assert_eq!(code(&["analyze", "--out", o]), 2);
    assert_eq!(code(&["bispectrum", "--out", o, "--triple", "1,2,9"]), 2);
    assert_eq!(code(&["bogus"]), 2);
    let o = bin().args(["simulate", "--out", o]).env("SPARSESPHERE_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bispectrum_without_fnl_is_null() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("b.csv");
    ok(&["bispectrum", "--lmax", "4", "--fnl", "0", "--mc", "20000", "--seed", "5", "--out", s(&out)]);
    let rows = csv(&out);
    assert!(!rows.is_empty());
    for r in &rows {
        let (e, se) = (num(&r[3]), num(&r[4]));
        assert!(e.abs() <= 5.0 * se, "{r:?}");
        assert_eq!(num(&r[7]), 0.0);
    }
}

#[test]
fn bispectrum_matches_oracle() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("b.csv");
    ok(&["bispectrum", "--lmax", "4", "--fnl", "0.05", "--mc", "100000", "--triple", "2,2,2", "--out", s(&out)]);
    let r = &csv(&out)[0];
    let (e, se, oracle) = (num(&r[3]), num(&r[4]), num(&r[7]));
    assert!((e - oracle).abs() <= 5.0 * se, "{e} ± {se} vs {oracle}");
    assert_eq!(r[8], "true");
}

#[test]
fn bispectrum_map_mode_reports_selection_rule() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("b.csv");
    ok(&["bispectrum", "--lmax", "4", "--fnl", "0.05", "--mc", "0", "--map", "50", "--triple", "1,1,3", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let row = text.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.splitn(13, ',').collect();
    assert_eq!(num(cols[9]), 0.0);
    assert_eq!(num(cols[10]), 0.0);
    assert!(cols[12].contains("triangle"), "{row}");
}

fn gaussian_coeffs(dir: &Path, lmax: usize, seed: u64) -> PathBuf {
    let c = HarmonicCoefficients::gaussian(&whittle_matern(1.5, lmax).unwrap(), &mut stream(seed, 0));
    let p = dir.join(format!("g{seed}.coeffs.json"));
    write_coefficients(&c, fs::File::create(&p).unwrap()).unwrap();
    p
}

fn trace(path: &Path) -> serde_json::Value {
    config(path)
}

#[test]
fn reconstruct_mono_full_run_residual() {
    let t = TempDir::new().unwrap();
    let input = gaussian_coeffs(t.path(), 8, 11);
    let out = t.path().join("r");
    ok(&["reconstruct", s(&input), "--mode", "mono", "--ell", "8", "-k", "17", "--out", s(&out)]);
    let tr = trace(&out.join("recon.trace.json"));
    let res = tr["final_relative_residual"].as_f64().unwrap();
    assert!(res <= 1e-6, "final relative residual {res}");
}

#[test]
fn reconstruct_mono_monopole_is_exact_in_one_step() {
    let t = TempDir::new().unwrap();
    let input = gaussian_coeffs(t.path(), 3, 12);
    let out = t.path().join("r");
    ok(&["reconstruct", s(&input), "--mode", "mono", "--ell", "0", "--out", s(&out)]);
    let tr = trace(&out.join("recon.trace.json"));
    assert_eq!(tr["steps"].as_array().unwrap().len(), 1);
    assert!(tr["final_relative_residual"].as_f64().unwrap() < 1e-14);
    let f = read_sparse_field(fs::File::open(out.join("recon.json")).unwrap()).unwrap();
    assert_eq!(f.k(0), 1);
}

#[test]
fn reconstruct_mono_k_above_dimension_warns_or_fails() {
    let t = TempDir::new().unwrap();
    let input = gaussian_coeffs(t.path(), 2, 13);
    let o = t.path().join("r");
    let base = ["reconstruct", s(&input), "--mode", "mono", "--ell", "1", "-k", "4", "--out", s(&o)];
    let r = run(&base);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("warning"));
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(code(&strict), 2);
    assert_eq!(code(&["reconstruct", s(&input), "--mode", "mono", "--out", s(&o)]), 2);
    assert_eq!(code(&["reconstruct", s(&input), "--mode", "mono", "--ell", "5", "--out", s(&o)]), 2);
}

#[test]
fn reconstruct_zero_input_exits_4() {
    let t = TempDir::new().unwrap();
    let p = t.path().join("zero.coeffs.json");
    write_coefficients(&HarmonicCoefficients::zeros(4), fs::File::create(&p).unwrap()).unwrap();
    let o = t.path().join("r");
    assert_eq!(code(&["reconstruct", s(&p), "--mode", "poly", "--out", s(&o)]), 4);
    assert_eq!(code(&["reconstruct", s(&p), "--mode", "mono", "--ell", "2", "--out", s(&o)]), 4);
}

#[test]
fn reconstruct_poly_recovers_single_positive_wave() {
    let t = TempDir::new().unwrap();
    let s16 = whittle_matern(1.5, 16).unwrap();
    let xi = UnitVector::new(-0.4, 0.5, 0.2).unwrap();
    let w = (0..=16).map(|l| vec![(4.0 * PI * s16.get(l)).sqrt()]).collect();
    let f = SparseField::shared(vec![xi], w, Provenance::default()).unwrap();
    let p = save_field(t.path(), "one.json", &f);
    let o = t.path().join("p");
    ok(&["reconstruct", s(&p), "--mode", "poly", "--epsilon", "0.05", "--out", s(&o)]);
    let tr = trace(&o.join("recon.trace.json"));
    let steps = tr["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(tr["stop"], "index-threshold");
    assert!(steps[0]["index"].as_f64().unwrap() > 0.95);
    let d = &steps[0]["direction"];
    let got = UnitVector::new(d[0].as_f64().unwrap(), d[1].as_f64().unwrap(), d[2].as_f64().unwrap()).unwrap();
    assert!(got.angle_to(&xi) < 1e-6);
}

#[test]
fn render_constant_field_is_mid_gray() {
    let t = TempDir::new().unwrap();
    let g = GridField::from_fn(gauss_legendre_grid(6), |_| 2.5).unwrap();
    let p = save_grid(t.path(), "c.sgf", &g);
    let out = t.path().join("c.png");
    ok(&["render", s(&p), "--out", s(&out), "--width", "64", "--symmetric"]);
    let (w, h, px) = decode(&out);
    assert_eq!((w, h), (64, 32));
    assert!(px.iter().all(|&v| v == 128));
}

#[test]
fn render_dipole_is_brighter_north_and_deterministic() {
    let t = TempDir::new().unwrap();
    let mut c = HarmonicCoefficients::zeros(1);
    c.set(1, 0, num_complex::Complex64::new(1.0, 0.0));
    let g = synthesize(&c, &gauss_legendre_grid(8)).unwrap();
    let p = save_grid(t.path(), "y10.sgf", &g);
    let (a, b) = (t.path().join("a.png"), t.path().join("b.png"));
    ok(&["render", s(&p), "--out", s(&a), "--width", "128"]);
    ok(&["render", s(&p), "--out", s(&b), "--width", "128"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let (w, h, px) = decode(&a);
    let means: Vec<f64> = (0..h as usize)
        .map(|r| px[r * w as usize..(r + 1) * w as usize].iter().map(|&v| v as f64).sum::<f64>() / w as f64)
        .collect();
    assert!(means.windows(2).all(|m| m[0] >= m[1]));
    let half = h as usize / 2;
    assert!(means[..half].iter().sum::<f64>() > means[half..].iter().sum::<f64>());
    let default = t.path().join("d.png");
    ok(&["render", s(&p), "--out", s(&default)]);
    assert_eq!(decode(&default).0, 1024);
    let pal = t.path().join("pal.png");
    ok(&["render", s(&p), "--out", s(&pal), "--palette", "diverging", "--width", "32"]);
    let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(&pal).unwrap()));
    let reader = dec.read_info().unwrap();
    assert_eq!(reader.info().color_type, png::ColorType::Indexed);
    assert_eq!(reader.info().palette.as_ref().unwrap().len(), 768);
}

fn decode(path: &Path) -> (u32, u32, Vec<u8>) {
    let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(path).unwrap()));
    let mut reader = dec.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    (info.width, info.height, buf)
}
