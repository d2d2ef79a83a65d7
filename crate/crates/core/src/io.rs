//! File formats: sparse-field and coefficient JSON documents, the `SGF1`
//! binary grid format, and reconstruction traces.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit for bit. Object keys keep a fixed order.

use std::fmt::Write as _;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{SphereGrid, UnitVector};
use crate::harmonic::{GridField, HarmonicCoefficients};
use crate::model::{Directions, Provenance, SparseField};
use crate::reconstruct::{MonoStop, MonoTrace, PolyStop, PolyTrace};
use crate::spectra::SpectrumModel;

pub const FORMAT_VERSION: u64 = 1;
pub const GRID_MAGIC: &[u8; 4] = b"SGF1";

/// Minimal ordered JSON tree for writing.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    UInt(u64),
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(String, Json)>),
}

impl Json {
    pub fn object<I: IntoIterator<Item = (&'static str, Json)>>(entries: I) -> Json {
        Json::Object(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn floats(values: &[f64]) -> Json {
        Json::Array(values.iter().map(|&v| Json::Float(v)).collect())
    }

    /// Compact at depth ≥ `inline_depth`, one entry per line above it.
    pub fn render(&self, inline_depth: usize) -> String {
        let mut out = String::new();
        self.write_into(&mut out, 0, inline_depth);
        out.push('\n');
        out
    }

    fn write_into(&self, out: &mut String, depth: usize, inline_depth: usize) {
        let pretty = depth < inline_depth;
        let pad = |out: &mut String, d: usize| {
            if pretty {
                out.push('\n');
                out.push_str(&"  ".repeat(d));
            }
        };
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => write!(out, "{i}").unwrap(),
            Json::UInt(i) => write!(out, "{i}").unwrap(),
            Json::Float(f) => write_float(out, *f),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).unwrap()),
            Json::Array(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    pad(out, depth + 1);
                    v.write_into(out, depth + 1, inline_depth);
                }
                if !items.is_empty() {
                    pad(out, depth);
                }
                out.push(']');
            }
            Json::Object(items) => {
                out.push('{');
                for (i, (k, v)) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    pad(out, depth + 1);
                    out.push_str(&serde_json::to_string(k).unwrap());
                    out.push_str(if pretty { ": " } else { ":" });
                    v.write_into(out, depth + 1, inline_depth);
                }
                if !items.is_empty() {
                    pad(out, depth);
                }
                out.push('}');
            }
        }
    }
}

fn write_float(out: &mut String, f: f64) {
    if f.is_finite() {
        write!(out, "{f:.16e}").unwrap();
    } else {
        out.push_str("null");
    }
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| fmt_err(format!("missing key {key:?}")))
}

fn as_u64(v: &Value, what: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| fmt_err(format!("{what} is not a nonnegative integer")))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| fmt_err(format!("{what} is not a number")))
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| fmt_err(format!("{what} is not an array")))
}

fn check_version(doc: &Value) -> Result<()> {
    let v = as_u64(field(doc, "format_version")?, "format_version")?;
    if v != FORMAT_VERSION {
        return Err(fmt_err(format!("unsupported format_version {v}")));
    }
    Ok(())
}

fn vector_json(v: &UnitVector) -> Json {
    Json::floats(&v.to_array())
}

fn read_vector(v: &Value) -> Result<UnitVector> {
    let a = as_array(v, "direction")?;
    if a.len() != 3 {
        return Err(fmt_err("direction must have three components"));
    }
    let c = [as_f64(&a[0], "x")?, as_f64(&a[1], "y")?, as_f64(&a[2], "z")?];
    UnitVector::from_unit_array(c).map_err(|e| fmt_err(e.to_string()))
}

fn spectrum_model_json(m: &Option<SpectrumModel>) -> Json {
    match m {
        None => Json::Null,
        Some(SpectrumModel::WhittleMatern { beta }) => Json::object([
            ("model", Json::Str("whittle-matern".into())),
            ("beta", Json::Float(*beta)),
        ]),
        Some(SpectrumModel::WhittleMaternExact { beta }) => Json::object([
            ("model", Json::Str("whittle-matern-exact".into())),
            ("beta", Json::Float(*beta)),
        ]),
    }
}

/// The `SparseField` document.
pub fn sparse_field_json(f: &SparseField) -> Json {
    let lmax = f.lmax();
    let mut entries = vec![
        ("format_version", Json::Int(FORMAT_VERSION as i64)),
        ("lmax", Json::Int(lmax as i64)),
        ("shared_directions", Json::Bool(f.is_shared())),
    ];
    match f.direction_layout() {
        Directions::Shared(d) => {
            entries.push(("K", Json::Int(d.len() as i64)));
            entries.push(("directions", Json::Array(d.iter().map(vector_json).collect())));
        }
        Directions::PerEll(d) => {
            entries.push(("K_per_ell", Json::Array(d.iter().map(|l| Json::Int(l.len() as i64)).collect())));
            entries.push((
                "directions",
                Json::Array(d.iter().map(|l| Json::Array(l.iter().map(vector_json).collect())).collect()),
            ));
        }
    }
    entries.push(("weights", Json::Array(f.all_weights().iter().map(|w| Json::floats(w)).collect())));
    let p = f.provenance();
    entries.push(("generator", Json::Str(p.generator.clone())));
    entries.push(("spectrum_model", spectrum_model_json(&p.spectrum_model)));
    entries.push((
        "parameters",
        Json::Object(p.parameters.iter().map(|(k, v)| (k.clone(), Json::Float(*v))).collect()),
    ));
    entries.push(("seed", p.seed.map_or(Json::Null, Json::UInt)));
    Json::object(entries)
}

pub fn write_sparse_field<W: Write>(f: &SparseField, mut w: W) -> Result<()> {
    w.write_all(sparse_field_json(f).render(2).as_bytes())?;
    Ok(())
}

pub fn read_sparse_field<R: Read>(r: R) -> Result<SparseField> {
    let doc: Value = serde_json::from_reader(r).map_err(|e| fmt_err(e.to_string()))?;
    check_version(&doc)?;
    let lmax = as_u64(field(&doc, "lmax")?, "lmax")? as usize;
    let shared = field(&doc, "shared_directions")?
        .as_bool()
        .ok_or_else(|| fmt_err("shared_directions is not a boolean"))?;
    let weights: Vec<Vec<f64>> = as_array(field(&doc, "weights")?, "weights")?
        .iter()
        .map(|row| as_array(row, "weights row")?.iter().map(|v| as_f64(v, "weight")).collect())
        .collect::<Result<_>>()?;
    if weights.len() != lmax + 1 {
        return Err(fmt_err(format!("{} weight rows for lmax {lmax}", weights.len())));
    }
    let dirs = as_array(field(&doc, "directions")?, "directions")?;
    let prov = read_provenance(&doc)?;
    let built = if shared {
        let k = as_u64(field(&doc, "K")?, "K")? as usize;
        let d: Vec<UnitVector> = dirs.iter().map(read_vector).collect::<Result<_>>()?;
        if d.len() != k {
            return Err(fmt_err(format!("K = {k} but {} directions", d.len())));
        }
        SparseField::shared(d, weights, prov)
    } else {
        let ks: Vec<u64> = as_array(field(&doc, "K_per_ell")?, "K_per_ell")?
            .iter()
            .map(|v| as_u64(v, "K_per_ell entry"))
            .collect::<Result<_>>()?;
        let d: Vec<Vec<UnitVector>> = dirs
            .iter()
            .map(|l| as_array(l, "direction list")?.iter().map(read_vector).collect())
            .collect::<Result<_>>()?;
        if ks.len() != d.len() || ks.iter().zip(&d).any(|(k, l)| *k as usize != l.len()) {
            return Err(fmt_err("K_per_ell does not match the direction lists"));
        }
        SparseField::per_ell(d, weights, prov)
    };
    built.map_err(|e| fmt_err(e.to_string()))
}

fn read_provenance(doc: &Value) -> Result<Provenance> {
    let generator = field(doc, "generator")?
        .as_str()
        .ok_or_else(|| fmt_err("generator is not a string"))?
        .to_string();
    let spectrum_model = match field(doc, "spectrum_model")? {
        Value::Null => None,
        m => {
            let beta = as_f64(field(m, "beta")?, "beta")?;
            match field(m, "model")?.as_str() {
                Some("whittle-matern") => Some(SpectrumModel::WhittleMatern { beta }),
                Some("whittle-matern-exact") => Some(SpectrumModel::WhittleMaternExact { beta }),
                other => return Err(fmt_err(format!("unknown spectrum model {other:?}"))),
            }
        }
    };
    let parameters = field(doc, "parameters")?
        .as_object()
        .ok_or_else(|| fmt_err("parameters is not an object"))?
        .iter()
        .map(|(k, v)| Ok((k.clone(), as_f64(v, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let seed = match field(doc, "seed")? {
        Value::Null => None,
        v => Some(as_u64(v, "seed")?),
    };
    Ok(Provenance { generator, spectrum_model, parameters, seed })
}

/// `{format_version, lmax, coefficients: [[ℓ, m, re, im], …]}`.
pub fn coefficients_json(c: &HarmonicCoefficients) -> Json {
    let mut rows = Vec::with_capacity(c.as_slice().len());
    for l in 0..=c.lmax() {
        for m in -(l as i64)..=l as i64 {
            let z = c.get(l, m);
            rows.push(Json::Array(vec![Json::Int(l as i64), Json::Int(m), Json::Float(z.re), Json::Float(z.im)]));
        }
    }
    Json::object([
        ("format_version", Json::Int(FORMAT_VERSION as i64)),
        ("lmax", Json::Int(c.lmax() as i64)),
        ("coefficients", Json::Array(rows)),
    ])
}

pub fn write_coefficients<W: Write>(c: &HarmonicCoefficients, mut w: W) -> Result<()> {
    w.write_all(coefficients_json(c).render(2).as_bytes())?;
    Ok(())
}

pub fn read_coefficients<R: Read>(r: R) -> Result<HarmonicCoefficients> {
    let doc: Value = serde_json::from_reader(r).map_err(|e| fmt_err(e.to_string()))?;
    check_version(&doc)?;
    let lmax = as_u64(field(&doc, "lmax")?, "lmax")? as usize;
    let mut c = HarmonicCoefficients::zeros(lmax);
    let mut seen = vec![false; (lmax + 1) * (lmax + 1)];
    for row in as_array(field(&doc, "coefficients")?, "coefficients")? {
        let q = as_array(row, "coefficient row")?;
        if q.len() != 4 {
            return Err(fmt_err("coefficient rows are [l, m, re, im]"));
        }
        let l = as_u64(&q[0], "l")? as usize;
        let m = q[1].as_i64().ok_or_else(|| fmt_err("m is not an integer"))?;
        if l > lmax || m.unsigned_abs() as usize > l {
            return Err(fmt_err(format!("(l, m) = ({l}, {m}) out of range")));
        }
        let z = Complex64::new(as_f64(&q[2], "re")?, as_f64(&q[3], "im")?);
        let i = HarmonicCoefficients::index(l, m);
        if seen[i] {
            return Err(fmt_err(format!("duplicate coefficient ({l}, {m})")));
        }
        seen[i] = true;
        c.set(l, m, z);
    }
    if seen.iter().any(|s| !s) {
        return Err(fmt_err("coefficient table is incomplete"));
    }
    Ok(c)
}

/// `SGF1`, `u32` LE header length, JSON header, `f64` LE values.
pub fn write_grid<W: Write>(f: &GridField, mut w: W) -> Result<()> {
    let g = f.grid();
    let header = Json::object([
        ("format_version", Json::Int(FORMAT_VERSION as i64)),
        ("lmax", Json::Int(g.l_grid() as i64)),
        ("ntheta", Json::Int(g.n_theta() as i64)),
        ("nphi", Json::Int(g.n_phi() as i64)),
    ])
    .render(0);
    let header = header.trim_end().as_bytes();
    w.write_all(GRID_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header)?;
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_grid<R: Read>(mut r: R) -> Result<GridField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != GRID_MAGIC {
        return Err(fmt_err("not an SGF1 grid file"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| fmt_err("truncated grid header"))?;
    let header: Value = serde_json::from_slice(body).map_err(|e| fmt_err(e.to_string()))?;
    check_version(&header)?;
    let lmax = as_u64(field(&header, "lmax")?, "lmax")? as usize;
    let ntheta = as_u64(field(&header, "ntheta")?, "ntheta")? as usize;
    let nphi = as_u64(field(&header, "nphi")?, "nphi")? as usize;
    if ntheta != lmax + 1 {
        return Err(fmt_err(format!("ntheta = {ntheta} does not match lmax = {lmax}")));
    }
    let grid = SphereGrid::new(lmax, nphi).map_err(|e| fmt_err(e.to_string()))?;
    let data = &bytes[8 + hlen..];
    if data.len() != 8 * ntheta * nphi {
        return Err(fmt_err(format!(
            "grid payload has {} bytes, expected {}",
            data.len(),
            8 * ntheta * nphi
        )));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    GridField::new(grid, values).map_err(|e| fmt_err(e.to_string()))
}

pub fn mono_trace_json(t: &MonoTrace) -> Json {
    let steps = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Json::object([
                ("k", Json::Int(i as i64 + 1)),
                ("direction", vector_json(&s.direction)),
                ("coefficient", Json::Float(s.coefficient)),
                ("weight", Json::Float(s.weight)),
                ("residual_norm", Json::Float(s.residual_norm)),
                ("defect", Json::Float(s.defect)),
                ("lattice_index", Json::Int(s.lattice_index as i64)),
            ])
        })
        .collect();
    Json::object([
        ("format_version", Json::Int(FORMAT_VERSION as i64)),
        ("mode", Json::Str("mono".into())),
        ("ell", Json::Int(t.ell as i64)),
        ("requested_K", Json::Int(t.requested_k as i64)),
        ("lattice_size", Json::Int(t.lattice_size as i64)),
        ("initial_norm", Json::Float(t.initial_norm)),
        ("final_relative_residual", Json::Float(t.final_relative_residual())),
        (
            "stop",
            Json::Str(
                match t.stop {
                    MonoStop::MaxK => "max-K",
                    MonoStop::Converged => "converged",
                }
                .into(),
            ),
        ),
        ("steps", Json::Array(steps)),
    ])
}

pub fn poly_trace_json(t: &PolyTrace) -> Json {
    let steps = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let comp: Vec<Json> = s
                .component
                .as_slice()
                .iter()
                .map(|z| Json::Array(vec![Json::Float(z.re), Json::Float(z.im)]))
                .collect();
            Json::object([
                ("k", Json::Int(i as i64 + 1)),
                ("commit_factor", Json::Float(s.commit_factor)),
                ("direction", vector_json(&s.direction)),
                ("index", Json::Float(s.index)),
                ("residual_spectrum", Json::floats(&s.residual_spectrum)),
                ("search_start_radius", Json::Float(s.search_start_radius)),
                ("search_final_radius", Json::Float(s.search_final_radius)),
                ("component", Json::Array(comp)),
            ])
        })
        .collect();
    Json::object([
        ("format_version", Json::Int(FORMAT_VERSION as i64)),
        ("mode", Json::Str("poly".into())),
        ("epsilon", Json::Float(t.epsilon)),
        ("max_K", Json::Int(t.max_k as i64)),
        ("lattice_size", Json::Int(t.lattice_size as i64)),
        (
            "stop",
            Json::Str(
                match t.stop {
                    PolyStop::IndexThreshold => "index-threshold",
                    PolyStop::MaxK => "max-K",
                    PolyStop::ZeroResidual => "zero-residual",
                }
                .into(),
            ),
        ),
        ("final_commit_factor", Json::Float(t.final_commit_factor)),
        ("steps", Json::Array(steps)),
    ])
}
