//! JSON wire formats.
//!
//! * triplet: `{"dim": d, "drift": [..], "cov": [[..]], "atoms": [{"x": [..], "w": w}]}`
//! * lattice measure: `{"coeffs": {"3": "-1/2", ...}}`
//! * scenario: `{"name"?: .., "T": [[..]], "lambda1": <triplet>, "rho": <triplet>}`
//! * polynomial: `{"dim": d, "terms": [{"coef": c, "powers": [..]}]}`
//! * chaos coefficients: `{"r", "m", "intensities", "blocks": {"n/j/k": {"0,0|1": c}}}`
//!
//! Validation errors name the offending field, e.g. `lambda1.atoms[2].w`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::{BlockKey, ChaosCoefficients, Multiset, SymTensor};
use crate::lattice::LatticeSignedMeasure;
use crate::poly::Poly;
use crate::scalar::{format_rational, parse_rational};
use crate::triplet::{Atom, AtomicMeasure, LevyTriplet};
use crate::Rational;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}")]
    Read { path: String, source: std::io::Error },
    #[error("{context}: malformed JSON")]
    Json { context: String, source: serde_json::Error },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Invalid { field: field.into(), message: message.into() }
}

fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    parse_json(&text, &path.display().to_string())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, context: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|source| IoError::Json { context: context.to_string(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomWire {
    pub x: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletWire {
    pub dim: usize,
    pub drift: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    #[serde(default)]
    pub atoms: Vec<AtomWire>,
}

fn finite(field: &str, v: f64) -> Result<f64, IoError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, "must be finite"))
    }
}

pub fn matrix_from_rows(field: &str, rows: &[Vec<f64>], shape: Option<(usize, usize)>) -> Result<DMatrix<f64>, IoError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((r, c)) = shape {
        if nrows != r {
            return Err(invalid(field, format!("expected {r} rows, found {nrows}")));
        }
        if r > 0 && ncols != c {
            return Err(invalid(format!("{field}[0]"), format!("expected {c} entries, found {ncols}")));
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(invalid(format!("{field}[{i}]"), format!("expected {ncols} entries, found {}", row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            finite(&format!("{field}[{i}][{j}]"), *v)?;
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TripletWire {
    pub fn into_triplet(self, prefix: &str) -> Result<LevyTriplet<f64>, IoError> {
        let d = self.dim;
        if self.drift.len() != d {
            return Err(invalid(join(prefix, "drift"), format!("expected {d} entries, found {}", self.drift.len())));
        }
        for (i, v) in self.drift.iter().enumerate() {
            finite(&join(prefix, &format!("drift[{i}]")), *v)?;
        }
        let cov = matrix_from_rows(&join(prefix, "cov"), &self.cov, Some((d, d)))?;
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (i, a) in self.atoms.into_iter().enumerate() {
            let field = join(prefix, &format!("atoms[{i}]"));
            if a.x.len() != d {
                return Err(invalid(format!("{field}.x"), format!("expected {d} entries, found {}", a.x.len())));
            }
            for (j, v) in a.x.iter().enumerate() {
                finite(&format!("{field}.x[{j}]"), *v)?;
            }
            finite(&format!("{field}.w"), a.w)?;
            atoms.push(Atom { point: DVector::from_vec(a.x), weight: a.w });
        }
        let jumps = AtomicMeasure::new(d, atoms).map_err(|e| invalid(join(prefix, "atoms"), e.to_string()))?;
        LevyTriplet::new(DVector::from_vec(self.drift), cov, jumps).map_err(|e| invalid(join(prefix, "cov"), e.to_string()))
    }

    pub fn from_triplet(t: &LevyTriplet<f64>) -> Self {
        Self {
            dim: t.dim(),
            drift: t.drift().iter().copied().collect(),
            cov: matrix_rows(t.cov()),
            atoms: t.jumps().atoms().iter().map(|a| AtomWire { x: a.point.iter().copied().collect(), w: a.weight }).collect(),
        }
    }
}

pub fn parse_triplet(text: &str, context: &str) -> Result<LevyTriplet<f64>, IoError> {
    parse_json::<TripletWire>(text, context)?.into_triplet("")
}

pub fn read_triplet(path: &Path) -> Result<LevyTriplet<f64>, IoError> {
    read_json::<TripletWire>(path)?.into_triplet("")
}

/// A bare matrix `[[..]]` or `{"T": [[..]]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixWire {
    Rows(Vec<Vec<f64>>),
    Tagged {
        #[serde(rename = "T")]
        t: Vec<Vec<f64>>,
    },
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, IoError> {
    match read_json::<MatrixWire>(path)? {
        MatrixWire::Rows(r) => matrix_from_rows("", &r, None),
        MatrixWire::Tagged { t } => matrix_from_rows("T", &t, None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeWire {
    pub coeffs: BTreeMap<String, String>,
}

impl LatticeWire {
    pub fn into_measure(self) -> Result<LatticeSignedMeasure<Rational>, IoError> {
        let mut pairs = Vec::with_capacity(self.coeffs.len());
        for (site, value) in &self.coeffs {
            let field = format!("coeffs[\"{site}\"]");
            let n: u64 = site.trim().parse().map_err(|_| invalid(&field, "site must be a non-negative integer"))?;
            let q = parse_rational(value).ok_or_else(|| invalid(&field, format!("{value:?} is not a rational p/q")))?;
            pairs.push((n, q));
        }
        Ok(LatticeSignedMeasure::from_pairs(pairs))
    }

    pub fn from_measure(m: &LatticeSignedMeasure<Rational>) -> Self {
        Self { coeffs: m.iter().map(|(n, q)| (n.to_string(), format_rational(q))).collect() }
    }
}

pub fn read_lattice(path: &Path) -> Result<LatticeSignedMeasure<Rational>, IoError> {
    read_json::<LatticeWire>(path)?.into_measure()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWire {
    pub coef: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyWire {
    pub dim: usize,
    pub terms: Vec<TermWire>,
}

impl PolyWire {
    pub fn into_poly(self) -> Result<Poly<f64>, IoError> {
        let mut p = Poly::zero(self.dim);
        for (i, t) in self.terms.into_iter().enumerate() {
            if t.powers.len() != self.dim {
                return Err(invalid(format!("terms[{i}].powers"), format!("expected {} entries, found {}", self.dim, t.powers.len())));
            }
            finite(&format!("terms[{i}].coef"), t.coef)?;
            p.add_term(t.powers, t.coef);
        }
        Ok(p)
    }

    pub fn from_poly(p: &Poly<f64>) -> Self {
        Self { dim: p.nvars(), terms: p.terms().map(|(e, c)| TermWire { coef: *c, powers: e.clone() }).collect() }
    }
}

pub fn read_poly(path: &Path) -> Result<Poly<f64>, IoError> {
    read_json::<PolyWire>(path)?.into_poly()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioWire {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub lambda1: TripletWire,
    pub rho: TripletWire,
}

/// Parsed scenario file: `T`, `λ₁`, `ρ`.
pub struct ScenarioInput {
    pub name: String,
    pub t: DMatrix<f64>,
    pub t1: LevyTriplet<f64>,
    pub rho: LevyTriplet<f64>,
}

impl ScenarioWire {
    pub fn into_input(self) -> Result<ScenarioInput, IoError> {
        let d1 = self.lambda1.dim;
        let d2 = self.rho.dim;
        let t = matrix_from_rows("T", &self.t, Some((d2, d1)))?;
        Ok(ScenarioInput {
            name: self.name.unwrap_or_else(|| "scenario".to_string()),
            t,
            t1: self.lambda1.into_triplet("lambda1")?,
            rho: self.rho.into_triplet("rho")?,
        })
    }
}

pub fn read_scenario(path: &Path) -> Result<ScenarioInput, IoError> {
    read_json::<ScenarioWire>(path)?.into_input()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosWire {
    pub r: usize,
    pub m: usize,
    pub intensities: Vec<f64>,
    pub blocks: BTreeMap<String, BTreeMap<String, f64>>,
}

fn parse_multiset(field: &str, s: &str, size: usize) -> Result<Multiset, IoError> {
    if s.is_empty() {
        return Ok(Multiset::default());
    }
    let mut v = Vec::new();
    for part in s.split(',') {
        let i: usize = part.trim().parse().map_err(|_| invalid(field, format!("bad index {part:?}")))?;
        if i >= size {
            return Err(invalid(field, format!("index {i} out of range 0..{size}")));
        }
        v.push(i);
    }
    Ok(Multiset::from_unsorted(v))
}

impl ChaosWire {
    pub fn from_coeffs(c: &ChaosCoefficients<f64>) -> Self {
        let mut blocks = BTreeMap::new();
        for (n, level) in c.levels.iter().enumerate() {
            for b in level {
                let entries = b.coeffs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
                blocks.insert(format!("{n}/{}/{}", b.j, b.k), entries);
            }
        }
        Self { r: c.r, m: c.m, intensities: c.intensities.clone(), blocks }
    }

    pub fn into_coeffs(self) -> Result<ChaosCoefficients<f64>, IoError> {
        if self.intensities.len() != self.m {
            return Err(invalid("intensities", format!("expected {} entries, found {}", self.m, self.intensities.len())));
        }
        let mut levels: Vec<Vec<SymTensor<f64>>> = Vec::new();
        for (label, entries) in self.blocks {
            let field = format!("blocks[\"{label}\"]");
            let parts: Vec<usize> = label
                .split('/')
                .map(|p| p.parse().map_err(|_| invalid(&field, "key must be n/j/k")))
                .collect::<Result<_, _>>()?;
            let [n, j, k] = parts[..] else {
                return Err(invalid(&field, "key must be n/j/k"));
            };
            if j + k != n {
                return Err(invalid(&field, "j + k must equal n"));
            }
            while levels.len() <= n {
                let l = levels.len();
                levels.push((0..=l).map(|jj| SymTensor::zero(jj, l - jj)).collect());
            }
            for (key, v) in entries {
                let kf = format!("{field}[\"{key}\"]");
                let (g, a) = key.split_once('|').ok_or_else(|| invalid(&kf, "key must be gauss|atoms"))?;
                let bk = BlockKey { gauss: parse_multiset(&kf, g, self.r)?, atoms: parse_multiset(&kf, a, self.m)? };
                if bk.gauss.len() != j || bk.atoms.len() != k {
                    return Err(invalid(&kf, format!("multiset sizes must be {j} and {k}")));
                }
                levels[n][j].insert(bk, v);
            }
        }
        Ok(ChaosCoefficients { r: self.r, m: self.m, intensities: self.intensities, levels })
    }
}
