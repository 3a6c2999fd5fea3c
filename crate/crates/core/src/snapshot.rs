//! Binary problem snapshots.
//!
//! Layout: the 8-byte magic `DPROJSNP`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a UTF-8 JSON header, then
//! the payload of every section in header order as row-major little-endian
//! `f64`. The header lists each section's name and shape and carries free
//! metadata. Round trips are bit-exact.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::problems::{FederatedInstance, Instance, LcpProblem, ObjectiveData};
use crate::projection::{ConstraintSubspace, SubspaceKind};

pub const MAGIC: &[u8; 8] = b"DPROJSNP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub info: SectionInfo,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    sections: Vec<SectionInfo>,
    body: Value,
}

/// A JSON header plus named `f64` matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub body: Value,
    pub sections: Vec<Section>,
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        if rows * cols != data.len() {
            return Err(Error::Snapshot(format!("section {name}: {rows}x{cols} shape for {} values", data.len())));
        }
        if self.sections.iter().any(|s| s.info.name == name) {
            return Err(Error::Snapshot(format!("duplicate section {name}")));
        }
        self.sections.push(Section { info: SectionInfo { name, rows, cols }, data });
        Ok(())
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.info.name == name)
            .ok_or_else(|| Error::Snapshot(format!("missing section {name}")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header =
            Header { sections: self.sections.iter().map(|s| s.info.clone()).collect(), body: self.body.clone() };
        let bytes = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(bytes.len() as u64).to_le_bytes())?;
        w.write_all(&bytes)?;
        for s in &self.sections {
            let mut buf = Vec::with_capacity(8 * s.data.len());
            for v in &s.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Snapshot("not a problem snapshot".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported snapshot version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut sections = Vec::with_capacity(header.sections.len());
        for info in header.sections {
            let mut raw = vec![0u8; 8 * info.rows * info.cols];
            r.read_exact(&mut raw)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            sections.push(Section { info, data });
        }
        Ok(Self { body: header.body, sections })
    }
}

fn encode_objective(data: &ObjectiveData, prefix: &str, c: &mut Container) -> Result<Value> {
    Ok(match data {
        ObjectiveData::Quadratic { dim, directions, ridge, linear, linear_per_atom, offset, mu } => {
            let rows = directions.len() / (*dim).max(1);
            c.push(format!("{prefix}directions"), rows, *dim, directions.clone())?;
            let lin_rows = if *linear_per_atom { rows } else { 1 };
            c.push(format!("{prefix}linear"), lin_rows, *dim, linear.clone())?;
            json!({ "type": "quadratic", "dim": dim, "ridge": f64_bits(*ridge), "per_atom": linear_per_atom,
                    "offset": f64_bits(*offset), "mu": f64_bits(*mu), "prefix": prefix })
        }
        ObjectiveData::Logistic { features, columns, labels, classes, weight_decay } => {
            c.push(format!("{prefix}features"), labels.len(), *columns, features.clone())?;
            c.push(format!("{prefix}labels"), labels.len(), 1, labels.iter().map(|&l| l as f64).collect())?;
            json!({ "type": "logistic", "classes": classes, "weight_decay": f64_bits(*weight_decay), "prefix": prefix })
        }
        ObjectiveData::EdgeQuadratic { weights } => {
            c.push(format!("{prefix}weights"), weights.len(), 1, weights.clone())?;
            json!({ "type": "edge_quadratic", "prefix": prefix })
        }
        ObjectiveData::Lifted { locals, keys } => {
            let locals = locals
                .iter()
                .enumerate()
                .map(|(k, l)| encode_objective(l, &format!("{prefix}w{k}."), c))
                .collect::<Result<Vec<_>>>()?;
            json!({ "type": "lifted", "keys": keys, "locals": locals })
        }
    })
}

fn decode_objective(v: &Value, c: &Container) -> Result<ObjectiveData> {
    let bad = || Error::Snapshot(format!("malformed objective entry {v}"));
    let prefix = v.get("prefix").and_then(Value::as_str).unwrap_or("");
    let sec = |name: &str| c.section(&format!("{prefix}{name}"));
    let uint = |key: &str| v.get(key).and_then(Value::as_u64).map(|x| x as usize).ok_or_else(bad);
    let float = |key: &str| v.get(key).and_then(Value::as_u64).map(f64::from_bits).ok_or_else(bad);
    Ok(match v.get("type").and_then(Value::as_str).ok_or_else(bad)? {
        "quadratic" => ObjectiveData::Quadratic {
            dim: uint("dim")?,
            directions: sec("directions")?.data.clone(),
            ridge: float("ridge")?,
            linear: sec("linear")?.data.clone(),
            linear_per_atom: v.get("per_atom").and_then(Value::as_bool).ok_or_else(bad)?,
            offset: float("offset")?,
            mu: float("mu")?,
        },
        "logistic" => {
            let f = sec("features")?;
            ObjectiveData::Logistic {
                features: f.data.clone(),
                columns: f.info.cols,
                labels: sec("labels")?.data.iter().map(|&l| l as usize).collect(),
                classes: uint("classes")?,
                weight_decay: float("weight_decay")?,
            }
        }
        "edge_quadratic" => ObjectiveData::EdgeQuadratic { weights: sec("weights")?.data.clone() },
        "lifted" => {
            let keys = v
                .get("keys")
                .and_then(Value::as_array)
                .ok_or_else(bad)?
                .iter()
                .map(|k| k.as_u64().ok_or_else(bad))
                .collect::<Result<Vec<_>>>()?;
            let locals = v
                .get("locals")
                .and_then(Value::as_array)
                .ok_or_else(bad)?
                .iter()
                .map(|l| decode_objective(l, c))
                .collect::<Result<Vec<_>>>()?;
            ObjectiveData::Lifted { locals, keys }
        }
        other => return Err(Error::Snapshot(format!("unknown objective type {other}"))),
    })
}

/// Floats in the header are stored as their bit patterns.
fn f64_bits(v: f64) -> u64 {
    v.to_bits()
}

/// Serializes a problem with its constants and free-form metadata.
pub fn save_problem<W: Write>(problem: &LcpProblem, metadata: Value, w: W) -> Result<()> {
    let data =
        problem.objective().export().ok_or_else(|| Error::Snapshot("objective does not support export".into()))?;
    let mut c = Container::default();
    let objective = encode_objective(&data, "", &mut c)?;
    let sub = problem.subspace();
    let constraint = match sub.kind() {
        SubspaceKind::Consensus { workers, dim } => json!({ "kind": "consensus", "workers": workers, "dim": dim }),
        SubspaceKind::Explicit => {
            let a = sub.a_matrix();
            c.push("constraint.a", a.nrows(), a.ncols(), a.transpose().as_slice().to_vec())?;
            c.push("constraint.b", sub.rhs().len(), 1, sub.rhs().as_slice().to_vec())?;
            json!({ "kind": "explicit", "dim": sub.dim() })
        }
    };
    c.body = json!({
        "objective": objective,
        "constraint": constraint,
        "smoothness": f64_bits(problem.smoothness()),
        "strong_convexity": f64_bits(problem.strong_convexity()),
        "metadata": metadata,
    });
    c.write_to(w)
}

/// Reads a snapshot back into a problem and its metadata.
pub fn load_problem<R: Read>(r: R) -> Result<(LcpProblem, Value)> {
    let c = Container::read_from(r)?;
    let (problem, _) = decode_problem(&c)?;
    Ok((problem, c.body.get("metadata").cloned().unwrap_or(Value::Null)))
}

/// Like [`load_problem`], but returns consensus-lifted problems as their
/// federated instance.
pub fn load_instance<R: Read>(r: R) -> Result<(Instance, Value)> {
    let c = Container::read_from(r)?;
    let metadata = c.body.get("metadata").cloned().unwrap_or(Value::Null);
    let (problem, data) = decode_problem(&c)?;
    if let (SubspaceKind::Consensus { .. }, ObjectiveData::Lifted { locals, keys }) = (problem.subspace().kind(), data)
    {
        let locals = locals.iter().map(ObjectiveData::build).collect::<Result<Vec<_>>>()?;
        return Ok((Instance::Federated(FederatedInstance::with_keys(locals, keys)?), metadata));
    }
    Ok((Instance::Single(problem), metadata))
}

fn decode_problem(c: &Container) -> Result<(LcpProblem, ObjectiveData)> {
    let body = &c.body;
    let bad = |what: &str| Error::Snapshot(format!("malformed header: {what}"));
    let data = decode_objective(body.get("objective").ok_or_else(|| bad("objective"))?, c)?;
    let objective = data.build()?;
    let constraint = body.get("constraint").ok_or_else(|| bad("constraint"))?;
    let subspace = match constraint.get("kind").and_then(Value::as_str) {
        Some("consensus") => {
            let get = |k: &str| constraint.get(k).and_then(Value::as_u64).ok_or_else(|| bad(k));
            ConstraintSubspace::consensus(get("workers")? as usize, get("dim")? as usize)?
        }
        Some("explicit") => {
            let a = c.section("constraint.a")?;
            let b = c.section("constraint.b")?;
            if a.info.cols == 0 {
                ConstraintSubspace::unconstrained(a.info.rows)
            } else {
                let a = DMatrix::from_row_slice(a.info.rows, a.info.cols, &a.data);
                ConstraintSubspace::new(&a, &DVector::from_column_slice(&b.data))?
            }
        }
        _ => return Err(bad("constraint kind")),
    };
    let float = |k: &str| body.get(k).and_then(Value::as_u64).map(f64::from_bits).ok_or_else(|| bad(k));
    let problem =
        LcpProblem::new(objective, subspace)?.with_constants(float("smoothness")?, float("strong_convexity")?);
    Ok((problem, data))
}
