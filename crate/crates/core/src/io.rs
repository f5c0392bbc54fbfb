//! JSON instance files.
//!
//! One document per instance:
//!
//! ```text
//! {
//!   "version": 1,
//!   "n": 2, "m": 1,
//!   "Q": [[0, 0, 1.0], [0, 1, 0.5], [1, 1, 2.0]],   // upper triangle, 0-based
//!   "c": [1.0, -1.0],
//!   "A": [[0, 0, 1.0], [0, 1, 1.0]],
//!   "b": [1.0],
//!   "senses": [">="],                               // "<=", "=" or ">="
//!   "l": [0.0, "-inf"],
//!   "u": ["+inf", 3.0],
//!   "integer_set": [0],                             // optional, marks an MI-LCQP
//!   "metadata": {"generator": "generic-milcqp"}       // optional
//! }
//! ```
//!
//! Infinite bounds are written as the strings `"-inf"` / `"+inf"`. Finite
//! floats use shortest round-trip formatting, so `write` then `read` is the
//! identity bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{LcqpInstance, MilcqpInstance, QpInstance, Sense, SparseMatrix};

pub const FORMAT_VERSION: u32 = 1;

/// A bound entry: a finite number or one of the infinity sentinels.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BoundValue(f64);

impl Serialize for BoundValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("+inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for BoundValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tok(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(BoundValue(v)),
            Raw::Tok(t) => match t.as_str() {
                "+inf" => Ok(BoundValue(f64::INFINITY)),
                "-inf" => Ok(BoundValue(f64::NEG_INFINITY)),
                other => Err(de::Error::custom(format!(
                    "invalid bound token {other:?}; expected a number, \"-inf\" or \"+inf\""
                ))),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDocument {
    version: u32,
    n: usize,
    m: usize,
    #[serde(rename = "Q")]
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    senses: Vec<Sense>,
    l: Vec<BoundValue>,
    u: Vec<BoundValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    integer_set: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

impl InstanceDocument {
    fn from_instance(inst: &QpInstance) -> Self {
        let base = inst.base();
        let integer_set = match inst {
            QpInstance::Lcqp(_) => None,
            QpInstance::Milcqp(mi) => Some(mi.integers.iter().copied().collect()),
        };
        Self {
            version: FORMAT_VERSION,
            n: base.n(),
            m: base.m(),
            q: base.q.upper_triangle().collect(),
            c: base.c.clone(),
            a: base.a.entries().to_vec(),
            b: base.b.clone(),
            senses: base.senses.clone(),
            l: base.lower.iter().map(|&v| BoundValue(v)).collect(),
            u: base.upper.iter().map(|&v| BoundValue(v)).collect(),
            integer_set,
            metadata: base.metadata.clone(),
        }
    }

    fn into_instance(self) -> std::result::Result<QpInstance, String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("version {}", self.version));
        }
        let field = |name: &str, e: Error| format!("field `{name}`: {e}");
        let check_len = |name: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(format!("field `{name}`: length {len}, expected {want}"))
            }
        };
        check_len("c", self.c.len(), self.n)?;
        check_len("b", self.b.len(), self.m)?;
        check_len("senses", self.senses.len(), self.m)?;
        check_len("l", self.l.len(), self.n)?;
        check_len("u", self.u.len(), self.n)?;
        let q = SparseMatrix::from_upper_triplets(self.n, self.q).map_err(|e| field("Q", e))?;
        let a = SparseMatrix::from_triplets(self.m, self.n, self.a).map_err(|e| field("A", e))?;
        let mut base = LcqpInstance::new(
            q,
            self.c,
            a,
            self.b,
            self.senses,
            self.l.into_iter().map(|v| v.0).collect(),
            self.u.into_iter().map(|v| v.0).collect(),
        )
        .map_err(|e| e.to_string())?;
        base.metadata = self.metadata;
        match self.integer_set {
            None => Ok(QpInstance::Lcqp(base)),
            Some(list) => {
                let set: BTreeSet<usize> = list.iter().copied().collect();
                if set.len() != list.len() {
                    return Err("field `integer_set`: duplicate indices".to_string());
                }
                MilcqpInstance::new(base, set)
                    .map(QpInstance::Milcqp)
                    .map_err(|e| field("integer_set", e))
            }
        }
    }
}

pub fn instance_to_string(inst: &QpInstance) -> Result<String> {
    inst.validate().into_result()?;
    let doc = InstanceDocument::from_instance(inst);
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))
}

pub fn instance_from_str(text: &str, origin: &Path) -> Result<QpInstance> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        column,
        message,
    };
    // Check the version before the full schema so that newer files get a
    // version error rather than an unknown-field error.
    #[derive(Deserialize)]
    struct VersionProbe {
        version: u32,
    }
    match serde_json::from_str::<VersionProbe>(text) {
        Ok(probe) if probe.version != FORMAT_VERSION => {
            return Err(Error::SchemaVersion {
                found: probe.version,
                expected: FORMAT_VERSION,
            })
        }
        _ => {}
    }
    let doc: InstanceDocument = serde_json::from_str(text)
        .map_err(|e| parse_err(e.line(), e.column(), e.to_string()))?;
    doc.into_instance().map_err(|msg| parse_err(0, 0, msg))
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<QpInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    instance_from_str(&text, path)
}

pub fn write_instance(inst: &QpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = instance_to_string(inst)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
