use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifies a lazy subfield of one parsed line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LazyHandle {
    /// Header name, `requestLine` or `statusLine`.
    pub entry: String,
    pub instance: usize,
    pub subfield: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypedValue {
    Raw(Vec<u8>),
    U16(u16),
    U32(u32),
    Enum { branch: u32, text: Vec<u8> },
    Struct(BTreeMap<String, TypedValue>),
    Union { branch: u32, fields: BTreeMap<String, TypedValue> },
    Absent,
    Lazy(LazyHandle),
}

impl TypedValue {
    pub fn as_u64(&self) -> Option<u64> {
        match self {
            TypedValue::U16(v) => Some(*v as u64),
            TypedValue::U32(v) => Some(*v as u64),
            _ => None,
        }
    }

    pub fn field(&self, name: &str) -> Option<&TypedValue> {
        match self {
            TypedValue::Struct(fields) | TypedValue::Union { fields, .. } => fields.get(name),
            _ => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, TypedValue::Absent)
    }
}

impl fmt::Display for TypedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn fields(f: &mut fmt::Formatter<'_>, map: &BTreeMap<String, TypedValue>) -> fmt::Result {
            f.write_str("{")?;
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k}={v}")?;
            }
            f.write_str("}")
        }
        match self {
            TypedValue::Raw(bytes) => f.write_str(&String::from_utf8_lossy(bytes)),
            TypedValue::U16(v) => write!(f, "{v}"),
            TypedValue::U32(v) => write!(f, "{v}"),
            TypedValue::Enum { branch, text } => write!(f, "{} (#{branch})", String::from_utf8_lossy(text)),
            TypedValue::Struct(map) => fields(f, map),
            TypedValue::Union { branch, fields: map } => {
                write!(f, "#{branch} ")?;
                fields(f, map)
            }
            TypedValue::Absent => f.write_str("ABSENT"),
            TypedValue::Lazy(h) => write!(f, "<lazy {}.{}>", h.entry, h.subfield),
        }
    }
}
