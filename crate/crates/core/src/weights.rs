//! Binary weight container.
//!
//! Layout: a UTF-8 header, one line per tensor
//! `name f32 <dims joined by x> <byte offset> <byte length>`, preceded by a
//! magic line and terminated by an empty line. The body that follows is the
//! concatenation of little-endian `f32` payloads; offsets are relative to the
//! start of the body.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;

const MAGIC: &str = "cmunext-weights 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

impl WeightEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn shape_str(shape: &[usize]) -> String {
        shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightContainer {
    pub entries: Vec<WeightEntry>,
    body: Vec<u8>,
}

impl WeightContainer {
    /// Every parameter and BatchNorm running statistic of `model`.
    pub fn from_model(model: &Model) -> Self {
        let mut entries = Vec::new();
        let mut body = Vec::new();
        for (name, shape, data) in model.named_state() {
            let offset = body.len();
            for v in data {
                body.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(WeightEntry {
                name,
                shape,
                offset,
                length: body.len() - offset,
            });
        }
        WeightContainer { entries, body }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC}\n");
        for e in &self.entries {
            let _ = writeln!(
                header,
                "{} f32 {} {} {}",
                e.name,
                WeightEntry::shape_str(&e.shape),
                e.offset,
                e.length
            );
        }
        header.push('\n');
        let mut out = header.into_bytes();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| Error::Format("weight header is not terminated by an empty line".into()))?;
        let header =
            std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("weight header is not valid UTF-8".into()))?;
        let body = bytes[end + 2..].to_vec();
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Format(format!("missing `{MAGIC}` header line")));
        }
        let mut entries: Vec<WeightEntry> = Vec::new();
        let mut cursor = 0;
        for (i, line) in lines.enumerate() {
            let bad = |what: &str| Error::Format(format!("weight header entry {}: {what}: `{line}`", i + 1));
            let fields: Vec<&str> = line.split(' ').collect();
            let [name, dtype, shape, offset, length] = fields[..] else {
                return Err(bad("expected 5 fields"));
            };
            if dtype != "f32" {
                return Err(bad("only f32 is supported"));
            }
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| bad("bad shape")))
                .collect::<Result<_>>()?;
            let offset: usize = offset.parse().map_err(|_| bad("bad offset"))?;
            let length: usize = length.parse().map_err(|_| bad("bad length"))?;
            if offset < cursor {
                return Err(bad("offsets must ascend without overlap"));
            }
            if length != 4 * shape.iter().product::<usize>() {
                return Err(bad("length disagrees with shape"));
            }
            if offset + length > body.len() {
                return Err(bad("payload runs past the end of the file"));
            }
            if entries.iter().any(|e| e.name == name) {
                return Err(bad("duplicate name"));
            }
            cursor = offset + length;
            entries.push(WeightEntry {
                name: name.to_string(),
                shape,
                offset,
                length,
            });
        }
        Ok(WeightContainer { entries, body })
    }

    pub fn values(&self, entry: &WeightEntry) -> Vec<f32> {
        self.body[entry.offset..entry.offset + entry.length]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()
    }

    /// Describes the first difference in names or shapes between the
    /// container and `model`, if any.
    pub fn first_mismatch(&self, model: &Model) -> Option<String> {
        let expected = model.named_state();
        for i in 0..expected.len().max(self.entries.len()) {
            match (expected.get(i), self.entries.get(i)) {
                (Some((name, shape, _)), Some(e)) if *name != e.name || *shape != e.shape => {
                    return Some(format!(
                        "entry {i}: model expects `{name}` with shape {}, container has `{}` with shape {}",
                        WeightEntry::shape_str(shape),
                        e.name,
                        WeightEntry::shape_str(&e.shape)
                    ));
                }
                (Some((name, shape, _)), None) => {
                    return Some(format!(
                        "entry {i}: model expects `{name}` with shape {}, container has no more entries",
                        WeightEntry::shape_str(shape)
                    ));
                }
                (None, Some(e)) => {
                    return Some(format!("entry {i}: container has extra tensor `{}`", e.name));
                }
                _ => {}
            }
        }
        None
    }

    /// Copies every tensor into `model`. Nothing is written unless all names
    /// and shapes agree.
    pub fn load_into(&self, model: &mut Model) -> Result<()> {
        if let Some(m) = self.first_mismatch(model) {
            return Err(Error::Format(format!("weights do not fit the model: {m}")));
        }
        for ((_, dst), e) in model.named_state_mut().into_iter().zip(&self.entries) {
            dst.copy_from_slice(&self.values(e));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn export_weights(model: &Model) -> Vec<u8> {
    WeightContainer::from_model(model).to_bytes()
}

pub fn import_weights(model: &mut Model, bytes: &[u8]) -> Result<()> {
    WeightContainer::from_bytes(bytes)?.load_into(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_cmunext, VariantConfig};

    #[test]
    fn header_lists_every_tensor_once() {
        let m = build_cmunext(VariantConfig::cmunext_s(), 1).unwrap();
        let bytes = export_weights(&m);
        let c = WeightContainer::from_bytes(&bytes).unwrap();
        assert_eq!(c.entries.len(), m.named_state().len());
        assert_eq!(c.entries[0].name, "stem.conv.weight");
        assert_eq!(c.entries[0].shape, vec![8, 3, 3, 3]);
        assert_eq!(c.to_bytes(), bytes);
    }

    #[test]
    fn variant_mismatch_is_reported() {
        let s = build_cmunext(VariantConfig::cmunext_s(), 1).unwrap();
        let mut b = build_cmunext(VariantConfig::cmunext(), 1).unwrap();
        let err = import_weights(&mut b, &export_weights(&s)).unwrap_err().to_string();
        assert!(err.contains("entry 0") && err.contains("stem.conv.weight"), "{err}");
    }

    #[test]
    fn truncated_body_rejected() {
        let m = build_cmunext(VariantConfig::cmunext_s(), 1).unwrap();
        let bytes = export_weights(&m);
        assert!(WeightContainer::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    }
}
