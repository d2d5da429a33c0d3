//! Weight container format.
//!
//! ```text
//! "BWGT"                      magic
//! u32                         entry count
//! per entry:
//!   u16 name length, name bytes (UTF-8)
//!   u8 rank, rank x u32 dims
//! f32 payload                 entries concatenated in manifest order
//! ```
//!
//! Little-endian throughout. Weights are stored with batch norm already
//! folded into each conv's weights and bias.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_f32s, write_f32s};

use super::model::Model;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"BWGT";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub dims: Vec<usize>,
}

impl ManifestEntry {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    pub manifest: Vec<ManifestEntry>,
    pub payload: Vec<f32>,
}

impl WeightContainer {
    pub fn from_model(model: &Model) -> Self {
        let mut manifest = Vec::new();
        let mut payload = Vec::with_capacity(model.param_count());
        model.for_each_param(|name, dims, values| {
            manifest.push(ManifestEntry {
                name: name.to_string(),
                dims: dims.to_vec(),
            });
            payload.extend_from_slice(values);
        });
        Self { manifest, payload }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = Vec::new();
        head.extend_from_slice(WEIGHTS_MAGIC);
        head.extend_from_slice(
            &u32::try_from(self.manifest.len())
                .map_err(|_| too_big("entry count"))?
                .to_le_bytes(),
        );
        for e in &self.manifest {
            let len = u16::try_from(e.name.len()).map_err(|_| too_big("tensor name"))?;
            head.extend_from_slice(&len.to_le_bytes());
            head.extend_from_slice(e.name.as_bytes());
            head.push(u8::try_from(e.dims.len()).map_err(|_| too_big("rank"))?);
            for &d in &e.dims {
                head.extend_from_slice(
                    &u32::try_from(d)
                        .map_err(|_| too_big("dimension"))?
                        .to_le_bytes(),
                );
            }
        }
        w.write_all(&head)?;
        write_f32s(&mut w, &self.payload)?;
        w.flush()?;
        Ok(())
    }

    /// Parses a container. The payload must hold exactly the number of
    /// floats the manifest declares.
    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format(format!("bad weights magic {magic:?}")));
        }
        let count = u32::from_le_bytes(read_array(&mut r, "entry count")?) as usize;
        let mut manifest = Vec::with_capacity(count.min(4096));
        let mut names = HashSet::new();
        for i in 0..count {
            let len = u16::from_le_bytes(read_array(&mut r, "name length")?) as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name, "name")?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format(format!("entry {i}: name is not UTF-8")))?;
            if !names.insert(name.clone()) {
                return Err(Error::Format(format!("duplicate tensor name `{name}`")));
            }
            let [rank] = read_array::<1>(&mut r, "rank")?;
            let dims = (0..rank)
                .map(|_| Ok(u32::from_le_bytes(read_array(&mut r, "dims")?) as usize))
                .collect::<Result<Vec<_>>>()?;
            manifest.push(ManifestEntry { name, dims });
        }
        let expected: usize = manifest.iter().map(ManifestEntry::numel).sum();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != expected * 4 {
            return Err(Error::WeightLength {
                expected,
                found: bytes.len() / 4,
            });
        }
        let payload = read_f32s(&mut &bytes[..], expected)?;
        Ok(Self { manifest, payload })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    WeightContainer::from_model(model).save(path)
}

/// Copies the container into `model`. Every check runs before the first
/// write, so on error the model is untouched.
pub fn load_weights(model: &mut Model, container: &WeightContainer) -> Result<()> {
    let schema = model.schema();
    if container.manifest.len() != schema.len() {
        return Err(Error::Format(format!(
            "container has {} tensors, model has {}",
            container.manifest.len(),
            schema.len()
        )));
    }
    for (index, ((name, dims), entry)) in schema.iter().zip(&container.manifest).enumerate() {
        if *name != entry.name {
            return Err(Error::WeightNameMismatch {
                index,
                expected: name.clone(),
                found: entry.name.clone(),
            });
        }
        if *dims != entry.dims {
            return Err(Error::WeightShapeMismatch {
                name: name.clone(),
                expected: dims.clone(),
                found: entry.dims.clone(),
            });
        }
    }
    let expected: usize = schema
        .iter()
        .map(|(_, d)| d.iter().product::<usize>())
        .sum();
    if container.payload.len() != expected {
        return Err(Error::WeightLength {
            expected,
            found: container.payload.len(),
        });
    }
    let mut at = 0;
    model.for_each_param_mut(|_, _, values| {
        values.copy_from_slice(&container.payload[at..at + values.len()]);
        at += values.len();
    });
    Ok(())
}

fn too_big(what: &str) -> Error {
    Error::Format(format!("{what} does not fit the container format"))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("weights file truncated while reading {what}")))
}

fn read_array<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}
