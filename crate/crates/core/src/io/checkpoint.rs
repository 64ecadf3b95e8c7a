//! Versioned named-tensor bundles.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use recomp_tensor::Tensor;

use super::{read_file, write_atomic, Dec, Enc};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RCMP";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    VqVae,
    Prior,
}

impl ModelKind {
    fn tag(self) -> u32 {
        match self {
            ModelKind::VqVae => 1,
            ModelKind::Prior => 2,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::VqVae),
            2 => Some(ModelKind::Prior),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::VqVae => "vqvae",
            ModelKind::Prior => "prior",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    F32(Tensor<f32>),
    U32 { shape: Vec<usize>, data: Vec<u32> },
}

impl Entry {
    fn dtype(&self) -> u8 {
        match self {
            Entry::F32(_) => 1,
            Entry::U32 { .. } => 2,
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            Entry::F32(t) => t.shape(),
            Entry::U32 { shape, .. } => shape,
        }
    }
}

/// Model kind, a TOML config echo and named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: String,
    pub entries: BTreeMap<String, Entry>,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, config: String) -> Self {
        Self {
            kind,
            config,
            entries: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.entries.insert(name.into(), Entry::F32(t));
    }

    pub fn put_u32(&mut self, name: impl Into<String>, v: u32) {
        self.entries.insert(
            name.into(),
            Entry::U32 {
                shape: vec![1],
                data: vec![v],
            },
        );
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        match self.entries.get(name) {
            Some(Entry::F32(t)) => Ok(t),
            Some(_) => Err(Error::invalid(format!("checkpoint entry {name} is not a float tensor"))),
            None => Err(Error::invalid(format!("checkpoint has no entry {name}"))),
        }
    }

    pub fn scalar_u32(&self, name: &str) -> Result<u32> {
        match self.entries.get(name) {
            Some(Entry::U32 { data, .. }) if data.len() == 1 => Ok(data[0]),
            _ => Err(Error::invalid(format!("checkpoint has no integer entry {name}"))),
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Entry)> + 'a {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest, v)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc::new(MAGIC, VERSION);
        e.u32(self.kind.tag());
        e.str(&self.config);
        e.len32(self.entries.len());
        for (name, entry) in &self.entries {
            e.str(name);
            e.u8(entry.dtype());
            e.len32(entry.shape().len());
            for &d in entry.shape() {
                e.len32(d);
            }
            match entry {
                Entry::F32(t) => t.data().iter().for_each(|&v| e.f32(v)),
                Entry::U32 { data, .. } => data.iter().for_each(|&v| e.u32(v)),
            }
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Dec::open(bytes, MAGIC, VERSION)?;
        let tag = d.u32()?;
        let kind = ModelKind::from_tag(tag).ok_or_else(|| d.corrupt(format!("unknown model kind tag {tag}")))?;
        let config = d.str()?;
        let count = d.len()?;
        let mut entries = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..count {
            let name = d.str()?;
            if last.as_ref().is_some_and(|l| *l >= name) {
                return Err(d.corrupt(format!("entry {name} is out of order or duplicated")));
            }
            let dtype = d.u8()?;
            let rank = d.len()?;
            let shape = (0..rank).map(|_| d.len()).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if rank == 0 || n == 0 || n > bytes.len() {
                return Err(d.corrupt(format!("entry {name} has an invalid shape {shape:?}")));
            }
            let entry = match dtype {
                1 => {
                    let data = (0..n).map(|_| d.f32()).collect::<Result<Vec<_>>>()?;
                    Entry::F32(Tensor::new(shape, data)?)
                }
                2 => Entry::U32 {
                    data: (0..n).map(|_| d.u32()).collect::<Result<Vec<_>>>()?,
                    shape,
                },
                other => return Err(d.corrupt(format!("unknown dtype {other}"))),
            };
            last = Some(name.clone());
            entries.insert(name, entry);
        }
        d.end()?;
        Ok(Self { kind, config, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// Load and require a model kind.
    pub fn load_kind(path: &Path, kind: ModelKind) -> Result<Self> {
        let c = Self::load(path)?;
        c.expect_kind(kind)?;
        Ok(c)
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ModelKind {
                found: self.kind.to_string(),
                expected: kind.to_string(),
            });
        }
        Ok(())
    }
}
