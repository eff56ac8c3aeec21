//! Versioned binary parameter snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "MELASNAP"
//! version   u32      1
//! kind      u32      0 = field model, 1 = material network
//! split     u32 u32  subdomains along x and y
//! topology  u32 x4   input_dim, output_dim, n_layers, units_per_layer
//!           u32      activation (0 swish, 1 sigmoid, 2 tanh, 3 identity)
//!           f64      beta
//! extras    u32 n, then n f64
//! params    u64 n, then n f64
//! ```

use std::path::Path;

use crate::netcore::{Activation, Topology};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MELASNAP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    FieldModel,
    MaterialNetwork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub split: (usize, usize),
    pub topology: Topology,
    /// Kind-specific reals, e.g. the cell length and material bounds.
    pub extras: Vec<f64>,
    pub params: Vec<f64>,
}

fn activation_code(a: Activation) -> u32 {
    match a {
        Activation::Swish => 0,
        Activation::Sigmoid => 1,
        Activation::Tanh => 2,
        Activation::Identity => 3,
    }
}

impl Snapshot {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        let expected = self.topology.param_count() * self.split.0 * self.split.1;
        if self.params.len() != expected {
            return Err(Error::ParamLength {
                expected,
                got: self.params.len(),
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let t = &self.topology;
        let mut out = Vec::with_capacity(64 + 8 * (self.params.len() + self.extras.len()));
        out.extend_from_slice(MAGIC);
        let u32s = [
            VERSION,
            match self.kind {
                SnapshotKind::FieldModel => 0,
                SnapshotKind::MaterialNetwork => 1,
            },
            self.split.0 as u32,
            self.split.1 as u32,
            t.input_dim as u32,
            t.output_dim as u32,
            t.n_layers as u32,
            t.units_per_layer as u32,
            activation_code(t.activation),
        ];
        for v in u32s {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&t.beta.to_le_bytes());
        out.extend_from_slice(&(self.extras.len() as u32).to_le_bytes());
        for v in &self.extras {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Snapshot("not a parameter snapshot".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported snapshot version {version}")));
        }
        let kind = match r.u32()? {
            0 => SnapshotKind::FieldModel,
            1 => SnapshotKind::MaterialNetwork,
            k => return Err(Error::Snapshot(format!("unknown snapshot kind {k}"))),
        };
        let split = (r.u32()? as usize, r.u32()? as usize);
        let input_dim = r.u32()? as usize;
        let output_dim = r.u32()? as usize;
        let n_layers = r.u32()? as usize;
        let units = r.u32()? as usize;
        let activation = match r.u32()? {
            0 => Activation::Swish,
            1 => Activation::Sigmoid,
            2 => Activation::Tanh,
            3 => Activation::Identity,
            a => return Err(Error::Snapshot(format!("unknown activation code {a}"))),
        };
        let beta = r.f64()?;
        let topology = Topology {
            input_dim,
            output_dim,
            n_layers,
            units_per_layer: units,
            activation,
            beta,
        };
        let n_extra = r.u32()? as usize;
        let extras = (0..n_extra).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let n = r.u64()? as usize;
        if n > bytes.len() / 8 {
            return Err(Error::Snapshot(format!("parameter count {n} exceeds file size")));
        }
        let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let s = Snapshot {
            kind,
            split,
            topology,
            extras,
            params,
        };
        s.validate().map_err(|e| Error::Snapshot(e.to_string()))?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Snapshot(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
