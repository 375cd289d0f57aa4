use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{AstConfig, ClassifyError};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ASTW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Named tensors in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AstWeights {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl AstWeights {
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Self { entries, index }
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn zeros(cfg: &AstConfig) -> Self {
        Self::from_entries(
            cfg.tensor_shapes()
                .into_iter()
                .map(|(n, s)| (n, Tensor::zeros(s)))
                .collect(),
        )
    }

    /// Small random weights: N(0, 0.02²) everywhere, with Layer Norm gains
    /// drawn around one.
    pub fn random(cfg: &AstConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = Normal::new(0.0, 0.02).expect("valid deviation");
        let gain = Normal::new(1.0, 0.1).expect("valid deviation");
        Self::from_entries(
            cfg.tensor_shapes()
                .into_iter()
                .map(|(name, shape)| {
                    let n: usize = shape.iter().product();
                    let dist = if name.contains("norm") && name.ends_with("weight") {
                        gain
                    } else {
                        small
                    };
                    let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
                    (name, Tensor { shape, data })
                })
                .collect(),
        )
    }

    /// Checks names, shapes and finiteness against the configuration.
    pub fn validate(&self, cfg: &AstConfig) -> Result<(), ClassifyError> {
        let expected = cfg.tensor_shapes();
        for (name, shape) in &expected {
            let t = self
                .get(name)
                .ok_or_else(|| ClassifyError::MissingTensor(name.clone()))?;
            if &t.shape != shape {
                return Err(ClassifyError::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape.clone(),
                });
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(ClassifyError::Format(format!("{name}: data length")));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(ClassifyError::NonFinite(name.clone()));
            }
        }
        if self.entries.len() != expected.len() {
            let known: HashMap<_, _> = expected.iter().cloned().collect();
            if let Some((n, _)) = self.entries.iter().find(|(n, _)| !known.contains_key(n)) {
                return Err(ClassifyError::UnexpectedTensor(n.clone()));
            }
        }
        Ok(())
    }

    /// Header of `(name, shape)` entries, then every tensor as little-endian
    /// `f32` in the same order.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), ClassifyError> {
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for d in &t.shape {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
        }
        for (_, t) in &self.entries {
            for v in &t.data {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ClassifyError> {
        fn u32_of(r: &mut impl Read) -> Result<u32, ClassifyError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| ClassifyError::Format("truncated header".into()))?;
            Ok(u32::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| ClassifyError::Format("file too short".into()))?;
        if &magic != WEIGHTS_MAGIC {
            return Err(ClassifyError::Format("bad magic".into()));
        }
        let version = u32_of(&mut r)?;
        if version != WEIGHTS_VERSION {
            return Err(ClassifyError::Format(format!("unsupported version {version}")));
        }
        let count = u32_of(&mut r)? as usize;
        let mut header = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = u32_of(&mut r)? as usize;
            if len > 1 << 16 {
                return Err(ClassifyError::Format("tensor name too long".into()));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)
                .map_err(|_| ClassifyError::Format("truncated name".into()))?;
            let name = String::from_utf8(name)
                .map_err(|_| ClassifyError::Format("tensor name is not UTF-8".into()))?;
            let ndim = u32_of(&mut r)? as usize;
            if ndim > 8 {
                return Err(ClassifyError::Format(format!("{name}: {ndim} dimensions")));
            }
            let shape = (0..ndim)
                .map(|_| u32_of(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            header.push((name, shape));
        }
        let mut entries = Vec::with_capacity(header.len());
        for (name, shape) in header {
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)
                .map_err(|_| ClassifyError::Format(format!("{name}: truncated data")))?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            entries.push((name, Tensor { shape, data }));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
