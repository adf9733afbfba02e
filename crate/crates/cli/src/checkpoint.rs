//! `GBCQ` checkpoint: summary map, per-coordinate quantile networks and their
//! standardization statistics, plus provenance. All numbers little-endian;
//! reals are stored as raw IEEE-754 bits so a round trip is exact.

use std::path::Path;

use gbc_core::numerics::{Activation, DenseLayer, FeedForwardNet};
use gbc_core::quantile::{AutoregressiveQuantileModel, CosineEmbedding, ImplicitQuantileNet};
use gbc_core::stats::Standardizer;
use gbc_core::summaries::{SummaryKind, SummaryMap, YTransform};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GBCQ";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (magic bytes {0:?})")]
    BadMagic([u8; 4]),
    #[error("checkpoint format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub table_seed: u64,
    /// SHA-256 of the canonical run configuration.
    pub config_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub provenance: Provenance,
    pub summary: SummaryMap,
    /// One network per θ coordinate in sampling order; empty for a
    /// summary-only checkpoint.
    pub components: Vec<ImplicitQuantileNet>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn reals(&mut self, xs: &[f64]) {
        for x in xs {
            self.0.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    }

    fn net(&mut self, net: &FeedForwardNet) {
        self.u32(net.layers().len());
        for l in net.layers() {
            self.u32(l.in_dim());
            self.u32(l.out_dim());
            self.u8(l.activation().code());
            self.reals(l.weights());
            self.reals(l.bias());
        }
    }

    fn standardizer(&mut self, s: &Standardizer) {
        self.u32(s.dim());
        self.reals(&s.mean);
        self.reals(&s.scale);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

/// Upper bound on any single length field, to reject garbage before allocating.
const MAX_LEN: usize = 1 << 28;

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let v = u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")) as usize;
        if v > MAX_LEN {
            return Err(CheckpointError::Corrupt(format!("length field {v} at byte {}", self.pos - 4)));
        }
        Ok(v)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.bytes(n.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }

    fn net(&mut self) -> Result<FeedForwardNet, CheckpointError> {
        let n = self.u32()?;
        let mut layers = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let (i, o) = (self.u32()?, self.u32()?);
            let code = self.u8()?;
            let act = Activation::from_code(code)
                .ok_or_else(|| CheckpointError::Corrupt(format!("unknown activation code {code}")))?;
            let w = self.reals(i * o)?;
            let b = self.reals(o)?;
            layers.push(DenseLayer::from_parts(i, o, w, b, act).map_err(|e| CheckpointError::Corrupt(e.to_string()))?);
        }
        FeedForwardNet::from_layers(layers).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }

    fn standardizer(&mut self) -> Result<Standardizer, CheckpointError> {
        let d = self.u32()?;
        Ok(Standardizer {
            mean: self.reals(d)?,
            scale: self.reals(d)?,
        })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION as usize);
        w.u64(self.provenance.table_seed);
        w.0.extend_from_slice(&self.provenance.config_hash);
        w.u8(self.summary.transform.code());
        match &self.summary.kind {
            SummaryKind::Linear { b, intercept } => {
                w.u8(0);
                w.u32(b.rows());
                w.u32(b.cols());
                w.reals(b.data());
                w.reals(intercept);
            }
            SummaryKind::Network { net, input, output } => {
                w.u8(1);
                w.net(net);
                w.standardizer(input);
                w.standardizer(output);
            }
        }
        w.u32(self.components.len());
        for c in &self.components {
            w.net(&c.feature);
            w.net(c.embedding.net());
            w.net(&c.head);
            w.standardizer(&c.input);
            w.standardizer(&c.target);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        let magic: [u8; 4] = r.bytes(4)?.try_into().expect("4 bytes");
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32()? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let table_seed = r.u64()?;
        let config_hash: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
        let tcode = r.u8()?;
        let transform =
            YTransform::from_code(tcode).ok_or_else(|| CheckpointError::Corrupt(format!("unknown transform {tcode}")))?;
        let corrupt = |e: &dyn std::fmt::Display| CheckpointError::Corrupt(e.to_string());
        let summary = match r.u8()? {
            0 => {
                let (rows, cols) = (r.u32()?, r.u32()?);
                let data = r.reals(rows * cols)?;
                let b = gbc_core::numerics::DenseMatrix::from_vec(rows, cols, data).map_err(|e| corrupt(&e))?;
                let intercept = r.reals(rows)?;
                SummaryMap::linear(b, intercept).map_err(|e| corrupt(&e))?
            }
            1 => SummaryMap {
                transform: YTransform::Identity,
                kind: SummaryKind::Network {
                    net: r.net()?,
                    input: r.standardizer()?,
                    output: r.standardizer()?,
                },
            },
            t => return Err(CheckpointError::Corrupt(format!("unknown summary kind {t}"))),
        }
        .with_transform(transform);
        let n = r.u32()?;
        let mut components = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let feature = r.net()?;
            let embedding = CosineEmbedding::from_net(r.net()?).map_err(|e| corrupt(&e))?;
            let head = r.net()?;
            let net = ImplicitQuantileNet {
                feature,
                embedding,
                head,
                input: r.standardizer()?,
                target: r.standardizer()?,
            };
            net.validate().map_err(|e| corrupt(&e))?;
            components.push(net);
        }
        if r.pos != buf.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint {
            provenance: Provenance {
                table_seed,
                config_hash,
            },
            summary,
            components,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn model(&self) -> Result<AutoregressiveQuantileModel, gbc_core::quantile::QuantileError> {
        AutoregressiveQuantileModel::new(self.summary.clone(), self.components.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gbc_core::numerics::{DenseMatrix, RngStream};
    use gbc_core::quantile::IqnSpec;

    fn sample_checkpoint(network_summary: bool) -> Checkpoint {
        let mut rng = RngStream::new(3, 0);
        let spec = IqnSpec {
            feature_hidden: vec![5],
            embed_dim: 4,
            n_cos: 3,
            head_hidden: vec![6],
        };
        let summary = if network_summary {
            SummaryMap {
                transform: YTransform::Log1p,
                kind: SummaryKind::Network {
                    net: FeedForwardNet::mlp(3, &[4], 2, Activation::Identity, &mut rng).unwrap(),
                    input: Standardizer {
                        mean: vec![0.1, -0.2, 1.0 / 3.0],
                        scale: vec![1.5, 2.0, 1e-300],
                    },
                    output: Standardizer::identity(2),
                },
            }
        } else {
            SummaryMap::linear(DenseMatrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -1.0, f64::MIN_POSITIVE, 7.0]).unwrap(), vec![0.5, -0.25])
                .unwrap()
        };
        let mut a = ImplicitQuantileNet::new(2, &spec, &mut rng).unwrap();
        a.input = Standardizer {
            mean: vec![std::f64::consts::PI, -0.0],
            scale: vec![0.1, 3.0],
        };
        let b = ImplicitQuantileNet::new(3, &spec, &mut rng).unwrap();
        Checkpoint {
            provenance: Provenance {
                table_seed: u64::MAX - 7,
                config_hash: [0xAB; 32],
            },
            summary,
            components: vec![a, b],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for net_summary in [false, true] {
            let c = sample_checkpoint(net_summary);
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.gbcq");
        let c = sample_checkpoint(false);
        c.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), c);
    }

    #[test]
    fn structured_errors() {
        let mut bytes = sample_checkpoint(false).to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version { found: 2, supported: 1 })
        ));
        assert!(matches!(Checkpoint::from_bytes(b"GBCTxxxx"), Err(CheckpointError::BadMagic(_))));
        let good = sample_checkpoint(false).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&good[..good.len() - 3]), Err(CheckpointError::Truncated(_))));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn model_matches_components() {
        let c = sample_checkpoint(false);
        let m = c.model().unwrap();
        assert_eq!(m.theta_dim(), 2);
        let summary_only = Checkpoint {
            components: Vec::new(),
            ..c
        };
        assert!(summary_only.model().is_err());
    }
}
