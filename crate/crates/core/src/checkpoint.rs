//! Binary checkpoints.
//!
//! ```text
//! "MCSFQF01"
//! u32 tensor count
//! per tensor: u32 name length, UTF-8 name, u32 rank, rank × u32 dims
//! per tensor, in directory order: f32 values, row-major
//! u32 metadata count
//! per entry: u32 key length, key, u32 value length, value
//! ```
//!
//! All integers and floats are little-endian. Tensor sizes are known from
//! the directory alone, so the data section can be located without reading
//! it. Parameters live on the `f32` grid, which makes the round trip exact.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::harness::{Agent, Trainer};
use crate::network::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MCSFQF01";
const MAGIC_PREFIX: &[u8; 6] = b"MCSFQF";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub metadata: Vec<(String, String)>,
}

/// What the directory says about a checkpoint file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderSummary {
    pub tensors: usize,
    /// Bytes up to the start of the data section.
    pub header_bytes: usize,
    pub data_bytes: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &'static str) -> std::result::Result<String, CheckpointError> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| CheckpointError::Utf8(what))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn check_magic(r: &mut Reader<'_>) -> std::result::Result<(), CheckpointError> {
    let magic = r
        .bytes
        .get(..MAGIC.len())
        .ok_or_else(|| CheckpointError::BadMagic(r.bytes.to_vec()))?;
    if magic != MAGIC {
        if magic.starts_with(MAGIC_PREFIX) {
            return Err(CheckpointError::VersionMismatch {
                found: String::from_utf8_lossy(&magic[MAGIC_PREFIX.len()..]).into_owned(),
                expected: "01".into(),
            });
        }
        return Err(CheckpointError::BadMagic(magic.to_vec()));
    }
    r.pos = MAGIC.len();
    Ok(())
}

/// Reads the directory: `(name, dims)` per tensor.
fn read_directory(r: &mut Reader<'_>) -> std::result::Result<Vec<(String, Vec<usize>)>, CheckpointError> {
    check_magic(r)?;
    let count = r.u32("tensor count")? as usize;
    let mut dir = Vec::new();
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let rank = r.u32("tensor rank")? as usize;
        let raw: Vec<u32> = (0..rank)
            .map(|_| r.u32("tensor dims"))
            .collect::<std::result::Result<_, _>>()?;
        let len = raw
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(4));
        if len.is_none() {
            return Err(CheckpointError::DimOverflow { name, dims: raw });
        }
        dir.push((name, raw.into_iter().map(|d| d as usize).collect()));
    }
    Ok(dir)
}

/// Summarises a checkpoint from its directory without touching the data.
pub fn read_header(bytes: &[u8]) -> std::result::Result<HeaderSummary, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let dir = read_directory(&mut r)?;
    let mut data = 0usize;
    for (name, dims) in &dir {
        let n = dims.iter().product::<usize>() * 4;
        data = data.checked_add(n).ok_or_else(|| CheckpointError::DimOverflow {
            name: name.clone(),
            dims: dims.iter().map(|&d| d as u32).collect(),
        })?;
    }
    Ok(HeaderSummary {
        tensors: dir.len(),
        header_bytes: r.pos,
        data_bytes: data,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.dims().len());
            for &d in t.dims() {
                put_u32(&mut out, d);
            }
        }
        for (_, t) in &self.tensors {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        put_u32(&mut out, self.metadata.len());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let dir = read_directory(&mut r)?;
        let mut tensors = Vec::with_capacity(dir.len());
        for (name, dims) in dir {
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor::from_vec(&dims, data).map_err(|_| CheckpointError::Truncated("tensor data"))?;
            tensors.push((name, t));
        }
        let count = r.u32("metadata count")? as usize;
        let mut metadata = Vec::new();
        for _ in 0..count {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            metadata.push((k, v));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self { tensors, metadata })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under the final name.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn tensor(&self, name: &str) -> std::result::Result<&Tensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::MissingTensor(name.into()))
    }

    pub fn meta(&self, key: &str) -> std::result::Result<&str, CheckpointError> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CheckpointError::MissingMetadata(key.into()))
    }

    fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse().map_err(|_| {
            Error::InvalidParam(format!("checkpoint metadata `{key}` has unparsable value `{v}`"))
        })
    }

    /// Online and target weights, optimiser moments and the run metadata.
    pub fn capture(config: &RunConfig, agent: &Agent, progress: Option<&Trainer>) -> Self {
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        for (n, t) in agent.params.tensors() {
            tensors.push((format!("online.{n}"), t.clone()));
        }
        for (n, t) in agent.target.tensors() {
            tensors.push((format!("target.{n}"), t.clone()));
        }
        for (n, t) in agent.optimizer.tensors() {
            tensors.push((n, t.clone()));
        }
        let mut metadata = vec![
            ("config".to_string(), config.to_text()),
            ("seed".into(), agent.seed.to_string()),
            ("updates".into(), agent.updates.to_string()),
            ("adam_steps".into(), agent.optimizer.adam_steps.to_string()),
            ("rmsprop_steps".into(), agent.optimizer.rmsprop_steps.to_string()),
        ];
        if let Some(t) = progress {
            metadata.push(("step".into(), t.step.to_string()));
            metadata.push(("episode".into(), t.episode.to_string()));
            metadata.push(("rng.trainer".into(), rng_to_string(&t.rng)));
            metadata.push(("rng.env".into(), rng_to_string(t.env.rng())));
        }
        Self { tensors, metadata }
    }

    pub fn config(&self) -> Result<RunConfig> {
        Ok(RunConfig::parse_str(self.meta("config")?)?)
    }

    /// Rebuilds the agent stored by [`Checkpoint::capture`].
    pub fn restore_agent(&self) -> Result<(RunConfig, Agent)> {
        let config = self.config()?;
        let seed: u64 = self.meta_parse("seed")?;
        let mut agent = config.agent(seed)?;
        let load = |prefix: &str, template: &ParamSet| -> Result<ParamSet> {
            ParamSet::from_named(template, |n| self.tensor(&format!("{prefix}.{n}")).ok().cloned())
                .map_err(|name| self.shape_error(&format!("{prefix}.{name}"), template, &name))
        };
        agent.params = load("online", &agent.params)?;
        agent.target = load("target", &agent.target)?;
        for (name, slot) in agent.optimizer.tensors_mut() {
            let t = self.tensor(&name)?;
            if t.dims() != slot.dims() {
                return Err(CheckpointError::TensorShape {
                    name,
                    expected: slot.dims().to_vec(),
                    found: t.dims().to_vec(),
                }
                .into());
            }
            *slot = t.clone();
        }
        agent.updates = self.meta_parse("updates")?;
        agent.optimizer.adam_steps = self.meta_parse("adam_steps")?;
        agent.optimizer.rmsprop_steps = self.meta_parse("rmsprop_steps")?;
        Ok((config, agent))
    }

    fn shape_error(&self, full: &str, template: &ParamSet, name: &str) -> Error {
        let expected = template
            .tensors()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.dims().to_vec())
            .unwrap_or_default();
        match self.tensor(full) {
            Ok(t) => CheckpointError::TensorShape {
                name: full.into(),
                expected,
                found: t.dims().to_vec(),
            }
            .into(),
            Err(e) => e.into(),
        }
    }

    pub fn rng(&self, key: &str) -> Result<ChaCha8Rng> {
        let v = self.meta(key)?;
        rng_from_str(v)
            .ok_or_else(|| Error::InvalidParam(format!("checkpoint metadata `{key}` is not an RNG state")))
    }
}

/// `seed-hex:stream:word_pos`.
fn rng_to_string(rng: &ChaCha8Rng) -> String {
    format!(
        "{}:{}:{}",
        hex::encode(rng.get_seed()),
        rng.get_stream(),
        rng.get_word_pos()
    )
}

fn rng_from_str(s: &str) -> Option<ChaCha8Rng> {
    use rand::SeedableRng;
    let mut parts = s.split(':');
    let seed: [u8; 32] = hex::decode(parts.next()?).ok()?.try_into().ok()?;
    let stream: u64 = parts.next()?.parse().ok()?;
    let pos: u128 = parts.next()?.parse().ok()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Some(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample() -> Checkpoint {
        Checkpoint {
            tensors: vec![
                ("a".into(), Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 0.125, 3.0, 0.0, -0.0]).unwrap()),
                ("b.c".into(), Tensor::from_vec(&[1], vec![f32::MAX as f64]).unwrap()),
            ],
            metadata: vec![("step".into(), "7".into()), ("empty".into(), String::new())],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_gives_count_and_sizes() {
        let bytes = sample().to_bytes();
        let h = read_header(&bytes).unwrap();
        assert_eq!(h.tensors, 2);
        assert_eq!(h.data_bytes, 7 * 4);
        // magic, count, "a" entry (4+1+4+8), "b.c" entry (4+3+4+4)
        assert_eq!(h.header_bytes, 8 + 4 + 17 + 15);
        assert_eq!(&bytes[..8], b"MCSFQF01");
    }

    #[test]
    fn corrupted_magic_is_reported() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
        let mut bytes = sample().to_bytes();
        bytes[7] = b'2';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn every_truncation_is_detected() {
        let bytes = sample().to_bytes();
        for n in 0..bytes.len() {
            assert!(Checkpoint::from_bytes(&bytes[..n]).is_err(), "prefix {n} accepted");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::TrailingBytes(1))));
    }

    #[test]
    fn huge_dims_overflow() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(b'x');
        bytes.extend_from_slice(&4u32.to_le_bytes());
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::DimOverflow { .. })
        ));
    }

    #[test]
    fn rng_state_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: [u64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let mut back = rng_from_str(&rng_to_string(&rng)).unwrap();
        assert_eq!(rng.gen::<u64>(), back.gen::<u64>());
    }

    #[test]
    fn agent_restores_exactly() {
        let cfg = RunConfig::parse_str("N = 4\nM = 8\nn_mcn = 8\nhidden = 8\nencoder_hidden = 8\nT = 2\nbatch = 2\nwarmup = 4")
            .unwrap();
        let agent = cfg.agent(3).unwrap();
        let mut trainer = Trainer::new(agent, cfg.env_spec(), 20).unwrap();
        for _ in 0..8 {
            trainer.train_iteration().unwrap();
        }
        let ck = Checkpoint::capture(&cfg, &trainer.agent, Some(&trainer));
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let (cfg2, agent) = back.restore_agent().unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(agent.params, trainer.agent.params);
        assert_eq!(agent.target, trainer.agent.target);
        assert_eq!(agent.optimizer.m, trainer.agent.optimizer.m);
        assert_eq!(agent.updates, trainer.agent.updates);
        assert_eq!(back.meta("step").unwrap(), "8");
        let mut a = back.rng("rng.trainer").unwrap();
        assert_eq!(a.gen::<u64>(), trainer.rng.clone().gen::<u64>());
    }
}
