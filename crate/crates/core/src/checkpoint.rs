//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `ESCLCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then every tensor as
//! raw little-endian `f64` in header order. Values are stored bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{EsclError, Result};
use crate::evaluation::Vocabulary;
use crate::numerics::Tensor;
use crate::training::OptimizerState;

const MAGIC: &[u8; 8] = b"ESCLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub vocab: Vocabulary,
    pub optimizer: OptimizerState,
    /// Updates applied so far.
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: EncoderConfig,
    step: u64,
    vocabulary: Vec<String>,
    optimizer: String,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn bad(msg: impl Into<String>) -> EsclError {
    EsclError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.params.config();
        let mut tensors: Vec<(&str, Vec<usize>, &[f64])> = vec![
            (
                "token_embeddings",
                self.params.token_embeddings.shape().to_vec(),
                self.params.token_embeddings.data(),
            ),
            (
                "projection_weight",
                self.params.projection_weight.shape().to_vec(),
                self.params.projection_weight.data(),
            ),
            (
                "projection_bias",
                self.params.projection_bias.shape().to_vec(),
                self.params.projection_bias.data(),
            ),
        ];
        let (optimizer, adam_step) = match &self.optimizer {
            OptimizerState::Sgd => ("sgd", 0),
            OptimizerState::Adam {
                step,
                first_moment,
                second_moment,
            } => {
                tensors.push(("adam_first_moment", vec![first_moment.len()], first_moment));
                tensors.push((
                    "adam_second_moment",
                    vec![second_moment.len()],
                    second_moment,
                ));
                ("adam", *step)
            }
        };
        let header = Header {
            format_version: FORMAT_VERSION,
            config,
            step: self.step,
            vocabulary: self.vocab.entries().to_vec(),
            optimizer: optimizer.to_string(),
            adam_step,
            tensors: tensors
                .iter()
                .map(|(n, s, _)| TensorEntry {
                    name: n.to_string(),
                    shape: s.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not an escl checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| bad(format!("unreadable header: {e}")))?;
        let mut data = &body[header_len..];

        let mut take = |entry: &TensorEntry| -> Result<Vec<f64>> {
            let n: usize = entry.shape.iter().product();
            if data.len() < n * 8 {
                return Err(bad(format!("truncated tensor {}", entry.name)));
            }
            let (head, rest) = data.split_at(n * 8);
            data = rest;
            Ok(head
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let mut values = Vec::new();
        for entry in &header.tensors {
            values.push((entry.name.as_str(), entry.shape.clone(), take(entry)?));
        }
        if !data.is_empty() {
            return Err(bad(format!("{} trailing bytes", data.len())));
        }

        let find = |name: &str| -> Result<Tensor> {
            let (_, shape, v) = values
                .iter()
                .find(|(n, _, _)| *n == name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            Tensor::from_vec(shape, v.clone())
        };
        let config = header.config;
        let params = EncoderParams::from_tensors(
            config,
            find("token_embeddings")?,
            find("projection_weight")?,
            find("projection_bias")?,
        )?;
        let vocab = Vocabulary::from_tokens(header.vocabulary)?;
        if vocab.len() != config.vocab_size {
            return Err(EsclError::Dimension(format!(
                "checkpoint vocabulary has {} entries but the embedding table has {} rows",
                vocab.len(),
                config.vocab_size
            )));
        }
        let optimizer = match header.optimizer.as_str() {
            "sgd" => OptimizerState::Sgd,
            "adam" => {
                let m = find("adam_first_moment")?.into_data();
                let v = find("adam_second_moment")?.into_data();
                if m.len() != config.num_params() || v.len() != config.num_params() {
                    return Err(EsclError::Dimension(
                        "adam state does not match the model".into(),
                    ));
                }
                OptimizerState::Adam {
                    step: header.adam_step,
                    first_moment: m,
                    second_moment: v,
                }
            }
            other => return Err(bad(format!("unknown optimizer '{other}'"))),
        };
        Ok(Checkpoint {
            params,
            vocab,
            optimizer,
            step: header.step,
        })
    }

    /// Writes atomically (temp file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::training::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| EsclError::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            EsclError::Checkpoint(m) => EsclError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;
    use crate::numerics::RngStream;
    use crate::training::OptimizerKind;

    fn sample() -> Checkpoint {
        let vocab = Vocabulary::from_tokens(["alpha", "beta", "gamma"]).unwrap();
        let config = EncoderConfig {
            vocab_size: vocab.len(),
            embed_dim: 4,
            output_dim: 3,
        };
        let params = init_params(config, &RngStream::new(5)).unwrap();
        let mut optimizer = OptimizerState::new(OptimizerKind::DEFAULT_ADAM, config.num_params());
        if let OptimizerState::Adam {
            step,
            first_moment,
            second_moment,
        } = &mut optimizer
        {
            *step = 7;
            first_moment
                .iter_mut()
                .enumerate()
                .for_each(|(i, m)| *m = (i as f64).sin() / 3.0);
            second_moment
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = 1e-7 * i as f64);
        }
        Checkpoint {
            params,
            vocab,
            optimizer,
            step: 42,
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
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Checkpoint::from_bytes(b"not a checkpoint at all").is_err());
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
    }

    #[test]
    fn vocabulary_must_match_embedding_rows() {
        let mut c = sample();
        c.vocab = Vocabulary::from_tokens(["alpha"]).unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&c.to_bytes()),
            Err(EsclError::Dimension(_))
        ));
    }
}
