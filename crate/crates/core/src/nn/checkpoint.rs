//! Plain-text parameter checkpoints.
//!
//! Layout (UTF-8, `\n` line endings):
//!
//! ```text
//! acc-checkpoint 1
//! tensor <name> <dim>[ <dim>...]
//! <v0> <v1> ... <vn>
//! tensor <name> ...
//! ```
//!
//! Each `tensor` header is followed by exactly one line holding the
//! row-major values. Values use the shortest decimal form that parses back to
//! the same `f64`, so a save/load cycle is bit-exact. A dense net with prefix
//! `p` is stored as tensors `p.layer<l>.weight` (shape `out in`) and
//! `p.layer<l>.bias` (shape `out`).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::DenseNet;
use crate::error::{check_dim, Error, Result};

const MAGIC: &str = "acc-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn push_net(&mut self, prefix: &str, net: &DenseNet) {
        for l in 0..net.n_layers() {
            let w = net.weight(l);
            self.tensors.push(NamedTensor {
                name: format!("{prefix}.layer{l}.weight"),
                shape: vec![w.nrows(), w.ncols()],
                values: w.iter().copied().collect(),
            });
            self.tensors.push(NamedTensor {
                name: format!("{prefix}.layer{l}.bias"),
                shape: vec![w.nrows()],
                values: net.bias(l).to_vec(),
            });
        }
    }

    /// Copies the tensors stored under `prefix` into `net`, whose architecture
    /// must match the stored shapes.
    pub fn load_net(&self, prefix: &str, net: &mut DenseNet) -> Result<()> {
        for l in 0..net.n_layers() {
            let off = net.layer_offset(l);
            let (fan_in, fan_out) = (net.widths()[l], net.widths()[l + 1]);
            let w = self.require(&format!("{prefix}.layer{l}.weight"), &[fan_out, fan_in])?;
            let b = self.require(&format!("{prefix}.layer{l}.bias"), &[fan_out])?;
            let p = net.params_mut();
            p[off..off + fan_in * fan_out].copy_from_slice(&w.values);
            p[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].copy_from_slice(&b.values);
        }
        Ok(())
    }

    fn require(&self, name: &str, shape: &[usize]) -> Result<&NamedTensor> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no tensor `{name}`")))?;
        if t.shape != shape {
            return Err(Error::Parse(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "{MAGIC}").unwrap();
        for t in &self.tensors {
            if t.name.is_empty() || t.name.contains(char::is_whitespace) {
                return Err(Error::Argument(format!("bad tensor name `{}`", t.name)));
            }
            write!(buf, "tensor {}", t.name).unwrap();
            for d in &t.shape {
                write!(buf, " {d}").unwrap();
            }
            buf.push('\n');
            let mut first = true;
            for v in &t.values {
                if !first {
                    buf.push(' ');
                }
                first = false;
                write!(buf, "{v:?}").unwrap();
            }
            buf.push('\n');
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim_end) != Some(MAGIC) {
            return Err(Error::Parse("missing checkpoint header".into()));
        }
        let mut tensors = Vec::new();
        while let Some(header) = lines.next() {
            let header = header?;
            if header.trim().is_empty() {
                continue;
            }
            let mut parts = header.split_whitespace();
            if parts.next() != Some("tensor") {
                return Err(Error::Parse(format!("expected tensor header, got `{header}`")));
            }
            let name = parts
                .next()
                .ok_or_else(|| Error::Parse("tensor header without name".into()))?
                .to_string();
            let shape = parts
                .map(|d| d.parse::<usize>().map_err(|e| Error::Parse(format!("{name}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let body = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("tensor `{name}` has no values")))??;
            let values = body
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("{name}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            check_dim("checkpoint tensor", shape.iter().product(), values.len())?;
            tensors.push(NamedTensor {
                name,
                shape,
                values,
            });
        }
        Ok(Self { tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseNet::new(&[3, 7, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut ck = Checkpoint::default();
        ck.push_net("actor", &net);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut fresh = DenseNet::zeros(&[3, 7, 2], Activation::Relu, Activation::Identity).unwrap();
        back.load_net("actor", &mut fresh).unwrap();
        assert_eq!(fresh, net);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = DenseNet::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        let mut ck = Checkpoint::default();
        ck.push_net("q", &net);
        let mut other = DenseNet::zeros(&[4, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(ck.load_net("q", &mut other).is_err());
        assert!(Checkpoint::read_from("garbage\n".as_bytes()).is_err());
    }
}
