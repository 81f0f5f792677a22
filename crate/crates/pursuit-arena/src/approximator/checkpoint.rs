//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic "PEVCKPT1" | version u32 | robot count u32
//!   per robot: id (u32 length + UTF-8)
//!     then 4 nets (policy, policy target, critic, critic target), each:
//!       layer count u32
//!       per layer: out u32 | in u32 | activation u8 | weights f64×(out·in)
//!                  row-major | bias f64×out
//!
//! Round-trips are bitwise: parameters are stored as raw f64 bits.

use super::{Activation, Layer, MlpParams};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PEVCKPT1";
const VERSION: u32 = 1;

/// All nets for one robot, in roster order inside the file.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub robot_id: String,
    pub policy: MlpParams,
    pub policy_target: MlpParams,
    pub critic: MlpParams,
    pub critic_target: MlpParams,
}

fn act_tag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Relu => 1,
        Activation::Linear => 2,
    }
}

fn act_from_tag(t: u8) -> Result<Activation> {
    match t {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Linear),
        other => Err(Error::CorruptCheckpoint(format!(
            "unknown activation tag {other}"
        ))),
    }
}

fn write_net(buf: &mut Vec<u8>, net: &MlpParams) {
    buf.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        buf.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
        buf.push(act_tag(layer.activation));
        for w in &layer.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::CorruptCheckpoint("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_net(r: &mut Reader) -> Result<MlpParams> {
    let layer_count = r.u32()? as usize;
    if layer_count > 1024 {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible layer count {layer_count}"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let out_dim = r.u32()? as usize;
        let in_dim = r.u32()? as usize;
        if out_dim == 0 || in_dim == 0 || out_dim * in_dim > 1 << 28 {
            return Err(Error::CorruptCheckpoint(format!(
                "implausible layer shape {out_dim}×{in_dim}"
            )));
        }
        let activation = act_from_tag(r.u8()?)?;
        let mut weights = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim * in_dim {
            weights.push(r.f64()?);
        }
        let mut bias = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            bias.push(r.f64()?);
        }
        layers.push(Layer {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        });
    }
    Ok(MlpParams { layers })
}

/// Serialize all agent nets to `path`.
pub fn save_checkpoint(entries: &[CheckpointEntry], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        buf.extend_from_slice(&(e.robot_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.robot_id.as_bytes());
        for net in [&e.policy, &e.policy_target, &e.critic, &e.critic_target] {
            write_net(&mut buf, net);
        }
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Read a checkpoint back; the file self-describes roster ids and shapes.
pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = r.u32()? as usize;
        if id_len > 4096 {
            return Err(Error::CorruptCheckpoint(format!(
                "implausible id length {id_len}"
            )));
        }
        let robot_id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("robot id is not UTF-8".into()))?;
        let policy = read_net(&mut r)?;
        let policy_target = read_net(&mut r)?;
        let critic = read_net(&mut r)?;
        let critic_target = read_net(&mut r)?;
        entries.push(CheckpointEntry {
            robot_id,
            policy,
            policy_target,
            critic,
            critic_target,
        });
    }
    if r.pos != data.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            data.len() - r.pos
        )));
    }
    Ok(entries)
}
